//! Success-rate statistics and the evaluation CSV.

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{Error, Result};
use crate::simulator::TaskKind;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub const ALL_CATEGORIES: &str = "all";
/// Train-category label of methods that do not learn.
pub const UNTRAINED: &str = "none";

/// Wilson score interval at 95% confidence; `(0, 1)` for no trials.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// One-sided p-value of the pooled two-proportion z-test for
/// `H1: p_a > p_b`.
pub fn one_sided_p(sa: usize, na: usize, sb: usize, nb: usize) -> f64 {
    let (na_f, nb_f) = (na as f64, nb as f64);
    let pooled = (sa + sb) as f64 / (na_f + nb_f);
    let se = (pooled * (1.0 - pooled) * (1.0 / na_f + 1.0 / nb_f)).sqrt();
    let diff = sa as f64 / na_f - sb as f64 / nb_f;
    if !(se > 0.0) {
        return if diff > 0.0 { 0.0 } else { 1.0 };
    }
    1.0 - normal_cdf(diff / se)
}

/// One cell of the evaluation report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRow {
    pub method: Method,
    pub task: TaskKind,
    pub train_category: String,
    pub test_category: String,
    pub successes: usize,
    pub episodes: usize,
}

impl EvalRow {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.successes, self.episodes)
    }

    /// Significantly better than `other`: disjoint Wilson intervals or a
    /// one-sided test at `p < 0.05`.
    pub fn beats(&self, other: &EvalRow) -> bool {
        self.interval().0 > other.interval().1
            || one_sided_p(self.successes, self.episodes, other.successes, other.episodes) < 0.05
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: Method,
    task: TaskKind,
    train_category: String,
    test_category: String,
    successes: usize,
    episodes: usize,
    rate: String,
    ci_low: String,
    ci_high: String,
}

pub fn eval_csv(rows: &[EvalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let (lo, hi) = r.interval();
        w.serialize(CsvRow {
            method: r.method,
            task: r.task,
            train_category: r.train_category.clone(),
            test_category: r.test_category.clone(),
            successes: r.successes,
            episodes: r.episodes,
            rate: format!("{:.6}", r.rate()),
            ci_low: format!("{lo:.6}"),
            ci_high: format!("{hi:.6}"),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<CsvRow>()
        .map(|r| {
            let r = r.map_err(|e| Error::Parse(e.to_string()))?;
            Ok(EvalRow {
                method: r.method,
                task: r.task,
                train_category: r.train_category,
                test_category: r.test_category,
                successes: r.successes,
                episodes: r.episodes,
            })
        })
        .collect()
}

/// Cells of one method and task keyed by `(train, test)` category.
pub fn find<'a>(rows: &'a [EvalRow], method: Method, task: TaskKind, train: &str, test: &str) -> Option<&'a EvalRow> {
    rows.iter()
        .find(|r| r.method == method && r.task == task && r.train_category == train && r.test_category == test)
}
