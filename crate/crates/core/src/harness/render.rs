//! Top-down SVG drawings of clouds with tool and environment keypoints.
//! World y points up; the drawing flips it so the page matches the table.

use std::fmt::Write as _;

use crate::geometry::v2::{self, P2};
use crate::geometry::PointCloud;
use crate::keypoints::ToolKeypoints;
use crate::simulator::EnvKeypoints;

/// Margin around the drawn content, meters.
pub const MARGIN: f64 = 0.02;
/// Drawn length of the unit effect and force directions, meters.
pub const ARROW_LENGTH: f64 = 0.05;
const PIXELS_PER_METER: f64 = 2000.0;
const PALETTE: [&str; 4] = ["#4a6fa5", "#c47f2c", "#5b8c5a", "#8a5a8c"];

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewBox {
    pub min: P2,
    pub max: P2,
}

impl ViewBox {
    pub fn around(points: impl IntoIterator<Item = P2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        });
        Some(Self { min, max })
    }

    pub fn padded(self, m: f64) -> Self {
        Self { min: [self.min[0] - m, self.min[1] - m], max: [self.max[0] + m, self.max[1] + m] }
    }

    pub fn union(self, o: Self) -> Self {
        Self {
            min: [self.min[0].min(o.min[0]), self.min[1].min(o.min[1])],
            max: [self.max[0].max(o.max[0]), self.max[1].max(o.max[1])],
        }
    }

    pub fn contains(&self, p: P2) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// What one drawing shows. Clouds are coloured in order.
#[derive(Debug, Clone, Default)]
pub struct Sketch<'a> {
    pub clouds: Vec<&'a PointCloud>,
    pub keypoints: Option<ToolKeypoints>,
    pub env: Option<EnvKeypoints>,
    pub title: Option<String>,
    /// Fixed view; the content bounds plus [`MARGIN`] when unset.
    pub view: Option<ViewBox>,
}

impl Sketch<'_> {
    /// Every world point that must be visible.
    fn extent(&self) -> Vec<P2> {
        let mut pts: Vec<P2> = self.clouds.iter().flat_map(|c| c.points.iter().map(|p| [p[0], p[1]])).collect();
        if let Some(k) = &self.keypoints {
            pts.extend([k.grasp, k.function, effect_tip(k)]);
        }
        if let Some(e) = &self.env {
            pts.extend([e.target, e.receiver, v2::add(e.target, v2::scale(e.direction(), ARROW_LENGTH))]);
        }
        pts
    }

    pub fn view_box(&self) -> ViewBox {
        self.view.unwrap_or_else(|| {
            ViewBox::around(self.extent())
                .unwrap_or(ViewBox { min: [0.0, 0.0], max: [0.0, 0.0] })
                .padded(MARGIN)
        })
    }
}

fn effect_tip(k: &ToolKeypoints) -> P2 {
    v2::add(k.function, v2::scale(v2::normalized(k.effect_dir()), ARROW_LENGTH))
}

/// Page coordinates in meters, y flipped.
fn page(p: P2) -> (f64, f64) {
    (p[0], -p[1])
}

fn arrow(out: &mut String, from: P2, to: P2, colour: &str) {
    let (x1, y1) = page(from);
    let (x2, y2) = page(to);
    let _ = writeln!(
        out,
        r#"<line x1="{x1:.5}" y1="{y1:.5}" x2="{x2:.5}" y2="{y2:.5}" stroke="{colour}" stroke-width="0.002" marker-end="url(#head)"/>"#
    );
}

fn body(s: &Sketch, out: &mut String) {
    let r = 0.0015;
    for (i, c) in s.clouds.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<g fill="{colour}" fill-opacity="0.6">"#);
        for p in &c.points {
            let (x, y) = page([p[0], p[1]]);
            let _ = writeln!(out, r#"<circle cx="{x:.5}" cy="{y:.5}" r="{r}"/>"#);
        }
        out.push_str("</g>\n");
    }
    if let Some(e) = &s.env {
        let (x, y) = page(e.target);
        let d = 0.006;
        let _ = writeln!(
            out,
            r#"<path class="target" d="M{:.5} {:.5}L{:.5} {:.5}M{:.5} {:.5}L{:.5} {:.5}" stroke="black" stroke-width="0.002"/>"#,
            x - d, y - d, x + d, y + d, x - d, y + d, x + d, y - d
        );
        arrow(out, e.target, v2::add(e.target, v2::scale(e.direction(), ARROW_LENGTH)), "black");
    }
    if let Some(k) = &s.keypoints {
        let (gx, gy) = page(k.grasp);
        let _ = writeln!(out, r##"<circle class="grasp" cx="{gx:.5}" cy="{gy:.5}" r="0.006" fill="#d62728"/>"##);
        let (fx, fy) = page(k.function);
        let h = 0.005;
        let _ = writeln!(
            out,
            r##"<rect class="function" x="{:.5}" y="{:.5}" width="{}" height="{}" fill="#2ca02c"/>"##,
            fx - h, fy - h, 2.0 * h, 2.0 * h
        );
        let tip = effect_tip(k);
        arrow(out, k.function, tip, "#9467bd");
        let (ex, ey) = page(tip);
        let _ = writeln!(
            out,
            r##"<polygon class="effect" points="{:.5},{:.5} {:.5},{:.5} {:.5},{:.5}" fill="#9467bd"/>"##,
            ex, ey - h, ex - h, ey + h, ex + h, ey + h
        );
    }
    if let Some(t) = &s.title {
        let vb = s.view_box();
        let (x, y) = page([vb.min[0], vb.max[1]]);
        let size = 0.04 * vb.width().max(vb.height());
        let _ = writeln!(
            out,
            r#"<text x="{:.5}" y="{:.5}" font-size="{size:.5}">{}</text>"#,
            x + 0.25 * size,
            y + 1.2 * size,
            escape(t)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const DEFS: &str = r#"<defs><marker id="head" viewBox="0 0 10 10" refX="8" refY="5" markerWidth="4" markerHeight="4" orient="auto"><path d="M0 0L10 5L0 10z"/></marker></defs>"#;

fn header(out: &mut String, vb: &ViewBox, scale: f64) {
    let (x, y) = page([vb.min[0], vb.max[1]]);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x:.5} {y:.5} {:.5} {:.5}" width="{:.0}" height="{:.0}">"#,
        vb.width(),
        vb.height(),
        vb.width() * scale,
        vb.height() * scale
    );
}

/// Standalone SVG document for one sketch.
pub fn render_svg(s: &Sketch) -> String {
    let vb = s.view_box();
    let mut out = String::new();
    header(&mut out, &vb, PIXELS_PER_METER);
    out.push_str(DEFS);
    out.push('\n');
    body(s, &mut out);
    out.push_str("</svg>\n");
    out
}

/// Sketches laid out row-major in `columns` equal cells.
pub fn render_grid(sketches: &[Sketch], columns: usize) -> String {
    let columns = columns.max(1);
    let cell = sketches
        .iter()
        .map(|s| s.view_box())
        .fold((0.0f64, 0.0f64), |(w, h), v| (w.max(v.width()), h.max(v.height())));
    let rows = sketches.len().div_ceil(columns);
    let mut out = String::new();
    let (w, h) = (cell.0 * columns as f64, cell.1 * rows as f64);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.5} {h:.5}" width="{:.0}" height="{:.0}">"#,
        w * PIXELS_PER_METER,
        h * PIXELS_PER_METER
    );
    out.push_str(DEFS);
    out.push('\n');
    for (i, s) in sketches.iter().enumerate() {
        let vb = s.view_box();
        let (x0, y0) = ((i % columns) as f64 * cell.0, (i / columns) as f64 * cell.1);
        let (vx, vy) = page([vb.min[0], vb.max[1]]);
        let _ = writeln!(
            out,
            r#"<svg x="{x0:.5}" y="{y0:.5}" width="{:.5}" height="{:.5}" viewBox="{vx:.5} {vy:.5} {:.5} {:.5}">"#,
            cell.0,
            cell.1,
            vb.width(),
            vb.height()
        );
        body(s, &mut out);
        out.push_str("</svg>\n");
    }
    out.push_str("</svg>\n");
    out
}
