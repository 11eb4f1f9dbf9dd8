//! Procedural tools built as unions of convex parts (boxes, capsules, disks)
//! and their top-down surface point clouds.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::{PlanarPose, PointCloud};
use crate::rng;

pub const MIN_PART_SIZE: f64 = 0.005;
pub const MAX_PART_SIZE: f64 = 0.30;
pub const MIN_TOOL_RADIUS: f64 = 0.08;
pub const MAX_TOOL_RADIUS: f64 = 0.25;
/// Required footprint overlap between a new part and the prior union.
pub const MIN_OVERLAP_AREA: f64 = 1e-6;
pub const DEFAULT_NOISE_SD: f64 = 0.001;
const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Hammer,
    NonHammer,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Hammer, Category::NonHammer];

    pub fn name(self) -> &'static str {
        match self {
            Category::Hammer => "hammer",
            Category::NonHammer => "non-hammer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hammer" => Ok(Category::Hammer),
            "non-hammer" | "nonhammer" => Ok(Category::NonHammer),
            _ => Err(Error::Parse(format!("unknown category {s:?}"))),
        }
    }
}

/// Footprint of a part in its local frame; the long axis is local x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Box { length: f64, width: f64 },
    /// `length` is the total extent including both caps.
    Capsule { length: f64, radius: f64 },
    Disk { radius: f64 },
}

impl Shape {
    pub fn long_axis(&self) -> f64 {
        match *self {
            Shape::Box { length, .. } | Shape::Capsule { length, .. } => length,
            Shape::Disk { radius } => 2.0 * radius,
        }
    }

    /// Extent perpendicular to the long axis.
    pub fn thickness(&self) -> f64 {
        match *self {
            Shape::Box { width, .. } => width,
            Shape::Capsule { radius, .. } | Shape::Disk { radius } => 2.0 * radius,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Box { length, width } => length * width,
            Shape::Capsule { length, radius } => {
                (length - 2.0 * radius) * 2.0 * radius + std::f64::consts::PI * radius * radius
            }
            Shape::Disk { radius } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn contains_local(&self, p: P2) -> bool {
        match *self {
            Shape::Box { length, width } => p[0].abs() <= 0.5 * length && p[1].abs() <= 0.5 * width,
            Shape::Capsule { length, radius } => {
                let h = (0.5 * length - radius).max(0.0);
                let x = p[0].clamp(-h, h);
                v2::dist2(p, [x, 0.0]) <= radius * radius
            }
            Shape::Disk { radius } => v2::dot(p, p) <= radius * radius,
        }
    }

    /// Farthest distance of the footprint from the local origin.
    pub fn reach(&self) -> f64 {
        match *self {
            Shape::Box { length, width } => (0.5 * length).hypot(0.5 * width),
            Shape::Capsule { length, .. } => 0.5 * length,
            Shape::Disk { radius } => radius,
        }
    }

    fn sizes(&self) -> Vec<f64> {
        match *self {
            Shape::Box { length, width } => vec![length, width],
            Shape::Capsule { length, radius } => vec![length, 2.0 * radius],
            Shape::Disk { radius } => vec![2.0 * radius],
        }
    }

    fn sample_local(&self, r: &mut rng::Rng) -> P2 {
        match *self {
            Shape::Box { length, width } => [
                r.gen_range(-0.5..=0.5) * length,
                r.gen_range(-0.5..=0.5) * width,
            ],
            Shape::Capsule { length, radius } => loop {
                let p = [
                    r.gen_range(-0.5..=0.5) * length,
                    r.gen_range(-1.0..=1.0) * radius,
                ];
                if self.contains_local(p) {
                    break p;
                }
            },
            Shape::Disk { radius } => loop {
                let p = [r.gen_range(-1.0..=1.0) * radius, r.gen_range(-1.0..=1.0) * radius];
                if v2::dot(p, p) <= radius * radius {
                    break p;
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolPart {
    #[serde(flatten)]
    pub shape: Shape,
    /// Top surface height above the table.
    pub height: f64,
    pub pose: PlanarPose,
}

impl ToolPart {
    pub fn contains(&self, p: P2) -> bool {
        self.shape.contains_local(self.pose.inverse_apply(p))
    }

    pub fn thickness(&self) -> f64 {
        self.shape.thickness()
    }

    pub fn reach_from(&self, o: P2) -> f64 {
        v2::dist([self.pose.x, self.pose.y], o) + self.shape.reach()
    }

    /// Axis-aligned bounds of the footprint (conservative for rotated parts).
    fn bounds(&self) -> (P2, P2) {
        let r = self.shape.reach();
        ([self.pose.x - r, self.pose.y - r], [self.pose.x + r, self.pose.y + r])
    }

    fn sizes_in_range(&self) -> bool {
        self.shape
            .sizes()
            .into_iter()
            .chain([self.height])
            .all(|s| (MIN_PART_SIZE..=MAX_PART_SIZE).contains(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub category: Category,
    pub seed: u64,
    pub parts: Vec<ToolPart>,
}

impl ToolSpec {
    pub fn contains(&self, p: P2) -> bool {
        self.parts.iter().any(|q| q.contains(p))
    }

    /// Farthest footprint point from the tool frame origin.
    pub fn bounding_radius(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| p.reach_from([0.0, 0.0]))
            .fold(0.0, f64::max)
    }

    pub fn check_invariants(&self) -> bool {
        let n = self.parts.len();
        if !(1..=4).contains(&n) || !self.parts.iter().all(ToolPart::sizes_in_range) {
            return false;
        }
        let r = self.bounding_radius();
        if !(MIN_TOOL_RADIUS..=MAX_TOOL_RADIUS).contains(&r) {
            return false;
        }
        if self.category == Category::Hammer
            && (n != 2 || self.parts[0].shape.long_axis() < 2.0 * self.parts[1].shape.long_axis())
        {
            return false;
        }
        (1..n).all(|i| overlap_area(&self.parts[i], &self.parts[..i]) >= MIN_OVERLAP_AREA)
    }
}

/// Footprint area shared by `part` and the union of `others`, estimated on a
/// 1 mm lattice.
pub fn overlap_area(part: &ToolPart, others: &[ToolPart]) -> f64 {
    const STEP: f64 = 0.001;
    let (lo, hi) = part.bounds();
    let nx = ((hi[0] - lo[0]) / STEP).ceil() as usize;
    let ny = ((hi[1] - lo[1]) / STEP).ceil() as usize;
    let mut hits = 0usize;
    for i in 0..nx {
        for j in 0..ny {
            let p = [lo[0] + (i as f64 + 0.5) * STEP, lo[1] + (j as f64 + 0.5) * STEP];
            if part.contains(p) && others.iter().any(|o| o.contains(p)) {
                hits += 1;
            }
        }
    }
    hits as f64 * STEP * STEP
}

fn union_area_centroid(parts: &[ToolPart]) -> P2 {
    // union centroid on a 2 mm lattice; exact enough to centre the tool frame
    const STEP: f64 = 0.002;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in parts {
        let (a, b) = p.bounds();
        lo = [lo[0].min(a[0]), lo[1].min(a[1])];
        hi = [hi[0].max(b[0]), hi[1].max(b[1])];
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    let nx = ((hi[0] - lo[0]) / STEP).ceil() as usize;
    let ny = ((hi[1] - lo[1]) / STEP).ceil() as usize;
    for i in 0..nx {
        for j in 0..ny {
            let p = [lo[0] + (i as f64 + 0.5) * STEP, lo[1] + (j as f64 + 0.5) * STEP];
            if parts.iter().any(|q| q.contains(p)) {
                sx += p[0];
                sy += p[1];
                n += 1;
            }
        }
    }
    if n == 0 {
        return [0.0, 0.0];
    }
    [sx / n as f64, sy / n as f64]
}

fn recenter(parts: &mut [ToolPart]) {
    let c = union_area_centroid(parts);
    for p in parts {
        p.pose.x -= c[0];
        p.pose.y -= c[1];
    }
}

fn random_elongated(r: &mut rng::Rng, length: f64, thickness: f64) -> Shape {
    if r.gen_bool(0.5) {
        Shape::Box { length, width: thickness }
    } else {
        Shape::Capsule { length, radius: 0.5 * thickness }
    }
}

fn hammer_parts(r: &mut rng::Rng) -> Vec<ToolPart> {
    let handle_len = r.gen_range(0.15..0.26);
    let handle_w = r.gen_range(0.015..0.025);
    let handle = ToolPart {
        shape: random_elongated(r, handle_len, handle_w),
        height: r.gen_range(0.015..0.03),
        pose: PlanarPose::identity(),
    };
    let head_len = r.gen_range(0.05..(0.5 * handle_len).min(0.11));
    let head_w = r.gen_range(0.02..0.04);
    let head_shape = random_elongated(r, head_len, head_w);
    let along = 0.5 * handle_len - r.gen_range(0.0..0.5) * head_w;
    let lateral = r.gen_range(-0.25..0.25) * head_len;
    let tilt = std::f64::consts::FRAC_PI_2 + r.gen_range(-0.2..0.2);
    let head = ToolPart {
        shape: head_shape,
        height: r.gen_range(0.02..0.04),
        pose: PlanarPose::new(along - lateral * tilt.cos(), -lateral * tilt.sin(), tilt),
    };
    vec![handle, head]
}

fn random_shape(r: &mut rng::Rng) -> Shape {
    match r.gen_range(0..5) {
        0 | 1 => Shape::Box { length: r.gen_range(0.03..0.25), width: r.gen_range(0.01..0.07) },
        2 | 3 => {
            let radius = r.gen_range(0.006..0.035);
            Shape::Capsule { length: r.gen_range(2.0 * radius + 0.01..0.25), radius }
        }
        _ => Shape::Disk { radius: r.gen_range(0.01..0.05) },
    }
}

fn non_hammer_parts(r: &mut rng::Rng) -> Option<Vec<ToolPart>> {
    let n = r.gen_range(1..=4);
    let mut parts = vec![ToolPart {
        shape: random_shape(r),
        height: r.gen_range(0.01..0.04),
        pose: PlanarPose::new(0.0, 0.0, r.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
    }];
    let mut attempts = 0;
    while parts.len() < n {
        attempts += 1;
        if attempts > 50 {
            return None;
        }
        let shape = random_shape(r);
        // uniform pose near a uniformly chosen prior part
        let anchor = &parts[r.gen_range(0..parts.len())];
        let span = anchor.shape.reach() + shape.reach();
        let pose = PlanarPose::new(
            anchor.pose.x + r.gen_range(-span..span),
            anchor.pose.y + r.gen_range(-span..span),
            r.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let part = ToolPart { shape, height: r.gen_range(0.01..0.04), pose };
        if overlap_area(&part, &parts) >= MIN_OVERLAP_AREA {
            parts.push(part);
        }
    }
    Some(parts)
}

/// Deterministic tool for `(category, seed)`; rejection-samples until the
/// tool invariants hold.
pub fn generate_tool(category: Category, seed: u64) -> Result<ToolSpec> {
    let mut r = rng::rng(rng::derive(seed, category.name(), 0));
    for _ in 0..MAX_REJECTIONS {
        let parts = match category {
            Category::Hammer => Some(hammer_parts(&mut r)),
            Category::NonHammer => non_hammer_parts(&mut r),
        };
        let Some(mut parts) = parts else { continue };
        recenter(&mut parts);
        let spec = ToolSpec {
            id: format!("{}-{seed}", category.name()),
            category,
            seed,
            parts,
        };
        if spec.check_invariants() {
            return Ok(spec);
        }
    }
    Err(Error::GenerationFailed)
}

/// Samples `m` points uniformly by area over the union of part footprints,
/// at the covering part's top height, with Gaussian planar noise.
pub fn render_cloud(spec: &ToolSpec, m: usize, noise_sd: f64, seed: u64) -> Result<PointCloud> {
    if m < 64 {
        return Err(Error::InvalidInput("render_cloud needs m >= 64".into()));
    }
    if spec.parts.is_empty() || !(noise_sd >= 0.0) {
        return Err(Error::GenerationFailed);
    }
    let areas: Vec<f64> = spec.parts.iter().map(|p| p.shape.area()).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::GenerationFailed);
    }
    let mut r = rng::rng(seed);
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).map_err(|_| Error::GenerationFailed)?;
    let mut pts = Vec::with_capacity(m);
    let mut guard = 0usize;
    while pts.len() < m {
        guard += 1;
        if guard > 1000 * m {
            return Err(Error::GenerationFailed);
        }
        let mut u = r.gen_range(0.0..total);
        let mut k = 0;
        while k + 1 < areas.len() && u >= areas[k] {
            u -= areas[k];
            k += 1;
        }
        let part = &spec.parts[k];
        let p = part.pose.apply(part.shape.sample_local(&mut r));
        // keep with probability 1/coverage so the union is sampled uniformly
        let covering: Vec<&ToolPart> = spec.parts.iter().filter(|q| q.contains(p)).collect();
        let cover = covering.len().max(1);
        if cover > 1 && r.gen_range(0..cover) != 0 {
            continue;
        }
        let z = covering.iter().map(|q| q.height).fold(part.height, f64::max);
        let (nx, ny) = if noise_sd > 0.0 {
            (noise.sample(&mut r), noise.sample(&mut r))
        } else {
            (0.0, 0.0)
        };
        pts.push([p[0] + nx, p[1] + ny, z]);
    }
    Ok(PointCloud::new(pts))
}

/// Tool ids and seeds for one split. Seeds of different splits never collide.
pub fn split_seeds(split: &str, count: usize, base_seed: u64) -> Vec<u64> {
    let offset = match split {
        "train" => 0u64,
        "test" => 1u64 << 32,
        _ => 2u64 << 32,
    };
    (0..count as u64).map(|i| base_seed.wrapping_add(offset + i)).collect()
}

/// `per_category` tools of each category for a split, hammers first.
pub fn generate_split(split: &str, per_category: usize, base_seed: u64) -> Result<Vec<ToolSpec>> {
    let mut out = Vec::with_capacity(2 * per_category);
    for cat in Category::ALL {
        for (i, seed) in split_seeds(split, per_category, base_seed).into_iter().enumerate() {
            let mut spec = generate_tool(cat, seed)?;
            spec.id = format!("{split}-{}-{i:04}", cat.name());
            out.push(spec);
        }
    }
    Ok(out)
}

pub fn write_specs<W: Write>(mut w: W, specs: &[ToolSpec]) -> Result<()> {
    for s in specs {
        let line = serde_json::to_string(s).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_specs<R: BufRead>(r: R) -> Result<Vec<ToolSpec>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?);
    }
    Ok(out)
}

pub fn save_specs(path: &Path, specs: &[ToolSpec]) -> Result<()> {
    write_specs(BufWriter::new(File::create(path)?), specs)
}

pub fn load_specs(path: &Path) -> Result<Vec<ToolSpec>> {
    let f = File::open(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    read_specs(BufReader::new(f))
}
