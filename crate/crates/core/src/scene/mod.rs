//! Procedural multi-object scenes with target-only labels.
//!
//! A scene composites a background, some distractor shapes and one target
//! shape (painted last). The label renders the target alone on black.

mod dataset;
mod noise;
mod shapes;

pub use dataset::{gen_dataset, validation_count, Dataset, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};
pub use noise::{corrupt, Corruption};
pub use shapes::{Raster, Shape, ShapeKind};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Error, Result};
use crate::image::ImageGrid;

pub const ALLOWED_CANVAS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    None,
    /// Linear ramp reaching `level` across the canvas.
    Gradient {
        level: f64,
    },
    /// Per-pixel uniform noise on [0, level].
    Speckle {
        level: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub canvas: usize,
    pub target: Shape,
    pub distractors: Vec<Shape>,
    pub background: Background,
    /// Drives background texture only; geometry is explicit in the shapes.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !ALLOWED_CANVAS.contains(&self.canvas) {
            return Err(param_err!("canvas {} not in {ALLOWED_CANVAS:?}", self.canvas));
        }
        if !(self.target.intensity > 0.0 && self.target.intensity <= 1.0) {
            return Err(param_err!("target intensity {} outside (0, 1]", self.target.intensity));
        }
        for d in &self.distractors {
            if !(0.0..=1.0).contains(&d.intensity) {
                return Err(param_err!("distractor intensity {} outside [0, 1]", d.intensity));
            }
            if !matches!(
                d.kind,
                ShapeKind::Square { .. } | ShapeKind::Triangle { .. } | ShapeKind::Ring { .. }
            ) {
                return Err(param_err!(
                    "distractors must be squares, triangles or rings, got {:?}",
                    d.kind
                ));
            }
        }
        match self.background {
            Background::None => {}
            Background::Gradient { level } | Background::Speckle { level } => {
                if !(0.0..=1.0).contains(&level) {
                    return Err(param_err!("background level {level} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// A training sample: the full scene and the target-only label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub scene: ImageGrid,
    pub label: ImageGrid,
    /// 1 where a distractor is visible and the target is not, else 0.
    pub distractor_mask: ImageGrid,
    /// Whether any distractor overlaps the target's footprint.
    pub occluded: bool,
}

impl LabeledPair {
    /// 1 where the label is nonzero.
    pub fn target_mask(&self) -> ImageGrid {
        self.label.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    }
}

fn render_background(bg: Background, n: usize, seed: u64) -> ImageGrid {
    match bg {
        Background::None => ImageGrid::zeros(n, n),
        Background::Gradient { level } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s, c) = angle.sin_cos();
            let mut img = ImageGrid::zeros(n, n);
            let half = (n as f64 - 1.0) / 2.0;
            let span = half * (s.abs() + c.abs());
            for r in 0..n {
                for col in 0..n {
                    let t = ((col as f64 - half) * c + (r as f64 - half) * s) / span;
                    img.set(r, col, level * (t + 1.0) / 2.0);
                }
            }
            img
        }
        Background::Speckle { level } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..n * n).map(|_| rng.gen::<f64>() * level).collect();
            ImageGrid::square(n, data).expect("background shape")
        }
    }
}

/// Deterministically rasterize a scene and its target-only label.
pub fn render_scene(spec: &SceneSpec) -> Result<LabeledPair> {
    spec.validate()?;
    let n = spec.canvas;
    let target = spec.target.rasterize(n, n);
    if target.is_empty() {
        return Err(Error::Placement(format!(
            "target at {:?} lies outside the {n}×{n} canvas",
            spec.target.center
        )));
    }
    let mut scene = render_background(spec.background, n, spec.seed);
    let mut distractor_cov = ImageGrid::zeros(n, n);
    for (i, d) in spec.distractors.iter().enumerate() {
        let r = d.rasterize(n, n);
        if r.is_empty() {
            return Err(Error::Placement(format!(
                "distractor {i} at {:?} lies outside the canvas",
                d.center
            )));
        }
        r.paint_over(&mut scene);
        for (acc, &c) in distractor_cov.data_mut().iter_mut().zip(r.coverage.data()) {
            *acc = acc.max(c);
        }
    }
    target.paint_over(&mut scene);

    let occluded = distractor_cov
        .data()
        .iter()
        .zip(target.coverage.data())
        .any(|(&d, &t)| d > 0.0 && t > 0.0);
    let distractor_mask = ImageGrid::from_vec(
        n,
        n,
        distractor_cov
            .data()
            .iter()
            .zip(target.value.data())
            .map(|(&d, &t)| if d > 0.0 && t == 0.0 { 1.0 } else { 0.0 })
            .collect(),
    )?;
    Ok(LabeledPair {
        scene,
        label: target.value,
        distractor_mask,
        occluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Flower,
    Disk,
    TexturedBlob,
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flower" => Ok(TargetKind::Flower),
            "disk" => Ok(TargetKind::Disk),
            "textured_blob" => Ok(TargetKind::TexturedBlob),
            _ => Err(param_err!("unknown target kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKind {
    None,
    Gradient,
    Speckle,
}

impl std::str::FromStr for BackgroundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BackgroundKind::None),
            "gradient" => Ok(BackgroundKind::Gradient),
            "speckle" => Ok(BackgroundKind::Speckle),
            _ => Err(param_err!("unknown background kind '{s}'")),
        }
    }
}

/// Ranges for procedural dataset generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub canvas: usize,
    pub count: usize,
    pub seed: u64,
    pub target: TargetKind,
    pub petals: u32,
    /// Target radius as a fraction of the canvas side.
    pub target_radius: f64,
    pub target_intensity: f64,
    /// Largest translation in pixels; offsets are drawn from 1..=shift_max.
    pub shift_max: usize,
    pub rotation_deg: f64,
    pub distractors_min: usize,
    pub distractors_max: usize,
    /// Distractor size range as fractions of the canvas side.
    pub distractor_size: (f64, f64),
    pub distractor_intensity: (f64, f64),
    pub background: BackgroundKind,
    pub background_level: f64,
}

impl GenConfig {
    pub fn new(canvas: usize, count: usize, seed: u64) -> Self {
        Self {
            canvas,
            count,
            seed,
            target: TargetKind::Flower,
            petals: 6,
            target_radius: 0.22,
            target_intensity: 1.0,
            shift_max: (8 * canvas / 64).max(1),
            rotation_deg: 20.0,
            distractors_min: 1,
            distractors_max: 3,
            distractor_size: (0.12, 0.2),
            distractor_intensity: (0.5, 1.0),
            background: BackgroundKind::None,
            background_level: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 10 {
            return Err(param_err!("dataset count must be at least 10, got {}", self.count));
        }
        if !ALLOWED_CANVAS.contains(&self.canvas) {
            return Err(param_err!("canvas {} not in {ALLOWED_CANVAS:?}", self.canvas));
        }
        if self.distractors_min > self.distractors_max {
            return Err(param_err!("distractors_min > distractors_max"));
        }
        let (lo, hi) = self.distractor_size;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(param_err!("bad distractor size range {lo}..{hi}"));
        }
        let (lo, hi) = self.distractor_intensity;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(param_err!("bad distractor intensity range {lo}..{hi}"));
        }
        if !(self.target_radius > 0.0 && self.target_radius < 0.5) {
            return Err(param_err!(
                "target radius fraction {} outside (0, 0.5)",
                self.target_radius
            ));
        }
        Ok(())
    }

    /// Per-sample seeds, drawn serially from the master seed.
    pub fn sample_seeds(&self) -> Vec<u64> {
        let mut master = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count).map(|_| master.next_u64()).collect()
    }

    pub fn sample_spec(&self, sample_seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let n = self.canvas as f64;
        let radius = self.target_radius * n;
        let mut center = (n / 2.0, n / 2.0);
        // none, up, left, right
        let dir = rng.gen_range(0..4);
        let offset = rng.gen_range(1..=self.shift_max) as f64;
        match dir {
            1 => center.1 -= offset,
            2 => center.0 -= offset,
            3 => center.0 += offset,
            _ => {}
        }
        let rotation_deg = if rng.gen::<bool>() { self.rotation_deg } else { 0.0 };
        let kind = match self.target {
            TargetKind::Flower => ShapeKind::Flower {
                petals: self.petals,
                radius,
            },
            TargetKind::Disk => ShapeKind::Disk { radius },
            TargetKind::TexturedBlob => ShapeKind::TexturedBlob { radius },
        };
        let target = Shape {
            kind,
            center,
            rotation_deg,
            intensity: self.target_intensity,
        };

        let count = rng.gen_range(self.distractors_min..=self.distractors_max);
        let mut distractors: Vec<Shape> = Vec::with_capacity(count);
        for _ in 0..count {
            let size = rng.gen_range(self.distractor_size.0..=self.distractor_size.1) * n;
            let kind = match rng.gen_range(0..3) {
                0 => ShapeKind::Square { side: size },
                1 => ShapeKind::Triangle { radius: size * 0.6 },
                _ => ShapeKind::Ring {
                    outer: size * 0.55,
                    inner: size * 0.3,
                },
            };
            let reach = kind.bounding_radius();
            let intensity = rng.gen_range(self.distractor_intensity.0..=self.distractor_intensity.1);
            let rot = rng.gen_range(0.0..360.0);
            // prefer placements clear of the target and earlier distractors
            let mut placed = (n / 2.0, n / 2.0);
            for _ in 0..64 {
                let cand = (rng.gen_range(reach..n - reach), rng.gen_range(reach..n - reach));
                placed = cand;
                let clear_target = dist(cand, target.center) > radius + reach + 1.0;
                let clear_others = distractors
                    .iter()
                    .all(|d| dist(cand, d.center) > d.kind.bounding_radius() + reach + 1.0);
                if clear_target && clear_others {
                    break;
                }
            }
            distractors.push(Shape {
                kind,
                center: placed,
                rotation_deg: rot,
                intensity,
            });
        }
        let background = match self.background {
            BackgroundKind::None => Background::None,
            BackgroundKind::Gradient => Background::Gradient {
                level: self.background_level,
            },
            BackgroundKind::Speckle => Background::Speckle {
                level: self.background_level,
            },
        };
        SceneSpec {
            canvas: self.canvas,
            target,
            distractors,
            background,
            seed: rng.next_u64(),
        }
    }

    /// Render the whole set in memory.
    pub fn render_all(&self) -> Result<Vec<LabeledPair>> {
        self.validate()?;
        self.sample_seeds()
            .into_iter()
            .map(|s| render_scene(&self.sample_spec(s)))
            .collect()
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_spec() -> SceneSpec {
        SceneSpec {
            canvas: 32,
            target: Shape {
                kind: ShapeKind::Flower { petals: 6, radius: 7.0 },
                center: (16.0, 16.0),
                rotation_deg: 0.0,
                intensity: 1.0,
            },
            distractors: vec![],
            background: Background::None,
            seed: 3,
        }
    }

    #[test]
    fn no_distractors_no_background_scene_equals_label() {
        let p = render_scene(&simple_spec()).unwrap();
        assert_eq!(p.scene, p.label);
        assert!(!p.occluded);
        assert_eq!(p.distractor_mask.sum(), 0.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = GenConfig {
            background: BackgroundKind::Speckle,
            background_level: 0.2,
            ..GenConfig::new(32, 10, 5)
        };
        let spec = cfg.sample_spec(cfg.sample_seeds()[3]);
        assert_eq!(render_scene(&spec).unwrap(), render_scene(&spec).unwrap());
    }

    #[test]
    fn target_outside_canvas_is_placement_error() {
        let mut spec = simple_spec();
        spec.target.center = (100.0, 100.0);
        assert!(matches!(render_scene(&spec), Err(Error::Placement(_))));
        let mut spec = simple_spec();
        spec.distractors.push(Shape {
            kind: ShapeKind::Square { side: 3.0 },
            center: (-10.0, -10.0),
            rotation_deg: 0.0,
            intensity: 1.0,
        });
        assert!(matches!(render_scene(&spec), Err(Error::Placement(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = simple_spec();
        spec.canvas = 48;
        assert!(spec.validate().is_err());
        let mut spec = simple_spec();
        spec.target.intensity = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn label_only_where_target_renders_and_masks_disjoint() {
        let cfg = GenConfig::new(32, 30, 11);
        for pair in cfg.render_all().unwrap() {
            assert!(pair
                .scene
                .data()
                .iter()
                .chain(pair.label.data())
                .all(|&v| (0.0..=1.0).contains(&v)));
            for (&l, &d) in pair.label.data().iter().zip(pair.distractor_mask.data()) {
                assert!(!(l > 0.0 && d > 0.0));
            }
            if !pair.occluded {
                // outside distractors, the scene equals the label on the target support
                for (&s, &l) in pair.scene.data().iter().zip(pair.label.data()) {
                    if l > 0.0 {
                        assert_eq!(s, l);
                    }
                }
            }
        }
    }

    #[test]
    fn rotated_flower_area_changes_little() {
        let mut spec = simple_spec();
        spec.canvas = 64;
        spec.target.kind = ShapeKind::Flower {
            petals: 6,
            radius: 14.0,
        };
        spec.target.center = (32.0, 32.0);
        let count = |s: &SceneSpec| {
            render_scene(s)
                .unwrap()
                .label
                .data()
                .iter()
                .filter(|&&v| v >= 0.5)
                .count() as f64
        };
        let a = count(&spec);
        spec.target.rotation_deg = 20.0;
        let b = count(&spec);
        assert!((a - b).abs() / a < 0.05);
    }

    #[test]
    fn foreground_fraction_in_range_for_generated_set() {
        for (canvas, count) in [(32, 200), (64, 100)] {
            let cfg = GenConfig::new(canvas, count, 1);
            for pair in cfg.render_all().unwrap() {
                let frac = pair.label.data().iter().filter(|&&v| v > 0.0).count() as f64 / (canvas * canvas) as f64;
                assert!((0.02..=0.4).contains(&frac), "fraction {frac}");
            }
        }
    }
}
