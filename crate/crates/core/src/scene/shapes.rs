//! Analytic shapes and a supersampled rasterizer.

use std::f64::consts::PI;

use crate::image::ImageGrid;

/// Subsamples per pixel axis.
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    /// Rosette of elliptical petals around a small disk; `radius` is the petal tip distance.
    Flower {
        petals: u32,
        radius: f64,
    },
    Disk {
        radius: f64,
    },
    /// Disk with a smooth grayscale interior texture.
    TexturedBlob {
        radius: f64,
    },
    Square {
        side: f64,
    },
    /// Equilateral triangle with the given circumradius.
    Triangle {
        radius: f64,
    },
    Ring {
        outer: f64,
        inner: f64,
    },
}

impl ShapeKind {
    /// Radius of a circle around the center that contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            ShapeKind::Flower { radius, .. } | ShapeKind::Disk { radius } | ShapeKind::TexturedBlob { radius } => {
                radius
            }
            ShapeKind::Square { side } => side * std::f64::consts::FRAC_1_SQRT_2,
            ShapeKind::Triangle { radius } => radius,
            ShapeKind::Ring { outer, .. } => outer,
        }
    }

    /// Coverage-independent intensity factor at local coordinates, or `None` if outside.
    fn sample(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            ShapeKind::Flower { petals, radius } => {
                let r2 = x * x + y * y;
                if r2 <= (0.3 * radius).powi(2) {
                    return Some(1.0);
                }
                let (a, b) = (0.5 * radius, 0.22 * radius);
                for k in 0..petals {
                    let theta = 2.0 * PI * f64::from(k) / f64::from(petals);
                    let (s, c) = theta.sin_cos();
                    // petal frame: u along the petal axis, v across it
                    let u = x * c + y * s - 0.5 * radius;
                    let v = -x * s + y * c;
                    if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                        return Some(1.0);
                    }
                }
                None
            }
            ShapeKind::Disk { radius } => (x * x + y * y <= radius * radius).then_some(1.0),
            ShapeKind::TexturedBlob { radius } => {
                if x * x + y * y > radius * radius {
                    return None;
                }
                let k = 2.5 * PI / radius;
                Some(0.65 + 0.35 * (k * x).sin() * (k * y).cos())
            }
            ShapeKind::Square { side } => (x.abs() <= side / 2.0 && y.abs() <= side / 2.0).then_some(1.0),
            ShapeKind::Triangle { radius } => {
                // vertices at angles 90°, 210°, 330°; inside if on the inner side of all edges
                let inside = (0..3).all(|k| {
                    let phi = PI / 2.0 + 2.0 * PI * f64::from(k) / 3.0 + PI;
                    let (s, c) = phi.sin_cos();
                    x * c + y * s <= radius / 2.0
                });
                inside.then_some(1.0)
            }
            ShapeKind::Ring { outer, inner } => {
                let r2 = x * x + y * y;
                (r2 <= outer * outer && r2 >= inner * inner).then_some(1.0)
            }
        }
    }
}

/// A shape placed on the canvas. `center` is (x, y) in pixel units with pixel
/// centers at integer + 0.5; rotation is counter-clockwise in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub center: (f64, f64),
    pub rotation_deg: f64,
    pub intensity: f64,
}

impl Shape {
    fn local(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = (-self.rotation_deg.to_radians()).sin_cos();
        let (dx, dy) = (px - self.center.0, py - self.center.1);
        (dx * c - dy * s, dx * s + dy * c)
    }

    /// Render into (value, coverage) rasters on an empty canvas.
    pub fn rasterize(&self, height: usize, width: usize) -> Raster {
        let mut value = ImageGrid::zeros(height, width);
        let mut coverage = ImageGrid::zeros(height, width);
        let reach = self.kind.bounding_radius() + 1.0;
        let r0 = ((self.center.1 - reach).floor().max(0.0)) as usize;
        let r1 = ((self.center.1 + reach).ceil().min(height as f64)) as usize;
        let c0 = ((self.center.0 - reach).floor().max(0.0)) as usize;
        let c1 = ((self.center.0 + reach).ceil().min(width as f64)) as usize;
        let step = 1.0 / SUPERSAMPLE as f64;
        let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        for r in r0..r1 {
            for c in c0..c1 {
                let (mut hits, mut acc) = (0usize, 0.0);
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = c as f64 + (sx as f64 + 0.5) * step;
                        let py = r as f64 + (sy as f64 + 0.5) * step;
                        let (lx, ly) = self.local(px, py);
                        if let Some(v) = self.kind.sample(lx, ly) {
                            hits += 1;
                            acc += v;
                        }
                    }
                }
                if hits > 0 {
                    let cov = hits as f64 / total;
                    coverage.set(r, c, cov);
                    // coverage-weighted value so edges anti-alias
                    value.set(r, c, (self.intensity * acc / total).clamp(0.0, 1.0));
                }
            }
        }
        Raster { value, coverage }
    }
}

pub struct Raster {
    pub value: ImageGrid,
    pub coverage: ImageGrid,
}

impl Raster {
    pub fn is_empty(&self) -> bool {
        self.coverage.data().iter().all(|&c| c == 0.0)
    }

    /// Paint over `canvas`: covered area is replaced in proportion to coverage.
    pub fn paint_over(&self, canvas: &mut ImageGrid) {
        for ((dst, &v), &cov) in canvas
            .data_mut()
            .iter_mut()
            .zip(self.value.data())
            .zip(self.coverage.data())
        {
            if cov > 0.0 {
                *dst = (*dst * (1.0 - cov) + v).clamp(0.0, 1.0);
            }
        }
    }
}
