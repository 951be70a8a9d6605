//! Virtual single-pixel camera: ±1 patterns shown as complementary 0/1 mirror
//! masks, photodiode readings with optional noise and quantization, and a
//! scattering-medium model.

mod spim;

pub use spim::{decode_spim, encode_spim, measurements_csv, read_spim, spim_file_size, write_spim};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, param_err, Result};
use crate::image::ImageGrid;
use crate::kernel::CompensatedSum;
use crate::sampler::{MeasurementVector, PatternStack};

/// How a ±1 pattern is realized on a binary device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Two readings per pattern, `y = r⁺ − r⁻`.
    #[default]
    Differential,
    /// One reading per pattern plus one shared all-on frame, `y = 2r⁺ − r_all`.
    Calibrated,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "differential" => Ok(Scheme::Differential),
            "calibrated" => Ok(Scheme::Calibrated),
            _ => Err(param_err!("unknown acquisition scheme '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    /// Standard deviation of each photodiode reading as a fraction of the mean
    /// |y| of the noise-free acquisition.
    pub gaussian_sigma: f64,
    /// Readings rounded to multiples of `N²/2^bits` and clipped to `[0, N²]`.
    pub quantization_bits: Option<u32>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(param_err!("noise sigma {} must be finite and ≥ 0", self.gaussian_sigma));
        }
        if let Some(b) = self.quantization_bits {
            if !(1..=52).contains(&b) {
                return Err(param_err!("quantization bits {b} outside 1..=52"));
            }
        }
        Ok(())
    }
}

/// Raw detector readings of one acquisition plus the derived measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub y: MeasurementVector,
    pub r_plus: Vec<f64>,
    /// Complementary-mask readings (differential scheme) or empty.
    pub r_minus: Vec<f64>,
    /// All-on calibration reading (calibrated scheme).
    pub r_all: Option<f64>,
}

struct Detector {
    sigma_abs: f64,
    quant: Option<(f64, f64)>,
    seed: u64,
}

impl Detector {
    /// Noise for reading slot `stream`, drawn from its own ChaCha8 stream so
    /// results do not depend on evaluation order.
    fn read(&self, clean: &[f64], stream: u64) -> Vec<f64> {
        let mut values = clean.to_vec();
        if self.sigma_abs > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(stream);
            let normal = Normal::new(0.0, self.sigma_abs).expect("sigma validated");
            values.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
        if let Some((step, full)) = self.quant {
            values
                .iter_mut()
                .for_each(|v| *v = ((*v / step).round() * step).clamp(0.0, full));
        }
        values
    }
}

/// Full acquisition with detector readings.
pub fn acquire_readings(scene: &ImageGrid, patterns: &PatternStack, noise: &NoiseConfig) -> Result<Acquisition> {
    noise.validate()?;
    let n = patterns.n();
    if scene.height() != n || scene.width() != n {
        return Err(dim_err!(
            "scene {}×{} vs patterns {n}×{n}",
            scene.height(),
            scene.width()
        ));
    }
    let f = scene.data();
    let total = scene.sum();
    let mut r_plus = Vec::with_capacity(patterns.m());
    let mut r_minus = Vec::with_capacity(patterns.m());
    for i in 0..patterns.m() {
        let (mut pos, mut neg) = (CompensatedSum::default(), CompensatedSum::default());
        for (&s, &v) in patterns.pattern(i).iter().zip(f) {
            if s > 0 {
                pos.add(v);
            } else {
                neg.add(v);
            }
        }
        r_plus.push(pos.value());
        r_minus.push(neg.value());
    }
    let clean_mean_abs = r_plus.iter().zip(&r_minus).map(|(p, q)| (p - q).abs()).sum::<f64>() / patterns.m() as f64;
    let full = (n * n) as f64;
    let det = Detector {
        sigma_abs: noise.gaussian_sigma * clean_mean_abs,
        quant: noise.quantization_bits.map(|b| (full / 2f64.powi(b as i32), full)),
        seed: noise.seed,
    };
    let m = patterns.m() as u64;
    match noise.scheme {
        Scheme::Differential => {
            let r_plus = det.read(&r_plus, 0);
            let r_minus = det.read(&r_minus, 1);
            let y = r_plus.iter().zip(&r_minus).map(|(p, q)| p - q).collect();
            Ok(Acquisition {
                y: MeasurementVector(y),
                r_plus,
                r_minus,
                r_all: None,
            })
        }
        Scheme::Calibrated => {
            let r_plus = det.read(&r_plus, 0);
            let r_all = det.read(&[total], m + 1)[0];
            let y = r_plus.iter().map(|p| 2.0 * p - r_all).collect();
            Ok(Acquisition {
                y: MeasurementVector(y),
                r_plus,
                r_minus: Vec::new(),
                r_all: Some(r_all),
            })
        }
    }
}

/// Measurements of `scene` through `patterns`.
pub fn acquire(scene: &ImageGrid, patterns: &PatternStack, noise: &NoiseConfig) -> Result<MeasurementVector> {
    Ok(acquire_readings(scene, patterns, noise)?.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScatterConfig {
    /// Gaussian PSF standard deviation in pixels.
    pub psf_sigma: f64,
    /// Uniform stray-light offset β in [0,1).
    pub base_level: f64,
}

impl ScatterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.psf_sigma >= 0.0 && self.psf_sigma.is_finite()) {
            return Err(param_err!("PSF sigma {} must be finite and ≥ 0", self.psf_sigma));
        }
        if !(0.0..1.0).contains(&self.base_level) {
            return Err(param_err!("base level {} outside [0, 1)", self.base_level));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Half-sample symmetric reflection of any integer index into `0..n`.
fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let j = i.rem_euclid(period);
    if j < n as i64 {
        j as usize
    } else {
        (period - 1 - j) as usize
    }
}

/// Separable Gaussian blur with reflective borders; preserves the total intensity.
pub fn gaussian_blur(image: &ImageGrid, sigma: f64) -> ImageGrid {
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return image.clone();
    }
    let r = (taps.len() / 2) as i64;
    let (h, w) = (image.height(), image.width());
    let mut tmp = ImageGrid::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let acc = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * image.get(y, reflect(x as i64 + k as i64 - r, w)))
                .sum();
            tmp.set(y, x, acc);
        }
    }
    let mut out = ImageGrid::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let acc = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp.get(reflect(y as i64 + k as i64 - r, h), x))
                .sum();
            out.set(y, x, acc);
        }
    }
    out
}

/// `clamp(blur(scene) + β, 0, 1)`.
pub fn scatter(scene: &ImageGrid, cfg: &ScatterConfig) -> Result<ImageGrid> {
    cfg.validate()?;
    let beta = cfg.base_level;
    Ok(gaussian_blur(scene, cfg.psf_sigma).map(|v| (v + beta).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::measure;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_scene(n: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
        ImageGrid::square(n, (0..n * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn noise_off_matches_measure_and_masks_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let scene = random_scene(16, &mut rng);
            let stack = PatternStack::random(20, 16, &mut rng);
            let acq = acquire_readings(&scene, &stack, &NoiseConfig::off()).unwrap();
            let y = measure(&stack, &scene).unwrap();
            for (a, b) in acq.y.values().iter().zip(y.values()) {
                assert!((a - b).abs() <= 1e-12);
            }
            for (p, q) in acq.r_plus.iter().zip(&acq.r_minus) {
                assert!((p + q - scene.sum()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn calibrated_scheme_agrees_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = random_scene(8, &mut rng);
        let stack = PatternStack::random(6, 8, &mut rng);
        let cfg = NoiseConfig {
            scheme: Scheme::Calibrated,
            ..NoiseConfig::off()
        };
        let a = acquire(&scene, &stack, &cfg).unwrap();
        let b = measure(&stack, &scene).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn noise_residual_std_is_sqrt2_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scene = random_scene(8, &mut rng);
        let stack = PatternStack::random(1, 8, &mut rng);
        let clean = measure(&stack, &scene).unwrap().values()[0];
        let s = 0.05;
        let abs_sigma = s * clean.abs();
        let trials = 10_000;
        let residuals: Vec<f64> = (0..trials)
            .map(|seed| {
                let cfg = NoiseConfig {
                    gaussian_sigma: s,
                    seed,
                    ..NoiseConfig::off()
                };
                acquire(&scene, &stack, &cfg).unwrap().values()[0] - clean
            })
            .collect();
        let mean = residuals.iter().sum::<f64>() / trials as f64;
        let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let expected = abs_sigma * 2f64.sqrt();
        assert!((sd / expected - 1.0).abs() <= 0.05, "{sd} vs {expected}");
    }

    #[test]
    fn quantized_readings_are_multiples_of_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = random_scene(16, &mut rng);
        let stack = PatternStack::random(10, 16, &mut rng);
        let cfg = NoiseConfig {
            gaussian_sigma: 0.01,
            quantization_bits: Some(10),
            seed: 7,
            ..NoiseConfig::off()
        };
        let acq = acquire_readings(&scene, &stack, &cfg).unwrap();
        let step = 256.0 / 1024.0;
        for v in acq.r_plus.iter().chain(&acq.r_minus).chain(acq.y.values()) {
            let k = v / step;
            assert!((k - k.round()).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn acquisition_is_order_independent_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(8, &mut rng);
        let stack = PatternStack::random(4, 8, &mut rng);
        let cfg = NoiseConfig {
            gaussian_sigma: 0.1,
            seed: 11,
            ..NoiseConfig::off()
        };
        assert_eq!(
            acquire(&scene, &stack, &cfg).unwrap(),
            acquire(&scene, &stack, &cfg).unwrap()
        );
        let other = NoiseConfig { seed: 12, ..cfg };
        assert_ne!(
            acquire(&scene, &stack, &cfg).unwrap(),
            acquire(&scene, &stack, &other).unwrap()
        );
        assert!(acquire(&ImageGrid::zeros(4, 4), &stack, &cfg).is_err());
    }

    #[test]
    fn scatter_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scene = random_scene(12, &mut rng);
        assert_eq!(scatter(&scene, &ScatterConfig::default()).unwrap(), scene);
        for c in [0.1, 0.5, 0.9] {
            let cfg = ScatterConfig {
                psf_sigma: 1.5,
                base_level: 0.2,
            };
            let out = scatter(&ImageGrid::filled(12, 12, c), &cfg).unwrap();
            let expected = f64::min(c + 0.2, 1.0);
            assert!(out.data().iter().all(|&v| (v - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn blur_preserves_mass_and_lowers_peak() {
        let mut img = ImageGrid::zeros(16, 16);
        img.set(1, 14, 1.0);
        let out = gaussian_blur(&img, 2.0);
        assert!((out.sum() - 1.0).abs() <= 1e-6);
        assert!(out.get(1, 14) < 1.0);
        let taps = gaussian_kernel(2.0);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_configs_rejected() {
        let img = ImageGrid::zeros(4, 4);
        assert!(scatter(
            &img,
            &ScatterConfig {
                psf_sigma: -1.0,
                base_level: 0.0
            }
        )
        .is_err());
        assert!(scatter(
            &img,
            &ScatterConfig {
                psf_sigma: 0.0,
                base_level: 1.0
            }
        )
        .is_err());
        let stack = PatternStack::random(2, 4, &mut ChaCha8Rng::seed_from_u64(0));
        let cfg = NoiseConfig {
            quantization_bits: Some(0),
            ..NoiseConfig::off()
        };
        assert!(acquire(&img, &stack, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn noise_free_acquisition_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_scene(8, &mut rng);
            let g = random_scene(8, &mut rng);
            let stack = PatternStack::random(5, 8, &mut rng);
            let mix = ImageGrid::square(8, f.data().iter().zip(g.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let off = NoiseConfig::off();
            let (yf, yg, ym) = (acquire(&f, &stack, &off).unwrap(), acquire(&g, &stack, &off).unwrap(), acquire(&mix, &stack, &off).unwrap());
            for i in 0..5 {
                prop_assert!((ym.values()[i] - (a * yf.values()[i] + b * yg.values()[i])).abs() < 1e-10);
            }
        }

        #[test]
        fn blur_mass_preserved_for_any_sigma(seed in 0u64..1000, sigma in 0.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_scene(8, &mut rng);
            prop_assert!((gaussian_blur(&img, sigma).sum() - img.sum()).abs() < 1e-9);
        }
    }
}
