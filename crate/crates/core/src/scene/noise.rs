use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param_err, Error, Result};
use crate::image::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Each pixel independently set to 0 with probability `level`.
    Pepper,
    /// Additive zero-mean Gaussian with standard deviation `level`, then clamp to [0,1].
    Gaussian,
}

impl std::str::FromStr for Corruption {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pepper" => Ok(Corruption::Pepper),
            "gaussian" => Ok(Corruption::Gaussian),
            _ => Err(param_err!("unknown corruption '{s}'")),
        }
    }
}

pub fn corrupt(image: &ImageGrid, kind: Corruption, level: f64, seed: u64) -> Result<ImageGrid> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(param_err!("noise level {level} must be a finite value ≥ 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Corruption::Pepper => {
            if level > 1.0 {
                return Err(param_err!("pepper level {level} exceeds 1"));
            }
            Ok(image.map(|v| if rng.gen::<f64>() < level { 0.0 } else { v }))
        }
        Corruption::Gaussian => {
            if level == 0.0 {
                return Ok(image.clone());
            }
            let normal = Normal::new(0.0, level).map_err(|e| param_err!("{e}"))?;
            Ok(image.map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0)))
        }
    }
}
