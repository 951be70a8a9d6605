use std::fmt::Write as _;

use crate::analysis::{mutual_coherence, welch_bound};
use crate::error::{param_err, Result};
use crate::scene::{Dataset, Split};
use crate::train::{evaluate, train, TrainConfig};

pub const SWEEP_HEADER: &str = "rate,m,mean_psnr,mean_ssim,mu,welch";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub m: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mu: f64,
    pub welch: f64,
}

/// One row per rate, rates strictly descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:?},{},{:?},{:?},{:?},{:?}",
                r.rate, r.m, r.mean_psnr, r.mean_ssim, r.mu, r.welch
            );
        }
        s
    }

    pub fn row(&self, rate: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.rate == rate)
    }
}

/// Train one model per rate with the shared config and seed, then evaluate it
/// on the validation split and measure the coherence of its patterns.
pub fn rate_sweep(dataset: &Dataset, rates: &[f64], config: &TrainConfig) -> Result<SweepReport> {
    if rates.is_empty() {
        return Err(param_err!("sweep needs at least one rate"));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let n = dataset.manifest.canvas;
    let mut rows = Vec::with_capacity(sorted.len());
    for rate in sorted {
        let run = || -> Result<SweepRow> {
            let cfg = TrainConfig { rate, ..config.clone() };
            cfg.validate()?;
            let (ckpt, _) = train(dataset, &cfg)?;
            let report = evaluate(&ckpt.model, dataset, Split::Validation)?;
            let patterns = ckpt.model.patterns()?;
            let coherence = mutual_coherence(&patterns)?;
            Ok(SweepRow {
                rate,
                m: patterns.m(),
                mean_psnr: report.mean_psnr,
                mean_ssim: report.mean_ssim,
                mu: coherence.mu,
                welch: welch_bound(patterns.m(), n * n),
            })
        };
        rows.push(run().map_err(|e| e.context(format!("rate {rate}")))?);
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::sampler::measurement_count;
    use crate::scene::GenConfig;

    #[test]
    fn rows_descending_with_consistent_m() {
        let ds = Dataset::generate(&GenConfig::new(32, 12, 3)).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let report = rate_sweep(&ds, &[0.05, 0.2, 0.05], &cfg).unwrap();
        let rates: Vec<f64> = report.rows.iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![0.2, 0.05]);
        for r in &report.rows {
            assert_eq!(r.m, measurement_count(r.rate, 32).unwrap());
            assert!(r.welch < r.mu && r.mu <= 1.0);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn errors_name_the_rate() {
        let ds = Dataset::generate(&GenConfig::new(32, 12, 3)).unwrap();
        let err = rate_sweep(&ds, &[1.5], &TrainConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Parameter(m) if m.starts_with("rate 1.5:")));
        assert!(rate_sweep(&ds, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn measurement_counts_at_full_canvas() {
        let m: Vec<usize> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&r| measurement_count(r, 64).unwrap())
            .collect();
        assert_eq!(m, vec![819, 410, 205, 102]);
    }
}
