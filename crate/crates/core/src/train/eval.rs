use std::fmt::Write as _;

use crate::analysis::{psnr, selectivity, ssim};
use crate::error::{dim_err, param_err, Result};
use crate::image::ImageGrid;
use crate::scene::{Dataset, LabeledPair, Split};

/// Anything that maps a scene to a reconstruction.
pub trait Pipeline {
    fn canvas(&self) -> usize;
    fn predict(&self, scene: &ImageGrid) -> Result<ImageGrid>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// `None` when the scene has no visible distractor.
    pub selectivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Mean over the rows that have a selectivity value.
    pub mean_selectivity: Option<f64>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,psnr,ssim,selectivity\n");
        for r in &self.rows {
            let sel = r.selectivity.map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:?},{:?},{sel}", r.index, r.psnr, r.ssim);
        }
        s
    }
}

/// Evaluate a pipeline on `(index, pair)` samples, optionally transforming each
/// scene before prediction (the label stays clean).
pub fn evaluate_pairs<'a>(
    pipeline: &impl Pipeline,
    samples: impl IntoIterator<Item = (usize, &'a LabeledPair)>,
    mut scene_transform: impl FnMut(usize, &ImageGrid) -> Result<ImageGrid>,
) -> Result<EvalReport> {
    let n = pipeline.canvas();
    let mut scored = Vec::new();
    for (index, pair) in samples {
        if pair.scene.height() != n || pair.scene.width() != n {
            return Err(dim_err!(
                "model expects {n}×{n} scenes, sample {index} is {}×{}",
                pair.scene.height(),
                pair.scene.width()
            ));
        }
        let scene = scene_transform(index, &pair.scene)?;
        scored.push((index, pair, pipeline.predict(&scene)?));
    }
    score_predictions(scored)
}

/// Score ready-made reconstructions against their labels.
pub fn score_predictions<'a>(
    items: impl IntoIterator<Item = (usize, &'a LabeledPair, ImageGrid)>,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for (index, pair, pred) in items {
        let target = pair.target_mask();
        let has_distractor = pair.distractor_mask.data().iter().any(|&v| v > 0.5);
        let sel = if has_distractor && target.data().iter().any(|&v| v > 0.5) {
            Some(selectivity(&pred, &target, &pair.distractor_mask)?)
        } else {
            None
        };
        rows.push(EvalRow {
            index,
            psnr: psnr(&pair.label, &pred, 1.0)?,
            ssim: ssim(&pair.label, &pred)?,
            selectivity: sel,
        });
    }
    if rows.is_empty() {
        return Err(param_err!("cannot evaluate an empty split"));
    }
    let k = rows.len() as f64;
    let sels: Vec<f64> = rows.iter().filter_map(|r| r.selectivity).collect();
    Ok(EvalReport {
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / k,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / k,
        mean_selectivity: (!sels.is_empty()).then(|| sels.iter().sum::<f64>() / sels.len() as f64),
        rows,
    })
}

/// Evaluate on one split of a dataset.
pub fn evaluate(pipeline: &impl Pipeline, dataset: &Dataset, split: Split) -> Result<EvalReport> {
    let samples = dataset
        .manifest
        .indices(split)
        .into_iter()
        .map(|i| (i, &dataset.samples[i]));
    evaluate_pairs(pipeline, samples, |_, s| Ok(s.clone()))
}
