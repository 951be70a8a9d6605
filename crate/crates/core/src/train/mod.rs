//! Joint optimization of the sampling patterns and the reconstruction network.
//!
//! The forward pass always uses the binarized patterns; gradients reach the
//! latent weights through the straight-through estimator. Every parameter
//! tensor has its own Adam state. Epoch `e` (0-based) shuffles the training
//! split with ChaCha8 stream `e + 1` of the run seed; stream 0 initializes
//! the model, so a resumed run replays the same batch order.

mod checkpoint;
mod eval;
mod history;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, ModelCheckpoint};
pub use eval::{evaluate, evaluate_pairs, score_predictions, EvalReport, EvalRow, Pipeline};
pub use history::{EpochRecord, TrainHistory, HISTORY_HEADER};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{psnr, ssim};
use crate::error::{param_err, Error, Result};
use crate::image::ImageGrid;
use crate::kernel::{AdamHyper, OptimizerState, Tensor};
use crate::recon::{expand, expand_backward, unet_backward, unet_forward_cached, ReconParams};
use crate::sampler::{
    binarize, measure, measure_backward, measurement_count, ste_grad, LatentWeights, MeasurementVector, PatternStack,
};
use crate::scene::{corrupt, Corruption, Dataset, LabeledPair, Split};

/// Half-width of the uniform latent initialization.
pub const LATENT_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        "mse"
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            _ => Err(param_err!("unknown loss '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Write an intermediate checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Pepper corruption level applied to training scenes; 0 disables.
    pub augment_pepper: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rate: 0.1,
            epochs: 30,
            batch_size: 16,
            lr: 2e-4,
            seed: 0,
            loss: LossKind::Mse,
            checkpoint_every: 0,
            augment_pepper: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(param_err!("rate {} outside (0, 1]", self.rate));
        }
        if self.epochs == 0 {
            return Err(param_err!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(param_err!("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(param_err!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.augment_pepper) {
            return Err(param_err!(
                "pepper augmentation level {} outside [0, 1]",
                self.augment_pepper
            ));
        }
        Ok(())
    }
}

/// Mean of squared pixel differences.
pub fn loss_mse(label: &ImageGrid, prediction: &ImageGrid) -> Result<f64> {
    crate::analysis::mse(label, prediction)
}

/// Latent sampling weights together with the reconstruction network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub latent: LatentWeights,
    pub recon: ReconParams,
}

impl Model {
    /// Initialize from ChaCha8 stream 0 of `seed`: latent weights first, then the network.
    pub fn init(n: usize, m: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = LatentWeights::random_uniform(m, n, LATENT_INIT, &mut rng);
        let recon = ReconParams::init(n, m, &mut rng)?;
        Ok(Self { latent, recon })
    }

    pub fn n(&self) -> usize {
        self.recon.n()
    }

    pub fn m(&self) -> usize {
        self.recon.m()
    }

    pub fn patterns(&self) -> Result<PatternStack> {
        binarize(&self.latent)
    }

    /// Deployment path: binarize → measure → expand → U-net.
    pub fn predict(&self, scene: &ImageGrid) -> Result<ImageGrid> {
        let y = measure(&self.patterns()?, scene)?;
        self.recon.reconstruct(&y)
    }

    /// All trainable tensors: latent weights, then the network's tensors.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![self.latent.values()];
        v.extend(self.recon.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![self.latent.values_mut()];
        v.extend(self.recon.tensors_mut());
        v
    }
}

impl Pipeline for Model {
    fn canvas(&self) -> usize {
        self.n()
    }

    fn predict(&self, scene: &ImageGrid) -> Result<ImageGrid> {
        Model::predict(self, scene)
    }
}

/// Result of one forward/backward pass on a single sample.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub loss: f64,
    pub prediction: ImageGrid,
    /// dL/dy for the raw (unscaled) measurements.
    pub measurement: Vec<f64>,
    /// Gradients for every tensor of [`ReconParams::tensors`], same order.
    pub recon: Vec<Tensor>,
}

/// Loss and gradients of `mse(label, unet(expand(scale·y)))` w.r.t. y and the network.
pub fn reconstruction_grads(y: &MeasurementVector, recon: &ReconParams, label: &ImageGrid) -> Result<SampleGrads> {
    let scale = recon.input_scale;
    let scaled = MeasurementVector(y.values().iter().map(|v| v * scale).collect());
    let map = expand(&scaled, recon)?;
    let cache = unet_forward_cached(&map, recon)?;
    let prediction = cache.output();
    let loss = loss_mse(label, &prediction)?;
    let k = 2.0 / prediction.len() as f64;
    let upstream = ImageGrid::from_vec(
        prediction.height(),
        prediction.width(),
        prediction
            .data()
            .iter()
            .zip(label.data())
            .map(|(p, l)| k * (p - l))
            .collect(),
    )?;
    let (g_map, layer_grads) = unet_backward(&cache, recon, &upstream)?;
    let (g_we, g_be, g_scaled) = expand_backward(&scaled, recon, &g_map)?;
    let mut grads = vec![g_we, g_be];
    for (w, b) in layer_grads {
        grads.push(w);
        grads.push(b);
    }
    Ok(SampleGrads {
        loss,
        prediction,
        measurement: g_scaled.into_iter().map(|g| g * scale).collect(),
        recon: grads,
    })
}

/// Mutable training state: model, optimizer moments, progress and history.
#[derive(Debug, Clone)]
pub struct TrainSession {
    pub checkpoint: ModelCheckpoint,
}

impl TrainSession {
    pub fn new(dataset: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.manifest.canvas;
        let m = measurement_count(config.rate, n)?;
        let model = Model::init(n, m, config.seed)?;
        let hyper = AdamHyper::with_lr(config.lr);
        let optimizer = model
            .tensors()
            .iter()
            .map(|t| OptimizerState::new(t.shape(), hyper))
            .collect();
        Ok(Self {
            checkpoint: ModelCheckpoint {
                config,
                model,
                optimizer,
                epoch: 0,
                data_hash: dataset.manifest.digest(),
                history: TrainHistory::default(),
            },
        })
    }

    /// Continue from a checkpoint; the dataset must be the one it was trained on.
    pub fn resume(checkpoint: ModelCheckpoint, dataset: &Dataset) -> Result<Self> {
        let digest = dataset.manifest.digest();
        if checkpoint.data_hash != digest {
            return Err(param_err!(
                "checkpoint was trained on data {} but this dataset hashes to {digest}",
                checkpoint.data_hash
            ));
        }
        if checkpoint.model.n() != dataset.manifest.canvas {
            return Err(crate::error::dim_err!(
                "checkpoint canvas {} vs dataset canvas {}",
                checkpoint.model.n(),
                dataset.manifest.canvas
            ));
        }
        Ok(Self { checkpoint })
    }

    pub fn model(&self) -> &Model {
        &self.checkpoint.model
    }

    pub fn history(&self) -> &TrainHistory {
        &self.checkpoint.history
    }

    pub fn epoch(&self) -> usize {
        self.checkpoint.epoch
    }

    fn epoch_order(&self, train: &[usize]) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.checkpoint.config.seed);
        rng.set_stream(self.checkpoint.epoch as u64 + 1);
        let mut order = train.to_vec();
        order.shuffle(&mut rng);
        order
    }

    fn training_scene<'a>(&self, pair: &'a LabeledPair, index: usize) -> Result<std::borrow::Cow<'a, ImageGrid>> {
        let level = self.checkpoint.config.augment_pepper;
        if level == 0.0 {
            return Ok(std::borrow::Cow::Borrowed(&pair.scene));
        }
        let seed = self
            .checkpoint
            .config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(((self.checkpoint.epoch as u64) << 32) | index as u64);
        Ok(std::borrow::Cow::Owned(corrupt(
            &pair.scene,
            Corruption::Pepper,
            level,
            seed,
        )?))
    }

    /// One optimizer step on the given samples; returns the per-sample losses.
    pub fn step(&mut self, dataset: &Dataset, batch: &[usize]) -> Result<Vec<f64>> {
        let model = &self.checkpoint.model;
        let patterns = model.patterns()?;
        let mut sums: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut losses = Vec::with_capacity(batch.len());
        for &i in batch {
            let pair = &dataset.samples[i];
            let scene = self.training_scene(pair, i)?;
            let y = measure(&patterns, &scene)?;
            let g = reconstruction_grads(&y, &model.recon, &pair.label)?;
            sums[0].add_assign(&measure_backward(&g.measurement, &scene));
            for (acc, t) in sums[1..].iter_mut().zip(&g.recon) {
                acc.add_assign(t);
            }
            losses.push(g.loss);
        }
        let inv = 1.0 / batch.len() as f64;
        sums.iter_mut().for_each(|t| t.scale(inv));
        sums[0] = ste_grad(&sums[0], &model.latent)?;

        let ckpt = &mut self.checkpoint;
        for ((param, state), grad) in ckpt.model.tensors_mut().into_iter().zip(&mut ckpt.optimizer).zip(&sums) {
            state.update(param, grad)?;
        }
        ckpt.model.latent.clamp_unit();
        Ok(losses)
    }

    /// Train one epoch, validate, and append to the history.
    pub fn run_epoch(&mut self, dataset: &Dataset) -> Result<EpochRecord> {
        let train = dataset.manifest.indices(Split::Train);
        if train.is_empty() {
            return Err(param_err!("training split is empty"));
        }
        let order = self.epoch_order(&train);
        let epoch = self.checkpoint.epoch + 1;
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.checkpoint.config.batch_size).enumerate() {
            let losses = self.step(dataset, batch)?;
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            total += batch_loss;
        }
        let val = dataset.split(Split::Validation);
        let (mut vl, mut vp, mut vs) = (0.0, 0.0, 0.0);
        for pair in &val {
            let pred = self.checkpoint.model.predict(&pair.scene)?;
            vl += loss_mse(&pair.label, &pred)?;
            vp += psnr(&pair.label, &pred, 1.0)?;
            vs += ssim(&pair.label, &pred)?;
        }
        let nv = val.len().max(1) as f64;
        let record = EpochRecord {
            epoch,
            train_loss: total / order.len() as f64,
            val_loss: vl / nv,
            val_psnr: vp / nv,
            val_ssim: vs / nv,
        };
        self.checkpoint.history.push(record)?;
        self.checkpoint.epoch = epoch;
        Ok(record)
    }

    /// Run the remaining epochs of the configured schedule, writing periodic
    /// checkpoints as `checkpoint_epoch_<k>.spck` under `checkpoint_dir`.
    pub fn run(&mut self, dataset: &Dataset, checkpoint_dir: Option<&Path>) -> Result<()> {
        while self.checkpoint.epoch < self.checkpoint.config.epochs {
            self.run_epoch(dataset)?;
            let every = self.checkpoint.config.checkpoint_every;
            if let Some(dir) = checkpoint_dir {
                if every > 0 && self.checkpoint.epoch.is_multiple_of(every) {
                    write_checkpoint(
                        dir.join(format!("checkpoint_epoch_{}.spck", self.checkpoint.epoch)),
                        &self.checkpoint,
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Train from scratch for `config.epochs` epochs.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(ModelCheckpoint, TrainHistory)> {
    let mut session = TrainSession::new(dataset, config.clone())?;
    session.run(dataset, None)?;
    let history = session.checkpoint.history.clone();
    Ok((session.checkpoint, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gradcheck_components;
    use crate::scene::GenConfig;
    use rand::Rng;

    fn tiny_dataset(count: usize, seed: u64) -> Dataset {
        Dataset::generate(&GenConfig::new(32, count, seed)).unwrap()
    }

    #[test]
    fn mse_cases() {
        let a = ImageGrid::zeros(4, 4);
        let b = ImageGrid::filled(4, 4, 1.0);
        assert_eq!(loss_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_mse(&a, &b).unwrap(), 1.0);
        assert!(loss_mse(&a, &ImageGrid::zeros(4, 5)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ImageGrid::square(5, (0..25).map(|_| rng.gen()).collect()).unwrap();
        let y = ImageGrid::square(5, (0..25).map(|_| rng.gen()).collect()).unwrap();
        let mut oracle = 0.0;
        for r in 0..5 {
            for c in 0..5 {
                oracle += (x.get(r, c) - y.get(r, c)).powi(2);
            }
        }
        assert!((loss_mse(&x, &y).unwrap() - oracle / 25.0).abs() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                rate: 1.5,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                lr: -1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn composed_loss_gradcheck_over_patterns() {
        // continuous pattern entries, measurements computed as P·f
        let ds = tiny_dataset(10, 3);
        let pair = &ds.samples[0];
        let mut model = Model::init(32, 20, 7).unwrap();
        model.recon.input_scale = 1.0 / 32.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let point = Tensor::new(
            vec![20, 1024],
            (0..20 * 1024).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let f = |p: &Tensor| {
            let y: Vec<f64> = p
                .data()
                .chunks(1024)
                .map(|row| row.iter().zip(pair.scene.data()).map(|(a, b)| a * b).sum())
                .collect();
            let g = reconstruction_grads(&MeasurementVector(y), &model.recon, &pair.label)?;
            Ok((g.loss, measure_backward(&g.measurement, &pair.scene)))
        };
        let comps: Vec<usize> = (0..15).map(|_| rng.gen_range(0..point.len())).collect();
        let comps: Vec<usize> = comps
            .into_iter()
            .filter(|&c| pair.scene.data()[c % 1024] != 0.0)
            .collect();
        let r = gradcheck_components(f, &point, 1e-5, &comps).unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn train_forward_equals_deploy_path() {
        let ds = tiny_dataset(10, 4);
        let model = Model::init(32, 102, 1).unwrap();
        let pair = &ds.samples[2];
        let y = measure(&model.patterns().unwrap(), &pair.scene).unwrap();
        let g = reconstruction_grads(&y, &model.recon, &pair.label).unwrap();
        let deployed = model.predict(&pair.scene).unwrap();
        assert_eq!(g.prediction.data(), deployed.data());
    }

    #[test]
    fn one_small_step_decreases_sample_loss() {
        let ds = tiny_dataset(10, 5);
        for seed in 0..5 {
            let config = TrainConfig {
                lr: 1e-5,
                batch_size: 1,
                seed,
                ..Default::default()
            };
            let mut s = TrainSession::new(&ds, config).unwrap();
            let pair = &ds.samples[0];
            let before = loss_mse(&pair.label, &s.model().predict(&pair.scene).unwrap()).unwrap();
            s.step(&ds, &[0]).unwrap();
            let after = loss_mse(&pair.label, &s.model().predict(&pair.scene).unwrap()).unwrap();
            assert!(after < before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn latent_moves_and_history_is_deterministic() {
        let ds = tiny_dataset(12, 6);
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
            seed: 9,
            ..Default::default()
        };
        let init = Model::init(32, measurement_count(0.1, 32).unwrap(), 9).unwrap();
        let (a, ha) = train(&ds, &config).unwrap();
        let (_, hb) = train(&ds, &config).unwrap();
        assert_eq!(ha.to_csv(), hb.to_csv());
        let mut diff = a.model.latent.values().clone();
        diff.scale(-1.0);
        diff.add_assign(init.latent.values());
        assert!(diff.l2_norm() > 0.0);
        assert!(a.model.latent.values().data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let ds = tiny_dataset(12, 7);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 5,
            lr: 1e-3,
            seed: 3,
            ..Default::default()
        };
        let (full, _) = train(&ds, &config).unwrap();
        let mut first = TrainSession::new(&ds, config.clone()).unwrap();
        first.run_epoch(&ds).unwrap();
        let bytes = encode_checkpoint(&first.checkpoint).unwrap();
        let mut resumed = TrainSession::resume(decode_checkpoint(&bytes).unwrap(), &ds).unwrap();
        resumed.run(&ds, None).unwrap();
        assert_eq!(resumed.history(), &full.history);
        assert_eq!(resumed.model(), &full.model);
        assert!(TrainSession::resume(decode_checkpoint(&bytes).unwrap(), &tiny_dataset(12, 8)).is_err());
    }
}
