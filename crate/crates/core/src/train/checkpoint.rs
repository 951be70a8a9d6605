//! "SPCK" checkpoint files.
//!
//! ```text
//! "SPCK" | u32 version | u32 header_len | header (UTF-8, header_len bytes) | payload
//! ```
//!
//! The header holds `key=value` lines (config echo, progress, data hash,
//! history rows) followed by one `array <name> f64 <d0>x<d1>... offset=<o>`
//! line per tensor; offsets count bytes from the start of the payload, which
//! is the concatenation of the arrays as little-endian f64.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EpochRecord, Model, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::kernel::{AdamHyper, LayerParams, OptimizerState, Tensor};
use crate::recon::{unet_layout, ReconParams};
use crate::sampler::LatentWeights;

pub const SPCK_MAGIC: &[u8; 4] = b"SPCK";
pub const SPCK_VERSION: u32 = 1;
const PRELUDE: usize = 12;

/// Everything needed to deploy a model or continue training it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: TrainConfig,
    pub model: Model,
    /// One Adam state per tensor of [`Model::tensors`].
    pub optimizer: Vec<OptimizerState>,
    /// Completed epochs.
    pub epoch: usize,
    /// Digest of the training manifest.
    pub data_hash: String,
    pub history: TrainHistory,
}

fn array_names(layers: usize) -> Vec<String> {
    let mut names = vec!["latent".to_string(), "expand_weight".into(), "expand_bias".into()];
    for i in 0..layers {
        names.push(format!("unet.{i}.weight"));
        names.push(format!("unet.{i}.bias"));
    }
    names
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn encode_checkpoint(ck: &ModelCheckpoint) -> Result<Vec<u8>> {
    let tensors = ck.model.tensors();
    if ck.optimizer.len() != tensors.len() {
        return Err(crate::error::dim_err!(
            "{} optimizer states for {} tensors",
            ck.optimizer.len(),
            tensors.len()
        ));
    }
    let step = ck.optimizer.first().map_or(0, |s| s.step);
    let hyper = ck
        .optimizer
        .first()
        .map_or_else(|| AdamHyper::with_lr(ck.config.lr), |s| s.hyper);
    if ck.optimizer.iter().any(|s| s.step != step || s.hyper != hyper) {
        return Err(Error::Parameter(
            "optimizer states disagree on step or hyperparameters".into(),
        ));
    }

    let c = &ck.config;
    let mut h = String::new();
    let _ = writeln!(h, "n={}", ck.model.n());
    let _ = writeln!(h, "m={}", ck.model.m());
    let _ = writeln!(h, "epoch={}", ck.epoch);
    let _ = writeln!(h, "data_hash={}", ck.data_hash);
    let _ = writeln!(h, "input_scale={:?}", ck.model.recon.input_scale);
    let _ = writeln!(h, "config.rate={:?}", c.rate);
    let _ = writeln!(h, "config.epochs={}", c.epochs);
    let _ = writeln!(h, "config.batch_size={}", c.batch_size);
    let _ = writeln!(h, "config.lr={:?}", c.lr);
    let _ = writeln!(h, "config.seed={}", c.seed);
    let _ = writeln!(h, "config.loss={}", c.loss.as_str());
    let _ = writeln!(h, "config.checkpoint_every={}", c.checkpoint_every);
    let _ = writeln!(h, "config.augment_pepper={:?}", c.augment_pepper);
    let _ = writeln!(h, "adam.lr={:?}", hyper.lr);
    let _ = writeln!(h, "adam.beta1={:?}", hyper.beta1);
    let _ = writeln!(h, "adam.beta2={:?}", hyper.beta2);
    let _ = writeln!(h, "adam.epsilon={:?}", hyper.epsilon);
    let _ = writeln!(h, "adam.step={step}");
    for r in &ck.history.records {
        let _ = writeln!(h, "history={}", r.to_row());
    }

    let names = array_names(ck.model.recon.unet.len());
    let mut arrays: Vec<(String, &Tensor)> = names.into_iter().zip(tensors.iter().copied()).collect();
    for (k, s) in ck.optimizer.iter().enumerate() {
        arrays.push((format!("adam.{k}.m"), &s.first_moment));
        arrays.push((format!("adam.{k}.v"), &s.second_moment));
    }
    let mut offset = 0usize;
    let mut payload = Vec::new();
    for (name, t) in &arrays {
        let _ = writeln!(h, "array {name} f64 {} offset={offset}", shape_text(t.shape()));
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len() * 8;
    }

    let mut out = Vec::with_capacity(PRELUDE + h.len() + payload.len());
    out.extend_from_slice(SPCK_MAGIC);
    out.extend_from_slice(&SPCK_VERSION.to_le_bytes());
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(h.as_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

struct ArrayEntry {
    shape: Vec<usize>,
    offset: usize,
    line_offset: u64,
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    if bytes.len() < PRELUDE {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint prelude"));
    }
    if &bytes[..4] != SPCK_MAGIC {
        return Err(Error::format(0, "missing SPCK magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != SPCK_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {}", word(4))));
    }
    let header_len = word(8) as usize;
    let payload_start = PRELUDE + header_len;
    if bytes.len() < payload_start {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint header"));
    }
    let header = std::str::from_utf8(&bytes[PRELUDE..payload_start])
        .map_err(|e| Error::format((PRELUDE + e.valid_up_to()) as u64, "header is not UTF-8"))?;

    let mut keys: BTreeMap<&str, (&str, u64)> = BTreeMap::new();
    let mut history = TrainHistory::default();
    let mut arrays: BTreeMap<String, ArrayEntry> = BTreeMap::new();
    let mut pos = PRELUDE as u64;
    for line in header.lines() {
        let here = pos;
        pos += line.len() as u64 + 1;
        if let Some(rest) = line.strip_prefix("array ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let bad = || Error::format(here, format!("bad array line '{line}'"));
            if parts.len() != 4 || parts[1] != "f64" {
                return Err(bad());
            }
            let shape = parts[2]
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            let offset = parts[3]
                .strip_prefix("offset=")
                .and_then(|o| o.parse().ok())
                .ok_or_else(bad)?;
            arrays.insert(
                parts[0].to_string(),
                ArrayEntry {
                    shape,
                    offset,
                    line_offset: here,
                },
            );
        } else if let Some(row) = line.strip_prefix("history=") {
            let rec = EpochRecord::parse_row(row).map_err(|e| Error::format(here, e.to_string()))?;
            history.push(rec).map_err(|e| Error::format(here, e.to_string()))?;
        } else if let Some((k, v)) = line.split_once('=') {
            keys.insert(k, (v, here));
        } else if !line.is_empty() {
            return Err(Error::format(here, format!("unrecognized header line '{line}'")));
        }
    }

    fn get<T: std::str::FromStr>(keys: &BTreeMap<&str, (&str, u64)>, key: &str) -> Result<T> {
        let (v, at) = keys
            .get(key)
            .ok_or_else(|| Error::format(PRELUDE as u64, format!("header lacks '{key}'")))?;
        v.parse()
            .map_err(|_| Error::format(*at, format!("bad value for '{key}'")))
    }

    let payload = &bytes[payload_start..];
    let mut expected_end = 0usize;
    let mut take = |name: &str| -> Result<Tensor> {
        let e = arrays
            .get(name)
            .ok_or_else(|| Error::format(PRELUDE as u64, format!("missing array '{name}'")))?;
        let count: usize = e.shape.iter().product();
        if e.offset != expected_end {
            return Err(Error::format(
                e.line_offset,
                format!("array '{name}' is not contiguous"),
            ));
        }
        let end = e.offset + count * 8;
        if end > payload.len() {
            return Err(Error::format(
                bytes.len() as u64,
                format!("payload truncated inside '{name}'"),
            ));
        }
        expected_end = end;
        let data = payload[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(e.shape.clone(), data).map_err(|err| Error::format(e.line_offset, err.to_string()))
    };

    let n: usize = get(&keys, "n")?;
    let m: usize = get(&keys, "m")?;
    let latent = LatentWeights::new(m, n, take("latent")?)?;
    let expand_weight = take("expand_weight")?;
    let expand_bias = take("expand_bias")?;
    let mut unet = Vec::new();
    for (i, &(_, _, _, act)) in unet_layout().iter().enumerate() {
        let w = take(&format!("unet.{i}.weight"))?;
        let b = take(&format!("unet.{i}.bias"))?;
        unet.push(LayerParams::new(w, Some(b), act)?);
    }
    let recon = ReconParams::from_parts(n, m, expand_weight, expand_bias, unet, get(&keys, "input_scale")?)?;
    let model = Model { latent, recon };

    let hyper = AdamHyper {
        lr: get(&keys, "adam.lr")?,
        beta1: get(&keys, "adam.beta1")?,
        beta2: get(&keys, "adam.beta2")?,
        epsilon: get(&keys, "adam.epsilon")?,
    };
    let step: u64 = get(&keys, "adam.step")?;
    let mut optimizer = Vec::new();
    for k in 0..model.tensors().len() {
        let first_moment = take(&format!("adam.{k}.m"))?;
        let second_moment = take(&format!("adam.{k}.v"))?;
        optimizer.push(OptimizerState {
            step,
            first_moment,
            second_moment,
            hyper,
        });
    }
    if arrays.len() != 3 + 2 * crate::recon::UNET_LAYERS + 2 * optimizer.len() {
        return Err(Error::format(PRELUDE as u64, "unexpected extra arrays in checkpoint"));
    }
    if expected_end != payload.len() {
        return Err(Error::format(
            (payload_start + expected_end) as u64,
            "trailing bytes after payload",
        ));
    }

    let config = TrainConfig {
        rate: get(&keys, "config.rate")?,
        epochs: get(&keys, "config.epochs")?,
        batch_size: get(&keys, "config.batch_size")?,
        lr: get(&keys, "config.lr")?,
        seed: get(&keys, "config.seed")?,
        loss: get(&keys, "config.loss")?,
        checkpoint_every: get(&keys, "config.checkpoint_every")?,
        augment_pepper: get(&keys, "config.augment_pepper")?,
    };
    Ok(ModelCheckpoint {
        config,
        model,
        optimizer,
        epoch: get(&keys, "epoch")?,
        data_hash: get(&keys, "data_hash")?,
        history,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &ModelCheckpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
