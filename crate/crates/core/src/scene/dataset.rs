//! On-disk datasets: PGM pairs plus a tab-separated manifest.
//!
//! ```text
//! count=<H>
//! canvas=<N>
//! seed=<master seed>
//! occluded=<comma-separated indices, possibly empty>
//! <index>\t<scene path>\t<label path>\t<train|validation>
//! ```
//!
//! Paths are relative to the manifest's directory. Each scene may have a
//! distractor mask next to it named `mask_<index>.pgm`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GenConfig, LabeledPair};
use crate::error::{param_err, Error, Result};
use crate::image::{read_pgm, write_pgm, ImageGrid};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            _ => Err(param_err!("unknown split '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: usize,
    pub scene_path: String,
    pub label_path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub count: usize,
    pub canvas: usize,
    pub seed: u64,
    pub occluded: Vec<usize>,
    pub entries: Vec<ManifestEntry>,
    /// Directory the relative paths resolve against.
    pub root: PathBuf,
}

/// Number of validation samples for a dataset of `count`: 10%, at least one.
pub fn validation_count(count: usize) -> usize {
    ((count as f64 * 0.1).round() as usize).clamp(1, count.saturating_sub(1).max(1))
}

impl DatasetManifest {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.index)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let occluded: Vec<String> = self.occluded.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "count={}", self.count);
        let _ = writeln!(s, "canvas={}", self.canvas);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "occluded={}", occluded.join(","));
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                e.index,
                e.scene_path,
                e.label_path,
                e.split.as_str()
            );
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let bad = |line: usize, why: &str| param_err!("manifest line {}: {why}", line + 1);
        let (mut count, mut canvas, mut seed, mut occluded) = (None, None, None, Vec::new());
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=').filter(|_| !line.contains('\t')) {
                match key {
                    "count" => count = Some(value.parse().map_err(|_| bad(ln, "bad count"))?),
                    "canvas" => canvas = Some(value.parse().map_err(|_| bad(ln, "bad canvas"))?),
                    "seed" => seed = Some(value.parse().map_err(|_| bad(ln, "bad seed"))?),
                    "occluded" => {
                        occluded = value
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(|s| s.parse().map_err(|_| bad(ln, "bad occluded index")))
                            .collect::<Result<_>>()?
                    }
                    _ => return Err(bad(ln, "unknown header key")),
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(ln, "expected 4 tab-separated columns"));
            }
            entries.push(ManifestEntry {
                index: cols[0].parse().map_err(|_| bad(ln, "bad index"))?,
                scene_path: cols[1].to_string(),
                label_path: cols[2].to_string(),
                split: cols[3].parse()?,
            });
        }
        let count: usize = count.ok_or_else(|| param_err!("manifest lacks count="))?;
        if entries.len() != count {
            return Err(param_err!("manifest lists {} records but count={count}", entries.len()));
        }
        if entries.iter().enumerate().any(|(i, e)| e.index != i) {
            return Err(param_err!("manifest indices must run 0..{count} in order"));
        }
        Ok(Self {
            count,
            canvas: canvas.ok_or_else(|| param_err!("manifest lacks canvas="))?,
            seed: seed.ok_or_else(|| param_err!("manifest lacks seed="))?,
            occluded,
            entries,
            root: root.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    fn mask_path(&self, index: usize) -> PathBuf {
        self.root.join(format!("mask_{}.pgm", pad_index(index, self.count)))
    }

    /// Digest of the manifest text, used to tie checkpoints to their data.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn pad_index(index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(4);
    format!("{index:0width$}")
}

/// A manifest with its pixel data loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<LabeledPair>,
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        Self::from_manifest(DatasetManifest::load(manifest_path)?)
    }

    pub fn from_manifest(manifest: DatasetManifest) -> Result<Self> {
        let n = manifest.canvas;
        let mut samples = Vec::with_capacity(manifest.count);
        for e in &manifest.entries {
            let scene = read_pgm(manifest.root.join(&e.scene_path))?;
            let label = read_pgm(manifest.root.join(&e.label_path))?;
            if scene.height() != n || scene.width() != n || !scene.same_shape(&label) {
                return Err(param_err!("sample {} is not {n}×{n}", e.index));
            }
            let mask_path = manifest.mask_path(e.index);
            let distractor_mask = if mask_path.exists() {
                read_pgm(&mask_path)?
            } else {
                ImageGrid::zeros(n, n)
            };
            samples.push(LabeledPair {
                scene,
                label,
                distractor_mask,
                occluded: manifest.occluded.contains(&e.index),
            });
        }
        Ok(Self { manifest, samples })
    }

    /// Build from in-memory pairs with the standard 90/10 split (no files involved).
    pub fn in_memory(pairs: Vec<LabeledPair>, seed: u64) -> Result<Self> {
        let count = pairs.len();
        let canvas = pairs
            .first()
            .map(|p| p.scene.height())
            .ok_or_else(|| param_err!("empty dataset"))?;
        let n_val = validation_count(count);
        let entries = (0..count)
            .map(|i| ManifestEntry {
                index: i,
                scene_path: format!("scene_{}.pgm", pad_index(i, count)),
                label_path: format!("label_{}.pgm", pad_index(i, count)),
                split: if i < count - n_val {
                    Split::Train
                } else {
                    Split::Validation
                },
            })
            .collect();
        let occluded = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.occluded)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            manifest: DatasetManifest {
                count,
                canvas,
                seed,
                occluded,
                entries,
                root: PathBuf::new(),
            },
            samples: pairs,
        })
    }

    pub fn generate(config: &GenConfig) -> Result<Self> {
        Self::in_memory(config.render_all()?, config.seed)
    }

    pub fn split(&self, split: Split) -> Vec<&LabeledPair> {
        self.manifest
            .indices(split)
            .into_iter()
            .map(|i| &self.samples[i])
            .collect()
    }

    /// Quantize through 8 bits, exactly as a write/read cycle would.
    pub fn quantized(mut self) -> Self {
        for p in &mut self.samples {
            for img in [&mut p.scene, &mut p.label, &mut p.distractor_mask] {
                *img = ImageGrid::from_u8(img.height(), img.width(), &img.to_u8()).expect("same shape");
            }
        }
        self
    }

    /// Write PGMs and the manifest under `dir`.
    pub fn write(&mut self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.manifest.root = dir.to_path_buf();
        for (e, p) in self.manifest.entries.iter().zip(&self.samples) {
            write_pgm(dir.join(&e.scene_path), &p.scene)?;
            write_pgm(dir.join(&e.label_path), &p.label)?;
            write_pgm(self.manifest.mask_path(e.index), &p.distractor_mask)?;
        }
        let path = dir.join(MANIFEST_FILE);
        self.manifest.write(&path)?;
        Ok(path)
    }
}

/// Render a dataset and write it under `dir`; returns the manifest.
pub fn gen_dataset(config: &GenConfig, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let mut ds = Dataset::generate(config)?;
    ds.write(dir)?;
    Ok(ds.manifest)
}
