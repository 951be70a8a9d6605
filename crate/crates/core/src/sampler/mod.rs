//! Compressed sampling: binary ±1 patterns, the linear single-pixel
//! measurement, straight-through gradients, and DMD frame tiling.

mod pattern_file;

pub use pattern_file::{decode_spip, encode_spip, read_spip, spip_file_size, write_spip};

use rand::Rng;

use crate::error::{dim_err, param_err, Error, Result};
use crate::image::ImageGrid;
use crate::kernel::{Activation, CompensatedSum, LayerParams, Tensor};

/// Number of measurements for a sampling rate on an N×N image: `round(rate·N²)`.
pub fn measurement_count(rate: f64, side: usize) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(param_err!("sampling rate {rate} outside (0, 1]"));
    }
    let m = (rate * (side * side) as f64).round() as usize;
    if m == 0 {
        return Err(param_err!("sampling rate {rate} yields zero measurements for N={side}"));
    }
    Ok(m)
}

/// Real-valued trainable weights behind the binary patterns, M×N².
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWeights {
    m: usize,
    n: usize,
    values: Tensor,
}

impl LatentWeights {
    pub fn new(m: usize, n: usize, values: Tensor) -> Result<Self> {
        if values.shape() != [m, n * n] {
            return Err(dim_err!(
                "latent weights must be {m}×{}, got {:?}",
                n * n,
                values.shape()
            ));
        }
        Ok(Self { m, n, values })
    }

    /// Uniform on [-half_width, half_width].
    pub fn random_uniform(m: usize, n: usize, half_width: f64, rng: &mut impl Rng) -> Self {
        let data = (0..m * n * n)
            .map(|_| rng.gen_range(-half_width..=half_width))
            .collect();
        Self {
            m,
            n,
            values: Tensor::new(vec![m, n * n], data).expect("latent shape"),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn clamp_unit(&mut self) {
        self.values.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    }
}

/// M binary patterns with entries exactly −1 or +1, each N×N (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternStack {
    m: usize,
    n: usize,
    entries: Vec<i8>,
}

impl PatternStack {
    pub fn from_signs(m: usize, n: usize, entries: Vec<i8>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(param_err!("pattern stack needs M, N > 0"));
        }
        if entries.len() != m * n * n {
            return Err(dim_err!(
                "{m} patterns of {n}×{n} need {} entries, got {}",
                m * n * n,
                entries.len()
            ));
        }
        if let Some(i) = entries.iter().position(|&e| e != 1 && e != -1) {
            return Err(param_err!("entry {i} is {}, not ±1", entries[i]));
        }
        Ok(Self { m, n, entries })
    }

    pub fn random(m: usize, n: usize, rng: &mut impl Rng) -> Self {
        let entries = (0..m * n * n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        Self { m, n, entries }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn pattern(&self, index: usize) -> &[i8] {
        let len = self.n * self.n;
        &self.entries[index * len..(index + 1) * len]
    }

    /// The stack as a real M×N² tensor, e.g. to reinterpret it as latent weights.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.m, self.n * self.n],
            self.entries.iter().map(|&e| f64::from(e)).collect(),
        )
        .expect("pattern shape")
    }

    /// One pattern as a 0/1 image (+1 → white) for visual inspection.
    pub fn pattern_image(&self, index: usize) -> ImageGrid {
        let data = self
            .pattern(index)
            .iter()
            .map(|&e| if e > 0 { 1.0 } else { 0.0 })
            .collect();
        ImageGrid::square(self.n, data).expect("pattern image")
    }
}

/// Readings of one acquisition, one per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector(pub Vec<f64>);

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Sign with `sign(0) = +1`.
pub fn binarize(latent: &LatentWeights) -> Result<PatternStack> {
    let mut entries = Vec::with_capacity(latent.values.len());
    for (i, &v) in latent.values.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("latent weight {i} is not finite")));
        }
        entries.push(if v >= 0.0 { 1 } else { -1 });
    }
    Ok(PatternStack {
        m: latent.m,
        n: latent.n,
        entries,
    })
}

/// `y_m = ⟨Φ_m, vec(f)⟩` with row-major flattening.
pub fn measure(patterns: &PatternStack, image: &ImageGrid) -> Result<MeasurementVector> {
    let n = patterns.n;
    if image.height() != n || image.width() != n {
        return Err(dim_err!(
            "image {}x{} vs patterns {n}x{n}",
            image.height(),
            image.width()
        ));
    }
    let f = image.data();
    let len = n * n;
    let y = patterns
        .entries
        .chunks(len)
        .map(|row| {
            // accumulate positive and negative halves separately, then difference
            let (mut pos, mut neg) = (CompensatedSum::default(), CompensatedSum::default());
            for (&s, &v) in row.iter().zip(f) {
                if s > 0 {
                    pos.add(v);
                } else {
                    neg.add(v);
                }
            }
            pos.value() - neg.value()
        })
        .collect();
    Ok(MeasurementVector(y))
}

/// Gradient of a loss w.r.t. the pattern entries given `dL/dy` and the image: the outer product.
pub fn measure_backward(upstream: &[f64], image: &ImageGrid) -> Tensor {
    let f = image.data();
    let mut g = Vec::with_capacity(upstream.len() * f.len());
    for &dy in upstream {
        g.extend(f.iter().map(|&v| dy * v));
    }
    Tensor::new(vec![upstream.len(), f.len()], g).expect("outer product shape")
}

/// Straight-through estimator: pass the gradient where |latent| ≤ 1, zero elsewhere.
pub fn ste_grad(upstream: &Tensor, latent: &LatentWeights) -> Result<Tensor> {
    upstream.same_shape(&latent.values)?;
    let mut g = upstream.clone();
    for (gv, &lv) in g.data_mut().iter_mut().zip(latent.values.data()) {
        if lv.abs() > 1.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// The sampling stage seen as a convolution layer: M kernels of N×N, stride N,
/// no bias and no activation.
#[derive(Debug, Clone)]
pub struct SamplingLayer {
    params: LayerParams,
}

impl SamplingLayer {
    pub fn new(params: LayerParams) -> Result<Self> {
        if params.bias.is_some() {
            return Err(param_err!("sampling layer must not have a bias"));
        }
        if params.activation != Activation::None {
            return Err(param_err!("sampling layer must not have an activation"));
        }
        let (_, c, _) = params.dims()?;
        if c != 1 {
            return Err(dim_err!("sampling layer expects a single input channel, got {c}"));
        }
        Ok(Self { params })
    }

    pub fn from_patterns(patterns: &PatternStack) -> Self {
        let n = patterns.n;
        let w = patterns
            .to_tensor()
            .reshape(&[patterns.m, 1, n, n])
            .expect("kernel shape");
        Self {
            params: LayerParams {
                weights: w,
                bias: None,
                activation: Activation::None,
            },
        }
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }
}

/// A binary frame for a DMD, 1 = mirror on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmdFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl DmdFrame {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn to_image(&self) -> ImageGrid {
        ImageGrid::from_vec(
            self.height,
            self.width,
            self.data.iter().map(|&b| f64::from(b)).collect(),
        )
        .expect("frame image")
    }
}

/// Blow each pattern pixel up into a `factor`×`factor` block, centered on the canvas.
pub fn tile_for_dmd(pattern: &[i8], n: usize, factor: usize, width: usize, height: usize) -> Result<DmdFrame> {
    if pattern.len() != n * n {
        return Err(dim_err!("pattern has {} entries, expected {}", pattern.len(), n * n));
    }
    if factor == 0 {
        return Err(param_err!("tiling factor must be at least 1"));
    }
    let side = factor * n;
    if side > width || side > height {
        return Err(dim_err!(
            "{n}×{n} pattern at factor {factor} ({side} px) exceeds {width}×{height} canvas"
        ));
    }
    let left = (width - side) / 2;
    let top = (height - side) / 2;
    let mut data = vec![0u8; width * height];
    for r in 0..side {
        let row = &mut data[(top + r) * width + left..][..side];
        for (c, d) in row.iter_mut().enumerate() {
            *d = u8::from(pattern[(r / factor) * n + c / factor] > 0);
        }
    }
    Ok(DmdFrame { width, height, data })
}
