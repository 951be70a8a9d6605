//! Differentiable numerical kernels.
//!
//! Every operation here comes as a forward function plus an explicit backward
//! function taking the upstream gradient. Networks are assembled by hand from
//! these pieces; there is no tape. All arithmetic is `f64`.

mod activation;
mod adam;
mod conv;
mod gradcheck;
mod resample;

pub use activation::{activation_apply, activation_backward, Activation};
pub use adam::{adam_step, AdamHyper, OptimizerState};
pub use conv::{conv2d, conv2d_backward, conv2d_linear, ConvGrads, LayerParams};
pub use gradcheck::{gradcheck, gradcheck_components, gradcheck_with, GradCheckOptions, GradCheckReport, KINK_RATIO};
pub use resample::{resample2x, resample2x_backward, Resample};

use crate::error::{dim_err, param_err, Result};

/// Neumaier-compensated running sum; the result is within a few ulps of the exact total.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    values.into_iter().for_each(|v| acc.add(v));
    acc.value()
}

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(param_err!("tensor extents must be positive: {shape:?}"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(dim_err!("shape {shape:?} holds {expected} values, got {}", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(dim_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Interpret as C×H×W, returning the three extents.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(dim_err!("expected a C×H×W tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(dim_err!("shape {:?} vs {:?}", self.shape, other.shape))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Stack C×H×W tensors with equal spatial extents along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let (_, h, w) = parts
            .first()
            .ok_or_else(|| param_err!("concat of zero tensors"))?
            .chw()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.chw()?;
            if (ph, pw) != (h, w) {
                return Err(dim_err!("concat spatial mismatch: {h}x{w} vs {ph}x{pw}"));
            }
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Tensor::new(vec![channels, h, w], data)
    }

    /// Inverse of [`Tensor::concat_channels`]: split into pieces with the given channel counts.
    pub fn split_channels(&self, counts: &[usize]) -> Result<Vec<Tensor>> {
        let (c, h, w) = self.chw()?;
        if counts.iter().sum::<usize>() != c {
            return Err(dim_err!("split {counts:?} does not sum to {c} channels"));
        }
        let plane = h * w;
        let mut start = 0;
        counts
            .iter()
            .map(|&n| {
                let t = Tensor::new(vec![n, h, w], self.data[start * plane..(start + n) * plane].to_vec());
                start += n;
                t
            })
            .collect()
    }
}
