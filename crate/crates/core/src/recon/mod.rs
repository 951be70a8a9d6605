//! Reconstruction network: a dense expansion of the measurement vector to an
//! N×N map followed by a three-level U-net ending in a sigmoid.

mod unet;

pub use unet::{unet_backward, unet_forward, unet_forward_cached, UnetCache, UNET_LAYERS};

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::image::ImageGrid;
use crate::kernel::{Activation, LayerParams, Tensor};
use crate::sampler::MeasurementVector;

/// Channel widths of the three encoder levels; the bottleneck keeps the last width.
pub const LEVEL_WIDTHS: [usize; 3] = [16, 32, 64];

/// Initial bias of the output layer: the logit of 0.1, so the untrained network
/// starts near the mean of sparse target-only labels rather than at 0.5.
pub const HEAD_BIAS_INIT: f64 = -2.197_224_577_336_219_4;

/// Parameters of the reconstruction sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconParams {
    n: usize,
    m: usize,
    /// N²×M.
    pub expand_weight: Tensor,
    /// Length N².
    pub expand_bias: Tensor,
    /// enc1, enc2, enc3, bottleneck, dec3, dec2, dec1, head.
    pub unet: Vec<LayerParams>,
    /// Fixed factor applied to raw readings before expansion. Not trained.
    pub input_scale: f64,
}

/// (in, out, kernel, activation) for every U-net layer, in storage order.
pub fn unet_layout() -> [(usize, usize, usize, Activation); UNET_LAYERS] {
    let [w1, w2, w3] = LEVEL_WIDTHS;
    let relu = Activation::Relu;
    [
        (1, w1, 3, relu),
        (w1, w2, 3, relu),
        (w2, w3, 3, relu),
        (w3, w3, 3, relu),
        (w3 + w3, w3, 3, relu),
        (w3 + w2, w2, 3, relu),
        (w2 + w1, w1, 3, relu),
        (w1, 1, 1, Activation::Sigmoid),
    ]
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

impl ReconParams {
    /// Fan-in scaled uniform weights `U[±√(6/fan_in)]`; zero biases except the
    /// output layer, which starts at [`HEAD_BIAS_INIT`].
    pub fn init(n: usize, m: usize, rng: &mut impl Rng) -> Result<Self> {
        check_side(n)?;
        if m == 0 {
            return Err(dim_err!("reconstruction needs at least one measurement"));
        }
        let expand_weight = uniform_tensor(&[n * n, m], (6.0 / m as f64).sqrt(), rng);
        let unet = unet_layout()
            .iter()
            .map(|&(c, o, k, act)| {
                let w = uniform_tensor(&[o, c, k, k], (6.0 / (c * k * k) as f64).sqrt(), rng);
                LayerParams::new(w, Some(Tensor::zeros(&[o])), act)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut unet = unet;
        if let Some(b) = unet.last_mut().and_then(|l| l.bias.as_mut()) {
            b.data_mut().fill(HEAD_BIAS_INIT);
        }
        Ok(Self {
            n,
            m,
            expand_weight,
            expand_bias: Tensor::zeros(&[n * n]),
            unet,
            input_scale: 1.0 / n as f64,
        })
    }

    /// Every parameter set to zero and unit input scale.
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        check_side(n)?;
        let unet = unet_layout()
            .iter()
            .map(|&(c, o, k, act)| LayerParams::new(Tensor::zeros(&[o, c, k, k]), Some(Tensor::zeros(&[o])), act))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(n, m, Tensor::zeros(&[n * n, m]), Tensor::zeros(&[n * n]), unet, 1.0)
    }

    /// Assemble from explicit tensors, checking every shape.
    pub fn from_parts(
        n: usize,
        m: usize,
        expand_weight: Tensor,
        expand_bias: Tensor,
        unet: Vec<LayerParams>,
        input_scale: f64,
    ) -> Result<Self> {
        check_side(n)?;
        let p = Self {
            n,
            m,
            expand_weight,
            expand_bias,
            unet,
            input_scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (n2, m) = (self.n * self.n, self.m);
        if self.expand_weight.shape() != [n2, m] {
            return Err(dim_err!(
                "expansion weight must be {n2}×{m}, got {:?}",
                self.expand_weight.shape()
            ));
        }
        if self.expand_bias.shape() != [n2] {
            return Err(dim_err!("expansion bias must have length {n2}"));
        }
        if self.unet.len() != UNET_LAYERS {
            return Err(dim_err!("U-net needs {UNET_LAYERS} layers, got {}", self.unet.len()));
        }
        for (i, (layer, &(c, o, k, act))) in self.unet.iter().zip(unet_layout().iter()).enumerate() {
            let dims = layer.dims()?;
            if dims != (o, c, k) || layer.activation != act || layer.bias.is_none() {
                return Err(dim_err!("U-net layer {i} is {dims:?}, expected {:?}", (o, c, k)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// All trainable tensors in a fixed order: expansion weight and bias, then
    /// weights and bias of each U-net layer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.expand_weight, &self.expand_bias];
        for l in &self.unet {
            v.push(&l.weights);
            v.push(l.bias.as_ref().expect("U-net layers carry a bias"));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.expand_weight, &mut self.expand_bias];
        for l in &mut self.unet {
            v.push(&mut l.weights);
            v.push(l.bias.as_mut().expect("U-net layers carry a bias"));
        }
        v
    }

    /// Full reconstruction `unet(expand(scale · y))`.
    pub fn reconstruct(&self, y: &MeasurementVector) -> Result<ImageGrid> {
        let scaled = MeasurementVector(y.values().iter().map(|v| v * self.input_scale).collect());
        let map = expand(&scaled, self)?;
        unet_forward(&map, self)
    }
}

fn check_side(n: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(8) {
        return Err(dim_err!("image side {n} must be a positive multiple of 8"));
    }
    Ok(())
}

/// `reshape(W_e·y + b_e, N×N)`.
pub fn expand(y: &MeasurementVector, params: &ReconParams) -> Result<ImageGrid> {
    if y.len() != params.m {
        return Err(dim_err!("expected {} measurements, got {}", params.m, y.len()));
    }
    let m = params.m;
    let w = params.expand_weight.data();
    let yv = y.values();
    let data = w
        .chunks(m)
        .zip(params.expand_bias.data())
        .map(|(row, &b)| b + row.iter().zip(yv).map(|(a, v)| a * v).sum::<f64>())
        .collect();
    ImageGrid::square(params.n, data)
}

/// Gradients of [`expand`]: (dW_e, db_e, dy) from the upstream map gradient.
pub fn expand_backward(
    y: &MeasurementVector,
    params: &ReconParams,
    upstream: &ImageGrid,
) -> Result<(Tensor, Tensor, Vec<f64>)> {
    if y.len() != params.m || upstream.len() != params.n * params.n {
        return Err(dim_err!("expand backward shape mismatch"));
    }
    let m = params.m;
    let g = upstream.data();
    let yv = y.values();
    let mut dw = Vec::with_capacity(g.len() * m);
    let mut dy = vec![0.0; m];
    for (&gi, row) in g.iter().zip(params.expand_weight.data().chunks(m)) {
        dw.extend(yv.iter().map(|&v| gi * v));
        for (d, &a) in dy.iter_mut().zip(row) {
            *d += gi * a;
        }
    }
    Ok((
        Tensor::new(vec![g.len(), m], dw)?,
        Tensor::new(vec![g.len()], g.to_vec())?,
        dy,
    ))
}
