use super::{activation_backward, Activation, Tensor};
use crate::error::{dim_err, param_err, Result};

/// Weights, optional bias and activation of one convolution layer.
///
/// `weights` is O×C×k×k, `bias` (when present) has length O.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Option<Tensor>,
    pub activation: Activation,
}

impl LayerParams {
    pub fn new(weights: Tensor, bias: Option<Tensor>, activation: Activation) -> Result<Self> {
        let p = Self {
            weights,
            bias,
            activation,
        };
        p.dims()?;
        Ok(p)
    }

    /// (out_channels, in_channels, kernel)
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (o, c, k) = match self.weights.shape()[..] {
            [o, c, kh, kw] if kh == kw => (o, c, kh),
            _ => return Err(dim_err!("conv weights must be O×C×k×k, got {:?}", self.weights.shape())),
        };
        if let Some(b) = &self.bias {
            if b.len() != o {
                return Err(dim_err!("bias length {} != output channels {o}", b.len()));
            }
        }
        Ok((o, c, k))
    }
}

/// Gradients of a convolution layer.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

fn geometry(input: &Tensor, params: &LayerParams, stride: usize, pad: usize) -> Result<Geometry> {
    let (c, h, w) = input.chw()?;
    let (o, wc, k) = params.dims()?;
    if stride == 0 {
        return Err(param_err!("stride must be at least 1"));
    }
    if wc != c {
        return Err(dim_err!("input has {c} channels, kernel expects {wc} (axis 0)"));
    }
    if k > h + 2 * pad || k > w + 2 * pad {
        return Err(dim_err!(
            "kernel {k} exceeds padded input {}x{} (axes 1,2)",
            h + 2 * pad,
            w + 2 * pad
        ));
    }
    Ok(Geometry {
        c,
        h,
        w,
        o,
        k,
        stride,
        pad,
        ho: (h + 2 * pad - k) / stride + 1,
        wo: (w + 2 * pad - k) / stride + 1,
    })
}

fn im2col(input: &[f64], g: &Geometry) -> Vec<f64> {
    let p = g.ho * g.wo;
    let mut cols = vec![0.0; g.c * g.k * g.k * p];
    for c in 0..g.c {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut cols[((c * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..][..g.w];
                    let dst = &mut row[oy * g.wo..][..g.wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &Geometry) -> Vec<f64> {
    let p = g.ho * g.wo;
    let mut out = vec![0.0; g.c * g.h * g.w];
    for c in 0..g.c {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((c * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..][..g.w];
                    for (ox, &v) in row[oy * g.wo..][..g.wo].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Strided matrix view: (data, row stride, column stride).
type View<'a> = (&'a [f64], usize, usize);

/// `c = a·b + beta·c` for an m×k view `a`, a k×n view `b` and a row-major m×n `c`.
fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: &mut [f64]) {
    let (a, rsa, csa) = a;
    let (b, rsb, csb) = b;
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Convolution without the activation: `W∗f + b`.
pub fn conv2d_linear(input: &Tensor, params: &LayerParams, stride: usize, pad: usize) -> Result<Tensor> {
    let g = geometry(input, params, stride, pad)?;
    let p = g.ho * g.wo;
    let kk = g.c * g.k * g.k;
    let mut out = vec![0.0; g.o * p];
    if let Some(b) = &params.bias {
        for (row, &bv) in out.chunks_mut(p).zip(b.data()) {
            row.fill(bv);
        }
    }
    let beta = if params.bias.is_some() { 1.0 } else { 0.0 };
    if g.k == 1 && g.stride == 1 && g.pad == 0 {
        gemm(
            g.o,
            kk,
            p,
            (params.weights.data(), kk, 1),
            (input.data(), p, 1),
            beta,
            &mut out,
        );
    } else {
        let cols = im2col(input.data(), &g);
        gemm(
            g.o,
            kk,
            p,
            (params.weights.data(), kk, 1),
            (&cols, p, 1),
            beta,
            &mut out,
        );
    }
    Tensor::new(vec![g.o, g.ho, g.wo], out)
}

/// `σ(W∗f + b)` with zero padding.
pub fn conv2d(input: &Tensor, params: &LayerParams, stride: usize, pad: usize) -> Result<Tensor> {
    let mut out = conv2d_linear(input, params, stride, pad)?;
    if params.activation != Activation::None {
        let act = params.activation;
        out.data_mut().iter_mut().for_each(|v| *v = act.eval(*v));
    }
    Ok(out)
}

/// Backward pass of [`conv2d`]. `output` is the forward result (post-activation).
pub fn conv2d_backward(
    input: &Tensor,
    params: &LayerParams,
    stride: usize,
    pad: usize,
    output: &Tensor,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    let g = geometry(input, params, stride, pad)?;
    upstream.same_shape(output)?;
    if output.shape() != [g.o, g.ho, g.wo] {
        return Err(dim_err!(
            "output shape {:?} does not match conv geometry {:?}",
            output.shape(),
            [g.o, g.ho, g.wo]
        ));
    }
    let p = g.ho * g.wo;
    let kk = g.c * g.k * g.k;
    let gpre = activation_backward(output, upstream, params.activation);
    let gd = gpre.data();

    let bias = params.bias.as_ref().map(|_| {
        let sums = gd.chunks(p).map(|row| row.iter().sum()).collect();
        Tensor::new(vec![g.o], sums).expect("bias shape")
    });

    let direct = g.k == 1 && g.stride == 1 && g.pad == 0;
    let cols_owned;
    let cols: &[f64] = if direct {
        input.data()
    } else {
        cols_owned = im2col(input.data(), &g);
        &cols_owned
    };

    let mut dw = vec![0.0; g.o * kk];
    gemm(g.o, p, kk, (gd, p, 1), (cols, 1, p), 0.0, &mut dw);

    let mut dcols = vec![0.0; kk * p];
    gemm(kk, g.o, p, (params.weights.data(), 1, kk), (gd, p, 1), 0.0, &mut dcols);
    let dinput = if direct { dcols } else { col2im(&dcols, &g) };

    Ok(ConvGrads {
        input: Tensor::new(vec![g.c, g.h, g.w], dinput)?,
        weights: Tensor::new(params.weights.shape().to_vec(), dw)?,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop convolution, kept independent of im2col/GEMM.
    fn naive_conv(input: &Tensor, p: &LayerParams, stride: usize, pad: usize) -> Tensor {
        let (c, h, w) = input.chw().unwrap();
        let (o, _, k) = p.dims().unwrap();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let wt = p.weights.data();
        let x = input.data();
        let mut out = vec![0.0; o * ho * wo];
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[oc]);
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += wt[((oc * c + ic) * k + ky) * k + kx]
                                        * x[(ic * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(oc * ho + oy) * wo + ox] = p.activation.eval(acc);
                }
            }
        }
        Tensor::new(vec![o, ho, wo], out).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[1, 5, 7], &mut rng);
        let p = LayerParams::new(Tensor::filled(&[1, 1, 1, 1], 1.0), None, Activation::None).unwrap();
        assert_eq!(conv2d(&x, &p, 1, 0).unwrap(), x);
    }

    #[test]
    fn all_ones_window_sums() {
        let x = Tensor::filled(&[1, 3, 3], 1.0);
        let p = LayerParams::new(Tensor::filled(&[1, 1, 3, 3], 1.0), None, Activation::None).unwrap();
        let y = conv2d(&x, &p, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[1, 5, 5], &mut rng);
        let p = LayerParams::new(random(&[1, 1, 3, 3], &mut rng), None, Activation::None).unwrap();
        let (a, b) = (conv2d(&x, &p, 1, 0).unwrap(), naive_conv(&x, &p, 1, 0));
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_oracle_with_stride_pad_bias_and_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (2, 0, 2), (1, 2, 5), (3, 1, 3), (1, 0, 1)] {
            let x = random(&[3, 9, 8], &mut rng);
            let p = LayerParams::new(
                random(&[4, 3, k, k], &mut rng),
                Some(random(&[4], &mut rng)),
                Activation::Relu,
            )
            .unwrap();
            let (a, b) = (conv2d(&x, &p, stride, pad).unwrap(), naive_conv(&x, &p, stride, pad));
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12, "stride {stride} pad {pad} k {k}");
            }
        }
    }

    #[test]
    fn output_extent_formula() {
        let x = Tensor::zeros(&[1, 10, 7]);
        let p = LayerParams::new(Tensor::zeros(&[2, 1, 3, 3]), None, Activation::None).unwrap();
        let y = conv2d(&x, &p, 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, (10 + 2 - 3) / 2 + 1, (7 + 2 - 3) / 2 + 1]);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let wrong_c = LayerParams::new(Tensor::zeros(&[1, 3, 3, 3]), None, Activation::None).unwrap();
        assert!(conv2d(&x, &wrong_c, 1, 0).is_err());
        let big = LayerParams::new(Tensor::zeros(&[1, 2, 7, 7]), None, Activation::None).unwrap();
        assert!(conv2d(&x, &big, 1, 1).is_err());
        assert!(conv2d(&x, &big, 0, 3).is_err());
        assert!(LayerParams::new(
            Tensor::zeros(&[2, 1, 3, 3]),
            Some(Tensor::zeros(&[3])),
            Activation::None
        )
        .is_err());
    }

    #[test]
    fn linear_without_bias_and_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LayerParams::new(random(&[3, 2, 3, 3], &mut rng), None, Activation::None).unwrap();
        for _ in 0..5 {
            let x = random(&[2, 6, 6], &mut rng);
            let y = random(&[2, 6, 6], &mut rng);
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mut mix = x.clone();
            mix.scale(alpha);
            let mut yb = y.clone();
            yb.scale(beta);
            mix.add_assign(&yb);
            let lhs = conv2d(&mix, &p, 1, 1).unwrap();
            let cx = conv2d(&x, &p, 1, 1).unwrap();
            let cy = conv2d(&y, &p, 1, 1).unwrap();
            for i in 0..lhs.len() {
                let rhs = alpha * cx.data()[i] + beta * cy.data()[i];
                assert!((lhs.data()[i] - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_small_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 5, 5], &mut rng);
        let p = LayerParams::new(
            random(&[3, 2, 3, 3], &mut rng),
            Some(random(&[3], &mut rng)),
            Activation::Sigmoid,
        )
        .unwrap();
        let y = conv2d(&x, &p, 2, 1).unwrap();
        let upstream = random(y.shape(), &mut rng);
        let g = conv2d_backward(&x, &p, 2, 1, &y, &upstream).unwrap();
        let loss = |x: &Tensor, p: &LayerParams| -> f64 {
            conv2d(x, p, 2, 1)
                .unwrap()
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let eps = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += eps;
            xm.data_mut()[i] -= eps;
            let fd = (loss(&xp, &p) - loss(&xm, &p)) / (2.0 * eps);
            assert!((fd - g.input.data()[i]).abs() < 1e-7);
        }
        for i in 0..p.weights.len() {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.weights.data_mut()[i] += eps;
            pm.weights.data_mut()[i] -= eps;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
            assert!((fd - g.weights.data()[i]).abs() < 1e-7);
        }
        let gb = g.bias.unwrap();
        for i in 0..3 {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.bias.as_mut().unwrap().data_mut()[i] += eps;
            pm.bias.as_mut().unwrap().data_mut()[i] -= eps;
            let fd = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * eps);
            assert!((fd - gb.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[4, 16, 16], &mut rng);
        let p = LayerParams::new(
            random(&[8, 4, 3, 3], &mut rng),
            Some(random(&[8], &mut rng)),
            Activation::Relu,
        )
        .unwrap();
        let a = conv2d(&x, &p, 1, 1).unwrap();
        let b = conv2d(&x, &p, 1, 1).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
