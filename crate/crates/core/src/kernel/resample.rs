use super::Tensor;
use crate::error::{dim_err, Result};

/// 2× spatial resampling direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// 2×2 max pooling, stride 2.
    DownMax,
    /// Nearest-neighbour upsampling: each pixel becomes a 2×2 block.
    UpNearest,
}

pub fn resample2x(x: &Tensor, dir: Resample) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let src = x.data();
    match dir {
        Resample::DownMax => {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(dim_err!("max-pool needs even extents, got {h}x{w}"));
            }
            let (ho, wo) = (h / 2, w / 2);
            let mut out = vec![0.0; c * ho * wo];
            for ch in 0..c {
                let plane = &src[ch * h * w..];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let i = (2 * oy) * w + 2 * ox;
                        let m = plane[i].max(plane[i + 1]).max(plane[i + w]).max(plane[i + w + 1]);
                        out[(ch * ho + oy) * wo + ox] = m;
                    }
                }
            }
            Tensor::new(vec![c, ho, wo], out)
        }
        Resample::UpNearest => {
            let (ho, wo) = (h * 2, w * 2);
            let mut out = vec![0.0; c * ho * wo];
            for ch in 0..c {
                for y in 0..ho {
                    let srow = &src[(ch * h + y / 2) * w..][..w];
                    let drow = &mut out[(ch * ho + y) * wo..][..wo];
                    for (x, d) in drow.iter_mut().enumerate() {
                        *d = srow[x / 2];
                    }
                }
            }
            Tensor::new(vec![c, ho, wo], out)
        }
    }
}

/// Gradient w.r.t. the input of [`resample2x`].
///
/// Max pooling routes each window's gradient to its first maximal element in
/// scan order; nearest upsampling sums each 2×2 block.
pub fn resample2x_backward(input: &Tensor, upstream: &Tensor, dir: Resample) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let g = upstream.data();
    let mut grad = vec![0.0; c * h * w];
    match dir {
        Resample::DownMax => {
            let (ho, wo) = (h / 2, w / 2);
            if upstream.shape() != [c, ho, wo] {
                return Err(dim_err!(
                    "max-pool upstream {:?} vs expected {:?}",
                    upstream.shape(),
                    [c, ho, wo]
                ));
            }
            let src = input.data();
            for ch in 0..c {
                let base = ch * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let i = base + (2 * oy) * w + 2 * ox;
                        let mut best = i;
                        for j in [i + 1, i + w, i + w + 1] {
                            if src[j] > src[best] {
                                best = j;
                            }
                        }
                        grad[best] += g[(ch * ho + oy) * wo + ox];
                    }
                }
            }
        }
        Resample::UpNearest => {
            if upstream.shape() != [c, 2 * h, 2 * w] {
                return Err(dim_err!(
                    "upsample upstream {:?} vs expected {:?}",
                    upstream.shape(),
                    [c, 2 * h, 2 * w]
                ));
            }
            let wo = 2 * w;
            for ch in 0..c {
                for y in 0..2 * h {
                    for x in 0..wo {
                        grad[(ch * h + y / 2) * w + x / 2] += g[(ch * 2 * h + y) * wo + x];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], grad)
}
