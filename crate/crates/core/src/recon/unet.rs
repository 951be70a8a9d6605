use super::ReconParams;
use crate::error::{dim_err, Result};
use crate::image::ImageGrid;
use crate::kernel::{conv2d, conv2d_backward, resample2x, resample2x_backward, Resample, Tensor};

pub const UNET_LAYERS: usize = 8;

const ENC1: usize = 0;
const ENC2: usize = 1;
const ENC3: usize = 2;
const BOTTLENECK: usize = 3;
const DEC3: usize = 4;
const DEC2: usize = 5;
const DEC1: usize = 6;
const HEAD: usize = 7;

/// Activations kept from the forward pass for [`unet_backward`].
#[derive(Debug, Clone)]
pub struct UnetCache {
    input: Tensor,
    e1: Tensor,
    p1: Tensor,
    e2: Tensor,
    p2: Tensor,
    e3: Tensor,
    p3: Tensor,
    b: Tensor,
    c3: Tensor,
    d3: Tensor,
    c2: Tensor,
    d2: Tensor,
    c1: Tensor,
    d1: Tensor,
    out: Tensor,
}

impl UnetCache {
    pub fn output(&self) -> ImageGrid {
        let n = self.out.shape()[1];
        ImageGrid::square(n, self.out.data().to_vec()).expect("output is N×N")
    }
}

fn pad_for(params: &ReconParams, layer: usize) -> usize {
    params.unet[layer].weights.shape()[2] / 2
}

fn conv(x: &Tensor, params: &ReconParams, layer: usize) -> Result<Tensor> {
    conv2d(x, &params.unet[layer], 1, pad_for(params, layer))
}

/// Forward pass. `keep_skip[i]` false zeroes the features level `i` passes
/// across the skip connection.
pub(crate) fn forward_with(map: &ImageGrid, params: &ReconParams, keep_skip: [bool; 3]) -> Result<UnetCache> {
    let n = params.n();
    if map.height() != n || map.width() != n {
        return Err(dim_err!("U-net expects {n}×{n}, got {}×{}", map.height(), map.width()));
    }
    if !n.is_multiple_of(8) {
        return Err(dim_err!("U-net input side {n} is not divisible by 8"));
    }
    let skip = |t: &Tensor, level: usize| {
        if keep_skip[level] {
            t.clone()
        } else {
            Tensor::zeros(t.shape())
        }
    };
    let input = Tensor::new(vec![1, n, n], map.data().to_vec())?;
    let e1 = conv(&input, params, ENC1)?;
    let p1 = resample2x(&e1, Resample::DownMax)?;
    let e2 = conv(&p1, params, ENC2)?;
    let p2 = resample2x(&e2, Resample::DownMax)?;
    let e3 = conv(&p2, params, ENC3)?;
    let p3 = resample2x(&e3, Resample::DownMax)?;
    let b = conv(&p3, params, BOTTLENECK)?;
    let c3 = Tensor::concat_channels(&[&resample2x(&b, Resample::UpNearest)?, &skip(&e3, 2)])?;
    let d3 = conv(&c3, params, DEC3)?;
    let c2 = Tensor::concat_channels(&[&resample2x(&d3, Resample::UpNearest)?, &skip(&e2, 1)])?;
    let d2 = conv(&c2, params, DEC2)?;
    let c1 = Tensor::concat_channels(&[&resample2x(&d2, Resample::UpNearest)?, &skip(&e1, 0)])?;
    let d1 = conv(&c1, params, DEC1)?;
    let out = conv(&d1, params, HEAD)?;
    Ok(UnetCache {
        input,
        e1,
        p1,
        e2,
        p2,
        e3,
        p3,
        b,
        c3,
        d3,
        c2,
        d2,
        c1,
        d1,
        out,
    })
}

pub fn unet_forward_cached(map: &ImageGrid, params: &ReconParams) -> Result<UnetCache> {
    forward_with(map, params, [true; 3])
}

/// N×N map to N×N image with values in (0,1).
pub fn unet_forward(map: &ImageGrid, params: &ReconParams) -> Result<ImageGrid> {
    Ok(unet_forward_cached(map, params)?.output())
}

/// Gradients w.r.t. the input map and each layer's (weights, bias), in layer order.
pub fn unet_backward(
    cache: &UnetCache,
    params: &ReconParams,
    upstream: &ImageGrid,
) -> Result<(ImageGrid, Vec<(Tensor, Tensor)>)> {
    let n = params.n();
    if upstream.height() != n || upstream.width() != n {
        return Err(dim_err!("upstream gradient must be {n}×{n}"));
    }
    let mut grads: Vec<Option<(Tensor, Tensor)>> = vec![None; UNET_LAYERS];
    let mut back = |x: &Tensor, layer: usize, y: &Tensor, g: &Tensor| -> Result<Tensor> {
        let cg = conv2d_backward(x, &params.unet[layer], 1, pad_for(params, layer), y, g)?;
        grads[layer] = Some((cg.weights, cg.bias.expect("U-net layers carry a bias")));
        Ok(cg.input)
    };
    let c = &cache;
    let w1 = c.e1.shape()[0];
    let w2 = c.e2.shape()[0];
    let w3 = c.e3.shape()[0];

    let g_out = Tensor::new(vec![1, n, n], upstream.data().to_vec())?;
    let g_d1 = back(&c.d1, HEAD, &c.out, &g_out)?;
    let g_c1 = back(&c.c1, DEC1, &c.d1, &g_d1)?;
    let [g_u1, g_e1_skip]: [Tensor; 2] = g_c1.split_channels(&[w2, w1])?.try_into().expect("two parts");
    let g_d2 = resample2x_backward(&c.d2, &g_u1, Resample::UpNearest)?;
    let g_c2 = back(&c.c2, DEC2, &c.d2, &g_d2)?;
    let [g_u2, g_e2_skip]: [Tensor; 2] = g_c2.split_channels(&[w3, w2])?.try_into().expect("two parts");
    let g_d3 = resample2x_backward(&c.d3, &g_u2, Resample::UpNearest)?;
    let g_c3 = back(&c.c3, DEC3, &c.d3, &g_d3)?;
    let [g_u3, g_e3_skip]: [Tensor; 2] = g_c3.split_channels(&[w3, w3])?.try_into().expect("two parts");
    let g_b = resample2x_backward(&c.b, &g_u3, Resample::UpNearest)?;
    let g_p3 = back(&c.p3, BOTTLENECK, &c.b, &g_b)?;
    let mut g_e3 = resample2x_backward(&c.e3, &g_p3, Resample::DownMax)?;
    g_e3.add_assign(&g_e3_skip);
    let g_p2 = back(&c.p2, ENC3, &c.e3, &g_e3)?;
    let mut g_e2 = resample2x_backward(&c.e2, &g_p2, Resample::DownMax)?;
    g_e2.add_assign(&g_e2_skip);
    let g_p1 = back(&c.p1, ENC2, &c.e2, &g_e2)?;
    let mut g_e1 = resample2x_backward(&c.e1, &g_p1, Resample::DownMax)?;
    g_e1.add_assign(&g_e1_skip);
    let g_in = back(&c.input, ENC1, &c.e1, &g_e1)?;

    let grads = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok((ImageGrid::square(n, g_in.into_data())?, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gradcheck, gradcheck_components};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(n: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
        ImageGrid::square(n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn params(n: usize, seed: u64) -> ReconParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ReconParams::init(n, 4, &mut rng).unwrap();
        for l in &mut p.unet {
            if let Some(b) = &mut l.bias {
                b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
        p
    }

    /// loss = Σ wᵢ·outᵢ with fixed random weights
    fn weighted_loss(out: &ImageGrid, w: &[f64]) -> f64 {
        out.data().iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_params_give_half() {
        let p = ReconParams::zeros(16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = unet_forward(&random_map(16, &mut rng), &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_shape_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params(16, 2);
        for _ in 0..3 {
            let out = unet_forward(&random_map(16, &mut rng), &p).unwrap();
            assert_eq!((out.height(), out.width()), (16, 16));
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(unet_forward(&random_map(8, &mut rng), &p).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params(16, 5);
        let map = random_map(16, &mut rng);
        let w: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up = ImageGrid::square(16, w.clone()).unwrap();
        let point = Tensor::new(vec![256], map.data().to_vec()).unwrap();
        let f = |t: &Tensor| {
            let m = ImageGrid::square(16, t.data().to_vec())?;
            let cache = unet_forward_cached(&m, &p)?;
            let (g, _) = unet_backward(&cache, &p, &up)?;
            Ok((
                weighted_loss(&cache.output(), &w),
                Tensor::new(vec![256], g.into_vec())?,
            ))
        };
        let r = gradcheck(f, &point, 1e-6).unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = params(16, 6);
        let map = random_map(16, &mut rng);
        let w: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up = ImageGrid::square(16, w.clone()).unwrap();
        for layer in 0..UNET_LAYERS {
            let shape = base.unet[layer].weights.shape().to_vec();
            let point = base.unet[layer].weights.clone();
            let f = |t: &Tensor| {
                let mut p = base.clone();
                p.unet[layer].weights = t.clone();
                let cache = unet_forward_cached(&map, &p)?;
                let (_, g) = unet_backward(&cache, &p, &up)?;
                Ok((weighted_loss(&cache.output(), &w), g[layer].0.clone().reshape(&shape)?))
            };
            let comps: Vec<usize> = (0..12).map(|_| rng.gen_range(0..point.len())).collect();
            let r = gradcheck_components(f, &point, 1e-6, &comps).unwrap();
            assert!(r.max_relative_error <= 1e-4, "layer {layer}: {r:?}");
        }
    }

    #[test]
    fn each_skip_connection_is_wired() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = params(16, 8);
        let map = random_map(16, &mut rng);
        let full = forward_with(&map, &p, [true; 3]).unwrap().output();
        for level in 0..3 {
            let mut keep = [true; 3];
            keep[level] = false;
            let cut = forward_with(&map, &p, keep).unwrap().output();
            let diff: f64 = full.data().iter().zip(cut.data()).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff > 0.0, "level {level} skip has no effect");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params(16, 4);
        let map = random_map(16, &mut rng);
        let a = unet_forward(&map, &p).unwrap();
        let b = unet_forward(&map, &p).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
