use crate::error::{dim_err, param_err, Result};
use crate::image::ImageGrid;

/// PSNR reported when the images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_same_shape(b, "mse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(peak²/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(param_err!("PSNR peak must be positive, got {peak}"));
    }
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / e).log10()).min(PSNR_CAP_DB))
}

/// Inclusive prefix sums with a zero border: `(h+1)×(w+1)`.
fn integral(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            row += f(r * w + c);
            s[(r + 1) * (w + 1) + c + 1] = s[r * (w + 1) + c + 1] + row;
        }
    }
    s
}

/// Mean SSIM over all 8×8 windows at stride 1, uniform weights, population statistics.
pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    let k = SSIM_WINDOW;
    if h < k || w < k {
        return Err(dim_err!("SSIM needs at least {k}×{k}, got {h}×{w}"));
    }
    let (x, y) = (a.data(), b.data());
    let sx = integral(h, w, |i| x[i]);
    let sy = integral(h, w, |i| y[i]);
    let sxx = integral(h, w, |i| x[i] * x[i]);
    let syy = integral(h, w, |i| y[i] * y[i]);
    let sxy = integral(h, w, |i| x[i] * y[i]);
    let stride = w + 1;
    let area = |s: &[f64], r: usize, c: usize| {
        s[(r + k) * stride + c + k] - s[r * stride + c + k] - s[(r + k) * stride + c] + s[r * stride + c]
    };
    let n = (k * k) as f64;
    let mut total = 0.0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let mx = area(&sx, r, c) / n;
            let my = area(&sy, r, c) / n;
            let vx = area(&sxx, r, c) / n - mx * mx;
            let vy = area(&syy, r, c) / n - my * my;
            let cov = area(&sxy, r, c) / n - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
    }
    Ok(total / ((h - k + 1) * (w - k + 1)) as f64)
}

/// Mean squared intensity over the distractor mask divided by that over the
/// target mask. Masks are binary: any value > 0.5 counts as inside.
pub fn selectivity(recon: &ImageGrid, target_mask: &ImageGrid, distractor_mask: &ImageGrid) -> Result<f64> {
    recon.check_same_shape(target_mask, "selectivity target mask")?;
    recon.check_same_shape(distractor_mask, "selectivity distractor mask")?;
    let (mut t_sum, mut t_n, mut d_sum, mut d_n) = (0.0, 0usize, 0.0, 0usize);
    for ((&v, &t), &d) in recon.data().iter().zip(target_mask.data()).zip(distractor_mask.data()) {
        let (in_t, in_d) = (t > 0.5, d > 0.5);
        if in_t && in_d {
            return Err(param_err!("target and distractor masks overlap"));
        }
        if in_t {
            t_sum += v * v;
            t_n += 1;
        } else if in_d {
            d_sum += v * v;
            d_n += 1;
        }
    }
    if t_n == 0 {
        return Err(param_err!("target mask is empty"));
    }
    if d_n == 0 {
        return Ok(0.0);
    }
    let target_energy = t_sum / t_n as f64;
    if target_energy == 0.0 {
        return Ok(if d_sum == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((d_sum / d_n as f64) / target_energy)
}
