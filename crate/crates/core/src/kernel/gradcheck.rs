use super::Tensor;
use crate::error::{param_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_component: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Components left out because they straddle a non-differentiable point.
    pub kinks_skipped: usize,
}

/// Finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step, within [1e-6, 1e-3].
    pub eps: f64,
    /// Lower bound of the relative-error denominator; errors on gradients
    /// below it are measured against it instead.
    pub floor: f64,
    /// Leave out components whose one-sided slopes disagree by more than
    /// `KINK_RATIO` of their magnitude (a ReLU or max-pool switch inside the stencil).
    pub skip_kinks: bool,
}

/// One-sided slope disagreement that marks a kink. A smooth function differs
/// by `eps·|f''|`, far below this for the steps accepted here.
pub const KINK_RATIO: f64 = 1e-2;

impl GradCheckOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            floor: 1e-8,
            skip_kinks: false,
        }
    }
}

/// Compare the analytic gradient of a scalar function against central finite
/// differences over every component of `point`.
///
/// `f` returns the value and its analytic gradient (same shape as the input).
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn gradcheck<F>(f: F, point: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let all: Vec<usize> = (0..point.len()).collect();
    gradcheck_components(f, point, eps, &all)
}

/// Like [`gradcheck`], probing only the listed components.
pub fn gradcheck_components<F>(f: F, point: &Tensor, eps: f64, components: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    gradcheck_with(f, point, components, GradCheckOptions::new(eps))
}

pub fn gradcheck_with<F>(f: F, point: &Tensor, components: &[usize], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let eps = opts.eps;
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(param_err!("finite-difference step {eps} outside [1e-6, 1e-3]"));
    }
    let (value, grad) = f(point)?;
    if !value.is_finite() {
        return Err(Error::Numerical(
            "function value is not finite at the base point".into(),
        ));
    }
    grad.same_shape(point)?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_component: 0,
        analytic: 0.0,
        numeric: 0.0,
        kinks_skipped: 0,
    };
    let mut probe = point.clone();
    for &i in components {
        if i >= point.len() {
            return Err(param_err!("component {i} out of range for {} values", point.len()));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?.0;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?.0;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value while probing component {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grad.data()[i];
        if !analytic.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite analytic gradient at component {i}"
            )));
        }
        if opts.skip_kinks {
            let (fwd, bwd) = ((plus - value) / eps, (value - minus) / eps);
            let scale = fwd.abs().max(bwd.abs()).max(opts.floor);
            if (fwd - bwd).abs() > KINK_RATIO * scale {
                report.kinks_skipped += 1;
                continue;
            }
        }
        let denom = analytic.abs().max(numeric.abs()).max(opts.floor);
        let rel = (analytic - numeric).abs() / denom;
        if rel > report.max_relative_error {
            report = GradCheckReport {
                max_relative_error: rel,
                worst_component: i,
                analytic,
                numeric,
                kinks_skipped: report.kinks_skipped,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn linear_function_is_exact() {
        for x in [-3.0, 0.0, 0.7, 12.5] {
            let r = gradcheck(|t| Ok((3.0 * t.data()[0], scalar(3.0))), &scalar(x), 1e-3).unwrap();
            assert!(r.max_relative_error <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn square_at_two() {
        let r = gradcheck(
            |t| Ok((t.data()[0].powi(2), scalar(2.0 * t.data()[0]))),
            &scalar(2.0),
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error <= 1e-8);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let r = gradcheck(|t| Ok((t.data()[0].powi(2), scalar(t.data()[0]))), &scalar(2.0), 1e-5).unwrap();
        assert!(r.max_relative_error > 0.4);
    }

    #[test]
    fn non_finite_probe_names_component() {
        let p = Tensor::new(vec![2], vec![1.0, 1e-5]).unwrap();
        let f = |t: &Tensor| {
            let d = t.data();
            Ok((d[0] + d[1].ln(), Tensor::new(vec![2], vec![1.0, 1.0 / d[1]]).unwrap()))
        };
        match gradcheck(f, &p, 1e-4) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("component 1"), "{msg}"),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn kinks_are_detected_and_skipped() {
        // |x| at 0 has no derivative; report the subgradient 0
        let f = |t: &Tensor| Ok((t.data()[0].abs(), scalar(0.0)));
        let plain = gradcheck(f, &scalar(0.0), 1e-5).unwrap();
        assert_eq!(plain.kinks_skipped, 0);
        let opts = GradCheckOptions {
            skip_kinks: true,
            ..GradCheckOptions::new(1e-5)
        };
        let r = gradcheck_with(f, &scalar(0.0), &[0], opts).unwrap();
        assert_eq!(r.kinks_skipped, 1);
        // smooth points are still checked, and wrong gradients still caught
        let g = |t: &Tensor| Ok((t.data()[0].powi(2), scalar(t.data()[0])));
        let r = gradcheck_with(g, &scalar(2.0), &[0], opts).unwrap();
        assert_eq!(r.kinks_skipped, 0);
        assert!(r.max_relative_error > 0.4);
    }

    #[test]
    fn step_outside_range_rejected() {
        assert!(gradcheck(|t| Ok((t.data()[0], scalar(1.0))), &scalar(0.0), 1e-2).is_err());
    }
}
