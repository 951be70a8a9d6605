//! Object selection in an explicit orthonormal feature space.
//!
//! Every object is a combination of feature vectors from its own index set.
//! Patterns built from the (weighted) target features measure `Φ₀ f`, and
//! `Φ₀ᵀ Φ₀ f` returns the target exactly when no other object has a
//! component inside the target's subspace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, param_err, Result};

const ORTHO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObject {
    /// Indices into the feature list.
    pub features: Vec<usize>,
    /// One coefficient per listed feature.
    pub coefficients: Vec<f64>,
}

/// Object 0 is the target; `weights` holds one selection weight per target feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpaceInstance {
    pub features: Vec<Vec<f64>>,
    pub objects: Vec<FeatureObject>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub recovered: Vec<f64>,
    pub target: Vec<f64>,
    /// `‖recovered − f₀‖ / ‖f₀‖`.
    pub leakage: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `count` orthonormal vectors of length `dim` from Gram-Schmidt (applied twice) on Gaussian draws.
pub fn orthonormal_features(dim: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(param_err!(
            "cannot build {count} orthonormal vectors in dimension {dim}"
        ));
    }
    let normal = rand_distr::StandardNormal;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(normal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    Ok(basis)
}

impl FeatureSpaceInstance {
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.objects.is_empty() {
            return Err(param_err!("instance needs features and at least one object"));
        }
        for (i, a) in self.features.iter().enumerate() {
            if a.len() != d {
                return Err(dim_err!("feature {i} has length {}, expected {d}", a.len()));
            }
            for (j, b) in self.features.iter().enumerate().skip(i) {
                let expected = if i == j { 1.0 } else { 0.0 };
                let ip = dot(a, b);
                if (ip - expected).abs() > ORTHO_TOL {
                    return Err(param_err!(
                        "features {i} and {j} are not orthonormal: ⟨ξ{i}, ξ{j}⟩ = {ip}"
                    ));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.features.len() != o.coefficients.len() {
                return Err(dim_err!(
                    "object {i} lists {} features but {} coefficients",
                    o.features.len(),
                    o.coefficients.len()
                ));
            }
            if let Some(&bad) = o.features.iter().find(|&&k| k >= self.features.len()) {
                return Err(param_err!("object {i} refers to missing feature {bad}"));
            }
        }
        if self.weights.len() != self.objects[0].features.len() {
            return Err(dim_err!(
                "{} selection weights for {} target features",
                self.weights.len(),
                self.objects[0].features.len()
            ));
        }
        Ok(())
    }

    /// `f_i = Σ_j ξ_j x_ij`.
    pub fn object(&self, i: usize) -> Vec<f64> {
        let o = &self.objects[i];
        let mut f = vec![0.0; self.dim()];
        for (&k, &c) in o.features.iter().zip(&o.coefficients) {
            f.iter_mut().zip(&self.features[k]).for_each(|(x, y)| *x += c * y);
        }
        f
    }

    /// The observed scene `Σ_i f_i`.
    pub fn scene(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dim()];
        for i in 0..self.objects.len() {
            f.iter_mut().zip(self.object(i)).for_each(|(x, y)| *x += y);
        }
        f
    }

    /// Rows `ω_n ξ_n` over the target's features.
    pub fn selection_rows(&self) -> Vec<Vec<f64>> {
        self.objects[0]
            .features
            .iter()
            .zip(&self.weights)
            .map(|(&k, &w)| self.features[k].iter().map(|v| w * v).collect())
            .collect()
    }

    /// Random instance in dimension `dim`: the target and `others` further
    /// objects each own `per_object` private features; the first `shared`
    /// target features are also used by object 1. Unit selection weights.
    pub fn constructed(dim: usize, others: usize, per_object: usize, shared: usize, seed: u64) -> Result<Self> {
        if shared > per_object || (shared > 0 && others == 0) {
            return Err(param_err!(
                "cannot share {shared} of {per_object} features with {others} other objects"
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = per_object * (others + 1);
        let features = orthonormal_features(dim, total, &mut rng)?;
        let mut objects = Vec::with_capacity(others + 1);
        for i in 0..=others {
            let mut idx: Vec<usize> = (i * per_object..(i + 1) * per_object).collect();
            if i == 1 {
                idx.extend(0..shared);
            }
            let coefficients = idx.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
            objects.push(FeatureObject {
                features: idx,
                coefficients,
            });
        }
        Ok(Self {
            features,
            objects,
            weights: vec![1.0; per_object],
        })
    }
}

/// Measure the scene with the selection rows and back-project.
pub fn featurespace_select(instance: &FeatureSpaceInstance) -> Result<Selection> {
    instance.validate()?;
    let f = instance.scene();
    let rows = instance.selection_rows();
    let mut recovered = vec![0.0; f.len()];
    for row in &rows {
        let y = dot(row, &f);
        recovered.iter_mut().zip(row).for_each(|(r, v)| *r += y * v);
    }
    let target = instance.object(0);
    let t_norm = norm(&target);
    if t_norm == 0.0 {
        return Err(param_err!("target object is zero"));
    }
    let diff: Vec<f64> = recovered.iter().zip(&target).map(|(a, b)| a - b).collect();
    Ok(Selection {
        leakage: norm(&diff) / t_norm,
        recovered,
        target,
    })
}
