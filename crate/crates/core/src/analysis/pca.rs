use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_err, param_err, Error, Result};
use crate::image::ImageGrid;
use crate::sampler::{measure, PatternStack};
use crate::scene::{Dataset, Split};
use crate::train::{evaluate_pairs, EvalReport, Pipeline};

/// Smallest acceptable ratio σ_min/σ_max of the measured dictionary.
pub const MIN_RECIPROCAL_CONDITION: f64 = 1e-10;

/// Relative eigenvalue threshold below which a principal direction counts as absent.
const RANK_TOLERANCE: f64 = 1e-12;

fn centered_rows(images: &[&ImageGrid]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let first = images
        .first()
        .ok_or_else(|| param_err!("PCA needs at least one image"))?;
    let (d, t) = (first.len(), images.len());
    let mut x = DMatrix::zeros(t, d);
    for (r, img) in images.iter().enumerate() {
        if !img.same_shape(first) {
            return Err(dim_err!("PCA images differ in shape"));
        }
        x.row_mut(r).copy_from_slice(img.data());
    }
    let mean: DVector<f64> = DVector::from_fn(d, |c, _| x.column(c).mean());
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok((x, mean))
}

/// Number of principal directions with non-negligible variance.
pub fn centered_rank(images: &[&ImageGrid]) -> Result<usize> {
    let (x, _) = centered_rows(images)?;
    let eig = SymmetricEigen::new(&x * x.transpose());
    let top = eig.eigenvalues.max().max(0.0);
    Ok(eig.eigenvalues.iter().filter(|&&l| l > top * RANK_TOLERANCE).count())
}

/// Mean image plus K orthonormal principal components (columns of an N²×K matrix).
#[derive(Debug, Clone)]
pub struct PcaModel {
    n: usize,
    mean: DVector<f64>,
    components: DMatrix<f64>,
    /// Eigenvalues of the centered Gram matrix for the kept components.
    pub variances: Vec<f64>,
}

impl PcaModel {
    /// Fit on images via the T×T Gram matrix of the centered data.
    pub fn fit(images: &[&ImageGrid], components: usize) -> Result<Self> {
        let (x, mean) = centered_rows(images)?;
        let (n, d, t) = (images[0].height(), x.ncols(), x.nrows());
        if components > t.min(d) {
            return Err(param_err!(
                "{components} components exceed min(samples {t}, pixels {d})"
            ));
        }
        let mut comps = DMatrix::zeros(d, components);
        let mut variances = Vec::with_capacity(components);
        if components > 0 {
            let gram = &x * x.transpose();
            let eig = SymmetricEigen::new(gram);
            let mut order: Vec<usize> = (0..t).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let top = eig.eigenvalues[order[0]].max(0.0);
            for (k, &idx) in order.iter().take(components).enumerate() {
                let lambda = eig.eigenvalues[idx];
                if !(lambda > top * RANK_TOLERANCE) {
                    return Err(Error::Numerical(format!(
                        "component {k} has eigenvalue {lambda:e} (largest {top:e}); the training set has rank {k}"
                    )));
                }
                let u = x.transpose() * eig.eigenvectors.column(idx) / lambda.sqrt();
                comps.set_column(k, &u);
                variances.push(lambda);
            }
        }
        Ok(Self {
            n,
            mean,
            components: comps,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean_image(&self) -> ImageGrid {
        ImageGrid::square(self.n, self.mean.as_slice().to_vec()).expect("mean shape")
    }

    /// Least-squares fit of `y ≈ Φ(mean + U c)` for c, then clamp to [0,1].
    pub fn reconstruct(&self, patterns: &PatternStack, y: &[f64]) -> Result<ImageGrid> {
        let (m, d) = (patterns.m(), self.mean.len());
        if patterns.n() != self.n {
            return Err(dim_err!(
                "patterns are {}×{}, model is {}×{}",
                patterns.n(),
                patterns.n(),
                self.n,
                self.n
            ));
        }
        if y.len() != m {
            return Err(dim_err!("expected {m} measurements, got {}", y.len()));
        }
        let k = self.components();
        if k == 0 {
            return Ok(self.mean_image().clamp01());
        }
        if k > m {
            return Err(Error::Numerical(format!(
                "{k} components cannot be fit from {m} measurements"
            )));
        }
        let phi = DMatrix::from_row_iterator(m, d, patterns.entries().iter().map(|&e| f64::from(e)));
        let a = &phi * &self.components;
        let rhs = DVector::from_column_slice(y) - &phi * &self.mean;
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > smax * MIN_RECIPROCAL_CONDITION) {
            return Err(Error::Numerical(format!(
                "measured dictionary is rank-deficient: singular values span [{smin:e}, {smax:e}], condition {:e}",
                smax / smin
            )));
        }
        let c = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
        let f = &self.mean + &self.components * c;
        Ok(ImageGrid::square(self.n, f.as_slice().to_vec())?.clamp01())
    }
}

/// A PCA model read out through a fixed pattern stack.
pub struct PcaPipeline<'a> {
    pub model: &'a PcaModel,
    pub patterns: &'a PatternStack,
}

impl Pipeline for PcaPipeline<'_> {
    fn canvas(&self) -> usize {
        self.model.n
    }

    fn predict(&self, scene: &ImageGrid) -> Result<ImageGrid> {
        let y = measure(self.patterns, scene)?;
        self.model.reconstruct(self.patterns, y.values())
    }
}

/// Fit components on the training labels and evaluate on the validation scenes.
pub fn pca_baseline(dataset: &Dataset, patterns: &PatternStack, components: usize) -> Result<EvalReport> {
    let labels: Vec<&ImageGrid> = dataset.split(Split::Train).into_iter().map(|p| &p.label).collect();
    let model = PcaModel::fit(&labels, components)?;
    let pipe = PcaPipeline {
        model: &model,
        patterns,
    };
    let val = dataset
        .manifest
        .indices(Split::Validation)
        .into_iter()
        .map(|i| (i, &dataset.samples[i]));
    evaluate_pairs(&pipe, val, |_, s| Ok(s.clone()))
}
