//! Reconstruction quality metrics, pattern coherence, baselines and sweeps.

mod coherence;
mod featurespace;
mod metrics;
mod pca;
mod sweep;

pub use coherence::{matrix_coherence, mutual_coherence, welch_bound, CoherenceReport};
pub use featurespace::{featurespace_select, orthonormal_features, FeatureObject, FeatureSpaceInstance, Selection};
pub use metrics::{mse, psnr, selectivity, ssim, PSNR_CAP_DB, SSIM_WINDOW};
pub use pca::{centered_rank, pca_baseline, PcaModel, PcaPipeline, MIN_RECIPROCAL_CONDITION};
pub use sweep::{rate_sweep, SweepReport, SweepRow, SWEEP_HEADER};
