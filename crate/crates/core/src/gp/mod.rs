//! Gaussian-process regression: exact posterior, FIC sparse approximation
//! and the normal quantile used for constraint tightening.

pub mod dataset;
pub mod exact;
pub mod io;
pub mod kernel;
pub mod kmeans;
pub mod optimize;
pub mod quantile;
pub mod sparse;

pub use dataset::Dataset;
pub use exact::{log_marginal_likelihood, predict_exact, train_exact, GpModel, TrainOptions, TrainReport};
pub use kernel::{kernel_eval, KernelHyper, JITTER};
pub use quantile::normal_quantile;
pub use sparse::{build_sparse, predict_sparse, InducingInit, SparseGpModel, SparseOptions};
