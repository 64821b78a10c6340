//! Model-based clustering of mixed continuous, ordinal and nominal data.
//!
//! Observed variables are modelled as manifestations of a latent Gaussian
//! mixture with diagonal covariance: continuous columns enter directly,
//! ordinal/binary columns arise by thresholding one latent dimension, and a
//! nominal column with `K` levels arises from a `(K-1)`-dimensional latent
//! block through an argmax rule. Six parsimonious covariance structures
//! (EII, VII, EEI, VEI, EVI, VVI) are fitted by (Monte Carlo) EM and
//! compared with an approximated BIC.

pub mod dataset;
pub mod em;
pub mod error;
pub mod gauss;
pub mod latent;
pub mod layout;
pub mod par;
pub mod params;
pub mod selection;
pub mod simulate;

pub use dataset::{
    compute_thresholds, load_dataset, load_dataset_str, ColumnKind, ColumnSpec, MixedDataset,
    ThresholdSet,
};
pub use em::{fit, fit_with, initialize, EStepQuantities, FitConfig, FitResult, InitMethod};
pub use error::{Error, Result};
pub use latent::{build_mc_tables, nominal_mc_table, McTables};
pub use layout::{build_layout, LatentLayout};
pub use params::{count_free_parameters, enforce_identifiability, CovModel, ModelParams};
pub use selection::{approx_loglik, bic_hat, grid_search, SelectionReport};
pub use simulate::{adjusted_rand, cross_tab, simulate, GeneratorSpec};
