//! Parameter containers for the six diagonal covariance structures.
//!
//! Each cluster covariance is `lambda_g * A_g` on the continuous/ordinal
//! dims and `lambda_tilde_g * A_g` on nominal dims, with `D_g = I` always.
//! The model name controls which pieces are shared across clusters:
//!
//! | model | lambda | A        |
//! |-------|--------|----------|
//! | EII   | equal  | identity |
//! | VII   | free   | identity |
//! | EEI   | equal  | equal    |
//! | VEI   | free   | equal    |
//! | EVI   | equal  | free     |
//! | VVI   | free   | free     |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LatentLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovModel {
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
}

impl CovModel {
    pub const ALL: [CovModel; 6] = [
        CovModel::EII,
        CovModel::VII,
        CovModel::EEI,
        CovModel::VEI,
        CovModel::EVI,
        CovModel::VVI,
    ];

    /// Volume parameter shared across clusters.
    pub fn lambda_equal(self) -> bool {
        matches!(self, CovModel::EII | CovModel::EEI | CovModel::EVI)
    }

    /// Shape matrix fixed to the identity.
    pub fn shape_identity(self) -> bool {
        matches!(self, CovModel::EII | CovModel::VII)
    }

    /// Shape shared across clusters (but not identity).
    pub fn shape_equal(self) -> bool {
        matches!(self, CovModel::EEI | CovModel::VEI)
    }

    /// Nominal-dim volume pinned to 1 (otherwise normalized to sum 1).
    pub fn lambda_tilde_fixed(self) -> bool {
        self.lambda_equal()
    }

    /// Nominal-dim shape entries pinned to 1 (EVI/VVI instead normalize the
    /// per-dimension column over clusters to sum 1).
    pub fn nominal_shape_fixed(self) -> bool {
        !matches!(self, CovModel::EVI | CovModel::VVI)
    }
}

impl std::str::FromStr for CovModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<CovModel> {
        match s.to_ascii_uppercase().as_str() {
            "EII" => Ok(CovModel::EII),
            "VII" => Ok(CovModel::VII),
            "EEI" => Ok(CovModel::EEI),
            "VEI" => Ok(CovModel::VEI),
            "EVI" => Ok(CovModel::EVI),
            "VVI" => Ok(CovModel::VVI),
            other => Err(Error::InvalidParameter(format!(
                "unknown covariance model '{other}' (expected one of EII, VII, EEI, VEI, EVI, VVI)"
            ))),
        }
    }
}

impl std::fmt::Display for CovModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One immutable parameter snapshot.
///
/// Shared quantities are stored expanded per cluster (an `EII` fit keeps `G`
/// identical `lambda` entries); `a` entries are 1 wherever the shape is the
/// identity, and `lambda_tilde` entries are 1 when no nominal dims exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: CovModel,
    pub pi: Vec<f64>,
    /// Cluster means, `G x P`.
    pub mu: Vec<Vec<f64>>,
    /// Volume on continuous/ordinal dims, length `G`.
    pub lambda: Vec<f64>,
    /// Volume on nominal dims, length `G`.
    pub lambda_tilde: Vec<f64>,
    /// Shape diagonals, `G x P`.
    pub a: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn n_clusters(&self) -> usize {
        self.pi.len()
    }

    pub fn n_dims(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    /// Diagonal of `Sigma_g`: `lambda_g a_gp` on continuous/ordinal dims and
    /// `lambda_tilde_g a_gp` on nominal dims.
    pub fn sigma_diagonal(&self, g: usize, layout: &LatentLayout) -> Vec<f64> {
        let co = layout.c + layout.o;
        (0..layout.p)
            .map(|p| {
                if p < co {
                    self.lambda[g] * self.a[g][p]
                } else {
                    self.lambda_tilde[g] * self.a[g][p]
                }
            })
            .collect()
    }

    /// Check all structural invariants (positivity, simplex, normalization
    /// and identifiability constraints) to tolerance `tol`.
    pub fn validate(&self, layout: &LatentLayout, tol: f64) -> Result<()> {
        let g_count = self.n_clusters();
        if g_count == 0 {
            return Err(Error::InvalidParameter("no clusters".into()));
        }
        let pi_sum: f64 = self.pi.iter().sum();
        if (pi_sum - 1.0).abs() > tol || self.pi.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixing weights must be positive and sum to 1 (sum = {pi_sum})"
            )));
        }
        let co = layout.c + layout.o;
        for g in 0..g_count {
            if self.mu[g].len() != layout.p || self.a[g].len() != layout.p {
                return Err(Error::InvalidParameter(
                    "parameter dimensions do not match the layout".into(),
                ));
            }
            if self.lambda[g] <= 0.0 || self.lambda_tilde[g] <= 0.0 {
                return Err(Error::InvalidParameter("volumes must be positive".into()));
            }
            if self.a[g].iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidParameter("shape entries must be positive".into()));
            }
            if co > 0 {
                let log_gm: f64 =
                    self.a[g][..co].iter().map(|v| v.ln()).sum::<f64>() / co as f64;
                if log_gm.abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "shape block of cluster {g} has geometric mean {}",
                        log_gm.exp()
                    )));
                }
            }
        }
        if layout.has_nominal() {
            for p in co..layout.p {
                let centered: f64 = (0..g_count).map(|g| self.pi[g] * self.mu[g][p]).sum();
                if centered.abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "nominal dim {p} mean not centered: {centered}"
                    )));
                }
            }
            if self.model.lambda_tilde_fixed() {
                if self.lambda_tilde.iter().any(|&l| (l - 1.0).abs() > tol) {
                    return Err(Error::InvalidParameter(
                        "lambda_tilde must be 1 for this model".into(),
                    ));
                }
            } else {
                let total: f64 = self.lambda_tilde.iter().sum();
                if (total - 1.0).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "lambda_tilde must sum to 1 (sum = {total})"
                    )));
                }
            }
            for p in co..layout.p {
                if self.model.nominal_shape_fixed() {
                    if (0..g_count).any(|g| (self.a[g][p] - 1.0).abs() > tol) {
                        return Err(Error::InvalidParameter(
                            "nominal shape entries must be 1 for this model".into(),
                        ));
                    }
                } else {
                    let total: f64 = (0..g_count).map(|g| self.a[g][p]).sum();
                    if (total - 1.0).abs() > tol {
                        return Err(Error::InvalidParameter(format!(
                            "nominal shape column {p} must sum to 1 (sum = {total})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Flatten into the documented trace order:
    /// `pi | mu (g-major) | lambda | lambda_tilde | a (g-major)`.
    pub fn flatten(&self) -> Vec<f64> {
        let g_count = self.n_clusters();
        let p = self.n_dims();
        let mut out = Vec::with_capacity(g_count * (2 * p + 3));
        out.extend_from_slice(&self.pi);
        for g in 0..g_count {
            out.extend_from_slice(&self.mu[g]);
        }
        out.extend_from_slice(&self.lambda);
        out.extend_from_slice(&self.lambda_tilde);
        for g in 0..g_count {
            out.extend_from_slice(&self.a[g]);
        }
        out
    }

    /// Column labels matching [`ModelParams::flatten`].
    pub fn flat_labels(&self) -> Vec<String> {
        let g_count = self.n_clusters();
        let p = self.n_dims();
        let mut out = Vec::new();
        for g in 0..g_count {
            out.push(format!("pi[{g}]"));
        }
        for g in 0..g_count {
            for d in 0..p {
                out.push(format!("mu[{g}][{d}]"));
            }
        }
        for g in 0..g_count {
            out.push(format!("lambda[{g}]"));
        }
        for g in 0..g_count {
            out.push(format!("lambda_tilde[{g}]"));
        }
        for g in 0..g_count {
            for d in 0..p {
                out.push(format!("a[{g}][{d}]"));
            }
        }
        out
    }

    /// Full serialization including the derived covariance diagonals.
    pub fn to_json_value(&self, layout: &LatentLayout) -> serde_json::Value {
        let sigma: Vec<Vec<f64>> = (0..self.n_clusters())
            .map(|g| self.sigma_diagonal(g, layout))
            .collect();
        serde_json::json!({
            "model": self.model,
            "pi": self.pi,
            "mu": self.mu,
            "lambda": self.lambda,
            "lambda_tilde": self.lambda_tilde,
            "a": self.a,
            "sigma_diagonal": sigma,
        })
    }
}

/// Project a freshly updated parameter set onto the identifiability
/// constraints.
///
/// Nominal-dim means are recentred by the current pi-weighted mean;
/// `lambda_tilde` is pinned to 1 or divided by its sum per model; nominal
/// shape entries are pinned to 1 or divided by their per-dimension cluster
/// sum. The continuous/ordinal shape block is renormalized to geometric
/// mean 1 with the factor folded into the volume, so covariance diagonals
/// on those dims are unchanged. Idempotent.
pub fn enforce_identifiability(mut params: ModelParams, layout: &LatentLayout) -> ModelParams {
    let g_count = params.n_clusters();
    let co = layout.c + layout.o;

    // spherical models carry no shape freedom on the continuous/ordinal block
    if co > 0 && params.model.shape_identity() {
        for g in 0..g_count {
            for p in 0..co {
                params.a[g][p] = 1.0;
            }
        }
    }
    // geometric-mean normalization of the continuous/ordinal shape block
    if co > 0 && !params.model.shape_identity() {
        let mut factors = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let log_gm: f64 =
                params.a[g][..co].iter().map(|v| v.ln()).sum::<f64>() / co as f64;
            let xi = log_gm.exp();
            factors.push(xi);
            if (xi - 1.0).abs() > 1e-15 {
                for p in 0..co {
                    params.a[g][p] /= xi;
                }
            }
        }
        if params.model.lambda_equal() {
            // shared volume: fold in the geometric mean of the factors
            let mean_log: f64 =
                factors.iter().map(|x| x.ln()).sum::<f64>() / g_count as f64;
            let xi = mean_log.exp();
            if (xi - 1.0).abs() > 1e-15 {
                for l in params.lambda.iter_mut() {
                    *l *= xi;
                }
            }
        } else {
            for g in 0..g_count {
                params.lambda[g] *= factors[g];
            }
        }
    }

    if layout.has_nominal() {
        for p in co..layout.p {
            let centered: f64 = (0..g_count).map(|g| params.pi[g] * params.mu[g][p]).sum();
            for g in 0..g_count {
                params.mu[g][p] -= centered;
            }
        }
        if params.model.lambda_tilde_fixed() {
            for l in params.lambda_tilde.iter_mut() {
                *l = 1.0;
            }
        } else {
            let total: f64 = params.lambda_tilde.iter().sum();
            for l in params.lambda_tilde.iter_mut() {
                *l /= total;
            }
        }
        for p in co..layout.p {
            if params.model.nominal_shape_fixed() {
                for g in 0..g_count {
                    params.a[g][p] = 1.0;
                }
            } else {
                let total: f64 = (0..g_count).map(|g| params.a[g][p]).sum();
                for g in 0..g_count {
                    params.a[g][p] /= total;
                }
            }
        }
    } else {
        for l in params.lambda_tilde.iter_mut() {
            *l = 1.0;
        }
    }
    params
}

/// Covariance parameter count, by model and by presence of nominal dims.
fn covariance_param_count(model: CovModel, g: usize, layout: &LatentLayout) -> usize {
    let g = g as i64;
    let p = layout.p as i64;
    let co = (layout.c + layout.o) as i64;
    let count = if layout.has_nominal() {
        match model {
            CovModel::EII => 1,
            CovModel::VII => 2 * g - 1,
            CovModel::EEI => co,
            CovModel::VEI => 2 * g + co - 2,
            CovModel::EVI => g * (p - 2) + co - p + 2,
            CovModel::VVI => p * (g - 1) + layout.o as i64,
        }
    } else {
        match model {
            CovModel::EII => 1,
            CovModel::VII => g,
            CovModel::EEI => 1 + p,
            CovModel::VEI => g + p,
            CovModel::EVI => 1 + g * p,
            CovModel::VVI => g * (1 + p),
        }
    };
    count.max(0) as usize
}

/// Total free parameter count: mixing weights, means (one degree of freedom
/// removed per nominal dimension by the centering constraint) and the
/// covariance count for the model.
pub fn count_free_parameters(model: CovModel, g: usize, layout: &LatentLayout) -> usize {
    assert!(g >= 1);
    let co = layout.c + layout.o;
    let nominal_dims = layout.p - co;
    (g - 1) + g * co + (g - 1) * nominal_dims + covariance_param_count(model, g, layout)
}
