//! The (Monte Carlo) EM fitting algorithm.
//!
//! The E-step computes responsibilities and the conditional first/second
//! moments of the latent dimensions behind each categorical cell: exact
//! truncated-Gaussian moments for ordinal dims, Monte Carlo tables for
//! nominal dims (rebuilt every iteration with deterministic seeds). The
//! M-step maximises the expected complete-data log-likelihood `Q` for the
//! selected covariance structure and then projects onto the identifiability
//! constraints.

use serde::{Deserialize, Serialize};

use crate::dataset::{MixedDataset, ThresholdSet};
use crate::error::{Error, Result};
use crate::gauss::{norm_logpdf, ordinal_interval_prob, truncated_normal_moments};
use crate::latent::{build_mc_tables, derive_seed, McTables};
use crate::layout::LatentLayout;
use crate::par::map_indexed;
use crate::params::{count_free_parameters, enforce_identifiability, CovModel, ModelParams};
use crate::selection;

const EMPTY_CLUSTER_FRACTION: f64 = 1e-8;
const LOG_FLOOR: f64 = -690.0;
const VARIANCE_FLOOR: f64 = 1e-8;

/// E-step output: responsibilities and conditional latent moments for the
/// categorical dims (`P - C` per observation and cluster).
#[derive(Debug, Clone)]
pub struct EStepQuantities {
    pub n: usize,
    pub g: usize,
    pub cat_dims: usize,
    /// `N x G` responsibilities, rows sum to 1.
    pub tau: Vec<f64>,
    /// `N x G x (P-C)` conditional first moments.
    pub m: Vec<f64>,
    /// `N x G x (P-C)` conditional second moments.
    pub s: Vec<f64>,
    /// Observed joint log-likelihood at the input parameters (exact when no
    /// nominal variables are present, MC-approximated otherwise).
    pub loglik: f64,
    /// Rows whose total density vanished across all clusters (given uniform
    /// responsibilities).
    pub degenerate_rows: usize,
}

impl EStepQuantities {
    #[inline]
    pub fn tau_at(&self, i: usize, g: usize) -> f64 {
        self.tau[i * self.g + g]
    }

    #[inline]
    fn ms_index(&self, i: usize, g: usize, q: usize) -> usize {
        (i * self.g + g) * self.cat_dims + q
    }

    #[inline]
    pub fn m_at(&self, i: usize, g: usize, q: usize) -> f64 {
        self.m[self.ms_index(i, g, q)]
    }

    #[inline]
    pub fn s_at(&self, i: usize, g: usize, q: usize) -> f64 {
        self.s[self.ms_index(i, g, q)]
    }
}

/// Sufficient statistics consumed by the M-step.
#[derive(Debug, Clone)]
pub struct MStepWorkspace {
    /// Cluster masses, sum to `N`.
    pub t: Vec<f64>,
    /// Weighted first-moment sums, `G x P`.
    pub s1: Vec<f64>,
    /// Weighted second-moment sums, `G x P`.
    pub zeta: Vec<f64>,
}

/// Compute responsibilities and conditional latent moments at `params`.
pub fn e_step(
    data: &MixedDataset,
    thresholds: &ThresholdSet,
    layout: &LatentLayout,
    params: &ModelParams,
    mc: &McTables,
) -> EStepQuantities {
    let n = data.n;
    let g_count = params.n_clusters();
    let cat_dims = layout.cat_dims();
    let c = layout.c;
    let o = layout.o;

    let sigma: Vec<Vec<f64>> = (0..g_count)
        .map(|g| params.sigma_diagonal(g, layout))
        .collect();
    let sd: Vec<Vec<f64>> = sigma
        .iter()
        .map(|row| row.iter().map(|v| v.sqrt()).collect())
        .collect();
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();

    struct RowOut {
        tau: Vec<f64>,
        m: Vec<f64>,
        s: Vec<f64>,
        loglik: f64,
        degenerate: bool,
    }

    let rows = map_indexed(n, |i| {
        let mut logdens = vec![0.0f64; g_count];
        let mut m = vec![0.0f64; g_count * cat_dims];
        let mut s = vec![0.0f64; g_count * cat_dims];
        for g in 0..g_count {
            let mut ld = log_pi[g];
            for p in 0..c {
                ld += norm_logpdf(data.cont_at(i, p), params.mu[g][p], sd[g][p]);
            }
            for t in 0..o {
                let level = data.cat_at(i, t);
                let (lo, hi) = thresholds.interval(t, level);
                let dim = layout.ordinal_dim(t);
                let prob = ordinal_interval_prob(params.mu[g][dim], sd[g][dim], lo, hi)
                    .unwrap_or(0.0);
                ld += if prob > 0.0 { prob.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
                let q = dim - c;
                match truncated_normal_moments(params.mu[g][dim], sd[g][dim], lo, hi) {
                    Ok((mm, ss)) => {
                        m[g * cat_dims + q] = mm;
                        s[g * cat_dims + q] = ss;
                    }
                    Err(_) => {
                        // numerically empty interval: the cluster carries no
                        // responsibility here; park the mass at the nearest
                        // finite endpoint
                        let edge = if lo.is_finite() { lo } else { hi };
                        m[g * cat_dims + q] = edge;
                        s[g * cat_dims + q] = edge * edge;
                    }
                }
            }
            for (j, &(start, width)) in layout.nominal_blocks.iter().enumerate() {
                let level = data.cat_at(i, o + j);
                let entry = mc.entry(g, j);
                ld += entry.probs[(level - 1) as usize].ln();
                let mean = entry.mean_row(level);
                let sq = entry.sq_row(level);
                let q0 = start - c;
                for w in 0..width {
                    m[g * cat_dims + q0 + w] = mean[w];
                    s[g * cat_dims + q0 + w] = sq[w];
                }
            }
            logdens[g] = ld;
        }

        let max_ld = logdens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut tau = vec![0.0f64; g_count];
        let (loglik, degenerate) = if max_ld == f64::NEG_INFINITY || max_ld.is_nan() {
            for t in tau.iter_mut() {
                *t = 1.0 / g_count as f64;
            }
            (LOG_FLOOR, true)
        } else {
            let mut total = 0.0;
            for g in 0..g_count {
                let w = (logdens[g] - max_ld).exp();
                tau[g] = w;
                total += w;
            }
            for t in tau.iter_mut() {
                *t /= total;
            }
            (max_ld + total.ln(), false)
        };
        RowOut {
            tau,
            m,
            s,
            loglik,
            degenerate,
        }
    });

    let mut tau = Vec::with_capacity(n * g_count);
    let mut m = Vec::with_capacity(n * g_count * cat_dims);
    let mut s = Vec::with_capacity(n * g_count * cat_dims);
    let mut loglik = 0.0;
    let mut degenerate_rows = 0;
    for row in rows {
        tau.extend_from_slice(&row.tau);
        m.extend_from_slice(&row.m);
        s.extend_from_slice(&row.s);
        loglik += row.loglik;
        degenerate_rows += usize::from(row.degenerate);
    }
    EStepQuantities {
        n,
        g: g_count,
        cat_dims,
        tau,
        m,
        s,
        loglik,
        degenerate_rows,
    }
}

/// Accumulate the weighted moment sums consumed by the M-step.
pub fn build_workspace(
    data: &MixedDataset,
    q: &EStepQuantities,
    layout: &LatentLayout,
) -> MStepWorkspace {
    let g_count = q.g;
    let p = layout.p;
    let c = layout.c;
    let mut t = vec![0.0f64; g_count];
    let mut s1 = vec![0.0f64; g_count * p];
    let mut zeta = vec![0.0f64; g_count * p];
    for i in 0..q.n {
        for g in 0..g_count {
            let w = q.tau_at(i, g);
            t[g] += w;
            for d in 0..c {
                let z = data.cont_at(i, d);
                s1[g * p + d] += w * z;
                zeta[g * p + d] += w * z * z;
            }
            for dq in 0..q.cat_dims {
                s1[g * p + c + dq] += w * q.m_at(i, g, dq);
                zeta[g * p + c + dq] += w * q.s_at(i, g, dq);
            }
        }
    }
    MStepWorkspace { t, s1, zeta }
}

/// Expected complete-data log-likelihood (up to its additive constant) of
/// `params` against frozen E-step sufficient statistics.
pub fn q_value(params: &ModelParams, ws: &MStepWorkspace, layout: &LatentLayout) -> f64 {
    let g_count = params.n_clusters();
    let p = layout.p;
    let co = layout.c + layout.o;
    let mut q = 0.0;
    for g in 0..g_count {
        q += ws.t[g] * params.pi[g].ln();
        for d in 0..p {
            let vol = if d < co {
                params.lambda[g]
            } else {
                params.lambda_tilde[g]
            };
            let var = vol * params.a[g][d];
            let mu = params.mu[g][d];
            let w = ws.zeta[g * p + d] - 2.0 * mu * ws.s1[g * p + d] + mu * mu * ws.t[g];
            q -= 0.5 * (ws.t[g] * var.ln() + w / var);
        }
    }
    q
}

/// Maximise `Q` for `model` given frozen E-step quantities, then project
/// onto the identifiability constraints.
///
/// `prev` supplies the shape block that starts the VEI coordinate sweep;
/// passing `None` starts it from the identity.
pub fn m_step(
    data: &MixedDataset,
    q: &EStepQuantities,
    layout: &LatentLayout,
    model: CovModel,
    prev: Option<&ModelParams>,
) -> Result<ModelParams> {
    let ws = build_workspace(data, q, layout);
    m_step_from_workspace(&ws, q.n, layout, model, prev)
}

/// Maximize `sum_g (-c_g ln(x_g) - v_g / x_g)` over the simplex
/// `sum_g x_g = 1`, `x_g > 0`.
///
/// Stationarity gives `x_g(eta) = 2 v_g / (c_g + sqrt(c_g^2 + 4 eta v_g))`
/// on the locally concave branch; the total is monotone decreasing in the
/// multiplier `eta`, so a bisection pins the simplex constraint. Returns
/// `None` when no interior stationary point reaches the simplex (the caller
/// falls back to plain normalization).
fn simplex_volume_solve(c: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let eval = |eta: f64| -> Vec<f64> {
        c.iter()
            .zip(v)
            .map(|(&c, &v)| 2.0 * v / (c + (c * c + 4.0 * eta * v).max(0.0).sqrt()))
            .collect()
    };
    let total = |eta: f64| eval(eta).iter().sum::<f64>();
    let eta_min = c
        .iter()
        .zip(v)
        .map(|(&c, &v)| -c * c / (4.0 * v))
        .fold(f64::NEG_INFINITY, f64::max);
    if total(eta_min) < 1.0 {
        return None;
    }
    let mut lo = eta_min;
    let mut hi = eta_min.abs().max(1.0);
    while total(hi) > 1.0 {
        hi = hi.abs() * 4.0;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let mut x = eval(0.5 * (lo + hi));
    let s: f64 = x.iter().sum();
    for xi in x.iter_mut() {
        *xi /= s;
    }
    Some(x)
}

/// Simplex-constrained volume update with normalization fallback.
fn constrained_volumes(c: &[f64], v: &[f64]) -> Vec<f64> {
    match simplex_volume_solve(c, v) {
        Some(x) => x,
        None => {
            let mut x: Vec<f64> = c.iter().zip(v).map(|(&c, &v)| v / c).collect();
            let s: f64 = x.iter().sum();
            for xi in x.iter_mut() {
                *xi /= s;
            }
            x
        }
    }
}

/// M-step from precomputed sufficient statistics.
///
/// Mixing weights and continuous/ordinal means have closed forms. Nominal
/// means (zero weighted-mean constraint) and the covariance blocks
/// (geometric-mean, sum-to-one and pinning constraints per model) are
/// driven to a joint constrained stationary point by coordinate sweeps,
/// each step an exact constrained maximization, so `Q` never decreases
/// from the input parameters.
pub fn m_step_from_workspace(
    ws: &MStepWorkspace,
    n: usize,
    layout: &LatentLayout,
    model: CovModel,
    prev: Option<&ModelParams>,
) -> Result<ModelParams> {
    let g_count = ws.t.len();
    let p = layout.p;
    let co = layout.c + layout.o;
    let nom = p - co;

    for (g, &mass) in ws.t.iter().enumerate() {
        if mass < EMPTY_CLUSTER_FRACTION * n as f64 {
            return Err(Error::EmptyCluster(g));
        }
    }

    let mut pi: Vec<f64> = ws.t.iter().map(|&t| t / n as f64).collect();
    let mu_hat: Vec<Vec<f64>> = (0..g_count)
        .map(|g| (0..p).map(|d| ws.s1[g * p + d] / ws.t[g]).collect())
        .collect();
    let mut mu = mu_hat.clone();

    // sweep state starts from the previous parameters so every coordinate
    // update ascends from them
    let usable_prev =
        prev.filter(|pp| pp.n_clusters() == g_count && pp.n_dims() == p);
    let mut lambda = match usable_prev {
        Some(pp) => pp.lambda.clone(),
        None => vec![1.0; g_count],
    };
    let mut lambda_tilde = match usable_prev {
        Some(pp) => pp.lambda_tilde.clone(),
        None => vec![1.0; g_count],
    };
    let mut a = match usable_prev {
        Some(pp) => pp.a.clone(),
        None => vec![vec![1.0; p]; g_count],
    };

    for _sweep in 0..100 {
        let snapshot = (
            mu.clone(),
            lambda.clone(),
            lambda_tilde.clone(),
            a.clone(),
            pi.clone(),
        );

        // The weighted-centering constraint on nominal means couples the
        // mixing weights to those means, so maximize over (pi, mu) jointly:
        // profiling the constrained means out leaves
        //   G(pi) = sum_g t_g ln pi_g - (1/2) sum_d b_d(pi)^2 / c_d(pi)
        // with b_d = sum_g pi_g mu_hat_gd and c_d = sum_g pi_g^2 Var_gd / t_g,
        // which a monotone mirror ascent maximizes on the simplex; the means
        // then follow as mu_gd = mu_hat_gd - (b_d / c_d) pi_g Var_gd / t_g.
        if nom > 0 {
            let var = |g: usize, d: usize, lt: &[f64], av: &[Vec<f64>]| lt[g] * av[g][d];
            let objective = |pi: &[f64], lt: &[f64], av: &[Vec<f64>]| -> f64 {
                let mut val: f64 = (0..g_count).map(|g| ws.t[g] * pi[g].ln()).sum();
                for d in co..p {
                    let b: f64 = (0..g_count).map(|g| pi[g] * mu_hat[g][d]).sum();
                    let c: f64 = (0..g_count)
                        .map(|g| pi[g] * pi[g] * var(g, d, lt, av) / ws.t[g])
                        .sum();
                    val -= 0.5 * b * b / c;
                }
                val
            };
            let mut value = objective(&pi, &lambda_tilde, &a);
            let mut eta = 1.0 / n as f64;
            for _ in 0..500 {
                let mut grad: Vec<f64> = (0..g_count).map(|g| ws.t[g] / pi[g]).collect();
                for d in co..p {
                    let b: f64 = (0..g_count).map(|g| pi[g] * mu_hat[g][d]).sum();
                    let c: f64 = (0..g_count)
                        .map(|g| pi[g] * pi[g] * var(g, d, &lambda_tilde, &a) / ws.t[g])
                        .sum();
                    for g in 0..g_count {
                        grad[g] -= b * mu_hat[g][d] / c
                            - b * b * pi[g] * var(g, d, &lambda_tilde, &a)
                                / (ws.t[g] * c * c);
                    }
                }
                let mean: f64 = (0..g_count).map(|g| pi[g] * grad[g]).sum();
                let residual = (0..g_count)
                    .map(|g| (pi[g] * (grad[g] - mean)).abs())
                    .fold(0.0f64, f64::max);
                if residual < 1e-13 * n as f64 {
                    break;
                }
                let mut improved = false;
                for _ in 0..60 {
                    let mut cand: Vec<f64> = (0..g_count)
                        .map(|g| pi[g] * (eta * (grad[g] - mean)).min(30.0).exp())
                        .collect();
                    let total: f64 = cand.iter().sum();
                    for x in cand.iter_mut() {
                        *x /= total;
                    }
                    let cand_value = objective(&cand, &lambda_tilde, &a);
                    if cand_value >= value {
                        improved = cand_value > value;
                        pi = cand;
                        value = cand_value;
                        eta *= 2.0;
                        break;
                    }
                    eta *= 0.5;
                }
                if !improved {
                    break;
                }
            }
            for d in co..p {
                let b: f64 = (0..g_count).map(|g| pi[g] * mu_hat[g][d]).sum();
                let c: f64 = (0..g_count)
                    .map(|g| pi[g] * pi[g] * var(g, d, &lambda_tilde, &a) / ws.t[g])
                    .sum();
                let kappa = -b / c;
                for g in 0..g_count {
                    mu[g][d] =
                        mu_hat[g][d] + kappa * pi[g] * var(g, d, &lambda_tilde, &a) / ws.t[g];
                }
            }
        }

        // weighted squared deviations about the current means
        let w = |g: usize, d: usize| -> f64 {
            let raw = ws.zeta[g * p + d] - 2.0 * mu[g][d] * ws.s1[g * p + d]
                + mu[g][d] * mu[g][d] * ws.t[g];
            raw.max(VARIANCE_FLOOR * ws.t[g])
        };

        // continuous/ordinal block
        match model {
            CovModel::EII => {
                let num: f64 = (0..g_count)
                    .map(|g| (0..co).map(|d| w(g, d)).sum::<f64>())
                    .sum();
                let l = num / (co as f64 * n as f64);
                lambda = vec![l; g_count];
            }
            CovModel::VII => {
                for g in 0..g_count {
                    lambda[g] =
                        (0..co).map(|d| w(g, d)).sum::<f64>() / (co as f64 * ws.t[g]);
                }
            }
            CovModel::EEI => {
                // pooled per-dim variances factor exactly into volume x shape
                let pooled: Vec<f64> = (0..co)
                    .map(|d| (0..g_count).map(|g| w(g, d)).sum::<f64>() / n as f64)
                    .collect();
                let log_gm = pooled.iter().map(|x| x.ln()).sum::<f64>() / co as f64;
                let l = log_gm.exp();
                lambda = vec![l; g_count];
                for g in 0..g_count {
                    for d in 0..co {
                        a[g][d] = pooled[d] / l;
                    }
                }
            }
            CovModel::VEI => {
                // shared shape given volumes (exact under the geometric-mean
                // constraint), then volumes given shape
                let mut shape: Vec<f64> = (0..co)
                    .map(|d| (0..g_count).map(|g| w(g, d) / lambda[g]).sum::<f64>())
                    .collect();
                let log_gm = shape.iter().map(|x| x.ln()).sum::<f64>() / co as f64;
                let gm = log_gm.exp();
                for x in shape.iter_mut() {
                    *x /= gm;
                }
                for g in 0..g_count {
                    lambda[g] = (0..co).map(|d| w(g, d) / shape[d]).sum::<f64>()
                        / (co as f64 * ws.t[g]);
                    for d in 0..co {
                        a[g][d] = shape[d];
                    }
                }
            }
            CovModel::EVI => {
                // per-cluster shape is scale-free; shared volume pools the rest
                for g in 0..g_count {
                    let d_g: Vec<f64> = (0..co).map(|d| w(g, d) / ws.t[g]).collect();
                    let log_gm = d_g.iter().map(|x| x.ln()).sum::<f64>() / co as f64;
                    let gm = log_gm.exp();
                    for d in 0..co {
                        a[g][d] = d_g[d] / gm;
                    }
                }
                let l: f64 = (0..g_count)
                    .map(|g| (0..co).map(|d| w(g, d) / a[g][d]).sum::<f64>())
                    .sum::<f64>()
                    / (co as f64 * n as f64);
                lambda = vec![l; g_count];
            }
            CovModel::VVI => {
                for g in 0..g_count {
                    let d_g: Vec<f64> = (0..co).map(|d| w(g, d) / ws.t[g]).collect();
                    let log_gm = d_g.iter().map(|x| x.ln()).sum::<f64>() / co as f64;
                    lambda[g] = log_gm.exp();
                    for d in 0..co {
                        a[g][d] = d_g[d] / lambda[g];
                    }
                }
            }
        }

        // nominal block
        if nom > 0 {
            match model {
                CovModel::EII | CovModel::EEI => {
                    // lambda_tilde and nominal shape pinned to 1
                }
                CovModel::VII | CovModel::VEI => {
                    let c: Vec<f64> = ws.t.iter().map(|&t| nom as f64 * t).collect();
                    let v: Vec<f64> = (0..g_count)
                        .map(|g| (co..p).map(|d| w(g, d)).sum::<f64>())
                        .collect();
                    lambda_tilde = constrained_volumes(&c, &v);
                }
                CovModel::EVI => {
                    for d in co..p {
                        let v: Vec<f64> = (0..g_count).map(|g| w(g, d)).collect();
                        let col = constrained_volumes(&ws.t, &v);
                        for g in 0..g_count {
                            a[g][d] = col[g];
                        }
                    }
                }
                CovModel::VVI => {
                    let c: Vec<f64> = ws.t.iter().map(|&t| nom as f64 * t).collect();
                    let v: Vec<f64> = (0..g_count)
                        .map(|g| (co..p).map(|d| w(g, d) / a[g][d]).sum::<f64>())
                        .collect();
                    lambda_tilde = constrained_volumes(&c, &v);
                    for d in co..p {
                        let v: Vec<f64> =
                            (0..g_count).map(|g| w(g, d) / lambda_tilde[g]).collect();
                        let col = constrained_volumes(&ws.t, &v);
                        for g in 0..g_count {
                            a[g][d] = col[g];
                        }
                    }
                }
            }
        }

        let mut delta = 0.0f64;
        for g in 0..g_count {
            delta = delta
                .max((lambda[g] - snapshot.1[g]).abs())
                .max((lambda_tilde[g] - snapshot.2[g]).abs())
                .max((pi[g] - snapshot.4[g]).abs());
            for d in 0..p {
                delta = delta
                    .max((mu[g][d] - snapshot.0[g][d]).abs())
                    .max((a[g][d] - snapshot.3[g][d]).abs());
            }
        }
        if delta < 1e-12 {
            break;
        }
    }

    let params = ModelParams {
        model,
        pi,
        mu,
        lambda,
        lambda_tilde,
        a,
    };
    Ok(enforce_identifiability(params, layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    KMeans,
    Hierarchical,
    Random,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<InitMethod> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" => Ok(InitMethod::KMeans),
            "hierarchical" => Ok(InitMethod::Hierarchical),
            "random" => Ok(InitMethod::Random),
            other => Err(Error::InvalidParameter(format!(
                "unknown init method '{other}' (expected kmeans, hierarchical or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: CovModel,
    pub n_clusters: usize,
    pub max_iters: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub init: InitMethod,
    /// Running-mean window for convergence assessment.
    pub window: usize,
    /// Relative-change tolerance on windowed parameter means.
    pub tolerance: f64,
    /// Final estimates average this many trailing iterations when nominal
    /// variables are present (1 disables averaging).
    pub averaging_window: usize,
    pub store_tau: bool,
}

impl FitConfig {
    pub fn new(model: CovModel, n_clusters: usize) -> FitConfig {
        FitConfig {
            model,
            n_clusters,
            max_iters: 500,
            mc_samples: 2000,
            seed: 1,
            init: InitMethod::KMeans,
            window: 100,
            tolerance: 1e-2,
            averaging_window: 100,
            store_tau: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub assignments: Vec<usize>,
    pub tau: Option<Vec<f64>>,
    pub trace_labels: Vec<String>,
    /// Per-iteration flattened parameter vectors.
    pub traces: Vec<Vec<f64>>,
    /// Per-iteration observed joint log-likelihood (evaluated at the
    /// parameters entering each iteration).
    pub loglik_trace: Vec<f64>,
    /// Product-of-marginals approximation of the observed log-likelihood at
    /// the final parameters.
    pub approx_loglik: f64,
    pub bic: f64,
    pub nu: usize,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub degenerate_rows: usize,
}

impl FitResult {
    pub fn to_json_value(&self, layout: &LatentLayout) -> serde_json::Value {
        serde_json::json!({
            "model": self.params.model,
            "n_clusters": self.params.n_clusters(),
            "params": self.params.to_json_value(layout),
            "assignments": self.assignments,
            "tau": self.tau,
            "approx_loglik": self.approx_loglik,
            "bic": self.bic,
            "n_free_parameters": self.nu,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts": self.restarts,
            "degenerate_rows": self.degenerate_rows,
        })
    }

    /// Trace CSV: one row per iteration, `iteration,loglik,<parameters>`.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["iteration".to_string(), "loglik".to_string()];
        header.extend(self.trace_labels.iter().cloned());
        wtr.write_record(&header)?;
        for (it, row) in self.traces.iter().enumerate() {
            let mut rec = vec![it.to_string(), format!("{}", self.loglik_trace[it])];
            rec.extend(row.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Initial parameters from a hard partition of the data.
///
/// The partition comes from k-means, complete-linkage hierarchical
/// clustering or random assignment on the standardized integer coding of
/// all columns; parameters follow from one M-step with indicator
/// responsibilities and untruncated pooled latent moments on the
/// categorical dims.
pub fn initialize(
    data: &MixedDataset,
    layout: &LatentLayout,
    method: InitMethod,
    seed: u64,
    n_clusters: usize,
    model: CovModel,
) -> Result<ModelParams> {
    if n_clusters > data.n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {n_clusters} clusters from {} rows",
            data.n
        )));
    }
    let features = standardized_coding(data);
    let labels = match method {
        InitMethod::KMeans => kmeans_partition(&features, data.n, n_clusters, seed),
        InitMethod::Hierarchical => hierarchical_partition(&features, data.n, n_clusters),
        InitMethod::Random => random_partition(data.n, n_clusters, seed)?,
    };
    params_from_partition(data, layout, &labels, n_clusters, model)
}

/// One M-step from indicator responsibilities; categorical latent moments
/// start at the untruncated pooled values (mean 0, second moment 1).
pub fn params_from_partition(
    data: &MixedDataset,
    layout: &LatentLayout,
    labels: &[usize],
    n_clusters: usize,
    model: CovModel,
) -> Result<ModelParams> {
    let n = data.n;
    let cat_dims = layout.cat_dims();
    let mut tau = vec![0.0f64; n * n_clusters];
    for (i, &l) in labels.iter().enumerate() {
        tau[i * n_clusters + l] = 1.0;
    }
    let q = EStepQuantities {
        n,
        g: n_clusters,
        cat_dims,
        tau,
        m: vec![0.0; n * n_clusters * cat_dims],
        s: vec![1.0; n * n_clusters * cat_dims],
        loglik: f64::NAN,
        degenerate_rows: 0,
    };
    m_step(data, &q, layout, model, None)
}

/// Standardized numeric coding of every column (categoricals by their
/// integer level), used only to seed the initial partition.
fn standardized_coding(data: &MixedDataset) -> Vec<f64> {
    let n = data.n;
    let j = data.n_cols();
    let mut out = vec![0.0f64; n * j];
    for col in 0..j {
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                if col < data.n_cont {
                    data.cont_at(i, col)
                } else {
                    f64::from(data.cat_at(i, col - data.n_cont))
                }
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt().max(1e-12);
        for i in 0..n {
            out[i * j + col] = (raw[i] - mean) / sd;
        }
    }
    out
}

fn kmeans_partition(features: &[f64], n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let j = features.len() / n;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0, 0));
    let picks = sample(&mut rng, n, k);
    let mut centers: Vec<f64> = Vec::with_capacity(k * j);
    for idx in picks.iter() {
        centers.extend_from_slice(&features[idx * j..(idx + 1) * j]);
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let row = &features[i * j..(i + 1) * j];
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d: f64 = row
                    .iter()
                    .zip(&centers[c * j..(c + 1) * j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0f64; k * j];
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..j {
                sums[labels[i] * j + d] += features[i * j + d];
            }
        }
        // an emptied center grabs the row farthest from its own center
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&x, &y| {
                        let dist = |i: usize| -> f64 {
                            features[i * j..(i + 1) * j]
                                .iter()
                                .zip(&centers[labels[i] * j..(labels[i] + 1) * j])
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum()
                        };
                        dist(x).partial_cmp(&dist(y)).unwrap()
                    })
                    .unwrap();
                let old = labels[far];
                counts[old] -= 1;
                counts[c] += 1;
                for d in 0..j {
                    sums[old * j + d] -= features[far * j + d];
                    sums[c * j + d] += features[far * j + d];
                }
                labels[far] = c;
                changed = true;
            }
        }
        for c in 0..k {
            for d in 0..j {
                centers[c * j + d] = sums[c * j + d] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn hierarchical_partition(features: &[f64], n: usize, k: usize) -> Vec<usize> {
    let j = features.len() / n;
    // complete linkage on Euclidean distance, naive agglomeration
    let mut dist = vec![0.0f64; n * n];
    for x in 0..n {
        for y in (x + 1)..n {
            let d: f64 = features[x * j..(x + 1) * j]
                .iter()
                .zip(&features[y * j..(y + 1) * j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[x * n + y] = d;
            dist[y * n + x] = d;
        }
    }
    let mut active: Vec<bool> = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut clusters = n;
    while clusters > k {
        let mut best = (0usize, 0usize);
        let mut best_d = f64::INFINITY;
        for x in 0..n {
            if !active[x] {
                continue;
            }
            for y in (x + 1)..n {
                if active[y] && dist[x * n + y] < best_d {
                    best_d = dist[x * n + y];
                    best = (x, y);
                }
            }
        }
        let (x, y) = best;
        // complete linkage: merged distance is the max of the pair
        for z in 0..n {
            if active[z] && z != x && z != y {
                let d = dist[x * n + z].max(dist[y * n + z]);
                dist[x * n + z] = d;
                dist[z * n + x] = d;
            }
        }
        let moved = std::mem::take(&mut members[y]);
        members[x].extend(moved);
        active[y] = false;
        clusters -= 1;
    }
    let mut labels = vec![0usize; n];
    let mut next = 0usize;
    for (c, mem) in members.iter().enumerate() {
        if active[c] {
            for &i in mem {
                labels[i] = next;
            }
            next += 1;
        }
    }
    labels
}

fn random_partition(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    use rand::Rng;
    use rand::SeedableRng;
    for attempt in 0..10u64 {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt, 1, 0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            return Ok(labels);
        }
    }
    Err(Error::Other(format!(
        "random initialization failed to produce {k} nonempty groups after 10 attempts"
    )))
}

/// Windowed convergence check: compares the running mean of each flattened
/// parameter over the last `window` iterations against the previous window.
fn converged(traces: &[Vec<f64>], window: usize, tol: f64) -> bool {
    let t = traces.len();
    if t < 2 * window {
        return false;
    }
    let dims = traces[0].len();
    for k in 0..dims {
        let recent: f64 =
            traces[t - window..t].iter().map(|r| r[k]).sum::<f64>() / window as f64;
        let older: f64 = traces[t - 2 * window..t - window]
            .iter()
            .map(|r| r[k])
            .sum::<f64>()
            / window as f64;
        let rel = (recent - older).abs() / older.abs().max(1.0);
        if rel >= tol {
            return false;
        }
    }
    true
}

/// Element-wise average of trailing parameter snapshots, re-projected onto
/// the constraints.
fn average_params(history: &[ModelParams], layout: &LatentLayout) -> ModelParams {
    let k = history.len() as f64;
    let mut out = history[0].clone();
    let g_count = out.n_clusters();
    let p = out.n_dims();
    for snap in &history[1..] {
        for g in 0..g_count {
            out.pi[g] += snap.pi[g];
            out.lambda[g] += snap.lambda[g];
            out.lambda_tilde[g] += snap.lambda_tilde[g];
            for d in 0..p {
                out.mu[g][d] += snap.mu[g][d];
                out.a[g][d] += snap.a[g][d];
            }
        }
    }
    for g in 0..g_count {
        out.pi[g] /= k;
        out.lambda[g] /= k;
        out.lambda_tilde[g] /= k;
        for d in 0..p {
            out.mu[g][d] /= k;
            out.a[g][d] /= k;
        }
    }
    enforce_identifiability(out, layout)
}

/// Fit one model by (MC)EM.
///
/// Restarts from a fresh random initialization (derived seed) when a
/// cluster empties, at most three times. Deterministic given
/// `(data, config)`.
pub fn fit(data: &MixedDataset, config: &FitConfig) -> Result<FitResult> {
    let layout = crate::layout::build_layout(&data.schema);
    let thresholds = crate::dataset::compute_thresholds(data)?;
    fit_with(data, &thresholds, &layout, config)
}

/// [`fit`] with precomputed thresholds and layout.
pub fn fit_with(
    data: &MixedDataset,
    thresholds: &ThresholdSet,
    layout: &LatentLayout,
    config: &FitConfig,
) -> Result<FitResult> {
    let mut restarts = 0usize;
    'attempts: loop {
        let (method, seed) = if restarts == 0 {
            (config.init, config.seed)
        } else {
            (
                InitMethod::Random,
                derive_seed(config.seed, restarts as u64, 2, 0),
            )
        };
        let mut params = match initialize(
            data,
            layout,
            method,
            seed,
            config.n_clusters,
            config.model,
        ) {
            Ok(p) => p,
            Err(e) => {
                restarts += 1;
                if restarts > 3 {
                    return Err(Error::FitFailed {
                        attempts: restarts,
                        last: e.to_string(),
                    });
                }
                continue 'attempts;
            }
        };

        let mut traces: Vec<Vec<f64>> = Vec::new();
        let mut loglik_trace: Vec<f64> = Vec::new();
        let mut history: Vec<ModelParams> = Vec::new();
        let mut is_converged = false;
        let mut degenerate_rows = 0usize;
        let mut iterations = 0usize;

        for iter in 0..config.max_iters {
            let mc = if layout.has_nominal() {
                build_mc_tables(&params, layout, config.mc_samples, config.seed, iter as u64)
            } else {
                McTables::empty()
            };
            let q = e_step(data, thresholds, layout, &params, &mc);
            degenerate_rows = q.degenerate_rows;
            let next = match m_step(data, &q, layout, config.model, Some(&params)) {
                Ok(p) => p,
                Err(Error::EmptyCluster(g)) => {
                    restarts += 1;
                    if restarts > 3 {
                        return Err(Error::FitFailed {
                            attempts: restarts,
                            last: Error::EmptyCluster(g).to_string(),
                        });
                    }
                    continue 'attempts;
                }
                Err(e) => return Err(e),
            };
            loglik_trace.push(q.loglik);
            params = next;
            traces.push(params.flatten());
            history.push(params.clone());
            iterations = iter + 1;
            if converged(&traces, config.window, config.tolerance) {
                is_converged = true;
                break;
            }
        }

        let avg_window = if layout.has_nominal() {
            config.averaging_window.max(1)
        } else {
            1
        };
        let tail = avg_window.min(history.len());
        let final_params = average_params(&history[history.len() - tail..], layout);

        let final_mc = if layout.has_nominal() {
            build_mc_tables(
                &final_params,
                layout,
                config.mc_samples,
                config.seed,
                iterations as u64 + 1,
            )
        } else {
            McTables::empty()
        };
        let q = e_step(data, thresholds, layout, &final_params, &final_mc);
        let assignments: Vec<usize> = (0..data.n)
            .map(|i| {
                (0..q.g)
                    .max_by(|&x, &y| q.tau_at(i, x).partial_cmp(&q.tau_at(i, y)).unwrap())
                    .unwrap()
            })
            .collect();
        let approx_loglik =
            selection::approx_loglik(data, &final_params, thresholds, layout, &final_mc)?;
        let nu = count_free_parameters(config.model, config.n_clusters, layout);
        let bic = selection::bic_hat(approx_loglik, nu, data.n);
        let tau = config.store_tau.then(|| q.tau.clone());

        return Ok(FitResult {
            trace_labels: final_params.flat_labels(),
            params: final_params,
            assignments,
            tau,
            traces,
            loglik_trace,
            approx_loglik,
            bic,
            nu,
            iterations,
            converged: is_converged,
            restarts,
            degenerate_rows,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_thresholds, load_dataset_str};
    use crate::layout::build_layout;
    use approx::assert_abs_diff_eq;

    fn cont_dataset(rows: &[(f64, f64)]) -> MixedDataset {
        let schema = r#"{"columns":[
            {"name":"x","kind":"continuous"},
            {"name":"y","kind":"continuous"}
        ]}"#;
        let mut csv = String::from("x,y\n");
        for (a, b) in rows {
            csv.push_str(&format!("{a},{b}\n"));
        }
        load_dataset_str(&csv, schema).unwrap()
    }

    fn blob_data(seed: u64, n_per: usize, sep: f64) -> (MixedDataset, Vec<usize>) {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for g in 0..2usize {
            let center = g as f64 * sep;
            for _ in 0..n_per {
                let x = center + rng.gen::<f64>() - 0.5;
                let y = center + rng.gen::<f64>() - 0.5;
                rows.push((x, y));
                labels.push(g);
            }
        }
        (cont_dataset(&rows), labels)
    }

    #[test]
    fn single_cluster_tau_is_one() {
        let data = cont_dataset(&[(0.0, 1.0), (2.0, -1.0), (0.5, 0.5)]);
        let layout = build_layout(&data.schema);
        let th = compute_thresholds(&data).unwrap();
        let params =
            params_from_partition(&data, &layout, &[0, 0, 0], 1, CovModel::VVI).unwrap();
        let q = e_step(&data, &th, &layout, &params, &McTables::empty());
        for i in 0..3 {
            assert_abs_diff_eq!(q.tau_at(i, 0), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identical_clusters_split_evenly() {
        let data = cont_dataset(&[(0.0, 1.0), (2.0, -1.0), (0.5, 0.5), (1.0, 1.0)]);
        let layout = build_layout(&data.schema);
        let th = compute_thresholds(&data).unwrap();
        let one = params_from_partition(&data, &layout, &[0; 4], 1, CovModel::VVI).unwrap();
        let params = ModelParams {
            model: CovModel::VVI,
            pi: vec![0.5, 0.5],
            mu: vec![one.mu[0].clone(), one.mu[0].clone()],
            lambda: vec![one.lambda[0], one.lambda[0]],
            lambda_tilde: vec![1.0, 1.0],
            a: vec![one.a[0].clone(), one.a[0].clone()],
        };
        let q = e_step(&data, &th, &layout, &params, &McTables::empty());
        for i in 0..4 {
            assert_abs_diff_eq!(q.tau_at(i, 0), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_responsibilities_match_direct_ratio() {
        let data = cont_dataset(&[(0.1, -0.4), (3.0, 2.5), (1.5, 1.5), (-1.0, 0.2)]);
        let layout = build_layout(&data.schema);
        let th = compute_thresholds(&data).unwrap();
        let params = ModelParams {
            model: CovModel::VVI,
            pi: vec![0.3, 0.7],
            mu: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
            lambda: vec![1.0, 2.0],
            lambda_tilde: vec![1.0, 1.0],
            a: vec![vec![1.0, 1.0], vec![2.0, 0.5]],
        };
        let q = e_step(&data, &th, &layout, &params, &McTables::empty());
        for i in 0..4 {
            let dens = |g: usize| -> f64 {
                let sig = params.sigma_diagonal(g, &layout);
                let mut d = params.pi[g];
                for p in 0..2 {
                    let z = data.cont_at(i, p) - params.mu[g][p];
                    d *= (-0.5 * z * z / sig[p]).exp()
                        / (2.0 * std::f64::consts::PI * sig[p]).sqrt();
                }
                d
            };
            let expect = dens(0) / (dens(0) + dens(1));
            assert_abs_diff_eq!(q.tau_at(i, 0), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn m_step_recovers_sample_moments_g1_vvi() {
        let data = cont_dataset(&[(1.0, 2.0), (3.0, 0.0), (5.0, 4.0), (7.0, -2.0)]);
        let layout = build_layout(&data.schema);
        let params = params_from_partition(&data, &layout, &[0; 4], 1, CovModel::VVI).unwrap();
        // sample means 4.0, 1.0; population variances 5.0, 5.0
        assert_abs_diff_eq!(params.mu[0][0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(params.mu[0][1], 1.0, epsilon = 1e-12);
        let sig = params.sigma_diagonal(0, &layout);
        assert_abs_diff_eq!(sig[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sig[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn eii_pools_within_cluster_dispersion() {
        // 6 points, indicator partition known; pooled mean squared deviation
        let data = cont_dataset(&[
            (0.0, 0.0),
            (2.0, 0.0),
            (1.0, 2.0),
            (10.0, 10.0),
            (12.0, 10.0),
            (11.0, 12.0),
        ]);
        let layout = build_layout(&data.schema);
        let labels = [0, 0, 0, 1, 1, 1];
        let params =
            params_from_partition(&data, &layout, &labels, 2, CovModel::EII).unwrap();
        // each cluster: deviations (-1,0),(1,0),(0, +-4/3...) -> hand value
        // cluster means (1, 2/3); squared deviations sum per cluster:
        // x: 1+1+0 = 2; y: (2/3)^2*2 + (4/3)^2 = 8/9 + 16/9 = 24/9
        let expected = (2.0 * (2.0 + 24.0 / 9.0)) / (2.0 * 6.0);
        assert_abs_diff_eq!(params.lambda[0], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(params.lambda[1], expected, epsilon = 1e-12);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let data = cont_dataset(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let layout = build_layout(&data.schema);
        let q = EStepQuantities {
            n: 3,
            g: 2,
            cat_dims: 0,
            tau: vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            m: vec![],
            s: vec![],
            loglik: 0.0,
            degenerate_rows: 0,
        };
        assert!(matches!(
            m_step(&data, &q, &layout, CovModel::VVI, None),
            Err(Error::EmptyCluster(1))
        ));
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let (data, truth) = blob_data(3, 40, 12.0);
        let layout = build_layout(&data.schema);
        let params =
            initialize(&data, &layout, InitMethod::KMeans, 7, 2, CovModel::VII).unwrap();
        let th = compute_thresholds(&data).unwrap();
        let q = e_step(&data, &th, &layout, &params, &McTables::empty());
        let labels: Vec<usize> = (0..data.n)
            .map(|i| if q.tau_at(i, 0) > 0.5 { 0 } else { 1 })
            .collect();
        let ari = crate::simulate::adjusted_rand(&labels, &truth).unwrap();
        assert_abs_diff_eq!(ari, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hierarchical_init_gives_nonempty_groups() {
        let (data, _) = blob_data(11, 10, 4.0);
        let layout = build_layout(&data.schema);
        for g in 2..=4usize {
            let params =
                initialize(&data, &layout, InitMethod::Hierarchical, 0, g, CovModel::VVI);
            assert!(params.is_ok(), "G={g}");
        }
    }

    #[test]
    fn random_init_reproducible() {
        let a = random_partition(50, 3, 42).unwrap();
        let b = random_partition(50, 3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_is_deterministic() {
        let (data, _) = blob_data(5, 25, 8.0);
        let mut config = FitConfig::new(CovModel::VII, 2);
        config.max_iters = 60;
        config.window = 10;
        let r1 = fit(&data, &config).unwrap();
        let r2 = fit(&data, &config).unwrap();
        assert_eq!(r1.params.flatten(), r2.params.flatten());
        assert_eq!(r1.assignments, r2.assignments);
        assert_eq!(r1.iterations, r2.iterations);
    }

    #[test]
    fn loglik_monotone_on_continuous_data() {
        let (data, _) = blob_data(9, 30, 3.0);
        let mut config = FitConfig::new(CovModel::VVI, 2);
        config.max_iters = 80;
        config.window = 10;
        let r = fit(&data, &config).unwrap();
        for w in r.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "loglik decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn one_em_iteration_is_label_equivariant() {
        let (data, _) = blob_data(13, 20, 6.0);
        let layout = build_layout(&data.schema);
        let th = compute_thresholds(&data).unwrap();
        let params =
            initialize(&data, &layout, InitMethod::KMeans, 3, 2, CovModel::VVI).unwrap();
        let swapped = ModelParams {
            model: params.model,
            pi: vec![params.pi[1], params.pi[0]],
            mu: vec![params.mu[1].clone(), params.mu[0].clone()],
            lambda: vec![params.lambda[1], params.lambda[0]],
            lambda_tilde: vec![params.lambda_tilde[1], params.lambda_tilde[0]],
            a: vec![params.a[1].clone(), params.a[0].clone()],
        };
        let step = |p: &ModelParams| -> ModelParams {
            let q = e_step(&data, &th, &layout, p, &McTables::empty());
            m_step(&data, &q, &layout, CovModel::VVI, Some(p)).unwrap()
        };
        let out = step(&params);
        let out_swapped = step(&swapped);
        for d in 0..layout.p {
            assert_abs_diff_eq!(out.mu[0][d], out_swapped.mu[1][d], epsilon = 1e-10);
            assert_abs_diff_eq!(out.mu[1][d], out_swapped.mu[0][d], epsilon = 1e-10);
        }
        assert_abs_diff_eq!(out.pi[0], out_swapped.pi[1], epsilon = 1e-12);
    }

    #[test]
    fn workspace_masses_sum_to_n() {
        let (data, _) = blob_data(21, 15, 2.0);
        let layout = build_layout(&data.schema);
        let th = compute_thresholds(&data).unwrap();
        let params =
            initialize(&data, &layout, InitMethod::Random, 1, 3, CovModel::EEI).unwrap();
        let q = e_step(&data, &th, &layout, &params, &McTables::empty());
        let ws = build_workspace(&data, &q, &layout);
        assert_abs_diff_eq!(ws.t.iter().sum::<f64>(), data.n as f64, epsilon = 1e-9);
    }
}
