//! Approximate observed log-likelihood, BIC, and grid search over
//! covariance structures and cluster counts.
//!
//! The exact observed likelihood is intractable once nominal variables
//! enter, so model comparison uses a factored approximation: the Gaussian
//! mixture density of the continuous block times the mixture probability of
//! each observation's full categorical response pattern, with categorical
//! variables treated as independent within a cluster. Distinct patterns are
//! tabulated once and weighted by multiplicity.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{ColumnKind, MixedDataset, ThresholdSet};
use crate::em::{fit_with, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::gauss::{norm_logpdf, ordinal_interval_prob};
use crate::latent::McTables;
use crate::layout::LatentLayout;
use crate::par::map_indexed;
use crate::params::{CovModel, ModelParams};

const LOG_FLOOR: f64 = -690.0;

/// Distinct categorical response patterns with their multiplicities.
#[derive(Debug, Clone)]
pub struct PatternTable {
    pub patterns: Vec<Vec<u32>>,
    pub multiplicities: Vec<usize>,
}

/// Tabulate the categorical block of `data` into distinct patterns.
pub fn pattern_table(data: &MixedDataset) -> PatternTable {
    let n_cat = data.n_cat();
    let mut map: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    for i in 0..data.n {
        let row: Vec<u32> = (0..n_cat).map(|c| data.cat_at(i, c)).collect();
        *map.entry(row).or_insert(0) += 1;
    }
    let mut patterns = Vec::with_capacity(map.len());
    let mut multiplicities = Vec::with_capacity(map.len());
    for (pat, count) in map {
        patterns.push(pat);
        multiplicities.push(count);
    }
    PatternTable {
        patterns,
        multiplicities,
    }
}

/// Factored approximation of the observed log-likelihood at `params`.
///
/// Continuous block: exact Gaussian mixture log-density summed over rows.
/// Categorical block: `sum_m mult_m * ln q_m` where `q_m` mixes, over
/// clusters, the product of per-variable category probabilities (exact
/// interval probabilities for ordinal variables, MC table probabilities for
/// nominal ones).
pub fn approx_loglik(
    data: &MixedDataset,
    params: &ModelParams,
    thresholds: &ThresholdSet,
    layout: &LatentLayout,
    mc: &McTables,
) -> Result<f64> {
    let g_count = params.n_clusters();
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

    let mut total = 0.0;
    if c > 0 {
        let row_ll = map_indexed(data.n, |i| {
            let mut terms = vec![0.0f64; g_count];
            for g in 0..g_count {
                let mut ld = log_pi[g];
                for p in 0..c {
                    ld += norm_logpdf(data.cont_at(i, p), params.mu[g][p], sd[g][p]);
                }
                terms[g] = ld;
            }
            logsumexp(&terms)
        });
        total += row_ll.iter().sum::<f64>();
    }

    if data.n_cat() > 0 {
        // per-cluster category probabilities for every ordinal (variable, level)
        let ordinal_specs = data.ordinal_specs().to_vec();
        let mut ord_probs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let mut per_var = Vec::with_capacity(o);
            for (t, spec) in ordinal_specs.iter().enumerate() {
                let levels = match spec.kind {
                    ColumnKind::Ordinal { levels } => levels,
                    _ => unreachable!(),
                };
                let dim = layout.ordinal_dim(t);
                let probs: Vec<f64> = (1..=levels)
                    .map(|k| {
                        let (lo, hi) = thresholds.interval(t, k);
                        ordinal_interval_prob(params.mu[g][dim], sd[g][dim], lo, hi)
                            .unwrap_or(0.0)
                    })
                    .collect();
                per_var.push(probs);
            }
            ord_probs.push(per_var);
        }

        let table = pattern_table(data);
        for (pat, &mult) in table.patterns.iter().zip(&table.multiplicities) {
            let mut q = 0.0;
            for g in 0..g_count {
                let mut prod = params.pi[g];
                for t in 0..o {
                    prod *= ord_probs[g][t][(pat[t] - 1) as usize];
                }
                for j in 0..layout.n_nominal() {
                    prod *= mc.entry(g, j).probs[(pat[o + j] - 1) as usize];
                }
                q += prod;
            }
            let lq = if q > 0.0 { q.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
            total += mult as f64 * lq;
        }
    }
    Ok(total)
}

/// BIC on the approximated log-likelihood: `2*l - nu*ln(n)`; larger is
/// better.
pub fn bic_hat(loglik: f64, nu: usize, n: usize) -> f64 {
    2.0 * loglik - nu as f64 * (n as f64).ln()
}

fn logsumexp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LOG_FLOOR;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// One grid cell: a (covariance structure, cluster count) pair with its fit
/// outcome.
#[derive(Debug)]
pub struct GridCell {
    pub model: CovModel,
    pub n_clusters: usize,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub model: CovModel,
    pub n_clusters: usize,
    pub bic: Option<f64>,
    pub approx_loglik: Option<f64>,
    pub n_free_parameters: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub error: Option<String>,
    pub selected: bool,
}

/// Grid-search outcome: every cell plus the index of the winner.
#[derive(Debug)]
pub struct SelectionReport {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl SelectionReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn best_fit(&self) -> &FitResult {
        self.cells[self.best].fit.as_ref().unwrap()
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        self.cells
            .iter()
            .enumerate()
            .map(|(idx, cell)| CellSummary {
                model: cell.model,
                n_clusters: cell.n_clusters,
                bic: cell.fit.as_ref().map(|f| f.bic),
                approx_loglik: cell.fit.as_ref().map(|f| f.approx_loglik),
                n_free_parameters: cell.fit.as_ref().map(|f| f.nu),
                iterations: cell.fit.as_ref().map(|f| f.iterations),
                converged: cell.fit.as_ref().is_some_and(|f| f.converged),
                error: cell.error.clone(),
                selected: idx == self.best,
            })
            .collect()
    }

    pub fn to_json_value(&self, layout: &LatentLayout) -> serde_json::Value {
        let best = self.best_cell();
        serde_json::json!({
            "grid": self.summaries(),
            "selected": {
                "model": best.model,
                "n_clusters": best.n_clusters,
            },
            "fit": self.best_fit().to_json_value(layout),
        })
    }

    /// Human-readable BIC table, one row per grid cell.
    pub fn format_table(&self) -> String {
        let mut out = String::from("model  G  converged        BIC    loglik   nu  iters\n");
        for s in self.summaries() {
            let mark = if s.selected { " <- selected" } else { "" };
            match (s.bic, s.approx_loglik, s.n_free_parameters, s.iterations) {
                (Some(bic), Some(ll), Some(nu), Some(it)) => {
                    out.push_str(&format!(
                        "{:<5} {:>2}  {:<9} {:>10.2} {:>9.2} {:>4} {:>6}{}\n",
                        s.model.to_string(),
                        s.n_clusters,
                        if s.converged { "yes" } else { "no" },
                        bic,
                        ll,
                        nu,
                        it,
                        mark
                    ));
                }
                _ => {
                    out.push_str(&format!(
                        "{:<5} {:>2}  failed: {}\n",
                        s.model.to_string(),
                        s.n_clusters,
                        s.error.as_deref().unwrap_or("unknown")
                    ));
                }
            }
        }
        out
    }
}

/// Fit every (model, G) combination and select the converged fit with the
/// highest BIC. Ties break toward fewer free parameters, then fewer
/// clusters.
pub fn grid_search(
    data: &MixedDataset,
    models: &[CovModel],
    g_values: &[usize],
    base: &FitConfig,
) -> Result<SelectionReport> {
    let layout = crate::layout::build_layout(&data.schema);
    let thresholds = crate::dataset::compute_thresholds(data)?;
    let mut cells = Vec::with_capacity(models.len() * g_values.len());
    for &g in g_values {
        for &model in models {
            let mut config = base.clone();
            config.model = model;
            config.n_clusters = g;
            let cell = match fit_with(data, &thresholds, &layout, &config) {
                Ok(fit) => GridCell {
                    model,
                    n_clusters: g,
                    fit: Some(fit),
                    error: None,
                },
                Err(e) => GridCell {
                    model,
                    n_clusters: g,
                    fit: None,
                    error: Some(e.to_string()),
                },
            };
            cells.push(cell);
        }
    }

    let mut best: Option<usize> = None;
    for (idx, cell) in cells.iter().enumerate() {
        let Some(fit) = &cell.fit else { continue };
        if !fit.converged {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let bf = cells[b].fit.as_ref().unwrap();
                fit.bic > bf.bic
                    || (fit.bic == bf.bic
                        && (fit.nu < bf.nu
                            || (fit.nu == bf.nu && cell.n_clusters < cells[b].n_clusters)))
            }
        };
        if better {
            best = Some(idx);
        }
    }
    match best {
        Some(best) => Ok(SelectionReport { cells, best }),
        None => {
            let detail: Vec<String> = cells
                .iter()
                .map(|c| {
                    format!(
                        "{} G={}: {}",
                        c.model,
                        c.n_clusters,
                        c.error.as_deref().unwrap_or("did not converge")
                    )
                })
                .collect();
            Err(Error::GridFailed(detail.join("\n")))
        }
    }
}
