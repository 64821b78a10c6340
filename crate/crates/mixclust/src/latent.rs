//! Monte Carlo category probabilities and conditional latent moments for
//! nominal variables.
//!
//! A nominal variable with `K` levels is generated by a `(K-1)`-dimensional
//! latent Gaussian: level 1 when every component is negative, otherwise the
//! index of the maximal component plus one. Category probabilities and the
//! conditional first/second moments given each observed level are estimated
//! from `S` simulated vectors per (cluster, variable) pair, refreshed each
//! iteration with deterministic per-cell seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::layout::LatentLayout;
use crate::par::map_indexed;
use crate::params::ModelParams;

/// splitmix64 step, used to derive independent stream seeds.
#[inline]
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for one (iteration, cluster, variable) cell.
pub fn derive_seed(master: u64, iteration: u64, g: u64, j: u64) -> u64 {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ iteration);
    s = splitmix64(s ^ g.wrapping_mul(0x0100_0000_01b3));
    splitmix64(s ^ j.wrapping_mul(0x5851_f42d_4c95_7f2d))
}

/// Classify a latent vector into its nominal level (1-based). Ties resolve
/// to the lowest index.
#[inline]
pub fn classify(w: &[f64]) -> u32 {
    let mut best = 0usize;
    let mut best_val = w[0];
    for (idx, &v) in w.iter().enumerate().skip(1) {
        if v > best_val {
            best_val = v;
            best = idx;
        }
    }
    if best_val < 0.0 {
        1
    } else {
        best as u32 + 2
    }
}

/// MC summary for one (cluster, nominal variable) cell.
#[derive(Debug, Clone, Serialize)]
pub struct McEntry {
    /// Floored and renormalized category probabilities, length `K`.
    pub probs: Vec<f64>,
    /// Raw per-category sample counts, length `K` (sum to `S`).
    pub counts: Vec<u64>,
    /// Conditional first moments, `K x (K-1)` row-major.
    pub cond_mean: Vec<f64>,
    /// Conditional per-dimension second moments `E[z_p^2]`, `K x (K-1)`.
    pub cond_sq: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

impl McEntry {
    #[inline]
    pub fn mean_row(&self, level: u32) -> &[f64] {
        let d = self.cond_mean.len() / self.probs.len();
        let k = (level - 1) as usize;
        &self.cond_mean[k * d..(k + 1) * d]
    }

    #[inline]
    pub fn sq_row(&self, level: u32) -> &[f64] {
        let d = self.cond_sq.len() / self.probs.len();
        let k = (level - 1) as usize;
        &self.cond_sq[k * d..(k + 1) * d]
    }
}

/// Build the MC table entry for one cell.
///
/// `mu` and `var` are the latent mean and diagonal variance of the nominal
/// block (width `K-1`). Zero-count categories get probability `1/(2S)`
/// before renormalization and fall back to the untruncated moments.
pub fn nominal_mc_table(mu: &[f64], var: &[f64], samples: usize, seed: u64) -> McEntry {
    assert!(samples >= 1);
    let d = mu.len();
    let k = d + 1;
    let sd: Vec<f64> = var
        .iter()
        .map(|&v| {
            assert!(v > 0.0, "nominal block variance must be positive");
            v.sqrt()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; k];
    let mut sum = vec![0.0f64; k * d];
    let mut sq_sum = vec![0.0f64; k * d];
    let mut w = vec![0.0f64; d];
    for _ in 0..samples {
        for p in 0..d {
            let e: f64 = standard_normal(&mut rng);
            w[p] = mu[p] + sd[p] * e;
        }
        let cat = (classify(&w) - 1) as usize;
        counts[cat] += 1;
        for p in 0..d {
            sum[cat * d + p] += w[p];
            sq_sum[cat * d + p] += w[p] * w[p];
        }
    }

    let s = samples as f64;
    let floor = 1.0 / (2.0 * s);
    let mut probs: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / s).max(floor))
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }

    let mut cond_mean = vec![0.0f64; k * d];
    let mut cond_sq = vec![0.0f64; k * d];
    for cat in 0..k {
        if counts[cat] == 0 {
            // untruncated fallback for an empty category
            for p in 0..d {
                cond_mean[cat * d + p] = mu[p];
                cond_sq[cat * d + p] = mu[p] * mu[p] + var[p];
            }
        } else {
            let c = counts[cat] as f64;
            for p in 0..d {
                cond_mean[cat * d + p] = sum[cat * d + p] / c;
                cond_sq[cat * d + p] = sq_sum[cat * d + p] / c;
            }
        }
    }

    McEntry {
        probs,
        counts,
        cond_mean,
        cond_sq,
        samples: samples as u64,
        seed,
    }
}

/// Box-free standard normal draw (polar method would consume a variable
/// number of uniforms; Box-Muller keeps the stream layout simple).
#[inline]
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller, using one of the pair; the stream stays reproducible
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// MC tables for every (cluster, nominal variable) cell of one iteration.
#[derive(Debug, Clone, Serialize)]
pub struct McTables {
    pub n_clusters: usize,
    pub n_nominal: usize,
    pub entries: Vec<McEntry>,
}

impl McTables {
    pub fn empty() -> McTables {
        McTables {
            n_clusters: 0,
            n_nominal: 0,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn entry(&self, g: usize, j: usize) -> &McEntry {
        &self.entries[g * self.n_nominal + j]
    }
}

/// Build all MC tables for the current parameters, one cell per
/// (cluster, nominal variable), evaluated concurrently.
pub fn build_mc_tables(
    params: &ModelParams,
    layout: &LatentLayout,
    samples: usize,
    master_seed: u64,
    iteration: u64,
) -> McTables {
    let n_nominal = layout.n_nominal();
    if n_nominal == 0 {
        return McTables::empty();
    }
    let g_count = params.n_clusters();
    let entries = map_indexed(g_count * n_nominal, |cell| {
        let g = cell / n_nominal;
        let j = cell % n_nominal;
        let (start, width) = layout.nominal_blocks[j];
        let sigma = params.sigma_diagonal(g, layout);
        let mu = &params.mu[g][start..start + width];
        let var = &sigma[start..start + width];
        let seed = derive_seed(master_seed, iteration, g as u64, j as u64);
        nominal_mc_table(mu, var, samples, seed)
    });
    McTables {
        n_clusters: g_count,
        n_nominal,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::ordinal_interval_prob;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classification_rule() {
        assert_eq!(classify(&[-0.3, -1.0]), 1);
        assert_eq!(classify(&[0.5, -1.0]), 2);
        assert_eq!(classify(&[0.5, 1.0]), 3);
        // tie: lowest index wins
        assert_eq!(classify(&[0.7, 0.7]), 2);
    }

    #[test]
    fn symmetric_three_level_probs() {
        let entry = nominal_mc_table(&[0.0, 0.0], &[1.0, 1.0], 200_000, 7);
        // P(both < 0) = 1/4; the rest splits evenly
        let se = (0.25f64 * 0.75 / 200_000.0).sqrt();
        assert_abs_diff_eq!(entry.probs[0], 0.25, epsilon = 3.0 * se);
        assert_abs_diff_eq!(entry.probs[1], 0.375, epsilon = 3.0 * se);
        assert_abs_diff_eq!(entry.probs[2], 0.375, epsilon = 3.0 * se);
        let total: f64 = entry.probs.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(entry.counts.iter().sum::<u64>(), 200_000);
    }

    #[test]
    fn binary_reduction_matches_probit() {
        // K=2 treated as nominal: P(level 2) = P(z > 0) with z ~ N(mu, s^2)
        for (case, &(mu, sd)) in [(0.4f64, 1.0f64), (-0.8, 2.0), (1.3, 0.5)].iter().enumerate() {
            let entry = nominal_mc_table(&[mu], &[sd * sd], 400_000, 11 + case as u64);
            let exact = ordinal_interval_prob(mu, sd, 0.0, f64::INFINITY).unwrap();
            let se = (exact * (1.0 - exact) / 400_000.0).sqrt();
            assert_abs_diff_eq!(entry.probs[1], exact, epsilon = 3.0 * se);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = nominal_mc_table(&[0.2, -0.4], &[1.0, 0.5], 5_000, 99);
        let b = nominal_mc_table(&[0.2, -0.4], &[1.0, 0.5], 5_000, 99);
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.cond_mean, b.cond_mean);
        assert_eq!(a.cond_sq, b.cond_sq);
    }

    #[test]
    fn law_of_total_expectation_per_dim() {
        // sum_k p_k_raw * E[z_p | k] must reconstruct mu_p (using raw
        // frequencies, before flooring)
        let entry = nominal_mc_table(&[0.3, -0.6, 0.1], &[1.0, 2.0, 0.7], 300_000, 5);
        let d = 3;
        let s = entry.samples as f64;
        for p in 0..d {
            let mut total = 0.0;
            for cat in 0..4 {
                if entry.counts[cat] > 0 {
                    total += entry.counts[cat] as f64 / s * entry.cond_mean[cat * d + p];
                }
            }
            let mc_se = 3.0 * (2.0f64).sqrt() / s.sqrt() * 3.0;
            assert_abs_diff_eq!(total, [0.3, -0.6, 0.1][p], epsilon = mc_se);
        }
    }

    #[test]
    fn derive_seed_spreads() {
        let a = derive_seed(1, 2, 3, 4);
        let b = derive_seed(1, 2, 3, 5);
        let c = derive_seed(1, 2, 4, 4);
        let d = derive_seed(1, 3, 3, 4);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, derive_seed(1, 2, 3, 4));
    }
}
