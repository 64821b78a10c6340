//! Synthetic data generation from the latent mixture, plus partition
//! agreement metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnSpec, MixedDataset};
use crate::error::{Error, Result};
use crate::latent::classify;
use crate::layout::build_layout;
use crate::params::ModelParams;

/// Full description of a generating mixture: schema, latent parameters,
/// ordinal cutpoints, sample size and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub schema: Vec<ColumnSpec>,
    pub params: ModelParams,
    /// Interior cutpoints per ordinal column (`K - 1` increasing values).
    pub thresholds: Vec<Vec<f64>>,
    pub n: usize,
    pub seed: u64,
    /// Optional equicorrelation of the latent dims within an observation,
    /// for probing robustness to the diagonal-covariance assumption.
    #[serde(default)]
    pub latent_correlation: Option<f64>,
}

impl GeneratorSpec {
    pub fn from_json(text: &str) -> Result<GeneratorSpec> {
        let spec: GeneratorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let layout = build_layout(&self.schema);
        if self.params.n_dims() != layout.p {
            return Err(Error::InvalidParameter(format!(
                "parameters cover {} latent dims but the schema implies {}",
                self.params.n_dims(),
                layout.p
            )));
        }
        let ordinal: Vec<&ColumnSpec> = self
            .schema
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Ordinal { .. }))
            .collect();
        if ordinal.len() != self.thresholds.len() {
            return Err(Error::InvalidParameter(format!(
                "{} threshold vectors for {} ordinal columns",
                self.thresholds.len(),
                ordinal.len()
            )));
        }
        for (spec, cuts) in ordinal.iter().zip(&self.thresholds) {
            let levels = spec.kind.levels().unwrap() as usize;
            if cuts.len() != levels - 1 {
                return Err(Error::InvalidParameter(format!(
                    "column '{}' needs {} cutpoints, got {}",
                    spec.name,
                    levels - 1,
                    cuts.len()
                )));
            }
            if cuts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "cutpoints of column '{}' must be strictly increasing",
                    spec.name
                )));
            }
        }
        if let Some(rho) = self.latent_correlation {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidParameter(format!(
                    "latent correlation must lie in [0, 1), got {rho}"
                )));
            }
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        self.params.validate(&layout, 1e-6)?;
        Ok(())
    }
}

/// Draw a dataset and its true cluster labels from `spec`.
///
/// Each observation picks a cluster by the mixing weights, draws the latent
/// Gaussian vector (optionally with a shared equicorrelation factor), then
/// maps latent dims to observed columns: continuous dims pass through,
/// ordinal dims bin at the cutpoints, nominal blocks apply the argmax rule.
pub fn simulate(spec: &GeneratorSpec) -> Result<(MixedDataset, Vec<usize>)> {
    spec.validate()?;
    let layout = build_layout(&spec.schema);
    let g_count = spec.params.n_clusters();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let sd: Vec<Vec<f64>> = (0..g_count)
        .map(|g| {
            spec.params
                .sigma_diagonal(g, &layout)
                .iter()
                .map(|v| v.sqrt())
                .collect()
        })
        .collect();
    let rho = spec.latent_correlation.unwrap_or(0.0);
    let (w_ind, w_shared) = ((1.0 - rho).sqrt(), rho.sqrt());

    let mut cont = Vec::with_capacity(spec.n * layout.c);
    let mut cat = Vec::with_capacity(spec.n * (layout.o + layout.n_nominal()));
    let mut labels = Vec::with_capacity(spec.n);
    let mut z = vec![0.0f64; layout.p];

    for _ in 0..spec.n {
        let u: f64 = rng.gen();
        let mut g = g_count - 1;
        let mut acc = 0.0;
        for (idx, &p) in spec.params.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                g = idx;
                break;
            }
        }
        labels.push(g);

        let shared = standard_normal(&mut rng);
        for p in 0..layout.p {
            let e = standard_normal(&mut rng);
            z[p] = spec.params.mu[g][p] + sd[g][p] * (w_ind * e + w_shared * shared);
        }

        for p in 0..layout.c {
            cont.push(z[p]);
        }
        for (t, cuts) in spec.thresholds.iter().enumerate() {
            let v = z[layout.ordinal_dim(t)];
            let level = cuts.iter().take_while(|&&c| v >= c).count() as u32 + 1;
            cat.push(level);
        }
        for &(start, width) in &layout.nominal_blocks {
            cat.push(classify(&z[start..start + width]));
        }
    }

    let data = MixedDataset::from_columns(spec.schema.clone(), cont, cat)?;
    Ok((data, labels))
}

#[inline]
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Contingency table of two partitions (rows: labels in `a`, columns:
/// labels in `b`), with the sorted distinct labels of each.
pub fn cross_tab(a: &[usize], b: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    let mut ra: Vec<usize> = a.to_vec();
    ra.sort_unstable();
    ra.dedup();
    let mut rb: Vec<usize> = b.to_vec();
    rb.sort_unstable();
    rb.dedup();
    let mut table = vec![vec![0usize; rb.len()]; ra.len()];
    for (&x, &y) in a.iter().zip(b) {
        let i = ra.binary_search(&x).unwrap();
        let j = rb.binary_search(&y).unwrap();
        table[i][j] += 1;
    }
    (table, ra, rb)
}

/// Chance-adjusted Rand index of two partitions.
///
/// Returns 1 for identical partitions; a degenerate denominator (both
/// partitions trivial) also counts as perfect agreement when the
/// partitions match and 0 otherwise.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot compare empty partitions".into(),
        ));
    }
    let (table, _, _) = cross_tab(a, b);
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let sum_cells: f64 = table
        .iter()
        .flat_map(|row| row.iter())
        .map(|&c| choose2(c as f64))
        .sum();
    let sum_rows: f64 = table
        .iter()
        .map(|row| choose2(row.iter().sum::<usize>() as f64))
        .sum();
    let sum_cols: f64 = (0..table[0].len())
        .map(|j| choose2(table.iter().map(|row| row[j]).sum::<usize>() as f64))
        .sum();
    let expected = sum_rows * sum_cols / choose2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        // both partitions are trivial; they agree iff the tables coincide
        return Ok(if sum_cells == max_index { 1.0 } else { 0.0 });
    }
    Ok((sum_cells - expected) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_thresholds;
    use approx::assert_abs_diff_eq;
    use crate::params::CovModel;

    fn two_cluster_spec() -> GeneratorSpec {
        let schema = vec![
            ColumnSpec {
                name: "x".into(),
                kind: ColumnKind::Continuous,
            },
            ColumnSpec {
                name: "o".into(),
                kind: ColumnKind::Ordinal { levels: 3 },
            },
            ColumnSpec {
                name: "m".into(),
                kind: ColumnKind::Nominal { levels: 3 },
            },
        ];
        let params = ModelParams {
            model: CovModel::VII,
            pi: vec![0.5, 0.5],
            mu: vec![
                vec![-1.5, -0.8, 0.9, -0.9],
                vec![1.5, 0.8, -0.9, 0.9],
            ],
            lambda: vec![1.0, 1.0],
            lambda_tilde: vec![0.5, 0.5],
            a: vec![vec![1.0; 4], vec![1.0; 4]],
        };
        GeneratorSpec {
            schema,
            params,
            thresholds: vec![vec![-0.5, 0.5]],
            n: 4000,
            seed: 17,
            latent_correlation: None,
        }
    }

    #[test]
    fn simulate_reproducible_and_in_range() {
        let spec = two_cluster_spec();
        let (d1, l1) = simulate(&spec).unwrap();
        let (d2, l2) = simulate(&spec).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(l1, l2);
        assert_eq!(d1.n, 4000);
        for i in 0..d1.n {
            assert!((1..=3).contains(&d1.cat_at(i, 0)));
            assert!((1..=3).contains(&d1.cat_at(i, 1)));
        }
    }

    #[test]
    fn mixing_weights_and_moments_recovered() {
        let spec = two_cluster_spec();
        let (data, labels) = simulate(&spec).unwrap();
        let n1 = labels.iter().filter(|&&l| l == 1).count() as f64;
        assert_abs_diff_eq!(n1 / 4000.0, 0.5, epsilon = 0.03);
        // continuous dim: cluster-conditional means near +-1.5
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += data.cont_at(i, 0);
            counts[l] += 1;
        }
        assert_abs_diff_eq!(sums[0] / counts[0] as f64, -1.5, epsilon = 0.08);
        assert_abs_diff_eq!(sums[1] / counts[1] as f64, 1.5, epsilon = 0.08);
    }

    #[test]
    fn ordinal_binning_matches_cutpoints() {
        // with cuts at -0.5 and 0.5 and cluster means -0.8/0.8, the level
        // frequencies must match the normal interval probabilities
        let spec = two_cluster_spec();
        let (data, labels) = simulate(&spec).unwrap();
        let mut low = 0usize;
        let mut total = 0usize;
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                total += 1;
                if data.cat_at(i, 0) == 1 {
                    low += 1;
                }
            }
        }
        // P(z < -0.5 | mu=-0.8, sd=1) = Phi(0.3)
        let expect = crate::gauss::norm_cdf(0.3);
        let se = (expect * (1.0 - expect) / total as f64).sqrt();
        assert_abs_diff_eq!(low as f64 / total as f64, expect, epsilon = 4.0 * se);
    }

    #[test]
    fn empirical_thresholds_close_to_generator_cuts() {
        // pooled mixture of the ordinal latent dim is symmetric, so the
        // empirical thresholds should land near the generating cutpoints
        let spec = two_cluster_spec();
        let (data, _) = simulate(&spec).unwrap();
        let th = compute_thresholds(&data).unwrap();
        // mixture sd inflates spread; just check sign, symmetry and order
        assert!(th.per_column[0][1] < 0.0 && th.per_column[0][2] > 0.0);
        assert_abs_diff_eq!(
            th.per_column[0][1],
            -th.per_column[0][2],
            epsilon = 0.1
        );
    }

    #[test]
    fn latent_correlation_rejected_out_of_range() {
        let mut spec = two_cluster_spec();
        spec.latent_correlation = Some(1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn ari_identical_and_permuted() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let relabeled = vec![2, 2, 0, 0, 1, 1];
        assert_abs_diff_eq!(adjusted_rand(&a, &a).unwrap(), 1.0);
        assert_abs_diff_eq!(adjusted_rand(&a, &relabeled).unwrap(), 1.0);
    }

    #[test]
    fn ari_independent_labels_near_zero() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<usize> = (0..2000).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<usize> = (0..2000).map(|_| rng.gen_range(0..3)).collect();
        let ari = adjusted_rand(&a, &b).unwrap();
        assert!(ari.abs() < 0.05, "ari = {ari}");
    }

    #[test]
    fn ari_known_contingency_value() {
        // build two partitions with a known confusion table:
        // rows (207, 14), (21, 175), (45, 13); reference value computed
        // independently from the Hubert-Arabie formula
        let table = [[207usize, 14], [21, 175], [45, 13]];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, row) in table.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    a.push(i);
                    b.push(j);
                }
            }
        }
        let ari = adjusted_rand(&a, &b).unwrap();
        assert_abs_diff_eq!(ari, 0.528_053_897_280_162_6, epsilon = 1e-12);
    }

    #[test]
    fn ari_degenerate_single_cluster() {
        let a = vec![0usize; 10];
        assert_abs_diff_eq!(adjusted_rand(&a, &a).unwrap(), 1.0);
        let b = vec![0usize, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        // one trivial vs one non-trivial partition: denominator is fine here
        let ari = adjusted_rand(&a, &b).unwrap();
        assert!(ari <= 0.0 + 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(adjusted_rand(&[0, 1], &[0, 1, 2]).is_err());
    }
}
