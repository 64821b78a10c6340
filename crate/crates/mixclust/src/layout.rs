//! Mapping from observed columns to latent dimensions.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnSpec};

/// Latent-dimension bookkeeping: `C` continuous dims, `O` ordinal/binary
/// dims, then one contiguous block of width `K_j - 1` per nominal variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentLayout {
    pub c: usize,
    pub o: usize,
    /// `(start, width)` of each nominal block, in latent-dimension indices.
    pub nominal_blocks: Vec<(usize, usize)>,
    pub p: usize,
}

impl LatentLayout {
    pub fn n_nominal(&self) -> usize {
        self.nominal_blocks.len()
    }

    /// Count of latent dims covering categorical variables (`P - C`).
    pub fn cat_dims(&self) -> usize {
        self.p - self.c
    }

    /// Latent dim of ordinal variable `t` (0-based within the ordinal block).
    #[inline]
    pub fn ordinal_dim(&self, t: usize) -> usize {
        self.c + t
    }

    pub fn has_nominal(&self) -> bool {
        !self.nominal_blocks.is_empty()
    }
}

/// Build the layout from a schema already in canonical block order.
pub fn build_layout(schema: &[ColumnSpec]) -> LatentLayout {
    let mut c = 0;
    let mut o = 0;
    let mut nominal_blocks = Vec::new();
    let mut next = 0usize;
    for spec in schema {
        match spec.kind {
            ColumnKind::Continuous => {
                c += 1;
                next += 1;
            }
            ColumnKind::Ordinal { .. } => {
                o += 1;
                next += 1;
            }
            ColumnKind::Nominal { levels } => {
                let width = (levels - 1) as usize;
                nominal_blocks.push((next, width));
                next += width;
            }
        }
    }
    LatentLayout {
        c,
        o,
        nominal_blocks,
        p: next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, kind: ColumnKind) -> ColumnSpec {
        ColumnSpec {
            name: name.into(),
            kind,
        }
    }

    #[test]
    fn simulation_study_layout() {
        // 4 continuous, 3 ordinal (2, 4, 3 levels), 3 nominal (3, 3, 4 levels)
        let mut schema = Vec::new();
        for i in 0..4 {
            schema.push(spec(&format!("c{i}"), ColumnKind::Continuous));
        }
        for (i, k) in [2u32, 4, 3].iter().enumerate() {
            schema.push(spec(&format!("o{i}"), ColumnKind::Ordinal { levels: *k }));
        }
        for (i, k) in [3u32, 3, 4].iter().enumerate() {
            schema.push(spec(&format!("m{i}"), ColumnKind::Nominal { levels: *k }));
        }
        let layout = build_layout(&schema);
        assert_eq!(layout.c, 4);
        assert_eq!(layout.o, 3);
        assert_eq!(layout.p, 14);
        assert_eq!(layout.nominal_blocks, vec![(7, 2), (9, 2), (11, 3)]);
    }

    #[test]
    fn continuous_only() {
        let schema: Vec<_> = (0..5)
            .map(|i| spec(&format!("c{i}"), ColumnKind::Continuous))
            .collect();
        let layout = build_layout(&schema);
        assert_eq!(layout.p, 5);
        assert!(!layout.has_nominal());
    }

    #[test]
    fn single_nominal() {
        let schema = vec![spec("m", ColumnKind::Nominal { levels: 3 })];
        let layout = build_layout(&schema);
        assert_eq!(layout.p, 2);
        assert_eq!(layout.nominal_blocks, vec![(0, 2)]);
    }
}
