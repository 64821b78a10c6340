//! Mixed-type dataset ingestion and the fixed ordinal thresholds.
//!
//! Data arrive as an RFC-4180 CSV with a header plus a JSON schema sidecar
//! declaring each column's kind and level count. Columns are reordered into
//! the canonical block order (continuous, then ordinal/binary, then nominal)
//! and every cell is validated; missing data are rejected.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::norm_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Continuous,
    Ordinal { levels: u32 },
    Nominal { levels: u32 },
}

impl ColumnKind {
    pub fn levels(&self) -> Option<u32> {
        match self {
            ColumnKind::Continuous => None,
            ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => Some(*levels),
        }
    }

    fn block_rank(&self) -> u8 {
        match self {
            ColumnKind::Continuous => 0,
            ColumnKind::Ordinal { .. } => 1,
            ColumnKind::Nominal { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Schema sidecar document: `{"columns":[{"name","kind","levels"}]}`.
#[derive(Debug, Deserialize)]
struct SchemaFile {
    columns: Vec<SchemaFileColumn>,
}

#[derive(Debug, Deserialize)]
struct SchemaFileColumn {
    name: String,
    kind: String,
    levels: Option<u32>,
}

/// Parse and validate a schema document into ordered column specs.
pub fn parse_schema(json: &str) -> Result<Vec<ColumnSpec>> {
    let file: SchemaFile = serde_json::from_str(json)?;
    let mut specs = Vec::with_capacity(file.columns.len());
    let mut seen = HashMap::new();
    for col in file.columns {
        if seen.insert(col.name.clone(), ()).is_some() {
            return Err(Error::InvalidSchema(format!(
                "duplicate column name '{}'",
                col.name
            )));
        }
        let kind = match col.kind.as_str() {
            "continuous" => ColumnKind::Continuous,
            "ordinal" => {
                let levels = col.levels.ok_or_else(|| {
                    Error::InvalidSchema(format!("ordinal column '{}' needs levels", col.name))
                })?;
                if levels < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "ordinal column '{}' needs at least 2 levels",
                        col.name
                    )));
                }
                ColumnKind::Ordinal { levels }
            }
            "nominal" => {
                let levels = col.levels.ok_or_else(|| {
                    Error::InvalidSchema(format!("nominal column '{}' needs levels", col.name))
                })?;
                if levels < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "nominal column '{}' needs at least 2 levels",
                        col.name
                    )));
                }
                if levels == 2 {
                    // a 2-level categorical is always routed through the
                    // ordinal path; the two models coincide for K = 2
                    ColumnKind::Ordinal { levels }
                } else {
                    ColumnKind::Nominal { levels }
                }
            }
            other => {
                return Err(Error::InvalidSchema(format!(
                    "column '{}' has unknown kind '{}'",
                    col.name, other
                )))
            }
        };
        specs.push(ColumnSpec {
            name: col.name,
            kind,
        });
    }
    if specs.is_empty() {
        return Err(Error::InvalidSchema("schema has no columns".into()));
    }
    Ok(specs)
}

/// Validated mixed-type data in canonical block order.
///
/// Continuous cells live in `cont` (row-major N x C) and categorical cells
/// in `cat` (row-major N x (J - C), 1-based codes). `permutation[k]` gives
/// the original CSV column index of canonical column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    pub schema: Vec<ColumnSpec>,
    pub n: usize,
    pub n_cont: usize,
    pub cont: Vec<f64>,
    pub cat: Vec<u32>,
    pub permutation: Vec<usize>,
}

impl MixedDataset {
    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn n_cat(&self) -> usize {
        self.schema.len() - self.n_cont
    }

    #[inline]
    pub fn cont_at(&self, row: usize, col: usize) -> f64 {
        self.cont[row * self.n_cont + col]
    }

    /// Categorical cell by index within the categorical block (0-based).
    #[inline]
    pub fn cat_at(&self, row: usize, col: usize) -> u32 {
        self.cat[row * self.n_cat() + col]
    }

    /// Column specs of the ordinal/binary block, in order.
    pub fn ordinal_specs(&self) -> &[ColumnSpec] {
        let o_end = self
            .schema
            .iter()
            .position(|c| matches!(c.kind, ColumnKind::Nominal { .. }))
            .unwrap_or(self.schema.len());
        &self.schema[self.n_cont..o_end]
    }

    /// Assemble a dataset from canonical-order columns (used by the simulator).
    pub fn from_columns(
        schema: Vec<ColumnSpec>,
        cont: Vec<f64>,
        cat: Vec<u32>,
    ) -> Result<MixedDataset> {
        validate_block_order(&schema)?;
        let n_cont = schema
            .iter()
            .filter(|c| c.kind == ColumnKind::Continuous)
            .count();
        let n_cat = schema.len() - n_cont;
        let n = if n_cont > 0 {
            cont.len() / n_cont
        } else {
            cat.len() / n_cat.max(1)
        };
        if (n_cont > 0 && cont.len() != n * n_cont) || (n_cat > 0 && cat.len() != n * n_cat) {
            return Err(Error::InvalidParameter(
                "column data does not tile into rows".into(),
            ));
        }
        let ds = MixedDataset {
            permutation: (0..schema.len()).collect(),
            schema,
            n,
            n_cont,
            cont,
            cat,
        };
        for (idx, spec) in ds.schema[ds.n_cont..].iter().enumerate() {
            let levels = spec.kind.levels().unwrap();
            for row in 0..ds.n {
                let v = ds.cat_at(row, idx);
                if v < 1 || v > levels {
                    return Err(Error::OutOfRangeCode {
                        row: row + 1,
                        column: spec.name.clone(),
                        value: i64::from(v),
                        levels,
                    });
                }
            }
        }
        Ok(ds)
    }

    /// Write the dataset back out in canonical column order.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n {
            let mut rec = Vec::with_capacity(self.schema.len());
            for c in 0..self.n_cont {
                rec.push(format_float(self.cont_at(row, c)));
            }
            for c in 0..self.n_cat() {
                rec.push(self.cat_at(row, c).to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Normalized echo of the dataset shape for run reports.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_rows": self.n,
            "n_columns": self.schema.len(),
            "n_continuous": self.n_cont,
            "n_ordinal": self.ordinal_specs().len(),
            "n_nominal": self.schema.iter()
                .filter(|c| matches!(c.kind, ColumnKind::Nominal { .. })).count(),
            "columns": self.schema,
            "permutation": self.permutation,
        })
    }
}

fn format_float(v: f64) -> String {
    // shortest representation that round-trips
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn validate_block_order(schema: &[ColumnSpec]) -> Result<()> {
    let mut last = 0u8;
    for spec in schema {
        let rank = spec.kind.block_rank();
        if rank < last {
            return Err(Error::InvalidSchema(
                "columns not in canonical block order (continuous, ordinal, nominal)".into(),
            ));
        }
        last = rank;
    }
    Ok(())
}

/// Load and validate a CSV against its schema sidecar, reordering columns
/// into canonical block order.
pub fn load_dataset<P: AsRef<Path>, Q: AsRef<Path>>(
    csv_path: P,
    schema_path: Q,
) -> Result<MixedDataset> {
    let schema_text = std::fs::read_to_string(schema_path)?;
    let declared = parse_schema(&schema_text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    load_from_reader(&mut rdr, headers, declared)
}

/// Same as [`load_dataset`] but from in-memory text (used by tests).
pub fn load_dataset_str(csv_text: &str, schema_json: &str) -> Result<MixedDataset> {
    let declared = parse_schema(schema_json)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    load_from_reader(&mut rdr, headers, declared)
}

fn load_from_reader<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    headers: Vec<String>,
    declared: Vec<ColumnSpec>,
) -> Result<MixedDataset> {
    let by_name: HashMap<&str, usize> = declared
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    for h in &headers {
        if !by_name.contains_key(h.as_str()) {
            return Err(Error::UnknownColumn(h.clone()));
        }
    }
    let mut csv_index = vec![usize::MAX; declared.len()];
    for (pos, h) in headers.iter().enumerate() {
        csv_index[by_name[h.as_str()]] = pos;
    }
    for (spec, &idx) in declared.iter().zip(&csv_index) {
        if idx == usize::MAX {
            return Err(Error::MissingColumn(spec.name.clone()));
        }
    }

    // canonical order: stable sort by block, preserving declaration order
    let mut order: Vec<usize> = (0..declared.len()).collect();
    order.sort_by_key(|&i| declared[i].kind.block_rank());
    let schema: Vec<ColumnSpec> = order.iter().map(|&i| declared[i].clone()).collect();
    let permutation: Vec<usize> = order.iter().map(|&i| csv_index[i]).collect();
    let n_cont = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Continuous)
        .count();

    let mut cont = Vec::new();
    let mut cat = Vec::new();
    let mut n = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        for (k, spec) in schema.iter().enumerate() {
            let raw = record.get(permutation[k]).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(Error::MissingCell {
                    row,
                    column: spec.name.clone(),
                });
            }
            match spec.kind {
                ColumnKind::Continuous => {
                    let v: f64 = raw.parse().map_err(|_| Error::NonNumericCell {
                        row,
                        column: spec.name.clone(),
                        value: raw.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::NonNumericCell {
                            row,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        });
                    }
                    cont.push(v);
                }
                ColumnKind::Ordinal { levels } | ColumnKind::Nominal { levels } => {
                    let v: i64 = raw.parse().map_err(|_| Error::NonNumericCell {
                        row,
                        column: spec.name.clone(),
                        value: raw.to_string(),
                    })?;
                    if v < 1 || v > i64::from(levels) {
                        return Err(Error::OutOfRangeCode {
                            row,
                            column: spec.name.clone(),
                            value: v,
                            levels,
                        });
                    }
                    cat.push(v as u32);
                }
            }
        }
        n += 1;
    }
    Ok(MixedDataset {
        schema,
        n,
        n_cont,
        cont,
        cat,
        permutation,
    })
}

/// Fixed thresholds for the ordinal/binary columns.
///
/// `per_column[t]` has length `K_t + 1` with `-inf` and `+inf` endpoints;
/// interior entries are standard-normal quantiles of the empirical
/// cumulative proportions. Fixed for the whole fit, never re-estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub per_column: Vec<Vec<f64>>,
}

impl ThresholdSet {
    /// Interval `(gamma_{k-1}, gamma_k)` for observed level `k` (1-based).
    #[inline]
    pub fn interval(&self, col: usize, level: u32) -> (f64, f64) {
        let g = &self.per_column[col];
        (g[(level - 1) as usize], g[level as usize])
    }
}

/// Thresholds from pooled empirical proportions: `gamma_k = Phi^{-1}(delta_k)`
/// where `delta_k` is the proportion of observations at level <= k.
pub fn compute_thresholds(data: &MixedDataset) -> Result<ThresholdSet> {
    let ord = data.ordinal_specs().to_vec();
    let mut per_column = Vec::with_capacity(ord.len());
    for (t, spec) in ord.iter().enumerate() {
        let levels = spec.kind.levels().unwrap();
        let mut counts = vec![0usize; levels as usize];
        for row in 0..data.n {
            counts[(data.cat_at(row, t) - 1) as usize] += 1;
        }
        let mut gamma = Vec::with_capacity(levels as usize + 1);
        gamma.push(f64::NEG_INFINITY);
        let mut cum = 0usize;
        for k in 1..levels {
            cum += counts[(k - 1) as usize];
            let delta = cum as f64 / data.n as f64;
            if delta <= 0.0 || delta >= 1.0 {
                return Err(Error::DegenerateLevel {
                    column: spec.name.clone(),
                    level: k,
                    proportion: delta,
                });
            }
            gamma.push(norm_quantile(delta));
        }
        gamma.push(f64::INFINITY);
        per_column.push(gamma);
    }
    Ok(ThresholdSet { per_column })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SCHEMA_2COL: &str = r#"{"columns":[
        {"name":"x","kind":"continuous"},
        {"name":"b","kind":"ordinal","levels":2}
    ]}"#;

    #[test]
    fn minimal_load() {
        let csv = "x,b\n1.0,1\n2.5,2\n-0.5,1\n";
        let ds = load_dataset_str(csv, SCHEMA_2COL).unwrap();
        assert_eq!(ds.n, 3);
        assert_eq!(ds.n_cont, 1);
        assert_eq!(ds.ordinal_specs().len(), 1);
        assert_eq!(ds.cat_at(1, 0), 2);
    }

    #[test]
    fn columns_reordered_to_blocks() {
        let schema = r#"{"columns":[
            {"name":"b","kind":"ordinal","levels":2},
            {"name":"x","kind":"continuous"},
            {"name":"m","kind":"nominal","levels":3}
        ]}"#;
        let csv = "m,b,x\n2,1,3.5\n1,2,0.5\n";
        let ds = load_dataset_str(csv, schema).unwrap();
        assert_eq!(ds.schema[0].name, "x");
        assert_eq!(ds.schema[1].name, "b");
        assert_eq!(ds.schema[2].name, "m");
        assert_eq!(ds.permutation, vec![2, 1, 0]);
        assert_abs_diff_eq!(ds.cont_at(0, 0), 3.5);
        assert_eq!(ds.cat_at(0, 0), 1);
        assert_eq!(ds.cat_at(0, 1), 2);
    }

    #[test]
    fn out_of_range_code_names_cell() {
        let schema = r#"{"columns":[{"name":"o","kind":"ordinal","levels":4}]}"#;
        let err = load_dataset_str("o\n1\n5\n", schema).unwrap_err();
        match err {
            Error::OutOfRangeCode { row, column, value, levels } => {
                assert_eq!((row, column.as_str(), value, levels), (2, "o", 5, 4));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_and_non_numeric_cells() {
        assert!(matches!(
            load_dataset_str("x,b\n1.0,\n", SCHEMA_2COL).unwrap_err(),
            Error::MissingCell { .. }
        ));
        assert!(matches!(
            load_dataset_str("x,b\nfoo,1\n", SCHEMA_2COL).unwrap_err(),
            Error::NonNumericCell { .. }
        ));
        assert!(matches!(
            load_dataset_str("x,b,z\n1.0,1,2\n", SCHEMA_2COL).unwrap_err(),
            Error::UnknownColumn(_)
        ));
    }

    #[test]
    fn binary_nominal_reclassified_as_ordinal() {
        let schema = r#"{"columns":[{"name":"m","kind":"nominal","levels":2}]}"#;
        let specs = parse_schema(schema).unwrap();
        assert_eq!(specs[0].kind, ColumnKind::Ordinal { levels: 2 });
    }

    #[test]
    fn thresholds_binary_balanced() {
        let schema = r#"{"columns":[{"name":"b","kind":"ordinal","levels":2}]}"#;
        let mut csv = String::from("b\n");
        for i in 0..800 {
            csv.push_str(if i < 400 { "1\n" } else { "2\n" });
        }
        let ds = load_dataset_str(&csv, schema).unwrap();
        let th = compute_thresholds(&ds).unwrap();
        assert_eq!(th.per_column[0].len(), 3);
        assert_abs_diff_eq!(th.per_column[0][1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn thresholds_quartiles() {
        let schema = r#"{"columns":[{"name":"o","kind":"ordinal","levels":4}]}"#;
        let mut csv = String::from("o\n");
        for level in 1..=4 {
            for _ in 0..25 {
                csv.push_str(&format!("{level}\n"));
            }
        }
        let ds = load_dataset_str(&csv, schema).unwrap();
        let th = compute_thresholds(&ds).unwrap();
        let g = &th.per_column[0];
        assert_abs_diff_eq!(g[1], -0.6744897501960817, epsilon = 1e-10);
        assert_abs_diff_eq!(g[2], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[3], 0.6744897501960817, epsilon = 1e-10);
    }

    #[test]
    fn unobserved_top_level_rejected() {
        let schema = r#"{"columns":[{"name":"o","kind":"ordinal","levels":3}]}"#;
        let ds = load_dataset_str("o\n1\n2\n1\n", schema).unwrap();
        assert!(matches!(
            compute_thresholds(&ds).unwrap_err(),
            Error::DegenerateLevel { level: 2, .. }
        ));
    }

    #[test]
    fn csv_round_trip() {
        let schema = r#"{"columns":[
            {"name":"x","kind":"continuous"},
            {"name":"o","kind":"ordinal","levels":3},
            {"name":"m","kind":"nominal","levels":3}
        ]}"#;
        let csv = "x,o,m\n1.25,2,3\n-0.75,1,1\n3.0,3,2\n";
        let ds = load_dataset_str(csv, schema).unwrap();
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        let ds2 = load_dataset_str(std::str::from_utf8(&out).unwrap(), schema).unwrap();
        assert_eq!(ds.cont, ds2.cont);
        assert_eq!(ds.cat, ds2.cat);
        assert_eq!(ds.schema, ds2.schema);
    }
}
