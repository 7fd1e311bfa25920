//! Tabular data model, schema handling, and delimited-text ingestion.
//!
//! Tables are immutable after construction: every transformation builds a new
//! table, so they can be shared freely across threads.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column type. Binary (true/false) columns are encoded as numerical 0/1 so
/// micro-aggregation can move them into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

/// Role a column plays during anonymization and labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    QuasiIdentifier,
    SensitiveAttribute,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_role")]
    pub role: ColumnRole,
}

fn default_role() -> ColumnRole {
    ColumnRole::QuasiIdentifier
}

impl ColumnSchema {
    pub fn numerical(name: &str, role: ColumnRole) -> Self {
        Self { name: name.to_string(), kind: ColumnKind::Numerical, role }
    }

    pub fn categorical(name: &str, role: ColumnRole) -> Self {
        Self { name: name.to_string(), kind: ColumnKind::Categorical, role }
    }
}

/// Column-major cell storage. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numerical(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numerical(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numerical(&self) -> Option<&[Option<f64>]> {
        match self {
            ColumnData::Numerical(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[Option<String>]> {
        match self {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numerical(_) => None,
        }
    }
}

/// Immutable columnar table with explicit row identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Vec<ColumnSchema>,
    columns: Vec<ColumnData>,
    row_ids: Vec<u64>,
    by_name: HashMap<String, usize>,
}

impl Table {
    /// Build a table from parallel column vectors. All columns and `row_ids`
    /// must have equal length; row ids must be unique.
    pub fn new(schema: Vec<ColumnSchema>, columns: Vec<ColumnData>, row_ids: Vec<u64>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} schema columns but {} data columns",
                schema.len(),
                columns.len()
            )));
        }
        for (cs, col) in schema.iter().zip(&columns) {
            if col.len() != row_ids.len() {
                return Err(Error::Schema(format!(
                    "column '{}' has {} cells for {} rows",
                    cs.name,
                    col.len(),
                    row_ids.len()
                )));
            }
            let kind_ok = matches!(
                (cs.kind, col),
                (ColumnKind::Numerical, ColumnData::Numerical(_))
                    | (ColumnKind::Categorical, ColumnData::Categorical(_))
            );
            if !kind_ok {
                return Err(Error::Schema(format!("column '{}' data does not match its declared kind", cs.name)));
            }
        }
        let mut seen = BTreeSet::new();
        for id in &row_ids {
            if !seen.insert(*id) {
                return Err(Error::Schema(format!("duplicate row id {id}")));
            }
        }
        let by_name = schema
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
        Ok(Self { schema, columns, row_ids, by_name })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("unknown column '{name}'")))
    }

    pub fn column_schema(&self, name: &str) -> Result<&ColumnSchema> {
        Ok(&self.schema[self.column_index(name)?])
    }

    /// The column's values in row order, preserving missing markers.
    pub fn column_vector(&self, name: &str) -> Result<&ColumnData> {
        Ok(&self.columns[self.column_index(name)?])
    }

    /// Numerical column values in row order; errors on categorical columns.
    pub fn numerical_column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.column_vector(name)?
            .as_numerical()
            .ok_or_else(|| Error::Lookup(format!("column '{name}' is not numerical")))
    }

    /// Categorical column values in row order; errors on numerical columns.
    pub fn categorical_column(&self, name: &str) -> Result<&[Option<String>]> {
        self.column_vector(name)?
            .as_categorical()
            .ok_or_else(|| Error::Lookup(format!("column '{name}' is not categorical")))
    }

    /// Names of quasi-identifier columns, in schema order.
    pub fn quasi_identifiers(&self) -> Vec<String> {
        self.schema
            .iter()
            .filter(|c| c.role == ColumnRole::QuasiIdentifier)
            .map(|c| c.name.clone())
            .collect()
    }

    /// The sensitive-attribute column, if declared. At most one is legal.
    pub fn sensitive_column(&self) -> Result<Option<String>> {
        let sens: Vec<_> = self
            .schema
            .iter()
            .filter(|c| c.role == ColumnRole::SensitiveAttribute)
            .map(|c| c.name.clone())
            .collect();
        match sens.len() {
            0 => Ok(None),
            1 => Ok(Some(sens.into_iter().next().unwrap())),
            n => Err(Error::Schema(format!("{n} sensitive-attribute columns declared, at most one allowed"))),
        }
    }

    /// New table containing the rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::Lookup(format!("row index {i} out of range")));
            }
        }
        let columns = self
            .columns
            .iter()
            .map(|col| match col {
                ColumnData::Numerical(v) => ColumnData::Numerical(indices.iter().map(|&i| v[i]).collect()),
                ColumnData::Categorical(v) => {
                    ColumnData::Categorical(indices.iter().map(|&i| v[i].clone()).collect())
                }
            })
            .collect();
        let row_ids = indices.iter().map(|&i| self.row_ids[i]).collect();
        Table::new(self.schema.clone(), columns, row_ids)
    }

    /// Map from row id to row index.
    pub fn id_index(&self) -> HashMap<u64, usize> {
        self.row_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Same data under adjusted column roles.
    pub fn with_roles<F>(&self, mut role_of: F) -> Self
    where
        F: FnMut(&ColumnSchema) -> ColumnRole,
    {
        let schema = self
            .schema
            .iter()
            .map(|c| ColumnSchema { name: c.name.clone(), kind: c.kind, role: role_of(c) })
            .collect();
        Self {
            schema,
            columns: self.columns.clone(),
            row_ids: self.row_ids.clone(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Options controlling delimited-text ingestion.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Header cell carrying row identity. Auto-generated 0..n-1 when the
    /// column is absent from the file.
    pub row_id_column: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { delimiter: b',', row_id_column: "row_id".to_string() }
    }
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA" || t == "N/A" || t == "?"
}

/// Load a delimited text file against an explicit schema.
///
/// Unparseable numerical cells become missing; rows are retained either way.
pub fn load_table(path: &Path, schema: &[ColumnSchema], options: &LoadOptions) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::Ingestion(format!("{}: empty file", path.display())));
    }

    let mut header_pos = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        header_pos.insert(h.clone(), i);
    }
    let mut col_pos = Vec::with_capacity(schema.len());
    for cs in schema {
        let pos = header_pos
            .get(&cs.name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column '{}' not found in {}", cs.name, path.display())))?;
        col_pos.push(pos);
    }
    let id_pos = header_pos.get(&options.row_id_column).copied();

    let mut columns: Vec<ColumnData> = schema
        .iter()
        .map(|cs| match cs.kind {
            ColumnKind::Numerical => ColumnData::Numerical(Vec::new()),
            ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
        })
        .collect();
    let mut row_ids = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        let id = match id_pos {
            Some(p) => {
                let raw = record.get(p).unwrap_or("");
                raw.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Ingestion(format!("row {row_idx}: bad row id '{raw}'")))?
            }
            None => row_idx as u64,
        };
        row_ids.push(id);
        for (ci, &p) in col_pos.iter().enumerate() {
            let raw = record.get(p).unwrap_or("");
            match &mut columns[ci] {
                ColumnData::Numerical(v) => {
                    if is_missing_token(raw) {
                        v.push(None);
                    } else {
                        v.push(raw.trim().parse::<f64>().ok());
                    }
                }
                ColumnData::Categorical(v) => {
                    if is_missing_token(raw) {
                        v.push(None);
                    } else {
                        v.push(Some(raw.trim().to_string()));
                    }
                }
            }
        }
    }

    Table::new(schema.to_vec(), columns, row_ids)
}

/// Write a table as delimited text. Numbers use shortest round-trip
/// formatting so a reload reproduces cell values bit for bit.
pub fn write_table(table: &Table, path: &Path, options: &LoadOptions) -> Result<()> {
    let mut out = Vec::new();
    let delim = options.delimiter as char;
    let mut header = vec![options.row_id_column.clone()];
    header.extend(table.schema().iter().map(|c| c.name.clone()));
    writeln!(out, "{}", header.join(&delim.to_string()))?;
    for i in 0..table.n_rows() {
        let mut cells = vec![table.row_ids()[i].to_string()];
        for col in &table.columns {
            match col {
                ColumnData::Numerical(v) => cells.push(match v[i] {
                    Some(x) => format_number(x),
                    None => String::new(),
                }),
                ColumnData::Categorical(v) => cells.push(v[i].clone().unwrap_or_default()),
            }
        }
        writeln!(out, "{}", cells.join(&delim.to_string()))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

/// An original table paired with its anonymized counterpart.
///
/// The anonymized table contains exactly the non-suppressed rows of the
/// original, and metric formulas see the two sides positionally aligned on
/// the shared row ids.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub original: Table,
    pub anonymized: Table,
    pub suppressed_row_ids: BTreeSet<u64>,
    /// For each anonymized row, the index of the matching original row.
    original_index: Vec<usize>,
}

impl DatasetPair {
    pub fn n_original(&self) -> usize {
        self.original.n_rows()
    }

    pub fn n_anonymized(&self) -> usize {
        self.anonymized.n_rows()
    }

    /// Aligned numerical (original, anonymized) values for `column` with
    /// missing values removed pairwise.
    pub fn aligned_numerical(&self, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let orig = self.original.numerical_column(column)?;
        let anon = self.anonymized.numerical_column(column)?;
        let mut xs = Vec::with_capacity(anon.len());
        let mut ys = Vec::with_capacity(anon.len());
        for (ai, &oi) in self.original_index.iter().enumerate() {
            if let (Some(x), Some(y)) = (orig[oi], anon[ai]) {
                xs.push(x);
                ys.push(y);
            }
        }
        Ok((xs, ys))
    }

    /// Aligned categorical (original, anonymized) tokens for `column`,
    /// missing removed pairwise.
    pub fn aligned_categorical(&self, column: &str) -> Result<(Vec<String>, Vec<String>)> {
        let orig = self.original.categorical_column(column)?;
        let anon = self.anonymized.categorical_column(column)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (ai, &oi) in self.original_index.iter().enumerate() {
            if let (Some(x), Some(y)) = (&orig[oi], &anon[ai]) {
                xs.push(x.clone());
                ys.push(y.clone());
            }
        }
        Ok((xs, ys))
    }
}

/// Pair an original table with its anonymized rows.
///
/// `anonymized` row ids must equal the original's minus `suppressed`. The
/// anonymized table may omit columns (for example the sensitive attribute)
/// but every column it carries must exist in the original's schema.
pub fn align_pair(original: &Table, anonymized: &Table, suppressed: &BTreeSet<u64>) -> Result<DatasetPair> {
    for cs in anonymized.schema() {
        let orig_cs = original
            .column_schema(&cs.name)
            .map_err(|_| Error::Alignment(format!("anonymized column '{}' absent from original", cs.name)))?;
        if orig_cs.kind != cs.kind {
            return Err(Error::Alignment(format!("column '{}' changes kind between tables", cs.name)));
        }
    }

    let orig_ids = original.id_index();
    let mut expected: BTreeSet<u64> = original.row_ids().iter().copied().collect();
    for s in suppressed {
        if !expected.remove(s) {
            return Err(Error::Alignment(format!("suppressed id {s} absent from original")));
        }
    }

    let mut original_index = Vec::with_capacity(anonymized.n_rows());
    let mut seen = BTreeSet::new();
    for &id in anonymized.row_ids() {
        let &oi = orig_ids
            .get(&id)
            .ok_or_else(|| Error::Alignment(format!("anonymized id {id} absent from original")))?;
        if suppressed.contains(&id) {
            return Err(Error::Alignment(format!("anonymized id {id} is marked suppressed")));
        }
        original_index.push(oi);
        seen.insert(id);
    }
    if seen != expected {
        return Err(Error::Alignment(format!(
            "anonymized ids do not cover original minus suppressed ({} vs {} rows)",
            seen.len(),
            expected.len()
        )));
    }

    Ok(DatasetPair {
        original: original.clone(),
        anonymized: anonymized.clone(),
        suppressed_row_ids: suppressed.clone(),
        original_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, contents.as_bytes()).unwrap();
        f
    }

    fn example_schema() -> Vec<ColumnSchema> {
        vec![
            ColumnSchema::numerical("n_accept", ColumnRole::QuasiIdentifier),
            ColumnSchema::numerical("n_reject", ColumnRole::QuasiIdentifier),
        ]
    }

    fn example_options() -> LoadOptions {
        LoadOptions { row_id_column: "user_id".to_string(), ..LoadOptions::default() }
    }

    #[test]
    fn load_example_dataset() {
        let f = write_tmp("user_id,n_accept,n_reject\n1,1,1\n2,1,2\n3,2,1\n4,2,1\n5,11,1\n");
        let t = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        assert_eq!(t.n_rows(), 5);
        assert_eq!(t.row_ids(), &[1, 2, 3, 4, 5]);
        let accept = t.numerical_column("n_accept").unwrap();
        let vals: Vec<f64> = accept.iter().map(|v| v.unwrap()).collect();
        assert_eq!(vals, vec![1.0, 1.0, 2.0, 2.0, 11.0]);
    }

    #[test]
    fn empty_body_is_zero_rows() {
        let f = write_tmp("user_id,n_accept,n_reject\n");
        let t = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        assert_eq!(t.n_rows(), 0);
        assert!(t.numerical_column("n_accept").unwrap().is_empty());
    }

    #[test]
    fn unparseable_numerical_cell_becomes_missing() {
        let f = write_tmp("user_id,n_accept,n_reject\n1,abc,2\n");
        let t = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.numerical_column("n_accept").unwrap()[0], None);
        assert_eq!(t.numerical_column("n_reject").unwrap()[0], Some(2.0));
    }

    #[test]
    fn missing_schema_column_is_schema_error() {
        let f = write_tmp("user_id,n_accept\n1,1\n");
        let err = load_table(f.path(), &example_schema(), &example_options()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn empty_file_is_ingestion_error() {
        let f = write_tmp("");
        let err = load_table(f.path(), &example_schema(), &example_options()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err}");
    }

    #[test]
    fn auto_generated_row_ids() {
        let f = write_tmp("n_accept,n_reject\n5,6\n7,8\n");
        let t = load_table(f.path(), &example_schema(), &LoadOptions::default()).unwrap();
        assert_eq!(t.row_ids(), &[0, 1]);
    }

    #[test]
    fn write_then_load_round_trips_bit_for_bit() {
        let schema = vec![
            ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier),
            ColumnSchema::categorical("c", ColumnRole::QuasiIdentifier),
        ];
        let t = Table::new(
            schema.clone(),
            vec![
                ColumnData::Numerical(vec![Some(0.1 + 0.2), Some(1.5), None, Some(-3.25e-7)]),
                ColumnData::Categorical(vec![Some("foo".into()), None, Some("Bar".into()), Some("test".into())]),
            ],
            vec![10, 11, 12, 13],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&t, &p, &LoadOptions::default()).unwrap();
        let back = load_table(&p, &schema, &LoadOptions::default()).unwrap();
        assert_eq!(back.row_ids(), t.row_ids());
        assert_eq!(back.numerical_column("x").unwrap(), t.numerical_column("x").unwrap());
        assert_eq!(back.categorical_column("c").unwrap(), t.categorical_column("c").unwrap());
    }

    #[test]
    fn align_pair_matches_example_shape() {
        let f = write_tmp("user_id,n_accept,n_reject\n1,1,1\n2,1,2\n3,2,1\n4,2,1\n5,11,1\n");
        let orig = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        let anon = orig.select_rows(&[0, 1, 2, 3]).unwrap();
        let pair = align_pair(&orig, &anon, &BTreeSet::from([5])).unwrap();
        let (xs, ys) = pair.aligned_numerical("n_accept").unwrap();
        assert_eq!(xs.len(), 4);
        assert_eq!(ys.len(), 4);
    }

    #[test]
    fn align_pair_identity() {
        let f = write_tmp("user_id,n_accept,n_reject\n1,1,1\n2,1,2\n");
        let orig = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        let pair = align_pair(&orig, &orig.clone(), &BTreeSet::new()).unwrap();
        assert_eq!(pair.n_anonymized(), 2);
        let (xs, ys) = pair.aligned_numerical("n_reject").unwrap();
        assert_eq!(xs, ys);
    }

    #[test]
    fn align_pair_rejects_unknown_id() {
        let f = write_tmp("user_id,n_accept,n_reject\n1,1,1\n2,1,2\n");
        let orig = load_table(f.path(), &example_schema(), &example_options()).unwrap();
        let g = write_tmp("user_id,n_accept,n_reject\n1,1,1\n9,1,2\n");
        let anon = load_table(g.path(), &example_schema(), &example_options()).unwrap();
        let err = align_pair(&orig, &anon, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)), "{err}");
    }

    #[test]
    fn column_vector_preserves_missing_and_order() {
        let t = Table::new(
            vec![ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier)],
            vec![ColumnData::Numerical(vec![Some(1.0), None, Some(3.0)])],
            vec![0, 1, 2],
        )
        .unwrap();
        let v = t.numerical_column("x").unwrap();
        assert_eq!(v, &[Some(1.0), None, Some(3.0)]);
        assert!(t.column_vector("nope").is_err());
    }

    #[test]
    fn sensitive_column_uniqueness() {
        let t = Table::new(
            vec![
                ColumnSchema::categorical("g", ColumnRole::SensitiveAttribute),
                ColumnSchema::numerical("x", ColumnRole::QuasiIdentifier),
            ],
            vec![
                ColumnData::Categorical(vec![Some("a".into())]),
                ColumnData::Numerical(vec![Some(1.0)]),
            ],
            vec![0],
        )
        .unwrap();
        assert_eq!(t.sensitive_column().unwrap(), Some("g".to_string()));
    }
}
