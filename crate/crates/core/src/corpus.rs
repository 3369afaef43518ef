//! Data model for datasets, schema graphs, and label records, plus the
//! directory-based persistence layer.
//!
//! On disk a dataset is a directory holding `manifest.json` and one CSV per
//! table. All column data is integer-encoded; categorical strings are mapped
//! through per-column dictionaries stored in the manifest, so integer data
//! round-trips bit-exact.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// One integer-encoded column. `dict`, when present, maps each code to the
/// original categorical string (`values[i] < dict.len()`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnData {
    pub name: String,
    pub values: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dict: Option<Vec<String>>,
}

impl ColumnData {
    pub fn new(name: impl Into<String>, values: Vec<u64>) -> Self {
        ColumnData {
            name: name.into(),
            values,
            dict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnData>,
    /// Name of the primary-key column, if this table has one.
    pub pk: Option<String>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnData>) -> Self {
        Table {
            name: name.into(),
            columns,
            pk: None,
        }
    }

    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// A PK-FK join edge: every value in `fk_table.fk_column` appears in
/// `pk_table.pk_column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JoinEdge {
    pub pk_table: String,
    pub pk_column: String,
    pub fk_table: String,
    pub fk_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub tables: Vec<Table>,
    pub joins: Vec<JoinEdge>,
}

impl Dataset {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    /// Names of key columns (PK or FK) per table; these are excluded from
    /// range predicates when generating workloads.
    pub fn key_columns(&self, table: &str) -> HashSet<String> {
        let mut keys = HashSet::new();
        if let Some(t) = self.table(table) {
            if let Some(pk) = &t.pk {
                keys.insert(pk.clone());
            }
        }
        for j in &self.joins {
            if j.fk_table == table {
                keys.insert(j.fk_column.clone());
            }
            if j.pk_table == table {
                keys.insert(j.pk_column.clone());
            }
        }
        keys
    }
}

/// Measured performance of one estimator on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub dataset_id: String,
    pub estimator_id: String,
    /// Mean Q-error over the test queries; always >= 1.
    pub qerr_mean: f64,
    /// Mean per-query inference latency, in `latency_unit`.
    pub latency_mean: f64,
    pub latency_unit: LatencyUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyUnit {
    /// Wall-clock milliseconds.
    Ms,
    /// Deterministic cost units (count of primitive lookups).
    Cost,
}

/// A single invariant violation found by [`validate`]. Violations are data,
/// not errors: an invalid dataset is reported, not rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub table: Option<String>,
    pub column: Option<String>,
    pub detail: String,
}

impl Violation {
    fn dataset(detail: impl Into<String>) -> Self {
        Violation {
            table: None,
            column: None,
            detail: detail.into(),
        }
    }

    fn table(table: &str, detail: impl Into<String>) -> Self {
        Violation {
            table: Some(table.to_string()),
            column: None,
            detail: detail.into(),
        }
    }

    fn column(table: &str, column: &str, detail: impl Into<String>) -> Self {
        Violation {
            table: Some(table.to_string()),
            column: Some(column.to_string()),
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.table, &self.column) {
            (Some(t), Some(c)) => write!(f, "{t}.{c}: {}", self.detail),
            (Some(t), None) => write!(f, "{t}: {}", self.detail),
            _ => write!(f, "{}", self.detail),
        }
    }
}

/// Check every typed invariant: equal column lengths, distinct PK values,
/// dictionary code bounds, join endpoints, and referential integrity.
/// Returns an empty list exactly when the dataset is valid.
pub fn validate(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen_tables = HashSet::new();
    for t in &d.tables {
        if !seen_tables.insert(t.name.as_str()) {
            out.push(Violation::dataset(format!("duplicate table name '{}'", t.name)));
        }
        let rows = t.row_count();
        for c in &t.columns {
            if c.values.len() != rows {
                out.push(Violation::column(
                    &t.name,
                    &c.name,
                    format!("length {} != table row count {rows}", c.values.len()),
                ));
            }
            if let Some(dict) = &c.dict {
                if let Some(&v) = c.values.iter().find(|&&v| v as usize >= dict.len()) {
                    out.push(Violation::column(
                        &t.name,
                        &c.name,
                        format!("value {v} outside dictionary of size {}", dict.len()),
                    ));
                }
            }
        }
        let mut col_names = HashSet::new();
        for c in &t.columns {
            if !col_names.insert(c.name.as_str()) {
                out.push(Violation::column(&t.name, &c.name, "duplicate column name"));
            }
        }
        if let Some(pk) = &t.pk {
            match t.column(pk) {
                None => out.push(Violation::table(
                    &t.name,
                    format!("pk names missing column '{pk}'"),
                )),
                Some(c) => {
                    let distinct: HashSet<_> = c.values.iter().collect();
                    if distinct.len() != c.values.len() {
                        out.push(Violation::column(&t.name, pk, "duplicate PK values"));
                    }
                }
            }
        }
    }

    let mut seen_edges = HashSet::new();
    for j in &d.joins {
        if j.pk_table == j.fk_table {
            out.push(Violation::dataset(format!(
                "self-loop join on table '{}'",
                j.pk_table
            )));
        }
        if !seen_edges.insert((j.pk_table.clone(), j.pk_column.clone(), j.fk_table.clone(), j.fk_column.clone())) {
            out.push(Violation::dataset(format!(
                "duplicate join edge {}.{} -> {}.{}",
                j.fk_table, j.fk_column, j.pk_table, j.pk_column
            )));
        }
        let pk_col = d.table(&j.pk_table).and_then(|t| t.column(&j.pk_column));
        let fk_col = d.table(&j.fk_table).and_then(|t| t.column(&j.fk_column));
        match (pk_col, fk_col) {
            (Some(pk), Some(fk)) => {
                let pk_vals: HashSet<_> = pk.values.iter().collect();
                if let Some(&bad) = fk.values.iter().find(|v| !pk_vals.contains(v)) {
                    out.push(Violation::column(
                        &j.fk_table,
                        &j.fk_column,
                        format!(
                            "FK value {bad} absent from {}.{}",
                            j.pk_table, j.pk_column
                        ),
                    ));
                }
            }
            _ => out.push(Violation::dataset(format!(
                "join references missing column: {}.{} -> {}.{}",
                j.fk_table, j.fk_column, j.pk_table, j.pk_column
            ))),
        }
    }

    out
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/manifest.json plus <dir>/<table>.csv
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dataset_id: String,
    tables: Vec<ManifestTable>,
    joins: Vec<JoinEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestTable {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pk: Option<String>,
    row_count: usize,
    columns: Vec<ManifestColumn>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestColumn {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dict: Option<Vec<String>>,
}

/// Write `d` as `manifest.json` plus one CSV per table. Fails if the dataset
/// violates its invariants.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    let violations = validate(d);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidDataset {
            dataset: d.id.clone(),
            detail: format!("{v} ({} violations total)", violations.len()),
        });
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    for t in &d.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Csv {
            path: path.clone(),
            source: e,
        })?;
        let header: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
        w.write_record(&header).map_err(|e| Error::Csv {
            path: path.clone(),
            source: e,
        })?;
        let mut buf = Vec::with_capacity(t.columns.len());
        for r in 0..t.row_count() {
            buf.clear();
            for c in &t.columns {
                buf.push(c.values[r].to_string());
            }
            w.write_record(&buf).map_err(|e| Error::Csv {
                path: path.clone(),
                source: e,
            })?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        dataset_id: d.id.clone(),
        tables: d
            .tables
            .iter()
            .map(|t| ManifestTable {
                name: t.name.clone(),
                pk: t.pk.clone(),
                row_count: t.row_count(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ManifestColumn {
                        name: c.name.clone(),
                        dict: c.dict.clone(),
                    })
                    .collect(),
            })
            .collect(),
        joins: d.joins.clone(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Inverse of [`save_dataset`]; re-validates all invariants on load.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::format(
            "manifest",
            format!(
                "unsupported format_version {} (expected {MANIFEST_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }

    let mut tables = Vec::with_capacity(manifest.tables.len());
    for mt in &manifest.tables {
        let path = dir.join(format!("{}.csv", mt.name));
        if !path.exists() {
            return Err(Error::MissingTableFile {
                table: mt.name.clone(),
                path,
            });
        }
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::Csv {
            path: path.clone(),
            source: e,
        })?;
        let header = rdr
            .headers()
            .map_err(|e| Error::Csv {
                path: path.clone(),
                source: e,
            })?
            .clone();
        let expected: Vec<&str> = mt.columns.iter().map(|c| c.name.as_str()).collect();
        let got: Vec<&str> = header.iter().collect();
        if got != expected {
            return Err(Error::format(
                format!("table '{}'", mt.name),
                format!("csv header {got:?} does not match manifest columns {expected:?}"),
            ));
        }
        let mut columns: Vec<ColumnData> = mt
            .columns
            .iter()
            .map(|c| ColumnData {
                name: c.name.clone(),
                values: Vec::with_capacity(mt.row_count),
                dict: c.dict.clone(),
            })
            .collect();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv {
                path: path.clone(),
                source: e,
            })?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v = field.parse::<u64>().map_err(|_| {
                    Error::format(
                        format!("table '{}' column '{}'", mt.name, col.name),
                        format!("non-integer cell '{field}'"),
                    )
                })?;
                col.values.push(v);
            }
        }
        tables.push(Table {
            name: mt.name.clone(),
            columns,
            pk: mt.pk.clone(),
        });
    }

    let d = Dataset {
        id: manifest.dataset_id,
        tables,
        joins: manifest.joins,
    };
    let violations = validate(&d);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidDataset {
            dataset: d.id.clone(),
            detail: format!("{v} ({} violations total)", violations.len()),
        });
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Label store: append-only JSONL, one LabelRecord per line
// ---------------------------------------------------------------------------

pub fn append_labels(path: &Path, records: &[LabelRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::format("label record", e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("label store line {}", i + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Group label records by dataset id, preserving per-dataset record order.
pub fn labels_by_dataset(records: &[LabelRecord]) -> BTreeMap<String, Vec<LabelRecord>> {
    let mut map: BTreeMap<String, Vec<LabelRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.dataset_id.clone()).or_default().push(r.clone());
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn two_table_dataset() -> Dataset {
        let main = Table {
            name: "t0".into(),
            columns: vec![
                ColumnData::new("id", (0..5).collect()),
                ColumnData::new("c0", vec![3, 1, 4, 1, 5]),
            ],
            pk: Some("id".into()),
        };
        let other = Table::new(
            "t1",
            vec![
                ColumnData::new("fk_t0", vec![0, 0, 2, 4]),
                ColumnData::new("c0", vec![9, 2, 6, 5]),
            ],
        );
        Dataset {
            id: "d_test".into(),
            tables: vec![main, other],
            joins: vec![JoinEdge {
                pk_table: "t0".into(),
                pk_column: "id".into(),
                fk_table: "t1".into(),
                fk_column: "fk_t0".into(),
            }],
        }
    }

    #[test]
    fn validate_accepts_valid_dataset() {
        assert!(validate(&two_table_dataset()).is_empty());
    }

    #[test]
    fn validate_flags_ragged_columns() {
        let mut d = two_table_dataset();
        d.tables[0].columns[1].values.pop();
        let v = validate(&d);
        assert_eq!(v.len(), 1);
        assert!(v[0].detail.contains("length"));
    }

    #[test]
    fn validate_flags_duplicate_pk() {
        let mut d = two_table_dataset();
        // ids become [0,0,2,3,4]; FK values [0,0,2,4] still all resolve
        d.tables[0].columns[0].values[1] = 0;
        let v = validate(&d);
        assert_eq!(v.len(), 1);
        assert!(v[0].detail.contains("duplicate PK"));
    }

    #[test]
    fn validate_flags_broken_fk() {
        let mut d = two_table_dataset();
        d.tables[1].columns[0].values[0] = 99;
        let v = validate(&d);
        assert_eq!(v.len(), 1);
        assert!(v[0].detail.contains("FK value 99 absent"));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempdir().unwrap();
        let d = two_table_dataset();
        save_dataset(&d, dir.path()).unwrap();
        let d2 = load_dataset(dir.path()).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn save_empty_dataset_writes_manifest_only() {
        let dir = tempdir().unwrap();
        let d = Dataset {
            id: "empty".into(),
            tables: vec![],
            joins: vec![],
        };
        save_dataset(&d, dir.path()).unwrap();
        let entries: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(entries, vec!["manifest.json"]);
        let d2 = load_dataset(dir.path()).unwrap();
        assert!(d2.tables.is_empty());
    }

    #[test]
    fn single_table_csv_has_header_and_rows() {
        let dir = tempdir().unwrap();
        let d = Dataset {
            id: "one".into(),
            tables: vec![Table::new(
                "t0",
                vec![ColumnData::new("c0", vec![7, 8, 9])],
            )],
            joins: vec![],
        };
        save_dataset(&d, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("t0.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["c0", "7", "8", "9"]);
    }

    #[test]
    fn load_missing_csv_names_the_table() {
        let dir = tempdir().unwrap();
        let d = two_table_dataset();
        save_dataset(&d, dir.path()).unwrap();
        fs::remove_file(dir.path().join("t1.csv")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        match err {
            Error::MissingTableFile { table, .. } => assert_eq!(table, "t1"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_integrity_violation() {
        let dir = tempdir().unwrap();
        let d = two_table_dataset();
        save_dataset(&d, dir.path()).unwrap();
        // Corrupt the FK column on disk: 99 has no matching PK.
        let path = dir.path().join("t1.csv");
        let text = fs::read_to_string(&path).unwrap();
        let text = text.replacen("0,9", "99,9", 1);
        fs::write(&path, text).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("FK value 99"), "got: {msg}");
        assert!(msg.contains("t0.id"), "got: {msg}");
    }

    #[test]
    fn label_store_appends_and_reads_back() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let recs = vec![
            LabelRecord {
                dataset_id: "d0".into(),
                estimator_id: "hist-avi".into(),
                qerr_mean: 1.5,
                latency_mean: 12.0,
                latency_unit: LatencyUnit::Cost,
            },
            LabelRecord {
                dataset_id: "d0".into(),
                estimator_id: "sample-eval".into(),
                qerr_mean: 1.1,
                latency_mean: 800.0,
                latency_unit: LatencyUnit::Cost,
            },
        ];
        append_labels(&path, &recs[..1]).unwrap();
        append_labels(&path, &recs[1..]).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(back, recs);
        assert_eq!(labels_by_dataset(&back)["d0"].len(), 2);
    }

    #[test]
    fn dict_codes_validated_against_dictionary() {
        let mut d = two_table_dataset();
        d.tables[0].columns[1].dict = Some(vec!["a".into(), "b".into()]);
        let v = validate(&d);
        assert!(v.iter().any(|x| x.detail.contains("dictionary")));
    }
}
