//! Feature extraction: per-table statistics assembled into a feature graph.
//!
//! Each table becomes one vertex row laid out as
//! `[k stats per column, padded to m columns | m x m |Pearson| block,
//! flattened | n_rows | n_cols]`, giving `(k + m) * m + 2` entries with
//! `k = 6`. The edge matrix holds the join correlation
//! `|distinct(FK)| / |distinct(PK)|` per declared PK-FK edge.
//!
//! The six per-column stats, in order: moment skewness (clamped to [-10,10]),
//! distinct count, excess kurtosis (clamped to [-10,10]), range, population
//! standard deviation, mean. Zero-variance columns report 0 skewness and
//! kurtosis.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ColumnData, Dataset, Table};
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const K_FEATURES: usize = 6;
const MOMENT_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Maximum column count per table seen while fitting (the layout's m).
    pub m_max_cols: usize,
    pub k_features: usize,
    pub n_max_tables: usize,
    /// Per-dimension (min, max) of the unnormalized vertex features over the
    /// training corpus; length `(k + m) * m + 2`.
    pub norm_stats: Vec<(f64, f64)>,
}

impl FeatureConfig {
    pub fn vertex_dim(&self) -> usize {
        (self.k_features + self.m_max_cols) * self.m_max_cols + 2
    }
}

/// Vertex matrix `v` of shape `[n_tables, (k+m)m+2]` and edge matrix `e` of
/// shape `[n_tables, n_tables]` with entries in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGraph {
    pub v: Mat,
    pub e: Mat,
}

impl FeatureGraph {
    pub fn n_vertices(&self) -> usize {
        self.v.rows
    }
}

pub fn extract_column_stats(c: &ColumnData) -> Result<[f64; K_FEATURES]> {
    if c.values.is_empty() {
        return Err(Error::Insufficient {
            context: "extract_column_stats",
            needed: 1,
            got: 0,
        });
    }
    let n = c.values.len() as f64;
    let mean = c.values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in &c.values {
        let d = v as f64 - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 > 0.0 {
        (
            (m3 / m2.powf(1.5)).clamp(-MOMENT_CLAMP, MOMENT_CLAMP),
            (m4 / (m2 * m2) - 3.0).clamp(-MOMENT_CLAMP, MOMENT_CLAMP),
        )
    } else {
        (0.0, 0.0)
    };
    let distinct = c.values.iter().collect::<HashSet<_>>().len() as f64;
    let min = *c.values.iter().min().unwrap();
    let max = *c.values.iter().max().unwrap();
    Ok([skew, distinct, kurt, (max - min) as f64, m2.sqrt(), mean])
}

fn pearson_abs(a: &[u64], b: &[u64]) -> f64 {
    let n = a.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).abs().min(1.0)
}

/// `m x m` matrix of absolute Pearson correlations between column pairs;
/// diagonal 1 for existing columns, padding 0.
pub fn extract_correlation_block(t: &Table, m: usize) -> Result<Mat> {
    if t.columns.len() > m {
        return Err(Error::DimMismatch {
            expected: m,
            actual: t.columns.len(),
            context: "extract_correlation_block",
        });
    }
    let mut out = Mat::zeros(m, m);
    for i in 0..t.columns.len() {
        out.set(i, i, 1.0);
        for j in i + 1..t.columns.len() {
            let r = pearson_abs(&t.columns[i].values, &t.columns[j].values);
            out.set(i, j, r);
            out.set(j, i, r);
        }
    }
    Ok(out)
}

fn vertex_row(t: &Table, m: usize, k: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity((k + m) * m + 2);
    for i in 0..m {
        match t.columns.get(i) {
            Some(c) => row.extend_from_slice(&extract_column_stats(c)?),
            None => row.extend(std::iter::repeat(0.0).take(k)),
        }
    }
    let corr = extract_correlation_block(t, m)?;
    row.extend_from_slice(&corr.data);
    row.push(t.row_count() as f64);
    row.push(t.columns.len() as f64);
    Ok(row)
}

fn distinct_count(values: &[u64]) -> usize {
    values.iter().collect::<HashSet<_>>().len()
}

fn edge_matrix(d: &Dataset) -> Result<Mat> {
    let n = d.tables.len();
    let mut e = Mat::zeros(n, n);
    for j in &d.joins {
        let pi = d.table_index(&j.pk_table).ok_or_else(|| Error::SchemaMismatch {
            detail: format!("join references missing table '{}'", j.pk_table),
        })?;
        let fi = d.table_index(&j.fk_table).ok_or_else(|| Error::SchemaMismatch {
            detail: format!("join references missing table '{}'", j.fk_table),
        })?;
        let pk = d.tables[pi]
            .column(&j.pk_column)
            .ok_or_else(|| Error::SchemaMismatch {
                detail: format!("missing join column {}.{}", j.pk_table, j.pk_column),
            })?;
        let fk = d.tables[fi]
            .column(&j.fk_column)
            .ok_or_else(|| Error::SchemaMismatch {
                detail: format!("missing join column {}.{}", j.fk_table, j.fk_column),
            })?;
        let denom = distinct_count(&pk.values).max(1) as f64;
        let corr = (distinct_count(&fk.values) as f64 / denom).min(1.0);
        e.set(pi, fi, corr);
    }
    Ok(e)
}

fn check_bounds(d: &Dataset, m_max: usize, n_max: usize) -> Result<()> {
    if d.tables.len() > n_max {
        return Err(Error::DimMismatch {
            expected: n_max,
            actual: d.tables.len(),
            context: "feature graph table count",
        });
    }
    if let Some(t) = d.tables.iter().find(|t| t.columns.len() > m_max) {
        return Err(Error::DimMismatch {
            expected: m_max,
            actual: t.columns.len(),
            context: "feature graph column count",
        });
    }
    Ok(())
}

/// Unnormalized feature graph; used to fit normalization stats and for
/// drift distances, where clamping would mask outliers.
pub fn build_raw_feature_graph(d: &Dataset, m_max: usize, n_max: usize) -> Result<FeatureGraph> {
    check_bounds(d, m_max, n_max)?;
    let rows = d
        .tables
        .iter()
        .map(|t| vertex_row(t, m_max, K_FEATURES))
        .collect::<Result<Vec<_>>>()?;
    let dim = (K_FEATURES + m_max) * m_max + 2;
    let v = if rows.is_empty() {
        Mat::zeros(0, dim)
    } else {
        Mat::from_rows(&rows)
    };
    Ok(FeatureGraph {
        v,
        e: edge_matrix(d)?,
    })
}

/// Fit per-dimension min/max normalization over a corpus; `m_max_cols` and
/// `n_max_tables` become the corpus maxima.
pub fn fit_normalization(corpus: &[Dataset]) -> Result<FeatureConfig> {
    if corpus.is_empty() {
        return Err(Error::Insufficient {
            context: "fit_normalization corpus",
            needed: 1,
            got: 0,
        });
    }
    let m_max = corpus
        .iter()
        .flat_map(|d| d.tables.iter().map(|t| t.columns.len()))
        .max()
        .unwrap_or(1)
        .max(1);
    let n_max = corpus.iter().map(|d| d.tables.len()).max().unwrap_or(1).max(1);
    let dim = (K_FEATURES + m_max) * m_max + 2;
    let mut norm_stats = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for d in corpus {
        let g = build_raw_feature_graph(d, m_max, n_max)?;
        for r in 0..g.v.rows {
            for (s, &x) in norm_stats.iter_mut().zip(g.v.row(r)) {
                s.0 = s.0.min(x);
                s.1 = s.1.max(x);
            }
        }
    }
    for s in &mut norm_stats {
        if !s.0.is_finite() {
            *s = (0.0, 0.0);
        }
    }
    Ok(FeatureConfig {
        m_max_cols: m_max,
        k_features: K_FEATURES,
        n_max_tables: n_max,
        norm_stats,
    })
}

#[inline]
fn normalize(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Feature graph with vertex features min-max normalized (and clamped) by
/// the fitted config. Edge entries are already in [0, 1].
pub fn build_feature_graph(d: &Dataset, cfg: &FeatureConfig) -> Result<FeatureGraph> {
    let mut g = build_raw_feature_graph(d, cfg.m_max_cols, cfg.n_max_tables)?;
    for r in 0..g.v.rows {
        for (x, &(lo, hi)) in g.v.row_mut(r).iter_mut().zip(&cfg.norm_stats) {
            *x = normalize(*x, lo, hi);
        }
    }
    Ok(g)
}

/// Flatten a graph into one vector, padding vertices to `n_max` zero rows
/// and the edge matrix to `n_max x n_max`. KNN over raw features and drift
/// distances both operate on this layout.
pub fn flatten_padded(g: &FeatureGraph, n_max: usize) -> Vec<f64> {
    let dim = g.v.cols;
    let n = g.v.rows;
    let mut out = Vec::with_capacity(n_max * dim + n_max * n_max);
    for r in 0..n_max {
        if r < n {
            out.extend_from_slice(g.v.row(r));
        } else {
            out.extend(std::iter::repeat(0.0).take(dim));
        }
    }
    for i in 0..n_max {
        for j in 0..n_max {
            out.push(if i < n && j < n { g.e.get(i, j) } else { 0.0 });
        }
    }
    out
}
