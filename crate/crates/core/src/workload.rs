//! SPJ query generation, an exact-cardinality oracle, and Q-error.
//!
//! Queries select a connected subset of tables, join them along a spanning
//! subtree of schema-declared PK-FK edges, and filter non-key columns with
//! range predicates. The oracle filters each table and counts the join
//! result exactly with per-key hash aggregation along the join tree, which
//! never materializes intermediate results.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, JoinEdge};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePred {
    pub table: String,
    pub column: String,
    pub lo: u64,
    pub hi: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub tables: Vec<String>,
    pub join_predicates: Vec<JoinEdge>,
    pub range_predicates: Vec<RangePred>,
    pub true_card: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub dataset_id: String,
    pub train: Vec<Query>,
    pub test: Vec<Query>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    pub n_train: usize,
    pub n_test: usize,
    /// Probability of placing a range predicate on each non-key column.
    pub pred_prob: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        // Desk-scale defaults; labeling hundreds of datasets forces a small
        // per-dataset workload.
        WorkloadParams {
            n_train: 300,
            n_test: 100,
            pred_prob: 0.6,
        }
    }
}

/// Q-error of an estimate against the true cardinality. Truth 0 is guarded
/// to 1 so the ratio stays defined.
pub fn qerror(est: f64, truth: u64) -> f64 {
    assert!(est > 0.0, "estimates must be positive (got {est})");
    let t = truth.max(1) as f64;
    if est > t {
        est / t
    } else {
        t / est
    }
}

fn gen_query(d: &Dataset, pred_prob: f64, rng: &mut impl Rng) -> Query {
    let n = d.tables.len();
    let target = rng.gen_range(1..=n);
    let start = rng.gen_range(0..n);
    let mut chosen: HashSet<usize> = HashSet::new();
    chosen.insert(start);
    let mut tree: Vec<JoinEdge> = Vec::new();

    while chosen.len() < target {
        // Cut edges in schema order keep the growth deterministic per rng.
        let cut: Vec<(&JoinEdge, usize)> = d
            .joins
            .iter()
            .filter_map(|j| {
                let pi = d.table_index(&j.pk_table)?;
                let fi = d.table_index(&j.fk_table)?;
                match (chosen.contains(&pi), chosen.contains(&fi)) {
                    (true, false) => Some((j, fi)),
                    (false, true) => Some((j, pi)),
                    _ => None,
                }
            })
            .collect();
        if cut.is_empty() {
            break;
        }
        let (edge, new_table) = cut[rng.gen_range(0..cut.len())];
        chosen.insert(new_table);
        tree.push(edge.clone());
    }

    let mut table_names: Vec<usize> = chosen.into_iter().collect();
    table_names.sort_unstable();
    let tables: Vec<String> = table_names
        .iter()
        .map(|&i| d.tables[i].name.clone())
        .collect();

    let mut range_predicates = Vec::new();
    for name in &tables {
        let t = d.table(name).expect("chosen tables exist");
        let keys = d.key_columns(name);
        for c in &t.columns {
            if keys.contains(&c.name) || c.values.is_empty() {
                continue;
            }
            if rng.gen::<f64>() < pred_prob {
                let min = *c.values.iter().min().unwrap();
                let max = *c.values.iter().max().unwrap();
                let a = rng.gen_range(min..=max);
                let b = rng.gen_range(min..=max);
                range_predicates.push(RangePred {
                    table: name.clone(),
                    column: c.name.clone(),
                    lo: a.min(b),
                    hi: a.max(b),
                });
            }
        }
    }

    Query {
        tables,
        join_predicates: tree,
        range_predicates,
        true_card: None,
    }
}

/// Generate a workload of `n_train + n_test` queries and fill every
/// `true_card` with the exact oracle.
pub fn gen_workload(
    d: &Dataset,
    params: &WorkloadParams,
    rng: &mut impl Rng,
) -> Result<Workload> {
    let total = params.n_train + params.n_test;
    let mut queries = Vec::with_capacity(total);
    for _ in 0..total {
        let mut q = gen_query(d, params.pred_prob, rng);
        q.true_card = Some(exact_card(d, &q)?);
        queries.push(q);
    }
    let test = queries.split_off(params.n_train);
    Ok(Workload {
        dataset_id: d.id.clone(),
        train: queries,
        test,
    })
}

/// Row indices of `table` passing all its range predicates.
pub fn filtered_rows(d: &Dataset, q: &Query, table: &str) -> Result<Vec<usize>> {
    let t = d
        .table(table)
        .ok_or_else(|| Error::SchemaMismatch {
            detail: format!("query references missing table '{table}'"),
        })?;
    let mut preds = Vec::new();
    for p in q.range_predicates.iter().filter(|p| p.table == table) {
        if p.lo > p.hi {
            return Err(Error::SchemaMismatch {
                detail: format!("predicate on {table}.{} has lo > hi", p.column),
            });
        }
        let idx = t.column_index(&p.column).ok_or_else(|| Error::SchemaMismatch {
            detail: format!("query references missing column {table}.{}", p.column),
        })?;
        preds.push((idx, p.lo, p.hi));
    }
    let rows = t.row_count();
    let mut out = Vec::new();
    'rows: for r in 0..rows {
        for &(c, lo, hi) in &preds {
            let v = t.columns[c].values[r];
            if v < lo || v > hi {
                continue 'rows;
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Exact result cardinality of the select-project-join.
///
/// Filters each table, then counts matches along the join tree bottom-up:
/// each child table is hash-aggregated by its join-key value and parents
/// multiply in the aggregated counts. Join predicates must form a spanning
/// tree over the query's tables (the generator only emits those).
pub fn exact_card(d: &Dataset, q: &Query) -> Result<u64> {
    if q.tables.is_empty() {
        return Ok(0);
    }
    let pos: HashMap<&str, usize> = q
        .tables
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    if q.join_predicates.len() + 1 != q.tables.len() {
        return Err(Error::SchemaMismatch {
            detail: format!(
                "join predicates must form a spanning tree: {} tables, {} predicates",
                q.tables.len(),
                q.join_predicates.len()
            ),
        });
    }

    // adjacency: (neighbor, own join column, neighbor join column)
    let mut adj: Vec<Vec<(usize, String, String)>> = vec![Vec::new(); q.tables.len()];
    for j in &q.join_predicates {
        let (pi, fi) = match (pos.get(j.pk_table.as_str()), pos.get(j.fk_table.as_str())) {
            (Some(&a), Some(&b)) => (a, b),
            _ => {
                return Err(Error::SchemaMismatch {
                    detail: format!(
                        "join predicate {}.{} = {}.{} references a table outside the query",
                        j.pk_table, j.pk_column, j.fk_table, j.fk_column
                    ),
                })
            }
        };
        adj[pi].push((fi, j.pk_column.clone(), j.fk_column.clone()));
        adj[fi].push((pi, j.fk_column.clone(), j.pk_column.clone()));
    }

    let filtered: Vec<Vec<usize>> = q
        .tables
        .iter()
        .map(|t| filtered_rows(d, q, t))
        .collect::<Result<_>>()?;

    // Iterative post-order DFS from table 0; counts in u128 so deep chains
    // of joins cannot overflow.
    let n = q.tables.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    let mut seen = vec![false; n];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for (u, _, _) in &adj[v] {
            if !seen[*u] {
                seen[*u] = true;
                parent[*u] = Some(v);
                stack.push(*u);
            }
        }
    }
    if order.len() != n {
        return Err(Error::SchemaMismatch {
            detail: "query tables are not connected by its join predicates".into(),
        });
    }

    // weight maps keyed by the join column shared with the parent
    let mut child_weights: Vec<Option<HashMap<u64, u128>>> = vec![None; n];
    let mut total: u128 = 0;
    for &v in order.iter().rev() {
        let t = d.table(&q.tables[v]).expect("validated above");
        // columns used to look up each child's aggregated weights
        let mut child_cols: Vec<(usize, usize)> = Vec::new(); // (child, own col idx)
        for (u, own_col, _) in &adj[v] {
            if parent[*u] == Some(v) {
                let idx = t.column_index(own_col).ok_or_else(|| Error::SchemaMismatch {
                    detail: format!("missing join column {}.{own_col}", q.tables[v]),
                })?;
                child_cols.push((*u, idx));
            }
        }
        let up_col = parent[v].map(|p| {
            let (_, own, _) = adj[v]
                .iter()
                .find(|(u, _, _)| *u == p)
                .expect("parent edge present");
            t.column_index(own).ok_or_else(|| Error::SchemaMismatch {
                detail: format!("missing join column {}.{own}", q.tables[v]),
            })
        });
        let up_col = match up_col {
            Some(r) => Some(r?),
            None => None,
        };

        let mut agg: HashMap<u64, u128> = HashMap::new();
        for &r in &filtered[v] {
            let mut w: u128 = 1;
            for &(child, col) in &child_cols {
                let key = t.columns[col].values[r];
                let cw = child_weights[child]
                    .as_ref()
                    .and_then(|m| m.get(&key))
                    .copied()
                    .unwrap_or(0);
                w *= cw;
                if w == 0 {
                    break;
                }
            }
            if w == 0 {
                continue;
            }
            match up_col {
                Some(c) => {
                    let key = t.columns[c].values[r];
                    *agg.entry(key).or_insert(0) += w;
                }
                None => total += w,
            }
        }
        if parent[v].is_some() {
            child_weights[v] = Some(agg);
        }
    }
    Ok(u64::try_from(total).unwrap_or(u64::MAX))
}

// ---------------------------------------------------------------------------
// Workload persistence: JSONL, one record per query
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadLine {
    dataset_id: String,
    split: Split,
    #[serde(flatten)]
    query: Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Train,
    Test,
}

pub fn save_workload(w: &Workload, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |qs: &[Query], split: Split| -> Result<()> {
        for q in qs {
            let line = WorkloadLine {
                dataset_id: w.dataset_id.clone(),
                split,
                query: q.clone(),
            };
            let s = serde_json::to_string(&line)
                .map_err(|e| Error::format("workload line", e.to_string()))?;
            writeln!(f, "{s}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    };
    write(&w.train, Split::Train)?;
    write(&w.test, Split::Test)
}

pub fn load_workload(path: &Path) -> Result<Workload> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dataset_id = String::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WorkloadLine = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("workload line {}", i + 1), e.to_string()))?;
        dataset_id = rec.dataset_id;
        match rec.split {
            Split::Train => train.push(rec.query),
            Split::Test => test.push(rec.query),
        }
    }
    Ok(Workload {
        dataset_id,
        train,
        test,
    })
}
