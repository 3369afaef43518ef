//! Query-driven estimators: regress log-cardinality from query features.
//!
//! The feature vector is one-hot table membership, one-hot join-edge
//! membership, and one normalized range width per column (1.0 when the
//! column is unfiltered).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd, Mat};
use crate::workload::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeaturizer {
    pub tables: Vec<String>,
    pub joins: Vec<(String, String, String, String)>,
    /// (table, column, min, max) in schema order
    pub columns: Vec<(String, String, u64, u64)>,
}

impl QueryFeaturizer {
    pub fn fit(d: &Dataset) -> Self {
        let tables = d.tables.iter().map(|t| t.name.clone()).collect();
        let joins = d
            .joins
            .iter()
            .map(|j| {
                (
                    j.pk_table.clone(),
                    j.pk_column.clone(),
                    j.fk_table.clone(),
                    j.fk_column.clone(),
                )
            })
            .collect();
        let mut columns = Vec::new();
        for t in &d.tables {
            for c in &t.columns {
                let min = c.values.iter().min().copied().unwrap_or(0);
                let max = c.values.iter().max().copied().unwrap_or(0);
                columns.push((t.name.clone(), c.name.clone(), min, max));
            }
        }
        QueryFeaturizer {
            tables,
            joins,
            columns,
        }
    }

    pub fn dim(&self) -> usize {
        self.tables.len() + self.joins.len() + self.columns.len()
    }

    pub fn encode(&self, q: &Query) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        for t in &q.tables {
            let i = self
                .tables
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| Error::SchemaMismatch {
                    detail: format!("unknown table '{t}'"),
                })?;
            x[i] = 1.0;
        }
        let joff = self.tables.len();
        for j in &q.join_predicates {
            let i = self
                .joins
                .iter()
                .position(|(pt, pc, ft, fc)| {
                    pt == &j.pk_table
                        && pc == &j.pk_column
                        && ft == &j.fk_table
                        && fc == &j.fk_column
                })
                .ok_or_else(|| Error::SchemaMismatch {
                    detail: format!(
                        "join {}.{} = {}.{} not in schema",
                        j.pk_table, j.pk_column, j.fk_table, j.fk_column
                    ),
                })?;
            x[joff + i] = 1.0;
        }
        let coff = joff + self.joins.len();
        for (i, (_, _, _, _)) in self.columns.iter().enumerate() {
            x[coff + i] = 1.0;
        }
        for p in &q.range_predicates {
            let i = self
                .columns
                .iter()
                .position(|(t, c, _, _)| t == &p.table && c == &p.column)
                .ok_or_else(|| Error::SchemaMismatch {
                    detail: format!("unknown column {}.{}", p.table, p.column),
                })?;
            let (_, _, min, max) = self.columns[i];
            let span = (max.saturating_sub(min) + 1) as f64;
            let lo = p.lo.clamp(min, max);
            let hi = p.hi.clamp(min, max);
            let width = if p.hi < min || p.lo > max {
                0.0
            } else {
                (hi - lo + 1) as f64 / span
            };
            x[coff + i] = width;
        }
        Ok(x)
    }
}

fn log_card(truth: u64) -> f64 {
    (truth.max(1) as f64).ln()
}

fn training_rows(
    feat: &QueryFeaturizer,
    train: &[Query],
    id: &str,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::Training {
            id: id.into(),
            detail: "no training queries".into(),
        });
    }
    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for q in train {
        let truth = q.true_card.ok_or_else(|| Error::Training {
            id: id.into(),
            detail: "training query lacks true_card".into(),
        })?;
        xs.push(feat.encode(q)?);
        ys.push(log_card(truth));
    }
    Ok((xs, ys))
}

// ---------------------------------------------------------------------------
// qd-linear: ridge regression, closed form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdLinearModel {
    pub feat: QueryFeaturizer,
    /// weights; last entry is the intercept
    pub w: Vec<f64>,
}

pub fn train_linear(d: &Dataset, train: &[Query], lambda: f64) -> Result<QdLinearModel> {
    let feat = QueryFeaturizer::fit(d);
    let (xs, ys) = training_rows(&feat, train, "qd-linear")?;
    let dim = feat.dim() + 1; // + intercept
    let mut xtx = Mat::zeros(dim, dim);
    let mut xty = vec![0.0; dim];
    for (x, &y) in xs.iter().zip(&ys) {
        let mut row = x.clone();
        row.push(1.0);
        for i in 0..dim {
            if row[i] == 0.0 {
                continue;
            }
            xty[i] += row[i] * y;
            for j in 0..dim {
                let v = xtx.get(i, j) + row[i] * row[j];
                xtx.set(i, j, v);
            }
        }
    }
    for i in 0..dim {
        xtx.set(i, i, xtx.get(i, i) + lambda);
    }
    let w = solve_spd(&xtx, &xty).ok_or_else(|| Error::Training {
        id: "qd-linear".into(),
        detail: "normal equations not positive definite".into(),
    })?;
    Ok(QdLinearModel { feat, w })
}

pub fn estimate_linear(m: &QdLinearModel, q: &Query) -> Result<(f64, u64)> {
    let x = m.feat.encode(q)?;
    let pred = dot(&x, &m.w[..x.len()]) + m.w[x.len()];
    let cost = (x.len() + 1) as u64; // one multiply-add per weight
    Ok((pred.exp().max(1.0), cost))
}

// ---------------------------------------------------------------------------
// qd-mlp: two hidden layers, SGD on squared log-cardinality error
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdMlpModel {
    pub feat: QueryFeaturizer,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

pub struct MlpHyper {
    pub hidden1: usize,
    pub hidden2: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden1: 64,
            hidden2: 32,
            epochs: 60,
            lr: 5e-3,
            seed: 0,
        }
    }
}

fn init_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let bound = 1.0 / (rows as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for v in &mut m.data {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

pub fn train_mlp(d: &Dataset, train: &[Query], hp: &MlpHyper) -> Result<QdMlpModel> {
    let feat = QueryFeaturizer::fit(d);
    let (xs, ys) = training_rows(&feat, train, "qd-mlp")?;
    let dim = feat.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut m = QdMlpModel {
        feat,
        w1: init_mat(dim, hp.hidden1, &mut rng),
        b1: vec![0.0; hp.hidden1],
        w2: init_mat(hp.hidden1, hp.hidden2, &mut rng),
        b2: vec![0.0; hp.hidden2],
        w3: (0..hp.hidden2)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect(),
        b3: ys.iter().sum::<f64>() / ys.len() as f64,
    };

    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hp.epochs {
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        for &i in &order {
            let x = &xs[i];
            // forward
            let mut h1 = m.b1.clone();
            for (j, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (h, w) in h1.iter_mut().zip(m.w1.row(j)) {
                    *h += xv * w;
                }
            }
            let a1: Vec<f64> = h1.iter().map(|&v| v.max(0.0)).collect();
            let mut h2 = m.b2.clone();
            for (j, &av) in a1.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (h, w) in h2.iter_mut().zip(m.w2.row(j)) {
                    *h += av * w;
                }
            }
            let a2: Vec<f64> = h2.iter().map(|&v| v.max(0.0)).collect();
            let pred = dot(&a2, &m.w3) + m.b3;
            // backward, squared error
            let dpred = 2.0 * (pred - ys[i]);
            let mut da2 = vec![0.0; a2.len()];
            for (k, &a) in a2.iter().enumerate() {
                da2[k] = dpred * m.w3[k];
                m.w3[k] -= hp.lr * dpred * a;
            }
            m.b3 -= hp.lr * dpred;
            let dh2: Vec<f64> = da2
                .iter()
                .zip(&h2)
                .map(|(&g, &h)| if h > 0.0 { g } else { 0.0 })
                .collect();
            let mut da1 = vec![0.0; a1.len()];
            for (j, &av) in a1.iter().enumerate() {
                let wrow = m.w2.row_mut(j);
                for (k, &g) in dh2.iter().enumerate() {
                    da1[j] += g * wrow[k];
                    wrow[k] -= hp.lr * g * av;
                }
            }
            for (b, &g) in m.b2.iter_mut().zip(&dh2) {
                *b -= hp.lr * g;
            }
            let dh1: Vec<f64> = da1
                .iter()
                .zip(&h1)
                .map(|(&g, &h)| if h > 0.0 { g } else { 0.0 })
                .collect();
            for (j, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = m.w1.row_mut(j);
                for (k, &g) in dh1.iter().enumerate() {
                    wrow[k] -= hp.lr * g * xv;
                }
            }
            for (b, &g) in m.b1.iter_mut().zip(&dh1) {
                *b -= hp.lr * g;
            }
        }
    }
    Ok(m)
}

pub fn estimate_mlp(m: &QdMlpModel, q: &Query) -> Result<(f64, u64)> {
    let x = m.feat.encode(q)?;
    let mut h1 = m.b1.clone();
    for (j, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (h, w) in h1.iter_mut().zip(m.w1.row(j)) {
            *h += xv * w;
        }
    }
    for v in &mut h1 {
        *v = v.max(0.0);
    }
    let mut h2 = m.b2.clone();
    for (j, &av) in h1.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (h, w) in h2.iter_mut().zip(m.w2.row(j)) {
            *h += av * w;
        }
    }
    for v in &mut h2 {
        *v = v.max(0.0);
    }
    let pred = dot(&h2, &m.w3) + m.b3;
    // full multiply-add count, independent of sparsity shortcuts
    let cost = (x.len() * m.b1.len() + m.b1.len() * m.b2.len() + m.b2.len()) as u64;
    Ok((pred.exp().max(1.0), cost))
}
