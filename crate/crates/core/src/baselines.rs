//! Alternative selection strategies and the evaluation harness.
//!
//! Strategies compared against the advisor:
//! - MLP: the same GIN architecture with a three-layer classification head
//!   trained end-to-end with cross-entropy on the optimal-estimator class.
//! - Rule: random data-driven member for single-table datasets, random
//!   query-driven member for multi-table ones.
//! - RawKnn: KNN averaging directly over flattened feature graphs, skipping
//!   the learned encoder.
//! - Sampling: label a row sample of the target dataset with the full pool
//!   and pick its argmax (online learning at reduced cost).
//! - Oracle: argmax of the true score vector; the zero-D-error upper bound.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advisor::{build_rcs, recommend};
use crate::corpus::{ColumnData, Dataset, LabelRecord, LatencyUnit, Table};
use crate::dml::DmlConfig;
use crate::encoder::{
    backward, forward, init_params, EncoderConfig, EncoderGrads, EncoderParams, sgd_step,
};
use crate::error::{Error, Result};
use crate::estimators::{
    d_error, label_dataset, score_vector, EstimatorSpec, Family, ScoreVector,
};
use crate::featurizer::{build_feature_graph, flatten_padded, FeatureConfig, FeatureGraph};
use crate::linalg::{euclidean, Mat};
use crate::workload::{gen_workload, WorkloadParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    Advisor { k: usize },
    Mlp,
    Rule,
    RawKnn { k: usize },
    Sampling { rate: f64 },
    Oracle,
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Advisor { k } => format!("advisor(k={k})"),
            Strategy::Mlp => "mlp".into(),
            Strategy::Rule => "rule".into(),
            Strategy::RawKnn { k } => format!("raw-knn(k={k})"),
            Strategy::Sampling { rate } => format!("sampling(rate={rate})"),
            Strategy::Oracle => "oracle".into(),
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// ---------------------------------------------------------------------------
// MLP-based selection: GIN + classification head
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSelector {
    pub encoder: EncoderParams,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
}

const MLP_HIDDEN: (usize, usize) = (64, 32);

struct HeadTape {
    emb: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpSelector {
    fn head_forward(&self, emb: &[f64]) -> HeadTape {
        let lin = |x: &[f64], w: &Mat, b: &[f64]| -> Vec<f64> {
            let mut out = b.to_vec();
            for (j, &xv) in x.iter().enumerate() {
                for (o, wv) in out.iter_mut().zip(w.row(j)) {
                    *o += xv * wv;
                }
            }
            out
        };
        let z1 = lin(emb, &self.w1, &self.b1);
        let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let z2 = lin(&a1, &self.w2, &self.b2);
        let a2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        let logits = lin(&a2, &self.w3, &self.b3);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        HeadTape {
            emb: emb.to_vec(),
            z1,
            a1,
            z2,
            a2,
            probs: exps.into_iter().map(|e| e / sum).collect(),
        }
    }

    pub fn select(&self, g: &FeatureGraph) -> Result<usize> {
        let emb = crate::encoder::encode(g, &self.encoder)?;
        let t = self.head_forward(&emb.0);
        Ok(ScoreVector(t.probs).argmax())
    }
}

/// Train the GIN + head classifier on optimal-estimator classes with the
/// same SGD budget as the metric-learning trainer.
pub fn train_mlp_selector(
    graphs: &[FeatureGraph],
    classes: &[usize],
    n_classes: usize,
    enc_cfg: &EncoderConfig,
    budget: &DmlConfig,
) -> Result<MlpSelector> {
    if graphs.is_empty() || graphs.len() != classes.len() {
        return Err(Error::Insufficient {
            context: "train_mlp_selector corpus",
            needed: 1,
            got: graphs.len().min(classes.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(enc_cfg.init_seed ^ 0x6d6c70);
    let init_mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let bound = 1.0 / (rows as f64).sqrt();
        let mut m = Mat::zeros(rows, cols);
        for v in &mut m.data {
            *v = rng.gen_range(-bound..bound);
        }
        m
    };
    let (h1, h2) = MLP_HIDDEN;
    let d = enc_cfg.embed_dim;
    let mut model = MlpSelector {
        encoder: init_params(enc_cfg, graphs[0].v.cols),
        w1: init_mat(d, h1, &mut rng),
        b1: vec![0.0; h1],
        w2: init_mat(h1, h2, &mut rng),
        b2: vec![0.0; h2],
        w3: init_mat(h2, n_classes, &mut rng),
        b3: vec![0.0; n_classes],
    };

    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(budget.seed ^ 0x636c73);
    for _ in 0..budget.epochs {
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut shuffle_rng);
        for chunk in order.chunks(budget.batch_size.max(1)) {
            let inv = 1.0 / chunk.len() as f64;
            let mut enc_grads = EncoderGrads::zeros_like(&model.encoder);
            let mut gw1 = Mat::zeros(d, h1);
            let mut gb1 = vec![0.0; h1];
            let mut gw2 = Mat::zeros(h1, h2);
            let mut gb2 = vec![0.0; h2];
            let mut gw3 = Mat::zeros(h2, n_classes);
            let mut gb3 = vec![0.0; n_classes];
            for &gi in chunk {
                let (emb, tape) = forward(&graphs[gi], &model.encoder)?;
                let t = model.head_forward(&emb.0);
                // cross-entropy: d logits = probs - onehot
                let mut dlog: Vec<f64> = t.probs.clone();
                dlog[classes[gi]] -= 1.0;
                for v in &mut dlog {
                    *v *= inv;
                }
                // back through w3
                let mut da2 = vec![0.0; h2];
                for (j, &a) in t.a2.iter().enumerate() {
                    let wrow = model.w3.row(j);
                    let grow = gw3.row_mut(j);
                    for (k, &dl) in dlog.iter().enumerate() {
                        da2[j] += wrow[k] * dl;
                        grow[k] += a * dl;
                    }
                }
                for (g, &dl) in gb3.iter_mut().zip(&dlog) {
                    *g += dl;
                }
                let dz2: Vec<f64> = da2
                    .iter()
                    .zip(&t.z2)
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect();
                let mut da1 = vec![0.0; h1];
                for (j, &a) in t.a1.iter().enumerate() {
                    let wrow = model.w2.row(j);
                    let grow = gw2.row_mut(j);
                    for (k, &dz) in dz2.iter().enumerate() {
                        da1[j] += wrow[k] * dz;
                        grow[k] += a * dz;
                    }
                }
                for (g, &dz) in gb2.iter_mut().zip(&dz2) {
                    *g += dz;
                }
                let dz1: Vec<f64> = da1
                    .iter()
                    .zip(&t.z1)
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect();
                let mut demb = vec![0.0; d];
                for (j, &e) in t.emb.iter().enumerate() {
                    let wrow = model.w1.row(j);
                    let grow = gw1.row_mut(j);
                    for (k, &dz) in dz1.iter().enumerate() {
                        demb[j] += wrow[k] * dz;
                        grow[k] += e * dz;
                    }
                }
                for (g, &dz) in gb1.iter_mut().zip(&dz1) {
                    *g += dz;
                }
                backward(&tape, &model.encoder, &demb, &mut enc_grads);
            }
            if budget.clip_norm > 0.0 {
                let norm = enc_grads.l2_norm();
                if norm > budget.clip_norm {
                    enc_grads.scale(budget.clip_norm / norm);
                }
            }
            sgd_step(&mut model.encoder, &enc_grads, budget.lr);
            let lr = budget.lr;
            for (w, &g) in model.w1.data.iter_mut().zip(&gw1.data) {
                *w -= lr * g;
            }
            for (b, &g) in model.b1.iter_mut().zip(&gb1) {
                *b -= lr * g;
            }
            for (w, &g) in model.w2.data.iter_mut().zip(&gw2.data) {
                *w -= lr * g;
            }
            for (b, &g) in model.b2.iter_mut().zip(&gb2) {
                *b -= lr * g;
            }
            for (w, &g) in model.w3.data.iter_mut().zip(&gw3.data) {
                *w -= lr * g;
            }
            for (b, &g) in model.b3.iter_mut().zip(&gb3) {
                *b -= lr * g;
            }
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Rule-based selection
// ---------------------------------------------------------------------------

/// Single-table datasets draw a random data-driven member, multi-table ones
/// a random query-driven member.
pub fn rule_select(d: &Dataset, pool: &[EstimatorSpec], rng: &mut impl Rng) -> Result<usize> {
    let want = if d.tables.len() <= 1 {
        Family::DataDriven
    } else {
        Family::QueryDriven
    };
    let candidates: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(_, s)| s.family == want)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidParam {
            name: "pool",
            detail: format!("no {want:?} members for rule selection"),
        });
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

// ---------------------------------------------------------------------------
// Raw-feature KNN selection
// ---------------------------------------------------------------------------

/// KNN directly over flattened padded feature graphs, skipping the encoder.
pub fn rawknn_select(
    train_flats: &[Vec<f64>],
    train_records: &[Vec<LabelRecord>],
    query_flat: &[f64],
    k: usize,
    w_a: f64,
) -> Result<usize> {
    if k == 0 || k > train_flats.len() {
        return Err(Error::InvalidParam {
            name: "k",
            detail: format!("k={k} with {} candidates", train_flats.len()),
        });
    }
    let mut dists: Vec<(f64, usize)> = train_flats
        .iter()
        .enumerate()
        .map(|(i, f)| (euclidean(query_flat, f), i))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut avg: Option<Vec<f64>> = None;
    for &(_, i) in dists.iter().take(k) {
        let sv = score_vector(&train_records[i], w_a)?;
        match &mut avg {
            None => avg = Some(sv.0),
            Some(acc) => {
                for (a, s) in acc.iter_mut().zip(&sv.0) {
                    *a += s;
                }
            }
        }
    }
    let mut avg = avg.expect("k >= 1");
    for a in &mut avg {
        *a /= k as f64;
    }
    Ok(ScoreVector(avg).argmax())
}

// ---------------------------------------------------------------------------
// Sampling-based selection
// ---------------------------------------------------------------------------

/// Bernoulli row sample of every table, with dangling FK rows dropped until
/// referential integrity holds again.
pub fn sample_dataset(d: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rate) || rate == 0.0 {
        return Err(Error::InvalidParam {
            name: "sample_rate",
            detail: format!("{rate} outside (0, 1]"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables: Vec<Table> = d
        .tables
        .iter()
        .map(|t| {
            let keep: Vec<usize> = (0..t.row_count())
                .filter(|_| rate >= 1.0 || rng.gen::<f64>() < rate)
                .collect();
            Table {
                name: t.name.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnData {
                        name: c.name.clone(),
                        values: keep.iter().map(|&i| c.values[i]).collect(),
                        dict: c.dict.clone(),
                    })
                    .collect(),
                pk: t.pk.clone(),
            }
        })
        .collect();

    // A dropped PK row can orphan FK rows elsewhere; iterate to fixpoint.
    loop {
        let mut dropped = false;
        for j in &d.joins {
            let pk_values: std::collections::HashSet<u64> = {
                let pk_table = tables
                    .iter()
                    .find(|t| t.name == j.pk_table)
                    .ok_or_else(|| Error::SchemaMismatch {
                        detail: format!("missing table '{}'", j.pk_table),
                    })?;
                pk_table
                    .column(&j.pk_column)
                    .ok_or_else(|| Error::SchemaMismatch {
                        detail: format!("missing column {}.{}", j.pk_table, j.pk_column),
                    })?
                    .values
                    .iter()
                    .copied()
                    .collect()
            };
            let fk_table = tables
                .iter_mut()
                .find(|t| t.name == j.fk_table)
                .ok_or_else(|| Error::SchemaMismatch {
                    detail: format!("missing table '{}'", j.fk_table),
                })?;
            let fk_idx =
                fk_table
                    .column_index(&j.fk_column)
                    .ok_or_else(|| Error::SchemaMismatch {
                        detail: format!("missing column {}.{}", j.fk_table, j.fk_column),
                    })?;
            let keep: Vec<usize> = (0..fk_table.row_count())
                .filter(|&r| pk_values.contains(&fk_table.columns[fk_idx].values[r]))
                .collect();
            if keep.len() != fk_table.row_count() {
                dropped = true;
                for c in &mut fk_table.columns {
                    c.values = keep.iter().map(|&i| c.values[i]).collect();
                }
            }
        }
        if !dropped {
            break;
        }
    }

    if tables.iter().any(|t| t.row_count() == 0) {
        return Err(Error::Insufficient {
            context: "sample_dataset rows (table sampled empty)",
            needed: 1,
            got: 0,
        });
    }
    Ok(Dataset {
        id: format!("{}-sample", d.id),
        tables,
        joins: d.joins.clone(),
    })
}

/// Label a sample of the dataset with the full pool; the caller derives the
/// score vector at any weight from the returned records.
///
/// FK-chain repair compounds multiplicatively, so a low rate can empty a
/// table outright; the rate is doubled (up to 1.0, the full dataset) until
/// every table keeps at least one row.
pub fn sampling_label(
    d: &Dataset,
    pool: &[EstimatorSpec],
    rate: f64,
    wl_params: &WorkloadParams,
    unit: LatencyUnit,
    seed: u64,
) -> Result<Vec<LabelRecord>> {
    let mut rate = rate.clamp(f64::MIN_POSITIVE, 1.0);
    let sample = loop {
        match sample_dataset(d, rate, seed) {
            Ok(s) => break s,
            Err(Error::Insufficient { .. }) if rate < 1.0 => rate = (rate * 2.0).min(1.0),
            Err(e) => return Err(e),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x776c);
    let w = gen_workload(&sample, wl_params, &mut rng)?;
    let out = label_dataset(&sample, pool, &w, unit)?;
    if let Some(f) = out.failures.first() {
        return Err(Error::Training {
            id: f.estimator_id.clone(),
            detail: f.detail.clone(),
        });
    }
    Ok(out.records)
}

pub fn sampling_select(
    d: &Dataset,
    pool: &[EstimatorSpec],
    rate: f64,
    wl_params: &WorkloadParams,
    w_a: f64,
    unit: LatencyUnit,
    seed: u64,
) -> Result<usize> {
    let records = sampling_label(d, pool, rate, wl_params, unit, seed)?;
    Ok(score_vector(&records, w_a)?.argmax())
}

// ---------------------------------------------------------------------------
// Evaluation harness
// ---------------------------------------------------------------------------

pub const ACCURACY_EPSILONS: [f64; 3] = [0.1, 0.15, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: String,
    pub w_a: f64,
    pub mean_d_error: f64,
    /// D-error per test dataset, in test-corpus order.
    pub d_errors: Vec<f64>,
    /// accuracy at each epsilon in [`ACCURACY_EPSILONS`]
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<StrategyOutcome>,
}

impl EvalReport {
    pub fn row(&self, strategy: &str, w_a: f64) -> Option<&StrategyOutcome> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && (r.w_a - w_a).abs() < 1e-9)
    }
}

/// Everything the harness needs, prepared once by the caller.
pub struct EvalContext<'a> {
    pub pool: &'a [EstimatorSpec],
    pub feature_cfg: &'a FeatureConfig,
    pub train_corpus: &'a [Dataset],
    pub train_labels: &'a BTreeMap<String, Vec<LabelRecord>>,
    pub test_corpus: &'a [Dataset],
    /// Ground-truth labels of the test corpus.
    pub test_labels: &'a BTreeMap<String, Vec<LabelRecord>>,
    /// Trained encoder per w_a decile key (see [`wa_key`]).
    pub encoders: &'a BTreeMap<u32, (EncoderConfig, EncoderParams)>,
    pub wl_params: WorkloadParams,
    pub unit: LatencyUnit,
    /// Training budget reused for the MLP baseline.
    pub dml_cfg: DmlConfig,
    pub enc_cfg: EncoderConfig,
    pub seed: u64,
}

/// Decile key for the encoder store: w_a 0.7 -> 7.
pub fn wa_key(w_a: f64) -> u32 {
    (w_a * 10.0).round() as u32
}

/// The trained key closest to the requested weight.
pub fn nearest_wa_key(available: impl Iterator<Item = u32>, w_a: f64) -> Option<u32> {
    available.min_by(|&a, &b| {
        let da = (a as f64 / 10.0 - w_a).abs();
        let db = (b as f64 / 10.0 - w_a).abs();
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    })
}

fn true_score(records: &[LabelRecord], w_a: f64) -> Result<ScoreVector> {
    score_vector(records, w_a)
}

/// Run every strategy over the test corpus for each weight in the grid.
pub fn evaluate(
    ctx: &EvalContext,
    strategies: &[Strategy],
    wa_grid: &[f64],
) -> Result<EvalReport> {
    let test_graphs: Vec<FeatureGraph> = ctx
        .test_corpus
        .iter()
        .map(|d| build_feature_graph(d, ctx.feature_cfg))
        .collect::<Result<_>>()?;
    let train_graphs: Vec<FeatureGraph> = ctx
        .train_corpus
        .iter()
        .map(|d| build_feature_graph(d, ctx.feature_cfg))
        .collect::<Result<_>>()?;
    let n_max = ctx.feature_cfg.n_max_tables;
    let train_flats: Vec<Vec<f64>> = train_graphs
        .iter()
        .map(|g| flatten_padded(g, n_max))
        .collect();
    let test_flats: Vec<Vec<f64>> = test_graphs
        .iter()
        .map(|g| flatten_padded(g, n_max))
        .collect();
    let train_records: Vec<Vec<LabelRecord>> = ctx
        .train_corpus
        .iter()
        .map(|d| {
            ctx.train_labels
                .get(&d.id)
                .cloned()
                .ok_or_else(|| Error::Insufficient {
                    context: "evaluate train labels",
                    needed: 1,
                    got: 0,
                })
        })
        .collect::<Result<_>>()?;

    // The sampling baseline's label pass is weight-independent; run it once
    // per test dataset and reuse across the grid.
    let mut sampling_cache: BTreeMap<String, Vec<LabelRecord>> = BTreeMap::new();
    if let Some(Strategy::Sampling { rate }) = strategies
        .iter()
        .find(|s| matches!(s, Strategy::Sampling { .. }))
    {
        for d in ctx.test_corpus {
            let records = sampling_label(
                d,
                ctx.pool,
                *rate,
                &ctx.wl_params,
                ctx.unit,
                ctx.seed ^ fnv1a(&d.id),
            )?;
            sampling_cache.insert(d.id.clone(), records);
        }
    }

    let mut report = EvalReport::default();
    for &wa in wa_grid {
        let truth: Vec<ScoreVector> = ctx
            .test_corpus
            .iter()
            .map(|d| true_score(&ctx.test_labels[&d.id], wa))
            .collect::<Result<_>>()?;

        for strategy in strategies {
            let chosen: Vec<usize> = match strategy {
                Strategy::Advisor { k } => {
                    let key = nearest_wa_key(ctx.encoders.keys().copied(), wa).ok_or(
                        Error::Insufficient {
                            context: "evaluate trained encoders",
                            needed: 1,
                            got: 0,
                        },
                    )?;
                    let (enc_cfg, params) = &ctx.encoders[&key];
                    let rcs = build_rcs(
                        ctx.train_corpus,
                        ctx.train_labels,
                        *enc_cfg,
                        params.clone(),
                        ctx.feature_cfg.clone(),
                        key as f64 / 10.0,
                    )?;
                    ctx.test_corpus
                        .iter()
                        .map(|d| recommend(d, &rcs, *k, wa).map(|r| r.chosen_index))
                        .collect::<Result<_>>()?
                }
                Strategy::Mlp => {
                    let classes: Vec<usize> = ctx
                        .train_corpus
                        .iter()
                        .map(|d| true_score(&ctx.train_labels[&d.id], wa).map(|s| s.argmax()))
                        .collect::<Result<_>>()?;
                    let model = train_mlp_selector(
                        &train_graphs,
                        &classes,
                        ctx.pool.len(),
                        &ctx.enc_cfg,
                        &ctx.dml_cfg,
                    )?;
                    test_graphs
                        .iter()
                        .map(|g| model.select(g))
                        .collect::<Result<_>>()?
                }
                Strategy::Rule => ctx
                    .test_corpus
                    .iter()
                    .map(|d| {
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(ctx.seed ^ fnv1a(&d.id) ^ wa_key(wa) as u64);
                        rule_select(d, ctx.pool, &mut rng)
                    })
                    .collect::<Result<_>>()?,
                Strategy::RawKnn { k } => test_flats
                    .iter()
                    .map(|f| rawknn_select(&train_flats, &train_records, f, *k, wa))
                    .collect::<Result<_>>()?,
                Strategy::Sampling { .. } => ctx
                    .test_corpus
                    .iter()
                    .map(|d| Ok(score_vector(&sampling_cache[&d.id], wa)?.argmax()))
                    .collect::<Result<_>>()?,
                Strategy::Oracle => truth.iter().map(|t| t.argmax()).collect(),
            };

            let d_errors: Vec<f64> = chosen
                .iter()
                .zip(&truth)
                .map(|(&c, t)| d_error(t, c))
                .collect();
            let mean = d_errors.iter().sum::<f64>() / d_errors.len().max(1) as f64;
            let accuracy = ACCURACY_EPSILONS
                .iter()
                .map(|&eps| {
                    d_errors.iter().filter(|&&d| d <= eps).count() as f64
                        / d_errors.len().max(1) as f64
                })
                .collect();
            report.rows.push(StrategyOutcome {
                strategy: strategy.name(),
                w_a: wa,
                mean_d_error: mean,
                d_errors,
                accuracy,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::default_pool;
    use crate::featurizer::fit_normalization;
    use crate::testkit;

    #[test]
    fn rule_respects_table_count_and_is_seeded() {
        let pool = default_pool();
        let corpus = testkit::small_corpus(4, 71);
        let single = corpus.iter().find(|d| d.tables.len() == 1).unwrap();
        let multi = corpus.iter().find(|d| d.tables.len() > 1).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let i = rule_select(single, &pool, &mut rng).unwrap();
            assert_eq!(pool[i].family, Family::DataDriven);
            let j = rule_select(multi, &pool, &mut rng).unwrap();
            assert_eq!(pool[j].family, Family::QueryDriven);
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            rule_select(single, &pool, &mut r1).unwrap(),
            rule_select(single, &pool, &mut r2).unwrap()
        );
    }

    #[test]
    fn rule_errors_without_required_family() {
        let pool = vec![EstimatorSpec::new("hist-avi", Family::DataDriven)];
        let corpus = testkit::small_corpus(2, 72);
        let multi = corpus.iter().find(|d| d.tables.len() > 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(rule_select(multi, &pool, &mut rng).is_err());
    }

    #[test]
    fn rawknn_self_retrieval_and_bad_k() {
        let corpus = testkit::small_corpus(4, 73);
        let labels = testkit::label_corpus(&corpus, 73);
        let fc = fit_normalization(&corpus).unwrap();
        let flats: Vec<Vec<f64>> = corpus
            .iter()
            .map(|d| flatten_padded(&build_feature_graph(d, &fc).unwrap(), fc.n_max_tables))
            .collect();
        let records: Vec<Vec<LabelRecord>> =
            corpus.iter().map(|d| labels[&d.id].clone()).collect();
        let own = score_vector(&records[1], 1.0).unwrap().argmax();
        let got = rawknn_select(&flats, &records, &flats[1], 1, 1.0).unwrap();
        assert_eq!(got, own);
        assert!(rawknn_select(&flats, &records, &flats[1], 9, 1.0).is_err());
        assert!(rawknn_select(&flats, &records, &flats[1], 0, 1.0).is_err());
    }

    #[test]
    fn rawknn_matches_advisor_with_identity_embeddings() {
        // when the "encoder" is the identity on flattened features, the
        // advisor KNN and the raw-feature KNN are the same predictor
        use crate::advisor::{recommend_from_embedding, Rcs, RcsEntry};
        use crate::encoder::Embedding;
        let corpus = testkit::small_corpus(5, 74);
        let labels = testkit::label_corpus(&corpus, 74);
        let fc = fit_normalization(&corpus).unwrap();
        let flats: Vec<Vec<f64>> = corpus
            .iter()
            .map(|d| flatten_padded(&build_feature_graph(d, &fc).unwrap(), fc.n_max_tables))
            .collect();
        let records: Vec<Vec<LabelRecord>> =
            corpus.iter().map(|d| labels[&d.id].clone()).collect();
        let entries = corpus
            .iter()
            .zip(&flats)
            .zip(&records)
            .map(|((d, f), r)| RcsEntry {
                dataset_id: d.id.clone(),
                embedding: Embedding(f.clone()),
                records: r.clone(),
                graph: build_feature_graph(d, &fc).unwrap(),
                raw_flat: f.clone(),
            })
            .collect();
        let rcs = Rcs {
            entries,
            w_a: 1.0,
            encoder_config: EncoderConfig::default(),
            encoder: init_params(
                &EncoderConfig {
                    n_layers: 1,
                    hidden: 2,
                    embed_dim: 2,
                    init_seed: 0,
                },
                fc.vertex_dim(),
            ),
            feature_config: fc,
        };
        for (i, f) in flats.iter().enumerate() {
            for k in 1..=3 {
                let a = recommend_from_embedding(&Embedding(f.clone()), &rcs, k, 0.7)
                    .unwrap()
                    .chosen_index;
                let b = rawknn_select(&flats, &records, f, k, 0.7).unwrap();
                assert_eq!(a, b, "dataset {i} k {k}");
            }
        }
    }

    #[test]
    fn full_rate_sampling_matches_full_labeling() {
        let corpus = testkit::small_corpus(2, 75);
        let d = &corpus[1];
        let pool = default_pool();
        let wl = testkit::small_workload_params();
        let seed = 99;
        let via_sampling =
            sampling_select(d, &pool, 1.0, &wl, 1.0, LatencyUnit::Cost, seed).unwrap();
        // same workload seed against the full dataset
        let sample = sample_dataset(d, 1.0, seed).unwrap();
        assert_eq!(sample.tables[0].row_count(), d.tables[0].row_count());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x776c);
        let w = gen_workload(&sample, &wl, &mut rng).unwrap();
        let out = label_dataset(&sample, &pool, &w, LatencyUnit::Cost).unwrap();
        let direct = score_vector(&out.records, 1.0).unwrap().argmax();
        assert_eq!(via_sampling, direct);
    }

    #[test]
    fn low_rate_sampling_returns_valid_member_reproducibly() {
        let corpus = testkit::small_corpus(2, 76);
        let pool = default_pool();
        let wl = testkit::small_workload_params();
        let a = sampling_select(&corpus[0], &pool, 0.3, &wl, 0.5, LatencyUnit::Cost, 5).unwrap();
        let b = sampling_select(&corpus[0], &pool, 0.3, &wl, 0.5, LatencyUnit::Cost, 5).unwrap();
        assert_eq!(a, b);
        assert!(a < pool.len());
    }

    #[test]
    fn sampled_dataset_repairs_referential_integrity() {
        let corpus = testkit::small_corpus(4, 77);
        let multi = corpus.iter().find(|d| d.tables.len() > 1).unwrap();
        let sample = sample_dataset(multi, 0.4, 11).unwrap();
        assert!(crate::corpus::validate(&sample).is_empty());
    }

    #[test]
    fn mlp_single_class_always_predicts_it() {
        let corpus = testkit::small_corpus(6, 78);
        let fc = fit_normalization(&corpus).unwrap();
        let graphs: Vec<FeatureGraph> = corpus
            .iter()
            .map(|d| build_feature_graph(d, &fc).unwrap())
            .collect();
        let classes = vec![2usize; graphs.len()];
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            hidden: 8,
            embed_dim: 4,
            init_seed: 7,
        };
        let budget = DmlConfig {
            epochs: 15,
            batch_size: 4,
            lr: 5e-3,
            ..DmlConfig::default()
        };
        let model = train_mlp_selector(&graphs, &classes, 5, &enc_cfg, &budget).unwrap();
        for g in &graphs {
            assert_eq!(model.select(g).unwrap(), 2);
        }
    }

    #[test]
    fn mlp_is_deterministic() {
        let corpus = testkit::small_corpus(4, 79);
        let fc = fit_normalization(&corpus).unwrap();
        let graphs: Vec<FeatureGraph> = corpus
            .iter()
            .map(|d| build_feature_graph(d, &fc).unwrap())
            .collect();
        let classes = vec![0, 1, 0, 1];
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            hidden: 8,
            embed_dim: 4,
            init_seed: 8,
        };
        let budget = DmlConfig {
            epochs: 5,
            batch_size: 2,
            ..DmlConfig::default()
        };
        let m1 = train_mlp_selector(&graphs, &classes, 2, &enc_cfg, &budget).unwrap();
        let m2 = train_mlp_selector(&graphs, &classes, 2, &enc_cfg, &budget).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn oracle_dominates_and_accuracy_is_monotone() {
        let corpus = testkit::small_corpus(6, 80);
        let labels = testkit::label_corpus(&corpus, 80);
        let fc = fit_normalization(&corpus).unwrap();
        let (graphs, svs) = testkit::graphs_and_labels(&corpus, &labels, &fc, 1.0);
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            hidden: 8,
            embed_dim: 4,
            init_seed: 9,
        };
        let dml_cfg = DmlConfig {
            epochs: 4,
            batch_size: 4,
            ..DmlConfig::default()
        };
        let (params, _) = crate::dml::train_encoder(&graphs, &svs, &dml_cfg, &enc_cfg).unwrap();
        let mut encoders = BTreeMap::new();
        encoders.insert(10u32, (enc_cfg, params));
        let (train, test) = corpus.split_at(4);
        let ctx = EvalContext {
            pool: &default_pool(),
            feature_cfg: &fc,
            train_corpus: train,
            train_labels: &labels,
            test_corpus: test,
            test_labels: &labels,
            encoders: &encoders,
            wl_params: testkit::small_workload_params(),
            unit: LatencyUnit::Cost,
            dml_cfg,
            enc_cfg,
            seed: 80,
        };
        let report = evaluate(
            &ctx,
            &[
                Strategy::Oracle,
                Strategy::Advisor { k: 2 },
                Strategy::Rule,
                Strategy::RawKnn { k: 2 },
            ],
            &[1.0, 0.5],
        )
        .unwrap();
        for wa in [1.0, 0.5] {
            let oracle = report.row("oracle", wa).unwrap();
            assert_eq!(oracle.mean_d_error, 0.0);
            assert!(oracle.accuracy.iter().all(|&a| a == 1.0));
            for row in report.rows.iter().filter(|r| (r.w_a - wa).abs() < 1e-9) {
                assert!(row.accuracy[0] <= row.accuracy[1] + 1e-12);
                assert!(row.accuracy[1] <= row.accuracy[2] + 1e-12);
                assert!(row.mean_d_error >= 0.0);
            }
        }
    }

    #[test]
    fn nearest_key_picks_closest() {
        let keys = [0u32, 5, 10];
        assert_eq!(nearest_wa_key(keys.iter().copied(), 0.9), Some(10));
        assert_eq!(nearest_wa_key(keys.iter().copied(), 0.4), Some(5));
        assert_eq!(nearest_wa_key(keys.iter().copied(), 0.0), Some(0));
    }
}
