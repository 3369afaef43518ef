//! The candidate estimator pool and the labeling testbed.
//!
//! The reference pool ships five estimators with genuinely different
//! strength profiles:
//!
//! - `hist-avi` (data-driven): equi-depth histograms + attribute-value
//!   independence; near-exact on uniform independent data, cheap.
//! - `sample-eval` (data-driven): Bernoulli row sample evaluated exactly and
//!   scaled up; robust to correlation, expensive, noisy on selective queries.
//! - `chain-bayes` (data-driven): chain-factorized conditionals from
//!   adjacent-pair joint histograms; captures injected column correlation.
//! - `qd-linear` (query-driven): ridge regression on query features; the
//!   fastest at inference.
//! - `qd-mlp` (query-driven): small feed-forward network on the same
//!   features.
//!
//! Labeling measures per-estimator mean Q-error and mean inference latency
//! on a test workload, in wall-clock ms or deterministic cost units.

mod chain_bayes;
mod hist;
mod hist_avi;
mod query_driven;
mod sample_eval;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelRecord, LatencyUnit};
use crate::error::{Error, Result};
use crate::workload::{qerror, Query, Workload};

pub use query_driven::QueryFeaturizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DataDriven,
    QueryDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub id: String,
    pub family: Family,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl EstimatorSpec {
    pub fn new(id: &str, family: Family) -> Self {
        EstimatorSpec {
            id: id.into(),
            family,
            hyperparams: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparams.insert(key.into(), value);
        self
    }

    fn hp(&self, key: &str, default: f64) -> f64 {
        self.hyperparams.get(key).copied().unwrap_or(default)
    }
}

/// The reference pool, in canonical order. Score vectors and tie-breaking
/// follow this ordering.
pub fn default_pool() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::new("hist-avi", Family::DataDriven).with("buckets", 64.0),
        EstimatorSpec::new("sample-eval", Family::DataDriven).with("rate", 0.2),
        EstimatorSpec::new("chain-bayes", Family::DataDriven).with("buckets", 24.0),
        EstimatorSpec::new("qd-linear", Family::QueryDriven).with("lambda", 1.0),
        EstimatorSpec::new("qd-mlp", Family::QueryDriven),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    HistAvi(hist_avi::HistAviModel),
    SampleEval(sample_eval::SampleEvalModel),
    ChainBayes(chain_bayes::ChainBayesModel),
    QdLinear(query_driven::QdLinearModel),
    QdMlp(query_driven::QdMlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEstimator {
    pub spec: EstimatorSpec,
    pub model: TrainedModel,
    /// Training wall-clock, seconds.
    pub train_time: f64,
}

impl TrainedEstimator {
    pub fn to_blob(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::format("trained estimator", e.to_string()))
    }

    pub fn from_blob(blob: &[u8]) -> Result<Self> {
        serde_json::from_slice(blob)
            .map_err(|e| Error::format("trained estimator", e.to_string()))
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

/// Train one pool member. Data-driven estimators consume only the dataset;
/// query-driven ones consume only `w.train` with true cardinalities.
pub fn train_estimator(
    spec: &EstimatorSpec,
    d: &Dataset,
    w: &Workload,
) -> Result<TrainedEstimator> {
    let started = Instant::now();
    let seed = spec
        .hyperparams
        .get("seed")
        .map(|&s| s as u64)
        .unwrap_or_else(|| fnv1a(&spec.id) ^ fnv1a(&d.id));
    let model = match spec.id.as_str() {
        "hist-avi" => TrainedModel::HistAvi(hist_avi::train(d, spec.hp("buckets", 64.0) as usize)),
        "sample-eval" => {
            TrainedModel::SampleEval(sample_eval::train(d, spec.hp("rate", 0.2), seed))
        }
        "chain-bayes" => {
            TrainedModel::ChainBayes(chain_bayes::train(d, spec.hp("buckets", 24.0) as usize))
        }
        "qd-linear" => TrainedModel::QdLinear(query_driven::train_linear(
            d,
            &w.train,
            spec.hp("lambda", 1.0),
        )?),
        "qd-mlp" => {
            let hp = query_driven::MlpHyper {
                hidden1: spec.hp("hidden1", 64.0) as usize,
                hidden2: spec.hp("hidden2", 32.0) as usize,
                epochs: spec.hp("epochs", 60.0) as usize,
                lr: spec.hp("lr", 5e-3),
                seed,
            };
            TrainedModel::QdMlp(query_driven::train_mlp(d, &w.train, &hp)?)
        }
        other => {
            return Err(Error::UnknownEstimator { id: other.into() });
        }
    };
    Ok(TrainedEstimator {
        spec: spec.clone(),
        model,
        train_time: started.elapsed().as_secs_f64(),
    })
}

/// Positive cardinality estimate (floored at 1.0) plus the deterministic
/// cost-unit count for this query.
pub fn estimate(m: &TrainedEstimator, q: &Query) -> Result<(f64, u64)> {
    match &m.model {
        TrainedModel::HistAvi(x) => hist_avi::estimate(x, q),
        TrainedModel::SampleEval(x) => sample_eval::estimate(x, q),
        TrainedModel::ChainBayes(x) => chain_bayes::estimate(x, q),
        TrainedModel::QdLinear(x) => query_driven::estimate_linear(x, q),
        TrainedModel::QdMlp(x) => query_driven::estimate_mlp(x, q),
    }
}

/// Estimate with latency in the requested unit: cost units are the
/// deterministic lookup count, ms is measured wall-clock.
pub fn estimate_with_latency(
    m: &TrainedEstimator,
    q: &Query,
    unit: LatencyUnit,
) -> Result<(f64, f64)> {
    match unit {
        LatencyUnit::Cost => {
            let (card, cost) = estimate(m, q)?;
            Ok((card, cost as f64))
        }
        LatencyUnit::Ms => {
            let started = Instant::now();
            let (card, _) = estimate(m, q)?;
            Ok((card, started.elapsed().as_secs_f64() * 1e3))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFailure {
    pub estimator_id: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    /// One record per successfully trained estimator, in pool order.
    pub records: Vec<LabelRecord>,
    /// Training failures, reported rather than silently skipped.
    pub failures: Vec<LabelFailure>,
}

/// Train every pool member on `d` and measure mean Q-error and mean latency
/// over the test queries.
pub fn label_dataset(
    d: &Dataset,
    pool: &[EstimatorSpec],
    w: &Workload,
    unit: LatencyUnit,
) -> Result<LabelOutcome> {
    if w.test.is_empty() {
        return Err(Error::Insufficient {
            context: "label_dataset test queries",
            needed: 1,
            got: 0,
        });
    }
    if w.test.iter().any(|q| q.true_card.is_none()) {
        return Err(Error::SchemaMismatch {
            detail: "test queries must carry true_card before labeling".into(),
        });
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for spec in pool {
        let trained = match train_estimator(spec, d, w) {
            Ok(t) => t,
            Err(e) => {
                failures.push(LabelFailure {
                    estimator_id: spec.id.clone(),
                    detail: e.to_string(),
                });
                continue;
            }
        };
        let mut qerr_sum = 0.0;
        let mut lat_sum = 0.0;
        for q in &w.test {
            let (card, lat) = estimate_with_latency(&trained, q, unit)?;
            qerr_sum += qerror(card, q.true_card.unwrap());
            lat_sum += lat;
        }
        let n = w.test.len() as f64;
        records.push(LabelRecord {
            dataset_id: d.id.clone(),
            estimator_id: spec.id.clone(),
            qerr_mean: qerr_sum / n,
            latency_mean: lat_sum / n,
            latency_unit: unit,
        });
    }
    Ok(LabelOutcome { records, failures })
}

// ---------------------------------------------------------------------------
// Score normalization
// ---------------------------------------------------------------------------

/// Per-estimator normalized performance scores for one dataset at a given
/// accuracy weight. Entries are in [0, 1] and aligned with pool order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the best score; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Combine normalized accuracy and efficiency scores with weights
/// `(w_a, 1 - w_a)`. A dimension where all estimators tie normalizes to 1.
pub fn score_vector(records: &[LabelRecord], w_a: f64) -> Result<ScoreVector> {
    if records.len() < 2 {
        return Err(Error::Insufficient {
            context: "score_vector records",
            needed: 2,
            got: records.len(),
        });
    }
    if !(0.0..=1.0).contains(&w_a) {
        return Err(Error::InvalidParam {
            name: "w_a",
            detail: format!("{w_a} outside [0, 1]"),
        });
    }
    let w_e = 1.0 - w_a;
    let (qmin, qmax) = min_max(records.iter().map(|r| r.qerr_mean));
    let (tmin, tmax) = min_max(records.iter().map(|r| r.latency_mean));
    let scores = records
        .iter()
        .map(|r| {
            let s_a = if qmax > qmin {
                (qmax - r.qerr_mean) / (qmax - qmin)
            } else {
                1.0
            };
            let s_e = if tmax > tmin {
                (tmax - r.latency_mean) / (tmax - tmin)
            } else {
                1.0
            };
            w_a * s_a + w_e * s_e
        })
        .collect();
    Ok(ScoreVector(scores))
}

/// Relative gap between the optimal score and the chosen estimator's score.
pub fn d_error(scores: &ScoreVector, chosen: usize) -> f64 {
    let opt = scores.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = scores.0[chosen];
    (opt - s) / s.max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_multi_table, GenParams};
    use crate::workload::{gen_workload, WorkloadParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, q: f64, t: f64) -> LabelRecord {
        LabelRecord {
            dataset_id: "d".into(),
            estimator_id: id.into(),
            qerr_mean: q,
            latency_mean: t,
            latency_unit: LatencyUnit::Cost,
        }
    }

    #[test]
    fn pool_has_expected_families() {
        let pool = default_pool();
        assert_eq!(pool.len(), 5);
        let fams: Vec<Family> = pool.iter().map(|s| s.family).collect();
        assert_eq!(
            fams,
            vec![
                Family::DataDriven,
                Family::DataDriven,
                Family::DataDriven,
                Family::QueryDriven,
                Family::QueryDriven
            ]
        );
    }

    #[test]
    fn unknown_estimator_is_an_error() {
        let params = GenParams {
            n_tables: 1,
            rows_range: (50, 50),
            seed: 1,
            ..GenParams::default()
        };
        let d = gen_multi_table("u", &params, &mut params.rng_for(0)).unwrap();
        let w = gen_workload(
            &d,
            &WorkloadParams {
                n_train: 5,
                n_test: 5,
                pred_prob: 0.5,
            },
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let bogus = EstimatorSpec::new("nope", Family::DataDriven);
        assert!(matches!(
            train_estimator(&bogus, &d, &w),
            Err(Error::UnknownEstimator { .. })
        ));
    }

    #[test]
    fn scores_from_eq3_hand_computation() {
        // Q-error means {2, 6, 10} at w_a = 1 -> (1.0, 0.5, 0.0)
        let records = vec![rec("a", 2.0, 1.0), rec("b", 6.0, 1.0), rec("c", 10.0, 1.0)];
        let s = score_vector(&records, 1.0).unwrap();
        assert_eq!(s.0, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn degenerate_dimension_scores_one() {
        let records = vec![rec("a", 2.0, 7.0), rec("b", 5.0, 7.0)];
        let s = score_vector(&records, 0.0).unwrap();
        assert_eq!(s.0, vec![1.0, 1.0]);
    }

    #[test]
    fn best_on_both_dimensions_scores_one() {
        let records = vec![rec("a", 2.0, 1.0), rec("b", 5.0, 9.0)];
        let s = score_vector(&records, 0.5).unwrap();
        assert_eq!(s.0[0], 1.0);
        assert_eq!(s.0[1], 0.0);
    }

    #[test]
    fn score_vector_requires_two_records() {
        let records = vec![rec("a", 2.0, 1.0)];
        assert!(score_vector(&records, 0.5).is_err());
    }

    #[test]
    fn scores_invariant_under_common_rescaling() {
        let records = vec![rec("a", 2.0, 3.0), rec("b", 5.0, 2.0), rec("c", 9.0, 8.0)];
        let s1 = score_vector(&records, 0.7).unwrap();
        let scaled: Vec<LabelRecord> = records
            .iter()
            .map(|r| rec(&r.estimator_id, r.qerr_mean * 37.5, r.latency_mean))
            .collect();
        let s2 = score_vector(&scaled, 0.7).unwrap();
        for (a, b) in s1.0.iter().zip(&s2.0) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s1.argmax(), s2.argmax());
    }

    #[test]
    fn extremes_hit_zero_and_one_for_distinct_values() {
        let records = vec![rec("a", 2.0, 3.0), rec("b", 5.0, 2.0), rec("c", 9.0, 8.0)];
        for &wa in &[0.0, 1.0] {
            let s = score_vector(&records, wa).unwrap();
            assert!(s.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(s.0.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(s.0.iter().filter(|&&v| v == 0.0).count(), 1);
        }
    }

    #[test]
    fn d_error_basics() {
        let s = ScoreVector(vec![1.0, 0.8, 0.3]);
        assert_eq!(d_error(&s, s.argmax()), 0.0);
        assert!((d_error(&s, 1) - 0.25).abs() < 1e-12);
        // epsilon guard caps the blowup at 1e6
        let z = ScoreVector(vec![1.0, 0.0]);
        assert_eq!(d_error(&z, 1), 1e6);
    }

    #[test]
    fn argmax_tie_breaks_low_index() {
        let s = ScoreVector(vec![0.6, 0.6, 0.2]);
        assert_eq!(s.argmax(), 0);
    }

    fn labeled_setup(seed: u64, corr: (f64, f64)) -> (Dataset, Workload) {
        let params = GenParams {
            n_tables: 1,
            rows_range: (500, 500),
            cols_range: (2, 2),
            domain_size: 50,
            corr_range: corr,
            skew_range: (0.0, 0.2),
            seed,
            ..GenParams::default()
        };
        let d = gen_multi_table("lab", &params, &mut params.rng_for(0)).unwrap();
        let w = gen_workload(
            &d,
            &WorkloadParams {
                n_train: 60,
                n_test: 30,
                pred_prob: 0.8,
            },
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        (d, w)
    }

    #[test]
    fn single_member_pool_gives_one_record() {
        let (d, w) = labeled_setup(3, (0.0, 0.1));
        let pool = vec![default_pool()[0].clone()];
        let out = label_dataset(&d, &pool, &w, LatencyUnit::Cost).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.failures.is_empty());
        assert!(out.records[0].qerr_mean >= 1.0);
    }

    #[test]
    fn duplicate_estimator_labels_identically_in_cost_mode() {
        let (d, w) = labeled_setup(4, (0.0, 0.1));
        let spec = default_pool()[0].clone();
        let pool = vec![spec.clone(), spec];
        let out = label_dataset(&d, &pool, &w, LatencyUnit::Cost).unwrap();
        assert_eq!(out.records[0].qerr_mean, out.records[1].qerr_mean);
        assert_eq!(out.records[0].latency_mean, out.records[1].latency_mean);
    }

    #[test]
    fn exact_sampler_beats_avi_on_correlated_data() {
        let (d, w) = labeled_setup(5, (0.85, 0.95));
        let pool = vec![
            EstimatorSpec::new("sample-eval", Family::DataDriven).with("rate", 1.0),
            EstimatorSpec::new("hist-avi", Family::DataDriven).with("buckets", 64.0),
        ];
        let out = label_dataset(&d, &pool, &w, LatencyUnit::Cost).unwrap();
        assert_eq!(out.records[0].qerr_mean, 1.0);
        assert!(out.records[1].qerr_mean > 1.0);
    }

    #[test]
    fn training_failure_is_reported_not_skipped() {
        let (d, mut w) = labeled_setup(6, (0.0, 0.1));
        w.train.clear(); // query-driven members cannot train
        let out = label_dataset(&d, &default_pool(), &w, LatencyUnit::Cost).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.detail.contains("training")));
    }

    #[test]
    fn trained_estimator_blob_roundtrip() {
        let (d, w) = labeled_setup(7, (0.0, 0.1));
        let t = train_estimator(&default_pool()[0], &d, &w).unwrap();
        let blob = t.to_blob().unwrap();
        let t2 = TrainedEstimator::from_blob(&blob).unwrap();
        assert_eq!(t.spec, t2.spec);
        assert_eq!(t.model, t2.model);
        let q = &w.test[0];
        assert_eq!(estimate(&t, q).unwrap(), estimate(&t2, q).unwrap());
    }
}
