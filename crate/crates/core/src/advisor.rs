//! Recommendation: embed the corpus into a candidate set, pick estimators
//! for new datasets by KNN over embeddings, and detect feature-space drift.
//!
//! Drift distances intentionally use the *unnormalized* flattened feature
//! graphs: clamped normalized features saturate for outliers, which would
//! mask exactly the datasets drift detection exists to catch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelRecord, LatencyUnit};
use crate::dml::{self, DmlConfig};
use crate::encoder::{encode, EncoderConfig, EncoderParams, Embedding};
use crate::error::{Error, Result};
use crate::estimators::{self, score_vector, EstimatorSpec, ScoreVector};
use crate::featurizer::{
    build_feature_graph, build_raw_feature_graph, flatten_padded, FeatureConfig, FeatureGraph,
};
use crate::linalg::euclidean;
use crate::workload::{gen_workload, WorkloadParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsEntry {
    pub dataset_id: String,
    pub embedding: Embedding,
    /// Raw label records; score vectors are derived at query time for the
    /// requested weight.
    pub records: Vec<LabelRecord>,
    /// Normalized feature graph, kept for fine-tuning and re-embedding.
    pub graph: FeatureGraph,
    /// Unnormalized flattened features for drift distances.
    pub raw_flat: Vec<f64>,
}

/// Recommendation candidate set: the embedded, labeled corpus plus the
/// encoder that produced the embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rcs {
    pub entries: Vec<RcsEntry>,
    /// Accuracy weight the stored encoder was trained for.
    pub w_a: f64,
    pub encoder_config: EncoderConfig,
    pub encoder: EncoderParams,
    pub feature_config: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chosen: String,
    pub chosen_index: usize,
    pub averaged_scores: ScoreVector,
    pub neighbor_ids: Vec<String>,
    pub k: usize,
    pub w_a: f64,
}

/// Embed every corpus dataset with the trained encoder and attach its raw
/// label records.
pub fn build_rcs(
    corpus: &[Dataset],
    labels: &BTreeMap<String, Vec<LabelRecord>>,
    encoder_config: EncoderConfig,
    encoder: EncoderParams,
    feature_config: FeatureConfig,
    w_a: f64,
) -> Result<Rcs> {
    let mut entries = Vec::with_capacity(corpus.len());
    for d in corpus {
        let records = labels
            .get(&d.id)
            .ok_or_else(|| Error::Insufficient {
                context: "build_rcs labels for dataset",
                needed: 1,
                got: 0,
            })?
            .clone();
        if records.len() < 2 {
            return Err(Error::Insufficient {
                context: "build_rcs records per dataset",
                needed: 2,
                got: records.len(),
            });
        }
        let graph = build_feature_graph(d, &feature_config)?;
        let raw = build_raw_feature_graph(d, feature_config.m_max_cols, feature_config.n_max_tables)?;
        let raw_flat = flatten_padded(&raw, feature_config.n_max_tables);
        let embedding = encode(&graph, &encoder)?;
        entries.push(RcsEntry {
            dataset_id: d.id.clone(),
            embedding,
            records,
            graph,
            raw_flat,
        });
    }
    Ok(Rcs {
        entries,
        w_a,
        encoder_config,
        encoder,
        feature_config,
    })
}

/// Indices of the k nearest vectors (stable order: distance, then index).
fn k_nearest(query: &[f64], candidates: impl Iterator<Item = Vec<f64>>, k: usize) -> Vec<usize> {
    let mut dists: Vec<(f64, usize)> = candidates
        .enumerate()
        .map(|(i, c)| (euclidean(query, &c), i))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Average the k nearest neighbors' score vectors at `w_a` and return the
/// argmax estimator (ties break to the lowest pool index).
pub fn recommend(d: &Dataset, rcs: &Rcs, k: usize, w_a: f64) -> Result<Recommendation> {
    let graph = build_feature_graph(d, &rcs.feature_config)?;
    let embedding = encode(&graph, &rcs.encoder)?;
    recommend_from_embedding(&embedding, rcs, k, w_a)
}

pub fn recommend_from_embedding(
    embedding: &Embedding,
    rcs: &Rcs,
    k: usize,
    w_a: f64,
) -> Result<Recommendation> {
    if rcs.entries.is_empty() || k == 0 || k > rcs.entries.len() {
        return Err(Error::InvalidParam {
            name: "k",
            detail: format!("k={k} with {} candidates", rcs.entries.len()),
        });
    }
    let neighbors = k_nearest(
        &embedding.0,
        rcs.entries.iter().map(|e| e.embedding.0.clone()),
        k,
    );
    average_and_pick(rcs, &neighbors, k, w_a)
}

fn average_and_pick(rcs: &Rcs, neighbors: &[usize], k: usize, w_a: f64) -> Result<Recommendation> {
    let first = &rcs.entries[neighbors[0]].records;
    let ids: Vec<&str> = first.iter().map(|r| r.estimator_id.as_str()).collect();
    let mut avg = vec![0.0; first.len()];
    for &ni in neighbors {
        let entry = &rcs.entries[ni];
        let entry_ids: Vec<&str> = entry.records.iter().map(|r| r.estimator_id.as_str()).collect();
        if entry_ids != ids {
            return Err(Error::Format {
                what: "rcs records".into(),
                detail: format!(
                    "estimator ordering differs between '{}' and '{}'",
                    rcs.entries[neighbors[0]].dataset_id, entry.dataset_id
                ),
            });
        }
        let sv = score_vector(&entry.records, w_a)?;
        for (a, s) in avg.iter_mut().zip(&sv.0) {
            *a += s;
        }
    }
    for a in &mut avg {
        *a /= neighbors.len() as f64;
    }
    let averaged_scores = ScoreVector(avg);
    let chosen_index = averaged_scores.argmax();
    Ok(Recommendation {
        chosen: first[chosen_index].estimator_id.clone(),
        chosen_index,
        averaged_scores,
        neighbor_ids: neighbors
            .iter()
            .map(|&i| rcs.entries[i].dataset_id.clone())
            .collect(),
        k,
        w_a,
    })
}

fn nearest_rank_90(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

/// Drift threshold: the nearest-rank 90th percentile of each member's
/// leave-one-out nearest distance in raw feature space.
pub fn drift_threshold(rcs: &Rcs) -> Result<f64> {
    let n = rcs.entries.len();
    if n < 2 {
        return Err(Error::Insufficient {
            context: "drift_threshold members",
            needed: 2,
            got: n,
        });
    }
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(&rcs.entries[i].raw_flat, &rcs.entries[j].raw_flat))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(nearest_rank_90(loo))
}

/// A dataset drifts when its closest raw-feature distance to the candidate
/// set exceeds the threshold.
pub fn detect_drift(d: &Dataset, rcs: &Rcs, threshold: f64) -> Result<bool> {
    let raw = build_raw_feature_graph(
        d,
        rcs.feature_config.m_max_cols,
        rcs.feature_config.n_max_tables,
    )?;
    let flat = flatten_padded(&raw, rcs.feature_config.n_max_tables);
    let min = rcs
        .entries
        .iter()
        .map(|e| euclidean(&flat, &e.raw_flat))
        .fold(f64::INFINITY, f64::min);
    Ok(min > threshold)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Handle a drifted dataset: label it for real, append it to the candidate
/// set, fine-tune the encoder on the enlarged corpus, and re-embed
/// everything.
pub fn online_adapt(
    d: &Dataset,
    rcs: &mut Rcs,
    pool: &[EstimatorSpec],
    wl_params: &WorkloadParams,
    unit: LatencyUnit,
    dml_cfg: &DmlConfig,
) -> Result<()> {
    let mut rng =
        <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(fnv1a(&d.id) ^ dml_cfg.seed);
    let w = gen_workload(d, wl_params, &mut rng)?;
    let outcome = estimators::label_dataset(d, pool, &w, unit)?;
    if let Some(f) = outcome.failures.first() {
        return Err(Error::Training {
            id: f.estimator_id.clone(),
            detail: f.detail.clone(),
        });
    }
    let graph = build_feature_graph(d, &rcs.feature_config)?;
    let raw = build_raw_feature_graph(
        d,
        rcs.feature_config.m_max_cols,
        rcs.feature_config.n_max_tables,
    )?;
    let raw_flat = flatten_padded(&raw, rcs.feature_config.n_max_tables);
    let embedding = encode(&graph, &rcs.encoder)?;
    rcs.entries.push(RcsEntry {
        dataset_id: d.id.clone(),
        embedding,
        records: outcome.records,
        graph,
        raw_flat,
    });

    let graphs: Vec<FeatureGraph> = rcs.entries.iter().map(|e| e.graph.clone()).collect();
    let labels: Vec<ScoreVector> = rcs
        .entries
        .iter()
        .map(|e| score_vector(&e.records, rcs.w_a))
        .collect::<Result<_>>()?;
    dml::fit(&mut rcs.encoder, &graphs, &labels, dml_cfg)?;

    for entry in &mut rcs.entries {
        entry.embedding = encode(&entry.graph, &rcs.encoder)?;
    }
    Ok(())
}
