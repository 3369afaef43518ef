//! Shared fixtures for unit tests: a small labeled corpus pushed through
//! the whole pipeline (generate, label, featurize, train, embed).

use std::collections::BTreeMap;

use crate::advisor::{build_rcs, Rcs};
use crate::corpus::{Dataset, LabelRecord, LatencyUnit};
use crate::datagen::{gen_multi_table, GenParams};
use crate::dml::{train_encoder, DmlConfig};
use crate::encoder::EncoderConfig;
use crate::estimators::{default_pool, label_dataset, score_vector, ScoreVector};
use crate::featurizer::{build_feature_graph, fit_normalization, FeatureConfig, FeatureGraph};
use crate::workload::{gen_workload, WorkloadParams};

pub(crate) fn small_workload_params() -> WorkloadParams {
    WorkloadParams {
        n_train: 40,
        n_test: 20,
        pred_prob: 0.7,
    }
}

/// Mixed corpus: alternating low/high column correlation, one or two tables.
pub(crate) fn small_corpus(n: usize, seed: u64) -> Vec<Dataset> {
    (0..n)
        .map(|i| {
            let corr = if i % 2 == 0 { (0.0, 0.1) } else { (0.8, 0.95) };
            let params = GenParams {
                n_tables: 1 + (i % 2),
                n_main_tables: 1,
                rows_range: (150, 250),
                cols_range: (2, 2),
                domain_size: 200,
                corr_range: corr,
                skew_range: (0.0, 0.5),
                seed,
                ..GenParams::default()
            };
            gen_multi_table(&format!("tk{i:03}"), &params, &mut params.rng_for(i as u64)).unwrap()
        })
        .collect()
}

pub(crate) fn label_corpus(corpus: &[Dataset], seed: u64) -> BTreeMap<String, Vec<LabelRecord>> {
    let pool = default_pool();
    let wl = small_workload_params();
    corpus
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng =
                <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ i as u64);
            let w = gen_workload(d, &wl, &mut rng).unwrap();
            let out = label_dataset(d, &pool, &w, LatencyUnit::Cost).unwrap();
            assert!(out.failures.is_empty(), "{:?}", out.failures);
            (d.id.clone(), out.records)
        })
        .collect()
}

pub(crate) fn graphs_and_labels(
    corpus: &[Dataset],
    labels: &BTreeMap<String, Vec<LabelRecord>>,
    cfg: &FeatureConfig,
    w_a: f64,
) -> (Vec<FeatureGraph>, Vec<ScoreVector>) {
    let graphs = corpus
        .iter()
        .map(|d| build_feature_graph(d, cfg).unwrap())
        .collect();
    let svs = corpus
        .iter()
        .map(|d| score_vector(&labels[&d.id], w_a).unwrap())
        .collect();
    (graphs, svs)
}

/// Full mini pipeline at w_a = 1.0 with a briefly trained encoder.
pub(crate) fn small_rcs(n: usize, seed: u64) -> (Vec<Dataset>, Rcs) {
    let corpus = small_corpus(n, seed);
    let labels = label_corpus(&corpus, seed);
    let feature_cfg = fit_normalization(&corpus).unwrap();
    let (graphs, svs) = graphs_and_labels(&corpus, &labels, &feature_cfg, 1.0);
    let enc_cfg = EncoderConfig {
        n_layers: 2,
        hidden: 12,
        embed_dim: 6,
        init_seed: seed,
    };
    let dml_cfg = DmlConfig {
        epochs: 6,
        batch_size: 4,
        lr: 1e-3,
        seed,
        ..DmlConfig::default()
    };
    let (params, _) = train_encoder(&graphs, &svs, &dml_cfg, &enc_cfg).unwrap();
    let rcs = build_rcs(&corpus, &labels, enc_cfg, params, feature_cfg, 1.0).unwrap();
    (corpus, rcs)
}

/// Same shape as the small corpus but a domain two orders of magnitude
/// larger, so its raw features sit far outside the training range.
pub(crate) fn outlier_dataset(id: &str, seed: u64) -> Dataset {
    let params = GenParams {
        n_tables: 2,
        n_main_tables: 1,
        rows_range: (150, 250),
        cols_range: (2, 2),
        domain_size: 200_000,
        skew_range: (0.0, 0.2),
        corr_range: (0.0, 0.1),
        seed,
        ..GenParams::default()
    };
    gen_multi_table(id, &params, &mut params.rng_for(7)).unwrap()
}
