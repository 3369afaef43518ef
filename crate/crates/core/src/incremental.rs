//! Incremental learning: cross-validation feedback collection, Mixup
//! augmentation, and encoder fine-tuning.
//!
//! The corpus is split into folds; each fold is validated by KNN against the
//! rest. Samples whose recommendation lands more than `derr_threshold` from
//! the optimum form the feedback set. Each feedback sample is blended with
//! its nearest well-predicted neighbor (convex interpolation of both feature
//! graphs and labels), and the encoder is fine-tuned on the original corpus
//! plus the synthesized samples. No new dataset is ever labeled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dml::{self, DmlConfig};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::estimators::{d_error, ScoreVector};
use crate::featurizer::FeatureGraph;
use crate::linalg::{euclidean, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementalConfig {
    /// Number of cross-validation folds.
    pub folds: usize,
    /// D-error above which a validation sample counts as feedback.
    pub derr_threshold: f64,
    /// Beta distribution parameters for the Mixup coefficient.
    pub alpha: f64,
    pub beta: f64,
    /// Fine-tuning epochs after augmentation.
    pub extra_epochs: usize,
    /// Neighbors used by the validation KNN.
    pub k: usize,
    pub seed: u64,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            folds: 5,
            derr_threshold: 0.1,
            alpha: 1.0,
            beta: 1.0,
            extra_epochs: 20,
            k: 2,
            seed: 0,
        }
    }
}

impl IncrementalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParam {
                name: "folds",
                detail: "must be >= 2".into(),
            });
        }
        if self.derr_threshold <= 0.0 {
            return Err(Error::InvalidParam {
                name: "derr_threshold",
                detail: "must be > 0".into(),
            });
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::InvalidParam {
                name: "alpha/beta",
                detail: "must be > 0".into(),
            });
        }
        if self.k < 1 {
            return Err(Error::InvalidParam {
                name: "k",
                detail: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Outcome of the cross-validation pass: disjoint feedback/reference index
/// sets covering the corpus, plus each sample's validation D-error.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSplit {
    pub feedback: Vec<usize>,
    pub reference: Vec<usize>,
    pub d_errors: Vec<f64>,
}

impl FeedbackSplit {
    pub fn mean_d_error(&self) -> f64 {
        if self.d_errors.is_empty() {
            return 0.0;
        }
        self.d_errors.iter().sum::<f64>() / self.d_errors.len() as f64
    }
}

fn seeded_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        out[i % folds].push(idx);
    }
    out
}

/// Validate every corpus member by KNN-recommending it from the other
/// folds' embeddings; route it to feedback or reference by its D-error.
pub fn collect_feedback(
    graphs: &[FeatureGraph],
    labels: &[ScoreVector],
    params: &EncoderParams,
    cfg: &IncrementalConfig,
) -> Result<FeedbackSplit> {
    cfg.validate()?;
    let n = graphs.len();
    if n < cfg.folds {
        return Err(Error::Insufficient {
            context: "collect_feedback corpus",
            needed: cfg.folds,
            got: n,
        });
    }
    if labels.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            actual: labels.len(),
            context: "collect_feedback labels",
        });
    }
    let embeddings: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| encode(g, params).map(|e| e.0))
        .collect::<Result<_>>()?;

    let folds = seeded_folds(n, cfg.folds, cfg.seed);
    let mut feedback = Vec::new();
    let mut reference = Vec::new();
    let mut d_errors = vec![0.0; n];
    for (fi, fold) in folds.iter().enumerate() {
        let candidates: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(fj, _)| *fj != fi)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        for &i in fold {
            let mut dists: Vec<(f64, usize)> = candidates
                .iter()
                .map(|&c| (euclidean(&embeddings[i], &embeddings[c]), c))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let k = cfg.k.min(dists.len());
            let mut avg = vec![0.0; labels[i].len()];
            for &(_, c) in dists.iter().take(k) {
                for (a, s) in avg.iter_mut().zip(&labels[c].0) {
                    *a += s;
                }
            }
            for a in &mut avg {
                *a /= k as f64;
            }
            let chosen = ScoreVector(avg).argmax();
            let derr = d_error(&labels[i], chosen);
            d_errors[i] = derr;
            if derr > cfg.derr_threshold {
                feedback.push(i);
            } else {
                reference.push(i);
            }
        }
    }
    feedback.sort_unstable();
    reference.sort_unstable();
    Ok(FeedbackSplit {
        feedback,
        reference,
        d_errors,
    })
}

fn pad_graph(g: &FeatureGraph, n: usize) -> (Mat, Mat) {
    let mut v = Mat::zeros(n, g.v.cols);
    for r in 0..g.v.rows {
        v.row_mut(r).copy_from_slice(g.v.row(r));
    }
    let mut e = Mat::zeros(n, n);
    for i in 0..g.e.rows {
        for j in 0..g.e.cols {
            e.set(i, j, g.e.get(i, j));
        }
    }
    (v, e)
}

/// Convex interpolation of two feature graphs and their labels. Graphs are
/// zero-padded to the larger vertex count first.
pub fn mixup(
    g_i: &FeatureGraph,
    y_i: &ScoreVector,
    g_j: &FeatureGraph,
    y_j: &ScoreVector,
    lambda: f64,
) -> Result<(FeatureGraph, ScoreVector)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParam {
            name: "lambda",
            detail: format!("{lambda} outside [0, 1]"),
        });
    }
    if g_i.v.cols != g_j.v.cols {
        return Err(Error::DimMismatch {
            expected: g_i.v.cols,
            actual: g_j.v.cols,
            context: "mixup vertex feature width",
        });
    }
    if y_i.len() != y_j.len() {
        return Err(Error::DimMismatch {
            expected: y_i.len(),
            actual: y_j.len(),
            context: "mixup labels",
        });
    }
    let n = g_i.v.rows.max(g_j.v.rows);
    let (vi, ei) = pad_graph(g_i, n);
    let (vj, ej) = pad_graph(g_j, n);
    let mut v = vi;
    for (a, &b) in v.data.iter_mut().zip(&vj.data) {
        *a = lambda * *a + (1.0 - lambda) * b;
    }
    let mut e = ei;
    for (a, &b) in e.data.iter_mut().zip(&ej.data) {
        *a = lambda * *a + (1.0 - lambda) * b;
    }
    let y = ScoreVector(
        y_i.0
            .iter()
            .zip(&y_j.0)
            .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
            .collect(),
    );
    Ok((FeatureGraph { v, e }, y))
}

#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    /// Feedback/reference split measured before fine-tuning.
    pub before: FeedbackSplit,
    pub synthetic_count: usize,
    /// Mean cross-validation D-error after fine-tuning.
    pub after_mean_d_error: f64,
}

/// One synthetic sample per feedback member (its nearest reference neighbor
/// in embedding space, mixed with a Beta-distributed coefficient), then
/// fine-tune the encoder on originals plus synthetics.
pub fn incremental_train(
    graphs: &[FeatureGraph],
    labels: &[ScoreVector],
    params: &mut EncoderParams,
    cfg: &IncrementalConfig,
    dml_cfg: &DmlConfig,
) -> Result<IncrementalOutcome> {
    let before = collect_feedback(graphs, labels, params, cfg)?;
    if before.feedback.is_empty() {
        let after = before.mean_d_error();
        return Ok(IncrementalOutcome {
            before,
            synthetic_count: 0,
            after_mean_d_error: after,
        });
    }
    if before.reference.is_empty() {
        return Err(Error::Insufficient {
            context: "incremental_train reference set (every sample poorly predicted; \
                      grow the corpus or loosen derr_threshold)",
            needed: 1,
            got: 0,
        });
    }

    let embeddings: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| encode(g, params).map(|e| e.0))
        .collect::<Result<_>>()?;
    let beta = Beta::new(cfg.alpha, cfg.beta).map_err(|e| Error::InvalidParam {
        name: "alpha/beta",
        detail: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d69_7875_70);

    let mut aug_graphs: Vec<FeatureGraph> = graphs.to_vec();
    let mut aug_labels: Vec<ScoreVector> = labels.to_vec();
    let mut synthetic_count = 0;
    for &fi in &before.feedback {
        let nearest = before
            .reference
            .iter()
            .copied()
            .map(|ri| (euclidean(&embeddings[fi], &embeddings[ri]), ri))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
            .expect("reference set checked nonempty");
        let lambda = beta.sample(&mut rng);
        let (g, y) = mixup(
            &graphs[fi],
            &labels[fi],
            &graphs[nearest.1],
            &labels[nearest.1],
            lambda,
        )?;
        aug_graphs.push(g);
        aug_labels.push(y);
        synthetic_count += 1;
    }

    let ft_cfg = DmlConfig {
        epochs: cfg.extra_epochs,
        seed: cfg.seed ^ 0x66696e65,
        ..*dml_cfg
    };
    dml::fit(params, &aug_graphs, &aug_labels, &ft_cfg)?;

    let after = collect_feedback(graphs, labels, params, cfg)?;
    Ok(IncrementalOutcome {
        before,
        synthetic_count,
        after_mean_d_error: after.mean_d_error(),
    })
}
