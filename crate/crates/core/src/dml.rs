//! Deep-metric-learning trainer for the graph encoder.
//!
//! Score vectors act as labels: cosine similarity splits each batch into
//! positive and negative pairs per anchor, and a weighted contrastive loss
//! pulls positives together and pushes negatives apart. The loss weights
//! every pair by both its embedding distance and its label similarity
//! relative to the anchor's other pairs (log-sum-exp form), which is what
//! distinguishes it from the basic contrastive loss kept for ablations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    backward, forward, init_params, EncoderConfig, EncoderGrads, EncoderParams, sgd_step,
};
use crate::error::{Error, Result};
use crate::estimators::ScoreVector;
use crate::featurizer::FeatureGraph;
use crate::linalg::{euclidean, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Weighted,
    Basic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    /// Similarity threshold splitting positives from negatives. Score
    /// vectors are nonnegative, so cosine similarities skew high.
    pub tau: f64,
    /// Fixed margin in the negative term.
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Accuracy weight whose score vectors this encoder is trained for.
    pub w_a: f64,
    /// Shuffle seed for batch formation.
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Global gradient-norm clip per SGD step. The negative loss term is
    /// unbounded below, so an unclipped step schedule eventually blows the
    /// encoder weights up to NaN.
    pub clip_norm: f64,
}

impl Default for DmlConfig {
    fn default() -> Self {
        DmlConfig {
            tau: 0.95,
            margin: 1.0,
            batch_size: 32,
            epochs: 100,
            lr: 1e-3,
            w_a: 1.0,
            seed: 0,
            loss_kind: LossKind::Weighted,
            clip_norm: 5.0,
        }
    }
}

impl DmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidParam {
                name: "batch_size",
                detail: "must be >= 2".into(),
            });
        }
        if self.epochs < 1 {
            return Err(Error::InvalidParam {
                name: "epochs",
                detail: "must be >= 1".into(),
            });
        }
        if self.lr < 0.0 {
            return Err(Error::InvalidParam {
                name: "lr",
                detail: "must be nonnegative".into(),
            });
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParam {
                name: "tau",
                detail: format!("{} outside [-1, 1]", self.tau),
            });
        }
        Ok(())
    }
}

/// Cosine similarity of two score vectors; a zero vector pairs at 0.
pub fn cosine_sim(a: &ScoreVector, b: &ScoreVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            actual: b.len(),
            context: "cosine_sim",
        });
    }
    let na: f64 = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Pairwise label-similarity matrix for one batch.
pub fn sim_matrix(labels: &[ScoreVector]) -> Result<Mat> {
    let m = labels.len();
    let mut s = Mat::zeros(m, m);
    for i in 0..m {
        s.set(i, i, 1.0);
        for j in i + 1..m {
            let v = cosine_sim(&labels[i], &labels[j])?;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Split the batch (self excluded) into positive and negative index sets for
/// one anchor: `j` is positive iff `Sim_ij >= tau`.
pub fn partition(
    labels: &[ScoreVector],
    anchor: usize,
    tau: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.len() < 2 {
        return Err(Error::Insufficient {
            context: "partition batch",
            needed: 2,
            got: labels.len(),
        });
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for j in 0..labels.len() {
        if j == anchor {
            continue;
        }
        if cosine_sim(&labels[anchor], &labels[j])? >= tau {
            pos.push(j);
        } else {
            neg.push(j);
        }
    }
    Ok((pos, neg))
}

/// Euclidean distance between two embeddings.
pub fn embed_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            actual: b.len(),
            context: "embed_distance",
        });
    }
    Ok(euclidean(a, b))
}

fn distance_matrix(embeddings: &[Vec<f64>]) -> Mat {
    let m = embeddings.len();
    let mut u = Mat::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            u.set(i, j, d);
            u.set(j, i, d);
        }
    }
    u
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn softmax(terms: &[f64]) -> Vec<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-anchor pair weights `|d anchor-term / d U_ij|`, as used by the loss
/// gradient: positives follow the softmax of `U + Sim` over the anchor's
/// positive set, negatives the softmax of `margin - U - Sim`.
#[derive(Debug, Clone, Default)]
pub struct PairWeights {
    /// per anchor: (pair index, weight)
    pub positive: Vec<Vec<(usize, f64)>>,
    pub negative: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    /// Gradient of the batch loss with respect to each embedding.
    pub d_embeddings: Vec<Vec<f64>>,
    pub weights: PairWeights,
}

fn fold_distance_grad(
    d_emb: &mut [Vec<f64>],
    embeddings: &[Vec<f64>],
    u: &Mat,
    i: usize,
    j: usize,
    coef: f64,
) {
    let dist = u.get(i, j);
    if dist < 1e-12 {
        return;
    }
    for k in 0..embeddings[i].len() {
        let dir = (embeddings[i][k] - embeddings[j][k]) / dist;
        d_emb[i][k] += coef * dir;
        d_emb[j][k] -= coef * dir;
    }
}

/// Weighted contrastive loss over one batch:
/// `L = (1/m) sum_i [ log sum_{k in P_i} e^{U_ik + Sim_ik}
///                  + log sum_{k in N_i} e^{margin - U_ik - Sim_ik} ]`.
/// An anchor with an empty positive (or negative) set contributes nothing
/// for that term.
pub fn weighted_contrastive_loss(
    embeddings: &[Vec<f64>],
    labels: &[ScoreVector],
    cfg: &DmlConfig,
) -> Result<LossGrad> {
    let m = embeddings.len();
    if m < 2 || labels.len() != m {
        return Err(Error::Insufficient {
            context: "weighted_contrastive_loss batch",
            needed: 2,
            got: m.min(labels.len()),
        });
    }
    let u = distance_matrix(embeddings);
    let s = sim_matrix(labels)?;
    let dim = embeddings[0].len();
    let inv_m = 1.0 / m as f64;

    let mut loss = 0.0;
    let mut d_emb = vec![vec![0.0; dim]; m];
    let mut weights = PairWeights::default();

    for i in 0..m {
        let (pos, neg) = partition(labels, i, cfg.tau)?;
        if !pos.is_empty() {
            let terms: Vec<f64> = pos.iter().map(|&k| u.get(i, k) + s.get(i, k)).collect();
            loss += inv_m * log_sum_exp(&terms);
            let w = softmax(&terms);
            let mut anchor_w = Vec::with_capacity(pos.len());
            for (&k, &wk) in pos.iter().zip(&w) {
                fold_distance_grad(&mut d_emb, embeddings, &u, i, k, inv_m * wk);
                anchor_w.push((k, wk));
            }
            weights.positive.push(anchor_w);
        } else {
            weights.positive.push(Vec::new());
        }
        if !neg.is_empty() {
            let terms: Vec<f64> = neg
                .iter()
                .map(|&k| cfg.margin - u.get(i, k) - s.get(i, k))
                .collect();
            loss += inv_m * log_sum_exp(&terms);
            let w = softmax(&terms);
            let mut anchor_w = Vec::with_capacity(neg.len());
            for (&k, &wk) in neg.iter().zip(&w) {
                fold_distance_grad(&mut d_emb, embeddings, &u, i, k, -inv_m * wk);
                anchor_w.push((k, wk));
            }
            weights.negative.push(anchor_w);
        } else {
            weights.negative.push(Vec::new());
        }
    }
    Ok(LossGrad {
        loss,
        d_embeddings: d_emb,
        weights,
    })
}

/// Basic contrastive loss for the ablation:
/// `L = (1/m) sum_i [ sum_{k in P_i} U_ik - sum_{k in N_i} U_ik ]`.
pub fn basic_contrastive_loss(
    embeddings: &[Vec<f64>],
    labels: &[ScoreVector],
    cfg: &DmlConfig,
) -> Result<LossGrad> {
    let m = embeddings.len();
    if m < 2 || labels.len() != m {
        return Err(Error::Insufficient {
            context: "basic_contrastive_loss batch",
            needed: 2,
            got: m.min(labels.len()),
        });
    }
    let u = distance_matrix(embeddings);
    let dim = embeddings[0].len();
    let inv_m = 1.0 / m as f64;
    let mut loss = 0.0;
    let mut d_emb = vec![vec![0.0; dim]; m];
    for i in 0..m {
        let (pos, neg) = partition(labels, i, cfg.tau)?;
        for (k, sign) in pos
            .iter()
            .map(|&k| (k, 1.0))
            .chain(neg.iter().map(|&k| (k, -1.0)))
        {
            loss += inv_m * sign * u.get(i, k);
            fold_distance_grad(&mut d_emb, embeddings, &u, i, k, inv_m * sign);
        }
    }
    Ok(LossGrad {
        loss,
        d_embeddings: d_emb,
        weights: PairWeights::default(),
    })
}

/// Per-epoch mean batch loss plus the positive-pair share of the label set,
/// logged so `tau` can be retuned when labels skew one way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
    pub positive_pair_fraction: f64,
}

/// The batch training loop on existing parameters; used for fresh training
/// and for fine-tuning. Per epoch, graphs are shuffled into `ceil(n/m)`
/// batches; each batch is embedded, the loss gradient is backpropagated
/// through the encoder, and one SGD step is applied.
pub fn fit(
    params: &mut EncoderParams,
    graphs: &[FeatureGraph],
    labels: &[ScoreVector],
    cfg: &DmlConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if graphs.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: graphs.len(),
            actual: labels.len(),
            context: "training labels",
        });
    }
    if graphs.len() < 2 {
        return Err(Error::Insufficient {
            context: "train_encoder corpus",
            needed: 2,
            got: graphs.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut embs = Vec::with_capacity(chunk.len());
            let mut tapes = Vec::with_capacity(chunk.len());
            for &gi in chunk {
                let (e, t) = forward(&graphs[gi], params)?;
                embs.push(e.0);
                tapes.push(t);
            }
            let batch_labels: Vec<ScoreVector> =
                chunk.iter().map(|&gi| labels[gi].clone()).collect();
            let lg = match cfg.loss_kind {
                LossKind::Weighted => weighted_contrastive_loss(&embs, &batch_labels, cfg)?,
                LossKind::Basic => basic_contrastive_loss(&embs, &batch_labels, cfg)?,
            };
            let mut grads = EncoderGrads::zeros_like(params);
            for (tape, d_emb) in tapes.iter().zip(&lg.d_embeddings) {
                backward(tape, params, d_emb, &mut grads);
            }
            if cfg.clip_norm > 0.0 {
                let norm = grads.l2_norm();
                if norm > cfg.clip_norm {
                    grads.scale(cfg.clip_norm / norm);
                }
            }
            sgd_step(params, &grads, cfg.lr);
            total += lg.loss;
            batches += 1;
        }
        epoch_loss.push(if batches > 0 {
            total / batches as f64
        } else {
            0.0
        });
    }

    let mut pos_pairs = 0usize;
    let mut all_pairs = 0usize;
    for i in 0..labels.len() {
        let (pos, neg) = partition(labels, i, cfg.tau)?;
        pos_pairs += pos.len();
        all_pairs += pos.len() + neg.len();
    }
    Ok(TrainTrace {
        epoch_loss,
        positive_pair_fraction: if all_pairs > 0 {
            pos_pairs as f64 / all_pairs as f64
        } else {
            0.0
        },
    })
}

/// Initialize an encoder from `enc_cfg` and train it on labeled graphs.
pub fn train_encoder(
    graphs: &[FeatureGraph],
    labels: &[ScoreVector],
    cfg: &DmlConfig,
    enc_cfg: &EncoderConfig,
) -> Result<(EncoderParams, TrainTrace)> {
    if graphs.is_empty() {
        return Err(Error::Insufficient {
            context: "train_encoder corpus",
            needed: 2,
            got: 0,
        });
    }
    let mut params = init_params(enc_cfg, graphs[0].v.cols);
    let trace = fit(&mut params, graphs, labels, cfg)?;
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&sv(&[0.3, 0.7]), &sv(&[0.3, 0.7])).unwrap(), 1.0);
        assert_eq!(cosine_sim(&sv(&[1.0, 0.0]), &sv(&[0.0, 1.0])).unwrap(), 0.0);
        assert_relative_eq!(
            cosine_sim(&sv(&[1.0, 1.0, 0.0]), &sv(&[1.0, 0.0, 0.0])).unwrap(),
            1.0 / 2.0f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(cosine_sim(&sv(&[0.0, 0.0]), &sv(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(cosine_sim(&sv(&[1.0]), &sv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn partition_thresholds() {
        let labels = vec![sv(&[1.0, 0.0]), sv(&[1.0, 0.25]), sv(&[1.0, 0.48])];
        let s01 = cosine_sim(&labels[0], &labels[1]).unwrap();
        let s02 = cosine_sim(&labels[0], &labels[2]).unwrap();
        assert!(s01 > 0.95 && s02 < 0.95, "{s01} {s02}");
        let (pos, neg) = partition(&labels, 0, 0.95).unwrap();
        assert_eq!(pos, vec![1]);
        assert_eq!(neg, vec![2]);
        // tau = 0 with nonnegative scores: everything is positive
        let (pos, neg) = partition(&labels, 0, 0.0).unwrap();
        assert_eq!(pos, vec![1, 2]);
        assert!(neg.is_empty());
        // tau just above every cross similarity: nothing is positive
        let (pos, _) = partition(&labels, 0, 1.0 - 1e-12).unwrap();
        assert!(pos.is_empty());
    }

    #[test]
    fn embed_distance_examples() {
        assert_eq!(embed_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(embed_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let a = [0.3, -0.4, 1.0];
        let b = [1.3, 0.0, -0.2];
        assert_eq!(
            embed_distance(&a, &b).unwrap(),
            embed_distance(&b, &a).unwrap()
        );
        assert!(embed_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_positive_unit_context_gives_loss_one() {
        // two identical-label graphs at distance 0: each anchor term is
        // log(e^{0 + 1}) = 1, and there are no negatives
        let embs = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let labels = vec![sv(&[1.0, 0.0]), sv(&[1.0, 0.0])];
        let cfg = DmlConfig::default();
        let lg = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap();
        assert_relative_eq!(lg.loss, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_term_decreases_in_distance() {
        let cfg = DmlConfig::default();
        let labels = vec![sv(&[1.0, 0.0]), sv(&[0.0, 1.0])];
        let near = vec![vec![0.0, 0.0], vec![0.1, 0.0]];
        let far = vec![vec![0.0, 0.0], vec![5.0, 0.0]];
        let l_near = weighted_contrastive_loss(&near, &labels, &cfg).unwrap().loss;
        let l_far = weighted_contrastive_loss(&far, &labels, &cfg).unwrap().loss;
        assert!(l_far < l_near, "{l_far} !< {l_near}");
    }

    /// Closed-form positive weight `1 / sum_k e^{(U_ik-U_ij)+(S_ik-S_ij)}`.
    fn closed_form_pos(u: &Mat, s: &Mat, pos: &[usize], i: usize, j: usize) -> f64 {
        let mut denom = 0.0;
        for &k in pos {
            denom += ((u.get(i, k) - u.get(i, j)) + (s.get(i, k) - s.get(i, j))).exp();
        }
        1.0 / denom
    }

    /// Closed-form negative weight `1 / sum_k e^{(U_ij-U_ik)+(S_ij-S_ik)}`.
    fn closed_form_neg(u: &Mat, s: &Mat, neg: &[usize], i: usize, j: usize) -> f64 {
        let mut denom = 0.0;
        for &k in neg {
            denom += ((u.get(i, j) - u.get(i, k)) + (s.get(i, j) - s.get(i, k))).exp();
        }
        1.0 / denom
    }

    fn random_batch(m: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<ScoreVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<ScoreVector> = (0..m)
            .map(|_| ScoreVector((0..4).map(|_| rng.gen_range(0.0..1.0)).collect()))
            .collect();
        (embs, labels)
    }

    #[test]
    fn pair_weights_match_closed_form() {
        let cfg = DmlConfig {
            tau: 0.9,
            ..DmlConfig::default()
        };
        let (embs, labels) = random_batch(8, 5, 17);
        let u = distance_matrix(&embs);
        let s = sim_matrix(&labels).unwrap();
        let lg = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap();
        let mut checked = 0;
        for i in 0..8 {
            let (pos, neg) = partition(&labels, i, cfg.tau).unwrap();
            for &(j, w) in &lg.weights.positive[i] {
                assert_relative_eq!(w, closed_form_pos(&u, &s, &pos, i, j), max_relative = 1e-6);
                checked += 1;
            }
            for &(j, w) in &lg.weights.negative[i] {
                assert_relative_eq!(w, closed_form_neg(&u, &s, &neg, i, j), max_relative = 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 10, "too few pairs exercised: {checked}");
    }

    #[test]
    fn equal_context_positives_weigh_inverse_count() {
        // anchor at origin with three positives all at distance 1 and
        // identical labels: each pair weight is exactly 1/3
        let embs = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let labels = vec![sv(&[1.0, 0.5]); 4];
        let cfg = DmlConfig::default();
        let lg = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap();
        for &(_, w) in &lg.weights.positive[0] {
            assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn weight_ordering_under_perturbation() {
        // positive weights grow with the pair's own U and Sim; negative
        // weights shrink as the pair moves away
        let u = Mat::from_rows(&[
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ]);
        let s = Mat::from_rows(&[
            vec![1.0, 0.98, 0.97],
            vec![0.98, 1.0, 0.99],
            vec![0.97, 0.99, 1.0],
        ]);
        let pos = vec![1, 2];
        let base = closed_form_pos(&u, &s, &pos, 0, 1);
        let mut u_up = u.clone();
        u_up.set(0, 1, 1.5);
        assert!(closed_form_pos(&u_up, &s, &pos, 0, 1) > base);
        let mut s_up = s.clone();
        s_up.set(0, 1, 0.99);
        assert!(closed_form_pos(&u, &s_up, &pos, 0, 1) > base);

        let neg = vec![1, 2];
        let nbase = closed_form_neg(&u, &s, &neg, 0, 1);
        assert!(closed_form_neg(&u_up, &s, &neg, 0, 1) < nbase);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let cfg = DmlConfig {
            tau: 0.9,
            ..DmlConfig::default()
        };
        for seed in [3u64, 4, 5] {
            let (mut embs, labels) = random_batch(6, 4, seed);
            let lg = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap();
            let h = 1e-6;
            for i in 0..embs.len() {
                for k in 0..embs[i].len() {
                    let orig = embs[i][k];
                    embs[i][k] = orig + h;
                    let up = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap().loss;
                    embs[i][k] = orig - h;
                    let dn = weighted_contrastive_loss(&embs, &labels, &cfg).unwrap().loss;
                    embs[i][k] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let denom = fd.abs().max(lg.d_embeddings[i][k].abs()).max(1e-6);
                    assert!(
                        (fd - lg.d_embeddings[i][k]).abs() / denom < 1e-4,
                        "emb {i}[{k}]: fd {fd} vs {}",
                        lg.d_embeddings[i][k]
                    );
                }
            }
        }
    }

    #[test]
    fn basic_loss_examples() {
        let cfg = DmlConfig::default();
        // identical embeddings: every distance 0 -> loss 0
        let embs = vec![vec![0.3, 0.3]; 3];
        let labels = vec![sv(&[1.0, 0.0]), sv(&[1.0, 0.0]), sv(&[0.0, 1.0])];
        let lg = basic_contrastive_loss(&embs, &labels, &cfg).unwrap();
        assert_eq!(lg.loss, 0.0);

        // homogeneity: scaling embeddings by c scales the loss by c
        let embs = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 5.0]];
        let l1 = basic_contrastive_loss(&embs, &labels, &cfg).unwrap().loss;
        let scaled: Vec<Vec<f64>> = embs
            .iter()
            .map(|e| e.iter().map(|&x| 3.0 * x).collect())
            .collect();
        let l3 = basic_contrastive_loss(&scaled, &labels, &cfg).unwrap().loss;
        assert_relative_eq!(l3, 3.0 * l1, epsilon = 1e-12);
    }

    #[test]
    fn basic_loss_hand_case() {
        let embs = vec![vec![0.0], vec![2.0], vec![-5.0]];
        let labels = vec![sv(&[1.0, 0.0]), sv(&[1.0, 0.0]), sv(&[0.0, 1.0])];
        let cfg = DmlConfig::default();
        let lg = basic_contrastive_loss(&embs, &labels, &cfg).unwrap();
        // anchor 0: +2 - 5; anchor 1: +2 - 7; anchor 2: -5 - 7
        assert_relative_eq!(lg.loss, (-3.0 - 5.0 - 12.0) / 3.0, epsilon = 1e-12);
    }

    fn two_cluster_graphs(per_cluster: usize, seed: u64) -> (Vec<FeatureGraph>, Vec<ScoreVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut graphs = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..per_cluster {
                let base = if c == 0 { 0.2 } else { 0.8 };
                let mut v = Mat::zeros(3, 8);
                for x in &mut v.data {
                    *x = base + rng.gen_range(-0.05..0.05);
                }
                let mut e = Mat::zeros(3, 3);
                e.set(0, 1, base);
                e.set(1, 2, base);
                graphs.push(FeatureGraph { v, e });
                labels.push(if c == 0 {
                    sv(&[1.0, 0.0])
                } else {
                    sv(&[0.0, 1.0])
                });
            }
        }
        (graphs, labels)
    }

    fn cluster_separation(embs: &[Vec<f64>], per_cluster: usize) -> f64 {
        let mut intra = 0.0;
        let mut intra_n = 0;
        let mut inter = 0.0;
        let mut inter_n = 0;
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                let d = euclidean(&embs[i], &embs[j]);
                if (i < per_cluster) == (j < per_cluster) {
                    intra += d;
                    intra_n += 1;
                } else {
                    inter += d;
                    inter_n += 1;
                }
            }
        }
        (inter / inter_n as f64) / (intra / intra_n as f64).max(1e-12)
    }

    #[test]
    fn training_separates_clusters() {
        let (graphs, labels) = two_cluster_graphs(12, 8);
        let enc_cfg = EncoderConfig {
            n_layers: 2,
            hidden: 16,
            embed_dim: 8,
            init_seed: 3,
        };
        let cfg = DmlConfig {
            epochs: 50,
            batch_size: 8,
            lr: 5e-3,
            seed: 1,
            ..DmlConfig::default()
        };
        let (params, trace) = train_encoder(&graphs, &labels, &cfg, &enc_cfg).unwrap();
        assert_eq!(trace.epoch_loss.len(), 50);
        let embs: Vec<Vec<f64>> = graphs
            .iter()
            .map(|g| crate::encoder::encode(g, &params).unwrap().0)
            .collect();
        let ratio = cluster_separation(&embs, 12);
        assert!(ratio > 1.0, "clusters failed to separate: ratio {ratio}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (graphs, labels) = two_cluster_graphs(4, 9);
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            hidden: 8,
            embed_dim: 4,
            init_seed: 5,
        };
        let cfg = DmlConfig {
            epochs: 3,
            batch_size: 4,
            lr: 0.0,
            ..DmlConfig::default()
        };
        let before = init_params(&enc_cfg, graphs[0].v.cols);
        let (after, _) = train_encoder(&graphs, &labels, &cfg, &enc_cfg).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn fixed_seed_reproduces_loss_trace() {
        let (graphs, labels) = two_cluster_graphs(6, 10);
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            hidden: 8,
            embed_dim: 4,
            init_seed: 6,
        };
        let cfg = DmlConfig {
            epochs: 5,
            batch_size: 4,
            ..DmlConfig::default()
        };
        let (_, t1) = train_encoder(&graphs, &labels, &cfg, &enc_cfg).unwrap();
        let (_, t2) = train_encoder(&graphs, &labels, &cfg, &enc_cfg).unwrap();
        assert_eq!(t1.epoch_loss, t2.epoch_loss);
    }

    #[test]
    fn weighted_beats_basic_on_separation() {
        let (graphs, labels) = two_cluster_graphs(10, 11);
        let enc_cfg = EncoderConfig {
            n_layers: 2,
            hidden: 16,
            embed_dim: 8,
            init_seed: 4,
        };
        let base_cfg = DmlConfig {
            epochs: 40,
            batch_size: 10,
            lr: 2e-3,
            seed: 2,
            ..DmlConfig::default()
        };
        let run = |kind: LossKind| {
            let cfg = DmlConfig {
                loss_kind: kind,
                ..base_cfg
            };
            let (params, _) = train_encoder(&graphs, &labels, &cfg, &enc_cfg).unwrap();
            let embs: Vec<Vec<f64>> = graphs
                .iter()
                .map(|g| crate::encoder::encode(g, &params).unwrap().0)
                .collect();
            cluster_separation(&embs, 10)
        };
        let weighted = run(LossKind::Weighted);
        let basic = run(LossKind::Basic);
        assert!(
            weighted > basic,
            "weighted {weighted} not above basic {basic}"
        );
    }
}
