//! GIN graph encoder: L GINConv layers, sum pooling, and an output
//! projection, with exact reverse-mode gradients for every parameter.
//!
//! Per layer: `h_i <- f((1 + eps) * h_i + sum_j a_ij * h_j)` where `a` is the
//! symmetrized edge-weight matrix and `f` is affine -> ReLU -> affine. All
//! arithmetic is in f64; the backward pass is hand-written against the taped
//! forward activations, so gradients are exact rather than approximated.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{FeatureConfig, FeatureGraph};
use crate::linalg::Mat;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n_layers: 3,
            hidden: 64,
            embed_dim: 32,
            init_seed: 0,
        }
    }
}

/// `y = x W + b` with `W: [in x out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    fn init(fan_in: usize, out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut w = Mat::zeros(fan_in, out);
        for v in &mut w.data {
            *v = rng.gen_range(-bound..bound);
        }
        Affine {
            w,
            b: vec![0.0; out],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = Mat::zeros(dim, dim);
        for i in 0..dim {
            w.set(i, i, 1.0);
        }
        Affine {
            w,
            b: vec![0.0; dim],
        }
    }

    fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        y.add_row_inplace(&self.b);
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinLayer {
    /// Learnable self-loop weight, initialized to 0.
    pub eps: f64,
    pub lin1: Affine,
    pub lin2: Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<GinLayer>,
    pub proj: Affine,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].lin1.w.rows
    }

    pub fn embed_dim(&self) -> usize {
        self.proj.b.len()
    }

    /// Flatten all parameters in a fixed order (per layer: eps, w1, b1, w2,
    /// b2; then projection w, b). Used by finite-difference checks.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.eps);
            out.extend_from_slice(&l.lin1.w.data);
            out.extend_from_slice(&l.lin1.b);
            out.extend_from_slice(&l.lin2.w.data);
            out.extend_from_slice(&l.lin2.b);
        }
        out.extend_from_slice(&self.proj.w.data);
        out.extend_from_slice(&self.proj.b);
        out
    }

    pub fn from_flat(&self, flat: &[f64]) -> EncoderParams {
        let mut p = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut p.layers {
            l.eps = it.next().expect("flat too short");
            for v in &mut l.lin1.w.data {
                *v = it.next().expect("flat too short");
            }
            for v in &mut l.lin1.b {
                *v = it.next().expect("flat too short");
            }
            for v in &mut l.lin2.w.data {
                *v = it.next().expect("flat too short");
            }
            for v in &mut l.lin2.b {
                *v = it.next().expect("flat too short");
            }
        }
        for v in &mut p.proj.w.data {
            *v = it.next().expect("flat too short");
        }
        for v in &mut p.proj.b {
            *v = it.next().expect("flat too short");
        }
        assert!(it.next().is_none(), "flat too long");
        p
    }
}

/// Fixed-length embedding of one feature graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

pub fn init_params(cfg: &EncoderConfig, input_dim: usize) -> EncoderParams {
    assert!(cfg.n_layers >= 1 && cfg.hidden >= 1 && cfg.embed_dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    let mut dim = input_dim;
    for _ in 0..cfg.n_layers {
        layers.push(GinLayer {
            eps: 0.0,
            lin1: Affine::init(dim, cfg.hidden, &mut rng),
            lin2: Affine::init(cfg.hidden, cfg.hidden, &mut rng),
        });
        dim = cfg.hidden;
    }
    EncoderParams {
        layers,
        proj: Affine::init(cfg.hidden, cfg.embed_dim, &mut rng),
    }
}

/// Undirected message-passing weights: `a_ij = max(e_ij, e_ji)`, so FK
/// direction does not block information flow.
pub fn symmetrize(e: &Mat) -> Mat {
    let n = e.rows;
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, e.get(i, j).max(e.get(j, i)));
        }
    }
    a
}

/// One GINConv layer: `f((1 + eps) h_i + sum_j a_ij h_j)`.
pub fn ginconv_forward(h: &Mat, adj: &Mat, layer: &GinLayer) -> Mat {
    let (m, _, _) = aggregate(h, adj, layer.eps);
    let z = layer.lin1.forward(&m);
    let r = relu(&z);
    layer.lin2.forward(&r)
}

fn aggregate(h: &Mat, adj: &Mat, eps: f64) -> (Mat, Mat, Mat) {
    let mut m = adj.matmul(h);
    let scale = 1.0 + eps;
    for (out, &x) in m.data.iter_mut().zip(&h.data) {
        *out += scale * x;
    }
    (m, h.clone(), adj.clone())
}

fn relu(z: &Mat) -> Mat {
    let mut r = z.clone();
    for v in &mut r.data {
        *v = v.max(0.0);
    }
    r
}

struct LayerTape {
    h_in: Mat,
    m: Mat,
    z: Mat,
    r: Mat,
}

/// Recorded forward pass; consumed by [`backward`].
pub struct Tape {
    adj: Mat,
    layers: Vec<LayerTape>,
    pooled: Vec<f64>,
}

impl Tape {
    /// Smallest |pre-activation| seen by any ReLU. Finite-difference checks
    /// are invalid when a kink sits within the probe step, so they screen on
    /// this value.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.z.data.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }
}

fn check_input(g: &FeatureGraph, params: &EncoderParams) -> Result<()> {
    if g.v.cols != params.input_dim() {
        return Err(Error::DimMismatch {
            expected: params.input_dim(),
            actual: g.v.cols,
            context: "encoder input width",
        });
    }
    if g.e.rows != g.v.rows || g.e.cols != g.v.rows {
        return Err(Error::DimMismatch {
            expected: g.v.rows,
            actual: g.e.rows,
            context: "edge matrix shape",
        });
    }
    Ok(())
}

/// Forward pass recording every activation needed for gradients.
pub fn forward(g: &FeatureGraph, params: &EncoderParams) -> Result<(Embedding, Tape)> {
    check_input(g, params)?;
    let adj = symmetrize(&g.e);
    let mut h = g.v.clone();
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (m, h_in, _) = aggregate(&h, &adj, layer.eps);
        let z = layer.lin1.forward(&m);
        let r = relu(&z);
        h = layer.lin2.forward(&r);
        layers.push(LayerTape { h_in, m, z, r });
    }
    let pooled = h.col_sums();
    let mut emb = params.proj.b.clone();
    for (j, &p) in pooled.iter().enumerate() {
        for (e, w) in emb.iter_mut().zip(params.proj.w.row(j)) {
            *e += p * w;
        }
    }
    Ok((
        Embedding(emb),
        Tape {
            adj,
            layers,
            pooled,
        },
    ))
}

/// Embed a feature graph (forward only).
pub fn encode(g: &FeatureGraph, params: &EncoderParams) -> Result<Embedding> {
    forward(g, params).map(|(e, _)| e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinLayerGrads {
    pub eps: f64,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<GinLayerGrads>,
    pub proj_w: Mat,
    pub proj_b: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        EncoderGrads {
            layers: params
                .layers
                .iter()
                .map(|l| GinLayerGrads {
                    eps: 0.0,
                    w1: Mat::zeros(l.lin1.w.rows, l.lin1.w.cols),
                    b1: vec![0.0; l.lin1.b.len()],
                    w2: Mat::zeros(l.lin2.w.rows, l.lin2.w.cols),
                    b2: vec![0.0; l.lin2.b.len()],
                })
                .collect(),
            proj_w: Mat::zeros(params.proj.w.rows, params.proj.w.cols),
            proj_b: vec![0.0; params.proj.b.len()],
        }
    }

    /// Same flattening order as [`EncoderParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.eps);
            out.extend_from_slice(&l.w1.data);
            out.extend_from_slice(&l.b1);
            out.extend_from_slice(&l.w2.data);
            out.extend_from_slice(&l.b2);
        }
        out.extend_from_slice(&self.proj_w.data);
        out.extend_from_slice(&self.proj_b);
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.to_flat().iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.eps *= s;
            l.w1.scale_inplace(s);
            l.w2.scale_inplace(s);
            for v in l.b1.iter_mut().chain(l.b2.iter_mut()) {
                *v *= s;
            }
        }
        self.proj_w.scale_inplace(s);
        for v in &mut self.proj_b {
            *v *= s;
        }
    }
}

/// Accumulate exact gradients for one graph into `grads`, given the loss
/// gradient with respect to its embedding.
pub fn backward(tape: &Tape, params: &EncoderParams, d_emb: &[f64], grads: &mut EncoderGrads) {
    assert_eq!(d_emb.len(), params.embed_dim(), "upstream gradient width");
    let hidden = params.proj.w.rows;

    // projection: emb = pooled * Wp + bp
    let mut d_pooled = vec![0.0; hidden];
    for j in 0..hidden {
        let wrow = params.proj.w.row(j);
        let grow = grads.proj_w.row_mut(j);
        let p = tape.pooled[j];
        let mut acc = 0.0;
        for (k, &de) in d_emb.iter().enumerate() {
            acc += wrow[k] * de;
            grow[k] += p * de;
        }
        d_pooled[j] = acc;
    }
    for (g, &de) in grads.proj_b.iter_mut().zip(d_emb) {
        *g += de;
    }

    // sum pooling broadcasts the pooled gradient to every vertex
    let n = tape.layers.last().map_or(0, |l| l.r.rows);
    let mut d_h = Mat::zeros(n, hidden);
    for r in 0..n {
        d_h.row_mut(r).copy_from_slice(&d_pooled);
    }

    for (li, layer) in params.layers.iter().enumerate().rev() {
        let t = &tape.layers[li];
        let lg = &mut grads.layers[li];

        // h = r * W2 + b2
        lg.w2.add_inplace(&t.r.matmul_tn(&d_h));
        for (g, &s) in lg.b2.iter_mut().zip(&d_h.col_sums()) {
            *g += s;
        }
        let d_r = d_h.matmul_nt(&layer.lin2.w);

        // relu mask
        let mut d_z = d_r;
        for (dz, &z) in d_z.data.iter_mut().zip(&t.z.data) {
            if z <= 0.0 {
                *dz = 0.0;
            }
        }

        // z = m * W1 + b1
        lg.w1.add_inplace(&t.m.matmul_tn(&d_z));
        for (g, &s) in lg.b1.iter_mut().zip(&d_z.col_sums()) {
            *g += s;
        }
        let d_m = d_z.matmul_nt(&layer.lin1.w);

        // m = (1 + eps) h_in + A h_in
        let mut deps = 0.0;
        for (&dm, &h) in d_m.data.iter().zip(&t.h_in.data) {
            deps += dm * h;
        }
        lg.eps += deps;

        let mut d_h_in = tape.adj.matmul_tn(&d_m);
        let scale = 1.0 + layer.eps;
        for (dh, &dm) in d_h_in.data.iter_mut().zip(&d_m.data) {
            *dh += scale * dm;
        }
        d_h = d_h_in;
    }
}

/// Plain SGD: `theta <- theta - lr * grad`.
pub fn sgd_step(params: &mut EncoderParams, grads: &EncoderGrads, lr: f64) {
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        l.eps -= lr * g.eps;
        for (w, &d) in l.lin1.w.data.iter_mut().zip(&g.w1.data) {
            *w -= lr * d;
        }
        for (b, &d) in l.lin1.b.iter_mut().zip(&g.b1) {
            *b -= lr * d;
        }
        for (w, &d) in l.lin2.w.data.iter_mut().zip(&g.w2.data) {
            *w -= lr * d;
        }
        for (b, &d) in l.lin2.b.iter_mut().zip(&g.b2) {
            *b -= lr * d;
        }
    }
    for (w, &d) in params.proj.w.data.iter_mut().zip(&grads.proj_w.data) {
        *w -= lr * d;
    }
    for (b, &d) in params.proj.b.iter_mut().zip(&grads.proj_b) {
        *b -= lr * d;
    }
}

// ---------------------------------------------------------------------------
// Model file: versioned JSON with configs and f64 parameter arrays
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// Accuracy weight this encoder was trained for.
    pub w_a: f64,
    pub encoder_config: EncoderConfig,
    pub feature_config: FeatureConfig,
    pub params: EncoderParams,
}

pub fn save_model(m: &ModelFile, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json =
        serde_json::to_string_pretty(m).map_err(|e| Error::format("model file", e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::format("model file", e.to_string()))?;
    if m.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(
            "model file",
            format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            ),
        ));
    }
    if m.params.input_dim() != m.feature_config.vertex_dim() {
        return Err(Error::DimMismatch {
            expected: m.feature_config.vertex_dim(),
            actual: m.params.input_dim(),
            context: "model input width vs feature config",
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Layer whose f is the identity on nonnegative inputs.
    fn identity_layer(dim: usize) -> GinLayer {
        GinLayer {
            eps: 0.0,
            lin1: Affine::identity(dim),
            lin2: Affine::identity(dim),
        }
    }

    fn graph(v: Mat, e: Mat) -> FeatureGraph {
        FeatureGraph { v, e }
    }

    #[test]
    fn isolated_vertex_passes_through_identity_layer() {
        let h = Mat::from_rows(&[vec![0.5, 2.0, 0.0]]);
        let adj = Mat::zeros(1, 1);
        let out = ginconv_forward(&h, &adj, &identity_layer(3));
        assert_eq!(out.data, h.data);
    }

    #[test]
    fn zero_weight_edge_equals_no_edge() {
        let h = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let no_edge = Mat::zeros(2, 2);
        let mut zero_edge = Mat::zeros(2, 2);
        zero_edge.set(0, 1, 0.0);
        let layer = identity_layer(2);
        assert_eq!(
            ginconv_forward(&h, &no_edge, &layer).data,
            ginconv_forward(&h, &zero_edge, &layer).data
        );
    }

    #[test]
    fn star_graph_center_aggregates_degree() {
        // center vertex 0 connected to 3 leaves with unit weights
        let n = 4;
        let h = Mat::from_rows(&vec![vec![1.0, 1.0]; n]);
        let mut e = Mat::zeros(n, n);
        for leaf in 1..n {
            e.set(0, leaf, 1.0);
            e.set(leaf, 0, 1.0);
        }
        let out = ginconv_forward(&h, &e, &identity_layer(2));
        assert_eq!(out.row(0), &[4.0, 4.0]); // 1 + degree 3
        for leaf in 1..n {
            assert_eq!(out.row(leaf), &[2.0, 2.0]); // 1 + center
        }
    }

    fn random_graph(n: usize, dim: usize, seed: u64) -> FeatureGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Mat::zeros(n, dim);
        for x in &mut v.data {
            *x = rng.gen_range(-1.0..1.0);
        }
        let mut e = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < 0.5 {
                    e.set(i, j, rng.gen_range(0.0..1.0));
                }
            }
        }
        graph(v, e)
    }

    #[test]
    fn permutation_invariance_small() {
        let cfg = EncoderConfig {
            n_layers: 2,
            hidden: 8,
            embed_dim: 4,
            init_seed: 5,
        };
        let g = random_graph(5, 6, 1);
        let params = init_params(&cfg, 6);
        let e1 = encode(&g, &params).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let mut v = Mat::zeros(5, 6);
        let mut e = Mat::zeros(5, 5);
        for (new, &old) in perm.iter().enumerate() {
            v.row_mut(new).copy_from_slice(g.v.row(old));
        }
        for (ni, &oi) in perm.iter().enumerate() {
            for (nj, &oj) in perm.iter().enumerate() {
                e.set(ni, nj, g.e.get(oi, oj));
            }
        }
        let e2 = encode(&graph(v, e), &params).unwrap();
        for (a, b) in e1.0.iter().zip(&e2.0) {
            assert_relative_eq!(a, b, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_zero_graphs_encode_identically() {
        let cfg = EncoderConfig {
            n_layers: 2,
            hidden: 8,
            embed_dim: 4,
            init_seed: 7,
        };
        let params = init_params(&cfg, 5);
        let g1 = graph(Mat::zeros(3, 5), Mat::zeros(3, 3));
        let g2 = graph(Mat::zeros(3, 5), Mat::zeros(3, 3));
        assert_eq!(encode(&g1, &params).unwrap(), encode(&g2, &params).unwrap());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let cfg = EncoderConfig {
            n_layers: 2,
            hidden: 6,
            embed_dim: 3,
            init_seed: 2,
        };
        let params = init_params(&cfg, 4);
        let g = random_graph(4, 4, 3);
        let (_, tape) = forward(&g, &params).unwrap();
        let mut grads = EncoderGrads::zeros_like(&params);
        backward(&tape, &params, &[0.0, 0.0, 0.0], &mut grads);
        assert!(grads.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projection_gradient_matches_outer_product() {
        // identity layers pass a single nonnegative vertex through, so the
        // projection sees x directly; quadratic loss gives dW = x^T (emb - t)
        let dim = 3;
        let params = EncoderParams {
            layers: vec![identity_layer(dim)],
            proj: Affine {
                w: Mat::from_rows(&[
                    vec![0.2, -0.4],
                    vec![0.7, 0.1],
                    vec![-0.3, 0.5],
                ]),
                b: vec![0.05, -0.02],
            },
        };
        let x = vec![0.9, 0.4, 1.3];
        let g = graph(Mat::from_rows(&[x.clone()]), Mat::zeros(1, 1));
        let (emb, tape) = forward(&g, &params).unwrap();
        let target = [0.3, -0.1];
        let d_emb: Vec<f64> = emb.0.iter().zip(target).map(|(&e, t)| e - t).collect();
        let mut grads = EncoderGrads::zeros_like(&params);
        backward(&tape, &params, &d_emb, &mut grads);
        for i in 0..3 {
            for j in 0..2 {
                assert_relative_eq!(grads.proj_w.get(i, j), x[i] * d_emb[j], epsilon = 1e-12);
            }
        }
        assert_eq!(grads.proj_b, d_emb);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let cfg = EncoderConfig {
            n_layers: 2,
            hidden: 5,
            embed_dim: 3,
            init_seed: 11,
        };
        let params = init_params(&cfg, 4);
        let g = random_graph(4, 4, 13);

        // loss = sum(emb^2)
        let loss = |p: &EncoderParams| -> f64 {
            encode(&g, p).unwrap().0.iter().map(|&x| x * x).sum()
        };
        let (emb, tape) = forward(&g, &params).unwrap();
        let d_emb: Vec<f64> = emb.0.iter().map(|&x| 2.0 * x).collect();
        let mut grads = EncoderGrads::zeros_like(&params);
        backward(&tape, &params, &d_emb, &mut grads);

        let flat = params.to_flat();
        let gflat = grads.to_flat();
        let h = 1e-5;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            let mut dn = flat.clone();
            dn[i] -= h;
            let fd = (loss(&params.from_flat(&up)) - loss(&params.from_flat(&dn))) / (2.0 * h);
            let denom = fd.abs().max(gflat[i].abs()).max(1e-8);
            assert!(
                (fd - gflat[i]).abs() / denom < 1e-4,
                "param {i}: analytic {} vs fd {fd}",
                gflat[i]
            );
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = EncoderConfig::default();
        let p1 = init_params(&cfg, 42);
        let p2 = init_params(&cfg, 42);
        assert_eq!(p1, p2);
    }

    #[test]
    fn model_file_roundtrip_and_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EncoderConfig {
            n_layers: 1,
            hidden: 4,
            embed_dim: 2,
            init_seed: 1,
        };
        let fc = FeatureConfig {
            m_max_cols: 1,
            k_features: 6,
            n_max_tables: 2,
            norm_stats: vec![(0.0, 1.0); 9],
        };
        let m = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            w_a: 0.5,
            encoder_config: cfg,
            feature_config: fc.clone(),
            params: init_params(&cfg, fc.vertex_dim()),
        };
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        save_model(&m, &p1).unwrap();
        save_model(&m, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let back = load_model(&p1).unwrap();
        assert_eq!(back, m);
    }
}
