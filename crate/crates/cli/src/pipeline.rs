//! Pipeline steps shared by the subcommands: corpus generation, labeling,
//! encoder training, evaluation, and the run-directory layout.
//!
//! Layout under a run directory:
//!
//! ```text
//! run/
//!   run.json                  manifest: version, seed, config, counts
//!   config.toml               effective configuration
//!   datasets/<id>/            training corpus
//!   test-datasets/<id>/       held-out corpus
//!   workloads/<id>.jsonl      per-dataset workloads
//!   labels.jsonl              training labels (append-only)
//!   test-labels.jsonl         held-out ground-truth labels
//!   models/wa_<key>.json      encoder per accuracy-weight decile
//!   models/wa_<key>.loss.csv  training loss trace
//!   reports/evaluation.csv    strategy x weight summary
//!   reports/d_errors.csv      per-dataset D-errors
//!   reports/summary.txt       human-readable table
//!   timings.txt               wall-clock totals (not deterministic)
//! ```
//!
//! Everything except `timings.txt` is byte-deterministic for a fixed seed in
//! cost-units mode.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cardrec::advisor::{build_rcs, Rcs};
use cardrec::baselines::{
    evaluate, wa_key, EvalContext, EvalReport, Strategy, ACCURACY_EPSILONS,
};
use cardrec::corpus::{
    append_labels, labels_by_dataset, load_dataset, read_labels, save_dataset, Dataset,
    LabelRecord, LatencyUnit,
};
use cardrec::datagen::gen_multi_table;
use cardrec::dml::train_encoder;
use cardrec::encoder::{load_model, save_model, EncoderParams, ModelFile, MODEL_FORMAT_VERSION};
use cardrec::error::Error as CoreError;
use cardrec::estimators::{default_pool, label_dataset, score_vector, EstimatorSpec, ScoreVector};
use cardrec::featurizer::{build_feature_graph, fit_normalization, FeatureGraph};
use cardrec::workload::{gen_workload, Workload, WorkloadParams};

use crate::config::RunConfig;

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn datasets(&self, split: Split) -> PathBuf {
        match split {
            Split::Train => self.root.join("datasets"),
            Split::Test => self.root.join("test-datasets"),
        }
    }

    pub fn workloads(&self) -> PathBuf {
        self.root.join("workloads")
    }

    pub fn labels(&self, split: Split) -> PathBuf {
        match split {
            Split::Train => self.root.join("labels.jsonl"),
            Split::Test => self.root.join("test-labels.jsonl"),
        }
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_file(&self, key: u32) -> PathBuf {
        self.models().join(format!("wa_{key}.json"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// Seed-stream offset so the two splits never share RNG streams.
    fn stream_base(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1 << 32,
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

/// Assign each corpus index to a regime proportionally to regime weights.
fn regime_for(cfg: &RunConfig, index: usize, count: usize) -> usize {
    let total: f64 = cfg.regimes.iter().map(|r| r.weight.max(0.0)).sum();
    if total <= 0.0 || cfg.regimes.is_empty() {
        return 0;
    }
    let frac = (index as f64 + 0.5) / count.max(1) as f64;
    let mut cum = 0.0;
    for (ri, r) in cfg.regimes.iter().enumerate() {
        cum += r.weight.max(0.0) / total;
        if frac <= cum {
            return ri;
        }
    }
    cfg.regimes.len() - 1
}

/// Generate one split of the corpus; regime mix and all draws are functions
/// of (config, seed) only.
pub fn gen_corpus(cfg: &RunConfig, split: Split, count: usize) -> Result<Vec<Dataset>> {
    if cfg.regimes.is_empty() {
        bail!("config has no regimes");
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let ri = regime_for(cfg, i, count);
            let regime = &cfg.regimes[ri];
            let stream = split.stream_base() + i as u64;
            let params = regime.gen_params(cfg.seed ^ fnv1a(split.prefix()), stream);
            let id = format!("{}-{i:04}", split.prefix());
            let mut rng = params.rng_for(stream);
            gen_multi_table(&id, &params, &mut rng).map_err(|e| anyhow!(e))
        })
        .collect()
}

pub fn save_corpus(dir: &Path, corpus: &[Dataset]) -> Result<()> {
    for d in corpus {
        save_dataset(d, &dir.join(&d.id)).with_context(|| format!("saving dataset {}", d.id))?;
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Vec<Dataset>> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus dir {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids.iter()
        .map(|id| load_dataset(&dir.join(id)).with_context(|| format!("loading dataset {id}")))
        .collect()
}

pub fn workload_rng(cfg: &RunConfig, dataset_id: &str) -> rand_chacha::ChaCha8Rng {
    <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
        cfg.seed ^ fnv1a(dataset_id) ^ 0x776f726b,
    )
}

/// Generate a workload and label one dataset with the full pool.
pub fn label_one(
    cfg: &RunConfig,
    d: &Dataset,
    pool: &[EstimatorSpec],
) -> Result<(Workload, Vec<LabelRecord>)> {
    let wl: WorkloadParams = (&cfg.workload).into();
    let mut rng = workload_rng(cfg, &d.id);
    let w = gen_workload(d, &wl, &mut rng).map_err(|e| anyhow!(e))?;
    let out = label_dataset(d, pool, &w, cfg.latency_unit.into()).map_err(|e| anyhow!(e))?;
    if let Some(f) = out.failures.first() {
        bail!(
            "estimator '{}' failed to train on {}: {}",
            f.estimator_id,
            d.id,
            f.detail
        );
    }
    Ok((w, out.records))
}

/// Label a whole split in parallel; workloads and the label store are
/// written in corpus order so the files are deterministic.
pub fn label_split(
    cfg: &RunConfig,
    run: &RunDir,
    corpus: &[Dataset],
    split: Split,
) -> Result<BTreeMap<String, Vec<LabelRecord>>> {
    let pool = default_pool();
    let results: Vec<(Workload, Vec<LabelRecord>)> = corpus
        .par_iter()
        .map(|d| label_one(cfg, d, &pool))
        .collect::<Result<_>>()?;
    fs::create_dir_all(run.workloads()).context("creating workloads dir")?;
    let store = run.labels(split);
    if store.exists() {
        fs::remove_file(&store).context("clearing label store")?;
    }
    let mut map = BTreeMap::new();
    for (d, (w, records)) in corpus.iter().zip(results) {
        cardrec::workload::save_workload(&w, &run.workloads().join(format!("{}.jsonl", d.id)))
            .map_err(|e| anyhow!(e))?;
        append_labels(&store, &records).map_err(|e| anyhow!(e))?;
        map.insert(d.id.clone(), records);
    }
    Ok(map)
}

pub fn load_labels(run: &RunDir, split: Split) -> Result<BTreeMap<String, Vec<LabelRecord>>> {
    let records = read_labels(&run.labels(split)).map_err(|e| anyhow!(e))?;
    Ok(labels_by_dataset(&records))
}

/// Train one encoder per accuracy weight and persist the model files and
/// loss traces.
pub fn train_models(
    cfg: &RunConfig,
    run: &RunDir,
    corpus: &[Dataset],
    labels: &BTreeMap<String, Vec<LabelRecord>>,
    wa_list: &[f64],
) -> Result<Vec<(u32, f64)>> {
    let feature_cfg = fit_normalization(corpus).map_err(|e| anyhow!(e))?;
    let graphs: Vec<FeatureGraph> = corpus
        .iter()
        .map(|d| build_feature_graph(d, &feature_cfg).map_err(|e| anyhow!(e)))
        .collect::<Result<_>>()?;
    fs::create_dir_all(run.models()).context("creating models dir")?;
    let mut trained = Vec::new();
    for &wa in wa_list {
        let key = wa_key(wa);
        let svs: Vec<ScoreVector> = corpus
            .iter()
            .map(|d| {
                let recs = labels
                    .get(&d.id)
                    .ok_or_else(|| anyhow!("no labels for dataset {}", d.id))?;
                score_vector(recs, wa).map_err(|e| anyhow!(e))
            })
            .collect::<Result<_>>()?;
        let enc_cfg = cfg.encoder.to_config(cfg.seed ^ key as u64);
        let dml_cfg = cfg.dml.to_config(wa, cfg.seed ^ ((key as u64) << 8));
        let (params, trace) =
            train_encoder(&graphs, &svs, &dml_cfg, &enc_cfg).map_err(|e| anyhow!(e))?;
        let model = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            w_a: wa,
            encoder_config: enc_cfg,
            feature_config: feature_cfg.clone(),
            params,
        };
        save_model(&model, &run.model_file(key)).map_err(|e| anyhow!(e))?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in trace.epoch_loss.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i + 1, l));
        }
        fs::write(run.models().join(format!("wa_{key}.loss.csv")), csv)
            .context("writing loss trace")?;
        trained.push((key, trace.positive_pair_fraction));
    }
    Ok(trained)
}

pub fn load_models(run: &RunDir) -> Result<BTreeMap<u32, ModelFile>> {
    let dir = run.models();
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(key) = name
            .strip_prefix("wa_")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<u32>().ok())
        {
            out.insert(key, load_model(&path).map_err(|e| anyhow!(e))?);
        }
    }
    if out.is_empty() {
        bail!("no model files under {}", dir.display());
    }
    Ok(out)
}

/// Model whose weight key is nearest to the requested weight.
pub fn nearest_model(models: &BTreeMap<u32, ModelFile>, wa: f64) -> Result<(u32, &ModelFile)> {
    let key = cardrec::baselines::nearest_wa_key(models.keys().copied(), wa)
        .ok_or_else(|| anyhow!("empty model store"))?;
    Ok((key, &models[&key]))
}

/// Assemble the candidate set from a run directory for one weight setting.
pub fn rcs_from_run(run: &RunDir, wa: f64) -> Result<(u32, Rcs)> {
    let models = load_models(run)?;
    let (key, model) = nearest_model(&models, wa)?;
    let corpus = load_corpus(&run.datasets(Split::Train))?;
    let labels = load_labels(run, Split::Train)?;
    let rcs = build_rcs(
        &corpus,
        &labels,
        model.encoder_config,
        model.params.clone(),
        model.feature_config.clone(),
        key as f64 / 10.0,
    )
    .map_err(|e| anyhow!(e))?;
    Ok((key, rcs))
}

pub struct EvalArtifacts {
    pub report: EvalReport,
    pub timings: Vec<(String, f64)>,
}

/// Run every strategy over the held-out corpus and write the report files.
pub fn run_evaluation(
    cfg: &RunConfig,
    run: &RunDir,
    train_corpus: &[Dataset],
    train_labels: &BTreeMap<String, Vec<LabelRecord>>,
    test_corpus: &[Dataset],
    test_labels: &BTreeMap<String, Vec<LabelRecord>>,
) -> Result<EvalArtifacts> {
    let models = load_models(run)?;
    let feature_cfg = models
        .values()
        .next()
        .map(|m| m.feature_config.clone())
        .ok_or_else(|| anyhow!("empty model store"))?;
    let encoders: BTreeMap<u32, (cardrec::encoder::EncoderConfig, EncoderParams)> = models
        .iter()
        .map(|(&k, m)| (k, (m.encoder_config, m.params.clone())))
        .collect();
    let pool = default_pool();
    let enc_cfg = cfg.encoder.to_config(cfg.seed ^ 0x6d6c70);
    let dml_cfg = cfg.dml.to_config(1.0, cfg.seed ^ 0x6d6c71);
    let ctx = EvalContext {
        pool: &pool,
        feature_cfg: &feature_cfg,
        train_corpus,
        train_labels,
        test_corpus,
        test_labels,
        encoders: &encoders,
        wl_params: (&cfg.workload).into(),
        unit: cfg.latency_unit.into(),
        dml_cfg,
        enc_cfg,
        seed: cfg.seed,
    };
    let strategies = [
        Strategy::Advisor { k: cfg.evaluate.k },
        Strategy::Mlp,
        Strategy::Rule,
        Strategy::RawKnn { k: cfg.evaluate.k },
        Strategy::Sampling {
            rate: cfg.evaluate.sampling_rate,
        },
        Strategy::Oracle,
    ];

    // advisor per-dataset inference time vs the sampling baseline's
    let mut timings = Vec::new();
    {
        let (_, rcs) = rcs_from_run(run, 1.0)?;
        let t0 = Instant::now();
        for d in test_corpus {
            cardrec::advisor::recommend(d, &rcs, cfg.evaluate.k.min(rcs.entries.len()), 1.0)
                .map_err(|e| anyhow!(e))?;
        }
        timings.push((
            "advisor_inference_per_dataset_s".into(),
            t0.elapsed().as_secs_f64() / test_corpus.len().max(1) as f64,
        ));
        let t1 = Instant::now();
        cardrec::baselines::sampling_label(
            &test_corpus[0],
            &pool,
            cfg.evaluate.sampling_rate,
            &ctx.wl_params,
            ctx.unit,
            cfg.seed,
        )
        .map_err(|e| anyhow!(e))?;
        timings.push((
            "sampling_select_per_dataset_s".into(),
            t1.elapsed().as_secs_f64(),
        ));
    }

    let report = evaluate(&ctx, &strategies, &cfg.evaluate.wa_grid).map_err(|e| anyhow!(e))?;
    write_reports(run, &report)?;
    Ok(EvalArtifacts { report, timings })
}

pub fn write_reports(run: &RunDir, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(run.reports()).context("creating reports dir")?;
    let mut csv = String::from("strategy,w_a,mean_d_error,acc_0.10,acc_0.15,acc_0.20\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.strategy,
            row.w_a,
            row.mean_d_error,
            row.accuracy[0],
            row.accuracy[1],
            row.accuracy[2]
        ));
    }
    fs::write(run.reports().join("evaluation.csv"), csv).context("writing evaluation.csv")?;

    let mut derrs = String::from("strategy,w_a,dataset_index,d_error\n");
    for row in &report.rows {
        for (i, d) in row.d_errors.iter().enumerate() {
            derrs.push_str(&format!("{},{},{},{}\n", row.strategy, row.w_a, i, d));
        }
    }
    fs::write(run.reports().join("d_errors.csv"), derrs).context("writing d_errors.csv")?;

    fs::write(run.reports().join("summary.txt"), summary_table(report))
        .context("writing summary.txt")?;
    Ok(())
}

pub fn summary_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>5} {:>14} {:>9} {:>9} {:>9}\n",
        "strategy", "w_a", "mean D-error", "acc@0.10", "acc@0.15", "acc@0.20"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<22} {:>5.2} {:>14.4} {:>8.1}% {:>8.1}% {:>8.1}%\n",
            row.strategy,
            row.w_a,
            row.mean_d_error,
            row.accuracy[0] * 100.0,
            row.accuracy[1] * 100.0,
            row.accuracy[2] * 100.0,
        ));
    }
    debug_assert_eq!(ACCURACY_EPSILONS.len(), 3);
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub app_version: String,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub pool: Vec<String>,
    pub config: RunConfig,
}

pub fn write_manifest(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    fs::create_dir_all(&run.root).context("creating run dir")?;
    let manifest = RunManifest {
        format_version: 1,
        app_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        train_count: cfg.gen.train_count,
        test_count: cfg.gen.test_count,
        pool: default_pool().into_iter().map(|s| s.id).collect(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    fs::write(run.root.join("run.json"), json + "\n").context("writing run.json")?;
    cfg.save(&run.root.join("config.toml"))
}

/// Convert a core error into anyhow with its display chain intact.
pub fn core_err(e: CoreError) -> anyhow::Error {
    anyhow!(e)
}

pub const COST_UNIT_NOTE: &str =
    "latency figures are deterministic cost units unless latency_unit = \"ms\"";

pub fn append_timings(run: &RunDir, lines: &[(String, f64)]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(run.root.join("timings.txt"))
        .context("opening timings.txt")?;
    for (name, secs) in lines {
        writeln!(f, "{name}={secs:.6}").context("writing timings")?;
    }
    Ok(())
}

pub fn unit_of(cfg: &RunConfig) -> LatencyUnit {
    cfg.latency_unit.into()
}
