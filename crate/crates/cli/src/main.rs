//! Command-line surface for the cardinality-estimator advisor pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure (single-line `error: ...` on
//! stderr), 2 usage errors.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use cardrec::advisor::{detect_drift, drift_threshold, online_adapt, recommend};
use cardrec::corpus::{append_labels, load_dataset};
use cardrec::encoder::{save_model, ModelFile, MODEL_FORMAT_VERSION};
use cardrec::estimators::{default_pool, label_dataset, score_vector, ScoreVector};
use cardrec::featurizer::build_feature_graph;
use cardrec::incremental::incremental_train;
use cardrec::workload::{gen_workload, load_workload, save_workload, WorkloadParams};

use config::RunConfig;
use pipeline::{RunDir, Split};

#[derive(Parser)]
#[command(
    name = "cardrec",
    version,
    about = "Model advisor for cardinality estimation: generate datasets, label them \
             with an estimator pool, train a similarity-aware graph encoder, and \
             recommend the best estimator for new datasets"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding all run artifacts.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for dataset fan-out (0 = available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the train and held-out corpora into the run directory.
    GenData {
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Generate an SPJ workload (with exact cardinalities) for one dataset.
    GenWorkload {
        /// Dataset directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Output file; defaults to `<run>/workloads/<id>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        pred_prob: Option<f64>,
    },
    /// Label one dataset (or every corpus dataset) with the estimator pool.
    Label {
        /// Dataset directory; mutually exclusive with --all.
        #[arg(long, conflicts_with = "all")]
        dataset: Option<PathBuf>,
        /// Workload file; generated on the fly when omitted.
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Label store to append to; defaults to `<run>/labels.jsonl`.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Label both corpora under the run directory.
        #[arg(long)]
        all: bool,
    },
    /// Train the graph encoder for one weight or the whole configured grid.
    Train {
        /// Accuracy weight in [0, 1]; trains the full grid when omitted.
        #[arg(long)]
        wa: Option<f64>,
    },
    /// Incremental learning: cross-validation feedback, Mixup, fine-tune.
    CrossTrain {
        #[arg(long, default_value_t = 1.0)]
        wa: f64,
    },
    /// Recommend an estimator for a dataset.
    Recommend {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        wa: f64,
        /// Neighbors to average; defaults to the configured value.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Check whether a dataset drifts outside the labeled corpus.
    DriftCheck {
        #[arg(long)]
        dataset: PathBuf,
        /// Label, append, and fine-tune when drift is detected.
        #[arg(long)]
        adapt: bool,
    },
    /// Run every selection strategy over the held-out corpus.
    Evaluate,
    /// Full pipeline: generate, label, train, evaluate, report.
    Bench {
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let default_path = cli.run_dir.join("config.toml");
            if default_path.exists() {
                RunConfig::load(&default_path)?
            } else {
                RunConfig::default()
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .context("building worker pool")?;
    }
    let run = RunDir::new(&cli.run_dir);

    match cli.cmd {
        Cmd::GenData {
            train_count,
            test_count,
        } => {
            let mut cfg = cfg;
            if let Some(n) = train_count {
                cfg.gen.train_count = n;
            }
            if let Some(n) = test_count {
                cfg.gen.test_count = n;
            }
            pipeline::write_manifest(&cfg, &run)?;
            let train = pipeline::gen_corpus(&cfg, Split::Train, cfg.gen.train_count)?;
            pipeline::save_corpus(&run.datasets(Split::Train), &train)?;
            let test = pipeline::gen_corpus(&cfg, Split::Test, cfg.gen.test_count)?;
            pipeline::save_corpus(&run.datasets(Split::Test), &test)?;
            println!(
                "generated {} training and {} held-out datasets under {}",
                train.len(),
                test.len(),
                run.root.display()
            );
        }

        Cmd::GenWorkload {
            dataset,
            out,
            n_train,
            n_test,
            pred_prob,
        } => {
            let d = load_dataset(&dataset).map_err(pipeline::core_err)?;
            let mut wl: WorkloadParams = (&cfg.workload).into();
            if let Some(n) = n_train {
                wl.n_train = n;
            }
            if let Some(n) = n_test {
                wl.n_test = n;
            }
            if let Some(p) = pred_prob {
                wl.pred_prob = p;
            }
            let mut rng = pipeline::workload_rng(&cfg, &d.id);
            let w = gen_workload(&d, &wl, &mut rng).map_err(pipeline::core_err)?;
            let out = out.unwrap_or_else(|| run.workloads().join(format!("{}.jsonl", d.id)));
            save_workload(&w, &out).map_err(pipeline::core_err)?;
            println!(
                "workload for {}: {} train + {} test queries -> {}",
                d.id,
                w.train.len(),
                w.test.len(),
                out.display()
            );
        }

        Cmd::Label {
            dataset,
            workload,
            store,
            all,
        } => {
            if all {
                let train = pipeline::load_corpus(&run.datasets(Split::Train))?;
                pipeline::label_split(&cfg, &run, &train, Split::Train)?;
                let test = pipeline::load_corpus(&run.datasets(Split::Test))?;
                pipeline::label_split(&cfg, &run, &test, Split::Test)?;
                println!(
                    "labeled {} + {} datasets ({})",
                    train.len(),
                    test.len(),
                    pipeline::COST_UNIT_NOTE
                );
            } else {
                let dataset = dataset.ok_or_else(|| anyhow!("--dataset or --all required"))?;
                let d = load_dataset(&dataset).map_err(pipeline::core_err)?;
                let records = match workload {
                    Some(path) => {
                        let w = load_workload(&path).map_err(pipeline::core_err)?;
                        let out = label_dataset(&d, &default_pool(), &w, pipeline::unit_of(&cfg))
                            .map_err(pipeline::core_err)?;
                        if let Some(f) = out.failures.first() {
                            bail!("estimator '{}' failed: {}", f.estimator_id, f.detail);
                        }
                        out.records
                    }
                    None => pipeline::label_one(&cfg, &d, &default_pool())?.1,
                };
                let store = store.unwrap_or_else(|| run.labels(Split::Train));
                append_labels(&store, &records).map_err(pipeline::core_err)?;
                println!("labeled {} -> {} records appended", d.id, records.len());
            }
        }

        Cmd::Train { wa } => {
            let corpus = pipeline::load_corpus(&run.datasets(Split::Train))?;
            let labels = pipeline::load_labels(&run, Split::Train)?;
            let wa_list: Vec<f64> = match wa {
                Some(w) => vec![w],
                None => cfg.evaluate.wa_grid.clone(),
            };
            let t0 = Instant::now();
            let trained = pipeline::train_models(&cfg, &run, &corpus, &labels, &wa_list)?;
            for (key, pos_frac) in &trained {
                println!(
                    "trained encoder wa_{key} (positive-pair fraction {pos_frac:.3}) -> {}",
                    run.model_file(*key).display()
                );
            }
            pipeline::append_timings(
                &run,
                &[("train_total_s".into(), t0.elapsed().as_secs_f64())],
            )?;
        }

        Cmd::CrossTrain { wa } => {
            let corpus = pipeline::load_corpus(&run.datasets(Split::Train))?;
            let labels = pipeline::load_labels(&run, Split::Train)?;
            let models = pipeline::load_models(&run)?;
            let (key, model) = pipeline::nearest_model(&models, wa)?;
            let graphs = corpus
                .iter()
                .map(|d| build_feature_graph(d, &model.feature_config))
                .collect::<cardrec::Result<Vec<_>>>()
                .map_err(pipeline::core_err)?;
            let svs = corpus
                .iter()
                .map(|d| score_vector(&labels[&d.id], key as f64 / 10.0))
                .collect::<cardrec::Result<Vec<ScoreVector>>>()
                .map_err(pipeline::core_err)?;
            let inc_cfg = cfg.incremental.to_config(cfg.seed ^ 0x696e63);
            let dml_cfg = cfg.dml.to_config(key as f64 / 10.0, cfg.seed ^ 0x696e64);
            let mut params = model.params.clone();
            let outcome = incremental_train(&graphs, &svs, &mut params, &inc_cfg, &dml_cfg)
                .map_err(pipeline::core_err)?;
            let updated = ModelFile {
                format_version: MODEL_FORMAT_VERSION,
                w_a: key as f64 / 10.0,
                encoder_config: model.encoder_config,
                feature_config: model.feature_config.clone(),
                params,
            };
            save_model(&updated, &run.model_file(key)).map_err(pipeline::core_err)?;
            let before = outcome.before.mean_d_error();
            let mut csv = String::from("metric,value\n");
            csv.push_str(&format!("mean_cv_d_error_before,{before}\n"));
            csv.push_str(&format!(
                "mean_cv_d_error_after,{}\n",
                outcome.after_mean_d_error
            ));
            csv.push_str(&format!("feedback_count,{}\n", outcome.before.feedback.len()));
            csv.push_str(&format!("synthetic_count,{}\n", outcome.synthetic_count));
            std::fs::create_dir_all(run.reports()).context("creating reports dir")?;
            let report_path = run.reports().join(format!("cross_train_wa_{key}.csv"));
            std::fs::write(&report_path, csv).context("writing cross-train report")?;
            println!(
                "cross-train wa_{key}: feedback {} / {} datasets, {} synthetic samples, \
                 mean CV D-error {before:.4} -> {:.4} ({})",
                outcome.before.feedback.len(),
                corpus.len(),
                outcome.synthetic_count,
                outcome.after_mean_d_error,
                report_path.display()
            );
        }

        Cmd::Recommend { dataset, wa, k } => {
            let k = k.unwrap_or(cfg.evaluate.k);
            let d = load_dataset(&dataset).map_err(pipeline::core_err)?;
            let (key, rcs) = pipeline::rcs_from_run(&run, wa)?;
            let rec = recommend(&d, &rcs, k, wa).map_err(pipeline::core_err)?;
            println!("chosen: {}", rec.chosen);
            let scores: Vec<String> = rec
                .averaged_scores
                .0
                .iter()
                .map(|s| format!("{s:.4}"))
                .collect();
            println!("scores: [{}]", scores.join(", "));
            println!("neighbors: {}", rec.neighbor_ids.join(", "));
            println!("model: wa_{key} (requested w_a {wa}), k={k}");
        }

        Cmd::DriftCheck { dataset, adapt } => {
            let d = load_dataset(&dataset).map_err(pipeline::core_err)?;
            let (key, mut rcs) = pipeline::rcs_from_run(&run, 1.0)?;
            let threshold = drift_threshold(&rcs).map_err(pipeline::core_err)?;
            let drifted = detect_drift(&d, &rcs, threshold).map_err(pipeline::core_err)?;
            println!("drift: {drifted}");
            println!("threshold: {threshold:.6}");
            if drifted && adapt {
                let dml_cfg = cfg.dml.to_config(key as f64 / 10.0, cfg.seed ^ 0x61646170);
                let small = cardrec::dml::DmlConfig {
                    epochs: cfg.incremental.extra_epochs,
                    ..dml_cfg
                };
                online_adapt(
                    &d,
                    &mut rcs,
                    &default_pool(),
                    &(&cfg.workload).into(),
                    pipeline::unit_of(&cfg),
                    &small,
                )
                .map_err(pipeline::core_err)?;
                println!(
                    "adapted: candidate set now has {} entries",
                    rcs.entries.len()
                );
            }
        }

        Cmd::Evaluate => {
            let train = pipeline::load_corpus(&run.datasets(Split::Train))?;
            let train_labels = pipeline::load_labels(&run, Split::Train)?;
            let test = pipeline::load_corpus(&run.datasets(Split::Test))?;
            let test_labels = pipeline::load_labels(&run, Split::Test)?;
            let artifacts =
                pipeline::run_evaluation(&cfg, &run, &train, &train_labels, &test, &test_labels)?;
            pipeline::append_timings(&run, &artifacts.timings)?;
            print!("{}", pipeline::summary_table(&artifacts.report));
        }

        Cmd::Bench {
            train_count,
            test_count,
        } => {
            let mut cfg = cfg;
            if let Some(n) = train_count {
                cfg.gen.train_count = n;
            }
            if let Some(n) = test_count {
                cfg.gen.test_count = n;
            }
            bench(&cfg, &run)?;
        }
    }
    Ok(())
}

fn bench(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    pipeline::write_manifest(cfg, run)?;
    let mut timings: Vec<(String, f64)> = Vec::new();

    let t0 = Instant::now();
    let train = pipeline::gen_corpus(cfg, Split::Train, cfg.gen.train_count)?;
    pipeline::save_corpus(&run.datasets(Split::Train), &train)?;
    let test = pipeline::gen_corpus(cfg, Split::Test, cfg.gen.test_count)?;
    pipeline::save_corpus(&run.datasets(Split::Test), &test)?;
    timings.push(("generation_s".into(), t0.elapsed().as_secs_f64()));
    println!(
        "generated {} train + {} test datasets",
        train.len(),
        test.len()
    );

    let t1 = Instant::now();
    let train_labels = pipeline::label_split(cfg, run, &train, Split::Train)?;
    let test_labels = pipeline::label_split(cfg, run, &test, Split::Test)?;
    timings.push(("labeling_s".into(), t1.elapsed().as_secs_f64()));
    println!(
        "labeled both corpora in {:.1}s ({})",
        t1.elapsed().as_secs_f64(),
        pipeline::COST_UNIT_NOTE
    );

    let t2 = Instant::now();
    let grid = cfg.evaluate.wa_grid.clone();
    pipeline::train_models(cfg, run, &train, &train_labels, &grid)?;
    timings.push(("encoder_training_s".into(), t2.elapsed().as_secs_f64()));
    println!(
        "trained {} encoders in {:.1}s",
        grid.len(),
        t2.elapsed().as_secs_f64()
    );

    let t3 = Instant::now();
    let artifacts =
        pipeline::run_evaluation(cfg, run, &train, &train_labels, &test, &test_labels)?;
    timings.push(("evaluation_s".into(), t3.elapsed().as_secs_f64()));
    timings.extend(artifacts.timings);
    pipeline::append_timings(run, &timings)?;

    print!("{}", pipeline::summary_table(&artifacts.report));
    for (name, secs) in &timings {
        println!("{name}: {secs:.3}s");
    }
    println!("reports under {}", run.reports().display());
    Ok(())
}
