use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use newsgraph::gnn::{Checkpoint, ConvType, Readout};
use newsgraph::harness::{
    compute_metrics, prepare_inputs, predict, results_table, run_matrix, stratified_kfold, train_fold, FoldSplit,
    InputMode, MatrixConfig, Metrics, ModelOptions, TrainConfig,
};
use newsgraph::hetgraph::HeteroGraph;
use newsgraph::ingest::{build_dataset, load_corpus, BuildOptions, EmbedderSpec, FeatureMode, MissPolicy, Setup};
use newsgraph::synth::{generate_corpus, SynthConfig};
use newsgraph::{Error, Result};

#[derive(Parser)]
#[command(name = "newsgraph", version, about = "Fake-news detection on per-article social-context graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with label-dependent spreading statistics.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        articles: usize,
        #[arg(long, default_value_t = 0.5)]
        fake_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        dtext: Option<usize>,
        /// Label-independent data: no topic bias and identical count distributions.
        #[arg(long)]
        null_signal: bool,
    },
    /// Build one graph per kept article for a setup and write them with a fold split.
    BuildGraphs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        setup: u8,
        #[arg(long, default_value = "text")]
        features: String,
        #[arg(long, default_value_t = 64)]
        dtext: usize,
        /// `hashing` or `precomputed:FILE`.
        #[arg(long, default_value = "hashing")]
        embedder: String,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        fold_seed: u64,
    },
    /// Train one model on a graph directory, optionally holding out a fold.
    Train {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        conv: String,
        #[arg(long, default_value = "hetero")]
        mode: String,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 8e-5)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value = "news_node")]
        readout: String,
        #[arg(long)]
        no_class_weights: bool,
        /// Leave this fold of the split out of training.
        #[arg(long)]
        holdout: Option<usize>,
        /// Fold file; defaults to `folds.json` in the graph directory.
        #[arg(long)]
        folds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test folds of a split.
    Evaluate {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        /// Only this fold; defaults to the checkpoint's held-out fold, else every fold.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Cross-validate every cell of a setup x features x graph mode x conv matrix.
    RunMatrix {
        #[arg(long)]
        corpus: PathBuf,
        /// YAML or JSON matrix configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plain-text results table; defaults to the report path with a `.txt` extension.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
struct GraphManifest {
    setup: Setup,
    features: FeatureMode,
    embedder: EmbedderSpec,
    article_ids: Vec<String>,
    labels: Vec<usize>,
    skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct FoldFile {
    article_ids: Vec<String>,
    split: FoldSplit,
}

#[derive(Serialize)]
struct FoldEval {
    fold: usize,
    metrics: Metrics,
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    graph_mode: String,
    folds: Vec<FoldEval>,
    overall: Metrics,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}

fn parse_embedder(s: &str, dim: usize) -> Result<EmbedderSpec> {
    match s.split_once(':') {
        None if s == "hashing" => Ok(EmbedderSpec::hashing(dim)),
        Some(("precomputed", file)) => Ok(EmbedderSpec::Precomputed {
            path: PathBuf::from(file),
            on_miss: MissPolicy::Error,
        }),
        _ => Err(Error::Config(format!("unknown embedder {s:?}; expected hashing or precomputed:FILE"))),
    }
}

fn parse_readout(s: &str) -> Result<Readout> {
    match s {
        "news_node" | "news" => Ok(Readout::NewsNode),
        "mean_all" | "mean" => Ok(Readout::MeanAll),
        _ => Err(Error::Config(format!("unknown readout {s:?}; expected news_node or mean_all"))),
    }
}

fn load_graphs(dir: &Path) -> Result<(GraphManifest, Vec<HeteroGraph>)> {
    let manifest: GraphManifest = read_json(&dir.join("manifest.json"))?;
    let graphs = manifest
        .article_ids
        .iter()
        .map(|id| read_json(&dir.join("graphs").join(format!("{id}.json"))))
        .collect::<Result<Vec<HeteroGraph>>>()?;
    Ok((manifest, graphs))
}

fn load_folds(path: &Path, manifest: &GraphManifest) -> Result<FoldSplit> {
    let f: FoldFile = read_json(path)?;
    if f.article_ids != manifest.article_ids {
        return Err(Error::Input(format!("{} was made for a different graph set", path.display())));
    }
    f.split.check_partition(manifest.article_ids.len())?;
    Ok(f.split)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth {
            out,
            articles,
            fake_frac,
            seed,
            beta,
            dtext,
            null_signal,
        } => {
            let mut cfg = if null_signal { SynthConfig::null_signal() } else { SynthConfig::default() };
            cfg.n_articles = articles;
            cfg.fake_fraction = fake_frac;
            cfg.seed = seed;
            if let Some(b) = beta {
                cfg.beta = b;
            }
            if let Some(d) = dtext {
                cfg.d_text = d;
            }
            let book = generate_corpus(&cfg, &out)?;
            let fake = book.articles.iter().filter(|a| a.label.class() == 1).count();
            println!("wrote {} articles ({fake} fake) to {}", book.articles.len(), out.display());
        }
        Command::BuildGraphs {
            corpus,
            out,
            setup,
            features,
            dtext,
            embedder,
            folds,
            fold_seed,
        } => {
            let setup = Setup::from_number(setup)?;
            let features: FeatureMode = features.parse()?;
            let spec = parse_embedder(&embedder, dtext)?;
            let corpus = load_corpus(&corpus)?;
            for w in &corpus.warnings {
                log::warn!("{w}");
            }
            let ds = build_dataset(&corpus, setup, &BuildOptions::with_features(features), spec.build()?.as_ref())?;
            for g in &ds.graphs {
                write_json(&out.join("graphs").join(format!("{}.json", g.article_id)), g)?;
            }
            let manifest = GraphManifest {
                setup,
                features,
                embedder: spec,
                article_ids: ds.graphs.iter().map(|g| g.article_id.clone()).collect(),
                labels: ds.labels(),
                skipped: ds.skipped.len(),
            };
            let split = stratified_kfold(&manifest.labels, folds, fold_seed)?;
            write_json(
                &out.join("folds.json"),
                &FoldFile {
                    article_ids: manifest.article_ids.clone(),
                    split,
                },
            )?;
            write_json(&out.join("manifest.json"), &manifest)?;
            println!(
                "built {} {setup} graphs ({} skipped, {} corpus warnings) in {}",
                ds.graphs.len(),
                ds.skipped.len(),
                corpus.warning_count(),
                out.display()
            );
        }
        Command::Train {
            graphs,
            conv,
            mode,
            epochs,
            batch,
            lr,
            seed,
            hidden,
            heads,
            readout,
            no_class_weights,
            holdout,
            folds,
            out,
        } => {
            let conv: ConvType = conv.parse()?;
            let mode: InputMode = mode.parse()?;
            let (manifest, hetero) = load_graphs(&graphs)?;
            let (schema, inputs) = prepare_inputs(&hetero, mode)?;
            let options = ModelOptions {
                hidden_dim: hidden,
                heads,
                readout: parse_readout(&readout)?,
                ..ModelOptions::default()
            };
            let model = newsgraph::gnn::Model::new(options.config(conv, mode.graph_mode()), schema)?;
            let train_idx: Vec<usize> = match holdout {
                None => (0..inputs.len()).collect(),
                Some(k) => {
                    let split = load_folds(&folds.unwrap_or_else(|| graphs.join("folds.json")), &manifest)?;
                    if k >= split.k {
                        return Err(Error::Config(format!("holdout fold {k} of {}", split.k)));
                    }
                    split.train(k)
                }
            };
            let cfg = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                use_class_weights: !no_class_weights,
                seed,
            };
            let train: Vec<_> = train_idx.iter().map(|&i| &inputs[i]).collect();
            let outcome = train_fold(&model, &train, &cfg, seed)?;
            let final_loss = outcome.final_loss();
            let mut ck = Checkpoint::new(&model, outcome.params).with_tag("graph_mode", mode.name());
            if let Some(k) = holdout {
                ck = ck.with_tag("holdout", k.to_string());
            }
            ck.save(&out)?;
            println!(
                "trained {conv} ({mode}) on {} graphs: final loss {:.4}, checkpoint {}",
                train.len(),
                final_loss,
                out.display()
            );
        }
        Command::Evaluate { graphs, ckpt, folds, fold } => {
            let ck = Checkpoint::load(&ckpt)?;
            let model = ck.model()?;
            let mode: InputMode = ck
                .tags
                .get("graph_mode")
                .map(String::as_str)
                .unwrap_or(match model.config().mode {
                    newsgraph::gnn::GraphMode::Hetero => "hetero",
                    newsgraph::gnn::GraphMode::Homo => "homo_pad",
                })
                .parse()?;
            let (manifest, hetero) = load_graphs(&graphs)?;
            let split = load_folds(&folds, &manifest)?;
            let (_, inputs) = prepare_inputs(&hetero, mode)?;
            let holdout = ck.tags.get("holdout").and_then(|h| h.parse::<usize>().ok());
            let selected: Vec<usize> = match fold.or(holdout) {
                Some(k) if k < split.k => vec![k],
                Some(k) => return Err(Error::Config(format!("fold {k} of {}", split.k))),
                None => (0..split.k).collect(),
            };
            let mut per_fold = Vec::new();
            let (mut all_labels, mut all_preds) = (Vec::new(), Vec::new());
            for k in selected {
                let test: Vec<_> = split.test(k).iter().map(|&i| &inputs[i]).collect();
                let preds = predict(&model, &ck.params, &test)?;
                let labels: Vec<usize> = test.iter().map(|g| g.label).collect();
                per_fold.push(FoldEval {
                    fold: k,
                    metrics: compute_metrics(&labels, &preds)?,
                });
                all_labels.extend(labels);
                all_preds.extend(preds);
            }
            let report = EvalReport {
                checkpoint: ckpt.display().to_string(),
                graph_mode: mode.name().to_string(),
                folds: per_fold,
                overall: compute_metrics(&all_labels, &all_preds)?,
            };
            let text = serde_json::to_string_pretty(&report).expect("report serialises");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
        Command::RunMatrix {
            corpus,
            config,
            out,
            table,
        } => {
            let cfg = MatrixConfig::load(&config)?;
            let corpus = load_corpus(&corpus)?;
            let report = run_matrix(&corpus, &cfg)?;
            write_json(&out, &report)?;
            let text = results_table(&report);
            let table = table.unwrap_or_else(|| out.with_extension("txt"));
            fs::write(&table, &text).map_err(|e| Error::Io { path: table.clone(), source: e })?;
            print!("{text}");
            for r in &report.reports {
                if let Some(s) = r.wall_clock_secs {
                    eprintln!("{}: {s:.1}s", r.name);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
