use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::folds::{stratified_kfold, FoldSplit};
use super::metrics::{evaluate, Metrics};
use super::stats::{compare_folds, Significance, TEST_NAME};
use super::train::{train_fold, TrainConfig};
use crate::error::{Error, Result};
use crate::gnn::{Activation, ConvType, GraphInput, GraphMode, Model, ModelConfig, Readout, Schema};
use crate::hetgraph::{FlattenMode, HeteroGraph};
use crate::ingest::{build_dataset, BuildOptions, CorpusIndex, CountScaling, EmbedderSpec, FeatureMode, Setup};

/// How article graphs are fed to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Hetero,
    HomoTruncate,
    HomoPad,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [InputMode::Hetero, InputMode::HomoTruncate, InputMode::HomoPad];

    pub fn name(self) -> &'static str {
        match self {
            InputMode::Hetero => "hetero",
            InputMode::HomoTruncate => "homo_truncate",
            InputMode::HomoPad => "homo_pad",
        }
    }

    pub fn graph_mode(self) -> GraphMode {
        match self {
            InputMode::Hetero => GraphMode::Hetero,
            _ => GraphMode::Homo,
        }
    }

    pub fn flatten_mode(self) -> Option<FlattenMode> {
        match self {
            InputMode::Hetero => None,
            InputMode::HomoTruncate => Some(FlattenMode::Truncate),
            InputMode::HomoPad => Some(FlattenMode::Pad),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        InputMode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown graph mode {s:?}; expected hetero, homo-truncate or homo-pad")))
    }
}

/// Schema and model inputs for `graphs` under `mode`.
pub fn prepare_inputs(graphs: &[HeteroGraph], mode: InputMode) -> Result<(Schema, Vec<GraphInput>)> {
    let first = graphs.first().ok_or_else(|| Error::Input("no graphs".into()))?;
    match mode.flatten_mode() {
        None => {
            let schema = Schema::of_hetero(first);
            let inputs = graphs.iter().map(|g| GraphInput::from_hetero(g, &schema)).collect::<Result<_>>()?;
            Ok((schema, inputs))
        }
        Some(fm) => {
            let flat: Vec<_> = graphs.iter().map(|g| g.flatten(fm)).collect();
            let schema = Schema::of_homo(&flat[0]);
            let inputs = flat.iter().map(|g| GraphInput::from_homo(g, &schema)).collect::<Result<_>>()?;
            Ok((schema, inputs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub hidden_dim: usize,
    pub heads: usize,
    pub activation: Activation,
    pub readout: Readout,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let base = ModelConfig::default();
        Self {
            hidden_dim: base.hidden_dim,
            heads: base.heads,
            activation: base.activation,
            readout: base.readout,
        }
    }
}

impl ModelOptions {
    pub fn config(&self, conv: ConvType, mode: GraphMode) -> ModelConfig {
        let mut c = ModelConfig::new(conv, mode).with_hidden(self.hidden_dim, self.heads);
        c.activation = self.activation;
        c.readout = self.readout;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub setups: Vec<Setup>,
    pub feature_modes: Vec<FeatureMode>,
    pub convs: Vec<ConvType>,
    pub graph_modes: Vec<InputMode>,
    pub train: TrainConfig,
    pub model: ModelOptions,
    pub embedder: EmbedderSpec,
    pub count_scaling: CountScaling,
    pub timeline_cap: usize,
    pub min_nodes_per_type: usize,
    pub folds: usize,
    pub fold_seed: u64,
    /// Adds wall-clock seconds to each report, which makes reports differ between runs.
    pub record_timing: bool,
    /// Trains the folds of a cell on separate threads.
    pub parallel: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        let build = BuildOptions::default();
        Self {
            setups: vec![Setup::S5All],
            feature_modes: vec![FeatureMode::TextOnly],
            convs: vec![ConvType::Hgt],
            graph_modes: InputMode::ALL.to_vec(),
            train: TrainConfig::default(),
            model: ModelOptions::default(),
            embedder: EmbedderSpec::hashing(64),
            count_scaling: build.count_scaling,
            timeline_cap: build.timeline_cap,
            min_nodes_per_type: build.min_nodes_per_type,
            folds: 5,
            fold_seed: 0,
            record_timing: false,
            parallel: true,
        }
    }
}

impl MatrixConfig {
    /// Reads JSON, or YAML for `.yaml`/`.yml` files.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
        if yaml {
            serde_yaml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))
        }
    }

    pub fn build_options(&self, feature_mode: FeatureMode) -> BuildOptions {
        BuildOptions {
            feature_mode,
            count_scaling: self.count_scaling,
            timeline_cap: self.timeline_cap,
            min_nodes_per_type: self.min_nodes_per_type,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.setups.is_empty() || self.feature_modes.is_empty() || self.convs.is_empty() || self.graph_modes.is_empty() {
            return Err(Error::Config("every matrix axis needs at least one value".into()));
        }
        self.train.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub setup: Setup,
    pub features: FeatureMode,
    pub mode: InputMode,
    pub conv: ConvType,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.setup, self.features, self.mode, self.conv)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Metrics,
    pub epoch_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl MeanMetrics {
    pub fn of(folds: &[FoldResult]) -> Self {
        let n = folds.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        Self {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.macro_f1),
            accuracy: mean(|m| m.accuracy),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cell: Cell,
    pub name: String,
    /// Hex SHA-256 over cell, model architecture, training and embedding settings.
    pub fingerprint: String,
    pub split_fingerprint: String,
    pub param_count: usize,
    pub folds: Vec<FoldResult>,
    pub mean: MeanMetrics,
    /// Folds where a per-class ratio had a zero denominator (set to 0).
    pub zero_division_folds: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
    pub significance_test: String,
    pub significance: Vec<Significance>,
}

impl ExperimentReport {
    pub fn fold_f1(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.metrics.macro_f1).collect()
    }
}

fn sha_hex<T: Serialize>(v: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("serialisable")))
}

/// Trains and evaluates one model per fold of `split`.
pub fn cross_validate(
    model: &Model,
    inputs: &[GraphInput],
    split: &FoldSplit,
    train: &TrainConfig,
    parallel: bool,
) -> Result<Vec<FoldResult>> {
    split.check_partition(inputs.len())?;
    let fold = |f: usize| -> Result<FoldResult> {
        let train_set: Vec<&GraphInput> = split.train(f).into_iter().map(|i| &inputs[i]).collect();
        let test_set: Vec<&GraphInput> = split.test(f).iter().map(|&i| &inputs[i]).collect();
        let outcome = train_fold(model, &train_set, train, train.seed.wrapping_add(f as u64))?;
        Ok(FoldResult {
            fold: f,
            metrics: evaluate(model, &outcome.params, &test_set)?,
            epoch_losses: outcome.epoch_losses,
        })
    };
    if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..split.k).map(|f| s.spawn(move || fold(f))).collect();
            handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
        })
    } else {
        (0..split.k).map(fold).collect()
    }
}

/// One matrix cell: cross-validation of a fresh model on prepared inputs.
pub fn run_cell(
    cell: Cell,
    schema: &Schema,
    inputs: &[GraphInput],
    split: &FoldSplit,
    cfg: &MatrixConfig,
) -> Result<ExperimentReport> {
    let model = Model::new(cfg.model.config(cell.conv, cell.mode.graph_mode()), schema.clone())?;
    let start = Instant::now();
    let folds = cross_validate(&model, inputs, split, &cfg.train, cfg.parallel)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::info!("{cell}: {:.1}s", elapsed);
    Ok(ExperimentReport {
        cell,
        name: cell.to_string(),
        fingerprint: sha_hex(&(&cell, model.config(), schema, &cfg.train, &cfg.embedder, cfg.count_scaling)),
        split_fingerprint: split.fingerprint(),
        param_count: model.param_count(),
        mean: MeanMetrics::of(&folds),
        zero_division_folds: folds.iter().filter(|f| f.metrics.zero_division).map(|f| f.fold).collect(),
        folds,
        wall_clock_secs: cfg.record_timing.then_some(elapsed),
        significance_test: TEST_NAME.into(),
        significance: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub config: MatrixConfig,
    pub corpus_articles: usize,
    pub article_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub skipped_articles: usize,
    pub split: FoldSplit,
    pub split_fingerprint: String,
    pub reports: Vec<ExperimentReport>,
    pub notes: Vec<String>,
}

impl MatrixReport {
    pub fn find(&self, setup: Setup, features: FeatureMode, mode: InputMode, conv: ConvType) -> Option<&ExperimentReport> {
        let cell = Cell { setup, features, mode, conv };
        self.reports.iter().find(|r| r.cell == cell)
    }
}

/// Each hetero cell against every homo cell with the same setup, features and conv.
/// The Bonferroni family is all such pairs in the matrix.
pub fn attach_significance(reports: &mut [ExperimentReport]) -> Result<()> {
    let pairs: Vec<(usize, usize)> = (0..reports.len())
        .flat_map(|a| (0..reports.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            let (ca, cb) = (reports[a].cell, reports[b].cell);
            ca.mode == InputMode::Hetero
                && cb.mode != InputMode::Hetero
                && (ca.setup, ca.features, ca.conv) == (cb.setup, cb.features, cb.conv)
        })
        .collect();
    let n = pairs.len();
    for (a, b) in pairs {
        if reports[a].split_fingerprint != reports[b].split_fingerprint {
            return Err(Error::Contract(format!("{} and {} use different fold splits", reports[a].name, reports[b].name)));
        }
        let s = compare_folds(&reports[a].name, &reports[a].fold_f1(), &reports[b].name, &reports[b].fold_f1(), n)?;
        reports[a].significance.push(s);
    }
    Ok(())
}

pub fn run_matrix(corpus: &CorpusIndex, cfg: &MatrixConfig) -> Result<MatrixReport> {
    cfg.validate()?;
    let embedder = cfg.embedder.build()?;
    let mut split: Option<(Vec<String>, Vec<usize>, FoldSplit)> = None;
    let mut skipped = 0;
    let mut reports = Vec::new();
    for &setup in &cfg.setups {
        for &features in &cfg.feature_modes {
            let ds = build_dataset(corpus, setup, &cfg.build_options(features), embedder.as_ref())?;
            let ids: Vec<String> = ds.graphs.iter().map(|g| g.article_id.clone()).collect();
            let labels = ds.labels();
            match &split {
                None => {
                    let s = stratified_kfold(&labels, cfg.folds, cfg.fold_seed)?;
                    skipped = ds.skipped.len();
                    split = Some((ids, labels, s));
                }
                Some((known, _, _)) if *known != ids => {
                    return Err(Error::Contract(format!("{setup} kept a different article set")));
                }
                Some(_) => {}
            }
            let fold_split = &split.as_ref().expect("set above").2;
            for &mode in &cfg.graph_modes {
                let (schema, inputs) = prepare_inputs(&ds.graphs, mode)?;
                for &conv in &cfg.convs {
                    let cell = Cell { setup, features, mode, conv };
                    reports.push(run_cell(cell, &schema, &inputs, fold_split, cfg)?);
                }
            }
        }
    }
    attach_significance(&mut reports)?;
    let (article_ids, labels, split) = split.expect("at least one dataset");
    let mut notes = vec![
        format!("significance: {TEST_NAME}, Bonferroni-corrected at alpha 0.05"),
        "prediction ties resolve to class 0 (real)".to_string(),
    ];
    if reports.iter().any(|r| !r.zero_division_folds.is_empty()) {
        notes.push("some per-class precision/recall/F1 had a zero denominator and was set to 0".to_string());
    }
    Ok(MatrixReport {
        config: cfg.clone(),
        corpus_articles: corpus.len(),
        article_ids,
        labels,
        skipped_articles: skipped,
        split_fingerprint: split.fingerprint(),
        split,
        reports,
        notes,
    })
}

/// Plain-text results table: one row per setup, feature mode and graph mode,
/// precision / recall / macro-F1 / accuracy per convolution. `*` marks a homo cell
/// that is significantly different from its hetero counterpart.
pub fn results_table(report: &MatrixReport) -> String {
    let mut convs: Vec<ConvType> = report.reports.iter().map(|r| r.cell.conv).collect();
    convs.sort();
    convs.dedup();
    let mut out = String::new();
    let _ = write!(out, "{:<6}{:<13}{:<15}", "setup", "features", "graph");
    for c in &convs {
        let _ = write!(out, "| {:<32}", format!("{c}  P / R / F1 / Acc"));
    }
    out.push('\n');
    let mut rows: Vec<(Setup, FeatureMode, InputMode)> =
        report.reports.iter().map(|r| (r.cell.setup, r.cell.features, r.cell.mode)).collect();
    rows.dedup();
    for (setup, features, mode) in rows {
        let _ = write!(out, "{:<6}{:<13}{:<15}", setup.to_string(), features.to_string(), mode.name());
        for &conv in &convs {
            match report.find(setup, features, mode, conv) {
                Some(r) => {
                    let m = &r.mean;
                    let marked = report
                        .find(setup, features, InputMode::Hetero, conv)
                        .into_iter()
                        .flat_map(|h| &h.significance)
                        .any(|s| s.b == r.name && s.significant);
                    let cellstr = format!(
                        "{:.3} / {:.3} / {:.3}{} / {:.3}",
                        m.precision,
                        m.recall,
                        m.macro_f1,
                        if marked { "*" } else { "" },
                        m.accuracy
                    );
                    let _ = write!(out, "| {cellstr:<32}");
                }
                None => {
                    let _ = write!(out, "| {:<32}", "-");
                }
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "* significant vs hetero ({TEST_NAME}, alpha 0.05, Bonferroni)");
    out
}
