//! Pipeline stages. Each stage reads its predecessor's artifact from the
//! output directory and writes its own.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chartkit::baselines::{mds_embed, pairwise_distances, pca_embed, subsample_indices};
use chartkit::charting::{embed, train_autoencoder, train_chart, train_siamese, ChartEmbedding, EpochStats};
use chartkit::container::Container;
use chartkit::metrics::{metric_report, MetricReport, ReferenceKind};
use chartkit::preprocess::build_features;
use chartkit::synthgen::{generate_trajectory, positions_csv, synthesize_csi};
use chartkit::{CsiDataset32, FeatureSet32, Mlp32};
use ndarray::{Array2, Axis};
use serde_json::{json, Value};

use crate::config::{Baseline, Method, PipelineConfig, Stage, TOOL_VERSION};
use crate::error::CliError;
use crate::report::report_csv;
use crate::svg::scatter_svg;

pub const DATASET: &str = "dataset.bin";
pub const POSITIONS: &str = "positions.csv";
pub const FEATURES: &str = "features.bin";
pub const MODEL: &str = "model.ckpt";
pub const DECODER: &str = "decoder.ckpt";
pub const HISTORY: &str = "train_history.csv";
pub const ANCHORS: &str = "anchors.csv";
pub const EMBEDDING: &str = "embedding.bin";
pub const EMBEDDING_CSV: &str = "embedding.csv";
pub const METRICS: &str = "metrics.json";
pub const REPORT: &str = "report.csv";
pub const CHART_SVG: &str = "chart.svg";
pub const POSITIONS_SVG: &str = "positions.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Preprocess,
    Train,
    Embed,
    Eval,
    Plot,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Embed => "embed",
            Command::Eval => "eval",
            Command::Plot => "plot",
            Command::All => "all",
        }
    }
}

fn baseline_name(b: Baseline) -> &'static str {
    match b {
        Baseline::Pca => "pca",
        Baseline::Mds => "mds",
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub dir: PathBuf,
    hash: String,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let hash = config.hash();
        let dir = config.output_dir.clone();
        Self { config, dir, hash }
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn provenance(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config_hash".to_string(), self.hash.clone()),
            ("seed".to_string(), self.config.seed.to_string()),
            ("tool_version".to_string(), TOOL_VERSION.to_string()),
        ])
    }

    fn comment_lines(&self) -> String {
        self.provenance().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    pub fn run(&self, command: Command) -> Result<(), CliError> {
        match command {
            Command::Generate => self.generate(),
            Command::Preprocess => self.preprocess(),
            Command::Train => self.train().map(|_| ()),
            Command::Embed => self.embed(),
            Command::Eval => self.eval().map(|_| ()),
            Command::Plot => self.plot(),
            Command::All => {
                self.generate()?;
                self.preprocess()?;
                self.train()?;
                self.embed()?;
                self.eval()?;
                self.plot()
            }
        }
    }

    fn ensure_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(CliError::io(&self.dir))
    }

    fn need(&self, stage: &'static str, needs: &'static str, name: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(CliError::Stage { stage, needs, path });
        }
        Ok(path)
    }

    fn check_origin(&self, what: &str, meta: &BTreeMap<String, String>) {
        if let Some(h) = meta.get("config_hash") {
            if *h != self.hash {
                eprintln!("warning: {what} was produced by config {h}, current config is {}", self.hash);
            }
        }
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(CliError::io(path))
    }

    fn write_container(&self, name: &str, mut c: Container) -> Result<(), CliError> {
        c.meta.extend(self.provenance());
        c.write(self.path(name))?;
        Ok(())
    }

    fn read_container(&self, stage: &'static str, needs: &'static str, name: &str) -> Result<Container, CliError> {
        let c = Container::read(self.need(stage, needs, name)?)?;
        self.check_origin(name, &c.meta);
        Ok(c)
    }

    pub fn generate(&self) -> Result<(), CliError> {
        self.ensure_dir()?;
        let traj = generate_trajectory(&self.config.trajectory())?;
        let ds = synthesize_csi::<f32>(&traj, &self.config.scene(), &self.config.impairments, self.config.stage_seed(Stage::Synthesis))?;
        self.write_container(DATASET, ds.to_container())?;
        self.write_text(POSITIONS, &(self.comment_lines() + &positions_csv(&ds.timestamps, &ds.positions)))?;
        eprintln!("generate: {} snapshots -> {}", ds.len(), self.path(DATASET).display());
        Ok(())
    }

    pub fn preprocess(&self) -> Result<(), CliError> {
        let c = self.read_container("preprocess", "generate", DATASET)?;
        let ds = CsiDataset32::from_container(&c)?;
        let fs = build_features(&ds, &self.config.preprocess.lags, self.config.preprocess.meta_window)?;
        self.write_container(FEATURES, fs.to_container())?;
        eprintln!("preprocess: {} x {} features -> {}", fs.len(), fs.dim(), self.path(FEATURES).display());
        Ok(())
    }

    fn features(&self, stage: &'static str) -> Result<FeatureSet32, CliError> {
        let c = self.read_container(stage, "preprocess", FEATURES)?;
        Ok(FeatureSet32::from_container(&c)?)
    }

    fn model_meta(&self, method: &str) -> BTreeMap<String, String> {
        let mut meta = self.provenance();
        meta.insert("method".into(), method.into());
        meta
    }

    /// Trains the configured model and writes the checkpoint and loss history.
    pub fn train(&self) -> Result<TrainSummary, CliError> {
        let fs = self.features("train")?;
        let cfg = self.config.training();
        let (method, history, labeled) = match self.config.method {
            Method::Triplet => {
                let out = train_chart(&fs, &cfg)?;
                let method = out.embedding.provenance.get("method").cloned().unwrap_or_default();
                out.model.write_checkpoint(self.path(MODEL), &self.model_meta(&method))?;
                (method, out.history, out.labeled)
            }
            Method::Siamese => {
                let out = train_siamese(&fs, &cfg)?;
                out.model.write_checkpoint(self.path(MODEL), &self.model_meta("siamese"))?;
                ("siamese".to_string(), out.history, out.labeled)
            }
            Method::Autoencoder => {
                let out = train_autoencoder(&fs, &cfg)?;
                out.encoder.write_checkpoint(self.path(MODEL), &self.model_meta("autoencoder"))?;
                out.decoder.write_checkpoint(self.path(DECODER), &self.model_meta("autoencoder-decoder"))?;
                ("autoencoder".to_string(), out.history, Vec::new())
            }
        };
        self.write_text(HISTORY, &self.history_csv(&history))?;
        if !labeled.is_empty() {
            let mut s = self.comment_lines() + "row,x_m,y_m\n";
            for (r, p) in &labeled {
                let _ = writeln!(s, "{r},{},{}", p[0], p[1]);
            }
            self.write_text(ANCHORS, &s)?;
        }
        let last = history.last().map_or(f64::NAN, |h| h.mean_loss);
        eprintln!("train: {method}, {} epochs, final loss {last:.6} -> {}", history.len(), self.path(MODEL).display());
        Ok(TrainSummary { method, history, labeled })
    }

    fn history_csv(&self, history: &[EpochStats]) -> String {
        let mut s = self.comment_lines() + "epoch,mean_loss,t_close,t_far\n";
        for h in history {
            let _ = writeln!(s, "{},{},{},{}", h.epoch, h.mean_loss, h.t_close, h.t_far);
        }
        s
    }

    pub fn embed(&self) -> Result<(), CliError> {
        let fs = self.features("embed")?;
        let path = self.need("embed", "train", MODEL)?;
        let (model, meta) = Mlp32::read_checkpoint(path)?;
        self.check_origin(MODEL, &meta);
        let mut emb = embed(&model, &fs, self.config.training.embed_chunk)?;
        emb.provenance = self.provenance();
        emb.provenance.insert("method".into(), meta.get("method").cloned().unwrap_or_else(|| "unknown".into()));
        self.write_embedding("", &emb)?;
        eprintln!("embed: {} x {} -> {}", emb.len(), emb.dim(), self.path(EMBEDDING_CSV).display());
        Ok(())
    }

    fn write_embedding(&self, prefix: &str, emb: &ChartEmbedding) -> Result<(), CliError> {
        emb.write(self.path(&format!("{prefix}{EMBEDDING}")))?;
        self.write_text(&format!("{prefix}{EMBEDDING_CSV}"), &emb.to_csv())
    }

    pub fn read_embedding(&self, stage: &'static str, prefix: &str) -> Result<ChartEmbedding, CliError> {
        let needs = if prefix.is_empty() { "embed" } else { "eval" };
        let emb = ChartEmbedding::read(self.need(stage, needs, &format!("{prefix}{EMBEDDING}"))?)?;
        self.check_origin(EMBEDDING, &emb.provenance);
        Ok(emb)
    }

    fn metrics_doc(&self, method: &str, report: &MetricReport) -> Value {
        let mut doc = serde_json::to_value(report).expect("report serializes");
        let obj = doc.as_object_mut().expect("object");
        obj.insert("method".into(), json!(method));
        for (k, v) in self.provenance() {
            obj.insert(k, json!(v));
        }
        doc
    }

    fn evaluate(&self, reference: &Array2<f64>, coords: &Array2<f64>) -> Result<MetricReport, CliError> {
        let e = &self.config.evaluation;
        Ok(metric_report(&reference.view(), &coords.view(), e.k, e.reference, e.normalization)?)
    }

    fn reference(&self, fs: &FeatureSet32, rows: Option<&[usize]>) -> Array2<f64> {
        let full = match self.config.evaluation.reference {
            ReferenceKind::Geographic => Array2::from_shape_fn((fs.len(), 2), |(i, k)| fs.positions[i][k]),
            ReferenceKind::Ambient => fs.features.mapv(f64::from),
        };
        match rows {
            Some(r) => full.select(Axis(0), r),
            None => full,
        }
    }

    /// Metrics for the chart and each configured baseline, plus the report table.
    pub fn eval(&self) -> Result<Vec<(String, Value)>, CliError> {
        let emb = self.read_embedding("eval", "")?;
        let fs = self.features("eval")?;
        if fs.len() != emb.len() {
            return Err(CliError::Config(format!("embedding has {} rows, features {}", emb.len(), fs.len())));
        }
        let method = emb.provenance.get("method").cloned().unwrap_or_else(|| "chart".into());
        let mut docs = Vec::new();
        let reference = self.reference(&fs, None);
        let report = self.evaluate(&reference, &emb.coords)?;
        docs.push((METRICS.to_string(), self.metrics_doc(&method, &report)));

        let d = self.config.training.latent_dim;
        for &b in &self.config.evaluation.baselines {
            let name = baseline_name(b);
            let (rows, coords) = match b {
                Baseline::Pca => ((0..fs.len()).collect::<Vec<_>>(), pca_embed(&fs.features.view(), d)?.1),
                Baseline::Mds => {
                    let rows = subsample_indices(fs.len(), self.config.evaluation.mds_max_points);
                    let x = fs.features.select(Axis(0), &rows);
                    (rows, mds_embed(&pairwise_distances(&x.view()).view(), d)?)
                }
            };
            let mut provenance = self.provenance();
            provenance.insert("method".into(), name.into());
            let base = ChartEmbedding {
                coords,
                indices: rows.iter().map(|&r| fs.source_indices[r]).collect(),
                timestamps: rows.iter().map(|&r| fs.timestamps[r]).collect(),
                positions: rows.iter().map(|&r| fs.positions[r]).collect(),
                provenance,
            };
            self.write_embedding(&format!("{name}_"), &base)?;
            let report = self.evaluate(&self.reference(&fs, Some(&rows)), &base.coords)?;
            docs.push((format!("{name}_{METRICS}"), self.metrics_doc(name, &report)));
        }
        for (file, doc) in &docs {
            self.write_text(file, &(serde_json::to_string_pretty(doc).expect("json") + "\n"))?;
        }
        self.write_text(REPORT, &report_csv(&docs)?)?;
        for (file, doc) in &docs {
            eprintln!("eval: {file}: KS {} TW {} CT {} SR {} EV {}", doc["KS"], doc["TW"], doc["CT"], doc["SR"], doc["EV"]);
        }
        Ok(docs)
    }

    pub fn plot(&self) -> Result<(), CliError> {
        let emb = self.read_embedding("plot", "")?;
        let header: Vec<(String, String)> = self.provenance().into_iter().collect();
        let method = emb.provenance.get("method").cloned().unwrap_or_default();
        self.write_svg(CHART_SVG, &emb, &format!("channel chart ({method})"), &header)?;
        let truth = ChartEmbedding { coords: emb.position_matrix(), ..emb.clone() };
        self.write_svg(POSITIONS_SVG, &truth, "ground-truth positions", &header)?;
        for &b in &self.config.evaluation.baselines {
            let name = baseline_name(b);
            if self.path(&format!("{name}_{EMBEDDING}")).is_file() {
                let base = self.read_embedding("plot", &format!("{name}_"))?;
                self.write_svg(&format!("{name}.svg"), &base, name, &header)?;
            }
        }
        eprintln!("plot: -> {}", self.path(CHART_SVG).display());
        Ok(())
    }

    fn write_svg(&self, name: &str, emb: &ChartEmbedding, title: &str, header: &[(String, String)]) -> Result<(), CliError> {
        if emb.is_empty() {
            eprintln!("warning: {name}: no points to plot");
        }
        let points: Vec<[f64; 2]> = emb.coords.rows().into_iter().map(|r| [r[0], if r.len() > 1 { r[1] } else { 0.0 }]).collect();
        self.write_text(name, &scatter_svg(&points, &emb.positions, title, header))
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub method: String,
    pub history: Vec<EpochStats>,
    pub labeled: Vec<(usize, [f64; 2])>,
}

/// Reads metric JSON files for [`report_csv`].
pub fn load_metric_docs(paths: &[PathBuf]) -> Result<Vec<(String, Value)>, CliError> {
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(CliError::io(p))?;
            let doc = serde_json::from_str(&text).map_err(|e| CliError::Report(format!("{}: {e}", p.display())))?;
            Ok((p.display().to_string(), doc))
        })
        .collect()
}

pub fn write_report(paths: &[PathBuf], output: &Path) -> Result<(), CliError> {
    let csv = report_csv(&load_metric_docs(paths)?)?;
    fs::write(output, csv).map_err(CliError::io(output))
}
