//! Command implementations. Each writes its result files under `out` and
//! returns the text printed on standard output.

use std::path::{Path, PathBuf};

use nuce_core::analysis::{class_centroids, cluster_stats, pca_2d, FisherRatio};
use nuce_core::data::generate_synthetic;
use nuce_core::detection::{average_precision, cascade_gate, map_suite};
use nuce_core::gradcheck::{run_suite, Block, CheckedLoss, Perturbation, REL_TOLERANCE};
use nuce_core::trainer::forward;
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::csv_io::{load_csv, write_csv, write_file};
use crate::detections::load_jsonl;
use crate::error::{LabError, Result};
use crate::experiment::{
    ablation_settings, config_table_csv, cross_validate, run_settings, runs_csv, sort_by_macro_f1,
    ConfigRow, DataProvider, Summary,
};
use crate::model_io::{load_model, save_model};
use crate::svg;

/// Options shared by the experiment commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl RunOptions {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.experiment.seeds = vec![s];
        }
        Ok(cfg)
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable result");
    s.push('\n');
    s
}

fn echo_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    loss: &'a str,
    lambda_r: f64,
    lambda_c: f64,
    gamma: f64,
    #[serde(flatten)]
    summary: &'a Summary,
}

/// Cross-validates the configured loss; writes `metrics.csv`,
/// `summary.json`, `config.toml` and one model per run under `models/`.
pub fn train(opts: &RunOptions) -> Result<String> {
    let cfg = opts.resolve()?;
    let loss = cfg.loss_config()?;
    let data = DataProvider::new(&cfg)?;
    let records = cross_validate(&cfg, &data, loss)?;
    let summary = Summary::of(&records)?;

    echo_config(&cfg, &opts.out)?;
    write_file(&opts.out.join("metrics.csv"), runs_csv(&records).as_bytes())?;
    let doc = TrainSummary {
        loss: loss.kind.name(),
        lambda_r: loss.lambda_r,
        lambda_c: loss.lambda_c,
        gamma: loss.gamma,
        summary: &summary,
    };
    write_file(&opts.out.join("summary.json"), json(&doc).as_bytes())?;
    for r in &records {
        let path = opts
            .out
            .join("models")
            .join(format!("seed{}_fold{}.json", r.seed, r.fold));
        save_model(&r.params, &path)?;
    }
    Ok(format!(
        "{} runs, macro-F1 {:.4} ± {:.4}, accuracy {:.4}\n",
        summary.runs, summary.mean.macro_f1, summary.std.macro_f1, summary.mean.accuracy
    ))
}

fn write_config_runs(
    opts: &RunOptions,
    cfg: &ExperimentConfig,
    name: &str,
    mut rows: Vec<ConfigRow>,
    runs: String,
    sort: bool,
) -> Result<String> {
    if sort {
        sort_by_macro_f1(&mut rows);
    }
    echo_config(cfg, &opts.out)?;
    write_file(
        &opts.out.join(format!("{name}.csv")),
        config_table_csv(&rows).as_bytes(),
    )?;
    write_file(&opts.out.join(format!("{name}_runs.csv")), runs.as_bytes())?;
    write_file(
        &opts.out.join(format!("{name}.json")),
        json(&rows).as_bytes(),
    )?;
    let mut text = String::new();
    for r in &rows {
        text.push_str(&format!(
            "{:<24} ({}, {}, {})  macro-F1 {:.4}\n",
            r.label, r.lambda_r, r.lambda_c, r.gamma, r.summary.mean.macro_f1
        ));
    }
    Ok(text)
}

fn settings_runs(
    cfg: &ExperimentConfig,
    settings: Vec<(String, (f64, f64, f64))>,
) -> Result<(Vec<ConfigRow>, String)> {
    let results = run_settings(cfg, &settings)?;
    let mut runs = String::new();
    let mut rows = Vec::new();
    for (i, (row, records)) in results.into_iter().enumerate() {
        let table = runs_csv(&records);
        let mut lines = table.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            runs.push_str(&format!("label,{header}\n"));
        }
        for l in lines {
            runs.push_str(&format!("{},{l}\n", row.label));
        }
        rows.push(row);
    }
    Ok((rows, runs))
}

/// Cross-entropy, uncertainty weighting and full NUCE on identical folds;
/// writes `ablation.csv` (one row per configuration) and `ablation_runs.csv`.
pub fn ablation(opts: &RunOptions) -> Result<String> {
    let cfg = opts.resolve()?;
    let settings = ablation_settings()
        .into_iter()
        .map(|(l, s)| (l.to_string(), s))
        .collect();
    let (rows, runs) = settings_runs(&cfg, settings)?;
    write_config_runs(opts, &cfg, "ablation", rows, runs, false)
}

/// Grid over `(lambda_r, lambda_c, gamma)`; `sweep.csv` is sorted by mean
/// macro-F1, best first.
pub fn sweep(opts: &RunOptions) -> Result<String> {
    let cfg = opts.resolve()?;
    let settings = cfg
        .sweep_grid()?
        .into_iter()
        .map(|(r, c, g)| (format!("r{r}_c{c}_g{g}"), (r, c, g)))
        .collect();
    let (rows, runs) = settings_runs(&cfg, settings)?;
    write_config_runs(opts, &cfg, "sweep", rows, runs, true)
}

/// Writes the dataset of the first configured seed to `dataset.csv`.
pub fn generate(opts: &RunOptions) -> Result<String> {
    let cfg = opts.resolve()?;
    if cfg.data.source != DataSource::Synthetic {
        return Err(LabError::Config(
            "generate needs a synthetic data source".into(),
        ));
    }
    let seed = cfg.experiment.seeds[0];
    let ds = generate_synthetic(&cfg.data.synth(seed))?;
    write_csv(&ds, &opts.out.join("dataset.csv"))?;
    Ok(format!(
        "{} rows, class counts {:?}\n",
        ds.len(),
        ds.class_counts()
    ))
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub instances: usize,
    /// Corrupts one analytic gradient block, e.g. `nuce:H`.
    pub perturb: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 25,
            perturb: None,
            out: None,
        }
    }
}

fn parse_target(s: &str) -> Result<(CheckedLoss, Block)> {
    let bad = || LabError::Config(format!("perturbation target `{s}` is not <loss>:<H|W|A>"));
    let (loss, block) = s.split_once(':').ok_or_else(bad)?;
    let loss = CheckedLoss::ALL
        .into_iter()
        .find(|l| l.name() == loss)
        .ok_or_else(bad)?;
    let block = [Block::H, Block::W, Block::A]
        .into_iter()
        .find(|b| b.name() == block)
        .ok_or_else(bad)?;
    Ok((loss, block))
}

/// Finite-difference check of every analytic gradient. Fails with
/// [`LabError::CheckFailed`] naming each block over tolerance.
pub fn gradcheck(opts: &GradcheckOptions) -> Result<String> {
    let target = opts.perturb.as_deref().map(parse_target).transpose()?;
    let rows = run_suite(opts.seed, opts.instances, Perturbation { target })?;
    let mut table = String::from("loss,block,max_rel_error,instances,status\n");
    let mut text = format!(
        "{:<14} {:<5} {:>14}  status\n",
        "loss", "block", "max rel err"
    );
    let mut failed = Vec::new();
    for r in &rows {
        let status = if r.passed() { "ok" } else { "FAIL" };
        table.push_str(&format!(
            "{},{},{:e},{},{status}\n",
            r.loss.name(),
            r.block.name(),
            r.max_rel_error,
            r.instances
        ));
        text.push_str(&format!(
            "{:<14} {:<5} {:>14.3e}  {status}\n",
            r.loss.name(),
            r.block.name(),
            r.max_rel_error
        ));
        if !r.passed() {
            failed.push(format!("{}:{}", r.loss.name(), r.block.name()));
        }
    }
    if let Some(out) = &opts.out {
        write_file(&out.join("gradcheck.csv"), table.as_bytes())?;
    }
    if failed.is_empty() {
        text.push_str(&format!("all blocks below {REL_TOLERANCE:e}\n"));
        Ok(text)
    } else {
        eprint!("{text}");
        Err(LabError::CheckFailed(failed.join(", ")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    pub input: PathBuf,
    /// Extra IoU thresholds reported alongside the standard suite.
    pub iou: Vec<f64>,
    /// Gate thresholds applied to each image's top confidence.
    pub tau: Vec<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ThresholdAp {
    iou: f64,
    ap: f64,
}

#[derive(Serialize)]
struct GateCount {
    tau: f64,
    forwarded: usize,
    forwarded_with_gt: usize,
    images: usize,
}

#[derive(Serialize)]
struct DetectReport {
    #[serde(rename = "mAP")]
    map: f64,
    #[serde(rename = "mAP@25")]
    map25: f64,
    #[serde(rename = "mAP@50")]
    map50: f64,
    #[serde(rename = "mAP@75")]
    map75: f64,
    images: usize,
    ground_truth: usize,
    predictions: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    thresholds: Vec<ThresholdAp>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    gate: Vec<GateCount>,
}

/// mAP suite of a detection JSON-lines file, written to
/// `detection_metrics.json` and echoed to standard output.
pub fn detect_eval(opts: &DetectOptions) -> Result<String> {
    let sets = load_jsonl(&opts.input)?;
    let suite = map_suite(&sets)?;
    let thresholds = opts
        .iou
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(LabError::Config(format!(
                    "IoU threshold {t} outside [0, 1]"
                )));
            }
            Ok(ThresholdAp {
                iou: t,
                ap: average_precision(&sets, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let top: Vec<f64> = sets
        .iter()
        .map(|s| {
            s.predictions
                .iter()
                .map(|p| p.confidence)
                .fold(0.0, f64::max)
        })
        .collect();
    let gate = opts
        .tau
        .iter()
        .map(|&tau| {
            let g = cascade_gate(&top, tau)?;
            Ok(GateCount {
                tau,
                forwarded: g.iter().filter(|&&v| v == 1).count(),
                forwarded_with_gt: g
                    .iter()
                    .zip(&sets)
                    .filter(|(&v, s)| v == 1 && !s.ground_truth.is_empty())
                    .count(),
                images: sets.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = DetectReport {
        map: suite.map,
        map25: suite.map25,
        map50: suite.map50,
        map75: suite.map75,
        images: sets.len(),
        ground_truth: sets.iter().map(|s| s.ground_truth.len()).sum(),
        predictions: sets.iter().map(|s| s.predictions.len()).sum(),
        thresholds,
        gate,
    };
    let text = json(&report);
    if let Some(out) = &opts.out {
        write_file(&out.join("detection_metrics.json"), text.as_bytes())?;
    }
    Ok(text)
}

/// Reference points for the cluster statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AnchorChoice {
    /// Class means of the embedded data; comparable across losses.
    #[default]
    Centroids,
    /// The anchors stored in the model file.
    Model,
}

#[derive(Debug, Clone, Default)]
pub struct PcaOptions {
    pub model: PathBuf,
    pub data: PathBuf,
    pub anchors: AnchorChoice,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub anchors: &'static str,
    pub rows: usize,
    pub mean_intra_dist: Vec<Option<f64>>,
    pub empty_classes: Vec<usize>,
    pub min_inter_anchor_dist: f64,
    /// `null` when infinite.
    pub fisher_ratio: Option<f64>,
    pub fisher_ratio_infinite: bool,
    pub explained_variance: [f64; 2],
}

/// Embeds `data` through the model and writes `projection.csv`,
/// `projection.svg` and `cluster_stats.json`.
pub fn pca(opts: &PcaOptions) -> Result<(String, ClusterReport)> {
    let model = load_model(&opts.model)?;
    let data = load_csv(&opts.data)?;
    if data.num_classes() > model.num_classes() {
        return Err(nuce_core::Error::Data(format!(
            "data has labels up to {} but the model has {} classes",
            data.num_classes() - 1,
            model.num_classes()
        ))
        .into());
    }
    let (h, _) = forward(&model, data.features())?;
    let proj = pca_2d(&h)?;
    let anchors = match opts.anchors {
        AnchorChoice::Centroids => class_centroids(&h, data.labels(), model.num_classes())?,
        AnchorChoice::Model => model.anchors.clone(),
    };
    let stats = cluster_stats(&h, data.labels(), &anchors)?;

    let mut csv = String::from("pc1,pc2,label\n");
    let mut points = Vec::with_capacity(data.len());
    for (i, &label) in data.labels().iter().enumerate() {
        let (x, y) = (proj.projected.get(i, 0), proj.projected.get(i, 1));
        csv.push_str(&format!("{x},{y},{label}\n"));
        points.push((x, y, label));
    }
    let (fisher, infinite) = match stats.fisher_ratio {
        FisherRatio::Finite(v) => (Some(v), false),
        FisherRatio::Infinite => (None, true),
    };
    let report = ClusterReport {
        anchors: match opts.anchors {
            AnchorChoice::Centroids => "centroids",
            AnchorChoice::Model => "model",
        },
        rows: data.len(),
        empty_classes: stats.empty_classes(),
        mean_intra_dist: stats.mean_intra_dist,
        min_inter_anchor_dist: stats.min_inter_anchor_dist,
        fisher_ratio: fisher,
        fisher_ratio_infinite: infinite,
        explained_variance: proj.explained_variance,
    };
    write_file(&opts.out.join("projection.csv"), csv.as_bytes())?;
    let title = format!("{} rows", data.len());
    write_file(
        &opts.out.join("projection.svg"),
        svg::scatter(&points, &title).as_bytes(),
    )?;
    write_file(
        &opts.out.join("cluster_stats.json"),
        json(&report).as_bytes(),
    )?;
    let text = format!(
        "fisher ratio {}, explained variance [{:.4}, {:.4}]\n",
        fisher.map_or("inf".to_string(), |v| format!("{v:.4}")),
        proj.explained_variance[0],
        proj.explained_variance[1]
    );
    Ok((text, report))
}
