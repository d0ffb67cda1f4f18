//! Seeds × folds cross-validation runs and their tabular reports.

use nuce_core::data::{generate_synthetic, group_kfold, GroupedDataset};
use nuce_core::losses::LossConfig;
use nuce_core::metrics::MetricBundle;
use nuce_core::trainer::{train, ModelParams};
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::csv_io::load_csv;
use crate::error::{LabError, Result};

/// Metric columns shared by every results table, in output order.
pub const METRIC_COLUMNS: [&str; 7] = [
    "accuracy",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "weighted_precision",
    "weighted_recall",
    "weighted_f1",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

impl MetricValues {
    pub fn from_bundle(b: &MetricBundle) -> Self {
        Self {
            accuracy: b.accuracy,
            macro_precision: b.macro_avg.precision,
            macro_recall: b.macro_avg.recall,
            macro_f1: b.macro_avg.f1,
            weighted_precision: b.weighted_avg.precision,
            weighted_recall: b.weighted_avg.recall,
            weighted_f1: b.weighted_avg.f1,
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1,
        ]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Self {
            accuracy: a[0],
            macro_precision: a[1],
            macro_recall: a[2],
            macro_f1: a[3],
            weighted_precision: a[4],
            weighted_recall: a[5],
            weighted_f1: a[6],
        }
    }
}

/// Outcome of one (seed, fold) training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub fold: usize,
    pub metrics: MetricValues,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub params: ModelParams,
}

/// Mean and sample standard deviation over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub mean: MetricValues,
    pub std: MetricValues,
}

impl Summary {
    pub fn of(records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(nuce_core::Error::Empty("run records").into());
        }
        let n = records.len() as f64;
        let rows: Vec<[f64; 7]> = records.iter().map(|r| r.metrics.as_array()).collect();
        let mean: [f64; 7] = std::array::from_fn(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n);
        let std: [f64; 7] = std::array::from_fn(|j| {
            if records.len() < 2 {
                return 0.0;
            }
            let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Ok(Self {
            runs: records.len(),
            mean: MetricValues::from_array(mean),
            std: MetricValues::from_array(std),
        })
    }
}

/// Produces the dataset for a run seed: a fixed CSV, a fixed-seed
/// synthetic set, or a synthetic set regenerated from each run seed.
pub struct DataProvider {
    fixed: Option<GroupedDataset>,
    cfg: ExperimentConfig,
}

impl DataProvider {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let fixed = match (cfg.data.source, &cfg.data.path, cfg.data.seed) {
            (DataSource::Csv, Some(path), _) => Some(load_csv(path)?),
            (DataSource::Csv, None, _) => {
                return Err(LabError::Config("csv data source without a path".into()))
            }
            (DataSource::Synthetic, _, Some(s)) => Some(generate_synthetic(&cfg.data.synth(s))?),
            (DataSource::Synthetic, _, None) => None,
        };
        Ok(Self {
            fixed,
            cfg: cfg.clone(),
        })
    }

    pub fn dataset(&self, seed: u64) -> Result<GroupedDataset> {
        match &self.fixed {
            Some(d) => Ok(d.clone()),
            None => Ok(generate_synthetic(&self.cfg.data.synth(seed))?),
        }
    }
}

/// Trains one model per (seed, fold) with `loss`, in seed-then-fold order.
///
/// The run seed drives the generator (unless fixed), the fold shuffle and
/// the trainer, so two calls with different losses see identical folds.
pub fn cross_validate(
    cfg: &ExperimentConfig,
    data: &DataProvider,
    loss: LossConfig,
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let ds = data.dataset(seed)?;
        let mut train_cfg = cfg.train_config(seed)?;
        train_cfg.loss = loss;
        for (fold, split) in group_kfold(&ds, cfg.experiment.folds, seed)?
            .into_iter()
            .enumerate()
        {
            let report = train(&ds.subset(&split.train), &ds.subset(&split.val), &train_cfg)?;
            records.push(RunRecord {
                seed,
                fold,
                metrics: MetricValues::from_bundle(&report.best_val),
                best_epoch: report.best_epoch,
                stopped_epoch: report.stopped_epoch,
                params: report.params,
            });
        }
    }
    Ok(records)
}

fn push_metrics(line: &mut String, m: &MetricValues) {
    for v in m.as_array() {
        line.push_str(&format!(",{v}"));
    }
}

/// `metrics.csv`: one row per (seed, fold).
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = format!(
        "seed,fold,{},best_epoch,stopped_epoch\n",
        METRIC_COLUMNS.join(",")
    );
    for r in records {
        let mut line = format!("{},{}", r.seed, r.fold);
        push_metrics(&mut line, &r.metrics);
        line.push_str(&format!(",{},{}\n", r.best_epoch, r.stopped_epoch));
        out.push_str(&line);
    }
    out
}

/// One aggregated row of an ablation or sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigRow {
    pub label: String,
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub gamma: f64,
    pub summary: Summary,
}

/// Header plus one row per configuration: means, then the std of macro-F1.
pub fn config_table_csv(rows: &[ConfigRow]) -> String {
    let mut out = format!(
        "label,lambda_r,lambda_c,gamma,runs,{},macro_f1_std\n",
        METRIC_COLUMNS.join(",")
    );
    for row in rows {
        let mut line = format!(
            "{},{},{},{},{}",
            row.label, row.lambda_r, row.lambda_c, row.gamma, row.summary.runs
        );
        push_metrics(&mut line, &row.summary.mean);
        line.push_str(&format!(",{}\n", row.summary.std.macro_f1));
        out.push_str(&line);
    }
    out
}

/// Labels and `(lambda_r, lambda_c, gamma)` of the three ablation rows.
pub fn ablation_settings() -> [(&'static str, (f64, f64, f64)); 3] {
    [
        ("cross_entropy", (1.0, 0.0, 0.0)),
        ("uncertainty_weighting", (1.0, 0.0, 2.0)),
        ("full_nuce", (1.0, 0.5, 2.0)),
    ]
}

/// Runs each `(label, lambdas)` setting with NUCE over the same seeds and
/// folds.
pub fn run_settings(
    cfg: &ExperimentConfig,
    settings: &[(String, (f64, f64, f64))],
) -> Result<Vec<(ConfigRow, Vec<RunRecord>)>> {
    let data = DataProvider::new(cfg)?;
    settings
        .iter()
        .map(|(label, (r, c, g))| {
            let records = cross_validate(cfg, &data, LossConfig::nuce(*r, *c, *g)?)?;
            let row = ConfigRow {
                label: label.clone(),
                lambda_r: *r,
                lambda_c: *c,
                gamma: *g,
                summary: Summary::of(&records)?,
            };
            Ok((row, records))
        })
        .collect()
}

/// Stable descending sort on mean macro-F1.
pub fn sort_by_macro_f1(rows: &mut [ConfigRow]) {
    rows.sort_by(|a, b| b.summary.mean.macro_f1.total_cmp(&a.summary.mean.macro_f1));
}
