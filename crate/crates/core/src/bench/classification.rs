//! Repeated train/test evaluation of the discriminant rules.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::classify::{cross_validate, default_radius_grid};
use crate::classify::{Classifier, LabeledSamples, Method, MethodSettings};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Candidate radii; `None` uses [`default_radius_grid`] for each dataset.
    pub radius_grid: Option<Vec<f64>>,
    pub train_fraction: f64,
    pub folds: usize,
    pub methods: Vec<Method>,
    pub settings: MethodSettings,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 100,
            radius_grid: None,
            train_fraction: 0.75,
            folds: 5,
            methods: Method::ALL.to_vec(),
            settings: MethodSettings::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(
                "train_fraction",
                format!("{} is outside (0, 1)", self.train_fraction),
            );
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.folds < 2 {
            return bad("folds", format!("need at least 2, got {}", self.folds));
        }
        if self.methods.is_empty() {
            return bad("methods", "no methods selected".into());
        }
        if let Some(grid) = &self.radius_grid {
            if grid.is_empty() || grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return bad(
                    "radius_grid",
                    "must be a nonempty list of nonnegative radii".into(),
                );
            }
        }
        Ok(())
    }
}

/// Outcome of one `(dataset, method, trial)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub dataset: String,
    pub method: Method,
    pub trial: usize,
    pub radius: Option<f64>,
    pub cv_ccr: Option<f64>,
    pub test_ccr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: Method,
    pub trials: usize,
    pub failed: usize,
    /// Percent.
    pub mean_ccr: f64,
    /// Percent; sample standard deviation across trials.
    pub std_ccr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedDataset {
    pub dataset: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkResults {
    pub trials: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
    pub skipped: Vec<SkippedDataset>,
}

impl BenchmarkResults {
    pub fn summary_for(&self, dataset: &str, method: Method) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.dataset == dataset && s.method == method)
    }
}

/// Training-set size for a class of `count` samples.
fn train_count(count: usize, fraction: f64) -> usize {
    ((count as f64 * fraction).round() as usize).clamp(1, count.saturating_sub(1).max(1))
}

/// Reason the dataset cannot be benchmarked, if any.
fn class_minimum_violation(data: &LabeledSamples, cfg: &ExperimentConfig) -> Option<String> {
    if data.classes().len() < 2 {
        return Some(format!(
            "needs at least 2 classes, found {}",
            data.classes().len()
        ));
    }
    for (c, members) in data.class_members().iter().enumerate() {
        let train = train_count(members.len(), cfg.train_fraction);
        if members.len() < 2 || train < cfg.folds {
            return Some(format!(
                "class {:?} has {} samples; {} training samples cannot fill {} folds",
                data.classes()[c],
                members.len(),
                train,
                cfg.folds
            ));
        }
    }
    None
}

/// Per-class shuffled split; each class contributes `round(fraction · N_c)`
/// training samples. Indices are returned in ascending order.
pub fn stratified_split(
    data: &LabeledSamples,
    fraction: f64,
    seed: u64,
    trial: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, StreamTag::Split, trial as u64);
    let mut train = vec![];
    let mut test = vec![];
    for mut members in data.class_members() {
        members.shuffle(&mut rng);
        let k = train_count(members.len(), fraction);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn run_cell(
    data: &LabeledSamples,
    name: &str,
    cfg: &ExperimentConfig,
    grid: &[f64],
    method: Method,
    trial: usize,
) -> TrialRow {
    let (train_idx, test_idx) = stratified_split(data, cfg.train_fraction, cfg.seed, trial);
    let (train, test) = (data.subset(&train_idx), data.subset(&test_idx));
    let fold_seed: u64 = stream(cfg.seed, StreamTag::Folds, trial as u64).random();
    let outcome = cross_validate(&train, method, &cfg.settings, grid, cfg.folds, fold_seed)
        .and_then(|cv| {
            let ccr =
                Classifier::fit(method, &cfg.settings, &train, cv.best_radius)?.score(&test)?;
            Ok((cv, ccr))
        });
    let mut row = TrialRow {
        dataset: name.to_string(),
        method,
        trial,
        radius: None,
        cv_ccr: None,
        test_ccr: None,
        error: None,
    };
    match outcome {
        Ok((cv, ccr)) => {
            row.radius = Some(cv.best_radius);
            row.cv_ccr = Some(cv.cv_score);
            row.test_ccr = Some(ccr);
        }
        Err(e) => {
            log::warn!("{name} {method} trial {trial} failed: {e}");
            row.error = Some(e.to_string());
        }
    }
    row
}

fn summarize(dataset: &str, method: Method, rows: &[TrialRow]) -> SummaryRow {
    let ccrs: Vec<f64> = rows
        .iter()
        .filter(|r| r.dataset == dataset && r.method == method)
        .filter_map(|r| r.test_ccr.map(|c| 100.0 * c))
        .collect();
    let total = rows
        .iter()
        .filter(|r| r.dataset == dataset && r.method == method)
        .count();
    let m = ccrs.len() as f64;
    let mean = ccrs.iter().sum::<f64>() / m;
    let std = if ccrs.len() > 1 {
        (ccrs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    SummaryRow {
        dataset: dataset.to_string(),
        method,
        trials: ccrs.len(),
        failed: total - ccrs.len(),
        mean_ccr: mean,
        std_ccr: std,
    }
}

/// Runs every `(dataset, method, trial)` cell. Datasets that fail the
/// class-size checks are skipped and listed in the results.
pub fn run_classification_benchmark(
    cfg: &ExperimentConfig,
    datasets: &[Dataset],
) -> Result<BenchmarkResults> {
    cfg.validate()?;
    let mut skipped = vec![];
    let mut prepared = vec![];
    for d in datasets {
        let samples = match d.to_samples() {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping {}: {e}", d.name);
                skipped.push(SkippedDataset {
                    dataset: d.name.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if let Some(reason) = class_minimum_violation(&samples, cfg) {
            log::warn!("skipping {}: {reason}", d.name);
            skipped.push(SkippedDataset {
                dataset: d.name.clone(),
                reason,
            });
            continue;
        }
        let grid = cfg
            .radius_grid
            .clone()
            .unwrap_or_else(|| default_radius_grid(samples.dim()));
        prepared.push((d.name.as_str(), samples, grid));
    }

    let cells: Vec<(usize, Method, usize)> = (0..prepared.len())
        .flat_map(|d| {
            cfg.methods
                .iter()
                .flat_map(move |&m| (0..cfg.trials).map(move |t| (d, m, t)))
        })
        .collect();
    let trials: Vec<TrialRow> = cells
        .par_iter()
        .map(|&(d, m, t)| {
            let (name, samples, grid) = &prepared[d];
            run_cell(samples, name, cfg, grid, m, t)
        })
        .collect();
    let summary = prepared
        .iter()
        .flat_map(|(name, _, _)| cfg.methods.iter().map(|&m| summarize(name, m, &trials)))
        .collect();
    Ok(BenchmarkResults {
        trials,
        summary,
        skipped,
    })
}
