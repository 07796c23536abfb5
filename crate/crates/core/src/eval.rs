//! Cross-validation harness, accuracy and ITR metrics, and the benchmark
//! grid runner.
//!
//! A benchmark run sweeps (method x time-window x channel-set x training
//! blocks), evaluates every leave-one-block-out fold, and reports one
//! record per fold plus mean/sd summaries per grid cell. Runs are
//! reproducible: the same dataset, grid, and seed give identical reports.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adtrca::{AdTrcaConfig, TestFilterMode};
use crate::data::{select_channels, Dataset};
use crate::error::{Error, Result};
use crate::mtl_ard::ArdConfig;
use crate::recognizer::{create, FitContext};

/// One leave-one-block-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub train_blocks: Vec<usize>,
    pub test_block: usize,
}

/// One split per block, ordered by test block. Every block must contain
/// every stimulus.
pub fn leave_one_block_out(dataset: &Dataset) -> Result<Vec<CvSplit>> {
    let n_blocks = dataset.n_blocks();
    if n_blocks < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 blocks for cross-validation, got {n_blocks}"
        )));
    }
    for b in 0..n_blocks {
        for s in 0..dataset.n_stimuli() {
            if dataset.trial(b, s).is_none() {
                return Err(Error::InvalidDataset(format!(
                    "block {b} is missing stimulus {s}"
                )));
            }
        }
    }
    Ok((0..n_blocks)
        .map(|test_block| CvSplit {
            train_blocks: (0..n_blocks).filter(|&b| b != test_block).collect(),
            test_block,
        })
        .collect())
}

/// Fraction of correct predictions.
pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions".into()));
    }
    let correct = predictions
        .iter()
        .zip(truths.iter())
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Information transfer rate in bits per minute for `k` classes,
/// accuracy `p`, and selection time `t_seconds`.
///
/// Perfect accuracy is handled as the limit `log2(k) * 60 / t`; accuracy
/// at or below chance floors to zero.
pub fn itr(k: usize, p: f64, t_seconds: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("accuracy {p} outside [0, 1]")));
    }
    if t_seconds <= 0.0 || !t_seconds.is_finite() {
        return Err(Error::InvalidInput(format!(
            "selection time must be positive, got {t_seconds}"
        )));
    }
    let kf = k as f64;
    let bits = if p >= 1.0 {
        kf.log2()
    } else if p <= 1.0 / kf {
        0.0
    } else {
        kf.log2() + p * p.log2() + (1.0 - p) * ((1.0 - p) / (kf - 1.0)).log2()
    };
    Ok((bits * 60.0 / t_seconds).max(0.0))
}

/// Settings shared by every cell of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Visual latency skipped before each analysis window.
    pub latency_s: f64,
    pub n_harmonics: usize,
    pub ard: ArdConfig,
    /// Debug hook: force identity temporal filters in adaptive methods.
    pub identity_filter: bool,
    pub test_filter: TestFilterMode,
    /// Seeds training-block subsampling for the n_train sweep.
    pub seed: u64,
    /// Added to the time window in ITR (0 = selection time is the window).
    pub gaze_shift_s: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            latency_s: 0.0,
            n_harmonics: 5,
            ard: ArdConfig::default(),
            identity_filter: false,
            test_filter: TestFilterMode::default(),
            seed: 0,
            gaze_shift_s: 0.0,
        }
    }
}

/// The swept axes. Empty channel sets mean "all channels"; an empty
/// n_train list means "all available training blocks".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub methods: Vec<String>,
    pub time_windows_s: Vec<f64>,
    pub channel_sets: Vec<Vec<String>>,
    pub n_train_blocks: Vec<usize>,
}

/// One evaluated fold of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub method: String,
    pub channels: String,
    pub tw_s: f64,
    pub n_train: usize,
    pub test_block: usize,
    pub n_trials: usize,
    pub accuracy: f64,
    pub itr_bits_per_min: f64,
    /// (truth, prediction) per test trial, in stimulus order.
    pub predictions: Vec<(usize, usize)>,
}

/// Mean and standard deviation over the folds of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub channels: String,
    pub tw_s: f64,
    pub n_train: usize,
    pub n_folds: usize,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_itr: f64,
    pub sd_itr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub latency_s: f64,
    pub gaze_shift_s: f64,
    pub n_harmonics: usize,
    /// How the ITR selection time was computed, recorded in every report.
    pub itr_time_basis: String,
    pub records: Vec<FoldRecord>,
    pub summaries: Vec<CellSummary>,
}

fn channels_label(names: &[String]) -> String {
    names.join("+")
}

fn sample_train_blocks(
    available: &[usize],
    n_train: usize,
    seed: u64,
    test_block: usize,
) -> Vec<usize> {
    if n_train >= available.len() {
        return available.to_vec();
    }
    // One subsample per (seed, n_train, fold): methods and windows stay
    // paired on identical training data.
    let mut rng = ChaCha12Rng::seed_from_u64(
        seed ^ (n_train as u64).wrapping_mul(0x9E3779B97F4A7C15)
            ^ (test_block as u64).wrapping_mul(0xBF58476D1CE4E5B9),
    );
    let mut pool = available.to_vec();
    for i in (1..pool.len()).rev() {
        let j = rng.random_range(0..=i);
        pool.swap(i, j);
    }
    let mut chosen: Vec<usize> = pool.into_iter().take(n_train).collect();
    chosen.sort_unstable();
    chosen
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the full grid. Fold jobs execute in parallel; records are ordered
/// by (method, time window, channel set, n_train, fold).
pub fn run_benchmark(
    dataset: &Dataset,
    grid: &BenchGrid,
    config: &BenchConfig,
) -> Result<BenchReport> {
    if grid.methods.is_empty() || grid.time_windows_s.is_empty() {
        return Err(Error::Configuration(
            "benchmark grid needs at least one method and one time window".into(),
        ));
    }
    for name in &grid.methods {
        create(name)?;
    }
    let channel_sets: Vec<Vec<String>> = if grid.channel_sets.is_empty() {
        vec![dataset.channel_names().to_vec()]
    } else {
        grid.channel_sets.clone()
    };
    let folds = leave_one_block_out(dataset)?;
    let max_train = folds[0].train_blocks.len();
    let n_train_grid: Vec<usize> = if grid.n_train_blocks.is_empty() {
        vec![max_train]
    } else {
        for &n in &grid.n_train_blocks {
            if n < 2 || n > max_train {
                return Err(Error::Configuration(format!(
                    "n_train {n} outside [2, {max_train}]"
                )));
            }
        }
        grid.n_train_blocks.clone()
    };

    // Window/centralize once per (channel set, time window).
    let mut processed: Vec<Vec<Arc<Dataset>>> = Vec::with_capacity(channel_sets.len());
    for names in &channel_sets {
        let selected = select_channels(dataset, names)?;
        let mut per_tw = Vec::with_capacity(grid.time_windows_s.len());
        for &tw in &grid.time_windows_s {
            let windowed = selected
                .windowed(config.latency_s, tw)
                .map_err(|e| match e {
                    Error::OutOfRange(msg) => {
                        Error::Configuration(format!("time window {tw} s does not fit: {msg}"))
                    }
                    other => other,
                })?;
            per_tw.push(Arc::new(windowed.centralized()));
        }
        processed.push(per_tw);
    }

    struct Job {
        method: String,
        chset_idx: usize,
        tw_idx: usize,
        n_train: usize,
        fold_idx: usize,
    }
    let mut jobs = Vec::new();
    for method in &grid.methods {
        for tw_idx in 0..grid.time_windows_s.len() {
            for chset_idx in 0..channel_sets.len() {
                for &n_train in &n_train_grid {
                    for fold_idx in 0..folds.len() {
                        jobs.push(Job {
                            method: method.clone(),
                            chset_idx,
                            tw_idx,
                            n_train,
                            fold_idx,
                        });
                    }
                }
            }
        }
    }

    let ctx = FitContext {
        n_harmonics: config.n_harmonics,
        adaptive: AdTrcaConfig {
            ard: config.ard.clone(),
            identity_filter: config.identity_filter,
            test_filter: config.test_filter,
        },
    };

    let records: Vec<FoldRecord> = jobs
        .par_iter()
        .map(|job| -> Result<FoldRecord> {
            let data = &processed[job.chset_idx][job.tw_idx];
            let fold = &folds[job.fold_idx];
            let tw = grid.time_windows_s[job.tw_idx];
            let train_blocks = sample_train_blocks(
                &fold.train_blocks,
                job.n_train,
                config.seed,
                fold.test_block,
            );
            let train = data.subset_blocks(&train_blocks)?;
            let method = create(&job.method)?;
            let model = method.fit(&train, &ctx)?;
            let mut truths = Vec::with_capacity(data.n_stimuli());
            let mut predictions = Vec::with_capacity(data.n_stimuli());
            for s in 0..data.n_stimuli() {
                let trial = data
                    .trial(fold.test_block, s)
                    .expect("folds come from a complete dataset");
                truths.push(s);
                predictions.push(model.classify(trial)?.predicted);
            }
            let acc = accuracy(&predictions, &truths)?;
            let itr_value = itr(data.n_stimuli(), acc, tw + config.gaze_shift_s)?;
            Ok(FoldRecord {
                method: job.method.clone(),
                channels: channels_label(&channel_sets[job.chset_idx]),
                tw_s: tw,
                n_train: job.n_train,
                test_block: fold.test_block,
                n_trials: truths.len(),
                accuracy: acc,
                itr_bits_per_min: itr_value,
                predictions: truths.into_iter().zip(predictions).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    for chunk in records.chunks(folds.len()) {
        let accs: Vec<f64> = chunk.iter().map(|r| r.accuracy).collect();
        let itrs: Vec<f64> = chunk.iter().map(|r| r.itr_bits_per_min).collect();
        let (mean_accuracy, sd_accuracy) = mean_sd(&accs);
        let (mean_itr, sd_itr) = mean_sd(&itrs);
        let first = &chunk[0];
        summaries.push(CellSummary {
            method: first.method.clone(),
            channels: first.channels.clone(),
            tw_s: first.tw_s,
            n_train: first.n_train,
            n_folds: chunk.len(),
            mean_accuracy,
            sd_accuracy,
            mean_itr,
            sd_itr,
        });
    }

    Ok(BenchReport {
        seed: config.seed,
        latency_s: config.latency_s,
        gaze_shift_s: config.gaze_shift_s,
        n_harmonics: config.n_harmonics,
        itr_time_basis: format!("time window plus gaze shift of {} s", config.gaze_shift_s),
        records,
        summaries,
    })
}

impl BenchReport {
    /// One CSV row per grid cell per fold.
    pub fn write_records_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "method,channels,tw_s,n_train,test_block,n_trials,accuracy,itr_bits_per_min"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.channels,
                r.tw_s,
                r.n_train,
                r.test_block,
                r.n_trials,
                r.accuracy,
                r.itr_bits_per_min
            )?;
        }
        Ok(())
    }

    /// Plot-ready long format: one row per summarized cell.
    pub fn write_curves_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "method,channels,n_train,tw_s,mean_accuracy,sd_accuracy,mean_itr,sd_itr,n_folds"
        )?;
        for s in &self.summaries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.method,
                s.channels,
                s.n_train,
                s.tw_s,
                s.mean_accuracy,
                s.sd_accuracy,
                s.mean_itr,
                s.sd_itr,
                s.n_folds
            )?;
        }
        Ok(())
    }

    /// Full report, configuration included, as JSON.
    pub fn write_summary_json(&self, w: impl std::io::Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }
}
