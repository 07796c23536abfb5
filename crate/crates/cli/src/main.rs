//! The `ssvep` binary: synthesize datasets, convert recordings, train
//! recognizers, classify trials, and benchmark methods.
//!
//! Every run writes a `run_metadata.json` (full configuration, seed,
//! version) next to its outputs, and all files are written to a temporary
//! name and renamed into place, so interrupted runs never leave partial
//! outputs behind.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ssvep_core::adtrca::TestFilterMode;
use ssvep_core::data::Dataset;
use ssvep_core::dataio::{
    import_csv, load_dataset, load_manifest, load_model, save_dataset, save_model, CsvImportSpec,
    SavedModel,
};
use ssvep_core::eval::{itr, run_benchmark, BenchConfig, BenchGrid, BenchReport};
use ssvep_core::mtl_ard::{ard_fit, build_problem, ArdConfig};
use ssvep_core::recognizer::{
    create, method_names, wrap_adtrca, wrap_trca, FitContext, TrainedModel,
};
use ssvep_core::reference::build_dictionary;
use ssvep_core::synth::{generate, NoiseModel, SynthConfig};

#[derive(Parser)]
#[command(
    name = "ssvep",
    version,
    about = "SSVEP frequency recognition: CCA, TRCA, and adaptive TRCA with a benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for fitting and benchmarking (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic SSVEP dataset.
    Synth(SynthArgs),
    /// Assemble a dataset from per-trial CSV files.
    Convert(ConvertArgs),
    /// Fit a method on all blocks of a dataset and save the model.
    Train(TrainArgs),
    /// Classify every trial of a dataset with a trained model.
    Classify(ClassifyArgs),
    /// Sweep methods over time windows, channel sets, and training blocks.
    Bench(BenchArgs),
    /// Evaluate the information transfer rate formula.
    Itr(ItrArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Stimulus frequencies in Hz, comma separated.
    #[arg(long, default_value = "6.66,7.5,8.57,10.0,12.0", value_parser = parse_f64_list)]
    frequencies: std::vec::Vec<f64>,
    #[arg(long, default_value_t = 128.0)]
    fs: f64,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 6)]
    blocks: usize,
    /// Trial duration in seconds.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    /// Harmonics present in the simulated response.
    #[arg(long, default_value_t = 3)]
    signal_harmonics: usize,
    #[arg(long, default_value_t = 0.0)]
    snr_db: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    noise: NoiseKind,
    /// Half-width of the per-block phase jitter in radians.
    #[arg(long, default_value_t = 0.4)]
    phase_jitter: f64,
    #[arg(long, default_value_t = 1)]
    mixing_seed: u64,
    #[arg(long, default_value_t = 2)]
    noise_seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NoiseKind {
    /// White Gaussian noise.
    None,
    Pink,
    SharedProfile,
}

impl From<NoiseKind> for NoiseModel {
    fn from(kind: NoiseKind) -> Self {
        match kind {
            NoiseKind::None => NoiseModel::White,
            NoiseKind::Pink => NoiseModel::Pink,
            NoiseKind::SharedProfile => NoiseModel::SharedProfile,
        }
    }
}

#[derive(Args, Serialize)]
struct ConvertArgs {
    /// Directory holding block{b}_target{t}.csv files.
    #[arg(long)]
    csv_dir: PathBuf,
    /// JSON file with sampling rate, frequencies, channel names, blocks,
    /// and latency.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset directory (or manifest path).
    #[arg(long)]
    data: PathBuf,
    /// Method to fit: trca, trca-ensemble, adtrca, adtrca-ensemble.
    #[arg(long)]
    method: String,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write per-stimulus ARD evidence traces (adaptive methods).
    #[arg(long)]
    evidence_dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Trained model file; omit to use the training-free CCA.
    #[arg(long, conflicts_with = "method")]
    model: Option<PathBuf>,
    /// Training-free method name (only "cca").
    #[arg(long)]
    method: Option<String>,
    /// Score with the ensemble filter bank.
    #[arg(long)]
    ensemble: bool,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    /// Dataset directories; repeat for multiple subjects.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, default_value = "cca,trca,adtrca", value_parser = parse_methods)]
    methods: std::vec::Vec<String>,
    /// Time windows: "start:stop:step" (stop inclusive) or a comma list.
    #[arg(long, default_value = "0.5:4:0.5", value_parser = parse_grid)]
    tw: std::vec::Vec<f64>,
    /// Channel subset, comma separated; repeat the flag for several sets.
    #[arg(long)]
    channels: Vec<String>,
    /// Training-block counts to sweep, comma separated.
    #[arg(long, value_parser = parse_usize_list)]
    n_train: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Added to the time window as gaze-shift time in ITR.
    #[arg(long, default_value_t = 0.0)]
    gaze_shift: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

/// Flags shared by every command that prepares trials for a method.
#[derive(Args, Serialize)]
struct PipelineArgs {
    /// Harmonics per stimulus in sinusoidal references.
    #[arg(long, default_value_t = 5)]
    n_harmonics: usize,
    /// Analysis window in seconds (default: everything after the latency).
    #[arg(long)]
    tw_train: Option<f64>,
    /// Visual latency in seconds (default: the dataset manifest's value).
    #[arg(long)]
    latency: Option<f64>,
    #[arg(long, default_value_t = 300)]
    ard_max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    ard_tol: f64,
    /// Force identity temporal filters (adaptive methods degrade to TRCA).
    #[arg(long)]
    debug_identity_filter: bool,
    /// How test trials are temporally filtered: per-class or shared-mean.
    #[arg(long, value_enum, default_value_t = TestFilter::PerClass)]
    test_filter: TestFilter,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TestFilter {
    PerClass,
    SharedMean,
}

impl From<TestFilter> for TestFilterMode {
    fn from(v: TestFilter) -> Self {
        match v {
            TestFilter::PerClass => TestFilterMode::PerClass,
            TestFilter::SharedMean => TestFilterMode::SharedMean,
        }
    }
}

#[derive(Args, Serialize)]
struct ItrArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    t: f64,
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse_methods(s: &str) -> Result<Vec<String>, String> {
    let names: Vec<String> = s.split(',').map(|m| m.trim().to_string()).collect();
    for name in &names {
        if !method_names().contains(&name.as_str()) {
            return Err(format!(
                "unknown method {name:?}; available: {}",
                method_names().join(", ")
            ));
        }
    }
    Ok(names)
}

/// "start:stop:step" inclusive of stop within 1e-9, or a comma list.
fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid {s:?} is not start:stop:step"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
        let stop: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
        let step: f64 = parts[2].trim().parse().map_err(|e| format!("{e}"))?;
        if step <= 0.0 || stop < start {
            return Err(format!("grid {s:?} must ascend with a positive step"));
        }
        let mut values = Vec::new();
        let mut k = 0usize;
        loop {
            let v = start + k as f64 * step;
            if v > stop + 1e-9 {
                break;
            }
            values.push(v);
            k += 1;
        }
        Ok(values)
    } else {
        parse_f64_list(s)
    }
}

/// Write-to-temp plus atomic rename, so failures leave no partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| anyhow!("renaming into {} failed: {}", path.display(), e.error))?;
    Ok(())
}

fn write_run_metadata(
    out_dir: &Path,
    command: &str,
    args: &impl Serialize,
    seed: u64,
) -> Result<()> {
    let metadata = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": args,
    });
    write_atomic(
        &out_dir.join("run_metadata.json"),
        serde_json::to_string_pretty(&metadata)?.as_bytes(),
    )
}

/// Latency and window resolution plus the standard prepare pipeline:
/// select channels upstream, then window and centralize here.
fn prepare(dataset: &Dataset, latency_s: f64, tw: Option<f64>) -> Result<Dataset> {
    let n_samples = dataset
        .n_samples()
        .ok_or_else(|| anyhow!("dataset has no trials"))?;
    let fs = dataset.sampling_rate_hz();
    let duration = match tw {
        Some(tw) => tw,
        None => {
            // Everything after the latency offset, counted in samples so
            // the two roundings cannot overshoot the trial.
            let latency_samples = (latency_s * fs).round() as usize;
            if latency_samples >= n_samples {
                bail!("latency {latency_s} s consumes the whole trial");
            }
            (n_samples - latency_samples) as f64 / fs
        }
    };
    Ok(dataset.windowed(latency_s, duration)?.centralized())
}

fn fit_context(pipeline: &PipelineArgs) -> FitContext {
    FitContext {
        n_harmonics: pipeline.n_harmonics,
        adaptive: ssvep_core::adtrca::AdTrcaConfig {
            ard: ArdConfig {
                max_iters: pipeline.ard_max_iters,
                tol: pipeline.ard_tol,
                ..ArdConfig::default()
            },
            identity_filter: pipeline.debug_identity_filter,
            test_filter: pipeline.test_filter.into(),
        },
    }
}

fn resolve_latency(data: &Path, pipeline: &PipelineArgs) -> f64 {
    pipeline
        .latency
        .or_else(|| load_manifest(data).ok().map(|m| m.latency_s))
        .unwrap_or(0.0)
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        frequencies_hz: args.frequencies.clone(),
        sampling_rate_hz: args.fs,
        n_channels: args.channels,
        n_blocks: args.blocks,
        duration_s: args.duration,
        n_harmonics_signal: args.signal_harmonics,
        snr_db: args.snr_db,
        noise: args.noise.into(),
        phase_jitter_rad: args.phase_jitter,
        mixing_seed: args.mixing_seed,
        noise_seed: args.noise_seed,
    };
    let dataset = generate(&config)?;
    save_dataset(&dataset, &args.out, 0.0)?;
    write_run_metadata(&args.out, "synth", args, args.noise_seed)?;
    println!(
        "wrote {} trials ({} blocks x {} stimuli, {} channels) to {}",
        dataset.trials().len(),
        dataset.n_blocks(),
        dataset.n_stimuli(),
        dataset.n_channels(),
        args.out.display()
    );
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let spec_text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: CsvImportSpec = serde_json::from_str(&spec_text)
        .with_context(|| format!("parsing {}", args.spec.display()))?;
    let dataset = import_csv(&args.csv_dir, &spec)?;
    save_dataset(&dataset, &args.out, spec.latency_s)?;
    write_run_metadata(&args.out, "convert", args, 0)?;
    println!(
        "imported {} trials into {}",
        dataset.trials().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    if args.method == "cca" {
        bail!("cca is training-free; run `ssvep classify --method cca` directly");
    }
    let latency = resolve_latency(&args.data, &args.pipeline);
    let dataset = load_dataset(&args.data)?;
    let prepared = prepare(&dataset, latency, args.pipeline.tw_train)?;
    let ctx = fit_context(&args.pipeline);

    // The container stores the fitted filters; ensemble scoring stays a
    // classify-time choice.
    let saved = match args.method.as_str() {
        "trca" | "trca-ensemble" => SavedModel::Trca(ssvep_core::trca::trca_fit(&prepared)?),
        "adtrca" | "adtrca-ensemble" => {
            let dict = build_dictionary(
                prepared.stimulus_frequencies_hz(),
                ctx.n_harmonics,
                prepared.sampling_rate_hz(),
                prepared.n_samples().unwrap(),
            )?;
            SavedModel::AdTrca(ssvep_core::adtrca::adtrca_fit(
                &prepared,
                &dict,
                &ctx.adaptive,
            )?)
        }
        other => bail!(
            "cannot train {other:?}; available: {}",
            method_names().join(", ")
        ),
    };
    if let Some(dir) = &args.evidence_dir {
        if matches!(saved, SavedModel::AdTrca(_)) && !args.pipeline.debug_identity_filter {
            write_evidence_traces(&prepared, &ctx, dir)?;
        } else {
            eprintln!("note: --evidence-dir only applies to adaptive fits with real filters");
        }
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_model(&saved, &args.out)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        write_run_metadata(parent, "train", args, 0)?;
    }
    println!(
        "trained {} on {} trials; model written to {}",
        args.method,
        prepared.trials().len(),
        args.out.display()
    );
    Ok(())
}

fn write_evidence_traces(prepared: &Dataset, ctx: &FitContext, dir: &Path) -> Result<()> {
    let dict = build_dictionary(
        prepared.stimulus_frequencies_hz(),
        ctx.n_harmonics,
        prepared.sampling_rate_hz(),
        prepared.n_samples().unwrap(),
    )?;
    std::fs::create_dir_all(dir)?;
    for s in 0..prepared.n_stimuli() {
        let trials = prepared.trials_of_stimulus(s);
        let problem = build_problem(&trials, &dict)?;
        let model = ard_fit(&problem, &ctx.adaptive.ard)?;
        let mut csv = Vec::new();
        model.write_evidence_csv(&mut csv)?;
        write_atomic(&dir.join(format!("evidence_stimulus_{s}.csv")), &csv)?;
    }
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> Result<()> {
    let latency = resolve_latency(&args.data, &args.pipeline);
    let dataset = load_dataset(&args.data)?;
    let prepared = prepare(&dataset, latency, args.pipeline.tw_train)?;

    let model: Box<dyn TrainedModel> = match (&args.model, &args.method) {
        (Some(path), None) => match load_model(path)? {
            SavedModel::Trca(m) => wrap_trca(m, args.ensemble),
            SavedModel::AdTrca(m) => wrap_adtrca(m, args.ensemble),
        },
        (None, Some(name)) if name == "cca" => {
            let ctx = fit_context(&args.pipeline);
            create("cca")?.fit(&prepared, &ctx)?
        }
        (None, Some(name)) => bail!("--method only supports the training-free cca, got {name:?}"),
        (None, None) => bail!("pass either --model FILE or --method cca"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };

    let mut csv = Vec::new();
    let n_features = prepared.n_stimuli();
    let feature_header: Vec<String> = (0..n_features).map(|s| format!("feature_{s}")).collect();
    writeln!(csv, "block,truth,prediction,{}", feature_header.join(","))?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for trial in prepared.trials() {
        let out = model.classify(trial)?;
        let features: Vec<String> = out.features.iter().map(|v| format!("{v}")).collect();
        writeln!(
            csv,
            "{},{},{},{}",
            trial.block_index(),
            trial.stimulus_index(),
            out.predicted,
            features.join(",")
        )?;
        hits += usize::from(out.predicted == trial.stimulus_index());
        total += 1;
    }
    write_atomic(&args.out, &csv)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        write_run_metadata(parent, "classify", args, 0)?;
    }
    println!(
        "classified {total} trials (accuracy {:.3}); predictions in {}",
        hits as f64 / total.max(1) as f64,
        args.out.display()
    );
    Ok(())
}

fn channel_sets_of(args: &BenchArgs) -> Vec<Vec<String>> {
    args.channels
        .iter()
        .map(|set| set.split(',').map(|c| c.trim().to_string()).collect())
        .collect()
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let grid = BenchGrid {
        methods: args.methods.clone(),
        time_windows_s: args.tw.clone(),
        channel_sets: channel_sets_of(args),
        n_train_blocks: args.n_train.clone().unwrap_or_default(),
    };
    std::fs::create_dir_all(&args.out)?;
    let mut per_subject: Vec<(String, BenchReport)> = Vec::new();
    for data in &args.data {
        let latency = resolve_latency(data, &args.pipeline);
        let dataset = load_dataset(data)?;
        let config = BenchConfig {
            latency_s: latency,
            n_harmonics: args.pipeline.n_harmonics,
            ard: ArdConfig {
                max_iters: args.pipeline.ard_max_iters,
                tol: args.pipeline.ard_tol,
                ..ArdConfig::default()
            },
            identity_filter: args.pipeline.debug_identity_filter,
            test_filter: args.pipeline.test_filter.into(),
            seed: args.seed,
            gaze_shift_s: args.gaze_shift,
        };
        let report = run_benchmark(&dataset, &grid, &config)?;
        let stem = data
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "subject".into());
        let subject_dir = if args.data.len() == 1 {
            args.out.clone()
        } else {
            args.out.join(&stem)
        };
        std::fs::create_dir_all(&subject_dir)?;
        let mut records = Vec::new();
        report.write_records_csv(&mut records)?;
        write_atomic(&subject_dir.join("report.csv"), &records)?;
        let mut curves = Vec::new();
        report.write_curves_csv(&mut curves)?;
        write_atomic(&subject_dir.join("curves.csv"), &curves)?;
        let mut summary = Vec::new();
        report.write_summary_json(&mut summary)?;
        write_atomic(&subject_dir.join("summary.json"), &summary)?;
        per_subject.push((stem, report));
    }

    if per_subject.len() > 1 {
        write_atomic(
            &args.out.join("subjects_summary.csv"),
            aggregate_subjects(&per_subject).as_bytes(),
        )?;
    }
    write_run_metadata(&args.out, "bench", args, args.seed)?;
    println!(
        "benchmarked {} subject(s) x {} method(s) x {} window(s); reports in {}",
        per_subject.len(),
        args.methods.len(),
        args.tw.len(),
        args.out.display()
    );
    Ok(())
}

/// Mean and sd over per-subject fold means, one row per grid cell.
fn aggregate_subjects(reports: &[(String, BenchReport)]) -> String {
    let mut out = String::from(
        "method,channels,n_train,tw_s,n_subjects,mean_accuracy,sd_accuracy,mean_itr,sd_itr\n",
    );
    let first = &reports[0].1;
    for (idx, cell) in first.summaries.iter().enumerate() {
        let accs: Vec<f64> = reports
            .iter()
            .map(|(_, r)| r.summaries[idx].mean_accuracy)
            .collect();
        let itrs: Vec<f64> = reports
            .iter()
            .map(|(_, r)| r.summaries[idx].mean_itr)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            if v.len() < 2 {
                return 0.0;
            }
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            cell.method,
            cell.channels,
            cell.n_train,
            cell.tw_s,
            reports.len(),
            mean(&accs),
            sd(&accs),
            mean(&itrs),
            sd(&itrs)
        ));
    }
    out
}

fn cmd_itr(args: &ItrArgs) -> Result<()> {
    let value = itr(args.k, args.p, args.t)?;
    println!("{value:.3}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Train(args) => cmd_train(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Itr(args) => cmd_itr(args),
    }
}
