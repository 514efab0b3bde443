//! Command implementations behind the `whfemd` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use whfemd::features::{
    extract_matrix, read_feature_csv, write_feature_csv, FeatureSet, FileStatus, PipelineConfig, Standardize,
};
use whfemd::fwht::{fwht, naive_walsh_hadamard, Normalization, Ordering};
use whfemd::learn::{
    evaluate, pca_fit_transform, smote, stratified_split, train, EvalReport, ModelKind, Timings, TrainParams,
};
use whfemd::signal_io::{load_manifest, ColumnScaler, Signal};
use whfemd::spectral::{fft_magnitude, FftSize};
use whfemd::synth::{synth_corpus_counts, ClassTemplate};
use whfemd::{Error, Result};

pub const TOOL: &str = "whfemd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "WHFEMD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "whfemd",
    version,
    about = "EMD + Walsh-Hadamard speech features and classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract one feature set for every file in a manifest.
    Extract(ExtractArgs),
    /// Split, train and score a classifier on a feature CSV.
    Eval(EvalArgs),
    /// Time the fast and naive Walsh-Hadamard transforms and the FFT.
    Bench(BenchArgs),
    /// Generate a synthetic labelled corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    Corpus,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// CSV with `path,label` columns.
    pub manifest: PathBuf,
    #[arg(long, default_value = "whfesf")]
    pub set: FeatureSet,
    /// Number of IMF slots.
    #[arg(long, default_value_t = 5)]
    pub imfs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Run report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "corpus")]
    pub standardize: StandardizeMode,
    /// Echoed into the report; extraction itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    None,
    Smote,
    PcaSmote,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub features: PathBuf,
    #[arg(long, default_value = "forest")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "none")]
    pub balance: Balance,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trees per forest or bagging ensemble.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Features tried per forest split; defaults to floor(sqrt(d)).
    #[arg(long)]
    pub max_features: Option<usize>,
    /// SMOTE neighbours.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Variance kept by PCA under `pca-smote`.
    #[arg(long, default_value_t = 0.95)]
    pub retained_variance: f64,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Power-of-two exponent range, e.g. `10..20` or `2^10..2^20`.
    #[arg(long, default_value = "10..20", value_parser = parse_size_range)]
    pub sizes: (u32, u32),
    /// Largest exponent for the O(N²) naive transform.
    #[arg(long, default_value_t = 12)]
    pub naive_max: u32,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// JSON array of class templates; the built-in typical/disordered pair when absent.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Utterances per class: one number, or one per class separated by commas.
    #[arg(long, default_value = "50", value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `a..b` where each end is an exponent or `2^exponent`.
pub fn parse_size_range(s: &str) -> std::result::Result<(u32, u32), String> {
    let exp = |t: &str| -> std::result::Result<u32, String> {
        let t = t.trim();
        let t = t.strip_prefix("2^").unwrap_or(t);
        t.parse::<u32>().map_err(|e| format!("bad exponent `{t}`: {e}"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (exp(a)?, exp(b.trim_start_matches('='))?),
        None => {
            let e = exp(s)?;
            (e, e)
        }
    };
    if lo < 1 || hi > 30 || lo > hi {
        return Err(format!("size range {s} must satisfy 1 ≤ lo ≤ hi ≤ 30"));
    }
    Ok((lo, hi))
}

/// Worker cap from the environment. `Ok(None)` when unset.
pub fn threads_from_env() -> std::result::Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfigEcho {
    pub manifest: String,
    pub set: String,
    pub dim: usize,
    pub standardize: StandardizeMode,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

/// Written next to every extracted feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: ExtractConfigEcho,
    pub n_files: usize,
    pub n_failed: usize,
    pub files: Vec<FileStatus>,
    /// Feature columns with zero spread before standardization.
    pub degenerate_columns: Vec<usize>,
    pub sample_rates: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extract_seconds: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn default_report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

pub fn run_extract(args: &ExtractArgs, threads: Option<usize>) -> Result<RunReport> {
    if args.imfs == 0 {
        return Err(Error::Argument("--imfs must be at least 1".into()));
    }
    let manifest = load_manifest(&args.manifest)?;
    let cfg = PipelineConfig::default().with_imfs(args.imfs);
    let standardize = match args.standardize {
        StandardizeMode::Corpus => Standardize::Corpus,
        StandardizeMode::None => Standardize::None,
    };
    let t0 = Instant::now();
    let mx = extract_matrix(&manifest, args.set, &cfg, &standardize, threads)?;
    let elapsed = t0.elapsed().as_secs_f64();
    write_feature_csv(&mx.dataset, &args.out)?;
    let report = RunReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        config: ExtractConfigEcho {
            manifest: args.manifest.display().to_string(),
            set: args.set.id().into(),
            dim: cfg.dim(args.set),
            standardize: args.standardize,
            seed: args.seed,
            pipeline: cfg,
        },
        n_files: mx.files.len(),
        n_failed: mx.failures(),
        files: mx.files,
        degenerate_columns: mx.degenerate_columns,
        sample_rates: mx.sample_rates,
        extract_seconds: args.timings.then_some(elapsed),
    };
    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.out));
    write_text(&report_path, &report.to_json())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigEcho {
    pub model: ModelKind,
    pub balance: Balance,
    pub train_frac: f64,
    pub seed: u64,
    pub trees: usize,
    pub max_features: Option<usize>,
    pub k: usize,
    pub retained_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub tool: String,
    pub version: String,
    pub config: EvalConfigEcho,
    /// Training counts per class before any oversampling.
    pub train_counts_before_balance: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_components: Option<usize>,
    pub warnings: Vec<String>,
    pub report: EvalReport,
}

impl EvalRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Stratified split, z-score fitted on the training rows, optional
/// PCA and SMOTE on the training rows, then train and score.
pub fn run_eval(args: &EvalArgs) -> Result<EvalRun> {
    let ds = read_feature_csv(&args.features)?;
    if ds.n_classes() < 2 {
        return Err(Error::Argument(format!(
            "{} has {} class; at least 2 are needed",
            args.features.display(),
            ds.n_classes()
        )));
    }
    let (mut tr, mut te) = stratified_split(&ds, args.train_frac, args.seed)?;
    let scaler = ColumnScaler::fit(&tr.rows)?;
    tr = tr.with_rows(scaler.transform(&tr.rows)?);
    te = te.with_rows(scaler.transform(&te.rows)?);
    let before = tr.class_counts();

    let mut warnings = Vec::new();
    let mut pca_components = None;
    if args.balance == Balance::PcaSmote {
        let (a, b, basis) = pca_fit_transform(&tr, &te, args.retained_variance)?;
        if basis.degenerate {
            warnings.push("training covariance is zero; PCA kept one arbitrary axis".to_string());
        }
        pca_components = Some(basis.k());
        tr = a;
        te = b;
    }
    if args.balance != Balance::None {
        let out = smote(&tr, args.k, args.seed)?;
        warnings.extend(out.warnings);
        tr = out.dataset;
    }

    let params = TrainParams {
        kind: args.model,
        n_estimators: args.trees,
        max_features: args.max_features,
        seed: args.seed,
    };
    let t0 = Instant::now();
    let model = train(&tr, &params)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    if model.degenerate {
        warnings.push("all training rows are identical; the model predicts the majority class".to_string());
    }
    let t1 = Instant::now();
    let mut report = evaluate(&model, &te)?;
    let predict_seconds = t1.elapsed().as_secs_f64();
    if args.timings {
        report.timings = Some(Timings {
            extract_seconds: 0.0,
            train_seconds,
            predict_seconds,
        });
    }
    if let Some(path) = &args.save_model {
        model.save(path)?;
    }
    let run = EvalRun {
        tool: TOOL.into(),
        version: VERSION.into(),
        config: EvalConfigEcho {
            model: args.model,
            balance: args.balance,
            train_frac: args.train_frac,
            seed: args.seed,
            trees: args.trees,
            max_features: args.max_features,
            k: args.k,
            retained_variance: args.retained_variance,
        },
        train_counts_before_balance: before,
        pca_components,
        warnings,
        report,
    };
    if let Some(path) = &args.json {
        write_text(path, &run.to_json())?;
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub n: usize,
    pub median_seconds: f64,
    pub runs: usize,
}

fn median_seconds(runs: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

/// One row per (algorithm, size). The naive transform only runs up to
/// `2^naive_max`.
pub fn run_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let (lo, hi) = args.sizes;
    let mut rows = Vec::new();
    for e in lo..=hi {
        let n = 1usize << e;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let sig = Signal::new(x.clone(), 16_000, "bench")?;
        let t = median_seconds(args.runs, || {
            std::hint::black_box(fwht(&x, Ordering::Sequency, Normalization::OneOverN));
        });
        rows.push(BenchRow {
            algorithm: "fwht".into(),
            n,
            median_seconds: t,
            runs: args.runs,
        });
        if e <= args.naive_max {
            let t = median_seconds(args.runs, || {
                std::hint::black_box(naive_walsh_hadamard(&x, Ordering::Sequency, Normalization::OneOverN));
            });
            rows.push(BenchRow {
                algorithm: "naive_walsh".into(),
                n,
                median_seconds: t,
                runs: args.runs,
            });
        }
        let mut fft_err = None;
        let t = median_seconds(args.runs, || {
            if let Err(e) = fft_magnitude(&sig, FftSize::Fixed(n)) {
                fft_err = Some(e);
            }
        });
        if let Some(e) = fft_err {
            return Err(e);
        }
        rows.push(BenchRow {
            algorithm: "fft_magnitude".into(),
            n,
            median_seconds: t,
            runs: args.runs,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_templates(path: &Path) -> Result<Vec<ClassTemplate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Returns the path of the written manifest.
pub fn run_synth(args: &SynthArgs) -> Result<PathBuf> {
    let templates = match &args.classes {
        Some(p) => load_templates(p)?,
        None => vec![ClassTemplate::typical(), ClassTemplate::disordered()],
    };
    let counts = match args.n.as_slice() {
        [n] => vec![*n; templates.len()],
        many if many.len() == templates.len() => many.to_vec(),
        many => {
            return Err(Error::Argument(format!(
                "--n lists {} counts for {} classes",
                many.len(),
                templates.len()
            )))
        }
    };
    synth_corpus_counts(&counts, &templates, &args.out, args.seed)?;
    Ok(args.out.join("manifest.csv"))
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, threads: Option<usize>) -> i32 {
    let outcome = match &cli.command {
        Command::Extract(a) => run_extract(a, threads).map(|r| {
            eprintln!(
                "extracted {} of {} files ({} dims) into {}",
                r.n_files - r.n_failed,
                r.n_files,
                r.config.dim,
                a.out.display()
            );
            for f in r.files.iter().filter(|f| !f.ok) {
                eprintln!("failed: {}: {}", f.path, f.error.as_deref().unwrap_or("unknown error"));
            }
            if r.n_failed > 0 {
                1
            } else {
                0
            }
        }),
        Command::Eval(a) => run_eval(a).map(|r| {
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", r.report.render_text());
            0
        }),
        Command::Bench(a) => run_bench(a).and_then(|rows| {
            match &a.out {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    write_bench_csv(&rows, f)?;
                }
                None => write_bench_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(0)
        }),
        Command::Synth(a) => run_synth(a).map(|p| {
            println!("{}", p.display());
            0
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
