//! Command-line driver: single runs and k/N sweeps.
//!
//! Settings come from flags, optionally layered over a flat TOML file given
//! with `--config` whose keys are the flag names (`sweep-k = [3, 5]`, ...).
//! Flags win over file values.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;

use crate::data::{load_matrix, Normalization};
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::report::{SweepCell, SweepSummary};
use crate::train::{train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const DATA_DIR_ENV: &str = "IGMTF_DATA_DIR";

#[derive(Parser, Debug, Default, Clone, PartialEq, Deserialize)]
#[command(
    name = "igmtf",
    version,
    about = "Instance-wise graph forecasting for multivariate time series"
)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunArgs {
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset file (comma-separated, optionally gzip). Relative paths that do
    /// not exist are also looked up under $IGMTF_DATA_DIR.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Steps ahead to forecast [default: 3].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Past observations per instance [default: 168].
    #[arg(long)]
    pub window: Option<usize>,
    /// Embedding width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Number of sampled training timestamps.
    #[arg(long)]
    pub k: Option<usize>,
    /// Neighbours kept per instance after masking.
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 penalty weight [default: 1e-4].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// full, ns (random sampling) or nw (no mapping matrices).
    #[arg(long)]
    pub variant: Option<Variant>,
    /// max (per-variable max-abs scaling) or none.
    #[arg(long)]
    pub normalize: Option<Normalization>,
    /// Report file, or the output directory in sweep mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated k values; runs one training per grid cell.
    #[arg(long, value_delimiter = ',')]
    pub sweep_k: Option<Vec<usize>>,
    /// Comma-separated neighbour counts for the sweep grid.
    #[arg(long, value_delimiter = ',')]
    pub sweep_n: Option<Vec<usize>>,
    /// Write the selected parameters here (single runs only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many epochs without a better validation RRSE.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Drop the batch's own timestamp from the sampling pool.
    #[arg(long)]
    pub exclude_self: bool,
}

impl RunArgs {
    /// Fills every unset field from `base`.
    pub fn over(self, base: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config.or(base.config),
            data: self.data.or(base.data),
            horizon: self.horizon.or(base.horizon),
            window: self.window.or(base.window),
            hidden: self.hidden.or(base.hidden),
            k: self.k.or(base.k),
            neighbors: self.neighbors.or(base.neighbors),
            lr: self.lr.or(base.lr),
            lambda: self.lambda.or(base.lambda),
            epochs: self.epochs.or(base.epochs),
            seed: self.seed.or(base.seed),
            variant: self.variant.or(base.variant),
            normalize: self.normalize.or(base.normalize),
            out: self.out.or(base.out),
            sweep_k: self.sweep_k.or(base.sweep_k),
            sweep_n: self.sweep_n.or(base.sweep_n),
            checkpoint: self.checkpoint.or(base.checkpoint),
            patience: self.patience.or(base.patience),
            exclude_self: self.exclude_self || base.exclude_self,
        }
    }

    pub fn from_config_file(path: &Path) -> Result<RunArgs> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub train: TrainConfig,
    pub out: Option<PathBuf>,
    pub sweep_k: Option<Vec<usize>>,
    pub sweep_n: Option<Vec<usize>>,
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn is_sweep(&self) -> bool {
        self.sweep_k.is_some() || self.sweep_n.is_some()
    }
}

/// Published per-dataset settings, indexed by horizon 3, 6, 12, 24:
/// `(hidden, k per horizon, neighbors per horizon)`.
const KNOWN_DATASETS: [(&str, usize, [usize; 4], [usize; 4]); 3] = [
    ("traffic", 256, [30, 5, 10, 3], [20, 30, 30, 10]),
    ("electricity", 512, [5, 3, 10, 5], [20, 3, 5, 20]),
    ("exchange", 512, [20, 5, 10, 5], [20, 10, 10, 20]),
];

/// `(hidden, k, neighbors, lr)` defaults for a dataset file and horizon.
pub fn default_hyperparameters(data: &Path, horizon: usize) -> (usize, usize, usize, f64) {
    let generic = (256, 10, 10, 1e-4);
    let stem = data
        .file_name()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let Some(slot) = [3, 6, 12, 24].iter().position(|&h| h == horizon) else {
        return generic;
    };
    KNOWN_DATASETS
        .iter()
        .find(|(name, ..)| stem.contains(name))
        .map_or(generic, |&(_, hidden, ks, ns)| (hidden, ks[slot], ns[slot], 1e-4))
}

/// Finds the dataset file, falling back to `$IGMTF_DATA_DIR` for relative
/// paths and trying `.txt` / `.txt.gz` suffixes.
pub fn resolve_data(path: &Path, data_dir: Option<&Path>) -> Result<PathBuf> {
    let with_suffixes = |p: PathBuf| {
        let mut v = vec![p.clone()];
        for ext in [".txt", ".txt.gz"] {
            let mut s = p.clone().into_os_string();
            s.push(ext);
            v.push(PathBuf::from(s));
        }
        v
    };
    let mut candidates = with_suffixes(path.to_path_buf());
    if let (true, Some(dir)) = (path.is_relative(), data_dir) {
        candidates.extend(with_suffixes(dir.join(path)));
    }
    candidates.into_iter().find(|p| p.is_file()).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        )
    })
}

pub fn resolve(args: RunArgs, data_dir: Option<&Path>) -> Result<RunConfig> {
    let args = match &args.config {
        Some(path) => {
            let file = RunArgs::from_config_file(path)?;
            args.over(file)
        }
        None => args,
    };
    let data = args
        .data
        .as_deref()
        .ok_or_else(|| Error::Config("--data is required".into()))?;
    let data = resolve_data(data, data_dir)?;
    let base = TrainConfig::default();
    let horizon = args.horizon.unwrap_or(base.horizon);
    let (hidden, k, neighbors, lr) = default_hyperparameters(&data, horizon);
    let train = TrainConfig {
        lr: args.lr.unwrap_or(lr),
        epochs: args.epochs.unwrap_or(base.epochs),
        lambda: args.lambda.unwrap_or(base.lambda),
        k: args.k.unwrap_or(k),
        neighbors: args.neighbors.unwrap_or(neighbors),
        hidden: args.hidden.unwrap_or(hidden),
        window: args.window.unwrap_or(base.window),
        horizon,
        variant: args.variant.unwrap_or_default(),
        seed: args.seed.unwrap_or(base.seed),
        normalization: args.normalize.unwrap_or_default(),
        patience: args.patience,
        exclude_self: args.exclude_self,
    };
    train.validate()?;
    for (flag, list) in [("--sweep-k", &args.sweep_k), ("--sweep-n", &args.sweep_n)] {
        if let Some(list) = list {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::Config(format!("{flag} needs positive values")));
            }
        }
    }
    let config = RunConfig {
        data,
        train,
        out: args.out,
        sweep_k: args.sweep_k,
        sweep_n: args.sweep_n,
        checkpoint: args.checkpoint,
    };
    if config.is_sweep() {
        if config.out.is_none() {
            return Err(Error::Config("sweep mode needs --out <directory>".into()));
        }
        if config.checkpoint.is_some() {
            return Err(Error::Config("--checkpoint is not supported in sweep mode".into()));
        }
    }
    Ok(config)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Io { .. }
        | Error::Parse { .. }
        | Error::Split(_)
        | Error::ZeroColumn { .. }
        | Error::EmptySegment { .. }
        | Error::SampleSize { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// One training run; writes the report to `out` or stdout.
pub fn run(config: &RunConfig) -> Result<()> {
    let raw = load_matrix(&config.data)?;
    let outcome = train(&raw, &config.train)?;
    let mut report = outcome.report;
    report.dataset = Some(config.data.display().to_string());
    match &config.out {
        Some(path) => report.write(path)?,
        None => print!("{}", report.to_toml()?),
    }
    if let Some(path) = &config.checkpoint {
        outcome.params.save(path)?;
    }
    eprintln!(
        "test rrse {} corr {} (best epoch {} of {})",
        fmt_metric(report.rrse),
        fmt_metric(report.corr),
        report.best_epoch,
        report.epochs_run
    );
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.6}"))
}

/// Runs every (k, N) cell with the same seed, writing `k{K}_n{N}.toml` per
/// cell and `summary.toml` into the output directory. A failed cell is
/// recorded and the sweep moves on.
pub fn sweep(config: &RunConfig) -> Result<SweepSummary> {
    let dir = config
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("sweep mode needs --out <directory>".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = load_matrix(&config.data)?;
    let ks = config.sweep_k.clone().unwrap_or_else(|| vec![config.train.k]);
    let ns = config.sweep_n.clone().unwrap_or_else(|| vec![config.train.neighbors]);
    let mut cells = Vec::with_capacity(ks.len() * ns.len());
    for &k in &ks {
        for &neighbors in &ns {
            let cfg = TrainConfig {
                k,
                neighbors,
                ..config.train.clone()
            };
            let name = format!("k{k}_n{neighbors}.toml");
            let result = train(&raw, &cfg).and_then(|outcome| {
                let mut report = outcome.report;
                report.dataset = Some(config.data.display().to_string());
                report.write(dir.join(&name))?;
                Ok(report)
            });
            cells.push(match result {
                Ok(report) => SweepCell {
                    k,
                    neighbors,
                    rrse: report.rrse,
                    corr: report.corr,
                    report: Some(name),
                    error: None,
                },
                Err(e) => {
                    eprintln!("cell k={k} N={neighbors} failed: {e}");
                    SweepCell {
                        k,
                        neighbors,
                        rrse: None,
                        corr: None,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
    }
    let summary = SweepSummary::new(cells);
    let path = dir.join("summary.toml");
    fs::write(&path, summary.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match RunArgs::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    let config = match resolve(args, data_dir.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if config.is_sweep() {
        match sweep(&config) {
            Ok(summary) => {
                print!("{}", summary.table());
                if summary.cells.iter().any(|c| c.error.is_some()) {
                    EXIT_RUNTIME
                } else {
                    EXIT_OK
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        }
    } else {
        match run(&config) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        }
    }
}
