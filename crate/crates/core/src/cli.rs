//! Command-line front end: `gen-synthetic`, `gen-mnist`, `align`, `bench` and
//! `score`.
//!
//! Every flag may also come from a config file (`--config FILE`): line-based
//! `key = value` text with one `[subcommand]` section per subcommand. Keys are
//! the long flag names. Flags given on the command line win over the file,
//! which wins over the built-in defaults. Each run writes the merged settings
//! as `manifest.conf` in the same format, so `--config manifest.conf` repeats
//! it exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::aligners::{align, derive_seed, AlignerConfig, EpochRecord, Method};
use crate::datagen::{
    gen_moving_mnist, gen_synthetic, ingest_idx, synthetic_digit, GeneratedPair, MovingMnistSpec, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::evalbench::{
    alignment_score, emit_report, path_svg, run_benchmark, BenchDataset, ReportFormat, ScoreAveraging, ScoreInput,
};
use crate::gates::ContextMatrix;
use crate::seqcore::{
    load_matrix, read_annotations, read_matrix, write_annotations, write_matrix, AlignmentPath, MatrixFormat,
    PairedViews,
};
use crate::warp::{cost_matrix, Metric, SoftDtwConfig};

/// Name of the settings file written next to every run's outputs.
pub const MANIFEST: &str = "manifest.conf";

#[derive(Debug, Parser)]
#[command(name = "cdctw", version, about = "Align pairs of multivariate time series.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a warped, rotated 3-D spiral pair with ground truth.
    GenSynthetic(GenSyntheticArgs),
    /// Generate a noisy moving-digit pair with ground truth and digit masks.
    GenMnist(GenMnistArgs),
    /// Align one pair of sequences.
    Align(AlignArgs),
    /// Score a method ladder over datasets and seeds.
    Bench(BenchArgs),
    /// Score a predicted path against phase annotations.
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FileFormat {
    Csv,
    Bin,
}

impl FileFormat {
    fn matrix(self) -> MatrixFormat {
        match self {
            FileFormat::Csv => MatrixFormat::Csv,
            FileFormat::Bin => MatrixFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Averaging {
    Macro,
    Micro,
}

impl From<Averaging> for ScoreAveraging {
    fn from(a: Averaging) -> Self {
        match a {
            Averaging::Macro => ScoreAveraging::Macro,
            Averaging::Micro => ScoreAveraging::Micro,
        }
    }
}

/// Comma-separated list, e.g. `128,64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|_| format!("bad width {w:?}")))
            .collect::<std::result::Result<_, _>>()
            .map(Widths)
    }
}

impl fmt::Display for Widths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Seed list: `0..9` (inclusive), `3` or `1,4,7`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("bad seed list {s:?} (expected e.g. 0..9 or 1,2,3)");
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            (a..=b).collect()
        } else {
            s.split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<std::result::Result<_, _>>()?
        };
        if seeds.is_empty() {
            return Err(bad());
        }
        Ok(SeedList(seeds))
    }
}

impl fmt::Display for SeedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.0;
        let contiguous = s.len() > 1 && s.windows(2).all(|w| w[1] == w[0] + 1);
        if contiguous {
            write!(f, "{}..{}", s[0], s[s.len() - 1])
        } else {
            let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            f.write_str(&parts.join(","))
        }
    }
}

/// Comma-separated method names.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodList(pub Vec<Method>);

impl FromStr for MethodList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|m| m.trim().parse::<Method>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()
            .map(MethodList)
    }
}

impl fmt::Display for MethodList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|m| m.name()).collect();
        f.write_str(&parts.join(","))
    }
}

fn all_methods() -> MethodList {
    MethodList(Method::ALL.to_vec())
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// Config file with a [gen-synthetic] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
    /// Master seed; warp and transform streams are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Length of the latent timeline.
    #[arg(long, default_value_t = SyntheticSpec::default().base_length)]
    pub base_length: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().noise_std)]
    pub noise_std: f64,
    /// Independent random time warps per view.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub warp: bool,
    /// Independent random 3-D rotation per view.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub rotate: bool,
    /// Number of annotated temporal phases.
    #[arg(long, default_value_t = SyntheticSpec::default().phases)]
    pub phases: usize,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
}

#[derive(Debug, Args)]
pub struct GenMnistArgs {
    /// Config file with a [gen-mnist] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
    /// Master seed; walk, warp and noise streams are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pixel noise standard deviation (0.102, 0.421 and 0.737 are the usual levels).
    #[arg(long, default_value_t = 0.421)]
    pub noise_std: f64,
    /// Canvas side in pixels.
    #[arg(long, default_value_t = 64)]
    pub canvas: usize,
    /// Latent frame count before warping.
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value_t = crate::datagen::DEFAULT_PHASES)]
    pub phases: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub warp: bool,
    /// IDX3 image file (e.g. MNIST train-images-idx3-ubyte).
    #[arg(long)]
    pub idx: Option<PathBuf>,
    /// Use procedurally drawn digits when no IDX file is given.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub fallback_digits: bool,
    /// Image index of the digit in view x.
    #[arg(long, default_value_t = 0)]
    pub digit_x: usize,
    /// Image index of the digit in view y; equal to --digit-x for the same digit.
    #[arg(long, default_value_t = 1)]
    pub digit_y: usize,
    #[arg(long, value_enum, default_value_t = FileFormat::Bin)]
    pub format: FileFormat,
}

/// Training hyperparameters shared by `align` and `bench`.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = AlignerConfig::default().embed_dim)]
    pub embed_dim: usize,
    /// Epoch cap (alternations for ctw).
    #[arg(long, default_value_t = AlignerConfig::default().epochs)]
    pub epochs: usize,
    /// Stop after this many epochs without a path change.
    #[arg(long, default_value_t = AlignerConfig::default().patience)]
    pub patience: usize,
    /// Sparsity weight for the x gates.
    #[arg(long, default_value_t = AlignerConfig::default().lambda_x)]
    pub lambda_x: f64,
    /// Sparsity weight for the y gates.
    #[arg(long, default_value_t = AlignerConfig::default().lambda_y)]
    pub lambda_y: f64,
    #[arg(long, default_value_t = AlignerConfig::default().learning_rate)]
    pub learning_rate: f64,
    /// Covariance ridge.
    #[arg(long, default_value_t = AlignerConfig::default().ridge)]
    pub ridge: f64,
    /// Gate noise standard deviation.
    #[arg(long, default_value_t = AlignerConfig::default().gate_sigma)]
    pub gate_sigma: f64,
    /// Soft-DTW smoothing (soft methods).
    #[arg(long, default_value_t = SoftDtwConfig::default().gamma)]
    pub soft_gamma: f64,
    /// Per-epoch gamma factor (annealed methods).
    #[arg(long, default_value_t = SoftDtwConfig::default().anneal_factor)]
    pub anneal_factor: f64,
    /// Lower bound for annealed gamma.
    #[arg(long, default_value_t = SoftDtwConfig::default().anneal_floor)]
    pub anneal_floor: f64,
    /// Weight of the soft-DTW loss term.
    #[arg(long, default_value_t = AlignerConfig::default().soft_weight)]
    pub soft_weight: f64,
    /// Frame distance: squared-euclidean, euclidean or l1.
    #[arg(long, default_value_t = AlignerConfig::default().metric)]
    pub metric: Metric,
    /// Views wider than this are reduced by PCA before linear CCA.
    #[arg(long, default_value_t = AlignerConfig::default().ctw_max_dim)]
    pub ctw_max_dim: usize,
    /// Hidden widths of the embedding networks.
    #[arg(long, default_value_t = Widths(AlignerConfig::default().embed_hidden))]
    pub embed_hidden: Widths,
    /// Hidden widths of the gating networks.
    #[arg(long, default_value_t = Widths(AlignerConfig::default().gate_hidden))]
    pub gate_hidden: Widths,
}

impl TrainArgs {
    fn config(&self, method: Method, seed: u64) -> AlignerConfig {
        AlignerConfig {
            method,
            seed,
            embed_dim: self.embed_dim,
            epochs: self.epochs,
            patience: self.patience,
            lambda_x: self.lambda_x,
            lambda_y: self.lambda_y,
            learning_rate: self.learning_rate,
            ridge: self.ridge,
            gate_sigma: self.gate_sigma,
            soft: SoftDtwConfig {
                gamma: self.soft_gamma,
                anneal_factor: self.anneal_factor,
                anneal_floor: self.anneal_floor,
            },
            soft_weight: self.soft_weight,
            metric: self.metric,
            ctw_max_dim: self.ctw_max_dim,
            embed_hidden: self.embed_hidden.0.clone(),
            gate_hidden: self.gate_hidden.0.clone(),
            ..AlignerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Config file with an [align] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First view (`.csv` or binary matrix, features x frames).
    #[arg(long, required = true)]
    pub x: Option<PathBuf>,
    /// Second view.
    #[arg(long, required = true)]
    pub y: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = Method::Cdctw)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gate context for x: `auto` (frame-difference magnitude) or a matrix file.
    #[arg(long, default_value = "auto")]
    pub ctx_x: String,
    /// Gate context for y: `auto` or a matrix file.
    #[arg(long, default_value = "auto")]
    pub ctx_y: String,
    /// Phase annotations of x; with --ann-y the run is scored.
    #[arg(long)]
    pub ann_x: Option<PathBuf>,
    #[arg(long)]
    pub ann_y: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Config file with a [bench] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A generated dataset directory, or a text file listing one per line.
    #[arg(long, required = true)]
    pub datasets: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, default_value_t = all_methods())]
    pub methods: MethodList,
    /// Seeds, e.g. `0..9` (inclusive) or `1,5,9`.
    #[arg(long, default_value = "0..9")]
    pub seeds: SeedList,
    /// Parallel cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t = ReportKind::Csv)]
    pub format: ReportKind,
    /// Record wall times (reports then differ between repeated runs).
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub include_time: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Config file with a [score] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predicted path CSV.
    #[arg(long, required = true)]
    pub pred: Option<PathBuf>,
    /// Ground-truth path CSV; checked against the predicted path's extent.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, required = true)]
    pub ann_x: Option<PathBuf>,
    #[arg(long, required = true)]
    pub ann_y: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Averaging::Macro)]
    pub averaging: Averaging,
    /// Optional directory for `score.txt` and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed `key = value` sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut cfg = ConfigFile::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                cfg.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {lineno}: expected `key = value`, got {line:?}"))?;
            let section = current
                .as_ref()
                .ok_or_else(|| format!("line {lineno}: key outside a [section]"))?;
            let key = k.trim().replace('_', "-");
            let entries = cfg.sections.get_mut(section).expect("section inserted");
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(format!("line {lineno}: duplicate key {key:?} in [{section}]"));
            }
        }
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, entries) in &self.sections {
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

/// Keys whose values are input files; manifests store them as absolute paths.
const INPUT_PATH_KEYS: &[&str] = &["x", "y", "ann-x", "ann-y", "ctx-x", "ctx-y", "datasets", "pred", "truth", "idx"];

struct Usage(String);

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 for usage errors and 1 for failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let (cli, settings) = match resolve(args) {
        Ok(v) => v,
        Err(Resolve::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(Resolve::Usage(Usage(msg))) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    match execute(cli, settings) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

enum Resolve {
    Clap(clap::Error),
    Usage(Usage),
}

/// Merges command line, config file and defaults, and returns the typed
/// arguments plus the merged settings for the manifest.
fn resolve(args: Vec<OsString>) -> std::result::Result<(Cli, ConfigFile), Resolve> {
    // First pass without required checks: required flags may come from the file.
    let relaxed = Cli::command().mut_subcommands(|s| s.mut_args(|a| a.required(false)));
    let matches = relaxed.try_get_matches_from(&args).map_err(Resolve::Clap)?;
    let (sub, sub_m) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = Cli::command();
    let sub_cmd = sub_cmd.find_subcommand(sub).expect("known subcommand").clone();

    let file_entries = match sub_m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Resolve::Usage(Usage(format!("cannot read config {}: {e}", path.display()))))?;
            let cfg = ConfigFile::parse(&text)
                .map_err(|e| Resolve::Usage(Usage(format!("{}: {e}", path.display()))))?;
            for name in cfg.sections.keys() {
                if Cli::command().find_subcommand(name).is_none() {
                    return Err(Resolve::Usage(Usage(format!(
                        "{}: unknown section [{name}]",
                        path.display()
                    ))));
                }
            }
            cfg.sections.get(sub).cloned().unwrap_or_default()
        }
        None => BTreeMap::new(),
    };

    let mut merged_argv: Vec<OsString> = vec![args[0].clone(), sub.into()];
    let mut known = Vec::new();
    for arg in sub_cmd.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if id == "config" || id == "help" || id == "version" {
            continue;
        }
        known.push(long.to_string());
        let from_cli = sub_m.value_source(id) == Some(ValueSource::CommandLine);
        let value: Option<OsString> = if from_cli {
            sub_m.get_raw(id).and_then(|mut v| v.next()).map(|v| v.to_os_string())
        } else {
            file_entries.get(long).map(OsString::from)
        };
        if let Some(v) = value {
            let mut flag = OsString::from(format!("--{long}="));
            flag.push(v);
            merged_argv.push(flag);
        }
    }
    if let Some(unknown) = file_entries.keys().find(|k| !known.contains(k)) {
        return Err(Resolve::Usage(Usage(format!(
            "unknown key {unknown:?} in [{sub}]; valid keys: {}",
            known.join(", ")
        ))));
    }

    let full = Cli::command().try_get_matches_from(&merged_argv).map_err(Resolve::Clap)?;
    let cli = Cli::from_arg_matches(&full).map_err(Resolve::Clap)?;
    let (_, final_m) = full.subcommand().expect("subcommand is required");
    let mut entries = BTreeMap::new();
    for arg in sub_cmd.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if id == "config" || id == "help" || id == "version" {
            continue;
        }
        if let Some(v) = final_m.get_raw(id).and_then(|mut v| v.next()) {
            let mut v = v.to_string_lossy().into_owned();
            if INPUT_PATH_KEYS.contains(&long) && v != "auto" {
                if let Ok(abs) = fs::canonicalize(&v) {
                    v = abs.to_string_lossy().into_owned();
                }
            }
            entries.insert(long.to_string(), v);
        }
    }
    let mut settings = ConfigFile::default();
    settings.sections.insert(sub.to_string(), entries);
    Ok((cli, settings))
}

fn execute(cli: Cli, settings: ConfigFile) -> Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => cmd_gen_synthetic(a, &settings),
        Command::GenMnist(a) => cmd_gen_mnist(a, &settings),
        Command::Align(a) => cmd_align(a, &settings),
        Command::Bench(a) => cmd_bench(a, &settings),
        Command::Score(a) => cmd_score(a, &settings),
    }
}

fn required(p: Option<PathBuf>) -> PathBuf {
    p.expect("clap enforces required arguments")
}

fn prepare_out(dir: &Path, settings: &ConfigFile) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(MANIFEST);
    let text = format!("# cdctw {} run manifest\n{}", env!("CARGO_PKG_VERSION"), settings.render());
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a generated pair: `x.*`, `y.*`, `ann_x.txt`, `ann_y.txt`,
/// `truth.csv` and, for moving digits, `mask_x.bin` / `mask_y.bin`.
pub fn save_generated(dir: &Path, g: &GeneratedPair, format: MatrixFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        MatrixFormat::Csv => "csv",
        MatrixFormat::Binary => "bin",
    };
    write_matrix(&dir.join(format!("x.{ext}")), g.views.x.data(), format)?;
    write_matrix(&dir.join(format!("y.{ext}")), g.views.y.data(), format)?;
    for (name, view) in [("ann_x.txt", &g.views.x), ("ann_y.txt", &g.views.y)] {
        if let Some(a) = view.annotations() {
            write_annotations(&dir.join(name), a)?;
        }
    }
    g.truth.save(&dir.join("truth.csv"))?;
    if let Some((mx, my)) = &g.masks {
        write_matrix(&dir.join("mask_x.bin"), mx, MatrixFormat::Binary)?;
        write_matrix(&dir.join("mask_y.bin"), my, MatrixFormat::Binary)?;
    }
    Ok(())
}

fn find_view(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["csv", "bin"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
        .ok_or_else(|| Error::load(dir, format!("no {stem}.csv or {stem}.bin")))
}

/// Reads a directory written by [`save_generated`] as an annotated pair plus
/// its ground-truth path.
pub fn load_generated(dir: &Path) -> Result<(PairedViews, AlignmentPath)> {
    let xp = find_view(dir, "x")?;
    let yp = find_view(dir, "y")?;
    let x = load_matrix(&xp, MatrixFormat::from_path(&xp))?.with_annotations(read_annotations(&dir.join("ann_x.txt"))?)?;
    let y = load_matrix(&yp, MatrixFormat::from_path(&yp))?.with_annotations(read_annotations(&dir.join("ann_y.txt"))?)?;
    let truth = AlignmentPath::load(&dir.join("truth.csv"))?;
    Ok((PairedViews::new(x, y), truth))
}

fn cmd_gen_synthetic(a: GenSyntheticArgs, settings: &ConfigFile) -> Result<()> {
    let out = required(a.out);
    let spec = SyntheticSpec {
        base_length: a.base_length,
        warp_seed: derive_seed(a.seed, 11),
        transform_seed: derive_seed(a.seed, 12),
        noise_std: a.noise_std,
        warp: a.warp,
        rotate: a.rotate,
        phases: a.phases,
    };
    let g = gen_synthetic(&spec)?;
    prepare_out(&out, settings)?;
    save_generated(&out, &g, a.format.matrix())?;
    println!(
        "wrote {} ({} and {} frames)",
        out.display(),
        g.views.x.frames(),
        g.views.y.frames()
    );
    Ok(())
}

fn cmd_gen_mnist(a: GenMnistArgs, settings: &ConfigFile) -> Result<()> {
    let out = required(a.out);
    let (dx, dy) = match (&a.idx, a.fallback_digits) {
        (Some(path), _) => {
            let images = ingest_idx(path)?;
            let pick = |i: usize| {
                images.get(i).cloned().ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: images.len(),
                })
            };
            (pick(a.digit_x)?, pick(a.digit_y)?)
        }
        (None, true) => (synthetic_digit(a.digit_x as u64), synthetic_digit(a.digit_y as u64)),
        (None, false) => {
            return Err(Error::InvalidArgument(
                "no digit source: pass --idx FILE or --fallback-digits true".into(),
            ))
        }
    };
    let spec = |digit, warp_stream, noise_stream| MovingMnistSpec {
        canvas: a.canvas,
        frames: a.frames,
        digit,
        noise_std: a.noise_std,
        warp_seed: derive_seed(a.seed, warp_stream),
        noise_seed: derive_seed(a.seed, noise_stream),
        warp: a.warp,
        phases: a.phases,
    };
    let g = gen_moving_mnist(&spec(dx, 21, 22), &spec(dy, 23, 24), derive_seed(a.seed, 25))?;
    prepare_out(&out, settings)?;
    save_generated(&out, &g, a.format.matrix())?;
    println!(
        "wrote {} ({} and {} frames of {} pixels)",
        out.display(),
        g.views.x.frames(),
        g.views.y.frames(),
        g.views.x.features()
    );
    Ok(())
}

fn load_context(spec: &str, frames: usize) -> Result<Option<ContextMatrix>> {
    if spec == "auto" {
        return Ok(None);
    }
    let path = Path::new(spec);
    let ctx = ContextMatrix::external(read_matrix(path, MatrixFormat::from_path(path))?)?;
    if ctx.frames() != frames {
        return Err(Error::Shape(format!(
            "context {} has {} frames, view has {frames}",
            path.display(),
            ctx.frames()
        )));
    }
    Ok(Some(ctx))
}

fn epochs_csv(epochs: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,correlation,l0_x,l0_y,soft_dtw,gamma,path_changed\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_else(|| "NA".into());
    for e in epochs {
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
            e.epoch,
            e.loss,
            e.correlation,
            e.l0_x,
            e.l0_y,
            opt(e.soft_dtw),
            opt(e.gamma),
            e.path_changed
        ));
    }
    s
}

fn cmd_align(a: AlignArgs, settings: &ConfigFile) -> Result<()> {
    let (xp, yp, out) = (required(a.x), required(a.y), required(a.out));
    let mut x = load_matrix(&xp, MatrixFormat::from_path(&xp))?;
    let mut y = load_matrix(&yp, MatrixFormat::from_path(&yp))?;
    if let Some(p) = &a.ann_x {
        x = x.with_annotations(read_annotations(p)?)?;
    }
    if let Some(p) = &a.ann_y {
        y = y.with_annotations(read_annotations(p)?)?;
    }
    let context = match (load_context(&a.ctx_x, x.frames())?, load_context(&a.ctx_y, y.frames())?) {
        (None, None) => None,
        (cx, cy) => Some((
            cx.unwrap_or_else(|| crate::gates::flow_context(&x)),
            cy.unwrap_or_else(|| crate::gates::flow_context(&y)),
        )),
    };
    let pair = PairedViews::new(x, y);
    let cfg = a.train.config(a.method, a.seed);
    let result = align(&pair, context.as_ref(), &cfg)?;

    prepare_out(&out, settings)?;
    result.path.save(&out.join("path.csv"))?;
    if !result.epochs.is_empty() {
        write_text(&out.join("epochs.csv"), &epochs_csv(&result.epochs))?;
    }
    let (ex, ey) = match &result.embeddings {
        Some((ex, ey)) => (ex.clone(), ey.clone()),
        None => (pair.x.data().clone(), pair.y.data().clone()),
    };
    if result.embeddings.is_some() {
        write_matrix(&out.join("embedding_x.csv"), &ex, MatrixFormat::Csv)?;
        write_matrix(&out.join("embedding_y.csv"), &ey, MatrixFormat::Csv)?;
    }
    if let Some((gx, gy)) = &result.gates {
        write_matrix(&out.join("gates_x.bin"), &gx.z, MatrixFormat::Binary)?;
        write_matrix(&out.join("gates_y.bin"), &gy.z, MatrixFormat::Binary)?;
    }
    if ex.nrows() == ey.nrows() {
        let cost = cost_matrix(&ex, &ey, cfg.metric)?;
        write_text(&out.join("path.svg"), &path_svg(cost.values(), &result.path, None))?;
    }
    if let (Some(ann_x), Some(ann_y)) = (pair.x.annotations(), pair.y.annotations()) {
        let score = alignment_score(
            ScoreInput {
                ann_x,
                ann_y,
                path: &result.path,
            },
            ScoreAveraging::Macro,
        )?;
        write_text(&out.join("score.txt"), &format!("{score:.6}\n"))?;
        println!("score {score:.6}");
    }
    println!("{} path of length {} written to {}", a.method, result.path.len(), out.display());
    Ok(())
}

fn dataset_dirs(spec: &Path) -> Result<Vec<PathBuf>> {
    if spec.is_dir() {
        return Ok(vec![spec.to_path_buf()]);
    }
    let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let base = spec.parent().unwrap_or(Path::new("."));
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if dirs.is_empty() {
        return Err(Error::load(spec, "lists no dataset directories"));
    }
    Ok(dirs)
}

fn cmd_bench(a: BenchArgs, settings: &ConfigFile) -> Result<()> {
    let (spec, out) = (required(a.datasets), required(a.out));
    let mut datasets = Vec::new();
    for dir in dataset_dirs(&spec)? {
        let (pair, truth) = load_generated(&dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        datasets.push(BenchDataset {
            name,
            pair,
            truth,
            context: None,
        });
    }
    let base = a.train.config(Method::Cdctw, 0);
    let report = run_benchmark(&datasets, &a.methods.0, &a.seeds.0, &base, a.jobs.max(1))?;
    prepare_out(&out, settings)?;
    let format = match a.format {
        ReportKind::Csv => ReportFormat::Csv,
        ReportKind::Json => ReportFormat::Json,
    };
    emit_report(&report, &out, format, a.include_time)?;
    for agg in &report.aggregates {
        println!(
            "{:<12} {:<20} {:.3} ± {:.3} ({} runs)",
            agg.method.name(),
            agg.dataset,
            agg.mean,
            agg.std,
            agg.runs
        );
    }
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} on {} seed {} failed: {}",
            r.method,
            r.dataset,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs, settings: &ConfigFile) -> Result<()> {
    let pred = AlignmentPath::load(&required(a.pred))?;
    let ann_x = read_annotations(&required(a.ann_x))?;
    let ann_y = read_annotations(&required(a.ann_y))?;
    if let Some(tp) = &a.truth {
        let truth = AlignmentPath::load(tp)?;
        let end = |p: &AlignmentPath| (p.px.last().copied(), p.py.last().copied());
        if end(&truth) != end(&pred) {
            return Err(Error::Shape(format!(
                "predicted path ends at {:?}, truth at {:?}",
                end(&pred),
                end(&truth)
            )));
        }
    }
    let score = alignment_score(
        ScoreInput {
            ann_x: &ann_x,
            ann_y: &ann_y,
            path: &pred,
        },
        a.averaging.into(),
    )?;
    if let Some(out) = &a.out {
        prepare_out(out, settings)?;
        write_text(&out.join("score.txt"), &format!("{score:.6}\n"))?;
    }
    println!("{score:.6}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!("0..3".parse::<SeedList>().unwrap().0, vec![0, 1, 2, 3]);
        assert_eq!("4,1".parse::<SeedList>().unwrap().0, vec![4, 1]);
        assert!("3..1".parse::<SeedList>().is_err());
        assert!("a".parse::<SeedList>().is_err());
        assert_eq!(SeedList(vec![0, 1, 2]).to_string(), "0..2");
        assert_eq!(SeedList(vec![5]).to_string(), "5");
    }

    #[test]
    fn method_lists_report_valid_names() {
        assert_eq!("ctw,dctw".parse::<MethodList>().unwrap().0, vec![Method::Ctw, Method::Dctw]);
        let err = "ctw,gtw".parse::<MethodList>().unwrap_err();
        assert!(err.contains("cdctw-astw"), "{err}");
    }

    #[test]
    fn config_file_parsing() {
        let cfg = ConfigFile::parse("# c\n[align]\nepochs = 5\nlambda_x = 0.1\n\n[bench]\njobs=2\n").unwrap();
        assert_eq!(cfg.sections["align"]["epochs"], "5");
        assert_eq!(cfg.sections["align"]["lambda-x"], "0.1");
        assert_eq!(cfg.sections["bench"]["jobs"], "2");
        assert!(ConfigFile::parse("epochs = 5").is_err());
        assert!(ConfigFile::parse("[align]\nepochs").is_err());
        assert!(ConfigFile::parse("[align]\na = 1\na = 2").is_err());
        assert_eq!(ConfigFile::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn widths_round_trip() {
        let w: Widths = "128,64".parse().unwrap();
        assert_eq!(w.0, vec![128, 64]);
        assert_eq!(w.to_string(), "128,64");
        assert!("1,x".parse::<Widths>().is_err());
    }

    #[test]
    fn help_renders() {
        Cli::command().debug_assert();
    }
}
