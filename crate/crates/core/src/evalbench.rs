//! Alignment score, multi-seed benchmark sweep, and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligners::{align, AlignerConfig, Method};
use crate::datagen::GeneratedPair;
use crate::error::{Error, Result};
use crate::gates::ContextMatrix;
use crate::seqcore::{AlignmentPath, PairedViews};
use crate::warp::validate_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreAveraging {
    /// Mean of per-phase Jaccard overlaps.
    #[default]
    Macro,
    /// Pooled intersection over pooled union across phases.
    Micro,
}

/// Inputs of [`alignment_score`].
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub ann_x: &'a [i64],
    pub ann_y: &'a [i64],
    pub path: &'a AlignmentPath,
}

/// Warps both annotation tracks by the path and, per phase label, compares
/// the sets of aligned positions carrying that label in each track:
/// `|kx ∩ ky| / |kx ∪ ky|`. Phases absent from both tracks are skipped.
pub fn alignment_score(input: ScoreInput<'_>, averaging: ScoreAveraging) -> Result<f64> {
    let ScoreInput { ann_x, ann_y, path } = input;
    if !validate_path(path, ann_x.len(), ann_y.len()) {
        return Err(Error::InvalidArgument(format!(
            "path is not a valid alignment of {} and {} frames",
            ann_x.len(),
            ann_y.len()
        )));
    }
    let mut per_phase: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (&i, &j) in path.px.iter().zip(&path.py) {
        let (lx, ly) = (ann_x[i], ann_y[j]);
        if lx == ly {
            let e = per_phase.entry(lx).or_default();
            e.0 += 1;
            e.1 += 1;
        } else {
            per_phase.entry(lx).or_default().1 += 1;
            per_phase.entry(ly).or_default().1 += 1;
        }
    }
    let phases: Vec<(usize, usize)> = per_phase.into_values().filter(|&(_, u)| u > 0).collect();
    if phases.is_empty() {
        return Ok(0.0);
    }
    Ok(match averaging {
        ScoreAveraging::Macro => {
            phases.iter().map(|&(i, u)| i as f64 / u as f64).sum::<f64>() / phases.len() as f64
        }
        ScoreAveraging::Micro => {
            let (i, u) = phases.iter().fold((0, 0), |(a, b), &(i, u)| (a + i, b + u));
            i as f64 / u as f64
        }
    })
}

/// Jaccard overlap of two explicit index sets.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Option<f64> {
    let union = a.union(b).count();
    (union > 0).then(|| a.intersection(b).count() as f64 / union as f64)
}

/// A dataset entry of a benchmark sweep.
#[derive(Debug, Clone)]
pub struct BenchDataset {
    pub name: String,
    pub pair: PairedViews,
    pub truth: AlignmentPath,
    /// External context per view; `None` uses flow magnitude.
    pub context: Option<(ContextMatrix, ContextMatrix)>,
}

impl BenchDataset {
    pub fn from_generated(name: impl Into<String>, g: GeneratedPair) -> Self {
        BenchDataset {
            name: name.into(),
            pair: g.views,
            truth: g.truth,
            context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub dataset: String,
    pub seed: u64,
    pub score: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub dataset: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub seeds: Vec<u64>,
}

/// Mean and sample (n - 1) standard deviation; zero spread for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Runs every (method, dataset, seed) cell. Deterministic methods run once
/// and report a single score. Failures are recorded, not propagated.
/// `jobs > 1` executes cells on a thread pool; results are identical.
pub fn run_benchmark(
    datasets: &[BenchDataset],
    methods: &[Method],
    seeds: &[u64],
    base: &AlignerConfig,
    jobs: usize,
) -> Result<BenchReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seed list must not be empty".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort_by_key(|m| m.ladder_rank());
    methods.dedup();

    let mut cells = Vec::new();
    for &method in &methods {
        let cell_seeds: &[u64] = if method.is_deterministic() { &seeds[..1] } else { seeds };
        for (d, _) in datasets.iter().enumerate() {
            for &seed in cell_seeds {
                cells.push((method, d, seed));
            }
        }
    }
    let run_cell = |&(method, d, seed): &(Method, usize, u64)| -> RunRecord {
        let ds = &datasets[d];
        let cfg = AlignerConfig {
            method,
            seed,
            ..base.clone()
        };
        let start = Instant::now();
        let outcome = align(&ds.pair, ds.context.as_ref(), &cfg).and_then(|res| {
            let ann_x = ds.pair.x.annotations().ok_or_else(|| missing_ann(&ds.name))?;
            let ann_y = ds.pair.y.annotations().ok_or_else(|| missing_ann(&ds.name))?;
            alignment_score(
                ScoreInput {
                    ann_x,
                    ann_y,
                    path: &res.path,
                },
                ScoreAveraging::Macro,
            )
        });
        let wall_time_s = start.elapsed().as_secs_f64();
        let (score, error) = match outcome {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        RunRecord {
            method,
            dataset: ds.name.clone(),
            seed,
            score,
            wall_time_s,
            error,
        }
    };
    let runs: Vec<RunRecord> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };

    let mut aggregates = Vec::new();
    for &method in &methods {
        for ds in datasets {
            let scores: Vec<f64> = runs
                .iter()
                .filter(|r| r.method == method && r.dataset == ds.name)
                .filter_map(|r| r.score)
                .collect();
            if scores.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&scores);
            aggregates.push(Aggregate {
                method,
                dataset: ds.name.clone(),
                mean,
                std,
                runs: scores.len(),
            });
        }
    }
    Ok(BenchReport {
        runs,
        aggregates,
        seeds: seeds.to_vec(),
    })
}

fn missing_ann(name: &str) -> Error {
    Error::InvalidArgument(format!("dataset {name} has no annotations"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Per-run table: `method,dataset,seed,score,wall_time_s`.
pub fn runs_csv(report: &BenchReport, include_time: bool) -> String {
    let mut s = String::from("method,dataset,seed,score,wall_time_s\n");
    for r in &report.runs {
        let score = r.score.map(|v| format!("{v:.6}")).unwrap_or_else(|| "NA".into());
        let time = if include_time {
            format!("{:.3}", r.wall_time_s)
        } else {
            "NA".into()
        };
        let _ = writeln!(s, "{},{},{},{},{}", r.method, r.dataset, r.seed, score, time);
    }
    s
}

/// Aggregate table: `method,dataset,mean,std`.
pub fn aggregate_csv(report: &BenchReport) -> String {
    let mut s = String::from("method,dataset,mean,std\n");
    for a in &report.aggregates {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", a.method, a.dataset, a.mean, a.std);
    }
    s
}

/// Writes `runs.csv` and `aggregate.csv`, or `report.json`, into `dir`.
/// Wall times are only written when `include_time` is set, so reports from
/// repeated runs can be compared byte for byte.
pub fn emit_report(report: &BenchReport, dir: &Path, format: ReportFormat, include_time: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    match format {
        ReportFormat::Csv => {
            write("runs.csv", runs_csv(report, include_time))?;
            write("aggregate.csv", aggregate_csv(report))
        }
        ReportFormat::Json => {
            let mut r = report.clone();
            if !include_time {
                r.runs.iter_mut().for_each(|run| run.wall_time_s = 0.0);
            }
            write("report.json", serde_json::to_string_pretty(&r).expect("report serializes"))
        }
    }
}

/// Cost matrix as a grayscale grid with the path overlaid in red.
pub fn path_svg(cost: &DMatrix<f64>, path: &AlignmentPath, truth: Option<&AlignmentPath>) -> String {
    let (nx, ny) = cost.shape();
    let cell = (600.0 / nx.max(ny) as f64).clamp(1.0, 12.0);
    let (w, h) = (ny as f64 * cell, nx as f64 * cell);
    let max = cost.max().max(f64::MIN_POSITIVE);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for i in 0..nx {
        for j in 0..ny {
            let g = (255.0 * (1.0 - cost[(i, j)] / max)).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({g},{g},{g})\"/>",
                j as f64 * cell,
                i as f64 * cell
            );
        }
    }
    let mut polyline = |p: &AlignmentPath, color: &str| {
        let pts: Vec<String> = p
            .px
            .iter()
            .zip(&p.py)
            .map(|(&i, &j)| format!("{},{}", (j as f64 + 0.5) * cell, (i as f64 + 0.5) * cell))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{}\"/>",
            pts.join(" "),
            (cell / 3.0).max(1.0)
        );
    };
    if let Some(t) = truth {
        polyline(t, "blue");
    }
    polyline(path, "red");
    s.push_str("</svg>\n");
    s
}

/// One gate frame reshaped to a `side x side` heatmap (row-major pixels).
pub fn gate_heatmap_svg(gates: &DMatrix<f64>, frame: usize, side: usize) -> Result<String> {
    if gates.nrows() != side * side {
        return Err(Error::Shape(format!(
            "{} gates cannot be drawn on a {side}x{side} canvas",
            gates.nrows()
        )));
    }
    if frame >= gates.ncols() {
        return Err(Error::IndexOutOfRange {
            index: frame,
            len: gates.ncols(),
        });
    }
    let cell = 6;
    let w = side * cell;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" viewBox=\"0 0 {w} {w}\" data-rows=\"{side}\" data-cols=\"{side}\">\n"
    );
    for r in 0..side {
        for c in 0..side {
            let v = (gates[(r * side + c, frame)].clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({v},{v},{v})\"/>",
                c * cell,
                r * cell
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
