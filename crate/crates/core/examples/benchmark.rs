//! A small benchmark sweep: several generated pairs, part of the method
//! ladder, three seeds, results as a table and as CSV.
//!
//! cargo run --release --example benchmark

use cdctw::datagen::{gen_synthetic, SyntheticSpec};
use cdctw::evalbench::{aggregate_csv, run_benchmark, BenchDataset};
use cdctw::{AlignerConfig, Method};

fn main() -> cdctw::Result<()> {
    let datasets = [0.05, 0.2, 0.5]
        .into_iter()
        .enumerate()
        .map(|(i, noise)| {
            let g = gen_synthetic(&SyntheticSpec {
                noise_std: noise,
                warp_seed: i as u64,
                transform_seed: 100 + i as u64,
                ..SyntheticSpec::default()
            })?;
            Ok(BenchDataset::from_generated(format!("spiral-noise-{noise}"), g))
        })
        .collect::<cdctw::Result<Vec<_>>>()?;

    let methods = [Method::DtwRaw, Method::PcaDtw, Method::Ctw, Method::Dctw, Method::Cdctw];
    let base = AlignerConfig {
        epochs: 100,
        lambda_x: 0.05,
        lambda_y: 0.05,
        ..AlignerConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = run_benchmark(&datasets, &methods, &[0, 1, 2], &base, jobs)?;

    println!("{:10} {:22} {:>6} {:>6} {:>4}", "method", "dataset", "mean", "std", "runs");
    for a in &report.aggregates {
        println!("{:10} {:22} {:6.3} {:6.3} {:4}", a.method.name(), a.dataset, a.mean, a.std, a.runs);
    }
    println!("\n{}", aggregate_csv(&report));
    Ok(())
}
