//! Two views that share one hidden signal in different coordinates: CCA
//! recovers it, PCA (which only looks at variance) need not.
//!
//! cargo run --example cca_projection

use cdctw::cca::{cca, covariances_of, Pca};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn main() -> cdctw::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 400;
    let signal: Vec<f64> = (0..n).map(|t| (t as f64 * 0.05).sin()).collect();

    // view x: signal on feature 0 plus a loud unrelated feature 1
    let x = DMatrix::from_fn(2, n, |r, t| match r {
        0 => signal[t] + 0.1 * normal.sample(&mut rng),
        _ => 5.0 * normal.sample(&mut rng),
    });
    // view y: the signal mixed into three features
    let y = DMatrix::from_fn(3, n, |r, t| {
        let mix = [0.6, -0.3, 0.8][r];
        mix * signal[t] + 0.1 * normal.sample(&mut rng)
    });

    let sol = cca(&covariances_of(&x, &y, 1e-6)?, 1)?;
    let cx: Vec<f64> = sol.project_x(&x).row(0).iter().copied().collect();
    let cy: Vec<f64> = sol.project_y(&y).row(0).iter().copied().collect();
    println!("canonical correlation      {:.4}", sol.correlations[0]);
    println!("x direction                {:?}", sol.a.column(0).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("|corr(canonical x, signal)| {:.4}", corr(&cx, &signal).abs());
    println!("corr(canonical x, canonical y) {:.4}", corr(&cx, &cy));

    let pca = Pca::fit(&x, 1)?;
    let px: Vec<f64> = pca.project(&x).row(0).iter().copied().collect();
    println!("|corr(first PC of x, signal)| {:.4}  (PCA follows the loud feature)", corr(&px, &signal).abs());
    Ok(())
}
