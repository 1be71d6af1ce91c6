//! Soft-DTW as a smoothed DTW: the value approaches the hard optimum as the
//! temperature falls, and its gradient w.r.t. the cost matrix is an expected
//! alignment that sharpens onto the hard path.
//!
//! cargo run --example soft_dtw

use cdctw::warp::{anneal_step, cost_matrix, dtw, soft_dtw, Metric, SoftDtwConfig};
use nalgebra::DMatrix;

fn main() -> cdctw::Result<()> {
    let x = DMatrix::from_fn(1, 12, |_, t| (t as f64 * 0.5).sin());
    let y = DMatrix::from_fn(1, 9, |_, t| (t as f64 * 0.7 + 0.3).sin());
    let cost = cost_matrix(&x, &y, Metric::SquaredEuclidean)?;
    let (hard_path, hard) = dtw(&cost);
    println!("hard DTW: {hard:.5} over {} steps", hard_path.len());

    let mut cfg = SoftDtwConfig::new(1.0, 0.5, 1e-3)?;
    loop {
        let (value, grad) = soft_dtw(&cost, cfg.gamma)?;
        let on_path: f64 = hard_path.px.iter().zip(&hard_path.py).map(|(&i, &j)| grad[(i, j)]).sum();
        println!(
            "gamma {:8.5}  soft {:9.5}  gap {:8.5}  mass on hard path {:5.1}%",
            cfg.gamma,
            value,
            hard - value,
            100.0 * on_path / grad.sum()
        );
        if cfg.gamma <= cfg.anneal_floor {
            break;
        }
        cfg = anneal_step(cfg);
    }
    Ok(())
}
