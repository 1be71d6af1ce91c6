//! Exact DTW on two short scalar sequences: cost matrix, optimal path, total.
//!
//! cargo run --example dtw_basics

use cdctw::warp::{dtw, pairwise_cost, Metric};
use cdctw::SequenceView;
use nalgebra::DMatrix;

fn main() -> cdctw::Result<()> {
    // the same rise-and-fall, once slow and once fast
    let slow = [0.0, 0.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 0.0];
    let fast = [0.0, 1.0, 3.0, 2.0, 0.0];
    let x = SequenceView::new(DMatrix::from_row_slice(1, slow.len(), &slow), "slow")?;
    let y = SequenceView::new(DMatrix::from_row_slice(1, fast.len(), &fast), "fast")?;

    let cost = pairwise_cost(&x, &y, Metric::SquaredEuclidean)?;
    let (path, total) = dtw(&cost);

    println!("cost matrix ({} x {}):", slow.len(), fast.len());
    for i in 0..slow.len() {
        let row: Vec<String> = (0..fast.len()).map(|j| format!("{:4.1}", cost.values()[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }
    println!("path (x, y):");
    for (i, j) in path.px.iter().zip(&path.py) {
        println!("  {i} -> {j}   {} ~ {}", slow[*i], fast[*j]);
    }
    println!("total cost {total}");
    Ok(())
}
