//! The synthetic spiral benchmark: two rotated, noisy, independently warped
//! copies of a 3-D curve. Compares the shallow methods against ground truth.
//!
//! cargo run --release --example ctw_spiral

use cdctw::datagen::{gen_synthetic, SyntheticSpec};
use cdctw::evalbench::{alignment_score, path_svg, ScoreAveraging, ScoreInput};
use cdctw::warp::{cost_matrix, Metric};
use cdctw::{align, AlignerConfig, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = gen_synthetic(&SyntheticSpec {
        warp_seed: 3,
        transform_seed: 4,
        ..SyntheticSpec::default()
    })?;
    let (ax, ay) = (g.views.x.annotations().unwrap(), g.views.y.annotations().unwrap());
    println!("x: {} frames, y: {} frames", g.views.x.frames(), g.views.y.frames());

    let mut ctw_path = None;
    for method in [Method::DtwRaw, Method::PcaDtw, Method::Ctw, Method::Dctw] {
        let r = align(&g.views, None, &AlignerConfig::for_method(method))?;
        let score = alignment_score(ScoreInput { ann_x: ax, ann_y: ay, path: &r.path }, ScoreAveraging::Macro)?;
        println!("{:8} score {score:.3}  ({} epochs)", method.name(), r.epochs.len().max(1));
        if method == Method::Ctw {
            ctw_path = Some(r.path);
        }
    }

    let out = std::env::temp_dir().join("ctw_spiral.svg");
    let cost = cost_matrix(g.views.x.data(), g.views.y.data(), Metric::SquaredEuclidean)?;
    let svg = path_svg(cost.values(), ctw_path.as_ref().unwrap(), Some(&g.truth));
    std::fs::write(&out, svg)?;
    println!("CTW path vs truth drawn to {}", out.display());
    Ok(())
}
