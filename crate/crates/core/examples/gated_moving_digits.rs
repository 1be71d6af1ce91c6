//! Conditional gates on moving digits: two different digits follow the same
//! random walk on a noisy canvas at different speeds. The gating networks see
//! per-pixel flow and learn to keep pixels near the digits.
//!
//! cargo run --release --example gated_moving_digits [idx-ubyte file]

use cdctw::datagen::{gen_moving_mnist, ingest_idx, synthetic_digit, MovingMnistSpec};
use cdctw::evalbench::{alignment_score, gate_heatmap_svg, ScoreAveraging, ScoreInput};
use cdctw::{align, AlignerConfig, Method};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // real digits when an idx file is given, procedural ones otherwise
    let (dx, dy) = match std::env::args().nth(1) {
        Some(p) => {
            let digits = ingest_idx(Path::new(&p))?;
            (digits[0].clone(), digits[1].clone())
        }
        None => (synthetic_digit(2), synthetic_digit(3)),
    };
    let canvas = 32;
    let spec = |digit, seed| MovingMnistSpec {
        canvas,
        frames: 40,
        ..MovingMnistSpec::new(digit, 0.421, seed)
    };
    let g = gen_moving_mnist(&spec(dx, 10), &spec(dy, 20), 30)?;
    let (mask_x, _) = g.masks.clone().unwrap();
    let (ax, ay) = (g.views.x.annotations().unwrap(), g.views.y.annotations().unwrap());

    for method in [Method::DtwRaw, Method::Dctw, Method::Cdctw] {
        let cfg = AlignerConfig {
            lambda_x: 3e-3,
            lambda_y: 3e-3,
            ..AlignerConfig::for_method(method)
        };
        let r = align(&g.views, None, &cfg)?;
        let score = alignment_score(ScoreInput { ann_x: ax, ann_y: ay, path: &r.path }, ScoreAveraging::Macro)?;
        println!("{:8} score {score:.3}", method.name());

        if let Some((zx, _)) = &r.gates {
            let on = zx.z.component_mul(&mask_x).sum() / mask_x.sum();
            let off = zx.z.component_mul(&mask_x.map(|m| 1.0 - m)).sum() / mask_x.map(|m| 1.0 - m).sum();
            println!("         mean gate on digit {on:.3}, on background {off:.3}");
            let frame = g.views.x.frames() / 2;
            let out = std::env::temp_dir().join("gates_x.svg");
            std::fs::write(&out, gate_heatmap_svg(&zx.z, frame, canvas)?)?;
            println!("         gates of frame {frame} drawn to {}", out.display());
        }
    }
    Ok(())
}
