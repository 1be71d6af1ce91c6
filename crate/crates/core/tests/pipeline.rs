//! End-to-end runs of the method ladder on generated data.

use cdctw::aligners::{align, AlignerConfig, Method};
use cdctw::datagen::{gen_moving_mnist, gen_synthetic, synthetic_digit, MovingMnistSpec, SyntheticSpec};
use cdctw::evalbench::{alignment_score, run_benchmark, runs_csv, BenchDataset, ScoreAveraging, ScoreInput};
use cdctw::gates::{flow_context, ContextMatrix};
use cdctw::warp::validate_path;
use nalgebra::DMatrix;

fn quick(method: Method) -> AlignerConfig {
    AlignerConfig {
        method,
        epochs: 40,
        lambda_x: 0.05,
        lambda_y: 0.05,
        ..AlignerConfig::default()
    }
}

#[test]
fn unwarped_noiseless_pairs_are_aligned_by_every_method() {
    let g = gen_synthetic(&SyntheticSpec {
        noise_std: 0.0,
        warp: false,
        rotate: false,
        ..SyntheticSpec::default()
    })
    .unwrap();
    for method in Method::ALL {
        let r = align(&g.views, None, &quick(method)).unwrap();
        let s = alignment_score(
            ScoreInput {
                ann_x: g.views.x.annotations().unwrap(),
                ann_y: g.views.y.annotations().unwrap(),
                path: &r.path,
            },
            ScoreAveraging::Macro,
        )
        .unwrap();
        assert!(s >= 0.99, "{method}: {s}");
    }
}

#[test]
fn every_method_returns_a_valid_path_on_moving_digits() {
    let spec = |d, s| MovingMnistSpec {
        canvas: 32,
        frames: 16,
        ..MovingMnistSpec::new(synthetic_digit(d), 0.421, s)
    };
    let g = gen_moving_mnist(&spec(0, 1), &spec(1, 2), 3).unwrap();
    for method in Method::ALL {
        let r = align(&g.views, None, &AlignerConfig { epochs: 5, ..quick(method) }).unwrap();
        assert!(validate_path(&r.path, g.views.x.frames(), g.views.y.frames()), "{method}");
        assert_eq!(r.gates.is_some(), method.is_gated(), "{method}");
    }
}

#[test]
fn external_context_drives_the_gates() {
    let g = gen_synthetic(&SyntheticSpec::default()).unwrap();
    let flow = (flow_context(&g.views.x), flow_context(&g.views.y));
    let ramp = |n: usize| ContextMatrix::external(DMatrix::from_fn(2, n, |r, c| (r + c) as f64 / n as f64)).unwrap();
    let external = (ramp(g.views.x.frames()), ramp(g.views.y.frames()));
    let cfg = quick(Method::Cdctw);
    let a = align(&g.views, Some(&flow), &cfg).unwrap();
    let b = align(&g.views, None, &cfg).unwrap();
    let c = align(&g.views, Some(&external), &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace, "flow context is the default");
    assert_ne!(a.loss_trace, c.loss_trace);

    let short = (ramp(3), ramp(3));
    assert!(align(&g.views, Some(&short), &cfg).is_err());
}

#[test]
fn benchmark_is_reproducible_and_parallel_safe() {
    let datasets: Vec<BenchDataset> = (0..2)
        .map(|s| {
            let g = gen_synthetic(&SyntheticSpec {
                warp_seed: s,
                transform_seed: s + 10,
                ..SyntheticSpec::default()
            })
            .unwrap();
            BenchDataset::from_generated(format!("spiral-{s}"), g)
        })
        .collect();
    let methods = [Method::Dctw, Method::DtwRaw, Method::Ctw];
    let base = AlignerConfig {
        epochs: 10,
        ..AlignerConfig::default()
    };
    let serial = run_benchmark(&datasets, &methods, &[0, 1, 2], &base, 1).unwrap();
    let parallel = run_benchmark(&datasets, &methods, &[0, 1, 2], &base, 3).unwrap();
    assert_eq!(runs_csv(&serial, false), runs_csv(&parallel, false));
    // ladder order, deterministic methods once per dataset
    let order: Vec<Method> = serial.aggregates.iter().map(|a| a.method).collect();
    assert_eq!(order, [Method::DtwRaw, Method::DtwRaw, Method::Ctw, Method::Ctw, Method::Dctw, Method::Dctw]);
    let runs: Vec<usize> = serial.aggregates.iter().map(|a| a.runs).collect();
    assert_eq!(runs, [1, 1, 1, 1, 3, 3], "seed-independent methods run once");
    for a in &serial.aggregates {
        if a.method.is_deterministic() {
            assert_eq!(a.std, 0.0);
        }
        assert!(a.std >= 0.0 && (0.0..=1.0).contains(&a.mean));
    }
}
