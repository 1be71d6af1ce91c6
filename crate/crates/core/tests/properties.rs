//! Randomized invariants across modules.

use cdctw::datagen::{compose_truth, random_monotone_warp};
use cdctw::evalbench::{alignment_score, ScoreAveraging, ScoreInput};
use cdctw::seqcore::{format_matrix_binary, format_matrix_csv, parse_matrix_binary, parse_matrix_csv};
use cdctw::warp::{dtw, soft_dtw, validate_path, CostMatrix, Metric};
use cdctw::AlignmentPath;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cost_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        prop::collection::vec(0.0f64..5.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

fn path_cost(c: &DMatrix<f64>, p: &AlignmentPath) -> f64 {
    p.px.iter().zip(&p.py).map(|(&i, &j)| c[(i, j)]).sum()
}

proptest! {
    #[test]
    fn dtw_path_is_valid_and_no_worse_than_the_diagonal(c in cost_strategy()) {
        let cost = CostMatrix::new(c.clone(), Metric::SquaredEuclidean).unwrap();
        let (path, total) = dtw(&cost);
        prop_assert!(validate_path(&path, c.nrows(), c.ncols()));
        let diag = AlignmentPath::diagonal(c.nrows(), c.ncols());
        prop_assert!(total <= path_cost(&c, &diag) + 1e-9);
    }

    #[test]
    fn dtw_is_symmetric_under_transpose(c in cost_strategy()) {
        let (_, a) = dtw(&CostMatrix::new(c.clone(), Metric::SquaredEuclidean).unwrap());
        let (_, b) = dtw(&CostMatrix::new(c.transpose(), Metric::SquaredEuclidean).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn soft_dtw_lower_bounds_hard_dtw(c in cost_strategy(), gamma in 0.01f64..2.0) {
        let cost = CostMatrix::new(c, Metric::SquaredEuclidean).unwrap();
        let (_, hard) = dtw(&cost);
        let (soft, grad) = soft_dtw(&cost, gamma).unwrap();
        prop_assert!(soft <= hard + 1e-9);
        // the gradient is an expected alignment: entries in [0, 1], corners 1
        prop_assert!(grad.iter().all(|&g| (-1e-9..=1.0 + 1e-9).contains(&g)));
        prop_assert!((grad[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matrix_formats_round_trip(v in prop::collection::vec(-1e6f64..1e6, 1..40), rows in 1usize..5) {
        let cols = v.len().div_ceil(rows);
        let mut data = v.clone();
        data.resize(rows * cols, 0.5);
        let m = DMatrix::from_vec(rows, cols, data);
        prop_assert_eq!(parse_matrix_csv(&format_matrix_csv(&m)).unwrap(), m.clone());
        prop_assert_eq!(parse_matrix_binary(&format_matrix_binary(&m)).unwrap(), m);
    }

    #[test]
    fn warps_compose_into_valid_truth(seed in 0u64..1000, len in 8usize..60, phases in 1usize..8) {
        let phases = phases.min(len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wx = random_monotone_warp(len, phases, &mut rng);
        let wy = random_monotone_warp(len, phases, &mut rng);
        prop_assert_eq!(wx[0], 0);
        prop_assert_eq!(*wx.last().unwrap(), len - 1);
        let truth = compose_truth(&wx, &wy);
        prop_assert!(validate_path(&truth, wx.len(), wy.len()));
    }

    #[test]
    fn score_is_bounded_and_symmetric(
        seed in 0u64..500,
        ax in prop::collection::vec(0i64..4, 2..12),
        ay in prop::collection::vec(0i64..4, 2..12),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = DMatrix::from_fn(ax.len(), ay.len(), |_, _| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let (path, _) = dtw(&CostMatrix::new(c, Metric::SquaredEuclidean).unwrap());
        let fwd = alignment_score(ScoreInput { ann_x: &ax, ann_y: &ay, path: &path }, ScoreAveraging::Macro).unwrap();
        let swapped = AlignmentPath::new(path.py.clone(), path.px.clone()).unwrap();
        let back = alignment_score(ScoreInput { ann_x: &ay, ann_y: &ax, path: &swapped }, ScoreAveraging::Macro).unwrap();
        prop_assert!((0.0..=1.0).contains(&fwd));
        prop_assert!((fwd - back).abs() < 1e-12);
    }
}
