//! Dynamic time warping: the exact DP, the soft-min relaxation with its
//! gradient, the temperature schedule, and path validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{AlignmentPath, SequenceView};

/// exp(-x) for x beyond this is flushed to zero inside the soft-min.
const EXP_FLUSH: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    SquaredEuclidean,
    Euclidean,
    L1,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-euclidean" | "sqeuclidean" => Ok(Metric::SquaredEuclidean),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "l1" => Ok(Metric::L1),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?} (expected squared-euclidean, euclidean or l1)"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::SquaredEuclidean => "squared-euclidean",
            Metric::Euclidean => "euclidean",
            Metric::L1 => "l1",
        })
    }
}

/// Frame-to-frame distances, `values[(i, j)] = d(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: DMatrix<f64>,
    metric: Metric,
}

impl CostMatrix {
    pub fn new(values: DMatrix<f64>, metric: Metric) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("cost matrix must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "cost entries must be finite and non-negative".into(),
            ));
        }
        Ok(CostMatrix { values, metric })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

pub fn pairwise_cost(x: &SequenceView, y: &SequenceView, metric: Metric) -> Result<CostMatrix> {
    cost_matrix(x.data(), y.data(), metric)
}

/// Same as [`pairwise_cost`] on bare feature-by-frame matrices.
pub fn cost_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>, metric: Metric) -> Result<CostMatrix> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "cannot compare frames with {} and {} features",
            x.nrows(),
            y.nrows()
        )));
    }
    let values = DMatrix::from_fn(x.ncols(), y.ncols(), |i, j| {
        let (a, b) = (x.column(i), y.column(j));
        match metric {
            Metric::SquaredEuclidean => a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum(),
            Metric::Euclidean => a
                .iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt(),
            Metric::L1 => a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).sum(),
        }
    });
    CostMatrix::new(values, metric)
}

/// Pulls a gradient on the cost matrix back onto the two frame matrices.
pub fn cost_backward(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    metric: Metric,
    grad_cost: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut gx = DMatrix::zeros(x.nrows(), x.ncols());
    let mut gy = DMatrix::zeros(y.nrows(), y.ncols());
    for i in 0..x.ncols() {
        for j in 0..y.ncols() {
            let g = grad_cost[(i, j)];
            if g == 0.0 {
                continue;
            }
            let diff = x.column(i) - y.column(j);
            let local = match metric {
                Metric::SquaredEuclidean => diff * 2.0,
                Metric::Euclidean => {
                    let n = diff.norm();
                    if n > 0.0 {
                        diff / n
                    } else {
                        diff * 0.0
                    }
                }
                Metric::L1 => diff.map(f64::signum),
            };
            let mut cx = gx.column_mut(i);
            cx.axpy(g, &local, 1.0);
            let mut cy = gy.column_mut(j);
            cy.axpy(-g, &local, 1.0);
        }
    }
    (gx, gy)
}

/// Exact DTW over the step set {(1,0), (0,1), (1,1)}.
///
/// Among optimal paths the one returned is the first in forward order when at
/// every cell the diagonal step is preferred, then the x-advance, then the
/// y-advance.
pub fn dtw(cost: &CostMatrix) -> (AlignmentPath, f64) {
    let c = &cost.values;
    let (nx, ny) = c.shape();
    // to_go[(i, j)]: cheapest cost of a path from (i, j) to the end corner,
    // including cell (i, j) itself.
    let mut to_go = DMatrix::from_element(nx, ny, f64::INFINITY);
    for i in (0..nx).rev() {
        for j in (0..ny).rev() {
            let best = if i + 1 == nx && j + 1 == ny {
                0.0
            } else {
                let mut b = f64::INFINITY;
                if i + 1 < nx && j + 1 < ny {
                    b = b.min(to_go[(i + 1, j + 1)]);
                }
                if i + 1 < nx {
                    b = b.min(to_go[(i + 1, j)]);
                }
                if j + 1 < ny {
                    b = b.min(to_go[(i, j + 1)]);
                }
                b
            };
            to_go[(i, j)] = c[(i, j)] + best;
        }
    }

    let (mut i, mut j) = (0, 0);
    let mut px = vec![0];
    let mut py = vec![0];
    while i + 1 < nx || j + 1 < ny {
        let mut next: Option<((usize, usize), f64)> = None;
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (a, b) = (i + di, j + dj);
            if a < nx && b < ny {
                let v = to_go[(a, b)];
                // strict comparison keeps the earlier (preferred) step on ties
                if next.is_none_or(|(_, best)| v < best) {
                    next = Some(((a, b), v));
                }
            }
        }
        let ((a, b), _) = next.expect("a legal step exists before the end corner");
        i = a;
        j = b;
        px.push(i);
        py.push(j);
    }
    (AlignmentPath { px, py }, to_go[(0, 0)])
}

/// `-gamma * log(sum(exp(-v / gamma)))`, computed with a min-shift.
///
/// Infinite entries contribute nothing; if every entry is infinite the
/// result is infinite.
pub fn softmin(values: &[f64], gamma: f64) -> f64 {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    if m.is_infinite() {
        return m;
    }
    let s: f64 = values
        .iter()
        .map(|&v| {
            let e = (v - m) / gamma;
            if e > EXP_FLUSH {
                0.0
            } else {
                (-e).exp()
            }
        })
        .sum();
    m - gamma * s.ln()
}

/// Soft-DTW value and its gradient with respect to every cost entry.
///
/// The gradient is the expected alignment matrix under the Gibbs distribution
/// over paths, so its entries lie in `[0, 1]`.
pub fn soft_dtw(cost: &CostMatrix, gamma: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "soft-DTW temperature must be positive, got {gamma}"
        )));
    }
    let c = &cost.values;
    let (n, m) = c.shape();
    // 1-based tables with a border of padding on both sides.
    let mut r = DMatrix::from_element(n + 2, m + 2, f64::INFINITY);
    r[(0, 0)] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let prev = [r[(i - 1, j - 1)], r[(i - 1, j)], r[(i, j - 1)]];
            r[(i, j)] = c[(i - 1, j - 1)] + softmin(&prev, gamma);
        }
    }
    let value = r[(n, m)];

    let mut d = DMatrix::zeros(n + 2, m + 2);
    d.view_mut((1, 1), (n, m)).copy_from(c);
    for i in 1..=n {
        r[(i, m + 1)] = f64::NEG_INFINITY;
    }
    for j in 1..=m {
        r[(n + 1, j)] = f64::NEG_INFINITY;
    }
    r[(n + 1, m + 1)] = value;

    let mut e = DMatrix::zeros(n + 2, m + 2);
    e[(n + 1, m + 1)] = 1.0;
    let weight = |num: f64| -> f64 {
        let w = num / gamma;
        if w < -EXP_FLUSH {
            0.0
        } else {
            w.exp()
        }
    };
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            let here = r[(i, j)];
            let a = weight(r[(i + 1, j)] - here - d[(i + 1, j)]);
            let b = weight(r[(i, j + 1)] - here - d[(i, j + 1)]);
            let cc = weight(r[(i + 1, j + 1)] - here - d[(i + 1, j + 1)]);
            e[(i, j)] = e[(i + 1, j)] * a + e[(i, j + 1)] * b + e[(i + 1, j + 1)] * cc;
        }
    }
    Ok((value, e.view((1, 1), (n, m)).into_owned()))
}

/// Temperature schedule for annealed soft-DTW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftDtwConfig {
    pub gamma: f64,
    pub anneal_factor: f64,
    pub anneal_floor: f64,
}

impl Default for SoftDtwConfig {
    fn default() -> Self {
        SoftDtwConfig {
            gamma: 1.0,
            anneal_factor: 0.98,
            anneal_floor: 1e-2,
        }
    }
}

impl SoftDtwConfig {
    pub fn new(gamma: f64, anneal_factor: f64, anneal_floor: f64) -> Result<Self> {
        let cfg = SoftDtwConfig {
            gamma,
            anneal_factor,
            anneal_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "anneal factor must lie in (0, 1], got {}",
                self.anneal_factor
            )));
        }
        if !(self.anneal_floor > 0.0 && self.anneal_floor <= self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "anneal floor must lie in (0, gamma], got {}",
                self.anneal_floor
            )));
        }
        Ok(())
    }
}

pub fn anneal_step(config: SoftDtwConfig) -> SoftDtwConfig {
    SoftDtwConfig {
        gamma: (config.gamma * config.anneal_factor).max(config.anneal_floor),
        ..config
    }
}

/// Checks boundary conditions and the step set for an `nx` by `ny` grid.
pub fn validate_path(path: &AlignmentPath, nx: usize, ny: usize) -> bool {
    let (px, py) = (&path.px, &path.py);
    if px.is_empty() || px.len() != py.len() || nx == 0 || ny == 0 {
        return false;
    }
    if px[0] != 0 || py[0] != 0 || *px.last().unwrap() != nx - 1 || *py.last().unwrap() != ny - 1 {
        return false;
    }
    px.windows(2).zip(py.windows(2)).all(|(a, b)| {
        let step = (a[1].checked_sub(a[0]), b[1].checked_sub(b[0]));
        matches!(step, (Some(1), Some(0)) | (Some(0), Some(1)) | (Some(1), Some(1)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_view(v: &[f64]) -> SequenceView {
        SequenceView::new(DMatrix::from_row_slice(1, v.len(), v), "v").unwrap()
    }

    fn cm(rows: usize, cols: usize, v: &[f64]) -> CostMatrix {
        CostMatrix::new(DMatrix::from_row_slice(rows, cols, v), Metric::SquaredEuclidean).unwrap()
    }

    #[test]
    fn pairwise_cost_examples() {
        let c = pairwise_cost(&row_view(&[0.0]), &row_view(&[0.0]), Metric::SquaredEuclidean).unwrap();
        assert_eq!(c.values()[(0, 0)], 0.0);

        let c = pairwise_cost(&row_view(&[0.0, 1.0, 2.0]), &row_view(&[0.0, 2.0]), Metric::SquaredEuclidean)
            .unwrap();
        assert_eq!(c.values(), &DMatrix::from_row_slice(3, 2, &[0.0, 4.0, 1.0, 1.0, 4.0, 0.0]));

        let x = SequenceView::new(DMatrix::zeros(2, 1), "x").unwrap();
        let y = SequenceView::new(DMatrix::zeros(3, 1), "y").unwrap();
        assert!(matches!(pairwise_cost(&x, &y, Metric::L1), Err(Error::Shape(_))));
    }

    #[test]
    fn other_metrics() {
        let x = SequenceView::new(DMatrix::from_column_slice(2, 1, &[0.0, 0.0]), "x").unwrap();
        let y = SequenceView::new(DMatrix::from_column_slice(2, 1, &[3.0, -4.0]), "y").unwrap();
        assert_eq!(pairwise_cost(&x, &y, Metric::Euclidean).unwrap().values()[(0, 0)], 5.0);
        assert_eq!(pairwise_cost(&x, &y, Metric::L1).unwrap().values()[(0, 0)], 7.0);
    }

    #[test]
    fn dtw_examples() {
        let (p, t) = dtw(&cm(1, 1, &[0.0]));
        assert_eq!((p.px, p.py, t), (vec![0], vec![0], 0.0));

        let (p, t) = dtw(&cm(3, 2, &[0.0, 4.0, 1.0, 1.0, 4.0, 0.0]));
        assert_eq!(t, 1.0);
        assert_eq!(p.px, vec![0, 1, 2]);
        assert_eq!(p.py, vec![0, 1, 1]);

        let (p, t) = dtw(&cm(4, 2, &[0.0; 8]));
        assert_eq!(t, 0.0);
        assert_eq!(p.px, vec![0, 1, 2, 3]);
        assert_eq!(p.py, vec![0, 1, 1, 1]);
    }

    #[test]
    fn softmin_two_zeros() {
        let v = softmin(&[0.0, 0.0, f64::INFINITY], 1.0);
        assert!((v + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softmin(&[0.0, 0.0], 1.0) + std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softmin_is_stable_for_large_inputs() {
        let v = softmin(&[1e6, 1e6 + 1.0], 1e-3);
        assert_eq!(v, 1e6);
    }

    #[test]
    fn soft_dtw_single_cell() {
        let (v, g) = soft_dtw(&cm(1, 1, &[2.5]), 0.7).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn soft_dtw_close_to_hard_at_low_temperature() {
        let c = cm(3, 2, &[0.0, 4.0, 1.0, 1.0, 4.0, 0.0]);
        let (v, _) = soft_dtw(&c, 1e-4).unwrap();
        assert!((v - 1.0).abs() < 1e-2);
        assert!(v <= 1.0);
    }

    #[test]
    fn soft_dtw_rejects_bad_gamma() {
        let c = cm(1, 1, &[0.0]);
        assert!(soft_dtw(&c, 0.0).is_err());
        assert!(soft_dtw(&c, -1.0).is_err());
    }

    #[test]
    fn soft_dtw_grad_is_soft_alignment() {
        let c = cm(3, 3, &[0.1, 0.5, 2.0, 0.7, 0.2, 0.3, 1.1, 0.9, 0.05]);
        let (_, g) = soft_dtw(&c, 0.5).unwrap();
        assert!(g.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g[(2, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anneal_examples() {
        let cfg = SoftDtwConfig::new(1.0, 0.5, 0.01).unwrap();
        assert_eq!(anneal_step(cfg).gamma, 0.5);
        let cfg = SoftDtwConfig::new(0.015, 0.5, 0.01).unwrap();
        assert_eq!(anneal_step(cfg).gamma, 0.01);
        let cfg = SoftDtwConfig::new(0.3, 1.0, 0.01).unwrap();
        assert_eq!(anneal_step(cfg), cfg);
        assert!(SoftDtwConfig::new(0.1, 0.5, 0.2).is_err());
        assert!(SoftDtwConfig::new(0.1, 1.5, 0.01).is_err());
    }

    #[test]
    fn validate_path_examples() {
        let p = |a: Vec<usize>, b: Vec<usize>| AlignmentPath { px: a, py: b };
        assert!(validate_path(&p(vec![0], vec![0]), 1, 1));
        assert!(!validate_path(&p(vec![0, 2], vec![0, 1]), 3, 2));
        assert!(!validate_path(&p(vec![0, 1], vec![0, 0]), 2, 2));
        assert!(!validate_path(&p(vec![0, 1, 0, 1], vec![0, 0, 1, 1]), 2, 2));
        assert!(!validate_path(&p(vec![0, 0], vec![0, 0]), 1, 1));
    }

    #[test]
    fn cost_backward_matches_finite_differences() {
        let x = DMatrix::from_fn(2, 3, |r, c| (r as f64 * 0.7 - c as f64 * 0.3).sin());
        let y = DMatrix::from_fn(2, 2, |r, c| (r as f64 + c as f64 * 1.3).cos());
        let w = DMatrix::from_fn(3, 2, |r, c| 0.2 + r as f64 * 0.1 + c as f64 * 0.3);
        for metric in [Metric::SquaredEuclidean, Metric::Euclidean, Metric::L1] {
            let f = |x: &DMatrix<f64>| cost_matrix(x, &y, metric).unwrap().values().dot(&w);
            let (gx, _) = cost_backward(&x, &y, metric, &w);
            let h = 1e-6;
            for k in 0..x.len() {
                let mut p = x.clone();
                p[k] += h;
                let mut m = x.clone();
                m[k] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                assert!((fd - gx[k]).abs() < 1e-6, "{metric}: {fd} vs {}", gx[k]);
            }
        }
    }
}
