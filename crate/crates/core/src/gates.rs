//! Conditional stochastic gates.
//!
//! A gating network maps each frame's context column to per-feature gate
//! means `mu`. Gates are `z = clamp(mu + eps, 0, 1)` with `eps ~ N(0, sigma^2)`
//! during training and `z = clamp(mu, 0, 1)` at evaluation. The expected
//! number of open gates, `sum_d Phi(mu_d / sigma)` with `Phi` the standard
//! normal CDF, is the differentiable sparsity penalty.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use libm::erfc;

use crate::error::{Error, Result};
use crate::seqcore::SequenceView;

pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    TrainStochastic,
    EvalDeterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextKind {
    FlowMagnitude,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextMatrix {
    pub data: DMatrix<f64>,
    pub kind: ContextKind,
}

impl ContextMatrix {
    pub fn external(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("context has non-finite entries".into()));
        }
        Ok(ContextMatrix {
            data,
            kind: ContextKind::External,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-feature absolute difference between consecutive frames; frame 0 gets a
/// zero column.
pub fn flow_context(view: &SequenceView) -> ContextMatrix {
    let x = view.data();
    let mut data = DMatrix::zeros(x.nrows(), x.ncols());
    for t in 1..x.ncols() {
        let diff = (x.column(t) - x.column(t - 1)).abs();
        data.set_column(t, &diff);
    }
    ContextMatrix {
        data,
        kind: ContextKind::FlowMagnitude,
    }
}

#[derive(Debug, Clone)]
pub struct GateState {
    pub mu: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub sigma: f64,
    pub mode: GateMode,
    /// The noise drawn in train mode; `None` in eval mode.
    pub noise: Option<DMatrix<f64>>,
}

impl GateState {
    /// `x ⊙ z`
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.shape() != self.z.shape() {
            return Err(Error::Shape(format!(
                "gates {:?} do not match input {:?}",
                self.z.shape(),
                x.shape()
            )));
        }
        Ok(x.component_mul(&self.z))
    }

    pub fn mean_gate(&self) -> f64 {
        self.z.mean()
    }

    pub fn backward(&self, grad_z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        gate_backward(grad_z, &self.mu, self.sigma, self.noise.as_ref())
    }
}

pub fn sample_gates<R: Rng + ?Sized>(
    mu: &DMatrix<f64>,
    sigma: f64,
    mode: GateMode,
    rng: &mut R,
) -> Result<GateState> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("gate noise sigma must be > 0, got {sigma}")));
    }
    let (z, noise) = match mode {
        GateMode::EvalDeterministic => (mu.map(|m| m.clamp(0.0, 1.0)), None),
        GateMode::TrainStochastic => {
            let normal = Normal::new(0.0, sigma).expect("sigma checked above");
            let eps = DMatrix::from_fn(mu.nrows(), mu.ncols(), |_, _| normal.sample(rng));
            let z = mu.zip_map(&eps, |m, e| (m + e).clamp(0.0, 1.0));
            (z, Some(eps))
        }
    };
    Ok(GateState {
        mu: mu.clone(),
        z,
        sigma,
        mode,
        noise,
    })
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected open-gate count per frame, averaged over frames, and its gradient.
pub fn l0_penalty(mu: &DMatrix<f64>, sigma: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("gate noise sigma must be > 0, got {sigma}")));
    }
    let n = mu.ncols().max(1) as f64;
    let value = mu.iter().map(|&m| std_normal_cdf(m / sigma)).sum::<f64>() / n;
    let grad = mu.map(|m| std_normal_pdf(m / sigma) / (n * sigma));
    Ok((value, grad))
}

/// Gradient through the clamp: passes `grad_z` where `0 < mu + eps < 1`.
pub fn gate_backward(
    grad_z: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    _sigma: f64,
    noise: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let eps = noise.ok_or_else(|| {
        Error::InvalidArgument("gate backward needs the noise of a train-mode sample".into())
    })?;
    if grad_z.shape() != mu.shape() || eps.shape() != mu.shape() {
        return Err(Error::Shape("gate gradient, means and noise differ in shape".into()));
    }
    Ok(DMatrix::from_fn(mu.nrows(), mu.ncols(), |r, c| {
        let v = mu[(r, c)] + eps[(r, c)];
        if v > 0.0 && v < 1.0 {
            grad_z[(r, c)]
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> SequenceView {
        SequenceView::new(DMatrix::from_row_slice(1, v.len(), v), "v").unwrap()
    }

    #[test]
    fn flow_context_examples() {
        let c = flow_context(&row(&[2.0, 2.0, 2.0]));
        assert!(c.data.iter().all(|&v| v == 0.0));
        let c = flow_context(&row(&[0.0, 3.0, 1.0]));
        assert_eq!(c.data, DMatrix::from_row_slice(1, 3, &[0.0, 3.0, 2.0]));
        let c = flow_context(&row(&[5.0]));
        assert_eq!(c.data, DMatrix::zeros(1, 1));
        assert_eq!(c.kind, ContextKind::FlowMagnitude);
    }

    #[test]
    fn eval_mode_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = sample_gates(&DMatrix::from_element(3, 2, 5.0), 1.0, GateMode::EvalDeterministic, &mut rng).unwrap();
        assert!(g.z.iter().all(|&v| v == 1.0));
        let g = sample_gates(&DMatrix::from_element(3, 2, -5.0), 0.5, GateMode::EvalDeterministic, &mut rng).unwrap();
        assert!(g.z.iter().all(|&v| v == 0.0));
        assert!(g.noise.is_none());
    }

    #[test]
    fn open_probability_at_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sample_gates(&DMatrix::zeros(1, 100_000), 0.5, GateMode::TrainStochastic, &mut rng).unwrap();
        let open = g.z.iter().filter(|&&v| v > 0.0).count() as f64 / 1e5;
        assert!((open - 0.5).abs() < 0.01, "{open}");
        assert!(g.z.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn l0_examples() {
        let (v, _) = l0_penalty(&DMatrix::zeros(4, 1), 0.5).unwrap();
        assert_eq!(v, 2.0);
        let (v, _) = l0_penalty(&DMatrix::from_element(1, 1, 0.5), 0.5).unwrap();
        assert!((v - 0.841_344_746_068_543).abs() < 1e-12, "{v:.17}");
        assert!(l0_penalty(&DMatrix::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn l0_is_increasing_in_every_entry() {
        let mu = DMatrix::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.4);
        let (base, _) = l0_penalty(&mu, 0.5).unwrap();
        for k in 0..mu.len() {
            let mut p = mu.clone();
            p[k] += 1e-3;
            assert!(l0_penalty(&p, 0.5).unwrap().0 > base);
        }
    }

    #[test]
    fn clamp_gradient_masks() {
        let mu = DMatrix::from_row_slice(1, 4, &[0.5, 0.2, -0.3, 1.2]);
        let eps = DMatrix::from_row_slice(1, 4, &[0.1, -0.4, 0.1, 0.1]);
        let gz = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let g = gate_backward(&gz, &mu, 0.5, Some(&eps)).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]));
        assert!(gate_backward(&gz, &mu, 0.5, None).is_err());
    }

    #[test]
    fn gating_identities() {
        let x = DMatrix::from_fn(2, 3, |r, c| r as f64 * 2.0 - c as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let open = sample_gates(&DMatrix::from_element(2, 3, 1.5), 0.5, GateMode::EvalDeterministic, &mut rng).unwrap();
        assert_eq!(open.apply(&x).unwrap(), x);
        let shut = sample_gates(&DMatrix::from_element(2, 3, -0.5), 0.5, GateMode::EvalDeterministic, &mut rng).unwrap();
        assert_eq!(shut.apply(&x).unwrap(), DMatrix::zeros(2, 3));
    }
}
