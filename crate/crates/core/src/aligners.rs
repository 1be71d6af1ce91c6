//! The alignment method ladder behind one [`align`] entry point.
//!
//! | method       | embedding             | warping in the loss |
//! |--------------|-----------------------|---------------------|
//! | `dtw-raw`    | none                  | -                   |
//! | `pca-dtw`    | per-view PCA          | -                   |
//! | `ctw`        | linear CCA            | hard DTW            |
//! | `dctw`       | two MLPs              | hard DTW            |
//! | `cstw`       | two MLPs              | soft-DTW, fixed γ   |
//! | `astw`       | two MLPs              | soft-DTW, annealed  |
//! | `cdctw`      | gated MLPs            | hard DTW            |
//! | `cdctw-astw` | gated MLPs            | soft-DTW, annealed  |
//!
//! Every trained method alternates, once per epoch, between warping (hard DTW
//! on the current embeddings) and a gradient step on the negative total
//! canonical correlation of the path-warped embeddings. Embeddings are
//! compared through a linear CCA head fitted on the current path, which puts
//! both views in the same whitened coordinates before DTW.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cca::{cca, corr_objective, covariances_of, CcaSolution, Pca, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::gates::{
    flow_context, l0_penalty, sample_gates, ContextMatrix, GateMode, GateState, DEFAULT_SIGMA,
};
use crate::nn::{optimizer_step, HiddenActivation, Mlp, MlpSpec, OptimizerState, OutputActivation};
use crate::seqcore::{scatter_columns, select_columns, AlignmentPath, PairedViews};
use crate::warp::{anneal_step, cost_backward, cost_matrix, dtw, soft_dtw, validate_path, Metric, SoftDtwConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DtwRaw,
    PcaDtw,
    Ctw,
    Dctw,
    Cstw,
    Astw,
    Cdctw,
    CdctwAstw,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::DtwRaw,
        Method::PcaDtw,
        Method::Ctw,
        Method::Dctw,
        Method::Cstw,
        Method::Astw,
        Method::Cdctw,
        Method::CdctwAstw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DtwRaw => "dtw-raw",
            Method::PcaDtw => "pca-dtw",
            Method::Ctw => "ctw",
            Method::Dctw => "dctw",
            Method::Cstw => "cstw",
            Method::Astw => "astw",
            Method::Cdctw => "cdctw",
            Method::CdctwAstw => "cdctw-astw",
        }
    }

    /// Row order of the results tables.
    pub fn ladder_rank(self) -> usize {
        Method::ALL.iter().position(|&m| m == self).unwrap()
    }

    /// Methods whose output does not depend on the seed.
    pub fn is_deterministic(self) -> bool {
        matches!(self, Method::DtwRaw | Method::PcaDtw | Method::Ctw)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, Method::Cdctw | Method::CdctwAstw)
    }

    pub fn is_soft(self) -> bool {
        matches!(self, Method::Cstw | Method::Astw | Method::CdctwAstw)
    }

    pub fn is_annealed(self) -> bool {
        matches!(self, Method::Astw | Method::CdctwAstw)
    }

    pub fn valid_names() -> String {
        Method::ALL.map(Method::name).join(", ")
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}; valid methods: {}", Method::valid_names())))
    }
}

/// How gate means are produced in the gated methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateControl {
    #[default]
    Learned,
    /// Every gate pinned open (`z = 1`); the gating networks are not used.
    ForcedOpen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignerConfig {
    pub method: Method,
    pub embed_dim: usize,
    pub epochs: usize,
    /// Stop once the hard path has been unchanged for this many epochs.
    pub patience: usize,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub soft: SoftDtwConfig,
    /// Weight of the soft-DTW term, applied to the soft-DTW value divided by
    /// `N_x + N_y`.
    pub soft_weight: f64,
    pub seed: u64,
    pub embed_hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
    pub ridge: f64,
    pub learning_rate: f64,
    pub gate_sigma: f64,
    pub metric: Metric,
    /// Views wider than this are reduced by PCA before linear CCA.
    pub ctw_max_dim: usize,
    pub gate_control: GateControl,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        AlignerConfig {
            method: Method::Cdctw,
            embed_dim: 2,
            epochs: 300,
            patience: 20,
            lambda_x: 0.5,
            lambda_y: 0.5,
            soft: SoftDtwConfig::default(),
            soft_weight: 1.0,
            seed: 0,
            embed_hidden: vec![128, 64],
            gate_hidden: vec![64],
            ridge: DEFAULT_RIDGE,
            learning_rate: 1e-3,
            gate_sigma: DEFAULT_SIGMA,
            metric: Metric::SquaredEuclidean,
            ctw_max_dim: 32,
            gate_control: GateControl::Learned,
        }
    }
}

impl AlignerConfig {
    pub fn for_method(method: Method) -> Self {
        AlignerConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.embed_dim == 0 {
            return bad("embed_dim must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.lambda_x < 0.0 || self.lambda_y < 0.0 {
            return bad("lambda_x and lambda_y must be >= 0".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0".into());
        }
        if !(self.gate_sigma > 0.0) {
            return bad("gate_sigma must be > 0".into());
        }
        if self.ridge < 0.0 {
            return bad("ridge must be >= 0".into());
        }
        if self.ctw_max_dim == 0 || self.embed_hidden.contains(&0) || self.gate_hidden.contains(&0) {
            return bad("layer widths and ctw_max_dim must be >= 1".into());
        }
        if self.method.is_soft() {
            self.soft.validate()?;
        }
        Ok(())
    }

    fn embed_spec(&self, input: usize, seed: u64) -> MlpSpec {
        let mut widths = vec![input];
        widths.extend(&self.embed_hidden);
        widths.push(self.embed_dim);
        MlpSpec {
            layer_widths: widths,
            hidden_activation: HiddenActivation::LeakyRelu,
            output_activation: OutputActivation::Linear,
            seed,
            output_bias: 0.0,
        }
    }

    fn gate_spec(&self, context: usize, gates: usize, seed: u64) -> MlpSpec {
        let mut widths = vec![context];
        widths.extend(&self.gate_hidden);
        widths.push(gates);
        MlpSpec {
            layer_widths: widths,
            ..MlpSpec::gating(context, gates, seed)
        }
    }
}

/// Derives an independent seed for one component of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_F: u64 = 1;
const STREAM_G: u64 = 2;
const STREAM_PHI: u64 = 3;
const STREAM_PSI: u64 = 4;
const STREAM_NOISE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Total canonical correlation of the warped embeddings.
    pub correlation: f64,
    pub l0_x: f64,
    pub l0_y: f64,
    pub soft_dtw: Option<f64>,
    pub gamma: Option<f64>,
    pub path_changed: bool,
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub path: AlignmentPath,
    /// Both views in the space the final DTW ran in.
    pub embeddings: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// Deterministic gates of the final networks (gated methods only).
    pub gates: Option<(GateState, GateState)>,
    pub loss_trace: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Trained networks `(f, g)` and, for gated methods, `(phi, psi)`.
    pub networks: Option<TrainedNetworks>,
}

#[derive(Debug, Clone)]
pub struct TrainedNetworks {
    pub f: Mlp,
    pub g: Mlp,
    pub gating: Option<(Mlp, Mlp)>,
}

/// Aligns a pair with the configured method. Gated methods use `context` when
/// given and flow magnitude otherwise; other methods ignore it.
pub fn align(
    pair: &PairedViews,
    context: Option<&(ContextMatrix, ContextMatrix)>,
    config: &AlignerConfig,
) -> Result<AlignmentResult> {
    config.validate()?;
    let result = match config.method {
        Method::DtwRaw => align_dtw_raw(pair, config.metric)?,
        Method::PcaDtw => align_pca_dtw(pair, config)?,
        Method::Ctw => align_ctw(pair, config)?,
        Method::Dctw | Method::Cstw | Method::Astw => train_deep(pair, None, config)?,
        Method::Cdctw | Method::CdctwAstw => {
            let ctx = match context {
                Some(c) => c.clone(),
                None => (flow_context(&pair.x), flow_context(&pair.y)),
            };
            train_deep(pair, Some(&ctx), config)?
        }
    };
    debug_assert!(validate_path(&result.path, pair.x.frames(), pair.y.frames()));
    Ok(result)
}

fn plain_result(path: AlignmentPath, embeddings: Option<(DMatrix<f64>, DMatrix<f64>)>) -> AlignmentResult {
    AlignmentResult {
        path,
        embeddings,
        gates: None,
        loss_trace: Vec::new(),
        epochs: Vec::new(),
        networks: None,
    }
}

/// DTW directly on the raw frames; both views need the same feature count.
pub fn align_dtw_raw(pair: &PairedViews, metric: Metric) -> Result<AlignmentResult> {
    let cost = cost_matrix(pair.x.data(), pair.y.data(), metric)?;
    let (path, _) = dtw(&cost);
    Ok(plain_result(path, None))
}

/// DTW after projecting each view on its own leading principal axes.
pub fn align_pca_dtw(pair: &PairedViews, config: &AlignerConfig) -> Result<AlignmentResult> {
    let k = config.embed_dim.min(pair.x.features()).min(pair.y.features());
    let hx = Pca::fit(pair.x.data(), k)?.project(pair.x.data());
    let hy = Pca::fit(pair.y.data(), k)?.project(pair.y.data());
    let (path, _) = dtw(&cost_matrix(&hx, &hy, config.metric)?);
    Ok(plain_result(path, Some((hx, hy))))
}

/// Reduces a view to at most `max_dim` principal components.
fn reduce_for_cca(x: &DMatrix<f64>, max_dim: usize) -> Result<DMatrix<f64>> {
    if x.nrows() <= max_dim {
        return Ok(x.clone());
    }
    let k = max_dim.min(x.ncols().saturating_sub(1)).max(1);
    Ok(Pca::fit(x, k)?.project(x))
}

/// Fits CCA on the path-aligned frames and projects both full views.
fn cca_head(
    hx: &DMatrix<f64>,
    hy: &DMatrix<f64>,
    path: &AlignmentPath,
    k: usize,
    ridge: f64,
) -> Result<(CcaSolution, DMatrix<f64>, DMatrix<f64>)> {
    let wx = select_columns(hx, &path.px);
    let wy = select_columns(hy, &path.py);
    let k = k.min(hx.nrows()).min(hy.nrows());
    let sol = cca(&covariances_of(&wx, &wy, ridge)?, k)?;
    let px = sol.project_x(hx);
    let py = sol.project_y(hy);
    Ok((sol, px, py))
}

/// Alternates CCA on the current correspondence with DTW in the canonical
/// space, starting from the uniform-stretch path, until the path repeats or
/// the epoch cap is reached.
pub fn align_ctw(pair: &PairedViews, config: &AlignerConfig) -> Result<AlignmentResult> {
    let x = reduce_for_cca(pair.x.data(), config.ctw_max_dim)?;
    let y = reduce_for_cca(pair.y.data(), config.ctw_max_dim)?;
    let mut path = AlignmentPath::diagonal(pair.x.frames(), pair.y.frames());
    let mut epochs = Vec::new();
    let mut embeddings = None;
    for epoch in 0..config.epochs {
        let (sol, px, py) = cca_head(&x, &y, &path, config.embed_dim, config.ridge)?;
        let (next, _) = dtw(&cost_matrix(&px, &py, config.metric)?);
        let changed = next != path;
        let correlation: f64 = sol.correlations.iter().sum();
        epochs.push(EpochRecord {
            epoch,
            loss: -correlation,
            correlation,
            l0_x: 0.0,
            l0_y: 0.0,
            soft_dtw: None,
            gamma: None,
            path_changed: changed,
        });
        path = next;
        embeddings = Some((px, py));
        if !changed {
            break;
        }
    }
    Ok(AlignmentResult {
        path,
        embeddings,
        gates: None,
        loss_trace: epochs.iter().map(|e| e.loss).collect(),
        epochs,
        networks: None,
    })
}

/// DCTW without gates.
pub fn align_dctw(pair: &PairedViews, config: &AlignerConfig) -> Result<AlignmentResult> {
    train_deep(pair, None, &AlignerConfig { method: Method::Dctw, ..config.clone() })
}

/// CDCTW with the given per-view context matrices.
pub fn align_cdctw(
    pair: &PairedViews,
    context: &(ContextMatrix, ContextMatrix),
    config: &AlignerConfig,
) -> Result<AlignmentResult> {
    let method = if config.method.is_gated() { config.method } else { Method::Cdctw };
    train_deep(pair, Some(context), &AlignerConfig { method, ..config.clone() })
}

/// Soft-DTW variants: CSTW (`annealed = false`), ASTW, and the gated
/// CDCTW + ASTW when `context` is given.
pub fn align_soft(
    pair: &PairedViews,
    context: Option<&(ContextMatrix, ContextMatrix)>,
    config: &AlignerConfig,
    annealed: bool,
) -> Result<AlignmentResult> {
    let method = match (context.is_some(), annealed) {
        (false, false) => Method::Cstw,
        (false, true) => Method::Astw,
        (true, _) => Method::CdctwAstw,
    };
    let mut cfg = AlignerConfig { method, ..config.clone() };
    if !annealed {
        cfg.soft.anneal_factor = 1.0;
    }
    train_deep(pair, context, &cfg)
}

struct GateNets {
    phi: Mlp,
    psi: Mlp,
    opt_phi: OptimizerState,
    opt_psi: OptimizerState,
    ctx_x: DMatrix<f64>,
    ctx_y: DMatrix<f64>,
}

fn check_context(ctx: &ContextMatrix, frames: usize, view: &str) -> Result<()> {
    if ctx.frames() != frames {
        return Err(Error::Shape(format!(
            "context for view {view} has {} frames, view has {frames}",
            ctx.frames()
        )));
    }
    Ok(())
}

/// Gate means for one view and the eval-mode gates built from them.
fn eval_gates(net: &Mlp, ctx: &DMatrix<f64>, sigma: f64) -> Result<GateState> {
    let mu = net.predict(ctx)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    sample_gates(&mu, sigma, GateMode::EvalDeterministic, &mut unused)
}

fn train_deep(
    pair: &PairedViews,
    context: Option<&(ContextMatrix, ContextMatrix)>,
    config: &AlignerConfig,
) -> Result<AlignmentResult> {
    let method = config.method;
    let x = pair.x.data();
    let y = pair.y.data();
    let (nx, ny) = (x.ncols(), y.ncols());
    let o = config.embed_dim;

    let mut f = Mlp::new(config.embed_spec(x.nrows(), derive_seed(config.seed, STREAM_F)))?;
    // views of equal width start from a shared initialization
    let stream_g = if y.nrows() == x.nrows() { STREAM_F } else { STREAM_G };
    let mut g = Mlp::new(config.embed_spec(y.nrows(), derive_seed(config.seed, stream_g)))?;
    let mut opt_f = OptimizerState::new(&f, config.learning_rate);
    let mut opt_g = OptimizerState::new(&g, config.learning_rate);

    let gated = method.is_gated() && config.gate_control == GateControl::Learned;
    let mut gate_nets = if gated {
        let (cx, cy) = context.ok_or_else(|| Error::InvalidArgument("gated method needs context".into()))?;
        check_context(cx, nx, "x")?;
        check_context(cy, ny, "y")?;
        let phi = Mlp::new(config.gate_spec(cx.data.nrows(), x.nrows(), derive_seed(config.seed, STREAM_PHI)))?;
        let stream_psi = if (cy.data.nrows(), y.nrows()) == (cx.data.nrows(), x.nrows()) {
            STREAM_PHI
        } else {
            STREAM_PSI
        };
        let psi = Mlp::new(config.gate_spec(cy.data.nrows(), y.nrows(), derive_seed(config.seed, stream_psi)))?;
        Some(GateNets {
            opt_phi: OptimizerState::new(&phi, config.learning_rate),
            opt_psi: OptimizerState::new(&psi, config.learning_rate),
            phi,
            psi,
            ctx_x: cx.data.clone(),
            ctx_y: cy.data.clone(),
        })
    } else {
        None
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_NOISE));

    let mut soft_cfg = config.soft;
    if method.is_soft() && !method.is_annealed() {
        soft_cfg.anneal_factor = 1.0;
    }

    let mut path = AlignmentPath::diagonal(nx, ny);
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut stable = 0usize;

    for epoch in 0..config.epochs {
        // (1)-(2) gates, train mode
        let (gates_x, gates_y) = match gate_nets.as_ref() {
            Some(gn) => {
                let (mu_x, tape_phi) = gn.phi.forward(&gn.ctx_x)?;
                let (mu_y, tape_psi) = gn.psi.forward(&gn.ctx_y)?;
                // equal shapes share one noise draw (common random numbers)
                let mut rng_y = noise_rng.clone();
                let zx = sample_gates(&mu_x, config.gate_sigma, GateMode::TrainStochastic, &mut noise_rng)?;
                if mu_x.shape() != mu_y.shape() {
                    rng_y = noise_rng.clone();
                }
                let zy = sample_gates(&mu_y, config.gate_sigma, GateMode::TrainStochastic, &mut rng_y)?;
                noise_rng = rng_y;
                (Some((zx, tape_phi)), Some((zy, tape_psi)))
            }
            None => (None, None),
        };
        // (3) embeddings of the (gated) inputs
        let in_x = match &gates_x {
            Some((z, _)) => z.apply(x)?,
            None => x.clone(),
        };
        let in_y = match &gates_y {
            Some((z, _)) => z.apply(y)?,
            None => y.clone(),
        };
        let (hx, tape_f) = f.forward(&in_x)?;
        let (hy, tape_g) = g.forward(&in_y)?;

        // (4) warp: DTW in the canonical space of the current embeddings;
        // embeddings without any correlation (e.g. every gate shut) keep the path
        let head = match cca_head(&hx, &hy, &path, o, config.ridge) {
            Ok(h) => Some(h),
            Err(Error::Uncorrelated) => None,
            Err(e) => return Err(e),
        };
        let changed = match &head {
            Some((_, px, py)) => {
                let (next, _) = dtw(&cost_matrix(px, py, config.metric)?);
                let changed = next != path;
                path = next;
                changed
            }
            None => false,
        };

        // (5) loss on the warped embeddings
        let wx = select_columns(&hx, &path.px);
        let wy = select_columns(&hy, &path.py);
        let corr = corr_objective(&wx, &wy, config.ridge)?;
        let mut grad_hx = scatter_columns(&corr.grad_hx, &path.px, nx) * -1.0;
        let mut grad_hy = scatter_columns(&corr.grad_hy, &path.py, ny) * -1.0;
        let mut loss = -corr.value;

        let mut soft_value = None;
        let mut gamma = None;
        if let (true, Some((head, px, py))) = (method.is_soft(), &head) {
            let cost = cost_matrix(px, py, config.metric)?;
            let (value, grad_cost) = soft_dtw(&cost, soft_cfg.gamma)?;
            let scale = config.soft_weight / (nx + ny) as f64;
            let (gpx, gpy) = cost_backward(px, py, config.metric, &(grad_cost * scale));
            // the head is held fixed: d(a^T h)/dh = a
            grad_hx += &head.a * gpx;
            grad_hy += &head.b * gpy;
            loss += scale * value;
            soft_value = Some(value);
            gamma = Some(soft_cfg.gamma);
        }

        let (mut l0_x, mut l0_y) = (0.0, 0.0);
        let mut gate_grads = None;
        if let (Some(gn), Some((zx, tape_phi)), Some((zy, tape_psi))) =
            (gate_nets.as_ref(), gates_x.as_ref(), gates_y.as_ref())
        {
            let (px0, gl0_x) = l0_penalty(&zx.mu, config.gate_sigma)?;
            let (py0, gl0_y) = l0_penalty(&zy.mu, config.gate_sigma)?;
            l0_x = px0;
            l0_y = py0;
            loss += config.lambda_x * px0 + config.lambda_y * py0;
            gate_grads = Some((gn, zx, tape_phi, zy, tape_psi, gl0_x, gl0_y));
        }

        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
        }

        // (6) backward and updates
        let (grads_f, grad_in_x) = f.backward(&tape_f, &grad_hx)?;
        let (grads_g, grad_in_y) = g.backward(&tape_g, &grad_hy)?;
        let gating_updates = match gate_grads {
            Some((gn, zx, tape_phi, zy, tape_psi, gl0_x, gl0_y)) => {
                let gmu_x = zx.backward(&grad_in_x.component_mul(x))? + gl0_x * config.lambda_x;
                let gmu_y = zy.backward(&grad_in_y.component_mul(y))? + gl0_y * config.lambda_y;
                let (gphi, _) = gn.phi.backward(tape_phi, &gmu_x)?;
                let (gpsi, _) = gn.psi.backward(tape_psi, &gmu_y)?;
                Some((gphi, gpsi))
            }
            None => None,
        };
        optimizer_step(&mut f, &grads_f, &mut opt_f)?;
        optimizer_step(&mut g, &grads_g, &mut opt_g)?;
        if let (Some(gn), Some((gphi, gpsi))) = (gate_nets.as_mut(), gating_updates) {
            optimizer_step(&mut gn.phi, &gphi, &mut gn.opt_phi)?;
            optimizer_step(&mut gn.psi, &gpsi, &mut gn.opt_psi)?;
        }

        epochs.push(EpochRecord {
            epoch,
            loss,
            correlation: corr.value,
            l0_x,
            l0_y,
            soft_dtw: soft_value,
            gamma,
            path_changed: changed,
        });
        if method.is_soft() {
            soft_cfg = anneal_step(soft_cfg);
        }
        stable = if changed { 0 } else { stable + 1 };
        if stable >= config.patience {
            break;
        }
    }

    // Final alignment with deterministic gates and the trained networks.
    let final_gates = match gate_nets.as_ref() {
        Some(gn) => Some((
            eval_gates(&gn.phi, &gn.ctx_x, config.gate_sigma)?,
            eval_gates(&gn.psi, &gn.ctx_y, config.gate_sigma)?,
        )),
        None => None,
    };
    let (in_x, in_y) = match &final_gates {
        Some((zx, zy)) => (zx.apply(x)?, zy.apply(y)?),
        None => (x.clone(), y.clone()),
    };
    let hx = f.predict(&in_x)?;
    let hy = g.predict(&in_y)?;
    let (path, embeddings) = match cca_head(&hx, &hy, &path, o, config.ridge) {
        Ok((_, px, py)) => (dtw(&cost_matrix(&px, &py, config.metric)?).0, (px, py)),
        Err(Error::Uncorrelated) => (path, (hx, hy)),
        Err(e) => return Err(e),
    };

    Ok(AlignmentResult {
        path,
        embeddings: Some(embeddings),
        gates: final_gates,
        loss_trace: epochs.iter().map(|e| e.loss).collect(),
        epochs,
        networks: Some(TrainedNetworks {
            f,
            g,
            gating: gate_nets.map(|gn| (gn.phi, gn.psi)),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::SequenceView;

    fn row_pair(x: &[f64], y: &[f64]) -> PairedViews {
        PairedViews::new(
            SequenceView::new(DMatrix::from_row_slice(1, x.len(), x), "x").unwrap(),
            SequenceView::new(DMatrix::from_row_slice(1, y.len(), y), "y").unwrap(),
        )
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "gtw".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("cdctw-astw"));
    }

    #[test]
    fn raw_dtw_examples() {
        let r = align_dtw_raw(&row_pair(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]), Metric::SquaredEuclidean).unwrap();
        assert_eq!(r.path, AlignmentPath::diagonal(3, 3));
        let r = align_dtw_raw(&row_pair(&[0.0, 1.0, 2.0], &[0.0, 2.0]), Metric::SquaredEuclidean).unwrap();
        assert_eq!((r.path.px, r.path.py), (vec![0, 1, 2], vec![0, 1, 1]));
        let pair = PairedViews::new(
            SequenceView::new(DMatrix::zeros(2, 3), "x").unwrap(),
            SequenceView::new(DMatrix::zeros(3, 3), "y").unwrap(),
        );
        assert!(align_dtw_raw(&pair, Metric::SquaredEuclidean).is_err());
    }

    #[test]
    fn ctw_epoch_cap_one() {
        let pair = row_pair(&[0.0, 1.0, 3.0, 2.0, 5.0], &[0.0, 1.0, 3.0, 2.0, 5.0]);
        let cfg = AlignerConfig {
            method: Method::Ctw,
            epochs: 1,
            ..Default::default()
        };
        let r = align(&pair, None, &cfg).unwrap();
        assert_eq!(r.epochs.len(), 1);
    }

    #[test]
    fn ctw_identical_1d_matches_raw_dtw() {
        let v = [0.0, 0.5, 2.0, 1.0, 3.0, 2.5, 0.2];
        let pair = row_pair(&v, &v);
        let raw = align_dtw_raw(&pair, Metric::SquaredEuclidean).unwrap();
        let ctw = align(&pair, None, &AlignerConfig::for_method(Method::Ctw)).unwrap();
        assert_eq!(raw.path, ctw.path);
    }

    #[test]
    fn seeds_are_split() {
        assert_ne!(derive_seed(0, STREAM_F), derive_seed(0, STREAM_G));
        assert_ne!(derive_seed(0, STREAM_F), derive_seed(1, STREAM_F));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn config_validation() {
        let bad = AlignerConfig {
            embed_dim: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AlignerConfig {
            method: Method::Astw,
            soft: SoftDtwConfig {
                gamma: 0.1,
                anneal_factor: 0.5,
                anneal_floor: 1.0,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn context_shape_mismatch_is_an_error() {
        let pair = row_pair(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]);
        let ctx = (
            ContextMatrix::external(DMatrix::zeros(1, 3)).unwrap(),
            ContextMatrix::external(DMatrix::zeros(1, 3)).unwrap(),
        );
        let cfg = AlignerConfig {
            epochs: 2,
            ..Default::default()
        };
        assert!(matches!(align_cdctw(&pair, &ctx, &cfg), Err(Error::Shape(_))));
    }
}
