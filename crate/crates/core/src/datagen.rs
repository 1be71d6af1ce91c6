//! Synthetic sequence pairs with known ground-truth alignments.
//!
//! Both generators share the same scheme: a latent timeline of `T` steps is
//! split into equal temporal phases, each view resamples the timeline through
//! its own random monotone warp, and the ground-truth path is obtained by
//! merging the two warps on latent time.
//!
//! Warps are drawn as a sequence of step patterns, uniformly among
//! `1, 1, 1, 2` latent steps per frame and `0 then 1` (a held frame). A step of
//! two is never allowed to jump over the first latent index of a phase, so
//! every view has a frame exactly at every phase start.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{AlignmentPath, PairedViews, SequenceView};

pub const DIGIT_SIDE: usize = 28;
pub const IDX3_MAGIC: u32 = 0x0000_0803;
/// Noise levels of the moving-digit benchmark.
pub const MNIST_NOISE_LEVELS: [f64; 3] = [0.102, 0.421, 0.737];
pub const DEFAULT_PHASES: usize = 8;
/// Random-walk step length in pixels.
pub const WALK_STEP: f64 = 2.0;

/// Phase label of latent step `t` on a timeline of `len` steps.
pub fn phase_of(t: usize, len: usize, phases: usize) -> i64 {
    ((t * phases) / len) as i64
}

fn phase_starts(len: usize, phases: usize) -> Vec<usize> {
    (0..len)
        .filter(|&t| t == 0 || phase_of(t, len, phases) != phase_of(t - 1, len, phases))
        .collect()
}

/// Latent index of every frame of a warped view. Starts at 0 and ends at
/// `len - 1`; consecutive entries differ by 0, 1 or 2 and never skip a phase
/// start.
pub fn random_monotone_warp<R: Rng + ?Sized>(len: usize, phases: usize, rng: &mut R) -> Vec<usize> {
    assert!(len >= 1);
    let starts = phase_starts(len, phases);
    let mut w = vec![0usize];
    let mut t = 0usize;
    while t + 1 < len {
        match rng.random_range(0..5) {
            0..=2 => t += 1,
            3 => {
                let skips_start = starts.binary_search(&(t + 1)).is_ok();
                t += if t + 2 < len && !skips_start { 2 } else { 1 };
            }
            _ => {
                w.push(t);
                t += 1;
            }
        }
        w.push(t);
    }
    w
}

pub fn identity_warp(len: usize) -> Vec<usize> {
    (0..len).collect()
}

/// Merges two warps on latent time into a valid alignment path.
///
/// From each matched pair the cheaper-in-latent-time side advances; equal
/// next latent indices advance both.
pub fn compose_truth(wx: &[usize], wy: &[usize]) -> AlignmentPath {
    let (mut i, mut j) = (0usize, 0usize);
    let mut px = vec![0];
    let mut py = vec![0];
    while i + 1 < wx.len() || j + 1 < wy.len() {
        let nx = wx.get(i + 1).copied().unwrap_or(usize::MAX);
        let ny = wy.get(j + 1).copied().unwrap_or(usize::MAX);
        if nx == ny {
            i += 1;
            j += 1;
        } else if nx < ny {
            i += 1;
        } else {
            j += 1;
        }
        px.push(i);
        py.push(j);
    }
    AlignmentPath { px, py }
}

/// A generated benchmark pair.
#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub views: PairedViews,
    pub truth: AlignmentPath,
    /// Latent index of every frame, per view.
    pub warps: (Vec<usize>, Vec<usize>),
    /// Per-frame digit bounding-box masks (`D x N`, 0/1); moving digits only.
    pub masks: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Length of the latent timeline.
    pub base_length: usize,
    pub warp_seed: u64,
    /// Seeds the per-view rotations and the observation noise.
    pub transform_seed: u64,
    pub noise_std: f64,
    /// `false` gives identity warps.
    pub warp: bool,
    /// `false` uses the identity embedding into 3-D for both views.
    pub rotate: bool,
    pub phases: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            base_length: 80,
            warp_seed: 0,
            transform_seed: 0,
            noise_std: 0.1,
            warp: true,
            rotate: true,
            phases: DEFAULT_PHASES,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_length < 8 {
            return Err(Error::InvalidArgument(format!(
                "base_length must be >= 8, got {}",
                self.base_length
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
        }
        if self.phases == 0 || self.phases > self.base_length {
            return Err(Error::InvalidArgument(format!("bad phase count {}", self.phases)));
        }
        Ok(())
    }
}

/// Point of the latent planar spiral at normalized time `s` in `[0, 1]`.
fn spiral(s: f64) -> (f64, f64) {
    let theta = 3.0 * std::f64::consts::PI * s;
    let r = 0.5 + s;
    (r * theta.cos(), r * theta.sin())
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    Rotation3::from_scaled_axis(axis.normalize() * angle).into_inner()
}

/// A planar spiral embedded in three spatial dimensions by a random rotation
/// per view, observed through independent time warps and Gaussian noise.
/// Phases are equal segments of the latent timeline.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<GeneratedPair> {
    spec.validate()?;
    let len = spec.base_length;
    let mut warp_rng = ChaCha8Rng::seed_from_u64(spec.warp_seed);
    let mut tf_rng = ChaCha8Rng::seed_from_u64(spec.transform_seed);
    let (wx, wy) = if spec.warp {
        (
            random_monotone_warp(len, spec.phases, &mut warp_rng),
            random_monotone_warp(len, spec.phases, &mut warp_rng),
        )
    } else {
        (identity_warp(len), identity_warp(len))
    };
    let (rx, ry) = if spec.rotate {
        (random_rotation(&mut tf_rng), random_rotation(&mut tf_rng))
    } else {
        (Matrix3::identity(), Matrix3::identity())
    };
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut render = |w: &[usize], rot: &Matrix3<f64>, name: &str| -> Result<SequenceView> {
        let mut data = DMatrix::zeros(3, w.len());
        for (k, &t) in w.iter().enumerate() {
            let (a, b) = spiral(t as f64 / (len - 1) as f64);
            let mut p = rot * Vector3::new(a, b, 0.0);
            if spec.noise_std > 0.0 {
                p += Vector3::from_fn(|_, _| noise.sample(&mut tf_rng));
            }
            data.set_column(k, &p);
        }
        let labels = w.iter().map(|&t| phase_of(t, len, spec.phases)).collect();
        SequenceView::new(data, name)?.with_annotations(labels)
    };
    let x = render(&wx, &rx, "synthetic-x")?;
    let y = render(&wy, &ry, "synthetic-y")?;
    Ok(GeneratedPair {
        views: PairedViews::new(x, y),
        truth: compose_truth(&wx, &wy),
        warps: (wx, wy),
        masks: None,
    })
}

/// A 28x28 grayscale image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitImage {
    pub pixels: Vec<f64>,
}

impl DigitImage {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * DIGIT_SIDE + c]
    }

    /// Smallest box `(r0, c0, r1, c1)` (inclusive) holding every lit pixel.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..DIGIT_SIDE {
            for c in 0..DIGIT_SIDE {
                if self.get(r, c) > 0.0 {
                    bb = Some(match bb {
                        None => (r, c, r, c),
                        Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                    });
                }
            }
        }
        bb
    }
}

/// Parses an IDX3 unsigned-byte image file, scaling pixels to `[0, 1]`.
pub fn parse_idx3(bytes: &[u8]) -> std::result::Result<Vec<DigitImage>, String> {
    if bytes.len() < 16 {
        return Err(format!("header truncated: expected 16 bytes, got {}", bytes.len()));
    }
    let word = |k: usize| u32::from_be_bytes(bytes[k..k + 4].try_into().unwrap());
    let magic = word(0);
    if magic != IDX3_MAGIC {
        return Err(format!("bad magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}"));
    }
    let (count, rows, cols) = (word(4) as usize, word(8) as usize, word(12) as usize);
    if rows != DIGIT_SIDE || cols != DIGIT_SIDE {
        return Err(format!("expected 28x28 images, header says {rows}x{cols}"));
    }
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(format!(
            "truncated payload: expected {expected} bytes, got {}",
            bytes.len()
        ));
    }
    Ok(bytes[16..expected]
        .chunks_exact(rows * cols)
        .map(|img| DigitImage {
            pixels: img.iter().map(|&p| p as f64 / 255.0).collect(),
        })
        .collect())
}

pub fn ingest_idx(path: &Path) -> Result<Vec<DigitImage>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx3(&bytes).map_err(|msg| Error::load(path, msg))
}

/// Procedural digit-like glyph: a thick random polyline, used when no IDX
/// source is available.
pub fn synthetic_digit(seed: u64) -> DigitImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
    let strokes = rng.random_range(3..=5);
    let mut p = (rng.random_range(6.0..22.0), rng.random_range(6.0..22.0));
    for _ in 0..strokes {
        let q: (f64, f64) = (rng.random_range(5.0..23.0), rng.random_range(5.0..23.0));
        let steps = 40;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let (cr, cc) = (p.0 + (q.0 - p.0) * f, p.1 + (q.1 - p.1) * f);
            for r in 0..DIGIT_SIDE {
                for c in 0..DIGIT_SIDE {
                    let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                    let v = (1.0 - (d2.sqrt() - 1.0).max(0.0) / 1.2).clamp(0.0, 1.0);
                    let px = &mut pixels[r * DIGIT_SIDE + c];
                    *px = f64::max(*px, v);
                }
            }
        }
        p = q;
    }
    DigitImage { pixels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingMnistSpec {
    /// Side of the square canvas.
    pub canvas: usize,
    /// Length of the latent timeline (frames before warping).
    pub frames: usize,
    pub digit: DigitImage,
    pub noise_std: f64,
    pub warp_seed: u64,
    pub noise_seed: u64,
    pub warp: bool,
    pub phases: usize,
}

impl MovingMnistSpec {
    pub fn new(digit: DigitImage, noise_std: f64, seed: u64) -> Self {
        MovingMnistSpec {
            canvas: 64,
            frames: 60,
            digit,
            noise_std,
            warp_seed: seed,
            noise_seed: seed.wrapping_add(1),
            warp: true,
            phases: DEFAULT_PHASES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas < DIGIT_SIDE + 2 {
            return Err(Error::InvalidArgument(format!(
                "canvas must be >= {}, got {}",
                DIGIT_SIDE + 2,
                self.canvas
            )));
        }
        if self.frames < 2 || self.phases == 0 || self.phases > self.frames {
            return Err(Error::InvalidArgument("need >= 2 frames and 1..=frames phases".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
        }
        if self.digit.pixels.len() != DIGIT_SIDE * DIGIT_SIDE
            || self.digit.pixels.iter().any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::InvalidArgument("digit must be 28x28 with values in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Top-left corner of the digit at every latent step: a random walk with
/// uniformly drawn direction, fixed step length and reflective borders.
pub fn random_walk(canvas: usize, steps: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = (canvas - DIGIT_SIDE) as f64;
    let mut p = (rng.random_range(0.0..=hi), rng.random_range(0.0..=hi));
    let reflect = |v: f64| {
        let mut v = v;
        if v < 0.0 {
            v = -v;
        }
        if v > hi {
            v = 2.0 * hi - v;
        }
        v.clamp(0.0, hi)
    };
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(p);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        p = (reflect(p.0 + WALK_STEP * a.sin()), reflect(p.1 + WALK_STEP * a.cos()));
    }
    out
}

/// Two noisy moving-digit views that follow the same random walk under
/// independent time warps. Frames are flattened row-major into `canvas^2`
/// features; pixel noise is clipped back into `[0, 1]`.
pub fn gen_moving_mnist(
    spec_x: &MovingMnistSpec,
    spec_y: &MovingMnistSpec,
    shared_path_seed: u64,
) -> Result<GeneratedPair> {
    spec_x.validate()?;
    spec_y.validate()?;
    if spec_x.canvas != spec_y.canvas || spec_x.frames != spec_y.frames || spec_x.phases != spec_y.phases {
        return Err(Error::InvalidArgument(
            "both views must share canvas, latent length and phase count".into(),
        ));
    }
    let walk = random_walk(spec_x.canvas, spec_x.frames, shared_path_seed);
    let (x, mx, wx) = render_moving(spec_x, &walk, "mnist-x")?;
    let (y, my, wy) = render_moving(spec_y, &walk, "mnist-y")?;
    Ok(GeneratedPair {
        views: PairedViews::new(x, y),
        truth: compose_truth(&wx, &wy),
        warps: (wx, wy),
        masks: Some((mx, my)),
    })
}

fn render_moving(
    spec: &MovingMnistSpec,
    walk: &[(f64, f64)],
    name: &str,
) -> Result<(SequenceView, DMatrix<f64>, Vec<usize>)> {
    let side = spec.canvas;
    let warp = if spec.warp {
        random_monotone_warp(spec.frames, spec.phases, &mut ChaCha8Rng::seed_from_u64(spec.warp_seed))
    } else {
        identity_warp(spec.frames)
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let bbox = spec.digit.bounding_box();
    let mut data = DMatrix::zeros(side * side, warp.len());
    let mut mask = DMatrix::zeros(side * side, warp.len());
    for (k, &t) in warp.iter().enumerate() {
        let (r0, c0) = (walk[t].0.round() as usize, walk[t].1.round() as usize);
        let mut col = data.column_mut(k);
        for r in 0..DIGIT_SIDE {
            for c in 0..DIGIT_SIDE {
                col[(r0 + r) * side + (c0 + c)] = spec.digit.get(r, c);
            }
        }
        if let Some((br0, bc0, br1, bc1)) = bbox {
            for r in br0..=br1 {
                for c in bc0..=bc1 {
                    mask[((r0 + r) * side + (c0 + c), k)] = 1.0;
                }
            }
        }
        if spec.noise_std > 0.0 {
            for v in col.iter_mut() {
                *v = (*v + noise.sample(&mut noise_rng)).clamp(0.0, 1.0);
            }
        }
    }
    let labels = warp.iter().map(|&t| phase_of(t, spec.frames, spec.phases)).collect();
    let view = SequenceView::new(data, name)?.with_annotations(labels)?;
    Ok((view, mask, warp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::validate_path;

    #[test]
    fn warps_are_monotone_and_hit_phase_starts() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_monotone_warp(40, 8, &mut rng);
            assert_eq!(w[0], 0);
            assert_eq!(*w.last().unwrap(), 39);
            assert!(w.windows(2).all(|p| p[1] >= p[0] && p[1] - p[0] <= 2));
            for s in phase_starts(40, 8) {
                assert!(w.contains(&s), "seed {seed} misses phase start {s}");
            }
        }
    }

    #[test]
    fn truth_pairs_share_phase_labels() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let wx = random_monotone_warp(30, 6, &mut rng);
            let wy = random_monotone_warp(30, 6, &mut rng);
            let truth = compose_truth(&wx, &wy);
            assert!(validate_path(&truth, wx.len(), wy.len()));
            for (&i, &j) in truth.px.iter().zip(&truth.py) {
                assert_eq!(phase_of(wx[i], 30, 6), phase_of(wy[j], 30, 6));
                assert!(wx[i].abs_diff(wy[j]) <= 2);
            }
        }
    }

    #[test]
    fn identity_warps_give_diagonal_truth() {
        let spec = SyntheticSpec {
            noise_std: 0.0,
            warp: false,
            ..Default::default()
        };
        let g = gen_synthetic(&spec).unwrap();
        assert_eq!(g.truth, AlignmentPath::diagonal(80, 80));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            warp_seed: 3,
            transform_seed: 4,
            ..Default::default()
        };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.views.x, b.views.x);
        assert_eq!(a.views.y, b.views.y);
        assert_eq!(a.truth, b.truth);
        assert!(gen_synthetic(&SyntheticSpec { base_length: 4, ..spec }).is_err());
    }

    fn idx_bytes(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IDX3_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&28u32.to_be_bytes());
        b.extend_from_slice(&28u32.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn idx_parsing() {
        let mut px = vec![0u8; 784];
        px[0] = 255;
        let imgs = parse_idx3(&idx_bytes(1, &px)).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].get(0, 0), 1.0);
        assert_eq!(imgs[0].get(0, 1), 0.0);

        let err = parse_idx3(&idx_bytes(2, &px)).unwrap_err();
        assert!(err.contains("expected 1584 bytes, got 800"), "{err}");
        let mut bad = idx_bytes(1, &px);
        bad[3] = 0x01;
        assert!(parse_idx3(&bad).unwrap_err().contains("magic"));
    }

    #[test]
    fn moving_mnist_shapes_and_masks() {
        let sx = MovingMnistSpec::new(synthetic_digit(1), 0.0, 10);
        let sy = MovingMnistSpec::new(synthetic_digit(2), 0.0, 11);
        let g = gen_moving_mnist(&sx, &sy, 7).unwrap();
        assert_eq!(g.views.x.features(), 64 * 64);
        assert!(validate_path(&g.truth, g.views.x.frames(), g.views.y.frames()));
        let (mx, _) = g.masks.as_ref().unwrap();
        let x = g.views.x.data();
        // every lit pixel lies in the mask
        for k in 0..x.len() {
            if x[k] > 0.0 {
                assert_eq!(mx[k], 1.0);
            }
        }
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn unwarped_noiseless_views_differ_only_in_digit() {
        let d = synthetic_digit(5);
        let mut sx = MovingMnistSpec::new(d.clone(), 0.0, 1);
        sx.warp = false;
        let mut sy = MovingMnistSpec::new(d, 0.0, 2);
        sy.warp = false;
        let g = gen_moving_mnist(&sx, &sy, 3).unwrap();
        assert_eq!(g.views.x.data(), g.views.y.data());
        assert_eq!(g.truth, AlignmentPath::diagonal(60, 60));
    }

    #[test]
    fn noise_is_additive_on_average() {
        // Mid-gray digit so clipping at [0, 1] is rarely active at small sigma.
        let digit = DigitImage {
            pixels: vec![0.5; DIGIT_SIDE * DIGIT_SIDE],
        };
        let sigma = 0.1;
        let mut clean = MovingMnistSpec::new(digit.clone(), 0.0, 0);
        clean.warp = false;
        clean.canvas = 30;
        clean.frames = 4;
        clean.phases = 2;
        let reference = gen_moving_mnist(&clean, &clean, 9).unwrap();
        let n = 400;
        let mut mean = DMatrix::zeros(reference.views.x.features(), 4);
        for s in 0..n {
            let mut noisy = clean.clone();
            noisy.noise_std = sigma;
            noisy.noise_seed = 1000 + s;
            mean += gen_moving_mnist(&noisy, &noisy, 9).unwrap().views.x.data();
        }
        mean /= n as f64;
        let x = reference.views.x.data();
        let lit: Vec<usize> = (0..x.len()).filter(|&k| x[k] == 0.5).collect();
        // every draw of every lit pixel is independent
        let pooled = lit.iter().map(|&k| mean[k]).sum::<f64>() / lit.len() as f64;
        let pooled_bound = 3.0 * sigma / ((n as usize * lit.len()) as f64).sqrt();
        assert!((pooled - 0.5).abs() < pooled_bound, "{pooled} vs 0.5");
        let per_pixel_bound = 5.0 * sigma / (n as f64).sqrt();
        for &k in &lit {
            assert!((mean[k] - 0.5).abs() < per_pixel_bound, "{} vs 0.5", mean[k]);
        }
    }

    #[test]
    fn noise_levels_match_benchmark() {
        assert_eq!(MNIST_NOISE_LEVELS, [0.102, 0.421, 0.737]);
    }

    #[test]
    fn canvas_too_small_is_rejected() {
        let mut s = MovingMnistSpec::new(synthetic_digit(0), 0.1, 0);
        s.canvas = 29;
        assert!(gen_moving_mnist(&s, &s, 0).is_err());
    }
}
