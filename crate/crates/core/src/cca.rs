//! Covariance estimation, canonical correlation analysis, PCA, and the
//! differentiable total-correlation objective used to train embedding nets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::seqcore::SequenceView;

pub const DEFAULT_RIDGE: f64 = 1e-3;
/// Eigenvalue floor used when forming inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Canonical pairs with a correlation below this are dropped.
pub const MIN_CORRELATION: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub cxx: DMatrix<f64>,
    pub cyy: DMatrix<f64>,
    pub cxy: DMatrix<f64>,
    pub ridge: f64,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
}

/// Canonical directions stored column-wise, best pair first.
#[derive(Debug, Clone)]
pub struct CcaSolution {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub correlations: Vec<f64>,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
}

impl CcaSolution {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    /// `a^T (X - mean_x)`
    pub fn project_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a.transpose() * center_with(x, &self.mean_x)
    }

    /// `b^T (Y - mean_y)`
    pub fn project_y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.b.transpose() * center_with(y, &self.mean_y)
    }
}

pub fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    m.column_mean()
}

pub fn center_with(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

pub fn covariances(x: &SequenceView, y: &SequenceView, ridge: f64) -> Result<CovarianceSet> {
    covariances_of(x.data(), y.data(), ridge)
}

/// Mean-centred covariances with `1/(N-1)` normalization; `ridge * I` is added
/// to both auto-covariances.
pub fn covariances_of(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<CovarianceSet> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "views are not sample-aligned: {} vs {} frames",
            x.ncols(),
            y.ncols()
        )));
    }
    let n = x.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {n}")));
    }
    if ridge < 0.0 {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let mean_x = row_means(x);
    let mean_y = row_means(y);
    let xc = center_with(x, &mean_x);
    let yc = center_with(y, &mean_y);
    let scale = 1.0 / (n as f64 - 1.0);
    let mut cxx = &xc * xc.transpose() * scale;
    let mut cyy = &yc * yc.transpose() * scale;
    let cxy = &xc * yc.transpose() * scale;
    symmetrize(&mut cxx);
    symmetrize(&mut cyy);
    for i in 0..cxx.nrows() {
        cxx[(i, i)] += ridge;
    }
    for i in 0..cyy.nrows() {
        cyy[(i, i)] += ridge;
    }
    Ok(CovarianceSet {
        cxx,
        cyy,
        cxy,
        ridge,
        mean_x,
        mean_y,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Solves `Cxx^-1 Cxy Cyy^-1 Cyx a = rho^2 a`, `b = Cyy^-1 Cyx a / rho`.
///
/// The non-symmetric operator is reduced to a symmetric one with the Cholesky
/// factor `Cxx = L L^T`: `L^-1 Cxy Cyy^-1 Cyx L^-T u = rho^2 u` and `a = L^-T u`.
/// Pairs with `rho < 1e-8` are dropped, so fewer than `k` may be returned.
pub fn cca(cov: &CovarianceSet, k: usize) -> Result<CcaSolution> {
    let (dx, dy) = (cov.cxx.nrows(), cov.cyy.nrows());
    if k == 0 || k > dx.min(dy) {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={}, got {k}",
            dx.min(dy)
        )));
    }
    let lx = cov
        .cxx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cxx".into()))?;
    let ly = cov
        .cyy
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cyy".into()))?;
    let cyx = cov.cxy.transpose();
    // Cyy^-1 Cyx
    let cyy_inv_cyx = ly.solve(&cyx);
    let inner = &cov.cxy * &cyy_inv_cyx;
    // L^-1 inner L^-T
    let l = lx.l();
    let left = l
        .solve_lower_triangular(&inner)
        .ok_or_else(|| Error::NotPositiveDefinite("Cxx factor".into()))?;
    let mut m = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("Cxx factor".into()))?;
    symmetrize(&mut m);

    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dx).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let lt = l.transpose();
    let mut a_cols = Vec::new();
    let mut b_cols = Vec::new();
    let mut correlations = Vec::new();
    for &idx in order.iter().take(k) {
        let rho = eig.eigenvalues[idx].max(0.0).sqrt();
        if rho < MIN_CORRELATION {
            break;
        }
        let u = eig.eigenvectors.column(idx).into_owned();
        let mut a = lt
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::NotPositiveDefinite("Cxx factor".into()))?;
        if largest_entry(&a) < 0.0 {
            a = -a;
        }
        let b = &cyy_inv_cyx * &a / rho;
        correlations.push(rho);
        a_cols.push(a);
        b_cols.push(b);
    }
    if correlations.is_empty() {
        return Err(Error::Uncorrelated);
    }
    Ok(CcaSolution {
        a: DMatrix::from_columns(&a_cols),
        b: DMatrix::from_columns(&b_cols),
        correlations,
        mean_x: cov.mean_x.clone(),
        mean_y: cov.mean_y.clone(),
    })
}

fn largest_entry(v: &DVector<f64>) -> f64 {
    v.iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0)
}

/// Symmetric inverse square root with eigenvalues floored at [`EIGEN_FLOOR`].
pub fn inv_sqrt_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig.eigenvalues.map(|l| 1.0 / l.max(EIGEN_FLOOR).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Value and gradients of the total canonical correlation between two
/// embeddings: the sum of singular values of
/// `T = Sxx^-1/2 Sxy Syy^-1/2`, computed on mean-centred inputs.
#[derive(Debug, Clone)]
pub struct CorrObjective {
    pub value: f64,
    pub grad_hx: DMatrix<f64>,
    pub grad_hy: DMatrix<f64>,
}

pub fn corr_objective(hx: &DMatrix<f64>, hy: &DMatrix<f64>, ridge: f64) -> Result<CorrObjective> {
    if hx.shape() != hy.shape() {
        return Err(Error::Shape(format!(
            "embeddings differ in shape: {:?} vs {:?}",
            hx.shape(),
            hy.shape()
        )));
    }
    let n = hx.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {n}")));
    }
    let cov = covariances_of(hx, hy, ridge)?;
    let (sxx_eig, syy_eig) = (
        SymmetricEigen::new(cov.cxx.clone()),
        SymmetricEigen::new(cov.cyy.clone()),
    );
    for (name, eig) in [("Sxx", &sxx_eig), ("Syy", &syy_eig)] {
        let max = eig.eigenvalues.max().max(1.0);
        if eig.eigenvalues.min() <= EIGEN_FLOOR * max {
            return Err(Error::NotPositiveDefinite(format!("degenerate embedding covariance {name}")));
        }
    }
    let inv_sqrt = |eig: &SymmetricEigen<f64, nalgebra::Dyn>| {
        let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    };
    let sxx_is = inv_sqrt(&sxx_eig);
    let syy_is = inv_sqrt(&syy_eig);
    let t = &sxx_is * &cov.cxy * &syy_is;
    let svd = t.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let value = s.sum();

    let d12 = &sxx_is * &u * &v_t * &syy_is;
    let ud = &u * DMatrix::from_diagonal(s);
    let d11 = &sxx_is * &ud * u.transpose() * &sxx_is * -0.5;
    let vd = v_t.transpose() * DMatrix::from_diagonal(s);
    let d22 = &syy_is * &vd * v_t * &syy_is * -0.5;

    let xc = center_with(hx, &cov.mean_x);
    let yc = center_with(hy, &cov.mean_y);
    let scale = 1.0 / (n as f64 - 1.0);
    let grad_hx = (&d11 * &xc * 2.0 + &d12 * &yc) * scale;
    let grad_hy = (&d22 * &yc * 2.0 + d12.transpose() * &xc) * scale;
    Ok(CorrObjective {
        value,
        grad_hx,
        grad_hy,
    })
}

/// Principal axes of one view.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `D x k`, orthonormal columns, largest variance first.
    pub components: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &DMatrix<f64>, k: usize) -> Result<Self> {
        let d = x.nrows();
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!("k must lie in 1..={d}, got {k}")));
        }
        let mean = row_means(x);
        let xc = center_with(x, &mean);
        let n = x.ncols();
        let denom = (n.max(2) - 1) as f64;
        // wide data (images): decompose the N x N Gram matrix instead
        let gram = d > n;
        if gram && k > n {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds the {n} frames available"
            )));
        }
        let mut m = if gram {
            xc.transpose() * &xc / denom
        } else {
            &xc * xc.transpose() / denom
        };
        symmetrize(&mut m);
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut c = eig.eigenvectors.column(i).into_owned();
            if gram {
                c = &xc * c;
                let norm = c.norm();
                c = if norm > EIGEN_FLOOR {
                    c / norm
                } else {
                    // null direction: any unit vector orthogonal to the rest
                    orthogonal_unit(d, &cols)
                };
            }
            cols.push(if largest_entry(&c) < 0.0 { -c } else { c });
        }
        Ok(Pca {
            mean,
            components: DMatrix::from_columns(&cols),
            variances: order.iter().take(k).map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        })
    }

    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.components.transpose() * center_with(x, &self.mean)
    }

    pub fn reconstruct(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = &self.components * z;
        for mut col in r.column_iter_mut() {
            col += &self.mean;
        }
        r
    }
}

fn orthogonal_unit(d: usize, basis: &[DVector<f64>]) -> DVector<f64> {
    for axis in 0..d {
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        for b in basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
    unreachable!("fewer than d basis vectors always leave a free axis")
}

pub fn pca_project(x: &SequenceView, k: usize) -> Result<SequenceView> {
    let pca = Pca::fit(x.data(), k)?;
    let mut out = SequenceView::new(pca.project(x.data()), x.name())?;
    if let Some(a) = x.annotations() {
        out = out.with_annotations(a.to_vec())?;
    }
    Ok(out)
}
