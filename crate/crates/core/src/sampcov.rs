//! Centering, empirical (cross-)covariance surfaces, the integral operator
//! they induce on surfaces, and the discretized covariance eigenproblem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FofrError, Result};
use crate::grid::{Curve, Grid, Surface};

/// `n` curves observed on a common grid; row `i` is the `i`-th realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: Grid,
    curves: DMatrix<f64>,
}

impl CurveSet {
    pub fn new(grid: Grid, curves: DMatrix<f64>) -> Result<Self> {
        if curves.nrows() == 0 {
            return Err(FofrError::InvalidInput("a curve set needs at least one curve".into()));
        }
        if curves.ncols() != grid.len() {
            return Err(FofrError::InvalidInput(format!(
                "curves have {} values but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if let Some(pos) = curves.iter().position(|v| !v.is_finite()) {
            let row = pos % curves.nrows();
            return Err(FofrError::InvalidInput(format!(
                "non-finite value in curve {row}"
            )));
        }
        Ok(Self { grid, curves })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, curves: DMatrix<f64>) -> Self {
        debug_assert_eq!(curves.ncols(), grid.len());
        Self { grid, curves }
    }

    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        let m = grid.len();
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(FofrError::InvalidInput(format!(
                "curve {i} has {} values, grid has {m}",
                rows[i].len()
            )));
        }
        let curves = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(grid, curves)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.curves.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> Curve {
        Curve::new(self.grid.clone(), self.curves.row(i).iter().copied().collect())
            .expect("rows of a valid curve set are valid curves")
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> CurveSet {
        let m = self.grid.len();
        let curves = DMatrix::from_fn(indices.len(), m, |r, j| self.curves[(indices[r], j)]);
        CurveSet {
            grid: self.grid.clone(),
            curves,
        }
    }

    /// Pointwise mean curve.
    pub fn mean(&self) -> Curve {
        let n = self.n() as f64;
        let values = self.curves.row_sum().iter().map(|v| v / n).collect();
        Curve::new(self.grid.clone(), values).expect("finite mean")
    }

    /// Applies the linear functional `L_X(β)(t) = ∫ X(s) β(s,t) ds` to every row.
    pub fn linear_functional(&self, beta: &Surface) -> Result<CurveSet> {
        self.grid.ensure_matches(beta.grid_s(), "linear functional")?;
        let weighted = weight_columns(&self.curves, self.grid.weights());
        Ok(CurveSet {
            grid: beta.grid_t().clone(),
            curves: weighted * beta.values(),
        })
    }
}

fn weight_columns(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= w[j];
    }
    out
}

fn weight_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= w[i];
    }
    out
}

/// A sample split into its pointwise mean and the centered curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSample {
    pub mean: Curve,
    pub centered: CurveSet,
}

impl CenteredSample {
    pub fn n(&self) -> usize {
        self.centered.n()
    }
}

pub fn center(sample: &CurveSet) -> CenteredSample {
    let mean = sample.mean();
    let mut centered = sample.curves.clone();
    for mut row in centered.row_iter_mut() {
        for (v, mu) in row.iter_mut().zip(mean.values()) {
            *v -= mu;
        }
    }
    CenteredSample {
        mean,
        centered: CurveSet::from_parts_unchecked(sample.grid.clone(), centered),
    }
}

/// `r̂(s,s') = n⁻¹ Σ X_i(s) X_i(s')` with divisor `n`; symmetric by construction.
pub fn empirical_cov(xs: &CenteredSample) -> Surface {
    let x = xs.centered.matrix();
    let n = x.nrows() as f64;
    let mut c = x.tr_mul(x) / n;
    symmetrize_in_place(&mut c);
    let g = xs.centered.grid().clone();
    Surface::from_parts_unchecked(g.clone(), g, c)
}

/// `r̂_XY(s,t) = n⁻¹ Σ X_i(s) Y_i(t)`.
pub fn empirical_cross_cov(xs: &CenteredSample, ys: &CenteredSample) -> Result<Surface> {
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} predictor curves vs {} response curves",
            xs.n(),
            ys.n()
        )));
    }
    let n = xs.n() as f64;
    let c = xs.centered.matrix().tr_mul(ys.centered.matrix()) / n;
    Ok(Surface::from_parts_unchecked(
        xs.centered.grid().clone(),
        ys.centered.grid().clone(),
        c,
    ))
}

pub(crate) fn symmetrize_in_place(c: &mut DMatrix<f64>) {
    let m = c.nrows();
    for i in 0..m {
        for k in 0..i {
            let avg = 0.5 * (c[(i, k)] + c[(k, i)]);
            c[(i, k)] = avg;
            c[(k, i)] = avg;
        }
    }
}

/// Contracts `rxx` against the first argument of `f`:
/// `(Γ F)(s,t) = ∫ r(s,s') F(s',t) ds'`.
pub fn apply_gamma(rxx: &Surface, f: &Surface) -> Result<Surface> {
    rxx.grid_s().ensure_matches(rxx.grid_t(), "covariance surface")?;
    rxx.grid_t().ensure_matches(f.grid_s(), "apply_gamma")?;
    let wf = weight_rows(f.values(), f.grid_s().weights());
    Ok(Surface::from_parts_unchecked(
        rxx.grid_s().clone(),
        f.grid_t().clone(),
        rxx.values() * wf,
    ))
}

/// Eigenpairs of a covariance operator, eigenfunctions orthonormal in the
/// quadrature L2 inner product.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Curve>,
}

impl EigenSystem {
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues above `rel_floor · λ₁`.
    pub fn rank(&self, rel_floor: f64) -> usize {
        let Some(&first) = self.eigenvalues.first() else {
            return 0;
        };
        if first <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .take_while(|&&l| l > rel_floor * first)
            .count()
    }

    /// Eigenfunctions as columns of an `m × k` matrix.
    pub fn basis_matrix(&self, k: usize) -> DMatrix<f64> {
        let m = self.eigenfunctions.first().map_or(0, |c| c.values().len());
        DMatrix::from_fn(m, k, |i, j| self.eigenfunctions[j].values()[i])
    }
}

const ASYMMETRY_TOL: f64 = 1e-8;

/// Leading `k` eigenpairs of the operator with kernel `cov`.
///
/// With `W = diag(weights)` the symmetric matrix `W^½ C W^½` is decomposed and
/// eigenfunctions are recovered as `W^-½ v`, so they are orthonormal under
/// [`crate::grid::inner_l2`] and eigenvalues are operator eigenvalues.
pub fn eigendecompose(cov: &Surface, k: usize) -> Result<EigenSystem> {
    let grid = cov.grid_s();
    grid.ensure_matches(cov.grid_t(), "eigendecompose")?;
    let c = cov.values();
    let scale = c.amax();
    let dev = cov.max_asymmetry();
    if dev > ASYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) && dev > 0.0 {
        return Err(FofrError::Asymmetric {
            max_dev: dev,
            tol: ASYMMETRY_TOL,
        });
    }
    let m = grid.len();
    let k = k.min(m);
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut a = DMatrix::from_fn(m, m, |i, j| sqrt_w[i] * c[(i, j)] * sqrt_w[j]);
    symmetrize_in_place(&mut a);
    let eig = SymmetricEigen::new(a);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenfunctions = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut phi: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, sw)| x / sw).collect();
        // fix the sign so the entry of largest magnitude is positive
        let pivot = phi
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
        eigenfunctions.push(Curve::new(grid.clone(), phi)?);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenfunctions,
    })
}
