//! Choosing the number of Krylov components: an FVE cap on the search range,
//! then k-fold cross-validation of the stabilized estimator.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FofrError, Result};
use crate::fapls::{krylov_sequence, mgs_orthonormalize};
use crate::grid::{inner_l2_surface, Grid, Surface};
use crate::model::CvPoint;
use crate::sampcov::{center, eigendecompose, empirical_cov, empirical_cross_cov, CurveSet};

pub const DEFAULT_FVE: f64 = 0.99;
pub const DEFAULT_FOLDS: usize = 5;

/// CV values closer than this to the minimum count as ties.
pub const CV_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub p_grid: Vec<usize>,
    pub cv_values: Vec<f64>,
    pub p_star: usize,
    pub folds: usize,
    pub fold_assignment: Vec<usize>,
    pub seed: u64,
}

impl CvReport {
    pub fn curve(&self) -> Vec<CvPoint> {
        self.p_grid
            .iter()
            .zip(&self.cv_values)
            .map(|(&p, &cv)| CvPoint { p, pprime: None, cv })
            .collect()
    }
}

/// Smallest `p` whose cumulative eigenvalue share reaches `threshold`.
pub fn pmax_from_eigenvalues(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FofrError::InvalidInput(format!(
            "FVE threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(FofrError::Degenerate("covariance has zero total variance".into()));
    }
    let mut cumulative = 0.0;
    for (j, l) in eigenvalues.iter().enumerate() {
        cumulative += l.max(0.0);
        if cumulative / total >= threshold {
            return Ok(j + 1);
        }
    }
    Ok(eigenvalues.len().max(1))
}

/// FVE-derived cap on the component search.
pub fn fve_pmax(rxx: &Surface, threshold: f64) -> Result<usize> {
    let eig = eigendecompose(rxx, rxx.grid_s().len())?;
    pmax_from_eigenvalues(&eig.eigenvalues, threshold)
}

/// Seeded uniform shuffle; position `r` in the shuffled order goes to fold `r mod folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    assignment
}

pub(crate) fn check_folds(n: usize, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(FofrError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(FofrError::Config(format!("{folds} folds for only {n} samples")));
    }
    let largest_fold = n.div_ceil(folds);
    if n - largest_fold < 2 {
        return Err(FofrError::Config(format!(
            "{folds}-fold split of {n} samples leaves fewer than 2 held-in samples"
        )));
    }
    Ok(())
}

/// Held-in and held-out index lists for each fold.
pub(crate) fn splits(assignment: &[usize], folds: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..folds)
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..assignment.len()).partition(|&i| assignment[i] == k);
            (train, test)
        })
        .collect()
}

/// First index within [`CV_TIE_TOL`] of the minimum.
pub fn argmin_with_ties(values: &[f64]) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .position(|&v| v <= min + CV_TIE_TOL)
        .unwrap_or(0)
}

/// `∫ (a(t) − b(t))² dt` summed over rows.
pub(crate) fn sum_sq_dist(grid: &Grid, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let w = grid.weights();
    let mut total = 0.0;
    for i in 0..a.nrows() {
        for (k, wk) in w.iter().enumerate() {
            let d = a[(i, k)] - b[(i, k)];
            total += wk * d * d;
        }
    }
    total
}

pub(crate) fn broadcast_rows(row: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, row.len(), |_, k| row[k])
}

/// Held-out error ratio for one fold: prediction SSE over SSE of the held-in mean.
pub(crate) fn fold_ratio(
    grid_y: &Grid,
    y_test: &DMatrix<f64>,
    pred: &DMatrix<f64>,
    denom: f64,
) -> f64 {
    sum_sq_dist(grid_y, y_test, pred) / denom
}

pub(crate) fn fold_denominator(grid_y: &Grid, y_test: &DMatrix<f64>, train_mean: &[f64]) -> Result<f64> {
    let mean = broadcast_rows(train_mean, y_test.nrows());
    let denom = sum_sq_dist(grid_y, y_test, &mean);
    if !(denom > 0.0) {
        return Err(FofrError::Degenerate(
            "held-out responses coincide with the held-in mean curve".into(),
        ));
    }
    Ok(denom)
}

/// Per-fold CV ratios of the stabilized estimator for `p = 1..=p_max`,
/// reusing one orthonormalization at `p_max` for all nested `p`.
fn fapls_fold_ratios(
    xs: &CurveSet,
    ys: &CurveSet,
    train: &[usize],
    test: &[usize],
    p_max: usize,
) -> Result<Vec<f64>> {
    let (xtr, ytr) = (xs.subset(train), ys.subset(train));
    let cx = center(&xtr);
    let cy = center(&ytr);
    let rxx = empirical_cov(&cx);
    let rxy = empirical_cross_cov(&cx, &cy)?;
    let mut terms = krylov_sequence(&rxx, &rxy, p_max)?;
    terms.truncate(p_max);
    let ortho = mgs_orthonormalize(&terms, &rxx, p_max)?;

    let xte = xs.subset(test);
    let yte = ys.subset(test).matrix().clone();
    let gy = ys.grid();
    let denom = fold_denominator(gy, &yte, cy.mean.values())?;

    let n_test = test.len();
    let mut xc = xte.matrix().clone();
    for mut row in xc.row_iter_mut() {
        for (v, mu) in row.iter_mut().zip(cx.mean.values()) {
            *v -= mu;
        }
    }
    let wx = xs.grid().weights();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col *= wx[j];
    }

    let mut pred = broadcast_rows(cy.mean.values(), n_test);
    let mut ratios = Vec::with_capacity(p_max);
    let mut used = 0;
    for p in 1..=p_max {
        let upto = ortho.count_up_to(p);
        while used < upto {
            let psi = &ortho.psi[used];
            let gamma = inner_l2_surface(&rxy, psi)?;
            pred += (&xc * psi.values()) * gamma;
            used += 1;
        }
        ratios.push(fold_ratio(gy, &yte, &pred, denom));
    }
    Ok(ratios)
}

/// CV curve for a given fold assignment (entries in `0..folds`).
pub fn cv_curve_with_assignment(
    xs: &CurveSet,
    ys: &CurveSet,
    p_max: usize,
    assignment: &[usize],
    folds: usize,
) -> Result<Vec<f64>> {
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} predictor curves vs {} response curves",
            xs.n(),
            ys.n()
        )));
    }
    if assignment.len() != xs.n() || assignment.iter().any(|&k| k >= folds) {
        return Err(FofrError::Config("fold assignment does not match the sample".into()));
    }
    if p_max == 0 {
        return Err(FofrError::InvalidInput("p_max must be at least 1".into()));
    }
    let mut cv = vec![0.0; p_max];
    for (train, test) in splits(assignment, folds) {
        if train.len() < 2 {
            return Err(FofrError::Config("a fold leaves fewer than 2 held-in samples".into()));
        }
        if test.is_empty() {
            return Err(FofrError::Config("a fold has no held-out samples".into()));
        }
        let ratios = fapls_fold_ratios(xs, ys, &train, &test, p_max)?;
        for (c, r) in cv.iter_mut().zip(ratios) {
            *c += r;
        }
    }
    cv.iter_mut().for_each(|c| *c /= folds as f64);
    Ok(cv)
}

/// `folds`-fold cross-validation of the stabilized estimator over `p = 1..=p_max`.
pub fn cv_select_p(
    xs: &CurveSet,
    ys: &CurveSet,
    p_max: usize,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    check_folds(xs.n(), folds)?;
    let assignment = fold_assignment(xs.n(), folds, seed);
    let cv_values = cv_curve_with_assignment(xs, ys, p_max, &assignment, folds)?;
    let p_star = argmin_with_ties(&cv_values) + 1;
    Ok(CvReport {
        p_grid: (1..=p_max).collect(),
        cv_values,
        p_star,
        folds,
        fold_assignment: assignment,
        seed,
    })
}
