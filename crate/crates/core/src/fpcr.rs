//! Functional principal component regression baseline:
//! `β(s,t) = Σ_{j≤p} Σ_{j'≤p'} ⟨φ_j, r_XY φ'_{j'}⟩ / λ_j · φ_j(s) φ'_{j'}(t)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FofrError, Result};
use crate::grid::Surface;
use crate::model::{CvPoint, FitDiagnostics, FofrModel, Method};
use crate::modelsel::{
    broadcast_rows, check_folds, fold_assignment, fold_denominator, fold_ratio, splits, CV_TIE_TOL,
};
use crate::sampcov::{
    center, eigendecompose, empirical_cov, empirical_cross_cov, CurveSet, EigenSystem,
};

/// Eigenvalues at or below this fraction of the leading one are not inverted.
pub const EIGEN_FLOOR: f64 = 1e-10;

struct Expansion {
    phi_x: DMatrix<f64>,
    phi_y: DMatrix<f64>,
    /// `⟨φ_j, r_XY φ'_{j'}⟩ / λ_j`
    coef: DMatrix<f64>,
}

fn weighted_basis(eig: &EigenSystem, k: usize, w: &[f64]) -> DMatrix<f64> {
    let mut b = eig.basis_matrix(k);
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= w[i];
    }
    b
}

fn expansion(
    eig_x: &EigenSystem,
    eig_y: &EigenSystem,
    rxy: &Surface,
    p: usize,
    pprime: usize,
) -> Expansion {
    let wx = rxy.grid_s().weights();
    let wy = rxy.grid_t().weights();
    let phi_x = eig_x.basis_matrix(p);
    let phi_y = eig_y.basis_matrix(pprime);
    let mut coef = weighted_basis(eig_x, p, wx).transpose() * rxy.values() * weighted_basis(eig_y, pprime, wy);
    for (j, mut row) in coef.row_iter_mut().enumerate() {
        row /= eig_x.eigenvalues[j];
    }
    Expansion { phi_x, phi_y, coef }
}

fn check_rank(eig: &EigenSystem, requested: usize) -> Result<()> {
    let rank = eig.rank(EIGEN_FLOOR);
    if requested == 0 || requested > rank {
        return Err(FofrError::Rank {
            requested,
            max_admissible: rank,
        });
    }
    Ok(())
}

/// FPCR coefficient surface from covariance surfaces.
pub fn fpcr_from_covariances(
    rxx: &Surface,
    rxy: &Surface,
    ryy: &Surface,
    p: usize,
    pprime: usize,
) -> Result<Surface> {
    rxx.grid_s().ensure_matches(rxy.grid_s(), "fpcr: r_XX vs r_XY")?;
    ryy.grid_s().ensure_matches(rxy.grid_t(), "fpcr: r_YY vs r_XY")?;
    let eig_x = eigendecompose(rxx, rxx.grid_s().len())?;
    let eig_y = eigendecompose(ryy, ryy.grid_s().len())?;
    fpcr_from_eigen(&eig_x, &eig_y, rxy, p, pprime)
}

fn fpcr_from_eigen(
    eig_x: &EigenSystem,
    eig_y: &EigenSystem,
    rxy: &Surface,
    p: usize,
    pprime: usize,
) -> Result<Surface> {
    check_rank(eig_x, p)?;
    check_rank(eig_y, pprime)?;
    let e = expansion(eig_x, eig_y, rxy, p, pprime);
    let beta = &e.phi_x * &e.coef * e.phi_y.transpose();
    Surface::new(rxy.grid_s().clone(), rxy.grid_t().clone(), beta)
}

/// Fits FPCR with truncation ranks `p` (predictor) and `pprime` (response).
pub fn fpcr_estimate(xs: &CurveSet, ys: &CurveSet, p: usize, pprime: usize) -> Result<FofrModel> {
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} predictor curves vs {} response curves",
            xs.n(),
            ys.n()
        )));
    }
    let cx = center(xs);
    let cy = center(ys);
    let rxx = empirical_cov(&cx);
    let ryy = empirical_cov(&cy);
    let rxy = empirical_cross_cov(&cx, &cy)?;
    let n = xs.n();
    let eig_x = eigendecompose(&rxx, xs.grid().len().min(n))?;
    let eig_y = eigendecompose(&ryy, ys.grid().len().min(n))?;
    let beta = fpcr_from_eigen(&eig_x, &eig_y, &rxy, p, pprime)?;
    Ok(FofrModel {
        mean_x: cx.mean,
        mean_y: cy.mean,
        beta,
        p_used: p,
        method: Method::Fpcr,
        diagnostics: FitDiagnostics {
            pprime: Some(pprime),
            ..FitDiagnostics::default()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcrCvReport {
    pub p: usize,
    pub pprime: usize,
    /// Every `(p, p')` pair searched, `p` outer.
    pub grid: Vec<CvPoint>,
    pub folds: usize,
    pub seed: u64,
}

/// Grid search over `(p, p')` with the same fold mechanics and CV functional
/// as [`crate::modelsel::cv_select_p`]. The search range is capped at the
/// smallest admissible rank across folds.
pub fn fpcr_cv(
    xs: &CurveSet,
    ys: &CurveSet,
    p_max: usize,
    pprime_max: usize,
    folds: usize,
    seed: u64,
) -> Result<FpcrCvReport> {
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} predictor curves vs {} response curves",
            xs.n(),
            ys.n()
        )));
    }
    if p_max == 0 || pprime_max == 0 {
        return Err(FofrError::InvalidInput("p_max and pprime_max must be at least 1".into()));
    }
    check_folds(xs.n(), folds)?;
    let assignment = fold_assignment(xs.n(), folds, seed);

    struct FoldData {
        eig_x: EigenSystem,
        eig_y: EigenSystem,
        rxy: Surface,
        scores: DMatrix<f64>,
        y_test: DMatrix<f64>,
        mean_y: Vec<f64>,
        denom: f64,
    }

    let mut fold_data = Vec::with_capacity(folds);
    let (mut cap_p, mut cap_pp) = (p_max, pprime_max);
    for (train, test) in splits(&assignment, folds) {
        let cx = center(&xs.subset(&train));
        let cy = center(&ys.subset(&train));
        let rxx = empirical_cov(&cx);
        let ryy = empirical_cov(&cy);
        let rxy = empirical_cross_cov(&cx, &cy)?;
        let kx = xs.grid().len().min(train.len()).min(p_max);
        let ky = ys.grid().len().min(train.len()).min(pprime_max);
        let eig_x = eigendecompose(&rxx, kx)?;
        let eig_y = eigendecompose(&ryy, ky)?;
        cap_p = cap_p.min(eig_x.rank(EIGEN_FLOOR));
        cap_pp = cap_pp.min(eig_y.rank(EIGEN_FLOOR));

        let mut xc = xs.subset(&test).matrix().clone();
        for mut row in xc.row_iter_mut() {
            for (v, mu) in row.iter_mut().zip(cx.mean.values()) {
                *v -= mu;
            }
        }
        let scores = xc * weighted_basis(&eig_x, eig_x.eigenvalues.len(), xs.grid().weights());
        let y_test = ys.subset(&test).matrix().clone();
        let denom = fold_denominator(ys.grid(), &y_test, cy.mean.values())?;
        fold_data.push(FoldData {
            eig_x,
            eig_y,
            rxy,
            scores,
            y_test,
            mean_y: cy.mean.values().to_vec(),
            denom,
        });
    }
    if cap_p == 0 || cap_pp == 0 {
        return Err(FofrError::Degenerate(
            "a fold covariance has no admissible eigen-direction".into(),
        ));
    }

    let mut cv = DMatrix::zeros(cap_p, cap_pp);
    for fd in &fold_data {
        let e = expansion(&fd.eig_x, &fd.eig_y, &fd.rxy, cap_p, cap_pp);
        let base = broadcast_rows(&fd.mean_y, fd.y_test.nrows());
        for p in 1..=cap_p {
            let sc = fd.scores.columns(0, p);
            for pp in 1..=cap_pp {
                let pred = &base
                    + sc * e.coef.view((0, 0), (p, pp)) * e.phi_y.columns(0, pp).transpose();
                cv[(p - 1, pp - 1)] += fold_ratio(ys.grid(), &fd.y_test, &pred, fd.denom);
            }
        }
    }
    cv /= folds as f64;

    let min = cv.iter().copied().fold(f64::INFINITY, f64::min);
    let mut grid = Vec::with_capacity(cap_p * cap_pp);
    let mut best = None;
    for p in 1..=cap_p {
        for pp in 1..=cap_pp {
            let v = cv[(p - 1, pp - 1)];
            grid.push(CvPoint {
                p,
                pprime: Some(pp),
                cv: v,
            });
            if best.is_none() && v <= min + CV_TIE_TOL {
                best = Some((p, pp));
            }
        }
    }
    let (p, pprime) = best.unwrap_or((1, 1));
    Ok(FpcrCvReport {
        p,
        pprime,
        grid,
        folds,
        seed,
    })
}
