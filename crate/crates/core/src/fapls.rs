//! Functional alternative partial least squares.
//!
//! The coefficient surface is approximated in the Krylov subspace
//! `span{Γ̂(β), Γ̂²(β), …, Γ̂ᵖ(β)}` where `Γ̂` applies the empirical covariance
//! kernel and `Γ̂(β) = r̂_XY`. Two estimators are provided:
//!
//! * the explicit solve `β̂ = [Γ̂¹ … Γ̂ᵖ] Ĥ⁻¹ α̂`, and
//! * the stabilized form: the Krylov terms are orthonormalized by modified
//!   Gram–Schmidt under `B(F,G) = ∫∫∫ r̂(s,s') F(s,t) G(s',t)` and
//!   `β̃ = Σ γ̂ⱼ ψ̂ⱼ` with `γ̂ⱼ = ⟨r̂_XY, ψ̂ⱼ⟩`.
//!
//! Both span the same space, so they agree up to rounding when `Ĥ` is well
//! conditioned.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FofrError, Result};
use crate::grid::{inner_l2_surface, weighted_inner, Surface};
use crate::model::{FitDiagnostics, FofrModel, Method};
use crate::sampcov::{apply_gamma, center, empirical_cov, empirical_cross_cov, CurveSet};

/// Explicit solves are refused below this reciprocal condition of `Ĥ`.
pub const RCOND_MIN: f64 = 1e-10;

/// Relative B-norm² below which an orthogonalized direction is discarded.
pub const DROP_TOL: f64 = 1e-10;

/// `B(F,G) = ⟨F, Γ G⟩`.
pub fn b_form(rxx: &Surface, f: &Surface, g: &Surface) -> Result<f64> {
    inner_l2_surface(f, &apply_gamma(rxx, g)?)
}

/// `Γ̂¹(β) = r̂_XY, …, Γ̂^{p+1}(β)`; the extra term feeds the `j'+1` index of `Ĥ`.
pub fn krylov_sequence(rxx: &Surface, rxy: &Surface, p: usize) -> Result<Vec<Surface>> {
    if p == 0 {
        return Err(FofrError::InvalidInput("p must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(p + 1);
    terms.push(rxy.clone());
    for j in 0..p {
        let next = apply_gamma(rxx, &terms[j])?;
        terms.push(next);
    }
    Ok(terms)
}

/// `Ĥ_p`, `α̂_p` and the conditioning diagnostics.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub h: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Smallest eigenvalue of `(Ĥ + Ĥᵀ)/2`.
    pub tau: f64,
    /// Reciprocal condition of the Jacobi-equilibrated `(Ĥ + Ĥᵀ)/2`.
    pub rcond: f64,
}

/// Builds `h_{jj'} = ⟨Γ̂ʲ, Γ̂^{j'+1}⟩` and `α_j = ⟨Γ̂¹, Γ̂ʲ⟩` from `p+1` Krylov terms.
pub fn gram_system(terms: &[Surface]) -> Result<GramSystem> {
    if terms.len() < 2 {
        return Err(FofrError::InvalidInput(
            "the Gram system needs p+1 >= 2 Krylov terms".into(),
        ));
    }
    let p = terms.len() - 1;
    let (gs, gt) = (terms[0].grid_s(), terms[0].grid_t());
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        for jp in 0..p {
            h[(j, jp)] = weighted_inner(gs, gt, terms[j].values(), terms[jp + 1].values());
        }
    }
    let alpha = DVector::from_fn(p, |j, _| {
        weighted_inner(gs, gt, terms[0].values(), terms[j].values())
    });
    let sym = symmetrized(&h);
    let tau = SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let rcond = equilibrated_rcond(&sym);
    Ok(GramSystem {
        h,
        alpha,
        tau,
        rcond,
    })
}

fn symmetrized(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

fn jacobi_scaling(sym: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = sym.diagonal();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    Some(d.map(|v| 1.0 / v.sqrt()))
}

fn equilibrated_rcond(sym: &DMatrix<f64>) -> f64 {
    let Some(scale) = jacobi_scaling(sym) else {
        return 0.0;
    };
    let scaled = DMatrix::from_fn(sym.nrows(), sym.ncols(), |i, j| {
        scale[i] * sym[(i, j)] * scale[j]
    });
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return 0.0;
    }
    (min / max).max(0.0)
}

/// Solves `Ĥ c = α̂` after symmetrization and Jacobi equilibration.
pub fn explicit_coefficients(gram: &GramSystem) -> Result<DVector<f64>> {
    if !(gram.rcond >= RCOND_MIN) {
        return Err(FofrError::SingularSystem {
            rcond: gram.rcond,
            threshold: RCOND_MIN,
        });
    }
    let sym = symmetrized(&gram.h);
    let scale = jacobi_scaling(&sym).ok_or(FofrError::SingularSystem {
        rcond: 0.0,
        threshold: RCOND_MIN,
    })?;
    let n = sym.nrows();
    let scaled = DMatrix::from_fn(n, n, |i, j| scale[i] * sym[(i, j)] * scale[j]);
    let rhs = gram.alpha.component_mul(&scale);
    let chol = scaled.cholesky().ok_or(FofrError::SingularSystem {
        rcond: gram.rcond,
        threshold: RCOND_MIN,
    })?;
    Ok(chol.solve(&rhs).component_mul(&scale))
}

/// `β̂ = Σ_j c_j Γ̂ʲ(β)` with `c = Ĥ⁻¹ α̂`.
pub fn beta_hat_explicit(terms: &[Surface], gram: &GramSystem) -> Result<Surface> {
    let c = explicit_coefficients(gram)?;
    let mut beta = Surface::zeros(terms[0].grid_s(), terms[0].grid_t());
    for (cj, term) in c.iter().zip(terms) {
        beta.axpy(*cj, term);
    }
    Ok(beta)
}

/// Output of the r̂-weighted modified Gram–Schmidt pass.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    pub psi: Vec<Surface>,
    /// Index (0-based) of the Krylov term each `ψ` came from.
    pub origin: Vec<usize>,
    pub dropped: usize,
}

impl OrthoBasis {
    /// Number of directions built from the first `p` Krylov terms.
    pub fn count_up_to(&self, p: usize) -> usize {
        self.origin.iter().take_while(|&&o| o < p).count()
    }

    /// Largest deviation of `B(ψᵢ, ψⱼ)` from `δᵢⱼ`.
    pub fn orthonormality_defect(&self, rxx: &Surface) -> Result<f64> {
        let gamma_psi = self
            .psi
            .iter()
            .map(|p| apply_gamma(rxx, p))
            .collect::<Result<Vec<_>>>()?;
        let mut worst = 0.0_f64;
        for (i, a) in self.psi.iter().enumerate() {
            for (j, gb) in gamma_psi.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((inner_l2_surface(a, gb)? - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Modified Gram–Schmidt on the first `p` terms under the bilinear form `B`.
///
/// A direction is dropped when its B-norm² after projection is below
/// [`DROP_TOL`] times its B-norm² before projection.
pub fn mgs_orthonormalize(terms: &[Surface], rxx: &Surface, p: usize) -> Result<OrthoBasis> {
    let p = p.min(terms.len());
    if p == 0 {
        return Err(FofrError::InvalidInput("need at least one Krylov term".into()));
    }
    let mut psi: Vec<Surface> = Vec::with_capacity(p);
    let mut gamma_psi: Vec<Surface> = Vec::with_capacity(p);
    let mut origin = Vec::with_capacity(p);
    let mut dropped = 0;
    for (j, term) in terms.iter().take(p).enumerate() {
        let gamma_term = apply_gamma(rxx, term)?;
        let before = inner_l2_surface(term, &gamma_term)?;
        if j == 0 && !(before > 0.0 && before.is_finite()) {
            return Err(FofrError::Degenerate(
                "the cross-covariance has zero norm under the covariance form (no signal)".into(),
            ));
        }
        let mut v = term.clone();
        for (q, gq) in psi.iter().zip(&gamma_psi) {
            let coef = inner_l2_surface(&v, gq)?;
            v.axpy(-coef, q);
        }
        let gv = apply_gamma(rxx, &v)?;
        let after = inner_l2_surface(&v, &gv)?;
        if !(after > DROP_TOL * before) {
            dropped += 1;
            continue;
        }
        let inv = 1.0 / after.sqrt();
        psi.push(v.scaled(inv));
        gamma_psi.push(gv.scaled(inv));
        origin.push(j);
    }
    Ok(OrthoBasis {
        psi,
        origin,
        dropped,
    })
}

/// `γ̂ⱼ = ⟨r̂_XY, ψ̂ⱼ⟩` and `β̃ = Σ γ̂ⱼ ψ̂ⱼ`.
pub fn beta_tilde_stable(psi: &[Surface], rxy: &Surface) -> Result<(Surface, Vec<f64>)> {
    let first = psi
        .first()
        .ok_or_else(|| FofrError::InvalidInput("empty orthonormal basis".into()))?;
    let mut beta = Surface::zeros(first.grid_s(), first.grid_t());
    let mut gamma = Vec::with_capacity(psi.len());
    for q in psi {
        let g = inner_l2_surface(rxy, q)?;
        beta.axpy(g, q);
        gamma.push(g);
    }
    Ok((beta, gamma))
}

/// Krylov terms, Gram system and the orthonormalized basis for one `p`.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub terms: Vec<Surface>,
    pub gram: GramSystem,
    pub ortho: OrthoBasis,
    pub gamma: Vec<f64>,
}

impl KrylovBasis {
    pub fn build(rxx: &Surface, rxy: &Surface, p: usize) -> Result<Self> {
        let terms = krylov_sequence(rxx, rxy, p)?;
        let gram = gram_system(&terms)?;
        let ortho = mgs_orthonormalize(&terms, rxx, p)?;
        let gamma = ortho
            .psi
            .iter()
            .map(|q| inner_l2_surface(rxy, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            terms,
            gram,
            ortho,
            gamma,
        })
    }

    pub fn p(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn beta_explicit(&self) -> Result<Surface> {
        beta_hat_explicit(&self.terms, &self.gram)
    }

    /// Stabilized estimate using only directions from the first `p` terms.
    pub fn beta_stable_up_to(&self, p: usize) -> Surface {
        let q = self.ortho.count_up_to(p);
        let first = &self.terms[0];
        let mut beta = Surface::zeros(first.grid_s(), first.grid_t());
        for (g, psi) in self.gamma.iter().zip(&self.ortho.psi).take(q) {
            beta.axpy(*g, psi);
        }
        beta
    }

    pub fn beta_stable(&self) -> Surface {
        self.beta_stable_up_to(self.p())
    }
}

/// Coefficient surface for fAPLS given covariance surfaces directly.
pub fn estimate_from_covariances(
    rxx: &Surface,
    rxy: &Surface,
    p: usize,
    method: Method,
) -> Result<(Surface, KrylovBasis)> {
    let basis = KrylovBasis::build(rxx, rxy, p)?;
    let beta = match method {
        Method::FaplsExplicit => basis.beta_explicit()?,
        Method::FaplsStable => basis.beta_stable(),
        Method::Fpcr => {
            return Err(FofrError::InvalidInput(
                "FPCR is not a Krylov estimator; use fpcr::fpcr_estimate".into(),
            ))
        }
    };
    Ok((beta, basis))
}

/// Fits a fAPLS model and also returns the Krylov basis built on the sample.
pub fn fit_detailed(
    xs: &CurveSet,
    ys: &CurveSet,
    p: usize,
    method: Method,
) -> Result<(FofrModel, KrylovBasis, Surface)> {
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} predictor curves vs {} response curves",
            xs.n(),
            ys.n()
        )));
    }
    if p == 0 {
        return Err(FofrError::InvalidInput("p must be at least 1".into()));
    }
    let cx = center(xs);
    let cy = center(ys);
    let rxx = empirical_cov(&cx);
    let rxy = empirical_cross_cov(&cx, &cy)?;
    let (beta, basis) = estimate_from_covariances(&rxx, &rxy, p, method)?;
    let model = FofrModel {
        mean_x: cx.mean,
        mean_y: cy.mean,
        beta,
        p_used: p,
        method,
        diagnostics: FitDiagnostics {
            tau: Some(basis.gram.tau),
            rcond: Some(basis.gram.rcond),
            dropped: basis.ortho.dropped,
            pprime: None,
            cv_curve: None,
        },
    };
    Ok((model, basis, rxx))
}

/// Fits a model with `p` components. For [`Method::Fpcr`] the response
/// truncation rank equals `p`.
pub fn fit(xs: &CurveSet, ys: &CurveSet, p: usize, method: Method) -> Result<FofrModel> {
    match method {
        Method::Fpcr => crate::fpcr::fpcr_estimate(xs, ys, p, p),
        _ => fit_detailed(xs, ys, p, method).map(|(m, _, _)| m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_uniform_grid, Grid};
    use crate::simlab::{population_scenario1, shifted_legendre};

    fn unit_grid(m: usize) -> Grid {
        make_uniform_grid(0.0, 1.0, m).unwrap()
    }

    fn rank_one(g: &Grid) -> (Surface, Surface) {
        let p2 = shifted_legendre(2, g).unwrap();
        let rxx = Surface::outer(&p2, &p2);
        (rxx.clone(), rxx)
    }

    #[test]
    fn fixed_point_terms_are_equal() {
        let g = unit_grid(101);
        let (rxx, rxy) = rank_one(&g);
        let terms = krylov_sequence(&rxx, &rxy, 3).unwrap();
        assert_eq!(terms.len(), 4);
        for t in &terms {
            assert!(t.sub(&rxy).unwrap().norm_l2() < 5e-3);
        }
    }

    #[test]
    fn zero_cross_covariance_gives_zero_terms() {
        let g = unit_grid(21);
        let (rxx, _) = rank_one(&g);
        let zero = Surface::zeros(&g, &g);
        let terms = krylov_sequence(&rxx, &zero, 3).unwrap();
        assert!(terms.iter().all(|t| t.values().amax() == 0.0));
        assert!(matches!(
            mgs_orthonormalize(&terms, &rxx, 3),
            Err(FofrError::Degenerate(_))
        ));
    }

    #[test]
    fn scaling_covariance_scales_terms_geometrically() {
        let g = unit_grid(41);
        let pop = population_scenario1(&g);
        let c = 0.37;
        let base = krylov_sequence(&pop.rxx, &pop.rxy, 3).unwrap();
        let scaled = krylov_sequence(&pop.rxx.scaled(c), &pop.rxy, 3).unwrap();
        for (j, (a, b)) in base.iter().zip(&scaled).enumerate() {
            let expected = a.scaled(c.powi(j as i32));
            let err = b.sub(&expected).unwrap().norm_l2();
            assert!(err <= 1e-12 * expected.norm_l2().max(1e-300));
        }
    }

    #[test]
    fn gram_at_p1() {
        let g = unit_grid(41);
        let pop = population_scenario1(&g);
        let terms = krylov_sequence(&pop.rxx, &pop.rxy, 1).unwrap();
        let gram = gram_system(&terms).unwrap();
        let h11 = inner_l2_surface(&terms[0], &terms[1]).unwrap();
        let a1 = inner_l2_surface(&terms[0], &terms[0]).unwrap();
        assert_eq!(gram.h[(0, 0)], h11);
        assert_eq!(gram.alpha[0], a1);
        let beta = beta_hat_explicit(&terms, &gram).unwrap();
        let expected = terms[0].scaled(a1 / h11);
        assert!(beta.sub(&expected).unwrap().norm_l2() <= 1e-12 * expected.norm_l2());
    }

    #[test]
    fn singular_gram_in_fixed_point_case() {
        let g = unit_grid(101);
        let (rxx, rxy) = rank_one(&g);
        let terms = krylov_sequence(&rxx, &rxy, 2).unwrap();
        let gram = gram_system(&terms).unwrap();
        let norm2 = rxy.norm_l2().powi(2);
        for v in gram.h.iter() {
            assert!((v - norm2).abs() < 1e-2 * norm2);
        }
        assert!(gram.tau.abs() < 1e-8 * norm2);
        assert!(matches!(
            beta_hat_explicit(&terms, &gram),
            Err(FofrError::SingularSystem { .. })
        ));
    }

    #[test]
    fn h_matches_triple_quadrature() {
        let g = unit_grid(101);
        let pop = population_scenario1(&g);
        let terms = krylov_sequence(&pop.rxx, &pop.rxy, 2).unwrap();
        let gram = gram_system(&terms).unwrap();
        // oracle: h_{jj'} = ∫∫∫ r(s,w) Γʲ(s,t) Γ^{j'}(w,t) ds dw dt by explicit loops
        let w = g.weights();
        let m = g.len();
        for j in 0..2 {
            for jp in 0..2 {
                let (a, b) = (terms[j].values(), terms[jp].values());
                let mut total = 0.0;
                for t in 0..m {
                    let mut inner = 0.0;
                    for s in 0..m {
                        for u in 0..m {
                            inner += w[s] * w[u] * pop.rxx.values()[(s, u)] * a[(s, t)] * b[(u, t)];
                        }
                    }
                    total += w[t] * inner;
                }
                assert!((gram.h[(j, jp)] - total).abs() <= 1e-8 * total.abs());
            }
        }
    }

    #[test]
    fn population_recovery_at_p3() {
        let g = unit_grid(101);
        let pop = population_scenario1(&g);
        let norm = pop.beta.norm_l2();
        for method in [Method::FaplsExplicit, Method::FaplsStable] {
            let (beta, _) = estimate_from_covariances(&pop.rxx, &pop.rxy, 3, method).unwrap();
            assert!(beta.sub(&pop.beta).unwrap().norm_l2() < 1e-3 * norm, "{method}");
        }
    }

    #[test]
    fn mgs_single_term_normalizes() {
        let g = unit_grid(41);
        let pop = population_scenario1(&g);
        let ortho = mgs_orthonormalize(std::slice::from_ref(&pop.rxy), &pop.rxx, 1).unwrap();
        assert_eq!(ortho.psi.len(), 1);
        let bnorm = b_form(&pop.rxx, &pop.rxy, &pop.rxy).unwrap().sqrt();
        let expected = pop.rxy.scaled(1.0 / bnorm);
        assert!(ortho.psi[0].sub(&expected).unwrap().norm_l2() <= 1e-14 * expected.norm_l2());
        let (beta, _) = beta_tilde_stable(&ortho.psi, &pop.rxy).unwrap();
        // collinear with rxy
        let c = inner_l2_surface(&beta, &pop.rxy).unwrap() / pop.rxy.norm_l2().powi(2);
        assert!(beta.sub(&pop.rxy.scaled(c)).unwrap().norm_l2() <= 1e-12 * beta.norm_l2());
    }

    #[test]
    fn mgs_collapses_identical_terms() {
        let g = unit_grid(101);
        let (rxx, rxy) = rank_one(&g);
        let terms = krylov_sequence(&rxx, &rxy, 3).unwrap();
        let ortho = mgs_orthonormalize(&terms, &rxx, 3).unwrap();
        assert_eq!(ortho.psi.len(), 1);
        assert_eq!(ortho.dropped, 2);
    }

    #[test]
    fn mgs_orthonormal_on_population() {
        let g = unit_grid(101);
        let pop = population_scenario1(&g);
        let terms = krylov_sequence(&pop.rxx, &pop.rxy, 3).unwrap();
        let ortho = mgs_orthonormalize(&terms, &pop.rxx, 3).unwrap();
        assert_eq!(ortho.psi.len(), 3);
        assert!(ortho.orthonormality_defect(&pop.rxx).unwrap() < 1e-8);
    }

    #[test]
    fn explicit_and_stable_agree_when_well_conditioned() {
        let g = unit_grid(61);
        let pop = population_scenario1(&g);
        let basis = KrylovBasis::build(&pop.rxx, &pop.rxy, 2).unwrap();
        assert!(basis.gram.rcond > 1e-6);
        let a = basis.beta_explicit().unwrap();
        let b = basis.beta_stable();
        assert!(a.sub(&b).unwrap().norm_l2() <= 1e-6 * a.norm_l2());
    }

    #[test]
    fn gram_symmetric_psd() {
        let g = unit_grid(61);
        let pop = population_scenario1(&g);
        let terms = krylov_sequence(&pop.rxx, &pop.rxy, 3).unwrap();
        let gram = gram_system(&terms).unwrap();
        let hmax = gram.h.amax();
        assert!((&gram.h - gram.h.transpose()).amax() <= 1e-10 * hmax);
        let eig = SymmetricEigen::new(symmetrized(&gram.h)).eigenvalues;
        let lmax = eig.max();
        assert!(eig.iter().all(|l| *l >= -1e-10 * lmax));
        assert_eq!(gram.alpha[0], inner_l2_surface(&terms[0], &terms[0]).unwrap());
    }
}
