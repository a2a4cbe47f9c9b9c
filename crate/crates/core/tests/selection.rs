use fofr_core::fpcr::fpcr_cv;
use fofr_core::modelsel::{cv_curve_with_assignment, fold_assignment, fve_pmax};
use fofr_core::simlab::{
    population_scenario1, reisee, run_benchmark, sample_gp, shifted_legendre, ar_error_cov,
    BenchmarkOptions, ScenarioSpec, SCENARIO1_EIGENVALUES,
};
use fofr_core::{cv_select_p, make_uniform_grid, Curve, CurveSet, Grid, Method, Surface};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn grid() -> Grid {
    make_uniform_grid(0.0, 1.0, 41).unwrap()
}

/// Predictors with the given eigenvalues along P2, P3, P4.
fn legendre_predictors(g: &Grid, eigenvalues: &[f64], n: usize, seed: u64) -> CurveSet {
    let basis: Vec<Curve> = (2..2 + eigenvalues.len() as u32)
        .map(|o| shifted_legendre(o, g).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, g.len());
    for i in 0..n {
        for (lambda, b) in eigenvalues.iter().zip(&basis) {
            let z: f64 = rng.sample(StandardNormal);
            for j in 0..g.len() {
                x[(i, j)] += lambda.sqrt() * z * b.values()[j];
            }
        }
    }
    CurveSet::new(g.clone(), x).unwrap()
}

fn sum_of_outer(g: &Grid, orders: &[u32]) -> Surface {
    let mut beta = Surface::zeros(g, g);
    for &o in orders {
        let p = shifted_legendre(o, g).unwrap();
        beta.axpy(1.0, &Surface::outer(&p, &p));
    }
    beta
}

#[test]
fn noiseless_rank2_model_selects_two() {
    let g = grid();
    let beta = sum_of_outer(&g, &[2, 3]);
    let hits = (0..50u64)
        .filter(|&seed| {
            let xs = legendre_predictors(&g, &[100.0, 10.0], 100, seed);
            let ys = xs.linear_functional(&beta).unwrap();
            cv_select_p(&xs, &ys, 4, 5, seed).unwrap().p_star == 2
        })
        .count();
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn pure_noise_responses_select_one() {
    let g = grid();
    let err = ar_error_cov(0.5, 1.0, &g).unwrap();
    let zero = Curve::constant(&g, 0.0);
    let mut ones = 0;
    for seed in 0..50u64 {
        let xs = legendre_predictors(&g, &SCENARIO1_EIGENVALUES, 100, seed);
        let ys = sample_gp(&zero, &err, 100, 1000 + seed).unwrap();
        let rep = cv_select_p(&xs, &ys, 3, 5, seed).unwrap();
        let min = rep.cv_values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > 0.95, "seed {seed}: {:?}", rep.cv_values);
        if rep.p_star == 1 {
            ones += 1;
        }
    }
    assert!(ones > 25, "{ones}/50");
}

#[test]
fn population_fve_cap_is_two() {
    let pop = population_scenario1(&make_uniform_grid(0.0, 1.0, 101).unwrap());
    assert_eq!(fve_pmax(&pop.rxx, 0.99).unwrap(), 2);
}

#[test]
fn cv_invariant_to_sample_order() {
    let g = grid();
    let beta = sum_of_outer(&g, &[2, 3, 4]);
    let xs = legendre_predictors(&g, &SCENARIO1_EIGENVALUES, 60, 3);
    let noise = sample_gp(&Curve::constant(&g, 0.0), &ar_error_cov(0.1, 1.0, &g).unwrap(), 60, 4).unwrap();
    let ys = CurveSet::new(g.clone(), xs.linear_functional(&beta).unwrap().matrix() + noise.matrix()).unwrap();
    let assignment = fold_assignment(60, 5, 9);
    let base = cv_curve_with_assignment(&xs, &ys, 3, &assignment, 5).unwrap();

    let perm: Vec<usize> = (0..60).rev().collect();
    let permuted_assignment: Vec<usize> = perm.iter().map(|&i| assignment[i]).collect();
    let permuted = cv_curve_with_assignment(&xs.subset(&perm), &ys.subset(&perm), 3, &permuted_assignment, 5).unwrap();
    for (a, b) in base.iter().zip(&permuted) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn selected_p_within_cap() {
    let g = grid();
    let beta = sum_of_outer(&g, &[2, 3, 4]);
    for seed in 0..10u64 {
        let xs = legendre_predictors(&g, &SCENARIO1_EIGENVALUES, 50, seed);
        let ys = xs.linear_functional(&beta.scaled(0.5)).unwrap();
        let rep = cv_select_p(&xs, &ys, 2, 5, seed).unwrap();
        assert!(rep.p_star <= 2);
        assert_eq!(rep.p_grid, vec![1, 2]);
        assert!(rep.cv_values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn fpcr_noiseless_rank3_selects_full_pair() {
    let g = grid();
    let beta = sum_of_outer(&g, &[2, 3, 4]);
    let hits = (0..50u64)
        .filter(|&seed| {
            let xs = legendre_predictors(&g, &SCENARIO1_EIGENVALUES, 100, seed);
            let ys = xs.linear_functional(&beta).unwrap();
            let rep = fpcr_cv(&xs, &ys, 3, 3, 5, seed).unwrap();
            (rep.p, rep.pprime) == (3, 3)
        })
        .count();
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn fpcr_single_candidate() {
    let g = grid();
    let xs = legendre_predictors(&g, &SCENARIO1_EIGENVALUES, 40, 1);
    let ys = xs.linear_functional(&sum_of_outer(&g, &[2])).unwrap();
    let rep = fpcr_cv(&xs, &ys, 1, 1, 5, 2).unwrap();
    assert_eq!((rep.p, rep.pprime), (1, 1));
    assert_eq!(rep.grid.len(), 1);
}

#[test]
fn fpcr_estimation_error_at_least_fapls_in_most_replicates() {
    let spec = ScenarioSpec::new(1, 0.1, 1.0);
    let rep = run_benchmark(&spec, &[Method::FaplsStable, Method::Fpcr], 20, &BenchmarkOptions::default()).unwrap();
    let fapls: Vec<f64> = rep.raw.iter().filter(|r| r.method == Method::FaplsStable).map(|r| r.reisee).collect();
    let fpcr: Vec<f64> = rep.raw.iter().filter(|r| r.method == Method::Fpcr).map(|r| r.reisee).collect();
    let wins = fapls.iter().zip(&fpcr).filter(|(a, b)| b >= a).count();
    assert!(wins > 10, "FPCR >= fAPLS in {wins}/20 replicates");
}

#[test]
fn noiseless_scenario1_recovered_at_p3() {
    let spec = ScenarioSpec::new(1, 0.1, 1e-10);
    let ds = fofr_core::simlab::make_scenario(&spec).unwrap();
    let model = fofr_core::fit(&ds.xs, &ds.ys, 3, Method::FaplsStable).unwrap();
    assert!(reisee(&model.beta, &ds.beta_true).unwrap() < 0.05);
}
