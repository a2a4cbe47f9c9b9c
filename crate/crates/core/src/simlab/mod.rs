//! Simulation scenarios, Gaussian-process sampling and the relative
//! estimation/prediction error metrics.

mod bench;

pub use bench::{
    run_benchmark, write_raw_csv, write_report_csv, write_report_text, BenchmarkOptions,
    BenchmarkReport, ReplicateRecord, ReportRow,
};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FofrError, Result};
use crate::grid::{inner_l2_surface, make_uniform_grid, Curve, Grid, Surface};
use crate::sampcov::{apply_gamma, symmetrize_in_place, CurveSet};

/// Normalized shifted Legendre polynomial of order 2, 3 or 4 on `[0, 1]`.
pub fn shifted_legendre(order: u32, grid: &Grid) -> Result<Curve> {
    let f: fn(f64) -> f64 = match order {
        2 => |s| 5f64.sqrt() * (6.0 * s * s - 6.0 * s + 1.0),
        3 => |s| 7f64.sqrt() * (20.0 * s.powi(3) - 30.0 * s * s + 12.0 * s - 1.0),
        4 => |s| 3.0 * (70.0 * s.powi(4) - 140.0 * s.powi(3) + 90.0 * s * s - 20.0 * s + 1.0),
        other => {
            return Err(FofrError::InvalidInput(format!(
                "unsupported shifted Legendre order {other} (expected 2, 3 or 4)"
            )))
        }
    };
    Ok(grid.curve_from_fn(f))
}

/// `σ² ρ^|t−t'|`.
pub fn ar_error_cov(rho: f64, sigma2: f64, grid: &Grid) -> Result<Surface> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(FofrError::InvalidInput(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(FofrError::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(Surface::from_fn(grid, grid, |t, u| sigma2 * rho.powf((t - u).abs())))
}

/// Gaussian kernel `exp{−(10|s−s'|)²}` used for Scenario-2 predictors.
pub fn sigma1_cov(grid: &Grid) -> Surface {
    Surface::from_fn(grid, grid, |s, u| (-(10.0 * (s - u)).powi(2)).exp())
}

/// Matérn-type kernel `{1 + 20d + (20d)²/3} exp(−20d)` used for the Scenario-2 ζ curves.
pub fn sigma2_cov(grid: &Grid) -> Surface {
    Surface::from_fn(grid, grid, |s, u| {
        let d = 20.0 * (s - u).abs();
        (1.0 + d + d * d / 3.0) * (-d).exp()
    })
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Factorized Gaussian process on a grid; draws `mean + L z`.
#[derive(Debug, Clone)]
pub struct GpSampler {
    grid: Grid,
    mean: Vec<f64>,
    factor: Option<DMatrix<f64>>,
    jitter: f64,
}

impl GpSampler {
    /// Cholesky factorization with jitter `c · mean(diag)` for
    /// `c = 1e-10, 1e-9, …, 1e-6`; fails after the largest.
    pub fn new(mean: &Curve, cov: &Surface) -> Result<Self> {
        let grid = cov.grid_s().clone();
        grid.ensure_matches(cov.grid_t(), "GP covariance")?;
        grid.ensure_matches(mean.grid(), "GP mean vs covariance")?;
        let m = grid.len();
        let c = cov.values();
        let mean_diag = c.diagonal().sum() / m as f64;
        if c.amax() == 0.0 {
            return Ok(Self {
                grid,
                mean: mean.values().to_vec(),
                factor: None,
                jitter: 0.0,
            });
        }
        if !(mean_diag > 0.0) {
            return Err(FofrError::NotPsd { jitter: 0.0 });
        }
        let mut sym = c.clone();
        symmetrize_in_place(&mut sym);
        let mut rel = JITTER_START;
        loop {
            let mut a = sym.clone();
            for i in 0..m {
                a[(i, i)] += rel * mean_diag;
            }
            if let Some(ch) = a.cholesky() {
                return Ok(Self {
                    grid,
                    mean: mean.values().to_vec(),
                    factor: Some(ch.unpack()),
                    jitter: rel,
                });
            }
            if rel >= JITTER_MAX {
                return Err(FofrError::NotPsd { jitter: rel });
            }
            rel *= 10.0;
        }
    }

    /// Relative jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `n` draws as the rows of an `n × m` matrix.
    pub fn draw_matrix<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let m = self.grid.len();
        let mut out = DMatrix::from_fn(n, m, |_, j| self.mean[j]);
        if let Some(l) = &self.factor {
            let mut z = vec![0.0; m];
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                for r in 0..m {
                    let mut acc = 0.0;
                    for c in 0..=r {
                        acc += l[(r, c)] * z[c];
                    }
                    out[(i, r)] += acc;
                }
            }
        }
        out
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> CurveSet {
        CurveSet::from_parts_unchecked(self.grid.clone(), self.draw_matrix(n, rng))
    }
}

/// `n` draws of a Gaussian process with the given mean and covariance.
pub fn sample_gp(mean: &Curve, cov: &Surface, n: usize, seed: u64) -> Result<CurveSet> {
    let sampler = GpSampler::new(mean, cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(n, &mut rng))
}

/// Scenario-1 eigenvalues of the predictor covariance.
pub const SCENARIO1_EIGENVALUES: [f64; 3] = [100.0, 10.0, 1.0];

/// Parameters of one simulation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: u8,
    pub n: usize,
    pub grid_size: usize,
    pub rho: f64,
    pub sigma2: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Multiplier on the predictor curves; 10 for Scenario 2, 1 otherwise.
    pub x_amplitude: f64,
}

impl ScenarioSpec {
    pub fn new(id: u8, rho: f64, sigma2: f64) -> Self {
        Self {
            id,
            n: 300,
            grid_size: 101,
            rho,
            sigma2,
            train_fraction: 0.8,
            seed: 1,
            x_amplitude: if id == 2 { 10.0 } else { 1.0 },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.id) {
            return Err(FofrError::Config(format!("unknown scenario id {}", self.id)));
        }
        if self.n < 2 {
            return Err(FofrError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(FofrError::Config("train_fraction must lie in (0, 1)".into()));
        }
        let n_train = self.n_train();
        if n_train < 2 || n_train >= self.n {
            return Err(FofrError::Config(format!(
                "train/test split of n = {} gives {n_train} training curves",
                self.n
            )));
        }
        if !(self.x_amplitude.is_finite() && self.x_amplitude > 0.0) {
            return Err(FofrError::Config("x_amplitude must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(FofrError::Config(format!("grid_size must be at least 2, got {}", self.grid_size)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(FofrError::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(FofrError::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        (self.train_fraction * self.n as f64).floor() as usize
    }
}

/// One simulated sample with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub xs: CurveSet,
    pub ys: CurveSet,
    pub beta_true: Surface,
    pub mu_y_true: Curve,
    pub snr: f64,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

enum Predictor {
    Legendre([Curve; 3]),
    Gp(GpSampler),
    Fourier { sin: Vec<Vec<f64>>, cos: Vec<Vec<f64>> },
}

/// A scenario with everything that stays fixed across replicates precomputed.
pub struct Scenario {
    spec: ScenarioSpec,
    grid: Grid,
    predictor: Predictor,
    beta_true: Surface,
    mu_y: Curve,
    err_cov: Surface,
    err_sampler: GpSampler,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random stream of one replicate; shared across noise settings of a scenario.
pub fn replicate_rng(seed: u64, scenario_id: u8, replicate: usize) -> ChaCha8Rng {
    stream_rng(seed, ((scenario_id as u64) << 32) | replicate as u64)
}

fn fixed_curves_rng(seed: u64, scenario_id: u8) -> ChaCha8Rng {
    stream_rng(seed, ((scenario_id as u64) << 32) | 0xFFFF_FFFF)
}

impl Scenario {
    pub fn prepare(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let grid = make_uniform_grid(0.0, 1.0, spec.grid_size)?;
        let zero = Curve::constant(&grid, 0.0);
        let (predictor, beta_true, mu_y) = match spec.id {
            1 => {
                let p = [
                    shifted_legendre(2, &grid)?,
                    shifted_legendre(3, &grid)?,
                    shifted_legendre(4, &grid)?,
                ];
                let mut beta = Surface::zeros(&grid, &grid);
                for c in &p {
                    beta.axpy(1.0, &Surface::outer(c, c));
                }
                (Predictor::Legendre(p), beta, zero.clone())
            }
            2 => {
                let zeta_sampler = GpSampler::new(&zero, &sigma2_cov(&grid))?;
                let zeta = zeta_sampler.draw(7, &mut fixed_curves_rng(spec.seed, spec.id));
                let mut beta = Surface::zeros(&grid, &grid);
                for k in [1, 3, 5] {
                    beta.axpy(1.0, &Surface::outer(&zeta.curve(k), &zeta.curve(k + 1)));
                }
                let x_sampler = GpSampler::new(&zero, &sigma1_cov(&grid))?;
                (Predictor::Gp(x_sampler), beta, zeta.curve(0))
            }
            3 => {
                let sin = (1..=10)
                    .map(|m| grid.points().iter().map(|s| (m as f64 * PI * s).sin()).collect())
                    .collect();
                let cos = (1..=10)
                    .map(|m| grid.points().iter().map(|s| (m as f64 * PI * s).cos()).collect())
                    .collect();
                let beta = Surface::from_fn(&grid, &grid, |s, t| (PI * s).sin() * (2.0 * PI * t).cos());
                let mu = grid.curve_from_fn(|t| 2.0 * (-(t - 1.0).powi(2)).exp());
                (Predictor::Fourier { sin, cos }, beta, mu)
            }
            _ => unreachable!("validated"),
        };
        let err_cov = ar_error_cov(spec.rho, spec.sigma2, &grid)?;
        let err_sampler = GpSampler::new(&zero, &err_cov)?;
        Ok(Self {
            spec: spec.clone(),
            grid,
            predictor,
            beta_true,
            mu_y,
            err_cov,
            err_sampler,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn beta_true(&self) -> &Surface {
        &self.beta_true
    }

    pub fn mu_y(&self) -> &Curve {
        &self.mu_y
    }

    pub fn err_cov(&self) -> &Surface {
        &self.err_cov
    }

    fn draw_predictors(&self, rng: &mut ChaCha8Rng) -> CurveSet {
        let n = self.spec.n;
        let m = self.grid.len();
        let amp = self.spec.x_amplitude;
        let x = match &self.predictor {
            Predictor::Legendre(p) => {
                let mut x = DMatrix::zeros(n, m);
                for i in 0..n {
                    for (lambda, curve) in SCENARIO1_EIGENVALUES.iter().zip(p) {
                        let z: f64 = rng.sample(StandardNormal);
                        let zeta = lambda.sqrt() * z;
                        for (j, v) in curve.values().iter().enumerate() {
                            x[(i, j)] += zeta * v;
                        }
                    }
                }
                x
            }
            Predictor::Gp(sampler) => sampler.draw_matrix(n, rng),
            Predictor::Fourier { sin, cos } => {
                let mut x = DMatrix::zeros(n, m);
                for i in 0..n {
                    for (k, (sm, cm)) in sin.iter().zip(cos).enumerate() {
                        let decay = 1.0 / ((k + 1) as f64).powi(2);
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        for j in 0..m {
                            x[(i, j)] += decay * (a * sm[j] + b * cm[j]);
                        }
                    }
                }
                x
            }
        };
        let x = if amp != 1.0 { x * amp } else { x };
        CurveSet::from_parts_unchecked(self.grid.clone(), x)
    }

    /// Draws X, then ε, then the train/test shuffle from `rng`.
    pub fn generate_with(&self, rng: &mut ChaCha8Rng) -> Result<SimulatedDataset> {
        let xs = self.draw_predictors(rng);
        let signal = xs.linear_functional(&self.beta_true)?;
        let eps = self.err_sampler.draw_matrix(self.spec.n, rng);
        let mut y = signal.matrix().clone() + eps;
        for mut row in y.row_iter_mut() {
            for (v, mu) in row.iter_mut().zip(self.mu_y.values()) {
                *v += mu;
            }
        }
        let ys = CurveSet::from_parts_unchecked(self.grid.clone(), y);
        let snr = snr(&xs, &self.beta_true, &self.mu_y, &self.err_cov)?;

        let mut order: Vec<usize> = (0..self.spec.n).collect();
        order.shuffle(rng);
        let n_train = self.spec.n_train();
        let mut train_idx = order[..n_train].to_vec();
        let mut test_idx = order[n_train..].to_vec();
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok(SimulatedDataset {
            xs,
            ys,
            beta_true: self.beta_true.clone(),
            mu_y_true: self.mu_y.clone(),
            snr,
            train_idx,
            test_idx,
        })
    }

    pub fn generate(&self, replicate: usize) -> Result<SimulatedDataset> {
        let mut rng = replicate_rng(self.spec.seed, self.spec.id, replicate);
        self.generate_with(&mut rng)
    }
}

/// First replicate of the configured scenario.
pub fn make_scenario(spec: &ScenarioSpec) -> Result<SimulatedDataset> {
    Scenario::prepare(spec)?.generate(0)
}

/// Signal-to-noise ratio: `[∫ n⁻¹ Σᵢ (μ_Y + L_{Xᵢ}(β))² dt]^½ / [∫ var ε(t) dt]^½`.
///
/// The numerator is the sample second moment of the noise-free response,
/// which includes the response mean.
pub fn snr(xs: &CurveSet, beta: &Surface, mu_y: &Curve, err_cov: &Surface) -> Result<f64> {
    let signal = xs.linear_functional(beta)?;
    beta.grid_t().ensure_matches(mu_y.grid(), "snr: response mean")?;
    beta.grid_t().ensure_matches(err_cov.grid_s(), "snr: error covariance")?;
    let gy = beta.grid_t();
    let n = xs.n() as f64;
    let s = signal.matrix();
    let mut second_moment = vec![0.0; gy.len()];
    for i in 0..s.nrows() {
        for (k, sm) in second_moment.iter_mut().enumerate() {
            let v = mu_y.values()[k] + s[(i, k)];
            *sm += v * v / n;
        }
    }
    let numerator = gy.integrate(&second_moment).sqrt();
    let diag: Vec<f64> = err_cov.values().diagonal().iter().copied().collect();
    let denominator = gy.integrate(&diag).sqrt();
    if !(denominator > 0.0) {
        return Err(FofrError::Degenerate("error process has zero variance".into()));
    }
    Ok(numerator / denominator)
}

/// `‖β* − β̂‖² / ‖β*‖²`.
pub fn reisee(beta_hat: &Surface, beta_true: &Surface) -> Result<f64> {
    let denom = inner_l2_surface(beta_true, beta_true)?;
    if !(denom > 0.0) {
        return Err(FofrError::Degenerate("true coefficient surface is zero".into()));
    }
    let diff = beta_true.sub(beta_hat)?;
    Ok(inner_l2_surface(&diff, &diff)? / denom)
}

/// `Σ ‖Yᵢ − Ŷᵢ‖² / Σ ‖Yᵢ − Ȳ_train‖²` over test curves.
pub fn reispe(y_test: &CurveSet, y_pred: &CurveSet, y_train_mean: &Curve) -> Result<f64> {
    if y_test.n() != y_pred.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} test curves vs {} predictions",
            y_test.n(),
            y_pred.n()
        )));
    }
    let g = y_test.grid();
    g.ensure_matches(y_pred.grid(), "reispe: predictions")?;
    g.ensure_matches(y_train_mean.grid(), "reispe: training mean")?;
    let w = g.weights();
    let (a, b) = (y_test.matrix(), y_pred.matrix());
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..a.nrows() {
        for (k, wk) in w.iter().enumerate() {
            let e = a[(i, k)] - b[(i, k)];
            let d = a[(i, k)] - y_train_mean.values()[k];
            num += wk * e * e;
            den += wk * d * d;
        }
    }
    if !(den > 0.0) {
        return Err(FofrError::Degenerate(
            "test responses coincide with the training mean".into(),
        ));
    }
    Ok(num / den)
}

/// Population covariances of Scenario 1 on a grid, noise-free.
#[derive(Debug, Clone)]
pub struct Population {
    pub rxx: Surface,
    /// `Γ(β*)` computed with the grid quadrature.
    pub rxy: Surface,
    /// Covariance of `L_X(β*)`.
    pub ryy: Surface,
    pub beta: Surface,
}

pub fn population_scenario1(grid: &Grid) -> Population {
    let p: Vec<Curve> = (2..=4)
        .map(|o| shifted_legendre(o, grid).expect("orders 2-4 are supported"))
        .collect();
    let mut rxx = Surface::zeros(grid, grid);
    let mut beta = Surface::zeros(grid, grid);
    for (lambda, c) in SCENARIO1_EIGENVALUES.iter().zip(&p) {
        let outer = Surface::outer(c, c);
        rxx.axpy(*lambda, &outer);
        beta.axpy(1.0, &outer);
    }
    let rxy = apply_gamma(&rxx, &beta).expect("grids match");
    let w = grid.weights();
    let mut wbeta = beta.values().clone();
    for (i, mut row) in wbeta.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut ryy = wbeta.transpose() * rxy.values();
    symmetrize_in_place(&mut ryy);
    Population {
        ryy: Surface::new(grid.clone(), grid.clone(), ryy).expect("finite"),
        rxx,
        rxy,
        beta,
    }
}
