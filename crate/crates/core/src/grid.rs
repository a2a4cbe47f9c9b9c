//! Sampling grids, trapezoidal quadrature and L2 inner products for
//! densely observed univariate curves and bivariate surfaces.
//!
//! Every integral in the crate goes through the weights stored on a [`Grid`],
//! so formulas stay independent of the grid resolution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FofrError, Result};

/// Tolerance used when deciding whether two grids are the same grid.
pub const GRID_MATCH_TOL: f64 = 1e-12;

/// Ordered sample points on a closed interval with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid on arbitrary strictly increasing points. Trapezoid weights
    /// come from the consecutive gaps.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        validate_points(&points)?;
        let m = points.len();
        let mut weights = vec![0.0; m];
        for i in 0..m - 1 {
            let half_gap = 0.5 * (points[i + 1] - points[i]);
            weights[i] += half_gap;
            weights[i + 1] += half_gap;
        }
        Ok(Self { points, weights })
    }

    /// Rebuilds a grid from stored points and weights, checking the invariants.
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_points(&points)?;
        if weights.len() != points.len() {
            return Err(FofrError::InvalidGrid(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FofrError::InvalidGrid("weights must be finite and nonnegative".into()));
        }
        let length = points[points.len() - 1] - points[0];
        let total: f64 = weights.iter().sum();
        if (total - length).abs() > 1e-12 * length.abs().max(1.0) * points.len() as f64 {
            return Err(FofrError::InvalidGrid(format!(
                "weights sum to {total} but the interval has length {length}"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lower and upper end of the interval.
    pub fn bounds(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    pub fn interval_length(&self) -> f64 {
        let (a, b) = self.bounds();
        b - a
    }

    /// True when both grids have the same points to within [`GRID_MATCH_TOL`].
    pub fn matches(&self, other: &Grid) -> bool {
        if std::ptr::eq(self, other) {
            return true;
        }
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| (a - b).abs() <= GRID_MATCH_TOL * a.abs().max(b.abs()).max(1.0))
    }

    pub(crate) fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(FofrError::GridMismatch(format!(
                "{what}: grid with {} points on [{}, {}] vs grid with {} points on [{}, {}]",
                self.len(),
                self.bounds().0,
                self.bounds().1,
                other.len(),
                other.bounds().0,
                other.bounds().1
            )))
        }
    }

    /// Evaluates `f` at every grid point.
    pub fn curve_from_fn(&self, f: impl Fn(f64) -> f64) -> Curve {
        Curve {
            grid: self.clone(),
            values: self.points.iter().map(|&s| f(s)).collect(),
        }
    }

    /// Quadrature approximation of the integral of `values` over the interval.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        compensated_sum(self.weights.iter().zip(values).map(|(w, v)| w * v))
    }
}

/// Neumaier-compensated summation; keeps `∫ 1` equal to the interval length.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn validate_points(points: &[f64]) -> Result<()> {
    if points.len() < 2 {
        return Err(FofrError::InvalidGrid(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(FofrError::InvalidGrid("grid points must be finite".into()));
    }
    if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
        return Err(FofrError::InvalidGrid(format!(
            "points must be strictly increasing (position {}: {} then {})",
            i + 1,
            points[i],
            points[i + 1]
        )));
    }
    Ok(())
}

/// `m` equispaced points from `a` to `b` with composite trapezoid weights.
pub fn make_uniform_grid(a: f64, b: f64, m: usize) -> Result<Grid> {
    if m < 2 {
        return Err(FofrError::InvalidGrid(format!("need at least 2 points, got {m}")));
    }
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(FofrError::InvalidGrid(format!("need a < b, got a = {a}, b = {b}")));
    }
    let h = (b - a) / (m - 1) as f64;
    let mut points: Vec<f64> = (0..m).map(|i| a + i as f64 * h).collect();
    points[m - 1] = b;
    let mut weights = vec![h; m];
    weights[0] = 0.5 * h;
    weights[m - 1] = 0.5 * h;
    Ok(Grid { points, weights })
}

/// A function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FofrError::InvalidInput(format!(
                "curve has {} values on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FofrError::InvalidInput("curve values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_l2(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Quadrature approximation of the L2 inner product of two curves on a shared grid.
pub fn inner_l2(f: &Curve, g: &Curve) -> Result<f64> {
    f.grid.ensure_matches(&g.grid, "inner_l2")?;
    Ok(compensated_sum(
        f.grid
            .weights()
            .iter()
            .zip(f.values.iter().zip(&g.values))
            .map(|(w, (a, b))| w * a * b),
    ))
}

/// A bivariate function sampled on `grid_s × grid_t`; rows follow `grid_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    grid_s: Grid,
    grid_t: Grid,
    values: DMatrix<f64>,
}

impl Surface {
    pub fn new(grid_s: Grid, grid_t: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid_s.len() || values.ncols() != grid_t.len() {
            return Err(FofrError::InvalidInput(format!(
                "surface is {}x{} but the grids have {} and {} points",
                values.nrows(),
                values.ncols(),
                grid_s.len(),
                grid_t.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FofrError::InvalidInput("surface values must be finite".into()));
        }
        Ok(Self {
            grid_s,
            grid_t,
            values,
        })
    }

    /// Construction without the finiteness scan, for values produced internally.
    pub(crate) fn from_parts_unchecked(grid_s: Grid, grid_t: Grid, values: DMatrix<f64>) -> Self {
        debug_assert_eq!(values.nrows(), grid_s.len());
        debug_assert_eq!(values.ncols(), grid_t.len());
        Self {
            grid_s,
            grid_t,
            values,
        }
    }

    pub fn zeros(grid_s: &Grid, grid_t: &Grid) -> Self {
        Self {
            values: DMatrix::zeros(grid_s.len(), grid_t.len()),
            grid_s: grid_s.clone(),
            grid_t: grid_t.clone(),
        }
    }

    pub fn from_fn(grid_s: &Grid, grid_t: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DMatrix::from_fn(grid_s.len(), grid_t.len(), |i, k| {
            f(grid_s.points()[i], grid_t.points()[k])
        });
        Self {
            values,
            grid_s: grid_s.clone(),
            grid_t: grid_t.clone(),
        }
    }

    /// Separable surface `f(s) g(t)`.
    pub fn outer(f: &Curve, g: &Curve) -> Self {
        let values = DMatrix::from_fn(f.values.len(), g.values.len(), |i, k| {
            f.values[i] * g.values[k]
        });
        Self {
            values,
            grid_s: f.grid.clone(),
            grid_t: g.grid.clone(),
        }
    }

    pub fn grid_s(&self) -> &Grid {
        &self.grid_s
    }

    pub fn grid_t(&self) -> &Grid {
        &self.grid_t
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn shares_grids(&self, other: &Surface) -> bool {
        self.grid_s.matches(&other.grid_s) && self.grid_t.matches(&other.grid_t)
    }

    pub(crate) fn ensure_shares_grids(&self, other: &Surface, what: &str) -> Result<()> {
        self.grid_s.ensure_matches(&other.grid_s, what)?;
        self.grid_t.ensure_matches(&other.grid_t, what)
    }

    pub fn scaled(&self, c: f64) -> Surface {
        Surface {
            values: &self.values * c,
            grid_s: self.grid_s.clone(),
            grid_t: self.grid_t.clone(),
        }
    }

    /// `self += c * other`; grids are assumed to match.
    pub fn axpy(&mut self, c: f64, other: &Surface) {
        self.values += &other.values * c;
    }

    pub fn sub(&self, other: &Surface) -> Result<Surface> {
        self.ensure_shares_grids(other, "surface difference")?;
        Ok(Surface {
            values: &self.values - &other.values,
            grid_s: self.grid_s.clone(),
            grid_t: self.grid_t.clone(),
        })
    }

    pub fn norm_l2(&self) -> f64 {
        weighted_inner(&self.grid_s, &self.grid_t, &self.values, &self.values).sqrt()
    }

    /// Largest absolute difference from the transpose; zero for exactly symmetric surfaces.
    pub fn max_asymmetry(&self) -> f64 {
        let v = &self.values;
        if v.nrows() != v.ncols() {
            return f64::INFINITY;
        }
        let mut dev = 0.0_f64;
        for i in 0..v.nrows() {
            for k in 0..i {
                dev = dev.max((v[(i, k)] - v[(k, i)]).abs());
            }
        }
        dev
    }
}

pub(crate) fn weighted_inner(gs: &Grid, gt: &Grid, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ws = gs.weights();
    let wt = gt.weights();
    let mut total = 0.0;
    for (k, &w_k) in wt.iter().enumerate() {
        let col_a = a.column(k);
        let col_b = b.column(k);
        let mut col = 0.0;
        for (i, &w_i) in ws.iter().enumerate() {
            col += w_i * col_a[i] * col_b[i];
        }
        total += w_k * col;
    }
    total
}

/// Quadrature approximation of the L2 inner product of two surfaces on shared grids.
pub fn inner_l2_surface(f: &Surface, g: &Surface) -> Result<f64> {
    f.ensure_shares_grids(g, "inner_l2_surface")?;
    Ok(weighted_inner(&f.grid_s, &f.grid_t, &f.values, &g.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(m: usize) -> Grid {
        make_uniform_grid(0.0, 1.0, m).unwrap()
    }

    fn p2(s: f64) -> f64 {
        5f64.sqrt() * (6.0 * s * s - 6.0 * s + 1.0)
    }

    #[test]
    fn three_point_weights() {
        let g = unit_grid(3);
        assert_eq!(g.points(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn two_point_weights() {
        let g = make_uniform_grid(0.0, 2.0, 2).unwrap();
        assert_eq!(g.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let g = unit_grid(101);
        assert_eq!(g.len(), 101);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(g.points()[100], 1.0);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(matches!(make_uniform_grid(0.0, 1.0, 1), Err(FofrError::InvalidGrid(_))));
        assert!(matches!(make_uniform_grid(1.0, 1.0, 5), Err(FofrError::InvalidGrid(_))));
        assert!(matches!(make_uniform_grid(2.0, 1.0, 5), Err(FofrError::InvalidGrid(_))));
        assert!(Grid::from_points(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Grid::from_points(vec![0.0]).is_err());
    }

    #[test]
    fn from_parts_checks_weight_sum() {
        let g = unit_grid(11);
        assert!(Grid::from_parts(g.points().to_vec(), g.weights().to_vec()).is_ok());
        let mut bad = g.weights().to_vec();
        bad[3] += 0.01;
        assert!(Grid::from_parts(g.points().to_vec(), bad).is_err());
    }

    #[test]
    fn nonuniform_weights_from_gaps() {
        let g = Grid::from_points(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        let expected = [0.05, 0.25, 0.45, 0.25];
        for (w, e) in g.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn inner_of_constants_is_interval_length() {
        let g = unit_grid(101);
        let one = Curve::constant(&g, 1.0);
        assert_eq!(inner_l2(&one, &one).unwrap(), 1.0);
        let g2 = make_uniform_grid(-1.0, 2.5, 37).unwrap();
        let one2 = Curve::constant(&g2, 1.0);
        assert!((inner_l2(&one2, &one2).unwrap() - 3.5).abs() < 1e-12 * 3.5);
    }

    #[test]
    fn legendre_p2_unit_norm() {
        let g = unit_grid(101);
        let f = g.curve_from_fn(p2);
        assert!((inner_l2(&f, &f).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn integral_of_s_squared() {
        // trapezoid error for s^2 is h^2/6 = 1.67e-5
        let g = unit_grid(101);
        let f = g.curve_from_fn(|s| s);
        assert!((inner_l2(&f, &f).unwrap() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = Curve::constant(&unit_grid(11), 1.0);
        let b = Curve::constant(&unit_grid(12), 1.0);
        assert!(matches!(inner_l2(&a, &b), Err(FofrError::GridMismatch(_))));
        let sa = Surface::zeros(&unit_grid(11), &unit_grid(11));
        let sb = Surface::zeros(&unit_grid(11), &unit_grid(12));
        assert!(matches!(inner_l2_surface(&sa, &sb), Err(FofrError::GridMismatch(_))));
    }

    #[test]
    fn surface_inner_products() {
        let g = unit_grid(101);
        let one = Surface::from_fn(&g, &g, |_, _| 1.0);
        assert!((inner_l2_surface(&one, &one).unwrap() - 1.0).abs() < 1e-12);

        // trapezoid is exact for linear integrands
        let fs = Surface::from_fn(&g, &g, |s, _| s);
        let gt = Surface::from_fn(&g, &g, |_, t| t);
        assert!((inner_l2_surface(&fs, &gt).unwrap() - 0.25).abs() < 1e-6);

        // the trapezoid overshoots ∫P2² by h²/12·(f'(1) − f'(0)) = 1e-3, so the
        // product norm sits at (1 + 1e-3)², just outside a 2e-3 band around 1
        let pp = Surface::from_fn(&g, &g, |s, t| p2(s) * p2(t));
        let expected = (1.0 + 1e-3f64).powi(2);
        assert!((inner_l2_surface(&pp, &pp).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn surface_rejects_non_finite() {
        let g = unit_grid(3);
        let mut v = DMatrix::zeros(3, 3);
        v[(1, 1)] = f64::NAN;
        assert!(Surface::new(g.clone(), g.clone(), v).is_err());
        assert!(Curve::new(g.clone(), vec![0.0, f64::INFINITY, 0.0]).is_err());
        assert!(Curve::new(g, vec![0.0, 1.0]).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = Grid> {
        prop::collection::vec(0.01f64..1.0, 2..30).prop_map(|gaps| {
            let mut pts = vec![-0.3];
            for g in gaps {
                let last = *pts.last().unwrap();
                pts.push(last + g);
            }
            Grid::from_points(pts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn piecewise_linear_integrated_exactly(grid in arb_grid(), seed in 0u64..1000) {
            let vals: Vec<f64> = (0..grid.len())
                .map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.7)).sin())
                .collect();
            let pts = grid.points();
            let exact: f64 = (0..pts.len() - 1)
                .map(|i| 0.5 * (vals[i] + vals[i + 1]) * (pts[i + 1] - pts[i]))
                .sum();
            let f = Curve::new(grid.clone(), vals).unwrap();
            let one = Curve::constant(&grid, 1.0);
            let q = inner_l2(&f, &one).unwrap();
            prop_assert!((q - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }

        #[test]
        fn weights_sum_matches_length(grid in arb_grid()) {
            let one = Curve::constant(&grid, 1.0);
            let len = grid.interval_length();
            prop_assert!((inner_l2(&one, &one).unwrap() - len).abs() <= 1e-12 * len);
        }

        #[test]
        fn inner_products_symmetric_bilinear(
            a in prop::collection::vec(-5.0f64..5.0, 9),
            b in prop::collection::vec(-5.0f64..5.0, 9),
            c in prop::collection::vec(-5.0f64..5.0, 9),
            x in -3.0f64..3.0,
            y in -3.0f64..3.0,
        ) {
            let g = make_uniform_grid(0.0, 2.0, 9).unwrap();
            let f = Curve::new(g.clone(), a.clone()).unwrap();
            let h = Curve::new(g.clone(), b.clone()).unwrap();
            let k = Curve::new(g.clone(), c.clone()).unwrap();
            prop_assert!((inner_l2(&f, &h).unwrap() - inner_l2(&h, &f).unwrap()).abs() < 1e-12);
            let comb = Curve::new(g.clone(), a.iter().zip(&b).map(|(u, v)| x * u + y * v).collect()).unwrap();
            let lhs = inner_l2(&comb, &k).unwrap();
            let rhs = x * inner_l2(&f, &k).unwrap() + y * inner_l2(&h, &k).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));

            let gs = make_uniform_grid(0.0, 1.0, 3).unwrap();
            let gt = make_uniform_grid(0.0, 1.0, 3).unwrap();
            let sa = Surface::new(gs.clone(), gt.clone(), DMatrix::from_column_slice(3, 3, &a)).unwrap();
            let sb = Surface::new(gs.clone(), gt.clone(), DMatrix::from_column_slice(3, 3, &b)).unwrap();
            let sc = Surface::new(gs, gt, DMatrix::from_column_slice(3, 3, &c)).unwrap();
            let ab = inner_l2_surface(&sa, &sb).unwrap();
            prop_assert!((ab - inner_l2_surface(&sb, &sa).unwrap()).abs() < 1e-12);
            let mut comb = sa.scaled(x);
            comb.axpy(y, &sb);
            let lhs = inner_l2_surface(&comb, &sc).unwrap();
            let rhs = x * inner_l2_surface(&sa, &sc).unwrap() + y * inner_l2_surface(&sb, &sc).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
