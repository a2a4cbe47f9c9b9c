//! Function-on-function linear regression by functional partial least squares.
//!
//! The coefficient surface `β(s,t)` is estimated as the least-squares
//! projection onto the Krylov subspace spanned by `Γ(r_XY), …, Γ^p(r_XY)`,
//! where `Γ` contracts the predictor covariance against the first argument.
//! Two numerically distinct routes to the same estimator are provided
//! (a Gram-system solve and a Gram–Schmidt basis), together with a functional
//! principal component regression baseline, cross-validated model selection
//! and the simulation scenarios used to benchmark them.
//!
//! ```
//! use fofr_core::{fit, make_uniform_grid, predict, Method};
//! use fofr_core::simlab::{make_scenario, ScenarioSpec};
//!
//! let ds = make_scenario(&ScenarioSpec::new(1, 0.1, 1.0).with_n(80)).unwrap();
//! let model = fit(&ds.xs, &ds.ys, 2, Method::FaplsStable).unwrap();
//! let y0 = predict(&model, &ds.xs.curve(0)).unwrap();
//! assert_eq!(y0.grid(), &make_uniform_grid(0.0, 1.0, 101).unwrap());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod fapls;
pub mod fpcr;
pub mod grid;
pub mod io;
pub mod model;
pub mod modelsel;
pub mod sampcov;
pub mod simlab;

pub use error::{ErrorKind, FofrError, Result};
pub use fapls::{fit, fit_detailed, KrylovBasis};
pub use fpcr::{fpcr_cv, fpcr_estimate};
pub use grid::{inner_l2, inner_l2_surface, make_uniform_grid, Curve, Grid, Surface};
pub use model::{load_model, predict, predict_set, save_model, FofrModel, Method};
pub use modelsel::{cv_select_p, fve_pmax, CvReport};
pub use sampcov::{center, eigendecompose, empirical_cov, empirical_cross_cov, CurveSet};
