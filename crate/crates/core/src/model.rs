//! Fitted function-on-function regression models, prediction, and the JSON
//! model file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FofrError, Result};
use crate::grid::{Curve, Grid, Surface};
use crate::sampcov::CurveSet;

/// Which estimator produced a model's coefficient surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `[Γ̂¹ … Γ̂ᵖ] Ĥ⁻¹ α̂`
    FaplsExplicit,
    /// Orthonormalized Krylov basis with least-squares coefficients.
    FaplsStable,
    /// Truncated double eigen-expansion.
    Fpcr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FaplsExplicit => "fapls-explicit",
            Method::FaplsStable => "fapls-stable",
            Method::Fpcr => "fpcr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fapls" | "fapls-stable" => Ok(Method::FaplsStable),
            "fapls-explicit" => Ok(Method::FaplsExplicit),
            "fpcr" => Ok(Method::Fpcr),
            other => Err(FofrError::Parse(format!(
                "unknown method '{other}' (expected fapls, fapls-explicit or fpcr)"
            ))),
        }
    }
}

/// One point of a cross-validation curve. `pprime` is set for FPCR grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pprime: Option<usize>,
    pub cv: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Smallest eigenvalue of the symmetrized Gram matrix Ĥ_p.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Reciprocal condition of the equilibrated Ĥ_p.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rcond: Option<f64>,
    /// Krylov directions discarded by the orthonormalization.
    #[serde(default)]
    pub dropped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pprime: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_curve: Option<Vec<CvPoint>>,
}

/// Everything needed to predict: means, coefficient surface, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FofrModel {
    pub mean_x: Curve,
    pub mean_y: Curve,
    pub beta: Surface,
    pub p_used: usize,
    pub method: Method,
    pub diagnostics: FitDiagnostics,
}

impl FofrModel {
    pub fn grid_x(&self) -> &Grid {
        self.beta.grid_s()
    }

    pub fn grid_y(&self) -> &Grid {
        self.beta.grid_t()
    }
}

/// `Ȳ(t) + ∫ (X₀(s) − X̄(s)) β(s,t) ds`.
pub fn predict(model: &FofrModel, x0: &Curve) -> Result<Curve> {
    model
        .grid_x()
        .ensure_matches(x0.grid(), "predict: covariate grid vs model grid")?;
    let w = model.grid_x().weights();
    let beta = model.beta.values();
    let mut out = model.mean_y.values().to_vec();
    for (i, (x, mu)) in x0.values().iter().zip(model.mean_x.values()).enumerate() {
        let c = w[i] * (x - mu);
        if c == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += c * beta[(i, k)];
        }
    }
    Curve::new(model.grid_y().clone(), out)
}

/// Row-wise [`predict`] over a curve set.
pub fn predict_set(model: &FofrModel, xs: &CurveSet) -> Result<CurveSet> {
    let rows = (0..xs.n())
        .map(|i| predict(model, &xs.curve(i)).map(Curve::into_values))
        .collect::<Result<Vec<_>>>()?;
    CurveSet::from_rows(model.grid_y().clone(), &rows)
}

pub const MODEL_FORMAT: &str = "fofr-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct GridDoc {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BetaDoc {
    rows: usize,
    cols: usize,
    /// Row-major: entry `(i, k)` at `i * cols + k`.
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    method: Method,
    p_used: usize,
    grid_x: GridDoc,
    grid_y: GridDoc,
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    beta: BetaDoc,
    diagnostics: FitDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

fn grid_doc(g: &Grid) -> GridDoc {
    GridDoc {
        points: g.points().to_vec(),
        weights: g.weights().to_vec(),
    }
}

/// Serializes a model as a JSON document. `config` is echoed verbatim for provenance.
pub fn model_to_json(model: &FofrModel, config: Option<serde_json::Value>) -> Result<String> {
    let b = model.beta.values();
    let (rows, cols) = b.shape();
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        values.extend(b.row(i).iter().copied());
    }
    let doc = ModelDoc {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        method: model.method,
        p_used: model.p_used,
        grid_x: grid_doc(model.grid_x()),
        grid_y: grid_doc(model.grid_y()),
        mean_x: model.mean_x.values().to_vec(),
        mean_y: model.mean_y.values().to_vec(),
        beta: BetaDoc { rows, cols, values },
        diagnostics: model.diagnostics.clone(),
        config,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| FofrError::Parse(e.to_string()))
}

/// Parses a model document, returning the model and the echoed configuration.
pub fn model_from_json(text: &str) -> Result<(FofrModel, Option<serde_json::Value>)> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| FofrError::Parse(format!("model file: {e}")))?;
    if doc.format != MODEL_FORMAT {
        return Err(FofrError::Parse(format!(
            "model file: unexpected format tag '{}'",
            doc.format
        )));
    }
    if doc.version != MODEL_VERSION {
        return Err(FofrError::Parse(format!(
            "model file: unsupported version {}",
            doc.version
        )));
    }
    let gx = Grid::from_parts(doc.grid_x.points, doc.grid_x.weights)?;
    let gy = Grid::from_parts(doc.grid_y.points, doc.grid_y.weights)?;
    let BetaDoc { rows, cols, values } = doc.beta;
    if values.len() != rows * cols || rows != gx.len() || cols != gy.len() {
        return Err(FofrError::Parse(format!(
            "model file: beta is declared {rows}x{cols} with {} values on {}x{} grids",
            values.len(),
            gx.len(),
            gy.len()
        )));
    }
    let beta = Surface::new(gx.clone(), gy.clone(), DMatrix::from_row_slice(rows, cols, &values))?;
    let model = FofrModel {
        mean_x: Curve::new(gx, doc.mean_x)?,
        mean_y: Curve::new(gy, doc.mean_y)?,
        beta,
        p_used: doc.p_used,
        method: doc.method,
        diagnostics: doc.diagnostics,
    };
    if model.p_used == 0 {
        return Err(FofrError::Parse("model file: p_used must be at least 1".into()));
    }
    Ok((model, doc.config))
}

pub fn save_model(path: &Path, model: &FofrModel, config: Option<serde_json::Value>) -> Result<()> {
    let text = model_to_json(model, config)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(FofrModel, Option<serde_json::Value>)> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text).map_err(|e| match e {
        FofrError::Parse(msg) => FofrError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}
