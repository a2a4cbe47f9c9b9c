use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use fofr_core::fpcr::{fpcr_cv, fpcr_estimate};
use fofr_core::io::{read_curve_csv, write_curve_csv};
use fofr_core::modelsel::{cv_select_p, fve_pmax};
use fofr_core::simlab::{
    run_benchmark, write_raw_csv, write_report_csv, write_report_text, BenchmarkOptions,
    ScenarioSpec,
};
use fofr_core::{
    center, empirical_cov, fit as fit_model, load_model, predict_set, save_model, CurveSet,
    FofrError, FofrModel, Method, Result,
};
use serde_json::json;

use crate::{Components, PlotData};

pub struct FitConfig {
    pub command: &'static str,
    pub x: PathBuf,
    pub y: PathBuf,
    pub method: Method,
    pub p: Components,
    pub fve: f64,
    pub folds: usize,
    pub seed: u64,
    pub model: PathBuf,
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.fve > 0.0 && self.fve < 1.0) {
            return Err(FofrError::Config(format!("--fve must lie in (0, 1), got {}", self.fve)));
        }
        if self.folds < 2 {
            return Err(FofrError::Config(format!("--folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "command": self.command,
            "x": self.x.display().to_string(),
            "y": self.y.display().to_string(),
            "method": self.method.as_str(),
            "p": self.p.to_string(),
            "fve": self.fve,
            "folds": self.folds,
            "seed": self.seed,
            "model": self.model.display().to_string(),
        })
    }
}

fn fit_auto(xs: &CurveSet, ys: &CurveSet, cfg: &FitConfig) -> Result<FofrModel> {
    let p_max = fve_pmax(&empirical_cov(&center(xs)), cfg.fve)?;
    match cfg.method {
        Method::Fpcr => {
            let pprime_max = fve_pmax(&empirical_cov(&center(ys)), cfg.fve)?;
            let cv = fpcr_cv(xs, ys, p_max, pprime_max, cfg.folds, cfg.seed)?;
            let mut model = fpcr_estimate(xs, ys, cv.p, cv.pprime)?;
            model.diagnostics.cv_curve = Some(cv.grid);
            Ok(model)
        }
        method => {
            let cv = cv_select_p(xs, ys, p_max, cfg.folds, cfg.seed)?;
            let mut model = fit_model(xs, ys, cv.p_star, method)?;
            model.diagnostics.cv_curve = Some(cv.curve());
            Ok(model)
        }
    }
}

fn print_fit_summary(model: &FofrModel) -> io::Result<()> {
    let mut out = io::stdout().lock();
    let d = &model.diagnostics;
    writeln!(out, "method: {}", model.method)?;
    match d.pprime {
        Some(pp) => writeln!(out, "p: {} (response components: {pp})", model.p_used)?,
        None => writeln!(out, "p: {}", model.p_used)?,
    }
    if let Some(tau) = d.tau {
        writeln!(out, "tau (smallest eigenvalue of H): {tau:.6e}")?;
    }
    if let Some(rcond) = d.rcond {
        writeln!(out, "rcond (equilibrated H): {rcond:.6e}")?;
    }
    if d.dropped > 0 {
        writeln!(out, "dependent Krylov directions dropped: {}", d.dropped)?;
    }
    if let Some(curve) = &d.cv_curve {
        writeln!(out, "cross-validation:")?;
        for pt in curve {
            match pt.pprime {
                Some(pp) => writeln!(out, "  p={:<3} p'={:<3} cv={:.6}", pt.p, pp, pt.cv)?,
                None => writeln!(out, "  p={:<3} cv={:.6}", pt.p, pt.cv)?,
            }
        }
    }
    Ok(())
}

pub fn fit(cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    let xs = read_curve_csv(&cfg.x)?;
    let ys = read_curve_csv(&cfg.y)?;
    if xs.n() != ys.n() {
        return Err(FofrError::SampleMismatch(format!(
            "{} has {} curves but {} has {}",
            cfg.x.display(),
            xs.n(),
            cfg.y.display(),
            ys.n()
        )));
    }
    let model = match cfg.p {
        Components::Fixed(p) => fit_model(&xs, &ys, p, cfg.method)?,
        Components::Auto => fit_auto(&xs, &ys, cfg)?,
    };
    save_model(&cfg.model, &model, Some(cfg.to_json()))?;
    print_fit_summary(&model)?;
    Ok(())
}

pub fn predict(model_path: &Path, x_path: &Path, out: &Path) -> Result<()> {
    let (model, _) = load_model(model_path)?;
    let xs = read_curve_csv(x_path)?;
    let pred = predict_set(&model, &xs).map_err(|e| match e {
        FofrError::GridMismatch(msg) => FofrError::GridMismatch(format!(
            "{} does not match the grid of {}: {msg}",
            x_path.display(),
            model_path.display()
        )),
        other => other,
    })?;
    write_curve_csv(out, &pred)
}

pub struct SimulateConfig {
    pub scenario: u8,
    pub rho: f64,
    pub sigma2: f64,
    pub n: usize,
    pub grid: usize,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub out: PathBuf,
    pub timing: bool,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn simulate(cfg: &SimulateConfig) -> Result<()> {
    let spec = ScenarioSpec {
        n: cfg.n,
        grid_size: cfg.grid,
        seed: cfg.seed,
        ..ScenarioSpec::new(cfg.scenario, cfg.rho, cfg.sigma2)
    };
    let opts = BenchmarkOptions {
        timing: cfg.timing,
        ..BenchmarkOptions::default()
    };
    let report = run_benchmark(&spec, &cfg.methods, cfg.replicates, &opts)?;
    write_report_csv(&cfg.out, &report.rows)?;
    write_raw_csv(&sibling(&cfg.out, "_raw.csv"), &report.raw)?;
    write_report_text(BufWriter::new(File::create(sibling(&cfg.out, ".txt"))?), &report.rows)?;
    write_report_text(io::stdout().lock(), &report.rows)
}

pub fn export_plotdata(model_path: &Path, what: PlotData, out: &Path) -> Result<()> {
    let (model, _) = load_model(model_path)?;
    let create = || File::create(out).map(BufWriter::new);
    match what {
        PlotData::Beta => {
            let mut w = create()?;
            writeln!(w, "s,t,value")?;
            let (gs, gt) = (model.grid_x(), model.grid_y());
            let b = model.beta.values();
            for (i, s) in gs.points().iter().enumerate() {
                for (k, t) in gt.points().iter().enumerate() {
                    writeln!(w, "{s},{t},{}", b[(i, k)])?;
                }
            }
            w.flush()?;
        }
        PlotData::Cv => {
            let curve = model.diagnostics.cv_curve.as_ref().ok_or_else(|| {
                FofrError::Parse(format!(
                    "{} has no cross-validation curve (fit with --p auto)",
                    model_path.display()
                ))
            })?;
            let mut w = create()?;
            if model.method == Method::Fpcr {
                writeln!(w, "p,pprime,cv")?;
                for pt in curve {
                    writeln!(w, "{},{},{}", pt.p, pt.pprime.unwrap_or(0), pt.cv)?;
                }
            } else {
                writeln!(w, "p,cv")?;
                for pt in curve {
                    writeln!(w, "{},{}", pt.p, pt.cv)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}
