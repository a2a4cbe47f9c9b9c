//! Monte-Carlo benchmark over replicates of one scenario configuration.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{reisee, reispe, replicate_rng, Scenario, ScenarioSpec, SimulatedDataset};
use crate::error::{FofrError, Result};
use crate::fapls::fit_detailed;
use crate::fpcr::{fpcr_cv, fpcr_estimate};
use crate::model::{predict_set, FofrModel, Method};
use crate::modelsel::{cv_select_p, fve_pmax, DEFAULT_FOLDS, DEFAULT_FVE};
use crate::sampcov::{center, empirical_cov};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub fve: f64,
    pub folds: usize,
    /// Record wall-clock seconds; off by default so reports are reproducible byte for byte.
    pub timing: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            fve: DEFAULT_FVE,
            folds: DEFAULT_FOLDS,
            timing: false,
        }
    }
}

/// Metrics of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub scenario: u8,
    pub rho: f64,
    pub sigma2: f64,
    pub replicate: usize,
    pub method: Method,
    pub snr: f64,
    pub p_max: usize,
    pub p: usize,
    pub pprime: Option<usize>,
    pub reisee: f64,
    pub reispe: f64,
    /// `max |B(ψ_j, ψ_k) − δ_jk|` of the fitted Krylov basis.
    pub orth_defect: Option<f64>,
    pub dropped: usize,
    pub seconds: f64,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: u8,
    pub rho: f64,
    pub sigma2: f64,
    pub snr: f64,
    pub method: Method,
    pub reisee_mean100: f64,
    pub reisee_sd100: f64,
    pub reispe_mean100: f64,
    pub reispe_sd100: f64,
    pub p_mean: f64,
    pub p_sd: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub raw: Vec<ReplicateRecord>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Split {
    x_train: crate::sampcov::CurveSet,
    y_train: crate::sampcov::CurveSet,
    x_test: crate::sampcov::CurveSet,
    y_test: crate::sampcov::CurveSet,
}

fn split(ds: &SimulatedDataset) -> Split {
    Split {
        x_train: ds.xs.subset(&ds.train_idx),
        y_train: ds.ys.subset(&ds.train_idx),
        x_test: ds.xs.subset(&ds.test_idx),
        y_test: ds.ys.subset(&ds.test_idx),
    }
}

fn score(model: &FofrModel, ds: &SimulatedDataset, sp: &Split) -> Result<(f64, f64)> {
    let e = reisee(&model.beta, &ds.beta_true)?;
    let pred = predict_set(model, &sp.x_test)?;
    let p = reispe(&sp.y_test, &pred, &model.mean_y)?;
    Ok((e, p))
}

fn run_replicate(
    scenario: &Scenario,
    replicate: usize,
    methods: &[Method],
    opts: &BenchmarkOptions,
) -> Result<Vec<ReplicateRecord>> {
    let spec = scenario.spec();
    let mut rng = replicate_rng(spec.seed, spec.id, replicate);
    let ds = scenario.generate_with(&mut rng)?;
    let cv_seed = rng.next_u64();
    let sp = split(&ds);
    let p_max = fve_pmax(&empirical_cov(&center(&sp.x_train)), opts.fve)?;

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let (model, orth_defect) = match method {
            Method::FaplsStable | Method::FaplsExplicit => {
                let cv = cv_select_p(&sp.x_train, &sp.y_train, p_max, opts.folds, cv_seed)?;
                let (model, basis, rxx) = fit_detailed(&sp.x_train, &sp.y_train, cv.p_star, method)?;
                let defect = basis.ortho.orthonormality_defect(&rxx)?;
                (model, Some(defect))
            }
            Method::Fpcr => {
                let pprime_max = fve_pmax(&empirical_cov(&center(&sp.y_train)), opts.fve)?;
                let cv = fpcr_cv(&sp.x_train, &sp.y_train, p_max, pprime_max, opts.folds, cv_seed)?;
                (fpcr_estimate(&sp.x_train, &sp.y_train, cv.p, cv.pprime)?, None)
            }
        };
        let (e, p) = score(&model, &ds, &sp)?;
        let seconds = if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        out.push(ReplicateRecord {
            scenario: spec.id,
            rho: spec.rho,
            sigma2: spec.sigma2,
            replicate,
            method,
            snr: ds.snr,
            p_max,
            p: model.p_used,
            pprime: model.diagnostics.pprime,
            reisee: e,
            reispe: p,
            orth_defect,
            dropped: model.diagnostics.dropped,
            seconds,
        });
    }
    Ok(out)
}

/// Runs `replicates` independent replicates in parallel on the current rayon pool.
/// Results do not depend on the schedule.
pub fn run_benchmark(
    spec: &ScenarioSpec,
    methods: &[Method],
    replicates: usize,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if methods.is_empty() {
        return Err(FofrError::Config("no methods requested".into()));
    }
    if replicates == 0 {
        return Err(FofrError::Config("replicates must be at least 1".into()));
    }
    let scenario = Scenario::prepare(spec)?;
    let per_rep: Vec<Vec<ReplicateRecord>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(&scenario, r, methods, opts))
        .collect::<Result<_>>()?;

    let snrs: Vec<f64> = per_rep.iter().map(|recs| recs[0].snr).collect();
    let (snr, _) = mean_sd(&snrs);
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let recs: Vec<&ReplicateRecord> = per_rep.iter().map(|r| &r[k]).collect();
            let col = |f: fn(&ReplicateRecord) -> f64| recs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (e_mean, e_sd) = mean_sd(&col(|r| r.reisee));
            let (p_mean, p_sd) = mean_sd(&col(|r| r.reispe));
            let (k_mean, k_sd) = mean_sd(&col(|r| r.p as f64));
            ReportRow {
                scenario: spec.id,
                rho: spec.rho,
                sigma2: spec.sigma2,
                snr,
                method,
                reisee_mean100: 100.0 * e_mean,
                reisee_sd100: 100.0 * e_sd,
                reispe_mean100: 100.0 * p_mean,
                reispe_sd100: 100.0 * p_sd,
                p_mean: k_mean,
                p_sd: k_sd,
                seconds: col(|r| r.seconds).iter().sum(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        rows,
        raw: per_rep.into_iter().flatten().collect(),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> FofrError {
    FofrError::Parse(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_raw_csv(path: &Path, raw: &[ReplicateRecord]) -> Result<()> {
    write_csv(path, raw)
}

/// Aligned plain-text rendering of the summary table.
pub fn write_report_text<W: Write>(mut out: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(
        out,
        "{:>8} {:>6} {:>7} {:>6}  {:<15} {:>17} {:>17} {:>11} {:>9}",
        "scenario", "rho", "sigma2", "snr", "method", "ReISEE x100 (sd)", "ReISPE x100 (sd)", "p (sd)", "seconds"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:>8} {:>6} {:>7} {:>6.2}  {:<15} {:>17} {:>17} {:>11} {:>9.2}",
            r.scenario,
            r.rho,
            r.sigma2,
            r.snr,
            r.method.as_str(),
            format!("{:.2} ({:.2})", r.reisee_mean100, r.reisee_sd100),
            format!("{:.2} ({:.2})", r.reispe_mean100, r.reispe_sd100),
            format!("{:.1} ({:.1})", r.p_mean, r.p_sd),
            r.seconds
        )?;
    }
    Ok(())
}
