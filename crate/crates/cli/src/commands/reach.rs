//! Steering with admissible controls.

use kropina_core::control::{build_frame, endpoint, integrate_control, reach, ControlSignal, ReachOptions};
use serde::Serialize;

use super::{point, Context};
use crate::error::CliError;
use crate::io::FORMAT;

#[derive(Debug, Clone, Serialize)]
pub struct ReachDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub reached: bool,
    pub distance: f64,
    pub evaluations: usize,
    pub restarts: Option<usize>,
    pub failure: Option<String>,
    pub endpoint: Vec<f64>,
    pub constants: Constants,
    pub signal: ControlSignal,
    pub path_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub omega_sup: f64,
    pub lambda: f64,
    pub c: f64,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let r = ctx.cfg.reach.clone().ok_or_else(|| CliError::config("missing [reach] section"))?;
    let m = ctx.manifold()?;
    point(&m, "x0", &r.x0)?;
    point(&m, "x1", &r.x1)?;
    let frame = build_frame(&m)?;
    let defaults = ReachOptions::default();
    // the global tol is a geodesic tolerance; reach has its own default
    let tol = crate::config::positive("tol", ctx.overrides.tol.or(r.tol).unwrap_or(defaults.tol))?;
    let opts = ReachOptions {
        tol,
        budget: r.budget.unwrap_or(defaults.budget),
        intervals: r.intervals.unwrap_or(defaults.intervals),
        seed: ctx.seed(),
    };
    let (signal, distance, evaluations, restarts, failure) = match reach(&frame, &r.x0, &r.x1, &opts) {
        Ok(ok) => (ok.signal, ok.distance, ok.evaluations, Some(ok.restarts), None),
        Err(f) => {
            let reason = f.to_string();
            (f.best_signal, f.best_distance, f.evaluations, None, Some(reason))
        }
    };
    let path = integrate_control(&frame, &r.x0, &signal)?;
    let doc = ReachDoc {
        format: FORMAT,
        command: "reach",
        manifold: m.name().to_string(),
        x0: r.x0.clone(),
        x1: r.x1.clone(),
        tol,
        seed: opts.seed,
        reached: failure.is_none(),
        distance,
        evaluations,
        restarts,
        failure: failure.clone(),
        endpoint: endpoint(&frame, &r.x0, &signal)?,
        constants: Constants { omega_sup: frame.omega_sup, lambda: frame.lambda, c: frame.c },
        signal,
        path_file: ctx.out.path_table("control_path.csv", &path)?,
    };
    ctx.out.document("reach.json", &doc)?;
    match failure {
        None => Ok(()),
        Some(f) => Err(CliError::Solver(f)),
    }
}
