//! Connecting geodesics: multi-start per winding class, then continuation in eps.

use kropina_core::bvp::{
    continue_eps_from, default_schedule, multi_start, ContinuationOptions, ContinuationTrace, ShootGuess, ShootOptions,
    ShootingProblem,
};
use kropina_core::finsler::curve_length_energy;
use serde::Serialize;

use super::{point, Context};
use crate::config::{check_schedule, positive, ConnectConfig};
use crate::error::CliError;
use crate::io::FORMAT;

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub eps: f64,
    pub length: f64,
    pub energy: f64,
    pub endpoint_error: f64,
    pub pregeodesic_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionEntry {
    pub winding: Vec<i64>,
    /// Last eps reached.
    pub eps: f64,
    /// `F_eps`-length at the last eps.
    pub length: f64,
    /// `F`-length of the last path, where it is admissible.
    pub length_f: Option<f64>,
    pub energy: f64,
    pub arrival_time: Option<f64>,
    pub endpoint_error: f64,
    pub pregeodesic_residual: f64,
    /// Residual of the last path as a lightlike pregeodesic at eps = 0.
    pub limit_residual: Option<f64>,
    pub converged: bool,
    pub monotone: bool,
    pub cauchy_index: Option<usize>,
    pub divergence: Option<String>,
    pub failure: Option<String>,
    pub trace: Vec<TraceStep>,
    pub path_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassFailureEntry {
    pub winding: Vec<i64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t0: f64,
    pub tol: f64,
    pub k_max: Option<u32>,
    pub eps_schedule: Vec<f64>,
    pub energy_cap: f64,
    /// Converged solutions first, each group by increasing length.
    pub solutions: Vec<SolutionEntry>,
    pub class_failures: Vec<ClassFailureEntry>,
}

impl ConnectDoc {
    pub fn converged(&self) -> impl Iterator<Item = &SolutionEntry> {
        self.solutions.iter().filter(|s| s.converged)
    }
}

fn schedule(ctx: &Context, c: &ConnectConfig) -> Result<Vec<f64>, CliError> {
    if let Some(s) = &ctx.overrides.eps_schedule {
        return Ok(s.clone());
    }
    if let Some(s) = &c.eps_schedule {
        check_schedule(s)?;
        return Ok(s.clone());
    }
    let start = positive("eps_start", c.eps_start.unwrap_or(1e-1))?;
    let end = positive("eps_end", c.eps_end.unwrap_or(1e-6))?;
    if end > start {
        return Err(CliError::config("eps_end must not exceed eps_start"));
    }
    Ok(default_schedule(start, end))
}

fn entry(ctx: &Context, p: &ShootingProblem, tr: &ContinuationTrace) -> Result<SolutionEntry, CliError> {
    let trace: Vec<TraceStep> = (0..tr.lengths.len())
        .map(|i| TraceStep {
            eps: tr.eps_sequence[i],
            length: tr.lengths[i],
            energy: tr.energies[i],
            endpoint_error: tr.endpoint_errors[i],
            pregeodesic_residual: tr.residuals[i],
        })
        .collect();
    let last = trace.last();
    let (length_f, arrival_time, path_file) = match tr.paths.last() {
        Some(path) => {
            let lf = curve_length_energy(&p.manifold, path, 0.0).ok().map(|le| le.length);
            let tag: Vec<String> = tr.winding.iter().map(|k| k.to_string()).collect();
            let name = if tag.is_empty() { "path.csv".to_string() } else { format!("path_k{}.csv", tag.join("_")) };
            (lf, lf.map(|l| p.t0 + l), ctx.out.path_table(&name, path)?)
        }
        None => (None, None, None),
    };
    Ok(SolutionEntry {
        winding: tr.winding.clone(),
        eps: last.map_or(f64::NAN, |s| s.eps),
        length: last.map_or(f64::NAN, |s| s.length),
        length_f,
        energy: last.map_or(f64::NAN, |s| s.energy),
        arrival_time,
        endpoint_error: last.map_or(f64::NAN, |s| s.endpoint_error),
        pregeodesic_residual: last.map_or(f64::NAN, |s| s.pregeodesic_residual),
        limit_residual: tr.limit_residual,
        converged: tr.converged,
        monotone: tr.monotone,
        cauchy_index: tr.cauchy_index,
        divergence: tr.divergence.clone(),
        failure: tr.failure.clone(),
        trace,
        path_file,
    })
}

pub fn connect(ctx: &Context, zermelo: bool) -> Result<ConnectDoc, CliError> {
    let c = ctx.cfg.connect.clone().ok_or_else(|| CliError::config("missing [connect] section"))?;
    if zermelo {
        let mc = ctx.cfg.manifold.as_ref().ok_or_else(|| CliError::config("missing [manifold] section"))?;
        let navigation = mc.wind_field.is_some()
            || matches!(mc.catalog.as_deref(), Some("constant-wind-plane" | "flat-cylinder-wind"));
        if !navigation {
            return Err(CliError::config("zermelo needs `wind_field` or a wind catalog entry"));
        }
    }
    let m = ctx.manifold()?;
    point(&m, "x0", &c.x0)?;
    point(&m, "x1", &c.x1)?;
    let tol = ctx.tol()?;
    let schedule = schedule(ctx, &c)?;
    let energy_cap = positive("energy_cap", c.energy_cap.unwrap_or(1e3))?;
    let shoot = ShootOptions { tol, samples: c.samples.unwrap_or(201).max(5), ..ShootOptions::default() };
    let opts = ContinuationOptions {
        tol: positive("cauchy_tol", c.cauchy_tol.unwrap_or(1e-5))?,
        energy_cap,
        shoot,
        ..ContinuationOptions::default()
    };
    let mut base = ShootingProblem::new(m.clone(), &c.x0, &c.x1, schedule[0])?;
    base.t0 = c.t0.unwrap_or(0.0);
    let periodic = m.topology().periodic_axes() > 0;
    let k_max = if periodic { Some(ctx.overrides.k_max.or(c.k_max).unwrap_or(3)) } else { None };

    let mut traces = Vec::new();
    let mut class_failures = Vec::new();
    if let Some(k) = k_max {
        let ms = multi_start(&base, k, &shoot)?;
        for s in &ms.solutions {
            let p = base.clone().with_hint(&s.winding)?;
            let guess = ShootGuess { direction: s.initial_velocity.clone(), time: s.length };
            let tr = continue_eps_from(&p, &schedule, &opts, Some(guess))?;
            traces.push((p, tr));
        }
        class_failures =
            ms.failures.into_iter().map(|f| ClassFailureEntry { winding: f.winding, reason: f.reason }).collect();
    } else {
        let tr = continue_eps_from(&base, &schedule, &opts, None)?;
        traces.push((base.clone(), tr));
    }
    let mut solutions = traces.iter().map(|(p, tr)| entry(ctx, p, tr)).collect::<Result<Vec<_>, _>>()?;
    // stable: equal lengths keep the class order
    solutions.sort_by(|a, b| b.converged.cmp(&a.converged).then(a.length.total_cmp(&b.length)));
    Ok(ConnectDoc {
        format: FORMAT,
        command: if zermelo { "zermelo" } else { "connect" },
        manifold: m.name().to_string(),
        x0: c.x0,
        x1: c.x1,
        t0: base.t0,
        tol,
        k_max,
        eps_schedule: schedule,
        energy_cap,
        solutions,
        class_failures,
    })
}

pub fn run(ctx: &Context, zermelo: bool) -> Result<(), CliError> {
    let doc = connect(ctx, zermelo)?;
    let name = if zermelo { "zermelo.json" } else { "connect.json" };
    ctx.out.document(name, &doc)?;
    if ctx.out.has_dir() {
        for s in &doc.solutions {
            let status = if s.converged {
                "converged"
            } else if s.divergence.is_some() {
                "diverged"
            } else {
                "failed"
            };
            println!("winding {:?}: {status}, length {:.9}, eps {:e}", s.winding, s.length, s.eps);
        }
    }
    if doc.converged().next().is_some() {
        return Ok(());
    }
    if let Some(d) = doc.solutions.iter().find_map(|s| s.divergence.as_ref()) {
        return Err(CliError::Hypothesis(d.clone()));
    }
    let why = doc
        .solutions
        .iter()
        .find_map(|s| s.failure.clone())
        .or_else(|| doc.class_failures.first().map(|f| f.reason.clone()))
        .unwrap_or_else(|| "continuation did not converge".into());
    Err(CliError::Solver(why))
}
