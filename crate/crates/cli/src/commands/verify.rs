//! Seeded invariant suite over the catalog.
//!
//! Each property reports how many cases it checked, how many violated it and the
//! first counterexample. Requested tolerances below [`TOLERANCE_FLOOR`] cannot be
//! met in double precision; misses caused by them are counted as
//! `tolerance_bound` instead of violations.

use kropina_core::bvp::{shoot, straight_guess, ShootOptions, ShootingProblem};
use kropina_core::control::{build_frame, drift_sign_violations, energy_bound_check, integrate_control, ControlSignal};
use kropina_core::finsler::{eval_f, eval_f_eps, f_eps_scalar, kropina_norm, lightlike_root, randers_norm, Branch};
use kropina_core::geodesics::{
    convexity_certificate, default_eps_grid, fermat_project, integrate_geodesic_with, ConvexityOptions, FlowOptions,
    LiftedFamily, ScaledFamily,
};
use kropina_core::spacetime::SpacetimeState;
use kropina_core::{Catalog, ChartManifold, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::Context;
use crate::error::CliError;
use crate::io::FORMAT;

/// Below this requested tolerance, accuracy misses are attributed to floating point.
pub const TOLERANCE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    pub tolerance_bound: usize,
    /// Cases that could not be set up (domain exits, solver failures).
    pub skipped: usize,
    /// Largest observed error measure and the threshold it was compared with.
    pub max_error: f64,
    pub threshold: f64,
    pub first_counterexample: Option<Value>,
}

impl PropertyReport {
    fn new(name: &'static str, threshold: f64) -> Self {
        PropertyReport {
            name,
            checked: 0,
            violations: 0,
            tolerance_bound: 0,
            skipped: 0,
            max_error: 0.0,
            threshold,
            first_counterexample: None,
        }
    }

    fn violate(&mut self, example: Value) {
        self.violations += 1;
        if self.first_counterexample.is_none() {
            self.first_counterexample = Some(example);
        }
    }

    /// Record a miss: a violation, or tolerance-bound when the tolerance is too small.
    fn miss(&mut self, bound: bool, example: Value) {
        if bound {
            self.tolerance_bound += 1;
        } else {
            self.violate(example);
        }
    }

    fn error(&mut self, e: f64) {
        if e > self.max_error || e.is_nan() {
            self.max_error = e;
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub tol: f64,
    pub perturbation: bool,
    pub pass: bool,
    pub properties: Vec<PropertyReport>,
}

impl VerifyDoc {
    pub fn property(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Suite sizes and switches.
#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub seed: u64,
    pub tol: f64,
    pub samples: usize,
    pub flows: usize,
    pub problems: usize,
    pub signals: usize,
    /// Replace `F_eps` by `F_{1/eps}`, which reverses the monotonicity in eps.
    pub perturbation: bool,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            seed: 0,
            tol: 1e-9,
            samples: 10_000,
            flows: 100,
            problems: 20,
            signals: 100,
            perturbation: false,
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Uniform point in the middle `frac` of the domain box.
fn point_in(m: &ChartManifold, frac: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let b = m.bounds();
    b.lo.iter()
        .zip(&b.hi)
        .map(|(lo, hi)| {
            let c = 0.5 * (lo + hi);
            let h = 0.5 * (hi - lo) * frac;
            r.gen_range(c - h..=c + h)
        })
        .collect()
}

fn vector(dim: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| r.gen_range(-1.0..=1.0)).collect()
}

fn with_g0_norm(m: &ChartManifold, x: &[f64], v: &[f64], norm: f64) -> Result<Vec<f64>, Error> {
    let n = m.eval_g0(x, v, v)?.sqrt();
    Ok(v.iter().map(|c| c * norm / n).collect())
}

/// `F(c v) = c F(v)`, and the closed form against the lightlike root and the
/// literal Randers or Kropina branch.
pub fn metric_formulas(
    catalog: &[ChartManifold],
    s: &VerifySettings,
) -> Result<(PropertyReport, PropertyReport), Error> {
    let mut homog = PropertyReport::new("homogeneity", 1e-12);
    let mut equiv = PropertyReport::new("formula-equivalence", 1e-12);
    let mut r = rng(s.seed, 1);
    for _ in 0..s.samples {
        let m = &catalog[r.gen_range(0..catalog.len())];
        let x = point_in(m, 1.0, &mut r);
        let scale = 10f64.powf(r.gen_range(-2.0..2.0));
        let v: Vec<f64> = vector(m.dim(), &mut r).iter().map(|c| c * scale).collect();
        let c = 10f64.powf(r.gen_range(-3.0..3.0));
        let cv: Vec<f64> = v.iter().map(|a| a * c).collect();
        let f = eval_f(m, &x, &v)?;
        let fc = eval_f(m, &x, &cv)?;
        homog.checked += 1;
        let example = || json!({"manifold": m.name(), "x": x, "v": v, "c": c});
        match (f.value, fc.value) {
            (Some(a), Some(b)) => {
                let e = rel(c * a, b);
                homog.error(e);
                if !(e <= homog.threshold) {
                    homog.violate(json!({"case": example(), "f": a, "f_scaled": b}));
                }
            }
            (None, None) => {}
            _ => homog.violate(json!({"case": example(), "defined": [f.value.is_some(), fc.value.is_some()]})),
        }

        equiv.checked += 1;
        let root = lightlike_root(m, &x, &v, 0.0)?;
        let fields = m.fields(&x)?;
        let (gvv, wv) = (fields.g0(&v, &v), fields.omega_of(&v));
        let branch = match f.branch {
            Branch::Randers => Some(randers_norm(gvv, wv, fields.lambda)),
            Branch::Kropina => Some(kropina_norm(gvv, wv)),
            _ => None,
        };
        match (f.value, root) {
            (Some(a), Some(b)) => {
                let e = rel(a, b).max(branch.map_or(0.0, |k| rel(a, k)));
                equiv.error(e);
                if !(e <= equiv.threshold) {
                    equiv.violate(json!({
                        "case": example(), "f": a, "lightlike_root": b, "branch_formula": branch,
                    }));
                }
            }
            (None, None) => {}
            (a, b) => equiv.violate(json!({"case": example(), "f": a, "lightlike_root": b})),
        }
    }
    Ok((homog, equiv))
}

/// `F_eps2 < F_eps1` for `eps1 < eps2`, and `F_eps < F` on the admissible set.
pub fn monotonicity(catalog: &[ChartManifold], s: &VerifySettings) -> Result<PropertyReport, Error> {
    let mut rep = PropertyReport::new("monotonicity", 0.0);
    let mut r = rng(s.seed, 2);
    let feps = |gvv: f64, wv: f64, lambda: f64, eps: f64| {
        if s.perturbation {
            f_eps_scalar(gvv, wv, lambda, 1.0 / eps)
        } else {
            f_eps_scalar(gvv, wv, lambda, eps)
        }
    };
    for _ in 0..s.samples {
        let m = &catalog[r.gen_range(0..catalog.len())];
        let x = point_in(m, 1.0, &mut r);
        let v = vector(m.dim(), &mut r);
        let eps2: f64 = 1.0 - r.gen_range(0.0..1.0);
        let eps1 = eps2 * r.gen_range(0.01..0.99);
        let fields = m.fields(&x)?;
        let (gvv, wv) = (fields.g0(&v, &v), fields.omega_of(&v));
        let f1 = feps(gvv, wv, fields.lambda, eps1);
        let f2 = feps(gvv, wv, fields.lambda, eps2);
        rep.checked += 1;
        let case = json!({"manifold": m.name(), "x": x, "v": v, "eps1": eps1, "eps2": eps2});
        if !(f2 < f1) {
            rep.violate(json!({"case": case, "f_eps1": f1, "f_eps2": f2, "violated": "F_eps2 < F_eps1"}));
            continue;
        }
        if let Some(f) = eval_f(m, &x, &v)?.value {
            if !(f2 < f) {
                rep.violate(json!({"case": case, "f": f, "f_eps2": f2, "violated": "F_eps < F"}));
            }
        }
    }
    Ok(rep)
}

/// Conservation along random lightlike geodesics, and unit speed of their projections.
pub fn flows(catalog: &[ChartManifold], s: &VerifySettings) -> Result<(PropertyReport, PropertyReport), Error> {
    let bound = s.tol < TOLERANCE_FLOOR;
    let mut cons = PropertyReport::new("conservation", 100.0 * s.tol);
    let mut unit = PropertyReport::new("fermat-projection", kropina_core::geodesics::UNIT_TOL);
    let mut r = rng(s.seed, 3);
    let mut opts = FlowOptions::new(s.tol);
    if bound {
        opts.max_steps = 20_000;
    }
    for _ in 0..s.flows {
        let m = &catalog[r.gen_range(0..catalog.len())];
        let x = point_in(m, 0.5, &mut r);
        let v = with_g0_norm(m, &x, &vector(m.dim(), &mut r), 0.5)?;
        let eps = 10f64.powf(r.gen_range(-3.0..=0.0));
        let Some(tdot) = lightlike_root(m, &x, &v, eps)? else {
            cons.skipped += 1;
            continue;
        };
        let case = json!({"manifold": m.name(), "x": x, "v": v, "tdot": tdot, "eps": eps});
        let init = SpacetimeState::new(&x, 0.0, &v, tdot);
        cons.checked += 1;
        let path = match integrate_geodesic_with(m, &init, eps, 1.0, &opts) {
            Ok(p) => p,
            Err(e) => {
                cons.miss(bound, json!({"case": case, "error": e.to_string()}));
                continue;
            }
        };
        if bound && path.truncated.is_some() {
            cons.tolerance_bound += 1;
            continue;
        }
        let drift = path.conserved_drift.unwrap_or(f64::NAN).max(path.norm_drift.unwrap_or(f64::NAN));
        cons.error(drift);
        if !(drift <= cons.threshold) {
            cons.miss(
                bound,
                json!({"case": case, "conserved_drift": path.conserved_drift, "norm_drift": path.norm_drift}),
            );
        }
        let sigma = fermat_project(&path)?;
        unit.checked += 1;
        let mut worst = 0.0f64;
        for p in &sigma.samples {
            worst = worst.max((eval_f_eps(m, &p.x, &p.v, eps)? - 1.0).abs());
        }
        unit.error(worst);
        if !(worst < unit.threshold) {
            unit.miss(bound, json!({"case": case, "max_unit_deviation": worst}));
        }
    }
    Ok((cons, unit))
}

/// Boundary problems solved by shooting: the lift is a lightlike pregeodesic and
/// the solution is `F_eps`-unit.
pub fn round_trip(s: &VerifySettings) -> Result<PropertyReport, Error> {
    let bound = s.tol < TOLERANCE_FLOOR;
    let mut rep = PropertyReport::new("fermat-round-trip", 1e-6);
    let mut r = rng(s.seed, 4);
    let opts = ShootOptions::with_tol(s.tol);
    let mut solved = 0;
    let mut attempts = 0;
    while solved < s.problems && attempts < 5 * s.problems.max(1) {
        attempts += 1;
        let m = match r.gen_range(0..4) {
            0 => Catalog::constant_wind_plane(r.gen_range(0.0..0.9))?,
            1 => Catalog::kropina_plane(),
            2 => Catalog::polar_plane(),
            _ => Catalog::flat_cylinder_wind(r.gen_range(0.0..0.9))?,
        };
        let x0 = point_in(&m, 0.5, &mut r);
        let step = with_g0_norm(&m, &x0, &vector(m.dim(), &mut r), r.gen_range(0.3..1.5))?;
        let x1: Vec<f64> = x0.iter().zip(&step).map(|(a, b)| a + b).collect();
        let eps = 10f64.powf(r.gen_range(-3.0..=-1.0));
        if m.check_point(&x1).is_err() {
            rep.skipped += 1;
            continue;
        }
        let mut p = ShootingProblem::new(m.clone(), &x0, &x1, eps)?;
        if m.topology().periodic_axes() > 0 {
            p = p.with_hint(&[0])?;
        }
        let case = json!({"manifold": m.name(), "x0": x0, "x1": x1, "eps": eps});
        let Some(sol) = straight_guess(&p).ok().and_then(|g| shoot(&p, &g, &opts).ok()) else {
            // a solver miss is not a property failure
            if bound {
                rep.tolerance_bound += 1;
            } else {
                rep.skipped += 1;
            }
            continue;
        };
        solved += 1;
        rep.checked += 1;
        let e = sol.pregeodesic_residual.max(sol.unit_deviation);
        rep.error(e);
        if !(e < rep.threshold) {
            rep.miss(
                bound,
                json!({"case": case, "pregeodesic_residual": sol.pregeodesic_residual, "unit_deviation": sol.unit_deviation}),
            );
        }
    }
    if solved < s.problems && !bound {
        rep.violate(json!({"solved": solved, "requested": s.problems, "attempts": attempts}));
    }
    Ok(rep)
}

/// Random admissible signals on the Heisenberg chart: drift sign and energy bound.
pub fn energy_bound(s: &VerifySettings) -> Result<PropertyReport, Error> {
    let mut rep = PropertyReport::new("energy-bound", 0.0);
    let frame = build_frame(&Catalog::heisenberg())?;
    let c = frame.c;
    let mut r = rng(s.seed, 5);
    let mut attempts = 0;
    while rep.checked < s.signals && attempts < 50 * s.signals.max(1) {
        attempts += 1;
        let n = r.gen_range(1..=4usize);
        let xi: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.0..0.6) }).collect();
        let alpha: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                (0..r.gen_range(1..=3usize))
                    .map(|_| {
                        let (rad, a) = (r.gen_range(0.0..1.0), r.gen_range(0.0..std::f64::consts::TAU));
                        vec![c * rad * a.cos(), c * rad * a.sin()]
                    })
                    .collect()
            })
            .collect();
        let u = ControlSignal { breakpoints: (0..=n).map(|i| i as f64 / n as f64).collect(), xi, alpha };
        let x0 = point_in(frame.manifold(), 0.5, &mut r);
        let path = match integrate_control(&frame, &x0, &u) {
            Ok(p) => p,
            Err(Error::Domain { .. }) => {
                rep.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        rep.checked += 1;
        let sign = drift_sign_violations(&frame, &path)?;
        let report = energy_bound_check(&frame, &u, &path)?;
        rep.error(report.energy - report.bound);
        if sign > 0 || !report.pass {
            rep.violate(json!({
                "x0": x0, "signal": u, "sign_violations": sign,
                "energy": report.energy, "bound": report.bound,
            }));
        }
    }
    Ok(rep)
}

/// Convexity certificates: polar fixture with margin 0.1, flat family over the full grid.
pub fn convexity(_s: &VerifySettings) -> Result<PropertyReport, Error> {
    let mut rep = PropertyReport::new("convexity", 0.1);
    let deltas = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0];
    let grid = default_eps_grid(1.0);
    let polar = Catalog::polar_plane();
    let opts = ConvexityOptions { margin: 0.1, ..ConvexityOptions::default() };
    let p = convexity_certificate(&LiftedFamily(&polar), &[1.0, 0.0, 0.0], &grid, &deltas, &opts)?;
    rep.checked += 1;
    if !p.delta.is_some_and(|d| d > 0.0) {
        rep.violate(json!({"fixture": "polar-plane", "min_eigenvalue": p.min_eigenvalue}));
    }
    let flat = Catalog::euclidean_plane();
    let f = convexity_certificate(&ScaledFamily(&flat), &[0.0, 0.0], &grid, &deltas, &ConvexityOptions::default())?;
    rep.checked += 1;
    if f.delta != Some(1.0) {
        rep.violate(json!({"fixture": "flat", "delta": f.delta}));
    }
    Ok(rep)
}

pub fn verify(s: &VerifySettings) -> Result<VerifyDoc, CliError> {
    let catalog = Catalog::all();
    let (homog, equiv) = metric_formulas(&catalog, s)?;
    let mono = monotonicity(&catalog, s)?;
    let (cons, unit) = flows(&catalog, s)?;
    let trip = round_trip(s)?;
    let energy = energy_bound(s)?;
    let conv = convexity(s)?;
    let properties = vec![homog, equiv, mono, cons, unit, trip, energy, conv];
    Ok(VerifyDoc {
        format: FORMAT,
        command: "verify",
        seed: s.seed,
        tol: s.tol,
        perturbation: s.perturbation,
        pass: properties.iter().all(PropertyReport::pass),
        properties,
    })
}

pub fn settings(ctx: &Context) -> Result<VerifySettings, CliError> {
    let v = ctx.cfg.verify.clone().unwrap_or_default();
    let d = VerifySettings::default();
    Ok(VerifySettings {
        seed: ctx.seed(),
        tol: ctx.tol()?,
        samples: v.samples.unwrap_or(d.samples),
        flows: v.flows.unwrap_or(d.flows),
        problems: v.problems.unwrap_or(d.problems),
        signals: v.signals.unwrap_or(d.signals),
        perturbation: v.perturbation.unwrap_or(false),
    })
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let doc = verify(&settings(ctx)?)?;
    ctx.out.document("verify.json", &doc)?;
    if ctx.out.has_dir() {
        for p in &doc.properties {
            println!(
                "{:<20} {} checked {:>6}, violations {}, tolerance-bound {}",
                p.name,
                if p.pass() { "PASS" } else { "FAIL" },
                p.checked,
                p.violations,
                p.tolerance_bound
            );
        }
    }
    match doc.properties.iter().find(|p| !p.pass()) {
        None => Ok(()),
        Some(p) => Err(CliError::Property(format!(
            "{}: {} violation(s); first counterexample {}",
            p.name,
            p.violations,
            p.first_counterexample.as_ref().map_or_else(String::new, Value::to_string)
        ))),
    }
}
