//! Two-point boundary problems for `F_eps` by shooting along t-graphs, multi-start
//! over winding classes, and continuation `eps -> 0`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::finsler::{curve_length_energy, eval_f_eps, LAMBDA_TOL};
use crate::geodesics::{integrate_tgraph, lift_unchecked, pregeodesic_residual, tgraph_endpoint};
use crate::linalg::SmallMat;
use crate::manifold::{rem_euclid, ChartManifold, Topology};
use crate::path::GeodesicPath;

/// Connect `x0` to `x1` (shifted by `2 pi * homotopy_hint` on periodic axes).
#[derive(Debug, Clone)]
pub struct ShootingProblem {
    pub manifold: ChartManifold,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub eps: f64,
    pub homotopy_hint: Option<Vec<i64>>,
    pub t0: f64,
}

impl ShootingProblem {
    pub fn new(manifold: ChartManifold, x0: &[f64], x1: &[f64], eps: f64) -> Result<Self> {
        manifold.check_point(x0)?;
        manifold.check_point(x1)?;
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!("shooting needs eps > 0, got {eps}")));
        }
        Ok(ShootingProblem { manifold, x0: x0.to_vec(), x1: x1.to_vec(), eps, homotopy_hint: None, t0: 0.0 })
    }

    pub fn with_hint(mut self, hint: &[i64]) -> Result<Self> {
        let axes = self.manifold.topology().periodic_axes();
        if hint.len() != axes {
            return Err(Error::Dimension { expected: axes, got: hint.len() });
        }
        self.homotopy_hint = Some(hint.to_vec());
        Ok(self)
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        ShootingProblem { eps, ..self.clone() }
    }

    /// Endpoint in the universal cover for the current hint.
    pub fn target(&self) -> Vec<f64> {
        let mut t = self.x1.clone();
        if let Some(h) = &self.homotopy_hint {
            for (k, w) in h.iter().enumerate() {
                t[k] += 2.0 * PI * *w as f64;
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Endpoint error bound in `g0`-distance.
    pub tol: f64,
    pub max_iter: usize,
    /// Samples on the returned path.
    pub samples: usize,
    /// Tolerance of the inner integrator.
    pub integration_tol: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { tol: 1e-9, max_iter: 40, samples: 201, integration_tol: 1e-12 }
    }
}

impl ShootOptions {
    pub fn with_tol(tol: f64) -> Self {
        ShootOptions { tol, ..Self::default() }
    }
}

/// Initial guess: spatial velocity direction and arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootGuess {
    pub direction: Vec<f64>,
    pub time: f64,
}

/// A converged `F_eps`-unit geodesic.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Solution {
    pub path: GeodesicPath,
    pub winding: Vec<i64>,
    pub eps: f64,
    /// `F_eps`-length, equal to the arrival time minus `t0`.
    pub length: f64,
    /// `F`-length when the path is admissible for `F`.
    pub length_f: Option<f64>,
    pub energy: f64,
    pub arrival_time: f64,
    pub endpoint_error: f64,
    pub pregeodesic_residual: f64,
    /// Largest `|F_eps(v) - 1|` over samples.
    pub unit_deviation: f64,
    pub iterations: usize,
    pub initial_velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FailureKind {
    Diverged,
    /// The endpoint Jacobian became singular.
    ConjugateLike,
    Integration(String),
    /// Converged, but the path failed a post-check.
    Validation(String),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShootFailure {
    pub kind: FailureKind,
    pub iterations: usize,
    pub last_velocity: Vec<f64>,
    pub last_time: f64,
    pub endpoint_error: f64,
}

impl core::fmt::Display for ShootFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let what = match &self.kind {
            FailureKind::Diverged => String::from("Newton iteration did not converge"),
            FailureKind::ConjugateLike => String::from("endpoint Jacobian singular (conjugate-like)"),
            FailureKind::Integration(e) => format!("integration failed: {e}"),
            FailureKind::Validation(e) => format!("validation failed: {e}"),
        };
        write!(f, "{what} after {} iterations (endpoint error {:e})", self.iterations, self.endpoint_error)
    }
}

/// Maps unit vectors of a `g0`-orthonormal frame at `x0` to tangent vectors.
struct Frame {
    /// Columns are the frame vectors.
    e: SmallMat,
    /// Inverse map, tangent vector to frame coordinates.
    e_inv: SmallMat,
}

impl Frame {
    fn at(m: &ChartManifold, x: &[f64]) -> Result<Self> {
        let g = m.metric_matrix(x)?;
        let l = g.cholesky().ok_or_else(|| Error::Assumption("g0 is not positive definite".into()))?;
        let e_inv = SmallMat::from_fn(g.dim(), |i, j| l.get(j, i));
        let e = e_inv.inverse()?;
        Ok(Frame { e, e_inv })
    }

    fn to_tangent(&self, u: &[f64]) -> Vec<f64> {
        let r = self.e.mul_vec(u);
        r[..u.len()].to_vec()
    }

    fn to_unit(&self, v: &[f64]) -> Vec<f64> {
        let r = self.e_inv.mul_vec(v);
        normalized(&r[..v.len()])
    }
}

fn normalized(u: &[f64]) -> Vec<f64> {
    let n = u.iter().map(|c| c * c).sum::<f64>().sqrt();
    u.iter().map(|c| c / n).collect()
}

/// Orthonormal basis of the Euclidean complement of the unit vector `u`.
fn complement(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for axis in 0..n {
        if basis.len() == n - 1 {
            break;
        }
        let mut e = vec![0.0; n];
        e[axis] = 1.0;
        for b in core::iter::once(u).chain(basis.iter().map(|b| b.as_slice())) {
            let d: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            for k in 0..n {
                e[k] -= d * b[k];
            }
        }
        let norm = e.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(e.iter().map(|c| c / norm).collect());
        }
    }
    basis
}

struct Shooter<'a> {
    p: &'a ShootingProblem,
    frame: Frame,
    target: Vec<f64>,
    g_target: SmallMat,
    opts: ShootOptions,
}

impl Shooter<'_> {
    fn velocity(&self, u: &[f64]) -> Result<Vec<f64>> {
        let d = self.frame.to_tangent(u);
        let f = eval_f_eps(&self.p.manifold, &self.p.x0, &d, self.p.eps)?;
        Ok(d.iter().map(|c| c / f).collect())
    }

    fn residual(&self, u: &[f64], time: f64) -> Result<Vec<f64>> {
        let v0 = self.velocity(u)?;
        let (x, _) = tgraph_endpoint(&self.p.manifold, &self.p.x0, &v0, self.p.eps, time, self.opts.integration_tol)?;
        Ok(x.iter().zip(&self.target).map(|(a, b)| a - b).collect())
    }

    fn error(&self, r: &[f64]) -> f64 {
        self.g_target.bilinear(r, r).max(0.0).sqrt()
    }
}

fn perturbed(u: &[f64], basis: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    let mut w = u.to_vec();
    for (b, c) in basis.iter().zip(a) {
        for k in 0..w.len() {
            w[k] += c * b[k];
        }
    }
    normalized(&w)
}

/// Straight-line guess in the universal cover.
pub fn straight_guess(p: &ShootingProblem) -> Result<ShootGuess> {
    let target = p.target();
    let d: Vec<f64> = target.iter().zip(&p.x0).map(|(a, b)| a - b).collect();
    if d.iter().all(|c| *c == 0.0) {
        return Err(Error::Degenerate("endpoints coincide; supply a direction".into()));
    }
    let time = eval_f_eps(&p.manifold, &p.x0, &d, p.eps)?;
    Ok(ShootGuess { direction: d, time })
}

/// Newton shooting on `(direction, arrival time)`.
pub fn shoot(
    p: &ShootingProblem,
    guess: &ShootGuess,
    opts: &ShootOptions,
) -> core::result::Result<Solution, ShootFailure> {
    let fail = |kind, iterations, last_velocity: Vec<f64>, last_time, endpoint_error| ShootFailure {
        kind,
        iterations,
        last_velocity,
        last_time,
        endpoint_error,
    };
    let integration = |e: Error| FailureKind::Integration(format!("{e}"));
    let dim = p.manifold.dim();
    let setup = (|| -> Result<Shooter<'_>> {
        if !(p.eps > 0.0) {
            return Err(Error::Parameter("shooting needs eps > 0".into()));
        }
        if guess.direction.len() != dim {
            return Err(Error::Dimension { expected: dim, got: guess.direction.len() });
        }
        let target = p.target();
        let g_target = p.manifold.metric_matrix(&p.x1)?;
        Ok(Shooter { frame: Frame::at(&p.manifold, &p.x0)?, target, g_target, p, opts: *opts })
    })();
    let sh = match setup {
        Ok(s) => s,
        Err(e) => return Err(fail(integration(e), 0, guess.direction.clone(), guess.time, f64::INFINITY)),
    };
    let mut u = sh.frame.to_unit(&guess.direction);
    let mut time = guess.time.max(1e-12);
    let mut r = match sh.residual(&u, time) {
        Ok(r) => r,
        Err(e) => return Err(fail(integration(e), 0, guess.direction.clone(), time, f64::INFINITY)),
    };
    let mut err = sh.error(&r);
    let mut iter = 0;
    let last_v = |u: &[f64]| sh.velocity(u).unwrap_or_default();
    while err >= opts.tol {
        if iter >= opts.max_iter {
            return Err(fail(FailureKind::Diverged, iter, last_v(&u), time, err));
        }
        iter += 1;
        let basis = complement(&u);
        // central differences in the gnomonic chart around u and in time
        let mut jac = SmallMat::zeros(dim);
        let ha = 1e-6;
        let ht = 1e-6 * time.max(1.0);
        for col in 0..dim {
            let (plus, minus) = if col + 1 < dim {
                let mut a = vec![0.0; dim - 1];
                a[col] = ha;
                let up = perturbed(&u, &basis, &a);
                a[col] = -ha;
                let um = perturbed(&u, &basis, &a);
                (sh.residual(&up, time), sh.residual(&um, time))
            } else {
                (sh.residual(&u, time + ht), sh.residual(&u, (time - ht).max(0.5 * time)))
            };
            let (rp, rm) = match (plus, minus) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Err(fail(integration(e), iter, last_v(&u), time, err)),
            };
            let h = if col + 1 < dim { 2.0 * ha } else { ht + (time - (time - ht).max(0.5 * time)) };
            for row in 0..dim {
                jac.set(row, col, (rp[row] - rm[row]) / h);
            }
        }
        let lu = match jac.lu() {
            Ok(lu) if lu.pivot_ratio() > 1e-12 => lu,
            _ => return Err(fail(FailureKind::ConjugateLike, iter, last_v(&u), time, err)),
        };
        let rhs: Vec<f64> = r.iter().map(|c| -c).collect();
        let step = lu.solve(&rhs);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let a: Vec<f64> = step[..dim - 1].iter().map(|c| lambda * c).collect();
            let t_new = time + lambda * step[dim - 1];
            if t_new > 0.0 {
                let u_new = perturbed(&u, &basis, &a);
                if let Ok(r_new) = sh.residual(&u_new, t_new) {
                    let e_new = sh.error(&r_new);
                    if e_new < err {
                        u = u_new;
                        time = t_new;
                        r = r_new;
                        err = e_new;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(fail(FailureKind::Diverged, iter, last_v(&u), time, err));
        }
    }
    let v0 = last_v(&u);
    match finish(p, &v0, time, err, iter, opts) {
        Ok(s) => Ok(s),
        Err(e) => Err(fail(FailureKind::Validation(format!("{e}")), iter, v0, time, err)),
    }
}

fn finish(
    p: &ShootingProblem,
    v0: &[f64],
    time: f64,
    err: f64,
    iterations: usize,
    opts: &ShootOptions,
) -> Result<Solution> {
    let m = &p.manifold;
    let mut path = integrate_tgraph(m, &p.x0, v0, p.eps, time, opts.integration_tol, opts.samples)?;
    if let Some(reason) = &path.truncated {
        return Err(Error::Accuracy(reason.clone()));
    }
    let mut unit_deviation = 0.0f64;
    for s in &path.samples {
        unit_deviation = unit_deviation.max((eval_f_eps(m, &s.x, &s.v, p.eps)? - 1.0).abs());
    }
    if unit_deviation > 1e-6 {
        return Err(Error::Accuracy(format!("F_eps(v) deviates from 1 by {unit_deviation:e}")));
    }
    let lift = lift_unchecked(m, &path, p.eps, p.t0);
    let residual = pregeodesic_residual(m, &lift, p.eps)?;
    if residual > 1e-6 {
        return Err(Error::Accuracy(format!("lift pregeodesic residual {residual:e}")));
    }
    let length_f = curve_length_energy(m, &path, 0.0).ok().map(|le| le.length);
    path.length_feps = Some(time);
    path.length_f = length_f;
    path.energy_feps = Some(0.5 * time * time);
    let end = path.end().map(|x| x.to_vec()).unwrap_or_default();
    Ok(Solution {
        winding: winding_of(p, &end),
        eps: p.eps,
        length: time,
        length_f,
        energy: 0.5 * time * time,
        arrival_time: p.t0 + time,
        endpoint_error: err,
        pregeodesic_residual: residual,
        unit_deviation,
        iterations,
        initial_velocity: v0.to_vec(),
        path,
    })
}

/// Winding integers from the unwrapped periodic coordinates of the endpoint.
fn winding_of(p: &ShootingProblem, end: &[f64]) -> Vec<i64> {
    (0..p.manifold.topology().periodic_axes()).map(|k| ((end[k] - p.x1[k]) / (2.0 * PI)).round() as i64).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassFailure {
    pub winding: Vec<i64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultiStart {
    /// Sorted by `F_eps`-length.
    pub solutions: Vec<Solution>,
    pub failures: Vec<ClassFailure>,
}

/// Winding vectors with entries in `[-k_max, k_max]`, in lexicographic order.
pub fn winding_classes(topology: Topology, k_max: u32) -> Vec<Vec<i64>> {
    let axes = topology.periodic_axes();
    let k = k_max as i64;
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-k..=k).map(move |j| {
                    let mut w = prefix.clone();
                    w.push(j);
                    w
                })
            })
            .collect();
    }
    out
}

/// Shoot once per winding class from the universal-cover straight line.
pub fn multi_start(p: &ShootingProblem, k_max: u32, opts: &ShootOptions) -> Result<MultiStart> {
    let topology = p.manifold.topology();
    if topology.periodic_axes() == 0 {
        return Err(Error::Parameter(format!("multi-start needs a cylinder or torus, got {}", topology.name())));
    }
    let mut solutions = Vec::new();
    let mut failures = Vec::new();
    for winding in winding_classes(topology, k_max) {
        let problem = p.clone().with_hint(&winding)?;
        match solve_class(&problem, opts) {
            Ok(s) => solutions.push(s),
            Err(reason) => failures.push(ClassFailure { winding, reason }),
        }
    }
    solutions.sort_by(|a: &Solution, b: &Solution| a.length.total_cmp(&b.length));
    Ok(MultiStart { solutions, failures })
}

/// Straight-line start, then two tilted starts; keeps the shortest success that
/// lands in the requested class.
fn solve_class(p: &ShootingProblem, opts: &ShootOptions) -> core::result::Result<Solution, String> {
    let wanted = p.homotopy_hint.clone().unwrap_or_default();
    let base = straight_guess(p).map_err(|e| format!("{e}"))?;
    let mut best: Option<Solution> = None;
    let mut last = String::from("no start converged");
    let tilts = [0.0, 0.1, -0.1];
    for (i, tilt) in tilts.iter().enumerate() {
        if i > 0 && best.is_some() {
            break;
        }
        let guess = ShootGuess { direction: rotate_first_pair(&base.direction, *tilt), time: base.time };
        match shoot(p, &guess, opts) {
            Ok(s) if s.winding == wanted => {
                if best.as_ref().is_none_or(|b| s.length < b.length) {
                    best = Some(s);
                }
            }
            Ok(s) => last = format!("converged to winding {:?}", s.winding),
            Err(f) => last = format!("{f}"),
        }
    }
    best.ok_or(last)
}

fn rotate_first_pair(d: &[f64], angle: f64) -> Vec<f64> {
    let mut out = d.to_vec();
    if d.len() >= 2 && angle != 0.0 {
        let (c, s) = (angle.cos(), angle.sin());
        out[0] = c * d[0] - s * d[1];
        out[1] = s * d[0] + c * d[1];
    }
    out
}

/// Geometric schedule `eps_start * 2^-k` down to `eps_end`, ending exactly at `eps_end`.
pub fn default_schedule(eps_start: f64, eps_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = eps_start;
    while e > eps_end * (1.0 + 1e-9) {
        out.push(e);
        e *= 0.5;
    }
    out.push(eps_end);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    /// Cauchy threshold for paths and lengths.
    pub tol: f64,
    /// Energy cap; exceeding it stops the trace with a divergence report.
    pub energy_cap: f64,
    /// Points for the sup-distance comparison of successive paths.
    pub compare_points: usize,
    /// Threshold on the `eps = 0` pregeodesic residual of the limit.
    pub limit_residual_tol: f64,
    pub shoot: ShootOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            tol: 1e-5,
            energy_cap: 1e3,
            compare_points: 101,
            limit_residual_tol: 1e-5,
            shoot: ShootOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContinuationTrace {
    pub eps_sequence: Vec<f64>,
    pub paths: Vec<GeodesicPath>,
    pub lengths: Vec<f64>,
    pub energies: Vec<f64>,
    pub endpoint_errors: Vec<f64>,
    /// Pregeodesic residual of each lift.
    pub residuals: Vec<f64>,
    /// `(sup g0-distance, |length difference|)` between consecutive entries.
    pub increments: Vec<(f64, f64)>,
    /// First index whose increment fell below the Cauchy threshold.
    pub cauchy_index: Option<usize>,
    /// Lengths never decreased along the trace.
    pub monotone: bool,
    pub converged: bool,
    pub limit_path: Option<GeodesicPath>,
    pub limit_residual: Option<f64>,
    pub winding: Vec<i64>,
    /// Set when the energy cap was exceeded.
    pub divergence: Option<String>,
    /// Set when a shoot failed mid-schedule.
    pub failure: Option<String>,
}

/// The return-to-start case needs `Lambda(x0) != 0` or `dLambda` nonzero on `ker omega`.
pub fn check_loop_hypothesis(p: &ShootingProblem) -> Result<()> {
    let m = &p.manifold;
    let axes = m.topology().periodic_axes();
    let same = p.x0.iter().zip(&p.x1).enumerate().all(|(k, (a, b))| {
        let d = if k < axes { rem_euclid(b - a + PI, 2.0 * PI) - PI } else { b - a };
        d.abs() <= 1e-12
    });
    if !same {
        return Ok(());
    }
    let jet = m.jet(&p.x0)?;
    if jet.fields.lambda.abs() > LAMBDA_TOL {
        return Ok(());
    }
    let dim = m.dim();
    let w = &jet.fields.omega[..dim];
    let dl = &jet.dlambda[..dim];
    let ww: f64 = w.iter().map(|c| c * c).sum();
    let proj: f64 = w.iter().zip(dl).map(|(a, b)| a * b).sum::<f64>() / ww;
    let rest: f64 = dl.iter().zip(w).map(|(a, b)| (a - proj * b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = dl.iter().map(|c| c * c).sum::<f64>().sqrt();
    if rest <= 1e-10 * (1.0 + scale) {
        return Err(Error::Hypothesis("x0 = x1 with Lambda(x0) = 0 and dLambda vanishing on ker omega at x0".into()));
    }
    Ok(())
}

/// Solve along a decreasing `eps` schedule, warm-starting each step.
pub fn continue_eps(p: &ShootingProblem, schedule: &[f64], opts: &ContinuationOptions) -> Result<ContinuationTrace> {
    continue_eps_from(p, schedule, opts, None)
}

/// [`continue_eps`] from a given first guess (the straight line when `None`).
/// With a homotopy hint the trace fails if a step lands in another class.
pub fn continue_eps_from(
    p: &ShootingProblem,
    schedule: &[f64],
    opts: &ContinuationOptions,
    start: Option<ShootGuess>,
) -> Result<ContinuationTrace> {
    if schedule.is_empty() || schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Parameter("schedule must be nonempty and positive".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter("schedule must be strictly decreasing".into()));
    }
    check_loop_hypothesis(p)?;
    let mut trace = ContinuationTrace {
        eps_sequence: Vec::new(),
        paths: Vec::new(),
        lengths: Vec::new(),
        energies: Vec::new(),
        endpoint_errors: Vec::new(),
        residuals: Vec::new(),
        increments: Vec::new(),
        cauchy_index: None,
        monotone: true,
        converged: false,
        limit_path: None,
        limit_residual: None,
        winding: Vec::new(),
        divergence: None,
        failure: None,
    };
    let mut guess = match start.map_or_else(|| straight_guess(&p.with_eps(schedule[0])), Ok) {
        Ok(g) => g,
        Err(e) => {
            trace.failure = Some(format!("{e}"));
            return Ok(trace);
        }
    };
    let mut prev_points: Option<Vec<Vec<f64>>> = None;
    for &eps in schedule {
        let problem = p.with_eps(eps);
        let sol = match shoot(&problem, &guess, &opts.shoot) {
            Ok(s) => s,
            Err(f) => {
                trace.failure = Some(format!("eps = {eps}: {f}"));
                break;
            }
        };
        if let Some(h) = &p.homotopy_hint {
            if &sol.winding != h {
                trace.failure = Some(format!("eps = {eps}: left winding class {h:?} for {:?}", sol.winding));
                break;
            }
        }
        let points = sol.path.resample(opts.compare_points);
        if let (Some(prev), Some(&prev_len)) = (&prev_points, trace.lengths.last()) {
            let g = problem.manifold.metric_matrix(&p.x0)?;
            let dist = prev
                .iter()
                .zip(&points)
                .map(|(a, b)| {
                    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                    g.bilinear(&d, &d).max(0.0).sqrt()
                })
                .fold(0.0f64, f64::max);
            let dl = (sol.length - prev_len).abs();
            if sol.length < prev_len - 1e-9 * prev_len.max(1.0) {
                trace.monotone = false;
            }
            trace.increments.push((dist, dl));
            if trace.cauchy_index.is_none() && dist < opts.tol && dl < opts.tol {
                trace.cauchy_index = Some(trace.lengths.len());
            }
        }
        guess = ShootGuess { direction: sol.initial_velocity.clone(), time: sol.length };
        trace.eps_sequence.push(eps);
        trace.lengths.push(sol.length);
        trace.energies.push(sol.energy);
        trace.endpoint_errors.push(sol.endpoint_error);
        trace.residuals.push(sol.pregeodesic_residual);
        trace.winding = sol.winding.clone();
        trace.paths.push(sol.path);
        prev_points = Some(points);
        if sol.energy > opts.energy_cap {
            trace.divergence = Some(format!(
                "energy {:.6e} exceeds cap {:.1e} at eps = {eps}; no uniform energy bound",
                sol.energy, opts.energy_cap
            ));
            break;
        }
    }
    let complete = trace.failure.is_none() && trace.divergence.is_none();
    if complete {
        if let Some(last) = trace.paths.last() {
            let lift = lift_unchecked(&p.manifold, last, 0.0, p.t0);
            let residual = pregeodesic_residual(&p.manifold, &lift, 0.0).ok();
            trace.limit_residual = residual;
            let last_ok = trace.increments.last().is_some_and(|(d, l)| *d < opts.tol && *l < opts.tol);
            trace.converged = last_ok && residual.is_some_and(|r| r < opts.limit_residual_tol);
            if trace.converged {
                trace.limit_path = Some(last.clone());
            }
        }
    }
    Ok(trace)
}

/// Arrival time `t0 + F`-length of an admissible path.
pub fn arrival_time(m: &ChartManifold, sigma: &GeodesicPath, t0: f64) -> Result<f64> {
    Ok(t0 + curve_length_energy(m, sigma, 0.0)?.length)
}
