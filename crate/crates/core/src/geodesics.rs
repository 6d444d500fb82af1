//! Geodesic flow of `g_eps`, the Fermat lift between `F_eps`-unit geodesics and
//! lightlike pregeodesics, and the simultaneous-convexity certificate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::finsler::{eval_f_any, f_scalar, Branch};
use crate::linalg::SmallMat;
use crate::manifold::{ChartManifold, Christoffel};
use crate::ode::{self, Control, DopriOptions, OdeSystem, Outcome};
use crate::path::{GeodesicPath, Parametrization, PathSample};
use crate::spacetime::{g_eps_with, LiftedMetric, SpacetimeState};
use crate::MAX_LIFT;

/// Tolerance on `|F_eps(v) - 1|` for unit-parametrized input.
pub const UNIT_TOL: f64 = 1e-6;

/// Options for the lifted geodesic flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Monitor tolerance. The integrator itself runs at `min(tol / 20, 1e-12)` so
    /// that lightlike initial data stays inside the fixed lightlike band.
    pub tol: f64,
    /// Emit this many equally spaced samples (dense output) instead of the
    /// accepted steps.
    pub uniform_samples: Option<usize>,
    pub max_steps: usize,
}

impl FlowOptions {
    pub fn new(tol: f64) -> Self {
        FlowOptions { tol, uniform_samples: None, max_steps: 200_000 }
    }

    pub fn uniform(tol: f64, samples: usize) -> Self {
        FlowOptions { uniform_samples: Some(samples.max(2)), ..Self::new(tol) }
    }

    fn dopri(&self) -> DopriOptions {
        DopriOptions { max_steps: self.max_steps, ..DopriOptions::with_tol((self.tol / 20.0).min(1e-12)) }
    }
}

struct LiftedFlow<'a> {
    m: &'a ChartManifold,
    eps: f64,
}

impl OdeSystem for LiftedFlow<'_> {
    fn dim(&self) -> usize {
        2 * (self.m.dim() + 1)
    }

    fn rhs(&mut self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.m.dim() + 1;
        let jet = self.m.jet(&y[..n - 1])?;
        let acc = LiftedMetric::from_jet(&jet, self.eps).contract(&y[n..])?;
        dy[..n].copy_from_slice(&y[n..]);
        for k in 0..n {
            dy[n + k] = -acc[k];
        }
        Ok(())
    }
}

fn lifted_sample(m: &ChartManifold, s: f64, y: &[f64], eps: f64) -> Result<PathSample> {
    let dim = m.dim();
    let n = dim + 1;
    let f = m.fields(&y[..dim])?;
    let (x, t, v, tdot) = (&y[..dim], y[dim], &y[n..n + dim], y[n + dim]);
    let mut p = PathSample::lifted(s, x, v, t, tdot);
    p.conserved = Some(f.omega_of(v) - (f.lambda + eps) * tdot);
    p.lightlike_residual = Some(g_eps_with(&f, v, tdot, v, tdot, eps));
    p.zero_velocity = f.g0(v, v) <= crate::finsler::ZERO_VELOCITY_SQ;
    Ok(p)
}

fn outcome_reason(out: &Outcome) -> Option<String> {
    match out {
        Outcome::Completed | Outcome::Stopped => None,
        Outcome::Underflow { s } => Some(format!("step size underflow at s = {s}")),
        Outcome::MaxSteps { s } => Some(format!("step budget exhausted at s = {s}")),
        Outcome::RhsFailed { s, error } => Some(format!("{error} at s = {s}")),
    }
}

/// Geodesic of `g_eps` from `initial` over `s in [0, s_max]`.
pub fn integrate_geodesic(
    m: &ChartManifold,
    initial: &SpacetimeState,
    eps: f64,
    s_max: f64,
    tol: f64,
) -> Result<GeodesicPath> {
    integrate_geodesic_with(m, initial, eps, s_max, &FlowOptions::new(tol))
}

pub fn integrate_geodesic_with(
    m: &ChartManifold,
    initial: &SpacetimeState,
    eps: f64,
    s_max: f64,
    opts: &FlowOptions,
) -> Result<GeodesicPath> {
    let dim = m.dim();
    let n = dim + 1;
    if initial.x.len() != dim || initial.xdot.len() != dim {
        return Err(Error::Dimension { expected: dim, got: initial.x.len().min(initial.xdot.len()) });
    }
    if !(eps >= 0.0) || !(s_max > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Parameter("need eps >= 0, s_max > 0 and tol > 0".into()));
    }
    let f0 = m.fields(&initial.x)?;
    let aux_sq = f0.g0(&initial.xdot, &initial.xdot) + initial.tdot * initial.tdot;
    if !(aux_sq > 0.0) {
        return Err(Error::Degenerate("initial velocity is zero".into()));
    }
    let mut y = vec![0.0; 2 * n];
    y[..dim].copy_from_slice(&initial.x);
    y[dim] = initial.t;
    y[n..n + dim].copy_from_slice(&initial.xdot);
    y[n + dim] = initial.tdot;
    let first = lifted_sample(m, 0.0, &y, eps)?;
    let c0 = first.conserved.unwrap_or(0.0);
    let q0 = first.lightlike_residual.unwrap_or(0.0);
    let c_bound = opts.tol * (1.0 + c0.abs());
    let q_bound = opts.tol * (1.0 + aux_sq);
    let mut samples = vec![first];
    let mut c_drift = 0.0f64;
    let mut q_drift = 0.0f64;
    let mut breach: Option<Error> = None;
    let mut buf = vec![0.0; 2 * n];
    let mut next_uniform = 1usize;
    let total = opts.uniform_samples.unwrap_or(0);
    let mut flow = LiftedFlow { m, eps };
    let (outcome, _) = ode::integrate(&mut flow, 0.0, s_max, &mut y, &opts.dopri(), |dense, ystep| {
        let mut push = |s: f64, state: &[f64]| -> bool {
            match lifted_sample(m, s, state, eps) {
                Ok(p) => {
                    let dc = (p.conserved.unwrap_or(0.0) - c0).abs();
                    let dq = (p.lightlike_residual.unwrap_or(0.0) - q0).abs();
                    c_drift = c_drift.max(dc);
                    q_drift = q_drift.max(dq);
                    if dc > c_bound || dq > q_bound {
                        breach = Some(Error::Accuracy(format!(
                            "drift at s = {s}: conserved {dc:e} (bound {c_bound:e}), g(γ',γ') {dq:e} (bound {q_bound:e})"
                        )));
                    }
                    samples.push(p);
                    breach.is_none()
                }
                Err(e) => {
                    breach = Some(e);
                    false
                }
            }
        };
        if total >= 2 {
            while next_uniform < total {
                let s = s_max * next_uniform as f64 / (total - 1) as f64;
                if s > dense.s_new() + 1e-12 * s_max {
                    break;
                }
                if next_uniform == total - 1 {
                    buf.copy_from_slice(ystep);
                } else {
                    dense.eval(s, &mut buf);
                }
                if !push(s, &buf) {
                    return Control::Stop;
                }
                next_uniform += 1;
            }
            Control::Continue
        } else if push(dense.s_new(), ystep) {
            Control::Continue
        } else {
            Control::Stop
        }
    });
    if let Some(e) = breach {
        return Err(e);
    }
    let mut path = GeodesicPath::new(samples, Parametrization::Affine, eps);
    path.conserved_drift = Some(c_drift);
    path.norm_drift = Some(q_drift);
    path.truncated = outcome_reason(&outcome);
    path.stationary_spatial = stationary(m, &path);
    Ok(path)
}

/// Spatial velocity negligible against the time component at every sample.
fn stationary(m: &ChartManifold, path: &GeodesicPath) -> bool {
    path.samples.iter().all(|p| {
        let vv = m.fields(&p.x).map(|f| f.g0(&p.v, &p.v)).unwrap_or(f64::INFINITY);
        vv.sqrt() <= 1e-8 * (1.0 + p.tdot.unwrap_or(0.0).abs())
    })
}

/// Lightlike pregeodesics written as t-graphs `(x(t), t)`:
/// `x'' = -Gamma^x(V, V) + Gamma^t(V, V) x'` with `V = (x', 1)`.
pub(crate) struct TGraphFlow<'a> {
    pub m: &'a ChartManifold,
    pub eps: f64,
}

impl OdeSystem for TGraphFlow<'_> {
    fn dim(&self) -> usize {
        2 * self.m.dim()
    }

    fn rhs(&mut self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let dim = self.m.dim();
        let jet = self.m.jet(&y[..dim])?;
        let mut v = [0.0; MAX_LIFT];
        v[..dim].copy_from_slice(&y[dim..]);
        v[dim] = 1.0;
        let acc = LiftedMetric::from_jet(&jet, self.eps).contract(&v)?;
        dy[..dim].copy_from_slice(&y[dim..]);
        for k in 0..dim {
            dy[dim + k] = -acc[k] + acc[dim] * v[k];
        }
        Ok(())
    }
}

/// Final state `(x, x')` of the t-graph flow after time `t_end`.
pub fn tgraph_endpoint(
    m: &ChartManifold,
    x0: &[f64],
    v0: &[f64],
    eps: f64,
    t_end: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = m.dim();
    let mut y = vec![0.0; 2 * dim];
    y[..dim].copy_from_slice(x0);
    y[dim..].copy_from_slice(v0);
    let mut flow = TGraphFlow { m, eps };
    let (out, _) =
        ode::integrate(&mut flow, 0.0, t_end, &mut y, &DopriOptions::with_tol(tol), |_, _| Control::Continue);
    match out {
        Outcome::Completed => Ok((y[..dim].to_vec(), y[dim..].to_vec())),
        Outcome::RhsFailed { error, .. } => Err(error),
        other => Err(Error::Accuracy(outcome_reason(&other).unwrap_or_default())),
    }
}

/// Spatial t-graph curve sampled at `samples` equally spaced times in `[0, t_end]`.
/// The curve is `F_eps`-unit when the initial velocity is.
pub fn integrate_tgraph(
    m: &ChartManifold,
    x0: &[f64],
    v0: &[f64],
    eps: f64,
    t_end: f64,
    tol: f64,
    samples: usize,
) -> Result<GeodesicPath> {
    let dim = m.dim();
    if x0.len() != dim || v0.len() != dim {
        return Err(Error::Dimension { expected: dim, got: x0.len().min(v0.len()) });
    }
    if !(t_end > 0.0) {
        return Err(Error::Parameter("t_end must be positive".into()));
    }
    let total = samples.max(5);
    let mut y = vec![0.0; 2 * dim];
    y[..dim].copy_from_slice(x0);
    y[dim..].copy_from_slice(v0);
    let mut out = vec![PathSample::spatial(0.0, x0, v0)];
    let mut buf = vec![0.0; 2 * dim];
    let mut next = 1usize;
    let mut flow = TGraphFlow { m, eps };
    let (outcome, _) = ode::integrate(&mut flow, 0.0, t_end, &mut y, &DopriOptions::with_tol(tol), |dense, ystep| {
        while next < total {
            let s = t_end * next as f64 / (total - 1) as f64;
            if s > dense.s_new() + 1e-12 * t_end {
                break;
            }
            if next == total - 1 {
                buf.copy_from_slice(ystep);
            } else {
                dense.eval(s, &mut buf);
            }
            out.push(PathSample::spatial(s, &buf[..dim], &buf[dim..]));
            next += 1;
        }
        Control::Continue
    });
    let mut path = GeodesicPath::new(out, Parametrization::FepsUnit, eps);
    path.truncated = outcome_reason(&outcome);
    if let Some(reason) = &path.truncated {
        if path.len() < 2 {
            return Err(Error::Accuracy(reason.clone()));
        }
    }
    Ok(path)
}

/// Value of `F_eps` (or `F` at `eps = 0`) of a sample velocity, with admissibility.
fn unit_value(m: &ChartManifold, p: &PathSample, eps: f64, index: usize) -> Result<f64> {
    let f = m.fields(&p.x)?;
    if eps > 0.0 {
        Ok(eval_f_any(&f, &p.v, eps).unwrap_or(f64::NAN))
    } else {
        let v = f_scalar(f.g0(&p.v, &p.v), f.omega_of(&p.v), f.lambda);
        match (v.value, v.branch) {
            (Some(x), _) => Ok(x),
            (None, Branch::ZeroVector) => Ok(0.0),
            _ => Err(Error::Inadmissible { index }),
        }
    }
}

/// The graph curve `(sigma(s), t0 + s - s_start)` of an `F_eps`-unit curve.
pub fn fermat_lift(m: &ChartManifold, sigma: &GeodesicPath, eps: f64, t0: f64) -> Result<GeodesicPath> {
    if !(eps >= 0.0) {
        return Err(Error::Parameter("eps must be nonnegative".into()));
    }
    for (index, p) in sigma.samples.iter().enumerate() {
        let value = unit_value(m, p, eps, index)?;
        if !((value - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::Parametrization { index, value });
        }
    }
    Ok(lift_unchecked(m, sigma, eps, t0))
}

pub(crate) fn lift_unchecked(m: &ChartManifold, sigma: &GeodesicPath, eps: f64, t0: f64) -> GeodesicPath {
    let s0 = sigma.samples.first().map_or(0.0, |p| p.s);
    let samples = sigma
        .samples
        .iter()
        .map(|p| {
            let mut q = PathSample::lifted(p.s, &p.x, &p.v, t0 + (p.s - s0), 1.0);
            if let Ok(f) = m.fields(&p.x) {
                q.conserved = Some(f.omega_of(&p.v) - (f.lambda + eps));
                q.lightlike_residual = Some(g_eps_with(&f, &p.v, 1.0, &p.v, 1.0, eps));
            }
            q.zero_velocity = p.zero_velocity;
            q
        })
        .collect();
    let mut path = GeodesicPath::new(samples, Parametrization::TGraph, eps);
    path.length_f = sigma.length_f;
    path.length_feps = sigma.length_feps;
    path.energy_feps = sigma.energy_feps;
    path
}

/// Spatial projection of a future-pointing lifted curve, reparametrized by `t`.
pub fn fermat_project(gamma: &GeodesicPath) -> Result<GeodesicPath> {
    let mut samples = Vec::with_capacity(gamma.len());
    for (index, p) in gamma.samples.iter().enumerate() {
        let (Some(t), Some(tdot)) = (p.t, p.tdot) else {
            return Err(Error::Parameter(format!("sample {index} carries no time coordinate")));
        };
        if !(tdot > 0.0) {
            return Err(Error::Degenerate(format!("sample {index} is not future-pointing (dt = {tdot})")));
        }
        let v: Vec<f64> = p.v.iter().map(|c| c / tdot).collect();
        samples.push(PathSample::spatial(t, &p.x, &v));
    }
    let mut path = GeodesicPath::new(samples, Parametrization::FepsUnit, gamma.eps);
    path.length_f = gamma.length_f;
    path.length_feps = gamma.length_feps;
    Ok(path)
}

/// Derivative at `nodes[at]` of the interpolating polynomial through `nodes`.
fn lagrange_derivative(nodes: &[f64], values: &[f64], at: usize) -> f64 {
    let x = nodes[at];
    let n = nodes.len();
    let mut d = 0.0;
    for j in 0..n {
        // l_j'(x)
        let mut lj = 0.0;
        let denom: f64 = (0..n).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
        for i in 0..n {
            if i == j {
                continue;
            }
            let prod: f64 = (0..n).filter(|&k| k != j && k != i).map(|k| x - nodes[k]).product();
            lj += prod;
        }
        d += values[j] * lj / denom;
    }
    d
}

/// Largest `|a_perp| / |V|^2` over the samples, where `a = V' + Gamma(V, V)` and
/// `a_perp` is its component orthogonal to `V` in the product metric `g0 + dt^2`.
///
/// Vanishes exactly for pregeodesics. Needs at least 5 samples of a lifted curve.
pub fn pregeodesic_residual(m: &ChartManifold, gamma: &GeodesicPath, eps: f64) -> Result<f64> {
    let n = gamma.len();
    if n < 5 {
        return Err(Error::InsufficientData { need: 5, got: n });
    }
    if !gamma.is_lifted() {
        return Err(Error::Parameter("pregeodesic residual needs a lifted curve".into()));
    }
    let dim = m.dim();
    let nl = dim + 1;
    let s: Vec<f64> = gamma.samples.iter().map(|p| p.s).collect();
    let comps: Vec<Vec<f64>> = (0..nl)
        .map(|k| gamma.samples.iter().map(|p| if k < dim { p.v[k] } else { p.tdot.unwrap_or(0.0) }).collect())
        .collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        let lo = i.saturating_sub(2).min(n - 5);
        let window = &s[lo..lo + 5];
        let mut v = [0.0; MAX_LIFT];
        let mut a = [0.0; MAX_LIFT];
        for k in 0..nl {
            v[k] = comps[k][i];
            a[k] = lagrange_derivative(window, &comps[k][lo..lo + 5], i - lo);
        }
        let jet = m.jet(&gamma.samples[i].x)?;
        let lm = LiftedMetric::from_jet(&jet, eps);
        let gvv = lm.contract(&v)?;
        for k in 0..nl {
            a[k] += gvv[k];
        }
        let aux = aux_metric(&jet.fields.g, nl);
        let vv = aux.bilinear(&v, &v);
        if !(vv > 0.0) {
            continue;
        }
        let av = aux.bilinear(&a, &v);
        let mut perp = [0.0; MAX_LIFT];
        for k in 0..nl {
            perp[k] = a[k] - av / vv * v[k];
        }
        worst = worst.max(aux.bilinear(&perp, &perp).max(0.0).sqrt() / vv);
    }
    Ok(worst)
}

fn aux_metric(g: &SmallMat, n: usize) -> SmallMat {
    SmallMat::from_fn(n, |i, j| {
        if i < n - 1 && j < n - 1 {
            g.get(i, j)
        } else if i == j {
            1.0
        } else {
            0.0
        }
    })
}

/// A smooth one-parameter family of metrics given by their Christoffel symbols.
pub trait MetricFamily {
    fn dim(&self) -> usize;
    fn christoffel(&self, p: &[f64], eps: f64) -> Result<Christoffel>;
}

/// The lifted metrics `g_eps` on `S x R`; points are `(x, t)`.
#[derive(Debug, Clone, Copy)]
pub struct LiftedFamily<'a>(pub &'a ChartManifold);

impl MetricFamily for LiftedFamily<'_> {
    fn dim(&self) -> usize {
        self.0.dim() + 1
    }

    fn christoffel(&self, p: &[f64], eps: f64) -> Result<Christoffel> {
        crate::spacetime::christoffel_g_eps(self.0, &p[..self.0.dim()], eps)
    }
}

/// The family `(1 + eps) g0` on `S`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledFamily<'a>(pub &'a ChartManifold);

impl MetricFamily for ScaledFamily<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn christoffel(&self, p: &[f64], _eps: f64) -> Result<Christoffel> {
        // Constant rescaling leaves the Levi-Civita connection unchanged.
        self.0.christoffel_g0(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityOptions {
    /// Required lower bound on the smallest eigenvalue of `B^eps`.
    pub margin: f64,
    /// Upper bound on lattice points per ball.
    pub max_points: usize,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        ConvexityOptions { margin: 0.0, max_points: 33 * 33 * 33 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvexityReport {
    pub center: Vec<f64>,
    pub deltas: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `min_eigenvalue[i][j]`: smallest eigenvalue of `B^eps_j` over `{N < delta_i}`;
    /// `-inf` where a lattice point left the chart.
    pub min_eigenvalue: Vec<Vec<f64>>,
    pub margin: f64,
    pub points_per_ball: usize,
    /// Largest `delta` passing for every `eps`, if any.
    pub delta: Option<f64>,
}

/// Default `eps` grid `{0, eps0/2, eps0}`.
pub fn default_eps_grid(eps0: f64) -> Vec<f64> {
    vec![0.0, 0.5 * eps0, eps0]
}

/// Scan `B^eps_ij = delta_ij - sum_k x^k Gamma^k_ij(p, eps)` over lattices in the
/// balls `N = sum (x^i)^2 < delta` (coordinates centered at `p0`) and report the
/// largest `delta` on the grid for which `B^eps` is positive definite (above the
/// margin) for every `eps` in the grid.
pub fn convexity_certificate<F: MetricFamily + ?Sized>(
    family: &F,
    p0: &[f64],
    eps_grid: &[f64],
    delta_grid: &[f64],
    opts: &ConvexityOptions,
) -> Result<ConvexityReport> {
    let n = family.dim();
    if p0.len() != n {
        return Err(Error::Dimension { expected: n, got: p0.len() });
    }
    if eps_grid.is_empty() || delta_grid.is_empty() {
        return Err(Error::Parameter("empty eps or delta grid".into()));
    }
    let mut deltas = delta_grid.to_vec();
    deltas.sort_by(f64::total_cmp);
    let per_axis = {
        let mut l = 2usize;
        while (l + 1).pow(n as u32) <= opts.max_points && l < 33 {
            l += 1;
        }
        l
    };
    let mut table = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let radius = delta.sqrt();
        let mut row = vec![f64::INFINITY; eps_grid.len()];
        let total = per_axis.pow(n as u32);
        let mut offset = vec![0.0; n];
        let mut point = vec![0.0; n];
        for mut idx in 0..total {
            let mut nsq = 0.0;
            for k in (0..n).rev() {
                let i = idx % per_axis;
                idx /= per_axis;
                offset[k] = radius * (2.0 * i as f64 / (per_axis - 1) as f64 - 1.0);
                nsq += offset[k] * offset[k];
            }
            if nsq >= delta {
                continue;
            }
            for k in 0..n {
                point[k] = p0[k] + offset[k];
            }
            for (j, &eps) in eps_grid.iter().enumerate() {
                let ev = match family.christoffel(&point, eps) {
                    Ok(c) => {
                        let b = SmallMat::from_fn(n, |a, bb| {
                            let delta_ab = if a == bb { 1.0 } else { 0.0 };
                            delta_ab - (0..n).map(|k| offset[k] * c.gamma[k][a][bb]).sum::<f64>()
                        });
                        b.symmetric_eigenvalues()[0]
                    }
                    Err(_) => f64::NEG_INFINITY,
                };
                row[j] = row[j].min(ev);
            }
        }
        // The center always belongs to the ball and has B = I.
        for r in row.iter_mut() {
            *r = r.min(1.0);
        }
        table.push(row);
    }
    let mut delta = None;
    for (i, row) in table.iter().enumerate() {
        if row.iter().all(|&e| e > opts.margin) {
            delta = Some(deltas[i]);
        } else {
            break;
        }
    }
    Ok(ConvexityReport {
        center: p0.to_vec(),
        deltas,
        eps_grid: eps_grid.to_vec(),
        min_eigenvalue: table,
        margin: opts.margin,
        points_per_ball: per_axis.pow(n as u32),
        delta,
    })
}
