//! The affine control system `sigma' = u0 X0 + sum u_i X_i` on `S`, where `X0` is
//! the unit drift against `omega` and the `X_i` frame the distribution `ker omega`.
//!
//! Controls are admissible when on each interval `J` of a partition `u0 = xi_J^2`
//! and `u_i = xi_J alpha_Ji` with `sum_i alpha_Ji^2 <= C^2`. Every such curve has
//! `omega(sigma') < 0` wherever `xi_J > 0`, so it is admissible for the Kropina
//! part of `F`, and its energy obeys a bound depending only on `C` and `int u0^2`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::finsler::{f_scalar, simpson, Branch};
use crate::linalg::SmallMat;
use crate::manifold::{d_omega_from_jet, sharp_with, ChartManifold, DomainBounds, PointFields};
use crate::ode::{self, Control, DopriOptions, OdeSystem, Outcome};
use crate::path::{GeodesicPath, Parametrization, PathSample};
use crate::MAX_DIM;

/// Lattice points per axis for sampling `|omega|` and `omega ^ d omega`.
const SAMPLES_PER_AXIS: usize = 9;
/// Cells per axis of the neighbourhood cover.
const CELLS_PER_AXIS: usize = 4;

/// One neighbourhood of the cover with its transversal pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Neighbourhood {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Indices of `(Y1, Y2)` among the generators, ordered so that `d omega(Y1, Y2) > 0`.
    pub pair: (usize, usize),
    /// Sampled infimum of `d omega(Y1, Y2)` for unit `Y`.
    pub lambda_local: f64,
}

#[derive(Debug, Clone)]
pub struct ControlFrame {
    manifold: ChartManifold,
    /// Coordinate axis whose direction is dropped when projecting onto `ker omega`.
    drop_axis: usize,
    pub neighbourhoods: Vec<Neighbourhood>,
    /// Sampled `sup |omega|` over the domain bounds.
    pub omega_sup: f64,
    /// Sampled `inf |omega|` over the domain bounds.
    pub omega_inf: f64,
    /// Infimum of the local `lambda` before rescaling the frame.
    pub lambda_pre: f64,
    /// Same infimum for the frame rescaled to `g0(Y, Y) = C^2`.
    pub lambda: f64,
    /// `(5 (m + 3) Omega / lambda_pre)^(1/2)`.
    pub c: f64,
    /// Where the hypotheses were only checked on the bounds, or looked fragile.
    pub warnings: Vec<String>,
}

impl ControlFrame {
    pub fn manifold(&self) -> &ChartManifold {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Number of generators `d = m - 1`.
    pub fn generators(&self) -> usize {
        self.manifold.dim() - 1
    }

    pub fn domain(&self) -> &DomainBounds {
        self.manifold.bounds()
    }

    /// `X0` and the generators at a point, as columns `[X0, X1, .., Xd]`.
    pub fn fields_at(&self, x: &[f64]) -> Result<Vec<[f64; MAX_DIM]>> {
        let f = self.manifold.fields(x)?;
        Ok(frame_from_fields(&f, self.drop_axis))
    }

    /// `X0` at a point.
    pub fn drift(&self, x: &[f64]) -> Result<[f64; MAX_DIM]> {
        Ok(self.fields_at(x)?[0])
    }
}

/// `X0 = -omega^sharp / |omega|` and the `g0`-orthonormalized projections of the
/// coordinate axes (other than `drop`) onto `ker omega`.
fn frame_from_fields(f: &PointFields, drop: usize) -> Vec<[f64; MAX_DIM]> {
    let m = f.dim;
    let w = &f.omega[..m];
    let sharp = sharp_with(&f.g, w);
    let norm_sq = f.omega_of(&sharp[..m]);
    let norm = norm_sq.sqrt();
    let mut out = Vec::with_capacity(m);
    let mut x0 = [0.0; MAX_DIM];
    for k in 0..m {
        x0[k] = -sharp[k] / norm;
    }
    out.push(x0);
    for axis in (0..m).filter(|&k| k != drop) {
        let mut v = [0.0; MAX_DIM];
        v[axis] = 1.0;
        let c = w[axis] / norm_sq;
        for k in 0..m {
            v[k] -= c * sharp[k];
        }
        for prev in out.iter().skip(1) {
            let d = f.g0(&v[..m], &prev[..m]);
            for k in 0..m {
                v[k] -= d * prev[k];
            }
        }
        let n = f.g0(&v[..m], &v[..m]).sqrt();
        for c in v.iter_mut() {
            *c /= n;
        }
        out.push(v);
    }
    out
}

/// Build the drift and generating frame, the neighbourhood cover and the constants
/// `Omega`, `lambda` and `C`. Everything is sampled on the domain bounds.
pub fn build_frame(m: &ChartManifold) -> Result<ControlFrame> {
    let dim = m.dim();
    if dim < 3 {
        return Err(Error::Nonintegrable(format!(
            "omega ^ d omega is a 3-form and vanishes identically in dimension {dim}"
        )));
    }
    let lattice = m.bounds().lattice(SAMPLES_PER_AXIS);
    let mut omega_sup = 0.0f64;
    let mut omega_inf = f64::INFINITY;
    let mut sup_on_boundary = false;
    // smallest normalized |omega^sharp_k| over the domain, per axis
    let mut axis_score = [f64::INFINITY; MAX_DIM];
    for x in &lattice {
        let f = m.fields(x)?;
        let sharp = sharp_with(&f.g, &f.omega[..dim]);
        let norm = f.omega_of(&sharp[..dim]).max(0.0).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Assumption(format!("omega vanishes at {x:?}")));
        }
        let ni = m.nonintegrability(x)?;
        if !(ni > 1e-12) {
            return Err(Error::Nonintegrable(format!("omega ^ d omega = 0 at {x:?}")));
        }
        if norm > omega_sup {
            omega_sup = norm;
            sup_on_boundary = on_boundary(m.bounds(), x);
        }
        omega_inf = omega_inf.min(norm);
        let euclid = sharp[..dim].iter().map(|c| c * c).sum::<f64>().sqrt();
        for k in 0..dim {
            axis_score[k] = axis_score[k].min(sharp[k].abs() / euclid);
        }
    }
    let drop_axis = (0..dim).max_by(|&a, &b| axis_score[a].total_cmp(&axis_score[b])).unwrap_or(0);
    if !(axis_score[drop_axis] > 1e-3) {
        return Err(Error::Assumption("no coordinate axis stays transversal to ker omega on the domain".into()));
    }
    let mut warnings = Vec::new();
    if sup_on_boundary {
        warnings.push(String::from(
            "sup |omega| is attained on the boundary of the domain bounds; Omega holds on the bounds only",
        ));
    }
    let neighbourhoods = cover(m, drop_axis)?;
    let lambda_pre = neighbourhoods.iter().map(|n| n.lambda_local).fold(f64::INFINITY, f64::min);
    if !(lambda_pre > 0.0) {
        return Err(Error::Nonintegrable("a neighbourhood has no pair with d omega(Y1, Y2) > 0".into()));
    }
    let c = (5.0 * (dim as f64 + 3.0) * omega_sup / lambda_pre).sqrt();
    Ok(ControlFrame {
        manifold: m.clone(),
        drop_axis,
        neighbourhoods,
        omega_sup,
        omega_inf,
        lambda_pre,
        lambda: c * c * lambda_pre,
        c,
        warnings,
    })
}

fn on_boundary(b: &DomainBounds, x: &[f64]) -> bool {
    x.iter().zip(b.lo.iter().zip(&b.hi)).any(|(v, (lo, hi))| {
        let tol = 1e-12 * (hi - lo);
        (v - lo).abs() <= tol || (hi - v).abs() <= tol
    })
}

fn cover(m: &ChartManifold, drop: usize) -> Result<Vec<Neighbourhood>> {
    let dim = m.dim();
    let b = m.bounds();
    let d = dim - 1;
    let total = CELLS_PER_AXIS.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        for k in (0..dim).rev() {
            let i = idx % CELLS_PER_AXIS;
            idx /= CELLS_PER_AXIS;
            let w = (b.hi[k] - b.lo[k]) / CELLS_PER_AXIS as f64;
            lo[k] = b.lo[k] + w * i as f64;
            hi[k] = lo[k] + w;
        }
        let cell = DomainBounds::new(lo.clone(), hi.clone())?;
        // inf over samples of d omega(X_j, X_l) for every ordered pair
        let mut inf = vec![vec![f64::INFINITY; d]; d];
        for x in cell.lattice(3) {
            let jet = m.jet(&x)?;
            let frame = frame_from_fields(&jet.fields, drop);
            for j in 0..d {
                for l in 0..d {
                    if j != l {
                        let v = d_omega_from_jet(&jet, &frame[1 + j][..dim], &frame[1 + l][..dim]);
                        inf[j][l] = inf[j][l].min(v);
                    }
                }
            }
        }
        let mut best = (0, 1, f64::NEG_INFINITY);
        for j in 0..d {
            for l in 0..d {
                if j != l && inf[j][l] > best.2 {
                    best = (j, l, inf[j][l]);
                }
            }
        }
        out.push(Neighbourhood { lo, hi, pair: (best.0, best.1), lambda_local: best.2 });
    }
    Ok(out)
}

/// Piecewise control: `xi_J` per interval and `alpha_Ji` as constants on a uniform
/// sub-grid of each interval (`alpha[J][sub][i]`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlSignal {
    /// `0 = b_0 < b_1 < ... < b_n = 1`.
    pub breakpoints: Vec<f64>,
    pub xi: Vec<f64>,
    pub alpha: Vec<Vec<Vec<f64>>>,
}

impl ControlSignal {
    /// Zero control on `[0, 1]` with `d` generators.
    pub fn zero(d: usize) -> Self {
        ControlSignal { breakpoints: vec![0.0, 1.0], xi: vec![0.0], alpha: vec![vec![vec![0.0; d]]] }
    }

    /// Uniform partition with one constant `alpha` per interval.
    pub fn piecewise_constant(xi: &[f64], alpha: &[Vec<f64>]) -> Self {
        let n = xi.len();
        ControlSignal {
            breakpoints: (0..=n).map(|i| i as f64 / n as f64).collect(),
            xi: xi.to_vec(),
            alpha: alpha.iter().map(|a| vec![a.clone()]).collect(),
        }
    }

    pub fn intervals(&self) -> usize {
        self.xi.len()
    }

    /// Check the literal admissibility inequalities with bound `C`.
    pub fn check(&self, c: f64, d: usize) -> Result<()> {
        let n = self.xi.len();
        let bad = |msg: String| Err(Error::InadmissibleControl(msg));
        if n == 0 || self.breakpoints.len() != n + 1 || self.alpha.len() != n {
            return bad(format!(
                "{} breakpoints, {} xi values and {} alpha blocks do not describe one partition",
                self.breakpoints.len(),
                n,
                self.alpha.len()
            ));
        }
        if self.breakpoints[0] != 0.0 || self.breakpoints[n] != 1.0 {
            return bad(String::from("partition must cover [0, 1]"));
        }
        if let Some(i) = self.breakpoints.windows(2).position(|w| !(w[1] > w[0])) {
            return bad(format!("breakpoints not increasing at interval {i}"));
        }
        for (j, (&xi, block)) in self.xi.iter().zip(&self.alpha).enumerate() {
            if !(xi >= 0.0) || !xi.is_finite() {
                return bad(format!("xi_{j} = {xi} is not a finite nonnegative number"));
            }
            if block.is_empty() {
                return bad(format!("interval {j} has no alpha samples"));
            }
            for (k, a) in block.iter().enumerate() {
                if a.len() != d {
                    return bad(format!("alpha sample {k} of interval {j} has {} entries, expected {d}", a.len()));
                }
                let sq: f64 = a.iter().map(|v| v * v).sum();
                if !(sq <= c * c * (1.0 + 1e-12)) {
                    return bad(format!("sum alpha^2 = {sq} exceeds C^2 = {} on interval {j}, sample {k}", c * c));
                }
            }
        }
        Ok(())
    }

    /// Constant pieces `(start, end, xi, alpha)` in order.
    pub fn pieces(&self) -> Vec<(f64, f64, f64, &[f64])> {
        let mut out = Vec::new();
        for (j, block) in self.alpha.iter().enumerate() {
            let (a, b) = (self.breakpoints[j], self.breakpoints[j + 1]);
            let k = block.len();
            for (i, alpha) in block.iter().enumerate() {
                let s0 = if i == 0 { a } else { a + (b - a) * i as f64 / k as f64 };
                let s1 = if i + 1 == k { b } else { a + (b - a) * (i + 1) as f64 / k as f64 };
                out.push((s0, s1, self.xi[j], alpha.as_slice()));
            }
        }
        out
    }

    /// `(u0, u_1..u_d)` on a constant piece.
    pub fn controls(xi: f64, alpha: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(alpha.len() + 1);
        u.push(xi * xi);
        u.extend(alpha.iter().map(|a| xi * a));
        u
    }

    /// Time-rescaled concatenation: `self` on `[0, 1/2]`, `other` on `[1/2, 1]`.
    /// Controls scale by 2 so that each half traces the original curve.
    pub fn concat(&self, other: &ControlSignal) -> ControlSignal {
        let s = core::f64::consts::SQRT_2;
        let mut breakpoints: Vec<f64> = self.breakpoints.iter().map(|b| 0.5 * b).collect();
        breakpoints.extend(other.breakpoints.iter().skip(1).map(|b| 0.5 + 0.5 * b));
        // u0 = xi^2 doubles with xi * sqrt 2; u_i = xi alpha doubles with alpha * sqrt 2
        let xi = self.xi.iter().chain(&other.xi).map(|x| x * s).collect();
        let alpha = self
            .alpha
            .iter()
            .chain(&other.alpha)
            .map(|block| block.iter().map(|a| a.iter().map(|v| v * s).collect()).collect())
            .collect();
        ControlSignal { breakpoints, xi, alpha }
    }
}

struct ControlFlow<'a> {
    frame: &'a ControlFrame,
    u: Vec<f64>,
}

impl ControlFlow<'_> {
    fn velocity(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let fields = self.frame.fields_at(x)?;
        for c in out.iter_mut() {
            *c = 0.0;
        }
        for (u, f) in self.u.iter().zip(&fields) {
            for k in 0..out.len() {
                out[k] += u * f[k];
            }
        }
        Ok(())
    }
}

impl OdeSystem for ControlFlow<'_> {
    fn dim(&self) -> usize {
        self.frame.dim()
    }

    fn rhs(&mut self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.velocity(y, dy)
    }
}

/// Points per constant piece on the returned curve, endpoints included.
const POINTS_PER_PIECE: usize = 9;

fn run(frame: &ControlFrame, x0: &[f64], u: &ControlSignal, record: bool) -> Result<(Vec<f64>, Vec<PathSample>)> {
    let dim = frame.dim();
    if x0.len() != dim {
        return Err(Error::Dimension { expected: dim, got: x0.len() });
    }
    u.check(frame.c, frame.generators())?;
    frame.manifold.check_point(x0)?;
    let mut y = x0.to_vec();
    let mut samples = Vec::new();
    let opts = DopriOptions::with_tol(1e-12);
    let pieces = u.pieces();
    let mut v = vec![0.0; dim];
    for (index, &(s0, s1, xi, alpha)) in pieces.iter().enumerate() {
        let mut flow = ControlFlow { frame, u: ControlSignal::controls(xi, alpha) };
        if xi == 0.0 {
            if record {
                let zero = vec![0.0; dim];
                let mut p = PathSample::spatial(s0, &y, &zero);
                p.zero_velocity = true;
                samples.push(p);
            }
            continue;
        }
        if record {
            flow.velocity(&y, &mut v)?;
            samples.push(PathSample::spatial(s0, &y, &v));
        }
        let mut next = 1usize;
        let mut buf = vec![0.0; dim];
        let mut failure: Option<Error> = None;
        let (out, _) = ode::integrate(&mut flow, s0, s1, &mut y, &opts, |dense, _| {
            if !record {
                return Control::Continue;
            }
            // interior points only; the next piece (or the end) adds the final one
            while next + 1 < POINTS_PER_PIECE {
                let s = s0 + (s1 - s0) * next as f64 / (POINTS_PER_PIECE - 1) as f64;
                if s > dense.s_new() {
                    break;
                }
                dense.eval(s, &mut buf);
                let mut vel = vec![0.0; dim];
                let f = ControlFlow { frame, u: ControlSignal::controls(xi, alpha) };
                if let Err(e) = f.velocity(&buf, &mut vel) {
                    failure = Some(e);
                    return Control::Stop;
                }
                samples.push(PathSample::spatial(s, &buf, &vel));
                next += 1;
            }
            Control::Continue
        });
        if let Some(e) = failure {
            return Err(e);
        }
        match out {
            Outcome::Completed => {}
            Outcome::RhsFailed { error, .. } => return Err(error),
            other => return Err(Error::Accuracy(format!("control flow stopped: {other:?} on piece {index}"))),
        }
        if record {
            flow.velocity(&y, &mut v)?;
        }
    }
    if record {
        let last_zero = pieces.last().is_some_and(|p| p.2 == 0.0);
        let mut p = PathSample::spatial(1.0, &y, if last_zero { &[0.0; MAX_DIM][..dim] } else { &v });
        p.zero_velocity = last_zero;
        samples.push(p);
    }
    Ok((y, samples))
}

/// Solve the control system from `x0`. The curve is sampled on every constant piece.
pub fn integrate_control(frame: &ControlFrame, x0: &[f64], u: &ControlSignal) -> Result<GeodesicPath> {
    let (_, samples) = run(frame, x0, u, true)?;
    Ok(GeodesicPath::new(samples, Parametrization::Affine, 0.0))
}

/// `sigma(1)`.
pub fn endpoint(frame: &ControlFrame, x0: &[f64], u: &ControlSignal) -> Result<Vec<f64>> {
    Ok(run(frame, x0, u, false)?.0)
}

/// Samples with `xi > 0` where `omega(sigma') >= 0`.
pub fn drift_sign_violations(frame: &ControlFrame, path: &GeodesicPath) -> Result<usize> {
    let mut bad = 0;
    for p in &path.samples {
        if p.zero_velocity {
            continue;
        }
        let f = frame.manifold.fields(&p.x)?;
        if !(f.omega_of(&p.v) < 0.0) {
            bad += 1;
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    /// `E = 1/2 int_0^1 F^2` with `F = 1` on the zero section.
    pub energy: f64,
    /// `min |omega|` over the bounding box of the curve.
    pub delta: f64,
    pub u0_sq_integral: f64,
    /// `sum_J int_J (sum_i alpha_Ji^2)^2`, at most `C^4`.
    pub alpha_quartic_integral: f64,
    /// `1 + (2 / delta^2)(int u0^2 + C^4)`.
    pub bound: f64,
    /// The same with `C^4` replaced by the quartic integral.
    pub sharp_bound: f64,
    pub pass: bool,
}

/// Compare `E(sigma)` with the bound in terms of `int u0^2` and `C`.
pub fn energy_bound_check(frame: &ControlFrame, u: &ControlSignal, path: &GeodesicPath) -> Result<EnergyReport> {
    u.check(frame.c, frame.generators())?;
    let m = &frame.manifold;
    let dim = m.dim();
    let mut energy = 0.0;
    let mut u0_sq = 0.0;
    let mut quartic = 0.0;
    for (s0, s1, xi, alpha) in u.pieces() {
        let len = s1 - s0;
        u0_sq += xi.powi(4) * len;
        if xi > 0.0 {
            let a2: f64 = alpha.iter().map(|a| a * a).sum();
            quartic += a2 * a2 * len;
        }
        if xi == 0.0 {
            energy += 0.5 * len;
            continue;
        }
        // F^2 on the piece, with velocities of this piece at both ends
        let flow = ControlFlow { frame, u: ControlSignal::controls(xi, alpha) };
        let mut s = Vec::new();
        let mut f2 = Vec::new();
        let mut v = vec![0.0; dim];
        for p in path.samples.iter().filter(|p| p.s >= s0 - 1e-14 && p.s <= s1 + 1e-14) {
            flow.velocity(&p.x, &mut v)?;
            let f = m.fields(&p.x)?;
            let value = f_scalar(f.g0(&v, &v), f.omega_of(&v), f.lambda);
            let fv = match (value.value, value.branch) {
                (Some(x), _) => x,
                (None, Branch::ZeroVector) => 1.0,
                _ => return Err(Error::Inadmissible { index: 0 }),
            };
            s.push(p.s);
            f2.push(fv * fv);
        }
        if s.len() < 2 {
            return Err(Error::InsufficientData { need: 2, got: s.len() });
        }
        energy += 0.5 * simpson(&s, &f2);
    }
    let delta = hull_min_omega(m, path)?;
    let c4 = frame.c.powi(4);
    let bound = 1.0 + 2.0 / (delta * delta) * (u0_sq + c4);
    let sharp_bound = 1.0 + 2.0 / (delta * delta) * (u0_sq + quartic);
    Ok(EnergyReport {
        energy,
        delta,
        u0_sq_integral: u0_sq,
        alpha_quartic_integral: quartic,
        bound,
        sharp_bound,
        pass: energy <= bound,
    })
}

fn hull_min_omega(m: &ChartManifold, path: &GeodesicPath) -> Result<f64> {
    let dim = m.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut delta = f64::INFINITY;
    for p in &path.samples {
        delta = delta.min(m.omega_norm(&p.x)?);
        for k in 0..dim {
            lo[k] = lo[k].min(p.x[k]);
            hi[k] = hi[k].max(p.x[k]);
        }
    }
    for k in 0..dim {
        if !(hi[k] > lo[k]) {
            hi[k] = lo[k] + 1e-12;
        }
    }
    for x in DomainBounds::new(lo, hi)?.lattice(5) {
        if let Ok(n) = m.omega_norm(&x) {
            delta = delta.min(n);
        }
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachOptions {
    /// Target distance in `g0` at `x1`.
    pub tol: f64,
    /// Maximum number of endpoint evaluations.
    pub budget: usize,
    /// Intervals of the fixed uniform partition.
    pub intervals: usize,
    pub seed: u64,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions { tol: 1e-4, budget: 20_000, intervals: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reached {
    pub signal: ControlSignal,
    pub distance: f64,
    pub evaluations: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReachFailure {
    pub best_signal: ControlSignal,
    pub best_distance: f64,
    pub evaluations: usize,
    pub reason: String,
}

impl core::fmt::Display for ReachFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (best distance {:e} after {} evaluations)", self.reason, self.best_distance, self.evaluations)
    }
}

/// Unconstrained parameters to an admissible signal: per interval `xi = z^2` and
/// `alpha = C q / (1 + |q|^2)^(1/2)`, which stays inside the ball of radius `C`.
fn decode(params: &[f64], n: usize, d: usize, c: f64) -> ControlSignal {
    let mut xi = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for j in 0..n {
        let block = &params[j * (d + 1)..(j + 1) * (d + 1)];
        xi.push(block[0] * block[0]);
        let q = &block[1..];
        let scale = c / (1.0 + q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        alpha.push(q.iter().map(|v| v * scale).collect());
    }
    ControlSignal::piecewise_constant(&xi, &alpha)
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Find an admissible piecewise-constant signal steering `x0` to `x1`, by
/// Levenberg-Marquardt on the endpoint map with seeded random restarts.
pub fn reach(
    frame: &ControlFrame,
    x0: &[f64],
    x1: &[f64],
    opts: &ReachOptions,
) -> core::result::Result<Reached, ReachFailure> {
    let dim = frame.dim();
    let d = frame.generators();
    let n = opts.intervals.max(1);
    let np = n * (d + 1);
    let zero = ControlSignal::zero(d);
    let fail = |best_signal: ControlSignal, best_distance, evaluations, reason: String| ReachFailure {
        best_signal,
        best_distance,
        evaluations,
        reason,
    };
    let g = match frame.manifold.metric_matrix(x1) {
        Ok(g) => g,
        Err(e) => return Err(fail(zero, f64::INFINITY, 0, format!("{e}"))),
    };
    let dist = |r: &[f64]| g.bilinear(r, r).max(0.0).sqrt();
    let direct: Vec<f64> = x0.iter().zip(x1).map(|(a, b)| a - b).collect();
    if x0.len() == dim && x1.len() == dim && dist(&direct) < opts.tol {
        return Ok(Reached { signal: zero, distance: dist(&direct), evaluations: 0, restarts: 0 });
    }
    let mut evals = 0usize;
    let residual = |p: &[f64], evals: &mut usize| -> Option<Vec<f64>> {
        *evals += 1;
        let sig = decode(p, n, d, frame.c);
        endpoint(frame, x0, &sig).ok().map(|e| e.iter().zip(x1).map(|(a, b)| a - b).collect())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: (f64, Vec<f64>) = (f64::INFINITY, vec![0.0; np]);
    let mut restarts = 0usize;
    while evals < opts.budget {
        // first start is the pure drift, later ones are random
        let mut p: Vec<f64> = (0..np)
            .map(|i| {
                let first_in_block = i % (d + 1) == 0;
                match (restarts, first_in_block) {
                    (0, true) => 1.0,
                    (0, false) => 0.0,
                    (_, true) => 0.3 + 0.9 * unit_uniform(&mut rng),
                    (_, false) => 2.0 * unit_uniform(&mut rng) - 1.0,
                }
            })
            .collect();
        restarts += 1;
        let Some(mut r) = residual(&p, &mut evals) else { continue };
        let mut err = dist(&r);
        let mut mu = 1e-3;
        let mut stall = 0;
        while evals + np < opts.budget {
            if err < best.0 {
                best = (err, p.clone());
            }
            if err < opts.tol {
                let signal = decode(&p, n, d, frame.c);
                return Ok(Reached { signal, distance: err, evaluations: evals, restarts: restarts - 1 });
            }
            // forward-difference Jacobian (dim x np)
            let mut jac = vec![vec![0.0; np]; dim];
            let mut ok = true;
            for col in 0..np {
                let h = 1e-7 * (1.0 + p[col].abs());
                let mut q = p.clone();
                q[col] += h;
                match residual(&q, &mut evals) {
                    Some(rq) => {
                        for row in 0..dim {
                            jac[row][col] = (rq[row] - r[row]) / h;
                        }
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            // step = -J^T (J J^T + mu I)^-1 r
            let jjt = SmallMat::from_fn(dim, |a, b| {
                (0..np).map(|k| jac[a][k] * jac[b][k]).sum::<f64>() + if a == b { mu } else { 0.0 }
            });
            let y = match jjt.lu() {
                Ok(lu) => lu.solve(&r),
                Err(_) => break,
            };
            let step: Vec<f64> = (0..np).map(|k| -(0..dim).map(|a| jac[a][k] * y[a]).sum::<f64>()).collect();
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            match residual(&trial, &mut evals) {
                Some(rt) if dist(&rt) < err => {
                    p = trial;
                    r = rt;
                    let new_err = dist(&r);
                    stall = if new_err > 0.9 * err { stall + 1 } else { 0 };
                    err = new_err;
                    mu = (mu * 0.3).max(1e-12);
                }
                _ => {
                    mu *= 10.0;
                    stall += 1;
                }
            }
            if stall > 25 || mu > 1e8 {
                break;
            }
        }
    }
    Err(fail(decode(&best.1, n, d, frame.c), best.0, evals, String::from("evaluation budget exhausted")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Catalog;

    fn heis() -> ControlFrame {
        build_frame(&Catalog::heisenberg()).unwrap()
    }

    #[test]
    fn planar_forms_are_integrable() {
        assert!(matches!(build_frame(&Catalog::kropina_plane()), Err(Error::Nonintegrable(_))));
    }

    #[test]
    fn heisenberg_frame_and_constants() {
        let f = heis();
        let m = f.manifold();
        assert!((f.omega_sup - 1.5f64.sqrt()).abs() < 1e-12);
        assert!((f.lambda_pre - 1.0 / 1.5f64.sqrt()).abs() < 1e-12);
        assert!((f.c * f.c - 45.0).abs() < 1e-9);
        assert!(f.lambda > 4.0 * 6.0 * f.omega_sup);
        assert!(!f.warnings.is_empty());
        for x in m.bounds().lattice(5) {
            let fields = f.fields_at(&x).unwrap();
            let pf = m.fields(&x).unwrap();
            let x0 = &fields[0][..3];
            assert!((pf.g0(x0, x0) - 1.0).abs() < 1e-10);
            assert!((pf.omega_of(x0) + m.omega_norm(&x).unwrap()).abs() < 1e-10);
            for i in 1..3 {
                assert!(pf.omega_of(&fields[i][..3]).abs() < 1e-12);
                for j in 1..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((pf.g0(&fields[i][..3], &fields[j][..3]) - e).abs() < 1e-12);
                }
            }
        }
        // dω(Y1, Y2) = C^2 dω(X1, X2) = C^2 at the origin
        let jet = m.jet(&[0.0, 0.0, 0.0]).unwrap();
        let fr = f.fields_at(&[0.0, 0.0, 0.0]).unwrap();
        let n = &f.neighbourhoods[0];
        let (a, b) = (fr[1 + n.pair.0], fr[1 + n.pair.1]);
        let c2 = f.c * f.c;
        assert!((c2 * d_omega_from_jet(&jet, &a[..3], &b[..3]) - c2).abs() < 1e-9);
    }

    #[test]
    fn zero_control_is_constant() {
        let f = heis();
        let x0 = [0.1, -0.2, 0.3];
        let u = ControlSignal::zero(2);
        assert_eq!(endpoint(&f, &x0, &u).unwrap(), x0.to_vec());
        let path = integrate_control(&f, &x0, &u).unwrap();
        let r = energy_bound_check(&f, &u, &path).unwrap();
        assert_eq!(r.energy, 0.5);
        assert!(r.pass && r.bound >= 1.0);
    }

    fn rk4_drift(f: &ControlFrame, x0: [f64; 3], steps: usize) -> [f64; 3] {
        let field = |x: [f64; 3]| {
            // X0 = -omega / |omega| for the Euclidean metric
            let w = [x[1] / 2.0, -x[0] / 2.0, 1.0];
            let n = (w[0] * w[0] + w[1] * w[1] + 1.0).sqrt();
            [-w[0] / n, -w[1] / n, -w[2] / n]
        };
        let _ = f;
        let h = 1.0 / steps as f64;
        let mut x = x0;
        for _ in 0..steps {
            let k1 = field(x);
            let k2 = field(core::array::from_fn(|i| x[i] + 0.5 * h * k1[i]));
            let k3 = field(core::array::from_fn(|i| x[i] + 0.5 * h * k2[i]));
            let k4 = field(core::array::from_fn(|i| x[i] + h * k3[i]));
            x = core::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        x
    }

    #[test]
    fn drift_flow_matches_oracle() {
        let f = heis();
        let x0 = [0.3, 0.2, 0.4];
        let u = ControlSignal::piecewise_constant(&[1.0], &[vec![0.0, 0.0]]);
        let e = endpoint(&f, &x0, &u).unwrap();
        let o = rk4_drift(&f, x0, 2000);
        for k in 0..3 {
            assert!((e[k] - o[k]).abs() < 1e-9, "{e:?} vs {o:?}");
        }
        let path = integrate_control(&f, &x0, &u).unwrap();
        assert_eq!(drift_sign_violations(&f, &path).unwrap(), 0);
        let r = energy_bound_check(&f, &u, &path).unwrap();
        assert!(r.pass);
        // Kropina value of a unit drift is 1 / (2 |omega|)
        assert!(r.energy > 0.0 && r.energy < 0.125 + 1e-12);
    }

    #[test]
    fn bracket_maneuver_moves_transversally() {
        let f = heis();
        let x0 = [0.0, 0.0, 0.0];
        let (xi, a) = (0.1, 1.0);
        let alpha = [vec![a, 0.0], vec![0.0, a], vec![-a, 0.0], vec![0.0, -a]];
        let loop_sig = ControlSignal::piecewise_constant(&[xi; 4], &alpha);
        let drift_sig = ControlSignal::piecewise_constant(&[xi; 4], &vec![vec![0.0, 0.0]; 4]);
        let e1 = endpoint(&f, &x0, &loop_sig).unwrap();
        let e0 = endpoint(&f, &x0, &drift_sig).unwrap();
        let diff: Vec<f64> = e1.iter().zip(&e0).map(|(a, b)| a - b).collect();
        let m = f.manifold();
        let w = m.omega(&x0).unwrap();
        let transversal = (0..3).map(|k| w[k] * diff[k]).sum::<f64>().abs();
        let side = xi * a / 4.0;
        let fr = f.fields_at(&x0).unwrap();
        let jet = m.jet(&x0).unwrap();
        let expect = side * side * d_omega_from_jet(&jet, &fr[1][..3], &fr[2][..3]).abs();
        assert!((transversal - expect).abs() < 0.1 * expect, "{transversal} vs {expect}");
    }

    #[test]
    fn concatenation_is_flow_composition() {
        let f = heis();
        let x0 = [0.1, 0.0, -0.2];
        let u1 = ControlSignal::piecewise_constant(&[0.5, 0.3], &[vec![1.0, 0.5], vec![-0.2, 2.0]]);
        let u2 = ControlSignal::piecewise_constant(&[0.4], &[vec![0.0, -1.0]]);
        let mid = endpoint(&f, &x0, &u1).unwrap();
        let two = endpoint(&f, &mid, &u2).unwrap();
        let both = endpoint(&f, &x0, &u1.concat(&u2)).unwrap();
        for k in 0..3 {
            assert!((two[k] - both[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn inadmissible_signals_rejected() {
        let f = heis();
        let too_big = ControlSignal::piecewise_constant(&[1.0], &[vec![f.c, 0.1]]);
        assert!(matches!(endpoint(&f, &[0.0; 3], &too_big), Err(Error::InadmissibleControl(_))));
        let neg = ControlSignal::piecewise_constant(&[-1.0], &[vec![0.0, 0.0]]);
        assert!(matches!(endpoint(&f, &[0.0; 3], &neg), Err(Error::InadmissibleControl(_))));
    }

    #[test]
    fn reach_targets() {
        let f = heis();
        let x0 = [0.0, 0.0, 0.0];
        let opts = ReachOptions::default();
        let r = reach(&f, &x0, &x0, &opts).unwrap();
        assert_eq!(r.signal, ControlSignal::zero(2));
        let drift = ControlSignal::piecewise_constant(&[1.0], &[vec![0.0, 0.0]]);
        let target = endpoint(&f, &x0, &drift).unwrap();
        let r = reach(&f, &x0, &target, &opts).unwrap();
        assert!(r.distance < 1e-4);
        let r = reach(&f, &x0, &[0.0, 0.0, 0.05], &opts).unwrap();
        let e = endpoint(&f, &x0, &r.signal).unwrap();
        assert!((e[2] - 0.05).abs() < 1e-4 && e[0].abs() < 1e-4 && e[1].abs() < 1e-4);
        r.signal.check(f.c, 2).unwrap();
    }
}
