//! The metric `F`, its regularizations `F_eps`, length/energy functionals and a
//! grid-distance probe for compactness of balls.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::manifold::{ChartManifold, PointFields, Topology};
use crate::path::GeodesicPath;

/// Threshold below which `lambda(x)` is treated as zero.
pub const LAMBDA_TOL: f64 = 1e-12;

/// Squared `g0`-norm below which a velocity counts as the zero vector.
pub const ZERO_VELOCITY_SQ: f64 = 1e-28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Branch {
    Randers,
    Kropina,
    /// `v = 0`: value 0 where `lambda > 0`, undefined where `lambda = 0`.
    ZeroVector,
    /// `v` lies outside the admissible set.
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinslerValue {
    pub value: Option<f64>,
    pub branch: Branch,
}

/// A base point with a tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl TangentSample {
    pub fn new(x: &[f64], v: &[f64]) -> Self {
        TangentSample { x: x.to_vec(), v: v.to_vec() }
    }
}

/// `F` from the scalars `g0(v,v)`, `omega(v)` and `lambda`.
///
/// The unified formula is used when `omega(v) <= 0`; for `omega(v) > 0` (only
/// possible on the Randers branch) the algebraically equal form
/// `(omega + sqrt(lambda g + omega^2)) / lambda` avoids cancellation.
pub fn f_scalar(gvv: f64, wv: f64, lambda: f64) -> FinslerValue {
    if gvv <= ZERO_VELOCITY_SQ {
        let value = if lambda > LAMBDA_TOL { Some(0.0) } else { None };
        return FinslerValue { value, branch: Branch::ZeroVector };
    }
    if lambda <= LAMBDA_TOL {
        if wv < 0.0 {
            let root = (lambda.max(0.0) * gvv + wv * wv).sqrt();
            return FinslerValue { value: Some(gvv / (root - wv)), branch: Branch::Kropina };
        }
        return FinslerValue { value: None, branch: Branch::Outside };
    }
    FinslerValue { value: Some(randers_scalar(gvv, wv, lambda)), branch: Branch::Randers }
}

#[inline]
fn randers_scalar(gvv: f64, wv: f64, lambda: f64) -> f64 {
    let root = (lambda * gvv + wv * wv).sqrt();
    if wv <= 0.0 {
        gvv / (root - wv)
    } else {
        (wv + root) / lambda
    }
}

/// `F_eps` from scalars; `eps > 0` is not checked here.
#[inline]
pub fn f_eps_scalar(gvv: f64, wv: f64, lambda: f64, eps: f64) -> f64 {
    if gvv <= 0.0 {
        return 0.0;
    }
    randers_scalar(gvv, wv, lambda + eps)
}

pub fn eval_f(m: &ChartManifold, x: &[f64], v: &[f64]) -> Result<FinslerValue> {
    let f = m.fields(x)?;
    check_len(m, v)?;
    Ok(f_scalar(f.g0(v, v), f.omega_of(v), f.lambda))
}

pub fn eval_f_eps(m: &ChartManifold, x: &[f64], v: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let f = m.fields(x)?;
    check_len(m, v)?;
    Ok(f_eps_scalar(f.g0(v, v), f.omega_of(v), f.lambda, eps))
}

/// `F_eps` for `eps > 0`, `F` for `eps = 0` (`None` outside the admissible set).
pub fn eval_f_any(f: &PointFields, v: &[f64], eps: f64) -> Option<f64> {
    let gvv = f.g0(v, v);
    let wv = f.omega_of(v);
    if eps > 0.0 {
        Some(f_eps_scalar(gvv, wv, f.lambda, eps))
    } else {
        f_scalar(gvv, wv, f.lambda).value
    }
}

/// Positive `tau` making `(v, tau)` lightlike for `g_eps`:
/// `g0(v,v) + 2 omega(v) tau - (lambda + eps) tau^2 = 0`.
pub fn lightlike_root(m: &ChartManifold, x: &[f64], v: &[f64], eps: f64) -> Result<Option<f64>> {
    if eps < 0.0 {
        return Err(Error::Parameter("eps must be nonnegative".into()));
    }
    let f = m.fields(x)?;
    check_len(m, v)?;
    Ok(lightlike_root_scalar(f.g0(v, v), f.omega_of(v), f.lambda, eps))
}

pub fn lightlike_root_scalar(gvv: f64, wv: f64, lambda: f64, eps: f64) -> Option<f64> {
    if gvv <= ZERO_VELOCITY_SQ {
        return None;
    }
    let a = lambda + eps;
    if eps == 0.0 && lambda <= LAMBDA_TOL && wv >= 0.0 {
        return None;
    }
    if a == 0.0 {
        // 2 omega tau = -g
        return if wv < 0.0 { Some(-gvv / (2.0 * wv)) } else { None };
    }
    let b = -2.0 * wv;
    let c = -gvv;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + if b >= 0.0 { disc.sqrt() } else { -disc.sqrt() });
    let r1 = q / a;
    let r2 = c / q;
    let r = r1.max(r2);
    if r > 0.0 {
        Some(r)
    } else {
        None
    }
}

/// `h_eps(u, w) = (lambda + eps) g0(u, w) + omega(u) omega(w)`.
pub fn eval_h_eps(m: &ChartManifold, x: &[f64], u: &[f64], w: &[f64], eps: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(Error::Parameter("eps must be nonnegative".into()));
    }
    let f = m.fields(x)?;
    check_len(m, u)?;
    check_len(m, w)?;
    Ok((f.lambda + eps) * f.g0(u, w) + f.omega_of(u) * f.omega_of(w))
}

/// Literal Randers branch `R = (omega + sqrt(lambda g + omega^2)) / lambda`, evaluated
/// in double-double arithmetic so that the cancellation for `omega < 0` is harmless.
pub fn randers_norm(gvv: f64, wv: f64, lambda: f64) -> f64 {
    let (p1, e1) = two_prod(lambda, gvv);
    let (p2, e2) = two_prod(wv, wv);
    let (s, e) = two_sum(p1, p2);
    let (rh, rl) = dd_sqrt(s, e + e1 + e2);
    let (a, b) = two_sum(wv, rh);
    (a + (b + rl)) / lambda
}

/// Kropina branch `K = -g0(v,v) / (2 omega(v))`.
pub fn kropina_norm(gvv: f64, wv: f64) -> f64 {
    -gvv / (2.0 * wv)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn dd_sqrt(hi: f64, lo: f64) -> (f64, f64) {
    if hi <= 0.0 {
        return (0.0, 0.0);
    }
    let s = hi.sqrt();
    let (p, e) = two_prod(s, s);
    let r = ((hi - p) - e) + lo;
    two_sum(s, r / (2.0 * s))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter("eps must be positive".into()));
    }
    Ok(())
}

fn check_len(m: &ChartManifold, v: &[f64]) -> Result<()> {
    if v.len() != m.dim() {
        return Err(Error::Dimension { expected: m.dim(), got: v.len() });
    }
    Ok(())
}

/// Length and energy of a sampled curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthEnergy {
    pub length: f64,
    /// `E = 1/2 int_0^1 F^2` after affinely mapping the parameter range to `[0, 1]`.
    pub energy: f64,
    /// Samples where the velocity vanished on the Kropina branch and the
    /// zero-section value 1 entered the energy.
    pub zero_velocity_samples: Vec<usize>,
}

/// Composite Simpson quadrature of `F_eps` (or `F` when `eps = 0`) along the samples.
pub fn curve_length_energy(m: &ChartManifold, path: &GeodesicPath, eps: f64) -> Result<LengthEnergy> {
    if eps < 0.0 {
        return Err(Error::Parameter("eps must be nonnegative".into()));
    }
    let n = path.samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    let mut s = Vec::with_capacity(n);
    let mut fl = Vec::with_capacity(n);
    let mut fe = Vec::with_capacity(n);
    let mut zero = Vec::new();
    for (index, p) in path.samples.iter().enumerate() {
        let f = m.fields(&p.x)?;
        let gvv = f.g0(&p.v, &p.v);
        let (len_val, en_val) = if eps > 0.0 {
            let v = f_eps_scalar(gvv, f.omega_of(&p.v), f.lambda, eps);
            (v, v)
        } else {
            let fv = f_scalar(gvv, f.omega_of(&p.v), f.lambda);
            match (fv.value, fv.branch) {
                (Some(v), _) => (v, v),
                (None, Branch::ZeroVector) => {
                    zero.push(index);
                    (0.0, 1.0)
                }
                _ => return Err(Error::Inadmissible { index }),
            }
        };
        s.push(p.s);
        fl.push(len_val);
        fe.push(en_val * en_val);
    }
    let span = s[n - 1] - s[0];
    Ok(LengthEnergy { length: simpson(&s, &fl), energy: 0.5 * span * simpson(&s, &fe), zero_velocity_samples: zero })
}

/// Composite Simpson rule on possibly nonuniform nodes. An odd trailing interval is
/// integrated with the quadratic through the last three nodes.
pub fn simpson(s: &[f64], f: &[f64]) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (s[1] - s[0]) * (f[0] + f[1]);
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += simpson_pair(s[i], s[i + 1], s[i + 2], f[i], f[i + 1], f[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // last single interval [s[i], s[i+1]] via quadratic through i-1, i, i+1
        let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
        let (fa, fb, fc) = (f[i - 1], f[i], f[i + 1]);
        let h0 = b - a;
        let h1 = c - b;
        // integral over [b, c] of the interpolating quadratic
        let wc = h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1));
        let wb = h1 * (h1 + 3.0 * h0) / (6.0 * h0);
        let wa = -h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        total += wa * fa + wb * fb + wc * fc;
    }
    total
}

fn simpson_pair(a: f64, b: f64, c: f64, fa: f64, fb: f64, fc: f64) -> f64 {
    let h0 = b - a;
    let h1 = c - b;
    let h = h0 + h1;
    h / 6.0 * ((2.0 - h1 / h0) * fa + h * h / (h0 * h1) * fb + (2.0 - h0 / h1) * fc)
}

/// Result of [`ball_compactness_probe`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BallProbe {
    /// Grid distance from `x0` to `x1`.
    pub d_forward: f64,
    /// Grid distance from `x1` back to `x0`.
    pub d_backward: f64,
    /// `B+(x0, r)` intersected with `B-(x1, r)` avoids the boundary of the grid.
    pub contained: bool,
    /// The intersection reached the grid boundary, so nothing can be concluded.
    pub inconclusive: bool,
    pub intersection_nodes: usize,
    pub grid_spacing: Vec<f64>,
}

struct Grid {
    n: usize,
    dim: usize,
    periodic: usize,
    lo: Vec<f64>,
    h: Vec<f64>,
}

impl Grid {
    fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            c[k] = idx % self.n;
            idx /= self.n;
        }
        c
    }

    fn index(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, &ci| acc * self.n + ci)
    }

    fn point(&self, c: &[usize]) -> Vec<f64> {
        (0..self.dim).map(|k| self.lo[k] + self.h[k] * c[k] as f64).collect()
    }

    fn nearest(&self, x: &[f64]) -> usize {
        let c: Vec<usize> = (0..self.dim)
            .map(|k| {
                let mut t = (x[k] - self.lo[k]) / self.h[k];
                if k < self.periodic {
                    t = crate::manifold::rem_euclid(t, self.n as f64);
                }
                let i = t.round().max(0.0) as usize;
                if k < self.periodic {
                    i % self.n
                } else {
                    i.min(self.n - 1)
                }
            })
            .collect();
        self.index(&c)
    }

    fn on_boundary(&self, c: &[usize]) -> bool {
        (self.periodic..self.dim).any(|k| c[k] == 0 || c[k] == self.n - 1)
    }

    /// Neighbours with their displacement vectors.
    fn neighbours(&self, c: &[usize]) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::new();
        let count = 3usize.pow(self.dim as u32);
        'outer: for code in 0..count {
            let mut code_rest = code;
            let mut nc = vec![0usize; self.dim];
            let mut disp = vec![0.0; self.dim];
            let mut all_zero = true;
            for k in 0..self.dim {
                let d = (code_rest % 3) as i64 - 1;
                code_rest /= 3;
                if d != 0 {
                    all_zero = false;
                }
                let mut j = c[k] as i64 + d;
                if k < self.periodic {
                    j = j.rem_euclid(self.n as i64);
                } else if j < 0 || j >= self.n as i64 {
                    continue 'outer;
                }
                nc[k] = j as usize;
                disp[k] = d as f64 * self.h[k];
            }
            if !all_zero {
                out.push((self.index(&nc), disp));
            }
        }
        out
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Grid Dijkstra estimate of the non-symmetric distance `d_eps_bar`, and a check of
/// whether `B+(x0, r) ∩ B-(x1, r)` stays inside the domain box.
///
/// The grid has `grid_n` nodes per axis over the domain box (8-connected in 2-D,
/// 26-connected in 3-D), with edge weights `F_eps_bar` of the displacement at the
/// edge midpoint. Periodic axes wrap around.
pub fn ball_compactness_probe(
    m: &ChartManifold,
    x0: &[f64],
    x1: &[f64],
    r: f64,
    eps_bar: f64,
    grid_n: usize,
) -> Result<BallProbe> {
    check_eps(eps_bar)?;
    if grid_n < 3 {
        return Err(Error::Parameter("grid needs at least 3 nodes per axis".into()));
    }
    check_len(m, x0)?;
    check_len(m, x1)?;
    let dim = m.dim();
    let periodic = m.topology().periodic_axes();
    let b = m.bounds();
    let h: Vec<f64> = (0..dim)
        .map(|k| {
            let span = b.hi[k] - b.lo[k];
            if k < periodic {
                span / grid_n as f64
            } else {
                span / (grid_n - 1) as f64
            }
        })
        .collect();
    let grid = Grid { n: grid_n, dim, periodic, lo: b.lo.clone(), h };
    let total = grid_n.pow(dim as u32);
    // Forward adjacency with weights, shared by both searches.
    let mut adj: Vec<Vec<(usize, f64)>> = Vec::with_capacity(total);
    let eval_point = |p: &[f64]| -> Result<PointFields> {
        if m.topology() == Topology::BoundedBox {
            let q: Vec<f64> = p.iter().zip(b.lo.iter().zip(&b.hi)).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
            m.fields(&q)
        } else {
            m.fields(p)
        }
    };
    for idx in 0..total {
        let c = grid.coords(idx);
        let p = grid.point(&c);
        let mut edges = Vec::new();
        for (j, disp) in grid.neighbours(&c) {
            let mid: Vec<f64> = p.iter().zip(&disp).map(|(a, d)| a + 0.5 * d).collect();
            let f = eval_point(&mid)?;
            edges.push((j, f_eps_scalar(f.g0(&disp, &disp), f.omega_of(&disp), f.lambda, eps_bar)));
        }
        adj.push(edges);
    }
    let mut radj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
    for (i, edges) in adj.iter().enumerate() {
        for &(j, w) in edges {
            radj[j].push((i, w));
        }
    }
    let s0 = grid.nearest(x0);
    let s1 = grid.nearest(x1);
    let fwd = dijkstra(&adj, s0);
    let bwd_to_x1 = dijkstra(&radj, s1);
    let bwd_from_x1 = dijkstra(&adj, s1);
    let mut nodes = 0;
    let mut touches = false;
    for idx in 0..total {
        if fwd[idx] <= r && bwd_to_x1[idx] <= r {
            nodes += 1;
            if grid.on_boundary(&grid.coords(idx)) {
                touches = true;
            }
        }
    }
    Ok(BallProbe {
        d_forward: fwd[s1],
        d_backward: bwd_from_x1[s0],
        contained: !touches,
        inconclusive: touches,
        intersection_nodes: nodes,
        grid_spacing: grid.h,
    })
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    dist
}
