//! Chart representation of `(S, g0, omega, lambda)` and the built-in catalog.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::{Node, ScalarFieldExpr};
use crate::linalg::SmallMat;
use crate::{MAX_DIM, MAX_LIFT};

/// Coordinate identifications of the chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Topology {
    /// `R^m`, no identifications.
    Plane,
    /// First coordinate is an angle, `x ~ x + 2 pi`.
    Cylinder,
    /// First two coordinates are angles.
    Torus,
    /// The closed coordinate box is the whole manifold; points outside are rejected.
    BoundedBox,
}

impl Topology {
    /// Number of leading coordinates that are identified modulo `2 pi`.
    pub fn periodic_axes(self) -> usize {
        match self {
            Topology::Cylinder => 1,
            Topology::Torus => 2,
            Topology::Plane | Topology::BoundedBox => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Plane => "plane",
            Topology::Cylinder => "cylinder",
            Topology::Torus => "torus",
            Topology::BoundedBox => "bounded-box",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "plane" => Some(Topology::Plane),
            "cylinder" => Some(Topology::Cylinder),
            "torus" => Some(Topology::Torus),
            "bounded-box" => Some(Topology::BoundedBox),
            _ => None,
        }
    }
}

/// Coordinate box on which assumptions are checked.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Parameter("domain bounds need lo < hi on every axis".into()));
        }
        Ok(DomainBounds { lo, hi })
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        DomainBounds { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    /// Regular lattice with `n` points per axis (`n >= 2`), in row-major order.
    pub fn lattice(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.max(2);
        let dim = self.lo.len();
        let total = n.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; dim];
            for k in (0..dim).rev() {
                let i = idx % n;
                idx /= n;
                p[k] = self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (n - 1) as f64;
            }
            out.push(p);
        }
        out
    }
}

/// Pointwise values of the defining fields.
#[derive(Debug, Clone, Copy)]
pub struct PointFields {
    pub dim: usize,
    pub g: SmallMat,
    pub omega: [f64; MAX_DIM],
    pub lambda: f64,
}

impl PointFields {
    #[inline]
    pub fn g0(&self, u: &[f64], w: &[f64]) -> f64 {
        self.g.bilinear(u, w)
    }

    #[inline]
    pub fn omega_of(&self, v: &[f64]) -> f64 {
        (0..self.dim).map(|i| self.omega[i] * v[i]).sum()
    }
}

/// Fields together with their first partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FieldJet {
    pub fields: PointFields,
    /// `dg[k][i][j] = d_k g_ij`
    pub dg: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
    /// `domega[k][i] = d_k omega_i`
    pub domega: [[f64; MAX_DIM]; MAX_DIM],
    pub dlambda: [f64; MAX_DIM],
}

/// Christoffel symbols `gamma[k][i][j] = Gamma^k_ij` of an `n`-dimensional metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    pub gamma: [[[f64; MAX_LIFT]; MAX_LIFT]; MAX_LIFT],
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel { n, gamma: [[[0.0; MAX_LIFT]; MAX_LIFT]; MAX_LIFT] }
    }

    /// `Gamma^k(v, v)`.
    pub fn contract(&self, v: &[f64]) -> [f64; MAX_LIFT] {
        let mut out = [0.0; MAX_LIFT];
        for (k, o) in out.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for i in 0..self.n {
                for j in 0..self.n {
                    s += self.gamma[k][i][j] * v[i] * v[j];
                }
            }
            *o = s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.n {
            for i in 0..self.n {
                for j in 0..self.n {
                    m = m.max(self.gamma[k][i][j].abs());
                }
            }
        }
        m
    }

    /// Levi-Civita symbols from a metric matrix and its partials `dg[k][i][j] = d_k g_ij`.
    pub fn from_metric(g: &SmallMat, dg: &[[[f64; MAX_LIFT]; MAX_LIFT]; MAX_LIFT]) -> Result<Self> {
        let n = g.dim();
        let inv = g.inverse()?;
        let mut first = [[[0.0; MAX_LIFT]; MAX_LIFT]; MAX_LIFT];
        for (d, fd) in first.iter_mut().enumerate().take(n) {
            for i in 0..n {
                for j in 0..n {
                    fd[i][j] = 0.5 * (dg[i][d][j] + dg[j][d][i] - dg[d][i][j]);
                }
            }
        }
        let mut c = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let s: f64 = (0..n).map(|d| inv.get(k, d) * first[d][i][j]).sum();
                    c.gamma[k][i][j] = s;
                    c.gamma[k][j][i] = s;
                }
            }
        }
        Ok(c)
    }
}

/// Outcome of the sampled assumption checks on the domain box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionReport {
    pub samples: usize,
    pub g0_positive_definite: bool,
    pub lambda_nonnegative: bool,
    pub lorentz: bool,
    pub omega_nonzero: bool,
    pub nonintegrable: bool,
    pub min_lambda: f64,
    pub min_lorentz_margin: f64,
    pub min_omega_norm: f64,
    /// Sampled `sup |omega|`.
    pub omega_sup: f64,
    /// `sup |omega|` is attained on the boundary of the box and still growing there.
    pub omega_growth_at_boundary: bool,
    pub min_nonintegrability: f64,
}

impl AssumptionReport {
    /// The Lorentz and sign conditions needed by every metric computation.
    pub fn metric_ok(&self) -> bool {
        self.g0_positive_definite && self.lambda_nonnegative && self.lorentz
    }
}

/// `(S, g0, omega, lambda)` on a single chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartManifold {
    name: String,
    coords: Vec<String>,
    /// Upper triangle of `g0`, row-major.
    g0: Vec<ScalarFieldExpr>,
    omega: Vec<ScalarFieldExpr>,
    lambda: ScalarFieldExpr,
    topology: Topology,
    bounds: DomainBounds,
}

#[inline]
fn tri(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl ChartManifold {
    /// Build from expression sources. `g0` is either the full row-major `m x m` matrix
    /// (which must be symmetric as text) or its upper triangle.
    pub fn from_sources(
        name: &str,
        coords: &[&str],
        g0: &[&str],
        omega: &[&str],
        lambda: &str,
        topology: Topology,
        bounds: DomainBounds,
    ) -> Result<Self> {
        let dim = coords.len();
        let parse = |s: &str| ScalarFieldExpr::parse(s, coords);
        let g0_upper: Vec<&str> = if g0.len() == dim * dim {
            let mut up = Vec::new();
            for i in 0..dim {
                for j in i..dim {
                    if g0[i * dim + j].trim() != g0[j * dim + i].trim() {
                        let a = parse(g0[i * dim + j])?;
                        let b = parse(g0[j * dim + i])?;
                        if a != b {
                            return Err(Error::Parameter(format!(
                                "g0 is not symmetric in entries ({i},{j}) and ({j},{i})"
                            )));
                        }
                    }
                    up.push(g0[i * dim + j]);
                }
            }
            up
        } else if g0.len() == dim * (dim + 1) / 2 {
            g0.to_vec()
        } else {
            return Err(Error::Dimension { expected: dim * (dim + 1) / 2, got: g0.len() });
        };
        let g0 = g0_upper.into_iter().map(parse).collect::<Result<Vec<_>>>()?;
        let omega = omega.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        let lambda = parse(lambda)?;
        Self::from_exprs(name, coords, g0, omega, lambda, topology, bounds)
    }

    pub fn from_exprs(
        name: &str,
        coords: &[&str],
        g0_upper: Vec<ScalarFieldExpr>,
        omega: Vec<ScalarFieldExpr>,
        lambda: ScalarFieldExpr,
        topology: Topology,
        bounds: DomainBounds,
    ) -> Result<Self> {
        let dim = coords.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Parameter(format!("chart dimension must be between 2 and {MAX_DIM}, got {dim}")));
        }
        if g0_upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Dimension { expected: dim * (dim + 1) / 2, got: g0_upper.len() });
        }
        if omega.len() != dim {
            return Err(Error::Dimension { expected: dim, got: omega.len() });
        }
        if bounds.lo.len() != dim {
            return Err(Error::Dimension { expected: dim, got: bounds.lo.len() });
        }
        if topology.periodic_axes() > dim {
            return Err(Error::Parameter("torus topology needs at least two coordinates".into()));
        }
        Ok(ChartManifold {
            name: name.to_string(),
            coords: coords.iter().map(|s| s.to_string()).collect(),
            g0: g0_upper,
            omega,
            lambda,
            topology,
            bounds,
        })
    }

    /// Navigation data: `omega = -g0(., W)`, `lambda = 1 - g0(W, W)`.
    ///
    /// Rejects winds with `g0(W,W) > 1` anywhere on a lattice over the domain box.
    pub fn from_zermelo(
        name: &str,
        coords: &[&str],
        g0: &[&str],
        wind: &[&str],
        topology: Topology,
        bounds: DomainBounds,
    ) -> Result<Self> {
        let dim = coords.len();
        if wind.len() != dim {
            return Err(Error::Dimension { expected: dim, got: wind.len() });
        }
        let w = wind.iter().map(|s| ScalarFieldExpr::parse(s, coords)).collect::<Result<Vec<_>>>()?;
        // Parse g0 through the regular path with placeholder omega and lambda.
        let base = Self::from_sources(name, coords, g0, &vec!["0"; dim], "0", topology, bounds)?;
        let names: Vec<String> = base.coords.clone();
        let gij = |i: usize, j: usize| base.g0[tri(dim, i, j)].node().clone();
        let mul = |a: Node, b: Node| Node::Mul(Box::new(a), Box::new(b));
        let add = |a: Node, b: Node| Node::Add(Box::new(a), Box::new(b));
        let mut omega = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut acc = Node::Const(0.0);
            for (j, wj) in w.iter().enumerate() {
                acc = add(acc, mul(gij(i, j), wj.node().clone()));
            }
            omega.push(ScalarFieldExpr::from_node(Node::Neg(Box::new(acc)), &names));
        }
        let mut norm = Node::Const(0.0);
        for i in 0..dim {
            for j in 0..dim {
                norm = add(norm, mul(gij(i, j), mul(w[i].node().clone(), w[j].node().clone())));
            }
        }
        let norm_expr = ScalarFieldExpr::from_node(norm.clone(), &names);
        let lambda = ScalarFieldExpr::from_node(Node::Sub(Box::new(Node::Const(1.0)), Box::new(norm)), &names);
        let m = ChartManifold { omega, lambda, ..base };
        for p in m.bounds.lattice(assumption_lattice(dim)) {
            let n = norm_expr.eval(&p);
            if n > 1.0 + 1e-12 {
                return Err(Error::UnsupportedWind { point: p, norm_sq: n });
            }
        }
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn bounds(&self) -> &DomainBounds {
        &self.bounds
    }

    pub fn g0_expr(&self, i: usize, j: usize) -> &ScalarFieldExpr {
        &self.g0[tri(self.dim(), i, j)]
    }

    pub fn omega_expr(&self, i: usize) -> &ScalarFieldExpr {
        &self.omega[i]
    }

    pub fn lambda_expr(&self) -> &ScalarFieldExpr {
        &self.lambda
    }

    /// Same manifold with a different lambda field (used for perturbation fixtures).
    pub fn with_lambda(&self, lambda: ScalarFieldExpr) -> Self {
        ChartManifold { lambda, ..self.clone() }
    }

    pub fn with_bounds(&self, bounds: DomainBounds) -> Result<Self> {
        if bounds.lo.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: bounds.lo.len() });
        }
        Ok(ChartManifold { bounds, ..self.clone() })
    }

    /// Domain check: dimension, finiteness, and containment for bounded boxes.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite())
            || (self.topology == Topology::BoundedBox && !self.bounds.contains(x, 1e-12))
        {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Canonical representative: periodic coordinates reduced to `[0, 2 pi)`.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for v in y.iter_mut().take(self.topology.periodic_axes()) {
            *v = rem_euclid(*v, 2.0 * PI);
        }
        y
    }

    pub fn fields(&self, x: &[f64]) -> Result<PointFields> {
        self.check_point(x)?;
        let dim = self.dim();
        let mut g = SmallMat::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = self.g0[tri(dim, i, j)].eval(x);
                g.set(i, j, v);
                g.set(j, i, v);
            }
        }
        let mut omega = [0.0; MAX_DIM];
        for (o, e) in omega.iter_mut().zip(&self.omega) {
            *o = e.eval(x);
        }
        Ok(PointFields { dim, g, omega, lambda: self.lambda.eval(x) })
    }

    pub fn jet(&self, x: &[f64]) -> Result<FieldJet> {
        self.check_point(x)?;
        let dim = self.dim();
        let mut g = SmallMat::zeros(dim);
        let mut dg = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in i..dim {
                let d = self.g0[tri(dim, i, j)].eval_dual(x);
                g.set(i, j, d.v);
                g.set(j, i, d.v);
                for (k, dgk) in dg.iter_mut().enumerate().take(dim) {
                    dgk[i][j] = d.g[k];
                    dgk[j][i] = d.g[k];
                }
            }
        }
        let mut omega = [0.0; MAX_DIM];
        let mut domega = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            let d = self.omega[i].eval_dual(x);
            omega[i] = d.v;
            for (k, dk) in domega.iter_mut().enumerate().take(dim) {
                dk[i] = d.g[k];
            }
        }
        let l = self.lambda.eval_dual(x);
        Ok(FieldJet { fields: PointFields { dim, g, omega, lambda: l.v }, dg, domega, dlambda: l.g })
    }

    pub fn eval_g0(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        self.check_vector(u)?;
        self.check_vector(w)?;
        Ok(self.fields(x)?.g0(u, w))
    }

    pub fn metric_matrix(&self, x: &[f64]) -> Result<SmallMat> {
        Ok(self.fields(x)?.g)
    }

    pub fn lambda(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.lambda.eval(x))
    }

    pub fn omega(&self, x: &[f64]) -> Result<[f64; MAX_DIM]> {
        Ok(self.fields(x)?.omega)
    }

    fn check_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() < self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    pub fn christoffel_g0(&self, x: &[f64]) -> Result<Christoffel> {
        let jet = self.jet(x)?;
        let dim = self.dim();
        let mut dg = [[[0.0; MAX_LIFT]; MAX_LIFT]; MAX_LIFT];
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    dg[k][i][j] = jet.dg[k][i][j];
                }
            }
        }
        Christoffel::from_metric(&jet.fields.g, &dg)
    }

    /// `d omega(u, w) = sum (d_i omega_j - d_j omega_i) u^i w^j`.
    pub fn d_omega(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        let jet = self.jet(x)?;
        Ok(d_omega_from_jet(&jet, u, w))
    }

    pub fn sharp(&self, x: &[f64], alpha: &[f64]) -> Result<[f64; MAX_DIM]> {
        self.check_vector(alpha)?;
        let f = self.fields(x)?;
        Ok(sharp_with(&f.g, alpha))
    }

    pub fn flat(&self, x: &[f64], v: &[f64]) -> Result<[f64; MAX_DIM]> {
        self.check_vector(v)?;
        let g = self.metric_matrix(x)?;
        let gv = g.mul_vec(v);
        let mut out = [0.0; MAX_DIM];
        out[..self.dim()].copy_from_slice(&gv[..self.dim()]);
        Ok(out)
    }

    pub fn grad_lambda(&self, x: &[f64]) -> Result<[f64; MAX_DIM]> {
        let jet = self.jet(x)?;
        Ok(sharp_with(&jet.fields.g, &jet.dlambda[..self.dim()]))
    }

    /// `g0`-norm of `omega` at `x`.
    pub fn omega_norm(&self, x: &[f64]) -> Result<f64> {
        let f = self.fields(x)?;
        let s = sharp_with(&f.g, &f.omega[..self.dim()]);
        Ok(f.omega_of(&s).max(0.0).sqrt())
    }

    /// Norm of the three-form `omega ^ d omega` in coordinates; zero in dimension 2.
    pub fn nonintegrability(&self, x: &[f64]) -> Result<f64> {
        let jet = self.jet(x)?;
        Ok(nonintegrability_from_jet(&jet))
    }

    /// Sampled checks of the standing assumptions on the domain box.
    pub fn check_assumptions(&self) -> Result<AssumptionReport> {
        let dim = self.dim();
        let n = assumption_lattice(dim);
        let pts = self.bounds.lattice(n);
        let mut r = AssumptionReport {
            samples: pts.len(),
            g0_positive_definite: true,
            lambda_nonnegative: true,
            lorentz: true,
            omega_nonzero: true,
            nonintegrable: true,
            min_lambda: f64::INFINITY,
            min_lorentz_margin: f64::INFINITY,
            min_omega_norm: f64::INFINITY,
            omega_sup: 0.0,
            omega_growth_at_boundary: false,
            min_nonintegrability: f64::INFINITY,
        };
        let mut argmax_on_boundary = false;
        for p in &pts {
            let jet = self.jet(p)?;
            let f = &jet.fields;
            if f.g.cholesky().is_none() {
                r.g0_positive_definite = false;
                continue;
            }
            let s = sharp_with(&f.g, &f.omega[..dim]);
            let norm_sq = f.omega_of(&s).max(0.0);
            let norm = norm_sq.sqrt();
            r.min_lambda = r.min_lambda.min(f.lambda);
            r.min_lorentz_margin = r.min_lorentz_margin.min(f.lambda + norm_sq);
            r.min_omega_norm = r.min_omega_norm.min(norm);
            if norm > r.omega_sup {
                r.omega_sup = norm;
                argmax_on_boundary = (0..dim).any(|k| p[k] == self.bounds.lo[k] || p[k] == self.bounds.hi[k]);
            }
            r.min_nonintegrability = r.min_nonintegrability.min(nonintegrability_from_jet(&jet));
        }
        r.lambda_nonnegative = r.min_lambda >= -1e-12;
        r.lorentz = r.min_lorentz_margin > 1e-12;
        r.omega_nonzero = r.min_omega_norm > 1e-12;
        r.nonintegrable = r.min_nonintegrability > 1e-10;
        if argmax_on_boundary {
            // Compare against a slightly enlarged box to see whether |omega| keeps growing.
            let grown = DomainBounds {
                lo: self.bounds.lo.iter().zip(&self.bounds.hi).map(|(a, b)| a - 0.25 * (b - a)).collect(),
                hi: self.bounds.lo.iter().zip(&self.bounds.hi).map(|(a, b)| b + 0.25 * (b - a)).collect(),
            };
            let probe = ChartManifold { topology: Topology::Plane, bounds: grown.clone(), ..self.clone() };
            let mut sup = 0.0f64;
            for p in grown.lattice(n.min(9)) {
                sup = sup.max(probe.omega_norm(&p)?);
            }
            r.omega_growth_at_boundary = sup > r.omega_sup * (1.0 + 1e-9);
        }
        Ok(r)
    }
}

/// `a mod b` in `[0, b)`.
pub(crate) fn rem_euclid(a: f64, b: f64) -> f64 {
    let r = a % b;
    let r = if r < 0.0 { r + b } else { r };
    if r >= b {
        0.0
    } else {
        r
    }
}

fn assumption_lattice(dim: usize) -> usize {
    match dim {
        2 => 41,
        3 => 17,
        _ => 9,
    }
}

pub(crate) fn sharp_with(g: &SmallMat, alpha: &[f64]) -> [f64; MAX_DIM] {
    let dim = g.dim();
    let mut out = [0.0; MAX_DIM];
    if let Ok(lu) = g.lu() {
        let s = lu.solve(alpha);
        out[..dim].copy_from_slice(&s[..dim]);
    } else {
        for v in out.iter_mut() {
            *v = f64::NAN;
        }
    }
    out
}

pub(crate) fn d_omega_from_jet(jet: &FieldJet, u: &[f64], w: &[f64]) -> f64 {
    let dim = jet.fields.dim;
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += (jet.domega[i][j] - jet.domega[j][i]) * u[i] * w[j];
        }
    }
    s
}

fn nonintegrability_from_jet(jet: &FieldJet) -> f64 {
    let dim = jet.fields.dim;
    let w = &jet.fields.omega;
    let d = |a: usize, b: usize| jet.domega[a][b] - jet.domega[b][a];
    let mut s = 0.0;
    for i in 0..dim {
        for j in i + 1..dim {
            for k in j + 1..dim {
                let c = w[i] * d(j, k) - w[j] * d(i, k) + w[k] * d(i, j);
                s += c * c;
            }
        }
    }
    s.sqrt()
}

/// Built-in manifolds.
#[derive(Debug, Clone, Copy)]
pub struct Catalog;

impl Catalog {
    pub const NAMES: [&'static str; 6] =
        ["euclidean-plane", "constant-wind-plane", "flat-cylinder-wind", "kropina-plane", "heisenberg", "polar-plane"];

    /// Look up a catalog entry; `param` is the wind strength where applicable.
    pub fn build(name: &str, param: Option<f64>) -> Result<ChartManifold> {
        match name {
            "euclidean-plane" => Ok(Self::euclidean_plane()),
            "constant-wind-plane" => Self::constant_wind_plane(param.unwrap_or(0.5)),
            "flat-cylinder-wind" => Self::flat_cylinder_wind(param.unwrap_or(0.5)),
            "kropina-plane" => Ok(Self::kropina_plane()),
            "heisenberg" => Ok(Self::heisenberg()),
            "polar-plane" => Ok(Self::polar_plane()),
            _ => Err(Error::Parameter(format!("unknown catalog manifold `{name}`"))),
        }
    }

    pub fn all() -> Vec<ChartManifold> {
        Self::NAMES.iter().map(|n| Self::build(n, None).expect("catalog entries build")).collect()
    }

    /// `R^2`, `omega = 0`, `lambda = 1`: `F` is the Euclidean norm.
    pub fn euclidean_plane() -> ChartManifold {
        ChartManifold::from_sources(
            "euclidean-plane",
            &["x", "y"],
            &["1", "0", "1"],
            &["0", "0"],
            "1",
            Topology::Plane,
            DomainBounds::cube(2, 5.0),
        )
        .expect("valid catalog entry")
    }

    /// Constant wind `W = (w, 0)` on the Euclidean plane, `0 <= w <= 1`.
    pub fn constant_wind_plane(w: f64) -> Result<ChartManifold> {
        check_wind(w)?;
        let ws = format!("{w:?}");
        ChartManifold::from_zermelo(
            "constant-wind-plane",
            &["x", "y"],
            &["1", "0", "1"],
            &[&ws, "0"],
            Topology::Plane,
            DomainBounds::cube(2, 5.0),
        )
    }

    /// Flat cylinder `(theta, y)`, theta periodic, with wind `w` along the angle.
    pub fn flat_cylinder_wind(w: f64) -> Result<ChartManifold> {
        check_wind(w)?;
        let ws = format!("{w:?}");
        ChartManifold::from_zermelo(
            "flat-cylinder-wind",
            &["theta", "y"],
            &["1", "0", "1"],
            &[&ws, "0"],
            Topology::Cylinder,
            DomainBounds::new(vec![0.0, -3.0], vec![2.0 * PI, 3.0])?,
        )
    }

    /// Critical wind `W = (1, 0)`: `omega = -dx`, `lambda = 0`, a Kropina metric.
    pub fn kropina_plane() -> ChartManifold {
        ChartManifold::from_sources(
            "kropina-plane",
            &["x", "y"],
            &["1", "0", "1"],
            &["-1", "0"],
            "0",
            Topology::Plane,
            DomainBounds::cube(2, 5.0),
        )
        .expect("valid catalog entry")
    }

    /// Contact form `dz - (x dy - y dx)/2` on the unit cube, `lambda = 0`.
    pub fn heisenberg() -> ChartManifold {
        ChartManifold::from_sources(
            "heisenberg",
            &["x", "y", "z"],
            &["1", "0", "0", "1", "0", "1"],
            &["y / 2", "-x / 2", "1"],
            "0",
            Topology::BoundedBox,
            DomainBounds::cube(3, 1.0),
        )
        .expect("valid catalog entry")
    }

    /// Polar coordinates `(r, theta)` on an annulus with radial wind of strength 1/2.
    pub fn polar_plane() -> ChartManifold {
        ChartManifold::from_sources(
            "polar-plane",
            &["r", "theta"],
            &["1", "0", "r^2"],
            &["-0.5", "0"],
            "0.75",
            Topology::BoundedBox,
            DomainBounds::new(vec![0.5, -PI], vec![2.0, PI]).expect("valid bounds"),
        )
        .expect("valid catalog entry")
    }
}

fn check_wind(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::UnsupportedWind { point: Vec::new(), norm_sq: w * w });
    }
    Ok(())
}
