//! The stationary lift `g_eps = g0 + omega (x) dt + dt (x) omega - (lambda + eps) dt^2`
//! on `S x R`.
//!
//! Lifted vectors are written `(v, vt)` with `v` the spatial part and `vt = dt(w)`;
//! lifted coordinate index `m` is the time coordinate.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{SmallMat, Vector};
use crate::manifold::{ChartManifold, Christoffel, FieldJet, PointFields};
use crate::MAX_LIFT;

/// Band on `g_eps(w,w)` (for `w` normalized in `g0 + dt^2`) treated as lightlike.
pub const LIGHTLIKE_BAND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpacetimeState {
    pub x: Vec<f64>,
    pub t: f64,
    pub xdot: Vec<f64>,
    pub tdot: f64,
}

impl SpacetimeState {
    pub fn new(x: &[f64], t: f64, xdot: &[f64], tdot: f64) -> Self {
        SpacetimeState { x: x.to_vec(), t, xdot: xdot.to_vec(), tdot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CausalKind {
    Timelike,
    Lightlike,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Orientation {
    Future,
    Past,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CausalLabel {
    pub kind: CausalKind,
    pub orientation: Orientation,
}

#[inline]
pub(crate) fn g_eps_with(f: &PointFields, u: &[f64], ut: f64, w: &[f64], wt: f64, eps: f64) -> f64 {
    f.g0(u, w) + f.omega_of(u) * wt + ut * f.omega_of(w) - (f.lambda + eps) * ut * wt
}

/// `g_eps((u, ut), (w, wt))` at `x`.
pub fn eval_g_eps(m: &ChartManifold, x: &[f64], u: (&[f64], f64), w: (&[f64], f64), eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let f = m.fields(x)?;
    check_len(m, u.0)?;
    check_len(m, w.0)?;
    Ok(g_eps_with(&f, u.0, u.1, w.0, w.1, eps))
}

pub(crate) fn classify_with(f: &PointFields, v: &[f64], vt: f64, eps: f64) -> Result<CausalLabel> {
    let norm_sq = f.g0(v, v) + vt * vt;
    if !(norm_sq > 0.0) {
        return Err(Error::Degenerate("causal character of the zero vector".into()));
    }
    let q = g_eps_with(f, v, vt, v, vt, eps) / norm_sq;
    let kind = if q.abs() <= LIGHTLIKE_BAND {
        CausalKind::Lightlike
    } else if q < 0.0 {
        CausalKind::Timelike
    } else {
        CausalKind::Spacelike
    };
    let orientation = match kind {
        CausalKind::Spacelike => Orientation::None,
        _ if vt > 0.0 => Orientation::Future,
        _ if vt < 0.0 => Orientation::Past,
        _ => Orientation::None,
    };
    Ok(CausalLabel { kind, orientation })
}

/// Causal character with respect to `g_eps`; time orientation by the sign of `dt(w)`.
pub fn classify(m: &ChartManifold, x: &[f64], w: (&[f64], f64), eps: f64) -> Result<CausalLabel> {
    check_eps(eps)?;
    let f = m.fields(x)?;
    check_len(m, w.0)?;
    classify_with(&f, w.0, w.1, eps)
}

/// `C = g_eps(w, d/dt) = omega(v) - (lambda + eps) vt`, conserved along geodesics.
pub fn conserved_c(m: &ChartManifold, x: &[f64], w: (&[f64], f64), eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let f = m.fields(x)?;
    check_len(m, w.0)?;
    Ok(f.omega_of(w.0) - (f.lambda + eps) * w.1)
}

/// The `(m+1) x (m+1)` matrix of `g_eps` and its partial derivatives (`d_t` vanishes).
#[derive(Debug, Clone, Copy)]
pub struct LiftedMetric {
    pub g: SmallMat,
    pub dg: [[[f64; MAX_LIFT]; MAX_LIFT]; MAX_LIFT],
}

impl LiftedMetric {
    pub fn from_jet(jet: &FieldJet, eps: f64) -> Self {
        let m = jet.fields.dim;
        let n = m + 1;
        let f = &jet.fields;
        let mut g = SmallMat::zeros(n);
        let mut dg = [[[0.0; MAX_LIFT]; MAX_LIFT]; MAX_LIFT];
        for i in 0..m {
            for j in 0..m {
                g.set(i, j, f.g.get(i, j));
            }
            g.set(i, m, f.omega[i]);
            g.set(m, i, f.omega[i]);
        }
        g.set(m, m, -(f.lambda + eps));
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    dg[k][i][j] = jet.dg[k][i][j];
                }
                dg[k][i][m] = jet.domega[k][i];
                dg[k][m][i] = jet.domega[k][i];
            }
            dg[k][m][m] = -jet.dlambda[k];
        }
        LiftedMetric { g, dg }
    }

    fn check_nondegenerate(&self) -> Result<crate::linalg::Lu> {
        let lu = self.g.lu()?;
        let det = lu.determinant();
        if det.abs() < 1e-14 {
            return Err(Error::Singular { det, condition: lu.pivot_ratio() });
        }
        Ok(lu)
    }

    pub fn christoffel(&self) -> Result<Christoffel> {
        self.check_nondegenerate()?;
        Christoffel::from_metric(&self.g, &self.dg)
    }

    /// `Gamma(V, V)` without forming all symbols.
    pub fn contract(&self, v: &[f64]) -> Result<Vector> {
        let lu = self.check_nondegenerate()?;
        let n = self.g.dim();
        let mut w = [0.0; MAX_LIFT];
        // d_t G = 0, so only b, d < m contribute derivative terms.
        for (d, wd) in w.iter_mut().enumerate().take(n) {
            let mut s = 0.0;
            for b in 0..n - 1 {
                for c in 0..n {
                    s += self.dg[b][d][c] * v[b] * v[c];
                }
            }
            if d < n - 1 {
                for b in 0..n {
                    for c in 0..n {
                        s -= 0.5 * self.dg[d][b][c] * v[b] * v[c];
                    }
                }
            }
            *wd = s;
        }
        Ok(lu.solve(&w))
    }
}

/// Christoffel symbols of `g_eps` in product coordinates `(x, t)`.
pub fn christoffel_g_eps(m: &ChartManifold, x: &[f64], eps: f64) -> Result<Christoffel> {
    check_eps(eps)?;
    let jet = m.jet(x)?;
    LiftedMetric::from_jet(&jet, eps).christoffel()
}

/// `det g_eps = -(lambda + eps + |omega|^2) det g0`.
pub fn det_g_eps(m: &ChartManifold, x: &[f64], eps: f64) -> Result<f64> {
    let jet = m.jet(x)?;
    Ok(LiftedMetric::from_jet(&jet, eps).g.determinant())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!("eps must be nonnegative, got {eps}")));
    }
    Ok(())
}

fn check_len(m: &ChartManifold, v: &[f64]) -> Result<()> {
    if v.len() != m.dim() {
        return Err(Error::Dimension { expected: m.dim(), got: v.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsler::lightlike_root;
    use crate::manifold::{Catalog, Topology};
    use crate::DomainBounds;
    use proptest::prelude::*;

    fn wavy() -> ChartManifold {
        ChartManifold::from_sources(
            "wavy",
            &["x", "y"],
            &["1 + 0.2 * sin(y)", "0.1 * x", "1 + 0.1 * x^2"],
            &["-0.6 + 0.1 * cos(x)", "0.2 * sin(x + y)"],
            "0.3 + 0.1 * sin(x) * cos(y)",
            Topology::Plane,
            DomainBounds::cube(2, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn g_eps_examples() {
        let e = Catalog::euclidean_plane();
        let v = [0.6, 0.8];
        assert!(eval_g_eps(&e, &[0.0, 0.0], (&v, 1.0), (&v, 1.0), 0.0).unwrap().abs() < 1e-15);
        let k = Catalog::kropina_plane();
        let tau = 0.3;
        let g = eval_g_eps(&k, &[0.0, 0.0], (&[1.0, 0.0], tau), (&[1.0, 0.0], tau), 0.0).unwrap();
        assert!((g - (1.0 - 2.0 * tau)).abs() < 1e-15);
        let z = eval_g_eps(&k, &[0.0, 0.0], (&[1.0, 0.0], 0.5), (&[1.0, 0.0], 0.5), 0.0).unwrap();
        assert_eq!(z, 0.0);
        let w = Catalog::constant_wind_plane(0.5).unwrap();
        let tt = eval_g_eps(&w, &[0.0, 0.0], (&[0.0, 0.0], 1.0), (&[0.0, 0.0], 1.0), 0.25).unwrap();
        assert_eq!(tt, -1.0);
    }

    #[test]
    fn classify_examples() {
        let e = Catalog::euclidean_plane();
        let l = classify(&e, &[0.0, 0.0], (&[0.6, 0.8], 1.0), 0.0).unwrap();
        assert_eq!(l, CausalLabel { kind: CausalKind::Lightlike, orientation: Orientation::Future });
        let l = classify(&e, &[0.0, 0.0], (&[0.0, 0.0], 1.0), 0.0).unwrap();
        assert_eq!(l, CausalLabel { kind: CausalKind::Timelike, orientation: Orientation::Future });
        let k = Catalog::kropina_plane();
        let l = classify(&k, &[0.0, 0.0], (&[0.0, 0.0], 1.0), 0.0).unwrap();
        assert_eq!(l, CausalLabel { kind: CausalKind::Lightlike, orientation: Orientation::Future });
        let l = classify(&k, &[0.0, 0.0], (&[1.0, 0.0], 0.0), 0.0).unwrap();
        assert_eq!(l.kind, CausalKind::Spacelike);
        assert!(matches!(classify(&k, &[0.0, 0.0], (&[0.0, 0.0], 0.0), 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn conserved_examples() {
        let e = Catalog::euclidean_plane();
        assert_eq!(conserved_c(&e, &[0.0, 0.0], (&[0.0, 0.0], 1.0), 0.0).unwrap(), -1.0);
        let k = Catalog::kropina_plane();
        let c = conserved_c(&k, &[0.0, 0.0], (&[1.0, 0.0], 0.5), 0.0).unwrap();
        assert_eq!(c, -1.0);
        let h = crate::finsler::eval_h_eps(&k, &[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], 0.0).unwrap();
        assert!((c * c - h).abs() < 1e-10);
        let w = Catalog::constant_wind_plane(0.5).unwrap();
        let c = conserved_c(&w, &[0.0, 0.0], (&[1.0, 0.0], 2.0 / 3.0), 0.0).unwrap();
        assert!((c + 1.0).abs() < 1e-15);
    }

    #[test]
    fn christoffel_examples() {
        let e = Catalog::euclidean_plane();
        assert_eq!(christoffel_g_eps(&e, &[0.3, 0.2], 0.0).unwrap().max_abs(), 0.0);
        let w = Catalog::constant_wind_plane(0.5).unwrap();
        assert_eq!(christoffel_g_eps(&w, &[0.3, 0.2], 0.1).unwrap().max_abs(), 0.0);
    }

    fn lifted_matrix(m: &ChartManifold, x: &[f64], eps: f64) -> SmallMat {
        LiftedMetric::from_jet(&m.jet(x).unwrap(), eps).g
    }

    /// Christoffels from central differences of the metric matrix.
    fn fd_christoffel(m: &ChartManifold, x: &[f64], eps: f64) -> Christoffel {
        let dim = m.dim();
        let n = dim + 1;
        let h = 1e-5;
        let mut dg = [[[0.0; MAX_LIFT]; MAX_LIFT]; MAX_LIFT];
        for k in 0..dim {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let gp = lifted_matrix(m, &xp, eps);
            let gm = lifted_matrix(m, &xm, eps);
            for i in 0..n {
                for j in 0..n {
                    dg[k][i][j] = (gp.get(i, j) - gm.get(i, j)) / (2.0 * h);
                }
            }
        }
        Christoffel::from_metric(&lifted_matrix(m, x, eps), &dg).unwrap()
    }

    #[test]
    fn christoffel_matches_finite_differences() {
        let m = wavy();
        for (x, eps) in [([0.3, -0.4], 0.0), ([1.1, 0.7], 0.5), ([-1.5, 1.2], 1e-3)] {
            let a = christoffel_g_eps(&m, &x, eps).unwrap();
            let b = fd_christoffel(&m, &x, eps);
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let (p, q) = (a.gamma[k][i][j], b.gamma[k][i][j]);
                        assert!((p - q).abs() <= 1e-5 * (1.0 + q.abs()), "{k}{i}{j}: {p} vs {q}");
                        assert_eq!(p, a.gamma[k][j][i]);
                    }
                }
            }
        }
    }

    #[test]
    fn contraction_matches_symbols() {
        let m = wavy();
        let jet = m.jet(&[0.4, 0.9]).unwrap();
        let lm = LiftedMetric::from_jet(&jet, 0.2);
        let v = [0.3, -1.2, 0.7];
        let a = lm.contract(&v).unwrap();
        let b = lm.christoffel().unwrap().contract(&v);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn christoffel_continuous_in_eps() {
        let m = wavy();
        let x = [0.2, 0.5];
        let g0 = christoffel_g_eps(&m, &x, 0.0).unwrap();
        let diff = |eps: f64| {
            let g = christoffel_g_eps(&m, &x, eps).unwrap();
            let mut d = 0.0f64;
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        d = d.max((g.gamma[k][i][j] - g0.gamma[k][i][j]).abs());
                    }
                }
            }
            d
        };
        let (d1, d2) = (diff(1e-3), diff(1e-4));
        assert!(d1 > 0.0 && (d1 / d2 - 10.0).abs() < 0.1);
    }

    #[test]
    fn determinant_formula() {
        let m = wavy();
        let x = [0.7, -0.2];
        let f = m.fields(&x).unwrap();
        let s = crate::manifold::sharp_with(&f.g, &f.omega[..2]);
        let norm_sq = f.omega_of(&s);
        for eps in [0.0, 0.3] {
            let want = -(f.lambda + eps + norm_sq) * f.g.determinant();
            assert!((det_g_eps(&m, &x, eps).unwrap() - want).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn cones_widen_with_eps(x in -2.0..2.0f64, y in -2.0..2.0f64, vx in -2.0..2.0f64, vy in -2.0..2.0f64,
                                vt in -2.0..2.0f64, e1 in 0.0..1.0f64, de in 1e-6..1.0f64) {
            prop_assume!(vt != 0.0);
            let m = wavy();
            let v = [vx, vy];
            let a = eval_g_eps(&m, &[x, y], (&v, vt), (&v, vt), e1).unwrap();
            let b = eval_g_eps(&m, &[x, y], (&v, vt), (&v, vt), e1 + de).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn lightlike_future_iff_root(x in -2.0..2.0f64, y in -2.0..2.0f64, vx in -2.0..2.0f64, vy in -2.0..2.0f64, eps in 0.0..1.0f64) {
            let m = wavy();
            let v = [vx, vy];
            prop_assume!(vx.abs() + vy.abs() > 1e-3);
            let tau = lightlike_root(&m, &[x, y], &v, eps).unwrap().unwrap();
            let l = classify(&m, &[x, y], (&v, tau), eps).unwrap();
            prop_assert_eq!(l, CausalLabel { kind: CausalKind::Lightlike, orientation: Orientation::Future });
            let off = classify(&m, &[x, y], (&v, tau * 1.01), eps).unwrap();
            prop_assert_ne!(off.kind, CausalKind::Lightlike);
        }

        #[test]
        fn conserved_is_linear(vx in -2.0..2.0f64, vy in -2.0..2.0f64, vt in -2.0..2.0f64,
                               ux in -2.0..2.0f64, uy in -2.0..2.0f64, ut in -2.0..2.0f64, a in -3.0..3.0f64) {
            let m = wavy();
            let x = [0.1, 0.2];
            let c = |v: [f64; 2], t: f64| conserved_c(&m, &x, (&v, t), 0.1).unwrap();
            let lhs = c([vx + a * ux, vy + a * uy], vt + a * ut);
            let rhs = c([vx, vy], vt) + a * c([ux, uy], ut);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
