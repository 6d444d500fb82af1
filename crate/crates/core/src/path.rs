//! Sampled curves with per-sample diagnostics.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// How the curve parameter relates to the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Parametrization {
    /// `F_eps(v) = 1` at every sample.
    FepsUnit,
    /// Lifted curve `(sigma(t), t)`: the parameter is the time coordinate.
    TGraph,
    /// Affine parameter of a geodesic of the lifted metric, or any other parameter.
    Affine,
}

impl Parametrization {
    pub fn name(self) -> &'static str {
        match self {
            Parametrization::FepsUnit => "feps-unit",
            Parametrization::TGraph => "t-graph",
            Parametrization::Affine => "affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Time coordinate and its derivative for lifted curves.
    pub t: Option<f64>,
    pub tdot: Option<f64>,
    /// `g_eps(gamma', d/dt)` for lifted curves.
    pub conserved: Option<f64>,
    /// `g_eps(gamma', gamma')` for lifted curves.
    pub lightlike_residual: Option<f64>,
    /// Velocity vanished (flagged for the zero-section convention).
    pub zero_velocity: bool,
}

impl PathSample {
    pub fn spatial(s: f64, x: &[f64], v: &[f64]) -> Self {
        PathSample {
            s,
            x: x.to_vec(),
            v: v.to_vec(),
            t: None,
            tdot: None,
            conserved: None,
            lightlike_residual: None,
            zero_velocity: false,
        }
    }

    pub fn lifted(s: f64, x: &[f64], v: &[f64], t: f64, tdot: f64) -> Self {
        PathSample { t: Some(t), tdot: Some(tdot), ..Self::spatial(s, x, v) }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub parametrization: Parametrization,
    pub eps: f64,
    pub length_f: Option<f64>,
    pub length_feps: Option<f64>,
    pub energy_feps: Option<f64>,
    /// Largest `|C(s) - C(0)|` seen by the integrator.
    pub conserved_drift: Option<f64>,
    /// Largest `|g(γ',γ')(s) - g(γ',γ')(0)|` seen by the integrator.
    pub norm_drift: Option<f64>,
    /// The spatial component is (nearly) stationary along the whole curve.
    pub stationary_spatial: bool,
    /// Why integration stopped early, if it did.
    pub truncated: Option<String>,
}

impl GeodesicPath {
    pub fn new(samples: Vec<PathSample>, parametrization: Parametrization, eps: f64) -> Self {
        GeodesicPath {
            samples,
            parametrization,
            eps,
            length_f: None,
            length_feps: None,
            energy_feps: None,
            conserved_drift: None,
            norm_drift: None,
            stationary_spatial: false,
            truncated: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |p| p.x.len())
    }

    pub fn is_lifted(&self) -> bool {
        self.samples.iter().all(|p| p.t.is_some() && p.tdot.is_some())
    }

    pub fn start(&self) -> Option<&[f64]> {
        self.samples.first().map(|p| p.x.as_slice())
    }

    pub fn end(&self) -> Option<&[f64]> {
        self.samples.last().map(|p| p.x.as_slice())
    }

    pub fn parameter_span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.s - a.s,
            _ => 0.0,
        }
    }

    /// Samples must have strictly increasing parameter and consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for (i, p) in self.samples.iter().enumerate() {
            if p.x.len() != dim || p.v.len() != dim {
                return Err(Error::Dimension { expected: dim, got: p.x.len().min(p.v.len()) });
            }
            if i > 0 && !(p.s > self.samples[i - 1].s) {
                return Err(Error::Parametrization { index: i, value: p.s });
            }
        }
        Ok(())
    }

    /// Position at parameter `s` by cubic Hermite interpolation of the samples.
    pub fn position_at(&self, s: f64) -> Vec<f64> {
        let n = self.samples.len();
        let dim = self.dim();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 || s <= self.samples[0].s {
            return self.samples[0].x.clone();
        }
        if s >= self.samples[n - 1].s {
            return self.samples[n - 1].x.clone();
        }
        let i = match self.samples.binary_search_by(|p| p.s.total_cmp(&s)) {
            Ok(i) => return self.samples[i].x.clone(),
            Err(i) => i - 1,
        };
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = b.s - a.s;
        let th = (s - a.s) / h;
        let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
        let h10 = th * (1.0 - th) * (1.0 - th);
        let h01 = th * th * (3.0 - 2.0 * th);
        let h11 = th * th * (th - 1.0);
        (0..dim).map(|k| h00 * a.x[k] + h10 * h * a.v[k] + h01 * b.x[k] + h11 * h * b.v[k]).collect()
    }

    /// `n` positions at equally spaced fractions of the parameter range.
    pub fn resample(&self, n: usize) -> Vec<Vec<f64>> {
        let (Some(a), Some(b)) = (self.samples.first(), self.samples.last()) else {
            return Vec::new();
        };
        let n = n.max(2);
        (0..n).map(|i| self.position_at(a.s + (b.s - a.s) * i as f64 / (n - 1) as f64)).collect()
    }

    /// Drop lift information, keeping spatial position and velocity.
    pub fn spatial_part(&self) -> GeodesicPath {
        let samples = self.samples.iter().map(|p| PathSample::spatial(p.s, &p.x, &p.v)).collect();
        GeodesicPath { samples, ..self.clone() }
    }
}
