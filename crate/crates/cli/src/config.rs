//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! tol = 1e-9
//!
//! [manifold]
//! catalog = "flat-cylinder-wind"
//! wind = 0.5
//!
//! [connect]
//! x0 = [0.0, 0.0]
//! x1 = [3.141592653589793, 0.0]
//! k_max = 3
//! ```
//!
//! An inline manifold replaces `catalog` with `coords`, `g0` (upper triangle or
//! full matrix), `omega` and `lambda` expressions, or with `wind_field` for
//! navigation data, plus `topology` and `bounds`.

use std::path::Path;

use kropina_core::expr::ScalarFieldExpr;
use kropina_core::{Catalog, ChartManifold, DomainBounds, Topology};
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub manifold: Option<ManifoldConfig>,
    pub connect: Option<ConnectConfig>,
    pub geodesic: Option<GeodesicConfig>,
    pub reach: Option<ReachConfig>,
    pub verify: Option<VerifyConfig>,
    pub probe: Option<ProbeConfig>,
    pub convexity: Option<ConvexityConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub catalog: Option<String>,
    /// Wind strength for catalog entries that take one.
    pub wind: Option<f64>,
    pub name: Option<String>,
    pub coords: Option<Vec<String>>,
    pub g0: Option<Vec<Spanned<String>>>,
    pub omega: Option<Vec<Spanned<String>>>,
    pub lambda: Option<Spanned<String>>,
    pub wind_field: Option<Vec<Spanned<String>>>,
    pub topology: Option<String>,
    pub bounds: Option<BoundsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectConfig {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub k_max: Option<u32>,
    pub eps_schedule: Option<Vec<f64>>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub energy_cap: Option<f64>,
    /// Cauchy threshold of the continuation.
    pub cauchy_tol: Option<f64>,
    pub t0: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub x0: Vec<f64>,
    pub t0: Option<f64>,
    pub xdot: Vec<f64>,
    /// Defaults to the future lightlike value.
    pub tdot: Option<f64>,
    pub eps: Option<f64>,
    pub s_max: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachConfig {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    /// Distance to the target, in `g0`.
    pub tol: Option<f64>,
    pub intervals: Option<usize>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random samples for the pointwise metric checks.
    pub samples: Option<usize>,
    /// Random initial conditions for the flow checks.
    pub flows: Option<usize>,
    /// Boundary problems for the Fermat round trip.
    pub problems: Option<usize>,
    /// Random control signals for the energy bound.
    pub signals: Option<usize>,
    /// Replace the regularization by a deliberately broken one.
    pub perturbation: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub radius: f64,
    pub eps_bar: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexityConfig {
    pub p0: Vec<f64>,
    pub eps0: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    pub margin: Option<f64>,
    /// `lifted` (default) or `scaled`.
    pub family: Option<String>,
}

/// Line and column (1-based) of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, col)
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            CliError::Config { line, column, message: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            line: 0,
            column: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Ok((Self::parse(&src)?, src))
    }
}

/// Location of byte `column` (1-based) of a TOML string value.
fn expr_location(src: &str, value: &Spanned<String>, column: usize) -> (usize, usize) {
    // span starts at the opening quote
    line_col(src, value.span().start + column)
}

fn parse_checked(src: &str, value: &Spanned<String>, coords: &[&str]) -> Result<(), CliError> {
    match ScalarFieldExpr::parse(value.get_ref(), coords) {
        Ok(_) => Ok(()),
        Err(kropina_core::Error::Parse { column, message }) => {
            let (line, column) = expr_location(src, value, column);
            Err(CliError::Config { line, column, message: format!("in `{}`: {message}", value.get_ref()) })
        }
        Err(e) => Err(CliError::config(e.to_string())),
    }
}

impl ManifoldConfig {
    /// Build the manifold. `src` is the config text, used to locate expression errors.
    pub fn build(&self, src: &str) -> Result<ChartManifold, CliError> {
        if let Some(name) = &self.catalog {
            return Catalog::build(name, self.wind).map_err(|e| match e {
                kropina_core::Error::UnsupportedWind { .. } => e.into(),
                other => CliError::config(other.to_string()),
            });
        }
        let coords_owned =
            self.coords.clone().ok_or_else(|| CliError::config("manifold needs `catalog` or `coords`"))?;
        let coords: Vec<&str> = coords_owned.iter().map(String::as_str).collect();
        let dim = coords.len();
        let name = self.name.clone().unwrap_or_else(|| "inline".into());
        let topology = match &self.topology {
            None => Topology::Plane,
            Some(t) => Topology::from_name(t).ok_or_else(|| CliError::config(format!("unknown topology `{t}`")))?,
        };
        let bounds = match &self.bounds {
            Some(b) => DomainBounds::new(b.lo.clone(), b.hi.clone()).map_err(|e| CliError::config(e.to_string()))?,
            None => DomainBounds::cube(dim, 5.0),
        };
        let g0 = self.g0.as_ref().ok_or_else(|| CliError::config("inline manifold needs `g0`"))?;
        for s in g0 {
            parse_checked(src, s, &coords)?;
        }
        let g0: Vec<&str> = g0.iter().map(|s| s.get_ref().as_str()).collect();
        let built = if let Some(wind) = &self.wind_field {
            if self.omega.is_some() || self.lambda.is_some() {
                return Err(CliError::config("`wind_field` excludes `omega` and `lambda`"));
            }
            for s in wind {
                parse_checked(src, s, &coords)?;
            }
            let wind: Vec<&str> = wind.iter().map(|s| s.get_ref().as_str()).collect();
            ChartManifold::from_zermelo(&name, &coords, &g0, &wind, topology, bounds)
        } else {
            let omega =
                self.omega.as_ref().ok_or_else(|| CliError::config("inline manifold needs `omega` or `wind_field`"))?;
            let lambda = self.lambda.as_ref().ok_or_else(|| CliError::config("inline manifold needs `lambda`"))?;
            for s in omega.iter().chain(std::iter::once(lambda)) {
                parse_checked(src, s, &coords)?;
            }
            let omega: Vec<&str> = omega.iter().map(|s| s.get_ref().as_str()).collect();
            ChartManifold::from_sources(&name, &coords, &g0, &omega, lambda.get_ref(), topology, bounds)
        };
        built.map_err(|e| match e {
            kropina_core::Error::UnsupportedWind { .. } => e.into(),
            other => CliError::config(other.to_string()),
        })
    }
}

impl RunConfig {
    pub fn manifold(&self, src: &str) -> Result<ChartManifold, CliError> {
        self.manifold.as_ref().ok_or_else(|| CliError::config("missing [manifold] section"))?.build(src)
    }

    /// Global tolerance, checked positive.
    pub fn tol_or(&self, default: f64) -> Result<f64, CliError> {
        positive("tol", self.tol.unwrap_or(default))
    }
}

pub(crate) fn positive(what: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("`{what}` must be positive, got {v}")))
    }
}

/// Parse `1e-1,5e-2,...` into a strictly decreasing positive schedule.
pub fn parse_schedule(s: &str) -> Result<Vec<f64>, CliError> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| CliError::config(format!("eps schedule entry `{p}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_schedule(&v)?;
    Ok(v)
}

pub fn check_schedule(v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(CliError::config("eps schedule is empty"));
    }
    for &e in v {
        positive("eps schedule entry", e)?;
    }
    if v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::config("eps schedule must be strictly decreasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }

    #[test]
    fn schedule_must_decrease() {
        assert_eq!(parse_schedule("0.1, 0.05,1e-3").unwrap(), vec![0.1, 0.05, 1e-3]);
        assert!(parse_schedule("0.1,0.2").is_err());
        assert!(parse_schedule("0.1,-1").is_err());
        assert!(parse_schedule("x").is_err());
    }
}
