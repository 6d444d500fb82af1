//! Single lifted geodesic from initial data.

use kropina_core::finsler::lightlike_root;
use kropina_core::geodesics::{fermat_project, integrate_geodesic_with, FlowOptions};
use kropina_core::spacetime::{classify, CausalKind, CausalLabel, Orientation, SpacetimeState};
use serde::Serialize;

use super::{point, Context};
use crate::config::positive;
use crate::error::CliError;
use crate::io::FORMAT;

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub eps: f64,
    pub s_max: f64,
    pub initial: SpacetimeState,
    pub causal: CausalLabel,
    pub samples: usize,
    pub conserved_drift: Option<f64>,
    pub norm_drift: Option<f64>,
    pub truncated: Option<String>,
    pub path_file: Option<String>,
    /// Projection reparametrized by `t`, for future lightlike data.
    pub projection_file: Option<String>,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let g = ctx.cfg.geodesic.clone().ok_or_else(|| CliError::config("missing [geodesic] section"))?;
    let m = ctx.manifold()?;
    point(&m, "x0", &g.x0)?;
    if g.xdot.len() != m.dim() {
        return Err(CliError::config(format!("`xdot` needs {} entries", m.dim())));
    }
    let eps = g.eps.unwrap_or(1e-3);
    if !(eps >= 0.0) {
        return Err(CliError::config("`eps` must be nonnegative"));
    }
    let s_max = positive("s_max", g.s_max.unwrap_or(1.0))?;
    let tdot = match g.tdot {
        Some(t) => t,
        None => lightlike_root(&m, &g.x0, &g.xdot, eps)?
            .ok_or_else(|| CliError::config("`xdot` has no future lightlike completion; give `tdot`"))?,
    };
    let initial = SpacetimeState::new(&g.x0, g.t0.unwrap_or(0.0), &g.xdot, tdot);
    let causal = classify(&m, &g.x0, (&g.xdot, tdot), eps)?;
    let opts = FlowOptions::uniform(ctx.tol()?, g.samples.unwrap_or(201));
    let path = integrate_geodesic_with(&m, &initial, eps, s_max, &opts)?;
    let path_file = ctx.out.path_table("geodesic.csv", &path)?;
    let projection_file = if causal.kind == CausalKind::Lightlike && causal.orientation == Orientation::Future {
        ctx.out.path_table("projection.csv", &fermat_project(&path)?)?
    } else {
        None
    };
    let doc = GeodesicDoc {
        format: FORMAT,
        command: "geodesic",
        manifold: m.name().to_string(),
        eps,
        s_max,
        initial,
        causal,
        samples: path.len(),
        conserved_drift: path.conserved_drift,
        norm_drift: path.norm_drift,
        truncated: path.truncated.clone(),
        path_file,
        projection_file,
    };
    ctx.out.document("geodesic.json", &doc)
}
