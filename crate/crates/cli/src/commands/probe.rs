//! Ball compactness probe and convexity certificate.

use kropina_core::finsler::{ball_compactness_probe, BallProbe};
use kropina_core::geodesics::{
    convexity_certificate, default_eps_grid, ConvexityOptions, ConvexityReport, LiftedFamily, ScaledFamily,
};
use serde::Serialize;

use super::{point, Context};
use crate::config::positive;
use crate::error::CliError;
use crate::io::FORMAT;

#[derive(Debug, Clone, Serialize)]
pub struct ProbeDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub radius: f64,
    pub eps_bar: f64,
    pub grid: usize,
    pub probe: BallProbe,
}

pub fn run_probe(ctx: &Context) -> Result<(), CliError> {
    let p = ctx.cfg.probe.clone().ok_or_else(|| CliError::config("missing [probe] section"))?;
    let m = ctx.manifold()?;
    point(&m, "x0", &p.x0)?;
    point(&m, "x1", &p.x1)?;
    let radius = positive("radius", p.radius)?;
    let eps_bar = positive("eps_bar", p.eps_bar.unwrap_or(0.1))?;
    let grid = ctx.overrides.grid.unwrap_or(41);
    let probe = ball_compactness_probe(&m, &p.x0, &p.x1, radius, eps_bar, grid)?;
    let doc =
        ProbeDoc { format: FORMAT, command: "probe", manifold: m.name().to_string(), radius, eps_bar, grid, probe };
    ctx.out.document("probe.json", &doc)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub family: String,
    pub report: ConvexityReport,
}

pub fn convexity(ctx: &Context) -> Result<ConvexityDoc, CliError> {
    let c = ctx.cfg.convexity.clone().ok_or_else(|| CliError::config("missing [convexity] section"))?;
    let m = ctx.manifold()?;
    let eps0 = positive("eps0", c.eps0.unwrap_or(1.0))?;
    let deltas = c.deltas.clone().unwrap_or_else(|| vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0]);
    for d in &deltas {
        positive("deltas entry", *d)?;
    }
    let mut opts = ConvexityOptions { margin: c.margin.unwrap_or(0.0), ..ConvexityOptions::default() };
    if let Some(g) = ctx.overrides.grid {
        opts.max_points = g.max(3).pow(c.p0.len() as u32);
    }
    let family = c.family.clone().unwrap_or_else(|| "lifted".into());
    let grid = default_eps_grid(eps0);
    let report = match family.as_str() {
        "lifted" => {
            if c.p0.len() != m.dim() + 1 {
                return Err(CliError::config(format!("`p0` needs {} entries (x, t)", m.dim() + 1)));
            }
            point(&m, "p0", &c.p0[..m.dim()])?;
            convexity_certificate(&LiftedFamily(&m), &c.p0, &grid, &deltas, &opts)?
        }
        "scaled" => {
            point(&m, "p0", &c.p0)?;
            convexity_certificate(&ScaledFamily(&m), &c.p0, &grid, &deltas, &opts)?
        }
        other => return Err(CliError::config(format!("unknown metric family `{other}`"))),
    };
    Ok(ConvexityDoc { format: FORMAT, command: "convexity", manifold: m.name().to_string(), family, report })
}

pub fn run_convexity(ctx: &Context) -> Result<(), CliError> {
    let doc = convexity(ctx)?;
    ctx.out.document("convexity.json", &doc)
}
