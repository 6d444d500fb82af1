//! Sampled assumption checks as a pass/fail table.

use kropina_core::control::build_frame;
use serde::Serialize;

use super::Context;
use crate::error::CliError;
use crate::io::FORMAT;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// The sampled quantity behind the verdict.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescribeDoc {
    pub format: &'static str,
    pub command: &'static str,
    pub manifold: String,
    pub coords: Vec<String>,
    pub topology: &'static str,
    pub samples: usize,
    pub checks: Vec<Check>,
    /// Sampled `sup |omega|`.
    pub omega_sup: f64,
    pub lambda_pre: Option<f64>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn describe(ctx: &Context) -> Result<DescribeDoc, CliError> {
    let m = ctx.manifold()?;
    let r = m.check_assumptions()?;
    let mut warnings = Vec::new();
    let checks = vec![
        Check { name: "g0 positive definite", pass: r.g0_positive_definite, value: f64::NAN },
        Check { name: "lambda >= 0", pass: r.lambda_nonnegative, value: r.min_lambda },
        Check { name: "lorentz condition", pass: r.lorentz, value: r.min_lorentz_margin },
        Check { name: "omega nonzero", pass: r.omega_nonzero, value: r.min_omega_norm },
        Check { name: "nonintegrable", pass: r.nonintegrable, value: r.min_nonintegrability },
    ];
    let (mut lambda_pre, mut lambda, mut c) = (None, None, None);
    if r.nonintegrable {
        match build_frame(&m) {
            Ok(f) => {
                lambda_pre = Some(f.lambda_pre);
                lambda = Some(f.lambda);
                c = Some(f.c);
                warnings.extend(f.warnings);
            }
            Err(e) => warnings.push(format!("control frame: {e}")),
        }
    }
    // the frame repeats this warning when it was built
    if r.omega_growth_at_boundary && warnings.is_empty() {
        warnings.push("sup |omega| is attained on the boundary of the domain box and may be unbounded".to_string());
    }
    Ok(DescribeDoc {
        format: FORMAT,
        command: "describe",
        manifold: m.name().to_string(),
        coords: m.coords().to_vec(),
        topology: m.topology().name(),
        samples: r.samples,
        checks,
        omega_sup: r.omega_sup,
        lambda_pre,
        lambda,
        c,
        warnings,
    })
}

pub fn table(doc: &DescribeDoc) -> String {
    let mut s = format!("manifold {} ({}) on {} samples\n", doc.manifold, doc.topology, doc.samples);
    for c in &doc.checks {
        let v = if c.value.is_nan() { String::new() } else { format!("{:.6e}", c.value) };
        s += &format!("{:<22} {:<4} {v}\n", c.name, if c.pass { "PASS" } else { "FAIL" });
    }
    s += &format!("{:<22} {:.6e}\n", "Omega (sup |omega|)", doc.omega_sup);
    if let (Some(lp), Some(l), Some(c)) = (doc.lambda_pre, doc.lambda, doc.c) {
        s +=
            &format!("{:<22} {lp:.6e}\n{:<22} {l:.6e}\n{:<22} {c:.6e}\n", "lambda (sampled)", "lambda (rescaled)", "C");
    }
    for w in &doc.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let doc = describe(ctx)?;
    print!("{}", table(&doc));
    if ctx.out.has_dir() {
        ctx.out.document("describe.json", &doc)?;
    }
    let metric_ok = doc.checks.iter().take(3).all(|c| c.pass);
    if metric_ok {
        Ok(())
    } else {
        Err(CliError::Hypothesis(format!("{} violates the metric assumptions", doc.manifold)))
    }
}
