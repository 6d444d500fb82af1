//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Runs with `cargo test -p kropina --test acceptance`. Tolerances are fixed here
//! and never loosened; a criterion that is out of reach prints FAIL.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kropina::commands::connect::{connect, ConnectDoc, SolutionEntry};
use kropina::commands::verify::{self, VerifySettings};
use kropina::{Context, Overrides};
use kropina_core::control::{build_frame, endpoint, integrate_control, reach, ControlSignal, ReachOptions};
use kropina_core::geodesics::{convexity_certificate, ConvexityOptions, LiftedFamily, ScaledFamily};
use kropina_core::Catalog;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn settings(seed: u64) -> VerifySettings {
    VerifySettings { seed, ..VerifySettings::default() }
}

fn run_connect(src: &str) -> Result<ConnectDoc, String> {
    let ctx = Context::from_source(src, Overrides::default(), None).map_err(|e| e.to_string())?;
    connect(&ctx, src.contains("wind_field")).map_err(|e| e.to_string())
}

fn zermelo_src(wind: &str, x1: &str) -> String {
    format!(
        "[manifold]\ncoords = [\"x\", \"y\"]\ng0 = [\"1\", \"0\", \"1\"]\nwind_field = [\"{wind}\", \"0\"]\n\
         [connect]\nx0 = [0.0, 0.0]\nx1 = {x1}\n"
    )
}

const CYLINDER: &str = "seed = 1\n[manifold]\ncatalog = \"flat-cylinder-wind\"\nwind = 0.5\n\
                        [connect]\nx0 = [0.0, 0.0]\nx1 = [3.141592653589793, 0.0]\nk_max = 3\n";

fn formula_equivalence() -> Verdict {
    let t = Instant::now();
    let catalog = Catalog::all();
    let (_, equiv) = match verify::metric_formulas(&catalog, &settings(1)) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let secs = t.elapsed().as_secs_f64();
    verdict(
        equiv.checked == 10_000 && equiv.violations == 0 && equiv.max_error <= 1e-12 && secs < 5.0,
        format!("{} samples, max rel. error {:.2e} (<= 1e-12), {secs:.2} s (< 5 s)", equiv.checked, equiv.max_error),
    )
}

fn monotonicity() -> Verdict {
    match verify::monotonicity(&Catalog::all(), &settings(2)) {
        Ok(r) => verdict(
            r.checked == 10_000 && r.violations == 0,
            format!("{} samples, {} violations", r.checked, r.violations),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn conservation() -> Verdict {
    let s = VerifySettings { tol: 1e-9, ..settings(3) };
    match verify::flows(&Catalog::all(), &s) {
        Ok((c, _)) => verdict(
            c.checked == 100 && c.violations == 0 && c.max_error <= 1e-7,
            format!("{} lightlike flows to s = 1 at tol 1e-9, max drift {:.2e} (<= 1e-7)", c.checked, c.max_error),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn fermat_round_trip() -> Verdict {
    let s = settings(4);
    let trip = match verify::round_trip(&s) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let unit = match verify::flows(&Catalog::all(), &s) {
        Ok((_, u)) => u,
        Err(e) => return verdict(false, e.to_string()),
    };
    verdict(
        trip.checked == 20 && trip.violations == 0 && unit.violations == 0 && unit.checked > 0,
        format!(
            "{} solutions, max lift residual/unit deviation {:.2e} (< 1e-6); {} projections, max |F_eps - 1| {:.2e} (< 1e-6)",
            trip.checked, trip.max_error, unit.checked, unit.max_error
        ),
    )
}

fn best(doc: &ConnectDoc) -> Option<&SolutionEntry> {
    doc.converged().next()
}

fn zermelo_targets() -> Verdict {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, wind, x1, expect) in
        [("downwind", "0.5", "[1.0, 0.0]", 2.0 / 3.0), ("upwind", "0.5", "[-1.0, 0.0]", 2.0)]
    {
        match run_connect(&zermelo_src(wind, x1)).map(|d| best(&d).and_then(|s| s.arrival_time)) {
            Ok(Some(time)) => {
                ok &= (time - expect).abs() <= 1e-5;
                parts.push(format!("w=1/2 {label} time {time:.9} (target {expect:.9})"));
            }
            other => {
                ok = false;
                parts.push(format!("w=1/2 {label}: {other:?}"));
            }
        }
    }
    match run_connect(&zermelo_src("1", "[1.0, 0.0]")) {
        Ok(doc) => match best(&doc) {
            Some(s) => {
                let l = s.length_f.unwrap_or(f64::NAN);
                ok &= (l - 0.5).abs() <= 1e-5;
                parts.push(format!("w=1 downwind limit length {l:.9} (target 0.5)"));
            }
            None => {
                ok = false;
                parts.push("w=1 downwind did not converge".into());
            }
        },
        Err(e) => {
            ok = false;
            parts.push(format!("w=1 downwind: {e}"));
        }
    }
    match run_connect(&zermelo_src("1", "[-1.0, 0.0]")) {
        Ok(doc) => {
            let div = doc.solutions.iter().any(|s| s.divergence.is_some()) && best(&doc).is_none();
            ok &= div;
            parts.push(format!("w=1 upwind divergence reported: {div}"));
        }
        Err(e) => {
            ok = false;
            parts.push(format!("w=1 upwind: {e}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    parts.push(format!("{secs:.2} s (< 30 s)"));
    verdict(ok, parts.join("; "))
}

fn multiplicity(doc: &ConnectDoc) -> Verdict {
    let w = 0.5;
    let mut ok = true;
    let mut formula_err = 0.0f64;
    let windings: BTreeSet<&Vec<i64>> = doc.solutions.iter().map(|s| &s.winding).collect();
    ok &= windings.len() == doc.solutions.len();
    // strictly increasing chain of F-lengths among converged classes
    let mut chain: Vec<(i64, f64)> = Vec::new();
    for s in doc.converged() {
        let k = s.winding[0];
        let angle = PI + 2.0 * PI * k as f64;
        let expect = if angle > 0.0 { angle / (1.0 + w) } else { -angle / (1.0 - w) };
        let l = s.length_f.unwrap_or(f64::NAN);
        formula_err = formula_err.max((l - expect).abs());
        ok &= (l - expect).abs() <= 1e-4 && s.eps <= 1e-6;
        if chain.last().is_none_or(|&(_, prev)| l > prev + 1e-4) {
            chain.push((k, l));
        }
    }
    ok &= chain.len() >= 5;
    let unconverged: Vec<String> =
        doc.solutions.iter().filter(|s| !s.converged).map(|s| format!("{:?}", s.winding)).collect();
    let ks: Vec<String> = chain.iter().map(|(k, l)| format!("k={k}:{l:.6}")).collect();
    verdict(
        ok,
        format!(
            "{} converged classes, strictly increasing chain of {} [{}], max formula error {formula_err:.2e} (<= 1e-4); not converged: [{}]",
            doc.converged().count(),
            chain.len(),
            ks.join(" "),
            unconverged.join(" ")
        ),
    )
}

fn convergence_of_lengths(docs: &[&ConnectDoc]) -> Verdict {
    let mut ok = true;
    let mut n = 0;
    let mut worst = String::new();
    for doc in docs {
        for s in doc.converged() {
            n += 1;
            let peak = s.trace.iter().map(|t| t.energy).fold(0.0f64, f64::max);
            let good = s.monotone && s.cauchy_index.is_some() && peak <= doc.energy_cap;
            if !good && worst.is_empty() {
                worst = format!(" first bad: {} {:?}", doc.manifold, s.winding);
            }
            ok &= good;
        }
    }
    ok &= n > 0;
    verdict(ok, format!("{n} successful traces: monotone, Cauchy increments < 1e-5, energy <= cap{worst}"))
}

fn convexity() -> Verdict {
    let deltas = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0];
    let grid = [0.0, 0.5, 1.0];
    let polar = Catalog::polar_plane();
    let opts = ConvexityOptions { margin: 0.1, ..ConvexityOptions::default() };
    let p = match convexity_certificate(&LiftedFamily(&polar), &[1.0, 0.0, 0.0], &grid, &deltas, &opts) {
        Ok(p) => p,
        Err(e) => return verdict(false, e.to_string()),
    };
    let flat = Catalog::euclidean_plane();
    let f = match convexity_certificate(&ScaledFamily(&flat), &[0.0, 0.0], &grid, &deltas, &ConvexityOptions::default())
    {
        Ok(f) => f,
        Err(e) => return verdict(false, e.to_string()),
    };
    let min_certified = p.delta.map_or(f64::NAN, |d| {
        p.deltas
            .iter()
            .zip(&p.min_eigenvalue)
            .filter(|(x, _)| **x <= d)
            .flat_map(|(_, row)| row.iter().copied())
            .fold(f64::INFINITY, f64::min)
    });
    verdict(
        p.delta.is_some_and(|d| d > 0.0) && min_certified >= 0.1 && f.delta == Some(1.0),
        format!(
            "polar delta {:?}, min eigenvalue {min_certified:.4} (>= 0.1); flat delta {:?} of grid max 1.0",
            p.delta, f.delta
        ),
    )
}

fn control() -> Verdict {
    let e = match verify::energy_bound(&settings(9)) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let mut ok = e.checked == 100 && e.violations == 0;
    let mut parts = vec![format!("{} signals, {} violations", e.checked, e.violations)];
    let frame = match build_frame(&Catalog::heisenberg()) {
        Ok(f) => f,
        Err(err) => return verdict(false, err.to_string()),
    };
    let x0 = [0.0, 0.0, 0.0];
    let drift = ControlSignal::piecewise_constant(&[1.0], &[vec![0.0, 0.0]]);
    let targets = match endpoint(&frame, &x0, &drift) {
        Ok(t) => [("drift", t), ("vertical", vec![0.0, 0.0, 0.05])],
        Err(err) => return verdict(false, err.to_string()),
    };
    for (label, target) in targets {
        match reach(&frame, &x0, &target, &ReachOptions::default()) {
            Ok(r) => {
                let admissible = r.signal.check(frame.c, frame.generators()).is_ok()
                    && integrate_control(&frame, &x0, &r.signal).is_ok();
                ok &= r.distance < 1e-4 && admissible;
                parts.push(format!("{label} target distance {:.2e} (< 1e-4)", r.distance));
            }
            Err(f) => {
                ok = false;
                parts.push(format!("{label} target: {f}"));
            }
        }
    }
    verdict(ok, parts.join("; "))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(Result::ok)
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let Ok(tmp) = tempfile::tempdir() else {
        return verdict(false, "no temp dir");
    };
    let cfg = tmp.path().join("cylinder.toml");
    if std::fs::write(&cfg, CYLINDER).is_err() {
        return verdict(false, "cannot write config");
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for cmd in ["verify", "connect"] {
        let mut runs = Vec::new();
        for i in 0..2 {
            let out = tmp.path().join(format!("{cmd}{i}"));
            let mut c = Command::new(env!("CARGO_BIN_EXE_kropina"));
            c.args([cmd, "--seed", "11", "--out"]).arg(&out);
            if cmd == "connect" {
                c.arg("--config").arg(&cfg);
            }
            match c.output() {
                Ok(o) => runs.push((o.status.code(), o.stdout, snapshot(&out))),
                Err(e) => return verdict(false, e.to_string()),
            }
        }
        let same = runs[0] == runs[1] && runs[0].0 == Some(0) && !runs[0].2.is_empty();
        ok &= same;
        parts.push(format!("{cmd}: {} files, identical {same}", runs[0].2.len()));
    }
    verdict(ok, parts.join("; "))
}

fn main() {
    let cylinder = run_connect(CYLINDER);
    let zermelo_docs: Vec<ConnectDoc> = [("0.5", "[1.0, 0.0]"), ("0.5", "[-1.0, 0.0]"), ("1", "[1.0, 0.0]")]
        .iter()
        .filter_map(|(w, x1)| run_connect(&zermelo_src(w, x1)).ok())
        .collect();

    let mut results: Vec<(usize, &str, Verdict)> = vec![
        (1, "metric formula equivalence", formula_equivalence()),
        (2, "eps-monotonicity", monotonicity()),
        (3, "conservation along lightlike geodesics", conservation()),
        (4, "Fermat round trip", fermat_round_trip()),
        (5, "Zermelo analytic targets", zermelo_targets()),
    ];
    match &cylinder {
        Ok(doc) => {
            results.push((6, "multiplicity on the flat cylinder", multiplicity(doc)));
            let mut docs: Vec<&ConnectDoc> = zermelo_docs.iter().collect();
            docs.push(doc);
            results.push((7, "convergence of lengths", convergence_of_lengths(&docs)));
        }
        Err(e) => {
            results.push((6, "multiplicity on the flat cylinder", verdict(false, e.clone())));
            results.push((7, "convergence of lengths", verdict(false, e.clone())));
        }
    }
    results.push((8, "convexity certificate", convexity()));
    results.push((9, "control admissibility and energy bound", control()));
    results.push((10, "determinism", determinism()));

    let mut failed = 0;
    for (n, name, v) in &results {
        println!("{} criterion {n:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
