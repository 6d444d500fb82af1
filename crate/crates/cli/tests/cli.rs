//! The binary end to end: exit codes, error locations and output formats.

use std::path::Path;
use std::process::{Command, Output};

use kropina::io::{read_path_csv, write_path_csv};
use kropina::{CliError, Context, Overrides};
use kropina_core::control::ControlSignal;
use kropina_core::{GeodesicPath, Parametrization, PathSample};
use proptest::prelude::*;

fn kropina(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kropina")).args(args).output().expect("binary runs")
}

fn with_config(dir: &Path, body: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, body).unwrap();
    let mut all: Vec<&str> = args.to_vec();
    let cfg = cfg.to_str().unwrap().to_string();
    all.extend(["--config", &cfg]);
    kropina(&all)
}

#[test]
fn malformed_expression_reports_line_and_column() {
    let src = "[manifold]\ncoords = [\"x\", \"y\"]\ng0 = [\"1\", \"0\", \"1\"]\nomega = [\"-1\", \"0 + * y\"]\nlambda = \"0\"\n";
    let ctx = Context::from_source(src, Overrides::default(), None).unwrap();
    match ctx.manifold() {
        // `omega = ["-1", "0 + * y"]`: the `*` is byte 5 of the second string
        Err(CliError::Config { line, column, .. }) => assert_eq!((line, column), (4, 21)),
        other => panic!("{other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let out = with_config(dir.path(), src, &["describe"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4, column 21"), "{err}");
}

#[test]
fn toml_syntax_error_has_location() {
    match Context::from_source("seed = 1\n[manifold\n", Overrides::default(), None) {
        Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    match Context::from_source("seed = 1\nbogus = 2\n", Overrides::default(), None) {
        Err(e @ CliError::Config { .. }) => assert_eq!(e.exit_code(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn describe_flags_planar_nonintegrability() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config(dir.path(), "[manifold]\ncatalog = \"kropina-plane\"\n", &["describe"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    let status = |name: &str| table.lines().find(|l| l.starts_with(name)).unwrap().to_string();
    for ok in ["g0 positive definite", "lambda >= 0", "lorentz condition", "omega nonzero"] {
        assert!(status(ok).contains("PASS"), "{table}");
    }
    assert!(status("nonintegrable").contains("FAIL"));
    let out = with_config(dir.path(), "[manifold]\ncatalog = \"heisenberg\"\n", &["describe"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("nonintegrable") && l.contains("PASS")), "{table}");
}

#[test]
fn strong_wind_is_out_of_scope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        "[manifold]\ncoords = [\"x\", \"y\"]\ng0 = [\"1\", \"0\", \"1\"]\nwind_field = [\"0.5 + 0.2 * x\", \"0\"]\n\
               [connect]\nx0 = [0.0, 0.0]\nx1 = [1.0, 0.0]\n";
    let out = with_config(dir.path(), cfg, &["zermelo"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported wind"));
}

#[test]
fn closed_loop_at_critical_point_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[manifold]\ncatalog = \"kropina-plane\"\n[connect]\nx0 = [0.5, 0.5]\nx1 = [0.5, 0.5]\n";
    let out = with_config(dir.path(), cfg, &["connect"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis"));
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[manifold]\ncatalog = \"kropina-plane\"\n[connect]\nx0 = [0.0, 0.0]\nx1 = [1.0, 0.0]\n";
    let out = with_config(dir.path(), cfg, &["connect", "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = with_config(dir.path(), cfg, &["connect", "--eps-schedule", "0.1,0.2"]);
    assert_eq!(out.status.code(), Some(2));
    // the Heisenberg chart is a bounded box
    let outside = "[manifold]\ncatalog = \"heisenberg\"\n[connect]\nx0 = [0.0, 0.0, 0.0]\nx1 = [2.0, 0.0, 0.0]\n";
    let out = with_config(dir.path(), outside, &["connect"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perturbed_regularization_fails_verify_with_a_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = "[verify]\nsamples = 200\nflows = 4\nproblems = 2\nsignals = 4\nperturbation = true\n";
    let out = with_config(dir.path(), cfg, &["verify", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("verify.json")).unwrap()).unwrap();
    let mono = doc["properties"].as_array().unwrap().iter().find(|p| p["name"] == "monotonicity").unwrap();
    assert!(mono["violations"].as_u64().unwrap() > 0);
    assert_eq!(mono["first_counterexample"]["violated"], "F_eps2 < F_eps1");
}

#[test]
fn connect_writes_solution_document_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = "[manifold]\ncatalog = \"constant-wind-plane\"\nwind = 0.5\n\
               [connect]\nx0 = [0.0, 0.0]\nx1 = [0.0, 1.0]\n";
    let out = with_config(dir.path(), cfg, &["connect", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("connect.json")).unwrap()).unwrap();
    assert_eq!(doc["format"], "kropina/v1");
    let s = &doc["solutions"][0];
    for key in ["winding", "eps", "length", "energy", "arrival_time", "endpoint_error", "pregeodesic_residual"] {
        assert!(!s[key].is_null(), "{key}");
    }
    // crosswind: time 1 / sqrt(1 - w^2)
    assert!((s["arrival_time"].as_f64().unwrap() - 1.0 / 0.75f64.sqrt()).abs() < 1e-6);
    let table = std::fs::File::open(out_dir.join(s["path_file"].as_str().unwrap())).unwrap();
    let path = read_path_csv(table, Parametrization::FepsUnit, 1e-6).unwrap();
    assert_eq!(path.start().unwrap(), &[0.0, 0.0]);
    let end = path.end().unwrap();
    assert!((end[0]).abs() < 1e-8 && (end[1] - 1.0).abs() < 1e-8);
}

fn signal() -> impl Strategy<Value = ControlSignal> {
    (1usize..5).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), n),
            proptest::collection::vec(proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 2), 1..4), n),
        )
            .prop_map(move |(xi, alpha)| ControlSignal {
                breakpoints: (0..=n).map(|i| i as f64 / n as f64).collect(),
                xi: xi.iter().map(|v| v.abs()).collect(),
                alpha,
            })
    })
}

fn finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

fn path() -> impl Strategy<Value = GeodesicPath> {
    proptest::collection::vec(
        (
            finite(),
            proptest::collection::vec(finite(), 2),
            proptest::collection::vec(finite(), 2),
            proptest::option::of(finite()),
            any::<bool>(),
        ),
        1..20,
    )
    .prop_map(|rows| {
        let samples = rows
            .into_iter()
            .map(|(s, x, v, t, z)| {
                let mut p = match t {
                    Some(t) => PathSample::lifted(s, &x, &v, t, t * 0.5),
                    None => PathSample::spatial(s, &x, &v),
                };
                p.conserved = t.map(|t| -t);
                p.zero_velocity = z;
                p
            })
            .collect();
        GeodesicPath::new(samples, Parametrization::Affine, 0.0)
    })
}

proptest! {
    #[test]
    fn control_signal_json_round_trip_is_bit_exact(u in signal()) {
        let text = serde_json::to_string(&u).unwrap();
        let back: ControlSignal = serde_json::from_str(&text).unwrap();
        let bits = |s: &ControlSignal| -> Vec<u64> {
            s.breakpoints.iter().chain(&s.xi).chain(s.alpha.iter().flatten().flatten()).map(|v| v.to_bits()).collect()
        };
        prop_assert_eq!(bits(&back), bits(&u));
        prop_assert_eq!(back, u);
    }

    #[test]
    fn path_table_round_trip_is_bit_exact(p in path()) {
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &p).unwrap();
        let back = read_path_csv(buf.as_slice(), Parametrization::Affine, 0.0).unwrap();
        prop_assert_eq!(back, p);
    }
}
