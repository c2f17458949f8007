use std::fs;
use std::io::Cursor;
use std::path::PathBuf;
use std::process::Command;

use icoadj::adjoint::AdjointMethod;
use icoadj::assim::{BackgroundMode, ObservationSet, TruthSource, Weights};
use icoadj::cases::{ScalarCase, WindKind};
use icoadj::fields::{compute_norms, CellField, NormReport};
use icoadj::spheregrid::SphereGrid;
use icoadj::transport::{Limiter, Order};
use icoadj_cli::config::{parse_grid, CasePair, RunConfig};
use icoadj_cli::experiment::{run_experiment, ExperimentSpec, Family};
use icoadj_cli::formats::*;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("icoadj-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icoadj"))
}

#[test]
fn grid_dump_roundtrip() {
    let g = SphereGrid::build(2, 1, 6.371229e6).unwrap();
    let mut buf = Vec::new();
    write_grid(&g, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("GRID 2 1 "));
    let d = read_grid(Cursor::new(buf)).unwrap();
    assert_eq!((d.n_r, d.n_b, d.radius), (2, 1, g.radius));
    assert_eq!((d.vertices.len(), d.cells.len(), d.edges.len()), (g.n_vertices(), g.n_cells(), g.n_edges()));
    for (c, (v, area)) in g.cells.iter().zip(&d.cells) {
        assert_eq!(&c.vertices, v);
        assert_eq!(c.area, *area);
    }
    for (e, (v, cells, len, n)) in g.edges.iter().zip(&d.edges) {
        assert_eq!((&e.vertices, &e.cells, e.length), (v, cells, *len));
        // the normal is tangent to the sphere, so east/north carry all of it
        assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
    }
    assert!(read_grid(Cursor::new(&b"GRID 2 1 1.0\nCELLS 0\n"[..])).is_err());
}

#[test]
fn field_roundtrip_is_exact() {
    let g = SphereGrid::build(2, 1, 1.0).unwrap();
    let q = CellField::from_fn(&g, |lon, lat| (3.0 * lon).sin() * lat.cos() / 7.0);
    let mut buf = Vec::new();
    write_field(&q, &mut buf).unwrap();
    assert_eq!(read_field(Cursor::new(buf), &g).unwrap(), q);
    let small = SphereGrid::build(2, 0, 1.0).unwrap();
    let mut buf = Vec::new();
    write_field(&q, &mut buf).unwrap();
    assert!(read_field(Cursor::new(buf), &small).is_err());
}

#[test]
fn observation_roundtrip_and_rejections() {
    let obs = ObservationSet { cells: vec![3, 7, 11], n_steps: 2, values: (0..9).map(|i| i as f64 / 3.0).collect() };
    let mut buf = Vec::new();
    write_observations(&obs, &mut buf).unwrap();
    assert_eq!(read_observations(Cursor::new(buf)).unwrap(), obs);
    for bad in [
        "n,cell,value\n0,1,0.5\n1,2,0.5\n",
        "n,cell,value\n0,1,0.5\n0,2,0.5\n2,1,0.5\n2,2,0.5\n",
        "n,cell,value\n0,1,0.5\n0,2,0.5\n1,1,0.5\n",
        "cell,value\n1,0.5\n",
        "n,cell,value\n0,1\n",
    ] {
        assert!(read_observations(Cursor::new(bad)).is_err(), "{bad:?}");
    }
}

#[test]
fn norm_rows_follow_the_header() {
    let r = NormReport { undershoot_count: 12, overshoot_count: 3, l2_rel: 0.5, ..Default::default() };
    let h = norms_header("scheme");
    let row = norms_row("x", &r);
    assert_eq!(h, "scheme,l1_rel,l2_rel,linf_rel,l1_abs,l2_abs,linf_abs,undershoot,min,overshoot,max");
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols.len(), h.split(',').count());
    assert_eq!((cols[2], cols[7], cols[9]), ("5e-1", "12", "3"));
}

#[test]
fn config_parsing() {
    let text = "# twin\ncase = two_slotted_cylinders:deform_div\ngrid = R2B2\ndt=1200\nT = 24000 # short\n\
                w_b = 0\nw_o = 1\nn_obs = 320\nbackground_mode = halfdomain\nmethod = artsource\nlimiter = minmax\n";
    let c = RunConfig::parse(text).unwrap();
    assert_eq!(c.case, CasePair { scalar: ScalarCase::TwoSlottedCylinders, wind: WindKind::DeformationalDiv });
    assert_eq!((c.n_r, c.n_b, c.dt, c.t_end), (2, 2, 1200.0, 24000.0));
    assert_eq!(c.weights, Weights { w_b: 0.0, w_o: 1.0 });
    assert_eq!(c.n_obs, Some(320));
    assert!(matches!(c.background, BackgroundMode::HalfDomain { .. }));
    assert_eq!((c.method, c.limiter, c.order), (AdjointMethod::ArtSource, Limiter::FctMinMax, Order::Second));
    assert_eq!(c.truth_source(), TruthSource::MonotoneReference);
    assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    assert_eq!(RunConfig::default().truth_source(), TruthSource::ReferenceRun);

    for bad in [
        "colour = red",
        "case = vortex",
        "grid = R2Bx",
        "w_b = -1",
        "method = standard\nlimiter = positive",
        "dt = 0",
        "truth = oracle",
        "just words",
    ] {
        assert!(RunConfig::parse(bad).is_err(), "{bad:?}");
    }
    assert_eq!(parse_grid("r2b4").unwrap(), (2, 4));
    assert_eq!(parse_grid("3").unwrap(), (2, 3));
    let p: CasePair = "vortex:moving_vortices".parse().unwrap();
    assert_eq!(p.to_string(), "vortex:moving_vortices");
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = bin().output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    for cmd in ["grid", "advect", "adjoint-test", "assimilate", "experiment"] {
        assert!(err.contains(cmd), "{cmd}");
    }
}

#[test]
fn grid_command_writes_a_dump_under_the_output_directory() {
    let dir = scratch("grid");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "grid", "--nr", "2", "--nb", "1", "--out", "g.txt", "--report"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["grid"]["cells"], 320);
    assert_eq!(report["grid"]["edges"], 480);
    let d = read_grid(Cursor::new(fs::read(dir.join("g.txt")).unwrap())).unwrap();
    assert_eq!(d.cells.len(), 320);
}

#[test]
fn advect_command_matches_the_library() {
    let dir = scratch("advect");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "advect", "--case", "vortex:moving_vortices", "--grid-nb", "1"])
        .args(["--dt", "2400", "--t-end", "24000", "--limiter", "minmax", "--out", "n.csv", "--dump-every", "5", "f.txt"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("n.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], norms_header("scheme"));

    let g = SphereGrid::build(2, 1, icoadj::EARTH_RADIUS).unwrap();
    let case = CasePair { scalar: ScalarCase::Vortex, wind: WindKind::MovingVortices };
    let scheme = icoadj::transport::SchemeConfig::new(2400.0).with_limiter(Limiter::FctMinMax);
    let r = icoadj_cli::experiment::forward_run("x", &g, case, scheme, 24000.0, |_, _| {}).unwrap();
    assert_eq!(lines[1], norms_row("minmax/order2", &r.norms));
    assert_eq!(compute_norms(&r.q, &r.truth, &g, case.scalar.bounds()).unwrap(), r.norms);

    let dump = fs::read_to_string(dir.join("f.txt")).unwrap();
    let steps: Vec<&str> = dump.lines().filter(|l| l.starts_with("STEP")).collect();
    assert_eq!(steps, ["STEP 0", "STEP 5", "STEP 10"]);
}

#[test]
fn adjoint_test_reports_json_and_exit_status() {
    let run = |method: &str, check: &str| {
        let out = bin()
            .args(["adjoint-test", "--method", method, "--case", "cosine_bell:solid_rotation", "--check", check])
            .args(["--grid-nb", "1", "--dt", "2400", "--samples", "4"])
            .output()
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        (out.status.code(), v)
    };
    let (code, v) = run("standard", "duality");
    assert_eq!(code, Some(0));
    assert_eq!(v["passed"], true);
    assert_eq!(v["residuals"].as_array().unwrap().len(), 4);
    let (code, v) = run("artsource", "retro");
    assert_eq!((code, &v["passed"]), (Some(0), &serde_json::Value::Bool(true)));
    // the transposed second-order stencil is not the reversed one
    let (code, v) = run("standard", "retro");
    assert_eq!(code, Some(1));
    assert!(v["residual"].as_f64().unwrap() > 1e-6);
}

#[test]
fn assimilate_command_writes_history_field_and_observations() {
    let dir = scratch("assim");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "case = cosine_bell:deform_nondiv\ngrid = R2B1\ndt = 2400\nT = 24000\nn_obs = 80\nmethod = standard\n").unwrap();
    let args = |extra: &[&str]| {
        let mut c = bin();
        c.args(["--out", dir.to_str().unwrap(), "assimilate", "--config", cfg.to_str().unwrap(), "--iters", "4"]);
        c.args(extra);
        c.output().unwrap()
    };
    let out = args(&["--out", "h.csv", "--xout", "x.txt", "--obs-out", "o.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = fs::read_to_string(dir.join("h.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some(HISTORY_HEADER));
    assert_eq!(hist.lines().count(), 1 + 5);
    let g = SphereGrid::build(2, 1, icoadj::EARTH_RADIUS).unwrap();
    read_field(Cursor::new(fs::read(dir.join("x.txt")).unwrap()), &g).unwrap();
    let obs = read_observations(Cursor::new(fs::read(dir.join("o.csv")).unwrap())).unwrap();
    assert_eq!((obs.n_obs(), obs.n_steps), (80, 10));

    // reading the same observations back gives the same run
    let again = args(&["--out", "h2.csv", "--obs", dir.join("o.csv").to_str().unwrap()]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(fs::read_to_string(dir.join("h2.csv")).unwrap(), hist);

    fs::write(&cfg, "grid = R2B1\nmethod = standard\nlimiter = minmax\n").unwrap();
    assert!(!args(&[]).status.success());
}

fn csv_files(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn small_spec(family: Family, out: PathBuf) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(family, out);
    s.n_b = Some(1);
    s.dt = 2400.0;
    s.iters = Some(3);
    s.seed = 7;
    s
}

#[test]
fn advect_table_is_deterministic_and_has_five_rows() {
    let (a, b) = (scratch("table-a"), scratch("table-b"));
    let m = run_experiment(&small_spec(Family::AdvectTable, a.clone())).unwrap();
    run_experiment(&small_spec(Family::AdvectTable, b.clone())).unwrap();
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert_eq!(fa, fb);
    let table = &fa.iter().find(|(n, _)| n == "norms.csv").unwrap().1;
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["forward-nolim", "standard-adjoint", "artsource-nolim", "forward+minmax", "artsource+minmax"]);
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for r in runs {
        assert_eq!(r["grid"]["cells"], 320);
        assert_eq!(r["n_steps"], 432);
        assert_eq!(r["dt"], 2400.0);
        let c = r["cfl_max"].as_f64().unwrap();
        assert!(c > 0.0 && c <= 0.8);
    }
    let on_disk: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk["inputs"], m["inputs"]);
    assert_eq!(m["inputs"]["seed"], 7);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn assimilation_families_are_deterministic() {
    for family in [Family::AssimConvergence, Family::AssimWeightSweep, Family::AssimObsSweep] {
        let (a, b) = (scratch("assim-a"), scratch("assim-b"));
        let spec = |out| {
            let mut s = small_spec(family, out);
            s.t_end = Some(24000.0);
            s
        };
        let m = run_experiment(&spec(a.clone())).unwrap();
        run_experiment(&spec(b.clone())).unwrap();
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert_eq!(fa, fb, "{family:?}");
        let expected_runs = match family {
            Family::AssimConvergence => 3,
            Family::AssimWeightSweep => 18,
            _ => 12,
        };
        assert_eq!(m["runs"].as_array().unwrap().len(), expected_runs);
        // one history per run plus the norm table
        assert_eq!(fa.len(), expected_runs + 1);
        for r in m["runs"].as_array().unwrap() {
            assert_eq!(r["n_steps"], 10);
            assert!(r["j_final"].as_f64().unwrap() <= r["j_initial"].as_f64().unwrap());
        }
    }
}

#[test]
fn mesh_sweep_scales_the_time_step() {
    let dir = scratch("mesh");
    let mut s = ExperimentSpec::new(Family::AssimMeshSweep, dir);
    s.n_b = Some(2);
    s.dt = 600.0;
    s.iters = Some(1);
    s.t_end = Some(4800.0);
    assert_eq!(s.levels(), vec![2]);
    let m = run_experiment(&s).unwrap();
    for r in m["runs"].as_array().unwrap() {
        assert_eq!(r["dt"], 1200.0);
        assert_eq!(r["n_steps"], 4);
    }
    let mut full = ExperimentSpec::new(Family::AssimMeshSweep, "unused");
    full.full = true;
    assert_eq!(full.levels(), vec![2, 3, 4, 5]);
    assert_eq!(full.iters(), 300);
}

#[test]
fn invalid_experiments_fail_before_running() {
    let dir = scratch("invalid");
    let out = bin()
        .args(["--out", dir.to_str().unwrap(), "experiment", "advect-table", "--dt", "7"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("whole number of steps"));
    assert!(fs::read_dir(&dir).unwrap().next().is_none());
    let out = bin().args(["experiment", "no-such-family"]).output().unwrap();
    assert!(!out.status.success());
}
