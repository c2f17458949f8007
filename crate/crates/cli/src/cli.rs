//! Command line definitions and dispatch.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use icoadj::adjoint::AdjointMethod;
use icoadj::assim::{AssimProblem, Twin};
use icoadj::optim::{minimize, LbfgsConfig};
use icoadj::spheregrid::SphereGrid;
use icoadj::transport::{Limiter, Order, SchemeConfig};
use icoadj::{EARTH_RADIUS, PERIOD};
use serde_json::json;

use crate::checks::{run_check, Check, CheckSpec, Direction};
use crate::config::{parse_limiter, parse_method, parse_order, CasePair, RunConfig};
use crate::experiment::{forward_run, grid_json, run_experiment, validate, ExperimentSpec, Family};
use crate::formats::{norms_header, norms_row, read_observations, write_field, write_grid, write_history, write_observations, write_snapshot};

#[derive(Debug, Parser)]
#[command(name = "icoadj", version, about = "Tracer transport, adjoints and 4D-Var on icosahedral grids")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Worker count (recorded; runs are sequential)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for every random draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory that relative output paths are resolved against
    #[arg(long = "out", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a grid, print its statistics and optionally dump it
    Grid(GridArgs),
    /// Run one advection test and write its error norms
    Advect(AdvectArgs),
    /// Verify an adjoint; prints a JSON report and fails if the check does
    AdjointTest(AdjointTestArgs),
    /// Run a twin-experiment assimilation from a config file
    Assimilate(AssimilateArgs),
    /// Run one experiment family into a directory
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 2)]
    pub nr: u32,
    #[arg(long, default_value_t = 2)]
    pub nb: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print counts and metrics as JSON
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Args)]
pub struct AdvectArgs {
    #[arg(long, default_value = "cosine_bell:solid_rotation")]
    pub case: CasePair,
    #[arg(long, default_value_t = 3)]
    pub grid_nb: u32,
    #[arg(long, default_value_t = 600.0)]
    pub dt: f64,
    #[arg(long, default_value = "none", value_parser = parse_limiter)]
    pub limiter: Limiter,
    #[arg(long, default_value = "2", value_parser = parse_order)]
    pub order: Order,
    #[arg(long, default_value_t = PERIOD)]
    pub t_end: f64,
    /// Norms CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every K-th field to FILE
    #[arg(long, num_args = 2, value_names = ["K", "FILE"])]
    pub dump_every: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct AdjointTestArgs {
    #[arg(long, default_value = "standard", value_parser = parse_method)]
    pub method: AdjointMethod,
    #[arg(long, default_value = "vortex:moving_vortices")]
    pub case: CasePair,
    #[arg(long, value_enum)]
    pub check: Check,
    #[arg(long, default_value_t = 2)]
    pub grid_nb: u32,
    #[arg(long, default_value_t = 1200.0)]
    pub dt: f64,
    #[arg(long, default_value_t = PERIOD)]
    pub t_end: f64,
    #[arg(long, default_value = "none", value_parser = parse_limiter)]
    pub limiter: Limiter,
    /// Number of random samples (default depends on the check)
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum, default_value = "random")]
    pub direction: Direction,
    /// Also write the report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssimilateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Cost history CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recovered initial field
    #[arg(long)]
    pub xout: Option<PathBuf>,
    /// Read observations from this CSV instead of synthesizing them
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Write the observations used
    #[arg(long)]
    pub obs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub family: Family,
    #[arg(long)]
    pub case: Option<CasePair>,
    /// Grid level; for the mesh sweep the finest level
    #[arg(long)]
    pub grid_nb: Option<u32>,
    /// Time step on R2B3
    #[arg(long, default_value_t = 600.0)]
    pub dt: f64,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Larger grids and longer iteration counts
    #[arg(long)]
    pub full: bool,
}

/// Resolves `path` against the global output directory.
fn resolve(base: &Option<PathBuf>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Runs the parsed command. Returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    let base = cli.out_dir.clone();
    match cli.command {
        Command::Grid(a) => grid(&base, a),
        Command::Advect(a) => advect(&base, a),
        Command::AdjointTest(a) => adjoint_test(&base, cli.seed, a),
        Command::Assimilate(a) => assimilate(&base, a),
        Command::Experiment(a) => {
            let out = base.clone().unwrap_or_else(|| PathBuf::from("results").join(a.family.name()));
            let spec = ExperimentSpec {
                family: a.family,
                case: a.case,
                n_b: a.grid_nb,
                dt: a.dt,
                t_end: a.t_end,
                iters: a.iters,
                seed: cli.seed,
                full: a.full,
                threads,
                out,
            };
            validate(&spec)?;
            let manifest = run_experiment(&spec)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(0)
        }
    }
}

fn grid(base: &Option<PathBuf>, a: GridArgs) -> Result<i32> {
    let g = SphereGrid::build(a.nr, a.nb, EARTH_RADIUS).context("building grid")?;
    if let Some(p) = &a.out {
        let p = resolve(base, p);
        let mut w = create(&p)?;
        write_grid(&g, &mut w)?;
        w.flush()?;
    }
    if a.report || a.out.is_none() {
        let m = g.metrics();
        let report = json!({
            "grid": grid_json(&g),
            "total_area": g.total_area(),
            "min_cell_area": m.min_cell_area,
            "max_cell_area": m.max_cell_area,
            "min_edge_km": m.min_edge_length / 1e3,
            "max_edge_km": m.max_edge_length / 1e3,
            "global_edge_ratio": m.global_edge_ratio,
            "max_triangle_edge_ratio": m.max_triangle_edge_ratio,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(0)
}

fn advect(base: &Option<PathBuf>, a: AdvectArgs) -> Result<i32> {
    let g = SphereGrid::build(2, a.grid_nb, EARTH_RADIUS).context("building grid")?;
    let scheme = SchemeConfig::new(a.dt).with_order(a.order).with_limiter(a.limiter);
    let mut dump = match &a.dump_every {
        Some(v) => {
            let k: usize = v[0].parse().context("--dump-every K must be a positive integer")?;
            if k == 0 {
                bail!("--dump-every K must be positive");
            }
            Some((k, create(&resolve(base, Path::new(&v[1])))?))
        }
        None => None,
    };
    let mut io_err = None;
    let run = forward_run("forward", &g, a.case, scheme, a.t_end, |n, q| {
        if let Some((k, w)) = dump.as_mut() {
            if n % *k == 0 && io_err.is_none() {
                io_err = write_snapshot(n, q, w).err();
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing field dump");
    }
    if let Some((_, mut w)) = dump {
        w.flush()?;
    }
    let lines = [norms_header("scheme"), norms_row(&format!("{}/{}", a.limiter.name(), order_name(a.order)), &run.norms)];
    match &a.out {
        Some(p) => {
            let mut w = create(&resolve(base, p))?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
            w.flush()?;
        }
        None => {
            for l in &lines {
                println!("{l}");
            }
        }
    }
    eprintln!(
        "steps {} cfl_max {:.3} mass_rel_change {:.3e}",
        run.n_steps, run.cfl_max, run.mass_change
    );
    Ok(0)
}

fn order_name(o: Order) -> &'static str {
    match o {
        Order::First => "order1",
        Order::Second => "order2",
    }
}

fn adjoint_test(base: &Option<PathBuf>, seed: u64, a: AdjointTestArgs) -> Result<i32> {
    let mut spec = CheckSpec::new(a.check, a.method, a.case);
    spec.n_b = a.grid_nb;
    spec.dt = a.dt;
    spec.t_end = a.t_end;
    spec.limiter = a.limiter;
    spec.direction = a.direction;
    spec.seed = seed;
    if let Some(s) = a.samples {
        spec.samples = s;
    }
    let report = run_check(&spec)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(p) = &a.out {
        let mut w = create(&resolve(base, p))?;
        writeln!(w, "{text}")?;
        w.flush()?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn assimilate(base: &Option<PathBuf>, a: AssimilateArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let rc = RunConfig::parse(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let g = SphereGrid::build(rc.n_r, rc.n_b, EARTH_RADIUS).context("building grid")?;
    let cfg = rc.twin();
    let mut twin = Twin::build(&g, &cfg).context("building the twin experiment")?;
    if let Some(p) = &a.obs {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let obs = read_observations(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?;
        let qb = twin.problem.background.clone();
        let winds = twin.problem.winds().clone();
        twin.problem = AssimProblem::with_winds(&g, cfg.scheme.clone(), winds, cfg.method, qb, obs, cfg.weights)
            .context("observations do not fit the configured run")?;
    }
    if let Some(p) = &a.obs_out {
        let mut w = create(&resolve(base, p))?;
        write_observations(&twin.problem.obs, &mut w)?;
        w.flush()?;
    }
    let x0 = twin.problem.background.values.clone();
    let lb = LbfgsConfig { max_iters: a.iters, ..LbfgsConfig::default() };
    let r = minimize(&mut twin.problem, &x0, &lb).context("minimization")?;
    match &a.out {
        Some(p) => {
            let mut w = create(&resolve(base, p))?;
            write_history(&r.history, &mut w)?;
            w.flush()?;
        }
        None => write_history(&r.history, std::io::stdout().lock())?,
    }
    let x = icoadj::fields::CellField::from_values(&g, r.x.clone())?;
    if let Some(p) = &a.xout {
        let mut w = create(&resolve(base, p))?;
        write_field(&x, &mut w)?;
        w.flush()?;
    }
    let bounds = rc.case.scalar.bounds();
    let before = icoadj::fields::compute_norms(&twin.problem.background, &twin.truth, &g, bounds);
    let after = icoadj::fields::compute_norms(&x, &twin.truth, &g, bounds)?;
    eprintln!(
        "J {:.6e} -> {:.6e} after {} iterations ({} evaluations, {} restarts, {:?})",
        r.history.first().map_or(f64::NAN, |h| h.j),
        r.best.value,
        r.history.len().saturating_sub(1),
        r.evaluations,
        r.restarts,
        r.termination
    );
    if let Ok(b) = before {
        eprintln!("l2_rel vs truth {:.4e} -> {:.4e}", b.l2_rel, after.l2_rel);
    }
    Ok(0)
}
