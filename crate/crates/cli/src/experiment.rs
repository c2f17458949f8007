//! Experiment families. Each writes norm tables, cost histories and a
//! `manifest.json` into one output directory.
//!
//! CSV files hold results only, so reruns of the same spec are
//! byte-identical; timings go to the manifest.

use std::borrow::Cow;
use std::cell::Cell;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use icoadj::adjoint::{run_adjoint, AdjointMethod, TerminalCondition};
use icoadj::assim::{BackgroundMode, TruthSource, Twin, TwinConfig, Weights};
use icoadj::cases::{exact_backward, exact_solution, initial_field, EdgeWinds, ScalarCase, WindCase, WindKind};
use icoadj::fields::{compute_norms, mass, CellField, NormReport};
use icoadj::optim::{minimize, LbfgsConfig, LbfgsResult};
use icoadj::spheregrid::SphereGrid;
use icoadj::transport::{steps_for, AnalyticWinds, Limiter, SchemeConfig, Transport, WindSeries};
use icoadj::{EARTH_RADIUS, PERIOD};
use serde::Serialize;
use serde_json::json;

use crate::config::CasePair;
use crate::formats::{norms_header, norms_row, write_history};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    AdvectTable,
    AdjointCompare,
    AssimConvergence,
    AssimObsSweep,
    AssimMeshSweep,
    AssimWeightSweep,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::AdvectTable => "advect-table",
            Family::AdjointCompare => "adjoint-compare",
            Family::AssimConvergence => "assim-convergence",
            Family::AssimObsSweep => "assim-obs-sweep",
            Family::AssimMeshSweep => "assim-mesh-sweep",
            Family::AssimWeightSweep => "assim-weight-sweep",
        }
    }

    fn default_case(self) -> CasePair {
        let (scalar, wind) = match self {
            Family::AdvectTable => (ScalarCase::CosineBell, WindKind::SolidBodyRotation),
            Family::AssimWeightSweep => (ScalarCase::TwoSlottedCylinders, WindKind::DeformationalDiv),
            _ => (ScalarCase::Vortex, WindKind::MovingVortices),
        };
        CasePair { scalar, wind }
    }
}

/// Everything needed to run one family. `None` fields take family
/// defaults.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub family: Family,
    pub case: Option<CasePair>,
    /// Bisection level; for the mesh sweep the finest level.
    pub n_b: Option<u32>,
    /// Time step on R2B3. The mesh sweep halves it per refinement.
    pub dt: f64,
    pub t_end: Option<f64>,
    pub iters: Option<usize>,
    pub seed: u64,
    pub full: bool,
    pub threads: usize,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn new(family: Family, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            family,
            case: None,
            n_b: None,
            dt: 600.0,
            t_end: None,
            iters: None,
            seed: 0,
            full: false,
            threads: 1,
            out: out.into(),
        }
    }

    pub fn case(&self) -> CasePair {
        self.case.unwrap_or(self.family.default_case())
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(PERIOD)
    }

    pub fn iters(&self) -> usize {
        self.iters.unwrap_or(if self.full { 300 } else { 50 })
    }

    /// Grids the family runs on.
    pub fn levels(&self) -> Vec<u32> {
        match self.family {
            Family::AssimMeshSweep => {
                let top = self.n_b.unwrap_or(if self.full { 5 } else { 3 });
                (2.min(top)..=top).collect()
            }
            Family::AdvectTable | Family::AdjointCompare => {
                vec![self.n_b.unwrap_or(if self.full { 4 } else { 3 })]
            }
            _ => vec![self.n_b.unwrap_or(3)],
        }
    }

    fn dt_for(&self, n_b: u32) -> f64 {
        match self.family {
            Family::AssimMeshSweep => self.dt * 2f64.powi(3 - n_b as i32),
            _ => self.dt,
        }
    }

    fn inputs(&self) -> serde_json::Value {
        json!({
            "family": self.family,
            "case": self.case().to_string(),
            "levels": self.levels(),
            "dt": self.dt,
            "t_end": self.t_end(),
            "iters": self.iters(),
            "seed": self.seed,
            "full": self.full,
            "threads": self.threads,
        })
    }
}

/// Grid description for manifests.
pub fn grid_json(g: &SphereGrid) -> serde_json::Value {
    json!({
        "name": format!("R{}B{:02}", g.n_r, g.n_b),
        "n_r": g.n_r,
        "n_b": g.n_b,
        "cells": g.n_cells(),
        "edges": g.n_edges(),
        "vertices": g.n_vertices(),
    })
}

/// Passes winds through while tracking the largest Courant number seen.
pub struct TrackedWinds<'a, W: WindSeries + ?Sized> {
    pub inner: &'a W,
    pub transport: &'a Transport<'a>,
    max: Cell<f64>,
}

impl<'a, W: WindSeries + ?Sized> TrackedWinds<'a, W> {
    pub fn new(inner: &'a W, transport: &'a Transport<'a>) -> Self {
        TrackedWinds { inner, transport, max: Cell::new(0.0) }
    }

    pub fn cfl_max(&self) -> f64 {
        self.max.get()
    }
}

impl<W: WindSeries + ?Sized> WindSeries for TrackedWinds<'_, W> {
    fn winds(&self, n: usize) -> Cow<'_, EdgeWinds> {
        let w = self.inner.winds(n);
        let c = self.transport.max_courant(&w).1;
        if c > self.max.get() {
            self.max.set(c);
        }
        w
    }
}

/// Result of one forward or backward run.
#[derive(Debug, Clone)]
pub struct Run {
    pub label: String,
    pub q: CellField,
    pub truth: CellField,
    pub norms: NormReport,
    pub n_steps: usize,
    pub cfl_max: f64,
    pub mass_change: f64,
    pub seconds: f64,
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        (b - a).abs()
    } else {
        ((b - a) / a).abs()
    }
}

/// Forward run of `case` to `t_end` compared with the exact solution.
pub fn forward_run(
    label: &str,
    grid: &SphereGrid,
    case: CasePair,
    scheme: SchemeConfig,
    t_end: f64,
    mut observe: impl FnMut(usize, &CellField),
) -> Result<Run> {
    let start = Instant::now();
    let wind = WindCase::new(case.wind, grid.radius, PERIOD);
    let tr = Transport::new(grid, scheme).context("setting up transport")?;
    let n_steps = steps_for(t_end, tr.dt())?;
    let q0 = initial_field(case.scalar, grid);
    let src = AnalyticWinds { case: &wind, grid, dt: tr.dt() };
    let winds = TrackedWinds::new(&src, &tr);
    let q = tr
        .run_steps(&q0, n_steps, &winds, |n, q| observe(n, q))
        .with_context(|| format!("{label}: forward run"))?;
    let truth = exact_solution(case.scalar, &wind, t_end, grid).with_context(|| format!("{label}: exact solution"))?;
    let rho = CellField::from_values(grid, tr.density().to_vec())?;
    let mass_change = relative_change(mass(&q0, &rho, grid)?, mass(&q, &rho, grid)?);
    let norms = compute_norms(&q, &truth, grid, case.scalar.bounds())?;
    Ok(Run {
        label: label.to_string(),
        q,
        truth,
        norms,
        n_steps,
        cfl_max: winds.cfl_max(),
        mass_change,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Adjoint run backward from `q*(t_end) = q0` with no other forcing,
/// compared with the exact backward transport of the initial field.
pub fn backward_run(
    label: &str,
    grid: &SphereGrid,
    case: CasePair,
    scheme: SchemeConfig,
    method: AdjointMethod,
    t_end: f64,
) -> Result<Run> {
    let start = Instant::now();
    let wind = WindCase::new(case.wind, grid.radius, PERIOD);
    let tr = Transport::new(grid, scheme).context("setting up transport")?;
    let n_steps = steps_for(t_end, tr.dt())?;
    let q_t = initial_field(case.scalar, grid);
    let src = AnalyticWinds { case: &wind, grid, dt: tr.dt() };
    let winds = TrackedWinds::new(&src, &tr);
    let mut term = TerminalCondition::new(&tr, &q_t, n_steps);
    let q = run_adjoint(method, &tr, &winds, n_steps, &mut term).with_context(|| format!("{label}: adjoint run"))?;
    let truth = if case.scalar == ScalarCase::Vortex && case.wind == WindKind::MovingVortices {
        exact_backward(&wind, t_end, grid)?
    } else {
        // the other flows come back to their start after a full period
        exact_solution(case.scalar, &wind, t_end, grid).with_context(|| format!("{label}: exact solution"))?
    };
    let norms = compute_norms(&q, &truth, grid, case.scalar.bounds())?;
    Ok(Run {
        label: label.to_string(),
        mass_change: relative_change(
            mass(&q_t, &CellField::constant(grid, 1.0), grid)?,
            mass(&q, &CellField::constant(grid, 1.0), grid)?,
        ),
        q,
        truth,
        norms,
        n_steps,
        cfl_max: winds.cfl_max(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_json(grid: &SphereGrid, dt: f64, r: &Run) -> serde_json::Value {
    json!({
        "label": r.label,
        "grid": grid_json(grid),
        "dt": dt,
        "n_steps": r.n_steps,
        "cfl_max": r.cfl_max,
        "mass_rel_change": r.mass_change,
        "seconds": r.seconds,
    })
}

/// The assimilation variants compared in every sweep.
pub const ASSIM_METHODS: [(&str, AdjointMethod, Limiter); 3] = [
    ("standard", AdjointMethod::Standard, Limiter::None),
    ("artsource", AdjointMethod::ArtSource, Limiter::None),
    ("artsource+minmax", AdjointMethod::ArtSource, Limiter::FctMinMax),
];

/// Half-domain perturbation for the deformational flows, where the uniform
/// one leaves the zero background untouched.
pub fn default_background(wind: WindKind) -> BackgroundMode {
    match wind {
        WindKind::DeformationalNonDiv | WindKind::DeformationalDiv => BackgroundMode::half_domain(),
        _ => BackgroundMode::Uniform10Pct,
    }
}

/// Observation source for twins of `wind`: a monotone reference run for the
/// deformational flows, the model's own run otherwise.
pub fn default_truth(wind: WindKind) -> TruthSource {
    match wind {
        WindKind::DeformationalNonDiv | WindKind::DeformationalDiv => TruthSource::MonotoneReference,
        _ => TruthSource::ReferenceRun,
    }
}

pub struct AssimRun {
    pub label: String,
    pub result: LbfgsResult,
    pub x: CellField,
    pub background: CellField,
    pub truth: CellField,
    pub norms: NormReport,
    pub background_norms: NormReport,
    pub n_steps: usize,
    pub cfl_max: f64,
    pub seconds: f64,
}

/// Builds the twin for `cfg` and minimizes for `iters` iterations.
pub fn assimilate(label: &str, grid: &SphereGrid, cfg: &TwinConfig, iters: usize) -> Result<AssimRun> {
    let start = Instant::now();
    let mut twin = Twin::build(grid, cfg).with_context(|| format!("{label}: building the twin experiment"))?;
    let background = twin.problem.background.clone();
    let cfl_max = twin
        .problem
        .winds()
        .levels
        .iter()
        .map(|w| twin.problem.transport().max_courant(w).1)
        .fold(0.0, f64::max);
    let n_steps = twin.problem.winds().levels.len();
    let lb = LbfgsConfig { max_iters: iters, ..LbfgsConfig::default() };
    let result = minimize(&mut twin.problem, &background.values, &lb).with_context(|| format!("{label}: minimization"))?;
    let x = CellField::from_values(grid, result.x.clone())?;
    let bounds = cfg.case.bounds();
    Ok(AssimRun {
        label: label.to_string(),
        norms: compute_norms(&x, &twin.truth, grid, bounds)?,
        background_norms: compute_norms(&background, &twin.truth, grid, bounds)?,
        result,
        x,
        background,
        truth: twin.truth,
        n_steps,
        cfl_max,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn assim_json(grid: &SphereGrid, cfg: &TwinConfig, r: &AssimRun) -> serde_json::Value {
    let res = &r.result;
    json!({
        "label": r.label,
        "grid": grid_json(grid),
        "dt": cfg.scheme.dt,
        "n_steps": r.n_steps,
        "cfl_max": r.cfl_max,
        "method": cfg.method.name(),
        "limiter": cfg.scheme.limiter.name(),
        "n_obs": cfg.n_obs,
        "w_b": cfg.weights.w_b,
        "w_o": cfg.weights.w_o,
        "background": cfg.background.name(),
        "truth": cfg.truth.name(),
        "iterations": res.history.len().saturating_sub(1),
        "evaluations": res.evaluations,
        "restarts": res.restarts,
        "termination": format!("{:?}", res.termination),
        "j_initial": res.history.first().map(|h| h.j),
        "j_final": res.best.value,
        "seconds": r.seconds,
    })
}

/// Safe file stem for a label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn lines(&mut self, name: &str, lines: &[String]) -> Result<()> {
        self.write(name, |w| {
            for l in lines {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })
    }
}

/// Runs one family and returns the manifest it wrote.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let start = Instant::now();
    let mut out = Output::create(&spec.out)?;
    let case = spec.case();
    let t_end = spec.t_end();
    let runs = match spec.family {
        Family::AdvectTable => advect_table(spec, case, t_end, &mut out)?,
        Family::AdjointCompare => adjoint_compare(spec, case, t_end, &mut out)?,
        _ => assim_family(spec, case, t_end, &mut out)?,
    };
    let manifest = json!({
        "tool": "icoadj",
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": spec.inputs(),
        "runs": runs,
        "files": out.files,
        "seconds": start.elapsed().as_secs_f64(),
    });
    let path = spec.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

fn build_grid(n_b: u32) -> Result<SphereGrid> {
    SphereGrid::build(2, n_b, EARTH_RADIUS).with_context(|| format!("building grid R2B{n_b}"))
}

fn advect_table(spec: &ExperimentSpec, case: CasePair, t_end: f64, out: &mut Output) -> Result<Vec<serde_json::Value>> {
    let n_b = spec.levels()[0];
    let g = build_grid(n_b)?;
    let dt = spec.dt_for(n_b);
    let plain = SchemeConfig::new(dt);
    let minmax = SchemeConfig::new(dt).with_limiter(Limiter::FctMinMax);
    let runs = vec![
        forward_run("forward-nolim", &g, case, plain.clone(), t_end, |_, _| {})?,
        backward_run("standard-adjoint", &g, case, plain.clone(), AdjointMethod::Standard, t_end)?,
        backward_run("artsource-nolim", &g, case, plain, AdjointMethod::ArtSource, t_end)?,
        forward_run("forward+minmax", &g, case, minmax.clone(), t_end, |_, _| {})?,
        backward_run("artsource+minmax", &g, case, minmax, AdjointMethod::ArtSource, t_end)?,
    ];
    write_norm_table(out, "norms.csv", &runs)?;
    Ok(runs.iter().map(|r| run_json(&g, dt, r)).collect())
}

fn adjoint_compare(spec: &ExperimentSpec, case: CasePair, t_end: f64, out: &mut Output) -> Result<Vec<serde_json::Value>> {
    let n_b = spec.levels()[0];
    let g = build_grid(n_b)?;
    let dt = spec.dt_for(n_b);
    let mut runs = vec![backward_run("standard", &g, case, SchemeConfig::new(dt), AdjointMethod::Standard, t_end)?];
    for (label, lim) in [
        ("artsource-nolim", Limiter::None),
        ("artsource+minmax", Limiter::FctMinMax),
        ("artsource+positive", Limiter::FctPositive),
    ] {
        let s = SchemeConfig::new(dt).with_limiter(lim);
        runs.push(backward_run(label, &g, case, s, AdjointMethod::ArtSource, t_end)?);
    }
    write_norm_table(out, "norms.csv", &runs)?;
    Ok(runs.iter().map(|r| run_json(&g, dt, r)).collect())
}

fn write_norm_table(out: &mut Output, name: &str, runs: &[Run]) -> Result<()> {
    let mut lines = vec![norms_header("scheme")];
    lines.extend(runs.iter().map(|r| norms_row(&r.label, &r.norms)));
    out.lines(name, &lines)
}

fn twin_config(case: CasePair, t_end: f64, dt: f64, method: AdjointMethod, limiter: Limiter) -> TwinConfig {
    TwinConfig {
        case: case.scalar,
        wind: case.wind,
        t_end,
        scheme: SchemeConfig::new(dt).with_limiter(limiter),
        method,
        n_obs: 0,
        truth: default_truth(case.wind),
        background: default_background(case.wind),
        weights: Weights::default(),
    }
}

fn assim_family(spec: &ExperimentSpec, case: CasePair, t_end: f64, out: &mut Output) -> Result<Vec<serde_json::Value>> {
    let iters = spec.iters();
    let mut manifest = Vec::new();
    let mut norms = vec![norms_header("run")];
    let mut background_done = Vec::new();
    for n_b in spec.levels() {
        let g = build_grid(n_b)?;
        let dt = spec.dt_for(n_b);
        let cells = g.n_cells();
        // (run label, config)
        let mut plan: Vec<(String, TwinConfig)> = Vec::new();
        for (name, method, lim) in ASSIM_METHODS {
            let base = TwinConfig { n_obs: cells / 4, ..twin_config(case, t_end, dt, method, lim) };
            match spec.family {
                Family::AssimConvergence => plan.push((name.to_string(), base)),
                Family::AssimObsSweep => {
                    for div in [8, 4, 2, 1] {
                        let n_obs = cells / div;
                        plan.push((format!("{name}/n_obs={n_obs}"), TwinConfig { n_obs, ..base.clone() }));
                    }
                }
                Family::AssimMeshSweep => plan.push((format!("{name}/R2B{n_b:02}"), base)),
                Family::AssimWeightSweep => {
                    for k in 5..=10 {
                        let w_o = k as f64 / 10.0;
                        let weights = Weights { w_b: 1.0 - w_o, w_o };
                        plan.push((format!("{name}/w_o={w_o:.1}"), TwinConfig { weights, ..base.clone() }));
                    }
                }
                Family::AdvectTable | Family::AdjointCompare => unreachable!(),
            }
        }
        for (label, cfg) in plan {
            let r = assimilate(&label, &g, &cfg, iters)?;
            if !background_done.contains(&n_b) {
                background_done.push(n_b);
                norms.push(norms_row(&format!("background/R2B{n_b:02}"), &r.background_norms));
            }
            norms.push(norms_row(&label, &r.norms));
            out.write(&format!("history_{}.csv", file_stem(&label)), |w| write_history(&r.result.history, w))?;
            manifest.push(assim_json(&g, &cfg, &r));
        }
    }
    out.lines("norms.csv", &norms)?;
    Ok(manifest)
}

/// Family names accepted on the command line.
pub fn family_names() -> Vec<&'static str> {
    Family::value_variants().iter().map(|f| f.name()).collect()
}

/// Rejects specs that cannot run before any work is done.
pub fn validate(spec: &ExperimentSpec) -> Result<()> {
    if !(spec.dt > 0.0) {
        bail!("dt must be positive");
    }
    for n_b in spec.levels() {
        steps_for(spec.t_end(), spec.dt_for(n_b)).with_context(|| format!("T is not a whole number of steps on R2B{n_b}"))?;
    }
    if spec.iters() == 0 && spec.family != Family::AdvectTable && spec.family != Family::AdjointCompare {
        bail!("iters must be at least 1");
    }
    Ok(())
}
