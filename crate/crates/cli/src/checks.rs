//! Adjoint verification: duality, retro-transport and gradient checks.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use icoadj::adjoint::{
    artsource_adjoint_step, standard_adjoint_step, AdjointMethod, LinearFluxOperator,
};
use icoadj::assim::{TruthSource, Twin, TwinConfig, Weights};
use icoadj::cases::WindCase;
use icoadj::fields::CellField;
use icoadj::spheregrid::SphereGrid;
use icoadj::transport::{negate, steps_for, Limiter, SchemeConfig, Transport};
use icoadj::PERIOD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::CasePair;
use crate::experiment::default_background;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Duality,
    Retro,
    Gradient,
}

/// Perturbation directions for the gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Independent uniform values in `[-1, 1]` per cell.
    Random,
    /// Random combinations of a few large-scale waves.
    Smooth,
}

#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub check: Check,
    pub method: AdjointMethod,
    pub case: CasePair,
    pub n_b: u32,
    pub dt: f64,
    pub t_end: f64,
    pub limiter: Limiter,
    pub samples: usize,
    pub direction: Direction,
    pub seed: u64,
}

impl CheckSpec {
    pub fn new(check: Check, method: AdjointMethod, case: CasePair) -> Self {
        CheckSpec {
            check,
            method,
            case,
            n_b: 2,
            dt: 1200.0,
            t_end: PERIOD,
            limiter: Limiter::None,
            samples: match check {
                Check::Duality => 100,
                Check::Retro => 20,
                Check::Gradient => 5,
            },
            direction: Direction::Random,
            seed: 0,
        }
    }

    /// Pass threshold on the residual.
    pub fn tolerance(&self) -> f64 {
        match (self.check, self.method) {
            (Check::Gradient, AdjointMethod::ArtSource) => 5e-2,
            (Check::Gradient, AdjointMethod::Standard) => 1e-6,
            _ => 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub method: &'static str,
    pub case: String,
    pub grid: String,
    pub limiter: &'static str,
    pub dt: f64,
    pub tolerance: f64,
    /// Worst residual over all samples.
    pub residual: f64,
    pub residuals: Vec<f64>,
    pub passed: bool,
}

pub fn run_check(spec: &CheckSpec) -> Result<CheckReport> {
    if spec.samples == 0 {
        bail!("need at least one sample");
    }
    let grid = SphereGrid::build(2, spec.n_b, icoadj::EARTH_RADIUS).context("building grid")?;
    let residuals = match spec.check {
        Check::Duality => duality(spec, &grid)?,
        Check::Retro => retro(spec, &grid)?,
        Check::Gradient => gradient(spec, &grid)?,
    };
    let residual = residuals.iter().copied().fold(0.0, f64::max);
    let tolerance = spec.tolerance();
    Ok(CheckReport {
        check: spec.check,
        method: spec.method.name(),
        case: spec.case.to_string(),
        grid: format!("R2B{:02}", spec.n_b),
        limiter: spec.limiter.name(),
        dt: spec.dt,
        tolerance,
        residual,
        residuals,
        passed: residual.is_finite() && residual <= tolerance,
    })
}

fn random_field(g: &SphereGrid, rng: &mut ChaCha8Rng) -> CellField {
    CellField::from_values(g, (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn smooth_field(g: &SphereGrid, rng: &mut ChaCha8Rng) -> CellField {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    CellField::from_fn(g, |lon, lat| {
        c[0] * lat.sin()
            + c[1] * lat.cos() * lon.cos()
            + c[2] * lat.cos() * lon.sin()
            + c[3] * (2.0 * lat).sin() * lon.cos()
            + c[4] * lat.cos().powi(2) * (2.0 * lon).sin()
            + c[5]
    })
}

/// Adjoint step for `method`, unforced.
fn adjoint_step(method: AdjointMethod, tr: &Transport, w: &icoadj::cases::EdgeWinds, level: usize, qs: &CellField) -> Result<CellField> {
    let zero = vec![0.0; qs.len()];
    Ok(match method {
        AdjointMethod::Standard => {
            let op = LinearFluxOperator::assemble(tr, w, level)?;
            standard_adjoint_step(qs, &op, &zero, tr)?
        }
        AdjointMethod::ArtSource => artsource_adjoint_step(qs, w, &zero, tr)?,
    })
}

/// One-step identity `<q*^n, q^n>_D = <q*^{n+1}, q^{n+1}>_D` with the
/// forward step taken through the flux code path and the adjoint step
/// through `method`. Residuals are relative to the sum of absolute terms.
fn duality(spec: &CheckSpec, g: &SphereGrid) -> Result<Vec<f64>> {
    let tr = Transport::new(g, SchemeConfig::new(spec.dt).with_limiter(spec.limiter))?;
    let wind = WindCase::new(spec.case.wind, g.radius, PERIOD);
    let n_steps = steps_for(spec.t_end, spec.dt)?.max(1);
    let m = tr.mass_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let level = rng.gen_range(0..n_steps);
        let w = wind.edge_winds((level as f64 + 0.5) * spec.dt, g);
        let q = random_field(g, &mut rng);
        let p = random_field(g, &mut rng);
        let q1 = tr.step(&q, &w)?;
        let p0 = adjoint_step(spec.method, &tr, &w, level, &p)?;
        let (mut a, mut b, mut scale) = (0.0, 0.0, 0.0);
        for j in 0..q.len() {
            a += m[j] * p0[j] * q[j];
            b += m[j] * p[j] * q1[j];
            scale += (m[j] * p0[j] * q[j]).abs() + (m[j] * p[j] * q1[j]).abs();
        }
        out.push((a - b).abs() / scale);
    }
    Ok(out)
}

/// Unforced adjoint step against a forward step with the negated wind,
/// as `max |difference| / max |q*|`.
fn retro(spec: &CheckSpec, g: &SphereGrid) -> Result<Vec<f64>> {
    let tr = Transport::new(g, SchemeConfig::new(spec.dt).with_limiter(spec.limiter))?;
    let wind = WindCase::new(spec.case.wind, g.radius, PERIOD);
    let n_steps = steps_for(spec.t_end, spec.dt)?.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let level = rng.gen_range(0..n_steps);
        let w = wind.edge_winds((level as f64 + 0.5) * spec.dt, g);
        let qs = smooth_field(g, &mut rng);
        let a = adjoint_step(spec.method, &tr, &w, level, &qs)?;
        let b = tr.step(&qs, &negate(&w))?;
        out.push(a.axpy(-1.0, &b).max_abs() / qs.max_abs());
    }
    Ok(out)
}

/// The twin used by the gradient check: every cell observed, reference-run
/// observations, default weights.
pub fn gradient_twin<'g>(spec: &CheckSpec, g: &'g SphereGrid) -> Result<Twin<'g>> {
    let cfg = TwinConfig {
        case: spec.case.scalar,
        wind: spec.case.wind,
        t_end: spec.t_end,
        scheme: SchemeConfig::new(spec.dt).with_limiter(spec.limiter),
        method: spec.method,
        n_obs: g.n_cells(),
        truth: TruthSource::ReferenceRun,
        background: default_background(spec.case.wind),
        weights: Weights::default(),
    };
    Twin::build(g, &cfg).context("building the twin experiment")
}

/// Step sizes of the finite-difference plateau.
pub const FD_STEPS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

/// Centered differences of the cost at the background along each
/// direction. The residual per direction is the smallest relative error
/// over `FD_STEPS`.
fn gradient(spec: &CheckSpec, g: &SphereGrid) -> Result<Vec<f64>> {
    let twin = gradient_twin(spec, g)?;
    let p = &twin.problem;
    let q = p.background.clone();
    let grad = p.gradient(&q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let d = match spec.direction {
            Direction::Random => random_field(g, &mut rng),
            Direction::Smooth => smooth_field(g, &mut rng),
        };
        let gd = icoadj::math::dot(&grad.values, &d.values);
        let mut best = f64::INFINITY;
        for eps in FD_STEPS {
            let jp = p.cost(&q.axpy(eps, &d))?.total;
            let jm = p.cost(&q.axpy(-eps, &d))?.total;
            let fd = (jp - jm) / (2.0 * eps);
            best = best.min((fd - gd).abs() / gd.abs());
        }
        out.push(best);
    }
    Ok(out)
}
