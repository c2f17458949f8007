//! Observations, background, the discrete 4D-Var cost and its gradient.
//!
//! ```text
//! J   = w_b J_b + w_o J_o
//! J_b = Σ_i K^b_i (q0 − q^b)_i²
//! J_o = dt/2 Σ_{n=0..N} Σ_{i∈O} K^o_i (o^n_i − q^n_i)²
//! K^b_i = ½ (|Ω_i| / ā)²,   K^o_i = ½ (|Ω_i| / ā_o)²
//! ```
//! where `ā` and `ā_o` are the mean areas of all and of observed cells.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::adjoint::{run_adjoint, AdjointForcing, AdjointMethod};
use crate::cases::{exact_solution, initial_field, ScalarCase, WindCase, WindKind};
use crate::fields::CellField;
use crate::math::{self, PI};
use crate::optim::{Evaluation, Objective};
use crate::spheregrid::SphereGrid;
use crate::transport::{steps_for, CachedWinds, Limiter, SchemeConfig, Transport, WindSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    /// Closed-form solution (moving vortices only).
    Exact,
    /// Forward run of the model itself.
    ReferenceRun,
    /// Forward run of the model's scheme with the min-max limiter, a
    /// monotone reference shared by limited and unlimited models.
    MonotoneReference,
}

impl TruthSource {
    pub fn name(self) -> &'static str {
        match self {
            TruthSource::Exact => "exact",
            TruthSource::ReferenceRun => "reference",
            TruthSource::MonotoneReference => "monotone_reference",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TruthSource::Exact),
            "reference" | "reference_run" => Ok(TruthSource::ReferenceRun),
            "monotone_reference" => Ok(TruthSource::MonotoneReference),
            _ => Err(Error::InvalidArgument("unknown truth source")),
        }
    }
}

/// Values `o^n_i` at observed cells for levels `0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub cells: Vec<usize>,
    pub n_steps: usize,
    /// Row-major `[level][observation]`.
    pub values: Vec<f64>,
}

impl ObservationSet {
    pub fn n_obs(&self) -> usize {
        self.cells.len()
    }

    pub fn at_level(&self, n: usize) -> &[f64] {
        let k = self.cells.len();
        &self.values[n * k..(n + 1) * k]
    }

    pub fn validate(&self, grid: &SphereGrid) -> Result<()> {
        let mut sorted = self.cells.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.cells.len() || sorted.last().is_some_and(|&c| c >= grid.n_cells()) {
            return Err(Error::InvalidArgument("observation cells must be unique and valid"));
        }
        if self.values.len() != (self.n_steps + 1) * self.cells.len() {
            return Err(Error::InvalidArgument("observation value count"));
        }
        Ok(())
    }

    /// Samples `field(n)` at the observed cells for every level.
    pub fn sample(cells: Vec<usize>, n_steps: usize, mut field: impl FnMut(usize) -> Result<CellField>) -> Result<Self> {
        let mut values = Vec::with_capacity((n_steps + 1) * cells.len());
        for n in 0..=n_steps {
            let q = field(n)?;
            values.extend(cells.iter().map(|&c| q[c]));
        }
        Ok(ObservationSet {
            cells,
            n_steps,
            values,
        })
    }
}

/// Evenly strided subset of `n_obs` cells starting at cell 0.
pub fn observation_cells(n_cells: usize, n_obs: usize) -> Result<Vec<usize>> {
    if n_obs == 0 || n_obs > n_cells || n_cells % n_obs != 0 {
        return Err(Error::InvalidArgument("n_obs must divide the cell count"));
    }
    let stride = n_cells / n_obs;
    Ok((0..n_obs).map(|k| k * stride).collect())
}

/// Observations of the truth started from `q_true0`.
pub fn make_observations(
    source: TruthSource,
    case: ScalarCase,
    wind: &WindCase,
    transport: &Transport,
    t_end: f64,
    cells: Vec<usize>,
) -> Result<ObservationSet> {
    let grid = transport.grid;
    let dt = transport.dt();
    let n_steps = steps_for(t_end, dt)?;
    match source {
        TruthSource::Exact => {
            if !(case == ScalarCase::Vortex && wind.kind == WindKind::MovingVortices) {
                return Err(Error::NoExactSolution);
            }
            ObservationSet::sample(cells, n_steps, |n| exact_solution(case, wind, n as f64 * dt, grid))
        }
        TruthSource::ReferenceRun | TruthSource::MonotoneReference => {
            let winds = CachedWinds::from_case(wind, grid, dt, n_steps);
            let q0 = initial_field(case, grid);
            if source == TruthSource::MonotoneReference {
                let limited = Transport::new(grid, transport.config.clone().with_limiter(Limiter::FctMinMax))?;
                observe_run(&limited, &q0, &winds, n_steps, cells)
            } else {
                observe_run(transport, &q0, &winds, n_steps, cells)
            }
        }
    }
}

/// Observations taken from a forward run of `transport` from `q0`.
pub fn observe_run<W: WindSeries + ?Sized>(
    transport: &Transport,
    q0: &CellField,
    winds: &W,
    n_steps: usize,
    cells: Vec<usize>,
) -> Result<ObservationSet> {
    let mut values = Vec::with_capacity((n_steps + 1) * cells.len());
    transport.run_steps(q0, n_steps, winds, |_, q| {
        values.extend(cells.iter().map(|&c| q[c]));
    })?;
    Ok(ObservationSet {
        cells,
        n_steps,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundMode {
    /// `q^b = 1.1 q0` everywhere.
    Uniform10Pct,
    /// Perturb only the half `split_lon ≤ λ < split_lon + π`: `1.1 q0` where
    /// `q0 ≠ 0`, else `q0 + 0.01 max(q0)`.
    HalfDomain { split_lon: f64 },
}

impl BackgroundMode {
    pub fn half_domain() -> Self {
        BackgroundMode::HalfDomain { split_lon: PI }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackgroundMode::Uniform10Pct => "uniform10pct",
            BackgroundMode::HalfDomain { .. } => "halfdomain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform10pct" => Ok(BackgroundMode::Uniform10Pct),
            "halfdomain" => Ok(BackgroundMode::half_domain()),
            _ => Err(Error::InvalidArgument("unknown background mode")),
        }
    }
}

pub fn make_background(q0: &CellField, mode: BackgroundMode, grid: &SphereGrid) -> Result<CellField> {
    q0.check_grid(grid)?;
    match mode {
        BackgroundMode::Uniform10Pct => Ok(q0.map(|v| 1.1 * v)),
        BackgroundMode::HalfDomain { split_lon } => {
            let floor = 0.01 * q0.max();
            let mut qb = q0.clone();
            for j in 0..grid.n_cells() {
                let (lon, _) = grid.cell_lonlat(j);
                if math::wrap_lon(lon - split_lon) < PI {
                    qb[j] = if q0[j] != 0.0 { 1.1 * q0[j] } else { q0[j] + floor };
                }
            }
            Ok(qb)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub w_b: f64,
    pub w_o: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { w_b: 0.5, w_o: 0.5 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_b >= 0.0 && self.w_o >= 0.0) || self.w_b + self.w_o == 0.0 {
            return Err(Error::InvalidArgument("weights must be nonnegative and not both zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub total: f64,
    pub jb: f64,
    pub jo: f64,
}

/// Adjoint forcing `f^n_j = w_o K^o_j (q^n_j − o^n_j) / |Ω_j|` from stored
/// misfits.
struct MisfitForcing<'a> {
    cells: &'a [usize],
    coef: Vec<f64>,
    misfit: &'a [f64],
}

impl AdjointForcing for MisfitForcing<'_> {
    fn forcing(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        let k = self.cells.len();
        let m = &self.misfit[n * k..(n + 1) * k];
        for (i, &c) in self.cells.iter().enumerate() {
            out[c] = self.coef[i] * m[i];
        }
        Ok(())
    }
}

/// Everything needed to evaluate the cost and its gradient.
pub struct AssimProblem<'g> {
    pub grid: &'g SphereGrid,
    transport: Transport<'g>,
    winds: CachedWinds,
    pub n_steps: usize,
    pub method: AdjointMethod,
    pub background: CellField,
    pub obs: ObservationSet,
    pub weights: Weights,
    kb: Vec<f64>,
    ko: Vec<f64>,
    forward_runs: Cell<usize>,
    adjoint_runs: Cell<usize>,
}

impl<'g> AssimProblem<'g> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &'g SphereGrid,
        config: SchemeConfig,
        wind: &WindCase,
        t_end: f64,
        method: AdjointMethod,
        background: CellField,
        obs: ObservationSet,
        weights: Weights,
    ) -> Result<Self> {
        let n_steps = steps_for(t_end, config.dt)?;
        let winds = CachedWinds::from_case(wind, grid, config.dt, n_steps);
        Self::with_winds(grid, config, winds, method, background, obs, weights)
    }

    /// Like `new` but with winds already tabulated per step.
    pub fn with_winds(
        grid: &'g SphereGrid,
        config: SchemeConfig,
        winds: CachedWinds,
        method: AdjointMethod,
        background: CellField,
        obs: ObservationSet,
        weights: Weights,
    ) -> Result<Self> {
        if method == AdjointMethod::Standard && config.limiter != Limiter::None {
            return Err(Error::LimitedScheme);
        }
        weights.validate()?;
        background.check_grid(grid)?;
        obs.validate(grid)?;
        let n_steps = winds.levels.len();
        if obs.n_steps != n_steps {
            return Err(Error::LevelMismatch {
                expected: n_steps,
                got: obs.n_steps,
            });
        }
        let transport = Transport::new(grid, config)?;
        let mean_area = grid.total_area() / grid.n_cells() as f64;
        let kb = grid
            .cells
            .iter()
            .map(|c| {
                let r = c.area / mean_area;
                0.5 * r * r
            })
            .collect();
        let obs_area = math::pairwise_sum_by(obs.n_obs(), |i| grid.cells[obs.cells[i]].area);
        let mean_obs = obs_area / obs.n_obs() as f64;
        let ko = obs
            .cells
            .iter()
            .map(|&c| {
                let r = grid.cells[c].area / mean_obs;
                0.5 * r * r
            })
            .collect();
        Ok(AssimProblem {
            grid,
            transport,
            winds,
            n_steps,
            method,
            background,
            obs,
            weights,
            kb,
            ko,
            forward_runs: Cell::new(0),
            adjoint_runs: Cell::new(0),
        })
    }

    pub fn transport(&self) -> &Transport<'g> {
        &self.transport
    }

    pub fn winds(&self) -> &CachedWinds {
        &self.winds
    }

    pub fn dt(&self) -> f64 {
        self.transport.dt()
    }

    /// Diagonal background kernel `K^b`.
    pub fn kernel_b(&self) -> &[f64] {
        &self.kb
    }

    /// Diagonal observation kernel `K^o`, per observation.
    pub fn kernel_o(&self) -> &[f64] {
        &self.ko
    }

    /// Number of forward and adjoint runs so far.
    pub fn run_counts(&self) -> (usize, usize) {
        (self.forward_runs.get(), self.adjoint_runs.get())
    }

    pub fn set_background(&mut self, qb: CellField) -> Result<()> {
        qb.check_grid(self.grid)?;
        self.background = qb;
        Ok(())
    }

    fn jb(&self, q0: &CellField) -> f64 {
        math::pairwise_sum_by(q0.len(), |i| {
            let d = q0[i] - self.background[i];
            self.kb[i] * d * d
        })
    }

    /// Forward run returning `q^n − o^n` at observed cells for every level.
    fn misfits(&self, q0: &CellField) -> Result<Vec<f64>> {
        self.forward_runs.set(self.forward_runs.get() + 1);
        let cells = &self.obs.cells;
        let k = cells.len();
        let mut mis = Vec::with_capacity((self.n_steps + 1) * k);
        self.transport.run_steps(q0, self.n_steps, &self.winds, |n, q| {
            let o = &self.obs.values[n * k..(n + 1) * k];
            mis.extend(cells.iter().zip(o).map(|(&c, o)| q[c] - o));
        })?;
        Ok(mis)
    }

    fn jo(&self, mis: &[f64]) -> f64 {
        let k = self.obs.n_obs();
        0.5 * self.dt()
            * math::pairwise_sum_by(mis.len(), |m| {
                let v = mis[m];
                self.ko[m % k] * v * v
            })
    }

    fn breakdown(&self, jb: f64, jo: f64) -> CostBreakdown {
        CostBreakdown {
            total: self.weights.w_b * jb + self.weights.w_o * jo,
            jb,
            jo,
        }
    }

    pub fn cost(&self, q0: &CellField) -> Result<CostBreakdown> {
        q0.check_grid(self.grid)?;
        let mis = self.misfits(q0)?;
        Ok(self.breakdown(self.jb(q0), self.jo(&mis)))
    }

    /// Cost and its gradient with respect to `q0` (Euclidean, per cell).
    pub fn cost_and_gradient(&self, q0: &CellField) -> Result<(CostBreakdown, CellField)> {
        q0.check_grid(self.grid)?;
        let mis = self.misfits(q0)?;
        let cost = self.breakdown(self.jb(q0), self.jo(&mis));
        let coef = self
            .obs
            .cells
            .iter()
            .zip(&self.ko)
            .map(|(&c, k)| self.weights.w_o * k / self.grid.cells[c].area)
            .collect();
        let mut forcing = MisfitForcing {
            cells: &self.obs.cells,
            coef,
            misfit: &mis,
        };
        self.adjoint_runs.set(self.adjoint_runs.get() + 1);
        let qstar = run_adjoint(self.method, &self.transport, &self.winds, self.n_steps, &mut forcing)?;
        let m = self.transport.mass_weight();
        let mut g = vec![0.0; q0.len()];
        for j in 0..g.len() {
            g[j] = 2.0 * self.weights.w_b * self.kb[j] * (q0[j] - self.background[j]) - m[j] * qstar[j];
        }
        Ok((cost, CellField::from_values(self.grid, g)?))
    }

    pub fn gradient(&self, q0: &CellField) -> Result<CellField> {
        Ok(self.cost_and_gradient(q0)?.1)
    }
}

impl Objective for AssimProblem<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let q = CellField::from_values(self.grid, x.to_vec())?;
        let (c, g) = self.cost_and_gradient(&q)?;
        if !c.total.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Evaluation {
            value: c.total,
            jb: c.jb,
            jo: c.jo,
            gradient: g.values,
        })
    }

    fn restart(&mut self, x: &[f64]) {
        self.background.values.copy_from_slice(x);
    }
}

/// Description of a twin experiment: truth, observations and background.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinConfig {
    pub case: ScalarCase,
    pub wind: WindKind,
    pub t_end: f64,
    pub scheme: SchemeConfig,
    pub method: AdjointMethod,
    pub n_obs: usize,
    pub truth: TruthSource,
    pub background: BackgroundMode,
    pub weights: Weights,
}

/// A twin experiment ready for minimization.
pub struct Twin<'g> {
    pub problem: AssimProblem<'g>,
    pub truth: CellField,
}

impl<'g> Twin<'g> {
    pub fn build(grid: &'g SphereGrid, cfg: &TwinConfig) -> Result<Self> {
        let wind = WindCase::new(cfg.wind, grid.radius, crate::PERIOD);
        Self::build_with_wind(grid, cfg, &wind)
    }

    pub fn build_with_wind(grid: &'g SphereGrid, cfg: &TwinConfig, wind: &WindCase) -> Result<Self> {
        let n_steps = steps_for(cfg.t_end, cfg.scheme.dt)?;
        let winds = CachedWinds::from_case(wind, grid, cfg.scheme.dt, n_steps);
        let transport = Transport::new(grid, cfg.scheme.clone())?;
        let truth = initial_field(cfg.case, grid);
        let cells = observation_cells(grid.n_cells(), cfg.n_obs)?;
        let obs = match cfg.truth {
            TruthSource::Exact => make_observations(TruthSource::Exact, cfg.case, wind, &transport, cfg.t_end, cells)?,
            TruthSource::ReferenceRun => observe_run(&transport, &truth, &winds, n_steps, cells)?,
            TruthSource::MonotoneReference => {
                let limited = Transport::new(grid, cfg.scheme.clone().with_limiter(Limiter::FctMinMax))?;
                observe_run(&limited, &truth, &winds, n_steps, cells)?
            }
        };
        let background = make_background(&truth, cfg.background, grid)?;
        let problem = AssimProblem::with_winds(
            grid,
            cfg.scheme.clone(),
            winds,
            cfg.method,
            background,
            obs,
            cfg.weights,
        )?;
        Ok(Twin { problem, truth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_subset() {
        assert_eq!(observation_cells(16, 4).unwrap(), vec![0, 4, 8, 12]);
        assert_eq!(observation_cells(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(observation_cells(10, 3).is_err());
    }

    #[test]
    fn uniform_background_of_zero_is_zero() {
        let g = SphereGrid::build(1, 1, 1.0).unwrap();
        let z = CellField::zeros(&g);
        assert_eq!(make_background(&z, BackgroundMode::Uniform10Pct, &g).unwrap(), z);
    }

    #[test]
    fn weights_must_not_both_vanish() {
        assert!(Weights { w_b: 0.0, w_o: 0.0 }.validate().is_err());
        assert!(Weights { w_b: 0.0, w_o: 1.0 }.validate().is_ok());
    }
}
