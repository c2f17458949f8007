//! Flux-form transport: least-squares linear reconstruction, upwind
//! departure-point fluxes, Zalesak FCT and explicit Euler stepping.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use crate::cases::{EdgeWinds, WindCase};
use crate::fields::{CellField, EdgeField};
use crate::math::{self, Vec3};
use crate::spheregrid::SphereGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    /// Piecewise constant (first-order upwind).
    First,
    /// Least-squares linear reconstruction.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Limiter {
    None,
    /// Local bounds from the cell and its edge neighbors.
    FctMinMax,
    /// Lower bound zero only.
    FctPositive,
}

impl Limiter {
    pub fn name(self) -> &'static str {
        match self {
            Limiter::None => "none",
            Limiter::FctMinMax => "minmax",
            Limiter::FctPositive => "positive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Limiter::None),
            "minmax" | "fct_minmax" => Ok(Limiter::FctMinMax),
            "positive" | "fct_positive" => Ok(Limiter::FctPositive),
            _ => Err(Error::InvalidArgument("unknown limiter")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub order: Order,
    pub limiter: Limiter,
    /// Time step in seconds.
    pub dt: f64,
    pub cfl_max: f64,
    /// Static density; `None` means ρ ≡ 1.
    pub density: Option<CellField>,
}

impl SchemeConfig {
    /// Second order, unlimited, ρ ≡ 1, Courant cap 0.8.
    pub fn new(dt: f64) -> Self {
        SchemeConfig {
            order: Order::Second,
            limiter: Limiter::None,
            dt,
            cfl_max: 0.8,
            density: None,
        }
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    pub fn with_limiter(mut self, limiter: Limiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument("dt must be positive"));
        }
        if !(self.cfl_max > 0.0 && self.cfl_max <= 1.0) {
            return Err(Error::InvalidArgument("cfl_max must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Edge winds for each time step of a run.
pub trait WindSeries {
    /// Winds used for the step from level `n` to `n + 1`.
    fn winds(&self, n: usize) -> Cow<'_, EdgeWinds>;
}

/// Analytic winds evaluated at the midpoint time `(n + 1/2)·dt`.
pub struct AnalyticWinds<'a> {
    pub case: &'a WindCase,
    pub grid: &'a SphereGrid,
    pub dt: f64,
}

impl WindSeries for AnalyticWinds<'_> {
    fn winds(&self, n: usize) -> Cow<'_, EdgeWinds> {
        Cow::Owned(self.case.edge_winds((n as f64 + 0.5) * self.dt, self.grid))
    }
}

/// Precomputed winds, one entry per step.
#[derive(Debug, Clone)]
pub struct CachedWinds {
    pub levels: Vec<EdgeWinds>,
}

impl CachedWinds {
    pub fn from_case(case: &WindCase, grid: &SphereGrid, dt: f64, n_steps: usize) -> Self {
        let src = AnalyticWinds { case, grid, dt };
        CachedWinds {
            levels: (0..n_steps).map(|n| src.winds(n).into_owned()).collect(),
        }
    }
}

impl WindSeries for CachedWinds {
    fn winds(&self, n: usize) -> Cow<'_, EdgeWinds> {
        Cow::Borrowed(&self.levels[n])
    }
}

/// The same wind at every step.
pub struct SteadyWinds(pub EdgeWinds);

impl WindSeries for SteadyWinds {
    fn winds(&self, _n: usize) -> Cow<'_, EdgeWinds> {
        Cow::Borrowed(&self.0)
    }
}

/// Negated winds taken in reverse step order: step `n` uses `-w(N - 1 - n)`.
pub struct ReversedWinds<'a, W: WindSeries + ?Sized> {
    pub inner: &'a W,
    pub n_steps: usize,
}

impl<W: WindSeries + ?Sized> WindSeries for ReversedWinds<'_, W> {
    fn winds(&self, n: usize) -> Cow<'_, EdgeWinds> {
        Cow::Owned(negate(&self.inner.winds(self.n_steps - 1 - n)))
    }
}

pub fn negate(w: &EdgeWinds) -> EdgeWinds {
    EdgeWinds {
        vn: w.vn.map(|v| -v),
        vt: w.vt.map(|v| -v),
    }
}

/// Per-cell linear reconstruction `q_j + g_j · (X, Y)` in the cell's
/// gnomonic plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    /// Cells whose stencil was singular and fell back to constant.
    pub fallback_cells: usize,
}

/// Line-integrated flux per edge, positive from owner to neighbor.
pub type StepFluxes = EdgeField;

/// Upwind cell, flux scale and departure point of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    pub upwind: usize,
    /// `ρ̄_e v_n l_e`.
    pub gamma: f64,
    /// Departure point in the upwind cell's gnomonic coordinates (m).
    pub xy: [f64; 2],
}

/// Linear flux coefficients of one edge: `F_e = Σ_k coef[k] · q[cells[k]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStencil {
    pub cells: [usize; 4],
    pub coef: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    c: Vec3,
    e1: Vec3,
    e2: Vec3,
}

impl Frame {
    fn gnomonic(&self, p: Vec3, radius: f64) -> [f64; 2] {
        let d = p.dot(self.c);
        [radius * p.dot(self.e1) / d, radius * p.dot(self.e2) / d]
    }
}

/// Forward solver bound to one grid and scheme configuration.
#[derive(Debug, Clone)]
pub struct Transport<'g> {
    pub grid: &'g SphereGrid,
    pub config: SchemeConfig,
    frames: Vec<Frame>,
    weights: Vec<[[f64; 2]; 3]>,
    rho: Vec<f64>,
    edge_rho: Vec<f64>,
    /// `ρ_j |Ω_j|`
    mass_weight: Vec<f64>,
    fallback_cells: usize,
}

impl<'g> Transport<'g> {
    pub fn new(grid: &'g SphereGrid, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let rho = match &config.density {
            Some(d) => {
                d.check_grid(grid)?;
                if d.values.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                    return Err(Error::InvalidArgument("density must be positive"));
                }
                d.values.clone()
            }
            None => vec![1.0; grid.n_cells()],
        };
        let frames: Vec<Frame> = grid
            .cells
            .iter()
            .map(|c| {
                let (e1, e2) = c.center.east_north();
                Frame { c: c.center, e1, e2 }
            })
            .collect();
        let mut weights = Vec::with_capacity(grid.n_cells());
        let mut fallback_cells = 0;
        for (j, cell) in grid.cells.iter().enumerate() {
            let d = cell
                .neighbors
                .map(|k| frames[j].gnomonic(grid.cells[k].center, grid.radius));
            let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
            for v in &d {
                a11 += v[0] * v[0];
                a12 += v[0] * v[1];
                a22 += v[1] * v[1];
            }
            let det = a11 * a22 - a12 * a12;
            let tr = a11 + a22;
            if !(det > 1e-10 * tr * tr) {
                fallback_cells += 1;
                weights.push([[0.0; 2]; 3]);
                continue;
            }
            let w = d.map(|v| {
                [
                    (a22 * v[0] - a12 * v[1]) / det,
                    (-a12 * v[0] + a11 * v[1]) / det,
                ]
            });
            weights.push(w);
        }
        let edge_rho = grid
            .edges
            .iter()
            .map(|e| 0.5 * (rho[e.cells[0]] + rho[e.cells[1]]))
            .collect();
        let mass_weight = grid
            .cells
            .iter()
            .zip(&rho)
            .map(|(c, r)| c.area * r)
            .collect();
        Ok(Transport {
            grid,
            config,
            frames,
            weights,
            rho,
            edge_rho,
            mass_weight,
            fallback_cells,
        })
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn density(&self) -> &[f64] {
        &self.rho
    }

    /// `ρ_j |Ω_j|` per cell.
    pub fn mass_weight(&self) -> &[f64] {
        &self.mass_weight
    }

    /// Least-squares gradient of `q` in each cell's gnomonic frame.
    pub fn reconstruct(&self, q: &CellField) -> Result<Reconstruction> {
        q.check_grid(self.grid)?;
        let gradients = match self.config.order {
            Order::First => vec![[0.0; 2]; q.len()],
            Order::Second => self
                .grid
                .cells
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let w = &self.weights[j];
                    let mut g = [0.0; 2];
                    for k in 0..3 {
                        let dq = q[c.neighbors[k]] - q[j];
                        g[0] += w[k][0] * dq;
                        g[1] += w[k][1] * dq;
                    }
                    g
                })
                .collect(),
        };
        Ok(Reconstruction {
            values: q.values.clone(),
            gradients,
            fallback_cells: if self.config.order == Order::Second {
                self.fallback_cells
            } else {
                0
            },
        })
    }

    /// Value of the reconstruction of cell `j` at the unit vector `p`.
    pub fn eval_reconstruction(&self, rec: &Reconstruction, j: usize, p: Vec3) -> f64 {
        let xy = self.frames[j].gnomonic(p, self.grid.radius);
        rec.values[j] + rec.gradients[j][0] * xy[0] + rec.gradients[j][1] * xy[1]
    }

    /// Largest `|v_n| dt / inradius(upwind)` and the edge where it occurs.
    pub fn max_courant(&self, winds: &EdgeWinds) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for (e, edge) in self.grid.edges.iter().enumerate() {
            let vn = winds.vn[e];
            let u = if vn >= 0.0 { edge.cells[0] } else { edge.cells[1] };
            let c = math::abs(vn) * self.config.dt / self.grid.cells[u].inradius;
            if c > worst.1 {
                worst = (e, c);
            }
        }
        worst
    }

    /// Upwind cell and departure point of every edge; checks the CFL cap.
    pub fn departures(&self, winds: &EdgeWinds) -> Result<Vec<Departure>> {
        winds.vn.check_grid(self.grid)?;
        let (edge, courant) = self.max_courant(winds);
        if !(courant <= self.config.cfl_max) {
            return Err(Error::Cfl {
                edge,
                courant,
                cap: self.config.cfl_max,
            });
        }
        let half = 0.5 * self.config.dt / self.grid.radius;
        Ok(self
            .grid
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let vn = winds.vn[e];
                let vt = winds.vt[e];
                let upwind = if vn >= 0.0 { edge.cells[0] } else { edge.cells[1] };
                let gamma = self.edge_rho[e] * vn * edge.length;
                let xy = match self.config.order {
                    Order::First => [0.0; 2],
                    Order::Second => {
                        let p = (edge.midpoint - (edge.normal * vn + edge.tangent * vt) * half)
                            .normalized();
                        self.frames[upwind].gnomonic(p, self.grid.radius)
                    }
                };
                Departure { upwind, gamma, xy }
            })
            .collect())
    }

    /// Unlimited fluxes `F_e = ρ̄ v_n l q_rec,U(departure)`.
    pub fn compute_fluxes(&self, rec: &Reconstruction, winds: &EdgeWinds) -> Result<StepFluxes> {
        let deps = self.departures(winds)?;
        Ok(self.fluxes_from(rec, &deps))
    }

    fn fluxes_from(&self, rec: &Reconstruction, deps: &[Departure]) -> StepFluxes {
        let values = deps
            .iter()
            .map(|d| {
                let g = rec.gradients[d.upwind];
                d.gamma * (rec.values[d.upwind] + g[0] * d.xy[0] + g[1] * d.xy[1])
            })
            .collect();
        EdgeField::from_values(self.grid, values).expect("edge count")
    }

    fn low_order_fluxes(&self, q: &CellField, deps: &[Departure]) -> Vec<f64> {
        deps.iter().map(|d| d.gamma * q[d.upwind]).collect()
    }

    /// Linear flux stencils for the given winds; the flux of every edge is
    /// `Σ coef · q` over the upwind cell and its three neighbors.
    pub fn edge_stencils(&self, winds: &EdgeWinds) -> Result<Vec<EdgeStencil>> {
        let deps = self.departures(winds)?;
        Ok(deps
            .iter()
            .map(|d| {
                let u = d.upwind;
                let nb = self.grid.cells[u].neighbors;
                match self.config.order {
                    Order::First => EdgeStencil {
                        cells: [u, nb[0], nb[1], nb[2]],
                        coef: [d.gamma, 0.0, 0.0, 0.0],
                    },
                    Order::Second => {
                        let w = &self.weights[u];
                        let c = [0, 1, 2].map(|k| d.gamma * (w[k][0] * d.xy[0] + w[k][1] * d.xy[1]));
                        EdgeStencil {
                            cells: [u, nb[0], nb[1], nb[2]],
                            coef: [d.gamma - (c[0] + c[1] + c[2]), c[0], c[1], c[2]],
                        }
                    }
                }
            })
            .collect())
    }

    /// `Σ_e s_e F_e` per cell.
    pub fn flux_divergence(&self, fluxes: &[f64]) -> Vec<f64> {
        self.grid
            .cells
            .iter()
            .map(|c| {
                c.signs[0] * fluxes[c.edges[0]]
                    + c.signs[1] * fluxes[c.edges[1]]
                    + c.signs[2] * fluxes[c.edges[2]]
            })
            .collect()
    }

    /// `q_j − dt/(ρ_j |Ω_j|) · div_j`.
    fn update(&self, q: &[f64], div: &[f64]) -> Vec<f64> {
        let dt = self.config.dt;
        q.iter()
            .zip(div)
            .zip(&self.mass_weight)
            .map(|((q, d), m)| q - dt * d / m)
            .collect()
    }

    /// Zalesak limiting of `high` against first-order upwind fluxes.
    pub fn fct_limit(
        &self,
        high: &StepFluxes,
        q: &CellField,
        winds: &EdgeWinds,
        mode: Limiter,
    ) -> Result<StepFluxes> {
        let deps = self.departures(winds)?;
        Ok(self.fct_from(&high.values, q, &deps, mode))
    }

    fn fct_from(&self, high: &[f64], q: &CellField, deps: &[Departure], mode: Limiter) -> StepFluxes {
        let low = self.low_order_fluxes(q, deps);
        if mode == Limiter::None {
            return EdgeField::from_values(self.grid, high.to_vec()).expect("edge count");
        }
        let anti: Vec<f64> = high.iter().zip(&low).map(|(h, l)| h - l).collect();
        let q_td = self.update(&q.values, &self.flux_divergence(&low));
        let (q_min, q_max) = fct_bounds(self.grid, &q.values, &q_td, mode);
        let edges: Vec<[usize; 2]> = self.grid.edges.iter().map(|e| e.cells).collect();
        let c = zalesak_coefficients(
            &edges,
            &anti,
            &self.mass_weight,
            self.config.dt,
            &q_td,
            &q_min,
            &q_max,
        );
        let values = low
            .iter()
            .zip(&anti)
            .zip(&c)
            .map(|((l, a), c)| l + c * a)
            .collect();
        EdgeField::from_values(self.grid, values).expect("edge count")
    }

    /// Fluxes of one step, limited if configured.
    pub fn step_fluxes(&self, q: &CellField, winds: &EdgeWinds) -> Result<StepFluxes> {
        let rec = self.reconstruct(q)?;
        let deps = self.departures(winds)?;
        let high = self.fluxes_from(&rec, &deps);
        Ok(match self.config.limiter {
            Limiter::None => high,
            mode => self.fct_from(&high.values, q, &deps, mode),
        })
    }

    /// Applies flux divergence: `ρq^{n+1} = ρq^n − dt/|Ω| Σ s F`.
    pub fn apply_fluxes(&self, q: &CellField, fluxes: &StepFluxes) -> CellField {
        let div = self.flux_divergence(&fluxes.values);
        CellField::from_values(self.grid, self.update(&q.values, &div)).expect("cell count")
    }

    /// One explicit Euler step.
    pub fn step(&self, q: &CellField, winds: &EdgeWinds) -> Result<CellField> {
        let f = self.step_fluxes(q, winds)?;
        Ok(self.apply_fluxes(q, &f))
    }

    /// Runs `n_steps` steps, optionally recording every level `q^0..q^N`.
    pub fn run_steps<W: WindSeries + ?Sized>(
        &self,
        q0: &CellField,
        n_steps: usize,
        winds: &W,
        mut observer: impl FnMut(usize, &CellField),
    ) -> Result<CellField> {
        q0.check_grid(self.grid)?;
        let mut q = q0.clone();
        observer(0, &q);
        for n in 0..n_steps {
            q = self.step(&q, &winds.winds(n))?;
            observer(n + 1, &q);
        }
        Ok(q)
    }

    /// Integrates to `t_end`, which must be a whole number of steps.
    pub fn run_forward(
        &self,
        q0: &CellField,
        t_end: f64,
        wind: &WindCase,
        record: bool,
    ) -> Result<(CellField, Option<Vec<CellField>>)> {
        let n_steps = steps_for(t_end, self.config.dt)?;
        let winds = AnalyticWinds {
            case: wind,
            grid: self.grid,
            dt: self.config.dt,
        };
        let mut traj = if record { Some(Vec::with_capacity(n_steps + 1)) } else { None };
        let q = self.run_steps(q0, n_steps, &winds, |_, q| {
            if let Some(t) = traj.as_mut() {
                t.push(q.clone());
            }
        })?;
        Ok((q, traj))
    }
}

/// Number of steps of length `dt` that make up `t_end` exactly.
pub fn steps_for(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("t_end must be nonnegative"));
    }
    let n = math::round(t_end / dt);
    if math::abs(n * dt - t_end) > 1e-9 * dt {
        return Err(Error::TimeMismatch { t_end, dt });
    }
    Ok(n as usize)
}

/// Per-cell admissible range for FCT: extremes of `q` and `q_td` over the
/// cell and its edge neighbors, or `[0, ∞)` in positive mode.
pub fn fct_bounds(
    grid: &SphereGrid,
    q: &[f64],
    q_td: &[f64],
    mode: Limiter,
) -> (Vec<f64>, Vec<f64>) {
    match mode {
        Limiter::FctPositive => (vec![0.0; q.len()], vec![f64::INFINITY; q.len()]),
        _ => grid
            .cells
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let mut lo = q[j].min(q_td[j]);
                let mut hi = q[j].max(q_td[j]);
                for &k in &c.neighbors {
                    lo = lo.min(q[k]).min(q_td[k]);
                    hi = hi.max(q[k]).max(q_td[k]);
                }
                (lo, hi)
            })
            .unzip(),
    }
}

/// Zalesak correction factors `C_e ∈ [0, 1]`.
///
/// `edges[e] = [owner, neighbor]`, `anti[e]` is the antidiffusive flux
/// (positive owner → neighbor), `mass_weight[j] = ρ_j |Ω_j|`.
pub fn zalesak_coefficients(
    edges: &[[usize; 2]],
    anti: &[f64],
    mass_weight: &[f64],
    dt: f64,
    q_td: &[f64],
    q_min: &[f64],
    q_max: &[f64],
) -> Vec<f64> {
    let n = mass_weight.len();
    let mut p_in = vec![0.0; n];
    let mut p_out = vec![0.0; n];
    for (e, &[o, nb]) in edges.iter().enumerate() {
        let a = anti[e] * dt;
        if a > 0.0 {
            p_out[o] += a;
            p_in[nb] += a;
        } else {
            p_in[o] -= a;
            p_out[nb] -= a;
        }
    }
    let ratio = |q: f64, p: f64| -> f64 {
        if p <= 0.0 {
            1.0
        } else {
            (q.max(0.0) / p).min(1.0)
        }
    };
    let r_plus: Vec<f64> = (0..n)
        .map(|j| ratio((q_max[j] - q_td[j]) * mass_weight[j], p_in[j]))
        .collect();
    let r_minus: Vec<f64> = (0..n)
        .map(|j| ratio((q_td[j] - q_min[j]) * mass_weight[j], p_out[j]))
        .collect();
    edges
        .iter()
        .enumerate()
        .map(|(e, &[o, nb])| {
            if anti[e] > 0.0 {
                r_minus[o].min(r_plus[nb])
            } else if anti[e] < 0.0 {
                r_plus[o].min(r_minus[nb])
            } else {
                1.0
            }
        })
        .collect()
}
