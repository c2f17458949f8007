//! Discrete adjoints of the transport scheme.
//!
//! The *standard* adjoint transposes the linear operator of one unlimited
//! forward step. The *artificial-source* adjoint instead runs the forward
//! flux machinery with the reversed wind (limiter included) and corrects it
//! with `q*_j Σ_e s_e ρ̄_e v_n l_e`, the discrete `q* ∇·(ρv)` term.
//!
//! Both march from level `N` down to `0` with
//! `ρ_j q*^n_j = ρ_j q*^{n+1}_j − dt/|Ω_j| · (adjoint flux term)_j − dt f^n_j`
//! and the terminal state `q*^N = −dt f^N / ρ`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::cases::EdgeWinds;
use crate::fields::CellField;
use crate::spheregrid::{GridId, SphereGrid};
use crate::transport::{negate, EdgeStencil, Limiter, Transport, WindSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjointMethod {
    Standard,
    ArtSource,
}

impl AdjointMethod {
    pub fn name(self) -> &'static str {
        match self {
            AdjointMethod::Standard => "standard",
            AdjointMethod::ArtSource => "artsource",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(AdjointMethod::Standard),
            "artsource" => Ok(AdjointMethod::ArtSource),
            _ => Err(Error::InvalidArgument("unknown adjoint method")),
        }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[k]] += self.vals[k] * y[i];
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Linear operator `M` of one unlimited step: `(M q)_j = Σ_e s_e F_e(q)`,
/// so that `q^{n+1} = q^n − dt (ρ|Ω|)^{-1} M q^n`.
#[derive(Debug, Clone)]
pub struct LinearFluxOperator {
    grid: GridId,
    /// Time level the winds belong to.
    pub level: usize,
    edge_cells: Vec<[usize; 2]>,
    stencils: Vec<EdgeStencil>,
}

impl LinearFluxOperator {
    pub fn assemble(transport: &Transport, winds: &EdgeWinds, level: usize) -> Result<Self> {
        if transport.config.limiter != Limiter::None {
            return Err(Error::LimitedScheme);
        }
        Ok(LinearFluxOperator {
            grid: transport.grid.id(),
            level,
            edge_cells: transport.grid.edges.iter().map(|e| e.cells).collect(),
            stencils: transport.edge_stencils(winds)?,
        })
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn n_cells(&self) -> usize {
        // every cell is the owner or neighbor of some edge
        self.edge_cells.len() * 2 / 3
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; q.len()];
        for (s, &[o, nb]) in self.stencils.iter().zip(&self.edge_cells) {
            let f = s.coef[0] * q[s.cells[0]]
                + s.coef[1] * q[s.cells[1]]
                + s.coef[2] * q[s.cells[2]]
                + s.coef[3] * q[s.cells[3]];
            out[o] += f;
            out[nb] -= f;
        }
        out
    }

    /// `Mᵀ p` without forming the matrix.
    pub fn apply_transpose(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        for (s, &[o, nb]) in self.stencils.iter().zip(&self.edge_cells) {
            let d = p[o] - p[nb];
            for k in 0..4 {
                out[s.cells[k]] += s.coef[k] * d;
            }
        }
        out
    }

    /// Explicit sparse form with sorted, merged columns.
    pub fn to_csr(&self) -> Csr {
        let n = self.n_cells();
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(self.stencils.len() * 8);
        for (s, &[o, nb]) in self.stencils.iter().zip(&self.edge_cells) {
            for k in 0..4 {
                trip.push((o, s.cells[k], s.coef[k]));
                trip.push((nb, s.cells[k], -s.coef[k]));
            }
        }
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Probes every column with a unit vector through the flux path and
    /// returns the largest deviation from the assembled coefficients.
    pub fn self_check(&self, transport: &Transport, winds: &EdgeWinds) -> Result<f64> {
        let csr = self.to_csr();
        let n = self.n_cells();
        let mut worst: f64 = 0.0;
        let mut e = CellField::zeros(transport.grid);
        for i in 0..n {
            e[i] = 1.0;
            let f = transport.step_fluxes(&e, winds)?;
            let col = transport.flux_divergence(&f.values);
            for (j, v) in col.iter().enumerate() {
                worst = worst.max((v - csr.get(j, i)).abs());
            }
            e[i] = 0.0;
        }
        Ok(worst)
    }
}

/// Right-hand side `f^n` of the adjoint equation at each level.
pub trait AdjointForcing {
    /// Writes `f^n` into `out`, which arrives zeroed.
    fn forcing(&mut self, n: usize, out: &mut [f64]) -> Result<()>;

    /// False if the forcing is known to vanish everywhere.
    fn is_active(&self) -> bool {
        true
    }
}

pub struct NoForcing;

impl AdjointForcing for NoForcing {
    fn forcing(&mut self, _n: usize, _out: &mut [f64]) -> Result<()> {
        Ok(())
    }
    fn is_active(&self) -> bool {
        false
    }
}

/// `q*^n = q*^{n+1} − dt (ρ|Ω|)^{-1} Mᵀ q*^{n+1} − dt f^n / ρ`.
pub fn standard_adjoint_step(
    qstar_next: &CellField,
    op: &LinearFluxOperator,
    forcing: &[f64],
    transport: &Transport,
) -> Result<CellField> {
    qstar_next.check_grid(transport.grid)?;
    if op.grid_id() != transport.grid.id() {
        return Err(Error::GridMismatch);
    }
    let mt = op.apply_transpose(&qstar_next.values);
    Ok(finish_step(qstar_next, &mt, forcing, transport))
}

/// Reversed-wind flux divergence of `q*` minus the artificial source.
pub fn artsource_flux_term(
    qstar_next: &CellField,
    winds: &EdgeWinds,
    transport: &Transport,
) -> Result<Vec<f64>> {
    let rev = negate(winds);
    let fluxes = transport.step_fluxes(qstar_next, &rev)?;
    let div = transport.flux_divergence(&fluxes.values);
    let grid = transport.grid;
    let rho = transport.density();
    // constant-reconstruction fluxes of the cell's own value
    let gamma: Vec<f64> = grid
        .edges
        .iter()
        .enumerate()
        .map(|(e, edge)| 0.5 * (rho[edge.cells[0]] + rho[edge.cells[1]]) * rev.vn[e] * edge.length)
        .collect();
    let src = transport.flux_divergence(&gamma);
    Ok(div
        .iter()
        .zip(&src)
        .zip(&qstar_next.values)
        .map(|((d, s), q)| d - q * s)
        .collect())
}

/// One reverse step of the artificial-source scheme with the winds of
/// level `n` (limiter as configured in `transport`).
pub fn artsource_adjoint_step(
    qstar_next: &CellField,
    winds: &EdgeWinds,
    forcing: &[f64],
    transport: &Transport,
) -> Result<CellField> {
    qstar_next.check_grid(transport.grid)?;
    let term = artsource_flux_term(qstar_next, winds, transport)?;
    Ok(finish_step(qstar_next, &term, forcing, transport))
}

fn finish_step(q: &CellField, term: &[f64], forcing: &[f64], tr: &Transport) -> CellField {
    let dt = tr.dt();
    let m = tr.mass_weight();
    let rho = tr.density();
    let mut out = q.clone();
    for j in 0..q.len() {
        out[j] = q[j] - dt * term[j] / m[j] - dt * forcing[j] / rho[j];
    }
    out
}

/// Backward sweep from `q*^N = −dt f^N/ρ` to `q*^0`.
pub fn run_adjoint<W: WindSeries + ?Sized>(
    method: AdjointMethod,
    transport: &Transport,
    winds: &W,
    n_steps: usize,
    forcing: &mut dyn AdjointForcing,
) -> Result<CellField> {
    if method == AdjointMethod::Standard && transport.config.limiter != Limiter::None {
        return Err(Error::LimitedScheme);
    }
    let grid = transport.grid;
    let n = grid.n_cells();
    let mut f = vec![0.0; n];
    let mut qs = CellField::zeros(grid);
    forcing.forcing(n_steps, &mut f)?;
    let zero = vec![0.0; n];
    qs = CellField::from_values(grid, finish_step(&qs, &zero, &f, transport).values)?;
    for level in (0..n_steps).rev() {
        f.iter_mut().for_each(|v| *v = 0.0);
        forcing.forcing(level, &mut f)?;
        let w = winds.winds(level);
        qs = match method {
            AdjointMethod::Standard => {
                let op = LinearFluxOperator::assemble(transport, &w, level)?;
                standard_adjoint_step(&qs, &op, &f, transport)?
            }
            AdjointMethod::ArtSource => artsource_adjoint_step(&qs, &w, &f, transport)?,
        };
    }
    Ok(qs)
}

#[derive(Debug, Clone)]
enum Storage {
    Full(Vec<CellField>),
    Checkpointed {
        interval: usize,
        checkpoints: Vec<CellField>,
    },
}

/// Forward states `q^0..q^N`, stored in full or as checkpoints that are
/// recomputed segment by segment on access.
#[derive(Debug)]
pub struct ForwardTrajectory {
    pub n_steps: usize,
    pub dt: f64,
    storage: Storage,
    segment: RefCell<Option<(usize, Vec<CellField>)>>,
}

impl ForwardTrajectory {
    /// Runs the forward model and stores the trajectory. `checkpoint = 0`
    /// keeps every level.
    pub fn record<W: WindSeries + ?Sized>(
        transport: &Transport,
        q0: &CellField,
        winds: &W,
        n_steps: usize,
        checkpoint: usize,
    ) -> Result<Self> {
        let mut levels = Vec::new();
        transport.run_steps(q0, n_steps, winds, |n, q| {
            if checkpoint == 0 || n % checkpoint == 0 {
                levels.push(q.clone());
            }
        })?;
        let storage = if checkpoint == 0 {
            Storage::Full(levels)
        } else {
            Storage::Checkpointed {
                interval: checkpoint,
                checkpoints: levels,
            }
        };
        Ok(ForwardTrajectory {
            n_steps,
            dt: transport.dt(),
            storage,
            segment: RefCell::new(None),
        })
    }

    pub fn n_levels(&self) -> usize {
        self.n_steps + 1
    }

    pub fn stored_levels(&self) -> usize {
        match &self.storage {
            Storage::Full(v) => v.len(),
            Storage::Checkpointed { checkpoints, .. } => checkpoints.len(),
        }
    }

    /// Level `n`, recomputing its segment from the nearest checkpoint when
    /// needed.
    pub fn level<W: WindSeries + ?Sized>(
        &self,
        n: usize,
        transport: &Transport,
        winds: &W,
    ) -> Result<CellField> {
        if n > self.n_steps {
            return Err(Error::LevelMismatch {
                expected: self.n_steps,
                got: n,
            });
        }
        match &self.storage {
            Storage::Full(v) => Ok(v[n].clone()),
            Storage::Checkpointed {
                interval,
                checkpoints,
            } => {
                let seg = n / interval;
                let mut cache = self.segment.borrow_mut();
                if cache.as_ref().map(|c| c.0) != Some(seg) {
                    let start = seg * interval;
                    let end = (start + interval - 1).min(self.n_steps);
                    let mut q = checkpoints[seg].clone();
                    let mut levels = Vec::with_capacity(end - start + 1);
                    levels.push(q.clone());
                    for m in start..end {
                        q = transport.step(&q, &winds.winds(m))?;
                        levels.push(q.clone());
                    }
                    *cache = Some((seg, levels));
                }
                Ok(cache.as_ref().unwrap().1[n - seg * interval].clone())
            }
        }
    }
}

/// No forcing except at level `n`, where it makes `q*^n` equal `q`.
pub struct TerminalCondition<'a> {
    pub q: &'a CellField,
    pub n: usize,
    rho: &'a [f64],
    dt: f64,
}

impl<'a> TerminalCondition<'a> {
    pub fn new(transport: &'a Transport, q: &'a CellField, n_steps: usize) -> Self {
        TerminalCondition {
            q,
            n: n_steps,
            rho: transport.density(),
            dt: transport.dt(),
        }
    }
}

impl AdjointForcing for TerminalCondition<'_> {
    fn forcing(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        if n == self.n {
            if out.len() != self.q.len() {
                return Err(Error::GridMismatch);
            }
            for j in 0..out.len() {
                out[j] = -self.rho[j] * self.q[j] / self.dt;
            }
        }
        Ok(())
    }
}

/// Forcing computed from trajectory states by a user function
/// `f(n, q^n, out)`.
pub struct TrajectoryForcing<'a, W: WindSeries + ?Sized, F> {
    pub trajectory: &'a ForwardTrajectory,
    pub transport: &'a Transport<'a>,
    pub winds: &'a W,
    pub f: F,
}

impl<W, F> AdjointForcing for TrajectoryForcing<'_, W, F>
where
    W: WindSeries + ?Sized,
    F: FnMut(usize, &CellField, &mut [f64]),
{
    fn forcing(&mut self, n: usize, out: &mut [f64]) -> Result<()> {
        let q = self.trajectory.level(n, self.transport, self.winds)?;
        (self.f)(n, &q, out);
        Ok(())
    }
}

/// Checks that `grid` matches the operator.
pub fn check_operator_grid(op: &LinearFluxOperator, grid: &SphereGrid) -> Result<()> {
    if op.grid_id() == grid.id() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{WindCase, WindKind};
    use crate::transport::SchemeConfig;

    #[test]
    fn limited_scheme_has_no_operator() {
        let g = SphereGrid::build(1, 1, 1.0).unwrap();
        let w = WindCase::new(WindKind::SolidBodyRotation, 1.0, 12.0).edge_winds(0.0, &g);
        let tr = Transport::new(&g, SchemeConfig::new(0.01).with_limiter(Limiter::FctMinMax)).unwrap();
        assert_eq!(
            LinearFluxOperator::assemble(&tr, &w, 0).unwrap_err(),
            Error::LimitedScheme
        );
    }

    #[test]
    fn csr_matches_matrix_free() {
        let g = SphereGrid::build(2, 1, 1.0).unwrap();
        let w = WindCase::new(WindKind::DeformationalDiv, 1.0, 12.0).edge_winds(1.0, &g);
        let tr = Transport::new(&g, SchemeConfig::new(0.02)).unwrap();
        let op = LinearFluxOperator::assemble(&tr, &w, 0).unwrap();
        let csr = op.to_csr();
        let x: Vec<f64> = (0..g.n_cells()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let a = op.apply(&x);
        let b = csr.matvec(&x);
        let at = op.apply_transpose(&x);
        let bt = csr.transpose_matvec(&x);
        for i in 0..x.len() {
            assert!((a[i] - b[i]).abs() < 1e-12);
            assert!((at[i] - bt[i]).abs() < 1e-12);
        }
        assert!(op.self_check(&tr, &w).unwrap() < 1e-13);
    }
}
