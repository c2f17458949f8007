//! Per-cell and per-edge scalar fields, error norms and mass.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math;
use crate::spheregrid::{GridId, SphereGrid};
use crate::{Error, Result};

/// One real value per cell of a specific grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: GridId,
    pub values: Vec<f64>,
}

/// One real value per edge of a specific grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    grid: GridId,
    pub values: Vec<f64>,
}

macro_rules! field_common {
    ($ty:ident, $count:ident) => {
        impl $ty {
            pub fn zeros(grid: &SphereGrid) -> Self {
                Self::constant(grid, 0.0)
            }

            pub fn constant(grid: &SphereGrid, c: f64) -> Self {
                $ty {
                    grid: grid.id(),
                    values: vec![c; grid.$count()],
                }
            }

            /// Wraps raw values; fails if the length does not match the grid.
            pub fn from_values(grid: &SphereGrid, values: Vec<f64>) -> Result<Self> {
                if values.len() != grid.$count() {
                    return Err(Error::InvalidArgument("value count does not match grid"));
                }
                Ok($ty {
                    grid: grid.id(),
                    values,
                })
            }

            pub fn grid_id(&self) -> GridId {
                self.grid
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            pub fn check_same_grid(&self, other: &Self) -> Result<()> {
                if self.grid == other.grid && self.values.len() == other.values.len() {
                    Ok(())
                } else {
                    Err(Error::GridMismatch)
                }
            }

            pub fn check_grid(&self, grid: &SphereGrid) -> Result<()> {
                if self.grid == grid.id() && self.values.len() == grid.$count() {
                    Ok(())
                } else {
                    Err(Error::GridMismatch)
                }
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                $ty {
                    grid: self.grid,
                    values: self.values.iter().map(|&v| f(v)).collect(),
                }
            }

            /// `self + a * other`
            pub fn axpy(&self, a: f64, other: &Self) -> Self {
                debug_assert_eq!(self.values.len(), other.values.len());
                $ty {
                    grid: self.grid,
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(x, y)| x + a * y)
                        .collect(),
                }
            }

            pub fn min(&self) -> f64 {
                self.values.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub fn max(&self) -> f64 {
                self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
            }
        }

        impl Index<usize> for $ty {
            type Output = f64;
            #[inline]
            fn index(&self, i: usize) -> &f64 {
                &self.values[i]
            }
        }

        impl IndexMut<usize> for $ty {
            #[inline]
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.values[i]
            }
        }
    };
}

field_common!(CellField, n_cells);
field_common!(EdgeField, n_edges);

impl CellField {
    /// Samples `f(lon, lat)` at every cell center.
    pub fn from_fn(grid: &SphereGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        CellField {
            grid: grid.id(),
            values: (0..grid.n_cells())
                .map(|j| {
                    let (lon, lat) = grid.cell_lonlat(j);
                    f(lon, lat)
                })
                .collect(),
        }
    }
}

/// Error norms between a field and a reference, plus bound violations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormReport {
    pub l1_rel: f64,
    pub l1_abs: f64,
    pub l2_rel: f64,
    pub l2_abs: f64,
    pub linf_rel: f64,
    pub linf_abs: f64,
    pub undershoot_count: usize,
    pub overshoot_count: usize,
    pub min_value: f64,
    pub max_value: f64,
}

impl NormReport {
    /// Column names in output order.
    pub const COLUMNS: [&'static str; 10] = [
        "l1_rel",
        "l2_rel",
        "linf_rel",
        "l1_abs",
        "l2_abs",
        "linf_abs",
        "undershoot",
        "min",
        "overshoot",
        "max",
    ];

    /// Values in `COLUMNS` order.
    pub fn row(&self) -> [f64; 10] {
        [
            self.l1_rel,
            self.l2_rel,
            self.linf_rel,
            self.l1_abs,
            self.l2_abs,
            self.linf_abs,
            self.undershoot_count as f64,
            self.min_value,
            self.overshoot_count as f64,
            self.max_value,
        ]
    }
}

/// Relative norms are area weighted; absolute ones are plain sums and maxima.
/// `bounds = (lo, hi)` is the admissible range used to count violations.
pub fn compute_norms(
    q: &CellField,
    q_true: &CellField,
    grid: &SphereGrid,
    bounds: (f64, f64),
) -> Result<NormReport> {
    q.check_same_grid(q_true)?;
    q.check_grid(grid)?;
    let n = q.len();
    let d = |i: usize| q[i] - q_true[i];
    let a = |i: usize| grid.cells[i].area;

    let l1_num = math::pairwise_sum_by(n, |i| a(i) * math::abs(d(i)));
    let l1_den = math::pairwise_sum_by(n, |i| a(i) * math::abs(q_true[i]));
    let l2_num = math::pairwise_sum_by(n, |i| a(i) * d(i) * d(i));
    let l2_den = math::pairwise_sum_by(n, |i| a(i) * q_true[i] * q_true[i]);
    let linf = (0..n).fold(0.0f64, |m, i| m.max(math::abs(d(i))));
    let tmax = q_true.max_abs();
    if !(l1_den > 0.0 && l2_den > 0.0 && tmax > 0.0) {
        return Err(Error::ZeroReference);
    }
    Ok(NormReport {
        l1_rel: l1_num / l1_den,
        l1_abs: math::pairwise_sum_by(n, |i| math::abs(d(i))),
        l2_rel: math::sqrt(l2_num) / math::sqrt(l2_den),
        l2_abs: math::sqrt(math::pairwise_sum_by(n, |i| d(i) * d(i))),
        linf_rel: linf / tmax,
        linf_abs: linf,
        undershoot_count: q.values.iter().filter(|&&v| v < bounds.0).count(),
        overshoot_count: q.values.iter().filter(|&&v| v > bounds.1).count(),
        min_value: q.min(),
        max_value: q.max(),
    })
}

/// `Σ_j |Ω_j| ρ_j q_j`.
pub fn mass(q: &CellField, rho: &CellField, grid: &SphereGrid) -> Result<f64> {
    q.check_same_grid(rho)?;
    q.check_grid(grid)?;
    Ok(math::pairwise_sum_by(q.len(), |j| {
        grid.cells[j].area * rho[j] * q[j]
    }))
}

/// Area-weighted inner product `Σ_j |Ω_j| a_j b_j`.
pub fn inner(a: &CellField, b: &CellField, grid: &SphereGrid) -> f64 {
    math::pairwise_sum_by(a.len(), |j| grid.cells[j].area * a[j] * b[j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_fields_have_zero_norms() {
        let g = SphereGrid::build(1, 1, 1.0).unwrap();
        let q = CellField::from_fn(&g, |lon, lat| 1.0 + lon.sin() * lat.cos());
        let r = compute_norms(&q, &q, &g, (q.min(), q.max())).unwrap();
        assert_eq!(r.l1_rel + r.l2_rel + r.linf_rel + r.l1_abs + r.l2_abs, 0.0);
        assert_eq!((r.undershoot_count, r.overshoot_count), (0, 0));
    }

    #[test]
    fn zero_reference_is_an_error() {
        let g = SphereGrid::build(1, 0, 1.0).unwrap();
        let z = CellField::zeros(&g);
        assert_eq!(
            compute_norms(&z, &z, &g, (0.0, 1.0)),
            Err(Error::ZeroReference)
        );
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g1 = SphereGrid::build(1, 0, 1.0).unwrap();
        let g2 = SphereGrid::build(1, 1, 1.0).unwrap();
        let a = CellField::constant(&g1, 1.0);
        let b = CellField::constant(&g2, 1.0);
        assert_eq!(mass(&a, &b, &g1), Err(Error::GridMismatch));
        assert!(CellField::from_values(&g1, vec![0.0; 3]).is_err());
    }
}
