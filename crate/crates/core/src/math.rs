//! Small numeric toolbox: 3-vectors, `libm` wrappers and reductions.
//!
//! All transcendental functions go through `libm` so results are bitwise
//! identical with and without the `std` feature.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}
#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x.clamp(-1.0, 1.0))
}
#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x.clamp(-1.0, 1.0))
}
#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
#[inline]
pub fn cosh(x: f64) -> f64 {
    libm::cosh(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Hyperbolic secant.
#[inline]
pub fn sech(x: f64) -> f64 {
    1.0 / cosh(x)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_lon(lon: f64) -> f64 {
    let mut l = libm::fmod(lon, TAU);
    if l < 0.0 {
        l += TAU;
    }
    if l >= TAU {
        l -= TAU;
    }
    l
}

/// Shortest signed angular difference `a - b` in `(-π, π]`.
pub fn lon_diff(a: f64, b: f64) -> f64 {
    let mut d = wrap_lon(a - b);
    if d > PI {
        d -= TAU;
    }
    d
}

/// Cartesian vector in R³.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    /// Unit vector for longitude `lon` and latitude `lat` (radians).
    pub fn from_lonlat(lon: f64, lat: f64) -> Self {
        let cl = cos(lat);
        Vec3::new(cl * cos(lon), cl * sin(lon), sin(lat))
    }

    /// `(lon, lat)` with `lon ∈ [0, 2π)` and `lat ∈ [-π/2, π/2]`.
    pub fn to_lonlat(self) -> (f64, f64) {
        let lat = atan2(self.z, sqrt(self.x * self.x + self.y * self.y));
        let lon = if self.x == 0.0 && self.y == 0.0 {
            0.0
        } else {
            wrap_lon(atan2(self.y, self.x))
        };
        (lon, lat)
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        sqrt(self.dot(self))
    }

    #[inline]
    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Great-circle angle between two unit vectors, stable for small and
    /// near-antipodal separations.
    pub fn angle_to(self, o: Vec3) -> f64 {
        atan2(self.cross(o).norm(), self.dot(o))
    }

    /// Local east/north unit vectors at the unit vector `self`.
    ///
    /// At the poles east is undefined; an arbitrary but fixed tangent frame
    /// is returned instead.
    pub fn east_north(self) -> (Vec3, Vec3) {
        let east = Vec3::Z.cross(self);
        let east = if east.norm() < 1e-12 {
            self.cross(Vec3::X).normalized()
        } else {
            east.normalized()
        };
        let north = self.cross(east);
        (east, north)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Spherical interpolation along the great arc from `a` to `b`, `t ∈ [0, 1]`.
pub fn slerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    let omega = a.angle_to(b);
    let s = sin(omega);
    let wa = sin((1.0 - t) * omega) / s;
    let wb = sin(t * omega) / s;
    (a * wa + b * wb).normalized()
}

/// Pairwise (cascade) summation with a fixed evaluation order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`, without allocating for small `n`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 64 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, &f)
}

/// Euclidean inner product with pairwise summation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// Chebyshev expansion of a smooth function on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolates `f` at `n` Chebyshev–Gauss nodes.
    pub fn fit<F: Fn(f64) -> f64>(n: usize, f: F) -> Self {
        let samples: Vec<f64> = (0..n)
            .map(|j| f(cos(PI * (j as f64 + 0.5) / n as f64)))
            .collect();
        let coeffs = (0..n)
            .map(|k| {
                let s = pairwise_sum_by(n, |j| {
                    samples[j] * cos(PI * k as f64 * (j as f64 + 0.5) / n as f64)
                });
                let c = 2.0 * s / n as f64;
                if k == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Chebyshev { coeffs }
    }

    /// Antiderivative, normalised to vanish at `x = 0`.
    pub fn integral(&self) -> Self {
        let n = self.coeffs.len();
        let c = |k: usize| -> f64 {
            if k < n {
                // stored c_0 is already halved; the recurrence wants the full value
                if k == 0 {
                    2.0 * self.coeffs[0]
                } else {
                    self.coeffs[k]
                }
            } else {
                0.0
            }
        };
        let mut out = alloc::vec![0.0; n + 1];
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            *slot = (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
        }
        let mut cheb = Chebyshev { coeffs: out };
        let offset = cheb.eval(0.0);
        cheb.coeffs[0] -= offset;
        cheb.trim(1e-18);
        cheb
    }

    fn trim(&mut self, tol: f64) {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(abs(*c)));
        while self.coeffs.len() > 1 && abs(*self.coeffs.last().unwrap()) <= tol * scale {
            self.coeffs.pop();
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lonlat_round_trip() {
        for &(lon, lat) in &[(0.1, 0.2), (3.0, -1.2), (6.2, 1.5), (4.71, 0.0)] {
            let (l2, p2) = Vec3::from_lonlat(lon, lat).to_lonlat();
            assert!((l2 - lon).abs() < 1e-14 && (p2 - lat).abs() < 1e-14);
        }
    }

    #[test]
    fn lon_diff_takes_short_arc() {
        assert!((lon_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-14);
        assert!((lon_diff(TAU - 0.1, 0.1) + 0.2).abs() < 1e-14);
    }

    #[test]
    fn east_north_is_orthonormal_right_handed() {
        for p in [Vec3::from_lonlat(1.0, 0.3), Vec3::Z, -Vec3::Z] {
            let (e, n) = p.east_north();
            assert!(e.dot(n).abs() < 1e-15 && e.dot(p).abs() < 1e-15);
            assert!((e.cross(n) - p).norm() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_integral_of_cosine() {
        let c = Chebyshev::fit(40, cos).integral();
        for &x in &[-1.0, -0.3, 0.0, 0.5, 1.0] {
            assert!((c.eval(x) - sin(x)).abs() < 1e-14, "{}", x);
        }
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
        assert_eq!(pairwise_sum_by(1000, |i| i as f64), 499500.0);
    }
}
