//! Analytic initial fields, winds, exact solutions and divergences.
//!
//! Latitude `φ` is used throughout (the tables' `θ` is a latitude in every
//! formula). Velocities are `(v_λ, v_φ)` in m/s, eastward and northward.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::fields::{CellField, EdgeField};
use crate::math::{self, Chebyshev, Vec3, PI};
use crate::spheregrid::SphereGrid;
use crate::{Error, Result, EARTH_RADIUS, PERIOD};

/// Great-circle distance (radians) between two lon/lat points.
pub fn great_circle(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    Vec3::from_lonlat(lon1, lat1).angle_to(Vec3::from_lonlat(lon2, lat2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarCase {
    CosineBell,
    SlottedCylinder,
    Vortex,
    TwoCosineBells,
    TwoSlottedCylinders,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindKind {
    SolidBodyRotation,
    DeformationalNonDiv,
    DeformationalDiv,
    MovingVortices,
}

impl ScalarCase {
    pub const ALL: [ScalarCase; 5] = [
        ScalarCase::CosineBell,
        ScalarCase::SlottedCylinder,
        ScalarCase::Vortex,
        ScalarCase::TwoCosineBells,
        ScalarCase::TwoSlottedCylinders,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScalarCase::CosineBell => "cosine_bell",
            ScalarCase::SlottedCylinder => "slotted_cylinder",
            ScalarCase::Vortex => "vortex",
            ScalarCase::TwoCosineBells => "two_cosine_bells",
            ScalarCase::TwoSlottedCylinders => "two_slotted_cylinders",
        }
    }

    /// Initial field at a point.
    pub fn eval(self, lon: f64, lat: f64) -> f64 {
        match self {
            ScalarCase::CosineBell => cosine_bell(lon, lat, 1.5 * PI, 0.0, 1.0 / 3.0),
            ScalarCase::SlottedCylinder => {
                let (lc, pc, rt) = (1.5 * PI, 0.0, 0.5);
                let r = great_circle(lon, lat, lc, pc);
                let in_slot_strip = math::abs(math::lon_diff(lon, lc)) < rt / 6.0;
                if r <= rt && (!in_slot_strip || lat - pc < 2.0 / 3.0 * rt) {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarCase::Vortex => Vortex::default().field(lon, lat, 0.0, 0.0),
            ScalarCase::TwoCosineBells => {
                let rt = 0.5;
                cosine_bell(lon, lat, 0.75 * PI, 0.0, rt) + cosine_bell(lon, lat, 1.25 * PI, 0.0, rt)
            }
            ScalarCase::TwoSlottedCylinders => {
                let rt = 0.5;
                let centers = [(0.75 * PI, 0.0), (1.25 * PI, 0.0)];
                for (i, &(lc, pc)) in centers.iter().enumerate() {
                    if great_circle(lon, lat, lc, pc) > rt {
                        continue;
                    }
                    if math::abs(math::lon_diff(lon, lc)) >= rt / 6.0 {
                        return 1.0;
                    }
                    let dl = lat - pc;
                    if (i == 0 && dl < -5.0 / 12.0 * rt) || (i == 1 && dl > 5.0 / 12.0 * rt) {
                        return 1.0;
                    }
                }
                0.0
            }
        }
    }

    /// Admissible range of the exact solution.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ScalarCase::Vortex => {
                let v = Vortex::default();
                let a = math::tanh(v.rho0 / v.gamma);
                (1.0 - a, 1.0 + a)
            }
            _ => (0.0, 1.0),
        }
    }
}

fn cosine_bell(lon: f64, lat: f64, lc: f64, pc: f64, rt: f64) -> f64 {
    let r = great_circle(lon, lat, lc, pc);
    if r < rt {
        0.5 * (1.0 + math::cos(PI * r / rt))
    } else {
        0.0
    }
}

impl WindKind {
    pub const ALL: [WindKind; 4] = [
        WindKind::SolidBodyRotation,
        WindKind::DeformationalNonDiv,
        WindKind::DeformationalDiv,
        WindKind::MovingVortices,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WindKind::SolidBodyRotation => "solid_rotation",
            WindKind::DeformationalNonDiv => "deform_nondiv",
            WindKind::DeformationalDiv => "deform_div",
            WindKind::MovingVortices => "moving_vortices",
        }
    }

    pub fn is_divergence_free(self) -> bool {
        !matches!(self, WindKind::DeformationalDiv)
    }
}

impl fmt::Display for ScalarCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for WindKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScalarCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or(Error::InvalidArgument("unknown scalar case"))
    }
}

impl FromStr for WindKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        WindKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or(Error::InvalidArgument("unknown wind case"))
    }
}

/// Parameters of the (moving) vortex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vortex {
    pub gamma: f64,
    pub rho0: f64,
    pub lon_p: f64,
    pub lat_p: f64,
    /// Reference speed `v0 = 2πR/T`.
    pub v0: f64,
    pub radius: f64,
}

impl Default for Vortex {
    fn default() -> Self {
        Vortex::new(EARTH_RADIUS, PERIOD)
    }
}

impl Vortex {
    pub fn new(radius: f64, period: f64) -> Self {
        Vortex {
            gamma: 5.0,
            rho0: 3.0,
            lon_p: PI - 0.8 + PI / 4.0,
            lat_p: PI / 4.8,
            v0: 2.0 * PI * radius / period,
            radius,
        }
    }

    /// `(λ', φ')` of a point in the frame whose pole is `(lon_c, lat_c)`.
    pub fn rotated(lon: f64, lat: f64, lon_c: f64, lat_c: f64) -> (f64, f64) {
        let dl = lon - lon_c;
        let num = math::cos(lat) * math::sin(dl);
        let den = math::cos(lat) * math::sin(lat_c) * math::cos(dl) - math::cos(lat_c) * math::sin(lat);
        let lam = math::atan2(num, den);
        let phi = math::asin(
            math::sin(lat) * math::sin(lat_c) + math::cos(lat) * math::cos(lat_c) * math::cos(dl),
        );
        (lam, phi)
    }

    /// `ρ̃ = ρ̃₀ cos φ'`.
    pub fn rho(&self, lat_prime: f64) -> f64 {
        self.rho0 * math::cos(lat_prime)
    }

    /// Angular velocity `ω(φ')` in 1/s; zero exactly at the vortex centers.
    pub fn omega(&self, lat_prime: f64) -> f64 {
        let r = self.rho(lat_prime);
        if r == 0.0 {
            return 0.0;
        }
        self.omega_from_rho(r)
    }

    fn omega_from_rho(&self, r: f64) -> f64 {
        let c = self.v0 * 1.5 * math::sqrt(3.0) / self.radius;
        let s = math::sech(r);
        // tanh(r)/r, continued through r = 0
        let t_over_r = if math::abs(r) < 1e-6 {
            1.0 - r * r / 3.0
        } else {
            math::tanh(r) / r
        };
        c * s * s * t_over_r
    }

    /// Center longitude at time `t` (moves with the solid-body part).
    pub fn center_lon(&self, t: f64) -> f64 {
        self.lon_p + self.v0 / self.radius * t
    }

    /// `1 − tanh(ρ̃/γ · sin(λ' − ω·phase))` around the center at time `t_center`.
    pub fn field(&self, lon: f64, lat: f64, t_center: f64, phase: f64) -> f64 {
        let (lp, pp) = Vortex::rotated(lon, lat, self.center_lon(t_center), self.lat_p);
        let rho = self.rho(pp);
        1.0 - math::tanh(rho / self.gamma * math::sin(lp - self.omega(pp) * phase))
    }
}

/// Analytic wind field plus whatever is needed to integrate it over edges.
#[derive(Debug, Clone)]
pub struct WindCase {
    pub kind: WindKind,
    pub radius: f64,
    pub period: f64,
    /// Solid-body speed `2πR/T`.
    pub u0: f64,
    /// Deformation amplitude in m/s.
    pub k: f64,
    pub vortex: Vortex,
    /// Antiderivative of `ω(arcsin z)` for the vortex stream function.
    vortex_psi: Option<Chebyshev>,
}

/// Normal and tangential edge winds at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWinds {
    pub vn: EdgeField,
    pub vt: EdgeField,
}

impl WindCase {
    /// Earth-sized case with the standard 12-day period.
    pub fn standard(kind: WindKind) -> Self {
        Self::new(kind, EARTH_RADIUS, PERIOD)
    }

    pub fn new(kind: WindKind, radius: f64, period: f64) -> Self {
        // nondimensional k is given for a period of 5 on the unit sphere
        let k_nd = match kind {
            WindKind::DeformationalDiv => 1.0,
            _ => 2.4,
        };
        let vortex = Vortex::new(radius, period);
        let vortex_psi = match kind {
            WindKind::MovingVortices => {
                let v = vortex;
                let f = Chebyshev::fit(128, move |z| {
                    let r = v.rho0 * math::sqrt((1.0 - z * z).max(0.0));
                    v.omega_from_rho(r)
                });
                Some(f.integral())
            }
            _ => None,
        };
        WindCase {
            kind,
            radius,
            period,
            u0: 2.0 * PI * radius / period,
            k: k_nd * 5.0 * radius / period,
            vortex,
            vortex_psi,
        }
    }

    fn time_factor(&self, t: f64) -> f64 {
        math::cos(PI * t / self.period)
    }

    /// `(v_λ, v_φ)` in m/s.
    pub fn wind_at(&self, t: f64, lon: f64, lat: f64) -> (f64, f64) {
        let sl = math::sin(lon);
        let (sp, cp) = (math::sin(lat), math::cos(lat));
        match self.kind {
            WindKind::SolidBodyRotation => (self.u0 * cp, 0.0),
            WindKind::DeformationalNonDiv => {
                let ct = self.time_factor(t);
                let s2 = math::sin(lon / 2.0);
                (
                    self.k * s2 * s2 * math::sin(2.0 * lat) * ct,
                    0.5 * self.k * sl * cp * ct,
                )
            }
            WindKind::DeformationalDiv => {
                let ct = self.time_factor(t);
                let s2 = math::sin(lon / 2.0);
                (
                    -self.k * s2 * s2 * math::sin(2.0 * lat) * cp * cp * ct,
                    0.5 * self.k * sl * cp * cp * cp * ct,
                )
            }
            WindKind::MovingVortices => {
                let v = &self.vortex;
                let lc = v.center_lon(t);
                let pc = v.lat_p;
                let (_, pp) = Vortex::rotated(lon, lat, lc, pc);
                let rw = self.radius * v.omega(pp);
                (
                    self.u0 * cp
                        + rw * (math::sin(pc) * cp - math::cos(pc) * math::cos(lon - lc) * sp),
                    rw * math::cos(pc) * math::sin(lon - lc),
                )
            }
        }
    }

    /// Wind as a 3D tangent vector at the unit vector `p`.
    pub fn wind_vec(&self, t: f64, p: Vec3) -> Vec3 {
        let zhat = Vec3::new(0.0, 0.0, 1.0);
        match self.kind {
            WindKind::SolidBodyRotation => return zhat.cross(p) * self.u0,
            WindKind::MovingVortices => {
                // solid body plus rotation about the moving center
                let v = &self.vortex;
                let c = Vec3::from_lonlat(v.center_lon(t), v.lat_p);
                let z = c.dot(p).clamp(-1.0, 1.0);
                let r = v.rho0 * math::sqrt(1.0 - z * z);
                let w = if r == 0.0 { 0.0 } else { v.omega_from_rho(r) };
                return zhat.cross(p) * self.u0 + c.cross(p) * (self.radius * w);
            }
            _ => {}
        }
        let (lon, lat) = p.to_lonlat();
        let (u, v) = self.wind_at(t, lon, lat);
        let (e, n) = p.east_north();
        e * u + n * v
    }

    /// Horizontal divergence in 1/s, derived by hand for each case.
    pub fn analytic_divergence(&self, t: f64, lon: f64, lat: f64) -> f64 {
        match self.kind {
            WindKind::DeformationalDiv => {
                let cp = math::cos(lat);
                -3.0 * self.k * math::sin(lon) * math::sin(lat) * cp * cp * self.time_factor(t)
                    / self.radius
            }
            _ => 0.0,
        }
    }

    /// Stream function `ψ` (m²/s) with `v = x̂ × ∇ψ`, for divergence-free cases.
    pub fn stream_function(&self, t: f64, p: Vec3) -> Option<f64> {
        match self.kind {
            WindKind::SolidBodyRotation => Some(-self.u0 * self.radius * p.z),
            WindKind::DeformationalNonDiv => {
                let (lon, lat) = p.to_lonlat();
                let s2 = math::sin(lon / 2.0);
                let cp = math::cos(lat);
                Some(self.k * self.radius * s2 * s2 * cp * cp * self.time_factor(t))
            }
            WindKind::DeformationalDiv => None,
            WindKind::MovingVortices => {
                let v = &self.vortex;
                let c = Vec3::from_lonlat(v.center_lon(t), v.lat_p);
                let f = self.vortex_psi.as_ref()?;
                let z = c.dot(p).clamp(-1.0, 1.0);
                Some(-self.u0 * self.radius * p.z - self.radius * self.radius * f.eval(z))
            }
        }
    }

    /// Normal and tangential winds at every edge at time `t`.
    ///
    /// Divergence-free cases integrate the stream function along each edge,
    /// so the discrete divergence of the normal wind vanishes to rounding.
    pub fn edge_winds(&self, t: f64, grid: &SphereGrid) -> EdgeWinds {
        let psi: Option<Vec<f64>> = grid
            .vertices
            .iter()
            .map(|v| self.stream_function(t, v.pos))
            .collect();
        let mut vn = Vec::with_capacity(grid.n_edges());
        let mut vt = Vec::with_capacity(grid.n_edges());
        for e in &grid.edges {
            let w = self.wind_vec(t, e.midpoint);
            vt.push(w.dot(e.tangent));
            let normal_wind = match &psi {
                Some(psi) => {
                    let [ia, ib] = e.vertices;
                    let a = grid.vertices[ia].pos;
                    let b = grid.vertices[ib].pos;
                    let tau = e.normal.cross(e.midpoint);
                    let s = if tau.dot(b - a) > 0.0 { 1.0 } else { -1.0 };
                    s * (psi[ib] - psi[ia]) / e.length
                }
                None => w.dot(e.normal),
            };
            vn.push(normal_wind);
        }
        EdgeWinds {
            vn: EdgeField::from_values(grid, vn).expect("edge count"),
            vt: EdgeField::from_values(grid, vt).expect("edge count"),
        }
    }

    pub fn edge_normal_wind(&self, t: f64, grid: &SphereGrid) -> EdgeField {
        self.edge_winds(t, grid).vn
    }
}

/// Initial field sampled at cell centers.
pub fn initial_field(case: ScalarCase, grid: &SphereGrid) -> CellField {
    CellField::from_fn(grid, |lon, lat| case.eval(lon, lat))
}

fn is_close(t: f64, target: f64, period: f64) -> bool {
    math::abs(t - target) <= 1e-9 * period
}

/// Exact solution at time `t` of the forward problem.
///
/// Every case returns to its initial field after one period; the vortex on
/// the moving-vortices wind has a closed form at every time.
pub fn exact_solution(
    case: ScalarCase,
    wind: &WindCase,
    t: f64,
    grid: &SphereGrid,
) -> Result<CellField> {
    if case == ScalarCase::Vortex && wind.kind == WindKind::MovingVortices {
        let v = wind.vortex;
        return Ok(CellField::from_fn(grid, |lon, lat| v.field(lon, lat, t, t)));
    }
    if is_close(t, 0.0, wind.period) || is_close(t, wind.period, wind.period) {
        return Ok(initial_field(case, grid));
    }
    Err(Error::NoExactSolution)
}

/// Exact solution of the reversed-time vortex problem started from the
/// initial vortex at the end of the period, after `elapsed` seconds.
pub fn exact_backward(wind: &WindCase, elapsed: f64, grid: &SphereGrid) -> Result<CellField> {
    if wind.kind != WindKind::MovingVortices {
        return Err(Error::NoExactSolution);
    }
    let v = wind.vortex;
    Ok(CellField::from_fn(grid, |lon, lat| {
        v.field(lon, lat, -elapsed, -elapsed)
    }))
}
