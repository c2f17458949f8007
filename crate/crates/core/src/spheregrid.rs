//! Icosahedral triangular grids of the sphere.
//!
//! An `RnBk` grid starts from the spherical icosahedron, splits every edge
//! into `n` equal great-arc segments, triangulates the faces and then applies
//! `k` rounds of 4-way bisection with midpoints projected back to the sphere.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math::{self, Vec3};
use crate::{Error, Result};

/// Identity of a grid, used to check that fields are combined consistently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId {
    pub n_r: u32,
    pub n_b: u32,
    radius_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub pos: Vec3,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Counterclockwise seen from outside the sphere.
    pub vertices: [usize; 3],
    /// Normalized barycenter (unit vector).
    pub center: Vec3,
    /// Spherical area in m².
    pub area: f64,
    /// Edges `v0v1`, `v1v2`, `v2v0`.
    pub edges: [usize; 3],
    /// +1 where the edge normal points out of this cell.
    pub signs: [f64; 3],
    /// Cell across each entry of `edges`.
    pub neighbors: [usize; 3],
    /// Inscribed-circle radius estimate `2·area/perimeter`, in m.
    pub inradius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// `[owner, neighbor]`, owner is the lower cell index.
    pub cells: [usize; 2],
    /// Great-circle length in m.
    pub length: f64,
    /// Unit vector at the arc midpoint.
    pub midpoint: Vec3,
    /// Unit tangent normal at the midpoint, pointing owner → neighbor.
    pub normal: Vec3,
    /// `midpoint × normal`, completing a right-handed frame.
    pub tangent: Vec3,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub n_r: u32,
    pub n_b: u32,
    pub radius: f64,
    pub vertices: Vec<Vertex>,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    total_area: f64,
}

/// Scalar statistics describing the non-uniformity of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMetrics {
    pub min_cell_area: f64,
    pub max_cell_area: f64,
    /// Longest over shortest edge, taken over the whole grid.
    pub global_edge_ratio: f64,
    /// Largest longest-over-shortest ratio within a single triangle.
    pub max_triangle_edge_ratio: f64,
    pub min_edge_length: f64,
    pub max_edge_length: f64,
}

/// Area of the spherical triangle `abc` on the unit sphere, in steradians.
///
/// Uses `tan(E/2) = |a·(b×c)| / (1 + a·b + b·c + c·a)` which stays accurate
/// for tiny triangles.
pub fn spherical_triangle_area(a: Vec3, b: Vec3, c: Vec3) -> Result<f64> {
    let triple = a.dot(b.cross(c));
    let scale = a.norm() * b.norm() * c.norm();
    if !(math::abs(triple) > 1e-18 * scale) {
        return Err(Error::DegenerateTriangle);
    }
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    Ok(2.0 * math::atan2(math::abs(triple), denom))
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let p = (1.0 + math::sqrt(5.0)) / 2.0;
    let raw = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ];
    let verts: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
    // neighbors are exactly the pairs at the minimal distance
    let d_min = (verts[0] - verts[1]).norm();
    let adjacent = |i: usize, j: usize| (verts[i] - verts[j]).norm() < d_min * 1.01;
    let mut faces = Vec::with_capacity(20);
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                    if verts[i].dot(verts[j].cross(verts[k])) > 0.0 {
                        faces.push([i, j, k]);
                    } else {
                        faces.push([i, k, j]);
                    }
                }
            }
        }
    }
    debug_assert_eq!(faces.len(), 20);
    (verts, faces)
}

/// Splits every icosahedron face into `n²` triangles along great arcs.
fn subdivide_faces(verts: &mut Vec<Vec3>, faces: &[[usize; 3]], n: usize) -> Vec<[usize; 3]> {
    if n == 1 {
        return faces.to_vec();
    }
    // points on original edges are shared; key by (lo, hi, steps from lo)
    let mut edge_pts: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(faces.len() * n * n);
    for f in faces {
        let [a, b, c] = *f;
        // grid[i][j]: i steps from a towards b/c, j of those towards c
        let mut grid: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = Vec::with_capacity(i + 1);
            for j in 0..=i {
                let idx = if i == 0 {
                    a
                } else if i == n && j == 0 {
                    b
                } else if i == n && j == n {
                    c
                } else if j == 0 || j == i || i == n {
                    let (u, v, s) = if j == 0 {
                        (a, b, i)
                    } else if j == i {
                        (a, c, i)
                    } else {
                        (b, c, j)
                    };
                    let (lo, hi, s) = if u < v { (u, v, s) } else { (v, u, n - s) };
                    *edge_pts.entry((lo, hi, s)).or_insert_with(|| {
                        let p = math::slerp(verts[lo], verts[hi], s as f64 / n as f64);
                        verts.push(p);
                        verts.len() - 1
                    })
                } else {
                    let pab = math::slerp(verts[a], verts[b], i as f64 / n as f64);
                    let pac = math::slerp(verts[a], verts[c], i as f64 / n as f64);
                    verts.push(math::slerp(pab, pac, j as f64 / i as f64));
                    verts.len() - 1
                };
                row.push(idx);
            }
            grid.push(row);
        }
        for i in 0..n {
            for j in 0..=i {
                out.push([grid[i][j], grid[i + 1][j], grid[i + 1][j + 1]]);
                if j < i {
                    out.push([grid[i][j], grid[i + 1][j + 1], grid[i][j + 1]]);
                }
            }
        }
    }
    out
}

fn bisect(verts: &mut Vec<Vec3>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut mid = |verts: &mut Vec<Vec3>, u: usize, v: usize| -> usize {
        let key = if u < v { (u, v) } else { (v, u) };
        *mids.entry(key).or_insert_with(|| {
            verts.push((verts[key.0] + verts[key.1]).normalized());
            verts.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = mid(verts, a, b);
        let bc = mid(verts, b, c);
        let ca = mid(verts, c, a);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    out
}

impl SphereGrid {
    /// Builds the `R{n_r}B{n_b}` grid on a sphere of the given radius.
    pub fn build(n_r: u32, n_b: u32, radius: f64) -> Result<Self> {
        if n_r == 0 {
            return Err(Error::InvalidArgument("n_r must be at least 1"));
        }
        if n_b > 12 {
            return Err(Error::InvalidArgument("n_b too large"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument("radius must be positive"));
        }
        let (mut pos, faces) = icosahedron();
        let mut faces = subdivide_faces(&mut pos, &faces, n_r as usize);
        for _ in 0..n_b {
            faces = bisect(&mut pos, &faces);
        }
        Self::from_triangles(n_r, n_b, radius, pos, faces)
    }

    fn from_triangles(
        n_r: u32,
        n_b: u32,
        radius: f64,
        pos: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let r2 = radius * radius;
        let vertices: Vec<Vertex> = pos
            .iter()
            .map(|&p| {
                let (lon, lat) = p.to_lonlat();
                Vertex { pos: p, lon, lat }
            })
            .collect();

        // (lo, hi, cell, local edge slot)
        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(faces.len() * 3);
        for (c, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                half.push((u.min(v), u.max(v), c, k));
            }
        }
        half.sort_unstable();
        if half.len() % 2 != 0 {
            return Err(Error::InvalidArgument("open surface"));
        }

        let mut cells: Vec<Cell> = Vec::with_capacity(faces.len());
        for f in &faces {
            let (a, b, c) = (pos[f[0]], pos[f[1]], pos[f[2]]);
            let area = spherical_triangle_area(a, b, c)? * r2;
            cells.push(Cell {
                vertices: *f,
                center: (a + b + c).normalized(),
                area,
                edges: [usize::MAX; 3],
                signs: [0.0; 3],
                neighbors: [usize::MAX; 3],
                inradius: 0.0,
            });
        }

        let mut edges = Vec::with_capacity(half.len() / 2);
        for pair in half.chunks_exact(2) {
            let (h0, h1) = (pair[0], pair[1]);
            if (h0.0, h0.1) != (h1.0, h1.1) {
                return Err(Error::InvalidArgument("edge without two adjacent cells"));
            }
            let (owner, nb) = if h0.2 < h1.2 { (h0, h1) } else { (h1, h0) };
            let (a, b) = (pos[h0.0], pos[h0.1]);
            let midpoint = (a + b).normalized();
            let mut normal = a.cross(b).normalized();
            if normal.dot(cells[owner.2].center) > 0.0 {
                normal = -normal;
            }
            let e = edges.len();
            edges.push(Edge {
                vertices: [h0.0, h0.1],
                cells: [owner.2, nb.2],
                length: radius * a.angle_to(b),
                midpoint,
                normal,
                tangent: midpoint.cross(normal),
            });
            cells[owner.2].edges[owner.3] = e;
            cells[owner.2].signs[owner.3] = 1.0;
            cells[owner.2].neighbors[owner.3] = nb.2;
            cells[nb.2].edges[nb.3] = e;
            cells[nb.2].signs[nb.3] = -1.0;
            cells[nb.2].neighbors[nb.3] = owner.2;
        }
        for c in cells.iter_mut() {
            let perimeter: f64 = c.edges.iter().map(|&e| edges[e].length).sum();
            c.inradius = 2.0 * c.area / perimeter;
        }
        let areas: Vec<f64> = cells.iter().map(|c| c.area).collect();
        let total_area = math::pairwise_sum(&areas);
        Ok(SphereGrid {
            n_r,
            n_b,
            radius,
            vertices,
            cells,
            edges,
            total_area,
        })
    }

    pub fn id(&self) -> GridId {
        GridId {
            n_r: self.n_r,
            n_b: self.n_b,
            radius_bits: self.radius.to_bits(),
        }
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Sum of cell areas, `|Ω|`.
    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    /// Cell areas as a slice-friendly vector.
    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.area).collect()
    }

    /// `(lon, lat)` of a cell center.
    pub fn cell_lonlat(&self, j: usize) -> (f64, f64) {
        self.cells[j].center.to_lonlat()
    }

    /// Expected counts `(cells, edges, vertices)` for an `RnBk` grid.
    pub fn expected_counts(n_r: u32, n_b: u32) -> (usize, usize, usize) {
        let c = 20 * (n_r as usize).pow(2) * 4usize.pow(n_b);
        (c, 3 * c / 2, c / 2 + 2)
    }

    pub fn metrics(&self) -> GridMetrics {
        let mut m = GridMetrics {
            min_cell_area: f64::INFINITY,
            max_cell_area: 0.0,
            global_edge_ratio: 0.0,
            max_triangle_edge_ratio: 0.0,
            min_edge_length: f64::INFINITY,
            max_edge_length: 0.0,
        };
        for c in &self.cells {
            m.min_cell_area = m.min_cell_area.min(c.area);
            m.max_cell_area = m.max_cell_area.max(c.area);
            let l = c.edges.map(|e| self.edges[e].length);
            let lo = l[0].min(l[1]).min(l[2]);
            let hi = l[0].max(l[1]).max(l[2]);
            m.max_triangle_edge_ratio = m.max_triangle_edge_ratio.max(hi / lo);
        }
        for e in &self.edges {
            m.min_edge_length = m.min_edge_length.min(e.length);
            m.max_edge_length = m.max_edge_length.max(e.length);
        }
        m.global_edge_ratio = m.max_edge_length / m.min_edge_length;
        m
    }
}
