//! Line-oriented text formats: grid dumps, fields, observations and the
//! CSV tables written by the command line.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use anyhow::{bail, Context, Result};
use icoadj::assim::ObservationSet;
use icoadj::fields::{CellField, NormReport};
use icoadj::optim::IterationRecord;
use icoadj::spheregrid::SphereGrid;

/// Writes `GRID n_r n_b radius` followed by the VERTICES, CELLS and EDGES
/// sections. Edge normals are given as their east/north components at the
/// edge midpoint.
pub fn write_grid<W: Write>(grid: &SphereGrid, mut w: W) -> io::Result<()> {
    writeln!(w, "GRID {} {} {:e}", grid.n_r, grid.n_b, grid.radius)?;
    writeln!(w, "VERTICES {}", grid.n_vertices())?;
    for (i, v) in grid.vertices.iter().enumerate() {
        writeln!(w, "{i} {:e} {:e}", v.lon, v.lat)?;
    }
    writeln!(w, "CELLS {}", grid.n_cells())?;
    for (i, c) in grid.cells.iter().enumerate() {
        let [a, b, d] = c.vertices;
        writeln!(w, "{i} {a} {b} {d} {:e}", c.area)?;
    }
    writeln!(w, "EDGES {}", grid.n_edges())?;
    for (i, e) in grid.edges.iter().enumerate() {
        let (east, north) = e.midpoint.east_north();
        writeln!(
            w,
            "{i} {} {} {} {} {:e} {:e} {:e}",
            e.vertices[0],
            e.vertices[1],
            e.cells[0],
            e.cells[1],
            e.length,
            e.normal.dot(east),
            e.normal.dot(north)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub n_r: u32,
    pub n_b: u32,
    pub radius: f64,
    pub vertices: Vec<(f64, f64)>,
    /// Vertex indices and area.
    pub cells: Vec<([usize; 3], f64)>,
    /// Vertices, owner and neighbor cells, length, normal (east, north).
    pub edges: Vec<([usize; 2], [usize; 2], f64, [f64; 2])>,
}

fn section<R: BufRead>(lines: &mut io::Lines<R>, name: &str) -> Result<usize> {
    let line = lines.next().context("unexpected end of grid dump")??;
    let mut it = line.split_whitespace();
    if it.next() != Some(name) {
        bail!("expected section {name}, found {line:?}");
    }
    Ok(it.next().context("missing section count")?.parse()?)
}

fn fields(line: &str, n: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != n {
        bail!("expected {n} columns in {line:?}");
    }
    Ok(f)
}

pub fn read_grid<R: BufRead>(r: R) -> Result<GridDump> {
    let mut lines = r.lines();
    let head = lines.next().context("empty grid dump")??;
    let h = fields(&head, 4)?;
    if h[0] != "GRID" {
        bail!("missing GRID header");
    }
    let mut dump = GridDump {
        n_r: h[1].parse()?,
        n_b: h[2].parse()?,
        radius: h[3].parse()?,
        vertices: Vec::new(),
        cells: Vec::new(),
        edges: Vec::new(),
    };
    let n = section(&mut lines, "VERTICES")?;
    for _ in 0..n {
        let l = lines.next().context("truncated VERTICES")??;
        let f = fields(&l, 3)?;
        dump.vertices.push((f[1].parse()?, f[2].parse()?));
    }
    let n = section(&mut lines, "CELLS")?;
    for _ in 0..n {
        let l = lines.next().context("truncated CELLS")??;
        let f = fields(&l, 5)?;
        dump.cells.push(([f[1].parse()?, f[2].parse()?, f[3].parse()?], f[4].parse()?));
    }
    let n = section(&mut lines, "EDGES")?;
    for _ in 0..n {
        let l = lines.next().context("truncated EDGES")??;
        let f = fields(&l, 8)?;
        dump.edges.push((
            [f[1].parse()?, f[2].parse()?],
            [f[3].parse()?, f[4].parse()?],
            f[5].parse()?,
            [f[6].parse()?, f[7].parse()?],
        ));
    }
    Ok(dump)
}

/// `FIELD n` then one `index value` line per cell.
pub fn write_field<W: Write>(q: &CellField, mut w: W) -> io::Result<()> {
    writeln!(w, "FIELD {}", q.len())?;
    for (i, v) in q.values.iter().enumerate() {
        writeln!(w, "{i} {v:e}")?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: R, grid: &SphereGrid) -> Result<CellField> {
    let mut lines = r.lines();
    let n = section(&mut lines, "FIELD")?;
    if n != grid.n_cells() {
        bail!("field has {n} values, grid has {} cells", grid.n_cells());
    }
    let mut values = vec![0.0; n];
    for _ in 0..n {
        let l = lines.next().context("truncated field")??;
        let f = fields(&l, 2)?;
        let i: usize = f[0].parse()?;
        *values.get_mut(i).context("cell index out of range")? = f[1].parse()?;
    }
    Ok(CellField::from_values(grid, values)?)
}

/// Several fields in one file, each preceded by `STEP n`.
pub fn write_snapshot<W: Write>(step: usize, q: &CellField, mut w: W) -> io::Result<()> {
    writeln!(w, "STEP {step}")?;
    write_field(q, w)
}

pub fn write_observations<W: Write>(obs: &ObservationSet, mut w: W) -> io::Result<()> {
    writeln!(w, "n,cell,value")?;
    for n in 0..=obs.n_steps {
        for (c, v) in obs.cells.iter().zip(obs.at_level(n)) {
            writeln!(w, "{n},{c},{v:e}")?;
        }
    }
    Ok(())
}

/// Reads `n,cell,value` rows. Every level must list the same cells in the
/// same order.
pub fn read_observations<R: BufRead>(r: R) -> Result<ObservationSet> {
    let mut lines = r.lines();
    let head = lines.next().context("empty observation file")??;
    if head.trim() != "n,cell,value" {
        bail!("unexpected observation header {head:?}");
    }
    let mut cells: Vec<usize> = Vec::new();
    let mut values = Vec::new();
    let mut level = 0;
    let mut k = 0;
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            bail!("row {}: expected 3 columns", row + 2);
        }
        let n: usize = f[0].parse()?;
        let c: usize = f[1].parse()?;
        if n == 0 {
            cells.push(c);
        } else {
            if n != level {
                if n != level + 1 || k != cells.len() {
                    bail!("row {}: levels must be complete and in order", row + 2);
                }
                level = n;
                k = 0;
            }
            if cells.get(k) != Some(&c) {
                bail!("row {}: cell {c} out of order", row + 2);
            }
        }
        k += 1;
        values.push(f[2].parse()?);
    }
    if level > 0 && k != cells.len() {
        bail!("last level is incomplete");
    }
    Ok(ObservationSet {
        cells,
        n_steps: level,
        values,
    })
}

pub fn norms_header(first: &str) -> String {
    let mut s = String::from(first);
    for c in NormReport::COLUMNS {
        s.push(',');
        s.push_str(c);
    }
    s
}

pub fn norms_row(label: &str, r: &NormReport) -> String {
    let mut s = String::from(label);
    for (i, v) in r.row().iter().enumerate() {
        // the two counters are integers
        if i == 6 || i == 8 {
            let _ = write!(s, ",{}", *v as u64);
        } else {
            let _ = write!(s, ",{v:e}");
        }
    }
    s
}

pub const HISTORY_HEADER: &str = "iter,J,Jb,Jo,gnorm,alpha,restart";

pub fn write_history<W: Write>(history: &[IterationRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for h in history {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            h.iter, h.j, h.jb, h.jo, h.gnorm, h.alpha, h.restart as u8
        )?;
    }
    Ok(())
}
