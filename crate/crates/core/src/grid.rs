//! Uniform grid fields and their binary file format.
//!
//! File layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "HLGRID01"
//! location     u8       0 = nodes, 1 = cell centers, 2 = periodic nodes
//! d            u8       spatial dimension
//! n            u8       number of scales the table belongs to (0 if none)
//! reserved     u8
//! cells        u32      cells per side
//! components   u32
//! h            f64
//! origin       2 x f64
//! slow points  u32 count, u32 dim, then count*dim f64
//! payload      u64 length, then f64 values
//! ```
//!
//! The payload holds one field per slow point (or a single field if there are
//! none), each stored point-major with components innermost and points in
//! row-major order (first coordinate fastest).

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HLGRID01";

/// Where the samples of a field live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    /// `cells + 1` points per side, boundary included.
    Node,
    /// `cells` points per side at cell centers.
    Cell,
    /// `cells` points per side at `origin + i h` on a torus.
    Periodic,
}

impl Location {
    fn code(self) -> u8 {
        match self {
            Location::Node => 0,
            Location::Cell => 1,
            Location::Periodic => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Location::Node),
            1 => Ok(Location::Cell),
            2 => Ok(Location::Periodic),
            _ => Err(Error::Format(format!("unknown location code {c}"))),
        }
    }
}

/// Samples of a scalar or vector field on a uniform square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub dim: usize,
    pub origin: [f64; 2],
    pub h: f64,
    pub cells: usize,
    pub location: Location,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(dim: usize, origin: [f64; 2], h: f64, cells: usize, location: Location, components: usize) -> Self {
        let mut f = GridField { dim, origin, h, cells, location, components, values: Vec::new() };
        f.values = vec![0.0; f.n_points() * components];
        f
    }

    /// Same geometry with a different number of components.
    pub fn like(&self, components: usize) -> Self {
        Self::zeros(self.dim, self.origin, self.h, self.cells, self.location, components)
    }

    pub fn per_side(&self) -> usize {
        match self.location {
            Location::Node => self.cells + 1,
            _ => self.cells,
        }
    }

    pub fn n_points(&self) -> usize {
        self.per_side().pow(self.dim as u32)
    }

    /// Side length of the domain.
    pub fn length(&self) -> f64 {
        self.h * self.cells as f64
    }

    /// Flat point index from per-axis indices.
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * self.per_side() + i
        }
    }

    /// Per-axis indices of a flat point index.
    pub fn split(&self, k: usize) -> (usize, usize) {
        if self.dim == 1 {
            (k, 0)
        } else {
            (k % self.per_side(), k / self.per_side())
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.coord_axis(0, i)
    }

    pub fn coord_axis(&self, axis: usize, i: usize) -> f64 {
        let shift = if self.location == Location::Cell { 0.5 } else { 0.0 };
        self.origin[axis] + (i as f64 + shift) * self.h
    }

    /// Position of flat point `k`.
    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.split(k);
        if self.dim == 1 {
            [self.coord_axis(0, i), 0.0]
        } else {
            [self.coord_axis(0, i), self.coord_axis(1, j)]
        }
    }

    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.components + c]
    }

    pub fn set(&mut self, k: usize, c: usize, v: f64) {
        self.values[k * self.components + c] = v;
    }

    /// Euclidean length of the vector at point `k`.
    pub fn magnitude(&self, k: usize) -> f64 {
        let s = &self.values[k * self.components..(k + 1) * self.components];
        s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Fills every component from `f(point, component)`.
    pub fn fill(&mut self, f: impl Fn(&[f64], usize) -> f64) {
        for k in 0..self.n_points() {
            let p = self.point(k);
            for c in 0..self.components {
                self.values[k * self.components + c] = f(&p[..self.dim], c);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn geometry_matches(&self, other: &GridField) -> bool {
        self.dim == other.dim
            && self.origin == other.origin
            && self.h == other.h
            && self.cells == other.cells
            && self.location == other.location
            && self.components == other.components
    }
}

/// A field or a table of fields indexed by slow points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub n_scales: u8,
    pub slow_points: Vec<Vec<f64>>,
    pub fields: Vec<GridField>,
}

impl GridFile {
    pub fn single(field: GridField) -> Self {
        GridFile { n_scales: 0, slow_points: Vec::new(), fields: vec![field] }
    }
}

pub fn write_grid<W: Write>(w: &mut W, file: &GridFile) -> Result<()> {
    let first = file.fields.first().ok_or_else(|| Error::Format("no fields to write".into()))?;
    if file.fields.iter().any(|f| !f.geometry_matches(first)) {
        return Err(Error::Format("fields in one file must share their geometry".into()));
    }
    let expected = file.slow_points.len().max(1);
    if file.fields.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: file.fields.len() });
    }
    let slow_dim = file.slow_points.first().map_or(0, |p| p.len());
    if file.slow_points.iter().any(|p| p.len() != slow_dim) {
        return Err(Error::Format("slow points must share their dimension".into()));
    }
    w.write_all(MAGIC)?;
    w.write_u8(first.location.code())?;
    w.write_u8(first.dim as u8)?;
    w.write_u8(file.n_scales)?;
    w.write_u8(0)?;
    w.write_u32::<LittleEndian>(first.cells as u32)?;
    w.write_u32::<LittleEndian>(first.components as u32)?;
    w.write_f64::<LittleEndian>(first.h)?;
    w.write_f64::<LittleEndian>(first.origin[0])?;
    w.write_f64::<LittleEndian>(first.origin[1])?;
    w.write_u32::<LittleEndian>(file.slow_points.len() as u32)?;
    w.write_u32::<LittleEndian>(slow_dim as u32)?;
    for p in &file.slow_points {
        for v in p {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    let total: usize = file.fields.iter().map(|f| f.values.len()).sum();
    w.write_u64::<LittleEndian>(total as u64)?;
    for f in &file.fields {
        for v in &f.values {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<GridFile> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let location = Location::from_code(r.read_u8()?)?;
    let dim = r.read_u8()? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let n_scales = r.read_u8()?;
    let _ = r.read_u8()?;
    let cells = r.read_u32::<LittleEndian>()? as usize;
    let components = r.read_u32::<LittleEndian>()? as usize;
    let h = r.read_f64::<LittleEndian>()?;
    let origin = [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?];
    let count = r.read_u32::<LittleEndian>()? as usize;
    let slow_dim = r.read_u32::<LittleEndian>()? as usize;
    let mut slow_points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = Vec::with_capacity(slow_dim);
        for _ in 0..slow_dim {
            p.push(r.read_f64::<LittleEndian>()?);
        }
        slow_points.push(p);
    }
    let proto = GridField::zeros(dim, origin, h, cells, location, components);
    let per_field = proto.values.len();
    let total = r.read_u64::<LittleEndian>()? as usize;
    if total != per_field * count.max(1) {
        return Err(Error::Format(format!("payload has {total} values, header implies {}", per_field * count.max(1))));
    }
    let mut fields = Vec::with_capacity(count.max(1));
    for _ in 0..count.max(1) {
        let mut f = proto.clone();
        r.read_f64_into::<LittleEndian>(&mut f.values)?;
        fields.push(f);
    }
    Ok(GridFile { n_scales, slow_points, fields })
}

pub fn save_grid(path: &std::path::Path, file: &GridFile) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: &std::path::Path) -> Result<GridFile> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_grid(&mut r)
}
