//! Sampled fields on uniform axis-aligned grids.
//!
//! A field is piecewise constant on cells. Cubes are addressed by cell
//! indices so that statistics over them are exact; balls use the
//! cell-center membership rule.

mod ball;
mod family;
mod geometry;
mod io;
mod sat;
mod tables;

pub use ball::{BallIntegrator, Extension, RowPrefix};
pub use family::{enumerate_balls, enumerate_cubes, BallPolicy, CubePolicy};
pub use geometry::{BallSpec, CubeSpec, Region};
pub use io::{read_csv, read_field, read_field_from, write_field, write_field_to};
pub use sat::SummedAreaTable;
pub use tables::RegionSums;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned box `origin + [0, extent)` per axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridBox<T> {
    pub origin: Vec<T>,
    pub extent: Vec<T>,
}

impl<T: Real> GridBox<T> {
    pub fn new(origin: Vec<T>, extent: Vec<T>) -> Result<Self> {
        if origin.is_empty() {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if origin.len() != extent.len() {
            return Err(Error::DimensionMismatch {
                expected: origin.len(),
                got: extent.len(),
            });
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidBox("origin must be finite".into()));
        }
        if extent.iter().any(|e| !(e.is_finite() && *e > T::zero())) {
            return Err(Error::InvalidBox("extents must be positive".into()));
        }
        Ok(Self { origin, extent })
    }

    /// The cube `[-a, a]^d`.
    pub fn symmetric(dim: usize, a: T) -> Result<Self> {
        Self::new(vec![-a; dim], vec![a + a; dim])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }
}

/// What a sampled field stands for. Determines the value invariants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Function,
    Potential,
    Weight,
    Rho,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Function => "function",
            FieldKind::Potential => "potential",
            FieldKind::Weight => "weight",
            FieldKind::Rho => "rho",
        }
    }

    fn admits<T: Real>(self, v: T) -> bool {
        v.is_finite()
            && match self {
                FieldKind::Function => true,
                FieldKind::Potential => v >= T::zero(),
                FieldKind::Weight | FieldKind::Rho => v > T::zero(),
            }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "function" => Ok(FieldKind::Function),
            "potential" => Ok(FieldKind::Potential),
            "weight" => Ok(FieldKind::Weight),
            "rho" => Ok(FieldKind::Rho),
            other => Err(Error::Format(format!("unknown field kind `{other}`"))),
        }
    }
}

/// Cell layout of a grid: origin, spacing and counts per axis, row-major
/// with the first axis slowest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lattice<T> {
    origin: Vec<T>,
    spacing: Vec<T>,
    counts: Vec<usize>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl<T: Real> Lattice<T> {
    pub fn new(origin: Vec<T>, spacing: Vec<T>, counts: Vec<usize>) -> Result<Self> {
        let d = origin.len();
        if d == 0 {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        for len in [spacing.len(), counts.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
        if counts.contains(&0) {
            return Err(Error::InvalidField("cell counts must be positive".into()));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > T::zero())) {
            return Err(Error::InvalidField("spacing must be positive".into()));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidBox("origin must be finite".into()));
        }
        let mut strides = vec![1; d];
        for a in (0..d - 1).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        Ok(Self {
            origin,
            spacing,
            counts,
            strides,
        })
    }

    pub fn from_box(bx: &GridBox<T>, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != bx.dim() {
            return Err(Error::DimensionMismatch {
                expected: bx.dim(),
                got: counts.len(),
            });
        }
        if counts.contains(&0) {
            return Err(Error::InvalidField("cell counts must be positive".into()));
        }
        let spacing = bx
            .extent
            .iter()
            .zip(&counts)
            .map(|(&e, &n)| e / T::of_usize(n))
            .collect();
        Self::new(bx.origin.clone(), spacing, counts)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounding_box(&self) -> GridBox<T> {
        GridBox {
            origin: self.origin.clone(),
            extent: self
                .spacing
                .iter()
                .zip(&self.counts)
                .map(|(&h, &n)| h * T::of_usize(n))
                .collect(),
        }
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> T {
        self.spacing.iter().fold(T::one(), |acc, &h| acc * h)
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (a, s) in self.strides.iter().enumerate() {
            idx[a] = lin / s;
            lin %= s;
        }
        idx
    }

    /// Coordinate of the center of cell `i` along axis `a`. Works for
    /// virtual indices outside the grid too.
    #[inline]
    pub fn center_coord(&self, a: usize, i: i64) -> T {
        self.origin[a] + (T::of(i as f64) + T::of(0.5)) * self.spacing[a]
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<T> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.center_coord(a, i as i64))
            .collect()
    }

    pub fn cell_center_linear(&self, lin: usize) -> Vec<T> {
        self.cell_center(&self.unravel(lin))
    }

    /// Cell whose closure contains `x`, clamped into the grid. Points on a
    /// cell face go to the upper cell.
    pub fn nearest_cell(&self, x: &[T]) -> Vec<usize> {
        x.iter()
            .enumerate()
            .map(|(a, &xa)| {
                let t = ((xa - self.origin[a]) / self.spacing[a]).floor();
                let n = self.counts[a] as f64;
                t.as_f64().clamp(0.0, n - 1.0) as usize
            })
            .collect()
    }

    /// True when every axis has the same spacing (to rounding).
    pub fn is_isotropic(&self) -> bool {
        let h0 = self.spacing[0];
        self.spacing
            .iter()
            .all(|&h| (h - h0).abs() <= T::of(1e-12) * h0.max(T::one()))
    }

    /// Largest distance between two points of the box.
    pub fn diameter(&self) -> T {
        self.bounding_box()
            .extent
            .iter()
            .fold(T::zero(), |acc, &e| acc + e * e)
            .sqrt()
    }

    pub fn contains_point(&self, x: &[T]) -> bool {
        let bx = self.bounding_box();
        x.iter()
            .enumerate()
            .all(|(a, &xa)| xa >= bx.origin[a] && xa <= bx.origin[a] + bx.extent[a])
    }
}

/// A real-valued field sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    lattice: Lattice<T>,
    values: Vec<T>,
    kind: FieldKind,
}

impl<T: Real> GridField<T> {
    pub fn new(bx: &GridBox<T>, counts: Vec<usize>, values: Vec<T>, kind: FieldKind) -> Result<Self> {
        Self::on_lattice(Lattice::from_box(bx, counts)?, values, kind)
    }

    pub fn on_lattice(lattice: Lattice<T>, values: Vec<T>, kind: FieldKind) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| !kind.admits(v)) {
            return Err(Error::InvalidField(format!(
                "value {} at cell {pos} is not admissible for a {} field",
                values[pos],
                kind.as_str()
            )));
        }
        Ok(Self { lattice, values, kind })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(bx: &GridBox<T>, counts: Vec<usize>, kind: FieldKind, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let lattice = Lattice::from_box(bx, counts)?;
        let values = (0..lattice.len()).map(|i| f(&lattice.cell_center_linear(i))).collect();
        Self::on_lattice(lattice, values, kind)
    }

    pub fn constant(bx: &GridBox<T>, counts: Vec<usize>, kind: FieldKind, c: T) -> Result<Self> {
        let lattice = Lattice::from_box(bx, counts)?;
        let n = lattice.len();
        Self::on_lattice(lattice, vec![c; n], kind)
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn value_at(&self, idx: &[usize]) -> T {
        self.values[self.lattice.linear(idx)]
    }

    /// Value of the cell containing `x` (clamped to the grid).
    pub fn nearest_value(&self, x: &[T]) -> T {
        self.value_at(&self.lattice.nearest_cell(x))
    }

    /// Same lattice, new values.
    pub fn with_values(&self, values: Vec<T>, kind: FieldKind) -> Result<Self> {
        Self::on_lattice(self.lattice.clone(), values, kind)
    }

    pub fn map(&self, kind: FieldKind, f: impl Fn(T) -> T) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect(), kind)
    }

    pub fn same_lattice(&self, other: &GridField<T>) -> bool {
        self.lattice == other.lattice
    }

    /// Mean over the covered cells of `q`, by direct summation.
    pub fn cube_mean(&self, q: &CubeSpec) -> Result<T> {
        q.validate(&self.lattice)?;
        let mut acc = crate::scalar::Compensated::default();
        q.for_each_run(&self.lattice, |start, len| {
            for &v in &self.values[start..start + len] {
                acc = acc.add(crate::scalar::Compensated::new(v, T::zero()));
            }
        });
        Ok(acc.value() / T::of_usize(q.cell_count()))
    }

    /// Minimum over the covered cells of `q`.
    pub fn cube_essinf(&self, q: &CubeSpec) -> Result<T> {
        q.validate(&self.lattice)?;
        Ok(self.region_min(&Region::Cube(q.clone())))
    }

    /// Minimum over the cells a region covers; `+inf` if it covers none.
    pub fn region_min(&self, region: &Region<T>) -> T {
        let mut m = T::infinity();
        region.for_each_run(&self.lattice, |start, len| {
            for &v in &self.values[start..start + len] {
                m = m.min(v);
            }
        });
        m
    }

    /// Integral of `g(value)` over the covered cells of a region, together
    /// with the covered volume.
    pub fn region_integral(&self, region: &Region<T>, g: impl Fn(T) -> T) -> (T, T) {
        let mut acc = T::zero();
        let mut cells = 0usize;
        region.for_each_run(&self.lattice, |start, len| {
            for &v in &self.values[start..start + len] {
                acc = acc + g(v);
            }
            cells += len;
        });
        let vol = self.lattice.cell_volume();
        (acc * vol, T::of_usize(cells) * vol)
    }

    /// Integral over the open ball under the given boundary treatment.
    pub fn ball_integral(&self, b: &BallSpec<T>, extension: Extension) -> Result<T> {
        BallIntegrator::new(self, extension).integral(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> GridBox<f64> {
        GridBox::new(vec![0.0; 3], vec![1.0; 3]).unwrap()
    }

    #[test]
    fn rejects_bad_boxes_and_values() {
        assert!(GridBox::<f64>::new(vec![], vec![]).is_err());
        assert!(GridBox::new(vec![0.0], vec![0.0]).is_err());
        let bx = unit_box();
        assert!(GridField::new(&bx, vec![2, 2, 2], vec![1.0; 7], FieldKind::Function).is_err());
        assert!(GridField::new(&bx, vec![1, 1, 1], vec![f64::NAN], FieldKind::Function).is_err());
        assert!(GridField::new(&bx, vec![1, 1, 1], vec![-1.0], FieldKind::Potential).is_err());
        assert!(GridField::new(&bx, vec![1, 1, 1], vec![0.0], FieldKind::Weight).is_err());
        assert!(GridField::new(&bx, vec![1, 1, 1], vec![0.0], FieldKind::Potential).is_ok());
    }

    #[test]
    fn mean_of_first_coordinate_on_unit_box() {
        let f = GridField::from_fn(&unit_box(), vec![8, 8, 8], FieldKind::Function, |x| x[0]).unwrap();
        let q = CubeSpec::whole(f.lattice()).unwrap();
        let direct: f64 = (0..8).map(|i| (i as f64 + 0.5) / 8.0).sum::<f64>() / 8.0;
        assert!((f.cube_mean(&q).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_and_single_cell_statistics() {
        let f = GridField::constant(&unit_box(), vec![4, 4, 4], FieldKind::Function, 3.5).unwrap();
        let q = CubeSpec::new(f.lattice(), vec![1, 1, 1], vec![2, 2, 2]).unwrap();
        assert_eq!(f.cube_mean(&q).unwrap(), 3.5);
        assert_eq!(f.cube_essinf(&q).unwrap(), 3.5);

        let mut vals = vec![0.0; 64];
        vals[21] = -7.0;
        let g = f.with_values(vals, FieldKind::Function).unwrap();
        let cell = CubeSpec::new(g.lattice(), g.lattice().unravel(21), vec![1, 1, 1]).unwrap();
        assert_eq!(g.cube_mean(&cell).unwrap(), -7.0);
        let whole = CubeSpec::whole(g.lattice()).unwrap();
        assert_eq!(g.cube_essinf(&whole).unwrap(), -7.0);
    }

    #[test]
    fn nearest_cell_clamps_and_rounds_up_on_faces() {
        let lat = Lattice::from_box(&unit_box(), vec![4, 4, 4]).unwrap();
        assert_eq!(lat.nearest_cell(&[0.25, 0.0, 1.0]), vec![1, 0, 3]);
        assert_eq!(lat.nearest_cell(&[-5.0, 0.1, 7.0]), vec![0, 0, 3]);
    }

    #[test]
    fn unravel_inverts_linear() {
        let lat = Lattice::from_box(&unit_box(), vec![3, 4, 5]).unwrap();
        for lin in 0..lat.len() {
            assert_eq!(lat.linear(&lat.unravel(lin)), lin);
        }
    }
}
