use serde::Serialize;

use super::Lattice;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned cube given by its lowest cell index and the number of cells
/// it spans per axis. The side length is the same on every axis, so with
/// anisotropic spacing the cell counts differ.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CubeSpec {
    pub lo: Vec<usize>,
    pub cells: Vec<usize>,
}

fn side_matches<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::of(1e-9) * a.abs().max(b.abs())
}

/// `x / h` when it is an integer up to rounding.
fn integer_ratio<T: Real>(x: T, h: T) -> Option<i64> {
    let t = x / h;
    let r = t.round();
    ((t - r).abs() <= T::of(1e-6)).then(|| r.as_f64() as i64)
}

impl CubeSpec {
    pub fn new<T: Real>(lat: &Lattice<T>, lo: Vec<usize>, cells: Vec<usize>) -> Result<Self> {
        let q = Self { lo, cells };
        q.validate(lat)?;
        Ok(q)
    }

    /// Cube from its center point and side length.
    pub fn from_geometry<T: Real>(lat: &Lattice<T>, center: &[T], side: T) -> Result<Self> {
        if center.len() != lat.dim() {
            return Err(Error::DimensionMismatch {
                expected: lat.dim(),
                got: center.len(),
            });
        }
        if !(side > T::zero()) {
            return Err(Error::Misaligned("side must be positive".into()));
        }
        let half = side / T::of(2.0);
        let mut lo = Vec::with_capacity(lat.dim());
        let mut cells = Vec::with_capacity(lat.dim());
        for a in 0..lat.dim() {
            let h = lat.spacing()[a];
            let n = integer_ratio(side, h)
                .ok_or_else(|| Error::Misaligned(format!("side is not a multiple of the spacing on axis {a}")))?;
            let l = integer_ratio(center[a] - half - lat.origin()[a], h)
                .ok_or_else(|| Error::Misaligned(format!("corner is off the cell faces on axis {a}")))?;
            if n < 1 {
                return Err(Error::Misaligned("side is below one cell".into()));
            }
            if l < 0 || (l + n) as usize > lat.counts()[a] {
                return Err(Error::OutOfBounds);
            }
            lo.push(l as usize);
            cells.push(n as usize);
        }
        Self::new(lat, lo, cells)
    }

    /// The whole grid, when it is a cube.
    pub fn whole<T: Real>(lat: &Lattice<T>) -> Result<Self> {
        Self::new(lat, vec![0; lat.dim()], lat.counts().to_vec())
    }

    pub fn validate<T: Real>(&self, lat: &Lattice<T>) -> Result<()> {
        let d = lat.dim();
        for len in [self.lo.len(), self.cells.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
        if self.cells.contains(&0) {
            return Err(Error::Misaligned("cube must span at least one cell".into()));
        }
        for a in 0..d {
            if self.lo[a] + self.cells[a] > lat.counts()[a] {
                return Err(Error::OutOfBounds);
            }
        }
        let s0 = T::of_usize(self.cells[0]) * lat.spacing()[0];
        for a in 1..d {
            let sa = T::of_usize(self.cells[a]) * lat.spacing()[a];
            if !side_matches(s0, sa) {
                return Err(Error::Misaligned(format!("side differs on axis {a}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn side<T: Real>(&self, lat: &Lattice<T>) -> T {
        T::of_usize(self.cells[0]) * lat.spacing()[0]
    }

    pub fn volume<T: Real>(&self, lat: &Lattice<T>) -> T {
        T::of_usize(self.cell_count()) * lat.cell_volume()
    }

    pub fn center<T: Real>(&self, lat: &Lattice<T>) -> Vec<T> {
        (0..self.dim())
            .map(|a| {
                let mid = T::of_usize(self.lo[a]) + T::of_usize(self.cells[a]) / T::of(2.0);
                lat.origin()[a] + mid * lat.spacing()[a]
            })
            .collect()
    }

    /// The 2^d dyadic halves, ordered by `lo`. `None` when some axis spans
    /// an odd number of cells.
    pub fn children(&self) -> Option<Vec<CubeSpec>> {
        if self.cells.iter().any(|&n| n < 2 || n % 2 != 0) {
            return None;
        }
        let d = self.dim();
        let half: Vec<usize> = self.cells.iter().map(|n| n / 2).collect();
        let out = (0..1usize << d)
            .map(|mask| {
                let lo = (0..d)
                    .map(|a| self.lo[a] + if mask >> (d - 1 - a) & 1 == 1 { half[a] } else { 0 })
                    .collect();
                CubeSpec {
                    lo,
                    cells: half.clone(),
                }
            })
            .collect();
        Some(out)
    }

    /// Can be halved repeatedly down to single cells on every axis.
    pub fn is_dyadic_root(&self) -> bool {
        let n0 = self.cells[0];
        n0.is_power_of_two() && self.cells.iter().all(|&n| n == n0)
    }

    pub fn contains(&self, other: &CubeSpec) -> bool {
        (0..self.dim()).all(|a| other.lo[a] >= self.lo[a] && other.lo[a] + other.cells[a] <= self.lo[a] + self.cells[a])
    }

    pub fn intersects(&self, other: &CubeSpec) -> bool {
        (0..self.dim()).all(|a| other.lo[a] < self.lo[a] + self.cells[a] && self.lo[a] < other.lo[a] + other.cells[a])
    }

    pub fn contains_cell(&self, idx: &[usize]) -> bool {
        idx.iter()
            .enumerate()
            .all(|(a, &i)| i >= self.lo[a] && i < self.lo[a] + self.cells[a])
    }

    /// Calls `f(start, len)` for every run of consecutive cells along the
    /// last axis, in row-major order.
    pub fn for_each_run<T: Real>(&self, lat: &Lattice<T>, mut f: impl FnMut(usize, usize)) {
        let d = self.dim();
        let len = self.cells[d - 1];
        let mut idx = self.lo.clone();
        loop {
            f(lat.linear(&idx), len);
            // odometer over the first d-1 axes
            let mut a = d - 1;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.lo[a] + self.cells[a] {
                    break;
                }
                idx[a] = self.lo[a];
            }
        }
    }
}

/// Open ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallSpec<T> {
    pub center: Vec<T>,
    pub radius: T,
}

/// Volume of the unit ball in dimension `d`.
pub(crate) fn unit_ball_volume<T: Real>(d: usize) -> T {
    let two_pi = T::PI() * T::of(2.0);
    let mut v = if d.is_multiple_of(2) { T::one() } else { T::of(2.0) };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v = v * two_pi / T::of_usize(k);
        k += 2;
    }
    v
}

impl<T: Real> BallSpec<T> {
    pub fn new(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius.is_finite() && radius > T::zero()) {
            return Err(Error::InvalidParameter("ball radius must be positive".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("ball center must be finite".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Analytic volume.
    pub fn volume(&self) -> T {
        unit_ball_volume::<T>(self.dim()) * self.radius.powi(self.dim() as i32)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            center: self.center.clone(),
            radius: self.radius * factor,
        }
    }

    /// Enumerates the covered cells as rows along the last axis, including
    /// virtual cells outside the grid: `f(row_prefix, lo, hi)` with `hi`
    /// inclusive. With `clip`, only rows and cells inside the grid are
    /// produced.
    pub fn for_each_virtual_row(&self, lat: &Lattice<T>, clip: bool, mut f: impl FnMut(&[i64], i64, i64)) {
        let d = lat.dim();
        assert_eq!(d, self.dim(), "ball and lattice dimensions differ");
        let mut row = vec![0i64; d - 1];
        self.rows_rec(lat, clip, 0, T::zero(), &mut row, &mut f);
    }

    fn axis_range(&self, lat: &Lattice<T>, a: usize, partial: T, clip: bool) -> Option<(i64, i64)> {
        let r2 = self.radius * self.radius;
        if !(partial < r2) {
            return None;
        }
        let c = self.center[a];
        let member = |i: i64| {
            let dx = c - lat.center_coord(a, i);
            partial + dx * dx < r2
        };
        let w = (r2 - partial).sqrt();
        let h = lat.spacing()[a];
        let o = lat.origin()[a];
        let mut lo = ((c - w - o) / h - T::of(0.5)).floor().as_f64() as i64;
        let mut hi = ((c + w - o) / h - T::of(0.5)).ceil().as_f64() as i64;
        while lo <= hi && !member(lo) {
            lo += 1;
        }
        while hi >= lo && !member(hi) {
            hi -= 1;
        }
        if lo > hi {
            return None;
        }
        while member(lo - 1) {
            lo -= 1;
        }
        while member(hi + 1) {
            hi += 1;
        }
        if clip {
            lo = lo.max(0);
            hi = hi.min(lat.counts()[a] as i64 - 1);
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }

    fn rows_rec(
        &self,
        lat: &Lattice<T>,
        clip: bool,
        a: usize,
        partial: T,
        row: &mut Vec<i64>,
        f: &mut impl FnMut(&[i64], i64, i64),
    ) {
        let d = lat.dim();
        let Some((lo, hi)) = self.axis_range(lat, a, partial, clip) else {
            return;
        };
        if a == d - 1 {
            f(row, lo, hi);
            return;
        }
        for i in lo..=hi {
            let dx = self.center[a] - lat.center_coord(a, i);
            row[a] = i;
            self.rows_rec(lat, clip, a + 1, partial + dx * dx, row, f);
        }
    }

    /// True when every covered cell center lies inside the grid.
    pub fn fits(&self, lat: &Lattice<T>) -> bool {
        let mut ok = true;
        self.for_each_virtual_row(lat, false, |row, lo, hi| {
            let row_in = row
                .iter()
                .enumerate()
                .all(|(a, &i)| i >= 0 && (i as usize) < lat.counts()[a]);
            let last = lat.counts()[lat.dim() - 1] as i64;
            if !row_in || lo < 0 || hi >= last {
                ok = false;
            }
        });
        ok
    }

    /// Runs of covered in-grid cells, clamp semantics.
    pub fn for_each_run(&self, lat: &Lattice<T>, mut f: impl FnMut(usize, usize)) {
        let d = lat.dim();
        let mut idx = vec![0usize; d];
        self.for_each_virtual_row(lat, true, |row, lo, hi| {
            for (a, &i) in row.iter().enumerate() {
                idx[a] = i as usize;
            }
            idx[d - 1] = lo as usize;
            f(lat.linear(&idx), (hi - lo + 1) as usize);
        });
    }
}

/// A cube or a ball, for code shared between the two geometries.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region<T> {
    Cube(CubeSpec),
    Ball(BallSpec<T>),
}

impl<T: Real> Region<T> {
    pub fn center(&self, lat: &Lattice<T>) -> Vec<T> {
        match self {
            Region::Cube(q) => q.center(lat),
            Region::Ball(b) => b.center.clone(),
        }
    }

    /// Side length for cubes, radius for balls.
    pub fn scale(&self, lat: &Lattice<T>) -> T {
        match self {
            Region::Cube(q) => q.side(lat),
            Region::Ball(b) => b.radius,
        }
    }

    /// Cube volume, or the analytic ball volume.
    pub fn measure(&self, lat: &Lattice<T>) -> T {
        match self {
            Region::Cube(q) => q.volume(lat),
            Region::Ball(b) => b.volume(),
        }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self, Region::Ball(_))
    }

    pub fn for_each_run(&self, lat: &Lattice<T>, f: impl FnMut(usize, usize)) {
        match self {
            Region::Cube(q) => q.for_each_run(lat, f),
            Region::Ball(b) => b.for_each_run(lat, f),
        }
    }

    /// Linear indices of covered cells, ascending.
    pub fn cells(&self, lat: &Lattice<T>) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_run(lat, |s, n| out.extend(s..s + n));
        out
    }

    pub fn validate(&self, lat: &Lattice<T>) -> Result<()> {
        match self {
            Region::Cube(q) => q.validate(lat),
            Region::Ball(b) => {
                if b.dim() != lat.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: lat.dim(),
                        got: b.dim(),
                    });
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBox;

    fn lat(n: usize) -> Lattice<f64> {
        Lattice::from_box(&GridBox::symmetric(3, 1.0).unwrap(), vec![n; 3]).unwrap()
    }

    #[test]
    fn cube_from_geometry_round_trips() {
        let l = lat(8);
        let q = CubeSpec::from_geometry(&l, &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(q.lo, vec![2, 2, 2]);
        assert_eq!(q.cells, vec![4, 4, 4]);
        assert_eq!(q.center(&l), vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            CubeSpec::from_geometry(&l, &[0.1, 0.0, 0.0], 1.0),
            Err(Error::Misaligned(_))
        ));
        assert!(matches!(
            CubeSpec::from_geometry(&l, &[0.0, 0.0, 0.0], 3.0),
            Err(Error::OutOfBounds)
        ));
    }

    #[test]
    fn anisotropic_cube_needs_equal_sides() {
        let l = Lattice::new(vec![0.0; 3], vec![0.5, 1.0, 1.0], vec![2, 1, 1]).unwrap();
        assert!(CubeSpec::new(&l, vec![0, 0, 0], vec![2, 1, 1]).is_ok());
        assert!(matches!(
            CubeSpec::new(&l, vec![0, 0, 0], vec![1, 1, 1]),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn children_tile_parent() {
        let l = lat(8);
        let q = CubeSpec::whole(&l).unwrap();
        let kids = q.children().unwrap();
        assert_eq!(kids.len(), 8);
        assert!(kids.windows(2).all(|w| w[0] < w[1]));
        let total: usize = kids.iter().map(|k| k.cell_count()).sum();
        assert_eq!(total, q.cell_count());
        for (i, a) in kids.iter().enumerate() {
            assert!(q.contains(a));
            for b in &kids[i + 1..] {
                assert!(!a.intersects(b));
            }
        }
        let one = CubeSpec::new(&l, vec![0, 0, 0], vec![1, 1, 1]).unwrap();
        assert!(one.children().is_none());
    }

    #[test]
    fn cube_runs_cover_exactly_its_cells() {
        let l = lat(6);
        let q = CubeSpec::new(&l, vec![1, 2, 3], vec![3, 3, 3]).unwrap();
        let cells = Region::<f64>::Cube(q.clone()).cells(&l);
        assert_eq!(cells.len(), 27);
        for c in cells {
            assert!(q.contains_cell(&l.unravel(c)));
        }
    }

    #[test]
    fn ball_rows_match_brute_force() {
        let l = lat(10);
        for (c, r) in [
            ([0.03, -0.2, 0.1], 0.55),
            ([0.9, 0.9, -0.9], 0.4),
            ([0.0, 0.0, 0.0], 2.5),
        ] {
            let b = BallSpec::new(c.to_vec(), r).unwrap();
            let got = Region::Ball(b.clone()).cells(&l);
            let want: Vec<usize> = (0..l.len())
                .filter(|&i| {
                    let x = l.cell_center_linear(i);
                    let d2 = (0..3).fold(0.0, |acc, a| acc + (c[a] - x[a]) * (c[a] - x[a]));
                    d2 < r * r
                })
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ball_fit_detection() {
        let l = lat(8);
        assert!(BallSpec::new(vec![0.0; 3], 0.9).unwrap().fits(&l));
        assert!(!BallSpec::new(vec![0.0; 3], 1.2).unwrap().fits(&l));
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume::<f64>(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
    }
}
