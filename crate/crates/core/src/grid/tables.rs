use super::{Lattice, Region, RowPrefix, SummedAreaTable};
use crate::scalar::Real;

/// Integrals of one transformed value array over cubes (O(2^d)) and balls
/// (O(rows), clamped to the grid).
#[derive(Clone, Debug)]
pub struct RegionSums<T> {
    sat: SummedAreaTable<T>,
    rows: RowPrefix<T>,
}

impl<T: Real> RegionSums<T> {
    pub fn new(lattice: &Lattice<T>, values: &[T]) -> Self {
        Self {
            sat: SummedAreaTable::from_values(lattice, values),
            rows: RowPrefix::from_values(lattice, values),
        }
    }

    pub fn lattice(&self) -> &Lattice<T> {
        self.sat.lattice()
    }

    /// `(integral, covered volume)` over the cells a region covers.
    pub fn integral(&self, region: &Region<T>) -> (T, T) {
        let lat = self.sat.lattice();
        let vol = lat.cell_volume();
        match region {
            Region::Cube(q) => (self.sat.sum_unchecked(q) * vol, T::of_usize(q.cell_count()) * vol),
            Region::Ball(b) => {
                let n = lat.counts()[lat.dim() - 1];
                let mut acc = T::zero();
                let mut cells = 0usize;
                b.for_each_run(lat, |start, len| {
                    let row = start / n;
                    let lo = start % n;
                    acc = acc + self.rows.row_sum(row, lo, lo + len - 1);
                    cells += len;
                });
                (acc * vol, T::of_usize(cells) * vol)
            }
        }
    }

    /// Average over covered cells; NaN for a region covering nothing.
    pub fn average(&self, region: &Region<T>) -> T {
        let (s, v) = self.integral(region);
        s / v
    }
}
