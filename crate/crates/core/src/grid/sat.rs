use super::{CubeSpec, GridField, Lattice};
use crate::error::Result;
use crate::scalar::{Compensated, Real};

/// n-dimensional inclusive prefix sums with one guard layer per axis.
///
/// Each entry is stored as a double-length pair so cube sums recovered by
/// inclusion-exclusion keep close to full precision even on large grids.
#[derive(Clone, Debug)]
pub struct SummedAreaTable<T> {
    lattice: Lattice<T>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    table: Vec<Compensated<T>>,
}

impl<T: Real> SummedAreaTable<T> {
    pub fn new(field: &GridField<T>) -> Self {
        Self::from_values(field.lattice(), field.values())
    }

    /// Table of `g(value)` instead of the values themselves.
    pub fn transformed(field: &GridField<T>, g: impl Fn(T) -> T) -> Self {
        let vals: Vec<T> = field.values().iter().map(|&v| g(v)).collect();
        Self::from_values(field.lattice(), &vals)
    }

    pub fn from_values(lattice: &Lattice<T>, values: &[T]) -> Self {
        assert_eq!(values.len(), lattice.len(), "value count does not match lattice");
        let d = lattice.dim();
        let dims: Vec<usize> = lattice.counts().iter().map(|n| n + 1).collect();
        let mut strides = vec![1; d];
        for a in (0..d - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let total: usize = dims.iter().product();
        let mut table = vec![Compensated::default(); total];
        for (lin, &v) in values.iter().enumerate() {
            let idx = lattice.unravel(lin);
            let t: usize = idx.iter().zip(&strides).map(|(i, s)| (i + 1) * s).sum();
            table[t] = Compensated::new(v, T::zero());
        }
        for a in 0..d {
            let s = strides[a];
            for t in 0..total {
                let i = (t / s) % dims[a];
                if i > 0 {
                    table[t] = table[t].add(table[t - s]);
                }
            }
        }
        Self {
            lattice: lattice.clone(),
            dims,
            strides,
            table,
        }
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    /// Sum of the cell values covered by `q`.
    pub fn sum(&self, q: &CubeSpec) -> Result<T> {
        q.validate(&self.lattice)?;
        Ok(self.sum_unchecked(q))
    }

    pub(crate) fn sum_unchecked(&self, q: &CubeSpec) -> T {
        let d = self.dims.len();
        let mut acc = Compensated::default();
        for mask in 0..1usize << d {
            let mut t = 0;
            let mut negative = false;
            for a in 0..d {
                let i = if mask >> a & 1 == 1 {
                    q.lo[a] + q.cells[a]
                } else {
                    negative = !negative;
                    q.lo[a]
                };
                t += i * self.strides[a];
            }
            let term = self.table[t];
            acc = acc.add(if negative { term.neg() } else { term });
        }
        acc.value()
    }

    pub fn mean(&self, q: &CubeSpec) -> Result<T> {
        Ok(self.sum(q)? / T::of_usize(q.cell_count()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldKind, GridBox};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_direct_sums_on_random_cubes() {
        let bx = GridBox::new(vec![0.0; 3], vec![1.0, 1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..10 * 10 * 10).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let f = GridField::new(&bx, vec![10; 3], vals, FieldKind::Function).unwrap();
        let sat = SummedAreaTable::new(&f);
        for _ in 0..300 {
            let n = rng.gen_range(1..=10);
            let lo: Vec<usize> = (0..3).map(|_| rng.gen_range(0..=10 - n)).collect();
            let q = CubeSpec::new(f.lattice(), lo, vec![n; 3]).unwrap();
            let direct = f.cube_mean(&q).unwrap();
            let fast = sat.mean(&q).unwrap();
            assert!((direct - fast).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn works_in_one_and_two_dimensions() {
        let bx = GridBox::new(vec![0.0], vec![4.0]).unwrap();
        let f = GridField::new(&bx, vec![4], vec![1.0, 2.0, 3.0, 4.0], FieldKind::Function).unwrap();
        let sat = SummedAreaTable::new(&f);
        let q = CubeSpec::new(f.lattice(), vec![1], vec![2]).unwrap();
        assert_eq!(sat.sum(&q).unwrap(), 5.0);

        let bx = GridBox::new(vec![0.0; 2], vec![2.0; 2]).unwrap();
        let f = GridField::new(&bx, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0], FieldKind::Function).unwrap();
        let sat = SummedAreaTable::transformed(&f, |v| v * v);
        let q = CubeSpec::whole(f.lattice()).unwrap();
        assert_eq!(sat.sum(&q).unwrap(), 30.0);
    }
}
