use serde::Serialize;

use super::{BallSpec, GridField, Lattice};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How a ball that leaves the grid is treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Reject the ball.
    Error,
    /// Cells outside take the value of the nearest boundary cell.
    #[default]
    ConstantPad,
    /// Only cells inside the grid count.
    Clamp,
}

impl std::str::FromStr for Extension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Extension::Error),
            "constant-pad" | "pad" => Ok(Extension::ConstantPad),
            "clamp" => Ok(Extension::Clamp),
            other => Err(Error::InvalidParameter(format!("unknown extension mode `{other}`"))),
        }
    }
}

/// Prefix sums along the last axis, one line per row.
#[derive(Clone, Debug)]
pub struct RowPrefix<T> {
    n: usize,
    prefix: Vec<T>,
}

impl<T: Real> RowPrefix<T> {
    pub fn from_values(lat: &Lattice<T>, values: &[T]) -> Self {
        let n = lat.counts()[lat.dim() - 1];
        let rows = values.len() / n;
        let mut prefix = Vec::with_capacity(rows * (n + 1));
        for r in 0..rows {
            let mut acc = T::zero();
            prefix.push(acc);
            for &v in &values[r * n..(r + 1) * n] {
                acc = acc + v;
                prefix.push(acc);
            }
        }
        Self { n, prefix }
    }

    /// Sum of cells `lo..=hi` of row `row`.
    #[inline]
    pub fn row_sum(&self, row: usize, lo: usize, hi: usize) -> T {
        let base = row * (self.n + 1);
        self.prefix[base + hi + 1] - self.prefix[base + lo]
    }
}

/// Ball integrals in O(rows) each.
#[derive(Clone, Debug)]
pub struct BallIntegrator<'a, T> {
    field: &'a GridField<T>,
    rows: RowPrefix<T>,
    extension: Extension,
}

impl<'a, T: Real> BallIntegrator<'a, T> {
    pub fn new(field: &'a GridField<T>, extension: Extension) -> Self {
        Self {
            field,
            rows: RowPrefix::from_values(field.lattice(), field.values()),
            extension,
        }
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn field(&self) -> &GridField<T> {
        self.field
    }

    /// Sum of `h^d * value` over cells whose centers lie in the open ball.
    pub fn integral(&self, b: &BallSpec<T>) -> Result<T> {
        let lat = self.field.lattice();
        if b.dim() != lat.dim() {
            return Err(Error::DimensionMismatch {
                expected: lat.dim(),
                got: b.dim(),
            });
        }
        let d = lat.dim();
        let n = lat.counts()[d - 1] as i64;
        let clip = self.extension == Extension::Clamp;
        let mut acc = T::zero();
        let mut outside = false;
        let values = self.field.values();
        b.for_each_virtual_row(lat, clip, |row, lo, hi| {
            let mut r = 0usize;
            for (a, &i) in row.iter().enumerate() {
                let na = lat.counts()[a] as i64;
                if i < 0 || i >= na {
                    outside = true;
                }
                r = r * lat.counts()[a] + i.clamp(0, na - 1) as usize;
            }
            if lo < 0 || hi >= n {
                outside = true;
            }
            let (a, z) = (lo.max(0), hi.min(n - 1));
            if a <= z {
                acc = acc + self.rows.row_sum(r, a as usize, z as usize);
            }
            if self.extension == Extension::ConstantPad {
                let below = (hi.min(-1) - lo + 1).max(0);
                let above = (hi - lo.max(n) + 1).max(0);
                let base = r * n as usize;
                if below > 0 {
                    acc = acc + T::of(below as f64) * values[base];
                }
                if above > 0 {
                    acc = acc + T::of(above as f64) * values[base + n as usize - 1];
                }
            }
        });
        if outside && self.extension == Extension::Error {
            return Err(Error::BallOutsideBox);
        }
        Ok(acc * lat.cell_volume())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldKind, GridBox};

    fn ones(n: usize, a: f64) -> GridField<f64> {
        GridField::constant(
            &GridBox::symmetric(3, a).unwrap(),
            vec![n; 3],
            FieldKind::Potential,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn unit_potential_gives_ball_volume() {
        let f = ones(32, 2.0);
        let h = 0.125;
        for r in [0.6, 1.0, 1.5] {
            let b = BallSpec::new(vec![0.0; 3], r).unwrap();
            let got = f.ball_integral(&b, Extension::Error).unwrap();
            let want = 4.0 * std::f64::consts::PI / 3.0 * r * r * r;
            assert!((got - want).abs() / want <= 3.0 * h / r, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn tiny_ball_is_one_cell() {
        let f = ones(8, 1.0);
        let c = f.lattice().cell_center(&[3, 4, 5]);
        let b = BallSpec::new(c, 0.05).unwrap();
        let got = f.ball_integral(&b, Extension::Error).unwrap();
        assert!((got - f.lattice().cell_volume()).abs() < 1e-15);
    }

    #[test]
    fn extension_modes_differ_outside() {
        let f = ones(8, 1.0);
        let b = BallSpec::new(vec![1.0, 1.0, 1.0], 0.8).unwrap();
        assert!(matches!(
            f.ball_integral(&b, Extension::Error),
            Err(Error::BallOutsideBox)
        ));
        let pad = f.ball_integral(&b, Extension::ConstantPad).unwrap();
        let clamp = f.ball_integral(&b, Extension::Clamp).unwrap();
        assert!(clamp < pad);
        // padding a constant field matches a larger grid with the same cells
        let big = ones(16, 2.0);
        let exact = big.ball_integral(&b, Extension::Error).unwrap();
        assert!((pad - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn pad_counts_match_brute_force() {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let f = GridField::from_fn(&bx, vec![6; 3], FieldKind::Potential, |x| 1.0 + x[0] * x[0] + x[2]).unwrap();
        let lat = f.lattice();
        let b = BallSpec::new(vec![0.7, -0.9, 0.95], 0.9).unwrap();
        let mut want = 0.0_f64;
        b.for_each_virtual_row(lat, false, |row, lo, hi| {
            for k in lo..=hi {
                let idx = [
                    row[0].clamp(0, 5) as usize,
                    row[1].clamp(0, 5) as usize,
                    k.clamp(0, 5) as usize,
                ];
                want += f.value_at(&idx);
            }
        });
        want *= lat.cell_volume();
        let got = f.ball_integral(&b, Extension::ConstantPad).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }
}
