//! Synthetic fields: test functions, weights and potentials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{CubeSpec, FieldKind, GridBox, GridField, Lattice};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Constant {
        value: f64,
    },
    /// `|x|^beta`.
    CoordinatePower {
        beta: f64,
    },
    /// `log(e + 1/dist)` to the center of the cell nearest `point`, with the
    /// distance floored at half a cell.
    LogSpike {
        point: Vec<f64>,
    },
    /// Indicator of `count` random aligned cubes with sides up to `max_side` cells.
    IndicatorUnion {
        seed: u64,
        count: usize,
        max_side: usize,
    },
    /// Nonnegative increments on random dyadic subcubes of the whole grid,
    /// one level at a time down to `depth`.
    DyadicMartingale {
        seed: u64,
        depth: usize,
        step: f64,
        density: f64,
    },
    /// `(1 + |x|)^gamma`.
    WeightPower {
        gamma: f64,
    },
    PotentialOne,
    PotentialAbsSquare,
}

impl GeneratorSpec {
    pub fn field_kind(&self) -> FieldKind {
        match self {
            GeneratorSpec::WeightPower { .. } => FieldKind::Weight,
            GeneratorSpec::PotentialOne | GeneratorSpec::PotentialAbsSquare => FieldKind::Potential,
            _ => FieldKind::Function,
        }
    }
}

/// A generated field and, for the martingale, the seminorm bound known at
/// construction time.
#[derive(Clone, Debug)]
pub struct Generated<T> {
    pub field: GridField<T>,
    pub dyadic_bound: Option<T>,
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

pub fn generate<T: Real>(spec: &GeneratorSpec, bx: &GridBox<T>, counts: Vec<usize>) -> Result<Generated<T>> {
    let kind = spec.field_kind();
    let plain = |field| {
        Ok(Generated {
            field,
            dyadic_bound: None,
        })
    };
    match spec {
        GeneratorSpec::Constant { value } => {
            if !value.is_finite() {
                return Err(invalid("constant must be finite"));
            }
            plain(GridField::constant(bx, counts, kind, T::of(*value))?)
        }
        GeneratorSpec::CoordinatePower { beta } => {
            if !(*beta >= 0.0) {
                return Err(invalid("beta must be nonnegative"));
            }
            let b = T::of(*beta);
            plain(GridField::from_fn(bx, counts, kind, |x| norm(x).powf(b))?)
        }
        GeneratorSpec::LogSpike { point } => {
            let lat = Lattice::from_box(bx, counts.clone())?;
            if point.len() != lat.dim() {
                return Err(Error::DimensionMismatch {
                    expected: lat.dim(),
                    got: point.len(),
                });
            }
            let p: Vec<T> = point.iter().map(|&v| T::of(v)).collect();
            let c = lat.cell_center(&lat.nearest_cell(&p));
            let floor = lat.spacing().iter().copied().fold(T::infinity(), T::min) / T::of(2.0);
            plain(GridField::from_fn(bx, counts, kind, |x| {
                let d = x.iter().zip(&c).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
                (T::E() + T::one() / d.max(floor)).ln()
            })?)
        }
        GeneratorSpec::IndicatorUnion { seed, count, max_side } => {
            let lat = Lattice::from_box(bx, counts.clone())?;
            let cubes = random_cubes(&lat, *seed, *count, *max_side)?;
            plain(indicator_union(&lat, &cubes)?)
        }
        GeneratorSpec::DyadicMartingale {
            seed,
            depth,
            step,
            density,
        } => {
            let lat = Lattice::from_box(bx, counts)?;
            let (field, bound) = dyadic_martingale(&lat, *seed, *depth, T::of(*step), *density)?;
            Ok(Generated {
                field,
                dyadic_bound: Some(bound),
            })
        }
        GeneratorSpec::WeightPower { gamma } => {
            if !gamma.is_finite() {
                return Err(invalid("gamma must be finite"));
            }
            let g = T::of(*gamma);
            plain(GridField::from_fn(bx, counts, kind, |x| (T::one() + norm(x)).powf(g))?)
        }
        GeneratorSpec::PotentialOne => plain(GridField::constant(bx, counts, kind, T::one())?),
        GeneratorSpec::PotentialAbsSquare => plain(GridField::from_fn(bx, counts, kind, |x| {
            x.iter().map(|&v| v * v).sum::<T>()
        })?),
    }
}

/// `count` aligned cubes with sides of 1..=max_side cells.
pub fn random_cubes<T: Real>(lat: &Lattice<T>, seed: u64, count: usize, max_side: usize) -> Result<Vec<CubeSpec>> {
    if !lat.is_isotropic() {
        return Err(invalid("random cubes need equal spacing on every axis"));
    }
    let limit = max_side.min(*lat.counts().iter().min().unwrap());
    if limit == 0 {
        return Err(invalid("max_side must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=limit);
            let lo = lat.counts().iter().map(|&n| rng.gen_range(0..=n - k)).collect();
            CubeSpec::new(lat, lo, vec![k; lat.dim()])
        })
        .collect()
}

pub fn indicator_union<T: Real>(lat: &Lattice<T>, cubes: &[CubeSpec]) -> Result<GridField<T>> {
    let mut v = vec![T::zero(); lat.len()];
    for q in cubes {
        q.validate(lat)?;
        q.for_each_run(lat, |start, len| v[start..start + len].fill(T::one()));
    }
    GridField::on_lattice(lat.clone(), v, FieldKind::Function)
}

/// Adds, level by level, an increment uniform in `(0, step]` on each dyadic
/// subcube of the whole grid with probability `density`. Returns the field and
/// `depth * step`, which bounds its lower oscillation on every dyadic cube.
pub fn dyadic_martingale<T: Real>(
    lat: &Lattice<T>,
    seed: u64,
    depth: usize,
    step: T,
    density: f64,
) -> Result<(GridField<T>, T)> {
    let root = CubeSpec::whole(lat)?;
    if !root.is_dyadic_root() {
        return Err(Error::Misaligned("martingale needs a power-of-two cube grid".into()));
    }
    if !(step > T::zero() && step.is_finite()) {
        return Err(invalid("step must be positive"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(invalid("density must lie in [0, 1]"));
    }
    let levels = root.cells[0].trailing_zeros() as usize;
    if depth > levels {
        return Err(invalid(format!("depth {depth} exceeds the {levels} available levels")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![T::zero(); lat.len()];
    let mut level = vec![root];
    for _ in 0..depth {
        level = level.iter().flat_map(|q| q.children().unwrap_or_default()).collect();
        for q in &level {
            if rng.gen::<f64>() < density {
                let inc = step * T::of(1.0 - rng.gen::<f64>());
                q.for_each_run(lat, |start, len| {
                    for x in &mut v[start..start + len] {
                        *x = *x + inc;
                    }
                });
            }
        }
    }
    Ok((
        GridField::on_lattice(lat.clone(), v, FieldKind::Function)?,
        T::of_usize(depth) * step,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::czjn::dyadic_blo;

    #[test]
    fn closed_forms() {
        let bx = GridBox::symmetric(3, 4.0).unwrap();
        let w = generate::<f64>(&GeneratorSpec::WeightPower { gamma: 4.0 }, &bx, vec![32; 3])
            .unwrap()
            .field;
        let idx = w.lattice().nearest_cell(&[0.0, 0.0, 0.0]);
        let c = w.lattice().cell_center(&idx);
        let r = (c.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert_eq!(w.value_at(&idx), (1.0 + r).powf(4.0));
        let k = generate::<f64>(&GeneratorSpec::Constant { value: 2.5 }, &bx, vec![4; 3])
            .unwrap()
            .field;
        assert!(k.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn martingale_bound_holds() {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let spec = GeneratorSpec::DyadicMartingale {
            seed: 7,
            depth: 3,
            step: 1.0,
            density: 0.5,
        };
        let g = generate::<f64>(&spec, &bx, vec![16; 3]).unwrap();
        let rho = g.field.map(FieldKind::Rho, |_| 1.0).unwrap();
        let root = CubeSpec::whole(g.field.lattice()).unwrap();
        let norm = dyadic_blo(&g.field, &rho, 0.0, &root).unwrap();
        assert_eq!(g.dyadic_bound, Some(3.0));
        assert!(norm > 0.0 && norm <= 3.0);
        let again = generate::<f64>(&spec, &bx, vec![16; 3]).unwrap();
        assert_eq!(again.field, g.field);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let bad = GeneratorSpec::DyadicMartingale {
            seed: 1,
            depth: 9,
            step: 1.0,
            density: 0.5,
        };
        assert!(generate::<f64>(&bad, &bx, vec![8; 3]).is_err());
        assert!(generate::<f64>(&GeneratorSpec::CoordinatePower { beta: -1.0 }, &bx, vec![8; 3]).is_err());
        assert!(generate::<f64>(&GeneratorSpec::PotentialOne, &bx, vec![6, 6, 5]).is_ok());
    }

    #[test]
    fn log_spike_peaks_at_the_cell() {
        let bx = GridBox::symmetric(2, 1.0).unwrap();
        let f = generate::<f64>(&GeneratorSpec::LogSpike { point: vec![0.3, -0.2] }, &bx, vec![10; 2])
            .unwrap()
            .field;
        let top = f.values().iter().cloned().fold(f64::MIN, f64::max);
        let idx = f.lattice().nearest_cell(&[0.3, -0.2]);
        assert_eq!(f.value_at(&idx), top);
        let union = generate::<f64>(
            &GeneratorSpec::IndicatorUnion {
                seed: 3,
                count: 4,
                max_side: 3,
            },
            &bx,
            vec![10; 2],
        )
        .unwrap()
        .field;
        assert!(union.values().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
