use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BallSpec, CubeSpec, Lattice};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Which cubes stand in for "all cubes".
#[derive(Clone, Debug, PartialEq)]
pub enum CubePolicy {
    /// The full dyadic tree of `root`, root first, level by level.
    Dyadic { root: CubeSpec },
    /// Every aligned cube; errors when there would be more than `max_count`.
    AllAligned { max_count: usize },
    /// `budget` aligned cubes drawn uniformly over sides, then positions.
    Sampled { seed: u64, budget: usize },
}

/// Which balls stand in for "all balls".
#[derive(Clone, Debug, PartialEq)]
pub enum BallPolicy<T> {
    /// Centers at every `stride`-th cell center, each with every radius.
    Lattice {
        stride: usize,
        radii: Vec<T>,
        require_fit: bool,
    },
    /// Explicit centers, each with every radius.
    Points {
        centers: Vec<Vec<T>>,
        radii: Vec<T>,
        require_fit: bool,
    },
    /// Uniform centers and log-uniform radii in `[r_min, r_max]`, kept
    /// only when the ball fits inside the grid.
    Sampled {
        seed: u64,
        budget: usize,
        r_min: T,
        r_max: T,
    },
}

/// Cell counts per axis of every cube side the lattice admits.
fn valid_sides<T: Real>(lat: &Lattice<T>) -> Vec<Vec<usize>> {
    let d = lat.dim();
    let h = lat.spacing();
    (1..=lat.counts()[0])
        .filter_map(|k0| {
            let side = T::of_usize(k0) * h[0];
            let mut cells = vec![k0];
            for a in 1..d {
                let t = side / h[a];
                let r = t.round();
                if (t - r).abs() > T::of(1e-6) || r < T::one() {
                    return None;
                }
                let k = r.as_f64() as usize;
                if k > lat.counts()[a] {
                    return None;
                }
                cells.push(k);
            }
            Some(cells)
        })
        .collect()
}

fn positions(counts: &[usize], cells: &[usize]) -> usize {
    counts.iter().zip(cells).map(|(n, k)| n - k + 1).product()
}

pub fn enumerate_cubes<T: Real>(lat: &Lattice<T>, policy: &CubePolicy) -> Result<Vec<CubeSpec>> {
    match policy {
        CubePolicy::Dyadic { root } => {
            root.validate(lat)?;
            if !root.is_dyadic_root() {
                return Err(Error::Misaligned(
                    "dyadic root needs the same power-of-two cell count on every axis".into(),
                ));
            }
            let mut out = vec![root.clone()];
            let mut level = vec![root.clone()];
            while level[0].cells[0] > 1 {
                let mut next: Vec<CubeSpec> = level.iter().flat_map(|q| q.children().unwrap()).collect();
                next.sort();
                out.extend(next.iter().cloned());
                level = next;
            }
            Ok(out)
        }
        CubePolicy::AllAligned { max_count } => {
            let sides = valid_sides(lat);
            let total: usize = sides.iter().map(|c| positions(lat.counts(), c)).sum();
            if total > *max_count {
                return Err(invalid(format!(
                    "all-aligned family has {total} cubes, above max_count {max_count}"
                )));
            }
            let mut out = Vec::with_capacity(total);
            for cells in sides {
                let span: Vec<usize> = lat.counts().iter().zip(&cells).map(|(n, k)| n - k + 1).collect();
                let mut lo = vec![0usize; lat.dim()];
                'odo: loop {
                    out.push(CubeSpec {
                        lo: lo.clone(),
                        cells: cells.clone(),
                    });
                    for a in (0..lat.dim()).rev() {
                        lo[a] += 1;
                        if lo[a] < span[a] {
                            continue 'odo;
                        }
                        lo[a] = 0;
                    }
                    break;
                }
            }
            Ok(out)
        }
        CubePolicy::Sampled { seed, budget } => {
            if *budget == 0 {
                return Err(invalid("sampled family needs a positive budget"));
            }
            let sides = valid_sides(lat);
            if sides.is_empty() {
                return Err(Error::EmptyFamily);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..*budget)
                .map(|_| {
                    let cells = sides[rng.gen_range(0..sides.len())].clone();
                    let lo = lat
                        .counts()
                        .iter()
                        .zip(&cells)
                        .map(|(n, k)| rng.gen_range(0..=n - k))
                        .collect();
                    CubeSpec { lo, cells }
                })
                .collect())
        }
    }
}

fn with_radii<T: Real>(
    lat: &Lattice<T>,
    centers: impl Iterator<Item = Vec<T>>,
    radii: &[T],
    require_fit: bool,
) -> Result<Vec<BallSpec<T>>> {
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("radii are finite"));
    let mut out = Vec::new();
    for c in centers {
        for &r in &sorted {
            let b = BallSpec::new(c.clone(), r)?;
            if !require_fit || b.fits(lat) {
                out.push(b);
            }
        }
    }
    Ok(out)
}

pub fn enumerate_balls<T: Real>(lat: &Lattice<T>, policy: &BallPolicy<T>) -> Result<Vec<BallSpec<T>>> {
    let out = match policy {
        BallPolicy::Lattice {
            stride,
            radii,
            require_fit,
        } => {
            if *stride == 0 {
                return Err(invalid("ball stride must be positive"));
            }
            let stride = *stride;
            let centers = (0..lat.len()).filter_map(|lin| {
                let idx = lat.unravel(lin);
                idx.iter().all(|i| i % stride == 0).then(|| lat.cell_center(&idx))
            });
            with_radii(lat, centers, radii, *require_fit)?
        }
        BallPolicy::Points {
            centers,
            radii,
            require_fit,
        } => {
            if let Some(c) = centers.iter().find(|c| c.len() != lat.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: lat.dim(),
                    got: c.len(),
                });
            }
            with_radii(lat, centers.iter().cloned(), radii, *require_fit)?
        }
        BallPolicy::Sampled {
            seed,
            budget,
            r_min,
            r_max,
        } => {
            if *budget == 0 {
                return Err(invalid("sampled family needs a positive budget"));
            }
            if !(*r_min > T::zero() && r_min <= r_max) {
                return Err(invalid("sampled radii need 0 < r_min <= r_max"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let bx = lat.bounding_box();
            let (lmin, lmax) = (r_min.ln().as_f64(), r_max.ln().as_f64());
            let mut out = Vec::with_capacity(*budget);
            let mut tries = 0usize;
            while out.len() < *budget && tries < 1000 * budget {
                tries += 1;
                let c: Vec<T> = (0..lat.dim())
                    .map(|a| bx.origin[a] + bx.extent[a] * T::of(rng.gen::<f64>()))
                    .collect();
                let r = T::of(if lmax > lmin { rng.gen_range(lmin..=lmax) } else { lmin }.exp());
                let b = BallSpec::new(c, r)?;
                if b.fits(lat) {
                    out.push(b);
                }
            }
            out
        }
    };
    if out.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(out)
}
