//! The critical radius `rho(x) = sup { r : r^(2-d) * int_{B(x,r)} V <= 1 }`
//! of a nonnegative potential, and the constants comparing it at two points.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{BallIntegrator, BallSpec, Extension, FieldKind, GridField, Lattice, Region, RegionSums};
use crate::report::{CheckItem, CheckReport, Witness};
use crate::scalar::Real;

/// A nonnegative potential together with how balls leaving the window are
/// treated and the reverse Hölder exponent it is claimed to satisfy.
#[derive(Clone, Debug)]
pub struct Potential<T> {
    field: GridField<T>,
    extension: Extension,
    rh_exponent: T,
}

impl<T: Real> Potential<T> {
    pub fn new(field: GridField<T>, extension: Extension, rh_exponent: T) -> Result<Self> {
        if field.kind() != FieldKind::Potential {
            return Err(Error::InvalidField(
                "potential needs a field of kind `potential`".into(),
            ));
        }
        if field.values().iter().all(|&v| v == T::zero()) {
            return Err(Error::InvalidField("potential vanishes identically".into()));
        }
        if !(rh_exponent > T::one()) {
            return Err(invalid("reverse Hölder exponent must exceed 1"));
        }
        Ok(Self {
            field,
            extension,
            rh_exponent,
        })
    }

    /// Padded extension and the largest exponent that never limits anything.
    pub fn with_defaults(field: GridField<T>) -> Result<Self> {
        let s = T::of_usize(field.dim()).max(T::of(2.0));
        Self::new(field, Extension::ConstantPad, s)
    }

    pub fn field(&self) -> &GridField<T> {
        &self.field
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn rh_exponent(&self) -> T {
        self.rh_exponent
    }

    fn require_rho_ready(&self) -> Result<()> {
        let d = self.field.dim();
        if d < 3 {
            return Err(invalid(format!("critical radius needs dimension at least 3, got {d}")));
        }
        if self.rh_exponent < T::of_usize(d) / T::of(2.0) {
            return Err(invalid("reverse Hölder exponent must be at least d/2"));
        }
        Ok(())
    }
}

/// Geometric sequence of radii, ascending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusGrid<T> {
    radii: Vec<T>,
}

impl<T: Real> RadiusGrid<T> {
    pub fn geometric(r_min: T, r_max: T, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("empty radius grid"));
        }
        if !(r_min > T::zero() && r_max >= r_min && r_max.is_finite()) {
            return Err(invalid("radius grid needs 0 < r_min <= r_max"));
        }
        let radii = if count == 1 {
            vec![r_min]
        } else {
            let q = (r_max / r_min).ln() / T::of_usize(count - 1);
            let mut v: Vec<T> = (0..count).map(|i| r_min * (q * T::of_usize(i)).exp()).collect();
            v[count - 1] = r_max;
            v
        };
        Ok(Self { radii })
    }

    /// 64 radii from the smallest spacing to the window diameter.
    pub fn for_lattice(lat: &Lattice<T>) -> Self {
        let h = lat.spacing().iter().fold(T::infinity(), |a, &b| a.min(b));
        Self::geometric(h, lat.diameter(), 64).expect("lattice radii are positive")
    }

    pub fn radii(&self) -> &[T] {
        &self.radii
    }

    pub fn r_min(&self) -> T {
        self.radii[0]
    }

    pub fn r_max(&self) -> T {
        *self.radii.last().unwrap()
    }

    /// Ratio between neighbouring radii (1 for a single radius).
    pub fn step(&self) -> T {
        if self.radii.len() < 2 {
            T::one()
        } else {
            self.radii[1] / self.radii[0]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoFlag {
    Resolved,
    /// No grid radius satisfies the condition; the value is `r_min`.
    BelowGrid,
    /// The largest grid radius satisfies it; the true value may be larger.
    AboveGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoSample<T> {
    pub rho: T,
    pub flag: RhoFlag,
}

/// Evaluates the critical radius at many points of one potential.
pub struct RhoSolver<'a, T> {
    integrator: BallIntegrator<'a, T>,
    grid: &'a RadiusGrid<T>,
    dim: usize,
}

impl<'a, T: Real> RhoSolver<'a, T> {
    pub fn new(pot: &'a Potential<T>, grid: &'a RadiusGrid<T>) -> Result<Self> {
        pot.require_rho_ready()?;
        if grid.radii().len() < 16 {
            return Err(invalid("radius grid needs at least 16 radii"));
        }
        Ok(Self {
            integrator: BallIntegrator::new(pot.field(), pot.extension()),
            grid,
            dim: pot.field().dim(),
        })
    }

    /// Largest grid radius with `r^(2-d) * int_B V <= 1`.
    ///
    /// Radii are scanned upward. The ball integral never decreases with the
    /// radius, so any radius whose `r^(d-2)` is below an integral already
    /// seen fails without being evaluated.
    pub fn rho_at(&self, x: &[T]) -> Result<RhoSample<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let radii = self.grid.radii();
        let mut best: Option<usize> = None;
        let mut seen = T::zero();
        for (i, &r) in radii.iter().enumerate() {
            let scale = r.powi(self.dim as i32 - 2);
            if scale < seen {
                continue;
            }
            let integral = self.integrator.integral(&BallSpec::new(x.to_vec(), r)?)?;
            seen = seen.max(integral);
            if integral <= scale {
                best = Some(i);
            }
        }
        Ok(match best {
            None => RhoSample {
                rho: radii[0],
                flag: RhoFlag::BelowGrid,
            },
            Some(i) if i + 1 == radii.len() => RhoSample {
                rho: radii[i],
                flag: RhoFlag::AboveGrid,
            },
            Some(i) => RhoSample {
                rho: radii[i],
                flag: RhoFlag::Resolved,
            },
        })
    }
}

pub fn compute_rho_at<T: Real>(pot: &Potential<T>, x: &[T], grid: &RadiusGrid<T>) -> Result<RhoSample<T>> {
    RhoSolver::new(pot, grid)?.rho_at(x)
}

/// Critical radius at every cell center of the potential's grid.
#[derive(Clone, Debug)]
pub struct RhoField<T> {
    pub field: GridField<T>,
    pub flags: Vec<RhoFlag>,
    pub grid: RadiusGrid<T>,
}

impl<T: Real> RhoField<T> {
    pub fn count(&self, flag: RhoFlag) -> usize {
        self.flags.iter().filter(|&&f| f == flag).count()
    }
}

pub fn compute_rho_field<T: Real>(pot: &Potential<T>, grid: &RadiusGrid<T>) -> Result<RhoField<T>> {
    let solver = RhoSolver::new(pot, grid)?;
    let lat = pot.field().lattice();
    let samples: Vec<RhoSample<T>> = (0..lat.len())
        .into_par_iter()
        .map(|i| solver.rho_at(&lat.cell_center_linear(i)))
        .collect::<Result<_>>()?;
    let field = pot
        .field()
        .with_values(samples.iter().map(|s| s.rho).collect(), FieldKind::Rho)?;
    Ok(RhoField {
        field,
        flags: samples.iter().map(|s| s.flag).collect(),
        grid: grid.clone(),
    })
}

/// Points carrying the critical radius of the cell that contains them.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoSamples<T> {
    pub points: Vec<Vec<T>>,
    pub rho: Vec<T>,
}

impl<T: Real> RhoSamples<T> {
    pub fn at_points(rho: &GridField<T>, points: Vec<Vec<T>>) -> Self {
        let vals = points.iter().map(|p| rho.nearest_value(p)).collect();
        Self { points, rho: vals }
    }

    /// Every `stride`-th cell center along each axis.
    pub fn cell_centers(rho: &GridField<T>, stride: usize) -> Self {
        let lat = rho.lattice();
        let stride = stride.max(1);
        let points = (0..lat.len())
            .map(|i| lat.unravel(i))
            .filter(|idx| idx.iter().all(|i| i % stride == 0))
            .map(|idx| lat.cell_center(&idx))
            .collect();
        Self::at_points(rho, points)
    }

    /// Appends points not already present.
    pub fn extend(&mut self, rho: &GridField<T>, points: impl IntoIterator<Item = Vec<T>>) {
        for p in points {
            if !self.points.contains(&p) {
                self.rho.push(rho.nearest_value(&p));
                self.points.push(p);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Fitted constants of the two-sided comparison
/// `C0^-1 (1+|x-y|/rho(x))^-N0 <= rho(y)/rho(x) <= C0 (1+|x-y|/rho(x))^(N0/(N0+1))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RhoComparisonEstimate {
    pub n0: f64,
    pub c0: f64,
    pub pair_count: usize,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    /// `(N0, fitted C0)` for every candidate tried.
    pub candidates: Vec<(f64, f64)>,
}

fn dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
        .sqrt()
}

/// Smallest `C0` for the pair `(x, y)` in that order.
pub fn pair_constant<T: Real>(x: &[T], rho_x: T, y: &[T], rho_y: T, n0: T) -> T {
    let t = T::one() + dist(x, y) / rho_x;
    let lower = rho_x / rho_y * t.powf(-n0);
    let upper = rho_y / rho_x * t.powf(-(n0 / (n0 + T::one())));
    lower.max(upper)
}

fn fit_one<T: Real>(samples: &RhoSamples<T>, n0: T) -> (T, Option<(usize, usize)>) {
    let n = samples.len();
    let per_x: Vec<(T, Option<(usize, usize)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (T::one(), None);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let c = pair_constant(
                    &samples.points[i],
                    samples.rho[i],
                    &samples.points[j],
                    samples.rho[j],
                    n0,
                );
                if c > best.0 {
                    best = (c, Some((i, j)));
                }
            }
            best
        })
        .collect();
    per_x
        .into_iter()
        .fold((T::one(), None), |acc, cur| if cur.0 > acc.0 { cur } else { acc })
}

pub fn estimate_rho_comparison<T: Real>(
    samples: &RhoSamples<T>,
    n0_candidates: &[f64],
) -> Result<RhoComparisonEstimate> {
    if n0_candidates.is_empty() {
        return Err(invalid("no N0 candidates"));
    }
    if n0_candidates.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(invalid("N0 candidates must be positive"));
    }
    if samples.rho.iter().any(|&r| !(r > T::zero())) {
        return Err(invalid("critical radius must be positive"));
    }
    let mut cands: Vec<f64> = n0_candidates.to_vec();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    type Fit<T> = (f64, T, Option<(usize, usize)>);
    let fits: Vec<Fit<T>> = cands
        .iter()
        .map(|&n0| {
            let (c, w) = fit_one(samples, T::of(n0));
            (n0, c, w)
        })
        .collect();
    let best = fits
        .iter()
        .fold(&fits[0], |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let n = samples.len();
    Ok(RhoComparisonEstimate {
        n0: best.0,
        c0: best.1.as_f64(),
        pair_count: n * n.saturating_sub(1),
        worst_pair: best.2.map(|(i, j)| {
            let f = |p: &Vec<T>| p.iter().map(|v| v.as_f64()).collect();
            (f(&samples.points[i]), f(&samples.points[j]))
        }),
        candidates: fits.iter().map(|(n0, c, _)| (*n0, c.as_f64())).collect(),
    })
}

/// Checks both comparison bounds at every sampled ordered pair.
pub fn verify_rho_comparison<T: Real>(samples: &RhoSamples<T>, est: &RhoComparisonEstimate) -> CheckReport {
    let n0 = T::of(est.n0);
    let n = samples.len();
    let items: Vec<CheckItem> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = (0.0, i);
            for j in 0..n {
                if i != j {
                    let c = pair_constant(
                        &samples.points[i],
                        samples.rho[i],
                        &samples.points[j],
                        samples.rho[j],
                        n0,
                    )
                    .as_f64();
                    if c > worst.0 {
                        worst = (c, j);
                    }
                }
            }
            CheckItem::new(
                Witness::pair(&samples.points[i], &samples.points[worst.1]),
                worst.0,
                1.0,
            )
        })
        .collect();
    CheckReport::new("rho-comparison")
        .param("n0", est.n0)
        .param("c0", est.c0)
        .bounded(items, est.c0, 0.0)
}

/// `1 + r/rho(x) <= C0 (1 + r/rho(x0))^(N0+1)` for every cell center `x` in
/// every ball `B(x0, r)` of the family.
pub fn check_window_estimate<T: Real>(
    rho: &GridField<T>,
    est: &RhoComparisonEstimate,
    balls: &[BallSpec<T>],
) -> Result<CheckReport> {
    if balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let lat = rho.lattice();
    let exp = T::of(est.n0 + 1.0);
    let items: Vec<CheckItem> = balls
        .par_iter()
        .map(|b| {
            let rho0 = rho.nearest_value(&b.center);
            let rhs = (T::one() + b.radius / rho0).powf(exp);
            let mut worst = T::zero();
            Region::Ball(b.clone()).for_each_run(lat, |start, len| {
                for &r in &rho.values()[start..start + len] {
                    worst = worst.max(T::one() + b.radius / r);
                }
            });
            CheckItem::new(Witness::ball(b), worst.as_f64(), rhs.as_f64())
        })
        .collect();
    Ok(CheckReport::new("window-estimate")
        .param("n0", est.n0)
        .param("c0", est.c0)
        .bounded(items, est.c0, T::check_tol(1e-12)))
}

/// Empirical reverse Hölder constant `sup (avg V^s)^(1/s) / avg V` over the
/// family. Balls where `V` averages to zero are skipped and counted.
pub fn reverse_holder_constant<T: Real>(pot: &Potential<T>, s: T, balls: &[BallSpec<T>]) -> Result<CheckReport> {
    if !(s > T::one()) {
        return Err(invalid("reverse Hölder exponent must exceed 1"));
    }
    if balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let f = pot.field();
    let lat = f.lattice();
    let plain = RegionSums::new(lat, f.values());
    let powered: Vec<T> = f.values().iter().map(|&v| v.powf(s)).collect();
    let powered = RegionSums::new(lat, &powered);
    let rows: Vec<Option<CheckItem>> = balls
        .par_iter()
        .map(|b| {
            let region = Region::Ball(b.clone());
            let (iv, vol) = plain.integral(&region);
            if !(iv > T::zero()) || !(vol > T::zero()) {
                return None;
            }
            let (is, _) = powered.integral(&region);
            let lhs = (is / vol).powf(T::one() / s);
            Some(CheckItem::new(Witness::ball(b), lhs.as_f64(), (iv / vol).as_f64()))
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let items: Vec<CheckItem> = rows.into_iter().flatten().collect();
    Ok(CheckReport::new("reverse-holder")
        .param("s", s.as_f64())
        .param("skipped", skipped as f64)
        .fitted_only(items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBox;

    fn potential(n: usize, a: f64, v: impl Fn(&[f64]) -> f64) -> Potential<f64> {
        let bx = GridBox::symmetric(3, a).unwrap();
        Potential::with_defaults(GridField::from_fn(&bx, vec![n; 3], FieldKind::Potential, v).unwrap()).unwrap()
    }

    #[test]
    fn unit_potential_matches_closed_form() {
        let pot = potential(32, 2.0, |_| 1.0);
        let grid = RadiusGrid::for_lattice(pot.field().lattice());
        let want = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
        let s = compute_rho_at(&pot, &[0.0625, 0.0625, 0.0625], &grid).unwrap();
        assert_eq!(s.flag, RhoFlag::Resolved);
        let q = grid.step();
        assert!(s.rho / want <= q && want / s.rho <= q, "{} vs {want}", s.rho);
    }

    #[test]
    fn vanishing_neighbourhood_is_above_grid() {
        let pot = potential(16, 2.0, |x| if x[0] > 1.5 { 1.0 } else { 0.0 });
        let grid = RadiusGrid::geometric(0.125, 0.5, 16).unwrap();
        let s = compute_rho_at(&pot, &[0.0, 0.0, 0.0], &grid).unwrap();
        assert_eq!(s.flag, RhoFlag::AboveGrid);
        assert_eq!(s.rho, 0.5);
    }

    #[test]
    fn huge_potential_is_below_grid() {
        let pot = potential(8, 1.0, |_| 1e6);
        let grid = RadiusGrid::geometric(0.25, 2.0, 16).unwrap();
        let s = compute_rho_at(&pot, &[0.0; 3], &grid).unwrap();
        assert_eq!(s.flag, RhoFlag::BelowGrid);
        assert_eq!(s.rho, 0.25);
    }

    #[test]
    fn preconditions() {
        let bx = GridBox::symmetric(2, 1.0).unwrap();
        let f = GridField::constant(&bx, vec![4, 4], FieldKind::Potential, 1.0).unwrap();
        let pot = Potential::with_defaults(f).unwrap();
        let grid = RadiusGrid::geometric(0.1, 1.0, 16).unwrap();
        assert!(compute_rho_at(&pot, &[0.0, 0.0], &grid).is_err());
        let pot = potential(4, 1.0, |_| 1.0);
        let short = RadiusGrid::geometric(0.1, 1.0, 8).unwrap();
        assert!(compute_rho_at(&pot, &[0.0; 3], &short).is_err());
        assert!(RadiusGrid::<f64>::geometric(0.1, 1.0, 0).is_err());
        let zero = GridField::constant(
            &GridBox::symmetric(3, 1.0).unwrap(),
            vec![2; 3],
            FieldKind::Potential,
            0.0,
        )
        .unwrap();
        assert!(Potential::with_defaults(zero).is_err());
    }

    #[test]
    fn constant_rho_compares_with_unit_constant() {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let rho = GridField::constant(&bx, vec![4; 3], FieldKind::Rho, 0.3).unwrap();
        let samples = RhoSamples::cell_centers(&rho, 1);
        let est = estimate_rho_comparison(&samples, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(est.c0, 1.0);
        assert_eq!(est.n0, 0.5);
        assert!(est.candidates.iter().all(|&(_, c)| c == 1.0));
    }

    #[test]
    fn fitted_constant_holds_and_shrinks_with_n0() {
        let bx = GridBox::symmetric(3, 3.0).unwrap();
        let rho = GridField::from_fn(&bx, vec![8; 3], FieldKind::Rho, |x: &[f64]| {
            1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .unwrap();
        let samples = RhoSamples::cell_centers(&rho, 1);
        let est = estimate_rho_comparison(&samples, &[0.5, 1.0, 2.0, 4.0]).unwrap();
        assert!(est.c0.is_finite() && est.c0 >= 1.0);
        assert!(est.candidates.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(verify_rho_comparison(&samples, &est).passed);
    }
}
