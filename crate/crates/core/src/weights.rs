//! Weight classes adapted to a critical radius: characteristic constants,
//! reverse Hölder and measure comparison, the maximal operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{BallSpec, CubeSpec, FieldKind, GridField, Lattice, Region, RegionSums};
use crate::report::{CheckItem, CheckReport, Witness};
use crate::scalar::Real;
use crate::seminorms::decay;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightConstantReport {
    pub p: f64,
    pub q: Option<f64>,
    pub theta: f64,
    pub value: f64,
    pub witness: Option<Witness>,
    pub family_size: usize,
    /// Per-member value, in family order.
    pub items: Vec<f64>,
}

fn require_weight<T: Real>(w: &GridField<T>, rho: &GridField<T>) -> Result<()> {
    if w.values().iter().any(|&v| !(v > T::zero())) {
        return Err(Error::InvalidField("weight must be positive on every cell".into()));
    }
    if !w.same_lattice(rho) {
        return Err(invalid("rho field must share the weight's grid"));
    }
    Ok(())
}

fn require_family<T: Real>(lat: &Lattice<T>, family: &[Region<T>]) -> Result<()> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    family.iter().try_for_each(|r| r.validate(lat))
}

/// Conjugate exponent `p/(p-1)`.
pub fn conjugate<T: Real>(p: T) -> T {
    p / (p - T::one())
}

fn powered<T: Real>(w: &GridField<T>, e: T) -> RegionSums<T> {
    let v: Vec<T> = w.values().iter().map(|&x| x.powf(e)).collect();
    RegionSums::new(w.lattice(), &v)
}

fn collect_report<T: Real>(
    p: T,
    q: Option<T>,
    theta: T,
    lat: &Lattice<T>,
    family: &[Region<T>],
    items: Vec<T>,
) -> WeightConstantReport {
    let mut best: Option<usize> = None;
    for (i, v) in items.iter().enumerate() {
        if best.is_none_or(|b| *v > items[b]) {
            best = Some(i);
        }
    }
    WeightConstantReport {
        p: p.as_f64(),
        q: q.map(|q| q.as_f64()),
        theta: theta.as_f64(),
        value: best.map_or(0.0, |b| items[b].as_f64()),
        witness: best.map(|b| Witness::region(&family[b], lat)),
        family_size: family.len(),
        items: items.iter().map(|v| v.as_f64()).collect(),
    }
}

fn ap_items<T: Real>(w: &GridField<T>, rho: &GridField<T>, p: T, theta: T, family: &[Region<T>]) -> Vec<T> {
    let lat = w.lattice();
    let plain = RegionSums::new(lat, w.values());
    let dual = (p > T::one()).then(|| powered(w, -(conjugate(p) / p)));
    family
        .par_iter()
        .map(|region| {
            let dec = decay(region.scale(lat), rho.nearest_value(&region.center(lat)), theta);
            let avg = plain.average(region);
            match &dual {
                Some(dual) => {
                    let pp = conjugate(p);
                    dec * avg.powf(T::one() / p) * dual.average(region).powf(T::one() / pp)
                }
                None => dec * avg / w.region_min(region),
            }
        })
        .collect()
}

fn apq_items<T: Real>(w: &GridField<T>, rho: &GridField<T>, p: T, q: T, theta: T, family: &[Region<T>]) -> Vec<T> {
    let lat = w.lattice();
    let upper = powered(w, q);
    let dual = (p > T::one()).then(|| powered(w, -conjugate(p)));
    family
        .par_iter()
        .map(|region| {
            let dec = decay(region.scale(lat), rho.nearest_value(&region.center(lat)), theta);
            let head = upper.average(region).powf(T::one() / q);
            match &dual {
                Some(dual) => dec * head * dual.average(region).powf(T::one() / conjugate(p)),
                None => dec * head / w.region_min(region),
            }
        })
        .collect()
}

/// Characteristic constant of the `p` class at decay exponent `theta`.
pub fn ap_constant<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    theta: T,
    family: &[Region<T>],
) -> Result<WeightConstantReport> {
    require_weight(w, rho)?;
    require_family(w.lattice(), family)?;
    if !(p >= T::one()) {
        return Err(invalid("p must be at least 1"));
    }
    if !(theta >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    let items = ap_items(w, rho, p, theta, family);
    Ok(collect_report(p, None, theta, w.lattice(), family, items))
}

/// Characteristic constant of the `(p, q)` class.
pub fn apq_constant<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta: T,
    family: &[Region<T>],
) -> Result<WeightConstantReport> {
    require_weight(w, rho)?;
    require_family(w.lattice(), family)?;
    if !(p >= T::one() && q > p) {
        return Err(invalid("need 1 <= p < q"));
    }
    if !(theta >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    let items = apq_items(w, rho, p, q, theta, family);
    Ok(collect_report(p, Some(q), theta, w.lattice(), family, items))
}

/// `eta = theta p + (theta + d) p N0/(N0+1) + (N0+1) d eps/(1+eps)`.
pub fn eta<T: Real>(theta: T, p: T, n0: T, d: usize, eps: T) -> T {
    let d = T::of_usize(d);
    let one = T::one();
    theta * p + (theta + d) * p * n0 / (n0 + one) + (n0 + one) * d * eps / (one + eps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightRegularityEstimate {
    pub epsilon: f64,
    pub eta: f64,
    pub delta: f64,
    /// Fitted constant, at least 1.
    pub c: f64,
    pub p: f64,
    pub theta: f64,
    pub n0: f64,
    /// `(epsilon, eta, C)` per candidate.
    pub candidates: Vec<(f64, f64, f64)>,
    pub witness: Option<Witness>,
}

/// Fits `(avg w^(1+eps))^(1/(1+eps)) <= C avg(w) (1 + r/rho)^eta` over the
/// cube family for each `eps` and keeps the smallest `C`.
pub fn weight_reverse_holder<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    theta: T,
    n0: T,
    eps_candidates: &[T],
    cubes: &[CubeSpec],
) -> Result<WeightRegularityEstimate> {
    require_weight(w, rho)?;
    if eps_candidates.is_empty() {
        return Err(invalid("no epsilon candidates"));
    }
    if eps_candidates.iter().any(|e| !(*e > T::zero())) {
        return Err(invalid("epsilon candidates must be positive"));
    }
    if !(p >= T::one() && theta >= T::zero() && n0 > T::zero()) {
        return Err(invalid("need p >= 1, theta >= 0, N0 > 0"));
    }
    let lat = w.lattice();
    let family: Vec<Region<T>> = cubes.iter().cloned().map(Region::Cube).collect();
    require_family(lat, &family)?;
    let plain = RegionSums::new(lat, w.values());
    let prep: Vec<(T, T)> = family
        .iter()
        .map(|r| {
            (
                plain.average(r),
                T::one() + r.scale(lat) / rho.nearest_value(&r.center(lat)),
            )
        })
        .collect();
    let mut fits = Vec::new();
    for &eps in eps_candidates {
        let et = eta(theta, p, n0, lat.dim(), eps);
        if !(et > T::one()) {
            return Err(invalid(format!("eta = {} must exceed 1", et.as_f64())));
        }
        let hi = powered(w, T::one() + eps);
        let ratios: Vec<T> = family
            .par_iter()
            .zip(prep.par_iter())
            .map(|(r, &(avg, u))| hi.average(r).powf(T::one() / (T::one() + eps)) / (avg * u.powf(et)))
            .collect();
        let (mut c, mut at) = (T::one(), None);
        for (i, &v) in ratios.iter().enumerate() {
            if v > c {
                c = v;
                at = Some(i);
            }
        }
        fits.push((eps, et, c, at));
    }
    let best = fits.iter().fold(&fits[0], |a, b| if b.2 < a.2 { b } else { a });
    let (eps, et, c, at) = *best;
    Ok(WeightRegularityEstimate {
        epsilon: eps.as_f64(),
        eta: et.as_f64(),
        delta: (eps / (T::one() + eps)).as_f64(),
        c: c.as_f64(),
        p: p.as_f64(),
        theta: theta.as_f64(),
        n0: n0.as_f64(),
        candidates: fits
            .iter()
            .map(|f| (f.0.as_f64(), f.1.as_f64(), f.2.as_f64()))
            .collect(),
        witness: at.map(|i| Witness::region(&family[i], lat)),
    })
}

/// Subsets `E` of a cube used to probe the measure comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetKind {
    /// Each cell kept with a random probability.
    CellUnion,
    /// A random aligned subcube.
    SubCube,
    /// Cells where the weight exceeds a random level.
    LevelSet,
    SingleCell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetGenerator {
    pub seed: u64,
    pub draws: usize,
    pub kinds: Vec<SubsetKind>,
}

impl SubsetGenerator {
    pub fn new(seed: u64, draws: usize) -> Self {
        Self {
            seed,
            draws,
            kinds: vec![
                SubsetKind::CellUnion,
                SubsetKind::SubCube,
                SubsetKind::LevelSet,
                SubsetKind::SingleCell,
            ],
        }
    }
}

fn draw_subset<T: Real>(
    rng: &mut ChaCha8Rng,
    kind: SubsetKind,
    w: &GridField<T>,
    q: &CubeSpec,
    cells: &[usize],
) -> Vec<usize> {
    let lat = w.lattice();
    let mut e: Vec<usize> = match kind {
        SubsetKind::CellUnion => {
            let keep: f64 = rng.gen();
            cells.iter().copied().filter(|_| rng.gen::<f64>() < keep).collect()
        }
        SubsetKind::SubCube => {
            let k0 = rng.gen_range(1..=q.cells[0]);
            let side = T::of_usize(k0) * lat.spacing()[0];
            let sub: Option<Vec<usize>> = (0..q.dim())
                .map(|a| {
                    let t = (side / lat.spacing()[a]).round().as_f64() as usize;
                    (t >= 1 && t <= q.cells[a]).then_some(t)
                })
                .collect();
            match sub {
                Some(sub) => {
                    let lo = (0..q.dim())
                        .map(|a| q.lo[a] + rng.gen_range(0..=q.cells[a] - sub[a]))
                        .collect();
                    match CubeSpec::new(lat, lo, sub) {
                        Ok(s) => Region::Cube(s).cells(lat),
                        Err(_) => Vec::new(),
                    }
                }
                None => Vec::new(),
            }
        }
        SubsetKind::LevelSet => {
            let mut vals: Vec<T> = cells.iter().map(|&c| w.values()[c]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let level = vals[rng.gen_range(0..vals.len())];
            cells.iter().copied().filter(|&c| w.values()[c] >= level).collect()
        }
        SubsetKind::SingleCell => vec![cells[rng.gen_range(0..cells.len())]],
    };
    if e.is_empty() {
        e.push(cells[rng.gen_range(0..cells.len())]);
    }
    e
}

/// `w(E)/w(Q) <= C (|E|/|Q|)^delta (1 + r/rho)^eta` over generated subsets,
/// with `(C, delta, eta)` from `est`.
pub fn measure_comparison_check<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    est: &WeightRegularityEstimate,
    cubes: &[CubeSpec],
    gen: &SubsetGenerator,
) -> Result<CheckReport> {
    require_weight(w, rho)?;
    if cubes.is_empty() || gen.kinds.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let lat = w.lattice();
    cubes.iter().try_for_each(|q| q.validate(lat))?;
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let delta = T::of(est.delta);
    let et = T::of(est.eta);
    let mut items = Vec::with_capacity(gen.draws);
    for i in 0..gen.draws {
        let q = &cubes[rng.gen_range(0..cubes.len())];
        let kind = gen.kinds[i % gen.kinds.len()];
        let cells = Region::<T>::Cube(q.clone()).cells(lat);
        let e = draw_subset(&mut rng, kind, w, q, &cells);
        if let Some(&c) = e.iter().find(|&&c| !q.contains_cell(&lat.unravel(c))) {
            return Err(invalid(format!("subset cell {c} lies outside its cube")));
        }
        let we: T = e.iter().map(|&c| w.values()[c]).sum();
        let wq: T = cells.iter().map(|&c| w.values()[c]).sum();
        let frac = T::of_usize(e.len()) / T::of_usize(cells.len());
        let u = T::one() + q.side(lat) / rho.nearest_value(&q.center(lat));
        let rhs = frac.powf(delta) * u.powf(et);
        items.push(CheckItem::new(Witness::cube(q, lat), (we / wq).as_f64(), rhs.as_f64()));
    }
    Ok(CheckReport::new("measure-comparison")
        .param("c", est.c)
        .param("delta", est.delta)
        .param("eta", est.eta)
        .param("epsilon", est.epsilon)
        .param("draws", gen.draws as f64)
        .param("seed", gen.seed as f64)
        .bounded(items, est.c, T::check_tol(1e-12)))
}

/// `t = 1 + q/p'` and `theta~ = theta / (1/q + 1/p')` for `p > 1`; `(1,
/// theta q)` for `p = 1`.
pub fn apq_to_ap_exponents<T: Real>(p: T, q: T, theta: T) -> (T, T) {
    if p > T::one() {
        let pp = conjugate(p);
        (T::one() + q / pp, theta / (T::one() / q + T::one() / pp))
    } else {
        (T::one(), theta * q)
    }
}

/// Computes `[w]_{p,q,theta}` and `[w^q]_{t,theta~}` on the same family.
/// Member by member the second equals the first raised to `q/t`, so the
/// check bounds each member's `t`-class value by that power.
pub fn apq_to_ap_check<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta: T,
    family: &[Region<T>],
) -> Result<CheckReport> {
    let first = apq_constant(w, rho, p, q, theta, family)?;
    let (t, theta_t) = apq_to_ap_exponents(p, q, theta);
    let wq = w.map(FieldKind::Weight, |v| v.powf(q))?;
    let second = ap_constant(&wq, rho, t, theta_t, family)?;
    let power = (q / t).as_f64();
    let lat = w.lattice();
    let items = family
        .iter()
        .zip(first.items.iter().zip(&second.items))
        .map(|(r, (&a, &b))| CheckItem::new(Witness::region(r, lat), b, a.powf(power)))
        .collect();
    Ok(CheckReport::new("apq-to-ap")
        .param("p", p.as_f64())
        .param("q", q.as_f64())
        .param("theta", theta.as_f64())
        .param("t", t.as_f64())
        .param("theta_t", theta_t.as_f64())
        .param("apq", first.value)
        .param("ap_of_power", second.value)
        .param("power", power)
        .bounded(items, 1.0, T::check_tol(1e-10)))
}

/// `M_theta f(x)` on a fixed radius list.
pub struct MaximalOperator<'a, T> {
    abs: RegionSums<T>,
    rho: &'a GridField<T>,
    theta: T,
}

impl<'a, T: Real> MaximalOperator<'a, T> {
    pub fn new(f: &GridField<T>, rho: &'a GridField<T>, theta: T) -> Result<Self> {
        if !f.same_lattice(rho) {
            return Err(invalid("rho field must share the function's grid"));
        }
        if !(theta >= T::zero()) {
            return Err(invalid("theta must be nonnegative"));
        }
        let abs: Vec<T> = f.values().iter().map(|v| v.abs()).collect();
        Ok(Self {
            abs: RegionSums::new(f.lattice(), &abs),
            rho,
            theta,
        })
    }

    /// Balls that cover no cell center are skipped.
    pub fn at(&self, x: &[T], radii: &[T]) -> Result<T> {
        if radii.is_empty() {
            return Err(invalid("empty radius grid"));
        }
        let rho_x = self.rho.nearest_value(x);
        let mut best = T::zero();
        for &r in radii {
            let region = Region::Ball(BallSpec::new(x.to_vec(), r)?);
            let (s, vol) = self.abs.integral(&region);
            if vol > T::zero() {
                best = best.max(decay(r, rho_x, self.theta) * s / vol);
            }
        }
        Ok(best)
    }
}

pub fn maximal_operator<T: Real>(f: &GridField<T>, rho: &GridField<T>, theta: T, x: &[T], radii: &[T]) -> Result<T> {
    MaximalOperator::new(f, rho, theta)?.at(x, radii)
}

/// Fits `M_theta w(x) <= C w(x)` at the given points, each moved to its cell
/// center. The fitted `C` never exceeds the `p = 1` constant over the same
/// centered balls, which is the bound checked; the `p = 1` constants for
/// each `theta'` in `theta_grid` are recorded too.
pub fn a1_maximal_check<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    theta: T,
    points: &[Vec<T>],
    radii: &[T],
    theta_grid: &[T],
) -> Result<CheckReport> {
    require_weight(w, rho)?;
    if points.is_empty() || radii.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let lat = w.lattice();
    let centers: Vec<Vec<T>> = points.iter().map(|x| lat.cell_center(&lat.nearest_cell(x))).collect();
    let m = MaximalOperator::new(w, rho, theta)?;
    let items: Vec<CheckItem> = centers
        .par_iter()
        .map(|x| {
            let mx = m.at(x, radii)?;
            Ok(CheckItem::new(
                Witness::point(x),
                mx.as_f64(),
                w.nearest_value(x).as_f64(),
            ))
        })
        .collect::<Result<_>>()?;
    let balls: Vec<Region<T>> = centers
        .iter()
        .flat_map(|x| {
            radii
                .iter()
                .map(move |&r| BallSpec::new(x.clone(), r).map(Region::Ball))
        })
        .collect::<Result<_>>()?;
    let a1 = ap_constant(w, rho, T::one(), theta, &balls)?;
    let mut report = CheckReport::new("a1-maximal")
        .param("theta", theta.as_f64())
        .param("a1_same_theta", a1.value);
    for &t in theta_grid {
        let c = ap_constant(w, rho, T::one(), t, &balls)?;
        report.set_param(&format!("a1[theta={}]", t.as_f64()), c.value);
    }
    Ok(report.bounded(items, a1.value, T::check_tol(1e-12)))
}

/// `w(2B)/w(B)` per ball, clamped to the grid. Diagnostic only: the report
/// always passes.
pub fn doubling_diagnostic<T: Real>(w: &GridField<T>, balls: &[BallSpec<T>]) -> Result<CheckReport> {
    if w.values().iter().any(|&v| !(v > T::zero())) {
        return Err(Error::InvalidField("weight must be positive on every cell".into()));
    }
    if balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let lat = w.lattice();
    let sums = RegionSums::new(lat, w.values());
    let rows: Vec<(CheckItem, bool)> = balls
        .par_iter()
        .map(|b| {
            let big = b.scaled(T::of(2.0));
            let clamped = !big.fits(lat);
            let (small, _) = sums.integral(&Region::Ball(b.clone()));
            let (large, _) = sums.integral(&Region::Ball(big));
            (
                CheckItem::new(Witness::ball(b), large.as_f64(), small.as_f64()),
                clamped,
            )
        })
        .collect();
    let clamped = rows.iter().filter(|r| r.1).count();
    let items = rows.into_iter().map(|r| r.0).collect();
    let mut report = CheckReport::new("doubling")
        .param("clamped", clamped as f64)
        .fitted_only(items);
    report.passed = true;
    report.violations = 0;
    Ok(report)
}
