//! Weighted characterizations of the lower-oscillation and Campanato-type
//! classes: forward bounds with fitted constants, the finite Hölder and
//! power-mean chains behind the converses, tail integrals and the
//! pointwise Lipschitz estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::critical_radius::RhoComparisonEstimate;
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, Lattice, Region};
use crate::report::{CheckItem, CheckReport, Witness};
use crate::scalar::{Compensated, Real};
use crate::seminorms::{seminorm_value, SeminormFamily};
use crate::weights::{ap_constant, apq_constant, conjugate, WeightConstantReport, WeightRegularityEstimate};

/// Default drift allowed between successive grid doublings.
pub const DRIFT_TOLERANCE: f64 = 0.25;

/// Relative slack for the finite inequalities that hold for every input.
pub const CHAIN_TOLERANCE: f64 = 1e-10;

/// Which weight class the statement is about.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightClass<T> {
    Ap { p: T },
    Apq { p: T, q: T },
}

impl<T: Real> WeightClass<T> {
    fn validate(&self) -> Result<()> {
        match *self {
            WeightClass::Ap { p } if p >= T::one() && p.is_finite() => Ok(()),
            WeightClass::Apq { p, q } if p >= T::one() && q > p && q.is_finite() => Ok(()),
            _ => Err(invalid("need p >= 1 (and p < q)")),
        }
    }

    /// Exponent of the weighted mean on the left-hand side.
    fn power(&self) -> T {
        match *self {
            WeightClass::Ap { p } => p,
            WeightClass::Apq { q, .. } => q,
        }
    }

    /// Power of the weight in the measure: `w dx` or `w^q dx`.
    fn weight_power(&self) -> T {
        match *self {
            WeightClass::Ap { .. } => T::one(),
            WeightClass::Apq { q, .. } => q,
        }
    }

    pub fn constant(
        &self,
        w: &GridField<T>,
        rho: &GridField<T>,
        theta: T,
        family: &[Region<T>],
    ) -> Result<WeightConstantReport> {
        match *self {
            WeightClass::Ap { p } => ap_constant(w, rho, p, theta, family),
            WeightClass::Apq { p, q } => apq_constant(w, rho, p, q, theta, family),
        }
    }

    fn params(&self, r: CheckReport) -> CheckReport {
        match *self {
            WeightClass::Ap { p } => r.param("p", p.as_f64()),
            WeightClass::Apq { p, q } => r.param("p", p.as_f64()).param("q", q.as_f64()),
        }
    }
}

fn csum<T: Real>(it: impl Iterator<Item = T>) -> T {
    it.fold(Compensated::default(), |acc, v| acc.add(Compensated::new(v, T::zero())))
        .value()
}

/// Values of `f - essinf f` and of the weight on the cells of one region.
struct Local<T> {
    g: Vec<T>,
    w: Vec<T>,
}

impl<T: Real> Local<T> {
    fn new(f: &GridField<T>, w: &GridField<T>, region: &Region<T>) -> Self {
        let cells = region.cells(f.lattice());
        let fv: Vec<T> = cells.iter().map(|&c| f.values()[c]).collect();
        let m = fv.iter().copied().fold(T::infinity(), T::min);
        Self {
            g: fv.iter().map(|&v| v - m).collect(),
            w: cells.iter().map(|&c| w.values()[c]).collect(),
        }
    }

    fn n(&self) -> T {
        T::of_usize(self.g.len())
    }

    fn mean_g(&self) -> T {
        csum(self.g.iter().copied()) / self.n()
    }

    fn avg_w(&self, e: T) -> T {
        csum(self.w.iter().map(|&w| w.powf(e))) / self.n()
    }

    /// `(sum g^s w^a / sum w^a)^(1/s)`.
    fn weighted_mean(&self, s: T, a: T) -> T {
        let num = csum(self.g.iter().zip(&self.w).map(|(&g, &w)| g.powf(s) * w.powf(a)));
        let den = csum(self.w.iter().map(|&w| w.powf(a)));
        (num / den).powf(T::one() / s)
    }

    /// `(avg (g w)^s)^(1/s)`.
    fn product_mean(&self, s: T) -> T {
        (csum(self.g.iter().zip(&self.w).map(|(&g, &w)| (g * w).powf(s))) / self.n()).powf(T::one() / s)
    }

    fn max_inv_w(&self) -> T {
        self.w.iter().map(|&w| T::one() / w).fold(T::zero(), T::max)
    }

    fn max_g(&self) -> T {
        self.g.iter().copied().fold(T::zero(), T::max)
    }
}

fn u<T: Real>(rho: &GridField<T>, lat: &Lattice<T>, region: &Region<T>) -> T {
    T::one() + region.scale(lat) / rho.nearest_value(&region.center(lat))
}

fn check_inputs<T: Real>(f: &GridField<T>, w: &GridField<T>, rho: &GridField<T>, family: &[Region<T>]) -> Result<()> {
    if !f.same_lattice(w) || !f.same_lattice(rho) {
        return Err(invalid("function, weight and rho must share one grid"));
    }
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    family.iter().try_for_each(|r| r.validate(f.lattice()))
}

fn check_beta<T: Real>(beta: Option<T>, family: &[Region<T>]) -> Result<()> {
    if let Some(b) = beta {
        if !(b > T::zero() && b < T::one()) {
            return Err(invalid("beta must lie in (0, 1)"));
        }
    }
    if family.iter().any(|r| r.is_ball() != beta.is_some()) {
        return Err(invalid(
            "cube statements take cubes, ball statements take balls and a beta",
        ));
    }
    Ok(())
}

fn oscillation_norm<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    theta: T,
    beta: Option<T>,
    family: &[Region<T>],
) -> Result<T> {
    let kind = if beta.is_some() {
        SeminormFamily::CamStar
    } else {
        SeminormFamily::Blo
    };
    seminorm_value(f, rho, kind, theta, beta, family)
}

/// `|B|^(beta/d)`, or 1 for cube statements.
fn size_factor<T: Real>(lat: &Lattice<T>, region: &Region<T>, beta: Option<T>) -> T {
    match beta {
        Some(b) => region.measure(lat).powf(b / T::of_usize(lat.dim())),
        None => T::one(),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward<T: Real>(
    name: &str,
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    class: WeightClass<T>,
    theta1: T,
    theta2: T,
    beta: Option<T>,
    family: &[Region<T>],
    eta: T,
    n0: T,
) -> Result<CheckReport> {
    class.validate()?;
    check_inputs(f, w, rho, family)?;
    check_beta(beta, family)?;
    if !(theta1 >= T::zero() && theta2 >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    let wc = class.constant(w, rho, theta2, family)?;
    if !wc.value.is_finite() {
        return Err(invalid("weight constant is not finite on this family"));
    }
    let lat = f.lattice();
    let norm = oscillation_norm(f, rho, theta1, beta, family)?;
    let exponent = (n0 + T::one()) * theta1 + eta;
    let (s, a) = (class.power(), class.weight_power());
    let rows: Vec<(CheckItem, CheckItem)> = family
        .par_iter()
        .map(|region| {
            let loc = Local::new(f, w, region);
            let size = size_factor(lat, region, beta);
            let uu = u(rho, lat, region);
            let lhs = loc.weighted_mean(s, a) / size;
            let rhs = uu.powf(exponent) * norm;
            let at = Witness::region(region, lat);
            let point_rhs = size * norm * uu.powf((n0 + T::one()) * theta1);
            (
                CheckItem::new(at.clone(), lhs.as_f64(), rhs.as_f64()),
                CheckItem::new(at, loc.max_g().as_f64(), point_rhs.as_f64()),
            )
        })
        .collect();
    let (items, pointwise): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut report = class
        .params(CheckReport::new(name))
        .param("theta1", theta1.as_f64())
        .param("theta2", theta2.as_f64())
        .param("n0", n0.as_f64())
        .param("eta_term", eta.as_f64())
        .param("exponent", exponent.as_f64())
        .param("seminorm", norm.as_f64())
        .param("weight_constant", wc.value);
    if let Some(b) = beta {
        let pw = CheckReport::new("pointwise").fitted_only(pointwise);
        report = report
            .param("beta", b.as_f64())
            .param("pointwise_fitted", pw.fitted)
            .note(format!("pointwise ball bound fitted constant {}", pw.fitted));
    }
    Ok(report.fitted_only(items))
}

/// Weighted `L^p` lower oscillation over cubes against
/// `(1 + r/rho)^((N0+1) theta1 + eta/p) ||f||`, with the seminorm over the
/// same family.
#[allow(clippy::too_many_arguments)]
pub fn thm1_forward<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    theta1: T,
    theta2: T,
    family: &[Region<T>],
    reg: &WeightRegularityEstimate,
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    let eta = T::of(reg.eta) / p;
    forward(
        "ap-cubes-forward",
        f,
        w,
        rho,
        WeightClass::Ap { p },
        theta1,
        theta2,
        None,
        family,
        eta,
        T::of(est.n0),
    )
}

/// The `w^q` version with exponent `(N0+1) theta1 + eta/q`.
#[allow(clippy::too_many_arguments)]
pub fn thm2_forward<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta1: T,
    theta2: T,
    family: &[Region<T>],
    reg: &WeightRegularityEstimate,
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    let eta = T::of(reg.eta) / q;
    forward(
        "apq-cubes-forward",
        f,
        w,
        rho,
        WeightClass::Apq { p, q },
        theta1,
        theta2,
        None,
        family,
        eta,
        T::of(est.n0),
    )
}

/// Ball version: `|B|^(-beta/d)` times the weighted `L^p` mean against
/// `(1 + r/rho)^((N0+1) theta1) ||f||`. Also fits the cell-wise bound
/// `f - essinf_B f <= C |B|^(beta/d) ||f|| (1 + r/rho)^((N0+1) theta1)`.
#[allow(clippy::too_many_arguments)]
pub fn thm3_forward<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    theta1: T,
    theta2: T,
    beta: T,
    family: &[Region<T>],
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    forward(
        "ap-balls-forward",
        f,
        w,
        rho,
        WeightClass::Ap { p },
        theta1,
        theta2,
        Some(beta),
        family,
        T::zero(),
        T::of(est.n0),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn thm4_forward<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta1: T,
    theta2: T,
    beta: T,
    family: &[Region<T>],
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    forward(
        "apq-balls-forward",
        f,
        w,
        rho,
        WeightClass::Apq { p, q },
        theta1,
        theta2,
        Some(beta),
        family,
        T::zero(),
        T::of(est.n0),
    )
}

/// Finite inequalities behind the converse directions, per region, plus
/// the assembled implication: with `K = max H(R) (1 + r/rho)^(theta2 - theta1)`
/// for the hypothesis quantity `H`, the seminorm at `theta1` over the same
/// family is at most `K [w]_theta2` (times the largest covered-to-exact
/// volume ratio on balls). The same implication with the two thetas
/// exchanged is checked as well. `beta` switches to balls.
#[allow(clippy::too_many_arguments)]
pub fn converse_chain<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    class: WeightClass<T>,
    theta1: T,
    theta2: T,
    beta: Option<T>,
    family: &[Region<T>],
) -> Result<CheckReport> {
    class.validate()?;
    check_inputs(f, w, rho, family)?;
    check_beta(beta, family)?;
    if !(theta1 >= T::zero() && theta2 >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    let lat = f.lattice();
    let one = T::one();
    struct Row<T> {
        items: Vec<CheckItem>,
        hyp: T,
        u: T,
        cover: T,
    }
    let rows: Vec<Row<T>> = family
        .par_iter()
        .map(|region| {
            let loc = Local::new(f, w, region);
            let at = Witness::region(region, lat);
            let mean = loc.mean_g();
            let mut items = Vec::new();
            let mut push = |step: &str, lhs: T, rhs: T| {
                items.push(CheckItem::new(
                    Witness::step(step, at.clone()),
                    lhs.as_f64(),
                    rhs.as_f64(),
                ))
            };
            match class {
                WeightClass::Ap { p } => {
                    let a = loc.weighted_mean(p, one);
                    if p > one {
                        let pp = conjugate(p);
                        let rhs = a * loc.avg_w(one).powf(one / p) * loc.avg_w(-(pp / p)).powf(one / pp);
                        push("holder", mean, rhs);
                    } else {
                        push("esssup", mean, a * loc.avg_w(one) * loc.max_inv_w());
                    }
                }
                WeightClass::Apq { p, q } => {
                    let top = loc.product_mean(q);
                    let low = loc.product_mean(p);
                    push("power-mean", low, top);
                    if p > one {
                        let pp = conjugate(p);
                        let dual = loc.avg_w(-pp).powf(one / pp);
                        push("holder", mean, low * dual);
                        push("holder-assembled", mean, top * dual);
                    } else {
                        push("esssup", mean, low * loc.max_inv_w());
                        push("esssup-assembled", mean, top * loc.max_inv_w());
                    }
                }
            }
            let size = size_factor(lat, region, beta);
            let hyp = loc.weighted_mean(class.power(), class.weight_power()) / size;
            let cover = match region {
                Region::Ball(_) => (loc.n() * lat.cell_volume() / region.measure(lat)).max(one),
                Region::Cube(_) => one,
            };
            Row {
                items,
                hyp,
                u: u(rho, lat, region),
                cover,
            }
        })
        .collect();
    let mut items: Vec<CheckItem> = rows.iter().flat_map(|r| r.items.iter().cloned()).collect();
    let cover = rows.iter().map(|r| r.cover).fold(one, T::max);
    for (label, ta, tb) in [("implication", theta1, theta2), ("implication-swapped", theta2, theta1)] {
        let k = rows.iter().map(|r| r.hyp * r.u.powf(tb - ta)).fold(T::zero(), T::max);
        let wc = class.constant(w, rho, tb, family)?.value;
        let norm = oscillation_norm(f, rho, ta, beta, family)?;
        let rhs = cover * k * T::of(wc);
        items.push(CheckItem::new(
            Witness::label(format!("{label} theta={} weight-theta={}", ta.as_f64(), tb.as_f64())),
            norm.as_f64(),
            rhs.as_f64(),
        ));
    }
    let name = match (class, beta) {
        (WeightClass::Ap { .. }, None) => "ap-cubes-converse",
        (WeightClass::Apq { .. }, None) => "apq-cubes-converse",
        (WeightClass::Ap { .. }, Some(_)) => "ap-balls-converse",
        (WeightClass::Apq { .. }, Some(_)) => "apq-balls-converse",
    };
    let mut report = class
        .params(CheckReport::new(name))
        .param("theta1", theta1.as_f64())
        .param("theta2", theta2.as_f64());
    if let Some(b) = beta {
        report = report.param("beta", b.as_f64());
    }
    Ok(report.bounded(items, 1.0, T::check_tol(CHAIN_TOLERANCE)))
}

pub fn thm1_converse_chain<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    theta1: T,
    theta2: T,
    family: &[Region<T>],
) -> Result<CheckReport> {
    converse_chain(f, w, rho, WeightClass::Ap { p }, theta1, theta2, None, family)
}

#[allow(clippy::too_many_arguments)]
pub fn thm2_converse_chain<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta1: T,
    theta2: T,
    family: &[Region<T>],
) -> Result<CheckReport> {
    converse_chain(f, w, rho, WeightClass::Apq { p, q }, theta1, theta2, None, family)
}

/// `(int w^q)^(1/q) <= [w] (1 + r/rho)^theta2 |R|^(1/q - 1/p) (int w^p)^(1/p)`
/// with the family's own characteristic constant, and
/// `(int w^q)^(1/q) >= |R|^(1/q - 1/p) (int w^p)^(1/p)`.
pub fn corollary_bridges<T: Real>(
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta2: T,
    family: &[Region<T>],
) -> Result<CheckReport> {
    let class = WeightClass::Apq { p, q };
    class.validate()?;
    check_inputs(w, w, rho, family)?;
    let wc = T::of(class.constant(w, rho, theta2, family)?.value);
    let lat = w.lattice();
    let cell = lat.cell_volume();
    let one = T::one();
    let items: Vec<CheckItem> = family
        .par_iter()
        .flat_map_iter(|region| {
            let loc = Local::new(w, w, region);
            let vol = loc.n() * cell;
            let lq = (loc.avg_w(q) * vol).powf(one / q);
            let lp = (loc.avg_w(p) * vol).powf(one / p);
            let scale = vol.powf(one / q - one / p);
            let at = Witness::region(region, lat);
            [
                CheckItem::new(
                    Witness::step("upper", at.clone()),
                    lq.as_f64(),
                    (wc * u(rho, lat, region).powf(theta2) * scale * lp).as_f64(),
                ),
                CheckItem::new(Witness::step("lower", at), (scale * lp).as_f64(), lq.as_f64()),
            ]
        })
        .collect();
    Ok(CheckReport::new("weight-bridges")
        .param("p", p.as_f64())
        .param("q", q.as_f64())
        .param("theta2", theta2.as_f64())
        .param("weight_constant", wc.as_f64())
        .bounded(items, 1.0, T::check_tol(CHAIN_TOLERANCE)))
}

/// Rescaled form `|R|^(1/p - 1/q) (int g^q w^q)^(1/q) / (int w^p)^(1/p)`
/// (divided by `|B|^(beta/d)` on balls) against
/// `(1 + r/rho)^((N0+1) theta1 + theta2 [+ eta/q on cubes]) ||f||`.
#[allow(clippy::too_many_arguments)]
pub fn corollary_forward<T: Real>(
    f: &GridField<T>,
    w: &GridField<T>,
    rho: &GridField<T>,
    p: T,
    q: T,
    theta1: T,
    theta2: T,
    beta: Option<T>,
    family: &[Region<T>],
    reg: &WeightRegularityEstimate,
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    let class = WeightClass::Apq { p, q };
    class.validate()?;
    check_inputs(f, w, rho, family)?;
    check_beta(beta, family)?;
    let lat = f.lattice();
    let one = T::one();
    let norm = oscillation_norm(f, rho, theta1, beta, family)?;
    let eta = if beta.is_some() { T::zero() } else { T::of(reg.eta) / q };
    let exponent = (T::of(est.n0) + one) * theta1 + theta2 + eta;
    let items: Vec<CheckItem> = family
        .par_iter()
        .map(|region| {
            let loc = Local::new(f, w, region);
            let vol = loc.n() * lat.cell_volume();
            let gq = loc.product_mean(q) * vol.powf(one / q);
            let wp = (loc.avg_w(p) * vol).powf(one / p);
            let lhs = vol.powf(one / p - one / q) * gq / wp / size_factor(lat, region, beta);
            let rhs = u(rho, lat, region).powf(exponent) * norm;
            CheckItem::new(Witness::region(region, lat), lhs.as_f64(), rhs.as_f64())
        })
        .collect();
    Ok(CheckReport::new("apq-rescaled-forward")
        .param("p", p.as_f64())
        .param("q", q.as_f64())
        .param("theta1", theta1.as_f64())
        .param("theta2", theta2.as_f64())
        .param("exponent", exponent.as_f64())
        .param("seminorm", norm.as_f64())
        .fitted_only(items))
}

/// `count` pairs of distinct cell centers.
pub fn sample_pairs<T: Real>(lat: &Lattice<T>, seed: u64, count: usize) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    if lat.len() < 2 {
        return Err(invalid("need at least two cells"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let a = rng.gen_range(0..lat.len());
            let mut b = rng.gen_range(0..lat.len() - 1);
            if b >= a {
                b += 1;
            }
            (lat.cell_center_linear(a), lat.cell_center_linear(b))
        })
        .collect())
}

fn dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}

/// Fits `|f(x) - f(y)| <= C ||f|| |x-y|^beta (1 + |x-y|/rho(x) + |x-y|/rho(y))^theta`
/// over the pairs, with the Campanato seminorm over `balls`. The params
/// carry the constant of the same bound without the seminorm and the
/// seminorm at exponent `(N0+1) theta`.
pub fn lipschitz_pointwise_check<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    beta: T,
    theta: T,
    pairs: &[(Vec<T>, Vec<T>)],
    balls: &[Region<T>],
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    if !(beta > T::zero() && beta < T::one()) {
        return Err(invalid("beta must lie in (0, 1)"));
    }
    if pairs.is_empty() || balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let d = f.dim();
    if let Some((x, y)) = pairs.iter().find(|(x, y)| x.len() != d || y.len() != d || x == y) {
        return Err(invalid(format!("bad pair {:?} {:?}", x.len(), y.len())));
    }
    let norm = seminorm_value(f, rho, SeminormFamily::Cam, theta, Some(beta), balls)?;
    let converse_norm = seminorm_value(
        f,
        rho,
        SeminormFamily::Cam,
        (T::of(est.n0) + T::one()) * theta,
        Some(beta),
        balls,
    )?;
    let rows: Vec<(CheckItem, T)> = pairs
        .par_iter()
        .map(|(x, y)| {
            let r = dist(x, y);
            let diff = (f.nearest_value(x) - f.nearest_value(y)).abs();
            let shape = r.powf(beta) * (T::one() + r / rho.nearest_value(x) + r / rho.nearest_value(y)).powf(theta);
            (
                CheckItem::new(Witness::pair(x, y), diff.as_f64(), (norm * shape).as_f64()),
                diff / shape,
            )
        })
        .collect();
    let k = rows.iter().map(|r| r.1).fold(T::zero(), T::max);
    Ok(CheckReport::new("pointwise-lipschitz")
        .param("beta", beta.as_f64())
        .param("theta", theta.as_f64())
        .param("seminorm", norm.as_f64())
        .param("converse_constant", k.as_f64())
        .param("converse_seminorm", converse_norm.as_f64())
        .fitted_only(rows.into_iter().map(|r| r.0).collect()))
}

/// `int_window (f - essinf_R f) / (r^(d+gamma) + |x - x0|^(d+gamma))` against
/// `||f|| r^(beta-gamma) (1 + r/rho(x0))^theta`; `beta = None` is the cube
/// statement with `r^-gamma`. The seminorm is taken over `norm_family`.
pub fn tail_integral_check<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    beta: Option<T>,
    theta: T,
    gamma: T,
    family: &[Region<T>],
    norm_family: &[Region<T>],
) -> Result<CheckReport> {
    if !f.same_lattice(rho) {
        return Err(invalid("rho field must share the function's grid"));
    }
    if family.is_empty() || norm_family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    check_beta(beta, family)?;
    check_beta(beta, norm_family)?;
    if !(theta >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    let b = beta.unwrap_or_else(T::zero);
    if !(gamma > b + theta) {
        return Err(invalid(format!("gamma must exceed {}", (b + theta).as_f64())));
    }
    let lat = f.lattice();
    let d = T::of_usize(lat.dim());
    let norm = oscillation_norm(f, rho, theta, beta, norm_family)?;
    let centers: Vec<Vec<T>> = (0..lat.len()).map(|i| lat.cell_center_linear(i)).collect();
    let cell = lat.cell_volume();
    let items: Vec<CheckItem> = family
        .par_iter()
        .map(|region| {
            region.validate(lat)?;
            let m = f.region_min(region);
            let x0 = region.center(lat);
            let r = region.scale(lat);
            let rr = r.powf(d + gamma);
            let lhs = csum(
                centers
                    .iter()
                    .zip(f.values())
                    .map(|(x, &v)| (v - m) / (rr + dist(x, &x0).powf(d + gamma))),
            ) * cell;
            let rhs = norm * r.powf(b - gamma) * u(rho, lat, region).powf(theta);
            Ok(CheckItem::new(Witness::region(region, lat), lhs.as_f64(), rhs.as_f64()))
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport::new(if beta.is_some() {
        "tail-integral-balls"
    } else {
        "tail-integral-cubes"
    })
    .param("theta", theta.as_f64())
    .param("gamma", gamma.as_f64())
    .param("seminorm", norm.as_f64());
    if let Some(b) = beta {
        report = report.param("beta", b.as_f64());
    }
    Ok(report.fitted_only(items))
}

/// Per-resolution reports folded into one with the default drift tolerance.
pub fn refine(stages: Vec<(String, CheckReport)>) -> CheckReport {
    CheckReport::with_refinement(stages, DRIFT_TOLERANCE)
}
