//! BMO, BLO and Campanato-type seminorms weighted by `(1 + r/rho(x0))^-theta`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{BallSpec, CubeSpec, GridField, Lattice, Region};
use crate::report::{CheckItem, CheckReport, Witness};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeminormFamily {
    Bmo,
    Blo,
    Cam,
    CamStar,
}

impl SeminormFamily {
    pub fn is_campanato(self) -> bool {
        matches!(self, SeminormFamily::Cam | SeminormFamily::CamStar)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeminormFamily::Bmo => "bmo",
            SeminormFamily::Blo => "blo",
            SeminormFamily::Cam => "cam",
            SeminormFamily::CamStar => "cam-star",
        }
    }
}

impl std::str::FromStr for SeminormFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bmo" => Ok(Self::Bmo),
            "blo" => Ok(Self::Blo),
            "cam" => Ok(Self::Cam),
            "cam-star" | "cam_star" | "camstar" => Ok(Self::CamStar),
            other => Err(invalid(format!("unknown seminorm family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SeminormSpec<'a, T> {
    pub family: SeminormFamily,
    pub theta: T,
    pub beta: Option<T>,
    pub rho: &'a GridField<T>,
}

impl<'a, T: Real> SeminormSpec<'a, T> {
    pub fn new(family: SeminormFamily, theta: T, beta: Option<T>, rho: &'a GridField<T>) -> Result<Self> {
        let s = Self {
            family,
            theta,
            beta,
            rho,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta >= T::zero()) {
            return Err(invalid("theta must be nonnegative"));
        }
        match (self.family.is_campanato(), self.beta) {
            (true, None) => Err(invalid("Campanato seminorms need beta")),
            (true, Some(b)) if !(b > T::zero() && b <= T::one()) => Err(invalid("beta must lie in (0, 1]")),
            (false, Some(_)) => Err(invalid("beta only applies to Campanato seminorms")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeminormReport<T> {
    pub value: T,
    pub witness: Option<Region<T>>,
    /// Weighted, normalized oscillation per family item, in family order.
    pub items: Vec<T>,
}

/// `(1 + r/rho0)^-theta`.
#[inline]
pub fn decay<T: Real>(r: T, rho0: T, theta: T) -> T {
    (T::one() + r / rho0).powf(-theta)
}

/// Covered-cell statistics of a region. The two oscillations are summed
/// from `f - min`, so they keep their own precision when `f` is large.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionStats<T> {
    pub mean: T,
    pub min: T,
    /// Mean of `f - min`.
    pub excess: T,
    /// Mean of `|f - mean|`.
    pub mean_dev: T,
    pub covered: T,
}

pub fn region_stats<T: Real>(f: &GridField<T>, region: &Region<T>) -> RegionStats<T> {
    let lat = f.lattice();
    let vals = f.values();
    let mut sum = T::zero();
    let mut min = T::infinity();
    let mut n = 0usize;
    region.for_each_run(lat, |s, len| {
        for &v in &vals[s..s + len] {
            sum = sum + v;
            min = min.min(v);
        }
        n += len;
    });
    let count = T::of_usize(n);
    let mut excess = T::zero();
    region.for_each_run(lat, |s, len| {
        for &v in &vals[s..s + len] {
            excess = excess + (v - min);
        }
    });
    let excess = excess / count;
    let mut dev = T::zero();
    region.for_each_run(lat, |s, len| {
        for &v in &vals[s..s + len] {
            dev = dev + (v - min - excess).abs();
        }
    });
    RegionStats {
        mean: sum / count,
        min,
        excess,
        mean_dev: dev / count,
        covered: count * lat.cell_volume(),
    }
}

/// `mean_Q f - min_Q f`.
pub fn blo_oscillation<T: Real>(f: &GridField<T>, q: &CubeSpec) -> Result<T> {
    q.validate(f.lattice())?;
    Ok(region_stats(f, &Region::Cube(q.clone())).excess)
}

/// `mean_Q |f - f_Q|`.
pub fn bmo_oscillation<T: Real>(f: &GridField<T>, q: &CubeSpec) -> Result<T> {
    q.validate(f.lattice())?;
    Ok(region_stats(f, &Region::Cube(q.clone())).mean_dev)
}

/// Unweighted normalized oscillation of one family member.
pub fn normalized_oscillation<T: Real>(
    family: SeminormFamily,
    beta: Option<T>,
    lat: &Lattice<T>,
    region: &Region<T>,
    s: &RegionStats<T>,
) -> T {
    let lower = s.excess;
    match family {
        SeminormFamily::Blo => lower,
        SeminormFamily::Bmo => s.mean_dev,
        SeminormFamily::Cam | SeminormFamily::CamStar => {
            let d = T::of_usize(lat.dim());
            let beta = beta.expect("validated");
            let norm = region.measure(lat).powf(T::one() + beta / d);
            let osc = if family == SeminormFamily::Cam {
                s.mean_dev
            } else {
                lower
            };
            s.covered * osc / norm
        }
    }
}

fn check_geometry<T: Real>(family: SeminormFamily, items: &[Region<T>], f: &GridField<T>) -> Result<()> {
    if items.is_empty() {
        return Err(Error::EmptyFamily);
    }
    for r in items {
        r.validate(f.lattice())?;
        if r.is_ball() != family.is_campanato() {
            return Err(invalid(format!(
                "{} seminorm is taken over {}",
                family.as_str(),
                if family.is_campanato() { "balls" } else { "cubes" }
            )));
        }
    }
    Ok(())
}

/// Largest weighted, normalized oscillation over a finite family.
pub fn seminorm<T: Real>(f: &GridField<T>, spec: &SeminormSpec<T>, family: &[Region<T>]) -> Result<SeminormReport<T>> {
    spec.validate()?;
    check_geometry(spec.family, family, f)?;
    if !f.same_lattice(spec.rho) {
        return Err(invalid("rho field must share the function's grid"));
    }
    let lat = f.lattice();
    let items: Vec<T> = family
        .par_iter()
        .map(|region| {
            let s = region_stats(f, region);
            let osc = normalized_oscillation(spec.family, spec.beta, lat, region, &s);
            let rho0 = spec.rho.nearest_value(&region.center(lat));
            decay(region.scale(lat), rho0, spec.theta) * osc
        })
        .collect();
    let (mut value, mut at) = (T::zero(), None);
    for (i, &v) in items.iter().enumerate() {
        if at.is_none() || v > value {
            value = v;
            at = Some(i);
        }
    }
    Ok(SeminormReport {
        value,
        witness: at.map(|i| family[i].clone()),
        items,
    })
}

pub fn cube_family<T>(cubes: &[CubeSpec]) -> Vec<Region<T>> {
    cubes.iter().cloned().map(Region::Cube).collect()
}

pub fn ball_family<T: Clone>(balls: &[BallSpec<T>]) -> Vec<Region<T>> {
    balls.iter().cloned().map(Region::Ball).collect()
}

/// Convenience for the seminorm as a plain number.
pub fn seminorm_value<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    family: SeminormFamily,
    theta: T,
    beta: Option<T>,
    regions: &[Region<T>],
) -> Result<T> {
    Ok(seminorm(f, &SeminormSpec::new(family, theta, beta, rho)?, regions)?.value)
}

/// The order relations between the seminorms on common families:
/// `BMO <= 2 BLO` per cube, `CAM <= 2 CAM*` per ball, and every seminorm
/// nonincreasing along the (sorted) theta list, which always gains a
/// leading zero.
pub fn relation_checks<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    thetas: &[T],
    beta: T,
    cubes: &[CubeSpec],
    balls: &[BallSpec<T>],
) -> Result<CheckReport> {
    if cubes.is_empty() || balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if !f.same_lattice(rho) {
        return Err(invalid("rho field must share the function's grid"));
    }
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(invalid("beta must lie in (0, 1]"));
    }
    let mut th: Vec<T> = thetas.to_vec();
    if th.iter().any(|t| !(*t >= T::zero())) {
        return Err(invalid("theta must be nonnegative"));
    }
    th.push(T::zero());
    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
    th.dedup();

    let lat = f.lattice();
    let cube_regions = cube_family(cubes);
    let ball_regions = ball_family(balls);
    let raw = |regions: &[Region<T>]| -> Vec<(RegionStats<T>, T, T)> {
        regions
            .par_iter()
            .map(|r| {
                let s = region_stats(f, r);
                (s, r.scale(lat), rho.nearest_value(&r.center(lat)))
            })
            .collect()
    };
    let cube_raw = raw(&cube_regions);
    let ball_raw = raw(&ball_regions);

    let mut items = Vec::new();
    for (r, (s, _, _)) in cube_regions.iter().zip(&cube_raw) {
        let blo = normalized_oscillation(SeminormFamily::Blo, None, lat, r, s);
        let bmo = normalized_oscillation(SeminormFamily::Bmo, None, lat, r, s);
        items.push(CheckItem::new(
            Witness::region(r, lat),
            bmo.as_f64(),
            (blo + blo).as_f64(),
        ));
    }
    for (r, (s, _, _)) in ball_regions.iter().zip(&ball_raw) {
        let star = normalized_oscillation(SeminormFamily::CamStar, Some(beta), lat, r, s);
        let cam = normalized_oscillation(SeminormFamily::Cam, Some(beta), lat, r, s);
        items.push(CheckItem::new(
            Witness::region(r, lat),
            cam.as_f64(),
            (star + star).as_f64(),
        ));
    }

    let value = |family: SeminormFamily, theta: T| -> T {
        let (regions, raws, b) = if family.is_campanato() {
            (&ball_regions, &ball_raw, Some(beta))
        } else {
            (&cube_regions, &cube_raw, None)
        };
        regions
            .iter()
            .zip(raws.iter())
            .map(|(r, (s, scale, rho0))| decay(*scale, *rho0, theta) * normalized_oscillation(family, b, lat, r, s))
            .fold(T::zero(), T::max)
    };
    let families = [
        SeminormFamily::Bmo,
        SeminormFamily::Blo,
        SeminormFamily::Cam,
        SeminormFamily::CamStar,
    ];
    let mut report = CheckReport::new("seminorm-relations").param("beta", beta.as_f64());
    for (i, t) in th.iter().enumerate() {
        report.set_param(&format!("theta[{i}]"), t.as_f64());
    }
    for &t in &th {
        let bmo = value(SeminormFamily::Bmo, t);
        let blo = value(SeminormFamily::Blo, t);
        let cam = value(SeminormFamily::Cam, t);
        let star = value(SeminormFamily::CamStar, t);
        let tag = t.as_f64();
        items.push(CheckItem::new(
            Witness::label(format!("bmo<=2blo theta={tag}")),
            bmo.as_f64(),
            (blo + blo).as_f64(),
        ));
        items.push(CheckItem::new(
            Witness::label(format!("cam<=2cam* theta={tag}")),
            cam.as_f64(),
            (star + star).as_f64(),
        ));
    }
    for fam in families {
        for w in th.windows(2) {
            items.push(CheckItem::new(
                Witness::label(format!("{} theta {} -> {}", fam.as_str(), w[0].as_f64(), w[1].as_f64())),
                value(fam, w[1]).as_f64(),
                value(fam, w[0]).as_f64(),
            ));
        }
    }
    Ok(report.bounded(items, 1.0, T::check_tol(1e-12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{enumerate_cubes, CubePolicy, FieldKind, GridBox};

    fn setup(vals: Vec<f64>) -> (GridField<f64>, GridField<f64>) {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let n = (vals.len() as f64).cbrt().round() as usize;
        let f = GridField::new(&bx, vec![n; 3], vals, FieldKind::Function).unwrap();
        let rho = f.map(FieldKind::Rho, |_| 0.5).unwrap();
        (f, rho)
    }

    #[test]
    fn half_indicator_and_plus_minus_one() {
        let (f, _) = setup((0..8).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect());
        let q = CubeSpec::whole(f.lattice()).unwrap();
        assert_eq!(blo_oscillation(&f, &q).unwrap(), 0.5);
        let (g, _) = setup((0..8).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect());
        assert_eq!(bmo_oscillation(&g, &q).unwrap(), 1.0);
        let shifted = f.map(FieldKind::Function, |v| v + 3.0).unwrap();
        assert_eq!(blo_oscillation(&shifted, &q).unwrap(), 0.5);
    }

    #[test]
    fn octant_indicator_blo_matches_brute_force() {
        // f = 1 on one octant of a 4^3 root
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let f = GridField::from_fn(&bx, vec![4; 3], FieldKind::Function, |x: &[f64]| {
            if x.iter().all(|&v| v < 0.0) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let rho = f.map(FieldKind::Rho, |_| 1.0).unwrap();
        let root = CubeSpec::whole(f.lattice()).unwrap();
        let cubes = enumerate_cubes(f.lattice(), &CubePolicy::Dyadic { root }).unwrap();
        let fam = cube_family(&cubes);
        let got = seminorm_value(&f, &rho, SeminormFamily::Blo, 0.0, None, &fam).unwrap();
        let brute = cubes
            .iter()
            .map(|q| {
                let cells = Region::<f64>::Cube(q.clone()).cells(f.lattice());
                let vals: Vec<f64> = cells.iter().map(|&c| f.values()[c]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                mean - vals.iter().cloned().fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert_eq!(got, brute);
        // the root: mean 1/8, min 0; every child is constant
        assert_eq!(got, 0.125);
        let weighted = seminorm_value(&f, &rho, SeminormFamily::Blo, 1.0, None, &fam).unwrap();
        assert!(weighted <= got);
    }

    #[test]
    fn geometry_and_beta_are_enforced() {
        let (f, rho) = setup(vec![0.0; 8]);
        let q = CubeSpec::whole(f.lattice()).unwrap();
        let b = BallSpec::new(vec![0.0; 3], 0.5).unwrap();
        assert!(SeminormSpec::new(SeminormFamily::Cam, 0.0, None, &rho).is_err());
        assert!(SeminormSpec::new(SeminormFamily::Blo, 0.0, Some(0.5), &rho).is_err());
        let spec = SeminormSpec::new(SeminormFamily::Blo, 0.0, None, &rho).unwrap();
        assert!(seminorm(&f, &spec, &[Region::Ball(b)]).is_err());
        assert!(seminorm(&f, &spec, &[]).is_err());
        assert_eq!(seminorm(&f, &spec, &[Region::Cube(q)]).unwrap().value, 0.0);
    }

    #[test]
    fn spike_relations_hold_strictly() {
        let mut vals = vec![0.0; 64];
        vals[21] = 5.0;
        let (f, rho) = setup(vals);
        let root = CubeSpec::whole(f.lattice()).unwrap();
        let cubes = enumerate_cubes(f.lattice(), &CubePolicy::Dyadic { root: root.clone() }).unwrap();
        let balls = vec![BallSpec::new(vec![0.0; 3], 0.6).unwrap()];
        let r = relation_checks(&f, &rho, &[0.5, 1.0], 0.5, &cubes, &balls).unwrap();
        assert!(r.passed, "{:?}", r.witness);
        let bmo = bmo_oscillation(&f, &root).unwrap();
        let blo = blo_oscillation(&f, &root).unwrap();
        assert!(bmo < 2.0 * blo);
    }
}
