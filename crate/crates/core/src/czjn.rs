//! Generational stopping-time decomposition of a cube and the exponential
//! distribution bounds that follow from it.

use rayon::prelude::*;
use serde::Serialize;

use crate::critical_radius::RhoComparisonEstimate;
use crate::error::{invalid, Error, Result};
use crate::grid::{enumerate_cubes, CubePolicy, CubeSpec, FieldKind, GridField, Region};
use crate::report::{CheckItem, CheckReport, Witness};
use crate::scalar::Real;
use crate::seminorms::{cube_family, region_stats, seminorm_value, SeminormFamily};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CZNode<T> {
    pub id: usize,
    pub cube: CubeSpec,
    pub generation: usize,
    pub parent: Option<usize>,
    /// Mean over the cube of `f - essinf(parent)`; for the root, of `f - essinf(root)`.
    pub mean_osc: T,
    pub essinf: T,
    /// Threshold this node was selected against (the parent's); 0 for the root.
    pub threshold: T,
    /// `sigma (1 + side/rho(center))^theta`, used for this node's children.
    pub own_threshold: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CZTree<T> {
    pub root: CubeSpec,
    pub sigma: T,
    pub theta: T,
    pub max_depth: usize,
    /// Node lists by generation; generation 0 holds the root alone.
    pub generations: Vec<Vec<CZNode<T>>>,
    /// Stopped by `max_depth` with nodes still being selected.
    pub depth_limited: bool,
    /// Some selected node is a single cell.
    pub reached_cells: bool,
}

impl<T: Real> CZTree<T> {
    pub fn nodes(&self) -> impl Iterator<Item = &CZNode<T>> {
        self.generations.iter().flatten()
    }

    /// Number of cells covered by each generation.
    pub fn generation_cells(&self) -> Vec<usize> {
        self.generations
            .iter()
            .map(|g| g.iter().map(|n| n.cube.cell_count()).sum())
            .collect()
    }

    /// Generations after the root that hold at least one node.
    pub fn depth(&self) -> usize {
        self.generations.iter().skip(1).take_while(|g| !g.is_empty()).count()
    }
}

fn threshold<T: Real>(f: &GridField<T>, rho: &GridField<T>, q: &CubeSpec, sigma: T, theta: T) -> T {
    let lat = f.lattice();
    sigma * (T::one() + q.side(lat) / rho.nearest_value(&q.center(lat))).powf(theta)
}

fn check_root<T: Real>(f: &GridField<T>, rho: &GridField<T>, root: &CubeSpec, sigma: T, theta: T) -> Result<()> {
    root.validate(f.lattice())?;
    if !root.is_dyadic_root() {
        return Err(Error::Misaligned(
            "root needs the same power-of-two cell count on every axis".into(),
        ));
    }
    if !f.same_lattice(rho) {
        return Err(invalid("rho field must share the function's grid"));
    }
    if !(sigma > T::one()) {
        return Err(invalid("sigma must exceed 1"));
    }
    if !(theta >= T::zero()) {
        return Err(invalid("theta must be nonnegative"));
    }
    Ok(())
}

/// Seminorm over the dyadic subcubes of `root` (the root included).
pub fn dyadic_blo<T: Real>(f: &GridField<T>, rho: &GridField<T>, theta: T, root: &CubeSpec) -> Result<T> {
    let cubes = enumerate_cubes(f.lattice(), &CubePolicy::Dyadic { root: root.clone() })?;
    seminorm_value(f, rho, SeminormFamily::Blo, theta, None, &cube_family(&cubes))
}

/// `f / ||f||` with the dyadic seminorm on `root`, and the norm. Constant
/// functions come back unchanged with norm 0.
pub fn normalize<T: Real>(
    f: &GridField<T>,
    rho: &GridField<T>,
    theta: T,
    root: &CubeSpec,
) -> Result<(GridField<T>, T)> {
    let norm = dyadic_blo(f, rho, theta, root)?;
    if norm > T::zero() {
        Ok((f.map(FieldKind::Function, |v| v / norm)?, norm))
    } else {
        Ok((f.clone(), norm))
    }
}

/// Maximal dyadic subcubes of `parent` where the mean of `f - essinf(parent)`
/// exceeds the parent's threshold, sorted by position.
fn select<T: Real>(f: &GridField<T>, parent: &CZNode<T>) -> Vec<(CubeSpec, T, T)> {
    let mut out = Vec::new();
    let mut stack: Vec<CubeSpec> = parent.cube.children().unwrap_or_default();
    while let Some(s) = stack.pop() {
        let st = region_stats(f, &Region::Cube(s.clone()));
        let osc = st.mean - parent.essinf;
        if osc > parent.own_threshold {
            out.push((s, osc, st.min));
        } else if let Some(kids) = s.children() {
            stack.extend(kids);
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// One generation of stopping cubes below each parent. Ids are assigned
/// from `next_id` in output order.
pub fn cz_generation<T: Real>(
    f: &GridField<T>,
    parents: &[CZNode<T>],
    sigma: T,
    theta: T,
    rho: &GridField<T>,
    next_id: usize,
) -> Result<Vec<CZNode<T>>> {
    if !(sigma > T::one()) {
        return Err(invalid("sigma must exceed 1"));
    }
    let picked: Vec<Vec<(CubeSpec, T, T)>> = parents.par_iter().map(|p| select(f, p)).collect();
    let mut out = Vec::new();
    for (p, kids) in parents.iter().zip(picked) {
        for (cube, osc, min) in kids {
            let own = threshold(f, rho, &cube, sigma, theta);
            out.push(CZNode {
                id: next_id + out.len(),
                cube,
                generation: p.generation + 1,
                parent: Some(p.id),
                mean_osc: osc,
                essinf: min,
                threshold: p.own_threshold,
                own_threshold: own,
            });
        }
    }
    Ok(out)
}

/// Builds the tree for an `f` already normalized so that its dyadic
/// seminorm on `root` is at most 1.
pub fn cz_decompose<T: Real>(
    f: &GridField<T>,
    root: &CubeSpec,
    sigma: T,
    theta: T,
    rho: &GridField<T>,
    max_depth: usize,
) -> Result<CZTree<T>> {
    check_root(f, rho, root, sigma, theta)?;
    let norm = dyadic_blo(f, rho, theta, root)?;
    if norm > T::one() + T::of(T::check_tol(1e-12)) {
        return Err(Error::EntryCondition(format!(
            "dyadic seminorm on the root is {}, normalize f first",
            norm.as_f64()
        )));
    }
    let st = region_stats(f, &Region::Cube(root.clone()));
    let root_node = CZNode {
        id: 0,
        cube: root.clone(),
        generation: 0,
        parent: None,
        mean_osc: st.excess,
        essinf: st.min,
        threshold: T::zero(),
        own_threshold: threshold(f, rho, root, sigma, theta),
    };
    let mut generations = vec![vec![root_node]];
    let mut next_id = 1;
    let mut depth_limited = false;
    loop {
        let last = generations.last().unwrap();
        if last.is_empty() {
            break;
        }
        let gen = cz_generation(f, last, sigma, theta, rho, next_id)?;
        if generations.len() > max_depth {
            depth_limited = !gen.is_empty();
            break;
        }
        next_id += gen.len();
        generations.push(gen);
    }
    while generations.len() > 1 && generations.last().unwrap().is_empty() {
        generations.pop();
    }
    let reached_cells = generations.iter().skip(1).flatten().any(|n| n.cube.cell_count() == 1);
    let tree = CZTree {
        root: root.clone(),
        sigma,
        theta,
        max_depth,
        generations,
        depth_limited,
        reached_cells,
    };
    let check = cz_verify_properties(&tree, f, rho)?;
    if !check.passed {
        return Err(Error::EntryCondition(format!(
            "stopping-time properties failed: {:?}",
            check.witness
        )));
    }
    Ok(tree)
}

fn flag(ok: bool) -> (f64, f64) {
    if ok {
        (0.0, 0.0)
    } else {
        (1.0, 0.0)
    }
}

/// Re-derives every property of the tree from `f` and `rho`:
/// containment and disjointness, the two-sided threshold bound, the
/// essinf increments, the per-generation measure decay, and the cell-wise
/// bound outside the children.
pub fn cz_verify_properties<T: Real>(tree: &CZTree<T>, f: &GridField<T>, rho: &GridField<T>) -> Result<CheckReport> {
    let lat = f.lattice();
    let d = lat.dim();
    let two_d = T::of((1u64 << d) as f64);
    let tol = T::check_tol(1e-12);
    let mut items: Vec<CheckItem> = Vec::new();
    let mut push = |label: String, lhs: f64, rhs: f64| items.push(CheckItem::new(Witness::label(label), lhs, rhs));

    let all: Vec<&CZNode<T>> = tree.nodes().collect();
    let by_id = |id: usize| all.iter().find(|n| n.id == id).copied();

    for (k, gen) in tree.generations.iter().enumerate() {
        for n in gen {
            let tag = format!("k={k} lo={:?} cells={:?}", n.cube.lo, n.cube.cells);
            let stats = region_stats(f, &Region::Cube(n.cube.clone()));
            if n.cube.validate(lat).is_err() {
                let (l, r) = flag(false);
                push(format!("valid {tag}"), l, r);
                continue;
            }
            let own = threshold(f, rho, &n.cube, tree.sigma, tree.theta);
            let (l, r) = flag(own == n.own_threshold && stats.min == n.essinf);
            push(format!("recorded stats {tag}"), l, r);
            if k == 0 {
                let (l, r) = flag(n.cube == tree.root && n.parent.is_none());
                push("root".into(), l, r);
                continue;
            }
            let parent = n.parent.and_then(by_id);
            let Some(p) = parent else {
                let (l, r) = flag(false);
                push(format!("(A) parent missing {tag}"), l, r);
                continue;
            };
            // (A) strict containment in a node of the previous generation
            let (l, r) = flag(p.generation + 1 == k && p.cube.contains(&n.cube) && p.cube != n.cube);
            push(format!("(A) containment {tag}"), l, r);
            // (B) threshold < mean oscillation <= 2^d threshold
            let osc = stats.mean - p.essinf;
            let (l, r) = flag(osc > p.own_threshold && n.threshold == p.own_threshold);
            push(format!("(B) lower {tag}"), l, r);
            push(
                format!("(B) upper {tag}"),
                osc.as_f64(),
                (two_d * p.own_threshold).as_f64(),
            );
            // (C) 0 <= essinf increment <= 2^d threshold
            let (l, r) = flag(stats.min >= p.essinf);
            push(format!("(C) lower {tag}"), l, r);
            push(
                format!("(C) upper {tag}"),
                (stats.min - p.essinf).as_f64(),
                (two_d * p.own_threshold).as_f64(),
            );
        }
        // (A) pairwise disjoint within the generation
        let mut disjoint = true;
        for (i, a) in gen.iter().enumerate() {
            for b in &gen[i + 1..] {
                disjoint &= !a.cube.intersects(&b.cube);
            }
        }
        let (l, r) = flag(disjoint);
        push(format!("(A) disjoint k={k}"), l, r);
    }

    // (D) per-generation measure decay, and against the root
    let cells = tree.generation_cells();
    let sigma = tree.sigma.as_f64();
    for k in 1..cells.len() {
        push(format!("(D) k={k}"), cells[k] as f64, cells[k - 1] as f64 / sigma);
        push(
            format!("decay k={k}"),
            cells[k] as f64,
            cells[0] as f64 / sigma.powi(k as i32),
        );
    }

    // (E) outside its children, f - essinf(node) <= node threshold
    let rows: Vec<(String, f64, f64)> = all
        .par_iter()
        .map(|n| {
            let kids: Vec<&CubeSpec> = all.iter().filter(|c| c.parent == Some(n.id)).map(|c| &c.cube).collect();
            let mut worst = T::neg_infinity();
            Region::Cube(n.cube.clone()).for_each_run(lat, |start, len| {
                for lin in start..start + len {
                    let idx = lat.unravel(lin);
                    if !kids.iter().any(|c| c.contains_cell(&idx)) {
                        worst = worst.max(f.values()[lin] - n.essinf);
                    }
                }
            });
            let lhs = if worst.is_finite() { worst.as_f64() } else { 0.0 };
            (
                format!("(E) k={} lo={:?}", n.generation, n.cube.lo),
                lhs.max(0.0),
                n.own_threshold.as_f64(),
            )
        })
        .collect();
    for (label, l, r) in rows {
        push(label, l, r);
    }

    Ok(CheckReport::new("cz-properties")
        .param("sigma", tree.sigma.as_f64())
        .param("theta", tree.theta.as_f64())
        .param("generations", (tree.generations.len() - 1) as f64)
        .bounded(items, 1.0, tol))
}

/// Cells where `f - essinf_Q f` exceeds `C0^theta k sigma 2^d (1+r/rho0)^((N0+1) theta)`
/// must lie in generation `k`, for every `k` up to one past the depth.
pub fn cz_inclusion_check<T: Real>(
    tree: &CZTree<T>,
    f: &GridField<T>,
    rho: &GridField<T>,
    est: &RhoComparisonEstimate,
) -> Result<CheckReport> {
    let lat = f.lattice();
    let root = &tree.root;
    let d = lat.dim();
    let u0 = T::one() + root.side(lat) / rho.nearest_value(&root.center(lat));
    let c0 = T::of(est.c0);
    let n0 = T::of(est.n0);
    let base = c0.powf(tree.theta) * tree.sigma * T::of((1u64 << d) as f64) * u0.powf((n0 + T::one()) * tree.theta);
    let m = tree.generations[0][0].essinf;
    let cells = Region::<T>::Cube(root.clone()).cells(lat);
    let mut items = Vec::new();
    for k in 1..=tree.generations.len() {
        let level = T::of_usize(k) * base;
        let gen: &[CZNode<T>] = tree.generations.get(k).map(|g| g.as_slice()).unwrap_or(&[]);
        let stray = cells
            .iter()
            .filter(|&&c| {
                f.values()[c] - m > level && {
                    let idx = lat.unravel(c);
                    !gen.iter().any(|n| n.cube.contains_cell(&idx))
                }
            })
            .count();
        items.push(CheckItem::new(Witness::Generation { k }, stray as f64, 0.0));
    }
    Ok(CheckReport::new("cz-inclusion")
        .param("c0", est.c0)
        .param("n0", est.n0)
        .param("level", base.as_f64())
        .bounded(items, 0.0, 0.0))
}

/// Empirical distribution of `f - essinf_Q f` against the exponential bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JNReport {
    pub lambdas: Vec<f64>,
    pub empirical: Vec<f64>,
    pub bound: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c0: f64,
    pub n0: f64,
    pub theta: f64,
    pub norm: f64,
    pub violations: usize,
    pub worst_ratio: f64,
    pub passed: bool,
}

impl JNReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,empirical,bound\n");
        for i in 0..self.lambdas.len() {
            s.push_str(&format!(
                "{:?},{:?},{:?}\n",
                self.lambdas[i], self.empirical[i], self.bound[i]
            ));
        }
        s
    }
}

/// `count` evenly spaced values on `[0, span]`.
pub fn lambda_grid(span: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| span * i as f64 / (count - 1) as f64).collect(),
    }
}

/// `C1 = e` and `C2 = 1/(C0^theta 2^d e)`.
pub fn jn_constants<T: Real>(c0: T, theta: T, d: usize) -> (T, T) {
    let e = T::E();
    (e, T::one() / (c0.powf(theta) * T::of((1u64 << d) as f64) * e))
}

pub fn jn_tail_verify<T: Real>(
    f: &GridField<T>,
    root: &CubeSpec,
    theta: T,
    rho: &GridField<T>,
    est: &RhoComparisonEstimate,
    lambdas: &[T],
) -> Result<JNReport> {
    check_root(f, rho, root, T::E(), theta)?;
    let lat = f.lattice();
    let norm = dyadic_blo(f, rho, theta, root)?;
    let (c1, c2) = jn_constants(T::of(est.c0), theta, lat.dim());
    let u0 = T::one() + root.side(lat) / rho.nearest_value(&root.center(lat));
    let decay = u0.powf(-(T::of(est.n0) + T::one()) * theta);
    let vol = root.volume(lat);
    let cells = Region::<T>::Cube(root.clone()).cells(lat);
    let m = cells.iter().map(|&c| f.values()[c]).fold(T::infinity(), T::min);
    let cell_vol = lat.cell_volume();
    let tol = T::check_tol(1e-12);
    let mut empirical = Vec::with_capacity(lambdas.len());
    let mut bound = Vec::with_capacity(lambdas.len());
    let mut violations = 0;
    let mut worst = 0.0f64;
    for &lam in lambdas {
        let count = cells.iter().filter(|&&c| f.values()[c] - m > lam).count();
        let emp = T::of_usize(count) * cell_vol;
        let b = if norm > T::zero() {
            c1 * vol * (-(decay * c2 * lam / norm)).exp()
        } else {
            c1 * vol
        };
        let r = crate::report::ratio(emp.as_f64(), b.as_f64());
        if !(r <= 1.0 + tol) {
            violations += 1;
        }
        worst = worst.max(r);
        empirical.push(emp.as_f64());
        bound.push(b.as_f64());
    }
    Ok(JNReport {
        lambdas: lambdas.iter().map(|l| l.as_f64()).collect(),
        empirical,
        bound,
        c1: c1.as_f64(),
        c2: c2.as_f64(),
        c0: est.c0,
        n0: est.n0,
        theta: theta.as_f64(),
        norm: norm.as_f64(),
        violations,
        worst_ratio: worst,
        passed: violations == 0,
    })
}

/// `int_Q exp(u^-(N0+1)theta (gamma/||f||)(f - essinf f)) <= C |Q|` with
/// `C = C1/(1 - gamma/C2) + 1`.
pub fn exp_integrability_check<T: Real>(
    f: &GridField<T>,
    root: &CubeSpec,
    theta: T,
    rho: &GridField<T>,
    est: &RhoComparisonEstimate,
    gamma: T,
) -> Result<CheckReport> {
    check_root(f, rho, root, T::E(), theta)?;
    let lat = f.lattice();
    let (c1, c2) = jn_constants(T::of(est.c0), theta, lat.dim());
    if !(gamma > T::zero() && gamma < c2) {
        return Err(invalid(format!("gamma must lie in (0, {})", c2.as_f64())));
    }
    let norm = dyadic_blo(f, rho, theta, root)?;
    let u0 = T::one() + root.side(lat) / rho.nearest_value(&root.center(lat));
    let theta_star = (T::of(est.n0) + T::one()) * theta;
    let scale = if norm > T::zero() {
        u0.powf(-theta_star) * gamma / norm
    } else {
        T::zero()
    };
    let region = Region::Cube(root.clone());
    let m = f.region_min(&region);
    let (integral, vol) = f.region_integral(&region, |v| (scale * (v - m)).exp());
    let c = c1 / (T::one() - gamma / c2) + T::one();
    let item = CheckItem::new(Witness::cube(root, lat), integral.as_f64(), vol.as_f64());
    Ok(CheckReport::new("exp-integrability")
        .param("gamma", gamma.as_f64())
        .param("c2", c2.as_f64())
        .param("theta_star", theta_star.as_f64())
        .param("norm", norm.as_f64())
        .bounded(vec![item], c.as_f64(), T::check_tol(1e-12)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBox;

    fn setup(n: usize, vals: impl Fn(usize) -> f64) -> (GridField<f64>, GridField<f64>, CubeSpec) {
        let bx = GridBox::symmetric(3, 1.0).unwrap();
        let f = GridField::new(&bx, vec![n; 3], (0..n * n * n).map(vals).collect(), FieldKind::Function).unwrap();
        let rho = f.map(FieldKind::Rho, |_| 1.0).unwrap();
        let root = CubeSpec::whole(f.lattice()).unwrap();
        (f, rho, root)
    }

    fn unit_est() -> RhoComparisonEstimate {
        RhoComparisonEstimate {
            n0: 1.0,
            c0: 1.0,
            pair_count: 0,
            worst_pair: None,
            candidates: vec![(1.0, 1.0)],
        }
    }

    #[test]
    fn constant_function_selects_nothing() {
        let (f, rho, root) = setup(8, |_| 2.0);
        let tree = cz_decompose(&f, &root, std::f64::consts::E, 0.0, &rho, 10).unwrap();
        assert_eq!(tree.generations.len(), 1);
        let jn = jn_tail_verify(&f, &root, 0.0, &rho, &unit_est(), &lambda_grid(1.0, 8)).unwrap();
        assert!(jn.passed && jn.empirical.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn spike_selects_its_ancestors_chain() {
        let spike = 3 * 64 + 5 * 8 + 6;
        let (f, rho, root) = setup(8, |i| if i == spike { 1.0 } else { 0.0 });
        let (g, norm) = normalize(&f, &rho, 0.0, &root).unwrap();
        // the single cell is a dyadic cube with oscillation 0; the worst is the
        // 2x2x2 block around the spike: 1/8
        assert_eq!(norm, 0.125);
        let e = std::f64::consts::E;
        let tree = cz_decompose(&g, &root, e, 0.0, &rho, 10).unwrap();
        // brute force: first generation = maximal dyadic subcubes of mean > e
        let idx = f.lattice().unravel(spike);
        assert_eq!(tree.generations[1].len(), 1);
        let sel = &tree.generations[1][0];
        assert!(sel.cube.contains_cell(&idx));
        // means of the ancestors: 8/512, 8/64, 8/8 -> only the 2^3 block (1) and the cell (8) exceed e
        assert_eq!(sel.cube.cells, vec![1, 1, 1]);
        assert!(tree.reached_cells);
        assert!(cz_verify_properties(&tree, &g, &rho).unwrap().passed);
    }

    #[test]
    fn entry_condition_is_enforced() {
        let (f, rho, root) = setup(4, |i| (i % 7) as f64);
        assert!(matches!(
            cz_decompose(&f, &root, std::f64::consts::E, 0.0, &rho, 5),
            Err(Error::EntryCondition(_))
        ));
        let (g, _) = normalize(&f, &rho, 0.0, &root).unwrap();
        assert!(cz_decompose(&g, &root, 1.0, 0.0, &rho, 5).is_err());
        assert!(cz_decompose(&g, &root, 2.0, 0.0, &rho, 5).is_ok());
    }

    #[test]
    fn corrupted_tree_fails() {
        let spike = 100;
        let (f, rho, root) = setup(8, |i| if i == spike { 1.0 } else { 0.0 });
        let (g, _) = normalize(&f, &rho, 0.0, &root).unwrap();
        let mut tree = cz_decompose(&g, &root, std::f64::consts::E, 0.0, &rho, 10).unwrap();
        let node = &mut tree.generations[1][0];
        node.cube = root.clone();
        assert!(!cz_verify_properties(&tree, &g, &rho).unwrap().passed);
    }

    #[test]
    fn gamma_range() {
        let (f, rho, root) = setup(4, |i| (i % 3) as f64);
        let est = unit_est();
        let (_, c2) = jn_constants(1.0, 0.0, 3);
        assert!(exp_integrability_check(&f, &root, 0.0, &rho, &est, c2).is_err());
        let r = exp_integrability_check(&f, &root, 0.0, &rho, &est, 0.999 * c2).unwrap();
        assert!(r.passed);
        let (c, _, _) = setup(4, |_| 1.0);
        let r = exp_integrability_check(&c, &root, 0.0, &rho, &est, 0.5 * c2).unwrap();
        assert_eq!(r.items[0].lhs, r.items[0].rhs);
    }
}
