//! One function per subcommand.

use anyhow::{anyhow, bail, Context, Result};
use rhoblo::critical_radius::{
    compute_rho_field, estimate_rho_comparison, verify_rho_comparison, Potential, RadiusGrid, RhoComparisonEstimate,
    RhoFlag, RhoSamples,
};
use rhoblo::czjn::{
    cz_decompose, cz_inclusion_check, cz_verify_properties, dyadic_blo, exp_integrability_check, jn_constants,
    jn_tail_verify, lambda_grid, normalize,
};
use rhoblo::grid::{
    enumerate_balls, enumerate_cubes, BallPolicy, BallSpec, CubePolicy, CubeSpec, FieldKind, GridBox, GridField, Region,
};
use rhoblo::report::CheckReport;
use rhoblo::seminorms::{ball_family, cube_family, seminorm, SeminormFamily, SeminormSpec};
use rhoblo::theorems::{
    converse_chain, corollary_bridges, corollary_forward, lipschitz_pointwise_check, sample_pairs, tail_integral_check,
    thm1_converse_chain, thm1_forward, thm2_converse_chain, thm2_forward, thm3_forward, thm4_forward, WeightClass,
};
use rhoblo::weights::{ap_constant, apq_constant, measure_comparison_check, weight_reverse_holder, SubsetGenerator};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::source::{load, read_any, same_grid, Loaded};
use crate::{Command, Output, Theorem};

const N0_CANDIDATES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
const EPS_CANDIDATES: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

pub fn dispatch(cmd: Command, cfg: &ExperimentConfig) -> Result<Output> {
    match cmd {
        Command::Rho => rho(cfg),
        Command::Seminorm => seminorm_cmd(cfg),
        Command::Weight => weight(cfg),
        Command::Cz => cz(cfg),
        Command::Jn => jn(cfg),
        Command::Check { theorem } => check(cfg, theorem),
        Command::Generate => generate(cfg),
    }
}

fn grid(cfg: &ExperimentConfig) -> Result<(GridBox<f64>, Vec<usize>)> {
    let d = cfg.usize_or("d", 3)?;
    let n = cfg.usize_or("grid", 16)?;
    let a = cfg.f64_or("window", 1.0)?;
    if n == 0 || !(a > 0.0) {
        bail!("need grid >= 1 and window > 0");
    }
    Ok((GridBox::symmetric(d, a)?, vec![n; d]))
}

fn load_key(cfg: &ExperimentConfig, key: &str, default: &str) -> Result<Loaded> {
    let (bx, counts) = grid(cfg)?;
    load(&cfg.str_or(key, default), &bx, &counts).with_context(|| format!("source `{key}`"))
}

/// Same source, generated on the grid of `like`.
fn load_like(cfg: &ExperimentConfig, key: &str, default: &str, like: &GridField<f64>) -> Result<GridField<f64>> {
    let lat = like.lattice();
    let f = load(&cfg.str_or(key, default), &lat.bounding_box(), lat.counts())
        .with_context(|| format!("source `{key}`"))?
        .field;
    same_grid(like, &f, key)?;
    Ok(f)
}

fn function(cfg: &ExperimentConfig) -> Result<GridField<f64>> {
    let f = load_key(cfg, "f", "coordinate-power:beta=0.5")?.field;
    if f.kind() != FieldKind::Function {
        return f.map(FieldKind::Function, |v| v).map_err(Into::into);
    }
    Ok(f)
}

fn weight_field(cfg: &ExperimentConfig, like: &GridField<f64>) -> Result<GridField<f64>> {
    let w = load_like(cfg, "w", "weight-power:gamma=1", like)?;
    Ok(w.map(FieldKind::Weight, |v| v)?)
}

/// The critical radius: read from `rho`, or computed from the potential `v`.
fn rho_for(cfg: &ExperimentConfig, like: &GridField<f64>) -> Result<GridField<f64>> {
    if let Some(path) = cfg.str_opt("rho") {
        let r = read_any(path.as_ref())?;
        same_grid(like, &r, "rho")?;
        return Ok(r);
    }
    let v = load_like(cfg, "v", "potential-one", like)?.map(FieldKind::Potential, |x| x)?;
    let pot = Potential::with_defaults(v)?;
    let grid = RadiusGrid::for_lattice(pot.field().lattice());
    Ok(compute_rho_field(&pot, &grid)?.field)
}

fn dyadic(f: &GridField<f64>) -> Result<Vec<CubeSpec>> {
    let root = CubeSpec::whole(f.lattice())?;
    Ok(enumerate_cubes(f.lattice(), &CubePolicy::Dyadic { root })?)
}

fn cubes(cfg: &ExperimentConfig, f: &GridField<f64>) -> Result<Vec<CubeSpec>> {
    let lat = f.lattice();
    match cfg.str_or("cubes", "dyadic").as_str() {
        "dyadic" => dyadic(f),
        "sampled" => Ok(enumerate_cubes(
            lat,
            &CubePolicy::Sampled {
                seed: cfg.seed("sampled cube family")?,
                budget: cfg.usize_or("budget", 500)?,
            },
        )?),
        "all" => Ok(enumerate_cubes(
            lat,
            &CubePolicy::AllAligned {
                max_count: cfg.usize_or("max-count", 200_000)?,
            },
        )?),
        other => bail!("unknown cube family `{other}` (dyadic, sampled, all)"),
    }
}

fn balls(cfg: &ExperimentConfig, f: &GridField<f64>) -> Result<Vec<BallSpec<f64>>> {
    let lat = f.lattice();
    let half = lat.bounding_box().extent.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    let out = match cfg.str_or("balls", "lattice").as_str() {
        "lattice" => enumerate_balls(
            lat,
            &BallPolicy::Lattice {
                stride: cfg.usize_or("ball-stride", (lat.counts()[0] / 4).max(1))?,
                radii: cfg.f64_list_or("radii", &[0.2 * half, 0.4 * half, 0.6 * half])?,
                require_fit: true,
            },
        )?,
        "sampled" => enumerate_balls(
            lat,
            &BallPolicy::Sampled {
                seed: cfg.seed("sampled ball family")?,
                budget: cfg.usize_or("budget", 300)?,
                r_min: cfg.f64_or("r-min", 0.1 * half)?,
                r_max: cfg.f64_or("r-max", 0.9 * half)?,
            },
        )?,
        other => bail!("unknown ball family `{other}` (lattice, sampled)"),
    };
    if out.is_empty() {
        bail!("the ball family is empty on this grid");
    }
    Ok(out)
}

/// Comparison constants from every `sample-stride`-th cell center and the
/// centers of `extra` cubes. `c0`, `c0-scale` and `n0` override the fit.
fn comparison(
    cfg: &ExperimentConfig,
    rho: &GridField<f64>,
    extra: &[CubeSpec],
) -> Result<(RhoSamples<f64>, RhoComparisonEstimate)> {
    let lat = rho.lattice();
    let stride = cfg.usize_or("sample-stride", (lat.counts()[0] / 8).max(1))?;
    if stride == 0 {
        bail!("sample-stride must be positive");
    }
    let mut samples = RhoSamples::cell_centers(rho, stride);
    samples.extend(rho, extra.iter().map(|q| q.center(lat)));
    let n0 = cfg.f64_opt("n0")?;
    let cands: Vec<f64> = n0.map_or(N0_CANDIDATES.to_vec(), |n| vec![n]);
    let mut est = estimate_rho_comparison(&samples, &cands)?;
    if let Some(c0) = cfg.f64_opt("c0")? {
        est.c0 = c0;
    }
    let scale = cfg.f64_or("c0-scale", 1.0)?;
    if !(scale > 0.0) {
        bail!("c0-scale must be positive");
    }
    est.c0 *= scale;
    Ok((samples, est))
}

/// Dyadic cubes down to `sample-levels` below the root.
fn coarse_dyadic(cfg: &ExperimentConfig, f: &GridField<f64>) -> Result<Vec<CubeSpec>> {
    let levels = cfg.usize_or("sample-levels", 3)?;
    let root = CubeSpec::whole(f.lattice())?;
    let min = root.cell_count() >> (f.dim() * levels).min(usize::BITS as usize - 1);
    Ok(dyadic(f)?.into_iter().filter(|q| q.cell_count() >= min).collect())
}

fn value(r: &impl serde::Serialize) -> Result<Value> {
    Ok(serde_json::to_value(r)?)
}

fn reports_output(reports: Vec<CheckReport>, mut extra: serde_json::Map<String, Value>) -> Result<Output> {
    let passed = reports.iter().all(|r| r.passed);
    let tables = reports
        .iter()
        .map(|r| (format!("{}.csv", r.check), r.items_csv()))
        .collect();
    extra.insert("reports".into(), value(&reports)?);
    Ok(Output {
        results: Value::Object(extra),
        tables,
        fields: Vec::new(),
        passed,
    })
}

fn rho(cfg: &ExperimentConfig) -> Result<Output> {
    let v = load_key(cfg, "v", "potential-one")?
        .field
        .map(FieldKind::Potential, |x| x)?;
    let pot = Potential::with_defaults(v)?;
    let grid = RadiusGrid::for_lattice(pot.field().lattice());
    let rf = compute_rho_field(&pot, &grid)?;
    let extra = coarse_dyadic(cfg, &rf.field)?;
    let (samples, est) = comparison(cfg, &rf.field, &extra)?;
    let cmp = verify_rho_comparison(&samples, &est);
    let vals = rf.field.values();
    let flags: serde_json::Map<String, Value> = [RhoFlag::Resolved, RhoFlag::BelowGrid, RhoFlag::AboveGrid]
        .iter()
        .map(|&fl| {
            (
                value(&fl).unwrap().as_str().unwrap_or("").to_string(),
                json!(rf.count(fl)),
            )
        })
        .collect();
    let results = json!({
        "radius_step": grid.step(),
        "rho_min": vals.iter().cloned().fold(f64::INFINITY, f64::min),
        "rho_max": vals.iter().cloned().fold(0.0, f64::max),
        "flags": flags,
        "comparison": est,
        "samples": samples.len(),
        "reports": [cmp],
    });
    Ok(Output {
        results,
        tables: vec![("rho-comparison.csv".into(), cmp.items_csv())],
        fields: vec![("rho".into(), rf.field)],
        passed: cmp.passed,
    })
}

fn seminorm_cmd(cfg: &ExperimentConfig) -> Result<Output> {
    let f = function(cfg)?;
    let rho = rho_for(cfg, &f)?;
    let family: SeminormFamily = cfg.str_or("norm", "blo").parse()?;
    let theta = cfg.f64_or("theta", 0.5)?;
    let beta = if family.is_campanato() {
        Some(cfg.f64_or("beta", 0.5)?)
    } else {
        None
    };
    let regions = if family.is_campanato() {
        ball_family(&balls(cfg, &f)?)
    } else {
        cube_family(&cubes(cfg, &f)?)
    };
    let rep = seminorm(&f, &SeminormSpec::new(family, theta, beta, &rho)?, &regions)?;
    let lat = f.lattice();
    let mut csv = String::from("index,center,scale,value\n");
    for (i, (r, v)) in regions.iter().zip(&rep.items).enumerate() {
        let c: Vec<String> = r.center(lat).iter().map(|x| format!("{x:?}")).collect();
        csv.push_str(&format!("{i},{},{:?},{v:?}\n", c.join(" "), r.scale(lat)));
    }
    Ok(Output {
        results: json!({
            "norm": family.as_str(),
            "value": rep.value,
            "witness": rep.witness,
            "family_size": regions.len(),
        }),
        tables: vec![("seminorm.csv".into(), csv)],
        fields: Vec::new(),
        passed: rep.value.is_finite(),
    })
}

fn weight(cfg: &ExperimentConfig) -> Result<Output> {
    let (bx, counts) = grid(cfg)?;
    let w = load(&cfg.str_or("w", "weight-power:gamma=1"), &bx, &counts)?
        .field
        .map(FieldKind::Weight, |v| v)?;
    let rho = rho_for(cfg, &w)?;
    let theta = cfg.f64_or("theta", 0.5)?;
    let p = cfg.f64_or("p", 2.0)?;
    let class = cfg.str_or("class", "ap");
    let cubes = cubes(cfg, &w)?;
    let family = match cfg.str_or("regions", "cubes").as_str() {
        "cubes" => cube_family(&cubes),
        "balls" => ball_family(&balls(cfg, &w)?),
        other => bail!("unknown region family `{other}` (cubes, balls)"),
    };
    let rep = match class.as_str() {
        "ap" => ap_constant(&w, &rho, p, theta, &family)?,
        "apq" => apq_constant(&w, &rho, p, cfg.f64_or("q", 3.0)?, theta, &family)?,
        other => bail!("unknown weight class `{other}` (ap, apq)"),
    };
    let mut passed = rep.value.is_finite();
    let mut reports = Vec::new();
    let draws = cfg.usize_or("draws", 0)?;
    if draws > 0 {
        let extra = coarse_dyadic(cfg, &w)?;
        let (_, est) = comparison(cfg, &rho, &extra)?;
        let reg = weight_reverse_holder(&w, &rho, p, theta, est.n0, &EPS_CANDIDATES, &cubes)?;
        let gen = SubsetGenerator::new(cfg.seed("subset draws")?, draws);
        let r = measure_comparison_check(&w, &rho, &reg, &cubes, &gen)?;
        passed &= r.passed;
        reports.push(json!({"regularity": reg, "measure_comparison": r}));
    }
    let csv = std::iter::once("index,value\n".to_string())
        .chain(rep.items.iter().enumerate().map(|(i, v)| format!("{i},{v:?}\n")))
        .collect();
    Ok(Output {
        results: json!({"class": class, "constant": rep, "reports": reports}),
        tables: vec![("weight.csv".into(), csv)],
        fields: Vec::new(),
        passed,
    })
}

fn root(f: &GridField<f64>) -> Result<CubeSpec> {
    let q = CubeSpec::whole(f.lattice())?;
    if !q.is_dyadic_root() {
        bail!("the grid must be a cube with a power-of-two side for dyadic work");
    }
    Ok(q)
}

fn cz(cfg: &ExperimentConfig) -> Result<Output> {
    let f = function(cfg)?;
    let rho = rho_for(cfg, &f)?;
    let root = root(&f)?;
    let theta = cfg.f64_or("theta", 0.0)?;
    let sigma = cfg.f64_or("sigma", std::f64::consts::E)?;
    let depth = cfg.usize_or("max-depth", 32)?;
    let (g, norm) = match cfg.str_or("normalize", "true").as_str() {
        "true" => normalize(&f, &rho, theta, &root)?,
        "false" => (f.clone(), dyadic_blo(&f, &rho, theta, &root)?),
        other => bail!("normalize must be true or false, got `{other}`"),
    };
    let tree = cz_decompose(&g, &root, sigma, theta, &rho, depth)?;
    let props = cz_verify_properties(&tree, &g, &rho)?;
    let centers: Vec<CubeSpec> = tree.nodes().map(|n| n.cube.clone()).collect();
    let (_, est) = comparison(cfg, &rho, &centers)?;
    let incl = cz_inclusion_check(&tree, &g, &rho, &est)?;
    let mut csv = String::from("generation,cubes,cells\n");
    for (k, (gen, cells)) in tree.generations.iter().zip(tree.generation_cells()).enumerate() {
        csv.push_str(&format!("{},{},{cells}\n", k + 1, gen.len()));
    }
    let passed = props.passed && incl.passed;
    Ok(Output {
        results: json!({
            "norm": norm,
            "depth": tree.depth(),
            "depth_limited": tree.depth_limited,
            "generation_cells": tree.generation_cells(),
            "comparison": est,
            "reports": [props, incl],
        }),
        tables: vec![
            ("generations.csv".into(), csv),
            ("tree.json".into(), serde_json::to_string_pretty(&tree)? + "\n"),
        ],
        fields: Vec::new(),
        passed,
    })
}

fn jn(cfg: &ExperimentConfig) -> Result<Output> {
    let f = function(cfg)?;
    let rho = rho_for(cfg, &f)?;
    let root = root(&f)?;
    let theta = cfg.f64_or("theta", 0.5)?;
    let count = cfg.usize_or("lambdas", 64)?;
    let span = cfg.f64_or("span", 20.0)?;
    let extra = coarse_dyadic(cfg, &f)?;
    let (_, est) = comparison(cfg, &rho, &extra)?;
    let norm = dyadic_blo(&f, &rho, theta, &root)?;
    let r = jn_tail_verify(&f, &root, theta, &rho, &est, &lambda_grid(span * norm, count))?;
    let (_, c2) = jn_constants(est.c0, theta, f.dim());
    let gamma = cfg.f64_or("gamma-fraction", 0.5)? * c2;
    let exp = exp_integrability_check(&f, &root, theta, &rho, &est, gamma)?;
    let passed = r.passed && exp.passed;
    Ok(Output {
        results: json!({"comparison": est, "jn": r, "reports": [exp]}),
        tables: vec![("jn.csv".into(), r.to_csv())],
        fields: Vec::new(),
        passed,
    })
}

fn check(cfg: &ExperimentConfig, theorem: Theorem) -> Result<Output> {
    let f = function(cfg)?;
    let rho = rho_for(cfg, &f)?;
    let lat = f.lattice().clone();
    let theta1 = cfg.f64_or("theta1", 0.5)?;
    let theta2 = cfg.f64_or("theta2", 1.0)?;
    let mut extra = serde_json::Map::new();
    let reports = match theorem {
        Theorem::ApCubes | Theorem::ApqCubes | Theorem::Corollary => {
            let w = weight_field(cfg, &f)?;
            let p = cfg.f64_or("p", if theorem == Theorem::ApCubes { 2.0 } else { 1.0 })?;
            let cubes = cubes(cfg, &f)?;
            let fam = cube_family(&cubes);
            let coarse = coarse_dyadic(cfg, &f)?;
            let (_, est) = comparison(cfg, &rho, &coarse)?;
            let reg = weight_reverse_holder(&w, &rho, p, theta2, est.n0, &EPS_CANDIDATES, &cubes)?;
            extra.insert("comparison".into(), value(&est)?);
            extra.insert("regularity".into(), value(&reg)?);
            match theorem {
                Theorem::ApCubes => vec![
                    thm1_forward(&f, &w, &rho, p, theta1, theta2, &fam, &reg, &est)?,
                    thm1_converse_chain(&f, &w, &rho, p, theta1, theta2, &fam)?,
                ],
                Theorem::ApqCubes => {
                    let q = cfg.f64_or("q", 2.0)?;
                    vec![
                        thm2_forward(&f, &w, &rho, p, q, theta1, theta2, &fam, &reg, &est)?,
                        thm2_converse_chain(&f, &w, &rho, p, q, theta1, theta2, &fam)?,
                    ]
                }
                _ => {
                    let q = cfg.f64_or("q", 2.0)?;
                    vec![
                        corollary_bridges(&w, &rho, p, q, theta2, &fam)?,
                        corollary_forward(&f, &w, &rho, p, q, theta1, theta2, None, &fam, &reg, &est)?,
                    ]
                }
            }
        }
        Theorem::ApBalls | Theorem::ApqBalls => {
            let w = weight_field(cfg, &f)?;
            let beta = cfg.f64_or("beta", 0.5)?;
            let fam = ball_family(&balls(cfg, &f)?);
            let coarse = coarse_dyadic(cfg, &f)?;
            let (_, est) = comparison(cfg, &rho, &coarse)?;
            extra.insert("comparison".into(), value(&est)?);
            if theorem == Theorem::ApBalls {
                let p = cfg.f64_or("p", 2.0)?;
                vec![
                    thm3_forward(&f, &w, &rho, p, theta1, theta2, beta, &fam, &est)?,
                    converse_chain(&f, &w, &rho, WeightClass::Ap { p }, theta1, theta2, Some(beta), &fam)?,
                ]
            } else {
                let p = cfg.f64_or("p", 1.0)?;
                let q = cfg.f64_or("q", 2.0)?;
                vec![
                    thm4_forward(&f, &w, &rho, p, q, theta1, theta2, beta, &fam, &est)?,
                    converse_chain(
                        &f,
                        &w,
                        &rho,
                        WeightClass::Apq { p, q },
                        theta1,
                        theta2,
                        Some(beta),
                        &fam,
                    )?,
                ]
            }
        }
        Theorem::TailCampanato | Theorem::TailBlo => {
            let theta = cfg.f64_or("theta", 0.0)?;
            let beta = (theorem == Theorem::TailCampanato)
                .then(|| cfg.f64_or("beta", 0.5))
                .transpose()?;
            let gamma = cfg.f64_or("gamma", beta.unwrap_or(0.0) + theta + 0.5)?;
            let center = cfg.f64_list_or("center", &vec![0.0; lat.dim()])?;
            let half = lat.bounding_box().extent.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
            let r = cfg.f64_or("radius", 0.5 * half)?;
            let (target, norm_family) = if beta.is_some() {
                let b = BallSpec::new(center, r)?;
                (vec![Region::Ball(b)], ball_family(&balls(cfg, &f)?))
            } else {
                let q = CubeSpec::from_geometry(&lat, &center, 2.0 * r)?;
                (vec![Region::Cube(q)], cube_family(&cubes(cfg, &f)?))
            };
            vec![tail_integral_check(
                &f,
                &rho,
                beta,
                theta,
                gamma,
                &target,
                &norm_family,
            )?]
        }
        Theorem::Pointwise => {
            let theta = cfg.f64_or("theta", 0.5)?;
            let beta = cfg.f64_or("beta", 0.5)?;
            let pairs = sample_pairs(&lat, cfg.seed("pair sampling")?, cfg.usize_or("pairs", 500)?)?;
            let fam = ball_family(&balls(cfg, &f)?);
            let coarse = coarse_dyadic(cfg, &f)?;
            let (_, est) = comparison(cfg, &rho, &coarse)?;
            extra.insert("comparison".into(), value(&est)?);
            vec![lipschitz_pointwise_check(&f, &rho, beta, theta, &pairs, &fam, &est)?]
        }
    };
    reports_output(reports, extra)
}

fn generate(cfg: &ExperimentConfig) -> Result<Output> {
    let spec_text = cfg
        .str_opt("spec")
        .ok_or_else(|| anyhow!("generate needs `spec`, e.g. --set spec=weight-power:gamma=4"))?;
    let (bx, counts) = grid(cfg)?;
    let g = load(&spec_text, &bx, &counts)?;
    let vals = g.field.values();
    let mut results = json!({
        "spec": crate::source::parse_spec(&spec_text).ok(),
        "kind": g.field.kind().as_str(),
        "min": vals.iter().cloned().fold(f64::INFINITY, f64::min),
        "max": vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "dyadic_bound": g.dyadic_bound,
    });
    let mut passed = true;
    if let Some(bound) = g.dyadic_bound {
        let ones = g.field.map(FieldKind::Rho, |_| 1.0)?;
        let seminorm = dyadic_blo(&g.field, &ones, 0.0, &root(&g.field)?)?;
        passed = seminorm <= bound * (1.0 + 1e-12);
        results["dyadic_seminorm"] = json!(seminorm);
    }
    Ok(Output {
        results,
        tables: vec![("field.csv".into(), field_csv(&g.field))],
        fields: vec![("field".into(), g.field)],
        passed,
    })
}

/// The `# rsf-csv` text form read back by the loaders.
pub fn field_csv(f: &GridField<f64>) -> String {
    let lat = f.lattice();
    let join = |v: &[String]| v.join(" ");
    let mut s = format!(
        "# rsf-csv dim={} counts={} origin={} spacing={} kind={}\n",
        lat.dim(),
        join(&lat.counts().iter().map(|c| c.to_string()).collect::<Vec<_>>()),
        join(&lat.origin().iter().map(|c| format!("{c:?}")).collect::<Vec<_>>()),
        join(&lat.spacing().iter().map(|c| format!("{c:?}")).collect::<Vec<_>>()),
        f.kind().as_str()
    );
    for v in f.values() {
        s.push_str(&format!("{v:?}\n"));
    }
    s
}
