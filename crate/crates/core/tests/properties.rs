mod common;

use proptest::prelude::*;
use rhoblo::czjn::{cz_decompose, cz_verify_properties, normalize};
use rhoblo::grid::{CubeSpec, FieldKind, GridField, Lattice, SummedAreaTable};
use rhoblo::seminorms::{blo_oscillation, bmo_oscillation, seminorm_value, SeminormFamily};
use rhoblo::weights::ap_constant;

const N: usize = 4;

fn lattice() -> Lattice<f64> {
    Lattice::from_box(&common::window(1.0), vec![N; 3]).unwrap()
}

fn on_grid(values: Vec<f64>, kind: FieldKind) -> GridField<f64> {
    GridField::on_lattice(lattice(), values, kind).unwrap()
}

fn unit_rho(scale: f64) -> GridField<f64> {
    on_grid(vec![scale; N * N * N], FieldKind::Rho)
}

fn values(lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, N * N * N)
}

fn cube() -> impl Strategy<Value = CubeSpec> {
    (0..N, 0..N, 0..N, 1..=N).prop_filter_map("fits", |(i, j, k, s)| {
        CubeSpec::new(&lattice(), vec![i, j, k], vec![s; 3]).ok()
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn table_sums_match_direct_sums(v in values(-5.0, 5.0), q in cube()) {
        let f = on_grid(v, FieldKind::Function);
        let sat = SummedAreaTable::new(&f);
        let lat = f.lattice();
        let mut direct = 0.0;
        q.for_each_run(lat, |s, len| direct += f.values()[s..s + len].iter().sum::<f64>());
        prop_assert!(close(sat.sum(&q).unwrap(), direct, 1e-12));
    }

    #[test]
    fn oscillations_are_ordered(v in values(-5.0, 5.0), q in cube()) {
        let f = on_grid(v, FieldKind::Function);
        let blo = blo_oscillation(&f, &q).unwrap();
        let bmo = bmo_oscillation(&f, &q).unwrap();
        prop_assert!(blo >= 0.0);
        prop_assert!(bmo <= 2.0 * blo * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn seminorms_ignore_shifts_and_follow_scaling(
        v in values(-5.0, 5.0),
        shift in -100.0..100.0f64,
        scale in 0.1..10.0f64,
        theta in 0.0..3.0f64,
    ) {
        let f = on_grid(v, FieldKind::Function);
        let rho = unit_rho(0.5);
        let family = common::dyadic_regions(f.lattice());
        for fam in [SeminormFamily::Blo, SeminormFamily::Bmo] {
            let base = seminorm_value(&f, &rho, fam, theta, None, &family).unwrap();
            let shifted = f.map(FieldKind::Function, |x| x + shift).unwrap();
            let scaled = f.map(FieldKind::Function, |x| x * scale).unwrap();
            let s = seminorm_value(&shifted, &rho, fam, theta, None, &family).unwrap();
            let c = seminorm_value(&scaled, &rho, fam, theta, None, &family).unwrap();
            prop_assert!(close(s, base, 1e-9), "{fam:?} shift {s} vs {base}");
            prop_assert!(close(c, scale * base, 1e-12), "{fam:?} scale {c} vs {}", scale * base);
        }
    }

    #[test]
    fn larger_theta_never_increases_seminorms(v in values(-5.0, 5.0), t0 in 0.0..2.0f64, dt in 0.0..2.0f64) {
        let f = on_grid(v, FieldKind::Function);
        let rho = unit_rho(0.3);
        let family = common::dyadic_regions(f.lattice());
        let a = seminorm_value(&f, &rho, SeminormFamily::Blo, t0, None, &family).unwrap();
        let b = seminorm_value(&f, &rho, SeminormFamily::Blo, t0 + dt, None, &family).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn weight_constants_are_scale_free_and_monotone(
        v in values(0.1, 10.0),
        scale in 0.01..100.0f64,
        p in 1.0..4.0f64,
        t0 in 0.0..2.0f64,
        dt in 0.0..2.0f64,
    ) {
        let w = on_grid(v, FieldKind::Weight);
        let rho = unit_rho(0.5);
        let family = common::dyadic_regions(w.lattice());
        let base = ap_constant(&w, &rho, p, t0, &family).unwrap().value;
        let scaled = w.map(FieldKind::Weight, |x| x * scale).unwrap();
        let s = ap_constant(&scaled, &rho, p, t0, &family).unwrap().value;
        let later = ap_constant(&w, &rho, p, t0 + dt, &family).unwrap().value;
        prop_assert!(close(s, base, 1e-9), "{s} vs {base}");
        prop_assert!(later <= base * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn stopping_time_trees_hold_their_properties(seed in 0u64..1000, theta in 0.0..1.5f64) {
        let f = common::field(&common::martingale(seed), 2.0, 16);
        let rho = f.map(FieldKind::Rho, |_| 1.0).unwrap();
        let root = CubeSpec::whole(f.lattice()).unwrap();
        let (g, _) = normalize(&f, &rho, theta, &root).unwrap();
        let tree = cz_decompose(&g, &root, std::f64::consts::E, theta, &rho, 64).unwrap();
        let props = cz_verify_properties(&tree, &g, &rho).unwrap();
        prop_assert!(props.passed, "{:?}", props.witness);
    }
}

#[test]
fn single_precision_tracks_double() {
    use rhoblo::critical_radius::{compute_rho_field, Potential, RadiusGrid};
    use rhoblo::grid::GridBox;

    fn run<T: rhoblo::Real>() -> (f64, f64) {
        let bx = GridBox::<T>::symmetric(3, T::of(2.0)).unwrap();
        let v = GridField::from_fn(&bx, vec![8; 3], FieldKind::Potential, |x: &[T]| {
            x.iter().fold(T::zero(), |s, &c| s + c * c)
        })
        .unwrap();
        let pot = Potential::with_defaults(v).unwrap();
        let rho = compute_rho_field(&pot, &RadiusGrid::for_lattice(pot.field().lattice()))
            .unwrap()
            .field;
        let f = GridField::from_fn(&bx, vec![8; 3], FieldKind::Function, |x: &[T]| x[0].abs().sqrt()).unwrap();
        let root = CubeSpec::whole(f.lattice()).unwrap();
        let cubes = rhoblo::grid::enumerate_cubes(f.lattice(), &rhoblo::grid::CubePolicy::Dyadic { root }).unwrap();
        let family = rhoblo::seminorms::cube_family(&cubes);
        let blo = seminorm_value(&f, &rho, SeminormFamily::Blo, T::of(0.5), None, &family).unwrap();
        let mid = rho.values()[rho.lattice().linear(&[4, 4, 4])];
        (blo.as_f64(), mid.as_f64())
    }

    let (a32, r32) = run::<f32>();
    let (a64, r64) = run::<f64>();
    assert!(close(a32, a64, 1e-4), "{a32} vs {a64}");
    assert!(close(r32, r64, 1e-4), "{r32} vs {r64}");
}
