#![allow(dead_code)]

use rhoblo::critical_radius::{
    compute_rho_field, estimate_rho_comparison, Potential, RadiusGrid, RhoComparisonEstimate, RhoSamples,
};
use rhoblo::generators::{generate, GeneratorSpec};
use rhoblo::grid::{enumerate_cubes, CubePolicy, CubeSpec, GridBox, GridField, Region};
use rhoblo::seminorms::cube_family;

pub const N0_CANDIDATES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

pub fn window(a: f64) -> GridBox<f64> {
    GridBox::symmetric(3, a).unwrap()
}

pub fn field(spec: &GeneratorSpec, a: f64, n: usize) -> GridField<f64> {
    generate(spec, &window(a), vec![n; 3]).unwrap().field
}

/// Critical radius of `potential` on `[-a, a]^3` with `n^3` cells.
pub fn rho(potential: &GeneratorSpec, a: f64, n: usize) -> GridField<f64> {
    let v = field(potential, a, n);
    let pot = Potential::with_defaults(v).unwrap();
    let grid = RadiusGrid::for_lattice(pot.field().lattice());
    compute_rho_field(&pot, &grid).unwrap().field
}

pub fn dyadic(lat: &rhoblo::grid::Lattice<f64>) -> Vec<CubeSpec> {
    let root = CubeSpec::whole(lat).unwrap();
    enumerate_cubes(lat, &CubePolicy::Dyadic { root }).unwrap()
}

pub fn dyadic_regions(lat: &rhoblo::grid::Lattice<f64>) -> Vec<Region<f64>> {
    cube_family(&dyadic(lat))
}

/// Comparison constants fitted on every cell center and every dyadic
/// cube center of the whole grid.
pub fn comparison(rho: &GridField<f64>) -> RhoComparisonEstimate {
    let lat = rho.lattice();
    let mut samples = RhoSamples::cell_centers(rho, 1);
    samples.extend(rho, dyadic(lat).iter().map(|q| q.center(lat)));
    estimate_rho_comparison(&samples, &N0_CANDIDATES).unwrap()
}

pub fn martingale(seed: u64) -> GeneratorSpec {
    GeneratorSpec::DyadicMartingale {
        seed,
        depth: 4,
        step: 1.0,
        density: 0.4,
    }
}
