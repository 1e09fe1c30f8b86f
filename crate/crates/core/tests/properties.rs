use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use precs_core::dynamics::qubit_branches;
use precs_core::manifold::{build_plane_grid, build_sphere_grid, integrate, overlap, overlap2};
use precs_core::par::{with_execution, Execution};
use precs_core::precs::chi_squared;
use precs_core::{Grid, ManifoldSpec, ModelSpec, PhasePoint, SpinMagnitude};
use proptest::prelude::*;

fn plane_grid() -> &'static Arc<Grid> {
    static GRID: OnceLock<Arc<Grid>> = OnceLock::new();
    GRID.get_or_init(|| Arc::new(build_plane_grid(10.0, 160).unwrap()))
}

fn sphere_grid() -> &'static Arc<Grid> {
    static GRID: OnceLock<Arc<Grid>> = OnceLock::new();
    GRID.get_or_init(|| {
        Arc::new(build_sphere_grid(128, 128, SpinMagnitude::new(5.0).unwrap()).unwrap())
    })
}

fn sphere_point() -> impl Strategy<Value = PhasePoint> {
    (0.0..=PI, 0.0..2.0 * PI).prop_map(|(t, p)| PhasePoint::sphere(t, p).unwrap())
}

fn plane_point(r: f64) -> impl Strategy<Value = PhasePoint> {
    (-r..r, -r..r).prop_map(|(x, y)| PhasePoint::plane(x, y).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plane_overlap_is_symmetric_and_bounded(a in plane_point(20.0), b in plane_point(20.0)) {
        let spec = ManifoldSpec::plane(20.0).unwrap();
        let ab = overlap2(&spec, &a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, overlap2(&spec, &b, &a).unwrap());
        let c = overlap(&spec, &a, &b).unwrap();
        prop_assert!((c.norm_sqr() - ab).abs() < 1e-12);
    }

    #[test]
    fn sphere_overlap_is_symmetric_and_bounded(
        a in sphere_point(), b in sphere_point(), twice in 1u32..80,
    ) {
        let spec = ManifoldSpec::sphere(SpinMagnitude::from_twice(twice).unwrap());
        let ab = overlap2(&spec, &a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - overlap2(&spec, &b, &a).unwrap()).abs() < 1e-14);
        let c = overlap(&spec, &a, &b).unwrap();
        prop_assert!((c.norm_sqr() - ab).abs() < 1e-12);
        prop_assert!((overlap2(&spec, &a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_identity_resolution(center in plane_point(5.0)) {
        let grid = plane_grid();
        let values: Vec<f64> = grid.cells().iter().map(|c| overlap2(grid.spec(), &c.point, &center).unwrap()).collect();
        prop_assert!((integrate(grid, &values).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sphere_identity_resolution(center in sphere_point()) {
        let grid = sphere_grid();
        let values: Vec<f64> = grid.cells().iter().map(|c| overlap2(grid.spec(), &c.point, &center).unwrap()).collect();
        prop_assert!((integrate(grid, &values).unwrap() - 1.0).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn execution_mode_does_not_change_results(t in 0.0..2.0 * PI, p in 0.0..=1.0f64, g in 0.0..3.0f64) {
        let model = ModelSpec::qubit_boson(1.0, g).unwrap();
        let branches = qubit_branches(p);
        let grid = plane_grid();
        let seq = with_execution(Execution::Sequential, || chi_squared(&model, &branches, t, grid).unwrap());
        let par = with_execution(Execution::Parallel, || chi_squared(&model, &branches, t, grid).unwrap());
        prop_assert_eq!(seq.values(), par.values());
        prop_assert_eq!(seq.integral().to_bits(), par.integral().to_bits());
    }
}
