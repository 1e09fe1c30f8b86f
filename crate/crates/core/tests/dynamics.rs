use std::f64::consts::PI;

use precs_core::dynamics::{
    classical_energy, classical_trajectory, integrate_eom, integrate_eom_with_step, uniform_times,
};
use precs_core::manifold::distance;
use precs_core::{BranchSpec, ModelSpec, PhasePoint, SpinMagnitude};

fn boson(g: f64) -> ModelSpec {
    ModelSpec::qubit_boson(1.0, g).unwrap()
}

fn spin(h: f64, mu: f64, j: f64) -> ModelSpec {
    ModelSpec::qubit_spin_j(h, mu, SpinMagnitude::new(j).unwrap()).unwrap()
}

fn models() -> Vec<ModelSpec> {
    vec![
        boson(0.5),
        boson(2.0),
        spin(1.0, 1.0, 10.0),
        spin(0.0, 1.0, 10.0),
        spin(-0.4, 1.7, 2.5),
    ]
}

fn max_error(model: &ModelSpec, branch: &BranchSpec, t_max: f64, step: f64) -> f64 {
    let t_grid = uniform_times(t_max, 16);
    let traj = integrate_eom_with_step(model, branch, &t_grid, step).unwrap();
    traj.samples
        .iter()
        .map(|s| distance(&s.point, &classical_trajectory(model, branch, s.t).unwrap()).unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn rk4_tracks_the_closed_form() {
    for model in models() {
        for b in [BranchSpec::plus(1.0), BranchSpec::minus(1.0)] {
            let err = max_error(&model, &b, model.period(), model.default_step());
            assert!(err <= 1e-6, "{model:?}: {err}");
        }
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    for model in models() {
        let b = BranchSpec::plus(1.0);
        let coarse = max_error(&model, &b, model.period(), model.period() / 160.0);
        let fine = max_error(&model, &b, model.period(), model.period() / 320.0);
        let ratio = coarse / fine;
        assert!((8.0..=32.0).contains(&ratio), "{model:?}: ratio {ratio}");
    }
}

#[test]
fn energy_is_conserved_along_integrated_trajectories() {
    for model in models() {
        let e0 = model.ground_energy();
        for b in [BranchSpec::plus(1.0), BranchSpec::minus(1.0)] {
            let traj =
                integrate_eom(&model, &b, &uniform_times(2.0 * model.period(), 400)).unwrap();
            for s in &traj.samples {
                let e = classical_energy(&model, &b, &s.point).unwrap();
                assert!((e - e0).abs() <= 1e-6, "{model:?} t={}: {e}", s.t);
                let exact = classical_trajectory(&model, &b, s.t).unwrap();
                assert!((classical_energy(&model, &b, &exact).unwrap() - e0).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn sphere_trajectories_stay_on_the_unit_sphere() {
    let model = spin(0.3, 1.1, 4.0);
    let traj = integrate_eom(
        &model,
        &BranchSpec::minus(1.0),
        &uniform_times(model.period(), 50),
    )
    .unwrap();
    for s in &traj.samples {
        let n = s.point.unit_vector().unwrap();
        assert!((n.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn branches_are_mirror_images() {
    for t in uniform_times(2.0 * PI, 40) {
        let model = boson(1.3);
        let zp = classical_trajectory(&model, &BranchSpec::plus(1.0), t)
            .unwrap()
            .as_complex()
            .unwrap();
        let zm = classical_trajectory(&model, &BranchSpec::minus(1.0), t)
            .unwrap()
            .as_complex()
            .unwrap();
        assert!((zp + zm).norm() < 1e-12);

        // spin: a half turn about z maps one branch onto the other
        let model = spin(0.7, 1.0, 3.0);
        let np = classical_trajectory(&model, &BranchSpec::plus(1.0), t)
            .unwrap()
            .unit_vector()
            .unwrap();
        let nm = classical_trajectory(&model, &BranchSpec::minus(1.0), t)
            .unwrap()
            .unit_vector()
            .unwrap();
        assert!((np[0] + nm[0]).abs() < 1e-12);
        assert!((np[1] + nm[1]).abs() < 1e-12);
        assert!((np[2] - nm[2]).abs() < 1e-12);
    }
}

#[test]
fn uncoupled_models_do_not_move() {
    for model in [boson(0.0), spin(1.0, 0.0, 2.0)] {
        for t in uniform_times(10.0, 10) {
            let p = classical_trajectory(&model, &BranchSpec::plus(1.0), t).unwrap();
            let m = classical_trajectory(&model, &BranchSpec::minus(1.0), t).unwrap();
            assert_eq!(p, m);
            assert_eq!(p, model.reference_point());
        }
    }
}

#[test]
fn boson_half_period_endpoint() {
    let model = boson(0.5);
    let traj = integrate_eom(&model, &BranchSpec::plus(1.0), &uniform_times(PI, 1000)).unwrap();
    let end = traj.end().point;
    assert!(distance(&end, &PhasePoint::plane(-1.0, 0.0).unwrap()).unwrap() < 1e-6);
}
