//! The `verify` command: coherent-state claims against exact evolution.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use precs_core::dynamics::branch_phase_at;
use precs_core::dynamics::{classical_energy, classical_trajectory, integrate_eom, uniform_times};
use precs_core::oracle::{
    build_space_with_cutoff, coherent_fidelity, coherent_projection, evolve_branch,
    expectation_check, reduced_density, BranchState, Observable, OracleSpace, FOCK_TAIL_BOUND,
    MAX_FOCK_CUTOFF,
};
use precs_core::precs::{all_disjoint, branch_supports, decoherence_intervals};
use precs_core::{BranchSpec, Grid, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::commands::Context;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub measured: f64,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, tolerance: f64, measured: f64, detail: impl Into<String>) -> Self {
        let status = if measured <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Check {
            name: name.into(),
            tolerance,
            measured,
            status,
            detail: detail.into(),
        }
    }

    fn skipped(name: &str, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            tolerance,
            measured: f64::NAN,
            status: Status::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: ModelSpec,
    pub epsilon: f64,
    pub dimension: usize,
    pub n_max: Option<usize>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// `VerifyFailed` naming the violated bounds.
    pub fn ensure_pass(&self) -> Result<(), CliError> {
        if self.pass {
            Ok(())
        } else {
            Err(CliError::VerifyFailed(format!(
                "failed checks: {}",
                self.failed().join(", ")
            )))
        }
    }
}

fn inner(a: &BranchState, b: &BranchState) -> Complex64 {
    a.vector
        .iter()
        .zip(&b.vector)
        .map(|(x, y)| x.conj() * y)
        .sum()
}

fn wrapped(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

pub fn build_report(ctx: &Context) -> Result<VerifyReport, CliError> {
    let model = &ctx.model;
    let branches = &ctx.branches;
    let settings = ctx.config.verify.clone().unwrap_or_default();
    let space = build_space_with_cutoff(model, settings.n_max_override)?;
    let period = model.period();
    let times = uniform_times(period, settings.n_times - 1);
    let plane = matches!(model, ModelSpec::QubitBoson { .. });

    // exact branch states at every sample time
    let states: Vec<Vec<BranchState>> = times
        .iter()
        .map(|&t| {
            branches
                .iter()
                .map(|b| evolve_branch(&space, b, t))
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut checks = vec![Check::bound(
        "hermiticity",
        1e-12,
        space.hermiticity_error(),
        "largest asymmetry of the operator matrices",
    )];

    if let Some(n_max) = space.fock_cutoff() {
        checks.push(Check::bound(
            "fock_tail",
            FOCK_TAIL_BOUND,
            space.truncation_tail(),
            format!("Poisson mass above n_max = {n_max} at the largest excursion"),
        ));
        let doubled = (2 * n_max).min(MAX_FOCK_CUTOFF);
        let wide = build_space_with_cutoff(model, Some(doubled))?;
        let mut diff: f64 = 0.0;
        for (k, &t) in times.iter().enumerate() {
            let wide_states: Vec<BranchState> = branches
                .iter()
                .map(|b| evolve_branch(&wide, b, t))
                .collect::<Result<_, _>>()?;
            for (a, b) in pairs(branches.len()) {
                let d0 = inner(&states[k][b], &states[k][a]).norm();
                let d1 = inner(&wide_states[b], &wide_states[a]).norm();
                diff = diff.max((d0 - d1).abs());
            }
        }
        checks.push(Check::bound(
            "truncation_doubling",
            1e-8,
            diff,
            format!("change of |D(t)| when n_max goes from {n_max} to {doubled}"),
        ));
    }

    let unitarity = max_of(states.iter().flatten().map(|s| (s.norm() - 1.0).abs()));
    checks.push(Check::bound(
        "unitarity",
        1e-10,
        unitarity,
        "largest |‖Ξ(t)‖ - 1|",
    ));

    let fidelity_tol = if plane { 1e-4 } else { 1e-6 };
    let mut infidelity: f64 = 0.0;
    let mut phase_err: f64 = 0.0;
    for &t in &times {
        for b in branches {
            infidelity = infidelity.max(1.0 - coherent_fidelity(&space, b, t)?);
            if t > 0.0 {
                let arg = coherent_projection(&space, b, t)?.arg();
                phase_err = phase_err.max(wrapped(arg - branch_phase_at(model, b, t)?).abs());
            }
        }
    }
    checks.push(Check::bound(
        "coherence_fidelity",
        fidelity_tol,
        infidelity,
        "1 - min |<coherent(Ξ_t)|exp(-itH)|R>|^2",
    ));
    checks.push(Check::bound(
        "branch_phase",
        1e-3,
        phase_err,
        "largest phase error of the branch phase",
    ));

    checks.push(Check::bound(
        "trajectory_vs_oracle",
        1e-3,
        trajectory_error(&space, model, branches, &times, &states)?,
        if plane {
            "largest |<b> - z(t)|"
        } else {
            "largest |<J>/J - n(t)|"
        },
    ));

    let dense = uniform_times(2.0 * period, 4 * settings.n_times);
    let mut rk4_err: f64 = 0.0;
    let mut energy_err: f64 = 0.0;
    for b in branches {
        let traj = integrate_eom(model, b, &dense)?;
        for s in &traj.samples {
            let exact = classical_trajectory(model, b, s.t)?;
            rk4_err = rk4_err.max(precs_core::manifold::distance(&s.point, &exact)?);
            energy_err = energy_err
                .max((classical_energy(model, b, &s.point)? - model.ground_energy()).abs());
        }
    }
    checks.push(Check::bound(
        "rk4_vs_closed_form",
        1e-6,
        rk4_err,
        "largest RK4 deviation over two periods",
    ));
    checks.push(Check::bound(
        "energy_degeneracy",
        1e-6,
        energy_err,
        "largest |H(Ξ_t) - E0| along RK4 trajectories",
    ));

    let mut population: f64 = 0.0;
    for &t in &times {
        let rho = reduced_density(&space, branches, t)?;
        for (k, b) in branches.iter().enumerate() {
            population = population.max((rho[(k, k)].re - b.weight()).abs());
        }
    }
    checks.push(Check::bound(
        "population_invariance",
        1e-10,
        population,
        "largest drift of the diagonal of the reduced state",
    ));

    if plane && branches.len() >= 2 {
        let mut gauss: f64 = 0.0;
        for (k, &t) in times.iter().enumerate() {
            for (a, b) in pairs(branches.len()) {
                let za = classical_trajectory(model, &branches[a], t)?
                    .as_complex()
                    .unwrap();
                let zb = classical_trajectory(model, &branches[b], t)?
                    .as_complex()
                    .unwrap();
                let d = inner(&states[k][b], &states[k][a]).norm();
                gauss = gauss.max((d - (-(za - zb).norm_sqr() / 2.0).exp()).abs());
            }
        }
        checks.push(Check::bound(
            "decoherence_gaussian",
            1e-4,
            gauss,
            "largest ||D(t)| - exp(-|z+ - z-|^2/2)|",
        ));
    }

    let eps = ctx.config.epsilon;
    let grid = ctx.grid()?;
    checks.push(decoherence_bound(
        model, branches, &times, &states, &grid, eps,
    )?);
    checks.extend(expectation_checks(&space, ctx, &grid)?);

    let pass = checks.iter().all(|c| c.status != Status::Fail);
    Ok(VerifyReport {
        model: *model,
        epsilon: eps,
        dimension: space.dimension(),
        n_max: space.fock_cutoff(),
        checks,
        pass,
    })
}

fn trajectory_error(
    space: &OracleSpace,
    model: &ModelSpec,
    branches: &[BranchSpec],
    times: &[f64],
    states: &[Vec<BranchState>],
) -> Result<f64, CliError> {
    let mut err: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        for (b, state) in branches.iter().zip(&states[k]) {
            let p = classical_trajectory(model, b, t)?;
            let ladder = space.ladder_expectation(&state.vector);
            err = err.max(match *model {
                ModelSpec::QubitBoson { .. } => (ladder - p.as_complex().unwrap()).norm(),
                ModelSpec::QubitSpinJ { j, .. } => {
                    let n = p.unit_vector().unwrap();
                    let jz = space.jz_expectation(&state.vector).unwrap();
                    let transverse = (ladder / j.value() - Complex64::new(n[0], n[1])).norm();
                    transverse.max((jz / j.value() - n[2]).abs())
                }
            });
        }
    }
    Ok(err)
}

fn decoherence_bound(
    model: &ModelSpec,
    branches: &[BranchSpec],
    times: &[f64],
    states: &[Vec<BranchState>],
    grid: &Arc<Grid>,
    eps: f64,
) -> Result<Check, CliError> {
    let name = "decoherence_bound";
    if branches.len() < 2 {
        return Ok(Check::skipped(
            name,
            eps.sqrt(),
            "needs two or more branches",
        ));
    }
    let mut worst: Option<f64> = None;
    for (k, &t) in times.iter().enumerate() {
        if all_disjoint(&branch_supports(model, branches, t, grid, eps)?)? {
            let d = max_of(
                pairs(branches.len()).map(|(a, b)| inner(&states[k][b], &states[k][a]).norm()),
            );
            worst = Some(worst.unwrap_or(0.0).max(d));
        }
    }
    Ok(match worst {
        Some(d) => Check::bound(
            name,
            eps.sqrt(),
            d,
            "largest |D(t)| where the supports are disjoint",
        ),
        None => Check::skipped(
            name,
            eps.sqrt(),
            "supports never separate on the sampled times",
        ),
    })
}

fn expectation_checks(
    space: &OracleSpace,
    ctx: &Context,
    grid: &Arc<Grid>,
) -> Result<Vec<Check>, CliError> {
    let model = &ctx.model;
    let eps = ctx.config.epsilon;
    let names = [
        (Observable::OXi, "expectation_o_xi"),
        (Observable::HXi, "expectation_h_xi"),
    ];
    let t_grid = uniform_times(model.period(), ctx.config.time.interval_steps);
    let report = decoherence_intervals(model, &ctx.branches, &t_grid, grid, eps)?;
    let Some([a, b]) = report.intervals.first().copied() else {
        return Ok(names
            .iter()
            .map(|(_, n)| Check::skipped(n, 1e-2, "no decoherence window on the time grid"))
            .collect());
    };
    let probe = [0.25, 0.5, 0.75].map(|f| a + f * (b - a));
    let mut out = Vec::new();
    for (obs, name) in names {
        let mut worst: f64 = 0.0;
        for &t in &probe {
            worst = worst
                .max(expectation_check(space, &ctx.branches, t, grid, obs, eps)?.relative_error());
        }
        out.push(Check::bound(
            name,
            1e-2,
            worst,
            format!("largest |lhs - rhs|/scale at three times in [{a:.4}, {b:.4}]"),
        ));
    }
    Ok(out)
}
