//! The qubit-boson and qubit-spin-J pre-measurement models: branch
//! Hamiltonians, classical trajectories on the coherent-state manifold,
//! branch phases, branch Husimi functions and classical energies.
//!
//! The coupling constant of the measurement interaction is absorbed into
//! `g` (resp. `mu`), so branch `γ` feels `ω_γ g` (resp. `ω_γ mu`) with
//! `ω_± = ±1` for a qubit observable.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::fmt_real;
use crate::manifold::{
    overlap2_unchecked, Grid, ManifoldKind, ManifoldSpec, PhasePoint, SpinMagnitude,
};
use crate::precs::{DistributionGrid, DistributionKind, DistributionMeta};

/// Tolerance on Σ|c_γ|² = 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `ν b†b + g σᶻ(b + b†)`
    QubitBoson { nu: f64, g: f64 },
    /// `h Jᶻ + μ σᶻ Jˣ`
    QubitSpinJ { h: f64, mu: f64, j: SpinMagnitude },
}

impl ModelSpec {
    pub fn qubit_boson(nu: f64, g: f64) -> Result<Self> {
        let m = ModelSpec::QubitBoson { nu, g };
        m.validate()?;
        Ok(m)
    }

    pub fn qubit_spin_j(h: f64, mu: f64, j: SpinMagnitude) -> Result<Self> {
        let m = ModelSpec::QubitSpinJ { h, mu, j };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::QubitBoson { nu, g } => {
                if !(nu > 0.0) || !nu.is_finite() {
                    return invalid(format!(
                        "oscillator frequency nu must be positive, got {nu}"
                    ));
                }
                if !(g >= 0.0) || !g.is_finite() {
                    return invalid(format!("coupling g must be non-negative, got {g}"));
                }
            }
            ModelSpec::QubitSpinJ { h, mu, .. } => {
                if !h.is_finite() || !(mu >= 0.0) || !mu.is_finite() {
                    return invalid(format!("invalid spin model parameters h = {h}, mu = {mu}"));
                }
                if h == 0.0 && mu == 0.0 {
                    return invalid("h and mu cannot both be zero");
                }
            }
        }
        Ok(())
    }

    pub fn manifold_kind(&self) -> ManifoldKind {
        match self {
            ModelSpec::QubitBoson { .. } => ManifoldKind::Plane,
            ModelSpec::QubitSpinJ { .. } => ManifoldKind::Sphere,
        }
    }

    /// The reference state |R⟩ as a manifold point.
    pub fn reference_point(&self) -> PhasePoint {
        match self {
            ModelSpec::QubitBoson { .. } => PhasePoint::ORIGIN,
            ModelSpec::QubitSpinJ { .. } => PhasePoint::SOUTH_POLE,
        }
    }

    /// E₀ = ⟨R|Ĥ_Ξ|R⟩ (normal-ordered vacuum energy for the oscillator).
    pub fn ground_energy(&self) -> f64 {
        match *self {
            ModelSpec::QubitBoson { .. } => 0.0,
            ModelSpec::QubitSpinJ { h, j, .. } => -h * j.value(),
        }
    }

    /// Angular frequency of the classical branch motion.
    pub fn frequency(&self) -> f64 {
        match *self {
            ModelSpec::QubitBoson { nu, .. } => nu,
            ModelSpec::QubitSpinJ { h, mu, .. } => (h * h + mu * mu).sqrt(),
        }
    }

    /// Recurrence period 2π/frequency.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.frequency()
    }

    /// Default RK4 step, 1e-3 of the period.
    pub fn default_step(&self) -> f64 {
        1e-3 * self.period()
    }

    /// Largest distance from the reference point reached by a branch with
    /// eigenvalue `omega` (plane only; the sphere is compact).
    pub fn max_excursion(&self, omega: f64) -> f64 {
        match *self {
            ModelSpec::QubitBoson { nu, g } => 2.0 * (omega * g).abs() / nu,
            ModelSpec::QubitSpinJ { .. } => PI,
        }
    }

    /// Default manifold description: plane half-width max|Ξ| + 4.
    pub fn manifold_spec(&self, branches: &[BranchSpec]) -> ManifoldSpec {
        match *self {
            ModelSpec::QubitBoson { .. } => {
                let reach = branches
                    .iter()
                    .map(|b| self.max_excursion(b.omega))
                    .fold(0.0, f64::max);
                ManifoldSpec::Plane {
                    half_width: reach + 4.0,
                }
            }
            ModelSpec::QubitSpinJ { j, .. } => ManifoldSpec::Sphere { j },
        }
    }

    pub(crate) fn check_point(&self, p: &PhasePoint) -> Result<()> {
        if p.kind() != self.manifold_kind() {
            return invalid(format!(
                "{:?} point does not lie on the {:?} model manifold",
                p.kind(),
                self.manifold_kind()
            ));
        }
        Ok(())
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        match (self, grid.spec()) {
            (ModelSpec::QubitBoson { .. }, ManifoldSpec::Plane { .. }) => Ok(()),
            (ModelSpec::QubitSpinJ { j, .. }, ManifoldSpec::Sphere { j: gj }) if j == gj => Ok(()),
            _ => invalid("grid manifold does not match the model"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchLabel(pub String);

impl BranchLabel {
    pub fn new(s: impl Into<String>) -> Self {
        BranchLabel(s.into())
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One measurement branch: label γ, eigenvalue ω_γ and amplitude c_γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub gamma: BranchLabel,
    pub omega: f64,
    pub c: Complex64,
}

impl BranchSpec {
    pub fn new(gamma: impl Into<String>, omega: f64, c: Complex64) -> Self {
        BranchSpec {
            gamma: BranchLabel::new(gamma),
            omega,
            c,
        }
    }

    pub fn plus(c: f64) -> Self {
        Self::new("+", 1.0, Complex64::new(c, 0.0))
    }

    pub fn minus(c: f64) -> Self {
        Self::new("-", -1.0, Complex64::new(c, 0.0))
    }

    pub fn weight(&self) -> f64 {
        self.c.norm_sqr()
    }
}

/// The qubit branch pair with real amplitudes √p₊ and √(1 - p₊).
pub fn qubit_branches(p_plus: f64) -> Vec<BranchSpec> {
    vec![
        BranchSpec::plus(p_plus.sqrt()),
        BranchSpec::minus((1.0 - p_plus).sqrt()),
    ]
}

pub fn check_branches(branches: &[BranchSpec]) -> Result<()> {
    if branches.is_empty() {
        return invalid("branch set is empty");
    }
    for (i, a) in branches.iter().enumerate() {
        if !a.omega.is_finite() || !a.c.re.is_finite() || !a.c.im.is_finite() {
            return invalid(format!("branch {} has non-finite parameters", a.gamma));
        }
        if branches[..i].iter().any(|b| b.gamma == a.gamma) {
            return invalid(format!("duplicate branch label {}", a.gamma));
        }
    }
    let total: f64 = branches.iter().map(BranchSpec::weight).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return invalid(format!(
            "branch amplitudes not normalized: sum |c|^2 = {total}"
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub point: PhasePoint,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelSpec,
    pub gamma: BranchLabel,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn end(&self) -> &TrajectorySample {
        self.samples
            .last()
            .expect("trajectory has at least one sample")
    }

    /// CSV export: `t,coord1,coord2,phase`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,coord1,coord2,phase")?;
        for s in &self.samples {
            let (a, b) = s.point.coords();
            writeln!(
                out,
                "{},{},{},{}",
                fmt_real(s.t),
                fmt_real(a),
                fmt_real(b),
                fmt_real(s.phase)
            )?;
        }
        Ok(())
    }
}

/// Classical phase-space state used by the integrators.
#[derive(Debug, Clone, Copy)]
enum State {
    Plane(Complex64),
    Sphere([f64; 3]),
}

impl State {
    fn initial(model: &ModelSpec) -> Self {
        match model {
            ModelSpec::QubitBoson { .. } => State::Plane(Complex64::new(0.0, 0.0)),
            ModelSpec::QubitSpinJ { .. } => State::Sphere([0.0, 0.0, -1.0]),
        }
    }

    fn to_point(self) -> PhasePoint {
        match self {
            State::Plane(z) => PhasePoint::Plane { re: z.re, im: z.im },
            State::Sphere(n) => PhasePoint::from_vector(n).expect("unit vector"),
        }
    }

    fn axpy(self, h: f64, d: State) -> State {
        match (self, d) {
            (State::Plane(z), State::Plane(dz)) => State::Plane(z + dz * h),
            (State::Sphere(n), State::Sphere(dn)) => {
                State::Sphere([n[0] + h * dn[0], n[1] + h * dn[1], n[2] + h * dn[2]])
            }
            _ => unreachable!(),
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Precession axis B_γ = (ω_γ μ, 0, h) of the spin branch Hamiltonian.
fn field(h: f64, mu: f64, omega: f64) -> [f64; 3] {
    [omega * mu, 0.0, h]
}

/// Right-hand side of the classical equations of motion:
/// i ż = ∂H/∂z̄ = νz + ω g on the plane, ṅ = B × n on the sphere.
fn velocity(model: &ModelSpec, omega: f64, s: State) -> State {
    match (*model, s) {
        (ModelSpec::QubitBoson { nu, g }, State::Plane(z)) => {
            State::Plane(-Complex64::i() * (nu * z + omega * g))
        }
        (ModelSpec::QubitSpinJ { h, mu, .. }, State::Sphere(n)) => {
            State::Sphere(cross(field(h, mu, omega), n))
        }
        _ => unreachable!(),
    }
}

fn energy_of_state(model: &ModelSpec, omega: f64, s: State) -> f64 {
    match (*model, s) {
        (ModelSpec::QubitBoson { nu, g }, State::Plane(z)) => {
            nu * z.norm_sqr() + omega * g * 2.0 * z.re
        }
        (ModelSpec::QubitSpinJ { h, mu, j }, State::Sphere(n)) => {
            j.value() * (h * n[2] + omega * mu * n[0])
        }
        _ => unreachable!(),
    }
}

/// ⟨Ξ_t|(i∂_t - Ĥ)|Ξ_t⟩ along the flow. The spin term is written in the chart
/// regular at the south pole; it is singular only at the north pole.
fn phase_rate(model: &ModelSpec, omega: f64, s: State) -> f64 {
    let geometric = match (*model, s, velocity(model, omega, s)) {
        (_, State::Plane(z), State::Plane(dz)) => -(dz * z.conj()).im,
        (ModelSpec::QubitSpinJ { j, .. }, State::Sphere(n), State::Sphere(dn)) => {
            // the chart is singular at the north pole; orbits through it (h = 0)
            // have zero azimuthal velocity, so skip the 0/0
            let swept = n[0] * dn[1] - n[1] * dn[0];
            if swept == 0.0 {
                0.0
            } else {
                j.value() * swept / (1.0 - n[2])
            }
        }
        _ => unreachable!(),
    };
    geometric - energy_of_state(model, omega, s)
}

fn rk4_step(model: &ModelSpec, omega: f64, s: State, h: f64) -> State {
    let k1 = velocity(model, omega, s);
    let k2 = velocity(model, omega, s.axpy(h / 2.0, k1));
    let k3 = velocity(model, omega, s.axpy(h / 2.0, k2));
    let k4 = velocity(model, omega, s.axpy(h, k3));
    let next = s
        .axpy(h / 6.0, k1)
        .axpy(h / 3.0, k2)
        .axpy(h / 3.0, k3)
        .axpy(h / 6.0, k4);
    match next {
        State::Sphere(n) => {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            State::Sphere([n[0] / norm, n[1] / norm, n[2] / norm])
        }
        plane => plane,
    }
}

fn closed_form_state(model: &ModelSpec, omega: f64, t: f64) -> State {
    match *model {
        ModelSpec::QubitBoson { nu, g } => {
            let z = -(omega * g / nu)
                * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -nu * t));
            State::Plane(z)
        }
        ModelSpec::QubitSpinJ { h, mu, .. } => {
            // Rodrigues rotation of the south pole about B by |B| t.
            let b = field(h, mu, omega);
            let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let n0 = [0.0, 0.0, -1.0];
            if norm == 0.0 {
                return State::Sphere(n0);
            }
            let k = [b[0] / norm, b[1] / norm, b[2] / norm];
            let (sin, cos) = (norm * t).sin_cos();
            let kxn = cross(k, n0);
            let kdn = k[2] * n0[2];
            State::Sphere([
                n0[0] * cos + kxn[0] * sin + k[0] * kdn * (1.0 - cos),
                n0[1] * cos + kxn[1] * sin + k[1] * kdn * (1.0 - cos),
                n0[2] * cos + kxn[2] * sin + k[2] * kdn * (1.0 - cos),
            ])
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

/// Closed-form Ξᵞ_t.
///
/// Plane: z(t) = -(ω g/ν)(1 - e^{-iνt}). Sphere: the south pole rotated about
/// B_γ = (ω μ, 0, h) by the angle |B| t in the right-handed sense (ṅ = B × n).
pub fn classical_trajectory(model: &ModelSpec, branch: &BranchSpec, t: f64) -> Result<PhasePoint> {
    model.validate()?;
    check_time(t)?;
    Ok(closed_form_state(model, branch.omega, t).to_point())
}

pub(crate) fn trajectory_point(model: &ModelSpec, omega: f64, t: f64) -> PhasePoint {
    closed_form_state(model, omega, t).to_point()
}

/// Fixed-step RK4 integration of the classical equations of motion, with the
/// branch phase accumulated by the trapezoid rule on the same substeps.
///
/// Each interval of `t_grid` is split into equal substeps no longer than
/// [`ModelSpec::default_step`].
pub fn integrate_eom(model: &ModelSpec, branch: &BranchSpec, t_grid: &[f64]) -> Result<Trajectory> {
    integrate_eom_with_step(model, branch, t_grid, model.default_step())
}

pub fn integrate_eom_with_step(
    model: &ModelSpec,
    branch: &BranchSpec,
    t_grid: &[f64],
    max_step: f64,
) -> Result<Trajectory> {
    model.validate()?;
    if t_grid.first() != Some(&0.0) {
        return invalid("time grid must start at 0");
    }
    if t_grid
        .windows(2)
        .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return invalid("time grid must be strictly increasing");
    }
    if !(max_step > 0.0) {
        return invalid("integration step must be positive");
    }
    let omega = branch.omega;
    let mut state = State::initial(model);
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(t_grid.len());
    samples.push(TrajectorySample {
        t: 0.0,
        point: state.to_point(),
        phase,
    });
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let n_sub = (span / max_step).ceil().max(1.0) as usize;
        let h = span / n_sub as f64;
        let mut rate = phase_rate(model, omega, state);
        for _ in 0..n_sub {
            state = rk4_step(model, omega, state, h);
            let next_rate = phase_rate(model, omega, state);
            phase += 0.5 * h * (rate + next_rate);
            rate = next_rate;
        }
        samples.push(TrajectorySample {
            t: w[1],
            point: state.to_point(),
            phase,
        });
    }
    Ok(Trajectory {
        model: *model,
        gamma: branch.gamma.clone(),
        samples,
    })
}

/// Branch phase φᵞ_t at each time of `t_grid`.
pub fn branch_phase(model: &ModelSpec, branch: &BranchSpec, t_grid: &[f64]) -> Result<Vec<f64>> {
    Ok(integrate_eom(model, branch, t_grid)?
        .samples
        .into_iter()
        .map(|s| s.phase)
        .collect())
}

/// Branch phase at a single time.
pub fn branch_phase_at(model: &ModelSpec, branch: &BranchSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(integrate_eom(model, branch, &[0.0, t])?.end().phase)
}

/// hᵞ_t(Ω) = |⟨Ω|Ξᵞ_t⟩|² on every cell of `grid`.
pub fn husimi_branch(
    model: &ModelSpec,
    branch: &BranchSpec,
    t: f64,
    grid: &Arc<Grid>,
) -> Result<DistributionGrid> {
    model.check_grid(grid)?;
    let center = classical_trajectory(model, branch, t)?;
    let spec = *grid.spec();
    let values = grid.map_points(|p| overlap2_unchecked(&spec, p, &center));
    Ok(DistributionGrid::new(
        grid.clone(),
        values,
        t,
        DistributionMeta {
            model: *model,
            branches: vec![branch.clone()],
            kind: DistributionKind::HBranch,
        },
    ))
}

/// Hᵞ(Ω) = ⟨Ω|Ĥᵞ|Ω⟩: ν|z|² + ω g (z + z̄) or J(h n_z + ω μ n_x).
pub fn classical_energy(model: &ModelSpec, branch: &BranchSpec, point: &PhasePoint) -> Result<f64> {
    model.check_point(point)?;
    let state = match *point {
        PhasePoint::Plane { re, im } => State::Plane(Complex64::new(re, im)),
        PhasePoint::Sphere { .. } => State::Sphere(point.unit_vector().unwrap()),
    };
    Ok(energy_of_state(model, branch.omega, state))
}

/// Uniform time grid of `n_steps` intervals over `[0, t_max]`.
pub fn uniform_times(t_max: f64, n_steps: usize) -> Vec<f64> {
    if n_steps == 0 {
        return vec![0.0];
    }
    (0..=n_steps)
        .map(|k| t_max * k as f64 / n_steps as f64)
        .collect()
}
