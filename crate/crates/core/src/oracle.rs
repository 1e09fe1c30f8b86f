//! Exact evolution in the (truncated) apparatus Hilbert space.
//!
//! Branch Hamiltonians are real symmetric in the Fock / Jᶻ basis, so each is
//! diagonalized once and `e^{-itĤᵞ}|R⟩` is evaluated exactly for any t.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_branches, classical_trajectory, BranchLabel, BranchSpec, ModelSpec};
use crate::error::{invalid, PrecsError, Result};
use crate::manifold::{Grid, PhasePoint};
use crate::precs::{all_disjoint, branch_supports, chi_squared};

/// Largest admissible Fock cutoff.
pub const MAX_FOCK_CUTOFF: usize = 4096;

/// Poisson tail mass above the cutoff that the default cutoff guarantees.
pub const FOCK_TAIL_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Pointer operator Ô_Ξ: b + b† or Jˣ.
    OXi,
    /// Free apparatus Hamiltonian Ĥ_Ξ: ν b†b or h Jᶻ.
    HXi,
}

#[derive(Debug, Clone)]
struct Propagator {
    omega: f64,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    /// Reference state in the eigenbasis.
    reference: DVector<f64>,
}

impl Propagator {
    fn new(omega: f64, hamiltonian: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(hamiltonian);
        let reference = eig.eigenvectors.row(0).transpose();
        Propagator {
            omega,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            reference,
        }
    }

    fn evolve(&self, t: f64) -> Vec<Complex64> {
        let n = self.eigenvalues.len();
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for k in 0..n {
            let (s, c) = (self.eigenvalues[k] * t).sin_cos();
            re[k] = c * self.reference[k];
            im[k] = -s * self.reference[k];
        }
        let re = &self.eigenvectors * re;
        let im = &self.eigenvectors * im;
        re.iter()
            .zip(im.iter())
            .map(|(a, b)| Complex64::new(*a, *b))
            .collect()
    }
}

/// Operator matrices of a model in its oracle basis.
#[derive(Debug, Clone)]
pub struct OracleSpace {
    model: ModelSpec,
    dimension: usize,
    pointer: DMatrix<f64>,
    apparatus: DMatrix<f64>,
    coupling: f64,
    propagators: Vec<Arc<Propagator>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    pub gamma: BranchLabel,
    pub t: f64,
    pub vector: Vec<Complex64>,
}

impl BranchState {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Default Fock cutoff ceil(z² + 8z + 16) for the maximal excursion z = 2g/ν.
pub fn default_fock_cutoff(nu: f64, g: f64) -> usize {
    let z = 2.0 * g / nu;
    (z * z + 8.0 * z + 16.0).ceil() as usize
}

/// Poisson probability of n > `cutoff` at the given mean.
pub fn poisson_tail(mean: f64, cutoff: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_fact = (1..=cutoff + 1).map(|k| (k as f64).ln()).sum::<f64>();
    let mut total = 0.0;
    let mut n = cutoff + 1;
    loop {
        let term = (-mean + n as f64 * ln_mean - ln_fact).exp();
        total += term;
        if (n as f64) > mean && term < 1e-300f64.max(total * 1e-17) {
            break;
        }
        n += 1;
        ln_fact += (n as f64).ln();
    }
    total.min(1.0)
}

pub fn build_space(model: &ModelSpec) -> Result<OracleSpace> {
    build_space_with_cutoff(model, None)
}

/// Build with an explicit Fock cutoff (ignored for spin models).
pub fn build_space_with_cutoff(model: &ModelSpec, n_max: Option<usize>) -> Result<OracleSpace> {
    model.validate()?;
    let (dimension, pointer, apparatus, coupling) = match *model {
        ModelSpec::QubitBoson { nu, g } => {
            let n_max = n_max.unwrap_or_else(|| default_fock_cutoff(nu, g));
            if n_max > MAX_FOCK_CUTOFF {
                return Err(PrecsError::TooLarge { n_max });
            }
            let dim = n_max + 1;
            let mut x = DMatrix::zeros(dim, dim);
            for n in 1..dim {
                let a = (n as f64).sqrt();
                x[(n - 1, n)] = a;
                x[(n, n - 1)] = a;
            }
            let number = DMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| nu * n as f64));
            (dim, x, number, g)
        }
        ModelSpec::QubitSpinJ { h, mu, j } => {
            let dim = j.dimension();
            let jv = j.value();
            let mut jx = DMatrix::zeros(dim, dim);
            for k in 0..dim - 1 {
                let m = k as f64 - jv;
                let a = 0.5 * (jv * (jv + 1.0) - m * (m + 1.0)).sqrt();
                jx[(k + 1, k)] = a;
                jx[(k, k + 1)] = a;
            }
            let jz = DMatrix::from_diagonal(&DVector::from_fn(dim, |k, _| h * (k as f64 - jv)));
            (dim, jx, jz, mu)
        }
    };
    let mut space = OracleSpace {
        model: *model,
        dimension,
        pointer,
        apparatus,
        coupling,
        propagators: Vec::new(),
    };
    space.propagators = [1.0, -1.0]
        .iter()
        .map(|&w| Arc::new(space.make_propagator(w)))
        .collect();
    Ok(space)
}

impl OracleSpace {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Fock cutoff n_max for the oscillator model.
    pub fn fock_cutoff(&self) -> Option<usize> {
        match self.model {
            ModelSpec::QubitBoson { .. } => Some(self.dimension - 1),
            ModelSpec::QubitSpinJ { .. } => None,
        }
    }

    /// Coherent amplitude mass lost above the cutoff at the largest excursion.
    pub fn truncation_tail(&self) -> f64 {
        match self.model {
            ModelSpec::QubitBoson { nu, g } => {
                let z = 2.0 * g / nu;
                poisson_tail(z * z, self.dimension - 1)
            }
            ModelSpec::QubitSpinJ { .. } => 0.0,
        }
    }

    /// Ĥᵞ = ω u Ô_Ξ + Ĥ_Ξ.
    pub fn branch_hamiltonian(&self, omega: f64) -> DMatrix<f64> {
        &self.pointer * (omega * self.coupling) + &self.apparatus
    }

    pub fn operator(&self, obs: Observable) -> &DMatrix<f64> {
        match obs {
            Observable::OXi => &self.pointer,
            Observable::HXi => &self.apparatus,
        }
    }

    /// Largest deviation from symmetry over all stored operators.
    pub fn hermiticity_error(&self) -> f64 {
        let err = |m: &DMatrix<f64>| (m - m.transpose()).amax();
        err(&self.pointer).max(err(&self.apparatus))
    }

    fn make_propagator(&self, omega: f64) -> Propagator {
        Propagator::new(omega, self.branch_hamiltonian(omega))
    }

    fn propagator(&self, omega: f64) -> Arc<Propagator> {
        self.propagators
            .iter()
            .find(|p| p.omega == omega)
            .cloned()
            .unwrap_or_else(|| Arc::new(self.make_propagator(omega)))
    }

    /// Reference state |R⟩: vacuum or |J, -J⟩.
    pub fn reference_state(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dimension];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Coherent state |Ω⟩ expanded in the oracle basis (truncated for the plane).
    pub fn coherent_state(&self, point: &PhasePoint) -> Result<Vec<Complex64>> {
        self.model.check_point(point)?;
        Ok(match *point {
            PhasePoint::Plane { re, im } => {
                let z = Complex64::new(re, im);
                let (r, arg) = z.to_polar();
                let mut ln_fact = 0.0;
                (0..self.dimension)
                    .map(|n| {
                        if n > 0 {
                            ln_fact += (n as f64).ln();
                        }
                        if n > 0 && r == 0.0 {
                            return Complex64::new(0.0, 0.0);
                        }
                        let ln_mag = -0.5 * r * r + if n > 0 { n as f64 * r.ln() } else { 0.0 }
                            - 0.5 * ln_fact;
                        Complex64::from_polar(ln_mag.exp(), n as f64 * arg)
                    })
                    .collect()
            }
            PhasePoint::Sphere { theta, phi } => {
                let twice_j = self.dimension - 1;
                let (s, c) = (theta / 2.0).sin_cos();
                let ln_pow = |x: f64, k: usize| if k == 0 { 0.0 } else { k as f64 * x.ln() };
                let mut ln_binom = 0.0;
                (0..self.dimension)
                    .map(|k| {
                        if k > 0 {
                            ln_binom += ((twice_j + 1 - k) as f64).ln() - (k as f64).ln();
                        }
                        let ln_mag = 0.5 * ln_binom + ln_pow(c, k) + ln_pow(s, twice_j - k);
                        Complex64::from_polar(ln_mag.exp(), -(k as f64) * phi)
                    })
                    .collect()
            }
        })
    }

    /// ⟨ψ|Â|ψ⟩.
    pub fn expectation(&self, state: &[Complex64], obs: Observable) -> f64 {
        let m = self.operator(obs);
        let mut total = 0.0;
        for i in 0..self.dimension {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..self.dimension {
                let a = m[(i, j)];
                if a != 0.0 {
                    row += a * state[j];
                }
            }
            total += (state[i].conj() * row).re;
        }
        total
    }

    /// ⟨b̂⟩ for the oscillator; ⟨Ĵˣ⟩ + i⟨Ĵʸ⟩ = ⟨Ĵ⁺⟩ for the spin.
    pub fn ladder_expectation(&self, state: &[Complex64]) -> Complex64 {
        match self.model {
            ModelSpec::QubitBoson { .. } => (1..self.dimension)
                .map(|n| (n as f64).sqrt() * state[n - 1].conj() * state[n])
                .sum(),
            ModelSpec::QubitSpinJ { j, .. } => {
                let jv = j.value();
                (0..self.dimension - 1)
                    .map(|k| {
                        let m = k as f64 - jv;
                        (jv * (jv + 1.0) - m * (m + 1.0)).sqrt() * state[k + 1].conj() * state[k]
                    })
                    .sum()
            }
        }
    }

    /// ⟨Ĵᶻ⟩ for the spin model.
    pub fn jz_expectation(&self, state: &[Complex64]) -> Option<f64> {
        match self.model {
            ModelSpec::QubitSpinJ { j, .. } => Some(
                state
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (k as f64 - j.value()) * a.norm_sqr())
                    .sum(),
            ),
            ModelSpec::QubitBoson { .. } => None,
        }
    }
}

/// |Ξᵞ(t)⟩ = e^{-itĤᵞ}|R⟩.
pub fn evolve_branch(space: &OracleSpace, branch: &BranchSpec, t: f64) -> Result<BranchState> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(BranchState {
        gamma: branch.gamma.clone(),
        t,
        vector: space.propagator(branch.omega).evolve(t),
    })
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// ⟨coherent(Ξᵞ_t)|e^{-itĤᵞ}|R⟩, whose modulus squared is the fidelity and
/// whose argument is the branch phase.
pub fn coherent_projection(space: &OracleSpace, branch: &BranchSpec, t: f64) -> Result<Complex64> {
    let state = evolve_branch(space, branch, t)?;
    let coh = space.coherent_state(&classical_trajectory(space.model(), branch, t)?)?;
    Ok(inner(&coh, &state.vector))
}

/// |⟨coherent(Ξᵞ_t)|Ξᵞ(t)⟩|².
pub fn coherent_fidelity(space: &OracleSpace, branch: &BranchSpec, t: f64) -> Result<f64> {
    Ok(coherent_projection(space, branch, t)?.norm_sqr())
}

/// D(t) = ⟨Ξ⁻(t)|Ξ⁺(t)⟩ for the ω = ±1 branch pair.
pub fn decoherence_factor(space: &OracleSpace, t: f64) -> Result<Complex64> {
    let plus = evolve_branch(space, &BranchSpec::plus(1.0), t)?;
    let minus = evolve_branch(space, &BranchSpec::minus(1.0), t)?;
    Ok(inner(&minus.vector, &plus.vector))
}

/// ρ_Γ(t) with entries c_γ c̄_γ' ⟨Ξᵞ'(t)|Ξᵞ(t)⟩ in branch order.
pub fn reduced_density(
    space: &OracleSpace,
    branches: &[BranchSpec],
    t: f64,
) -> Result<DMatrix<Complex64>> {
    check_branches(branches)?;
    let states = branches
        .iter()
        .map(|b| evolve_branch(space, b, t))
        .collect::<Result<Vec<_>>>()?;
    let n = branches.len();
    Ok(DMatrix::from_fn(n, n, |a, b| {
        branches[a].c * branches[b].c.conj() * inner(&states[b].vector, &states[a].vector)
    }))
}

/// Classical symbol ⟨Ω|Â|Ω⟩ of an apparatus observable.
pub fn classical_symbol(model: &ModelSpec, obs: Observable, point: &PhasePoint) -> Result<f64> {
    model.check_point(point)?;
    Ok(match (*model, obs, *point) {
        (ModelSpec::QubitBoson { .. }, Observable::OXi, PhasePoint::Plane { re, .. }) => 2.0 * re,
        (ModelSpec::QubitBoson { nu, .. }, Observable::HXi, PhasePoint::Plane { re, im }) => {
            nu * (re * re + im * im)
        }
        (ModelSpec::QubitSpinJ { j, .. }, Observable::OXi, p) => {
            j.value() * p.unit_vector().unwrap()[0]
        }
        (ModelSpec::QubitSpinJ { h, j, .. }, Observable::HXi, p) => {
            h * j.value() * p.unit_vector().unwrap()[2]
        }
        _ => unreachable!("point kind checked"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub observable: Observable,
    /// ⟨Ψ(t)|𝕀 ⊗ Â|Ψ(t)⟩ from the exact branch states.
    pub lhs: f64,
    /// Σ_γ ∫_{Sᵞ} dμ χ²_t ⟨Ω|Â|Ω⟩ by grid quadrature.
    pub rhs: f64,
    /// max(1, max_γ |⟨Ξᵞ_t|Â|Ξᵞ_t⟩|).
    pub scale: f64,
}

impl ExpectationCheck {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.scale
    }
}

/// Compare the exact expectation of 𝕀 ⊗ Â with its support-restricted
/// phase-space quadrature. Only defined once the ε-supports are disjoint.
pub fn expectation_check(
    space: &OracleSpace,
    branches: &[BranchSpec],
    t: f64,
    grid: &Arc<Grid>,
    obs: Observable,
    epsilon: f64,
) -> Result<ExpectationCheck> {
    let model = space.model();
    let supports = branch_supports(model, branches, t, grid, epsilon)?;
    if !all_disjoint(&supports)? {
        return Err(PrecsError::Precondition(format!(
            "epsilon-supports are not disjoint at t = {t}; the expectation identity holds only after decoherence"
        )));
    }
    let mut lhs = 0.0;
    let mut scale: f64 = 1.0;
    for b in branches {
        let state = evolve_branch(space, b, t)?;
        lhs += b.weight() * space.expectation(&state.vector, obs);
        let center = classical_trajectory(model, b, t)?;
        scale = scale.max(classical_symbol(model, obs, &center)?.abs());
    }
    let chi = chi_squared(model, branches, t, grid)?;
    let symbols = grid.map_points(|p| classical_symbol(model, obs, p).expect("grid matches model"));
    let cells = grid.cells();
    let rhs = crate::par::compensated_sum(supports.iter().flat_map(|s| {
        s.cells
            .iter()
            .map(|&i| cells[i].weight * chi.values()[i] * symbols[i])
    }));
    Ok(ExpectationCheck {
        observable: obs,
        lhs,
        rhs,
        scale,
    })
}
