//! Branch masses, seeded symmetry-breaking outcome selection, pointer readout,
//! state reduction and Born-rule statistics.
//!
//! Sampling uses ChaCha20 seeded with a 64-bit seed. Independent runs derive
//! their seeds from the master seed with [`run_seed`], so every record is
//! reproducible on its own and the statistics do not depend on execution
//! order.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{check_branches, classical_trajectory, BranchLabel, BranchSpec, ModelSpec};
use crate::error::{invalid, PrecsError, Result};
use crate::manifold::{overlap2_unchecked, Grid};
use crate::oracle::{classical_symbol, Observable};
use crate::par;
use crate::precs::{
    branch_supports, chi_squared, conditional_state, DistributionGrid, DistributionKind, SupportSet,
};

/// Largest total contested mass for which a measurement is allowed.
pub const MAX_CONTESTED_MASS: f64 = 0.05;

/// Name of the generator and the seed-splitting rule, recorded in outputs.
pub const GENERATOR: &str =
    "ChaCha20 (rand_chacha); run seed = splitmix64(master_seed + run_index * 0x9E3779B97F4A7C15)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMass {
    pub gamma: BranchLabel,
    /// χ² mass of the cells owned by this branch alone.
    pub mass: f64,
    /// Mass of ambiguous cells attributed to this branch by argmax |c_γ|²hᵞ.
    pub contested_mass: f64,
}

pub fn total_contested(masses: &[BranchMass]) -> f64 {
    masses.iter().map(|m| m.contested_mass).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub gamma_out: BranchLabel,
    /// Classical pointer symbol at Ξ^{γ_out}_T.
    pub pointer_value: f64,
    pub masses: Vec<BranchMass>,
    #[serde(rename = "T")]
    pub t: f64,
    pub seed: u64,
    pub reduced_state: String,
}

/// Partition the grid's χ² mass among the branches.
///
/// Every cell goes to the branch maximizing |c_γ|²hᵞ. It counts as that
/// branch's uncontested mass when it lies in exactly that branch's support,
/// or in no support with χ² ≤ ε; otherwise it is contested. Masses are
/// normalized by the grid integral of χ², so the partition sums to one.
pub fn branch_mass(chi2: &DistributionGrid, supports: &[SupportSet]) -> Result<Vec<BranchMass>> {
    let meta = chi2.meta();
    if meta.kind != DistributionKind::Chi2 {
        return invalid("branch masses require a chi2 distribution");
    }
    if supports.len() != meta.branches.len() {
        return invalid("one support per branch is required");
    }
    let grid = chi2.grid();
    let mut epsilon = None;
    for (s, b) in supports.iter().zip(&meta.branches) {
        if !s.grid().same_layout(grid) {
            return invalid("support and distribution grids differ");
        }
        if s.time != chi2.time() || s.gamma != b.gamma {
            return invalid("supports do not match the distribution's time and branch order");
        }
        if epsilon.is_some_and(|e| e != s.epsilon) {
            return invalid("supports use different epsilon");
        }
        epsilon = Some(s.epsilon);
    }
    let epsilon = epsilon.unwrap_or(0.0);
    let spec = *grid.spec();
    let centers = meta
        .branches
        .iter()
        .map(|b| {
            Ok((
                b.weight(),
                classical_trajectory(&meta.model, b, chi2.time())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let nb = meta.branches.len();
    // (owner, contested) per cell
    let owners = par::map_range(grid.len(), |i| {
        let p = &grid.cells()[i].point;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (k, (w, c)) in centers.iter().enumerate() {
            let v = w * overlap2_unchecked(&spec, p, c);
            if v > best_val {
                best_val = v;
                best = k;
            }
        }
        let members: Vec<usize> = (0..nb).filter(|&k| supports[k].contains(i)).collect();
        let contested = match members.len() {
            0 => chi2.values()[i] > epsilon,
            1 => members[0] != best,
            _ => true,
        };
        (best, contested)
    });

    let total = chi2.integral();
    if !(total > 0.0) {
        return Err(PrecsError::DegenerateConfiguration(
            "chi2 has no mass on the grid".into(),
        ));
    }
    let cells = grid.cells();
    let mut out = Vec::with_capacity(nb);
    for (k, b) in meta.branches.iter().enumerate() {
        let pick = |want_contested: bool| {
            par::compensated_sum(
                owners
                    .iter()
                    .enumerate()
                    .filter(|(_, &(o, c))| o == k && c == want_contested)
                    .map(|(i, _)| cells[i].weight * chi2.values()[i]),
            ) / total
        };
        out.push(BranchMass {
            gamma: b.gamma.clone(),
            mass: pick(false),
            contested_mass: pick(true),
        });
    }
    Ok(out)
}

/// Branch masses evaluated from scratch at time `t`.
pub fn masses_at(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    grid: &Arc<Grid>,
    epsilon: f64,
) -> Result<Vec<BranchMass>> {
    let chi = chi_squared(model, branches, t, grid)?;
    let supports = branch_supports(model, branches, t, grid, epsilon)?;
    branch_mass(&chi, &supports)
}

/// Largest |mass_γ - |c_γ|²|.
pub fn max_born_error(masses: &[BranchMass], branches: &[BranchSpec]) -> f64 {
    masses
        .iter()
        .zip(branches)
        .map(|(m, b)| (m.mass - b.weight()).abs())
        .fold(0.0, f64::max)
}

/// SplitMix64 finalizer applied to `master + index * golden`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pointer_observable_value(model: &ModelSpec, branch: &BranchSpec, t: f64) -> Result<f64> {
    let p = classical_trajectory(model, branch, t)?;
    classical_symbol(model, Observable::OXi, &p)
}

/// Select one outcome with probability mass_γ / Σ mass.
pub fn sample_outcome(
    masses: &[BranchMass],
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    seed: u64,
) -> Result<MeasurementRecord> {
    if masses.len() != branches.len()
        || masses.iter().zip(branches).any(|(m, b)| m.gamma != b.gamma)
    {
        return invalid("masses do not match the branch set");
    }
    let contested = total_contested(masses);
    if contested > MAX_CONTESTED_MASS {
        return Err(PrecsError::NotDecohered {
            contested,
            limit: MAX_CONTESTED_MASS,
        });
    }
    let total: f64 = masses.iter().map(|m| m.mass).sum();
    if !(total > 0.0) {
        return Err(PrecsError::DegenerateConfiguration(
            "branch masses sum to zero".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = masses.len() - 1;
    for (k, m) in masses.iter().enumerate() {
        acc += m.mass;
        if u < acc && m.mass > 0.0 {
            chosen = k;
            break;
        }
    }
    while masses[chosen].mass <= 0.0 {
        chosen -= 1;
    }
    let branch = &branches[chosen];
    Ok(MeasurementRecord {
        gamma_out: branch.gamma.clone(),
        pointer_value: pointer_observable_value(model, branch, t)?,
        masses: masses.to_vec(),
        t,
        seed,
        reduced_state: format!("|{}>", branch.gamma),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub state: BranchLabel,
    /// Weight of the selected branch in the conditional state at Ξ^{γ_out}_T.
    pub conditional_weight: f64,
    pub consistent: bool,
}

/// Post-measurement system state |γ_out⟩, with the consistency check that
/// the conditional state at the selected trajectory point is concentrated on
/// γ_out (weight ≥ 1 - 10ε).
pub fn reduce_state(
    record: &MeasurementRecord,
    model: &ModelSpec,
    branches: &[BranchSpec],
    epsilon: f64,
) -> Result<Reduction> {
    let branch = branches
        .iter()
        .find(|b| b.gamma == record.gamma_out)
        .ok_or_else(|| {
            PrecsError::InvalidArgument(format!("unknown branch {}", record.gamma_out))
        })?;
    let point = classical_trajectory(model, branch, record.t)?;
    let state = conditional_state(model, branches, record.t, &point)?;
    let weight = state.weight(&branch.gamma).unwrap_or(0.0);
    Ok(Reduction {
        state: branch.gamma.clone(),
        conditional_weight: weight,
        consistent: weight >= 1.0 - 10.0 * epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub gamma: BranchLabel,
    pub count: u64,
    pub frequency: f64,
    pub born: f64,
    pub mass: f64,
    pub abs_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornStatistics {
    pub n_runs: u64,
    pub seed: u64,
    pub generator: String,
    pub rows: Vec<FrequencyRow>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub contested_mass: f64,
    /// 1 - Σ mass_γ, removed by renormalizing the sampling probabilities.
    pub mass_deficit: f64,
}

/// Pearson chi-square of observed counts against expected probabilities;
/// categories with zero expectation are dropped.
pub fn pearson_chi_square(counts: &[u64], expected: &[f64]) -> (f64, usize, f64) {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut categories = 0usize;
    for (&c, &p) in counts.iter().zip(expected) {
        if p > 0.0 {
            let e = p * n as f64;
            stat += (c as f64 - e).powi(2) / e;
            categories += 1;
        }
    }
    let dof = categories.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        1.0 - dist.cdf(stat)
    };
    (stat, dof, p_value)
}

/// Repeated seeded measurements at time `t`.
pub fn born_statistics_from_masses(
    masses: &[BranchMass],
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    n_runs: u64,
    seed: u64,
) -> Result<(BornStatistics, Vec<MeasurementRecord>)> {
    if n_runs == 0 {
        return invalid("n_runs must be positive");
    }
    let records = par::map_range(n_runs as usize, |i| {
        sample_outcome(masses, model, branches, t, run_seed(seed, i as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let counts: Vec<u64> = branches
        .iter()
        .map(|b| records.iter().filter(|r| r.gamma_out == b.gamma).count() as u64)
        .collect();
    let born: Vec<f64> = branches.iter().map(BranchSpec::weight).collect();
    let (chi_square, degrees_of_freedom, p_value) = pearson_chi_square(&counts, &born);
    let rows = branches
        .iter()
        .zip(&counts)
        .zip(masses)
        .map(|((b, &count), m)| {
            let frequency = count as f64 / n_runs as f64;
            FrequencyRow {
                gamma: b.gamma.clone(),
                count,
                frequency,
                born: b.weight(),
                mass: m.mass,
                abs_deviation: (frequency - b.weight()).abs(),
            }
        })
        .collect();
    let mass_sum: f64 = masses.iter().map(|m| m.mass).sum();
    Ok((
        BornStatistics {
            n_runs,
            seed,
            generator: GENERATOR.to_string(),
            rows,
            chi_square,
            degrees_of_freedom,
            p_value,
            contested_mass: total_contested(masses),
            mass_deficit: 1.0 - mass_sum,
        },
        records,
    ))
}

pub fn born_statistics(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    grid: &Arc<Grid>,
    epsilon: f64,
    n_runs: u64,
    seed: u64,
) -> Result<(BornStatistics, Vec<MeasurementRecord>)> {
    check_branches(branches)?;
    let masses = masses_at(model, branches, t, grid, epsilon)?;
    born_statistics_from_masses(&masses, model, branches, t, n_runs, seed)
}

/// JSON-lines export, one record per line.
pub fn write_records<W: Write>(mut out: W, records: &[MeasurementRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| PrecsError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::qubit_branches;
    use crate::manifold::{build_plane_grid, ManifoldSpec};
    use std::f64::consts::PI;

    fn setup(g: f64, p: f64) -> (ModelSpec, Vec<BranchSpec>, Arc<Grid>) {
        let m = ModelSpec::qubit_boson(1.0, g).unwrap();
        let b = qubit_branches(p);
        let ManifoldSpec::Plane { half_width } = m.manifold_spec(&b) else {
            unreachable!()
        };
        (m, b, Arc::new(build_plane_grid(half_width, 256).unwrap()))
    }

    fn mass_sum(m: &[BranchMass]) -> f64 {
        m.iter().map(|x| x.mass + x.contested_mass).sum()
    }

    #[test]
    fn single_branch_masses() {
        let (m, b, grid) = setup(2.0, 1.0);
        let masses = masses_at(&m, &b, PI, &grid, 1e-3).unwrap();
        assert!((masses[0].mass - 1.0).abs() < 1e-6);
        assert!(masses[1].mass < 1e-6);
    }

    #[test]
    fn born_masses_at_half_period() {
        let (m, b, grid) = setup(2.0, 0.7);
        let masses = masses_at(&m, &b, PI, &grid, 1e-3).unwrap();
        assert!((masses[0].mass - 0.7).abs() < 1e-2);
        assert!((masses[1].mass - 0.3).abs() < 1e-2);
        assert!((mass_sum(&masses) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn initial_time_is_contested() {
        let (m, b, grid) = setup(2.0, 0.5);
        let masses = masses_at(&m, &b, 0.0, &grid, 1e-3).unwrap();
        assert!(total_contested(&masses) > 0.99);
        assert!((mass_sum(&masses) - 1.0).abs() < 1e-9);
        assert!(matches!(
            sample_outcome(&masses, &m, &b, 0.0, 1),
            Err(PrecsError::NotDecohered { .. })
        ));
    }

    #[test]
    fn certain_outcome_regardless_of_seed() {
        let masses = vec![
            BranchMass {
                gamma: BranchLabel::new("+"),
                mass: 1.0,
                contested_mass: 0.0,
            },
            BranchMass {
                gamma: BranchLabel::new("-"),
                mass: 0.0,
                contested_mass: 0.0,
            },
        ];
        let m = ModelSpec::qubit_boson(1.0, 2.0).unwrap();
        let b = qubit_branches(1.0);
        for seed in 0..200 {
            let r = sample_outcome(&masses, &m, &b, PI, seed).unwrap();
            assert_eq!(r.gamma_out.0, "+");
            assert_eq!(r.reduced_state, "|+>");
            assert!((r.pointer_value + 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_is_identical() {
        let (m, b, grid) = setup(2.0, 0.5);
        let masses = masses_at(&m, &b, PI, &grid, 1e-3).unwrap();
        let a = sample_outcome(&masses, &m, &b, PI, 99).unwrap();
        let c = sample_outcome(&masses, &m, &b, PI, 99).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn binomial_frequency() {
        let (m, b, grid) = setup(2.0, 0.7);
        let (stats, records) = born_statistics(&m, &b, PI, &grid, 1e-3, 10_000, 12345).unwrap();
        assert_eq!(records.len(), 10_000);
        assert!((stats.rows[0].frequency - 0.7).abs() < 0.014);
    }

    #[test]
    fn run_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| run_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn chi_square_drops_empty_categories() {
        let (stat, dof, p) = pearson_chi_square(&[100, 0], &[1.0, 0.0]);
        assert_eq!((stat, dof, p), (0.0, 0, 1.0));
        let (_, dof, p) = pearson_chi_square(&[500, 500], &[0.5, 0.5]);
        assert_eq!(dof, 1);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branch_mass_validates_inputs() {
        let (m, b, grid) = setup(2.0, 0.5);
        let chi = chi_squared(&m, &b, PI, &grid).unwrap();
        let s = branch_supports(&m, &b, PI, &grid, 1e-3).unwrap();
        assert!(branch_mass(&chi, &s[..1]).is_err());
        let later = branch_supports(&m, &b, 1.0, &grid, 1e-3).unwrap();
        assert!(branch_mass(&chi, &later).is_err());
        let h = crate::dynamics::husimi_branch(&m, &b[0], PI, &grid).unwrap();
        assert!(branch_mass(&h, &s).is_err());
    }

    #[test]
    fn records_serialize_as_json_lines() {
        let (m, b, grid) = setup(2.0, 0.5);
        let (_, records) = born_statistics(&m, &b, PI, &grid, 1e-3, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        let first: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
        for key in [
            "gamma_out",
            "pointer_value",
            "masses",
            "T",
            "seed",
            "reduced_state",
        ] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn reduction_consistency() {
        let (m, b, grid) = setup(2.0, 0.7);
        let masses = masses_at(&m, &b, PI, &grid, 1e-3).unwrap();
        for seed in [1, 2, 3, 4] {
            let r = sample_outcome(&masses, &m, &b, PI, seed).unwrap();
            let red = reduce_state(&r, &m, &b, 1e-3).unwrap();
            assert_eq!(red.state, r.gamma_out);
            assert!(red.consistent);
            assert!(red.conditional_weight >= 0.99);
        }
    }
}
