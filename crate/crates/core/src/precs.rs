//! Parametric representation with environmental coherent states: the ECS
//! density χ²_t(Ω), conditional system states, ε-supports and their
//! disjointness, decoherence intervals and the classical-limit resolution
//! ratio.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    branch_phase_at, check_branches, classical_trajectory, trajectory_point, BranchLabel,
    BranchSpec, ModelSpec,
};
use crate::error::{invalid, PrecsError, Result};
use crate::io::{fmt_real, write_ppm};
use crate::manifold::{
    distance, overlap2_unchecked, overlap_unchecked, Grid, ManifoldSpec, PhasePoint,
};
use crate::par;

/// Default support threshold ε.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Below this value of χ the conditional state is undefined.
pub const CHI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    HBranch,
    Chi2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMeta {
    pub model: ModelSpec,
    /// The single branch for `HBranch`, the full set for `Chi2`.
    pub branches: Vec<BranchSpec>,
    pub kind: DistributionKind,
}

/// Per-cell values of a distribution on a grid (without the metric factor).
#[derive(Debug, Clone)]
pub struct DistributionGrid {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: f64,
    meta: DistributionMeta,
}

impl DistributionGrid {
    pub(crate) fn new(
        grid: Arc<Grid>,
        values: Vec<f64>,
        time: f64,
        meta: DistributionMeta,
    ) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        DistributionGrid {
            grid,
            values,
            time,
            meta,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn meta(&self) -> &DistributionMeta {
        &self.meta
    }

    pub fn kind(&self) -> DistributionKind {
        self.meta.kind
    }

    pub fn integral(&self) -> f64 {
        crate::manifold::integrate(&self.grid, &self.values).expect("lengths agree by construction")
    }

    /// χ̄² = det(m)·χ², the density per unit coordinate area.
    pub fn with_metric(&self) -> Vec<f64> {
        let m = self.grid.spec().metric_factor();
        self.values.iter().map(|v| v * m).collect()
    }

    /// CSV export: `idx,coord1,coord2,weight,value`.
    pub fn write_csv<W: Write>(&self, out: W, include_metric: bool) -> Result<()> {
        let values = if include_metric {
            self.with_metric()
        } else {
            self.values.clone()
        };
        write_distribution_csv(out, &self.grid, &values)
    }

    /// Binary P6 heatmap of χ̄². Rows run over the second coordinate (im or φ),
    /// highest first; columns over the first (re or θ).
    pub fn write_ppm<W: Write>(&self, out: W) -> Result<()> {
        let (n1, n2) = self.grid.resolution();
        let scaled = self.with_metric();
        let mut image = Vec::with_capacity(scaled.len());
        for row in (0..n2).rev() {
            for col in 0..n1 {
                image.push(scaled[col * n2 + row]);
            }
        }
        write_ppm(out, n1, n2, &image)
    }
}

fn write_distribution_csv<W: Write>(mut out: W, grid: &Grid, values: &[f64]) -> Result<()> {
    writeln!(out, "idx,coord1,coord2,weight,value")?;
    for (i, (c, v)) in grid.cells().iter().zip(values).enumerate() {
        let (a, b) = c.point.coords();
        writeln!(
            out,
            "{i},{},{},{},{}",
            fmt_real(a),
            fmt_real(b),
            fmt_real(c.weight),
            fmt_real(*v)
        )?;
    }
    Ok(())
}

/// The ε-support of one branch Husimi function at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub gamma: BranchLabel,
    pub epsilon: f64,
    pub cells: BTreeSet<usize>,
    pub time: f64,
    /// Trajectory point Ξᵞ_t the support is centred on.
    pub center: PhasePoint,
    grid: Arc<Grid>,
}

impl SupportSet {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.cells.contains(&idx)
    }

    /// Analytic membership at an arbitrary manifold point: hᵞ_t(p) > ε.
    pub fn contains_point(&self, p: &PhasePoint) -> Result<bool> {
        let spec = self.grid.spec();
        Ok(crate::manifold::overlap2(spec, &self.center, p)? > self.epsilon)
    }

    /// CSV export of the member cell indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "idx")?;
        for i in &self.cells {
            writeln!(out, "{i}")?;
        }
        Ok(())
    }
}

/// Normalized system state |φ_t(Ω)⟩ in the branch basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalState {
    pub labels: Vec<BranchLabel>,
    pub amplitudes: Vec<Complex64>,
    pub point: PhasePoint,
    pub time: f64,
}

impl ConditionalState {
    pub fn weight(&self, gamma: &BranchLabel) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == gamma)
            .map(|i| self.amplitudes[i].norm_sqr())
    }
}

/// χ²_t(Ω) = Σ_γ |c_γ|² hᵞ_t(Ω) on every cell.
pub fn chi_squared(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    grid: &Arc<Grid>,
) -> Result<DistributionGrid> {
    check_branches(branches)?;
    model.check_grid(grid)?;
    let centers = branches
        .iter()
        .map(|b| Ok((b.weight(), classical_trajectory(model, b, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let spec = *grid.spec();
    let values = grid.map_points(|p| {
        centers
            .iter()
            .map(|(w, c)| w * overlap2_unchecked(&spec, p, c))
            .sum()
    });
    Ok(DistributionGrid::new(
        grid.clone(),
        values,
        t,
        DistributionMeta {
            model: *model,
            branches: branches.to_vec(),
            kind: DistributionKind::Chi2,
        },
    ))
}

/// |φ_t(Ω)⟩ with amplitudes c_γ e^{iφᵞ_t}⟨Ω|Ξᵞ_t⟩ / χ_t(Ω).
pub fn conditional_state(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    point: &PhasePoint,
) -> Result<ConditionalState> {
    check_branches(branches)?;
    model.check_point(point)?;
    let spec = model.manifold_spec(branches);
    let mut amplitudes = Vec::with_capacity(branches.len());
    for b in branches {
        let center = classical_trajectory(model, b, t)?;
        let ov = overlap_unchecked(&spec, point, &center);
        let phase = branch_phase_at(model, b, t)?;
        amplitudes.push(b.c * Complex64::from_polar(1.0, phase) * ov);
    }
    let chi = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(chi > CHI_FLOOR) {
        return Err(PrecsError::DegeneratePoint { chi });
    }
    for a in &mut amplitudes {
        *a /= chi;
    }
    Ok(ConditionalState {
        labels: branches.iter().map(|b| b.gamma.clone()).collect(),
        amplitudes,
        point: *point,
        time: t,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    Ok(())
}

/// Cells where a branch Husimi function exceeds ε.
pub fn support(distribution: &DistributionGrid, epsilon: f64) -> Result<SupportSet> {
    check_epsilon(epsilon)?;
    let meta = distribution.meta();
    if meta.kind != DistributionKind::HBranch || meta.branches.len() != 1 {
        return invalid("support requires a single-branch Husimi distribution");
    }
    let branch = &meta.branches[0];
    let cells = distribution
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > epsilon)
        .map(|(i, _)| i)
        .collect();
    Ok(SupportSet {
        gamma: branch.gamma.clone(),
        epsilon,
        cells,
        time: distribution.time(),
        center: classical_trajectory(&meta.model, branch, distribution.time())?,
        grid: distribution.grid().clone(),
    })
}

/// Support of every branch, evaluated directly on the grid.
pub fn branch_supports(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    grid: &Arc<Grid>,
    epsilon: f64,
) -> Result<Vec<SupportSet>> {
    branches
        .iter()
        .map(|b| support(&crate::dynamics::husimi_branch(model, b, t, grid)?, epsilon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disjointness {
    pub disjoint: bool,
    pub overlap_cells: usize,
}

/// Grid intersection of two supports, combined with the grid-independent
/// check that neither trajectory point lies inside the other support.
pub fn disjoint(s1: &SupportSet, s2: &SupportSet) -> Result<Disjointness> {
    if !s1.grid.same_layout(&s2.grid) {
        return invalid("supports are defined on different grids");
    }
    if s1.epsilon != s2.epsilon || s1.time != s2.time {
        return invalid("supports differ in epsilon or time");
    }
    let (small, large) = if s1.cells.len() <= s2.cells.len() {
        (s1, s2)
    } else {
        (s2, s1)
    };
    let overlap_cells = small.cells.iter().filter(|i| large.contains(**i)).count();
    let analytic = !s1.contains_point(&s2.center)? && !s2.contains_point(&s1.center)?;
    Ok(Disjointness {
        disjoint: overlap_cells == 0 && analytic,
        overlap_cells,
    })
}

/// True when all pairs of supports are disjoint.
pub fn all_disjoint(supports: &[SupportSet]) -> Result<bool> {
    for (i, a) in supports.iter().enumerate() {
        for b in &supports[i + 1..] {
            if !disjoint(a, b)?.disjoint {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceReport {
    pub epsilon: f64,
    pub intervals: Vec<[f64; 2]>,
    /// Start of the first interval; `None` when supports never separate.
    pub tau_d: Option<f64>,
    /// Supports merge again after separating.
    pub recoherence: bool,
}

impl DecoherenceReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| PrecsError::Io(e.to_string()))
    }
}

/// Maximal runs of `t_grid` on which all ε-supports are pairwise disjoint.
pub fn decoherence_intervals(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t_grid: &[f64],
    grid: &Arc<Grid>,
    epsilon: f64,
) -> Result<DecoherenceReport> {
    check_branches(branches)?;
    check_epsilon(epsilon)?;
    model.check_grid(grid)?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must be non-empty and strictly increasing");
    }
    let flags = par::map_slice(t_grid, |&t| -> Result<bool> {
        // Parallelism is over times; keep the per-cell maps sequential.
        par::with_execution(par::Execution::Sequential, || {
            all_disjoint(&branch_supports(model, branches, t, grid, epsilon)?)
        })
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?;

    let mut intervals = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &flag) in flags.iter().enumerate() {
        match (flag, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                intervals.push([t_grid[s], t_grid[k - 1]]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push([t_grid[s], *t_grid.last().unwrap()]);
    }
    let recoherence = intervals
        .first()
        .is_some_and(|_| !flags.last().copied().unwrap_or(false));
    Ok(DecoherenceReport {
        epsilon,
        tau_d: intervals.first().map(|iv| iv[0]),
        intervals,
        recoherence,
    })
}

/// Diameter of the ε-level set of a coherent-state Husimi function.
pub fn support_diameter(spec: &ManifoldSpec, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(match *spec {
        ManifoldSpec::Plane { .. } => 2.0 * (1.0 / epsilon).ln().sqrt(),
        ManifoldSpec::Sphere { j } => {
            // ((1 + cos Θ)/2)^{2J} = ε  ⇒  Θ = 2 acos(ε^{1/(4J)})
            let radius = 2.0 * epsilon.powf(1.0 / (2.0 * j.twice() as f64)).acos();
            (2.0 * radius).min(PI)
        }
    })
}

/// Largest support diameter over the smallest pairwise separation of the
/// trajectory points. Tends to zero in the classical limit.
pub fn resolution_ratio(
    model: &ModelSpec,
    branches: &[BranchSpec],
    t: f64,
    epsilon: f64,
) -> Result<f64> {
    check_branches(branches)?;
    let diameter = support_diameter(&model.manifold_spec(branches), epsilon)?;
    let points = branches
        .iter()
        .map(|b| classical_trajectory(model, b, t))
        .collect::<Result<Vec<_>>>()?;
    let mut min_sep = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            min_sep = min_sep.min(distance(a, b)?);
        }
    }
    if branches.len() < 2 || !(min_sep > 1e-12) {
        return Err(PrecsError::DegenerateConfiguration(format!(
            "branch trajectories are not separated at t = {t}"
        )));
    }
    Ok(diameter / min_sep)
}

/// Number of 4-connected components of `{value > threshold}`.
pub fn count_modes(distribution: &DistributionGrid, threshold: f64) -> usize {
    let grid = distribution.grid();
    let values = distribution.values();
    let mut seen = vec![false; values.len()];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..values.len() {
        if seen[start] || values[start] <= threshold {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            for nb in grid.neighbors(idx) {
                if !seen[nb] && values[nb] > threshold {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}

/// Closed-form separation helper used by callers that only need trajectory
/// points (no grid).
pub fn branch_points(model: &ModelSpec, branches: &[BranchSpec], t: f64) -> Vec<PhasePoint> {
    branches
        .iter()
        .map(|b| trajectory_point(model, b.omega, t))
        .collect()
}
