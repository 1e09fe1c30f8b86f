use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use precs_core::dynamics::{integrate_eom, uniform_times};
use precs_core::io::fmt_real;
use precs_core::manifold::{build_plane_grid, build_sphere_grid};
use precs_core::outcome::{
    born_statistics_from_masses, masses_at, max_born_error, write_records, BornStatistics,
    BranchMass,
};
use precs_core::par;
use precs_core::precs::{
    chi_squared, count_modes, decoherence_intervals, resolution_ratio, DecoherenceReport,
};
use precs_core::{BranchSpec, Grid, ManifoldSpec, ModelSpec, PrecsError};
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::verify::{build_report, VerifyReport};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub formats: Option<BTreeSet<Format>>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            config.outputs.directory = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(formats) = &self.formats {
            config.outputs.formats = formats.clone();
        }
    }
}

/// Validated config with its model and branches built.
pub struct Context {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub branches: Vec<BranchSpec>,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let model = config.model()?;
        let branches = config.branch_specs()?;
        Ok(Context {
            config,
            model,
            branches,
        })
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        grid_for(&self.config, &self.model, &self.branches)
    }

    fn dir(&self) -> &Path {
        &self.config.outputs.directory
    }

    fn prepare_output(&self) -> Result<(), CliError> {
        fs::create_dir_all(self.dir()).map_err(|e| CliError::io(self.dir(), e))
    }

    fn write<F>(&self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.dir().join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        body(&mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)
                .map_err(|e| CliError::Config(format!("output: {e}")))?;
            writeln!(out).map_err(|e| CliError::Config(format!("output: {e}")))
        })
    }
}

fn grid_for(
    config: &ExperimentConfig,
    model: &ModelSpec,
    branches: &[BranchSpec],
) -> Result<Arc<Grid>, CliError> {
    let grid = match model.manifold_spec(branches) {
        ManifoldSpec::Plane { half_width } => {
            build_plane_grid(config.grid.half_width.unwrap_or(half_width), config.grid.n1)
        }
        ManifoldSpec::Sphere { j } => build_sphere_grid(config.grid.n1, config.grid.n2, j),
    };
    Ok(Arc::new(grid.map_err(|e| CliError::config("grid", e))?))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::from(PrecsError::from(e))
}

/// File-name fragment for a branch label.
fn slug(label: &str) -> String {
    match label {
        "+" => "plus".into(),
        "-" => "minus".into(),
        other => other
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub index: usize,
    pub t: f64,
    pub integral: f64,
    pub modes: usize,
    pub peak: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub model: ModelSpec,
    pub branches: Vec<BranchSpec>,
    pub epsilon: f64,
    pub resolution: (usize, usize),
    pub snapshots: Vec<Snapshot>,
    pub decoherence: DecoherenceReport,
}

/// χ̄² snapshots, trajectories and decoherence intervals.
pub fn run_simulate(ctx: &Context) -> Result<SimulationSummary, CliError> {
    ctx.prepare_output()?;
    let cfg = &ctx.config;
    let model = &ctx.model;
    let grid = ctx.grid()?;
    let t_max = cfg.t_max(model);

    let mut snapshots = Vec::new();
    for (index, t) in uniform_times(t_max, cfg.time.n_steps)
        .into_iter()
        .enumerate()
    {
        let chi = chi_squared(model, &ctx.branches, t, &grid)?;
        if cfg.wants(Format::Csv) {
            ctx.write(&format!("chi2_{index:03}.csv"), |out| {
                Ok(chi.write_csv(out, true)?)
            })?;
        }
        if cfg.wants(Format::Ppm) {
            ctx.write(&format!("chi2_{index:03}.ppm"), |out| {
                Ok(chi.write_ppm(out)?)
            })?;
        }
        let peak = chi.with_metric().into_iter().fold(0.0, f64::max);
        snapshots.push(Snapshot {
            index,
            t,
            integral: chi.integral(),
            modes: count_modes(&chi, cfg.epsilon),
            peak,
        });
    }

    // trajectories and intervals cover at least one full period
    let t_grid = uniform_times(t_max.max(model.period()), cfg.time.interval_steps);
    if cfg.wants(Format::Csv) {
        let trajectories = par::map_slice(&ctx.branches, |b| integrate_eom(model, b, &t_grid))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        for (k, traj) in trajectories.iter().enumerate() {
            ctx.write(
                &format!("trajectory_{k}_{}.csv", slug(&traj.gamma.0)),
                |out| Ok(traj.write_csv(out)?),
            )?;
        }
    }
    let decoherence = decoherence_intervals(model, &ctx.branches, &t_grid, &grid, cfg.epsilon)?;
    let summary = SimulationSummary {
        model: *model,
        branches: ctx.branches.clone(),
        epsilon: cfg.epsilon,
        resolution: grid.resolution(),
        snapshots,
        decoherence,
    };
    if cfg.wants(Format::Json) {
        ctx.write("decoherence.json", |out| {
            summary.decoherence.write_json(&mut *out)?;
            writeln!(out).map_err(io_err)
        })?;
        ctx.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

/// Run the oracle cross-checks and write the report. Failed bounds are
/// reported, not raised; see [`VerifyReport::ensure_pass`].
pub fn run_verify(ctx: &Context) -> Result<VerifyReport, CliError> {
    ctx.prepare_output()?;
    let report = build_report(ctx)?;
    ctx.write_json("verify_report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub model: ModelSpec,
    #[serde(rename = "T")]
    pub t: f64,
    pub epsilon: f64,
    pub masses: Vec<BranchMass>,
    pub statistics: BornStatistics,
}

/// Seeded outcome sampling at the measurement time.
pub fn run_sample(ctx: &Context) -> Result<SampleSummary, CliError> {
    let cfg = &ctx.config;
    let settings = cfg.sample.as_ref().ok_or_else(|| {
        CliError::Config("sample: block is required for the sample command".into())
    })?;
    let model = &ctx.model;
    let t = settings.t.unwrap_or_else(|| cfg.t_max(model));
    let grid = ctx.grid()?;
    let masses = masses_at(model, &ctx.branches, t, &grid, cfg.epsilon)?;
    let (statistics, records) =
        born_statistics_from_masses(&masses, model, &ctx.branches, t, settings.n_runs, cfg.seed)?;
    ctx.prepare_output()?;
    let summary = SampleSummary {
        model: *model,
        t,
        epsilon: cfg.epsilon,
        masses,
        statistics,
    };
    if cfg.wants(Format::Json) {
        ctx.write("records.jsonl", |out| Ok(write_records(out, &records)?))?;
        ctx.write_json("statistics.json", &summary)?;
    }
    if cfg.wants(Format::Csv) {
        ctx.write("frequencies.csv", |out| {
            writeln!(out, "gamma,count,frequency,born,mass,abs_deviation").map_err(io_err)?;
            for r in &summary.statistics.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.gamma,
                    r.count,
                    fmt_real(r.frequency),
                    fmt_real(r.born),
                    fmt_real(r.mass),
                    fmt_real(r.abs_deviation)
                )
                .map_err(io_err)?;
            }
            Ok(())
        })?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub model: ModelSpec,
    pub t: f64,
    pub tau_d: Option<f64>,
    pub resolution_ratio: f64,
    pub max_born_error: f64,
    pub contested_mass: f64,
    pub peak: f64,
    pub intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub epsilon: f64,
    pub tau_epsilon: f64,
    pub rows: Vec<SweepRow>,
}

/// One row per swept parameter value, plus optional heatmaps at the evaluation time.
pub fn run_sweep(ctx: &Context) -> Result<SweepSummary, CliError> {
    let cfg = &ctx.config;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: block is required for the sweep command".into()))?;
    let eps = cfg.epsilon;
    let tau_eps = sweep.tau_epsilon.unwrap_or(eps);
    ctx.prepare_output()?;

    let points = par::map_slice(&sweep.values, |&value| -> Result<_, CliError> {
        let model = cfg.model.with_parameter(sweep.parameter, value)?.build()?;
        let grid = grid_for(cfg, &model, &ctx.branches)?;
        let t = sweep.t.unwrap_or(model.period() / 2.0);
        let t_grid = uniform_times(model.period(), cfg.time.interval_steps);
        let report = decoherence_intervals(&model, &ctx.branches, &t_grid, &grid, tau_eps)?;
        let ratio = resolution_ratio(&model, &ctx.branches, t, eps)?;
        let masses = masses_at(&model, &ctx.branches, t, &grid, eps)?;
        let chi = chi_squared(&model, &ctx.branches, t, &grid)?;
        let row = SweepRow {
            value,
            model,
            t,
            tau_d: report.tau_d,
            resolution_ratio: ratio,
            max_born_error: max_born_error(&masses, &ctx.branches),
            contested_mass: masses.iter().map(|m| m.contested_mass).sum(),
            peak: chi.with_metric().into_iter().fold(0.0, f64::max),
            intervals: report.intervals,
        };
        Ok((row, chi))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    for (k, (_, chi)) in points.iter().enumerate() {
        if cfg.wants(Format::Ppm) {
            ctx.write(&format!("sweep_{k:03}.ppm"), |out| Ok(chi.write_ppm(out)?))?;
        }
        if cfg.wants(Format::Csv) {
            ctx.write(&format!("sweep_chi2_{k:03}.csv"), |out| {
                Ok(chi.write_csv(out, true)?)
            })?;
        }
    }
    let summary = SweepSummary {
        parameter: sweep.parameter.name().into(),
        epsilon: eps,
        tau_epsilon: tau_eps,
        rows: points.into_iter().map(|(row, _)| row).collect(),
    };
    if cfg.wants(Format::Csv) {
        ctx.write("sweep.csv", |out| {
            writeln!(
                out,
                "{},tau_d,resolution_ratio,max_born_error",
                summary.parameter
            )
            .map_err(io_err)?;
            for r in &summary.rows {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_real(r.value),
                    fmt_real(r.tau_d.unwrap_or(f64::NAN)),
                    fmt_real(r.resolution_ratio),
                    fmt_real(r.max_born_error)
                )
                .map_err(io_err)?;
            }
            Ok(())
        })?;
    }
    if cfg.wants(Format::Json) {
        ctx.write_json("sweep.json", &summary)?;
    }
    Ok(summary)
}
