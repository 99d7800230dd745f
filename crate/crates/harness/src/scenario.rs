//! Executes one configured run and writes its CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chemoflux_core::diagnostics::{axial_marginal, first_moment, RunOutcome, RunReport, Trajectory};
use chemoflux_core::problem::thresholds;
use chemoflux_core::solver1d::Solver1d;
use chemoflux_core::solver_cyl::SolverCyl;
use chemoflux_core::{Domain, Grid1D, GridCyl, ThresholdReport};
use schemars::JsonSchema;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const REPORT_FILE: &str = "report.json";

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, JsonSchema)]
pub struct ScenarioReport {
    pub name: String,
    pub config: RunConfig,
    /// First moment of the initial data.
    pub phi0: f64,
    /// Largest axial marginal of the initial data (cylinder only).
    pub m0: Option<f64>,
    pub run: RunReport,
    pub thresholds: ThresholdReport,
}

#[derive(Debug, Clone)]
pub enum ScenarioGrid {
    Interval(Grid1D),
    Cylinder(GridCyl),
}

impl ScenarioGrid {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let g = &config.grid;
        Ok(match config.problem.domain {
            Domain::Interval { length } => ScenarioGrid::Interval(Grid1D::new(length, g.n, g.ratio)?),
            Domain::Cylinder { length, radius, dim } => {
                ScenarioGrid::Cylinder(GridCyl::new(length, radius, dim, g.n, g.nr, g.ratio)?)
            }
        })
    }

    /// `(x, rho)` of every cell in field order.
    pub fn cell_positions(&self) -> Vec<(f64, f64)> {
        match self {
            ScenarioGrid::Interval(g) => g.centers().iter().map(|&x| (x, 0.0)).collect(),
            ScenarioGrid::Cylinder(g) => g
                .radial_centers()
                .iter()
                .flat_map(|&rho| g.axial().centers().iter().map(move |&x| (x, rho)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub report: ScenarioReport,
    pub trajectory: Trajectory,
    pub grid: ScenarioGrid,
}

impl ScenarioResult {
    pub fn outcome_is_physical(&self) -> bool {
        self.report.run.outcome.is_physical()
    }
}

/// Exit code for a run with this outcome: 0 for a classified physical outcome,
/// [`EXIT_NUMERICAL`] otherwise.
pub fn exit_code(outcome: RunOutcome) -> u8 {
    if outcome.is_physical() {
        0
    } else {
        EXIT_NUMERICAL
    }
}

/// Exit code for unreadable or invalid input.
pub const EXIT_CONFIG: u8 = 1;
/// Exit code for a run ending in a numerical failure.
pub const EXIT_NUMERICAL: u8 = 3;
/// Exit code for a preset whose gates did not all pass.
pub const EXIT_GATE: u8 = 4;

/// Runs the configured scenario in memory.
pub fn run_scenario(config: &RunConfig) -> Result<ScenarioResult> {
    config.validate()?;
    let f = config.problem.nonlinearity;
    let mut settings = config.record.clone();
    settings.chi = config.problem.chi;
    let grid = ScenarioGrid::build(config)?;
    let (phi0, m0, (trajectory, mut run)) = match &grid {
        ScenarioGrid::Interval(g) => {
            let c0 = config.initial.build_1d(g, config.mass, config.seed);
            let phi0 = first_moment(g, &c0);
            let solver = Solver1d::new(g.clone(), f, config.step)?;
            (phi0, None, solver.run(c0, &config.stop, &settings)?)
        }
        ScenarioGrid::Cylinder(g) => {
            let c0 = config.initial.build_cyl(g, config.mass, config.seed);
            let phi0 = first_moment(g, &c0);
            let m0 = axial_marginal(g, &c0).into_iter().fold(0.0, f64::max);
            let solver = SolverCyl::new(g.clone(), f, config.step)?;
            (phi0, Some(m0), solver.run(c0, &config.stop, &settings)?)
        }
    };
    let thresholds = thresholds(&config.problem, config.mass, phi0, config.lyapunov_p, m0)?;
    run.apply_thresholds(&thresholds, phi0, config.tstar_slack);
    let report = ScenarioReport {
        name: config.name.clone(),
        config: config.clone(),
        phi0,
        m0,
        run,
        thresholds,
    };
    Ok(ScenarioResult { report, trajectory, grid })
}

/// Formats with 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn p_label(p: f64) -> String {
    format!("lp_{p}")
}

pub fn timeseries_header(p_list: &[f64]) -> Vec<String> {
    let mut header: Vec<String> =
        ["t", "dt", "mass", "entropy", "linf"].iter().map(|s| s.to_string()).collect();
    header.extend(p_list.iter().map(|&p| p_label(p)));
    header.extend(["phi", "a", "u", "c_left", "c_right"].iter().map(|s| s.to_string()));
    header
}

pub fn write_timeseries<W: Write>(out: W, p_list: &[f64], trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(timeseries_header(p_list))?;
    for r in &trajectory.records {
        let mut row = vec![num(r.t), num(r.dt), num(r.mass), num(r.entropy), num(r.linf)];
        row.extend(r.lp_norms.iter().map(|&(_, v)| num(v)));
        row.extend([num(r.phi), num(r.a), num(r.u), num(r.c_left), num(r.c_right)]);
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Long format: one row per cell and snapshot.
pub fn write_snapshots<W: Write>(out: W, grid: &ScenarioGrid, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "rho", "c"])?;
    let positions = grid.cell_positions();
    for snap in &trajectory.snapshots {
        for (&(x, rho), &c) in positions.iter().zip(&snap.c) {
            w.write_record([num(snap.t), num(x), num(rho), num(c)])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })
}

/// Writes the enabled artifacts into `dir` and returns their paths.
pub fn write_outputs(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
    let config = &result.report.config;
    let mut written = Vec::new();
    if config.output.write_timeseries {
        let path = dir.join(TIMESERIES_FILE);
        write_timeseries(create(&path)?, &config.record.p_list, &result.trajectory)?;
        written.push(path);
    }
    if config.output.write_snapshots {
        let path = dir.join(SNAPSHOTS_FILE);
        write_snapshots(create(&path)?, &result.grid, &result.trajectory)?;
        written.push(path);
    }
    let path = dir.join(REPORT_FILE);
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, &result.report)?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
    written.push(path);
    Ok(written)
}
