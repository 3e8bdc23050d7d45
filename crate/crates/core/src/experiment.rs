//! Run orchestration: single runs, oracle comparisons and parameter sweeps.
//!
//! Every command writes its artifacts under an output directory. Sweep
//! reports are computed from the stored per-run files only, so re-running
//! the aggregation on a finished sweep reproduces the report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{load_config, ConfigError, OracleKind, RunConfig, UInit};
use crate::diagnostics::{volume_drift_bound, BoundChecker, BOUND_SLACK};
use crate::geometry::{extract_contour, hausdorff_to_circle, InterfaceCurve, Polyline};
use crate::integrator::{run_until_with, StepError};
use crate::oracle::{self, OracleError, OracleTrajectory, RadialSetup};
use crate::output::{
    read_series, write_curve_csv, write_vtk, GeometryColumns, OutputError, SeriesRow, SeriesWriter,
};
use crate::physics::{ModelError, SimState, Variant};

pub const SERIES_FILE: &str = "series.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CURVE_FILE: &str = "curve_final.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
    #[error("{0}")]
    Invariant(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Comparison(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Setup(_) => 2,
            Self::Invariant(_) => 3,
            Self::Numerical(_) => 4,
            Self::Comparison(_) => 5,
            Self::Oracle(_) | Self::Output(_) | Self::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn classify(e: StepError) -> ExperimentError {
    match e {
        StepError::NonFinite { .. }
        | StepError::Model(ModelError::NonFinite { .. })
        | StepError::Helmholtz(_) => ExperimentError::Numerical(e.to_string()),
        StepError::BadTimeStep(_) | StepError::BadSafety(_) | StepError::EndBeforeStart { .. } => {
            ExperimentError::Setup(e.to_string())
        }
        _ => ExperimentError::Invariant(e.to_string()),
    }
}

/// Everything a finished (or aborted) run leaves behind in memory.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<SeriesRow>,
    pub steps: usize,
    pub dt: f64,
    pub state: SimState,
    pub final_curve: Option<InterfaceCurve>,
}

/// A failed run; `record` holds what was recorded before the failure.
#[derive(Debug)]
pub struct FailedRun {
    pub error: ExperimentError,
    pub record: Option<RunRecord>,
}

impl From<Box<FailedRun>> for ExperimentError {
    fn from(f: Box<FailedRun>) -> Self {
        f.error
    }
}

fn failed(error: ExperimentError, record: Option<RunRecord>) -> Box<FailedRun> {
    Box::new(FailedRun { error, record })
}

fn with_geometry(cfg: &RunConfig) -> bool {
    cfg.output.geometry && cfg.ndim() == 2
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_curve(path: &Path, curve: &InterfaceCurve) -> Result<(), ExperimentError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    write_curve_csv(&mut w, curve).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_snapshot(path: &Path, state: &SimState) -> Result<(), ExperimentError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let title = format!("phase field and concentration at t = {}", state.t);
    write_vtk(&mut w, &title, &[("phi", &state.phi), ("u", &state.u)]).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Run a config, optionally writing artifacts to `out`.
///
/// `hook` sees every recorded row after the bound checks and may stop the
/// run; its message becomes a [`ExperimentError::Comparison`].
pub fn simulate_with<H>(
    cfg: &RunConfig,
    out: Option<&Path>,
    mut hook: H,
) -> Result<RunRecord, Box<FailedRun>>
where
    H: FnMut(&SeriesRow) -> Result<(), String>,
{
    let p = cfg.model_params();
    let state = cfg.initial_state().map_err(|e| failed(e.into(), None))?;
    let geometry = with_geometry(cfg);

    let mut writer = None;
    if let Some(dir) = out {
        let prep = || -> Result<_, ExperimentError> {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
            let path = dir.join(SERIES_FILE);
            let f = File::create(&path).map_err(io_err(&path))?;
            SeriesWriter::new(BufWriter::new(f)).map_err(io_err(&path))
        };
        writer = Some(prep().map_err(|e| failed(e, None))?);
    }

    let mut checker = BoundChecker::new(&state, &p);
    let mut rows: Vec<SeriesRow> = Vec::new();
    let mut side: Option<ExperimentError> = None;
    let mut last_curve: Option<InterfaceCurve> = None;
    let snapshot_every = cfg.output.snapshot_every;

    let result = run_until_with(
        state,
        &p,
        &cfg.policy(),
        cfg.stepping.t_end,
        cfg.stepping.cadence,
        |s, rep| {
            let curve = if geometry {
                Some(extract_contour(&s.phi, 0.5).expect("2D field"))
            } else {
                None
            };
            let row = SeriesRow {
                report: *rep,
                geometry: curve.as_ref().map(GeometryColumns::from),
            };
            last_curve = curve;
            let stop = |side: &mut Option<ExperimentError>, e: ExperimentError, what: &str| {
                *side = Some(e);
                StepError::Invariant {
                    t: rep.t,
                    what: what.to_string(),
                }
            };
            if let (Some(w), Some(dir)) = (writer.as_mut(), out) {
                if let Err(e) = w.push(&row) {
                    return Err(stop(&mut side, io_err(&dir.join(SERIES_FILE))(e), "output"));
                }
                if snapshot_every > 0 && rows.len().is_multiple_of(snapshot_every) {
                    let path = dir.join(format!("snapshot_{:05}.vtk", rows.len()));
                    if let Err(e) = write_snapshot(&path, s) {
                        return Err(stop(&mut side, e, "output"));
                    }
                }
            }
            rows.push(row);
            if let Err(what) = checker.check(s, rep) {
                return Err(StepError::Invariant { t: rep.t, what });
            }
            if let Err(msg) = hook(rows.last().expect("just pushed")) {
                return Err(stop(&mut side, ExperimentError::Comparison(msg), "stopped"));
            }
            Ok(())
        },
    );

    match result {
        Ok(run) => {
            let final_curve = if geometry {
                last_curve.or_else(|| Some(extract_contour(&run.state.phi, 0.5).expect("2D field")))
            } else {
                None
            };
            let record = RunRecord {
                rows,
                steps: run.steps,
                dt: run.dt,
                state: run.state,
                final_curve,
            };
            if let Some(dir) = out {
                if let Err(e) = finish_artifacts(dir, cfg, &record, "ok") {
                    return Err(failed(e, Some(record)));
                }
            }
            Ok(record)
        }
        Err(fail) => {
            let error = side.take().unwrap_or_else(|| classify(fail.error.clone()));
            let record = RunRecord {
                rows,
                steps: fail.partial.steps,
                dt: fail.partial.dt,
                state: fail.partial.state,
                final_curve: last_curve,
            };
            if let Some(dir) = out {
                // Best effort: the primary error is what matters.
                let _ = finish_artifacts(dir, cfg, &record, &format!("failed: {error}"));
            }
            Err(failed(error, Some(record)))
        }
    }
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<RunRecord, Box<FailedRun>> {
    simulate_with(cfg, out, |_| Ok(()))
}

fn finish_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    rec: &RunRecord,
    status: &str,
) -> Result<(), ExperimentError> {
    if let Some(c) = &rec.final_curve {
        write_curve(&dir.join(CURVE_FILE), c)?;
    }
    if cfg.output.snapshot_every > 0 {
        write_snapshot(&dir.join("final.vtk"), &rec.state)?;
    }
    let mut s = String::new();
    s.push_str(&format!("status = {status:?}\n"));
    s.push_str(&format!("steps = {}\n", rec.steps));
    s.push_str(&format!("dt = {}\n", rec.dt));
    s.push_str(&format!("t_final = {}\n", rec.state.t));
    if let Some(last) = rec.rows.last() {
        s.push_str(&format!("energy = {}\n", last.report.e));
        s.push_str(&format!("mass_G = {}\n", last.report.mass_g));
        if let Some(r) = last.radius() {
            s.push_str(&format!("radius = {r}\n"));
        }
    }
    write_text(&dir.join("summary.txt"), &s)
}

/// `cmd_run`: execute a config and write its artifacts to `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunRecord, ExperimentError> {
    simulate(cfg, Some(out)).map_err(ExperimentError::from)
}

/// The sharp-interface radius predicted for a config, as a function of time.
pub enum RadiusOracle {
    Mcf { r0: f64, n: usize },
    Trajectory(OracleTrajectory),
}

impl RadiusOracle {
    /// `None` past the end of the trajectory; 0 after extinction.
    pub fn radius(&self, t: f64) -> Option<f64> {
        match self {
            Self::Mcf { r0, n } => match oracle::mcf_radius(*r0, t, *n) {
                Ok(r) => Some(r),
                Err(OracleError::PastExtinction { .. }) => Some(0.0),
                Err(_) => None,
            },
            Self::Trajectory(tr) => {
                if let Some(te) = tr.extinction {
                    if t >= te {
                        return Some(0.0);
                    }
                }
                tr.radius_at(t)
            }
        }
    }

    pub fn trajectory(&self) -> Option<&OracleTrajectory> {
        match self {
            Self::Trajectory(tr) => Some(tr),
            Self::Mcf { .. } => None,
        }
    }
}

/// Build the oracle matching `cfg` (disk initial data, 2D).
pub fn build_oracle(
    cfg: &RunConfig,
    kind: OracleKind,
    t_end: f64,
) -> Result<RadiusOracle, ExperimentError> {
    let Some((_, r0)) = cfg.disk() else {
        return Err(ExperimentError::Setup(
            "oracle comparison needs a disk initial phase".into(),
        ));
    };
    let n = cfg.ndim();
    if n != 2 {
        return Err(ExperimentError::Setup(
            "oracle comparison needs a 2D grid".into(),
        ));
    }
    let p = cfg.model_params();
    let odt = cfg.compare.oracle_dt.unwrap_or(t_end / 2000.0);
    match kind {
        OracleKind::Mcf => {
            if !(p.gamma_is_zero() && p.alpha == 0.0) {
                return Err(ExperimentError::Setup(
                    "the mcf oracle needs variant const_gamma with gamma_const = 0 and alpha = 0"
                        .into(),
                ));
            }
            Ok(RadiusOracle::Mcf { r0, n })
        }
        OracleKind::Forced => {
            let Variant::ConstGamma(g) = p.variant else {
                return Err(ExperimentError::Setup(
                    "the forced oracle needs variant const_gamma".into(),
                ));
            };
            if t_end == 0.0 {
                return Ok(RadiusOracle::Mcf { r0, n }.into_constant(r0));
            }
            Ok(RadiusOracle::Trajectory(oracle::forced_circle_trajectory(
                r0, g, p.alpha, n, odt, t_end,
            )?))
        }
        OracleKind::Coupled => {
            let UInit::Const { value } = cfg.init.u else {
                return Err(ExperimentError::Setup(
                    "the coupled oracle needs a radially symmetric (constant) initial concentration".into(),
                ));
            };
            if t_end == 0.0 {
                return Ok(RadiusOracle::Mcf { r0, n }.into_constant(r0));
            }
            let setup = RadialSetup {
                n,
                r0,
                r_max: cfg.compare.r_max_factor * r0,
                dr: r0 / cfg.compare.cells_per_radius as f64,
                dt: odt,
                t_end,
                profile_every: 0,
            };
            Ok(RadiusOracle::Trajectory(oracle::radial_coupled_solve(
                &setup,
                |_| value,
                &p,
            )?))
        }
    }
}

impl RadiusOracle {
    fn into_constant(self, r0: f64) -> Self {
        Self::Trajectory(OracleTrajectory {
            times: vec![0.0],
            radii: vec![r0],
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    pub r_phase: f64,
    pub r_oracle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub oracle: OracleKind,
    pub rows: Vec<ComparisonRow>,
    pub max_deviation: f64,
    pub terminal_deviation: f64,
    pub tolerance: f64,
    /// Time at which the radius left the comparison window, if it did.
    pub window_violation: Option<f64>,
    pub pass: bool,
}

impl ComparisonReport {
    fn from_rows(
        oracle: OracleKind,
        rows: Vec<ComparisonRow>,
        tolerance: f64,
        window_violation: Option<f64>,
    ) -> Self {
        let max_deviation = rows
            .iter()
            .map(|r| (r.r_phase - r.r_oracle).abs())
            .fold(0.0, f64::max);
        let terminal_deviation = rows.last().map_or(0.0, |r| (r.r_phase - r.r_oracle).abs());
        let pass = window_violation.is_none() && max_deviation <= tolerance;
        Self {
            oracle,
            rows,
            max_deviation,
            terminal_deviation,
            tolerance,
            window_violation,
            pass,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,R_phase,R_oracle,deviation")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.t,
                r.r_phase,
                r.r_oracle,
                (r.r_phase - r.r_oracle).abs()
            )?;
        }
        Ok(())
    }
}

/// Largest radius for which the radial oracle is a valid reference.
pub fn comparison_window(cfg: &RunConfig) -> f64 {
    0.3 * cfg.lengths().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `cmd_compare_oracle`: run `cfg` and compare its equal-area radius with the
/// oracle at every recorded time. Leaving the window `R <= 0.3 L` stops the
/// run and keeps the rows recorded so far. The extracted radius gets one
/// cell of slack against the window since its t = 0 value already carries
/// the discretization error.
pub fn cmd_compare_oracle(
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<ComparisonReport, ExperimentError> {
    if !with_geometry(cfg) {
        return Err(ExperimentError::Setup(
            "oracle comparison needs 2D geometry output".into(),
        ));
    }
    let kind = cfg.compare.oracle;
    let oracle = build_oracle(cfg, kind, cfg.stepping.t_end)?;
    let window = comparison_window(cfg);
    let slack = cfg.grid()?.min_spacing();
    let mut rows = Vec::new();
    let mut violation = None;
    let run = simulate_with(cfg, out, |row| {
        let t = row.report.t;
        let r_phase = row.radius().expect("geometry enabled");
        let r_oracle = oracle.radius(t).unwrap_or(f64::NAN);
        rows.push(ComparisonRow {
            t,
            r_phase,
            r_oracle,
        });
        if r_oracle > window || r_phase > window + slack {
            violation = Some(t);
            return Err(format!(
                "comparison window left at t = {t}: R = {r_phase} (oracle {r_oracle}) > 0.3 L = {window}"
            ));
        }
        Ok(())
    });
    match run {
        Ok(_) => {}
        Err(f) if violation.is_some() => drop(f),
        Err(f) => return Err(f.error),
    }
    let report = ComparisonReport::from_rows(kind, rows, cfg.compare.tolerance, violation);
    if let Some(dir) = out {
        let path = dir.join("comparison.csv");
        let file = File::create(&path).map_err(io_err(&path))?;
        report
            .write_csv(BufWriter::new(file))
            .map_err(io_err(&path))?;
        if let Some(tr) = oracle.trajectory() {
            let path = dir.join("oracle.csv");
            let file = File::create(&path).map_err(io_err(&path))?;
            tr.write_csv(BufWriter::new(file)).map_err(io_err(&path))?;
        }
    }
    Ok(report)
}

/// Log-ratio convergence orders of successive pairs; the first entry is `None`.
pub fn eoc(params: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for i in 1..params.len().min(errors.len()) {
        let v = (errors[i - 1] / errors[i]).ln() / (params[i - 1] / params[i]).ln();
        out.push(v.is_finite().then_some(v));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonEntry {
    pub epsilon: f64,
    pub cells: usize,
    pub radius: f64,
    pub oracle_radius: f64,
    pub radius_error: f64,
    pub hausdorff_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEntry {
    pub alpha: f64,
    pub max_drift: f64,
    /// Smallest ratio `bound / drift` over the run (infinite for alpha = 0).
    pub drift_bound: f64,
    pub drift_ok: bool,
    pub stilde_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepEntries {
    Epsilon(Vec<EpsilonEntry>),
    Alpha(Vec<AlphaEntry>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: SweepEntries,
    pub eoc: Vec<Option<f64>>,
    pub verdicts: Vec<Verdict>,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let e = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        match &self.entries {
            SweepEntries::Epsilon(list) => {
                writeln!(
                    w,
                    "epsilon,cells,radius,oracle_radius,radius_error,hausdorff_error,eoc_radius"
                )?;
                for (k, x) in list.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        x.epsilon,
                        x.cells,
                        x.radius,
                        x.oracle_radius,
                        x.radius_error,
                        x.hausdorff_error,
                        e(self.eoc.get(k).copied().flatten())
                    )?;
                }
            }
            SweepEntries::Alpha(list) => {
                writeln!(
                    w,
                    "alpha,max_drift,drift_bound,drift_ok,stilde_l2_accum,eoc_drift"
                )?;
                for (k, x) in list.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        x.alpha,
                        x.max_drift,
                        x.drift_bound,
                        x.drift_ok,
                        x.stilde_l2,
                        e(self.eoc.get(k).copied().flatten())
                    )?;
                }
            }
        }
        writeln!(w)?;
        for v in &self.verdicts {
            writeln!(
                w,
                "# {}: {} ({})",
                v.name,
                if v.pass { "pass" } else { "FAIL" },
                v.detail
            )?;
        }
        Ok(())
    }
}

fn need_three(values: &[f64], what: &str) -> Result<(), ExperimentError> {
    if values.len() < 3 {
        return Err(ExperimentError::Setup(format!(
            "a {what} sweep needs at least 3 values to define convergence orders, got {}",
            values.len()
        )));
    }
    Ok(())
}

/// Smallest power of two with at least `cells_per_eps * L / eps` cells.
pub fn sweep_cells(length: f64, epsilon: f64, cells_per_eps: f64) -> usize {
    let want = (cells_per_eps * length / epsilon).ceil().max(8.0) as usize;
    want.next_power_of_two()
}

/// Largest grid an epsilon sweep may request per axis.
pub const MAX_SWEEP_CELLS: usize = 4096;

fn member_dir(out: &Path, name: &str, value: f64) -> PathBuf {
    out.join(format!("{name}_{value}"))
}

fn read_run(dir: &Path) -> Result<(RunConfig, Vec<SeriesRow>), ExperimentError> {
    let cfg = load_config::<&str>(&dir.join(CONFIG_FILE), &[])?;
    let path = dir.join(SERIES_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok((cfg, read_series(&text)?))
}

fn read_curve(path: &Path, lengths: [f64; 2]) -> Result<InterfaceCurve, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut polylines: Vec<Polyline> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || OutputError::Malformed {
            line: i + 1,
            message: format!("bad curve row in {}", path.display()),
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(bad().into());
        }
        let k: usize = cells[0].parse().map_err(|_| bad())?;
        let x: f64 = cells[1].parse().map_err(|_| bad())?;
        let y: f64 = cells[2].parse().map_err(|_| bad())?;
        while polylines.len() <= k {
            polylines.push(Polyline {
                vertices: Vec::new(),
            });
        }
        polylines[k].vertices.push([x, y]);
    }
    let perimeter = polylines.iter().map(Polyline::length).sum();
    Ok(InterfaceCurve {
        polylines,
        area: 0.0,
        perimeter,
        centroid: None,
        lengths,
    })
}

/// Configs of the members of an epsilon sweep.
pub fn epsilon_members(
    cfg: &RunConfig,
    eps_list: &[f64],
) -> Result<Vec<RunConfig>, ExperimentError> {
    need_three(eps_list, "epsilon")?;
    let t_cmp = cfg.sweep.compare_time.unwrap_or(cfg.stepping.t_end);
    let lengths = cfg.lengths();
    let mut members = Vec::new();
    for &eps in eps_list {
        let mut m = cfg.clone();
        m.model.epsilon = eps;
        m.stepping.t_end = t_cmp;
        let dims: Vec<usize> = lengths
            .iter()
            .map(|&l| sweep_cells(l, eps, cfg.sweep.cells_per_epsilon))
            .collect();
        if let Some(&d) = dims.iter().max() {
            if d > MAX_SWEEP_CELLS {
                return Err(ExperimentError::Setup(format!(
                    "epsilon = {eps} is under-resolved: it needs {d} cells per axis (limit {MAX_SWEEP_CELLS})"
                )));
            }
        }
        m.grid.dims = dims;
        m.validate()?;
        members.push(m);
    }
    Ok(members)
}

/// `cmd_sweep_epsilon`: run every member, then aggregate from disk.
pub fn cmd_sweep_epsilon(
    cfg: &RunConfig,
    eps_list: &[f64],
    out: &Path,
) -> Result<SweepReport, ExperimentError> {
    let members = epsilon_members(cfg, eps_list)?;
    let mut dirs = Vec::new();
    for m in &members {
        let dir = member_dir(out, "eps", m.model.epsilon);
        simulate(m, Some(&dir))?;
        dirs.push(dir);
    }
    let report = aggregate_epsilon_sweep(&dirs, cfg.compare.oracle)?;
    write_report(out, "sweep_epsilon.csv", &report)?;
    Ok(report)
}

/// Epsilon-sweep report from stored runs (ordered as given).
pub fn aggregate_epsilon_sweep(
    dirs: &[PathBuf],
    kind: OracleKind,
) -> Result<SweepReport, ExperimentError> {
    let mut entries = Vec::new();
    for dir in dirs {
        let (cfg, rows) = read_run(dir)?;
        let last = rows
            .last()
            .ok_or_else(|| ExperimentError::Setup(format!("{} has no rows", dir.display())))?;
        let radius = last.radius().ok_or_else(|| {
            ExperimentError::Setup(format!("{} has no geometry columns", dir.display()))
        })?;
        let t = last.report.t;
        let oracle = build_oracle(&cfg, kind, t)?;
        let oracle_radius = oracle.radius(t).unwrap_or(f64::NAN);
        let (center, _) = cfg.disk().expect("oracle checked the disk");
        let lengths = cfg.lengths();
        let curve = read_curve(&dir.join(CURVE_FILE), [lengths[0], lengths[1]])?;
        let hausdorff_error = hausdorff_to_circle(&curve, [center[0], center[1]], oracle_radius)
            .unwrap_or(f64::INFINITY);
        entries.push(EpsilonEntry {
            epsilon: cfg.model.epsilon,
            cells: cfg.grid.dims[0],
            radius,
            oracle_radius,
            radius_error: (radius - oracle_radius).abs(),
            hausdorff_error,
        });
    }
    let eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let err: Vec<f64> = entries.iter().map(|e| e.radius_error).collect();
    let orders = eoc(&eps, &err);
    let decreasing = err.windows(2).all(|w| w[1] < w[0]);
    let verdicts = vec![Verdict {
        name: "radius errors strictly decrease with epsilon".into(),
        pass: decreasing,
        detail: format!("{err:?}"),
    }];
    Ok(SweepReport {
        entries: SweepEntries::Epsilon(entries),
        eoc: orders,
        verdicts,
    })
}

/// Acceptance window of the drift order in alpha.
pub const DRIFT_EOC_RANGE: (f64, f64) = (-0.7, -0.3);
/// Largest allowed max/min ratio of the accumulated nonlocal term.
pub const STILDE_SPREAD_MAX: f64 = 3.0;

/// `cmd_sweep_alpha`: run every member, then aggregate from disk.
pub fn cmd_sweep_alpha(
    cfg: &RunConfig,
    alphas: &[f64],
    out: &Path,
) -> Result<SweepReport, ExperimentError> {
    need_three(alphas, "alpha")?;
    let state = cfg.initial_state()?;
    let c1 = 1.0 - 6.0 * crate::physics::mass_g(&state.phi) / state.grid().volume();
    if !(c1 > 0.0) {
        return Err(ExperimentError::Setup(format!(
            "the initial phase fills the domain: 1 - 6/|Omega| int G = {c1} must be positive"
        )));
    }
    let mut dirs = Vec::new();
    for &alpha in alphas {
        let mut m = cfg.clone();
        m.model.alpha = alpha;
        m.validate()?;
        let dir = member_dir(out, "alpha", alpha);
        simulate(&m, Some(&dir))?;
        dirs.push(dir);
    }
    let report = aggregate_alpha_sweep(&dirs)?;
    write_report(out, "sweep_alpha.csv", &report)?;
    Ok(report)
}

/// Alpha-sweep report from stored runs (ordered as given).
pub fn aggregate_alpha_sweep(dirs: &[PathBuf]) -> Result<SweepReport, ExperimentError> {
    let mut entries = Vec::new();
    for dir in dirs {
        let (cfg, rows) = read_run(dir)?;
        let p = cfg.model_params();
        let first = rows
            .first()
            .ok_or_else(|| ExperimentError::Setup(format!("{} has no rows", dir.display())))?;
        let (e0, m0) = (first.report.e, first.report.mass_g);
        let mut max_drift: f64 = 0.0;
        let mut ok = true;
        let mut bound_at_max = f64::INFINITY;
        for r in &rows {
            let d = volume_drift_bound(&r.report, e0, m0, &p);
            if d.drift >= max_drift {
                max_drift = d.drift;
                bound_at_max = d.bound;
            }
            ok &= d.pass || d.bound.is_infinite();
        }
        entries.push(AlphaEntry {
            alpha: p.alpha,
            max_drift,
            drift_bound: bound_at_max,
            drift_ok: ok,
            stilde_l2: rows.last().map_or(0.0, |r| r.report.stilde_l2_accum),
        });
    }
    let active: Vec<&AlphaEntry> = entries.iter().filter(|e| e.alpha > 0.0).collect();
    let alphas: Vec<f64> = active.iter().map(|e| e.alpha).collect();
    let drifts: Vec<f64> = active.iter().map(|e| e.max_drift).collect();
    let active_eoc = eoc(&alphas, &drifts);
    let mut orders = Vec::new();
    let mut k = 0;
    for e in &entries {
        if e.alpha > 0.0 {
            orders.push(active_eoc[k]);
            k += 1;
        } else {
            orders.push(None);
        }
    }
    let defined: Vec<f64> = active_eoc.iter().flatten().copied().collect();
    let (lo, hi) = DRIFT_EOC_RANGE;
    let l2: Vec<f64> = active.iter().map(|e| e.stilde_l2).collect();
    let l2_max = l2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l2_min = l2.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = l2_max / l2_min;
    let verdicts = vec![
        Verdict {
            name: format!("drift within {BOUND_SLACK} x bound for every alpha"),
            pass: entries.iter().all(|e| e.drift_ok),
            detail: entries
                .iter()
                .map(|e| {
                    format!(
                        "alpha {}: {:e} vs {:e}",
                        e.alpha, e.max_drift, e.drift_bound
                    )
                })
                .collect::<Vec<_>>()
                .join("; "),
        },
        Verdict {
            name: format!("drift order in alpha within [{lo}, {hi}]"),
            pass: !defined.is_empty() && defined.iter().all(|&v| (lo..=hi).contains(&v)),
            detail: format!("{defined:?}"),
        },
        Verdict {
            name: format!("max/min of accumulated S^2 dt at most {STILDE_SPREAD_MAX}"),
            pass: spread.is_finite() && spread <= STILDE_SPREAD_MAX,
            detail: format!("{l2:?}, ratio {spread}"),
        },
    ];
    Ok(SweepReport {
        entries: SweepEntries::Alpha(entries),
        eoc: orders,
        verdicts,
    })
}

fn write_report(out: &Path, name: &str, report: &SweepReport) -> Result<(), ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(name);
    let f = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(f);
    report.write_csv(&mut w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))
}

/// Summary of an extracted interface.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub loops: usize,
    pub vertices: usize,
    pub area: f64,
    pub perimeter: f64,
    pub radius: f64,
    pub centroid: Option<[f64; 2]>,
}

/// `extract`: contour a 2D field and write `curve.csv` plus a summary.
pub fn cmd_extract(
    field: &crate::grid::ScalarField,
    level: f64,
    out: &Path,
) -> Result<ExtractSummary, ExperimentError> {
    let curve = extract_contour(field, level).map_err(|e| ExperimentError::Setup(e.to_string()))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_curve(&out.join("curve.csv"), &curve)?;
    let summary = ExtractSummary {
        loops: curve.polylines.len(),
        vertices: curve.vertex_count(),
        area: curve.area,
        perimeter: curve.perimeter,
        radius: crate::geometry::radius_from_area(&curve),
        centroid: curve.centroid,
    };
    let mut s = format!(
        "loops = {}\nvertices = {}\narea = {}\nperimeter = {}\nradius = {}\n",
        summary.loops, summary.vertices, summary.area, summary.perimeter, summary.radius
    );
    if let Some([x, y]) = summary.centroid {
        s.push_str(&format!("centroid = [{x}, {y}]\n"));
    }
    write_text(&out.join("geometry.txt"), &s)?;
    Ok(summary)
}

/// Initial phase field of a config, for `extract` without an input file.
pub fn initial_phase(cfg: &RunConfig) -> Result<crate::grid::ScalarField, ExperimentError> {
    Ok(cfg.initial_state()?.phi)
}
