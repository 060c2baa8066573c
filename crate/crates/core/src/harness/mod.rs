//! Experiment orchestration behind the `agda` binary.
//!
//! Every subcommand is a function returning an [`Outcome`]: the exit status,
//! the text destined for stdout/stderr, and the files to write. The binary
//! only parses flags and calls [`Outcome::finish`], so library and CLI
//! produce identical bytes.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::problems::ProblemSpec;
use crate::schedules::{self, AsymptoticReport, ScanReport, Schedule, ScheduleKind};
use crate::solver::{self, RunOptions};
use crate::trace::{fmt_f64, Trace};
use crate::verify::{self, CheckStatus, VerificationReport, VerifyInputs};

pub use config::{
    output_path, Experiment, ExperimentConfig, ProblemConfig, SweepAxes, SweepConfig, Z0Config,
    DEFAULT_SWEEP_CAP, OUT_DIR_ENV,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    CheckFailed = 1,
    Usage = 2,
    Diverged = 3,
    Io = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of(err: &Error) -> Self {
        match err {
            Error::Diverged { .. } | Error::NonFinite { .. } | Error::NoConvergence { .. } => {
                ExitStatus::Diverged
            }
            Error::Io { .. } => ExitStatus::Io,
            _ => ExitStatus::Usage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// As given; resolved against `$AGDA_OUT_DIR` on write.
    pub path: PathBuf,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub status: ExitStatus,
    pub stdout: String,
    pub stderr: String,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            status: ExitStatus::Ok,
            stdout: String::new(),
            stderr: String::new(),
            artifacts: Vec::new(),
        }
    }

    fn failure(err: &Error) -> Self {
        let mut o = Self::new();
        o.fail(err);
        o
    }

    fn fail(&mut self, err: &Error) {
        self.status = ExitStatus::of(err);
        let _ = writeln!(self.stderr, "error: {err}");
    }

    fn emit(&mut self, path: Option<&Path>, contents: String) {
        match path {
            Some(p) => self.artifacts.push(Artifact {
                path: p.to_path_buf(),
                contents,
            }),
            None => self.stdout.push_str(&contents),
        }
    }

    pub fn artifact(&self, path: &Path) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.path == path)
            .map(|a| a.contents.as_str())
    }

    /// Writes every artifact.
    pub fn write_artifacts(&self) -> crate::Result<()> {
        for a in &self.artifacts {
            let path = output_path(&a.path);
            std::fs::write(&path, &a.contents).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    /// Writes artifacts, prints the captured streams and returns the
    /// process exit code.
    pub fn finish(self) -> i32 {
        use std::io::Write;
        let mut status = self.status;
        let written = self.write_artifacts();
        let mut stderr = self.stderr;
        if let Err(e) = written {
            let _ = writeln!(stderr, "error: {e}");
            status = ExitStatus::Io;
        }
        let mut out = std::io::stdout().lock();
        if out.write_all(self.stdout.as_bytes()).and_then(|_| out.flush()).is_err() {
            status = ExitStatus::Io;
        }
        eprint!("{stderr}");
        status.code()
    }
}

fn run_options(e: &Experiment) -> RunOptions {
    RunOptions::new(e.steps, e.record_every).with_seed(e.seed)
}

fn check_names(e: &Experiment) -> Vec<&str> {
    e.checks.iter().map(String::as_str).collect()
}

fn check_lines(report: &VerificationReport) -> String {
    let mut s = String::new();
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inapplicable => "n/a",
        };
        let _ = writeln!(s, "{status:>4}  {:<24} {}", c.name, c.detail);
    }
    if let Some(f) = &report.rate_fit {
        let _ = writeln!(
            s,
            "rate fit on [{}, {}]: slope {:.5}, r² {:.6}",
            f.window[0], f.window[1], f.slope, f.r_squared
        );
    }
    s
}

/// Trace text for a run that stopped early; marked so it is not mistaken
/// for a complete trace.
fn partial_csv(trace: &Trace, err: &Error) -> String {
    format!("# status: stopped ({err})\n{}", trace.to_csv())
}

/// `run`: iterate, write the trace (to `out` or stdout) and, when `report`
/// or `checks` is configured, verify it.
pub fn cmd_run(config: &ExperimentConfig) -> Outcome {
    let e = match config.resolve() {
        Ok(e) => e,
        Err(err) => return Outcome::failure(&err),
    };
    let mut o = Outcome::new();
    for w in e.schedule.warnings() {
        let _ = writeln!(o.stderr, "warning: {w}");
    }
    let started = Instant::now();
    let trace = match solver::run(&e.problem, &e.schedule, &e.z0, run_options(&e)) {
        Ok(t) => t,
        Err(failure) => {
            if !failure.trace.rows.is_empty() {
                o.emit(e.out.as_deref(), partial_csv(&failure.trace, &failure.error));
            }
            o.fail(&failure.error);
            return o;
        }
    };
    let wall = started.elapsed().as_secs_f64();
    o.emit(e.out.as_deref(), trace.to_csv());
    let last = trace.last().expect("a completed run has rows");
    let _ = writeln!(
        o.stderr,
        "final grad_norm_sq={} T={} wall={wall:.3}s",
        fmt_f64(last.grad_norm_sq),
        e.steps
    );

    if e.report.is_some() || !e.checks.is_empty() {
        let inputs = VerifyInputs {
            problem: &e.problem,
            schedule: &e.schedule,
            z0: &e.z0,
            trace: &trace,
            seed: e.seed,
        };
        match verify::verify(inputs, &check_names(&e)) {
            Ok(report) => {
                o.stderr.push_str(&check_lines(&report));
                if let Some(p) = &e.report {
                    o.emit(Some(p), report.to_json());
                }
                if report.any_failed() {
                    o.status = ExitStatus::CheckFailed;
                }
            }
            Err(err) => o.fail(&err),
        }
    }
    o
}

/// Reads and parses a trace file.
pub fn load_trace(path: &Path) -> crate::Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Trace::from_csv(&text)
}

fn trace_mismatches(trace: &Trace, e: &Experiment, config: &ExperimentConfig) -> Vec<String> {
    let h = &trace.header;
    let mut diffs = Vec::new();
    let mut field = |name: &str, ours: String, theirs: String| {
        if ours != theirs {
            diffs.push(format!("  {name}: trace={ours} config={theirs}"));
        }
    };
    field("problem", h.problem.clone(), e.problem.id().to_string());
    field("K", h.lipschitz.to_string(), e.problem.lipschitz().to_string());
    field("schedule", h.schedule.clone(), e.schedule.to_string());
    let opt = |g: Option<f64>| g.map_or_else(|| "-".to_string(), |g| g.to_string());
    field("gamma", opt(h.gamma), opt(e.schedule.gamma()));
    if config.steps.is_some() {
        field("T", h.steps.to_string(), e.steps.to_string());
    }
    if config.seed.is_some() {
        field("seed", h.seed.to_string(), e.seed.to_string());
    }
    if let Some(recorded) = trace.row(0).and_then(|r| r.dist_opt_sq) {
        let expected = crate::linalg::dist_sq(e.z0.coords(), e.problem.saddle().coords());
        if verify::relative_margin(recorded, expected).abs() > verify::IDENTITY_REL_TOL {
            field(
                "‖z0 - z*‖²",
                fmt_f64(recorded),
                fmt_f64(expected),
            );
        }
    }
    diffs
}

/// `verify`: check a trace file against its configuration.
///
/// Problem and schedule default to the descriptors in the trace header; any
/// value given in `config` must agree with the trace.
pub fn cmd_verify(trace_path: &Path, config: &ExperimentConfig) -> Outcome {
    let trace = match load_trace(trace_path) {
        Ok(t) => t,
        Err(err) => return Outcome::failure(&err),
    };
    let mut filled = config.clone();
    if filled.problem.is_none() {
        filled.problem = Some(ProblemConfig::Descriptor(trace.header.problem.clone()));
    }
    if filled.schedule.is_none() {
        filled.schedule = Some(trace.header.schedule.clone());
    }
    if filled.seed.is_none() {
        filled.seed = Some(trace.header.seed);
    }
    let e = match filled.resolve() {
        Ok(e) => e,
        Err(err) => return Outcome::failure(&err),
    };
    let mismatches = trace_mismatches(&trace, &e, config);
    if !mismatches.is_empty() {
        let mut o = Outcome::new();
        o.status = ExitStatus::Usage;
        let _ = writeln!(o.stderr, "error: trace and config disagree:");
        for m in mismatches {
            let _ = writeln!(o.stderr, "{m}");
        }
        return o;
    }
    let inputs = VerifyInputs {
        problem: &e.problem,
        schedule: &e.schedule,
        z0: &e.z0,
        trace: &trace,
        seed: e.seed,
    };
    let report = match verify::verify(inputs, &check_names(&e)) {
        Ok(r) => r,
        Err(err) => return Outcome::failure(&err),
    };
    let mut o = Outcome::new();
    o.stderr.push_str(&check_lines(&report));
    o.emit(e.report.as_deref(), report.to_json());
    if report.any_failed() {
        o.status = ExitStatus::CheckFailed;
    }
    o
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub schedule: Schedule,
    /// `None` when the run completed.
    pub halted: Option<usize>,
    pub final_grad_norm_sq: Option<f64>,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub passed: usize,
    pub failed: usize,
    pub inapplicable: usize,
}

pub const SWEEP_HEADER: &str =
    "kind,gamma,p,alpha,T,status,halt_t,final_grad_norm_sq,slope,r_squared,checks_pass,checks_fail,checks_inapplicable";

fn cell_schedule(base: &Schedule, cell: &SweepCell) -> crate::Result<Schedule> {
    let kind = match (base.kind(), cell.gamma, cell.p) {
        (k, None, None) => k,
        (ScheduleKind::AnchoredNew { gamma }, g, None) => ScheduleKind::AnchoredNew {
            gamma: g.unwrap_or(gamma),
        },
        (ScheduleKind::AnchoredRyu { p, gamma }, g, q) => ScheduleKind::AnchoredRyu {
            p: q.unwrap_or(p),
            gamma: g.unwrap_or(gamma),
        },
        (k, _, _) => {
            return Err(Error::usage(format!(
                "sweep axes do not apply to {} (gamma needs an anchored schedule, p needs anchored-ryu)",
                k.name()
            )))
        }
    };
    Schedule::new(kind, base.lipschitz())
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Trace path for one cell: the base `out` for a single-cell sweep,
/// otherwise `out` with the cell's parameters inserted before the extension.
fn cell_trace_path(out: &Path, cell: &SweepCell, single: bool) -> PathBuf {
    if single {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name = stem;
    if let Some(g) = cell.gamma {
        let _ = write!(name, "-gamma{g}");
    }
    if let Some(p) = cell.p {
        let _ = write!(name, "-p{p}");
    }
    let _ = write!(name, "-T{}", cell.steps);
    if let Some(ext) = out.extension() {
        let _ = write!(name, ".{}", ext.to_string_lossy());
    }
    out.with_file_name(name)
}

/// `sweep`: the Cartesian product of the axes over the base configuration.
///
/// The summary CSV goes to `summary` (or stdout); when the base config has
/// `out`, each cell's trace is written next to it. Divergent cells are
/// reported in the summary rather than aborting the sweep.
pub fn cmd_sweep(sweep: &SweepConfig, summary: Option<&Path>) -> Outcome {
    let base = match sweep.base.resolve() {
        Ok(e) => e,
        Err(err) => return Outcome::failure(&err),
    };
    let cap = sweep.sweep.cap.unwrap_or(DEFAULT_SWEEP_CAP);
    let count = sweep.cell_count();
    if count > cap {
        return Outcome::failure(&Error::Usage(format!(
            "sweep has {count} cells, cap is {cap}"
        )));
    }
    let mut cells = Vec::with_capacity(count);
    for gamma in axis(&sweep.sweep.gamma) {
        for p in axis(&sweep.sweep.p) {
            for steps in axis(&sweep.sweep.steps) {
                cells.push(SweepCell {
                    gamma,
                    p,
                    steps: steps.unwrap_or(base.steps),
                });
            }
        }
    }
    let mut jobs = Vec::with_capacity(cells.len());
    for cell in cells {
        if cell.steps == 0 {
            return Outcome::failure(&Error::Usage("sweep T values must be at least 1".into()));
        }
        match cell_schedule(&base.schedule, &cell) {
            Ok(s) => jobs.push((cell, s)),
            Err(err) => return Outcome::failure(&err),
        }
    }

    let single = jobs.len() == 1;
    let work = |(cell, schedule): &(SweepCell, Schedule)| run_cell(&base, *cell, schedule, single);
    let results: Vec<(SweepRow, Option<Artifact>, String)> = match sweep.sweep.parallelism {
        Some(0) => return Outcome::failure(&Error::Usage("parallelism must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| jobs.par_iter().map(work).collect()),
            Err(e) => return Outcome::failure(&Error::Usage(format!("thread pool: {e}"))),
        },
        None => jobs.par_iter().map(work).collect(),
    };

    let mut o = Outcome::new();
    let mut rows = Vec::with_capacity(results.len());
    for (row, artifact, log) in results {
        o.stderr.push_str(&log);
        if let Some(a) = artifact {
            o.artifacts.push(a);
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        let key = |r: &SweepRow| (r.cell.gamma.unwrap_or(f64::NAN), r.cell.p.unwrap_or(f64::NAN));
        let (ga, pa) = key(a);
        let (gb, pb) = key(b);
        ga.total_cmp(&gb)
            .then(pa.total_cmp(&pb))
            .then(a.cell.steps.cmp(&b.cell.steps))
    });
    if rows.iter().any(|r| r.failed > 0) {
        o.status = ExitStatus::CheckFailed;
    }
    o.emit(summary, sweep_csv(&rows));
    o
}

fn run_cell(
    base: &Experiment,
    cell: SweepCell,
    schedule: &Schedule,
    single: bool,
) -> (SweepRow, Option<Artifact>, String) {
    let mut row = SweepRow {
        cell,
        schedule: *schedule,
        halted: None,
        final_grad_norm_sq: None,
        slope: None,
        r_squared: None,
        passed: 0,
        failed: 0,
        inapplicable: 0,
    };
    let mut log = String::new();
    let opts = RunOptions::new(cell.steps, base.record_every).with_seed(base.seed);
    let path = base.out.as_deref().map(|p| cell_trace_path(p, &cell, single));
    let trace = match solver::run(&base.problem, schedule, &base.z0, opts) {
        Ok(t) => t,
        Err(f) => {
            let _ = writeln!(log, "{schedule} T={}: {}", cell.steps, f.error);
            row.halted = Some(f.halted_at().unwrap_or(0));
            row.final_grad_norm_sq = f.trace.last().map(|r| r.grad_norm_sq);
            let artifact = path.map(|path| Artifact {
                path,
                contents: partial_csv(&f.trace, &f.error),
            });
            return (row, artifact, log);
        }
    };
    row.final_grad_norm_sq = trace.last().map(|r| r.grad_norm_sq);
    let inputs = VerifyInputs {
        problem: &base.problem,
        schedule,
        z0: &base.z0,
        trace: &trace,
        seed: base.seed,
    };
    match verify::verify(inputs, &check_names(base)) {
        Ok(report) => {
            for c in &report.checks {
                match c.status {
                    CheckStatus::Pass => row.passed += 1,
                    CheckStatus::Fail => row.failed += 1,
                    CheckStatus::Inapplicable => row.inapplicable += 1,
                }
            }
            if let Some(f) = report.rate_fit {
                row.slope = Some(f.slope);
                row.r_squared = Some(f.r_squared);
            }
        }
        Err(err) => {
            let _ = writeln!(log, "{schedule} T={}: verification error: {err}", cell.steps);
            row.failed += 1;
        }
    }
    let artifact = path.map(|path| Artifact {
        path,
        contents: trace.to_csv(),
    });
    (row, artifact, log)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        let (gamma, p, alpha) = match r.schedule.kind() {
            ScheduleKind::AnchoredNew { gamma } => (Some(gamma), None, None),
            ScheduleKind::AnchoredRyu { p, gamma } => (Some(gamma), Some(p), None),
            ScheduleKind::PlainGda { alpha } => (None, None, Some(alpha)),
        };
        let plain = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.schedule.kind().name(),
            plain(gamma),
            plain(p),
            plain(alpha),
            r.cell.steps,
            if r.halted.is_some() { "diverged" } else { "ok" },
            r.halted.map(|t| t.to_string()).unwrap_or_default(),
            num(r.final_grad_norm_sq),
            num(r.slope),
            num(r.r_squared),
            r.passed,
            r.failed,
            r.inapplicable
        );
    }
    s
}

/// `compare`: run several schedules on one problem from one `z0` and align
/// their `‖G(z_t)‖²` columns by `t`.
///
/// Column `sN` belongs to the N-th config; comment lines map labels to
/// schedules and give fitted slopes. Runs that diverge keep their partial
/// columns and are flagged in the comments.
pub fn cmd_compare(configs: &[ExperimentConfig], out: Option<&Path>) -> Outcome {
    if configs.len() < 2 {
        return Outcome::failure(&Error::Usage("compare needs at least two configs".into()));
    }
    let experiments: Vec<Experiment> = match configs.iter().map(ExperimentConfig::resolve).collect() {
        Ok(v) => v,
        Err(err) => return Outcome::failure(&err),
    };
    let first = &experiments[0];
    for (i, e) in experiments.iter().enumerate().skip(1) {
        if !same_problem(&first.problem, &e.problem) {
            return Outcome::failure(&Error::Usage(format!(
                "config {} uses problem {}, config 1 uses {}",
                i + 1,
                e.problem.id(),
                first.problem.id()
            )));
        }
        if e.z0 != first.z0 {
            return Outcome::failure(&Error::Usage(format!(
                "config {} starts from a different z0 than config 1",
                i + 1
            )));
        }
    }

    let runs: Vec<(Trace, Option<Error>)> = experiments
        .par_iter()
        .map(|e| match solver::run(&e.problem, &e.schedule, &e.z0, run_options(e)) {
            Ok(t) => (t, None),
            Err(f) => (f.trace, Some(f.error)),
        })
        .collect();

    let mut o = Outcome::new();
    let mut s = String::new();
    let _ = writeln!(s, "# problem: {}", first.problem.id());
    let _ = writeln!(
        s,
        "# z0: {}",
        first.z0.coords().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    );
    for (i, (e, (trace, err))) in experiments.iter().zip(&runs).enumerate() {
        let label = format!("s{}", i + 1);
        let _ = writeln!(s, "# {label}: {}", e.schedule);
        let t_to = trace.last().map_or(0, |r| r.t);
        let t_from = if e.steps >= 10 * verify::RATE_FIT_FROM {
            verify::RATE_FIT_FROM
        } else {
            1
        };
        match verify::fit_rate(trace, t_from, t_to) {
            Ok(f) => {
                let _ = writeln!(
                    s,
                    "# {label} slope: {} r_squared: {} window: [{}, {}]",
                    fmt_f64(f.slope),
                    fmt_f64(f.r_squared),
                    f.t_from,
                    f.t_to
                );
            }
            Err(fit_err) => {
                let _ = writeln!(s, "# {label} slope: - ({fit_err})");
            }
        }
        if let Some(err) = err {
            let _ = writeln!(s, "# {label} status: stopped ({err})");
            let _ = writeln!(o.stderr, "warning: {label} ({}) {err}", e.schedule);
        }
    }

    s.push_str("t,log10_t");
    for i in 1..=runs.len() {
        let _ = write!(s, ",s{i}_grad_norm_sq,s{i}_log10_grad_norm_sq");
    }
    s.push('\n');
    let mut ts: Vec<usize> = runs
        .iter()
        .flat_map(|(tr, _)| tr.rows.iter().map(|r| r.t))
        .collect();
    ts.sort_unstable();
    ts.dedup();
    let mut cursors = vec![0usize; runs.len()];
    for t in ts {
        let _ = write!(s, "{t},");
        if t > 0 {
            s.push_str(&fmt_f64((t as f64).log10()));
        }
        for (k, (trace, _)) in runs.iter().enumerate() {
            let rows = &trace.rows;
            while cursors[k] < rows.len() && rows[cursors[k]].t < t {
                cursors[k] += 1;
            }
            match rows.get(cursors[k]).filter(|r| r.t == t) {
                Some(r) => {
                    let log = if r.grad_norm_sq > 0.0 {
                        fmt_f64(r.grad_norm_sq.log10())
                    } else {
                        String::new()
                    };
                    let _ = write!(s, ",{},{log}", fmt_f64(r.grad_norm_sq));
                }
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    o.emit(out, s);
    o
}

fn same_problem(a: &ProblemSpec, b: &ProblemSpec) -> bool {
    a.id() == b.id()
        && a.lipschitz() == b.lipschitz()
        && a.operator_matrix() == b.operator_matrix()
}

/// Scalar audit for one γ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaAudit {
    pub gamma: f64,
    pub contraction: ScanReport,
    pub error_coefficient: ScanReport,
    pub asymptotic: AsymptoticReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub schedule: String,
    pub t_max: usize,
    pub audits: Vec<GammaAudit>,
    pub pass: bool,
}

/// Largest `t_max` for which per-`t` margins are printed by default.
pub const PER_T_PRINT_LIMIT: usize = 100;

/// `schedule-audit`: trace-free scans of the contraction and error
/// coefficient bounds plus the asymptotic residual envelopes, with `K = 1`.
///
/// `schedule` is `anchored-new` or `anchored-new:gamma=…`; an explicit
/// `gammas` list overrides the string's γ.
pub fn cmd_schedule_audit(
    schedule: &str,
    gammas: &[f64],
    t_max: usize,
    per_t: Option<bool>,
    report: Option<&Path>,
) -> Outcome {
    let name = schedule.split_once(':').map_or(schedule, |(n, _)| n).trim();
    if name != "anchored-new" {
        return Outcome::failure(&Error::Usage(format!(
            "schedule-audit applies to anchored-new schedules, got '{name}'"
        )));
    }
    let gammas: Vec<f64> = if gammas.is_empty() {
        match Schedule::parse(schedule, 1.0) {
            Ok(s) => s.gamma().into_iter().collect(),
            Err(err) => return Outcome::failure(&err),
        }
    } else {
        gammas.to_vec()
    };
    if t_max == 0 {
        return Outcome::failure(&Error::Usage("t_max must be at least 1".into()));
    }
    let schedules: Vec<Schedule> = match gammas.iter().map(|&g| Schedule::anchored_new(g, 1.0)).collect() {
        Ok(v) => v,
        Err(err) => return Outcome::failure(&err),
    };

    let audits: Vec<crate::Result<GammaAudit>> = schedules
        .par_iter()
        .map(|s| {
            let contraction = schedules::check_contraction_bound(s, t_max)?;
            let error_coefficient = schedules::check_error_coefficient_bound(s, t_max)?;
            let asymptotic = schedules::check_asymptotic_residuals(s, t_max)?;
            Ok(GammaAudit {
                gamma: contraction.gamma,
                pass: contraction.pass && error_coefficient.pass && asymptotic.pass,
                contraction,
                error_coefficient,
                asymptotic,
            })
        })
        .collect();
    let audits: Vec<GammaAudit> = match audits.into_iter().collect() {
        Ok(v) => v,
        Err(err) => return Outcome::failure(&err),
    };

    let mut o = Outcome::new();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>9} {:>24} {:>9} {:>24} {:>9} {:>12} {:>12} {:>6}",
        "gamma", "t_max", "contraction_min_margin", "at_t", "error_min_margin", "at_t", "r1*s^2", "r2*s^4", "status"
    );
    for a in &audits {
        let _ = writeln!(
            s,
            "{:>6} {:>9} {:>24} {:>9} {:>24} {:>9} {:>12.6} {:>12.6} {:>6}",
            a.gamma,
            t_max,
            fmt_f64(a.contraction.min_margin),
            a.contraction.argmin_t,
            fmt_f64(a.error_coefficient.min_margin),
            a.error_coefficient.argmin_t,
            a.asymptotic.max_scaled_r1,
            a.asymptotic.max_scaled_r2,
            if a.pass { "pass" } else { "FAIL" }
        );
    }
    if per_t.unwrap_or(t_max <= PER_T_PRINT_LIMIT) {
        s.push_str("gamma,t,contraction_margin,error_margin,r1,r2\n");
        for sched in &schedules {
            let gamma = sched.gamma().unwrap_or(f64::NAN);
            for t in 1..=t_max {
                let row = sched.difference_coefficients(t).and_then(|c| {
                    let (r1, r2) = schedules::asymptotic_residuals(sched, t)?;
                    Ok((
                        schedules::contraction_margin(&c, gamma, schedules::CONTRACTION_CONSTANT),
                        schedules::error_coefficient_margin(&c, gamma),
                        r1,
                        r2,
                    ))
                });
                match row {
                    Ok((cm, em, r1, r2)) => {
                        let _ = writeln!(
                            s,
                            "{gamma},{t},{},{},{},{}",
                            fmt_f64(cm),
                            fmt_f64(em),
                            fmt_f64(r1),
                            fmt_f64(r2)
                        );
                    }
                    Err(err) => return Outcome::failure(&err),
                }
            }
        }
    }
    o.stdout = s;
    let pass = audits.iter().all(|a| a.pass);
    if !pass {
        o.status = ExitStatus::CheckFailed;
    }
    if let Some(path) = report {
        let full = AuditReport {
            schedule: "anchored-new".into(),
            t_max,
            audits,
            pass,
        };
        let mut json = serde_json::to_string_pretty(&full).expect("audit report serializes");
        json.push('\n');
        o.emit(Some(path), json);
    }
    o
}
