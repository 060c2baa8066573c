//! The anchored update `z_{t+1} = z_t - α_t G(z_t) + β_t (z_0 - z_t)` and the
//! trace-recording driver around it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{Point, ProblemSpec};
use crate::schedules::Schedule;
use crate::trace::{Trace, TraceHeader, TraceRow};

/// Any coordinate above this magnitude is reported as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e150;

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub t: usize,
    pub z: Point,
    pub anchor: Point,
    pub prev: Option<Point>,
}

impl IterateState {
    pub fn start(z0: Point) -> Self {
        Self {
            t: 0,
            anchor: z0.clone(),
            z: z0,
            prev: None,
        }
    }
}

/// Writes `z_{t+1}` into `out` given `g = G(z_t)`.
///
/// Per coordinate the gradient term is applied first and the anchor term
/// second, in a single expression, so results are reproducible bit for bit.
#[inline]
fn update_into(
    t: usize,
    alpha: f64,
    beta: f64,
    z: &[f64],
    z0: &[f64],
    g: &[f64],
    out: &mut [f64],
) -> Result<()> {
    for i in 0..z.len() {
        let v = z[i] - alpha * g[i] + beta * (z0[i] - z[i]);
        if !v.is_finite() {
            return Err(Error::NonFinite { t: t + 1, index: i });
        }
        if v.abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged {
                t: t + 1,
                index: i,
                value: v,
            });
        }
        out[i] = v;
    }
    Ok(())
}

/// One anchored step.
pub fn step(state: &IterateState, problem: &ProblemSpec, schedule: &Schedule) -> Result<IterateState> {
    if state.z.n() != problem.n() || state.z.m() != problem.m() || state.anchor.dim() != state.z.dim() {
        return Err(Error::usage("iterate dimensions do not match the problem"));
    }
    let g = problem.eval_operator(&state.z)?;
    let mut next = vec![0.0; problem.dim()];
    update_into(
        state.t,
        schedule.alpha(state.t),
        schedule.beta(state.t),
        state.z.coords(),
        state.anchor.coords(),
        g.coords(),
        &mut next,
    )?;
    Ok(IterateState {
        t: state.t + 1,
        z: Point::new(next, problem.n())?,
        anchor: state.anchor.clone(),
        prev: Some(state.z.clone()),
    })
}

/// A run that stopped early; `trace` holds every row recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub trace: Trace,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

impl RunFailure {
    /// Iteration at which the run stopped, for divergence failures.
    pub fn halted_at(&self) -> Option<usize> {
        match self.error {
            Error::Diverged { t, .. } | Error::NonFinite { t, .. } => Some(t),
            _ => None,
        }
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure {
            trace: Trace {
                header: TraceHeader {
                    problem: String::new(),
                    schedule: String::new(),
                    steps: 0,
                    lipschitz: f64::NAN,
                    gamma: None,
                    seed: 0,
                    record_every: 1,
                },
                rows: Vec::new(),
                snapshots: BTreeMap::new(),
            },
            error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub steps: usize,
    pub record_every: usize,
    /// Recorded in the trace header; the solver itself draws no randomness.
    pub seed: u64,
}

impl RunOptions {
    pub fn new(steps: usize, record_every: usize) -> Self {
        Self {
            steps,
            record_every,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Iterate `steps` times from `z0`, recording rows at multiples of
/// `record_every` and always at `t ∈ {0, 1, 2, T-1, T}`.
pub fn run(
    problem: &ProblemSpec,
    schedule: &Schedule,
    z0: &Point,
    opts: RunOptions,
) -> std::result::Result<Trace, RunFailure> {
    let RunOptions {
        steps,
        record_every,
        seed,
    } = opts;
    if steps == 0 {
        return Err(Error::usage("T must be at least 1").into());
    }
    if record_every == 0 {
        return Err(Error::usage("record_every must be at least 1").into());
    }
    if z0.n() != problem.n() || z0.m() != problem.m() {
        return Err(Error::usage(format!(
            "z0 has shape ({}, {}), problem expects ({}, {})",
            z0.n(),
            z0.m(),
            problem.n(),
            problem.m()
        ))
        .into());
    }
    if schedule.is_anchored_new() && schedule.lipschitz() != problem.lipschitz() {
        return Err(Error::usage(format!(
            "schedule K={} differs from problem K={}",
            schedule.lipschitz(),
            problem.lipschitz()
        ))
        .into());
    }

    let always = [0, 1, 2, steps.saturating_sub(1), steps];
    let mut trace = Trace {
        header: TraceHeader {
            problem: problem.id().to_string(),
            schedule: schedule.to_string(),
            steps,
            lipschitz: problem.lipschitz(),
            gamma: schedule.gamma(),
            seed,
            record_every,
        },
        rows: Vec::new(),
        snapshots: BTreeMap::new(),
    };

    let saddle = problem.saddle().coords();
    let anchor = z0.coords();
    let d = problem.dim();
    let mut z = anchor.to_vec();
    let mut next = vec![0.0; d];
    let mut g = vec![0.0; d];

    for t in 0..=steps {
        problem.apply(&z, &mut g);
        let keep = t % record_every == 0 || always.contains(&t);
        if always.contains(&t) {
            trace.snapshots.insert(t, z.clone());
        }
        let mut row = TraceRow {
            t,
            grad_norm_sq: linalg::norm_sq(&g),
            dist_opt_sq: Some(linalg::dist_sq(&z, saddle)),
            diff_norm: None,
            dist_anchor: linalg::dist(&z, anchor),
        };
        if t == steps {
            trace.rows.push(row);
            break;
        }
        let stepped = update_into(
            t,
            schedule.alpha(t),
            schedule.beta(t),
            &z,
            anchor,
            &g,
            &mut next,
        );
        if let Err(error) = stepped {
            trace.rows.push(row);
            return Err(RunFailure { trace, error });
        }
        if keep {
            row.diff_norm = Some(linalg::dist(&next, &z));
            trace.rows.push(row);
        }
        std::mem::swap(&mut z, &mut next);
    }
    Ok(trace)
}

/// Upper bound on `‖G(z_t)‖` from the rearranged update:
/// `(1/α_t)‖z_{t+1} - z_t‖ + (β_t/α_t)‖z_0 - z_t‖`.
pub fn reconstruct_gradient_norm(row: &TraceRow, schedule: &Schedule) -> Result<f64> {
    let diff = row
        .diff_norm
        .ok_or_else(|| Error::data(format!("row t={} has no diff_norm", row.t)))?;
    let alpha = schedule.alpha(row.t);
    let beta = schedule.beta(row.t);
    Ok(diff / alpha + (beta / alpha) * row.dist_anchor)
}
