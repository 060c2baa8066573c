//! Numerical checks of the per-step inequalities, the exact difference
//! identity, the explicit constants `D`, `E`, `C` and the last-iterate bound,
//! evaluated on recorded traces.
//!
//! Inequality checks report a *relative* margin
//! `(rhs - lhs) / max(|rhs|, |lhs|)` and pass when it is at least
//! `-INEQUALITY_REL_TOL`; the slack absorbs rounding only. The identity check
//! reports `IDENTITY_REL_TOL - residual / max(1, ‖d_{t+1}‖)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{validate_assumptions, Point, ProblemSpec};
use crate::schedules::Schedule;
use crate::solver::{self, reconstruct_gradient_norm, IterateState, RunOptions};
use crate::trace::Trace;

pub const INEQUALITY_REL_TOL: f64 = 1e-10;
pub const IDENTITY_REL_TOL: f64 = 1e-12;

/// Bound factor `‖z_t - z*‖² ≤ 12 ‖z_0 - z*‖²`.
pub const ITERATE_BOUND_FACTOR: f64 = 12.0;
/// Coefficient of `α_t²K²` in the one-step distance inequality.
pub const ONE_STEP_LIPSCHITZ_COEF: f64 = 1.5;
/// Dense pass length used when a trace is too sparse for the one-step check.
pub const DENSE_PASS_STEPS: usize = 1000;
/// Largest `t` probed by the difference identity check.
pub const IDENTITY_T_MAX: usize = 100;
pub const RATE_FIT_MIN_POINTS: usize = 10;
pub const RATE_FIT_FROM: usize = 1000;

pub mod names {
    pub const ASSUMPTIONS: &str = "assumptions";
    pub const BOUNDED_ITERATES: &str = "bounded_iterates";
    pub const DIFF_CONTRACTION: &str = "diff_contraction";
    pub const DIFFERENCE_IDENTITY: &str = "difference_identity";
    pub const GRADIENT_RECONSTRUCTION: &str = "gradient_reconstruction";
    pub const LAST_ITERATE_RATE: &str = "last_iterate_rate";
    pub const ONE_STEP: &str = "one_step";

    pub const ALL: [&str; 7] = [
        ASSUMPTIONS,
        BOUNDED_ITERATES,
        DIFF_CONTRACTION,
        DIFFERENCE_IDENTITY,
        GRADIENT_RECONSTRUCTION,
        LAST_ITERATE_RATE,
        ONE_STEP,
    ];
}

/// The explicit constants of the last-iterate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub d1_norm: f64,
    pub z0_dist: f64,
}

impl Constants {
    /// `D = (√12+1)‖z_0-z*‖`, `E = max(‖d_1‖(1+γ), 20γD)`, `C = K²(E+γD)²`.
    pub fn from_parts(gamma: f64, k: f64, z0_dist: f64, d1_norm: f64) -> Self {
        let d = (12f64.sqrt() + 1.0) * z0_dist;
        let e = (d1_norm * (1.0 + gamma)).max(20.0 * gamma * d);
        let c = k * k * (e + gamma * d).powi(2);
        Self {
            d,
            e,
            c,
            gamma,
            k,
            d1_norm,
            z0_dist,
        }
    }
}

pub fn compute_constants(trace: &Trace, schedule: &Schedule) -> Result<Constants> {
    if !schedule.is_anchored_new() {
        return Err(Error::Inapplicable(format!(
            "constants D, E, C are defined for anchored-new, not {}",
            schedule.kind().name()
        )));
    }
    let gamma = schedule.gamma().expect("anchored schedule has gamma");
    let z0_dist = trace
        .z0_dist()
        .ok_or_else(|| Error::data("trace lacks ‖z_0 - z*‖ at t=0"))?;
    let d1 = trace
        .d1_norm()
        .ok_or_else(|| Error::data("trace lacks ‖z_2 - z_1‖ at t=1"))?;
    Ok(Constants::from_parts(gamma, schedule.lipschitz(), z0_dist, d1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub pass: bool,
    pub worst_margin: Option<f64>,
    pub worst_t: Option<usize>,
    pub detail: String,
}

impl CheckResult {
    pub fn inapplicable(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::Inapplicable,
            pass: false,
            worst_margin: None,
            worst_t: None,
            detail: reason.into(),
        }
    }

    fn from_worst(name: &str, worst: Worst, tolerance: f64, detail: String) -> Self {
        let pass = worst.margin >= -tolerance;
        Self {
            name: name.to_string(),
            status: if pass {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            pass,
            worst_margin: Some(worst.margin),
            worst_t: worst.t,
            detail,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

/// Running minimum of a margin with its location.
#[derive(Debug, Clone, Copy)]
struct Worst {
    margin: f64,
    t: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            t: None,
        }
    }

    fn push(&mut self, t: usize, margin: f64) {
        // NaN margins count as violations
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if self.t.is_none() || margin < self.margin {
            self.margin = margin;
            self.t = Some(t);
        }
    }

    /// Relative margin of `lhs ≤ rhs`.
    fn push_le(&mut self, t: usize, lhs: f64, rhs: f64) {
        self.push(t, relative_margin(lhs, rhs));
    }

    fn finish(self) -> Self {
        if self.t.is_none() {
            Self {
                margin: 0.0,
                t: None,
            }
        } else {
            self
        }
    }
}

pub fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// `‖z_{t+1}-z*‖² ≤ (1 - β_t + 1.5α_t²K²)‖z_t-z*‖² + (β_t + 2β_t²)‖z_0-z*‖²`
/// at every consecutive pair of rows. Requires a stride-1 trace.
pub fn check_one_step(trace: &Trace, schedule: &Schedule) -> Result<CheckResult> {
    check_one_step_with(trace, schedule, ONE_STEP_LIPSCHITZ_COEF)
}

pub fn check_one_step_with(trace: &Trace, schedule: &Schedule, lipschitz_coef: f64) -> Result<CheckResult> {
    let name = names::ONE_STEP;
    if !schedule.is_anchored_new() {
        return Ok(CheckResult::inapplicable(
            name,
            format!("defined for anchored-new, not {}", schedule.kind().name()),
        ));
    }
    if !trace.is_contiguous() {
        return Err(Error::data("one-step check needs a stride-1 trace"));
    }
    let Some(d0) = trace.row(0).and_then(|r| r.dist_opt_sq) else {
        return Ok(CheckResult::inapplicable(name, "saddle point unknown"));
    };
    let k2 = schedule.lipschitz().powi(2);
    let mut worst = Worst::new();
    for pair in trace.rows.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let (Some(dc), Some(dn)) = (cur.dist_opt_sq, next.dist_opt_sq) else {
            return Ok(CheckResult::inapplicable(name, "saddle point unknown"));
        };
        let t = cur.t;
        let a = schedule.alpha(t);
        let b = schedule.beta(t);
        let rhs = (1.0 - b + lipschitz_coef * a * a * k2) * dc + (b + 2.0 * b * b) * d0;
        worst.push_le(t, dn, rhs);
    }
    let worst = worst.finish();
    Ok(CheckResult::from_worst(
        name,
        worst,
        INEQUALITY_REL_TOL,
        format!("{} consecutive pairs", trace.rows.len().saturating_sub(1)),
    ))
}

/// `‖z_t - z*‖² ≤ 12‖z_0 - z*‖²` and `‖z_t - z_0‖ ≤ D` at every recorded row.
pub fn check_bounded_iterates(trace: &Trace) -> Result<CheckResult> {
    let name = names::BOUNDED_ITERATES;
    let Some(d0) = trace.row(0).and_then(|r| r.dist_opt_sq) else {
        return Err(Error::Inapplicable(
            "saddle point unknown; bounded-iterate check needs ‖z_0 - z*‖".into(),
        ));
    };
    let d_const = (12f64.sqrt() + 1.0) * d0.sqrt();
    let mut worst = Worst::new();
    let mut max_ratio = 0.0_f64;
    for r in &trace.rows {
        let dt = r
            .dist_opt_sq
            .ok_or_else(|| Error::Inapplicable(format!("row t={} lacks ‖z_t - z*‖²", r.t)))?;
        worst.push_le(r.t, dt, ITERATE_BOUND_FACTOR * d0);
        worst.push_le(r.t, r.dist_anchor, d_const);
        if d0 > 0.0 {
            max_ratio = max_ratio.max(dt / d0);
        }
    }
    Ok(CheckResult::from_worst(
        name,
        worst.finish(),
        INEQUALITY_REL_TOL,
        format!("max ‖z_t-z*‖²/‖z_0-z*‖² observed = {max_ratio:.6} (bound 12)"),
    ))
}

/// Steps the update to `max(t_list) + 2` and compares `z_{t+2} - z_{t+1}`
/// with `A·d_t - α_{t+1}(G(z_{t+1}) - G(z_t)) + E_err·(z_0 - z_t)`.
pub fn check_difference_identity(
    problem: &ProblemSpec,
    schedule: &Schedule,
    z0: &Point,
    t_list: &[usize],
) -> Result<CheckResult> {
    let name = names::DIFFERENCE_IDENTITY;
    if schedule.gamma().is_none() {
        return Ok(CheckResult::inapplicable(
            name,
            "difference identity is defined for anchored schedules",
        ));
    }
    let Some(&t_max) = t_list.iter().max() else {
        return Err(Error::usage("t_list is empty"));
    };
    let mut iterates = vec![z0.coords().to_vec()];
    let mut state = IterateState::start(z0.clone());
    for _ in 0..t_max + 2 {
        state = solver::step(&state, problem, schedule)?;
        iterates.push(state.z.coords().to_vec());
    }
    let d = problem.dim();
    let anchor = z0.coords();
    let mut g_t = vec![0.0; d];
    let mut g_next = vec![0.0; d];
    let mut worst = Worst::new();
    let mut max_residual = 0.0_f64;
    for &t in t_list {
        let (zt, z1, z2) = (&iterates[t], &iterates[t + 1], &iterates[t + 2]);
        let coeffs = schedule.difference_coefficients(t)?;
        let alpha_next = schedule.alpha(t + 1);
        problem.apply(zt, &mut g_t);
        problem.apply(z1, &mut g_next);
        let lhs = linalg::sub(z2, z1);
        let residual_sq: f64 = (0..d)
            .map(|i| {
                let rhs = coeffs.a * (z1[i] - zt[i]) - alpha_next * (g_next[i] - g_t[i])
                    + coeffs.e_err * (anchor[i] - zt[i]);
                (lhs[i] - rhs).powi(2)
            })
            .sum();
        let rel = residual_sq.sqrt() / 1f64.max(linalg::norm(&lhs));
        max_residual = max_residual.max(rel);
        worst.push(t, IDENTITY_REL_TOL - rel);
    }
    Ok(CheckResult::from_worst(
        name,
        worst.finish(),
        0.0,
        format!("max relative residual {max_residual:.3e} over {} steps", t_list.len()),
    ))
}

/// `‖z_{t+1} - z_t‖ ≤ E/(t+γ)` for recorded `t ≥ 1`.
pub fn check_diff_contraction(trace: &Trace, constants: &Constants) -> CheckResult {
    let mut worst = Worst::new();
    for r in trace.rows.iter().filter(|r| r.t >= 1) {
        if let Some(diff) = r.diff_norm {
            worst.push_le(r.t, diff, constants.e / (r.t as f64 + constants.gamma));
        }
    }
    CheckResult::from_worst(
        names::DIFF_CONTRACTION,
        worst.finish(),
        INEQUALITY_REL_TOL,
        format!("E = {:.6}", constants.e),
    )
}

/// `‖G(z_t)‖² ≤ C/(t+γ)` and `‖G(z_t)‖² ≤ C/t` for recorded `t ≥ 1`; the
/// margin reported is the one of the tighter `C/(t+γ)` bound.
pub fn check_last_iterate_rate(trace: &Trace, constants: &Constants) -> CheckResult {
    let mut tight = Worst::new();
    let mut stated = Worst::new();
    let mut max_scaled = 0.0_f64;
    for r in trace.rows.iter().filter(|r| r.t >= 1) {
        let t = r.t as f64;
        tight.push_le(r.t, r.grad_norm_sq, constants.c / (t + constants.gamma));
        stated.push_le(r.t, r.grad_norm_sq, constants.c / t);
        max_scaled = max_scaled.max(r.grad_norm_sq * (t + constants.gamma));
    }
    let (tight, stated) = (tight.finish(), stated.finish());
    let mut result = CheckResult::from_worst(
        names::LAST_ITERATE_RATE,
        tight,
        INEQUALITY_REL_TOL,
        format!(
            "C = {:.6}; max ‖G(z_t)‖²·(t+γ) = {max_scaled:.6e}; C/t margin {:.6}",
            constants.c, stated.margin
        ),
    );
    if stated.margin < -INEQUALITY_REL_TOL {
        result.status = CheckStatus::Fail;
        result.pass = false;
    }
    result
}

/// The reconstructed bound `(1/α_t)‖d_t‖ + (β_t/α_t)‖z_t - z_0‖` dominates `‖G(z_t)‖`.
pub fn check_gradient_reconstruction(trace: &Trace, schedule: &Schedule) -> Result<CheckResult> {
    let mut worst = Worst::new();
    let mut rows = 0;
    for r in trace.rows.iter().filter(|r| r.diff_norm.is_some()) {
        let bound = reconstruct_gradient_norm(r, schedule)?;
        worst.push_le(r.t, r.grad_norm_sq.sqrt(), bound);
        rows += 1;
    }
    Ok(CheckResult::from_worst(
        names::GRADIENT_RECONSTRUCTION,
        worst.finish(),
        INEQUALITY_REL_TOL,
        format!("{rows} rows"),
    ))
}

pub const ASSUMPTION_SAMPLES: usize = 1000;

/// Sampling witness for monotonicity and the declared `K`.
pub fn check_assumptions(problem: &ProblemSpec, radius: f64, seed: u64) -> Result<CheckResult> {
    let r = validate_assumptions(problem, ASSUMPTION_SAMPLES, radius, seed)?;
    let margin = (r.min_monotone_inner_product + 1e-10).min(1.0 + 1e-9 - r.max_lipschitz_ratio);
    let mut worst = Worst::new();
    worst.push(0, margin);
    let mut result = CheckResult::from_worst(
        names::ASSUMPTIONS,
        worst,
        0.0,
        format!(
            "min ⟨G(z)-G(w), z-w⟩ = {:.3e}, max Lipschitz ratio = {:.12}, {} samples",
            r.min_monotone_inner_product, r.max_lipschitz_ratio, r.samples_used
        ),
    );
    result.worst_t = None;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_from: usize,
    pub t_to: usize,
    pub points: usize,
}

/// Least-squares slope of `ln‖G(z_t)‖²` against `ln t` over recorded rows
/// with `t_from ≤ t ≤ t_to` (and `t ≥ 1`).
pub fn fit_rate(trace: &Trace, t_from: usize, t_to: usize) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.t >= t_from.max(1) && r.t <= t_to)
        .map(|r| {
            if r.grad_norm_sq > 0.0 {
                Ok(((r.t as f64).ln(), r.grad_norm_sq.ln()))
            } else {
                Err(Error::DegenerateFit(format!(
                    "‖G(z_t)‖² = 0 at t={} (solved exactly)",
                    r.t
                )))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < RATE_FIT_MIN_POINTS {
        return Err(Error::data(format!(
            "rate fit needs at least {RATE_FIT_MIN_POINTS} rows in [{t_from}, {t_to}], found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all points share one t".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        t_from,
        t_to,
        points: pts.len(),
    })
}

/// Serialized form of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub problem: String,
    pub schedule: String,
    pub constants: Option<ReportConstants>,
    pub checks: Vec<CheckResult>,
    pub rate_fit: Option<ReportRateFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConstants {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRateFit {
    pub slope: f64,
    pub r_squared: f64,
    pub window: [usize; 2],
}

impl VerificationReport {
    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(CheckResult::failed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything the full check battery needs.
#[derive(Debug, Clone, Copy)]
pub struct VerifyInputs<'a> {
    pub problem: &'a ProblemSpec,
    pub schedule: &'a Schedule,
    pub z0: &'a Point,
    pub trace: &'a Trace,
    pub seed: u64,
}

/// Runs the selected checks (all of [`names::ALL`] when `selected` is empty)
/// and assembles a report with checks sorted by name.
pub fn verify(inputs: VerifyInputs<'_>, selected: &[&str]) -> Result<VerificationReport> {
    let VerifyInputs {
        problem,
        schedule,
        z0,
        trace,
        seed,
    } = inputs;
    for s in selected {
        if !names::ALL.contains(s) {
            return Err(Error::usage(format!("unknown check '{s}'")));
        }
    }
    let wants = |n: &str| selected.is_empty() || selected.contains(&n);
    let constants = compute_constants(trace, schedule);
    let mut checks = Vec::new();

    if wants(names::ASSUMPTIONS) {
        let radius = 1f64.max(z0.norm() * 2.0);
        checks.push(check_assumptions(problem, radius, seed)?);
    }
    if wants(names::BOUNDED_ITERATES) {
        // the factor 12 comes from the anchored-new analysis
        checks.push(if !schedule.is_anchored_new() {
            CheckResult::inapplicable(
                names::BOUNDED_ITERATES,
                format!("defined for anchored-new, not {}", schedule.kind().name()),
            )
        } else {
            match check_bounded_iterates(trace) {
                Err(Error::Inapplicable(why)) => CheckResult::inapplicable(names::BOUNDED_ITERATES, why),
                other => other?,
            }
        });
    }
    for (name, f) in [
        (names::DIFF_CONTRACTION, check_diff_contraction as fn(&Trace, &Constants) -> CheckResult),
        (names::LAST_ITERATE_RATE, check_last_iterate_rate),
    ] {
        if !wants(name) {
            continue;
        }
        checks.push(match &constants {
            Ok(c) => f(trace, c),
            Err(Error::Inapplicable(why)) => CheckResult::inapplicable(name, why.clone()),
            Err(e) => return Err(Error::data(e.to_string())),
        });
    }
    if wants(names::DIFFERENCE_IDENTITY) {
        let t_list: Vec<usize> = (0..=IDENTITY_T_MAX.min(trace.header.steps)).collect();
        checks.push(check_difference_identity(problem, schedule, z0, &t_list)?);
    }
    if wants(names::GRADIENT_RECONSTRUCTION) {
        checks.push(check_gradient_reconstruction(trace, schedule)?);
    }
    if wants(names::ONE_STEP) {
        let result = if !schedule.is_anchored_new() {
            check_one_step(trace, schedule)?
        } else if trace.is_contiguous() {
            check_one_step(trace, schedule)?
        } else {
            let steps = DENSE_PASS_STEPS.min(trace.header.steps);
            match solver::run(problem, schedule, z0, RunOptions::new(steps, 1)) {
                Ok(dense) => {
                    let mut r = check_one_step(&dense, schedule)?;
                    r.detail = format!("{} (dense replay, T={steps})", r.detail);
                    r
                }
                Err(f) => return Err(f.error),
            }
        };
        checks.push(result);
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));

    let t_to = trace.header.steps;
    let t_from = if t_to >= 10 * RATE_FIT_FROM { RATE_FIT_FROM } else { 1 };
    let rate_fit = fit_rate(trace, t_from, t_to).ok().map(|f| ReportRateFit {
        slope: f.slope,
        r_squared: f.r_squared,
        window: [f.t_from, f.t_to],
    });

    Ok(VerificationReport {
        problem: trace.header.problem.clone(),
        schedule: trace.header.schedule.clone(),
        constants: constants.ok().map(|c| ReportConstants {
            d: c.d,
            e: c.e,
            c: c.c,
            gamma: c.gamma,
            k: c.k,
        }),
        checks,
        rate_fit,
    })
}
