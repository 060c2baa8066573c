//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export takes plain strings and numbers so the page can pass form
//! values straight through; errors come back as thrown strings.

use anchored_gda::problems::{Point, ProblemSpec};
use anchored_gda::schedules::{self, Schedule};
use anchored_gda::solver::{self, IterateState, RunOptions};
use anchored_gda::verify::{self, Constants};
use wasm_bindgen::prelude::*;

/// Rows kept per curve; the page only has a few hundred pixels to fill.
const MAX_POINTS: usize = 2000;

/// Iterates whose distance from the anchor exceeds this multiple of
/// `‖z_0‖ + 1` end the trajectory.
const ESCAPE_FACTOR: f64 = 1e6;

fn setup(problem: &str, schedule: &str, z0: &[f64]) -> Result<(ProblemSpec, Schedule, Point), String> {
    let p = ProblemSpec::parse(problem).map_err(|e| e.to_string())?;
    let s = Schedule::parse(schedule, p.lipschitz()).map_err(|e| e.to_string())?;
    if z0.len() != p.dim() {
        return Err(format!("z0 has {} coordinates, problem needs {}", z0.len(), p.dim()));
    }
    let z0 = Point::new(z0.to_vec(), p.n()).map_err(|e| e.to_string())?;
    Ok((p, s, z0))
}

/// `(x₁, y₁)` of every iterate, flattened as `[x₀, y₀, x₁, y₁, …]`.
///
/// Stops early once the iterate leaves a large ball around the anchor.
#[wasm_bindgen]
pub fn trajectory(problem: &str, schedule: &str, z0: Vec<f64>, steps: usize) -> Result<Vec<f64>, String> {
    let (p, s, z0) = setup(problem, schedule, &z0)?;
    let n = p.n();
    let limit = ESCAPE_FACTOR * (z0.norm() + 1.0);
    let stride = steps.div_ceil(MAX_POINTS).max(1);
    let mut st = IterateState::start(z0);
    let mut out = vec![st.z.coords()[0], st.z.coords()[n]];
    for t in 1..=steps {
        st = match solver::step(&st, &p, &s) {
            Ok(next) => next,
            Err(_) => break,
        };
        let (x, y) = (st.z.coords()[0], st.z.coords()[n]);
        let far = st.z.coords().iter().zip(st.anchor.coords()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > limit;
        if t % stride == 0 || t == steps || far {
            out.extend([x, y]);
        }
        if far {
            break;
        }
    }
    Ok(out)
}

/// `‖G(z_t)‖²` along a run, with the `C/(t+γ)` envelope when the schedule
/// carries one.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    t: Vec<f64>,
    grad_norm_sq: Vec<f64>,
    bound: Vec<f64>,
    constant: f64,
    slope: f64,
    status: String,
}

#[wasm_bindgen]
impl RateCurve {
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    #[wasm_bindgen(js_name = gradNormSq)]
    pub fn grad_norm_sq(&self) -> Vec<f64> {
        self.grad_norm_sq.clone()
    }

    /// Empty unless the schedule is anchored-new.
    pub fn bound(&self) -> Vec<f64> {
        self.bound.clone()
    }

    /// `C`, or NaN without an envelope.
    #[wasm_bindgen(getter)]
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Fitted log-log slope over the second half of the run; NaN if undefined.
    #[wasm_bindgen(getter)]
    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// `"ok"` or `"stopped at t=…"`.
    #[wasm_bindgen(getter)]
    pub fn status(&self) -> String {
        self.status.clone()
    }
}

#[wasm_bindgen(js_name = rateCurve)]
pub fn rate_curve(problem: &str, schedule: &str, z0: Vec<f64>, steps: usize) -> Result<RateCurve, String> {
    let (p, s, z0) = setup(problem, schedule, &z0)?;
    let opts = RunOptions::new(steps, steps.div_ceil(MAX_POINTS).max(1));
    let (trace, status) = match solver::run(&p, &s, &z0, opts) {
        Ok(tr) => (tr, "ok".to_string()),
        Err(f) => match f.halted_at() {
            Some(t) => (f.trace, format!("stopped at t={t}")),
            None => return Err(f.to_string()),
        },
    };
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.t >= 1).collect();
    let constants: Option<Constants> = verify::compute_constants(&trace, &s).ok();
    let bound = match constants {
        Some(c) => rows.iter().map(|r| c.c / (r.t as f64 + c.gamma)).collect(),
        None => Vec::new(),
    };
    let last = trace.rows.last().map_or(0, |r| r.t);
    let slope = verify::fit_rate(&trace, (last / 2).max(1), last).map_or(f64::NAN, |f| f.slope);
    Ok(RateCurve {
        t: rows.iter().map(|r| r.t as f64).collect(),
        grad_norm_sq: rows.iter().map(|r| r.grad_norm_sq).collect(),
        bound,
        constant: constants.map_or(f64::NAN, |c| c.c),
        slope,
        status,
    })
}

/// Contraction and error-coefficient margins of the anchored-new schedule on
/// a log-spaced grid in `[1, t_max]`, flattened as `[t, contraction, error, …]`.
/// Both are non-negative exactly when the step-size conditions hold at `t`.
#[wasm_bindgen(js_name = auditMargins)]
pub fn audit_margins(gamma: f64, t_max: usize, points: usize) -> Result<Vec<f64>, String> {
    let s = Schedule::anchored_new(gamma, 1.0).map_err(|e| e.to_string())?;
    if t_max == 0 || points < 2 {
        return Err("need t_max ≥ 1 and at least 2 points".into());
    }
    let span = (t_max as f64).ln();
    let mut grid: Vec<usize> = (0..points)
        .map(|i| (span * i as f64 / (points - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(1, t_max))
        .collect();
    grid.dedup();
    let mut out = Vec::with_capacity(3 * grid.len());
    for t in grid {
        let c = s.difference_coefficients(t).map_err(|e| e.to_string())?;
        out.extend([
            t as f64,
            schedules::contraction_margin(&c, gamma, schedules::CONTRACTION_CONSTANT),
            schedules::error_coefficient_margin(&c, gamma),
        ]);
    }
    Ok(out)
}
