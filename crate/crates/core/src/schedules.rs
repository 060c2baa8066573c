//! Step-size and anchoring schedules, and the scalar coefficients of the
//! consecutive-difference recursion
//!
//! ```text
//! d_{t+1} = A·d_t - α_{t+1}(G(z_{t+1}) - G(z_t)) + E_err·(z_0 - z_t)
//! A     = 1 - β_{t+1} - (α_t - α_{t+1})/α_t
//! E_err = ((α_t - α_{t+1})/α_t)·β_t + β_{t+1} - β_t
//! ```
//!
//! Differences such as `α_t - α_{t+1}` and `β_{t+1} - β_t` are evaluated in
//! closed form rather than by subtraction, so the coefficients stay accurate
//! to a few ulps even for `t` around 10⁶ where the raw subtraction would
//! cancel most significant digits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::parse_params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `α_t = 1/(K√(t+γ))`, `β_t = γ/(t+γ)`.
    AnchoredNew { gamma: f64 },
    /// `α_t = (1-p)/(t+1)^p`, `β_t = (1-p)γ/(t+1)`.
    AnchoredRyu { p: f64, gamma: f64 },
    /// Constant step, no anchoring.
    PlainGda { alpha: f64 },
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::AnchoredNew { .. } => "anchored-new",
            ScheduleKind::AnchoredRyu { .. } => "anchored-ryu",
            ScheduleKind::PlainGda { .. } => "plain-gda",
        }
    }

    fn validate(&self) -> Result<()> {
        let check_gamma = |gamma: f64| {
            if gamma.is_finite() && gamma >= 2.0 {
                Ok(())
            } else {
                Err(Error::usage(format!("gamma must be ≥ 2, got {gamma}")))
            }
        };
        match *self {
            ScheduleKind::AnchoredNew { gamma } => check_gamma(gamma),
            ScheduleKind::AnchoredRyu { p, gamma } => {
                check_gamma(gamma)?;
                if p > 0.5 && p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::usage(format!("p must lie in (1/2, 1), got {p}")))
                }
            }
            ScheduleKind::PlainGda { alpha } => {
                if alpha.is_finite() && alpha > 0.0 {
                    Ok(())
                } else {
                    Err(Error::usage(format!("alpha must be positive, got {alpha}")))
                }
            }
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::AnchoredNew { gamma } => write!(f, "anchored-new:gamma={gamma}"),
            ScheduleKind::AnchoredRyu { p, gamma } => {
                write!(f, "anchored-ryu:p={p},gamma={gamma}")
            }
            ScheduleKind::PlainGda { alpha } => write!(f, "plain-gda:alpha={alpha}"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// `anchored-new:gamma=2`, `anchored-ryu:p=0.75,gamma=2`, `plain-gda:alpha=0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut gamma = None;
        let mut p = None;
        let mut alpha = None;
        for (key, value) in parse_params(params)? {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::usage(format!("'{key}' expects a number, got '{value}'")))?;
            match key.as_str() {
                "gamma" => gamma = Some(v),
                "p" => p = Some(v),
                "alpha" => alpha = Some(v),
                "k" | "K" => {
                    return Err(Error::usage(
                        "K is taken from the problem and cannot be set in the schedule string",
                    ))
                }
                other => return Err(Error::usage(format!("unknown schedule parameter '{other}'"))),
            }
        }
        let missing = |what: &str| Error::usage(format!("schedule '{name}' requires {what}"));
        let extra = |what: &str| Error::usage(format!("schedule '{name}' does not take {what}"));
        let kind = match name {
            "anchored-new" => {
                if p.is_some() || alpha.is_some() {
                    return Err(extra("p or alpha"));
                }
                ScheduleKind::AnchoredNew {
                    gamma: gamma.ok_or_else(|| missing("gamma"))?,
                }
            }
            "anchored-ryu" => {
                if alpha.is_some() {
                    return Err(extra("alpha"));
                }
                ScheduleKind::AnchoredRyu {
                    p: p.ok_or_else(|| missing("p"))?,
                    gamma: gamma.ok_or_else(|| missing("gamma"))?,
                }
            }
            "plain-gda" => {
                if p.is_some() || gamma.is_some() {
                    return Err(extra("p or gamma"));
                }
                ScheduleKind::PlainGda {
                    alpha: alpha.ok_or_else(|| missing("alpha"))?,
                }
            }
            other => return Err(Error::usage(format!("unknown schedule '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A schedule bound to the Lipschitz constant of the problem it runs on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    lipschitz: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, lipschitz: f64) -> Result<Self> {
        kind.validate()?;
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::usage(format!("K must be positive, got {lipschitz}")));
        }
        Ok(Self { kind, lipschitz })
    }

    pub fn anchored_new(gamma: f64, lipschitz: f64) -> Result<Self> {
        Self::new(ScheduleKind::AnchoredNew { gamma }, lipschitz)
    }

    pub fn anchored_ryu(p: f64, gamma: f64, lipschitz: f64) -> Result<Self> {
        Self::new(ScheduleKind::AnchoredRyu { p, gamma }, lipschitz)
    }

    pub fn plain_gda(alpha: f64, lipschitz: f64) -> Result<Self> {
        Self::new(ScheduleKind::PlainGda { alpha }, lipschitz)
    }

    /// Parse a schedule string and bind it to `K`.
    pub fn parse(s: &str, lipschitz: f64) -> Result<Self> {
        Self::new(s.parse()?, lipschitz)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            ScheduleKind::AnchoredNew { gamma } | ScheduleKind::AnchoredRyu { gamma, .. } => {
                Some(gamma)
            }
            ScheduleKind::PlainGda { .. } => None,
        }
    }

    pub fn is_anchored_new(&self) -> bool {
        matches!(self.kind, ScheduleKind::AnchoredNew { .. })
    }

    /// `(1-p)γ > 1` makes `β_0 > 1`: the first step overshoots past the anchor.
    pub fn warnings(&self) -> Vec<String> {
        match self.kind {
            ScheduleKind::AnchoredRyu { p, gamma } if (1.0 - p) * gamma > 1.0 => vec![format!(
                "anchored-ryu with (1-p)·gamma = {} > 1 gives beta_0 > 1 (overshoots the anchor)",
                (1.0 - p) * gamma
            )],
            _ => Vec::new(),
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        let t = t as f64;
        match self.kind {
            ScheduleKind::AnchoredNew { gamma } => 1.0 / (self.lipschitz * (t + gamma).sqrt()),
            ScheduleKind::AnchoredRyu { p, .. } => (1.0 - p) / (t + 1.0).powf(p),
            ScheduleKind::PlainGda { alpha } => alpha,
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        let t = t as f64;
        match self.kind {
            ScheduleKind::AnchoredNew { gamma } => gamma / (t + gamma),
            ScheduleKind::AnchoredRyu { p, gamma } => (1.0 - p) * gamma / (t + 1.0),
            ScheduleKind::PlainGda { .. } => 0.0,
        }
    }

    /// `(α_t - α_{t+1})/α_t` and `β_{t+1} - β_t`, in cancellation-free form.
    fn relative_alpha_drop_and_beta_step(&self, t: usize) -> Result<(f64, f64)> {
        let tf = t as f64;
        match self.kind {
            ScheduleKind::AnchoredNew { gamma } => {
                let s = tf + gamma;
                // 1 - sqrt(s/(s+1)) = (1/(s+1)) / (1 + sqrt(s/(s+1)))
                let ratio = (s / (s + 1.0)).sqrt();
                let drop = (1.0 / (s + 1.0)) / (1.0 + ratio);
                let beta_step = -gamma / (s * (s + 1.0));
                Ok((drop, beta_step))
            }
            ScheduleKind::AnchoredRyu { p, gamma } => {
                // 1 - ((t+1)/(t+2))^p = -expm1(-p·ln(1 + 1/(t+1)))
                let drop = -(-p * (1.0 / (tf + 1.0)).ln_1p()).exp_m1();
                let beta_step = -(1.0 - p) * gamma / ((tf + 1.0) * (tf + 2.0));
                Ok((drop, beta_step))
            }
            ScheduleKind::PlainGda { .. } => Err(Error::Inapplicable(
                "difference coefficients are defined for anchored schedules only".into(),
            )),
        }
    }

    pub fn difference_coefficients(&self, t: usize) -> Result<DifferenceCoefficients> {
        let (drop, beta_step) = self.relative_alpha_drop_and_beta_step(t)?;
        let beta_next = self.beta(t + 1);
        let a = 1.0 - beta_next - drop;
        let e_err = drop * self.beta(t) + beta_step;
        let alpha_next_k_sq = match self.kind {
            // exactly 1/(t+1+γ)
            ScheduleKind::AnchoredNew { gamma } => 1.0 / (t as f64 + 1.0 + gamma),
            _ => (self.alpha(t + 1) * self.lipschitz).powi(2),
        };
        let contraction = (a * a + alpha_next_k_sq).sqrt();
        // 1 - c = (1 - A² - α²K²)/(1 + c), with 1 - A = drop + β_{t+1}
        let one_minus_a = drop + beta_next;
        let one_minus_contraction =
            (one_minus_a * (1.0 + a) - alpha_next_k_sq) / (1.0 + contraction);
        Ok(DifferenceCoefficients {
            t,
            a,
            e_err,
            contraction,
            one_minus_contraction,
            relative_alpha_drop: drop,
        })
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// Coefficients of the exact consecutive-difference recursion at step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceCoefficients {
    pub t: usize,
    pub a: f64,
    pub e_err: f64,
    /// `√(A² + α_{t+1}²K²)`
    pub contraction: f64,
    /// `1 - contraction`, evaluated without cancellation.
    pub one_minus_contraction: f64,
    /// `(α_t - α_{t+1})/α_t`
    pub relative_alpha_drop: f64,
}

/// Worst case of a scalar bound over `1 ≤ t ≤ t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub gamma: f64,
    pub t_max: usize,
    pub min_margin: f64,
    pub argmin_t: usize,
    pub pass: bool,
}

/// Constant in the contraction bound `√(A² + α_{t+1}²K²) ≤ 1 - c/(t+1+γ)`.
pub const CONTRACTION_CONSTANT: f64 = 1.15;

fn require_anchored_new(schedule: &Schedule) -> Result<f64> {
    match schedule.kind {
        ScheduleKind::AnchoredNew { gamma } => Ok(gamma),
        other => Err(Error::Inapplicable(format!(
            "{} scan is defined for anchored-new only",
            other.name()
        ))),
    }
}

fn scan(
    gamma: f64,
    t_max: usize,
    mut margin: impl FnMut(usize) -> Result<f64>,
) -> Result<ScanReport> {
    if t_max == 0 {
        return Err(Error::usage("t_max must be at least 1"));
    }
    let mut min_margin = f64::INFINITY;
    let mut argmin_t = 1;
    for t in 1..=t_max {
        let m = margin(t)?;
        if m < min_margin {
            min_margin = m;
            argmin_t = t;
        }
    }
    Ok(ScanReport {
        gamma,
        t_max,
        min_margin,
        argmin_t,
        pass: min_margin >= 0.0,
    })
}

/// `margin(t) = (1 - 1.15/(t+1+γ)) - contraction(t)` for `1 ≤ t ≤ t_max`.
pub fn check_contraction_bound(schedule: &Schedule, t_max: usize) -> Result<ScanReport> {
    check_contraction_bound_with(schedule, t_max, CONTRACTION_CONSTANT)
}

pub fn check_contraction_bound_with(
    schedule: &Schedule,
    t_max: usize,
    constant: f64,
) -> Result<ScanReport> {
    let gamma = require_anchored_new(schedule)?;
    scan(gamma, t_max, |t| {
        let c = schedule.difference_coefficients(t)?;
        Ok(contraction_margin(&c, gamma, constant))
    })
}

pub fn contraction_margin(c: &DifferenceCoefficients, gamma: f64, constant: f64) -> f64 {
    c.one_minus_contraction - constant / (c.t as f64 + 1.0 + gamma)
}

/// `margin(t) = γ/(t+γ)² - |E_err(t)|` for `1 ≤ t ≤ t_max`.
pub fn check_error_coefficient_bound(schedule: &Schedule, t_max: usize) -> Result<ScanReport> {
    let gamma = require_anchored_new(schedule)?;
    scan(gamma, t_max, |t| {
        let c = schedule.difference_coefficients(t)?;
        Ok(error_coefficient_margin(&c, gamma))
    })
}

pub fn error_coefficient_margin(c: &DifferenceCoefficients, gamma: f64) -> f64 {
    let s = c.t as f64 + gamma;
    gamma / (s * s) - c.e_err.abs()
}

/// Distances of the contraction factor and of `E_err` from their large-`t`
/// expansions: `r1 = |c - (1 - γ/s)|`, `r2 = |E_err + γ/(2s²) - 5γ/(8s³)|`,
/// with `s = t + γ`.
pub fn asymptotic_residuals(schedule: &Schedule, t: usize) -> Result<(f64, f64)> {
    let gamma = require_anchored_new(schedule)?;
    if t == 0 {
        return Err(Error::usage("asymptotic residuals are defined for t ≥ 1"));
    }
    let c = schedule.difference_coefficients(t)?;
    let s = t as f64 + gamma;
    let r1 = (gamma / s - c.one_minus_contraction).abs();
    let r2 = (c.e_err + gamma / (2.0 * s * s) - 5.0 * gamma / (8.0 * s * s * s)).abs();
    Ok((r1, r2))
}

/// Boundedness of `r1·s²` and `r2·s⁴` over a dyadic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub gamma: f64,
    pub grid: Vec<usize>,
    pub max_scaled_r1: f64,
    pub max_scaled_r2: f64,
    pub bound_r1: f64,
    pub bound_r2: f64,
    pub pass: bool,
}

/// `r1·s²` tends to `3γ/2` and `r2·s⁴` to `11γ/16`; the envelopes allow a
/// factor of two over those limits so the pre-asymptotic range `t ≥ 1` fits.
pub fn check_asymptotic_residuals(schedule: &Schedule, t_max: usize) -> Result<AsymptoticReport> {
    let gamma = require_anchored_new(schedule)?;
    let grid: Vec<usize> = std::iter::successors(Some(1usize), |&t| t.checked_mul(2))
        .take_while(|&t| t <= t_max.max(1))
        .collect();
    let (mut max1, mut max2) = (0.0_f64, 0.0_f64);
    for &t in &grid {
        let (r1, r2) = asymptotic_residuals(schedule, t)?;
        let s = t as f64 + gamma;
        max1 = max1.max(r1 * s * s);
        max2 = max2.max(r2 * s.powi(4));
    }
    let bound_r1 = 3.0 * gamma;
    let bound_r2 = 11.0 * gamma / 8.0;
    Ok(AsymptoticReport {
        gamma,
        grid,
        max_scaled_r1: max1,
        max_scaled_r2: max2,
        bound_r1,
        bound_r2,
        pass: max1.is_finite() && max2.is_finite() && max1 <= bound_r1 && max2 <= bound_r2,
    })
}
