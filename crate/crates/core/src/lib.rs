//! Anchored gradient descent ascent for smooth convex-concave min-max
//! problems, together with numerical checks of its last-iterate guarantees.
//!
//! The update is
//!
//! ```text
//! z_{t+1} = z_t - α_t G(z_t) + β_t (z_0 - z_t)
//! ```
//!
//! with `G(z) = (∇ₓL, -∇ᵧL)`. With `α_t = 1/(K√(t+γ))`, `β_t = γ/(t+γ)` and
//! `γ ≥ 2`, the squared gradient norm of the last iterate decays as `O(1/t)`.
//!
//! ```
//! use anchored_gda::{problems::{Point, ProblemSpec}, schedules::Schedule, solver};
//!
//! let problem = ProblemSpec::parse("bilinear:n=1,m=1,a=1").unwrap();
//! let schedule = Schedule::parse("anchored-new:gamma=2", problem.lipschitz()).unwrap();
//! let z0 = Point::new(vec![1.0, 1.0], 1).unwrap();
//! let trace = solver::run(&problem, &schedule, &z0, solver::RunOptions::new(1000, 10)).unwrap();
//! assert!(trace.last().unwrap().grad_norm_sq < 1e-2);
//! ```

pub mod error;
#[cfg(feature = "cli")]
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod schedules;
pub mod solver;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
