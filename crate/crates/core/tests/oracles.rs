//! Independent reference computations: double-double arithmetic for the
//! schedule coefficients and whole runs, dense SVD for operator norms.

use anchored_gda::problems::{exact_lipschitz, Point, ProblemSpec};
use anchored_gda::schedules::{self, Schedule};
use anchored_gda::solver::{self, RunOptions};
use anchored_gda::verify::fit_rate;
use nalgebra::DMatrix;
use twofloat::TwoFloat as F;

mod common;
use common::{PINNED_SLOPE_NEW, PINNED_SLOPE_RYU};

fn f(x: f64) -> F {
    F::from(x)
}

/// `x / y` to double-double accuracy. twofloat's own `TwoFloat / TwoFloat`
/// forms the residual `1 - y·(1/y)` in plain f64 and so is only about as
/// accurate as f64; two Newton corrections on exact products fix that.
fn div(x: F, y: F) -> F {
    let q0 = x.hi() / y.hi();
    let q1 = f(q0) + (x - y * f(q0)).hi() / y.hi();
    q1 + (x - y * q1) / y.hi()
}

/// Naive definitions evaluated in double-double; the subtraction of nearly
/// equal step sizes loses ~log10(t) of its ~32 digits, which leaves plenty.
#[derive(Clone, Copy)]
enum Oracle {
    New { gamma: f64, k: f64 },
    /// `p = eighths/8`, so `(t+1)^p` is three square roots of an integer power.
    Ryu { eighths: u32, gamma: f64, k: f64 },
}

impl Oracle {
    fn p(self) -> F {
        match self {
            Oracle::New { .. } => f(f64::NAN),
            Oracle::Ryu { eighths, .. } => f(eighths as f64 / 8.0),
        }
    }

    fn alpha(self, t: usize) -> F {
        let t = f(t as f64);
        match self {
            Oracle::New { gamma, k } => div(f(1.0), f(k) * (t + f(gamma)).sqrt()),
            Oracle::Ryu { eighths, .. } => {
                let base = t + f(1.0);
                let pow = (1..eighths).fold(base, |acc, _| acc * base);
                div(f(1.0) - self.p(), pow.sqrt().sqrt().sqrt())
            }
        }
    }

    fn beta(self, t: usize) -> F {
        let t = f(t as f64);
        match self {
            Oracle::New { gamma, .. } => div(f(gamma), t + f(gamma)),
            Oracle::Ryu { gamma, .. } => div((f(1.0) - self.p()) * f(gamma), t + f(1.0)),
        }
    }

    fn k(self) -> F {
        match self {
            Oracle::New { k, .. } | Oracle::Ryu { k, .. } => f(k),
        }
    }

    /// (A, E_err, contraction)
    fn coefficients(self, t: usize) -> (F, F, F) {
        let (a0, a1) = (self.alpha(t), self.alpha(t + 1));
        let (b0, b1) = (self.beta(t), self.beta(t + 1));
        let delta = div(a0 - a1, a0);
        let a = f(1.0) - b1 - delta;
        let e = delta * b0 + (b1 - b0);
        let ak = a1 * self.k();
        let c = (a * a + ak * ak).sqrt();
        (a, e, c)
    }

    fn schedule(self) -> Schedule {
        match self {
            Oracle::New { gamma, k } => Schedule::anchored_new(gamma, k).unwrap(),
            Oracle::Ryu { eighths, gamma, k } => {
                Schedule::anchored_ryu(eighths as f64 / 8.0, gamma, k).unwrap()
            }
        }
    }
}

fn rel(x: f64, reference: F) -> f64 {
    let r = reference.hi();
    if r == 0.0 {
        x.abs()
    } else {
        div(f(x) - reference, reference).abs().hi()
    }
}

const TS: [usize; 10] = [1, 2, 3, 5, 10, 100, 1_000, 10_000, 100_000, 1_000_000];

#[test]
fn anchored_new_coefficients_match_double_double() {
    for gamma in [2.0, 3.0, 4.0, 8.0] {
        for k in [1.0, 2.18755] {
            let o = Oracle::New { gamma, k };
            let s = o.schedule();
            for t in TS {
                let c = s.difference_coefficients(t).unwrap();
                let (a, e, con) = o.coefficients(t);
                assert!(rel(c.a, a) < 1e-15, "A γ={gamma} t={t}: {} vs {}", c.a, a.hi());
                assert!(rel(c.e_err, e) < 1e-13, "E γ={gamma} t={t}: {} vs {}", c.e_err, e.hi());
                assert!(rel(c.contraction, con) < 1e-15, "c γ={gamma} t={t}");
                let omc = f(1.0) - con;
                assert!(
                    rel(c.one_minus_contraction, omc) < 1e-12,
                    "1-c γ={gamma} t={t}: {} vs {}",
                    c.one_minus_contraction,
                    omc.hi()
                );
            }
        }
    }
}

#[test]
fn anchored_ryu_coefficients_match_double_double() {
    for eighths in [5, 6, 7] {
        for gamma in [2.0, 3.0, 4.0] {
            let o = Oracle::Ryu {
                eighths,
                gamma,
                k: 1.0,
            };
            let s = o.schedule();
            for t in TS {
                let c = s.difference_coefficients(t).unwrap();
                let (a, e, con) = o.coefficients(t);
                assert!(rel(c.a, a) < 1e-14, "A p={eighths}/8 γ={gamma} t={t}");
                assert!(rel(c.e_err, e) < 1e-12, "E p={eighths}/8 γ={gamma} t={t}: {} vs {}", c.e_err, e.hi());
                assert!(rel(c.contraction, con) < 1e-14, "c p={eighths}/8 γ={gamma} t={t}");
            }
        }
    }
}

#[test]
fn audit_margins_match_double_double() {
    for gamma in [2.0, 4.0, 8.0] {
        let o = Oracle::New { gamma, k: 1.0 };
        let s = o.schedule();
        for t in TS {
            let c = s.difference_coefficients(t).unwrap();
            let (_, e, con) = o.coefficients(t);
            let tt = f(t as f64);
            let contraction = f(1.0) - div(f(1.15), tt + f(1.0) + f(gamma)) - con;
            let sg = tt + f(gamma);
            let error = div(f(gamma), sg * sg) - e.abs();
            let lib_c = schedules::contraction_margin(&c, gamma, schedules::CONTRACTION_CONSTANT);
            let lib_e = schedules::error_coefficient_margin(&c, gamma);
            assert!(contraction.hi() > 0.0 && error.hi() > 0.0, "γ={gamma} t={t}");
            assert!(rel(lib_c, contraction) < 1e-8, "γ={gamma} t={t}: {lib_c} vs {}", contraction.hi());
            assert!(rel(lib_e, error) < 1e-8, "γ={gamma} t={t}: {lib_e} vs {}", error.hi());
        }
    }
}

#[test]
fn asymptotic_limits_match_double_double() {
    // r1·s² → 3γ/2 and r2·s⁴ → 11γ/16
    for gamma in [2.0, 4.0] {
        let o = Oracle::New { gamma, k: 1.0 };
        let t = 100_000;
        let s = f(t as f64 + gamma);
        let (_, e, con) = o.coefficients(t);
        let r1 = (con - (f(1.0) - div(f(gamma), s))).abs() * s * s;
        let r2 = (e + div(f(gamma), f(2.0) * s * s) - div(f(5.0 * gamma), f(8.0) * s * s * s)).abs()
            * s
            * s
            * s
            * s;
        assert!((r1.hi() - 1.5 * gamma).abs() < 1e-3 * gamma, "r1 {}", r1.hi());
        assert!((r2.hi() - 11.0 * gamma / 16.0).abs() < 1e-3 * gamma, "r2 {}", r2.hi());
    }
}

/// Iterates `z ← z - αMz + β(z0 - z)` for a dense linear operator in
/// double-double and returns `(t, ‖Mz_t‖²)` every `stride` steps.
fn oracle_run(m: &[Vec<f64>], o: Oracle, z0: &[f64], steps: usize, stride: usize) -> Vec<(usize, F)> {
    let d = z0.len();
    let mm: Vec<Vec<F>> = m.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect();
    let anchor: Vec<F> = z0.iter().map(|&v| f(v)).collect();
    let mut z = anchor.clone();
    let mut g = vec![f(0.0); d];
    let mut out = Vec::new();
    for t in 0..=steps {
        for (gi, row) in g.iter_mut().zip(&mm) {
            *gi = row.iter().zip(&z).fold(f(0.0), |acc, (a, b)| acc + *a * *b);
        }
        if t % stride == 0 || t == steps {
            out.push((t, g.iter().fold(f(0.0), |acc, v| acc + *v * *v)));
        }
        if t == steps {
            break;
        }
        let (a, b) = (o.alpha(t), o.beta(t));
        for i in 0..d {
            z[i] = z[i] - a * g[i] + b * (anchor[i] - z[i]);
        }
    }
    out
}

fn least_squares_slope(points: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}


#[test]
fn bilinear_runs_match_double_double_and_pin_slopes() {
    let problem = ProblemSpec::parse("bilinear:n=1,m=1,a=1").unwrap();
    let m = problem.operator_matrix().to_rows();
    let z0 = [1.0, 1.0];
    let cases = [
        (Oracle::New { gamma: 2.0, k: 1.0 }, PINNED_SLOPE_NEW),
        (
            Oracle::Ryu {
                eighths: 6,
                gamma: 2.0,
                k: 1.0,
            },
            PINNED_SLOPE_RYU,
        ),
    ];
    for (o, pinned) in cases {
        let reference = oracle_run(&m, o, &z0, 100_000, 100);
        let trace = solver::run(
            &problem,
            &o.schedule(),
            &Point::new(z0.to_vec(), 1).unwrap(),
            RunOptions::new(100_000, 100),
        )
        .unwrap();
        for &(t, g) in &reference {
            let row = trace.row(t).unwrap();
            assert!(
                rel(row.grad_norm_sq, g) < 1e-9,
                "t={t}: {} vs {}",
                row.grad_norm_sq,
                g.hi()
            );
        }
        let window: Vec<(usize, f64)> = reference
            .iter()
            .filter(|(t, _)| (1_000..=100_000).contains(t))
            .map(|&(t, g)| (t, g.hi()))
            .collect();
        let oracle_slope = least_squares_slope(&window);
        // same grid as the oracle: the library trace also records t = T-1
        let on_grid: Vec<(usize, f64)> = trace
            .rows
            .iter()
            .filter(|r| r.t % 100 == 0 && (1_000..=100_000).contains(&r.t))
            .map(|r| (r.t, r.grad_norm_sq))
            .collect();
        let lib_slope = least_squares_slope(&on_grid);
        assert!((lib_slope - oracle_slope).abs() < 1e-9, "{lib_slope} vs {oracle_slope}");
        let all: Vec<(usize, f64)> = trace
            .rows
            .iter()
            .filter(|r| (1_000..=100_000).contains(&r.t))
            .map(|r| (r.t, r.grad_norm_sq))
            .collect();
        let lib = fit_rate(&trace, 1_000, 100_000).unwrap();
        assert!((lib.slope - least_squares_slope(&all)).abs() < 1e-12);
        assert!((lib.slope - pinned).abs() < 1e-4, "{} vs pinned {pinned}", lib.slope);
        assert!((oracle_slope - pinned).abs() < 5e-5, "oracle slope {oracle_slope}, pinned {pinned}");
    }
}

#[test]
fn quadratic_run_matches_double_double() {
    let problem = ProblemSpec::parse("quadratic-saddle:n=5,m=5,p=0.1,q=0.1,seed=11").unwrap();
    let o = Oracle::New {
        gamma: 2.0,
        k: problem.lipschitz(),
    };
    let m = problem.operator_matrix().to_rows();
    let z0 = vec![1.0; 10];
    let reference = oracle_run(&m, o, &z0, 2_000, 10);
    let trace = solver::run(
        &problem,
        &o.schedule(),
        &Point::new(z0, 5).unwrap(),
        RunOptions::new(2_000, 10),
    )
    .unwrap();
    for &(t, g) in &reference {
        assert!(rel(trace.row(t).unwrap().grad_norm_sq, g) < 1e-10, "t={t}");
    }
}

fn svd_norm(rows: &[Vec<f64>]) -> f64 {
    let (r, c) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    DMatrix::from_row_slice(r, c, &flat)
        .singular_values()
        .max()
}

#[test]
fn exact_lipschitz_matches_dense_svd() {
    let mut descriptors = vec![
        "bilinear:n=1,m=1,a=1".to_string(),
        "bilinear:n=1,m=1,a=-3.5".to_string(),
        "quadratic-saddle:n=5,m=5,p=0.1,q=0.1,seed=11".to_string(),
    ];
    for seed in 0..8 {
        descriptors.push(format!("bilinear:n=5,m=5,seed={seed}"));
        descriptors.push(format!("bilinear:n=3,m=7,seed={seed}"));
        descriptors.push(format!("quadratic-saddle:n=4,m=6,p=0.5,q=0.01,seed={seed}"));
    }
    for d in descriptors {
        let p = ProblemSpec::parse(&d).unwrap();
        let svd = svd_norm(&p.operator_matrix().to_rows());
        let k = exact_lipschitz(&p).unwrap();
        assert!((k - svd).abs() <= 1e-8 * svd, "{d}: {k} vs {svd}");
        assert_eq!(p.lipschitz(), k, "{d}");
    }
}
