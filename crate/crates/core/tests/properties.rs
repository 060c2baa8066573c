use std::collections::BTreeMap;

use anchored_gda::linalg::Matrix;
use anchored_gda::problems::{Point, ProblemSpec};
use anchored_gda::schedules::Schedule;
use anchored_gda::trace::{Trace, TraceHeader, TraceRow};
use proptest::prelude::*;

fn coupling(n: usize, m: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, n * m).prop_map(move |v| Matrix::from_fn(n, m, |i, j| v[i * m + j]))
}

/// `P = BᵀB` is symmetric PSD by construction.
fn psd(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |b| {
        Matrix::from_fn(n, n, |i, j| (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum())
    })
}

fn problem() -> impl Strategy<Value = ProblemSpec> {
    (1usize..4, 1usize..4).prop_flat_map(|(n, m)| {
        (coupling(n, m), psd(n), psd(m), any::<bool>()).prop_map(|(a, p, q, quad)| {
            if quad {
                ProblemSpec::quadratic_saddle(p, q, a).unwrap()
            } else {
                ProblemSpec::bilinear(a).unwrap()
            }
        })
    })
}

fn point_for(p: &ProblemSpec) -> impl Strategy<Value = Point> {
    let n = p.n();
    prop::collection::vec(-10.0..10.0f64, p.dim()).prop_map(move |v| Point::new(v, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_linear(
        (p, z, w) in problem().prop_flat_map(|p| {
            let (a, b) = (point_for(&p), point_for(&p));
            (Just(p), a, b)
        }),
        s in -5.0..5.0f64,
    ) {
        let gz = p.eval_operator(&z).unwrap();
        let gw = p.eval_operator(&w).unwrap();
        let comb: Vec<f64> = z.coords().iter().zip(w.coords()).map(|(a, b)| a + s * b).collect();
        let gc = p.eval_operator(&Point::new(comb, p.n()).unwrap()).unwrap();
        let scale = 1.0 + gz.norm() + s.abs() * gw.norm();
        for i in 0..p.dim() {
            let expect = gz.coords()[i] + s * gw.coords()[i];
            prop_assert!((gc.coords()[i] - expect).abs() <= 1e-12 * scale);
        }
        // monotone: ⟨G(z) - G(w), z - w⟩ ≥ 0
        let inner: f64 = (0..p.dim())
            .map(|i| (gz.coords()[i] - gw.coords()[i]) * (z.coords()[i] - w.coords()[i]))
            .sum();
        prop_assert!(inner >= -1e-10 * scale * scale);
    }

    #[test]
    fn schedules_are_monotone(gamma in 2.0..50.0f64, k in 0.01..100.0f64, p in 0.51..0.99f64, t in 0usize..10_000_000) {
        for s in [Schedule::anchored_new(gamma, k).unwrap(), Schedule::anchored_ryu(p, gamma, k).unwrap()] {
            prop_assert!(s.alpha(t + 1) < s.alpha(t));
            prop_assert!(s.beta(t + 1) < s.beta(t));
            prop_assert!(s.alpha(t) > 0.0 && s.beta(t + 1) > 0.0);
        }
        let s = Schedule::anchored_new(gamma, k).unwrap();
        prop_assert!(s.beta(t) <= 1.0);
        let s = Schedule::plain_gda(0.1, k).unwrap();
        prop_assert_eq!(s.alpha(t), 0.1);
        prop_assert_eq!(s.beta(t), 0.0);
    }

    #[test]
    fn coefficients_partition_unity(gamma in 2.0..50.0f64, k in 0.01..100.0f64, p in 0.51..0.99f64, t in 0usize..10_000_000) {
        // A + δ + β_{t+1} = 1
        for s in [Schedule::anchored_new(gamma, k).unwrap(), Schedule::anchored_ryu(p, gamma, k).unwrap()] {
            let c = s.difference_coefficients(t).unwrap();
            let sum = c.a + c.relative_alpha_drop + s.beta(t + 1);
            prop_assert!((sum - 1.0).abs() <= 1e-15, "{}", sum - 1.0);
            prop_assert!(c.contraction >= 0.0);
            prop_assert!((c.contraction + c.one_minus_contraction - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn trace_csv_round_trips(
        rows in prop::collection::vec(
            (any::<f64>(), prop::option::of(any::<f64>()), any::<f64>(), any::<f64>()),
            1..40,
        ),
        seed in any::<u64>(),
        lipschitz in 1e-6..1e6f64,
        gamma in prop::option::of(2.0..1e3f64),
    ) {
        let clean = |x: f64| if x.is_finite() { x.abs() } else { 1.0 };
        let n = rows.len();
        let rows: Vec<TraceRow> = rows
            .into_iter()
            .enumerate()
            .map(|(t, (g, d, diff, anchor))| TraceRow {
                t: t * 3,
                grad_norm_sq: clean(g),
                dist_opt_sq: d.map(clean),
                diff_norm: if t + 1 == n { None } else { Some(clean(diff)) },
                dist_anchor: clean(anchor),
            })
            .collect();
        let trace = Trace {
            header: TraceHeader {
                problem: "bilinear:n=1,m=1,a=1".into(),
                schedule: "anchored-new:gamma=2".into(),
                steps: (n - 1) * 3,
                lipschitz,
                gamma,
                seed,
                record_every: 3,
            },
            rows,
            snapshots: BTreeMap::new(),
        };
        let back = Trace::from_csv(&trace.to_csv()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn descriptors_round_trip(n in 1usize..6, m in 1usize..6, seed in 0u64..1000, pq in 0.0..1.0f64) {
        for d in [
            format!("bilinear:n={n},m={m},seed={seed}"),
            format!("quadratic-saddle:n={n},m={m},p={pq},q={pq},seed={seed}"),
        ] {
            let p = ProblemSpec::parse(&d).unwrap();
            let again = ProblemSpec::parse(p.id()).unwrap();
            prop_assert_eq!(again.id(), p.id());
            prop_assert_eq!(again.operator_matrix(), p.operator_matrix());
            prop_assert_eq!(again.lipschitz(), p.lipschitz());
        }
    }
}
