use anchored_gda::problems::{Point, ProblemSpec};
use anchored_gda::schedules::Schedule;
use anchored_gda::solver::{self, RunOptions};
use anchored_gda_demo::{audit_margins, rate_curve, trajectory};

const BILINEAR: &str = "bilinear:n=1,m=1,a=1";

#[test]
fn trajectory_matches_solver_iterates() {
    let xy = trajectory(BILINEAR, "anchored-new:gamma=2", vec![1.0, 1.0], 200).unwrap();
    assert_eq!(xy.len(), 2 * 201);
    let p = ProblemSpec::parse(BILINEAR).unwrap();
    let s = Schedule::anchored_new(2.0, 1.0).unwrap();
    let tr = solver::run(&p, &s, &Point::new(vec![1.0, 1.0], 1).unwrap(), RunOptions::new(200, 200)).unwrap();
    let z = &tr.snapshots[&200];
    assert_eq!(&xy[400..], z.as_slice());
    // anchored iterates spiral in towards the saddle at the origin
    assert!(xy[400].hypot(xy[401]) < 0.5);
}

#[test]
fn trajectory_stops_when_plain_gda_escapes() {
    let xy = trajectory(BILINEAR, "plain-gda:alpha=0.1", vec![1.0, 1.0], 1_000_000).unwrap();
    let (x, y) = (xy[xy.len() - 2], xy[xy.len() - 1]);
    assert!(x.hypot(y) > 1e6, "last point ({x}, {y})");
    assert!(xy.len() < 2 * 2100);
}

#[test]
fn trajectory_rejects_bad_input() {
    assert!(trajectory(BILINEAR, "anchored-new:gamma=2", vec![1.0], 10).is_err());
    assert!(trajectory("bilinear:n=0", "anchored-new:gamma=2", vec![], 10).is_err());
    assert!(trajectory(BILINEAR, "anchored-new:gamma=1", vec![1.0, 1.0], 10).is_err());
}

#[test]
fn rate_curve_sits_under_envelope() {
    let c = rate_curve(BILINEAR, "anchored-new:gamma=2", vec![1.0, 1.0], 100_000).unwrap();
    assert_eq!(c.status(), "ok");
    let (t, g, b) = (c.t(), c.grad_norm_sq(), c.bound());
    assert_eq!(t.len(), b.len());
    assert!(t.len() <= 2005 && t[0] == 1.0 && *t.last().unwrap() == 100_000.0);
    assert!(g.iter().zip(&b).all(|(g, b)| g <= b));
    assert!((c.constant() - 70306.700996).abs() < 1e-5);
    assert!((c.slope() + 1.0).abs() < 0.01, "slope {}", c.slope());
}

#[test]
fn rate_curve_without_envelope() {
    let c = rate_curve(BILINEAR, "anchored-ryu:p=0.75,gamma=2", vec![1.0, 1.0], 20_000).unwrap();
    assert!(c.bound().is_empty() && c.constant().is_nan());
    // still pre-asymptotic at this length; long runs settle near -0.47
    assert!(c.slope() > -0.7 && c.slope() < -0.3, "slope {}", c.slope());

    let c = rate_curve(BILINEAR, "plain-gda:alpha=0.1", vec![1.0, 1.0], 100_000).unwrap();
    assert_eq!(c.status(), "stopped at t=69353");
}

#[test]
fn audit_margins_are_positive_for_valid_gamma() {
    for gamma in [2.0, 4.0, 8.0] {
        let m = audit_margins(gamma, 1_000_000, 200).unwrap();
        assert_eq!(m.len() % 3, 0);
        assert_eq!((m[0], m[m.len() - 3]), (1.0, 1e6));
        assert!(m.chunks(3).all(|r| r[1] > 0.0 && r[2] > 0.0));
        assert!(m.chunks(3).zip(m.chunks(3).skip(1)).all(|(a, b)| a[0] < b[0]));
    }
    assert!(audit_margins(1.5, 100, 10).is_err());
    assert!(audit_margins(2.0, 0, 10).is_err());
}
