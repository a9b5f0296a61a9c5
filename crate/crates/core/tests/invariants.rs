use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use shrinker::integrator::{integrate, integrate_graph, EventKind, EventSpec, IntegratorConfig, Trajectory};
use shrinker::ode::{rotated_view, PhaseState, SymmetryParams};
use shrinker::profile::{build_closed_profile, is_embedded_brute_force};
use shrinker::shooting::{
    circle_radius, default_bracket, find_rstar, initial_state, scan, shoot, sign_changes, Outcome,
};

fn p(n: u32) -> SymmetryParams {
    SymmetryParams::symmetric(n).unwrap()
}

fn free_events() -> [EventSpec; 4] {
    [
        EventSpec::new(EventKind::TimeLimit),
        EventSpec::new(EventKind::AxisX),
        EventSpec::new(EventKind::AxisY),
        EventSpec::new(EventKind::OriginGuard),
    ]
}

fn reflection_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    let te = a.t_end().min(b.t_end());
    let mut worst = 0.0f64;
    for k in 0..=500 {
        let t = te * k as f64 / 500.0;
        let u = a.evaluate(t).unwrap().reflected();
        let v = b.evaluate(t).unwrap();
        worst = worst
            .max((u.x - v.x).abs())
            .max((u.y - v.y).abs())
            .max((u.theta - v.theta).abs());
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflection_equivariance(
        n in 2u32..=4,
        x in 0.5f64..3.5,
        y in 0.5f64..3.5,
        theta in -PI..PI,
    ) {
        let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-14, t_max: 2.0, ..Default::default() };
        let q = p(n);
        let start = PhaseState::new(x, y, theta);
        let a = integrate(start, &q, &free_events(), &cfg).unwrap();
        let b = integrate(start.reflected(), &q, &free_events(), &cfg).unwrap();
        prop_assert!(reflection_gap(&a, &b) < 1e-10);
    }

    #[test]
    fn graphical_and_parametric_agree(
        n in 2u32..=4,
        x0 in 1.0f64..2.5,
        u0 in 1.0f64..3.0,
        du0 in -0.5f64..0.5,
    ) {
        let q = p(n);
        let cfg = IntegratorConfig { t_max: 4.0, ..Default::default() };
        let graph = integrate_graph(x0, u0, du0, x0 + 3.0, &q, &cfg, 10.0).unwrap();
        let par = integrate(PhaseState::new(x0, u0, du0.atan()), &q, &free_events(), &cfg).unwrap();
        let mut worst = 0.0f64;
        for k in 0..=2000 {
            let s = par.evaluate(par.t_end() * k as f64 / 2000.0).unwrap();
            if s.theta.cos() <= 0.0 {
                break;
            }
            if s.x >= graph.start() && s.x <= graph.end() {
                worst = worst.max((graph.eval(s.x).unwrap()[0] - s.y).abs());
            }
        }
        prop_assert!(worst < 1e-8, "sup |Δy| = {worst:e}");
    }

    #[test]
    fn launch_is_perpendicular_to_the_diagonal(n in 2u32..=6, radius in 0.1f64..50.0) {
        let st = initial_state(radius, &p(n)).unwrap();
        let v = rotated_view(&st);
        prop_assert_eq!(v.psi, -FRAC_PI_2);
        prop_assert!((v.r - radius).abs() < 1e-13 * radius);
    }
}

fn assert_orthogonal_limit(label: &str, run: impl Fn(&IntegratorConfig) -> Trajectory) {
    let mut last = f64::INFINITY;
    for eps in [1e-4, 1e-6, 1e-8] {
        let cfg = IntegratorConfig {
            eps_axis: eps,
            ..Default::default()
        };
        let traj = run(&cfg);
        let term = traj.terminal();
        assert_eq!(term.kind, EventKind::AxisX, "{label}");
        let c = term.state.theta.cos().abs();
        assert!(c < last, "{label} eps={eps}: {c:e} after {last:e}");
        last = c;
    }
    assert!(last < 1e-4, "{label}");
}

#[test]
fn axis_contact_becomes_orthogonal() {
    for n in [2, 3, 4] {
        let q = p(n);
        assert_orthogonal_limit(&format!("circle n={n}"), |cfg| {
            shoot(circle_radius(n), &q, cfg).unwrap().trajectory
        });
        // Curves leaving the axis orthogonally, followed back down. The feet
        // avoid the vertical cylinder, on which θ is exactly −π/2 throughout.
        for foot in [0.8, 3.5] {
            let up = IntegratorConfig {
                t_max: 1.0,
                ..Default::default()
            };
            let out = integrate(
                PhaseState::new(foot, 1e-6, FRAC_PI_2),
                &q,
                &[EventSpec::new(EventKind::TimeLimit)],
                &up,
            )
            .unwrap();
            let top = out.terminal().state;
            let back = PhaseState::new(top.x, top.y, top.theta + PI);
            assert_orthogonal_limit(&format!("n={n} foot {foot}"), |cfg| {
                integrate(back, &q, &free_events(), cfg).unwrap()
            });
        }
    }
}

#[test]
fn halving_tolerance_moves_terminal_state_within_local_error() {
    let fine_cfg = IntegratorConfig {
        rel_tol: 5e-11,
        abs_tol: 5e-13,
        ..Default::default()
    };
    for n in [2, 3, 4] {
        let q = p(n);
        for radius in [circle_radius(n), 4.5, 8.0, 20.0] {
            let coarse = shoot(radius, &q, &IntegratorConfig::default()).unwrap();
            let fine = shoot(radius, &q, &fine_cfg).unwrap();
            let (a, b) = (coarse.trajectory.terminal(), fine.trajectory.terminal());
            assert_eq!(a.kind, b.kind);
            let d = (a.state.x - b.state.x)
                .abs()
                .max((a.state.y - b.state.y).abs())
                .max((a.state.theta - b.state.theta).abs())
                .max((a.t - b.t).abs());
            let bound = 10.0 * coarse.trajectory.stats().local_error;
            assert!(d < bound, "n={n} R={radius}: {d:e} vs {bound:e}");
        }
    }
}

#[test]
fn large_radius_shots_turn_monotonically() {
    let cfg = IntegratorConfig::default();
    for n in [2, 3, 4] {
        for radius in [20.0, 30.0, 50.0] {
            let shot = shoot(radius, &p(n), &cfg).unwrap();
            let traj = &shot.trajectory;
            let (t0, t1) = (traj.t_start(), traj.t_end());
            let mut prev = traj.evaluate(t0).unwrap().theta;
            for k in 1..=5000 {
                let th = traj.evaluate(t0 + (t1 - t0) * k as f64 / 5000.0).unwrap().theta;
                assert!(th <= prev + 1e-9, "n={n} R={radius}");
                prev = th;
            }
        }
    }
}

#[test]
fn bracket_scan_is_classified_with_one_sign_change() {
    let cfg = IntegratorConfig::default();
    for n in [2, 3, 4] {
        let (lo, hi) = default_bracket(n);
        let rows = scan(&p(n), lo, hi, 64, &cfg).unwrap();
        for (radius, outcome, value) in &rows {
            assert!(
                !matches!(outcome, Outcome::Timeout | Outcome::OriginFailure),
                "n={n} R={radius}: {}",
                outcome.label()
            );
            assert!(value.is_some());
        }
        assert_eq!(sign_changes(&rows).len(), 1, "n={n}");
    }
}

#[test]
fn closed_profiles_are_mirror_symmetric_and_simple() {
    let cfg = IntegratorConfig::default();
    for n in [2, 3, 4] {
        let q = p(n);
        let r_star = find_rstar(&q, default_bracket(n), 1e-9, &cfg).unwrap().r_star;
        let prof = build_closed_profile(&q, r_star, 1e-3, &cfg).unwrap();
        assert!(prof.is_certified());
        assert!(prof.closure_gap < prof.resample_h / 10.0);
        assert_eq!(prof.ell_contacts, 2);
        let pts = &prof.points;
        let len = pts.len() - 1;
        // Reflection maps the loop to itself with reversed orientation.
        for i in 0..len {
            let (x, y) = pts[i];
            let (u, v) = pts[(len - i) % len];
            assert!((x - v).abs() < 1e-9 && (y - u).abs() < 1e-9, "n={n} i={i}");
        }
        if n == 2 {
            assert!(is_embedded_brute_force(pts).unwrap());
        }
    }
}
