//! Shooting from the diagonal.
//!
//! For `m = n` a geodesic is launched from the point of ℓ at distance `R`
//! from the origin, orthogonally to ℓ and into the region `x > y`, so the
//! launch angle is `−π/4`. The angle is tracked unwrapped; measured from the
//! launch normal it is `φ = θ + π/4`, and the target "tangent again
//! orthogonal to ℓ" (`φ = −π`) is `θ = −5π/4`.
//!
//! Each shot ends in one of three ways: it crosses ℓ (returns), its tangent
//! turns orthogonal to ℓ again before any crossing (turns parallel back to
//! the launch direction), or it reaches the x-axis. The signed shooting
//! function is positive for the first and negative for the other two, and
//! vanishes exactly when the trajectory meets ℓ orthogonally. Such a
//! half-profile closes up under reflection through ℓ.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use thiserror::Error;

use crate::integrator::{
    integrate, integrate_with_bounces, EventKind, EventSpec, IntegrateError, IntegratorConfig, Trajectory,
};
use crate::ode::{rotated_view, PhaseState, SymmetryParams};

/// Launch angle, orthogonal to ℓ and pointing into `x > y`.
pub const LAUNCH_ANGLE: f64 = -FRAC_PI_4;
/// Tangent parallel to ℓ, heading back towards the origin.
pub const PARALLEL_ANGLE: f64 = -3.0 * FRAC_PI_4;
/// Tangent orthogonal to ℓ again after half a turn.
pub const RETURN_ANGLE: f64 = -5.0 * FRAC_PI_4;

#[derive(Debug, Error)]
pub enum ShootError {
    #[error("orthogonal launch from the diagonal needs m = n (got m={m}, n={n})")]
    Asymmetric { m: u32, n: u32 },
    #[error("launch radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("shot at R = {radius} has no shooting value ({outcome:?})")]
    Unclassified { radius: f64, outcome: Outcome },
    #[error("shooting function has no sign change on [{lo}, {hi}] (values {f_lo:e}, {f_hi:e})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("no convergence after {iterations} iterations; bracket [{lo}, {hi}]")]
    NonConvergence { iterations: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Crossed ℓ with the given unwrapped angle.
    ReturnsToL {
        theta_end: f64,
    },
    /// Tangent turned orthogonal to ℓ while still a distance `s_end` below it.
    TurnsParallel {
        s_end: f64,
    },
    /// Reached the x-axis guard band at `x_end`.
    HitsXAxis {
        x_end: f64,
        s_end: f64,
    },
    OriginFailure,
    Timeout,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::ReturnsToL { .. } => "returns-to-l",
            Outcome::TurnsParallel { .. } => "turns-parallel",
            Outcome::HitsXAxis { .. } => "hits-x-axis",
            Outcome::OriginFailure => "origin-failure",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShotResult {
    pub radius: f64,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    /// `None` for origin failures and timeouts.
    pub shooting_value: Option<f64>,
}

fn require_symmetric(p: &SymmetryParams) -> Result<(), ShootError> {
    if p.is_symmetric() {
        Ok(())
    } else {
        Err(ShootError::Asymmetric { m: p.m(), n: p.n() })
    }
}

pub fn initial_state(radius: f64, p: &SymmetryParams) -> Result<PhaseState, ShootError> {
    require_symmetric(p)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ShootError::InvalidRadius(radius));
    }
    let a = radius * FRAC_1_SQRT_2;
    Ok(PhaseState::new(a, a, LAUNCH_ANGLE))
}

pub fn shot_events() -> [EventSpec; 5] {
    [
        EventSpec::new(EventKind::CrossL),
        EventSpec::new(EventKind::AngleLimit(RETURN_ANGLE)),
        EventSpec::new(EventKind::AxisX),
        EventSpec::new(EventKind::OriginGuard),
        EventSpec::new(EventKind::TimeLimit),
    ]
}

fn classify(traj: &Trajectory) -> Outcome {
    let term = traj.terminal();
    let st = term.state;
    let s_end = rotated_view(&st).s;
    match term.kind {
        EventKind::CrossL => Outcome::ReturnsToL { theta_end: st.theta },
        EventKind::AngleLimit(_) => Outcome::TurnsParallel { s_end },
        EventKind::AxisX => Outcome::HitsXAxis { x_end: st.x, s_end },
        EventKind::OriginGuard => Outcome::OriginFailure,
        EventKind::AxisY | EventKind::TimeLimit => Outcome::Timeout,
    }
}

fn outcome_value(outcome: &Outcome) -> Option<f64> {
    match *outcome {
        Outcome::ReturnsToL { theta_end } => Some(theta_end - RETURN_ANGLE),
        Outcome::TurnsParallel { s_end } => Some(-s_end),
        Outcome::HitsXAxis { s_end, .. } => Some(-s_end),
        Outcome::OriginFailure | Outcome::Timeout => None,
    }
}

pub fn shoot(radius: f64, p: &SymmetryParams, cfg: &IntegratorConfig) -> Result<ShotResult, ShootError> {
    let start = initial_state(radius, p)?;
    let trajectory = integrate(start, p, &shot_events(), cfg)?;
    let outcome = classify(&trajectory);
    Ok(ShotResult {
        radius,
        shooting_value: outcome_value(&outcome),
        trajectory,
        outcome,
    })
}

/// Signed scalarization of the shot outcome; zero at orthogonal return.
pub fn shooting_function(shot: &ShotResult) -> Result<f64, ShootError> {
    shot.shooting_value.ok_or(ShootError::Unclassified {
        radius: shot.radius,
        outcome: shot.outcome,
    })
}

/// Radius of the sphere solution for `m = n`; the shot from there is an arc
/// of the circle that ends on the x-axis.
pub fn circle_radius(n: u32) -> f64 {
    (2.0 * (2.0 * n as f64 - 1.0)).sqrt()
}

pub fn default_bracket(n: u32) -> (f64, f64) {
    (circle_radius(n) + 0.01, 30.0)
}

#[derive(Debug, Clone)]
pub struct RStarResult {
    pub r_star: f64,
    /// Every evaluated `(R, shooting value)`, in evaluation order.
    pub bracket_history: Vec<(f64, f64)>,
    pub final_shot: ShotResult,
    /// `|θ_end + 5π/4|` of the final shot.
    pub orthogonality_residual: f64,
    /// `|s_end|` of the final shot.
    pub s_residual: f64,
}

fn residuals(shot: &ShotResult) -> (f64, f64) {
    let st = shot.trajectory.terminal().state;
    ((st.theta - RETURN_ANGLE).abs(), rotated_view(&st).s.abs())
}

const MAX_ITERATIONS: usize = 200;

/// Root of the shooting function on `bracket`. Bisection shrinks the bracket,
/// then Illinois secant steps polish it. The returned shot is on the
/// returning side whenever that side meets the tolerance, so its endpoint
/// lies on ℓ to event precision.
pub fn find_rstar(
    p: &SymmetryParams,
    bracket: (f64, f64),
    solve_tol: f64,
    cfg: &IntegratorConfig,
) -> Result<RStarResult, ShootError> {
    require_symmetric(p)?;
    let (lo, hi) = bracket;
    let eval = |r: f64| -> Result<(ShotResult, f64), ShootError> {
        let shot = shoot(r, p, cfg)?;
        let v = shooting_function(&shot)?;
        Ok((shot, v))
    };
    let (mut shot_a, mut fa) = eval(lo)?;
    let (mut shot_b, mut fb) = eval(hi)?;
    let mut history = vec![(lo, fa), (hi, fb)];
    if (fa > 0.0) == (fb > 0.0) || fa == 0.0 || fb == 0.0 {
        if fa == 0.0 || fb == 0.0 {
            let shot = if fa == 0.0 { shot_a } else { shot_b };
            return Ok(finish(shot, history));
        }
        return Err(ShootError::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut a, mut b) = (lo, hi);
    let mut stale = 0i8;
    for _ in 0..MAX_ITERATIONS {
        let pos = if fa > 0.0 { &shot_a } else { &shot_b };
        let neg = if fa > 0.0 { &shot_b } else { &shot_a };
        let (orth, s_res) = residuals(pos);
        if orth < solve_tol && s_res < solve_tol {
            return Ok(finish(pos.clone(), history));
        }
        let width = (b - a).abs();
        if width <= 4.0 * f64::EPSILON * b.abs().max(a.abs()) {
            let (orth, s_res) = residuals(neg);
            if orth < solve_tol && s_res < solve_tol {
                return Ok(finish(neg.clone(), history));
            }
            break;
        }
        let c = if width > 1e-3 {
            0.5 * (a + b)
        } else {
            let mut fa_w = fa;
            let mut fb_w = fb;
            if stale > 0 {
                fa_w *= 0.5;
            } else if stale < 0 {
                fb_w *= 0.5;
            }
            let c = b - fb_w * (b - a) / (fb_w - fa_w);
            let margin = 1e-3 * width;
            c.clamp(a.min(b) + margin, a.max(b) - margin)
        };
        let (shot_c, fc) = eval(c)?;
        history.push((c, fc));
        if fc == 0.0 {
            return Ok(finish(shot_c, history));
        }
        if (fc > 0.0) == (fa > 0.0) {
            a = c;
            fa = fc;
            shot_a = shot_c;
            stale = if stale < 0 { stale - 1 } else { -1 };
        } else {
            b = c;
            fb = fc;
            shot_b = shot_c;
            stale = if stale > 0 { stale + 1 } else { 1 };
        }
    }
    Err(ShootError::NonConvergence {
        iterations: history.len(),
        lo: a.min(b),
        hi: a.max(b),
    })
}

fn finish(shot: ShotResult, history: Vec<(f64, f64)>) -> RStarResult {
    let (orth, s_res) = residuals(&shot);
    RStarResult {
        r_star: shot.radius,
        bracket_history: history,
        final_shot: shot,
        orthogonality_residual: orth,
        s_residual: s_res,
    }
}

/// Shooting values on `samples` equally spaced radii covering `[lo, hi]`.
/// Shots run in parallel.
pub fn scan(
    p: &SymmetryParams,
    lo: f64,
    hi: f64,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, Outcome, Option<f64>)>, ShootError> {
    require_symmetric(p)?;
    let radii: Vec<f64> = (0..samples)
        .map(|k| lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64)
        .collect();
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(samples.max(1));
    let chunk = radii.len().div_ceil(threads.max(1)).max(1);
    let results: Vec<Result<Vec<_>, ShootError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = radii
            .chunks(chunk)
            .map(|rs| {
                scope.spawn(move || {
                    rs.iter()
                        .map(|&r| shoot(r, p, cfg).map(|s| (r, s.outcome, s.shooting_value)))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scan worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(samples);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Consecutive scan entries whose shooting values have opposite signs.
pub fn sign_changes(scan: &[(f64, Outcome, Option<f64>)]) -> Vec<(f64, f64)> {
    scan.windows(2)
        .filter_map(|w| match (w[0].2, w[1].2) {
            (Some(a), Some(b)) if (a > 0.0) != (b > 0.0) => Some((w[0].0, w[1].0)),
            _ => None,
        })
        .collect()
}

/// Scans `bracket` on a grid and polishes every sign change found. When the
/// grid shows none, the upper end is widened (up to four times by a factor
/// 1.5) before giving up.
pub fn find_all_rstar(
    p: &SymmetryParams,
    bracket: (f64, f64),
    grid: usize,
    solve_tol: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<RStarResult>, ShootError> {
    let (lo, mut hi) = bracket;
    for _ in 0..5 {
        let values = scan(p, lo, hi, grid, cfg)?;
        let changes = sign_changes(&values);
        if !changes.is_empty() {
            return changes.into_iter().map(|b| find_rstar(p, b, solve_tol, cfg)).collect();
        }
        hi *= 1.5;
    }
    let f_lo = shoot(lo, p, cfg)?.shooting_value.unwrap_or(f64::NAN);
    let f_hi = shoot(hi, p, cfg)?.shooting_value.unwrap_or(f64::NAN);
    Err(ShootError::NoSignChange { lo, hi, f_lo, f_hi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeRDiagnostics {
    /// Largest distance below ℓ, attained where the tangent is parallel to ℓ.
    pub s_max: f64,
    /// `r` at that point.
    pub r_at_parallel: f64,
    /// Checkpoint used for the angle deviation.
    pub r0: f64,
    /// `|θ + 3π/4|` where the returning trajectory first passes `r = r0`;
    /// `None` if it ended before reaching the checkpoint.
    pub theta_deviation_at_r0: Option<f64>,
}

fn bisect_time(traj: &Trajectory, mut a: f64, mut b: f64, g: impl Fn(&PhaseState) -> f64) -> f64 {
    let mut ga = g(&traj.evaluate(a).expect("inside span"));
    for _ in 0..100 {
        if b - a < 1e-13 {
            break;
        }
        let m = 0.5 * (a + b);
        let gm = g(&traj.evaluate(m).expect("inside span"));
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// First time in the trajectory where `g` changes sign.
pub(crate) fn first_crossing(traj: &Trajectory, g: impl Fn(&PhaseState) -> f64) -> Option<f64> {
    let samples = traj.samples();
    let mut prev = g(&samples[0].state);
    for w in samples.windows(2) {
        let next = g(&w[1].state);
        if (prev > 0.0) != (next > 0.0) {
            return Some(bisect_time(traj, w[0].t, w[1].t, &g));
        }
        prev = next;
    }
    None
}

pub fn large_r_diagnostics(
    radius: f64,
    r0: f64,
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
) -> Result<LargeRDiagnostics, ShootError> {
    let shot = shoot(radius, p, cfg)?;
    let traj = &shot.trajectory;
    let t_par = first_crossing(traj, |s| s.theta - PARALLEL_ANGLE);
    let (s_max, r_at_parallel) = match t_par {
        Some(t) => {
            let v = rotated_view(&traj.evaluate(t)?);
            (v.s, v.r)
        }
        None => {
            let best = traj
                .samples()
                .iter()
                .map(|s| rotated_view(&s.state))
                .max_by(|a, b| a.s.total_cmp(&b.s))
                .expect("non-empty");
            (best.s, best.r)
        }
    };
    let theta_deviation_at_r0 = first_crossing(traj, |s| rotated_view(s).r - r0)
        .map(|t| traj.evaluate(t).map(|s| (s.theta - PARALLEL_ANGLE).abs()))
        .transpose()?;
    Ok(LargeRDiagnostics {
        s_max,
        r_at_parallel,
        r0,
        theta_deviation_at_r0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearClosure {
    pub t: f64,
    /// Distance to the initial state in `(x, y, θ mod 2π)`.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub trajectory: Trajectory,
    pub near_closures: Vec<NearClosure>,
}

fn wrapped_gap(a: &PhaseState, b: &PhaseState) -> f64 {
    let d = (a.theta - b.theta).rem_euclid(std::f64::consts::TAU);
    let d = d.min(std::f64::consts::TAU - d);
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + d * d).sqrt()
}

/// Long integration for any `m, n`, reporting times at which the state comes
/// back within `threshold` of the initial state after first leaving a
/// neighbourhood ten times larger.
pub fn explore(
    initial: PhaseState,
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
    t_long: f64,
    threshold: f64,
) -> Result<Exploration, ShootError> {
    let trajectory = integrate_with_bounces(initial, p, cfg, t_long)?;
    let near_closures = near_closures(&trajectory, threshold);
    Ok(Exploration {
        trajectory,
        near_closures,
    })
}

fn near_closures(traj: &Trajectory, threshold: f64) -> Vec<NearClosure> {
    let start = traj.initial();
    let gap_at = |t: f64| wrapped_gap(&traj.evaluate(t).expect("inside span"), &start);
    let samples = traj.samples();
    let gaps: Vec<f64> = samples.iter().map(|s| wrapped_gap(&s.state, &start)).collect();
    let mut departed = false;
    let mut out: Vec<NearClosure> = Vec::new();
    for i in 1..samples.len() {
        if gaps[i] > 10.0 * threshold {
            departed = true;
        }
        if !departed || i + 1 >= samples.len() {
            continue;
        }
        if gaps[i] <= gaps[i - 1] && gaps[i] <= gaps[i + 1] && gaps[i] < threshold {
            // Golden-section refinement between the neighbouring samples.
            let (mut a, mut b) = (samples[i - 1].t, samples[i + 1].t);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - g * (b - a);
            let mut d = a + g * (b - a);
            let (mut fc, mut fd) = (gap_at(c), gap_at(d));
            for _ in 0..200 {
                if b - a < 1e-12 {
                    break;
                }
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = gap_at(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = gap_at(d);
                }
            }
            let t = 0.5 * (a + b);
            out.push(NearClosure { t, gap: gap_at(t) });
            departed = false;
        }
    }
    out
}
