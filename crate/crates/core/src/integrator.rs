//! Event-driven integration of the geodesic flow.
//!
//! The flow is singular on both axes and at the origin. Runs are stopped in a
//! guard band instead of being continued into the singularity. Near an axis
//! the forward problem is badly conditioned: a geodesic can only reach the
//! axis orthogonally, and every other nearby solution is deflected with a
//! disturbance that grows like `y^{-(n-1)}`. When a trajectory enters the
//! capture band (`y < axis_band`) heading for the axis, its angle is compared
//! with the regular series solution that meets the axis orthogonally. If the
//! two agree to `axis_capture_tol` the run is terminated with the state
//! continued along that series down to `eps_axis`; otherwise integration
//! carries on and the trajectory is handled by the plain guard event.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::ode::{ell_distance, forced_curvature, OdeError, PhaseState, SymmetryParams};
use crate::rk::{self, DenseSegment, RkError, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("at least one event is required")]
    NoEvents,
    #[error(transparent)]
    Domain(#[from] OdeError),
    #[error("step size collapsed to {h:e} at t = {t} without reaching an event")]
    StepSizeCollapse { t: f64, h: f64 },
    #[error("t = {t} lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
}

impl From<RkError> for IntegrateError {
    fn from(e: RkError) -> Self {
        match e {
            RkError::StepSizeCollapse { t, h } => IntegrateError::StepSizeCollapse { t, h },
            RkError::OutOfSpan { t, start, end } => IntegrateError::OutOfSpan { t, start, end },
            RkError::InvalidOptions(s) => IntegrateError::InvalidConfig(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub t_max: f64,
    /// Distance from an axis at which a run is stopped.
    pub eps_axis: f64,
    pub eps_origin: f64,
    /// Time localization of events.
    pub event_tol: f64,
    /// Height of the near-axis capture band.
    pub axis_band: f64,
    /// Largest angular disagreement with the regular axis solution that is
    /// still attributed to integration error.
    pub axis_capture_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: 1e-3,
            h_max: 0.05,
            t_max: 200.0,
            eps_axis: 1e-8,
            eps_origin: 1e-6,
            event_tol: 1e-12,
            axis_band: 0.05,
            axis_capture_tol: 1e-5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("h_init", self.h_init),
            ("h_max", self.h_max),
            ("t_max", self.t_max),
            ("eps_axis", self.eps_axis),
            ("eps_origin", self.eps_origin),
            ("event_tol", self.event_tol),
            ("axis_band", self.axis_band),
            ("axis_capture_tol", self.axis_capture_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IntegrateError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.eps_axis >= 1.0 {
            return Err(IntegrateError::InvalidConfig("eps_axis must be below 1".into()));
        }
        Ok(())
    }

    pub(crate) fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            h_init: self.h_init,
            h_max: self.h_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Crossing the line ℓ.
    CrossL,
    /// The unwrapped velocity angle reaching the given value.
    AngleLimit(f64),
    /// Reaching the x-axis guard band, `y = eps_axis`.
    AxisX,
    /// Reaching the y-axis guard band, `x = eps_axis`.
    AxisY,
    OriginGuard,
    TimeLimit,
}

impl EventKind {
    pub fn name(&self) -> String {
        match self {
            EventKind::CrossL => "CrossL".into(),
            EventKind::AngleLimit(v) => format!("AngleLimit({v:.16e})"),
            EventKind::AxisX => "AxisX".into(),
            EventKind::AxisY => "AxisY".into(),
            EventKind::OriginGuard => "OriginGuard".into(),
            EventKind::TimeLimit => "TimeLimit".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CrossL" => Some(EventKind::CrossL),
            "AxisX" => Some(EventKind::AxisX),
            "AxisY" => Some(EventKind::AxisY),
            "OriginGuard" => Some(EventKind::OriginGuard),
            "TimeLimit" => Some(EventKind::TimeLimit),
            _ => {
                let inner = s.strip_prefix("AngleLimit(")?.strip_suffix(')')?;
                inner.parse().ok().map(EventKind::AngleLimit)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    /// Time before the event is watched.
    pub arming_delay: f64,
}

impl EventSpec {
    pub fn new(kind: EventKind) -> Self {
        Self {
            kind,
            arming_delay: 0.0,
        }
    }

    pub fn delayed(kind: EventKind, arming_delay: f64) -> Self {
        Self { kind, arming_delay }
    }
}

/// Scalar whose sign change marks the event.
pub fn event_value(state: &PhaseState, kind: EventKind, p: &SymmetryParams, cfg: &IntegratorConfig) -> f64 {
    match kind {
        EventKind::CrossL => ell_distance(state.x, state.y, p),
        EventKind::AngleLimit(v) => state.theta - v,
        EventKind::AxisX => state.y - cfg.eps_axis,
        EventKind::AxisY => state.x - cfg.eps_axis,
        EventKind::OriginGuard => state.x * state.x + state.y * state.y - cfg.eps_origin * cfg.eps_origin,
        EventKind::TimeLimit => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: PhaseState,
}

/// How a run that ended at an axis was continued from the capture band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCapture {
    pub t_capture: f64,
    pub band: f64,
    /// Angle mismatch with the regular axis solution at the band.
    pub mismatch: f64,
    /// Where the regular solution meets the axis.
    pub foot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalEvent {
    pub kind: EventKind,
    pub t: f64,
    pub state: PhaseState,
    pub capture: Option<AxisCapture>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Sum over accepted steps of the largest local error estimate.
    pub local_error: f64,
}

/// A dense, event-annotated solution of the geodesic flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: SymmetryParams,
    samples: Vec<Sample>,
    /// `segments[i]` interpolates between `samples[i]` and `samples[i + 1]`.
    segments: Vec<DenseSegment<3>>,
    terminal: TerminalEvent,
    stats: Stats,
}

impl Trajectory {
    pub fn params(&self) -> &SymmetryParams {
        &self.params
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn terminal(&self) -> &TerminalEvent {
        &self.terminal
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn initial(&self) -> PhaseState {
        self.samples[0].state
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().expect("non-empty").t
    }

    pub fn evaluate(&self, t: f64) -> Result<PhaseState, IntegrateError> {
        let (a, b) = (self.t_start(), self.t_end());
        if !(a..=b).contains(&t) {
            return Err(IntegrateError::OutOfSpan { t, start: a, end: b });
        }
        let idx = self.samples.partition_point(|s| s.t < t);
        if idx < self.samples.len() && self.samples[idx].t == t {
            return Ok(self.samples[idx].state);
        }
        Ok(PhaseState::from_array(self.segments[idx - 1].eval(t)))
    }

    /// Positions of the samples.
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.state.x, s.state.y)).collect()
    }

    /// Positions at `count + 1` equally spaced times over the span.
    pub fn resample(&self, count: usize) -> Vec<(f64, f64)> {
        let (a, b) = (self.t_start(), self.t_end());
        (0..=count)
            .map(|k| {
                let t = if k == count {
                    b
                } else {
                    a + (b - a) * k as f64 / count as f64
                };
                let s = self.evaluate(t).expect("inside span");
                (s.x, s.y)
            })
            .collect()
    }

    /// Builds a trajectory from explicit states, joined by cubic Hermite
    /// pieces that use the flow's own derivatives. Intended for synthetic
    /// inputs and for rebuilding imported data.
    pub fn from_states(
        params: SymmetryParams,
        samples: Vec<Sample>,
        terminal_kind: EventKind,
    ) -> Result<Self, IntegrateError> {
        if samples.len() < 2 {
            return Err(IntegrateError::InvalidConfig("need at least two samples".into()));
        }
        let mut segments = Vec::with_capacity(samples.len() - 1);
        for w in samples.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.t <= a.t {
                return Err(IntegrateError::InvalidConfig("sample times must increase".into()));
            }
            let fa = flow(&a.state.as_array(), &params);
            let fb = flow(&b.state.as_array(), &params);
            segments.push(DenseSegment::hermite(
                a.t,
                b.t - a.t,
                &a.state.as_array(),
                &b.state.as_array(),
                &fa,
                &fb,
            ));
        }
        let last = *samples.last().expect("non-empty");
        Ok(Self {
            params,
            terminal: TerminalEvent {
                kind: terminal_kind,
                t: last.t,
                state: last.state,
                capture: None,
            },
            samples,
            segments,
            stats: Stats::default(),
        })
    }
}

#[inline]
fn flow(y: &[f64; 3], p: &SymmetryParams) -> [f64; 3] {
    let (x, yy, th) = (y[0], y[1], y[2]);
    if !(x > 0.0 && yy > 0.0) {
        return [f64::NAN; 3];
    }
    let (s, c) = th.sin_cos();
    [c, s, forced_curvature(x, yy, th, p)]
}

/// Watched scalar. `Band` is the capture band of an axis event.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Watch {
    Event(EventKind),
    Band(Axis),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    X,
    Y,
}

struct Watcher {
    watch: Watch,
    arming_delay: f64,
    armed: bool,
    value: f64,
}

impl Watcher {
    fn value_at(&self, st: &PhaseState, p: &SymmetryParams, cfg: &IntegratorConfig) -> f64 {
        match self.watch {
            Watch::Event(kind) => event_value(st, kind, p, cfg),
            Watch::Band(Axis::X) => st.y - cfg.axis_band,
            Watch::Band(Axis::Y) => st.x - cfg.axis_band,
        }
    }

    fn update_arming(&mut self, t: f64, cfg: &IntegratorConfig) {
        if t < self.arming_delay {
            return;
        }
        self.armed = match self.watch {
            Watch::Event(EventKind::CrossL) => self.armed || self.value.abs() > 10.0 * cfg.event_tol,
            Watch::Event(EventKind::AxisX | EventKind::AxisY | EventKind::OriginGuard) | Watch::Band(_) => {
                self.value > 0.0
            }
            Watch::Event(_) => self.armed || self.value != 0.0,
        };
    }
}

fn crossed(before: f64, after: f64) -> bool {
    (before > 0.0 && after <= 0.0) || (before < 0.0 && after >= 0.0)
}

/// Illinois iteration on `[a, b]` with `g(a)`, `g(b)` of opposite sign.
/// Returns the bracket end on the far side of the sign change.
fn localize(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64, tol: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= tol || gb == 0.0 {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if (gc > 0.0) == (gb > 0.0) {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
        // Force progress from both ends in case one endpoint stagnates.
        if (b - a).abs() > tol && side != 0 {
            let mid = 0.5 * (a + b);
            let gm = g(mid);
            if (gm > 0.0) == (gb > 0.0) && gm != 0.0 {
                b = mid;
                gb = gm;
            } else {
                a = mid;
                ga = gm;
                if gm == 0.0 {
                    return mid;
                }
            }
        }
    }
    b
}

/// Regular solution meeting the x-axis orthogonally, written as
/// `tan δ = t1 y + t3 y³`, `x = foot − t1 y²/2 − t3 y⁴/4`, where `δ = θ + π/2`
/// for a curve heading down.
struct AxisSeries {
    foot: f64,
    t1: f64,
    t3: f64,
}

impl AxisSeries {
    fn through(x: f64, y: f64, p: &SymmetryParams) -> Self {
        let (m1, n) = (p.m() as f64 - 1.0, p.n() as f64);
        let coeffs = |foot: f64| {
            let a = foot / 2.0 - m1 / foot;
            let da = 0.5 + m1 / (foot * foot);
            let t1 = a / n;
            let t3 = (0.5 * t1 * (1.0 - da) + t1 * t1 * t1) / (n + 2.0);
            (t1, t3)
        };
        let mut foot = x;
        for _ in 0..8 {
            let (t1, t3) = coeffs(foot);
            foot = x + t1 * y * y / 2.0 + t3 * y.powi(4) / 4.0;
        }
        let (t1, t3) = coeffs(foot);
        Self { foot, t1, t3 }
    }

    fn delta(&self, y: f64) -> f64 {
        (self.t1 * y + self.t3 * y * y * y).atan()
    }

    fn x(&self, y: f64) -> f64 {
        self.foot - self.t1 * y * y / 2.0 - self.t3 * y.powi(4) / 4.0
    }

    /// Arc length between heights `lo < hi`.
    fn arc_length(&self, lo: f64, hi: f64) -> f64 {
        (hi - lo) + self.t1 * self.t1 * (hi.powi(3) - lo.powi(3)) / 6.0
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Tries to continue a band crossing along the regular axis solution.
/// Returns the terminal state, its time, and the capture record.
fn try_capture(
    axis: Axis,
    t_c: f64,
    st: &PhaseState,
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
) -> Option<(f64, PhaseState, AxisCapture)> {
    // Work in the frame where the axis is y = 0.
    let (frame_state, frame_params) = match axis {
        Axis::X => (*st, *p),
        Axis::Y => (st.reflected(), p.swapped()),
    };
    let delta = wrap_angle(frame_state.theta + FRAC_PI_2);
    if delta.abs() >= PI / 4.0 {
        return None;
    }
    let series = AxisSeries::through(frame_state.x, frame_state.y, &frame_params);
    let mismatch = delta - series.delta(frame_state.y);
    if mismatch.abs() > cfg.axis_capture_tol || series.foot <= 0.0 {
        return None;
    }
    let eps = cfg.eps_axis;
    let frame_theta = frame_state.theta - delta + series.delta(eps);
    let frame_end = PhaseState::new(series.x(eps), eps, frame_theta);
    let end = match axis {
        Axis::X => frame_end,
        // Undo the reflection, keeping the angle unwrapped relative to `st`.
        Axis::Y => PhaseState::new(eps, frame_end.x, st.theta - (frame_theta - frame_state.theta)),
    };
    let t_end = t_c + series.arc_length(eps, frame_state.y);
    Some((
        t_end,
        end,
        AxisCapture {
            t_capture: t_c,
            band: frame_state.y,
            mismatch,
            foot: series.foot,
        },
    ))
}

struct Builder {
    samples: Vec<Sample>,
    segments: Vec<DenseSegment<3>>,
    stats: Stats,
}

/// One leg of integration from `(t0, initial)`, appending into `out`.
fn run_leg(
    t0: f64,
    initial: PhaseState,
    events: &[EventSpec],
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
    t_stop: f64,
    out: &mut Builder,
) -> Result<TerminalEvent, IntegrateError> {
    let f = |_t: f64, y: &[f64; 3]| flow(y, p);
    let mut watchers: Vec<Watcher> = Vec::new();
    for spec in events {
        if spec.kind == EventKind::TimeLimit {
            continue;
        }
        watchers.push(Watcher {
            watch: Watch::Event(spec.kind),
            arming_delay: spec.arming_delay,
            armed: false,
            value: 0.0,
        });
        let band = match spec.kind {
            EventKind::AxisX => Some(Axis::X),
            EventKind::AxisY => Some(Axis::Y),
            _ => None,
        };
        if let Some(axis) = band {
            if cfg.eps_axis < cfg.axis_band {
                watchers.push(Watcher {
                    watch: Watch::Band(axis),
                    arming_delay: spec.arming_delay,
                    armed: false,
                    value: 0.0,
                });
            }
        }
    }
    for w in watchers.iter_mut() {
        w.value = w.value_at(&initial, p, cfg);
        w.update_arming(t0, cfg);
    }

    let mut t = t0;
    let mut y = initial.as_array();
    let mut k1 = f(t, &y);
    out.stats.rhs_evals += 1;
    let mut h = cfg.h_init.min(cfg.h_max);
    let mut rejected = false;

    loop {
        if t >= t_stop {
            return Ok(TerminalEvent {
                kind: EventKind::TimeLimit,
                t,
                state: PhaseState::from_array(y),
                capture: None,
            });
        }
        let mut step = h.min(cfg.h_max);
        let remaining = t_stop - t;
        let last = step >= remaining;
        if last {
            step = remaining;
        }
        let trial = rk::trial_step(&f, t, &y, &k1, step, cfg.rel_tol, cfg.abs_tol);
        out.stats.rhs_evals += 6;
        let dtheta = (trial.y_new[2] - y[2]).abs();
        if trial.err > 1.0 || dtheta.is_nan() || dtheta >= FRAC_PI_2 {
            out.stats.rejected += 1;
            h = if trial.err > 1.0 {
                step * rk::step_factor(trial.err, true)
            } else {
                step * 0.5
            };
            rejected = true;
            if h < rk::MIN_STEP {
                return Err(IntegrateError::StepSizeCollapse { t, h });
            }
            continue;
        }
        out.stats.accepted += 1;
        out.stats.local_error += trial.err_max;
        let t_new = if last { t_stop } else { t + step };
        let new_state = PhaseState::from_array(trial.y_new);
        let seg = trial.segment;

        // Earliest armed crossing within the step.
        let mut hits: Vec<(f64, usize)> = Vec::new();
        let mut new_values = Vec::with_capacity(watchers.len());
        for (i, w) in watchers.iter().enumerate() {
            let g_new = w.value_at(&new_state, p, cfg);
            new_values.push(g_new);
            if w.armed && crossed(w.value, g_new) {
                let g = |tau: f64| w.value_at(&PhaseState::from_array(seg.eval(tau)), p, cfg);
                let t_hit = localize(g, t, t_new, w.value, g_new, cfg.event_tol);
                hits.push((t_hit, i));
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(t_hit, i) in &hits {
            let st = PhaseState::from_array(seg.eval(t_hit));
            match watchers[i].watch {
                Watch::Band(axis) => {
                    if let Some((t_end, end, capture)) = try_capture(axis, t_hit, &st, p, cfg) {
                        out.samples.push(Sample { t: t_hit, state: st });
                        out.segments.push(seg.clone());
                        let f_c = flow(&st.as_array(), p);
                        let f_e = flow(&end.as_array(), p);
                        out.segments.push(DenseSegment::hermite(
                            t_hit,
                            t_end - t_hit,
                            &st.as_array(),
                            &end.as_array(),
                            &f_c,
                            &f_e,
                        ));
                        out.samples.push(Sample { t: t_end, state: end });
                        let kind = match axis {
                            Axis::X => EventKind::AxisX,
                            Axis::Y => EventKind::AxisY,
                        };
                        return Ok(TerminalEvent {
                            kind,
                            t: t_end,
                            state: end,
                            capture: Some(capture),
                        });
                    }
                }
                Watch::Event(kind) => {
                    out.samples.push(Sample { t: t_hit, state: st });
                    out.segments.push(seg);
                    return Ok(TerminalEvent {
                        kind,
                        t: t_hit,
                        state: st,
                        capture: None,
                    });
                }
            }
        }

        for (w, g) in watchers.iter_mut().zip(new_values) {
            w.value = g;
            w.update_arming(t_new, cfg);
        }
        out.samples.push(Sample {
            t: t_new,
            state: new_state,
        });
        out.segments.push(seg);
        t = t_new;
        y = trial.y_new;
        k1 = trial.f_new;
        h = step * rk::step_factor(trial.err, rejected);
        rejected = false;
    }
}

fn check_start(initial: &PhaseState, events: &[EventSpec], cfg: &IntegratorConfig) -> Result<(), IntegrateError> {
    cfg.validate()?;
    if events.is_empty() {
        return Err(IntegrateError::NoEvents);
    }
    if !(initial.x > 0.0 && initial.y > 0.0) {
        return Err(OdeError::Domain {
            x: initial.x,
            y: initial.y,
        }
        .into());
    }
    if !initial.theta.is_finite() {
        return Err(IntegrateError::InvalidConfig("initial angle must be finite".into()));
    }
    Ok(())
}

/// Integrates the geodesic flow from `initial` until the first armed event
/// fires or `cfg.t_max` is reached.
pub fn integrate(
    initial: PhaseState,
    p: &SymmetryParams,
    events: &[EventSpec],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    check_start(&initial, events, cfg)?;
    let mut out = Builder {
        samples: vec![Sample { t: 0.0, state: initial }],
        segments: Vec::new(),
        stats: Stats::default(),
    };
    let terminal = run_leg(0.0, initial, events, p, cfg, cfg.t_max, &mut out)?;
    Ok(Trajectory {
        params: *p,
        samples: out.samples,
        segments: out.segments,
        terminal,
        stats: out.stats,
    })
}

/// Integrates for `t_long`, continuing through orthogonal axis contacts. A
/// geodesic that meets an axis orthogonally continues by retracing itself,
/// so each captured axis contact restarts the flow with reversed direction.
/// Any other terminal event ends the run.
pub fn integrate_with_bounces(
    initial: PhaseState,
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
    t_long: f64,
) -> Result<Trajectory, IntegrateError> {
    let events = [
        EventSpec::new(EventKind::AxisX),
        EventSpec::new(EventKind::AxisY),
        EventSpec::new(EventKind::OriginGuard),
    ];
    check_start(&initial, &events, cfg)?;
    let mut out = Builder {
        samples: vec![Sample { t: 0.0, state: initial }],
        segments: Vec::new(),
        stats: Stats::default(),
    };
    let mut t0 = 0.0;
    let mut start = initial;
    loop {
        let term = run_leg(t0, start, &events, p, cfg, t_long, &mut out)?;
        let bounce = matches!(term.kind, EventKind::AxisX | EventKind::AxisY) && term.capture.is_some();
        if !bounce || term.t >= t_long {
            return Ok(Trajectory {
                params: *p,
                samples: out.samples,
                segments: out.segments,
                terminal: term,
                stats: out.stats,
            });
        }
        t0 = term.t;
        start = PhaseState::new(term.state.x, term.state.y, term.state.theta + PI);
        // Direction reverses at the contact, so the angle jumps by π there.
        out.samples.last_mut().expect("non-empty").state = start;
    }
}

/// Solution of the graphical equation `u'' = F(x, u, u')` as a dense
/// function of `x`, stopped when the graph leaves the quadrant or turns
/// vertical (`|u'| > slope_limit`).
pub fn integrate_graph(
    x0: f64,
    u0: f64,
    du0: f64,
    x_end: f64,
    p: &SymmetryParams,
    cfg: &IntegratorConfig,
    slope_limit: f64,
) -> Result<rk::DenseSolution<2>, IntegrateError> {
    cfg.validate()?;
    if !(x0 > 0.0 && u0 > 0.0) {
        return Err(OdeError::Domain { x: x0, y: u0 }.into());
    }
    let f = |x: f64, v: &[f64; 2]| match crate::ode::graphical_rhs(x, v[0], v[1], p) {
        Ok(acc) => [v[1], acc],
        Err(_) => [f64::NAN; 2],
    };
    let stop = |x: f64, v: &[f64; 2]| v[0] <= cfg.eps_axis || x <= cfg.eps_axis || v[1].abs() > slope_limit;
    Ok(rk::solve(f, x0, [u0, du0], x_end, &cfg.solver_options(), stop)?)
}
