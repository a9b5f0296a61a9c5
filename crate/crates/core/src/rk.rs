//! Dormand–Prince 5(4) stepping with Hairer's fourth-order continuous
//! extension, shared by the geodesic integrator and the scalar second-order
//! solvers used for graphs and linearizations.
//!
//! Steps may be negative, which integrates backwards in the independent
//! variable.

use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub(crate) type Vector<const N: usize> = [f64; N];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RkError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepSizeCollapse { t: f64, h: f64 },
    #[error("t = {t} lies outside the solution span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// Interpolation data for one step, in Hairer's nested form
/// `r0 + s (r1 + (1−s)(r2 + s (r3 + (1−s) r4)))` with `s = (t − t0)/h`.
/// Setting `r4 = 0` gives the cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub coeffs: [Vector<N>; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> Vector<N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        std::array::from_fn(|i| c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i]))))
    }

    /// Cubic Hermite segment through `(t0, y0, f0)` and `(t0 + h, y1, f1)`.
    pub fn hermite(t0: f64, h: f64, y0: &Vector<N>, y1: &Vector<N>, f0: &Vector<N>, f1: &Vector<N>) -> Self {
        let mut coeffs = [[0.0; N]; 5];
        for i in 0..N {
            let diff = y1[i] - y0[i];
            let b = h * f0[i] - diff;
            coeffs[0][i] = y0[i];
            coeffs[1][i] = diff;
            coeffs[2][i] = b;
            coeffs[3][i] = diff - h * f1[i] - b;
        }
        Self { t0, h, coeffs }
    }
}

/// Outcome of one trial step.
pub(crate) struct TrialStep<const N: usize> {
    pub y_new: Vector<N>,
    pub f_new: Vector<N>,
    /// Scaled RMS error estimate; the step is acceptable when `<= 1`.
    pub err: f64,
    /// Largest unscaled component of the error estimate.
    pub err_max: f64,
    pub segment: DenseSegment<N>,
}

#[inline]
fn axpy<const N: usize>(y: &Vector<N>, h: f64, terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

/// One Dormand–Prince step from `(t, y)` with derivative `k1 = f(t, y)`.
pub(crate) fn trial_step<const N: usize, F>(
    f: &F,
    t: f64,
    y: &Vector<N>,
    k1: &Vector<N>,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> TrialStep<N>
where
    F: Fn(f64, &Vector<N>) -> Vector<N>,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new);

    let mut sum = 0.0;
    let mut err_max = 0.0f64;
    let mut finite = true;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        sum += (e / sc).powi(2);
        err_max = err_max.max(e.abs());
        finite &= y_new[i].is_finite() && k7[i].is_finite();
    }
    let err = if finite { (sum / N as f64).sqrt() } else { f64::INFINITY };

    let mut coeffs = [[0.0; N]; 5];
    for i in 0..N {
        let diff = y_new[i] - y[i];
        let b = h * k1[i] - diff;
        coeffs[0][i] = y[i];
        coeffs[1][i] = diff;
        coeffs[2][i] = b;
        coeffs[3][i] = diff - h * k7[i] - b;
        coeffs[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }

    TrialStep {
        y_new,
        f_new: k7,
        err,
        err_max,
        segment: DenseSegment { t0: t, h, coeffs },
    }
}

/// Multiplicative step-size update after a trial with scaled error `err`.
pub(crate) fn step_factor(err: f64, rejected: bool) -> f64 {
    if !err.is_finite() {
        return 0.25;
    }
    let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
    if rejected {
        fac.clamp(0.2, 1.0)
    } else {
        fac.clamp(0.2, 5.0)
    }
}

pub(crate) const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: 1e-3,
            h_max: 0.05,
        }
    }
}

/// Dense solution of a first-order system over `[t0, t_end]` (either direction).
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    pub times: Vec<f64>,
    pub values: Vec<Vector<N>>,
    segments: Vec<DenseSegment<N>>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty solution")
    }

    pub fn eval(&self, t: f64) -> Result<Vector<N>, RkError> {
        let (a, b) = (self.start(), self.end());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if !(lo..=hi).contains(&t) {
            return Err(RkError::OutOfSpan { t, start: a, end: b });
        }
        let forward = b >= a;
        let idx = self.times.partition_point(|&s| if forward { s < t } else { s > t });
        if idx < self.times.len() && self.times[idx] == t {
            return Ok(self.values[idx]);
        }
        let seg = idx.saturating_sub(1).min(self.segments.len() - 1);
        Ok(self.segments[seg].eval(t))
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`. `stop` is consulted after
/// every accepted step and may end the integration early.
pub fn solve<const N: usize, F, S>(
    f: F,
    t0: f64,
    y0: Vector<N>,
    t_end: f64,
    opts: &SolverOptions,
    mut stop: S,
) -> Result<DenseSolution<N>, RkError>
where
    F: Fn(f64, &Vector<N>) -> Vector<N>,
    S: FnMut(f64, &Vector<N>) -> bool,
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0 && opts.h_init > 0.0 && opts.h_max > 0.0) {
        return Err(RkError::InvalidOptions("tolerances and steps must be positive".into()));
    }
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = opts.h_init.min(opts.h_max);
    let mut out = DenseSolution {
        times: vec![t0],
        values: vec![y0],
        segments: Vec::new(),
    };
    let mut rejected = false;
    while dir * (t_end - t) > 0.0 {
        let remaining = (t_end - t).abs();
        let mut last = false;
        let mut step = h.min(opts.h_max);
        if step >= remaining {
            step = remaining;
            last = true;
        }
        let trial = trial_step(&f, t, &y, &k1, dir * step, opts.rel_tol, opts.abs_tol);
        if trial.err <= 1.0 {
            t = if last { t_end } else { t + dir * step };
            y = trial.y_new;
            k1 = trial.f_new;
            out.times.push(t);
            out.values.push(y);
            out.segments.push(trial.segment);
            h = step * step_factor(trial.err, rejected);
            rejected = false;
            if stop(t, &y) {
                break;
            }
        } else {
            h = step * step_factor(trial.err, true);
            rejected = true;
            if h < MIN_STEP {
                return Err(RkError::StepSizeCollapse { t, h });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let sol = solve(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            3.0,
            &SolverOptions::default(),
            |_, _| false,
        )
        .unwrap();
        let y = sol.values.last().unwrap()[0];
        assert!((y - (-3f64).exp()).abs() < 1e-10);
        let mid = sol.eval(1.234_567).unwrap()[0];
        assert!((mid - (-1.234_567f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_harmonic_oscillator() {
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let sol = solve(
            f,
            2.0,
            [2f64.cos(), -2f64.sin()],
            -1.0,
            &SolverOptions::default(),
            |_, _| false,
        )
        .unwrap();
        for t in [1.5, 0.0, -0.7, -1.0] {
            let v = sol.eval(t).unwrap();
            assert!((v[0] - t.cos()).abs() < 1e-9, "t={t}");
        }
        assert!(sol.eval(2.5).is_err());
    }

    #[test]
    fn sample_times_evaluate_exactly() {
        let sol = solve(
            |t, _: &[f64; 1]| [t.cos()],
            0.0,
            [0.0],
            2.0,
            &SolverOptions::default(),
            |_, _| false,
        )
        .unwrap();
        for (t, v) in sol.times.iter().zip(&sol.values) {
            assert_eq!(sol.eval(*t).unwrap(), *v);
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let p = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t * t * t;
        let dp = |t: f64| 2.0 - 2.0 * t + 1.5 * t * t;
        let seg = DenseSegment::hermite(0.5, 1.5, &[p(0.5)], &[p(2.0)], &[dp(0.5)], &[dp(2.0)]);
        for t in [0.5, 0.9, 1.4, 2.0] {
            assert!((seg.eval(t)[0] - p(t)).abs() < 1e-13);
        }
    }
}
