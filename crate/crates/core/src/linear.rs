//! Linearization of the shrinker equation about ℓ for `m = n`.
//!
//! A profile close to ℓ is a graph `s = f(r)` in the rotated coordinates.
//! Its linearization has the form
//!
//! ```text
//! g'' + (c/r − r/2) g' + (1/2 + c/r²) g = 0
//! ```
//!
//! and `h = e^{−r²/8} g` satisfies
//!
//! ```text
//! h'' + (c/r) h' + ((c + 1)/4 + 1/2 − r²/16 + c/r²) h = 0,
//! ```
//!
//! with indicial polynomial `α² + (c − 1)α + c` at `r = 0`.
//!
//! Two coefficient sets are carried. [`Variant::Printed`] uses
//! `c = n − 1`. [`Variant::Rederived`] uses
//! `c = 2(n − 1)`: linearizing the (x, y, θ) residual directly, with
//! `2xy = r² − s²` and keeping in mind that `(r, s)` is a reflected frame
//! (so the tangent angle from ℓ is `−arctan f'`), gives that value. The numeric
//! probe compares both against the nonlinear flow.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use thiserror::Error;

use crate::integrator::{integrate, EventKind, EventSpec, IntegrateError, IntegratorConfig, Trajectory};
use crate::ode::{rotated_view, PhaseState, SymmetryParams};
use crate::rk::{solve, RkError, SolverOptions};

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("n must be at least 2, got {0}")]
    InvalidN(u32),
    #[error("span [{0}, {1}] must lie in (0, ∞)")]
    InvalidSpan(f64, f64),
    #[error("the probe needs m = n (got m={m}, n={n})")]
    Asymmetric { m: u32, n: u32 },
    #[error("probe trajectory ended at r = {0} before the window opened")]
    ShortProbe(f64),
    #[error(transparent)]
    Solver(#[from] RkError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Printed,
    Rederived,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Printed, Variant::Rederived];

    /// The constant `c` of the linearized equation.
    pub fn coefficient(self, n: u32) -> f64 {
        let k = (n - 1) as f64;
        match self {
            Variant::Printed => k,
            Variant::Rederived => 2.0 * k,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Printed => "printed",
            Variant::Rederived => "rederived",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Oscillatory,
    RealSingular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicialReport {
    pub n: u32,
    pub variant: Variant,
    /// Coefficients of `α² + bα + c`.
    pub b: f64,
    pub c: f64,
    pub discriminant: f64,
    pub roots: [Complex; 2],
    pub classification: Classification,
}

impl IndicialReport {
    /// `|α² + bα + c|` at each root, evaluated with compensated sums so the
    /// value is the residual of the stored root rather than rounding noise.
    pub fn root_residuals(&self) -> [f64; 2] {
        self.roots.map(|z| {
            let re = exact_sum(&[(z.re, z.re), (-z.im, z.im), (self.b, z.re), (self.c, 1.0)]);
            let im = exact_sum(&[(2.0 * z.re, z.im), (self.b, z.im)]);
            re.hypot(im)
        })
    }

    /// Root with the larger modulus; it governs growth towards `r = 0`.
    pub fn dominant_root(&self) -> Complex {
        let [a, b] = self.roots;
        if a.re.hypot(a.im) >= b.re.hypot(b.im) {
            a
        } else {
            b
        }
    }
}

/// `Σ aᵢbᵢ` with each product split exactly by fma and the partial sums
/// carried with their rounding errors.
fn exact_sum(terms: &[(f64, f64)]) -> f64 {
    let (mut s, mut err) = (0.0f64, 0.0f64);
    for &(a, b) in terms {
        let p = a * b;
        err += a.mul_add(b, -p);
        let t = s + p;
        let bp = t - s;
        err += (s - (t - bp)) + (p - bp);
        s = t;
    }
    s + err
}

pub fn indicial_roots(n: u32, variant: Variant) -> Result<IndicialReport, LinearError> {
    if n < 2 {
        return Err(LinearError::InvalidN(n));
    }
    let k = variant.coefficient(n);
    let (b, c) = (k - 1.0, k);
    let discriminant = b * b - 4.0 * c;
    let (roots, classification) = if discriminant < 0.0 {
        let im = 0.5 * (-discriminant).sqrt();
        (
            [Complex { re: -b / 2.0, im }, Complex { re: -b / 2.0, im: -im }],
            Classification::Oscillatory,
        )
    } else {
        // Numerically stable pair: q = −(b + sign(b)√D)/2, roots q and c/q.
        let q = -0.5 * (b + b.signum() * discriminant.sqrt());
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
        // One Newton step on the exactly evaluated quadratic brings each
        // root to within an ulp.
        let polish = |z: f64| {
            let d = z.mul_add(2.0, b);
            if d == 0.0 {
                z
            } else {
                z - exact_sum(&[(z, z), (b, z), (c, 1.0)]) / d
            }
        };
        let (r1, r2) = (polish(r1), polish(r2));
        let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
        (
            [Complex { re: hi, im: 0.0 }, Complex { re: lo, im: 0.0 }],
            Classification::RealSingular,
        )
    };
    Ok(IndicialReport {
        n,
        variant,
        b,
        c,
        discriminant,
        roots,
        classification,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralityScan {
    pub n_max: u64,
    /// `n` with a positive discriminant that is a perfect square.
    pub resonant: Vec<u64>,
}

impl IntegralityScan {
    /// True when the only resonance is the known case `n = 7`, where the
    /// discriminant is 1 and the roots −2, −3 differ by an integer.
    pub fn holds_outside_n7(&self) -> bool {
        self.resonant.iter().all(|&n| n == 7)
    }
}

/// Checks, in exact integer arithmetic, for which `n ≤ n_max` the printed
/// discriminant `(n−2)² − 4(n−1) = n² − 8n + 8` is a positive perfect square.
pub fn discriminant_integrality_scan(n_max: u64) -> IntegralityScan {
    let resonant = (2..=n_max)
        .filter(|&n| {
            let d = n as i128 * n as i128 - 8 * n as i128 + 8;
            if d <= 0 {
                return false;
            }
            let d = d as u128;
            let r = d.isqrt();
            r * r == d
        })
        .collect();
    IntegralityScan { n_max, resonant }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub n: u32,
    pub variant: Variant,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    /// `e^{−r²/8} g`.
    pub h: Vec<f64>,
    /// Largest relative residual of the h-equation over the samples.
    pub h_residual: f64,
}

fn g_second(c: f64, r: f64, g: f64, dg: f64) -> f64 {
    -(c / r - r / 2.0) * dg - (0.5 + c / (r * r)) * g
}

/// Residual of the h-equation built from `g, g', g''`, relative to the size
/// of its terms.
fn h_relative_residual(c: f64, r: f64, g: f64, dg: f64) -> f64 {
    let ddg = g_second(c, r, g, dg);
    let w = (-r * r / 8.0).exp();
    let h = w * g;
    let dh = w * (dg - r * g / 4.0);
    let ddh = w * (ddg - r * dg / 2.0 - g / 4.0 + r * r * g / 16.0);
    let q = (c + 1.0) / 4.0 + 0.5 - r * r / 16.0 + c / (r * r);
    let terms = [ddh, c / r * dh, q * h];
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>();
    let res = terms.iter().sum::<f64>().abs();
    if scale == 0.0 {
        0.0
    } else {
        res / scale
    }
}

/// Integrates the linearized equation from `span.0` (where `g, g'` are given)
/// to `span.1`, which may be smaller than `span.0`.
pub fn linearized_solution(
    n: u32,
    variant: Variant,
    span: (f64, f64),
    initial: (f64, f64),
) -> Result<LinearSolution, LinearError> {
    if n < 2 {
        return Err(LinearError::InvalidN(n));
    }
    let (a, b) = span;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(LinearError::InvalidSpan(a, b));
    }
    let c = variant.coefficient(n);
    let opts = SolverOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        h_init: 1e-4,
        h_max: 0.02,
    };
    let sol = solve(
        |r, y: &[f64; 2]| [y[1], g_second(c, r, y[0], y[1])],
        a,
        [initial.0, initial.1],
        b,
        &opts,
        |_, _| false,
    )?;
    let r = sol.times.clone();
    let g: Vec<f64> = sol.values.iter().map(|v| v[0]).collect();
    let dg: Vec<f64> = sol.values.iter().map(|v| v[1]).collect();
    let h = r.iter().zip(&g).map(|(&r, &g)| (-r * r / 8.0).exp() * g).collect();
    let h_residual = r
        .iter()
        .zip(g.iter().zip(&dg))
        .map(|(&r, (&g, &dg))| h_relative_residual(c, r, g, dg))
        .fold(0.0, f64::max);
    Ok(LinearSolution {
        n,
        variant,
        r,
        g,
        dg,
        h,
        h_residual,
    })
}

impl LinearSolution {
    /// `g` at radius `r` by cubic Hermite interpolation between samples.
    pub fn g_at(&self, r: f64) -> Option<f64> {
        let (lo, hi) = (self.r[0].min(*self.r.last()?), self.r[0].max(*self.r.last()?));
        if !(lo..=hi).contains(&r) {
            return None;
        }
        let forward = self.r[self.r.len() - 1] >= self.r[0];
        let idx = self.r.partition_point(|&s| if forward { s < r } else { s > r });
        if idx < self.r.len() && self.r[idx] == r {
            return Some(self.g[idx]);
        }
        let (i, j) = (idx - 1, idx);
        let h = self.r[j] - self.r[i];
        let s = (r - self.r[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        Some(h00 * self.g[i] + h10 * h * self.dg[i] + h01 * self.g[j] + h11 * h * self.dg[j])
    }
}

pub const PROBE_AMPLITUDES: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const PROBE_LAUNCH_R: f64 = 2.0;
/// The window closes where the largest-amplitude run reaches this `|s|/r`.
pub const PROBE_SLOPE_LIMIT: f64 = 1e-2;
/// The window never extends below this radius.
pub const PROBE_R_FLOOR: f64 = 0.02;
const PROBE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub n: u32,
    pub amplitudes: Vec<f64>,
    /// Radii where the window opens and closes (`r_open > r_close`).
    pub r_open: f64,
    pub r_close: f64,
    /// Largest sup-norm relative difference between `s/ε` fields of
    /// successive amplitudes.
    pub linearity_error: f64,
    /// Sup-norm relative distance from `s/ε` (smallest ε) to each variant.
    pub variant_errors: [(Variant, f64); 2],
    pub best_match: Variant,
    /// Sign changes of `s` across the window.
    pub sign_changes: usize,
    /// Slope of `log|s|` against `log r` over the inner half of the window;
    /// only reported when `s` keeps its sign there.
    pub fitted_exponent: Option<f64>,
}

impl ProbeReport {
    pub fn linear(&self) -> bool {
        self.linearity_error < 0.01
    }

    pub fn oscillation_detected(&self) -> bool {
        self.sign_changes > 0
    }
}

fn probe_run(eps: f64, p: &SymmetryParams, cfg: &IntegratorConfig) -> Result<Trajectory, LinearError> {
    let r0 = PROBE_LAUNCH_R;
    let start = PhaseState::new((r0 + eps) * FRAC_1_SQRT_2, (r0 - eps) * FRAC_1_SQRT_2, -3.0 * FRAC_PI_4);
    let cfg = IntegratorConfig {
        t_max: r0 - 0.5 * PROBE_R_FLOOR,
        ..*cfg
    };
    let events = [
        EventSpec::new(EventKind::OriginGuard),
        EventSpec::new(EventKind::AxisX),
        EventSpec::new(EventKind::AxisY),
        EventSpec::new(EventKind::TimeLimit),
    ];
    Ok(integrate(start, p, &events, &cfg)?)
}

/// `s` where the run passes radius `r`, assuming `r` decreases along it.
fn s_at_r(traj: &Trajectory, r: f64) -> Option<f64> {
    let samples = traj.samples();
    let rr = |st: &PhaseState| rotated_view(st).r;
    let idx = samples.partition_point(|s| rr(&s.state) > r);
    if idx == 0 || idx >= samples.len() {
        return None;
    }
    let (mut a, mut b) = (samples[idx - 1].t, samples[idx].t);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if rr(&traj.evaluate(m).ok()?) > r {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Some(rotated_view(&traj.evaluate(0.5 * (a + b)).ok()?).s)
}

fn sup_relative(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / scale
}

/// Launches the nonlinear flow parallel to ℓ at distance ε from it, heading
/// for the origin, and compares the rescaled displacement `s/ε` with the
/// solutions of both linearized equations started from `g = 1, g' = 0`.
pub fn numeric_indicial_probe(p: &SymmetryParams, cfg: &IntegratorConfig) -> Result<ProbeReport, LinearError> {
    if !p.is_symmetric() {
        return Err(LinearError::Asymmetric { m: p.m(), n: p.n() });
    }
    let n = p.n();
    let runs = std::thread::scope(|scope| {
        let handles: Vec<_> = PROBE_AMPLITUDES
            .iter()
            .map(|&eps| scope.spawn(move || probe_run(eps, p, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("probe worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let r_open = PROBE_LAUNCH_R;
    let widest = &runs[0];
    let mut r_close = PROBE_R_FLOOR;
    for s in widest.samples() {
        let v = rotated_view(&s.state);
        if v.s.abs() / v.r >= PROBE_SLOPE_LIMIT {
            r_close = r_close.max(v.r);
            break;
        }
    }
    let last_r = runs
        .iter()
        .map(|t| rotated_view(&t.terminal().state).r)
        .fold(0.0, f64::max);
    r_close = r_close.max(last_r * 1.01);
    if r_close >= 0.9 * r_open {
        return Err(LinearError::ShortProbe(r_close));
    }
    // Log-spaced radii strictly inside the window.
    let grid: Vec<f64> = (1..=PROBE_POINTS)
        .map(|k| r_open * (r_close / r_open).powf(k as f64 / PROBE_POINTS as f64))
        .collect();
    let mut fields = Vec::with_capacity(runs.len());
    for (traj, &eps) in runs.iter().zip(&PROBE_AMPLITUDES) {
        let field: Option<Vec<f64>> = grid.iter().map(|&r| s_at_r(traj, r).map(|s| s / eps)).collect();
        fields.push(field.ok_or(LinearError::ShortProbe(r_close))?);
    }
    let linearity_error = fields
        .windows(2)
        .map(|w| sup_relative(&w[0], &w[1]))
        .fold(0.0, f64::max);
    let reference = fields.last().expect("three amplitudes");
    let mut variant_errors = [(Variant::Printed, 0.0), (Variant::Rederived, 0.0)];
    for entry in variant_errors.iter_mut() {
        let lin = linearized_solution(n, entry.0, (r_open, r_close), (1.0, 0.0))?;
        let g: Vec<f64> = grid.iter().map(|&r| lin.g_at(r).unwrap_or(f64::NAN)).collect();
        entry.1 = sup_relative(&g, reference);
    }
    let best_match = if variant_errors[1].1 < variant_errors[0].1 {
        Variant::Rederived
    } else {
        Variant::Printed
    };
    let sign_changes = reference.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    let inner = &reference[PROBE_POINTS / 2..];
    let fitted_exponent = if inner.iter().all(|&v| v > 0.0) || inner.iter().all(|&v| v < 0.0) {
        let pairs: Vec<(f64, f64)> = grid[PROBE_POINTS / 2..]
            .iter()
            .zip(inner)
            .map(|(&r, &v)| (r.ln(), v.abs().ln()))
            .collect();
        Some(crate::profile::log_slope(&pairs))
    } else {
        None
    };
    Ok(ProbeReport {
        n,
        amplitudes: PROBE_AMPLITUDES.to_vec(),
        r_open,
        r_close,
        linearity_error,
        variant_errors,
        best_match,
        sign_changes,
        fitted_exponent,
    })
}
