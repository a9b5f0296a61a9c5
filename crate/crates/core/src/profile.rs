//! Closed profiles assembled by reflecting a half-profile through ℓ, and the
//! certificates attached to them.

use std::f64::consts::{FRAC_PI_4, TAU};

use thiserror::Error;

use crate::integrator::{IntegrateError, IntegratorConfig, Trajectory};
use crate::ode::{ell_distance, rotated_view, shrinker_residual, weighted_length, CurveJet, OdeError, SymmetryParams};
use crate::shooting::{find_rstar, ShootError, RETURN_ANGLE};

/// Endpoint angle tolerance for reflection assembly.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
/// Residual bound a certified profile must meet.
pub const RESIDUAL_BOUND: f64 = 1e-6;
/// Points closer than this to ℓ count as lying on it.
pub const CONTACT_TOL: f64 = 1e-8;
/// Collar for the orientation predicates in the intersection test.
pub const COLLAR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reflection needs m = n (got m={m}, n={n})")]
    Asymmetric { m: u32, n: u32 },
    #[error("seam gap {gap:e} exceeds {limit:e}")]
    SeamMismatch { gap: f64, limit: f64 },
    #[error("{which} endpoint is off by {error:e} from orthogonal to ℓ")]
    NotOrthogonal { which: &'static str, error: f64 },
    #[error("resample spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("polyline needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("zero-length segment at index {0}")]
    DegenerateSegment(usize),
    #[error("point {index} ({x}, {y}) is outside the open quadrant")]
    OutsideQuadrant { index: usize, x: f64, y: f64 },
    #[error("irregular spacing around point {index} (chord ratio {ratio})")]
    IrregularSpacing { index: usize, ratio: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Shoot(#[from] ShootError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedProfile {
    /// Closed polyline, first point repeated at the end.
    pub points: Vec<(f64, f64)>,
    pub params: SymmetryParams,
    pub r_star: f64,
    pub resample_h: f64,
    pub max_residual: f64,
    pub embedded: bool,
    pub ell_contacts: usize,
    pub closure_gap: f64,
}

impl ClosedProfile {
    pub fn is_certified(&self) -> bool {
        self.embedded
            && self.ell_contacts >= 2
            && self.closure_gap < self.resample_h / 10.0
            && self.max_residual < RESIDUAL_BOUND
    }
}

/// Angle difference reduced to `(−π, π]`.
fn angle_error(theta: f64, target: f64) -> f64 {
    let d = (theta - target).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Appends to `half` its mirror image `(x, y) → (y, x)` in reverse order,
/// skipping the mirror of the last point. If `half` starts on ℓ the result is
/// closed: its last point equals its first.
pub fn mirror_assemble(half: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * half.len());
    out.extend_from_slice(half);
    out.extend(half.iter().rev().skip(1).map(|&(x, y)| (y, x)));
    out
}

/// Resamples the half-profile uniformly in arc length with spacing at most
/// `resample_h`, reflects it through ℓ and certifies the result.
pub fn reflect_close(half: &Trajectory, p: &SymmetryParams, resample_h: f64) -> Result<ClosedProfile, ProfileError> {
    if !p.is_symmetric() {
        return Err(ProfileError::Asymmetric { m: p.m(), n: p.n() });
    }
    if !(resample_h > 0.0 && resample_h.is_finite()) {
        return Err(ProfileError::InvalidSpacing(resample_h));
    }
    let start = half.initial();
    let end = half.terminal().state;
    let e0 = angle_error(start.theta, -FRAC_PI_4);
    if e0.abs() > ORTHOGONALITY_TOL {
        return Err(ProfileError::NotOrthogonal {
            which: "launch",
            error: e0,
        });
    }
    let e1 = angle_error(end.theta, RETURN_ANGLE);
    if e1.abs() > ORTHOGONALITY_TOL {
        return Err(ProfileError::NotOrthogonal {
            which: "return",
            error: e1,
        });
    }
    let seam_start = (start.x - start.y).abs();
    let seam_end = std::f64::consts::SQRT_2 * rotated_view(&end).s.abs();
    let closure_gap = seam_start.max(seam_end);
    let limit = resample_h / 10.0;
    if closure_gap >= limit {
        return Err(ProfileError::SeamMismatch {
            gap: closure_gap,
            limit,
        });
    }
    let span = half.t_end() - half.t_start();
    let count = (span / resample_h).ceil().max(1.0) as usize;
    let points = mirror_assemble(&half.resample(count));
    let mut profile = ClosedProfile {
        points,
        params: *p,
        r_star: rotated_view(&start).r,
        resample_h,
        max_residual: f64::NAN,
        embedded: false,
        ell_contacts: 0,
        closure_gap,
    };
    profile.embedded = is_embedded(&profile.points)?;
    profile.ell_contacts = ell_contacts(&profile)?;
    profile.max_residual = profile_residual(&profile)?;
    Ok(profile)
}

/// Angle tolerance for the seam polish in [`build_closed_profile`]. An angle
/// error δ at the return leaves a kink of 2δ at the seam, which the
/// curvature stencils see as an error of about δ/h.
pub const SEAM_TOL: f64 = 1e-11;

/// Re-solves for the critical radius near `r_star` with the step capped at
/// `resample_h`, so that resampled points come from short dense-output
/// segments and the seam is orthogonal to [`SEAM_TOL`], then assembles the
/// closed profile from that shot.
pub fn build_closed_profile(
    p: &SymmetryParams,
    r_star: f64,
    resample_h: f64,
    cfg: &IntegratorConfig,
) -> Result<ClosedProfile, ProfileError> {
    let fine = IntegratorConfig {
        h_max: cfg.h_max.min(resample_h),
        ..*cfg
    };
    let mut width = 1e-6 * r_star;
    let polished = loop {
        match find_rstar(p, (r_star - width, r_star + width), SEAM_TOL, &fine) {
            Err(ShootError::NoSignChange { .. }) if width < 1e-2 * r_star => width *= 100.0,
            other => break other?,
        }
    };
    reflect_close(&polished.final_shot.trajectory, p, resample_h)
}

/// Drops the repeated closing point, if any.
fn open_vertices(points: &[(f64, f64)]) -> &[(f64, f64)] {
    match (points.first(), points.last()) {
        (Some(a), Some(b)) if points.len() > 1 && a == b => &points[..points.len() - 1],
        _ => points,
    }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Side of `c` relative to the line through `a, b`: −1, 0 or 1, with a
/// distance collar of [`COLLAR`].
fn side(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> i8 {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let d = orient(a, b, c) / len;
    if d > COLLAR {
        1
    } else if d < -COLLAR {
        -1
    } else {
        0
    }
}

fn in_box(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    c.0 >= a.0.min(b.0) - COLLAR
        && c.0 <= a.0.max(b.0) + COLLAR
        && c.1 >= a.1.min(b.1) - COLLAR
        && c.1 <= a.1.max(b.1) + COLLAR
}

fn segments_meet(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2) = (side(a, b, c), side(a, b, d));
    let (o3, o4) = (side(c, d, a), side(c, d, b));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && in_box(a, b, c))
        || (o2 == 0 && in_box(a, b, d))
        || (o3 == 0 && in_box(c, d, a))
        || (o4 == 0 && in_box(c, d, b))
}

type Segment = ((f64, f64), (f64, f64));

fn segment_list(points: &[(f64, f64)]) -> Result<Vec<Segment>, ProfileError> {
    let v = open_vertices(points);
    if v.len() < 3 || points.len() < 4 && v.len() == points.len() - 1 {
        return Err(ProfileError::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    let k = v.len();
    (0..k)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % k]);
            if a == b {
                Err(ProfileError::DegenerateSegment(i))
            } else {
                Ok((a, b))
            }
        })
        .collect()
}

fn adjacent(i: usize, j: usize, k: usize) -> bool {
    let d = i.abs_diff(j);
    d <= 1 || d == k - 1
}

/// True iff no two non-adjacent segments of the closed polyline meet.
/// Segments are swept in order of their left end, so only pairs with
/// overlapping x-ranges are tested.
pub fn is_embedded(points: &[(f64, f64)]) -> Result<bool, ProfileError> {
    let segs = segment_list(points)?;
    let k = segs.len();
    let mut order: Vec<usize> = (0..k).collect();
    let lo = |i: usize| segs[i].0 .0.min(segs[i].1 .0);
    let hi = |i: usize| segs[i].0 .0.max(segs[i].1 .0);
    order.sort_by(|&a, &b| lo(a).total_cmp(&lo(b)));
    for (pos, &i) in order.iter().enumerate() {
        let right = hi(i) + COLLAR;
        for &j in &order[pos + 1..] {
            if lo(j) > right {
                break;
            }
            if adjacent(i, j, k) {
                continue;
            }
            let (a, b) = segs[i];
            let (c, d) = segs[j];
            if segments_meet(a, b, c, d) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Quadratic reference version of [`is_embedded`].
pub fn is_embedded_brute_force(points: &[(f64, f64)]) -> Result<bool, ProfileError> {
    let segs = segment_list(points)?;
    let k = segs.len();
    for i in 0..k {
        for j in i + 1..k {
            if adjacent(i, j, k) {
                continue;
            }
            if segments_meet(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Number of maximal cyclic runs of points where the profile touches or
/// crosses ℓ.
pub fn ell_contacts(profile: &ClosedProfile) -> Result<usize, ProfileError> {
    let v = open_vertices(&profile.points);
    for (index, &(x, y)) in v.iter().enumerate() {
        if !(x > 0.0 && y > 0.0) {
            return Err(ProfileError::OutsideQuadrant { index, x, y });
        }
    }
    let sign: Vec<i8> = v
        .iter()
        .map(|&(x, y)| {
            let s = ell_distance(x, y, &profile.params);
            if s.abs() <= CONTACT_TOL {
                0
            } else if s > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let k = sign.len();
    if sign.iter().all(|&s| s == 0) {
        return Ok(1);
    }
    let mut count = 0;
    for i in 0..k {
        let (a, b) = (sign[i], sign[(i + 1) % k]);
        // A run of zeros is counted at its first point; a direct sign flip
        // between neighbours is a crossing between samples.
        if b == 0 && a != 0 || a * b < 0 {
            count += 1;
        }
    }
    Ok(count)
}

/// Tangent angle and curvature at every vertex of a closed polyline from
/// five-point differences of the positions.
///
/// Derivatives are taken with respect to the point index scaled by the local
/// chord length, so the curvature estimate carries the chord/arc discrepancy
/// `κ³h²/24` and converges at second order in the spacing.
pub fn finite_difference_jets(points: &[(f64, f64)]) -> Result<Vec<CurveJet>, ProfileError> {
    let v = open_vertices(points);
    let k = v.len();
    if k < 5 {
        return Err(ProfileError::TooFewPoints {
            needed: 6,
            got: points.len(),
        });
    }
    let chords: Vec<f64> = (0..k)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % k]);
            ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
        })
        .collect();
    let at = |i: usize, off: isize| (i as isize + off).rem_euclid(k as isize) as usize;
    // Stencil step at a vertex: mean of the four chords it spans.
    let mut steps = Vec::with_capacity(k);
    for i in 0..k {
        let c = [chords[at(i, -2)], chords[at(i, -1)], chords[i], chords[at(i, 1)]];
        let (lo, hi) = c
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if lo == 0.0 || hi / lo > 1.01 {
            return Err(ProfileError::IrregularSpacing {
                index: i,
                ratio: hi / lo,
            });
        }
        steps.push(c.iter().sum::<f64>() / 4.0);
    }
    let stencil = |f: &dyn Fn(usize) -> f64, i: usize| {
        (f(at(i, -2)) - 8.0 * f(at(i, -1)) + 8.0 * f(at(i, 1)) - f(at(i, 2))) / (12.0 * steps[i])
    };
    let theta: Vec<f64> = (0..k)
        .map(|i| stencil(&|j| v[j].1, i).atan2(stencil(&|j| v[j].0, i)))
        .collect();
    Ok((0..k)
        .map(|i| {
            let base = theta[i];
            let near = |j: usize| theta[j] + TAU * ((base - theta[j]) / TAU).round();
            CurveJet::new(v[i].0, v[i].1, base, stencil(&near, i))
        })
        .collect())
}

/// Largest shrinker residual over the profile vertices, from
/// [`finite_difference_jets`].
pub fn profile_residual(profile: &ClosedProfile) -> Result<f64, ProfileError> {
    let mut worst = 0.0f64;
    for jet in finite_difference_jets(&profile.points)? {
        worst = worst.max(shrinker_residual(&jet, &profile.params)?.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub coordinate: Coordinate,
    pub t: f64,
    /// Coordinate value minus its cylinder radius.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlternationReport {
    pub critical_points: Vec<CriticalPoint>,
    /// Second member of each successive pair whose offsets share a sign.
    pub violations: Vec<CriticalPoint>,
}

/// Interior critical points of `x(t)` and `y(t)` and the successive pairs at
/// which `y − √(2(n−1))` (resp. `x − √(2(m−1))`) fails to change sign.
pub fn critical_alternation(traj: &Trajectory, p: &SymmetryParams) -> AlternationReport {
    let samples = traj.samples();
    let t_end = traj.t_end();
    let mut report = AlternationReport::default();
    for (coordinate, level) in [(Coordinate::X, p.cyl_x()), (Coordinate::Y, p.cyl_y())] {
        // x' = cos θ, y' = sin θ.
        let rate = |theta: f64| match coordinate {
            Coordinate::X => theta.cos(),
            Coordinate::Y => theta.sin(),
        };
        let mut found = Vec::new();
        for w in samples.windows(2) {
            let (mut a, mut b) = (w[0].t, w[1].t);
            let mut ra = rate(w[0].state.theta);
            let rb = rate(w[1].state.theta);
            if ra == 0.0 || (ra > 0.0) == (rb > 0.0) {
                continue;
            }
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let rm = rate(traj.evaluate(m).expect("inside span").theta);
                if (rm > 0.0) == (ra > 0.0) {
                    a = m;
                    ra = rm;
                } else {
                    b = m;
                }
                if b - a < 1e-13 {
                    break;
                }
            }
            let t = 0.5 * (a + b);
            if t >= t_end - 1e-9 {
                continue;
            }
            let st = traj.evaluate(t).expect("inside span");
            let value = match coordinate {
                Coordinate::X => st.x,
                Coordinate::Y => st.y,
            };
            found.push(CriticalPoint {
                coordinate,
                t,
                offset: value - level,
            });
        }
        for w in found.windows(2) {
            if w[0].offset * w[1].offset > 0.0 {
                report.violations.push(w[1]);
            }
        }
        report.critical_points.extend(found);
    }
    report.critical_points.sort_by(|a, b| a.t.total_cmp(&b.t));
    report
}

/// Profile displaced along its normal by `ε·sin(2πσ/L)`, σ the cumulative
/// chord length and L the perimeter.
pub fn normal_perturbation(points: &[(f64, f64)], eps: f64) -> Vec<(f64, f64)> {
    let v = open_vertices(points);
    let k = v.len();
    let mut sigma = vec![0.0; k + 1];
    for i in 0..k {
        let (a, b) = (v[i], v[(i + 1) % k]);
        sigma[i + 1] = sigma[i] + ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    }
    let perimeter = sigma[k];
    let mut out: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let (a, b) = (v[(i + k - 1) % k], v[(i + 1) % k]);
            let (tx, ty) = (b.0 - a.0, b.1 - a.1);
            let norm = (tx * tx + ty * ty).sqrt();
            let (nx, ny) = (-ty / norm, tx / norm);
            let amp = eps * (TAU * sigma[i] / perimeter).sin();
            (v[i].0 + amp * nx, v[i].1 + amp * ny)
        })
        .collect();
    out.push(out[0]);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariation {
    /// `(ε, |L(Γ_ε) − L(Γ)|)` for each amplitude.
    pub deltas: Vec<(f64, f64)>,
    /// Least-squares slope of `log|ΔL|` against `log ε`.
    pub exponent: f64,
}

/// Scaling of the weighted length change under normal perturbations. At a
/// critical curve the change is quadratic in ε.
pub fn first_variation(points: &[(f64, f64)], p: &SymmetryParams, amplitudes: &[f64]) -> FirstVariation {
    let base = weighted_length(points, p);
    let deltas: Vec<(f64, f64)> = amplitudes
        .iter()
        .map(|&eps| {
            (
                eps,
                (weighted_length(&normal_perturbation(points, eps), p) - base).abs(),
            )
        })
        .collect();
    let logs: Vec<(f64, f64)> = deltas.iter().map(|&(e, d)| (e.ln(), d.ln())).collect();
    FirstVariation {
        exponent: log_slope(&logs),
        deltas,
    }
}

/// Least-squares slope through `(u, v)` pairs.
pub fn log_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mu, mv) = pairs.iter().fold((0.0, 0.0), |(a, b), &(u, v)| (a + u / n, b + v / n));
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(a, b), &(u, v)| {
        (a + (u - mu) * (v - mv), b + (u - mu) * (u - mu))
    });
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{EventKind, Sample};
    use crate::ode::PhaseState;
    use std::f64::consts::PI;

    fn circle(radius: f64, center: (f64, f64), count: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let a = TAU * i as f64 / count as f64;
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            })
            .collect();
        pts.push(pts[0]);
        pts
    }

    fn profile_of(points: Vec<(f64, f64)>, n: u32) -> ClosedProfile {
        ClosedProfile {
            points,
            params: SymmetryParams::symmetric(n).unwrap(),
            r_star: 0.0,
            resample_h: 1e-3,
            max_residual: 0.0,
            embedded: true,
            ell_contacts: 0,
            closure_gap: 0.0,
        }
    }

    #[test]
    fn square_and_bowtie() {
        let square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        assert!(is_embedded(&square).unwrap());
        assert!(is_embedded_brute_force(&square).unwrap());
        let bowtie = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)];
        assert!(!is_embedded(&bowtie).unwrap());
        assert!(!is_embedded_brute_force(&bowtie).unwrap());
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)];
        assert!(matches!(is_embedded(&pts), Err(ProfileError::DegenerateSegment(1))));
        assert!(is_embedded(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]).is_err());
    }

    #[test]
    fn touching_vertex_is_not_embedded() {
        // Figure eight that passes through the same vertex twice.
        let pts = [
            (0.0, 0.0),
            (1.0, 1.0),
            (2.0, 0.0),
            (3.0, 1.0),
            (2.0, 2.0),
            (1.0, 1.0),
            (0.0, 2.0),
            (0.0, 0.0),
        ];
        assert!(!is_embedded(&pts).unwrap());
        assert!(!is_embedded_brute_force(&pts).unwrap());
    }

    #[test]
    fn sweep_agrees_with_brute_force_on_lissajous() {
        for (a, b) in [(1.0, 1.0), (1.0, 2.0), (3.0, 2.0), (1.0, 3.0)] {
            let pts: Vec<(f64, f64)> = (0..=400)
                .map(|i| {
                    let t = TAU * (i % 400) as f64 / 400.0;
                    ((a * t).sin() + 0.013 * t.cos(), (b * t + 0.3).sin())
                })
                .collect();
            assert_eq!(
                is_embedded(&pts).unwrap(),
                is_embedded_brute_force(&pts).unwrap(),
                "{a} {b}"
            );
        }
    }

    #[test]
    fn mirror_of_circle_arc() {
        let rho = 6f64.sqrt();
        // Quarter arc from the x-axis up to ℓ; reflection continues it to
        // the y-axis.
        let mut arc: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let a = FRAC_PI_4 * i as f64 / 100.0;
                (rho * a.cos(), rho * a.sin())
            })
            .collect();
        arc[100] = (rho / std::f64::consts::SQRT_2, rho / std::f64::consts::SQRT_2);
        let full = mirror_assemble(&arc);
        assert_eq!(full.len(), 201);
        assert_eq!(full[0], (full[200].1, full[200].0));
        for (i, &(x, y)) in full.iter().enumerate() {
            assert!((x.hypot(y) - rho).abs() < 1e-14);
            assert_eq!((x, y), (full[200 - i].1, full[200 - i].0));
        }
    }

    #[test]
    fn residual_of_ell_segment_vanishes() {
        // Out along ℓ and straight back, so every stencil is regular.
        let step = 1e-2 / std::f64::consts::SQRT_2;
        let out: Vec<(f64, f64)> = (0..200)
            .map(|i| (1.0 + step * i as f64, 1.0 + step * i as f64))
            .collect();
        let mut pts = out.clone();
        pts.extend(out[1..199].iter().rev());
        pts.push(pts[0]);
        let p = SymmetryParams::symmetric(3).unwrap();
        let jets = finite_difference_jets(&pts).unwrap();
        for jet in &jets[5..190] {
            assert!(shrinker_residual(jet, &p).unwrap().abs() < 1e-10);
        }
    }

    /// Largest residual of the sphere circle over vertices well inside the
    /// quadrant.
    fn circle_fd_residual(rho: f64, count: usize) -> f64 {
        let p = SymmetryParams::symmetric(2).unwrap();
        finite_difference_jets(&circle(rho, (0.0, 0.0), count))
            .unwrap()
            .iter()
            .filter(|j| j.x > 0.1 && j.y > 0.1)
            .map(|j| shrinker_residual(j, &p).unwrap().abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn circle_residual_second_order() {
        let rho = 6f64.sqrt();
        let count = |h: f64| (TAU * rho / h).round() as usize;
        let logs: Vec<(f64, f64)> = [0.08, 0.04, 0.02]
            .iter()
            .map(|&h: &f64| (h.ln(), circle_fd_residual(rho, count(h)).ln()))
            .collect();
        let slope = log_slope(&logs);
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
        assert!(circle_fd_residual(rho, count(1e-3)) < 1e-5);
    }

    #[test]
    fn profile_residual_rejects_irregular_spacing() {
        let mut pts = circle(1.0, (3.0, 3.0), 200);
        pts[50].0 += 0.01;
        let prof = profile_of(pts, 2);
        assert!(matches!(
            profile_residual(&prof),
            Err(ProfileError::IrregularSpacing { .. })
        ));
    }

    #[test]
    fn contacts_of_offset_circle() {
        // Circle centred on ℓ crosses it twice; generic sampling avoids ℓ.
        let prof = profile_of(circle(1.0, (3.0, 3.0), 301), 2);
        assert_eq!(ell_contacts(&prof).unwrap(), 2);
        // Sampling that puts vertices on ℓ counts each touching run once.
        let prof = profile_of(circle(1.0, (3.0, 3.0), 8).iter().map(|&(x, y)| (x, y)).collect(), 2);
        assert_eq!(ell_contacts(&prof).unwrap(), 2);
        let prof = profile_of(circle(1.0, (3.0, 6.0), 100), 2);
        assert_eq!(ell_contacts(&prof).unwrap(), 0);
    }

    #[test]
    fn contacts_reject_axis_points() {
        let prof = profile_of(circle(6f64.sqrt(), (0.0, 0.0), 64), 2);
        assert!(matches!(ell_contacts(&prof), Err(ProfileError::OutsideQuadrant { .. })));
    }

    #[test]
    fn alternation_flags_synthetic_violation() {
        let p = SymmetryParams::symmetric(2).unwrap();
        // y = 0.5 + 0.1 sin t stays below √2, so its extrema never alternate.
        let samples: Vec<Sample> = (0..=400)
            .map(|i| {
                let t = 0.05 * i as f64;
                let theta = (0.1 * t.cos()).atan();
                Sample {
                    t,
                    state: PhaseState::new(1.0 + t, 0.5 + 0.1 * t.sin(), theta),
                }
            })
            .collect();
        let traj = Trajectory::from_states(p, samples, EventKind::TimeLimit).unwrap();
        let rep = critical_alternation(&traj, &p);
        assert!(rep.critical_points.len() >= 5);
        assert!(!rep.violations.is_empty());
        assert!(rep.violations.iter().all(|v| v.coordinate == Coordinate::Y));
    }

    #[test]
    fn angle_error_wraps() {
        assert!((angle_error(-5.0 * FRAC_PI_4 + TAU, RETURN_ANGLE)).abs() < 1e-15);
        assert!((angle_error(PI, -PI)).abs() < 1e-15);
    }

    #[test]
    fn perturbation_of_circle_is_quadratic_for_critical_length() {
        // Circle of radius √6 centred at the origin is a closed geodesic of
        // the m = n = 2 metric only in the quadrant; instead use the
        // Euclidean circle as a sanity check of the normal offset.
        let pts = circle(2.0, (5.0, 5.0), 1000);
        let moved = normal_perturbation(&pts, 0.01);
        let max_off = moved
            .iter()
            .zip(&pts)
            .map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!((max_off - 0.01).abs() < 1e-6);
        assert_eq!(moved[0], *moved.last().unwrap());
    }
}
