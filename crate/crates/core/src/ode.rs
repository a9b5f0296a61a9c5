//! Reduced equations for O(m)×O(n)-invariant self-shrinkers.
//!
//! An invariant hypersurface in R^{m+n} is described by its profile curve
//! `(x(t), y(t))` in the open quadrant, where `x = |first factor|` and
//! `y = |second factor|`. Parametrized by Euclidean arc length with tangent
//! angle `θ`, the shrinker equation `H = <X, ν>/2` becomes the first-order
//! system
//!
//! ```text
//! x' = cos θ
//! y' = sin θ
//! θ' = (x/2 − (m−1)/x) sin θ + ((n−1)/y − y/2) cos θ
//! ```
//!
//! Curvature is counterclockwise positive and the unit normal is
//! `ν = (−sin θ, cos θ)`. The same curves are the geodesics of the conformal
//! metric `x^{2(m−1)} y^{2(n−1)} e^{−(x²+y²)/2} (dx² + dy²)`; see the README for
//! the Euler–Lagrange derivation that ties the two descriptions together.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("symmetry factors must satisfy m >= 2 and n >= 2 (got m={m}, n={n})")]
    InvalidParams { m: u32, n: u32 },
    #[error("point ({x}, {y}) is outside the open quadrant")]
    Domain { x: f64, y: f64 },
}

/// The pair `(m, n)` of rotation factors and the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryParams {
    m: u32,
    n: u32,
    ell_slope: f64,
    sphere_radius: f64,
    cyl_x: f64,
    cyl_y: f64,
}

impl SymmetryParams {
    pub fn new(m: u32, n: u32) -> Result<Self, OdeError> {
        if m < 2 || n < 2 {
            return Err(OdeError::InvalidParams { m, n });
        }
        let (mf, nf) = (m as f64, n as f64);
        Ok(Self {
            m,
            n,
            ell_slope: ((nf - 1.0) / (mf - 1.0)).sqrt(),
            sphere_radius: (2.0 * (mf + nf - 1.0)).sqrt(),
            cyl_x: (2.0 * (mf - 1.0)).sqrt(),
            cyl_y: (2.0 * (nf - 1.0)).sqrt(),
        })
    }

    /// Equal factors, the case in which reflection through ℓ is an isometry.
    pub fn symmetric(n: u32) -> Result<Self, OdeError> {
        Self::new(n, n)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.m == self.n
    }

    /// Slope of the cone line ℓ: `y = sqrt((n−1)/(m−1)) x`.
    pub fn ell_slope(&self) -> f64 {
        self.ell_slope
    }

    /// Radius of the sphere solution `x² + y² = 2(m+n−1)`.
    pub fn sphere_radius(&self) -> f64 {
        self.sphere_radius
    }

    /// Position of the vertical cylinder line `x = sqrt(2(m−1))`.
    pub fn cyl_x(&self) -> f64 {
        self.cyl_x
    }

    /// Position of the horizontal cylinder line `y = sqrt(2(n−1))`.
    pub fn cyl_y(&self) -> f64 {
        self.cyl_y
    }

    /// Parameters with the two factors exchanged. The map
    /// `(x, y, θ) -> (y, x, π/2 − θ)` sends solutions for `(m, n)` to
    /// solutions for `(n, m)`.
    pub fn swapped(&self) -> Self {
        Self::new(self.n, self.m).expect("swapping preserves validity")
    }

    fn mm1(&self) -> f64 {
        self.m as f64 - 1.0
    }

    fn nm1(&self) -> f64 {
        self.n as f64 - 1.0
    }
}

/// A point of the unit tangent bundle over the quadrant. `theta` is kept
/// unwrapped along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// Mirror image through the diagonal: `(x, y, θ) -> (y, x, π/2 − θ)`.
    pub fn reflected(&self) -> Self {
        Self::new(self.y, self.x, std::f64::consts::FRAC_PI_2 - self.theta)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Coordinates adapted to the diagonal: `r` along it, `s` across it, and the
/// velocity angle `psi` measured from the diagonal direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedView {
    pub r: f64,
    pub s: f64,
    pub psi: f64,
}

/// Position, tangent angle and signed curvature of a unit-speed profile curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveJet {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
}

impl CurveJet {
    pub fn new(x: f64, y: f64, theta: f64, kappa: f64) -> Self {
        Self { x, y, theta, kappa }
    }
}

fn check_open(x: f64, y: f64) -> Result<(), OdeError> {
    if x > 0.0 && y > 0.0 {
        Ok(())
    } else {
        Err(OdeError::Domain { x, y })
    }
}

/// Curvature forced by the shrinker equation at position `(x, y)` with
/// tangent angle `theta`. Callers are responsible for the domain check.
#[inline]
pub(crate) fn forced_curvature(x: f64, y: f64, theta: f64, p: &SymmetryParams) -> f64 {
    let (sin, cos) = theta.sin_cos();
    (x / 2.0 - p.mm1() / x) * sin + (p.nm1() / y - y / 2.0) * cos
}

/// Angular velocity `dθ/dt` of the geodesic flow.
pub fn theta_rhs(state: &PhaseState, p: &SymmetryParams) -> Result<f64, OdeError> {
    check_open(state.x, state.y)?;
    Ok(forced_curvature(state.x, state.y, state.theta, p))
}

/// Residual of the parametric shrinker equation for a unit-speed jet.
/// Zero exactly on solutions; the sign flips with orientation.
pub fn shrinker_residual(jet: &CurveJet, p: &SymmetryParams) -> Result<f64, OdeError> {
    check_open(jet.x, jet.y)?;
    let (sin, cos) = jet.theta.sin_cos();
    let rhs = (jet.x * sin - jet.y * cos) / 2.0 + p.nm1() * cos / jet.y - p.mm1() * sin / jet.x;
    Ok(jet.kappa - rhs)
}

/// `u''` for a profile written as a graph `y = u(x)`.
pub fn graphical_rhs(x: f64, u: f64, uprime: f64, p: &SymmetryParams) -> Result<f64, OdeError> {
    check_open(x, u)?;
    Ok(((x * uprime - u) / 2.0 + p.nm1() / u - p.mm1() * uprime / x) * (1.0 + uprime * uprime))
}

/// Principal curvatures of the hypersurface generated by a profile jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalCurvatures {
    /// Curvature along the first sphere factor, multiplicity `m − 1`.
    pub kappa_m: f64,
    /// Curvature along the second sphere factor, multiplicity `n − 1`.
    pub kappa_n: f64,
    /// Curvature of the profile curve itself, multiplicity one.
    pub kappa_profile: f64,
    pub mult_m: u32,
    pub mult_n: u32,
}

impl PrincipalCurvatures {
    /// Multiplicity-weighted sum.
    pub fn mean_curvature(&self) -> f64 {
        self.mult_m as f64 * self.kappa_m + self.mult_n as f64 * self.kappa_n + self.kappa_profile
    }
}

pub fn principal_curvatures(jet: &CurveJet, p: &SymmetryParams) -> Result<PrincipalCurvatures, OdeError> {
    check_open(jet.x, jet.y)?;
    let (sin, cos) = jet.theta.sin_cos();
    Ok(PrincipalCurvatures {
        kappa_m: sin / jet.x,
        kappa_n: -cos / jet.y,
        kappa_profile: jet.kappa,
        mult_m: p.m - 1,
        mult_n: p.n - 1,
    })
}

/// Conformal factor of the reduced metric. Vanishes on the axes.
pub fn metric_weight(x: f64, y: f64, p: &SymmetryParams) -> f64 {
    x.powi(2 * p.mm1() as i32) * y.powi(2 * p.nm1() as i32) * (-(x * x + y * y) / 2.0).exp()
}

/// Length density of the reduced metric, the square root of [`metric_weight`].
pub fn length_density(x: f64, y: f64, p: &SymmetryParams) -> f64 {
    x.powi(p.mm1() as i32) * y.powi(p.nm1() as i32) * (-(x * x + y * y) / 4.0).exp()
}

/// Weighted length of a polyline, midpoint rule on each segment.
pub fn weighted_length(points: &[(f64, f64)], p: &SymmetryParams) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            length_density(0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1), p) * len
        })
        .sum()
}

pub fn rotated_view(state: &PhaseState) -> RotatedView {
    RotatedView {
        r: (state.x + state.y) * FRAC_1_SQRT_2,
        s: (state.x - state.y) * FRAC_1_SQRT_2,
        psi: state.theta - FRAC_PI_4,
    }
}

/// Signed distance to ℓ, positive below the line.
pub fn ell_distance(x: f64, y: f64, p: &SymmetryParams) -> f64 {
    if p.is_symmetric() {
        (x - y) * FRAC_1_SQRT_2
    } else {
        let beta = p.ell_slope.atan();
        x * beta.sin() - y * beta.cos()
    }
}

/// The four families of exact solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionFamily {
    /// The cone line ℓ through the origin.
    Ray,
    /// The sphere of radius `sqrt(2(m+n−1))`.
    Sphere,
    /// `x = sqrt(2(m−1))`.
    VerticalCylinder,
    /// `y = sqrt(2(n−1))`.
    HorizontalCylinder,
}

impl SolutionFamily {
    pub const ALL: [SolutionFamily; 4] = [
        SolutionFamily::Ray,
        SolutionFamily::Sphere,
        SolutionFamily::VerticalCylinder,
        SolutionFamily::HorizontalCylinder,
    ];
}

/// A closed-form solution, sampled by a normalized parameter in `(0, 1)`
/// that stays inside the open quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownSolution {
    pub family: SolutionFamily,
    params: SymmetryParams,
    /// Extent of the sampled portion for unbounded families.
    pub extent: f64,
}

impl KnownSolution {
    /// Jet at parameter `u ∈ (0, 1)`. Lines are traversed away from the
    /// origin/axis, the circle counterclockwise.
    pub fn jet(&self, u: f64) -> CurveJet {
        let p = &self.params;
        match self.family {
            SolutionFamily::Ray => {
                let angle = p.ell_slope.atan();
                let d = u * self.extent;
                CurveJet::new(d * angle.cos(), d * angle.sin(), angle, 0.0)
            }
            SolutionFamily::Sphere => {
                let rho = p.sphere_radius;
                let phi = u * std::f64::consts::FRAC_PI_2;
                CurveJet::new(rho * phi.cos(), rho * phi.sin(), phi + PI / 2.0, 1.0 / rho)
            }
            SolutionFamily::VerticalCylinder => CurveJet::new(p.cyl_x, u * self.extent, PI / 2.0, 0.0),
            SolutionFamily::HorizontalCylinder => CurveJet::new(u * self.extent, p.cyl_y, 0.0, 0.0),
        }
    }

    /// `count` jets at the interior points `(k + 1/2) / count`.
    pub fn sample(&self, count: usize) -> Vec<CurveJet> {
        (0..count).map(|k| self.jet((k as f64 + 0.5) / count as f64)).collect()
    }

    /// The solution as a polyline of `count` points.
    pub fn polyline(&self, count: usize) -> Vec<(f64, f64)> {
        self.sample(count).iter().map(|j| (j.x, j.y)).collect()
    }
}

pub fn known_solutions(p: &SymmetryParams) -> Vec<KnownSolution> {
    let extent = 4.0 * p.sphere_radius;
    SolutionFamily::ALL
        .iter()
        .map(|&family| KnownSolution {
            family,
            params: *p,
            extent,
        })
        .collect()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rotated_view_preserves_product(x in 1e-3f64..50.0, y in 1e-3f64..50.0, th in -10.0f64..10.0) {
            let v = rotated_view(&PhaseState::new(x, y, th));
            let lhs = v.r * v.r - v.s * v.s;
            prop_assert!((lhs - 2.0 * x * y).abs() <= 1e-14 * (x * x + y * y));
            prop_assert!(v.r > v.s.abs());
        }

        #[test]
        fn residual_agrees_with_flow(m in 2u32..7, n in 2u32..7,
                                     x in 0.05f64..6.0, y in 0.05f64..6.0, th in -7.0f64..7.0) {
            let q = SymmetryParams::new(m, n).unwrap();
            let st = PhaseState::new(x, y, th);
            let k = theta_rhs(&st, &q).unwrap();
            let r = shrinker_residual(&CurveJet::new(x, y, th, k), &q).unwrap();
            prop_assert!(r.abs() <= 1e-12 * (1.0 + k.abs()));
        }

        #[test]
        fn swap_symmetry_of_flow(m in 2u32..7, n in 2u32..7,
                                 x in 0.05f64..6.0, y in 0.05f64..6.0, th in -7.0f64..7.0) {
            let q = SymmetryParams::new(m, n).unwrap();
            let st = PhaseState::new(x, y, th);
            let a = theta_rhs(&st, &q).unwrap();
            let b = theta_rhs(&st.reflected(), &q.swapped()).unwrap();
            prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
