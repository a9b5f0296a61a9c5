//! Numerical construction of closed embedded self-shrinkers invariant under
//! O(n)×O(n), by shooting geodesics of the reduced metric from the diagonal.

pub mod cli;
pub mod integrator;
pub mod io;
pub mod linear;
pub mod ode;
pub mod profile;
pub mod rk;
pub mod shooting;
