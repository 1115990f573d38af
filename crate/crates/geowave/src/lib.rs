//! Desk-scale reconstruction pipeline for a damped wave equation on a
//! 2-D Riemannian chart: simulate the Dirichlet-to-Neumann map, probe it
//! with geometric-optics solutions concentrated along geodesics, extract
//! the geodesic X-ray transform of the absorption coefficient and the
//! potential, and invert that transform to recover both coefficients.
//!
//! The crate is organized around the stages of that pipeline:
//!
//! * [`manifold`] — closed-form metric families on an extended chart,
//!   Christoffel symbols, curvature, the `k+` characteristic and a
//!   simplicity check;
//! * [`geodesics`] — geodesic flow, exit times, the exponential map,
//!   distance functions and the polar volume factor;
//! * [`xray`] — the geodesic X-ray transform over inward boundary
//!   directions, boundary Sobolev norms, regularized inversion and the
//!   measured stability ratio;
//! * [`wavesim`] — an embedded-boundary leapfrog solver for the damped
//!   wave equation and the discrete Dirichlet-to-Neumann operator;
//! * [`probes`] — geometric-optics (WKB) boundary data: phase, amplitude,
//!   attenuation, and the remainder scaling study;
//! * [`recover`] — boundary pairings against DtN differences, Poisson
//!   mollification to pointwise ray-transform values, coefficient
//!   recovery and the Hölder consistency fit;
//! * [`config`] / [`cli`] — batch orchestration, key-value configs and
//!   CSV artifacts.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod geodesics;
pub mod manifold;
pub mod probes;
pub mod recover;
pub mod wavesim;
pub mod xray;

pub use error::{Error, Result};
