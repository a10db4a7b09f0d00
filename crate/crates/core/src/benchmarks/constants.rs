//! Frozen constants of the `arrhenius-2d` benchmark.
//!
//! QoI: `f(A, E) = T_B + C1 * ln(1 + A * exp(-E / (R * T_A)))` on the box
//! `[A_LOWER, A_UPPER] x [E_LOWER, E_UPPER]`, failure when `f > THRESHOLD`.
//!
//! `C1` places the QoI maximum (corner `A_UPPER`, `E_LOWER`) just below 2500;
//! over the whole box `f` spans roughly [2352.4, 2494.9]. `THRESHOLD` was then
//! tuned so the midpoint-grid oracle lands near 5.9e-4.

pub const A_LOWER: f64 = 5.5e11;
pub const A_UPPER: f64 = 1.5e13;
pub const E_LOWER: f64 = 1.5e3;
pub const E_UPPER: f64 = 9.5e3;

/// Universal gas constant, J / (mol K).
pub const GAS_CONSTANT: f64 = 8.314_472;
pub const T_A: f64 = 950.0;
pub const T_B: f64 = 1500.0;
pub const C1: f64 = 33.0;
pub const THRESHOLD: f64 = 2493.8;

/// Relative perturbation of `E` in the second surrogate.
pub const E_PERTURBATION: f64 = 0.05;

/// Oracle failure probability from the midpoint grid at 4001 points per axis.
pub const ORACLE_P_4001: f64 = 5.861_443_911_703_904e-4;
/// Same oracle at 2001 points per axis.
pub const ORACLE_P_2001: f64 = 5.869_129_403_314_335e-4;
