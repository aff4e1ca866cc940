//! Physical constants (CODATA 2018, SI).

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permeability (N/A²).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Atomic mass constant (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of a ⁶Li atom (kg).
pub const LI6_MASS: f64 = 6.015_122_887_4 * AMU;
