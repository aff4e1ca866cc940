//! Internal unit system used by the propagator.
//!
//! Lengths are measured in `L0`, masses in `m0`; with ħ = 1 this fixes the
//! time unit `T0 = m0 L0² / ħ` and the energy unit `E0 = ħ² / (m0 L0²)`.

use crate::consts::{HBAR, LI6_MASS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    length: f64,
    mass: f64,
}

impl UnitSystem {
    pub fn new(length: f64, mass: f64) -> Self {
        assert!(length > 0.0 && mass > 0.0, "unit scales must be positive");
        Self { length, mass }
    }

    /// 1 µm and the ⁶Li mass.
    pub fn lithium_micron() -> Self {
        Self::new(1e-6, LI6_MASS)
    }

    pub fn length_unit(&self) -> f64 {
        self.length
    }

    pub fn mass_unit(&self) -> f64 {
        self.mass
    }

    pub fn time_unit(&self) -> f64 {
        self.mass * self.length * self.length / HBAR
    }

    pub fn energy_unit(&self) -> f64 {
        HBAR * HBAR / (self.mass * self.length * self.length)
    }

    pub fn length_to_internal(&self, metres: f64) -> f64 {
        metres / self.length
    }
    pub fn length_to_si(&self, l: f64) -> f64 {
        l * self.length
    }
    pub fn time_to_internal(&self, seconds: f64) -> f64 {
        seconds / self.time_unit()
    }
    pub fn time_to_si(&self, t: f64) -> f64 {
        t * self.time_unit()
    }
    pub fn energy_to_internal(&self, joules: f64) -> f64 {
        joules / self.energy_unit()
    }
    pub fn energy_to_si(&self, e: f64) -> f64 {
        e * self.energy_unit()
    }
    pub fn mass_to_internal(&self, kg: f64) -> f64 {
        kg / self.mass
    }
    /// Wavenumbers (rad/m) to internal inverse lengths.
    pub fn wavenumber_to_internal(&self, k: f64) -> f64 {
        k * self.length
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::lithium_micron()
    }
}
