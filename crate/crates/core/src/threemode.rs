//! Exact three-level tunnelling model.
//!
//! Three localised modes `|L⟩, |M⟩, |R⟩` are coupled by nearest-neighbour
//! tunnelling rates `J_LM(t)` and `J_MR(t)` (angular frequencies, ħ = 1):
//!
//! ```text
//!        ⎛  0     −J_LM    0   ⎞
//!   H =  ⎜ −J_LM   0     −J_MR ⎟
//!        ⎝  0     −J_MR    0   ⎠
//! ```
//!
//! The zero-energy eigenvector `cos θ |L⟩ − sin θ |R⟩` with `tan θ = J_LM / J_MR`
//! never populates `|M⟩`; switching `J_MR` on before `J_LM` rotates it from
//! `|L⟩` to `−|R⟩`.

use num_complex::Complex64;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Instantaneous three-mode Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeModeHamiltonian {
    j_lm: f64,
    j_mr: f64,
}

impl ThreeModeHamiltonian {
    pub fn new(j_lm: f64, j_mr: f64) -> Result<Self> {
        for (name, v) in [("j_lm", j_lm), ("j_mr", j_mr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("tunnelling rate must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { j_lm, j_mr })
    }

    pub fn j_lm(&self) -> f64 {
        self.j_lm
    }

    pub fn j_mr(&self) -> f64 {
        self.j_mr
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (a, b) = (self.j_lm, self.j_mr);
        [[0.0, -a, 0.0], [-a, 0.0, -b], [0.0, -b, 0.0]]
    }

    pub fn apply(&self, v: &[Complex64; 3]) -> [Complex64; 3] {
        let (a, b) = (self.j_lm, self.j_mr);
        [-a * v[1], -a * v[0] - b * v[2], -b * v[1]]
    }

    /// Magnitude of the non-zero eigenvalues, `√(J_LM² + J_MR²)`.
    pub fn gap(&self) -> f64 {
        self.j_lm.hypot(self.j_mr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeModeState {
    pub amplitudes: [Complex64; 3],
}

impl ThreeModeState {
    pub fn new(amplitudes: [Complex64; 3]) -> Self {
        Self { amplitudes }
    }

    pub fn left() -> Self {
        Self::new([ONE, ZERO, ZERO])
    }

    pub fn middle() -> Self {
        Self::new([ZERO, ONE, ZERO])
    }

    pub fn right() -> Self {
        Self::new([ZERO, ZERO, ONE])
    }

    pub fn populations(&self) -> [f64; 3] {
        self.amplitudes.map(|a| a.norm_sqr())
    }

    pub fn norm(&self) -> f64 {
        self.populations().iter().sum()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }
}

/// Mixing angle θ with `tan θ = J_LM / J_MR`, in `[0, π/2]`.
pub fn mixing_angle(j_lm: f64, j_mr: f64) -> Result<f64> {
    if j_lm == 0.0 && j_mr == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    Ok(j_lm.atan2(j_mr))
}

/// The zero-energy dark state `cos θ |L⟩ − sin θ |R⟩`.
pub fn dark_state(j_lm: f64, j_mr: f64) -> Result<ThreeModeState> {
    let theta = mixing_angle(j_lm, j_mr)?;
    Ok(ThreeModeState::new([
        Complex64::new(theta.cos(), 0.0),
        ZERO,
        Complex64::new(-theta.sin(), 0.0),
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: [f64; 3],
}

/// Closed-form eigen-decomposition, eigenvalues ascending: `{−E, 0, +E}`.
pub fn eigensystem(h: &ThreeModeHamiltonian) -> [Eigenpair; 3] {
    let (a, b) = (h.j_lm, h.j_mr);
    let e = h.gap();
    if e == 0.0 {
        return [
            Eigenpair { value: 0.0, vector: [1.0, 0.0, 0.0] },
            Eigenpair { value: 0.0, vector: [0.0, 1.0, 0.0] },
            Eigenpair { value: 0.0, vector: [0.0, 0.0, 1.0] },
        ];
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // For λ = ±E: v ∝ (−a/λ, 1, −b/λ), whose squared norm is 2.
    let bright = |lambda: f64| [-a / lambda * s, s, -b / lambda * s];
    [
        Eigenpair { value: -e, vector: bright(-e) },
        Eigenpair { value: 0.0, vector: [b / e, 0.0, -a / e] },
        Eigenpair { value: e, vector: bright(e) },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseShape {
    /// Gaussian of standard deviation `width`, with the linear pedestal through
    /// its values at `t = 0` and `t = total_time` removed so that the pulse
    /// vanishes exactly at both ends.
    Gaussian,
    /// `cos²(π (t − c) / 2w)` on `|t − c| ≤ w`, zero outside.
    SinSquared,
}

/// Time-dependent couplings `J_LM(t)`, `J_MR(t)` sharing one shape and peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePair {
    pub shape: PulseShape,
    pub peak: f64,
    pub width: f64,
    pub center_lm: f64,
    pub center_mr: f64,
    pub total_time: f64,
}

impl PulsePair {
    /// Default Gaussian pair: width `T/4`, centres `T/2 ± 0.7·width`.
    pub fn counter_intuitive(peak: f64, total_time: f64) -> Self {
        let width = total_time / 4.0;
        let half_sep = 0.7 * width;
        Self {
            shape: PulseShape::Gaussian,
            peak,
            width,
            center_lm: total_time / 2.0 + half_sep,
            center_mr: total_time / 2.0 - half_sep,
            total_time,
        }
    }

    /// Same as [`PulsePair::counter_intuitive`] with the centres swapped.
    pub fn intuitive(peak: f64, total_time: f64) -> Self {
        Self::counter_intuitive(peak, total_time).swapped()
    }

    pub fn swapped(self) -> Self {
        Self { center_lm: self.center_mr, center_mr: self.center_lm, ..self }
    }

    pub fn with_peak(self, peak: f64) -> Self {
        Self { peak, ..self }
    }

    /// `J_MR` peaks before `J_LM`.
    pub fn is_counter_intuitive(&self) -> bool {
        self.center_mr < self.center_lm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::param("total_time", "must be positive"));
        }
        if !(self.width > 0.0) {
            return Err(Error::param("width", "must be positive"));
        }
        if !(self.peak >= 0.0 && self.peak.is_finite()) {
            return Err(Error::param("peak", "must be finite and >= 0"));
        }
        for c in [self.center_lm, self.center_mr] {
            if !(0.0..=self.total_time).contains(&c) {
                return Err(Error::param("center", format!("pulse centre {c} outside [0, total_time]")));
            }
        }
        Ok(())
    }

    fn envelope(&self, t: f64, center: f64) -> f64 {
        if !(0.0..=self.total_time).contains(&t) {
            return 0.0;
        }
        match self.shape {
            PulseShape::Gaussian => {
                let g = |s: f64| (-(s - center).powi(2) / (2.0 * self.width * self.width)).exp();
                let (g0, g1) = (g(0.0), g(self.total_time));
                let pedestal = |s: f64| g0 + (g1 - g0) * s / self.total_time;
                let scale = 1.0 - pedestal(center);
                ((g(t) - pedestal(t)) / scale).max(0.0)
            }
            PulseShape::SinSquared => {
                let u = (t - center) / self.width;
                if u.abs() <= 1.0 {
                    (std::f64::consts::FRAC_PI_2 * u).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }

    /// `(J_LM(t), J_MR(t))`.
    pub fn rates(&self, t: f64) -> (f64, f64) {
        (self.peak * self.envelope(t, self.center_lm), self.peak * self.envelope(t, self.center_mr))
    }

    pub fn hamiltonian(&self, t: f64) -> ThreeModeHamiltonian {
        let (a, b) = self.rates(t);
        ThreeModeHamiltonian { j_lm: a, j_mr: b }
    }
}

#[derive(Debug, Clone)]
pub struct ThreeModeTrace {
    pub times: Vec<f64>,
    pub states: Vec<ThreeModeState>,
    /// Set when `|dt| · peak > 0.05`, i.e. the step does not resolve the pulses.
    pub coarse_step: bool,
}

impl ThreeModeTrace {
    pub fn last(&self) -> &ThreeModeState {
        self.states.last().expect("trace always holds the initial state")
    }

    pub fn max_population(&self, mode: usize) -> f64 {
        self.states.iter().map(|s| s.populations()[mode]).fold(0.0, f64::max)
    }
}

/// Maximum `|dt| · peak` for which the step is considered to resolve the pulses.
pub const MAX_STEP_PHASE: f64 = 0.05;

/// Largest |h|·peak used inside a reported step; coarser steps are subdivided.
const INNER_STEP_PHASE: f64 = 0.02;

/// Integrates `i dψ/dt = H(t) ψ` with classical fixed-step RK4.
///
/// A positive `dt` runs from `0` to `total_time`; a negative one runs backwards
/// from `total_time` to `0`. The step magnitude is shrunk so that it divides
/// `total_time` exactly.
pub fn evolve(pulses: &PulsePair, initial: &ThreeModeState, dt: f64) -> Result<ThreeModeTrace> {
    pulses.validate()?;
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::param("dt", "must be finite and non-zero"));
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    let coarse_step = dt.abs() * pulses.peak > MAX_STEP_PHASE;
    if coarse_step {
        log::warn!("three-mode step |dt|·peak = {:.3} exceeds {MAX_STEP_PHASE}", dt.abs() * pulses.peak);
    }

    let n = ((pulses.total_time / dt.abs()) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = pulses.total_time / n as f64 * dt.signum();
    let sub = ((h.abs() * pulses.peak / INNER_STEP_PHASE).ceil() as usize).max(1);
    let hs = h / sub as f64;
    let t0 = if dt > 0.0 { 0.0 } else { pulses.total_time };

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut y = initial.amplitudes;
    times.push(t0);
    states.push(*initial);

    // dy/dt = −i H(t) y
    let rhs = |t: f64, y: &[Complex64; 3]| -> [Complex64; 3] {
        pulses.hamiltonian(t).apply(y).map(|v| Complex64::new(v.im, -v.re))
    };
    let axpy = |y: &[Complex64; 3], k: &[Complex64; 3], s: f64| -> [Complex64; 3] {
        [y[0] + k[0] * s, y[1] + k[1] * s, y[2] + k[2] * s]
    };

    for i in 0..n {
        let t = t0 + h * i as f64;
        for k in 0..sub {
            let t = t + hs * k as f64;
            let k1 = rhs(t, &y);
            let k2 = rhs(t + 0.5 * hs, &axpy(&y, &k1, 0.5 * hs));
            let k3 = rhs(t + 0.5 * hs, &axpy(&y, &k2, 0.5 * hs));
            let k4 = rhs(t + hs, &axpy(&y, &k3, hs));
            for j in 0..3 {
                y[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (hs / 6.0);
            }
        }
        times.push(if i + 1 == n { t0 + h * n as f64 } else { t + h });
        states.push(ThreeModeState::new(y));
    }

    Ok(ThreeModeTrace { times, states, coarse_step })
}
