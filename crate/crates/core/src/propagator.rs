//! Split-operator propagation in real and imaginary time.
//!
//! One Strang step is `e^{−iV dt/2} e^{−iT dt} e^{−iV dt/2}` with the kinetic
//! factor applied in momentum space. Between observations the potential
//! half-steps of consecutive steps are merged into one full step, so a run of
//! `n` steps costs `2n` transforms. Phases are computed in the internal unit
//! system of [`UnitSystem::lithium_micron`]; the wavefunction itself stays SI.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::fft::Fft3;
use crate::magfield::PotentialGrid;
use crate::qgrid::{SimGrid, Wavefunction};
use crate::reduce;
use crate::units::UnitSystem;
use crate::{Error, Result};

/// Elements per parallel task in pointwise kernels.
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    Real,
    /// `dt → −iτ`; the state is renormalised after every step.
    Imaginary,
}

/// Precomputed propagation factors for one `(grid, potential, dt)` triple.
#[derive(Debug, Clone)]
pub struct StepPlan {
    grid: SimGrid,
    dt: f64,
    mode: TimeMode,
    half_potential: Vec<Complex64>,
    full_potential: Vec<Complex64>,
    /// Per-axis kinetic factors; the product over axes is the full factor.
    /// The x factor also carries the `1/N` of the inverse transform.
    kinetic: [Vec<Complex64>; 3],
    fft: Fft3,
}

impl StepPlan {
    /// `potential` is in joules on `grid`; `mass` in kg; `dt` (or `τ`) in seconds.
    pub fn new(grid: &SimGrid, potential: &[f64], mass: f64, dt: f64, mode: TimeMode) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "potential has {} values, grid has {} points",
                potential.len(),
                grid.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if !(mass > 0.0) {
            return Err(Error::param("mass", "must be positive"));
        }
        let floor = potential.iter().copied().fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(Error::param("potential", "must be finite and bounded below"));
        }
        let units = UnitSystem::lithium_micron();
        let tau = units.time_to_internal(dt);
        let m = units.mass_to_internal(mass);
        // exp(−i θ) in real time, exp(−θ) in imaginary time
        let factor = move |theta: f64| match mode {
            TimeMode::Real => Complex64::from_polar(1.0, -theta),
            TimeMode::Imaginary => Complex64::new((-theta).exp(), 0.0),
        };
        // energies are measured from the potential floor; this only shifts a global phase
        let (half_potential, full_potential): (Vec<_>, Vec<_>) = potential
            .par_iter()
            .map(|&v| {
                let e = units.energy_to_internal(v - floor);
                (factor(0.5 * e * tau), factor(e * tau))
            })
            .unzip();
        let inv_n = 1.0 / grid.len() as f64;
        let kinetic = [0, 1, 2].map(|axis| {
            grid.wavenumbers(axis)
                .iter()
                .map(|&k| {
                    let k = units.wavenumber_to_internal(k);
                    let f = factor(k * k / (2.0 * m) * tau);
                    if axis == 0 {
                        f * inv_n
                    } else {
                        f
                    }
                })
                .collect()
        });
        Ok(Self {
            grid: grid.clone(),
            dt,
            mode,
            half_potential,
            full_potential,
            kinetic,
            fft: Fft3::new(grid.counts()),
        })
    }

    pub fn from_potential(potential: &PotentialGrid, dt: f64, mode: TimeMode) -> Result<Self> {
        Self::new(&potential.grid, &potential.values, potential.mass, dt, mode)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> TimeMode {
        self.mode
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Pointwise factors as stored; used by tests and diagnostics.
    pub fn potential_factors(&self) -> (&[Complex64], &[Complex64]) {
        (&self.half_potential, &self.full_potential)
    }

    pub fn kinetic_factors(&self) -> &[Vec<Complex64>; 3] {
        &self.kinetic
    }

    fn multiply(psi: &mut [Complex64], factors: &[Complex64]) {
        psi.par_chunks_mut(CHUNK).zip(factors.par_chunks(CHUNK)).for_each(|(p, f)| {
            for (a, b) in p.iter_mut().zip(f) {
                *a *= b;
            }
        });
    }

    fn kinetic_step(&self, psi: &mut [Complex64]) {
        let [_, ny, nz] = self.grid.counts();
        let [kx, ky, kz] = &self.kinetic;
        self.fft.forward(psi);
        psi.par_chunks_mut(ny * nz).enumerate().for_each(|(ix, slab)| {
            for iy in 0..ny {
                let fxy = kx[ix] * ky[iy];
                let row = &mut slab[iy * nz..(iy + 1) * nz];
                for (a, fz) in row.iter_mut().zip(kz) {
                    *a *= fxy * fz;
                }
            }
        });
        self.fft.inverse(psi);
    }

    /// One full Strang step.
    pub fn step(&self, psi: &mut Wavefunction) -> Result<()> {
        self.advance(psi, 1)
    }

    /// `n` Strang steps with merged interior half-steps.
    ///
    /// In imaginary time every step is completed and renormalised separately.
    pub fn advance(&self, psi: &mut Wavefunction, n: usize) -> Result<()> {
        self.grid.check_same(psi.grid())?;
        if n == 0 {
            return Ok(());
        }
        let t0 = psi.time;
        match self.mode {
            TimeMode::Real => {
                let a = psi.amplitudes_mut();
                Self::multiply(a, &self.half_potential);
                for i in 0..n {
                    self.kinetic_step(a);
                    let f = if i + 1 == n { &self.half_potential } else { &self.full_potential };
                    Self::multiply(a, f);
                }
            }
            TimeMode::Imaginary => {
                for _ in 0..n {
                    let a = psi.amplitudes_mut();
                    Self::multiply(a, &self.half_potential);
                    self.kinetic_step(a);
                    Self::multiply(a, &self.half_potential);
                    psi.normalize();
                }
            }
        }
        psi.time = t0 + n as f64 * self.dt;
        Ok(())
    }
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` in joules for `H = −ħ²∇²/2m + V`.
pub fn energy(psi: &Wavefunction, potential: &[f64], mass: f64, fft: &Fft3) -> Result<f64> {
    let g = psi.grid();
    if potential.len() != g.len() {
        return Err(Error::GridMismatch("potential does not match the wavefunction grid".into()));
    }
    let amps = psi.amplitudes();
    let norm = reduce::sum_map(amps, |a| a.norm_sqr());
    let pot = reduce::sum_indexed(amps.len(), |i| potential[i] * amps[i].norm_sqr());
    let mut buf = amps.to_vec();
    fft.forward(&mut buf);
    let [kx, ky, kz] = [0, 1, 2].map(|a| g.wavenumbers(a));
    let hbar2m = crate::consts::HBAR * crate::consts::HBAR / (2.0 * mass);
    let kin = reduce::sum_indexed(buf.len(), |i| {
        let [ix, iy, iz] = g.unravel(i);
        let k2 = kx[ix] * kx[ix] + ky[iy] * ky[iy] + kz[iz] * kz[iz];
        hbar2m * k2 * buf[i].norm_sqr()
    }) / g.len() as f64;
    Ok((pot + kin) / norm)
}

/// Callback invoked between steps of [`evolve_real`].
pub trait Observer {
    /// Observation period in steps; 0 means only the first and last step.
    fn stride(&self) -> usize;
    fn observe(&mut self, step: usize, psi: &Wavefunction) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveReport {
    pub steps: usize,
    pub wall_seconds: f64,
    pub steps_per_sec: f64,
}

/// Runs `n_steps` real-time steps, calling each observer at step 0, at every
/// multiple of its stride and at the final step.
///
/// An observer error aborts the run and is returned unchanged.
pub fn evolve_real(
    mut psi: Wavefunction,
    plan: &StepPlan,
    n_steps: usize,
    observers: &mut [&mut dyn Observer],
) -> Result<(Wavefunction, EvolveReport)> {
    if plan.mode() != TimeMode::Real {
        return Err(Error::param("plan", "evolve_real needs a real-time plan"));
    }
    plan.grid().check_same(psi.grid())?;
    if n_steps == 0 {
        return Ok((psi, EvolveReport { steps: 0, wall_seconds: 0.0, steps_per_sec: 0.0 }));
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    let due = |o: &dyn Observer, step: usize| step == 0 || step == n_steps || (o.stride() > 0 && step % o.stride() == 0);
    let next_stop = |observers: &[&mut dyn Observer], from: usize| {
        observers
            .iter()
            .filter(|o| o.stride() > 0)
            .map(|o| (from / o.stride() + 1) * o.stride())
            .fold(n_steps, usize::min)
    };

    let t0 = psi.time;
    let started = Instant::now();
    for o in observers.iter_mut() {
        o.observe(0, &psi)?;
    }
    let mut step = 0;
    while step < n_steps {
        let stop = next_stop(observers, step);
        plan.advance(&mut psi, stop - step)?;
        step = stop;
        psi.time = t0 + step as f64 * plan.dt();
        for o in observers.iter_mut() {
            if due(&**o, step) {
                o.observe(step, &psi)?;
            }
        }
    }
    let wall_seconds = started.elapsed().as_secs_f64();
    Ok((psi, EvolveReport { steps: n_steps, wall_seconds, steps_per_sec: n_steps as f64 / wall_seconds.max(1e-12) }))
}

/// Writes `step, time, norm, steps/sec` to standard error.
#[derive(Debug)]
pub struct ProgressReporter {
    stride: usize,
    started: Instant,
}

impl ProgressReporter {
    pub fn new(stride: usize) -> Self {
        Self { stride, started: Instant::now() }
    }
}

impl Observer for ProgressReporter {
    fn stride(&self) -> usize {
        self.stride
    }

    fn observe(&mut self, step: usize, psi: &Wavefunction) -> Result<()> {
        if step == 0 {
            self.started = Instant::now();
        }
        let rate = step as f64 / self.started.elapsed().as_secs_f64().max(1e-12);
        eprintln!("step {step} t = {:.6e} s norm = {:.12} {:.1} steps/s", psi.time, psi.norm(), rate);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImaginaryTimeOptions {
    /// Imaginary time step τ (s).
    pub tau: f64,
    /// Steps between energy evaluations.
    pub check_every: usize,
    /// Relative energy change that counts as converged.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for ImaginaryTimeOptions {
    fn default() -> Self {
        Self { tau: 1e-7, check_every: 100, tol: 1e-10, max_iterations: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub psi: Wavefunction,
    /// Final energy estimate (J).
    pub energy: f64,
    /// Energy at every check, first to last.
    pub energies: Vec<f64>,
    pub iterations: usize,
}

/// Relaxes `seed` towards the lowest state it overlaps with.
///
/// Parity is conserved by the split-operator map, so a seed orthogonal to the
/// ground state converges to an excited state instead.
pub fn ground_state_imaginary(
    grid: &SimGrid,
    potential: &[f64],
    mass: f64,
    seed: Wavefunction,
    opts: &ImaginaryTimeOptions,
) -> Result<GroundState> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if opts.check_every == 0 {
        return Err(Error::param("check_every", "must be at least 1"));
    }
    grid.check_same(seed.grid())?;
    let plan = StepPlan::new(grid, potential, mass, opts.tau, TimeMode::Imaginary)?;
    let mut psi = seed;
    if !(psi.norm() > 0.0) {
        return Err(Error::param("seed", "must not vanish"));
    }
    psi.normalize();
    psi.time = 0.0;
    let mut energies = vec![energy(&psi, potential, mass, plan.fft())?];
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    while iterations < opts.max_iterations {
        let n = opts.check_every.min(opts.max_iterations - iterations);
        plan.advance(&mut psi, n)?;
        iterations += n;
        let e = energy(&psi, potential, mass, plan.fft())?;
        let prev = *energies.last().unwrap();
        energies.push(e);
        last_change = ((e - prev) / e).abs();
        if last_change < opts.tol {
            return Ok(GroundState { psi, energy: e, energies, iterations });
        }
    }
    Err(Error::NotConverged { iterations, last_change })
}
