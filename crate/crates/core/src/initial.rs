//! Initial state: transverse guide ground state times a longitudinal Gaussian.

use num_complex::Complex64;

use crate::chipgeom::WireId;
use crate::consts::HBAR;
use crate::magfield::{transverse_spectrum, PotentialGrid};
use crate::observables::GuidePartition;
use crate::propagator::{ground_state_imaginary, ImaginaryTimeOptions};
use crate::qgrid::{SimGrid, Wavefunction};
use crate::{Error, Result};

/// Slices in the replicated grid used for the transverse problem.
const SLICE_COPIES: usize = 8;

/// Transverse ground state of one guide on the `(x, y)` plane.
#[derive(Debug, Clone)]
pub struct TransverseGroundState {
    /// `φ(x, y)`, `y` fastest, normalised so that `Σ |φ|² dx dy = 1`.
    pub profile: Vec<Complex64>,
    /// Energy (J).
    pub energy: f64,
    /// RMS widths of `|φ|²` along x and y (m).
    pub rms: [f64; 2],
    pub iterations: usize,
}

/// Imaginary-time ground state of `guide` on slice `z_index`.
///
/// Outside the guide's region of `partition` the potential is raised so far that
/// every imaginary-time step sets the state there to exactly zero, which acts as
/// a hard wall. The slice is replicated along a short periodic z axis, which
/// leaves the 2D problem exact.
pub fn transverse_ground_state(
    potential: &PotentialGrid,
    partition: &GuidePartition,
    z_index: usize,
    guide: WireId,
    opts: &ImaginaryTimeOptions,
) -> Result<TransverseGroundState> {
    let g = &potential.grid;
    let [nx, ny, nz] = g.counts();
    if z_index >= nz {
        return Err(Error::param("z_index", format!("{z_index} outside a grid of {nz} slices")));
    }
    let minimum = potential.minima[z_index]
        .guide(guide)
        .copied()
        .ok_or(Error::MinimumAbsent { z_index, guide: guide.name() })?;

    let slice = potential.slice(z_index);
    let floor = slice.iter().copied().fold(f64::INFINITY, f64::min);
    // exp(−V τ / 2ħ) underflows to zero
    let wall = floor + 4e3 * HBAR / opts.tau;
    let masked: Vec<f64> = (0..nx)
        .flat_map(|ix| {
            let inside = partition.region(z_index, g.coord(0, ix)) == guide;
            slice[ix * ny..(ix + 1) * ny].iter().map(move |&v| if inside { v } else { wall })
        })
        .collect();

    let dz = g.spacing()[2];
    let sub = SimGrid::new(
        [nx, ny, SLICE_COPIES],
        [g.extents()[0], g.extents()[1], dz * SLICE_COPIES as f64],
        [g.origin()[0], g.origin()[1], 0.0],
    )?;
    let values: Vec<f64> = masked.iter().flat_map(|&v| std::iter::repeat(v).take(SLICE_COPIES)).collect();

    let [dx, dy, _] = g.spacing();
    let widths = match transverse_spectrum(potential, z_index, guide) {
        Ok(s) => [s.omega_x, s.omega_y].map(|w| (HBAR / (2.0 * potential.mass * w)).sqrt()),
        Err(_) => [2.0 * dx, 2.0 * dy],
    };
    let widths = [widths[0].max(dx), widths[1].max(dy)];
    let seed = Wavefunction::from_fn(sub.clone(), |x, y, _| {
        let u = (x - minimum.x) / widths[0];
        let v = (y - minimum.y) / widths[1];
        Complex64::new((-(u * u + v * v) / 4.0).exp(), 0.0)
    });
    let gs = ground_state_imaginary(&sub, &values, potential.mass, seed, opts)?;

    let amps = gs.psi.amplitudes();
    let mut profile: Vec<Complex64> = (0..nx * ny).map(|i| amps[i * SLICE_COPIES]).collect();
    let norm: f64 = profile.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx * dy;
    let s = 1.0 / norm.sqrt();
    profile.iter_mut().for_each(|a| *a *= s);

    let moment = |axis: usize, power: i32, center: f64| -> f64 {
        (0..nx * ny)
            .map(|i| {
                let c = if axis == 0 { g.coord(0, i / ny) } else { g.coord(1, i % ny) };
                (c - center).powi(power) * profile[i].norm_sqr()
            })
            .sum::<f64>()
            * dx
            * dy
    };
    let rms = [0, 1].map(|a| {
        let mean = moment(a, 1, 0.0);
        moment(a, 2, mean).sqrt()
    });
    Ok(TransverseGroundState { profile, energy: gs.energy, rms, iterations: gs.iterations })
}

/// `√(ħ / 2mω)`: rms width of the harmonic-oscillator ground-state density.
pub fn coherent_length(mass: f64, omega: f64) -> f64 {
    (HBAR / (2.0 * mass * omega)).sqrt()
}

/// Real Gaussian envelope along z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub center: f64,
    /// RMS width of `|g|²` (m).
    pub sigma: f64,
}

/// Margin, in widths, kept between the envelope centre and the ends of the z axis.
pub const ENVELOPE_MARGIN: f64 = 6.0;

/// `ψ(x, y, z) = φ(x, y) g(z)`, normalised on `grid`.
pub fn initial_state(grid: &SimGrid, profile: &[Complex64], envelope: Envelope) -> Result<Wavefunction> {
    let [nx, ny, nz] = grid.counts();
    if profile.len() != nx * ny {
        return Err(Error::GridMismatch(format!("profile has {} points, plane has {}", profile.len(), nx * ny)));
    }
    if !(envelope.sigma > 0.0) {
        return Err(Error::param("sigma_z", "must be positive"));
    }
    let z_lo = grid.coord(2, 0);
    let z_hi = grid.coord(2, nz - 1);
    let margin = ((envelope.center - z_lo).min(z_hi - envelope.center)) / envelope.sigma;
    if margin < ENVELOPE_MARGIN {
        return Err(Error::PacketTooCloseToBoundary { axis: 'z', margin_sigmas: margin });
    }
    let gz: Vec<f64> = (0..nz)
        .map(|iz| {
            let d = grid.coord(2, iz) - envelope.center;
            (-d * d / (4.0 * envelope.sigma * envelope.sigma)).exp()
        })
        .collect();
    let mut amps = Vec::with_capacity(grid.len());
    for p in profile {
        amps.extend(gz.iter().map(|&g| p * g));
    }
    let mut psi = Wavefunction::from_amplitudes(grid.clone(), amps, 0.0)?;
    psi.normalize();
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::LI6_MASS;
    use crate::observables::populations;

    fn double_well(g: &SimGrid, omega: f64) -> PotentialGrid {
        let centres = [-3e-6, 0.0, 3e-6];
        let k = 0.5 * LI6_MASS * omega * omega;
        let values = (0..g.len())
            .map(|i| {
                let [ix, iy, _] = g.unravel(i);
                let (x, y) = (g.coord(0, ix), g.coord(1, iy) - 2e-6);
                let dx = centres.iter().map(|c| (x - c).abs()).fold(f64::INFINITY, f64::min);
                k * (dx * dx + y * y)
            })
            .collect();
        PotentialGrid::from_values(g.clone(), values, LI6_MASS, vec![centres; g.counts()[2]]).unwrap()
    }

    #[test]
    fn masked_ground_state_stays_in_its_guide() {
        let omega = 2.0 * std::f64::consts::PI * 5e3;
        let g = SimGrid::new([64, 32, 16], [12e-6, 4e-6, 16e-6], [-6e-6, 0.0625e-6, 0.0]).unwrap();
        let pot = double_well(&g, omega);
        let part = crate::observables::build_partition(&pot);
        let opts = ImaginaryTimeOptions { tau: 2e-7, check_every: 20, tol: 1e-9, ..Default::default() };
        let gs = transverse_ground_state(&pot, &part, 3, WireId::Left, &opts).unwrap();
        let expected = HBAR * omega;
        assert!((gs.energy - expected).abs() / expected < 2e-2, "{} vs {expected}", gs.energy);
        let sigma = coherent_length(LI6_MASS, omega);
        assert!((gs.rms[1] - sigma).abs() / sigma < 0.05, "{:?} vs {sigma}", gs.rms);

        let psi = initial_state(&g, &gs.profile, Envelope { center: 8e-6, sigma: 1e-6 }).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let p = populations(&psi, &part).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] == 0.0 && p[2] == 0.0, "{p:?}");
        assert!((psi.mean_position(2) - 8e-6).abs() < 1e-9);
        assert!((psi.rms_width(2) - 1e-6).abs() < 1e-9);
    }

    #[test]
    fn envelope_must_fit() {
        let g = SimGrid::new([8, 8, 64], [1e-6, 1e-6, 64e-6], [0.0; 3]).unwrap();
        let profile = vec![Complex64::new(1.0, 0.0); 64];
        assert!(matches!(
            initial_state(&g, &profile, Envelope { center: 5e-6, sigma: 1e-6 }),
            Err(Error::PacketTooCloseToBoundary { axis: 'z', .. })
        ));
        assert!(initial_state(&g, &profile, Envelope { center: 32e-6, sigma: 1e-6 }).is_ok());
        assert!(initial_state(&g, &profile[..10], Envelope { center: 32e-6, sigma: 1e-6 }).is_err());
    }

    #[test]
    fn coherent_length_value() {
        // ⁶Li at 20 Hz
        let l = coherent_length(LI6_MASS, 2.0 * std::f64::consts::PI * 20.0);
        assert!((l - 6.49e-6).abs() < 0.01e-6, "{l}");
    }
}
