//! Simulation grids and the wavefunction container.
//!
//! Amplitudes are stored in one flat buffer with `z` fastest:
//! `index = (i_x · n_y + i_y) · n_z + i_z`. Coordinates, spacings and
//! wavenumbers are SI; the wavefunction is normalised so that
//! `Σ |ψ|² dV = 1` with `dV` in m³.

use num_complex::Complex64;

use crate::fft::Fft3;
use crate::reduce;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    counts: [usize; 3],
    extents: [f64; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
    k: [Vec<f64>; 3],
}

/// Discrete FFT wavenumbers `2π/L · {0, 1, …, n/2 − 1, −n/2, …, −1}`.
pub fn fft_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as isize } else { i as isize - n as isize };
            m as f64 * dk
        })
        .collect()
}

impl SimGrid {
    /// Grid of `counts` points covering `[origin, origin + extents)` per axis.
    pub fn new(counts: [usize; 3], extents: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        for (axis, &n) in counts.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::param(
                    "counts",
                    format!("axis {axis}: point count must be a power of two >= 8, got {n}"),
                ));
            }
        }
        for &l in &extents {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::param("extents", format!("must be positive, got {l}")));
            }
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::param("origin", "must be finite"));
        }
        let spacing = [0, 1, 2].map(|a| extents[a] / counts[a] as f64);
        let k = [0, 1, 2].map(|a| fft_wavenumbers(counts[a], extents[a]));
        Ok(Self { counts, extents, origin, spacing, k })
    }

    /// Centred at the origin along every axis.
    pub fn centered(counts: [usize; 3], extents: [f64; 3]) -> Result<Self> {
        Self::new(counts, extents, extents.map(|l| -l / 2.0))
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }
    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// `π n / L` along `axis`.
    pub fn k_max(&self, axis: usize) -> f64 {
        std::f64::consts::PI * self.counts[axis] as f64 / self.extents[axis]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * i as f64
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis]).map(|i| self.coord(axis, i)).collect()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.counts[1] + iy) * self.counts[2] + iz
    }

    #[inline]
    pub fn unravel(&self, i: usize) -> [usize; 3] {
        let iz = i % self.counts[2];
        let r = i / self.counts[2];
        [r / self.counts[1], r % self.counts[1], iz]
    }

    /// Same point counts, extents and origin (to 1e-12 relative).
    pub fn same_as(&self, other: &SimGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30);
        self.counts == other.counts
            && (0..3).all(|a| close(self.extents[a], other.extents[a]) && close(self.origin[a], other.origin[a]))
    }

    pub fn check_same(&self, other: &SimGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.counts, self.extents, other.counts, other.extents
            )))
        }
    }
}

/// Complex amplitude field on a [`SimGrid`].
#[derive(Debug, Clone)]
pub struct Wavefunction {
    grid: SimGrid,
    amplitudes: Vec<Complex64>,
    pub time: f64,
    norm_cache: Option<f64>,
}

impl Wavefunction {
    pub fn zeros(grid: SimGrid) -> Self {
        let n = grid.len();
        Self { grid, amplitudes: vec![Complex64::default(); n], time: 0.0, norm_cache: None }
    }

    pub fn from_amplitudes(grid: SimGrid, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, amplitudes, time, norm_cache: None })
    }

    /// Samples `f(x, y, z)` on every grid point.
    pub fn from_fn<F>(grid: SimGrid, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Complex64 + Sync,
    {
        use rayon::prelude::*;
        let [_, ny, nz] = grid.counts();
        let mut amps = vec![Complex64::default(); grid.len()];
        amps.par_chunks_mut(ny * nz).enumerate().for_each(|(ix, slab)| {
            let x = grid.coord(0, ix);
            for iy in 0..ny {
                let y = grid.coord(1, iy);
                for iz in 0..nz {
                    slab[iy * nz + iz] = f(x, y, grid.coord(2, iz));
                }
            }
        });
        Self { grid, amplitudes: amps, time: 0.0, norm_cache: None }
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        self.norm_cache = None;
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// `Σ |ψ|² dV`.
    pub fn norm(&self) -> f64 {
        if let Some(n) = self.norm_cache {
            return n;
        }
        reduce::sum_map(&self.amplitudes, |a| a.norm_sqr()) * self.grid.cell_volume()
    }

    /// Caches the current norm; invalidated by [`Wavefunction::amplitudes_mut`].
    pub fn refresh_norm(&mut self) -> f64 {
        self.norm_cache = None;
        let n = self.norm();
        self.norm_cache = Some(n);
        n
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
        self.norm_cache = Some(1.0);
        n
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes_mut().iter_mut().for_each(|a| *a *= factor);
    }

    /// `⟨x_axis⟩` (m), for a normalised state.
    pub fn mean_position(&self, axis: usize) -> f64 {
        let g = &self.grid;
        reduce::sum_indexed(g.len(), |i| g.coord(axis, g.unravel(i)[axis]) * self.amplitudes[i].norm_sqr())
            * g.cell_volume()
            / self.norm()
    }

    /// Root-mean-square width of `|ψ|²` along `axis` (m).
    pub fn rms_width(&self, axis: usize) -> f64 {
        let g = &self.grid;
        let mean = self.mean_position(axis);
        let var = reduce::sum_indexed(g.len(), |i| {
            let d = g.coord(axis, g.unravel(i)[axis]) - mean;
            d * d * self.amplitudes[i].norm_sqr()
        }) * g.cell_volume()
            / self.norm();
        var.sqrt()
    }

    /// Momentum-space density `|ψ̃(k)|²`, normalised to sum to 1.
    pub fn momentum_density(&self, fft: &Fft3) -> Vec<f64> {
        let mut buf = self.amplitudes.clone();
        fft.forward(&mut buf);
        let total = reduce::sum_map(&buf, |a| a.norm_sqr());
        buf.iter().map(|a| a.norm_sqr() / total).collect()
    }

    /// `⟨k_axis⟩` (rad/m); `⟨p⟩ = ħ ⟨k⟩`.
    pub fn mean_wavenumber(&self, axis: usize) -> f64 {
        let fft = Fft3::new(self.grid.counts());
        let dens = self.momentum_density(&fft);
        let g = &self.grid;
        let k = g.wavenumbers(axis);
        reduce::sum_indexed(dens.len(), |i| k[g.unravel(i)[axis]] * dens[i])
    }
}

/// Product of 1D Gaussians `exp(−(x−c)²/4σ²) e^{i k₀ x}` per axis, normalised.
///
/// `widths` are rms widths of `|ψ|²`; `wavenumbers` are the mean wavenumbers k₀.
/// The centre must lie at least 6σ from both ends of every axis.
pub fn gaussian_packet(grid: &SimGrid, center: [f64; 3], widths: [f64; 3], wavenumbers: [f64; 3]) -> Result<Wavefunction> {
    for a in 0..3 {
        if !(widths[a] > 0.0) {
            return Err(Error::param("widths", "must be positive"));
        }
        let lo = grid.coord(a, 0);
        let hi = grid.coord(a, grid.counts()[a] - 1);
        let margin = (center[a] - lo).min(hi - center[a]) / widths[a];
        if margin < 6.0 {
            return Err(Error::PacketTooCloseToBoundary { axis: ['x', 'y', 'z'][a], margin_sigmas: margin });
        }
    }
    let factors: [Vec<Complex64>; 3] = [0, 1, 2].map(|a| {
        grid.coords(a)
            .iter()
            .map(|&x| {
                let d = x - center[a];
                Complex64::from_polar((-d * d / (4.0 * widths[a] * widths[a])).exp(), wavenumbers[a] * d)
            })
            .collect()
    });
    Ok(separable(grid, &factors))
}

/// `ψ(x, y, z) = f_x(x) f_y(y) f_z(z)`, normalised.
pub fn separable(grid: &SimGrid, factors: &[Vec<Complex64>; 3]) -> Wavefunction {
    let [nx, ny, _] = grid.counts();
    let mut amps = Vec::with_capacity(grid.len());
    for ix in 0..nx {
        for iy in 0..ny {
            let xy = factors[0][ix] * factors[1][iy];
            amps.extend(factors[2].iter().map(|fz| xy * fz));
        }
    }
    let mut psi = Wavefunction { grid: grid.clone(), amplitudes: amps, time: 0.0, norm_cache: None };
    psi.normalize();
    psi
}

/// `⟨a|b⟩ = Σ a* b dV`.
pub fn overlap(a: &Wavefunction, b: &Wavefunction) -> Result<Complex64> {
    a.grid.check_same(&b.grid)?;
    let dv = a.grid.cell_volume();
    let re = reduce::sum_indexed(a.amplitudes.len(), |i| (a.amplitudes[i].conj() * b.amplitudes[i]).re);
    let im = reduce::sum_indexed(a.amplitudes.len(), |i| (a.amplitudes[i].conj() * b.amplitudes[i]).im);
    Ok(Complex64::new(re, im) * dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_grid_fft_convention() {
        let g = SimGrid::new([8, 8, 8], [8.0, 8.0, 8.0], [0.0; 3]).unwrap();
        assert_eq!(g.spacing(), [1.0; 3]);
        let dk = 2.0 * std::f64::consts::PI / 8.0;
        let expect: Vec<f64> = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0].iter().map(|m| m * dk).collect();
        assert_eq!(g.wavenumbers(0), expect.as_slice());
        assert_abs_diff_eq!(g.k_max(0), 4.0 * dk, epsilon = 1e-15);
    }

    #[test]
    fn reference_k_max() {
        let g = SimGrid::new([256, 64, 1024], [20e-6, 4e-6, 1000e-6], [0.0; 3]).unwrap();
        let kz = g.k_max(2);
        assert!((kz - 3.216_990_877e6).abs() / kz < 1e-9, "{kz}");
        let g2 = SimGrid::new([256, 64, 2048], [20e-6, 4e-6, 1000e-6], [0.0; 3]).unwrap();
        assert_abs_diff_eq!(g2.k_max(2), 2.0 * kz, epsilon = 1e-6);
        assert_abs_diff_eq!(-g.wavenumbers(2)[512], kz, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(SimGrid::new([12, 8, 8], [1.0; 3], [0.0; 3]).is_err());
        assert!(SimGrid::new([4, 8, 8], [1.0; 3], [0.0; 3]).is_err());
        assert!(SimGrid::new([8, 8, 8], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn index_layout_z_fastest() {
        let g = SimGrid::new([8, 16, 32], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(g.index(0, 0, 1), 1);
        assert_eq!(g.index(0, 1, 0), 32);
        assert_eq!(g.index(1, 0, 0), 16 * 32);
        assert_eq!(g.unravel(g.index(3, 5, 7)), [3, 5, 7]);
    }

    fn grid() -> SimGrid {
        SimGrid::centered([32, 32, 64], [24.0, 24.0, 48.0]).unwrap()
    }

    #[test]
    fn centred_packet_is_real_positive_and_normalised() {
        let psi = gaussian_packet(&grid(), [0.0; 3], [1.5, 1.5, 2.0], [0.0; 3]).unwrap();
        assert!(psi.amplitudes().iter().all(|a| a.im == 0.0 && a.re > 0.0));
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn packet_moments() {
        let g = grid();
        let k0 = 2.0;
        let psi = gaussian_packet(&g, [0.5, -1.0, 3.0], [1.5, 1.5, 2.0], [0.0, 0.0, k0]).unwrap();
        assert!((psi.mean_position(0) - 0.5).abs() < 1e-6 * 0.5);
        assert!((psi.mean_position(1) + 1.0).abs() < 1e-6);
        assert!((psi.mean_position(2) - 3.0).abs() < 1e-6 * 3.0);
        assert!((psi.mean_wavenumber(2) - k0).abs() < 1e-6 * k0);
        assert!((psi.rms_width(2) - 2.0).abs() < 1e-6 * 2.0);
    }

    #[test]
    fn packet_near_boundary_rejected() {
        let r = gaussian_packet(&grid(), [8.0, 0.0, 0.0], [1.5, 1.5, 2.0], [0.0; 3]);
        assert!(matches!(r, Err(Error::PacketTooCloseToBoundary { axis: 'x', .. })));
    }

    #[test]
    fn overlap_properties() {
        let g = SimGrid::centered([16, 16, 256], [16.0, 16.0, 200.0]).unwrap();
        let a = gaussian_packet(&g, [0.0, 0.0, -40.0], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        assert_abs_diff_eq!(overlap(&a, &a).unwrap().re, 1.0, epsilon = 1e-12);
        let b = gaussian_packet(&g, [0.0, 0.0, 0.0], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        assert!(overlap(&a, &b).unwrap().norm() < 1e-10);
        let phi = 0.7;
        let mut c = a.clone();
        c.scale(Complex64::from_polar(1.0, phi));
        let o = overlap(&a, &c).unwrap();
        assert!((o - Complex64::from_polar(1.0, phi)).norm() < 1e-12);
        let other = Wavefunction::zeros(grid());
        assert!(matches!(overlap(&a, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn parseval() {
        let g = grid();
        let psi = gaussian_packet(&g, [1.0, 0.0, -2.0], [1.5, 1.5, 2.5], [0.3, 0.0, 1.0]).unwrap();
        let mut buf = psi.amplitudes().to_vec();
        let fft = Fft3::new(g.counts());
        fft.forward(&mut buf);
        let k_norm = reduce::sum_map(&buf, |a| a.norm_sqr()) / g.len() as f64 * g.cell_volume();
        assert!((k_norm - psi.norm()).abs() < 1e-10);
    }
}
