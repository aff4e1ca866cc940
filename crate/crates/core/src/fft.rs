//! Parallel three-dimensional FFT over the `(x, y, z)` layout with `z` fastest.
//!
//! Both directions are unnormalised; a forward/inverse round trip multiplies
//! the data by `n_x · n_y · n_z`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Lines gathered per strided batch.
const BATCH: usize = 32;

#[derive(Clone)]
struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AxisPlans {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn get(&self, dir: FftDirection) -> &Arc<dyn Fft<f64>> {
        match dir {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        }
    }
}

#[derive(Clone)]
pub struct Fft3 {
    dims: [usize; 3],
    plans: [AxisPlans; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

#[derive(Clone, Copy)]
struct SharedMut(*mut Complex64);
// SAFETY: used only to write disjoint index sets from different tasks.
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = dims.map(|n| AxisPlans::new(&mut planner, n));
        Self { dims, plans }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, FftDirection::Forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, FftDirection::Inverse);
    }

    fn transform(&self, data: &mut [Complex64], dir: FftDirection) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT dimensions");
        self.along_z(data, dir);
        self.along_y(data, dir);
        self.along_x(data, dir);
    }

    fn along_z(&self, data: &mut [Complex64], dir: FftDirection) {
        let nz = self.dims[2];
        if nz == 1 {
            return;
        }
        let fft = self.plans[2].get(dir);
        let rows = (16384 / nz).max(1);
        data.par_chunks_mut(nz * rows).for_each_init(
            || vec![Complex64::default(); fft.get_inplace_scratch_len()],
            |scratch, chunk| fft.process_with_scratch(chunk, scratch),
        );
    }

    fn along_y(&self, data: &mut [Complex64], dir: FftDirection) {
        let [_, ny, nz] = self.dims;
        if ny == 1 {
            return;
        }
        let fft = self.plans[1].get(dir);
        data.par_chunks_mut(ny * nz).for_each_init(
            || (vec![Complex64::default(); ny * BATCH], vec![Complex64::default(); fft.get_inplace_scratch_len()]),
            |(lines, scratch), slab| {
                for z0 in (0..nz).step_by(BATCH) {
                    let b = BATCH.min(nz - z0);
                    for iy in 0..ny {
                        let row = &slab[iy * nz + z0..iy * nz + z0 + b];
                        for (j, v) in row.iter().enumerate() {
                            lines[j * ny + iy] = *v;
                        }
                    }
                    fft.process_with_scratch(&mut lines[..b * ny], scratch);
                    for iy in 0..ny {
                        let row = &mut slab[iy * nz + z0..iy * nz + z0 + b];
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = lines[j * ny + iy];
                        }
                    }
                }
            },
        );
    }

    fn along_x(&self, data: &mut [Complex64], dir: FftDirection) {
        let [nx, ny, nz] = self.dims;
        if nx == 1 {
            return;
        }
        let fft = self.plans[0].get(dir);
        let plane = ny * nz;
        let ptr = SharedMut(data.as_mut_ptr());
        (0..plane.div_ceil(BATCH)).into_par_iter().for_each_init(
            || (vec![Complex64::default(); nx * BATCH], vec![Complex64::default(); fft.get_inplace_scratch_len()]),
            |(lines, scratch), blk| {
                let c0 = blk * BATCH;
                let b = BATCH.min(plane - c0);
                let base = ptr;
                // SAFETY: task `blk` touches only columns c0..c0+b of every x-plane;
                // column ranges of different tasks are disjoint and in bounds.
                unsafe {
                    for ix in 0..nx {
                        let src = base.0.add(ix * plane + c0);
                        for j in 0..b {
                            lines[j * nx + ix] = *src.add(j);
                        }
                    }
                }
                fft.process_with_scratch(&mut lines[..b * nx], scratch);
                unsafe {
                    for ix in 0..nx {
                        let dst = base.0.add(ix * plane + c0);
                        for j in 0..b {
                            *dst.add(j) = lines[j * nx + ix];
                        }
                    }
                }
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(data: &[Complex64], dims: [usize; 3]) -> Vec<Complex64> {
        let [nx, ny, nz] = dims;
        let mut out = vec![Complex64::default(); data.len()];
        let tau = -2.0 * std::f64::consts::PI;
        for kx in 0..nx {
            for ky in 0..ny {
                for kz in 0..nz {
                    let mut acc = Complex64::default();
                    for x in 0..nx {
                        for y in 0..ny {
                            for z in 0..nz {
                                let ph = tau
                                    * ((kx * x) as f64 / nx as f64
                                        + (ky * y) as f64 / ny as f64
                                        + (kz * z) as f64 / nz as f64);
                                acc += data[(x * ny + y) * nz + z] * Complex64::from_polar(1.0, ph);
                            }
                        }
                    }
                    out[(kx * ny + ky) * nz + kz] = acc;
                }
            }
        }
        out
    }

    fn sample(n: usize) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos() * 0.5)).collect()
    }

    #[test]
    fn matches_naive_dft() {
        let dims = [4, 8, 2];
        let data = sample(64);
        let mut fast = data.clone();
        Fft3::new(dims).forward(&mut fast);
        let slow = naive_dft(&data, dims);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn round_trip_scales_by_len() {
        let dims = [8, 4, 64];
        let data = sample(8 * 4 * 64);
        let mut buf = data.clone();
        let f = Fft3::new(dims);
        f.forward(&mut buf);
        f.inverse(&mut buf);
        let n = f.len() as f64;
        for (a, b) in buf.iter().zip(&data) {
            assert!((a / n - b).norm() < 1e-13);
        }
    }

    #[test]
    fn parallel_is_bitwise_identical() {
        let dims = [16, 8, 64];
        let data = sample(16 * 8 * 64);
        let f = Fft3::new(dims);
        let run = |threads| {
            let mut buf = data.clone();
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| f.forward(&mut buf));
            buf
        };
        assert_eq!(run(1), run(4));
    }
}
