//! Waveguide populations, density maps and the boundary-density monitor.

use std::io::Write;

use crate::chipgeom::WireId;
use crate::magfield::PotentialGrid;
use crate::propagator::Observer;
use crate::qgrid::Wavefunction;
use crate::qwf::{self, QwfHeader};
use crate::reduce;
use crate::{Error, Result};

/// Per-slice x-boundaries `x_b1 < x_b2` splitting the L, M and R regions.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidePartition {
    pub boundaries: Vec<[f64; 2]>,
    /// True where the wire-midpoint fallback was used.
    pub fallback: Vec<bool>,
}

impl GuidePartition {
    /// The same boundaries on every one of `nz` slices.
    pub fn uniform(nz: usize, b1: f64, b2: f64) -> Self {
        Self { boundaries: vec![[b1, b2]; nz], fallback: vec![false; nz] }
    }

    /// Region of the point `x` on slice `iz`.
    pub fn region(&self, iz: usize, x: f64) -> WireId {
        let [b1, b2] = self.boundaries[iz];
        if x < b1 {
            WireId::Left
        } else if x < b2 {
            WireId::Middle
        } else {
            WireId::Right
        }
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Boundaries at the saddle ridges between adjacent guide minima.
///
/// For each slice the potential is minimised over `y` column by column and the
/// ridge is the highest point of that profile between two neighbouring minima.
/// Slices without three separate minima use midpoints between the wires.
pub fn build_partition(potential: &PotentialGrid) -> GuidePartition {
    let g = &potential.grid;
    let [nx, ny, nz] = g.counts();
    let mut boundaries = Vec::with_capacity(nz);
    let mut fallback = Vec::with_capacity(nz);
    for iz in 0..nz {
        let minima = &potential.minima[iz];
        let ridge = match (minima.n_guides, &minima.guides) {
            (3, [Some(l), Some(m), Some(r)]) if l.ix < m.ix && m.ix < r.ix => {
                let profile: Vec<f64> = (0..nx)
                    .map(|ix| (0..ny).map(|iy| potential.values[g.index(ix, iy, iz)]).fold(f64::INFINITY, f64::min))
                    .collect();
                let argmax = |a: usize, b: usize| {
                    (a + 1..b).fold(a + 1, |best, i| if profile[i] > profile[best] { i } else { best })
                };
                let (i1, i2) = (argmax(l.ix, m.ix), argmax(m.ix, r.ix));
                // inside the open intervals between minima
                (i1 > l.ix && i1 < m.ix && i2 > m.ix && i2 < r.ix).then(|| [g.coord(0, i1), g.coord(0, i2)])
            }
            _ => None,
        };
        match ridge {
            Some(b) => {
                boundaries.push(b);
                fallback.push(false);
            }
            None => {
                let w = potential.wire_x[iz];
                boundaries.push([0.5 * (w[0] + w[1]), 0.5 * (w[1] + w[2])]);
                fallback.push(true);
            }
        }
    }
    GuidePartition { boundaries, fallback }
}

/// `(p_L, p_M, p_R)`: `|ψ|²` integrated over each region and the full `y`, `z` range.
pub fn populations(psi: &Wavefunction, partition: &GuidePartition) -> Result<[f64; 3]> {
    let g = psi.grid();
    if partition.boundaries.len() != g.counts()[2] {
        return Err(Error::GridMismatch("partition does not match the z grid".into()));
    }
    let amps = psi.amplitudes();
    let dv = g.cell_volume();
    let region_sum = |id: WireId| {
        reduce::sum_indexed(amps.len(), |i| {
            let [ix, _, iz] = g.unravel(i);
            if partition.region(iz, g.coord(0, ix)) == id {
                amps[i].norm_sqr()
            } else {
                0.0
            }
        }) * dv
    };
    Ok([region_sum(WireId::Left), region_sum(WireId::Middle), region_sum(WireId::Right)])
}

/// `∫ |ψ|² dy` on the `(x, z)` plane, `z` fastest.
pub fn density_xz(psi: &Wavefunction) -> Vec<f64> {
    use rayon::prelude::*;
    let g = psi.grid();
    let [nx, ny, nz] = g.counts();
    let dy = g.spacing()[1];
    let amps = psi.amplitudes();
    let mut out = vec![0.0; nx * nz];
    out.par_chunks_mut(nz).enumerate().for_each(|(ix, row)| {
        for iy in 0..ny {
            let base = g.index(ix, iy, 0);
            for (iz, r) in row.iter_mut().enumerate() {
                *r += amps[base + iz].norm_sqr();
            }
        }
        row.iter_mut().for_each(|r| *r *= dy);
    });
    out
}

/// Writes a density map as a real `QWF1` grid with `n_y = 1`.
pub fn write_density_xz<W: Write>(w: &mut W, psi: &Wavefunction, map: &[f64]) -> Result<()> {
    let g = psi.grid();
    let [nx, _, nz] = g.counts();
    let header = QwfHeader {
        counts: [nx as u64, 1, nz as u64],
        origin: g.origin(),
        spacing: g.spacing(),
        time: psi.time,
    };
    if map.len() != nx * nz {
        return Err(Error::GridMismatch("density map does not match the x-z grid".into()));
    }
    qwf::write_real(w, &header, map)
}

/// Probability within `margin_cells` of any face of the box.
pub fn edge_density(psi: &Wavefunction, margin_cells: usize) -> Result<f64> {
    edge_density_along(psi, margin_cells, [true; 3])
}

/// Like [`edge_density`], counting only the faces normal to the selected axes.
pub fn edge_density_along(psi: &Wavefunction, margin_cells: usize, axes: [bool; 3]) -> Result<f64> {
    if margin_cells == 0 {
        return Err(Error::param("margin_cells", "must be at least 1"));
    }
    let g = psi.grid();
    let counts = g.counts();
    let amps = psi.amplitudes();
    let near = |i: usize, n: usize| i < margin_cells || i + margin_cells >= n;
    Ok(reduce::sum_indexed(amps.len(), |i| {
        let idx = g.unravel(i);
        if (0..3).any(|a| axes[a] && near(idx[a], counts[a])) {
            amps[i].norm_sqr()
        } else {
            0.0
        }
    }) * g.cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRow {
    pub t: f64,
    pub p: [f64; 3],
    pub norm: f64,
    pub edge: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTrace {
    pub rows: Vec<PopulationRow>,
}

impl PopulationTrace {
    pub fn push(&mut self, row: PopulationRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&PopulationRow> {
        self.rows.last()
    }

    /// Largest population of `guide` over the trace.
    pub fn max_population(&self, guide: WireId) -> f64 {
        self.rows.iter().map(|r| r.p[guide.index()]).fold(0.0, f64::max)
    }

    /// CSV with header `t,p_l,p_m,p_r,norm,edge`; values use Rust's shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,p_l,p_m,p_r,norm,edge")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{},{}", r.t, r.p[0], r.p[1], r.p[2], r.norm, r.edge)?;
        }
        Ok(())
    }
}

/// Final population of the right guide.
pub fn transfer_fidelity(trace: &PopulationTrace) -> Result<f64> {
    trace.last().map(|r| r.p[2]).ok_or(Error::EmptyTrace)
}

/// Records populations and aborts the run when the edge density exceeds a threshold.
///
/// By default only the z faces are watched: the transverse box is sized to the
/// guides, while longitudinal wrap-around is what periodic boundaries would corrupt.
#[derive(Debug, Clone)]
pub struct PopulationObserver {
    pub partition: GuidePartition,
    pub stride: usize,
    pub margin_cells: usize,
    pub edge_threshold: f64,
    /// Axes whose faces the monitor watches.
    pub edge_axes: [bool; 3],
    pub trace: PopulationTrace,
}

impl PopulationObserver {
    pub fn new(partition: GuidePartition, stride: usize) -> Self {
        Self {
            partition,
            stride,
            margin_cells: 2,
            edge_threshold: 1e-6,
            edge_axes: [false, false, true],
            trace: PopulationTrace::default(),
        }
    }
}

impl Observer for PopulationObserver {
    fn stride(&self) -> usize {
        self.stride
    }

    fn observe(&mut self, step: usize, psi: &Wavefunction) -> Result<()> {
        let p = populations(psi, &self.partition)?;
        let edge = edge_density_along(psi, self.margin_cells, self.edge_axes)?;
        self.trace.push(PopulationRow { t: psi.time, p, norm: psi.norm(), edge });
        if edge > self.edge_threshold {
            return Err(Error::EdgeBreach { step, time: psi.time, edge, threshold: self.edge_threshold });
        }
        Ok(())
    }
}
