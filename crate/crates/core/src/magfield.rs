//! Wire fields, trapping potential and per-slice guide minima.

use std::io::Write;

use rayon::prelude::*;

use crate::chipgeom::{ChipLayout, LayoutParams, Segment, WireId};
use crate::consts::{HBAR, MU0};
use crate::qgrid::SimGrid;
use crate::qwf::{self, QwfHeader};
use crate::{Error, Result};

/// Closer than this to a segment, a field evaluation is rejected (m).
pub const PROXIMITY_GUARD: f64 = 1e-9;

const MU0_OVER_4PI: f64 = MU0 / (4.0 * std::f64::consts::PI);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldPoint {
    pub b: [f64; 3],
}

impl FieldPoint {
    pub fn magnitude(&self) -> f64 {
        (self.b[0] * self.b[0] + self.b[1] * self.b[1] + self.b[2] * self.b[2]).sqrt()
    }
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Shortest distance from `p` to the closed segment.
pub fn distance_to_segment(seg: &Segment, p: [f64; 3]) -> f64 {
    let dl = seg.direction();
    let r1 = sub(p, seg.start);
    let l2 = dot(dl, dl);
    let t = if l2 > 0.0 { (dot(r1, dl) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let d = sub(r1, [dl[0] * t, dl[1] * t, dl[2] * t]);
    dot(d, d).sqrt()
}

/// Exact field of one straight segment, without the proximity check.
///
/// With `R₁ = p − a`, `R₂ = p − b` and `dl = b − a`:
/// `B = μ₀I/4π · (r₁ + r₂) / (r₁ r₂ (r₁ r₂ + R₁·R₂)) · dl × R₁`.
/// When `R₁·R₂ < 0` the denominator is rewritten as
/// `|dl × R₁|² / (r₁ r₂ − R₁·R₂)` to avoid cancellation.
#[inline]
pub fn segment_field(seg: &Segment, p: [f64; 3]) -> [f64; 3] {
    let dl = seg.direction();
    let r1v = sub(p, seg.start);
    let r2v = sub(p, seg.end);
    let r1 = dot(r1v, r1v).sqrt();
    let r2 = dot(r2v, r2v).sqrt();
    let c = cross(dl, r1v);
    let d12 = dot(r1v, r2v);
    let rr = r1 * r2;
    let factor = if d12 < 0.0 {
        let c2 = dot(c, c);
        (r1 + r2) * (rr - d12) / (rr * c2)
    } else {
        (r1 + r2) / (rr * (rr + d12))
    };
    let s = MU0_OVER_4PI * seg.current * factor;
    [c[0] * s, c[1] * s, c[2] * s]
}

/// Biot-Savart field of a set of straight segments at `point`.
pub fn biot_savart(segments: &[Segment], point: [f64; 3]) -> Result<FieldPoint> {
    let mut b = [0.0; 3];
    for seg in segments {
        let d = distance_to_segment(seg, point);
        if d <= PROXIMITY_GUARD {
            return Err(Error::PointOnWire { point, distance: d });
        }
        if seg.current == 0.0 {
            continue;
        }
        let f = segment_field(seg, point);
        b[0] += f[0];
        b[1] += f[1];
        b[2] += f[2];
    }
    Ok(FieldPoint { b })
}

/// Height `μ₀ I / (2π B_b)` of the field zero above a wire in a bias field.
pub fn trap_height(current: f64, bias: f64) -> Result<f64> {
    if !(bias > 0.0) {
        return Err(Error::param("bias", format!("must be positive, got {bias}")));
    }
    Ok(MU0 / (2.0 * std::f64::consts::PI) * current / bias)
}

/// A transverse local minimum of one z-slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    /// Grid indices of the discrete minimum.
    pub ix: usize,
    pub iy: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SliceMinima {
    /// Minimum attributed to the left, middle and right guide.
    pub guides: [Option<Minimum>; 3],
    /// Number of distinct minima found in the slice (at most 3).
    pub n_guides: usize,
}

impl SliceMinima {
    pub fn guide(&self, id: WireId) -> Option<&Minimum> {
        self.guides[id.index()].as_ref()
    }
}

/// Potential energy (J) sampled on a [`SimGrid`] with per-slice metadata.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    pub grid: SimGrid,
    pub values: Vec<f64>,
    pub mass: f64,
    /// Wire x-positions (left, middle, right) at each z index.
    pub wire_x: Vec<[f64; 3]>,
    pub minima: Vec<SliceMinima>,
}

impl PotentialGrid {
    /// Wraps externally computed values and locates the minima.
    pub fn from_values(grid: SimGrid, values: Vec<f64>, mass: f64, wire_x: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} points", values.len(), grid.len())));
        }
        if wire_x.len() != grid.counts()[2] {
            return Err(Error::GridMismatch("one wire-position triple per z index required".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "potential must be finite"));
        }
        let minima = (0..grid.counts()[2])
            .into_par_iter()
            .map(|iz| find_slice_minima(&grid, &slice_of(&grid, &values, iz), wire_x[iz]))
            .collect();
        Ok(Self { grid, values, mass, wire_x, minima })
    }

    /// The `(x, y)` plane at `z_index`, `y` fastest.
    pub fn slice(&self, z_index: usize) -> Vec<f64> {
        slice_of(&self.grid, &self.values, z_index)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_qwf<W: Write>(&self, w: &mut W) -> Result<()> {
        qwf::write_real(w, &QwfHeader::for_grid(&self.grid, 0.0), &self.values)
    }

    /// CSV `z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides`; absent guides are empty fields.
    pub fn write_minima_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides")?;
        for (iz, m) in self.minima.iter().enumerate() {
            write!(w, "{}", self.grid.coord(2, iz))?;
            for g in &m.guides {
                match g {
                    Some(g) => write!(w, ",{},{},{}", g.x, g.y, g.value)?,
                    None => write!(w, ",,,")?,
                }
            }
            writeln!(w, ",{}", m.n_guides)?;
        }
        Ok(())
    }
}

fn slice_of(grid: &SimGrid, values: &[f64], iz: usize) -> Vec<f64> {
    let [nx, ny, _] = grid.counts();
    let mut out = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            out.push(values[grid.index(ix, iy, iz)]);
        }
    }
    out
}

/// Discrete local minima of one slice with parabolic sub-cell refinement,
/// attributed to the nearest wire.
pub fn find_slice_minima(grid: &SimGrid, slice: &[f64], wire_x: [f64; 3]) -> SliceMinima {
    let [nx, ny, _] = grid.counts();
    let [dx, dy, _] = grid.spacing();
    let at = |ix: usize, iy: usize| slice[ix * ny + iy];
    let mut found = Vec::new();
    for ix in 1..nx - 1 {
        for iy in 1..ny - 1 {
            let v = at(ix, iy);
            let mut is_min = true;
            'nb: for jx in ix - 1..=ix + 1 {
                for jy in iy - 1..=iy + 1 {
                    if (jx, jy) == (ix, iy) {
                        continue;
                    }
                    let w = at(jx, jy);
                    // strict against earlier neighbours, weak against later: one point per plateau
                    if w < v || (w == v && (jx, jy) < (ix, iy)) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if !is_min {
                continue;
            }
            let refine = |m: f64, c: f64, p: f64, h: f64| {
                let curv = m - 2.0 * c + p;
                if curv > 0.0 {
                    let off = 0.5 * (m - p) / curv;
                    (off.clamp(-0.5, 0.5) * h, -(p - m) * (p - m) / (8.0 * curv))
                } else {
                    (0.0, 0.0)
                }
            };
            let (ox, vx) = refine(at(ix - 1, iy), v, at(ix + 1, iy), dx);
            let (oy, vy) = refine(at(ix, iy - 1), v, at(ix, iy + 1), dy);
            found.push(Minimum {
                x: grid.coord(0, ix) + ox,
                y: grid.coord(1, iy) + oy,
                value: v + vx + vy,
                ix,
                iy,
            });
        }
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value));
    found.truncate(3);
    let n_guides = found.len();
    let mut guides: [Option<Minimum>; 3] = [None; 3];
    for m in found {
        let nearest = (0..3)
            .min_by(|&a, &b| (m.x - wire_x[a]).abs().total_cmp(&(m.x - wire_x[b]).abs()))
            .unwrap();
        // lower minima were inserted first and keep their slot when guides merge
        if guides[nearest].is_none() {
            guides[nearest] = Some(m);
        }
    }
    SliceMinima { guides, n_guides }
}

/// Simulation grid covering the chip box of `params`.
///
/// x is centred on the middle wire, z starts at 0, and the y cells are centred
/// in `(0, y_span)` so that no sample lies in the wire plane.
pub fn chip_grid(params: &LayoutParams, counts: [usize; 3]) -> Result<SimGrid> {
    let dy = params.y_span / counts[1] as f64;
    SimGrid::new(counts, [params.x_span, params.y_span, params.z_max], [-params.x_span / 2.0, 0.5 * dy, 0.0])
}

/// Samples `V = μ_eff |B_wires + B_b b̂ + B_ip ẑ| + ½ m ω_z² (z − z_max/2)²` on `grid`.
pub fn assemble_potential(layout: &ChipLayout, grid: &SimGrid) -> Result<PotentialGrid> {
    let p = &layout.params;
    let [nx, ny, nz] = grid.counts();

    // wires lie in the chip plane y = 0
    let y_min = grid.coords(1).iter().fold(f64::INFINITY, |m, y| m.min(y.abs()));
    if y_min <= PROXIMITY_GUARD {
        for w in &layout.wires {
            let x_lo = grid.coord(0, 0);
            let x_hi = grid.coord(0, nx - 1);
            let crosses = (0..nz).any(|iz| {
                let x = w.x(grid.coord(2, iz));
                x >= x_lo && x <= x_hi
            });
            if crosses {
                return Err(Error::GridIntersectsWire { wire: w.id.name() });
            }
        }
    }

    let segments = layout.segments()?;
    let bias = p.bias_direction.map(|c| c * p.bias_field);
    let z_center = p.z_max / 2.0;
    let spring = 0.5 * p.mass * p.omega_z * p.omega_z;
    let xs = grid.coords(0);
    let ys = grid.coords(1);

    let slices: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|iz| {
            let z = grid.coord(2, iz);
            let vz = spring * (z - z_center) * (z - z_center);
            let mut out = Vec::with_capacity(nx * ny);
            for &x in &xs {
                for &y in &ys {
                    let mut b = [bias[0], bias[1], bias[2] + p.ioffe_field];
                    for seg in &segments {
                        let f = segment_field(seg, [x, y, z]);
                        b[0] += f[0];
                        b[1] += f[1];
                        b[2] += f[2];
                    }
                    out.push(p.mu_eff * dot(b, b).sqrt() + vz);
                }
            }
            out
        })
        .collect();

    let mut values = vec![0.0; grid.len()];
    for (iz, s) in slices.iter().enumerate() {
        for ix in 0..nx {
            for iy in 0..ny {
                values[grid.index(ix, iy, iz)] = s[ix * ny + iy];
            }
        }
    }
    let wire_x = (0..nz)
        .map(|iz| {
            let z = grid.coord(2, iz);
            [0, 1, 2].map(|w| layout.wires[w].x(z))
        })
        .collect();
    PotentialGrid::from_values(grid.clone(), values, p.mass, wire_x)
}

/// Harmonic estimate of a guide's transverse spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseSpectrum {
    pub omega_x: f64,
    pub omega_y: f64,
    /// Lowest two levels `ħ(ω_x + ω_y)/2` and `ħ(ω_x + ω_y)/2 + ħ min(ω_x, ω_y)` (J).
    pub energies: [f64; 2],
    /// Potential at the refined minimum (J).
    pub floor: f64,
}

/// Local-Hessian harmonic levels of one guide at `z_index`.
pub fn transverse_spectrum(potential: &PotentialGrid, z_index: usize, guide: WireId) -> Result<TransverseSpectrum> {
    let m = potential
        .minima
        .get(z_index)
        .and_then(|s| s.guide(guide))
        .copied()
        .ok_or(Error::MinimumAbsent { z_index, guide: guide.name() })?;
    let g = &potential.grid;
    let [dx, dy, _] = g.spacing();
    let v = |ix: usize, iy: usize| potential.values[g.index(ix, iy, z_index)];
    let (ix, iy) = (m.ix, m.iy);
    let vxx = (v(ix + 1, iy) - 2.0 * v(ix, iy) + v(ix - 1, iy)) / (dx * dx);
    let vyy = (v(ix, iy + 1) - 2.0 * v(ix, iy) + v(ix, iy - 1)) / (dy * dy);
    if !(vxx > 0.0 && vyy > 0.0) {
        return Err(Error::MinimumAbsent { z_index, guide: guide.name() });
    }
    let omega_x = (vxx / potential.mass).sqrt();
    let omega_y = (vyy / potential.mass).sqrt();
    let e0 = 0.5 * HBAR * (omega_x + omega_y);
    Ok(TransverseSpectrum { omega_x, omega_y, energies: [e0, e0 + HBAR * omega_x.min(omega_y)], floor: m.value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipgeom::{Centerline, Ordering, WirePath};
    use crate::consts::LI6_MASS;

    fn straight(x: f64, current: f64, z0: f64, z1: f64) -> Segment {
        Segment { start: [x, 0.0, z0], end: [x, 0.0, z1], current }
    }

    #[test]
    fn long_wire_matches_infinite_formula() {
        let r = 1e-6;
        let seg = straight(0.0, 0.1, -5e-3, 5e-3);
        let b = biot_savart(&[seg], [r, 0.0, 0.0]).unwrap();
        let expect = MU0 * 0.1 / (2.0 * std::f64::consts::PI * r);
        assert!((b.magnitude() - 0.02).abs() < 1e-6);
        assert!((b.b[1] - expect).abs() / expect < 1e-6);
        assert_eq!(b.b[0], 0.0);
        assert_eq!(b.b[2], 0.0);
    }

    #[test]
    fn field_is_azimuthal_and_linear() {
        let seg = straight(0.0, 0.1, -1e-3, 1e-3);
        let p = [0.6e-6, 0.8e-6, 1e-5];
        let b1 = biot_savart(&[seg], p).unwrap().b;
        assert!(dot(b1, [p[0], p[1], 0.0]).abs() < 1e-12 * 0.02 * 1e-6);
        let b2 = biot_savart(&[Segment { current: 0.2, ..seg }], p).unwrap().b;
        for i in 0..3 {
            assert!((b2[i] - 2.0 * b1[i]).abs() <= 1e-15 * b1[i].abs().max(1e-30));
        }
        let b0 = biot_savart(&[Segment { current: 0.0, ..seg }], p).unwrap();
        assert_eq!(b0.b, [0.0; 3]);
    }

    #[test]
    fn parallel_wires_cancel_at_midpoint() {
        let segs = [straight(-3e-6, 0.1, -1e-3, 1e-3), straight(3e-6, 0.1, -1e-3, 1e-3)];
        let b = biot_savart(&segs, [0.0, 0.0, 0.0]).unwrap();
        assert!(b.magnitude() < 1e-15, "{:?}", b);
    }

    #[test]
    fn split_segment_is_additive() {
        let whole = straight(0.0, 0.1, -1e-4, 1e-4);
        let parts = [straight(0.0, 0.1, -1e-4, 3e-5), straight(0.0, 0.1, 3e-5, 1e-4)];
        let p = [1e-6, 2e-6, 2e-5];
        let a = biot_savart(&[whole], p).unwrap().b;
        let b = biot_savart(&parts, p).unwrap().b;
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-13 * a[1].abs());
        }
    }

    #[test]
    fn on_wire_rejected() {
        let seg = straight(0.0, 0.1, 0.0, 1e-3);
        assert!(matches!(biot_savart(&[seg], [0.0, 0.0, 5e-4]), Err(Error::PointOnWire { .. })));
    }

    #[test]
    fn trap_height_values() {
        let r0 = trap_height(0.1, 0.014).unwrap();
        assert!((r0 - 1.428_571_4e-6).abs() < 1e-12, "{r0}");
        assert_eq!(trap_height(0.0, 0.3).unwrap(), 0.0);
        assert!((trap_height(0.2, 0.014).unwrap() - 2.0 * r0).abs() < 1e-20);
        assert!(trap_height(0.1, 0.0).is_err());
        assert!(trap_height(0.1, -1.0).is_err());
    }

    fn single_wire_layout(ioffe: f64) -> ChipLayout {
        let mut l = ChipLayout::new(LayoutParams {
            currents: [0.0, 0.1, 0.0],
            ioffe_field: ioffe,
            omega_z: 0.0,
            ..LayoutParams::default()
        })
        .unwrap();
        for id in [WireId::Left, WireId::Right] {
            let w = l.wires[id.index()];
            l.wires[id.index()] = WirePath { centerline: Centerline::Straight { x: w.x(0.0) }, ..w };
        }
        l
    }

    fn local_grid(z: f64) -> SimGrid {
        SimGrid::new([64, 64, 8], [8e-6, 4e-6, 8e-6], [-4e-6, 0.0625e-6, z - 4e-6]).unwrap()
    }

    #[test]
    fn single_wire_minimum_at_trap_height() {
        let layout = single_wire_layout(0.0);
        let grid = local_grid(500e-6);
        let pot = assemble_potential(&layout, &grid).unwrap();
        let r0 = trap_height(0.1, 0.014).unwrap();
        let m = pot.minima[4].guide(WireId::Middle).expect("guide minimum");
        let [dx, dy, _] = grid.spacing();
        assert!(m.x.abs() <= dx, "{}", m.x);
        assert!((m.y - r0).abs() <= dy, "{} vs {r0}", m.y);
        // |B| vanishes at the minimum up to grid resolution
        let gradient_scale = layout.params.mu_eff * 0.014 / r0 * dy;
        assert!(m.value < gradient_scale, "{} vs {gradient_scale}", m.value);
    }

    #[test]
    fn ioffe_field_sets_the_floor() {
        let layout = single_wire_layout(0.03);
        let pot = assemble_potential(&layout, &local_grid(500e-6)).unwrap();
        let m = pot.minima[4].guide(WireId::Middle).unwrap();
        let floor = layout.params.mu_eff * 0.03;
        assert!((m.value - floor).abs() / floor < 1e-3, "{} vs {floor}", m.value);
        assert!(pot.min_value() > 0.0);
    }

    #[test]
    fn field_adds_before_magnitude() {
        // two wires: |B₁ + B₂ + B_b| differs from |B₁ + B_b| + |B₂ + B_b| − |B_b|
        let mut p = LayoutParams { currents: [0.1, 0.0, 0.1], ioffe_field: 0.0, omega_z: 0.0, ..LayoutParams::default() };
        let both = assemble_potential(&ChipLayout::new(p.clone()).unwrap(), &local_grid(0.0)).unwrap();
        p.currents = [0.1, 0.0, 0.0];
        let left = assemble_potential(&ChipLayout::new(p.clone()).unwrap(), &local_grid(0.0)).unwrap();
        p.currents = [0.0, 0.0, 0.1];
        let right = assemble_potential(&ChipLayout::new(p.clone()).unwrap(), &local_grid(0.0)).unwrap();
        p.currents = [0.0; 3];
        let bias = assemble_potential(&ChipLayout::new(p).unwrap(), &local_grid(0.0)).unwrap();
        let mut max_diff: f64 = 0.0;
        for i in 0..both.values.len() {
            let naive = left.values[i] + right.values[i] - bias.values[i];
            max_diff = max_diff.max((both.values[i] - naive).abs() / both.values[i]);
        }
        assert!(max_diff > 1e-3, "{max_diff}");
    }

    #[test]
    fn grid_touching_wires_rejected() {
        let l = crate::chipgeom::standard_layout(Ordering::CounterIntuitive);
        let g = SimGrid::new([16, 16, 8], [20e-6, 4e-6, 8e-6], [-10e-6, 0.0, 0.0]).unwrap();
        assert!(matches!(assemble_potential(&l, &g), Err(Error::GridIntersectsWire { .. })));
    }

    #[test]
    fn injected_harmonic_spectrum() {
        let m = LI6_MASS;
        let omega = 2.0 * std::f64::consts::PI * 3e3;
        let grid = SimGrid::new([32, 32, 8], [4e-6, 4e-6, 8e-6], [-2e-6, -2e-6, 0.0]).unwrap();
        let mut values = vec![0.0; grid.len()];
        for i in 0..grid.len() {
            let [ix, iy, _] = grid.unravel(i);
            let (x, y) = (grid.coord(0, ix) - 0.03e-6, grid.coord(1, iy) + 0.05e-6);
            values[i] = 0.5 * m * omega * omega * (x * x + y * y);
        }
        let pot = PotentialGrid::from_values(grid, values, m, vec![[-5e-6, 0.0, 5e-6]; 8]).unwrap();
        let s = transverse_spectrum(&pot, 3, WireId::Middle).unwrap();
        assert!((s.energies[0] - HBAR * omega).abs() / (HBAR * omega) < 1e-6);
        assert!((s.energies[1] - 2.0 * HBAR * omega).abs() / (HBAR * omega) < 1e-6);
        assert!(matches!(transverse_spectrum(&pot, 3, WireId::Left), Err(Error::MinimumAbsent { .. })));
    }

    #[test]
    fn minima_csv_header() {
        let grid = SimGrid::new([8, 8, 8], [1.0; 3], [0.0; 3]).unwrap();
        let pot = PotentialGrid::from_values(grid, vec![1.0; 512], 1.0, vec![[0.0; 3]; 8]).unwrap();
        let mut out = Vec::new();
        pot.write_minima_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides\n"));
        assert_eq!(s.lines().count(), 9);
    }
}
