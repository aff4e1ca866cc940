//! Three-wire atom-chip geometry.
//!
//! The chip lies in the plane `y = 0` and the wires run along `z`. The middle
//! wire is straight at `x = 0`. Each outer wire sits at `∓d0` and approaches
//! the middle wire along a raised-cosine bump of half-width `w`:
//!
//! ```text
//! |x(z)| = d0 − (d0 − d_min) · ½ (1 + cos(π (z − z_c) / w))   for |z − z_c| ≤ w
//! |x(z)| = d0                                                  elsewhere
//! ```
//!
//! The two bump centres sit at `z_max/2 ± ξ/2`. In the counter-intuitive
//! arrangement the right wire approaches first (smaller `z_c`), so an atom
//! travelling towards `+z` from the left guide sees `J_MR` before `J_LM`.

use std::fmt;
use std::str::FromStr;

use crate::consts::{LI6_MASS, MU_B};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireId {
    Left,
    Middle,
    Right,
}

impl WireId {
    pub const ALL: [WireId; 3] = [WireId::Left, WireId::Middle, WireId::Right];

    pub fn index(self) -> usize {
        match self {
            WireId::Left => 0,
            WireId::Middle => 1,
            WireId::Right => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WireId::Left => "left",
            WireId::Middle => "middle",
            WireId::Right => "right",
        }
    }
}

impl fmt::Display for WireId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WireId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "left" => Ok(WireId::Left),
            "m" | "middle" => Ok(WireId::Middle),
            "r" | "right" => Ok(WireId::Right),
            _ => Err(Error::UnknownWire(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    CounterIntuitive,
    Intuitive,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::CounterIntuitive => "counter_intuitive",
            Ordering::Intuitive => "intuitive",
        }
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counter_intuitive" | "counter-intuitive" | "ci" => Ok(Ordering::CounterIntuitive),
            "intuitive" => Ok(Ordering::Intuitive),
            _ => Err(Error::param("ordering", format!("expected counter_intuitive|intuitive, got `{s}`"))),
        }
    }
}

/// Lateral wire position as a function of `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Centerline {
    Straight { x: f64 },
    /// `sign · |x(z)|` with the raised-cosine bump described in the module docs.
    Bump { sign: f64, d0: f64, d_min: f64, center: f64, half_width: f64 },
}

impl Centerline {
    pub fn x(&self, z: f64) -> f64 {
        match *self {
            Centerline::Straight { x } => x,
            Centerline::Bump { sign, d0, d_min, center, half_width } => {
                let u = (z - center) / half_width;
                if u.abs() <= 1.0 {
                    sign * (d0 - (d0 - d_min) * 0.5 * (1.0 + (std::f64::consts::PI * u).cos()))
                } else {
                    sign * d0
                }
            }
        }
    }

    /// Largest curvature `|x''|` along the path.
    pub fn max_curvature(&self) -> f64 {
        match *self {
            Centerline::Straight { .. } => 0.0,
            Centerline::Bump { d0, d_min, half_width, .. } => {
                let k = std::f64::consts::PI / half_width;
                0.5 * (d0 - d_min) * k * k
            }
        }
    }
}

/// A directed straight piece of wire carrying `current` from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub current: f64,
}

impl Segment {
    pub fn direction(&self) -> [f64; 3] {
        [self.end[0] - self.start[0], self.end[1] - self.start[1], self.end[2] - self.start[2]]
    }

    pub fn length(&self) -> f64 {
        let d = self.direction();
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WirePath {
    pub id: WireId,
    pub current: f64,
    pub centerline: Centerline,
    pub z_start: f64,
    pub z_end: f64,
    pub segment_length: f64,
}

impl WirePath {
    pub fn x(&self, z: f64) -> f64 {
        self.centerline.x(z)
    }

    /// Splits the path into equal-`Δz` chords.
    pub fn discretize(&self) -> Result<Vec<Segment>> {
        if !(self.segment_length > 0.0 && self.segment_length.is_finite()) {
            return Err(Error::param("segment_length", format!("must be positive, got {}", self.segment_length)));
        }
        let span = self.z_end - self.z_start;
        let n = ((span / self.segment_length) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dz = span / n as f64;
        let point = |i: usize| {
            let z = if i == n { self.z_end } else { self.z_start + dz * i as f64 };
            [self.x(z), 0.0, z]
        };
        let mut prev = point(0);
        Ok((1..=n)
            .map(|i| {
                let next = point(i);
                let seg = Segment { start: prev, end: next, current: self.current };
                prev = next;
                seg
            })
            .collect())
    }
}

/// Joins consecutive segments that are exactly collinear with equal current.
///
/// The finite-segment Biot-Savart field of the joined segment equals the sum
/// over its parts, so this only reduces evaluation cost.
pub fn merge_collinear(segments: &[Segment]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for s in segments {
        if let Some(last) = out.last_mut() {
            let (a, b) = (last.direction(), s.direction());
            let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            if last.end == s.start && last.current == s.current && dot > 0.0 && cross.iter().all(|&c| c == 0.0) {
                last.end = s.end;
                continue;
            }
        }
        out.push(*s);
    }
    out
}

/// Every knob of the experiment geometry. `Default` is the standard
/// counter-intuitive chip.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutParams {
    pub ordering: Ordering,
    /// Currents of the left, middle and right wire (A).
    pub currents: [f64; 3],
    pub d0: f64,
    pub d_min: f64,
    pub straight_run: f64,
    /// Longitudinal offset between the two bump centres (m).
    pub xi: f64,
    pub bump_half_width: f64,
    pub x_span: f64,
    pub y_span: f64,
    pub z_max: f64,
    pub z_pad: f64,
    pub segment_length: f64,
    pub bias_field: f64,
    pub bias_direction: [f64; 3],
    pub ioffe_field: f64,
    pub omega_z: f64,
    pub mass: f64,
    pub mu_eff: f64,
}

/// Default effective magnetic moment, expressed as a multiple of μ_B.
pub const DEFAULT_MOMENT_IN_BOHR: f64 = 3.0e-4;

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            ordering: Ordering::CounterIntuitive,
            currents: [0.1, 0.07, 0.1],
            d0: 7e-6,
            d_min: 4.3e-6,
            straight_run: 50e-6,
            xi: 50e-6,
            bump_half_width: 300e-6,
            x_span: 20e-6,
            y_span: 4e-6,
            z_max: 1000e-6,
            z_pad: 500e-6,
            segment_length: 0.5e-6,
            bias_field: 0.014,
            bias_direction: [1.0, 0.0, 0.0],
            ioffe_field: 0.030,
            omega_z: 2.0 * std::f64::consts::PI * 5.0,
            mass: LI6_MASS,
            mu_eff: DEFAULT_MOMENT_IN_BOHR * MU_B,
        }
    }
}

impl LayoutParams {
    /// Shrinks every longitudinal length by `factor` and raises `ω_z` by
    /// `1/factor`, keeping the transverse geometry. The transit velocity
    /// through the chip centre is unchanged.
    pub fn scaled_z(mut self, factor: f64) -> Self {
        self.z_max *= factor;
        self.straight_run *= factor;
        self.xi *= factor;
        self.bump_half_width *= factor;
        self.omega_z /= factor;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipLayout {
    pub params: LayoutParams,
    pub wires: [WirePath; 3],
}

impl ChipLayout {
    pub fn new(params: LayoutParams) -> Result<Self> {
        let p = &params;
        let positive = [
            ("d0", p.d0),
            ("d_min", p.d_min),
            ("bump_half_width", p.bump_half_width),
            ("x_span", p.x_span),
            ("y_span", p.y_span),
            ("z_max", p.z_max),
            ("segment_length", p.segment_length),
            ("mass", p.mass),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("straight_run", p.straight_run), ("xi", p.xi), ("z_pad", p.z_pad), ("omega_z", p.omega_z)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        if p.d_min >= p.d0 {
            return Err(Error::param("d_min", "closest approach must be smaller than d0"));
        }
        if p.straight_run >= p.z_max / 2.0 {
            return Err(Error::param("straight_run", "must be shorter than z_max / 2"));
        }
        let n = p.bias_direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::param("bias_direction", "must be a unit vector"));
        }
        if !(p.bias_field.is_finite() && p.ioffe_field.is_finite() && p.mu_eff.is_finite()) {
            return Err(Error::param("fields", "bias, Ioffe field and moment must be finite"));
        }

        let early = p.z_max / 2.0 - p.xi / 2.0;
        let late = p.z_max / 2.0 + p.xi / 2.0;
        let (left_center, right_center) = match p.ordering {
            Ordering::CounterIntuitive => (late, early),
            Ordering::Intuitive => (early, late),
        };
        let bump = |sign: f64, center: f64| Centerline::Bump {
            sign,
            d0: p.d0,
            d_min: p.d_min,
            center,
            half_width: p.bump_half_width,
        };
        let path = |id: WireId, centerline: Centerline| WirePath {
            id,
            current: p.currents[id.index()],
            centerline,
            z_start: -p.z_pad,
            z_end: p.z_max + p.z_pad,
            segment_length: p.segment_length,
        };
        let wires = [
            path(WireId::Left, bump(-1.0, left_center)),
            path(WireId::Middle, Centerline::Straight { x: 0.0 }),
            path(WireId::Right, bump(1.0, right_center)),
        ];
        Ok(Self { params, wires })
    }

    pub fn wire(&self, id: WireId) -> &WirePath {
        &self.wires[id.index()]
    }

    /// Lateral position of a wire at `z ∈ [0, z_max]`.
    pub fn wire_offset(&self, id: WireId, z: f64) -> Result<f64> {
        if !(0.0..=self.params.z_max).contains(&z) {
            return Err(Error::param("z", format!("{z} outside [0, z_max]")));
        }
        Ok(self.wire(id).x(z))
    }

    /// Bump centre of an outer wire; `None` for the straight middle wire.
    pub fn bump_center(&self, id: WireId) -> Option<f64> {
        match self.wire(id).centerline {
            Centerline::Bump { center, .. } => Some(center),
            Centerline::Straight { .. } => None,
        }
    }

    /// All wires discretised and merged into one segment list.
    pub fn segments(&self) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        for w in &self.wires {
            out.extend(merge_collinear(&w.discretize()?));
        }
        Ok(out)
    }
}

/// The chip as drawn in the reference geometry, for the requested ordering.
pub fn standard_layout(ordering: Ordering) -> ChipLayout {
    ChipLayout::new(LayoutParams { ordering, ..LayoutParams::default() }).expect("default layout is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const UM: f64 = 1e-6;

    #[test]
    fn standard_values() {
        let l = standard_layout(Ordering::CounterIntuitive);
        let p = &l.params;
        assert_eq!(p.d0, 7e-6);
        assert_eq!(p.d_min, 4.3e-6);
        assert_eq!(p.straight_run, 50e-6);
        assert_eq!(p.z_max, 1e-3);
        assert_eq!((p.x_span, p.y_span), (20e-6, 4e-6));
        assert_eq!((p.bias_field, p.ioffe_field), (0.014, 0.030));
        assert_eq!(p.currents, [0.1, 0.07, 0.1]);
        assert_abs_diff_eq!(p.omega_z, 2.0 * std::f64::consts::PI * 5.0);
        assert_eq!(p.mass, LI6_MASS);
    }

    #[test]
    fn counter_intuitive_right_wire_first() {
        let l = standard_layout(Ordering::CounterIntuitive);
        assert!(l.bump_center(WireId::Right).unwrap() < l.bump_center(WireId::Left).unwrap());
        let i = standard_layout(Ordering::Intuitive);
        assert!(i.bump_center(WireId::Right).unwrap() > i.bump_center(WireId::Left).unwrap());
    }

    #[test]
    fn separation_at_entrance() {
        for o in [Ordering::CounterIntuitive, Ordering::Intuitive] {
            let l = standard_layout(o);
            let sep = l.wire_offset(WireId::Middle, 0.0).unwrap() - l.wire_offset(WireId::Left, 0.0).unwrap();
            assert!((sep - 7.0 * UM).abs() <= 1e-12);
            let sep = l.wire_offset(WireId::Right, 0.0).unwrap() - l.wire_offset(WireId::Middle, 0.0).unwrap();
            assert!((sep - 7.0 * UM).abs() <= 1e-12);
        }
    }

    #[test]
    fn wire_offset_examples() {
        let l = standard_layout(Ordering::CounterIntuitive);
        assert_eq!(l.wire_offset(WireId::Left, 25.0 * UM).unwrap(), -7.0 * UM);
        for z in [0.0, 100.0 * UM, 500.0 * UM, 1000.0 * UM] {
            assert_eq!(l.wire_offset(WireId::Middle, z).unwrap(), 0.0);
        }
        let zc = l.bump_center(WireId::Left).unwrap();
        assert_abs_diff_eq!(l.wire_offset(WireId::Left, zc).unwrap(), -4.3 * UM, epsilon = 1e-18);
        assert!(l.wire_offset(WireId::Left, -1.0 * UM).is_err());
        assert!(matches!("top".parse::<WireId>(), Err(Error::UnknownWire(_))));
    }

    #[test]
    fn intuitive_is_z_mirror() {
        let ci = standard_layout(Ordering::CounterIntuitive);
        let it = standard_layout(Ordering::Intuitive);
        let zm = ci.params.z_max;
        for i in 0..=200 {
            let z = zm * i as f64 / 200.0;
            for id in WireId::ALL {
                let a = it.wire_offset(id, z).unwrap();
                let b = ci.wire_offset(id, zm - z).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-18);
            }
        }
    }

    #[test]
    fn mirror_left_right() {
        let l = standard_layout(Ordering::CounterIntuitive);
        let zm = l.params.z_max;
        for i in 0..=500 {
            let z = zm * i as f64 / 500.0;
            let a = l.wire_offset(WireId::Left, z).unwrap();
            let b = l.wire_offset(WireId::Right, zm - z).unwrap();
            assert_abs_diff_eq!(a, -b, epsilon = 1e-18);
        }
    }

    #[test]
    fn separation_bounds() {
        let l = standard_layout(Ordering::CounterIntuitive);
        let zm = l.params.z_max;
        for i in 0..=2000 {
            let z = zm * i as f64 / 2000.0;
            for id in [WireId::Left, WireId::Right] {
                let x = l.wire_offset(id, z).unwrap().abs();
                assert!(x >= 4.3 * UM - 1e-18 && x <= 7.0 * UM + 1e-18);
            }
        }
    }

    #[test]
    fn invalid_layouts() {
        let bad = |f: fn(&mut LayoutParams)| {
            let mut p = LayoutParams::default();
            f(&mut p);
            ChipLayout::new(p).is_err()
        };
        assert!(bad(|p| p.d_min = 8e-6));
        assert!(bad(|p| p.straight_run = 600e-6));
        assert!(bad(|p| p.bias_direction = [1.0, 1.0, 0.0]));
        assert!(bad(|p| p.segment_length = 0.0));
    }

    #[test]
    fn straight_wire_discretization() {
        let w = WirePath {
            id: WireId::Middle,
            current: 0.1,
            centerline: Centerline::Straight { x: 0.0 },
            z_start: 0.0,
            z_end: 1e-3,
            segment_length: 1e-6,
        };
        let segs = w.discretize().unwrap();
        assert_eq!(segs.len(), 1000);
        assert!(segs.iter().all(|s| s.start[0] == 0.0 && s.end[0] == 0.0 && s.start[1] == 0.0));
        assert!(segs.windows(2).all(|p| p[0].end == p[1].start));
        let padded = WirePath { z_start: -0.5e-3, z_end: 1.5e-3, ..w };
        assert_eq!(padded.discretize().unwrap().len(), 2000);
        let halved = WirePath { segment_length: 0.5e-6, ..w };
        assert_eq!(halved.discretize().unwrap().len(), 2000);
        assert_eq!(merge_collinear(&segs).len(), 1);
        let bad = WirePath { segment_length: -1.0, ..w };
        assert!(bad.discretize().is_err());
    }

    #[test]
    fn layout_wires_are_padded_and_continuous() {
        let l = standard_layout(Ordering::CounterIntuitive);
        for w in &l.wires {
            let segs = w.discretize().unwrap();
            assert_eq!(segs[0].start[2], -500e-6);
            assert_eq!(segs.last().unwrap().end[2], 1500e-6);
            assert!(segs.windows(2).all(|p| p[0].end == p[1].start));
            assert!(segs.iter().all(|s| s.current == w.current));
        }
    }

    #[test]
    fn chord_deviation_on_curved_section() {
        let l = standard_layout(Ordering::CounterIntuitive);
        let w = l.wire(WireId::Left);
        let segs = w.discretize().unwrap();
        let zc = l.bump_center(WireId::Left).unwrap();
        let hw = l.params.bump_half_width;
        let mut worst: f64 = 0.0;
        for s in segs.iter().filter(|s| (s.start[2] - zc).abs() <= hw) {
            for k in 1..16 {
                let f = k as f64 / 16.0;
                let z = s.start[2] + f * (s.end[2] - s.start[2]);
                let chord = s.start[0] + f * (s.end[0] - s.start[0]);
                worst = worst.max((chord - w.x(z)).abs());
            }
        }
        assert!(worst <= 1e-9, "{worst}");
        let bound = w.segment_length.powi(2) / 8.0 * w.centerline.max_curvature();
        assert!(worst <= bound * (1.0 + 1e-6), "{worst} > {bound}");
    }

    #[test]
    fn scaled_layout() {
        let p = LayoutParams::default().scaled_z(0.25);
        assert_abs_diff_eq!(p.z_max, 250e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(p.omega_z, 2.0 * std::f64::consts::PI * 20.0, epsilon = 1e-12);
        assert!(ChipLayout::new(p).is_ok());
    }
}
