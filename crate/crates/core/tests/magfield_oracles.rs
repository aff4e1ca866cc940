use std::f64::consts::PI;

use ctap_core::chipgeom::{ChipLayout, LayoutParams, Segment, WireId};
use ctap_core::consts::MU0;
use ctap_core::magfield::{biot_savart, segment_field, trap_height};
use proptest::prelude::*;

fn straight_wire(length: f64, current: f64) -> Segment {
    Segment { start: [0.0, 0.0, -length / 2.0], end: [0.0, 0.0, length / 2.0], current }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[test]
fn long_wire_matches_infinite_wire_law() {
    for r in [1e-6, 1.4286e-6, 7e-6, 50e-6] {
        let wire = straight_wire(1e4 * r, 0.1);
        let b = biot_savart(&[wire], [r, 0.0, 0.0]).unwrap().magnitude();
        let expected = MU0 * 0.1 / (2.0 * PI * r);
        assert!((b - expected).abs() / expected < 1e-6, "r = {r}: {b} vs {expected}");
    }
}

#[test]
fn field_of_short_segment_matches_quadrature() {
    let seg = Segment { start: [-1e-6, 0.5e-6, 0.0], end: [2e-6, -0.3e-6, 3e-6], current: 0.05 };
    let p = [0.7e-6, 1.9e-6, 0.4e-6];
    // midpoint rule on dB = μ0 I / 4π · dl × r / |r|³
    let n = 200_000;
    let d = [0, 1, 2].map(|a| (seg.end[a] - seg.start[a]) / n as f64);
    let mut b = [0.0; 3];
    for i in 0..n {
        let s = (i as f64 + 0.5) / n as f64;
        let q = [0, 1, 2].map(|a| seg.start[a] + s * (seg.end[a] - seg.start[a]));
        let r = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
        let r3 = norm(r).powi(3);
        let c = [d[1] * r[2] - d[2] * r[1], d[2] * r[0] - d[0] * r[2], d[0] * r[1] - d[1] * r[0]];
        for a in 0..3 {
            b[a] += MU0 * seg.current / (4.0 * PI) * c[a] / r3;
        }
    }
    let got = segment_field(&seg, p);
    for a in 0..3 {
        assert!((got[a] - b[a]).abs() <= 1e-8 * norm(b), "{got:?} vs {b:?}");
    }
}

#[test]
fn trap_height_within_one_cell_of_sampled_minimum() {
    let (current, bias) = (0.1, 0.014);
    let h = trap_height(current, bias).unwrap();
    assert!((h - 1.4286e-6).abs() < 1e-10, "{h}");
    let wire = straight_wire(1.0, current);
    let dy = 4e-6 / 32.0;
    let (best, _) = (0..32)
        .map(|i| {
            let y = (i as f64 + 0.5) * dy;
            let b = biot_savart(&[wire], [0.0, y, 0.0]).unwrap().b;
            (y, norm([b[0] + bias, b[1], b[2]]))
        })
        .fold((0.0, f64::INFINITY), |acc, (y, v)| if v < acc.1 { (y, v) } else { acc });
    assert!((best - h).abs() <= dy, "{best} vs {h}");
}

#[test]
fn refining_segments_converges() {
    let base = LayoutParams::default();
    let z = base.z_max / 2.0 + base.xi / 2.0;
    let points = [[-6e-6, 1.5e-6, z], [0.0, 1.0e-6, z + 20e-6], [5e-6, 2.0e-6, z - 60e-6]];
    let field = |h: f64| -> Vec<[f64; 3]> {
        let layout = ChipLayout::new(LayoutParams { segment_length: h, ..base.clone() }).unwrap();
        let segs = layout.segments().unwrap();
        points.iter().map(|&p| biot_savart(&segs, p).unwrap().b).collect()
    };
    let levels: Vec<Vec<[f64; 3]>> = [1e-6, 0.5e-6, 0.25e-6].iter().map(|&h| field(h)).collect();
    for k in 0..points.len() {
        let diff = |a: &[f64; 3], b: &[f64; 3]| norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
        let coarse = diff(&levels[0][k], &levels[1][k]);
        let fine = diff(&levels[1][k], &levels[2][k]);
        let scale = norm(levels[2][k]);
        assert!(fine <= coarse / 3.0 || fine <= 1e-12 * scale, "point {k}: {coarse:e} then {fine:e}");
        assert!(fine / scale < 1e-4, "point {k}: relative change {:e}", fine / scale);
    }
}

fn arb_point() -> impl Strategy<Value = [f64; 3]> {
    (-9e-6..9e-6f64, 0.3e-6..4e-6f64, 0.0..1000e-6f64).prop_map(|(x, y, z)| [x, y, z])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_is_linear_in_current(p in arb_point(), i in -1.0..1.0f64) {
        let a = Segment { start: [-1e-6, 0.0, 0.0], end: [1e-6, 0.0, 50e-6], current: 1.0 };
        let b1 = segment_field(&a, p);
        let bi = segment_field(&Segment { current: i, ..a }, p);
        for k in 0..3 {
            prop_assert!((bi[k] - i * b1[k]).abs() <= 1e-12 * norm(b1));
        }
    }

    #[test]
    fn split_segment_adds_up(p in arb_point(), s in 0.05..0.95f64) {
        let a = Segment { start: [2e-6, 0.0, 100e-6], end: [-3e-6, 0.0, 700e-6], current: 0.07 };
        let m = [0, 1, 2].map(|k| a.start[k] + s * (a.end[k] - a.start[k]));
        let whole = segment_field(&a, p);
        let parts = biot_savart(&[Segment { end: m, ..a }, Segment { start: m, ..a }], p).unwrap().b;
        for k in 0..3 {
            prop_assert!((whole[k] - parts[k]).abs() <= 1e-10 * norm(whole));
        }
    }

    /// A mirror flips B_y and B_z, so |B| is only symmetric without the Ioffe field.
    #[test]
    fn symmetric_chip_gives_mirror_symmetric_trap(p in arb_point()) {
        let params = LayoutParams { xi: 0.0, ioffe_field: 0.0, ..LayoutParams::default() };
        let layout = ChipLayout::new(params.clone()).unwrap();
        let segs = layout.segments().unwrap();
        let total = |q: [f64; 3]| {
            let b = biot_savart(&segs, q).unwrap().b;
            let d = params.bias_direction;
            norm([
                b[0] + params.bias_field * d[0],
                b[1] + params.bias_field * d[1],
                b[2] + params.bias_field * d[2] + params.ioffe_field,
            ])
        };
        let here = total(p);
        let mirror = total([-p[0], p[1], p[2]]);
        prop_assert!((here - mirror).abs() <= 1e-9 * here, "{here} vs {mirror}");
        let (l, r) = (layout.wire_offset(WireId::Left, p[2]).unwrap(), layout.wire_offset(WireId::Right, p[2]).unwrap());
        prop_assert!((l + r).abs() < 1e-15);
    }
}
