use std::f64::consts::PI;

use ctap_core::chipgeom::{ChipLayout, LayoutParams, WireId};
use ctap_core::magfield::{assemble_potential, transverse_spectrum, PotentialGrid};
use ctap_core::qgrid::SimGrid;

/// A few slices of the standard chip starting at `z`.
fn slab(params: &LayoutParams, z: f64) -> PotentialGrid {
    let layout = ChipLayout::new(params.clone()).unwrap();
    let dy = params.y_span / 32.0;
    let grid =
        SimGrid::new([128, 32, 8], [params.x_span, params.y_span, 8e-6], [-params.x_span / 2.0, 0.5 * dy, z]).unwrap();
    assemble_potential(&layout, &grid).unwrap()
}

#[test]
fn outer_guides_sit_over_their_wires_far_from_the_bumps() {
    let params = LayoutParams::default();
    let pot = slab(&params, 20e-6);
    // each neighbour pulls an outer minimum a little towards the centre
    let tol = 0.5e-6;
    for m in &pot.minima {
        assert_eq!(m.n_guides, 3);
        let l = m.guide(WireId::Left).unwrap();
        let r = m.guide(WireId::Right).unwrap();
        assert!((l.x + params.d0).abs() < tol, "left at {}", l.x);
        assert!((r.x - params.d0).abs() < tol, "right at {}", r.x);
        assert!((l.x + r.x).abs() < pot.grid.spacing()[0], "{} {}", l.x, r.x);
        assert!(m.guide(WireId::Middle).unwrap().x.abs() < tol);
    }
}

#[test]
fn transverse_period_is_a_fraction_of_a_millisecond() {
    let params = LayoutParams::default();
    let pot = slab(&params, 20e-6);
    for g in WireId::ALL {
        let s = transverse_spectrum(&pot, 4, g).unwrap();
        for omega in [s.omega_x, s.omega_y] {
            let period = 2.0 * PI / omega;
            assert!(period > 0.2e-3 / 3.0 && period < 0.2e-3 * 3.0, "{g}: period {period:e} s");
        }
    }
}

#[test]
fn guides_approach_at_the_bumps() {
    let params = LayoutParams::default();
    let layout = ChipLayout::new(params.clone()).unwrap();
    let centre = params.z_max / 2.0;
    let gap = |id: WireId, z: f64| (layout.wire_offset(id, z).unwrap() - layout.wire_offset(WireId::Middle, z).unwrap()).abs();
    let l_bump = layout.bump_center(WireId::Left).unwrap();
    let r_bump = layout.bump_center(WireId::Right).unwrap();
    assert!((gap(WireId::Left, l_bump) - params.d_min).abs() < 1e-12);
    assert!((gap(WireId::Right, r_bump) - params.d_min).abs() < 1e-12);
    assert!((gap(WireId::Left, 0.0) - params.d0).abs() < 1e-12);
    // counter-intuitive: the right pair couples first
    assert!(r_bump < l_bump);
    assert!(((l_bump + r_bump) / 2.0 - centre).abs() < 1e-12);
}
