//! Matched grid / dual-window ladders for the supported group families.
//!
//! Resolution studies need the group grid and the dual transform window to
//! refine *together*; refining one side alone either aliases (group side) or
//! stripes the inverse (dual side).  The constructors here encode the
//! coupling rules so call sites only pick a family, a base size, and a level:
//!
//! * the dual row lattice step always equals the group shift-axis step
//!   (step ratios other than one leave periodic gaps in the reconstruction);
//! * the wave-window edge sits half a step inside the Nyquist frequency of
//!   the transverse group axis, so every tabulated row is resolvable;
//! * the deep-row cutoff (smallest `|s|`, respectively smallest orbit
//!   radius) shrinks proportionally to the lattice step, which keeps the
//!   missing-tail error decaying with the level instead of plateauing;
//! * spatial extents are held fixed across levels, and lattice steps halve,
//!   so level `l+1` contains every node of level `l`.
//!
//! All counts are kept odd (linear axes centered on the identity) so the
//! identity and the half-extent shift vectors are exact lattice points.

use std::sync::Arc;

use crate::dual::{
    affine_dual, affine_line_dual, bianchi_dual, euclidean_dual, BianchiDualSpec, DualGrid,
};
use crate::error::{Error, Result};
use crate::group::{Axis, BianchiFamily, GroupGrid, GroupSpec};

/// A group grid paired with the dual window matched to it.
#[derive(Clone)]
pub struct Setup {
    pub grid: Arc<GroupGrid>,
    pub dual: Arc<DualGrid>,
}

fn scaled_count(base: usize, level: u32) -> Result<usize> {
    if base < 5 || base % 2 == 0 {
        return Err(Error::InvalidGrid(format!(
            "base count must be odd and at least 5, got {base}"
        )));
    }
    Ok((base - 1) * (1usize << level) + 1)
}

/// Flat torus `[-extent, extent)^dim` with `base * 2^level` nodes per axis
/// and the reciprocal momentum lattice as its dual.
pub fn euclidean_setup(dim: usize, extent: f64, base: usize, level: u32) -> Result<Setup> {
    if base < 4 {
        return Err(Error::InvalidGrid(format!(
            "base count must be at least 4, got {base}"
        )));
    }
    if !(extent > 0.0) {
        return Err(Error::InvalidGrid(format!("extent must be positive, got {extent}")));
    }
    let n = base * (1usize << level);
    let h = 2.0 * extent / n as f64;
    let axis = Axis::from_lattice(-extent, h, n, false, true)?;
    let grid = Arc::new(GroupGrid::from_axes(
        GroupSpec::euclidean(dim)?,
        vec![axis; dim],
    )?);
    let dual = Arc::new(euclidean_dual(&grid)?);
    Ok(Setup { grid, dual })
}

/// Shared affine lattice laws: geometric `a`-axis over `log a` in
/// `[-2, 2]`, linear `b`-axis over `[-2, 2]`, equal steps `h = 4 / (n - 1)`.
fn affine_axes(base: usize, level: u32) -> Result<(f64, Axis, Axis)> {
    let n = scaled_count(base, level)?;
    let h = 4.0 / (n - 1) as f64;
    let a_axis = Axis::from_lattice(-2.0, h, n, true, false)?;
    let b_axis = Axis::from_lattice(-2.0, h, n, false, false)?;
    Ok((h, a_axis, b_axis))
}

/// Wave-window parameters matched to an affine lattice with log-step `h`
/// and transverse step `hb`: rows at the group step, top row half a step
/// under the `b`-axis Nyquist edge, bottom row at `s_min = 0.02 h`.
fn affine_window(h: f64, hb: f64) -> (f64, f64, usize) {
    let s_min = 0.02 * h;
    let t0 = s_min.ln();
    let t_max = (1.0 / (2.0 * hb)).ln() - 0.5 * h;
    let nt = ((t_max - t0) / h).floor() as usize + 1;
    (t0, h, nt)
}

/// `ax+b` group on the positive-`a` chart with both wave atoms tabulated on
/// matched log lattices.
pub fn affine_setup(base: usize, level: u32) -> Result<Setup> {
    let (h, a_axis, b_axis) = affine_axes(base, level)?;
    let hb = b_axis.step();
    let grid = Arc::new(GroupGrid::from_axes(GroupSpec::affine(), vec![a_axis, b_axis])?);
    let (t0, ht, nt) = affine_window(h, hb);
    let dual = Arc::new(affine_dual(t0, ht, nt)?);
    Ok(Setup { grid, dual })
}

/// Affine group with a central circle factor: the affine laws above plus a
/// wrapped unit-period `c`-axis whose reciprocal lattice is exactly the
/// integers, with `c_base * 2^level` nodes.
pub fn affine_line_setup(base: usize, c_base: usize, level: u32) -> Result<Setup> {
    if c_base < 4 {
        return Err(Error::InvalidGrid(format!(
            "central axis base count must be at least 4, got {c_base}"
        )));
    }
    let (h, a_axis, b_axis) = affine_axes(base, level)?;
    let hb = b_axis.step();
    let nc = c_base * (1usize << level);
    let c_axis = Axis::from_lattice(0.0, 1.0 / nc as f64, nc, false, true)?;
    let grid = Arc::new(GroupGrid::from_axes(
        GroupSpec::affine_line(),
        vec![a_axis, b_axis, c_axis.clone()],
    )?);
    let (t0, ht, nt) = affine_window(h, hb);
    let dual = Arc::new(affine_line_dual(t0, ht, nt, &c_axis)?);
    Ok(Setup { grid, dual })
}

/// Solvable `R^2 x R` group grid with matched orbit-layer window.
///
/// Lattice laws, all driven by the `v`-count `nv` (odd): `hv = 4/(nv-1)`
/// (fixed extent `[-2, 2]^2`), `hc = hv/2` with `(nv-1)/2` nodes either side
/// of zero (fixed extent `[-1, 1]`; the `c`-step must lead the `v`-step
/// because the orbit radius contracts by `e^{t}` per row and the radial
/// ladder is the resolution bottleneck).  Window laws: rows at the `c`-step,
/// shallow edge at the `v`-axis Nyquist radius `pi/hv`, deep edge at orbit
/// radius `0.1 hv`, and `24 + 8 level` section nodes per level.
///
/// Families IV and VI flow hyperbolically (the section coordinate stretches
/// as `e^{|t|}` along one axis), so their windows are padded and their
/// sections are log-spaced over extents matched to the Nyquist box; the
/// per-row Nyquist mask in the dual drops the rows this inevitably pushes
/// past the resolvable band.
pub fn bianchi_setup(family: BianchiFamily, base: usize, level: u32) -> Result<Setup> {
    let nv = scaled_count(base, level)?;
    let hv = 4.0 / (nv - 1) as f64;
    let hc = 0.5 * hv;
    let mc = (nv - 1) / 2;
    let v0 = -(((nv - 1) / 2) as f64) * hv;
    let v_axis = Axis::from_lattice(v0, hv, nv, false, false)?;
    let c_axis = Axis::from_lattice(-(mc as f64) * hc, hc, 2 * mc + 1, false, false)?;
    let grid = Arc::new(GroupGrid::from_axes(
        GroupSpec::bianchi(family)?,
        vec![v_axis.clone(), v_axis, c_axis],
    )?);
    let sigma_min = 0.1 * hv;
    let nyq = std::f64::consts::PI / hv;
    let radial = nyq.ln();
    let deep = (1.0 / sigma_min).ln();
    let (t0, t_hi, lambda_count, lambda_extent, lambda_min) = match family {
        BianchiFamily::Five => (-radial, deep, 24 + 8 * level as usize, 1.0, 0.0),
        BianchiFamily::Seven { .. } => {
            // lambda_min = 1 marks the annulus floor and switches the radius
            // sections to log spacing.
            (-radial, deep, 24 + 8 * level as usize, 1.0, 1.0)
        }
        BianchiFamily::Four => {
            // Flow time to a point doubles as its cone angle -sigma1/sigma2,
            // so pad the radial window; the section parameter reaches
            // sigma2 * e^{t} over the live window.
            (-radial - 3.0, deep + 3.0, 72 + 24 * level as usize, 20.0 * nyq, 0.02)
        }
        BianchiFamily::Six { q } => {
            let qa = q.abs().max(0.25).min(4.0);
            let lo = (-radial / qa).min(-radial) - 2.0;
            let hi = (deep / qa).max(deep) + 2.0;
            let ext = nyq.powf(1.0 + 1.0 / qa).clamp(10.0, 1e4);
            (lo, hi, 48 + 16 * level as usize, ext, 0.02)
        }
    };
    let nt = ((t_hi - t0) / hc).ceil() as usize + 1;
    let dual = Arc::new(bianchi_dual(
        family,
        &BianchiDualSpec {
            t0,
            ht: hc,
            nt,
            lambda_count,
            lambda_extent,
            lambda_min,
            v_step: [hv, hv],
        },
    )?);
    Ok(Setup { grid, dual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::LayerKind;

    #[test]
    fn refined_levels_halve_steps_at_fixed_extents() {
        for level in 0..2u32 {
            let s = affine_setup(17, level).unwrap();
            let h = 0.25 / (1 << level) as f64;
            assert!((s.grid.axis(0).step() - h).abs() < 1e-14);
            assert!((s.grid.axis(1).step() - h).abs() < 1e-14);
            assert!((s.grid.axis(0).node(0).ln() + 2.0).abs() < 1e-12);
            assert!((s.grid.axis(1).node(0) + 2.0).abs() < 1e-12);
        }
        for level in 0..2u32 {
            let s = bianchi_setup(BianchiFamily::Five, 9, level).unwrap();
            let hv = 0.5 / (1 << level) as f64;
            assert!((s.grid.axis(0).step() - hv).abs() < 1e-14);
            assert!((s.grid.axis(2).step() - 0.5 * hv).abs() < 1e-14);
            assert!((s.grid.axis(0).node(0) + 2.0).abs() < 1e-12);
            assert!((s.grid.axis(2).node(0) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_row_lattices_match_the_group_shift_steps() {
        let s = affine_setup(17, 0).unwrap();
        let ht = s.dual.layer(0).space().step();
        assert!((ht - s.grid.axis(0).step()).abs() < 1e-14);

        let s = bianchi_setup(BianchiFamily::Five, 9, 0).unwrap();
        let ht = s.dual.layer(0).space().step();
        assert!((ht - s.grid.axis(2).step()).abs() < 1e-14);
    }

    #[test]
    fn wave_windows_stay_inside_the_transverse_nyquist_edge() {
        for level in 0..2u32 {
            let s = affine_setup(17, level).unwrap();
            let space = s.dual.layer(0).space();
            let top = space.t(space.len() - 1);
            let nyquist = (1.0 / (2.0 * s.grid.axis(1).step())).ln();
            assert!(top < nyquist, "top row {top} reaches past {nyquist}");
            assert!(nyquist - top < 1.5 * s.grid.axis(0).step());
        }
        for level in 0..2u32 {
            let s = bianchi_setup(BianchiFamily::Five, 9, level).unwrap();
            let space = s.dual.layer(0).space();
            let hv = s.grid.axis(0).step();
            let shallow = -space.t0();
            assert!((shallow - (std::f64::consts::PI / hv).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_cutoffs_shrink_with_the_level() {
        let shallow = affine_setup(17, 0).unwrap();
        let fine = affine_setup(17, 1).unwrap();
        let t0 = |s: &Setup| s.dual.layer(0).space().t0();
        assert!((t0(&fine) - t0(&shallow) + std::f64::consts::LN_2).abs() < 1e-12);

        let shallow = bianchi_setup(BianchiFamily::Five, 9, 0).unwrap();
        let fine = bianchi_setup(BianchiFamily::Five, 9, 1).unwrap();
        let deep = |s: &Setup| {
            let space = s.dual.layer(0).space();
            space.t(space.len() - 1)
        };
        // deepest row radius ~ 0.1 hv halves per level, so the log edge
        // advances by at least ln 2 minus one row of overshoot
        assert!(deep(&fine) - deep(&shallow) > std::f64::consts::LN_2 - 0.26);
    }

    #[test]
    fn euclidean_setup_reciprocal_lattice_spans_the_nyquist_band() {
        let s = euclidean_setup(1, 8.0, 128, 0).unwrap();
        assert_eq!(s.grid.axis(0).len(), 128);
        assert!(s.grid.axis(0).wrapped());
        let layer = s.dual.layer(0);
        assert!(matches!(layer.kind(), LayerKind::EuclidChar));
        let lo = layer.node_param(0)[0];
        assert!((lo + 4.0).abs() < 1e-12, "lowest momentum {lo}");
    }

    #[test]
    fn affine_line_setup_uses_integer_characters_on_the_unit_circle() {
        let s = affine_line_setup(9, 4, 0).unwrap();
        assert!(s.grid.axis(2).wrapped());
        assert!((s.grid.axis(2).step() - 0.25).abs() < 1e-14);
        let layer = s.dual.layer(0);
        for k in 0..4 {
            let zeta = layer.node_param(k)[0];
            assert!((zeta - zeta.round()).abs() < 1e-12, "non-integer character {zeta}");
        }
    }

    #[test]
    fn invalid_bases_are_rejected() {
        assert!(affine_setup(8, 0).is_err());
        assert!(affine_setup(3, 0).is_err());
        assert!(euclidean_setup(1, -1.0, 16, 0).is_err());
        assert!(bianchi_setup(BianchiFamily::Five, 10, 0).is_err());
    }
}
