//! Brute-force quantization on flat abelian groups, used as ground truth.
//!
//! `kn_oracle` evaluates the double quadrature
//!
//! ```text
//! [Op(a) u](x) = sum_y m_y sum_xi w_xi  a(x + tau (y - x), xi)
//!                e^{2 pi i (x - y) . xi}  u(y)
//! ```
//!
//! with nothing shared with the factorized transform pipeline beyond the
//! grid definitions themselves: the symbol interpolation, phase evaluation,
//! and summation below are written out directly, one term at a time, so a
//! bug in the pipeline cannot hide here.  It is deliberately the slow
//! direct sum; do not add transform acceleration.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::dual::DualGrid;
use crate::error::{Error, Result};
use crate::group::{GroupGrid, GroupKind, SampledFunction};
use crate::quant::{
    op_apply, op_apply_direct, separable_from_scalar_field, SymbolField, TauKind,
};

/// Dense symbol samples over (x-grid x momentum-grid) of a flat group.
#[derive(Clone)]
pub struct ScalarSymbol {
    grid: Arc<GroupGrid>,
    dual: Arc<DualGrid>,
    /// Row-major over `x`, then momentum node.
    values: Vec<C64>,
}

impl ScalarSymbol {
    pub fn new(
        grid: Arc<GroupGrid>,
        dual: Arc<DualGrid>,
        values: Vec<C64>,
    ) -> Result<Self> {
        let GroupKind::Euclidean(_) = grid.spec().kind() else {
            return Err(Error::Unsupported(format!(
                "scalar symbols need a flat group, got {}",
                grid.spec().label()
            )));
        };
        let nxi = dual.node_count();
        if dual.layers().len() != 1 || dual.layer(0).space().len() != 1 {
            return Err(Error::Unsupported(
                "scalar symbols need a single character layer".into(),
            ));
        }
        if values.len() != grid.len() * nxi {
            return Err(Error::InvalidGrid(format!(
                "expected {} x {} symbol samples, got {}",
                grid.len(),
                nxi,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite symbol sample".into()));
        }
        Ok(Self { grid, dual, values })
    }

    pub fn from_fn(
        grid: &Arc<GroupGrid>,
        dual: &Arc<DualGrid>,
        f: impl Fn(&[f64], &[f64]) -> C64,
    ) -> Result<Self> {
        let nxi = dual.node_count();
        let mut values = Vec::with_capacity(grid.len() * nxi);
        let mut x = [0.0f64; 3];
        let dim = grid.spec().chart_dim();
        for i in 0..grid.len() {
            grid.coords_into(i, &mut x);
            for k in 0..nxi {
                let (l, node) = dual.split(k);
                values.push(f(&x[..dim], dual.layer(l).node_param(node)));
            }
        }
        Self::new(grid.clone(), dual.clone(), values)
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn dual(&self) -> &Arc<DualGrid> {
        &self.dual
    }

    pub fn value(&self, xflat: usize, node: usize) -> C64 {
        self.values[xflat * self.dual.node_count() + node]
    }

    /// Repack as a dense operator-valued field (all blocks are 1 x 1).
    pub fn to_field(&self) -> SymbolField {
        let mut field = SymbolField::zeros(&self.grid, &self.dual);
        for x in 0..self.grid.len() {
            for k in 0..self.dual.node_count() {
                field.mat_mut(x, k)[(0, 0)] = self.value(x, k);
            }
        }
        field
    }

    /// Multilinear interpolation of the symbol in `x` at fixed momentum
    /// node, with wrapped axes folded back into the fundamental cell.
    /// Written independently of the grid's own interpolation.
    fn interp_x(&self, x: &[f64], node: usize) -> C64 {
        let dim = self.grid.spec().chart_dim();
        let mut lo = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..dim {
            let ax = self.grid.axis(d);
            let n = ax.len();
            let mut r = (x[d] - ax.node(0)) / ax.step();
            if ax.wrapped() {
                let period = n as f64;
                r -= (r / period).floor() * period;
            } else if r < 0.0 || r > (n - 1) as f64 {
                return C64::new(0.0, 0.0);
            }
            let mut cell = r.floor();
            if !ax.wrapped() && cell as usize >= n - 1 {
                cell = (n - 2) as f64;
            }
            lo[d] = cell as usize;
            frac[d] = r - cell;
        }
        let mut acc = C64::new(0.0, 0.0);
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for d in 0..dim {
                let ax = self.grid.axis(d);
                let up = (corner >> d) & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                let mut idx = lo[d] + usize::from(up);
                if idx >= ax.len() {
                    idx = if ax.wrapped() { idx - ax.len() } else { ax.len() - 1 };
                }
                flat = flat * ax.len() + idx;
            }
            if w != 0.0 {
                acc += self.value(flat, node) * w;
            }
        }
        acc
    }
}

fn tau_factor(tau: TauKind) -> f64 {
    match tau {
        TauKind::Kn => 0.0,
        TauKind::Weyl => 0.5,
        TauKind::Right => 1.0,
    }
}

/// Direct double quadrature of the flat-group quantization formula.
pub fn kn_oracle(
    a: &ScalarSymbol,
    u: &SampledFunction,
    tau: TauKind,
) -> Result<SampledFunction> {
    if u.grid() != a.grid() {
        return Err(Error::GridMismatch(
            "symbol and argument live on different grids".into(),
        ));
    }
    let grid = a.grid();
    let dual = a.dual();
    let dim = grid.spec().chart_dim();
    let n = grid.len();
    let nxi = dual.node_count();
    let layer = dual.layer(0);
    let tf = tau_factor(tau);
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut x = [0.0f64; 3];
    let mut y = [0.0f64; 3];
    let mut mid = [0.0f64; 3];
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        grid.coords_into(i, &mut x);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let uj = u.values()[j];
            if uj == C64::new(0.0, 0.0) {
                continue;
            }
            grid.coords_into(j, &mut y);
            for d in 0..dim {
                mid[d] = x[d] + tf * (y[d] - x[d]);
            }
            let mut xi_acc = C64::new(0.0, 0.0);
            for k in 0..nxi {
                let sample = if tf == 0.0 {
                    a.value(i, k)
                } else if tf == 1.0 {
                    a.value(j, k)
                } else {
                    a.interp_x(&mid[..dim], k)
                };
                if sample == C64::new(0.0, 0.0) {
                    continue;
                }
                let xi = layer.node_param(k);
                let mut dot = 0.0;
                for d in 0..dim {
                    dot += (x[d] - y[d]) * xi[d];
                }
                let phase = C64::new(0.0, two_pi * dot).exp();
                xi_acc += sample * layer.node_weight(k) * phase;
            }
            acc += xi_acc * uj * grid.weight(j);
        }
        *o = acc;
    }
    SampledFunction::new(grid.clone(), out)
}

/// Worst relative L^2 disagreement between the two pipeline application
/// paths and the direct oracle quadrature, on identical grids.
pub fn pipeline_vs_oracle(a: &ScalarSymbol, u: &SampledFunction, tau: TauKind) -> Result<f64> {
    let reference = kn_oracle(a, u, tau)?;
    let scale = reference.norm().max(1e-300);
    let symbol = separable_from_scalar_field(&a.to_field())?;
    let streamed = op_apply(&symbol, tau, u)?;
    let direct = op_apply_direct(&symbol, tau, u)?;
    let r1 = streamed.sub(&reference).norm() / scale;
    let r2 = direct.sub(&reference).norm() / scale;
    Ok(r1.max(r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setup::euclidean_setup;
    use crate::tolerances;

    fn torus(n: usize) -> (Arc<GroupGrid>, Arc<DualGrid>) {
        let s = euclidean_setup(1, 8.0, n, 0).unwrap();
        (s.grid, s.dual)
    }

    /// Deterministic bandlimited profile: a handful of lattice momenta with
    /// fixed amplitudes, so every factor is exactly resolvable on the torus.
    fn bandlimited(
        grid: &Arc<GroupGrid>,
        modes: &[(f64, f64, f64)], // (momentum multiple of 1/16, re, im)
    ) -> SampledFunction {
        SampledFunction::from_fn(grid, |x| {
            let mut acc = C64::new(0.0, 0.0);
            for &(m, re, im) in modes {
                let ph = 2.0 * std::f64::consts::PI * (m / 16.0) * x[0];
                acc += C64::new(re, im) * C64::new(0.0, ph).exp();
            }
            acc
        })
    }

    #[test]
    fn unit_symbol_reproduces_bandlimited_input() {
        let (grid, dual) = torus(128);
        let a = ScalarSymbol::from_fn(&grid, &dual, |_, _| C64::new(1.0, 0.0)).unwrap();
        let u = bandlimited(&grid, &[(3.0, 1.0, 0.2), (-11.0, 0.4, -0.7), (25.0, -0.3, 0.5)]);
        for tau in [TauKind::Kn, TauKind::Weyl, TauKind::Right] {
            let out = kn_oracle(&a, &u, tau).unwrap();
            let r = out.sub(&u).norm() / u.norm();
            assert!(r < tolerances::ORACLE_CLOSED_FORM, "tau {tau:?}: {r:.3e}");
        }
    }

    #[test]
    fn momentum_free_symbol_acts_by_pointwise_multiplication() {
        let (grid, dual) = torus(128);
        let f = bandlimited(&grid, &[(2.0, 0.8, 0.0), (-7.0, 0.0, 0.6)]);
        let fv = f.values().to_vec();
        let nxi = dual.node_count();
        let values: Vec<C64> = (0..grid.len())
            .flat_map(|i| std::iter::repeat(fv[i]).take(nxi))
            .collect();
        let a = ScalarSymbol::new(grid.clone(), dual, values).unwrap();
        let u = bandlimited(&grid, &[(5.0, 1.0, -0.1), (-19.0, 0.3, 0.4)]);
        let expect = SampledFunction::from_fn(&grid, |x| {
            let i = ((x[0] + 8.0) / grid.axis(0).step()).round() as usize % grid.len();
            fv[i]
        });
        let expect: Vec<C64> =
            expect.values().iter().zip(u.values()).map(|(f, u)| f * u).collect();
        let expect = SampledFunction::new(grid.clone(), expect).unwrap();
        let out = kn_oracle(&a, &u, TauKind::Kn).unwrap();
        let r = out.sub(&expect).norm() / expect.norm();
        assert!(r < tolerances::ORACLE_CLOSED_FORM, "{r:.3e}");
    }

    #[test]
    fn position_free_symbol_acts_as_a_fourier_multiplier() {
        let (grid, dual) = torus(128);
        let g = |xi: f64| C64::new((-0.5 * xi * xi).exp(), 0.3 * (xi).sin());
        let a = ScalarSymbol::from_fn(&grid, &dual, |_, xi| g(xi[0])).unwrap();
        let modes = [(4.0, 0.9, 0.1), (-13.0, -0.2, 0.5), (30.0, 0.15, -0.35)];
        let u = bandlimited(&grid, &modes);
        // closed form: each lattice mode is scaled by g at its momentum
        let expect = SampledFunction::from_fn(&grid, |x| {
            let mut acc = C64::new(0.0, 0.0);
            for &(m, re, im) in &modes {
                let xi = m / 16.0;
                let ph = 2.0 * std::f64::consts::PI * xi * x[0];
                acc += g(xi) * C64::new(re, im) * C64::new(0.0, ph).exp();
            }
            acc
        });
        for tau in [TauKind::Kn, TauKind::Weyl, TauKind::Right] {
            let out = kn_oracle(&a, &u, tau).unwrap();
            let r = out.sub(&expect).norm() / expect.norm();
            assert!(r < tolerances::ORACLE_CLOSED_FORM, "tau {tau:?}: {r:.3e}");
        }
    }

    #[test]
    fn modulated_multiplier_obeys_the_modulation_identity() {
        let (grid, dual) = torus(128);
        let xi0 = 6.0 / 16.0; // lattice momentum
        let g = |xi: f64| C64::new((-0.8 * xi * xi).exp(), 0.0);
        let a = ScalarSymbol::from_fn(&grid, &dual, |x, xi| {
            let ph = 2.0 * std::f64::consts::PI * x[0] * xi0;
            C64::new(0.0, ph).exp() * g(xi[0])
        })
        .unwrap();
        let modes = [(5.0, 1.0, 0.0), (-9.0, 0.4, 0.3)];
        let u = bandlimited(&grid, &modes);
        let expect = SampledFunction::from_fn(&grid, |x| {
            let mut acc = C64::new(0.0, 0.0);
            for &(m, re, im) in &modes {
                let xi = m / 16.0;
                let ph = 2.0 * std::f64::consts::PI * xi * x[0];
                acc += g(xi) * C64::new(re, im) * C64::new(0.0, ph).exp();
            }
            let ph0 = 2.0 * std::f64::consts::PI * x[0] * xi0;
            acc * C64::new(0.0, ph0).exp()
        });
        let out = kn_oracle(&a, &u, TauKind::Kn).unwrap();
        let r = out.sub(&expect).norm() / expect.norm();
        assert!(r < tolerances::ORACLE_CLOSED_FORM, "{r:.3e}");
    }

    #[test]
    fn zero_symbol_maps_everything_to_zero() {
        let (grid, dual) = torus(32);
        let a = ScalarSymbol::from_fn(&grid, &dual, |_, _| C64::new(0.0, 0.0)).unwrap();
        let u = bandlimited(&grid, &[(1.0, 1.0, 0.0)]);
        for tau in [TauKind::Kn, TauKind::Weyl, TauKind::Right] {
            assert_eq!(kn_oracle(&a, &u, tau).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn pipeline_agrees_with_the_oracle_on_generic_data() {
        let (grid, dual) = torus(64);
        let a = ScalarSymbol::from_fn(&grid, &dual, |x, xi| {
            let g = (-0.1 * x[0] * x[0] - 0.4 * xi[0] * xi[0]).exp();
            let ph = 0.7 * x[0] + 1.3 * xi[0];
            C64::new(g * ph.cos(), g * ph.sin())
        })
        .unwrap();
        let u = bandlimited(&grid, &[(2.0, 1.0, 0.3), (-5.0, 0.5, -0.2), (9.0, -0.4, 0.1)]);
        for tau in [TauKind::Kn, TauKind::Weyl, TauKind::Right] {
            let r = pipeline_vs_oracle(&a, &u, tau).unwrap();
            assert!(r < tolerances::PIPELINE_VS_ORACLE, "tau {tau:?}: {r:.3e}");
        }
    }

    #[test]
    fn non_flat_groups_are_rejected() {
        let spec = crate::group::GroupSpec::affine();
        let ax = crate::group::Axis::from_lattice(-1.0, 0.5, 5, true, false).unwrap();
        let bx = crate::group::Axis::from_lattice(-1.0, 0.5, 5, false, false).unwrap();
        let grid = Arc::new(GroupGrid::from_axes(spec, vec![ax, bx]).unwrap());
        let dual = Arc::new(crate::dual::affine_dual(-2.0, 0.5, 5).unwrap());
        assert!(ScalarSymbol::new(grid, dual, vec![]).is_err());
    }
}
