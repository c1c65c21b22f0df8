//! Regular representations, the decomposable conjugation of dual fields,
//! and defect measurements for the covariance of the quantization:
//!
//! `Left_z Op(A) Left_z^* = Op[(Left_z (x) ad_{Pi(z)}) A]`.
//!
//! The end-to-end defect factors through three identities, each measurable
//! on its own (useful for attributing discretization error to a stage):
//!
//! 1. `ad_{Left_z} Upsilon(u, v) = Upsilon(Left_z u, Left_z v)`,
//! 2. `(Left_z (x) Left_z) Ct = Ct (Left_z (x) Left_z Right_z)`,
//! 3. `P [Left_z Right_z u] = Pi(z) P[u] Pi(z)^*` node-wise.
//!
//! Identity 2 needs the quantization parameter to commute with conjugation,
//! `tau(z^{-1} w z) = z^{-1} tau(w) z`; this holds for the constant and
//! identity maps on every group and for the square-root map as well, since
//! conjugation is an automorphism and square roots here are unique.
//!
//! Exactness: on wrapped euclidean grids every lattice `z` makes all three
//! factors index permutations and the defects vanish to rounding.  On the
//! other groups the shift-exact sublattice (pure translations in the
//! non-scaling coordinates) keeps the translations and representation
//! kernels exact, while conjugation moves points off the lattice; those
//! defects decay under grid refinement instead.

use crate::dual::{plancherel_forward, rep_action, DualField, DualGrid};
use crate::error::{Error, Result};
use crate::group::SampledFunction;
use crate::quant::{
    c_tau_eval, op_kernel, wig_row, KernelSource, RankOneKernel, SeparableSymbol, TauKind,
};
use num_complex::Complex64 as C64;
use std::sync::Arc;

/// `(Left_z u)(x) = u(z^{-1} x)`.
pub fn left_translate(z: &[f64], u: &SampledFunction) -> SampledFunction {
    let spec = *u.grid().spec();
    let dim = spec.chart_dim();
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let mut buf = [0.0f64; 3];
    SampledFunction::from_fn(u.grid(), |x| {
        spec.multiply_into(&zinv[..dim], x, &mut buf[..dim]);
        u.eval(&buf[..dim])
    })
}

/// `(Right_z u)(x) = Delta(z)^{1/2} u(x z)` (the factor makes it isometric).
pub fn right_translate(z: &[f64], u: &SampledFunction) -> SampledFunction {
    let spec = *u.grid().spec();
    let dim = spec.chart_dim();
    let dz = spec.modular(z).sqrt();
    let mut buf = [0.0f64; 3];
    SampledFunction::from_fn(u.grid(), |x| {
        spec.multiply_into(x, z, &mut buf[..dim]);
        u.eval(&buf[..dim]) * dz
    })
}

/// The composite `Left_z Right_z`: `u -> Delta(z)^{1/2} u(z^{-1} x z)`.
pub fn conjugation_translate(z: &[f64], u: &SampledFunction) -> SampledFunction {
    let spec = *u.grid().spec();
    let dim = spec.chart_dim();
    let dz = spec.modular(z).sqrt();
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let mut t1 = [0.0f64; 3];
    let mut t2 = [0.0f64; 3];
    SampledFunction::from_fn(u.grid(), |x| {
        spec.multiply_into(&zinv[..dim], x, &mut t1[..dim]);
        spec.multiply_into(&t1[..dim], z, &mut t2[..dim]);
        u.eval(&t2[..dim]) * dz
    })
}

/// Node-wise conjugation of a dual field: `G(node) -> Pi(z) G(node) Pi(z)^*`.
///
/// The representation acts by a lattice shift with phases, so both factors
/// are applied vector-wise in `O(n)` per row/column rather than through a
/// dense kernel product: `G Pi(z)^*` row-wise via `conj(pi(conj(row)))`,
/// then `Pi(z) (.)` column-wise.
pub fn ad_dual_field(z: &[f64], f: &DualField) -> DualField {
    let dual = f.dual().clone();
    let mut out = f.clone();
    for flat in 0..dual.node_count() {
        let (l, node) = dual.split(flat);
        let layer = dual.layer(l);
        let act = rep_action(layer, node, z);
        let space = layer.space();
        let n = space.len();
        let m = out.mat_mut(flat);
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = m[(i, j)].conj();
            }
            let r = act.apply(space, &buf);
            for (j, rv) in r.iter().enumerate() {
                m[(i, j)] = rv.conj();
            }
        }
        for j in 0..n {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = m[(i, j)];
            }
            let r = act.apply(space, &buf);
            for (i, rv) in r.iter().enumerate() {
                m[(i, j)] = *rv;
            }
        }
    }
    out
}

/// The symbol-side covariance transform `(Left_z (x) ad_{Pi(z)}) A`,
/// term by term on a separated symbol.
pub fn covariance_symbol(z: &[f64], a: &SeparableSymbol) -> Result<SeparableSymbol> {
    let mut terms = Vec::with_capacity(a.terms());
    for t in 0..a.terms() {
        terms.push((left_translate(z, a.factor(t)), ad_dual_field(z, a.field(t))));
    }
    SeparableSymbol::new(terms)
}

/// Relative Hilbert-Schmidt defect of the covariance relation:
/// kernel of `Left_z Op(A) Left_z^*` (which is `K(z^{-1} x, z^{-1} y)`)
/// against the kernel of the transformed symbol, both evaluated over the
/// grid quadrature.
pub fn covariance_defect(a: &SeparableSymbol, z: &[f64], tau: TauKind) -> Result<f64> {
    if a.norm() <= 0.0 {
        return Err(Error::Degenerate("covariance defect of the zero symbol".into()));
    }
    let lhs = op_kernel(a, tau);
    let a2 = covariance_symbol(z, a)?;
    let rhs = op_kernel(&a2, tau);
    let grid = a.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let n = grid.len();
    let mut x = [0.0f64; 3];
    let mut y = [0.0f64; 3];
    let mut xs = [0.0f64; 3];
    let mut ys = [0.0f64; 3];
    let mut num = 0.0;
    let mut den_l = 0.0;
    let mut den_r = 0.0;
    for i in 0..n {
        grid.coords_into(i, &mut x);
        spec.multiply_into(&zinv[..dim], &x[..dim], &mut xs[..dim]);
        let wi = grid.weight(i);
        for j in 0..n {
            grid.coords_into(j, &mut y);
            spec.multiply_into(&zinv[..dim], &y[..dim], &mut ys[..dim]);
            let l = lhs.eval(&xs[..dim], &ys[..dim]);
            let r = rhs.entry(i, j);
            let w = wi * grid.weight(j);
            num += (l - r).norm_sqr() * w;
            den_l += l.norm_sqr() * w;
            den_r += r.norm_sqr() * w;
        }
    }
    Ok((num / den_l.max(den_r).max(1e-300)).sqrt())
}

/// Covariance of the rank-one inverse transform:
/// `Wig(Left_z u, Left_z v)` against `(Left_z (x) ad_{Pi(z)}) Wig(u, v)`,
/// streamed row by row (the right side needs `Wig(u, v)` at `z^{-1} x`,
/// which the virtual evaluation provides off-grid).
pub fn wigner_covariance_defect(
    u: &SampledFunction,
    v: &SampledFunction,
    z: &[f64],
    tau: TauKind,
    dual: &Arc<DualGrid>,
) -> Result<f64> {
    let lu = left_translate(z, u);
    let lv = left_translate(z, v);
    let k_shift = RankOneKernel::new(&lu, &lv)?;
    let k_base = RankOneKernel::new(u, v)?;
    let grid = u.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let mut x = [0.0f64; 3];
    let mut xs = [0.0f64; 3];
    let mut num = 0.0;
    let mut den = 0.0;
    for xf in 0..grid.len() {
        grid.coords_into(xf, &mut x);
        spec.multiply_into(&zinv[..dim], &x[..dim], &mut xs[..dim]);
        let row_l = wig_row(&k_shift, tau, dual, &x[..dim])?;
        let row_0 = wig_row(&k_base, tau, dual, &xs[..dim])?;
        let row_r = ad_dual_field(z, &row_0);
        let m = grid.weight(xf);
        num += row_l.sub(&row_r).norm().powi(2) * m;
        den += row_l.norm().powi(2) * m;
    }
    Ok((num / den.max(1e-300)).sqrt())
}

/// Factor identity 1: `Upsilon(Left_z u, Left_z v)` against the conjugated
/// rank-one kernel `Upsilon(u, v)(z^{-1} x, z^{-1} y)`.
pub fn upsilon_translation_residual(
    u: &SampledFunction,
    v: &SampledFunction,
    z: &[f64],
) -> Result<f64> {
    let lu = left_translate(z, u);
    let lv = left_translate(z, v);
    let shifted = RankOneKernel::new(&lu, &lv)?;
    let base = RankOneKernel::new(u, v)?;
    let grid = u.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let n = grid.len();
    let mut x = [0.0f64; 3];
    let mut y = [0.0f64; 3];
    let mut xs = [0.0f64; 3];
    let mut ys = [0.0f64; 3];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        grid.coords_into(i, &mut x);
        spec.multiply_into(&zinv[..dim], &x[..dim], &mut xs[..dim]);
        let wi = grid.weight(i);
        for j in 0..n {
            grid.coords_into(j, &mut y);
            spec.multiply_into(&zinv[..dim], &y[..dim], &mut ys[..dim]);
            let l = shifted.entry(i, j);
            let r = base.eval(&xs[..dim], &ys[..dim]);
            let w = wi * grid.weight(j);
            num += (l - r).norm_sqr() * w;
            den += r.norm_sqr() * w;
        }
    }
    Ok((num / den.max(1e-300)).sqrt())
}

/// The second-slot transform of factor identity 2:
/// `k -> Delta(z)^{1/2} k(z^{-1} v, z^{-1} w z)`.
struct ConjugatedKernel<'a> {
    inner: &'a dyn KernelSource,
    z: [f64; 3],
    zinv: [f64; 3],
    dz: f64,
}

impl KernelSource for ConjugatedKernel<'_> {
    fn grid(&self) -> &Arc<crate::group::GroupGrid> {
        self.inner.grid()
    }

    fn eval(&self, v: &[f64], w: &[f64]) -> C64 {
        let spec = *self.inner.grid().spec();
        let dim = spec.chart_dim();
        let mut a = [0.0f64; 3];
        let mut b = [0.0f64; 3];
        let mut c = [0.0f64; 3];
        spec.multiply_into(&self.zinv[..dim], v, &mut a[..dim]);
        spec.multiply_into(&self.zinv[..dim], w, &mut b[..dim]);
        spec.multiply_into(&b[..dim], &self.z[..dim], &mut c[..dim]);
        self.inner.eval(&a[..dim], &c[..dim]) * self.dz
    }
}

/// Factor identity 2: `(Left_z (x) Left_z) Ct k` against
/// `Ct [(Left_z (x) Left_z Right_z) k]`, relative to `||Ct k||`.
pub fn c_tau_translation_residual(k: &dyn KernelSource, tau: TauKind, z: &[f64]) -> f64 {
    let grid = k.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let mut zbuf = [0.0f64; 3];
    zbuf[..dim].copy_from_slice(z);
    let mut zinv = [0.0f64; 3];
    spec.inverse_into(z, &mut zinv[..dim]);
    let conj = ConjugatedKernel { inner: k, z: zbuf, zinv, dz: spec.modular(z).sqrt() };
    let n = grid.len();
    let mut x = [0.0f64; 3];
    let mut y = [0.0f64; 3];
    let mut xs = [0.0f64; 3];
    let mut ys = [0.0f64; 3];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        grid.coords_into(i, &mut x);
        spec.multiply_into(&zinv[..dim], &x[..dim], &mut xs[..dim]);
        let wi = grid.weight(i);
        for j in 0..n {
            grid.coords_into(j, &mut y);
            spec.multiply_into(&zinv[..dim], &y[..dim], &mut ys[..dim]);
            let lhs = c_tau_eval(k, tau, &xs[..dim], &ys[..dim]);
            let rhs = c_tau_eval(&conj, tau, &x[..dim], &y[..dim]);
            let base = c_tau_eval(k, tau, &x[..dim], &y[..dim]);
            let w = wi * grid.weight(j);
            num += (lhs - rhs).norm_sqr() * w;
            den += base.norm_sqr() * w;
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// Factor identity 3: `P[Left_z Right_z u]` against `Pi(z) P[u] Pi(z)^*`,
/// relative to `||P[u]||`.
pub fn plancherel_conjugation_residual(
    u: &SampledFunction,
    z: &[f64],
    dual: &Arc<DualGrid>,
) -> Result<f64> {
    let lhs = plancherel_forward(&conjugation_translate(z, u), dual)?;
    let base = plancherel_forward(u, dual)?;
    let rhs = ad_dual_field(z, &base);
    Ok(lhs.sub(&rhs).norm() / base.norm().max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::CMatrix;
    use crate::dual::{affine_dual, euclidean_dual, plancherel_forward};
    use crate::group::{AxisSpec, GroupGrid, GroupSpec};
    use crate::quant::TauKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclid_setup(n: usize) -> (Arc<GroupGrid>, Arc<DualGrid>) {
        let spec = GroupSpec::euclidean(1).unwrap();
        let grid = Arc::new(GroupGrid::new(spec, &[AxisSpec::linear(-4.0, 4.0, n)]).unwrap());
        let dual = Arc::new(euclidean_dual(&grid).unwrap());
        (grid, dual)
    }

    fn random_function(grid: &Arc<GroupGrid>, seed: u64) -> SampledFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        SampledFunction::new(grid.clone(), values).unwrap()
    }

    fn random_symbol(
        grid: &Arc<GroupGrid>,
        dual: &Arc<DualGrid>,
        seed: u64,
        terms: usize,
    ) -> SeparableSymbol {
        let mut pairs = Vec::new();
        for t in 0..terms {
            let f = random_function(grid, seed + 2 * t as u64);
            let g = random_function(grid, seed + 2 * t as u64 + 1);
            let field = plancherel_forward(&g, dual).unwrap();
            pairs.push((f, field));
        }
        SeparableSymbol::new(pairs).unwrap()
    }

    /// Affine grid whose log-a axis is a lattice through 0 and a matching
    /// two-sided dual lattice.
    fn affine_setup() -> (Arc<GroupGrid>, Arc<DualGrid>) {
        use crate::group::Axis;
        let spec = GroupSpec::affine();
        let ht = 0.25;
        let na = 17;
        let hb = 0.25;
        let a_axis = Axis::from_lattice(-(((na - 1) / 2) as f64) * ht, ht, na, true, false).unwrap();
        let b_axis = Axis::from_lattice(-2.0, hb, 17, false, false).unwrap();
        let grid = Arc::new(GroupGrid::from_axes(spec, vec![a_axis, b_axis]).unwrap());
        // Matched dual window: the wave scale step equals the log-a step,
        // the top sits at the b-axis Nyquist edge, and the bottom cuts off
        // at a small reference scale.
        let s_min: f64 = 0.005;
        let t_max = (1.0 / (2.0 * hb)).ln() - 0.5 * ht;
        let t0 = s_min.ln();
        let nt = ((t_max - t0) / ht).ceil() as usize + 1;
        let dual = Arc::new(affine_dual(t0, ht, nt).unwrap());
        (grid, dual)
    }

    #[test]
    fn translations_at_the_identity_do_nothing() {
        let (grid, _) = euclid_setup(16);
        let u = random_function(&grid, 1);
        let e = grid.spec().identity();
        for w in [left_translate(&e, &u), right_translate(&e, &u)] {
            assert!(w.sub(&u).norm() < 1e-13);
        }
    }

    #[test]
    fn left_translations_compose_on_the_torus() {
        let (grid, _) = euclid_setup(16);
        let u = random_function(&grid, 2);
        let z1 = [1.0];
        let z2 = [-2.5];
        let z12 = grid.spec().multiply(&z1, &z2);
        let a = left_translate(&z1, &left_translate(&z2, &u));
        let b = left_translate(&z12, &u);
        assert!(a.sub(&b).norm() < 1e-12);
    }

    #[test]
    fn right_translation_is_isometric_on_interior_support() {
        // Support the function away from the a-boundary so the log-shift
        // stays inside the grid.
        let (grid, _) = affine_setup();
        let mut u = SampledFunction::zeros(&grid);
        let na = grid.axis(0).len();
        let nb = grid.axis(1).len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ia in 4..na - 4 {
            for ib in 4..nb - 4 {
                u.values_mut()[ia * nb + ib] =
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        // z = (e^{2 ht}, 0): exact two-step shift on the log-a lattice.
        let z = [(2.0f64 * 0.25).exp(), 0.0];
        let ru = right_translate(&z, &u);
        assert!((ru.norm() - u.norm()).abs() < 1e-10 * u.norm());
        // And left translation by a pure b-shift is exact and isometric.
        let zb = [1.0, 0.5];
        let lu = left_translate(&zb, &u);
        assert!((lu.norm() - u.norm()).abs() < 1e-10 * u.norm());
    }

    #[test]
    fn ad_is_trivial_on_scalar_characters_and_at_the_identity() {
        let (grid, dual) = euclid_setup(12);
        let g = plancherel_forward(&random_function(&grid, 4), &dual).unwrap();
        let conj = ad_dual_field(&[1.5], &g);
        assert!(conj.sub(&g).norm() < 1e-12 * g.norm());
        let (agrid, adual) = affine_setup();
        let ag = plancherel_forward(&random_function(&agrid, 5), &adual).unwrap();
        let e = agrid.spec().identity();
        let conj_e = ad_dual_field(&e, &ag);
        assert!(conj_e.sub(&ag).norm() < 1e-12 * ag.norm());
    }

    #[test]
    fn ad_scales_the_positive_weight_operator_by_inverse_modular() {
        // Conjugating the multiplication operator D by a representation
        // kernel of a lattice scaling multiplies it by Delta(z)^{-1}.
        let (grid, dual) = affine_setup();
        let mut field = DualField::zeros(&grid, &dual);
        for flat in 0..dual.node_count() {
            let (l, _) = dual.split(flat);
            let layer = dual.layer(l);
            let space = layer.space();
            let dvals: Vec<C64> = space
                .dsqrt()
                .iter()
                .map(|d| C64::new(d * d, 0.0))
                .collect();
            *field.mat_mut(flat) = CMatrix::diag_kernel(&dvals, space.weights());
        }
        let z = [(0.25f64 * 3.0).exp(), 0.0];
        let dz = grid.spec().modular(&z);
        let conj = ad_dual_field(&z, &field);
        let mut checked = 0;
        for flat in 0..dual.node_count() {
            let (l, _) = dual.split(flat);
            let space = dual.layer(l).space();
            let nt = space.len();
            for i in 0..nt {
                let got = conj.mat(flat)[(i, i)];
                if got.norm() == 0.0 {
                    continue; // row truncated by the lattice shift
                }
                let want = field.mat(flat)[(i, i)] / dz;
                assert!((got - want).norm() < 1e-10 * want.norm());
                checked += 1;
            }
        }
        assert!(checked > dual.node_count() * 5);
    }

    #[test]
    fn covariance_defect_vanishes_on_the_torus_for_all_tau() {
        let (grid, dual) = euclid_setup(12);
        let a = random_symbol(&grid, &dual, 6, 2);
        let z = [2.0]; // lattice vector: h = 8/12 = 2/3, z = 3h
        for tau in [TauKind::Kn, TauKind::Right, TauKind::Weyl] {
            let d = covariance_defect(&a, &z, tau).unwrap();
            assert!(d < 1e-11, "{}: {d}", tau.label());
        }
    }

    #[test]
    fn wigner_covariance_defect_vanishes_on_the_torus() {
        let (grid, dual) = euclid_setup(12);
        let u = random_function(&grid, 7);
        let v = random_function(&grid, 8);
        let z = [-2.0 / 3.0];
        for tau in [TauKind::Kn, TauKind::Right, TauKind::Weyl] {
            let d = wigner_covariance_defect(&u, &v, &z, tau, &dual).unwrap();
            assert!(d < 1e-11, "{}: {d}", tau.label());
        }
    }

    #[test]
    fn factor_identities_vanish_on_the_torus() {
        let (grid, dual) = euclid_setup(12);
        let u = random_function(&grid, 9);
        let v = random_function(&grid, 10);
        let z = [2.0 / 3.0];
        assert!(upsilon_translation_residual(&u, &v, &z).unwrap() < 1e-12);
        let k = RankOneKernel::new(&u, &v).unwrap();
        for tau in [TauKind::Kn, TauKind::Right, TauKind::Weyl] {
            let r = c_tau_translation_residual(&k, tau, &z);
            assert!(r < 1e-11, "{}: {r}", tau.label());
        }
        assert!(plancherel_conjugation_residual(&u, &z, &dual).unwrap() < 1e-11);
    }

    #[test]
    fn affine_defects_are_finite_and_small_at_modest_resolution() {
        // Pure b-translations keep the group-side shift and the
        // representation kernels exact; the remaining error comes from
        // interpolating at conjugated points and decays under refinement.
        let (grid, dual) = affine_setup();
        let sigma = 0.55f64;
        let u = SampledFunction::from_fn(&grid, |x| {
            let la = x[0].ln();
            C64::new((-(la * la + x[1] * x[1]) / (2.0 * sigma * sigma)).exp(), 0.0)
        });
        let v = SampledFunction::from_fn(&grid, |x| {
            let la = x[0].ln();
            C64::new(
                (-(la * la + x[1] * x[1]) / (2.0 * sigma * sigma)).exp() * (1.2 * x[1]).cos(),
                0.1 * (-(la * la + x[1] * x[1])).exp(),
            )
        });
        let z = [1.0, 0.5];
        let d = wigner_covariance_defect(&u, &v, &z, TauKind::Kn, &dual).unwrap();
        assert!(d.is_finite() && d < 0.2, "{d}");
        assert!(upsilon_translation_residual(&u, &v, &z).unwrap() < 1e-10);
        let r3 = plancherel_conjugation_residual(&u, &z, &dual).unwrap();
        assert!(r3.is_finite() && r3 < 0.2, "{r3}");
    }
}
