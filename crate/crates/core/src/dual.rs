//! The unitary dual at quadrature scale.
//!
//! Each group decomposes into *layers* of irreducible representations:
//!
//! * `euclidean(n)` — one layer of characters `pi_xi(x) = e^{-2 pi i x.xi}`
//!   on the reciprocal lattice of the spatial grid (flat measure, trivial
//!   Duflo-Moore operator).
//! * `affine` — two atoms `wave(+)`, `wave(-)`: `pi_{+/-}` acts on
//!   `L^2(R_{+/-}, ds)` by `[pi(a,b) phi](s) = a^{1/2} e^{2 pi i b s} phi(a s)`,
//!   realized on a logarithmic lattice `s = sign e^t`.  The Duflo-Moore
//!   operator is multiplication by `|s|`; both atoms carry unit mass.
//! * `affine_line` — the affine atoms tensored with line characters
//!   `e^{-2 pi i c zeta}` on the reciprocal lattice of the `c`-axis.
//! * `bianchi(W)` — one layer of orbit representations
//!   `[pi_sigma(v; c) phi](t) = e^{i sigma . e^{-tM} v} phi(t - c)` on
//!   `L^2(R, dt)`, indexed by a cross-section `lambda -> sigma(lambda)` of
//!   the coadjoint flow `sigma(t) = e^{-t M^T} sigma_0`.  The Duflo-Moore
//!   operator is multiplication by `e^{-t tr M}`, and the layer measure is
//!   `kappa gamma(lambda) d lambda` with the section density
//!   `gamma(lambda) = |det[sigma_0'(lambda), M^T sigma_0(lambda)]|`.
//!
//! The forward transform maps `f` to the operator field
//! `f^(node) = pi_node(f) D^{1/2}`; the inverse implemented here is the exact
//! adjoint of the discretized forward map, which coincides with quadrature of
//! `f(x) = sum_node w_node Tr(f^(node) D^{1/2} pi_node(x)^*)`.

use crate::cmatrix::CMatrix;
use crate::error::{Error, Result};
use crate::group::{Axis, BianchiFamily, GroupGrid, GroupKind, GroupSpec, SampledFunction};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::sync::Arc;

const TWO_PI: f64 = 2.0 * PI;
/// Tolerance (in lattice steps) for recognizing lattice-exact shifts.
const SHIFT_TOL: f64 = 1e-9;

#[inline]
fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

/// The Hilbert space carrying one layer of representations, realized on a
/// uniform one-dimensional lattice (a single point for character layers).
#[derive(Clone, Debug, PartialEq)]
pub struct RepSpace {
    /// Uniform coordinate of node 0.
    t0: f64,
    /// Uniform step.
    ht: f64,
    /// Chart coordinate per node: `s = sign e^t` on wave layers, `t` elsewhere.
    coord: Vec<f64>,
    /// Quadrature weights of the representation-space inner product.
    weights: Vec<f64>,
    /// Diagonal of `D^{1/2}` (square root of the Duflo-Moore operator).
    dsqrt: Vec<f64>,
}

impl RepSpace {
    /// One-dimensional space of a character layer.
    pub fn point() -> Self {
        Self { t0: 0.0, ht: 1.0, coord: vec![0.0], weights: vec![1.0], dsqrt: vec![1.0] }
    }

    /// `L^2(R_sign, ds)` on the lattice `s = sign e^{t0 + k ht}`; `D = |s|`.
    pub fn half_line(sign: f64, t0: f64, ht: f64, n: usize) -> Result<Self> {
        if n == 0 || ht <= 0.0 || !t0.is_finite() || sign.abs() != 1.0 {
            return Err(Error::InvalidGrid("invalid half-line representation lattice".into()));
        }
        let t = |k: usize| t0 + k as f64 * ht;
        Ok(Self {
            t0,
            ht,
            coord: (0..n).map(|k| sign * t(k).exp()).collect(),
            weights: (0..n).map(|k| t(k).exp() * ht).collect(),
            dsqrt: (0..n).map(|k| (0.5 * t(k)).exp()).collect(),
        })
    }

    /// `L^2(R, dt)` on the lattice `t0 + k ht`; `D = e^{-theta t}`.
    pub fn line(theta: f64, t0: f64, ht: f64, n: usize) -> Result<Self> {
        if n == 0 || ht <= 0.0 || !t0.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidGrid("invalid line representation lattice".into()));
        }
        let t = |k: usize| t0 + k as f64 * ht;
        Ok(Self {
            t0,
            ht,
            coord: (0..n).map(t).collect(),
            weights: vec![ht; n],
            dsqrt: (0..n).map(|k| (-0.5 * theta * t(k)).exp()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.coord.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coord.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.ht
    }

    /// Uniform coordinate of node `k`.
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.ht
    }

    /// Chart coordinate per node (`s` on wave layers, `t` elsewhere).
    pub fn coord(&self) -> &[f64] {
        &self.coord
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Diagonal of `D^{1/2}` at the nodes.
    pub fn dsqrt(&self) -> &[f64] {
        &self.dsqrt
    }

    /// Split a uniform shift into `(whole steps, fractional step)`, snapping
    /// near-integer shifts to exact lattice moves.
    fn shift_parts(&self, shift_u: f64) -> (i64, f64) {
        let r = shift_u / self.ht;
        let mut base = r.floor();
        let mut frac = r - base;
        if frac > 1.0 - SHIFT_TOL {
            base += 1.0;
            frac = 0.0;
        } else if frac < SHIFT_TOL {
            frac = 0.0;
        }
        (base as i64, frac)
    }

    /// Whole-step count when the shift is lattice-exact.
    pub fn exact_steps(&self, shift_u: f64) -> Option<i64> {
        let (base, frac) = self.shift_parts(shift_u);
        (frac == 0.0).then_some(base)
    }
}

/// What kind of representations a layer carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerKind {
    /// Characters of `euclidean(n)`; node parameter is `xi`.
    EuclidChar,
    /// One wave atom of the affine group (`sign = +/-1`); no node parameter.
    AffineWave { sign: f64 },
    /// Wave atom tensored with a line character; node parameter is `zeta`.
    AffineLineWave { sign: f64 },
    /// Orbit representations of a bianchi family; node parameters are
    /// `(component, lambda)` reduced to `[lambda]` when there is one component.
    BianchiOrbit { family: BianchiFamily },
}

/// One layer of the dual: a representation family over parameter nodes with
/// quadrature masses for the layer measure.
#[derive(Clone, Debug)]
pub struct Layer {
    label: String,
    kind: LayerKind,
    kappa: f64,
    space: Arc<RepSpace>,
    param_dim: usize,
    /// Flattened node parameters (`param_dim` values per node).
    params: Vec<f64>,
    /// Plancherel mass per node.
    node_weights: Vec<f64>,
    /// Bianchi layers: `sigma(lambda)` per node.
    sigmas: Vec<[f64; 2]>,
    /// Bianchi layers: flow `e^{-t_i M^T} sigma` per `(node, i)`, node-major.
    sigma_flow: Vec<[f64; 2]>,
    /// Bianchi layers: rows whose flowed frequency the paired lattice can
    /// resolve (empty means every row is live).  Anisotropic flows (families
    /// IV, VI, VII) push some `(node, t)` rows past the lattice Nyquist
    /// limit; such rows would only read aliased mass, so the transforms
    /// skip them on both the forward and the inverse side.
    row_live: Vec<bool>,
}

impl Layer {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    /// Layer normalization constant in the Plancherel measure.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn space(&self) -> &Arc<RepSpace> {
        &self.space
    }

    pub fn node_count(&self) -> usize {
        self.node_weights.len()
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn node_param(&self, node: usize) -> &[f64] {
        &self.params[node * self.param_dim..(node + 1) * self.param_dim]
    }

    /// Plancherel mass of a node.
    pub fn node_weight(&self, node: usize) -> f64 {
        self.node_weights[node]
    }

    /// `sigma(lambda)` for bianchi layers.
    /// Whether the transforms keep row `i` of `node` (see `row_live`).
    pub fn row_is_live(&self, node: usize, i: usize) -> bool {
        self.row_live.is_empty() || self.row_live[node * self.space.len() + i]
    }

    pub fn sigma(&self, node: usize) -> Option<[f64; 2]> {
        self.sigmas.get(node).copied()
    }
}

/// The discretized unitary dual of a group: a list of layers.
#[derive(Clone, Debug)]
pub struct DualGrid {
    spec: GroupSpec,
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    total: usize,
}

impl DualGrid {
    fn assemble(spec: GroupSpec, layers: Vec<Layer>) -> Self {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.node_count();
        }
        Self { spec, layers, offsets, total }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    /// Total number of dual nodes across layers.
    pub fn node_count(&self) -> usize {
        self.total
    }

    /// Flat node index -> (layer, node-in-layer).
    pub fn split(&self, flat: usize) -> (usize, usize) {
        let l = match self.offsets.binary_search(&flat) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (l, flat - self.offsets[l])
    }

    pub fn flat(&self, layer: usize, node: usize) -> usize {
        self.offsets[layer] + node
    }

    pub fn node_weight(&self, flat: usize) -> f64 {
        let (l, n) = self.split(flat);
        self.layers[l].node_weight(n)
    }

    /// Residual of the Duflo-Moore semi-invariance
    /// `pi(z) D pi(z)^* = Delta(z)^{-1} D` on the block of lattice rows that
    /// the (lattice-exact) shift of `z` keeps inside the truncation.
    pub fn semi_invariance_residual(&self, layer: usize, node: usize, z: &[f64]) -> Result<f64> {
        let lay = &self.layers[layer];
        let space = lay.space();
        let act = rep_action(lay, node, z);
        let steps = space.exact_steps(act.shift_u).ok_or_else(|| {
            Error::Unsupported(format!(
                "shift {} is not lattice-exact for step {}",
                act.shift_u,
                space.step()
            ))
        })?;
        let n = space.len();
        let w = space.weights();
        let dfull: Vec<C64> =
            space.dsqrt().iter().map(|d| C64::new(d * d, 0.0)).collect();
        let dker = CMatrix::diag_kernel(&dfull, w);
        let k = act.kernel(space);
        let lhs = k.compose_weighted(&dker, w).compose_weighted(&k.adjoint(), w);
        let delta_inv = 1.0 / self.spec.modular(z);
        let inside = |i: usize| {
            let j = i as i64 + steps;
            j >= 0 && (j as usize) < n
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            if !inside(i) {
                continue;
            }
            for j in 0..n {
                if !inside(j) {
                    continue;
                }
                let rhs = if i == j { dfull[i] * delta_inv / w[i] } else { C64::new(0.0, 0.0) };
                num += w[i] * w[j] * (lhs[(i, j)] - rhs).norm_sqr();
                den += w[i] * w[j] * rhs.norm_sqr();
            }
        }
        if den == 0.0 {
            return Err(Error::Degenerate("semi-invariance block is empty".into()));
        }
        Ok((num / den).sqrt())
    }
}

/// The action of one group element in one representation: a scale, a uniform
/// lattice shift, and per-row phases:
/// `[pi(x) phi](t_i) = scale * phases[i] * phi(t_i + shift_u)`.
#[derive(Clone, Debug)]
pub struct RepAction {
    pub scale: f64,
    pub shift_u: f64,
    pub phases: Vec<C64>,
}

#[inline]
fn layer_scale_shift(kind: &LayerKind, x: &[f64]) -> (f64, f64) {
    match kind {
        LayerKind::EuclidChar => (1.0, 0.0),
        LayerKind::AffineWave { .. } | LayerKind::AffineLineWave { .. } => (x[0].sqrt(), x[0].ln()),
        LayerKind::BianchiOrbit { .. } => (1.0, -x[2]),
    }
}

#[inline]
fn layer_phase(layer: &Layer, node: usize, i: usize, x: &[f64]) -> C64 {
    match layer.kind {
        LayerKind::EuclidChar => {
            let xi = layer.node_param(node);
            let dot: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
            cis(-TWO_PI * dot)
        }
        LayerKind::AffineWave { .. } => cis(TWO_PI * x[1] * layer.space.coord[i]),
        LayerKind::AffineLineWave { .. } => {
            let zeta = layer.node_param(node)[0];
            cis(TWO_PI * (x[1] * layer.space.coord[i] - x[2] * zeta))
        }
        LayerKind::BianchiOrbit { .. } => {
            let s = layer.sigma_flow[node * layer.space.len() + i];
            cis(s[0] * x[0] + s[1] * x[1])
        }
    }
}

/// The action of `pi_node(x)` on the layer's representation space.
pub fn rep_action(layer: &Layer, node: usize, x: &[f64]) -> RepAction {
    let (scale, shift_u) = layer_scale_shift(&layer.kind, x);
    let phases = (0..layer.space.len()).map(|i| layer_phase(layer, node, i, x)).collect();
    RepAction { scale, shift_u, phases }
}

impl RepAction {
    /// Materialize the action as a kernel on the representation lattice
    /// (zero extension outside the truncation).
    pub fn kernel(&self, space: &RepSpace) -> CMatrix {
        let n = space.len();
        let w = space.weights();
        let (base, frac) = space.shift_parts(self.shift_u);
        let mut k = CMatrix::zeros(n, n);
        for i in 0..n {
            let c = self.phases[i] * self.scale;
            let j0 = i as i64 + base;
            if frac == 0.0 {
                if j0 >= 0 && (j0 as usize) < n {
                    let j = j0 as usize;
                    k[(i, j)] += c / w[j];
                }
            } else {
                for (dj, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                    let j = j0 + dj;
                    if j >= 0 && (j as usize) < n {
                        let j = j as usize;
                        k[(i, j)] += c * wt / w[j];
                    }
                }
            }
        }
        k
    }

    /// Apply the action to a vector tabulated on the representation lattice.
    pub fn apply(&self, space: &RepSpace, phi: &[C64]) -> Vec<C64> {
        let n = space.len();
        let (base, frac) = space.shift_parts(self.shift_u);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            let j0 = i as i64 + base;
            let mut v = C64::new(0.0, 0.0);
            if frac == 0.0 {
                if j0 >= 0 && (j0 as usize) < n {
                    v = phi[j0 as usize];
                }
            } else {
                for (dj, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                    let j = j0 + dj;
                    if j >= 0 && (j as usize) < n {
                        v += phi[j as usize] * wt;
                    }
                }
            }
            *o = v * self.phases[i] * self.scale;
        }
        out
    }
}

/// `pi_node(x)` as a kernel matrix.
pub fn rep_kernel(layer: &Layer, node: usize, x: &[f64]) -> CMatrix {
    rep_action(layer, node, x).kernel(layer.space())
}

/// Build the dual of a euclidean grid: the reciprocal lattice with
/// `d xi = 1/(n h)` per axis, enumerated row-major like the grid.
pub fn euclidean_dual(grid: &GroupGrid) -> Result<DualGrid> {
    let spec = *grid.spec();
    let GroupKind::Euclidean(dim) = spec.kind() else {
        return Err(Error::InvalidSpec(format!("{} is not euclidean", spec.label())));
    };
    let mut axis_freqs: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut dxi_total = 1.0;
    for d in 0..dim {
        let ax = grid.axis(d);
        let n = ax.len();
        let dxi = 1.0 / (n as f64 * ax.step());
        dxi_total *= dxi;
        let k0 = (n / 2) as i64;
        axis_freqs.push((0..n).map(|k| (k as i64 - k0) as f64 * dxi).collect());
    }
    let count: usize = axis_freqs.iter().map(|v| v.len()).product();
    let mut params = Vec::with_capacity(count * dim);
    for flat in 0..count {
        let mut rem = flat;
        let mut idx = [0usize; 3];
        for d in (0..dim).rev() {
            idx[d] = rem % axis_freqs[d].len();
            rem /= axis_freqs[d].len();
        }
        for d in 0..dim {
            params.push(axis_freqs[d][idx[d]]);
        }
    }
    let layer = Layer {
        label: "characters".into(),
        kind: LayerKind::EuclidChar,
        kappa: 1.0,
        space: Arc::new(RepSpace::point()),
        param_dim: dim,
        params,
        node_weights: vec![dxi_total; count],
        sigmas: Vec::new(),
        sigma_flow: Vec::new(),
        row_live: Vec::new(),
    };
    Ok(DualGrid::assemble(spec, vec![layer]))
}

/// Build the affine dual: two wave atoms of unit mass on the lattice
/// `s = +/- e^{t0 + k ht}`.
pub fn affine_dual(t0: f64, ht: f64, nt: usize) -> Result<DualGrid> {
    let spec = GroupSpec::affine();
    let mut layers = Vec::new();
    for sign in [1.0, -1.0] {
        layers.push(Layer {
            label: format!("wave({})", if sign > 0.0 { "+" } else { "-" }),
            kind: LayerKind::AffineWave { sign },
            kappa: 1.0,
            space: Arc::new(RepSpace::half_line(sign, t0, ht, nt)?),
            param_dim: 0,
            params: Vec::new(),
            node_weights: vec![1.0],
            sigmas: Vec::new(),
            sigma_flow: Vec::new(),
            row_live: Vec::new(),
        });
    }
    Ok(DualGrid::assemble(spec, layers))
}

/// Build the affine_line dual: wave atoms tensored with the reciprocal
/// lattice of the given `c`-axis.
pub fn affine_line_dual(t0: f64, ht: f64, nt: usize, c_axis: &Axis) -> Result<DualGrid> {
    let spec = GroupSpec::affine_line();
    let nc = c_axis.len();
    let dzeta = 1.0 / (nc as f64 * c_axis.step());
    let k0 = (nc / 2) as i64;
    let zetas: Vec<f64> = (0..nc).map(|k| (k as i64 - k0) as f64 * dzeta).collect();
    let mut layers = Vec::new();
    for sign in [1.0, -1.0] {
        layers.push(Layer {
            label: format!("wave({})xline", if sign > 0.0 { "+" } else { "-" }),
            kind: LayerKind::AffineLineWave { sign },
            kappa: 1.0,
            space: Arc::new(RepSpace::half_line(sign, t0, ht, nt)?),
            param_dim: 1,
            params: zetas.clone(),
            node_weights: vec![dzeta; nc],
            sigmas: Vec::new(),
            sigma_flow: Vec::new(),
            row_live: Vec::new(),
        });
    }
    Ok(DualGrid::assemble(spec, layers))
}

/// Cross-section point `sigma_0(lambda)` and density `gamma(lambda)` for a
/// bianchi family.  Components: `0` except for family VI, whose four open
/// quadrants are components `1..=4` with `gamma = |q|^(component mod 2)`.
pub fn cross_section(family: BianchiFamily, component: usize, lambda: f64) -> Result<([f64; 2], f64)> {
    match family {
        BianchiFamily::Four => {
            if component != 0 || lambda == 0.0 {
                return Err(Error::InvalidSpec("family IV section needs component 0, lambda != 0".into()));
            }
            let g = lambda.signum() * (lambda * lambda + 2.0 * lambda.abs()).sqrt();
            Ok(([0.0, g], 1.0 + lambda.abs()))
        }
        BianchiFamily::Five => {
            if component != 0 {
                return Err(Error::InvalidSpec("family V section has one component".into()));
            }
            let ang = TWO_PI * lambda;
            Ok(([ang.cos(), ang.sin()], 1.0))
        }
        BianchiFamily::Six { q } => {
            if !(1..=4).contains(&component) || lambda <= 0.0 {
                return Err(Error::InvalidSpec(
                    "family VI section needs component 1..=4 and lambda > 0".into(),
                ));
            }
            let (sigma, gamma) = match component {
                1 => ([lambda, 1.0], q.abs()),
                2 => ([-1.0, lambda], 1.0),
                3 => ([-lambda, -1.0], q.abs()),
                _ => ([1.0, -lambda], 1.0),
            };
            Ok((sigma, gamma))
        }
        BianchiFamily::Seven { p } => {
            if component != 0 || lambda < 1.0 || lambda >= (TWO_PI * p).exp() * (1.0 + 1e-12) {
                return Err(Error::InvalidSpec(
                    "family VII section needs component 0 and lambda in [1, e^{2 pi p})".into(),
                ));
            }
            Ok(([lambda, 0.0], lambda))
        }
    }
}

/// Orbit coordinates of a dual-plane point under the coadjoint flow
/// `sigma(t) = e^{-t M^T} sigma_0`: the section component, the section
/// parameter of the orbit, and the flow time from the section to the point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitCoords {
    pub component: usize,
    pub lambda: f64,
    pub time: f64,
}

/// Invert the section parametrization: which orbit passes through `sigma`,
/// and at what flow time.  Returns `None` off the generic set.
pub fn orbit_coordinates(family: BianchiFamily, sigma: [f64; 2]) -> Option<OrbitCoords> {
    let [x, y] = sigma;
    match family {
        BianchiFamily::Four => {
            if y == 0.0 {
                return None;
            }
            let time = -x / y;
            let g = y * time.exp();
            let lambda = g.signum() * ((1.0 + g * g).sqrt() - 1.0);
            Some(OrbitCoords { component: 0, lambda, time })
        }
        BianchiFamily::Five => {
            let r = x.hypot(y);
            if r == 0.0 {
                return None;
            }
            let lambda = (y.atan2(x) / TWO_PI).rem_euclid(1.0);
            Some(OrbitCoords { component: 0, lambda, time: -r.ln() })
        }
        BianchiFamily::Six { q } => {
            if x == 0.0 || y == 0.0 {
                return None;
            }
            let (component, time, lambda) = match (x > 0.0, y > 0.0) {
                (true, true) => (1, y.ln() / q, x * (y.ln() / q).exp()),
                (false, true) => (2, -(-x).ln(), y * (-x).powf(q)),
                (false, false) => (3, (-y).ln() / q, -x * ((-y).ln() / q).exp()),
                (true, false) => (4, -x.ln(), -y * x.powf(q)),
            };
            Some(OrbitCoords { component, lambda, time })
        }
        BianchiFamily::Seven { p } => {
            let r = x.hypot(y);
            if r == 0.0 {
                return None;
            }
            let theta = y.atan2(x);
            let period = TWO_PI * p;
            let u = r.ln() + p * theta;
            let k = (-u / period).ceil();
            let mut lam_ln = u + period * k;
            let mut kk = k;
            if lam_ln >= period {
                lam_ln -= period;
                kk -= 1.0;
            }
            if lam_ln < 0.0 {
                lam_ln += period;
                kk += 1.0;
            }
            Some(OrbitCoords { component: 0, lambda: lam_ln.exp(), time: theta + TWO_PI * kk })
        }
    }
}

/// Parameters for a bianchi dual layer.
#[derive(Clone, Copy, Debug)]
pub struct BianchiDualSpec {
    /// Lattice data of the representation space `L^2(R, dt)`.
    pub t0: f64,
    pub ht: f64,
    pub nt: usize,
    /// Section nodes per component.
    pub lambda_count: usize,
    /// Section extent: families IV (`[-extent, extent]`) and VI
    /// (`(0, extent]` per quadrant).  Ignored for V (full circle) and VII
    /// (one fundamental annulus `[1, e^{2 pi p}]`).
    pub lambda_extent: f64,
    /// Families IV and VI only: when positive, section nodes are placed as
    /// log-spaced cell midpoints on `[lambda_min, lambda_extent]` (per sign
    /// for IV, per component for VI) instead of uniformly.  The hyperbolic
    /// flows of these families stretch the section coordinate
    /// exponentially in flow time, so resolving a fixed spectral window
    /// needs several decades of `lambda`; log placement covers them with a
    /// bounded node count.  Zero keeps the uniform law.
    pub lambda_min: f64,
    /// Steps of the spatial `v`-lattice this dual will pair with.  When
    /// positive, `(node, t)` rows whose flowed frequency exceeds the
    /// lattice Nyquist limit `pi / step` are dropped from the transforms
    /// (they would only read aliased mass).  Zero disables the mask.
    pub v_step: [f64; 2],
}

/// Log-spaced quadrature cells on `[lo, hi]`: geometric cell midpoints with
/// exact cell widths.
fn log_cells(lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi <= lo || n == 0 {
        return Err(Error::InvalidGrid("log section needs 0 < min < extent and nodes".into()));
    }
    let dlog = (hi / lo).ln() / n as f64;
    Ok((0..n)
        .map(|k| {
            let a = lo * (k as f64 * dlog).exp();
            let b = lo * ((k as f64 + 1.0) * dlog).exp();
            ((a * b).sqrt(), b - a)
        })
        .collect())
}

/// Build the dual of a bianchi group: one orbit layer over a cross-section
/// of the coadjoint flow, with Duflo-Moore `D = e^{-t tr M}` and layer
/// measure `kappa gamma(lambda) d lambda`.
pub fn bianchi_dual(family: BianchiFamily, ds: &BianchiDualSpec) -> Result<DualGrid> {
    let spec = GroupSpec::bianchi(family)?;
    let theta = family.trace();
    let space = Arc::new(RepSpace::line(theta, ds.t0, ds.ht, ds.nt)?);
    let n = ds.lambda_count;
    if n == 0 {
        return Err(Error::InvalidGrid("need at least one section node".into()));
    }
    let four_pi_sq = (TWO_PI) * (TWO_PI);
    // (component, lambda, dlambda) per node, plus the layer constant kappa.
    let (kappa, nodes): (f64, Vec<(usize, f64, f64)>) = match family {
        BianchiFamily::Five => {
            let dl = 1.0 / n as f64;
            (1.0 / TWO_PI, (0..n).map(|k| (0, k as f64 * dl, dl)).collect())
        }
        BianchiFamily::Four => {
            let ext = ds.lambda_extent;
            if !(ext.is_finite() && ext > 0.0) {
                return Err(Error::InvalidGrid("family IV needs a positive section extent".into()));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(
                    "family IV needs an even node count (the section excludes lambda = 0)".into(),
                ));
            }
            if ds.lambda_min > 0.0 {
                let cells = log_cells(ds.lambda_min, ext, n / 2)?;
                let mut v = Vec::with_capacity(n);
                for sign in [1.0, -1.0] {
                    v.extend(cells.iter().map(|&(mid, dl)| (0, sign * mid, dl)));
                }
                (1.0 / four_pi_sq, v)
            } else {
                let dl = 2.0 * ext / n as f64;
                (
                    1.0 / four_pi_sq,
                    (0..n).map(|k| (0, -ext + (k as f64 + 0.5) * dl, dl)).collect(),
                )
            }
        }
        BianchiFamily::Six { .. } => {
            let ext = ds.lambda_extent;
            if !(ext.is_finite() && ext > 0.0) {
                return Err(Error::InvalidGrid("family VI needs a positive section extent".into()));
            }
            let mut v = Vec::with_capacity(4 * n);
            if ds.lambda_min > 0.0 {
                let cells = log_cells(ds.lambda_min, ext, n)?;
                for comp in 1..=4 {
                    v.extend(cells.iter().map(|&(mid, dl)| (comp, mid, dl)));
                }
            } else {
                let dl = ext / n as f64;
                for comp in 1..=4 {
                    for k in 0..n {
                        v.push((comp, (k as f64 + 0.5) * dl, dl));
                    }
                }
            }
            (1.0 / four_pi_sq, v)
        }
        BianchiFamily::Seven { p } => {
            let hi = (TWO_PI * p).exp();
            if ds.lambda_min > 0.0 {
                // The annulus [1, e^{2 pi p}) can span orders of magnitude;
                // log cells keep the radius resolved at every flow depth.
                let cells = log_cells(1.0, hi, n)?;
                (1.0 / four_pi_sq, cells.iter().map(|&(mid, dl)| (0, mid, dl)).collect())
            } else {
                let dl = (hi - 1.0) / n as f64;
                (
                    1.0 / four_pi_sq,
                    (0..n).map(|k| (0, 1.0 + (k as f64 + 0.5) * dl, dl)).collect(),
                )
            }
        }
    };
    let multi_component = matches!(family, BianchiFamily::Six { .. });
    let param_dim = if multi_component { 2 } else { 1 };
    let mut params = Vec::with_capacity(nodes.len() * param_dim);
    let mut node_weights = Vec::with_capacity(nodes.len());
    let mut sigmas = Vec::with_capacity(nodes.len());
    let mut sigma_flow = Vec::with_capacity(nodes.len() * ds.nt);
    let mut row_live = Vec::new();
    let mask = ds.v_step[0] > 0.0 && ds.v_step[1] > 0.0;
    if mask {
        row_live.reserve(nodes.len() * ds.nt);
    }
    // A row at exactly the Nyquist frequency is still representable
    // (the alternating lattice mode), so the bound is slightly slack.
    let nyq = [
        PI / ds.v_step[0].max(1e-300) * (1.0 + 1e-9),
        PI / ds.v_step[1].max(1e-300) * (1.0 + 1e-9),
    ];
    for &(comp, lambda, dl) in &nodes {
        let (sigma, gamma) = cross_section(family, comp, lambda)?;
        if multi_component {
            params.push(comp as f64);
        }
        params.push(lambda);
        node_weights.push(kappa * gamma * dl);
        sigmas.push(sigma);
        for i in 0..ds.nt {
            let e = family.exp_cm(-space.t(i));
            // e^{-t M^T} sigma = (e^{-t M})^T sigma
            let s = [e[0] * sigma[0] + e[2] * sigma[1], e[1] * sigma[0] + e[3] * sigma[1]];
            if mask {
                row_live.push(s[0].abs() <= nyq[0] && s[1].abs() <= nyq[1]);
            }
            sigma_flow.push(s);
        }
    }
    if row_live.iter().all(|&b| b) {
        row_live.clear();
    }
    let layer = Layer {
        label: format!("orbits({})", family.label()),
        kind: LayerKind::BianchiOrbit { family },
        kappa,
        space,
        param_dim,
        params,
        node_weights,
        sigmas,
        sigma_flow,
        row_live,
    };
    Ok(DualGrid::assemble(spec, vec![layer]))
}

/// An operator field over the dual: one kernel matrix per dual node.
#[derive(Clone, Debug)]
pub struct DualField {
    grid: Arc<GroupGrid>,
    dual: Arc<DualGrid>,
    mats: Vec<CMatrix>,
}

impl DualField {
    pub fn zeros(grid: &Arc<GroupGrid>, dual: &Arc<DualGrid>) -> Self {
        let mats = (0..dual.node_count())
            .map(|flat| {
                let (l, _) = dual.split(flat);
                let n = dual.layer(l).space().len();
                CMatrix::zeros(n, n)
            })
            .collect();
        Self { grid: grid.clone(), dual: dual.clone(), mats }
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn dual(&self) -> &Arc<DualGrid> {
        &self.dual
    }

    pub fn mat(&self, flat: usize) -> &CMatrix {
        &self.mats[flat]
    }

    pub fn mat_mut(&mut self, flat: usize) -> &mut CMatrix {
        &mut self.mats[flat]
    }

    /// `<F, G> = sum_node w_node <F_node, G_node>_{HS}`.
    pub fn inner(&self, other: &Self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for flat in 0..self.dual.node_count() {
            let (l, n) = self.dual.split(flat);
            let w = self.dual.layer(l).space().weights();
            acc += self.mats[flat].hs_inner_weighted(&other.mats[flat], w)
                * self.dual.layer(l).node_weight(n);
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Plancherel mass per layer: entry `l` is the weighted Hilbert-Schmidt
    /// mass the field carries on layer `l`, so the entries sum to `||F||^2`.
    pub fn layer_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dual.layers().len()];
        for flat in 0..self.dual.node_count() {
            let (l, n) = self.dual.split(flat);
            let w = self.dual.layer(l).space().weights();
            out[l] += (self.mats[flat].hs_inner_weighted(&self.mats[flat], w)
                * self.dual.layer(l).node_weight(n))
            .re;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.mats.iter_mut().zip(&other.mats) {
            *a = a.sub(b);
        }
        out
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        for m in &mut out.mats {
            *m = m.scaled(s);
        }
        out
    }
}

/// Precomputed per-axis phase factors for sweeping a layer over a whole
/// grid.  `layer_phase` separates over the chart axes for every layer kind,
/// so a sweep needs one trig call per (node, row, axis node) instead of one
/// per (node, row, grid point); the tables reproduce `layer_phase` bitwise
/// because the axis nodes are the same floats the chart coordinates carry.
enum PhaseTables {
    /// `wave[k1 * nt + i]`, node-independent (scale-and-shift wave layers).
    Wave(Vec<C64>),
    /// `wave[k1 * nt + i] * line[node * n2 + k2]` (wave with a central line).
    WaveLine(Vec<C64>, Vec<C64>),
    /// `a[(node * nt + i) * n0 + k0] * b[(node * nt + i) * n1 + k1]`.
    Orbit(Vec<C64>, Vec<C64>),
}

fn phase_tables(layer: &Layer, grid: &GroupGrid) -> Option<PhaseTables> {
    let space = layer.space();
    let nt = space.len();
    let nodes = layer.node_count();
    match &layer.kind {
        LayerKind::EuclidChar => None,
        LayerKind::AffineWave { .. } | LayerKind::AffineLineWave { .. } => {
            let ax = grid.axis(1);
            let mut t = Vec::with_capacity(ax.len() * nt);
            for k in 0..ax.len() {
                let b = ax.node(k);
                for i in 0..nt {
                    t.push(cis(TWO_PI * b * space.coord[i]));
                }
            }
            if matches!(layer.kind, LayerKind::AffineWave { .. }) {
                Some(PhaseTables::Wave(t))
            } else {
                let axc = grid.axis(2);
                let mut tc = Vec::with_capacity(nodes * axc.len());
                for node in 0..nodes {
                    let zeta = layer.node_param(node)[0];
                    for k in 0..axc.len() {
                        tc.push(cis(-TWO_PI * axc.node(k) * zeta));
                    }
                }
                Some(PhaseTables::WaveLine(t, tc))
            }
        }
        LayerKind::BianchiOrbit { .. } => {
            let (ax0, ax1) = (grid.axis(0), grid.axis(1));
            let mut ta = Vec::with_capacity(nodes * nt * ax0.len());
            let mut tb = Vec::with_capacity(nodes * nt * ax1.len());
            for node in 0..nodes {
                for i in 0..nt {
                    let s = layer.sigma_flow[node * nt + i];
                    let live = if layer.row_is_live(node, i) { 1.0 } else { 0.0 };
                    for k in 0..ax0.len() {
                        ta.push(cis(s[0] * ax0.node(k)) * live);
                    }
                    for k in 0..ax1.len() {
                        tb.push(cis(s[1] * ax1.node(k)));
                    }
                }
            }
            Some(PhaseTables::Orbit(ta, tb))
        }
    }
}

impl PhaseTables {
    #[inline]
    fn at(&self, node: usize, i: usize, nt: usize, k: &[usize; 3], n_ax: &[usize; 3]) -> C64 {
        match self {
            PhaseTables::Wave(t) => t[k[1] * nt + i],
            PhaseTables::WaveLine(t, tc) => t[k[1] * nt + i] * tc[node * n_ax[2] + k[2]],
            PhaseTables::Orbit(ta, tb) => {
                let r = node * nt + i;
                ta[r * n_ax[0] + k[0]] * tb[r * n_ax[1] + k[1]]
            }
        }
    }
}

/// `pi_node(f) = integral f(x) pi_node(x) dm(x)` for every node of a layer.
pub fn fourier_layer(f: &SampledFunction, layer: &Layer) -> Vec<CMatrix> {
    let grid = f.grid();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let space = layer.space();
    let nt = space.len();
    let nodes = layer.node_count();
    let mut mats = vec![CMatrix::zeros(nt, nt); nodes];
    if let LayerKind::EuclidChar = layer.kind {
        // Characters are separable across axes: per-axis phase tables.
        let tables: Vec<Vec<C64>> = (0..dim)
            .map(|d| {
                let ax = grid.axis(d);
                let n = ax.len();
                let k0 = (n / 2) as i64;
                let dxi = 1.0 / (n as f64 * ax.step());
                let mut t = Vec::with_capacity(n * n);
                for kx in 0..n {
                    let x = ax.node(kx);
                    for kxi in 0..n {
                        let xi = (kxi as i64 - k0) as f64 * dxi;
                        t.push(cis(-TWO_PI * x * xi));
                    }
                }
                t
            })
            .collect();
        let mut xi_idx = vec![[0usize; 3]; nodes];
        for (flat, idx) in xi_idx.iter_mut().enumerate() {
            let mut rem = flat;
            for d in (0..dim).rev() {
                idx[d] = rem % grid.axis(d).len();
                rem /= grid.axis(d).len();
            }
        }
        let mut coords = [0.0f64; 3];
        for xf in 0..grid.len() {
            let coeff = f.values()[xf] * grid.weight(xf);
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            grid.coords_into(xf, &mut coords);
            let mut kx = [0usize; 3];
            for d in 0..dim {
                kx[d] = grid.axis_index_of(xf, d);
            }
            for (node, idx) in xi_idx.iter().enumerate() {
                let mut phase = C64::new(1.0, 0.0);
                for d in 0..dim {
                    let n = grid.axis(d).len();
                    phase *= tables[d][kx[d] * n + idx[d]];
                }
                let m = &mut mats[node];
                m[(0, 0)] += coeff * phase;
            }
        }
        return mats;
    }
    let tables = phase_tables(layer, grid).expect("non-euclid layer");
    let mut n_ax = [1usize; 3];
    for (d, n) in n_ax.iter_mut().enumerate().take(dim) {
        *n = grid.axis(d).len();
    }
    let winv: Vec<f64> = space.weights().iter().map(|w| 1.0 / w).collect();
    let mut coords = [0.0f64; 3];
    for xf in 0..grid.len() {
        let coeff = f.values()[xf] * grid.weight(xf);
        if coeff.norm_sqr() == 0.0 {
            continue;
        }
        grid.coords_into(xf, &mut coords);
        let x = &coords[..dim];
        let (scale, shift_u) = layer_scale_shift(&layer.kind, x);
        let (base, frac) = space.shift_parts(shift_u);
        let mut k = [0usize; 3];
        for (d, kd) in k.iter_mut().enumerate().take(dim) {
            *kd = grid.axis_index_of(xf, d);
        }
        let cs = coeff * scale;
        for (node, m) in mats.iter_mut().enumerate() {
            for i in 0..nt {
                let c = cs * tables.at(node, i, nt, &k, &n_ax);
                let j0 = i as i64 + base;
                if frac == 0.0 {
                    if j0 >= 0 && (j0 as usize) < nt {
                        let j = j0 as usize;
                        m[(i, j)] += c * winv[j];
                    }
                } else {
                    for (dj, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                        let j = j0 + dj;
                        if j >= 0 && (j as usize) < nt {
                            let j = j as usize;
                            m[(i, j)] += c * (wt * winv[j]);
                        }
                    }
                }
            }
        }
    }
    mats
}

/// Forward transform: the operator field `f^(node) = pi_node(f) D^{1/2}`.
pub fn plancherel_forward(f: &SampledFunction, dual: &Arc<DualGrid>) -> Result<DualField> {
    if dual.spec() != f.grid().spec() {
        return Err(Error::GridMismatch("dual and grid describe different groups".into()));
    }
    let mut out = DualField::zeros(f.grid(), dual);
    for (l, layer) in dual.layers().iter().enumerate() {
        let dsqrt = layer.space().dsqrt();
        let mats = fourier_layer(f, layer);
        for (node, mut m) in mats.into_iter().enumerate() {
            m.scale_cols(|j| C64::new(dsqrt[j], 0.0));
            *out.mat_mut(dual.flat(l, node)) = m;
        }
    }
    Ok(out)
}

/// Pointwise inverse pairing at an arbitrary chart point:
/// `sum_node w_node Tr(G_node D^{1/2} pi_node(x)^dagger)`.
pub fn field_inverse_at(field: &DualField, x: &[f64]) -> C64 {
    let dual = field.dual();
    let mut acc = C64::new(0.0, 0.0);
    for (l, layer) in dual.layers().iter().enumerate() {
        let space = layer.space();
        let nt = space.len();
        let wsp = space.weights();
        let dsqrt = space.dsqrt();
        let (scale, shift_u) = layer_scale_shift(&layer.kind, x);
        let (base, frac) = space.shift_parts(shift_u);
        let mut layer_acc = C64::new(0.0, 0.0);
        for node in 0..layer.node_count() {
            let g = field.mat(dual.flat(l, node));
            let mut node_acc = C64::new(0.0, 0.0);
            for i in 0..nt {
                if !layer.row_is_live(node, i) {
                    continue;
                }
                let j0 = i as i64 + base;
                let mut inner = C64::new(0.0, 0.0);
                if frac == 0.0 {
                    if j0 >= 0 && (j0 as usize) < nt {
                        let j = j0 as usize;
                        inner = g[(i, j)] * dsqrt[j];
                    }
                } else {
                    for (dj, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                        let j = j0 + dj;
                        if j >= 0 && (j as usize) < nt {
                            let j = j as usize;
                            inner += g[(i, j)] * (dsqrt[j] * wt);
                        }
                    }
                }
                if inner.norm_sqr() != 0.0 {
                    node_acc += inner * layer_phase(layer, node, i, x).conj() * wsp[i];
                }
            }
            layer_acc += node_acc * layer.node_weight(node);
        }
        acc += layer_acc * scale;
    }
    acc
}

/// Pointwise forward pairing (no adjoint) at an arbitrary chart point:
/// `sum_node w_node Tr(G_node D^{1/2} pi_node(x))`.
pub fn field_pair_at(field: &DualField, x: &[f64]) -> C64 {
    let dual = field.dual();
    let mut acc = C64::new(0.0, 0.0);
    for (l, layer) in dual.layers().iter().enumerate() {
        let space = layer.space();
        let nt = space.len();
        let wsp = space.weights();
        let dsqrt = space.dsqrt();
        let (scale, shift_u) = layer_scale_shift(&layer.kind, x);
        let (base, frac) = space.shift_parts(shift_u);
        let mut layer_acc = C64::new(0.0, 0.0);
        for node in 0..layer.node_count() {
            let g = field.mat(dual.flat(l, node));
            let mut node_acc = C64::new(0.0, 0.0);
            for j in 0..nt {
                if !layer.row_is_live(node, j) {
                    continue;
                }
                // Column j of G against row j of pi(x): the shift sends row j
                // to columns near j + shift.
                let i0 = j as i64 + base;
                let mut col = C64::new(0.0, 0.0);
                if frac == 0.0 {
                    if i0 >= 0 && (i0 as usize) < nt {
                        col = g[(i0 as usize, j)];
                    }
                } else {
                    for (di, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                        let i = i0 + di;
                        if i >= 0 && (i as usize) < nt {
                            col += g[(i as usize, j)] * wt;
                        }
                    }
                }
                if col.norm_sqr() != 0.0 {
                    node_acc += col * layer_phase(layer, node, j, x) * (wsp[j] * dsqrt[j]);
                }
            }
            layer_acc += node_acc * layer.node_weight(node);
        }
        acc += layer_acc * scale;
    }
    acc
}

/// Inverse transform: the exact adjoint of the discretized forward map,
/// i.e. quadrature of `f(x) = sum w_node Tr(G_node D^{1/2} pi_node(x)^*)`.
///
/// Sweeps the lattice with the same per-axis phase tables the forward uses;
/// the arithmetic per point matches `field_inverse_at` at the chart
/// coordinates of the node.
pub fn plancherel_inverse(field: &DualField) -> SampledFunction {
    let grid = field.grid().clone();
    let dual = field.dual();
    let dim = grid.spec().chart_dim();
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    let mut coords = [0.0f64; 3];
    for (l, layer) in dual.layers().iter().enumerate() {
        let space = layer.space();
        let nt = space.len();
        let wsp = space.weights();
        let dsqrt = space.dsqrt();
        let tables = phase_tables(layer, &grid);
        let mut n_ax = [1usize; 3];
        for (d, n) in n_ax.iter_mut().enumerate().take(dim) {
            *n = grid.axis(d).len();
        }
        for (xf, o) in out.iter_mut().enumerate() {
            grid.coords_into(xf, &mut coords);
            let x = &coords[..dim];
            let (scale, shift_u) = layer_scale_shift(&layer.kind, x);
            let (base, frac) = space.shift_parts(shift_u);
            let mut k = [0usize; 3];
            for (d, kd) in k.iter_mut().enumerate().take(dim) {
                *kd = grid.axis_index_of(xf, d);
            }
            let mut layer_acc = C64::new(0.0, 0.0);
            for node in 0..layer.node_count() {
                let g = field.mat(dual.flat(l, node));
                let mut node_acc = C64::new(0.0, 0.0);
                for i in 0..nt {
                    let j0 = i as i64 + base;
                    let mut inner = C64::new(0.0, 0.0);
                    if frac == 0.0 {
                        if j0 >= 0 && (j0 as usize) < nt {
                            let j = j0 as usize;
                            inner = g[(i, j)] * dsqrt[j];
                        }
                    } else {
                        for (dj, wt) in [(0i64, 1.0 - frac), (1, frac)] {
                            let j = j0 + dj;
                            if j >= 0 && (j as usize) < nt {
                                let j = j as usize;
                                inner += g[(i, j)] * (dsqrt[j] * wt);
                            }
                        }
                    }
                    if inner.norm_sqr() != 0.0 {
                        let phase = match &tables {
                            Some(tb) => tb.at(node, i, nt, &k, &n_ax),
                            None => layer_phase(layer, node, i, x),
                        };
                        node_acc += inner * phase.conj() * wsp[i];
                    }
                }
                layer_acc += node_acc * layer.node_weight(node);
            }
            *o += layer_acc * scale;
        }
    }
    SampledFunction::new(grid, out).expect("grid sized output")
}

/// `| ||f^||^2 - ||f||^2 | / ||f||^2`.
pub fn parseval_residual(f: &SampledFunction, dual: &Arc<DualGrid>) -> Result<f64> {
    let field = plancherel_forward(f, dual)?;
    let n2 = f.norm().powi(2);
    if n2 == 0.0 {
        return Err(Error::Degenerate("zero test function".into()));
    }
    Ok((field.norm().powi(2) - n2).abs() / n2)
}

/// Parseval residual with fitted per-layer mass multipliers applied;
/// evaluating it on functions held out of the fit tests whether a
/// calibration generalises.
pub fn calibrated_parseval_residual(
    f: &SampledFunction,
    dual: &Arc<DualGrid>,
    multipliers: &[f64],
) -> Result<f64> {
    let field = plancherel_forward(f, dual)?;
    let masses = field.layer_masses();
    if multipliers.len() != masses.len() {
        return Err(Error::GridMismatch("one multiplier per layer required".into()));
    }
    let n2 = f.norm().powi(2);
    if n2 == 0.0 {
        return Err(Error::Degenerate("zero test function".into()));
    }
    let lhs: f64 = masses.iter().zip(multipliers).map(|(m, k)| m * k).sum();
    Ok((lhs - n2).abs() / n2)
}

/// `|| P* P f - f || / ||f||` for the forward/adjoint pair.
pub fn inversion_residual(f: &SampledFunction, dual: &Arc<DualGrid>) -> Result<f64> {
    let field = plancherel_forward(f, dual)?;
    let back = plancherel_inverse(&field);
    let n = f.norm();
    if n == 0.0 {
        return Err(Error::Degenerate("zero test function".into()));
    }
    Ok(back.sub(f).norm() / n)
}

/// Result of a least-squares fit of per-layer mass multipliers.
#[derive(Clone, Debug)]
pub struct Calibration {
    /// Fitted multiplier per layer (1 means the built-in constants are exact).
    pub multipliers: Vec<f64>,
    /// Root-mean-square relative Parseval residual before / after the fit.
    pub residual_before: f64,
    pub residual_after: f64,
}

/// Fit one mass multiplier per layer so that the layer masses of the test
/// functions reproduce their squared norms, in the least-squares sense.
pub fn calibrate(dual: &Arc<DualGrid>, tests: &[SampledFunction]) -> Result<Calibration> {
    let nl = dual.layers().len();
    if tests.is_empty() {
        return Err(Error::Degenerate("calibration needs test functions".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(tests.len());
    let mut rhs: Vec<f64> = Vec::with_capacity(tests.len());
    for f in tests {
        let field = plancherel_forward(f, dual)?;
        rows.push(field.layer_masses());
        let n2 = f.norm().powi(2);
        if n2 == 0.0 {
            return Err(Error::Degenerate("zero calibration function".into()));
        }
        rhs.push(n2);
    }
    // Normal equations for rows * m = rhs, with a small ridge centred at
    // m = 1: layers the test set barely excites keep their built-in
    // constants instead of making the system singular.
    let mut a = vec![vec![0.0; nl]; nl];
    let mut b = vec![0.0; nl];
    for (row, &y) in rows.iter().zip(&rhs) {
        for i in 0..nl {
            for j in 0..nl {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    }
    let trace: f64 = (0..nl).map(|i| a[i][i]).sum();
    let ridge = 1e-9 * trace / nl as f64 + 1e-300;
    for i in 0..nl {
        a[i][i] += ridge;
        b[i] += ridge;
    }
    let multipliers = solve_dense(&mut a, &mut b)?;
    let resid = |mult: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (row, &y) in rows.iter().zip(&rhs) {
            let pred: f64 = row.iter().zip(mult).map(|(r, m)| r * m).sum();
            acc += ((pred - y) / y).powi(2);
        }
        (acc / rows.len() as f64).sqrt()
    };
    let ones = vec![1.0; nl];
    Ok(Calibration {
        residual_before: resid(&ones),
        residual_after: resid(&multipliers),
        multipliers,
    })
}

/// Solve a small dense symmetric-positive system by Gaussian elimination.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Degenerate("singular calibration system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::AxisSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclid_grid_1d(n: usize) -> Arc<GroupGrid> {
        let spec = GroupSpec::euclidean(1).unwrap();
        Arc::new(GroupGrid::new(spec, &[AxisSpec::linear(-2.0, 2.0, n)]).unwrap())
    }

    fn random_function(grid: &Arc<GroupGrid>, seed: u64) -> SampledFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        SampledFunction::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn euclid_parseval_is_exact_for_arbitrary_grid_data() {
        let grid = euclid_grid_1d(16);
        let dual = Arc::new(euclidean_dual(&grid).unwrap());
        let f = random_function(&grid, 7);
        assert!(parseval_residual(&f, &dual).unwrap() < 1e-12);
    }

    #[test]
    fn euclid_inversion_is_exact_for_arbitrary_grid_data() {
        let grid = euclid_grid_1d(16);
        let dual = Arc::new(euclidean_dual(&grid).unwrap());
        let f = random_function(&grid, 8);
        assert!(inversion_residual(&f, &dual).unwrap() < 1e-12);
    }

    #[test]
    fn euclid_2d_parseval_and_inversion_are_exact() {
        let spec = GroupSpec::euclidean(2).unwrap();
        let grid = Arc::new(
            GroupGrid::new(spec, &[AxisSpec::linear(-1.0, 1.0, 6), AxisSpec::linear(0.0, 3.0, 5)])
                .unwrap(),
        );
        let dual = Arc::new(euclidean_dual(&grid).unwrap());
        let f = random_function(&grid, 9);
        assert!(parseval_residual(&f, &dual).unwrap() < 1e-12);
        assert!(inversion_residual(&f, &dual).unwrap() < 1e-12);
    }

    #[test]
    fn forward_and_inverse_are_adjoint_on_every_group() {
        // <P f, G> must equal <f, P* G> to rounding; this pins the weighted
        // inner products and the inverse formula against each other.
        let affine_grid = Arc::new(
            GroupGrid::new(
                GroupSpec::affine(),
                &[AxisSpec::geometric(0.2, 5.0, 10), AxisSpec::linear(-2.0, 2.0, 9)],
            )
            .unwrap(),
        );
        let adual = Arc::new(affine_dual(-2.5, affine_grid.axis(0).step(), 24).unwrap());
        let b5 = GroupSpec::bianchi(BianchiFamily::Five).unwrap();
        let bgrid = Arc::new(
            GroupGrid::new(
                b5,
                &[
                    AxisSpec::linear(-2.0, 2.0, 5),
                    AxisSpec::linear(-2.0, 2.0, 5),
                    AxisSpec::linear(-1.25, 1.25, 5),
                ],
            )
            .unwrap(),
        );
        let bdual = Arc::new(
            bianchi_dual(
                BianchiFamily::Five,
                &BianchiDualSpec { t0: -1.5, ht: 0.5, nt: 7, lambda_count: 6, lambda_extent: 0.0, lambda_min: 0.0, v_step: [0.0, 0.0] },
            )
            .unwrap(),
        );
        for (grid, dual, seed) in [(&affine_grid, &adual, 11u64), (&bgrid, &bdual, 12u64)] {
            let f = random_function(grid, seed);
            let fwd = plancherel_forward(&f, dual).unwrap();
            let mut g = DualField::zeros(grid, dual);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for flat in 0..dual.node_count() {
                let m = g.mat_mut(flat);
                let n = m.nrows();
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
            }
            let lhs = fwd.inner(&g);
            let back = plancherel_inverse(&g);
            let rhs = f.grid().inner(f.values(), back.values());
            assert!(
                (lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()),
                "adjoint mismatch {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn affine_duflo_moore_is_modulus_of_the_wave_coordinate() {
        let dual = affine_dual(-1.0, 0.25, 9).unwrap();
        for layer in dual.layers() {
            let sp = layer.space();
            for k in 0..sp.len() {
                assert!((sp.dsqrt()[k].powi(2) - sp.coord()[k].abs()).abs() < 1e-12);
            }
            assert_eq!(layer.node_count(), 1);
            assert!((layer.node_weight(0) - 1.0).abs() < 1e-15);
            assert!((layer.kappa() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bianchi_five_layer_mass_is_inverse_two_pi() {
        let dual = bianchi_dual(
            BianchiFamily::Five,
            &BianchiDualSpec { t0: -1.0, ht: 0.5, nt: 5, lambda_count: 8, lambda_extent: 0.0, lambda_min: 0.0, v_step: [0.0, 0.0] },
        )
        .unwrap();
        let layer = dual.layer(0);
        assert!((layer.kappa() - 0.15915494309189535).abs() < 1e-15);
        for node in 0..8 {
            assert!((layer.node_weight(node) - 0.15915494309189535 / 8.0).abs() < 1e-15);
            let sigma = layer.sigma(node).unwrap();
            assert!((sigma[0].hypot(sigma[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bianchi_four_node_mass_matches_section_density() {
        // Section extent 4 with two nodes puts nodes at lambda = -2 and 2,
        // where gamma = 1 + |lambda| = 3 and dlambda = 4.
        let dual = bianchi_dual(
            BianchiFamily::Four,
            &BianchiDualSpec { t0: -1.0, ht: 0.5, nt: 5, lambda_count: 2, lambda_extent: 4.0, lambda_min: 0.0, v_step: [0.0, 0.0] },
        )
        .unwrap();
        let layer = dual.layer(0);
        let kappa = 1.0 / (TWO_PI * TWO_PI);
        assert!((layer.kappa() - kappa).abs() < 1e-15);
        for node in 0..2 {
            assert!((layer.node_param(node)[0].abs() - 2.0).abs() < 1e-12);
            assert!((layer.node_weight(node) - kappa * 3.0 * 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bianchi_six_components_alternate_section_density() {
        let q = 2.5;
        let dual = bianchi_dual(
            BianchiFamily::Six { q },
            &BianchiDualSpec { t0: -1.0, ht: 0.5, nt: 5, lambda_count: 3, lambda_extent: 3.0, lambda_min: 0.0, v_step: [0.0, 0.0] },
        )
        .unwrap();
        let layer = dual.layer(0);
        assert_eq!(layer.node_count(), 12);
        let kappa = 1.0 / (TWO_PI * TWO_PI);
        for node in 0..12 {
            let comp = layer.node_param(node)[0] as usize;
            let gamma = if comp % 2 == 1 { q } else { 1.0 };
            assert!((layer.node_weight(node) - kappa * gamma * 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_sections_meet_each_orbit_exactly_once() {
        // Round-trip lambda -> sigma -> (component, lambda, time) and flow
        // consistency: the coordinates of e^{-t M^T} sigma_0(lambda) must be
        // (lambda, t) for a range of flow times.
        let fams = [
            BianchiFamily::Four,
            BianchiFamily::Five,
            BianchiFamily::Six { q: 0.7 },
            BianchiFamily::Six { q: -0.4 },
            BianchiFamily::Seven { p: 0.6 },
        ];
        for fam in fams {
            let samples: Vec<(usize, f64)> = match fam {
                BianchiFamily::Four => vec![(0, -1.7), (0, 0.3), (0, 2.4)],
                BianchiFamily::Five => vec![(0, 0.1), (0, 0.45), (0, 0.9)],
                BianchiFamily::Six { .. } => {
                    (1..=4).flat_map(|c| [(c, 0.5), (c, 1.8)]).collect()
                }
                BianchiFamily::Seven { p } => {
                    vec![(0, 1.0), (0, (std::f64::consts::PI * p).exp())]
                }
            };
            for (comp, lambda) in samples {
                let (sigma0, _) = cross_section(fam, comp, lambda).unwrap();
                for t in [-1.3, -0.4, 0.0, 0.8, 2.1] {
                    let e = fam.exp_cm(-t);
                    let sig = [
                        e[0] * sigma0[0] + e[2] * sigma0[1],
                        e[1] * sigma0[0] + e[3] * sigma0[1],
                    ];
                    let oc = orbit_coordinates(fam, sig).unwrap();
                    assert_eq!(oc.component, comp, "{fam:?}");
                    let lam_err = (oc.lambda - lambda).abs();
                    let t_err = (oc.time - t).abs();
                    assert!(lam_err < 1e-9 * (1.0 + lambda.abs()), "{fam:?} lambda {lam_err}");
                    assert!(t_err < 1e-9 * (1.0 + t.abs()), "{fam:?} time {t_err}");
                }
            }
        }
    }

    #[test]
    fn semi_invariance_is_exact_for_lattice_shifts() {
        let adual = affine_dual(-2.0, 0.25, 17).unwrap();
        // ln a = 3 * 0.25 -> shift-exact
        let a = (0.75f64).exp();
        for l in 0..2 {
            let r = adual.semi_invariance_residual(l, 0, &[a, 0.6]).unwrap();
            assert!(r < 1e-12, "affine layer {l}: {r}");
        }
        let bdual = bianchi_dual(
            BianchiFamily::Seven { p: 1.0 },
            &BianchiDualSpec { t0: -2.0, ht: 0.5, nt: 9, lambda_count: 4, lambda_extent: 0.0, lambda_min: 0.0, v_step: [0.0, 0.0] },
        )
        .unwrap();
        let r = bdual.semi_invariance_residual(0, 2, &[0.4, -0.9, 1.0]).unwrap();
        assert!(r < 1e-12, "bianchi VII: {r}");
        // non-lattice shift must be refused
        assert!(bdual.semi_invariance_residual(0, 2, &[0.4, -0.9, 0.3]).is_err());
    }

    #[test]
    fn rep_action_is_a_homomorphism_on_interior_rows() {
        let dual = affine_dual(-3.0, 0.5, 13).unwrap();
        let layer = dual.layer(0);
        let space = layer.space();
        let x = [(1.0f64).exp(), 0.7]; // shift 2 steps
        let y = [(0.5f64).exp(), -0.3]; // shift 1 step
        let xy = GroupSpec::affine().multiply(&x, &y);
        let kx = rep_kernel(layer, 0, &x);
        let ky = rep_kernel(layer, 0, &y);
        let kxy = rep_kernel(layer, 0, &xy);
        let prod = kx.compose_weighted(&ky, space.weights());
        // rows whose double shift stays on the lattice
        for i in 0..space.len() {
            let j = i + 3;
            if j >= space.len() {
                continue;
            }
            let d = (prod[(i, j)] - kxy[(i, j)]).norm();
            assert!(d < 1e-10 * (1.0 + kxy[(i, j)].norm()), "row {i}: {d}");
        }
    }

    #[test]
    fn calibration_multiplier_is_unity_on_euclidean_grids() {
        let grid = euclid_grid_1d(12);
        let dual = Arc::new(euclidean_dual(&grid).unwrap());
        let tests: Vec<SampledFunction> = (0..4).map(|k| random_function(&grid, 20 + k)).collect();
        let cal = calibrate(&dual, &tests).unwrap();
        assert_eq!(cal.multipliers.len(), 1);
        assert!((cal.multipliers[0] - 1.0).abs() < 1e-10);
        assert!(cal.residual_after < 1e-12);
    }
}
