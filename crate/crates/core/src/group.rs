//! Concrete groups in global charts, left Haar quadrature grids and L^2 data.
//!
//! Supported groups:
//!
//! * `euclidean(n)` — chart `R^n`, Lebesgue measure.  Grids are uniform
//!   lattices with periodic (wrap-around) semantics, so lattice translations
//!   and lattice differences are exact index shifts.
//! * `affine` — the `ax+b` group on the positive-dilation chart
//!   `(a, b) in (0,inf) x R`, product `(a,b)(a',b') = (aa', ab'+b)`, left Haar
//!   measure `a^{-2} da db`, modular function `Delta(a,b) = 1/a`.
//! * `affine_line` — direct product of `affine` with a line: chart
//!   `(a, b, c)`, left Haar `a^{-2} da db dc`, `Delta = 1/a`.
//! * `bianchi(W, par)` for `W in {IV, V, VI, VII}` — `R^2 x| R` with product
//!   `(v; c)(v'; c') = (v + e^{cM} v'; c + c')` for the family matrix `M`,
//!   left Haar `det(e^{-cM}) da db dc`, `Delta(v; c) = det(e^{-cM})`.
//!
//! Grid axes are either `linear` (uniform) or `geometric` (uniform in the
//! logarithm; used for the affine `a` coordinate).  Weights follow the
//! midpoint rule per coordinate; geometric cells carry the exact cell
//! integral of the Haar density, which for geometric-midpoint nodes equals
//! density-at-node times cell length.  Euclidean axes wrap; all other axes
//! use zero extension outside the grid box.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::sync::Arc;

/// Snap tolerance for detecting that an interpolation target sits on a node.
const SNAP_TOL: f64 = 1e-9;

/// Bianchi family label together with its real parameter where applicable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BianchiFamily {
    /// `M = [[1,0],[1,1]]`.
    Four,
    /// `M = I`.
    Five,
    /// `M = [[1,0],[0,-q]]`, `q` outside `{0, -1}`.
    Six { q: f64 },
    /// `M = [[p,-1],[1,p]]`, `p > 0`.
    Seven { p: f64 },
}

impl BianchiFamily {
    /// The family matrix `M`, row-major `[m00, m01, m10, m11]`.
    pub fn matrix(&self) -> [f64; 4] {
        match *self {
            BianchiFamily::Four => [1.0, 0.0, 1.0, 1.0],
            BianchiFamily::Five => [1.0, 0.0, 0.0, 1.0],
            BianchiFamily::Six { q } => [1.0, 0.0, 0.0, -q],
            BianchiFamily::Seven { p } => [p, -1.0, 1.0, p],
        }
    }

    /// `tr M`; the modular function is `Delta(v; c) = e^{-c tr M}`.
    pub fn trace(&self) -> f64 {
        match *self {
            BianchiFamily::Four | BianchiFamily::Five => 2.0,
            BianchiFamily::Six { q } => 1.0 - q,
            BianchiFamily::Seven { p } => 2.0 * p,
        }
    }

    /// `e^{cM}` in closed form, row-major.
    pub fn exp_cm(&self, c: f64) -> [f64; 4] {
        match *self {
            BianchiFamily::Four => {
                let e = c.exp();
                [e, 0.0, c * e, e]
            }
            BianchiFamily::Five => {
                let e = c.exp();
                [e, 0.0, 0.0, e]
            }
            BianchiFamily::Six { q } => [c.exp(), 0.0, 0.0, (-q * c).exp()],
            BianchiFamily::Seven { p } => {
                let e = (p * c).exp();
                let (s, co) = c.sin_cos();
                [e * co, -e * s, e * s, e * co]
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BianchiFamily::Four => "IV".into(),
            BianchiFamily::Five => "V".into(),
            BianchiFamily::Six { q } => format!("VI(q={q})"),
            BianchiFamily::Seven { p } => format!("VII(p={p})"),
        }
    }
}

/// Group selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupKind {
    Euclidean(usize),
    Affine,
    AffineLine,
    Bianchi(BianchiFamily),
}

/// A validated group: chart arithmetic, modular function, Haar data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupSpec {
    kind: GroupKind,
}

impl GroupSpec {
    pub fn new(kind: GroupKind) -> Result<Self> {
        match kind {
            GroupKind::Euclidean(n) => {
                if n == 0 || n > 3 {
                    return Err(Error::InvalidSpec(format!(
                        "euclidean dimension must be 1, 2 or 3 (got {n})"
                    )));
                }
            }
            GroupKind::Bianchi(BianchiFamily::Six { q }) => {
                if !q.is_finite() || q == 0.0 || q == -1.0 {
                    return Err(Error::InvalidSpec(format!(
                        "bianchi VI parameter q={q} must be finite and outside {{0, -1}}"
                    )));
                }
            }
            GroupKind::Bianchi(BianchiFamily::Seven { p }) => {
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::InvalidSpec(format!("bianchi VII parameter p={p} must be > 0")));
                }
            }
            _ => {}
        }
        Ok(Self { kind })
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        Self::new(GroupKind::Euclidean(n))
    }

    pub fn affine() -> Self {
        Self { kind: GroupKind::Affine }
    }

    pub fn affine_line() -> Self {
        Self { kind: GroupKind::AffineLine }
    }

    pub fn bianchi(family: BianchiFamily) -> Result<Self> {
        Self::new(GroupKind::Bianchi(family))
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Chart dimension (number of real coordinates).
    pub fn chart_dim(&self) -> usize {
        match self.kind {
            GroupKind::Euclidean(n) => n,
            GroupKind::Affine => 2,
            GroupKind::AffineLine | GroupKind::Bianchi(_) => 3,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            GroupKind::Euclidean(n) => format!("euclidean({n})"),
            GroupKind::Affine => "affine".into(),
            GroupKind::AffineLine => "affine_line".into(),
            GroupKind::Bianchi(f) => format!("bianchi({})", f.label()),
        }
    }

    /// Check that `x` is a valid chart point.
    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.chart_dim() {
            return Err(Error::InvalidPoint(format!(
                "{} expects {} coordinates, got {}",
                self.label(),
                self.chart_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self.kind {
            GroupKind::Affine | GroupKind::AffineLine => {
                if x[0] <= 0.0 {
                    return Err(Error::InvalidPoint(format!("dilation coordinate a={} must be > 0", x[0])));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.chart_dim()];
        if matches!(self.kind, GroupKind::Affine | GroupKind::AffineLine) {
            e[0] = 1.0;
        }
        e
    }

    /// `out = x * y` (no allocation).
    pub fn multiply_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self.kind {
            GroupKind::Euclidean(n) => {
                for i in 0..n {
                    out[i] = x[i] + y[i];
                }
            }
            GroupKind::Affine => {
                out[0] = x[0] * y[0];
                out[1] = x[0] * y[1] + x[1];
            }
            GroupKind::AffineLine => {
                out[0] = x[0] * y[0];
                out[1] = x[0] * y[1] + x[1];
                out[2] = x[2] + y[2];
            }
            GroupKind::Bianchi(f) => {
                let e = f.exp_cm(x[2]);
                out[0] = x[0] + e[0] * y[0] + e[1] * y[1];
                out[1] = x[1] + e[2] * y[0] + e[3] * y[1];
                out[2] = x[2] + y[2];
            }
        }
    }

    /// `out = x^{-1}` (no allocation).
    pub fn inverse_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            GroupKind::Euclidean(n) => {
                for i in 0..n {
                    out[i] = -x[i];
                }
            }
            GroupKind::Affine => {
                out[0] = 1.0 / x[0];
                out[1] = -x[1] / x[0];
            }
            GroupKind::AffineLine => {
                out[0] = 1.0 / x[0];
                out[1] = -x[1] / x[0];
                out[2] = -x[2];
            }
            GroupKind::Bianchi(f) => {
                let e = f.exp_cm(-x[2]);
                out[0] = -(e[0] * x[0] + e[1] * x[1]);
                out[1] = -(e[2] * x[0] + e[3] * x[1]);
                out[2] = -x[2];
            }
        }
    }

    pub fn multiply(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chart_dim()];
        self.multiply_into(x, y, &mut out);
        out
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chart_dim()];
        self.inverse_into(x, &mut out);
        out
    }

    /// Modular function `Delta(x)`.
    pub fn modular(&self, x: &[f64]) -> f64 {
        match self.kind {
            GroupKind::Euclidean(_) => 1.0,
            GroupKind::Affine | GroupKind::AffineLine => 1.0 / x[0],
            GroupKind::Bianchi(f) => (-f.trace() * x[2]).exp(),
        }
    }
}

/// Axis scale selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisScale {
    Linear,
    Geometric,
}

/// One coordinate axis of a Haar grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: AxisScale,
}

impl AxisSpec {
    pub fn linear(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, scale: AxisScale::Linear }
    }

    pub fn geometric(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, scale: AxisScale::Geometric }
    }
}

/// A realized axis: nodes in chart coordinates, uniform in `u` (identity or log).
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    geometric: bool,
    wrapped: bool,
    /// Uniform coordinate of node 0 (`x` for linear axes, `ln x` for geometric).
    node0_u: f64,
    /// Uniform step.
    h: f64,
    nodes: Vec<f64>,
}

impl Axis {
    fn build(spec: &AxisSpec, wrapped: bool) -> Result<Self> {
        if spec.count == 0 || !spec.min.is_finite() || !spec.max.is_finite() || spec.max <= spec.min {
            return Err(Error::InvalidGrid(format!(
                "axis range [{}, {}] with {} nodes is invalid",
                spec.min, spec.max, spec.count
            )));
        }
        match spec.scale {
            AxisScale::Linear => {
                let h = (spec.max - spec.min) / spec.count as f64;
                // Wrapped axes sample cell left edges (periodic lattice through `min`);
                // plain axes sample cell midpoints.
                let node0 = if wrapped { spec.min } else { spec.min + 0.5 * h };
                let nodes = (0..spec.count).map(|k| node0 + k as f64 * h).collect();
                Ok(Self { geometric: false, wrapped, node0_u: node0, h, nodes })
            }
            AxisScale::Geometric => {
                if wrapped {
                    return Err(Error::InvalidGrid("geometric axes cannot wrap".into()));
                }
                if spec.min <= 0.0 {
                    return Err(Error::InvalidGrid("geometric axis requires min > 0".into()));
                }
                let h = (spec.max / spec.min).ln() / spec.count as f64;
                let u0 = spec.min.ln() + 0.5 * h;
                let nodes = (0..spec.count).map(|k| (u0 + k as f64 * h).exp()).collect();
                Ok(Self { geometric: true, wrapped, node0_u: u0, h, nodes })
            }
        }
    }

    /// Build an axis directly from its uniform-lattice data (`u0 + k h`).
    pub fn from_lattice(u0: f64, h: f64, count: usize, geometric: bool, wrapped: bool) -> Result<Self> {
        if count == 0 || h <= 0.0 || !u0.is_finite() || !h.is_finite() {
            return Err(Error::InvalidGrid("invalid lattice axis".into()));
        }
        if geometric && wrapped {
            return Err(Error::InvalidGrid("geometric axes cannot wrap".into()));
        }
        let nodes = (0..count)
            .map(|k| {
                let u = u0 + k as f64 * h;
                if geometric {
                    u.exp()
                } else {
                    u
                }
            })
            .collect();
        Ok(Self { geometric, wrapped, node0_u: u0, h, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Uniform step (`dx`, or `d ln x` on geometric axes).
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn wrapped(&self) -> bool {
        self.wrapped
    }

    pub fn geometric(&self) -> bool {
        self.geometric
    }

    /// Uniform coordinate of a chart value.
    fn uniform_of(&self, x: f64) -> f64 {
        if self.geometric {
            x.ln()
        } else {
            x
        }
    }

    /// Fractional lattice position of `x`: `x = node[i] + frac*h` with `0 <= frac < 1`.
    /// The returned index is raw (may be out of range; wrapped axes reduce later).
    fn locate(&self, x: f64) -> Option<(i64, f64)> {
        if self.geometric && x <= 0.0 {
            return None;
        }
        let u = (self.uniform_of(x) - self.node0_u) / self.h;
        if !u.is_finite() {
            return None;
        }
        let mut i = u.floor();
        let mut frac = u - i;
        if frac > 1.0 - SNAP_TOL {
            i += 1.0;
            frac = 0.0;
        } else if frac < SNAP_TOL {
            frac = 0.0;
        }
        Some((i as i64, frac))
    }

    /// Up to two (in-range index, weight) pairs for linear interpolation at `x`.
    fn hits(&self, x: f64, out: &mut [(usize, f64); 2]) -> usize {
        let Some((i0, frac)) = self.locate(x) else { return 0 };
        let n = self.nodes.len() as i64;
        let mut len = 0;
        let mut push = |i: i64, w: f64| {
            if w == 0.0 {
                return;
            }
            let idx = if self.wrapped { i.rem_euclid(n) } else { i };
            if idx >= 0 && idx < n {
                out[len] = (idx as usize, w);
                len += 1;
            }
        };
        if frac == 0.0 {
            push(i0, 1.0);
        } else {
            push(i0, 1.0 - frac);
            push(i0 + 1, frac);
        }
        len
    }
}

/// Interpolation stencil: up to `2^dim <= 8` grid corners with weights.
#[derive(Clone, Copy, Debug)]
pub struct Corners {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub len: usize,
}

impl Corners {
    pub fn empty() -> Self {
        Self { idx: [0; 8], w: [0.0; 8], len: 0 }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.w[k]))
    }

    /// Sum of retained weights (1 when the point is interior, less near edges).
    pub fn coverage(&self) -> f64 {
        self.w[..self.len].iter().sum()
    }
}

/// Left Haar quadrature grid: tensor product of axes with per-node weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGrid {
    spec: GroupSpec,
    axes: Vec<Axis>,
    strides: Vec<usize>,
    weights: Vec<f64>,
}

impl GroupGrid {
    /// Build a grid from per-axis descriptions (midpoint rule per coordinate).
    pub fn new(spec: GroupSpec, axis_specs: &[AxisSpec]) -> Result<Self> {
        if axis_specs.len() != spec.chart_dim() {
            return Err(Error::InvalidGrid(format!(
                "{} requires {} axes, got {}",
                spec.label(),
                spec.chart_dim(),
                axis_specs.len()
            )));
        }
        let axes: Vec<Axis> = match spec.kind() {
            GroupKind::Euclidean(_) => axis_specs
                .iter()
                .map(|s| {
                    if s.scale != AxisScale::Linear {
                        return Err(Error::InvalidGrid("euclidean axes must be linear".into()));
                    }
                    Axis::build(s, true)
                })
                .collect::<Result<_>>()?,
            GroupKind::Affine => {
                if axis_specs[0].scale != AxisScale::Geometric || axis_specs[1].scale != AxisScale::Linear {
                    return Err(Error::InvalidGrid("affine grid needs a geometric a-axis and a linear b-axis".into()));
                }
                vec![Axis::build(&axis_specs[0], false)?, Axis::build(&axis_specs[1], false)?]
            }
            GroupKind::AffineLine => {
                if axis_specs[0].scale != AxisScale::Geometric
                    || axis_specs[1].scale != AxisScale::Linear
                    || axis_specs[2].scale != AxisScale::Linear
                {
                    return Err(Error::InvalidGrid(
                        "affine_line grid needs axes (geometric, linear, linear)".into(),
                    ));
                }
                vec![
                    Axis::build(&axis_specs[0], false)?,
                    Axis::build(&axis_specs[1], false)?,
                    // The line factor is a euclidean coordinate: periodic lattice.
                    Axis::build(&axis_specs[2], true)?,
                ]
            }
            GroupKind::Bianchi(_) => axis_specs
                .iter()
                .map(|s| {
                    if s.scale != AxisScale::Linear {
                        return Err(Error::InvalidGrid("bianchi axes must be linear".into()));
                    }
                    Axis::build(s, false)
                })
                .collect::<Result<_>>()?,
        };
        Self::from_axes(spec, axes)
    }

    /// Build from already-realized axes (used by lattice-exact constructors).
    pub fn from_axes(spec: GroupSpec, axes: Vec<Axis>) -> Result<Self> {
        if axes.len() != spec.chart_dim() {
            return Err(Error::InvalidGrid("axis count mismatch".into()));
        }
        let mut strides = vec![0usize; axes.len()];
        let mut acc = 1usize;
        for d in (0..axes.len()).rev() {
            strides[d] = acc;
            acc = acc.checked_mul(axes[d].len()).ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        }
        let n = acc;
        let mut grid = Self { spec, axes, strides, weights: Vec::new() };
        grid.weights = grid.compute_weights(n);
        Ok(grid)
    }

    fn compute_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        let mut coords = [0.0f64; 3];
        for flat in 0..n {
            self.coords_into(flat, &mut coords);
            w[flat] = match self.spec.kind() {
                GroupKind::Euclidean(d) => (0..d).map(|i| self.axes[i].h).product(),
                GroupKind::Affine | GroupKind::AffineLine => {
                    // Exact integral of a^{-2} over the geometric a-cell; equal to
                    // a^{-2} * (cell length) at the geometric-midpoint node.
                    let ax = &self.axes[0];
                    let k = self.axis_index_of(flat, 0);
                    let u = ax.node0_u + k as f64 * ax.h;
                    let wa = (-(u - 0.5 * ax.h)).exp() - (-(u + 0.5 * ax.h)).exp();
                    let rest: f64 = (1..self.axes.len()).map(|i| self.axes[i].h).product();
                    wa * rest
                }
                GroupKind::Bianchi(f) => {
                    let dens = (-f.trace() * coords[2]).exp();
                    dens * self.axes[0].h * self.axes[1].h * self.axes[2].h
                }
            };
        }
        w
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, flat: usize) -> f64 {
        self.weights[flat]
    }

    /// Per-axis index of a flat node index.
    pub fn axis_index_of(&self, flat: usize, d: usize) -> usize {
        (flat / self.strides[d]) % self.axes[d].len()
    }

    /// Flat index from per-axis indices.
    pub fn flat_index(&self, per_axis: &[usize]) -> usize {
        per_axis.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Chart coordinates of a node (no allocation).
    pub fn coords_into(&self, flat: usize, out: &mut [f64]) {
        for d in 0..self.axes.len() {
            out[d] = self.axes[d].nodes[self.axis_index_of(flat, d)];
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        self.coords_into(flat, &mut out);
        out
    }

    /// Multilinear interpolation stencil at a chart point (zero extension off-grid).
    pub fn corners(&self, point: &[f64], out: &mut Corners) {
        out.len = 0;
        let dim = self.axes.len();
        let mut hits: [[(usize, f64); 2]; 3] = [[(0, 0.0); 2]; 3];
        let mut counts = [0usize; 3];
        for d in 0..dim {
            counts[d] = self.axes[d].hits(point[d], &mut hits[d]);
            if counts[d] == 0 {
                return; // outside the box in one coordinate: value 0
            }
        }
        // Cartesian product over <= 3 axes.
        let mut stack_idx = [0usize; 8];
        let mut stack_w = [0.0f64; 8];
        let mut len = 1usize;
        stack_idx[0] = 0;
        stack_w[0] = 1.0;
        for d in 0..dim {
            let mut nidx = [0usize; 8];
            let mut nw = [0.0f64; 8];
            let mut nlen = 0;
            for k in 0..len {
                for h in 0..counts[d] {
                    let (i, wgt) = hits[d][h];
                    nidx[nlen] = stack_idx[k] + i * self.strides[d];
                    nw[nlen] = stack_w[k] * wgt;
                    nlen += 1;
                }
            }
            stack_idx = nidx;
            stack_w = nw;
            len = nlen;
        }
        out.idx[..len].copy_from_slice(&stack_idx[..len]);
        out.w[..len].copy_from_slice(&stack_w[..len]);
        out.len = len;
    }

    /// Interpolate tabulated values at a chart point.
    pub fn interp(&self, values: &[C64], point: &[f64]) -> C64 {
        let mut c = Corners::empty();
        self.corners(point, &mut c);
        let mut acc = C64::new(0.0, 0.0);
        for (i, w) in c.iter() {
            acc += values[i] * w;
        }
        acc
    }

    /// `integral f dm` by the grid quadrature.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * *w).sum()
    }

    /// `<f, g> = integral f conj(g) dm`.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| a * b.conj() * *w).sum()
    }

    pub fn norm(&self, f: &[C64]) -> f64 {
        self.inner(f, f).re.max(0.0).sqrt()
    }
}

/// A complex function sampled on a Haar grid.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    grid: Arc<GroupGrid>,
    values: Vec<C64>,
}

impl SampledFunction {
    pub fn new(grid: Arc<GroupGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values over a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Arc<GroupGrid>, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let mut coords = [0.0f64; 3];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords_into(i, &mut coords);
                f(&coords[..grid.spec().chart_dim()])
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Arc<GroupGrid>) -> Self {
        Self { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// Interpolated evaluation at a chart point (zero off-grid).
    pub fn eval(&self, point: &[f64]) -> C64 {
        self.grid.interp(&self.values, point)
    }

    pub fn integrate(&self) -> C64 {
        self.grid.integrate(&self.values)
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.grid.inner(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = v.conj();
        }
        out
    }
}

/// Left Haar convolution `(f * g)(x) = integral f(y) g(y^{-1} x) dm(y)`.
pub fn convolve(f: &SampledFunction, g: &SampledFunction) -> Result<SampledFunction> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch("convolution operands on different grids".into()));
    }
    let grid = f.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let n = grid.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut y = [0.0f64; 3];
    let mut yinv = [0.0f64; 3];
    let mut x = [0.0f64; 3];
    let mut arg = [0.0f64; 3];
    for j in 0..n {
        let fj = f.values()[j] * grid.weight(j);
        if fj.norm_sqr() == 0.0 {
            continue;
        }
        grid.coords_into(j, &mut y);
        spec.inverse_into(&y[..dim], &mut yinv[..dim]);
        for i in 0..n {
            grid.coords_into(i, &mut x);
            spec.multiply_into(&yinv[..dim], &x[..dim], &mut arg[..dim]);
            let gv = g.eval(&arg[..dim]);
            if gv.norm_sqr() != 0.0 {
                out[i] += fj * gv;
            }
        }
    }
    SampledFunction::new(grid, out)
}

/// `p`-involution `f^{*p}(x) = Delta(x)^{-1/p} conj(f(x^{-1}))`.
pub fn involution_p(f: &SampledFunction, p: f64) -> Result<SampledFunction> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidSpec(format!("involution exponent p={p} must be positive")));
    }
    let grid = f.grid().clone();
    let spec = *grid.spec();
    let dim = spec.chart_dim();
    let mut x = [0.0f64; 3];
    let mut xinv = [0.0f64; 3];
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        grid.coords_into(i, &mut x);
        spec.inverse_into(&x[..dim], &mut xinv[..dim]);
        let factor = spec.modular(&x[..dim]).powf(-1.0 / p);
        *o = f.eval(&xinv[..dim]).conj() * factor;
    }
    SampledFunction::new(grid, out)
}
