//! Narrow-band level-set storage on a uniform Cartesian lattice.
//!
//! Nodes live at `origin + (i, j) * h`. Only nodes whose estimated distance to
//! the interface is within the band are stored; every stored node whose eight
//! neighbours are also stored is *stencil-complete* and can host the nine-point
//! finite-difference formulas used for normals and curvature.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;
#[allow(unused_imports)]
use num_traits::Float;

pub type Point = [f64; 2];

/// Gradient norms below this are treated as degenerate.
pub const GRADIENT_GUARD: f64 = 1e-8;
/// Default band half-width, in multiples of `h`.
pub const DEFAULT_BAND_CELLS: f64 = 8.0;
/// Smallest band half-width any generator asks for, in multiples of `h`.
pub const MIN_BAND_CELLS: f64 = 4.0 * SQRT_2;

const PRESENT: u8 = 1;
const COMPLETE: u8 = 2;
const DEGENERATE: u8 = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("refinement level must lie in 1..=30, got {0}")]
    InvalidLevel(u32),
    #[error("band half-width of {0} cells is narrower than 4*sqrt(2)")]
    BandTooNarrow(f64),
    #[error("region is empty")]
    EmptyRegion,
    #[error("no interface in region")]
    NoInterface,
    #[error("interpolation outside band at ({0}, {1})")]
    OutsideBand(f64, f64),
    #[error("degenerate projection")]
    DegenerateProjection,
    #[error("node ({0}, {1}) does not have a complete stencil")]
    IncompleteStencil(i64, i64),
    #[error("degenerate normal at node ({0}, {1})")]
    DegenerateNormal(i64, i64),
}

/// Lattice index of a grid vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub i: i64,
    pub j: i64,
}

impl Node {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    pub const fn offset(self, di: i64, dj: i64) -> Self {
        Self {
            i: self.i + di,
            j: self.j + dj,
        }
    }
}

/// Uniform mesh description: spacing `h = 2^-eta`, lattice origin and band width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    h: f64,
    eta: u32,
    origin: Point,
    band_cells: f64,
}

impl Grid {
    pub fn new(eta: u32) -> Result<Self, FieldError> {
        if !(1..=30).contains(&eta) {
            return Err(FieldError::InvalidLevel(eta));
        }
        Ok(Self {
            h: 1.0 / (1u64 << eta) as f64,
            eta,
            origin: [0.0, 0.0],
            band_cells: DEFAULT_BAND_CELLS,
        })
    }

    pub fn with_origin(mut self, origin: Point) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_band(mut self, cells: f64) -> Result<Self, FieldError> {
        if !(cells >= MIN_BAND_CELLS) {
            return Err(FieldError::BandTooNarrow(cells));
        }
        self.band_cells = cells;
        Ok(self)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eta(&self) -> u32 {
        self.eta
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Band half-width in multiples of `h`.
    pub fn band_cells(&self) -> f64 {
        self.band_cells
    }

    /// Band half-width in world units.
    pub fn band_width(&self) -> f64 {
        self.band_cells * self.h
    }

    pub fn position(&self, node: Node) -> Point {
        [
            self.origin[0] + node.i as f64 * self.h,
            self.origin[1] + node.j as f64 * self.h,
        ]
    }

    fn lattice_coords(&self, x: Point) -> Point {
        [
            (x[0] - self.origin[0]) / self.h,
            (x[1] - self.origin[1]) / self.h,
        ]
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Point,
    pub max: Point,
}

impl Region {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// Square of half-side `half` around `center`.
    pub fn centered(center: Point, half: f64) -> Self {
        Self {
            min: [center[0] - half, center[1] - half],
            max: [center[0] + half, center[1] + half],
        }
    }
}

/// An implicit interface description.
pub trait LevelSet {
    fn value(&self, x: Point) -> f64;

    /// Cheap estimate of the distance from `x` to the zero isocontour; decides
    /// band membership. Defaults to `|phi| / |grad phi|`.
    fn distance_estimate(&self, x: Point) -> f64 {
        let step = 1e-7;
        let gx = (self.value([x[0] + step, x[1]]) - self.value([x[0] - step, x[1]])) / (2.0 * step);
        let gy = (self.value([x[0], x[1] + step]) - self.value([x[0], x[1] - step])) / (2.0 * step);
        let g = (gx * gx + gy * gy).sqrt();
        let v = self.value(x).abs();
        if g > GRADIENT_GUARD {
            v / g
        } else {
            v
        }
    }
}

impl<F: Fn(Point) -> f64> LevelSet for F {
    fn value(&self, x: Point) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Lattice {
    lo: [i64; 2],
    dims: [usize; 2],
}

impl Lattice {
    fn index(&self, n: Node) -> Option<usize> {
        let di = n.i - self.lo[0];
        let dj = n.j - self.lo[1];
        if di < 0 || dj < 0 || di as usize >= self.dims[0] || dj as usize >= self.dims[1] {
            return None;
        }
        Some(dj as usize * self.dims[0] + di as usize)
    }

    fn node(&self, idx: usize) -> Node {
        Node::new(
            self.lo[0] + (idx % self.dims[0]) as i64,
            self.lo[1] + (idx / self.dims[0]) as i64,
        )
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Flat offsets of the 3x3 stencil in canonical order (j outer, i inner),
    /// valid only for indices that are not on the lattice border.
    fn stencil_offsets(&self) -> [isize; 9] {
        let w = self.dims[0] as isize;
        let mut out = [0isize; 9];
        for (k, slot) in out.iter_mut().enumerate() {
            let di = (k % 3) as isize - 1;
            let dj = (k / 3) as isize - 1;
            *slot = dj * w + di;
        }
        out
    }

    fn is_interior(&self, idx: usize) -> bool {
        let a = idx % self.dims[0];
        let b = idx / self.dims[0];
        a > 0 && b > 0 && a + 1 < self.dims[0] && b + 1 < self.dims[1]
    }
}

/// Values attached to a subset of lattice nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<T> {
    grid: Grid,
    lattice: Lattice,
    values: Vec<T>,
    flags: Vec<u8>,
}

/// Nodal level-set (or curvature) values.
pub type ScalarField = NodalField<f64>;
/// Nodal unit normals.
pub type VectorField = NodalField<Point>;

impl<T: Copy + Default> NodalField<T> {
    fn empty_like<U>(other: &NodalField<U>) -> Self {
        Self {
            grid: other.grid,
            lattice: other.lattice,
            values: vec![T::default(); other.lattice.len()],
            flags: vec![0; other.lattice.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, node: Node) -> Option<T> {
        let idx = self.lattice.index(node)?;
        (self.flags[idx] & PRESENT != 0).then(|| self.values[idx])
    }

    pub fn contains(&self, node: Node) -> bool {
        self.get(node).is_some()
    }

    /// Whether all eight neighbours of `node` are stored.
    pub fn is_complete(&self, node: Node) -> bool {
        self.lattice
            .index(node)
            .is_some_and(|idx| self.flags[idx] & COMPLETE != 0)
    }

    /// Whether the derived quantity at `node` hit the zero-gradient guard.
    pub fn is_degenerate(&self, node: Node) -> bool {
        self.lattice
            .index(node)
            .is_some_and(|idx| self.flags[idx] & DEGENERATE != 0)
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        self.flags.iter().filter(|f| **f & PRESENT != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored nodes with their values, in lattice order (j outer, i inner).
    pub fn nodes(&self) -> impl Iterator<Item = (Node, T)> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, f)| **f & PRESENT != 0)
            .map(move |(idx, _)| (self.lattice.node(idx), self.values[idx]))
    }

    pub fn position(&self, node: Node) -> Point {
        self.grid.position(node)
    }

    /// The nine stencil values around a complete node in canonical order.
    pub fn stencil(&self, node: Node) -> Result<[T; 9], FieldError> {
        let idx = self
            .lattice
            .index(node)
            .filter(|&idx| self.flags[idx] & COMPLETE != 0)
            .ok_or(FieldError::IncompleteStencil(node.i, node.j))?;
        let offsets = self.lattice.stencil_offsets();
        Ok(offsets.map(|o| self.values[(idx as isize + o) as usize]))
    }

    fn complete_indices(&self) -> Vec<usize> {
        (0..self.flags.len())
            .filter(|&idx| self.flags[idx] & COMPLETE != 0)
            .collect()
    }

    fn mark_complete(&mut self) {
        let offsets = self.lattice.stencil_offsets();
        for idx in 0..self.flags.len() {
            if self.flags[idx] & PRESENT == 0 || !self.lattice.is_interior(idx) {
                continue;
            }
            let full = offsets
                .iter()
                .all(|&o| self.flags[(idx as isize + o) as usize] & PRESENT != 0);
            if full {
                self.flags[idx] |= COMPLETE;
            }
        }
    }
}

impl ScalarField {
    /// Builds a field from explicit nodal values; completeness is derived.
    pub fn from_nodes<I>(grid: Grid, nodes: I) -> Self
    where
        I: IntoIterator<Item = (Node, f64)>,
    {
        let nodes: Vec<(Node, f64)> = nodes.into_iter().collect();
        let (mut lo, mut hi) = ([i64::MAX; 2], [i64::MIN; 2]);
        for (n, _) in &nodes {
            lo = [lo[0].min(n.i), lo[1].min(n.j)];
            hi = [hi[0].max(n.i), hi[1].max(n.j)];
        }
        if nodes.is_empty() {
            lo = [0, 0];
            hi = [-1, -1];
        }
        let lattice = Lattice {
            lo,
            dims: [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize],
        };
        let mut field = Self {
            grid,
            lattice,
            values: vec![0.0; lattice.len()],
            flags: vec![0; lattice.len()],
        };
        for (n, v) in nodes {
            let idx = lattice.index(n).expect("node inside its own bounding box");
            field.values[idx] = v;
            field.flags[idx] = PRESENT;
        }
        field.mark_complete();
        field
    }

    /// Same nodes and flags, values mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (v, flag) in out.values.iter_mut().zip(&self.flags) {
            if flag & PRESENT != 0 {
                *v = f(*v);
            }
        }
        out
    }

    fn has_sign_change(&self, idx: usize) -> bool {
        let v = self.values[idx];
        let n = self.lattice.node(idx);
        [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(di, dj)| {
            self.lattice
                .index(n.offset(di, dj))
                .is_some_and(|k| self.flags[k] & PRESENT != 0 && v * self.values[k] <= 0.0)
        })
    }
}

/// Samples `levelset` at every lattice node of `region` within the band.
pub fn evaluate<L: LevelSet + ?Sized>(
    grid: &Grid,
    levelset: &L,
    region: &Region,
) -> Result<ScalarField, FieldError> {
    let lo = grid.lattice_coords(region.min);
    let hi = grid.lattice_coords(region.max);
    let (i0, j0) = (lo[0].ceil() as i64, lo[1].ceil() as i64);
    let (i1, j1) = (hi[0].floor() as i64, hi[1].floor() as i64);
    if i1 < i0 || j1 < j0 {
        return Err(FieldError::EmptyRegion);
    }
    let lattice = Lattice {
        lo: [i0, j0],
        dims: [(i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize],
    };
    let band = grid.band_width();
    let mut field = ScalarField {
        grid: *grid,
        lattice,
        values: vec![0.0; lattice.len()],
        flags: vec![0; lattice.len()],
    };
    for idx in 0..lattice.len() {
        let x = grid.position(lattice.node(idx));
        if levelset.distance_estimate(x) <= band {
            field.values[idx] = levelset.value(x);
            field.flags[idx] = PRESENT;
        }
    }
    field.mark_complete();
    let crosses =
        (0..lattice.len()).any(|idx| field.flags[idx] & PRESENT != 0 && field.has_sign_change(idx));
    if !crosses {
        return Err(FieldError::NoInterface);
    }
    Ok(field)
}

/// Stencil-complete nodes with a sign change to at least one of their four
/// axis neighbours (`phi(n) * phi(neighbour) <= 0`).
pub fn interface_nodes(field: &ScalarField) -> Vec<Node> {
    (0..field.flags.len())
        .filter(|&idx| field.flags[idx] & COMPLETE != 0 && field.has_sign_change(idx))
        .map(|idx| field.lattice.node(idx))
        .collect()
}

/// Second-order central differences on a canonical 3x3 stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilDerivatives {
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_xx: f64,
    pub phi_yy: f64,
    pub phi_xy: f64,
}

impl StencilDerivatives {
    pub fn from_stencil(s: &[f64; 9], h: f64) -> Self {
        // (i, j) -> (j + 1) * 3 + (i + 1)
        let (mm, zm, pm) = (s[0], s[1], s[2]);
        let (m0, zz, p0) = (s[3], s[4], s[5]);
        let (mp, zp, pp) = (s[6], s[7], s[8]);
        Self {
            phi_x: (p0 - m0) / (2.0 * h),
            phi_y: (zp - zm) / (2.0 * h),
            phi_xx: (p0 - 2.0 * zz + m0) / (h * h),
            phi_yy: (zp - 2.0 * zz + zm) / (h * h),
            phi_xy: (pp - pm - mp + mm) / (4.0 * h * h),
        }
    }

    pub fn gradient_norm(&self) -> f64 {
        self.phi_x.hypot(self.phi_y)
    }

    /// Unit normal, or `None` below the gradient guard.
    pub fn normal(&self) -> Option<Point> {
        let g = self.gradient_norm();
        (g >= GRADIENT_GUARD).then(|| [self.phi_x / g, self.phi_y / g])
    }

    /// Mean curvature `div(grad phi / |grad phi|)`, or `None` below the guard.
    pub fn curvature(&self) -> Option<f64> {
        let g = self.gradient_norm();
        if g < GRADIENT_GUARD {
            return None;
        }
        let (px, py) = (self.phi_x, self.phi_y);
        let num = px * px * self.phi_yy - 2.0 * px * py * self.phi_xy + py * py * self.phi_xx;
        Some(num / (g * g * g))
    }
}

/// Curvature from a canonical 3x3 stencil; zero when degenerate.
pub fn stencil_curvature(s: &[f64; 9], h: f64) -> f64 {
    StencilDerivatives::from_stencil(s, h)
        .curvature()
        .unwrap_or(0.0)
}

/// Unit normals at every stencil-complete node. Degenerate nodes carry (0, 0).
pub fn normals(field: &ScalarField) -> VectorField {
    let mut out = VectorField::empty_like(field);
    let h = field.grid.h;
    let offsets = field.lattice.stencil_offsets();
    for idx in field.complete_indices() {
        let s = offsets.map(|o| field.values[(idx as isize + o) as usize]);
        out.flags[idx] = PRESENT;
        match StencilDerivatives::from_stencil(&s, h).normal() {
            Some(n) => out.values[idx] = n,
            None => out.flags[idx] |= DEGENERATE,
        }
    }
    out.mark_complete();
    out
}

/// Nodal curvature at every stencil-complete node. Degenerate nodes carry 0.
pub fn curvature(field: &ScalarField) -> ScalarField {
    let mut out = ScalarField::empty_like(field);
    let h = field.grid.h;
    let offsets = field.lattice.stencil_offsets();
    for idx in field.complete_indices() {
        let s = offsets.map(|o| field.values[(idx as isize + o) as usize]);
        out.flags[idx] = PRESENT;
        match StencilDerivatives::from_stencil(&s, h).curvature() {
            Some(k) => out.values[idx] = k,
            None => out.flags[idx] |= DEGENERATE,
        }
    }
    out.mark_complete();
    out
}

/// Smoothed sign of the initial level set. The `|grad phi0|` factor keeps the
/// smoothing width at one cell for level sets that are not distance-scaled.
fn smoothed_sign(phi0: f64, grad_norm: f64, h: f64) -> f64 {
    let eps = grad_norm * h;
    let denom = (phi0 * phi0 + eps * eps).sqrt();
    if denom > 0.0 {
        phi0 / denom
    } else {
        0.0
    }
}

/// Runs `nu` pseudo-time steps of `phi_t + sgn(phi0) (|grad phi| - 1) = 0`
/// with TVD-RK2, a first-order Godunov Hamiltonian and `dtau = h / 2`.
///
/// Nodes adjacent to the interface use the subcell fix: they relax towards the
/// distance `h * phi0 / |delta phi0|` read off the initial data, which pins the
/// zero isocontour. Nodes without a complete stencil keep their input values.
pub fn reinitialize(field: &ScalarField, nu: u32) -> ScalarField {
    if nu == 0 {
        return field.clone();
    }
    let h = field.grid.h;
    let dtau = 0.5 * h;
    let v0 = &field.values;
    let w = field.lattice.dims[0];
    let nodes: Vec<ReinitNode> = field
        .complete_indices()
        .into_iter()
        .map(|idx| {
            let nb = [idx - 1, idx + 1, idx - w, idx + w];
            let c = v0[idx];
            let adjacent = nb.iter().any(|&k| c * v0[k] < 0.0) || c == 0.0;
            if adjacent {
                let spread = |m: f64, p: f64| {
                    ((p - m) / 2.0)
                        .abs()
                        .max((p - c).abs())
                        .max((c - m).abs())
                        .max(1e-15)
                };
                let dx = spread(v0[nb[0]], v0[nb[1]]);
                let dy = spread(v0[nb[2]], v0[nb[3]]);
                ReinitNode {
                    idx,
                    nb,
                    sign: if c > 0.0 {
                        1.0
                    } else if c < 0.0 {
                        -1.0
                    } else {
                        0.0
                    },
                    subcell_distance: Some(h * c / dx.hypot(dy)),
                }
            } else {
                let gx = (v0[nb[1]] - v0[nb[0]]) / (2.0 * h);
                let gy = (v0[nb[3]] - v0[nb[2]]) / (2.0 * h);
                ReinitNode {
                    idx,
                    nb,
                    sign: smoothed_sign(c, gx.hypot(gy), h),
                    subcell_distance: None,
                }
            }
        })
        .collect();

    let mut phi = field.values.clone();
    let mut stage = phi.clone();
    let mut rate = vec![0.0; nodes.len()];
    let eval_rate = |src: &[f64], rate: &mut [f64]| {
        for (r, n) in rate.iter_mut().zip(&nodes) {
            *r = match n.subcell_distance {
                Some(d) => (n.sign * src[n.idx].abs() - d) / h,
                None => n.sign * (godunov_norm(src, n.idx, &n.nb, n.sign, h) - 1.0),
            };
        }
    };
    for _ in 0..nu {
        eval_rate(&phi, &mut rate);
        for (n, r) in nodes.iter().zip(&rate) {
            stage[n.idx] = phi[n.idx] - dtau * r;
        }
        eval_rate(&stage, &mut rate);
        for (n, r) in nodes.iter().zip(&rate) {
            let second = stage[n.idx] - dtau * r;
            phi[n.idx] = 0.5 * (phi[n.idx] + second);
        }
        for n in &nodes {
            stage[n.idx] = phi[n.idx];
        }
    }
    ScalarField {
        grid: field.grid,
        lattice: field.lattice,
        values: phi,
        flags: field.flags.clone(),
    }
}

struct ReinitNode {
    idx: usize,
    nb: [usize; 4],
    sign: f64,
    subcell_distance: Option<f64>,
}

fn godunov_norm(v: &[f64], idx: usize, nb: &[usize; 4], sign: f64, h: f64) -> f64 {
    let c = v[idx];
    let dxm = (c - v[nb[0]]) / h;
    let dxp = (v[nb[1]] - c) / h;
    let dym = (c - v[nb[2]]) / h;
    let dyp = (v[nb[3]] - c) / h;
    let sq = |x: f64| x * x;
    if sign > 0.0 {
        let gx = sq(dxm.max(0.0)).max(sq(dxp.min(0.0)));
        let gy = sq(dym.max(0.0)).max(sq(dyp.min(0.0)));
        (gx + gy).sqrt()
    } else if sign < 0.0 {
        let gx = sq(dxm.min(0.0)).max(sq(dxp.max(0.0)));
        let gy = sq(dym.min(0.0)).max(sq(dyp.max(0.0)));
        (gx + gy).sqrt()
    } else {
        1.0
    }
}

/// Bilinear interpolation inside the lattice cell containing `x`.
pub fn interpolate_bilinear(field: &ScalarField, x: Point) -> Result<f64, FieldError> {
    let [u, v] = field.grid.lattice_coords(x);
    let (fi, fj) = (u.floor(), v.floor());
    let base = Node::new(fi as i64, fj as i64);
    let corner = |di, dj| {
        field
            .get(base.offset(di, dj))
            .ok_or(FieldError::OutsideBand(x[0], x[1]))
    };
    let (v00, v10, v01, v11) = (corner(0, 0)?, corner(1, 0)?, corner(0, 1)?, corner(1, 1)?);
    let (tx, ty) = (u - fi, v - fj);
    Ok((1.0 - tx) * (1.0 - ty) * v00
        + tx * (1.0 - ty) * v10
        + (1.0 - tx) * ty * v01
        + tx * ty * v11)
}

/// First-order projection of a node onto the interface: `x - phi * n`.
pub fn project_to_interface(node_pos: Point, phi: f64, normal: Point) -> Result<Point, FieldError> {
    if normal[0].hypot(normal[1]) < GRADIENT_GUARD {
        return Err(FieldError::DegenerateProjection);
    }
    Ok([node_pos[0] - phi * normal[0], node_pos[1] - phi * normal[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn grid(eta: u32) -> Grid {
        Grid::new(eta).unwrap()
    }

    fn circle_sdf(r: f64) -> impl Fn(Point) -> f64 {
        move |x: Point| x[0].hypot(x[1]) - r
    }

    #[test]
    fn spacing_is_exact_power_of_two() {
        for eta in 1..=30 {
            let g = grid(eta);
            assert_eq!(g.h(), 2f64.powi(-(eta as i32)));
        }
        assert!(Grid::new(0).is_err());
        assert!(grid(6).with_band(5.0).is_err());
    }

    #[test]
    fn evaluate_circle_sign_structure() {
        let g = grid(6);
        let phi = |x: Point| x[0] * x[0] + x[1] * x[1] - 0.0625;
        let f = evaluate(&g, &phi, &Region::centered([0.0, 0.0], 0.5)).unwrap();
        let h = g.h();
        for (n, v) in f.nodes() {
            let r = g.position(n);
            let r = r[0].hypot(r[1]);
            if r < 0.25 - 1e-12 {
                assert!(v < 0.0);
            } else if r > 0.25 + 1e-12 {
                assert!(v > 0.0);
            }
        }
        for n in interface_nodes(&f) {
            let p = g.position(n);
            assert!((p[0].hypot(p[1]) - 0.25).abs() <= h + 1e-12);
        }
    }

    #[test]
    fn plane_interface_rows() {
        let g = grid(5);
        let h = g.h();
        let f = evaluate(
            &g,
            &|x: Point| x[1] - 0.5,
            &Region::new([0.0, 0.0], [1.0, 1.0]),
        )
        .unwrap();
        let nodes = interface_nodes(&f);
        assert!(!nodes.is_empty());
        // a node sits exactly on y = 0.5, so three rows qualify
        for n in &nodes {
            assert!((g.position(*n)[1] - 0.5).abs() <= h + 1e-12);
        }
        let rows: Vec<i64> = {
            let mut r: Vec<i64> = nodes.iter().map(|n| n.j).collect();
            r.sort();
            r.dedup();
            r
        };
        assert_eq!(rows, [15, 16, 17]);

        let f = evaluate(
            &g,
            &|x: Point| x[1] - 0.51,
            &Region::new([0.0, 0.0], [1.0, 1.0]),
        )
        .unwrap();
        let mut rows: Vec<i64> = interface_nodes(&f).iter().map(|n| n.j).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows, [16, 17]);
    }

    #[test]
    fn no_interface_is_an_error() {
        let g = grid(5);
        let r = evaluate(&g, &|_: Point| 1.0, &Region::new([0.0, 0.0], [1.0, 1.0]));
        assert_eq!(r.unwrap_err(), FieldError::NoInterface);
    }

    #[test]
    fn all_positive_field_has_no_interface_nodes() {
        let g = grid(4);
        let nodes = (0..10).flat_map(|i| (0..10).map(move |j| (Node::new(i, j), 1.0 + i as f64)));
        let f = ScalarField::from_nodes(g, nodes);
        assert!(interface_nodes(&f).is_empty());
    }

    #[test]
    fn normals_of_simple_fields() {
        let g = grid(5);
        let region = Region::new([-0.5, -0.5], [0.5, 0.5]);
        let f = evaluate(&g, &|x: Point| x[1], &region).unwrap();
        let n = normals(&f);
        for (node, v) in n.nodes() {
            assert!(!n.is_degenerate(node));
            assert!((v[0]).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
        }
        let f = evaluate(&g, &|x: Point| x[0] + x[1], &region).unwrap();
        let n = normals(&f);
        let s = 0.5f64.sqrt();
        for (_, v) in n.nodes() {
            assert!((v[0] - s).abs() < 1e-12 && (v[1] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_normal_on_circle_sdf() {
        let g = grid(7);
        let g = g.with_band(40.0).unwrap();
        let f = evaluate(&g, &circle_sdf(0.5), &Region::centered([0.0, 0.0], 0.75)).unwrap();
        let n = normals(&f).get(Node::new(32, 0)).unwrap();
        let h = g.h();
        assert!((n[0] - 1.0).abs() < h * h && n[1].abs() < h * h);
    }

    #[test]
    fn flat_field_has_zero_curvature() {
        let g = grid(5);
        let f = evaluate(&g, &|x: Point| x[1], &Region::new([-0.5, -0.5], [0.5, 0.5])).unwrap();
        let k = curvature(&f);
        assert!(k.nodes().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn constant_stencil_is_degenerate() {
        let g = grid(4);
        let f = ScalarField::from_nodes(
            g,
            (0..5).flat_map(|i| (0..5).map(move |j| (Node::new(i, j), 0.3))),
        );
        let n = normals(&f);
        let k = curvature(&f);
        assert!(n.is_degenerate(Node::new(2, 2)));
        assert_eq!(n.get(Node::new(2, 2)), Some([0.0, 0.0]));
        assert!(k.is_degenerate(Node::new(2, 2)));
        assert_eq!(k.get(Node::new(2, 2)), Some(0.0));
    }

    fn circle_mae(eta: u32) -> f64 {
        let g = grid(eta);
        let f = evaluate(&g, &circle_sdf(0.25), &Region::centered([0.0, 0.0], 0.5)).unwrap();
        let k = curvature(&f);
        let nodes = interface_nodes(&f);
        nodes
            .iter()
            .map(|n| {
                let p = g.position(*n);
                (k.get(*n).unwrap() - 1.0 / p[0].hypot(p[1])).abs()
            })
            .sum::<f64>()
            / nodes.len() as f64
    }

    #[test]
    fn circle_curvature_converges_second_order() {
        let e7 = circle_mae(7);
        let e8 = circle_mae(8);
        let ratio = e7 / e8;
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn negation_flips_normals_and_curvature() {
        let g = grid(6);
        let f = evaluate(
            &g,
            &|x: Point| (x[0] - 0.1).hypot(x[1]) - 0.3 + 0.05 * x[0] * x[1],
            &Region::centered([0.0, 0.0], 0.6),
        )
        .unwrap();
        let neg = f.map(|v| -v);
        let (n, nn) = (normals(&f), normals(&neg));
        let (k, kn) = (curvature(&f), curvature(&neg));
        for (node, v) in n.nodes() {
            let w = nn.get(node).unwrap();
            assert_eq!(v, [-w[0], -w[1]]);
            assert_eq!(k.get(node).unwrap(), -kn.get(node).unwrap());
        }
    }

    #[test]
    fn bilinear_examples() {
        let g = grid(3);
        let h = g.h();
        let nodes = (0..6).flat_map(|i| (0..6).map(move |j| (Node::new(i, j), 7.5)));
        let f = ScalarField::from_nodes(g, nodes);
        assert!((interpolate_bilinear(&f, [0.3, 0.41]).unwrap() - 7.5).abs() < 1e-14);

        let unit = ScalarField::from_nodes(
            g,
            [
                (Node::new(0, 0), 0.0),
                (Node::new(1, 0), 1.0),
                (Node::new(0, 1), 0.0),
                (Node::new(1, 1), 1.0),
            ],
        );
        assert_eq!(
            interpolate_bilinear(&unit, [0.5 * h, 0.5 * h]).unwrap(),
            0.5
        );
        assert!(matches!(
            interpolate_bilinear(&unit, [1.5 * h, 0.5 * h]),
            Err(FieldError::OutsideBand(..))
        ));

        let lin = ScalarField::from_nodes(
            g,
            (0..6).flat_map(|i| {
                (0..6).map(move |j| (Node::new(i, j), 2.0 * i as f64 * h + 3.0 * j as f64 * h))
            }),
        );
        for (a, b) in [(0.5, 0.5), (2.5, 1.5), (4.5, 3.5)] {
            let x = [a * h, b * h];
            let exact = 2.0 * x[0] + 3.0 * x[1];
            assert!((interpolate_bilinear(&lin, x).unwrap() - exact).abs() <= 1e-12 * exact.abs());
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(
            project_to_interface([0.6, 0.0], 0.1, [1.0, 0.0]).unwrap(),
            [0.5, 0.0]
        );
        assert_eq!(
            project_to_interface([0.3, 0.2], 0.0, [0.6, 0.8]).unwrap(),
            [0.3, 0.2]
        );
        assert_eq!(
            project_to_interface([0.3, 0.2], 0.1, [0.0, 0.0]),
            Err(FieldError::DegenerateProjection)
        );
    }

    #[test]
    fn reinitialize_zero_steps_is_identity() {
        let g = grid(6);
        let f = evaluate(
            &g,
            &|x: Point| x[0] * x[0] + x[1] * x[1] - 0.0625,
            &Region::centered([0.0, 0.0], 0.5),
        )
        .unwrap();
        assert_eq!(reinitialize(&f, 0), f);
    }

    #[test]
    fn reinitialize_keeps_exact_sdf_nearly_fixed() {
        let g = grid(7);
        let h = g.h();
        let f = evaluate(&g, &circle_sdf(0.25), &Region::centered([0.0, 0.0], 0.45)).unwrap();
        let r = reinitialize(&f, 10);
        let worst = f
            .nodes()
            .filter(|(_, v)| v.abs() <= 2.0 * h)
            .map(|(n, v)| (r.get(n).unwrap() - v).abs())
            .fold(0.0, f64::max);
        // first-order upwinding leaves an O(h^2 kappa) residual, about 0.02h here
        assert!(worst < 0.03 * h, "max change {} h", worst / h);
    }

    #[test]
    fn reinitialize_repairs_quadratic_circle() {
        let g = grid(7);
        let f = evaluate(
            &g,
            &|x: Point| x[0] * x[0] + x[1] * x[1] - 0.0625,
            &Region::centered([0.0, 0.0], 0.45),
        )
        .unwrap();
        let r = reinitialize(&f, 10);
        for n in interface_nodes(&r) {
            let d = StencilDerivatives::from_stencil(&r.stencil(n).unwrap(), g.h());
            let gn = d.gradient_norm();
            assert!((0.9..=1.1).contains(&gn), "gradient norm {gn}");
        }
    }

    #[test]
    fn reinitialize_preserves_sign() {
        let g = grid(6);
        let h = g.h();
        let f = evaluate(
            &g,
            &|x: Point| 3.0 * ((x[0] * 1.3).hypot(x[1]) - 0.3),
            &Region::centered([0.0, 0.0], 0.6),
        )
        .unwrap();
        let r = reinitialize(&f, 20);
        for (n, v) in f.nodes() {
            if v.abs() > h / 10.0 {
                assert_eq!(
                    v.signum(),
                    r.get(n).unwrap().signum(),
                    "{n:?} {} {}",
                    v / h,
                    r.get(n).unwrap() / h
                );
            }
        }
    }
}
