//! Discrete graphs on masked uniform grids.
//!
//! Every domain is realized as a rectangle of nodes with a mask. A node is
//! [`NodeKind::Interior`] when it and its full 3×3 (or 3-point in 1D) stencil
//! lie in the closed domain; remaining in-domain nodes carry Dirichlet data.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    Dirichlet,
    Outside,
}

impl NodeKind {
    pub fn in_domain(self) -> bool {
        !matches!(self, NodeKind::Outside)
    }
}

/// Planar (or 1D) domains supported by the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },
    Disk { center: [f64; 2], radius: f64 },
    /// `{x₁ ≥ 0, |x| ≤ radius}`.
    HalfDisk { radius: f64 },
    /// `{0 ≤ x₁ ≤ width, |x₂| ≤ half_length}`.
    Slab { width: f64, half_length: f64 },
    /// `{|arg x| ≤ half_angle, |x| ≤ radius}`, opening about `e₁`.
    Wedge { half_angle: f64, radius: f64 },
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn project_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [a[0] + t * d[0], a[1] + t * d[1]]
}

fn nearest(p: [f64; 2], candidates: &[[f64; 2]]) -> [f64; 2] {
    *candidates
        .iter()
        .min_by(|a, b| dist2(p, **a).total_cmp(&dist2(p, **b)))
        .expect("at least one candidate")
}

impl Domain {
    pub fn dims(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Domain::Interval { .. } => "interval",
            Domain::Rectangle { .. } => "rectangle",
            Domain::Disk { .. } => "disk",
            Domain::HalfDisk { .. } => "half-disk",
            Domain::Slab { .. } => "slab-strip",
            Domain::Wedge { .. } => "wedge-sector",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { a, b } => a < b,
            Domain::Rectangle { x_min, x_max, y_min, y_max } => x_min < x_max && y_min < y_max,
            Domain::Disk { radius, .. } | Domain::HalfDisk { radius } => radius > 0.0,
            Domain::Slab { width, half_length } => width > 0.0 && half_length > 0.0,
            Domain::Wedge { half_angle, radius } => {
                radius > 0.0 && half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(param("domain", format!("degenerate {} parameters", self.tag())))
        }
    }

    /// `(lower-left, upper-right)` corners of the bounding box.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::Interval { a, b } => ([a, 0.0], [b, 0.0]),
            Domain::Rectangle { x_min, x_max, y_min, y_max } => ([x_min, y_min], [x_max, y_max]),
            Domain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::HalfDisk { radius } => ([0.0, -radius], [radius, radius]),
            Domain::Slab { width, half_length } => ([0.0, -half_length], [width, half_length]),
            Domain::Wedge { half_angle, radius } => {
                let y = radius * half_angle.sin();
                ([0.0, -y], [radius, y])
            }
        }
    }

    /// Membership in the closed domain, with absolute slack `tol`.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        match *self {
            Domain::Interval { a, b } => p[0] >= a - tol && p[0] <= b + tol,
            Domain::Rectangle { x_min, x_max, y_min, y_max } => {
                p[0] >= x_min - tol && p[0] <= x_max + tol && p[1] >= y_min - tol && p[1] <= y_max + tol
            }
            Domain::Disk { center, radius } => dist2(p, center).sqrt() <= radius + tol,
            Domain::HalfDisk { radius } => p[0] >= -tol && (p[0] * p[0] + p[1] * p[1]).sqrt() <= radius + tol,
            Domain::Slab { width, half_length } => {
                p[0] >= -tol && p[0] <= width + tol && p[1].abs() <= half_length + tol
            }
            Domain::Wedge { half_angle, radius } => {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if r > radius + tol {
                    return false;
                }
                // Distance to the two rays bounding the sector.
                let (s, c) = half_angle.sin_cos();
                let inside_upper = p[1] * c - p[0] * s <= tol;
                let inside_lower = -p[1] * c - p[0] * s <= tol;
                inside_upper && inside_lower && p[0] >= -tol
            }
        }
    }

    /// Image under `x ↦ s·x`.
    pub fn scaled(&self, s: f64) -> Domain {
        match *self {
            Domain::Interval { a, b } => Domain::Interval { a: s * a, b: s * b },
            Domain::Rectangle { x_min, x_max, y_min, y_max } => Domain::Rectangle {
                x_min: s * x_min,
                x_max: s * x_max,
                y_min: s * y_min,
                y_max: s * y_max,
            },
            Domain::Disk { center, radius } => Domain::Disk {
                center: [s * center[0], s * center[1]],
                radius: s * radius,
            },
            Domain::HalfDisk { radius } => Domain::HalfDisk { radius: s * radius },
            Domain::Slab { width, half_length } => Domain::Slab {
                width: s * width,
                half_length: s * half_length,
            },
            Domain::Wedge { half_angle, radius } => Domain::Wedge {
                half_angle,
                radius: s * radius,
            },
        }
    }

    /// Nearest point of the boundary.
    pub fn project_to_boundary(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            Domain::Interval { a, b } => {
                if (p[0] - a).abs() <= (p[0] - b).abs() {
                    [a, 0.0]
                } else {
                    [b, 0.0]
                }
            }
            Domain::Rectangle { x_min, x_max, y_min, y_max } => {
                let c = [p[0].clamp(x_min, x_max), p[1].clamp(y_min, y_max)];
                nearest(
                    p,
                    &[[x_min, c[1]], [x_max, c[1]], [c[0], y_min], [c[0], y_max]],
                )
            }
            Domain::Disk { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if r == 0.0 {
                    [center[0] + radius, center[1]]
                } else {
                    [center[0] + radius * d[0] / r, center[1] + radius * d[1] / r]
                }
            }
            Domain::HalfDisk { radius } => {
                let flat = [0.0, p[1].clamp(-radius, radius)];
                let t = p[1].atan2(p[0].max(0.0)).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
                let arc = [radius * t.cos(), radius * t.sin()];
                nearest(p, &[flat, arc])
            }
            Domain::Slab { width, half_length } => {
                let c = [p[0].clamp(0.0, width), p[1].clamp(-half_length, half_length)];
                nearest(
                    p,
                    &[[0.0, c[1]], [width, c[1]], [c[0], -half_length], [c[0], half_length]],
                )
            }
            Domain::Wedge { half_angle, radius } => {
                let (s, c) = half_angle.sin_cos();
                let upper = project_segment(p, [0.0, 0.0], [radius * c, radius * s]);
                let lower = project_segment(p, [0.0, 0.0], [radius * c, -radius * s]);
                let t = p[1].atan2(p[0]).clamp(-half_angle, half_angle);
                let arc = [radius * t.cos(), radius * t.sin()];
                nearest(p, &[upper, lower, arc])
            }
        }
    }
}

/// Uniform grid geometry: `nx × ny` nodes (`ny = 1` in 1D), row-major with
/// `x₁` varying fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: usize,
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub h: f64,
}

impl GridSpec {
    pub fn new(dims: usize, nx: usize, ny: usize, origin: [f64; 2], h: f64) -> Result<Self> {
        if !(dims == 1 || dims == 2) {
            return Err(param("dims", "only base dimensions 1 and 2 are supported"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(param("h", "grid spacing must be positive"));
        }
        if nx < 3 || (dims == 2 && ny < 3) || (dims == 1 && ny != 1) {
            return Err(param("nx", "grid needs at least 3 nodes per axis"));
        }
        Ok(Self { dims, nx, ny, origin, h })
    }

    /// Grid with spacing `h` anchored at the lower-left corner of the domain's
    /// bounding box.
    pub fn covering(domain: &Domain, h: f64) -> Result<Self> {
        domain.validate()?;
        let (lo, hi) = domain.bounding_box();
        let count = |len: f64| ((len / h) - 1e-9).ceil().max(2.0) as usize + 1;
        if domain.dims() == 1 {
            Self::new(1, count(hi[0] - lo[0]), 1, lo, h)
        } else {
            Self::new(2, count(hi[0] - lo[0]), count(hi[1] - lo[1]), lo, h)
        }
    }

    /// Grid with `resolution` nodes along the longer bounding-box side.
    pub fn with_resolution(domain: &Domain, resolution: usize) -> Result<Self> {
        if resolution < 3 {
            return Err(param("resolution", "need at least 3 nodes"));
        }
        domain.validate()?;
        let (lo, hi) = domain.bounding_box();
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Self::covering(domain, extent / (resolution - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        if self.dims == 1 {
            [self.origin[0] + i as f64 * self.h, 0.0]
        } else {
            [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
        }
    }

    pub fn point_of(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        self.point(i, j)
    }

    /// Offsets of the full stencil around a node (excluding the node itself).
    pub(crate) fn stencil(&self) -> &'static [(i64, i64)] {
        if self.dims == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
        }
    }

    pub fn neighbor(&self, i: usize, j: usize, di: i64, dj: i64) -> Option<usize> {
        let ii = i as i64 + di;
        let jj = j as i64 + dj;
        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
            None
        } else {
            Some(self.index(ii as usize, jj as usize))
        }
    }

    /// Node nearest to `p` (clamped to the grid).
    pub fn nearest_index(&self, p: [f64; 2]) -> usize {
        let fi = ((p[0] - self.origin[0]) / self.h).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let fj = if self.dims == 1 {
            0
        } else {
            ((p[1] - self.origin[1]) / self.h).round().clamp(0.0, (self.ny - 1) as f64) as usize
        };
        self.index(fi, fj)
    }
}

/// Central-difference first and second derivatives at a node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodeDerivatives {
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// A function `w` sampled on a masked grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGraph {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<NodeKind>,
    pub domain: Option<Domain>,
}

impl DiscreteGraph {
    /// Mask from a membership predicate: interior nodes are in-domain with a
    /// full in-domain stencil.
    pub fn build_mask(grid: &GridSpec, inside: impl Fn([f64; 2]) -> bool) -> Vec<NodeKind> {
        let member: Vec<bool> = (0..grid.len()).map(|k| inside(grid.point_of(k))).collect();
        (0..grid.len())
            .map(|k| {
                if !member[k] {
                    return NodeKind::Outside;
                }
                let (i, j) = grid.coords(k);
                let full = grid
                    .stencil()
                    .iter()
                    .all(|&(di, dj)| grid.neighbor(i, j, di, dj).is_some_and(|n| member[n]));
                if full {
                    NodeKind::Interior
                } else {
                    NodeKind::Dirichlet
                }
            })
            .collect()
    }

    fn domain_mask(domain: &Domain, grid: &GridSpec) -> Vec<NodeKind> {
        let tol = 1e-9 * grid.h;
        Self::build_mask(grid, |p| domain.contains(p, tol))
    }

    /// Samples `f` at every in-domain node.
    pub fn sample(domain: &Domain, grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mask = Self::domain_mask(domain, &grid);
        let values = (0..grid.len())
            .map(|k| if mask[k].in_domain() { f(grid.point_of(k)) } else { f64::NAN })
            .collect();
        let g = Self {
            grid,
            values,
            mask,
            domain: Some(domain.clone()),
        };
        g.validate()?;
        Ok(g)
    }

    /// Dirichlet nodes get `data` at the node itself (every Dirichlet node lies
    /// in the closed domain within one cell of the boundary); interior nodes
    /// start at zero.
    pub fn with_boundary_data(domain: &Domain, grid: GridSpec, data: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::with_boundary_rule(domain, grid, |node, _| data(node))
    }

    /// Dirichlet nodes get `data` at their nearest boundary point.
    pub fn with_projected_boundary_data(domain: &Domain, grid: GridSpec, data: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::with_boundary_rule(domain, grid, |_, projected| data(projected))
    }

    /// Dirichlet value from `rule(node, nearest boundary point)`.
    pub fn with_boundary_rule(domain: &Domain, grid: GridSpec, rule: impl Fn([f64; 2], [f64; 2]) -> f64) -> Result<Self> {
        let mask = Self::domain_mask(domain, &grid);
        let values = (0..grid.len())
            .map(|k| match mask[k] {
                NodeKind::Dirichlet => {
                    let p = grid.point_of(k);
                    rule(p, domain.project_to_boundary(p))
                }
                NodeKind::Interior => 0.0,
                NodeKind::Outside => f64::NAN,
            })
            .collect();
        let g = Self {
            grid,
            values,
            mask,
            domain: Some(domain.clone()),
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid and mask given explicitly (used by importers and rescaling).
    pub fn from_parts(grid: GridSpec, values: Vec<f64>, mask: Vec<NodeKind>, domain: Option<Domain>) -> Result<Self> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::Format(format!(
                "expected {} nodes, got {} values and {} mask entries",
                grid.len(),
                values.len(),
                mask.len()
            )));
        }
        let g = Self {
            grid,
            values,
            mask,
            domain,
        };
        g.validate()?;
        Ok(g)
    }

    /// Values finite on in-domain nodes and every interior stencil in-domain.
    pub fn validate(&self) -> Result<()> {
        if !self.mask.contains(&NodeKind::Interior) && self.grid.dims == 2 && self.grid.len() > 9 {
            log::debug!("graph has no interior nodes");
        }
        for k in 0..self.grid.len() {
            let (i, j) = self.grid.coords(k);
            match self.mask[k] {
                NodeKind::Outside => {}
                kind => {
                    if !self.values[k].is_finite() {
                        return Err(Error::Mask {
                            i,
                            j,
                            reason: format!("non-finite value on {kind:?} node"),
                        });
                    }
                    if kind == NodeKind::Interior {
                        for &(di, dj) in self.grid.stencil() {
                            let ok = self
                                .grid
                                .neighbor(i, j, di, dj)
                                .is_some_and(|n| self.mask[n].in_domain());
                            if !ok {
                                return Err(Error::Mask {
                                    i,
                                    j,
                                    reason: format!("stencil offset ({di}, {dj}) leaves the domain"),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn dims(&self) -> usize {
        self.grid.dims
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.mask[k] == NodeKind::Interior).collect()
    }

    pub fn dirichlet_indices(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.mask[k] == NodeKind::Dirichlet).collect()
    }

    pub fn domain_indices(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.mask[k].in_domain()).collect()
    }

    /// `(min, max)` over in-domain nodes.
    pub fn value_bounds(&self) -> (f64, f64) {
        self.bounds_over(|k| self.mask[k].in_domain())
    }

    /// `(min, max)` over Dirichlet nodes.
    pub fn boundary_bounds(&self) -> (f64, f64) {
        self.bounds_over(|k| self.mask[k] == NodeKind::Dirichlet)
    }

    fn bounds_over(&self, keep: impl Fn(usize) -> bool) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..self.grid.len() {
            if keep(k) {
                lo = lo.min(self.values[k]);
                hi = hi.max(self.values[k]);
            }
        }
        (lo, hi)
    }

    /// A positive magnitude for relative tolerances: the value range, or the
    /// largest magnitude when the graph is constant, or one.
    pub fn scale(&self) -> f64 {
        let (lo, hi) = self.value_bounds();
        let range = hi - lo;
        if range > 0.0 {
            range
        } else {
            let m = lo.abs().max(hi.abs());
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    }

    pub fn max_abs_diff(&self, other: &DiscreteGraph) -> f64 {
        self.domain_indices()
            .into_iter()
            .filter(|&k| other.mask.get(k).is_some_and(|m| m.in_domain()))
            .map(|k| (self.values[k] - other.values[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with `f(x, w)` applied to every in-domain value.
    pub fn map_values(&self, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let mut out = self.clone();
        for k in 0..self.grid.len() {
            if self.mask[k].in_domain() {
                out.values[k] = f(self.grid.point_of(k), self.values[k]);
            }
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map_values(|_, w| w + c)
    }

    pub fn same_layout(&self, other: &DiscreteGraph) -> bool {
        self.grid == other.grid && self.mask == other.mask
    }

    /// Central differences at node `k`; requires the full stencil in-domain.
    pub fn derivatives(&self, k: usize) -> NodeDerivatives {
        let (i, j) = self.grid.coords(k);
        let h = self.grid.h;
        let nx = self.grid.nx;
        let w = &self.values;
        let c = w[k];
        let mut d = NodeDerivatives::default();
        let e = w[k + 1];
        let west = w[k - 1];
        d.gradient[0] = (e - west) / (2.0 * h);
        d.hessian[0][0] = (e - 2.0 * c + west) / (h * h);
        if self.grid.dims == 2 {
            debug_assert!(i > 0 && j > 0);
            let n = w[k + nx];
            let s = w[k - nx];
            d.gradient[1] = (n - s) / (2.0 * h);
            d.hessian[1][1] = (n - 2.0 * c + s) / (h * h);
            let xy = (w[k + nx + 1] - w[k + nx - 1] - w[k - nx + 1] + w[k - nx - 1]) / (4.0 * h * h);
            d.hessian[0][1] = xy;
            d.hessian[1][0] = xy;
        }
        d
    }

    /// Bilinear (linear in 1D) interpolation; `None` when a corner is outside
    /// the domain or `p` lies off the grid.
    pub fn interpolate(&self, p: [f64; 2]) -> Option<f64> {
        let g = &self.grid;
        let fx = (p[0] - g.origin[0]) / g.h;
        let eps = 1e-9;
        if fx < -eps || fx > (g.nx - 1) as f64 + eps {
            return None;
        }
        let fx = fx.clamp(0.0, (g.nx - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx - 2);
        let tx = fx - i0 as f64;
        if g.dims == 1 {
            let (a, b) = (g.index(i0, 0), g.index(i0 + 1, 0));
            if !(self.mask[a].in_domain() && self.mask[b].in_domain()) {
                return None;
            }
            return Some(self.values[a] * (1.0 - tx) + self.values[b] * tx);
        }
        let fy = (p[1] - g.origin[1]) / g.h;
        if fy < -eps || fy > (g.ny - 1) as f64 + eps {
            return None;
        }
        let fy = fy.clamp(0.0, (g.ny - 1) as f64);
        let j0 = (fy.floor() as usize).min(g.ny - 2);
        let ty = fy - j0 as f64;
        let corners = [
            g.index(i0, j0),
            g.index(i0 + 1, j0),
            g.index(i0, j0 + 1),
            g.index(i0 + 1, j0 + 1),
        ];
        // Corners with zero weight may sit outside the domain.
        let weights = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        let mut acc = 0.0;
        for (c, wgt) in corners.iter().zip(weights) {
            if wgt == 0.0 {
                continue;
            }
            if !self.mask[*c].in_domain() {
                return None;
            }
            acc += wgt * self.values[*c];
        }
        Some(acc)
    }
}
