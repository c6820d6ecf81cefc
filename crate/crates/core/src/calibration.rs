//! Anisotropic area of graphs, the calibration field `∇Φ(ν)` and the
//! cylinder-excision energy comparison.
//!
//! Energies use `Φ(ν) dHⁿ = φ(∇w) dx` with `φ(z) = Φ(−z, 1)`, so no surface
//! mesh is built. Quadrature is midpoint on grid cells.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{DiscreteGraph, NodeKind};
use crate::linalg::pairwise_sum;
use crate::wulff::AnisotropyIntegrand;

/// Subset of the base domain selected by cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "kebab-case")]
pub enum Region {
    All,
    Disk { center: [f64; 2], radius: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::All => true,
            Region::Disk { center, radius } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) < radius * radius
            }
            Region::Rectangle { lo, hi } => p[0] >= lo[0] && p[0] < hi[0] && p[1] >= lo[1] && p[1] < hi[1],
        }
    }

    /// Image under `x ↦ s·x`.
    pub fn scaled(&self, s: f64) -> Region {
        match self {
            Region::All => Region::All,
            Region::Disk { center, radius } => Region::Disk {
                center: [s * center[0], s * center[1]],
                radius: s * radius,
            },
            Region::Rectangle { lo, hi } => Region::Rectangle {
                lo: [s * lo[0], s * lo[1]],
                hi: [s * hi[0], s * hi[1]],
            },
        }
    }
}

/// Lower-left node indices of the cells whose corners are all in-domain.
fn cells(g: &DiscreteGraph) -> Vec<usize> {
    let grid = &g.grid;
    let ok = |k: usize| g.mask[k].in_domain();
    if grid.dims == 1 {
        return (0..grid.nx - 1).filter(|&i| ok(i) && ok(i + 1)).collect();
    }
    let nx = grid.nx;
    (0..grid.ny - 1)
        .flat_map(|j| (0..nx - 1).map(move |i| j * nx + i))
        .filter(|&k| ok(k) && ok(k + 1) && ok(k + nx) && ok(k + nx + 1))
        .collect()
}

/// Cell center and the gradient of the bilinear interpolant there.
fn cell_center(g: &DiscreteGraph, k: usize) -> ([f64; 2], [f64; 2]) {
    let h = g.h();
    let p = g.grid.point_of(k);
    let w = &g.values;
    if g.dims() == 1 {
        return ([p[0] + 0.5 * h, 0.0], [(w[k + 1] - w[k]) / h, 0.0]);
    }
    let nx = g.grid.nx;
    let (w00, w10, w01, w11) = (w[k], w[k + 1], w[k + nx], w[k + nx + 1]);
    (
        [p[0] + 0.5 * h, p[1] + 0.5 * h],
        [(w10 + w11 - w00 - w01) / (2.0 * h), (w01 + w11 - w00 - w10) / (2.0 * h)],
    )
}

/// `∫_region Φ(−∇w, 1) dx` by the midpoint rule on cells whose center lies in
/// `region`.
pub fn anisotropic_area(phi: &AnisotropyIntegrand, g: &DiscreteGraph, region: &Region) -> Result<f64> {
    if phi.base_dim() != g.dims() {
        return Err(Error::Setup("integrand and graph dimensions disagree".into()));
    }
    let dims = g.dims();
    let measure = g.h().powi(dims as i32);
    let terms: Vec<f64> = cells(g)
        .par_iter()
        .filter_map(|&k| {
            let (c, grad) = cell_center(g, k);
            region
                .contains(c)
                .then(|| phi.graph_value(&grad[..dims]) * measure)
        })
        .collect();
    if terms.is_empty() {
        log::warn!("anisotropic area over an empty region");
    }
    Ok(pairwise_sum(&terms))
}

/// `∇Φ(ν)` at every interior node, `ν` the upward unit normal.
pub fn calibration_field(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Result<Vec<Option<DVector<f64>>>> {
    if phi.base_dim() != g.dims() {
        return Err(Error::Setup("integrand and graph dimensions disagree".into()));
    }
    let n = g.dims();
    (0..g.grid.len())
        .into_par_iter()
        .map(|k| {
            if g.mask[k] != NodeKind::Interior {
                return Ok(None);
            }
            let d = g.derivatives(k);
            let mut nu = DVector::zeros(n + 1);
            for i in 0..n {
                nu[i] = -d.gradient[i];
            }
            nu[n] = 1.0;
            phi.gradient(&nu).map(Some)
        })
        .collect()
}

/// `min Φ(a) − ∇Φ(ν(x))·a` over interior nodes and the given unit directions.
pub fn calibration_slack(phi: &AnisotropyIntegrand, g: &DiscreteGraph, directions: &[DVector<f64>]) -> Result<f64> {
    let field = calibration_field(phi, g)?;
    let bounds: Vec<f64> = directions.iter().map(|a| phi.value(a)).collect::<Result<_>>()?;
    Ok(field
        .par_iter()
        .flatten()
        .map(|x| {
            directions
                .iter()
                .zip(&bounds)
                .map(|(a, pa)| pa - x.dot(a))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min))
}

/// Flux `−∇φ(p)` with the horizontal components of `∇Φ(−p, 1)`.
fn flux(phi: &AnisotropyIntegrand, p: &[f64]) -> [f64; 2] {
    let grad = phi.graph_integrand(p).gradient;
    let mut out = [0.0; 2];
    for i in 0..p.len() {
        out[i] = -grad[i];
    }
    out
}

/// Discrete divergence of the horizontal calibration components, from fluxes
/// at the four half-nodes around each interior node. Equals `−residual` up
/// to `O(h²)`; zero off the interior.
pub fn calibration_divergence(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Result<Vec<f64>> {
    if phi.base_dim() != g.dims() {
        return Err(Error::Setup("integrand and graph dimensions disagree".into()));
    }
    g.validate()?;
    let h = g.h();
    let nx = g.grid.nx;
    let w = &g.values;
    let dims = g.dims();
    Ok((0..g.grid.len())
        .into_par_iter()
        .map(|k| {
            if g.mask[k] != NodeKind::Interior {
                return 0.0;
            }
            if dims == 1 {
                let east = flux(phi, &[(w[k + 1] - w[k]) / h])[0];
                let west = flux(phi, &[(w[k] - w[k - 1]) / h])[0];
                return (east - west) / h;
            }
            // Half-node gradients: normal derivative by a two-point difference,
            // tangential derivative by averaging two central differences.
            let east = [
                (w[k + 1] - w[k]) / h,
                (w[k + nx] + w[k + nx + 1] - w[k - nx] - w[k - nx + 1]) / (4.0 * h),
            ];
            let west = [
                (w[k] - w[k - 1]) / h,
                (w[k + nx] + w[k + nx - 1] - w[k - nx] - w[k - nx - 1]) / (4.0 * h),
            ];
            let north = [
                (w[k + 1] + w[k + nx + 1] - w[k - 1] - w[k + nx - 1]) / (4.0 * h),
                (w[k + nx] - w[k]) / h,
            ];
            let south = [
                (w[k + 1] + w[k - nx + 1] - w[k - 1] - w[k - nx - 1]) / (4.0 * h),
                (w[k] - w[k - nx]) / h,
            ];
            (flux(phi, &east)[0] - flux(phi, &west)[0]) / h + (flux(phi, &north)[1] - flux(phi, &south)[1]) / h
        })
        .collect())
}

/// `A_Φ(v) − A_Φ(g)` over the whole domain; `v` must share grid, mask and
/// Dirichlet values with `g`.
pub fn competitor_gap(phi: &AnisotropyIntegrand, g: &DiscreteGraph, v: &DiscreteGraph) -> Result<f64> {
    if !g.same_layout(v) {
        return Err(Error::Setup("competitor has a different grid or mask".into()));
    }
    for k in g.dirichlet_indices() {
        if g.values[k] != v.values[k] {
            let (i, j) = g.grid.coords(k);
            return Err(Error::Mask {
                i,
                j,
                reason: "competitor changes the Dirichlet data".into(),
            });
        }
    }
    Ok(anisotropic_area(phi, v, &Region::All)? - anisotropic_area(phi, g, &Region::All)?)
}

/// `B_r(c) × (s, t)` in `ℝ³` with its axis along coordinate `axis`; the
/// cross-section disk lives in the two remaining coordinates, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub axis: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub s: f64,
    pub t: f64,
}

impl Cylinder {
    pub fn new(axis: usize, center: [f64; 2], radius: f64, s: f64, t: f64) -> Result<Self> {
        if axis > 2 {
            return Err(param("axis", "must be 0, 1 or 2"));
        }
        if !(radius > 0.0) {
            return Err(param("radius", "must be positive"));
        }
        if !(s < t) {
            return Err(param("s", "axial interval must satisfy s < t"));
        }
        Ok(Self {
            axis,
            center,
            radius,
            s,
            t,
        })
    }

    /// `{|x₁| < h} × B` with `B ⊂ (x₂, x₃)`.
    pub fn slab(center: [f64; 2], radius: f64, h: f64) -> Result<Self> {
        Self::new(0, center, radius, -h, h)
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        let (a, b) = match self.axis {
            0 => (x[1], x[2]),
            1 => (x[0], x[2]),
            _ => (x[0], x[1]),
        };
        let r2 = (a - self.center[0]).powi(2) + (b - self.center[1]).powi(2);
        x[self.axis] > self.s && x[self.axis] < self.t && r2 < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcisionOptions {
    /// Subcells per grid cell and axis for the sheet integral.
    pub subsample: usize,
    /// Angular nodes for face and lateral integrals.
    pub angular: usize,
    /// Axial nodes for the lateral integral.
    pub axial: usize,
}

impl Default for ExcisionOptions {
    fn default() -> Self {
        Self {
            subsample: 4,
            angular: 4096,
            axial: 64,
        }
    }
}

/// Energies of the graph inside `Q` and of the surgery competitor
/// `∂(E \ Q)`, `E` the region below the graph.
///
/// The comparison neighborhood `U` is the `2h`-dilation of `Q`; the competitor
/// agrees with the graph outside `Q`, so only the pieces inside `Q̄` differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcisionReport {
    pub sheet_area: f64,
    /// Disk faces `{x₁ = ±h} ∩ B ∩ E` weighted by `Φ` of their outer normals.
    pub face_area: f64,
    /// Thin sides `(−h, h) × ∂B ∩ E` weighted by `Φ(0, −n_B)`.
    pub lateral_area: f64,
    pub replacement_area: f64,
    pub gap: f64,
    pub h: f64,
    /// Sum of Richardson differences of the three quadratures.
    pub budget: f64,
    pub neighborhood_dilation: f64,
}

fn ambient(v: [f64; 3]) -> DVector<f64> {
    DVector::from_column_slice(&v)
}

fn sheet_area(phi: &AnisotropyIntegrand, g: &DiscreteGraph, q: &Cylinder, sub: usize) -> f64 {
    let h = g.h();
    let nx = g.grid.nx;
    let hs = h / sub as f64;
    let terms: Vec<f64> = cells(g)
        .par_iter()
        .map(|&k| {
            let p = g.grid.point_of(k);
            if p[0] + h <= q.s || p[0] >= q.t {
                return 0.0;
            }
            let w = &g.values;
            let (w00, w10, w01, w11) = (w[k], w[k + 1], w[k + nx], w[k + nx + 1]);
            let mut acc = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let tx = (a as f64 + 0.5) / sub as f64;
                    let ty = (b as f64 + 0.5) / sub as f64;
                    let x = [p[0] + tx * h, p[1] + ty * h];
                    let val = w00 * (1.0 - tx) * (1.0 - ty) + w10 * tx * (1.0 - ty) + w01 * (1.0 - tx) * ty + w11 * tx * ty;
                    if !q.contains([x[0], x[1], val]) {
                        continue;
                    }
                    let gx = ((w10 - w00) * (1.0 - ty) + (w11 - w01) * ty) / h;
                    let gy = ((w01 - w00) * (1.0 - tx) + (w11 - w10) * tx) / h;
                    acc += phi.graph_value(&[gx, gy]) * hs * hs;
                }
            }
            acc
        })
        .collect();
    pairwise_sum(&terms)
}

/// `|{(x₂, x₃) ∈ B : x₃ < w(x₁, x₂)}|` via `x₂ = c₂ + ρ sin θ`.
fn face_measure(g: &DiscreteGraph, q: &Cylinder, x1: f64, nodes: usize) -> Result<f64> {
    let rho = q.radius;
    let [c2, c3] = q.center;
    let dt = std::f64::consts::PI / nodes as f64;
    let terms: Vec<f64> = (0..nodes)
        .map(|m| {
            let theta = -std::f64::consts::FRAC_PI_2 + (m as f64 + 0.5) * dt;
            let x2 = c2 + rho * theta.sin();
            let half = rho * theta.cos();
            let w = g.interpolate([x1, x2]).ok_or_else(|| {
                Error::Domain(format!("graph undefined at ({x1:.4}, {x2:.4}) on a face of Q"))
            })?;
            let len = (w - (c3 - half)).clamp(0.0, 2.0 * half);
            Ok(len * rho * theta.cos() * dt)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms))
}

fn lateral_area(phi: &AnisotropyIntegrand, g: &DiscreteGraph, q: &Cylinder, angular: usize, axial: usize) -> Result<f64> {
    let rho = q.radius;
    let [c2, c3] = q.center;
    let da = std::f64::consts::TAU / angular as f64;
    let dx = (q.t - q.s) / axial as f64;
    let weights: Vec<f64> = (0..angular)
        .map(|m| {
            let a = (m as f64 + 0.5) * da;
            phi.value(&ambient([0.0, -a.cos(), -a.sin()]))
        })
        .collect::<Result<_>>()?;
    let terms: Vec<f64> = (0..axial * angular)
        .map(|idx| {
            let (i, m) = (idx / angular, idx % angular);
            let x1 = q.s + (i as f64 + 0.5) * dx;
            let a = (m as f64 + 0.5) * da;
            let x2 = c2 + rho * a.cos();
            let x3 = c3 + rho * a.sin();
            let w = g.interpolate([x1, x2]).ok_or_else(|| {
                Error::Domain(format!("graph undefined at ({x1:.4}, {x2:.4}) on the side of Q"))
            })?;
            Ok(if x3 < w { weights[m] * rho * da * dx } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms))
}

/// Energy comparison between the graph inside `Q = {s < x₁ < t} × B` and the
/// competitor obtained by removing `Q` from the subgraph region.
pub fn excision_gap(phi: &AnisotropyIntegrand, g: &DiscreteGraph, q: &Cylinder, opts: &ExcisionOptions) -> Result<ExcisionReport> {
    if g.dims() != 2 || phi.dim() != 3 {
        return Err(Error::Setup("excision needs a graph over a planar domain".into()));
    }
    if q.axis != 0 {
        return Err(param("axis", "excision cylinders have axis e₁"));
    }
    if opts.subsample == 0 || opts.angular < 2 || opts.axial < 2 {
        return Err(param("subsample", "quadrature resolutions must be positive"));
    }
    let sheet = sheet_area(phi, g, q, opts.subsample);
    if sheet == 0.0 {
        return Err(Error::Setup("the graph does not meet the cylinder".into()));
    }
    let sheet_coarse = sheet_area(phi, g, q, (opts.subsample / 2).max(1));
    // Outer normal of E \ Q on the face {x₁ = t} points into Q: −e₁.
    let minus_e1 = phi.value(&ambient([-1.0, 0.0, 0.0]))?;
    let plus_e1 = phi.value(&ambient([1.0, 0.0, 0.0]))?;
    let faces = |n: usize| -> Result<f64> {
        Ok(minus_e1 * face_measure(g, q, q.t, n)? + plus_e1 * face_measure(g, q, q.s, n)?)
    };
    let face = faces(opts.angular)?;
    let face_coarse = faces(opts.angular / 2)?;
    let lateral = lateral_area(phi, g, q, opts.angular, opts.axial)?;
    let lateral_coarse = lateral_area(phi, g, q, opts.angular / 2, opts.axial / 2)?;
    let replacement = face + lateral;
    let h = 0.5 * (q.t - q.s);
    Ok(ExcisionReport {
        sheet_area: sheet,
        face_area: face,
        lateral_area: lateral,
        replacement_area: replacement,
        gap: sheet - replacement,
        h,
        budget: (sheet - sheet_coarse).abs() + (face - face_coarse).abs() + (lateral - lateral_coarse).abs(),
        neighborhood_dilation: 2.0 * h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, GridSpec};

    fn unit_square() -> Domain {
        Domain::Rectangle { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    #[test]
    fn area_examples() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let grid = GridSpec::covering(&unit_square(), 1.0 / 16.0).unwrap();
        let flat = DiscreteGraph::sample(&unit_square(), grid, |_| 0.0).unwrap();
        assert!((anisotropic_area(&iso, &flat, &Region::All).unwrap() - 1.0).abs() < 1e-12);
        let s = 0.7;
        let tilt = DiscreteGraph::sample(&unit_square(), grid, |p| s * p[0]).unwrap();
        assert!((anisotropic_area(&iso, &tilt, &Region::All).unwrap() - (1.0 + s * s).sqrt()).abs() < 1e-12);

        let q = nalgebra::DMatrix::from_row_slice(3, 3, &[2.0, 0.2, 0.1, 0.2, 1.5, -0.3, 0.1, -0.3, 1.0]);
        let ell = AnisotropyIntegrand::ellipsoidal(q.clone()).unwrap();
        let z0 = [0.4, -1.1];
        let aff = DiscreteGraph::sample(&unit_square(), grid, |p| z0[0] * p[0] + z0[1] * p[1]).unwrap();
        let v = DVector::from_vec(vec![-z0[0], -z0[1], 1.0]);
        let expect = v.dot(&(&q * &v)).sqrt();
        assert!((anisotropic_area(&ell, &aff, &Region::All).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn area_is_additive_over_complementary_regions() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let grid = GridSpec::covering(&unit_square(), 1.0 / 20.0).unwrap();
        let g = DiscreteGraph::sample(&unit_square(), grid, |p| (3.0 * p[0]).sin() * p[1]).unwrap();
        let left = Region::Rectangle { lo: [0.0, 0.0], hi: [0.4, 1.0] };
        let right = Region::Rectangle { lo: [0.4, 0.0], hi: [1.0, 1.0] };
        let total = anisotropic_area(&iso, &g, &Region::All).unwrap();
        let parts = anisotropic_area(&iso, &g, &left).unwrap() + anisotropic_area(&iso, &g, &right).unwrap();
        assert!((total - parts).abs() < 1e-12);
        let empty = Region::Disk { center: [5.0, 5.0], radius: 0.1 };
        assert_eq!(anisotropic_area(&iso, &g, &empty).unwrap(), 0.0);
    }

    #[test]
    fn divergence_of_affine_graph_vanishes() {
        let phi = AnisotropyIntegrand::perturbed_isotropic(3, 0.03, 2.0, 0.7).unwrap();
        let grid = GridSpec::covering(&unit_square(), 0.1).unwrap();
        let g = DiscreteGraph::sample(&unit_square(), grid, |p| 0.2 - 0.8 * p[0] + 0.3 * p[1]).unwrap();
        let div = calibration_divergence(&phi, &g).unwrap();
        assert!(div.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn flat_slice_through_cylinder() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let dom = Domain::Rectangle { x_min: -0.5, x_max: 0.5, y_min: -1.5, y_max: 1.5 };
        let grid = GridSpec::covering(&dom, 1.0 / 64.0).unwrap();
        let c = 2.4;
        let g = DiscreteGraph::sample(&dom, grid, |_| c).unwrap();
        let h = 0.25;
        let q = Cylinder::slab([0.0, 2.0], 1.0, h).unwrap();
        let rep = excision_gap(&iso, &g, &q, &ExcisionOptions::default()).unwrap();
        let chord = 2.0 * (1.0 - (c - 2.0_f64).powi(2)).sqrt();
        assert!((rep.sheet_area - 2.0 * h * chord).abs() < 0.02, "{rep:?}");
    }

    #[test]
    fn missing_intersection_is_an_error() {
        let iso = AnisotropyIntegrand::isotropic(3).unwrap();
        let dom = Domain::Rectangle { x_min: -0.5, x_max: 0.5, y_min: -1.5, y_max: 1.5 };
        let grid = GridSpec::covering(&dom, 1.0 / 16.0).unwrap();
        let g = DiscreteGraph::sample(&dom, grid, |_| -5.0).unwrap();
        let q = Cylinder::slab([0.0, 2.0], 1.0, 0.25).unwrap();
        assert!(excision_gap(&iso, &g, &q, &ExcisionOptions::default()).is_err());
    }
}
