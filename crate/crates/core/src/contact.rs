//! Sliding scaled Wulff shapes `y + rK` up from below a graph until first
//! contact, and the measure estimate built on the resulting contact map.
//!
//! A copy of `rK` touches the graph on its upper cap. Over a horizontal
//! offset `q` from the center the cap height is
//! `cap(q) = min_p r·φ(p) + p·q`, attained where `r∇φ(p) + q = 0`; the
//! minimizer `p` is the slope of the cap and `(−p, 1)` its upward normal.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::slide_values;
use crate::error::{param, Error, Result};
use crate::graph_pde::{solve_dirichlet, SolveOptions, SolveReport};
use crate::grid::{DiscreteGraph, Domain, GridSpec, NodeKind};
use crate::linalg::sym_eigenvalues;
use crate::wulff::{AnisotropyIntegrand, SphereDirection, DEFAULT_LATTICE};

/// Point on the upper cap of `rK`, relative to the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapPoint {
    pub height: f64,
    pub slope: [f64; 2],
}

impl CapPoint {
    /// Upward unit normal `(−p, 1)/|(−p, 1)|`.
    pub fn normal(&self) -> [f64; 3] {
        let [a, b] = self.slope;
        let n = (1.0 + a * a + b * b).sqrt();
        [-a / n, -b / n, 1.0 / n]
    }
}

/// Upper boundary of `rK` as a graph over its horizontal projection.
#[derive(Clone, Debug)]
pub struct WulffProfile {
    phi: AnisotropyIntegrand,
    r: f64,
    reach: f64,
}

/// Profile of `rK` for a surface in `ℝ³`.
pub fn upper_wulff_profile(phi: &AnisotropyIntegrand, r: f64) -> Result<WulffProfile> {
    if phi.dim() != 3 {
        return Err(Error::Setup("contact profiles are implemented for surfaces in R^3".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(param("r", format!("must be positive, got {r}")));
    }
    // Horizontal reach of rK: largest |∇'Φ(ν)| over the sphere.
    let reach = crate::linalg::sphere_lattice(3, DEFAULT_LATTICE)
        .iter()
        .filter_map(|v| phi.gradient(v).ok())
        .map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt())
        .fold(0.0, f64::max);
    Ok(WulffProfile {
        phi: phi.clone(),
        r,
        reach: r * reach,
    })
}

impl WulffProfile {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Radius of a disk containing the projection of `rK` about its center.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Offset of the cap's highest point (where the normal is `e₃`).
    pub fn apex_offset(&self) -> [f64; 2] {
        let g = self.phi.graph_integrand(&[0.0, 0.0]).gradient;
        [-self.r * g[0], -self.r * g[1]]
    }

    fn objective(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.r * self.phi.graph_value(&p) + p[0] * q[0] + p[1] * q[1]
    }

    /// Cap height and slope at horizontal offset `q`; `None` outside the open
    /// projection of `rK` or when the slope exceeds `1e6`.
    pub fn eval(&self, q: [f64; 2]) -> Option<CapPoint> {
        let r = self.r;
        // Isotropic cap slope as the starting point.
        let qq = q[0] * q[0] + q[1] * q[1];
        let mut p = if qq < 0.81 * r * r {
            let s = (r * r - qq).sqrt();
            [-q[0] / s, -q[1] / s]
        } else {
            [0.0, 0.0]
        };
        let tol = 1e-14 * r.max(qq.sqrt());
        for _ in 0..200 {
            let gi = self.phi.graph_integrand(&p);
            let grad = [r * gi.gradient[0] + q[0], r * gi.gradient[1] + q[1]];
            if grad[0].hypot(grad[1]) <= tol {
                return Some(CapPoint {
                    height: r * gi.value + p[0] * q[0] + p[1] * q[1],
                    slope: p,
                });
            }
            let h = &gi.hessian * r;
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            if !(det > 0.0) {
                return None;
            }
            let step = [
                -(h[(1, 1)] * grad[0] - h[(0, 1)] * grad[1]) / det,
                -(-h[(1, 0)] * grad[0] + h[(0, 0)] * grad[1]) / det,
            ];
            let f0 = self.objective(p, q);
            let full = [p[0] + step[0], p[1] + step[1]];
            let gf = self.phi.graph_integrand(&full).gradient;
            // Near the minimizer objective differences drown in rounding, so a
            // full step that shrinks the gradient is always taken.
            if (r * gf[0] + q[0]).hypot(r * gf[1] + q[1]) < grad[0].hypot(grad[1]) {
                p = full;
                continue;
            }
            let mut t = 0.5;
            let slope_sq = grad[0] * step[0] + grad[1] * step[1];
            loop {
                let trial = [p[0] + t * step[0], p[1] + t * step[1]];
                if self.objective(trial, q) <= f0 + 1e-4 * t * slope_sq || t < 1e-12 {
                    p = trial;
                    break;
                }
                t *= 0.5;
            }
            if p[0].hypot(p[1]) > 1e6 {
                return None;
            }
        }
        None
    }
}

/// One contact event between a slid copy of `rK` and the surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub center: [f64; 3],
    pub contact: [f64; 3],
    /// Upward normal of the profile at the touching offset.
    pub normal: [f64; 3],
    pub height: f64,
    pub jacobian_det: f64,
    /// `|∇w|` at the contact node.
    pub gradient: f64,
    pub center_node: usize,
    pub contact_node: usize,
    /// Contact on the rim of the profile; excluded from the summary.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactOptions {
    pub delta: f64,
    pub c2: f64,
    /// Defaults to `0.1 × max curvature radius of K`.
    pub c3: Option<f64>,
    /// Cap slopes above this mark a rim contact.
    pub rim_slope: f64,
}

impl Default for ContactOptions {
    fn default() -> Self {
        Self {
            delta: 0.05,
            c2: 1.0,
            c3: None,
            rim_slope: 5.0,
        }
    }
}

/// Measured quantities of a contact run. Measures are node counts times `h²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSummary {
    pub delta: f64,
    pub r: f64,
    pub c2: f64,
    pub c3: f64,
    pub epsilon: f64,
    pub h: f64,
    pub centers: usize,
    pub flagged: usize,
    /// `|B_{1/3}|` on the grid.
    pub ball_measure: f64,
    /// `|G|`: distinct unflagged contact nodes in `B_{1/3}`.
    pub contact_measure: f64,
    pub center_measure: f64,
    pub deficit: f64,
    pub max_height: f64,
    pub max_gradient: f64,
    pub max_normal_deviation: f64,
    pub det_min: f64,
    pub det_max: f64,
    /// Largest over `δ`-balls in `B_{1/3}` of the smallest height, over `ε`.
    pub c0: f64,
    pub c1_height: f64,
    pub c1_gradient: f64,
    pub c1_deficit: f64,
    pub c1: f64,
    /// `max |ν − e₃| / δ^{1/2}`.
    pub normal_constant: f64,
    #[serde(skip)]
    pub g_nodes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ContactExperiment {
    pub records: Vec<ContactRecord>,
    pub summary: ContactSummary,
}

/// Cap values on lattice offsets `(di, dj)·h` within the profile's reach.
struct CapTable {
    half: i64,
    entries: Vec<Option<CapPoint>>,
}

impl CapTable {
    fn new(profile: &WulffProfile, h: f64) -> Self {
        let half = (profile.reach() / h).ceil() as i64 + 1;
        let side = (2 * half + 1) as usize;
        let entries = (0..side * side)
            .into_par_iter()
            .map(|idx| {
                let di = (idx % side) as i64 - half;
                let dj = (idx / side) as i64 - half;
                profile.eval([di as f64 * h, dj as f64 * h])
            })
            .collect();
        Self { half, entries }
    }

    fn get(&self, di: i64, dj: i64) -> Option<&CapPoint> {
        if di.abs() > self.half || dj.abs() > self.half {
            return None;
        }
        let side = 2 * self.half + 1;
        self.entries[((dj + self.half) * side + di + self.half) as usize].as_ref()
    }
}

fn surface_normal(g: &DiscreteGraph, k: usize) -> DVector<f64> {
    let d = g.derivatives(k);
    let v = DVector::from_vec(vec![-d.gradient[0], -d.gradient[1], 1.0]);
    let n = v.norm();
    v / n
}

fn jacobian_matrix(phi: &AnisotropyIntegrand, g: &DiscreteGraph, k: usize, r: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let d = g.derivatives(k);
    let nu = surface_normal(g, k);
    let w = (1.0 + d.gradient[0].powi(2) + d.gradient[1].powi(2)).sqrt();
    let dt = phi.tangential_hessian(&SphereDirection::new(nu)?)?;
    let tp = dt.basis.rows(0, 2).into_owned();
    let hess = DMatrix::from_fn(2, 2, |i, j| d.hessian[i][j]);
    let second = tp.transpose() * &hess * &tp / w;
    let dmat = dt.matrix;
    let jac = DMatrix::identity(2, 2) + &dmat * &second * r;
    Ok((jac, dmat, second))
}

/// `det(I + r D²_TΦ(ν) II_S)` at a contact node, with `ν` and `II_S` from
/// central differences of the surface there.
///
/// Fails with an integrity error when `I + r D^{1/2} II D^{1/2}` has an
/// eigenvalue below `−tolerance`, since a true contact forces it to be PSD.
pub fn contact_jacobian(phi: &AnisotropyIntegrand, surface: &DiscreteGraph, record: &ContactRecord, r: f64, tolerance: f64) -> Result<f64> {
    let k = record.contact_node;
    if surface.mask.get(k) != Some(&NodeKind::Interior) {
        return Err(Error::Setup(format!("contact node {k} is not an interior node")));
    }
    let (jac, dmat, second) = jacobian_matrix(phi, surface, k, r)?;
    let eig = dmat.clone().symmetric_eigen();
    let sqrt_d = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let sym = DMatrix::identity(2, 2) + &sqrt_d * &second * &sqrt_d * r;
    let lo = sym_eigenvalues(&sym)[0];
    if lo < -tolerance {
        let (i, j) = surface.grid.coords(k);
        return Err(Error::Integrity(format!(
            "D_x y has eigenvalue {lo:.3e} at contact node ({i}, {j}); second fundamental form {:?}",
            second.as_slice()
        )));
    }
    Ok(jac.determinant())
}

/// Determinant of the finite-difference Jacobian of the projected center map
/// `x' ↦ x' − r[∇Φ(ν(x'))]'` between the neighbors of node `k`.
pub fn fd_center_jacobian(phi: &AnisotropyIntegrand, surface: &DiscreteGraph, k: usize, r: f64) -> Result<f64> {
    let nx = surface.grid.nx;
    let h = surface.h();
    let center = |node: usize| -> Result<[f64; 2]> {
        if surface.mask[node] != NodeKind::Interior {
            return Err(Error::Setup(format!("node {node} lacks a full stencil")));
        }
        let p = surface.grid.point_of(node);
        let g = phi.gradient(&surface_normal(surface, node))?;
        Ok([p[0] - r * g[0], p[1] - r * g[1]])
    };
    let (e, wst, n, s) = (center(k + 1)?, center(k - 1)?, center(k + nx)?, center(k - nx)?);
    let j = [
        [(e[0] - wst[0]) / (2.0 * h), (n[0] - s[0]) / (2.0 * h)],
        [(e[1] - wst[1]) / (2.0 * h), (n[1] - s[1]) / (2.0 * h)],
    ];
    Ok(j[0][0] * j[1][1] - j[0][1] * j[1][0])
}

/// Smallest height over each ball `B_δ(x₀) ⊂ B_{1/3}` (centers on a lattice of
/// spacing `δ`), maximized over the balls.
pub fn max_min_height(surface: &DiscreteGraph, delta: f64) -> f64 {
    let limit = 1.0 / 3.0 - delta;
    let m = (limit / delta).floor() as i64;
    let mut worst = 0.0_f64;
    let nodes = surface.domain_indices();
    for a in -m..=m {
        for b in -m..=m {
            let c = [a as f64 * delta, b as f64 * delta];
            if c[0].hypot(c[1]) > limit + 1e-12 {
                continue;
            }
            let lo = nodes
                .iter()
                .filter(|&&k| {
                    let p = surface.grid.point_of(k);
                    (p[0] - c[0]).hypot(p[1] - c[1]) < delta
                })
                .map(|&k| surface.values[k])
                .fold(f64::INFINITY, f64::min);
            if lo.is_finite() {
                worst = worst.max(lo);
            }
        }
    }
    worst
}

/// Slides `C₂δ^{1/2}K` under every node of `B_{1/3 − C₃δ^{1/2}}`.
pub fn run_contact_experiment(phi: &AnisotropyIntegrand, surface: &DiscreteGraph, opts: &ContactOptions) -> Result<ContactExperiment> {
    if surface.dims() != 2 || phi.dim() != 3 {
        return Err(Error::Setup("contact experiments need a graph over a planar domain".into()));
    }
    let delta = opts.delta;
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(param("delta", format!("must lie in (0, 1/3), got {delta}")));
    }
    if !(opts.c2 > 0.0) || !(opts.rim_slope > 0.0) {
        return Err(param("c2", "C₂ and the rim slope must be positive"));
    }
    let grid = surface.grid;
    let h = grid.h;
    let origin = grid.nearest_index([0.0, 0.0]);
    let op = grid.point_of(origin);
    if op[0].hypot(op[1]) > 1e-9 * h || !surface.mask[origin].in_domain() {
        return Err(Error::Setup("the surface grid must contain the origin as a node".into()));
    }
    let ball: Vec<usize> = surface
        .domain_indices()
        .into_iter()
        .filter(|&k| {
            let p = grid.point_of(k);
            p[0].hypot(p[1]) < 1.0 - 1e-12
        })
        .collect();
    if let Some(&k) = ball.iter().find(|&&k| surface.values[k] < 0.0) {
        let (i, j) = grid.coords(k);
        return Err(Error::Mask {
            i,
            j,
            reason: "surface dips below the plane {x₃ = 0}".into(),
        });
    }
    let epsilon = surface.values[origin];

    let (_, rho_max) = phi.curvature_radius_bounds(DEFAULT_LATTICE);
    let c3 = opts.c3.unwrap_or(0.1 * rho_max);
    if !(c3 >= 0.0) {
        return Err(param("c3", "must be nonnegative"));
    }
    let r = opts.c2 * delta.sqrt();
    let profile = upper_wulff_profile(phi, r)?;
    let table = CapTable::new(&profile, h);
    let third = 1.0 / 3.0;
    let center_radius = third - c3 * delta.sqrt();
    let inside = |k: usize, rad: f64| {
        let p = grid.point_of(k);
        p[0].hypot(p[1]) < rad - 1e-12
    };
    let centers: Vec<usize> = ball.iter().copied().filter(|&k| inside(k, center_radius)).collect();
    let tol = crate::elliptic::contact_tolerance(surface);

    let records: Vec<ContactRecord> = centers
        .par_iter()
        .map(|&c| -> Result<ContactRecord> {
            let (ci, cj) = grid.coords(c);
            let mut obstacle = Vec::new();
            for dj in -table.half..=table.half {
                for di in -table.half..=table.half {
                    if let (Some(cap), Some(n)) = (table.get(di, dj), grid.neighbor(ci, cj, di, dj)) {
                        if surface.mask[n].in_domain() {
                            obstacle.push((n, cap.height));
                        }
                    }
                }
            }
            let slide = slide_values(&surface.values, &obstacle, tol)?;
            let x = slide.contact[0];
            let (xi, xj) = grid.coords(x);
            let (di, dj) = (xi as i64 - ci as i64, xj as i64 - cj as i64);
            let cap = *table.get(di, dj).expect("contact offset lies in the table");
            let rim = cap.slope[0].hypot(cap.slope[1]) > opts.rim_slope
                || [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(a, b)| table.get(di + a, dj + b).is_none());
            let cp = grid.point_of(c);
            let xp = grid.point_of(x);
            let d = surface.derivatives(x);
            Ok(ContactRecord {
                center: [cp[0], cp[1], slide.shift],
                contact: [xp[0], xp[1], surface.values[x]],
                normal: cap.normal(),
                height: surface.values[x],
                jacobian_det: f64::NAN,
                gradient: d.gradient[0].hypot(d.gradient[1]),
                center_node: c,
                contact_node: x,
                flagged: rim,
            })
        })
        .collect::<Result<_>>()?;

    let det_tol = 1e-6 + 10.0 * h;
    let mut records = records;
    for rec in records.iter_mut() {
        if rec.flagged {
            continue;
        }
        if !inside(rec.contact_node, third) {
            return Err(Error::Integrity(format!(
                "contact at ({:.4}, {:.4}) for center ({:.4}, {:.4}) escapes the cylinder over B_1/3; \
                 increase C₃ or decrease C₂",
                rec.contact[0], rec.contact[1], rec.center[0], rec.center[1]
            )));
        }
        rec.jacobian_det = contact_jacobian(phi, surface, rec, r, det_tol)?;
    }

    let used: Vec<&ContactRecord> = records.iter().filter(|r| !r.flagged).collect();
    let mut g_nodes: Vec<usize> = used.iter().map(|r| r.contact_node).collect();
    g_nodes.sort_unstable();
    g_nodes.dedup();
    let cell = h * h;
    let ball_measure = ball.iter().filter(|&&k| inside(k, third)).count() as f64 * cell;
    let contact_measure = g_nodes.len() as f64 * cell;
    let deficit = ball_measure - contact_measure;
    let fold_max = |f: &dyn Fn(&ContactRecord) -> f64| used.iter().map(|r| f(r)).fold(0.0, f64::max);
    let max_height = fold_max(&|r| r.height);
    let max_gradient = fold_max(&|r| r.gradient);
    let max_normal_deviation = fold_max(&|r| {
        let n = r.normal;
        (n[0] * n[0] + n[1] * n[1] + (n[2] - 1.0).powi(2)).sqrt()
    });
    let det_max = used.iter().map(|r| r.jacobian_det).fold(f64::NEG_INFINITY, f64::max);
    let det_min = used.iter().map(|r| r.jacobian_det).fold(f64::INFINITY, f64::min);
    let c0 = if epsilon > 0.0 { max_min_height(surface, delta) / epsilon } else { f64::INFINITY };
    let c1_height = max_height / delta.powf(1.5);
    let c1_gradient = max_gradient / delta.sqrt();
    let c1_deficit = deficit.max(0.0) / delta.sqrt();
    let summary = ContactSummary {
        delta,
        r,
        c2: opts.c2,
        c3,
        epsilon,
        h,
        centers: centers.len(),
        flagged: records.len() - used.len(),
        ball_measure,
        contact_measure,
        center_measure: centers.len() as f64 * cell,
        deficit,
        max_height,
        max_gradient,
        max_normal_deviation,
        det_min,
        det_max,
        c0,
        c1_height,
        c1_gradient,
        c1_deficit,
        c1: c1_height.max(c1_gradient).max(c1_deficit),
        normal_constant: max_normal_deviation / delta.sqrt(),
        g_nodes,
    };
    if summary.flagged > 0 {
        log::info!("{} of {} contacts flagged on the profile rim", summary.flagged, records.len());
    }
    Ok(ContactExperiment { records, summary })
}

/// Anisotropic minimal graph over `B₁` with data `ε(1.05 + cos 2θ)`: a saddle
/// lying above `{x₃ = 0}` with height about `ε` at the origin.
pub fn pinched_minimal_graph(phi: &AnisotropyIntegrand, epsilon: f64, h: f64, opts: &SolveOptions) -> Result<(DiscreteGraph, SolveReport)> {
    if !(epsilon > 0.0) {
        return Err(param("epsilon", "must be positive"));
    }
    let per_unit = 1.0 / h;
    if !(per_unit >= 3.0 && (per_unit - per_unit.round()).abs() < 1e-9) {
        return Err(param("h", "1/h must be an integer so that the origin is a node"));
    }
    let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
    let grid = GridSpec::covering(&disk, h)?;
    let problem = DiscreteGraph::with_boundary_data(&disk, grid, |p| epsilon * (1.05 + (2.0 * p[1].atan2(p[0])).cos()))?;
    let (w, report) = solve_dirichlet(phi, &problem, None, opts)?;
    if !report.converged {
        return Err(Error::Integrity(format!("pinched surface solve did not converge: residual {:.3e}", report.max_residual)));
    }
    Ok((w, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, GridSpec};

    #[test]
    fn isotropic_profile_is_a_hemisphere() {
        let phi = AnisotropyIntegrand::isotropic(3).unwrap();
        let prof = upper_wulff_profile(&phi, 0.3).unwrap();
        for q in [[0.0, 0.0], [0.1, -0.05], [0.2, 0.2], [-0.29, 0.0]] {
            let c = prof.eval(q).unwrap();
            let exact = (0.09 - q[0] * q[0] - q[1] * q[1]).sqrt();
            assert!((c.height - exact).abs() < 1e-12, "{q:?}");
        }
        assert!(prof.eval([0.31, 0.0]).is_none());
        assert!((prof.reach() - 0.3).abs() < 1e-3);
    }

    #[test]
    fn ellipsoidal_profile_lies_on_the_scaled_ellipsoid() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.2, 0.3, 1.0, -0.1, 0.2, -0.1, 0.7]);
        let qi = q.clone().try_inverse().unwrap();
        let phi = AnisotropyIntegrand::ellipsoidal(q).unwrap();
        let r = 0.25;
        let prof = upper_wulff_profile(&phi, r).unwrap();
        for off in [[0.0, 0.0], [0.1, 0.05], [-0.15, 0.1], [0.05, -0.12]] {
            let c = prof.eval(off).unwrap();
            let y = DVector::from_vec(vec![off[0], off[1], c.height]);
            assert!((y.dot(&(&qi * &y)) - r * r).abs() < 1e-10);
            // Upper sheet: the other root of the quadratic in the height is lower.
            let a = qi[(2, 2)];
            let b = 2.0 * (qi[(0, 2)] * off[0] + qi[(1, 2)] * off[1]);
            assert!(c.height >= -b / (2.0 * a));
        }
    }

    #[test]
    fn profile_is_concave() {
        let phi = AnisotropyIntegrand::perturbed_isotropic(3, 0.03, 2.0, 0.7).unwrap();
        let prof = upper_wulff_profile(&phi, 0.4).unwrap();
        let s = 1e-3;
        for q in [[0.0, 0.0], [0.1, 0.1], [-0.2, 0.05]] {
            let f = |a: f64, b: f64| prof.eval([q[0] + a, q[1] + b]).unwrap().height;
            let hxx = (f(s, 0.0) - 2.0 * f(0.0, 0.0) + f(-s, 0.0)) / (s * s);
            let hyy = (f(0.0, s) - 2.0 * f(0.0, 0.0) + f(0.0, -s)) / (s * s);
            let hxy = (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4.0 * s * s);
            assert!(hxx < 0.0 && hxx * hyy - hxy * hxy > 0.0);
        }
    }

    #[test]
    fn flat_surface_contacts_at_the_apex() {
        let phi = AnisotropyIntegrand::isotropic(3).unwrap();
        let dom = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let grid = GridSpec::covering(&dom, 1.0 / 32.0).unwrap();
        let eps = 1e-3;
        let g = DiscreteGraph::sample(&dom, grid, |_| eps).unwrap();
        let opts = ContactOptions {
            delta: 0.05,
            c3: Some(0.0),
            ..ContactOptions::default()
        };
        let run = run_contact_experiment(&phi, &g, &opts).unwrap();
        assert_eq!(run.summary.deficit, 0.0);
        assert_eq!(run.summary.flagged, 0);
        for rec in &run.records {
            assert_eq!(rec.jacobian_det, 1.0);
            assert_eq!(rec.contact_node, rec.center_node);
            assert_eq!(rec.normal, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn affine_surface_has_unit_jacobian() {
        let phi = AnisotropyIntegrand::ellipsoidal(DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 1.0, 0.8]))).unwrap();
        let dom = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let grid = GridSpec::covering(&dom, 1.0 / 16.0).unwrap();
        let g = DiscreteGraph::sample(&dom, grid, |p| 2.0 + 0.3 * p[0] - 0.2 * p[1]).unwrap();
        let k = grid.nearest_index([0.0, 0.0]);
        let rec = ContactRecord {
            center: [0.0; 3],
            contact: [0.0; 3],
            normal: [0.0, 0.0, 1.0],
            height: 0.0,
            jacobian_det: 0.0,
            gradient: 0.0,
            center_node: k,
            contact_node: k,
            flagged: false,
        };
        let det = contact_jacobian(&phi, &g, &rec, 0.2, 1e-9).unwrap();
        assert!((det - 1.0).abs() < 1e-10);
    }
}
