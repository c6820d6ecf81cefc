//! Pucci extremal operators, the radial barrier
//! `φ₀ = min{|x|^{−M}, δ^{−M}} − (3/2)^M` and vertical sliding of graphs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graph_pde;
use crate::grid::{DiscreteGraph, Domain, GridSpec, NodeKind};
use crate::linalg::{asymmetry, sym_eigenvalues, symmetrize};
use crate::wulff::AnisotropyIntegrand;

/// Relative margin required of a Pucci value before it counts as positive.
pub const PUCCI_POSITIVITY_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PucciParams {
    lambda: f64,
}

impl PucciParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(param("lambda", format!("must lie in (0, 1), got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn checked_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Domain("Pucci operators need a square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let asym = asymmetry(a);
    if asym > 1e-10 {
        log::warn!("symmetrizing matrix with asymmetry {asym:.3e}");
    }
    Ok(sym_eigenvalues(&symmetrize(a)))
}

/// `M⁻_λ(A) = λ Σ e⁺ + λ⁻¹ Σ e⁻` over the eigenvalues of `A`.
pub fn pucci_minus(params: PucciParams, a: &DMatrix<f64>) -> Result<f64> {
    let l = params.lambda;
    Ok(checked_eigenvalues(a)?
        .into_iter()
        .map(|e| if e > 0.0 { l * e } else { e / l })
        .sum())
}

/// `M⁺_λ(A) = λ⁻¹ Σ e⁺ + λ Σ e⁻`; equals `−M⁻_λ(−A)`.
pub fn pucci_plus(params: PucciParams, a: &DMatrix<f64>) -> Result<f64> {
    let l = params.lambda;
    Ok(checked_eigenvalues(a)?
        .into_iter()
        .map(|e| if e > 0.0 { e / l } else { l * e })
        .sum())
}

/// Parameters of the radial barrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub exponent: f64,
    pub delta: f64,
    pub center: Vec<f64>,
}

impl BarrierSpec {
    pub fn new(exponent: f64, delta: f64, center: Vec<f64>) -> Result<Self> {
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(param("exponent", format!("M must be at least 1, got {exponent}")));
        }
        if !(delta > 0.0 && delta < 1.0 / 3.0) {
            return Err(param("delta", format!("δ must lie in (0, 1/3), got {delta}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(param("center", "must be a finite point"));
        }
        let spec = Self {
            exponent,
            delta,
            center,
        };
        let on_sphere = spec.radial(1.0 / 3.0);
        if on_sphere <= 1.0 {
            return Err(Error::Integrity(format!(
                "φ₀ = {on_sphere} on ∂B_(1/3), expected > 1"
            )));
        }
        Ok(spec)
    }

    pub fn centered(exponent: f64, delta: f64, dims: usize) -> Result<Self> {
        Self::new(exponent, delta, vec![0.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    fn offset_radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt()
    }

    /// `φ₀` as a function of the distance to the center.
    pub fn radial(&self, r: f64) -> f64 {
        let m = self.exponent;
        let capped = if r <= self.delta { self.delta.powf(-m) } else { r.powf(-m) };
        capped - 1.5_f64.powf(m)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.radial(self.offset_radius(x))
    }

    /// Analytic gradient; zero on the constant branch `|x − c| ≤ δ`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.offset_radius(x);
        if r <= self.delta {
            return vec![0.0; x.len()];
        }
        let m = self.exponent;
        let dr = -m * r.powf(-m - 1.0);
        x.iter().zip(&self.center).map(|(a, c)| dr * (a - c) / r).collect()
    }

    /// Analytic Hessian: radial eigenvalue `M(M+1)r^{−M−2}` and tangential
    /// eigenvalue `−M r^{−M−2}`; zero inside `B_δ`.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let r = self.offset_radius(x);
        if r <= self.delta {
            return DMatrix::zeros(n, n);
        }
        let m = self.exponent;
        let radial = m * (m + 1.0) * r.powf(-m - 2.0);
        let tangential = -m * r.powf(-m - 2.0);
        let u: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| (a - c) / r).collect();
        DMatrix::from_fn(n, n, |i, j| {
            let uu = u[i] * u[j];
            let id = if i == j { 1.0 } else { 0.0 };
            radial * uu + tangential * (id - uu)
        })
    }

    /// `max |∇φ₀|` outside `B_δ`, attained at `|x − c| = δ`.
    pub fn max_gradient(&self) -> f64 {
        self.exponent * self.delta.powf(-self.exponent - 1.0)
    }
}

/// Smallest integer `M ≥ 1` with `M + 1 > (n − 1)/λ²`.
pub fn analytic_exponent_threshold(params: PucciParams, n: usize) -> u32 {
    let bound = (n as f64 - 1.0) / (params.lambda * params.lambda);
    let mut m = 1u32;
    while (m as f64 + 1.0) <= bound {
        m += 1;
    }
    m
}

/// One row of a radial Pucci sweep.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepSample {
    pub radius: f64,
    pub phi0: f64,
    pub pucci: f64,
    /// `λ·Σe⁺ + λ⁻¹·Σ|e⁻|`, the magnitude used for the positivity margin.
    pub magnitude: f64,
}

/// `M⁻_λ(D²φ₀)` at `count` radii uniformly spread over `(δ, 1]`, evaluated
/// along the first coordinate axis.
pub fn pucci_sweep(spec: &BarrierSpec, params: PucciParams, count: usize) -> Result<Vec<SweepSample>> {
    let l = params.lambda();
    (1..=count)
        .map(|k| {
            let r = spec.delta + (1.0 - spec.delta) * k as f64 / count as f64;
            let mut x = spec.center.clone();
            x[0] += r;
            let hess = spec.hessian(&x);
            let eig = checked_eigenvalues(&hess)?;
            let magnitude = eig.iter().map(|&e| if e > 0.0 { l * e } else { -e / l }).sum();
            Ok(SweepSample {
                radius: r,
                phi0: spec.value(&x),
                pucci: pucci_minus(params, &hess)?,
                magnitude,
            })
        })
        .collect()
}

fn sweep_is_positive(samples: &[SweepSample]) -> bool {
    samples
        .iter()
        .all(|s| s.pucci > PUCCI_POSITIVITY_RTOL * s.magnitude)
}

/// Smallest integer exponent for which the Pucci sweep is strictly positive
/// on `(δ, 1]` (1000 radii) and `φ₀ > 1` on `∂B_{1/3}`.
pub fn choose_barrier_exponent(params: PucciParams, n: usize, delta: f64) -> Result<BarrierSpec> {
    if n == 0 {
        return Err(param("n", "dimension must be at least 1"));
    }
    // The analytic threshold bounds the search; the loop always terminates.
    let cap = analytic_exponent_threshold(params, n) + 8;
    for m in 1..=cap {
        let spec = match BarrierSpec::centered(m as f64, delta, n) {
            Ok(s) => s,
            Err(Error::Integrity(_)) => continue,
            Err(e) => return Err(e),
        };
        if sweep_is_positive(&pucci_sweep(&spec, params, 1000)?) {
            return Ok(spec);
        }
    }
    Err(Error::Integrity(format!(
        "no barrier exponent up to {cap} passes the Pucci sweep"
    )))
}

/// Values of an obstacle graph on a subset of a surface's nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Obstacle {
    /// `(flat node index, obstacle value)`; non-finite values mean undefined.
    pub nodes: Vec<(usize, f64)>,
}

impl Obstacle {
    pub fn from_fn(surface: &DiscreteGraph, f: impl Fn([f64; 2]) -> Option<f64>) -> Self {
        let nodes = surface
            .domain_indices()
            .into_iter()
            .filter_map(|k| f(surface.grid.point_of(k)).map(|v| (k, v)))
            .collect();
        Self { nodes }
    }
}

/// Result of sliding an obstacle vertically until it touches a surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideOutcome {
    /// Largest `t` with `obstacle + t ≤ surface` on the obstacle's support.
    pub shift: f64,
    /// Nodes where equality holds within the contact tolerance, in index order.
    pub contact: Vec<usize>,
}

/// Contact tolerance: `1e−12` times the surface's scale (value range, or
/// magnitude for constant surfaces).
pub fn contact_tolerance(surface: &DiscreteGraph) -> f64 {
    1e-12 * surface.scale()
}

/// Slide `obstacle` up (or down) until first contact with `surface`.
pub fn slide_until_contact(surface: &DiscreteGraph, obstacle: &Obstacle) -> Result<SlideOutcome> {
    let n = surface.grid.len();
    for &(k, v) in &obstacle.nodes {
        if k >= n || !surface.mask[k].in_domain() {
            return Err(Error::Setup(format!(
                "obstacle node {k} lies outside the surface domain"
            )));
        }
        if v.is_finite() && !surface.values[k].is_finite() {
            return Err(Error::Setup(format!("surface undefined at obstacle node {k}")));
        }
    }
    slide_values(&surface.values, &obstacle.nodes, contact_tolerance(surface))
}

/// Core of [`slide_until_contact`] on raw node values.
pub fn slide_values(surface: &[f64], obstacle: &[(usize, f64)], tol: f64) -> Result<SlideOutcome> {
    let gaps: Vec<(usize, f64)> = obstacle
        .par_iter()
        .filter(|(_, v)| v.is_finite())
        .map(|&(k, v)| (k, surface[k] - v))
        .collect();
    if gaps.is_empty() {
        return Err(Error::Setup("obstacle is undefined everywhere".into()));
    }
    let shift = gaps.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let mut contact: Vec<usize> = gaps
        .iter()
        .filter(|g| g.1 - shift <= tol)
        .map(|g| g.0)
        .collect();
    contact.sort_unstable();
    contact.dedup();
    Ok(SlideOutcome { shift, contact })
}

/// Outcome of the per-run `ε₀` search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonLadder {
    pub epsilon: f64,
    /// `ε · max |∇φ₀|` outside `B_δ`.
    pub gradient_product: f64,
    /// Smallest discrete residual of `εφ₀` over nodes whose stencil avoids `B_δ`.
    pub min_residual: f64,
    pub rungs_tried: usize,
}

/// Largest `ε = 2^{−k}` such that `ε·max|∇φ₀| < 1` outside `B_δ` and the
/// discrete residual of `εφ₀` is nonnegative at every node of `grid` whose
/// stencil stays outside `B_δ(center)`.
pub fn epsilon_ladder(phi: &AnisotropyIntegrand, spec: &BarrierSpec, grid: GridSpec, max_rungs: usize) -> Result<EpsilonLadder> {
    if phi.base_dim() != spec.dims() || grid.dims != spec.dims() {
        return Err(param("spec", "barrier, grid and integrand dimensions disagree"));
    }
    let guard = spec.delta + 1.5 * grid.h;
    let mut eps = 1.0;
    for rung in 0..max_rungs {
        let product = eps * spec.max_gradient();
        if product < 1.0 {
            let graph = barrier_graph(spec, grid, eps)?;
            let res = graph_pde::residual(phi, &graph)?;
            let min_res = graph
                .interior_indices()
                .into_iter()
                .filter(|&k| {
                    let p = grid.point_of(k);
                    let r = p
                        .iter()
                        .take(spec.dims())
                        .zip(&spec.center)
                        .map(|(a, c)| (a - c) * (a - c))
                        .sum::<f64>()
                        .sqrt();
                    r > guard
                })
                .map(|k| res[k])
                .fold(f64::INFINITY, f64::min);
            if min_res >= 0.0 {
                return Ok(EpsilonLadder {
                    epsilon: eps,
                    gradient_product: product,
                    min_residual: min_res,
                    rungs_tried: rung + 1,
                });
            }
        }
        eps *= 0.5;
    }
    Err(Error::Integrity(format!(
        "no ε on {max_rungs} dyadic rungs makes εφ₀ a discrete subsolution"
    )))
}

/// `ε·φ₀` sampled on every node of `grid` (all nodes in-domain).
pub fn barrier_graph(spec: &BarrierSpec, grid: GridSpec, eps: f64) -> Result<DiscreteGraph> {
    let mask = DiscreteGraph::build_mask(&grid, |_| true);
    let values = (0..grid.len())
        .map(|k| {
            let p = grid.point_of(k);
            eps * spec.value(&p[..spec.dims()])
        })
        .collect();
    let lo = grid.origin;
    let hi = grid.point(grid.nx - 1, grid.ny - 1);
    let domain = if grid.dims == 1 {
        Domain::Interval { a: lo[0], b: hi[0] }
    } else {
        Domain::Rectangle {
            x_min: lo[0],
            x_max: hi[0],
            y_min: lo[1],
            y_max: hi[1],
        }
    };
    debug_assert!(mask.iter().all(|m| *m != NodeKind::Outside));
    DiscreteGraph::from_parts(grid, values, mask, Some(domain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use proptest::prelude::*;

    fn diag(d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
    }

    #[test]
    fn pucci_examples() {
        let p = PucciParams::new(0.5).unwrap();
        assert_eq!(pucci_minus(p, &DMatrix::zeros(2, 2)).unwrap(), 0.0);
        assert!((pucci_minus(p, &DMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-15);
        assert!((pucci_minus(p, &diag(&[2.0, -1.0])).unwrap() + 1.0).abs() < 1e-15);
        assert!(pucci_minus(p, &diag(&[f64::NAN, 1.0])).is_err());
        assert!(PucciParams::new(1.0).is_err());
        assert!(PucciParams::new(0.0).is_err());
    }

    #[test]
    fn barrier_examples() {
        let spec = BarrierSpec::centered(2.0, 0.1, 2).unwrap();
        assert!((spec.value(&[1.0 / 3.0, 0.0]) - 6.75).abs() < 1e-12);
        for m in [1.0, 2.0, 4.0, 7.0] {
            let s = BarrierSpec::centered(m, 0.1, 2).unwrap();
            let at_one = s.value(&[0.0, 1.0]);
            assert!((at_one - (1.0 - 1.5_f64.powf(m))).abs() < 1e-12);
            assert!(at_one < 0.0);
            let inside = s.value(&[0.03, 0.05]);
            assert_eq!(inside, 0.1_f64.powf(-m) - 1.5_f64.powf(m));
            assert_eq!(s.value(&[0.0, 0.0]), inside);
        }
        assert!(BarrierSpec::centered(0.5, 0.1, 2).is_err());
        assert!(BarrierSpec::centered(2.0, 0.4, 2).is_err());
    }

    #[test]
    fn barrier_is_radially_nonincreasing() {
        let spec = BarrierSpec::centered(3.0, 0.05, 2).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..500 {
            let r = k as f64 / 250.0;
            let v = spec.radial(r);
            assert!(v <= prev);
            prev = v;
        }
        assert!(spec.radial(0.67) < 0.0);
    }

    #[test]
    fn barrier_hessian_matches_finite_differences() {
        let spec = BarrierSpec::new(4.0, 0.1, vec![0.2, -0.1]).unwrap();
        let x = [0.55, 0.3];
        let h = spec.hessian(&x);
        let step = 1e-5;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let gp = spec.gradient(&xp);
            let gm = spec.gradient(&xm);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((fd - h[(i, j)]).abs() <= 1e-6 * h[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn exponent_choice_examples() {
        let spec = choose_barrier_exponent(PucciParams::new(0.5).unwrap(), 2, 0.1).unwrap();
        assert_eq!(spec.exponent, 4.0);
        let sweep = pucci_sweep(&spec, PucciParams::new(0.5).unwrap(), 1000).unwrap();
        assert!(sweep.iter().all(|s| s.pucci > 0.0));
        assert!(spec.value(&[1.0 / 3.0, 0.0]) > 1.0);

        for lambda in [0.2, 0.7, 0.95] {
            let p = PucciParams::new(lambda).unwrap();
            assert_eq!(choose_barrier_exponent(p, 1, 0.2).unwrap().exponent, 1.0);
        }
        for lambda in [0.3, 0.5, 0.8] {
            let p = PucciParams::new(lambda).unwrap();
            for n in [2, 3] {
                let numeric = choose_barrier_exponent(p, n, 0.1).unwrap().exponent as u32;
                assert_eq!(numeric, analytic_exponent_threshold(p, n), "λ = {lambda}, n = {n}");
            }
        }
    }

    #[test]
    fn slide_examples() {
        let dom = Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
        let grid = GridSpec::covering(&dom, 0.125).unwrap();
        let zero = DiscreteGraph::sample(&dom, grid, |_| 0.0).unwrap();
        let flat = Obstacle::from_fn(&zero, |_| Some(-1.0));
        let out = slide_until_contact(&zero, &flat).unwrap();
        assert_eq!(out.shift, 1.0);
        assert_eq!(out.contact.len(), grid.len());

        let bowl = DiscreteGraph::sample(&dom, grid, |p| p[0] * p[0] + p[1] * p[1]).unwrap();
        let plane = Obstacle::from_fn(&bowl, |_| Some(0.0));
        let out = slide_until_contact(&bowl, &plane).unwrap();
        assert_eq!(out.shift, 0.0);
        assert_eq!(out.contact, vec![grid.nearest_index([0.0, 0.0])]);

        let empty = Obstacle::from_fn(&bowl, |_| Some(f64::NEG_INFINITY));
        assert!(slide_until_contact(&bowl, &empty).is_err());
    }

    #[test]
    fn epsilon_ladder_finds_subsolution() {
        let phi = AnisotropyIntegrand::isotropic(3).unwrap();
        let lam = phi.ellipticity_bounds(1.0).unwrap().pucci_lambda();
        let spec = choose_barrier_exponent(PucciParams::new(lam.min(0.5)).unwrap(), 2, 0.1).unwrap();
        let dom = Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
        let grid = GridSpec::covering(&dom, 0.005).unwrap();
        let ladder = epsilon_ladder(&phi, &spec, grid, 40).unwrap();
        assert!(ladder.gradient_product < 1.0);
        assert!(ladder.min_residual >= 0.0);
    }

    fn sym_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-3.0..3.0f64, 6)
            .prop_map(|v| DMatrix::from_row_slice(3, 3, &[v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]]))
    }

    proptest! {
        #[test]
        fn pucci_minus_is_monotone(a in sym_strategy(), b in prop::collection::vec(-2.0..2.0f64, 9), lambda in 0.05..0.95f64) {
            let p = PucciParams::new(lambda).unwrap();
            let m = DMatrix::from_row_slice(3, 3, &b);
            let psd = &m * m.transpose();
            let lo = pucci_minus(p, &a).unwrap();
            let hi = pucci_minus(p, &(&a + psd)).unwrap();
            prop_assert!(lo <= hi + 1e-9 * (1.0 + hi.abs()));
        }

        #[test]
        fn pucci_minus_sum_with_negation_is_nonpositive(a in sym_strategy(), lambda in 0.05..0.95f64) {
            let p = PucciParams::new(lambda).unwrap();
            let s = pucci_minus(p, &a).unwrap() + pucci_minus(p, &(-&a)).unwrap();
            prop_assert!(s <= 1e-12);
            let plus = pucci_plus(p, &a).unwrap();
            prop_assert!((plus + pucci_minus(p, &(-&a)).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn slide_is_translation_equivariant(c in -5.0..5.0f64, amp in 0.1..2.0f64) {
            let dom = Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
            let grid = GridSpec::covering(&dom, 0.25).unwrap();
            let surf = DiscreteGraph::sample(&dom, grid, |p| amp * (p[0] * 1.3).sin() + p[1] * p[1]).unwrap();
            let obs = Obstacle::from_fn(&surf, |p| if p[0] > -0.5 { Some(-p[0] * p[0]) } else { None });
            let a = slide_until_contact(&surf, &obs).unwrap();
            let b = slide_until_contact(&surf.add_constant(c), &obs).unwrap();
            prop_assert!((b.shift - a.shift - c).abs() < 1e-12);
            prop_assert_eq!(a.contact, b.contact);
        }
    }
}
