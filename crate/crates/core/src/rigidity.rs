//! Extremal slopes, the Hopf-type slope improvement and truncated Bernstein
//! experiments on half-space, slab and wedge domains.
//!
//! Coordinates follow the normalization `Ω ⊂ {x₁ > 0}`, `{x₁ = 0}` tangent to
//! `∂Ω` at the origin and `L(0) = 0`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{excision_gap, Cylinder, ExcisionOptions, ExcisionReport};
use crate::elliptic::{contact_tolerance, slide_values};
use crate::error::{param, Error, Result};
use crate::graph_pde::{rescale, solve_dirichlet, SolveOptions, SolveReport};
use crate::grid::{DiscreteGraph, Domain, GridSpec, NodeKind};
use crate::wulff::AnisotropyIntegrand;

/// Reference radius `R₀`: the fitting window is `B_{R₀/4}((R₀/2, 0))` and the
/// slope envelope is taken over `Ω ∩ B_{R₀}`.
pub const REFERENCE_RADIUS: f64 = 4.0;

/// `L(x) = slope·x + constant`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linear {
    pub slope: [f64; 2],
    #[serde(default)]
    pub constant: f64,
}

impl Linear {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.constant + self.slope[0] * x[0] + self.slope[1] * x[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Half-space, truncated to a half-disk.
    A,
    /// Slab `{0 < x₁ < c}`, truncated at `|x₂| ≤ R`.
    B,
    /// Wedge, truncated at radius `R`.
    C,
}

/// Data on the far (truncation) boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FarData {
    /// `L + a·x₁` on the whole boundary: the affine solution is exact.
    Affine { a: f64 },
    /// `L` on the true boundary and `L + a·x₁ + β·sin(πs)` on the far
    /// boundary, `s ∈ [0, 1]` its arclength parameter, so the data is
    /// continuous at the corners.
    Perturbed { a: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceSetup {
    pub case: Case,
    pub radius: f64,
    #[serde(default = "default_slab_width")]
    pub slab_width: f64,
    #[serde(default = "default_half_angle")]
    pub wedge_half_angle: f64,
    pub boundary: Linear,
    pub far: FarData,
}

fn default_slab_width() -> f64 {
    4.0
}

fn default_half_angle() -> f64 {
    std::f64::consts::FRAC_PI_4
}

impl HalfSpaceSetup {
    pub fn validate(&self) -> Result<()> {
        if self.boundary.constant != 0.0 {
            return Err(param("boundary.constant", "the normalization requires L(0) = 0"));
        }
        if !(self.radius > REFERENCE_RADIUS * 0.75) {
            return Err(param("radius", format!("must exceed {} to contain the fitting window", 0.75 * REFERENCE_RADIUS)));
        }
        match self.case {
            Case::B if !(self.slab_width > 0.75 * REFERENCE_RADIUS) => {
                Err(param("slab_width", "slab must contain the fitting window"))
            }
            Case::C if !(self.wedge_half_angle > 0.53 && self.wedge_half_angle < std::f64::consts::FRAC_PI_2) => {
                Err(param("wedge_half_angle", "wedge must contain the fitting window and stay in {x₁ > 0}"))
            }
            _ => Ok(()),
        }
    }

    pub fn domain(&self) -> Domain {
        match self.case {
            Case::A => Domain::HalfDisk { radius: self.radius },
            Case::B => Domain::Slab {
                width: self.slab_width,
                half_length: self.radius,
            },
            Case::C => Domain::Wedge {
                half_angle: self.wedge_half_angle,
                radius: self.radius,
            },
        }
    }

    /// Arclength parameter of a far-boundary point, or `None` on the true boundary.
    fn far_parameter(&self, b: [f64; 2]) -> Option<f64> {
        let tol = 1e-9 * self.radius;
        match self.case {
            Case::A => {
                if b[0] <= tol {
                    None
                } else {
                    Some((b[1].atan2(b[0]) / std::f64::consts::PI + 0.5).clamp(0.0, 1.0))
                }
            }
            Case::B => {
                if b[1].abs() >= self.radius - tol && b[0] > tol && b[0] < self.slab_width - tol {
                    Some(b[0] / self.slab_width)
                } else {
                    None
                }
            }
            Case::C => {
                let r = b[0].hypot(b[1]);
                if r >= self.radius - tol {
                    let a = self.wedge_half_angle;
                    Some(((b[1].atan2(b[0]) + a) / (2.0 * a)).clamp(0.0, 1.0))
                } else {
                    None
                }
            }
        }
    }

    /// Dirichlet value at `node` whose nearest boundary point is `projected`.
    pub fn boundary_value(&self, node: [f64; 2], projected: [f64; 2]) -> f64 {
        let l = self.boundary.eval(node);
        match self.far {
            FarData::Affine { a } => l + a * node[0],
            FarData::Perturbed { a, amplitude } => match self.far_parameter(projected) {
                Some(s) => l + a * node[0] + amplitude * (std::f64::consts::PI * s).sin(),
                None => l,
            },
        }
    }
}

/// Discrete extremal slopes of `u − L` against `x₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEnvelope {
    pub a_minus: f64,
    pub a_plus: f64,
    pub argmin: [f64; 2],
    pub argmax: [f64; 2],
    /// Distance of the maximizer (minimizer) from the origin over the largest
    /// distance among the nodes used; values near 1 mean the extremum sits at
    /// the far boundary.
    pub argmax_reach: f64,
    pub argmin_reach: f64,
    pub nodes: usize,
}

impl SlopeEnvelope {
    pub fn width(&self) -> f64 {
        self.a_plus - self.a_minus
    }
}

/// `A₊ = max (u − L)/x₁` and `A₋ = min (u − L)/x₁` over in-domain nodes with
/// `x₁ > 0`, optionally restricted to the closed ball `|x| ≤ within`.
pub fn extremal_slopes(g: &DiscreteGraph, l: &Linear, within: Option<f64>) -> Result<SlopeEnvelope> {
    if g.dims() != 2 {
        return Err(Error::Setup("extremal slopes need a planar graph".into()));
    }
    let tol = 1e-9 * g.h();
    for k in g.interior_indices() {
        let p = g.grid.point_of(k);
        if p[0] <= tol {
            let (i, j) = g.grid.coords(k);
            return Err(Error::Mask {
                i,
                j,
                reason: format!("interior node at x₁ = {} is not in {{x₁ > 0}}", p[0]),
            });
        }
    }
    let mut env = SlopeEnvelope {
        a_minus: f64::INFINITY,
        a_plus: f64::NEG_INFINITY,
        argmin: [f64::NAN; 2],
        argmax: [f64::NAN; 2],
        argmax_reach: f64::NAN,
        argmin_reach: f64::NAN,
        nodes: 0,
    };
    let mut far = 0.0_f64;
    for k in g.domain_indices() {
        let p = g.grid.point_of(k);
        if p[0] <= tol || within.is_some_and(|r| p[0].hypot(p[1]) > r + tol) {
            continue;
        }
        let ratio = (g.values[k] - l.eval(p)) / p[0];
        env.nodes += 1;
        far = far.max(p[0].hypot(p[1]));
        // Strict comparisons keep the first node in index order on ties.
        if ratio > env.a_plus {
            env.a_plus = ratio;
            env.argmax = p;
        }
        if ratio < env.a_minus {
            env.a_minus = ratio;
            env.argmin = p;
        }
    }
    if env.nodes == 0 {
        return Err(Error::Setup("no nodes with x₁ > 0 in the selected region".into()));
    }
    env.argmax_reach = env.argmax[0].hypot(env.argmax[1]) / far;
    env.argmin_reach = env.argmin[0].hypot(env.argmin[1]) / far;
    Ok(env)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Minus,
    Plus,
}

/// Concrete Hopf barrier: `ψ(x) = x₁ · χ⁺(x)/χ(0)` with the radial profile
/// `χ(x) = min{|x − p|^{−M}, δ_b^{−M}} − ρ^{−M}`, positive on `B_ρ(p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfProfile {
    pub center: [f64; 2],
    pub exponent: f64,
    pub plateau: f64,
    pub support: f64,
    /// Radius of the ball about the origin on which the improvement is certified.
    pub delta: f64,
    /// Number of amplitudes `1, 1/2, 1/4, …` tried.
    pub rungs: usize,
}

impl Default for HopfProfile {
    fn default() -> Self {
        Self {
            center: [1.0, 0.0],
            exponent: 1.0,
            plateau: 0.5,
            support: 1.5,
            delta: 0.125,
            rungs: 24,
        }
    }
}

impl HopfProfile {
    fn chi(&self, x: [f64; 2]) -> f64 {
        let d = (x[0] - self.center[0]).hypot(x[1] - self.center[1]);
        let m = self.exponent;
        let capped = if d <= self.plateau { self.plateau.powf(-m) } else { d.powf(-m) };
        capped - self.support.powf(-m)
    }

    pub fn validate(&self) -> Result<()> {
        let origin_dist = self.center[0].hypot(self.center[1]);
        if !(self.plateau > 0.0 && self.plateau < origin_dist - self.delta) {
            return Err(param("plateau", "plateau must stay away from B_δ(0)"));
        }
        if !(self.support > origin_dist + self.delta) {
            return Err(param("support", "profile must be positive on B_δ(0)"));
        }
        if !(self.exponent >= 1.0) || self.rungs == 0 {
            return Err(param("exponent", "need M ≥ 1 and at least one rung"));
        }
        Ok(())
    }

    /// `ψ(x)`; zero outside `B_ρ(p)` and on `{x₁ = 0}`.
    pub fn psi(&self, x: [f64; 2]) -> f64 {
        x[0] * self.chi(x).max(0.0) / self.chi([0.0, 0.0])
    }

    /// `min_{B_δ(0)} χ / χ(0)`, the factor turning amplitude into slope gain.
    pub fn gain(&self) -> f64 {
        let far = self.center[0].hypot(self.center[1]) + self.delta;
        (far.powf(-self.exponent) - self.support.powf(-self.exponent)) / self.chi([0.0, 0.0])
    }
}

/// Outcome of [`hopf_slope_improvement`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfOutcome {
    pub improved: bool,
    /// Certified slope gain `ε` on `B_δ ∩ Ω` (zero when not improved).
    pub epsilon: f64,
    pub delta: f64,
    /// Barrier amplitude that was certified (zero when not improved).
    pub amplitude: f64,
    /// First node touched by the smallest barrier tried, when not improved.
    pub blocking: Option<[f64; 2]>,
    /// Number of nodes where the candidate plane itself touches `g`.
    pub plane_contacts: usize,
    pub nodes: usize,
}

/// Tries `g ≥ L + A·x₁ + a·ψ` on the support of `ψ` for `a = 1, 1/2, …`; the
/// first amplitude that fits certifies `g ≥ L + (A + a·gain)·x₁` on `B_δ ∩ Ω`.
/// For `side = Plus` the statement is mirrored through `x₃ ↦ −x₃`.
pub fn hopf_slope_improvement(g: &DiscreteGraph, l: &Linear, a: f64, side: Side, profile: &HopfProfile) -> Result<HopfOutcome> {
    profile.validate()?;
    if g.dims() != 2 {
        return Err(Error::Setup("Hopf barriers need a planar graph".into()));
    }
    let sign = match side {
        Side::Minus => 1.0,
        Side::Plus => -1.0,
    };
    // In mirrored coordinates the statement is always the Minus one.
    let plane = |p: [f64; 2]| sign * (l.eval(p) + a * p[0]);
    let values: Vec<f64> = g.values.iter().map(|v| sign * v).collect();
    let tol = contact_tolerance(g).max(1e-12);
    let domain_nodes = g.domain_indices();
    for &k in &domain_nodes {
        let p = g.grid.point_of(k);
        if values[k] < plane(p) - tol {
            let (i, j) = g.grid.coords(k);
            return Err(Error::Mask {
                i,
                j,
                reason: format!(
                    "graph lies {:.3e} {} the candidate plane",
                    plane(p) - values[k],
                    if sign > 0.0 { "below" } else { "above" }
                ),
            });
        }
    }
    let support: Vec<usize> = domain_nodes
        .iter()
        .copied()
        .filter(|&k| profile.chi(g.grid.point_of(k)) > 0.0)
        .collect();
    if support.is_empty() {
        return Err(Error::Setup("barrier support misses the domain".into()));
    }
    let base: Vec<(usize, f64)> = support.iter().map(|&k| (k, plane(g.grid.point_of(k)))).collect();
    let plane_slide = slide_values(&values, &base, tol)?;

    let mut amplitude = 1.0;
    let mut blocking = None;
    for _ in 0..profile.rungs {
        let obstacle: Vec<(usize, f64)> = base
            .iter()
            .map(|&(k, v)| (k, v + amplitude * profile.psi(g.grid.point_of(k))))
            .collect();
        let slide = slide_values(&values, &obstacle, tol)?;
        if slide.shift >= -tol {
            return Ok(HopfOutcome {
                improved: true,
                epsilon: amplitude * profile.gain(),
                delta: profile.delta,
                amplitude,
                blocking: None,
                plane_contacts: plane_slide.contact.len(),
                nodes: support.len(),
            });
        }
        blocking = Some(g.grid.point_of(slide.contact[0]));
        amplitude *= 0.5;
    }
    Ok(HopfOutcome {
        improved: false,
        epsilon: 0.0,
        delta: profile.delta,
        amplitude: 0.0,
        blocking,
        plane_contacts: plane_slide.contact.len(),
        nodes: support.len(),
    })
}

/// Least-squares affine fit `c₀ + c₁x₁ + c₂x₂` and the largest deviation from it.
pub fn affine_fit(g: &DiscreteGraph, nodes: &[usize]) -> Result<([f64; 3], f64)> {
    if nodes.len() < 3 {
        return Err(Error::Setup("affine fit needs at least three nodes".into()));
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &k in nodes {
        let p = g.grid.point_of(k);
        let row = Vector3::new(1.0, p[0], p[1]);
        ata += row * row.transpose();
        atb += row * g.values[k];
    }
    let c = ata
        .cholesky()
        .ok_or_else(|| Error::Linear("degenerate fitting window".into()))?
        .solve(&atb);
    let coef = [c[0], c[1], c[2]];
    let dev = nodes
        .iter()
        .map(|&k| {
            let p = g.grid.point_of(k);
            (g.values[k] - coef[0] - coef[1] * p[0] - coef[2] * p[1]).abs()
        })
        .fold(0.0, f64::max);
    Ok((coef, dev))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    pub h: f64,
    pub solve: SolveOptions,
    /// Rescalings `k` at which the Hopf improvement is attempted (case A only).
    pub hopf_scales: Vec<f64>,
    pub hopf_candidate: f64,
    pub hopf_profile: HopfProfile,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            h: 0.125,
            solve: SolveOptions::default(),
            hopf_scales: vec![1.0, 2.0, 4.0],
            hopf_candidate: 0.0,
            hopf_profile: HopfProfile::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfRecord {
    pub k: f64,
    pub outcome: HopfOutcome,
}

/// Results of one truncated Bernstein experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub case: Case,
    pub domain: String,
    pub radius: f64,
    pub h: f64,
    pub nodes: usize,
    pub solve: SolveReport,
    pub window_center: [f64; 2],
    pub window_radius: f64,
    pub fit: [f64; 3],
    /// `max |u − ℓ*|` over the window.
    pub deviation: f64,
    pub envelope: SlopeEnvelope,
    pub hopf: Vec<HopfRecord>,
    pub converged: bool,
}

/// Solves the truncated problem and measures how affine the solution is on
/// the fixed window `B_{R₀/4}((R₀/2, 0))`.
pub fn bernstein_experiment(phi: &AnisotropyIntegrand, setup: &HalfSpaceSetup, opts: &ExperimentOptions) -> Result<(ExperimentReport, DiscreteGraph)> {
    setup.validate()?;
    if phi.dim() != 3 {
        return Err(Error::Setup("rigidity experiments use surfaces in R^3".into()));
    }
    let domain = setup.domain();
    let grid = GridSpec::covering(&domain, opts.h)?;
    let problem = DiscreteGraph::with_boundary_rule(&domain, grid, |node, b| setup.boundary_value(node, b))?;
    let (u, solve) = solve_dirichlet(phi, &problem, None, &opts.solve)?;
    let center = [0.5 * REFERENCE_RADIUS, 0.0];
    let radius = 0.25 * REFERENCE_RADIUS;
    let window: Vec<usize> = u
        .domain_indices()
        .into_iter()
        .filter(|&k| {
            let p = grid.point_of(k);
            (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
        })
        .collect();
    let (fit, deviation) = affine_fit(&u, &window)?;
    let envelope = extremal_slopes(&u, &setup.boundary, Some(REFERENCE_RADIUS))?;
    let mut hopf = Vec::new();
    if setup.case == Case::A && solve.converged {
        for &k in &opts.hopf_scales {
            let uk = rescale(&u, k)?;
            let outcome = hopf_slope_improvement(&uk, &setup.boundary, opts.hopf_candidate, Side::Minus, &opts.hopf_profile)?;
            hopf.push(HopfRecord { k, outcome });
        }
    }
    let converged = solve.converged;
    Ok((
        ExperimentReport {
            case: setup.case,
            domain: domain.tag().to_string(),
            radius: setup.radius,
            h: opts.h,
            nodes: u.mask.iter().filter(|m| **m != NodeKind::Outside).count(),
            solve,
            window_center: center,
            window_radius: radius,
            fit,
            deviation,
            envelope,
            hopf,
            converged,
        },
        u,
    ))
}

/// `d(R)` and envelope widths over several truncation radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSweep {
    pub radii: Vec<f64>,
    pub deviations: Vec<f64>,
    pub widths: Vec<f64>,
    pub all_converged: bool,
    /// Only meaningful when every solve converged.
    pub deviation_decreasing: bool,
    pub width_decreasing: bool,
    pub reports: Vec<ExperimentReport>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn radius_sweep(phi: &AnisotropyIntegrand, setup: &HalfSpaceSetup, radii: &[f64], opts: &ExperimentOptions) -> Result<RadiusSweep> {
    let reports: Vec<ExperimentReport> = radii
        .par_iter()
        .map(|&r| {
            let s = HalfSpaceSetup {
                radius: r,
                ..setup.clone()
            };
            bernstein_experiment(phi, &s, opts).map(|(rep, _)| rep)
        })
        .collect::<Result<_>>()?;
    let deviations: Vec<f64> = reports.iter().map(|r| r.deviation).collect();
    let widths: Vec<f64> = reports.iter().map(|r| r.envelope.width()).collect();
    let all_converged = reports.iter().all(|r| r.converged);
    Ok(RadiusSweep {
        radii: radii.to_vec(),
        deviation_decreasing: all_converged && strictly_decreasing(&deviations),
        width_decreasing: all_converged && strictly_decreasing(&widths),
        deviations,
        widths,
        all_converged,
        reports,
    })
}

/// Synthetic steep sheet `w = R·tanh(x₁/ε)` crossing `Q_h = {|x₁| < h} × B`
/// with `B = B_1((0, 2))` in the `(x₂, x₃)` plane.
pub fn sigmoid_excision(phi: &AnisotropyIntegrand, height: f64, eps: f64, h: f64, spacing: f64, opts: &ExcisionOptions) -> Result<ExcisionReport> {
    if !(eps > 0.0 && h > 0.0 && spacing > 0.0) {
        return Err(param("eps", "sigmoid width, slab half-width and spacing must be positive"));
    }
    let half = (2.0 * h).max(0.5);
    let domain = Domain::Rectangle {
        x_min: -half,
        x_max: half,
        y_min: -1.5,
        y_max: 1.5,
    };
    let grid = GridSpec::covering(&domain, spacing)?;
    let g = DiscreteGraph::sample(&domain, grid, |p| height * (p[0] / eps).tanh())?;
    let q = Cylinder::slab([0.0, 2.0], 1.0, h)?;
    excision_gap(phi, &g, &q, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l() -> Linear {
        Linear {
            slope: [0.0, 0.5],
            constant: 0.0,
        }
    }

    fn strip() -> (Domain, GridSpec) {
        let d = Domain::Rectangle { x_min: 0.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
        let g = GridSpec::covering(&d, 0.05).unwrap();
        (d, g)
    }

    #[test]
    fn slope_examples() {
        let (d, grid) = strip();
        let lin = l();
        let g = DiscreteGraph::sample(&d, grid, |p| lin.eval(p) + 3.0 * p[0]).unwrap();
        let env = extremal_slopes(&g, &lin, None).unwrap();
        assert!((env.a_plus - 3.0).abs() < 1e-12 && (env.a_minus - 3.0).abs() < 1e-12);
        let g = DiscreteGraph::sample(&d, grid, |p| lin.eval(p)).unwrap();
        let env = extremal_slopes(&g, &lin, None).unwrap();
        assert!(env.a_plus.abs() < 1e-12 && env.a_minus.abs() < 1e-12);
        let g = DiscreteGraph::sample(&d, grid, |p| lin.eval(p) + p[0] * p[0]).unwrap();
        let env = extremal_slopes(&g, &lin, None).unwrap();
        assert!((env.a_plus - 1.0).abs() < 1e-12);
        assert!((env.a_minus - 0.05).abs() < 1e-12);
    }

    #[test]
    fn interior_nodes_left_of_the_line_are_rejected() {
        let d = Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
        let grid = GridSpec::covering(&d, 0.25).unwrap();
        let g = DiscreteGraph::sample(&d, grid, |_| 0.0).unwrap();
        assert!(extremal_slopes(&g, &l(), None).is_err());
    }

    #[test]
    fn hopf_examples() {
        let d = Domain::HalfDisk { radius: 3.0 };
        let grid = GridSpec::covering(&d, 0.05).unwrap();
        let lin = l();
        let prof = HopfProfile::default();
        let g = DiscreteGraph::sample(&d, grid, |p| lin.eval(p) + p[0]).unwrap();
        let out = hopf_slope_improvement(&g, &lin, 0.0, Side::Minus, &prof).unwrap();
        assert!(out.improved);
        assert!(out.epsilon >= 0.1, "{out:?}");

        let flat = DiscreteGraph::sample(&d, grid, |p| lin.eval(p) + 0.7 * p[0]).unwrap();
        let out = hopf_slope_improvement(&flat, &lin, 0.7, Side::Minus, &prof).unwrap();
        assert!(!out.improved);
        assert_eq!(out.epsilon, 0.0);
        assert_eq!(out.plane_contacts, out.nodes);

        let below = DiscreteGraph::sample(&d, grid, |p| lin.eval(p) - p[0]).unwrap();
        assert!(hopf_slope_improvement(&below, &lin, 0.0, Side::Minus, &prof).is_err());
        let out = hopf_slope_improvement(&below, &lin, 0.0, Side::Plus, &prof).unwrap();
        assert!(out.improved);
    }

    #[test]
    fn affine_data_gives_affine_solutions() {
        let phi = AnisotropyIntegrand::isotropic(3).unwrap();
        for case in [Case::A, Case::B, Case::C] {
            let setup = HalfSpaceSetup {
                case,
                radius: 4.0,
                slab_width: 4.0,
                wedge_half_angle: std::f64::consts::FRAC_PI_4,
                boundary: l(),
                far: FarData::Affine { a: 0.3 },
            };
            let opts = ExperimentOptions {
                h: 0.25,
                hopf_scales: vec![],
                ..ExperimentOptions::default()
            };
            let (rep, _) = bernstein_experiment(&phi, &setup, &opts).unwrap();
            assert!(rep.converged);
            assert!(rep.deviation <= 10.0 * rep.solve.tol_res, "{case:?}: {}", rep.deviation);
            assert!((rep.envelope.a_plus - 0.3).abs() < 1e-8);
        }
    }

    #[test]
    fn setup_validation() {
        let mut s = HalfSpaceSetup {
            case: Case::B,
            radius: 8.0,
            slab_width: 4.0,
            wedge_half_angle: 0.7,
            boundary: l(),
            far: FarData::Perturbed { a: 0.0, amplitude: 1.0 },
        };
        assert!(s.validate().is_ok());
        s.boundary.constant = 1.0;
        assert!(s.validate().is_err());
    }
}
