//! Finite-difference discretization of `tr(D²φ(∇w) D²w) = 0` and its
//! Dirichlet solver.
//!
//! Derivatives are central differences on the 3×3 stencil, with the mixed
//! derivative `(w₊₊ − w₊₋ − w₋₊ + w₋₋)/(4h²)`. The solver is damped Newton on
//! the nodewise system, with sparse LU for the linear steps and a frozen
//! coefficient (Picard) iteration as fallback.

use std::sync::Once;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{DiscreteGraph, GridSpec, NodeKind};
use crate::wulff::AnisotropyIntegrand;

/// Stencil weights indexed by `(dj + 1) * 3 + (di + 1)`.
type Weights = [f64; 9];

const CENTER: usize = 4;

fn slot(di: i64, dj: i64) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

/// Coefficient matrix `D²φ(p)` as a dense 2×2 array (only `[0][0]` used in 1D).
fn coefficients(phi: &AnisotropyIntegrand, p: &[f64]) -> [[f64; 2]; 2] {
    let hess = phi.graph_integrand(p).hessian;
    let mut a = [[0.0; 2]; 2];
    for i in 0..p.len() {
        for j in 0..p.len() {
            a[i][j] = hess[(i, j)];
        }
    }
    if p.len() == 2 {
        let off = 0.5 * (a[0][1] + a[1][0]);
        a[0][1] = off;
        a[1][0] = off;
    }
    a
}

fn eig2(a: &[[f64; 2]; 2], dims: usize) -> (f64, f64) {
    if dims == 1 {
        return (a[0][0], a[0][0]);
    }
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[0][1]).sqrt();
    (m - d, m + d)
}

fn trace_product(a: &[[f64; 2]; 2], h: &[[f64; 2]; 2], dims: usize) -> f64 {
    if dims == 1 {
        a[0][0] * h[0][0]
    } else {
        a[0][0] * h[0][0] + 2.0 * a[0][1] * h[0][1] + a[1][1] * h[1][1]
    }
}

/// Linearization data at one interior node.
#[derive(Clone, Copy, Debug)]
struct Local {
    residual: f64,
    weights: Weights,
    eig: (f64, f64),
    gradient_norm: f64,
}

fn local(phi: &AnisotropyIntegrand, g: &DiscreteGraph, k: usize, newton: bool) -> Local {
    let dims = g.dims();
    let h = g.h();
    let d = g.derivatives(k);
    let p = &d.gradient[..dims];
    let a = coefficients(phi, p);
    let residual = trace_product(&a, &d.hessian, dims);

    // Sensitivity of the trace to the gradient argument, by central
    // differences of the coefficient matrix.
    let mut q = [0.0; 2];
    if newton {
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let eta = 1e-6 * pn.max(1.0);
        for l in 0..dims {
            let mut pp = [0.0; 2];
            let mut pm = [0.0; 2];
            pp[..dims].copy_from_slice(p);
            pm[..dims].copy_from_slice(p);
            pp[l] += eta;
            pm[l] -= eta;
            let ap = coefficients(phi, &pp[..dims]);
            let am = coefficients(phi, &pm[..dims]);
            q[l] = (trace_product(&ap, &d.hessian, dims) - trace_product(&am, &d.hessian, dims)) / (2.0 * eta);
        }
    }

    let h2 = h * h;
    let mut w = [0.0; 9];
    w[CENTER] = -2.0 * a[0][0] / h2;
    w[slot(1, 0)] = a[0][0] / h2 + q[0] / (2.0 * h);
    w[slot(-1, 0)] = a[0][0] / h2 - q[0] / (2.0 * h);
    if dims == 2 {
        w[CENTER] -= 2.0 * a[1][1] / h2;
        w[slot(0, 1)] = a[1][1] / h2 + q[1] / (2.0 * h);
        w[slot(0, -1)] = a[1][1] / h2 - q[1] / (2.0 * h);
        let mixed = a[0][1] / (2.0 * h2);
        w[slot(1, 1)] = mixed;
        w[slot(-1, -1)] = mixed;
        w[slot(1, -1)] = -mixed;
        w[slot(-1, 1)] = -mixed;
    }
    Local {
        residual,
        weights: w,
        eig: eig2(&a, dims),
        gradient_norm: p.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn check_compatible(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Result<()> {
    if phi.base_dim() != g.dims() {
        return Err(Error::Setup(format!(
            "integrand acts on graphs over R^{}, surface has {} base variables",
            phi.base_dim(),
            g.dims()
        )));
    }
    g.validate()
}

/// `tr(D²φ(∇w)D²w)` at every interior node; other entries are zero.
pub fn residual(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Result<Vec<f64>> {
    check_compatible(phi, g)?;
    Ok(residual_unchecked(phi, g))
}

fn residual_unchecked(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Vec<f64> {
    (0..g.grid.len())
        .into_par_iter()
        .map(|k| {
            if g.mask[k] == NodeKind::Interior {
                let d = g.derivatives(k);
                let a = coefficients(phi, &d.gradient[..g.dims()]);
                trace_product(&a, &d.hessian, g.dims())
            } else {
                0.0
            }
        })
        .collect()
}

/// Largest `|residual|` over interior nodes.
pub fn max_residual(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Result<f64> {
    Ok(residual(phi, g)?.iter().fold(0.0, |m, r| m.max(r.abs())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Residual tolerance; default `1e−9 · scale / h²`.
    pub tol_res: Option<f64>,
    /// Update tolerance; default `1e−10 · scale`.
    pub tol_step: Option<f64>,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub max_picard: usize,
    pub max_sweeps: usize,
    pub relaxation: f64,
    pub gradient_cap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_res: None,
            tol_step: None,
            max_newton: 60,
            max_halvings: 30,
            max_picard: 200,
            max_sweeps: 20_000,
            relaxation: 1.6,
            gradient_cap: 100.0,
        }
    }
}

impl SolveOptions {
    /// `(tol_res, tol_step)` for a problem whose boundary data has the given scale.
    pub fn tolerances(&self, scale: f64, h: f64) -> (f64, f64) {
        (
            self.tol_res.unwrap_or(1e-9 * scale / (h * h)),
            self.tol_step.unwrap_or(1e-10 * scale),
        )
    }
}

/// Outcome of [`solve_dirichlet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub newton_steps: usize,
    pub picard_steps: usize,
    pub max_residual: f64,
    pub max_update: f64,
    pub gradient_bound: f64,
    pub converged: bool,
    pub gradient_exceeded: bool,
    pub tol_res: f64,
    pub tol_step: f64,
    /// Extreme eigenvalues of `D²φ(∇w)` seen at any iterate.
    pub coefficient_min: f64,
    pub coefficient_max: f64,
    /// How far interior values overshoot the Dirichlet range (zero if not).
    pub max_principle_excess: f64,
}

/// Scale of the Dirichlet data: its range, else its largest magnitude, else 1.
pub fn data_scale(g: &DiscreteGraph) -> f64 {
    let (lo, hi) = g.boundary_bounds();
    if !(lo.is_finite() && hi.is_finite()) {
        return 1.0;
    }
    if hi > lo {
        hi - lo
    } else if lo.abs().max(hi.abs()) > 0.0 {
        lo.abs().max(hi.abs())
    } else {
        1.0
    }
}

struct Unknowns {
    nodes: Vec<usize>,
    column: Vec<Option<usize>>,
}

impl Unknowns {
    fn new(g: &DiscreteGraph) -> Self {
        let nodes = g.interior_indices();
        let mut column = vec![None; g.grid.len()];
        for (c, &k) in nodes.iter().enumerate() {
            column[k] = Some(c);
        }
        Self { nodes, column }
    }
}

fn neighbors(grid: &GridSpec, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (i, j) = grid.coords(k);
    let dj_range: &[i64] = if grid.dims == 1 { &[0] } else { &[-1, 0, 1] };
    dj_range.iter().flat_map(move |&dj| {
        [-1i64, 0, 1]
            .into_iter()
            .filter_map(move |di| grid.neighbor(i, j, di, dj).map(|n| (slot(di, dj), n)))
    })
}

fn sequential_linear_algebra() {
    static INIT: Once = Once::new();
    // Fixed factorization order keeps results independent of thread count.
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Solves `Σ weights · x = rhs` over the unknown nodes; Dirichlet neighbors are
/// moved to the right-hand side by the caller.
fn sparse_solve(g: &DiscreteGraph, unknowns: &Unknowns, locals: &[Local], rhs: &[f64]) -> Result<Vec<f64>> {
    sequential_linear_algebra();
    let m = unknowns.nodes.len();
    let mut triplets = Vec::with_capacity(9 * m);
    for (row, (&k, loc)) in unknowns.nodes.iter().zip(locals).enumerate() {
        for (s, n) in neighbors(&g.grid, k) {
            if let Some(col) = unknowns.column[n] {
                let v = loc.weights[s];
                if v != 0.0 {
                    triplets.push(Triplet::new(row, col, v));
                }
            }
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets)
        .map_err(|e| Error::Linear(format!("assembly failed: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::Linear(format!("sparse LU failed: {e:?}")))?;
    let b = faer::col::Col::from_fn(m, |i| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..m).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linear("linear solve produced non-finite values".into()));
    }
    Ok(out)
}

fn linearize(phi: &AnisotropyIntegrand, g: &DiscreteGraph, unknowns: &Unknowns, newton: bool) -> Vec<Local> {
    unknowns.nodes.par_iter().map(|&k| local(phi, g, k, newton)).collect()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[Local]) -> f64 {
    v.iter().map(|l| l.residual * l.residual).sum::<f64>().sqrt()
}

/// Right-hand side of the frozen-coefficient system: Dirichlet contributions
/// moved across.
fn frozen_rhs(g: &DiscreteGraph, unknowns: &Unknowns, locals: &[Local]) -> Vec<f64> {
    unknowns
        .nodes
        .iter()
        .zip(locals)
        .map(|(&k, loc)| {
            -neighbors(&g.grid, k)
                .filter(|(_, n)| unknowns.column[*n].is_none())
                .map(|(s, n)| loc.weights[s] * g.values[n])
                .sum::<f64>()
        })
        .collect()
}

/// Frozen-coefficient linear solve by symmetric-free SOR over a four-colour
/// ordering (no two same-coloured nodes share a stencil).
fn sor_solve(g: &mut DiscreteGraph, unknowns: &Unknowns, locals: &[Local], opts: &SolveOptions, tol: f64) -> usize {
    let nx = g.grid.nx;
    let colour = |k: usize| (k % nx) % 2 + 2 * ((k / nx) % 2);
    let by_colour: Vec<Vec<usize>> = (0..4)
        .map(|c| (0..unknowns.nodes.len()).filter(|&r| colour(unknowns.nodes[r]) == c).collect())
        .collect();
    let omega = opts.relaxation;
    for sweep in 0..opts.max_sweeps {
        let mut change = 0.0_f64;
        for rows in &by_colour {
            let updates: Vec<(usize, f64)> = rows
                .par_iter()
                .map(|&r| {
                    let k = unknowns.nodes[r];
                    let loc = &locals[r];
                    let off: f64 = neighbors(&g.grid, k)
                        .filter(|(s, _)| *s != CENTER)
                        .map(|(s, n)| loc.weights[s] * g.values[n])
                        .sum();
                    let target = -off / loc.weights[CENTER];
                    (k, omega * (target - g.values[k]))
                })
                .collect();
            for (k, du) in updates {
                g.values[k] += du;
                change = change.max(du.abs());
            }
        }
        if change <= tol {
            return sweep + 1;
        }
    }
    opts.max_sweeps
}

fn check_boundary_match(a: &DiscreteGraph, b: &DiscreteGraph) -> Result<()> {
    if !a.same_layout(b) {
        return Err(Error::Setup("initial guess has a different grid or mask".into()));
    }
    for k in a.dirichlet_indices() {
        if a.values[k] != b.values[k] {
            let (i, j) = a.grid.coords(k);
            return Err(Error::Mask {
                i,
                j,
                reason: "initial guess disagrees with the Dirichlet data".into(),
            });
        }
    }
    Ok(())
}

/// Solves the Dirichlet problem with data taken from the Dirichlet nodes of
/// `problem`. Interior values of `problem` are ignored unless passed again as
/// `initial`.
pub fn solve_dirichlet(
    phi: &AnisotropyIntegrand,
    problem: &DiscreteGraph,
    initial: Option<&DiscreteGraph>,
    opts: &SolveOptions,
) -> Result<(DiscreteGraph, SolveReport)> {
    check_compatible(phi, problem)?;
    if !(opts.gradient_cap > 0.0) {
        return Err(param("gradient_cap", "must be positive"));
    }
    let scale = data_scale(problem);
    let (tol_res, tol_step) = opts.tolerances(scale, problem.h());
    let unknowns = Unknowns::new(problem);
    let mut report = SolveReport {
        iterations: 0,
        newton_steps: 0,
        picard_steps: 0,
        max_residual: 0.0,
        max_update: 0.0,
        gradient_bound: 0.0,
        converged: true,
        gradient_exceeded: false,
        tol_res,
        tol_step,
        coefficient_min: f64::INFINITY,
        coefficient_max: f64::NEG_INFINITY,
        max_principle_excess: 0.0,
    };
    let mut w = problem.clone();
    if unknowns.nodes.is_empty() {
        report.coefficient_min = f64::NAN;
        report.coefficient_max = f64::NAN;
        return Ok((w, report));
    }

    match initial {
        Some(guess) => {
            check_boundary_match(problem, guess)?;
            w.values.clone_from(&guess.values);
        }
        None => {
            // Linearization at zero gradient: constant coefficients D²φ(0).
            for &k in &unknowns.nodes {
                w.values[k] = 0.0;
            }
            let locals = vec![local_at_zero(phi, &w); unknowns.nodes.len()];
            let rhs = frozen_rhs(&w, &unknowns, &locals);
            let x = sparse_solve(&w, &unknowns, &locals, &rhs)?;
            for (&k, v) in unknowns.nodes.iter().zip(x) {
                w.values[k] = v;
            }
        }
    }

    let track = |report: &mut SolveReport, locals: &[Local]| {
        for l in locals {
            report.coefficient_min = report.coefficient_min.min(l.eig.0);
            report.coefficient_max = report.coefficient_max.max(l.eig.1);
            report.gradient_bound = report.gradient_bound.max(l.gradient_norm);
        }
    };

    let mut locals = linearize(phi, &w, &unknowns, true);
    track(&mut report, &locals);
    let mut last_update = f64::INFINITY;
    let mut done = false;
    let mut need_fallback = false;
    for _ in 0..opts.max_newton {
        let rmax = max_abs(locals.iter().map(|l| l.residual));
        if rmax <= tol_res && last_update <= tol_step {
            done = true;
            break;
        }
        if report.gradient_bound > opts.gradient_cap {
            report.gradient_exceeded = true;
            break;
        }
        let rhs: Vec<f64> = locals.iter().map(|l| -l.residual).collect();
        let step = sparse_solve(&w, &unknowns, &locals, &rhs)?;
        let base = norm2(&locals);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = w.clone();
            for (&k, s) in unknowns.nodes.iter().zip(&step) {
                trial.values[k] += t * s;
            }
            let tl = linearize(phi, &trial, &unknowns, true);
            let tmax = max_abs(tl.iter().map(|l| l.residual));
            if norm2(&tl) < base || tmax <= tol_res {
                accepted = Some((trial, tl));
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        match accepted {
            Some((trial, tl)) => {
                w = trial;
                locals = tl;
                track(&mut report, &locals);
                last_update = t * max_abs(step.iter().copied());
                report.newton_steps += 1;
            }
            None => {
                need_fallback = true;
                break;
            }
        }
    }
    if !done && !report.gradient_exceeded {
        let rmax = max_abs(locals.iter().map(|l| l.residual));
        if rmax <= tol_res && last_update <= tol_step {
            done = true;
        } else {
            need_fallback = true;
        }
    }

    if need_fallback && !done {
        log::warn!("Newton stalled; switching to frozen-coefficient iteration");
        for _ in 0..opts.max_picard {
            let frozen = linearize(phi, &w, &unknowns, false);
            let before = w.clone();
            sor_solve(&mut w, &unknowns, &frozen, opts, 0.1 * tol_step);
            report.iterations += 1;
            report.picard_steps += 1;
            last_update = max_abs(unknowns.nodes.iter().map(|&k| w.values[k] - before.values[k]));
            locals = linearize(phi, &w, &unknowns, false);
            track(&mut report, &locals);
            if report.gradient_bound > opts.gradient_cap {
                report.gradient_exceeded = true;
                break;
            }
            let rmax = max_abs(locals.iter().map(|l| l.residual));
            if rmax <= tol_res && last_update <= tol_step {
                done = true;
                break;
            }
        }
    }

    report.max_residual = max_abs(locals.iter().map(|l| l.residual));
    report.max_update = last_update;
    report.converged = done && !report.gradient_exceeded;
    let (blo, bhi) = w.boundary_bounds();
    let (ilo, ihi) = unknowns
        .nodes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(w.values[k]), b.max(w.values[k])));
    report.max_principle_excess = (ihi - bhi).max(blo - ilo).max(0.0);
    if !report.converged {
        log::warn!(
            "solver stopped without convergence: residual {:.3e} (tol {:.3e}), update {:.3e}",
            report.max_residual,
            tol_res,
            report.max_update
        );
    }
    Ok((w, report))
}

fn local_at_zero(phi: &AnisotropyIntegrand, g: &DiscreteGraph) -> Local {
    let dims = g.dims();
    let h2 = g.h() * g.h();
    let a = coefficients(phi, &[0.0, 0.0][..dims]);
    let mut w = [0.0; 9];
    w[CENTER] = -2.0 * a[0][0] / h2;
    w[slot(1, 0)] = a[0][0] / h2;
    w[slot(-1, 0)] = a[0][0] / h2;
    if dims == 2 {
        w[CENTER] -= 2.0 * a[1][1] / h2;
        w[slot(0, 1)] = a[1][1] / h2;
        w[slot(0, -1)] = a[1][1] / h2;
        let mixed = a[0][1] / (2.0 * h2);
        w[slot(1, 1)] = mixed;
        w[slot(-1, -1)] = mixed;
        w[slot(1, -1)] = -mixed;
        w[slot(-1, 1)] = -mixed;
    }
    Local {
        residual: 0.0,
        weights: w,
        eig: eig2(&a, dims),
        gradient_norm: 0.0,
    }
}

/// `u_k(x) = k⁻¹u(kx)` represented exactly: node positions and values are
/// divided by `k`, spacing becomes `h/k`, the mask is unchanged.
pub fn rescale(g: &DiscreteGraph, k: f64) -> Result<DiscreteGraph> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(param("k", format!("rescaling factor must be positive, got {k}")));
    }
    let s = 1.0 / k;
    let grid = GridSpec::new(
        g.grid.dims,
        g.grid.nx,
        g.grid.ny,
        [g.grid.origin[0] * s, g.grid.origin[1] * s],
        g.grid.h * s,
    )?;
    let values = g.values.iter().map(|v| v * s).collect();
    DiscreteGraph::from_parts(grid, values, g.mask.clone(), g.domain.as_ref().map(|d| d.scaled(s)))
}

/// `u_k` sampled by bilinear interpolation on a grid of the original spacing
/// covering the shrunk domain `k⁻¹Ω`.
pub fn resample(g: &DiscreteGraph, k: f64) -> Result<DiscreteGraph> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(param("k", format!("rescaling factor must be positive, got {k}")));
    }
    let domain = g
        .domain
        .as_ref()
        .ok_or_else(|| Error::Setup("resampling needs the source domain".into()))?
        .scaled(1.0 / k);
    let grid = GridSpec::covering(&domain, g.h())?;
    let template = DiscreteGraph::sample(&domain, grid, |_| 0.0)?;
    let mut values = template.values.clone();
    for idx in template.domain_indices() {
        let x = grid.point_of(idx);
        let src = [k * x[0], k * x[1]];
        values[idx] = g.interpolate(src).map(|v| v / k).ok_or_else(|| {
            Error::Domain(format!(
                "rescaled node ({:.6}, {:.6}) maps outside the source domain",
                x[0], x[1]
            ))
        })?;
    }
    DiscreteGraph::from_parts(grid, values, template.mask, Some(domain))
}
