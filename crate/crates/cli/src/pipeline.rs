//! The five experiment pipelines. Each returns its results as JSON, the
//! tables it produced and the list of invariants that failed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use wulffgraph::calibration::{calibration_divergence, competitor_gap};
use wulffgraph::contact::{pinched_minimal_graph, run_contact_experiment, ContactExperiment};
use wulffgraph::elliptic::{analytic_exponent_threshold, choose_barrier_exponent, epsilon_ladder, pucci_sweep, PucciParams};
use wulffgraph::graph_pde::{data_scale, residual, solve_dirichlet};
use wulffgraph::grid::{DiscreteGraph, Domain, GridSpec};
use wulffgraph::io::{graph_to_csv, graph_to_wgrf, read_graph, table_csv};
use wulffgraph::rigidity::{radius_sweep, sigmoid_excision, Case, FarData};
use wulffgraph::wulff::{verify_identities, AnisotropyIntegrand};
use wulffgraph::{Error, Result};

use crate::config::{BarrierConfig, ContactConfig, DataSpec, RigidityConfig, RunConfig, SolveConfig, VerifyWulffConfig};

/// A file written to the output directory.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub results: Value,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(format!("json: {e}")))
}

fn csv(name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<Artifact> {
    Ok(Artifact {
        name: name.to_string(),
        bytes: table_csv(header, rows)?,
    })
}

/// Gnuplot script plotting columns of a CSV written next to it.
fn plot_script(name: &str, data: &str, x: usize, ys: &[(usize, &str)], logscale: bool) -> Artifact {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
    if logscale {
        s.push_str("set logscale xy\n");
    }
    let parts: Vec<String> = ys
        .iter()
        .map(|(c, title)| format!("'{data}' using {x}:{c} with linespoints title '{title}'"))
        .collect();
    s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
    Artifact {
        name: name.to_string(),
        bytes: s.into_bytes(),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let phi = cfg.integrand.build().map_err(|(k, m)| Error::Setup(format!("integrand.{k}: {m}")))?;
    use crate::config::Command::*;
    match cfg.command {
        VerifyWulff => verify_wulff(&phi, &cfg.verify_wulff, cfg.seed),
        Solve => solve(&phi, &cfg.solve, cfg.seed),
        BarrierCheck => barrier_check(&phi, &cfg.barrier),
        Contact => contact(&phi, &cfg.contact),
        Rigidity => rigidity(&phi, &cfg.rigidity),
    }
}

/// Random SPD matrix `AAᵀ + 0.2·I` with entries of `A` uniform in `(−1, 1)`.
pub fn random_spd(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(3, 3) * 0.2
}

fn verify_wulff(phi: &AnisotropyIntegrand, cfg: &VerifyWulffConfig, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut integrands = vec![("configured".to_string(), phi.clone())];
    for i in 0..cfg.random_ellipsoids {
        integrands.push((format!("random-{i}"), AnisotropyIntegrand::ellipsoidal(random_spd(&mut rng))?));
    }
    let mut failures = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (i, (label, phi)) in integrands.iter().enumerate() {
        let rep = verify_identities(phi, cfg.b_samples, cfg.a_samples)?;
        let failed = rep.failures(&cfg.tolerances);
        failures.extend(failed.iter().map(|f| format!("{label}: {f}")));
        rows.push(vec![
            i as f64,
            rep.homogeneity,
            rep.hessian_kernel,
            rep.normal_identity,
            rep.curvature_identity,
            rep.calibration_slack_min,
            rep.calibration_equality,
        ]);
        entries.push(json!({
            "label": label,
            "family": phi.family(),
            "identities": to_value(&rep)?,
            "failures": failed,
        }));
    }
    let table = csv(
        "identities.csv",
        &["integrand", "homogeneity", "hessian_kernel", "normal_identity", "curvature_identity", "calibration_slack_min", "calibration_equality"],
        &rows,
    )?;
    Ok(Outcome {
        results: json!({ "tolerances": to_value(&cfg.tolerances)?, "integrands": entries }),
        artifacts: vec![table],
        failures,
    })
}

fn distance_to_boundary(domain: &Domain, p: [f64; 2]) -> f64 {
    let q = domain.project_to_boundary(p);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// `u + f` on interior nodes, `u` elsewhere: a competitor with the same boundary values.
fn perturb_interior(u: &DiscreteGraph, f: impl Fn([f64; 2]) -> f64) -> DiscreteGraph {
    let mut v = u.clone();
    for k in u.interior_indices() {
        v.values[k] += f(u.grid.point_of(k));
    }
    v
}

fn solve(phi: &AnisotropyIntegrand, cfg: &SolveConfig, seed: u64) -> Result<Outcome> {
    let domain = &cfg.domain;
    let grid = GridSpec::covering(domain, cfg.h)?;
    let data = cfg.data.clone();
    let problem = DiscreteGraph::with_boundary_data(domain, grid, |p| data.eval(p))?;
    let initial = match &cfg.initial_guess {
        Some(path) => {
            let g = read_graph(path)?;
            if !g.same_layout(&problem) {
                return Err(Error::Setup(format!("initial guess {} is not on the problem grid", path.display())));
            }
            Some(g)
        }
        None => None,
    };
    let (u, rep) = solve_dirichlet(phi, &problem, initial.as_ref(), &cfg.solver)?;
    let h = grid.h;
    let mut failures = Vec::new();
    if !rep.converged {
        failures.push(format!("solver convergence: residual {:.3e} above tol_res {:.3e}", rep.max_residual, rep.tol_res));
    }
    let res = residual(phi, &u)?;
    let interior = u.interior_indices();
    let max_res = interior.iter().map(|&k| res[k].abs()).fold(0.0, f64::max);
    if max_res > rep.tol_res {
        failures.push(format!("residual bound: {max_res:.3e} > tol_res {:.3e}", rep.tol_res));
    }
    let mp_slack = rep.tol_res * h * h;
    if rep.max_principle_excess > mp_slack {
        failures.push(format!("discrete maximum principle: overshoot {:.3e} > {mp_slack:.3e}", rep.max_principle_excess));
    }
    let bounds = phi.ellipticity_bounds(rep.gradient_bound.max(1e-9))?;
    if !(bounds.contains(rep.coefficient_min, 1e-6) && bounds.contains(rep.coefficient_max, 1e-6)) {
        failures.push(format!(
            "ellipticity: coefficients [{:.6e}, {:.6e}] outside [{:.6e}, {:.6e}]",
            rep.coefficient_min, rep.coefficient_max, bounds.min, bounds.max
        ));
    }

    // Exact solutions, when the data has one.
    let exact_error = match (&cfg.data, phi.family()) {
        (DataSpec::Affine { .. }, _) => Some(u.domain_indices().iter().map(|&k| (u.values[k] - data.eval(u.grid.point_of(k))).abs()).fold(0.0, f64::max)),
        (DataSpec::Scherk, wulffgraph::wulff::Family::Isotropic) => Some(
            interior
                .iter()
                .map(|&k| (u.values[k] - data.eval(u.grid.point_of(k))).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    if let (DataSpec::Affine { .. }, Some(e)) = (&cfg.data, exact_error) {
        if e > 1e-9 {
            failures.push(format!("affine exactness: max |u − L| = {e:.3e} > 1e-9"));
        }
    }

    let div = calibration_divergence(phi, &u)?;
    let checked: Vec<usize> = interior
        .iter()
        .copied()
        .filter(|&k| distance_to_boundary(domain, grid.point_of(k)) >= cfg.divergence_margin)
        .collect();
    let div_err = checked.iter().map(|&k| (div[k] + res[k]).abs()).fold(0.0, f64::max);
    if div_err > 10.0 * h * h {
        failures.push(format!("calibration divergence = −residual: {div_err:.3e} > 10h² = {:.3e}", 10.0 * h * h));
    }

    let scale = data_scale(&u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = Vec::new();
    for _ in 0..cfg.competitors {
        let (a, b, m, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.3));
        let amp = rng.gen_range(0.01..0.2) * scale;
        let v = perturb_interior(&u, |p| amp * distance_to_boundary(domain, p).min(1.0) * (m * (a * p[0] + b * p[1]) + c).cos());
        let gap = competitor_gap(phi, &u, &v)?;
        gaps.push(vec![amp, v.max_abs_diff(&u), gap]);
    }
    let min_gap = gaps.iter().map(|g| g[2]).fold(f64::INFINITY, f64::min);
    if min_gap < -1e-8 * scale {
        failures.push(format!("minimality: competitor gap {min_gap:.3e} < −1e-8·scale"));
    }
    let results = json!({
        "domain": to_value(domain)?,
        "h": h,
        "nodes": [grid.nx, grid.ny],
        "data": to_value(&cfg.data)?,
        "report": to_value(&rep)?,
        "max_residual": max_res,
        "ellipticity": to_value(&bounds)?,
        "exact_error": exact_error,
        "divergence_error": div_err,
        "divergence_nodes": checked.len(),
        "competitors": gaps.len(),
        "min_competitor_gap": if gaps.is_empty() { Value::Null } else { json!(min_gap) },
    });
    Ok(Outcome {
        results,
        artifacts: vec![
            Artifact {
                name: "solution.csv".into(),
                bytes: graph_to_csv(&u)?,
            },
            Artifact {
                name: "solution.wgrf".into(),
                bytes: graph_to_wgrf(&u),
            },
            csv("competitors.csv", &["amplitude", "sup_diff", "gap"], &gaps)?,
        ],
        failures,
    })
}

fn barrier_check(phi: &AnisotropyIntegrand, cfg: &BarrierConfig) -> Result<Outcome> {
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => phi.ellipticity_bounds(1.0)?.pucci_lambda().min(0.99),
    };
    let params = PucciParams::new(lambda)?;
    let spec = choose_barrier_exponent(params, cfg.n, cfg.delta)?;
    let sweep = pucci_sweep(&spec, params, cfg.sweep_radii)?;
    let mut failures = Vec::new();
    if let Some(s) = sweep.iter().find(|s| !(s.pucci > 0.0)) {
        failures.push(format!("M⁻_λ(D²φ₀) > 0: {:.3e} at r = {}", s.pucci, s.radius));
    }
    let mut third = vec![0.0; cfg.n];
    third[0] = 1.0 / 3.0;
    let on_third = spec.value(&third);
    if !(on_third > 1.0) {
        failures.push(format!("φ₀ > 1 on ∂B_(1/3): {on_third}"));
    }
    if let Some(m) = cfg.expect_exponent {
        if spec.exponent != m {
            failures.push(format!("barrier exponent: got M = {}, expected {m}", spec.exponent));
        }
    }
    let mut consistency = Vec::new();
    for &l in &cfg.consistency_lambdas {
        let p = PucciParams::new(l)?;
        let numeric = choose_barrier_exponent(p, cfg.n, cfg.delta)?.exponent;
        let analytic = analytic_exponent_threshold(p, cfg.n) as f64;
        if numeric != analytic {
            failures.push(format!("exponent threshold M + 1 > (n − 1)/λ² at λ = {l}: sweep gives {numeric}, formula {analytic}"));
        }
        consistency.push(json!({ "lambda": l, "numeric": numeric, "analytic": analytic }));
    }
    let ladder = if cfg.ladder_h > 0.0 {
        let square = Domain::Rectangle {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        };
        match epsilon_ladder(phi, &spec, GridSpec::covering(&square, cfg.ladder_h)?, cfg.max_rungs) {
            Ok(l) => to_value(&l)?,
            Err(Error::Integrity(msg)) => {
                failures.push(format!("ε₀ ladder: {msg}"));
                Value::Null
            }
            Err(e) => return Err(e),
        }
    } else {
        Value::Null
    };
    let rows: Vec<Vec<f64>> = sweep.iter().map(|s| vec![s.radius, s.phi0, s.pucci]).collect();
    Ok(Outcome {
        results: json!({
            "lambda": lambda,
            "barrier": to_value(&spec)?,
            "phi0_on_third": on_third,
            "min_pucci": sweep.iter().map(|s| s.pucci).fold(f64::INFINITY, f64::min),
            "consistency": consistency,
            "ladder": ladder,
        }),
        artifacts: vec![
            csv("sweep.csv", &["radius", "phi0", "pucci"], &rows)?,
            plot_script("sweep.gp", "sweep.csv", 1, &[(3, "pucci")], false),
        ],
        failures,
    })
}

/// Worst `|y − (x − r∇Φ(ν))|` over the records.
pub fn center_relation_error(phi: &AnisotropyIntegrand, exp: &ContactExperiment) -> Result<f64> {
    let r = exp.summary.r;
    let mut worst = 0.0_f64;
    for rec in &exp.records {
        let g = phi.gradient(&DVector::from_column_slice(&rec.normal))?;
        for i in 0..3 {
            worst = worst.max((rec.contact[i] - r * g[i] - rec.center[i]).abs());
        }
    }
    Ok(worst)
}

fn contact(phi: &AnisotropyIntegrand, cfg: &ContactConfig) -> Result<Outcome> {
    let h = cfg.h;
    let det_bound = 1.0 + 1e-6 + 10.0 * h;
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for &delta in &cfg.deltas {
        let eps = cfg.epsilon_factor * delta.powf(1.5);
        let (g, solve) = pinched_minimal_graph(phi, eps, h, &cfg.solver)?;
        let exp = run_contact_experiment(phi, &g, &cfg.options(delta))?;
        let s = &exp.summary;
        let tag = format!("δ = {delta}");
        if let Some(rec) = exp.records.iter().find(|r| !r.flagged && r.jacobian_det > det_bound) {
            failures.push(format!("{tag}: det D_x y ≤ 1 + 1e-6 + 10h: {} at ({:.4}, {:.4})", rec.jacobian_det, rec.contact[0], rec.contact[1]));
        }
        let rel = center_relation_error(phi, &exp)?;
        if rel > 1e-8 * s.r {
            failures.push(format!("{tag}: center relation y = x − r∇Φ(ν): error {rel:.3e} > 1e-8·r"));
        }
        if !(s.c1_deficit >= cfg.band[0] && s.c1_deficit <= cfg.band[1]) {
            failures.push(format!("{tag}: deficit/δ^(1/2) = {:.4} outside [{}, {}]", s.c1_deficit, cfg.band[0], cfg.band[1]));
        }
        if s.center_measure > s.det_max.max(1.0) * s.contact_measure + 4.0 * std::f64::consts::PI / 3.0 * h {
            failures.push(format!("{tag}: |centers| ≤ |G| + slack: {} vs {}", s.center_measure, s.contact_measure));
        }
        rows.push(vec![
            delta,
            s.r,
            eps,
            s.ball_measure,
            s.contact_measure,
            s.deficit,
            s.c1_deficit,
            s.det_min,
            s.det_max,
            s.flagged as f64,
            s.c0,
            s.normal_constant,
        ]);
        let recs: Vec<Vec<f64>> = exp
            .records
            .iter()
            .map(|r| {
                let mut v = Vec::with_capacity(14);
                v.extend_from_slice(&r.center);
                v.extend_from_slice(&r.contact);
                v.extend_from_slice(&r.normal);
                v.extend([r.height, r.jacobian_det, r.gradient, if r.flagged { 1.0 } else { 0.0 }]);
                v
            })
            .collect();
        artifacts.push(csv(
            &format!("contact_delta_{delta}.csv"),
            &["y1", "y2", "y3", "x1", "x2", "x3", "nu1", "nu2", "nu3", "height", "det", "gradient", "flagged"],
            &recs,
        )?);
        runs.push(json!({
            "delta": delta,
            "epsilon": eps,
            "solve": to_value(&solve)?,
            "summary": to_value(s)?,
            "center_relation_error": rel,
        }));
    }
    let exponent = if cfg.deltas.len() >= 2 {
        let deficits: Vec<f64> = rows.iter().map(|r| r[5]).collect();
        if deficits.iter().any(|d| !(*d > 0.0)) {
            failures.push(format!("deficit exponent: needs positive deficits, got {deficits:?}"));
            None
        } else {
            let e = log_log_slope(&cfg.deltas, &deficits);
            if e < cfg.min_exponent {
                failures.push(format!("|G| ≥ |B_(1/3)| − C₁δ^(1/2): deficit exponent {e:.4} < {}", cfg.min_exponent));
            }
            Some(e)
        }
    } else {
        None
    };
    let flat = if cfg.flat_check {
        let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let g = DiscreteGraph::sample(&disk, GridSpec::covering(&disk, h)?, |_| 1e-3)?;
        let mut opts = cfg.options(cfg.deltas[0]);
        opts.c3 = Some(0.0);
        let exp = run_contact_experiment(phi, &g, &opts)?;
        let unit = exp.records.iter().all(|r| r.jacobian_det == 1.0);
        if exp.summary.deficit != 0.0 || !unit {
            failures.push(format!("flat surface: deficit {} (want 0), all determinants 1: {unit}", exp.summary.deficit));
        }
        json!({ "deficit": exp.summary.deficit, "unit_determinants": unit, "centers": exp.summary.centers })
    } else {
        Value::Null
    };
    artifacts.insert(
        0,
        csv(
            "contact_summary.csv",
            &["delta", "r", "epsilon", "ball_measure", "contact_measure", "deficit", "deficit_ratio", "det_min", "det_max", "flagged", "c0", "normal_constant"],
            &rows,
        )?,
    );
    artifacts.push(plot_script("contact_summary.gp", "contact_summary.csv", 1, &[(6, "deficit")], true));
    Ok(Outcome {
        results: json!({ "h": h, "runs": runs, "deficit_exponent": exponent, "flat": flat }),
        artifacts,
        failures,
    })
}

fn rigidity(phi: &AnisotropyIntegrand, cfg: &RigidityConfig) -> Result<Outcome> {
    let sweep = radius_sweep(phi, &cfg.setup, &cfg.radii, &cfg.options)?;
    let mut failures = Vec::new();
    if !sweep.all_converged {
        failures.push("solver convergence: some truncated experiment did not converge".to_string());
    }
    match cfg.setup.far {
        FarData::Affine { .. } => {
            for r in &sweep.reports {
                if r.deviation > 10.0 * r.solve.tol_res {
                    failures.push(format!("affine reproduction at R = {}: d = {:.3e} > 10·tol_res", r.radius, r.deviation));
                }
            }
        }
        FarData::Perturbed { .. } if cfg.setup.case != Case::A && cfg.radii.len() >= 2 => {
            if !sweep.deviation_decreasing {
                failures.push(format!("decay of d(R): {:?} is not strictly decreasing", sweep.deviations));
            }
            if !sweep.width_decreasing {
                failures.push(format!("slope envelope width: {:?} is not strictly decreasing", sweep.widths));
            }
        }
        _ => {}
    }
    if cfg.require_hopf {
        for r in &sweep.reports {
            for h in r.hopf.iter().filter(|h| !h.outcome.improved) {
                failures.push(format!("Hopf slope improvement at R = {}, k = {}: not certified", r.radius, h.k));
            }
        }
    }
    let excision = match &cfg.excision {
        Some(e) => {
            let rep = sigmoid_excision(phi, e.height, e.width, e.h, e.spacing, &e.options)?;
            let face = std::f64::consts::PI * phi.value(&DVector::from_vec(vec![-1.0, 0.0, 0.0]))?;
            if rep.sheet_area < 0.9 * face {
                failures.push(format!("excision: sheet area {:.4} < 0.9·|B|Φ(−e₁) = {:.4}", rep.sheet_area, 0.9 * face));
            }
            let mismatch = (rep.replacement_area - rep.lateral_area - face).abs();
            if mismatch > rep.budget {
                failures.push(format!("excision: |replacement − lateral − |B|Φ(−e₁)| = {mismatch:.3e} > budget {:.3e}", rep.budget));
            }
            json!({ "report": to_value(&rep)?, "face": face, "mismatch": mismatch })
        }
        None => Value::Null,
    };
    let rows: Vec<Vec<f64>> = sweep
        .reports
        .iter()
        .map(|r| {
            vec![
                r.radius,
                r.deviation,
                r.envelope.a_minus,
                r.envelope.a_plus,
                r.envelope.width(),
                if r.converged { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    let hopf: Vec<Vec<f64>> = sweep
        .reports
        .iter()
        .flat_map(|r| {
            r.hopf.iter().map(move |h| {
                vec![
                    r.radius,
                    h.k,
                    if h.outcome.improved { 1.0 } else { 0.0 },
                    h.outcome.epsilon,
                    h.outcome.amplitude,
                ]
            })
        })
        .collect();
    let mut artifacts = vec![
        csv("rigidity.csv", &["R", "d", "A_minus", "A_plus", "width", "converged"], &rows)?,
        plot_script("rigidity.gp", "rigidity.csv", 1, &[(2, "d(R)"), (5, "A+ - A-")], true),
    ];
    if !hopf.is_empty() {
        artifacts.push(csv("hopf.csv", &["R", "k", "improved", "epsilon", "amplitude"], &hopf)?);
    }
    Ok(Outcome {
        results: json!({ "setup": to_value(&cfg.setup)?, "sweep": to_value(&sweep)?, "excision": excision }),
        artifacts,
        failures,
    })
}
