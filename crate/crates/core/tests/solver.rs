use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wulffgraph::calibration::*;
use wulffgraph::graph_pde::*;
use wulffgraph::grid::{DiscreteGraph, Domain, GridSpec, NodeKind};
use wulffgraph::wulff::AnisotropyIntegrand;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn families() -> Vec<AnisotropyIntegrand> {
    let q = DMatrix::from_row_slice(3, 3, &[1.4, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.7]);
    vec![
        AnisotropyIntegrand::isotropic(3).unwrap(),
        AnisotropyIntegrand::ellipsoidal(q).unwrap(),
        AnisotropyIntegrand::perturbed_isotropic(3, 0.03, 2.0, 0.4).unwrap(),
    ]
}

fn disk() -> Domain {
    Domain::Disk { center: [0.0, 0.0], radius: 1.0 }
}

fn square() -> Domain {
    Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 }
}

/// Smooth data defined on the whole plane.
fn smooth_data(c: &[f64; 5]) -> impl Fn([f64; 2]) -> f64 + '_ {
    move |p: [f64; 2]| {
        c[0] * p[0] + c[1] * p[1] + c[2] * (1.3 * p[0] + 0.7 * p[1]).sin() + c[3] * p[0] * p[1] + c[4] * (2.0 * p[1]).cos() * p[0]
    }
}

fn sup_norm(x: [f64; 2]) -> f64 {
    x[0].abs().max(x[1].abs())
}

/// Smooth boundary data from a few random Fourier modes in the angle.
fn trig_data(c: &[f64; 5]) -> impl Fn([f64; 2]) -> f64 + '_ {
    move |p: [f64; 2]| {
        let t = p[1].atan2(p[0]);
        c[0] + c[1] * t.cos() + c[2] * t.sin() + c[3] * (2.0 * t).cos() + c[4] * (3.0 * t).sin()
    }
}

/// `u + f` on interior nodes, `u` elsewhere.
fn perturb_interior(u: &DiscreteGraph, f: impl Fn([f64; 2]) -> f64) -> DiscreteGraph {
    u.map_values(|p, w| {
        let k = u.grid.nearest_index(p);
        if u.mask[k] == NodeKind::Interior { w + f(p) } else { w }
    })
}

fn solve(phi: &AnisotropyIntegrand, problem: &DiscreteGraph) -> (DiscreteGraph, SolveReport) {
    let (u, rep) = solve_dirichlet(phi, problem, None, &SolveOptions::default()).unwrap();
    assert!(rep.converged, "{rep:?}");
    (u, rep)
}

proptest! {
    #![proptest_config(config(20))]

    #[test]
    fn ordered_data_gives_ordered_solutions(
        fam in 0usize..3,
        c in prop::array::uniform5(-0.6f64..0.6),
        d in prop::array::uniform5(-0.2f64..0.2),
    ) {
        let phi = &families()[fam];
        let grid = GridSpec::covering(&disk(), 1.0 / 16.0).unwrap();
        let lower = DiscreteGraph::with_boundary_data(&disk(), grid, trig_data(&c)).unwrap();
        // Adding a nonnegative function keeps the data ordered.
        let bump = trig_data(&d);
        let upper = lower.map_values(|p, v| v + bump(p).abs() + 0.01);
        let (u, ru) = solve(phi, &lower);
        let (v, rv) = solve(phi, &upper);
        let h = grid.h;
        let slack = (ru.tol_res + rv.tol_res) * h * h;
        for k in u.interior_indices() {
            prop_assert!(u.values[k] <= v.values[k] + slack, "node {k}: {} > {}", u.values[k], v.values[k]);
        }
        prop_assert!(ru.max_principle_excess <= slack && rv.max_principle_excess <= slack);
    }

    #[test]
    fn solver_output_meets_residual_and_ellipticity_bounds(
        fam in 0usize..3,
        c in prop::array::uniform5(-0.8f64..0.8),
    ) {
        let phi = &families()[fam];
        let grid = GridSpec::covering(&square(), 1.0 / 16.0).unwrap();
        let problem = DiscreteGraph::with_boundary_data(&square(), grid, smooth_data(&c)).unwrap();
        let (u, rep) = solve(phi, &problem);
        let res = residual(phi, &u).unwrap();
        for k in u.interior_indices() {
            prop_assert!(res[k].abs() <= rep.tol_res);
        }
        let bounds = phi.ellipticity_bounds(rep.gradient_bound).unwrap();
        prop_assert!(bounds.contains(rep.coefficient_min, 1e-6), "{} vs {bounds:?}", rep.coefficient_min);
        prop_assert!(bounds.contains(rep.coefficient_max, 1e-6), "{} vs {bounds:?}", rep.coefficient_max);

        // Divergence of the calibration field against the residual. Generic
        // data leaves corner singularities, so only a window away from ∂Ω
        // sees a smooth solution.
        let div = calibration_divergence(phi, &u).unwrap();
        let h = grid.h;
        for k in u.interior_indices().into_iter().filter(|&k| sup_norm(grid.point_of(k)) <= 0.75) {
            prop_assert!((div[k] + res[k]).abs() <= 10.0 * h * h, "{} vs {}", div[k], res[k]);
        }
    }

    #[test]
    fn calibration_field_is_admissible(fam in 0usize..3, c in prop::array::uniform5(-1.0f64..1.0), seed in 0u64..1000) {
        let phi = &families()[fam];
        let grid = GridSpec::covering(&disk(), 1.0 / 8.0).unwrap();
        let g = DiscreteGraph::sample(&disk(), grid, |p| trig_data(&c)(p) * (p[0] * p[0] + p[1] * p[1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs: Vec<DVector<f64>> = (0..100)
            .map(|_| loop {
                let v = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
                if v.norm() > 0.1 {
                    break v.normalize();
                }
            })
            .collect();
        prop_assert!(calibration_slack(phi, &g, &dirs).unwrap() >= -1e-10);
    }

    #[test]
    fn area_ignores_constants_and_scales_under_rescaling(
        fam in 0usize..3,
        c in prop::array::uniform5(-1.0f64..1.0),
        shift in -5.0f64..5.0,
        k in prop::sample::select(vec![0.5, 2.0, 4.0]),
    ) {
        let phi = &families()[fam];
        let dom = Domain::Rectangle { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 };
        let grid = GridSpec::covering(&dom, 1.0 / 16.0).unwrap();
        let g = DiscreteGraph::sample(&dom, grid, |p| trig_data(&c)(p) * p[0] * p[1]).unwrap();
        let a = anisotropic_area(phi, &g, &Region::All).unwrap();
        // Equal up to the rounding of w + c.
        prop_assert!((a - anisotropic_area(phi, &g.add_constant(shift), &Region::All).unwrap()).abs() <= 1e-13 * a);
        let region = Region::Disk { center: [0.2, -0.1], radius: 0.7 };
        let gk = rescale(&g, k).unwrap();
        let part = anisotropic_area(phi, &g, &region).unwrap();
        let part_k = anisotropic_area(phi, &gk, &region.scaled(1.0 / k)).unwrap();
        prop_assert!((part_k * k * k - part).abs() <= 1e-10 * part, "{} vs {}", part_k * k * k, part);
    }
}

#[test]
fn refinement_is_second_order_for_smooth_data() {
    let c = [0.1, 0.5, -0.3, 0.4, 0.2];
    for phi in families() {
        let sols: Vec<DiscreteGraph> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let grid = GridSpec::covering(&square(), 2.0 / n as f64).unwrap();
                solve(&phi, &DiscreteGraph::with_boundary_data(&square(), grid, smooth_data(&c)).unwrap()).0
            })
            .collect();
        // Coarse nodes of the central window, away from the corner singularities.
        let diff = |a: &DiscreteGraph, b: &DiscreteGraph| {
            sols[0]
                .interior_indices()
                .into_iter()
                .map(|k| sols[0].grid.point_of(k))
                .filter(|&p| sup_norm(p) <= 0.5)
                .map(|p| (a.values[a.grid.nearest_index(p)] - b.values[b.grid.nearest_index(p)]).abs())
                .fold(0.0, f64::max)
        };
        let e1 = diff(&sols[0], &sols[1]);
        let e2 = diff(&sols[1], &sols[2]);
        let rate = (e1 / e2).log2();
        assert!(rate >= 1.8, "{:?}: rate {rate} ({e1:e}, {e2:e})", phi.family());
    }
}

#[test]
fn divergence_matches_residual_pointwise_on_scherk() {
    let phi = AnisotropyIntegrand::isotropic(3).unwrap();
    let scherk = |p: [f64; 2]| p[0].cos().ln() - p[1].cos().ln();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let grid = GridSpec::covering(&square(), h).unwrap();
        let (u, _) = solve(&phi, &DiscreteGraph::with_boundary_data(&square(), grid, scherk).unwrap());
        let res = residual(&phi, &u).unwrap();
        let div = calibration_divergence(&phi, &u).unwrap();
        let worst = u.interior_indices().into_iter().map(|k| (div[k] + res[k]).abs()).fold(0.0, f64::max);
        assert!(worst <= 10.0 * h * h, "h = {h}: {worst:e}");
    }
}

#[test]
fn competitor_gaps_are_positive_and_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for phi in families() {
        let grid = GridSpec::covering(&square(), 1.0 / 32.0).unwrap();
        let c = [0.0, 0.4, -0.2, 0.3, 0.1];
        let problem = DiscreteGraph::with_boundary_data(&square(), grid, smooth_data(&c)).unwrap();
        let (u, _) = solve(&phi, &problem);
        let scale = data_scale(&u);
        let h = grid.h;
        for _ in 0..20 {
            let (a, b, m) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..4.0));
            let amp = rng.gen_range(0.01..0.2);
            let bump = |p: [f64; 2]| amp * (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]) * (m * (a * p[0] + b * p[1])).cos();
            let v = perturb_interior(&u, bump);
            let gap = competitor_gap(&phi, &u, &v).unwrap();
            assert!(gap >= -1e-8 * scale);
            if v.max_abs_diff(&u) > 10.0 * h * h * scale {
                assert!(gap > 0.0, "gap {gap:e}");
            }
        }
        // Quadratic growth in the perturbation size.
        let bump = |p: [f64; 2]| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]) * (2.0 * p[0] + 1.0).sin();
        let ts = [0.02, 0.04, 0.08, 0.16];
        let gaps: Vec<f64> = ts
            .iter()
            .map(|t| {
                let v = perturb_interior(&u, |p| t * bump(p));
                competitor_gap(&phi, &u, &v).unwrap()
            })
            .collect();
        let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 2.0).abs() <= 0.1, "{:?}: exponent {slope}", phi.family());
    }
}
