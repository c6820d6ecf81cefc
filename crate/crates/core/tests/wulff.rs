use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wulffgraph::wulff::{fd_wulff_normal, fd_wulff_shape_operator, AnisotropyIntegrand, SphereDirection};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn unit3() -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("away from zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 0.05)
        .prop_map(|v| DVector::from_column_slice(&v).normalize())
}

/// Isotropic, a random SPD ellipsoid, or a small admissible perturbation.
fn integrand() -> impl Strategy<Value = AnisotropyIntegrand> {
    prop_oneof![
        Just(AnisotropyIntegrand::isotropic(3).unwrap()),
        (prop::array::uniform9(-1.0f64..1.0), 0.2f64..1.0).prop_map(|(a, shift)| {
            let a = DMatrix::from_row_slice(3, 3, &a);
            let q = &a * a.transpose() + DMatrix::identity(3, 3) * shift;
            AnisotropyIntegrand::ellipsoidal(q).unwrap()
        }),
        (0.0f64..0.03, 1.0f64..3.0, 0.0f64..6.0)
            .prop_map(|(amp, k, ph)| AnisotropyIntegrand::perturbed_isotropic(3, amp, k, ph).unwrap()),
    ]
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn one_homogeneity(phi in integrand(), x in unit3(), scale in 0.1f64..5.0, t in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let x = x * scale;
        let v = phi.value(&x).unwrap();
        let vt = phi.value(&(&x * t)).unwrap();
        prop_assert!((vt - t * v).abs() <= 1e-10 * t * v);
        // The gradient is zero-homogeneous.
        let g = phi.gradient(&x).unwrap();
        let gt = phi.gradient(&(&x * t)).unwrap();
        prop_assert!((g - gt).amax() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn hessian_annihilates_the_radial_direction(phi in integrand(), x in unit3()) {
        let hess = phi.hessian(&x).unwrap();
        prop_assert!((&hess * &x).norm() <= 1e-8 * hess.norm());
    }

    #[test]
    fn gradient_image_has_the_input_as_normal(phi in integrand(), x in unit3()) {
        let nu = SphereDirection::new(x.clone()).unwrap();
        let n = fd_wulff_normal(&phi, &nu, 1e-4).unwrap();
        prop_assert!((n - &x).norm() <= 1e-5);
    }

    #[test]
    fn tangential_hessian_inverts_the_shape_operator(phi in integrand(), x in unit3()) {
        let nu = SphereDirection::new(x).unwrap();
        let t = phi.tangential_hessian(&nu).unwrap();
        let ii = fd_wulff_shape_operator(&phi, &nu, 1e-4).unwrap();
        let err = (&t.matrix * ii - DMatrix::identity(2, 2)).amax();
        prop_assert!(err <= 1e-5, "{err:e}");
    }

    #[test]
    fn calibration_inequality(phi in integrand(), a in unit3(), bs in prop::collection::vec(unit3(), 500)) {
        let pa = phi.value(&a).unwrap();
        for b in &bs {
            prop_assert!(phi.gradient(b).unwrap().dot(&a) <= pa + 1e-10);
        }
        // Equality at b = a by homogeneity.
        prop_assert!((phi.gradient(&a).unwrap().dot(&a) - pa).abs() <= 1e-12 * (1.0 + pa));
    }

    #[test]
    fn graph_integrand_matches_finite_differences(phi in integrand(), z in prop::array::uniform2(-2.0f64..2.0)) {
        let step = 1e-4;
        let g = phi.graph_integrand(&z);
        for l in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[l] += step;
            zm[l] -= step;
            let fd = (phi.graph_value(&zp) - phi.graph_value(&zm)) / (2.0 * step);
            prop_assert!((fd - g.gradient[l]).abs() <= 1e-6 * (1.0 + g.gradient[l].abs()));
            let gp = phi.graph_integrand(&zp).gradient;
            let gm = phi.graph_integrand(&zm).gradient;
            for m in 0..2 {
                let fd = (gp[m] - gm[m]) / (2.0 * step);
                prop_assert!((fd - g.hessian[(m, l)]).abs() <= 1e-6 * (1.0 + g.hessian[(m, l)].abs()));
            }
        }
    }
}
