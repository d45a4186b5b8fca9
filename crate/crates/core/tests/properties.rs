use proptest::prelude::*;
use restspike_core::linalg::det3;
use restspike_core::manifold::{chart_n, fold_np, CriticalManifold};
use restspike_core::model::{fast_current, full_jacobian, full_vector_field, FullSystem};
use restspike_core::ode::{Control, IntegrationSettings, Integrator, Record};
use restspike_core::reduced::{desing_jacobian, desing_vf, equilibria, iv_curve};
use restspike_core::{FullState, ModelParams};

fn bistable() -> ModelParams {
    ModelParams::default().with_current(-0.55)
}

fn entry_close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn full_jacobian_matches_central_differences(v in -1.2f64..1.2, n in 0.0f64..8.0, p in 0.0f64..2.0, i in -1.0f64..0.5) {
        let pr = ModelParams::default().with_current(i);
        let s = FullState::new(v, n, p);
        let jac = full_jacobian(&s, &pr).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut up = s.to_array();
            let mut down = s.to_array();
            up[k] += h;
            down[k] -= h;
            let fu = full_vector_field(&FullState::from_array(up), &pr).unwrap();
            let fd = full_vector_field(&FullState::from_array(down), &pr).unwrap();
            for r in 0..3 {
                let fdiff = (fu[r] - fd[r]) / (2.0 * h);
                prop_assert!(entry_close(jac[r][k], fdiff, 1e-6), "J[{r}][{k}] = {} vs {fdiff}", jac[r][k]);
            }
        }
    }

    #[test]
    fn desing_jacobian_matches_central_differences(v in -0.95f64..0.95, p in 0.0f64..2.0, i in -0.9f64..0.0) {
        let pr = ModelParams::default().with_current(i);
        let lin = desing_jacobian(v, p, &pr).unwrap();
        let h = 1e-6;
        let cols = [
            (desing_vf(v + h, p, &pr).unwrap(), desing_vf(v - h, p, &pr).unwrap()),
            (desing_vf(v, p + h, &pr).unwrap(), desing_vf(v, p - h, &pr).unwrap()),
        ];
        for (k, (fu, fd)) in cols.iter().enumerate() {
            for r in 0..2 {
                let fdiff = (fu[r] - fd[r]) / (2.0 * h);
                prop_assert!(entry_close(lin.jacobian[r][k], fdiff, 1e-6));
            }
        }
    }

    #[test]
    fn determinant_at_equilibria_follows_iv_slope(v in -1.5f64..1.5) {
        let pr = ModelParams::default();
        let (i, s) = FullSystem::equilibrium_at(&pr, v);
        let pr = pr.with_current(i);
        let det = det3(&full_jacobian(&s, &pr).unwrap());
        let want = -iv_curve(v, &pr).1 / (pr.eps * pr.tau);
        prop_assert!((det - want).abs() <= 1e-8 * want.abs().max(1e-12), "{det} vs {want}");
    }

    #[test]
    fn chart_round_trip(v in -0.999f64..1.0, n in 0.0f64..8.0, p in 0.0f64..2.0) {
        let pr = ModelParams::default();
        let i = pr.ionic_current(&FullState::new(v, n, p));
        let back = chart_n(v, p, &pr.with_current(i)).unwrap();
        // the subtraction inside the chart loses digits when n is small
        // against c(v), so the error is measured against max(|n|, 1)
        prop_assert!((back - n).abs() <= 1e-12 * n.abs().max(1.0) / (v + 1.0).min(1.0));
    }

    #[test]
    fn second_voltage_derivative_is_independent_of_gates(v in -0.9f64..0.9, n in 0.0f64..8.0, p in 0.0f64..2.0) {
        let pr = ModelParams::default();
        let h = 1e-4;
        let f = |v: f64| pr.ionic_current(&FullState::new(v, n, p));
        let fd = (f(v + h) - 2.0 * f(v) + f(v - h)) / (h * h);
        let want = fast_current(v, &pr).curvature;
        prop_assert!((fd - want).abs() <= 1e-5 * want.abs().max(1.0));
    }

    #[test]
    fn fold_curves_move_continuously_with_current(v in -0.99f64..0.99, i in -1.0f64..0.5) {
        let a = fold_np(v, &ModelParams::default().with_current(i));
        let b = fold_np(v, &ModelParams::default().with_current(i + 1e-6));
        prop_assert!((a.0 - b.0).abs() < 1e-4 && (a.1 - b.1).abs() < 1e-4);
    }

    #[test]
    fn equilibria_invert_the_iv_curve(v0 in -1.5f64..1.5) {
        let pr = ModelParams::default();
        let i = iv_curve(v0, &pr).0;
        let m = CriticalManifold::new(pr.with_current(i)).unwrap();
        let eq = equilibria(&m);
        prop_assert!(eq.iter().any(|e| (e.v - v0).abs() < 1e-10), "{v0} not in {:?}", eq.iter().map(|e| e.v).collect::<Vec<_>>());
        for e in &eq {
            prop_assert!((iv_curve(e.v, &pr).0 - i).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn physical_box_is_forward_invariant_at_zero_current(v in -1.0f64..1.0, n in 0.0f64..8.0, p in 0.0f64..2.0) {
        let pr = ModelParams::default();
        let sys = FullSystem::new(pr).unwrap();
        let field = |_: f64, x: &[f64; 3]| sys.field(x);
        let mut inside = true;
        let settings = IntegrationSettings::default().with_t_max(30.0);
        Integrator::new(field, settings)
            .record(Record::Endpoints)
            .run(0.0, [v, n, p], &[], &mut |_, x, _| {
                let tol = 1e-9;
                inside &= x[0] >= -1.0 - tol && x[0] <= 1.0 + tol;
                inside &= x[1] >= -tol && x[1] <= pr.gate_n.g + tol;
                inside &= x[2] >= -tol && x[2] <= pr.gate_p.g + tol;
                Control::Continue
            })
            .unwrap();
        prop_assert!(inside);
    }
}

#[test]
fn eigenvalue_sums_and_products_match_trace_and_determinant() {
    use restspike_core::bifurcation::equilibrium_branch;
    use restspike_core::linalg::trace3;
    let pr = ModelParams::default();
    let grid: Vec<f64> = (0..=300).map(|k| -1.5 + 3.0 * k as f64 / 300.0).collect();
    for b in equilibrium_branch(&grid, &pr).unwrap() {
        let jac = full_jacobian(&b.state, &pr.with_current(b.i)).unwrap();
        let sum: f64 = b.eigenvalues.iter().map(|e| e.re).sum();
        let tr = trace3(&jac);
        assert!((sum - tr).abs() <= 1e-10 * tr.abs().max(1.0));
        let (mut re, mut im) = (1.0, 0.0);
        for e in &b.eigenvalues {
            (re, im) = (re * e.re - im * e.im, re * e.im + im * e.re);
        }
        let det = det3(&jac);
        assert!(
            (re - det).abs() <= 1e-8 * det.abs().max(1e-12),
            "{re} vs {det}"
        );
        assert!(im.abs() <= 1e-8 * det.abs().max(1.0));
    }
}

#[test]
fn fold_residuals_over_the_chart_window() {
    let m = CriticalManifold::new(bistable()).unwrap();
    let (fl, fh) = m.fold_locus(4000, false).unwrap();
    for s in fl.samples.iter().chain(&fh.samples) {
        let pr = m.params();
        assert!((pr.ionic_current(s) - pr.i).abs() < 1e-12);
        assert!(pr.ionic_current_dv(s).abs() < 1e-12);
    }
    assert!(fl
        .samples
        .iter()
        .all(|s| fast_current(s.v, m.params()).curvature < 0.0));
    assert!(fh
        .samples
        .iter()
        .all(|s| fast_current(s.v, m.params()).curvature > 0.0));
}
