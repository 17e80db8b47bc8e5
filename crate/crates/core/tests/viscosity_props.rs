use dphase_core::mesh::{interpolate, BoundaryData, Grid, NodalField};
use dphase_core::operator::{CoefficientField, DoublePhaseParams, GradVec, SymMatrix};
use dphase_core::variational::ProblemSpec;
use dphase_core::viscosity::{
    doubling_penalty, generate_touching_quadratics, nondiv_eval, solve_viscosity, touch_test, FdScheme,
    SecondOrderJet, SmoothFunction, ViscosityOptions,
};
use dphase_core::Error;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = DoublePhaseParams> {
    (1.2f64..4.0, 0.0f64..2.8, 0.0f64..2.0).prop_map(|(p, d, a)| DoublePhaseParams::constant(p, p + d, a).unwrap())
}

fn wave(c: [f64; 4]) -> impl Fn([f64; 2]) -> f64 + Copy {
    move |x| c[0] * (3.0 * x[0] + c[1]).sin() + c[2] * x[1] * x[1] + c[3] * x[0] * x[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stencils_are_monotone(pr in params(), c in prop::array::uniform4(-2.0f64..2.0), eps in 0.0f64..1.0) {
        let g = Grid::unit_square(9).unwrap();
        let spec = ProblemSpec::new(g.clone(), pr, BoundaryData::function(|_| 0.0)).with_epsilon(eps).unwrap();
        let scheme = FdScheme::new(&spec, &ViscosityOptions::default()).unwrap();
        let u = interpolate(&g, wave(c)).unwrap();
        for i in g.interior_nodes() {
            let st = scheme.stencil(u.values(), i).unwrap();
            prop_assert!(st.diag > 0.0);
            prop_assert!(st.weights.iter().all(|&(_, w)| w >= -1e-12 * st.diag), "{st:?}");
            let total: f64 = st.weights.iter().map(|w| w.1).sum();
            prop_assert!((total - st.diag).abs() <= 1e-9 * st.diag);
        }
    }

    #[test]
    fn ordered_data_give_ordered_viscosity_solutions(
        pr in params(),
        c in prop::array::uniform4(-1.0f64..1.0),
        lift in prop::collection::vec(0.0f64..0.5, 32),
    ) {
        let g = Grid::unit_square(9).unwrap();
        let spec = ProblemSpec::new(g.clone(), pr, BoundaryData::function(wave(c)));
        let g1 = spec.boundary().values_on(&g).unwrap();
        let g2: Vec<f64> = g1.iter().zip(lift.iter().cycle()).map(|(v, l)| v + l).collect();
        let opts = ViscosityOptions::default();
        let (u1, r1) = solve_viscosity(&spec, &opts).unwrap();
        let (u2, _) = solve_viscosity(&spec.clone().with_boundary(BoundaryData::Values(g2)), &opts).unwrap();
        prop_assert!(r1.converged && r1.residual_norm <= opts.tolerance);
        for (a, b) in u1.values().iter().zip(u2.values()) {
            prop_assert!(*a <= b + 1e-8);
        }
    }

    #[test]
    fn generated_quadratics_touch_from_below(pr in params(), c in prop::array::uniform4(-1.0f64..1.0), seed in any::<u64>()) {
        let g = Grid::unit_square(9).unwrap();
        let spec = ProblemSpec::new(g.clone(), pr, BoundaryData::function(wave(c)));
        let (u, _) = solve_viscosity(&spec, &ViscosityOptions::default()).unwrap();
        for node in g.interior_nodes().into_iter().step_by(7) {
            let qs = match generate_touching_quadratics(&u, node, 5, seed) {
                Ok(qs) => qs,
                Err(Error::NoTouchFound(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            for phi in &qs {
                prop_assert_eq!(phi.value(g.node_coord(node)), u.value(node));
                for m in (0..g.node_count()).filter(|&m| m != node) {
                    prop_assert!(phi.value(g.node_coord(m)) < u.value(m));
                }
            }
        }
    }

    #[test]
    fn penalty_sees_constant_shift(c in prop::array::uniform4(-1.0f64..1.0), shift in 0.01f64..1.0) {
        let g = Grid::unit_square(9).unwrap();
        let pr = DoublePhaseParams::constant(2.5, 3.0, 1.0).unwrap();
        let v = interpolate(&g, wave(c)).unwrap();
        let u = NodalField::new(g.clone(), v.values().iter().map(|x| x + shift).collect()).unwrap();
        let r = doubling_penalty(&u, &v, &pr, 1e5, 3.5, 0.5).unwrap();
        prop_assert_eq!(r.x_node, r.y_node);
        prop_assert!((r.psi_max - shift).abs() <= 1e-12);
    }
}

#[test]
fn hand_evaluations() {
    let pr = DoublePhaseParams::constant(3.0, 3.0, 0.0).unwrap();
    let jet = SecondOrderJet::new([0.5, 0.5], GradVec::d2(1.0, 0.0), SymMatrix::identity(2)).unwrap();
    assert!((nondiv_eval(&pr, &jet).unwrap() + 3.0).abs() < 1e-14);
    let lap = DoublePhaseParams::constant(2.0, 2.0, 0.0).unwrap();
    let jet = SecondOrderJet::new([0.5, 0.5], GradVec::d2(0.0, 0.0), SymMatrix::d2(1.0, 0.3, 2.0)).unwrap();
    assert!((nondiv_eval(&lap, &jet).unwrap() + 3.0).abs() < 1e-14);
}

#[test]
fn touch_tests_pass_on_solved_fields() {
    let g = Grid::unit_square(17).unwrap();
    for (p, q, a) in [(2.5, 3.0, 1.0), (1.5, 1.8, 1.0)] {
        for eps in [0.0, 0.1] {
            let pr = DoublePhaseParams::constant(p, q, a).unwrap();
            let spec = ProblemSpec::new(g.clone(), pr.clone(), BoundaryData::function(|x| x[0] + 0.3 * x[1] * x[1]))
                .with_epsilon(eps)
                .unwrap();
            let (u, _) = solve_viscosity(&spec, &ViscosityOptions::default()).unwrap();
            let reports = touch_test(&u, &pr, eps, 40, 3).unwrap();
            let passed = reports.iter().filter(|r| r.passed).count();
            assert!(passed >= 38, "({p},{q},{a}) eps {eps}: {passed}/40");
        }
    }
}

#[test]
fn variable_coefficient_is_refused_by_default() {
    let g = Grid::unit_square(9).unwrap();
    let coeff = CoefficientField::analytic(|x| 1.0 + x[0], |_| [1.0, 0.0]);
    let pr = DoublePhaseParams::new(2.0, 3.0, 1.0, coeff).unwrap();
    let spec = ProblemSpec::new(g, pr, BoundaryData::function(|x| x[1]));
    assert!(matches!(solve_viscosity(&spec, &ViscosityOptions::default()), Err(Error::VariableCoefficient)));
}
