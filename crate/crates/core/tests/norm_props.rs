use std::io::BufReader;

use dphase_core::mesh::{interpolate, p1_gradient, read_field, write_field, Grid, NodalField};
use dphase_core::norms::{gradient_modular, luxemburg_norm, modular, norm_modular_bounds_check, poincare_ratio, Measured};
use dphase_core::operator::DoublePhaseParams;
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = std::sync::Arc<Grid>> {
    prop_oneof![
        (0.5f64..3.0, 3usize..30).prop_map(|(l, n)| Grid::line(-0.5, -0.5 + l, n).unwrap()),
        (0.5f64..2.0, 0.5f64..2.0, 3usize..12, 3usize..12)
            .prop_map(|(lx, ly, nx, ny)| Grid::rectangle([0.0, lx], [1.0, 1.0 + ly], nx, ny).unwrap()),
    ]
}

fn field() -> impl Strategy<Value = NodalField> {
    grid().prop_flat_map(|g| {
        let n = g.node_count();
        prop::collection::vec(-5.0f64..5.0, n).prop_map(move |v| NodalField::new(g.clone(), v).unwrap())
    })
}

fn params() -> impl Strategy<Value = DoublePhaseParams> {
    (1.1f64..5.0, 0.0f64..3.0, 0.0f64..2.0).prop_map(|(p, d, a)| DoublePhaseParams::constant(p, p + d, a).unwrap())
}

proptest! {
    #[test]
    fn norm_modular_bounds(u in field(), pr in params(), scale in -3.0f64..3.0) {
        let u = u.scaled(10f64.powf(scale)).unwrap();
        for which in [Measured::Values, Measured::Gradient] {
            let c = norm_modular_bounds_check(&u, &pr, which).unwrap();
            prop_assert!(c.lower_ok && c.upper_ok, "{c:?}");
        }
    }

    #[test]
    fn luxemburg_norm_is_a_unit_level_fixed_point(u in field(), pr in params()) {
        let lam = luxemburg_norm(&u, &pr, Measured::Values).unwrap();
        prop_assume!(modular(&u, &pr).unwrap().value() > 0.0);
        let m = modular(&u.scaled(1.0 / lam).unwrap(), &pr).unwrap().value();
        prop_assert!((m - 1.0).abs() <= 1e-8, "modular at unit level {m}");
    }

    #[test]
    fn luxemburg_norm_homogeneous_when_exponents_agree(u in field(), p in 1.1f64..5.0, a in 0.0f64..2.0, c in -4.0f64..4.0) {
        prop_assume!(c.abs() > 1e-3);
        let pr = DoublePhaseParams::constant(p, p, a).unwrap();
        let n = luxemburg_norm(&u, &pr, Measured::Gradient).unwrap();
        let nc = luxemburg_norm(&u.scaled(c).unwrap(), &pr, Measured::Gradient).unwrap();
        prop_assert!((nc - c.abs() * n).abs() <= 1e-9 * (1.0 + nc));
    }

    #[test]
    fn modular_nonnegative(u in field(), pr in params()) {
        prop_assert!(modular(&u, &pr).unwrap().value() >= 0.0);
        prop_assert!(gradient_modular(&u, &pr).unwrap().value() >= 0.0);
    }

    #[test]
    fn field_round_trip_is_lossless(u in field()) {
        let mut buf = Vec::new();
        write_field(&u, &mut buf).unwrap();
        let back = read_field(BufReader::new(buf.as_slice())).unwrap();
        prop_assert_eq!(back.values(), u.values());
        prop_assert_eq!(back.grid().counts(), u.grid().counts());
    }

    #[test]
    fn element_measures_sum_to_domain(g in grid()) {
        let total: f64 = g.elements().iter().map(|e| e.measure()).sum();
        prop_assert!((total - g.measure()).abs() <= 1e-12 * g.measure());
    }

    #[test]
    fn affine_fields_have_exact_gradients(g in grid(), c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let u = interpolate(&g, |x| c0 + c1 * x[0] + c2 * x[1]).unwrap();
        for e in 0..g.elements().len() {
            let d = p1_gradient(&u, e);
            prop_assert!((d.get(0) - c1).abs() <= 1e-13 * (1.0 + c1.abs()) * 10.0);
            if g.dim() == 2 {
                prop_assert!((d.get(1) - c2).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn poincare_ratio_below_diameter(u in field(), pr in params()) {
        let mut vals = u.values().to_vec();
        for &b in u.grid().boundary_nodes() {
            vals[b] = 0.0;
        }
        let v = NodalField::new(u.grid().clone(), vals).unwrap();
        let r = poincare_ratio(&v, &pr).unwrap();
        prop_assert!(r.is_finite() && r <= v.grid().diameter());
    }
}

#[test]
fn modular_and_norm_vanish_together() {
    let g = Grid::unit_square(9).unwrap();
    let pr = DoublePhaseParams::constant(1.5, 3.0, 1.0).unwrap();
    let bump = interpolate(&g, |x| (3.0 * x[0]).sin() * x[1] * (1.0 - x[1])).unwrap();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for k in 1..12 {
        let u = bump.scaled(0.5f64.powi(k)).unwrap();
        let pair = (modular(&u, &pr).unwrap().value(), luxemburg_norm(&u, &pr, Measured::Values).unwrap());
        assert!(pair.0 < last.0 && pair.1 < last.1);
        last = pair;
    }
    assert!(last.0 < 1e-5 && last.1 < 1e-3, "{last:?}");
    // a sequence with fixed modular keeps a fixed norm
    let spikes: Vec<f64> = (1..6)
        .map(|k| {
            let g = Grid::line(0.0, 1.0, 4 * k + 1).unwrap();
            let mut v = vec![0.0; g.node_count()];
            v[2 * k] = 1.0 / g.h().sqrt();
            luxemburg_norm(&NodalField::new(g, v).unwrap(), &DoublePhaseParams::constant(2.0, 2.0, 0.0).unwrap(), Measured::Values).unwrap()
        })
        .collect();
    assert!(spikes.windows(2).all(|w| (w[0] - w[1]).abs() < 0.1 * w[0]));
}

#[test]
fn tent_poincare_ratio() {
    // ‖u‖₂ / ‖u'‖₂ for the unit tent is 1/(2√3)
    let g = Grid::line(0.0, 1.0, 513).unwrap();
    let u = interpolate(&g, |x| 0.5 - (x[0] - 0.5).abs()).unwrap();
    let pr = DoublePhaseParams::constant(2.0, 2.0, 0.0).unwrap();
    let r = poincare_ratio(&u, &pr).unwrap();
    assert!((r - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-4, "{r}");
}
