use pdm::euler::{first_variation, second_variation, Solver};
use pdm::models::trig::{Factor, Term, TrigExpr};
use pdm::models::BuiltinModel;
use pdm::weights::{
    cutoff, cutoff_derivs, ibp_weight_first, ibp_weight_iterated, localization_r, ou_apply, Cutoff, CutoffSpec,
};
use pdm::wiener::{
    gh_expectation, sample_increments, skorohod, wiener_integral, Functional, FunctionalState, IncrementMatrix,
    Shape, TimeGrid,
};
use proptest::prelude::*;

fn markovian() -> BuiltinModel {
    BuiltinModel::markovian(
        TrigExpr::new(vec![Term::constant(1.0), Term::new(0.25, Factor::Sin, Factor::One)]),
        TrigExpr::new(vec![Term::new(0.25, Factor::Cos, Factor::One)]),
    )
    .unwrap()
}

fn delay() -> BuiltinModel {
    BuiltinModel::delay(
        TrigExpr::new(vec![Term::constant(1.0), Term::new(0.25, Factor::Sin, Factor::One)]),
        TrigExpr::new(vec![Term::new(0.25, Factor::One, Factor::Cos)]),
        0.25,
    )
    .unwrap()
}

#[test]
fn second_variation_matches_bumped_first_variation() {
    let model = delay();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let dw = sample_increments(8, 1, &grid, 1).unwrap();
    let second = second_variation(&model, &grid, &dw, &[0.2]).unwrap();
    let eps = 1e-5;
    for kp in 0..8 {
        let up = first_variation(&model, &grid, &dw.bumped(kp, 0, eps), &[0.2]).unwrap();
        let dn = first_variation(&model, &grid, &dw.bumped(kp, 0, -eps), &[0.2]).unwrap();
        for k in 0..8 {
            let fd = (up.get(k, 8, 0, 0) - dn.get(k, 8, 0, 0)) / (2.0 * eps);
            let exact = second.get(k, kp, 8, 0, 0, 0);
            assert!((fd - exact).abs() < 1e-6, "({k}, {kp}): {fd} vs {exact}");
        }
    }
    assert!(second.asymmetry() < 1e-12);
}

#[test]
fn terminal_jet_agrees_with_variations() {
    for model in [markovian(), delay()] {
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let dw = sample_increments(2, 7, &grid, 1).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let f = solver.terminal_state(&dw, &[0.1], 2, 64).unwrap();
        let path = solver.solve(&dw, &[0.1]).unwrap();
        assert_eq!(f.component(0).value(), path.terminal()[0]);
        let first = first_variation(&model, &grid, &dw, &[0.1]).unwrap();
        let grad = f.component(0).grad().unwrap();
        for k in 0..6 {
            assert!((grad.get(k, 0) - first.get(k, 6, 0, 0)).abs() < 1e-12);
        }
    }
}

#[test]
fn euler_functional_duality_under_quadrature() {
    // F = X_2(1) of the Markovian model; E[g'(F)] = E[g(F) H(F, 1)] and
    // E[g''(F)] = E[g(F) H_(0,0)(F, 1)] for g(x) = x^3 - x.
    let model = markovian();
    let grid = TimeGrid::new(1.0, 2).unwrap();
    let solver = Solver::new(&model, &grid).unwrap();
    let shape = Shape::new(2, 1);
    let state = |dw: &IncrementMatrix| solver.terminal_state(dw, &[0.3], 3, 64).unwrap();
    let lhs1 = gh_expectation(|dw| 3.0 * state(dw).component(0).value().powi(2) - 1.0, &grid, 1, 40).unwrap();
    let lhs2 = gh_expectation(|dw| 6.0 * state(dw).component(0).value(), &grid, 1, 40).unwrap();
    let one = Functional::constant(shape, 1.0, 2);
    let weighted = |alpha: &'static [usize]| {
        let one = one.clone();
        move |dw: &IncrementMatrix| {
            let f = state(dw);
            let x = f.component(0).value();
            let h = ibp_weight_iterated(&f, &one, alpha, dw, &grid).unwrap().h;
            (x.powi(3) - x) * h
        }
    };
    let rhs1 = gh_expectation(weighted(&[0]), &grid, 1, 40).unwrap();
    let rhs2 = gh_expectation(weighted(&[0, 0]), &grid, 1, 40).unwrap();
    assert!((lhs1 - rhs1).abs() < 1e-6, "{lhs1} vs {rhs1}");
    assert!((lhs2 - rhs2).abs() < 1e-5, "{lhs2} vs {rhs2}");
}

#[test]
fn weights_of_brownian_motion() {
    // F = W(1): H(F, 1) = W(1) and H(F, G) = G W(1) - <DG, 1> for G = W(1)^2.
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let shape = Shape::new(4, 1);
    let dw = sample_increments(3, 0, &grid, 1).unwrap();
    let w = (0..4).fold(Functional::constant(shape, 0.0, 3), |acc, k| {
        acc.add(&Functional::increment(shape, k, 0, dw.get(k, 0), 3))
    });
    let f = FunctionalState::scalar(w.clone());
    let w1 = dw.terminal(0);
    let h = ibp_weight_first(&f, &Functional::constant(shape, 1.0, 2), 0, &dw, &grid).unwrap();
    assert!((h.h - w1).abs() < 1e-12);
    let g = w.mul(&w).truncated(2);
    let h = ibp_weight_first(&f, &g, 0, &dw, &grid).unwrap();
    assert!((h.h - (w1.powi(3) - 2.0 * w1)).abs() < 1e-12);
    assert!((ou_apply(&w, &dw, &grid).unwrap() + w1).abs() < 1e-12);
}

#[test]
fn cutoffs_are_smooth_steps() {
    let spec = CutoffSpec::default();
    spec.validate().unwrap();
    for which in [Cutoff::Psi, Cutoff::Psi1] {
        let [a, b] = spec.band(which);
        assert_eq!(cutoff(&spec, which, a).unwrap(), 1.0);
        assert_eq!(cutoff(&spec, which, b).unwrap(), 0.0);
        let mid = cutoff(&spec, which, 0.5 * (a + b)).unwrap();
        assert!((mid - 0.5).abs() < 1e-12);
    }
    assert!(cutoff(&spec, Cutoff::Psi, -0.1).is_err());
    let bad = CutoffSpec {
        psi: [0.1, 0.4],
        psi1: [0.2, 0.5],
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn adapted_divergence_is_the_wiener_integral(
        inc in prop::collection::vec(-2.0..2.0f64, 6),
        u in prop::collection::vec(-3.0..3.0f64, 6),
    ) {
        let grid = TimeGrid::new(1.5, 3).unwrap();
        let dw = IncrementMatrix::from_rows(grid, 2, inc).unwrap();
        let shape = Shape::new(3, 2);
        let field: Vec<Functional> = u.iter().map(|&v| Functional::constant(shape, v, 1)).collect();
        let a = skorohod(&field, &dw, &grid).unwrap();
        let b = wiener_integral(&u, &dw).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_monotone_in_unit_range(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let spec = CutoffSpec::default();
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        for which in [Cutoff::Psi, Cutoff::Psi1] {
            let a = cutoff(&spec, which, lo).unwrap();
            let b = cutoff(&spec, which, hi).unwrap();
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            prop_assert!(a >= b);
            prop_assert!(cutoff_derivs(&spec, which, lo).unwrap()[1] <= 0.0);
        }
    }

    #[test]
    fn localization_statistic(seed in 0u64..1000, shift in -1.0..1.0f64) {
        let model = markovian();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let dw = sample_increments(seed, 0, &grid, 1).unwrap();
        let solver = Solver::new(&model, &grid).unwrap();
        let f = solver.terminal_state(&dw, &[0.0], 2, 64).unwrap();
        prop_assert_eq!(localization_r(&f, &f, &grid).unwrap(), 0.0);
        // A constant shift leaves D F unchanged.
        let shifted = f.map(|c| c.offset(shift));
        prop_assert_eq!(localization_r(&f, &shifted, &grid).unwrap(), 0.0);
        let scaled = f.map(|c| c.scale(1.0 + shift.abs() + 0.01));
        prop_assert!(localization_r(&f, &scaled, &grid).unwrap() > 0.0);
    }
}
