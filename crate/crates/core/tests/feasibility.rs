use fan_core::cells::CellTable;
use fan_core::feasibility::{
    dp_equal_abstention_sufficient, dp_feasible, dp_min_delta, eod_feasible, eop_feasible, eop_nontrivial_bounds,
    sweep_feasibility, write_sweep_csv, DeltaInterval, FeasibilityInputs, GroupInputs, MinDelta, SweepGrid,
};
use fan_core::solver::{solve, ConstraintSpec, Fairness, SolveOptions};
use proptest::prelude::*;

fn pair(tau: [f64; 2], error: [f64; 2], eta: [f64; 2], delta: [f64; 2], epsilon: f64) -> FeasibilityInputs {
    FeasibilityInputs {
        groups: (0..2)
            .map(|z| GroupInputs {
                tau: tau[z],
                error: error[z],
                eta: eta[z],
                delta: delta[z],
            })
            .collect(),
        epsilon,
        sigma_positive: None,
    }
}

fn bound(m: MinDelta) -> f64 {
    match m {
        MinDelta::Bound(b) => b,
        MinDelta::AlwaysFeasible => f64::NEG_INFINITY,
    }
}

/// Plain float evaluation of the closed form.
fn float_min_delta(tau: [f64; 2], error: [f64; 2], eta: [f64; 2], epsilon: f64) -> f64 {
    let slack = |z: usize| (1.0 + eta[z]) * error[z];
    1.0 - (1.0 + epsilon + slack(1) - tau[0] + tau[1]) / (1.0 - slack(0))
}

/// Cell sizes `(y0,b0), (y0,b1), (y1,b0), (y1,b1)` per group.
fn table(groups: &[(usize, usize, usize, usize)]) -> CellTable {
    let sizes: Vec<usize> = groups.iter().flat_map(|&(a, b, c, d)| [a, b, c, d]).collect();
    CellTable::from_sizes(&sizes).unwrap()
}

#[test]
fn example_2b_bound_and_verdicts() {
    let base = |delta_high: f64, eps: f64| pair([0.7, 0.4], [0.1, 0.1], [0.0, 0.0], [delta_high, 0.0], eps);
    let b = bound(dp_min_delta(&base(0.0, 0.05), 0, 1).unwrap());
    assert!((b - (1.0 - 0.85 / 0.9)).abs() < 1e-12);
    assert!(dp_feasible(&base(0.06, 0.05)).unwrap().feasible);
    let report = dp_feasible(&base(0.05, 0.05)).unwrap();
    assert!(!report.feasible);
    assert!(report.diagnosis()[0].contains("requires δ ≥ 0.056"));
    assert!(bound(dp_min_delta(&base(0.0, 0.1), 0, 1).unwrap()) <= 0.0);
}

#[test]
fn balanced_qualification_is_unrestricted() {
    let inputs = pair([0.5, 0.5], [0.2, 0.1], [0.0, 0.0], [0.0, 0.0], 0.0);
    assert!(bound(dp_min_delta(&inputs, 0, 1).unwrap()) < 0.0);
    assert!(dp_feasible(&inputs).unwrap().feasible);
}

#[test]
fn zero_slackened_accuracy_is_always_feasible() {
    let inputs = pair([1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], 0.0);
    assert_eq!(dp_min_delta(&inputs, 0, 1).unwrap(), MinDelta::AlwaysFeasible);
}

#[test]
fn single_group_and_fairness_notions_without_closed_form_conditions() {
    let one = FeasibilityInputs {
        groups: vec![GroupInputs {
            tau: 0.3,
            error: 0.2,
            eta: 0.0,
            delta: 0.0,
        }],
        epsilon: 0.0,
        sigma_positive: None,
    };
    assert!(dp_feasible(&one).unwrap().feasible);
    let extreme = pair([1.0, 0.0], [0.3, 0.3], [0.0, 0.0], [0.0, 0.0], 0.0);
    assert!(eop_feasible(&extreme));
    assert!(eod_feasible(&extreme));
}

#[test]
fn equal_abstention_condition_follows_the_formula() {
    let mut inputs = pair([0.6, 0.3], [0.1, 0.1], [0.0, 0.0], [0.06, 0.2], 0.05);
    assert!(dp_equal_abstention_sufficient(&inputs, 0, 1).is_err());
    inputs.sigma_positive = Some(0.5);
    // delta_low 0.2 <= 2 * 0.3 * 0.5
    assert!(dp_equal_abstention_sufficient(&inputs, 0, 1).unwrap());
    inputs.sigma_positive = Some(0.0);
    assert!(!dp_equal_abstention_sufficient(&inputs, 0, 1).unwrap());
    inputs.groups[1].delta = 0.0;
    assert!(dp_equal_abstention_sufficient(&inputs, 0, 1).unwrap());
}

#[test]
fn equal_abstention_condition_is_not_sufficient_for_the_program() {
    // 100 per group; all high-group errors are missed positives, all
    // low-group errors are false positives
    let t = table(&[(30, 0, 10, 60), (50, 10, 0, 40)]);
    let mut spec = ConstraintSpec::uniform(Fairness::Dp, 0.05, 0.0, 0.0, 2);
    spec.delta = vec![0.06, 0.0];
    let mut inputs = FeasibilityInputs::from_table(&t, &spec).unwrap();
    assert!(dp_feasible(&inputs).unwrap().feasible);
    assert!(solve(&t, &spec).unwrap().status.is_feasible());

    spec.sigma = [None, Some(0.0)];
    inputs.sigma_positive = Some(0.0);
    assert!(dp_equal_abstention_sufficient(&inputs, 0, 1).unwrap());
    assert!(!solve(&t, &spec).unwrap().status.is_feasible());
}

#[test]
fn error_floor_intervals() {
    let interval = |tau| match eop_nontrivial_bounds(tau, 0.3, 0.0).unwrap() {
        DeltaInterval::Interval { lower, upper } => (lower, upper),
        DeltaInterval::Degenerate { reason } => panic!("{reason}"),
    };
    let (lo, hi) = interval(0.6);
    assert!(lo.abs() < 1e-12 && (hi - 0.4).abs() < 1e-12);
    let (lo, hi) = interval(0.2);
    assert!((lo - 0.1).abs() < 1e-12 && (hi - 0.8).abs() < 1e-12);

    let perfect = eop_nontrivial_bounds(0.35, 0.0, 0.0).unwrap();
    assert_eq!(
        perfect,
        DeltaInterval::Interval {
            lower: 0.0,
            upper: 0.65
        }
    );
    assert!(matches!(
        eop_nontrivial_bounds(0.5, 0.5, 1.0).unwrap(),
        DeltaInterval::Degenerate { .. }
    ));
    assert!(eop_nontrivial_bounds(1.5, 0.1, 0.0).is_err());
}

#[test]
fn sweep_locates_the_example_2b_boundary() {
    // N = 1000 per group, tau = [0.7, 0.4], e = 0.1 in both groups
    let t = table(&[(250, 50, 50, 650), (550, 50, 50, 350)]);
    let base = ConstraintSpec::uniform(Fairness::Dp, 0.05, 0.0, 0.0, 2);
    let grid = SweepGrid {
        epsilon: vec![0.05, 0.1],
        delta: vec![0.0, 0.03, 0.05, 0.06, 0.08],
        ..SweepGrid::default()
    };
    let points = sweep_feasibility(&t, &base, &grid, &SolveOptions::default());
    assert_eq!(points.len(), 10);
    for p in &points {
        assert!(p.error.is_none(), "{p:?}");
        let solver = p.solver_status.unwrap().is_feasible();
        if !p.within_margin {
            assert_eq!(Some(solver), p.formula_feasible, "{p:?}");
        }
        if p.epsilon == 0.05 {
            assert_eq!(solver, p.delta >= 0.056, "{p:?}");
        }
    }

    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.starts_with("epsilon,delta,eta,sigma,formula_feasible,solver_status,objective"));
}

#[test]
fn equal_opportunity_sweep_has_no_infeasible_point() {
    let t = table(&[(10, 3, 4, 13), (20, 2, 1, 7)]);
    let base = ConstraintSpec::uniform(Fairness::Eop, 0.0, 0.0, 0.0, 2);
    let grid = SweepGrid {
        epsilon: vec![0.0, 0.1],
        delta: vec![0.0, 0.1, 0.2],
        ..SweepGrid::default()
    };
    for p in sweep_feasibility(&t, &base, &grid, &SolveOptions::default()) {
        assert_eq!(p.formula_feasible, Some(true));
        assert!(p.solver_status.unwrap().is_feasible());
    }
}

#[test]
fn empty_grid_gives_header_only_csv() {
    let t = table(&[(1, 1, 1, 1), (1, 1, 1, 1)]);
    let base = ConstraintSpec::uniform(Fairness::Dp, 0.0, 0.0, 0.0, 2);
    let points = sweep_feasibility(&t, &base, &SweepGrid::default(), &SolveOptions::default());
    assert!(points.is_empty());
    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1);
}

fn unit() -> impl Strategy<Value = f64> {
    (0u32..=100).prop_map(|k| f64::from(k) / 100.0)
}

proptest! {
    #[test]
    fn closed_form_matches_float_evaluation(
        tau_low in unit(), gap in unit(), e0 in 0.0..0.9f64, e1 in unit(), eps in unit(),
    ) {
        let tau = [(tau_low + gap).min(1.0), tau_low];
        let inputs = pair(tau, [e0, e1], [0.0, 0.0], [0.0, 0.0], eps);
        let exact = bound(dp_min_delta(&inputs, 0, 1).unwrap());
        prop_assert!((exact - float_min_delta(tau, [e0, e1], [0.0, 0.0], eps)).abs() < 1e-9);
    }

    #[test]
    fn closed_form_monotonicity(
        tau_low in 0.0..0.5f64, gap in 0.0..0.4f64, e in 0.05..0.4f64, eps in 0.0..0.2f64,
        eta_low in 0.0..0.5f64, eta_high in 0.0..0.5f64, step in 0.01..0.1f64,
    ) {
        let value = |tau: [f64; 2], eta: [f64; 2], eps: f64| {
            bound(dp_min_delta(&pair(tau, [e, e], eta, [0.0, 0.0], eps), 0, 1).unwrap())
        };
        let tau = [tau_low + gap, tau_low];
        let eta = [eta_high, eta_low];
        let here = value(tau, eta, eps);
        prop_assert!(value(tau, eta, eps + step) <= here + 1e-12);
        prop_assert!(value(tau, [eta_high, eta_low + step], eps) <= here + 1e-12);
        prop_assert!(value(tau, [eta_high + step, eta_low], eps) <= here + 1e-12);
        prop_assert!(value([tau[0] + step, tau[1]], eta, eps) >= here - 1e-12);
    }
}
