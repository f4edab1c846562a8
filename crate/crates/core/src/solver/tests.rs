use proptest::prelude::*;

use super::*;
use crate::cells::CellKey;

fn table(sizes: &[usize]) -> CellTable {
    CellTable::from_sizes(sizes).unwrap()
}

fn keys_of(t: &CellTable) -> Vec<CellKey> {
    let mut keys = vec![CellKey::new(0, 0, 0); t.n_samples()];
    for c in 0..t.n_cells() {
        for &i in t.members(c) {
            keys[i] = CellKey::from_index(c);
        }
    }
    keys
}

#[test]
fn zero_abstention_equalized_odds_flips_every_mistake() {
    let t = table(&[5, 2, 3, 6, 4, 4, 1, 2]);
    let spec = ConstraintSpec::uniform(Fairness::Eod, 0.0, 0.0, 0.0, 2);
    let s = solve(&t, &spec).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert_eq!(s.objective, Some(0));
    assert!(verify_solution(&s, &t, &spec).unwrap().is_empty());
}

#[test]
fn perfect_baseline_keeps_everything() {
    let t = table(&[4, 0, 0, 3, 2, 0, 0, 5]);
    for fairness in Fairness::ALL {
        let spec = ConstraintSpec::uniform(fairness, 1.0, 0.5, 0.0, 2);
        let s = solve(&t, &spec).unwrap();
        assert_eq!(s.objective, Some(0));
    }
}

#[test]
fn infeasible_dp_reports_relaxable_families() {
    // acceptance 1.0 vs 0.0: flipping costs errors, abstaining costs budget
    let t = table(&[0, 0, 0, 4, 4, 0, 0, 0]);
    let spec = ConstraintSpec::uniform(Fairness::Dp, 0.0, 0.0, 0.0, 2);
    let s = solve(&t, &spec).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.counts.is_none());
    assert!(s.relaxable_families.contains(&Family::Disparity));
    assert!(s.relaxable_families.contains(&Family::NoHarm));
    assert!(s.relaxable_families.contains(&Family::Abstention));
    assert!(!s.relaxable_families.contains(&Family::EqualAbstention));
}

#[test]
fn empty_stratum_is_rejected() {
    let t = table(&[3, 1, 0, 0, 2, 1, 1, 2]);
    let spec = ConstraintSpec::uniform(Fairness::Eop, 0.1, 0.1, 0.0, 2);
    assert!(matches!(solve(&t, &spec), Err(FanError::Domain(_))));
}

#[test]
fn solution_round_trips_through_json() {
    let t = table(&[5, 2, 3, 6, 4, 4, 1, 2]);
    let spec = ConstraintSpec::uniform(Fairness::Dp, 0.05, 0.2, 0.0, 2);
    let s = solve(&t, &spec).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<IpSolution>(&text).unwrap(), s);
}

#[test]
fn node_budget_gives_best_effort_with_gap() {
    let t = table(&[40, 13, 17, 30, 25, 21, 9, 45]);
    let spec = ConstraintSpec::uniform(Fairness::Dp, 0.01, 0.07, 0.0, 2);
    let full = solve(&t, &spec).unwrap();
    let options = SolveOptions {
        max_nodes: 1,
        ..SolveOptions::default()
    };
    match solve_with(&t, &spec, &options) {
        Ok(s) if s.status == SolveStatus::FeasibleBestEffort => {
            assert!(s.gap.unwrap() >= 0.0);
            assert!(s.objective >= full.objective);
        }
        Ok(s) => assert_eq!(s.objective, full.objective),
        Err(e) => assert!(matches!(e, FanError::SolverLimit { .. })),
    }
}

#[test]
fn larger_instance_is_verified_exactly() {
    let t = table(&[120, 30, 25, 85, 150, 20, 40, 50]);
    for fairness in Fairness::ALL {
        let mut spec = ConstraintSpec::uniform(fairness, 0.02, 0.1, 0.0, 2);
        spec.sigma = [Some(0.05), Some(0.05)];
        let s = solve(&t, &spec).unwrap();
        if s.status.is_feasible() {
            assert!(verify_solution(&s, &t, &spec).unwrap().is_empty());
        }
    }
}

fn spec_strategy() -> impl Strategy<Value = ConstraintSpec> {
    (
        prop_oneof![Just(Fairness::Dp), Just(Fairness::Eop), Just(Fairness::Eod)],
        0u32..=4,
        (0u32..=5, 0u32..=5),
        (-2i32..=4, -2i32..=4),
        prop::option::of(0u32..=4),
        prop::option::of(prop_oneof![
            Just(NonTrivialityScope::AllSamples),
            Just(NonTrivialityScope::Predicted)
        ]),
    )
        .prop_map(|(fairness, eps, (d0, d1), (e0, e1), sigma, nt)| ConstraintSpec {
            fairness,
            epsilon: eps as f64 * 0.1,
            delta: vec![d0 as f64 * 0.1, d1 as f64 * 0.1],
            eta: vec![e0 as f64 * 0.25, e1 as f64 * 0.25],
            sigma: [None, sigma.map(|s| s as f64 * 0.15)],
            non_triviality: nt.map(|scope| NonTriviality { floors: None, scope }),
        })
}

/// Cell sizes with both labels present in both groups.
fn sizes_strategy(max_cell: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..=max_cell, 8).prop_filter("every stratum populated", |s| {
        (0..2).all(|z| (0..2).all(|y| s[z * 4 + y * 2] + s[z * 4 + y * 2 + 1] > 0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_solver_matches_linearized_and_brute_force(sizes in sizes_strategy(2), spec in spec_strategy()) {
        let t = table(&sizes);
        prop_assume!(t.n_samples() <= 9);
        let keys = keys_of(&t);
        let count = solve(&t, &spec).unwrap();
        let brute = brute_force_solve(&keys, 2, &spec, &BruteForceOptions::default()).unwrap();
        let linear = solve_linearized(&keys, 2, &spec, &SolveOptions::default()).unwrap();
        prop_assert_eq!(count.status, brute.solution.status);
        prop_assert_eq!(count.objective, brute.solution.objective);
        prop_assert_eq!(linear.status, brute.solution.status);
        prop_assert_eq!(linear.objective, brute.solution.objective);
    }

    #[test]
    fn feasible_solutions_verify(sizes in sizes_strategy(12), spec in spec_strategy()) {
        let t = table(&sizes);
        let s = solve(&t, &spec).unwrap();
        if s.status.is_feasible() {
            prop_assert!(verify_solution(&s, &t, &spec).unwrap().is_empty());
            let counts = s.counts.as_ref().unwrap();
            prop_assert_eq!(crate::cells::counts_objective(counts, &t).unwrap(), s.objective.unwrap());
        }
    }

    #[test]
    fn loosening_never_hurts(sizes in sizes_strategy(8), spec in spec_strategy(), which in 0usize..3) {
        let t = table(&sizes);
        let base = solve(&t, &spec).unwrap();
        let mut looser = spec.clone();
        match which {
            0 => looser.epsilon += 0.1,
            1 => looser.delta = looser.delta.iter().map(|d| (d + 0.1f64).min(1.0)).collect(),
            _ => looser.eta = looser.eta.iter().map(|e| e + 0.25).collect(),
        }
        let relaxed = solve(&t, &looser).unwrap();
        if base.status.is_feasible() {
            prop_assert!(relaxed.status.is_feasible());
            prop_assert!(relaxed.objective <= base.objective);
        }
    }
}
