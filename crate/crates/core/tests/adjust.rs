use std::collections::BTreeMap;

use fan_core::adjust::{consistency_rate, prediction_adjustment, AdjustOptions, AssignmentOrder};
use fan_core::cells::{build_cells, counts_from_decisions, CellKey, CellTable, Decision, DecisionVector};
use fan_core::data::{Dataset, Sample};
use fan_core::solver::{brute_force_solve, verify_counts, BruteForceOptions, ConstraintSpec, Fairness};
use fan_core::Label;
use proptest::prelude::*;

struct Instance {
    dataset: Dataset,
    preds: Vec<Label>,
    scores: Vec<f64>,
    table: CellTable,
}

fn instance(rows: &[(usize, Label, Label, f64)]) -> Instance {
    let samples = rows
        .iter()
        .enumerate()
        .map(|(i, &(group, label, _, _))| Sample {
            features: vec![i as f64],
            group,
            label,
        })
        .collect();
    let dataset = Dataset::with_groups(samples, 2).unwrap();
    let preds: Vec<Label> = rows.iter().map(|r| r.2).collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let table = build_cells(&dataset, &preds, &scores).unwrap();
    Instance {
        dataset,
        preds,
        scores,
        table,
    }
}

/// Reference adjustment: per cell, rank members by (score, index) and hand
/// out roles in the requested order.
fn reference(decisions: &[Decision], inst: &Instance, order: AssignmentOrder) -> Vec<Decision> {
    let mut cells: BTreeMap<(usize, Label, Label), Vec<usize>> = BTreeMap::new();
    for (i, s) in inst.dataset.samples().iter().enumerate() {
        cells.entry((s.group, s.label, inst.preds[i])).or_default().push(i);
    }
    let mut out = decisions.to_vec();
    for members in cells.values() {
        let abstain = members.iter().filter(|&&i| !decisions[i].omega).count();
        let flip = members.iter().filter(|&&i| decisions[i] == Decision::FLIP).count();
        let keep = members.len() - abstain - flip;
        let mut ranked = members.clone();
        ranked.sort_by(|&a, &b| inst.scores[a].partial_cmp(&inst.scores[b]).unwrap().then(a.cmp(&b)));
        let roles = match order {
            AssignmentOrder::AbstainFlipKeep => [
                (Decision::ABSTAIN, abstain),
                (Decision::FLIP, flip),
                (Decision::KEEP, keep),
            ],
            AssignmentOrder::AbstainKeepFlip => [
                (Decision::ABSTAIN, abstain),
                (Decision::KEEP, keep),
                (Decision::FLIP, flip),
            ],
        };
        let mut it = ranked.into_iter();
        for (role, n) in roles {
            for i in it.by_ref().take(n) {
                out[i] = role;
            }
        }
    }
    out
}

fn adjust(decisions: &[Decision], inst: &Instance, options: &AdjustOptions) -> Vec<Decision> {
    let dv = DecisionVector {
        decisions: decisions.to_vec(),
    };
    prediction_adjustment(&dv, &inst.table, &inst.scores, options)
        .unwrap()
        .decisions
}

#[test]
fn lowest_confidence_sample_takes_the_abstention() {
    let inst = instance(&[(0, 1, 1, 0.2), (0, 1, 1, 0.5), (0, 1, 1, 0.8), (1, 0, 0, 0.1)]);
    let input = [Decision::KEEP, Decision::KEEP, Decision::ABSTAIN, Decision::KEEP];
    let out = adjust(&input, &inst, &AdjustOptions::default());
    assert_eq!(out, [Decision::ABSTAIN, Decision::KEEP, Decision::KEEP, Decision::KEEP]);
}

#[test]
fn assignment_orders_differ_only_in_flip_placement() {
    let inst = instance(&[(0, 0, 1, 0.6), (0, 0, 1, 0.7), (0, 0, 1, 0.9), (1, 1, 1, 0.9)]);
    let input = [Decision::FLIP, Decision::KEEP, Decision::ABSTAIN, Decision::KEEP];
    let prose = adjust(&input, &inst, &AdjustOptions::default());
    assert_eq!(&prose[..3], [Decision::ABSTAIN, Decision::FLIP, Decision::KEEP]);
    let literal = AdjustOptions {
        order: AssignmentOrder::AbstainKeepFlip,
        ..AdjustOptions::default()
    };
    assert_eq!(
        &adjust(&input, &inst, &literal)[..3],
        [Decision::ABSTAIN, Decision::KEEP, Decision::FLIP]
    );
}

#[test]
fn abstained_flips_cleared_unless_preserved() {
    let inst = instance(&[(0, 1, 0, 0.1), (0, 1, 0, 0.2), (1, 1, 0, 0.3)]);
    let input = [
        Decision::KEEP,
        Decision {
            omega: false,
            flip: true,
        },
        Decision::KEEP,
    ];
    let cleared = adjust(&input, &inst, &AdjustOptions::default());
    assert_eq!(cleared[0], Decision::ABSTAIN);
    let kept = adjust(
        &input,
        &inst,
        &AdjustOptions {
            preserve_abstained_flips: true,
            ..AdjustOptions::default()
        },
    );
    assert_eq!(
        kept[0],
        Decision {
            omega: false,
            flip: true
        }
    );
}

#[test]
fn rejects_misaligned_or_nan_scores() {
    let inst = instance(&[(0, 1, 1, 0.2), (1, 0, 0, 0.4)]);
    let dv = DecisionVector {
        decisions: vec![Decision::KEEP; 2],
    };
    let options = AdjustOptions::default();
    assert!(prediction_adjustment(&dv, &inst.table, &[0.1], &options).is_err());
    assert!(prediction_adjustment(&dv, &inst.table, &[0.1, f64::NAN], &options).is_err());
}

#[test]
fn permuted_optima_collapse_to_one_canonical_output() {
    let rows: Vec<(usize, Label, Label, f64)> = (0..10)
        .map(|i| (i % 2, u8::from(i % 3 == 0), u8::from(i % 4 < 2), 0.05 + 0.09 * i as f64))
        .collect();
    let inst = instance(&rows);
    let keys: Vec<CellKey> = rows.iter().map(|&(z, y, b, _)| CellKey::new(z, y, b)).collect();
    let spec = ConstraintSpec::uniform(Fairness::Dp, 0.0, 0.4, 0.0, 2);
    let options = BruteForceOptions {
        max_optima: 64,
        ..BruteForceOptions::default()
    };
    let result = brute_force_solve(&keys, 2, &spec, &options).unwrap();
    let mut canonical: BTreeMap<String, Vec<Decision>> = BTreeMap::new();
    let mut collapsed = 0;
    for optimum in &result.optima {
        let counts = counts_from_decisions(optimum, &inst.table).unwrap();
        let out = adjust(&optimum.decisions, &inst, &AdjustOptions::default());
        match canonical.get(&format!("{counts:?}")) {
            Some(previous) => {
                assert_eq!(previous, &out);
                collapsed += 1;
            }
            None => {
                canonical.insert(format!("{counts:?}"), out);
            }
        }
    }
    assert!(collapsed > 0, "no two optima shared cell counts");
}

#[test]
fn consistency_rate_examples() {
    let samples = vec![
        Sample {
            features: vec![1.0],
            group: 0,
            label: 1,
        },
        Sample {
            features: vec![1.0],
            group: 0,
            label: 1,
        },
        Sample {
            features: vec![2.0],
            group: 0,
            label: 0,
        },
        Sample {
            features: vec![2.0],
            group: 1,
            label: 0,
        },
    ];
    let dataset = Dataset::new(samples, 2).unwrap();
    let agree = DecisionVector {
        decisions: vec![Decision::KEEP, Decision::KEEP, Decision::ABSTAIN, Decision::KEEP],
    };
    assert_eq!(consistency_rate(&agree, &dataset).unwrap(), 1.0);
    let split = DecisionVector {
        decisions: vec![Decision::KEEP, Decision::FLIP, Decision::KEEP, Decision::KEEP],
    };
    assert_eq!(consistency_rate(&split, &dataset).unwrap(), 0.0);

    let distinct = Dataset::new(
        (0..4)
            .map(|i| Sample {
                features: vec![i as f64],
                group: i % 2,
                label: 0,
            })
            .collect(),
        2,
    )
    .unwrap();
    assert_eq!(consistency_rate(&split, &distinct).unwrap(), 1.0);
    assert!(consistency_rate(&DecisionVector { decisions: vec![] }, &distinct).is_err());
}

fn rows_strategy() -> impl Strategy<Value = Vec<(usize, Label, Label, f64)>> {
    prop::collection::vec(
        (0usize..2, 0u8..2, 0u8..2, (0u32..20).prop_map(|k| f64::from(k) / 20.0)),
        1..40,
    )
}

fn decision_strategy() -> impl Strategy<Value = Decision> {
    prop_oneof![Just(Decision::ABSTAIN), Just(Decision::KEEP), Just(Decision::FLIP)]
}

proptest! {
    #[test]
    fn matches_reference_and_preserves_counts(
        (rows, decisions) in rows_strategy().prop_flat_map(|rows| {
            let n = rows.len();
            (Just(rows), prop::collection::vec(decision_strategy(), n))
        }),
        literal in any::<bool>(),
    ) {
        let inst = instance(&rows);
        let order = if literal { AssignmentOrder::AbstainKeepFlip } else { AssignmentOrder::AbstainFlipKeep };
        let options = AdjustOptions { order, ..AdjustOptions::default() };
        let out = adjust(&decisions, &inst, &options);
        prop_assert_eq!(&out, &reference(&decisions, &inst, order));

        let before = counts_from_decisions(&DecisionVector { decisions: decisions.clone() }, &inst.table).unwrap();
        let after = counts_from_decisions(&DecisionVector { decisions: out.clone() }, &inst.table).unwrap();
        prop_assert_eq!(before, after);
        prop_assert_eq!(adjust(&out, &inst, &options), out);
    }

    #[test]
    fn constraints_survive_adjustment(
        (rows, decisions) in rows_strategy().prop_flat_map(|rows| {
            let n = rows.len();
            (Just(rows), prop::collection::vec(decision_strategy(), n))
        }),
    ) {
        let inst = instance(&rows);
        prop_assume!((0..2).all(|z| inst.table.group_size(z) > 0));
        let spec = ConstraintSpec::uniform(Fairness::Dp, 0.2, 0.5, 0.5, 2);
        let dv = DecisionVector { decisions };
        let before = verify_counts(&counts_from_decisions(&dv, &inst.table).unwrap(), &inst.table, &spec).unwrap();
        let out = prediction_adjustment(&dv, &inst.table, &inst.scores, &AdjustOptions::default()).unwrap();
        let after = verify_counts(&counts_from_decisions(&out, &inst.table).unwrap(), &inst.table, &spec).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn roles_are_score_ordered_within_cells(
        (rows, decisions) in rows_strategy().prop_flat_map(|rows| {
            let n = rows.len();
            (Just(rows), prop::collection::vec(decision_strategy(), n))
        }),
    ) {
        let inst = instance(&rows);
        let out = adjust(&decisions, &inst, &AdjustOptions::default());
        let rank = |d: Decision| if !d.omega { 0 } else if d.flip { 1 } else { 2 };
        for c in 0..inst.table.n_cells() {
            let roles: Vec<u8> = inst.table.members(c).iter().map(|&i| rank(out[i])).collect();
            prop_assert!(roles.windows(2).all(|w| w[0] <= w[1]), "{:?}", roles);
        }
    }
}
