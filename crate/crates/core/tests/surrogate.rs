use fan_core::adjust::{prediction_adjustment, AdjustOptions};
use fan_core::baseline::{predicted_labels, score, train_baseline, BaselineModel};
use fan_core::cells::{build_cells, decisions_from_counts, Decision, DecisionVector};
use fan_core::data::{gen_synthetic, Dataset, Sample, SyntheticConfig};
use fan_core::mlp::{Dense, Mlp, MlpConfig};
use fan_core::solver::{solve, ConstraintSpec, Fairness};
use fan_core::surrogate::{
    curve_summary, fan_predict, surrogate_input, train_ab, train_fan, train_fb, train_surrogate, FanModel, FanOutput,
    FlipTrainingSet, SurrogateModel, SurrogateNet, SurrogateOptions, FAN_MANIFEST,
};
use fan_core::Label;

/// Baseline on one feature with score `sigmoid(10 x)`.
fn steep_baseline() -> BaselineModel {
    BaselineModel {
        net: Mlp {
            input_dim: 1,
            layers: vec![Dense {
                rows: 1,
                cols: 1,
                weights: vec![10.0],
                bias: vec![0.0],
            }],
        },
        threshold: 0.5,
        config: MlpConfig::default(),
        train_accuracy: 1.0,
        loss_curve: Vec::new(),
    }
}

fn constant(label: Label) -> SurrogateModel {
    SurrogateModel {
        net: SurrogateNet::Constant { label },
        input_dim: 2,
        config: MlpConfig::default(),
        class_weighted: false,
        train_accuracy: 1.0,
        loss_curve: Vec::new(),
    }
}

fn small_config(seed: u64) -> MlpConfig {
    MlpConfig {
        hidden_dims: vec![16],
        dropout_prob: 0.0,
        epochs: 60,
        batch_size: 16,
        seed,
        ..MlpConfig::default()
    }
}

fn line(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| Sample {
            features: vec![i as f64 / n as f64 * 2.0 - 1.0],
            group: i % 2,
            label: u8::from(i >= n / 2),
        })
        .collect();
    Dataset::new(samples, 2).unwrap()
}

#[test]
fn composition_precedence() {
    let fan = |ab, fb| FanModel {
        baseline: steep_baseline(),
        ab: constant(ab),
        fb: constant(fb),
    };
    assert_eq!(fan_predict(&fan(0, 1), &[0.7]), FanOutput::Abstain);
    assert_eq!(fan_predict(&fan(0, 0), &[-0.7]), FanOutput::Abstain);
    assert_eq!(fan_predict(&fan(1, 1), &[0.7]), FanOutput::Predict(0));
    assert_eq!(fan_predict(&fan(1, 1), &[-0.7]), FanOutput::Predict(1));
    assert_eq!(fan_predict(&fan(1, 0), &[0.7]), FanOutput::Predict(1));
    assert_eq!(fan_predict(&fan(1, 0), &[-0.7]), FanOutput::Predict(0));
    // the baseline threshold is inclusive
    assert_eq!(fan_predict(&fan(1, 0), &[0.0]), FanOutput::Predict(1));
}

#[test]
fn surrogate_input_appends_the_score() {
    assert_eq!(surrogate_input(&[1.0, 2.0], 0.25), vec![1.0, 2.0, 0.25]);
}

#[test]
fn single_class_targets_give_constant_models() {
    let data = line(20);
    let scores = vec![0.5; 20];
    let keep_all = DecisionVector {
        decisions: vec![Decision::KEEP; 20],
    };
    let options = SurrogateOptions::default();
    let ab = train_ab(&data, &scores, &keep_all, &small_config(0), &options).unwrap();
    assert_eq!(ab.net, SurrogateNet::Constant { label: 1 });
    assert_eq!(ab.train_accuracy, 1.0);
    assert_eq!(ab.input_dim, 2);
    let fb = train_fb(&data, &scores, &keep_all, &small_config(0), &options).unwrap();
    assert_eq!(fb.net, SurrogateNet::Constant { label: 0 });
    assert!(fb.training_curve().is_empty());
}

#[test]
fn flip_block_training_set_selection() {
    let data = line(8);
    let scores: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
    // abstained samples carry f = 1, non-abstained ones f = 0
    let decisions = DecisionVector {
        decisions: (0..8)
            .map(|i| {
                if i < 2 {
                    Decision {
                        omega: false,
                        flip: true,
                    }
                } else {
                    Decision::KEEP
                }
            })
            .collect(),
    };
    let non_abstained = train_fb(
        &data,
        &scores,
        &decisions,
        &small_config(0),
        &SurrogateOptions::default(),
    )
    .unwrap();
    assert_eq!(non_abstained.net, SurrogateNet::Constant { label: 0 });
    let all = SurrogateOptions {
        flip_training_set: FlipTrainingSet::AllSamples,
        ..SurrogateOptions::default()
    };
    let trained = train_fb(&data, &scores, &decisions, &small_config(0), &all).unwrap();
    assert!(matches!(trained.net, SurrogateNet::Mlp { .. }));
}

#[test]
fn separable_flips_are_learned() {
    let data = line(200);
    let scores: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| 1.0 / (1.0 + (-3.0 * s.features[0]).exp()))
        .collect();
    let decisions = DecisionVector {
        decisions: scores
            .iter()
            .map(|&s| if s < 0.3 { Decision::FLIP } else { Decision::KEEP })
            .collect(),
    };
    let fb = train_fb(
        &data,
        &scores,
        &decisions,
        &small_config(1),
        &SurrogateOptions::default(),
    )
    .unwrap();
    assert!(fb.train_accuracy >= 0.85, "accuracy {}", fb.train_accuracy);
    let curve = fb.training_curve();
    assert_eq!(curve.len(), 60);
    assert!(curve.iter().all(|l| l.is_finite()));
    assert!(curve.last().unwrap() <= curve.first().unwrap());
}

#[test]
fn mismatched_lengths_are_rejected() {
    let data = line(4);
    let decisions = DecisionVector {
        decisions: vec![Decision::KEEP; 3],
    };
    assert!(train_ab(
        &data,
        &[0.1; 4],
        &decisions,
        &small_config(0),
        &SurrogateOptions::default()
    )
    .is_err());
    assert!(train_surrogate(&[vec![0.0, 1.0]], &[0, 1], &small_config(0), true).is_err());
}

#[test]
fn curve_summary_mean_and_std() {
    let summary = curve_summary(&[vec![1.0, 2.0, 9.0], vec![3.0, 2.0]]);
    assert_eq!(summary.len(), 2);
    assert!((summary[0].0 - 2.0).abs() < 1e-12 && (summary[0].1 - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(summary[1], (2.0, 0.0));
    assert!(curve_summary(&[]).is_empty());

    let data = line(40);
    let scores = vec![0.5; 40];
    let decisions = DecisionVector {
        decisions: (0..40)
            .map(|i| if i % 5 == 0 { Decision::ABSTAIN } else { Decision::KEEP })
            .collect(),
    };
    let curves: Vec<Vec<f64>> = (0..5)
        .map(|seed| {
            train_ab(
                &data,
                &scores,
                &decisions,
                &small_config(seed),
                &SurrogateOptions::default(),
            )
            .unwrap()
            .loss_curve
        })
        .collect();
    let summary = curve_summary(&curves);
    assert_eq!(summary.len(), 60);
    assert!(summary.iter().all(|(m, s)| m.is_finite() && *s >= 0.0));
}

#[test]
fn desk_scale_distillation() {
    let data = gen_synthetic(&SyntheticConfig::new(7, vec![1000, 1000], vec![0.7, 0.4])).unwrap();
    let config = MlpConfig {
        hidden_dims: vec![32, 32],
        epochs: 30,
        dropout_prob: 0.0,
        ..MlpConfig::default()
    };
    let baseline = train_baseline(&data, &config, 0.5).unwrap();
    let scores = score(&baseline, &data).unwrap();
    let preds = predicted_labels(&scores, 0.5).unwrap();
    let table = build_cells(&data, &preds, &scores).unwrap();
    let spec = ConstraintSpec::uniform(Fairness::Dp, 0.1, 0.1, 0.0, 2);
    let solution = solve(&table, &spec).unwrap();
    let decisions = decisions_from_counts(solution.counts.as_ref().unwrap(), &table).unwrap();
    let pa = prediction_adjustment(&decisions, &table, &scores, &AdjustOptions::default()).unwrap();
    assert!(pa.decisions.iter().any(|d| !d.omega), "the instance should abstain");

    // within every cell the abstentions are a prefix in score order
    for c in 0..table.n_cells() {
        let omega: Vec<bool> = table.members(c).iter().map(|&i| pa.decisions[i].omega).collect();
        assert!(omega.windows(2).all(|w| w[0] <= w[1]));
    }

    let fan = train_fan(
        baseline,
        &data,
        &scores,
        &pa,
        &config,
        &config,
        &SurrogateOptions::default(),
    )
    .unwrap();
    assert!(fan.ab.train_accuracy >= 0.85, "AB accuracy {}", fan.ab.train_accuracy);
    let outputs = fan.predict_dataset(&data);
    let agree = outputs
        .iter()
        .zip(&pa.decisions)
        .zip(&preds)
        .filter(|((o, d), &p)| o.label() == d.output(p))
        .count();
    let fidelity = agree as f64 / data.len() as f64;
    assert!(fidelity >= 0.80, "fidelity {fidelity}");

    let dir = tempfile::tempdir().unwrap();
    fan.save(dir.path()).unwrap();
    let loaded = FanModel::load(dir.path()).unwrap();
    assert_eq!(loaded, fan);
    assert_eq!(loaded.predict_dataset(&data), outputs);

    let manifest_path = dir.path().join(FAN_MANIFEST);
    let manifest = std::fs::read_to_string(&manifest_path).unwrap();
    assert!(manifest.contains("config_hashes"));
    std::fs::write(
        &manifest_path,
        manifest.replace("\"threshold\": 0.5", "\"threshold\": 0.6"),
    )
    .unwrap();
    assert!(FanModel::load(dir.path()).is_err());
}
