use super::*;
use crate::model::layers::BN_EPS;
use crate::signal::{RhythmClass, Window, WindowSource, WINDOW_LEN};

fn tiny_classifier_config() -> ClassifierConfig {
    ClassifierConfig {
        inception_kernels: [15, 17, 19, 21],
        branch_channels: 2,
        base_channels: 4,
        residual_units: 2,
        residual_kernel: 8,
        pool_strides: vec![6, 6],
        lstm_step: 72,
        lstm_hidden: 8,
        fc_widths: vec![16],
        classes: RhythmClass::COUNT,
        input_len: WINDOW_LEN,
    }
}

fn wave_window(label: RhythmClass, freq: f64, phase: f64) -> Window {
    let samples: Vec<f64> = (0..WINDOW_LEN)
        .map(|i| (i as f64 * freq + phase).sin())
        .collect();
    Window {
        samples,
        label,
        source: WindowSource {
            record: "toy".to_string(),
            center: 0,
        },
    }
}

/// Two classes separable by construction: they differ in both mean level
/// and dominant frequency.
fn toy_dataset(per_class: usize) -> Vec<Window> {
    let mut data = Vec::new();
    for i in 0..per_class {
        data.push(wave_window(RhythmClass::Normal, 0.05, i as f64 * 0.37));
        let mut high = wave_window(RhythmClass::Pvc, 0.45, i as f64 * 0.53);
        high.samples.iter_mut().for_each(|v| *v += 1.2);
        data.push(high);
    }
    data
}

#[test]
fn desk_scale_forward_shapes_and_probs() {
    let model = ClassifierModel::new(ClassifierConfig::desk_scale(), 1).unwrap();
    let window = wave_window(RhythmClass::Normal, 0.1, 0.0);
    let trace = model.forward(&window.samples).unwrap();
    assert_eq!(trace.cnn_features.len(), 160);
    assert_eq!(trace.lstm_features.len(), 40);
    assert_eq!(trace.logits.len(), 8);
    let sum: f64 = trace.probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    assert!(trace.probs.iter().all(|p| *p > 0.0));
}

#[test]
fn forward_is_deterministic() {
    let model = ClassifierModel::new(tiny_classifier_config(), 7).unwrap();
    let window = wave_window(RhythmClass::Afib, 0.2, 1.0);
    let t1 = model.forward(&window.samples).unwrap();
    let t2 = model.forward(&window.samples).unwrap();
    assert_eq!(t1.logits, t2.logits);
    assert_eq!(t1.cnn_features, t2.cnn_features);
    assert_eq!(t1.lstm_features, t2.lstm_features);
}

#[test]
fn wrong_input_length_is_shape_error() {
    let model = ClassifierModel::new(tiny_classifier_config(), 7).unwrap();
    assert!(matches!(
        model.forward(&[0.0; 100]),
        Err(crate::error::Error::Shape { .. })
    ));
}

#[test]
fn camnet_feature_map_length_is_pinned() {
    let model = CamNetModel::new(CamNetConfig::desk_scale(), 3).unwrap();
    let window = wave_window(RhythmClass::Sbr, 0.12, 0.3);
    let trace = model.forward_features(&window.samples).unwrap();
    assert_eq!(trace.feature_map.shape(), &[16, 48]);
    assert_eq!(trace.logits.len(), 8);
}

#[test]
fn gap_then_linear_logits_match_hand_computation() {
    // fabricated feature map with two indicator channels and a known head
    let mut tape = crate::autodiff::Tape::new();
    let mut f = crate::autodiff::Tensor::zeros(vec![2, 48]);
    f.values_mut()[0] = 1.0; // channel 0: single spike
    f.values_mut()[48] = 0.0;
    f.values_mut()[49] = 1.0; // channel 1: spike at position 1
    let fid = tape.constant(f);
    let pooled = tape.gap(fid).unwrap();
    let w = tape.constant(
        crate::autodiff::Tensor::new(vec![2, 2], vec![2.0, 3.0, -1.0, 4.0]).unwrap(),
    );
    let b = tape.constant(crate::autodiff::Tensor::vector(&[0.5, -0.5]));
    let logits = tape.dense(pooled, w, b).unwrap();
    // gap = [1/48, 1/48]; logits = W gap + b
    let expected0 = 2.0 / 48.0 + 3.0 / 48.0 + 0.5;
    let expected1 = -1.0 / 48.0 + 4.0 / 48.0 - 0.5;
    let v = tape.value(logits).values();
    assert!((v[0] - expected0).abs() < 1e-12);
    assert!((v[1] - expected1).abs() < 1e-12);
}

#[test]
fn camnet_logits_decompose_over_the_feature_map() {
    let model = CamNetModel::new(CamNetConfig::desk_scale(), 11).unwrap();
    let window = wave_window(RhythmClass::Lbbb, 0.3, 0.7);
    let trace = model.forward_features(&window.samples).unwrap();
    let k = model.config().feature_channels();
    let len = model.config().feature_len;
    for class in 0..model.config().classes {
        let weights = model.class_weights(class);
        let mut expected = model.class_bias(class);
        for ch in 0..k {
            let channel_sum: f64 = trace.feature_map.values()[ch * len..(ch + 1) * len]
                .iter()
                .sum();
            expected += weights[ch] * channel_sum / len as f64;
        }
        assert!(
            (trace.logits[class] - expected).abs() < 1e-9,
            "class {class}: {} vs {}",
            trace.logits[class],
            expected
        );
    }
}

#[test]
fn zero_weight_head_yields_bias_logits() {
    let mut model = CamNetModel::new(CamNetConfig::desk_scale(), 5).unwrap();
    // zero the head weights, set distinct biases
    let head_w = model
        .params()
        .iter()
        .position(|p| p.name == "head.w")
        .unwrap();
    let head_b = model
        .params()
        .iter()
        .position(|p| p.name == "head.b")
        .unwrap();
    model
        .params_mut()
        .tensor_mut(head_w)
        .values_mut()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    for (i, v) in model
        .params_mut()
        .tensor_mut(head_b)
        .values_mut()
        .iter_mut()
        .enumerate()
    {
        *v = i as f64 * 0.25;
    }
    let window = wave_window(RhythmClass::Pac, 0.2, 0.1);
    let trace = model.forward_features(&window.samples).unwrap();
    for (i, logit) in trace.logits.iter().enumerate() {
        assert!((logit - i as f64 * 0.25).abs() < 1e-12);
    }
}

#[test]
fn training_zero_epochs_leaves_model_unchanged() {
    let mut model = LstmVisModel::new(LstmVisConfig::desk_scale(), 2).unwrap();
    let before = model.params().clone();
    let opts = TrainOptions {
        epochs: 0,
        ..TrainOptions::default()
    };
    let curve = train(&mut model, &toy_dataset(4), &opts, |_, _| TrainControl::Continue).unwrap();
    assert!(curve.is_empty());
    assert_eq!(model.params(), &before);
}

#[test]
fn training_is_seed_deterministic() {
    let data = toy_dataset(6);
    let opts = TrainOptions {
        epochs: 3,
        batch_size: 4,
        seed: 42,
        ..TrainOptions::default()
    };
    let run = |seed| {
        let mut model = LstmVisModel::new(LstmVisConfig::desk_scale(), 9).unwrap();
        let opts = TrainOptions { seed, ..opts.clone() };
        train(&mut model, &data, &opts, |_, _| TrainControl::Continue).unwrap();
        model
            .params()
            .iter()
            .flat_map(|p| p.tensor.values().iter().map(|v| v.to_bits()))
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42), run(43));
}

#[test]
fn separable_toy_reaches_full_training_accuracy() {
    let data = toy_dataset(10);
    let mut model = LstmVisModel::new(LstmVisConfig::desk_scale(), 4).unwrap();
    let opts = TrainOptions {
        epochs: 30,
        batch_size: 4,
        seed: 1,
        ..TrainOptions::default()
    };
    train(&mut model, &data, &opts, |_, _| TrainControl::Continue).unwrap();
    let metrics = evaluate(&model, &data).unwrap();
    assert_eq!(metrics.accuracy, 1.0, "confusion {:?}", metrics.confusion);
}

#[test]
fn loss_halves_within_five_epochs_on_tiny_set() {
    let data = toy_dataset(16);
    let mut model = ClassifierModel::new(tiny_classifier_config(), 3).unwrap();
    let opts = TrainOptions {
        epochs: 5,
        batch_size: 4,
        seed: 5,
        ..TrainOptions::default()
    };
    let curve = train(&mut model, &data, &opts, |_, _| TrainControl::Continue).unwrap();
    assert!(
        curve[4] <= 0.5 * curve[0],
        "loss curve did not halve: {curve:?}"
    );
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let data = toy_dataset(4);
    let mut model = ClassifierModel::new(tiny_classifier_config(), 6).unwrap();
    let opts = TrainOptions {
        lr: 1e300,
        epochs: 5,
        batch_size: 4,
        seed: 2,
        ..TrainOptions::default()
    };
    match train(&mut model, &data, &opts, |_, _| TrainControl::Continue) {
        Err(crate::error::Error::Numeric(msg)) => {
            assert!(msg.contains("epoch"), "{msg}");
        }
        other => panic!("expected numeric failure, got {other:?}"),
    }
}

#[test]
fn early_stop_callback_halts_training() {
    let data = toy_dataset(4);
    let mut model = LstmVisModel::new(LstmVisConfig::desk_scale(), 8).unwrap();
    let opts = TrainOptions {
        epochs: 10,
        batch_size: 4,
        seed: 3,
        ..TrainOptions::default()
    };
    let mut calls = 0;
    let curve = train(&mut model, &data, &opts, |_, report| {
        calls += 1;
        if report.epoch >= 1 {
            TrainControl::Stop
        } else {
            TrainControl::Continue
        }
    })
    .unwrap();
    assert_eq!(curve.len(), 2);
    assert_eq!(calls, 2);
}

#[test]
fn checkpoint_round_trip_preserves_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(4);
    let mut model = ClassifierModel::new(tiny_classifier_config(), 12).unwrap();
    let opts = TrainOptions {
        epochs: 2,
        batch_size: 4,
        seed: 9,
        ..TrainOptions::default()
    };
    train(&mut model, &data, &opts, |_, _| TrainControl::Continue).unwrap();
    let path = dir.path().join("clf.ckpt");
    model.save(&path).unwrap();
    let loaded = ClassifierModel::load(&path).unwrap();
    assert_eq!(loaded.params(), model.params());
    assert_eq!(loaded.bn_running(), model.bn_running());
    let window = &data[0];
    let a = model.forward(&window.samples).unwrap();
    let b = loaded.forward(&window.samples).unwrap();
    assert_eq!(a.logits, b.logits);
    // kind tag is enforced
    assert!(LstmVisModel::load(&path).is_err());
    assert_eq!(checkpoint_kind(&path).unwrap(), "classifier");
}

#[test]
fn bn_eps_is_small() {
    assert!(BN_EPS <= 1e-4);
}

#[test]
fn training_updates_bn_running_statistics() {
    let data = toy_dataset(4);
    let mut model = ClassifierModel::new(tiny_classifier_config(), 13).unwrap();
    let before: Vec<f64> = model.bn_running().iter().flat_map(|s| s.mean.clone()).collect();
    let opts = TrainOptions {
        epochs: 1,
        batch_size: 4,
        seed: 1,
        ..TrainOptions::default()
    };
    train(&mut model, &data, &opts, |_, _| TrainControl::Continue).unwrap();
    let after: Vec<f64> = model.bn_running().iter().flat_map(|s| s.mean.clone()).collect();
    assert_ne!(before, after);
}
