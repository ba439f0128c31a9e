//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see them
//! on success). The trained-model criteria share one fixture: a balanced
//! synthetic dataset (400 train / 100 test per class) plus the three
//! networks trained on it with the published protocol.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ecgviz_core::autodiff::{gradcheck, BnMode, Tape, Tensor};
use ecgviz_core::dataset::{generate_synthetic_dataset, WindowGroundTruth};
use ecgviz_core::model::{
    evaluate, predict, train, CamNetConfig, CamNetModel, ClassifierConfig, ClassifierModel,
    LstmVisConfig, LstmVisModel, Network, TrainControl, TrainOptions,
};
use ecgviz_core::saliency::{
    cam_for_window, compute_cam, optimize_mask, perturb, Convention,
    MaskConfig,
};
use ecgviz_core::signal::{
    balance_classes, decode_format212, encode_annotations, encode_format212, parse_annotations,
    BeatAnnotation, RhythmClass, Window, WINDOW_LEN,
};

const FIXTURE_SEED: u64 = 7;

struct Fixture {
    test_set: Vec<Window>,
    ground_truth: WindowGroundTruth,
    classifier_f1: f64,
    classifier_epochs: usize,
    classifier_secs: f64,
    camnet: CamNetModel,
    lstmvis: LstmVisModel,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(build_fixture)
}

fn build_fixture() -> Fixture {
    let dataset = generate_synthetic_dataset(500, FIXTURE_SEED, 40.0).expect("synthetic data");
    let ground_truth = dataset.ground_truth.clone();
    let pool = dataset.windows().expect("windows").windows;
    let (train_set, test_set) =
        balance_classes(pool, 400, FIXTURE_SEED).expect("balanced split");
    assert_eq!(train_set.len(), 3200);
    assert_eq!(test_set.len(), 800);

    let protocol = TrainOptions {
        seed: FIXTURE_SEED,
        ..TrainOptions::default()
    };

    // classifier: stop as soon as the target macro F1 is reached
    let start = Instant::now();
    let mut classifier =
        ClassifierModel::new(ClassifierConfig::desk_scale(), FIXTURE_SEED).expect("classifier");
    let mut classifier_f1 = 0.0;
    let mut classifier_epochs = 0;
    train(&mut classifier, &train_set, &protocol, |model, report| {
        classifier_epochs = report.epoch + 1;
        let metrics = evaluate(model, &test_set).expect("evaluation");
        classifier_f1 = metrics.macro_f1.unwrap_or(0.0);
        eprintln!(
            "fixture: classifier epoch {} loss {:.4} macro-F1 {:.4}",
            report.epoch, report.mean_loss, classifier_f1
        );
        if classifier_f1 >= 0.90 {
            TrainControl::Stop
        } else {
            TrainControl::Continue
        }
    })
    .expect("classifier training");
    let classifier_secs = start.elapsed().as_secs_f64();

    let mut camnet = CamNetModel::new(CamNetConfig::desk_scale(), FIXTURE_SEED).expect("camnet");
    train(&mut camnet, &train_set, &protocol, |model, report| {
        let metrics = evaluate(model, &test_set).expect("evaluation");
        let f1 = metrics.macro_f1.unwrap_or(0.0);
        eprintln!(
            "fixture: camnet epoch {} loss {:.4} macro-F1 {:.4}",
            report.epoch, report.mean_loss, f1
        );
        if f1 >= 0.90 {
            TrainControl::Stop
        } else {
            TrainControl::Continue
        }
    })
    .expect("camnet training");

    let mut lstmvis =
        LstmVisModel::new(LstmVisConfig::desk_scale(), FIXTURE_SEED).expect("lstmvis");
    train(&mut lstmvis, &train_set, &protocol, |model, report| {
        if report.epoch % 5 == 4 {
            let metrics = evaluate(model, &test_set).expect("evaluation");
            eprintln!(
                "fixture: lstmvis epoch {} loss {:.4} macro-F1 {:.4}",
                report.epoch,
                report.mean_loss,
                metrics.macro_f1.unwrap_or(0.0)
            );
        }
        TrainControl::Continue
    })
    .expect("lstmvis training");

    Fixture {
        test_set,
        ground_truth,
        classifier_f1,
        classifier_epochs,
        classifier_secs,
        camnet,
        lstmvis,
    }
}

/// Correctly classified test windows of `class` (all classes when `None`),
/// highest confidence first.
fn correct_windows(
    net: &(impl Network + Sync),
    test_set: &[Window],
    class: Option<RhythmClass>,
) -> Vec<(usize, f64)> {
    let mut picks: Vec<(usize, f64)> = test_set
        .iter()
        .enumerate()
        .filter(|(_, w)| class.map_or(true, |c| w.label == c))
        .filter_map(|(i, w)| {
            let (pred, probs) = predict(net, &w.samples).expect("prediction");
            (pred == w.label.index()).then_some((i, probs[pred]))
        })
        .collect();
    picks.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    picks
}

#[test]
fn criterion_gradient_integrity() {
    let start = Instant::now();
    // per-op finite differences, 10 seeded random instances each
    for op in gradcheck::CHECKED_OPS {
        for seed in 0..10 {
            let err = gradcheck::per_op_gradient_error(op, 9000 + seed);
            assert!(err < 1e-6, "{op} seed {seed}: gradient error {err}");
        }
    }

    // composed graphs: finite differences on sampled coordinates
    let small_classifier = ClassifierConfig {
        inception_kernels: [15, 17, 19, 21],
        branch_channels: 2,
        base_channels: 4,
        residual_units: 2,
        residual_kernel: 8,
        pool_strides: vec![6, 6],
        lstm_step: 72,
        lstm_hidden: 6,
        fc_widths: vec![12],
        classes: 8,
        input_len: WINDOW_LEN,
    };
    let classifier = ClassifierModel::new(small_classifier, 3).unwrap();
    let worst_c = composed_gradient_error(&classifier, 40, 99);
    assert!(worst_c < 1e-4, "classifier graph gradient error {worst_c}");

    let small_camnet = CamNetConfig {
        base_channels: 4,
        residual_units: 2,
        residual_kernel: 8,
        pool_strides: vec![5, 3],
        classes: 8,
        input_len: WINDOW_LEN,
        feature_len: 48,
    };
    let camnet = CamNetModel::new(small_camnet, 4).unwrap();
    let worst_m = composed_gradient_error(&camnet, 40, 101);
    assert!(worst_m < 1e-4, "camnet graph gradient error {worst_m}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "gradient suite took {elapsed:.1}s");
    println!(
        "PASS gradient integrity: per-op < 1e-6 over {} ops x 10 instances, composed errors {worst_c:.2e} / {worst_m:.2e}, {elapsed:.1}s",
        gradcheck::CHECKED_OPS.len()
    );
}

/// Central finite differences on `coords` random parameter coordinates
/// (plus 10 input coordinates) of a composed network graph. Parameter
/// probes run on perturbed clones of the model.
fn composed_gradient_error<N: Network + Clone>(net: &N, coords: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let label = 3usize;

    let loss_for = |net: &N, x: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let xid = tape.leaf(Tensor::vector(x), false);
        let graph = net.build_logits(&mut tape, xid, BnMode::Train, false).unwrap();
        let loss = tape.softmax_cross_entropy(graph.logits, label).unwrap();
        tape.value(loss).item()
    };

    // analytic gradients in one backward pass
    let mut tape = Tape::new();
    let xid = tape.leaf(Tensor::vector(&x), true);
    let graph = net.build_logits(&mut tape, xid, BnMode::Train, true).unwrap();
    let loss = tape.softmax_cross_entropy(graph.logits, label).unwrap();
    tape.backward(loss).unwrap();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, numeric: f64| {
        let denom = analytic.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic - numeric).abs() / denom);
    };

    for _ in 0..coords {
        let p = rng.gen_range(0..net.params().len());
        let j = rng.gen_range(0..net.params().tensor(p).numel());
        let analytic = tape.grad(graph.param_nodes[p]).map_or(0.0, |g| g[j]);
        let probe = |delta: f64| -> f64 {
            let mut perturbed = net.clone();
            perturbed.params_mut().tensor_mut(p).values_mut()[j] += delta;
            loss_for(&perturbed, &x)
        };
        let numeric = (probe(eps) - probe(-eps)) / (2.0 * eps);
        check(analytic, numeric);
    }

    // input coordinates through the same graph
    let input_grad = tape.grad(xid).map(|g| g.to_vec()).unwrap_or_default();
    let mut x_probe = x.clone();
    for _ in 0..10 {
        let j = rng.gen_range(0..x.len());
        let original = x_probe[j];
        x_probe[j] = original + eps;
        let up = loss_for(net, &x_probe);
        x_probe[j] = original - eps;
        let down = loss_for(net, &x_probe);
        x_probe[j] = original;
        check(input_grad[j], (up - down) / (2.0 * eps));
    }
    worst
}

#[test]
fn criterion_parser_fidelity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let values: Vec<i32> = (0..10_000).map(|_| rng.gen_range(-2048..=2047)).collect();
    let bytes = encode_format212(&values).unwrap();
    let decoded = decode_format212(&bytes, values.len()).unwrap();
    assert_eq!(decoded, values, "format-212 round trip is not bit-exact");

    // annotation cumulative-index property on generated fixtures
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut index = 0usize;
        let annotations: Vec<BeatAnnotation> = (0..200)
            .map(|_| {
                index += rng.gen_range(1..5000);
                BeatAnnotation {
                    sample_index: index,
                    label: RhythmClass::ALL[rng.gen_range(0..8)],
                }
            })
            .collect();
        let stream = encode_annotations(&annotations).unwrap();
        let parsed = parse_annotations(&stream).unwrap();
        assert_eq!(parsed.annotations, annotations);
        assert_eq!(
            parsed.annotations.last().unwrap().sample_index,
            index,
            "cumulative interval sum mismatch"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "parser suite took {elapsed:.1}s");
    println!("PASS parser fidelity: 10^4-sample 212 round trip bit-exact, cumulative annotation sums hold, {elapsed:.2}s");
}

#[test]
fn criterion_interface_conformance() {
    let start = Instant::now();
    let classifier =
        ClassifierModel::new(ClassifierConfig::paper_scale(), 1).expect("paper-scale classifier");
    let window: Vec<f64> = (0..WINDOW_LEN).map(|i| (i as f64 * 0.017).sin()).collect();
    let trace = classifier.forward(&window).expect("forward");
    assert_eq!(trace.cnn_features.len(), 640, "|z1|");
    assert_eq!(trace.lstm_features.len(), 40, "|z2|");
    assert_eq!(trace.cnn_features.len() + trace.lstm_features.len(), 680);
    assert_eq!(trace.logits.len(), 8);

    let camnet = CamNetModel::new(CamNetConfig::paper_scale(), 1).expect("paper-scale camnet");
    let cam_trace = camnet.forward_features(&window).expect("camnet forward");
    assert_eq!(cam_trace.feature_map.shape()[1], 48, "CAM spatial length");
    let cam = cam_for_window(&camnet, &window, RhythmClass::Normal).expect("cam");
    assert_eq!(cam.raw.len(), 48);
    assert_eq!(cam.upsampled.len(), 720);
    assert_eq!(cam.overlay.len(), 720);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "interface suite took {elapsed:.1}s");
    println!("PASS interface conformance: z1 640, z2 40, concat 680, logits 8, CAM 48 -> 720, {elapsed:.1}s");
}

#[test]
fn criterion_cam_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let k = rng.gen_range(1..=8);
        let len = 48;
        let f = Tensor::rand_uniform(vec![k, len], -2.0, 2.0, &mut rng);
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let fast = compute_cam(&f, &w).unwrap();
        // brute-force double loop, independent of the implementation
        for x in 0..len {
            let mut acc = 0.0;
            for ch in 0..k {
                acc += w[ch] * f.values()[ch * len + x];
            }
            assert_eq!(fast[x], acc, "case {case}, position {x}");
        }
    }
    println!("PASS CAM weighted-sum oracle: 100 random instances, exact equality");
}

#[test]
fn criterion_desk_scale_learning() {
    let fx = fixture();
    assert!(
        fx.classifier_f1 >= 0.90,
        "macro F1 {} below 0.90 after {} epochs",
        fx.classifier_f1,
        fx.classifier_epochs
    );
    assert!(fx.classifier_epochs <= 30);
    assert!(
        fx.classifier_secs <= 900.0,
        "training took {:.0}s",
        fx.classifier_secs
    );
    println!(
        "PASS desk-scale learning: macro F1 {:.4} after {} epochs in {:.0}s",
        fx.classifier_f1, fx.classifier_epochs, fx.classifier_secs
    );
}

#[test]
fn criterion_cam_localization() {
    let fx = fixture();
    let picks = correct_windows(&fx.camnet, &fx.test_set, Some(RhythmClass::Pvc));
    assert!(
        picks.len() >= 50,
        "only {} correctly classified PVC test windows",
        picks.len()
    );
    let decile = WINDOW_LEN / 10;
    let mut fractions = Vec::new();
    for (idx, _) in &picks {
        let window = &fx.test_set[*idx];
        let gt = fx
            .ground_truth
            .get(&window.source.id())
            .expect("PVC windows carry ground truth");
        let cam = cam_for_window(&fx.camnet, &window.samples, RhythmClass::Pvc).unwrap();
        let mut order: Vec<usize> = (0..WINDOW_LEN).collect();
        order.sort_by(|a, b| cam.overlay[*b].partial_cmp(&cam.overlay[*a]).unwrap());
        let top = &order[..decile];
        let total: f64 = top.iter().map(|t| cam.overlay[*t]).sum();
        let inside: f64 = top
            .iter()
            .filter(|t| gt.iter().any(|(s, e)| (*s..*e).contains(t)))
            .map(|t| cam.overlay[*t])
            .sum();
        fractions.push(if total > 0.0 { inside / total } else { 0.0 });
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!(
        mean >= 0.5,
        "top-decile overlay mass inside ground truth averaged {mean:.3} over {} windows",
        fractions.len()
    );
    println!(
        "PASS CAM localization: mean in-truth top-decile mass {:.3} over {} PVC windows",
        mean,
        fractions.len()
    );
}

#[test]
fn criterion_mask_behavior() {
    let fx = fixture();
    // 100 correctly classified windows, highest confidence first, spread
    // over the classes (12-13 each)
    let mut picks: Vec<usize> = Vec::new();
    for class in RhythmClass::ALL {
        let per_class = correct_windows(&fx.lstmvis, &fx.test_set, Some(class));
        picks.extend(per_class.iter().take(13).map(|(i, _)| *i));
    }
    picks.truncate(100);
    assert!(picks.len() >= 100, "only {} usable windows", picks.len());

    let config = MaskConfig::default(); // lambda1 1, lambda2 0.001, step 0.001, 500 iterations
    let states: Vec<_> = picks
        .iter()
        .map(|i| {
            let w = &fx.test_set[*i];
            optimize_mask(&fx.lstmvis, &w.samples, w.label, &config).expect("mask optimization")
        })
        .collect();

    let decreased = states
        .iter()
        .filter(|s| s.final_loss.total < s.loss_history[0].total)
        .count();
    let halved = states
        .iter()
        .filter(|s| s.final_loss.confidence <= 0.5 * s.loss_history[0].confidence)
        .count();
    let worst_violation = states
        .iter()
        .map(|s| s.bound_violation)
        .fold(0.0f64, f64::max);

    assert!(
        decreased >= 95,
        "total loss decreased on only {decreased}/100 windows"
    );
    assert!(
        halved >= 80,
        "confidence halved on only {halved}/100 windows"
    );
    assert_eq!(worst_violation, 0.0, "mask left [0,1] during optimization");
    println!(
        "PASS mask behavior: loss decreased {decreased}/100, confidence halved {halved}/100, bounds exact"
    );
}

#[test]
fn criterion_literal_perturbation_fixed_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<f64> = (0..WINDOW_LEN).map(|_| rng.gen_range(-3.0..3.0)).collect();
    for k in [0.0, -0.5, 1.25] {
        let out = perturb(&x, &vec![1.0; WINDOW_LEN], k, Convention::Literal).unwrap();
        assert!(out.iter().all(|v| *v == 0.0), "m = 1 must zero the signal");
        let out = perturb(&x, &vec![0.0; WINDOW_LEN], k, Convention::Literal).unwrap();
        for (o, xv) in out.iter().zip(&x) {
            assert_eq!(*o, xv + k, "m = 0 must shift by k");
        }
    }
    println!("PASS literal perturbation fixed points: exact at m = 0 and m = 1");
}

#[test]
fn criterion_end_to_end_determinism() {
    let bin = env!("CARGO_BIN_EXE_ecgviz");
    let base = tempfile::tempdir().unwrap();
    let config_path = base.path().join("exp.conf");
    let run = |out: &std::path::Path| {
        let config = format!(
            "seed = 33\nout = {}\nsynth.per_class = 12\nsplit.per_class = 8\n\
             model = lstmvis\ntrain.epochs = 3\nsaliency.top_k = 1\nmask.iterations = 40\n",
            out.display()
        );
        std::fs::write(&config_path, config).unwrap();
        for verb in ["synth", "train", "eval", "mask"] {
            let status = std::process::Command::new(bin)
                .args([verb, "--config"])
                .arg(&config_path)
                .status()
                .expect("spawn ecgviz");
            let code = status.code().unwrap_or(-1);
            assert!(
                code == 0 || (verb == "eval" && code == 2),
                "{verb} exited with {code}"
            );
        }
    };
    let out1 = base.path().join("run1");
    let out2 = base.path().join("run2");
    run(&out1);
    run(&out2);

    let mut compared = 0;
    for name in ["metrics.csv", "confusion.csv", "loss_curve.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        compared += 1;
    }
    let mut overlays: Vec<_> = std::fs::read_dir(out1.join("mask"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    overlays.sort();
    assert!(!overlays.is_empty());
    for name in overlays {
        let a = std::fs::read(out1.join("mask").join(&name)).unwrap();
        let b = std::fs::read(out2.join("mask").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between runs");
        compared += 1;
    }
    println!("PASS end-to-end determinism: {compared} files byte-identical across two runs");
}

/// Companion check (not a release criterion): on synthetic fibrillation
/// windows the CAM overlay concentrates in the ground-truth fibrillatory
/// segments more than a uniform overlay would.
#[test]
fn afib_overlay_concentrates_in_fibrillatory_segments() {
    let fx = fixture();
    let picks = correct_windows(&fx.camnet, &fx.test_set, Some(RhythmClass::Afib));
    assert!(picks.len() >= 10, "too few correct AFIB windows");
    let mut better = 0usize;
    let mut total = 0usize;
    for (idx, _) in picks.iter().take(30) {
        let window = &fx.test_set[*idx];
        let Some(gt) = fx.ground_truth.get(&window.source.id()) else {
            continue;
        };
        let gt_len: usize = gt.iter().map(|(s, e)| e - s).sum();
        if gt_len == 0 {
            continue;
        }
        let cam = cam_for_window(&fx.camnet, &window.samples, RhythmClass::Afib).unwrap();
        let mass: f64 = cam.overlay.iter().sum();
        let inside: f64 = (0..WINDOW_LEN)
            .filter(|t| gt.iter().any(|(s, e)| (*s..*e).contains(t)))
            .map(|t| cam.overlay[t])
            .sum();
        let uniform_share = gt_len as f64 / WINDOW_LEN as f64;
        total += 1;
        if inside / mass > uniform_share {
            better += 1;
        }
    }
    assert!(total >= 10);
    assert!(
        better * 2 > total,
        "overlay concentrated in fibrillatory spans on only {better}/{total} windows"
    );
    println!("AFIB overlay concentration: {better}/{total} windows above the uniform baseline");
}
