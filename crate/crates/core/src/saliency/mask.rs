//! Learned input-deletion masks.
//!
//! The mask starts at zero and is optimized by plain gradient descent with
//! projection onto `[0, 1]` after every step. The objective combines mask
//! sparsity, total-variation smoothness, and the frozen network's confidence
//! in the target class on the perturbed input.

use crate::autodiff::{gradient_descent_step, BnMode, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{predict, Network};
use crate::saliency::{minmax_normalize, Convention, LossTerms, MaskConfig, MaskState};
use crate::signal::RhythmClass;

/// Applies the mask to a signal.
///
/// - `Deletion`: `(1 - m) .* x + k m` — `m_t = 1` replaces sample `t` with
///   the baseline `k`.
/// - `Literal`: `(1 - m) .* x + k (1 - m)` — the objective's printed form.
pub fn perturb(x: &[f64], mask: &[f64], replacement: f64, convention: Convention) -> Result<Vec<f64>> {
    if x.len() != mask.len() {
        return Err(Error::shape(
            "perturb",
            format!("signal has {} samples, mask {}", x.len(), mask.len()),
        ));
    }
    Ok(x.iter()
        .zip(mask)
        .map(|(xv, m)| match convention {
            Convention::Deletion => (1.0 - m) * xv + replacement * m,
            Convention::Literal => (1.0 - m) * xv + replacement * (1.0 - m),
        })
        .collect())
}

/// Loss decomposition for a mask whose perturbed input scored
/// `target_prob`. Sums (not means) over time, so the default weights match
/// the published settings.
pub fn mask_loss(mask: &[f64], target_prob: f64, config: &MaskConfig) -> LossTerms {
    let sparsity_mass: f64 = match config.convention {
        Convention::Deletion => mask.iter().map(|m| m.abs()).sum(),
        Convention::Literal => mask.iter().map(|m| (1.0 - m).abs()).sum(),
    };
    let sparsity = config.sparsity_weight * sparsity_mass;
    let smoothness = config.smoothness_weight
        * mask
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum::<f64>();
    LossTerms {
        total: sparsity + smoothness + target_prob,
        sparsity,
        smoothness,
        confidence: target_prob,
    }
}

/// Evaluates the full objective for a given mask without recording
/// gradients. Used for the final-state loss and by verification tests.
pub fn mask_total_loss<N: Network + ?Sized>(
    net: &N,
    x: &[f64],
    target: RhythmClass,
    mask: &[f64],
    config: &MaskConfig,
) -> Result<LossTerms> {
    let perturbed = perturb(x, mask, config.replacement, config.convention)?;
    let (_, probs) = predict(net, &perturbed)?;
    Ok(mask_loss(mask, probs[target.index()], config))
}

/// Learns a mask for one input against a frozen network by projected
/// gradient descent. The mask starts at zero; every iteration records the
/// current loss, takes one gradient step, and clamps the mask into `[0, 1]`.
pub fn optimize_mask<N: Network + ?Sized>(
    net: &N,
    x: &[f64],
    target: RhythmClass,
    config: &MaskConfig,
) -> Result<MaskState> {
    config.validate()?;
    if x.len() != net.input_len() {
        return Err(Error::shape(
            "optimize_mask",
            format!("expected {} samples, got {}", net.input_len(), x.len()),
        ));
    }
    let (predicted, _) = predict(net, x)?;
    let prediction_mismatch = predicted != target.index();
    if prediction_mismatch {
        log::warn!(
            "mask target {} differs from model prediction {}; optimizing against the target",
            target.name(),
            RhythmClass::from_index(predicted).map_or("?", |c| c.name()),
        );
    }

    let mut mask = vec![0.0; x.len()];
    let mut history = Vec::with_capacity(config.iterations);
    let mut bound_violation = 0.0f64;
    for iteration in 0..config.iterations {
        let (terms, grad) = loss_and_gradient(net, x, target, &mask, config)?;
        if !terms.total.is_finite() {
            return Err(Error::Numeric(format!(
                "mask loss became non-finite at iteration {iteration}"
            )));
        }
        history.push(terms);
        gradient_descent_step(&mut mask, &grad, config.step_size);
        for m in mask.iter_mut() {
            *m = m.clamp(0.0, 1.0);
        }
        for m in mask.iter() {
            bound_violation = bound_violation.max(-*m).max(*m - 1.0);
        }
    }
    let final_loss = mask_total_loss(net, x, target, &mask, config)?;
    Ok(MaskState {
        mask,
        loss_history: history,
        final_loss,
        bound_violation: bound_violation.max(0.0),
        target,
        prediction_mismatch,
    })
}

/// Display overlay for a learned mask: mask mass under the deletion
/// convention, kept mass under the literal one, min-max normalized.
pub fn saliency_from_mask(mask: &[f64], convention: Convention) -> Vec<f64> {
    match convention {
        Convention::Deletion => minmax_normalize(mask),
        Convention::Literal => {
            let inverted: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
            minmax_normalize(&inverted)
        }
    }
}

fn loss_and_gradient<N: Network + ?Sized>(
    net: &N,
    x: &[f64],
    target: RhythmClass,
    mask: &[f64],
    config: &MaskConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    let mut tape = Tape::new();
    let m_id = tape.leaf(Tensor::vector(mask), true);
    let x_id = tape.leaf(Tensor::vector(x), false);
    let perturbed = build_perturbation(&mut tape, x_id, m_id, config)?;
    let graph = net.build_logits(&mut tape, perturbed, BnMode::Eval, false)?;
    let confidence = tape.softmax_prob(graph.logits, target.index())?;
    // the projection keeps m in [0, 1], where |m| = m and |1 - m| = 1 - m;
    // using the plain sums gives the one-sided subgradient at the clamp
    // boundary, which stops coordinates from ping-ponging across 0
    let sparsity_mass = match config.convention {
        Convention::Deletion => tape.sum(m_id),
        Convention::Literal => {
            let kept = tape.affine(m_id, -1.0, 1.0);
            tape.sum(kept)
        }
    };
    let sparsity = tape.affine(sparsity_mass, config.sparsity_weight, 0.0);
    let tv = tape.total_variation(m_id);
    let smoothness = tape.affine(tv, config.smoothness_weight, 0.0);
    let partial = tape.add(sparsity, smoothness)?;
    let total = tape.add(partial, confidence)?;
    tape.backward(total)?;
    let terms = LossTerms {
        total: tape.value(total).item(),
        sparsity: tape.value(sparsity).item(),
        smoothness: tape.value(smoothness).item(),
        confidence: tape.value(confidence).item(),
    };
    let grad = tape
        .grad(m_id)
        .ok_or_else(|| Error::Contract("mask received no gradient".to_string()))?
        .to_vec();
    Ok((terms, grad))
}

/// Records the perturbation `phi(x; m)` on the tape.
fn build_perturbation(
    tape: &mut Tape,
    x: NodeId,
    mask: NodeId,
    config: &MaskConfig,
) -> Result<NodeId> {
    let kept_fraction = tape.affine(mask, -1.0, 1.0); // 1 - m
    let kept = tape.elementwise_mul(kept_fraction, x)?;
    let fill = match config.convention {
        Convention::Deletion => tape.affine(mask, config.replacement, 0.0),
        Convention::Literal => tape.affine(kept_fraction, config.replacement, 0.0),
    };
    tape.add(kept, fill)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        train, LstmVisConfig, LstmVisModel, TrainControl, TrainOptions,
    };
    use crate::signal::{Window, WindowSource, WINDOW_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_window(label: RhythmClass, freq: f64, offset: f64) -> Window {
        let samples: Vec<f64> = (0..WINDOW_LEN)
            .map(|i| (i as f64 * freq).sin() + offset)
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

    fn trained_toy_net() -> (LstmVisModel, Vec<Window>) {
        let mut data = Vec::new();
        for i in 0..8 {
            data.push(toy_window(RhythmClass::Normal, 0.05 + 0.002 * i as f64, 0.0));
            data.push(toy_window(RhythmClass::Pvc, 0.4 + 0.002 * i as f64, 1.2));
        }
        let mut net = LstmVisModel::new(LstmVisConfig::desk_scale(), 21).unwrap();
        let opts = TrainOptions {
            epochs: 20,
            batch_size: 4,
            seed: 11,
            ..TrainOptions::default()
        };
        train(&mut net, &data, &opts, |_, _| TrainControl::Continue).unwrap();
        (net, data)
    }

    #[test]
    fn literal_fixed_points_hold_exactly() {
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let k = 0.3;
        let all_ones = vec![1.0; 6];
        let out = perturb(&x, &all_ones, k, Convention::Literal).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        let all_zeros = vec![0.0; 6];
        let out = perturb(&x, &all_zeros, k, Convention::Literal).unwrap();
        for (o, xv) in out.iter().zip(&x) {
            assert_eq!(*o, xv + k);
        }
    }

    #[test]
    fn deletion_fixed_points() {
        let x: Vec<f64> = vec![0.5, -2.0, 3.5];
        let out = perturb(&x, &[0.0; 3], 9.0, Convention::Deletion).unwrap();
        assert_eq!(out, x);
        let out = perturb(&x, &[1.0; 3], 9.0, Convention::Deletion).unwrap();
        assert!(out.iter().all(|v| *v == 9.0));
    }

    #[test]
    fn loss_terms_at_canonical_masks() {
        let config = MaskConfig::default();
        // zero mask under deletion: only the confidence term remains
        let terms = mask_loss(&[0.0; 720], 0.83, &config);
        assert_eq!(terms.sparsity, 0.0);
        assert_eq!(terms.smoothness, 0.0);
        assert_eq!(terms.total, 0.83);

        // full mask under the literal convention: sparsity term vanishes
        let literal = MaskConfig {
            convention: Convention::Literal,
            ..MaskConfig::default()
        };
        let terms = mask_loss(&[1.0; 720], 0.2, &literal);
        assert_eq!(terms.sparsity, 0.0);
        assert_eq!(terms.smoothness, 0.0);
        assert_eq!(terms.total, 0.2);

        // step mask: a single unit transition
        let mut step = vec![0.0; 720];
        step[360..].iter_mut().for_each(|m| *m = 1.0);
        let terms = mask_loss(&step, 0.0, &config);
        assert!((terms.smoothness - config.smoothness_weight).abs() < 1e-15);
    }

    #[test]
    fn huge_sparsity_weight_pins_mask_to_zero() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig {
            sparsity_weight: 1e6,
            iterations: 50,
            ..MaskConfig::default()
        };
        let state = optimize_mask(&net, &data[0].samples, data[0].label, &config).unwrap();
        let max = state.mask.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1e-3, "mask mass survived: max {max}");
    }

    #[test]
    fn projection_keeps_mask_in_bounds() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig {
            iterations: 120,
            ..MaskConfig::default()
        };
        let state = optimize_mask(&net, &data[1].samples, data[1].label, &config).unwrap();
        assert!(state.mask.iter().all(|m| (0.0..=1.0).contains(m)));
        assert_eq!(state.loss_history.len(), 120);
    }

    #[test]
    fn loss_history_is_eventually_non_increasing() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig {
            iterations: 200,
            ..MaskConfig::default()
        };
        let state = optimize_mask(&net, &data[1].samples, data[1].label, &config).unwrap();
        for i in 10..state.loss_history.len() - 1 {
            assert!(
                state.loss_history[i + 1].total <= state.loss_history[i].total + 1e-9,
                "loss rose at iteration {}: {} -> {}",
                i,
                state.loss_history[i].total,
                state.loss_history[i + 1].total
            );
        }
    }

    #[test]
    fn confidence_drops_when_term_decreased() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig {
            iterations: 300,
            ..MaskConfig::default()
        };
        for w in data.iter().take(4) {
            let state = optimize_mask(&net, &w.samples, w.label, &config).unwrap();
            let initial = state.loss_history[0].confidence;
            if state.final_loss.confidence < initial {
                let perturbed =
                    perturb(&w.samples, &state.mask, config.replacement, config.convention)
                        .unwrap();
                let (_, probs) = predict(&net, &perturbed).unwrap();
                assert!(probs[w.label.index()] <= initial + 1e-12);
            }
        }
    }

    #[test]
    fn mask_gradient_matches_finite_differences() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig::default();
        let x = &data[1].samples;
        let target = data[1].label;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut mask: Vec<f64> = (0..WINDOW_LEN).map(|_| rng.gen_range(0.05..0.95)).collect();
        let (_, grad) = loss_and_gradient(&net, x, target, &mask, &config).unwrap();
        let eps = 1e-6;
        for _ in 0..10 {
            let j = rng.gen_range(0..WINDOW_LEN);
            let original = mask[j];
            mask[j] = original + eps;
            let up = mask_total_loss(&net, x, target, &mask, &config).unwrap().total;
            mask[j] = original - eps;
            let down = mask_total_loss(&net, x, target, &mask, &config).unwrap().total;
            mask[j] = original;
            let numeric = (up - down) / (2.0 * eps);
            let denom = grad[j].abs().max(numeric.abs()).max(1e-3);
            assert!(
                ((grad[j] - numeric) / denom).abs() < 1e-5,
                "coordinate {j}: analytic {} vs numeric {}",
                grad[j],
                numeric
            );
        }
    }


    #[test]
    fn mismatched_target_is_flagged_not_fatal() {
        let (net, data) = trained_toy_net();
        let config = MaskConfig {
            iterations: 5,
            ..MaskConfig::default()
        };
        // deliberately optimize against a class the model does not predict
        let state = optimize_mask(&net, &data[0].samples, RhythmClass::Sbr, &config).unwrap();
        assert!(state.prediction_mismatch);
        assert_eq!(state.target, RhythmClass::Sbr);
    }

    #[test]
    fn overlay_tracks_mask_peaks() {
        let mut mask = vec![0.1; 720];
        mask[100] = 0.9;
        let overlay = saliency_from_mask(&mask, Convention::Deletion);
        let argmax = overlay
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 100);
        assert_eq!(overlay[100], 1.0);

        // affine rescaling preserves the argmax and the normalized range
        let scaled: Vec<f64> = mask.iter().map(|m| 0.05 + 0.5 * m).collect();
        let overlay2 = saliency_from_mask(&scaled, Convention::Deletion);
        for (a, b) in overlay.iter().zip(&overlay2) {
            assert!((a - b).abs() < 1e-12);
        }

        let constant = saliency_from_mask(&[0.4; 720], Convention::Deletion);
        assert!(constant.iter().all(|v| *v == 0.5));

        // literal overlays highlight the kept mass
        let literal = saliency_from_mask(&mask, Convention::Literal);
        let argmin = literal
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 100);
    }
}
