//! Class activation maps: the per-position weighted sum of final feature
//! map channels, upsampled onto the input and normalized for display.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::CamNetModel;
use crate::saliency::{minmax_normalize, Cam};
use crate::signal::RhythmClass;

/// `raw[x] = sum_k weights[k] * feature_map[k][x]`.
pub fn compute_cam(feature_map: &Tensor, class_weights: &[f64]) -> Result<Vec<f64>> {
    let shape = feature_map.shape();
    if shape.len() != 2 || shape[0] != class_weights.len() {
        return Err(Error::shape(
            "compute_cam",
            format!(
                "feature map {:?} with {} class weights",
                shape,
                class_weights.len()
            ),
        ));
    }
    let (k, len) = (shape[0], shape[1]);
    let f = feature_map.values();
    let mut raw = vec![0.0; len];
    for ch in 0..k {
        let w = class_weights[ch];
        for (x, slot) in raw.iter_mut().enumerate() {
            *slot += w * f[ch * len + x];
        }
    }
    Ok(raw)
}

/// Endpoint-aligned linear interpolation to `out_len` plus the `[0, 1]`
/// display overlay. The first and last raw values are preserved exactly.
pub fn upsample_normalize(raw: &[f64], out_len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = raw.len();
    let upsampled: Vec<f64> = if n == 1 {
        vec![raw[0]; out_len]
    } else {
        let step = (n - 1) as f64 / (out_len - 1) as f64;
        (0..out_len)
            .map(|j| {
                let pos = j as f64 * step;
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                raw[i] * (1.0 - frac) + raw[i + 1] * frac
            })
            .collect()
    };
    let overlay = minmax_normalize(&upsampled);
    (upsampled, overlay)
}

/// Full pipeline for one window: forward pass, activation map for `class`,
/// upsampling to the input length.
pub fn cam_for_window(
    model: &CamNetModel,
    samples: &[f64],
    class: RhythmClass,
) -> Result<Cam> {
    let trace = model.forward_features(samples)?;
    let raw = compute_cam(&trace.feature_map, model.class_weights(class.index()))?;
    let (upsampled, overlay) = upsample_normalize(&raw, model.config().input_len);
    Ok(Cam {
        class,
        raw,
        upsampled,
        overlay,
    })
}
