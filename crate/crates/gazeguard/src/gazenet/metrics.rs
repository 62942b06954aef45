//! Gaze losses and angular-error evaluation.

use serde::Serialize;

use super::model::GazeModel;
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::synthcam::{gaze_to_vector, EyeImage, GazeAngles};

/// Mean over the batch of per-sample Euclidean norms ||truth - pred||, with
/// the gradient w.r.t. predictions. The subgradient at an exact match is 0.
pub fn gaze_l2_loss(pred: &Tensor, truth: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != truth.shape() {
        return Err(Error::Argument(format!(
            "prediction shape {:?} != truth shape {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let s = pred.shape();
    if s.len() != 2 || s[0] == 0 {
        return Err(Error::Argument("expected a nonempty (N, D) batch".into()));
    }
    let (n, d) = (s[0], s[1]);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(s);
    {
        let g = grad.data_mut();
        for i in 0..n {
            let p = &pred.data()[i * d..(i + 1) * d];
            let t = &truth.data()[i * d..(i + 1) * d];
            let norm = p
                .iter()
                .zip(t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            loss += inv_n * norm;
            if norm > 0.0 {
                for j in 0..d {
                    g[i * d + j] = inv_n * (p[j] - t[j]) / norm;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Angle between the two gaze rays, degrees.
pub fn angular_error_deg(pred: GazeAngles, truth: GazeAngles) -> f64 {
    let a = gaze_to_vector(pred);
    let b = gaze_to_vector(truth);
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub mean_angular_error_deg: f64,
    pub per_sample_deg: Vec<f64>,
}

/// Evaluates a model against the recorded gaze labels of `images`.
pub fn evaluate_gaze(
    model: &mut GazeModel,
    images: &[&EyeImage],
    model_id: &str,
    dataset_id: &str,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let mut per_sample = Vec::with_capacity(images.len());
    for chunk in images.chunks(64) {
        let mut heads = Tensor::zeros(&[chunk.len(), 2]);
        for (i, img) in chunk.iter().enumerate() {
            heads.data_mut()[i * 2] = img.head.yaw;
            heads.data_mut()[i * 2 + 1] = img.head.pitch;
        }
        let out = model.forward_batch(chunk, &heads)?;
        for (i, img) in chunk.iter().enumerate() {
            let pred = GazeAngles {
                yaw: out.data()[i * 2],
                pitch: out.data()[i * 2 + 1],
            };
            per_sample.push(angular_error_deg(pred, img.gaze));
        }
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(EvalReport {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        mean_angular_error_deg: mean,
        per_sample_deg: per_sample,
    })
}
