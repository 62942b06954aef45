//! Builds 7-value feature records from a session by running the gaze model
//! on each eye image and Kalman-smoothing the four eye channels.

use crate::error::Result;
use crate::gazenet::GazeModel;
use crate::gradcore::Tensor;
use crate::smoothing::{rts_smooth, KalmanConfig};
use crate::synthcam::{EyeImage, FeatureRecord, GazeAngles, SessionFrame};

fn predict_series(
    model: &mut GazeModel,
    images: &[&EyeImage],
    heads: &[(f64, f64)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut yaws = Vec::with_capacity(images.len());
    let mut pitches = Vec::with_capacity(images.len());
    for (chunk_imgs, chunk_heads) in images.chunks(64).zip(heads.chunks(64)) {
        let mut head_t = Tensor::zeros(&[chunk_imgs.len(), 2]);
        for (i, &(hy, hp)) in chunk_heads.iter().enumerate() {
            head_t.data_mut()[i * 2] = hy;
            head_t.data_mut()[i * 2 + 1] = hp;
        }
        let out = model.forward_batch(chunk_imgs, &head_t)?;
        for i in 0..chunk_imgs.len() {
            yaws.push(out.data()[i * 2]);
            pitches.push(out.data()[i * 2 + 1]);
        }
    }
    Ok((yaws, pitches))
}

/// One record per frame. With smoothing disabled the features are exactly
/// the raw model outputs; truth labels come from the session geometry.
pub fn build_records(
    model: &mut GazeModel,
    kalman: &KalmanConfig,
    session: &[SessionFrame],
) -> Result<Vec<FeatureRecord>> {
    if session.is_empty() {
        return Ok(Vec::new());
    }
    kalman.validate()?;
    let heads: Vec<(f64, f64)> = session.iter().map(|f| (f.head.yaw, f.head.pitch)).collect();
    let left_imgs: Vec<&EyeImage> = session.iter().map(|f| &f.left_img).collect();
    let right_imgs: Vec<&EyeImage> = session.iter().map(|f| &f.right_img).collect();
    let (mut ly, mut lp) = predict_series(model, &left_imgs, &heads)?;
    let (mut ry, mut rp) = predict_series(model, &right_imgs, &heads)?;

    if kalman.enabled {
        ly = rts_smooth(&ly, kalman.q, kalman.r)?;
        lp = rts_smooth(&lp, kalman.q, kalman.r)?;
        ry = rts_smooth(&ry, kalman.q, kalman.r)?;
        rp = rts_smooth(&rp, kalman.q, kalman.r)?;
    }

    Ok(session
        .iter()
        .enumerate()
        .map(|(i, frame)| FeatureRecord {
            left_eye: GazeAngles {
                yaw: ly[i],
                pitch: lp[i],
            },
            right_eye: GazeAngles {
                yaw: ry[i],
                pitch: rp[i],
            },
            head: frame.head,
            distance_m: frame.distance_m,
            label: frame.label,
        })
        .collect())
}
