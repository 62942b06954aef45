//! View augmentation for contrastive pretraining. Four families, applied in
//! a fixed order: rotate -> brightness/contrast -> blur -> noise. Every
//! family is independently toggleable; disabled or zero-magnitude transforms
//! are skipped entirely so the identity case is bit-exact.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthcam::{EyeImage, IMG_HEIGHT, IMG_WIDTH};
use crate::util::derive_seed3;

/// Grayscale stand-in for color jitter: brightness offset and contrast gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorJitterRange {
    /// offset drawn from [-brightness, brightness]
    pub brightness: f64,
    /// gain drawn from [1 - contrast, 1 + contrast]
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub color: Option<ColorJitterRange>,
    /// angle drawn from [-rotation_deg, rotation_deg]
    pub rotation_deg: Option<f64>,
    /// sigma drawn from the inclusive range
    pub noise_sigma: Option<[f64; 2]>,
    pub blur_sigma: Option<[f64; 2]>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            color: Some(ColorJitterRange {
                brightness: 0.2,
                contrast: 0.2,
            }),
            rotation_deg: Some(15.0),
            noise_sigma: Some([0.0, 0.05]),
            blur_sigma: Some([0.5, 1.5]),
        }
    }
}

impl AugmentationSpec {
    /// Identity: every family disabled.
    pub fn none() -> Self {
        AugmentationSpec {
            color: None,
            rotation_deg: None,
            noise_sigma: None,
            blur_sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.color {
            if c.brightness < 0.0 || c.contrast < 0.0 {
                return Err(Error::Config(
                    "color jitter ranges must be nonnegative".into(),
                ));
            }
        }
        if let Some(r) = self.rotation_deg {
            if r < 0.0 {
                return Err(Error::Config("rotation range must be nonnegative".into()));
            }
        }
        for (name, range) in [
            ("noise_sigma", self.noise_sigma),
            ("blur_sigma", self.blur_sigma),
        ] {
            if let Some([lo, hi]) = range {
                if !(0.0 <= lo && lo <= hi) {
                    return Err(Error::Config(format!(
                        "{name} must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

const CX: f64 = (IMG_WIDTH as f64 - 1.0) / 2.0;
const CY: f64 = (IMG_HEIGHT as f64 - 1.0) / 2.0;

/// Nearest-neighbor rotation about the image center; out-of-frame samples
/// fill with 0.
pub fn rotate_nearest(pixels: &[f64], angle_rad: f64) -> Vec<f64> {
    let (sin, cos) = angle_rad.sin_cos();
    let mut out = vec![0.0; pixels.len()];
    for row in 0..IMG_HEIGHT {
        for col in 0..IMG_WIDTH {
            // inverse-rotate the output coordinate to find the source
            let dx = col as f64 - CX;
            let dy = row as f64 - CY;
            let sx = CX + cos * dx + sin * dy;
            let sy = CY - sin * dx + cos * dy;
            let sc = sx.round();
            let sr = sy.round();
            if sc >= 0.0 && sc < IMG_WIDTH as f64 && sr >= 0.0 && sr < IMG_HEIGHT as f64 {
                out[row * IMG_WIDTH + col] = pixels[sr as usize * IMG_WIDTH + sc as usize];
            }
        }
    }
    out
}

fn gaussian_blur(pixels: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    if radius == 0 {
        return pixels.to_vec();
    }
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for k in &mut kernel {
        *k /= sum;
    }

    let clamp_w = |v: i64| v.clamp(0, IMG_WIDTH as i64 - 1) as usize;
    let clamp_h = |v: i64| v.clamp(0, IMG_HEIGHT as i64 - 1) as usize;

    // horizontal pass then vertical pass, clamp-to-edge
    let mut tmp = vec![0.0; pixels.len()];
    for row in 0..IMG_HEIGHT {
        for col in 0..IMG_WIDTH as i64 {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let src = clamp_w(col + ki as i64 - radius);
                acc += k * pixels[row * IMG_WIDTH + src];
            }
            tmp[row * IMG_WIDTH + col as usize] = acc;
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for row in 0..IMG_HEIGHT as i64 {
        for col in 0..IMG_WIDTH {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let src = clamp_h(row + ki as i64 - radius);
                acc += k * tmp[src * IMG_WIDTH + col];
            }
            out[row as usize * IMG_WIDTH + col] = acc;
        }
    }
    out
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Applies the four transforms under `seed`; shape preserved, output clamped
/// to [0, 1]. Identical (img, spec, seed) gives identical output.
pub fn augment(img: &EyeImage, spec: &AugmentationSpec, seed: u64) -> Result<EyeImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = img.pixels.clone();

    if let Some(range) = spec.rotation_deg {
        let angle = sample_range(&mut rng, -range, range).to_radians();
        if angle != 0.0 {
            pixels = rotate_nearest(&pixels, angle);
        }
    }
    if let Some(c) = &spec.color {
        let offset = sample_range(&mut rng, -c.brightness, c.brightness);
        let gain = sample_range(&mut rng, 1.0 - c.contrast, 1.0 + c.contrast);
        if offset != 0.0 || gain != 1.0 {
            for v in &mut pixels {
                *v = (*v - 0.5) * gain + 0.5 + offset;
            }
        }
    }
    if let Some([lo, hi]) = spec.blur_sigma {
        let sigma = sample_range(&mut rng, lo, hi);
        if sigma > 0.0 {
            pixels = gaussian_blur(&pixels, sigma);
        }
    }
    if let Some([lo, hi]) = spec.noise_sigma {
        let sigma = sample_range(&mut rng, lo, hi);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("valid sigma");
            for v in &mut pixels {
                *v += normal.sample(&mut rng);
            }
        }
    }
    for v in &mut pixels {
        *v = v.clamp(0.0, 1.0);
    }
    EyeImage::new(pixels, img.gaze, img.head)
}

const TAG_VIEW: u64 = 0x11;

/// Two augmented views per image: views 2k and 2k+1 come from image k with
/// independent seeds. The pairing map is a fixed-point-free involution;
/// all cross pairs are implicit negatives.
pub fn make_views(
    images: &[EyeImage],
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<(Vec<EyeImage>, Vec<usize>)> {
    if images.is_empty() {
        return Err(Error::Argument(
            "batch must contain at least one image".into(),
        ));
    }
    let mut views = Vec::with_capacity(images.len() * 2);
    let mut pairing = Vec::with_capacity(images.len() * 2);
    for (k, img) in images.iter().enumerate() {
        views.push(augment(
            img,
            spec,
            derive_seed3(seed, TAG_VIEW, k as u64, 0),
        )?);
        views.push(augment(
            img,
            spec,
            derive_seed3(seed, TAG_VIEW, k as u64, 1),
        )?);
        pairing.push(2 * k + 1);
        pairing.push(2 * k);
    }
    Ok((views, pairing))
}
