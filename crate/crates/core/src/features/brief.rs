//! BRIEF binary descriptors, plain and steered (rotation-compensated).

use super::{DescriptorConfig, DescriptorPayload, DescriptorSet, Keypoint, BRIEF_PRESMOOTH_SIGMA};
use crate::error::{Error, Result};
use crate::imgproc::{gaussian_blur, GrayImage};
use crate::rng::Rng;

/// Comparison-pair sampling pattern, generated once per config from the
/// sampling seed so train and test sides agree bit for bit.
pub(crate) struct BriefPattern {
    /// (px, py, qx, qy) offsets relative to the keypoint.
    pairs: Vec<(f32, f32, f32, f32)>,
    /// Border margin that keeps every (possibly rotated) sample inside.
    pub margin: i64,
}

impl BriefPattern {
    pub fn generate(n_bits: usize, patch_size: usize, seed: u64) -> Self {
        let mut rng = Rng::seed_from(seed);
        let half = patch_size as f64 / 2.0;
        let sigma = patch_size as f64 / 5.0;
        let draw = |rng: &mut Rng| (rng.normal() * sigma).clamp(-half, half) as f32;
        let mut pairs = Vec::with_capacity(n_bits);
        for _ in 0..n_bits {
            let px = draw(&mut rng);
            let py = draw(&mut rng);
            let qx = draw(&mut rng);
            let qy = draw(&mut rng);
            pairs.push((px, py, qx, qy));
        }
        // Rotation can push a clamped corner sample out to half*sqrt(2).
        let margin = (half * std::f64::consts::SQRT_2).ceil() as i64 + 1;
        BriefPattern { pairs, margin }
    }
}

fn describe_impl(
    img: &GrayImage,
    kps: &[Keypoint],
    n_bits: usize,
    patch_size: usize,
    seed: u64,
    steered: bool,
) -> Result<DescriptorSet> {
    if steered && kps.iter().any(|k| k.angle.is_none()) {
        return Err(Error::InvalidParam(
            "steered BRIEF requires oriented keypoints (run orient first)".into(),
        ));
    }
    let pattern = BriefPattern::generate(n_bits, patch_size, seed);
    let smoothed = gaussian_blur(img, BRIEF_PRESMOOTH_SIGMA)?;
    let (w, h) = (smoothed.width() as i64, smoothed.height() as i64);
    let bytes_per = n_bits / 8;

    let mut data = Vec::new();
    let mut kept = Vec::new();
    for kp in kps {
        let cx = kp.x.round() as i64;
        let cy = kp.y.round() as i64;
        if cx < pattern.margin
            || cy < pattern.margin
            || cx + pattern.margin >= w
            || cy + pattern.margin >= h
        {
            continue; // too close to the border, dropped
        }
        let (sin, cos) = if steered {
            let a = kp.angle.unwrap_or(0.0);
            (a.sin(), a.cos())
        } else {
            (0.0, 1.0)
        };
        let mut desc = vec![0u8; bytes_per];
        for (bit, &(px, py, qx, qy)) in pattern.pairs.iter().enumerate() {
            // Rotate the pair, round sample coordinates to nearest pixel.
            let rpx = (px * cos - py * sin).round() as i64;
            let rpy = (px * sin + py * cos).round() as i64;
            let rqx = (qx * cos - qy * sin).round() as i64;
            let rqy = (qx * sin + qy * cos).round() as i64;
            let ip = smoothed.get((cx + rpx) as usize, (cy + rpy) as usize);
            let iq = smoothed.get((cx + rqx) as usize, (cy + rqy) as usize);
            if ip < iq {
                desc[bit / 8] |= 1 << (bit % 8);
            }
        }
        data.extend_from_slice(&desc);
        kept.push(*kp);
    }
    Ok(DescriptorSet {
        payload: DescriptorPayload::Binary { bits: n_bits, data },
        keypoints: kept,
    })
}

/// Plain BRIEF: fixed comparison pattern, no rotation compensation.
pub fn brief_describe(
    img: &GrayImage,
    kps: &[Keypoint],
    cfg: &DescriptorConfig,
) -> Result<DescriptorSet> {
    cfg.validate()?;
    match cfg {
        DescriptorConfig::Brief {
            n_bits,
            patch_size,
            sampling_seed,
        } => describe_impl(img, kps, *n_bits, *patch_size, *sampling_seed, false),
        other => Err(Error::InvalidParam(format!(
            "brief_describe called with {other:?}"
        ))),
    }
}

/// Steered BRIEF: the comparison pattern rotates with the keypoint angle.
pub fn steered_brief_describe(
    img: &GrayImage,
    kps: &[Keypoint],
    cfg: &DescriptorConfig,
) -> Result<DescriptorSet> {
    cfg.validate()?;
    match cfg {
        DescriptorConfig::SteeredBrief {
            n_bits,
            patch_size,
            sampling_seed,
        } => describe_impl(img, kps, *n_bits, *patch_size, *sampling_seed, true),
        other => Err(Error::InvalidParam(format!(
            "steered_brief_describe called with {other:?}"
        ))),
    }
}
