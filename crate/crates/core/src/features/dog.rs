//! Difference-of-Gaussians scale-space extrema detector.

use super::{sort_and_truncate, DetectorConfig, Keypoint, DOG_BASE_SIGMA};
use crate::error::{Error, Result};
use crate::imgproc::{build_pyramid, GrayImage, ImageF32};

/// Detect scale-space extrema of the difference-of-Gaussians.
///
/// DoG levels are adjacent-level differences within each octave. A
/// keypoint is a pixel whose |DoG| exceeds the contrast threshold and is a
/// strict extremum among its 26 spatial/scale neighbors; elongated (edge)
/// responses are rejected by the Hessian trace/determinant ratio test.
/// Coordinates are mapped back to base-image scale; the keypoint scale is
/// the level's blur sigma.
pub fn dog_detect(
    img: &GrayImage,
    cfg: &DetectorConfig,
    max_keypoints: usize,
) -> Result<Vec<Keypoint>> {
    let (contrast_threshold, edge_ratio, octaves, scales_per_octave) = match cfg {
        DetectorConfig::Dog {
            contrast_threshold,
            edge_ratio,
            octaves,
            scales_per_octave,
        } => (
            *contrast_threshold,
            *edge_ratio,
            *octaves,
            *scales_per_octave,
        ),
        other => {
            return Err(Error::InvalidParam(format!(
                "dog_detect called with {other:?}"
            )))
        }
    };
    if scales_per_octave < 3 {
        return Err(Error::InvalidParam(format!(
            "DoG needs scales_per_octave >= 3, got {scales_per_octave}"
        )));
    }
    let pyramid = build_pyramid(img, octaves, scales_per_octave, DOG_BASE_SIGMA)?;
    // Reject when tr^2/det > (r+1)^2/r.
    let edge_limit = (edge_ratio + 1.0) * (edge_ratio + 1.0) / edge_ratio;

    let mut kps = Vec::new();
    for levels in &pyramid.octaves {
        let downsample = levels[0].downsample;
        let dogs: Vec<ImageF32> = levels
            .windows(2)
            .map(|pair| {
                let (a, b) = (&pair[0].image, &pair[1].image);
                let data: Vec<f32> = b
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(hi, lo)| hi - lo)
                    .collect();
                ImageF32::new(a.width(), a.height(), data)
            })
            .collect();

        let (w, h) = (dogs[0].width(), dogs[0].height());
        for d in 1..dogs.len() - 1 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = dogs[d].get(x, y);
                    if v.abs() <= contrast_threshold {
                        continue;
                    }
                    if !is_strict_extremum(&dogs, d, x, y, v) {
                        continue;
                    }
                    if is_edge_response(&dogs[d], x, y, edge_limit) {
                        continue;
                    }
                    // Effective sigma of DoG level d: geometric mean of the
                    // two Gaussian levels it was formed from.
                    let sigma = (levels[d].sigma * levels[d + 1].sigma).sqrt();
                    kps.push(Keypoint {
                        x: (x * downsample) as f32,
                        y: (y * downsample) as f32,
                        scale: sigma,
                        angle: None,
                        response: v.abs(),
                    });
                }
            }
        }
    }
    Ok(sort_and_truncate(kps, max_keypoints))
}

fn is_strict_extremum(dogs: &[ImageF32], d: usize, x: usize, y: usize, v: f32) -> bool {
    let mut is_max = true;
    let mut is_min = true;
    for dd in -1i64..=1 {
        let plane = &dogs[(d as i64 + dd) as usize];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dd == 0 && dy == 0 && dx == 0 {
                    continue;
                }
                let n = plane.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                if v <= n {
                    is_max = false;
                }
                if v >= n {
                    is_min = false;
                }
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// 2x2 spatial Hessian ratio test on a DoG plane.
fn is_edge_response(plane: &ImageF32, x: usize, y: usize, edge_limit: f32) -> bool {
    let v = plane.get(x, y);
    let dxx = plane.get(x + 1, y) - 2.0 * v + plane.get(x - 1, y);
    let dyy = plane.get(x, y + 1) - 2.0 * v + plane.get(x, y - 1);
    let dxy = (plane.get(x + 1, y + 1) - plane.get(x + 1, y - 1) - plane.get(x - 1, y + 1)
        + plane.get(x - 1, y - 1))
        / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det <= 0.0 || tr * tr > edge_limit * det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(octaves: usize) -> DetectorConfig {
        DetectorConfig::Dog {
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            octaves,
            scales_per_octave: 3,
        }
    }

    fn gaussian_blob(n: usize, cx: f32, cy: f32, sigma: f32, amp: f32) -> GrayImage {
        GrayImage::from_fn(n, n, |x, y| {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let v = amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            v.min(255.0) as u8
        })
    }

    #[test]
    fn constant_image_yields_nothing() {
        let img = GrayImage::constant(128, 128, 77);
        assert!(dog_detect(&img, &cfg(3), 100).unwrap().is_empty());
    }

    /// Dense scale-space oracle: evaluate |DoG| at the blob center across
    /// a fine sigma ladder computed directly from full-resolution blurs
    /// (no pyramid shortcuts) and check the detector agrees on location
    /// and approximate scale.
    #[test]
    fn single_blob_detected_at_center_and_scale() {
        let blob_sigma = 4.0f32;
        let img = gaussian_blob(128, 64.0, 64.0, blob_sigma, 220.0);
        let kps = dog_detect(&img, &cfg(3), 100).unwrap();
        assert!(!kps.is_empty());
        // Strongest detection near the center.
        let near: Vec<&Keypoint> = kps
            .iter()
            .filter(|k| (k.x - 64.0).abs() <= 2.0 && (k.y - 64.0).abs() <= 2.0)
            .collect();
        assert!(!near.is_empty(), "no keypoint within 2px of blob center");
        let best = near
            .iter()
            .max_by(|a, b| a.response.partial_cmp(&b.response).unwrap())
            .unwrap();

        // One level in scale space is a factor 2^(1/3); "within one level"
        // of the blob sigma (the detector quantizes scale to levels).
        let level = 2f32.powf(1.0 / 3.0);
        let lo = blob_sigma / level / level;
        let hi = blob_sigma * level * level;
        assert!(
            best.scale >= lo && best.scale <= hi,
            "detected scale {} outside [{lo}, {hi}]",
            best.scale
        );

        // Independent dense check: the full-resolution DoG response at the
        // center peaks near the blob sigma.
        let img_f = img.to_f32();
        let mut best_sigma = 0.0;
        let mut best_resp = 0.0f32;
        for i in 0..14 {
            let s0 = 1.2f32 * 1.26f32.powi(i);
            let s1 = s0 * 1.26;
            let a = crate::imgproc::blur_f32(&img_f, s0);
            let b = crate::imgproc::blur_f32(&img_f, s1);
            let resp = (b.get(64, 64) - a.get(64, 64)).abs();
            if resp > best_resp {
                best_resp = resp;
                best_sigma = (s0 * s1).sqrt();
            }
        }
        assert!(
            best_sigma >= lo && best_sigma <= hi,
            "oracle scale {best_sigma} disagrees with [{lo}, {hi}]"
        );
    }

    #[test]
    fn two_blob_scales_order_correctly() {
        let n = 160usize;
        let img = GrayImage::from_fn(n, n, |x, y| {
            let small = {
                let dx = x as f32 - 48.0;
                let dy = y as f32 - 48.0;
                220.0 * (-(dx * dx + dy * dy) / (2.0 * 2.0 * 2.0)).exp()
            };
            let large = {
                let dx = x as f32 - 112.0;
                let dy = y as f32 - 112.0;
                220.0 * (-(dx * dx + dy * dy) / (2.0 * 8.0 * 8.0)).exp()
            };
            (small + large).min(255.0) as u8
        });
        let kps = dog_detect(&img, &cfg(4), 400).unwrap();
        let near = |cx: f32, cy: f32| -> Option<f32> {
            kps.iter()
                .filter(|k| (k.x - cx).abs() <= 4.0 && (k.y - cy).abs() <= 4.0)
                .max_by(|a, b| a.response.partial_cmp(&b.response).unwrap())
                .map(|k| k.scale)
        };
        let s_small = near(48.0, 48.0).expect("small blob missed");
        let s_large = near(112.0, 112.0).expect("large blob missed");
        assert!(
            s_small < s_large,
            "scales did not order: {s_small} vs {s_large}"
        );
    }

    #[test]
    fn rejects_bad_params() {
        let img = GrayImage::constant(64, 64, 0);
        let bad = DetectorConfig::Dog {
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            octaves: 2,
            scales_per_octave: 2,
        };
        assert!(dog_detect(&img, &bad, 10).is_err());
        let img_small = GrayImage::constant(20, 20, 0);
        assert!(dog_detect(&img_small, &cfg(2), 10).is_err());
    }
}
