//! Intensity-centroid orientation assignment.

use super::{Keypoint, ORIENT_RADIUS};
use crate::imgproc::{wrap_angle, GrayImage};

/// Assign each keypoint the intensity-centroid angle over a radius-15 disc:
/// `m_pq = sum x^p y^q I(x,y)` with offsets relative to the keypoint, and
/// `angle = atan2(m01, m10)` mapped to [0, 2*pi). Keypoints closer than the
/// disc radius to the border are dropped; a radially symmetric patch gets
/// angle 0 by convention.
pub fn orient(img: &GrayImage, kps: &[Keypoint]) -> Vec<Keypoint> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = ORIENT_RADIUS;
    let mut out = Vec::with_capacity(kps.len());
    for kp in kps {
        let cx = kp.x.round() as i64;
        let cy = kp.y.round() as i64;
        if cx < r || cy < r || cx + r >= w || cy + r >= h {
            continue;
        }
        // Integer accumulation keeps perfectly symmetric patches at
        // exactly m01 = m10 = 0.
        let mut m10: i64 = 0;
        let mut m01: i64 = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let v = img.get((cx + dx) as usize, (cy + dy) as usize) as i64;
                m10 += dx * v;
                m01 += dy * v;
            }
        }
        let angle = if m10 == 0 && m01 == 0 {
            0.0
        } else {
            wrap_angle((m01 as f64).atan2(m10 as f64) as f32)
        };
        out.push(Keypoint {
            angle: Some(angle),
            ..*kp
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: f32, y: f32) -> Keypoint {
        Keypoint {
            x,
            y,
            scale: 7.0,
            angle: None,
            response: 1.0,
        }
    }

    #[test]
    fn brighter_plus_x_gives_angle_near_zero() {
        // Brightness grows with x: centroid lies toward +x.
        let img = GrayImage::from_fn(64, 64, |x, _| (x * 3) as u8);
        let out = orient(&img, &[kp(32.0, 32.0)]);
        let a = out[0].angle.unwrap();
        assert!(
            !(0.05..=std::f32::consts::TAU - 0.05).contains(&a),
            "angle {a}"
        );
    }

    #[test]
    fn rotated_patch_rotates_angle() {
        // Same gradient rotated 90 degrees: brightness grows with y.
        let img = GrayImage::from_fn(64, 64, |_, y| (y * 3) as u8);
        let out = orient(&img, &[kp(32.0, 32.0)]);
        let a = out[0].angle.unwrap();
        assert!((a - std::f32::consts::FRAC_PI_2).abs() < 0.05, "angle {a}");
    }

    #[test]
    fn oracle_on_synthetic_rotation() {
        // A bright off-center blob; rotating the patch by 90 degrees
        // about the keypoint must rotate the measured angle by 90 degrees.
        let c = 32i64;
        let base = GrayImage::from_fn(64, 64, |x, y| {
            let dx = x as f32 - 40.0;
            let dy = y as f32 - 32.0;
            (200.0 * (-(dx * dx + dy * dy) / 40.0).exp()) as u8
        });
        // Exact +90-degree remap about (32, 32): out(x,y) = base(y, 2c-x).
        let rotated =
            GrayImage::from_fn(64, 64, |x, y| base.get_clamped(y as i64, 2 * c - x as i64));
        let a0 = orient(&base, &[kp(32.0, 32.0)])[0].angle.unwrap();
        let a1 = orient(&rotated, &[kp(32.0, 32.0)])[0].angle.unwrap();
        let diff = wrap_angle(a1 - a0);
        assert!(
            (diff - std::f32::consts::FRAC_PI_2).abs() < 0.05,
            "rotation measured {diff}"
        );
    }

    #[test]
    fn symmetric_patch_angle_zero() {
        let img = GrayImage::constant(64, 64, 100);
        let out = orient(&img, &[kp(32.0, 32.0)]);
        assert_eq!(out[0].angle, Some(0.0));
    }

    #[test]
    fn border_keypoints_dropped() {
        let img = GrayImage::constant(64, 64, 100);
        let out = orient(&img, &[kp(5.0, 32.0), kp(32.0, 32.0), kp(60.0, 60.0)]);
        assert_eq!(out.len(), 1);
    }
}
