//! Gradient-histogram descriptor: a position-dependent histogram of local
//! gradient directions around the keypoint, rotation- and scale-normalized.

use super::{DescriptorConfig, DescriptorPayload, DescriptorSet, Keypoint};
use crate::error::{Error, Result};
use crate::imgproc::{wrap_angle, GrayImage};

/// Samples per patch side.
const PATCH_SAMPLES: usize = 16;
/// Component clamp applied between the two normalization passes.
const CLAMP: f32 = 0.2;

fn bilinear(plane: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let xf = x.clamp(0.0, (w - 1) as f32);
    let yf = y.clamp(0.0, (h - 1) as f32);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xf - x0 as f32;
    let fy = yf - y0 as f32;
    plane[y0 * w + x0] * (1.0 - fx) * (1.0 - fy)
        + plane[y0 * w + x1] * fx * (1.0 - fy)
        + plane[y1 * w + x0] * (1.0 - fx) * fy
        + plane[y1 * w + x1] * fx * fy
}

/// Sample spacing for a keypoint scale: the 16x16 sample lattice covers a
/// window proportional to the keypoint scale, bounded to stay useful on
/// small and large detections alike.
fn spacing_for(scale: f32) -> f32 {
    (0.5 * scale).clamp(0.75, 6.0)
}

/// Extract grid x grid x bins gradient-direction histograms on a 16x16
/// sample patch around each keypoint. The patch rotates and scales with
/// the keypoint (inverse mapping, bilinear gradient sampling); gradient
/// orientations are taken relative to the keypoint angle; contributions
/// are trilinearly binned; the vector is L2-normalized, clamped at 0.2
/// and renormalized. Keypoints whose patch exits the image are dropped.
pub fn gradhist_describe(
    img: &GrayImage,
    kps: &[Keypoint],
    cfg: &DescriptorConfig,
) -> Result<DescriptorSet> {
    cfg.validate()?;
    let (grid, bins) = match cfg {
        DescriptorConfig::GradHist { grid, bins } => (*grid, *bins),
        other => {
            return Err(Error::InvalidParam(format!(
                "gradhist_describe called with {other:?}"
            )))
        }
    };
    let dims = grid * grid * bins;
    let (w, h) = (img.width(), img.height());

    // Precompute raw gradient planes once per view (central differences).
    let field = crate::imgproc::gradients(img)?;
    let dx_plane = &field.dx;
    let dy_plane = &field.dy;

    let mut data: Vec<f32> = Vec::new();
    let mut kept = Vec::new();
    for kp in kps {
        let spacing = spacing_for(kp.scale);
        let theta = kp.angle.unwrap_or(0.0);
        let (sin, cos) = (theta.sin(), theta.cos());
        // Patch extent check: rotated corner plus one pixel of bilinear slack.
        let half_extent = (PATCH_SAMPLES as f32 / 2.0) * spacing * std::f32::consts::SQRT_2 + 2.0;
        if kp.x - half_extent < 0.0
            || kp.y - half_extent < 0.0
            || kp.x + half_extent >= w as f32
            || kp.y + half_extent >= h as f32
        {
            continue; // patch exits the image, dropped
        }

        let mut hist = vec![0.0f32; dims];
        for j in 0..PATCH_SAMPLES {
            for i in 0..PATCH_SAMPLES {
                let u = (i as f32 - (PATCH_SAMPLES as f32 - 1.0) / 2.0) * spacing;
                let v = (j as f32 - (PATCH_SAMPLES as f32 - 1.0) / 2.0) * spacing;
                let sx = kp.x + u * cos - v * sin;
                let sy = kp.y + u * sin + v * cos;
                let gx = bilinear(dx_plane, w, h, sx, sy);
                let gy = bilinear(dy_plane, w, h, sx, sy);
                // Gradient in the keypoint frame.
                let rgx = gx * cos + gy * sin;
                let rgy = -gx * sin + gy * cos;
                let mag = (rgx * rgx + rgy * rgy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let ori = wrap_angle(rgy.atan2(rgx));

                // Trilinear soft binning over (cell_y, cell_x, orientation).
                let cx = (i as f32 + 0.5) * grid as f32 / PATCH_SAMPLES as f32 - 0.5;
                let cy = (j as f32 + 0.5) * grid as f32 / PATCH_SAMPLES as f32 - 0.5;
                let ob = ori / std::f32::consts::TAU * bins as f32 - 0.5;
                let x0 = cx.floor();
                let y0 = cy.floor();
                let o0 = ob.floor();
                let fx = cx - x0;
                let fy = cy - y0;
                let fo = ob - o0;
                for (dyc, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                    let yy = y0 as i64 + dyc;
                    if yy < 0 || yy >= grid as i64 {
                        continue;
                    }
                    for (dxc, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                        let xx = x0 as i64 + dxc;
                        if xx < 0 || xx >= grid as i64 {
                            continue;
                        }
                        for (doc, wo) in [(0i64, 1.0 - fo), (1, fo)] {
                            let oo = (o0 as i64 + doc).rem_euclid(bins as i64);
                            hist[(yy as usize * grid + xx as usize) * bins + oo as usize] +=
                                mag * wy * wx * wo;
                        }
                    }
                }
            }
        }

        // L2-normalize, clamp, renormalize. Degenerate (flat) patches stay
        // all-zero rather than dividing by ~0.
        let norm: f32 = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm >= 1e-12 {
            for v in hist.iter_mut() {
                *v = (*v / norm).min(CLAMP);
            }
            let norm2: f32 = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm2 >= 1e-12 {
                for v in hist.iter_mut() {
                    *v /= norm2;
                }
            } else {
                hist.iter_mut().for_each(|v| *v = 0.0);
            }
        } else {
            hist.iter_mut().for_each(|v| *v = 0.0);
        }

        data.extend_from_slice(&hist);
        kept.push(*kp);
    }

    Ok(DescriptorSet {
        payload: DescriptorPayload::Float { dims, data },
        keypoints: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn cfg() -> DescriptorConfig {
        DescriptorConfig::GradHist { grid: 4, bins: 8 }
    }

    fn kp(x: f32, y: f32, scale: f32, angle: f32) -> Keypoint {
        Keypoint {
            x,
            y,
            scale,
            angle: Some(angle),
            response: 1.0,
        }
    }

    #[test]
    fn constant_patch_gives_zero_vector() {
        let img = GrayImage::constant(96, 96, 120);
        let d = gradhist_describe(&img, &[kp(48.0, 48.0, 3.0, 0.0)], &cfg()).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.float(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_is_one_or_zero() {
        let mut rng = Rng::seed_from(31);
        let img = GrayImage::from_fn(128, 128, |_, _| (rng.next_u64() % 256) as u8);
        let kps = [
            kp(64.0, 64.0, 2.0, 0.3),
            kp(40.0, 80.0, 4.0, 1.2),
            kp(90.0, 30.0, 1.0, 5.0),
        ];
        let d = gradhist_describe(&img, &kps, &cfg()).unwrap();
        for i in 0..d.len() {
            let norm: f32 = d.float(i).iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!(
                (norm - 1.0).abs() < 1e-4 || norm == 0.0,
                "descriptor {i} norm {norm}"
            );
        }
    }

    #[test]
    fn rotation_compensation_on_synthetic_patch() {
        // A smooth blob constellation and its 90-degree rotated copy with
        // keypoint angles 0 and pi/2: descriptors must agree within an L2
        // distance of 0.2.
        let blobs = [
            (60.0f32, 40.0f32, 9.0f32),
            (40.0, 70.0, 7.0),
            (75.0, 72.0, 5.0),
        ];
        let base = GrayImage::from_fn(112, 112, |x, y| {
            let mut acc = 20.0f32;
            for &(bx, by, s) in &blobs {
                let dx = x as f32 - bx;
                let dy = y as f32 - by;
                acc += 200.0 * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            }
            acc.min(255.0) as u8
        });
        // Rotate by 90 degrees around the patch center (exact pixel remap).
        let n = 112usize;
        let rotated = GrayImage::from_fn(n, n, |x, y| base.get(y, n - 1 - x));

        let c = ((n / 2) - 1) as f32 + 0.5; // rotation fixed point for the exact remap
        let d0 = gradhist_describe(&base, &[kp(c, c, 6.0, 0.0)], &cfg()).unwrap();
        let d1 = gradhist_describe(
            &rotated,
            &[kp(c, c, 6.0, std::f32::consts::FRAC_PI_2)],
            &cfg(),
        )
        .unwrap();
        let dist: f32 = d0
            .float(0)
            .iter()
            .zip(d1.float(0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt();
        assert!(dist < 0.2, "rotation-compensated distance {dist}");
    }

    #[test]
    fn border_patches_dropped() {
        let img = GrayImage::constant(64, 64, 7);
        let d = gradhist_describe(&img, &[kp(3.0, 3.0, 4.0, 0.0)], &cfg()).unwrap();
        assert_eq!(d.len(), 0);
    }
}
