//! FAST segment-test corner detector (FAST-9).

use super::{sort_and_truncate, Keypoint, FAST_PATCH_SCALE};
use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// The 16-pixel Bresenham circle of radius 3, clockwise from the top.
pub(crate) const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum contiguous arc length for a corner.
const ARC: usize = 9;

/// Longest circular run of set positions in `mask`, returned as
/// (length, start index). Ties resolve to the earliest start.
fn longest_run(mask: &[bool; 16]) -> (usize, usize) {
    if mask.iter().all(|&m| m) {
        return (16, 0);
    }
    let mut best_len = 0;
    let mut best_start = 0;
    let mut run = 0;
    // Doubling the index range handles wrap-around runs.
    for i in 0..32 {
        if mask[i % 16] {
            run += 1;
            if run > best_len && run <= 16 {
                best_len = run;
                best_start = (i + 1 - run) % 16;
            }
        } else {
            run = 0;
        }
    }
    (best_len, best_start)
}

/// Segment-test response at a pixel: the sum of |circle - center| over the
/// qualifying contiguous arc, or 0.0 when the pixel is not a corner.
fn segment_response(img: &GrayImage, x: usize, y: usize, threshold: u8) -> f32 {
    let c = img.get(x, y) as i32;
    let t = threshold as i32;
    let mut values = [0i32; 16];
    let mut bright = [false; 16];
    let mut dark = [false; 16];
    for (i, (dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) as i32;
        values[i] = v;
        bright[i] = v > c + t;
        dark[i] = v < c - t;
    }
    // At most one arc of length >= 9 can exist (two would need 18+ slots).
    for mask in [&bright, &dark] {
        let (len, start) = longest_run(mask);
        if len >= ARC {
            let mut sum = 0i32;
            for k in 0..len {
                sum += (values[(start + k) % 16] - c).abs();
            }
            return sum as f32;
        }
    }
    0.0
}

/// Detect FAST-9 corners.
///
/// A pixel is a corner when at least 9 contiguous pixels of its radius-3
/// Bresenham circle are all brighter than center+threshold or all darker
/// than center-threshold. With `nms` on, only strict 3x3 response maxima
/// survive. Results are sorted strongest-first and truncated to
/// `max_keypoints`. The 3-pixel border is excluded.
pub fn fast_detect(
    img: &GrayImage,
    threshold: u8,
    nms: bool,
    max_keypoints: usize,
) -> Result<Vec<Keypoint>> {
    if !(1..=254).contains(&threshold) {
        return Err(Error::InvalidParam(format!(
            "FAST threshold must be in [1, 254], got {threshold}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if w < 7 || h < 7 {
        return Err(Error::ImageTooSmall(format!(
            "FAST needs at least 7x7, got {w}x{h}"
        )));
    }

    let mut response = vec![0.0f32; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            response[y * w + x] = segment_response(img, x, y, threshold);
        }
    }

    let mut kps = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let r = response[y * w + x];
            if r <= 0.0 {
                continue;
            }
            if nms {
                let mut is_max = true;
                'outer: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let n = response[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                        if n >= r {
                            is_max = false;
                            break 'outer;
                        }
                    }
                }
                if !is_max {
                    continue;
                }
            }
            kps.push(Keypoint {
                x: x as f32,
                y: y as f32,
                scale: FAST_PATCH_SCALE,
                angle: None,
                response: r,
            });
        }
    }
    Ok(sort_and_truncate(kps, max_keypoints))
}
