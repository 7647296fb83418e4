//! Local binary patterns: a global texture descriptor built from
//! uniform-pattern histograms over a spatial grid.

use super::{DescriptorConfig, DescriptorPayload, DescriptorSet, Keypoint};
use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// Number of histogram bins: 58 uniform 8-bit patterns plus one bin
/// collecting every non-uniform pattern.
pub const LBP_BINS: usize = 59;

/// 8 neighbors in circular order, 45-degree steps starting east.
const NEIGHBOR_DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Map each byte to its uniform-pattern bin: patterns with at most two
/// circular bit transitions get their own bin (in ascending byte order),
/// everything else shares the last bin.
pub(crate) fn uniform_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    for b in 0..=255u8 {
        let transitions = (b ^ b.rotate_left(1)).count_ones();
        if transitions <= 2 {
            table[b as usize] = next;
            next += 1;
        } else {
            table[b as usize] = (LBP_BINS - 1) as u8;
        }
    }
    debug_assert_eq!(next as usize, LBP_BINS - 1);
    table
}

/// LBP code of an interior pixel: bit i set iff neighbor i >= center.
fn code_at(img: &GrayImage, x: usize, y: usize, radius: i64) -> u8 {
    let c = img.get(x, y);
    let mut code = 0u8;
    for (i, (dx, dy)) in NEIGHBOR_DIRS.iter().enumerate() {
        let v = img.get(
            (x as i64 + dx * radius) as usize,
            (y as i64 + dy * radius) as usize,
        );
        if v >= c {
            code |= 1 << i;
        }
    }
    code
}

/// Describe a whole view with concatenated per-cell LBP histograms.
///
/// Every interior pixel's 8-neighbor comparison byte is mapped through the
/// uniform-pattern table; the image is divided into a grid x grid lattice
/// of cells, each cell's 59-bin histogram is L1-normalized, and the cells
/// are concatenated into one float descriptor of 59*grid^2 dims. The
/// result is exactly one descriptor for the whole view.
pub fn lbp_describe(img: &GrayImage, cfg: &DescriptorConfig) -> Result<DescriptorSet> {
    cfg.validate()?;
    let (radius, grid) = match cfg {
        DescriptorConfig::Lbp { radius, grid, .. } => (*radius as i64, *grid),
        other => {
            return Err(Error::InvalidParam(format!(
                "lbp_describe called with {other:?}"
            )))
        }
    };
    let (w, h) = (img.width(), img.height());
    if w < 8 * grid || h < 8 * grid {
        return Err(Error::ImageTooSmall(format!(
            "LBP with a {grid}x{grid} grid needs cells of at least 8x8, got {w}x{h}"
        )));
    }

    let table = uniform_table();
    let mut hists = vec![0u64; LBP_BINS * grid * grid];
    let r = radius as usize;
    for y in r..h - r {
        for x in r..w - r {
            let bin = table[code_at(img, x, y, radius) as usize] as usize;
            let cell_x = x * grid / w;
            let cell_y = y * grid / h;
            hists[(cell_y * grid + cell_x) * LBP_BINS + bin] += 1;
        }
    }

    let mut data = Vec::with_capacity(hists.len());
    for cell in 0..grid * grid {
        let slice = &hists[cell * LBP_BINS..(cell + 1) * LBP_BINS];
        let total: u64 = slice.iter().sum();
        if total == 0 {
            data.extend(std::iter::repeat_n(0.0f32, LBP_BINS));
        } else {
            data.extend(slice.iter().map(|&c| c as f32 / total as f32));
        }
    }

    let center = Keypoint {
        x: w as f32 / 2.0,
        y: h as f32 / 2.0,
        scale: (w.min(h) as f32) / 2.0,
        angle: None,
        response: 0.0,
    };
    Ok(DescriptorSet {
        payload: DescriptorPayload::Float {
            dims: LBP_BINS * grid * grid,
            data,
        },
        keypoints: vec![center],
    })
}
