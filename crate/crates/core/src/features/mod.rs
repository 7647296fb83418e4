//! Keypoint detection and descriptor extraction.
//!
//! Detectors locate interesting points in a view, descriptors encode their
//! neighborhoods as binary strings or float vectors. A pipeline pairs one
//! of each (plus a matcher); the configs here are the building blocks.

mod brief;
mod dog;
mod fast;
mod gradhist;
mod lbp;
mod orient;

pub use brief::{brief_describe, steered_brief_describe};
pub use dog::dog_detect;
pub use fast::fast_detect;
pub use gradhist::gradhist_describe;
pub use lbp::lbp_describe;
pub use orient::orient;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale assigned to FAST keypoints, which carry no intrinsic scale.
pub const FAST_PATCH_SCALE: f32 = 7.0;
/// Radius of the intensity-centroid disc used for orientation.
pub const ORIENT_RADIUS: i64 = 15;
/// BRIEF is noise sensitive; views are pre-smoothed with this sigma
/// before comparison sampling.
pub const BRIEF_PRESMOOTH_SIGMA: f32 = 2.0;
/// Base blur of the difference-of-Gaussians scale space.
pub const DOG_BASE_SIGMA: f32 = 1.6;

/// A located interest point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Sub-pixel x in base-image coordinates.
    pub x: f32,
    /// Sub-pixel y in base-image coordinates.
    pub y: f32,
    /// Patch radius proxy in pixels; always positive.
    pub scale: f32,
    /// Radians in [0, 2*pi), or None before orientation assignment.
    pub angle: Option<f32>,
    /// Detector score; higher is stronger.
    pub response: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorKind {
    Binary,
    Float,
}

/// Packed descriptor storage. Binary descriptors are bitstrings packed
/// LSB-first into bytes; float descriptors are contiguous vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DescriptorPayload {
    Binary { bits: usize, data: Vec<u8> },
    Float { dims: usize, data: Vec<f32> },
}

/// Descriptors for a view, one entry per surviving keypoint (global
/// descriptors carry exactly one entry and a synthetic center keypoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub payload: DescriptorPayload,
    /// Back-references: keypoints[i] produced descriptor i.
    pub keypoints: Vec<Keypoint>,
}

impl DescriptorSet {
    pub fn empty(kind: DescriptorKind, width: usize) -> Self {
        let payload = match kind {
            DescriptorKind::Binary => DescriptorPayload::Binary {
                bits: width,
                data: Vec::new(),
            },
            DescriptorKind::Float => DescriptorPayload::Float {
                dims: width,
                data: Vec::new(),
            },
        };
        DescriptorSet {
            payload,
            keypoints: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn kind(&self) -> DescriptorKind {
        match self.payload {
            DescriptorPayload::Binary { .. } => DescriptorKind::Binary,
            DescriptorPayload::Float { .. } => DescriptorKind::Float,
        }
    }

    /// Bits (binary) or dims (float) per descriptor.
    pub fn width(&self) -> usize {
        match self.payload {
            DescriptorPayload::Binary { bits, .. } => bits,
            DescriptorPayload::Float { dims, .. } => dims,
        }
    }

    pub fn binary(&self, i: usize) -> &[u8] {
        match &self.payload {
            DescriptorPayload::Binary { bits, data } => {
                let nb = bits / 8;
                &data[i * nb..(i + 1) * nb]
            }
            DescriptorPayload::Float { .. } => panic!("binary() on float descriptors"),
        }
    }

    pub fn float(&self, i: usize) -> &[f32] {
        match &self.payload {
            DescriptorPayload::Float { dims, data } => &data[i * dims..(i + 1) * dims],
            DescriptorPayload::Binary { .. } => panic!("float() on binary descriptors"),
        }
    }
}

/// Detector selection and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DetectorConfig {
    Fast {
        /// Intensity delta a circle pixel must clear relative to center.
        threshold: u8,
        /// Keep only strict 3x3 response maxima.
        nms: bool,
    },
    Dog {
        /// Minimum |DoG| value on [0,1] intensities.
        contrast_threshold: f32,
        /// Edge rejection ratio r; responses with tr^2/det > (r+1)^2/r drop.
        edge_ratio: f32,
        octaves: usize,
        scales_per_octave: usize,
    },
    /// No detector; only legal with a global descriptor.
    None,
}

/// Descriptor selection and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DescriptorConfig {
    Brief {
        n_bits: usize,
        patch_size: usize,
        sampling_seed: u64,
    },
    SteeredBrief {
        n_bits: usize,
        patch_size: usize,
        sampling_seed: u64,
    },
    Lbp {
        radius: usize,
        neighbors: usize,
        grid: usize,
    },
    GradHist {
        grid: usize,
        bins: usize,
    },
}

impl DescriptorConfig {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            DescriptorConfig::Brief { .. } | DescriptorConfig::SteeredBrief { .. } => {
                DescriptorKind::Binary
            }
            DescriptorConfig::Lbp { .. } | DescriptorConfig::GradHist { .. } => {
                DescriptorKind::Float
            }
        }
    }

    /// Global descriptors consume the whole view and need no detector.
    pub fn is_global(&self) -> bool {
        matches!(self, DescriptorConfig::Lbp { .. })
    }

    pub fn needs_angle(&self) -> bool {
        matches!(
            self,
            DescriptorConfig::SteeredBrief { .. } | DescriptorConfig::GradHist { .. }
        )
    }

    /// Descriptor width in bits (binary) or dims (float).
    pub fn width(&self) -> usize {
        match self {
            DescriptorConfig::Brief { n_bits, .. }
            | DescriptorConfig::SteeredBrief { n_bits, .. } => *n_bits,
            DescriptorConfig::Lbp { grid, .. } => 59 * grid * grid,
            DescriptorConfig::GradHist { grid, bins } => grid * grid * bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DescriptorConfig::Brief {
                n_bits, patch_size, ..
            }
            | DescriptorConfig::SteeredBrief {
                n_bits, patch_size, ..
            } => {
                if ![128, 256, 512].contains(n_bits) {
                    return Err(Error::InvalidParam(format!(
                        "BRIEF n_bits must be 128, 256 or 512, got {n_bits}"
                    )));
                }
                if *patch_size < 5 {
                    return Err(Error::InvalidParam(format!(
                        "BRIEF patch_size must be >= 5, got {patch_size}"
                    )));
                }
            }
            DescriptorConfig::Lbp {
                radius,
                neighbors,
                grid,
            } => {
                if *neighbors != 8 {
                    // The uniform-pattern table is precomputed for 8 neighbors.
                    return Err(Error::InvalidParam(format!(
                        "LBP supports exactly 8 neighbors, got {neighbors}"
                    )));
                }
                if *radius < 1 {
                    return Err(Error::InvalidParam("LBP radius must be >= 1".into()));
                }
                if *grid < 1 {
                    return Err(Error::InvalidParam("LBP grid must be >= 1".into()));
                }
            }
            DescriptorConfig::GradHist { grid, bins } => {
                if *grid < 1 || *bins < 2 {
                    return Err(Error::InvalidParam(format!(
                        "gradient histogram needs grid >= 1 and bins >= 2, got {grid}x{bins}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic keypoint ordering: strongest first, position breaking ties.
pub(crate) fn sort_and_truncate(mut kps: Vec<Keypoint>, max_keypoints: usize) -> Vec<Keypoint> {
    kps.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal))
            .then(
                a.scale
                    .partial_cmp(&b.scale)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    kps.truncate(max_keypoints);
    kps
}
