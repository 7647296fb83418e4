//! Versioned binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TPLG"  magic
//! u16     format version (currently 1)
//! u32+b   pipeline spec, canonical JSON
//! u32     view count
//! per view:
//!   u32+b   label (UTF-8)
//!   u32     keypoint count
//!   per keypoint: f32 x, f32 y, f32 scale, u8 has_angle, f32 angle, f32 response
//!   u8      descriptor kind (0 binary, 1 float)
//!   u32     width (bits or dims)
//!   u32     descriptor count
//!   bytes   payload (count*width/8 bytes, or count*width little-endian f32)
//! ```

use std::path::Path;

use super::{build_model_from_features, hex_sha256, ModelIndex, PipelineSpec};
use crate::error::{Error, Result};
use crate::features::{DescriptorPayload, DescriptorSet, Keypoint};

pub const MAGIC: &[u8; 4] = b"TPLG";
pub const FORMAT_VERSION: u16 = 1;

fn write_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

impl ModelIndex {
    /// Serialize to the TPLG container format. Equal models (same inputs,
    /// configs and seeds) produce identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        write_block(&mut out, self.spec.canonical_json().as_bytes());
        out.extend_from_slice(&(self.views.len() as u32).to_le_bytes());
        for view in &self.views {
            write_block(&mut out, view.label.as_bytes());
            let set = &view.descriptors;
            out.extend_from_slice(&(set.keypoints.len() as u32).to_le_bytes());
            for kp in &set.keypoints {
                out.extend_from_slice(&kp.x.to_le_bytes());
                out.extend_from_slice(&kp.y.to_le_bytes());
                out.extend_from_slice(&kp.scale.to_le_bytes());
                out.push(kp.angle.is_some() as u8);
                out.extend_from_slice(&kp.angle.unwrap_or(0.0).to_le_bytes());
                out.extend_from_slice(&kp.response.to_le_bytes());
            }
            match &set.payload {
                DescriptorPayload::Binary { bits, data } => {
                    out.push(0u8);
                    out.extend_from_slice(&(*bits as u32).to_le_bytes());
                    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
                    out.extend_from_slice(data);
                }
                DescriptorPayload::Float { dims, data } => {
                    out.push(1u8);
                    out.extend_from_slice(&(*dims as u32).to_le_bytes());
                    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    /// Parse a TPLG container and rebuild the search index.
    pub fn from_bytes(bytes: &[u8]) -> Result<ModelIndex> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Container("bad magic, not a TPLG model".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Container(format!(
                "unsupported container version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let spec_json = r.block()?;
        let spec: PipelineSpec = serde_json::from_slice(spec_json)
            .map_err(|e| Error::Container(format!("bad pipeline spec: {e}")))?;
        spec.validate()?;
        let view_count = r.u32()? as usize;
        let mut features = Vec::with_capacity(view_count);
        for _ in 0..view_count {
            let label = String::from_utf8(r.block()?.to_vec())
                .map_err(|_| Error::Container("label is not UTF-8".into()))?;
            let kp_count = r.u32()? as usize;
            let mut keypoints = Vec::with_capacity(kp_count);
            for _ in 0..kp_count {
                let x = r.f32()?;
                let y = r.f32()?;
                let scale = r.f32()?;
                let has_angle = r.u8()? != 0;
                let angle = r.f32()?;
                let response = r.f32()?;
                keypoints.push(Keypoint {
                    x,
                    y,
                    scale,
                    angle: has_angle.then_some(angle),
                    response,
                });
            }
            let kind = r.u8()?;
            let width = r.u32()? as usize;
            let count = r.u32()? as usize;
            if count != kp_count {
                return Err(Error::Container(format!(
                    "descriptor count {count} does not match keypoint count {kp_count}"
                )));
            }
            let payload = match kind {
                0 => {
                    if !width.is_multiple_of(8) {
                        return Err(Error::Container(format!(
                            "binary width {width} is not a whole number of bytes"
                        )));
                    }
                    let data = r.take(count * width / 8)?.to_vec();
                    DescriptorPayload::Binary { bits: width, data }
                }
                1 => {
                    let raw = r.take(count * width * 4)?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    DescriptorPayload::Float { dims: width, data }
                }
                other => return Err(Error::Container(format!("unknown descriptor kind {other}"))),
            };
            features.push((label, DescriptorSet { payload, keypoints }));
        }
        build_model_from_features(&spec, features)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelIndex> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelIndex::from_bytes(&bytes)
    }

    /// Content hash of the serialized container.
    pub fn content_hash(&self) -> String {
        hex_sha256(&self.to_bytes())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Container("truncated container".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::GrayImage;
    use crate::pipeline::{build_model, default_registry, recognize};
    use crate::rng::Rng;

    fn views() -> Vec<(GrayImage, String)> {
        let mut seeds = Rng::seed_from(99);
        (0..4)
            .map(|i| {
                let mut rng = Rng::seed_from(seeds.next_u64());
                let img = GrayImage::from_fn(96, 96, |_, _| (rng.next_u64() % 256) as u8);
                (img, if i < 2 { "a".into() } else { "b".into() })
            })
            .collect()
    }

    #[test]
    fn roundtrip_preserves_recognition() {
        let reg = default_registry();
        for id in ["P2", "P3"] {
            let spec = reg.get(id).unwrap();
            let train = views();
            let model = build_model(spec, &train).unwrap();
            let restored = ModelIndex::from_bytes(&model.to_bytes()).unwrap();
            for (img, _) in &train {
                let a = recognize(&model, img).unwrap();
                let b = recognize(&restored, img).unwrap();
                assert_eq!(a.label, b.label, "pipeline {id}");
                assert_eq!(a.tally, b.tally, "pipeline {id}");
            }
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let reg = default_registry();
        let spec = reg.get("P4").unwrap();
        let train = views();
        let m1 = build_model(spec, &train).unwrap();
        let m2 = build_model(spec, &train).unwrap();
        assert_eq!(m1.to_bytes(), m2.to_bytes());
        assert_eq!(m1.content_hash(), m2.content_hash());
    }

    #[test]
    fn corrupt_containers_rejected() {
        let reg = default_registry();
        let spec = reg.get("P4").unwrap();
        let train = views();
        let bytes = build_model(spec, &train).unwrap().to_bytes();

        assert!(ModelIndex::from_bytes(&bytes[..10]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(ModelIndex::from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 0xff;
        assert!(ModelIndex::from_bytes(&bad_version).is_err());
    }
}
