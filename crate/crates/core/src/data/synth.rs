//! Deterministic synthetic dataset generator.
//!
//! Three instance families create genuinely different pipeline affinities,
//! which is what gives typology clustering real structure to find:
//!
//! - `Textured`: smooth private blob fields plus sub-pixel-scale grain.
//!   The instance signature is the blob constellation, readable by
//!   scale-adapted gradient windows but mostly out of reach of fixed-size
//!   binary patches; the grain keeps raw-pixel segment tests firing so
//!   every view stays matchable.
//! - `Shape`: soft-edged gears with a fixed tooth count whose identity
//!   lives in tiny flank nicks (visible to point samples, invisible to
//!   pooled gradient bins) plus family-shared decoy blob clusters.
//! - `Mixed`: a star filled with high-contrast fine texture; most
//!   pipelines get some grip.
//!
//! Everything is drawn from per-instance streams derived from the spec
//! seed, so equal specs give byte-identical datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::imgproc::{save_pgm, GrayImage};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Textured,
    Shape,
    Mixed,
}

/// Per-view rigid transform and noise ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformRanges {
    /// Rotation in radians, drawn uniformly from [lo, hi].
    pub rotation: (f32, f32),
    /// Isotropic scale factor range.
    pub scale: (f32, f32),
    /// Max absolute translation in pixels (each axis independently).
    pub translation: f32,
    /// Additive Gaussian noise sigma range, in intensity levels.
    pub noise_sigma: (f32, f32),
}

impl Default for TransformRanges {
    fn default() -> Self {
        TransformRanges {
            rotation: (0.0, std::f32::consts::TAU),
            scale: (0.8, 1.2),
            translation: 10.0,
            noise_sigma: (0.0, 8.0),
        }
    }
}

/// Synthetic dataset description; the seed fixes every byte of output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_instances: usize,
    pub views_per_instance: usize,
    pub image_size: usize,
    /// One family per instance; empty cycles textured, shape, mixed.
    pub families: Vec<Family>,
    pub transforms: TransformRanges,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_instances: 3,
            views_per_instance: 10,
            image_size: 256,
            families: Vec::new(),
            transforms: TransformRanges::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 || self.views_per_instance == 0 {
            return Err(Error::Config(
                "n_instances and views_per_instance must be >= 1".into(),
            ));
        }
        if self.image_size < 64 {
            return Err(Error::Config(format!(
                "image_size must be >= 64, got {}",
                self.image_size
            )));
        }
        if !self.families.is_empty() && self.families.len() != self.n_instances {
            return Err(Error::Config(format!(
                "families lists {} entries for {} instances",
                self.families.len(),
                self.n_instances
            )));
        }
        let t = &self.transforms;
        for (name, (lo, hi)) in [
            ("rotation", t.rotation),
            ("scale", t.scale),
            ("noise_sigma", t.noise_sigma),
        ] {
            if lo > hi {
                return Err(Error::Config(format!("{name} range has lo > hi")));
            }
        }
        if t.scale.0 <= 0.0 {
            return Err(Error::Config("scale range must be positive".into()));
        }
        if t.translation < 0.0 || t.noise_sigma.0 < 0.0 {
            return Err(Error::Config(
                "translation and noise must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn family_of(&self, instance: usize) -> Family {
        if self.families.is_empty() {
            [Family::Textured, Family::Shape, Family::Mixed][instance % 3]
        } else {
            self.families[instance]
        }
    }
}

/// Smoothstep-interpolated lattice value noise in [0, 1].
struct ValueNoise {
    lattice: Vec<f32>,
    cells: usize,
    cell_px: f32,
}

impl ValueNoise {
    fn new(rng: &mut Rng, canvas: usize, cell_px: f32) -> Self {
        let cells = (canvas as f32 / cell_px).ceil() as usize + 2;
        let lattice = (0..cells * cells).map(|_| rng.next_f64() as f32).collect();
        ValueNoise {
            lattice,
            cells,
            cell_px,
        }
    }

    fn at(&self, x: f32, y: f32) -> f32 {
        let gx = x / self.cell_px;
        let gy = y / self.cell_px;
        let x0 = (gx.floor() as usize).min(self.cells - 2);
        let y0 = (gy.floor() as usize).min(self.cells - 2);
        let sm = |t: f32| t * t * (3.0 - 2.0 * t);
        let fx = sm((gx - x0 as f32).clamp(0.0, 1.0));
        let fy = sm((gy - y0 as f32).clamp(0.0, 1.0));
        let l = |cx: usize, cy: usize| self.lattice[cy * self.cells + cx];
        l(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + l(x0 + 1, y0) * fx * (1.0 - fy)
            + l(x0, y0 + 1) * (1.0 - fx) * fy
            + l(x0 + 1, y0 + 1) * fx * fy
    }
}

/// An irregular star polygon: alternating jittered outer/inner radii.
struct StarShape {
    /// Vertices in order, relative to the canvas center.
    vertices: Vec<(f32, f32)>,
}

impl StarShape {
    fn new(rng: &mut Rng, outer_radius: f32) -> Self {
        // Gears with a fixed tooth depth: up close every tip is the same
        // generic wedge, and under heavy blur every instance smooths into
        // the same ring. Instance identity lives in the tooth layout and
        // in tiny flank nicks; the nicks are a few pixels wide, so point
        // samples at full resolution resolve them while pooled gradient
        // bins and scale-space detection smooth straight over them.
        // Every instance has the same tooth count and depth: the coarse
        // silhouette carries no identity at all.
        let teeth = 9;
        let inner_ratio = 0.62;
        let phase = rng.uniform(0.0, std::f64::consts::TAU) as f32;
        let mut vertices: Vec<(f32, f32)> = Vec::with_capacity(teeth * 10);
        let push = |verts: &mut Vec<(f32, f32)>, angle: f32, radius: f32| {
            verts.push((radius * angle.cos(), radius * angle.sin()));
        };
        let tau = std::f32::consts::TAU;
        for k in 0..teeth * 2 {
            let jitter_a = (rng.next_f64() as f32 - 0.5) * 0.5 / teeth as f32;
            let angle = phase + (k as f32 / (2.0 * teeth as f32) + jitter_a) * tau;
            let jitter_r = 0.95 + 0.10 * rng.next_f64() as f32;
            let radius = if k % 2 == 0 {
                outer_radius * jitter_r
            } else {
                outer_radius * inner_ratio * jitter_r
            };
            // Flank nick between this vertex and the next: a short radial
            // notch at an instance-specific position along the flank.
            let next_angle = phase + ((k + 1) as f32 / (2.0 * teeth as f32)) * tau;
            let next_radius = if k % 2 == 0 {
                outer_radius * inner_ratio
            } else {
                outer_radius
            };
            push(&mut vertices, angle, radius);
            let frac = 0.3 + 0.4 * rng.next_f64() as f32;
            let nick_depth = (4.5 + 3.0 * rng.next_f64() as f32) / outer_radius;
            // Angular width chosen so the notch spans a few pixels at the
            // gear rim.
            let nick_width = 7.0 / outer_radius;
            let a0 = angle + (next_angle - angle) * frac;
            let r0 = radius + (next_radius - radius) * frac;
            push(&mut vertices, a0, r0);
            push(
                &mut vertices,
                a0 + 0.5 * nick_width,
                r0 * (1.0 - nick_depth),
            );
            push(&mut vertices, a0 + nick_width, r0);
        }
        StarShape { vertices }
    }

    /// Ray-casting point-in-polygon, offsets relative to center.
    fn contains(&self, px: f32, py: f32) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = self.vertices[i];
            let (xj, yj) = self.vertices[j];
            if (yi > py) != (yj > py) {
                let x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi;
                if px < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// 2x2 supersampled coverage in [0, 1]: cheap anti-aliasing that keeps
    /// tips sharp enough for segment-test corners.
    fn coverage(&self, px: f32, py: f32) -> f32 {
        let mut hits = 0;
        for (ox, oy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
            if self.contains(px + ox, py + oy) {
                hits += 1;
            }
        }
        hits as f32 / 4.0
    }
}

/// Base-canvas intensity (texture amplitude, shape contrast) constants.
/// Textures are smooth large-cell blob fields: strong enough for
/// scale-space contrast thresholds, gentle enough that segment-test
/// corners stay scarce. Shapes are high-contrast so segment tests fire
/// hard at the teeth.
const TEXTURE_MID: f32 = 128.0;
const TEXTURE_AMP_LO: f32 = 88.0;
const TEXTURE_AMP_SPAN: f32 = 12.0;
const SHAPE_BG: f32 = 175.0;
const SHAPE_FG: f32 = 115.0;
const MIXED_BG: f32 = 232.0;

/// Soft-focus a shape canvas: spreads silhouette edges over a few
/// pixels, which starves fine-scale blob detection of sharp structure
/// without touching segment tests (the contrast is ample) or comparison
/// sampling (which pre-smooths anyway).
fn soften(canvas: usize, data: Vec<f32>) -> Vec<f32> {
    let img =
        crate::imgproc::ImageF32::new(canvas, canvas, data.iter().map(|v| v / 255.0).collect());
    crate::imgproc::blur_f32(&img, 0.9)
        .data()
        .iter()
        .map(|v| v * 255.0)
        .collect()
}

/// Decoy blob clusters for the shape family: the same smooth clusters are
/// stamped onto every shape instance at instance-specific positions and
/// orientations. Their gradients are too gentle for segment tests, but
/// scale-space detection picks them up and their neighborhoods match
/// confidently across instances, so blob-driven pipelines keep voting for
/// the wrong gear while the typology-level pool stays correct.
struct DecoyStamps {
    /// Per stamp: blob offsets and sigmas (dx, dy, sigma, gain).
    stamps: Vec<Vec<(f32, f32, f32, f32)>>,
}

impl DecoyStamps {
    const COUNT: usize = 3;
    const AMP: f32 = 46.0;

    /// Geometry comes from a family-shared stream: identical stamps for
    /// every shape instance of the dataset.
    fn family_shared(seed: u64) -> Self {
        let mut rng = Rng::derive(seed, 0x5a_de_c0_15);
        let stamps = (0..Self::COUNT)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        (
                            rng.uniform(-9.0, 9.0) as f32,
                            rng.uniform(-9.0, 9.0) as f32,
                            rng.uniform(4.5, 6.5) as f32,
                            if rng.next_f64() < 0.5 { -1.0 } else { 1.0 },
                        )
                    })
                    .collect()
            })
            .collect();
        DecoyStamps { stamps }
    }

    /// Add each stamp at an instance-specific position and rotation
    /// inside the gear body.
    fn apply(&self, out: &mut [f32], canvas: usize, rng: &mut Rng, body_radius: f32) {
        let c = canvas as f32 / 2.0;
        for stamp in &self.stamps {
            let angle = rng.uniform(0.0, std::f64::consts::TAU) as f32;
            let dist = rng.uniform(0.0, (body_radius * 0.55) as f64) as f32;
            let rot = rng.uniform(0.0, std::f64::consts::TAU) as f32;
            let (cx, cy) = (c + dist * angle.cos(), c + dist * angle.sin());
            for &(dx, dy, sigma, gain) in stamp {
                let bx = cx + dx * rot.cos() - dy * rot.sin();
                let by = cy + dx * rot.sin() + dy * rot.cos();
                let reach = (3.0 * sigma).ceil() as i64;
                for oy in -reach..=reach {
                    for ox in -reach..=reach {
                        let px = bx as i64 + ox;
                        let py = by as i64 + oy;
                        if px < 0 || py < 0 || px >= canvas as i64 || py >= canvas as i64 {
                            continue;
                        }
                        let fx = px as f32 - bx;
                        let fy = py as f32 - by;
                        let w = (-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp();
                        out[py as usize * canvas + px as usize] += gain * Self::AMP * w;
                    }
                }
            }
        }
    }
}

fn render_base(
    family: Family,
    rng: &mut Rng,
    decoys: &DecoyStamps,
    shared_band: &ValueNoise,
    canvas: usize,
) -> Vec<f32> {
    let c = canvas as f32 / 2.0;
    match family {
        Family::Textured => {
            // Three layers with different audiences. The private coarse
            // blobs are the instance signature, readable only by windows
            // spanning several blobs. The fine grain sits below the
            // comparison pre-smoothing scale, so descriptors never see
            // it; raw-pixel segment tests fire on it everywhere, keeping
            // every view matchable. A horizontal band through the center
            // is swapped for a field shared by all textured instances:
            // patches inside the band match confidently across
            // instances, while windows wide enough to straddle the band
            // still reach private content and resolve the instance.
            let cell = 15.0 + 2.0 * rng.below(3) as f32; // 15..19 px blobs
            let amp = TEXTURE_AMP_LO + TEXTURE_AMP_SPAN * rng.next_f64() as f32;
            let coarse = ValueNoise::new(rng, canvas, cell);
            let fine = ValueNoise::new(rng, canvas, 5.0);
            let mut out = Vec::with_capacity(canvas * canvas);
            for y in 0..canvas {
                // 1 inside the 28px band core, fading to 0 over 16px.
                let d = (y as f32 - c).abs();
                let band = if d < 14.0 {
                    1.0
                } else if d < 30.0 {
                    let t = (30.0 - d) / 16.0;
                    t * t * (3.0 - 2.0 * t)
                } else {
                    0.0
                };
                for x in 0..canvas {
                    let private = coarse.at(x as f32, y as f32);
                    let shared = shared_band.at(x as f32, y as f32);
                    let v = private * (1.0 - band) + shared * band;
                    let grain = fine.at(x as f32, y as f32) - 0.5;
                    out.push(TEXTURE_MID + amp * (v - 0.5) * 2.0 + 22.0 * grain);
                }
            }
            out
        }
        Family::Shape => {
            // A fixed outer radius across instances: at coarse blur all
            // gears smooth into the same ring, so instance identity lives
            // in the fine tooth layout only.
            let radius = canvas as f32 * 0.115;
            let star = StarShape::new(rng, radius);
            let mut out = Vec::with_capacity(canvas * canvas);
            for y in 0..canvas {
                for x in 0..canvas {
                    let cov = star.coverage(x as f32 - c, y as f32 - c);
                    out.push(SHAPE_BG + (SHAPE_FG - SHAPE_BG) * cov);
                }
            }
            decoys.apply(&mut out, canvas, rng, radius * 0.62);
            soften(canvas, out)
        }
        Family::Mixed => {
            let radius = canvas as f32 * 0.13 * (0.9 + 0.2 * rng.next_f64() as f32);
            let star = StarShape::new(rng, radius);
            let cell = 9.0 + rng.below(4) as f32;
            let noise = ValueNoise::new(rng, canvas, cell);
            let mut out = Vec::with_capacity(canvas * canvas);
            for y in 0..canvas {
                for x in 0..canvas {
                    let cov = star.coverage(x as f32 - c, y as f32 - c);
                    let tex = 60.0 + 130.0 * noise.at(x as f32, y as f32);
                    out.push(MIXED_BG + (tex - MIXED_BG) * cov);
                }
            }
            out
        }
    }
}

fn sample_base(base: &[f32], canvas: usize, x: f32, y: f32, bg: f32) -> f32 {
    if x < 0.0 || y < 0.0 || x > (canvas - 1) as f32 || y > (canvas - 1) as f32 {
        return bg;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(canvas - 1);
    let y1 = (y0 + 1).min(canvas - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    base[y0 * canvas + x0] * (1.0 - fx) * (1.0 - fy)
        + base[y0 * canvas + x1] * fx * (1.0 - fy)
        + base[y1 * canvas + x0] * (1.0 - fx) * fy
        + base[y1 * canvas + x1] * fx * fy
}

struct ViewTransform {
    rotation: f32,
    scale: f32,
    tx: f32,
    ty: f32,
    noise_sigma: f32,
}

fn draw_transform(rng: &mut Rng, ranges: &TransformRanges) -> ViewTransform {
    ViewTransform {
        rotation: rng.uniform(ranges.rotation.0 as f64, ranges.rotation.1 as f64) as f32,
        scale: rng.uniform(ranges.scale.0 as f64, ranges.scale.1 as f64) as f32,
        tx: rng.uniform(-(ranges.translation as f64), ranges.translation as f64) as f32,
        ty: rng.uniform(-(ranges.translation as f64), ranges.translation as f64) as f32,
        noise_sigma: rng.uniform(ranges.noise_sigma.0 as f64, ranges.noise_sigma.1 as f64) as f32,
    }
}

fn render_view(
    base: &[f32],
    canvas: usize,
    size: usize,
    t: &ViewTransform,
    bg: f32,
    rng: &mut Rng,
) -> GrayImage {
    let cv = (size as f32 - 1.0) / 2.0;
    let cb = (canvas as f32 - 1.0) / 2.0;
    let (sin, cos) = (t.rotation.sin(), t.rotation.cos());
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            // Inverse rigid map back into the base canvas.
            let dx = (x as f32 - cv - t.tx) / t.scale;
            let dy = (y as f32 - cv - t.ty) / t.scale;
            let sx = cb + dx * cos + dy * sin;
            let sy = cb - dx * sin + dy * cos;
            let mut v = sample_base(base, canvas, sx, sy, bg);
            if t.noise_sigma > 0.0 {
                v += (rng.normal() * t.noise_sigma as f64) as f32;
            }
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(size, size, data).expect("view buffer sized correctly")
}

/// Generate a dataset under `out/<label>/<view>.pgm` and load it back.
pub fn generate(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<Dataset> {
    spec.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let canvas = spec.image_size * 2;
    let decoys = DecoyStamps::family_shared(spec.seed);
    let shared_band = {
        let mut band_rng = Rng::derive(spec.seed, 0xbad0_0001);
        ValueNoise::new(&mut band_rng, canvas, 17.0)
    };
    for i in 0..spec.n_instances {
        let label = format!("part{i:02}");
        let dir = out.join(&label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let family = spec.family_of(i);
        let mut rng = Rng::derive(spec.seed, i as u64);
        let base = render_base(family, &mut rng, &decoys, &shared_band, canvas);
        let bg = match family {
            Family::Textured => TEXTURE_MID,
            Family::Shape => SHAPE_BG,
            Family::Mixed => MIXED_BG,
        };
        for v in 0..spec.views_per_instance {
            let t = draw_transform(&mut rng, &spec.transforms);
            let img = render_view(&base, canvas, spec.image_size, &t, bg, &mut rng);
            save_pgm(&img, dir.join(format!("v{v:03}.pgm")))?;
        }
    }
    super::load(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_instances: 3,
            views_per_instance: 2,
            image_size: 64,
            families: Vec::new(),
            transforms: TransformRanges::default(),
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let ds1 = generate(&small_spec(), d1.path()).unwrap();
        let ds2 = generate(&small_spec(), d2.path()).unwrap();
        assert_eq!(ds1.content_hash, ds2.content_hash);

        let mut other = small_spec();
        other.seed = 8;
        let d3 = tempfile::tempdir().unwrap();
        let ds3 = generate(&other, d3.path()).unwrap();
        assert_ne!(ds1.content_hash, ds3.content_hash);
    }

    #[test]
    fn file_count_matches_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_instances: 7,
            views_per_instance: 5,
            image_size: 64,
            ..small_spec()
        };
        let ds = generate(&spec, dir.path()).unwrap();
        assert_eq!(ds.instances.len(), 7);
        assert_eq!(ds.total_views(), 35);
    }

    #[test]
    fn degenerate_ranges_give_identical_views() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            transforms: TransformRanges {
                rotation: (0.0, 0.0),
                scale: (1.0, 1.0),
                translation: 0.0,
                noise_sigma: (0.0, 0.0),
            },
            ..small_spec()
        };
        let ds = generate(&spec, dir.path()).unwrap();
        for label in &ds.instances {
            let views = &ds.views[label];
            let first = std::fs::read(&views[0]).unwrap();
            for v in &views[1..] {
                assert_eq!(first, std::fs::read(v).unwrap(), "label {label}");
            }
        }
    }

    #[test]
    fn views_have_declared_size_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small_spec(), dir.path()).unwrap();
        let vs = ds.load_views().unwrap();
        for e in &vs.entries {
            assert_eq!(e.image.width(), 64);
            assert_eq!(e.image.height(), 64);
        }
    }

    #[test]
    fn family_cycling_and_explicit_lists() {
        let spec = small_spec();
        assert_eq!(spec.family_of(0), Family::Textured);
        assert_eq!(spec.family_of(1), Family::Shape);
        assert_eq!(spec.family_of(2), Family::Mixed);

        let mut explicit = small_spec();
        explicit.families = vec![Family::Shape, Family::Shape, Family::Textured];
        assert_eq!(explicit.family_of(0), Family::Shape);
        assert_eq!(explicit.family_of(2), Family::Textured);

        explicit.families.pop();
        assert!(explicit.validate().is_err());
    }

    #[test]
    fn bad_ranges_rejected() {
        let mut spec = small_spec();
        spec.transforms.scale = (1.2, 0.8);
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.transforms.scale = (0.0, 1.0);
        assert!(spec.validate().is_err());
    }
}
