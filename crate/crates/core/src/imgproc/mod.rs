//! Raster substrate: grayscale images, Gaussian scale space and gradients.
//!
//! Pixels are stored as 8-bit intensities; filtering and scale-space work
//! happens on float working copies in [0, 1]. All convolutions replicate
//! the edge pixel at the border, so nothing ever reads out of bounds and
//! descriptor tests stay deterministic.

mod io;

pub use io::{load_image, save_pgm};

use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "pixel buffer length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel read with replicated edges; accepts out-of-range signed coords.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    /// Float working copy in [0, 1].
    pub fn to_f32(&self) -> ImageF32 {
        ImageF32 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    /// Bilinear intensity sample; coordinates clamped to the image.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let xf = x.clamp(0.0, (self.width - 1) as f32);
        let yf = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xf - x0 as f32;
        let fy = yf - y0 as f32;
        let p00 = self.get(x0, y0) as f32;
        let p10 = self.get(x1, y0) as f32;
        let p01 = self.get(x0, y1) as f32;
        let p11 = self.get(x1, y1) as f32;
        p00 * (1.0 - fx) * (1.0 - fy)
            + p10 * fx * (1.0 - fy)
            + p01 * (1.0 - fx) * fy
            + p11 * fx * fy
    }
}

/// Float image plane used for filtering and scale-space math.
#[derive(Clone, Debug)]
pub struct ImageF32 {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageF32 {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        ImageF32 {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Back to 8-bit, rounding half-up after clamping to [0, 1].
    pub fn to_u8(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&v| ((v.clamp(0.0, 1.0) as f64 * 255.0) + 0.5).floor() as u8)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// One level of a scale-space octave.
#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub image: ImageF32,
    /// Absolute blur sigma of this level, in base-image pixels.
    pub sigma: f32,
    /// Linear downsample factor relative to the base image (1, 2, 4, ...).
    pub downsample: usize,
}

/// Gaussian scale space: per octave a stack of increasingly blurred levels,
/// each octave at half the linear resolution of the previous one.
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub octaves: Vec<Vec<PyramidLevel>>,
    pub base_sigma: f32,
    pub scales_per_octave: usize,
}

/// Per-pixel gradient magnitude and orientation.
///
/// Gradients are computed on raw 8-bit intensities (not the [0,1] view),
/// so a ramp that climbs 10 levels per pixel has magnitude 10.
#[derive(Clone, Debug)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub magnitude: Vec<f32>,
    /// Radians in [0, 2*pi).
    pub orientation: Vec<f32>,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl GradientField {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn mag(&self, x: usize, y: usize) -> f32 {
        self.magnitude[y * self.width + x]
    }

    #[inline]
    pub fn ori(&self, x: usize, y: usize) -> f32 {
        self.orientation[y * self.width + x]
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let mut sum = 0.0f64;
    for i in -radius..=radius {
        let w = (-(i as f64) * (i as f64) / s2).exp();
        kernel.push(w);
        sum += w;
    }
    kernel.iter().map(|w| (w / sum) as f32).collect()
}

/// Separable Gaussian convolution on a float plane, replicated borders.
pub(crate) fn blur_f32(src: &ImageF32, sigma: f32) -> ImageF32 {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                let xs = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kw * src.data[y * w + xs];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                let ys = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kw * tmp[ys * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    ImageF32 {
        width: w,
        height: h,
        data: out,
    }
}

/// Gaussian blur of an 8-bit image. Kernel radius is ceil(3*sigma) and
/// borders replicate the edge pixel.
pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> Result<GrayImage> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    Ok(blur_f32(&img.to_f32(), sigma).to_u8())
}

fn decimate(src: &ImageF32) -> ImageF32 {
    let nw = src.width.div_ceil(2);
    let nh = src.height.div_ceil(2);
    let mut data = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            data.push(src.get(x * 2, y * 2));
        }
    }
    ImageF32 {
        width: nw,
        height: nh,
        data,
    }
}

/// Build a Gaussian scale space.
///
/// Octave `o` level `s` carries sigma `base_sigma * 2^(o + s/S)` with
/// `s = -1 ... S+1`, i.e. S+3 levels per octave so that extrema at every
/// integer scale have a layer above and below. Octaves are decimated by
/// taking every other pixel of the level whose sigma matches the next
/// octave's first level.
pub fn build_pyramid(
    img: &GrayImage,
    octaves: usize,
    scales_per_octave: usize,
    base_sigma: f32,
) -> Result<Pyramid> {
    if octaves < 1 {
        return Err(Error::InvalidParam("octaves must be >= 1".into()));
    }
    if scales_per_octave < 3 {
        return Err(Error::InvalidParam(format!(
            "scales_per_octave must be >= 3, got {scales_per_octave}"
        )));
    }
    if base_sigma.is_nan() || base_sigma <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "base_sigma must be positive, got {base_sigma}"
        )));
    }
    let min_dim = 16usize << (octaves - 1);
    if img.width() < min_dim || img.height() < min_dim {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image cannot hold {octaves} octaves (needs at least {min_dim} per side)",
            img.width(),
            img.height()
        )));
    }

    let s = scales_per_octave as f32;
    let sigma_of = |o: usize, level: usize| -> f32 {
        // level index 0 is s = -1
        let srel = level as f32 - 1.0;
        base_sigma * (o as f32 + srel / s).exp2()
    };

    let mut all_octaves = Vec::with_capacity(octaves);
    // The input is treated as unblurred; the first level is reached by a
    // single direct blur, every later level by an incremental one.
    let mut octave_base = blur_f32(&img.to_f32(), sigma_of(0, 0));
    for o in 0..octaves {
        let mut levels: Vec<PyramidLevel> = Vec::with_capacity(scales_per_octave + 3);
        levels.push(PyramidLevel {
            image: octave_base.clone(),
            sigma: sigma_of(o, 0),
            downsample: 1 << o,
        });
        for level in 1..scales_per_octave + 3 {
            let prev_sigma = sigma_of(o, level - 1);
            let next_sigma = sigma_of(o, level);
            // Incremental sigma is expressed in this octave's pixel grid.
            let factor = (1 << o) as f32;
            let inc = ((next_sigma / factor).powi(2) - (prev_sigma / factor).powi(2)).sqrt();
            let blurred = blur_f32(&levels[level - 1].image, inc);
            levels.push(PyramidLevel {
                image: blurred,
                sigma: next_sigma,
                downsample: 1 << o,
            });
        }
        if o + 1 < octaves {
            // sigma(o, S-1) == sigma(o+1, -1); level index S holds s = S-1.
            octave_base = decimate(&levels[scales_per_octave].image);
        }
        all_octaves.push(levels);
    }
    Ok(Pyramid {
        octaves: all_octaves,
        base_sigma,
        scales_per_octave,
    })
}

/// Central-difference gradients; border pixels use one-sided differences.
pub fn gradients(img: &GrayImage) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall(format!(
            "gradients need at least 3x3, got {w}x{h}"
        )));
    }
    let mut dx = vec![0.0f32; w * h];
    let mut dy = vec![0.0f32; w * h];
    let mut magnitude = vec![0.0f32; w * h];
    let mut orientation = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let gx = if x == 0 {
                img.get(1, y) as f32 - img.get(0, y) as f32
            } else if x == w - 1 {
                img.get(w - 1, y) as f32 - img.get(w - 2, y) as f32
            } else {
                (img.get(x + 1, y) as f32 - img.get(x - 1, y) as f32) / 2.0
            };
            let gy = if y == 0 {
                img.get(x, 1) as f32 - img.get(x, 0) as f32
            } else if y == h - 1 {
                img.get(x, h - 1) as f32 - img.get(x, h - 2) as f32
            } else {
                (img.get(x, y + 1) as f32 - img.get(x, y - 1) as f32) / 2.0
            };
            let i = y * w + x;
            dx[i] = gx;
            dy[i] = gy;
            magnitude[i] = (gx * gx + gy * gy).sqrt();
            orientation[i] = wrap_angle(gy.atan2(gx));
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        magnitude,
        orientation,
        dx,
        dy,
    })
}

/// Map an angle to [0, 2*pi).
pub fn wrap_angle(a: f32) -> f32 {
    let tau = std::f32::consts::TAU;
    let mut r = a % tau;
    if r < 0.0 {
        r += tau;
    }
    if r >= tau {
        r = 0.0;
    }
    r
}
