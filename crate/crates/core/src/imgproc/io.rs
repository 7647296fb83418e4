//! Image file readers and writers: PGM (P2 ASCII, P5 binary) and PNG
//! (8-bit gray and RGB). PGM P5 is also the debug dump format.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

/// ITU-R 601 luma, rounded half-up.
fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    (v + 0.5).floor().min(255.0) as u8
}

/// Load a grayscale image from a PGM (P2/P5) or PNG file. Color inputs
/// are converted with ITU-R 601 luma coefficients.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat(path.to_path_buf()))
    }
}

/// Write a binary (P5) PGM.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(img.pixels().len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())
        .expect("in-memory write cannot fail");
    out.extend_from_slice(img.pixels());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct PgmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmTokens<'a> {
    /// Next whitespace-separated token, skipping `#` comments.
    fn next(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn next_usize(&mut self) -> Option<usize> {
        let tok = self.next()?;
        std::str::from_utf8(tok).ok()?.parse().ok()
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<GrayImage> {
    let corrupt = |reason: &str| Error::CorruptImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let binary = bytes.starts_with(b"P5");
    let mut toks = PgmTokens {
        bytes,
        pos: 2, // past the magic
    };
    let width = toks.next_usize().ok_or_else(|| corrupt("missing width"))?;
    let height = toks.next_usize().ok_or_else(|| corrupt("missing height"))?;
    let maxval = toks.next_usize().ok_or_else(|| corrupt("missing maxval"))?;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(corrupt("zero dimension or maxval"));
    }
    if maxval > 255 {
        // 16-bit PGM
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let n = width * height;
    let data = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = toks.pos + 1;
        if start + n > bytes.len() {
            return Err(corrupt("truncated pixel data"));
        }
        bytes[start..start + n].to_vec()
    } else {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = toks
                .next_usize()
                .ok_or_else(|| corrupt("truncated pixel data"))?;
            if v > maxval {
                return Err(corrupt("pixel value exceeds maxval"));
            }
            data.push(v as u8);
        }
        data
    };
    GrayImage::new(width, height, data)
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<GrayImage> {
    let corrupt = |reason: String| Error::CorruptImage {
        path: path.to_path_buf(),
        reason,
    };
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| corrupt(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let raw = &buf[..info.buffer_size()];
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => raw.to_vec(),
        png::ColorType::GrayscaleAlpha => raw.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => raw
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Rgba => raw
            .chunks_exact(4)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    if data.len() != w * h {
        return Err(corrupt(format!(
            "decoded {} pixels for {w}x{h} image",
            data.len()
        )));
    }
    GrayImage::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_roundtrip_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        fs::write(&p, "P2\n2 2\n255\n0 255\n255 0\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 255, 0]);
    }

    #[test]
    fn p2_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        fs::write(&p, "P2\n# a comment\n2 1\n# another\n100\n7 99\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.pixels(), &[7, 99]);
    }

    #[test]
    fn p5_save_load_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.pgm");
        let img = GrayImage::from_fn(13, 7, |x, y| ((x * 31 + y * 7) % 256) as u8);
        save_pgm(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn luma_rounding() {
        // 0.299*100 + 0.587*150 + 0.114*200 = 140.75 -> 141 half-up
        assert_eq!(luma(100, 150, 200), 141);
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
    }

    #[test]
    fn png_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let gray_path = dir.path().join("g.png");
        write_png(
            &gray_path,
            3,
            2,
            png::ColorType::Grayscale,
            &[1, 2, 3, 4, 5, 6],
        );
        let img = load_image(&gray_path).unwrap();
        assert_eq!(img.pixels(), &[1, 2, 3, 4, 5, 6]);

        let rgb_path = dir.path().join("c.png");
        let mut px = Vec::new();
        for _ in 0..4 {
            px.extend_from_slice(&[255, 255, 255]);
        }
        write_png(&rgb_path, 2, 2, png::ColorType::Rgb, &px);
        let img = load_image(&rgb_path).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 255));

        let rgb2 = dir.path().join("c2.png");
        write_png(&rgb2, 1, 1, png::ColorType::Rgb, &[100, 150, 200]);
        assert_eq!(load_image(&rgb2).unwrap().pixels(), &[141]);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        match load_image(dir.path().join("nope.pgm")) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("nope.pgm")),
            other => panic!("expected MissingFile, got {other:?}"),
        }

        let junk = dir.path().join("junk.bin");
        fs::write(&junk, b"GIF89a...").unwrap();
        assert!(matches!(
            load_image(&junk),
            Err(Error::UnsupportedFormat(_))
        ));

        let broken = dir.path().join("broken.pgm");
        fs::write(&broken, "P2\n2 2\n255\n1 2 3\n").unwrap();
        assert!(matches!(
            load_image(&broken),
            Err(Error::CorruptImage { .. })
        ));
    }

    fn write_png(path: &Path, w: u32, h: u32, color: png::ColorType, data: &[u8]) {
        let file = fs::File::create(path).unwrap();
        let mut enc = png::Encoder::new(file, w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().unwrap();
        writer.write_image_data(data).unwrap();
    }
}
