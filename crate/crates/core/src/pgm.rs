//! Portable graymap reader/writer (P2 textual and P5 binary), 8-bit depth.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "pixel buffer {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            maxval: 255,
            pixels,
        })
    }

    /// Pixels as reals in [0, 1], row-major.
    pub fn to_unit_reals(&self) -> Vec<f64> {
        let scale = 1.0 / self.maxval as f64;
        self.pixels.iter().map(|&p| p as f64 * scale).collect()
    }
}

fn ingestion(path: &Path, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Header tokenizer: whitespace-separated tokens with `#` comments running to
/// end of line.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn next_token(&mut self) -> Option<&'a [u8]> {
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

    fn next_usize(&mut self, path: &Path, what: &str) -> Result<usize> {
        let tok = self
            .next_token()
            .ok_or_else(|| ingestion(path, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ingestion(path, format!("bad {what}")))
    }
}

/// Read a P2 or P5 graymap with maxval up to 255.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    let mut tokens = Tokens::new(&bytes);
    let magic = tokens
        .next_token()
        .ok_or_else(|| ingestion(path, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(ingestion(
                path,
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let width = tokens.next_usize(path, "width")?;
    let height = tokens.next_usize(path, "height")?;
    let maxval = tokens.next_usize(path, "maxval")?;
    if width == 0 || height == 0 {
        return Err(ingestion(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(ingestion(path, format!("unsupported maxval {maxval}")));
    }
    let n = width * height;
    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = tokens.pos + 1;
        if bytes.len() < start + n {
            return Err(ingestion(path, "truncated raster"));
        }
        bytes[start..start + n].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(n);
        for _ in 0..n {
            let v = tokens.next_usize(path, "pixel")?;
            if v > maxval {
                return Err(ingestion(path, format!("pixel {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as u8);
        }
        pixels
    };
    if pixels.iter().any(|&p| p as usize > maxval) {
        return Err(ingestion(path, "raster value exceeds maxval"));
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Write a binary (P5) graymap.
pub fn write_pgm_p5(path: &Path, image: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    fs::write(path, out)?;
    Ok(())
}

/// Write a textual (P2) graymap, one row per line.
pub fn write_pgm_p2(path: &Path, image: &GrayImage) -> Result<()> {
    let mut out = format!("P2\n{} {}\n255\n", image.width, image.height);
    for row in image.pixels.chunks(image.width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
