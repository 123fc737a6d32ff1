//! 8-bit grayscale PGM images (P2 ASCII and P5 binary).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svd::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.height, self.width, |i, j| {
            f64::from(self.pixels[i * self.width + j])
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Image("unexpected end of data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Image("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Image(format!("bad {what}: {tok:?}")))
    }
}

pub fn parse(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?.to_owned();
    if magic != "P2" && magic != "P5" {
        return Err(Error::Image(format!("unsupported magic {magic:?}")));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Image("empty image".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!("maxval {maxval} is not 8-bit")));
    }
    let count = width * height;
    let pixels = if magic == "P2" {
        let mut px = Vec::with_capacity(count);
        for _ in 0..count {
            let v = cur.number("pixel")?;
            if v > maxval {
                return Err(Error::Image(format!("pixel {v} exceeds maxval {maxval}")));
            }
            px.push(v as u8);
        }
        px
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::Image("truncated raster".into()))?;
        if let Some(&v) = raster.iter().find(|&&v| usize::from(v) > maxval) {
            return Err(Error::Image(format!("pixel {v} exceeds maxval {maxval}")));
        }
        raster.to_vec()
    };
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn read(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    parse(&bytes)
}

/// Serializes as P2 with at most 16 pixels per line.
pub fn to_p2(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "P2\n{} {}\n255", img.width, img.height).unwrap();
    for row in img.pixels.chunks(img.width) {
        for line in row.chunks(16) {
            let text: Vec<String> = line.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", text.join(" ")).unwrap();
        }
    }
    out
}

pub fn to_p5(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}
