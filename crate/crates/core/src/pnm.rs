//! Binary netpbm I/O: `P5` grayscale (read/write) and `P6` color (write).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::scalar::{quantize, Scalar};

/// Contour overlay: `contour` pixels are painted pure red over `base`.
#[derive(Debug, Clone, Copy)]
pub struct Overlay<'a, T> {
    pub base: &'a GrayImage<T>,
    pub contour: &'a BinaryMask,
}

/// Anything the crate can serialize to netpbm bytes.
pub trait Netpbm {
    fn to_netpbm(&self) -> Result<Vec<u8>>;
}

impl<T: Scalar> Netpbm for GrayImage<T> {
    fn to_netpbm(&self) -> Result<Vec<u8>> {
        Ok(encode_p5(
            self.width(),
            self.height(),
            self.data().iter().map(|&v| quantize(v)),
        ))
    }
}

impl Netpbm for BinaryMask {
    fn to_netpbm(&self) -> Result<Vec<u8>> {
        Ok(encode_p5(
            self.width(),
            self.height(),
            self.data().iter().map(|&b| if b { 255 } else { 0 }),
        ))
    }
}

impl<T: Scalar> Netpbm for Overlay<'_, T> {
    fn to_netpbm(&self) -> Result<Vec<u8>> {
        let (w, h) = (self.base.width(), self.base.height());
        if self.contour.width() != w || self.contour.height() != h {
            return Err(Error::arg(
                "overlay contour does not match image dimensions",
            ));
        }
        let mut out = format!("P6\n{} {}\n255\n", w, h).into_bytes();
        out.reserve(3 * w * h);
        for (&v, &edge) in self.base.data().iter().zip(self.contour.data()) {
            if edge {
                out.extend_from_slice(&[255, 0, 0]);
            } else {
                let g = quantize(v);
                out.extend_from_slice(&[g, g, g]);
            }
        }
        Ok(out)
    }
}

fn encode_p5(width: usize, height: usize, levels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.reserve(width * height);
    out.extend(levels);
    out
}

/// Serialize any supported image kind.
pub fn write_image(image: &impl Netpbm) -> Result<Vec<u8>> {
    image.to_netpbm()
}

pub fn save(image: &impl Netpbm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = image.to_netpbm()?;
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<GrayImage<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    read_pgm(&bytes)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("missing {} in PGM header", what)));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("unreadable {} in PGM header", what)))
    }
}

/// Decode a binary (`P5`) PGM with maxval ≤ 255. Intensities are divided by
/// maxval.
pub fn read_pgm<T: Scalar>(bytes: &[u8]) -> Result<GrayImage<T>> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::Format(format!(
            "unsupported magic {:?}, expected P5",
            magic
        )));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "degenerate dimensions {}x{}",
            width, height
        )));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("maxval {} outside 1..=255", maxval)));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }

    let payload = &bytes[cur.pos..];
    let expected = width * height;
    if payload.len() < expected {
        return Err(Error::Length {
            expected,
            found: payload.len(),
        });
    }
    let scale = T::cast(maxval as f64);
    let data = payload[..expected]
        .iter()
        .map(|&b| T::cast(b as f64) / scale)
        .collect();
    Ok(GrayImage::from_raw(width, height, data))
}
