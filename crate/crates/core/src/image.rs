//! Grayscale rasters and binary PGM (P5) I/O.

use std::fs;
use std::path::Path;

use crate::error::{dim_err, param_err, Error, Result};

/// An H×W grayscale raster stored row-major. Pixel values are nominally in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(param_err!("image extents must be positive, got {height}x{width}"));
        }
        if data.len() != height * width {
            return Err(dim_err!(
                "image {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn square(side: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(side, side, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Compensated sum of all pixels.
    pub fn sum(&self) -> f64 {
        crate::kernel::compensated_sum(self.data.iter().copied())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(dim_err!(
                "{what}: {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height,
                other.width
            ))
        }
    }

    /// Quantize to 8 bits with `round(v * 255)` after clamping to [0,1].
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Place images left to right, separated by a one-pixel black gutter.
    pub fn hstack(images: &[&ImageGrid]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| param_err!("hstack needs at least one image"))?;
        let height = first.height;
        if let Some(bad) = images.iter().find(|im| im.height != height) {
            return Err(dim_err!("hstack heights differ: {} vs {}", height, bad.height));
        }
        let width = images.iter().map(|im| im.width).sum::<usize>() + images.len() - 1;
        let mut out = ImageGrid::zeros(height, width);
        let mut offset = 0;
        for im in images {
            for r in 0..height {
                for c in 0..im.width {
                    out.set(r, offset + c, im.get(r, c));
                }
            }
            offset += im.width + 1;
        }
        Ok(out)
    }
}

/// Encode an image as binary PGM with maxval 255.
pub fn encode_pgm(image: &ImageGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImageGrid> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "truncated PGM header"));
        }
        tokens.push((start, &bytes[start..pos]));
    }
    if tokens[0].1 != b"P5" {
        return Err(Error::format(0, "missing P5 magic"));
    }
    let parse = |(offset, tok): (usize, &[u8])| -> Result<usize> {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(offset as u64, "bad PGM header number"))
    };
    let width = parse(tokens[1])?;
    let height = parse(tokens[2])?;
    let maxval = parse(tokens[3])?;
    if maxval != 255 {
        return Err(Error::format(tokens[3].0 as u64, "only maxval 255 is supported"));
    }
    // exactly one whitespace byte follows maxval
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::format(bytes.len() as u64, "truncated PGM pixel data"));
    }
    ImageGrid::from_u8(height, width, &bytes[pos..pos + need])
}

pub fn write_pgm(path: impl AsRef<Path>, image: &ImageGrid) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}
