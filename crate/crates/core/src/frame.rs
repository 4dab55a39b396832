//! Pixel containers shared by every stage: 8-bit luminance images for the
//! detector and RGBA frames for capture, compositing and output.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ColorType, ImageEncoder};
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Rect;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("invalid dimensions {width}x{height}: both must be at least 1")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("sample buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("region {0:?} is not inside the frame")]
    Region(Rect),
    #[error("png i/o on {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("png encode: {0}")]
    Encode(#[from] image::ImageError),
}

fn check_dims(width: u32, height: u32) -> Result<usize, FrameError> {
    if width == 0 || height == 0 {
        return Err(FrameError::EmptyDimensions { width, height });
    }
    Ok(width as usize * height as usize)
}

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self, FrameError> {
        let expected = check_dims(width, height)?;
        if samples.len() != expected {
            return Err(FrameError::BufferSize {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, FrameError> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            samples: vec![value; n],
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> u8,
    ) -> Result<Self, FrameError> {
        let n = check_dims(width, height)?;
        let mut samples = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    /// Pads the image with a uniform border.
    pub fn padded(&self, left: u32, top: u32, right: u32, bottom: u32, value: u8) -> GrayImage {
        let w = self.width + left + right;
        let h = self.height + top + bottom;
        let mut out = vec![value; w as usize * h as usize];
        for y in 0..self.height as usize {
            let dst = (y + top as usize) * w as usize + left as usize;
            let src = y * self.width as usize;
            out[dst..dst + self.width as usize]
                .copy_from_slice(&self.samples[src..src + self.width as usize]);
        }
        GrayImage {
            width: w,
            height: h,
            samples: out,
        }
    }

    /// Area-average resample by `factor` (< 1 shrinks). Each output pixel
    /// averages the source block `[floor(x/f), floor((x+1)/f))`.
    pub fn downscale(&self, factor: f64) -> GrayImage {
        if (factor - 1.0).abs() < f64::EPSILON {
            return self.clone();
        }
        let ow = ((f64::from(self.width) * factor).round() as u32).max(1);
        let oh = ((f64::from(self.height) * factor).round() as u32).max(1);
        let span = |o: u32, out: u32, src: u32| {
            let a = (u64::from(o) * u64::from(src) / u64::from(out)) as u32;
            let b = ((u64::from(o + 1) * u64::from(src)).div_ceil(u64::from(out)) as u32)
                .clamp(a + 1, src);
            (a, b)
        };
        let cols: Vec<(u32, u32)> = (0..ow).map(|x| span(x, ow, self.width)).collect();
        let mut samples = vec![0u8; ow as usize * oh as usize];
        samples
            .par_chunks_mut(ow as usize)
            .enumerate()
            .for_each(|(oy, row)| {
                let (y0, y1) = span(oy as u32, oh, self.height);
                for (ox, out) in row.iter_mut().enumerate() {
                    let (x0, x1) = cols[ox];
                    let mut acc = 0u32;
                    for y in y0..y1 {
                        let base = y as usize * self.width as usize;
                        acc += self.samples[base + x0 as usize..base + x1 as usize]
                            .iter()
                            .map(|&v| u32::from(v))
                            .sum::<u32>();
                    }
                    let n = (y1 - y0) * (x1 - x0);
                    *out = ((acc + n / 2) / n) as u8;
                }
            });
        GrayImage {
            width: ow,
            height: oh,
            samples,
        }
    }

    pub fn to_rgba(&self) -> Rgba8Frame {
        let mut data = Vec::with_capacity(self.samples.len() * 4);
        for &v in &self.samples {
            data.extend_from_slice(&[v, v, v, 255]);
        }
        Rgba8Frame {
            width: self.width,
            height: self.height,
            data,
            premultiplied: true,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<GrayImage, FrameError> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| FrameError::Png {
            path: path.display().to_string(),
            source,
        })?;
        if let image::DynamicImage::ImageLuma8(buf) = decoded {
            let (w, h) = buf.dimensions();
            return GrayImage::new(w, h, buf.into_raw());
        }
        let rgba = decoded.to_rgba8();
        let (w, h) = rgba.dimensions();
        Ok(Rgba8Frame::new(w, h, rgba.into_raw(), false)?.luma())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), FrameError> {
        let path = path.as_ref();
        image::save_buffer(path, &self.samples, self.width, self.height, ColorType::L8).map_err(
            |source| FrameError::Png {
                path: path.display().to_string(),
                source,
            },
        )
    }
}

/// Integer Rec. 601 luma: `(77 R + 150 G + 29 B) >> 8`.
#[inline]
pub fn luma601(r: u8, g: u8, b: u8) -> u8 {
    ((77 * u32::from(r) + 150 * u32::from(g) + 29 * u32::from(b)) >> 8) as u8
}

#[inline]
pub(crate) fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Row-major RGBA frame, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgba8Frame {
    width: u32,
    height: u32,
    data: Vec<u8>,
    premultiplied: bool,
}

impl Rgba8Frame {
    pub fn new(
        width: u32,
        height: u32,
        data: Vec<u8>,
        premultiplied: bool,
    ) -> Result<Self, FrameError> {
        let expected = check_dims(width, height)? * 4;
        if data.len() != expected {
            return Err(FrameError::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            premultiplied,
        })
    }

    /// Frame filled with one premultiplied color.
    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Result<Self, FrameError> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: rgba.repeat(n),
            premultiplied: true,
        })
    }

    pub fn transparent(width: u32, height: u32) -> Result<Self, FrameError> {
        Self::filled(width, height, [0, 0, 0, 0])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn premultiplied(&self) -> bool {
        self.premultiplied
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [
            self.data[i],
            self.data[i + 1],
            self.data[i + 2],
            self.data[i + 3],
        ]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 4]) {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        self.data[i..i + 4].copy_from_slice(&px);
    }

    pub fn is_opaque(&self) -> bool {
        self.data.chunks_exact(4).all(|p| p[3] == 255)
    }

    /// Every color channel is at most its alpha.
    pub fn is_valid_premultiplied(&self) -> bool {
        self.data
            .chunks_exact(4)
            .all(|p| p[0] <= p[3] && p[1] <= p[3] && p[2] <= p[3])
    }

    /// Returns a premultiplied copy (or `self` unchanged when already premultiplied).
    pub fn into_premultiplied(mut self) -> Rgba8Frame {
        if self.premultiplied {
            return self;
        }
        for p in self.data.chunks_exact_mut(4) {
            let a = f64::from(p[3]);
            for c in &mut p[..3] {
                *c = round_half_up(f64::from(*c) * a / 255.0);
            }
        }
        self.premultiplied = true;
        self
    }

    /// Straight-alpha copy, suitable for encoding.
    pub fn to_straight(&self) -> Rgba8Frame {
        let mut out = self.clone();
        if !self.premultiplied {
            return out;
        }
        for p in out.data.chunks_exact_mut(4) {
            let a = p[3];
            if a == 255 {
                continue;
            }
            if a == 0 {
                p[..3].fill(0);
                continue;
            }
            for c in &mut p[..3] {
                *c = round_half_up(f64::from(*c) * 255.0 / f64::from(a));
            }
        }
        out.premultiplied = false;
        out
    }

    /// Luminance conversion; color is read as stored (opaque camera frames).
    pub fn luma(&self) -> GrayImage {
        let mut samples = vec![0u8; self.width as usize * self.height as usize];
        samples
            .par_chunks_mut(self.width as usize)
            .zip(self.data.par_chunks(self.width as usize * 4))
            .for_each(|(dst, src)| {
                for (d, p) in dst.iter_mut().zip(src.chunks_exact(4)) {
                    *d = luma601(p[0], p[1], p[2]);
                }
            });
        GrayImage {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    pub fn mirrored_horizontally(&self) -> Rgba8Frame {
        let mut data = self.data.clone();
        let row_len = self.width as usize * 4;
        for (dst, src) in data
            .chunks_exact_mut(row_len)
            .zip(self.data.chunks_exact(row_len))
        {
            for (d, s) in dst.chunks_exact_mut(4).zip(src.chunks_exact(4).rev()) {
                d.copy_from_slice(s);
            }
        }
        Rgba8Frame {
            data,
            ..self.clone_header()
        }
    }

    pub fn crop(&self, region: Rect) -> Result<Rgba8Frame, FrameError> {
        if region.is_empty() || !region.within(self.width, self.height) {
            return Err(FrameError::Region(region));
        }
        let mut data = Vec::with_capacity(region.area() as usize * 4);
        for y in region.y..region.bottom() {
            let start = (y as usize * self.width as usize + region.x as usize) * 4;
            data.extend_from_slice(&self.data[start..start + region.w as usize * 4]);
        }
        Ok(Rgba8Frame {
            width: region.w as u32,
            height: region.h as u32,
            data,
            premultiplied: self.premultiplied,
        })
    }

    fn clone_header(&self) -> Rgba8Frame {
        Rgba8Frame {
            width: self.width,
            height: self.height,
            data: Vec::new(),
            premultiplied: self.premultiplied,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Rgba8Frame, FrameError> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| FrameError::Png {
            path: path.display().to_string(),
            source,
        })?;
        let rgba = decoded.to_rgba8();
        let (w, h) = rgba.dimensions();
        let frame = Rgba8Frame::new(w, h, rgba.into_raw(), false)?;
        Ok(if frame.is_opaque() {
            Rgba8Frame {
                premultiplied: true,
                ..frame
            }
        } else {
            frame
        })
    }

    /// PNG bytes of the straight-alpha form of this frame.
    pub fn encode_png(&self) -> Result<Vec<u8>, FrameError> {
        let straight = self.to_straight();
        let mut out = Cursor::new(Vec::new());
        PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
            .write_image(&straight.data, self.width, self.height, ColorType::Rgba8.into())?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), FrameError> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| FrameError::Png {
            path: path.display().to_string(),
            source: image::ImageError::IoError(e),
        })
    }
}
