//! Software compositor: z-ordered layers blended back-to-front with
//! premultiplied source-over into an opaque output frame.
//!
//! Per output pixel the source is sampled bilinearly (clamp-to-edge) at the
//! pixel center mapped into source space, multiplied by the layer opacity
//! and mask, then blended as `out = src + dst * (1 - src_alpha)` for all four
//! channels with round-half-up to 8 bits.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{round_half_up, FrameError, Rgba8Frame};
use crate::geom::Rect;
use crate::track::SLOT_COUNT;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("slot {0} appears more than once")]
    DuplicateSlot(usize),
    #[error("slot {0} is out of range")]
    SlotOutOfRange(usize),
    #[error("face rect {0:?} is empty")]
    EmptyFace(Rect),
    #[error("face rect {rect:?} is outside the {width}x{height} camera frame")]
    FaceOutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("slot region {0:?} is outside the output")]
    RegionOutOfBounds(Rect),
    #[error("layer opacity {0} is outside [0, 1]")]
    Opacity(f64),
    #[error("mask is {mask:?}, source is {source_size:?}")]
    MaskSize {
        mask: (u32, u32),
        source_size: (u32, u32),
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Per-pixel 8-bit coverage applied on top of a layer's own alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl AlphaMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width as usize * height as usize;
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
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
        })
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub z: i32,
    pub source: Arc<Rgba8Frame>,
    pub dst_rect: Rect,
    pub opacity: f64,
    pub mask: Option<Arc<AlphaMask>>,
}

impl Layer {
    pub fn new(z: i32, source: Arc<Rgba8Frame>, dst_rect: Rect) -> Self {
        Self {
            z,
            source,
            dst_rect,
            opacity: 1.0,
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(ComposeError::Opacity(self.opacity));
        }
        if let Some(m) = &self.mask {
            if m.size() != self.source.size() {
                return Err(ComposeError::MaskSize {
                    mask: m.size(),
                    source_size: self.source.size(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub layers: Vec<Layer>,
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            layers: Vec::new(),
        }
    }

    /// Layers in composite order: ascending z, ties by insertion order.
    pub fn ordered(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.layers.iter().collect();
        v.sort_by_key(|l| l.z);
        v
    }
}

/// Head regions of the four painted figures, in output pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotGeometry {
    pub regions: [Rect; SLOT_COUNT],
}

impl SlotGeometry {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), ComposeError> {
        for r in &self.regions {
            if r.is_empty() || !r.within(width, height) {
                return Err(ComposeError::RegionOutOfBounds(*r));
            }
        }
        Ok(())
    }

    /// Four evenly spaced square regions across the middle band of the output.
    pub fn evenly_spaced(width: u32, height: u32) -> Self {
        let side = (width / 10).min(height / 4) as i32;
        let gap = width as i32 / SLOT_COUNT as i32;
        let y = height as i32 / 3;
        let regions = std::array::from_fn(|i| {
            Rect::new(gap * i as i32 + (gap - side) / 2, y, side, side)
        });
        Self { regions }
    }
}

impl Default for SlotGeometry {
    fn default() -> Self {
        // matches the bundled 1280x800 background
        Self {
            regions: [
                Rect::new(150, 250, 140, 140),
                Rect::new(440, 220, 150, 150),
                Rect::new(730, 260, 130, 130),
                Rect::new(1000, 230, 140, 140),
            ],
        }
    }
}

/// Premultiplied source-over of a real-valued source pixel onto an 8-bit one.
#[inline]
pub fn source_over(src: [f64; 4], dst: [u8; 4]) -> [u8; 4] {
    let keep = 1.0 - src[3] / 255.0;
    [
        round_half_up(src[0] + f64::from(dst[0]) * keep),
        round_half_up(src[1] + f64::from(dst[1]) * keep),
        round_half_up(src[2] + f64::from(dst[2]) * keep),
        round_half_up(src[3] + f64::from(dst[3]) * keep),
    ]
}

/// [`source_over`] for two 8-bit premultiplied pixels, in integers.
///
/// `round_half_up(s + d * (255 - a) / 255)` never sits on an exact half
/// (`2 * d * (255 - a) + 255` is odd), so this equals the f64 form exactly.
#[inline]
pub fn over(src: [u8; 4], dst: [u8; 4]) -> [u8; 4] {
    let keep = 255 - u32::from(src[3]);
    std::array::from_fn(|c| {
        let n = u32::from(dst[c]) * keep;
        (u32::from(src[c]) + (2 * n + 255) / 510).min(255) as u8
    })
}

/// Scale between 8-bit channels and the compositor's 16-bit accumulator.
pub const WIDE: u32 = 257;

/// Lifts an 8-bit pixel to the 16-bit accumulator scale (exact).
#[inline]
pub fn widen(px: [u8; 4]) -> [u16; 4] {
    px.map(|v| u16::from(v) * WIDE as u16)
}

/// Rounds a 16-bit accumulator pixel to 8 bits. `2v + 257` is odd, so there
/// are no ties.
#[inline]
pub fn narrow(px: [u16; 4]) -> [u8; 4] {
    px.map(|v| ((2 * u32::from(v) + WIDE) / (2 * WIDE)) as u8)
}

/// [`over`] at the accumulator scale: `s + round(d * (65535 - a) / 65535)`.
#[inline]
pub fn over_wide(src: [u16; 4], dst: [u16; 4]) -> [u16; 4] {
    let keep = 65535 - u64::from(src[3]);
    std::array::from_fn(|c| {
        let n = u64::from(dst[c]) * keep;
        (u64::from(src[c]) + (2 * n + 65535) / 131070).min(65535) as u16
    })
}

/// [`source_over`] onto a 16-bit accumulator pixel; `src` is in 8-bit units.
#[inline]
fn source_over_wide(src: [f64; 4], dst: [u16; 4]) -> [u16; 4] {
    let keep = 1.0 - src[3] / 255.0;
    std::array::from_fn(|c| {
        let v = src[c] * f64::from(WIDE) + f64::from(dst[c]) * keep;
        (v + 0.5).floor().clamp(0.0, 65535.0) as u16
    })
}

#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

/// Clamp-to-edge bilinear taps for destination pixels `d0..d1` of a span of
/// `dst_len` pixels starting at `dst_start`, mapped onto `src_len` samples.
fn taps(d0: i32, d1: i32, dst_start: i32, dst_len: i32, src_len: u32) -> Vec<Tap> {
    let ratio = f64::from(src_len) / f64::from(dst_len);
    let last = src_len as usize - 1;
    (d0..d1)
        .map(|d| {
            let u = (f64::from(d - dst_start) + 0.5) * ratio - 0.5;
            if u <= 0.0 {
                return Tap { i0: 0, i1: 0, frac: 0.0 };
            }
            let fl = u.floor();
            let i0 = (fl as usize).min(last);
            Tap {
                i0,
                i1: (i0 + 1).min(last),
                frac: if i0 == last { 0.0 } else { u - fl },
            }
        })
        .collect()
}

struct PreparedLayer<'a> {
    layer: &'a Layer,
    source: std::borrow::Cow<'a, Rgba8Frame>,
    clip: Rect,
    cols: Vec<Tap>,
    rows: Vec<Tap>,
    identity: bool,
}

impl<'a> PreparedLayer<'a> {
    fn new(layer: &'a Layer, width: u32, height: u32) -> Option<Self> {
        let clip = layer
            .dst_rect
            .intersect(&Rect::new(0, 0, width as i32, height as i32))?;
        let source = if layer.source.premultiplied() {
            std::borrow::Cow::Borrowed(layer.source.as_ref())
        } else {
            std::borrow::Cow::Owned(layer.source.as_ref().clone().into_premultiplied())
        };
        let d = layer.dst_rect;
        let (sw, sh) = source.size();
        Some(Self {
            layer,
            cols: taps(clip.x, clip.right(), d.x, d.w, sw),
            rows: taps(clip.y, clip.bottom(), d.y, d.h, sh),
            identity: d.w as u32 == sw && d.h as u32 == sh,
            source,
            clip,
        })
    }

    /// Draws every output pixel unchanged from its source: same size, at the
    /// origin, fully opaque, no mask.
    fn covers(&self, width: u32, height: u32) -> bool {
        let d = self.layer.dst_rect;
        self.identity
            && (d.x, d.y, d.w as u32, d.h as u32) == (0, 0, width, height)
            && self.layer.opacity == 1.0
            && self.layer.mask.is_none()
    }

    #[inline]
    fn sample(&self, row: &Tap, col: &Tap) -> [f64; 4] {
        let src = &*self.source;
        if self.identity {
            return src.pixel(col.i0 as u32, row.i0 as u32).map(f64::from);
        }
        let p00 = src.pixel(col.i0 as u32, row.i0 as u32);
        let p01 = src.pixel(col.i1 as u32, row.i0 as u32);
        let p10 = src.pixel(col.i0 as u32, row.i1 as u32);
        let p11 = src.pixel(col.i1 as u32, row.i1 as u32);
        let (fx, fy) = (col.frac, row.frac);
        std::array::from_fn(|c| {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p01[c]) * fx;
            let bot = f64::from(p10[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            top * (1.0 - fy) + bot * fy
        })
    }

    #[inline]
    fn coverage(&self, row: &Tap, col: &Tap) -> f64 {
        let mut k = self.layer.opacity;
        if let Some(mask) = &self.layer.mask {
            let at = |x: usize, y: usize| f64::from(mask.data[y * mask.width as usize + x]);
            let (fx, fy) = (col.frac, row.frac);
            let top = at(col.i0, row.i0) * (1.0 - fx) + at(col.i1, row.i0) * fx;
            let bot = at(col.i0, row.i1) * (1.0 - fx) + at(col.i1, row.i1) * fx;
            k *= (top * (1.0 - fy) + bot * fy) / 255.0;
        }
        k
    }

    fn blend_row(&self, y: i32, out: &mut [u16]) {
        if y < self.clip.y || y >= self.clip.bottom() {
            return;
        }
        let row = &self.rows[(y - self.clip.y) as usize];
        if self.identity && self.layer.opacity == 1.0 && self.layer.mask.is_none() {
            self.blend_row_unscaled(row, out);
            return;
        }
        for (i, col) in self.cols.iter().enumerate() {
            let x = (self.clip.x as usize + i) * 4;
            let dst: [u16; 4] = [out[x], out[x + 1], out[x + 2], out[x + 3]];
            let k = self.coverage(row, col);
            if k <= 0.0 {
                continue;
            }
            let s = self.sample(row, col);
            out[x..x + 4].copy_from_slice(&source_over_wide(s.map(|v| v * k), dst));
        }
    }

    /// Same-size source, full opacity, no mask: no resampling.
    fn blend_row_unscaled(&self, row: &Tap, out: &mut [u16]) {
        let sw = self.source.width() as usize;
        let start = (row.i0 * sw + self.cols[0].i0) * 4;
        let src = &self.source.data()[start..start + self.cols.len() * 4];
        let x0 = self.clip.x as usize * 4;
        let dst = &mut out[x0..x0 + src.len()];
        for (d, s) in dst.chunks_exact_mut(4).zip(src.chunks_exact(4)) {
            let s = [s[0], s[1], s[2], s[3]];
            match s[3] {
                255 => d.copy_from_slice(&widen(s)),
                0 if s == [0, 0, 0, 0] => {}
                _ => {
                    let px = over_wide(widen(s), [d[0], d[1], d[2], d[3]]);
                    d.copy_from_slice(&px);
                }
            }
        }
    }
}

/// Composites `scene` onto opaque black. Layers entirely outside the output
/// are skipped. Blending accumulates at 16 bits per channel and each pixel is
/// rounded to 8 bits once. The result is premultiplied.
pub fn composite(scene: &Scene) -> Result<Rgba8Frame, ComposeError> {
    let mut out = Rgba8Frame::filled(scene.width, scene.height, [0, 0, 0, 255])?;
    let mut prepared = Vec::new();
    for layer in scene.ordered() {
        layer.validate()?;
        if let Some(p) = PreparedLayer::new(layer, scene.width, scene.height) {
            prepared.push(p);
        }
    }
    let row_len = scene.width as usize * 4;
    let blank: Vec<u16> = [0, 0, 0, 65535].repeat(scene.width as usize);
    // An opaque full-frame bottom layer seeds the accumulator directly.
    let base = match prepared.first() {
        Some(p) if p.covers(scene.width, scene.height) && p.source.is_opaque() => {
            Some(prepared.remove(0).source)
        }
        _ => None,
    };
    out.data_mut()
        .par_chunks_mut(row_len)
        .enumerate()
        .for_each_init(
            || vec![0u16; row_len],
            |acc, (y, row)| {
                match &base {
                    Some(src) => {
                        let start = y * row_len;
                        for (a, &v) in acc.iter_mut().zip(&src.data()[start..start + row_len]) {
                            *a = u16::from(v) * WIDE as u16;
                        }
                    }
                    None => acc.copy_from_slice(&blank),
                }
                for layer in &prepared {
                    layer.blend_row(y as i32, acc);
                }
                for (o, &a) in row.iter_mut().zip(acc.iter()) {
                    *o = ((2 * u32::from(a) + WIDE) / (2 * WIDE)) as u8;
                }
            },
        );
    Ok(out)
}

/// Cuts the padded face region out of `camera` and bakes in a feathered oval
/// alpha mask. The result is premultiplied.
///
/// The region grows by `round(w * padding)` / `round(h * padding)` on each
/// side and is clamped to the camera frame. Alpha is 255 inside the inscribed
/// ellipse shrunk by `feather` (as a fraction of the normalized radius),
/// ramps linearly to 0 at the ellipse, and is 0 outside.
pub fn extract_face_sprite(
    camera: &Rgba8Frame,
    face: Rect,
    padding: f64,
    feather: f64,
) -> Result<Rgba8Frame, ComposeError> {
    if face.is_empty() {
        return Err(ComposeError::EmptyFace(face));
    }
    if !face.within(camera.width(), camera.height()) {
        return Err(ComposeError::FaceOutOfBounds {
            rect: face,
            width: camera.width(),
            height: camera.height(),
        });
    }
    let region = sprite_region(face, padding, camera.width(), camera.height());
    let mut sprite = camera.crop(region)?.into_premultiplied();
    let (w, h) = sprite.size();
    let (a, b) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
    let inner = (1.0 - feather).clamp(0.0, 1.0);
    for y in 0..h {
        for x in 0..w {
            let dx = (f64::from(x) + 0.5 - a) / a;
            let dy = (f64::from(y) + 0.5 - b) / b;
            let r = (dx * dx + dy * dy).sqrt();
            let m = if r <= inner {
                1.0
            } else if r >= 1.0 {
                0.0
            } else {
                (1.0 - r) / (1.0 - inner)
            };
            let p = sprite.pixel(x, y);
            sprite.set_pixel(x, y, p.map(|c| round_half_up(f64::from(c) * m)));
        }
    }
    Ok(sprite)
}

/// The padded, clamped source region for a face rect.
pub fn sprite_region(face: Rect, padding: f64, width: u32, height: u32) -> Rect {
    let px = (f64::from(face.w) * padding).round() as i32;
    let py = (f64::from(face.h) * padding).round() as i32;
    let grown = Rect::new(face.x - px, face.y - py, face.w + 2 * px, face.h + 2 * py);
    grown
        .intersect(&Rect::new(0, 0, width as i32, height as i32))
        .unwrap_or(face)
}

/// z of the full-frame background layer.
pub const Z_BACKGROUND: i32 = 0;
/// z of slot 0's face sprite; slot `s` sits at `Z_FACES + s`.
pub const Z_FACES: i32 = 10;
/// z of the snow overlay, above every face.
pub const Z_SNOW: i32 = 100;

/// Stacks background, face sprites and snow into a scene.
pub fn build_scene(
    background: Arc<Rgba8Frame>,
    sprites: &[(usize, Arc<Rgba8Frame>)],
    geometry: &SlotGeometry,
    snow: Arc<Rgba8Frame>,
    width: u32,
    height: u32,
) -> Result<Scene, ComposeError> {
    let mut seen = [false; SLOT_COUNT];
    for (slot, _) in sprites {
        if *slot >= SLOT_COUNT {
            return Err(ComposeError::SlotOutOfRange(*slot));
        }
        if std::mem::replace(&mut seen[*slot], true) {
            return Err(ComposeError::DuplicateSlot(*slot));
        }
    }
    let full = Rect::new(0, 0, width as i32, height as i32);
    let mut scene = Scene::new(width, height);
    scene.layers.push(Layer::new(Z_BACKGROUND, background, full));
    let mut ordered: Vec<&(usize, Arc<Rgba8Frame>)> = sprites.iter().collect();
    ordered.sort_by_key(|(slot, _)| *slot);
    for (slot, sprite) in ordered {
        scene.layers.push(Layer::new(
            Z_FACES + *slot as i32,
            Arc::clone(sprite),
            geometry.regions[*slot],
        ));
    }
    scene.layers.push(Layer::new(Z_SNOW, snow, full));
    Ok(scene)
}
