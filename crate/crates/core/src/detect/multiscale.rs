//! Sliding-window detection over a geometric series of scales.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::GrayImage;
use crate::geom::Rect;

use super::cascade::CascadeModel;
use super::eval::ScaledCascade;
use super::group::{group_rectangles, Detection};
use super::integral::{integral_images, IntegralPair};
use super::DetectError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectParams {
    /// Ratio between consecutive scales; must exceed 1.
    pub scale_factor: f64,
    /// Window stride in model pixels; the pixel stride is `max(1, round(step_shift * scale))`.
    pub step_shift: f64,
    /// Smallest window (w, h) in pixels; the model window when unset.
    pub min_size: Option<(u32, u32)>,
    pub max_size: Option<(u32, u32)>,
    pub min_neighbors: u32,
    pub max_faces: usize,
    /// Similarity tolerance used when grouping raw hits.
    pub group_eps: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            scale_factor: 1.1,
            step_shift: 1.7,
            min_size: None,
            max_size: None,
            min_neighbors: 3,
            max_faces: 4,
            group_eps: 0.2,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::InvalidParams(m.to_string()));
        if !(self.scale_factor > 1.0) || !self.scale_factor.is_finite() {
            return bad("scale_factor must be > 1");
        }
        if !(self.step_shift > 0.0) {
            return bad("step_shift must be > 0");
        }
        if self.max_faces < 1 {
            return bad("max_faces must be >= 1");
        }
        if !(self.group_eps >= 0.0) {
            return bad("group_eps must be >= 0");
        }
        Ok(())
    }
}

/// Scales visited for an image of the given size, with their pixel strides.
pub fn scan_scales(model: &CascadeModel, width: u32, height: u32, params: &DetectParams) -> Vec<(f64, u32)> {
    let (ww, wh) = (model.window_width(), model.window_height());
    let (min_w, min_h) = params.min_size.unwrap_or((ww, wh));
    let mut scales = Vec::new();
    let mut s = 1.0f64;
    loop {
        let win_w = (f64::from(ww) * s).round() as u32;
        let win_h = (f64::from(wh) * s).round() as u32;
        if win_w > width || win_h > height {
            break;
        }
        if let Some((max_w, max_h)) = params.max_size {
            if win_w > max_w || win_h > max_h {
                break;
            }
        }
        if win_w >= min_w && win_h >= min_h {
            let stride = ((params.step_shift * s).round() as u32).max(1);
            scales.push((s, stride));
        }
        s *= params.scale_factor;
    }
    scales
}

/// All accepted windows before grouping, in scale-major raster order.
pub fn detect_raw(model: &CascadeModel, ii: &IntegralPair, params: &DetectParams) -> Vec<Rect> {
    let scales = scan_scales(model, ii.width(), ii.height(), params);
    let per_scale: Vec<Vec<Rect>> = scales
        .par_iter()
        .map(|&(scale, stride)| {
            let sc = ScaledCascade::new(model, scale, ii);
            let (ww, wh) = sc.window();
            let mut hits = Vec::new();
            let mut y = 0;
            while y + wh <= ii.height() {
                let mut x = 0;
                while x + ww <= ii.width() {
                    if sc.evaluate(ii, x, y).is_accepted() {
                        hits.push(Rect::new(x as i32, y as i32, ww as i32, wh as i32));
                    }
                    x += stride;
                }
                y += stride;
            }
            hits
        })
        .collect();
    per_scale.into_iter().flatten().collect()
}

/// Detects faces, keeping at most `params.max_faces` ranked by area
/// (ties: ascending x, then y). An image smaller than the model window
/// yields no detections.
pub fn detect_multiscale(
    model: &CascadeModel,
    img: &GrayImage,
    params: &DetectParams,
) -> Result<Vec<Detection>, DetectError> {
    params.validate()?;
    if img.width() < model.window_width() || img.height() < model.window_height() {
        return Ok(Vec::new());
    }
    let ii = integral_images(img);
    let raw = detect_raw(model, &ii, params);
    let mut grouped = group_rectangles(&raw, params.min_neighbors, params.group_eps);
    grouped.retain(|d| d.rect.within(img.width(), img.height()));
    grouped.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.rect.x.cmp(&b.rect.x))
            .then(a.rect.y.cmp(&b.rect.y))
    });
    grouped.truncate(params.max_faces);
    Ok(grouped)
}

/// A shareable cascade plus detection parameters.
#[derive(Debug, Clone)]
pub struct Detector {
    model: Arc<CascadeModel>,
    params: DetectParams,
}

impl Detector {
    pub fn new(model: Arc<CascadeModel>, params: DetectParams) -> Result<Self, DetectError> {
        params.validate()?;
        Ok(Self { model, params })
    }

    pub fn model(&self) -> &CascadeModel {
        &self.model
    }

    pub fn params(&self) -> &DetectParams {
        &self.params
    }

    pub fn detect(&self, img: &GrayImage) -> Vec<Detection> {
        detect_multiscale(&self.model, img, &self.params).expect("params validated at construction")
    }
}
