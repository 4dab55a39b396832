//! Cascade evaluation of a single window at a given scale.
//!
//! Features are scaled onto a fixed-resolution integral image rather than
//! resampling the image. Responses are divided by the area of the
//! normalization window (the model window minus a one-pixel border, scaled)
//! and compared against `threshold * stddev` of that same window.

use crate::geom::Rect;

use super::cascade::CascadeModel;
use super::integral::IntegralPair;
use super::DetectError;

/// Variance floor below which a window is rejected without running any stage.
pub const VARIANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowVerdict {
    /// Passed every stage; `score` is the final stage's sum.
    Accepted { score: f64 },
    /// Failed at stage `stage` (zero-variance windows report stage 0).
    Rejected { stage: usize },
}

impl WindowVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, WindowVerdict::Accepted { .. })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ScaledRect {
    corners: [usize; 4],
    weight: f64,
}

#[derive(Debug, Clone, Copy)]
struct ScaledFeature {
    rects: [ScaledRect; 3],
    len: usize,
}

/// A cascade bound to one scale and one integral-table stride.
#[derive(Debug, Clone)]
pub struct ScaledCascade<'m> {
    model: &'m CascadeModel,
    scale: f64,
    window: (u32, u32),
    norm_rect: Rect,
    norm_corners: [usize; 4],
    inv_norm_area: f64,
    features: Vec<ScaledFeature>,
}

fn corner_offsets(r: Rect, stride: usize) -> [usize; 4] {
    let (x0, y0) = (r.x as usize, r.y as usize);
    let (x1, y1) = (r.right() as usize, r.bottom() as usize);
    [
        y0 * stride + x0,
        y0 * stride + x1,
        y1 * stride + x0,
        y1 * stride + x1,
    ]
}

fn scale_len(v: u32, scale: f64) -> i32 {
    (f64::from(v) * scale).round() as i32
}

impl<'m> ScaledCascade<'m> {
    pub fn new(model: &'m CascadeModel, scale: f64, ii: &IntegralPair) -> Self {
        let stride = ii.stride();
        let win_w = scale_len(model.window_width(), scale).max(1);
        let win_h = scale_len(model.window_height(), scale).max(1);
        let border = (scale.round() as i32).max(0);
        let norm_rect = Rect::new(
            border,
            border,
            scale_len(model.window_width() - 2, scale).clamp(1, win_w - border),
            scale_len(model.window_height() - 2, scale).clamp(1, win_h - border),
        );
        let inv_norm_area = 1.0 / norm_rect.area() as f64;

        let features = model
            .features()
            .iter()
            .map(|f| {
                let mut rects = [ScaledRect::default(); 3];
                let mut scaled = [Rect::default(); 3];
                for (k, r) in f.rects.iter().enumerate() {
                    let x = scale_len(r.x, scale).min(win_w - 1);
                    let y = scale_len(r.y, scale).min(win_h - 1);
                    let w = scale_len(r.w, scale).clamp(1, win_w - x);
                    let h = scale_len(r.h, scale).clamp(1, win_h - y);
                    scaled[k] = Rect::new(x, y, w, h);
                    rects[k] = ScaledRect {
                        corners: corner_offsets(scaled[k], stride),
                        weight: r.weight,
                    };
                }
                // Rounding changes the relative areas; for zero-sum features
                // re-derive the first weight so a flat patch still gives zero.
                if f.is_balanced() {
                    let rest: f64 = (1..f.rects.len())
                        .map(|k| rects[k].weight * scaled[k].area() as f64)
                        .sum();
                    rects[0].weight = -rest / scaled[0].area() as f64;
                }
                for r in rects.iter_mut().take(f.rects.len()) {
                    r.weight *= inv_norm_area;
                }
                ScaledFeature {
                    rects,
                    len: f.rects.len(),
                }
            })
            .collect();

        Self {
            model,
            scale,
            window: (win_w as u32, win_h as u32),
            norm_rect,
            norm_corners: corner_offsets(norm_rect, stride),
            inv_norm_area,
            features,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Scaled window size in pixels.
    pub fn window(&self) -> (u32, u32) {
        self.window
    }

    /// The variance-normalization rectangle, relative to the window origin.
    pub fn norm_rect(&self) -> Rect {
        self.norm_rect
    }

    fn fits(&self, ii: &IntegralPair, x: u32, y: u32) -> bool {
        u64::from(x) + u64::from(self.window.0) <= u64::from(ii.width())
            && u64::from(y) + u64::from(self.window.1) <= u64::from(ii.height())
    }

    fn check(&self, ii: &IntegralPair, x: u32, y: u32) -> Result<(), DetectError> {
        if self.fits(ii, x, y) {
            Ok(())
        } else {
            Err(DetectError::OutOfBounds {
                rect: Rect::new(x as i32, y as i32, self.window.0 as i32, self.window.1 as i32),
                width: ii.width(),
                height: ii.height(),
            })
        }
    }

    /// Standard deviation of the normalization window, or `None` when its
    /// variance does not exceed [`VARIANCE_EPSILON`].
    #[inline]
    fn norm_factor(&self, ii: &IntegralPair, base: usize) -> Option<f64> {
        let s = IntegralPair::corners(ii.sum_table(), base, &self.norm_corners) as f64;
        let sq = IntegralPair::corners(ii.sqsum_table(), base, &self.norm_corners) as f64;
        let mean = s * self.inv_norm_area;
        let var = sq * self.inv_norm_area - mean * mean;
        (var > VARIANCE_EPSILON).then(|| var.max(VARIANCE_EPSILON).sqrt())
    }

    #[inline]
    fn response(&self, ii: &IntegralPair, base: usize, feature: usize) -> f64 {
        let f = &self.features[feature];
        let table = ii.sum_table();
        f.rects[..f.len]
            .iter()
            .map(|r| r.weight * IntegralPair::corners(table, base, &r.corners) as f64)
            .sum()
    }

    /// Area-normalized feature response of `feature` at window origin `(x, y)`.
    pub fn feature_value(
        &self,
        ii: &IntegralPair,
        x: u32,
        y: u32,
        feature: usize,
    ) -> Result<f64, DetectError> {
        self.check(ii, x, y)?;
        if feature >= self.features.len() {
            return Err(DetectError::InvalidModel(format!("no feature {feature}")));
        }
        Ok(self.response(ii, y as usize * ii.stride() + x as usize, feature))
    }

    /// Evaluates the window at `(x, y)`. Bounds are the caller's
    /// responsibility; see [`ScaledCascade::evaluate_checked`].
    #[inline]
    pub(crate) fn evaluate(&self, ii: &IntegralPair, x: u32, y: u32) -> WindowVerdict {
        let base = y as usize * ii.stride() + x as usize;
        let Some(nf) = self.norm_factor(ii, base) else {
            return WindowVerdict::Rejected { stage: 0 };
        };
        let mut score = 0.0;
        for (si, stage) in self.model.stages().iter().enumerate() {
            score = 0.0;
            for weak in &stage.weak {
                let value = self.response(ii, base, weak.feature_index);
                score += if value < weak.threshold * nf {
                    weak.left_value
                } else {
                    weak.right_value
                };
            }
            if score < stage.threshold {
                return WindowVerdict::Rejected { stage: si };
            }
        }
        WindowVerdict::Accepted { score }
    }

    pub fn evaluate_checked(
        &self,
        ii: &IntegralPair,
        x: u32,
        y: u32,
    ) -> Result<WindowVerdict, DetectError> {
        self.check(ii, x, y)?;
        Ok(self.evaluate(ii, x, y))
    }
}

/// Runs the cascade on the window whose top-left corner is `origin`, with
/// every feature scaled by `scale`.
pub fn evaluate_window(
    model: &CascadeModel,
    ii: &IntegralPair,
    origin: (u32, u32),
    scale: f64,
) -> Result<WindowVerdict, DetectError> {
    ScaledCascade::new(model, scale, ii).evaluate_checked(ii, origin.0, origin.1)
}
