//! Summed-area tables of pixel values and squared pixel values.

use crate::frame::GrayImage;
use crate::geom::Rect;

use super::DetectError;

/// `(width+1) x (height+1)` cumulative sum and squared-sum tables with a zero
/// first row and column. Entries are `u64`, exact for images up to 8192x8192.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralPair {
    width: u32,
    height: u32,
    sum: Vec<u64>,
    sqsum: Vec<u64>,
}

impl IntegralPair {
    /// Width of the source image (the tables are one wider).
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row stride of the tables.
    pub fn stride(&self) -> usize {
        self.width as usize + 1
    }

    /// Sum of samples over `[0, x) x [0, y)`.
    pub fn sum_at(&self, x: u32, y: u32) -> u64 {
        self.sum[y as usize * self.stride() + x as usize]
    }

    pub fn sqsum_at(&self, x: u32, y: u32) -> u64 {
        self.sqsum[y as usize * self.stride() + x as usize]
    }

    pub(crate) fn sum_table(&self) -> &[u64] {
        &self.sum
    }

    pub(crate) fn sqsum_table(&self) -> &[u64] {
        &self.sqsum
    }

    /// Four-corner lookup with table offsets; caller guarantees bounds.
    #[inline(always)]
    pub(crate) fn corners(table: &[u64], base: usize, c: &[usize; 4]) -> i64 {
        // c = [top-left, top-right, bottom-left, bottom-right]
        (table[base + c[3]] as i64 - table[base + c[1]] as i64 - table[base + c[2]] as i64)
            + table[base + c[0]] as i64
    }
}

pub fn integral_images(img: &GrayImage) -> IntegralPair {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sqsum = vec![0u64; stride * (h + 1)];
    let samples = img.samples();
    for y in 0..h {
        let mut row = 0u64;
        let mut row_sq = 0u64;
        let above = y * stride;
        let here = (y + 1) * stride;
        for x in 0..w {
            let v = u64::from(samples[y * w + x]);
            row += v;
            row_sq += v * v;
            sum[here + x + 1] = sum[above + x + 1] + row;
            sqsum[here + x + 1] = sqsum[above + x + 1] + row_sq;
        }
    }
    IntegralPair {
        width: img.width(),
        height: img.height(),
        sum,
        sqsum,
    }
}

fn check(ii: &IntegralPair, rect: Rect) -> Result<(), DetectError> {
    if rect.w < 0 || rect.h < 0 || !rect.within(ii.width, ii.height) {
        return Err(DetectError::OutOfBounds {
            rect,
            width: ii.width,
            height: ii.height,
        });
    }
    Ok(())
}

fn table_rect(ii: &IntegralPair, table: &[u64], rect: Rect) -> u64 {
    let s = ii.stride();
    let (x0, y0) = (rect.x as usize, rect.y as usize);
    let (x1, y1) = (rect.right() as usize, rect.bottom() as usize);
    table[y1 * s + x1] + table[y0 * s + x0] - table[y0 * s + x1] - table[y1 * s + x0]
}

/// Sum of samples inside `rect` (which may have zero width or height).
pub fn rect_sum(ii: &IntegralPair, rect: Rect) -> Result<u64, DetectError> {
    check(ii, rect)?;
    Ok(table_rect(ii, &ii.sum, rect))
}

/// Sum of squared samples inside `rect`.
pub fn rect_sqsum(ii: &IntegralPair, rect: Rect) -> Result<u64, DetectError> {
    check(ii, rect)?;
    Ok(table_rect(ii, &ii.sqsum, rect))
}
