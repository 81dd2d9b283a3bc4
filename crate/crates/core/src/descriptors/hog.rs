//! Dalal–Triggs HOG: 9 unsigned orientation bins per cell, 2x2-cell blocks
//! at a stride of one cell, L2 block normalization.

use std::f64::consts::PI;

use super::image::GrayImage;
use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub const HOG_BINS: usize = 9;
const BLOCK_CELLS: usize = 2;
const BLOCK_EPS: f64 = 1e-3;

/// Descriptor length for an image of the given size, or `None` when the
/// cell size does not tile it into at least 2x2 cells.
pub fn hog_dim(width: usize, height: usize, cell_px: usize) -> Option<usize> {
    if cell_px == 0 || !width.is_multiple_of(cell_px) || !height.is_multiple_of(cell_px) {
        return None;
    }
    let (cx, cy) = (width / cell_px, height / cell_px);
    if cx < BLOCK_CELLS || cy < BLOCK_CELLS {
        return None;
    }
    Some((cx - 1) * (cy - 1) * BLOCK_CELLS * BLOCK_CELLS * HOG_BINS)
}

/// Orientation bin of a gradient, folding directions into `[0°, 180°)`.
fn orientation_bin(gx: f64, gy: f64) -> usize {
    let mut angle = gy.atan2(gx);
    if angle < 0.0 {
        angle += PI;
    }
    if angle >= PI {
        angle -= PI;
    }
    ((angle / PI * HOG_BINS as f64) as usize).min(HOG_BINS - 1)
}

/// Magnitude-weighted orientation histograms, one per cell, row-major over
/// cells. Gradients use `[-1, 0, 1]` with replicated borders.
pub(crate) fn cell_histograms(image: &GrayImage, cell_px: usize) -> Vec<[f64; HOG_BINS]> {
    let (w, h) = (image.width(), image.height());
    let cells_x = w / cell_px;
    let cells_y = h / cell_px;
    let mut hist = vec![[0.0; HOG_BINS]; cells_x * cells_y];
    for y in 0..cells_y * cell_px {
        for x in 0..cells_x * cell_px {
            let (xi, yi) = (x as isize, y as isize);
            let gx = image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi);
            let gy = image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let cell = (y / cell_px) * cells_x + x / cell_px;
            hist[cell][orientation_bin(gx, gy)] += mag;
        }
    }
    hist
}

/// HOG descriptor of `image`, whose sides must be multiples of `cell_px`
/// spanning at least two cells each.
pub fn compute_hog(image: &GrayImage, cell_px: usize) -> Result<FeatureVector> {
    let (w, h) = (image.width(), image.height());
    let dim = hog_dim(w, h, cell_px).ok_or_else(|| {
        Error::invalid(
            "image",
            format!("{w}x{h} image cannot be tiled into at least 2x2 cells of {cell_px} px"),
        )
    })?;
    let cells_x = w / cell_px;
    let cells_y = h / cell_px;
    let hist = cell_histograms(image, cell_px);

    let mut out = Vec::with_capacity(dim);
    let mut block = [0.0; BLOCK_CELLS * BLOCK_CELLS * HOG_BINS];
    for by in 0..cells_y - 1 {
        for bx in 0..cells_x - 1 {
            let mut i = 0;
            for cy in by..by + BLOCK_CELLS {
                for cx in bx..bx + BLOCK_CELLS {
                    block[i..i + HOG_BINS].copy_from_slice(&hist[cy * cells_x + cx]);
                    i += HOG_BINS;
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + BLOCK_EPS * BLOCK_EPS).sqrt();
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    debug_assert_eq!(out.len(), dim);
    FeatureVector::new(out)
}
