//! Gist: a bank of Gabor filters applied in the frequency domain, with the
//! response magnitude averaged over a coarse spatial grid.
//!
//! The image is resampled to 256x256. Each filter is a Gaussian in polar
//! frequency coordinates centred on one radial frequency and one direction,
//! with the DC and Nyquist rows/columns zeroed. Zeroing DC makes every filter
//! zero-mean; zeroing Nyquist keeps the bank closed under quarter turns.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::image::GrayImage;
use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub const GIST_INPUT_PX: usize = 256;
pub const GIST_SCALES: usize = 4;
pub const GIST_ORIENTATIONS: usize = 8;
pub const GIST_GRID: usize = 4;
pub const GIST_DIM: usize = GIST_SCALES * GIST_ORIENTATIONS * GIST_GRID * GIST_GRID;
const MIN_SIDE: usize = 16;

/// Peak radial frequency (cycles/pixel) of the finest scale.
const PEAK_FREQ: f64 = 0.3;
/// Each coarser scale divides the peak frequency by this factor.
const SCALE_STEP: f64 = 1.85;
const RADIAL_SHARPNESS: f64 = 0.35;

struct FilterBank {
    /// `GIST_SCALES * GIST_ORIENTATIONS` transfer functions, each in FFT order.
    filters: Vec<Vec<f64>>,
    forward: std::sync::Arc<dyn Fft<f64>>,
    inverse: std::sync::Arc<dyn Fft<f64>>,
}

fn signed_freq(k: usize, n: usize) -> isize {
    if k < n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

fn build_bank() -> FilterBank {
    let n = GIST_INPUT_PX;
    let nyquist = -(n as isize / 2);
    let angular_sharpness = 16.0 * (GIST_ORIENTATIONS * GIST_ORIENTATIONS) as f64 / (32.0 * 32.0);
    let mut filters = Vec::with_capacity(GIST_SCALES * GIST_ORIENTATIONS);
    for s in 0..GIST_SCALES {
        let peak = PEAK_FREQ / SCALE_STEP.powi(s as i32);
        for o in 0..GIST_ORIENTATIONS {
            let theta = PI * o as f64 / GIST_ORIENTATIONS as f64;
            let mut g = vec![0.0; n * n];
            for ky in 0..n {
                let fy = signed_freq(ky, n);
                for kx in 0..n {
                    let fx = signed_freq(kx, n);
                    if (fx == 0 && fy == 0) || fx == nyquist || fy == nyquist {
                        continue;
                    }
                    let radius = ((fx * fx + fy * fy) as f64).sqrt() / n as f64;
                    let mut dt = (fy as f64).atan2(fx as f64) - theta;
                    if dt < -PI {
                        dt += 2.0 * PI;
                    } else if dt > PI {
                        dt -= 2.0 * PI;
                    }
                    let radial = radius / peak - 1.0;
                    g[ky * n + kx] = (-10.0 * RADIAL_SHARPNESS * radial * radial
                        - 2.0 * angular_sharpness * PI * dt * dt)
                        .exp();
                }
            }
            filters.push(g);
        }
    }
    let mut planner = FftPlanner::new();
    FilterBank {
        filters,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn bank() -> &'static FilterBank {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    BANK.get_or_init(build_bank)
}

/// In-place 2-D transform of an `n x n` row-major buffer.
fn fft2(data: &mut [Complex<f64>], n: usize, fft: &dyn Fft<f64>) {
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            column[y] = data[y * n + x];
        }
        fft.process(&mut column);
        for y in 0..n {
            data[y * n + x] = column[y];
        }
    }
}

/// 512-dimensional Gist descriptor. Layout: scale, then orientation, then
/// grid row, then grid column.
pub fn compute_gist(image: &GrayImage) -> Result<FeatureVector> {
    if image.width() < MIN_SIDE || image.height() < MIN_SIDE {
        return Err(Error::invalid(
            "image",
            format!(
                "gist needs at least {MIN_SIDE}x{MIN_SIDE} pixels, got {}x{}",
                image.width(),
                image.height()
            ),
        ));
    }
    let n = GIST_INPUT_PX;
    let resized = image.resize_bilinear(n, n);
    let bank = bank();

    let mut spectrum: Vec<Complex<f64>> = resized
        .pixels()
        .iter()
        .map(|&p| Complex::new(p, 0.0))
        .collect();
    fft2(&mut spectrum, n, bank.forward.as_ref());

    let cell = n / GIST_GRID;
    let norm = 1.0 / (n * n) as f64;
    let mut out = Vec::with_capacity(GIST_DIM);
    let mut buf = vec![Complex::new(0.0, 0.0); n * n];
    for filter in &bank.filters {
        for ((b, s), &g) in buf.iter_mut().zip(&spectrum).zip(filter) {
            *b = s * g;
        }
        fft2(&mut buf, n, bank.inverse.as_ref());
        for gy in 0..GIST_GRID {
            for gx in 0..GIST_GRID {
                let mut sum = 0.0;
                for y in gy * cell..(gy + 1) * cell {
                    let row = &buf[y * n + gx * cell..y * n + (gx + 1) * cell];
                    sum += row.iter().map(|c| c.norm()).sum::<f64>();
                }
                out.push(sum * norm / (cell * cell) as f64);
            }
        }
    }
    FeatureVector::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index(s: usize, o: usize, gy: usize, gx: usize) -> usize {
        ((s * GIST_ORIENTATIONS + o) * GIST_GRID + gy) * GIST_GRID + gx
    }

    #[test]
    fn always_512() {
        for (w, h) in [(16, 16), (300, 200), (256, 256)] {
            let img = GrayImage::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 23) as f64 / 22.0);
            let v = compute_gist(&img).unwrap();
            assert_eq!(v.dim(), 512);
            assert!(v.values().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn constant_image_is_annihilated() {
        let img = GrayImage::from_fn(256, 256, |_, _| 0.8);
        let v = compute_gist(&img).unwrap();
        assert!(v.values().iter().all(|&x| x.abs() < 1e-6));
    }

    #[test]
    fn tiny_images_are_rejected() {
        let img = GrayImage::from_fn(15, 64, |_, _| 0.5);
        assert!(compute_gist(&img).is_err());
    }

    #[test]
    fn filters_are_zero_mean() {
        for g in &bank().filters {
            assert_eq!(g[0], 0.0);
        }
    }

    /// Quarter turn clockwise moves pixel (x, y) to (255 - y, x), so grid
    /// cell (gy, gx) lands at (gx, 3 - gy). Directions rotate by 90°, which
    /// is four orientation channels; lobes that wrap past 180° respond with
    /// the conjugate signal and so keep the same magnitude.
    #[test]
    fn quarter_turn_permutes_channels_and_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = GrayImage::from_fn(256, 256, |_, _| 0.0);
        let pixels: Vec<f64> = (0..256 * 256).map(|_| rng.random::<f64>()).collect();
        let img = GrayImage::new(img.width(), img.height(), pixels).unwrap();
        let rotated = img.rotate90();

        let a = compute_gist(&img).unwrap();
        let b = compute_gist(&rotated).unwrap();
        let mut worst = 0.0f64;
        for s in 0..GIST_SCALES {
            for o in 0..GIST_ORIENTATIONS {
                let o_rot = (o + GIST_ORIENTATIONS / 2) % GIST_ORIENTATIONS;
                for gy in 0..GIST_GRID {
                    for gx in 0..GIST_GRID {
                        let original = a.values()[index(s, o, gy, gx)];
                        let moved = b.values()[index(s, o_rot, gx, GIST_GRID - 1 - gy)];
                        worst = worst.max((original - moved).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-6, "max deviation {worst}");
    }
}
