//! Corner keypoints with binary intensity-comparison descriptors, matched by
//! Hamming distance under a ratio test and an absolute threshold.
//!
//! The image distance is the sum of the `top_n` smallest surviving match
//! distances. Each missing match (fewer than `top_n` survivors) costs the
//! maximum possible descriptor distance, so fewer matches never score better.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use crate::error::{Error, Result};

pub const DESCRIPTOR_BITS: usize = 256;
const DESCRIPTOR_WORDS: usize = DESCRIPTOR_BITS / 64;
const PATCH_RADIUS: isize = 15;
const BORDER: usize = PATCH_RADIUS as usize + 1;
const MAX_KEYPOINTS: usize = 500;
const HARRIS_K: f64 = 0.04;
const RESPONSE_FLOOR: f64 = 0.01;
const PATTERN_SEED: u64 = 0x5eed_b41e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor(pub [u64; DESCRIPTOR_WORDS]);

impl BinaryDescriptor {
    pub fn hamming(&self, other: &Self) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub response: f64,
    pub descriptor: BinaryDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchFilterParams {
    /// Percent of the maximum descriptor distance above which a match is dropped.
    pub match_threshold: f64,
    /// Lowe ratio: best / second-best distance must not exceed this.
    pub max_ratio: f64,
    /// Number of strongest matches summed.
    pub top_n: usize,
}

impl Default for MatchFilterParams {
    fn default() -> Self {
        MatchFilterParams {
            match_threshold: 20.0,
            max_ratio: 0.7,
            top_n: 20,
        }
    }
}

impl MatchFilterParams {
    pub fn new(match_threshold: f64, max_ratio: f64, top_n: usize) -> Result<Self> {
        if !(match_threshold > 0.0 && match_threshold <= 100.0) {
            return Err(Error::invalid(
                "match filter",
                format!("match_threshold {match_threshold} outside (0, 100]"),
            ));
        }
        if !(max_ratio > 0.0 && max_ratio <= 1.0) {
            return Err(Error::invalid(
                "match filter",
                format!("max_ratio {max_ratio} outside (0, 1]"),
            ));
        }
        if top_n == 0 {
            return Err(Error::invalid("match filter", "top_n must be positive"));
        }
        Ok(MatchFilterParams {
            match_threshold,
            max_ratio,
            top_n,
        })
    }

    /// Score when no match survives.
    pub fn full_penalty(&self) -> f64 {
        self.top_n as f64 * DESCRIPTOR_BITS as f64
    }
}

/// Separable [1 4 6 4 1] / 16 smoothing with replicated borders.
fn binomial_blur(img: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (img.width(), img.height());
    let tmp = GrayImage::from_fn(w, h, |x, y| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * img.get_clamped(x as isize + i as isize - 2, y as isize))
            .sum()
    });
    GrayImage::from_fn(w, h, |x, y| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * tmp.get_clamped(x as isize, y as isize + i as isize - 2))
            .sum()
    })
}

fn harris_response(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi));
            let gy = 0.5 * (img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1));
            ixx[y * w + x] = gx * gx;
            iyy[y * w + x] = gy * gy;
            ixy[y * w + x] = gx * gy;
        }
    }
    let window = |m: &[f64], x: usize, y: usize| -> f64 {
        let mut s = 0.0;
        for dy in -2isize..=2 {
            let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            for dx in -2isize..=2 {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                s += m[yy * w + xx];
            }
        }
        s
    };
    let mut r = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b, c) = (window(&ixx, x, y), window(&iyy, x, y), window(&ixy, x, y));
            let trace = a + b;
            r[y * w + x] = a * b - c * c - HARRIS_K * trace * trace;
        }
    }
    r
}

/// A BRIEF test: compare the pixels at two offsets from the keypoint.
type PixelPair = ((isize, isize), (isize, isize));

fn sampling_pattern() -> &'static [PixelPair] {
    static PATTERN: OnceLock<Vec<PixelPair>> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let normal = Normal::new(0.0, (2 * PATCH_RADIUS + 1) as f64 / 5.0).expect("valid sigma");
        let sample = |rng: &mut ChaCha8Rng| -> isize {
            (normal.sample(rng).round() as isize).clamp(-PATCH_RADIUS, PATCH_RADIUS)
        };
        let mut pattern = Vec::with_capacity(DESCRIPTOR_BITS);
        while pattern.len() < DESCRIPTOR_BITS {
            let p = (sample(&mut rng), sample(&mut rng));
            let q = (sample(&mut rng), sample(&mut rng));
            if p != q {
                pattern.push((p, q));
            }
        }
        pattern
    })
}

fn describe(smooth: &GrayImage, x: usize, y: usize) -> BinaryDescriptor {
    let mut words = [0u64; DESCRIPTOR_WORDS];
    for (bit, &((px, py), (qx, qy))) in sampling_pattern().iter().enumerate() {
        let a = smooth.get((x as isize + px) as usize, (y as isize + py) as usize);
        let b = smooth.get((x as isize + qx) as usize, (y as isize + qy) as usize);
        if a < b {
            words[bit / 64] |= 1 << (bit % 64);
        }
    }
    BinaryDescriptor(words)
}

/// Harris corners (3x3 non-maximum suppression, strongest first) with their
/// 256-bit descriptors. Corners closer than the patch radius to the border
/// are skipped.
pub fn detect_keypoints(image: &GrayImage) -> Vec<Keypoint> {
    let (w, h) = (image.width(), image.height());
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let blurred = binomial_blur(image);
    let response = harris_response(&blurred);
    let max_r = response.iter().copied().fold(0.0f64, f64::max);
    if max_r <= 1e-12 {
        return Vec::new();
    }
    let floor = RESPONSE_FLOOR * max_r;

    let mut corners = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let r = response[y * w + x];
            if r <= floor {
                continue;
            }
            let mut is_max = true;
            'nbhd: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = response[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    // ties resolve toward the earlier pixel in raster order
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > r || (earlier && n == r) {
                        is_max = false;
                        break 'nbhd;
                    }
                }
            }
            if is_max {
                corners.push((x, y, r));
            }
        }
    }
    corners.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    corners.truncate(MAX_KEYPOINTS);

    let smooth = binomial_blur(&blurred);
    corners
        .into_iter()
        .map(|(x, y, response)| Keypoint {
            x,
            y,
            response,
            descriptor: describe(&smooth, x, y),
        })
        .collect()
}

/// Sum of the `top_n` smallest match distances that pass both filters, with
/// the missing-match penalty applied.
pub fn match_distance(query: &[Keypoint], reference: &[Keypoint], params: &MatchFilterParams) -> f64 {
    let max_distance = DESCRIPTOR_BITS as f64;
    let threshold = params.match_threshold / 100.0 * max_distance;
    let mut survivors: Vec<u32> = Vec::new();
    for q in query {
        let mut best = u32::MAX;
        let mut second = u32::MAX;
        for r in reference {
            let d = q.descriptor.hamming(&r.descriptor);
            if d < best {
                second = best;
                best = d;
            } else if d < second {
                second = d;
            }
        }
        if best == u32::MAX || f64::from(best) > threshold {
            continue;
        }
        // A lone reference descriptor has no rival, so the ratio test passes.
        let ratio = match second {
            u32::MAX => 0.0,
            0 => 1.0,
            s => f64::from(best) / f64::from(s),
        };
        if ratio > params.max_ratio {
            continue;
        }
        survivors.push(best);
    }
    survivors.sort_unstable();
    let kept = survivors.len().min(params.top_n);
    let matched: f64 = survivors[..kept].iter().map(|&d| f64::from(d)).sum();
    matched + (params.top_n - kept) as f64 * max_distance
}

pub fn local_feature_distance(query: &GrayImage, reference: &GrayImage, params: &MatchFilterParams) -> f64 {
    match_distance(&detect_keypoints(query), &detect_keypoints(reference), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn textured(seed: u64, size: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // blocky random texture: 6x6 px tiles give well-separated corners
        let tiles = size / 6 + 1;
        let levels: Vec<f64> = (0..tiles * tiles).map(|_| rng.random::<f64>()).collect();
        GrayImage::from_fn(size, size, |x, y| levels[(y / 6) * tiles + x / 6])
    }

    fn kp(bits: &[usize]) -> Keypoint {
        let mut words = [0u64; DESCRIPTOR_WORDS];
        for &b in bits {
            words[b / 64] |= 1 << (b % 64);
        }
        Keypoint {
            x: 0,
            y: 0,
            response: 1.0,
            descriptor: BinaryDescriptor(words),
        }
    }

    #[test]
    fn identical_images_score_zero() {
        let img = textured(1, 120);
        let kps = detect_keypoints(&img);
        assert!(kps.len() >= 20, "only {} keypoints", kps.len());
        assert_eq!(local_feature_distance(&img, &img, &MatchFilterParams::default()), 0.0);
    }

    #[test]
    fn blank_query_gets_full_penalty() {
        let blank = GrayImage::from_fn(120, 120, |_, _| 0.5);
        assert!(detect_keypoints(&blank).is_empty());
        let params = MatchFilterParams::default();
        assert_eq!(
            local_feature_distance(&blank, &textured(2, 120), &params),
            20.0 * 256.0
        );
        assert_eq!(params.full_penalty(), 5120.0);
    }

    /// Hand-built descriptors; each case enumerates what the matcher must do.
    #[test]
    fn ratio_and_threshold_decisions() {
        let params = MatchFilterParams::new(20.0, 0.7, 3).unwrap();
        // q0: refs at distance 4 and 4 -> ratio 1.0 > 0.7, excluded
        // q1: refs at distance 2 and 40 -> ratio 0.05, kept (2)
        // q2: best distance 60 > 51.2 threshold, excluded
        let refs = vec![
            kp(&[0, 1, 2, 3]),
            kp(&[4, 5, 6, 7]),
            kp(&(100..140).collect::<Vec<_>>()),
        ];
        let q0 = kp(&[]); // d(ref0)=4, d(ref1)=4, d(ref2)=40
        let q1 = kp(&(100..138).collect::<Vec<_>>()); // d(ref2)=2, d(ref0)=42, d(ref1)=42
        let q2 = kp(&(160..224).collect::<Vec<_>>()); // >= 64 from every ref
        assert_eq!(q0.descriptor.hamming(&refs[0].descriptor), 4);
        assert_eq!(q0.descriptor.hamming(&refs[1].descriptor), 4);
        assert_eq!(q1.descriptor.hamming(&refs[2].descriptor), 2);

        let only_q0 = match_distance(std::slice::from_ref(&q0), &refs, &params);
        assert_eq!(only_q0, 3.0 * 256.0);
        let all = match_distance(&[q0, q1, q2], &refs, &params);
        // one survivor with distance 2, two missing matches
        assert_eq!(all, 2.0 + 2.0 * 256.0);
    }

    #[test]
    fn ratio_limit_is_inclusive() {
        let params = MatchFilterParams::new(100.0, 1.0, 1).unwrap();
        let refs = vec![kp(&[0]), kp(&[1])];
        assert_eq!(match_distance(&[kp(&[])], &refs, &params), 1.0);
    }

    #[test]
    fn top_n_keeps_smallest() {
        let params = MatchFilterParams::new(100.0, 0.7, 2).unwrap();
        let refs = vec![kp(&[]), kp(&(0..100).collect::<Vec<_>>())];
        let queries = vec![kp(&[1]), kp(&[1, 2, 3]), kp(&[1, 2])];
        assert_eq!(match_distance(&queries, &refs, &params), 1.0 + 2.0);
    }

    #[test]
    fn invalid_params() {
        assert!(MatchFilterParams::new(0.0, 0.7, 20).is_err());
        assert!(MatchFilterParams::new(20.0, 1.2, 20).is_err());
        assert!(MatchFilterParams::new(20.0, 0.7, 0).is_err());
    }

    #[test]
    fn self_match_is_minimal_on_corpus() {
        let corpus: Vec<GrayImage> = (0..6).map(|s| textured(100 + s, 96)).collect();
        let kps: Vec<Vec<Keypoint>> = corpus.iter().map(detect_keypoints).collect();
        let params = MatchFilterParams::default();
        for a in &kps {
            let own = match_distance(a, a, &params);
            for b in &kps {
                assert!(own <= match_distance(a, b, &params));
            }
        }
    }
}
