//! Sub-band decomposition, fusion, and Bayesian binarization of text lines.
//!
//! A color line image is decomposed in three domains (color channels, one-level
//! Haar detail bands, gradient magnitudes), each domain's three sub-bands are
//! summed into a fused image, the fused images are smoothed, and a pixelwise
//! Bayesian posterior for the text class is thresholded into a mask.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{BinaryImage, ColorImage, GrayImage};

/// Sub-band domain selector for [`decompose_and_combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Color,
    Wavelet,
    Gradient,
}

/// Configuration for binarization.
#[derive(Debug, Clone)]
pub struct BinarizeConfig {
    /// Posterior threshold, inclusive.
    pub gamma: f64,
    /// Mean-filter window size, odd.
    pub smooth_kernel: usize,
}

impl Default for BinarizeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            smooth_kernel: 3,
        }
    }
}

impl BinarizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig("gamma must be in (0,1)".into()));
        }
        if self.smooth_kernel == 0 || self.smooth_kernel % 2 == 0 {
            return Err(Error::InvalidConfig("smooth_kernel must be odd and >= 1".into()));
        }
        Ok(())
    }
}

/// Class priors for the Bayesian fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub p_text: f64,
    pub p_nontext: f64,
}

impl Priors {
    pub fn new(p_text: f64, p_nontext: f64) -> Result<Self> {
        if !(p_text > 0.0 && p_text < 1.0 && p_nontext > 0.0 && p_nontext < 1.0) {
            return Err(Error::InvalidConfig("priors must be in (0,1)".into()));
        }
        if (p_text + p_nontext - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("priors must sum to 1".into()));
        }
        Ok(Self { p_text, p_nontext })
    }
}

/// Min-max rescale to [0,1]; a constant input maps to all zeros.
fn rescale(mut img: Array2<f64>) -> Array2<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in img.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        img.fill(0.0);
        return img;
    }
    img.mapv_inplace(|v| (v - lo) / (hi - lo));
    img
}

/// Sum the three sub-bands of one domain and rescale to [0,1].
///
/// Color: R + G + B. Wavelet: one-level Haar LH + HL + HH magnitudes,
/// nearest-upsampled to full size. Gradient: horizontal, vertical and
/// diagonal difference magnitudes.
pub fn decompose_and_combine(img: &ColorImage, domain: Domain) -> GrayImage {
    let (h, w, _) = img.pixels.dim();
    let combined = match domain {
        Domain::Color => {
            let mut out = Array2::zeros((h, w));
            for y in 0..h {
                for x in 0..w {
                    out[[y, x]] = img.pixels[[y, x, 0]]
                        + img.pixels[[y, x, 1]]
                        + img.pixels[[y, x, 2]];
                }
            }
            out
        }
        Domain::Wavelet => haar_detail_sum(&img.to_gray()),
        Domain::Gradient => gradient_sum(&img.to_gray()),
    };
    GrayImage {
        pixels: rescale(combined),
    }
}

/// |LH| + |HL| + |HH| of a one-level Haar transform, each half-resolution band
/// nearest-upsampled back to the full image size. Odd dimensions are handled
/// by edge replication of the last row/column.
fn haar_detail_sum(gray: &GrayImage) -> Array2<f64> {
    let (h, w) = gray.pixels.dim();
    let at = |y: usize, x: usize| gray.pixels[[y.min(h - 1), x.min(w - 1)]];
    let hb = (h + 1) / 2;
    let wb = (w + 1) / 2;
    let mut detail = Array2::zeros((hb, wb));
    for by in 0..hb {
        for bx in 0..wb {
            let a = at(2 * by, 2 * bx);
            let b = at(2 * by, 2 * bx + 1);
            let c = at(2 * by + 1, 2 * bx);
            let d = at(2 * by + 1, 2 * bx + 1);
            // standard 2x2 Haar analysis, orthonormal scaling
            let lh = (a + b - c - d) / 2.0;
            let hl = (a - b + c - d) / 2.0;
            let hh = (a - b - c + d) / 2.0;
            detail[[by, bx]] = lh.abs() + hl.abs() + hh.abs();
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            out[[y, x]] = detail[[y / 2, x / 2]];
        }
    }
    out
}

/// Horizontal/vertical central difference magnitudes plus the |(+1,+1)|
/// diagonal difference magnitude, with clamped borders.
fn gradient_sum(gray: &GrayImage) -> Array2<f64> {
    let (h, w) = gray.pixels.dim();
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        gray.pixels[[y, x]]
    };
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let gh = (at(yi, xi + 1) - at(yi, xi - 1)).abs() / 2.0;
            let gv = (at(yi + 1, xi) - at(yi - 1, xi)).abs() / 2.0;
            let gd = (at(yi + 1, xi + 1) - at(yi, xi)).abs();
            out[[y, x]] = gh + gv + gd;
        }
    }
    out
}

/// Mean filter of size `smooth_kernel` with clamped borders.
pub fn smooth(img: &GrayImage, cfg: &BinarizeConfig) -> GrayImage {
    let k = cfg.smooth_kernel as isize;
    if k == 1 {
        return img.clone();
    }
    let r = k / 2;
    let (h, w) = img.pixels.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    sum += img.pixels[[sy, sx]];
                }
            }
            out[[y, x]] = sum / (k * k) as f64;
        }
    }
    GrayImage { pixels: out }
}

/// Otsu threshold over a 256-bin histogram of values in [0,1].
/// Returns the bin-center threshold maximizing between-class variance.
fn otsu_threshold(values: impl Iterator<Item = f64>) -> Option<f64> {
    const BINS: usize = 256;
    let mut hist = [0usize; BINS];
    let mut n = 0usize;
    for v in values {
        let b = ((v * (BINS as f64 - 1.0)).round() as usize).min(BINS - 1);
        hist[b] += 1;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let total: f64 = n as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for t in 0..BINS - 1 {
        w0 += hist[t] as f64;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        sum0 += t as f64 * hist[t] as f64;
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t);
        }
    }
    if best.0 <= 0.0 {
        return None; // all mass in one bin
    }
    Some((best.1 as f64 + 0.5) / (BINS as f64 - 1.0))
}

/// Estimate class priors by Otsu-thresholding the pixelwise average of the
/// three smoothed fused images. Degenerate (constant) input yields (0.5, 0.5).
pub fn estimate_priors(rgb_s: &GrayImage, wav_s: &GrayImage, grad_s: &GrayImage) -> Result<Priors> {
    check_same_dims(rgb_s, wav_s, grad_s)?;
    let (h, w) = rgb_s.pixels.dim();
    let avg: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            (rgb_s.pixels[[y, x]] + wav_s.pixels[[y, x]] + grad_s.pixels[[y, x]]) / 3.0
        })
        .collect();
    let thr = match otsu_threshold(avg.iter().copied()) {
        Some(t) => t,
        None => return Priors::new(0.5, 0.5),
    };
    let n_text = avg.iter().filter(|&&v| v > thr).count();
    if n_text == 0 || n_text == avg.len() {
        return Priors::new(0.5, 0.5);
    }
    let p = n_text as f64 / avg.len() as f64;
    Priors::new(p, 1.0 - p)
}

fn check_same_dims(a: &GrayImage, b: &GrayImage, c: &GrayImage) -> Result<()> {
    if a.pixels.dim() != b.pixels.dim() || a.pixels.dim() != c.pixels.dim() {
        return Err(Error::InvalidImage("smoothed sub-band images differ in size".into()));
    }
    Ok(())
}

/// Per-pixel text-class posterior: likelihoods are the mean of the three
/// smoothed values (text) and the mean of their complements (non-text).
/// A pixel where both likelihoods vanish gets posterior 0.
pub fn bayes_posterior(
    rgb_s: &GrayImage,
    wav_s: &GrayImage,
    grad_s: &GrayImage,
    priors: Priors,
) -> Result<GrayImage> {
    check_same_dims(rgb_s, wav_s, grad_s)?;
    let (h, w) = rgb_s.pixels.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let m = (rgb_s.pixels[[y, x]] + wav_s.pixels[[y, x]] + grad_s.pixels[[y, x]]) / 3.0;
            let lik_text = m;
            let lik_non = 1.0 - m;
            let num = lik_text * priors.p_text;
            let den = num + lik_non * priors.p_nontext;
            out[[y, x]] = if den > 0.0 { num / den } else { 0.0 };
        }
    }
    Ok(GrayImage { pixels: out })
}

/// Threshold the posterior: text iff posterior >= gamma.
pub fn binarize(posterior: &GrayImage, cfg: &BinarizeConfig) -> BinaryImage {
    BinaryImage {
        mask: posterior.pixels.map(|&v| v >= cfg.gamma),
    }
}

/// Full chain: decompose/fuse in three domains, smooth, estimate priors,
/// compute the posterior, threshold.
pub fn binarize_line(img: &ColorImage, cfg: &BinarizeConfig) -> Result<BinaryImage> {
    cfg.validate()?;
    let rgb = decompose_and_combine(img, Domain::Color);
    let wav = decompose_and_combine(img, Domain::Wavelet);
    let grad = decompose_and_combine(img, Domain::Gradient);
    let rgb_s = smooth(&rgb, cfg);
    let wav_s = smooth(&wav, cfg);
    let grad_s = smooth(&grad, cfg);
    let priors = estimate_priors(&rgb_s, &wav_s, &grad_s)?;
    let posterior = bayes_posterior(&rgb_s, &wav_s, &grad_s, priors)?;
    Ok(binarize(&posterior, cfg))
}
