//! Sliding-window pyramid-HOG features with optional delta/acceleration
//! augmentation.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{resize_binary_nearest, resize_gray_bilinear, BinaryImage, GrayImage};

/// Sliding-window and pyramid configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowConfig {
    pub line_height: usize,
    pub window_width: usize,
    pub overlap_fraction: f64,
    /// Limiting pyramid level K; levels 0..=K are concatenated.
    pub pyramid_levels: usize,
    /// Orientation bins over [0, 360).
    pub bins: usize,
    /// Regression half-width for delta features.
    pub theta_cap: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            line_height: 64,
            window_width: 16,
            overlap_fraction: 0.5,
            pyramid_levels: 2,
            bins: 8,
            theta_cap: 2,
        }
    }
}

impl WindowConfig {
    /// Descriptor dimension: bins * sum over levels of 4^N.
    pub fn descriptor_dim(&self) -> usize {
        self.bins * (0..=self.pyramid_levels).map(|n| 4usize.pow(n as u32)).sum::<usize>()
    }

    pub fn step(&self) -> usize {
        ((self.window_width as f64) * (1.0 - self.overlap_fraction)).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_width == 0 || self.window_width % 2 != 0 {
            return Err(Error::InvalidConfig("window_width must be even and > 0".into()));
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction < 1.0) {
            return Err(Error::InvalidConfig("overlap_fraction must be in (0,1)".into()));
        }
        if self.bins == 0 || self.line_height == 0 || self.theta_cap == 0 {
            return Err(Error::InvalidConfig("bins, line_height, theta_cap must be positive".into()));
        }
        Ok(())
    }
}

/// T x D matrix of per-window descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        let (t, _) = frames.dim();
        if t == 0 {
            return Err(Error::SequenceTooShort);
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite feature value".into()));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.dim().1
    }

    /// Contiguous sub-sequence of frames [a, b).
    pub fn slice(&self, a: usize, b: usize) -> Result<FeatureSequence> {
        if a >= b || b > self.len() {
            return Err(Error::SequenceTooShort);
        }
        Ok(FeatureSequence {
            frames: self.frames.slice(ndarray::s![a..b, ..]).to_owned(),
        })
    }
}

/// Image input to feature extraction: gray by default, binary masks treated
/// as {0,1} gray.
#[derive(Debug, Clone)]
pub enum LineImage {
    Gray(GrayImage),
    Binary(BinaryImage),
}

impl LineImage {
    pub fn height(&self) -> usize {
        match self {
            LineImage::Gray(g) => g.height(),
            LineImage::Binary(b) => b.height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            LineImage::Gray(g) => g.width(),
            LineImage::Binary(b) => b.width(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        match self {
            LineImage::Gray(g) => g.clone(),
            LineImage::Binary(b) => b.to_gray(),
        }
    }
}

/// Scale an image so its height equals `cfg.line_height`, width scaled by the
/// same factor (rounded to nearest, min 1). Bilinear for gray, nearest for
/// binary.
pub fn normalize_height(img: &LineImage, cfg: &WindowConfig) -> Result<LineImage> {
    let (h, w) = (img.height(), img.width());
    if h == 0 || w == 0 {
        return Err(Error::EmptyLine);
    }
    if h == cfg.line_height {
        return Ok(img.clone());
    }
    let factor = cfg.line_height as f64 / h as f64;
    let new_w = ((w as f64 * factor).round() as usize).max(1);
    Ok(match img {
        LineImage::Gray(g) => LineImage::Gray(resize_gray_bilinear(g, cfg.line_height, new_w)),
        LineImage::Binary(b) => {
            LineImage::Binary(resize_binary_nearest(b, cfg.line_height, new_w))
        }
    })
}

/// Window count for a line of width `w`.
pub fn frame_count(w: usize, cfg: &WindowConfig) -> usize {
    if w < cfg.window_width {
        1
    } else {
        (w - cfg.window_width) / cfg.step() + 1
    }
}

/// Extract the PHOG descriptor sequence from a height-normalized line image.
///
/// Per window, gradient orientations in [0, 360) are quantized into
/// `cfg.bins` magnitude-weighted bins, accumulated per cell of a
/// 2^N x 2^N grid at each pyramid level, the levels concatenated, and the
/// whole vector L2-normalized (zero vectors left as zero).
pub fn extract_phog_sequence(img: &LineImage, cfg: &WindowConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    if img.height() != cfg.line_height {
        return Err(Error::InvalidImage(format!(
            "line height {} != configured {}",
            img.height(),
            cfg.line_height
        )));
    }
    let gray = img.to_gray();
    let (h, w) = gray.pixels.dim();
    // central-difference gradients with clamped borders, signed
    let at = |y: isize, x: isize| {
        gray.pixels[[
            y.clamp(0, h as isize - 1) as usize,
            x.clamp(0, w as isize - 1) as usize,
        ]]
    };
    let mut gx = Array2::zeros((h, w));
    let mut gy = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            gx[[y, x]] = (at(yi, xi + 1) - at(yi, xi - 1)) / 2.0;
            gy[[y, x]] = (at(yi + 1, xi) - at(yi - 1, xi)) / 2.0;
        }
    }

    let t = frame_count(w, cfg);
    let d = cfg.descriptor_dim();
    let step = cfg.step();
    let ww = cfg.window_width;
    let mut frames = Array2::zeros((t, d));
    for fi in 0..t {
        let x0 = fi * step;
        let desc = phog_window(&gx, &gy, x0, ww, h, cfg);
        for (j, v) in desc.into_iter().enumerate() {
            frames[[fi, j]] = v;
        }
    }
    FeatureSequence::new(frames)
}

fn phog_window(
    gx: &Array2<f64>,
    gy: &Array2<f64>,
    x0: usize,
    ww: usize,
    h: usize,
    cfg: &WindowConfig,
) -> Vec<f64> {
    let w_img = gx.dim().1;
    let mut desc = vec![0.0; cfg.descriptor_dim()];
    let bin_width = 2.0 * std::f64::consts::PI / cfg.bins as f64;
    let mut offset = 0;
    for level in 0..=cfg.pyramid_levels {
        let grid = 1usize << level; // 2^N cells per side
        for dy in 0..h {
            for dx in 0..ww {
                let x = x0 + dx;
                if x >= w_img {
                    continue; // zero padding of a partial window
                }
                let (vx, vy) = (gx[[dy, x]], gy[[dy, x]]);
                let mag = (vx * vx + vy * vy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut theta = vy.atan2(vx);
                if theta < 0.0 {
                    theta += 2.0 * std::f64::consts::PI;
                }
                let bin = ((theta / bin_width) as usize).min(cfg.bins - 1);
                let cy = (dy * grid / h).min(grid - 1);
                let cx = (dx * grid / ww).min(grid - 1);
                let cell = cy * grid + cx;
                desc[offset + cell * cfg.bins + bin] += mag;
            }
        }
        offset += grid * grid * cfg.bins;
    }
    let norm: f64 = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut desc {
            *v /= norm;
        }
    }
    desc
}

/// First-order regression (delta) coefficients with edge clamping.
pub fn delta(seq: &FeatureSequence, theta_cap: usize) -> Result<FeatureSequence> {
    if theta_cap == 0 {
        return Err(Error::InvalidConfig("theta_cap must be >= 1".into()));
    }
    let (t, d) = seq.frames.dim();
    let denom: f64 = 2.0 * (1..=theta_cap).map(|th| (th * th) as f64).sum::<f64>();
    let mut out = Array2::zeros((t, d));
    for ti in 0..t {
        for th in 1..=theta_cap {
            let fwd = (ti + th).min(t - 1);
            let bwd = ti.saturating_sub(th);
            for j in 0..d {
                out[[ti, j]] += th as f64 * (seq.frames[[fwd, j]] - seq.frames[[bwd, j]]);
            }
        }
    }
    out.mapv_inplace(|v| v / denom);
    FeatureSequence::new(out)
}

/// Concatenate [static | delta | acceleration] per frame.
pub fn augment_dynamic(seq: &FeatureSequence, cfg: &WindowConfig) -> Result<FeatureSequence> {
    let d1 = delta(seq, cfg.theta_cap)?;
    let d2 = delta(&d1, cfg.theta_cap)?;
    let (t, d) = seq.frames.dim();
    let mut out = Array2::zeros((t, 3 * d));
    for ti in 0..t {
        for j in 0..d {
            out[[ti, j]] = seq.frames[[ti, j]];
            out[[ti, d + j]] = d1.frames[[ti, j]];
            out[[ti, 2 * d + j]] = d2.frames[[ti, j]];
        }
    }
    FeatureSequence::new(out)
}

const FSEQ_MAGIC: &[u8; 4] = b"FSEQ";
const FSEQ_VERSION: u32 = 1;

/// Dump a sequence as a flat binary: magic, version, T, D (u32 LE) then
/// T*D little-endian f32 values.
pub fn write_sequence(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let io = |e| Error::Io(path.display().to_string(), e);
    let mut f = std::fs::File::create(path).map_err(io)?;
    let (t, d) = seq.frames.dim();
    f.write_all(FSEQ_MAGIC).map_err(io)?;
    f.write_all(&FSEQ_VERSION.to_le_bytes()).map_err(io)?;
    f.write_all(&(t as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(t * d * 4);
    for v in seq.frames.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    f.write_all(&buf).map_err(io)
}

pub fn read_sequence(path: &Path) -> Result<FeatureSequence> {
    let io = |e| Error::Io(path.display().to_string(), e);
    let mut f = std::fs::File::open(path).map_err(io)?;
    let mut header = [0u8; 16];
    f.read_exact(&mut header).map_err(io)?;
    if &header[0..4] != FSEQ_MAGIC {
        return Err(Error::Format("bad feature sequence magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FSEQ_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FSEQ_VERSION,
        });
    }
    let t = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; t * d * 4];
    f.read_exact(&mut buf).map_err(io)?;
    let mut frames = Array2::zeros((t, d));
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        frames[[i / d, i % d]] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    FeatureSequence::new(frames)
}
