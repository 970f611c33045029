//! Shape coding: Zernike descriptors of normalized glyphs, agglomerative
//! clustering of class prototypes, and transcription encoding.
//!
//! Characters whose shapes are near-duplicates (E/F, D/O/Q/0 in many Latin
//! fonts) collapse onto one code, so a query matches every look-alike.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_binary_nearest, BinaryImage};

pub const GLYPH_SIZE: usize = 41;

/// A labelled, size-normalized character image.
#[derive(Debug, Clone)]
pub struct Glyph {
    pub label: String,
    pub image: BinaryImage,
}

/// Zernike moment magnitudes |Z_nm| for n ≤ n_max, 0 ≤ m ≤ n, n − m even.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeVector {
    pub n_max: u32,
    pub magnitudes: Vec<f64>,
}

impl ZernikeVector {
    /// Number of (n, m) pairs for a given order cap.
    pub fn len_for(n_max: u32) -> usize {
        (0..=n_max).map(|n| (n / 2 + 1) as usize).sum()
    }
}

/// One agglomeration step: clusters named by their smallest member index.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Full merge history of a single-linkage run.
#[derive(Debug, Clone, Default)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Merge list as tab-separated text for external plotting.
    pub fn to_text(&self) -> String {
        let mut out = String::from("a\tb\tdistance\n");
        for m in &self.merges {
            out.push_str(&format!("{}\t{}\t{:.12}\n", m.a, m.b, m.distance));
        }
        out
    }
}

const CODEBOOK_VERSION: u32 = 1;

/// Label to shape-code map produced by cutting the prototype dendrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCodebook {
    version: u32,
    pub cut_distance: f64,
    pub n_max: u32,
    /// Code ids are dense, 1-based.
    pub mapping: BTreeMap<String, usize>,
}

impl ShapeCodebook {
    pub fn code_count(&self) -> usize {
        let mut codes: Vec<usize> = self.mapping.values().copied().collect();
        codes.sort_unstable();
        codes.dedup();
        codes.len()
    }

    /// One code per label; encoding becomes a bijection.
    pub fn identity(labels: &[String], n_max: u32) -> Self {
        let mut sorted = labels.to_vec();
        sorted.sort();
        sorted.dedup();
        let mapping = sorted
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, i + 1))
            .collect();
        Self {
            version: CODEBOOK_VERSION,
            cut_distance: 0.0,
            n_max,
            mapping,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(path.display().to_string(), e))?;
        let cb: Self = serde_json::from_str(&text)?;
        if cb.version != CODEBOOK_VERSION {
            return Err(Error::VersionMismatch {
                found: cb.version,
                expected: CODEBOOK_VERSION,
            });
        }
        Ok(cb)
    }
}

fn bounding_box(mask: &Array2<bool>) -> Option<(usize, usize, usize, usize)> {
    let (h, w) = mask.dim();
    let mut top = h;
    let mut bottom = 0;
    let mut left = w;
    let mut right = 0;
    for y in 0..h {
        for x in 0..w {
            if mask[[y, x]] {
                top = top.min(y);
                bottom = bottom.max(y);
                left = left.min(x);
                right = right.max(x);
            }
        }
    }
    if top == h {
        None
    } else {
        Some((top, bottom, left, right))
    }
}

fn centroid(mask: &Array2<bool>) -> (f64, f64) {
    let mut cy = 0.0;
    let mut cx = 0.0;
    let mut n = 0.0;
    for ((y, x), &v) in mask.indexed_iter() {
        if v {
            cy += y as f64;
            cx += x as f64;
            n += 1.0;
        }
    }
    (cy / n, cx / n)
}

/// Crop to the foreground bounding box, scale to fit a 41×41 canvas keeping
/// aspect ratio, and shift so the centroid lands on the center pixel.
pub fn normalize_glyph(img: &BinaryImage) -> Result<BinaryImage> {
    let (top, bottom, left, right) = bounding_box(&img.mask).ok_or(Error::EmptyGlyph)?;
    let h = bottom - top + 1;
    let w = right - left + 1;
    let cropped = BinaryImage::new(
        img.mask
            .slice(ndarray::s![top..=bottom, left..=right])
            .to_owned(),
    )?;

    let scale = GLYPH_SIZE as f64 / h.max(w) as f64;
    let nh = ((h as f64 * scale).round() as usize).clamp(1, GLYPH_SIZE);
    let nw = ((w as f64 * scale).round() as usize).clamp(1, GLYPH_SIZE);
    let scaled = resize_binary_nearest(&cropped, nh, nw);
    if scaled.foreground_count() == 0 {
        return Err(Error::EmptyGlyph);
    }

    let (cy, cx) = centroid(&scaled.mask);
    let center = (GLYPH_SIZE / 2) as f64;
    let off_y = ((center - cy).round() as isize).clamp(0, (GLYPH_SIZE - nh) as isize);
    let off_x = ((center - cx).round() as isize).clamp(0, (GLYPH_SIZE - nw) as isize);

    let mut canvas = Array2::from_elem((GLYPH_SIZE, GLYPH_SIZE), false);
    for ((y, x), &v) in scaled.mask.indexed_iter() {
        if v {
            canvas[[y + off_y as usize, x + off_x as usize]] = true;
        }
    }
    BinaryImage::new(canvas)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Radial polynomial R_nm(ρ) for n − m even, m ≤ n.
pub fn radial_polynomial(n: u32, m: u32, rho: f64) -> f64 {
    let mut sum = 0.0;
    for s in 0..=((n - m) / 2) {
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        let num = factorial(n - s);
        let den = factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s);
        sum += sign * num / den * rho.powi((n - 2 * s) as i32);
    }
    sum
}

/// Zernike moment magnitudes of a normalized glyph. The image function is
/// mass-normalized and re-centered on the exact centroid, and the unit disk
/// is the circle circumscribing the canvas so no pixel falls outside it.
pub fn zernike_moments(image: &BinaryImage, n_max: u32) -> Result<ZernikeVector> {
    if image.foreground_count() == 0 {
        return Err(Error::EmptyGlyph);
    }
    let (h, w) = image.mask.dim();
    let (cy, cx) = centroid(&image.mask);
    let radius = (h.max(w) as f64) * std::f64::consts::SQRT_2 / 2.0;
    let mass = image.foreground_count() as f64;

    let mut magnitudes = Vec::with_capacity(ZernikeVector::len_for(n_max));
    let pixels: Vec<(f64, f64)> = image
        .mask
        .indexed_iter()
        .filter(|(_, &v)| v)
        .map(|((y, x), _)| {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            (dy / radius, dx / radius)
        })
        .collect();

    for n in 0..=n_max {
        let m0 = n % 2;
        for m in (m0..=n).step_by(2) {
            let mut re = 0.0;
            let mut im = 0.0;
            for &(dy, dx) in &pixels {
                let rho = (dy * dy + dx * dx).sqrt();
                let theta = dy.atan2(dx);
                let r = radial_polynomial(n, m, rho);
                let phase = m as f64 * theta;
                re += r * phase.cos();
                im -= r * phase.sin();
            }
            let norm = (n + 1) as f64 / (std::f64::consts::PI * mass);
            magnitudes.push(norm * (re * re + im * im).sqrt());
        }
    }
    Ok(ZernikeVector { n_max, magnitudes })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Single-linkage agglomerative clustering under the Euclidean metric.
///
/// Returns the partition at `cut_distance` (merging while the closest pair is
/// within the cut) and the complete dendrogram. Clusters are named by their
/// smallest member index; distance ties break toward the smallest (a, b).
pub fn single_linkage(points: &[Vec<f64>], cut_distance: f64) -> (Vec<Vec<usize>>, Dendrogram) {
    let n = points.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut dendrogram = Dendrogram::default();
    let mut at_cut: Option<Vec<Vec<usize>>> = None;

    while clusters.len() > 1 {
        let mut best = f64::INFINITY;
        let mut pair = (0usize, 0usize);
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let mut d = f64::INFINITY;
                for &p in &clusters[i] {
                    for &q in &clusters[j] {
                        let e = euclidean(&points[p], &points[q]);
                        if e < d {
                            d = e;
                        }
                    }
                }
                let key = (clusters[i][0], clusters[j][0]);
                if d < best || (d == best && key < (clusters[pair.0][0], clusters[pair.1][0])) {
                    best = d;
                    pair = (i, j);
                }
            }
        }
        if at_cut.is_none() && best > cut_distance {
            at_cut = Some(clusters.clone());
        }
        let (i, j) = pair;
        dendrogram.merges.push(Merge {
            a: clusters[i][0],
            b: clusters[j][0],
            distance: best,
        });
        let merged_j = clusters.remove(j);
        clusters[i].extend(merged_j);
        clusters[i].sort_unstable();
    }
    let partition = at_cut.unwrap_or(clusters);
    (partition, dendrogram)
}

/// Mean Zernike vector per label over that label's glyph images.
pub fn label_prototypes(
    glyph_sets: &BTreeMap<String, Vec<BinaryImage>>,
    n_max: u32,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (label, images) in glyph_sets {
        if images.is_empty() {
            return Err(Error::UnknownLabel(format!("label '{label}' has no glyphs")));
        }
        let dim = ZernikeVector::len_for(n_max);
        let mut mean = vec![0.0; dim];
        for img in images {
            let norm = normalize_glyph(img)?;
            let z = zernike_moments(&norm, n_max)?;
            for (m, v) in mean.iter_mut().zip(&z.magnitudes) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= images.len() as f64);
        out.insert(label.clone(), mean);
    }
    Ok(out)
}

/// Cut the prototype dendrogram at a fixed distance and number the clusters.
pub fn build_codebook_at(
    prototypes: &BTreeMap<String, Vec<f64>>,
    cut_distance: f64,
    n_max: u32,
) -> ShapeCodebook {
    let labels: Vec<&String> = prototypes.keys().collect();
    let points: Vec<Vec<f64>> = prototypes.values().cloned().collect();
    let (clusters, _) = single_linkage(&points, cut_distance);
    let mut ordered = clusters;
    ordered.sort_by_key(|c| c[0]);
    let mut mapping = BTreeMap::new();
    for (code, cluster) in ordered.iter().enumerate() {
        for &idx in cluster {
            mapping.insert(labels[idx].clone(), code + 1);
        }
    }
    ShapeCodebook {
        version: CODEBOOK_VERSION,
        cut_distance,
        n_max,
        mapping,
    }
}

/// Candidate cut distances derived from a dendrogram: zero, the midpoints
/// between consecutive distinct merge distances, and one step past the top.
pub fn cut_grid(dendrogram: &Dendrogram) -> Vec<f64> {
    let mut ds: Vec<f64> = dendrogram.merges.iter().map(|m| m.distance).collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ds.dedup();
    let mut grid = vec![0.0];
    for w in ds.windows(2) {
        grid.push((w[0] + w[1]) / 2.0);
    }
    if let Some(&last) = ds.last() {
        grid.push(last + 1.0);
    }
    grid
}

/// The selected cut and its two neighbours on the candidate grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutLevels {
    pub x_minus: f64,
    pub x0: f64,
    pub x_plus: f64,
}

/// Pick the grid cut whose codebook maximizes `score` (ties toward the
/// smaller cut) and report the adjacent grid levels.
pub fn select_cut_levels<F>(
    prototypes: &BTreeMap<String, Vec<f64>>,
    grid: &[f64],
    mut score: F,
) -> Result<CutLevels>
where
    F: FnMut(&ShapeCodebook) -> f64,
{
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty cut grid".into()));
    }
    let n_max = 0; // overwritten below per codebook; grid search only compares scores
    let mut best_idx = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &cut) in grid.iter().enumerate() {
        let cb = build_codebook_at(prototypes, cut, n_max);
        let s = score(&cb);
        if s > best_score {
            best_score = s;
            best_idx = i;
        }
    }
    Ok(CutLevels {
        x_minus: grid[best_idx.saturating_sub(1)],
        x0: grid[best_idx],
        x_plus: grid[(best_idx + 1).min(grid.len() - 1)],
    })
}

/// A shape-coded transcription token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeToken {
    Code(usize),
    Space,
}

/// Substitute each character of `text` by its shape code, keeping spaces.
pub fn encode_transcription(text: &str, cb: &ShapeCodebook) -> Result<Vec<CodeToken>> {
    let mut out = Vec::new();
    for ch in text.chars() {
        if ch == ' ' {
            out.push(CodeToken::Space);
        } else {
            let code = cb
                .mapping
                .get(&ch.to_string())
                .ok_or_else(|| Error::UnknownLabel(ch.to_string()))?;
            out.push(CodeToken::Code(*code));
        }
    }
    Ok(out)
}
