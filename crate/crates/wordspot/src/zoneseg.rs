//! Three-zone segmentation of Indic text lines.
//!
//! Bangla and Devanagari words hang from a headline (the Matra). The row
//! with the strongest horizontal projection locates it; the zone between the
//! headline band and the descender tail is where most strokes live, and it
//! is the slice used for spotting.

use ndarray::s;

use crate::error::{Error, Result};
use crate::image::BinaryImage;

/// Scripts the pipeline distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Script {
    Bangla,
    Devanagari,
    English,
}

impl Script {
    pub fn has_matra(self) -> bool {
        matches!(self, Script::Bangla | Script::Devanagari)
    }

    pub fn name(self) -> &'static str {
        match self {
            Script::Bangla => "bangla",
            Script::Devanagari => "devanagari",
            Script::English => "english",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bangla" => Ok(Script::Bangla),
            "devanagari" => Ok(Script::Devanagari),
            "english" => Ok(Script::English),
            other => Err(Error::UnknownLabel(format!("script '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneBoundaries {
    pub matra_row: usize,
    /// Last row of the headline band; rows above and including it form the
    /// upper zone.
    pub band_bottom: usize,
    /// Last row of the middle zone.
    pub lower_boundary_row: usize,
}

#[derive(Debug, Clone)]
pub struct ZonedLine {
    pub upper: BinaryImage,
    pub middle: BinaryImage,
    pub lower: BinaryImage,
    pub boundaries: ZoneBoundaries,
}

/// Per-row foreground pixel counts.
pub fn horizontal_projection(img: &BinaryImage) -> Vec<usize> {
    (0..img.height())
        .map(|y| img.mask.row(y).iter().filter(|&&v| v).count())
        .collect()
}

/// Fraction of the peak a row must reach to belong to the headline band.
pub const MATRA_BAND_FRACTION: f64 = 0.8;
/// Fraction of the peak a row must reach to still count as middle zone.
pub const LOWER_ALPHA: f64 = 0.2;

/// Split a Matra-bearing line into upper, middle, and lower zones.
pub fn segment_zones(img: &BinaryImage, script: Script) -> Result<ZonedLine> {
    if !script.has_matra() {
        return Err(Error::ZoneNotApplicable(script.name().to_string()));
    }
    let profile = horizontal_projection(img);
    let peak = *profile.iter().max().ok_or(Error::EmptyLine)?;
    if peak == 0 {
        return Err(Error::EmptyLine);
    }
    let h = img.height();
    let matra_row = profile.iter().position(|&v| v == peak).unwrap();

    // headline band: contiguous rows around the peak at ≥ 0.8·peak
    let band_level = MATRA_BAND_FRACTION * peak as f64;
    let mut band_top = matra_row;
    while band_top > 0 && profile[band_top - 1] as f64 >= band_level {
        band_top -= 1;
    }
    let mut band_bottom = matra_row;
    while band_bottom + 1 < h && profile[band_bottom + 1] as f64 >= band_level {
        band_bottom += 1;
    }

    if band_bottom + 2 >= h {
        return Err(Error::InvalidImage(
            "line too short for zone segmentation".into(),
        ));
    }

    // lowest row below the band still carrying enough mass
    let alpha_level = LOWER_ALPHA * peak as f64;
    let mut lower_boundary = band_bottom;
    for r in (band_bottom + 1)..h {
        if profile[r] as f64 >= alpha_level {
            lower_boundary = r;
        }
    }
    // middle and lower zones each keep at least one row
    let lower_boundary = lower_boundary.max(band_bottom + 1).min(h - 2);

    let slice = |r0: usize, r1: usize| -> Result<BinaryImage> {
        BinaryImage::new(img.mask.slice(s![r0..r1, ..]).to_owned())
    };
    Ok(ZonedLine {
        upper: slice(0, band_bottom + 1)?,
        middle: slice(band_bottom + 1, lower_boundary + 1)?,
        lower: slice(lower_boundary + 1, h)?,
        boundaries: ZoneBoundaries {
            matra_row,
            band_bottom,
            lower_boundary_row: lower_boundary,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn from_rows(rows: &[(usize, usize)], h: usize, w: usize) -> BinaryImage {
        // rows: (row index, number of foreground pixels)
        let mut mask = Array2::from_elem((h, w), false);
        for &(r, count) in rows {
            for x in 0..count.min(w) {
                mask[[r, x]] = true;
            }
        }
        BinaryImage::new(mask).unwrap()
    }

    #[test]
    fn projection_trivial_cases() {
        let blank = BinaryImage::new(Array2::from_elem((4, 6), false)).unwrap();
        assert_eq!(horizontal_projection(&blank), vec![0; 4]);
        let single = from_rows(&[(2, 6)], 4, 6);
        assert_eq!(horizontal_projection(&single), vec![0, 0, 6, 0]);
    }

    #[test]
    fn projection_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mask = Array2::from_shape_fn((20, 30), |_| rng.gen_bool(0.4));
        let img = BinaryImage::new(mask.clone()).unwrap();
        let got = horizontal_projection(&img);
        for y in 0..20 {
            let mut n = 0;
            for x in 0..30 {
                if mask[[y, x]] {
                    n += 1;
                }
            }
            assert_eq!(got[y], n);
        }
    }

    #[test]
    fn constructed_profile_with_known_answer() {
        // dense full-width headline at row 5, a body, a sparse tail
        let mut rows = vec![(5usize, 100usize)];
        for r in 6..=40 {
            rows.push((r, 50));
        }
        for r in 41..=50 {
            rows.push((r, 10));
        }
        let img = from_rows(&rows, 51, 100);
        let zl = segment_zones(&img, Script::Bangla).unwrap();
        assert_eq!(zl.boundaries.matra_row, 5);
        assert_eq!(zl.boundaries.lower_boundary_row, 40);
        assert_eq!(zl.upper.height() + zl.middle.height() + zl.lower.height(), 51);
    }

    #[test]
    fn peak_at_top_row_without_tail() {
        let mut rows = vec![(0usize, 100usize)];
        for r in 1..10 {
            rows.push((r, 60));
        }
        let img = from_rows(&rows, 10, 100);
        let zl = segment_zones(&img, Script::Devanagari).unwrap();
        assert_eq!(zl.boundaries.matra_row, 0);
        // middle zone spans rows 1..height−1 when every body row clears α·peak
        assert_eq!(zl.upper.height(), 1);
        assert_eq!(zl.middle.height(), 9 - 1);
        assert_eq!(zl.lower.height(), 1);
    }

    #[test]
    fn tie_breaks_to_lowest_row() {
        let img = from_rows(&[(5, 80), (7, 80), (6, 10)], 12, 100);
        let zl = segment_zones(&img, Script::Bangla).unwrap();
        assert_eq!(zl.boundaries.matra_row, 5);
    }

    #[test]
    fn zones_partition_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let h = rng.gen_range(8..40);
            let w = rng.gen_range(10..60);
            let mut mask = Array2::from_shape_fn((h, w), |_| rng.gen_bool(0.3));
            mask[[rng.gen_range(0..h), 0]] = true; // never blank
            let img = BinaryImage::new(mask).unwrap();
            let zl = match segment_zones(&img, Script::Bangla) {
                Ok(zl) => zl,
                // headline band reaching the bottom rows is legitimately
                // unsegmentable
                Err(Error::InvalidImage(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            assert_eq!(
                zl.upper.height() + zl.middle.height() + zl.lower.height(),
                h
            );
            assert_eq!(
                zl.upper.foreground_count()
                    + zl.middle.foreground_count()
                    + zl.lower.foreground_count(),
                img.foreground_count()
            );
            let profile = horizontal_projection(&img);
            let peak = *profile.iter().max().unwrap();
            assert_eq!(profile[zl.boundaries.matra_row], peak);
        }
    }

    #[test]
    fn english_and_blank_inputs_are_errors() {
        let img = from_rows(&[(1, 5)], 4, 8);
        assert!(matches!(
            segment_zones(&img, Script::English),
            Err(Error::ZoneNotApplicable(_))
        ));
        let blank = BinaryImage::new(Array2::from_elem((4, 8), false)).unwrap();
        assert!(matches!(
            segment_zones(&blank, Script::Bangla),
            Err(Error::EmptyLine)
        ));
    }
}
