//! Raster image types shared by the whole pipeline.
//!
//! Intensities live in `[0, 1]`. Binary masks use `true` for text pixels.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// H x W x 3 color image with channel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub pixels: Array3<f64>,
}

impl ColorImage {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 || c != 3 {
            return Err(Error::InvalidImage(format!(
                "color image must be non-empty with 3 channels, got {h}x{w}x{c}"
            )));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidImage("channel value outside [0,1]".into()));
        }
        Ok(Self { pixels })
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    /// Luminance as the per-pixel mean of the three channels.
    pub fn to_gray(&self) -> GrayImage {
        let (h, w, _) = self.pixels.dim();
        let mut out = Array2::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                out[[y, x]] =
                    (self.pixels[[y, x, 0]] + self.pixels[[y, x, 1]] + self.pixels[[y, x, 2]])
                        / 3.0;
            }
        }
        GrayImage { pixels: out }
    }
}

/// H x W gray image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidImage("empty gray image".into()));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidImage("gray value outside [0,1]".into()));
        }
        Ok(Self { pixels })
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }
}

/// H x W boolean mask, true = text pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub mask: Array2<bool>,
}

impl BinaryImage {
    pub fn new(mask: Array2<bool>) -> Result<Self> {
        let (h, w) = mask.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidImage("empty binary image".into()));
        }
        Ok(Self { mask })
    }

    pub fn height(&self) -> usize {
        self.mask.dim().0
    }

    pub fn width(&self) -> usize {
        self.mask.dim().1
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    /// {0,1}-valued gray view, used when features are extracted from masks.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            pixels: self.mask.map(|&v| if v { 1.0 } else { 0.0 }),
        }
    }
}

/// Bilinear resize of a gray image to the given dimensions.
pub fn resize_gray_bilinear(img: &GrayImage, new_h: usize, new_w: usize) -> GrayImage {
    let (h, w) = img.pixels.dim();
    let mut out = Array2::zeros((new_h, new_w));
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    for oy in 0..new_h {
        for ox in 0..new_w {
            // sample at the source-space center of the destination pixel
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let y0 = fy.floor() as usize;
            let x0 = fx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let dy = fy - y0 as f64;
            let dx = fx - x0 as f64;
            let v = img.pixels[[y0, x0]] * (1.0 - dy) * (1.0 - dx)
                + img.pixels[[y0, x1]] * (1.0 - dy) * dx
                + img.pixels[[y1, x0]] * dy * (1.0 - dx)
                + img.pixels[[y1, x1]] * dy * dx;
            out[[oy, ox]] = v.clamp(0.0, 1.0);
        }
    }
    GrayImage { pixels: out }
}

/// Nearest-neighbor resize of a binary mask. The index mapping is identical
/// along both axes so 90-degree rotations commute with scaling.
pub fn resize_binary_nearest(img: &BinaryImage, new_h: usize, new_w: usize) -> BinaryImage {
    let (h, w) = img.mask.dim();
    let mut out = Array2::from_elem((new_h, new_w), false);
    for oy in 0..new_h {
        for ox in 0..new_w {
            let sy = (((oy as f64 + 0.5) * h as f64 / new_h as f64).floor() as usize).min(h - 1);
            let sx = (((ox as f64 + 0.5) * w as f64 / new_w as f64).floor() as usize).min(w - 1);
            out[[oy, ox]] = img.mask[[sy, sx]];
        }
    }
    BinaryImage { mask: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn color_new_rejects_out_of_range() {
        let mut px = Array3::zeros((2, 2, 3));
        px[[0, 0, 0]] = 1.5;
        assert!(ColorImage::new(px).is_err());
    }

    #[test]
    fn gray_new_rejects_empty() {
        assert!(GrayImage::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn bilinear_identity() {
        let img = GrayImage::new(arr2(&[[0.0, 0.5], [1.0, 0.25]])).unwrap();
        let out = resize_gray_bilinear(&img, 2, 2);
        assert_eq!(out, img);
    }

    #[test]
    fn nearest_halving_even_block() {
        let mask = arr2(&[
            [true, true, false, false],
            [true, true, false, false],
            [false, false, true, true],
            [false, false, true, true],
        ]);
        let img = BinaryImage::new(mask).unwrap();
        let out = resize_binary_nearest(&img, 2, 2);
        assert_eq!(out.mask, arr2(&[[true, false], [false, true]]));
    }
}
