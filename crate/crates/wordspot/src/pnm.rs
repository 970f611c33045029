//! Minimal PNM (PBM/PGM/PPM) reader and writer.
//!
//! Binary (P4/P5/P6) and ASCII (P1/P2/P3) variants are read; writes use the
//! binary variants. Masks are written as PBM where 1 = text pixel.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::image::{BinaryImage, ColorImage, GrayImage};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(path.display().to_string(), e)
}

struct Tokenizer<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokenizer<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn next_token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.data.len() {
            return Err(Error::Format("unexpected end of PNM header".into()));
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Ok(&self.data[start..self.pos])
    }

    fn next_usize(&mut self) -> Result<usize> {
        let tok = self.next_token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad integer in PNM header".into()))
    }

    /// Skip the single whitespace byte that terminates the header.
    fn skip_one(&mut self) {
        if self.pos < self.data.len() {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.data[self.pos..]
    }
}

enum Pnm {
    Gray(GrayImage),
    Color(ColorImage),
    Binary(BinaryImage),
}

fn parse(data: &[u8]) -> Result<Pnm> {
    let mut t = Tokenizer::new(data);
    let magic = t.next_token()?.to_vec();
    match magic.as_slice() {
        b"P1" | b"P4" => {
            let w = t.next_usize()?;
            let h = t.next_usize()?;
            if w == 0 || h == 0 {
                return Err(Error::Format("zero PNM dimension".into()));
            }
            let mut mask = Array2::from_elem((h, w), false);
            if magic == b"P1" {
                for y in 0..h {
                    for x in 0..w {
                        mask[[y, x]] = t.next_usize()? != 0;
                    }
                }
            } else {
                t.skip_one();
                let rest = t.rest();
                let row_bytes = (w + 7) / 8;
                if rest.len() < row_bytes * h {
                    return Err(Error::Format("truncated PBM payload".into()));
                }
                for y in 0..h {
                    for x in 0..w {
                        let byte = rest[y * row_bytes + x / 8];
                        mask[[y, x]] = (byte >> (7 - x % 8)) & 1 == 1;
                    }
                }
            }
            Ok(Pnm::Binary(BinaryImage::new(mask)?))
        }
        b"P2" | b"P5" => {
            let w = t.next_usize()?;
            let h = t.next_usize()?;
            let maxval = t.next_usize()?;
            if maxval == 0 || maxval > 255 {
                return Err(Error::Format("unsupported PGM maxval".into()));
            }
            let mut px = Array2::zeros((h.max(1), w.max(1)));
            if magic == b"P2" {
                for y in 0..h {
                    for x in 0..w {
                        px[[y, x]] = t.next_usize()? as f64 / maxval as f64;
                    }
                }
            } else {
                t.skip_one();
                let rest = t.rest();
                if rest.len() < w * h {
                    return Err(Error::Format("truncated PGM payload".into()));
                }
                for y in 0..h {
                    for x in 0..w {
                        px[[y, x]] = rest[y * w + x] as f64 / maxval as f64;
                    }
                }
            }
            Ok(Pnm::Gray(GrayImage::new(px)?))
        }
        b"P3" | b"P6" => {
            let w = t.next_usize()?;
            let h = t.next_usize()?;
            let maxval = t.next_usize()?;
            if maxval == 0 || maxval > 255 {
                return Err(Error::Format("unsupported PPM maxval".into()));
            }
            let mut px = Array3::zeros((h.max(1), w.max(1), 3));
            if magic == b"P3" {
                for y in 0..h {
                    for x in 0..w {
                        for c in 0..3 {
                            px[[y, x, c]] = t.next_usize()? as f64 / maxval as f64;
                        }
                    }
                }
            } else {
                t.skip_one();
                let rest = t.rest();
                if rest.len() < w * h * 3 {
                    return Err(Error::Format("truncated PPM payload".into()));
                }
                for y in 0..h {
                    for x in 0..w {
                        for c in 0..3 {
                            px[[y, x, c]] = rest[(y * w + x) * 3 + c] as f64 / maxval as f64;
                        }
                    }
                }
            }
            Ok(Pnm::Color(ColorImage::new(px)?))
        }
        other => Err(Error::Format(format!(
            "unknown PNM magic {:?}",
            String::from_utf8_lossy(other)
        ))),
    }
}

pub fn read_color(path: &Path) -> Result<ColorImage> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    match parse(&data)? {
        Pnm::Color(c) => Ok(c),
        Pnm::Gray(g) => {
            let (h, w) = g.pixels.dim();
            let mut px = Array3::zeros((h, w, 3));
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        px[[y, x, c]] = g.pixels[[y, x]];
                    }
                }
            }
            ColorImage::new(px)
        }
        Pnm::Binary(b) => {
            let g = b.to_gray();
            let (h, w) = g.pixels.dim();
            let mut px = Array3::zeros((h, w, 3));
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        px[[y, x, c]] = g.pixels[[y, x]];
                    }
                }
            }
            ColorImage::new(px)
        }
    }
}

pub fn read_binary(path: &Path) -> Result<BinaryImage> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    match parse(&data)? {
        Pnm::Binary(b) => Ok(b),
        Pnm::Gray(g) => BinaryImage::new(g.pixels.map(|&v| v >= 0.5)),
        Pnm::Color(c) => BinaryImage::new(c.to_gray().pixels.map(|&v| v >= 0.5)),
    }
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let (h, w) = img.pixels.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.push((img.pixels[[y, x]] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_color(path: &Path, img: &ColorImage) -> Result<()> {
    let (h, w, _) = img.pixels.dim();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push((img.pixels[[y, x, c]] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_binary(path: &Path, img: &BinaryImage) -> Result<()> {
    let (h, w) = img.mask.dim();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = (w + 7) / 8;
    for y in 0..h {
        let mut row = vec![0u8; row_bytes];
        for x in 0..w {
            if img.mask[[y, x]] {
                row[x / 8] |= 1 << (7 - x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};

    #[test]
    fn pbm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pbm");
        let img = BinaryImage::new(arr2(&[
            [true, false, true, true, false, false, true, true, true],
            [false, true, false, false, true, true, false, false, false],
        ]))
        .unwrap();
        write_binary(&path, &img).unwrap();
        assert_eq!(read_binary(&path).unwrap(), img);
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut px = Array3::zeros((2, 3, 3));
        px[[0, 0, 0]] = 1.0;
        px[[1, 2, 2]] = 1.0;
        let img = ColorImage::new(px).unwrap();
        write_color(&path, &img).unwrap();
        assert_eq!(read_color(&path).unwrap(), img);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_color(Path::new("/nonexistent/x.ppm")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.ppm"));
    }
}
