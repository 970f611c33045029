//! Seeded synthetic corpus: three procedurally rendered "scripts" with
//! disjoint alphabets and styles, parallel vocabularies, pixel-accurate word
//! ground truth, and a translation lexicon tying the vocabularies together.
//!
//! Rendering styles: the Latin-like script uses axis-aligned bars, the two
//! Matra-bearing scripts use diagonal strokes and rings respectively, with a
//! headline drawn across each word. The styles are deliberately far apart so
//! script identification is learnable from small models, while characters
//! within a script differ by stroke placement and thickness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::manifest::{write_manifest, LineRecord, WordSpan};
use crate::error::{Error, Result};
use crate::features::WindowConfig;
use crate::image::{BinaryImage, GrayImage};
use crate::spotting::translate::Lexicon;
use crate::zoneseg::Script;

pub const LINE_HEIGHT: usize = 64;
pub const GLYPH_WIDTH: usize = 32;
pub const SPACE_WIDTH: usize = 32;
/// Abstract characters; every script renders these ten.
pub const ABSTRACT_ALPHABET: &str = "abcdefghij";

const MATRA_TOP: usize = 6;
const MATRA_BOTTOM: usize = 10; // exclusive
const BODY_TOP: usize = 12;
const BODY_BOTTOM: usize = 52; // exclusive

/// The script-specific character for an abstract character.
pub fn script_char(script: Script, abstract_char: char) -> Result<char> {
    let idx = ABSTRACT_ALPHABET
        .find(abstract_char.to_ascii_lowercase())
        .ok_or_else(|| {
            Error::UnknownLabel(format!(
                "'{abstract_char}' is not expressible in the synthetic alphabet"
            ))
        })?;
    let base = match script {
        Script::English => 'A',
        Script::Bangla => 'k',
        Script::Devanagari => 'K',
    };
    Ok(char::from_u32(base as u32 + idx as u32).unwrap())
}

/// Render an abstract word in a script's alphabet.
pub fn script_word(script: Script, abstract_word: &str) -> Result<String> {
    abstract_word.chars().map(|c| script_char(script, c)).collect()
}

/// All characters of a script's alphabet, in order.
pub fn script_charset(script: Script) -> Vec<char> {
    ABSTRACT_ALPHABET
        .chars()
        .map(|c| script_char(script, c).unwrap())
        .collect()
}

fn char_index(script: Script, ch: char) -> Result<usize> {
    let base = match script {
        Script::English => 'A',
        Script::Bangla => 'k',
        Script::Devanagari => 'K',
    };
    let idx = (ch as u32).wrapping_sub(base as u32) as usize;
    if idx < ABSTRACT_ALPHABET.len() {
        Ok(idx)
    } else {
        Err(Error::UnknownLabel(format!(
            "'{ch}' is not in the {} synthetic alphabet",
            script.name()
        )))
    }
}

fn draw_rect(mask: &mut Array2<bool>, y0: usize, y1: usize, x0: usize, x1: usize) {
    let (h, w) = mask.dim();
    for y in y0..y1.min(h) {
        for x in x0..x1.min(w) {
            mask[[y, x]] = true;
        }
    }
}

fn draw_ring(mask: &mut Array2<bool>, cy: f64, cx: f64, radius: f64, thickness: f64) {
    let (h, w) = mask.dim();
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if (d - radius).abs() <= thickness / 2.0 {
                mask[[y, x]] = true;
            }
        }
    }
}

fn draw_diagonal(mask: &mut Array2<bool>, offset: f64, thickness: f64, anti: bool) {
    let (h, w) = mask.dim();
    let rows = (BODY_BOTTOM - BODY_TOP) as f64;
    for y in BODY_TOP..BODY_BOTTOM.min(h) {
        let t = (y - BODY_TOP) as f64 / rows;
        let base = if anti {
            (1.0 - t) * (GLYPH_WIDTH as f64 - 8.0)
        } else {
            t * (GLYPH_WIDTH as f64 - 8.0)
        };
        let x0 = base + offset;
        for x in 0..w {
            if (x as f64 - x0).abs() <= thickness / 2.0 {
                mask[[y, x]] = true;
            }
        }
    }
}

fn draw_disc(mask: &mut Array2<bool>, cy: f64, cx: f64, radius: f64) {
    let (h, w) = mask.dim();
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if d <= radius {
                mask[[y, x]] = true;
            }
        }
    }
}

/// Body mask of one character (no headline), LINE_HEIGHT × GLYPH_WIDTH.
///
/// The character shape comes from [`glyph_core_mask`]; on top of it a
/// per-script stroke overlaid on every glyph gives lines a script-specific
/// orientation signature without carrying any character identity.
pub fn glyph_mask(script: Script, ch: char) -> Result<BinaryImage> {
    let mut img = glyph_core_mask(script, ch)?;
    match script {
        Script::English => {}
        Script::Bangla => draw_rect(&mut img.mask, BODY_TOP, BODY_BOTTOM, 0, 3),
        Script::Devanagari => draw_diagonal(&mut img.mask, 0.0, 3.0, false),
    }
    Ok(img)
}

fn draw_spokes(mask: &mut Array2<bool>, cy: f64, cx: f64, k: usize, offset_deg: f64, r: f64, thickness: f64) {
    let (h, w) = mask.dim();
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let d = (dy * dy + dx * dx).sqrt();
            if d > r {
                continue;
            }
            for j in 0..k {
                let theta = (offset_deg + 180.0 * j as f64 / k as f64).to_radians();
                // distance from the pixel to the diameter line at angle theta
                let dist = (dx * theta.sin() - dy * theta.cos()).abs();
                if dist <= thickness / 2.0 {
                    mask[[y, x]] = true;
                }
            }
        }
    }
}

/// The character shape without the script's style stroke. The stroke sits on
/// every glyph of a script and carries no character identity, so shape
/// prototypes are computed from this core.
///
/// Characters are spoke stars: `k` full diameters through the glyph center,
/// optionally with an outer ring or a central hub. Spoke count and the
/// ring/hub additions separate characters in both orientation content and
/// radial mass profile. Two duplicate pairs are deliberate: character 7
/// renders the same glyph as character 4 and character 9 the same as 8, so
/// a shape codebook that merges lookalikes can pool their training data
/// while a one-model-per-character baseline splits it.
pub fn glyph_core_mask(script: Script, ch: char) -> Result<BinaryImage> {
    let i = char_index(script, ch)?;
    let mut mask = Array2::from_elem((LINE_HEIGHT, GLYPH_WIDTH), false);
    let (cy, cx) = (32.0, 16.0);
    let r = 14.0;
    match i {
        0 => draw_spokes(&mut mask, cy, cx, 1, 0.0, r, 3.0),
        1 => draw_spokes(&mut mask, cy, cx, 2, 0.0, r, 3.0),
        2 => draw_spokes(&mut mask, cy, cx, 3, 0.0, r, 3.0),
        3 => draw_spokes(&mut mask, cy, cx, 4, 0.0, r, 3.0),
        4 => {
            draw_spokes(&mut mask, cy, cx, 1, 0.0, r, 3.0);
            draw_ring(&mut mask, cy, cx, r, 3.0);
        }
        5 => {
            draw_spokes(&mut mask, cy, cx, 2, 0.0, r, 3.0);
            draw_ring(&mut mask, cy, cx, r, 3.0);
        }
        6 => {
            draw_spokes(&mut mask, cy, cx, 3, 0.0, r, 3.0);
            draw_ring(&mut mask, cy, cx, r, 3.0);
        }
        7 => {
            draw_spokes(&mut mask, cy, cx, 1, 0.0, r, 3.0);
            draw_ring(&mut mask, cy, cx, r, 3.0);
        }
        _ => {
            draw_spokes(&mut mask, cy, cx, 3, 0.0, r, 3.0);
            draw_disc(&mut mask, cy, cx, 8.0);
        }
    }
    BinaryImage::new(mask)
}

/// All glyph images per label for one script, as codebook training input.
pub fn script_glyph_sets(script: Script) -> BTreeMap<String, Vec<BinaryImage>> {
    script_charset(script)
        .into_iter()
        .map(|c| (c.to_string(), vec![glyph_core_mask(script, c).unwrap()]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    /// Lines per script.
    pub lines_per_script: usize,
    pub min_words_per_line: usize,
    pub max_words_per_line: usize,
    pub vocab_size: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Blur and speckle on top of the base brightness jitter.
    pub noise: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lines_per_script: 20,
            min_words_per_line: 2,
            max_words_per_line: 4,
            vocab_size: 10,
            min_word_len: 2,
            max_word_len: 3,
            noise: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lines_per_script == 0
            || self.vocab_size == 0
            || self.min_words_per_line == 0
            || self.min_words_per_line > self.max_words_per_line
            || self.min_word_len == 0
            || self.min_word_len > self.max_word_len
        {
            return Err(Error::InvalidConfig("degenerate synth config".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// All line records, images already written; scripts interleaved.
    pub records: Vec<LineRecord>,
    /// Abstract vocabulary words.
    pub vocab: Vec<String>,
    pub lexicon: Lexicon,
    pub manifest_path: PathBuf,
    pub lexicon_path: PathBuf,
}

/// Render one line of `words` (script forms) and return the image plus word
/// spans in pixel columns.
pub fn render_line(script: Script, words: &[String]) -> Result<(GrayImage, Vec<WordSpan>)> {
    if words.is_empty() {
        return Err(Error::InvalidConfig("empty line".into()));
    }
    let width: usize = words.iter().map(|w| w.chars().count() * GLYPH_WIDTH).sum::<usize>()
        + (words.len() - 1) * SPACE_WIDTH;
    let mut mask = Array2::from_elem((LINE_HEIGHT, width), false);
    let mut spans = Vec::new();
    let mut x = 0usize;
    for (wi, word) in words.iter().enumerate() {
        let start = x;
        for ch in word.chars() {
            let glyph = glyph_mask(script, ch)?;
            for ((gy, gx), &v) in glyph.mask.indexed_iter() {
                if v {
                    mask[[gy, x + gx]] = true;
                }
            }
            x += GLYPH_WIDTH;
        }
        if script.has_matra() {
            draw_rect(&mut mask, MATRA_TOP, MATRA_BOTTOM, start, x);
        }
        spans.push(WordSpan {
            text: word.clone(),
            start_px: start,
            end_px: x,
        });
        if wi + 1 < words.len() {
            x += SPACE_WIDTH;
        }
    }
    let pixels = mask.map(|&v| if v { 1.0 } else { 0.05 });
    Ok((GrayImage::new(pixels)?, spans))
}

/// Generate the corpus into `dir`: PGM line images, a JSONL manifest, and a
/// translation lexicon TSV. Deterministic for a fixed config.
pub fn generate_corpus(dir: &Path, cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // abstract vocabulary; substring-free so a keyword can only occur as a
    // whole word, never hidden inside another vocabulary word. Containment
    // is checked on canonical forms where the lookalike twins collapse
    // (h with e, j with i), so no two words render near-identical images.
    let canonical = |w: &str| w.replace('h', "e").replace('j', "i");
    let alphabet: Vec<char> = ABSTRACT_ALPHABET.chars().collect();
    let mut vocab: Vec<String> = Vec::new();
    let mut attempts = 0usize;
    while vocab.len() < cfg.vocab_size {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidConfig(
                "cannot sample a substring-free vocabulary of this size".into(),
            ));
        }
        let len = rng.gen_range(cfg.min_word_len..=cfg.max_word_len);
        let w: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let cw = canonical(&w);
        if !vocab
            .iter()
            .any(|v| canonical(v).contains(&cw) || cw.contains(&canonical(v)))
        {
            vocab.push(w);
        }
    }

    // lexicon: the English rendering is the query form; each script form is
    // its translation
    let mut lexicon = Lexicon::new();
    for w in &vocab {
        let english = script_word(Script::English, w)?;
        for script in [Script::English, Script::Bangla, Script::Devanagari] {
            lexicon.insert(&english, script, &script_word(script, w)?);
        }
    }

    let mut records = Vec::new();
    for script in [Script::English, Script::Bangla, Script::Devanagari] {
        for li in 0..cfg.lines_per_script {
            let n_words = rng.gen_range(cfg.min_words_per_line..=cfg.max_words_per_line);
            let words: Vec<String> = (0..n_words)
                .map(|_| {
                    let w = &vocab[rng.gen_range(0..vocab.len())];
                    script_word(script, w)
                })
                .collect::<Result<_>>()?;
            let (mut img, spans) = render_line(script, &words)?;
            apply_noise(&mut img, &mut rng, cfg.noise);
            let id = format!("{}-{li:03}", script.name());
            let image_path = dir.join(format!("{id}.pgm"));
            crate::pnm::write_gray(&image_path, &img)?;
            let transcription = words.join(" ");
            records.push(LineRecord {
                id,
                image: image_path,
                script: script.name().to_string(),
                transcription,
                words: spans,
            });
        }
    }

    let manifest_path = dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    let lexicon_path = dir.join("lexicon.tsv");
    std::fs::write(&lexicon_path, lexicon.to_tsv())
        .map_err(|e| Error::Io(lexicon_path.display().to_string(), e))?;

    Ok(SynthCorpus {
        records,
        vocab,
        lexicon,
        manifest_path,
        lexicon_path,
    })
}

fn apply_noise(img: &mut GrayImage, rng: &mut ChaCha8Rng, noise: bool) {
    for v in img.pixels.iter_mut() {
        *v = (*v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
    }
    if !noise {
        return;
    }
    // mild blur
    let (h, w) = img.pixels.dim();
    let src = img.pixels.clone();
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut n = 0.0;
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let yy = y as i32 + dy;
                    let xx = x as i32 + dx;
                    if yy >= 0 && yy < h as i32 && xx >= 0 && xx < w as i32 {
                        sum += src[[yy as usize, xx as usize]];
                        n += 1.0;
                    }
                }
            }
            img.pixels[[y, x]] = sum / n;
        }
    }
    // speckle
    let total = h * w;
    for _ in 0..total / 50 {
        let y = rng.gen_range(0..h);
        let x = rng.gen_range(0..w);
        img.pixels[[y, x]] = if rng.gen_bool(0.5) { 0.0 } else { 1.0 };
    }
}

/// Frame span covered by a pixel span: the frames whose window midpoints
/// fall inside [start_px, end_px).
pub fn pixel_span_to_frames(
    start_px: usize,
    end_px: usize,
    window: &WindowConfig,
) -> (usize, usize) {
    let step = window.step() as f64;
    let half = window.window_width as f64 / 2.0;
    let a = (((start_px as f64 - half) / step).ceil()).max(0.0) as usize;
    let b = (((end_px as f64 - half) / step).floor()) as isize + 1;
    let b = b.max(a as isize + 1) as usize;
    (a, b)
}
