//! Corpus-level orchestration: preparing feature sequences from manifests
//! and training every model the spotter needs.

use std::collections::BTreeMap;

use crate::data::manifest::LineRecord;
use crate::data::ModelArchive;
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, WindowConfig};
use crate::gmmhmm::{train_embedded, GmmHmm, ModelSet, TrainConfig};
use crate::image::BinaryImage;
use crate::imaging::{binarize_line, BinarizeConfig};
use crate::scriptid::train_script_models;
use crate::shapecode::{encode_transcription, Dendrogram, ShapeCodebook};
use crate::spotting::{char_labels, coded_labels, line_features, PipelineModels, SPACE_LABEL};
use crate::zoneseg::{segment_zones, Script};

/// One manifest line turned into feature space.
#[derive(Debug, Clone)]
pub struct PreparedLine {
    pub id: String,
    pub script: Script,
    pub transcription: String,
    /// Features of the whole binarized line, script-agnostic.
    pub id_features: FeatureSequence,
    /// Features of the spotting region (middle zone for Matra scripts).
    pub features: FeatureSequence,
    /// Pixel columns of the source image per feature-image pixel column.
    pub width_scale: f64,
    /// Word spans carried over from the record, in source pixel columns.
    pub words: Vec<crate::data::manifest::WordSpan>,
}

/// Binarize one record's image from disk.
pub fn binarize_record(record: &LineRecord, bin: &BinarizeConfig) -> Result<BinaryImage> {
    let color = crate::pnm::read_color(&record.image)?;
    binarize_line(&color, bin)
}

/// Load, binarize, zone-segment, and featurize one record.
pub fn prepare_line(
    record: &LineRecord,
    window: &WindowConfig,
    bin: &BinarizeConfig,
) -> Result<PreparedLine> {
    let script = record.script();
    let binarized = binarize_record(record, bin)?;
    let id_features = line_features(&binarized, Script::English, window)?;
    let features = line_features(&binarized, script, window)?;
    let region_h = if script.has_matra() {
        segment_zones(&binarized, script)?.middle.height()
    } else {
        binarized.height()
    };
    let scale_h = window.line_height as f64 / region_h as f64;
    let new_w = ((binarized.width() as f64 * scale_h).round()).max(1.0);
    let width_scale = new_w / binarized.width() as f64;
    Ok(PreparedLine {
        id: record.id.clone(),
        script,
        transcription: record.transcription.clone(),
        id_features,
        features,
        width_scale,
        words: record.words.clone(),
    })
}

/// A word span translated into frame coordinates of the prepared features.
pub fn word_frame_span(
    span: &crate::data::manifest::WordSpan,
    prepared: &PreparedLine,
    window: &WindowConfig,
) -> (usize, usize) {
    let s = (span.start_px as f64 * prepared.width_scale).round() as usize;
    let e = (span.end_px as f64 * prepared.width_scale).round() as usize;
    let (a, b) = crate::data::synth::pixel_span_to_frames(s, e, window);
    let t = prepared.features.len();
    (a.min(t.saturating_sub(1)), b.min(t).max(a + 1))
}

/// Cut heuristic: walk up the merge distances and cut in the middle of the
/// first jump where the next merge costs at least twice the current one.
/// Merges below such a jump are near-duplicates; everything above is
/// structure worth keeping apart. Returns 0.0 (no merging) when the
/// distances grow smoothly.
pub fn gap_cut(dendrogram: &Dendrogram) -> f64 {
    let ds: Vec<f64> = dendrogram.merges.iter().map(|m| m.distance).collect();
    for w in ds.windows(2) {
        if w[0] > 0.0 && w[1] >= 2.0 * w[0] {
            return (w[0] + w[1]) / 2.0;
        }
    }
    0.0
}

/// Build a codebook from labeled glyph images, cutting the prototype
/// dendrogram at the largest merge-distance gap.
pub fn glyph_codebook(
    glyph_sets: &BTreeMap<String, Vec<BinaryImage>>,
    n_max: u32,
) -> Result<ShapeCodebook> {
    let protos = crate::shapecode::label_prototypes(glyph_sets, n_max)?;
    let points: Vec<Vec<f64>> = protos.values().cloned().collect();
    let (_, dendro) = crate::shapecode::single_linkage(&points, f64::INFINITY);
    Ok(crate::shapecode::build_codebook_at(&protos, gap_cut(&dendro), n_max))
}

/// The label inventory of a reduced (shape-coded) model set.
pub fn reduced_inventory(cb: &ShapeCodebook) -> Vec<String> {
    let mut codes: Vec<usize> = cb.mapping.values().copied().collect();
    codes.sort_unstable();
    codes.dedup();
    let mut labels: Vec<String> = codes.into_iter().map(crate::spotting::code_label).collect();
    labels.push(SPACE_LABEL.to_string());
    labels
}

fn empty_set(dim: usize, labels: &[String]) -> ModelSet {
    let mut set = ModelSet::new(dim, "");
    for l in labels {
        set.insert(GmmHmm::flat(l, 1, dim));
    }
    set
}

/// Train script models, stage-I reduced sets, and stage-II full sets from a
/// manifest. Both model sets are fit embedded on whole lines: stage-I with
/// shape-coded transcriptions, stage-II with character transcriptions.
pub fn train_models(
    records: &[LineRecord],
    codebooks: &BTreeMap<Script, ShapeCodebook>,
    window: &WindowConfig,
    bin: &BinarizeConfig,
    char_cfg: &TrainConfig,
    script_cfg: &TrainConfig,
) -> Result<PipelineModels> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no training records".into()));
    }
    let mut id_lines: BTreeMap<Script, Vec<FeatureSequence>> = BTreeMap::new();
    let mut reduced_lines: BTreeMap<Script, Vec<(FeatureSequence, Vec<String>)>> = BTreeMap::new();
    let mut char_lines: BTreeMap<Script, Vec<(FeatureSequence, Vec<String>)>> = BTreeMap::new();
    let mut charsets: BTreeMap<Script, Vec<String>> = BTreeMap::new();

    for record in records {
        let script = record.script();
        let cb = codebooks.get(&script).ok_or_else(|| {
            Error::InvalidConfig(format!("no codebook for script '{}'", script.name()))
        })?;
        let prepared = prepare_line(record, window, bin)?;

        id_lines.entry(script).or_default().push(prepared.id_features.clone());

        let coded = encode_transcription(&record.transcription, cb)?;
        reduced_lines
            .entry(script)
            .or_default()
            .push((prepared.features.clone(), coded_labels(&coded)));

        char_lines
            .entry(script)
            .or_default()
            .push((prepared.features.clone(), char_labels(&record.transcription)));

        let charset = charsets.entry(script).or_default();
        for c in record.transcription.chars().filter(|&c| c != ' ') {
            let l = c.to_string();
            if !charset.contains(&l) {
                charset.push(l);
            }
        }
    }

    let script_models = train_script_models(&id_lines, script_cfg)?;
    let dim = window.descriptor_dim() * 3;

    let mut reduced = BTreeMap::new();
    let mut full = BTreeMap::new();
    for (&script, lines) in &reduced_lines {
        let cb = &codebooks[&script];
        let set = empty_set(dim, &reduced_inventory(cb));
        let report = train_embedded(lines, &set, char_cfg)?;
        reduced.insert(script, report.set);

        let mut inventory = charsets[&script].clone();
        inventory.push(SPACE_LABEL.to_string());
        let set = empty_set(dim, &inventory);
        let report = train_embedded(&char_lines[&script], &set, char_cfg)?;
        full.insert(script, report.set);
    }

    Ok(PipelineModels {
        script_models,
        reduced,
        full,
        codebooks: codebooks.clone(),
        window: window.clone(),
        binarize: bin.clone(),
    })
}

/// Package trained pipeline models for persistence. The binarization config
/// is not stored; pass it again when loading.
pub fn models_to_archive(models: &PipelineModels) -> ModelArchive {
    let by_name = |m: &BTreeMap<Script, ModelSet>| {
        m.iter().map(|(s, v)| (s.name().to_string(), v.clone())).collect()
    };
    ModelArchive {
        script_models: models
            .script_models
            .models
            .iter()
            .map(|(s, v)| (s.name().to_string(), v.clone()))
            .collect(),
        reduced: by_name(&models.reduced),
        full: by_name(&models.full),
        codebooks: models
            .codebooks
            .iter()
            .map(|(s, v)| (s.name().to_string(), v.clone()))
            .collect(),
        window: models.window.clone(),
    }
}

/// Rebuild pipeline models from a loaded archive.
pub fn models_from_archive(archive: ModelArchive, bin: &BinarizeConfig) -> Result<PipelineModels> {
    let by_script = |m: BTreeMap<String, ModelSet>| -> Result<BTreeMap<Script, ModelSet>> {
        m.into_iter().map(|(k, v)| Ok((Script::parse(&k)?, v))).collect()
    };
    let mut script_models = BTreeMap::new();
    let mut feature_dim = 0;
    for (k, v) in archive.script_models {
        feature_dim = v.dim();
        script_models.insert(Script::parse(&k)?, v);
    }
    Ok(PipelineModels {
        script_models: crate::scriptid::ScriptModelSet {
            models: script_models,
            feature_dim,
        },
        reduced: by_script(archive.reduced)?,
        full: by_script(archive.full)?,
        codebooks: archive
            .codebooks
            .into_iter()
            .map(|(k, v)| Ok((Script::parse(&k)?, v)))
            .collect::<Result<_>>()?,
        window: archive.window,
        binarize: bin.clone(),
    })
}
