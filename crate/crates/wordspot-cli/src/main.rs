//! Command line front end: each subcommand wraps one pipeline stage, reading
//! and writing plain files so stages can be chained from a shell.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wordspot::data::{read_manifest, LineRecord, ModelArchive};
use wordspot::data::synth::{generate_corpus, script_glyph_sets, SynthConfig};
use wordspot::evalkit::{
    boundary_error, match_hypotheses, mean_average_precision, precision_recall_f, MatchConfig,
    GroundTruthSpan,
};
use wordspot::features::WindowConfig;
use wordspot::gmmhmm::{train_embedded, GmmHmm, ModelSet, TrainConfig};
use wordspot::imaging::{binarize_line, BinarizeConfig};
use wordspot::pipeline::{
    gap_cut, models_from_archive, prepare_line, reduced_inventory, word_frame_span,
};
use wordspot::pnm::{read_binary, read_color, write_binary};
use wordspot::scriptid::{identify_script, train_script_models, ScriptModelSet};
use wordspot::shapecode::{
    build_codebook_at, encode_transcription, label_prototypes, single_linkage, ShapeCodebook,
};
use wordspot::spotting::{
    char_labels, coded_labels, line_features, spot_pipeline, HttpProvider, Lexicon, RankedHit,
    SpotConfig, Translate, SPACE_LABEL,
};
use wordspot::zoneseg::Script;
use wordspot::{Error, Result};

#[derive(Parser)]
#[command(name = "wordspot", version, about = "Two-stage word spotting in multi-script text-line images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Stage {
    /// Stage-I models over shape-coded labels.
    Reduced,
    /// Stage-II models over the full character inventory.
    Full,
    /// Whole-line script identification models.
    Scriptid,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize a text-line image (PGM/PPM in, PBM mask out)
    Binarize {
        input: PathBuf,
        output: PathBuf,
        /// Posterior threshold; pixels with text posterior >= gamma are ink
        #[arg(long, default_value_t = BinarizeConfig::default().gamma)]
        gamma: f64,
    },
    /// Generate a seeded synthetic corpus with manifest, lexicon, and images
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Lines per script; the generator always renders all three scripts
        #[arg(long, default_value_t = 10)]
        lines: usize,
        /// Add blur and speckle on top of the base brightness jitter
        #[arg(long)]
        noise: bool,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage of models and merge it into a model archive
    Train {
        /// JSONL manifest of transcribed training lines
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        stage: Stage,
        /// Script to train; required for reduced and full stages
        #[arg(long)]
        script: Option<String>,
        /// Codebook file; required for the reduced stage
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        mixtures: usize,
        #[arg(long, default_value_t = 6)]
        iterations: usize,
        #[arg(long, default_value_t = BinarizeConfig::default().gamma)]
        gamma: f64,
        /// Archive path; updated in place when it already exists
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a shape codebook from labeled glyph masks
    Codebook {
        /// Directory with one subdirectory of PBM glyph masks per label
        #[arg(long)]
        glyph_dir: PathBuf,
        /// Cut distance: "auto" (largest merge-distance gap) or a number
        #[arg(long, default_value = "auto")]
        cut: String,
        /// Maximum Zernike order
        #[arg(long, default_value_t = 10)]
        n_max: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify the script of every line in a manifest
    IdentifyScript {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = BinarizeConfig::default().gamma)]
        gamma: f64,
    },
    /// Spot a keyword across a manifest and write ranked hits as JSONL
    Spot {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        keyword: String,
        /// Source script of the keyword
        #[arg(long, default_value = "english")]
        source: String,
        /// Translation lexicon TSV; falls back to TRANSLATE_ENDPOINT when absent
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Stage-I acceptance threshold (length-normalized log ratio)
        #[arg(long, default_value_t = -1e9, allow_negative_numbers = true)]
        tau1: f64,
        /// Stage-II acceptance threshold
        #[arg(long, default_value_t = -1e9, allow_negative_numbers = true)]
        tau2: f64,
        #[arg(long, default_value_t = BinarizeConfig::default().gamma)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score spotting results against ground truth spans
    Evaluate {
        /// JSONL of ranked hits, as written by the spot subcommand
        #[arg(long)]
        results: PathBuf,
        /// JSONL of ground truth spans in frame coordinates
        #[arg(long, conflicts_with_all = ["manifest", "lexicon"])]
        truth: Option<PathBuf>,
        /// Derive ground truth from a manifest instead of --truth
        #[arg(long, requires = "lexicon")]
        manifest: Option<PathBuf>,
        /// Translation lexicon used to locate keyword occurrences per script
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Source script of the spotted keywords
        #[arg(long, default_value = "english")]
        source: String,
        #[arg(long, default_value_t = BinarizeConfig::default().gamma)]
        gamma: f64,
        #[arg(long, default_value_t = MatchConfig::default().iou_threshold)]
        iou: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Binarize { input, output, gamma } => binarize_cmd(&input, &output, gamma),
        Command::Synth { seed, lines, noise, out } => synth_cmd(seed, lines, noise, &out),
        Command::Train {
            manifest,
            stage,
            script,
            codebook,
            states,
            mixtures,
            iterations,
            gamma,
            out,
        } => train_cmd(
            &manifest, stage, script.as_deref(), codebook.as_deref(), states, mixtures,
            iterations, gamma, &out,
        ),
        Command::Codebook { glyph_dir, cut, n_max, out } => {
            codebook_cmd(&glyph_dir, &cut, n_max, &out)
        }
        Command::IdentifyScript { manifest, models, gamma } => {
            identify_cmd(&manifest, &models, gamma)
        }
        Command::Spot {
            manifest,
            models,
            keyword,
            source,
            lexicon,
            tau1,
            tau2,
            gamma,
            out,
        } => spot_cmd(&manifest, &models, &keyword, &source, lexicon.as_deref(), tau1, tau2, gamma, &out),
        Command::Evaluate { results, truth, manifest, lexicon, source, gamma, iou, out } => {
            evaluate_cmd(
                &results, truth.as_deref(), manifest.as_deref(), lexicon.as_deref(), &source,
                gamma, iou, &out,
            )
        }
    }
}

fn bin_config(gamma: f64) -> Result<BinarizeConfig> {
    let cfg = BinarizeConfig { gamma, ..BinarizeConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn binarize_cmd(input: &Path, output: &Path, gamma: f64) -> Result<()> {
    let img = read_color(input)?;
    let mask = binarize_line(&img, &bin_config(gamma)?)?;
    write_binary(output, &mask)
}

fn synth_cmd(seed: u64, lines: usize, noise: bool, out: &Path) -> Result<()> {
    let corpus = generate_corpus(
        out,
        &SynthConfig { seed, lines_per_script: lines, noise, ..SynthConfig::default() },
    )?;
    // per-label glyph masks, in the layout the codebook subcommand reads
    for script in [Script::English, Script::Bangla, Script::Devanagari] {
        for (label, masks) in script_glyph_sets(script) {
            let dir = out.join("glyphs").join(script.name()).join(&label);
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
            for (i, mask) in masks.iter().enumerate() {
                write_binary(&dir.join(format!("{i}.pbm")), mask)?;
            }
        }
    }
    println!(
        "wrote {} lines, a {}-word lexicon, and glyph masks to {}",
        corpus.records.len(),
        corpus.vocab.len(),
        out.display()
    );
    Ok(())
}

fn load_or_new_archive(path: &Path, window: &WindowConfig) -> Result<ModelArchive> {
    if path.exists() {
        ModelArchive::load(path)
    } else {
        Ok(ModelArchive { window: window.clone(), ..ModelArchive::default() })
    }
}

fn script_records(records: Vec<LineRecord>, script: Script) -> Vec<LineRecord> {
    records.into_iter().filter(|r| r.script() == script).collect()
}

fn flat_set(dim: usize, labels: &[String]) -> ModelSet {
    let mut set = ModelSet::new(dim, "");
    for l in labels {
        set.insert(GmmHmm::flat(l, 1, dim));
    }
    set
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    manifest: &Path,
    stage: Stage,
    script: Option<&str>,
    codebook: Option<&Path>,
    states: usize,
    mixtures: usize,
    iterations: usize,
    gamma: f64,
    out: &Path,
) -> Result<()> {
    let records = read_manifest(manifest)?;
    let window = WindowConfig::default();
    let bin = bin_config(gamma)?;
    let tc = TrainConfig {
        n_states: states,
        target_mixtures: mixtures,
        max_iterations: iterations,
        ..TrainConfig::default()
    };
    let mut archive = load_or_new_archive(out, &window)?;

    match stage {
        Stage::Scriptid => {
            let mut per_script: BTreeMap<Script, Vec<_>> = BTreeMap::new();
            for r in &records {
                let p = prepare_line(r, &window, &bin)?;
                per_script.entry(r.script()).or_default().push(p.id_features);
            }
            let set: ScriptModelSet = train_script_models(&per_script, &tc)?;
            archive.script_models = set
                .models
                .into_iter()
                .map(|(s, m)| (s.name().to_string(), m))
                .collect();
        }
        Stage::Reduced => {
            let script = parse_script_arg(script)?;
            let cb_path = codebook.ok_or_else(|| {
                Error::InvalidConfig("--codebook is required for the reduced stage".into())
            })?;
            let cb = ShapeCodebook::load(cb_path)?;
            let lines = coded_lines(&records, script, &cb, &window, &bin)?;
            let dim = window.descriptor_dim() * 3;
            let report = train_embedded(&lines, &flat_set(dim, &reduced_inventory(&cb)), &tc)?;
            archive.reduced.insert(script.name().to_string(), report.set);
            archive.codebooks.insert(script.name().to_string(), cb);
        }
        Stage::Full => {
            let script = parse_script_arg(script)?;
            let mut lines = Vec::new();
            let mut inventory: Vec<String> = vec![SPACE_LABEL.to_string()];
            for r in script_records(records, script) {
                let p = prepare_line(&r, &window, &bin)?;
                let labels = char_labels(&r.transcription);
                for l in &labels {
                    if !inventory.contains(l) {
                        inventory.push(l.clone());
                    }
                }
                lines.push((p.features, labels));
            }
            if lines.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "no lines for script '{}' in the manifest",
                    script.name()
                )));
            }
            let dim = window.descriptor_dim() * 3;
            let report = train_embedded(&lines, &flat_set(dim, &inventory), &tc)?;
            archive.full.insert(script.name().to_string(), report.set);
        }
    }
    archive.save(out)?;
    println!("updated {}", out.display());
    Ok(())
}

fn parse_script_arg(script: Option<&str>) -> Result<Script> {
    let name = script
        .ok_or_else(|| Error::InvalidConfig("--script is required for this stage".into()))?;
    Script::parse(name)
}

fn coded_lines(
    records: &[LineRecord],
    script: Script,
    cb: &ShapeCodebook,
    window: &WindowConfig,
    bin: &BinarizeConfig,
) -> Result<Vec<(wordspot::features::FeatureSequence, Vec<String>)>> {
    let mut lines = Vec::new();
    for r in records.iter().filter(|r| r.script() == script) {
        let p = prepare_line(r, window, bin)?;
        let coded = encode_transcription(&r.transcription, cb)?;
        lines.push((p.features, coded_labels(&coded)));
    }
    if lines.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no lines for script '{}' in the manifest",
            script.name()
        )));
    }
    Ok(lines)
}

fn codebook_cmd(glyph_dir: &Path, cut: &str, n_max: u32, out: &Path) -> Result<()> {
    let mut glyph_sets: BTreeMap<String, Vec<_>> = BTreeMap::new();
    let dir_err = |e| Error::Io(glyph_dir.display().to_string(), e);
    for entry in std::fs::read_dir(glyph_dir).map_err(dir_err)? {
        let entry = entry.map_err(dir_err)?;
        if !entry.path().is_dir() {
            continue;
        }
        let label = entry.file_name().to_string_lossy().into_owned();
        let mut masks = Vec::new();
        for f in std::fs::read_dir(entry.path()).map_err(dir_err)? {
            let f = f.map_err(dir_err)?;
            if f.path().extension().is_some_and(|e| e == "pbm") {
                masks.push(read_binary(&f.path())?);
            }
        }
        if !masks.is_empty() {
            glyph_sets.insert(label, masks);
        }
    }
    if glyph_sets.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no <label>/*.pbm glyphs under {}",
            glyph_dir.display()
        )));
    }

    let protos = label_prototypes(&glyph_sets, n_max)?;
    let points: Vec<Vec<f64>> = protos.values().cloned().collect();
    let (_, dendro) = single_linkage(&points, f64::INFINITY);
    let cut_distance = if cut == "auto" {
        gap_cut(&dendro)
    } else {
        cut.parse::<f64>().map_err(|_| {
            Error::InvalidConfig(format!("--cut must be \"auto\" or a number, got '{cut}'"))
        })?
    };
    let cb = build_codebook_at(&protos, cut_distance, n_max);
    cb.save(out)?;
    println!(
        "{} labels -> {} codes at cut {:.4}; wrote {}",
        glyph_sets.len(),
        cb.code_count(),
        cut_distance,
        out.display()
    );
    Ok(())
}

fn identify_cmd(manifest: &Path, models: &Path, gamma: f64) -> Result<()> {
    let records = read_manifest(manifest)?;
    let archive = ModelArchive::load(models)?;
    let bin = bin_config(gamma)?;
    let pm = models_from_archive(archive, &bin)?;
    for r in &records {
        let img = read_color(&r.image)?;
        let mask = binarize_line(&img, &bin)?;
        let seq = line_features(&mask, Script::English, &pm.window)?;
        let decision = identify_script(&seq, &pm.script_models)?;
        println!(
            "{}\t{}{}",
            r.id,
            decision.script.name(),
            decision.margin.map_or(String::new(), |m| format!("\tmargin {m:.3}"))
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn spot_cmd(
    manifest: &Path,
    models: &Path,
    keyword: &str,
    source: &str,
    lexicon: Option<&Path>,
    tau1: f64,
    tau2: f64,
    gamma: f64,
    out: &Path,
) -> Result<()> {
    let records = read_manifest(manifest)?;
    let archive = ModelArchive::load(models)?;
    let bin = bin_config(gamma)?;
    let pm = models_from_archive(archive, &bin)?;
    let source = Script::parse(source)?;
    let cfg = SpotConfig { tau1, tau2, ..SpotConfig::default() };

    let provider: Box<dyn Translate> = match lexicon {
        Some(path) => Box::new(Lexicon::from_tsv(path)?),
        None => match std::env::var("TRANSLATE_ENDPOINT") {
            Ok(endpoint) => Box::new(HttpProvider::new(&endpoint)?),
            Err(_) => {
                return Err(Error::InvalidConfig(
                    "pass --lexicon or set TRANSLATE_ENDPOINT".into(),
                ))
            }
        },
    };

    let output = spot_pipeline(&records, keyword, source, provider.as_ref(), &pm, &cfg)?;
    std::fs::write(out, output.to_jsonl()?).map_err(|e| Error::Io(out.display().to_string(), e))?;
    for (id, msg) in &output.line_errors {
        eprintln!("line {id}: {msg}");
    }
    println!(
        "{} hits across {} lines; wrote {}",
        output.hits.len(),
        records.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cmd(
    results: &Path,
    truth: Option<&Path>,
    manifest: Option<&Path>,
    lexicon: Option<&Path>,
    source: &str,
    gamma: f64,
    iou: f64,
    out: &Path,
) -> Result<()> {
    let mc = MatchConfig { iou_threshold: iou };
    mc.validate()?;
    let hits: Vec<RankedHit> = read_jsonl(results)?;

    let mut per_keyword: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for h in hits {
        per_keyword.entry(h.keyword).or_default().push(h.hypothesis);
    }

    let truths: Vec<GroundTruthSpan> = match (truth, manifest) {
        (Some(path), None) => read_jsonl(path)?,
        (None, Some(path)) => {
            let lex = Lexicon::from_tsv(lexicon.expect("clap enforces --lexicon"))?;
            let keywords: Vec<&String> = per_keyword.keys().collect();
            derive_truth(path, &keywords, &lex, Script::parse(source)?, gamma)?
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass either --truth or --manifest with --lexicon".into(),
            ))
        }
    };
    for ranked in per_keyword.values_mut() {
        ranked.sort_by(|x, y| {
            let sx = x.stage2_score.unwrap_or(f64::NEG_INFINITY);
            let sy = y.stage2_score.unwrap_or(f64::NEG_INFINITY);
            sy.partial_cmp(&sx).unwrap().then_with(|| x.line_id.cmp(&y.line_id))
        });
    }

    let mut keywords = serde_json::Map::new();
    for (kw, ranked) in &per_keyword {
        let outcome = match_hypotheses(ranked, kw, &truths, mc)?;
        let (p, r, f) = precision_recall_f(outcome.tp, outcome.fp, outcome.fn_);
        let be: Vec<f64> = outcome
            .pairs
            .iter()
            .map(|&(hi, ti)| {
                boundary_error(
                    (truths[ti].start, truths[ti].end),
                    (ranked[hi].a, ranked[hi].b),
                )
            })
            .collect();
        keywords.insert(
            kw.clone(),
            serde_json::json!({
                "tp": outcome.tp,
                "fp": outcome.fp,
                "fn": outcome.fn_,
                "precision": p,
                "recall": r,
                "f_measure": f,
                "mean_boundary_error_pct": if be.is_empty() {
                    serde_json::Value::Null
                } else {
                    serde_json::json!(be.iter().sum::<f64>() / be.len() as f64)
                },
            }),
        );
    }
    let (map, excluded) = mean_average_precision(&per_keyword, &truths, mc)?;
    let report = serde_json::json!({
        "iou_threshold": iou,
        "keywords": keywords,
        "mean_average_precision": map,
        "keywords_without_truth": excluded,
    });
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(out, text).map_err(|e| Error::Io(out.display().to_string(), e))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Keyword occurrences in frame coordinates, located by translating each
/// spotted keyword into the script of every line and matching word spans.
fn derive_truth(
    manifest: &Path,
    keywords: &[&String],
    lexicon: &Lexicon,
    source: Script,
    gamma: f64,
) -> Result<Vec<GroundTruthSpan>> {
    let records = read_manifest(manifest)?;
    let window = WindowConfig::default();
    let bin = bin_config(gamma)?;
    let mut truths = Vec::new();
    for r in &records {
        let prepared = prepare_line(r, &window, &bin)?;
        for kw in keywords {
            let rendered = lexicon.translate(kw, source, r.script())?;
            for span in &prepared.words {
                if span.text.eq_ignore_ascii_case(&rendered) {
                    let (start, end) = word_frame_span(span, &prepared, &window);
                    truths.push(GroundTruthSpan {
                        line_id: r.id.clone(),
                        start,
                        end,
                        keyword: (*kw).clone(),
                    });
                }
            }
        }
    }
    Ok(truths)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}
