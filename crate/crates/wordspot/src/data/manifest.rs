//! JSON-lines dataset manifests: one text line image per record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zoneseg::Script;

/// One annotated word: pixel-column extent within the line image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    pub text: String,
    pub start_px: usize,
    pub end_px: usize,
}

/// One line image and its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: String,
    pub image: PathBuf,
    pub script: String,
    pub transcription: String,
    #[serde(default)]
    pub words: Vec<WordSpan>,
}

impl LineRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.image.as_os_str().is_empty() {
            return Err("empty image path".into());
        }
        if Script::parse(&self.script).is_err() {
            return Err(format!("unknown script '{}'", self.script));
        }
        for w in &self.words {
            if w.start_px >= w.end_px {
                return Err(format!(
                    "word '{}' has degenerate span [{}, {})",
                    w.text, w.start_px, w.end_px
                ));
            }
        }
        Ok(())
    }

    pub fn script(&self) -> Script {
        Script::parse(&self.script).expect("validated script")
    }
}

/// Read a JSONL manifest; parse and validation errors carry line numbers.
pub fn read_manifest(path: &Path) -> Result<Vec<LineRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LineRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|m| Error::Manifest {
            line: i + 1,
            message: m,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[LineRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::Io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> LineRecord {
        LineRecord {
            id: id.to_string(),
            image: PathBuf::from(format!("{id}.pgm")),
            script: "english".to_string(),
            transcription: "AB CD".to_string(),
            words: vec![
                WordSpan {
                    text: "AB".into(),
                    start_px: 0,
                    end_px: 64,
                },
                WordSpan {
                    text: "CD".into(),
                    start_px: 96,
                    end_px: 160,
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let records = vec![record("l1"), record("l2")];
        write_manifest(&path, &records).unwrap();
        let loaded = read_manifest(&path).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let good = serde_json::to_string(&record("ok")).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match read_manifest(&path) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }

        let mut bad = record("bad");
        bad.script = "martian".into();
        let bad = serde_json::to_string(&bad).unwrap();
        std::fs::write(&path, format!("{good}\n\n{bad}\n")).unwrap();
        match read_manifest(&path) {
            Err(Error::Manifest { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("martian"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_word_span_rejected() {
        let mut r = record("r");
        r.words[0].end_px = r.words[0].start_px;
        assert!(r.validate().is_err());
    }
}
