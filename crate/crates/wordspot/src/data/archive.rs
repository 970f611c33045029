//! Single-file persistence of every trained artifact: script models, stage-I
//! and stage-II model sets, codebooks, and the window configuration.
//!
//! Layout: 4-byte magic, little-endian u32 format version, JSON payload.
//! JSON float serialization is shortest-round-trip, so saving and loading is
//! bit-exact for every parameter.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowConfig;
use crate::gmmhmm::{GmmHmm, ModelSet};
use crate::shapecode::ShapeCodebook;

const MAGIC: &[u8; 4] = b"WSMA";
const VERSION: u32 = 1;

/// Everything the spotting pipeline needs at inference time. Keys are script
/// names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelArchive {
    pub script_models: BTreeMap<String, GmmHmm>,
    /// Stage-I sets over shape-coded labels, per script.
    pub reduced: BTreeMap<String, ModelSet>,
    /// Stage-II sets over the complete character inventory, per script.
    pub full: BTreeMap<String, ModelSet>,
    pub codebooks: BTreeMap<String, ShapeCodebook>,
    pub window: WindowConfig,
}

impl ModelArchive {
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = serde_json::to_vec(self)?;
        let mut file = std::fs::File::create(path)
            .map_err(|e| Error::Io(path.display().to_string(), e))?;
        let io = |e| Error::Io(path.display().to_string(), e);
        file.write_all(MAGIC).map_err(io)?;
        file.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        file.write_all(&payload).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file =
            std::fs::File::open(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        let mut header = [0u8; 8];
        file.read_exact(&mut header)
            .map_err(|_| Error::Format("archive truncated before header".into()))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("not a model archive (bad magic)".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let mut payload = Vec::new();
        file.read_to_end(&mut payload)
            .map_err(|e| Error::Io(path.display().to_string(), e))?;
        let archive = serde_json::from_slice(&payload)
            .map_err(|e| Error::Format(format!("archive payload: {e}")))?;
        Ok(archive)
    }
}
