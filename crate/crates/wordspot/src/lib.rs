//! Word spotting in multi-script text-line images.
//!
//! The pipeline binarizes a line, identifies its script, converts the query
//! word into a shape-coded label sequence, and runs a two-stage HMM search:
//! a filler-network pass proposes candidate spans, and a verification pass
//! re-scores each span against the keyword model alone.

pub mod data;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod gmmhmm;
pub mod image;
pub mod imaging;
pub mod pipeline;
pub mod pnm;
pub mod scriptid;
pub mod shapecode;
pub mod spotting;
pub mod zoneseg;

pub use error::{Error, Result};
