//! Memory-reliability library: codecs, fault models, four protection
//! architectures and a Monte-Carlo lifetime engine.

pub mod codes;
pub mod error;
pub mod archshield;
pub mod citadel;
pub mod faultmodel;
pub mod simkernel;
pub mod sudoku;
pub mod xed;

pub use codes::{BitBlock, CodecId, CodecStatus, CodecVerdict};
pub use error::{Error, Result};
pub use faultmodel::{FaultRecord, FitTable, Footprint, Geometry, Granularity, Permanence};
