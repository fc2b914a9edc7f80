//! File formats: PGM images, SPKL1 measurement containers, trajectory CSV and JSON
//! run configurations.

mod config;
mod pgm;
mod spkl;
mod trajectory;

pub use config::{read_run_config, write_json, RunConfig};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use spkl::{decode_spkl, encode_spkl, read_spkl, write_spkl, Spkl1, SPKL_MAGIC, SPKL_VERSION};
pub use trajectory::{read_trajectory_rows, write_trajectory, TRAJECTORY_COLUMNS};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
