pub mod bench;
pub mod export_latents;
pub mod gen_corpus;
pub mod interp;
pub mod recon;
pub mod search;
pub mod train;

use crate::CliError;
use anyhow::anyhow;
use latentsr_core::model::{load_checkpoint, Checkpoint};
use std::path::Path;

pub(crate) fn open_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| CliError {
        code: 3,
        error: anyhow!("loading checkpoint {}: {e}", path.display()),
    })
}
