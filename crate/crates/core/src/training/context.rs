use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::training::checkpoint::list_checkpoints;

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RUN_LOG: &str = "run.jsonl";

/// Random streams and output location of one training run.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub seed: u64,
    pub run_dir: Option<PathBuf>,
}

/// Stable 64-bit FNV-1a hash, used to give each named stream its own id.
fn stream_id(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl RunContext {
    /// Context that writes nothing to disk.
    pub fn in_memory(seed: u64) -> Self {
        RunContext { seed, run_dir: None }
    }

    /// Independent random stream for `name` (e.g. `"init/G"`, `"shuffle"`).
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream_id(name));
        rng
    }

    /// Seed for initializing the parameters of network `name`.
    pub fn init_seed(&self, name: &str) -> u64 {
        use rand::RngCore;
        self.stream(&format!("init/{name}")).next_u64()
    }

    pub fn checkpoint_dir(&self) -> Option<PathBuf> {
        self.run_dir.as_ref().map(|d| d.join(CHECKPOINT_DIR))
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.run_dir.as_ref().map(|d| d.join(RUN_LOG))
    }
}

/// Prepare a clean run: remove stale checkpoints and the old run log from
/// `run_dir` and reset every random stream to derive from `seed`.
pub fn reinitialize(run_dir: Option<&Path>, seed: u64) -> Result<RunContext> {
    let Some(dir) = run_dir else {
        return Ok(RunContext::in_memory(seed));
    };
    let ckpt = dir.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    for stale in list_checkpoints(&ckpt)? {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    for entry in std::fs::read_dir(&ckpt).map_err(|e| Error::io(&ckpt, e))? {
        let p = entry.map_err(|e| Error::io(&ckpt, e))?.path();
        if p.extension().is_some_and(|e| e == "tmp") {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    let log = dir.join(RUN_LOG);
    if log.exists() {
        std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
    }
    Ok(RunContext {
        seed,
        run_dir: Some(dir.to_path_buf()),
    })
}
