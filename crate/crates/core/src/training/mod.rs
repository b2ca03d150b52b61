//! Training loops, checkpointing, cross-validation, inference and the
//! quality diagnostic.

pub mod checkpoint;
pub mod config;
pub mod context;
pub mod cv;
pub mod diagnose;
pub mod infer;
pub mod pool;
pub mod runlog;
pub mod trainer;

pub use checkpoint::{Checkpoint, Manifest, NetworkState};
pub use config::{ModelChoice, TrainConfig};
pub use context::{reinitialize, RunContext};
pub use cv::{cross_validate, train_on_pairs, CvOutcome};
pub use diagnose::{calibrate_tau, diagnose_quality, difference_map, DiagnosticReport, DiagnosticSample};
pub use infer::{evaluate_generator, infer, time_inference, Direction, InferenceModel, TimingRow};
pub use pool::ImagePool;
pub use runlog::{read_log, LogRecord, RunLog};
pub use trainer::{initial_networks, train_cyclegan, train_pix2pix, EpochRecord, RunRecord, TrainOutcome};
