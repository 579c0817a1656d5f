//! Experiment orchestration: configuration, the two-phase training
//! protocol, evaluation, checkpoints and the numeric self-test.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod selftest;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_classifier, load_generator, save_checkpoint,
    save_classifier, save_generator, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{DatasetPreset, ExperimentConfig};
pub use eval::{evaluate_accuracy, evaluate_generator, GeneratorReport};
pub use metrics::{metrics_jsonl, write_metrics, Metric, Phase};
pub use selftest::{run_selftest, SelfTestCase, SELFTEST_TOLERANCE};
pub use train::{train_baseline, train_two_phase, Recognizer, TrainOutcome};
