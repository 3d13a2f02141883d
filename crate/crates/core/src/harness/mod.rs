//! Experiment plumbing: config files, seeded RNG streams, training runs with
//! CSV metrics, run comparison and the command-line interface.

pub mod cli;
mod config;
mod rng;
mod run;

pub use config::{
    parse_config, ConfigError, ConfigErrorKind, DatasetSpec, TrainConfig, DEFAULT_EPOCHS,
    DEFAULT_HIDDEN, DEFAULT_L2, DEFAULT_MNIST_PATH,
};
pub use rng::{rng_stream, Stream};
pub use run::{
    build_network, compare, format_comparison, format_sqrt_bench, load_config, load_datasets,
    run_experiment, sqrt_bench, train_run, write_metrics, MetricsRecord, RunOptions, RunSummary,
    SqrtBenchRow, CSV_HEADER,
};
