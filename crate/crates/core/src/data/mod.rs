//! Datasets: MNIST from IDX files, small synthetic problems, and seeded
//! mini-batching.

mod batch;
mod dataset;
mod idx;
mod synthetic;

pub use batch::{batches, Batch, BatchPlan};
pub use dataset::Dataset;
pub use idx::{
    load_mnist_dir, load_mnist_idx, parse_idx_images, parse_idx_labels, IMAGES_MAGIC, LABELS_MAGIC,
    MNIST_CLASSES, MNIST_TEST_FILES, MNIST_TRAIN_FILES,
};
pub use synthetic::{gen_synthetic, SyntheticKind, TEACHER_CLASSES};
