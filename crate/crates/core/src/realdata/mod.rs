//! Real-image experiments: IDX and CIFAR-10 parsers, pooling, PCA, saliency
//! rescaling, binary tasks and label corruption, and a driver that trains
//! random-feature students on the result.
//!
//! Colour images are averaged to grayscale before pooling, so a `10×10`
//! downscale always yields `D = 100` inputs.

mod parse;
mod pipeline;
mod tasks;
mod transform;

pub use parse::{
    encode_idx, parse_cifar10_bin, parse_idx, parse_idx_images, parse_idx_labels, IdxContent, ImageTensor, ParseError,
    CIFAR_RECORD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use pipeline::{
    load_dataset, preprocess, run_realdata, run_realdata_seed, Dataset, DatasetSplits, PreparedData, Preprocessing,
    RealDataSpec, RealDataSummary, RealSeedOutcome,
};
pub use tasks::{binary_task, corrupt_labels, BinaryTask, LabelledImages};
pub use transform::{downscale, flatten, pca_apply, pca_fit, saliency_rescale, PcaBasis};
