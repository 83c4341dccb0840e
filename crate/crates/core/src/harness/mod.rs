//! Datasets, configuration, file formats and the experiment driver.

mod config;
mod dataset;
mod experiment;
mod heatmap;
mod io;
mod mask_io;

pub use config::{DatasetSpec, ExperimentConfig};
pub use dataset::{load_csv_dataset, load_csv_splits, load_mnist_idx, synth_centered_blobs, Dataset, MinMaxScaler, Splits};
pub use experiment::{run_experiment, ExperimentReport, RunRecord};
pub use heatmap::{
    connectivity_heatmap, locality_ratio, weight_heatmap, window_share, write_grid_csv,
};
pub use io::{sha256_hex, write_atomic};
pub use mask_io::{format_mask, parse_mask, read_mask, write_mask};
