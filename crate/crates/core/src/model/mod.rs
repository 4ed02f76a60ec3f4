//! Networks, activation traces and datasets.

pub mod data;
pub mod io;
mod mlp;

pub use data::{
    make_blobs, make_blobs_with, make_rings, make_rings_with, stratified_batches, BlobsConfig, CenterLayout,
    Dataset, Split, SplitView,
};
pub use io::{load_csv_dataset, load_idx_pair, load_weights, save_weights};
pub use mlp::{ActivationTrace, BoundMlp, Mlp};
