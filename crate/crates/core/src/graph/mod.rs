//! Latent geometry graphs: k-NN similarity graphs over the samples of a
//! batch, their Laplacians, variation measures and eigenmap layouts.

mod build;
pub mod diff;
mod eigen;
pub mod export;
mod similarity;
mod variation;

pub use build::{build_lgg, knn_mask, laplacian, similarity_matrix, GraphParams, LatentGraph};
pub use eigen::{eigenmap_coords, symmetric_eigen, Eigenmap};
pub use similarity::{
    cosine_similarity_matrix, gaussian_similarity_matrix, median_pairwise_distance, Bandwidth,
    Similarity, SimilarityKind,
};
pub use variation::{
    label_variation, normalized_label_variation, signal_variation, LabelIndicatorMatrix,
    VariationValue,
};
