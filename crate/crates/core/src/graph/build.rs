use crate::error::{Error, Result};
use crate::graph::similarity::{
    cosine_similarity_matrix, gaussian_similarity_matrix, Bandwidth, Similarity, SimilarityKind,
};
use crate::tensor::Tensor;

/// Parameters of latent-graph construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    pub similarity: Similarity,
    pub bandwidth: Bandwidth,
    pub normalize: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            k: 5,
            similarity: Similarity::Auto,
            bandwidth: Bandwidth::Median,
            normalize: false,
        }
    }
}

impl GraphParams {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_similarity(mut self, similarity: Similarity) -> Self {
        self.similarity = similarity;
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = bandwidth;
        self
    }
}

/// Undirected weighted graph over the samples of one batch.
///
/// The adjacency is symmetric with a zero diagonal and nonnegative entries.
/// `edges` is the 0/1 k-NN support (union-symmetrized); the adjacency is zero
/// outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGraph {
    adjacency: Tensor,
    edges: Tensor,
    k: usize,
    similarity: Option<SimilarityKind>,
    bandwidth: Option<f64>,
    normalized: bool,
}

impl LatentGraph {
    /// Wraps an explicit adjacency matrix. It must be square, exactly
    /// symmetric, nonnegative and have a zero diagonal.
    pub fn from_adjacency(adjacency: Tensor) -> Result<Self> {
        let b = adjacency.rows();
        if !adjacency.is_matrix() || adjacency.cols() != b {
            return Err(Error::Shape {
                op: "from_adjacency",
                lhs: adjacency.shape().to_vec(),
                rhs: vec![b, b],
            });
        }
        for i in 0..b {
            if adjacency.at(i, i) != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal at {i}")));
            }
            for j in 0..b {
                let a = adjacency.at(i, j);
                if a < 0.0 || !a.is_finite() {
                    return Err(Error::Validation(format!("invalid weight {a} at ({i}, {j})")));
                }
                if a != adjacency.at(j, i) {
                    return Err(Error::Validation(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        let edges = adjacency.map(|a| if a != 0.0 { 1.0 } else { 0.0 });
        let k = (0..b)
            .map(|i| edges.row(i).iter().filter(|&&e| e != 0.0).count())
            .min()
            .unwrap_or(0);
        Ok(LatentGraph {
            adjacency,
            edges,
            k,
            similarity: None,
            bandwidth: None,
            normalized: false,
        })
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// 0/1 edge-support matrix.
    pub fn edges(&self) -> &Tensor {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn similarity(&self) -> Option<SimilarityKind> {
        self.similarity
    }

    /// Gaussian bandwidth used at construction, if any.
    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of edges at each vertex.
    pub fn edge_counts(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .map(|i| self.edges.row(i).iter().filter(|&&e| e != 0.0).count())
            .collect()
    }

    /// Weighted degrees `D_ii = Σ_j A_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.num_vertices())
            .map(|i| self.adjacency.row(i).iter().sum())
            .collect()
    }

    /// Combinatorial Laplacian `L = D − A`.
    pub fn laplacian(&self) -> Tensor {
        let b = self.num_vertices();
        let deg = self.degrees();
        let mut l = self.adjacency.map(|a| -a);
        for (i, d) in deg.into_iter().enumerate() {
            l.set(i, i, d);
        }
        debug_assert_eq!(l.shape(), &[b, b]);
        l
    }

    /// Symmetric degree normalization `D^{-1/2} A D^{-1/2}` of this graph.
    /// Zero-degree vertices keep zero rows.
    pub fn degree_normalized(&self) -> LatentGraph {
        let mut g = self.clone();
        g.adjacency = degree_normalize(&self.adjacency);
        g.normalized = true;
        g
    }
}

/// Standalone free function mirroring [`LatentGraph::laplacian`].
pub fn laplacian(g: &LatentGraph) -> Tensor {
    g.laplacian()
}

pub(crate) fn inv_sqrt_degrees(adjacency: &Tensor) -> Vec<f64> {
    (0..adjacency.rows())
        .map(|i| {
            let d: f64 = adjacency.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

fn degree_normalize(adjacency: &Tensor) -> Tensor {
    let s = inv_sqrt_degrees(adjacency);
    let b = adjacency.rows();
    let mut out = adjacency.clone();
    for i in 0..b {
        for j in 0..b {
            let a = adjacency.at(i, j);
            out.set(i, j, if a == 0.0 { 0.0 } else { s[i] * a * s[j] });
        }
    }
    out
}

/// Union-symmetrized k-nearest-neighbor support of a similarity matrix.
///
/// Row `i` keeps its `k` largest off-diagonal similarities, ties broken by
/// the lower column index. Edge `(i, j)` is present if either endpoint kept
/// the other. The diagonal is always 0.
pub fn knn_mask(similarity: &Tensor, k: usize) -> Result<Tensor> {
    let b = similarity.rows();
    if !similarity.is_matrix() || similarity.cols() != b {
        return Err(Error::Shape {
            op: "knn_mask",
            lhs: similarity.shape().to_vec(),
            rhs: vec![b, b],
        });
    }
    if k == 0 || k + 1 > b {
        return Err(Error::usage(format!("k must be in [1, {}], got {k}", b.saturating_sub(1))));
    }
    let mut mask = Tensor::zeros(&[b, b]);
    let mut order: Vec<usize> = Vec::with_capacity(b);
    for i in 0..b {
        order.clear();
        order.extend((0..b).filter(|&j| j != i));
        let row = similarity.row(i);
        order.sort_by(|&p, &q| row[q].total_cmp(&row[p]).then(p.cmp(&q)));
        for &j in &order[..k] {
            mask.set(i, j, 1.0);
            mask.set(j, i, 1.0);
        }
    }
    Ok(mask)
}

/// Full similarity matrix for the requested measure, with the resolved kind
/// and the Gaussian bandwidth when one was used.
pub fn similarity_matrix(
    x: &Tensor,
    params: &GraphParams,
) -> Result<(Tensor, SimilarityKind, Option<f64>)> {
    let kind = params.similarity.resolve(x);
    match kind {
        SimilarityKind::Cosine => Ok((cosine_similarity_matrix(x)?, kind, None)),
        SimilarityKind::Gaussian => {
            let (s, h) = gaussian_similarity_matrix(x, params.bandwidth)?;
            Ok((s, kind, Some(h)))
        }
    }
}

/// Latent geometry graph of a representation batch (`B × d`, trailing
/// dimensions flattened).
///
/// Similarities are computed for every pair, each vertex keeps its `k`
/// most similar neighbors, the result is union-symmetrized with weights
/// `S_ij`, and optionally degree-normalized. Negative cosine similarities
/// are clipped to 0.
pub fn build_lgg(x: &Tensor, params: &GraphParams) -> Result<LatentGraph> {
    let x = x.flatten_rows();
    let b = x.rows();
    if params.k == 0 || params.k + 1 > b {
        return Err(Error::usage(format!(
            "k must be in [1, {}], got {}",
            b.saturating_sub(1),
            params.k
        )));
    }
    let (s, kind, bandwidth) = similarity_matrix(&x, params)?;
    let edges = knn_mask(&s, params.k)?;
    let adjacency = s.zip_map(&edges, |s, e| if e != 0.0 { s.max(0.0) } else { 0.0 })?;
    let mut g = LatentGraph {
        adjacency,
        edges,
        k: params.k,
        similarity: Some(kind),
        bandwidth,
        normalized: false,
    };
    debug_assert!(g.edge_counts().iter().all(|&c| c >= params.k && c < b));
    if params.normalize {
        g = g.degree_normalized();
    }
    Ok(g)
}
