//! Latent graphs recorded on an autodiff tape.
//!
//! The k-NN support is computed from the forward values and then held
//! constant, so gradients flow through the retained similarity weights and
//! through degree normalization but not through the neighbor selection. The
//! Gaussian bandwidth is likewise a constant once chosen.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::build::{knn_mask, GraphParams};
use crate::graph::similarity::SimilarityKind;
use crate::graph::variation::LabelIndicatorMatrix;
use crate::tensor::Tensor;

/// Differentiable counterpart of [`crate::graph::LatentGraph`].
#[derive(Debug, Clone)]
pub struct TapeGraph<'t> {
    pub adjacency: Var<'t>,
    pub edges: Tensor,
    pub similarity: SimilarityKind,
    pub bandwidth: Option<f64>,
    pub normalized: bool,
}

fn similarity_on_tape<'t>(
    x: Var<'t>,
    kind: SimilarityKind,
    bandwidth: Option<f64>,
) -> Result<Var<'t>> {
    match kind {
        SimilarityKind::Cosine => {
            let n = x.row_normalize()?;
            n.matmul(n.transpose()?)
        }
        SimilarityKind::Gaussian => {
            let h = bandwidth.expect("gaussian similarity needs a bandwidth");
            let b = x.value().rows();
            let tape = x.tape();
            let ones = tape.constant(Tensor::ones(&[b, 1]));
            let sq = x.mul(x)?.row_sums()?;
            let gram = x.matmul(x.transpose()?)?;
            let d2 = sq.outer(ones)?.add(ones.outer(sq)?)?.sub(gram.scale(2.0)?)?;
            d2.scale(-1.0 / (2.0 * h * h))?.exp()
        }
    }
}

/// Builds the latent graph of `x` (`B × d`) on `x`'s tape.
pub fn build_lgg_on_tape<'t>(x: Var<'t>, params: &GraphParams) -> Result<TapeGraph<'t>> {
    let xv = x.value();
    if !xv.is_matrix() {
        return Err(Error::Shape {
            op: "build_lgg_on_tape",
            lhs: xv.shape().to_vec(),
            rhs: vec![],
        });
    }
    let b = xv.rows();
    if params.k == 0 || params.k + 1 > b {
        return Err(Error::usage(format!(
            "k must be in [1, {}], got {}",
            b.saturating_sub(1),
            params.k
        )));
    }
    let kind = params.similarity.resolve(&xv);
    let bandwidth = match kind {
        SimilarityKind::Gaussian => Some(params.bandwidth.resolve(&xv)?),
        SimilarityKind::Cosine => None,
    };
    let s = similarity_on_tape(x, kind, bandwidth)?;
    let edges = knn_mask(&s.value(), params.k)?;
    let tape = x.tape();
    let mut adjacency = s.relu()?.mul(tape.constant(edges.clone()))?;
    if params.normalize {
        adjacency = degree_normalize_on_tape(adjacency)?;
    }
    Ok(TapeGraph {
        adjacency,
        edges,
        similarity: kind,
        bandwidth,
        normalized: params.normalize,
    })
}

/// `D^{-1/2} A D^{-1/2}`; zero-degree vertices keep zero rows and receive no
/// gradient through their degree.
pub fn degree_normalize_on_tape(adjacency: Var<'_>) -> Result<Var<'_>> {
    let tape = adjacency.tape();
    let d = adjacency.row_sums()?;
    let dv = d.value();
    let isolated = dv.map(|v| if v > 0.0 { 0.0 } else { 1.0 });
    let connected = dv.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let inv_sqrt = d
        .add(tape.constant(isolated))?
        .log()?
        .scale(-0.5)?
        .exp()?
        .mul(tape.constant(connected))?;
    adjacency.mul(inv_sqrt.outer(inv_sqrt)?)
}

/// `tr(SᵀLS) = tr(SᵀDS) − tr(SᵀAS)` on the tape.
pub fn signal_variation_on_tape<'t>(adjacency: Var<'t>, signal: Var<'t>) -> Result<Var<'t>> {
    let a = adjacency.value();
    let s = signal.value();
    if s.rows() != a.rows() {
        return Err(Error::usage(format!(
            "signal has {} rows but the graph has {} vertices",
            s.rows(),
            a.rows()
        )));
    }
    let degree_term = adjacency.row_sums()?.mul(signal.mul(signal)?.row_sums()?)?.sum()?;
    let adjacency_term = signal.mul(adjacency.matmul(signal)?)?.sum()?;
    degree_term.sub(adjacency_term)
}

/// `tr(VᵀLV)` on the tape.
pub fn label_variation_on_tape<'t>(adjacency: Var<'t>, labels: &LabelIndicatorMatrix) -> Result<Var<'t>> {
    let v = adjacency.tape().constant(labels.values().clone());
    signal_variation_on_tape(adjacency, v)
}
