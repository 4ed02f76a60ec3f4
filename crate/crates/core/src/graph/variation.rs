//! Graph-signal variation and label variation.

use crate::error::{Error, Result};
use crate::graph::build::LatentGraph;
use crate::tensor::Tensor;

/// One-hot class membership of the samples of a batch (`B × C`).
///
/// Column `c` is the indicator vector of class `c` over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIndicatorMatrix {
    values: Tensor,
    class_of: Vec<usize>,
}

impl LabelIndicatorMatrix {
    pub fn new(labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::usage("empty label vector"));
        }
        let mut values = Tensor::zeros(&[labels.len(), num_classes.max(1)]);
        for (i, &c) in labels.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::usage(format!(
                    "label {c} at row {i} out of range for {num_classes} classes"
                )));
            }
            values.set(i, c, 1.0);
        }
        Ok(LabelIndicatorMatrix {
            values,
            class_of: labels.to_vec(),
        })
    }

    /// Uses `max(label) + 1` classes.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let c = labels.iter().copied().max().map_or(0, |m| m + 1);
        LabelIndicatorMatrix::new(labels, c)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.values.cols()
    }

    /// Number of unordered pairs `i < j` with distinct classes.
    pub fn inter_class_pairs(&self) -> usize {
        let mut counts = vec![0usize; self.num_classes()];
        for &c in &self.class_of {
            counts[c] += 1;
        }
        let n = self.len();
        let same: usize = counts.iter().map(|&m| m * m.saturating_sub(1) / 2).sum();
        n * (n - 1) / 2 - same
    }

    /// `B × B` matrix with 1 where the two samples belong to distinct classes.
    pub fn distinct_class_mask(&self) -> Tensor {
        let n = self.len();
        let mut m = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                if self.class_of[i] != self.class_of[j] {
                    m.set(i, j, 1.0);
                }
            }
        }
        m
    }
}

/// A variation measure `σ`, optionally rescaled into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationValue {
    pub raw: f64,
    pub normalized: Option<f64>,
}

/// `tr(SᵀLS)` for a `B × m` signal matrix.
///
/// This equals `½ Σ_ij A_ij Σ_s (s_i − s_j)²`.
pub fn signal_variation(g: &LatentGraph, signal: &Tensor) -> Result<VariationValue> {
    let b = g.num_vertices();
    let s = signal.flatten_rows();
    if s.rows() != b {
        return Err(Error::usage(format!(
            "signal has {} rows but the graph has {b} vertices",
            s.rows()
        )));
    }
    let ls = g.laplacian().matmul(&s)?;
    let raw: f64 = s.data().iter().zip(ls.data()).map(|(a, b)| a * b).sum();
    // PSD up to rounding
    Ok(VariationValue {
        raw: raw.max(0.0),
        normalized: None,
    })
}

/// `tr(VᵀLV)`: total weight over ordered pairs of samples from distinct classes.
pub fn label_variation(g: &LatentGraph, labels: &LabelIndicatorMatrix) -> Result<VariationValue> {
    if labels.len() != g.num_vertices() {
        return Err(Error::usage(format!(
            "label matrix has {} rows but the graph has {} vertices",
            labels.len(),
            g.num_vertices()
        )));
    }
    signal_variation(g, labels.values())
}

/// Label variation divided by its largest attainable value, which is reached
/// when every inter-class pair has weight 1.
///
/// Only defined for unnormalized graphs with weights in `[0, 1]`.
pub fn normalized_label_variation(
    g: &LatentGraph,
    labels: &LabelIndicatorMatrix,
) -> Result<VariationValue> {
    if g.is_normalized() {
        return Err(Error::usage(
            "normalized label variation is undefined on degree-normalized graphs",
        ));
    }
    if g.adjacency().data().iter().any(|&a| a > 1.0) {
        return Err(Error::usage(
            "normalized label variation needs adjacency weights in [0, 1]",
        ));
    }
    let pairs = labels.inter_class_pairs();
    if pairs == 0 {
        return Err(Error::degenerate("batch contains a single class"));
    }
    let v = label_variation(g, labels)?;
    let max = 2.0 * pairs as f64;
    Ok(VariationValue {
        raw: v.raw,
        normalized: Some((v.raw / max).clamp(0.0, 1.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: f64) -> LatentGraph {
        LatentGraph::from_adjacency(Tensor::from_rows(&[[0.0, w], [w, 0.0]]).unwrap()).unwrap()
    }

    #[test]
    fn constant_signal_has_zero_variation() {
        let g = pair(0.7);
        let s = Tensor::from_rows(&[[3.0, -1.0], [3.0, -1.0]]).unwrap();
        assert_eq!(signal_variation(&g, &s).unwrap().raw, 0.0);
    }

    #[test]
    fn two_node_signal() {
        let s = Tensor::from_rows(&[[0.0], [1.0]]).unwrap();
        assert_eq!(signal_variation(&pair(1.0), &s).unwrap().raw, 1.0);
    }

    #[test]
    fn two_node_label_variation_is_two() {
        let v = LabelIndicatorMatrix::new(&[0, 1], 2).unwrap();
        assert_eq!(label_variation(&pair(1.0), &v).unwrap().raw, 2.0);
        let same = LabelIndicatorMatrix::new(&[1, 1], 2).unwrap();
        assert_eq!(label_variation(&pair(1.0), &same).unwrap().raw, 0.0);
    }

    #[test]
    fn row_mismatch() {
        let v = LabelIndicatorMatrix::new(&[0, 1, 1], 2).unwrap();
        assert!(matches!(label_variation(&pair(1.0), &v), Err(Error::Usage(_))));
    }

    #[test]
    fn indicator_rows_sum_to_one() {
        let v = LabelIndicatorMatrix::new(&[2, 0, 1, 2], 3).unwrap();
        for i in 0..4 {
            assert_eq!(v.values().row(i).iter().sum::<f64>(), 1.0);
        }
        assert_eq!(v.inter_class_pairs(), 5);
        assert!(LabelIndicatorMatrix::new(&[3], 3).is_err());
    }

    #[test]
    fn normalized_extremes() {
        let labels = LabelIndicatorMatrix::new(&[0, 0, 1, 1], 2).unwrap();
        let complete = Tensor::from_rows(&[
            [0.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 0.0],
        ])
        .unwrap();
        let g = LatentGraph::from_adjacency(complete).unwrap();
        assert_eq!(normalized_label_variation(&g, &labels).unwrap().normalized, Some(1.0));

        let intra = Tensor::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let g = LatentGraph::from_adjacency(intra).unwrap();
        assert_eq!(normalized_label_variation(&g, &labels).unwrap().normalized, Some(0.0));

        assert!(matches!(
            normalized_label_variation(&g.degree_normalized(), &labels),
            Err(Error::Usage(_))
        ));
        let single = LabelIndicatorMatrix::new(&[0, 0, 0, 0], 2).unwrap();
        assert!(matches!(normalized_label_variation(&g, &single), Err(Error::Degenerate(_))));
    }
}
