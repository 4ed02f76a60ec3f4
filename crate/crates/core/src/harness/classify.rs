//! Turning a trained network into class predictions.

use crate::error::{Error, Result};
use crate::model::{Mlp, SplitView};
use crate::tensor::Tensor;

/// A network plus the rule mapping its outputs to classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// Argmax of the output logits.
    Logits(Mlp),
    /// Majority vote of the `k` nearest training embeddings (Euclidean).
    /// Tied votes go to the class with the smaller summed distance, then
    /// the lower index.
    Embedding {
        net: Mlp,
        reference: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        k: usize,
    },
}

impl Classifier {
    pub fn logits(net: Mlp) -> Self {
        Classifier::Logits(net)
    }

    /// Embeds `train` once and keeps it as the reference set.
    pub fn embedding(net: Mlp, train: &SplitView, num_classes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::usage(format!("k = {k} with {} reference samples", train.len())));
        }
        let reference = net.forward(&train.features)?;
        Ok(Classifier::Embedding {
            net,
            reference,
            labels: train.labels.clone(),
            num_classes,
            k,
        })
    }

    pub fn net(&self) -> &Mlp {
        match self {
            Classifier::Logits(net) | Classifier::Embedding { net, .. } => net,
        }
    }

    pub fn is_logits(&self) -> bool {
        matches!(self, Classifier::Logits(_))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let out = self.net().forward(x)?;
        match self {
            Classifier::Logits(_) => Ok((0..out.rows()).map(|i| argmax(out.row(i))).collect()),
            Classifier::Embedding {
                reference,
                labels,
                num_classes,
                k,
                ..
            } => Ok((0..out.rows())
                .map(|i| knn_vote(out.row(i), reference, labels, *num_classes, *k))
                .collect()),
        }
    }

    pub fn accuracy(&self, view: &SplitView) -> Result<f64> {
        let pred = self.predict(&view.features)?;
        Ok(accuracy(&pred, &view.labels))
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

fn knn_vote(q: &[f64], reference: &Tensor, labels: &[usize], num_classes: usize, k: usize) -> usize {
    let mut dist: Vec<(f64, usize)> = (0..reference.rows())
        .map(|i| {
            let d: f64 = reference.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d.sqrt(), i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![(0usize, 0.0f64); num_classes];
    for &(d, i) in &dist[..k] {
        votes[labels[i]].0 += 1;
        votes[labels[i]].1 += d;
    }
    let mut best = 0;
    for c in 1..num_classes {
        let (n, d) = votes[c];
        let (bn, bd) = votes[best];
        if n > bn || (n == bn && n > 0 && d < bd) {
            best = c;
        }
    }
    best
}
