//! Differentiable training objectives built on latent graphs.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::diff::{build_lgg_on_tape, label_variation_on_tape};
use crate::graph::{GraphParams, LabelIndicatorMatrix, LatentGraph, Similarity};
use crate::tensor::Tensor;

/// Weights of the auxiliary terms: `λ_KD` for distillation, `γ` for the
/// smoothness regularizer. Zero disables a term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub lambda_kd: f64,
    pub gamma: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            lambda_kd: 1.0,
            gamma: 1.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn new(lambda_kd: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("lambda_kd", lambda_kd), ("gamma", gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(ObjectiveWeights { lambda_kd, gamma })
    }
}

/// Which teacher block is matched to which student block.
///
/// Block indices count hidden blocks from 1 (block 0 is the input).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPairing {
    pairs: Vec<(usize, usize)>,
}

impl LayerPairing {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::config("layer pairing is empty"));
        }
        for w in pairs.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::config(format!(
                    "layer pairing must be strictly increasing, got {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        if pairs.iter().any(|&(t, s)| t == 0 || s == 0) {
            return Err(Error::config("layer pairing indices start at 1"));
        }
        Ok(LayerPairing { pairs })
    }

    /// Student hidden block `ℓ` pairs with teacher hidden block
    /// `round(ℓ · teacher_hidden / student_hidden)`; equal depth gives the
    /// identity pairing, and the last hidden blocks always match.
    pub fn fractional(teacher_hidden: usize, student_hidden: usize) -> Result<Self> {
        if teacher_hidden == 0 || student_hidden == 0 {
            return Err(Error::config("both networks need at least one hidden block to pair"));
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for s in 1..=student_hidden {
            let t = (2 * s * teacher_hidden + student_hidden) / (2 * student_hidden);
            let t = t.clamp(1, teacher_hidden);
            if pairs.last().is_none_or(|&(pt, _)| t > pt) {
                pairs.push((t, s));
            }
        }
        LayerPairing::new(pairs)
    }

    /// Parses `t:s,t:s,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = text
            .split(',')
            .map(|p| {
                let (t, s) = p
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::config(format!("bad layer pair `{p}`, expected t:s")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("bad layer index `{v}`")))
                };
                Ok((parse(t)?, parse(s)?))
            })
            .collect::<Result<Vec<_>>>()?;
        LayerPairing::new(pairs)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Checks indices against the hidden-block counts of both networks.
    pub fn validate(&self, teacher_hidden: usize, student_hidden: usize) -> Result<()> {
        for &(t, s) in &self.pairs {
            if t > teacher_hidden || s > student_hidden {
                return Err(Error::config(format!(
                    "pair {t}:{s} out of range for {teacher_hidden} teacher / {student_hidden} student hidden blocks"
                )));
            }
        }
        Ok(())
    }
}

/// Mean over the batch of `−log softmax(logits)_y`, with max-subtraction.
pub fn cross_entropy_loss<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let lv = logits.value();
    if !lv.is_matrix() || lv.rows() != labels.len() {
        return Err(Error::Shape {
            op: "cross_entropy_loss",
            lhs: lv.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let (b, c) = (lv.rows(), lv.cols());
    if c < 2 {
        return Err(Error::usage("cross-entropy needs at least two classes"));
    }
    let mut shift = Tensor::zeros(&[b, c]);
    let mut onehot = Tensor::zeros(&[b, c]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::usage(format!("label {y} at row {i} out of range for {c} classes")));
        }
        let m = lv.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..c {
            shift.set(i, j, m);
        }
        onehot.set(i, y, 1.0);
    }
    let tape = logits.tape();
    let z = logits.sub(tape.constant(shift))?;
    let lse = z.exp()?.row_sums()?.log()?;
    let picked = z.mul(tape.constant(onehot))?.row_sums()?;
    lse.sub(picked)?.mean()
}

/// Frobenius norm of the difference of two adjacency matrices (not squared).
pub fn gkd_loss<'t>(teacher: Var<'t>, student: Var<'t>) -> Result<Var<'t>> {
    let (t, s) = (teacher.value(), student.value());
    if t.shape() != s.shape() {
        return Err(Error::usage(format!(
            "graphs built on different batches: {:?} vs {:?}",
            t.shape(),
            s.shape()
        )));
    }
    let d = teacher.sub(student)?;
    d.mul(d)?.sum()?.sqrt()
}

/// [`gkd_loss`] on two already-built graphs.
pub fn gkd_distance(teacher: &LatentGraph, student: &LatentGraph) -> Result<f64> {
    let (t, s) = (teacher.adjacency(), student.adjacency());
    if t.shape() != s.shape() {
        return Err(Error::usage(format!(
            "graphs built on different batches: {:?} vs {:?}",
            t.shape(),
            s.shape()
        )));
    }
    Ok(t.zip_map(s, |a, b| (a - b) * (a - b))?.sum().sqrt())
}

/// `task + λ_KD · Σ kd`.
pub fn distillation_objective<'t>(
    task_loss: Var<'t>,
    kd_losses: &[Var<'t>],
    weights: &ObjectiveWeights,
) -> Result<Var<'t>> {
    if weights.lambda_kd == 0.0 || kd_losses.is_empty() {
        return Ok(task_loss);
    }
    let mut kd = kd_losses[0];
    for &term in &kd_losses[1..] {
        kd = kd.add(term)?;
    }
    task_loss.add(kd.scale(weights.lambda_kd)?)
}

/// Graph parameters used by default for the output embedding loss:
/// Gaussian kernel with median bandwidth, unnormalized.
pub fn embedding_graph_params(k: usize) -> GraphParams {
    GraphParams::default()
        .with_k(k)
        .with_similarity(Similarity::Gaussian)
        .with_normalize(false)
}

fn require_two_classes(labels: &LabelIndicatorMatrix) -> Result<()> {
    if labels.inter_class_pairs() == 0 {
        return Err(Error::degenerate("batch contains a single class"));
    }
    Ok(())
}

/// Label variation of the latent graph built on `embeddings`.
///
/// Minimizing it pushes samples of distinct classes apart; the embedding
/// width is unconstrained.
pub fn label_variation_loss<'t>(
    embeddings: Var<'t>,
    labels: &LabelIndicatorMatrix,
    params: &GraphParams,
) -> Result<Var<'t>> {
    require_two_classes(labels)?;
    let ev = embeddings.value();
    if ev.rows() != labels.len() {
        return Err(Error::usage(format!(
            "{} embeddings for {} labels",
            ev.rows(),
            labels.len()
        )));
    }
    let g = build_lgg_on_tape(embeddings, params)?;
    label_variation_on_tape(g.adjacency, labels)
}

/// Smoothness regularizer output: the penalty and the per-block label
/// variations it was computed from.
#[derive(Debug, Clone)]
pub struct Smoothness<'t> {
    pub penalty: Var<'t>,
    pub sigmas: Vec<f64>,
}

/// `Σ_ℓ |σ^{ℓ+1} − σ^ℓ|` over consecutive representations of `trace`, where
/// `σ^ℓ` is the label variation of block `ℓ`'s latent graph.
pub fn smoothness_regularizer<'t>(
    trace: &[Var<'t>],
    labels: &LabelIndicatorMatrix,
    params: &GraphParams,
) -> Result<Smoothness<'t>> {
    if trace.len() < 2 {
        return Err(Error::usage(format!(
            "smoothness regularizer needs at least 2 representations, got {}",
            trace.len()
        )));
    }
    require_two_classes(labels)?;
    let mut sigmas = Vec::with_capacity(trace.len());
    for &x in trace {
        let g = build_lgg_on_tape(x, params)?;
        sigmas.push(label_variation_on_tape(g.adjacency, labels)?);
    }
    let mut penalty = sigmas[1].sub(sigmas[0])?.abs()?;
    for w in sigmas[1..].windows(2) {
        penalty = penalty.add(w[1].sub(w[0])?.abs()?)?;
    }
    Ok(Smoothness {
        penalty,
        sigmas: sigmas.iter().map(|s| s.item()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::full(&[3, 4], 0.7));
        let l = cross_entropy_loss(logits, &[0, 1, 3]).unwrap();
        assert!((l.item() - 4f64.ln()).abs() < 1e-15);

        let sat = tape.leaf(Tensor::from_rows(&[[1000.0, 0.0], [0.0, 1000.0]]).unwrap());
        assert!(cross_entropy_loss(sat, &[0, 1]).unwrap().item() < 1e-300);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 3]));
        assert!(matches!(cross_entropy_loss(logits, &[3]), Err(Error::Usage(_))));
    }

    #[test]
    fn gkd_single_symmetric_pair() {
        let tape = Tape::new();
        let t = tape.constant(Tensor::zeros(&[3, 3]));
        let mut s = Tensor::zeros(&[3, 3]);
        s.set(0, 2, 0.3);
        s.set(2, 0, 0.3);
        let s = tape.leaf(s);
        let l = gkd_loss(t, s).unwrap().item();
        assert!((l - (2.0f64 * 0.09).sqrt()).abs() < 1e-15);
        assert_eq!(gkd_loss(s, t).unwrap().item(), l);
        assert_eq!(gkd_loss(s, s).unwrap().item(), 0.0);
    }

    #[test]
    fn gkd_batch_mismatch() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[3, 3]));
        let b = tape.leaf(Tensor::zeros(&[4, 4]));
        assert!(matches!(gkd_loss(a, b), Err(Error::Usage(_))));
    }

    #[test]
    fn distillation_arithmetic() {
        let tape = Tape::new();
        let task = tape.leaf(Tensor::scalar(1.0));
        let kd = tape.leaf(Tensor::scalar(0.5));
        let w = ObjectiveWeights::new(2.0, 0.0).unwrap();
        assert_eq!(distillation_objective(task, &[kd], &w).unwrap().item(), 2.0);
        let off = ObjectiveWeights::new(0.0, 0.0).unwrap();
        assert_eq!(distillation_objective(task, &[kd], &off).unwrap().id(), task.id());
        assert!(ObjectiveWeights::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn two_sample_embedding_loss() {
        // one pair, distinct classes: label variation is 2·s
        let tape = Tape::new();
        let e = tape.leaf(Tensor::from_rows(&[[0.0, 0.0], [0.6, 0.8]]).unwrap());
        let labels = LabelIndicatorMatrix::new(&[0, 1], 2).unwrap();
        let params = embedding_graph_params(1).with_bandwidth(crate::graph::Bandwidth::Fixed(1.0));
        let loss = label_variation_loss(e, &labels, &params).unwrap();
        let s = (-0.5f64).exp();
        assert!((loss.item() - 2.0 * s).abs() < 1e-14);
        let g = tape.backward(loss).unwrap().wrt(e);
        // descending the gradient moves the second point away from the first
        let step: Vec<f64> = g.data().iter().map(|v| -v).collect();
        assert!(step[2] > 0.0 && step[3] > 0.0);
        assert!(step[0] < 0.0 && step[1] < 0.0);
    }

    #[test]
    fn embedding_loss_single_class() {
        let tape = Tape::new();
        let e = tape.leaf(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let labels = LabelIndicatorMatrix::new(&[1, 1], 2).unwrap();
        assert!(matches!(
            label_variation_loss(e, &labels, &embedding_graph_params(1)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn pairing_rules() {
        assert_eq!(LayerPairing::fractional(2, 2).unwrap().pairs(), &[(1, 1), (2, 2)]);
        assert_eq!(LayerPairing::fractional(4, 2).unwrap().pairs(), &[(2, 1), (4, 2)]);
        assert_eq!(LayerPairing::fractional(3, 2).unwrap().pairs(), &[(2, 1), (3, 2)]);
        assert_eq!(LayerPairing::parse("1:1, 3:2").unwrap().pairs(), &[(1, 1), (3, 2)]);
        assert!(LayerPairing::parse("2:1,1:2").is_err());
        assert!(LayerPairing::fractional(2, 2).unwrap().validate(1, 2).is_err());
    }

    #[test]
    fn regularizer_needs_two_blocks() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let labels = LabelIndicatorMatrix::new(&[0, 1], 2).unwrap();
        assert!(matches!(
            smoothness_regularizer(&[x], &labels, &GraphParams::default().with_k(1)),
            Err(Error::Usage(_))
        ));
    }
}
