//! SGD training over stratified batches for every objective.

use std::fmt::Write as _;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::diff::{build_lgg_on_tape, degree_normalize_on_tape};
use crate::graph::{GraphParams, LabelIndicatorMatrix};
use crate::harness::attack::fgsm_attack;
use crate::harness::classify::Classifier;
use crate::harness::config::OptimSettings;
use crate::model::{stratified_batches, Dataset, Mlp, SplitView};
use crate::objectives::{
    cross_entropy_loss, distillation_objective, gkd_loss, label_variation_loss, smoothness_regularizer,
    LayerPairing,
};
use crate::tensor::Tensor;

/// What a training run minimizes.
#[derive(Debug, Clone)]
pub enum Objective<'a> {
    CrossEntropy,
    /// Label variation of the output embedding graph.
    LabelVariation { graph: GraphParams },
    /// Cross-entropy plus `γ Σ |σ^{ℓ+1} − σ^ℓ|`.
    Regularized {
        gamma: f64,
        graph: GraphParams,
        include_input: bool,
        include_output: bool,
    },
    /// Cross-entropy plus `λ Σ gkd` against a frozen teacher.
    Distill {
        teacher: &'a Mlp,
        pairing: LayerPairing,
        lambda: f64,
        graph: GraphParams,
    },
}

impl Objective<'_> {
    fn uses_embedding(&self) -> bool {
        matches!(self, Objective::LabelVariation { .. })
    }
}

#[derive(Debug, Clone)]
pub struct TrainSpec<'a> {
    pub layer_sizes: Vec<usize>,
    pub objective: Objective<'a>,
    pub optim: OptimSettings,
    pub seed: u64,
    /// FGSM step (absolute, in feature units) for adversarial augmentation.
    pub adversarial_epsilon: Option<f64>,
    /// Neighbors of the embedding classifier for label-variation models.
    pub knn: usize,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Mean per-representation label variation, regularized runs only.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn net(&self) -> &Mlp {
        self.classifier.net()
    }

    pub fn final_test_acc(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.test_acc)
    }
}

/// Names of the representations a network produces: `input`, `block1`, …,
/// with the last one called `output`.
pub fn layer_names(num_blocks: usize) -> Vec<String> {
    let mut names = vec!["input".to_string()];
    names.extend((1..num_blocks).map(|l| format!("block{l}")));
    names.push("output".to_string());
    names
}

/// Representations entering the smoothness regularizer: every hidden block,
/// plus the input and the output when requested.
pub fn regularized_range(num_blocks: usize, include_input: bool, include_output: bool) -> std::ops::RangeInclusive<usize> {
    let first = if include_input { 0 } else { 1 };
    let last = if include_output { num_blocks } else { num_blocks - 1 };
    first..=last
}

/// Seed of the batch order of `epoch`.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
}

fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::raw(vec![a.rows() + b.rows(), a.cols()], data)
}

struct BatchLoss {
    loss: f64,
    sigmas: Vec<f64>,
}

fn batch_step(
    net: &mut Mlp,
    spec: &TrainSpec<'_>,
    x: Tensor,
    labels: &[usize],
    num_classes: usize,
    lr: f64,
) -> Result<BatchLoss> {
    let tape = Tape::unchecked();
    let bound = net.bind(&tape);
    let reps = bound.forward(tape.constant(x))?;
    let out = *reps.last().expect("forward returns the output");
    let mut sigmas = Vec::new();
    let loss: Var<'_> = match &spec.objective {
        Objective::CrossEntropy => cross_entropy_loss(out, labels)?,
        Objective::LabelVariation { graph } => {
            let v = LabelIndicatorMatrix::new(labels, num_classes)?;
            label_variation_loss(out, &v, graph)?
        }
        Objective::Regularized {
            gamma,
            graph,
            include_input,
            include_output,
        } => {
            let task = cross_entropy_loss(out, labels)?;
            let v = LabelIndicatorMatrix::new(labels, num_classes)?;
            let range = regularized_range(net.num_blocks(), *include_input, *include_output);
            let s = smoothness_regularizer(&reps[range], &v, graph)?;
            sigmas = s.sigmas;
            if *gamma == 0.0 {
                task
            } else {
                task.add(s.penalty.scale(*gamma)?)?
            }
        }
        Objective::Distill {
            teacher,
            pairing,
            lambda,
            graph,
        } => {
            let task = cross_entropy_loss(out, labels)?;
            if *lambda == 0.0 {
                task
            } else {
                let t_reps = teacher.bind_constant(&tape).forward(reps[0])?;
                let mut kd = Vec::with_capacity(pairing.pairs().len());
                for &(t, s) in pairing.pairs() {
                    let tg = distill_graph(t_reps[t], graph)?;
                    let sg = distill_graph(reps[s], graph)?;
                    kd.push(gkd_loss(tg, sg)?);
                }
                distillation_objective(task, &kd, &crate::objectives::ObjectiveWeights::new(*lambda, 0.0)?)?
            }
        }
    };
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    net.sgd_step(&bound, &grads, lr);
    Ok(BatchLoss { loss: value, sigmas })
}

fn distill_graph<'t>(x: Var<'t>, graph: &GraphParams) -> Result<Var<'t>> {
    let g = build_lgg_on_tape(x, &GraphParams { normalize: false, ..*graph })?;
    if graph.normalize {
        degree_normalize_on_tape(g.adjacency)
    } else {
        Ok(g.adjacency)
    }
}

fn classifier_for(net: &Mlp, spec: &TrainSpec<'_>, train: &SplitView, num_classes: usize) -> Result<Classifier> {
    if spec.objective.uses_embedding() {
        Classifier::embedding(net.clone(), train, num_classes, spec.knn)
    } else {
        Ok(Classifier::logits(net.clone()))
    }
}

/// Trains a freshly initialized network on `ds`.
pub fn train_network(spec: &TrainSpec<'_>, ds: &Dataset) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let net = Mlp::new(&spec.layer_sizes, &mut rng)?;
    train_from(net, spec, ds)
}

/// Trains starting from the given parameters.
pub fn train_from(mut net: Mlp, spec: &TrainSpec<'_>, ds: &Dataset) -> Result<TrainOutcome> {
    ds.validate()?;
    if net.input_dim() != ds.dim() {
        return Err(Error::config(format!(
            "network input width {} but features have {} columns",
            net.input_dim(),
            ds.dim()
        )));
    }
    if !spec.objective.uses_embedding() && net.output_dim() != ds.num_classes {
        return Err(Error::config(format!(
            "classifier output width {} but the dataset has {} classes",
            net.output_dim(),
            ds.num_classes
        )));
    }
    if let Objective::Distill { teacher, pairing, .. } = &spec.objective {
        if teacher.input_dim() != ds.dim() {
            return Err(Error::config("teacher input width does not match the dataset"));
        }
        pairing.validate(teacher.hidden_blocks(), net.hidden_blocks())?;
    }
    let train = ds.train();
    let test = ds.test();
    let clip = ds.feature_range();
    let mut metrics = Vec::with_capacity(spec.optim.epochs);
    for epoch in 0..spec.optim.epochs {
        let lr = spec.optim.lr_at(epoch);
        let batches = stratified_batches(&train.labels, spec.optim.batch_size, epoch_seed(spec.seed, epoch))?;
        let mut loss_sum = 0.0;
        let mut sigma_sum: Vec<f64> = Vec::new();
        for (b, idx) in batches.iter().enumerate() {
            let batch = train.select(idx);
            let (x, labels) = match spec.adversarial_epsilon {
                Some(eps) => {
                    let adv = fgsm_attack(&net, &batch.features, &batch.labels, eps, Some(&clip))?;
                    let mut labels = batch.labels.clone();
                    labels.extend_from_slice(&batch.labels);
                    (concat_rows(&batch.features, &adv), labels)
                }
                None => (batch.features, batch.labels),
            };
            let step = batch_step(&mut net, spec, x, &labels, ds.num_classes, lr).map_err(|e| match e {
                e @ (Error::Numeric(_) | Error::NonFinite { .. }) => {
                    Error::Numeric(format!("epoch {}, batch {}: {e}", epoch + 1, b + 1))
                }
                other => other,
            })?;
            loss_sum += step.loss * idx.len() as f64;
            if sigma_sum.is_empty() {
                sigma_sum = vec![0.0; step.sigmas.len()];
            }
            for (acc, s) in sigma_sum.iter_mut().zip(&step.sigmas) {
                *acc += s;
            }
        }
        let classifier = classifier_for(&net, spec, &train, ds.num_classes)?;
        let row = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_acc: classifier.accuracy(&train)?,
            test_acc: classifier.accuracy(&test)?,
            sigmas: sigma_sum.iter().map(|s| s / batches.len() as f64).collect(),
        };
        debug!(
            "epoch {} loss {:.6} train {:.4} test {:.4}",
            row.epoch, row.train_loss, row.train_acc, row.test_acc
        );
        metrics.push(row);
    }
    if let Some(last) = metrics.last() {
        info!("finished {} epochs, test accuracy {:.4}", last.epoch, last.test_acc);
    }
    Ok(TrainOutcome {
        classifier: classifier_for(&net, spec, &train, ds.num_classes)?,
        metrics,
    })
}

/// `metrics.csv` contents. `sigma_names` labels the σ columns.
pub fn format_metrics(rows: &[EpochMetrics], sigma_names: &[String]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_acc");
    for name in sigma_names {
        let _ = write!(out, ",sigma_{name}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{:e},{:e},{:e}", r.epoch, r.train_loss, r.train_acc, r.test_acc);
        for s in &r.sigmas {
            let _ = write!(out, ",{s:e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_blobs;

    fn spec(objective: Objective<'_>, lr: f64, epochs: usize) -> TrainSpec<'_> {
        TrainSpec {
            layer_sizes: vec![4, 8, 3],
            objective,
            optim: OptimSettings {
                lr,
                epochs,
                batch_size: 12,
                linear_decay: false,
            },
            seed: 5,
            adversarial_epsilon: None,
            knn: 3,
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let ds = make_blobs(3, 20, 4, 3.0, 1).unwrap();
        let s = spec(Objective::CrossEntropy, 0.0, 3);
        let out = train_network(&s, &ds).unwrap();
        let init = Mlp::new(&s.layer_sizes, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(out.net(), &init);
        let l0 = out.metrics[0].train_loss;
        assert!(out.metrics.iter().all(|m| (m.train_loss - l0).abs() < 1e-12));
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let ds = make_blobs(3, 20, 4, 3.0, 1).unwrap();
        let s = spec(Objective::CrossEntropy, 0.1, 15);
        let a = train_network(&s, &ds).unwrap();
        let b = train_network(&s, &ds).unwrap();
        assert_eq!(a.net(), b.net());
        assert_eq!(a.metrics, b.metrics);
        assert!(a.metrics.last().unwrap().train_loss < a.metrics[0].train_loss);
        assert!(a.final_test_acc() > 0.9);
    }

    #[test]
    fn distill_with_zero_lambda_is_plain_training() {
        let ds = make_blobs(3, 20, 4, 3.0, 1).unwrap();
        let teacher = Mlp::new(&[4, 16, 16, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let plain = train_network(&spec(Objective::CrossEntropy, 0.1, 4), &ds).unwrap();
        let kd = Objective::Distill {
            teacher: &teacher,
            pairing: LayerPairing::fractional(2, 1).unwrap(),
            lambda: 0.0,
            graph: GraphParams::default().with_k(3).with_normalize(true),
        };
        let distilled = train_network(&spec(kd, 0.1, 4), &ds).unwrap();
        assert_eq!(plain.net(), distilled.net());
    }

    #[test]
    fn regularized_runs_report_sigmas() {
        let ds = make_blobs(3, 20, 4, 3.0, 1).unwrap();
        let obj = Objective::Regularized {
            gamma: 0.1,
            graph: GraphParams::default().with_k(3),
            include_input: true,
            include_output: true,
        };
        let out = train_network(&spec(obj, 0.05, 2), &ds).unwrap();
        assert_eq!(out.metrics[0].sigmas.len(), 3);
        let csv = format_metrics(&out.metrics, &layer_names(2));
        assert!(csv.starts_with("epoch,train_loss,train_acc,test_acc,sigma_input,sigma_block1,sigma_output\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn huge_learning_rate_reports_epoch_and_batch() {
        let ds = make_blobs(3, 20, 4, 3.0, 1).unwrap();
        let err = train_network(&spec(Objective::CrossEntropy, 1e300, 3), &ds).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("epoch") && msg.contains("batch"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
