//! Finite-difference checks of every training objective.
//!
//! Each case draws random instances and keeps only those far from the
//! non-smooth points of the objective (k-NN selection boundaries, ReLU
//! kinks, clipped similarities, `|·|` at zero), so central differences are
//! meaningful. Median bandwidths are resolved once per instance and passed
//! as fixed bandwidths, matching the constant used by the tape.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{compare_gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::diff::{build_lgg_on_tape, degree_normalize_on_tape, signal_variation_on_tape};
use crate::graph::{
    build_lgg, cosine_similarity_matrix, gaussian_similarity_matrix, knn_mask, label_variation,
    median_pairwise_distance, Bandwidth, GraphParams, LabelIndicatorMatrix, Similarity,
};
use crate::model::{BoundMlp, Mlp};
use crate::objectives::{
    cross_entropy_loss, distillation_objective, gkd_loss, label_variation_loss, smoothness_regularizer,
    LayerPairing, ObjectiveWeights,
};
use crate::tensor::Tensor;

type ScalarFn = Box<dyn for<'t> Fn(Var<'t>) -> Result<Var<'t>>>;

/// A differentiable scalar function and the point to check it at.
pub struct Instance {
    pub x: Tensor,
    pub f: ScalarFn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSettings {
    pub batch: usize,
    pub dim: usize,
    pub classes: usize,
    pub k: usize,
    pub step: f64,
    pub tolerance: f64,
    pub instances: usize,
    /// Minimum distance from a non-smooth point for an instance to be kept.
    pub margin: f64,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            batch: 8,
            dim: 5,
            classes: 4,
            k: 3,
            step: 1e-5,
            tolerance: 1e-4,
            instances: 50,
            margin: 1e-3,
            seed: 0,
        }
    }
}

type Sampler = fn(&mut ChaCha8Rng, &GradcheckSettings) -> Result<Option<Instance>>;

/// A named family of random instances.
#[derive(Clone, Copy)]
pub struct GradCase {
    pub name: &'static str,
    pub sample: Sampler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    pub passed: usize,
    pub max_error: f64,
}

impl CheckOutcome {
    pub fn ok(&self) -> bool {
        self.passed == self.instances
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<CheckOutcome>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::ok)
    }

    /// One line per check: `PASS|FAIL <name> <passed>/<instances> max_error=<e>`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {} {}/{} max_error={:.3e} tolerance={:.1e}",
                if c.ok() { "PASS" } else { "FAIL" },
                c.name,
                c.passed,
                c.instances,
                c.max_error,
                self.tolerance
            );
        }
        out
    }
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::raw(shape.to_vec(), data)
}

fn balanced_labels(rng: &mut ChaCha8Rng, b: usize, classes: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..b).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

/// Smallest gap between the k-th and (k+1)-th largest off-diagonal entry of
/// any row.
fn knn_gap(s: &Tensor, k: usize) -> f64 {
    let b = s.rows();
    let mut gap = f64::INFINITY;
    for i in 0..b {
        let mut row: Vec<f64> = (0..b).filter(|&j| j != i).map(|j| s.at(i, j)).collect();
        row.sort_by(|a, b| b.total_cmp(a));
        if k < row.len() {
            gap = gap.min(row[k - 1] - row[k]);
        }
    }
    gap
}

/// Smallest `|s_ij|` over selected, nonzero entries: distance from the
/// clipping point of retained similarities.
fn clip_gap(s: &Tensor, mask: &Tensor) -> f64 {
    s.data()
        .iter()
        .zip(mask.data())
        .filter(|(&v, &m)| m != 0.0 && v != 0.0)
        .fold(f64::INFINITY, |acc, (v, _)| acc.min(v.abs()))
}

/// Margin of the graph built on `x`; `None` if the graph cannot be built.
fn graph_margin(x: &Tensor, params: &GraphParams) -> Option<f64> {
    let s = match params.similarity {
        Similarity::Gaussian => gaussian_similarity_matrix(x, params.bandwidth).ok()?.0,
        _ => cosine_similarity_matrix(x).ok()?,
    };
    let mask = knn_mask(&s, params.k).ok()?;
    Some(knn_gap(&s, params.k).min(clip_gap(&s, &mask)))
}

fn has_zero_row(x: &Tensor) -> bool {
    (0..x.rows()).any(|i| x.row(i).iter().all(|&v| v == 0.0))
}

/// Forward values and pre-activations of a network.
fn forward_with_preactivations(net: &Mlp, x: &Tensor) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut reps = vec![x.clone()];
    let mut pre = Vec::new();
    let mut h = x.clone();
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        let mut z = h.matmul(w).expect("shapes agree");
        let n = z.cols();
        for row in z.data_mut().chunks_mut(n) {
            row.iter_mut().zip(b.data()).for_each(|(v, bias)| *v += bias);
        }
        h = if l + 1 < net.num_blocks() { z.map(|v| v.max(0.0)) } else { z.clone() };
        pre.push(z);
        reps.push(h.clone());
    }
    (reps, pre)
}

fn relu_gap(pre: &[Tensor]) -> f64 {
    pre[..pre.len() - 1]
        .iter()
        .flat_map(|z| z.data().iter())
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
}

/// Margin of the smoothness penalty over `reps`, including the distance of
/// every consecutive σ difference from zero.
fn smoothness_margin(reps: &[Tensor], labels: &LabelIndicatorMatrix, params: &GraphParams) -> Option<f64> {
    let mut margin = f64::INFINITY;
    let mut sigmas = Vec::new();
    for x in reps {
        if params.similarity == Similarity::Cosine && has_zero_row(x) {
            return None;
        }
        margin = margin.min(graph_margin(x, params)?);
        sigmas.push(label_variation(&build_lgg(x, params).ok()?, labels).ok()?.raw);
    }
    for w in sigmas.windows(2) {
        margin = margin.min((w[1] - w[0]).abs());
    }
    Some(margin)
}

fn cosine_params(k: usize, normalize: bool) -> GraphParams {
    GraphParams::default()
        .with_k(k)
        .with_similarity(Similarity::Cosine)
        .with_normalize(normalize)
}

fn fixed_gaussian_params(k: usize, x: &Tensor) -> Option<GraphParams> {
    let h = median_pairwise_distance(x).ok()?;
    Some(
        GraphParams::default()
            .with_k(k)
            .with_similarity(Similarity::Gaussian)
            .with_bandwidth(Bandwidth::Fixed(h)),
    )
}

fn accept(margin: Option<f64>, s: &GradcheckSettings) -> bool {
    margin.is_some_and(|m| m >= s.margin)
}

fn sample_cross_entropy(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    let x = gaussian_tensor(rng, &[s.batch, s.classes], 2.0);
    let labels = balanced_labels(rng, s.batch, s.classes);
    Ok(Some(Instance {
        x,
        f: Box::new(move |z| cross_entropy_loss(z, &labels)),
    }))
}

fn gkd_instance(rng: &mut ChaCha8Rng, s: &GradcheckSettings, gaussian: bool) -> Result<Option<Instance>> {
    let x = gaussian_tensor(rng, &[s.batch, s.dim], 1.0);
    let teacher = gaussian_tensor(rng, &[s.batch, s.dim + 3], 1.0);
    let params = if gaussian {
        match fixed_gaussian_params(s.k, &x) {
            Some(p) => p,
            None => return Ok(None),
        }
    } else {
        cosine_params(s.k, false)
    };
    if !accept(graph_margin(&x, &params), s) {
        return Ok(None);
    }
    let t_params = if gaussian {
        GraphParams {
            bandwidth: Bandwidth::Median,
            ..params
        }
    } else {
        params
    };
    Ok(Some(Instance {
        x,
        f: Box::new(move |v| {
            let tape = v.tape();
            let tg = build_lgg_on_tape(tape.constant(teacher.clone()), &t_params)?;
            let sg = build_lgg_on_tape(v, &params)?;
            gkd_loss(
                degree_normalize_on_tape(tg.adjacency)?,
                degree_normalize_on_tape(sg.adjacency)?,
            )
        }),
    }))
}

fn sample_gkd_cosine(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    gkd_instance(rng, s, false)
}

fn sample_gkd_gaussian(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    gkd_instance(rng, s, true)
}

fn lv_instance(rng: &mut ChaCha8Rng, s: &GradcheckSettings, kind: Similarity, normalize: bool) -> Result<Option<Instance>> {
    let x = gaussian_tensor(rng, &[s.batch, s.dim], 1.0);
    let labels = LabelIndicatorMatrix::new(&balanced_labels(rng, s.batch, s.classes), s.classes)?;
    let params = match kind {
        Similarity::Gaussian => match fixed_gaussian_params(s.k, &x) {
            Some(p) => p.with_normalize(normalize),
            None => return Ok(None),
        },
        _ => cosine_params(s.k, normalize),
    };
    if !accept(graph_margin(&x, &params), s) {
        return Ok(None);
    }
    Ok(Some(Instance {
        x,
        f: Box::new(move |v| label_variation_loss(v, &labels, &params)),
    }))
}

fn sample_lv_gaussian(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    lv_instance(rng, s, Similarity::Gaussian, false)
}

fn sample_lv_cosine(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    lv_instance(rng, s, Similarity::Cosine, false)
}

fn sample_lv_normalized(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    lv_instance(rng, s, Similarity::Cosine, true)
}

fn smoothness_instance(rng: &mut ChaCha8Rng, s: &GradcheckSettings, gaussian: bool) -> Result<Option<Instance>> {
    let net = Mlp::new(&[s.dim, 6, s.classes], rng)?;
    let x = gaussian_tensor(rng, &[s.batch, s.dim], 1.0);
    let labels = LabelIndicatorMatrix::new(&balanced_labels(rng, s.batch, s.classes), s.classes)?;
    let params = if gaussian {
        match fixed_gaussian_params(s.k, &x) {
            Some(p) => p,
            None => return Ok(None),
        }
    } else {
        cosine_params(s.k, false)
    };
    let (reps, pre) = forward_with_preactivations(&net, &x);
    let margin = smoothness_margin(&reps, &labels, &params).map(|m| m.min(relu_gap(&pre)));
    if !accept(margin, s) {
        return Ok(None);
    }
    Ok(Some(Instance {
        x,
        f: Box::new(move |v| {
            let reps = net.bind_constant(v.tape()).forward(v)?;
            Ok(smoothness_regularizer(&reps, &labels, &params)?.penalty)
        }),
    }))
}

fn sample_smoothness_cosine(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    smoothness_instance(rng, s, false)
}

fn sample_smoothness_gaussian(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    smoothness_instance(rng, s, true)
}

/// Binds `net` with its first weight matrix replaced by `w1`.
fn bind_with_first_weight<'t>(net: &Mlp, w1: Var<'t>) -> BoundMlp<'t> {
    let mut bound = net.bind_constant(w1.tape());
    bound.weights[0] = w1;
    bound
}

fn sample_distillation(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    let student = Mlp::new(&[s.dim, 6, s.classes], rng)?;
    let teacher = Mlp::new(&[s.dim, 10, 10, s.classes], rng)?;
    let x = gaussian_tensor(rng, &[s.batch, s.dim], 1.0);
    let labels = balanced_labels(rng, s.batch, s.classes);
    let lambda = [0.1, 1.0, 10.0][rng.gen_range(0..3)];
    let pairing = LayerPairing::fractional(teacher.hidden_blocks(), student.hidden_blocks())?;
    let params = cosine_params(s.k, false);
    let (reps, pre) = forward_with_preactivations(&student, &x);
    let (t_reps, _) = forward_with_preactivations(&teacher, &x);
    if pairing.pairs().iter().any(|&(t, st)| has_zero_row(&t_reps[t]) || has_zero_row(&reps[st])) {
        return Ok(None);
    }
    let margin = pairing
        .pairs()
        .iter()
        .map(|&(_, st)| graph_margin(&reps[st], &params))
        .try_fold(relu_gap(&pre), |m, g| g.map(|g| m.min(g)));
    if !accept(margin, s) {
        return Ok(None);
    }
    let w1 = student.weights()[0].clone();
    let weights = ObjectiveWeights::new(lambda, 0.0)?;
    Ok(Some(Instance {
        x: w1,
        f: Box::new(move |w| {
            let tape = w.tape();
            let input = tape.constant(x.clone());
            let reps = bind_with_first_weight(&student, w).forward(input)?;
            let t_reps = teacher.bind_constant(tape).forward(input)?;
            let task = cross_entropy_loss(*reps.last().unwrap(), &labels)?;
            let mut kd = Vec::new();
            for &(t, st) in pairing.pairs() {
                let tg = build_lgg_on_tape(t_reps[t], &params)?;
                let sg = build_lgg_on_tape(reps[st], &params)?;
                kd.push(gkd_loss(
                    degree_normalize_on_tape(tg.adjacency)?,
                    degree_normalize_on_tape(sg.adjacency)?,
                )?);
            }
            distillation_objective(task, &kd, &weights)
        }),
    }))
}

fn sample_regularized(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    let net = Mlp::new(&[s.dim, 6, 6, s.classes], rng)?;
    let x = gaussian_tensor(rng, &[s.batch, s.dim], 1.0);
    let raw_labels = balanced_labels(rng, s.batch, s.classes);
    let labels = LabelIndicatorMatrix::new(&raw_labels, s.classes)?;
    let gamma = [0.1, 1.0][rng.gen_range(0..2)];
    let params = cosine_params(s.k, false);
    let (reps, pre) = forward_with_preactivations(&net, &x);
    let margin = smoothness_margin(&reps, &labels, &params).map(|m| m.min(relu_gap(&pre)));
    if !accept(margin, s) {
        return Ok(None);
    }
    Ok(Some(Instance {
        x: net.weights()[0].clone(),
        f: Box::new(move |w| {
            let reps = bind_with_first_weight(&net, w).forward(w.tape().constant(x.clone()))?;
            let task = cross_entropy_loss(*reps.last().unwrap(), &raw_labels)?;
            let penalty = smoothness_regularizer(&reps, &labels, &params)?.penalty;
            task.add(penalty.scale(gamma)?)
        }),
    }))
}

fn sample_signal_variation(rng: &mut ChaCha8Rng, s: &GradcheckSettings) -> Result<Option<Instance>> {
    let a = gaussian_tensor(rng, &[s.batch, s.batch], 1.0);
    let sym = a.zip_map(&a.transpose(), |x, y| (x + y).abs() / 2.0)?;
    let signal = gaussian_tensor(rng, &[s.batch, 3], 1.0);
    Ok(Some(Instance {
        x: sym,
        f: Box::new(move |adj| {
            let sig = adj.tape().constant(signal.clone());
            signal_variation_on_tape(degree_normalize_on_tape(adj)?, sig)
        }),
    }))
}

/// Every objective case, in report order.
pub const OBJECTIVE_CASES: &[GradCase] = &[
    GradCase { name: "cross_entropy", sample: sample_cross_entropy },
    GradCase { name: "gkd_loss/cosine", sample: sample_gkd_cosine },
    GradCase { name: "gkd_loss/gaussian", sample: sample_gkd_gaussian },
    GradCase { name: "label_variation_loss/gaussian", sample: sample_lv_gaussian },
    GradCase { name: "label_variation_loss/cosine", sample: sample_lv_cosine },
    GradCase { name: "label_variation_loss/normalized", sample: sample_lv_normalized },
    GradCase { name: "smoothness_regularizer/cosine", sample: sample_smoothness_cosine },
    GradCase { name: "smoothness_regularizer/gaussian", sample: sample_smoothness_gaussian },
    GradCase { name: "distillation_objective", sample: sample_distillation },
    GradCase { name: "regularized_objective", sample: sample_regularized },
];

/// Extra graph primitives checked in the full scope.
pub const PRIMITIVE_CASES: &[GradCase] = &[GradCase {
    name: "degree_normalized_signal_variation",
    sample: sample_signal_variation,
}];

const MAX_ATTEMPTS: usize = 10_000;

/// Runs one case. `tamper` modifies each analytic gradient before the
/// comparison; it exists to test the checker itself.
pub fn run_case(
    case: &GradCase,
    settings: &GradcheckSettings,
    tamper: Option<&dyn Fn(&mut Tensor)>,
) -> Result<CheckOutcome> {
    let seed = settings.seed ^ case.name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = CheckOutcome {
        name: case.name.to_string(),
        instances: settings.instances,
        passed: 0,
        max_error: 0.0,
    };
    let mut attempts = 0;
    let mut done = 0;
    while done < settings.instances {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Numeric(format!(
                "{}: no tie-free instance found in {MAX_ATTEMPTS} draws",
                case.name
            )));
        }
        let Some(inst) = (case.sample)(&mut rng, settings)? else {
            continue;
        };
        let tape = Tape::new();
        let leaf = tape.leaf(inst.x.clone());
        let out = (inst.f)(leaf)?;
        let mut analytic = tape.backward(out)?.wrt(leaf);
        if let Some(t) = tamper {
            t(&mut analytic);
        }
        let err = compare_gradients(&analytic, &inst.x, settings.step, |probe| {
            let tape = Tape::new();
            Ok((inst.f)(tape.leaf(probe.clone()))?.item())
        })?;
        outcome.max_error = outcome.max_error.max(err);
        if err <= settings.tolerance {
            outcome.passed += 1;
        }
        done += 1;
    }
    Ok(outcome)
}

/// Runs the objective cases, plus primitive cases when `full` is set.
pub fn run_gradcheck(settings: &GradcheckSettings, full: bool) -> Result<GradcheckReport> {
    let mut checks = Vec::new();
    let cases = OBJECTIVE_CASES.iter().chain(if full { PRIMITIVE_CASES } else { &[] });
    for case in cases {
        checks.push(run_case(case, settings, None)?);
    }
    Ok(GradcheckReport {
        tolerance: settings.tolerance,
        checks,
    })
}
