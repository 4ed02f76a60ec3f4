//! Experiment configuration files.
//!
//! The format is flat `section.key = value` lines. `#` starts a comment;
//! blank lines are ignored. Unknown keys, repeated keys and malformed values
//! are errors. Every key and its default is listed in [`KEYS`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Bandwidth, GraphParams, Similarity};
use crate::model::{make_blobs_with, make_rings_with, BlobsConfig, CenterLayout, Dataset, Split};
use crate::objectives::{LayerPairing, ObjectiveWeights};

/// Every accepted key with its default value and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.seed", "0", "seed for data generation, initialization and batching"),
    ("run.out", "out", "output directory"),
    ("data.kind", "blobs", "blobs | rings | csv | idx"),
    ("data.classes", "4", "blobs: number of classes"),
    ("data.per_class", "100", "blobs/rings: samples per class (train + test)"),
    ("data.dim", "8", "blobs: feature dimension"),
    ("data.separation", "4", "blobs: distance of class centers from the origin"),
    ("data.noise", "0.1", "rings: radial noise standard deviation"),
    ("data.test_fraction", "0.25", "blobs/rings: fraction of each class held out"),
    ("data.seed", "", "dataset seed (defaults to run.seed)"),
    ("data.path", "", "csv: file path"),
    ("data.label_column", "label", "csv: name of the label column"),
    ("data.images", "", "idx: image file path"),
    ("data.labels", "", "idx: label file path"),
    ("model.hidden", "32,32", "hidden layer widths, comma separated"),
    ("model.output", "classes", "output width: `classes` or a number (embedding width)"),
    ("objective.kind", "cross-entropy", "cross-entropy | label-variation | cross-entropy+regularizer | distill"),
    ("objective.lambda_kd", "1", "weight of the distillation terms"),
    ("objective.gamma", "1", "weight of the smoothness regularizer"),
    ("objective.adversarial_training", "false", "augment every batch with FGSM examples"),
    ("objective.regularize_input", "true", "include the input representation in the smoothness regularizer"),
    ("objective.regularize_output", "true", "include the network output in the smoothness regularizer"),
    ("graph.similarity", "auto", "auto | cosine | gaussian"),
    ("graph.k", "5", "neighbors per vertex"),
    ("graph.bandwidth", "median", "Gaussian kernel width: `median` or a number"),
    ("graph.normalize", "false", "degree-normalize graphs used for label variation"),
    ("optim.lr", "0.05", "SGD learning rate"),
    ("optim.epochs", "30", "training epochs"),
    ("optim.batch_size", "32", "mini-batch size (>= 2 x classes)"),
    ("optim.lr_decay", "none", "none | linear (decay to 0 over the run)"),
    ("teacher.weights", "", "distill: teacher weights file"),
    ("teacher.hidden", "", "distill: expected teacher hidden widths (checked against the file)"),
    ("distill.pairing", "auto", "distill: `auto` or teacher:student block pairs, e.g. 1:1,2:2"),
    ("distill.normalize", "true", "distill: degree-normalize teacher and student graphs"),
    ("distill.baseline", "false", "distill: also train the student alone and report it"),
    ("eval.weights", "", "evaluate: model weights (defaults to <out>/weights.txt)"),
    ("eval.baseline_weights", "", "evaluate: baseline weights for relative MCE"),
    ("eval.epsilon", "0.3", "FGSM step in units of the mean feature standard deviation"),
    ("eval.knn", "5", "label-variation models: neighbors of the embedding classifier"),
    ("inspect.weights", "", "graph-inspect: weights (defaults to <out>/weights.txt)"),
    ("inspect.classes", "4", "graph-inspect: classes in the sample"),
    ("inspect.per_class", "5", "graph-inspect: samples per class"),
    ("inspect.split", "test", "graph-inspect: split the sample is drawn from (train | test)"),
    ("inspect.inter_class_only", "true", "graph-inspect: export only edges joining distinct classes"),
    ("gradcheck.scope", "quick", "quick | full"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    CrossEntropy,
    LabelVariation,
    Regularized,
    Distill,
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" => Ok(ObjectiveKind::CrossEntropy),
            "label-variation" => Ok(ObjectiveKind::LabelVariation),
            "cross-entropy+regularizer" => Ok(ObjectiveKind::Regularized),
            "distill" => Ok(ObjectiveKind::Distill),
            other => Err(Error::config(format!("unknown objective `{other}`"))),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::CrossEntropy => "cross-entropy",
            ObjectiveKind::LabelVariation => "label-variation",
            ObjectiveKind::Regularized => "cross-entropy+regularizer",
            ObjectiveKind::Distill => "distill",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Blobs(BlobsConfig),
    Rings {
        per_class: usize,
        noise: f64,
        test_fraction: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

impl DataSpec {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSpec::Blobs(cfg) => make_blobs_with(cfg, seed),
            DataSpec::Rings {
                per_class,
                noise,
                test_fraction,
            } => make_rings_with(*per_class, *noise, *test_fraction, seed),
            DataSpec::Csv { path, label_column } => crate::model::load_csv_dataset(path, label_column),
            DataSpec::Idx { images, labels } => crate::model::load_idx_pair(images, labels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub linear_decay: bool,
}

impl Default for OptimSettings {
    fn default() -> Self {
        OptimSettings {
            lr: 0.05,
            epochs: 30,
            batch_size: 32,
            linear_decay: false,
        }
    }
}

impl OptimSettings {
    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.linear_decay && self.epochs > 0 {
            self.lr * (1.0 - epoch as f64 / self.epochs as f64)
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSettings {
    pub teacher_weights: Option<PathBuf>,
    pub teacher_hidden: Option<Vec<usize>>,
    pub pairing: Option<LayerPairing>,
    pub normalize: bool,
    pub baseline: bool,
}

impl Default for DistillSettings {
    fn default() -> Self {
        DistillSettings {
            teacher_weights: None,
            teacher_hidden: None,
            pairing: None,
            normalize: true,
            baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub weights: Option<PathBuf>,
    pub baseline_weights: Option<PathBuf>,
    pub epsilon: f64,
    pub knn: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            weights: None,
            baseline_weights: None,
            epsilon: 0.3,
            knn: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectSettings {
    pub weights: Option<PathBuf>,
    pub classes: usize,
    pub per_class: usize,
    pub split: Split,
    pub inter_class_only: bool,
}

impl Default for InspectSettings {
    fn default() -> Self {
        InspectSettings {
            weights: None,
            classes: 4,
            per_class: 5,
            split: Split::Test,
            inter_class_only: true,
        }
    }
}

/// Output width of the trained network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputWidth {
    Classes,
    Fixed(usize),
}

/// A full, validated description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSpec,
    pub data_seed: Option<u64>,
    pub hidden: Vec<usize>,
    pub output: OutputWidth,
    pub objective: ObjectiveKind,
    pub weights: ObjectiveWeights,
    pub adversarial_training: bool,
    pub regularize_input: bool,
    pub regularize_output: bool,
    pub graph: GraphParams,
    pub optim: OptimSettings,
    pub distill: DistillSettings,
    pub eval: EvalSettings,
    pub inspect: InspectSettings,
    pub gradcheck_full: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse("").expect("defaults are valid")
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("`{key}`: expected true/false, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| {
            let n: usize = parse_value(key, v.trim())?;
            if n == 0 {
                return Err(Error::config(format!("`{key}`: widths must be positive")));
            }
            Ok(n)
        })
        .collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn finite_nonneg(key: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::config(format!("`{key}` must be finite and >= 0, got {v}")));
    }
    Ok(v)
}

impl ExperimentConfig {
    /// Parses configuration text; keys not present take their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<(&str, String)> = KEYS.iter().map(|(k, d, _)| (*k, d.to_string())).collect();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `section.key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let slot = values
                .iter_mut()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| Error::config(format!("line {}: unknown key `{key}`", n + 1)))?;
            if seen.contains(&key) {
                return Err(Error::config(format!("line {}: key `{key}` given twice", n + 1)));
            }
            seen.push(key);
            slot.1 = value.to_string();
        }
        let get = |key: &str| -> &str { &values.iter().find(|(k, _)| *k == key).expect("known key").1 };

        let seed: u64 = parse_value("run.seed", get("run.seed"))?;
        let test_fraction = finite_nonneg("data.test_fraction", parse_value("data.test_fraction", get("data.test_fraction"))?)?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("`data.test_fraction` must be in (0, 1)"));
        }
        let per_class: usize = parse_value("data.per_class", get("data.per_class"))?;
        let data = match get("data.kind") {
            "blobs" => DataSpec::Blobs(BlobsConfig {
                classes: parse_value("data.classes", get("data.classes"))?,
                per_class,
                dim: parse_value("data.dim", get("data.dim"))?,
                separation: finite_nonneg("data.separation", parse_value("data.separation", get("data.separation"))?)?,
                layout: CenterLayout::SimplexOrRandom,
                test_fraction,
            }),
            "rings" => DataSpec::Rings {
                per_class,
                noise: finite_nonneg("data.noise", parse_value("data.noise", get("data.noise"))?)?,
                test_fraction,
            },
            "csv" => DataSpec::Csv {
                path: opt_path(get("data.path")).ok_or_else(|| Error::config("`data.path` is required for csv data"))?,
                label_column: get("data.label_column").to_string(),
            },
            "idx" => DataSpec::Idx {
                images: opt_path(get("data.images"))
                    .ok_or_else(|| Error::config("`data.images` is required for idx data"))?,
                labels: opt_path(get("data.labels"))
                    .ok_or_else(|| Error::config("`data.labels` is required for idx data"))?,
            },
            other => return Err(Error::config(format!("unknown data.kind `{other}`"))),
        };
        let data_seed = match get("data.seed") {
            "" => None,
            v => Some(parse_value("data.seed", v)?),
        };

        let hidden = parse_list("model.hidden", get("model.hidden"))?;
        let output = match get("model.output") {
            "classes" => OutputWidth::Classes,
            v => {
                let n: usize = parse_value("model.output", v)?;
                if n == 0 {
                    return Err(Error::config("`model.output` must be positive"));
                }
                OutputWidth::Fixed(n)
            }
        };

        let objective: ObjectiveKind = get("objective.kind").parse()?;
        let weights = ObjectiveWeights::new(
            parse_value("objective.lambda_kd", get("objective.lambda_kd"))?,
            parse_value("objective.gamma", get("objective.gamma"))?,
        )?;

        let k: usize = parse_value("graph.k", get("graph.k"))?;
        if k == 0 {
            return Err(Error::config("`graph.k` must be >= 1"));
        }
        let graph = GraphParams {
            k,
            similarity: get("graph.similarity").parse::<Similarity>()?,
            bandwidth: get("graph.bandwidth").parse::<Bandwidth>()?,
            normalize: parse_bool("graph.normalize", get("graph.normalize"))?,
        };

        let lr = finite_nonneg("optim.lr", parse_value("optim.lr", get("optim.lr"))?)?;
        let optim = OptimSettings {
            lr,
            epochs: parse_value("optim.epochs", get("optim.epochs"))?,
            batch_size: parse_value("optim.batch_size", get("optim.batch_size"))?,
            linear_decay: match get("optim.lr_decay") {
                "none" => false,
                "linear" => true,
                other => return Err(Error::config(format!("unknown optim.lr_decay `{other}`"))),
            },
        };

        let teacher_hidden = match get("teacher.hidden") {
            "" => None,
            v => Some(parse_list("teacher.hidden", v)?),
        };
        let distill = DistillSettings {
            teacher_weights: opt_path(get("teacher.weights")),
            teacher_hidden,
            pairing: match get("distill.pairing") {
                "auto" => None,
                v => Some(LayerPairing::parse(v)?),
            },
            normalize: parse_bool("distill.normalize", get("distill.normalize"))?,
            baseline: parse_bool("distill.baseline", get("distill.baseline"))?,
        };
        if objective == ObjectiveKind::Distill && distill.teacher_weights.is_none() {
            return Err(Error::config("distill runs need `teacher.weights`"));
        }

        let eval = EvalSettings {
            weights: opt_path(get("eval.weights")),
            baseline_weights: opt_path(get("eval.baseline_weights")),
            epsilon: finite_nonneg("eval.epsilon", parse_value("eval.epsilon", get("eval.epsilon"))?)?,
            knn: parse_value("eval.knn", get("eval.knn"))?,
        };
        if eval.knn == 0 {
            return Err(Error::config("`eval.knn` must be >= 1"));
        }
        let inspect = InspectSettings {
            weights: opt_path(get("inspect.weights")),
            classes: parse_value("inspect.classes", get("inspect.classes"))?,
            per_class: parse_value("inspect.per_class", get("inspect.per_class"))?,
            split: match get("inspect.split") {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::config(format!("`inspect.split`: expected train or test, got `{other}`"))),
            },
            inter_class_only: parse_bool("inspect.inter_class_only", get("inspect.inter_class_only"))?,
        };
        if inspect.classes < 2 || inspect.per_class == 0 {
            return Err(Error::config("graph-inspect needs >= 2 classes and >= 1 sample per class"));
        }
        let gradcheck_full = match get("gradcheck.scope") {
            "quick" => false,
            "full" => true,
            other => return Err(Error::config(format!("unknown gradcheck.scope `{other}`"))),
        };

        Ok(ExperimentConfig {
            seed,
            out: PathBuf::from(get("run.out")),
            data,
            data_seed,
            hidden,
            output,
            objective,
            weights,
            adversarial_training: parse_bool("objective.adversarial_training", get("objective.adversarial_training"))?,
            regularize_input: parse_bool("objective.regularize_input", get("objective.regularize_input"))?,
            regularize_output: parse_bool("objective.regularize_output", get("objective.regularize_output"))?,
            graph,
            optim,
            distill,
            eval,
            inspect,
            gradcheck_full,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        ExperimentConfig::parse(&text)
    }

    /// Checks that referenced input files exist.
    pub fn validate_files(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        match &self.data {
            DataSpec::Csv { path, .. } => files.push(path),
            DataSpec::Idx { images, labels } => {
                files.push(images);
                files.push(labels);
            }
            _ => {}
        }
        if self.objective == ObjectiveKind::Distill {
            files.extend(self.distill.teacher_weights.as_deref());
        }
        for f in files {
            if !f.exists() {
                return Err(Error::config(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn dataset_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        self.data.load(self.dataset_seed())
    }

    /// Full layer sizes of the trained network for a dataset.
    pub fn layer_sizes(&self, ds: &Dataset) -> Vec<usize> {
        let mut sizes = vec![ds.dim()];
        sizes.extend(&self.hidden);
        sizes.push(match self.output {
            OutputWidth::Classes => ds.num_classes,
            OutputWidth::Fixed(n) => n,
        });
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.graph.k, 5);
        assert_eq!(cfg.objective, ObjectiveKind::CrossEntropy);
        assert_eq!(cfg.weights, ObjectiveWeights::new(1.0, 1.0).unwrap());
        assert_eq!(cfg.optim.lr, 0.05);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# a run\nrun.seed = 7\nmodel.hidden = 16, 8 # two blocks\ngraph.similarity = gaussian\noptim.lr_decay = linear\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hidden, vec![16, 8]);
        assert_eq!(cfg.graph.similarity, Similarity::Gaussian);
        assert!(cfg.optim.linear_decay);
        assert!((cfg.optim.lr_at(15) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        for text in [
            "run.sed = 1",
            "run.seed = x",
            "objective.kind = hinge",
            "graph.k = 0",
            "objective.gamma = -1",
            "no equals sign",
            "run.seed = 1\nrun.seed = 2",
            "objective.kind = distill",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn every_key_is_documented_once() {
        for (i, (k, _, doc)) in KEYS.iter().enumerate() {
            assert!(!doc.is_empty());
            assert!(KEYS[i + 1..].iter().all(|(o, _, _)| o != k), "{k}");
        }
    }
}
