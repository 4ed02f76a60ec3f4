//! The five command pipelines and the files they write.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::error::{Error, Result};
use crate::harness::classify::Classifier;
use crate::harness::config::{ExperimentConfig, ObjectiveKind};
use crate::harness::gradcheck::{run_gradcheck, GradcheckSettings};
use crate::harness::inspect::graph_inspect;
use crate::harness::robustness::{corruption_eval, fgsm_error, relative_mce, CorruptionSuite};
use crate::harness::train::{format_metrics, layer_names, regularized_range, train_network, EpochMetrics, Objective, TrainSpec};
use crate::model::{load_weights, save_weights, Dataset, Mlp};
use crate::objectives::LayerPairing;

/// Artifacts of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Byte copy of the configuration file.
    pub config_text: String,
    pub metrics: Vec<EpochMetrics>,
    pub weights_path: Option<PathBuf>,
    /// `key\tvalue` lines, also written to `summary.txt`.
    pub summary: Vec<(String, String)>,
}

impl RunRecord {
    fn new(config_text: &str) -> Self {
        RunRecord {
            config_text: config_text.to_string(),
            metrics: Vec::new(),
            weights_path: None,
            summary: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn summary_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }
}

fn prepare_out(cfg: &ExperimentConfig, config_text: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.txt"), config_text)?;
    Ok(())
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate_files()?;
    let ds = cfg.load_dataset()?;
    ds.validate()?;
    Ok(ds)
}

fn objective_for<'a>(cfg: &ExperimentConfig) -> Result<Objective<'a>> {
    Ok(match cfg.objective {
        ObjectiveKind::CrossEntropy => Objective::CrossEntropy,
        ObjectiveKind::LabelVariation => Objective::LabelVariation { graph: cfg.graph },
        ObjectiveKind::Regularized => Objective::Regularized {
            gamma: cfg.weights.gamma,
            graph: cfg.graph,
            include_input: cfg.regularize_input,
            include_output: cfg.regularize_output,
        },
        ObjectiveKind::Distill => {
            return Err(Error::config("distill objectives run through the `distill` command"))
        }
    })
}

fn spec_for<'a>(cfg: &ExperimentConfig, ds: &Dataset, objective: Objective<'a>) -> TrainSpec<'a> {
    TrainSpec {
        layer_sizes: cfg.layer_sizes(ds),
        objective,
        optim: cfg.optim,
        seed: cfg.seed,
        adversarial_epsilon: cfg.adversarial_training.then(|| cfg.eval.epsilon * ds.feature_std()),
        knn: cfg.eval.knn,
    }
}

fn sigma_names(cfg: &ExperimentConfig, num_blocks: usize) -> Vec<String> {
    if cfg.objective != ObjectiveKind::Regularized {
        return Vec::new();
    }
    let names = layer_names(num_blocks);
    names[regularized_range(num_blocks, cfg.regularize_input, cfg.regularize_output)].to_vec()
}

/// `train`: fits a network and writes `config.txt`, `metrics.csv`,
/// `weights.txt` and `summary.txt` to the output directory.
pub fn run_train(cfg: &ExperimentConfig, config_text: &str) -> Result<RunRecord> {
    let ds = load_data(cfg)?;
    let spec = spec_for(cfg, &ds, objective_for(cfg)?);
    prepare_out(cfg, config_text)?;
    let outcome = train_network(&spec, &ds)?;
    let net = outcome.net();
    let mut record = RunRecord::new(config_text);
    std::fs::write(
        cfg.out.join("metrics.csv"),
        format_metrics(&outcome.metrics, &sigma_names(cfg, net.num_blocks())),
    )?;
    let weights = cfg.out.join("weights.txt");
    save_weights(net, &weights)?;
    record.note("objective", cfg.objective);
    record.note("parameters", net.parameter_count());
    record.note("test_accuracy", format!("{:e}", outcome.final_test_acc()));
    std::fs::write(cfg.out.join("summary.txt"), record.summary_text())?;
    record.metrics = outcome.metrics;
    record.weights_path = Some(weights);
    info!("wrote {}", cfg.out.display());
    Ok(record)
}

fn load_teacher(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Mlp> {
    let path = cfg
        .distill
        .teacher_weights
        .as_ref()
        .ok_or_else(|| Error::config("distill runs need `teacher.weights`"))?;
    let teacher = load_weights(path)?;
    if let Some(hidden) = &cfg.distill.teacher_hidden {
        let actual = &teacher.layer_sizes()[1..teacher.num_blocks()];
        if actual != hidden.as_slice() {
            return Err(Error::config(format!(
                "teacher file has hidden widths {actual:?}, config expects {hidden:?}"
            )));
        }
    }
    if teacher.input_dim() != ds.dim() || teacher.output_dim() != ds.num_classes {
        return Err(Error::config(format!(
            "teacher maps {} -> {} but the dataset has {} features and {} classes",
            teacher.input_dim(),
            teacher.output_dim(),
            ds.dim(),
            ds.num_classes
        )));
    }
    Ok(teacher)
}

/// `distill`: trains the student against a frozen teacher. With
/// `distill.baseline`, also trains the student alone from the same seed.
pub fn run_distill(cfg: &ExperimentConfig, config_text: &str) -> Result<RunRecord> {
    let ds = load_data(cfg)?;
    let teacher = load_teacher(cfg, &ds)?;
    let student_hidden = cfg.hidden.len();
    let pairing = match &cfg.distill.pairing {
        Some(p) => p.clone(),
        None => LayerPairing::fractional(teacher.hidden_blocks(), student_hidden)?,
    };
    pairing.validate(teacher.hidden_blocks(), student_hidden)?;
    let objective = Objective::Distill {
        teacher: &teacher,
        pairing: pairing.clone(),
        lambda: cfg.weights.lambda_kd,
        graph: cfg.graph.with_normalize(cfg.distill.normalize),
    };
    let spec = spec_for(cfg, &ds, objective);
    prepare_out(cfg, config_text)?;
    let outcome = train_network(&spec, &ds)?;
    let mut record = RunRecord::new(config_text);
    std::fs::write(cfg.out.join("metrics.csv"), format_metrics(&outcome.metrics, &[]))?;
    let weights = cfg.out.join("weights.txt");
    save_weights(outcome.net(), &weights)?;
    record.note("teacher_parameters", teacher.parameter_count());
    record.note("student_parameters", outcome.net().parameter_count());
    let pairs: Vec<String> = pairing.pairs().iter().map(|(t, s)| format!("{t}:{s}")).collect();
    record.note("pairing", pairs.join(","));
    record.note("lambda_kd", cfg.weights.lambda_kd);
    record.note("test_accuracy", format!("{:e}", outcome.final_test_acc()));
    if cfg.distill.baseline {
        let base = train_network(&spec_for(cfg, &ds, Objective::CrossEntropy), &ds)?;
        std::fs::write(cfg.out.join("baseline_metrics.csv"), format_metrics(&base.metrics, &[]))?;
        save_weights(base.net(), cfg.out.join("baseline_weights.txt"))?;
        record.note("baseline_test_accuracy", format!("{:e}", base.final_test_acc()));
    }
    std::fs::write(cfg.out.join("summary.txt"), record.summary_text())?;
    record.metrics = outcome.metrics;
    record.weights_path = Some(weights);
    Ok(record)
}

fn weights_or_default(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join("weights.txt"))
}

fn classifier_from(net: Mlp, ds: &Dataset, cfg: &ExperimentConfig) -> Result<Classifier> {
    if net.output_dim() == ds.num_classes && cfg.objective != ObjectiveKind::LabelVariation {
        Ok(Classifier::logits(net))
    } else {
        Classifier::embedding(net, &ds.train(), ds.num_classes, cfg.eval.knn)
    }
}

/// `evaluate`: clean and FGSM accuracy, the corruption table and, given
/// baseline weights, relative MCE. Writes `evaluation.txt` and
/// `corruption.csv`.
pub fn run_evaluate(cfg: &ExperimentConfig, config_text: &str) -> Result<RunRecord> {
    let ds = load_data(cfg)?;
    let weights = weights_or_default(&cfg.eval.weights, &cfg.out);
    let clf = classifier_from(load_weights(&weights)?, &ds, cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    let test = ds.test();
    let std = ds.feature_std();
    let clip = ds.feature_range();
    let suite = CorruptionSuite::default();
    let mut record = RunRecord::new(config_text);
    // relative to the output directory unless configured, so reruns into
    // another directory write the same bytes
    match &cfg.eval.weights {
        Some(p) => record.note("weights", p.display()),
        None => record.note("weights", "weights.txt"),
    }
    record.note("clean_accuracy", format!("{:e}", clf.accuracy(&test)?));
    let epsilon = cfg.eval.epsilon * std;
    record.note("fgsm_epsilon", format!("{epsilon:e}"));
    if clf.is_logits() {
        let err = fgsm_error(&clf, &test, epsilon, Some(&clip))?;
        record.note("fgsm_accuracy", format!("{:e}", 1.0 - err));
    } else {
        record.note("fgsm_accuracy", "n/a");
    }
    let table = corruption_eval(&clf, &test, &suite, std, cfg.seed)?;
    std::fs::write(cfg.out.join("corruption.csv"), table.to_csv())?;
    if let Some(base_path) = &cfg.eval.baseline_weights {
        let base = classifier_from(load_weights(base_path)?, &ds, &ExperimentConfig {
            objective: ObjectiveKind::CrossEntropy,
            ..cfg.clone()
        })?;
        let base_table = corruption_eval(&base, &test, &suite, std, cfg.seed)?;
        record.note("relative_mce", format!("{:e}", relative_mce(&table, &base_table)?));
    }
    std::fs::write(cfg.out.join("evaluation.txt"), record.summary_text())?;
    record.weights_path = Some(weights);
    Ok(record)
}

/// `graph-inspect`: per-layer edge lists, eigenmaps and `summary.txt` for a
/// class-balanced sample of the configured split.
pub fn run_graph_inspect(cfg: &ExperimentConfig, config_text: &str) -> Result<RunRecord> {
    let ds = load_data(cfg)?;
    let weights = weights_or_default(&cfg.inspect.weights, &cfg.out);
    let net = load_weights(&weights)?;
    if cfg.inspect.classes > ds.num_classes {
        return Err(Error::config(format!(
            "inspect.classes = {} but the dataset has {} classes",
            cfg.inspect.classes, ds.num_classes
        )));
    }
    let sample = ds.class_sample(cfg.inspect.split, cfg.inspect.classes, cfg.inspect.per_class)?;
    let report = graph_inspect(&net, &sample, &cfg.graph, cfg.inspect.inter_class_only)?;
    report.write(&cfg.out)?;
    let mut record = RunRecord::new(config_text);
    for l in &report.layers {
        record.note(&format!("sigma_normalized_{}", l.name), format!("{:e}", l.sigma_normalized));
    }
    record.weights_path = Some(weights);
    Ok(record)
}

/// `gradcheck`: writes `gradcheck.txt` and fails with a numeric error when
/// any check fails.
pub fn run_gradcheck_command(cfg: &ExperimentConfig, config_text: &str) -> Result<RunRecord> {
    let settings = GradcheckSettings {
        seed: cfg.seed,
        instances: if cfg.gradcheck_full { 50 } else { 10 },
        ..GradcheckSettings::default()
    };
    let report = run_gradcheck(&settings, cfg.gradcheck_full)?;
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("gradcheck.txt"), report.render())?;
    let mut record = RunRecord::new(config_text);
    for c in &report.checks {
        record.note(&c.name, format!("{}/{} {:.3e}", c.passed, c.instances, c.max_error));
    }
    let failed = report.checks.iter().filter(|c| !c.ok()).count();
    if failed > 0 {
        return Err(Error::Numeric(format!(
            "{failed} gradient check(s) failed:\n{}",
            report.render()
        )));
    }
    Ok(record)
}
