//! Run the `train` and `evaluate` pipelines from configuration text, the same
//! way the command-line tool does.

use lgg::harness::config::ExperimentConfig;
use lgg::harness::run::{run_evaluate, run_train};

const CONFIG: &str = "\
data.kind = blobs
data.classes = 3
data.dim = 6
model.hidden = 16,16
optim.epochs = 20
";

fn main() -> lgg::Result<()> {
    let dir = std::env::temp_dir().join("lgg-config-run");
    let mut cfg = ExperimentConfig::parse(CONFIG)?;
    cfg.out = dir.clone();
    let record = run_train(&cfg, CONFIG)?;
    for (k, v) in &record.summary {
        println!("{k}: {v}");
    }
    let eval = run_evaluate(&cfg, CONFIG)?;
    for (k, v) in &eval.summary {
        println!("{k}: {v}");
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
