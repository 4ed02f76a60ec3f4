//! Add the layer-smoothness regularizer to cross-entropy training and measure
//! clean and FGSM error against an unregularized baseline.

use lgg::graph::GraphParams;
use lgg::harness::{fgsm_error, train_network, Objective, OptimSettings, TrainSpec};
use lgg::model::make_blobs;

fn main() -> lgg::Result<()> {
    let seed = 3;
    let ds = make_blobs(4, 100, 8, 4.0, seed)?;
    let test = ds.test();
    let clip = ds.feature_range();
    let eps = 0.3 * ds.feature_std();
    let spec = |objective| TrainSpec {
        layer_sizes: vec![ds.dim(), 32, 32, ds.num_classes],
        objective,
        optim: OptimSettings::default(),
        seed,
        adversarial_epsilon: None,
        knn: 5,
    };

    let report = |name: &str, outcome: &lgg::harness::TrainOutcome| -> lgg::Result<()> {
        let clean = 1.0 - outcome.final_test_acc();
        let adv = fgsm_error(&outcome.classifier, &test, eps, Some(&clip))?;
        let last = outcome.metrics.last().expect("at least one epoch");
        println!("{name:<10} clean error {clean:.3}  fgsm error {adv:.3}  sigmas {:?}", last.sigmas);
        Ok(())
    };

    report("baseline", &train_network(&spec(Objective::CrossEntropy), &ds)?)?;
    for gamma in [0.01, 0.1, 1.0] {
        let objective = Objective::Regularized {
            gamma,
            graph: GraphParams::default(),
            include_input: true,
            include_output: true,
        };
        report(&format!("gamma {gamma}"), &train_network(&spec(objective), &ds)?)?;
    }
    Ok(())
}
