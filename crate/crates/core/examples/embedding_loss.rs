//! Train an embedding with the label-variation loss, classify by nearest
//! neighbors in embedding space and compare corruption robustness with a
//! cross-entropy model.

use lgg::harness::{corruption_eval, relative_mce, train_network, CorruptionSuite, Objective, OptimSettings, TrainSpec};
use lgg::model::make_blobs;
use lgg::objectives::embedding_graph_params;

fn main() -> lgg::Result<()> {
    let seed = 2;
    let ds = make_blobs(4, 100, 8, 3.0, seed)?;
    let spec = |out, objective| TrainSpec {
        layer_sizes: vec![ds.dim(), 32, 32, out],
        objective,
        optim: OptimSettings::default(),
        seed,
        adversarial_epsilon: None,
        knn: 5,
    };
    let ce = train_network(&spec(ds.num_classes, Objective::CrossEntropy), &ds)?;
    let lv = train_network(&spec(16, Objective::LabelVariation { graph: embedding_graph_params(5) }), &ds)?;

    let test = ds.test();
    let suite = CorruptionSuite::default();
    let ce_table = corruption_eval(&ce.classifier, &test, &suite, ds.feature_std(), seed)?;
    let lv_table = corruption_eval(&lv.classifier, &test, &suite, ds.feature_std(), seed)?;
    println!("cross-entropy accuracy {:.3}", ce.final_test_acc());
    println!("label-variation accuracy {:.3}", lv.final_test_acc());
    print!("{}", lv_table.to_csv());
    println!("relative MCE vs cross-entropy: {:.1}", relative_mce(&lv_table, &ce_table)?);
    Ok(())
}
