//! Distil a wide teacher into a narrow student by matching their latent
//! graphs, and compare with the student trained alone.

use lgg::graph::GraphParams;
use lgg::harness::{train_network, Objective, OptimSettings, TrainSpec};
use lgg::model::make_rings;
use lgg::objectives::LayerPairing;

fn main() -> lgg::Result<()> {
    let ds = make_rings(100, 0.2, 1)?;
    let (d, c) = (ds.dim(), ds.num_classes);
    let spec = |sizes: Vec<usize>, objective| TrainSpec {
        layer_sizes: sizes,
        objective,
        optim: OptimSettings::default(),
        seed: 1,
        adversarial_epsilon: None,
        knn: 5,
    };

    let teacher = train_network(&spec(vec![d, 128, 128, c], Objective::CrossEntropy), &ds)?;
    let alone = train_network(&spec(vec![d, 16, 16, c], Objective::CrossEntropy), &ds)?;
    println!("teacher {:.3}  student alone {:.3}", teacher.final_test_acc(), alone.final_test_acc());

    for lambda in [0.1, 1.0, 10.0] {
        let objective = Objective::Distill {
            teacher: teacher.net(),
            pairing: LayerPairing::fractional(2, 2)?,
            lambda,
            graph: GraphParams::default().with_normalize(true),
        };
        let student = train_network(&spec(vec![d, 16, 16, c], objective), &ds)?;
        println!("lambda {lambda:>4}: student {:.3}", student.final_test_acc());
    }
    Ok(())
}
