//! Train a small MLP on blobs and follow label variation from the input to
//! the output, before and after training.

use lgg::graph::GraphParams;
use lgg::harness::{graph_inspect, train_network, Objective, OptimSettings, TrainSpec};
use lgg::model::{make_blobs, Mlp, Split};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lgg::Result<()> {
    let seed = 0;
    let ds = make_blobs(4, 100, 8, 4.0, seed)?;
    let spec = TrainSpec {
        layer_sizes: vec![ds.dim(), 32, 32, ds.num_classes],
        objective: Objective::CrossEntropy,
        optim: OptimSettings::default(),
        seed,
        adversarial_epsilon: None,
        knn: 5,
    };
    let sample = ds.class_sample(Split::Train, 4, 5)?;
    let params = GraphParams::default().with_k(5);

    let untrained = Mlp::new(&spec.layer_sizes, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let before = graph_inspect(&untrained, &sample, &params, true)?;
    let outcome = train_network(&spec, &ds)?;
    let after = graph_inspect(outcome.net(), &sample, &params, true)?;

    println!("test accuracy {:.3}", outcome.final_test_acc());
    println!("layer\tuntrained\ttrained\tinter-class edges");
    for (b, a) in before.layers.iter().zip(&after.layers) {
        println!("{}\t{:.4}\t\t{:.4}\t{}", a.name, b.sigma_normalized, a.sigma_normalized, a.edges.len());
    }
    Ok(())
}
