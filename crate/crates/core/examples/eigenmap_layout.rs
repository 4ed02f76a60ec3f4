//! Laplacian eigenmap of a 4-cycle and of a latent graph, for plotting.

use lgg::graph::export::write_eigenmap;
use lgg::graph::{build_lgg, eigenmap_coords, GraphParams, LatentGraph};
use lgg::model::{make_rings, Split};
use lgg::Tensor;

fn main() -> lgg::Result<()> {
    let cycle = LatentGraph::from_adjacency(Tensor::from_rows(&[
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 0.0, 1.0, 0.0],
    ])?)?;
    let map = eigenmap_coords(&cycle, 2)?;
    println!("4-cycle spectrum {:?}", map.spectrum);
    println!("4-cycle layout eigenvalues {:?}", map.eigenvalues);

    let ds = make_rings(60, 0.05, 3)?;
    let sample = ds.class_sample(Split::Train, 2, 15)?;
    let g = build_lgg(&sample.features, &GraphParams::default().with_k(3))?;
    let map = eigenmap_coords(&g, 2)?;
    println!("rings graph: {} connected components", map.zero_multiplicity);
    write_eigenmap(std::io::stdout().lock(), &map.coords, &sample.labels)?;
    Ok(())
}
