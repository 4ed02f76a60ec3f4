//! Per-layer latent graph dumps of a network on a labelled sample.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::Result;
use crate::graph::export::{edge_list, write_edge_list, write_eigenmap, Edge};
use crate::graph::{build_lgg, eigenmap_coords, normalized_label_variation, GraphParams, LabelIndicatorMatrix, LatentGraph};
use crate::harness::train::layer_names;
use crate::model::{Mlp, SplitView};

/// Graph, layout and label variation of one representation.
#[derive(Debug, Clone)]
pub struct LayerInspection {
    pub name: String,
    pub graph: LatentGraph,
    pub edges: Vec<Edge>,
    /// `None` when the graph has fewer than two nonzero Laplacian eigenvalues.
    pub eigenmap: Option<crate::graph::Eigenmap>,
    pub sigma_raw: f64,
    pub sigma_normalized: f64,
}

#[derive(Debug, Clone)]
pub struct InspectReport {
    pub labels: Vec<usize>,
    pub layers: Vec<LayerInspection>,
}

impl InspectReport {
    pub fn normalized_sigmas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.sigma_normalized).collect()
    }

    /// `layer\tsigma_raw\tsigma_normalized\tedges\tcomponents`.
    pub fn summary(&self) -> String {
        let mut out = String::from("layer\tsigma_raw\tsigma_normalized\tedges\tcomponents\n");
        for l in &self.layers {
            let components = l.eigenmap.as_ref().map_or("-".to_string(), |e| e.zero_multiplicity.to_string());
            let total_edges = l.graph.edge_counts().iter().sum::<usize>() / 2;
            let _ = writeln!(
                out,
                "{}\t{:.8e}\t{:.8e}\t{}\t{}",
                l.name, l.sigma_raw, l.sigma_normalized, total_edges, components
            );
        }
        out
    }

    /// Writes `edges_<layer>.tsv`, `eigenmap_<layer>.tsv` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for l in &self.layers {
            write_edge_list(BufWriter::new(File::create(dir.join(format!("edges_{}.tsv", l.name)))?), &l.edges)?;
            if let Some(e) = &l.eigenmap {
                write_eigenmap(
                    BufWriter::new(File::create(dir.join(format!("eigenmap_{}.tsv", l.name)))?),
                    &e.coords,
                    &self.labels,
                )?;
            }
        }
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

/// Builds the latent graph of the input and of every block's output on
/// `sample`. Graphs are left unnormalized so the normalized label variation
/// is defined; `params.normalize` is ignored.
pub fn graph_inspect(net: &Mlp, sample: &SplitView, params: &GraphParams, inter_class_only: bool) -> Result<InspectReport> {
    let labels = LabelIndicatorMatrix::from_labels(&sample.labels)?;
    let trace = net.forward_traced(&sample.features)?;
    let params = GraphParams { normalize: false, ..*params };
    let mut layers = Vec::with_capacity(trace.len());
    for (name, x) in layer_names(net.num_blocks()).into_iter().zip(&trace.reps) {
        let graph = build_lgg(x, &params)?;
        let sigma = normalized_label_variation(&graph, &labels)?;
        let edges = edge_list(&graph, inter_class_only.then_some(sample.labels.as_slice()));
        let eigenmap = eigenmap_coords(&graph, 2).ok();
        layers.push(LayerInspection {
            name,
            graph,
            edges,
            eigenmap,
            sigma_raw: sigma.raw,
            sigma_normalized: sigma.normalized.expect("normalized variation present"),
        });
    }
    Ok(InspectReport {
        labels: sample.labels.clone(),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::label_variation;
    use crate::model::{make_blobs, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmas_match_graph_module_and_edges_match_adjacency() {
        let ds = make_blobs(4, 12, 6, 3.0, 2).unwrap();
        let sample = ds.class_sample(Split::Train, 4, 5).unwrap();
        let net = Mlp::new(&[6, 8, 8, 4], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let params = GraphParams::default().with_k(5);
        let report = graph_inspect(&net, &sample, &params, false).unwrap();
        assert_eq!(report.layers.len(), 4);
        let trace = net.forward_traced(&sample.features).unwrap();
        let v = LabelIndicatorMatrix::from_labels(&sample.labels).unwrap();
        for (l, x) in report.layers.iter().zip(&trace.reps) {
            let g = build_lgg(x, &params).unwrap();
            assert_eq!(l.sigma_raw, label_variation(&g, &v).unwrap().raw);
            let nz = (0..20)
                .flat_map(|i| (i + 1..20).map(move |j| (i, j)))
                .filter(|&(i, j)| g.adjacency().at(i, j) != 0.0)
                .count();
            assert_eq!(l.edges.len(), nz);
        }
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert_eq!(summary.lines().count(), 5);
        assert!(dir.path().join("edges_block2.tsv").exists());
    }
}
