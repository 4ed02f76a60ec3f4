//! Build a latent graph on a labelled batch, measure its label variation and
//! write the inter-class edges as TSV.

use lgg::graph::{build_lgg, label_variation, normalized_label_variation, GraphParams, LabelIndicatorMatrix, Similarity};
use lgg::graph::export::{edge_list, write_edge_list};
use lgg::model::{make_blobs, Split};

fn main() -> lgg::Result<()> {
    let ds = make_blobs(3, 20, 4, 2.0, 7)?;
    let batch = ds.class_sample(Split::Train, 3, 6)?;
    let labels = LabelIndicatorMatrix::from_labels(&batch.labels)?;

    for similarity in [Similarity::Cosine, Similarity::Gaussian] {
        let params = GraphParams::default().with_k(4).with_similarity(similarity);
        let g = build_lgg(&batch.features, &params)?;
        let sigma = normalized_label_variation(&g, &labels)?;
        println!(
            "{similarity:?}: edges per vertex {:?}, sigma {:.4} (normalized {:.4})",
            g.edge_counts(),
            sigma.raw,
            sigma.normalized.unwrap_or(f64::NAN)
        );
    }

    let g = build_lgg(&batch.features, &GraphParams::default().with_k(4))?;
    let normalized = build_lgg(&batch.features, &GraphParams::default().with_k(4).with_normalize(true))?;
    println!("label variation on the degree-normalized graph: {:.4}", label_variation(&normalized, &labels)?.raw);

    println!("inter-class edges:");
    write_edge_list(std::io::stdout().lock(), &edge_list(&g, Some(&batch.labels)))?;
    Ok(())
}
