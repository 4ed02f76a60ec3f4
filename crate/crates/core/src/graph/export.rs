//! Tab-separated exports of graphs and layouts.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::build::LatentGraph;
use crate::tensor::Tensor;

/// An undirected edge with `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Nonzero adjacency entries above the diagonal. With `classes`, only edges
/// joining distinct classes are kept.
pub fn edge_list(g: &LatentGraph, classes: Option<&[usize]>) -> Vec<Edge> {
    let a = g.adjacency();
    let b = g.num_vertices();
    let mut edges = Vec::new();
    for i in 0..b {
        for j in i + 1..b {
            let w = a.at(i, j);
            if w == 0.0 {
                continue;
            }
            if let Some(c) = classes {
                if c[i] == c[j] {
                    continue;
                }
            }
            edges.push(Edge { src: i, dst: j, weight: w });
        }
    }
    edges
}

/// `src\tdst\tweight`, weights with 9 significant digits.
pub fn write_edge_list<W: Write>(mut w: W, edges: &[Edge]) -> Result<()> {
    writeln!(w, "src\tdst\tweight")?;
    for e in edges {
        writeln!(w, "{}\t{}\t{:.8e}", e.src, e.dst, e.weight)?;
    }
    Ok(())
}

/// `index\tclass\tx\ty` for a `B × 2` layout.
pub fn write_eigenmap<W: Write>(mut w: W, coords: &Tensor, classes: &[usize]) -> Result<()> {
    if coords.cols() != 2 || coords.rows() != classes.len() {
        return Err(Error::Shape {
            op: "write_eigenmap",
            lhs: coords.shape().to_vec(),
            rhs: vec![classes.len(), 2],
        });
    }
    writeln!(w, "index\tclass\tx\ty")?;
    for (i, c) in classes.iter().enumerate() {
        writeln!(w, "{i}\t{c}\t{:.8e}\t{:.8e}", coords.at(i, 0), coords.at(i, 1))?;
    }
    Ok(())
}

/// Parses the edge-list format back into edges.
pub fn read_edge_list(text: &str) -> Result<Vec<Edge>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "src\tdst\tweight")) => {}
        _ => return Err(Error::Format("edge list: missing `src\\tdst\\tweight` header".into())),
    }
    lines
        .map(|(n, line)| {
            let bad = || Error::Format(format!("edge list line {}: `{line}`", n + 1));
            let mut it = line.split('\t');
            let src = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let dst = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let weight = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            Ok(Edge { src, dst, weight })
        })
        .collect()
}
