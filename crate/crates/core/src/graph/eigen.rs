//! Dense symmetric eigensolver and Laplacian eigenmap layouts.

use crate::error::{Error, Result};
use crate::graph::build::LatentGraph;
use crate::tensor::Tensor;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// as the columns of the second element.
pub fn symmetric_eigen(m: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = m.rows();
    if !m.is_matrix() || m.cols() != n {
        return Err(Error::Shape {
            op: "symmetric_eigen",
            lhs: m.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    let mut a: Vec<f64> = m.data().to_vec();
    let mut v = Tensor::eye(n).into_data();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off(&a) > 1e-15 * scale {
        return Err(Error::Numeric(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    Ok((values, Tensor::raw(vec![n, n], vectors)))
}

/// Low-dimensional layout of a graph's vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenmap {
    /// `B × dim`, one row per vertex.
    pub coords: Tensor,
    /// Laplacian eigenvalues of the returned directions.
    pub eigenvalues: Vec<f64>,
    /// Number of (numerically) zero Laplacian eigenvalues, one per connected
    /// component.
    pub zero_multiplicity: usize,
    /// Full Laplacian spectrum, ascending.
    pub spectrum: Vec<f64>,
}

/// Laplacian eigenmap: the eigenvectors of `L` for the `dim` smallest nonzero
/// eigenvalues. Each column's largest-magnitude entry (first on ties) is made
/// positive so the output is deterministic.
pub fn eigenmap_coords(g: &LatentGraph, dim: usize) -> Result<Eigenmap> {
    let b = g.num_vertices();
    if dim == 0 || b < dim + 1 {
        return Err(Error::usage(format!("eigenmap of dimension {dim} needs at least {} vertices", dim + 1)));
    }
    let (values, vectors) = symmetric_eigen(&g.laplacian())?;
    let top = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * top;
    let zero_multiplicity = values.iter().filter(|v| v.abs() <= tol).count();
    if zero_multiplicity + dim > b {
        return Err(Error::degenerate(format!(
            "graph has {zero_multiplicity} components; fewer than {dim} nonzero eigenvalues"
        )));
    }
    let mut coords = Tensor::zeros(&[b, dim]);
    let mut eigenvalues = Vec::with_capacity(dim);
    for (c, src) in (zero_multiplicity..zero_multiplicity + dim).enumerate() {
        let mut pivot = 0;
        for row in 0..b {
            if vectors.at(row, src).abs() > vectors.at(pivot, src).abs() {
                pivot = row;
            }
        }
        let sign = if vectors.at(pivot, src) < 0.0 { -1.0 } else { 1.0 };
        for row in 0..b {
            coords.set(row, c, sign * vectors.at(row, src));
        }
        eigenvalues.push(values[src]);
    }
    Ok(Eigenmap {
        coords,
        eigenvalues,
        zero_multiplicity,
        spectrum: values,
    })
}
