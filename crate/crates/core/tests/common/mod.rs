//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lgg::graph::LatentGraph;
use lgg::Tensor;
use nalgebra::DMatrix;
use rand::Rng;

/// Random symmetric nonnegative adjacency on `b` vertices with roughly half
/// the pairs connected.
pub fn random_graph<R: Rng>(rng: &mut R, b: usize) -> LatentGraph {
    let mut a = Tensor::zeros(&[b, b]);
    for i in 0..b {
        for j in i + 1..b {
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(0.01..1.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    LatentGraph::from_adjacency(a).unwrap()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `½ Σ_ij A_ij Σ_s (s_i − s_j)²` by direct double sum.
pub fn brute_signal_variation(a: &Tensor, s: &Tensor) -> f64 {
    let b = a.rows();
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            let d2: f64 = s.row(i).iter().zip(s.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            total += a.at(i, j) * d2;
        }
    }
    0.5 * total
}

/// `2 Σ_{i<j, c_i ≠ c_j} A_ij`.
pub fn brute_label_variation(a: &Tensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] != labels[j] {
                total += a.at(i, j);
            }
        }
    }
    2.0 * total
}

pub fn to_dmatrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

/// Ascending eigenvalues from nalgebra's symmetric solver.
pub fn oracle_eigenvalues(t: &Tensor) -> Vec<f64> {
    let mut ev: Vec<f64> = to_dmatrix(t).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest gap, over rows, between the k-th and (k+1)-th largest
/// off-diagonal similarity. Larger than zero means the k-NN sets are unique.
pub fn knn_gap(s: &Tensor, k: usize) -> f64 {
    let b = s.rows();
    (0..b)
        .map(|i| {
            let mut row: Vec<f64> = (0..b).filter(|&j| j != i).map(|j| s.at(i, j)).collect();
            row.sort_by(|x, y| y.total_cmp(x));
            if k < row.len() {
                row[k - 1] - row[k]
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Cosine similarity computed independently of the crate.
pub fn oracle_cosine(x: &Tensor) -> Tensor {
    let b = x.rows();
    let norms: Vec<f64> = (0..b).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut s = Tensor::zeros(&[b, b]);
    for i in 0..b {
        for j in 0..b {
            let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| p * q).sum();
            s.set(i, j, dot / (norms[i] * norms[j]));
        }
    }
    s
}

/// `−‖x_i − x_j‖²`; orders neighbors like any decreasing kernel of distance.
pub fn oracle_neg_sq_dist(x: &Tensor) -> Tensor {
    let b = x.rows();
    let mut s = Tensor::zeros(&[b, b]);
    for i in 0..b {
        for j in 0..b {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            s.set(i, j, -d2);
        }
    }
    s
}

pub fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    x.select_rows(perm)
}
