//! Pairwise similarity matrices over the rows of a representation batch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Similarity measure actually used to weight graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Cosine,
    Gaussian,
}

/// Requested similarity. `Auto` picks cosine for nonnegative batches
/// (e.g. post-ReLU activations) and the Gaussian kernel otherwise, including
/// nonnegative batches with an all-zero row, where cosine is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    #[default]
    Auto,
    Cosine,
    Gaussian,
}

impl Similarity {
    pub fn resolve(self, x: &Tensor) -> SimilarityKind {
        match self {
            Similarity::Cosine => SimilarityKind::Cosine,
            Similarity::Gaussian => SimilarityKind::Gaussian,
            Similarity::Auto => {
                let nonnegative = x.data().iter().all(|&v| v >= 0.0);
                let zero_row = (0..x.rows()).any(|i| x.row(i).iter().all(|&v| v == 0.0));
                if nonnegative && !zero_row {
                    SimilarityKind::Cosine
                } else {
                    SimilarityKind::Gaussian
                }
            }
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Gaussian => "gaussian",
        })
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Auto => "auto",
            Similarity::Cosine => "cosine",
            Similarity::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Similarity::Auto),
            "cosine" => Ok(Similarity::Cosine),
            "gaussian" | "gaussian-kernel" | "rbf" => Ok(Similarity::Gaussian),
            other => Err(Error::config(format!("unknown similarity `{other}`"))),
        }
    }
}

/// Gaussian kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// Median of the batch's pairwise Euclidean distances.
    #[default]
    Median,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, x: &Tensor) -> Result<f64> {
        match self {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(Error::usage(format!("bandwidth must be positive, got {h}"))),
            Bandwidth::Median => median_pairwise_distance(x),
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Median => f.write_str("median"),
            Bandwidth::Fixed(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Bandwidth::Median);
        }
        let h: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("bandwidth must be `median` or a number, got `{s}`")))?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Bandwidth::Fixed(h))
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `S_ij = ⟨x_i, x_j⟩ / (‖x_i‖ ‖x_j‖)` over the rows of `x` (trailing
/// dimensions flattened). The diagonal is 1.
pub fn cosine_similarity_matrix(x: &Tensor) -> Result<Tensor> {
    let x = x.flatten_rows();
    let b = x.rows();
    let mut norms = Vec::with_capacity(b);
    for i in 0..b {
        let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::degenerate(format!("row {i} has zero norm; cosine similarity undefined")));
        }
        norms.push(n);
    }
    let mut s = Tensor::zeros(&[b, b]);
    for i in 0..b {
        s.set(i, i, 1.0);
        for j in i + 1..b {
            let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| p * q).sum();
            let v = dot / (norms[i] * norms[j]);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Median of the `B(B−1)/2` pairwise Euclidean distances.
pub fn median_pairwise_distance(x: &Tensor) -> Result<f64> {
    let x = x.flatten_rows();
    let b = x.rows();
    if b < 2 {
        return Err(Error::usage("median bandwidth needs at least two rows"));
    }
    let mut d = Vec::with_capacity(b * (b - 1) / 2);
    for i in 0..b {
        for j in i + 1..b {
            d.push(squared_distance(x.row(i), x.row(j)).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if median <= 0.0 {
        return Err(Error::degenerate(
            "median pairwise distance is zero; Gaussian bandwidth undefined",
        ));
    }
    Ok(median)
}

/// `S_ij = exp(−‖x_i − x_j‖² / (2h²))`. Returns the matrix and the bandwidth used.
pub fn gaussian_similarity_matrix(x: &Tensor, bandwidth: Bandwidth) -> Result<(Tensor, f64)> {
    let x = x.flatten_rows();
    let b = x.rows();
    if b < 2 {
        return Err(Error::usage("gaussian similarity needs at least two rows"));
    }
    let h = bandwidth.resolve(&x)?;
    let denom = 2.0 * h * h;
    let mut s = Tensor::zeros(&[b, b]);
    for i in 0..b {
        s.set(i, i, 1.0);
        for j in i + 1..b {
            let v = (-squared_distance(x.row(i), x.row(j)) / denom).exp();
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok((s, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity_matrix(&m(&[&[2.0, 3.0], &[2.0, 3.0]])).unwrap();
        assert!((s.at(0, 1) - 1.0).abs() < 1e-15);
        let s = cosine_similarity_matrix(&m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(s.at(0, 1), 0.0);
        let s = cosine_similarity_matrix(&m(&[&[1.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((s.at(0, 1) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.at(0, 1), s.at(1, 0));
    }

    #[test]
    fn cosine_zero_row_names_index() {
        let err = cosine_similarity_matrix(&m(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref s) if s.contains("row 1")), "{err}");
    }

    #[test]
    fn gaussian_examples() {
        let h = 0.7;
        // distance h·√2 gives e^{-1}
        let x = m(&[&[0.0, 0.0], &[h, h], &[0.0, 0.0]]);
        let (s, used) = gaussian_similarity_matrix(&x, Bandwidth::Fixed(h)).unwrap();
        assert_eq!(used, h);
        assert!((s.at(0, 1) - (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(s.at(0, 2), 1.0);
    }

    #[test]
    fn gaussian_translation_invariant() {
        let x = m(&[&[0.1, 0.5], &[1.0, -2.0], &[3.0, 0.2]]);
        let shifted = x.map(|v| v + 7.5);
        let (a, _) = gaussian_similarity_matrix(&x, Bandwidth::Median).unwrap();
        let (b, _) = gaussian_similarity_matrix(&shifted, Bandwidth::Median).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn median_rule_rejects_collapsed_batch() {
        let x = m(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            gaussian_similarity_matrix(&x, Bandwidth::Median),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn median_of_pairwise_distances() {
        // distances 1, 2, 3
        let x = m(&[&[0.0], &[1.0], &[3.0]]);
        assert_eq!(median_pairwise_distance(&x).unwrap(), 2.0);
    }

    #[test]
    fn auto_resolution() {
        assert_eq!(Similarity::Auto.resolve(&m(&[&[0.0, 1.0]])), SimilarityKind::Cosine);
        assert_eq!(Similarity::Auto.resolve(&m(&[&[-0.1, 1.0]])), SimilarityKind::Gaussian);
        assert_eq!(Similarity::Auto.resolve(&m(&[&[0.0, 1.0], &[0.0, 0.0]])), SimilarityKind::Gaussian);
    }
}
