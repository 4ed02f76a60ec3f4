//! Dataset ingestion (CSV, IDX) and the text weights format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::data::{Dataset, Split};
use crate::model::mlp::Mlp;
use crate::tensor::Tensor;

/// Deterministic split for files without split information: every fourth
/// sample of each class goes to the test split.
fn round_robin_split(labels: &[usize], num_classes: usize) -> Vec<Split> {
    let mut seen = vec![0usize; num_classes];
    labels
        .iter()
        .map(|&c| {
            seen[c] += 1;
            if seen[c].is_multiple_of(4) {
                Split::Test
            } else {
                Split::Train
            }
        })
        .collect()
}

/// Maps raw label strings to class indices. All-integer labels keep their
/// value; anything else is numbered in sorted order.
fn encode_labels(raw: &[String]) -> (Vec<usize>, usize) {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<Result<Vec<_>, _>>() {
        let c = ints.iter().copied().max().map_or(0, |m| m + 1);
        return (ints, c);
    }
    let names: BTreeMap<&str, usize> = {
        let mut uniq: Vec<&str> = raw.iter().map(String::as_str).collect();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    (raw.iter().map(|s| names[s.as_str()]).collect(), names.len())
}

/// Comma-separated text with a header row. The label column is chosen by
/// name; an optional `split` column holds `train` / `test`.
pub fn parse_csv_dataset(text: &str, label_column: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Format("csv: empty input".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|&c| c == label_column)
        .ok_or_else(|| Error::Format(format!("csv line 1: no column named `{label_column}`")))?;
    let split_idx = columns.iter().position(|&c| c == "split");

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut splits = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Format(format!(
                "csv line {}: expected {} fields, found {}",
                n + 1,
                columns.len(),
                fields.len()
            )));
        }
        for (j, f) in fields.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(f.to_string());
            } else if Some(j) == split_idx {
                splits.push(match *f {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    other => {
                        return Err(Error::Format(format!("csv line {}: bad split `{other}`", n + 1)));
                    }
                });
            } else {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Format(format!("csv line {}, column {}: `{f}` is not a number", n + 1, j + 1)))?;
                features.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("csv: no data rows".into()));
    }
    let dim = columns.len() - 1 - usize::from(split_idx.is_some());
    if dim == 0 {
        return Err(Error::Format("csv: no feature columns".into()));
    }
    let (labels, num_classes) = encode_labels(&raw_labels);
    let split = if split_idx.is_some() {
        splits
    } else {
        round_robin_split(&labels, num_classes)
    };
    let ds = Dataset {
        features: Tensor::new(vec![rows, dim], features).map_err(|e| Error::Format(format!("csv: {e}")))?,
        labels,
        split,
        num_classes,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_csv_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    parse_csv_dataset(&fs::read_to_string(path)?, label_column)
}

/// A decoded IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decodes big-endian IDX data with element type `0x08` (unsigned byte).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format("idx: truncated magic number at byte 0".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!(
            "idx: bad magic prefix {:02x}{:02x} at byte 0",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!(
            "idx: unsupported element type 0x{:02x} at byte 2",
            bytes[2]
        )));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::Format("idx: zero dimensions at byte 3".into()));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format(format!("idx: truncated dimension header at byte {}", bytes.len())));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| {
            let o = 4 + 4 * d;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != header + n {
        return Err(Error::Format(format!(
            "idx: expected {} payload bytes after byte {header}, found {}",
            n,
            bytes.len() - header
        )));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Encodes an unsigned-byte IDX array.
pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Image/label IDX pair (e.g. MNIST format). Pixels are scaled to `[0, 1]`
/// and flattened per image.
pub fn idx_pair_dataset(images: &IdxArray, labels: &IdxArray) -> Result<Dataset> {
    if images.dims.len() < 2 {
        return Err(Error::Format(format!("idx images: expected >= 2 dimensions, got {:?}", images.dims)));
    }
    if labels.dims.len() != 1 {
        return Err(Error::Format(format!("idx labels: expected 1 dimension, got {:?}", labels.dims)));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::Validation(format!("{n} images but {} labels", labels.dims[0])));
    }
    let dim: usize = images.dims[1..].iter().product();
    let features = images.data.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let ds = Dataset {
        features: Tensor::new(vec![n, dim], features)?,
        split: round_robin_split(&labels, num_classes),
        labels,
        num_classes,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_idx_pair(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = parse_idx(&fs::read(images_path)?)?;
    let labels = parse_idx(&fs::read(labels_path)?)?;
    idx_pair_dataset(&images, &labels)
}

/// Text weights format: a `layers` header line with the layer sizes, then
/// per block the weight rows (`fan_in` lines of `fan_out` values) followed by
/// one bias line. Values carry 17 significant digits.
pub fn format_weights(net: &Mlp) -> String {
    let mut out = String::new();
    out.push_str("layers");
    for s in net.layer_sizes() {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    let line = |out: &mut String, vals: &[f64]| {
        let parts: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&parts.join(" "));
        out.push('\n');
    };
    for (w, b) in net.weights().iter().zip(net.biases()) {
        for i in 0..w.rows() {
            line(&mut out, w.row(i));
        }
        line(&mut out, b.data());
    }
    out
}

pub fn parse_weights(text: &str) -> Result<Mlp> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Format("weights: empty file".into()))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("layers") {
        return Err(Error::Format("weights line 1: expected `layers` header".into()));
    }
    let sizes: Vec<usize> = head
        .map(|s| s.parse().map_err(|_| Error::Format(format!("weights line 1: bad layer size `{s}`"))))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Format(format!("weights line 1: invalid layer sizes {sizes:?}")));
    }
    let mut read_row = |want: usize| -> Result<Vec<f64>> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::Format("weights: unexpected end of file".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("weights line {}: bad value `{s}`", n + 1))))
            .collect::<Result<_>>()?;
        if vals.len() != want {
            return Err(Error::Format(format!(
                "weights line {}: expected {want} values, found {}",
                n + 1,
                vals.len()
            )));
        }
        Ok(vals)
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in sizes.windows(2) {
        let mut data = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[0] {
            data.extend(read_row(w[1])?);
        }
        weights.push(Tensor::new(vec![w[0], w[1]], data).map_err(|e| Error::Format(format!("weights: {e}")))?);
        biases.push(Tensor::new(vec![1, w[1]], read_row(w[1])?).map_err(|e| Error::Format(format!("weights: {e}")))?);
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Format(format!("weights line {}: trailing content `{extra}`", n + 1)));
    }
    Mlp::from_parameters(&sizes, weights, biases)
}

pub fn save_weights(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_weights(net))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Mlp> {
    parse_weights(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_row_csv_is_exact() {
        let text = "a,b,label,split\n0.1,-2.5,cat,train\n3e-3,7,cat,train\n1.25,0.333,cat,test\n";
        let ds = parse_csv_dataset(text, "label").unwrap();
        assert_eq!(ds.features.data(), &[0.1, -2.5, 3e-3, 7.0, 1.25, 0.333]);
        assert_eq!(ds.labels, vec![0, 0, 0]);
        assert_eq!(ds.split, vec![Split::Train, Split::Train, Split::Test]);
    }

    #[test]
    fn csv_errors_carry_positions() {
        let err = parse_csv_dataset("x,label\n1,0\nfoo,1\n", "label").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(matches!(parse_csv_dataset("x,y\n1,0\n", "label"), Err(Error::Format(_))));
        // class 1 has no test sample
        let err = parse_csv_dataset("x,label,split\n1,0,train\n2,0,test\n3,1,train\n", "label").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn idx_header_and_pairs() {
        let images = IdxArray {
            dims: vec![8, 2, 2],
            data: (0..32).map(|v| (v * 8) as u8).collect(),
        };
        let bytes = encode_idx(&images);
        assert_eq!(&bytes[..4], &[0x00, 0x00, 0x08, 0x03]);
        let back = parse_idx(&bytes).unwrap();
        assert_eq!(back, images);

        let labels = IdxArray {
            dims: vec![8],
            data: vec![0, 1, 0, 1, 0, 1, 0, 1],
        };
        let ds = idx_pair_dataset(&images, &labels).unwrap();
        assert_eq!(ds.dim(), 4);
        assert!(ds.features.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let short = IdxArray {
            dims: vec![7],
            data: vec![0; 7],
        };
        assert!(idx_pair_dataset(&images, &short).is_err());
        assert!(parse_idx(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn weights_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[3, 5, 2], &mut rng).unwrap();
        let text = format_weights(&net);
        assert!(text.starts_with("layers 3 5 2\n"));
        assert_eq!(parse_weights(&text).unwrap(), net);
        assert!(parse_weights("layers 2 1\n1 2\n").is_err());
    }
}
