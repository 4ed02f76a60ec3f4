//! Labelled datasets, synthetic generators and class-stratified batching.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// `N × d` features with class labels and a train/test tag per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub num_classes: usize,
}

/// Features and labels of one split, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl SplitView {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `idx` of this split.
    pub fn select(&self, idx: &[usize]) -> SplitView {
        SplitView {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

impl Dataset {
    /// Checks shapes, finiteness and that every class appears in both splits.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.rows() != n || self.split.len() != n {
            return Err(Error::Validation(format!(
                "{} feature rows, {n} labels, {} split tags",
                self.features.rows(),
                self.split.len()
            )));
        }
        if !self.features.all_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        for c in 0..self.num_classes {
            for tag in [Split::Train, Split::Test] {
                if !self.labels.iter().zip(&self.split).any(|(&l, &s)| l == c && s == tag) {
                    return Err(Error::Validation(format!("class {c} has no {tag:?} samples")));
                }
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Validation(format!("label {bad} out of range")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices(&self, tag: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn view(&self, tag: Split) -> SplitView {
        let idx = self.indices(tag);
        SplitView {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn train(&self) -> SplitView {
        self.view(Split::Train)
    }

    pub fn test(&self) -> SplitView {
        self.view(Split::Test)
    }

    /// Mean over features of the per-feature standard deviation on the
    /// training split.
    pub fn feature_std(&self) -> f64 {
        let train = self.train();
        let (n, d) = (train.features.rows(), train.features.cols());
        let mut total = 0.0;
        for j in 0..d {
            let mean = (0..n).map(|i| train.features.at(i, j)).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (train.features.at(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            total += var.sqrt();
        }
        total / d as f64
    }

    /// Per-feature `(min, max)` over the training split.
    pub fn feature_range(&self) -> Vec<(f64, f64)> {
        let train = self.train();
        (0..train.features.cols())
            .map(|j| {
                (0..train.features.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = train.features.at(i, j);
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    /// A class-balanced sample of the given split: the first `per_class`
    /// samples of each of the first `classes` classes, in dataset order.
    pub fn class_sample(&self, tag: Split, classes: usize, per_class: usize) -> Result<SplitView> {
        let view = self.view(tag);
        let mut idx = Vec::new();
        for c in 0..classes.min(self.num_classes) {
            let members: Vec<usize> = (0..view.len()).filter(|&i| view.labels[i] == c).take(per_class).collect();
            if members.len() < per_class {
                return Err(Error::Validation(format!(
                    "class {c} has only {} samples in the {tag:?} split",
                    members.len()
                )));
            }
            idx.extend(members);
        }
        Ok(view.select(&idx))
    }
}

/// Marks `round(n · test_fraction)` (at least one, at most `n − 1`) samples
/// of each class as test, chosen at random.
fn stratified_split<R: Rng>(labels: &[usize], num_classes: usize, test_fraction: f64, rng: &mut R) -> Vec<Split> {
    let mut split = vec![Split::Train; labels.len()];
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let n = members.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1));
        for &i in &members[..n_test.min(n)] {
            split[i] = Split::Test;
        }
    }
    split
}

/// Placement of the blob centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterLayout {
    /// Vertices of a regular simplex; needs `classes ≤ dim + 1`.
    #[default]
    Simplex,
    /// Simplex when it fits, random unit directions otherwise.
    SimplexOrRandom,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobsConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub layout: CenterLayout,
    pub test_fraction: f64,
}

impl BlobsConfig {
    pub fn new(classes: usize, per_class: usize, dim: usize, separation: f64) -> Self {
        BlobsConfig {
            classes,
            per_class,
            dim,
            separation,
            layout: CenterLayout::Simplex,
            test_fraction: 0.25,
        }
    }
}

/// Unit vectors pointing at the vertices of a regular simplex centered at
/// the origin, padded with zeros to `dim` coordinates.
pub fn simplex_directions(classes: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if classes > dim + 1 {
        return Err(Error::usage(format!(
            "simplex layout of {classes} classes needs dim >= {}",
            classes - 1
        )));
    }
    // centered standard basis of R^C lives in the (C−1)-dimensional
    // complement of the all-ones vector
    let c = classes;
    let centered: Vec<Vec<f64>> = (0..c)
        .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / c as f64).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in &centered {
        let mut u = v.clone();
        for b in &basis {
            let p: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            basis.push(u.iter().map(|x| x / n).collect());
        }
    }
    Ok(centered
        .iter()
        .map(|v| {
            let mut coords: Vec<f64> = basis.iter().map(|b| v.iter().zip(b).map(|(x, y)| x * y).sum()).collect();
            let n = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
            coords.iter_mut().for_each(|x| *x /= n);
            coords.resize(dim, 0.0);
            coords
        })
        .collect())
}

fn random_directions<R: Rng>(classes: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Isotropic unit-variance Gaussian classes centered at `separation · u_c`.
pub fn make_blobs(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    make_blobs_with(&BlobsConfig::new(classes, per_class, dim, separation), seed)
}

pub fn make_blobs_with(cfg: &BlobsConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.dim < 2 || cfg.separation.is_nan() || cfg.separation < 0.0 || cfg.per_class < 2 {
        return Err(Error::usage(format!(
            "blobs need classes >= 2, dim >= 2, per_class >= 2 and separation >= 0: {cfg:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions = match cfg.layout {
        CenterLayout::Simplex => simplex_directions(cfg.classes, cfg.dim)?,
        CenterLayout::SimplexOrRandom => match simplex_directions(cfg.classes, cfg.dim) {
            Ok(d) => d,
            Err(_) => {
                warn!("{} classes do not fit a simplex in {} dims; using random centers", cfg.classes, cfg.dim);
                random_directions(cfg.classes, cfg.dim, &mut rng)
            }
        },
        CenterLayout::Random => random_directions(cfg.classes, cfg.dim, &mut rng),
    };
    let n = cfg.classes * cfg.per_class;
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, u) in directions.iter().enumerate() {
        for _ in 0..cfg.per_class {
            for &uj in u {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(cfg.separation * uj + z);
            }
            labels.push(c);
        }
    }
    let split = stratified_split(&labels, cfg.classes, cfg.test_fraction, &mut rng);
    let ds = Dataset {
        features: Tensor::new(vec![n, cfg.dim], data)?,
        labels,
        split,
        num_classes: cfg.classes,
    };
    ds.validate()?;
    Ok(ds)
}

/// Two concentric rings of radii 1 and 2 with Gaussian radial noise.
pub fn make_rings(per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    make_rings_with(per_class, noise, 0.25, seed)
}

pub fn make_rings_with(per_class: usize, noise: f64, test_fraction: f64, seed: u64) -> Result<Dataset> {
    if per_class < 2 || noise.is_nan() || noise < 0.0 {
        return Err(Error::usage(format!(
            "rings need per_class >= 2 and noise >= 0, got {per_class}, {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(4 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for (c, radius) in [(0usize, 1.0), (1, 2.0)] {
        for _ in 0..per_class {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let z: f64 = StandardNormal.sample(&mut rng);
            let r = radius + noise * z;
            data.push(r * angle.cos());
            data.push(r * angle.sin());
            labels.push(c);
        }
    }
    let split = stratified_split(&labels, 2, test_fraction, &mut rng);
    let ds = Dataset {
        features: Tensor::new(vec![2 * per_class, 2], data)?,
        labels,
        split,
        num_classes: 2,
    };
    ds.validate()?;
    Ok(ds)
}

/// One epoch of class-mixed mini-batches over `labels` (indices into it).
///
/// Each class's samples are shuffled and spread evenly through the epoch
/// before cutting batches of `batch_size`; every index appears exactly once.
/// A trailing batch with fewer than two classes is merged into the previous
/// one, and any remaining single-class batch swaps a sample with a batch
/// that can spare one.
pub fn stratified_batches(labels: &[usize], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let present: Vec<usize> = (0..num_classes).filter(|c| labels.contains(c)).collect();
    let c = present.len();
    if c < 2 {
        return Err(Error::usage("stratified batching needs at least two classes"));
    }
    if batch_size < 2 * c {
        return Err(Error::usage(format!(
            "batch size {batch_size} is smaller than twice the number of classes ({c})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(labels.len());
    for &class in &present {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let offset: f64 = rng.gen();
        for (t, i) in members.into_iter().enumerate() {
            keyed.push(((t as f64 + offset) / n, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();

    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    let distinct = |b: &[usize]| {
        let first = labels[b[0]];
        b.iter().any(|&i| labels[i] != first)
    };
    if batches.len() > 1 && !distinct(batches.last().unwrap()) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    for b in 0..batches.len() {
        if distinct(&batches[b]) {
            continue;
        }
        let class = labels[batches[b][0]];
        let donor = (0..batches.len()).find_map(|o| {
            if o == b {
                return None;
            }
            let others: Vec<usize> = (0..batches[o].len()).filter(|&p| labels[batches[o][p]] != class).collect();
            (others.len() >= 2).then(|| (o, others[0]))
        });
        let Some((o, p)) = donor else {
            return Err(Error::usage(format!(
                "class balance too extreme for batch size {batch_size}: cannot mix classes in every batch"
            )));
        };
        let mine = batches[b][0];
        batches[b][0] = batches[o][p];
        batches[o][p] = mine;
    }
    Ok(batches)
}
