//! Feature-space corruptions, corruption error tables and relative MCE.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::harness::attack::fgsm_attack;
use crate::harness::classify::{accuracy, Classifier};
use crate::model::SplitView;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Additive `N(0, (level·std)²)` noise.
    GaussianNoise,
    /// Additive uniform noise with standard deviation `level·std`.
    UniformNoise,
    /// Each feature set to 0 with probability `level`.
    FeatureDropout,
}

impl Corruption {
    pub const ALL: [Corruption; 3] = [
        Corruption::GaussianNoise,
        Corruption::UniformNoise,
        Corruption::FeatureDropout,
    ];

    /// Levels of severities 1, 2 and 3.
    pub fn default_levels(self) -> [f64; 3] {
        match self {
            Corruption::GaussianNoise | Corruption::UniformNoise => [0.1, 0.2, 0.4],
            Corruption::FeatureDropout => [0.05, 0.1, 0.2],
        }
    }

    /// Corrupts a copy of `x`. `std` scales the noise levels.
    pub fn apply<R: Rng>(self, x: &Tensor, level: f64, std: f64, rng: &mut R) -> Result<Tensor> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::usage(format!("corruption level must be >= 0, got {level}")));
        }
        let mut out = x.clone();
        match self {
            Corruption::GaussianNoise => {
                let sigma = level * std;
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).map_err(|e| Error::usage(e.to_string()))?;
                    out.data_mut().iter_mut().for_each(|v| *v += normal.sample(rng));
                }
            }
            Corruption::UniformNoise => {
                let a = level * std * 3f64.sqrt();
                if a > 0.0 {
                    out.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-a..a));
                }
            }
            Corruption::FeatureDropout => {
                if level > 1.0 {
                    return Err(Error::usage(format!("dropout rate {level} above 1")));
                }
                out.data_mut().iter_mut().for_each(|v| {
                    if rng.gen::<f64>() < level {
                        *v = 0.0;
                    }
                });
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corruption::GaussianNoise => "gaussian_noise",
            Corruption::UniformNoise => "uniform_noise",
            Corruption::FeatureDropout => "feature_dropout",
        })
    }
}

/// Corruptions and their severity levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSuite {
    pub entries: Vec<(Corruption, Vec<f64>)>,
}

impl Default for CorruptionSuite {
    fn default() -> Self {
        CorruptionSuite {
            entries: Corruption::ALL.iter().map(|&c| (c, c.default_levels().to_vec())).collect(),
        }
    }
}

/// Error rates `E[c][s]`; column 0 is the clean error, column `s` severity `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionTable {
    pub rows: Vec<(Corruption, Vec<f64>)>,
}

impl CorruptionTable {
    pub fn get(&self, c: Corruption) -> Option<&[f64]> {
        self.rows.iter().find(|(k, _)| *k == c).map(|(_, e)| e.as_slice())
    }

    /// CSV with header `corruption,severity_0,...`.
    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|(_, e)| e.len()).max().unwrap_or(0);
        let mut out = String::from("corruption");
        for s in 0..width {
            out.push_str(&format!(",severity_{s}"));
        }
        out.push('\n');
        for (c, errs) in &self.rows {
            out.push_str(&c.to_string());
            for e in errs {
                out.push_str(&format!(",{e:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Error of `classifier` on `data` under every corruption of `suite`.
/// `std` is the feature scale of the noise levels; `seed` fixes the draws, so
/// two models evaluated with the same seed see identical corrupted inputs.
pub fn corruption_eval(
    classifier: &Classifier,
    data: &SplitView,
    suite: &CorruptionSuite,
    std: f64,
    seed: u64,
) -> Result<CorruptionTable> {
    if suite.entries.is_empty() {
        return Err(Error::usage("empty corruption suite"));
    }
    let clean = 1.0 - classifier.accuracy(data)?;
    let mut rows = Vec::with_capacity(suite.entries.len());
    for (ci, (c, levels)) in suite.entries.iter().enumerate() {
        let mut errs = vec![clean];
        for (si, &level) in levels.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64 + 1) << 32) ^ (si as u64 + 1));
            let x = c.apply(&data.features, level, std, &mut rng)?;
            let pred = classifier.predict(&x)?;
            errs.push(1.0 - accuracy(&pred, &data.labels));
        }
        rows.push((*c, errs));
    }
    Ok(CorruptionTable { rows })
}

/// `100 · mean_c (Σ_s E^model_{c,s} / Σ_s E^baseline_{c,s})`, summing
/// severities 1 and above. The clean column is not part of the sum.
pub fn relative_mce(model: &CorruptionTable, baseline: &CorruptionTable) -> Result<f64> {
    if model.rows.len() != baseline.rows.len() || model.rows.is_empty() {
        return Err(Error::usage("corruption tables cover different suites"));
    }
    let mut total = 0.0;
    for ((mc, me), (bc, be)) in model.rows.iter().zip(&baseline.rows) {
        if mc != bc || me.len() != be.len() || me.len() < 2 {
            return Err(Error::usage(format!("corruption tables disagree at {mc} / {bc}")));
        }
        let num: f64 = me[1..].iter().sum();
        let den: f64 = be[1..].iter().sum();
        if den <= 0.0 {
            return Err(Error::Numeric(format!("baseline error for {bc} is zero; ratio undefined")));
        }
        total += num / den;
    }
    Ok(100.0 * total / model.rows.len() as f64)
}

/// Error under FGSM with absolute step `epsilon`.
pub fn fgsm_error(
    classifier: &Classifier,
    data: &SplitView,
    epsilon: f64,
    clip: Option<&[(f64, f64)]>,
) -> Result<f64> {
    let Classifier::Logits(net) = classifier else {
        return Err(Error::usage("FGSM needs a classifier with logit outputs"));
    };
    let adv = fgsm_attack(net, &data.features, &data.labels, epsilon, clip)?;
    Ok(1.0 - accuracy(&classifier.predict(&adv)?, &data.labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mlp;

    fn table(scale: f64) -> CorruptionTable {
        CorruptionTable {
            rows: vec![
                (Corruption::GaussianNoise, vec![0.1, 0.2 * scale, 0.3 * scale, 0.4 * scale]),
                (Corruption::FeatureDropout, vec![0.1, 0.12 * scale, 0.2 * scale, 0.35 * scale]),
            ],
        }
    }

    #[test]
    fn relative_mce_arithmetic() {
        let base = table(1.0);
        assert_eq!(relative_mce(&base, &base).unwrap(), 100.0);
        assert!((relative_mce(&table(0.5), &base).unwrap() - 50.0).abs() < 1e-12);
        let zero = CorruptionTable {
            rows: vec![(Corruption::GaussianNoise, vec![0.0, 0.0, 0.0, 0.0])],
        };
        assert!(matches!(relative_mce(&zero, &zero), Err(Error::Numeric(_))));
        assert!(relative_mce(&table(1.0), &zero).is_err());
    }

    #[test]
    fn corruptions_at_level_zero_are_identity() {
        let x = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in Corruption::ALL {
            assert_eq!(c.apply(&x, 0.0, 1.0, &mut rng).unwrap(), x);
        }
        assert!(Corruption::FeatureDropout
            .apply(&x, 1.0, 1.0, &mut rng)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_noise_has_matched_std() {
        let x = Tensor::zeros(&[200, 50]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = Corruption::UniformNoise.apply(&x, 0.4, 2.0, &mut rng).unwrap();
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((var.sqrt() - 0.8).abs() < 0.02, "{}", var.sqrt());
    }

    #[test]
    fn clean_column_and_shape() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let data = SplitView {
            features: Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]).unwrap(),
            labels: vec![0, 1, 0],
        };
        let clf = Classifier::logits(net);
        let t = corruption_eval(&clf, &data, &CorruptionSuite::default(), 1.0, 3).unwrap();
        assert_eq!(t.rows.len(), 3);
        for (_, e) in &t.rows {
            assert_eq!(e.len(), 4);
            assert!((e[0] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(t.to_csv().starts_with("corruption,severity_0,severity_1,severity_2,severity_3\n"));
    }
}
