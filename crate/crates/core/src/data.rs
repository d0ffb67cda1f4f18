//! Grouped datasets, the synthetic imbalanced generator and group-aware
//! k-fold splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::DenseMatrix;

/// Feature rows with class labels and a group id per row.
///
/// Rows sharing a group id come from the same sequence and must never be
/// split across a train/validation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    groups: Vec<u64>,
    classes: usize,
}

impl GroupedDataset {
    pub fn new(
        features: DenseMatrix,
        labels: Vec<usize>,
        groups: Vec<u64>,
        classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || groups.len() != n {
            return Err(Error::Data(format!(
                "row counts differ: {n} feature rows, {} labels, {} groups",
                labels.len(),
                groups.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Data(format!(
                "label {l} at row {i} is not below class count {classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            groups,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[u64] {
        &self.groups
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Distinct group ids in ascending order.
    pub fn distinct_groups(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = self.groups.iter().copied().collect();
        set.into_iter().collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the listed rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            classes: self.classes,
        }
    }
}

/// Parameters of the two-class synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_total: usize,
    pub positive_rate: f64,
    pub n_groups: usize,
    pub d_in: usize,
    /// Distance between the two class means.
    pub class_separation: f64,
    /// Standard deviation of the isotropic per-row noise.
    pub overlap_noise: f64,
    /// Standard deviation of the per-group offset shared by a group's rows.
    pub group_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 13,568 rows with 271 positives spread over 90 sequences.
    fn default() -> Self {
        Self {
            n_total: 13_568,
            positive_rate: 271.0 / 13_568.0,
            n_groups: 90,
            d_in: 16,
            class_separation: 4.0,
            overlap_noise: 1.0,
            group_spread: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn positive_count(&self) -> usize {
        libm::round(self.n_total as f64 * self.positive_rate) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::Config(format!(
                "positive_rate must lie in (0, 1), got {}",
                self.positive_rate
            )));
        }
        if self.n_groups == 0 || self.n_groups > self.n_total {
            return Err(Error::Config(format!(
                "n_groups must be in 1..={}, got {}",
                self.n_total, self.n_groups
            )));
        }
        if self.d_in == 0 {
            return Err(Error::Config("d_in must be at least 1".into()));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("overlap_noise", self.overlap_noise),
            ("group_spread", self.group_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let pos = self.positive_count();
        if pos == 0 || pos == self.n_total {
            return Err(Error::Config(format!(
                "positive count {pos} of {} leaves a class empty",
                self.n_total
            )));
        }
        Ok(())
    }
}

/// Two isotropic Gaussian clusters along feature 0, one offset per group.
///
/// Class means sit at `±class_separation / 2` on feature 0. Rows are dealt
/// round-robin to groups after a seeded shuffle, so every group is a mix
/// dominated by the majority class. Each group draws one offset vector
/// (scaled by `group_spread`) shared by all of its rows, which correlates
/// rows within a group the way frames of one sequence are correlated.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<GroupedDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_total;
    let d = cfg.d_in;
    let n_pos = cfg.positive_count();

    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    let groups: Vec<u64> = (0..n).map(|i| (i % cfg.n_groups) as u64).collect();

    let offsets: Vec<f64> = (0..cfg.n_groups * d)
        .map(|_| cfg.group_spread * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let half = 0.5 * cfg.class_separation;
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let g = groups[i] as usize;
        let center = if labels[i] == 1 { half } else { -half };
        for j in 0..d {
            let mean = if j == 0 { center } else { 0.0 };
            let noise: f64 = rng.sample(StandardNormal);
            data.push(mean + offsets[g * d + j] + cfg.overlap_noise * noise);
        }
    }
    GroupedDataset::new(DenseMatrix::new(n, d, data)?, labels, groups, 2)
}

/// One cross-validation fold: ascending row indices of each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Splits groups into `k` folds of near-equal group count.
///
/// Distinct group ids are shuffled with `seed`, then dealt into contiguous
/// folds whose sizes differ by at most one. Every row of a group lands on
/// the same side of every fold.
pub fn group_kfold(data: &GroupedDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut ids = data.distinct_groups();
    if ids.len() < k {
        return Err(Error::Data(format!(
            "{} distinct groups cannot fill {k} folds",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut fold_of = alloc::collections::BTreeMap::new();
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &g in &ids[start..start + size] {
            fold_of.insert(g, f);
        }
        start += size;
    }

    let mut folds: Vec<Fold> = (0..k)
        .map(|_| Fold {
            train: Vec::new(),
            val: Vec::new(),
        })
        .collect();
    for (row, g) in data.groups().iter().enumerate() {
        let vf = fold_of[g];
        for (f, fold) in folds.iter_mut().enumerate() {
            if f == vf {
                fold.val.push(row);
            } else {
                fold.train.push(row);
            }
        }
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(groups: Vec<u64>) -> GroupedDataset {
        let n = groups.len();
        GroupedDataset::new(DenseMatrix::zeros(n, 1), vec![0; n], groups, 1).unwrap()
    }

    #[test]
    fn full_scale_positive_count() {
        let cfg = SynthConfig::default();
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.len(), 13_568);
        assert_eq!(ds.class_counts()[1], 271);
        assert_eq!(ds.distinct_groups().len(), 90);
    }

    #[test]
    fn generator_is_seeded() {
        let cfg = SynthConfig {
            n_total: 500,
            positive_rate: 0.1,
            n_groups: 10,
            ..SynthConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let other = SynthConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn zero_positives_is_config_error() {
        let cfg = SynthConfig {
            n_total: 10,
            positive_rate: 0.01,
            n_groups: 2,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn ninety_groups_five_folds() {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        let folds = group_kfold(&ds, 5, 7).unwrap();
        for fold in &folds {
            let val_groups: BTreeSet<u64> = fold.val.iter().map(|&i| ds.groups()[i]).collect();
            assert_eq!(val_groups.len(), 18);
        }
    }

    #[test]
    fn leave_one_group_out() {
        let ds = toy(vec![3, 3, 1, 2, 2, 2, 9]);
        let folds = group_kfold(&ds, 4, 0).unwrap();
        let mut seen: Vec<u64> = folds
            .iter()
            .map(|f| {
                let gs: BTreeSet<u64> = f.val.iter().map(|&i| ds.groups()[i]).collect();
                assert_eq!(gs.len(), 1);
                *gs.iter().next().unwrap()
            })
            .collect();
        seen.sort();
        assert_eq!(seen, vec![1, 2, 3, 9]);
    }

    #[test]
    fn too_few_groups() {
        let ds = toy(vec![1, 1, 2]);
        assert!(matches!(group_kfold(&ds, 3, 0), Err(Error::Data(_))));
        assert!(matches!(group_kfold(&ds, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_validates_lengths_and_labels() {
        assert!(GroupedDataset::new(DenseMatrix::zeros(2, 1), vec![0], vec![0, 0], 2).is_err());
        assert!(GroupedDataset::new(DenseMatrix::zeros(1, 1), vec![2], vec![0], 2).is_err());
    }
}
