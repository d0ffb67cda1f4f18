//! Embedding diagnostics: a two-component PCA by power iteration with
//! deflation, and anchor-based cluster compactness statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::AnchorSet;
use crate::math::{self, DenseMatrix};

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// Mean that was subtracted before projecting.
    pub mean: Vec<f64>,
    /// 2×d, orthonormal rows.
    pub components: DenseMatrix,
    /// N×2 scores.
    pub projected: DenseMatrix,
    /// Variance captured by each component, non-increasing.
    pub explained_variance: [f64; 2],
}

impl ProjectionResult {
    /// Maps scores back to feature space.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut out = math::matmul(&self.projected, &self.components).expect("2 = 2");
        for r in 0..out.rows() {
            for (v, m) in out.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(math::dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| math::dot(m.row(r), v)).collect()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let c = math::dot(v, u);
        for (x, y) in v.iter_mut().zip(u) {
            *x -= c * y;
        }
    }
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is
/// positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant eigenpair of the symmetric PSD matrix `c`, restricted to the
/// complement of `found`. Returns `None` when `c` vanishes on that subspace.
fn power_iteration(c: &DenseMatrix, found: &[Vec<f64>], scale: f64) -> Option<(Vec<f64>, f64)> {
    let d = c.rows();
    // start from the column with the largest norm after projection
    let mut start = None;
    let mut best = 0.0;
    for j in 0..d {
        let mut col: Vec<f64> = (0..d).map(|i| c.get(i, j)).collect();
        orthogonalize(&mut col, found);
        let n = math::dot(&col, &col);
        if n > best {
            best = n;
            start = Some(col);
        }
    }
    let mut v = start?;
    if libm::sqrt(best) <= 1e-12 * scale {
        return None;
    }
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITERS {
        let mut next = mat_vec(c, &v);
        orthogonalize(&mut next, found);
        if normalize(&mut next) <= 1e-12 * scale {
            return None;
        }
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        v = next;
        if libm::sqrt(diff) < POWER_TOLERANCE {
            break;
        }
    }
    let cv = mat_vec(c, &v);
    Some((v.clone(), math::dot(&v, &cv)))
}

/// Unit vector orthogonal to `found`, taken from the standard basis.
fn orthogonal_fill(d: usize, found: &[Vec<f64>]) -> Vec<f64> {
    let mut best = vec![0.0; d];
    let mut best_n = -1.0;
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        orthogonalize(&mut e, found);
        let n = math::dot(&e, &e);
        if n > best_n + 1e-12 {
            best_n = n;
            best = e;
        }
    }
    normalize(&mut best);
    best
}

/// Projects the rows of `h` onto their top two principal components.
pub fn pca_2d(h: &DenseMatrix) -> Result<ProjectionResult> {
    let (n, d) = h.shape();
    if n < 3 || d < 2 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 3 rows and 2 columns, got {n}x{d}"
        )));
    }
    let mean = h.column_means().into_vec();
    let mut centered = h.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let cov = centered
        .transposed_matmul(&centered)?
        .scale(1.0 / (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if trace <= 0.0 {
        return Err(Error::Degenerate("all rows are identical".into()));
    }

    let mut deflated = cov.clone();
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut variances = [0.0; 2];
    for slot in variances.iter_mut() {
        let (mut v, lambda) = match power_iteration(&deflated, &found, trace) {
            Some(pair) => pair,
            None => (orthogonal_fill(d, &found), 0.0),
        };
        fix_sign(&mut v);
        *slot = lambda.max(0.0);
        for i in 0..d {
            for j in 0..d {
                let x = deflated.get(i, j) - lambda * v[i] * v[j];
                deflated.set(i, j, x);
            }
        }
        found.push(v);
    }

    let components = DenseMatrix::from_rows(&found)?;
    let projected = centered.matmul_transposed(&components)?;
    Ok(ProjectionResult {
        mean,
        components,
        projected,
        explained_variance: variances,
    })
}

/// Ratio of anchor separation to within-class spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherRatio {
    Finite(f64),
    /// Every present class has zero spread.
    Infinite,
}

impl FisherRatio {
    /// `f64::INFINITY` for the infinite case.
    pub fn value(self) -> f64 {
        match self {
            FisherRatio::Finite(v) => v,
            FisherRatio::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    /// Mean `||h_i - a_{y_i}||` per class; `None` for classes with no rows.
    pub mean_intra_dist: Vec<Option<f64>>,
    pub min_inter_anchor_dist: f64,
    pub fisher_ratio: FisherRatio,
}

impl ClusterStats {
    pub fn empty_classes(&self) -> Vec<usize> {
        self.mean_intra_dist
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.is_none().then_some(k))
            .collect()
    }
}

/// Intra-class distance to anchors, minimum anchor separation and their
/// ratio `min_inter / max_k intra_k`.
pub fn cluster_stats(
    h: &DenseMatrix,
    labels: &[usize],
    anchors: &AnchorSet,
) -> Result<ClusterStats> {
    let k = anchors.num_classes();
    if k < 2 {
        return Err(Error::Degenerate(
            "separation is undefined for fewer than two classes".into(),
        ));
    }
    if h.cols() != anchors.dim() || h.rows() != labels.len() {
        return Err(Error::Shape {
            op: "cluster_stats",
            expected: (labels.len(), anchors.dim()),
            found: h.shape(),
        });
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::Data(format!("label {l} at row {i} >= {k} anchors")));
        }
        sums[l] += libm::sqrt(math::sq_dist(h.row(i), anchors.anchor(l)));
        counts[l] += 1;
    }
    let intra: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    if intra.iter().all(Option::is_none) {
        return Err(Error::Empty("cluster_stats rows"));
    }

    let mut min_inter = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            min_inter = min_inter.min(libm::sqrt(math::sq_dist(
                anchors.anchor(a),
                anchors.anchor(b),
            )));
        }
    }
    let max_intra = intra.iter().flatten().copied().fold(0.0, f64::max);
    let fisher_ratio = if max_intra == 0.0 {
        FisherRatio::Infinite
    } else {
        FisherRatio::Finite(min_inter / max_intra)
    };
    Ok(ClusterStats {
        mean_intra_dist: intra,
        min_inter_anchor_dist: min_inter,
        fisher_ratio,
    })
}

/// Per-class means of `h`, usable as anchors for [`cluster_stats`].
pub fn class_centroids(h: &DenseMatrix, labels: &[usize], classes: usize) -> Result<AnchorSet> {
    let mut sums = DenseMatrix::zeros(classes, h.cols());
    let mut counts = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!("label {l} at row {i} >= {classes}")));
        }
        for (s, v) in sums.row_mut(l).iter_mut().zip(h.row(i)) {
            *s += v;
        }
        counts[l] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::Data(format!("class {k} has no rows")));
        }
        sums.row_mut(k).iter_mut().for_each(|s| *s /= c as f64);
    }
    AnchorSet::new(sums)
}
