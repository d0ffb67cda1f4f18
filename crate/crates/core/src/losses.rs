//! Uncertainty-weighted contractive embedding loss and baseline losses.
//!
//! Every loss takes a feature batch `H` (B×d), a linear head `W` (K×d) and
//! one-hot targets `Y` (B×K) and returns its value together with analytic
//! gradients. The contractive loss additionally takes class anchors `A`
//! (K×d), which double as centers for the center-loss baseline.
//!
//! The uncertainty weights `ω_i = (1 - max_k p_ik)^γ` are treated as
//! constants during backpropagation. Focal loss, by contrast, differentiates
//! through its modulating factor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, DenseMatrix, DenseVector};

/// Lower clamp applied to probabilities before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Nuce,
    CrossEntropy,
    Focal,
    Center,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Nuce => "nuce",
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Focal => "focal",
            LossKind::Center => "center",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nuce" => Some(LossKind::Nuce),
            "cross_entropy" | "ce" => Some(LossKind::CrossEntropy),
            "focal" => Some(LossKind::Focal),
            "center" => Some(LossKind::Center),
            _ => None,
        }
    }

    /// Whether the loss reads the anchor matrix.
    pub fn uses_anchors(self) -> bool {
        matches!(self, LossKind::Nuce | LossKind::Center)
    }
}

/// Loss hyperparameters.
///
/// `lambda_r` and `lambda_c` weight the risk and contraction terms of the
/// contractive loss; for [`LossKind::Center`] `lambda_c` is the center
/// weight, and for [`LossKind::Focal`] `gamma` is the focusing exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub gamma: f64,
    pub kind: LossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_c: 0.5,
            gamma: 2.0,
            kind: LossKind::Nuce,
        }
    }
}

impl LossConfig {
    pub fn nuce(lambda_r: f64, lambda_c: f64, gamma: f64) -> Result<Self> {
        let cfg = Self {
            lambda_r,
            lambda_c,
            gamma,
            kind: LossKind::Nuce,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cross_entropy() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_c: 0.0,
            gamma: 0.0,
            kind: LossKind::CrossEntropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_r", self.lambda_r),
            ("lambda_c", self.lambda_c),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Learnable per-class anchors, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: DenseMatrix,
}

impl AnchorSet {
    pub fn new(anchors: DenseMatrix) -> Result<Self> {
        if !anchors.is_finite() {
            return Err(Error::NonFinite {
                what: "anchors",
                index: anchors
                    .as_slice()
                    .iter()
                    .position(|v| !v.is_finite())
                    .unwrap_or(0),
            });
        }
        Ok(Self { anchors })
    }

    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            anchors: DenseMatrix::zeros(classes, dim),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.anchors.rows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.anchors
    }

    pub fn matrix_mut(&mut self) -> &mut DenseMatrix {
        &mut self.anchors
    }

    pub fn anchor(&self, k: usize) -> &[f64] {
        self.anchors.row(k)
    }
}

/// Loss value, its two components and gradients.
///
/// `grad_a` is 0×0 for losses that do not use anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub total: f64,
    pub risk_term: f64,
    pub contract_term: f64,
    pub grad_h: DenseMatrix,
    pub grad_w: DenseMatrix,
    pub grad_a: DenseMatrix,
}

/// Per-row class indices recovered from one-hot targets.
pub fn one_hot_labels(y: &DenseMatrix) -> Result<Vec<usize>> {
    let mut labels = Vec::with_capacity(y.rows());
    for i in 0..y.rows() {
        let row = y.row(i);
        let mut hot = None;
        for (k, &v) in row.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(k);
            } else if v != 0.0 {
                return Err(Error::Data(format!("target row {i} is not one-hot")));
            }
        }
        labels.push(hot.ok_or_else(|| Error::Data(format!("target row {i} is not one-hot")))?);
    }
    Ok(labels)
}

/// One-hot encodes class indices into a `labels.len() × classes` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<DenseMatrix> {
    let mut y = DenseMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!(
                "label {l} at row {i} >= class count {classes}"
            )));
        }
        y.set(i, l, 1.0);
    }
    Ok(y)
}

/// `ω_i = (1 - max_k p_ik)^γ`, with `0^0 = 1`.
pub fn uncertainty_weights(p: &DenseMatrix, gamma: f64) -> Result<DenseVector> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Config(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let w = (0..p.rows())
        .map(|i| {
            let pmax = p.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            uncertainty_weight(pmax, gamma)
        })
        .collect();
    Ok(DenseVector::from_raw(w))
}

#[inline]
fn uncertainty_weight(pmax: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        libm::pow((1.0 - pmax).max(0.0), gamma)
    }
}

struct Dims {
    batch: usize,
    dim: usize,
    classes: usize,
}

fn check_shapes(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    a: Option<&AnchorSet>,
) -> Result<Dims> {
    let (batch, dim) = h.shape();
    if batch == 0 {
        return Err(Error::Empty("feature batch"));
    }
    let classes = w.rows();
    if w.cols() != dim {
        return Err(Error::Shape {
            op: "loss: head W",
            expected: (classes, dim),
            found: w.shape(),
        });
    }
    if y.shape() != (batch, classes) {
        return Err(Error::Shape {
            op: "loss: targets Y",
            expected: (batch, classes),
            found: y.shape(),
        });
    }
    if let Some(a) = a {
        if a.matrix().shape() != (classes, dim) {
            return Err(Error::Shape {
                op: "loss: anchors A",
                expected: (classes, dim),
                found: a.matrix().shape(),
            });
        }
    }
    Ok(Dims {
        batch,
        dim,
        classes,
    })
}

/// Weighted softmax risk plus anchor contraction, evaluated sample by sample.
///
/// `weights` are the per-sample risk weights, held constant for the
/// gradient. Shared by the contractive loss, cross-entropy and center loss
/// so that their reduction identities hold bit-for-bit.
fn weighted_risk_contract(
    h: &DenseMatrix,
    w: &DenseMatrix,
    labels: &[usize],
    anchors: Option<&AnchorSet>,
    lambda_r: f64,
    lambda_c: f64,
    weights: &[f64],
    dims: &Dims,
) -> LossOutput {
    let Dims {
        batch,
        dim,
        classes,
    } = *dims;
    let inv_b = 1.0 / batch as f64;
    let mut grad_h = DenseMatrix::zeros(batch, dim);
    let mut grad_w = DenseMatrix::zeros(classes, dim);
    let mut grad_a = match anchors {
        Some(_) => DenseMatrix::zeros(classes, dim),
        None => DenseMatrix::zeros(0, 0),
    };
    let mut risk_sum = 0.0;
    let mut contract_sum = 0.0;
    let mut p = vec![0.0; classes];
    let mut du = vec![0.0; classes];

    for (i, &yi) in labels.iter().enumerate() {
        let hi = h.row(i);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = math::dot(w.row(k), hi);
        }
        math::softmax_in_place(&mut p);
        let wi = weights[i];
        risk_sum += wi * libm::log(p[yi].max(PROB_FLOOR));

        for k in 0..classes {
            let target = if k == yi { 1.0 } else { 0.0 };
            du[k] = lambda_r * wi * inv_b * (p[k] - target);
        }
        let gh = grad_h.row_mut(i);
        for (k, &duk) in du.iter().enumerate() {
            let wk = w.row(k);
            for j in 0..dim {
                gh[j] += duk * wk[j];
            }
        }
        for (k, &duk) in du.iter().enumerate() {
            let gw = grad_w.row_mut(k);
            for j in 0..dim {
                gw[j] += duk * hi[j];
            }
        }

        if let Some(a) = anchors {
            let ay = a.anchor(yi);
            contract_sum += math::sq_dist(hi, ay);
            let scale = lambda_c * inv_b;
            let gh = grad_h.row_mut(i);
            for j in 0..dim {
                gh[j] += scale * (hi[j] - ay[j]);
            }
            let ga = grad_a.row_mut(yi);
            for j in 0..dim {
                ga[j] -= scale * (hi[j] - ay[j]);
            }
        }
    }

    let risk_term = -risk_sum * inv_b;
    let contract_term = 0.5 * contract_sum * inv_b;
    LossOutput {
        total: lambda_r * risk_term + lambda_c * contract_term,
        risk_term,
        contract_term,
        grad_h,
        grad_w,
        grad_a,
    }
}

fn softmax_probs(h: &DenseMatrix, w: &DenseMatrix) -> DenseMatrix {
    // shapes already checked by the caller
    let u = h.matmul_transposed(w).expect("checked shapes");
    math::softmax_rows(&u)
}

/// Contractive loss computed per sample.
///
/// `total = λ_r · (-(1/B) Σ ω_i log p_{i,y_i}) + λ_c · (1/(2B)) Σ ||h_i - a_{y_i}||²`
pub fn nuce_loss(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    a: &AnchorSet,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let dims = check_shapes(h, w, y, Some(a))?;
    let labels = one_hot_labels(y)?;
    let p = softmax_probs(h, w);
    let omega = uncertainty_weights(&p, cfg.gamma)?;
    Ok(weighted_risk_contract(
        h,
        w,
        &labels,
        Some(a),
        cfg.lambda_r,
        cfg.lambda_c,
        omega.as_slice(),
        &dims,
    ))
}

/// Contractive loss with caller-supplied risk weights instead of `ω`.
///
/// This is the function whose gradient [`nuce_loss`] returns: holding the
/// weights fixed, finite differences of its value match the analytic
/// gradients.
pub fn nuce_loss_with_weights(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    a: &AnchorSet,
    cfg: &LossConfig,
    weights: &[f64],
) -> Result<LossOutput> {
    cfg.validate()?;
    let dims = check_shapes(h, w, y, Some(a))?;
    if weights.len() != dims.batch {
        return Err(Error::Shape {
            op: "loss: weights",
            expected: (dims.batch, 1),
            found: (weights.len(), 1),
        });
    }
    let labels = one_hot_labels(y)?;
    Ok(weighted_risk_contract(
        h,
        w,
        &labels,
        Some(a),
        cfg.lambda_r,
        cfg.lambda_c,
        weights,
        &dims,
    ))
}

/// Contractive loss evaluated with whole-matrix operations:
/// `-(λ_r/B) ωᵀ log diag(Y Pᵀ) + (λ_c/(2B)) ||H - Y A||_F²`.
pub fn nuce_loss_matrix_form(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    a: &AnchorSet,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let dims = check_shapes(h, w, y, Some(a))?;
    one_hot_labels(y)?;
    let inv_b = 1.0 / dims.batch as f64;

    let p = softmax_probs(h, w);
    let omega = uncertainty_weights(&p, cfg.gamma)?;
    // diag(Y Pᵀ): probability assigned to the true class of each row
    let target_prob: Vec<f64> = (0..dims.batch)
        .map(|i| math::dot(y.row(i), p.row(i)))
        .collect();
    let log_target: Vec<f64> = target_prob
        .iter()
        .map(|&v| libm::log(v.max(PROB_FLOOR)))
        .collect();
    let risk_term = -inv_b * math::dot(omega.as_slice(), &log_target);

    let residual = h.sub(&math::matmul(y, a.matrix())?)?;
    let contract_term = 0.5 * inv_b * math::frobenius_sq(&residual);

    // dL/dU = (λ_r/B) diag(ω) (P - Y)
    let mut du = p.sub(y)?;
    for (i, &wi) in omega.as_slice().iter().enumerate() {
        let s = cfg.lambda_r * wi * inv_b;
        du.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let grad_w = du.transposed_matmul(h)?;
    let grad_h = math::matmul(&du, w)?.add(&residual.scale(cfg.lambda_c * inv_b))?;
    let grad_a = y.transposed_matmul(&residual)?.scale(-cfg.lambda_c * inv_b);

    Ok(LossOutput {
        total: cfg.lambda_r * risk_term + cfg.lambda_c * contract_term,
        risk_term,
        contract_term,
        grad_h,
        grad_w,
        grad_a,
    })
}

/// Mean softmax cross-entropy.
pub fn cross_entropy_loss(h: &DenseMatrix, w: &DenseMatrix, y: &DenseMatrix) -> Result<LossOutput> {
    let dims = check_shapes(h, w, y, None)?;
    let labels = one_hot_labels(y)?;
    let ones = vec![1.0; dims.batch];
    Ok(weighted_risk_contract(
        h, w, &labels, None, 1.0, 0.0, &ones, &dims,
    ))
}

/// Focal loss `-(1/B) Σ (1 - p_t)^γ log p_t`, differentiated through the
/// modulating factor.
pub fn focal_loss(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    gamma: f64,
) -> Result<LossOutput> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Config(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let Dims {
        batch,
        dim,
        classes,
    } = check_shapes(h, w, y, None)?;
    let labels = one_hot_labels(y)?;
    let inv_b = 1.0 / batch as f64;
    let mut grad_h = DenseMatrix::zeros(batch, dim);
    let mut grad_w = DenseMatrix::zeros(classes, dim);
    let mut loss_sum = 0.0;
    let mut p = vec![0.0; classes];

    for (i, &t) in labels.iter().enumerate() {
        let hi = h.row(i);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = math::dot(w.row(k), hi);
        }
        math::softmax_in_place(&mut p);
        let pt = p[t];
        let log_pt = libm::log(pt.max(PROB_FLOOR));
        let q = 1.0 - pt;
        let modulator = uncertainty_weight(pt, gamma);
        loss_sum += modulator * log_pt;

        // dL_i/du_j = c · (δ_jt - p_j) with
        // c = γ (1-p_t)^(γ-1) p_t log p_t - (1-p_t)^γ
        let mut c = -modulator;
        if gamma != 0.0 && q > 0.0 {
            c += gamma * libm::pow(q, gamma - 1.0) * pt * log_pt;
        }
        let gh = grad_h.row_mut(i);
        for k in 0..classes {
            let delta = if k == t { 1.0 } else { 0.0 };
            let duk = c * (delta - p[k]) * inv_b;
            let wk = w.row(k);
            for j in 0..dim {
                gh[j] += duk * wk[j];
            }
        }
        for k in 0..classes {
            let delta = if k == t { 1.0 } else { 0.0 };
            let duk = c * (delta - p[k]) * inv_b;
            let gw = grad_w.row_mut(k);
            for j in 0..dim {
                gw[j] += duk * hi[j];
            }
        }
    }
    let risk_term = -loss_sum * inv_b;
    Ok(LossOutput {
        total: risk_term,
        risk_term,
        contract_term: 0.0,
        grad_h,
        grad_w,
        grad_a: DenseMatrix::zeros(0, 0),
    })
}

/// Cross-entropy plus `(λ/(2B)) Σ ||h_i - c_{y_i}||²`.
pub fn center_loss(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    centers: &AnchorSet,
    lambda_center: f64,
) -> Result<LossOutput> {
    if !(lambda_center.is_finite() && lambda_center >= 0.0) {
        return Err(Error::Config(format!(
            "center weight must be finite and >= 0, got {lambda_center}"
        )));
    }
    let dims = check_shapes(h, w, y, Some(centers))?;
    let labels = one_hot_labels(y)?;
    let ones = vec![1.0; dims.batch];
    Ok(weighted_risk_contract(
        h,
        w,
        &labels,
        Some(centers),
        1.0,
        lambda_center,
        &ones,
        &dims,
    ))
}

/// Dispatches on `cfg.kind`. Losses without anchors ignore `a` and return a
/// zero anchor gradient of the anchor shape so callers can treat every kind
/// uniformly.
pub fn compute_loss(
    h: &DenseMatrix,
    w: &DenseMatrix,
    y: &DenseMatrix,
    a: &AnchorSet,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let mut out = match cfg.kind {
        LossKind::Nuce => return nuce_loss(h, w, y, a, cfg),
        LossKind::Center => return center_loss(h, w, y, a, cfg.lambda_c),
        LossKind::CrossEntropy => cross_entropy_loss(h, w, y)?,
        LossKind::Focal => focal_loss(h, w, y, cfg.gamma)?,
    };
    out.grad_a = DenseMatrix::zeros(a.num_classes(), a.dim());
    Ok(out)
}
