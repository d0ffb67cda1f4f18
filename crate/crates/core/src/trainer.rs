//! Desk-scale classifier: an optional tanh feature layer followed by a
//! bias-free linear head, trained with minibatch Adam, an epoch-level cosine
//! schedule and early stopping on validation macro-F1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::losses::{self, AnchorSet, LossConfig};
use crate::math::{self, DenseMatrix};
use crate::metrics::{self, MetricBundle};

/// Std-dev of the fallback anchor initialization for classes missing from
/// the first batch.
pub const ANCHOR_FALLBACK_STD: f64 = 0.01;

/// `tanh(X · weights + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    /// d_in × d
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: Option<Extractor>,
    /// K × d
    pub head_w: DenseMatrix,
    pub anchors: AnchorSet,
}

impl ModelParams {
    pub fn new(
        extractor: Option<Extractor>,
        head_w: DenseMatrix,
        anchors: AnchorSet,
    ) -> Result<Self> {
        let d = head_w.cols();
        if let Some(e) = &extractor {
            if e.weights.cols() != d || e.bias.len() != d {
                return Err(Error::Shape {
                    op: "ModelParams: extractor",
                    expected: (e.weights.rows(), d),
                    found: (e.weights.cols(), e.bias.len()),
                });
            }
        }
        if anchors.matrix().shape() != head_w.shape() {
            return Err(Error::Shape {
                op: "ModelParams: anchors",
                expected: head_w.shape(),
                found: anchors.matrix().shape(),
            });
        }
        Ok(Self {
            extractor,
            head_w,
            anchors,
        })
    }

    /// Input width expected by [`forward`]; `None` means "same as embedding".
    pub fn input_dim(&self) -> usize {
        match &self.extractor {
            Some(e) => e.weights.rows(),
            None => self.head_w.cols(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.head_w.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.head_w.rows()
    }

    /// Seeded initialization: extractor weights `N(0, 1/d_in)`, zero bias,
    /// head `N(0, 1/d)`, anchors zero.
    pub fn init(d_in: usize, hidden: Option<usize>, classes: usize, rng: &mut impl Rng) -> Self {
        let mut normal = |r: usize, c: usize, std: f64| {
            let data = (0..r * c)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            DenseMatrix::from_raw(r, c, data)
        };
        let (extractor, d) = match hidden {
            Some(d) => (
                Some(Extractor {
                    weights: normal(d_in, d, 1.0 / libm::sqrt(d_in as f64)),
                    bias: vec![0.0; d],
                }),
                d,
            ),
            None => (None, d_in),
        };
        let head_w = normal(classes, d, 1.0 / libm::sqrt(d as f64));
        Self {
            extractor,
            head_w,
            anchors: AnchorSet::zeros(classes, d),
        }
    }
}

/// Embeddings `H` and class probabilities `P = softmax(H Wᵀ)`.
pub fn forward(params: &ModelParams, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.cols() != params.input_dim() {
        return Err(Error::Shape {
            op: "forward",
            expected: (x.rows(), params.input_dim()),
            found: x.shape(),
        });
    }
    let h = match &params.extractor {
        Some(e) => {
            let mut z = math::matmul(x, &e.weights)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&e.bias) {
                    *v = libm::tanh(*v + b);
                }
            }
            z
        }
        None => x.clone(),
    };
    let p = math::softmax_rows(&h.matmul_transposed(&params.head_w)?);
    Ok((h, p))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(state.m.len(), grads.len());
    state.t += 1;
    let bc1 = 1.0 - libm::pow(ADAM_BETA1, state.t as f64);
    let bc2 = 1.0 - libm::pow(ADAM_BETA2, state.t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
    }
}

/// `base_lr · ½(1 + cos(π · epoch / total))`.
pub fn cosine_lr(epoch: usize, total: usize, base_lr: f64) -> Result<f64> {
    if epoch >= total {
        return Err(Error::Config(format!(
            "epoch {epoch} outside schedule of {total}"
        )));
    }
    let frac = epoch as f64 / total as f64;
    Ok(base_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Width of the tanh feature layer; `None` feeds inputs straight to the head.
    pub hidden_dim: Option<usize>,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            schedule: Schedule::Cosine,
            early_stop_patience: 3,
            seed: 0,
            hidden_dim: Some(16),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        self.loss.validate()
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => cosine_lr(epoch, self.epochs, self.learning_rate)
                .expect("epoch < epochs inside the training loop"),
        }
    }
}

/// Per-epoch record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val: MetricBundle,
    /// Mean `||h_i - a_{y_i}||` over the training rows after the epoch.
    pub mean_anchor_dist: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters are returned.
    pub best_epoch: usize,
    /// 1-based last epoch that ran.
    pub stopped_epoch: usize,
    pub best_val: MetricBundle,
    pub params: ModelParams,
}

/// Argmax class per row.
pub fn predict(params: &ModelParams, x: &DenseMatrix) -> Result<Vec<usize>> {
    let (_, p) = forward(params, x)?;
    (0..p.rows()).map(|r| math::argmax_row(p.row(r))).collect()
}

pub fn evaluate(params: &ModelParams, data: &GroupedDataset) -> Result<MetricBundle> {
    let pred = predict(params, data.features())?;
    metrics::evaluate(data.labels(), &pred, data.num_classes())
}

fn mean_anchor_distance(params: &ModelParams, data: &GroupedDataset) -> Result<f64> {
    let (h, _) = forward(params, data.features())?;
    let mut sum = 0.0;
    for (i, &l) in data.labels().iter().enumerate() {
        sum += libm::sqrt(math::sq_dist(h.row(i), params.anchors.anchor(l)));
    }
    Ok(sum / data.len() as f64)
}

/// Sets each anchor to the mean embedding of its class in `h`, falling back
/// to a small Gaussian for classes absent from `labels`.
fn init_anchors(anchors: &mut AnchorSet, h: &DenseMatrix, labels: &[usize], rng: &mut impl Rng) {
    let k = anchors.num_classes();
    let d = anchors.dim();
    let mut sums = DenseMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        for (s, v) in sums.row_mut(l).iter_mut().zip(h.row(i)) {
            *s += v;
        }
        counts[l] += 1;
    }
    let m = anchors.matrix_mut();
    for c in 0..k {
        let row = m.row_mut(c);
        if counts[c] > 0 {
            for (a, s) in row.iter_mut().zip(sums.row(c)) {
                *a = s / counts[c] as f64;
            }
        } else {
            for a in row.iter_mut() {
                *a = ANCHOR_FALLBACK_STD * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

struct Optimizers {
    ext_w: AdamState,
    ext_b: AdamState,
    head: AdamState,
    anchors: AdamState,
}

/// Gradients of one minibatch, and its loss value.
fn batch_gradients(
    params: &ModelParams,
    x: &DenseMatrix,
    y: &DenseMatrix,
    loss: &LossConfig,
) -> Result<(
    f64,
    Option<(DenseMatrix, Vec<f64>)>,
    DenseMatrix,
    DenseMatrix,
)> {
    let (h, _) = forward(params, x)?;
    let out = losses::compute_loss(&h, &params.head_w, y, &params.anchors, loss)?;
    let ext_grads = match &params.extractor {
        Some(_) => {
            // through tanh: dZ = dH ⊙ (1 - H²)
            let mut dz = out.grad_h.clone();
            for (g, hv) in dz.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *g *= 1.0 - hv * hv;
            }
            let gw = x.transposed_matmul(&dz)?;
            let mut gb = vec![0.0; dz.cols()];
            for r in 0..dz.rows() {
                for (b, v) in gb.iter_mut().zip(dz.row(r)) {
                    *b += v;
                }
            }
            Some((gw, gb))
        }
        None => None,
    };
    Ok((out.total, ext_grads, out.grad_w, out.grad_a))
}

/// Trains on `train`, selecting the epoch with the best macro-F1 on `val`.
///
/// Stops once `early_stop_patience` consecutive epochs fail to improve the
/// best validation macro-F1 (strict improvement).
pub fn train(
    train: &GroupedDataset,
    val: &GroupedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(
            "training and validation splits must be nonempty".into(),
        ));
    }
    if val.dim() != train.dim() || val.num_classes() != train.num_classes() {
        return Err(Error::Data(
            "training and validation splits disagree on shape".into(),
        ));
    }
    let counts = train.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "class {k} has no rows in the training split"
        )));
    }

    let classes = train.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(train.dim(), cfg.hidden_dim, classes, &mut rng);
    let mut opt = Optimizers {
        ext_w: AdamState::new(
            params
                .extractor
                .as_ref()
                .map_or(0, |e| e.weights.as_slice().len()),
        ),
        ext_b: AdamState::new(params.extractor.as_ref().map_or(0, |e| e.bias.len())),
        head: AdamState::new(params.head_w.as_slice().len()),
        anchors: AdamState::new(params.anchors.matrix().as_slice().len()),
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, MetricBundle, ModelParams)> = None;
    let mut since_best = 0;
    let mut anchors_ready = false;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let y = losses::one_hot(&labels, classes)?;
            if !anchors_ready {
                let (h, _) = forward(&params, &x)?;
                init_anchors(&mut params.anchors, &h, &labels, &mut rng);
                anchors_ready = true;
            }
            let (loss, ext_grads, grad_w, grad_a) = batch_gradients(&params, &x, &y, &cfg.loss)?;
            if let (Some(e), Some((gw, gb))) = (params.extractor.as_mut(), ext_grads) {
                adam_step(&mut opt.ext_w, e.weights.as_mut_slice(), gw.as_slice(), lr);
                adam_step(&mut opt.ext_b, &mut e.bias, &gb, lr);
            }
            adam_step(
                &mut opt.head,
                params.head_w.as_mut_slice(),
                grad_w.as_slice(),
                lr,
            );
            adam_step(
                &mut opt.anchors,
                params.anchors.matrix_mut().as_mut_slice(),
                grad_a.as_slice(),
                lr,
            );
            loss_sum += loss;
            batches += 1;
        }
        if !params.head_w.is_finite() {
            return Err(Error::Data(format!(
                "parameters diverged in epoch {}",
                epoch + 1
            )));
        }

        let val_metrics = evaluate(&params, val)?;
        records.push(EpochRecord {
            train_loss: loss_sum / batches as f64,
            val: val_metrics,
            mean_anchor_dist: mean_anchor_distance(&params, train)?,
            learning_rate: lr,
        });

        let improved = best
            .as_ref()
            .is_none_or(|(_, b, _)| val_metrics.macro_avg.f1 > b.macro_avg.f1);
        if improved {
            best = Some((epoch + 1, val_metrics, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let (best_epoch, best_val, best_params) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        stopped_epoch: records.len(),
        epochs: records,
        best_epoch,
        best_val,
        params: best_params,
    })
}
