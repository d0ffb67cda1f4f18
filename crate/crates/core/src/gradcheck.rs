//! Central finite-difference verification of the analytic loss gradients.
//!
//! The suite draws random small instances, evaluates every loss and compares
//! each parameter block of the analytic gradient against
//! `(f(x + h) - f(x - h)) / 2h`. For the contractive loss the uncertainty
//! weights are frozen at the unperturbed point, matching how its gradient is
//! defined.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::losses::{self, AnchorSet, LossConfig, LossOutput};
use crate::math::{self, DenseMatrix};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so entries that are zero in
/// both routes compare as exact.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckedLoss {
    Nuce,
    NuceMatrix,
    CrossEntropy,
    Focal,
    Center,
}

impl CheckedLoss {
    pub const ALL: [CheckedLoss; 5] = [
        CheckedLoss::Nuce,
        CheckedLoss::NuceMatrix,
        CheckedLoss::CrossEntropy,
        CheckedLoss::Focal,
        CheckedLoss::Center,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedLoss::Nuce => "nuce",
            CheckedLoss::NuceMatrix => "nuce_matrix",
            CheckedLoss::CrossEntropy => "cross_entropy",
            CheckedLoss::Focal => "focal",
            CheckedLoss::Center => "center",
        }
    }

    fn blocks(self) -> &'static [Block] {
        match self {
            CheckedLoss::CrossEntropy | CheckedLoss::Focal => &[Block::H, Block::W],
            _ => &[Block::H, Block::W, Block::A],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    H,
    W,
    A,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::H => "H",
            Block::W => "W",
            Block::A => "A",
        }
    }
}

/// One random loss instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub h: DenseMatrix,
    pub w: DenseMatrix,
    pub y: DenseMatrix,
    pub a: AnchorSet,
    pub cfg: LossConfig,
}

impl Instance {
    /// Draws `B ≤ 8`, `d ≤ 6`, `K ≤ 4` with standard normal entries.
    pub fn random(rng: &mut impl Rng) -> Self {
        let batch = rng.gen_range(1..=8);
        let dim = rng.gen_range(1..=6);
        let classes = rng.gen_range(2..=4);
        let mut normal = |r: usize, c: usize| {
            let data = (0..r * c)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            DenseMatrix::from_raw(r, c, data)
        };
        let h = normal(batch, dim);
        let w = normal(classes, dim);
        let a = AnchorSet::new(normal(classes, dim)).expect("finite");
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let y = losses::one_hot(&labels, classes).expect("labels in range");
        let cfg = LossConfig::nuce(
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.0..3.0),
        )
        .expect("valid ranges");
        Self { h, w, y, a, cfg }
    }
}

/// Analytic output plus a value function over perturbed `(H, W, A)`.
fn prepare(
    loss: CheckedLoss,
    inst: &Instance,
) -> Result<(
    LossOutput,
    impl Fn(&DenseMatrix, &DenseMatrix, &AnchorSet) -> f64 + '_,
)> {
    let Instance { h, w, y, a, cfg } = inst;
    let analytic = match loss {
        CheckedLoss::Nuce => losses::nuce_loss(h, w, y, a, cfg)?,
        CheckedLoss::NuceMatrix => losses::nuce_loss_matrix_form(h, w, y, a, cfg)?,
        CheckedLoss::CrossEntropy => losses::cross_entropy_loss(h, w, y)?,
        CheckedLoss::Focal => losses::focal_loss(h, w, y, cfg.gamma)?,
        CheckedLoss::Center => losses::center_loss(h, w, y, a, cfg.lambda_c)?,
    };
    let omega = {
        let p = math::softmax_rows(&h.matmul_transposed(w)?);
        losses::uncertainty_weights(&p, cfg.gamma)?.into_vec()
    };
    let value = move |h: &DenseMatrix, w: &DenseMatrix, a: &AnchorSet| -> f64 {
        let out = match loss {
            CheckedLoss::Nuce | CheckedLoss::NuceMatrix => {
                losses::nuce_loss_with_weights(h, w, y, a, cfg, &omega)
            }
            CheckedLoss::CrossEntropy => losses::cross_entropy_loss(h, w, y),
            CheckedLoss::Focal => losses::focal_loss(h, w, y, cfg.gamma),
            CheckedLoss::Center => losses::center_loss(h, w, y, a, cfg.lambda_c),
        };
        out.expect("perturbed instance keeps its shapes").total
    };
    Ok((analytic, value))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between an analytic block and its central differences.
fn block_error(
    block: Block,
    inst: &Instance,
    analytic: &DenseMatrix,
    value: &impl Fn(&DenseMatrix, &DenseMatrix, &AnchorSet) -> f64,
) -> f64 {
    let mut h = inst.h.clone();
    let mut w = inst.w.clone();
    let mut a = inst.a.clone();
    let len = analytic.as_slice().len();
    let mut worst: f64 = 0.0;
    for idx in 0..len {
        let slot = |h: &mut DenseMatrix, w: &mut DenseMatrix, a: &mut AnchorSet, delta: f64| {
            let m = match block {
                Block::H => h,
                Block::W => w,
                Block::A => a.matrix_mut(),
            };
            m.as_mut_slice()[idx] += delta;
        };
        let orig = match block {
            Block::H => inst.h.as_slice()[idx],
            Block::W => inst.w.as_slice()[idx],
            Block::A => inst.a.matrix().as_slice()[idx],
        };
        slot(&mut h, &mut w, &mut a, FD_STEP);
        let plus = value(&h, &w, &a);
        slot(&mut h, &mut w, &mut a, -2.0 * FD_STEP);
        let minus = value(&h, &w, &a);
        // restore exactly
        match block {
            Block::H => h.as_mut_slice()[idx] = orig,
            Block::W => w.as_mut_slice()[idx] = orig,
            Block::A => a.matrix_mut().as_mut_slice()[idx] = orig,
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.as_slice()[idx], numeric));
    }
    worst
}

/// Worst relative error per `(loss, block)` over the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub loss: CheckedLoss,
    pub block: Block,
    pub max_rel_error: f64,
    pub instances: usize,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < REL_TOLERANCE
    }
}

/// Negative-control hook: corrupts one analytic gradient block before the
/// comparison.
#[derive(Debug, Clone, Copy, Default)]
pub struct Perturbation {
    pub target: Option<(CheckedLoss, Block)>,
}

/// Runs the finite-difference suite over `instances` random instances.
pub fn run_suite(seed: u64, instances: usize, perturb: Perturbation) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let insts: Vec<Instance> = (0..instances).map(|_| Instance::random(&mut rng)).collect();
    let mut rows = Vec::new();
    for loss in CheckedLoss::ALL {
        for &block in loss.blocks() {
            let mut worst: f64 = 0.0;
            for inst in &insts {
                let (analytic, value) = prepare(loss, inst)?;
                let mut grad = match block {
                    Block::H => analytic.grad_h,
                    Block::W => analytic.grad_w,
                    Block::A => analytic.grad_a,
                };
                if perturb.target == Some((loss, block)) {
                    let g = &mut grad.as_mut_slice()[0];
                    *g += 0.1 * (1.0 + g.abs());
                }
                worst = worst.max(block_error(block, inst, &grad, &value));
            }
            rows.push(CheckRow {
                loss,
                block,
                max_rel_error: worst,
                instances,
            });
        }
    }
    Ok(rows)
}
