//! The fairness-regularized training loss.
//!
//! combined = (1 - lambda) * L_primary + lambda * |Corr(p, z | y = q)|
//!
//! The penalty is a Pearson-style correlation between predicted
//! probabilities and group membership, restricted to the rows whose true
//! label equals the conditioning class q (q = 1 targets FNR disparity,
//! q = 0 targets FPR disparity). Each square-root factor in the
//! denominator is augmented by epsilon before multiplying, so the ratio
//! stays finite for degenerate inputs. The weighted form replaces means
//! and sums by their sample-weighted counterparts and normalizes the
//! cross-entropy by total weight.
//!
//! During mini-batch SGD the penalty is evaluated per batch (the only
//! form compatible with stochastic gradients); batches containing no
//! target-class row contribute a zero penalty.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 2.061153622438558e-9; // e^{-20}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationConfig {
    /// Regularization weight in [0, 1].
    pub lambda: f64,
    /// Conditioning class q.
    pub target_class: u8,
    pub epsilon: f64,
    /// Use the sample-weighted loss and penalty forms.
    pub weighted: bool,
}

impl MitigationConfig {
    pub fn new(lambda: f64, target_class: u8, weighted: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} must be in [0, 1]")));
        }
        if target_class > 1 {
            return Err(Error::Config("target class must be 0 or 1".into()));
        }
        Ok(Self {
            lambda,
            target_class,
            epsilon: DEFAULT_EPSILON,
            weighted,
        })
    }

    /// lambda = 0: no mitigation.
    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            target_class: 1,
            epsilon: DEFAULT_EPSILON,
            weighted: false,
        }
    }
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self::none()
    }
}

const P_FLOOR: f64 = 1e-15;

fn xent(p: f64, y: u8) -> f64 {
    let p = p.clamp(P_FLOOR, 1.0 - P_FLOOR);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Cross-entropy primary loss: plain sum when `w` is `None`, weighted
/// mean (sum of w_i L_i over total weight) otherwise.
pub fn primary_loss(p: &[f64], y: &[u8], w: Option<&[f64]>) -> f64 {
    match w {
        None => p.iter().zip(y).map(|(&p, &y)| xent(p, y)).sum(),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let s: f64 = p
                .iter()
                .zip(y)
                .zip(w)
                .map(|((&p, &y), &w)| w * xent(p, y))
                .sum();
            s / total
        }
    }
}

/// Intermediate sums of the conditional correlation over S_q.
struct PenaltyParts {
    /// Indices into the full vectors.
    idx: Vec<usize>,
    /// Centered p and z on S_q (weighted centering when applicable).
    u: Vec<f64>,
    c: Vec<f64>,
    sum_wu2: f64,
    denom_p: f64,
    denom_z: f64,
    corr: f64,
}

fn penalty_parts(
    p: &[f64],
    z: &[u8],
    y: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<PenaltyParts> {
    let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == cfg.target_class).collect();
    if idx.is_empty() {
        return Err(Error::UndefinedPenalty { q: cfg.target_class });
    }
    let wt = |i: usize| if cfg.weighted { w[i] } else { 1.0 };
    let total: f64 = idx.iter().map(|&i| wt(i)).sum();
    let mean_p: f64 = idx.iter().map(|&i| wt(i) * p[i]).sum::<f64>() / total;
    let mean_z: f64 = idx.iter().map(|&i| wt(i) * z[i] as f64).sum::<f64>() / total;
    let u: Vec<f64> = idx.iter().map(|&i| p[i] - mean_p).collect();
    let c: Vec<f64> = idx.iter().map(|&i| z[i] as f64 - mean_z).collect();
    let mut num = 0.0;
    let mut sum_wu2 = 0.0;
    let mut sum_wc2 = 0.0;
    for (j, &i) in idx.iter().enumerate() {
        let wi = wt(i);
        num += wi * u[j] * c[j];
        sum_wu2 += wi * u[j] * u[j];
        sum_wc2 += wi * c[j] * c[j];
    }
    let denom_p = sum_wu2.sqrt() + cfg.epsilon;
    let denom_z = sum_wc2.sqrt() + cfg.epsilon;
    Ok(PenaltyParts {
        idx,
        u,
        c,
        sum_wu2,
        denom_p,
        denom_z,
        corr: num / (denom_p * denom_z),
    })
}

/// Conditional correlation penalty, sign preserved. The combined loss
/// takes its absolute value.
pub fn correlation_penalty(
    p: &[f64],
    z: &[u8],
    y: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<f64> {
    Ok(penalty_parts(p, z, y, w, cfg)?.corr)
}

/// (1 - lambda) * primary + lambda * |penalty|.
pub fn combined_loss(
    p: &[f64],
    y: &[u8],
    z: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<f64> {
    let (primary_term, fairness_term) = loss_terms(p, y, z, w, cfg)?;
    Ok(primary_term + fairness_term)
}

/// The two components of the combined loss: (1-lambda)*primary and
/// lambda*|corr|. With lambda > 0 and an empty conditioning set the
/// penalty is undefined; with lambda = 0 it is skipped entirely.
pub fn loss_terms(
    p: &[f64],
    y: &[u8],
    z: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<(f64, f64)> {
    let weights = cfg.weighted.then_some(w);
    let primary = primary_loss(p, y, weights);
    if cfg.lambda == 0.0 {
        return Ok((primary, 0.0));
    }
    let corr = correlation_penalty(p, z, y, w, cfg)?;
    Ok(((1.0 - cfg.lambda) * primary, cfg.lambda * corr.abs()))
}

fn primary_grad_into(p: &[f64], y: &[u8], w: Option<&[f64]>, scale: f64, out: &mut [f64]) {
    let norm = match w {
        None => 1.0,
        Some(w) => w.iter().sum::<f64>(),
    };
    for i in 0..p.len() {
        let pi = p[i].clamp(P_FLOOR, 1.0 - P_FLOOR);
        let dl = if y[i] == 1 { -1.0 / pi } else { 1.0 / (1.0 - pi) };
        let wi = w.map_or(1.0, |w| w[i]);
        out[i] += scale * wi * dl / norm;
    }
}

/// d(combined loss)/dp, the closed-form gradient fed to backprop.
///
/// Rows outside S_q receive only the primary term; sign(0) is taken as
/// 0 so the |.| term contributes nothing when the correlation is
/// exactly zero.
pub fn combined_loss_grad_p(
    p: &[f64],
    y: &[u8],
    z: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; p.len()];
    let weights = cfg.weighted.then_some(w);
    primary_grad_into(p, y, weights, 1.0 - cfg.lambda.min(1.0), &mut grad);
    if cfg.lambda == 0.0 {
        return Ok(grad);
    }
    let parts = penalty_parts(p, z, y, w, cfg)?;
    let sign = if parts.corr > 0.0 {
        1.0
    } else if parts.corr < 0.0 {
        -1.0
    } else {
        0.0
    };
    if sign != 0.0 {
        // d corr/dp_j = w_j c_j / (Dp Dz) - corr * w_j u_j / (sqrt(sum w u^2) * Dp),
        // with the second term dropped at zero variance (subgradient 0 of the sqrt).
        let root = parts.sum_wu2.sqrt();
        for (j, &i) in parts.idx.iter().enumerate() {
            let wj = if cfg.weighted { w[i] } else { 1.0 };
            let mut d = wj * parts.c[j] / (parts.denom_p * parts.denom_z);
            if root > 0.0 {
                d -= parts.corr * wj * parts.u[j] / (root * parts.denom_p);
            }
            grad[i] += cfg.lambda * sign * d;
        }
    }
    Ok(grad)
}

/// Per-batch training objective: like `combined_loss` /
/// `combined_loss_grad_p`, but a batch whose conditioning set is empty
/// contributes no penalty instead of erroring (small final partial
/// batches can miss class q entirely).
pub fn batch_objective(
    p: &[f64],
    y: &[u8],
    z: &[u8],
    w: &[f64],
    cfg: &MitigationConfig,
) -> Result<(f64, Vec<f64>)> {
    if cfg.lambda > 0.0 && !y.iter().any(|&yi| yi == cfg.target_class) {
        let weights = cfg.weighted.then_some(w);
        let mut grad = vec![0.0; p.len()];
        primary_grad_into(p, y, weights, 1.0 - cfg.lambda, &mut grad);
        return Ok(((1.0 - cfg.lambda) * primary_loss(p, y, weights), grad));
    }
    let loss = combined_loss(p, y, z, w, cfg)?;
    let grad = combined_loss_grad_p(p, y, z, w, cfg)?;
    Ok((loss, grad))
}
