use crate::error::{check_dim, Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 4.0;

/// Diagonal Gaussian produced by a probabilistic network head.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    /// Always within `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    pub log_variance: Vec<f64>,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        check_dim("GaussianHead::new", mean.len(), log_variance.len())?;
        let log_variance = log_variance
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        Ok(Self {
            mean,
            log_variance,
        })
    }

    /// Splits a raw `2d` network output into mean (first half) and log-variance.
    pub fn from_output(raw: &[f64]) -> Result<Self> {
        if !raw.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "Gaussian head needs an even-length output, got {}",
                raw.len()
            )));
        }
        let d = raw.len() / 2;
        Self::new(raw[..d].to_vec(), raw[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|v| v.exp()).collect()
    }
}

/// Squared Euclidean distance between a predicted and an observed next state.
pub fn l2_next_state_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_dim("l2_next_state_loss", target.len(), pred.len())?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) * (t - p))
        .sum())
}

/// Gradient of [`l2_next_state_loss`] with respect to `pred`.
pub fn l2_next_state_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_dim("l2_next_state_grad", target.len(), pred.len())?;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect())
}

/// Gaussian negative log-likelihood without the constant term:
/// `(mu - s')^T Sigma^-1 (mu - s') + log det Sigma` for diagonal `Sigma`.
pub fn pnn_nll_loss(head: &GaussianHead, target: &[f64]) -> Result<f64> {
    check_dim("pnn_nll_loss", head.dim(), target.len())?;
    let loss: f64 = head
        .mean
        .iter()
        .zip(&head.log_variance)
        .zip(target)
        .map(|((m, lv), t)| (m - t) * (m - t) * (-lv).exp() + lv)
        .sum();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite NLL {loss}")));
    }
    Ok(loss)
}

/// Loss and gradient of [`pnn_nll_loss`] with respect to the raw `2d` network
/// output (mean half, unclamped log-variance half). The clamp has zero
/// gradient outside its range.
pub fn pnn_nll_grad(raw: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let head = GaussianHead::from_output(raw)?;
    let loss = pnn_nll_loss(&head, target)?;
    let d = head.dim();
    let mut grad = vec![0.0; 2 * d];
    for i in 0..d {
        let inv_var = (-head.log_variance[i]).exp();
        let diff = head.mean[i] - target[i];
        grad[i] = 2.0 * diff * inv_var;
        let raw_lv = raw[d + i];
        grad[d + i] = if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw_lv) {
            1.0 - diff * diff * inv_var
        } else {
            0.0
        };
    }
    Ok((loss, grad))
}
