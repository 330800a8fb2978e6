use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::environments::EnvSpec;
use crate::error::{check_dim, Error, Result};
use crate::numerics::ParamNet;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian policy `u ~ N(tanh(mu(s)), diag(exp(log_std))^2)` in unit action
/// space; environment actions are `center + half_range * u`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mean_net: ParamNet,
    log_std: Vec<f64>,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

/// One draw from the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub unit_action: Vec<f64>,
    /// Environment-scale action, before clipping.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        spec: &EnvSpec,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![spec.state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(spec.action_dim);
        let mean_net = ParamNet::new(&sizes, rng)?;
        Self::from_parts(
            mean_net,
            vec![init_log_std; spec.action_dim],
            spec.action_low.clone(),
            spec.action_high.clone(),
        )
    }

    pub fn from_parts(
        mean_net: ParamNet,
        log_std: Vec<f64>,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
    ) -> Result<Self> {
        let d = mean_net.output_dim();
        check_dim("GaussianPolicy (log_std)", d, log_std.len())?;
        check_dim("GaussianPolicy (action_low)", d, action_low.len())?;
        check_dim("GaussianPolicy (action_high)", d, action_high.len())?;
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("policy log_std must be finite".into()));
        }
        if action_low.iter().zip(&action_high).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("action bounds must satisfy low < high".into()));
        }
        Ok(Self {
            mean_net,
            log_std,
            action_low,
            action_high,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean_net(&self) -> &ParamNet {
        &self.mean_net
    }

    pub fn mean_net_mut(&mut self) -> &mut ParamNet {
        &mut self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, value: f64) {
        self.log_std.iter_mut().for_each(|v| *v = value);
    }

    pub fn action_low(&self) -> &[f64] {
        &self.action_low
    }

    pub fn action_high(&self) -> &[f64] {
        &self.action_high
    }

    /// Number of trainable parameters: mean network followed by `log_std`.
    pub fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.mean_net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("GaussianPolicy::set_flat_params", self.num_params(), params.len())?;
        let n = self.mean_net.num_params();
        self.mean_net.set_params(&params[..n])?;
        self.log_std.copy_from_slice(&params[n..]);
        Ok(())
    }

    /// `tanh(mu(s))`.
    pub fn unit_mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .mean_net
            .forward(state)?
            .into_iter()
            .map(f64::tanh)
            .collect())
    }

    /// Deterministic action used for evaluation.
    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.from_unit(&self.unit_mean(state)?))
    }

    pub fn to_unit(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| (2.0 * a - (hi + lo)) / (hi - lo))
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(u, (lo, hi))| 0.5 * (hi + lo) + 0.5 * (hi - lo) * u)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<PolicySample> {
        let mean = self.unit_mean(state)?;
        let unit_action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&mean, &self.log_std, &unit_action);
        Ok(PolicySample {
            action: self.from_unit(&unit_action),
            unit_action,
            log_prob,
        })
    }

    pub fn log_prob(&self, state: &[f64], unit_action: &[f64]) -> Result<f64> {
        check_dim("GaussianPolicy::log_prob", self.action_dim(), unit_action.len())?;
        let mean = self.unit_mean(state)?;
        Ok(gaussian_log_prob(&mean, &self.log_std, unit_action))
    }

    /// Checkpoint: mean-network bytes, then `u32` action dim followed by
    /// `log_std`, `action_low`, `action_high` as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.mean_net.to_bytes();
        out.extend_from_slice(&(self.log_std.len() as u32).to_le_bytes());
        for v in self.log_std.iter().chain(&self.action_low).chain(&self.action_high) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mean_net, mut cursor) = ParamNet::from_bytes(bytes)?;
        let d_bytes = bytes
            .get(cursor..cursor + 4)
            .ok_or_else(|| Error::Parse("truncated policy checkpoint".into()))?;
        let d = u32::from_le_bytes(d_bytes.try_into().expect("4 bytes")) as usize;
        cursor += 4;
        let body = bytes
            .get(cursor..cursor + 24 * d)
            .ok_or_else(|| Error::Parse("truncated policy checkpoint".into()))?;
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_parts(
            mean_net,
            vals[..d].to_vec(),
            vals[d..2 * d].to_vec(),
            vals[2 * d..].to_vec(),
        )
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Env;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_mapping_roundtrip() {
        let env = Env::by_name("pendulum").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pi = GaussianPolicy::new(env.spec(), &[8], -1.0, &mut rng).unwrap();
        assert_eq!(pi.from_unit(&[1.0]), vec![2.0]);
        assert_eq!(pi.to_unit(&[-2.0]), vec![-1.0]);
        assert!((pi.to_unit(&pi.from_unit(&[0.3]))[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sample_log_prob_agrees_with_log_prob() {
        let env = Env::by_name("point_mass").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = GaussianPolicy::new(env.spec(), &[8, 8], -0.5, &mut rng).unwrap();
        let s = [0.1, -0.2, 0.3, 0.0];
        let draw = pi.sample(&s, &mut rng).unwrap();
        let lp = pi.log_prob(&s, &draw.unit_action).unwrap();
        assert!((lp - draw.log_prob).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_scalar_formula() {
        let lp = gaussian_log_prob(&[0.5], &[0.2f64.ln()], &[0.1]);
        let sigma: f64 = 0.2;
        let want = -0.5 * ((0.1f64 - 0.5) / sigma).powi(2) - sigma.ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let env = Env::by_name("point_mass").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi = GaussianPolicy::new(env.spec(), &[5], 0.3f64.ln(), &mut rng).unwrap();
        assert_eq!(GaussianPolicy::from_bytes(&pi.to_bytes()).unwrap(), pi);
    }
}
