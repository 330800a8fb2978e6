use crate::error::{check_dim, Result};

const STD_FLOOR: f64 = 1e-6;

/// Per-dimension affine standardization of network inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
}

fn mean_std<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows.clone() {
        n += 1;
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    if n == 0 {
        return (mean, vec![1.0; dim]);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for r in rows {
        var.iter_mut()
            .zip(r.iter().zip(&mean))
            .for_each(|(v, (x, m))| *v += (x - m) * (x - m));
    }
    let std = var
        .into_iter()
        .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    (mean, std)
}

impl Normalizer {
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_mean: vec![0.0; in_dim],
            in_std: vec![1.0; in_dim],
            out_mean: vec![0.0; out_dim],
            out_std: vec![1.0; out_dim],
        }
    }

    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], in_dim: usize, out_dim: usize) -> Self {
        let (in_mean, in_std) = mean_std(inputs.iter().map(Vec::as_slice), in_dim);
        let (out_mean, out_std) = mean_std(targets.iter().map(Vec::as_slice), out_dim);
        Self {
            in_mean,
            in_std,
            out_mean,
            out_std,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_mean.len()
    }

    pub fn normalize_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Normalizer::normalize_input", self.in_dim(), x.len())?;
        Ok(x.iter()
            .zip(self.in_mean.iter().zip(&self.in_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn denormalize_input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.in_mean.iter().zip(&self.in_std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn normalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(y, (m, s))| (y - m) / s)
            .collect()
    }

    pub fn denormalize_output(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_within_1e12(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 2..20),
            probe in proptest::collection::vec(-100.0f64..100.0, 3),
        ) {
            let norm = Normalizer::fit(&rows, &rows, 3, 3);
            prop_assert!(norm.in_std.iter().all(|s| *s >= 1e-8));
            let back = norm.denormalize_input(&norm.normalize_input(&probe).unwrap());
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let back = norm.denormalize_output(&norm.normalize_output(&probe));
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn constant_dimension_gets_floored_std() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 4.0]];
        let n = Normalizer::fit(&rows, &rows, 2, 2);
        assert_eq!(n.in_mean, vec![1.0, 3.0]);
        assert_eq!(n.in_std[1], 1.0);
        assert!(n.in_std[0] >= 1e-8);
    }
}
