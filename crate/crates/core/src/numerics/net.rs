use rand::Rng;

use crate::error::{check_dim, Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Multi-layer perceptron with tanh hidden activations and a linear output.
///
/// Parameters are stored flat, layer by layer: a row-major `out x in` weight
/// block followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    adam: AdamState,
}

/// Activations recorded by [`ParamNet::forward_recorded`], consumed by
/// [`ParamNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    // activations[0] is the input, activations[l] the output of layer l.
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output layer, got sizes {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl ParamNet {
    /// Scaled-uniform initialization, `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`,
    /// and zero biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-r..=r)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self::assemble(layer_sizes, params))
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self::assemble(layer_sizes, vec![0.0; param_count(layer_sizes)]))
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        check_dim("ParamNet::from_params", param_count(layer_sizes), params.len())?;
        Ok(Self::assemble(layer_sizes, params))
    }

    fn assemble(layer_sizes: &[usize], params: Vec<f64>) -> Self {
        let adam = AdamState::new(params.len());
        Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            adam,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Overwrites the parameter vector. Optimizer moments are kept.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("ParamNet::set_params", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::new(self.params.len());
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("ParamNet::forward", self.input_dim(), x.len())?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut current = x.to_vec();
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut next = vec![0.0; n_out];
            affine(&self.params[offset..], n_in, n_out, &current, &mut next);
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            offset += (n_in + 1) * n_out;
            current = next;
        }
        Ok(current)
    }

    /// Forward pass that keeps every layer's activations for a later backward pass.
    pub fn forward_recorded(&self, x: &[f64]) -> Result<Tape> {
        check_dim("ParamNet::forward_recorded", self.input_dim(), x.len())?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut next = vec![0.0; n_out];
            affine(&self.params[offset..], n_in, n_out, &activations[l], &mut next);
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            offset += (n_in + 1) * n_out;
            activations.push(next);
        }
        Ok(Tape { activations })
    }

    /// Gradient of a scalar loss with respect to the parameters, given the
    /// loss gradient with respect to the network output.
    pub fn backward(&self, tape: &Tape, loss_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(tape, loss_grad, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grad`.
    pub fn backward_into(&self, tape: &Tape, loss_grad: &[f64], grad: &mut [f64]) -> Result<()> {
        if tape.is_empty() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        let n_layers = self.layer_sizes.len() - 1;
        if tape.activations.len() != n_layers + 1
            || tape
                .activations
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &n)| a.len() != n)
        {
            return Err(Error::State(
                "recorded forward pass does not match this network's shape".into(),
            ));
        }
        check_dim("ParamNet::backward (loss grad)", self.output_dim(), loss_grad.len())?;
        check_dim("ParamNet::backward (grad buffer)", self.params.len(), grad.len())?;

        let mut delta = loss_grad.to_vec();
        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            offset -= (n_in + 1) * n_out;
            let input = &tape.activations[l];
            let (g_w, g_b) = grad[offset..offset + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, &x) in g_w[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                g_b[o] += d;
            }
            if l > 0 {
                let w = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += wv * d;
                        }
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// One Adam update. Non-finite gradients leave the network untouched.
    /// Directional derivative of the output along `direction` in parameter
    /// space, evaluated at the recorded forward pass.
    pub fn jvp(&self, tape: &Tape, direction: &[f64]) -> Result<Vec<f64>> {
        if tape.is_empty() {
            return Err(Error::State(
                "jvp called without a recorded forward pass".into(),
            ));
        }
        check_dim("ParamNet::jvp (direction)", self.params.len(), direction.len())?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut dact = vec![0.0; self.layer_sizes[0]];
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let dw = &direction[offset..offset + n_in * n_out];
            let db = &direction[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            let input = &tape.activations[l];
            let mut dz: Vec<f64> = (0..n_out)
                .map(|o| {
                    let rows = o * n_in..(o + 1) * n_in;
                    dot(&dw[rows.clone()], input) + dot(&w[rows], &dact) + db[o]
                })
                .collect();
            if l + 1 < n_layers {
                for (d, &a) in dz.iter_mut().zip(&tape.activations[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            dact = dz;
            offset += (n_in + 1) * n_out;
        }
        Ok(dact)
    }

    pub fn adam_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        check_dim("ParamNet::adam_step", self.params.len(), grad.len())?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient entry {} at index {i}",
                grad[i]
            )));
        }
        let st = &mut self.adam;
        st.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(st.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(st.t as i32);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(st.m.iter_mut())
            .zip(st.v.iter_mut())
            .zip(grad)
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }

    /// Checkpoint layout: `u32` layer count, the `u32` layer sizes, then the
    /// parameters as `f64`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * (self.layer_sizes.len() + 1) + 8 * self.params.len());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &n in &self.layer_sizes {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint written by [`to_bytes`](Self::to_bytes). Returns the
    /// network and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cursor = 0usize;
        let read_u32 = |cursor: &mut usize| -> Result<u32> {
            let b = bytes
                .get(*cursor..*cursor + 4)
                .ok_or_else(|| Error::Parse("truncated network header".into()))?;
            *cursor += 4;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
        };
        let n_layers = read_u32(&mut cursor)? as usize;
        if n_layers > 1024 {
            return Err(Error::Parse(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..n_layers)
            .map(|_| read_u32(&mut cursor).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        validate_sizes(&sizes).map_err(|e| Error::Parse(e.to_string()))?;
        let n = param_count(&sizes);
        let body = bytes
            .get(cursor..cursor + 8 * n)
            .ok_or_else(|| Error::Parse("truncated network parameters".into()))?;
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((Self::assemble(&sizes, params), cursor + 8 * n))
    }
}

#[inline]
fn affine(block: &[f64], n_in: usize, n_out: usize, x: &[f64], out: &mut [f64]) {
    let (w, rest) = block.split_at(n_in * n_out);
    let b = &rest[..n_out];
    for o in 0..n_out {
        out[o] = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Straight triple-loop forward used as an oracle.
    fn forward_oracle(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (ni, no) = (sizes[l], sizes[l + 1]);
            let mut z = vec![0.0; no];
            for o in 0..no {
                let mut s = params[off + ni * no + o];
                for i in 0..ni {
                    s += params[off + o * ni + i] * a[i];
                }
                z[o] = if l + 2 < sizes.len() { s.tanh() } else { s };
            }
            off += (ni + 1) * no;
            a = z;
        }
        a
    }

    #[test]
    fn param_count_matches_layer_sizes() {
        let net = ParamNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.num_params(), 4 * 5 + 6 * 2);
        assert_eq!(net.adam_state().m.len(), net.num_params());
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = ParamNet::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_affine() {
        let net = ParamNet::from_params(&[1, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut r = rng(7);
        let net = ParamNet::new(&[4, 6, 3], &mut r).unwrap();
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = forward_oracle(net.layer_sizes(), net.params(), &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
        assert_eq!(net.forward_recorded(&x).unwrap().output(), got.as_slice());
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let net = ParamNet::zeros(&[2, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let net = ParamNet::zeros(&[2, 1]).unwrap();
        let err = net.backward(&Tape::default(), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn linear_chain_rule_by_hand() {
        let net = ParamNet::from_params(&[1, 1], vec![0.7, -0.2]).unwrap();
        let tape = net.forward_recorded(&[3.0]).unwrap();
        assert_eq!(net.backward(&tape, &[1.0]).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn zero_input_gives_bias_only_gradient() {
        // 0.5 * |out|^2 at x = 0: first-layer weights see zero inputs.
        let mut r = rng(3);
        let mut net = ParamNet::new(&[2, 3, 2], &mut r).unwrap();
        let mut p = net.params().to_vec();
        // non-zero biases so the output is non-zero
        p[6..9].copy_from_slice(&[0.3, -0.4, 0.5]);
        p[15..17].copy_from_slice(&[0.2, 0.1]);
        net.set_params(&p).unwrap();
        let tape = net.forward_recorded(&[0.0, 0.0]).unwrap();
        let out = tape.output().to_vec();
        let g = net.backward(&tape, &out).unwrap();
        assert!(g[..6].iter().all(|&v| v == 0.0));
        assert!(g[6..9].iter().any(|&v| v != 0.0));
        assert!(g[15..17].iter().all(|&v| v != 0.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut r = rng(1);
        let mut net = ParamNet::new(&[2, 2], &mut r).unwrap();
        let before = net.params().to_vec();
        net.adam_step(&vec![0.0; net.num_params()], 1e-3).unwrap();
        assert_eq!(net.params(), before.as_slice());
        assert_eq!(net.adam_state().t, 1);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // t = 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
        let mut net = ParamNet::from_params(&[1, 1], vec![0.5, -0.5]).unwrap();
        let g = [2.0, -0.25];
        net.adam_step(&g, 0.01).unwrap();
        let want_w = 0.5 - 0.01 * 2.0 / (2.0 + ADAM_EPS);
        let want_b = -0.5 + 0.01 * 0.25 / (0.25 + ADAM_EPS);
        assert!((net.params()[0] - want_w).abs() < 1e-15);
        assert!((net.params()[1] - want_b).abs() < 1e-15);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        let mut net = ParamNet::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
        for _ in 0..1000 {
            let w = net.params()[0];
            net.adam_step(&[2.0 * (w - 3.0), 0.0], 1e-2).unwrap();
        }
        assert!((net.params()[0] - 3.0).abs() < 0.05);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = ParamNet::from_params(&[1, 1], vec![1.0, 2.0]).unwrap();
        let err = net.adam_step(&[f64::NAN, 0.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(net.params(), &[1.0, 2.0]);
        assert_eq!(net.adam_state().t, 0);
    }

    #[test]
    fn adam_is_bitwise_deterministic() {
        let mut r = rng(5);
        let a = ParamNet::new(&[3, 4, 1], &mut r).unwrap();
        let grad: Vec<f64> = (0..a.num_params()).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut x = a.clone();
        let mut y = a.clone();
        x.adam_step(&grad, 3e-3).unwrap();
        y.adam_step(&grad, 3e-3).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn jvp_matches_central_difference() {
        let mut r = rng(21);
        let net = ParamNet::new(&[3, 5, 4, 2], &mut r).unwrap();
        let x = [0.3, -0.7, 1.1];
        let dir: Vec<f64> = (0..net.num_params()).map(|_| r.random_range(-1.0..1.0)).collect();
        let tape = net.forward_recorded(&x).unwrap();
        let got = net.jvp(&tape, &dir).unwrap();
        let h = 1e-6;
        let shifted = |sign: f64| {
            let p: Vec<f64> = net.params().iter().zip(&dir).map(|(p, d)| p + sign * h * d).collect();
            ParamNet::from_params(&[3, 5, 4, 2], p).unwrap().forward(&x).unwrap()
        };
        let (plus, minus) = (shifted(1.0), shifted(-1.0));
        for k in 0..2 {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            assert!((got[k] - fd).abs() < 1e-7, "{} vs {fd}", got[k]);
        }
    }

    #[test]
    fn checkpoint_bytes_roundtrip() {
        let mut r = rng(9);
        let net = ParamNet::new(&[3, 5, 2], &mut r).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], &3u32.to_le_bytes());
        let (back, used) = ParamNet::from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back.params(), net.params());
        assert!(ParamNet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
