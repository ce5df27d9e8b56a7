//! Five-hidden-layer ReLU regressor trained with Adam on L1 loss.
//!
//! Layer order per hidden layer: linear, batch norm (training batches of at
//! least two rows only), ReLU, inverted dropout. The output layer is linear
//! with a single unit. All parameters live in one flat vector, laid out layer
//! by layer as `W (out x in, row-major), b, [gamma, beta]`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::rng::{self, streams, Rng};

pub const HIDDEN_LAYERS: usize = 5;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub use_batch_norm: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    /// Funnel widths with the tuned learning rate, dropout and batch size.
    fn default() -> Self {
        MlpConfig {
            hidden: vec![128, 64, 32, 16, 8],
            learning_rate: 0.00097,
            dropout_rate: 0.111,
            batch_size: 64,
            epochs: 100,
            use_batch_norm: true,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        let bad = |m: &str| Err(MlError::InvalidConfig(m.to_string()));
        if self.hidden.len() != HIDDEN_LAYERS {
            return bad("the network has exactly five hidden layers");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerSlots {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
    /// Offsets of gamma and beta when batch norm is enabled.
    bn: Option<(usize, usize)>,
}

fn layout(n_inputs: usize, config: &MlpConfig) -> (Vec<LayerSlots>, usize) {
    let mut slots = Vec::new();
    let mut offset = 0;
    let mut n_in = n_inputs;
    let widths = config.hidden.iter().copied().chain(std::iter::once(1));
    for (l, n_out) in widths.enumerate() {
        let w = offset;
        let b = w + n_out * n_in;
        offset = b + n_out;
        let bn = if config.use_batch_norm && l < HIDDEN_LAYERS {
            let g = offset;
            offset += 2 * n_out;
            Some((g, g + n_out))
        } else {
            None
        };
        slots.push(LayerSlots { n_in, n_out, w, b, bn });
        n_in = n_out;
    }
    (slots, offset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub n_inputs: usize,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    /// Mean training loss of each completed epoch.
    pub loss_history: Vec<f64>,
}

/// Activations kept from a training-mode forward pass.
struct HiddenCache {
    input: Vec<f64>,
    /// Normalized pre-activations when batch norm ran, else empty.
    zhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    /// Post-affine, pre-ReLU values.
    u: Vec<f64>,
    /// Dropout scale per element (0 or 1/(1-p)); empty when dropout is off.
    mask: Vec<f64>,
}

struct Forward {
    hidden: Vec<HiddenCache>,
    last_input: Vec<f64>,
    output: Vec<f64>,
}

fn linear(input: &[f64], rows: usize, w: &[f64], b: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * n_out];
    for r in 0..rows {
        let a = &input[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let wr = &w[o * n_in..(o + 1) * n_in];
            out[r * n_out + o] = b[o] + wr.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
        }
    }
    out
}

impl Mlp {
    /// He-uniform weights, zero biases, unit gamma, zero beta.
    pub fn new(n_inputs: usize, config: &MlpConfig) -> Result<Self, MlError> {
        config.validate()?;
        if n_inputs == 0 {
            return Err(MlError::InvalidConfig("network needs at least one input".into()));
        }
        let (slots, total) = layout(n_inputs, config);
        let mut params = vec![0.0; total];
        let mut rng = rng::labelled(config.seed, streams::MLP_INIT, 0);
        for s in &slots {
            let bound = (6.0 / s.n_in as f64).sqrt();
            for p in &mut params[s.w..s.w + s.n_in * s.n_out] {
                *p = rng.random_range(-bound..bound);
            }
            if let Some((g, _)) = s.bn {
                params[g..g + s.n_out].fill(1.0);
            }
        }
        Ok(Mlp {
            config: config.clone(),
            n_inputs,
            params,
            running_mean: config.hidden.iter().map(|&w| vec![0.0; w]).collect(),
            running_var: config.hidden.iter().map(|&w| vec![1.0; w]).collect(),
            loss_history: Vec::new(),
        })
    }

    fn slots(&self) -> Vec<LayerSlots> {
        layout(self.n_inputs, &self.config).0
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn flatten(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, MlError> {
        let mut flat = Vec::with_capacity(x.len() * self.n_inputs);
        for row in x {
            if row.len() != self.n_inputs {
                return Err(MlError::Width { expected: self.n_inputs, found: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Ok(flat)
    }

    /// Training-mode forward pass: batch statistics for batch norm (when the
    /// batch has at least two rows), dropout when `dropout` is given.
    fn forward_train(&self, input: Vec<f64>, rows: usize, mut dropout: Option<&mut Rng>) -> Forward {
        let slots = self.slots();
        let p = &self.params;
        let keep = 1.0 - self.config.dropout_rate;
        let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
        let mut a = input;
        for s in &slots[..HIDDEN_LAYERS] {
            let n = s.n_out;
            let z = linear(&a, rows, &p[s.w..s.b], &p[s.b..s.b + n], s.n_in, n);
            let (mut zhat, mut inv_std, mut batch_mean, mut batch_var) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            let u = match s.bn {
                Some((g, bt)) if rows >= 2 => {
                    batch_mean = vec![0.0; n];
                    batch_var = vec![0.0; n];
                    for r in 0..rows {
                        for j in 0..n {
                            batch_mean[j] += z[r * n + j];
                        }
                    }
                    batch_mean.iter_mut().for_each(|m| *m /= rows as f64);
                    for r in 0..rows {
                        for j in 0..n {
                            batch_var[j] += (z[r * n + j] - batch_mean[j]).powi(2);
                        }
                    }
                    batch_var.iter_mut().for_each(|v| *v /= rows as f64);
                    inv_std = batch_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    zhat = z
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v - batch_mean[i % n]) * inv_std[i % n])
                        .collect();
                    zhat.iter().enumerate().map(|(i, v)| p[g + i % n] * v + p[bt + i % n]).collect()
                }
                _ => z,
            };
            let mut out: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
            let mut mask = Vec::new();
            if let Some(r) = dropout.as_deref_mut() {
                if self.config.dropout_rate > 0.0 {
                    mask = (0..out.len())
                        .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    out.iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
                }
            }
            hidden.push(HiddenCache { input: a, zhat, inv_std, batch_mean, batch_var, u, mask });
            a = out;
        }
        let s = slots[HIDDEN_LAYERS];
        let output = linear(&a, rows, &p[s.w..s.b], &p[s.b..s.b + 1], s.n_in, 1);
        Forward { hidden, last_input: a, output }
    }

    /// Mean absolute error and its gradient with respect to every parameter.
    fn backward(&self, fwd: &Forward, y: &[f64]) -> (f64, Vec<f64>) {
        let rows = y.len();
        let slots = self.slots();
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let loss = fwd.output.iter().zip(y).map(|(o, t)| (o - t).abs()).sum::<f64>() / rows as f64;
        let mut delta: Vec<f64> = fwd
            .output
            .iter()
            .zip(y)
            .map(|(o, t)| {
                let d = o - t;
                if d > 0.0 {
                    1.0 / rows as f64
                } else if d < 0.0 {
                    -1.0 / rows as f64
                } else {
                    0.0
                }
            })
            .collect();
        let mut prev_input = &fwd.last_input;
        for l in (0..=HIDDEN_LAYERS).rev() {
            let s = slots[l];
            let (n_in, n_out) = (s.n_in, s.n_out);
            if l < HIDDEN_LAYERS {
                // delta currently holds dL/d(layer output); walk back through
                // dropout, ReLU and batch norm to dL/dz.
                let c = &fwd.hidden[l];
                prev_input = &c.input;
                for (i, d) in delta.iter_mut().enumerate() {
                    if !c.mask.is_empty() {
                        *d *= c.mask[i];
                    }
                    if c.u[i] <= 0.0 {
                        *d = 0.0;
                    }
                }
                if let (Some((g, bt)), false) = (s.bn, c.zhat.is_empty()) {
                    let mut sum_d = vec![0.0; n_out];
                    let mut sum_dz = vec![0.0; n_out];
                    for r in 0..rows {
                        for j in 0..n_out {
                            let i = r * n_out + j;
                            grad[g + j] += delta[i] * c.zhat[i];
                            grad[bt + j] += delta[i];
                            let dzhat = delta[i] * p[g + j];
                            sum_d[j] += dzhat;
                            sum_dz[j] += dzhat * c.zhat[i];
                        }
                    }
                    let m = rows as f64;
                    for r in 0..rows {
                        for j in 0..n_out {
                            let i = r * n_out + j;
                            let dzhat = delta[i] * p[g + j];
                            delta[i] = c.inv_std[j] / m * (m * dzhat - sum_d[j] - c.zhat[i] * sum_dz[j]);
                        }
                    }
                }
            }
            let mut next = vec![0.0; rows * n_in];
            for r in 0..rows {
                let a = &prev_input[r * n_in..(r + 1) * n_in];
                let back = &mut next[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[r * n_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    grad[s.b + o] += d;
                    let gw = &mut grad[s.w + o * n_in..s.w + (o + 1) * n_in];
                    gw.iter_mut().zip(a).for_each(|(gv, av)| *gv += d * av);
                    let wr = &p[s.w + o * n_in..s.w + (o + 1) * n_in];
                    back.iter_mut().zip(wr).for_each(|(bv, wv)| *bv += d * wv);
                }
            }
            delta = next;
        }
        (loss, grad)
    }

    /// Training-mode L1 loss with dropout disabled.
    pub fn batch_loss(&self, x: &[Vec<f64>], y: &[f64]) -> Result<f64, MlError> {
        let fwd = self.forward_train(self.flatten(x)?, x.len(), None);
        Ok(fwd.output.iter().zip(y).map(|(o, t)| (o - t).abs()).sum::<f64>() / y.len() as f64)
    }

    /// Training-mode L1 loss and analytic gradient, dropout disabled.
    pub fn batch_loss_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> Result<(f64, Vec<f64>), MlError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(MlError::Width { expected: x.len(), found: y.len() });
        }
        let fwd = self.forward_train(self.flatten(x)?, x.len(), None);
        Ok(self.backward(&fwd, y))
    }

    /// Inference: no dropout; batch norm uses running statistics.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let slots = self.slots();
        let p = &self.params;
        let mut a = x.to_vec();
        for (l, s) in slots[..HIDDEN_LAYERS].iter().enumerate() {
            let mut z = linear(&a, 1, &p[s.w..s.b], &p[s.b..s.b + s.n_out], s.n_in, s.n_out);
            if let Some((g, bt)) = s.bn {
                for (j, v) in z.iter_mut().enumerate() {
                    let zhat = (*v - self.running_mean[l][j]) / (self.running_var[l][j] + BN_EPS).sqrt();
                    *v = p[g + j] * zhat + p[bt + j];
                }
            }
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            a = z;
        }
        let s = slots[HIDDEN_LAYERS];
        linear(&a, 1, &p[s.w..s.b], &p[s.b..s.b + 1], s.n_in, 1)[0]
    }

    fn update_running_stats(&mut self, fwd: &Forward, rows: usize) {
        let unbias = rows as f64 / (rows as f64 - 1.0);
        for (l, c) in fwd.hidden.iter().enumerate() {
            if c.batch_mean.is_empty() {
                continue;
            }
            for j in 0..c.batch_mean.len() {
                let rm = &mut self.running_mean[l][j];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * c.batch_mean[j];
                let rv = &mut self.running_var[l][j];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * c.batch_var[j] * unbias;
            }
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Trains for a fixed number of epochs, reshuffling mini-batches each epoch.
pub fn mlp_fit(x: &[Vec<f64>], y: &[f64], config: &MlpConfig) -> Result<Mlp, MlError> {
    if x.is_empty() {
        return Err(MlError::Empty);
    }
    if x.len() != y.len() {
        return Err(MlError::Width { expected: x.len(), found: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MlError::NonFinite);
    }
    let mut net = Mlp::new(x[0].len(), config)?;
    let flat = net.flatten(x)?;
    let d = net.n_inputs;
    let mut adam = Adam::new(net.params.len(), config.learning_rate);
    let mut rng = rng::labelled(config.seed, streams::MLP_TRAIN, 0);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut input = Vec::with_capacity(batch.len() * d);
            for &i in batch {
                input.extend_from_slice(&flat[i * d..(i + 1) * d]);
            }
            let targets: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let fwd = net.forward_train(input, batch.len(), Some(&mut rng));
            let (loss, grad) = net.backward(&fwd, &targets);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(MlError::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            net.update_running_stats(&fwd, batch.len());
            adam.step(&mut net.params, &grad);
        }
        let epoch_loss = total / x.len() as f64;
        if !epoch_loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            return Err(MlError::Diverged { epoch });
        }
        net.loss_history.push(epoch_loss);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(bn: bool) -> MlpConfig {
        MlpConfig {
            hidden: vec![6, 5, 4, 4, 3],
            dropout_rate: 0.0,
            use_batch_norm: bn,
            epochs: 1,
            batch_size: 3,
            ..Default::default()
        }
    }

    fn batch() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = vec![vec![0.3, -1.2, 0.8], vec![1.5, 0.4, -0.6], vec![-0.7, 0.9, 0.2]];
        (x, vec![0.5, -0.25, 1.75])
    }

    fn check_gradient(net: &mut Mlp) -> f64 {
        let (x, y) = batch();
        let (_, analytic) = net.batch_loss_gradient(&x, &y).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..analytic.len() {
            let orig = net.parameters()[i];
            net.parameters_mut()[i] = orig + h;
            let plus = net.batch_loss(&x, &y).unwrap();
            net.parameters_mut()[i] = orig - h;
            let minus = net.batch_loss(&x, &y).unwrap();
            net.parameters_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs());
            if scale > 1e-10 {
                worst = worst.max((analytic[i] - numeric).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = Mlp::new(3, &MlpConfig { seed: 3, ..small(false) }).unwrap();
        let err = check_gradient(&mut net);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_with_batch_norm_matches_finite_differences() {
        let mut net = Mlp::new(3, &MlpConfig { seed: 8, ..small(true) }).unwrap();
        let err = check_gradient(&mut net);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn zero_network_predicts_zero() {
        let mut net = Mlp::new(3, &small(true)).unwrap();
        net.parameters_mut().fill(0.0);
        assert_eq!(net.predict_row(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(net.predict_row(&[-5.0, 0.0, 9.0]), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(Mlp::new(3, &MlpConfig { hidden: vec![4, 4], ..Default::default() }).is_err());
        assert!(Mlp::new(3, &MlpConfig { dropout_rate: 1.0, ..Default::default() }).is_err());
        assert!(Mlp::new(3, &MlpConfig { batch_size: 0, ..Default::default() }).is_err());
        assert!(Mlp::new(3, &MlpConfig { learning_rate: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn single_row_batches_skip_batch_norm() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1, 1.0, -1.0]).collect();
        let y: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let cfg = MlpConfig { batch_size: 1, epochs: 2, ..small(true) };
        let net = mlp_fit(&x, &y, &cfg).unwrap();
        assert_eq!(net.loss_history.len(), 2);
        // running statistics never move when every batch has one row
        assert!(net.running_mean.iter().flatten().all(|&m| m == 0.0));
        assert!(net.running_var.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn divergence_is_reported() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0, 2.0]).collect();
        let y = vec![1e308; 8];
        let cfg = MlpConfig { learning_rate: 1e300, epochs: 5, ..small(false) };
        assert!(matches!(mlp_fit(&x, &y, &cfg), Err(MlError::Diverged { .. })));
    }

    #[test]
    fn tuned_config_fits_linear_target() {
        let x: Vec<Vec<f64>> = (0..256).map(|i| vec![i as f64 / 255.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let net = mlp_fit(&x, &y, &MlpConfig { epochs: 200, ..MlpConfig::default() }).unwrap();
        let first = net.loss_history[0];
        let last = *net.loss_history.last().unwrap();
        assert!(last < 0.05 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, (i % 7) as f64, 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let cfg = MlpConfig { epochs: 3, batch_size: 8, dropout_rate: 0.2, ..small(true) };
        assert_eq!(mlp_fit(&x, &y, &cfg).unwrap(), mlp_fit(&x, &y, &cfg).unwrap());
    }
}
