//! The trainable teacher policy.
//!
//! A small feed-forward network (input -> tanh hidden -> softmax over
//! groups) maps a summary of the student's training state to a sampling
//! distribution over difficulty groups. It is trained by gradient descent on
//! the KL divergence between a reward-shifted pseudo ground truth and its
//! own prediction; gradients are exact analytic derivatives.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::simplex::{kl_divergence, GroupDistribution};

/// Feed-forward policy network. Parameters are plain `f64` vectors;
/// `w1` is `hidden_dim x input_dim` row-major, `w2` is
/// `num_groups x hidden_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherNet {
    input_dim: usize,
    hidden_dim: usize,
    num_groups: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Parameter-shaped gradient storage.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(net: &TeacherNet) -> Self {
        Self {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }
}

fn check_dims(input_dim: usize, hidden_dim: usize, num_groups: usize) -> Result<()> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::invalid("network dimensions must be positive"));
    }
    if num_groups < 2 {
        return Err(Error::invalid("teacher needs at least 2 output groups"));
    }
    Ok(())
}

impl TeacherNet {
    /// Seeded initialization: weights uniform in `+-1/sqrt(fan_in)`, biases 0.
    pub fn new(input_dim: usize, hidden_dim: usize, num_groups: usize, seed: u64) -> Result<Self> {
        check_dims(input_dim, hidden_dim, num_groups)?;
        let mut rng = rng::seeded(seed, rng::stream::TEACHER_INIT);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let bound2 = 1.0 / (hidden_dim as f64).sqrt();
        let mut uniform = |bound: f64| (rng.random::<f64>() * 2.0 - 1.0) * bound;
        Ok(Self {
            input_dim,
            hidden_dim,
            num_groups,
            w1: (0..hidden_dim * input_dim).map(|_| uniform(bound1)).collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..num_groups * hidden_dim).map(|_| uniform(bound2)).collect(),
            b2: vec![0.0; num_groups],
        })
    }

    /// All-zero parameters; the forward pass is uniform for any input.
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_groups: usize) -> Result<Self> {
        check_dims(input_dim, hidden_dim, num_groups)?;
        Ok(Self {
            input_dim,
            hidden_dim,
            num_groups,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; num_groups * hidden_dim],
            b2: vec![0.0; num_groups],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    /// `(input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_groups`.
    pub fn param_count(&self) -> usize {
        (self.input_dim + 1) * self.hidden_dim + (self.hidden_dim + 1) * self.num_groups
    }

    /// Parameters flattened in `w1, b1, w2, b2` order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend_from_slice(&self.w1);
        flat.extend_from_slice(&self.b1);
        flat.extend_from_slice(&self.w2);
        flat.extend_from_slice(&self.b2);
        flat
    }

    pub fn from_flat(
        input_dim: usize,
        hidden_dim: usize,
        num_groups: usize,
        flat: &[f64],
    ) -> Result<Self> {
        check_dims(input_dim, hidden_dim, num_groups)?;
        let expected = (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_groups;
        if flat.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        if flat.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = flat[at..at + n].to_vec();
            at += n;
            s
        };
        Ok(Self {
            input_dim,
            hidden_dim,
            num_groups,
            w1: take(hidden_dim * input_dim),
            b1: take(hidden_dim),
            w2: take(num_groups * hidden_dim),
            b2: take(num_groups),
        })
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "state dimension {} does not match input_dim {}",
                state.len(),
                self.input_dim
            )));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state vector entries must be finite"));
        }
        Ok(())
    }

    /// Hidden activations and softmax output for `state`.
    fn forward_parts(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hidden = vec![0.0; self.hidden_dim];
        for h in 0..self.hidden_dim {
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            let a: f64 = row.iter().zip(state).map(|(w, x)| w * x).sum::<f64>() + self.b1[h];
            hidden[h] = a.tanh();
        }
        let mut logits = vec![0.0; self.num_groups];
        for k in 0..self.num_groups {
            let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
            logits[k] = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[k];
        }
        // Max-subtracted softmax.
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        (hidden, probs)
    }

    /// Sampling distribution for the given student state.
    pub fn forward(&self, state: &[f64]) -> Result<GroupDistribution> {
        self.check_state(state)?;
        let (_, probs) = self.forward_parts(state);
        Ok(GroupDistribution::from_normalized(probs))
    }

    /// KL loss against `target` and its exact gradients w.r.t. every
    /// parameter.
    pub fn loss_and_gradients(
        &self,
        state: &[f64],
        target: &GroupDistribution,
    ) -> Result<(f64, Gradients)> {
        self.check_state(state)?;
        if target.len() != self.num_groups {
            return Err(Error::invalid(format!(
                "target has {} groups, network outputs {}",
                target.len(),
                self.num_groups
            )));
        }
        let (hidden, probs) = self.forward_parts(state);
        let q = GroupDistribution::from_normalized(probs.clone());
        let loss = kl_divergence(target, &q)?;

        let mut grads = Gradients::zeros(self);
        // dL/dz_k for L = sum_k p_k ln(p_k / q_k), q = softmax(z).
        let dz: Vec<f64> = probs
            .iter()
            .zip(target.probs())
            .map(|(q_k, p_k)| q_k - p_k)
            .collect();
        for k in 0..self.num_groups {
            grads.b2[k] = dz[k];
            for h in 0..self.hidden_dim {
                grads.w2[k * self.hidden_dim + h] = dz[k] * hidden[h];
            }
        }
        for h in 0..self.hidden_dim {
            let upstream: f64 = (0..self.num_groups)
                .map(|k| dz[k] * self.w2[k * self.hidden_dim + h])
                .sum();
            let da = upstream * (1.0 - hidden[h] * hidden[h]);
            grads.b1[h] = da;
            for i in 0..self.input_dim {
                grads.w1[h * self.input_dim + i] = da * state[i];
            }
        }
        Ok((loss, grads))
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Adaptive-moment gradient descent state over the teacher's parameters.
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamOptimizer {
    pub fn new(learning_rate: f64, param_count: usize) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One optimizer step. Non-finite gradients abort without touching the
    /// parameters or the step counter.
    pub fn apply_update(&mut self, net: &mut TeacherNet, grads: &Gradients) -> Result<()> {
        if self.m.len() != net.param_count() {
            return Err(Error::invalid("optimizer shape does not match network"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("non-finite gradient; update aborted"));
        }
        let grad_slices = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
        if grad_slices
            .iter()
            .map(|s| s.len())
            .ne([&net.w1, &net.b1, &net.w2, &net.b2].iter().map(|s| s.len()))
        {
            return Err(Error::invalid("gradient shape does not match network"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut at = 0;
        for (params, grad) in net.params_mut().into_iter().zip(grad_slices) {
            for (p, &g) in params.iter_mut().zip(grad.iter()) {
                let m = &mut self.m[at];
                let v = &mut self.v[at];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                at += 1;
            }
        }
        Ok(())
    }
}

/// Summary of the student's training state, fed to the teacher instead of a
/// raw image: per-group recent mean loss, per-group synthetic visit
/// frequencies, and a global loss moving average (`2 * |g| + 1` inputs).
#[derive(Debug, Clone)]
pub struct StudentStateTracker {
    per_group_loss: Vec<f64>,
    loss_seen: Vec<bool>,
    visit_counts: Vec<u64>,
    global_loss_ema: f64,
    global_seen: bool,
    ema_coeff: f64,
}

impl StudentStateTracker {
    pub fn new(num_groups: usize, ema_coeff: f64) -> Result<Self> {
        if num_groups < 2 {
            return Err(Error::invalid("need at least 2 groups"));
        }
        if !(0.0..=1.0).contains(&ema_coeff) || !ema_coeff.is_finite() {
            return Err(Error::invalid("ema coefficient must lie in [0, 1]"));
        }
        Ok(Self {
            per_group_loss: vec![0.0; num_groups],
            loss_seen: vec![false; num_groups],
            visit_counts: vec![0; num_groups],
            global_loss_ema: 0.0,
            global_seen: false,
            ema_coeff,
        })
    }

    /// Input width of the matching teacher network.
    pub fn dim(&self) -> usize {
        2 * self.per_group_loss.len() + 1
    }

    /// Fold one observed sample loss into its group's moving average.
    pub fn observe_sample(&mut self, group: usize, loss: f64) {
        let slot = &mut self.per_group_loss[group];
        if self.loss_seen[group] {
            *slot = (1.0 - self.ema_coeff) * *slot + self.ema_coeff * loss;
        } else {
            *slot = loss;
            self.loss_seen[group] = true;
        }
    }

    /// Record that a synthetic sample was drawn from `group`.
    pub fn observe_synthetic_draw(&mut self, group: usize) {
        self.visit_counts[group] += 1;
    }

    /// Fold the batch mean loss into the global moving average.
    pub fn observe_global(&mut self, loss: f64) {
        if self.global_seen {
            self.global_loss_ema = (1.0 - self.ema_coeff) * self.global_loss_ema + self.ema_coeff * loss;
        } else {
            self.global_loss_ema = loss;
            self.global_seen = true;
        }
    }

    /// `[per-group losses | visit frequencies | global EMA]`.
    pub fn state_vector(&self) -> Vec<f64> {
        let total: u64 = self.visit_counts.iter().sum();
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.per_group_loss);
        if total == 0 {
            v.extend(std::iter::repeat_n(0.0, self.visit_counts.len()));
        } else {
            v.extend(self.visit_counts.iter().map(|&c| c as f64 / total as f64));
        }
        v.push(self.global_loss_ema);
        v
    }
}

/// Metadata stored in a checkpoint's JSON header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_groups: usize,
    pub seed: u64,
    pub step: u64,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Write the network as a little-endian `u64` header length, a JSON header,
/// and the flat `f64` parameter array.
pub fn save_checkpoint(net: &TeacherNet, seed: u64, step: u64, path: &Path) -> Result<()> {
    let meta = CheckpointMeta {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        input_dim: net.input_dim,
        hidden_dim: net.hidden_dim,
        num_groups: net.num_groups,
        seed,
        step,
    };
    let header = serde_json::to_vec(&meta).expect("meta serializes");
    let mut buf = Vec::with_capacity(8 + header.len() + net.param_count() * 8);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for p in net.to_flat() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TeacherNet, CheckpointMeta)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::invalid("checkpoint too short"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::invalid("checkpoint header truncated"));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::invalid(format!("bad checkpoint header: {e}")))?;
    if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unknown checkpoint schema version {}",
            meta.schema_version
        )));
    }
    let body = &bytes[8 + header_len..];
    if body.len() % 8 != 0 {
        return Err(Error::invalid("checkpoint parameter block truncated"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let net = TeacherNet::from_flat(meta.input_dim, meta.hidden_dim, meta.num_groups, &flat)?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::GroupDistribution;
    use proptest::prelude::*;

    #[test]
    fn zero_net_outputs_uniform() {
        let net = TeacherNet::zeros(5, 4, 10).unwrap();
        let out = net.forward(&[0.3, -1.0, 2.0, 0.0, 7.5]).unwrap();
        for &p in out.probs() {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_output_is_normalized() {
        let net = TeacherNet::new(7, 16, 6, 0).unwrap();
        let state: Vec<f64> = (0..7).map(|i| i as f64 * 0.25 - 0.5).collect();
        let out = net.forward(&state).unwrap();
        assert!((out.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_fixed_logits() {
        // w2 = 0 makes the head output its biases regardless of the input.
        let mut net = TeacherNet::zeros(2, 3, 3).unwrap();
        net.b2 = vec![1.0, 2.0, 3.0];
        let out = net.forward(&[0.4, -0.4]).unwrap();
        // Independent exp/sum route.
        let exps = [1.0f64.exp(), 2.0f64.exp(), 3.0f64.exp()];
        let sum: f64 = exps.iter().sum();
        for (p, e) in out.probs().iter().zip(exps.iter()) {
            assert!((p - e / sum).abs() < 1e-12);
        }
        for (p, expected) in out.probs().iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((p - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn param_count_matches_contract() {
        let net = TeacherNet::new(21, 32, 10, 1).unwrap();
        assert_eq!(net.param_count(), (21 + 1) * 32 + (32 + 1) * 10);
        assert_eq!(net.to_flat().len(), net.param_count());
    }

    #[test]
    fn loss_zero_at_matching_target() {
        let net = TeacherNet::new(5, 8, 4, 3).unwrap();
        let state = [0.1, 0.2, 0.3, 0.4, 0.5];
        let target = net.forward(&state).unwrap();
        let (loss, grads) = net.loss_and_gradients(&state, &target).unwrap();
        assert!(loss.abs() < 1e-9);
        assert!(grads.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let net = TeacherNet::new(5, 8, 4, 3).unwrap();
        assert!(net.forward(&[0.0; 4]).is_err());
        assert!(net.forward(&[f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
        let bad_target = GroupDistribution::uniform(5).unwrap();
        assert!(net.loss_and_gradients(&[0.0; 5], &bad_target).is_err());
    }

    // Central finite differences over a (state, target) pair.
    fn finite_difference(
        net: &TeacherNet,
        state: &[f64],
        target: &GroupDistribution,
        h: f64,
    ) -> Vec<f64> {
        let flat = net.to_flat();
        let mut out = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += h;
            minus[i] -= h;
            let net_p = TeacherNet::from_flat(
                net.input_dim(),
                net.hidden_dim(),
                net.num_groups(),
                &plus,
            )
            .unwrap();
            let net_m = TeacherNet::from_flat(
                net.input_dim(),
                net.hidden_dim(),
                net.num_groups(),
                &minus,
            )
            .unwrap();
            let lp = net_p.loss_and_gradients(state, target).unwrap().0;
            let lm = net_m.loss_and_gradients(state, target).unwrap().0;
            out.push((lp - lm) / (2.0 * h));
        }
        out
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let net = TeacherNet::new(5, 6, 4, 42).unwrap();
        let mut rng = crate::rng::seeded(9, 0);
        let state: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let target = GroupDistribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let (_, grads) = net.loss_and_gradients(&state, &target).unwrap();
        let analytic: Vec<f64> = grads.iter().collect();
        let numeric = finite_difference(&net, &state, &target, 1e-5);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn gradients_match_hand_derived_closed_form() {
        // 1 input, 1 hidden unit, 2 groups: small enough to derive by hand.
        let net = TeacherNet::from_flat(1, 1, 2, &[0.7, -0.2, 1.3, -0.9, 0.25, -0.25]).unwrap();
        let x = 0.6;
        let p0 = 0.8;
        let target = GroupDistribution::new(vec![p0, 1.0 - p0]).unwrap();

        // Forward by hand.
        let a: f64 = 0.7 * x + (-0.2);
        let h = a.tanh();
        let z0: f64 = 1.3 * h + 0.25;
        let z1: f64 = -0.9 * h - 0.25;
        let e0 = (z0 - z0.max(z1)).exp();
        let e1 = (z1 - z0.max(z1)).exp();
        let q0 = e0 / (e0 + e1);
        let q1 = e1 / (e0 + e1);
        let expected_loss = p0 * (p0 / q0).ln() + (1.0 - p0) * ((1.0 - p0) / q1).ln();

        // Backward by hand: dL/dz_k = q_k - p_k.
        let dz0 = q0 - p0;
        let dz1 = q1 - (1.0 - p0);
        let dw2 = [dz0 * h, dz1 * h];
        let db2 = [dz0, dz1];
        let da = (dz0 * 1.3 + dz1 * (-0.9)) * (1.0 - h * h);
        let dw1 = da * x;
        let db1 = da;

        let (loss, grads) = net.loss_and_gradients(&[x], &target).unwrap();
        assert!((loss - expected_loss).abs() < 1e-12);
        assert!((grads.w1[0] - dw1).abs() < 1e-12);
        assert!((grads.b1[0] - db1).abs() < 1e-12);
        assert!((grads.w2[0] - dw2[0]).abs() < 1e-12);
        assert!((grads.w2[1] - dw2[1]).abs() < 1e-12);
        assert!((grads.b2[0] - db2[0]).abs() < 1e-12);
        assert!((grads.b2[1] - db2[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut net = TeacherNet::new(3, 4, 3, 5).unwrap();
        let before = net.to_flat();
        let mut opt = AdamOptimizer::new(1e-3, net.param_count()).unwrap();
        let grads = Gradients::zeros(&net);
        opt.apply_update(&mut net, &grads).unwrap();
        assert_eq!(net.to_flat(), before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn non_finite_gradients_abort_step() {
        let mut net = TeacherNet::new(3, 4, 3, 5).unwrap();
        let before = net.to_flat();
        let mut opt = AdamOptimizer::new(1e-3, net.param_count()).unwrap();
        let mut grads = Gradients::zeros(&net);
        grads.w1[0] = f64::NAN;
        assert!(opt.apply_update(&mut net, &grads).is_err());
        assert_eq!(net.to_flat(), before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn unit_gradient_moves_parameters_downhill() {
        let mut net = TeacherNet::zeros(2, 2, 2).unwrap();
        let mut opt = AdamOptimizer::new(1e-3, net.param_count()).unwrap();
        let mut grads = Gradients::zeros(&net);
        for g in grads
            .w1
            .iter_mut()
            .chain(&mut grads.b1)
            .chain(&mut grads.w2)
            .chain(&mut grads.b2)
        {
            *g = 1.0;
        }
        opt.apply_update(&mut net, &grads).unwrap();
        assert!(net.to_flat().iter().all(|&p| p < 0.0));
    }

    #[test]
    fn repeated_steps_nearly_monotone_on_fixed_pair() {
        let mut net = TeacherNet::new(5, 8, 4, 7).unwrap();
        let mut opt = AdamOptimizer::new(1e-3, net.param_count()).unwrap();
        let state = [0.5, -0.25, 1.0, 0.1, -0.6];
        let target = GroupDistribution::new(vec![0.1, 0.6, 0.1, 0.2]).unwrap();
        let mut prev = f64::INFINITY;
        let mut violations = 0;
        for _ in 0..100 {
            let (loss, grads) = net.loss_and_gradients(&state, &target).unwrap();
            if loss > prev + 1e-12 {
                violations += 1;
            }
            prev = loss;
            opt.apply_update(&mut net, &grads).unwrap();
        }
        assert!(violations <= 5, "{violations} non-monotone steps");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let run = || {
            let mut net = TeacherNet::new(5, 8, 4, 11).unwrap();
            let mut opt = AdamOptimizer::new(1e-3, net.param_count()).unwrap();
            let state = [0.5, -0.25, 1.0, 0.1, -0.6];
            let target = GroupDistribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
            for _ in 0..50 {
                let (_, grads) = net.loss_and_gradients(&state, &target).unwrap();
                opt.apply_update(&mut net, &grads).unwrap();
            }
            net.to_flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.ckpt");
        let net = TeacherNet::new(21, 32, 10, 99).unwrap();
        save_checkpoint(&net, 99, 1234, &path).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.step, 1234);
        assert_eq!(meta.seed, 99);
        assert_eq!(meta.num_groups, 10);
        let a = net.to_flat();
        let b = loaded.to_flat();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn state_tracker_vector_layout() {
        let mut t = StudentStateTracker::new(3, 0.5).unwrap();
        assert_eq!(t.dim(), 7);
        let v = t.state_vector();
        assert_eq!(v, vec![0.0; 7]);
        t.observe_sample(1, 2.0);
        t.observe_synthetic_draw(1);
        t.observe_synthetic_draw(2);
        t.observe_global(1.5);
        let v = t.state_vector();
        assert_eq!(v[1], 2.0);
        assert!((v[3..6].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(v[6], 1.5);
        // EMA after a second observation.
        t.observe_sample(1, 0.0);
        assert_eq!(t.state_vector()[1], 1.0);
    }

    proptest! {
        #[test]
        fn forward_is_always_a_valid_distribution(
            seed in 0u64..500,
            state in prop::collection::vec(-5.0..5.0f64, 5),
        ) {
            let net = TeacherNet::new(5, 6, 8, seed).unwrap();
            let out = net.forward(&state).unwrap();
            prop_assert!(GroupDistribution::new(out.probs().to_vec()).is_ok());
            prop_assert!(out.probs().iter().all(|&p| p > 0.0));
        }
    }
}
