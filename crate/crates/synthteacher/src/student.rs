//! Pluggable student contract and a simulated oracle student.
//!
//! The oracle student has a known per-group difficulty and a per-group skill
//! that improves when the group is trained and decays when it is not, so the
//! "hardest group" is always well defined and the teacher's targeting can be
//! verified quantitatively. Loss masking for synthetic instances lives here
//! too.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of identical pseudo-joints the oracle attaches to each sample, so
/// mean-loss-per-joint plumbing is exercised end to end.
pub const ORACLE_PSEUDO_JOINTS: usize = 14;

/// One sample presented to a student.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSample {
    pub group_id: usize,
    pub is_synthetic: bool,
}

/// Per-sample training result: one loss per joint.
#[derive(Debug, Clone)]
pub struct SampleLoss {
    pub group_id: usize,
    pub is_synthetic: bool,
    pub per_joint: Vec<f64>,
}

impl SampleLoss {
    /// Mean over all joints (every joint counted).
    pub fn mean_per_joint(&self) -> f64 {
        self.per_joint.iter().sum::<f64>() / self.per_joint.len() as f64
    }
}

/// Behavioral contract for a trainable student.
pub trait Student {
    /// Train on one batch and report nonnegative per-sample, per-joint
    /// losses.
    fn train_on(&mut self, batch: &[BatchSample]) -> Result<Vec<SampleLoss>>;

    /// Score a holdout of group ids without side effects.
    fn evaluate(&self, holdout: &[usize]) -> Result<f64>;

    /// Optional capability: freeze the feature extractor while training on
    /// synthetic data. A no-op unless the student has one.
    fn set_backbone_frozen(&mut self, _frozen: bool) {}
}

/// Loss masking policy for synthetic person instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub mask_synthetic_loss: bool,
}

/// Mean loss over unmasked instances. When the policy masks synthetic
/// instances and nothing remains, the aggregate is 0 by convention.
pub fn masked_loss_aggregate(
    per_instance_losses: &[(f64, bool)],
    policy: MaskPolicy,
) -> Result<f64> {
    if per_instance_losses.is_empty() {
        return Err(Error::invalid("no instances to aggregate"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(loss, is_synthetic) in per_instance_losses {
        if !loss.is_finite() {
            return Err(Error::invalid("instance loss is not finite"));
        }
        if policy.mask_synthetic_loss && is_synthetic {
            continue;
        }
        sum += loss;
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Oracle student parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Per-group difficulty in (0, 1].
    pub difficulties: Vec<f64>,
    /// Skill gained per trained step: `s += eta * d * (1 - s)`.
    pub learning_rate: f64,
    /// Skill lost per untrained step: `s -= rho`.
    pub forgetting_rate: f64,
    /// Standard deviation of the additive loss noise.
    pub noise_sigma: f64,
    /// Initial skill for every group.
    pub initial_skill: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            difficulties: vec![0.5; 10],
            learning_rate: 0.01,
            forgetting_rate: 0.01,
            noise_sigma: 0.02,
            initial_skill: 0.0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.difficulties.is_empty() {
            return Err(Error::invalid("oracle needs at least one group"));
        }
        for (g, &d) in self.difficulties.iter().enumerate() {
            if !d.is_finite() || d <= 0.0 || d > 1.0 {
                return Err(Error::invalid(format!(
                    "difficulty {d} for group {g} outside (0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::invalid("learning_rate outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.forgetting_rate) {
            return Err(Error::invalid("forgetting_rate outside [0, 1]"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.initial_skill) {
            return Err(Error::invalid("initial_skill outside [0, 1]"));
        }
        Ok(())
    }
}

/// Simulated student with known ground-truth difficulty.
///
/// A sample from group `g` produces loss `d_g * (1 - s_g) + noise`, clamped
/// at 0. After each training step every group present in the batch improves
/// and every absent group decays, so sustained targeting is required to keep
/// a group mastered.
#[derive(Debug, Clone)]
pub struct OracleStudent {
    params: OracleParams,
    skills: Vec<f64>,
    rng: ChaCha8Rng,
}

impl OracleStudent {
    pub fn new(params: OracleParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let skills = vec![params.initial_skill; params.difficulties.len()];
        Ok(Self {
            params,
            skills,
            rng: rng::seeded(seed, rng::stream::STUDENT),
        })
    }

    pub fn num_groups(&self) -> usize {
        self.params.difficulties.len()
    }

    pub fn skills(&self) -> &[f64] {
        &self.skills
    }

    pub fn difficulties(&self) -> &[f64] {
        &self.params.difficulties
    }

    /// Swap in a new difficulty profile mid-run (used for adaptivity
    /// experiments). Skills are kept.
    pub fn set_difficulties(&mut self, difficulties: Vec<f64>) -> Result<()> {
        if difficulties.len() != self.skills.len() {
            return Err(Error::invalid("difficulty vector length changed"));
        }
        let candidate = OracleParams {
            difficulties,
            ..self.params.clone()
        };
        candidate.validate()?;
        self.params = candidate;
        Ok(())
    }

    /// Noise-free loss the student would incur on a group right now.
    pub fn expected_loss(&self, group: usize) -> f64 {
        self.params.difficulties[group] * (1.0 - self.skills[group])
    }

    fn check_group(&self, group: usize) -> Result<()> {
        if group >= self.num_groups() {
            return Err(Error::invalid(format!(
                "group {group} out of range for {} groups",
                self.num_groups()
            )));
        }
        Ok(())
    }
}

impl Student for OracleStudent {
    fn train_on(&mut self, batch: &[BatchSample]) -> Result<Vec<SampleLoss>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for sample in batch {
            self.check_group(sample.group_id)?;
        }
        // Losses are emitted against the current skills, then skills move.
        let noise = Normal::new(0.0, self.params.noise_sigma.max(f64::MIN_POSITIVE))
            .expect("valid sigma");
        let losses: Vec<SampleLoss> = batch
            .iter()
            .map(|sample| {
                let base = self.expected_loss(sample.group_id);
                let eps = if self.params.noise_sigma == 0.0 {
                    0.0
                } else {
                    noise.sample(&mut self.rng)
                };
                let loss = (base + eps).max(0.0);
                SampleLoss {
                    group_id: sample.group_id,
                    is_synthetic: sample.is_synthetic,
                    per_joint: vec![loss; ORACLE_PSEUDO_JOINTS],
                }
            })
            .collect();

        let mut trained = vec![false; self.num_groups()];
        for sample in batch {
            trained[sample.group_id] = true;
        }
        for g in 0..self.num_groups() {
            if trained[g] {
                let d = self.params.difficulties[g];
                self.skills[g] =
                    (self.skills[g] + self.params.learning_rate * d * (1.0 - self.skills[g])).min(1.0);
            } else {
                self.skills[g] = (self.skills[g] - self.params.forgetting_rate).max(0.0);
            }
        }
        Ok(losses)
    }

    fn evaluate(&self, holdout: &[usize]) -> Result<f64> {
        if holdout.is_empty() {
            return Err(Error::invalid("empty holdout"));
        }
        let mut sum = 0.0;
        for &g in holdout {
            self.check_group(g)?;
            sum += self.expected_loss(g);
        }
        Ok(sum / holdout.len() as f64)
    }
}
