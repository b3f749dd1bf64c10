//! Reward sign for the teacher, derived from recent synthetic-batch losses.
//!
//! The teacher is rewarded when the current synthetic mean-loss-per-joint
//! meets or exceeds the mean of the last `H` such losses, and penalized
//! otherwise. Comparison happens before the current loss enters the window.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::RewardSign;

/// Ring buffer of the last `H` synthetic mean-loss-per-joint values.
#[derive(Debug, Clone)]
pub struct LossHistory {
    window: VecDeque<f64>,
    capacity: usize,
    seen: u64,
}

/// One reward decision.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RewardSignal {
    pub delta: RewardSign,
    pub triggering_loss: f64,
    pub window_mean: f64,
}

impl LossHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("history window must hold at least 1 value"));
        }
        Ok(Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
            seen: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of values ever pushed.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Mean over the retained window, in chronological order. `None` before
    /// the first push.
    ///
    /// Computed relative to the oldest entry so that a window of identical
    /// values yields that value exactly and the equality branch of the
    /// reward comparison is reliable.
    pub fn mean(&self) -> Option<f64> {
        let &first = self.window.front()?;
        let shifted: f64 = self.window.iter().map(|v| v - first).sum();
        Some(first + shifted / self.window.len() as f64)
    }

    fn push(&mut self, loss: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(loss);
        self.seen += 1;
    }

    /// Compare `current_loss` against the window mean, then push it.
    ///
    /// During warm-up the mean runs over however many values exist; before
    /// the first push the mean is taken as 0, which makes the first decision
    /// a reward (losses are nonnegative).
    pub fn evaluate_reward(&mut self, current_loss: f64) -> Result<RewardSignal> {
        if !current_loss.is_finite() {
            return Err(Error::invalid("current loss is not finite"));
        }
        if current_loss < 0.0 {
            return Err(Error::invalid(format!(
                "loss must be nonnegative, got {current_loss}"
            )));
        }
        let window_mean = self.mean().unwrap_or(0.0);
        let delta = if current_loss >= window_mean {
            RewardSign::Reward
        } else {
            RewardSign::Penalty
        };
        self.push(current_loss);
        Ok(RewardSignal {
            delta,
            triggering_loss: current_loss,
            window_mean,
        })
    }
}

/// Mean loss over the joints whose `counted` flag is set. Joints excluded by
/// loss masking simply do not participate.
pub fn mean_loss_per_joint(per_joint_losses: &[(f64, bool)]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(loss, counted) in per_joint_losses {
        if !loss.is_finite() {
            return Err(Error::invalid("joint loss is not finite"));
        }
        if counted {
            sum += loss;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("no counted joints"));
    }
    Ok(sum / count as f64)
}
