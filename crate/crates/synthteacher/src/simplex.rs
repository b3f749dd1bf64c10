//! Probability-simplex arithmetic over difficulty groups.
//!
//! Holds the teacher's output distribution type, the reward-driven
//! pseudo-ground-truth update, and the KL divergence used as the teacher's
//! training loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries of an updated distribution are clamped to at least this value
/// before renormalization, keeping KL targets finite.
pub const PROB_FLOOR: f64 = 1e-6;

/// Tolerance for the "entries sum to 1" invariant.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

/// Reward (+1) or penalty (-1) sign for the teacher update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSign {
    Reward,
    Penalty,
}

impl RewardSign {
    pub fn as_f64(self) -> f64 {
        match self {
            RewardSign::Reward => 1.0,
            RewardSign::Penalty => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            RewardSign::Reward => 1,
            RewardSign::Penalty => -1,
        }
    }
}

/// A point on the probability simplex over difficulty groups.
///
/// Invariants: every entry is finite and in `[0, 1]`, and the entries sum to
/// 1 within [`SIMPLEX_SUM_TOL`]. Serializes as a plain JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupDistribution {
    probs: Vec<f64>,
}

impl GroupDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution must be nonempty"));
        }
        let mut sum = 0.0;
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "probability {p} at index {k} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` groups.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("distribution must be nonempty"));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// All mass on group `selected`.
    pub fn one_hot(n: usize, selected: usize) -> Result<Self> {
        if selected >= n {
            return Err(Error::invalid(format!(
                "group {selected} out of range for {n} groups"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[selected] = 1.0;
        Ok(Self { probs })
    }

    /// Internal constructor for vectors known to be normalized (softmax
    /// outputs, clamp-renormalized updates).
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_SUM_TOL);
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for GroupDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        GroupDistribution::new(v)
    }
}

impl From<GroupDistribution> for Vec<f64> {
    fn from(d: GroupDistribution) -> Vec<f64> {
        d.probs
    }
}

/// Step size and direction for [`pseudo_gt_update`].
#[derive(Debug, Clone, Copy)]
pub struct UpdateParams {
    pub alpha: f64,
    pub delta: RewardSign,
}

impl UpdateParams {
    pub fn new(alpha: f64, delta: RewardSign) -> Result<Self> {
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha, delta })
    }
}

/// Raw pseudo-ground-truth update, before any clamping:
/// the selected entry moves by `delta * alpha * p[i]` and every other entry
/// absorbs an equal share of the opposite move. The result sums to the same
/// total as the input but may leave `[0, 1]`.
pub fn pseudo_gt_update_raw(
    p_tilde: &GroupDistribution,
    selected: usize,
    params: UpdateParams,
) -> Result<Vec<f64>> {
    let n = p_tilde.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 groups for an update"));
    }
    if selected >= n {
        return Err(Error::invalid(format!(
            "group {selected} out of range for {n} groups"
        )));
    }
    let step = params.delta.as_f64() * params.alpha * p_tilde.probs[selected];
    let share = step / (n - 1) as f64;
    let raw = p_tilde
        .probs
        .iter()
        .enumerate()
        .map(|(j, &p)| if j == selected { p + step } else { p - share })
        .collect();
    Ok(raw)
}

/// Clamp entries to `[PROB_FLOOR, 1]` and renormalize to sum 1.
pub fn clamp_renormalize(raw: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = raw.iter().map(|&p| p.clamp(PROB_FLOOR, 1.0)).collect();
    let sum: f64 = clamped.iter().sum();
    clamped.iter().map(|&p| p / sum).collect()
}

/// Pseudo-ground-truth update: move mass toward (reward) or away from
/// (penalty) the selected group, then clamp and renormalize so the result is
/// a valid distribution with strictly positive entries.
///
/// `alpha == 0` is the identity and returns the input unchanged.
pub fn pseudo_gt_update(
    p_tilde: &GroupDistribution,
    selected: usize,
    params: UpdateParams,
) -> Result<GroupDistribution> {
    if params.alpha == 0.0 {
        if selected >= p_tilde.len() {
            return Err(Error::invalid(format!(
                "group {selected} out of range for {} groups",
                p_tilde.len()
            )));
        }
        return Ok(p_tilde.clone());
    }
    let raw = pseudo_gt_update_raw(p_tilde, selected, params)?;
    Ok(GroupDistribution::from_normalized(clamp_renormalize(&raw)))
}

/// KL divergence `sum_k p_k * ln(p_k / q_k)` with the convention
/// `0 * ln(0 / q) = 0`. Requires `q_k > 0` wherever `p_k > 0`.
pub fn kl_divergence(p: &GroupDistribution, q: &GroupDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (k, (&pk, &qk)) in p.probs.iter().zip(q.probs.iter()).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk <= 0.0 {
            return Err(Error::invalid(format!(
                "target probability is 0 at index {k} where p > 0"
            )));
        }
        total += pk * (pk / qk).ln();
    }
    // Gibbs' inequality guarantees the true value is >= 0; rounding can leave
    // a tiny negative residue for p ~ q.
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> GroupDistribution {
        GroupDistribution::new(v.to_vec()).unwrap()
    }

    // Independent clamp-renormalize oracle used to check the update output.
    fn oracle_clamp_renorm(raw: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = raw
            .iter()
            .map(|&p| p.max(PROB_FLOOR).min(1.0))
            .collect();
        let s: f64 = out.iter().sum();
        for p in &mut out {
            *p /= s;
        }
        out
    }

    #[test]
    fn uniform_update_moves_selected_entry() {
        let p = GroupDistribution::uniform(10).unwrap();
        let params = UpdateParams::new(0.5, RewardSign::Reward).unwrap();
        let updated = pseudo_gt_update(&p, 3, params).unwrap();
        assert!((updated.probs()[3] - 0.15).abs() < 1e-9);
        let expected_other = 0.1 - 0.05 / 9.0;
        for (j, &pj) in updated.probs().iter().enumerate() {
            if j != 3 {
                assert!((pj - expected_other).abs() < 1e-9, "entry {j} = {pj}");
            }
        }
        assert!((updated.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_identity() {
        let p = dist(&[0.7, 0.0, 0.3]);
        let params = UpdateParams::new(0.0, RewardSign::Penalty).unwrap();
        let updated = pseudo_gt_update(&p, 1, params).unwrap();
        assert_eq!(updated.probs(), p.probs());
    }

    #[test]
    fn oversized_update_clamps_and_renormalizes() {
        let p = dist(&[0.9, 0.05, 0.05]);
        let params = UpdateParams::new(1.0, RewardSign::Reward).unwrap();
        let raw = pseudo_gt_update_raw(&p, 0, params).unwrap();
        assert!((raw[0] - 1.8).abs() < 1e-12);
        assert!((raw[1] - (-0.4)).abs() < 1e-12);

        let updated = pseudo_gt_update(&p, 0, params).unwrap();
        let expected = oracle_clamp_renorm(&raw);
        for (a, b) in updated.probs().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(updated.argmax(), 0);
        assert!((updated.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(updated.probs().iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn invalid_group_and_small_simplex_rejected() {
        let p = GroupDistribution::uniform(4).unwrap();
        let params = UpdateParams::new(0.1, RewardSign::Reward).unwrap();
        assert!(pseudo_gt_update(&p, 4, params).is_err());
        let tiny = GroupDistribution::uniform(1).unwrap();
        assert!(pseudo_gt_update(&tiny, 0, params).is_err());
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.5, 0.5]);
        assert!((kl_divergence(&p, &q).unwrap() - 2.0f64.ln()).abs() < 1e-12);
        assert!((kl_divergence(&p, &q).unwrap() - 0.693147).abs() < 1e-6);

        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.25, 0.75]);
        let expected = 0.5 * 3.0f64.ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((kl_divergence(&p, &q).unwrap() - 0.549306).abs() < 1e-6);
    }

    #[test]
    fn kl_errors() {
        let p = dist(&[0.5, 0.5]);
        let q3 = GroupDistribution::uniform(3).unwrap();
        assert!(kl_divergence(&p, &q3).is_err());
        // q = 0 where p > 0
        let q = dist(&[0.0, 1.0]);
        assert!(kl_divergence(&p, &q).is_err());
    }

    #[test]
    fn distribution_validation_rejects_bad_inputs() {
        assert!(GroupDistribution::new(vec![]).is_err());
        assert!(GroupDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(GroupDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(GroupDistribution::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn serializes_as_json_array() {
        let p = dist(&[0.25, 0.75]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.25,0.75]");
        let back: GroupDistribution = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<GroupDistribution>("[0.9,0.9]").is_err());
    }

    fn arb_simplex(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        (2..max_len).prop_flat_map(arb_simplex_of_len)
    }

    prop_compose! {
        // Random interior simplex point, occasionally sharpened so that
        // near-degenerate inputs are exercised too.
        fn arb_simplex_of_len(len: usize)
            (weights in prop::collection::vec(1e-3..1.0f64, len), sharpen in prop::bool::ANY)
            -> Vec<f64>
        {
            let mut w: Vec<f64> = weights;
            if sharpen {
                for x in &mut w { *x = x.powi(8); }
            }
            let s: f64 = w.iter().sum();
            let mut probs: Vec<f64> = w.iter().map(|x| x / s).collect();
            // Let the largest entry absorb the rounding residue so the
            // constructor tolerance always holds.
            let s2: f64 = probs.iter().sum();
            let mut largest = 0;
            for k in 1..probs.len() {
                if probs[k] > probs[largest] { largest = k; }
            }
            probs[largest] += 1.0 - s2;
            probs
        }
    }

    proptest! {
        #[test]
        fn raw_update_preserves_total_mass(
            probs in arb_simplex(12),
            selected_frac in 0.0..1.0f64,
            alpha in 0.0..=1.0f64,
            reward in prop::bool::ANY,
        ) {
            let p = GroupDistribution::new(probs).unwrap();
            let selected = ((selected_frac * p.len() as f64) as usize).min(p.len() - 1);
            let delta = if reward { RewardSign::Reward } else { RewardSign::Penalty };
            let raw = pseudo_gt_update_raw(&p, selected, UpdateParams::new(alpha, delta).unwrap()).unwrap();
            let before: f64 = p.probs().iter().sum();
            let after: f64 = raw.iter().sum();
            prop_assert!((before - after).abs() < 1e-12);
        }

        #[test]
        fn update_output_is_always_a_valid_distribution(
            probs in arb_simplex(12),
            selected_frac in 0.0..1.0f64,
            alpha in 0.0..=1.0f64,
            reward in prop::bool::ANY,
        ) {
            let p = GroupDistribution::new(probs).unwrap();
            let selected = ((selected_frac * p.len() as f64) as usize).min(p.len() - 1);
            let delta = if reward { RewardSign::Reward } else { RewardSign::Penalty };
            let updated = pseudo_gt_update(&p, selected, UpdateParams::new(alpha, delta).unwrap()).unwrap();
            prop_assert!(GroupDistribution::new(updated.probs().to_vec()).is_ok());
        }

        #[test]
        fn reward_increases_and_penalty_decreases_selected(
            probs in arb_simplex(12),
            selected_frac in 0.0..1.0f64,
            alpha in 0.01..=1.0f64,
        ) {
            let p = GroupDistribution::new(probs).unwrap();
            let selected = ((selected_frac * p.len() as f64) as usize).min(p.len() - 1);

            let up = pseudo_gt_update_raw(&p, selected, UpdateParams::new(alpha, RewardSign::Reward).unwrap()).unwrap();
            let down = pseudo_gt_update_raw(&p, selected, UpdateParams::new(alpha, RewardSign::Penalty).unwrap()).unwrap();
            if p.probs()[selected] > 0.0 {
                prop_assert!(up[selected] > p.probs()[selected]);
                prop_assert!(down[selected] < p.probs()[selected]);
            }
        }

        #[test]
        fn gibbs_inequality((p, q) in (2usize..10).prop_flat_map(|len| {
            (arb_simplex_of_len(len), arb_simplex_of_len(len))
        })) {
            let p = GroupDistribution::new(p).unwrap();
            let q = GroupDistribution::new(q).unwrap();
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            // Pinsker: KL <= 1e-9 forces the distributions close.
            if kl <= 1e-9 {
                let max_gap = p.probs().iter().zip(q.probs())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                prop_assert!(max_gap < 1e-4);
            }
        }
    }
}
