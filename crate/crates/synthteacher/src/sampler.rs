//! Batch sampling: epsilon-greedy group selection latched for N steps, and
//! 50/50 real/synthetic batch composition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::simplex::GroupDistribution;

/// Position of a sample in the caller's pool.
pub type SampleId = usize;

/// Group selection policy state. One `choose_group` call corresponds to one
/// training step; a fresh group is drawn every `steps_per_group` calls.
#[derive(Debug, Clone)]
pub struct SamplingSchedule {
    epsilon: f64,
    steps_per_group: usize,
    rng: ChaCha8Rng,
    latched: Option<Latch>,
}

#[derive(Debug, Clone, Copy)]
struct Latch {
    group: usize,
    explored: bool,
    steps_remaining: usize,
}

/// Outcome of one per-step group decision.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupChoice {
    pub group: usize,
    /// True when this step drew a fresh group rather than reusing the latch.
    pub reselected: bool,
    /// True when the active group came from the uniform exploration branch.
    pub explored: bool,
}

/// Batch composition: equally many real and synthetic sample ids.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub real_sample_ids: Vec<SampleId>,
    pub synthetic_sample_ids: Vec<SampleId>,
}

/// A drawn batch plus the group decision that produced it.
#[derive(Debug, Clone)]
pub struct DrawnBatch {
    pub spec: BatchSpec,
    pub choice: GroupChoice,
    /// Set when the latched group had no samples and a fresh group had to be
    /// drawn from the nonempty ones.
    pub empty_group_fallback: bool,
}

impl SamplingSchedule {
    pub fn new(epsilon: f64, steps_per_group: usize, seed: u64) -> Result<Self> {
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if steps_per_group == 0 {
            return Err(Error::invalid("steps_per_group must be positive"));
        }
        Ok(Self {
            epsilon,
            steps_per_group,
            rng: rng::seeded(seed, rng::stream::SAMPLER),
            latched: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn current_group(&self) -> Option<usize> {
        self.latched.map(|l| l.group)
    }

    fn draw_uniform(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Inverse-CDF draw from the teacher's distribution.
    fn draw_weighted(&mut self, p: &GroupDistribution) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (k, &pk) in p.probs().iter().enumerate() {
            acc += pk;
            if u < acc {
                return k;
            }
        }
        p.len() - 1
    }

    fn select(&mut self, p_tilde: &GroupDistribution) -> (usize, bool) {
        let explore = self.rng.random::<f64>() < self.epsilon;
        let group = if explore {
            self.draw_uniform(p_tilde.len())
        } else {
            self.draw_weighted(p_tilde)
        };
        (group, explore)
    }

    /// Group for the current step. With probability epsilon a re-selection
    /// draws a uniform random group, otherwise a draw from `p_tilde`; either
    /// way the choice is then held for `steps_per_group` steps.
    pub fn choose_group(&mut self, p_tilde: &GroupDistribution) -> Result<GroupChoice> {
        if p_tilde.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if let Some(latch) = &mut self.latched {
            if latch.steps_remaining > 0 {
                latch.steps_remaining -= 1;
                return Ok(GroupChoice {
                    group: latch.group,
                    reselected: false,
                    explored: latch.explored,
                });
            }
        }
        let (group, explored) = self.select(p_tilde);
        self.latched = Some(Latch {
            group,
            explored,
            steps_remaining: self.steps_per_group - 1,
        });
        Ok(GroupChoice {
            group,
            reselected: true,
            explored,
        })
    }

    /// Replace the latch with a uniform draw over the given groups (used
    /// when the latched group turns out to be empty). Keeps the current
    /// latch countdown.
    fn redraw_from(&mut self, candidates: &[usize]) -> usize {
        let pick = candidates[self.draw_uniform(candidates.len())];
        if let Some(latch) = &mut self.latched {
            latch.group = pick;
            latch.explored = true;
        }
        pick
    }
}

/// Draw one batch: the real half uniformly from the whole real pool and the
/// synthetic half uniformly (with replacement) from the latched group only.
///
/// An empty latched group triggers an immediate uniform re-draw over the
/// nonempty groups, reported via `empty_group_fallback`.
pub fn draw_batch(
    schedule: &mut SamplingSchedule,
    p_tilde: &GroupDistribution,
    real_pool: &[SampleId],
    synthetic_pool_by_group: &[Vec<SampleId>],
    batch_size: usize,
) -> Result<DrawnBatch> {
    if batch_size == 0 || !batch_size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "batch_size must be even and positive, got {batch_size}"
        )));
    }
    if real_pool.is_empty() {
        return Err(Error::invalid("real pool is empty"));
    }
    if synthetic_pool_by_group.len() != p_tilde.len() {
        return Err(Error::invalid(format!(
            "{} synthetic pools for {} groups",
            synthetic_pool_by_group.len(),
            p_tilde.len()
        )));
    }
    let mut choice = schedule.choose_group(p_tilde)?;
    let mut fallback = false;
    if synthetic_pool_by_group[choice.group].is_empty() {
        let nonempty: Vec<usize> = (0..synthetic_pool_by_group.len())
            .filter(|&g| !synthetic_pool_by_group[g].is_empty())
            .collect();
        if nonempty.is_empty() {
            return Err(Error::invalid("all synthetic groups are empty"));
        }
        choice.group = schedule.redraw_from(&nonempty);
        choice.explored = true;
        fallback = true;
    }

    let half = batch_size / 2;
    let real_sample_ids: Vec<SampleId> = (0..half)
        .map(|_| real_pool[schedule.rng.random_range(0..real_pool.len())])
        .collect();
    let group_pool = &synthetic_pool_by_group[choice.group];
    let synthetic_sample_ids: Vec<SampleId> = (0..half)
        .map(|_| group_pool[schedule.rng.random_range(0..group_pool.len())])
        .collect();

    Ok(DrawnBatch {
        spec: BatchSpec {
            batch_size,
            real_sample_ids,
            synthetic_sample_ids,
        },
        choice,
        empty_group_fallback: fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(epsilon: f64, n: usize, seed: u64) -> SamplingSchedule {
        SamplingSchedule::new(epsilon, n, seed).unwrap()
    }

    #[test]
    fn pure_exploration_is_uniform() {
        let mut s = fresh(1.0, 1, 0);
        let p = GroupDistribution::one_hot(10, 0).unwrap();
        let mut counts = [0u32; 10];
        let draws = 100_000;
        for _ in 0..draws {
            counts[s.choose_group(&p).unwrap().group] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn zero_epsilon_follows_one_hot() {
        let mut s = fresh(0.0, 1, 1);
        let p = GroupDistribution::one_hot(10, 4).unwrap();
        for _ in 0..1000 {
            assert_eq!(s.choose_group(&p).unwrap().group, 4);
        }
    }

    #[test]
    fn mixture_probability_matches_closed_form() {
        // P(group 0) = (1 - eps) + eps / |g| = 0.91 for one-hot p_tilde.
        let mut s = fresh(0.1, 1, 2);
        let p = GroupDistribution::one_hot(10, 0).unwrap();
        let draws = 100_000u32;
        let mut hits = 0u32;
        for _ in 0..draws {
            if s.choose_group(&p).unwrap().group == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        let sigma = (0.91 * 0.09 / draws as f64).sqrt();
        assert!(
            (freq - 0.91).abs() < 3.0 * sigma,
            "frequency {freq}, band +-{}",
            3.0 * sigma
        );
    }

    #[test]
    fn latch_holds_for_exactly_n_steps() {
        let mut s = fresh(0.5, 7, 3);
        let p = GroupDistribution::uniform(6).unwrap();
        let mut reselect_gaps = Vec::new();
        let mut last_reselect = None;
        for step in 0..70 {
            let c = s.choose_group(&p).unwrap();
            if c.reselected {
                if let Some(prev) = last_reselect {
                    reselect_gaps.push(step - prev);
                }
                last_reselect = Some(step);
            }
        }
        assert!(reselect_gaps.iter().all(|&g| g == 7), "{reselect_gaps:?}");
    }

    #[test]
    fn batches_are_half_real_half_synthetic() {
        let mut s = fresh(0.1, 5, 4);
        let p = GroupDistribution::uniform(3).unwrap();
        let real: Vec<SampleId> = (0..50).collect();
        let pools: Vec<Vec<SampleId>> = vec![(100..120).collect(), (200..230).collect(), (300..301).collect()];
        for _ in 0..200 {
            let b = draw_batch(&mut s, &p, &real, &pools, 8).unwrap();
            assert_eq!(b.spec.real_sample_ids.len(), 4);
            assert_eq!(b.spec.synthetic_sample_ids.len(), 4);
            let g = b.choice.group;
            assert!(b.spec.synthetic_sample_ids.iter().all(|id| pools[g].contains(id)));
            assert!(b.spec.real_sample_ids.iter().all(|id| *id < 50));
        }
    }

    #[test]
    fn single_sample_group_repeats() {
        let mut s = fresh(0.0, 1, 5);
        let p = GroupDistribution::one_hot(2, 1).unwrap();
        let real: Vec<SampleId> = (0..10).collect();
        let pools: Vec<Vec<SampleId>> = vec![vec![7, 8], vec![42]];
        let b = draw_batch(&mut s, &p, &real, &pools, 8).unwrap();
        assert_eq!(b.spec.synthetic_sample_ids, vec![42, 42, 42, 42]);
    }

    #[test]
    fn empty_group_falls_back_to_nonempty() {
        let mut s = fresh(0.0, 10, 6);
        let p = GroupDistribution::one_hot(3, 1).unwrap();
        let real: Vec<SampleId> = vec![0];
        let pools: Vec<Vec<SampleId>> = vec![vec![5], vec![], vec![9]];
        let b = draw_batch(&mut s, &p, &real, &pools, 4).unwrap();
        assert!(b.empty_group_fallback);
        assert!(b.choice.group == 0 || b.choice.group == 2);

        let all_empty: Vec<Vec<SampleId>> = vec![vec![], vec![], vec![]];
        assert!(draw_batch(&mut s, &p, &real, &all_empty, 4).is_err());
    }

    #[test]
    fn odd_batch_size_rejected() {
        let mut s = fresh(0.1, 1, 7);
        let p = GroupDistribution::uniform(2).unwrap();
        assert!(draw_batch(&mut s, &p, &[0], &[vec![0], vec![1]], 7).is_err());
        assert!(draw_batch(&mut s, &p, &[], &[vec![0], vec![1]], 4).is_err());
    }

    #[test]
    fn within_group_draws_are_uniform() {
        // Chi-square goodness of fit over a 10-sample group;
        // chi2 critical value for df=9 at p=0.01 is 21.666.
        let mut s = fresh(0.0, 1, 8);
        let p = GroupDistribution::one_hot(2, 0).unwrap();
        let real: Vec<SampleId> = vec![0];
        let pools: Vec<Vec<SampleId>> = vec![(0..10).collect(), vec![99]];
        let batches = 10_000;
        let mut counts = [0u64; 10];
        for _ in 0..batches {
            let b = draw_batch(&mut s, &p, &real, &pools, 8).unwrap();
            for id in b.spec.synthetic_sample_ids {
                counts[id] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 21.666, "chi-square {chi2}");
    }

    #[test]
    fn fixed_seed_reproduces_batch_sequence() {
        let run = || {
            let mut s = fresh(0.3, 4, 12);
            let p = GroupDistribution::uniform(4).unwrap();
            let real: Vec<SampleId> = (0..20).collect();
            let pools: Vec<Vec<SampleId>> =
                (0..4).map(|g| (g * 100..g * 100 + 10).collect()).collect();
            let mut ids = Vec::new();
            for _ in 0..100 {
                let b = draw_batch(&mut s, &p, &real, &pools, 6).unwrap();
                ids.push((b.spec.real_sample_ids, b.spec.synthetic_sample_ids));
            }
            ids
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_schedule_parameters() {
        assert!(SamplingSchedule::new(-0.1, 1, 0).is_err());
        assert!(SamplingSchedule::new(1.1, 1, 0).is_err());
        assert!(SamplingSchedule::new(0.5, 0, 0).is_err());
    }
}
