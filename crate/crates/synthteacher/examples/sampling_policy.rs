//! Epsilon-greedy group selection with latching and 50/50 batch drawing.
//!
//! ```bash
//! cargo run --example sampling_policy
//! ```

use synthteacher::sampler::{draw_batch, SamplingSchedule};
use synthteacher::simplex::GroupDistribution;
use synthteacher::Result;

fn main() -> Result<()> {
    // A distribution that strongly prefers group 2.
    let p_tilde = GroupDistribution::new(vec![0.05, 0.05, 0.7, 0.1, 0.1])?;

    // Selections latch for 5 steps; epsilon = 0.1 explores uniformly.
    let mut schedule = SamplingSchedule::new(0.1, 5, 42)?;
    println!("step-by-step latching (N = 5):");
    for step in 0..20 {
        let choice = schedule.choose_group(&p_tilde)?;
        println!(
            "  step {step:>2}: group {} {}{}",
            choice.group,
            if choice.reselected { "<- reselected" } else { "(latched)" },
            if choice.explored { " [exploration]" } else { "" },
        );
    }

    // Empirical selection frequencies over many fresh selections.
    let mut schedule = SamplingSchedule::new(0.1, 1, 43)?;
    let mut counts = [0u32; 5];
    let mut explored = 0u32;
    let draws = 100_000;
    for _ in 0..draws {
        let c = schedule.choose_group(&p_tilde)?;
        counts[c.group] += 1;
        if c.explored {
            explored += 1;
        }
    }
    println!("\nempirical frequencies over {draws} selections:");
    for (g, &c) in counts.iter().enumerate() {
        let expected = 0.9 * p_tilde.probs()[g] + 0.1 / 5.0;
        println!(
            "  group {g}: {:.4} (expected {:.4})",
            c as f64 / draws as f64,
            expected
        );
    }
    println!(
        "  exploration fraction {:.4} (epsilon 0.1)",
        explored as f64 / draws as f64
    );

    // Batches: real half from the whole pool, synthetic half from the
    // latched group only; an empty group triggers a logged fallback.
    let real_pool: Vec<usize> = (0..50).collect();
    let pools: Vec<Vec<usize>> = vec![
        (100..110).collect(),
        vec![], // group 1 has no samples
        (300..330).collect(),
        (400..404).collect(),
        vec![555],
    ];
    let mut schedule = SamplingSchedule::new(0.1, 3, 44)?;
    println!("\nbatch drawing (batch size 8):");
    for _ in 0..5 {
        let drawn = draw_batch(&mut schedule, &p_tilde, &real_pool, &pools, 8)?;
        println!(
            "  group {}{}: real {:?} synthetic {:?}",
            drawn.choice.group,
            if drawn.empty_group_fallback { " (empty-group fallback)" } else { "" },
            drawn.spec.real_sample_ids,
            drawn.spec.synthetic_sample_ids,
        );
    }
    Ok(())
}
