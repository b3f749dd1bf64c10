//! The reward sign and the pseudo-ground-truth update, step by step.
//!
//! Feeds a hand-written loss sequence through the windowed reward rule and
//! applies the resulting updates to a distribution, printing every move.
//!
//! ```bash
//! cargo run --example reward_dynamics
//! ```

use synthteacher::reward::LossHistory;
use synthteacher::simplex::{pseudo_gt_update, GroupDistribution, UpdateParams};
use synthteacher::Result;

fn main() -> Result<()> {
    // Losses observed for the selected group: rising, then collapsing.
    let losses = [0.30, 0.35, 0.42, 0.45, 0.44, 0.10, 0.08, 0.09, 0.07, 0.08];
    let selected = 2;
    let mut history = LossHistory::new(4)?;
    let mut p = GroupDistribution::uniform(5)?;

    println!("window H = 4, alpha = 0.25, selected group = {selected}\n");
    println!("{:>4} {:>6} {:>10} {:>6} {:>40}", "step", "loss", "win-mean", "delta", "distribution");
    for (step, &loss) in losses.iter().enumerate() {
        let signal = history.evaluate_reward(loss)?;
        p = pseudo_gt_update(&p, selected, UpdateParams::new(0.25, signal.delta)?)?;
        println!(
            "{step:>4} {loss:>6.2} {:>10.4} {:>6} {:>40}",
            signal.window_mean,
            format!("{:+}", signal.delta.as_i8()),
            format!(
                "[{}]",
                p.probs()
                    .iter()
                    .map(|x| format!("{x:.3}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
    }

    println!(
        "\nwhile the loss keeps rising the selected group gains mass; once the\n\
         student masters it (loss collapses below the window mean) the mass is\n\
         released back to the other groups"
    );
    Ok(())
}
