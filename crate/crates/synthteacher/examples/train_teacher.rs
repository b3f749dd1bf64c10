//! Train the adversarial teacher against the oracle student and compare it
//! with uniform sampling on the same seed.
//!
//! One group is ten times harder than the rest; watch the teacher's
//! sampling distribution concentrate on it.
//!
//! ```bash
//! cargo run --release --example train_teacher
//! ```

use synthteacher::config::{RunConfig, RunMode};
use synthteacher::runner::run_train;
use synthteacher::Result;

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("synthteacher_train_example");
    let hard_group = 6;
    let mut difficulties = vec![0.1; 10];
    difficulties[hard_group] = 1.0;

    let mut config = RunConfig::default();
    config.seed = 11;
    config.total_steps = 5000;
    config.out_dir = out.join("teacher");
    config.oracle.params.difficulties = difficulties.clone();
    config.eval.eval_scenes = 10;

    let teacher = run_train(&config)?;
    println!("teacher mode:");
    for record in teacher.steps.iter().step_by(1000) {
        println!(
            "  step {:>4}: p[hard] = {:.3}, synthetic loss {:.3}, delta {:+}",
            record.step, record.p_tilde[hard_group], record.loss_synthetic, record.delta
        );
    }
    let summary = &teacher.summary;
    println!(
        "  final 500 steps: mean p[hard] = {:.3} (uniform would be 0.100)",
        summary.mean_p_tilde_tail[hard_group]
    );
    println!(
        "  weighted final loss {:.4}, skills {:?}",
        summary.weighted_final_loss,
        summary
            .final_skills
            .iter()
            .map(|s| (s * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );

    let mut uniform_config = config.clone();
    uniform_config.mode = RunMode::Uniform;
    uniform_config.out_dir = out.join("uniform");
    let uniform = run_train(&uniform_config)?;
    println!(
        "uniform mode: weighted final loss {:.4}",
        uniform.summary.weighted_final_loss
    );
    println!(
        "teacher improves the difficulty-weighted loss by {:.1}%",
        (1.0 - summary.weighted_final_loss / uniform.summary.weighted_final_loss) * 100.0
    );
    println!(
        "occlusion-binned report (teacher run): overall {:.3}",
        teacher.eval_report.overall_mean
    );
    println!("artifacts in {}", out.display());
    Ok(())
}
