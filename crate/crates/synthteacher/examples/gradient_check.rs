//! Verify the teacher network's analytic gradients against central finite
//! differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use rand::Rng;
use synthteacher::rng::seeded;
use synthteacher::simplex::GroupDistribution;
use synthteacher::teacher::TeacherNet;
use synthteacher::Result;

fn main() -> Result<()> {
    let mut rng = seeded(5, 0);
    let (input_dim, hidden_dim, num_groups) = (21, 32, 10);
    let net = TeacherNet::new(input_dim, hidden_dim, num_groups, 5)?;
    let state: Vec<f64> = (0..input_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let target = GroupDistribution::new({
        let mut w: Vec<f64> = (0..num_groups).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        for x in &mut w {
            *x /= s;
        }
        let fix: f64 = 1.0 - w.iter().sum::<f64>();
        w[0] += fix;
        w
    })?;

    let (loss, grads) = net.loss_and_gradients(&state, &target)?;
    println!(
        "net {input_dim} -> {hidden_dim} (tanh) -> {num_groups} (softmax), {} parameters",
        net.param_count()
    );
    println!("KL loss at the random point: {loss:.6}");

    let analytic: Vec<f64> = grads.iter().collect();
    let h = 1e-5;
    let flat = net.to_flat();
    let mut worst = 0.0f64;
    let mut worst_pair = (0.0, 0.0);
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let eval = |params: &[f64]| -> f64 {
            TeacherNet::from_flat(input_dim, hidden_dim, num_groups, params)
                .unwrap()
                .loss_and_gradients(&state, &target)
                .unwrap()
                .0
        };
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
        if rel > worst {
            worst = rel;
            worst_pair = (analytic[i], numeric);
        }
    }
    println!("worst relative error over all {} parameters: {worst:.3e}", flat.len());
    println!("  analytic {:.10}  numeric {:.10}", worst_pair.0, worst_pair.1);
    assert!(worst < 1e-4);
    println!("analytic gradients match finite differences (tolerance 1e-4)");
    Ok(())
}
