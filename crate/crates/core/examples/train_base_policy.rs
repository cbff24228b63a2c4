//! Trains one navigation policy with REINFORCE until its trailing mean
//! episode length is within 20% of optimal, then saves it.
//!
//! ```bash
//! cargo run --example train_base_policy -- "top left second" 10
//! ```

use clip_transfer::env::{optimal_expected_steps, GridSpec, Instruction};
use clip_transfer::policy::{load_policy, save_policy, train_policy, TrainConfig};

fn main() -> clip_transfer::Result<()> {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "top left second".into());
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let instruction = Instruction::new(&text)?;
    let spec = GridSpec::for_instruction(&instruction.text, n)?;
    let config = TrainConfig { seed: 7, ..Default::default() };
    let (policy, curve) = train_policy(&spec, &config, None)?;

    println!("task {:?} on {n}x{n}, goal {}", instruction.text, spec.goal);
    println!("optimal mean episode length {:.4}", optimal_expected_steps(&spec));
    for r in curve.records.iter().step_by((curve.episodes() / 10).max(1)) {
        println!("  episode {:>5}  steps {:>3}  return {:+.3}", r.episode, r.steps, r.ret);
    }
    println!(
        "converged={} after {} episodes / {} env steps; trailing mean {:.3}",
        curve.converged,
        curve.episodes(),
        curve.env_steps(),
        curve.trailing_mean_steps(curve.episodes(), config.convergence_window)
    );

    let path = std::env::temp_dir().join(format!("{}.policy", instruction.task_id));
    save_policy(&policy, &path)?;
    assert_eq!(load_policy(&path)?, policy);
    println!("saved {}", path.display());
    Ok(())
}
