//! The full protocol on a small configuration. Artifacts land in
//! `$TMPDIR/clip-transfer-example`.
//!
//! ```bash
//! cargo run --example run_experiment
//! ```

use clip_transfer::harness::{run_experiment, ExperimentConfig};

fn main() -> clip_transfer::Result<()> {
    let config = ExperimentConfig::from_toml(
        r#"
        grid_sizes = [8]
        trials = 3
        [align]
        epochs = 1000
        "#,
    )?;
    let config = ExperimentConfig { out_dir: std::env::temp_dir().join("clip-transfer-example"), ..config };
    let report = run_experiment(&config, &mut |line| eprintln!("{line}"))?;
    for c in report.cells() {
        println!(
            "{:<16} median env steps {:>8}  converged {:.0}%",
            c.strategy.name(),
            c.median_env_steps,
            100.0 * c.convergence_rate
        );
    }
    println!("artifacts in {}", config.out_dir.display());
    Ok(())
}
