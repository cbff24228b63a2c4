//! Similarity profiles for a held-out instruction under every strategy and
//! the blended initial weights they produce.
//!
//! ```bash
//! cargo run --example transfer_init
//! ```

use clip_transfer::align::AlignConfig;
use clip_transfer::embed::EmbeddingTable;
use clip_transfer::env::{optimal_expected_steps, GridSpec, Instruction};
use clip_transfer::harness::{align_bases, similarity_profile, target_init, train_base_policies, DEFAULT_BASE_INSTRUCTIONS};
use clip_transfer::policy::{train_policy, Architecture, TrainConfig};
use clip_transfer::transfer::Strategy;

fn main() -> clip_transfer::Result<()> {
    let n = 10;
    let tasks = DEFAULT_BASE_INSTRUCTIONS
        .iter()
        .map(|t| {
            let i = Instruction::new(t)?;
            let spec = GridSpec::for_instruction(&i.text, n)?;
            Ok((i, spec))
        })
        .collect::<clip_transfer::Result<Vec<_>>>()?;
    let bases = train_base_policies(&tasks, &TrainConfig::default(), 0)?;
    let table = EmbeddingTable::builtin(64);
    let (model, _, _) = align_bases(&bases, &table, &AlignConfig::default())?;

    let target = Instruction::new("top right third")?;
    let spec = GridSpec::for_instruction(&target.text, n)?;
    println!("target {:?} goal {} optimum {:.3}\n", target.text, spec.goal, optimal_expected_steps(&spec));

    for strategy in Strategy::ALL {
        let profile = similarity_profile(strategy, &target, &bases, &model, &table)?;
        if let Some(p) = &profile {
            println!("{strategy}:");
            for e in &p.entries {
                println!("  {:<18} raw {:+.3}  weight {:.3}", e.source.text, e.raw, e.normalized);
            }
        } else {
            println!("{strategy}: fresh random weights");
        }
        let init = target_init(profile.as_ref(), &bases, &Architecture::default(), 0, n, 0)?;
        let (_, curve) = train_policy(&spec, &TrainConfig { seed: 1, ..Default::default() }, Some(&init))?;
        println!("  -> converged in {} episodes, {} env steps\n", curve.episodes(), curve.env_steps());
    }
    Ok(())
}
