//! Trains four base policies, then fits the two projection heads so each
//! instruction retrieves its own policy.
//!
//! ```bash
//! cargo run --example align_pairs
//! ```

use clip_transfer::align::AlignConfig;
use clip_transfer::embed::EmbeddingTable;
use clip_transfer::env::{GridSpec, Instruction};
use clip_transfer::harness::{align_bases, train_base_policies, DEFAULT_BASE_INSTRUCTIONS};
use clip_transfer::policy::TrainConfig;

fn main() -> clip_transfer::Result<()> {
    let n = 8;
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

    let (model, trace, s) = align_bases(&bases, &table, &AlignConfig::default())?;
    for epoch in [0, 10, 100, 500, trace.len() - 1] {
        println!("epoch {epoch:>4}  loss {:.6}", trace[epoch]);
    }
    println!("\nsimilarity (rows: instructions, columns: policies), K = {}", model.k());
    for (inst, row) in bases.instructions.iter().zip(s.rows()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.3}")).collect();
        println!("{:<18} {}", inst.text, cells.join("  "));
    }
    println!("each instruction retrieves its own policy: {}", s.diagonal_argmax());
    Ok(())
}
