//! Optimal expected episode length three ways, plus the BFS distance table.
//!
//! ```bash
//! cargo run --example oracle_tables
//! ```

use clip_transfer::env::{optimal_expected_steps, GridSpec};
use clip_transfer::harness::oracle_report;

fn main() -> clip_transfer::Result<()> {
    let spec = GridSpec::for_instruction("top right third", 10)?;
    print!("{}", oracle_report(&spec)?);

    println!("\nN   goal col 0   goal col N-1");
    for n in 2..=10 {
        let left = optimal_expected_steps(&GridSpec::for_instruction("top left first", n)?);
        let right = optimal_expected_steps(&GridSpec::for_instruction("top right first", n)?);
        println!("{n:<3} {left:>10.6} {right:>14.6}");
    }
    Ok(())
}
