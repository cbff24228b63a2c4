//! Does alignment make "red cone" look more like "red box" than "blue cone"?
//! Trains one policy per object on the color/shape board and compares raw
//! against projected instruction similarity.
//!
//! ```bash
//! cargo run --example objectgrid_probe -- 3
//! ```

use clip_transfer::harness::{run_objectgrid_probe, ExperimentConfig};

fn main() -> clip_transfer::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = ExperimentConfig {
        seed,
        out_dir: std::env::temp_dir().join("clip-transfer-probe"),
        ..Default::default()
    };
    let report = run_objectgrid_probe(&config, &mut |_| {})?;
    print!("{}", report.summary());

    let names: Vec<&str> = report.instructions.iter().map(|i| i.text.trim_start_matches("go to the ")).collect();
    println!("\nprojected cosines");
    for (name, row) in names.iter().zip(&report.projected) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.2}")).collect();
        println!("{name:<11} {}", cells.join(" "));
    }
    Ok(())
}
