//! Hashed word + character-trigram embeddings and their cosine table.
//!
//! ```bash
//! cargo run --example encode_instructions
//! ```

use clip_transfer::embed::{cosine, encode, hashed_features};

fn main() -> clip_transfer::Result<()> {
    let texts = [
        "top left first",
        "top left second",
        "top right first",
        "top right second",
        "top right third",
        "go to the red cone",
    ];
    println!("features of {:?}: {:?}", texts[0], hashed_features(texts[0]));
    let vs = texts.iter().map(|t| encode(t)).collect::<clip_transfer::Result<Vec<_>>>()?;
    println!("dimension {}, norm {:.6}", vs[0].dim(), vs[0].norm());

    print!("\n{:<20}", "");
    for i in 0..texts.len() {
        print!("{i:>7}");
    }
    println!();
    for (i, a) in vs.iter().enumerate() {
        print!("{i} {:<18}", texts[i]);
        for b in &vs {
            print!("{:>7.3}", cosine(a, b)?);
        }
        println!();
    }
    Ok(())
}
