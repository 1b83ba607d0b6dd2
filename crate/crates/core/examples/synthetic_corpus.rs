//! Writes the four-class synthetic texture corpus as `.lpvol` files.
//!
//! `cargo run --release -p lp2dh-core --example synthetic_corpus -- OUT [PER_CLASS] [SIDE] [SIGMA] [SEED]`

use std::path::PathBuf;

use lp2dh_core::corpus::{synthetic_corpus, write_corpus};

fn main() -> lp2dh_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first().map(PathBuf::from) else {
        eprintln!("usage: synthetic_corpus OUT [PER_CLASS] [SIDE] [SIGMA] [SEED]");
        std::process::exit(2);
    };
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_owned());
    let per_class: usize = arg(1, "20").parse().expect("PER_CLASS must be an integer");
    let side: usize = arg(2, "40").parse().expect("SIDE must be an integer");
    let sigma: f64 = arg(3, "10").parse().expect("SIGMA must be a number");
    let seed: u64 = arg(4, "1").parse().expect("SEED must be an integer");
    let dataset = synthetic_corpus(per_class, (side, side, side), sigma, seed)?;
    write_corpus(&dataset, &out)?;
    println!("{} videos written to {}", dataset.len(), out.display());
    Ok(())
}
