//! Regenerates the bundled corpus: `cargo run --release --example gen_corpus -- 500 > data/corpus.txt`

use csp_braids::sudoku::{generate_minimal, is_minimal};

fn main() {
    let count: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(500);
    println!("# minimal puzzles from generate_minimal(seed), seeds 1..={count}");
    for seed in 1..=count {
        let g = generate_minimal(seed);
        assert!(is_minimal(&g), "seed {seed} produced a non-minimal grid");
        println!("{}", g.to_line());
    }
}
