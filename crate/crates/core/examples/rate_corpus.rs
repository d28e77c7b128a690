//! Rates every bundled corpus puzzle on the whip ladder and prints the
//! cumulative distribution: `cargo run --release --example rate_corpus -- 7`

use std::time::Instant;

use csp_braids::sudoku::{build_csp, parse_grid};
use csp_braids::theory::{rate_unchecked, Ladder, Rating};

fn main() {
    let cap: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let text = include_str!("../data/corpus.txt");
    let mut hist = vec![0usize; cap + 2];
    let mut total = 0;
    let start = Instant::now();
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let csp = build_csp(&parse_grid(line).expect("corpus line parses"));
        let t = Instant::now();
        let r = rate_unchecked(&csp.instance, &csp.initial, Ladder::Whip, cap);
        let dt = t.elapsed();
        if dt.as_millis() > 500 {
            eprintln!("slow {r} {:?} {line}", dt);
        }
        match r {
            Rating::Level(n) => hist[n] += 1,
            Rating::AboveCap => hist[cap + 1] += 1,
        }
        total += 1;
    }
    let mut cum = 0;
    for (n, h) in hist.iter().enumerate().take(cap + 1) {
        cum += h;
        println!("L{n}: {h} cumulative {:.3}", cum as f64 / total as f64);
    }
    println!("above cap: {}", hist[cap + 1]);
    println!("elapsed {:?}", start.elapsed());
}
