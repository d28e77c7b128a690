//! Rating rows and Table-1-style distributions.

use std::fmt::Write as _;

use csp_braids::sudoku::{build_csp, Grid};
use csp_braids::theory::{rate, rate_unchecked, Ladder, Rating, TheoryError};

pub const CSV_HEADER: &str = "puzzle,whip_rating,braid_rating,solved_by";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingRow {
    pub puzzle: String,
    pub whip: Rating,
    pub braid: Rating,
}

impl RatingRow {
    /// Weakest theory that solves the puzzle: `brt`, `L<n>`, `M<n>` when
    /// braids need fewer steps than whips, or `none` above the cap.
    pub fn solved_by(&self) -> String {
        match (self.whip, self.braid) {
            (Rating::Level(0), _) => "brt".into(),
            (Rating::Level(w), Rating::Level(b)) if b < w => format!("M{b}"),
            (Rating::Level(w), _) => format!("L{w}"),
            (Rating::AboveCap, Rating::Level(b)) => format!("M{b}"),
            (Rating::AboveCap, Rating::AboveCap) => "none".into(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.puzzle,
            self.whip,
            self.braid,
            self.solved_by()
        )
    }
}

/// Whip and braid ratings of one puzzle, both capped at `cap`.
pub fn rate_puzzle(grid: &Grid, cap: usize) -> Result<RatingRow, TheoryError> {
    let csp = build_csp(grid);
    let whip = rate(&csp.instance, &csp.initial, Ladder::Whip, cap)?;
    let braid = rate_unchecked(&csp.instance, &csp.initial, Ladder::Braid, cap);
    Ok(RatingRow {
        puzzle: grid.to_line(),
        whip,
        braid,
    })
}

/// Puzzles newly solved at each level (index 0 = BRT) and cumulatively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchReport {
    pub max_n: usize,
    pub newly: Vec<usize>,
    pub unsolved: usize,
    pub total: usize,
}

impl BatchReport {
    /// Ratings above `max_n` count as unsolved.
    pub fn from_ratings(ratings: &[Rating], max_n: usize) -> Self {
        let mut newly = vec![0; max_n + 1];
        let mut unsolved = 0;
        for r in ratings {
            match *r {
                Rating::Level(n) if n <= max_n => newly[n] += 1,
                _ => unsolved += 1,
            }
        }
        BatchReport {
            max_n,
            newly,
            unsolved,
            total: ratings.len(),
        }
    }

    pub fn cumulative(&self, n: usize) -> usize {
        self.newly[..=n.min(self.max_n)].iter().sum()
    }

    pub fn fraction(&self, n: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.cumulative(n) as f64 / self.total as f64
    }

    /// Arithmetic invariants linking the rows.
    pub fn check(&self) -> Result<(), String> {
        let mut prev = 0;
        for n in 0..=self.max_n {
            let c = self.cumulative(n);
            let expect = if n == 0 {
                self.newly[0]
            } else {
                prev + self.newly[n]
            };
            if c != expect || c < prev {
                return Err(format!("cumulative row broken at level {n}"));
            }
            prev = c;
        }
        if prev + self.unsolved != self.total {
            return Err(format!(
                "{prev} solved + {} unsolved != {} total",
                self.unsolved, self.total
            ));
        }
        Ok(())
    }

    fn label(n: usize) -> String {
        if n == 0 {
            "BRT".into()
        } else {
            format!("L{n}")
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "theory");
        for n in 0..=self.max_n {
            let _ = write!(out, "{:>7}", Self::label(n));
        }
        let _ = writeln!(out, "{:>10}", "unsolved");
        let _ = write!(out, "{:<12}", "newly");
        for n in 0..=self.max_n {
            let _ = write!(out, "{:>7}", self.newly[n]);
        }
        let _ = writeln!(out, "{:>10}", self.unsolved);
        let _ = write!(out, "{:<12}", "cumulative");
        for n in 0..=self.max_n {
            let _ = write!(out, "{:>7}", self.cumulative(n));
        }
        let _ = writeln!(out, "{:>10}", self.total);
        let _ = write!(out, "{:<12}", "fraction");
        for n in 0..=self.max_n {
            let _ = write!(out, "{:>7.4}", self.fraction(n));
        }
        let _ = writeln!(out);
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("theory,newly,cumulative,fraction\n");
        for n in 0..=self.max_n {
            let _ = writeln!(
                out,
                "{},{},{},{:.4}",
                Self::label(n),
                self.newly[n],
                self.cumulative(n),
                self.fraction(n)
            );
        }
        let _ = writeln!(out, "unsolved,{},{},", self.unsolved, self.total);
        out
    }
}
