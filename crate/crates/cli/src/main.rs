use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use csp_braids::sudoku::{
    build_csp, generate_minimal, grid_from_state, parse_grid, Grid, BUNDLED_CORPUS,
};
use csp_braids::te::{braid_from_trace, te_solve};
use csp_braids::theory::{solve, ResolutionTheory, SolveStatus, Strategy};
use csp_braids_cli::campaign::{self, CampaignReport};
use csp_braids_cli::report::{rate_puzzle, BatchReport, CSV_HEADER};
use csp_braids_cli::{bundled_corpus, parse_corpus, read_corpus};

const EXIT_STUCK: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(
    name = "braids",
    version,
    about = "Pattern-based CSP resolution: chains, whips and braids on Sudoku"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CampaignName {
    Soundness,
    TeEquivalence,
    BraidSolve,
    Confluence,
    Stability,
    #[value(name = "m1-l1")]
    M1L1,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one puzzle and print the resolution path.
    Solve {
        /// 81-character grid, digits for givens and `.` or `0` for blanks.
        puzzle: String,
        /// brt, L<n>, M<n>, Linf or Minf.
        #[arg(long, default_value = "Minf")]
        theory: ResolutionTheory,
        /// e.g. `order=zt-whip>zt-braid,seed=7,shortest=on`.
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Whip and braid ratings, one CSV row per puzzle.
    Rate {
        /// Puzzle file; the bundled corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Single puzzle instead of a file.
        #[arg(long, conflicts_with = "corpus")]
        puzzle: Option<String>,
        #[arg(long, default_value_t = 7)]
        cap: usize,
    },
    /// Distribution of whip ratings over a corpus.
    Table1 {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        max_len: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run a verification campaign over a corpus.
    Verify {
        #[arg(value_enum)]
        campaign: CampaignName,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Use only the first N puzzles.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Stability checks to draw.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Generate minimal puzzles, one per line.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Solve with Trial-and-Error and print the braid behind each elimination.
    Te {
        puzzle: String,
        /// Theory run inside each probe.
        #[arg(long, default_value = "brt")]
        theory: ResolutionTheory,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn puzzle(text: &str) -> Result<Grid> {
    parse_grid(text).with_context(|| format!("bad puzzle {text:?}"))
}

fn corpus(path: Option<&PathBuf>) -> Result<Vec<Grid>> {
    let Some(path) = path else {
        return Ok(bundled_corpus());
    };
    let entries = read_corpus(path).with_context(|| format!("reading {}", path.display()))?;
    entries
        .into_iter()
        .map(|e| {
            e.grid
                .with_context(|| format!("{}:{}: bad puzzle", path.display(), e.line))
        })
        .collect()
}

fn run(cli: Cli) -> Result<u8> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Solve {
            puzzle: text,
            theory,
            strategy,
        } => {
            let g = puzzle(&text)?;
            let csp = build_csp(&g);
            let path = solve(
                &csp.instance,
                &csp.initial,
                &theory,
                &strategy.unwrap_or_default(),
            );
            write!(out, "{}", path.render(&csp.instance))?;
            let status = path.status();
            let code = match status {
                SolveStatus::Solved => 0,
                SolveStatus::Stuck => EXIT_STUCK,
                SolveStatus::Contradiction => EXIT_VIOLATION,
            };
            writeln!(out, "status {}", format!("{status:?}").to_lowercase())?;
            writeln!(out, "{}", grid_from_state(&path.final_state).to_line())?;
            Ok(code)
        }
        Command::Rate {
            corpus: file,
            puzzle: one,
            cap,
        } => {
            let entries = match (one, file) {
                (Some(text), _) => parse_corpus(&text),
                (None, Some(path)) => {
                    read_corpus(&path).with_context(|| format!("reading {}", path.display()))?
                }
                (None, None) => parse_corpus(BUNDLED_CORPUS),
            };
            let mut skipped = 0;
            let grids: Vec<Grid> = entries
                .into_iter()
                .filter_map(|e| match e.grid {
                    Ok(g) => Some(g),
                    Err(err) => {
                        eprintln!("line {}: {err}; skipped", e.line);
                        skipped += 1;
                        None
                    }
                })
                .collect();
            let rows = csp_braids_cli::par_map(&grids, |g| rate_puzzle(g, cap));
            writeln!(out, "{CSV_HEADER}")?;
            for (g, row) in grids.iter().zip(rows) {
                match row {
                    Ok(row) => writeln!(out, "{}", row.to_csv())?,
                    Err(err) => {
                        eprintln!("{}: {err}; skipped", g.to_line());
                        skipped += 1;
                    }
                }
            }
            Ok(if skipped == 0 { 0 } else { EXIT_DATA })
        }
        Command::Table1 {
            corpus: file,
            max_len,
            format,
        } => {
            let grids = corpus(file.as_ref())?;
            let report =
                BatchReport::from_ratings(&campaign::whip_ratings(&grids, max_len), max_len);
            if let Err(e) = report.check() {
                bail!("inconsistent table: {e}");
            }
            match format {
                Format::Text => write!(out, "{}", report.render_text())?,
                Format::Csv => write!(out, "{}", report.render_csv())?,
            }
            Ok(0)
        }
        Command::Verify {
            campaign: which,
            corpus: file,
            limit,
            max_len,
            seed,
            count,
        } => {
            let mut grids = corpus(file.as_ref())?;
            if let Some(n) = limit {
                grids.truncate(n);
            }
            let all = matches!(which, CampaignName::All);
            let mut reports: Vec<CampaignReport> = Vec::new();
            let wants = |c: CampaignName| {
                all || std::mem::discriminant(&c) == std::mem::discriminant(&which)
            };
            if wants(CampaignName::Soundness) {
                reports.push(campaign::soundness(&grids, max_len));
            }
            if wants(CampaignName::TeEquivalence) {
                reports.push(campaign::te_equivalence(&grids));
            }
            if wants(CampaignName::BraidSolve) {
                reports.push(campaign::braid_solve(&grids));
            }
            if wants(CampaignName::Confluence) {
                let levels: Vec<usize> = (1..=max_len).collect();
                reports.push(campaign::confluence(&grids, &levels, 5, seed));
            }
            if wants(CampaignName::Stability) {
                reports.push(campaign::stability(&grids, count, max_len, seed));
            }
            if wants(CampaignName::M1L1) {
                reports.push(campaign::m1_equals_l1(&grids));
            }
            for r in &reports {
                write!(out, "{}", r.render())?;
                writeln!(out, "result {}", if r.passed() { "pass" } else { "fail" })?;
            }
            Ok(if reports.iter().all(CampaignReport::passed) {
                0
            } else {
                EXIT_VIOLATION
            })
        }
        Command::Gen { seed, count } => {
            for s in seed..seed + count {
                writeln!(out, "{}", generate_minimal(s).to_line())?;
            }
            Ok(0)
        }
        Command::Te {
            puzzle: text,
            theory,
        } => {
            let g = puzzle(&text)?;
            let csp = build_csp(&g);
            let inst = &csp.instance;
            let run = te_solve(inst, &csp.initial, &theory);
            for (trace, ks) in run.probes.iter().zip(&run.probe_states) {
                match braid_from_trace(inst, ks, trace) {
                    Ok(w) if theory.is_brt() => writeln!(out, "{}", w.display(inst))?,
                    _ => writeln!(out, "TE => not {}", inst.cand_label(trace.probed))?,
                }
            }
            writeln!(
                out,
                "probes {} productive {}",
                run.probe_count,
                run.probes.len()
            )?;
            writeln!(
                out,
                "status {}",
                if run.solved {
                    "solved"
                } else if run.final_state.is_inconsistent() {
                    "contradiction"
                } else {
                    "stuck"
                }
            )?;
            writeln!(out, "{}", grid_from_state(&run.final_state).to_line())?;
            Ok(if run.solved {
                0
            } else if run.final_state.is_inconsistent() {
                EXIT_VIOLATION
            } else {
                EXIT_STUCK
            })
        }
    }
}
