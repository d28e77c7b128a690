//! Property campaigns over a corpus. Each returns a [`CampaignReport`]
//! whose rendering is byte-deterministic for fixed inputs and seed.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csp_braids::basic::{brt_fixpoint, BasicRuleEvent};
use csp_braids::csp::{CandId, CspInstance, KnowledgeState};
use csp_braids::pattern::{
    search_braid, to_zt_whip, validate_pattern, whip_to_braid, PatternKind, PatternWitness,
};
use csp_braids::sudoku::{self, build_csp, solution_atoms, unique_solution, Grid};
use csp_braids::te::{braid_from_trace, braid_from_trace_only, te_probe, te_solve, TeOutcome};
use csp_braids::theory::{
    apply_application, check_confluence, check_stability, rate_unchecked, solve, Ladder,
    Perturbation, Rating, ResolutionPath, ResolutionTheory, RuleApplication, Strategy,
};

use crate::par_map;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub puzzle: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignReport {
    pub name: String,
    pub puzzles: usize,
    /// Named counters, in a fixed order.
    pub stats: Vec<(String, usize)>,
    pub violations: Vec<Violation>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn stat(&self, key: &str) -> usize {
        self.stats
            .iter()
            .find(|(k, _)| k == key)
            .map_or(0, |(_, v)| *v)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "campaign {}", self.name);
        let _ = writeln!(out, "puzzles {}", self.puzzles);
        for (k, v) in &self.stats {
            let _ = writeln!(out, "{k} {v}");
        }
        let _ = writeln!(out, "violations {}", self.violations.len());
        for v in &self.violations {
            let _ = writeln!(out, "  {} {}", v.puzzle, v.detail);
        }
        out
    }
}

/// Per-puzzle outcome merged into a report.
#[derive(Default)]
struct Tally {
    counts: Vec<usize>,
    violations: Vec<Violation>,
}

impl Tally {
    fn new(keys: usize) -> Self {
        Tally {
            counts: vec![0; keys],
            violations: Vec::new(),
        }
    }

    fn fail(&mut self, grid: &Grid, detail: String) {
        self.violations.push(Violation {
            puzzle: grid.to_line(),
            detail,
        });
    }
}

fn merge(name: &str, keys: &[&str], puzzles: usize, tallies: Vec<Tally>) -> CampaignReport {
    let mut counts = vec![0; keys.len()];
    let mut violations = Vec::new();
    for t in tallies {
        for (c, x) in counts.iter_mut().zip(t.counts) {
            *c += x;
        }
        violations.extend(t.violations);
    }
    CampaignReport {
        name: name.to_string(),
        puzzles,
        stats: keys.iter().map(|k| k.to_string()).zip(counts).collect(),
        violations,
    }
}

// ---------------------------------------------------------------------------
// soundness and subsumption

const SOUNDNESS_KEYS: &[&str] = &[
    "brt_events",
    "pattern_eliminations",
    "bivalue_chains_converted",
    "t_chains_converted",
    "z_whips_converted",
    "zt_whips_converted",
    "braids_checked",
    "te_eliminations",
];

/// Strategy preferring the special kinds so that chains and z-whips are
/// exercised too.
pub fn chain_first_strategy() -> Strategy {
    "order=t-chain>z-whip>bivalue-chain>zt-whip>zt-braid"
        .parse()
        .expect("valid strategy")
}

/// Every BRT event, pattern elimination and T&E elimination on the way to
/// a solution agrees with the oracle; every chain or whip witness converts
/// to a valid whip or braid.
pub fn soundness(grids: &[Grid], max_len: usize) -> CampaignReport {
    let tallies = par_map(grids, |g| soundness_one(g, max_len));
    merge("soundness", SOUNDNESS_KEYS, grids.len(), tallies)
}

fn soundness_one(g: &Grid, max_len: usize) -> Tally {
    let mut t = Tally::new(SOUNDNESS_KEYS.len());
    let Some(solution) = unique_solution(g) else {
        t.fail(g, "no unique solution".into());
        return t;
    };
    let sol = solution_atoms(&solution);
    let csp = build_csp(g);
    let inst = &csp.instance;
    let runs = [
        (ResolutionTheory::whips(Some(max_len)), Strategy::default()),
        (
            ResolutionTheory::braids(Some(max_len)),
            chain_first_strategy(),
        ),
    ];
    for (theory, strategy) in &runs {
        let path = solve(inst, &csp.initial, theory, strategy);
        check_path(inst, g, &sol, &path, &mut t);
    }
    let te = te_solve(inst, &csp.initial, &ResolutionTheory::brt());
    for probe in &te.probes {
        t.counts[7] += 1;
        if sol.contains(&probe.probed) {
            t.fail(
                g,
                format!(
                    "T&E eliminates solution candidate {}",
                    inst.cand_label(probe.probed)
                ),
            );
        }
    }
    if !te.solved {
        t.fail(g, "T&E(BRT) does not solve the puzzle".into());
    }
    t
}

fn check_path(inst: &CspInstance, g: &Grid, sol: &[CandId], path: &ResolutionPath, t: &mut Tally) {
    let mut ks = path.initial.clone();
    for e in &path.entries {
        match &e.application {
            RuleApplication::Basic(ev) => {
                t.counts[0] += 1;
                let bad = match *ev {
                    BasicRuleEvent::Ecp { eliminated, .. } => sol.contains(&eliminated),
                    BasicRuleEvent::Single { value, .. } => !sol.contains(&value),
                    BasicRuleEvent::Contradiction { .. } => true,
                };
                if bad {
                    t.fail(g, format!("unsound {}", ev.display(inst)));
                }
            }
            RuleApplication::Pattern(el) => {
                t.counts[1] += 1;
                if sol.contains(&el.target) {
                    t.fail(
                        g,
                        format!(
                            "eliminates solution candidate: {}",
                            el.witness.display(inst)
                        ),
                    );
                }
                check_subsumption(inst, &ks, g, &el.witness, el.target, t);
            }
        }
        if let Err(why) = apply_application(inst, &mut ks, &e.application) {
            t.fail(g, format!("invalid step: {why}"));
            return;
        }
    }
}

fn check_subsumption(
    inst: &CspInstance,
    ks: &KnowledgeState,
    g: &Grid,
    w: &PatternWitness,
    z: CandId,
    t: &mut Tally,
) {
    let valid = |w: &PatternWitness| validate_pattern(inst, ks, w, z) == Ok(true);
    let slot = match w.kind {
        PatternKind::BivalueChain => 2,
        PatternKind::TChain => 3,
        PatternKind::ZWhip => 4,
        PatternKind::ZtWhip => 5,
        PatternKind::ZtBraid => 6,
    };
    t.counts[slot] += 1;
    let whip = match w.kind {
        PatternKind::ZtBraid => {
            if !valid(w) {
                t.fail(g, format!("braid does not validate: {}", w.display(inst)));
            }
            return;
        }
        PatternKind::ZtWhip => Some(w.clone()),
        _ => to_zt_whip(inst, ks, w),
    };
    match whip {
        Some(whip) if valid(&whip) => {
            if !valid(&whip_to_braid(&whip)) {
                t.fail(g, format!("braid conversion fails: {}", whip.display(inst)));
            }
        }
        _ => t.fail(g, format!("whip conversion fails: {}", w.display(inst))),
    }
}

// ---------------------------------------------------------------------------
// T&E against braids

const TE_KEYS: &[&str] = &[
    "stuck_states",
    "probes",
    "te_eliminations",
    "braids_from_trace_order",
    "braids_from_search",
    "mismatches",
];

/// At every BRT-stuck state met by T&E(BRT), the candidates T&E eliminates
/// are exactly those some zt-braid eliminates, and every braid obtained
/// from a contradictory trace validates.
pub fn te_equivalence(grids: &[Grid]) -> CampaignReport {
    let tallies = par_map(grids, te_equivalence_one);
    merge("te-equivalence", TE_KEYS, grids.len(), tallies)
}

fn te_equivalence_one(g: &Grid) -> Tally {
    let mut t = Tally::new(TE_KEYS.len());
    let csp = build_csp(g);
    let inst = &csp.instance;
    let brt = ResolutionTheory::brt();
    let run = te_solve(inst, &csp.initial, &brt);
    for ks in &run.probe_states {
        t.counts[0] += 1;
        for z in ks.present_candidates().collect::<Vec<_>>() {
            t.counts[1] += 1;
            let trace = te_probe(inst, ks, &brt, z);
            let by_te = trace.outcome == TeOutcome::Contradiction;
            if by_te {
                t.counts[2] += 1;
                if braid_from_trace_only(inst, ks, &trace).is_ok() {
                    t.counts[3] += 1;
                } else {
                    t.counts[4] += 1;
                }
                match braid_from_trace(inst, ks, &trace) {
                    Ok(w) if validate_pattern(inst, ks, &w, z) == Ok(true) => {}
                    Ok(w) => t.fail(
                        g,
                        format!("extracted braid does not validate: {}", w.display(inst)),
                    ),
                    Err(e) => {
                        t.counts[5] += 1;
                        t.fail(g, format!("T&E eliminates {} but {e}", inst.cand_label(z)));
                    }
                }
            } else if let Some(w) = search_braid(inst, ks, z, None) {
                t.counts[5] += 1;
                t.fail(
                    g,
                    format!("braid without T&E elimination: {}", w.display(inst)),
                );
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// braids solve the corpus

const BRAID_SOLVE_KEYS: &[&str] = &["solved", "probes_run", "eliminations", "braids_validated"];

/// T&E(BRT) solves every puzzle to the oracle solution, and each of its
/// eliminations carries a validated zt-braid.
pub fn braid_solve(grids: &[Grid]) -> CampaignReport {
    let tallies = par_map(grids, |g| {
        let mut t = Tally::new(BRAID_SOLVE_KEYS.len());
        let csp = build_csp(g);
        let inst = &csp.instance;
        let run = te_solve(inst, &csp.initial, &ResolutionTheory::brt());
        t.counts[1] = run.probe_count;
        if run.solved && Some(sudoku::grid_from_state(&run.final_state)) == unique_solution(g) {
            t.counts[0] = 1;
        } else {
            t.fail(g, "not solved by T&E(BRT)".into());
        }
        for (trace, ks) in run.probes.iter().zip(&run.probe_states) {
            t.counts[2] += 1;
            match braid_from_trace(inst, ks, trace) {
                Ok(w) if validate_pattern(inst, ks, &w, trace.probed) == Ok(true) => {
                    t.counts[3] += 1
                }
                _ => t.fail(
                    g,
                    format!("no valid braid for {}", inst.cand_label(trace.probed)),
                ),
            }
        }
        t
    });
    merge("braid-solve", BRAID_SOLVE_KEYS, grids.len(), tallies)
}

// ---------------------------------------------------------------------------
// confluence, stability, M1 = L1

/// `count` strategies for one run: the default plus seeded random ones.
pub fn strategies(seed: u64, count: usize) -> Vec<Strategy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::once(Strategy::default())
        .chain((1..count).map(|_| Strategy::random(rng.gen())))
        .take(count)
        .collect()
}

const CONFLUENCE_KEYS: &[&str] = &["runs", "confluent"];

/// For each level in `levels`, M_n solved under `per_puzzle` strategies
/// reaches one final state.
pub fn confluence(
    grids: &[Grid],
    levels: &[usize],
    per_puzzle: usize,
    seed: u64,
) -> CampaignReport {
    let indexed: Vec<(usize, &Grid)> = grids.iter().enumerate().collect();
    let tallies = par_map(&indexed, |&(i, g)| {
        let mut t = Tally::new(CONFLUENCE_KEYS.len());
        let csp = build_csp(g);
        for &n in levels {
            let strats = strategies(seed ^ ((i as u64) << 8) ^ n as u64, per_puzzle);
            let report = check_confluence(
                &csp.instance,
                &csp.initial,
                &ResolutionTheory::braids(Some(n)),
                &strats,
            );
            t.counts[0] += 1;
            if report.confluent {
                t.counts[1] += 1;
            } else {
                let detail: Vec<String> = strats
                    .iter()
                    .zip(&report.final_digests)
                    .map(|(s, d)| format!("[{s}] {d}"))
                    .collect();
                t.fail(g, format!("M{n} not confluent: {}", detail.join(" ")));
            }
        }
        t
    });
    merge("confluence", CONFLUENCE_KEYS, grids.len(), tallies)
}

const STABILITY_KEYS: &[&str] = &["checks", "witness_perturbations", "other_perturbations"];

/// Randomized spot checks of braid stability: a braid of length n on `z`
/// survives (or becomes unnecessary after) any single other M_n
/// elimination followed by BRT.
pub fn stability(grids: &[Grid], count: usize, max_n: usize, seed: u64) -> CampaignReport {
    let inst = sudoku::instance();
    // BRT-stuck states met by T&E on each puzzle
    let states: Vec<(usize, KnowledgeState)> = par_map(grids, |g| {
        let csp = build_csp(g);
        te_solve(&inst, &csp.initial, &ResolutionTheory::brt()).probe_states
    })
    .into_iter()
    .enumerate()
    .flat_map(|(i, v)| v.into_iter().map(move |ks| (i, ks)))
    .collect();

    let mut t = Tally::new(STABILITY_KEYS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while t.counts[0] < count && !states.is_empty() && attempts < count * 200 {
        attempts += 1;
        let (gi, ks) = states.choose(&mut rng).expect("non-empty");
        let n = rng.gen_range(2..=max_n.max(2));
        let present: Vec<CandId> = ks.present_candidates().collect();
        let z = *present
            .choose(&mut rng)
            .expect("stuck state has candidates");
        let Some(w) = search_braid(&inst, ks, z, Some(n)) else {
            continue;
        };
        // the disturbing step: another M_n elimination, preferably of a
        // candidate the braid names
        let named: Vec<CandId> = w.candidates().into_iter().filter(|&c| c != z).collect();
        let pool = if rng.gen_bool(0.7) { &named } else { &present };
        let Some(&y) = pool.choose(&mut rng) else {
            continue;
        };
        if y == z || search_braid(&inst, ks, y, Some(n)).is_none() {
            continue;
        }
        t.counts[0] += 1;
        t.counts[if named.contains(&y) { 1 } else { 2 }] += 1;
        if !check_stability(&inst, ks, &w, z, Perturbation::Delete(y)) {
            t.fail(
                &grids[*gi],
                format!(
                    "deleting {} breaks {}",
                    inst.cand_label(y),
                    w.display(&inst)
                ),
            );
        }
    }
    if t.counts[0] < count {
        t.fail(
            &Grid::empty(),
            format!(
                "only {} of {count} perturbations could be drawn",
                t.counts[0]
            ),
        );
    }
    merge("stability", STABILITY_KEYS, grids.len(), vec![t])
}

const M1_KEYS: &[&str] = &["compared", "equal"];

/// Solving under M_1 and L_1 ends in the same state.
pub fn m1_equals_l1(grids: &[Grid]) -> CampaignReport {
    let tallies = par_map(grids, |g| {
        let mut t = Tally::new(M1_KEYS.len());
        let csp = build_csp(g);
        let run = |th: ResolutionTheory| {
            solve(&csp.instance, &csp.initial, &th, &Strategy::default())
                .final_state
                .digest()
        };
        let (l1, m1) = (
            run(ResolutionTheory::whips(Some(1))),
            run(ResolutionTheory::braids(Some(1))),
        );
        t.counts[0] = 1;
        if l1 == m1 {
            t.counts[1] = 1;
        } else {
            t.fail(g, format!("L1 {l1} M1 {m1}"));
        }
        t
    });
    merge("m1-l1", M1_KEYS, grids.len(), tallies)
}

/// Whip ratings of every puzzle, capped at `cap`; uniqueness is assumed.
pub fn whip_ratings(grids: &[Grid], cap: usize) -> Vec<Rating> {
    par_map(grids, |g| {
        let csp = build_csp(g);
        rate_unchecked(&csp.instance, &csp.initial, Ladder::Whip, cap)
    })
}

/// BRT fixpoint of a puzzle.
pub fn brt_state(g: &Grid) -> KnowledgeState {
    let csp = build_csp(g);
    brt_fixpoint(&csp.instance, &csp.initial).0
}
