//! Resolution theories, strategies, the solver loop, rating and the
//! confluence checker.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::basic::{brt_fixpoint, run_fixpoint, BasicRuleEvent, SingleOrder};
use crate::csp::{count_solutions, CandId, CspInstance, KnowledgeState, StateDigest, VarId};
use crate::pattern::{
    find_elimination_with, search_braid, validate_pattern, Elimination, PatternKind,
    PatternWitness, ScanOrder,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TheoryError {
    #[error("rating is undefined: the instance has {0} solutions")]
    RatingUndefined(usize),
    #[error("unknown theory {0:?} (expected brt, L<n>, M<n>, Linf or Minf)")]
    UnknownTheory(String),
    #[error("bad strategy {0:?}: {1}")]
    BadStrategy(String, String),
    #[error("path replay failed at step {step}: {reason}")]
    Replay { step: usize, reason: String },
}

/// Which ladder a theory or rating climbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ladder {
    Whip,
    Braid,
}

/// BRT plus pattern kinds up to a length bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResolutionTheory {
    kinds: Vec<PatternKind>,
    max_len: Option<usize>,
}

impl ResolutionTheory {
    pub fn brt() -> Self {
        ResolutionTheory {
            kinds: Vec::new(),
            max_len: Some(0),
        }
    }

    /// L_n: BRT plus zt-whips of length at most n (`None`: unbounded).
    /// Bivalue-chains, t-chains and z-whips are special zt-whips and are
    /// allowed alongside.
    pub fn whips(n: Option<usize>) -> Self {
        Self::ladder(Ladder::Whip, n)
    }

    /// M_n: L_n plus zt-braids of length at most n.
    pub fn braids(n: Option<usize>) -> Self {
        Self::ladder(Ladder::Braid, n)
    }

    pub fn ladder(ladder: Ladder, n: Option<usize>) -> Self {
        if n == Some(0) {
            return Self::brt();
        }
        let mut kinds = vec![
            PatternKind::BivalueChain,
            PatternKind::TChain,
            PatternKind::ZWhip,
            PatternKind::ZtWhip,
        ];
        if ladder == Ladder::Braid {
            kinds.push(PatternKind::ZtBraid);
        }
        ResolutionTheory { kinds, max_len: n }
    }

    pub fn is_brt(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[PatternKind] {
        &self.kinds
    }

    pub fn allows(&self, kind: PatternKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn max_len(&self) -> Option<usize> {
        self.max_len
    }
}

impl fmt::Display for ResolutionTheory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_brt() {
            return f.write_str("brt");
        }
        let letter = if self.allows(PatternKind::ZtBraid) {
            'M'
        } else {
            'L'
        };
        match self.max_len {
            Some(n) => write!(f, "{letter}{n}"),
            None => write!(f, "{letter}inf"),
        }
    }
}

impl FromStr for ResolutionTheory {
    type Err = TheoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TheoryError::UnknownTheory(s.to_string());
        if s.eq_ignore_ascii_case("brt") {
            return Ok(Self::brt());
        }
        let mut chars = s.chars();
        let ladder = match chars.next() {
            Some('L' | 'l') => Ladder::Whip,
            Some('M' | 'm') => Ladder::Braid,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let n = if rest.eq_ignore_ascii_case("inf") {
            None
        } else {
            Some(rest.parse::<usize>().map_err(|_| bad())?)
        };
        Ok(Self::ladder(ladder, n))
    }
}

/// How a solve chooses among applicable rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    /// Pattern kinds in order of preference; kinds missing here are tried
    /// last, in their natural order.
    pub kind_priority: Vec<PatternKind>,
    /// Seed for the target scan order and the order of singles; `None`
    /// scans in dense index order.
    pub scan_seed: Option<u64>,
    pub shortest_first: bool,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy {
            kind_priority: vec![
                PatternKind::BivalueChain,
                PatternKind::ZtWhip,
                PatternKind::ZtBraid,
            ],
            scan_seed: None,
            shortest_first: true,
        }
    }
}

impl Strategy {
    /// A strategy with shuffled kind priority and scan order.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kinds = PatternKind::ALL.to_vec();
        kinds.shuffle(&mut rng);
        Strategy {
            kind_priority: kinds,
            scan_seed: Some(seed),
            shortest_first: seed % 2 == 0,
        }
    }

    /// Kinds of `theory` in this strategy's order.
    pub fn kinds_for(&self, theory: &ResolutionTheory) -> Vec<PatternKind> {
        let mut out: Vec<PatternKind> = self
            .kind_priority
            .iter()
            .copied()
            .filter(|&k| theory.allows(k))
            .collect();
        for &k in theory.kinds() {
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }

    fn permutation(&self, n: usize, salt: u64) -> Option<Vec<u32>> {
        let seed = self.scan_seed?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
        let mut p: Vec<u32> = (0..n as u32).collect();
        p.shuffle(&mut rng);
        Some(p)
    }

    pub fn scan_order(&self, inst: &CspInstance) -> ScanOrder {
        match self.permutation(inst.num_candidates(), 0x5ca4) {
            Some(p) => ScanOrder::Permuted(p.into_iter().map(CandId).collect()),
            None => ScanOrder::Natural,
        }
    }

    pub fn single_order(&self, inst: &CspInstance) -> Option<SingleOrder> {
        let p = self.permutation(inst.num_variables(), 0x5149)?;
        let order: Vec<VarId> = p.into_iter().map(VarId).collect();
        Some(SingleOrder::from_order(&order))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order: Vec<&str> = self.kind_priority.iter().map(|k| k.name()).collect();
        write!(f, "order={}", order.join(">"))?;
        if let Some(s) = self.scan_seed {
            write!(f, ",seed={s}")?;
        }
        write!(
            f,
            ",shortest={}",
            if self.shortest_first { "on" } else { "off" }
        )
    }
}

/// Parses `default` or a comma-separated list of `order=a>b>c`, `seed=N`,
/// `shortest=on|off`; omitted keys keep their default.
impl FromStr for Strategy {
    type Err = TheoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Strategy::default();
        let s = s.trim();
        if s.is_empty() || s == "default" {
            return Ok(out);
        }
        let bad = |why: String| TheoryError::BadStrategy(s.to_string(), why);
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
            match key.trim() {
                "order" => {
                    out.kind_priority = value
                        .split('>')
                        .map(|k| k.trim().parse::<PatternKind>())
                        .collect::<Result<_, _>>()
                        .map_err(bad)?;
                }
                "seed" => {
                    out.scan_seed = Some(
                        value
                            .trim()
                            .parse()
                            .map_err(|e| bad(format!("seed: {e}")))?,
                    );
                }
                "shortest" => {
                    out.shortest_first = match value.trim() {
                        "on" | "true" | "yes" => true,
                        "off" | "false" | "no" => false,
                        v => return Err(bad(format!("shortest must be on or off, got {v:?}"))),
                    };
                }
                k => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleApplication {
    Basic(BasicRuleEvent),
    Pattern(Elimination),
}

impl RuleApplication {
    pub fn display<'a>(&'a self, inst: &'a CspInstance) -> impl fmt::Display + 'a {
        AppDisplay { app: self, inst }
    }
}

struct AppDisplay<'a> {
    app: &'a RuleApplication,
    inst: &'a CspInstance,
}

impl fmt::Display for AppDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.app {
            RuleApplication::Basic(ev) => write!(f, "{}", ev.display(self.inst)),
            RuleApplication::Pattern(e) => write!(f, "{}", e.witness.display(self.inst)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathEntry {
    pub application: RuleApplication,
    /// Digest of the state right after the application.
    pub digest: StateDigest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    Contradiction,
    Stuck,
}

#[derive(Debug, Clone)]
pub struct ResolutionPath {
    pub initial: KnowledgeState,
    pub entries: Vec<PathEntry>,
    pub final_state: KnowledgeState,
}

impl ResolutionPath {
    pub fn status(&self) -> SolveStatus {
        if self.final_state.is_inconsistent() {
            SolveStatus::Contradiction
        } else if self.final_state.is_solved() {
            SolveStatus::Solved
        } else {
            SolveStatus::Stuck
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status() == SolveStatus::Solved
    }

    pub fn patterns(&self) -> impl Iterator<Item = &Elimination> {
        self.entries.iter().filter_map(|e| match &e.application {
            RuleApplication::Pattern(el) => Some(el),
            RuleApplication::Basic(_) => None,
        })
    }

    /// Length of the longest pattern used; 0 when BRT sufficed.
    pub fn max_pattern_len(&self) -> usize {
        self.patterns().map(|e| e.witness.len()).max().unwrap_or(0)
    }

    /// One line per application, witness notation for patterns.
    pub fn render(&self, inst: &CspInstance) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.application.display(inst).to_string());
            out.push('\n');
        }
        out
    }

    /// Re-applies every step from `initial`, checking that each is valid in
    /// its predecessor state and that every digest matches.
    pub fn replay(&self, inst: &CspInstance) -> Result<(), TheoryError> {
        let mut ks = self.initial.clone();
        for (i, e) in self.entries.iter().enumerate() {
            let fail = |reason: String| TheoryError::Replay { step: i, reason };
            apply_application(inst, &mut ks, &e.application).map_err(fail)?;
            if ks.digest() != e.digest {
                return Err(fail("digest mismatch".into()));
            }
        }
        if ks != self.final_state {
            return Err(TheoryError::Replay {
                step: self.entries.len(),
                reason: "final state mismatch".into(),
            });
        }
        Ok(())
    }
}

/// Applies `app` to `ks` after checking that it is licensed there.
pub fn apply_application(
    inst: &CspInstance,
    ks: &mut KnowledgeState,
    app: &RuleApplication,
) -> Result<(), String> {
    match app {
        RuleApplication::Basic(BasicRuleEvent::Ecp { eliminated, cause }) => {
            if !ks.is_value(*cause)
                || !inst.is_linked(*eliminated, *cause)
                || !ks.has_candidate(*eliminated)
            {
                return Err(format!(
                    "ECP {} is not licensed",
                    inst.cand_label(*eliminated)
                ));
            }
            ks.delete_candidate(*eliminated);
        }
        RuleApplication::Basic(BasicRuleEvent::Single { variable, value }) => {
            if ks.var_candidates(inst, *variable).collect::<Vec<_>>() != [*value] {
                return Err(format!("{} is not a single", inst.cand_label(*value)));
            }
            ks.assert_value(inst, *value).map_err(|e| e.to_string())?;
        }
        RuleApplication::Basic(BasicRuleEvent::Contradiction { variable }) => {
            let open_empty = ks.is_open(*variable) && ks.candidate_count(inst, *variable) == 0;
            if !open_empty && !ks.clashes().contains(variable) {
                return Err(format!(
                    "{} is not contradictory",
                    inst.var_label(*variable)
                ));
            }
            ks.set_contradiction(*variable);
        }
        RuleApplication::Pattern(e) => {
            match validate_pattern(inst, ks, &e.witness, e.target) {
                Ok(true) => {}
                Ok(false) => return Err("witness does not validate".into()),
                Err(err) => return Err(err.to_string()),
            }
            ks.delete_candidate(e.target);
        }
    }
    Ok(())
}

fn record(
    inst: &CspInstance,
    cursor: &mut KnowledgeState,
    entries: &mut Vec<PathEntry>,
    app: RuleApplication,
) {
    apply_application(inst, cursor, &app).expect("solver emitted an unlicensed step");
    entries.push(PathEntry {
        application: app,
        digest: cursor.digest(),
    });
}

/// Applies BRT to fixpoint, then one pattern elimination at a time under
/// `strategy`, until solved, contradictory or stuck.
pub fn solve(
    inst: &CspInstance,
    initial: &KnowledgeState,
    theory: &ResolutionTheory,
    strategy: &Strategy,
) -> ResolutionPath {
    let kinds = strategy.kinds_for(theory);
    let scan = strategy.scan_order(inst);
    let singles = strategy.single_order(inst);
    let mut ks = initial.clone();
    let mut cursor = initial.clone();
    let mut entries = Vec::new();
    let mut events = Vec::new();
    loop {
        events.clear();
        run_fixpoint(inst, &mut ks, &mut events, singles.as_ref());
        for ev in events.drain(..) {
            record(inst, &mut cursor, &mut entries, RuleApplication::Basic(ev));
        }
        if ks.is_inconsistent() || ks.is_solved() || kinds.is_empty() {
            break;
        }
        let Some(e) = find_elimination_with(
            inst,
            &ks,
            &kinds,
            theory.max_len(),
            &scan,
            strategy.shortest_first,
        ) else {
            break;
        };
        ks.delete_candidate(e.target);
        record(inst, &mut cursor, &mut entries, RuleApplication::Pattern(e));
    }
    debug_assert!(cursor == ks);
    ResolutionPath {
        initial: initial.clone(),
        entries,
        final_state: ks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rating {
    Level(usize),
    AboveCap,
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rating::Level(n) => write!(f, "{n}"),
            Rating::AboveCap => f.write_str("inf"),
        }
    }
}

/// Smallest n ≤ `cap` such that the n-th theory of `ladder` solves the
/// instance under the default strategy.
///
/// The default strategy is shortest-first, so the solve under level `cap`
/// coincides with the solve under level n until a step needs a pattern
/// longer than n. The rating is therefore the longest pattern used by one
/// solve at level `cap`.
pub fn rate(
    inst: &CspInstance,
    initial: &KnowledgeState,
    ladder: Ladder,
    cap: usize,
) -> Result<Rating, TheoryError> {
    let solutions = count_solutions(inst, initial, 2);
    if solutions != 1 {
        return Err(TheoryError::RatingUndefined(solutions));
    }
    Ok(rate_unchecked(inst, initial, ladder, cap))
}

/// [`rate`] without the uniqueness check.
pub fn rate_unchecked(
    inst: &CspInstance,
    initial: &KnowledgeState,
    ladder: Ladder,
    cap: usize,
) -> Rating {
    let path = solve(
        inst,
        initial,
        &ResolutionTheory::ladder(ladder, Some(cap)),
        &Strategy::default(),
    );
    if path.is_solved() {
        Rating::Level(path.max_pattern_len())
    } else {
        Rating::AboveCap
    }
}

#[derive(Debug, Clone)]
pub struct ConfluenceReport {
    pub confluent: bool,
    pub final_digests: Vec<StateDigest>,
}

/// Solves under every strategy and compares final states; all inconsistent
/// states share one digest.
pub fn check_confluence(
    inst: &CspInstance,
    initial: &KnowledgeState,
    theory: &ResolutionTheory,
    strategies: &[Strategy],
) -> ConfluenceReport {
    let final_digests: Vec<StateDigest> = strategies
        .iter()
        .map(|s| solve(inst, initial, theory, s).final_state.digest())
        .collect();
    let confluent = final_digests.windows(2).all(|w| w[0] == w[1]);
    ConfluenceReport {
        confluent,
        final_digests,
    }
}

/// A single rule application used to disturb a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    Delete(CandId),
    Assert(CandId),
}

/// After `perturbation` (followed by BRT to fixpoint), `z` must be gone, the
/// state contradictory, or a braid of length at most `braid.len()` must
/// still eliminate `z`.
pub fn check_stability(
    inst: &CspInstance,
    ks: &KnowledgeState,
    braid: &PatternWitness,
    z: CandId,
    perturbation: Perturbation,
) -> bool {
    let mut next = ks.clone();
    match perturbation {
        Perturbation::Delete(c) => {
            next.delete_candidate(c);
        }
        Perturbation::Assert(c) => {
            if next.assert_value(inst, c).is_err() {
                // not a legal assertion here: nothing to check
                return true;
            }
        }
    }
    let (next, _) = brt_fixpoint(inst, &next);
    if next.is_inconsistent() || (!next.has_candidate(z) && !next.is_value(z)) {
        return true;
    }
    if next.is_value(z) {
        // z was asserted although a braid refutes it: only sound if BRT
        // found the contradiction, handled above
        return false;
    }
    search_braid(inst, &next, z, Some(braid.len()))
        .is_some_and(|w| validate_pattern(inst, &next, &w, z) == Ok(true))
}
