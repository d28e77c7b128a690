//! Trial-and-Error: probe a candidate in a private copy of the state, and
//! turn a contradictory probe into a zt-braid on the probed candidate.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::basic::{run_fixpoint, BasicRuleEvent};
use crate::csp::{CandId, CspInstance, KnowledgeState, VarId};
use crate::pattern::{
    annotate, search_braid, validate_pattern, Justification, PatternKind, PatternStep,
    PatternWitness,
};
use crate::theory::{solve, ResolutionTheory, RuleApplication, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeOutcome {
    Contradiction,
    Quiescence,
}

#[derive(Debug, Clone)]
pub struct TeTrace {
    pub probed: CandId,
    pub events: Vec<RuleApplication>,
    pub outcome: TeOutcome,
}

impl TeTrace {
    pub fn display<'a>(&'a self, inst: &'a CspInstance) -> impl fmt::Display + 'a {
        TraceDisplay { t: self, inst }
    }
}

struct TraceDisplay<'a> {
    t: &'a TeTrace,
    inst: &'a CspInstance,
}

impl fmt::Display for TraceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.inst.cand_label(self.t.probed);
        for ev in &self.t.events {
            writeln!(f, "TE[{z}] {}", ev.display(self.inst))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TeError {
    #[error("trace does not end in a contradiction")]
    NoContradiction,
    #[error("trace contains non-basic rule applications")]
    NotBasic,
    #[error("no braid could be read from the trace: {0}")]
    NotExtractable(String),
}

/// zt-braid on the probed candidate of a contradictory trace: read off the
/// trace when possible, otherwise found by [`search_braid`].
pub fn braid_from_trace(
    inst: &CspInstance,
    ks: &KnowledgeState,
    trace: &TeTrace,
) -> Result<PatternWitness, TeError> {
    match braid_from_trace_only(inst, ks, trace) {
        Err(TeError::NotExtractable(why)) => {
            search_braid(inst, ks, trace.probed, None).ok_or(TeError::NotExtractable(why))
        }
        other => other,
    }
}

/// Asserts `z` in a copy of `ks` and runs `theory` there until quiescence or
/// contradiction. `ks` is never modified.
pub fn te_probe(
    inst: &CspInstance,
    ks: &KnowledgeState,
    theory: &ResolutionTheory,
    z: CandId,
) -> TeTrace {
    let mut copy = ks.clone();
    if let Err(_) = copy.assert_value(inst, z) {
        // z sees a decided variable: asserting it is contradictory at once
        let v = inst
            .vars_of(z)
            .iter()
            .copied()
            .find(|&v| !ks.is_open(v))
            .unwrap_or(inst.vars_of(z)[0]);
        return TeTrace {
            probed: z,
            events: vec![RuleApplication::Basic(BasicRuleEvent::Contradiction {
                variable: v,
            })],
            outcome: TeOutcome::Contradiction,
        };
    }
    let events = if theory.is_brt() {
        let mut ev = Vec::new();
        run_fixpoint(inst, &mut copy, &mut ev, None);
        ev.into_iter().map(RuleApplication::Basic).collect()
    } else {
        let path = solve(inst, &copy, theory, &Strategy::default());
        copy = path.final_state.clone();
        path.entries.into_iter().map(|e| e.application).collect()
    };
    TeTrace {
        probed: z,
        events,
        outcome: if copy.is_inconsistent() {
            TeOutcome::Contradiction
        } else {
            TeOutcome::Quiescence
        },
    }
}

#[derive(Debug, Clone)]
pub struct TeSolution {
    pub solved: bool,
    pub final_state: KnowledgeState,
    /// Probes that eliminated their candidate, in order.
    pub probes: Vec<TeTrace>,
    /// States in which each of `probes` was run.
    pub probe_states: Vec<KnowledgeState>,
    /// All probes run, productive or not.
    pub probe_count: usize,
}

fn theory_fixpoint(inst: &CspInstance, ks: &mut KnowledgeState, theory: &ResolutionTheory) {
    if theory.is_brt() {
        run_fixpoint(inst, ks, &mut Vec::new(), None);
    } else {
        *ks = solve(inst, ks, theory, &Strategy::default()).final_state;
    }
}

/// T&E(theory): rules of `theory` whenever they apply, probes otherwise.
/// Candidates are probed in index order, resuming after the last productive
/// probe; solutions met inside probes are ignored.
pub fn te_solve(
    inst: &CspInstance,
    initial: &KnowledgeState,
    theory: &ResolutionTheory,
) -> TeSolution {
    let mut ks = initial.clone();
    theory_fixpoint(inst, &mut ks, theory);
    let mut probes = Vec::new();
    let mut probe_states = Vec::new();
    let mut probe_count = 0;
    let n = inst.num_candidates();
    let mut cursor = 0;
    'outer: while !ks.is_inconsistent() && !ks.is_solved() {
        for step in 0..n {
            let z = CandId(((cursor + step) % n) as u32);
            if !ks.has_candidate(z) {
                continue;
            }
            probe_count += 1;
            let trace = te_probe(inst, &ks, theory, z);
            if trace.outcome == TeOutcome::Contradiction {
                probe_states.push(ks.clone());
                probes.push(trace);
                ks.delete_candidate(z);
                theory_fixpoint(inst, &mut ks, theory);
                cursor = z.index() + 1;
                continue 'outer;
            }
        }
        break;
    }
    TeSolution {
        solved: ks.is_solved(),
        final_state: ks,
        probes,
        probe_states,
        probe_count,
    }
}

/// Reads a zt-braid on the probed candidate off a contradictory BRT trace.
///
/// Each assertion `R` of the trace becomes a step on a variable holding `R`
/// (the asserting variable first, then its other views) whose remaining
/// candidates are all linked to the target or to an earlier right
/// candidate. Its left candidate is the earliest-eliminated unused such
/// candidate. Assertions admitting no step yet are retried after every new
/// step and skipped if they never qualify. The variable
/// flagged by CD closes the braid with its last eliminated unused
/// candidate; another fully refuted variable is used if CD's has none.
///
/// One candidate atom may be the only refuted candidate of two variables
/// the trace asserts through; since braid candidates are pairwise distinct,
/// the trace order then yields no braid and [`braid_from_trace`] falls back
/// to [`search_braid`].
pub fn braid_from_trace_only(
    inst: &CspInstance,
    ks: &KnowledgeState,
    trace: &TeTrace,
) -> Result<PatternWitness, TeError> {
    if trace.outcome != TeOutcome::Contradiction {
        return Err(TeError::NoContradiction);
    }
    let z = trace.probed;
    let mut eliminated_at: HashMap<CandId, usize> = HashMap::new();
    let mut b = Extraction {
        inst,
        ks,
        z,
        steps: Vec::new(),
        used: vec![z],
        used_vars: Vec::new(),
    };

    // assertions not yet turned into steps; a later right candidate may
    // refute the rest of one of their variables
    let mut pending: Vec<(VarId, CandId)> = Vec::new();
    for (pos, app) in trace.events.iter().enumerate() {
        let RuleApplication::Basic(ev) = app else {
            return Err(TeError::NotBasic);
        };
        match *ev {
            BasicRuleEvent::Ecp { eliminated, .. } => {
                eliminated_at.insert(eliminated, pos);
            }
            BasicRuleEvent::Single { variable, value } => {
                pending.push((variable, value));
                b.drain(&mut pending, &eliminated_at);
            }
            BasicRuleEvent::Contradiction { variable } => {
                let fallback = inst.variables().filter(|&v| v != variable);
                for v in std::iter::once(variable).chain(fallback) {
                    if let Some((left, j)) = b.left_for(v, None, &eliminated_at, true) {
                        b.push(v, left, None, j);
                        let mut steps = b.steps;
                        annotate(inst, ks, z, &mut steps);
                        let w = PatternWitness {
                            kind: PatternKind::ZtBraid,
                            target: Some(z),
                            steps,
                        };
                        return match validate_pattern(inst, ks, &w, z) {
                            Ok(true) => Ok(w),
                            Ok(false) => Err(TeError::NotExtractable(
                                "extracted braid does not validate".into(),
                            )),
                            Err(e) => Err(TeError::NotExtractable(e.to_string())),
                        };
                    }
                }
                return Err(TeError::NotExtractable(format!(
                    "no eliminated candidate closes {}",
                    inst.var_label(variable)
                )));
            }
        }
    }
    Err(TeError::NoContradiction)
}

struct Extraction<'a> {
    inst: &'a CspInstance,
    ks: &'a KnowledgeState,
    z: CandId,
    steps: Vec<PatternStep>,
    used: Vec<CandId>,
    used_vars: Vec<VarId>,
}

impl Extraction<'_> {
    fn justification(&self, x: CandId) -> Option<Justification> {
        if self.inst.is_linked(x, self.z) {
            return Some(Justification::Target);
        }
        self.steps
            .iter()
            .position(|s| s.right.is_some_and(|r| self.inst.is_linked(x, r)))
            .map(Justification::Right)
    }

    /// Left candidate for a step on `v` asserting `right` (closing when
    /// `None`): every other candidate must be refuted by the target or an
    /// earlier right.
    fn left_for(
        &self,
        v: VarId,
        right: Option<CandId>,
        eliminated_at: &HashMap<CandId, usize>,
        latest: bool,
    ) -> Option<(CandId, Justification)> {
        if !self.ks.is_open(v) || self.used_vars.contains(&v) {
            return None;
        }
        let mut best: Option<(usize, CandId, Justification)> = None;
        for x in self.ks.var_candidates(self.inst, v) {
            if Some(x) == right {
                continue;
            }
            let j = self.justification(x)?;
            if self.used.contains(&x) {
                continue;
            }
            let p = eliminated_at.get(&x).copied().unwrap_or(usize::MAX);
            let better = match best {
                None => true,
                Some((bp, _, _)) if latest => p != usize::MAX && (bp == usize::MAX || p > bp),
                Some((bp, _, _)) => p < bp,
            };
            if better {
                best = Some((p, x, j));
            }
        }
        best.map(|(_, x, j)| (x, j))
    }

    /// Turns pending assertions into steps, in trace order, until none
    /// qualifies.
    fn drain(
        &mut self,
        pending: &mut Vec<(VarId, CandId)>,
        eliminated_at: &HashMap<CandId, usize>,
    ) {
        'again: loop {
            for i in 0..pending.len() {
                let (variable, value) = pending[i];
                if self.used.contains(&value) {
                    pending.remove(i);
                    continue 'again;
                }
                let others = self
                    .inst
                    .vars_of(value)
                    .iter()
                    .copied()
                    .filter(|&v| v != variable);
                for v in std::iter::once(variable).chain(others) {
                    if let Some((left, j)) = self.left_for(v, Some(value), eliminated_at, false) {
                        self.push(v, left, Some(value), j);
                        pending.remove(i);
                        continue 'again;
                    }
                }
            }
            return;
        }
    }

    fn push(
        &mut self,
        variable: VarId,
        left: CandId,
        right: Option<CandId>,
        justification: Justification,
    ) {
        self.used.push(left);
        self.used.extend(right);
        self.used_vars.push(variable);
        self.steps.push(PatternStep {
            variable,
            left,
            right,
            justification,
            z_candidates: Vec::new(),
            t_candidates: Vec::new(),
        });
    }
}
