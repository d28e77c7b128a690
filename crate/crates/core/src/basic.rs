//! Basic resolution theory: elementary constraint propagation (ECP), singles
//! (S) and contradiction detection (CD), and their fixpoint.

use std::fmt;

use fixedbitset::FixedBitSet;

use crate::csp::{CandId, CspInstance, KnowledgeState, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicRuleEvent {
    /// `eliminated` was deleted because it is linked to the value `cause`.
    Ecp { eliminated: CandId, cause: CandId },
    /// `variable` had `value` as its only candidate; it was asserted.
    Single { variable: VarId, value: CandId },
    /// `variable` has no candidate left (or holds two values).
    Contradiction { variable: VarId },
}

impl BasicRuleEvent {
    pub fn display<'a>(&'a self, inst: &'a CspInstance) -> impl fmt::Display + 'a {
        EventDisplay { ev: self, inst }
    }
}

struct EventDisplay<'a> {
    ev: &'a BasicRuleEvent,
    inst: &'a CspInstance,
}

impl fmt::Display for EventDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inst = self.inst;
        match *self.ev {
            BasicRuleEvent::Ecp { eliminated, cause } => write!(
                f,
                "ECP {} caused-by {}",
                inst.cand_label(eliminated),
                inst.cand_label(cause)
            ),
            BasicRuleEvent::Single { value, .. } => write!(f, "S {}", inst.cand_label(value)),
            BasicRuleEvent::Contradiction { variable } => {
                write!(f, "CD {}", inst.var_label(variable))
            }
        }
    }
}

/// Deletes every candidate linked to a decided value.
pub fn apply_ecp(inst: &CspInstance, ks: &KnowledgeState) -> (KnowledgeState, Vec<BasicRuleEvent>) {
    let mut out = ks.clone();
    let mut events = Vec::new();
    let values: Vec<CandId> = ks.values().collect();
    for v in values {
        ecp_from(inst, &mut out, v, &mut events);
    }
    (out, events)
}

fn ecp_from(
    inst: &CspInstance,
    ks: &mut KnowledgeState,
    value: CandId,
    events: &mut Vec<BasicRuleEvent>,
) {
    for &x in inst.neighbours(value) {
        if ks.has_candidate(x) {
            ks.delete_candidate(x);
            events.push(BasicRuleEvent::Ecp {
                eliminated: x,
                cause: value,
            });
        }
    }
}

fn single_of(inst: &CspInstance, ks: &KnowledgeState, v: VarId) -> Option<CandId> {
    if !ks.is_open(v) {
        return None;
    }
    let mut it = ks.var_candidates(inst, v);
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

/// Asserts the first open variable (in variable order) holding exactly one
/// candidate.
pub fn apply_single(
    inst: &CspInstance,
    ks: &KnowledgeState,
) -> (KnowledgeState, Option<BasicRuleEvent>) {
    let mut out = ks.clone();
    for v in inst.variables() {
        if let Some(c) = single_of(inst, ks, v) {
            out.assert_value(inst, c)
                .expect("a lone candidate of an open variable is assertable");
            return (
                out,
                Some(BasicRuleEvent::Single {
                    variable: v,
                    value: c,
                }),
            );
        }
    }
    (out, None)
}

/// Flags the first variable that is open with no candidate, or that holds two
/// values.
pub fn detect_contradiction(inst: &CspInstance, ks: &KnowledgeState) -> KnowledgeState {
    let mut out = ks.clone();
    if out.contradiction().is_some() {
        return out;
    }
    let clash = ks.clashes().first().copied();
    let empty = inst
        .variables()
        .find(|&v| ks.is_open(v) && ks.candidate_count(inst, v) == 0);
    if let Some(v) = [clash, empty].into_iter().flatten().min() {
        out.set_contradiction(v);
    }
    out
}

/// Permutation of the variable scan used by S inside the fixpoint.
#[derive(Debug, Clone)]
pub struct SingleOrder {
    rank: Vec<u32>,
}

impl SingleOrder {
    pub fn natural(inst: &CspInstance) -> Self {
        SingleOrder {
            rank: (0..inst.num_variables() as u32).collect(),
        }
    }

    /// `order` lists every variable once; earlier means preferred.
    pub fn from_order(order: &[VarId]) -> Self {
        let mut rank = vec![0; order.len()];
        for (i, v) in order.iter().enumerate() {
            rank[v.index()] = i as u32;
        }
        SingleOrder { rank }
    }
}

/// ECP, CD and S alternated until nothing applies or a contradiction is
/// flagged. Equivalent to iterating [`apply_ecp`], [`detect_contradiction`]
/// and [`apply_single`] in that order.
pub fn brt_fixpoint(
    inst: &CspInstance,
    ks: &KnowledgeState,
) -> (KnowledgeState, Vec<BasicRuleEvent>) {
    brt_fixpoint_ordered(inst, ks, None)
}

pub fn brt_fixpoint_ordered(
    inst: &CspInstance,
    ks: &KnowledgeState,
    order: Option<&SingleOrder>,
) -> (KnowledgeState, Vec<BasicRuleEvent>) {
    let mut out = ks.clone();
    let mut events = Vec::new();
    run_fixpoint(inst, &mut out, &mut events, order);
    (out, events)
}

/// In-place fixpoint; appends to `events`.
pub(crate) fn run_fixpoint(
    inst: &CspInstance,
    ks: &mut KnowledgeState,
    events: &mut Vec<BasicRuleEvent>,
    order: Option<&SingleOrder>,
) {
    if ks.contradiction().is_some() {
        return;
    }
    let values: Vec<CandId> = ks.values().collect();
    for v in values {
        ecp_from(inst, ks, v, events);
    }
    // initial full scan; afterwards only variables touched by deletions change
    let mut pending = FixedBitSet::with_capacity(inst.num_variables());
    let mut empty: Option<VarId> = ks.clashes().first().copied();
    for v in inst.variables() {
        if !ks.is_open(v) {
            continue;
        }
        match ks.candidate_count(inst, v) {
            0 => {
                empty = Some(empty.map_or(v, |e| e.min(v)));
            }
            1 => pending.insert(v.index()),
            _ => {}
        }
    }
    loop {
        if let Some(v) = empty {
            ks.set_contradiction(v);
            events.push(BasicRuleEvent::Contradiction { variable: v });
            return;
        }
        let next = match order {
            None => pending.ones().next().map(|i| VarId(i as u32)),
            Some(o) => pending
                .ones()
                .min_by_key(|&i| o.rank[i])
                .map(|i| VarId(i as u32)),
        };
        let Some(var) = next else { return };
        let value = single_of(inst, ks, var).expect("pending variable holds one candidate");
        ks.assert_value(inst, value)
            .expect("a lone candidate of an open variable is assertable");
        events.push(BasicRuleEvent::Single {
            variable: var,
            value,
        });
        for &w in inst.vars_of(value) {
            pending.set(w.index(), false);
        }
        let start = events.len();
        ecp_from(inst, ks, value, events);
        for ev in &events[start..] {
            let BasicRuleEvent::Ecp { eliminated, .. } = *ev else {
                continue;
            };
            for &w in inst.vars_of(eliminated) {
                if !ks.is_open(w) {
                    continue;
                }
                match ks.candidate_count(inst, w) {
                    0 => {
                        pending.set(w.index(), false);
                        empty = Some(empty.map_or(w, |e| e.min(w)));
                    }
                    1 => pending.insert(w.index()),
                    _ => {}
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{CspBuilder, VariableRef};

    /// Order-`n` Latin square with rc variables only and explicit row/column
    /// links.
    pub(crate) fn latin(n: u16) -> CspInstance {
        let mut b = CspBuilder::new();
        let f = b.add_family("rc");
        let values: Vec<u16> = (1..=n).collect();
        for r in 1..=n {
            for c in 1..=n {
                b.add_variable_with_domain(
                    VariableRef::new(f, &[r, c]),
                    format!("r{r}c{c}"),
                    &values,
                );
            }
        }
        let atom = |r: u16, c: u16, v: u16| CandId((((r - 1) * n + (c - 1)) * n + (v - 1)) as u32);
        for v in 1..=n {
            for r1 in 1..=n {
                for c1 in 1..=n {
                    for r2 in 1..=n {
                        for c2 in 1..=n {
                            if (r1, c1) < (r2, c2) && (r1 == r2 || c1 == c2) {
                                b.add_link(atom(r1, c1, v), atom(r2, c2, v));
                            }
                        }
                    }
                }
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn ecp_without_values_is_noop() {
        let inst = latin(4);
        let ks = inst.full_state();
        let (out, ev) = apply_ecp(&inst, &ks);
        assert_eq!(out, ks);
        assert!(ev.is_empty());
    }

    #[test]
    fn ecp_matches_quadratic_scan_on_latin_square() {
        let inst = latin(4);
        let mut ks = inst.full_state();
        // r2c3 = 4
        let given = CandId(((4 + 2) * 4 + 3) as u32);
        ks.assert_value(&inst, given).unwrap();
        let (out, events) = apply_ecp(&inst, &ks);
        // brute force: same cell other value, or same value in row/column
        let mut expected = Vec::new();
        for x in 0..64u32 {
            let (cell, v) = (x / 4, x % 4);
            let (r, c) = (cell / 4, cell % 4);
            let same_cell = cell == 6 && v != 3;
            let same_line = v == 3 && (r == 1 || c == 2) && cell != 6;
            if same_cell || same_line {
                expected.push(CandId(x));
            }
        }
        let got: Vec<CandId> = events
            .iter()
            .map(|e| match e {
                BasicRuleEvent::Ecp { eliminated, cause } => {
                    assert_eq!(*cause, given);
                    *eliminated
                }
                _ => panic!("unexpected event"),
            })
            .collect();
        assert_eq!(got, expected);
        for x in expected {
            assert!(!out.has_candidate(x));
        }
    }

    #[test]
    fn single_asserted_and_absent_when_none() {
        let inst = latin(4);
        let ks = inst.full_state();
        let (same, ev) = apply_single(&inst, &ks);
        assert!(ev.is_none());
        assert_eq!(same, ks);
        let mut ks = ks;
        for x in [0, 1, 2] {
            ks.delete_candidate(CandId(x));
        }
        let (out, ev) = apply_single(&inst, &ks);
        assert_eq!(
            ev,
            Some(BasicRuleEvent::Single {
                variable: VarId(0),
                value: CandId(3)
            })
        );
        assert_eq!(out.decided(VarId(0)), Some(CandId(3)));
    }

    #[test]
    fn contradiction_on_empty_variable() {
        let inst = latin(4);
        let mut ks = inst.full_state();
        for x in 4..8 {
            ks.delete_candidate(CandId(x));
        }
        let out = detect_contradiction(&inst, &ks);
        assert_eq!(out.contradiction(), Some(VarId(1)));
        let clean = detect_contradiction(&inst, &inst.full_state());
        assert_eq!(clean.contradiction(), None);
    }

    #[test]
    fn fixpoint_matches_naive_iteration() {
        let inst = latin(4);
        let mut ks = inst.full_state();
        // r1c1 = 1, r2c2 = 2, r3c3 = 3
        for x in [0u32, 21, 42] {
            ks.assert_value(&inst, CandId(x)).unwrap();
        }
        let (fast, fast_ev) = brt_fixpoint(&inst, &ks);
        let mut slow = ks.clone();
        let mut slow_ev = Vec::new();
        loop {
            let (s, ev) = apply_ecp(&inst, &slow);
            slow = s;
            slow_ev.extend(ev);
            slow = detect_contradiction(&inst, &slow);
            if let Some(v) = slow.contradiction() {
                slow_ev.push(BasicRuleEvent::Contradiction { variable: v });
                break;
            }
            let (s, ev) = apply_single(&inst, &slow);
            slow = s;
            match ev {
                Some(e) => slow_ev.push(e),
                None => break,
            }
        }
        assert_eq!(fast, slow);
        assert_eq!(fast_ev, slow_ev);
    }
}
