use crate::csp::{CandId, CspInstance, KnowledgeState};

use super::{Justification, PatternError, PatternKind, PatternWitness};

/// Checks every defining clause of `w`'s kind against `ks` with target `z`.
///
/// Returns `Err` only when the witness names a candidate absent from `ks`;
/// a structurally wrong witness yields `Ok(false)`.
pub fn validate_pattern(
    inst: &CspInstance,
    ks: &KnowledgeState,
    w: &PatternWitness,
    z: CandId,
) -> Result<bool, PatternError> {
    for c in std::iter::once(z).chain(w.candidates()) {
        if c.index() >= inst.num_candidates() || !ks.has_candidate(c) {
            let label = if c.index() < inst.num_candidates() {
                inst.cand_label(c).to_string()
            } else {
                format!("#{}", c.0)
            };
            return Err(PatternError::StaleWitness(label));
        }
    }
    Ok(check(inst, ks, w, z))
}

fn check(inst: &CspInstance, ks: &KnowledgeState, w: &PatternWitness, z: CandId) -> bool {
    let n = w.steps.len();
    if n == 0 || w.target.is_some_and(|t| t != z) {
        return false;
    }

    // distinctness of target and all left/right candidates
    let mut all = w.candidates();
    if w.target.is_none() {
        all.insert(0, z);
    }
    let mut sorted = all.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != all.len() {
        return false;
    }

    let linked = |a: CandId, b: CandId| inst.is_linked(a, b);
    let mut rights: Vec<CandId> = Vec::with_capacity(n);

    for (k, s) in w.steps.iter().enumerate() {
        let last = k + 1 == n;
        let v = s.variable;
        if !ks.is_open(v) || !inst.domain(v).contains(&s.left) {
            return false;
        }
        if let Some(r) = s.right {
            if !inst.domain(v).contains(&r) {
                return false;
            }
        }
        // right candidates: chains everywhere, whips/braids all but the last
        let wants_right = w.kind.is_chain() || !last;
        if wants_right != s.right.is_some() {
            return false;
        }

        // left-linking structure
        let left_ok = match w.kind {
            PatternKind::ZtBraid => match s.justification {
                Justification::Target => linked(s.left, z),
                Justification::Right(j) => {
                    j < k && w.steps[j].right.is_some_and(|r| linked(s.left, r))
                }
            },
            _ => match k {
                0 => linked(s.left, z),
                _ => linked(s.left, rights[k - 1]),
            },
        };
        if !left_ok {
            return false;
        }

        let others: Vec<CandId> = ks
            .var_candidates(inst, v)
            .filter(|&x| x != s.left && Some(x) != s.right)
            .collect();
        let linked_to_prior = |x: CandId| rights.iter().any(|&r| linked(x, r));
        let zt_incompatible = |x: CandId| linked(x, z) || linked_to_prior(x);

        let clause_ok = match w.kind {
            PatternKind::BivalueChain => others.is_empty(),
            PatternKind::TChain => {
                let r = s.right.expect("checked above");
                !linked_to_prior(r) && others.iter().all(|&x| linked_to_prior(x))
            }
            PatternKind::ZWhip => match s.right {
                Some(r) => !linked(r, z) && others.iter().all(|&x| linked(x, z)),
                None => others.iter().all(|&x| linked(x, z)),
            },
            PatternKind::ZtWhip | PatternKind::ZtBraid => {
                // the left candidate is incompatible through its link structure
                let left_incompatible = zt_incompatible(s.left);
                match s.right {
                    Some(r) => {
                        left_incompatible
                            && !zt_incompatible(r)
                            && others.iter().all(|&x| zt_incompatible(x))
                    }
                    None => left_incompatible && others.iter().all(|&x| zt_incompatible(x)),
                }
            }
        };
        if !clause_ok {
            return false;
        }
        rights.extend(s.right);
    }

    if w.kind.is_chain() {
        // a chain target sees both ends
        let end = w.steps[n - 1]
            .right
            .expect("chains end on a right candidate");
        if !linked(end, z) {
            return false;
        }
    }
    true
}
