//! Chain, whip and braid patterns: witnesses, validation, search.
//!
//! A pattern on target `Z` is a sequence of steps. Each step names a
//! variable, a left-linking candidate `L_k` and, except for the last step of
//! whips and braids, a right-linking candidate `R_k` of the same variable.
//! "Compatible with a set S" means "linked to no element of S".

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::csp::{CandId, CspInstance, KnowledgeState, VarId};

mod search;
mod validate;

pub use search::{
    braid_closure, braid_reachable, find_elimination, find_elimination_with, search_braid,
    search_chain, search_pattern, search_whip, search_z_whip, FamilyMask, ScanOrder,
};
pub use validate::validate_pattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternKind {
    BivalueChain,
    TChain,
    ZWhip,
    ZtWhip,
    ZtBraid,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [
        PatternKind::BivalueChain,
        PatternKind::TChain,
        PatternKind::ZWhip,
        PatternKind::ZtWhip,
        PatternKind::ZtBraid,
    ];

    /// Chains carry a right candidate in every step and end on a candidate
    /// linked to the target.
    pub fn is_chain(self) -> bool {
        matches!(self, PatternKind::BivalueChain | PatternKind::TChain)
    }

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::BivalueChain => "bivalue-chain",
            PatternKind::TChain => "t-chain",
            PatternKind::ZWhip => "z-whip",
            PatternKind::ZtWhip => "zt-whip",
            PatternKind::ZtBraid => "zt-braid",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bivalue-chain" | "bc" => Ok(PatternKind::BivalueChain),
            "t-chain" | "tc" => Ok(PatternKind::TChain),
            "z-whip" | "zw" => Ok(PatternKind::ZWhip),
            "zt-whip" | "whip" => Ok(PatternKind::ZtWhip),
            "zt-braid" | "braid" => Ok(PatternKind::ZtBraid),
            other => Err(format!("unknown pattern kind {other:?}")),
        }
    }
}

/// What a left candidate is linked to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Justification {
    Target,
    /// Right candidate of the step with this 0-based index.
    Right(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternStep {
    pub variable: VarId,
    pub left: CandId,
    pub right: Option<CandId>,
    pub justification: Justification,
    /// Other candidates of the variable linked to the target.
    pub z_candidates: Vec<CandId>,
    /// Other candidates linked to an earlier right candidate but not to the
    /// target.
    pub t_candidates: Vec<CandId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternWitness {
    pub kind: PatternKind,
    pub target: Option<CandId>,
    pub steps: Vec<PatternStep>,
}

impl PatternWitness {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every candidate named by the witness, target first.
    pub fn candidates(&self) -> Vec<CandId> {
        let mut out: Vec<CandId> = self.target.into_iter().collect();
        for s in &self.steps {
            out.push(s.left);
            out.extend(s.right);
        }
        out
    }

    pub fn rights(&self) -> impl Iterator<Item = CandId> + '_ {
        self.steps.iter().filter_map(|s| s.right)
    }

    pub fn display<'a>(&'a self, inst: &'a CspInstance) -> impl fmt::Display + 'a {
        WitnessDisplay { w: self, inst }
    }
}

struct WitnessDisplay<'a> {
    w: &'a PatternWitness,
    inst: &'a CspInstance,
}

impl fmt::Display for WitnessDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (w, inst) = (self.w, self.inst);
        write!(f, "{}[{}]: ", w.kind, w.len())?;
        for (i, s) in w.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" - ")?;
            }
            write!(
                f,
                "{}{{{}",
                inst.var_label(s.variable),
                inst.cand_label(s.left)
            )?;
            if w.kind == PatternKind::ZtBraid {
                match s.justification {
                    Justification::Target => f.write_str("(<Z)")?,
                    Justification::Right(j) => {
                        let r = w.steps[j]
                            .right
                            .expect("justifying step has a right candidate");
                        write!(f, "(<{})", inst.cand_label(r))?;
                    }
                }
            }
            if let Some(r) = s.right {
                write!(f, " {}", inst.cand_label(r))?;
            }
            f.write_str("}")?;
        }
        if let Some(z) = w.target {
            write!(f, " => not {}", inst.cand_label(z))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Elimination {
    pub target: CandId,
    pub witness: PatternWitness,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("stale witness: {0} is not a candidate in this state")]
    StaleWitness(String),
}

/// Fills the z- and t-candidate sets of every step from `ks` and the target.
pub(crate) fn annotate(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    steps: &mut [PatternStep],
) {
    let mut rights: Vec<CandId> = Vec::new();
    for s in steps.iter_mut() {
        s.z_candidates.clear();
        s.t_candidates.clear();
        for x in ks.var_candidates(inst, s.variable) {
            if x == s.left || Some(x) == s.right {
                continue;
            }
            if inst.is_linked(x, z) {
                s.z_candidates.push(x);
            } else if rights.iter().any(|&r| inst.is_linked(x, r)) {
                s.t_candidates.push(x);
            }
        }
        rights.extend(s.right);
    }
}

/// Rebuilds a linear pattern (chain or whip) as a zt-whip on the same
/// variables and left candidates. The whip ends at the first step whose
/// variable has no candidate compatible with the target and the earlier
/// right candidates, so it may be shorter than the input.
pub fn to_zt_whip(
    inst: &CspInstance,
    ks: &KnowledgeState,
    w: &PatternWitness,
) -> Option<PatternWitness> {
    let z = w.target?;
    let mut sset = vec![z];
    let mut steps = Vec::new();
    for (k, s) in w.steps.iter().enumerate() {
        let compat: Vec<CandId> = ks
            .var_candidates(inst, s.variable)
            .filter(|&x| !sset.iter().any(|&y| inst.is_linked(x, y)))
            .collect();
        let justification = if k == 0 {
            Justification::Target
        } else {
            Justification::Right(k - 1)
        };
        match compat.as_slice() {
            [] => {
                steps.push(PatternStep {
                    variable: s.variable,
                    left: s.left,
                    right: None,
                    justification,
                    z_candidates: Vec::new(),
                    t_candidates: Vec::new(),
                });
                annotate(inst, ks, z, &mut steps);
                return Some(PatternWitness {
                    kind: PatternKind::ZtWhip,
                    target: Some(z),
                    steps,
                });
            }
            [r] if Some(*r) == s.right => {
                steps.push(PatternStep {
                    variable: s.variable,
                    left: s.left,
                    right: s.right,
                    justification,
                    z_candidates: Vec::new(),
                    t_candidates: Vec::new(),
                });
                sset.push(*r);
            }
            _ => return None,
        }
    }
    None
}

/// A zt-whip read as a zt-braid: each left candidate is justified by the
/// immediately preceding right candidate (the target for the first step).
pub fn whip_to_braid(w: &PatternWitness) -> PatternWitness {
    let mut out = w.clone();
    out.kind = PatternKind::ZtBraid;
    for (k, s) in out.steps.iter_mut().enumerate() {
        s.justification = if k == 0 {
            Justification::Target
        } else {
            Justification::Right(k - 1)
        };
    }
    out
}

#[cfg(test)]
mod tests;
