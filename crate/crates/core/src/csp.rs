//! Generic finite CSP representation.
//!
//! A problem is described by a set of *candidate atoms* (dense ids), a set of
//! variables whose domains are lists of `(value label, atom)` pairs, and a
//! symmetric, irreflexive link relation between atoms. An atom may be viewed
//! through several variables; Sudoku uses this to identify `X_rc = n` with
//! `X_rn = c`, `X_cn = r` and `X_bn = s`. Any two atoms sharing a variable are
//! linked.
//!
//! The instance is immutable once built. [`KnowledgeState`] carries the
//! per-problem, mutable part: remaining candidates and decided values.

use std::collections::HashMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense index of a candidate atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandId(pub u32);

/// Dense index of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl CandId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Public name of a variable: a family and coordinates inside that family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableRef {
    pub family: u8,
    pub coords: Vec<u16>,
}

impl VariableRef {
    pub fn new(family: u8, coords: &[u16]) -> Self {
        VariableRef {
            family,
            coords: coords.to_vec(),
        }
    }
}

/// A `(variable, value)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateRef {
    pub variable: VariableRef,
    pub value: u16,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CspError {
    #[error("malformed reference: {0}")]
    MalformedReference(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// Builder for [`CspInstance`].
#[derive(Debug, Default)]
pub struct CspBuilder {
    family_names: Vec<String>,
    cand_labels: Vec<String>,
    vars: Vec<(VariableRef, String, Vec<(u16, CandId)>)>,
    links: Vec<(CandId, CandId)>,
}

impl CspBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_family(&mut self, name: &str) -> u8 {
        self.family_names.push(name.to_string());
        (self.family_names.len() - 1) as u8
    }

    pub fn add_candidate(&mut self, label: impl Into<String>) -> CandId {
        self.cand_labels.push(label.into());
        CandId((self.cand_labels.len() - 1) as u32)
    }

    /// Adds a variable whose domain values map to existing atoms.
    pub fn add_variable(
        &mut self,
        var: VariableRef,
        label: impl Into<String>,
        domain: Vec<(u16, CandId)>,
    ) -> VarId {
        self.vars.push((var, label.into(), domain));
        VarId((self.vars.len() - 1) as u32)
    }

    /// Adds a variable with one fresh atom per value. Atom labels are
    /// `<variable label>=<value>`.
    pub fn add_variable_with_domain(
        &mut self,
        var: VariableRef,
        label: impl Into<String>,
        values: &[u16],
    ) -> VarId {
        let label = label.into();
        let domain = values
            .iter()
            .map(|&v| (v, self.add_candidate(format!("{label}={v}"))))
            .collect();
        self.add_variable(var, label, domain)
    }

    /// Declares a binary incompatibility between two atoms.
    pub fn add_link(&mut self, a: CandId, b: CandId) {
        self.links.push((a, b));
    }

    pub fn build(self) -> Result<CspInstance, CspError> {
        let n_cands = self.cand_labels.len();
        let mut adj: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n_cands); n_cands];
        let mut cand_vars: Vec<Vec<VarId>> = vec![Vec::new(); n_cands];
        let mut var_domain = Vec::with_capacity(self.vars.len());
        let mut var_values = Vec::with_capacity(self.vars.len());
        let mut var_refs = Vec::with_capacity(self.vars.len());
        let mut var_labels = Vec::with_capacity(self.vars.len());
        let mut var_lookup = HashMap::new();

        for (i, (vref, label, domain)) in self.vars.into_iter().enumerate() {
            let vid = VarId(i as u32);
            if var_lookup.insert(vref.clone(), vid).is_some() {
                return Err(CspError::InvalidInstance(format!(
                    "duplicate variable {label}"
                )));
            }
            let mut atoms: Vec<CandId> = Vec::with_capacity(domain.len());
            let mut values = Vec::with_capacity(domain.len());
            for &(value, c) in &domain {
                if c.index() >= n_cands {
                    return Err(CspError::InvalidInstance(format!(
                        "variable {label} names unknown atom {}",
                        c.0
                    )));
                }
                if atoms.contains(&c) || values.contains(&value) {
                    return Err(CspError::InvalidInstance(format!(
                        "variable {label} repeats a value or atom"
                    )));
                }
                atoms.push(c);
                values.push(value);
                cand_vars[c.index()].push(vid);
            }
            for (ia, &a) in atoms.iter().enumerate() {
                for &b in &atoms[ia + 1..] {
                    adj[a.index()].insert(b.index());
                    adj[b.index()].insert(a.index());
                }
            }
            var_domain.push(atoms);
            var_values.push(values);
            var_refs.push(vref);
            var_labels.push(label);
        }

        for (a, b) in self.links {
            if a == b {
                return Err(CspError::InvalidInstance("self-link".into()));
            }
            if a.index() >= n_cands || b.index() >= n_cands {
                return Err(CspError::InvalidInstance("link names unknown atom".into()));
            }
            adj[a.index()].insert(b.index());
            adj[b.index()].insert(a.index());
        }

        let adj_list = adj
            .iter()
            .map(|row| row.ones().map(|i| CandId(i as u32)).collect())
            .collect();

        Ok(CspInstance {
            family_names: self.family_names,
            cand_labels: self.cand_labels,
            cand_vars,
            var_domain,
            var_values,
            var_refs,
            var_labels,
            var_lookup,
            adj,
            adj_list,
        })
    }
}

/// Immutable problem structure: variables, domains and the link relation.
#[derive(Debug)]
pub struct CspInstance {
    family_names: Vec<String>,
    cand_labels: Vec<String>,
    cand_vars: Vec<Vec<VarId>>,
    var_domain: Vec<Vec<CandId>>,
    var_values: Vec<Vec<u16>>,
    var_refs: Vec<VariableRef>,
    var_labels: Vec<String>,
    var_lookup: HashMap<VariableRef, VarId>,
    adj: Vec<FixedBitSet>,
    adj_list: Vec<Vec<CandId>>,
}

impl CspInstance {
    pub fn num_candidates(&self) -> usize {
        self.cand_labels.len()
    }

    pub fn num_variables(&self) -> usize {
        self.var_refs.len()
    }

    pub fn candidates(&self) -> impl Iterator<Item = CandId> {
        (0..self.num_candidates() as u32).map(CandId)
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> {
        (0..self.num_variables() as u32).map(VarId)
    }

    pub fn family_name(&self, family: u8) -> &str {
        &self.family_names[family as usize]
    }

    pub fn family_of(&self, v: VarId) -> u8 {
        self.var_refs[v.index()].family
    }

    pub fn variable_ref(&self, v: VarId) -> &VariableRef {
        &self.var_refs[v.index()]
    }

    pub fn variable_id(&self, v: &VariableRef) -> Result<VarId, CspError> {
        self.var_lookup
            .get(v)
            .copied()
            .ok_or_else(|| CspError::MalformedReference(format!("unknown variable {v:?}")))
    }

    /// Resolves a `(variable, value)` reference to its atom.
    pub fn candidate(&self, c: &CandidateRef) -> Result<CandId, CspError> {
        let v = self.variable_id(&c.variable)?;
        self.var_values[v.index()]
            .iter()
            .position(|&x| x == c.value)
            .map(|i| self.var_domain[v.index()][i])
            .ok_or_else(|| {
                CspError::MalformedReference(format!(
                    "value {} not in domain of {}",
                    c.value,
                    self.var_labels[v.index()]
                ))
            })
    }

    /// The `(variable, value)` view of `c` through variable `v`.
    pub fn candidate_ref(&self, v: VarId, c: CandId) -> Option<CandidateRef> {
        let i = self.var_domain[v.index()].iter().position(|&x| x == c)?;
        Some(CandidateRef {
            variable: self.var_refs[v.index()].clone(),
            value: self.var_values[v.index()][i],
        })
    }

    pub fn cand_label(&self, c: CandId) -> &str {
        &self.cand_labels[c.index()]
    }

    pub fn var_label(&self, v: VarId) -> &str {
        &self.var_labels[v.index()]
    }

    /// Variables through which an atom is seen.
    #[inline]
    pub fn vars_of(&self, c: CandId) -> &[VarId] {
        &self.cand_vars[c.index()]
    }

    /// All atoms of a variable's domain.
    #[inline]
    pub fn domain(&self, v: VarId) -> &[CandId] {
        &self.var_domain[v.index()]
    }

    /// Atoms linked to `c`.
    #[inline]
    pub fn neighbours(&self, c: CandId) -> &[CandId] {
        &self.adj_list[c.index()]
    }

    #[inline]
    pub fn link_row(&self, c: CandId) -> &FixedBitSet {
        &self.adj[c.index()]
    }

    /// Link test on dense ids. Irreflexive by construction.
    #[inline]
    pub fn is_linked(&self, a: CandId, b: CandId) -> bool {
        self.adj[a.index()].contains(b.index())
    }

    /// Link test on public references.
    pub fn linked(&self, a: &CandidateRef, b: &CandidateRef) -> Result<bool, CspError> {
        let a = self.candidate(a)?;
        let b = self.candidate(b)?;
        Ok(self.is_linked(a, b))
    }

    /// Fresh state: every atom is a candidate, nothing is decided.
    pub fn full_state(&self) -> KnowledgeState {
        let mut cands = FixedBitSet::with_capacity(self.num_candidates());
        cands.insert_range(..);
        KnowledgeState {
            cands,
            values: FixedBitSet::with_capacity(self.num_candidates()),
            decided: vec![None; self.num_variables()],
            clashes: Vec::new(),
            contradiction: None,
        }
    }
}

/// Outcome of [`KnowledgeState::delete_candidate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deletion {
    Deleted,
    /// The candidate was already absent; nothing changed.
    Absent,
}

/// Per-problem mutable knowledge: remaining candidates, decided values and
/// the contradiction flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeState {
    cands: FixedBitSet,
    values: FixedBitSet,
    decided: Vec<Option<CandId>>,
    /// Variables holding two values; only reachable through forced givens.
    clashes: Vec<VarId>,
    contradiction: Option<VarId>,
}

impl KnowledgeState {
    #[inline]
    pub fn has_candidate(&self, c: CandId) -> bool {
        self.cands.contains(c.index())
    }

    #[inline]
    pub fn is_value(&self, c: CandId) -> bool {
        self.values.contains(c.index())
    }

    pub fn candidate_set(&self) -> &FixedBitSet {
        &self.cands
    }

    pub fn value_set(&self) -> &FixedBitSet {
        &self.values
    }

    pub fn present_candidates(&self) -> impl Iterator<Item = CandId> + '_ {
        self.cands.ones().map(|i| CandId(i as u32))
    }

    pub fn values(&self) -> impl Iterator<Item = CandId> + '_ {
        self.values.ones().map(|i| CandId(i as u32))
    }

    pub fn num_candidates(&self) -> usize {
        self.cands.count_ones(..)
    }

    #[inline]
    pub fn decided(&self, v: VarId) -> Option<CandId> {
        self.decided[v.index()]
    }

    #[inline]
    pub fn is_open(&self, v: VarId) -> bool {
        self.decided[v.index()].is_none()
    }

    pub fn contradiction(&self) -> Option<VarId> {
        self.contradiction
    }

    pub fn clashes(&self) -> &[VarId] {
        &self.clashes
    }

    pub(crate) fn set_contradiction(&mut self, v: VarId) {
        if self.contradiction.is_none() {
            self.contradiction = Some(v);
        }
    }

    /// Candidates of `v`; empty once `v` is decided.
    pub fn var_candidates<'a>(
        &'a self,
        inst: &'a CspInstance,
        v: VarId,
    ) -> impl Iterator<Item = CandId> + 'a {
        let open = self.is_open(v);
        inst.domain(v)
            .iter()
            .copied()
            .filter(move |&c| open && self.has_candidate(c))
    }

    pub fn candidate_count(&self, inst: &CspInstance, v: VarId) -> usize {
        if !self.is_open(v) {
            return 0;
        }
        inst.domain(v)
            .iter()
            .filter(|c| self.has_candidate(**c))
            .count()
    }

    pub fn is_bivalue(&self, inst: &CspInstance, v: VarId) -> bool {
        self.candidate_count(inst, v) == 2
    }

    /// Every variable decided and no contradiction.
    pub fn is_solved(&self) -> bool {
        self.contradiction.is_none()
            && self.clashes.is_empty()
            && self.decided.iter().all(Option::is_some)
    }

    pub fn is_inconsistent(&self) -> bool {
        self.contradiction.is_some()
    }

    /// Decides every variable seen through `c` to `c`. No propagation.
    pub fn assert_value(&mut self, inst: &CspInstance, c: CandId) -> Result<(), CspError> {
        if c.index() >= inst.num_candidates() {
            return Err(CspError::MalformedReference(format!("atom {}", c.0)));
        }
        if !self.has_candidate(c) {
            return Err(CspError::IllegalTransition(format!(
                "{} is not a candidate",
                inst.cand_label(c)
            )));
        }
        if let Some(&v) = inst.vars_of(c).iter().find(|v| !self.is_open(**v)) {
            return Err(CspError::IllegalTransition(format!(
                "variable {} already decided",
                inst.var_label(v)
            )));
        }
        self.cands.set(c.index(), false);
        self.values.insert(c.index());
        for &v in inst.vars_of(c) {
            self.decided[v.index()] = Some(c);
        }
        Ok(())
    }

    /// Places a value even if one of its variables is already decided; used
    /// for givens, where duplicates must be recorded rather than rejected.
    pub(crate) fn force_value(&mut self, inst: &CspInstance, c: CandId) {
        self.cands.set(c.index(), false);
        self.values.insert(c.index());
        for &v in inst.vars_of(c) {
            match self.decided[v.index()] {
                Some(prev) if prev != c => {
                    if !self.clashes.contains(&v) {
                        self.clashes.push(v);
                        self.clashes.sort();
                    }
                }
                _ => self.decided[v.index()] = Some(c),
            }
        }
    }

    /// Removes `c` from the candidates. Idempotent.
    pub fn delete_candidate(&mut self, c: CandId) -> Deletion {
        if self.has_candidate(c) {
            self.cands.set(c.index(), false);
            Deletion::Deleted
        } else {
            Deletion::Absent
        }
    }

    /// Canonical digest: decided values plus remaining candidates. All
    /// inconsistent states share [`INCONSISTENT_DIGEST`].
    pub fn digest(&self) -> StateDigest {
        if self.is_inconsistent() {
            return StateDigest(INCONSISTENT_DIGEST.to_string());
        }
        let mut h = Sha256::new();
        h.update(b"V");
        for i in self.values.ones() {
            h.update((i as u32).to_le_bytes());
        }
        h.update(b"C");
        for i in self.cands.ones() {
            h.update((i as u32).to_le_bytes());
        }
        let out = h.finalize();
        StateDigest(out[..12].iter().map(|b| format!("{b:02x}")).collect())
    }
}

pub const INCONSISTENT_DIGEST: &str = "inconsistent";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateDigest(pub String);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Counts solutions of the instance from `ks` by plain backtracking with
/// forward checking over the link relation, up to `cap`.
pub fn count_solutions(inst: &CspInstance, ks: &KnowledgeState, cap: usize) -> usize {
    fn go(inst: &CspInstance, ks: KnowledgeState, cap: usize, found: &mut usize) {
        // forward checking: drop candidates linked to values, fail on empties
        let mut ks = ks;
        let values: Vec<CandId> = ks.values().collect();
        for v in values {
            for &x in inst.neighbours(v) {
                ks.delete_candidate(x);
            }
        }
        let mut best: Option<(usize, VarId)> = None;
        for v in inst.variables() {
            if !ks.is_open(v) {
                continue;
            }
            let n = ks.candidate_count(inst, v);
            if n == 0 {
                return;
            }
            if best.is_none_or(|(m, _)| n < m) {
                best = Some((n, v));
            }
        }
        let Some((_, v)) = best else {
            *found += 1;
            return;
        };
        let options: Vec<CandId> = ks.var_candidates(inst, v).collect();
        for c in options {
            if *found >= cap {
                return;
            }
            let mut next = ks.clone();
            if next.assert_value(inst, c).is_ok() {
                go(inst, next, cap, found);
            }
        }
    }
    if ks.is_inconsistent() || !ks.clashes.is_empty() || cap == 0 {
        return 0;
    }
    // values already linked to each other make the state unsatisfiable
    let values: Vec<CandId> = ks.values().collect();
    for (i, &a) in values.iter().enumerate() {
        if values[i + 1..].iter().any(|&b| inst.is_linked(a, b)) {
            return 0;
        }
    }
    let mut found = 0;
    go(inst, ks.clone(), cap, &mut found);
    found.min(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_var_instance(link: bool) -> (CspInstance, [CandId; 4]) {
        let mut b = CspBuilder::new();
        let f = b.add_family("x");
        let x = b.add_variable_with_domain(VariableRef::new(f, &[0]), "x0", &[1, 2]);
        let y = b.add_variable_with_domain(VariableRef::new(f, &[1]), "x1", &[1, 2]);
        let _ = (x, y);
        if link {
            b.add_link(CandId(0), CandId(2));
        }
        let inst = b.build().unwrap();
        (inst, [CandId(0), CandId(1), CandId(2), CandId(3)])
    }

    fn cref(inst: &CspInstance, v: u16, value: u16) -> CandidateRef {
        let _ = inst;
        CandidateRef {
            variable: VariableRef::new(0, &[v]),
            value,
        }
    }

    #[test]
    fn same_variable_values_are_linked() {
        let (inst, _) = two_var_instance(false);
        assert!(inst.linked(&cref(&inst, 0, 1), &cref(&inst, 0, 2)).unwrap());
    }

    #[test]
    fn linked_is_irreflexive() {
        let (inst, _) = two_var_instance(true);
        let a = cref(&inst, 0, 1);
        assert!(!inst.linked(&a, &a).unwrap());
    }

    #[test]
    fn unconstrained_variables_are_not_linked() {
        let (inst, _) = two_var_instance(false);
        assert!(!inst.linked(&cref(&inst, 0, 1), &cref(&inst, 1, 1)).unwrap());
    }

    #[test]
    fn declared_link_is_symmetric() {
        let (inst, _) = two_var_instance(true);
        let a = cref(&inst, 0, 1);
        let b = cref(&inst, 1, 1);
        assert!(inst.linked(&a, &b).unwrap());
        assert!(inst.linked(&b, &a).unwrap());
    }

    #[test]
    fn unknown_reference_is_malformed() {
        let (inst, _) = two_var_instance(false);
        let bad = cref(&inst, 0, 9);
        assert!(matches!(
            inst.linked(&bad, &cref(&inst, 0, 1)),
            Err(CspError::MalformedReference(_))
        ));
        let bad_var = cref(&inst, 7, 1);
        assert!(inst.candidate(&bad_var).is_err());
    }

    #[test]
    fn self_link_rejected() {
        let mut b = CspBuilder::new();
        let f = b.add_family("x");
        b.add_variable_with_domain(VariableRef::new(f, &[0]), "x0", &[1, 2]);
        b.add_link(CandId(0), CandId(0));
        assert!(b.build().is_err());
    }

    #[test]
    fn assert_value_decides_only_its_variable() {
        let (inst, [a, b, c, d]) = two_var_instance(true);
        let mut ks = inst.full_state();
        ks.assert_value(&inst, a).unwrap();
        assert_eq!(ks.decided(VarId(0)), Some(a));
        assert_eq!(ks.candidate_count(&inst, VarId(0)), 0);
        // b is still an atom candidate but the decided variable shows none
        assert!(ks.has_candidate(b));
        assert!(ks.has_candidate(c) && ks.has_candidate(d));
        assert!(ks.is_open(VarId(1)));
    }

    #[test]
    fn assert_on_decided_variable_fails() {
        let (inst, [a, b, ..]) = two_var_instance(false);
        let mut ks = inst.full_state();
        ks.assert_value(&inst, a).unwrap();
        assert!(matches!(
            ks.assert_value(&inst, b),
            Err(CspError::IllegalTransition(_))
        ));
    }

    #[test]
    fn assert_absent_value_fails() {
        let (inst, [a, b, ..]) = two_var_instance(false);
        let mut ks = inst.full_state();
        ks.delete_candidate(b);
        assert!(ks.assert_value(&inst, b).is_err());
        assert!(ks.assert_value(&inst, a).is_ok());
    }

    #[test]
    fn delete_candidate_examples() {
        let (inst, [a, b, ..]) = two_var_instance(false);
        let mut ks = inst.full_state();
        assert_eq!(ks.delete_candidate(b), Deletion::Deleted);
        assert_eq!(
            ks.var_candidates(&inst, VarId(0)).collect::<Vec<_>>(),
            vec![a]
        );
        assert_eq!(ks.delete_candidate(a), Deletion::Deleted);
        assert_eq!(ks.candidate_count(&inst, VarId(0)), 0);
        let before = ks.clone();
        assert_eq!(ks.delete_candidate(a), Deletion::Absent);
        assert_eq!(ks, before);
    }

    #[test]
    fn bivalue_examples() {
        let (inst, [a, b, ..]) = two_var_instance(false);
        let mut ks = inst.full_state();
        assert!(ks.is_bivalue(&inst, VarId(0)));
        let mut single = ks.clone();
        single.delete_candidate(b);
        assert!(!single.is_bivalue(&inst, VarId(0)));
        ks.assert_value(&inst, a).unwrap();
        assert!(!ks.is_bivalue(&inst, VarId(0)));
    }

    #[test]
    fn count_solutions_on_tiny_instance() {
        let (free, _) = two_var_instance(false);
        assert_eq!(count_solutions(&free, &free.full_state(), 10), 4);
        let (linked, _) = two_var_instance(true);
        assert_eq!(count_solutions(&linked, &linked.full_state(), 10), 3);
        assert_eq!(count_solutions(&linked, &linked.full_state(), 2), 2);
    }

    #[test]
    fn digest_identifies_inconsistent_states() {
        let (inst, _) = two_var_instance(false);
        let mut a = inst.full_state();
        let mut b = inst.full_state();
        b.delete_candidate(CandId(3));
        assert_ne!(a.digest(), b.digest());
        a.set_contradiction(VarId(0));
        b.set_contradiction(VarId(1));
        assert_eq!(a.digest(), b.digest());
    }
}
