//! Depth-first pattern search from a target.
//!
//! Every search extends a partial pattern one step at a time, exactly along
//! the defining clauses: pick a variable holding a candidate linked to the
//! allowed justification set, compute its candidates compatible with the
//! target and the right candidates so far, and either close the pattern
//! (no compatible candidate), extend it (exactly one) or give up (more).
//!
//! For a given variable, only the smallest unused left candidate is tried;
//! any other choice yields the same continuation.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

use crate::csp::{CandId, CspInstance, KnowledgeState, VarId};

use super::{annotate, Elimination, Justification, PatternKind, PatternStep, PatternWitness};

/// Bit `f` set means variables of family `f` may carry pattern steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyMask(pub u32);

impl FamilyMask {
    pub const ALL: FamilyMask = FamilyMask(u32::MAX);

    pub fn only(families: &[u8]) -> Self {
        FamilyMask(families.iter().fold(0, |m, &f| m | (1 << f)))
    }

    #[inline]
    fn allows(self, family: u8) -> bool {
        self.0 & (1 << family) != 0
    }
}

struct Ctx<'a> {
    inst: &'a CspInstance,
    ks: &'a KnowledgeState,
    z: CandId,
    kind: PatternKind,
    families: FamilyMask,
    used_cands: FixedBitSet,
    used_vars: FixedBitSet,
    steps: Vec<PatternStep>,
    rights: Vec<CandId>,
    stamp: Vec<u32>,
    epoch: u32,
}

enum Outcome {
    Close,
    Extend(CandId),
    Dead,
}

impl<'a> Ctx<'a> {
    fn new(
        inst: &'a CspInstance,
        ks: &'a KnowledgeState,
        z: CandId,
        kind: PatternKind,
        families: FamilyMask,
    ) -> Self {
        let mut used_cands = FixedBitSet::with_capacity(inst.num_candidates());
        used_cands.insert(z.index());
        Ctx {
            inst,
            ks,
            z,
            kind,
            families,
            used_cands,
            used_vars: FixedBitSet::with_capacity(inst.num_variables()),
            steps: Vec::new(),
            rights: Vec::new(),
            stamp: vec![0; inst.num_variables()],
            epoch: 0,
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch += 1;
        self.epoch
    }

    #[inline]
    fn eligible(&self, v: VarId) -> bool {
        self.ks.is_open(v)
            && !self.used_vars.contains(v.index())
            && self.families.allows(self.inst.family_of(v))
    }

    fn push(
        &mut self,
        variable: VarId,
        left: CandId,
        right: Option<CandId>,
        justification: Justification,
    ) {
        self.used_cands.insert(left.index());
        if let Some(r) = right {
            self.used_cands.insert(r.index());
            self.rights.push(r);
        }
        self.used_vars.insert(variable.index());
        self.steps.push(PatternStep {
            variable,
            left,
            right,
            justification,
            z_candidates: Vec::new(),
            t_candidates: Vec::new(),
        });
    }

    fn pop(&mut self) {
        let s = self.steps.pop().expect("pop after push");
        self.used_cands.set(s.left.index(), false);
        if let Some(r) = s.right {
            self.used_cands.set(r.index(), false);
            self.rights.pop();
        }
        self.used_vars.set(s.variable.index(), false);
    }

    fn witness(&self) -> PatternWitness {
        let mut steps = self.steps.clone();
        annotate(self.inst, self.ks, self.z, &mut steps);
        PatternWitness {
            kind: self.kind,
            target: Some(self.z),
            steps,
        }
    }

    /// Step outcome for the linear kinds. `incompat` is the set the kind
    /// measures compatibility against.
    fn linear_outcome(&self, v: VarId, left: CandId, incompat: &FixedBitSet) -> Outcome {
        let mut only = None;
        let mut count = 0;
        for x in self.ks.var_candidates(self.inst, v) {
            if x == left || incompat.contains(x.index()) {
                continue;
            }
            count += 1;
            if count > 1 {
                return Outcome::Dead;
            }
            only = Some(x);
        }
        match only {
            None => Outcome::Close,
            Some(r) => Outcome::Extend(r),
        }
    }

    /// Linear search (chains and whips). `prev` is the target or the last
    /// right candidate; `incompat` holds candidates linked to the relevant set.
    fn linear(&mut self, prev: CandId, incompat: &FixedBitSet, budget: usize) -> bool {
        let epoch = self.next_epoch();
        let k = self.steps.len();
        let justification = if k == 0 {
            Justification::Target
        } else {
            Justification::Right(k - 1)
        };
        let inst = self.inst;
        // (variable, smallest unused left) pairs, collected before recursing
        let mut pairs: Vec<(VarId, CandId)> = Vec::new();
        for &left in inst.neighbours(prev) {
            if !self.ks.has_candidate(left) || self.used_cands.contains(left.index()) {
                continue;
            }
            for &v in inst.vars_of(left) {
                if self.stamp[v.index()] == epoch || !self.eligible(v) {
                    continue;
                }
                self.stamp[v.index()] = epoch;
                pairs.push((v, left));
            }
        }

        if self.kind.is_chain() {
            for (v, left) in pairs {
                let r = if self.kind == PatternKind::BivalueChain {
                    let mut it = self.ks.var_candidates(inst, v).filter(|&x| x != left);
                    let (Some(r), None) = (it.next(), it.next()) else {
                        continue;
                    };
                    r
                } else {
                    let Outcome::Extend(r) = self.linear_outcome(v, left, incompat) else {
                        continue;
                    };
                    r
                };
                if !self.used_cands.contains(r.index())
                    && self.chain_step(v, left, r, justification, incompat, budget)
                {
                    return true;
                }
            }
            return false;
        }

        // whips: close here if possible, otherwise extend
        let mut extensions = Vec::new();
        for (v, left) in pairs {
            match self.linear_outcome(v, left, incompat) {
                Outcome::Close => {
                    self.push(v, left, None, justification);
                    return true;
                }
                Outcome::Extend(r) if budget > 1 && !self.used_cands.contains(r.index()) => {
                    extensions.push((v, left, r));
                }
                _ => {}
            }
        }
        for (v, left, r) in extensions {
            self.push(v, left, Some(r), justification);
            let found = if self.kind == PatternKind::ZtWhip {
                let mut next = incompat.clone();
                next.union_with(inst.link_row(r));
                self.linear(r, &next, budget - 1)
            } else {
                self.linear(r, incompat, budget - 1)
            };
            if found {
                return true;
            }
            self.pop();
        }
        false
    }

    fn chain_step(
        &mut self,
        v: VarId,
        left: CandId,
        r: CandId,
        justification: Justification,
        incompat: &FixedBitSet,
        budget: usize,
    ) -> bool {
        self.push(v, left, Some(r), justification);
        if self.inst.is_linked(r, self.z) {
            return true;
        }
        if budget > 1 {
            let found = if self.kind == PatternKind::TChain {
                let mut next = incompat.clone();
                next.union_with(self.inst.link_row(r));
                self.linear(r, &next, budget - 1)
            } else {
                self.linear(r, incompat, budget - 1)
            };
            if found {
                return true;
            }
        }
        self.pop();
        false
    }

    /// Smallest unused candidate of `v` inside `incompat`, with the earliest
    /// element of the justification set (target, then rights) it is linked to.
    fn pick_left(&self, v: VarId, incompat: &FixedBitSet) -> Option<(CandId, Justification)> {
        let left = self
            .ks
            .var_candidates(self.inst, v)
            .find(|x| incompat.contains(x.index()) && !self.used_cands.contains(x.index()))?;
        Some((left, self.justify(left)))
    }

    fn justify(&self, left: CandId) -> Justification {
        if self.inst.is_linked(left, self.z) {
            return Justification::Target;
        }
        let j = self
            .steps
            .iter()
            .position(|s| s.right.is_some_and(|r| self.inst.is_linked(left, r)))
            .expect("left candidate is linked to the justification set");
        Justification::Right(j)
    }

    /// Steps available from the current justification set, plus the first
    /// closing variable if any.
    fn braid_moves(
        &mut self,
        incompat: &FixedBitSet,
    ) -> (Option<(VarId, CandId, Justification)>, Vec<(VarId, CandId)>) {
        let epoch = self.next_epoch();
        let inst = self.inst;
        let mut closing: Option<(VarId, CandId, Justification)> = None;
        let mut moves = Vec::new();
        let sources: Vec<CandId> = std::iter::once(self.z)
            .chain(self.rights.iter().copied())
            .collect();
        for s in sources {
            for &x in inst.neighbours(s) {
                if !self.ks.has_candidate(x) {
                    continue;
                }
                for &v in inst.vars_of(x) {
                    if self.stamp[v.index()] == epoch || !self.eligible(v) {
                        continue;
                    }
                    self.stamp[v.index()] = epoch;
                    let mut only = None;
                    let mut count = 0;
                    for y in self.ks.var_candidates(inst, v) {
                        if !incompat.contains(y.index()) {
                            count += 1;
                            only = Some(y);
                        }
                    }
                    match (count, only) {
                        (0, _) => {
                            if closing.is_none_or(|(w, _, _)| v < w) {
                                if let Some((l, j)) = self.pick_left(v, incompat) {
                                    closing = Some((v, l, j));
                                }
                            }
                        }
                        (1, Some(r)) if !self.used_cands.contains(r.index()) => moves.push((v, r)),
                        _ => {}
                    }
                }
            }
        }
        moves.sort();
        (closing, moves)
    }

    fn braid(
        &mut self,
        incompat: &FixedBitSet,
        budget: usize,
        seen: &mut HashMap<Vec<u32>, usize>,
    ) -> bool {
        let (closing, moves) = self.braid_moves(incompat);
        if let Some((v, l, j)) = closing {
            self.push(v, l, None, j);
            return true;
        }
        if budget <= 1 {
            return false;
        }
        for (v, r) in moves {
            if self.used_cands.contains(r.index()) {
                continue;
            }
            let Some((l, j)) = self.pick_left(v, incompat) else {
                continue;
            };
            self.push(v, l, Some(r), j);
            let mut key: Vec<u32> = self
                .steps
                .iter()
                .flat_map(|s| [s.variable.0, s.right.map_or(0, |r| r.0)])
                .collect();
            key_sort_pairs(&mut key);
            let fresh = seen.get(&key).is_none_or(|&b| b < budget - 1);
            if fresh {
                seen.insert(key, budget - 1);
                let mut next = incompat.clone();
                next.union_with(self.inst.link_row(r));
                if self.braid(&next, budget - 1, seen) {
                    return true;
                }
            }
            self.pop();
        }
        false
    }
}

fn key_sort_pairs(key: &mut Vec<u32>) {
    let mut pairs: Vec<(u32, u32)> = key.chunks(2).map(|p| (p[0], p[1])).collect();
    pairs.sort_unstable();
    key.clear();
    key.extend(pairs.into_iter().flat_map(|(a, b)| [a, b]));
}

fn initial_incompat(inst: &CspInstance, z: CandId, kind: PatternKind) -> FixedBitSet {
    match kind {
        // t-chains measure compatibility against earlier rights only
        PatternKind::TChain | PatternKind::BivalueChain => {
            FixedBitSet::with_capacity(inst.num_candidates())
        }
        _ => inst.link_row(z).clone(),
    }
}

/// Witness of `kind` on `z` of length at most `max_len`, searched exactly at
/// that bound (no iterative deepening).
fn search_upto(
    inst: &CspInstance,
    ks: &KnowledgeState,
    kind: PatternKind,
    z: CandId,
    max_len: usize,
    families: FamilyMask,
) -> Option<PatternWitness> {
    if max_len == 0 || !ks.has_candidate(z) {
        return None;
    }
    let mut ctx = Ctx::new(inst, ks, z, kind, families);
    let incompat = initial_incompat(inst, z, kind);
    let found = if kind == PatternKind::ZtBraid {
        ctx.braid(&incompat, max_len, &mut HashMap::new())
    } else {
        ctx.linear(z, &incompat, max_len)
    };
    found.then(|| ctx.witness())
}

/// Shortest witness of `kind` on `z` with length at most `max_len`.
pub fn search_pattern(
    inst: &CspInstance,
    ks: &KnowledgeState,
    kind: PatternKind,
    z: CandId,
    max_len: usize,
    families: FamilyMask,
) -> Option<PatternWitness> {
    if kind == PatternKind::ZtBraid {
        return search_braid_in(inst, ks, z, Some(max_len), families);
    }
    (1..=max_len).find_map(|l| search_upto(inst, ks, kind, z, l, families))
}

/// Shortest zt-whip on `z` of length at most `max_len`.
pub fn search_whip(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    max_len: usize,
) -> Option<PatternWitness> {
    search_pattern(inst, ks, PatternKind::ZtWhip, z, max_len, FamilyMask::ALL)
}

pub fn search_z_whip(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    max_len: usize,
) -> Option<PatternWitness> {
    search_pattern(inst, ks, PatternKind::ZWhip, z, max_len, FamilyMask::ALL)
}

/// Shortest bivalue- or t-chain on `z`, restricted to the given families.
pub fn search_chain(
    inst: &CspInstance,
    ks: &KnowledgeState,
    kind: PatternKind,
    z: CandId,
    max_len: usize,
    families: FamilyMask,
) -> Option<PatternWitness> {
    assert!(kind.is_chain(), "search_chain takes a chain kind");
    search_pattern(inst, ks, kind, z, max_len, families)
}

/// zt-braid on `z` of length at most `max_len`, or of any length when
/// `max_len` is `None`.
///
/// Availability of braid steps only grows with the justification set, so
/// saturating the set decides whether a braid can exist at all (ignoring
/// that left candidates must be distinct). [`braid_closure`] saturates with
/// distinct left candidates and yields a pruned witness; queries it does not
/// meet fall back to the depth-first search.
pub fn search_braid(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    max_len: Option<usize>,
) -> Option<PatternWitness> {
    search_braid_in(inst, ks, z, max_len, FamilyMask::ALL)
}

fn search_braid_in(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    max_len: Option<usize>,
    families: FamilyMask,
) -> Option<PatternWitness> {
    if !braid_reachable(inst, ks, z, families) {
        return None;
    }
    match (max_len, braid_closure(inst, ks, z, families)) {
        (None, Some(c)) => Some(c),
        (Some(m), Some(c)) if c.len() <= m => Some(c),
        (Some(m), _) => search_upto(inst, ks, PatternKind::ZtBraid, z, m, families),
        (None, None) => {
            let open = inst
                .variables()
                .filter(|&v| ks.is_open(v) && families.allows(inst.family_of(v)))
                .count();
            search_upto(inst, ks, PatternKind::ZtBraid, z, open, families)
        }
    }
}

struct Saturation {
    /// Target followed by the right candidates in order of addition.
    sset: Vec<CandId>,
    /// (variable, left, right) in order of addition.
    added: Vec<(VarId, CandId, CandId)>,
    closing: (VarId, CandId),
}

/// Grows the justification set from `z` until a variable has no compatible
/// candidate left. With `distinct_lefts`, every step reserves a left
/// candidate no other step uses.
fn saturate(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    families: FamilyMask,
    distinct_lefts: bool,
) -> Option<Saturation> {
    if !ks.has_candidate(z) {
        return None;
    }
    let mut sset: Vec<CandId> = vec![z];
    let mut used = FixedBitSet::with_capacity(inst.num_candidates());
    used.insert(z.index());
    let mut incompat = inst.link_row(z).clone();
    let mut used_vars = FixedBitSet::with_capacity(inst.num_variables());
    let mut added = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    let mut queued = FixedBitSet::with_capacity(inst.num_variables());

    let enqueue_around =
        |c: CandId, queue: &mut std::collections::VecDeque<VarId>, queued: &mut FixedBitSet| {
            for &x in inst.neighbours(c) {
                if !ks.has_candidate(x) {
                    continue;
                }
                for &v in inst.vars_of(x) {
                    if !queued.contains(v.index()) {
                        queued.insert(v.index());
                        queue.push_back(v);
                    }
                }
            }
        };
    enqueue_around(z, &mut queue, &mut queued);

    while let Some(v) = queue.pop_front() {
        queued.set(v.index(), false);
        if used_vars.contains(v.index()) || !ks.is_open(v) || !families.allows(inst.family_of(v)) {
            continue;
        }
        let mut count = 0;
        let mut only = None;
        let mut left = None;
        for y in ks.var_candidates(inst, v) {
            if incompat.contains(y.index()) {
                if left.is_none() && !(distinct_lefts && used.contains(y.index())) {
                    left = Some(y);
                }
            } else {
                count += 1;
                only = Some(y);
            }
        }
        let Some(left) = left else { continue };
        match (count, only) {
            (0, _) => {
                return Some(Saturation {
                    sset,
                    added,
                    closing: (v, left),
                })
            }
            (1, Some(r)) if !used.contains(r.index()) => {
                used_vars.insert(v.index());
                used.insert(left.index());
                used.insert(r.index());
                added.push((v, left, r));
                sset.push(r);
                incompat.union_with(inst.link_row(r));
                enqueue_around(r, &mut queue, &mut queued);
            }
            _ => {}
        }
    }
    None
}

/// Whether saturation from `z` reaches a closing variable when left
/// candidates may be shared. Every chain, whip and braid on `z` passes.
pub fn braid_reachable(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    families: FamilyMask,
) -> bool {
    saturate(inst, ks, z, families, false).is_some()
}

/// Saturates the braid justification set from `z` with distinct left
/// candidates. Returns a pruned braid when a closing variable is reached,
/// `None` otherwise.
pub fn braid_closure(
    inst: &CspInstance,
    ks: &KnowledgeState,
    z: CandId,
    families: FamilyMask,
) -> Option<PatternWitness> {
    saturate(inst, ks, z, families, true).map(|s| prune(inst, ks, z, &s))
}

/// Keeps only the steps the closing variable depends on.
fn prune(inst: &CspInstance, ks: &KnowledgeState, z: CandId, sat: &Saturation) -> PatternWitness {
    let Saturation {
        sset,
        added,
        closing,
    } = sat;
    // earliest element of sset (0 = target, i = added[i-1]) linked to x
    let earliest = |x: CandId, before: usize| (0..before).find(|&i| inst.is_linked(x, sset[i]));
    let mut needed = vec![false; added.len()];
    let mark = |v: VarId, skip: Option<CandId>, before: usize, needed: &mut Vec<bool>| {
        for x in ks.var_candidates(inst, v) {
            if Some(x) == skip {
                continue;
            }
            if let Some(i) = earliest(x, before) {
                if i > 0 {
                    needed[i - 1] = true;
                }
            }
        }
    };
    mark(closing.0, None, sset.len(), &mut needed);
    for k in (0..added.len()).rev() {
        if needed[k] {
            let (v, _, r) = added[k];
            mark(v, Some(r), k + 1, &mut needed);
        }
    }

    // position in the pruned braid of each kept step
    let mut position = vec![usize::MAX; added.len()];
    let mut steps: Vec<PatternStep> = Vec::new();
    let justify = |left: CandId, before: usize, position: &[usize]| match earliest(left, before) {
        Some(0) => Justification::Target,
        Some(i) => Justification::Right(position[i - 1]),
        None => unreachable!("left candidates are incompatible when chosen"),
    };
    for k in (0..added.len()).filter(|&k| needed[k]) {
        let (v, l, r) = added[k];
        let justification = justify(l, k + 1, &position);
        position[k] = steps.len();
        steps.push(PatternStep {
            variable: v,
            left: l,
            right: Some(r),
            justification,
            z_candidates: Vec::new(),
            t_candidates: Vec::new(),
        });
    }
    let justification = justify(closing.1, sset.len(), &position);
    steps.push(PatternStep {
        variable: closing.0,
        left: closing.1,
        right: None,
        justification,
        z_candidates: Vec::new(),
        t_candidates: Vec::new(),
    });
    annotate(inst, ks, z, &mut steps);
    PatternWitness {
        kind: PatternKind::ZtBraid,
        target: Some(z),
        steps,
    }
}

/// Order in which targets are scanned.
#[derive(Debug, Clone)]
pub enum ScanOrder {
    /// Dense candidate index order.
    Natural,
    /// Explicit permutation of candidate ids.
    Permuted(Vec<CandId>),
}

impl ScanOrder {
    fn targets(&self, ks: &KnowledgeState) -> Vec<CandId> {
        match self {
            ScanOrder::Natural => ks.present_candidates().collect(),
            ScanOrder::Permuted(order) => order
                .iter()
                .copied()
                .filter(|&c| ks.has_candidate(c))
                .collect(),
        }
    }
}

/// Default driver: natural scan order, shortest witness first, kinds tried
/// in the order given.
pub fn find_elimination(
    inst: &CspInstance,
    ks: &KnowledgeState,
    kinds: &[PatternKind],
    max_len: usize,
) -> Option<Elimination> {
    find_elimination_with(inst, ks, kinds, Some(max_len), &ScanOrder::Natural, true)
}

/// First elimination licensed by `kinds` (in priority order) with length at
/// most `max_len` (`None`: unbounded). With `shortest_first`, every length
/// is exhausted over all kinds and targets before the next one is tried.
pub fn find_elimination_with(
    inst: &CspInstance,
    ks: &KnowledgeState,
    kinds: &[PatternKind],
    max_len: Option<usize>,
    order: &ScanOrder,
    shortest_first: bool,
) -> Option<Elimination> {
    if kinds.is_empty() || ks.is_inconsistent() {
        return None;
    }
    let targets = order.targets(ks);
    // every pattern implies saturation succeeds, so other targets are skipped
    let live: Vec<CandId> = targets
        .into_iter()
        .filter(|&z| braid_reachable(inst, ks, z, FamilyMask::ALL))
        .collect();
    if live.is_empty() {
        return None;
    }
    let closures: Vec<Option<PatternWitness>> = if kinds.contains(&PatternKind::ZtBraid) {
        live.iter()
            .map(|&z| braid_closure(inst, ks, z, FamilyMask::ALL))
            .collect()
    } else {
        vec![None; live.len()]
    };
    let open_vars = inst.variables().filter(|&v| ks.is_open(v)).count().max(1);
    let cap = max_len.unwrap_or(open_vars);

    let attempt = |kind: PatternKind,
                   z: CandId,
                   closure: &Option<PatternWitness>,
                   len: usize|
     -> Option<PatternWitness> {
        match (kind, closure) {
            (PatternKind::ZtBraid, Some(c)) if c.len() <= len => Some(c.clone()),
            // unbounded braids are ranked by their pruned closure length
            (PatternKind::ZtBraid, Some(_)) if max_len.is_none() => None,
            _ => search_upto(inst, ks, kind, z, len, FamilyMask::ALL),
        }
    };

    if shortest_first {
        for len in 1..=cap {
            for &kind in kinds {
                for (&z, closure) in live.iter().zip(&closures) {
                    if let Some(w) = attempt(kind, z, closure, len) {
                        return Some(Elimination {
                            target: z,
                            witness: w,
                        });
                    }
                }
            }
        }
        None
    } else {
        for &z in &live {
            for &kind in kinds {
                let found = match kind {
                    PatternKind::ZtBraid => search_braid_in(inst, ks, z, max_len, FamilyMask::ALL),
                    _ => search_pattern(inst, ks, kind, z, cap, FamilyMask::ALL),
                };
                if let Some(w) = found {
                    return Some(Elimination {
                        target: z,
                        witness: w,
                    });
                }
            }
        }
        None
    }
}
