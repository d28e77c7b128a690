use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::basic::brt_fixpoint;
use crate::csp::{CspBuilder, VariableRef};
use crate::sudoku::{self, bn_var, build_csp, cand, parse_grid, unique_solution, FAMILY_RC};

fn step(
    variable: VarId,
    left: CandId,
    right: Option<CandId>,
    justification: Justification,
) -> PatternStep {
    PatternStep {
        variable,
        left,
        right,
        justification,
        z_candidates: Vec::new(),
        t_candidates: Vec::new(),
    }
}

fn corpus(n: usize) -> Vec<&'static str> {
    include_str!("../../data/corpus.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .take(n)
        .collect()
}

/// BRT-stuck states along an L7 solve of each puzzle, with the solution.
fn stuck_states(n: usize) -> Vec<(KnowledgeState, Vec<CandId>)> {
    let inst = sudoku::instance();
    let mut out = Vec::new();
    for line in corpus(n) {
        let g = parse_grid(line).unwrap();
        let sol = sudoku::solution_atoms(&unique_solution(&g).unwrap());
        let (mut ks, _) = brt_fixpoint(&inst, &build_csp(&g).initial);
        for _ in 0..4 {
            if ks.is_solved() {
                break;
            }
            out.push((ks.clone(), sol.clone()));
            let Some(e) = find_elimination(&inst, &ks, &[PatternKind::ZtWhip], 7) else {
                break;
            };
            ks.delete_candidate(e.target);
            ks = brt_fixpoint(&inst, &ks).0;
        }
    }
    out
}

/// Empty Sudoku grid with 5 removed from every block-1 cell but r1c1.
fn lone_five_state() -> KnowledgeState {
    let inst = sudoku::instance();
    let mut ks = inst.full_state();
    for r in 1..=3 {
        for c in 1..=3 {
            if (r, c) != (1, 1) {
                ks.delete_candidate(cand(5, r, c));
            }
        }
    }
    ks
}

#[test]
fn length_one_whip_on_lone_block_candidate() {
    let inst = sudoku::instance();
    let ks = lone_five_state();
    let z = cand(6, 1, 1);
    let w = PatternWitness {
        kind: PatternKind::ZtWhip,
        target: Some(z),
        steps: vec![step(
            bn_var(1, 5),
            cand(5, 1, 1),
            None,
            Justification::Target,
        )],
    };
    assert_eq!(validate_pattern(&inst, &ks, &w, z), Ok(true));
    let found = search_whip(&inst, &ks, z, 3).expect("a length-1 whip exists");
    assert_eq!(found.len(), 1);
    assert_eq!(validate_pattern(&inst, &ks, &found, z), Ok(true));
}

#[test]
fn stale_witness_is_an_error_not_a_failure() {
    let inst = sudoku::instance();
    let mut ks = lone_five_state();
    let z = cand(6, 1, 1);
    let w = PatternWitness {
        kind: PatternKind::ZtWhip,
        target: Some(z),
        steps: vec![step(
            bn_var(1, 5),
            cand(5, 1, 1),
            None,
            Justification::Target,
        )],
    };
    ks.delete_candidate(cand(5, 1, 1));
    assert!(matches!(
        validate_pattern(&inst, &ks, &w, z),
        Err(PatternError::StaleWitness(_))
    ));
}

#[test]
fn wrong_kind_clauses_fail() {
    let inst = sudoku::instance();
    let ks = lone_five_state();
    let z = cand(6, 1, 1);
    // 5r1c2 is absent, so 7r1c1 is not linked correctly either way
    let w = PatternWitness {
        kind: PatternKind::ZtWhip,
        target: Some(z),
        steps: vec![step(
            bn_var(1, 7),
            cand(7, 1, 1),
            None,
            Justification::Target,
        )],
    };
    assert_eq!(validate_pattern(&inst, &ks, &w, z), Ok(false));
    // a chain needs a right candidate in its last step
    let mut chain = w.clone();
    chain.kind = PatternKind::BivalueChain;
    chain.steps = vec![step(
        bn_var(1, 5),
        cand(5, 1, 1),
        None,
        Justification::Target,
    )];
    assert_eq!(validate_pattern(&inst, &ks, &chain, z), Ok(false));
}

/// Small hand-built network: target `Z`, variables `V1 {L1 R1 A1}`,
/// `V2 {L2 R2 A2}`, `V3 {L3 B}`.
struct Net {
    inst: CspInstance,
    z: CandId,
    v: [VarId; 4],
    l: [CandId; 3],
    r: [CandId; 2],
    a: [CandId; 2],
    b: CandId,
}

fn net(links: &[(&str, &str)]) -> Net {
    let mut bld = CspBuilder::new();
    let f = bld.add_family("x");
    let names = ["Z", "Y", "L1", "R1", "A1", "L2", "R2", "A2", "L3", "B"];
    let ids: Vec<CandId> = names.iter().map(|n| bld.add_candidate(*n)).collect();
    let id = |n: &str| ids[names.iter().position(|&m| m == n).unwrap()];
    let mut var = |name: &str, k: u16, members: &[&str]| {
        let dom = members
            .iter()
            .enumerate()
            .map(|(i, m)| (i as u16 + 1, id(m)))
            .collect();
        bld.add_variable(VariableRef::new(f, &[k]), name, dom)
    };
    let v0 = var("V0", 0, &["Z", "Y"]);
    let v1 = var("V1", 1, &["L1", "R1", "A1"]);
    let v2 = var("V2", 2, &["L2", "R2", "A2"]);
    let v3 = var("V3", 3, &["L3", "B"]);
    for (x, y) in links {
        bld.add_link(id(x), id(y));
    }
    Net {
        inst: bld.build().unwrap(),
        z: id("Z"),
        v: [v0, v1, v2, v3],
        l: [id("L1"), id("L2"), id("L3")],
        r: [id("R1"), id("R2")],
        a: [id("A1"), id("A2")],
        b: id("B"),
    }
}

fn net_braid(n: &Net, j2: Justification, j3: Justification) -> PatternWitness {
    let mut steps = vec![
        step(n.v[1], n.l[0], Some(n.r[0]), Justification::Target),
        step(n.v[2], n.l[1], Some(n.r[1]), j2),
        step(n.v[3], n.l[2], None, j3),
    ];
    annotate(&n.inst, &n.inst.full_state(), n.z, &mut steps);
    PatternWitness {
        kind: PatternKind::ZtBraid,
        target: Some(n.z),
        steps,
    }
}

#[test]
fn crossed_net_is_not_a_braid() {
    // A1 sees only R2 and A2 sees only R1: neither step can come first
    let n = net(&[
        ("L1", "Z"),
        ("L2", "Z"),
        ("A1", "R2"),
        ("A2", "R1"),
        ("L3", "R2"),
        ("B", "Z"),
    ]);
    let ks = n.inst.full_state();
    let w = net_braid(&n, Justification::Target, Justification::Right(1));
    assert_eq!(validate_pattern(&n.inst, &ks, &w, n.z), Ok(false));
    let mut swapped = w.clone();
    swapped.steps.swap(0, 1);
    assert_eq!(validate_pattern(&n.inst, &ks, &swapped, n.z), Ok(false));
    assert!(search_braid(&n.inst, &ks, n.z, None).is_none());
    assert!(braid_closure(&n.inst, &ks, n.z, FamilyMask::ALL).is_none());
}

#[test]
fn net_with_inner_link_to_earlier_right_is_a_braid() {
    // A1 sees Z, A2 sees R1; L3 hangs off R2 and B off Z
    let n = net(&[
        ("L1", "Z"),
        ("A1", "Z"),
        ("L2", "Z"),
        ("A2", "R1"),
        ("L3", "R2"),
        ("B", "Z"),
    ]);
    let ks = n.inst.full_state();
    let w = net_braid(&n, Justification::Target, Justification::Right(1));
    assert_eq!(validate_pattern(&n.inst, &ks, &w, n.z), Ok(true));
    assert_eq!(w.steps[1].t_candidates, vec![n.a[1]]);
    assert_eq!(w.steps[0].z_candidates, vec![n.a[0]]);
    // L2 sees Z, not R1, so it is not a whip
    let mut whip = w.clone();
    whip.kind = PatternKind::ZtWhip;
    assert_eq!(validate_pattern(&n.inst, &ks, &whip, n.z), Ok(false));
    // a wrong justification index is rejected
    let bad = net_braid(&n, Justification::Right(0), Justification::Right(1));
    assert_eq!(validate_pattern(&n.inst, &ks, &bad, n.z), Ok(false));
    let found = search_braid(&n.inst, &ks, n.z, Some(3)).expect("braid exists");
    assert_eq!(validate_pattern(&n.inst, &ks, &found, n.z), Ok(true));
    // A2 can serve as a left candidate after R1, which gives a whip
    let w = search_whip(&n.inst, &ks, n.z, 3).expect("whip through A2");
    assert_eq!(w.steps[1].left, n.a[1]);
    assert_eq!(n.b, ks.var_candidates(&n.inst, n.v[3]).nth(1).unwrap());
}

#[test]
fn display_uses_brace_notation() {
    let n = net(&[
        ("L1", "Z"),
        ("A1", "Z"),
        ("L2", "Z"),
        ("A2", "R1"),
        ("L3", "R2"),
        ("B", "Z"),
    ]);
    let w = net_braid(&n, Justification::Target, Justification::Right(1));
    assert_eq!(
        w.display(&n.inst).to_string(),
        "zt-braid[3]: V1{L1(<Z) R1} - V2{L2(<Z) R2} - V3{L3(<R2)} => not Z"
    );
    let whip = PatternWitness {
        kind: PatternKind::ZtWhip,
        ..w
    };
    assert_eq!(
        whip.display(&n.inst).to_string(),
        "zt-whip[3]: V1{L1 R1} - V2{L2 R2} - V3{L3} => not Z"
    );
}

#[test]
fn kind_names_round_trip() {
    for k in PatternKind::ALL {
        assert_eq!(k.name().parse::<PatternKind>(), Ok(k));
    }
    assert!("fish".parse::<PatternKind>().is_err());
}

#[test]
fn empty_grid_has_no_short_patterns() {
    let inst = sudoku::instance();
    let ks = inst.full_state();
    for z in inst.candidates() {
        assert!(search_whip(&inst, &ks, z, 2).is_none());
        assert!(search_braid(&inst, &ks, z, Some(2)).is_none());
    }
    assert!(find_elimination(&inst, &ks, &PatternKind::ALL, 2).is_none());
}

#[test]
fn no_kinds_no_elimination() {
    let inst = sudoku::instance();
    let (ks, _) = &stuck_states(10)[0];
    assert!(find_elimination(&inst, ks, &[], 10).is_none());
}

#[test]
fn length_bound_is_respected_on_corpus_state() {
    // first state whose shortest whip elimination has length 3
    let inst = sudoku::instance();
    let states = stuck_states(40);
    let (ks, e) = states
        .iter()
        .find_map(|(ks, _)| {
            let e = find_elimination(&inst, ks, &[PatternKind::ZtWhip], 7)?;
            (e.witness.len() == 3).then_some((ks, e))
        })
        .expect("some corpus state needs a length-3 whip");
    assert!(find_elimination(&inst, ks, &[PatternKind::ZtWhip], 2).is_none());
    assert_eq!(
        find_elimination(&inst, ks, &[PatternKind::ZtWhip], 3),
        Some(e)
    );
}

#[test]
fn corpus_witnesses_are_sound_and_subsumed() {
    let inst = sudoku::instance();
    let mut whips = 0;
    let mut chains = 0;
    for (ks, sol) in stuck_states(25) {
        for z in ks.present_candidates() {
            let braid = search_braid(&inst, &ks, z, None);
            if let Some(b) = &braid {
                assert_eq!(
                    validate_pattern(&inst, &ks, b, z),
                    Ok(true),
                    "{}",
                    b.display(&inst)
                );
                assert!(!sol.contains(&z), "braid eliminates a solution candidate");
            } else {
                assert!(
                    search_whip(&inst, &ks, z, 6).is_none(),
                    "{}",
                    inst.cand_label(z)
                );
                continue;
            }
            for kind in [
                PatternKind::BivalueChain,
                PatternKind::TChain,
                PatternKind::ZWhip,
            ] {
                if let Some(c) = search_pattern(&inst, &ks, kind, z, 5, FamilyMask::ALL) {
                    chains += 1;
                    assert_eq!(
                        validate_pattern(&inst, &ks, &c, z),
                        Ok(true),
                        "{}",
                        c.display(&inst)
                    );
                    let as_whip = to_zt_whip(&inst, &ks, &c).expect("converts to a zt-whip");
                    assert!(as_whip.len() <= c.len());
                    assert_eq!(validate_pattern(&inst, &ks, &as_whip, z), Ok(true));
                }
            }
            if let Some(w) = search_whip(&inst, &ks, z, 6) {
                whips += 1;
                assert_eq!(
                    validate_pattern(&inst, &ks, &w, z),
                    Ok(true),
                    "{}",
                    w.display(&inst)
                );
                assert_eq!(
                    validate_pattern(&inst, &ks, &whip_to_braid(&w), z),
                    Ok(true)
                );
                let b = search_braid(&inst, &ks, z, Some(w.len())).expect("whip implies braid");
                assert!(b.len() <= w.len());
                assert_eq!(validate_pattern(&inst, &ks, &b, z), Ok(true));
            }
        }
    }
    assert!(whips > 50 && chains > 20, "whips {whips} chains {chains}");
}

#[test]
fn rc_chains_are_found_with_all_families() {
    let inst = sudoku::instance();
    let rc = FamilyMask::only(&[FAMILY_RC]);
    let mut seen = 0;
    for (ks, _) in stuck_states(25) {
        for z in ks.present_candidates() {
            for kind in [PatternKind::BivalueChain, PatternKind::TChain] {
                if let Some(c) = search_chain(&inst, &ks, kind, z, 4, rc) {
                    seen += 1;
                    assert!(c
                        .steps
                        .iter()
                        .all(|s| inst.family_of(s.variable) == FAMILY_RC));
                    let all = search_chain(&inst, &ks, kind, z, 4, FamilyMask::ALL)
                        .expect("superset of families");
                    assert!(all.len() <= c.len());
                }
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn longer_bound_keeps_witness() {
    let inst = sudoku::instance();
    for (ks, _) in stuck_states(10) {
        for z in ks.present_candidates() {
            for n in 1..4 {
                if search_whip(&inst, &ks, z, n).is_some() {
                    assert!(search_whip(&inst, &ks, z, n + 1).is_some());
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Brute force on order-4 Latin squares with rc, rv and cv views.

fn latin4() -> CspInstance {
    let mut b = CspBuilder::new();
    let (frc, frv, fcv) = (b.add_family("rc"), b.add_family("rv"), b.add_family("cv"));
    let mut atoms = [[[CandId(0); 4]; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            for v in 0..4 {
                atoms[r][c][v] = b.add_candidate(format!("{}r{}c{}", v + 1, r + 1, c + 1));
            }
        }
    }
    for i in 0..4u16 {
        for j in 0..4u16 {
            let (i_, j_) = (i as usize, j as usize);
            let dom = |f: &dyn Fn(usize) -> CandId| {
                (0..4).map(|k| (k as u16 + 1, f(k))).collect::<Vec<_>>()
            };
            b.add_variable(
                VariableRef::new(frc, &[i, j]),
                format!("r{}c{}", i + 1, j + 1),
                dom(&|k| atoms[i_][j_][k]),
            );
            b.add_variable(
                VariableRef::new(frv, &[i, j]),
                format!("r{}v{}", i + 1, j + 1),
                dom(&|k| atoms[i_][k][j_]),
            );
            b.add_variable(
                VariableRef::new(fcv, &[i, j]),
                format!("c{}v{}", i + 1, j + 1),
                dom(&|k| atoms[k][i_][j_]),
            );
        }
    }
    b.build().unwrap()
}

/// Exhaustive enumeration of step sequences, checking each step's clause as
/// it is added. Returns the length of the shortest pattern, if any.
struct Brute<'a> {
    inst: &'a CspInstance,
    ks: &'a KnowledgeState,
    z: CandId,
    kind: PatternKind,
}

impl Brute<'_> {
    fn linked(&self, a: CandId, b: CandId) -> bool {
        // linked iff some variable holds both
        a != b
            && self
                .inst
                .vars_of(a)
                .iter()
                .any(|v| self.inst.domain(*v).contains(&b))
    }

    fn cands(&self, v: VarId) -> Vec<CandId> {
        self.inst
            .domain(v)
            .iter()
            .copied()
            .filter(|&c| self.ks.has_candidate(c))
            .collect()
    }

    fn shortest(&self, max: usize) -> Option<usize> {
        (1..=max).find(|&n| self.exists(&mut vec![self.z], &mut Vec::new(), n))
    }

    /// `used` holds the target and every left/right so far; `rights` the
    /// right candidates in order.
    fn exists(&self, used: &mut Vec<CandId>, rights: &mut Vec<CandId>, budget: usize) -> bool {
        if budget == 0 {
            return false;
        }
        let z = self.z;
        let prior = rights.clone();
        let k = prior.len();
        let sees_prior = |x: CandId| prior.iter().any(|&r| self.linked(x, r));
        let zt_incompatible = |x: CandId| self.linked(x, z) || sees_prior(x);
        for v in self.inst.variables() {
            let cands = self.cands(v);
            for &left in &cands {
                if used.contains(&left) {
                    continue;
                }
                let left_ok = match self.kind {
                    PatternKind::ZtBraid => zt_incompatible(left),
                    _ if k == 0 => self.linked(left, z),
                    _ => self.linked(left, prior[k - 1]),
                };
                if !left_ok {
                    continue;
                }
                // close (whips and braids only)
                let others: Vec<CandId> = cands.iter().copied().filter(|&x| x != left).collect();
                let closes = match self.kind {
                    PatternKind::ZWhip => others.iter().all(|&x| self.linked(x, z)),
                    PatternKind::ZtWhip | PatternKind::ZtBraid => {
                        others.iter().all(|&x| zt_incompatible(x))
                    }
                    _ => false,
                };
                if closes {
                    return true;
                }
                for &right in &others {
                    if used.contains(&right) {
                        continue;
                    }
                    let rest = others.iter().copied().filter(|&x| x != right);
                    let ok = match self.kind {
                        PatternKind::BivalueChain => cands.len() == 2,
                        PatternKind::TChain => {
                            !sees_prior(right) && { rest }.all(|x| sees_prior(x))
                        }
                        PatternKind::ZWhip => {
                            !self.linked(right, z) && { rest }.all(|x| self.linked(x, z))
                        }
                        PatternKind::ZtWhip | PatternKind::ZtBraid => {
                            !zt_incompatible(right) && { rest }.all(|x| zt_incompatible(x))
                        }
                    };
                    if !ok {
                        continue;
                    }
                    if self.kind.is_chain() && self.linked(right, z) {
                        return true;
                    }
                    used.extend([left, right]);
                    rights.push(right);
                    let found = self.exists(used, rights, budget - 1);
                    rights.pop();
                    used.truncate(used.len() - 2);
                    if found {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Random consistent partial state: a random Latin square, some values
/// placed, some wrong candidates removed, then BRT.
fn random_latin_state(inst: &CspInstance, rng: &mut ChaCha8Rng) -> Option<KnowledgeState> {
    let mut rows: Vec<usize> = (0..4).collect();
    let mut cols: Vec<usize> = (0..4).collect();
    let mut syms: Vec<usize> = (0..4).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    syms.shuffle(rng);
    let value = |r: usize, c: usize| syms[(rows[r] + cols[c]) % 4];
    let atom = |r: usize, c: usize, v: usize| CandId(((r * 4 + c) * 4 + v) as u32);
    let mut ks = inst.full_state();
    let givens = rng.gen_range(0..3);
    for _ in 0..givens {
        let (r, c) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let _ = ks.assert_value(inst, atom(r, c, value(r, c)));
    }
    let deletions = rng.gen_range(4..20);
    for _ in 0..deletions {
        let (r, c, v) = (
            rng.gen_range(0..4),
            rng.gen_range(0..4),
            rng.gen_range(0..4),
        );
        if v != value(r, c) {
            ks.delete_candidate(atom(r, c, v));
        }
    }
    let (ks, _) = brt_fixpoint(inst, &ks);
    (!ks.is_inconsistent() && !ks.is_solved()).then_some(ks)
}

#[test]
fn search_agrees_with_brute_force_on_latin_squares() {
    let inst = latin4();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut states = 0;
    let mut hits = [0usize; 5];
    while states < 25 {
        let Some(ks) = random_latin_state(&inst, &mut rng) else {
            continue;
        };
        states += 1;
        for z in ks.present_candidates() {
            for (i, kind) in PatternKind::ALL.into_iter().enumerate() {
                let brute = Brute {
                    inst: &inst,
                    ks: &ks,
                    z,
                    kind,
                }
                .shortest(3);
                let found = search_pattern(&inst, &ks, kind, z, 3, FamilyMask::ALL);
                assert_eq!(
                    brute.is_some(),
                    found.is_some(),
                    "{kind} on {} disagrees",
                    inst.cand_label(z)
                );
                if let Some(w) = found {
                    hits[i] += 1;
                    assert_eq!(
                        validate_pattern(&inst, &ks, &w, z),
                        Ok(true),
                        "{}",
                        w.display(&inst)
                    );
                    assert!(w.len() <= 3);
                    if kind != PatternKind::ZtBraid {
                        assert_eq!(Some(w.len()), brute, "{kind} is not shortest");
                    }
                }
            }
        }
    }
    assert!(hits.iter().all(|&h| h > 0), "every kind occurs: {hits:?}");
}

#[test]
fn four_family_chains_reach_beyond_rc_chains() {
    let inst = sudoku::instance();
    let rc = FamilyMask::only(&[FAMILY_RC]);
    let found = stuck_states(40).into_iter().any(|(ks, _)| {
        let open_rc = inst
            .variables()
            .filter(|&v| ks.is_open(v) && inst.family_of(v) == FAMILY_RC)
            .count();
        ks.present_candidates().any(|z| {
            search_chain(&inst, &ks, PatternKind::BivalueChain, z, 6, FamilyMask::ALL).is_some()
                && search_chain(&inst, &ks, PatternKind::BivalueChain, z, open_rc, rc).is_none()
        })
    });
    assert!(found);
}
