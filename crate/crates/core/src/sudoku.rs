//! Sudoku as a CSP with the four variable families `rc`, `rn`, `cn`, `bn`.
//!
//! One atom `n r c` per (number, row, column) is shared by the four views
//! `X_rc(r,c) = n`, `X_rn(r,n) = c`, `X_cn(c,n) = r` and `X_bn(b,n) = s`,
//! where `s` numbers the cells of block `b` row-major from 1 to 9.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::csp::{CandId, CspBuilder, CspError, CspInstance, KnowledgeState, VarId, VariableRef};

pub const FAMILY_RC: u8 = 0;
pub const FAMILY_RN: u8 = 1;
pub const FAMILY_CN: u8 = 2;
pub const FAMILY_BN: u8 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("expected 81 cells, found {0}")]
    Length(usize),
    #[error("unexpected character {0:?} at position {1}")]
    Character(char, usize),
}

/// 81 cells, row-major; 0 is empty.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    cells: [u8; 81],
}

impl Grid {
    pub fn empty() -> Self {
        Grid { cells: [0; 81] }
    }

    pub fn from_cells(cells: [u8; 81]) -> Self {
        assert!(cells.iter().all(|&d| d <= 9), "digits are 0..=9");
        Grid { cells }
    }

    pub fn cells(&self) -> &[u8; 81] {
        &self.cells
    }

    /// Digit at 1-based `(r, c)`, 0 when empty.
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[(r - 1) * 9 + (c - 1)]
    }

    pub fn set(&mut self, r: usize, c: usize, d: u8) {
        assert!(d <= 9);
        self.cells[(r - 1) * 9 + (c - 1)] = d;
    }

    pub fn given_count(&self) -> usize {
        self.cells.iter().filter(|&&d| d != 0).count()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|&d| d != 0)
    }

    /// No digit repeats within a row, column or block.
    pub fn is_consistent(&self) -> bool {
        let mut seen = [[false; 10]; 27];
        for (i, &d) in self.cells.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let (r, c) = (i / 9, i % 9);
            for u in [r, 9 + c, 18 + block_index(r, c)] {
                if seen[u][d as usize] {
                    return false;
                }
                seen[u][d as usize] = true;
            }
        }
        true
    }

    pub fn to_line(&self) -> String {
        self.cells
            .iter()
            .map(|&d| if d == 0 { '.' } else { (b'0' + d) as char })
            .collect()
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({})", self.to_line())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

impl FromStr for Grid {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grid(s)
    }
}

/// Parses an 81-character row-major line; `.` or `0` is an empty cell.
/// Duplicate givens are accepted; see [`Grid::is_consistent`].
pub fn parse_grid(text: &str) -> Result<Grid, ParseError> {
    let text = text.trim();
    let n = text.chars().count();
    if n != 81 {
        return Err(ParseError::Length(n));
    }
    let mut cells = [0u8; 81];
    for (i, ch) in text.chars().enumerate() {
        cells[i] = match ch {
            '.' | '0' => 0,
            '1'..='9' => ch as u8 - b'0',
            other => return Err(ParseError::Character(other, i)),
        };
    }
    Ok(Grid { cells })
}

#[inline]
fn block_index(r0: usize, c0: usize) -> usize {
    (r0 / 3) * 3 + c0 / 3
}

/// 1-based block of a 1-based cell.
pub fn block_of(r: usize, c: usize) -> usize {
    block_index(r - 1, c - 1) + 1
}

/// 1-based position of a cell inside its block, row-major.
pub fn square_of(r: usize, c: usize) -> usize {
    ((r - 1) % 3) * 3 + (c - 1) % 3 + 1
}

/// Atom id of number `n` at `r c` (all 1-based).
#[inline]
pub fn cand(n: usize, r: usize, c: usize) -> CandId {
    CandId((((r - 1) * 9 + (c - 1)) * 9 + (n - 1)) as u32)
}

/// `(n, r, c)` of an atom, 1-based.
#[inline]
pub fn nrc(c: CandId) -> (usize, usize, usize) {
    let i = c.index();
    (i % 9 + 1, i / 81 + 1, (i / 9) % 9 + 1)
}

pub fn rc_var(r: usize, c: usize) -> VarId {
    VarId(((r - 1) * 9 + (c - 1)) as u32)
}

pub fn rn_var(r: usize, n: usize) -> VarId {
    VarId((81 + (r - 1) * 9 + (n - 1)) as u32)
}

pub fn cn_var(c: usize, n: usize) -> VarId {
    VarId((162 + (c - 1) * 9 + (n - 1)) as u32)
}

pub fn bn_var(b: usize, n: usize) -> VarId {
    VarId((243 + (b - 1) * 9 + (n - 1)) as u32)
}

/// Direct contradiction between `n1 r1 c1` and `n2 r2 c2`: same cell with
/// different numbers, or same number in two cells sharing a unit.
pub fn sudoku_linked(a: (usize, usize, usize), b: (usize, usize, usize)) -> Result<bool, CspError> {
    for (n, r, c) in [a, b] {
        if !(1..=9).contains(&n) || !(1..=9).contains(&r) || !(1..=9).contains(&c) {
            return Err(CspError::MalformedReference(format!("{n}r{r}c{c}")));
        }
    }
    let (n1, r1, c1) = a;
    let (n2, r2, c2) = b;
    let same_cell = r1 == r2 && c1 == c2;
    let share_unit = !same_cell && (r1 == r2 || c1 == c2 || block_of(r1, c1) == block_of(r2, c2));
    Ok((n1 != n2 && same_cell) || (n1 == n2 && share_unit))
}

fn build_instance() -> CspInstance {
    let mut b = CspBuilder::new();
    let rc = b.add_family("rc");
    let rn = b.add_family("rn");
    let cn = b.add_family("cn");
    let bn = b.add_family("bn");
    for r in 1..=9 {
        for c in 1..=9 {
            for n in 1..=9 {
                let id = b.add_candidate(format!("{n}r{r}c{c}"));
                debug_assert_eq!(id, cand(n, r, c));
            }
        }
    }
    for r in 1..=9u16 {
        for c in 1..=9u16 {
            let dom = (1..=9u16)
                .map(|n| (n, cand(n as usize, r as usize, c as usize)))
                .collect();
            b.add_variable(VariableRef::new(rc, &[r, c]), format!("r{r}c{c}"), dom);
        }
    }
    for r in 1..=9u16 {
        for n in 1..=9u16 {
            let dom = (1..=9u16)
                .map(|c| (c, cand(n as usize, r as usize, c as usize)))
                .collect();
            b.add_variable(VariableRef::new(rn, &[r, n]), format!("r{r}n{n}"), dom);
        }
    }
    for c in 1..=9u16 {
        for n in 1..=9u16 {
            let dom = (1..=9u16)
                .map(|r| (r, cand(n as usize, r as usize, c as usize)))
                .collect();
            b.add_variable(VariableRef::new(cn, &[c, n]), format!("c{c}n{n}"), dom);
        }
    }
    for blk in 1..=9usize {
        for n in 1..=9u16 {
            let dom = (1..=9usize)
                .map(|s| {
                    let r = (blk - 1) / 3 * 3 + (s - 1) / 3 + 1;
                    let c = (blk - 1) % 3 * 3 + (s - 1) % 3 + 1;
                    (s as u16, cand(n as usize, r, c))
                })
                .collect();
            b.add_variable(
                VariableRef::new(bn, &[blk as u16, n]),
                format!("b{blk}n{n}"),
                dom,
            );
        }
    }
    b.build().expect("sudoku instance is well formed")
}

/// Bundled corpus of 500 minimal puzzles, one per line, `#` comments.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.txt");

/// The shared 729-atom Sudoku instance.
pub fn instance() -> Arc<CspInstance> {
    static INSTANCE: OnceLock<Arc<CspInstance>> = OnceLock::new();
    INSTANCE.get_or_init(|| Arc::new(build_instance())).clone()
}

/// A puzzle bound to the Sudoku instance.
#[derive(Debug, Clone)]
pub struct SudokuCsp {
    pub grid: Grid,
    pub instance: Arc<CspInstance>,
    pub initial: KnowledgeState,
}

/// Givens become values; no propagation is applied.
pub fn build_csp(g: &Grid) -> SudokuCsp {
    let inst = instance();
    let mut ks = inst.full_state();
    for r in 1..=9 {
        for c in 1..=9 {
            let d = g.get(r, c);
            if d != 0 {
                ks.force_value(&inst, cand(d as usize, r, c));
            }
        }
    }
    SudokuCsp {
        grid: *g,
        instance: inst,
        initial: ks,
    }
}

/// Decided `rc` values of a state as a grid.
pub fn grid_from_state(ks: &KnowledgeState) -> Grid {
    let mut g = Grid::empty();
    for r in 1..=9 {
        for c in 1..=9 {
            if let Some(a) = ks.decided(rc_var(r, c)) {
                g.set(r, c, nrc(a).0 as u8);
            }
        }
    }
    g
}

/// Atoms of a complete grid.
pub fn solution_atoms(solution: &Grid) -> Vec<CandId> {
    (0..81)
        .filter(|&i| solution.cells[i] != 0)
        .map(|i| cand(solution.cells[i] as usize, i / 9 + 1, i % 9 + 1))
        .collect()
}

// ---------------------------------------------------------------------------
// Backtracking oracle. Knows only the unit constraints.

struct Board {
    cells: [u8; 81],
    rows: [u16; 9],
    cols: [u16; 9],
    boxes: [u16; 9],
}

impl Board {
    fn new(g: &Grid) -> Option<Board> {
        if !g.is_consistent() {
            return None;
        }
        let mut b = Board {
            cells: g.cells,
            rows: [0; 9],
            cols: [0; 9],
            boxes: [0; 9],
        };
        for i in 0..81 {
            let d = g.cells[i];
            if d != 0 {
                b.place(i, d);
            }
        }
        Some(b)
    }

    #[inline]
    fn place(&mut self, i: usize, d: u8) {
        let bit = 1u16 << d;
        let (r, c) = (i / 9, i % 9);
        self.cells[i] = d;
        self.rows[r] |= bit;
        self.cols[c] |= bit;
        self.boxes[block_index(r, c)] |= bit;
    }

    #[inline]
    fn unplace(&mut self, i: usize, d: u8) {
        let bit = !(1u16 << d);
        let (r, c) = (i / 9, i % 9);
        self.cells[i] = 0;
        self.rows[r] &= bit;
        self.cols[c] &= bit;
        self.boxes[block_index(r, c)] &= bit;
    }

    #[inline]
    fn options(&self, i: usize) -> u16 {
        let (r, c) = (i / 9, i % 9);
        !(self.rows[r] | self.cols[c] | self.boxes[block_index(r, c)]) & 0x3fe
    }

    /// Most constrained empty cell; `None` when full, `Some((i, 0))` on a
    /// dead end.
    fn pick(&self) -> Option<(usize, u16)> {
        let mut best: Option<(usize, u16)> = None;
        let mut best_n = 10;
        for i in 0..81 {
            if self.cells[i] != 0 {
                continue;
            }
            let o = self.options(i);
            let n = o.count_ones();
            if n < best_n {
                best = Some((i, o));
                best_n = n;
                if n <= 1 {
                    break;
                }
            }
        }
        best
    }

    fn count(&mut self, cap: usize, found: &mut usize, first: &mut Option<[u8; 81]>) {
        let Some((i, opts)) = self.pick() else {
            *found += 1;
            if first.is_none() {
                *first = Some(self.cells);
            }
            return;
        };
        let mut o = opts;
        while o != 0 {
            let d = o.trailing_zeros() as u8;
            o &= o - 1;
            self.place(i, d);
            self.count(cap, found, first);
            self.unplace(i, d);
            if *found >= cap {
                return;
            }
        }
    }

    fn fill_random(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let Some((i, opts)) = self.pick() else {
            return true;
        };
        let mut digits: Vec<u8> = (1..=9).filter(|d| opts & (1 << d) != 0).collect();
        digits.shuffle(rng);
        for d in digits {
            self.place(i, d);
            if self.fill_random(rng) {
                return true;
            }
            self.unplace(i, d);
        }
        false
    }
}

/// Number of completions of `g`, counted up to `cap`.
pub fn solution_count(g: &Grid, cap: usize) -> usize {
    assert!(cap >= 1, "cap must be positive");
    let Some(mut b) = Board::new(g) else { return 0 };
    let mut found = 0;
    let mut first = None;
    b.count(cap, &mut found, &mut first);
    found.min(cap)
}

/// The solution when it exists and is unique.
pub fn unique_solution(g: &Grid) -> Option<Grid> {
    let mut b = Board::new(g)?;
    let mut found = 0;
    let mut first = None;
    b.count(2, &mut found, &mut first);
    if found == 1 {
        first.map(|cells| Grid { cells })
    } else {
        None
    }
}

/// Uniquely solvable, and removing any given breaks uniqueness.
pub fn is_minimal(g: &Grid) -> bool {
    if solution_count(g, 2) != 1 {
        return false;
    }
    let mut h = *g;
    for i in 0..81 {
        let d = h.cells[i];
        if d == 0 {
            continue;
        }
        h.cells[i] = 0;
        let unique = solution_count(&h, 2) == 1;
        h.cells[i] = d;
        if unique {
            return false;
        }
    }
    true
}

/// Random minimal puzzle: a random complete grid, then givens removed in
/// random order whenever uniqueness survives. Deterministic per seed.
pub fn generate_minimal(seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut board = Board::new(&Grid::empty()).expect("empty grid is consistent");
    assert!(
        board.fill_random(&mut rng),
        "an empty grid always completes"
    );
    let mut g = Grid { cells: board.cells };
    let mut order: Vec<usize> = (0..81).collect();
    order.shuffle(&mut rng);
    for i in order {
        let d = g.cells[i];
        g.cells[i] = 0;
        if solution_count(&g, 2) != 1 {
            g.cells[i] = d;
        }
    }
    debug_assert!(is_minimal(&g));
    g
}
