//! Young superdiagrams, skew shapes and admissible super tableaux.
//!
//! Tableaux are filled from the ordered alphabet J = {1, ..., r+s+2} split
//! into a bosonic block J+ = {1, ..., r+1} and a fermionic block
//! J- = {r+2, ..., r+s+2}. A filling is admissible when entries increase
//! weakly along rows and down columns, with equality forbidden vertically
//! for J+ letters and horizontally for J- letters.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Rank;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("row lengths must be weakly decreasing, got {0:?}")]
    NotWeaklyDecreasing(Vec<usize>),
    #[error("inner diagram is not contained in the outer one")]
    InnerNotContained,
    #[error("shape has {cells} cells; the tableau-sum cap is {cap} (pass the large-shape override to proceed)")]
    CapExceeded { cells: usize, cap: usize },
    #[error("cannot parse shape string {0:?}; expected e.g. \"mu=2,1/lambda=1\"")]
    ParseError(String),
}

/// A partition: weakly decreasing positive row lengths, trailing zeros dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    rows: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = DiagramError;
    fn try_from(rows: Vec<usize>) -> Result<Self, DiagramError> {
        Partition::new(rows)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Vec<usize> {
        p.rows
    }
}

impl Partition {
    pub fn new(mut rows: Vec<usize>) -> Result<Self, DiagramError> {
        if rows.windows(2).any(|w| w[0] < w[1]) {
            return Err(DiagramError::NotWeaklyDecreasing(rows));
        }
        while rows.last() == Some(&0) {
            rows.pop();
        }
        Ok(Partition { rows })
    }

    pub fn empty() -> Self {
        Partition { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Length of row `i` (1-based); zero beyond the last row.
    pub fn part(&self, i: usize) -> usize {
        if i >= 1 && i <= self.rows.len() {
            self.rows[i - 1]
        } else {
            0
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn first_row(&self) -> usize {
        self.part(1)
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Transpose across the main diagonal; an involution.
    pub fn conjugate(&self) -> Partition {
        let cols = self.first_row();
        let rows = (1..=cols)
            .map(|j| self.rows.iter().filter(|&&m| m >= j).count())
            .collect();
        Partition { rows }
    }

    /// Column height at column `j` (1-based): number of rows with length >= j.
    pub fn col_height(&self, j: usize) -> usize {
        self.rows.iter().filter(|&&m| m >= j).count()
    }

    pub fn contains(&self, inner: &Partition) -> bool {
        (1..=inner.num_rows().max(1)).all(|i| self.part(i) >= inner.part(i))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rows.is_empty() {
            return write!(f, "-");
        }
        let parts: Vec<String> = self.rows.iter().map(|r| r.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A skew shape `lambda inside mu`, cells {(i,j) : lambda_i < j <= mu_i} in
/// matrix coordinates (row i grows downwards, column j to the right).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SkewShape {
    outer: Partition,
    inner: Partition,
}

impl SkewShape {
    pub fn new(outer: Partition, inner: Partition) -> Result<Self, DiagramError> {
        if !outer.contains(&inner) {
            return Err(DiagramError::InnerNotContained);
        }
        Ok(SkewShape { outer, inner })
    }

    pub fn straight(outer: Partition) -> Self {
        SkewShape { outer, inner: Partition::empty() }
    }

    pub fn outer(&self) -> &Partition {
        &self.outer
    }

    pub fn inner(&self) -> &Partition {
        &self.inner
    }

    pub fn cell_count(&self) -> usize {
        self.outer.cell_count() - self.inner.cell_count()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }

    /// Cells in row-major order, 1-based (row, column) pairs.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(self.cell_count());
        for i in 1..=self.outer.num_rows() {
            for j in self.inner.part(i) + 1..=self.outer.part(i) {
                cells.push((i, j));
            }
        }
        cells
    }

    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        j > self.inner.part(i) && j <= self.outer.part(i)
    }
}

impl fmt::Display for SkewShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mu={}", self.outer)?;
        if !self.inner.is_empty() {
            write!(f, "/lambda={}", self.inner)?;
        }
        Ok(())
    }
}

impl FromStr for SkewShape {
    type Err = DiagramError;

    /// Parses the compact text form `mu=2,1/lambda=1` (lambda optional).
    fn from_str(s: &str) -> Result<Self, DiagramError> {
        let bad = || DiagramError::ParseError(s.to_string());
        let mut outer = None;
        let mut inner = Partition::empty();
        for piece in s.split('/') {
            let (key, val) = piece.split_once('=').ok_or_else(bad)?;
            let rows = if val.trim().is_empty() {
                Vec::new()
            } else {
                val.split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let part = Partition::new(rows)?;
            match key.trim() {
                "mu" => outer = Some(part),
                "lambda" => inner = part,
                _ => return Err(bad()),
            }
        }
        SkewShape::new(outer.ok_or_else(bad)?, inner)
    }
}

#[derive(Serialize, Deserialize)]
struct ShapeDoc {
    mu: Vec<usize>,
    #[serde(default)]
    lambda: Vec<usize>,
}

impl Serialize for SkewShape {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ShapeDoc {
            mu: self.outer.rows.clone(),
            lambda: self.inner.rows.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SkewShape {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let doc = ShapeDoc::deserialize(de)?;
        let outer = Partition::new(doc.mu).map_err(serde::de::Error::custom)?;
        let inner = Partition::new(doc.lambda).map_err(serde::de::Error::custom)?;
        SkewShape::new(outer, inner).map_err(serde::de::Error::custom)
    }
}

/// Which letters a filling may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alphabet {
    /// All of J = {1, ..., r+s+2}.
    Full,
    /// Only the fermionic block J- = {r+2, ..., r+s+2}.
    MinusOnly,
}

impl Alphabet {
    fn letters(self, rank: Rank) -> Vec<usize> {
        match self {
            Alphabet::Full => (1..=rank.alphabet_size()).collect(),
            Alphabet::MinusOnly => (rank.r + 2..=rank.alphabet_size()).collect(),
        }
    }
}

/// An admissible filling of a skew shape; entries run over `shape.cells()`
/// in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperTableau {
    pub shape: SkewShape,
    pub entries: Vec<usize>,
}

impl SuperTableau {
    /// Row-major grid with 0 marking absent (inner) cells; row `i` has
    /// `mu_i` slots.
    pub fn to_grid(&self) -> Vec<Vec<usize>> {
        let mut grid: Vec<Vec<usize>> = (1..=self.shape.outer().num_rows())
            .map(|i| vec![0; self.shape.outer().part(i)])
            .collect();
        for (&(i, j), &v) in self.shape.cells().iter().zip(&self.entries) {
            grid[i - 1][j - 1] = v;
        }
        grid
    }
}

impl fmt::Display for SuperTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let grid = self.to_grid();
        for (n, row) in grid.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            let cells: Vec<String> = row
                .iter()
                .map(|&v| if v == 0 { ".".to_string() } else { v.to_string() })
                .collect();
            write!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Checks admissibility of `entries` (aligned with `shape.cells()`):
/// weak increase right and down, no vertical repeat of a J+ letter,
/// no horizontal repeat of a J- letter.
pub fn is_admissible(shape: &SkewShape, entries: &[usize], rank: Rank) -> bool {
    let cells = shape.cells();
    if cells.len() != entries.len() {
        return false;
    }
    let index: HashMap<(usize, usize), usize> =
        cells.iter().enumerate().map(|(n, &c)| (c, n)).collect();
    for (n, &(i, j)) in cells.iter().enumerate() {
        let v = entries[n];
        if v < 1 || v > rank.alphabet_size() {
            return false;
        }
        if let Some(&m) = index.get(&(i, j + 1)) {
            let w = entries[m];
            if w < v || (w == v && rank.is_minus(v)) {
                return false;
            }
        }
        if let Some(&m) = index.get(&(i + 1, j)) {
            let w = entries[m];
            if w < v || (w == v && rank.is_plus(v)) {
                return false;
            }
        }
    }
    true
}

struct CellInfo {
    left: Option<usize>,
    up: Option<usize>,
}

/// Streaming enumerator of admissible fillings, lexicographically ordered by
/// the row-major entry sequence.
pub struct TableauIter {
    shape: SkewShape,
    rank: Rank,
    letters: Vec<usize>,
    info: Vec<CellInfo>,
    /// Index into `letters` currently chosen at each depth.
    choice: Vec<usize>,
    entries: Vec<usize>,
    depth: usize,
    started: bool,
    done: bool,
}

impl TableauIter {
    fn new(shape: &SkewShape, rank: Rank, alphabet: Alphabet) -> Self {
        let cells = shape.cells();
        let index: HashMap<(usize, usize), usize> =
            cells.iter().enumerate().map(|(n, &c)| (c, n)).collect();
        let info = cells
            .iter()
            .map(|&(i, j)| CellInfo {
                left: if j > 1 { index.get(&(i, j - 1)).copied() } else { None },
                up: if i > 1 { index.get(&(i - 1, j)).copied() } else { None },
            })
            .collect();
        let n = cells.len();
        TableauIter {
            shape: shape.clone(),
            rank,
            letters: alphabet.letters(rank),
            info,
            choice: vec![0; n],
            entries: vec![0; n],
            depth: 0,
            started: false,
            done: n == 0, // handled specially: one empty tableau
        }
    }

    /// Smallest admissible letter index at `depth` that is >= `from`.
    fn first_valid(&self, depth: usize, from: usize) -> Option<usize> {
        // Neighbour constraints give a single lower bound on the letter.
        let mut min_letter = 1;
        if let Some(l) = self.info[depth].left {
            let v = self.entries[l];
            let lb = if self.rank.is_minus(v) { v + 1 } else { v };
            min_letter = min_letter.max(lb);
        }
        if let Some(u) = self.info[depth].up {
            let v = self.entries[u];
            let lb = if self.rank.is_plus(v) { v + 1 } else { v };
            min_letter = min_letter.max(lb);
        }
        (from..self.letters.len()).find(|&k| self.letters[k] >= min_letter)
    }
}

impl Iterator for TableauIter {
    type Item = SuperTableau;

    fn next(&mut self) -> Option<SuperTableau> {
        let n = self.info.len();
        if n == 0 {
            if self.started {
                return None;
            }
            self.started = true;
            return Some(SuperTableau { shape: self.shape.clone(), entries: Vec::new() });
        }
        if self.done {
            return None;
        }
        // Resume the depth-first walk. `resume_from` holds the next letter
        // index to try at the current depth.
        let mut resume_from = if self.started {
            // Last call emitted a full filling; advance the deepest cell.
            self.depth = n - 1;
            self.choice[self.depth] + 1
        } else {
            self.started = true;
            0
        };
        loop {
            match self.first_valid(self.depth, resume_from) {
                Some(k) => {
                    self.choice[self.depth] = k;
                    self.entries[self.depth] = self.letters[k];
                    if self.depth == n - 1 {
                        return Some(SuperTableau {
                            shape: self.shape.clone(),
                            entries: self.entries.clone(),
                        });
                    }
                    self.depth += 1;
                    resume_from = 0;
                }
                None => {
                    if self.depth == 0 {
                        self.done = true;
                        return None;
                    }
                    self.depth -= 1;
                    resume_from = self.choice[self.depth] + 1;
                }
            }
        }
    }
}

/// Admissible fillings over the full alphabet, streamed in lexicographic
/// row-major order.
pub fn enumerate_admissible(shape: &SkewShape, rank: Rank) -> TableauIter {
    TableauIter::new(shape, rank, Alphabet::Full)
}

/// Admissible fillings restricted to the fermionic letters J-.
pub fn enumerate_restricted(shape: &SkewShape, rank: Rank) -> TableauIter {
    TableauIter::new(shape, rank, Alphabet::MinusOnly)
}

type CountKey = (Vec<usize>, Vec<usize>, usize, usize, bool);

fn count_memo() -> &'static Mutex<HashMap<CountKey, u64>> {
    static MEMO: OnceLock<Mutex<HashMap<CountKey, u64>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Number of admissible fillings, memoized, without materializing tableaux.
pub fn count_admissible(shape: &SkewShape, rank: Rank, alphabet: Alphabet) -> u64 {
    let key: CountKey = (
        shape.outer().rows().to_vec(),
        shape.inner().rows().to_vec(),
        rank.r,
        rank.s,
        alphabet == Alphabet::MinusOnly,
    );
    if let Some(&n) = count_memo().lock().unwrap().get(&key) {
        return n;
    }
    let n = TableauIter::new(shape, rank, alphabet).map(|_| 1u64).sum();
    count_memo().lock().unwrap().insert(key, n);
    n
}

/// All subdiagrams of `outer` (including the empty one and `outer` itself).
pub fn subdiagrams(outer: &Partition) -> Vec<Partition> {
    fn rec(outer: &Partition, row: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if row > outer.num_rows() {
            let mut rows = cur.clone();
            while rows.last() == Some(&0) {
                rows.pop();
            }
            out.push(Partition { rows });
            return;
        }
        for len in 0..=outer.part(row).min(cap) {
            cur.push(len);
            rec(outer, row + 1, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(outer, 1, usize::MAX, &mut Vec::new(), &mut out);
    out
}

/// All partitions with at most `max_cells` cells (the empty one included).
pub fn partitions_up_to(max_cells: usize) -> Vec<Partition> {
    fn rec(remaining: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        out.push(Partition { rows: cur.clone() });
        for len in (1..=cap.min(remaining)).rev() {
            cur.push(len);
            rec(remaining - len, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(max_cells, max_cells, &mut Vec::new(), &mut out);
    out
}
