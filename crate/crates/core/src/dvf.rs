//! Eigenvalue constructors: tableau sums, both determinant routes, the
//! fermionic-restricted sum, the deformed family with its continuous
//! parameter, the leading (top) term, and the supercharacter limit.
//!
//! Formulas are built symbolically as sums of factor products over the
//! Q-functions and vacuum parts, with exact cancellation of repeated
//! factors; evaluation is numeric, per point, through the caches in
//! [`crate::analytic`]. Determinants are never expanded symbolically —
//! entries are evaluated and eliminated with partial pivoting.

use std::collections::{BTreeSet, HashMap};
use rustc_hash::FxHashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{EntryMemoKey, EvalContext, EvalError, QCache, QCacheDd};
use crate::dd::{self, DdComplex};
use crate::diagrams::{
    enumerate_admissible, enumerate_restricted, Alphabet, DiagramError, Partition, SkewShape,
};
use crate::model::{eta, Rank};

#[derive(Debug, Error)]
pub enum DvfError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("deformed family needs a shape with at least {need} rows, got {got}")]
    TooFewRows { got: usize, need: usize },
    #[error("deformed family needs row {row} of length >= {need}, got {got}")]
    RowTooShort { row: usize, got: usize, need: usize },
    #[error("weight sequence has length {got}, expected {want}")]
    WeightCountMismatch { got: usize, want: usize },
    #[error("bad formula spec: {0}")]
    BadSpec(String),
}

/// Default cell cap for tableau enumeration; admissible-filling counts grow
/// quickly past this and the determinant routes should be used instead.
pub const DEFAULT_CELL_CAP: usize = 14;

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub max_cells: usize,
    /// Override the cap (enumeration may then be very slow).
    pub allow_large: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_cells: DEFAULT_CELL_CAP, allow_large: false }
    }
}

impl BuildOptions {
    fn check(&self, cells: usize) -> Result<(), DvfError> {
        if !self.allow_large && cells > self.max_cells {
            return Err(DiagramError::CapExceeded { cells, cap: self.max_cells }.into());
        }
        Ok(())
    }
}

/// Argument shift `u + base + c_coeff * c` with exact integer bookkeeping,
/// so identical factors cancel exactly and the continuous parameter stays
/// symbolic until evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shift {
    pub base: i64,
    pub c_coeff: i64,
}

impl Shift {
    pub const ZERO: Shift = Shift { base: 0, c_coeff: 0 };

    pub fn new(base: i64, c_coeff: i64) -> Self {
        Shift { base, c_coeff }
    }

    pub fn from_base(base: i64) -> Self {
        Shift { base, c_coeff: 0 }
    }

    pub fn plus(self, other: Shift) -> Shift {
        Shift { base: self.base + other.base, c_coeff: self.c_coeff + other.c_coeff }
    }

    /// Numeric value of the shift once the parameter is fixed.
    pub fn value(self, c: Complex64) -> Complex64 {
        Complex64::new(self.base as f64, 0.0) + c * self.c_coeff as f64
    }

    /// Collapse the parameter at an integer value into the base.
    pub fn at_integer_c(self, k: i64) -> Shift {
        Shift { base: self.base + k * self.c_coeff, c_coeff: 0 }
    }
}

impl fmt::Display for Shift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u")?;
        if self.base != 0 {
            write!(f, "{:+}", self.base)?;
        }
        match self.c_coeff {
            0 => {}
            1 => write!(f, "+c")?,
            -1 => write!(f, "-c")?,
            k => write!(f, "{k:+}c")?,
        }
        Ok(())
    }
}

fn fmt_coeff(f: &mut fmt::Formatter<'_>, coeff: Complex64) -> fmt::Result {
    if (coeff - Complex64::new(1.0, 0.0)).norm() < 1e-12 {
        write!(f, "+")
    } else if (coeff + Complex64::new(1.0, 0.0)).norm() < 1e-12 {
        write!(f, "-")
    } else if coeff.im == 0.0 {
        write!(f, "{:+}*", coeff.re)
    } else {
        write!(f, "+({}{:+}i)*", coeff.re, coeff.im)
    }
}

/// One product term: coeff * prod psi_letter(shift) * prod Q_a(shift) / prod Q_a(shift).
#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: Complex64,
    pub psis: Vec<(usize, Shift)>,
    pub qnum: Vec<(usize, Shift)>,
    pub qden: Vec<(usize, Shift)>,
}

impl Term {
    pub fn constant(coeff: Complex64) -> Term {
        Term { coeff, psis: Vec::new(), qnum: Vec::new(), qden: Vec::new() }
    }

    pub fn one() -> Term {
        Term::constant(Complex64::new(1.0, 0.0))
    }

    /// Sorts factors and cancels Q-factors common to numerator and
    /// denominator (exactly, thanks to the integer shift representation).
    pub fn normalize(&mut self) {
        let mut counts: FxHashMap<(usize, Shift), i64> = FxHashMap::default();
        for &f in &self.qnum {
            *counts.entry(f).or_insert(0) += 1;
        }
        for &f in &self.qden {
            *counts.entry(f).or_insert(0) -= 1;
        }
        self.qnum.clear();
        self.qden.clear();
        for (f, n) in counts {
            if n > 0 {
                self.qnum.extend(std::iter::repeat(f).take(n as usize));
            } else if n < 0 {
                self.qden.extend(std::iter::repeat(f).take((-n) as usize));
            }
        }
        self.psis.sort_unstable();
        self.qnum.sort_unstable();
        self.qden.sort_unstable();
    }

    pub fn mul(&self, other: &Term) -> Term {
        let mut out = Term {
            coeff: self.coeff * other.coeff,
            psis: [self.psis.as_slice(), other.psis.as_slice()].concat(),
            qnum: [self.qnum.as_slice(), other.qnum.as_slice()].concat(),
            qden: [self.qden.as_slice(), other.qden.as_slice()].concat(),
        };
        out.normalize();
        out
    }

    pub fn shifted(&self, d: Shift) -> Term {
        let bump = |list: &[(usize, Shift)]| {
            list.iter().map(|&(a, s)| (a, s.plus(d))).collect::<Vec<_>>()
        };
        Term {
            coeff: self.coeff,
            psis: bump(&self.psis),
            qnum: bump(&self.qnum),
            qden: bump(&self.qden),
        }
    }

    pub(crate) fn eval(
        &self,
        u: Complex64,
        c: Complex64,
        ctx: &EvalContext,
        cache: &mut QCache,
    ) -> Result<Complex64, EvalError> {
        let mut value = self.coeff;
        for &(letter, s) in &self.psis {
            value *= cache.psi(letter, u, s.base, s.c_coeff, c, ctx)?;
        }
        // Interleave multiplications and divisions to keep magnitudes tame.
        let steps = self.qnum.len().max(self.qden.len());
        for k in 0..steps {
            if let Some(&(a, s)) = self.qnum.get(k) {
                let (num, _) = cache.q(a, u, s.base, s.c_coeff, c, ctx)?;
                value *= num;
            }
            if let Some(&(a, s)) = self.qden.get(k) {
                let (den, scale) = cache.q(a, u, s.base, s.c_coeff, c, ctx)?;
                ctx.guard_pole(den, scale, u + s.value(c))?;
                value /= den;
            }
        }
        Ok(value)
    }

    pub(crate) fn eval_dd(
        &self,
        u: Complex64,
        c: Complex64,
        ctx: &EvalContext,
        cache: &mut QCacheDd,
    ) -> Result<DdComplex, EvalError> {
        let mut value = dd::promote(self.coeff);
        for &(letter, s) in &self.psis {
            value = value * cache.psi(letter, u, s.base, s.c_coeff, c, ctx)?;
        }
        for &(a, s) in &self.qnum {
            let (num, _) = cache.q(a, u, s.base, s.c_coeff, c, ctx)?;
            value = value * num;
        }
        for &(a, s) in &self.qden {
            let (den, scale) = cache.q(a, u, s.base, s.c_coeff, c, ctx)?;
            ctx.guard_pole(den.collapse(), scale, u + s.value(c))?;
            value = value * den.inv();
        }
        Ok(value)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_coeff(f, self.coeff)?;
        let mut printed = false;
        for &(letter, s) in &self.psis {
            write!(f, " psi_{letter}({s})")?;
            printed = true;
        }
        for &(a, s) in &self.qnum {
            write!(f, " Q_{a}({s})")?;
            printed = true;
        }
        if !self.qden.is_empty() {
            write!(f, " /")?;
            for &(a, s) in &self.qden {
                write!(f, " Q_{a}({s})")?;
            }
            printed = true;
        }
        if !printed {
            write!(f, " 1")?;
        }
        Ok(())
    }
}

/// A sum of product terms, plus the catalog of every Q-denominator argument
/// that appeared in any constituent box before cancellation (the candidate
/// pole locations).
#[derive(Debug, Clone, Default)]
pub struct TermSum {
    pub terms: Vec<Term>,
    den_catalog: BTreeSet<(usize, Shift)>,
}

impl TermSum {
    pub fn constant(v: Complex64) -> TermSum {
        TermSum { terms: vec![Term::constant(v)], den_catalog: BTreeSet::new() }
    }

    pub fn one() -> TermSum {
        TermSum::constant(Complex64::new(1.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Cartesian product of the two sums.
    pub fn mul(&self, other: &TermSum) -> TermSum {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        let mut den_catalog = self.den_catalog.clone();
        den_catalog.extend(other.den_catalog.iter().copied());
        TermSum { terms, den_catalog }
    }

    pub fn shifted(&self, d: Shift) -> TermSum {
        TermSum {
            terms: self.terms.iter().map(|t| t.shifted(d)).collect(),
            den_catalog: self.den_catalog.iter().map(|&(a, s)| (a, s.plus(d))).collect(),
        }
    }

    pub fn eval(&self, u: Complex64, c: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
        let mut cache = QCache::new();
        self.eval_cached(u, c, ctx, &mut cache)
    }

    pub(crate) fn eval_cached(
        &self,
        u: Complex64,
        c: Complex64,
        ctx: &EvalContext,
        cache: &mut QCache,
    ) -> Result<Complex64, EvalError> {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut mag = 0.0f64;
        for term in &self.terms {
            let v = term.eval(u, c, ctx, cache)?;
            acc += v;
            mag += v.re.abs() + v.im.abs();
        }
        // Summands cancelling down by three digits or more leave too little
        // float headroom to certify identities at 1e-11; redo in
        // double-double precision.
        if acc.norm() < mag * SUM_RESCUE_RATIO && mag > 0.0 {
            let mut ddcache = QCacheDd::new(ctx);
            return Ok(self.eval_dd(u, c, ctx, &mut ddcache)?.collapse());
        }
        Ok(acc)
    }

    pub(crate) fn eval_dd(
        &self,
        u: Complex64,
        c: Complex64,
        ctx: &EvalContext,
        cache: &mut QCacheDd,
    ) -> Result<DdComplex, EvalError> {
        let mut acc = DdComplex::ZERO;
        for term in &self.terms {
            acc = acc + term.eval_dd(u, c, ctx, cache)?;
        }
        Ok(acc)
    }

    pub fn den_catalog(&self) -> &BTreeSet<(usize, Shift)> {
        &self.den_catalog
    }

    fn note_denominators(&mut self, term: &Term) {
        self.den_catalog.extend(term.qden.iter().copied());
    }

    /// All vacuum-part arguments appearing in the sum.
    pub fn psi_catalog(&self) -> BTreeSet<(usize, Shift)> {
        self.terms.iter().flat_map(|t| t.psis.iter().copied()).collect()
    }
}

impl fmt::Display for TermSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Per-letter factor content of the single-box function, with integer
/// shifts relative to the box argument. `sign` is the parity sign the box
/// contributes to a term.
#[derive(Debug, Clone)]
pub struct BoxEntry {
    pub sign: f64,
    pub psi_letter: Option<usize>,
    pub qnum: Vec<(usize, i64)>,
    pub qden: Vec<(usize, i64)>,
}

/// The full alphabet's box functions; index by letter via [`BoxTable::entry`].
#[derive(Debug, Clone)]
pub struct BoxTable {
    pub alphabet_size: usize,
    entries: Vec<BoxEntry>,
}

impl BoxTable {
    /// The distinguished-grading table: bosonic letters give
    /// psi_a Q_{a-1}(u+a+1) Q_a(u+a-2) / (Q_{a-1}(u+a-1) Q_a(u+a)),
    /// fermionic ones the 2r-reflected version, with the boundary
    /// Q-functions (colors 0 and r+s+2) dropped as constants.
    pub fn distinguished(rank: Rank) -> BoxTable {
        let size = rank.alphabet_size();
        let mut entries = Vec::with_capacity(size);
        for a in 1..=size {
            let af = a as i64;
            let rf = rank.r as i64;
            let (sign, n1, n2, d1, d2) = if rank.is_plus(a) {
                (1.0, af + 1, af - 2, af - 1, af)
            } else {
                (-1.0, 2 * rf - af + 1, 2 * rf - af + 4, 2 * rf - af + 3, 2 * rf - af + 2)
            };
            let keep = |color: i64| color > 0 && (color as usize) < size;
            let mut qnum = Vec::new();
            let mut qden = Vec::new();
            if keep(af - 1) {
                qnum.push((a - 1, n1));
                qden.push((a - 1, d1));
            }
            if keep(af) {
                qnum.push((a, n2));
                qden.push((a, d2));
            }
            entries.push(BoxEntry { sign, psi_letter: Some(a), qnum, qden });
        }
        BoxTable { alphabet_size: size, entries }
    }

    /// A table built from explicit entries (for non-distinguished fixtures).
    pub fn from_entries(entries: Vec<BoxEntry>) -> BoxTable {
        BoxTable { alphabet_size: entries.len(), entries }
    }

    pub fn entry(&self, letter: usize) -> &BoxEntry {
        &self.entries[letter - 1]
    }

    /// The single box as a one-factor term at argument `u + arg`.
    pub fn term_for(&self, letter: usize, arg: Shift) -> Term {
        let e = self.entry(letter);
        let place = |list: &[(usize, i64)]| {
            list.iter()
                .map(|&(color, base)| (color, Shift::new(base, 0).plus(arg)))
                .collect::<Vec<_>>()
        };
        Term {
            coeff: Complex64::new(e.sign, 0.0),
            psis: e.psi_letter.map(|l| (l, arg)).into_iter().collect(),
            qnum: place(&e.qnum),
            qden: place(&e.qden),
        }
    }
}

/// Cell argument offset within a shape: -mu_1 + mu'_1 - 2i + 2j.
fn cell_offset(shape: &SkewShape, i: usize, j: usize) -> i64 {
    let mu1 = shape.outer().first_row() as i64;
    let height = shape.outer().col_height(1) as i64;
    -mu1 + height - 2 * (i as i64) + 2 * (j as i64)
}

/// Signed sum over admissible fillings of `shape`; the workhorse behind
/// every tableau route.
pub fn tableau_terms(shape: &SkewShape, rank: Rank, table: &BoxTable, alphabet: Alphabet) -> TermSum {
    let cells = shape.cells();
    let mut sum = TermSum::default();
    let fillings = match alphabet {
        Alphabet::Full => enumerate_admissible(shape, rank),
        Alphabet::MinusOnly => enumerate_restricted(shape, rank),
    };
    for filling in fillings {
        let mut term = Term::one();
        for (&(i, j), &letter) in cells.iter().zip(&filling.entries) {
            let factor = table.term_for(letter, Shift::from_base(cell_offset(shape, i, j)));
            sum.note_denominators(&factor);
            term = term.mul(&factor);
        }
        sum.terms.push(term);
    }
    sum
}

/// Single-column sum of height `h` (1x1 determinant block).
fn column_terms(h: usize, rank: Rank, table: &BoxTable, alphabet: Alphabet) -> TermSum {
    let shape = SkewShape::straight(Partition::new(vec![1; h]).expect("column is a partition"));
    tableau_terms(&shape, rank, table, alphabet)
}

/// Single-row sum of width `m`.
fn row_terms(m: usize, rank: Rank, table: &BoxTable) -> TermSum {
    let shape = SkewShape::straight(Partition::new(vec![m]).expect("row is a partition"));
    tableau_terms(&shape, rank, table, Alphabet::Full)
}

/// Matrix entry of a determinant route.
#[derive(Debug, Clone)]
pub enum DetEntry {
    Zero,
    One,
    Sum(TermSum),
}

/// Determinant route: entries are (shifted) one-column or one-row sums,
/// evaluated per point and eliminated numerically.
#[derive(Debug, Clone)]
pub struct DetGrid {
    pub size: usize,
    entries: Vec<DetEntry>,
    /// Structural identity (sum kind, cell count, shift) for entries that are
    /// shifted copies of shared sums; such values are memoized on the context
    /// because the same entries recur across every grid of a shape sweep.
    tags: Vec<Option<(u8, i64, i64)>>,
}

impl DetGrid {
    fn entry(&self, i: usize, j: usize) -> &DetEntry {
        &self.entries[(i - 1) * self.size + (j - 1)]
    }

    fn memo_key(&self, idx: usize, u: Complex64, c: Complex64) -> Option<EntryMemoKey> {
        let (kind, cells, base) = self.tags.get(idx).copied().flatten()?;
        Some((kind, cells, base, u.re.to_bits(), u.im.to_bits(), c.re.to_bits(), c.im.to_bits()))
    }

    pub fn eval(&self, u: Complex64, c: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
        let mut cache = QCache::new();
        let n = self.size;
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (idx, e) in self.entries.iter().enumerate() {
            m[idx / n][idx % n] = match e {
                DetEntry::Zero => Complex64::new(0.0, 0.0),
                DetEntry::One => Complex64::new(1.0, 0.0),
                DetEntry::Sum(sum) => match self.memo_key(idx, u, c) {
                    Some(key) => match ctx.memo.get_f64(&key) {
                        Some(v) => v,
                        None => {
                            let v = sum.eval_cached(u, c, ctx, &mut cache)?;
                            ctx.memo.put_f64(key, v);
                            v
                        }
                    },
                    None => sum.eval_cached(u, c, ctx, &mut cache)?,
                },
            };
        }
        let (det, rel_est) = lu_determinant_estimated(m);
        if rel_est <= DET_RESCUE_THRESHOLD {
            return Ok(det);
        }
        // The float elimination cannot be certified (the matrix is singular
        // or nearly so relative to its entry sizes); redo entries and
        // elimination in double-double precision.
        let mut ddcache = QCacheDd::new(ctx);
        let mut md = vec![vec![DdComplex::ZERO; n]; n];
        for (idx, e) in self.entries.iter().enumerate() {
            md[idx / n][idx % n] = match e {
                DetEntry::Zero => DdComplex::ZERO,
                DetEntry::One => DdComplex::ONE,
                DetEntry::Sum(sum) => match self.memo_key(idx, u, c) {
                    Some(key) => match ctx.memo.get_dd(&key) {
                        Some(v) => v,
                        None => {
                            let v = sum.eval_dd(u, c, ctx, &mut ddcache)?;
                            ctx.memo.put_dd(key, v);
                            v
                        }
                    },
                    None => sum.eval_dd(u, c, ctx, &mut ddcache)?,
                },
            };
        }
        Ok(lu_determinant_dd(md).collapse())
    }

    pub fn den_catalog(&self) -> BTreeSet<(usize, Shift)> {
        let mut set = BTreeSet::new();
        for e in &self.entries {
            if let DetEntry::Sum(sum) = e {
                set.extend(sum.den_catalog().iter().copied());
            }
        }
        set
    }

    pub fn psi_catalog(&self) -> BTreeSet<(usize, Shift)> {
        let mut set = BTreeSet::new();
        for e in &self.entries {
            if let DetEntry::Sum(sum) = e {
                set.extend(sum.psi_catalog());
            }
        }
        set
    }
}

/// Determinant by Gaussian elimination with partial pivoting; the empty
/// matrix has determinant 1.
/// Escalate a float determinant to double-double when its estimated relative
/// error exceeds this (two orders below the identity-check tolerances).
const DET_RESCUE_THRESHOLD: f64 = 1e-11;

/// Escalate a term sum to double-double when cancellation leaves less than
/// this fraction of the total summand magnitude.
const SUM_RESCUE_RATIO: f64 = 1e-3;

/// Elimination plus a running error estimate. Each pivot carries an absolute
/// error of order eps times the largest magnitude seen up to its step (both
/// the entries themselves and the update traffic), so the relative error of
/// the determinant is roughly eps * sum_k hist_k / |pivot_k| with hist_k the
/// running maximum. The estimate blows up exactly when cancellation eats the
/// pivots relative to where the matrix started.
fn lu_determinant_estimated(mut m: Vec<Vec<Complex64>>) -> (Complex64, f64) {
    let n = m.len();
    let mut det = Complex64::new(1.0, 0.0);
    let mut ratio_sum = 0.0f64;
    let mut hist = 0.0f64;
    for k in 0..n {
        let mut amax = 0.0f64;
        for row in m.iter().skip(k) {
            for v in row.iter().skip(k) {
                amax = amax.max(v.norm());
            }
        }
        if amax == 0.0 && hist == 0.0 {
            // Every entry is structurally zero.
            return (Complex64::new(0.0, 0.0), 0.0);
        }
        hist = hist.max(amax);
        let pivot_row = (k..n)
            .max_by(|&a, &b| {
                m[a][k]
                    .norm()
                    .partial_cmp(&m[b][k].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty pivot range");
        let pivot = m[pivot_row][k];
        if pivot.norm() == 0.0 {
            // A computed zero column with other entries alive cannot be
            // told apart from cancellation noise.
            return (Complex64::new(0.0, 0.0), f64::INFINITY);
        }
        if pivot_row != k {
            m.swap(pivot_row, k);
            det = -det;
        }
        ratio_sum += hist / pivot.norm();
        det *= pivot;
        for i in k + 1..n {
            let f = m[i][k] / pivot;
            for j in k + 1..n {
                let sub = f * m[k][j];
                m[i][j] -= sub;
            }
        }
    }
    (det, f64::EPSILON * 32.0 * n as f64 * ratio_sum)
}

fn lu_determinant_dd(mut m: Vec<Vec<DdComplex>>) -> DdComplex {
    let n = m.len();
    let mut det = DdComplex::ONE;
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&a, &b| {
                m[a][k]
                    .mag()
                    .partial_cmp(&m[b][k].mag())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty pivot range");
        if m[pivot_row][k].mag() == 0.0 {
            return DdComplex::ZERO;
        }
        if pivot_row != k {
            m.swap(pivot_row, k);
            det = -det;
        }
        let pivot = m[k][k];
        det = det * pivot;
        let ipiv = pivot.inv();
        for i in k + 1..n {
            let f = m[i][k] * ipiv;
            for j in k + 1..n {
                let sub = f * m[k][j];
                m[i][j] = m[i][j] - sub;
            }
        }
    }
    det
}

pub fn lu_determinant(mut m: Vec<Vec<Complex64>>) -> Complex64 {
    let n = m.len();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&a, &b| {
                m[a][k]
                    .norm()
                    .partial_cmp(&m[b][k].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty pivot range");
        if m[pivot_row][k].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot_row != k {
            m.swap(pivot_row, k);
            det = -det;
        }
        let pivot = m[k][k];
        det *= pivot;
        for i in k + 1..n {
            let f = m[i][k] / pivot;
            for j in k + 1..n {
                let sub = f * m[k][j];
                m[i][j] -= sub;
            }
        }
    }
    det
}

/// How an [`EigenFunction`] computes its values.
#[derive(Debug)]
pub enum FormulaBody {
    Sum(TermSum),
    Det(DetGrid),
}

/// An evaluatable eigenvalue formula: a symbolic body closed over a model
/// context and a value of the continuous parameter.
#[derive(Debug, Clone)]
pub struct EigenFunction {
    ctx: Arc<EvalContext>,
    body: Arc<FormulaBody>,
    pub c: Complex64,
    pub label: String,
    /// Number of summands when built by tableau enumeration.
    pub term_count: Option<usize>,
    /// Set when the construction is only conjecturally an eigenvalue
    /// (negative integer parameter).
    pub possibly_atypical: bool,
}

impl EigenFunction {
    pub(crate) fn from_sum(sum: TermSum, ctx: Arc<EvalContext>, c: Complex64, label: String) -> Self {
        let term_count = Some(sum.len());
        EigenFunction {
            ctx,
            body: Arc::new(FormulaBody::Sum(sum)),
            c,
            label,
            term_count,
            possibly_atypical: false,
        }
    }

    fn from_det(grid: DetGrid, ctx: Arc<EvalContext>, label: String) -> Self {
        EigenFunction {
            ctx,
            body: Arc::new(FormulaBody::Det(grid)),
            c: Complex64::new(0.0, 0.0),
            label,
            term_count: None,
            possibly_atypical: false,
        }
    }

    pub fn eval(&self, u: Complex64) -> Result<Complex64, EvalError> {
        match self.body.as_ref() {
            FormulaBody::Sum(sum) => sum.eval(u, self.c, &self.ctx),
            FormulaBody::Det(grid) => grid.eval(u, self.c, &self.ctx),
        }
    }

    pub fn context(&self) -> &Arc<EvalContext> {
        &self.ctx
    }

    pub fn body(&self) -> &FormulaBody {
        self.body.as_ref()
    }

    /// Same formula over a different root set / model (cheap: the symbolic
    /// body is shared).
    pub fn with_context(&self, ctx: Arc<EvalContext>) -> EigenFunction {
        let mut out = self.clone();
        out.ctx = ctx;
        out
    }

    /// Same formula at a different parameter value.
    pub fn with_c(&self, c: Complex64) -> EigenFunction {
        let mut out = self.clone();
        out.c = c;
        out
    }

    pub fn terms(&self) -> Option<&TermSum> {
        match self.body.as_ref() {
            FormulaBody::Sum(sum) => Some(sum),
            FormulaBody::Det(_) => None,
        }
    }

    /// Candidate pole shifts: every Q-denominator argument (color, shift)
    /// appearing in any box of the formula, pre-cancellation.
    pub fn den_catalog(&self) -> BTreeSet<(usize, Shift)> {
        match self.body.as_ref() {
            FormulaBody::Sum(sum) => sum.den_catalog().clone(),
            FormulaBody::Det(grid) => grid.den_catalog(),
        }
    }

    /// Vacuum-part arguments (letter, shift) appearing in the formula.
    pub fn psi_catalog(&self) -> BTreeSet<(usize, Shift)> {
        match self.body.as_ref() {
            FormulaBody::Sum(sum) => sum.psi_catalog(),
            FormulaBody::Det(grid) => grid.psi_catalog(),
        }
    }

    /// Printable formula: one line per term, or a per-entry summary for
    /// determinant routes.
    pub fn formula_lines(&self) -> Vec<String> {
        match self.body.as_ref() {
            FormulaBody::Sum(sum) => sum.terms.iter().map(|t| t.to_string()).collect(),
            FormulaBody::Det(grid) => {
                let mut lines = vec![format!("det of a {0} x {0} matrix:", grid.size)];
                for i in 1..=grid.size {
                    for j in 1..=grid.size {
                        let desc = match grid.entry(i, j) {
                            DetEntry::Zero => "0".to_string(),
                            DetEntry::One => "1".to_string(),
                            DetEntry::Sum(s) => format!("sum of {} terms", s.len()),
                        };
                        lines.push(format!("  ({i},{j}): {desc}"));
                    }
                }
                lines
            }
        }
    }
}

/// Plain tableau sum T_{lambda subset mu}(u): signed sum over admissible
/// fillings, box (i,j) evaluated at u - mu_1 + mu'_1 - 2i + 2j.
pub fn t_tableau_sum(
    shape: &SkewShape,
    ctx: &Arc<EvalContext>,
    opts: &BuildOptions,
) -> Result<EigenFunction, DvfError> {
    opts.check(shape.cell_count())?;
    let table = BoxTable::distinguished(ctx.rank());
    let sum = tableau_terms(shape, ctx.rank(), &table, Alphabet::Full);
    Ok(EigenFunction::from_sum(
        sum,
        Arc::clone(ctx),
        Complex64::new(0.0, 0.0),
        format!("T[{shape}]"),
    ))
}

/// Row-style determinant route: det over 1<=i,j<=mu_1 of one-column sums
/// T_1^{mu'_i - lambda'_j - i + j} at u - mu_1 + mu'_1 - mu'_i - lambda'_j + i + j - 1,
/// with exponent 0 giving 1 and negative exponents 0.
pub fn t_row_determinant(
    shape: &SkewShape,
    ctx: &Arc<EvalContext>,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    let table = BoxTable::distinguished(rank);
    let mu = shape.outer();
    let la = shape.inner();
    let muc = mu.conjugate();
    let lac = la.conjugate();
    let n = mu.first_row();
    let base = -(mu.first_row() as i64) + mu.col_height(1) as i64;
    let mut columns: HashMap<usize, TermSum> = HashMap::new();
    let mut entries = Vec::with_capacity(n * n);
    let mut tags = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let a = muc.part(i) as i64 - lac.part(j) as i64 - i as i64 + j as i64;
            let arg = base - muc.part(i) as i64 - lac.part(j) as i64 + i as i64 + j as i64 - 1;
            let (entry, tag) = match a {
                0 => (DetEntry::One, None),
                a if a < 0 => (DetEntry::Zero, None),
                a => {
                    let col = columns
                        .entry(a as usize)
                        .or_insert_with(|| column_terms(a as usize, rank, &table, Alphabet::Full));
                    (DetEntry::Sum(col.shifted(Shift::from_base(arg))), Some((0u8, a, arg)))
                }
            };
            entries.push(entry);
            tags.push(tag);
        }
    }
    Ok(EigenFunction::from_det(
        DetGrid { size: n, entries, tags },
        Arc::clone(ctx),
        format!("Tdet_rows[{shape}]"),
    ))
}

/// Column-style determinant route: det over 1<=i,j<=mu'_1 of one-row sums
/// T^1_{mu_j - lambda_i - j + i} at u - mu_1 + mu'_1 + mu_j + lambda_i - i - j + 1.
pub fn t_col_determinant(
    shape: &SkewShape,
    ctx: &Arc<EvalContext>,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    let table = BoxTable::distinguished(rank);
    let mu = shape.outer();
    let la = shape.inner();
    let n = mu.col_height(1);
    let base = -(mu.first_row() as i64) + mu.col_height(1) as i64;
    let mut rows: HashMap<usize, TermSum> = HashMap::new();
    let mut entries = Vec::with_capacity(n * n);
    let mut tags = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let m = mu.part(j) as i64 - la.part(i) as i64 - j as i64 + i as i64;
            let arg = base + mu.part(j) as i64 + la.part(i) as i64 - i as i64 - j as i64 + 1;
            let (entry, tag) = match m {
                0 => (DetEntry::One, None),
                m if m < 0 => (DetEntry::Zero, None),
                m => {
                    let row = rows
                        .entry(m as usize)
                        .or_insert_with(|| row_terms(m as usize, rank, &table));
                    (DetEntry::Sum(row.shifted(Shift::from_base(arg))), Some((1u8, m, arg)))
                }
            };
            entries.push(entry);
            tags.push(tag);
        }
    }
    Ok(EigenFunction::from_det(
        DetGrid { size: n, entries, tags },
        Arc::clone(ctx),
        format!("Tdet_cols[{shape}]"),
    ))
}

/// Fermionic-restricted sum H_nu(u): same cell arguments, fillings drawn
/// from the J- letters only.
pub fn h_restricted(
    nu: &Partition,
    ctx: &Arc<EvalContext>,
    opts: &BuildOptions,
) -> Result<EigenFunction, DvfError> {
    opts.check(nu.cell_count())?;
    let table = BoxTable::distinguished(ctx.rank());
    let shape = SkewShape::straight(nu.clone());
    let sum = tableau_terms(&shape, ctx.rank(), &table, Alphabet::MinusOnly);
    Ok(EigenFunction::from_sum(
        sum,
        Arc::clone(ctx),
        Complex64::new(0.0, 0.0),
        format!("H[{}]", nu),
    ))
}

/// Determinant analogue of [`h_restricted`], built from restricted
/// one-column sums with the row-style index pattern.
pub fn h_row_determinant(
    nu: &Partition,
    ctx: &Arc<EvalContext>,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    let table = BoxTable::distinguished(rank);
    let nuc = nu.conjugate();
    let n = nu.first_row();
    let base = -(nu.first_row() as i64) + nu.col_height(1) as i64;
    let mut columns: HashMap<usize, TermSum> = HashMap::new();
    let mut entries = Vec::with_capacity(n * n);
    let mut tags = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let a = nuc.part(i) as i64 - i as i64 + j as i64;
            let arg = base - nuc.part(i) as i64 + i as i64 + j as i64 - 1;
            let (entry, tag) = match a {
                0 => (DetEntry::One, None),
                a if a < 0 => (DetEntry::Zero, None),
                a => {
                    let col = columns.entry(a as usize).or_insert_with(|| {
                        column_terms(a as usize, rank, &table, Alphabet::MinusOnly)
                    });
                    (DetEntry::Sum(col.shifted(Shift::from_base(arg))), Some((2u8, a, arg)))
                }
            };
            entries.push(entry);
            tags.push(tag);
        }
    }
    Ok(EigenFunction::from_det(
        DetGrid { size: n, entries, tags },
        Arc::clone(ctx),
        format!("Hdet[{}]", nu),
    ))
}

fn check_deformed_shape(mu: &Partition, rank: Rank) -> Result<(), DvfError> {
    let need_rows = rank.r + 1;
    if mu.num_rows() < need_rows {
        return Err(DvfError::TooFewRows { got: mu.num_rows(), need: need_rows });
    }
    let need_len = rank.s + 1;
    if mu.part(need_rows) < need_len {
        return Err(DvfError::RowTooShort {
            row: need_rows,
            got: mu.part(need_rows),
            need: need_len,
        });
    }
    Ok(())
}

fn is_negative_integer(c: Complex64, tol: f64) -> bool {
    c.im.abs() < tol && c.re < -0.5 && (c.re - c.re.round()).abs() < tol
}

/// The Q-ratio factor Q_{r+1}(u + base - c) / Q_{r+1}(u + base + c).
fn q_ratio(color: usize, base: i64) -> TermSum {
    let term = Term {
        coeff: Complex64::new(1.0, 0.0),
        psis: Vec::new(),
        qnum: vec![(color, Shift::new(base, -1))],
        qden: vec![(color, Shift::new(base, 1))],
    };
    let mut sum = TermSum::default();
    sum.note_denominators(&term);
    sum.terms.push(term);
    sum
}

/// The deformed family: for a shape with at least r+1 rows, each of length
/// at least s+1,
///   Q_{r+1}(u-c+mu'_1-mu_1-r-1)/Q_{r+1}(u+c+mu'_1-mu_1-r-1)
///   * T_{mu_hat}(u+mu'_1+c-r-1) * H_nu(u-mu_1+mu_{r+2}-c-r-1)
/// with mu_hat the first r+1 rows and nu the rest. At nonnegative integer c
/// this collapses to the plain sum over the widened shape; it stays
/// pole-free for arbitrary complex c.
pub fn t_tilde(
    mu: &Partition,
    c: Complex64,
    ctx: &Arc<EvalContext>,
    opts: &BuildOptions,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    check_deformed_shape(mu, rank)?;
    let table = BoxTable::distinguished(rank);
    let rows = mu.rows();
    let mu_hat = Partition::new(rows[..rank.r + 1].to_vec()).expect("prefix stays sorted");
    let nu = Partition::new(rows[rank.r + 1..].to_vec()).expect("suffix stays sorted");
    opts.check(mu_hat.cell_count())?;
    opts.check(nu.cell_count())?;

    let mu1 = mu.first_row() as i64;
    let height = mu.col_height(1) as i64;
    let r1 = (rank.r + 1) as i64;

    let hat_sum = tableau_terms(
        &SkewShape::straight(mu_hat),
        rank,
        &table,
        Alphabet::Full,
    )
    .shifted(Shift::new(height - r1, 1));
    let h_sum = tableau_terms(&SkewShape::straight(nu.clone()), rank, &table, Alphabet::MinusOnly)
        .shifted(Shift::new(-mu1 + mu.part(rank.r + 2) as i64 - r1, -1));
    let sum = q_ratio(rank.r + 1, height - mu1 - r1).mul(&hat_sum).mul(&h_sum);

    let mut fun =
        EigenFunction::from_sum(sum, Arc::clone(ctx), c, format!("Ttilde[{mu}; c]"));
    fun.possibly_atypical = is_negative_integer(c, 1e-9);
    Ok(fun)
}

/// Rectangular corollary: Q_{r+1}(u-c-s-1)/Q_{r+1}(u+c-s-1) * T over the
/// (r+1) x (s+1) rectangle at u+c.
pub fn t_tilde_rect(
    c: Complex64,
    ctx: &Arc<EvalContext>,
    opts: &BuildOptions,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    let rect = Partition::new(vec![rank.s + 1; rank.r + 1]).expect("rectangle");
    opts.check(rect.cell_count())?;
    let table = BoxTable::distinguished(rank);
    let body = tableau_terms(&SkewShape::straight(rect), rank, &table, Alphabet::Full)
        .shifted(Shift::new(0, 1));
    let sum = q_ratio(rank.r + 1, -(rank.s as i64) - 1).mul(&body);
    let mut fun = EigenFunction::from_sum(sum, Arc::clone(ctx), c, "TtildeRect[c]".to_string());
    fun.possibly_atypical = is_negative_integer(c, 1e-9);
    Ok(fun)
}

/// The leading term of the deformed family: the Q-ratio times the product
/// over the highest-weight filling (letter i across row i <= r+1 at
/// parameter +c; letter r+1+j down the j-th column below, at parameter -c).
pub fn top_term(
    mu: &Partition,
    c: Complex64,
    ctx: &Arc<EvalContext>,
) -> Result<EigenFunction, DvfError> {
    let rank = ctx.rank();
    check_deformed_shape(mu, rank)?;
    let table = BoxTable::distinguished(rank);
    let mu1 = mu.first_row() as i64;
    let height = mu.col_height(1) as i64;
    let r1 = (rank.r + 1) as i64;

    let mut term = Term::one();
    for i in 1..=rank.r + 1 {
        for j in 1..=mu.part(i) {
            let base = -mu1 + height - 2 * (i as i64) + 2 * (j as i64);
            term = term.mul(&table.term_for(i, Shift::new(base, 1)));
        }
    }
    let heights = eta(rank, mu);
    for j in 1..=rank.s + 1 {
        for i in 1..=heights[j - 1] {
            let base = -mu1 + height - 2 * r1 - 2 * (i as i64) + 2 * (j as i64);
            term = term.mul(&table.term_for(rank.r + 1 + j, Shift::new(base, -1)));
        }
    }
    let sum = q_ratio(rank.r + 1, height - mu1 - r1).mul(&TermSum { terms: vec![term], den_catalog: BTreeSet::new() });
    Ok(EigenFunction::from_sum(sum, Arc::clone(ctx), c, format!("TopTerm[{mu}; c]")))
}

/// Which evaluation route a spec requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    TableauSum,
    RowDeterminant,
    ColumnDeterminant,
    Reduction,
}

fn default_route_sum() -> Route {
    Route::TableauSum
}

fn default_route_reduction() -> Route {
    Route::Reduction
}

/// Accepts either a bare number or {re, im} for the parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair { re: f64, im: f64 },
}

impl From<ComplexSpec> for Complex64 {
    fn from(v: ComplexSpec) -> Complex64 {
        match v {
            ComplexSpec::Real(x) => Complex64::new(x, 0.0),
            ComplexSpec::Pair { re, im } => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for ComplexSpec {
    fn from(z: Complex64) -> ComplexSpec {
        ComplexSpec::Pair { re: z.re, im: z.im }
    }
}

/// Wire description of a formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DvfSpec {
    Plain {
        mu: Partition,
        #[serde(default = "Partition::empty", skip_serializing_if = "Partition::is_empty")]
        lambda: Partition,
        #[serde(default = "default_route_sum")]
        route: Route,
    },
    Restricted {
        nu: Partition,
        #[serde(default = "default_route_sum")]
        route: Route,
    },
    Deformed {
        mu: Partition,
        c: ComplexSpec,
        #[serde(default = "default_route_reduction")]
        route: Route,
    },
    DeformedRect {
        c: ComplexSpec,
        #[serde(default = "default_route_reduction")]
        route: Route,
    },
}

/// Builds the formula a spec describes.
pub fn build_from_spec(
    spec: &DvfSpec,
    ctx: &Arc<EvalContext>,
    opts: &BuildOptions,
) -> Result<EigenFunction, DvfError> {
    match spec {
        DvfSpec::Plain { mu, lambda, route } => {
            let shape = SkewShape::new(mu.clone(), lambda.clone())?;
            match route {
                Route::TableauSum => t_tableau_sum(&shape, ctx, opts),
                Route::RowDeterminant => t_row_determinant(&shape, ctx),
                Route::ColumnDeterminant => t_col_determinant(&shape, ctx),
                Route::Reduction => {
                    Err(DvfError::BadSpec("plain shapes have no reduction route".into()))
                }
            }
        }
        DvfSpec::Restricted { nu, route } => match route {
            Route::TableauSum => h_restricted(nu, ctx, opts),
            Route::RowDeterminant => h_row_determinant(nu, ctx),
            _ => Err(DvfError::BadSpec(
                "restricted sums support tableau_sum and row_determinant routes".into(),
            )),
        },
        DvfSpec::Deformed { mu, c, route } => match route {
            Route::Reduction => t_tilde(mu, (*c).into(), ctx, opts),
            _ => Err(DvfError::BadSpec("deformed kinds evaluate via the reduction route".into())),
        },
        DvfSpec::DeformedRect { c, route } => match route {
            Route::Reduction => t_tilde_rect((*c).into(), ctx, opts),
            _ => Err(DvfError::BadSpec("deformed kinds evaluate via the reduction route".into())),
        },
    }
}

/// How to compute a supercharacter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharRoute {
    TableauSum,
    RowDeterminant,
    ColumnDeterminant,
}

/// The u-independent specialization: box a -> x_a for bosonic letters,
/// box a -> y_{a-r-1} with a minus sign per occurrence for fermionic ones.
pub fn supercharacter(
    shape: &SkewShape,
    rank: Rank,
    x: &[Complex64],
    y: &[Complex64],
    route: CharRoute,
) -> Result<Complex64, DvfError> {
    if x.len() != rank.r + 1 {
        return Err(DvfError::WeightCountMismatch { got: x.len(), want: rank.r + 1 });
    }
    if y.len() != rank.s + 1 {
        return Err(DvfError::WeightCountMismatch { got: y.len(), want: rank.s + 1 });
    }
    match route {
        CharRoute::TableauSum => Ok(char_sum(shape, rank, x, y, Alphabet::Full)),
        CharRoute::RowDeterminant => {
            let mu = shape.outer();
            let la = shape.inner();
            let muc = mu.conjugate();
            let lac = la.conjugate();
            let n = mu.first_row();
            let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            for i in 1..=n {
                for j in 1..=n {
                    let a = muc.part(i) as i64 - lac.part(j) as i64 - i as i64 + j as i64;
                    m[i - 1][j - 1] = char_block(a, rank, x, y, true);
                }
            }
            Ok(lu_determinant(m))
        }
        CharRoute::ColumnDeterminant => {
            let mu = shape.outer();
            let la = shape.inner();
            let n = mu.col_height(1);
            let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            for i in 1..=n {
                for j in 1..=n {
                    let w = mu.part(j) as i64 - la.part(i) as i64 - j as i64 + i as i64;
                    m[i - 1][j - 1] = char_block(w, rank, x, y, false);
                }
            }
            Ok(lu_determinant(m))
        }
    }
}

fn char_block(size: i64, rank: Rank, x: &[Complex64], y: &[Complex64], column: bool) -> Complex64 {
    match size {
        0 => Complex64::new(1.0, 0.0),
        s if s < 0 => Complex64::new(0.0, 0.0),
        s => {
            let part = if column { vec![1; s as usize] } else { vec![s as usize] };
            let shape = SkewShape::straight(Partition::new(part).expect("valid block"));
            char_sum(&shape, rank, x, y, Alphabet::Full)
        }
    }
}

fn char_sum(
    shape: &SkewShape,
    rank: Rank,
    x: &[Complex64],
    y: &[Complex64],
    alphabet: Alphabet,
) -> Complex64 {
    let fillings = match alphabet {
        Alphabet::Full => enumerate_admissible(shape, rank),
        Alphabet::MinusOnly => enumerate_restricted(shape, rank),
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for filling in fillings {
        let mut prod = Complex64::new(1.0, 0.0);
        for &letter in &filling.entries {
            prod *= if rank.is_plus(letter) { x[letter - 1] } else { -y[letter - rank.r - 2] };
        }
        acc += prod;
    }
    acc
}

/// The (a rows) x (m columns) rectangle; empty when either index is zero.
pub fn rectangle(a: usize, m: usize) -> Partition {
    if a == 0 || m == 0 {
        Partition::empty()
    } else {
        Partition::new(vec![m; a]).expect("rectangle is a partition")
    }
}
