//! Bethe-equation machinery: system assembly in both gradings, the
//! polynomial data behind the left sides, cleared-form residuals, a damped
//! Newton solver for small systems, and the contour scans that certify
//! pole-freeness of assembled eigenvalue candidates.
//!
//! A system couples one color per simple root. The equation for root
//! `u_k^{(a)}` reads
//!
//! ```text
//! - prod_j [u - w_j^{(a)} + b_j^{(a)}/t_a] / [u - w_j^{(a)} - b_j^{(a)}/t_a]
//!   = (-1)^{deg a} prod_b Q_b(u + (alpha_a|alpha_b)) / Q_b(u - (alpha_a|alpha_b))
//! ```
//!
//! with the inner products taken from the weight lattice in `model`. All
//! residual arithmetic works on the cleared form `p1 - p2` (left numerator
//! times right denominator minus the converse), which is entire in the
//! roots, so the solver never touches a branch cut.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::analytic::{
    bracket, contour_residue_scaled, psi_singularities, z_box, BetheState, EvalContext,
    EvalError, Vacuum,
};
use crate::diagrams::{Alphabet, Partition, SkewShape};
use crate::dvf::{tableau_terms, BoxEntry, BoxTable, EigenFunction};
use crate::model::{
    eta, inner_product, simple_roots, ModelConfig, ModelError, Rank, Site, WeightVector,
};
use crate::report::{CheckRecord, VerificationReport};

#[derive(Debug, Error)]
pub enum BaeError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("state has {got} colors but the system expects {want}")]
    ColorMismatch { got: usize, want: usize },
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("Jacobian numerically singular (pivot ratio {cond:.3e})")]
    SingularJacobian { cond: f64 },
    #[error("the alternate-grading fixture is defined at rank (1,0) only, got ({r},{s})")]
    FixtureRank { r: usize, s: usize },
}

/// One equation set: per-color site data (w, b), the color signs t_a and
/// root degrees, the Cartan pairings for the right side, and the vacuum
/// hook matching the quantum space the sites encode.
#[derive(Debug, Clone)]
pub struct BaeSystem {
    pub config: ModelConfig,
    gram: Vec<Vec<f64>>,
    t: Vec<f64>,
    deg: Vec<u8>,
    sites: Vec<Vec<Site>>,
    vacuum: Vacuum,
}

fn gram_matrix(roots: &[WeightVector]) -> Vec<Vec<f64>> {
    roots
        .iter()
        .map(|a| {
            roots
                .iter()
                .map(|b| {
                    let ip = inner_product(a, b).expect("simple roots share one rank");
                    debug_assert!(ip.im.abs() < 1e-12);
                    ip.re
                })
                .collect()
        })
        .collect()
}

impl BaeSystem {
    /// The distinguished-grading system for the restricted quantum space:
    /// the site label b_j enters color r+1 only, every other color sees an
    /// unlabeled site (its left side is identically -1).
    pub fn distinguished(config: &ModelConfig) -> BaeSystem {
        let rank = config.rank;
        let colors = rank.colors();
        let gram = gram_matrix(&simple_roots(rank));
        let zero = Complex64::new(0.0, 0.0);
        let sites = (1..=colors)
            .map(|a| {
                config
                    .sites
                    .iter()
                    .map(|s| Site { w: s.w, b: if a == rank.r + 1 { s.b } else { zero } })
                    .collect()
            })
            .collect();
        BaeSystem {
            config: config.clone(),
            gram,
            t: (1..=colors).map(|a| rank.t_sign(a)).collect(),
            deg: (1..=colors).map(|a| u8::from(a == rank.r + 1)).collect(),
            sites,
            vacuum: Vacuum::Restricted,
        }
    }

    /// The alternate-grading fixture at rank (1,0): simple roots
    /// delta_1 - eps_1 (odd) and eps_1 - eps_2, color signs t = (-1, +1).
    /// The first site carries its label shifted by one on color 1, every
    /// later site a unit label, and color 2 is undressed; this matches the
    /// vacuum hook [`Vacuum::AppendixA`].
    pub fn appendix_a(config: &ModelConfig) -> Result<BaeSystem, BaeError> {
        let rank = config.rank;
        if (rank.r, rank.s) != (1, 0) {
            return Err(BaeError::FixtureRank { r: rank.r, s: rank.s });
        }
        let alpha1 = WeightVector::basis_delta(rank, 1)
            .sub(&WeightVector::basis_eps(rank, 1))
            .expect("same rank");
        let alpha2 = WeightVector::basis_eps(rank, 1)
            .sub(&WeightVector::basis_eps(rank, 2))
            .expect("same rank");
        let one = Complex64::new(1.0, 0.0);
        let color1 = config
            .sites
            .iter()
            .enumerate()
            .map(|(j, s)| Site { w: s.w, b: if j == 0 { s.b + one } else { one } })
            .collect();
        let color2 = config
            .sites
            .iter()
            .map(|s| Site { w: s.w, b: Complex64::new(0.0, 0.0) })
            .collect();
        Ok(BaeSystem {
            config: config.clone(),
            gram: gram_matrix(&[alpha1, alpha2]),
            t: vec![-1.0, 1.0],
            deg: vec![1, 0],
            sites: vec![color1, color2],
            vacuum: Vacuum::AppendixA,
        })
    }

    pub fn colors(&self) -> usize {
        self.gram.len()
    }

    pub fn vacuum(&self) -> Vacuum {
        self.vacuum.clone()
    }

    /// An evaluation context carrying this system's vacuum hook.
    pub fn context(&self, state: BetheState) -> Result<EvalContext, EvalError> {
        Ok(EvalContext::new(self.config.clone(), state)?.with_vacuum(self.vacuum.clone()))
    }

    fn check_state(&self, state: &BetheState) -> Result<(), BaeError> {
        if state.colors() != self.colors() {
            return Err(BaeError::ColorMismatch { got: state.colors(), want: self.colors() });
        }
        Ok(())
    }

    /// The two cleared products of equation (a, k): p1 = LHS_num * RHS_den
    /// and p2 = RHS_num * LHS_den. Both are entire in the roots.
    fn products(&self, roots: &[Vec<Complex64>], a: usize, k: usize) -> (Complex64, Complex64) {
        let v = roots[a - 1][k];
        let q = self.config.q;
        let ta = self.t[a - 1];
        let mut lnum = Complex64::new(-1.0, 0.0);
        let mut lden = Complex64::new(1.0, 0.0);
        for site in &self.sites[a - 1] {
            // An unlabeled site contributes [v-w]/[v-w] = 1; keeping the
            // common factor would plant a spurious double zero at v = w.
            if site.b.norm() == 0.0 {
                continue;
            }
            let shift = site.b / ta;
            lnum *= bracket(v - site.w + shift, q);
            lden *= bracket(v - site.w - shift, q);
        }
        let sign = if self.deg[a - 1] % 2 == 1 { -1.0 } else { 1.0 };
        let mut rnum = Complex64::new(sign, 0.0);
        let mut rden = Complex64::new(1.0, 0.0);
        for b in 1..=self.colors() {
            let g = self.gram[a - 1][b - 1];
            if g == 0.0 {
                continue;
            }
            let gc = Complex64::new(g, 0.0);
            for &root in &roots[b - 1] {
                rnum *= bracket(v + gc - root, q);
                rden *= bracket(v - gc - root, q);
            }
        }
        (lnum * rden, rnum * lden)
    }

    /// Raw residuals plus per-equation scales (max product magnitude) and
    /// the scaled sup norm, in canonical (color, index) order.
    fn eval_point(&self, roots: &[Vec<Complex64>]) -> EvalPoint {
        let mut raw = Vec::new();
        let mut scale = Vec::new();
        let mut norm: f64 = 0.0;
        for a in 1..=self.colors() {
            for k in 0..roots[a - 1].len() {
                let (p1, p2) = self.products(roots, a, k);
                let s = p1.norm().max(p2.norm()).max(f64::MIN_POSITIVE);
                let r = p1 - p2;
                let v = r.norm() / s;
                // f64::max ignores NaN, so overflowed products must be
                // pinned to infinity explicitly or they read as converged.
                norm = if v.is_finite() { norm.max(v) } else { f64::INFINITY };
                raw.push(r);
                scale.push(s);
            }
        }
        EvalPoint { raw, scale, norm }
    }
}

struct EvalPoint {
    raw: Vec<Complex64>,
    scale: Vec<f64>,
    norm: f64,
}

/// Scale-normalized residual of every equation, canonical (color, index)
/// order; the zero vector iff the state satisfies the system (away from
/// spurious common zeros of both cleared products).
pub fn bae_residual(sys: &BaeSystem, state: &BetheState) -> Result<Vec<Complex64>, BaeError> {
    sys.check_state(state)?;
    let point = sys.eval_point(state.all_roots());
    Ok(point
        .raw
        .iter()
        .zip(&point.scale)
        .map(|(r, s)| r / s)
        .collect())
}

fn flatten(roots: &[Vec<Complex64>]) -> Vec<Complex64> {
    roots.iter().flatten().copied().collect()
}

fn unflatten(x: &[Complex64], counts: &[usize]) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(counts.len());
    let mut at = 0;
    for &n in counts {
        out.push(x[at..at + n].to_vec());
        at += n;
    }
    out
}

/// Complex LU solve with partial pivoting; `Err(ratio)` reports the pivot
/// ratio when the matrix is numerically singular.
fn lu_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Result<Vec<Complex64>, f64> {
    let n = b.len();
    let mut max_pivot: f64 = 0.0;
    for col in 0..n {
        let mut best = col;
        let mut best_mag = a[col][col].norm();
        for row in col + 1..n {
            let mag = a[row][col].norm();
            if mag > best_mag {
                best = row;
                best_mag = mag;
            }
        }
        if best != col {
            a.swap(col, best);
            b.swap(col, best);
        }
        max_pivot = max_pivot.max(best_mag);
        if best_mag <= f64::MIN_POSITIVE || best_mag < 1e-14 * max_pivot {
            return Err(if max_pivot > 0.0 { best_mag / max_pivot } else { 0.0 });
        }
        let pivot_row = a[col].clone();
        let pivot_rhs = b[col];
        for row in col + 1..n {
            let f = a[row][col] / pivot_row[col];
            if f.norm() == 0.0 {
                continue;
            }
            for j in col + 1..n {
                a[row][j] -= f * pivot_row[j];
            }
            a[row][col] = Complex64::new(0.0, 0.0);
            b[row] -= f * pivot_rhs;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Line-search penalty that inflates near already-found solutions so the
/// search wanders elsewhere. A heuristic, not a complete deflation: the
/// Newton direction itself is left untouched.
fn deflation(x: &[Complex64], found: &[Vec<Complex64>]) -> f64 {
    let mut d = 1.0;
    for s in found {
        let dist: f64 = x.iter().zip(s).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        d *= (dist / 0.5).clamp(1e-6, 1.0);
    }
    d
}

const FD_STEP: f64 = 1e-7;
const MIN_DAMPING: f64 = 1.0 / 1024.0;
const STEP_CAP: f64 = 4.0;

fn newton_run(
    sys: &BaeSystem,
    counts: &[usize],
    mut x: Vec<Complex64>,
    max_iter: usize,
    tol: f64,
    found: &[Vec<Complex64>],
) -> Result<Vec<Complex64>, BaeError> {
    let m = x.len();
    if m == 0 {
        return Ok(x);
    }
    let mut base = sys.eval_point(&unflatten(&x, counts));
    for iter in 0..max_iter {
        if base.norm < tol {
            return Ok(x);
        }
        if !base.norm.is_finite() {
            return Err(BaeError::NoConvergence { iters: iter, residual: base.norm });
        }
        // Forward-difference Jacobian of the raw residuals; a real step is
        // enough since the cleared form is holomorphic in every root.
        let mut jac = vec![vec![Complex64::new(0.0, 0.0); m]; m];
        for j in 0..m {
            let h = FD_STEP * (1.0 + x[j].norm());
            let mut xj = x.clone();
            xj[j] += Complex64::new(h, 0.0);
            let shifted = sys.eval_point(&unflatten(&xj, counts));
            for i in 0..m {
                jac[i][j] = (shifted.raw[i] - base.raw[i]) / h;
            }
        }
        // Row-equilibrate by the base scales; this leaves the solution of
        // the linear system untouched but keeps the pivoting honest.
        let mut rhs: Vec<Complex64> = base.raw.iter().map(|r| -r).collect();
        for i in 0..m {
            let s = base.scale[i];
            for j in 0..m {
                jac[i][j] /= s;
            }
            rhs[i] /= s;
        }
        let mut delta =
            lu_solve(jac, rhs).map_err(|cond| BaeError::SingularJacobian { cond })?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(BaeError::NoConvergence { iters: iter + 1, residual: base.norm });
        }
        // Near critical points of the residuals the full Newton step can be
        // enormous; cap it so damped trials stay where the linearization
        // means anything.
        let step = delta.iter().map(|d| d.norm()).fold(0.0_f64, f64::max);
        if step > STEP_CAP {
            let shrink = STEP_CAP / step;
            for d in &mut delta {
                *d *= shrink;
            }
        }
        let merit0 = base.norm / deflation(&x, found);
        let mut lambda = 1.0;
        let mut advanced = false;
        while lambda >= MIN_DAMPING {
            let xt: Vec<Complex64> =
                x.iter().zip(&delta).map(|(xi, d)| xi + lambda * d).collect();
            let trial = sys.eval_point(&unflatten(&xt, counts));
            if trial.norm.is_finite() {
                // Frozen-scale merit: measure the trial against the base
                // normalization so the search sees the first-order decrease
                // of the cleared residuals, not the wobble of a moving
                // scale.
                let frozen = trial
                    .raw
                    .iter()
                    .zip(&base.scale)
                    .map(|(r, s)| r.norm() / s)
                    .fold(0.0_f64, f64::max);
                let merit = frozen / deflation(&xt, found);
                if trial.norm < tol || merit < merit0 * (1.0 - 1e-4 * lambda) {
                    x = xt;
                    base = trial;
                    advanced = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !advanced {
            return Err(BaeError::NoConvergence { iters: iter + 1, residual: base.norm });
        }
    }
    if base.norm < tol {
        Ok(x)
    } else {
        Err(BaeError::NoConvergence { iters: max_iter, residual: base.norm })
    }
}

/// Damped Newton on the cleared residuals from `seed`'s roots. Succeeds when
/// the scaled sup-norm residual drops below `tol`; the result is returned in
/// canonical sorted order and must have pairwise-distinct roots per color.
pub fn solve_newton(
    sys: &BaeSystem,
    seed: &BetheState,
    max_iter: usize,
    tol: f64,
) -> Result<BetheState, BaeError> {
    sys.check_state(seed)?;
    let counts = seed.counts();
    let x = newton_run(sys, &counts, flatten(seed.all_roots()), max_iter, tol, &[])?;
    // Collapsed roots are rejected here: repeated Q-function zeros are out
    // of scope for every downstream residue argument.
    let state = BetheState::new(unflatten(&x, &counts))?;
    Ok(state.sorted())
}

/// Multi-start search: `seeds` Newton runs from uniform random starts in the
/// box [-2,2]^2 per root, deduplicated after canonical sorting. Empirical by
/// design; finding no solution is not an error.
pub fn multi_start<R: Rng>(
    sys: &BaeSystem,
    counts: &[usize],
    seeds: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Vec<BetheState> {
    let m: usize = counts.iter().sum();
    if m == 0 {
        return if seeds > 0 { vec![BetheState::vacuum(sys.colors())] } else { Vec::new() };
    }
    let mut found: Vec<Vec<Complex64>> = Vec::new();
    let mut states = Vec::new();
    for _ in 0..seeds {
        let x0: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let Ok(x) = newton_run(sys, counts, x0, max_iter, tol, &found) else { continue };
        let Ok(state) = BetheState::new(unflatten(&x, counts)) else { continue };
        let canon = state.sorted();
        let flat = flatten(canon.all_roots());
        let dup = found.iter().any(|s| {
            s.iter().zip(&flat).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() < 1e-7
        });
        if dup {
            continue;
        }
        found.push(flat);
        states.push(canon);
    }
    states
}

/// Per-color root multisets of the polynomials P_a whose shifted ratio
/// builds one site factor of the equations' left side, with the color signs.
#[derive(Debug, Clone)]
pub struct DrinfeldData {
    pub roots: Vec<Vec<Complex64>>,
    pub t: Vec<f64>,
}

impl DrinfeldData {
    /// Restricted-quantum-space polynomials of the one-site module with
    /// hook-bounded diagram `mu` based at `w` (distinguished grading):
    /// color a <= r carries mu_a - mu_{a+1} roots climbing in steps of two,
    /// color r+1 carries mu_{r+1} + eta_1 roots descending, and color
    /// r+1+d carries eta_d - eta_{d+1} descending, eta being the column
    /// overshoot heights of `mu` past row r+1.
    pub fn from_diagram(
        rank: Rank,
        mu: &Partition,
        w: Complex64,
    ) -> Result<DrinfeldData, ModelError> {
        if mu.part(rank.r + 2) > rank.s + 1 {
            return Err(ModelError::HookViolation {
                got: mu.part(rank.r + 2),
                limit: rank.s + 1,
            });
        }
        let etas = eta(rank, mu);
        let mu1 = mu.part(1) as i64;
        let h1 = mu.col_height(1) as i64;
        let at = |x: i64| w + Complex64::new(x as f64, 0.0);
        let mut roots = Vec::with_capacity(rank.colors());
        for a in 1..=rank.r {
            let ai = a as i64;
            let next = mu.part(a + 1) as i64;
            let count = mu.part(a) as i64 - next;
            roots.push((1..=count).map(|i| at(-ai + 2 * next - mu1 + h1 + 2 * i - 1)).collect());
        }
        {
            let ri = rank.r as i64;
            let m = mu.part(rank.r + 1) as i64;
            let count = m + etas[0] as i64;
            roots.push((1..=count).map(|i| at(-ri + 2 * m - mu1 + h1 - 2 * i)).collect());
        }
        for d in 1..=rank.s {
            let di = d as i64;
            let next = etas[d] as i64;
            let count = etas[d - 1] as i64 - next;
            let ri = rank.r as i64;
            roots.push((1..=count).map(|i| at(di - 2 * next - ri - mu1 + h1 - 2 * i)).collect());
        }
        Ok(DrinfeldData { roots, t: (1..=rank.colors()).map(|a| rank.t_sign(a)).collect() })
    }

    /// Alternate-grading data of the unit box based at `w`:
    /// P_1(zeta) = zeta - w and P_2 = 1.
    pub fn appendix_a_single_box(w: Complex64) -> DrinfeldData {
        DrinfeldData { roots: vec![vec![w], Vec::new()], t: vec![-1.0, 1.0] }
    }

    /// Alternate-grading data of the two-row block (b, b) based at `w`:
    /// P_1 carries the b+1 roots w-b, w-b+2, ..., w+b and P_2 = 1.
    pub fn appendix_a_two_row(b: usize, w: Complex64) -> DrinfeldData {
        let bi = b as i64;
        let roots1 = (1..=bi + 1)
            .map(|j| w + Complex64::new((2 * j - bi - 2) as f64, 0.0))
            .collect();
        DrinfeldData { roots: vec![roots1, Vec::new()], t: vec![-1.0, 1.0] }
    }

    pub fn degree(&self, a: usize) -> usize {
        self.roots[a - 1].len()
    }

    /// P_a(zeta) as a monic product over the stored roots.
    pub fn eval(&self, a: usize, zeta: Complex64) -> Complex64 {
        self.roots[a - 1].iter().map(|&r| zeta - r).product()
    }
}

/// P_a(u + 1/t_a) / P_a(u - 1/t_a), the building block of one left-side
/// site factor. Empty polynomials give 1 for every color.
pub fn drinfeld_ratio(a: usize, u: Complex64, data: &DrinfeldData) -> Complex64 {
    let shift = Complex64::new(1.0 / data.t[a - 1], 0.0);
    data.eval(a, u + shift) / data.eval(a, u - shift)
}

/// Knobs for the contour scans.
#[derive(Debug, Clone)]
pub struct PoleScanOptions {
    /// Pass threshold on |residue| / (radius * max |f| on the contour).
    pub residue_tol: f64,
    /// Threshold for the up-front equation-residual record.
    pub bae_tol: f64,
    /// Record the equation residual before scanning.
    pub check_bae: bool,
    /// Contour radius as a fraction of the nearest-singularity distance.
    pub radius_factor: f64,
    /// Hard lower bound on the radius; engaging it is noted on the check.
    pub radius_floor: f64,
    /// Trapezoid samples per contour.
    pub samples: usize,
}

impl Default for PoleScanOptions {
    fn default() -> Self {
        PoleScanOptions {
            residue_tol: 1e-8,
            bae_tol: 1e-10,
            check_bae: true,
            radius_factor: 1e-3,
            radius_floor: 1e-6,
            samples: 32,
        }
    }
}

/// Bracket zeros repeat with period pi*i/ln q, so every singularity has
/// images one period away; include them when measuring safe contour radii.
fn with_period_images(points: Vec<Complex64>, q: Complex64) -> Vec<Complex64> {
    let period = Complex64::new(0.0, PI) / q.ln();
    let mut out = Vec::with_capacity(points.len() * 3);
    for &p in &points {
        out.push(p);
        out.push(p + period);
        out.push(p - period);
    }
    out
}

fn nearest_other(points: &[Complex64], at: Complex64) -> f64 {
    points
        .iter()
        .map(|&p| (p - at).norm())
        .filter(|d| *d > 1e-9)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

fn contour_radius(masters: &[Complex64], at: Complex64, opts: &PoleScanOptions) -> (f64, bool) {
    let radius = opts.radius_factor * nearest_other(masters, at);
    if radius < opts.radius_floor {
        (opts.radius_floor, true)
    } else {
        (radius, false)
    }
}

/// Candidate pole locations of `f`: every catalogued denominator factor
/// Q_b(u + shift) vanishes at u = root - shift, once per root of color b.
fn q_pole_candidates(f: &EigenFunction) -> Vec<(String, Complex64)> {
    let ctx = f.context();
    let c = f.c;
    let mut out = Vec::new();
    for (color, shift) in f.den_catalog() {
        if color == 0 || color >= ctx.rank().alphabet_size() {
            continue;
        }
        for (k, &root) in ctx.state.roots(color).iter().enumerate() {
            out.push((
                format!("Q{color}({shift}) zero from root {} of color {color}", k + 1),
                root - shift.value(c),
            ));
        }
    }
    out
}

/// Genuine vacuum-part poles of `f` (never scanned, only avoided).
fn psi_pole_points(f: &EigenFunction) -> Vec<Complex64> {
    let ctx = f.context();
    let c = f.c;
    let sing = psi_singularities(ctx);
    let mut out = Vec::new();
    for (_, shift) in f.psi_catalog() {
        for &s in &sing {
            out.push(s - shift.value(c));
        }
    }
    out
}

/// Contour-scan every candidate pole of `f` against its context's roots.
/// Each candidate gets one record with the residue measured relative to
/// radius * max |f| on the contour; an optional leading record checks that
/// the state satisfies `sys` in the first place. Candidates sit at
/// root - shift for every catalogued denominator, so an empty root set
/// passes trivially.
pub fn pole_scan(
    f: &EigenFunction,
    sys: &BaeSystem,
    opts: &PoleScanOptions,
) -> Result<VerificationReport, BaeError> {
    let ctx = f.context();
    let mut report = VerificationReport::new(format!("pole scan of {}", f.label), 0);

    if opts.check_bae {
        let residuals = bae_residual(sys, &ctx.state)?;
        let max = residuals.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        report.push(
            CheckRecord::new("equation residual", opts.bae_tol, max < opts.bae_tol)
                .with_max_rel_err(max)
                .with_samples(residuals.len()),
        );
    }

    let candidates = q_pole_candidates(f);
    let mut masters: Vec<Complex64> = candidates.iter().map(|&(_, at)| at).collect();
    masters.extend(psi_pole_points(f));
    let masters = with_period_images(masters, ctx.q());

    for (name, at) in candidates {
        let (radius, floored) = contour_radius(&masters, at, opts);
        let record = match contour_residue_scaled(|z| f.eval(z), at, radius, opts.samples) {
            Ok((res, fmax)) => {
                let rel = res.norm() / (radius * fmax).max(f64::MIN_POSITIVE);
                let mut rec = CheckRecord::new(name, opts.residue_tol, rel < opts.residue_tol)
                    .with_location(at)
                    .with_residue(rel)
                    .with_samples(opts.samples);
                if floored {
                    rec = rec.with_note("radius floor engaged");
                }
                rec
            }
            Err(err) => CheckRecord::new(name, opts.residue_tol, false)
                .with_location(at)
                .with_note(format!("contour evaluation failed: {err}")),
        };
        report.push(record);
    }
    Ok(report)
}

/// Denominator content (color, shift) of the single-box function for one
/// letter, boundary Q-functions dropped.
fn z_box_denominators(a: usize, rank: Rank) -> Vec<(usize, i64)> {
    let ai = a as i64;
    let ri = rank.r as i64;
    let (d1, d2) = if rank.is_plus(a) { (ai - 1, ai) } else { (2 * ri - ai + 3, 2 * ri - ai + 2) };
    let mut out = Vec::new();
    if a - 1 >= 1 {
        out.push((a - 1, d1));
    }
    if a < rank.alphabet_size() {
        out.push((a, d2));
    }
    out
}

/// Adjacent single-box functions z(d), z(d+1) share a simple pole tied to
/// each root of color d; under the equations their residues cancel, with a
/// relative minus across the boundary pair d = r+1. Each root yields one
/// record comparing the pair residue against the larger single residue.
pub fn pair_residue_checks(
    ctx: &Arc<EvalContext>,
    opts: &PoleScanOptions,
) -> Result<VerificationReport, BaeError> {
    let rank = ctx.rank();
    let mut report = VerificationReport::new("pairwise residue cancellation", 0);

    let mut masters = Vec::new();
    for letter in 1..=rank.alphabet_size() {
        for (color, base) in z_box_denominators(letter, rank) {
            for &root in ctx.state.roots(color) {
                masters.push(root - Complex64::new(base as f64, 0.0));
            }
        }
    }
    masters.extend(psi_singularities(ctx));
    let masters = with_period_images(masters, ctx.q());

    for d in 1..=rank.colors() {
        let pair_sign = if d == rank.r + 1 { -1.0 } else { 1.0 };
        let offset: i64 = if d <= rank.r + 1 { d as i64 } else { 2 * rank.r as i64 + 2 - d as i64 };
        for (k, &root) in ctx.state.roots(d).iter().enumerate() {
            let at = root - Complex64::new(offset as f64, 0.0);
            let (radius, floored) = contour_radius(&masters, at, opts);
            let name = format!("pair z({d})+z({}) at root {} of color {d}", d + 1, k + 1);
            let pair = |z: Complex64| {
                Ok(z_box(d, z, ctx)? + Complex64::new(pair_sign, 0.0) * z_box(d + 1, z, ctx)?)
            };
            let outcome = contour_residue_scaled(pair, at, radius, opts.samples).and_then(
                |(res_pair, _)| {
                    let (res_lo, _) =
                        contour_residue_scaled(|z| z_box(d, z, ctx), at, radius, opts.samples)?;
                    let (res_hi, _) =
                        contour_residue_scaled(|z| z_box(d + 1, z, ctx), at, radius, opts.samples)?;
                    Ok((res_pair, res_lo.norm().max(res_hi.norm())))
                },
            );
            let record = match outcome {
                Ok((res_pair, single)) => {
                    let rel = res_pair.norm() / single.max(f64::MIN_POSITIVE);
                    let mut rec = CheckRecord::new(name, opts.residue_tol, rel < opts.residue_tol)
                        .with_location(at)
                        .with_residue(rel)
                        .with_samples(opts.samples);
                    if floored {
                        rec = rec.with_note("radius floor engaged");
                    }
                    rec
                }
                Err(err) => CheckRecord::new(name, opts.residue_tol, false)
                    .with_location(at)
                    .with_note(format!("contour evaluation failed: {err}")),
            };
            report.push(record);
        }
    }
    Ok(report)
}

/// Points where the numerator of a straight-shape sum must vanish when the
/// state satisfies the equations: one per root of the boundary color, at
/// u = root + mu_1. Meaningful when the shape reaches below row r+1
/// (mu_{r+1} >= s+1), which forces the vanishing factor into every term.
pub fn divisibility_points(mu1: i64, ctx: &EvalContext) -> Vec<(String, Complex64)> {
    let color = ctx.rank().r + 1;
    ctx.state
        .roots(color)
        .iter()
        .enumerate()
        .map(|(k, &root)| {
            (
                format!("numerator zero above root {} of color {color}", k + 1),
                root + Complex64::new(mu1 as f64, 0.0),
            )
        })
        .collect()
}

/// Relative vanishing of `f` at prescribed points: |f(point)| measured
/// against max |f| on a circle of a quarter of the nearest-singularity
/// distance. Pass iff the ratio stays below the residue tolerance.
pub fn vanishing_checks(
    f: &EigenFunction,
    points: &[(String, Complex64)],
    opts: &PoleScanOptions,
) -> Result<VerificationReport, BaeError> {
    let ctx = f.context();
    let mut masters: Vec<Complex64> =
        q_pole_candidates(f).into_iter().map(|(_, at)| at).collect();
    masters.extend(psi_pole_points(f));
    let masters = with_period_images(masters, ctx.q());
    let mut report = VerificationReport::new(format!("vanishing of {}", f.label), 0);
    for (name, at) in points {
        let radius = (0.25 * nearest_other(&masters, *at)).max(opts.radius_floor);
        let outcome = f.eval(*at).and_then(|value| {
            contour_residue_scaled(|z| f.eval(z), *at, radius, opts.samples)
                .map(|(_, fmax)| (value, fmax))
        });
        let record = match outcome {
            Ok((value, fmax)) => {
                let rel = value.norm() / fmax.max(f64::MIN_POSITIVE);
                CheckRecord::new(name.clone(), opts.residue_tol, rel < opts.residue_tol)
                    .with_location(*at)
                    .with_max_rel_err(rel)
                    .with_samples(opts.samples)
            }
            Err(err) => CheckRecord::new(name.clone(), opts.residue_tol, false)
                .with_location(*at)
                .with_note(format!("evaluation failed: {err}")),
        };
        report.push(record);
    }
    Ok(report)
}

/// Box data of the alternate grading: one fermionic letter, two bosonic.
///
/// ```text
/// box 1: -psi_1(u) Q_1(u+1) / Q_1(u-1)             (psi_1 = 1)
/// box 2:  psi_2(u) Q_1(u+1) Q_2(u-2) / (Q_1(u-1) Q_2(u))
/// box 3:  psi_3(u) Q_2(u+2) / Q_2(u)
/// ```
pub fn appendix_a_box_table() -> BoxTable {
    BoxTable::from_entries(vec![
        BoxEntry { sign: -1.0, psi_letter: None, qnum: vec![(1, 1)], qden: vec![(1, -1)] },
        BoxEntry {
            sign: 1.0,
            psi_letter: Some(2),
            qnum: vec![(1, 1), (2, -2)],
            qden: vec![(1, -1), (2, 0)],
        },
        BoxEntry { sign: 1.0, psi_letter: Some(3), qnum: vec![(2, 2)], qden: vec![(2, 0)] },
    ])
}

/// The alternate-grading example in one piece: its equation system and the
/// single-box eigenvalue sum -box1 + box2 + box3, sharing one context.
pub fn appendix_a_fixture(
    config: &ModelConfig,
    state: &BetheState,
) -> Result<(BaeSystem, EigenFunction), BaeError> {
    let sys = BaeSystem::appendix_a(config)?;
    let ctx = Arc::new(sys.context(state.clone())?);
    let shape = SkewShape::straight(Partition::new(vec![1]).expect("one box"));
    let sum = tableau_terms(&shape, config.rank, &appendix_a_box_table(), Alphabet::Full);
    Ok((
        sys,
        EigenFunction::from_sum(
            sum,
            ctx,
            Complex64::new(0.0, 0.0),
            "T^1_1 (alternate grading)".to_string(),
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{contour_residue, q_function};
    use crate::dvf::{h_restricted, t_tableau_sum, BuildOptions};
    use crate::fixtures::appendix_a_t11_reference;
    use crate::model::{kac_dynkin_from_diagram, sample_generic_q};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel_err(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1.0)
    }

    /// Principal solution of q^{2u} = -1, which satisfies the one-root
    /// odd-color equation -[u+b]/[u-b] = -1 for any label b.
    fn odd_color_root(q: Complex64) -> Complex64 {
        c(0.0, PI / 2.0) / q.ln()
    }

    fn single_site_system(seed: u64) -> (BaeSystem, Complex64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_generic_q(&mut rng);
        let config = ModelConfig::new_unchecked(
            Rank::new(1, 0),
            q,
            vec![Site { w: c(0.0, 0.0), b: c(0.41, 0.13) }],
        );
        (BaeSystem::distinguished(&config), q)
    }

    #[test]
    fn gram_matrices_match_hand_values() {
        let config =
            ModelConfig::new_unchecked(Rank::new(1, 1), c(1.3, 0.4), Vec::new());
        let sys = BaeSystem::distinguished(&config);
        assert_eq!(sys.gram, vec![vec![2.0, -1.0, 0.0], vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, -2.0]]);
        assert_eq!(sys.deg, vec![0, 1, 0]);
        assert_eq!(sys.t, vec![1.0, 1.0, -1.0]);

        let config = ModelConfig::new_unchecked(Rank::new(1, 0), c(1.3, 0.4), Vec::new());
        let alt = BaeSystem::appendix_a(&config).unwrap();
        assert_eq!(alt.gram, vec![vec![0.0, -1.0], vec![-1.0, 2.0]]);
        assert_eq!(alt.deg, vec![1, 0]);
        assert_eq!(alt.t, vec![-1.0, 1.0]);

        let config = ModelConfig::new_unchecked(Rank::new(0, 1), c(1.3, 0.4), Vec::new());
        assert!(matches!(
            BaeSystem::appendix_a(&config),
            Err(BaeError::FixtureRank { r: 0, s: 1 })
        ));
    }

    #[test]
    fn closed_form_root_satisfies_single_site_system() {
        for seed in [3, 11, 42] {
            let (sys, q) = single_site_system(seed);
            let root = odd_color_root(q);
            // Direct oracle: the difference of brackets factors through
            // q^u + q^{-u}, which vanishes exactly at this point.
            let b = c(0.41, 0.13);
            let direct = bracket(root + b, q) - bracket(root - b, q);
            assert!(direct.norm() < 1e-12, "bracket identity broke: {}", direct.norm());

            let state = BetheState::new(vec![vec![], vec![root]]).unwrap();
            let res = bae_residual(&sys, &state).unwrap();
            assert_eq!(res.len(), 1);
            assert!(res[0].norm() < 1e-14, "residual {} too large", res[0].norm());
        }
    }

    #[test]
    fn perturbed_root_raises_residual() {
        let (sys, q) = single_site_system(5);
        let root = odd_color_root(q) + c(1e-3, 0.0);
        let state = BetheState::new(vec![vec![], vec![root]]).unwrap();
        let res = bae_residual(&sys, &state).unwrap();
        assert!(res[0].norm() > 1e-5, "perturbed residual {} too small", res[0].norm());
    }

    #[test]
    fn residual_rejects_color_mismatch() {
        let (sys, _) = single_site_system(5);
        let state = BetheState::new(vec![vec![]]).unwrap();
        assert!(matches!(
            bae_residual(&sys, &state),
            Err(BaeError::ColorMismatch { got: 1, want: 2 })
        ));
    }

    #[test]
    fn newton_converges_to_closed_form_root() {
        let (sys, q) = single_site_system(9);
        let seed = BetheState::new(vec![vec![], vec![c(0.1, 0.1)]]).unwrap();
        let solved = solve_newton(&sys, &seed, 200, 1e-12).unwrap();
        let res = bae_residual(&sys, &solved).unwrap();
        assert!(res[0].norm() < 1e-12);
        // The solution set is periodic; accept any image of the principal
        // closed-form root.
        let period = c(0.0, PI) / q.ln();
        let ratio = (solved.roots(2)[0] - odd_color_root(q)) / period;
        let nearest = ratio.re.round();
        assert!(
            (ratio - c(nearest, 0.0)).norm() < 1e-9,
            "converged to {} which is not an image of the closed-form root",
            solved.roots(2)[0]
        );
    }

    #[test]
    fn newton_returns_empty_seed_unchanged() {
        let (sys, _) = single_site_system(2);
        let seed = BetheState::vacuum(2);
        let solved = solve_newton(&sys, &seed, 10, 1e-12).unwrap();
        assert_eq!(solved.counts(), vec![0, 0]);
    }

    fn two_site_config(seed: u64) -> ModelConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_generic_q(&mut rng);
        ModelConfig::new_unchecked(
            Rank::new(1, 0),
            q,
            vec![
                Site { w: c(0.3, -0.2), b: c(0.9, 0.1) },
                Site { w: c(-0.4, 0.1), b: c(1.2, -0.3) },
            ],
        )
    }

    #[test]
    fn multi_start_finds_two_site_solution() {
        let sys = BaeSystem::distinguished(&two_site_config(17));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = multi_start(&sys, &[1, 1], 64, 80, 1e-12, &mut rng);
        assert!(!states.is_empty(), "no solution found from 64 starts");
        for state in &states {
            let res = bae_residual(&sys, state).unwrap();
            let max = res.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
            assert!(max < 1e-12, "reported solution has residual {max}");
        }
    }

    #[test]
    fn newton_output_ignores_seed_permutation() {
        let sys = BaeSystem::distinguished(&two_site_config(23));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = multi_start(&sys, &[2, 1], 64, 80, 1e-12, &mut rng);
        assert!(!states.is_empty(), "no (2,1) solution found from 64 starts");
        let target = &states[0];
        let (a, b) = (target.roots(1)[0], target.roots(1)[1]);
        let y = target.roots(2)[0];
        let (da, db, dy) = (c(0.013, -0.007), c(-0.011, 0.009), c(0.0, 0.008));
        let seed_ab =
            BetheState::new(vec![vec![a + da, b + db], vec![y + dy]]).unwrap();
        let seed_ba =
            BetheState::new(vec![vec![b + db, a + da], vec![y + dy]]).unwrap();
        let out_ab = solve_newton(&sys, &seed_ab, 120, 1e-12).unwrap();
        let out_ba = solve_newton(&sys, &seed_ba, 120, 1e-12).unwrap();
        for color in 1..=2 {
            for (x, y) in out_ab.roots(color).iter().zip(out_ba.roots(color)) {
                assert!((x - y).norm() < 1e-10, "permuted seeds diverged: {x} vs {y}");
            }
        }
    }

    #[test]
    fn box_residue_matches_closed_form() {
        // One color-1 root, no sites: z(1; u) = [u-1-rho]/[u+1-rho] has a
        // simple pole at rho - 1 with residue [-2] (q - 1/q) / (2 ln q).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q = sample_generic_q(&mut rng);
        let rho = c(0.37, -0.21);
        let config = ModelConfig::new_unchecked(Rank::new(1, 0), q, Vec::new());
        let state = BetheState::new(vec![vec![rho], vec![]]).unwrap();
        let ctx = EvalContext::new(config, state).unwrap();
        let got = contour_residue(|z| z_box(1, z, &ctx), rho - c(1.0, 0.0), 1e-3, 64).unwrap();
        let want = bracket(c(-2.0, 0.0), q) * (q - q.inv()) / (2.0 * q.ln());
        assert!(rel_err(got, want) < 1e-10, "residue {got} vs closed form {want}");
    }

    #[test]
    fn pair_cancellation_holds_at_solved_state_only() {
        let (sys, q) = single_site_system(13);
        let root = odd_color_root(q);
        let state = BetheState::new(vec![vec![], vec![root]]).unwrap();
        let ctx = Arc::new(sys.context(state).unwrap());
        let opts = PoleScanOptions::default();
        let report = pair_residue_checks(&ctx, &opts).unwrap();
        assert_eq!(report.summary.total, 1);
        assert!(report.overall_pass(), "pair residue failed:\n{}", report.render_text());

        // The cancellation defect is first order in the root error, with a
        // system-dependent constant; a 1e-3 perturbation lands near 3e-4.
        let perturbed = ctx.state.perturbed(c(1e-3, 0.0));
        let ctx2 = Arc::new(sys.context(perturbed).unwrap());
        let report2 = pair_residue_checks(&ctx2, &opts).unwrap();
        let worst = report2.max_residue().unwrap();
        assert!(worst >= 1e-4, "perturbed pair residue only {worst}");
    }

    fn partitions_up_to(cells: usize) -> Vec<Vec<usize>> {
        fn extend(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest == 0 {
                out.push(cur.clone());
                return;
            }
            for next in (1..=rest.min(max)).rev() {
                cur.push(next);
                extend(rest - next, next, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        for total in 1..=cells {
            extend(total, total, &mut Vec::new(), &mut out);
        }
        out
    }

    #[test]
    fn polynomial_degrees_and_ratio_match_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let w = c(0.23, -0.11);
        for rank in [Rank::new(1, 0), Rank::new(0, 1), Rank::new(1, 1)] {
            for rows in partitions_up_to(6) {
                let mu = Partition::new(rows.clone()).unwrap();
                let Ok(label) = kac_dynkin_from_diagram(rank, &mu) else {
                    assert!(DrinfeldData::from_diagram(rank, &mu, w).is_err());
                    continue;
                };
                let data = DrinfeldData::from_diagram(rank, &mu, w).unwrap();
                for a in 1..=rank.colors() {
                    let deg = data.degree(a);
                    assert_eq!(
                        deg as f64,
                        label.b[a - 1].re,
                        "degree mismatch at color {a} for rows {rows:?}"
                    );
                    for _ in 0..3 {
                        let u = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                        let got = drinfeld_ratio(a, u, &data);
                        let want = if deg == 0 {
                            c(1.0, 0.0)
                        } else {
                            // Roots step by two, so the shifted ratio
                            // telescopes down to one linear factor around
                            // the midpoint of the extremes.
                            let lo = data.roots[a - 1]
                                .iter()
                                .map(|z| z.re)
                                .fold(f64::INFINITY, f64::min);
                            let hi = data.roots[a - 1]
                                .iter()
                                .map(|z| z.re)
                                .fold(f64::NEG_INFINITY, f64::max);
                            let mid = c((lo + hi) / 2.0, w.im);
                            let shift = label.b[a - 1] / data.t[a - 1];
                            (u + shift - mid) / (u - shift - mid)
                        };
                        assert!(
                            rel_err(got, want) < 1e-10,
                            "ratio mismatch at color {a} for rows {rows:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn alternate_grading_polynomials_telescope() {
        let w = c(0.4, 0.7);
        let single = DrinfeldData::appendix_a_single_box(w);
        assert_eq!(single.degree(1), 1);
        assert_eq!(single.degree(2), 0);
        assert!((single.eval(1, w)).norm() < 1e-15);

        for b in 1..=4 {
            let data = DrinfeldData::appendix_a_two_row(b, w);
            assert_eq!(data.degree(1), b + 1);
            assert_eq!(data.degree(2), 0);
            let u = c(1.7, -0.6);
            let got = drinfeld_ratio(1, u, &data);
            let bb = c((b + 1) as f64, 0.0);
            let want = (u - bb - w) / (u + bb - w);
            assert!(rel_err(got, want) < 1e-12);
            assert!((drinfeld_ratio(2, u, &data) - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn vacuum_state_scan_passes_trivially() {
        let config = two_site_config(41);
        let sys = BaeSystem::distinguished(&config);
        let ctx = Arc::new(sys.context(BetheState::vacuum(2)).unwrap());
        let shape = SkewShape::straight(Partition::new(vec![2]).unwrap());
        let f = t_tableau_sum(&shape, &ctx, &BuildOptions::default()).unwrap();
        let report = pole_scan(&f, &sys, &PoleScanOptions::default()).unwrap();
        assert!(report.overall_pass());
        // Only the equation-residual record is present; no roots, no poles.
        assert_eq!(report.summary.total, 1);
    }

    #[test]
    fn alternate_grading_fixture_matches_reference_and_passes_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let q = sample_generic_q(&mut rng);
        let config = ModelConfig::new_unchecked(
            Rank::new(1, 0),
            q,
            vec![
                Site { w: c(0.2, -0.1), b: c(1.3, 0.2) },
                Site { w: c(-0.3, 0.25), b: c(0.0, 0.0) },
            ],
        );
        let sys = BaeSystem::appendix_a(&config).unwrap();
        let mut seeds = ChaCha8Rng::seed_from_u64(4);
        let states = multi_start(&sys, &[1, 1], 64, 80, 1e-12, &mut seeds);
        assert!(!states.is_empty(), "no alternate-grading solution found");
        let (sys, f) = appendix_a_fixture(&config, &states[0]).unwrap();

        for _ in 0..20 {
            let u = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (got, want) = match (f.eval(u), appendix_a_t11_reference(u, f.context())) {
                (Ok(got), Ok(want)) => (got, want),
                _ => continue,
            };
            assert!(rel_err(got, want) < 1e-10, "fixture sum disagrees at {u}");
        }

        let opts = PoleScanOptions::default();
        let report = pole_scan(&f, &sys, &opts).unwrap();
        assert!(report.overall_pass(), "scan failed:\n{}", report.render_text());

        let wrong = f.context().state.perturbed(c(1e-3, 0.0));
        let (_, bad) = appendix_a_fixture(&config, &wrong).unwrap();
        let report = pole_scan(&bad, &sys, &opts).unwrap();
        assert!(!report.overall_pass());
        assert!(report.max_residue().unwrap() >= 1e-3, "negative control too quiet");
    }

    #[test]
    fn straight_shape_vanishes_at_divisibility_points() {
        let (sys, q) = single_site_system(29);
        let root = odd_color_root(q);
        let state = BetheState::new(vec![vec![], vec![root]]).unwrap();
        let ctx = Arc::new(sys.context(state).unwrap());
        let shape = SkewShape::straight(Partition::new(vec![1, 1]).unwrap());
        let f = t_tableau_sum(&shape, &ctx, &BuildOptions::default()).unwrap();
        let points = divisibility_points(1, &ctx);
        assert_eq!(points.len(), 1);
        let report = vanishing_checks(&f, &points, &PoleScanOptions::default()).unwrap();
        assert!(report.overall_pass(), "vanishing failed:\n{}", report.render_text());
    }

    #[test]
    fn cleared_block_with_clearing_factor_is_pole_free() {
        // Rank (0,1): the restricted block H_nu keeps one uncancelled
        // denominator of the boundary color; multiplying by
        // Q_1(u - nu_1 + nu'_1 + 2) clears it, and the remaining color-2
        // poles cancel pairwise once the equations hold. Two sites: with a
        // single site every solution puts the color-2 root on the site
        // lattice w + k*pi*i/ln q, half of them exactly on the site.
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let q = sample_generic_q(&mut rng);
        let config = ModelConfig::new_unchecked(
            Rank::new(0, 1),
            q,
            vec![
                Site { w: c(0.1, 0.05), b: c(0.9, -0.1) },
                Site { w: c(-0.35, 0.2), b: c(1.1, 0.15) },
            ],
        );
        let sys = BaeSystem::distinguished(&config);
        let mut seeds = ChaCha8Rng::seed_from_u64(8);
        let states = multi_start(&sys, &[1, 1], 64, 80, 1e-12, &mut seeds);
        assert!(!states.is_empty(), "no rank (0,1) solution found");

        let run = |state: &BetheState| -> f64 {
            let ctx = Arc::new(sys.context(state.clone()).unwrap());
            let nu = Partition::new(vec![2, 1]).unwrap();
            let h = h_restricted(&nu, &ctx, &BuildOptions::default()).unwrap();
            // nu_1 = 2 and nu'_1 = 2, so the clearing factor is Q_1(u+1).
            let cleared =
                |z: Complex64| Ok(q_function(1, z + c(1.0, 0.0), &ctx)? * h.eval(z)?);
            let opts = PoleScanOptions::default();
            let mut masters: Vec<Complex64> = Vec::new();
            let mut candidates = Vec::new();
            for (color, shift) in h.den_catalog() {
                for &r in ctx.state.roots(color) {
                    let at = r - shift.value(c(0.0, 0.0));
                    masters.push(at);
                    candidates.push(at);
                }
            }
            masters.extend(psi_singularities(&ctx));
            let masters = with_period_images(masters, q);
            let mut worst: f64 = 0.0;
            for at in candidates {
                let (radius, _) = contour_radius(&masters, at, &opts);
                let (res, fmax) =
                    contour_residue_scaled(cleared, at, radius, opts.samples).unwrap();
                worst = worst.max(res.norm() / (radius * fmax).max(f64::MIN_POSITIVE));
            }
            worst
        };

        let solved = run(&states[0]);
        assert!(solved < 1e-8, "cleared block still has a pole: {solved}");
        // The surviving cancellation depends only on root differences, so a
        // rigid shift of the whole state would not break it; move one root.
        let mut roots = states[0].all_roots().to_vec();
        roots[1][0] += c(1e-3, 0.0);
        let broken = run(&BetheState::new(roots).unwrap());
        assert!(broken >= 1e-4, "negative control too quiet: {broken}");
    }
}
