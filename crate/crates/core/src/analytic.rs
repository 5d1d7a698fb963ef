//! Numerical layer: the q-bracket, Bethe-root Q-functions, vacuum parts,
//! single-box functions, and contour residues.
//!
//! All evaluation goes through an immutable [`EvalContext`] (model data plus
//! one set of Bethe roots). Evaluating exactly on a zero of a denominator is
//! reported as a pole-proximity condition instead of returning a number;
//! "exactly" means the denominator is below 1e-13 relative to its natural
//! scale, so the guard survives rounding noise.

use rustc_hash::FxHashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::Rng;
use serde_json::json;
use thiserror::Error;

use crate::dd::{self, DdComplex};
use crate::model::{ModelConfig, Rank, Site};

#[derive(Debug, Error, Clone)]
pub enum EvalError {
    #[error("evaluation point {at} sits on (or too close to) a pole")]
    PoleProximity { at: Complex64 },
    #[error("color {color} out of range 0..={max}")]
    ColorOutOfRange { color: usize, max: usize },
    #[error("letter {letter} outside the alphabet 1..={max}")]
    LetterOutOfRange { letter: usize, max: usize },
    #[error("two roots of color {color} coincide within {tol}")]
    RootCollision { color: usize, tol: f64 },
    #[error("root table has {got} colors but the rank needs {want}")]
    ColorCountMismatch { got: usize, want: usize },
    #[error("contour quadrature needs at least 16 samples, got {0}")]
    TooFewSamples(usize),
    #[error("contour sample at {at} was not finite")]
    ContourFailure { at: Complex64 },
    #[error("bad root table: {0}")]
    BadRootTable(String),
}

/// The q-bracket [u] = (q^u - q^{-u}) / (q - q^{-1}), principal branch of q^u.
pub fn bracket(u: Complex64, q: Complex64) -> Complex64 {
    bracket_scaled(u, q).0
}

/// The bracket together with its magnitude scale
/// (|q^u| + |q^{-u}|) / |q - q^{-1}|, used for pole-proximity detection.
pub fn bracket_scaled(u: Complex64, q: Complex64) -> (Complex64, f64) {
    let log_q = q.ln();
    let e = (u * log_q).exp();
    let denom = q - q.inv();
    ((e - e.inv()) / denom, (e.norm() + e.inv().norm()) / denom.norm())
}

/// One set of Bethe roots, one list per color 1..=r+s+1.
#[derive(Debug, Clone, PartialEq)]
pub struct BetheState {
    roots: Vec<Vec<Complex64>>,
}

pub const ROOT_DISTINCT_TOL: f64 = 1e-9;

impl BetheState {
    /// Validates pairwise distinctness of roots within each color.
    pub fn new(roots: Vec<Vec<Complex64>>) -> Result<Self, EvalError> {
        Self::with_tolerance(roots, ROOT_DISTINCT_TOL)
    }

    pub fn with_tolerance(roots: Vec<Vec<Complex64>>, tol: f64) -> Result<Self, EvalError> {
        for (c, list) in roots.iter().enumerate() {
            for i in 0..list.len() {
                for j in i + 1..list.len() {
                    if (list[i] - list[j]).norm() < tol {
                        return Err(EvalError::RootCollision { color: c + 1, tol });
                    }
                }
            }
        }
        Ok(BetheState { roots })
    }

    /// The empty (vacuum) state.
    pub fn vacuum(colors: usize) -> Self {
        BetheState { roots: vec![Vec::new(); colors] }
    }

    pub fn colors(&self) -> usize {
        self.roots.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.roots.iter().map(|l| l.len()).collect()
    }

    /// Roots of a 1-based color.
    pub fn roots(&self, color: usize) -> &[Complex64] {
        &self.roots[color - 1]
    }

    pub fn all_roots(&self) -> &[Vec<Complex64>] {
        &self.roots
    }

    /// Same roots, each displaced by `delta` (for negative controls; skips
    /// the distinctness check since the displacement is rigid).
    pub fn perturbed(&self, delta: Complex64) -> BetheState {
        BetheState {
            roots: self
                .roots
                .iter()
                .map(|l| l.iter().map(|u| u + delta).collect())
                .collect(),
        }
    }

    /// Canonical ordering: roots sorted by (re, im) within each color.
    pub fn sorted(&self) -> BetheState {
        let mut roots = self.roots.clone();
        for list in roots.iter_mut() {
            list.sort_by(|a, b| {
                (a.re, a.im)
                    .partial_cmp(&(b.re, b.im))
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        BetheState { roots }
    }

    /// Wire format: {"roots": {"1": [{re, im}, ...], ...}}.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (c, list) in self.roots.iter().enumerate() {
            map.insert(
                (c + 1).to_string(),
                json!(list.iter().map(|z| json!({"re": z.re, "im": z.im})).collect::<Vec<_>>()),
            );
        }
        json!({ "roots": map })
    }

    pub fn from_json(value: &serde_json::Value, colors: usize) -> Result<Self, EvalError> {
        let table = value
            .get("roots")
            .and_then(|v| v.as_object())
            .ok_or_else(|| EvalError::BadRootTable("missing \"roots\" object".into()))?;
        let mut roots = vec![Vec::new(); colors];
        for (key, list) in table {
            let color: usize = key
                .parse()
                .map_err(|_| EvalError::BadRootTable(format!("bad color key {key:?}")))?;
            if color < 1 || color > colors {
                return Err(EvalError::ColorOutOfRange { color, max: colors });
            }
            let entries = list
                .as_array()
                .ok_or_else(|| EvalError::BadRootTable(format!("color {key} is not a list")))?;
            for z in entries {
                let re = z.get("re").and_then(|v| v.as_f64());
                let im = z.get("im").and_then(|v| v.as_f64());
                match (re, im) {
                    (Some(re), Some(im)) => roots[color - 1].push(Complex64::new(re, im)),
                    _ => {
                        return Err(EvalError::BadRootTable(format!(
                            "color {key}: entries must be {{re, im}} objects"
                        )))
                    }
                }
            }
        }
        BetheState::new(roots)
    }
}

/// Vacuum-part hook: which psi_a the boxes carry.
#[derive(Clone)]
pub enum Vacuum {
    /// The built-in restricted quantum space (labels only on the odd color):
    /// psi_a = 1 on J+, and on J- the ratio
    /// prod_j [u - w_j + r + 1 - b_j] / [u - w_j + r + 1 + b_j].
    Restricted,
    /// The alternate-grading two-color fixture (see `bae::appendix_a`):
    /// psi_1 = 1 and psi_2 = psi_3 =
    /// [u - w_1 + b_1]/[u - 2 - w_1 - b_1] * prod_{j>=2} [u - w_j]/[u - w_j - 2].
    AppendixA,
    /// User-supplied vacuum parts. `singular_points` lists the u-locations of
    /// the hook's denominator zeros so contour radii can avoid them.
    Custom {
        eval: Arc<dyn Fn(usize, Complex64, &ModelConfig) -> Result<Complex64, EvalError> + Send + Sync>,
        singular_points: Vec<Complex64>,
    },
}

impl fmt::Debug for Vacuum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vacuum::Restricted => write!(f, "Vacuum::Restricted"),
            Vacuum::AppendixA => write!(f, "Vacuum::AppendixA"),
            Vacuum::Custom { singular_points, .. } => {
                write!(f, "Vacuum::Custom({} singular points)", singular_points.len())
            }
        }
    }
}

/// Numerical guard knobs.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// A denominator below `pole * scale` counts as sitting on a pole.
    pub pole: f64,
    /// Distinctness tolerance for roots within one color.
    pub root_distinct: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pole: 1e-13, root_distinct: ROOT_DISTINCT_TOL }
    }
}

/// Identity of a memoizable determinant entry plus the bit patterns of the
/// evaluation point and the deformation parameter.
pub(crate) type EntryMemoKey = (u8, i64, i64, u64, u64, u64, u64);

/// Value memo for determinant entries that are shifted copies of shared
/// one-row / one-column sums. Many grids over the same context repeat the
/// same few hundred entries, so caching their values collapses the cost of
/// a shape sweep. Only filled through evaluations of a frozen (`Arc`-held)
/// context; cloning a context resets the memo so mutated copies start cold.
#[derive(Debug, Default)]
pub(crate) struct EntryMemo {
    floats: Mutex<FxHashMap<EntryMemoKey, Complex64>>,
    doubles: Mutex<FxHashMap<EntryMemoKey, DdComplex>>,
}

impl EntryMemo {
    pub(crate) fn get_f64(&self, key: &EntryMemoKey) -> Option<Complex64> {
        self.floats.lock().unwrap().get(key).copied()
    }

    pub(crate) fn put_f64(&self, key: EntryMemoKey, value: Complex64) {
        self.floats.lock().unwrap().insert(key, value);
    }

    pub(crate) fn get_dd(&self, key: &EntryMemoKey) -> Option<DdComplex> {
        self.doubles.lock().unwrap().get(key).copied()
    }

    pub(crate) fn put_dd(&self, key: EntryMemoKey, value: DdComplex) {
        self.doubles.lock().unwrap().insert(key, value);
    }
}

/// Immutable evaluation context: model data plus one root set.
#[derive(Debug)]
pub struct EvalContext {
    pub config: ModelConfig,
    pub state: BetheState,
    pub vacuum: Vacuum,
    pub tol: Tolerances,
    pub(crate) memo: EntryMemo,
}

impl Clone for EvalContext {
    fn clone(&self) -> Self {
        EvalContext {
            config: self.config.clone(),
            state: self.state.clone(),
            vacuum: self.vacuum.clone(),
            tol: self.tol,
            memo: EntryMemo::default(),
        }
    }
}

impl EvalContext {
    pub fn new(config: ModelConfig, state: BetheState) -> Result<Self, EvalError> {
        let want = config.rank.colors();
        if state.colors() != want {
            return Err(EvalError::ColorCountMismatch { got: state.colors(), want });
        }
        Ok(EvalContext {
            config,
            state,
            vacuum: Vacuum::Restricted,
            tol: Tolerances::default(),
            memo: EntryMemo::default(),
        })
    }

    pub fn with_vacuum(mut self, vacuum: Vacuum) -> Self {
        self.vacuum = vacuum;
        self.memo = EntryMemo::default();
        self
    }

    pub fn rank(&self) -> Rank {
        self.config.rank
    }

    pub fn q(&self) -> Complex64 {
        self.config.q
    }

    pub(crate) fn guard_pole(
        &self,
        value: Complex64,
        scale: f64,
        at: Complex64,
    ) -> Result<(), EvalError> {
        if value.norm() < self.tol.pole * scale.max(f64::MIN_POSITIVE) {
            return Err(EvalError::PoleProximity { at });
        }
        Ok(())
    }
}

/// Q_a(u) = prod_k [u - u_k^{(a)}]; Q_0 and Q_{r+s+2} are identically 1.
pub fn q_function(a: usize, u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    q_function_scaled(a, u, ctx).map(|(v, _)| v)
}

/// Q_a together with the product of the per-factor magnitude scales.
pub fn q_function_scaled(
    a: usize,
    u: Complex64,
    ctx: &EvalContext,
) -> Result<(Complex64, f64), EvalError> {
    let max = ctx.rank().alphabet_size();
    if a > max {
        return Err(EvalError::ColorOutOfRange { color: a, max });
    }
    if a == 0 || a == max {
        return Ok((Complex64::new(1.0, 0.0), 1.0));
    }
    let mut value = Complex64::new(1.0, 0.0);
    let mut scale = 1.0;
    for &root in ctx.state.roots(a) {
        let (b, s) = bracket_scaled(u - root, ctx.q());
        value *= b;
        scale *= s;
    }
    Ok((value, scale))
}

/// phi(u) = prod_j [u - w_j] over the inhomogeneity sites.
pub fn phi(u: Complex64, ctx: &EvalContext) -> Complex64 {
    ctx.config
        .sites
        .iter()
        .map(|site| bracket(u - site.w, ctx.q()))
        .product()
}

fn restricted_psi(
    letter: usize,
    u: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    let rank = ctx.rank();
    if letter < 1 || letter > rank.alphabet_size() {
        return Err(EvalError::LetterOutOfRange { letter, max: rank.alphabet_size() });
    }
    if rank.is_plus(letter) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let shift = (rank.r + 1) as f64;
    let mut value = Complex64::new(1.0, 0.0);
    for Site { w, b } in &ctx.config.sites {
        let (num, _) = bracket_scaled(u - w + shift - b, ctx.q());
        let (den, dscale) = bracket_scaled(u - w + shift + b, ctx.q());
        ctx.guard_pole(den, dscale, u)?;
        value *= num / den;
    }
    Ok(value)
}

fn appendix_a_psi(
    letter: usize,
    u: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    if letter < 1 || letter > 3 {
        return Err(EvalError::LetterOutOfRange { letter, max: 3 });
    }
    if letter == 1 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let two = Complex64::new(2.0, 0.0);
    let mut value = Complex64::new(1.0, 0.0);
    for (j, Site { w, b }) in ctx.config.sites.iter().enumerate() {
        let (num, den, dscale) = if j == 0 {
            let (num, _) = bracket_scaled(u - w + b, ctx.q());
            let (den, ds) = bracket_scaled(u - two - w - b, ctx.q());
            (num, den, ds)
        } else {
            let (num, _) = bracket_scaled(u - w, ctx.q());
            let (den, ds) = bracket_scaled(u - w - two, ctx.q());
            (num, den, ds)
        };
        ctx.guard_pole(den, dscale, u)?;
        value *= num / den;
    }
    Ok(value)
}

/// Vacuum part psi_a(u) under the context's vacuum hook.
pub fn psi(letter: usize, u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    match &ctx.vacuum {
        Vacuum::Restricted => restricted_psi(letter, u, ctx),
        Vacuum::AppendixA => appendix_a_psi(letter, u, ctx),
        Vacuum::Custom { eval, .. } => eval(letter, u, &ctx.config),
    }
}

/// u-locations where psi_a itself has poles (used to keep contours away).
pub fn psi_singularities(ctx: &EvalContext) -> Vec<Complex64> {
    let rank = ctx.rank();
    match &ctx.vacuum {
        Vacuum::Restricted => {
            let shift = Complex64::new((rank.r + 1) as f64, 0.0);
            ctx.config.sites.iter().map(|s| s.w - shift - s.b).collect()
        }
        Vacuum::AppendixA => {
            let two = Complex64::new(2.0, 0.0);
            ctx.config
                .sites
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { s.w + s.b + two } else { s.w + two })
                .collect()
        }
        Vacuum::Custom { singular_points, .. } => singular_points.clone(),
    }
}

/// The single-box function z(a; u) in the distinguished grading:
/// for a in J+,  psi_a(u) Q_{a-1}(u+a+1) Q_a(u+a-2) / (Q_{a-1}(u+a-1) Q_a(u+a));
/// for a in J-,  psi_a(u) Q_{a-1}(u+2r-a+1) Q_a(u+2r-a+4)
///                        / (Q_{a-1}(u+2r-a+3) Q_a(u+2r-a+2)).
pub fn z_box(a: usize, u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    let rank = ctx.rank();
    if a < 1 || a > rank.alphabet_size() {
        return Err(EvalError::LetterOutOfRange { letter: a, max: rank.alphabet_size() });
    }
    let af = a as f64;
    let rf = rank.r as f64;
    let (n1, n2, d1, d2) = if rank.is_plus(a) {
        (af + 1.0, af - 2.0, af - 1.0, af)
    } else {
        (2.0 * rf - af + 1.0, 2.0 * rf - af + 4.0, 2.0 * rf - af + 3.0, 2.0 * rf - af + 2.0)
    };
    let off = |x: f64| u + Complex64::new(x, 0.0);
    let (num1, _) = q_function_scaled(a - 1, off(n1), ctx)?;
    let (num2, _) = q_function_scaled(a, off(n2), ctx)?;
    let (den1, s1) = q_function_scaled(a - 1, off(d1), ctx)?;
    let (den2, s2) = q_function_scaled(a, off(d2), ctx)?;
    ctx.guard_pole(den1, s1, u)?;
    ctx.guard_pole(den2, s2, u)?;
    let vac = psi(a, u, ctx)?;
    Ok(vac * (num1 / den1) * (num2 / den2))
}

/// Trapezoidal contour residue (1/2 pi i) * integral of f around a circle.
/// Exponentially accurate for meromorphic f; needs `samples` >= 16.
pub fn contour_residue<F>(
    f: F,
    center: Complex64,
    radius: f64,
    samples: usize,
) -> Result<Complex64, EvalError>
where
    F: Fn(Complex64) -> Result<Complex64, EvalError>,
{
    contour_residue_scaled(f, center, radius, samples).map(|(res, _)| res)
}

/// Residue plus the maximum sampled |f| on the contour (the natural scale
/// for deciding whether the residue is "zero").
pub fn contour_residue_scaled<F>(
    f: F,
    center: Complex64,
    radius: f64,
    samples: usize,
) -> Result<(Complex64, f64), EvalError>
where
    F: Fn(Complex64) -> Result<Complex64, EvalError>,
{
    if samples < 16 {
        return Err(EvalError::TooFewSamples(samples));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut max_mag: f64 = 0.0;
    for k in 0..samples {
        let theta = std::f64::consts::TAU * k as f64 / samples as f64;
        let dir = Complex64::from_polar(1.0, theta);
        let z = center + dir * radius;
        let value = f(z)?;
        if !value.is_finite() {
            return Err(EvalError::ContourFailure { at: z });
        }
        acc += value * dir;
        max_mag = max_mag.max(value.norm());
    }
    Ok((acc * radius / samples as f64, max_mag))
}

/// Uniform sample from the square [-1,1] x [-1,1] in the complex plane.
pub fn sample_unit_box<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random root set with up to `max_roots` roots per color.
pub fn sample_state<R: Rng>(colors: usize, max_roots: usize, rng: &mut R) -> BetheState {
    loop {
        let roots = (0..colors)
            .map(|_| {
                let n = rng.gen_range(0..=max_roots);
                (0..n).map(|_| sample_unit_box(rng)).collect()
            })
            .collect();
        if let Ok(state) = BetheState::new(roots) {
            return state;
        }
    }
}

/// Random full context (q, sites, roots) for identity checks.
pub fn sample_context<R: Rng>(
    rank: Rank,
    max_sites: usize,
    max_roots: usize,
    rng: &mut R,
) -> EvalContext {
    let q = crate::model::sample_generic_q(rng);
    let n_sites = rng.gen_range(0..=max_sites);
    let sites = (0..n_sites)
        .map(|_| Site { w: sample_unit_box(rng), b: sample_unit_box(rng) })
        .collect();
    let config = ModelConfig::new_unchecked(rank, q, sites);
    let state = sample_state(rank.colors(), max_roots, rng);
    EvalContext::new(config, state).expect("sampled state matches rank")
}

/// Per-point cache of Q_a and psi_a values at fixed integer-plus-parameter
/// shifts, shared by the structured evaluators in `dvf`. Valid for one
/// evaluation point (u, c) only.
#[derive(Default)]
pub(crate) struct QCache {
    q: FxHashMap<(usize, i64, i64), (Complex64, f64)>,
    psi: FxHashMap<(usize, i64, i64), Complex64>,
}

impl QCache {
    pub(crate) fn new() -> Self {
        QCache::default()
    }

    pub(crate) fn q(
        &mut self,
        a: usize,
        u: Complex64,
        base: i64,
        c_coeff: i64,
        c: Complex64,
        ctx: &EvalContext,
    ) -> Result<(Complex64, f64), EvalError> {
        if let Some(&hit) = self.q.get(&(a, base, c_coeff)) {
            return Ok(hit);
        }
        let at = u + Complex64::new(base as f64, 0.0) + c * c_coeff as f64;
        let value = q_function_scaled(a, at, ctx)?;
        self.q.insert((a, base, c_coeff), value);
        Ok(value)
    }

    pub(crate) fn psi(
        &mut self,
        letter: usize,
        u: Complex64,
        base: i64,
        c_coeff: i64,
        c: Complex64,
        ctx: &EvalContext,
    ) -> Result<Complex64, EvalError> {
        // The built-in quantum space dresses only fermionic letters.
        if matches!(ctx.vacuum, Vacuum::Restricted) && ctx.rank().is_plus(letter) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if let Some(&hit) = self.psi.get(&(letter, base, c_coeff)) {
            return Ok(hit);
        }
        let at = u + Complex64::new(base as f64, 0.0) + c * c_coeff as f64;
        let value = psi(letter, at, ctx)?;
        self.psi.insert((letter, base, c_coeff), value);
        Ok(value)
    }
}

/// Double-double twin of [`QCache`] for evaluations that escalate precision
/// after detecting catastrophic cancellation. Carries the per-context
/// constants (ln q and 1/(q - 1/q)) refined to ~31 digits.
pub(crate) struct QCacheDd {
    ln_q: DdComplex,
    inv_denom: DdComplex,
    q: FxHashMap<(usize, i64, i64), (DdComplex, f64)>,
    psi: FxHashMap<(usize, i64, i64), DdComplex>,
}

impl QCacheDd {
    pub(crate) fn new(ctx: &EvalContext) -> Self {
        let q = dd::promote(ctx.q());
        QCacheDd {
            ln_q: dd::ln_refined(ctx.q()),
            inv_denom: (q - q.inv()).inv(),
            q: FxHashMap::default(),
            psi: FxHashMap::default(),
        }
    }

    /// The bracket and its magnitude scale, like [`bracket_scaled`].
    fn bracket(&self, arg: DdComplex) -> (DdComplex, f64) {
        let e = (arg * self.ln_q).exp();
        let ei = e.inv();
        ((e - ei) * self.inv_denom, (e.mag() + ei.mag()) * self.inv_denom.mag())
    }

    fn at(u: Complex64, base: i64, c_coeff: i64, c: Complex64) -> DdComplex {
        dd::promote(u)
            + dd::promote(Complex64::new(base as f64, 0.0))
            + dd::promote(c).scale(c_coeff as f64)
    }

    pub(crate) fn q(
        &mut self,
        a: usize,
        u: Complex64,
        base: i64,
        c_coeff: i64,
        c: Complex64,
        ctx: &EvalContext,
    ) -> Result<(DdComplex, f64), EvalError> {
        if let Some(&hit) = self.q.get(&(a, base, c_coeff)) {
            return Ok(hit);
        }
        let max = ctx.rank().alphabet_size();
        if a > max {
            return Err(EvalError::ColorOutOfRange { color: a, max });
        }
        let value = if a == 0 || a == max {
            (DdComplex::ONE, 1.0)
        } else {
            let at = Self::at(u, base, c_coeff, c);
            let mut v = DdComplex::ONE;
            let mut scale = 1.0;
            for &root in ctx.state.roots(a) {
                let (b, s) = self.bracket(at - dd::promote(root));
                v = v * b;
                scale *= s;
            }
            (v, scale)
        };
        self.q.insert((a, base, c_coeff), value);
        Ok(value)
    }

    pub(crate) fn psi(
        &mut self,
        letter: usize,
        u: Complex64,
        base: i64,
        c_coeff: i64,
        c: Complex64,
        ctx: &EvalContext,
    ) -> Result<DdComplex, EvalError> {
        if matches!(ctx.vacuum, Vacuum::Restricted) && ctx.rank().is_plus(letter) {
            return Ok(DdComplex::ONE);
        }
        if let Some(&hit) = self.psi.get(&(letter, base, c_coeff)) {
            return Ok(hit);
        }
        let at = Self::at(u, base, c_coeff, c);
        let at_f64 = u + Complex64::new(base as f64, 0.0) + c * c_coeff as f64;
        let value = match &ctx.vacuum {
            Vacuum::Restricted => {
                let rank = ctx.rank();
                if letter < 1 || letter > rank.alphabet_size() {
                    return Err(EvalError::LetterOutOfRange {
                        letter,
                        max: rank.alphabet_size(),
                    });
                }
                let shift = dd::promote(Complex64::new((rank.r + 1) as f64, 0.0));
                let mut value = DdComplex::ONE;
                for Site { w, b } in &ctx.config.sites {
                    let base_arg = at - dd::promote(*w) + shift;
                    let (num, _) = self.bracket(base_arg - dd::promote(*b));
                    let (den, dscale) = self.bracket(base_arg + dd::promote(*b));
                    ctx.guard_pole(den.collapse(), dscale, at_f64)?;
                    value = value * num * den.inv();
                }
                value
            }
            Vacuum::AppendixA => {
                if letter < 1 || letter > 3 {
                    return Err(EvalError::LetterOutOfRange { letter, max: 3 });
                }
                let mut value = DdComplex::ONE;
                if letter > 1 {
                    let two = dd::promote(Complex64::new(2.0, 0.0));
                    for (j, Site { w, b }) in ctx.config.sites.iter().enumerate() {
                        let base_arg = at - dd::promote(*w);
                        let (num, den, dscale) = if j == 0 {
                            let (num, _) = self.bracket(base_arg + dd::promote(*b));
                            let (den, ds) = self.bracket(base_arg - two - dd::promote(*b));
                            (num, den, ds)
                        } else {
                            let (num, _) = self.bracket(base_arg);
                            let (den, ds) = self.bracket(base_arg - two);
                            (num, den, ds)
                        };
                        ctx.guard_pole(den.collapse(), dscale, at_f64)?;
                        value = value * num * den.inv();
                    }
                }
                value
            }
            // User hooks only expose float precision; promote their value.
            Vacuum::Custom { eval, .. } => dd::promote(eval(letter, at_f64, &ctx.config)?),
        };
        self.psi.insert((letter, base, c_coeff), value);
        Ok(value)
    }
}
