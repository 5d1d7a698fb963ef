//! Double-double scalars (~31 significant digits) for evaluation paths that
//! run into catastrophic cancellation, e.g. determinants that are exactly
//! singular or nearly so relative to the size of their entries.
//!
//! `twofloat` supplies the error-free add/mul/div kernels; its elementary
//! functions are only float-accurate, so `exp` and `sin_cos` are rebuilt here
//! with argument reduction plus Taylor summation carried out entirely in
//! double-double arithmetic. Worst-case relative error is a few units in the
//! 31st digit (checked against 60-digit references in the tests below).

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::LazyLock;

use num_complex::Complex64;
use twofloat::consts::{FRAC_PI_2, LN_2};
use twofloat::TwoFloat;

pub(crate) type Dd = TwoFloat;

pub(crate) fn dd(x: f64) -> Dd {
    Dd::from(x)
}

/// Full-precision quotient by three-step long division. `twofloat`'s own
/// TwoFloat/TwoFloat operator drops the reciprocal residual (its first
/// correction is computed without an FMA and rounds to zero), so it is only
/// float-accurate; this version uses the crate's sound mul/sub kernels only.
pub(crate) fn div(a: Dd, b: Dd) -> Dd {
    let q1 = a.hi() / b.hi();
    let r1 = a - b * q1;
    let q2 = r1.hi() / b.hi();
    let r2 = r1 - b * q2;
    let q3 = r2.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

/// 1/n! for n = 0..=31, computed once so the series loops below stay
/// multiply-only (a double-double division costs several multiplies).
static INV_FACT: LazyLock<[Dd; 32]> = LazyLock::new(|| {
    let mut t = [dd(1.0); 32];
    for n in 2..32 {
        t[n] = t[n - 1] / (n as f64);
    }
    t
});

/// Alternating coefficients of sin(r)/r and cos(r) as series in r^2.
static SIN_COS_COEF: LazyLock<([Dd; 16], [Dd; 16])> = LazyLock::new(|| {
    let f = &*INV_FACT;
    let mut s = [dd(0.0); 16];
    let mut c = [dd(0.0); 16];
    for n in 0..16 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        s[n] = f[2 * n + 1] * sign;
        c[n] = f[2 * n] * sign;
    }
    (s, c)
});

/// exp(x) = 2^k exp(r) with k = round(x / ln 2), |r| <= (ln 2)/2; the Taylor
/// tail beyond degree 26 is below 1e-35 on that interval.
pub(crate) fn exp(x: Dd) -> Dd {
    let k = (x.hi() / std::f64::consts::LN_2).round();
    let r = x - LN_2 * dd(k);
    let f = &*INV_FACT;
    let mut p = f[26];
    for n in (0..26).rev() {
        p = p * r + f[n];
    }
    // Scaling by a power of two is exact in each component.
    p * 2.0_f64.powi(k as i32)
}

/// Simultaneous sin/cos via reduction mod pi/2 and degree-31/30 Taylor sums.
pub(crate) fn sin_cos(x: Dd) -> (Dd, Dd) {
    let k = (x.hi() / std::f64::consts::FRAC_PI_2).round();
    let r = x - FRAC_PI_2 * dd(k);
    let w = r * r;
    let (sc, cc) = &*SIN_COS_COEF;
    let mut s = sc[15];
    let mut c = cc[15];
    for n in (0..15).rev() {
        s = s * w + sc[n];
        c = c * w + cc[n];
    }
    s = s * r;
    match (k as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Complex double-double value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

pub(crate) fn promote(z: Complex64) -> DdComplex {
    DdComplex { re: dd(z.re), im: dd(z.im) }
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex { re: TwoFloat::from_f64(0.0), im: TwoFloat::from_f64(0.0) };
    pub const ONE: DdComplex = DdComplex { re: TwoFloat::from_f64(1.0), im: TwoFloat::from_f64(0.0) };

    pub fn collapse(self) -> Complex64 {
        Complex64::new(self.re.hi() + self.re.lo(), self.im.hi() + self.im.lo())
    }

    /// Leading-component magnitude, good enough for pivoting and guards.
    pub fn mag(self) -> f64 {
        self.re.hi().hypot(self.im.hi())
    }

    pub fn inv(self) -> DdComplex {
        let d = self.re * self.re + self.im * self.im;
        DdComplex { re: div(self.re, d), im: div(-self.im, d) }
    }

    pub fn exp(self) -> DdComplex {
        let m = exp(self.re);
        let (s, c) = sin_cos(self.im);
        DdComplex { re: m * c, im: m * s }
    }

    pub fn scale(self, f: f64) -> DdComplex {
        DdComplex { re: self.re * dd(f), im: self.im * dd(f) }
    }
}

impl Add for DdComplex {
    type Output = DdComplex;
    fn add(self, o: DdComplex) -> DdComplex {
        DdComplex { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for DdComplex {
    type Output = DdComplex;
    fn sub(self, o: DdComplex) -> DdComplex {
        DdComplex { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for DdComplex {
    type Output = DdComplex;
    fn mul(self, o: DdComplex) -> DdComplex {
        DdComplex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl Div for DdComplex {
    type Output = DdComplex;
    fn div(self, o: DdComplex) -> DdComplex {
        self * o.inv()
    }
}

impl Neg for DdComplex {
    type Output = DdComplex;
    fn neg(self) -> DdComplex {
        DdComplex { re: -self.re, im: -self.im }
    }
}

/// Principal log of a nonzero complex number: float seed plus one Newton
/// step ln <- ln + q exp(-ln) - 1, which doubles the correct digits.
pub(crate) fn ln_refined(q: Complex64) -> DdComplex {
    let seed = promote(q.ln());
    seed + promote(q) * (-seed).exp() - DdComplex::ONE
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(got: Dd, hi: f64, lo: f64) -> f64 {
        let want = dd(hi) + dd(lo);
        let err = got - want;
        ((err.hi().abs() + err.lo().abs()) / (hi.abs().max(1e-300))).abs()
    }

    #[test]
    fn exp_matches_sixty_digit_references() {
        let refs = [
            (0.3, 1.3498588075760032, -9.447314673432387e-17),
            (-1.7, 0.18268352405273466, -5.430659906894856e-18),
            (3.9, 49.40244910553017, 2.829950016264447e-15),
            (11.4, 89321.72336080558, 4.36279217528595e-12),
            (-12.2, 5.030455607111448e-06, -4.088385249853399e-22),
            (40.0, 2.3538526683702e+17, -14.592100089250966),
            (-35.5, 3.8242466280971355e-16, -1.922627532362148e-32),
        ];
        for (x, hi, lo) in refs {
            assert!(rel(exp(dd(x)), hi, lo) < 5e-31, "exp({x})");
        }
    }

    #[test]
    fn sin_cos_match_sixty_digit_references() {
        let sin_refs = [
            (0.4, 0.3894183423086505, -1.0347311139198343e-17),
            (2.9, 0.23924932921398243, -1.1267666643498124e-17),
            (-7.3, -0.8504366206285644, -2.4862563617865e-17),
            (31.0, -0.404037645323065, 1.394892831018849e-17),
            (38.5, 0.7179745927716441, 2.921197675904922e-17),
            (-44.2, -0.2159872661882241, 8.507536055435993e-18),
        ];
        let cos_refs = [
            (0.4, 0.9210609940028851, -2.866427810946048e-17),
            (2.9, -0.9709581651495905, 4.579633153232696e-17),
            (-7.3, 0.5260775173811053, 3.150282613539294e-17),
            (31.0, 0.9147423578045313, -1.9002118646599085e-18),
            (38.5, 0.6960693098638897, 4.795500584097976e-17),
            (-44.2, 0.9763961802693296, 9.416767788675775e-18),
        ];
        for ((x, shi, slo), (_, chi, clo)) in sin_refs.into_iter().zip(cos_refs) {
            let (s, c) = sin_cos(dd(x));
            assert!(rel(s, shi, slo) < 5e-30, "sin({x})");
            assert!(rel(c, chi, clo) < 5e-30, "cos({x})");
        }
    }

    #[test]
    fn exp_and_trig_identities_hold_to_dd_precision() {
        let xs = [-17.25, -4.8, -0.013, 0.4, 2.75, 9.6, 23.1];
        for x in xs {
            let prod = exp(dd(x)) * exp(dd(-x)) - dd(1.0);
            assert!(prod.hi().abs() < 1e-30, "exp({x}) exp(-{x})");
            let (s, c) = sin_cos(dd(x));
            let pyth = s * s + c * c - dd(1.0);
            assert!(pyth.hi().abs() < 1e-30, "sin^2+cos^2 at {x}");
        }
        for (a, b) in [(0.7, -3.1), (5.5, 4.25), (-8.0, 0.375)] {
            let lhs = exp(dd(a) + dd(b));
            let rhs = exp(dd(a)) * exp(dd(b));
            let err = (lhs - rhs) / rhs;
            assert!(err.hi().abs() < 1e-30, "exp({a}+{b})");
        }
    }

    #[test]
    fn complex_ops_and_ln_round_trip() {
        let q = Complex64::new(1.32, 0.08);
        let l = ln_refined(q);
        let back = l.exp() - promote(q);
        assert!(back.mag() < 1e-30 * q.norm());

        let a = promote(Complex64::new(0.3, -1.9));
        let b = promote(Complex64::new(-2.4, 0.55));
        let round = a / b * b - a;
        assert!(round.mag() < 1e-30);

        // Collapse returns the nearest f64 pair.
        let z = promote(Complex64::new(1.0, -0.25));
        assert_eq!(z.collapse(), Complex64::new(1.0, -0.25));
    }
}
