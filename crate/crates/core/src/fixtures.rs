//! Reference expansions for the smallest models, written out term by term.
//!
//! Everything in this module is a direct transcription of a known small
//! expansion using only [`bracket`], [`phi`] and [`q_function`] — no tableau
//! enumeration, no symbolic cancellation, no shared plumbing with the
//! constructors in [`crate::dvf`]. That makes these functions independent
//! oracles: if a generic constructor and its reference agree at random
//! points, both are almost certainly right.
//!
//! The fixture names here are the ones the CLI exposes via
//! `fixtures --name {sl21-deformed, appendix-a, appendix-b, sl22-atypical}`.

use num_complex::Complex64;

use crate::analytic::{bracket, phi, q_function, EvalContext, EvalError};
use crate::model::Site;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// The label common to every site, for expansions displayed under a uniform
/// quantum space. Zero sites count as uniform (the ratios collapse to 1).
fn uniform_label(ctx: &EvalContext) -> Result<Complex64, EvalError> {
    let sites = &ctx.config.sites;
    let b = match sites.first() {
        Some(site) => site.b,
        None => return Ok(real(0.0)),
    };
    for site in sites.iter().skip(1) {
        if (site.b - b).norm() > 1e-12 {
            return Err(EvalError::BadRootTable(
                "this reference expansion assumes one common site label b".into(),
            ));
        }
    }
    Ok(b)
}

/// Vacuum part of a fermionic letter at rank (1,0) or (1,1), written inline:
/// prod_j [u - w_j + 2 - b_j] / [u - w_j + 2 + b_j].
fn odd_psi_r1(u: Complex64, ctx: &EvalContext) -> Complex64 {
    let two = real(2.0);
    let mut out = real(1.0);
    for Site { w, b } in &ctx.config.sites {
        out *= bracket(u - w + two - b, ctx.q()) / bracket(u - w + two + b, ctx.q());
    }
    out
}

/// The deformed one-column family for the rank-(1,0) model, spelled out as
/// its four displayed addends:
///
/// ```text
///   Q2(u-1-c)/Q2(u+1+c)
/// - psi3(u-1+c) Q1(u+c)  Q2(u-1-c) / (Q1(u+2+c) Q2(u+1+c))
/// - psi3(u-1+c) Q1(u+4+c)Q2(u-1-c) / (Q1(u+2+c) Q2(u+3+c))
/// + psi3(u+1+c) psi3(u-1+c) Q2(u-1-c)/Q2(u+3+c)
/// ```
///
/// Agrees with [`crate::dvf::t_tilde_rect`] at rank (1,0) for every complex c.
pub fn sl21_deformed_reference(
    u: Complex64,
    c: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    let at = |base: f64, k: f64| u + real(base) + c * k;
    let q1 = |base: f64, k: f64| q_function(1, at(base, k), ctx);
    let q2 = |base: f64, k: f64| q_function(2, at(base, k), ctx);
    let psi_lo = odd_psi_r1(at(-1.0, 1.0), ctx);
    let psi_hi = odd_psi_r1(at(1.0, 1.0), ctx);

    let t1 = q2(-1.0, -1.0)? / q2(1.0, 1.0)?;
    let t2 = -psi_lo * q1(0.0, 1.0)? * q2(-1.0, -1.0)? / (q1(2.0, 1.0)? * q2(1.0, 1.0)?);
    let t3 = -psi_lo * q1(4.0, 1.0)? * q2(-1.0, -1.0)? / (q1(2.0, 1.0)? * q2(3.0, 1.0)?);
    let t4 = psi_hi * psi_lo * q2(-1.0, -1.0)? / q2(3.0, 1.0)?;
    Ok(t1 + t2 + t3 + t4)
}

/// The one-row sum for the rank-(0,1) model at shape (2), under a uniform
/// site label b: four addends with phi-ratio vacuum factors.
pub fn appendix_b_row_reference(u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    let b = uniform_label(ctx)?;
    let pr = |base: f64| phi(u + real(base) - b, ctx) / phi(u + real(base) + b, ctx);
    let q1 = |base: f64| q_function(1, u + real(base), ctx);
    let q2 = |base: f64| q_function(2, u + real(base), ctx);

    let t1 = q1(-2.0)? / q1(2.0)?;
    let t2 = -pr(2.0) * q1(-2.0)? * q2(3.0)? / (q1(2.0)? * q2(1.0)?);
    let t3 = -pr(2.0) * q1(-2.0)? * q2(-1.0)? / (q1(0.0)? * q2(1.0)?);
    let t4 = pr(0.0) * pr(2.0) * q1(-2.0)? / q1(0.0)?;
    Ok(t1 + t2 + t3 + t4)
}

/// The one-cell fermionic-restricted block for the rank-(0,1) model, under a
/// uniform site label b:
///
/// ```text
/// -phi(u+1-b)/phi(u+1+b) { Q1(u-1)Q2(u+2)/(Q1(u+1)Q2(u)) + Q2(u-2)/Q2(u) }
/// ```
pub fn appendix_b_h_reference(u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    let b = uniform_label(ctx)?;
    let pr = phi(u + real(1.0) - b, ctx) / phi(u + real(1.0) + b, ctx);
    let q1 = |base: f64| q_function(1, u + real(base), ctx);
    let q2 = |base: f64| q_function(2, u + real(base), ctx);
    Ok(-pr * (q1(-1.0)? * q2(2.0)? / (q1(1.0)? * q2(0.0)?) + q2(-2.0)? / q2(0.0)?))
}

/// The deformed eigenvalue for the rank-(0,1) model at shape (2,1), under a
/// uniform site label b: the full eight-term expansion with its overall
/// phi-ratio prefactor. Agrees with [`crate::dvf::t_tilde`] for every
/// complex c, and factorizes as
/// `Q1(u-c-1)/Q1(u+c-1) * T_(2)(u+c+1) * H_(1)(u-c-2)`.
pub fn appendix_b_deformed_reference(
    u: Complex64,
    c: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    let b = uniform_label(ctx)?;
    let at = |base: f64, k: f64| u + real(base) + c * k;
    let pr = |base: f64, k: f64| phi(at(base, k) - b, ctx) / phi(at(base, k) + b, ctx);
    let q1 = |base: f64, k: f64| q_function(1, at(base, k), ctx);
    let q2 = |base: f64, k: f64| q_function(2, at(base, k), ctx);

    let pre = pr(-1.0, -1.0);
    let g1 = pr(1.0, 1.0);
    let g3 = pr(3.0, 1.0);

    let t1 = -q1(-3.0, -1.0)? * q2(0.0, -1.0)? / (q1(3.0, 1.0)? * q2(-2.0, -1.0)?);
    let t2 = -g1 * g3 * q1(-1.0, -1.0)? * q2(-4.0, -1.0)? / (q1(1.0, 1.0)? * q2(-2.0, -1.0)?);
    let t3 = -g1 * g3 * q1(-3.0, -1.0)? * q2(0.0, -1.0)? / (q1(1.0, 1.0)? * q2(-2.0, -1.0)?);
    let t4 = g3 * q1(-1.0, -1.0)? * q2(-4.0, -1.0)? * q2(0.0, 1.0)?
        / (q1(1.0, 1.0)? * q2(-2.0, -1.0)? * q2(2.0, 1.0)?);
    let t5 = g3 * q1(-3.0, -1.0)? * q2(0.0, -1.0)? * q2(0.0, 1.0)?
        / (q1(1.0, 1.0)? * q2(-2.0, -1.0)? * q2(2.0, 1.0)?);
    let t6 = g3 * q1(-1.0, -1.0)? * q2(-4.0, -1.0)? * q2(4.0, 1.0)?
        / (q1(3.0, 1.0)? * q2(-2.0, -1.0)? * q2(2.0, 1.0)?);
    let t7 = g3 * q1(-3.0, -1.0)? * q2(0.0, -1.0)? * q2(4.0, 1.0)?
        / (q1(3.0, 1.0)? * q2(-2.0, -1.0)? * q2(2.0, 1.0)?);
    let t8 = -q1(-1.0, -1.0)? * q2(-4.0, -1.0)? / (q1(3.0, 1.0)? * q2(-2.0, -1.0)?);

    Ok(pre * (t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8))
}

/// The leading addend of [`appendix_b_deformed_reference`] on its own (the
/// prefactor times the first braced term); this is what the highest-weight
/// filling of the widened shape telescopes to.
pub fn appendix_b_top_reference(
    u: Complex64,
    c: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    let b = uniform_label(ctx)?;
    let at = |base: f64, k: f64| u + real(base) + c * k;
    let pre = phi(at(-1.0, -1.0) - b, ctx) / phi(at(-1.0, -1.0) + b, ctx);
    let q1 = |base: f64, k: f64| q_function(1, at(base, k), ctx);
    let q2 = |base: f64, k: f64| q_function(2, at(base, k), ctx);
    Ok(-pre * q1(-3.0, -1.0)? * q2(0.0, -1.0)? / (q1(3.0, 1.0)? * q2(-2.0, -1.0)?))
}

/// Vacuum parts of the alternate-grading two-color fixture, verbatim:
/// psi_1 = 1 and
/// psi_2 = psi_3 = [u-w_1+b_1]/[u-2-w_1-b_1] prod_{j>=2} [u-w_j]/[u-w_j-2].
pub fn appendix_a_vacuum_reference(
    letter: usize,
    u: Complex64,
    ctx: &EvalContext,
) -> Result<Complex64, EvalError> {
    match letter {
        1 => Ok(real(1.0)),
        2 | 3 => {
            let two = real(2.0);
            let mut out = real(1.0);
            for (j, Site { w, b }) in ctx.config.sites.iter().enumerate() {
                out *= if j == 0 {
                    bracket(u - w + b, ctx.q()) / bracket(u - two - w - b, ctx.q())
                } else {
                    bracket(u - w, ctx.q()) / bracket(u - w - two, ctx.q())
                };
            }
            Ok(out)
        }
        _ => Err(EvalError::LetterOutOfRange { letter, max: 3 }),
    }
}

/// The alternate-grading one-cell sum, verbatim:
///
/// ```text
/// - psi1(u) Q1(u+1)/Q1(u-1)
/// + psi2(u) Q1(u+1)Q2(u-2)/(Q1(u-1)Q2(u))
/// + psi3(u) Q2(u+2)/Q2(u)
/// ```
///
/// (letter 1 is the fermionic one in this grading, hence the minus sign).
pub fn appendix_a_t11_reference(u: Complex64, ctx: &EvalContext) -> Result<Complex64, EvalError> {
    let q1 = |base: f64| q_function(1, u + real(base), ctx);
    let q2 = |base: f64| q_function(2, u + real(base), ctx);
    let psi = appendix_a_vacuum_reference(2, u, ctx)?;
    let b1 = q1(1.0)? / q1(-1.0)?;
    let b2 = psi * q1(1.0)? * q2(-2.0)? / (q1(-1.0)? * q2(0.0)?);
    let b3 = psi * q2(2.0)? / q2(0.0)?;
    Ok(-b1 + b2 + b3)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::analytic::{sample_state, sample_unit_box, BetheState, EvalContext};
    use crate::diagrams::{Partition, SkewShape};
    use crate::dvf::{h_restricted, t_tableau_sum, t_tilde, t_tilde_rect, top_term, BuildOptions};
    use crate::model::{sample_generic_q, ModelConfig, Rank, Site};

    const TOL: f64 = 1e-10;

    fn rel_err(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1.0)
    }

    /// Context with per-site labels (no uniformity constraint).
    fn generic_ctx(rank: Rank, seed: u64) -> Arc<EvalContext> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_generic_q(&mut rng);
        let sites = (0..rng.gen_range(1..=3))
            .map(|_| Site { w: sample_unit_box(&mut rng), b: sample_unit_box(&mut rng) })
            .collect();
        let config = ModelConfig::new_unchecked(rank, q, sites);
        let state = sample_state(rank.colors(), 2, &mut rng);
        Arc::new(EvalContext::new(config, state).unwrap())
    }

    /// Context whose sites all share one label b.
    fn uniform_ctx(rank: Rank, seed: u64) -> Arc<EvalContext> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_generic_q(&mut rng);
        let b = sample_unit_box(&mut rng);
        let sites = (0..rng.gen_range(1..=3))
            .map(|_| Site { w: sample_unit_box(&mut rng), b })
            .collect();
        let config = ModelConfig::new_unchecked(rank, q, sites);
        let state = sample_state(rank.colors(), 2, &mut rng);
        Arc::new(EvalContext::new(config, state).unwrap())
    }

    #[test]
    fn sl21_reference_matches_rectangular_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..4 {
            let ctx = generic_ctx(Rank::new(1, 0), seed);
            let c = sample_unit_box(&mut rng);
            let fun = t_tilde_rect(c, &ctx, &BuildOptions::default()).unwrap();
            for _ in 0..20 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let want = sl21_deformed_reference(u, c, &ctx).unwrap();
                assert!(rel_err(got, want) < TOL, "rect family vs reference at u={u}");
            }
        }
    }

    #[test]
    fn appendix_b_row_reference_matches_tableau_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..4 {
            let ctx = uniform_ctx(Rank::new(0, 1), seed);
            let shape = SkewShape::straight(Partition::new(vec![2]).unwrap());
            let fun = t_tableau_sum(&shape, &ctx, &BuildOptions::default()).unwrap();
            assert_eq!(fun.term_count, Some(4));
            for _ in 0..20 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let want = appendix_b_row_reference(u, &ctx).unwrap();
                assert!(rel_err(got, want) < TOL, "row sum vs reference at u={u}");
            }
        }
    }

    #[test]
    fn appendix_b_h_reference_matches_restricted_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for seed in 0..4 {
            let ctx = uniform_ctx(Rank::new(0, 1), seed);
            let nu = Partition::new(vec![1]).unwrap();
            let fun = h_restricted(&nu, &ctx, &BuildOptions::default()).unwrap();
            assert_eq!(fun.term_count, Some(2));
            for _ in 0..20 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let want = appendix_b_h_reference(u, &ctx).unwrap();
                assert!(rel_err(got, want) < TOL, "restricted block vs reference at u={u}");
            }
        }
    }

    #[test]
    fn appendix_b_deformed_reference_matches_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mu = Partition::new(vec![2, 1]).unwrap();
        for seed in 0..4 {
            let ctx = uniform_ctx(Rank::new(0, 1), seed);
            let c = sample_unit_box(&mut rng);
            let fun = t_tilde(&mu, c, &ctx, &BuildOptions::default()).unwrap();
            assert_eq!(fun.term_count, Some(8));
            for _ in 0..20 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let want = appendix_b_deformed_reference(u, c, &ctx).unwrap();
                assert!(rel_err(got, want) < TOL, "deformed vs reference at u={u}, c={c}");
            }
        }
    }

    #[test]
    fn appendix_b_reference_factorizes() {
        // The eight-term expansion equals
        // Q1(u-c-1)/Q1(u+c-1) * T_(2)(u+c+1) * H_(1)(u-c-2),
        // with both factors given by their own reference transcriptions.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let ctx = uniform_ctx(Rank::new(0, 1), 7);
        for _ in 0..20 {
            let u = sample_unit_box(&mut rng) * 2.0;
            let c = sample_unit_box(&mut rng);
            let lhs = appendix_b_deformed_reference(u, c, &ctx).unwrap();
            let ratio = q_function(1, u - c - real(1.0), &ctx).unwrap()
                / q_function(1, u + c - real(1.0), &ctx).unwrap();
            let rhs = ratio
                * appendix_b_row_reference(u + c + real(1.0), &ctx).unwrap()
                * appendix_b_h_reference(u - c - real(2.0), &ctx).unwrap();
            assert!(rel_err(lhs, rhs) < TOL, "factorization at u={u}, c={c}");
        }
    }

    #[test]
    fn appendix_b_top_reference_matches_top_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mu = Partition::new(vec![2, 1]).unwrap();
        for seed in 0..4 {
            let ctx = uniform_ctx(Rank::new(0, 1), seed);
            let c = sample_unit_box(&mut rng);
            let fun = top_term(&mu, c, &ctx).unwrap();
            for _ in 0..10 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let want = appendix_b_top_reference(u, c, &ctx).unwrap();
                assert!(rel_err(got, want) < TOL, "top term vs reference at u={u}, c={c}");
            }
        }
    }

    #[test]
    fn sl22_atypical_rectangle_splits() {
        // At rank (1,1) and parameter c = -1 the rectangular family is no
        // longer irreducible-typical; it splits into the one-column sum plus
        // a vacuum-dressed one-row sum:
        //   Ttilde^2_1(u) = T^2_1(u) + psi3(u-3) psi3(u-1) T^1_2(u).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rank = Rank::new(1, 1);
        for seed in 0..4 {
            let ctx = generic_ctx(rank, seed);
            let c = real(-1.0);
            let fun = t_tilde_rect(c, &ctx, &BuildOptions::default()).unwrap();
            assert!(fun.possibly_atypical);
            let col = t_tableau_sum(
                &SkewShape::straight(Partition::new(vec![1, 1]).unwrap()),
                &ctx,
                &BuildOptions::default(),
            )
            .unwrap();
            let row = t_tableau_sum(
                &SkewShape::straight(Partition::new(vec![2]).unwrap()),
                &ctx,
                &BuildOptions::default(),
            )
            .unwrap();
            for _ in 0..10 {
                let u = sample_unit_box(&mut rng) * 2.0;
                let got = fun.eval(u).unwrap();
                let dress = odd_psi_r1(u - real(3.0), &ctx) * odd_psi_r1(u - real(1.0), &ctx);
                let want = col.eval(u).unwrap() + dress * row.eval(u).unwrap();
                assert!(rel_err(got, want) < TOL, "atypical split at u={u}");
            }
        }
    }

    #[test]
    fn appendix_a_vacuum_reference_basics() {
        let ctx = generic_ctx(Rank::new(1, 0), 3);
        let u = Complex64::new(0.4, 0.7);
        assert_eq!(appendix_a_vacuum_reference(1, u, &ctx).unwrap(), real(1.0));
        let p2 = appendix_a_vacuum_reference(2, u, &ctx).unwrap();
        let p3 = appendix_a_vacuum_reference(3, u, &ctx).unwrap();
        assert!((p2 - p3).norm() < 1e-15);
        assert!(appendix_a_vacuum_reference(4, u, &ctx).is_err());
    }

    #[test]
    fn uniform_label_rejects_mixed_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let q = sample_generic_q(&mut rng);
        let sites = vec![
            Site { w: real(0.0), b: real(1.0) },
            Site { w: real(0.5), b: real(2.0) },
        ];
        let config = ModelConfig::new_unchecked(Rank::new(0, 1), q, sites);
        let ctx = EvalContext::new(config, BetheState::vacuum(2)).unwrap();
        assert!(appendix_b_h_reference(Complex64::new(0.3, 0.2), &ctx).is_err());
    }
}
