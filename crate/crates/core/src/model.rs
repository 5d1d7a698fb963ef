//! The sl(r+1|s+1) weight lattice in the redundant epsilon/delta basis,
//! distinguished simple roots, Kac-Dynkin labels of covariant diagrams,
//! the typicality margin and the typical dimension formula, plus the model
//! configuration (deformation parameter q and inhomogeneity sites).
//!
//! Conventions: the bilinear form is (eps_i|eps_j) = delta_ij,
//! (eps_i|delta_j) = 0, (delta_i|delta_j) = -delta_ij, and weight vectors
//! are compared modulo the null combination sum(eps) - sum(delta).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagrams::Partition;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("operands live in different ranks")]
    RankMismatch,
    #[error("hook condition violated: mu_(r+2) = {got} exceeds s+1 = {limit}")]
    HookViolation { got: usize, limit: usize },
    #[error("q = {0} is too close to the unit circle; pass the unimodular override to proceed")]
    NonGenericQ(Complex64),
    #[error("configuration error: {0}")]
    Config(String),
}

/// The rank pair (r, s) of sl(r+1|s+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rank {
    pub r: usize,
    pub s: usize,
}

impl Rank {
    pub fn new(r: usize, s: usize) -> Self {
        Rank { r, s }
    }

    /// Number of root colors, r+s+1.
    pub fn colors(&self) -> usize {
        self.r + self.s + 1
    }

    /// Size of the box alphabet J, r+s+2.
    pub fn alphabet_size(&self) -> usize {
        self.r + self.s + 2
    }

    /// Letter lies in the bosonic block J+ = {1, ..., r+1}.
    pub fn is_plus(&self, a: usize) -> bool {
        (1..=self.r + 1).contains(&a)
    }

    /// Letter lies in the fermionic block J- = {r+2, ..., r+s+2}.
    pub fn is_minus(&self, a: usize) -> bool {
        (self.r + 2..=self.alphabet_size()).contains(&a)
    }

    /// Grading of a letter: 0 on J+, 1 on J-.
    pub fn parity(&self, a: usize) -> u8 {
        if self.is_plus(a) {
            0
        } else {
            1
        }
    }

    /// Color sign t_a: +1 for colors 1..=r+1, -1 for colors r+2..=r+s+1.
    pub fn t_sign(&self, a: usize) -> f64 {
        if a <= self.r + 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// A weight written in the redundant basis: coefficients of eps_1..eps_{r+1}
/// followed by delta_1..delta_{s+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub eps: Vec<Complex64>,
    pub delta: Vec<Complex64>,
}

impl WeightVector {
    pub fn zero(rank: Rank) -> Self {
        WeightVector {
            eps: vec![Complex64::new(0.0, 0.0); rank.r + 1],
            delta: vec![Complex64::new(0.0, 0.0); rank.s + 1],
        }
    }

    pub fn basis_eps(rank: Rank, i: usize) -> Self {
        let mut v = Self::zero(rank);
        v.eps[i - 1] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn basis_delta(rank: Rank, j: usize) -> Self {
        let mut v = Self::zero(rank);
        v.delta[j - 1] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn rank_of(&self) -> Rank {
        Rank::new(self.eps.len() - 1, self.delta.len() - 1)
    }

    pub fn add(&self, other: &WeightVector) -> Result<WeightVector, ModelError> {
        self.combine(other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &WeightVector) -> Result<WeightVector, ModelError> {
        self.combine(other, Complex64::new(-1.0, 0.0))
    }

    fn combine(&self, other: &WeightVector, sign: Complex64) -> Result<WeightVector, ModelError> {
        if self.eps.len() != other.eps.len() || self.delta.len() != other.delta.len() {
            return Err(ModelError::RankMismatch);
        }
        Ok(WeightVector {
            eps: self.eps.iter().zip(&other.eps).map(|(a, b)| a + sign * b).collect(),
            delta: self.delta.iter().zip(&other.delta).map(|(a, b)| a + sign * b).collect(),
        })
    }

    pub fn scale(&self, t: Complex64) -> WeightVector {
        WeightVector {
            eps: self.eps.iter().map(|a| a * t).collect(),
            delta: self.delta.iter().map(|a| a * t).collect(),
        }
    }

    /// Equality modulo the null vector sum(eps) - sum(delta).
    pub fn eq_mod_null(&self, other: &WeightVector, tol: f64) -> bool {
        let d = match self.sub(other) {
            Ok(d) => d,
            Err(_) => return false,
        };
        let t = d.eps[0];
        d.eps.iter().all(|a| (a - t).norm() <= tol)
            && d.delta.iter().all(|a| (a + t).norm() <= tol)
    }
}

/// The invariant bilinear form in the redundant basis.
pub fn inner_product(x: &WeightVector, y: &WeightVector) -> Result<Complex64, ModelError> {
    if x.eps.len() != y.eps.len() || x.delta.len() != y.delta.len() {
        return Err(ModelError::RankMismatch);
    }
    let plus: Complex64 = x.eps.iter().zip(&y.eps).map(|(a, b)| a * b).sum();
    let minus: Complex64 = x.delta.iter().zip(&y.delta).map(|(a, b)| a * b).sum();
    Ok(plus - minus)
}

/// Distinguished simple roots: alpha_i = eps_i - eps_{i+1} for i <= r,
/// alpha_{r+1} = eps_{r+1} - delta_1, alpha_{r+1+j} = delta_j - delta_{j+1}.
pub fn simple_roots(rank: Rank) -> Vec<WeightVector> {
    let mut roots = Vec::with_capacity(rank.colors());
    for i in 1..=rank.r {
        roots.push(
            WeightVector::basis_eps(rank, i)
                .sub(&WeightVector::basis_eps(rank, i + 1))
                .unwrap(),
        );
    }
    roots.push(
        WeightVector::basis_eps(rank, rank.r + 1)
            .sub(&WeightVector::basis_delta(rank, 1))
            .unwrap(),
    );
    for j in 1..=rank.s {
        roots.push(
            WeightVector::basis_delta(rank, j)
                .sub(&WeightVector::basis_delta(rank, j + 1))
                .unwrap(),
        );
    }
    roots
}

/// The Weyl-vector analogue used by the typicality margin:
/// rho = (1/2) sum_i (r-s-2i+1) eps_i + (1/2) sum_j (r+s-2j+3) delta_j.
pub fn rho(rank: Rank) -> WeightVector {
    let mut v = WeightVector::zero(rank);
    for i in 1..=rank.r + 1 {
        v.eps[i - 1] = Complex64::new((rank.r as f64 - rank.s as f64 - 2.0 * i as f64 + 1.0) / 2.0, 0.0);
    }
    for j in 1..=rank.s + 1 {
        v.delta[j - 1] = Complex64::new((rank.r as f64 + rank.s as f64 - 2.0 * j as f64 + 3.0) / 2.0, 0.0);
    }
    v
}

/// The fundamental weight the deformation moves along: omega = sum_i eps_i.
pub fn omega(rank: Rank) -> WeightVector {
    let mut v = WeightVector::zero(rank);
    for a in v.eps.iter_mut() {
        *a = Complex64::new(1.0, 0.0);
    }
    v
}

/// Fermionic leg lengths eta_j = max(mu'_j - r - 1, 0) for j = 1..=s+1.
pub fn eta(rank: Rank, mu: &Partition) -> Vec<usize> {
    let conj = mu.conjugate();
    (1..=rank.s + 1)
        .map(|j| conj.part(j).saturating_sub(rank.r + 1))
        .collect()
}

fn check_hook(rank: Rank, mu: &Partition) -> Result<(), ModelError> {
    let got = mu.part(rank.r + 2);
    if got > rank.s + 1 {
        return Err(ModelError::HookViolation { got, limit: rank.s + 1 });
    }
    Ok(())
}

/// Kac-Dynkin labels of a covariant diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct KacDynkinLabel {
    /// b_1, ..., b_{r+s+1}.
    pub b: Vec<Complex64>,
}

/// Labels of the covariant representation attached to a hook-shaped diagram:
/// b_j = mu_j - mu_{j+1} (j <= r), b_{r+1} = mu_{r+1} + eta_1,
/// b_{r+1+j} = eta_j - eta_{j+1} (j <= s).
pub fn kac_dynkin_from_diagram(rank: Rank, mu: &Partition) -> Result<KacDynkinLabel, ModelError> {
    check_hook(rank, mu)?;
    let etas = eta(rank, mu);
    let mut b = Vec::with_capacity(rank.colors());
    for j in 1..=rank.r {
        b.push(Complex64::new((mu.part(j) - mu.part(j + 1)) as f64, 0.0));
    }
    b.push(Complex64::new((mu.part(rank.r + 1) + etas[0]) as f64, 0.0));
    for j in 1..=rank.s {
        b.push(Complex64::new((etas[j - 1] - etas[j]) as f64, 0.0));
    }
    Ok(KacDynkinLabel { b })
}

/// The highest weight Lambda = sum mu_i eps_i + sum eta_j delta_j.
pub fn weight_from_diagram(rank: Rank, mu: &Partition) -> Result<WeightVector, ModelError> {
    check_hook(rank, mu)?;
    let etas = eta(rank, mu);
    let mut v = WeightVector::zero(rank);
    for i in 1..=rank.r + 1 {
        v.eps[i - 1] = Complex64::new(mu.part(i) as f64, 0.0);
    }
    for j in 1..=rank.s + 1 {
        v.delta[j - 1] = Complex64::new(etas[j - 1] as f64, 0.0);
    }
    Ok(v)
}

/// Labels of an arbitrary weight: b_a = t_a (Lambda | alpha_a).
pub fn label_from_weight(rank: Rank, weight: &WeightVector) -> Result<KacDynkinLabel, ModelError> {
    let roots = simple_roots(rank);
    let mut b = Vec::with_capacity(rank.colors());
    for (a, alpha) in roots.iter().enumerate() {
        let ip = inner_product(weight, alpha)?;
        b.push(ip * rank.t_sign(a + 1));
    }
    Ok(KacDynkinLabel { b })
}

/// Typicality margin of the deformed weight Lambda + c*omega:
/// mu_{r+1} + eta_{s+1} - s + c. The weight is typical when this is nonzero
/// for the relevant atypicality roots; positive real part is the safe zone.
pub fn typicality_margin(rank: Rank, mu: &Partition, c: Complex64) -> Result<Complex64, ModelError> {
    check_hook(rank, mu)?;
    let etas = eta(rank, mu);
    Ok(Complex64::new(
        (mu.part(rank.r + 1) + etas[rank.s]) as f64 - rank.s as f64,
        0.0,
    ) + c)
}

/// Dimension of a typical module:
/// 2^{(r+1)(s+1)} * prod_{1<=i<=j<=r} (b_i+...+b_j+j-i+1)/(j-i+1)
///               * prod_{r+2<=i<=j<=r+s+1} (b_i+...+b_j+j-i+1)/(j-i+1).
pub fn typical_dimension(rank: Rank, label: &KacDynkinLabel) -> Complex64 {
    let mut dim = Complex64::new(2f64.powi(((rank.r + 1) * (rank.s + 1)) as i32), 0.0);
    let mut block = |lo: usize, hi: usize| {
        for i in lo..=hi {
            for j in i..=hi {
                let sum: Complex64 = (i..=j).map(|k| label.b[k - 1]).sum();
                let gap = (j - i + 1) as f64;
                dim *= (sum + gap) / gap;
            }
        }
    };
    if rank.r >= 1 {
        block(1, rank.r);
    }
    if rank.s >= 1 {
        block(rank.r + 2, rank.r + rank.s + 1);
    }
    dim
}

/// Serde adapter pinning complex numbers to the {"re":…,"im":…} wire shape
/// (the num-complex default is a two-element tuple).
pub(crate) mod complex_rect {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Rect {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, ser: S) -> Result<S::Ok, S::Error> {
        Rect { re: z.re, im: z.im }.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Complex64, D::Error> {
        Rect::deserialize(de).map(|r| Complex64::new(r.re, r.im))
    }

    pub(crate) mod opt {
        use super::Rect;
        use num_complex::Complex64;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(
            z: &Option<Complex64>,
            ser: S,
        ) -> Result<S::Ok, S::Error> {
            z.map(|z| Rect { re: z.re, im: z.im }).serialize(ser)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            de: D,
        ) -> Result<Option<Complex64>, D::Error> {
            Ok(Option::<Rect>::deserialize(de)?.map(|r| Complex64::new(r.re, r.im)))
        }
    }
}

/// One inhomogeneity site: a shift w and a row-width label b (the site
/// carries the rectangular diagram (b^{r+1})).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    #[serde(with = "complex_rect")]
    pub w: Complex64,
    #[serde(with = "complex_rect")]
    pub b: Complex64,
}

/// Static model data: rank, deformation parameter q, and quantum-space sites.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub rank: Rank,
    pub q: Complex64,
    pub sites: Vec<Site>,
}

const UNIMODULAR_GUARD: f64 = 1e-6;

impl ModelConfig {
    pub fn new(rank: Rank, q: Complex64, sites: Vec<Site>) -> Result<Self, ModelError> {
        if (q.norm() - 1.0).abs() < UNIMODULAR_GUARD || q.norm() == 0.0 {
            return Err(ModelError::NonGenericQ(q));
        }
        Ok(ModelConfig { rank, q, sites })
    }

    /// Skips the genericity guard on |q|.
    pub fn new_unchecked(rank: Rank, q: Complex64, sites: Vec<Site>) -> Self {
        ModelConfig { rank, q, sites }
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: ModelConfigDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        doc.build()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rank": {"r": self.rank.r, "s": self.rank.s},
            "q": {"re": self.q.re, "im": self.q.im},
            "sites": self.sites,
        })
    }
}

/// Samples a generic q: modulus uniform in [1.1, 2.0], phase uniform.
pub fn sample_generic_q<R: Rng>(rng: &mut R) -> Complex64 {
    let modulus: f64 = rng.gen_range(1.1..2.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(modulus, phase)
}

#[derive(Deserialize)]
struct ModelConfigDoc {
    rank: Rank,
    q: QSpec,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sites: Vec<Site>,
    #[serde(default)]
    allow_unimodular_q: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QSpec {
    Keyword(String),
    Value(#[serde(with = "complex_rect")] Complex64),
}

impl ModelConfigDoc {
    fn build(self) -> Result<ModelConfig, ModelError> {
        let q = match self.q {
            QSpec::Value(q) => q,
            QSpec::Keyword(word) if word == "random" => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                sample_generic_q(&mut rng)
            }
            QSpec::Keyword(word) => {
                return Err(ModelError::Config(format!("unknown q keyword {word:?}")))
            }
        };
        if self.allow_unimodular_q {
            Ok(ModelConfig::new_unchecked(self.rank, q, self.sites))
        } else {
            ModelConfig::new(self.rank, q, self.sites)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn part(rows: &[usize]) -> Partition {
        Partition::new(rows.to_vec()).unwrap()
    }

    #[test]
    fn bilinear_form_basis_rules() {
        let rank = Rank::new(2, 1);
        for i in 1..=3 {
            for j in 1..=3 {
                let ip = inner_product(
                    &WeightVector::basis_eps(rank, i),
                    &WeightVector::basis_eps(rank, j),
                )
                .unwrap();
                assert_eq!(ip, c(if i == j { 1.0 } else { 0.0 }));
            }
        }
        for i in 1..=3 {
            for j in 1..=2 {
                let ip = inner_product(
                    &WeightVector::basis_eps(rank, i),
                    &WeightVector::basis_delta(rank, j),
                )
                .unwrap();
                assert_eq!(ip, c(0.0));
            }
        }
        for i in 1..=2 {
            for j in 1..=2 {
                let ip = inner_product(
                    &WeightVector::basis_delta(rank, i),
                    &WeightVector::basis_delta(rank, j),
                )
                .unwrap();
                assert_eq!(ip, c(if i == j { -1.0 } else { 0.0 }));
            }
        }
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        let x = WeightVector::zero(Rank::new(1, 0));
        let y = WeightVector::zero(Rank::new(0, 1));
        assert!(inner_product(&x, &y).is_err());
    }

    #[test]
    fn simple_root_inner_products() {
        // The odd root is null for every small rank, and non-adjacent roots
        // are orthogonal.
        for r in 0..=3 {
            for s in 0..=3 {
                let rank = Rank::new(r, s);
                let roots = simple_roots(rank);
                assert_eq!(roots.len(), rank.colors());
                let odd = &roots[r];
                assert_eq!(inner_product(odd, odd).unwrap(), c(0.0));
                for a in 0..roots.len() {
                    for b in 0..roots.len() {
                        if a.abs_diff(b) >= 2 {
                            assert_eq!(inner_product(&roots[a], &roots[b]).unwrap(), c(0.0));
                        }
                    }
                }
            }
        }
        // Rank (1,1): (alpha_2 | alpha_3) = +1.
        let roots = simple_roots(Rank::new(1, 1));
        assert_eq!(inner_product(&roots[1], &roots[2]).unwrap(), c(1.0));
    }

    #[test]
    fn kac_dynkin_examples() {
        let label = kac_dynkin_from_diagram(Rank::new(1, 0), &part(&[1, 1])).unwrap();
        assert_eq!(label.b, vec![c(0.0), c(1.0)]);
        let label = kac_dynkin_from_diagram(Rank::new(0, 1), &part(&[2, 1])).unwrap();
        assert_eq!(label.b, vec![c(3.0), c(1.0)]);
        let label = kac_dynkin_from_diagram(Rank::new(1, 1), &Partition::empty()).unwrap();
        assert_eq!(label.b, vec![c(0.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn hook_condition_is_enforced() {
        // mu_(r+2) > s+1 does not label a covariant module.
        assert!(kac_dynkin_from_diagram(Rank::new(1, 0), &part(&[2, 2, 2])).is_err());
        assert!(kac_dynkin_from_diagram(Rank::new(1, 0), &part(&[3, 3, 1])).is_ok());
    }

    #[test]
    fn label_agrees_with_weight_route() {
        for &(r, s) in &[(1usize, 0usize), (0, 1), (1, 1), (2, 1)] {
            let rank = Rank::new(r, s);
            for mu in crate::diagrams::partitions_up_to(6) {
                if kac_dynkin_from_diagram(rank, &mu).is_err() {
                    continue;
                }
                let direct = kac_dynkin_from_diagram(rank, &mu).unwrap();
                let via_weight =
                    label_from_weight(rank, &weight_from_diagram(rank, &mu).unwrap()).unwrap();
                for (x, y) in direct.b.iter().zip(&via_weight.b) {
                    assert!((x - y).norm() < 1e-12, "mu={mu} rank=({r},{s})");
                }
            }
        }
    }

    #[test]
    fn typicality_margin_examples() {
        let m = typicality_margin(Rank::new(0, 1), &part(&[2, 1]), c(0.0)).unwrap();
        assert_eq!(m, c(1.0));
        let m = typicality_margin(Rank::new(1, 0), &part(&[1, 1]), c(2.5)).unwrap();
        assert_eq!(m, c(3.5));
    }

    #[test]
    fn margin_matches_inner_product_route() {
        // Independent route: (Lambda + c omega + rho | eps_{r+1} - delta_{s+1}).
        for &(r, s) in &[(1usize, 0usize), (0, 1), (1, 1), (2, 1)] {
            let rank = Rank::new(r, s);
            let cval = Complex64::new(0.37, 0.21);
            for mu in crate::diagrams::partitions_up_to(6) {
                if check_hook(rank, &mu).is_err() {
                    continue;
                }
                let lambda = weight_from_diagram(rank, &mu).unwrap();
                let shifted = lambda
                    .add(&omega(rank).scale(cval))
                    .unwrap()
                    .add(&rho(rank))
                    .unwrap();
                let dir = WeightVector::basis_eps(rank, rank.r + 1)
                    .sub(&WeightVector::basis_delta(rank, rank.s + 1))
                    .unwrap();
                let via_form = inner_product(&shifted, &dir).unwrap();
                let closed = typicality_margin(rank, &mu, cval).unwrap();
                assert!((via_form - closed).norm() < 1e-12, "mu={mu} rank=({r},{s})");
            }
        }
    }

    #[test]
    fn dimension_examples() {
        let d = typical_dimension(
            Rank::new(1, 0),
            &KacDynkinLabel { b: vec![c(0.0), c(1.0)] },
        );
        assert_eq!(d, c(4.0));
        let d = typical_dimension(Rank::new(0, 0), &KacDynkinLabel { b: vec![c(3.0)] });
        assert_eq!(d, c(2.0));
        let d = typical_dimension(
            Rank::new(1, 1),
            &KacDynkinLabel { b: vec![c(1.0), Complex64::new(0.3, 0.8), c(1.0)] },
        );
        assert_eq!(d, c(64.0));
    }

    #[test]
    fn q_genericity_guard() {
        let rank = Rank::new(1, 0);
        assert!(ModelConfig::new(rank, Complex64::from_polar(1.0, 0.3), vec![]).is_err());
        assert!(ModelConfig::new(rank, c(1.3), vec![]).is_ok());
    }

    #[test]
    fn config_json_parsing() {
        let cfg = ModelConfig::from_json_str(
            r#"{"rank":{"r":1,"s":0},"q":{"re":1.3,"im":0.1},
                "sites":[{"w":{"re":0.0,"im":0.0},"b":{"re":1.0,"im":0.0}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.rank, Rank::new(1, 0));
        assert_eq!(cfg.n_sites(), 1);

        let random = ModelConfig::from_json_str(
            r#"{"rank":{"r":0,"s":1},"q":"random","seed":7}"#,
        )
        .unwrap();
        let again = ModelConfig::from_json_str(
            r#"{"rank":{"r":0,"s":1},"q":"random","seed":7}"#,
        )
        .unwrap();
        assert_eq!(random.q, again.q);
        assert!(random.q.norm() >= 1.1 && random.q.norm() <= 2.0);

        assert!(ModelConfig::from_json_str(r#"{"rank":{"r":0,"s":1},"q":"rando"}"#).is_err());
        assert!(ModelConfig::from_json_str("not json").is_err());
        // |q| = 1 rejected unless overridden.
        assert!(ModelConfig::from_json_str(
            r#"{"rank":{"r":0,"s":1},"q":{"re":1.0,"im":0.0}}"#
        )
        .is_err());
        assert!(ModelConfig::from_json_str(
            r#"{"rank":{"r":0,"s":1},"q":{"re":1.0,"im":0.0},"allow_unimodular_q":true}"#
        )
        .is_ok());
    }

    proptest! {
        #[test]
        fn form_is_bilinear_and_symmetric(
            xs in proptest::collection::vec(-5.0f64..5.0, 5),
            ys in proptest::collection::vec(-5.0f64..5.0, 5),
            t in -3.0f64..3.0,
        ) {
            let rank = Rank::new(1, 1);
            let mk = |v: &[f64]| WeightVector {
                eps: vec![c(v[0]), c(v[1])],
                delta: vec![c(v[2]), c(v[3])],
            };
            let x = mk(&xs);
            let y = mk(&ys);
            let xy = inner_product(&x, &y).unwrap();
            let yx = inner_product(&y, &x).unwrap();
            prop_assert!((xy - yx).norm() < 1e-10);
            let scaled = inner_product(&x.scale(c(t)), &y).unwrap();
            prop_assert!((scaled - xy * t).norm() < 1e-9);
            let z = WeightVector::basis_eps(rank, 1);
            let sum = inner_product(&x.add(&z).unwrap(), &y).unwrap();
            let parts = xy + inner_product(&z, &y).unwrap();
            prop_assert!((sum - parts).norm() < 1e-9);
        }
    }
}
