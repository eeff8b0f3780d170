//! Exact rational checks of the exponent conditions behind the boundedness
//! argument: the critical saturation exponent, the Stokes regularity
//! condition, Gagliardo-Nirenberg exponents and the `l̃₀` feasibility lemma.
//!
//! Everything here is exact; no floating point is involved.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parse `"13/8"`, `"3"` or `"-1/2"`.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Domain(format!("not a rational number: {s:?}"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Q::new(n, d))
}

/// `"n/d"` in lowest terms.
pub fn to_string(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Critical blow-up exponent `1 − 2/N`.
pub fn critical_alpha(n: i64) -> Result<Q> {
    if n <= 0 {
        return Err(Error::Domain(format!("dimension must be positive, got {n}")));
    }
    Ok(Q::one() - q(2, n))
}

/// Stokes regularity condition in three dimensions: `l < 3r/(3−r)` for
/// `r < 3`, any `l` otherwise.
pub fn stokes_admissible(l: &Q, r: &Q) -> bool {
    let three = qi(3);
    if r < &three {
        l < &(&three * r / (&three - r))
    } else {
        true
    }
}

/// A Gagliardo-Nirenberg configuration
/// `‖D^j f‖_{L^P} ≤ C ‖D^m f‖_{L^r}^a ‖f‖_{L^s}^{1−a}` in `ℝ^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnTriple {
    pub target_order: u32,
    pub target_p: Q,
    pub high_order: u32,
    pub high_p: Q,
    pub low_p: Q,
    pub n: i64,
}

/// Solve `1/P = j/N + a(1/r − m/N) + (1−a)/s` for `a`:
/// `a = (j/N + 1/s − 1/P) / (m/N + 1/s − 1/r)`, required to lie in `[j/m, 1]`.
pub fn gn_exponent(t: &GnTriple) -> Result<Q> {
    if t.n <= 0 {
        return Err(Error::Domain("GN: dimension must be positive".into()));
    }
    if t.high_order == 0 || t.target_order >= t.high_order {
        return Err(Error::Domain(format!(
            "GN: need 0 <= j < m, got j = {}, m = {}",
            t.target_order, t.high_order
        )));
    }
    for (name, p) in [("target", &t.target_p), ("high", &t.high_p), ("low", &t.low_p)] {
        if p < &Q::one() {
            return Err(Error::Domain(format!("GN: {name} exponent {} must be >= 1", to_string(p))));
        }
    }
    let nn = qi(t.n);
    let j = qi(t.target_order as i64) / &nn;
    let m = qi(t.high_order as i64) / &nn;
    let num = &j + t.low_p.recip() - t.target_p.recip();
    let den = &m + t.low_p.recip() - t.high_p.recip();
    if den.is_zero() {
        return Err(Error::Domain("GN: scaling denominator m/N + 1/s − 1/r vanishes".into()));
    }
    let a = num / den;
    let lower = qi(t.target_order as i64) / qi(t.high_order as i64);
    if a < lower || a > Q::one() {
        return Err(Error::Domain(format!(
            "GN: exponent a = {} violates {} <= a <= 1",
            to_string(&a),
            to_string(&lower)
        )));
    }
    Ok(a)
}

/// First-order interpolation `‖f‖_{L^{p_target}} ≤ ‖∇f‖_{L^{p_grad}}^a ‖f‖_{L^{p_low}}^{1−a}`.
pub fn gn_interpolation_exponent(p_target: &Q, p_grad: &Q, p_low: &Q, n: i64) -> Result<Q> {
    gn_exponent(&GnTriple {
        target_order: 0,
        target_p: p_target.clone(),
        high_order: 1,
        high_p: p_grad.clone(),
        low_p: p_low.clone(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentQuery {
    pub p: Q,
    pub alpha: Q,
    pub theta: Q,
    pub n: i64,
    pub l: Q,
    pub r: Q,
}

impl ExponentQuery {
    /// `p = 13/8`, `θ = 3/2`, `N = 3` at the given `α`.
    pub fn standard(alpha: Q) -> Self {
        Self {
            p: q(13, 8),
            alpha,
            theta: q(3, 2),
            n: 3,
            l: qi(1),
            r: qi(1),
        }
    }

    /// `θ' = θ/(θ−1)`.
    pub fn theta_prime(&self) -> Q {
        &self.theta / (&self.theta - Q::one())
    }

    /// `p + 1 − α`.
    pub fn q_exp(&self) -> Q {
        &self.p + Q::one() - &self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub feasible: bool,
    pub witness: Option<Q>,
    /// Left side at the witness (or at the last candidate tried).
    pub lhs_value: Q,
    /// `1 − lhs_value`.
    pub margin: Q,
    /// Gradient interpolation exponent `a`.
    pub a: Q,
    /// Velocity interpolation exponent `ã` at the witness.
    pub a_tilde: Q,
    /// `24/55 < 1/(p+1−α) ≤ 8/15`.
    pub bracket_holds: bool,
    /// `1 − ã = (2/3 − 1/(θ'(p+1−α))) / (1/l̃₀ + 2/3 − 1/(p+1−α))` at the witness.
    pub identity_holds: bool,
}

/// `a = (5/6 − 1/(θ'q)) / (7/6 − 1/q)` with `q = p + 1 − α`, as displayed.
pub fn a_displayed(query: &ExponentQuery) -> Q {
    let qq = query.q_exp();
    (q(5, 6) - (query.theta_prime() * &qq).recip()) / (q(7, 6) - qq.recip())
}

/// `ã = (1/l − 1/(θq)) / (1/l + 2/3 − 1/q)`, as displayed.
pub fn a_tilde_displayed(query: &ExponentQuery, l: &Q) -> Q {
    let qq = query.q_exp();
    (l.recip() - (&query.theta * &qq).recip()) / (l.recip() + q(2, 3) - qq.recip())
}

/// `a` from the general GN bookkeeping: `∇c ∈ L^{θ'q}` between `D²c ∈ L^q`
/// and `c ∈ L²` in three dimensions.
pub fn a_from_gn(query: &ExponentQuery) -> Result<Q> {
    let qq = query.q_exp();
    gn_exponent(&GnTriple {
        target_order: 1,
        target_p: query.theta_prime() * &qq,
        high_order: 2,
        high_p: qq,
        low_p: qi(2),
        n: query.n,
    })
}

/// `ã` from the general GN bookkeeping: `u ∈ L^{θq}` between `D²u ∈ L^q`
/// and `u ∈ L^l`.
pub fn a_tilde_from_gn(query: &ExponentQuery, l: &Q) -> Result<Q> {
    let qq = query.q_exp();
    gn_exponent(&GnTriple {
        target_order: 0,
        target_p: &query.theta * &qq,
        high_order: 2,
        high_p: qq,
        low_p: l.clone(),
        n: query.n,
    })
}

/// Left side `a + ã(l)` of the feasibility inequality.
pub fn l0_lhs(query: &ExponentQuery, l: &Q) -> Q {
    a_displayed(query) + a_tilde_displayed(query, l)
}

pub const WITNESS_MAX_DENOMINATOR: i64 = 10_000;

/// Search `l̃₀ ∈ (59/20, 3)` with `a + ã(l̃₀) < 1`.
///
/// The mesh is `k/den` for denominators `1..=10⁴`. The left side is strictly
/// decreasing in `l` (its derivative in `1/l` has the sign of
/// `2/3 − 1/(θ'q) > 0`), so only the largest numerator below `3·den` matters
/// per denominator, and the point `(3·10⁴ − 1)/10⁴` settles feasibility of
/// the whole mesh. The witness is the feasible point of smallest denominator.
pub fn lemma_l0_feasibility(query: &ExponentQuery) -> Result<FeasibilityResult> {
    let third = q(1, 3);
    if query.alpha <= third || query.alpha > q(3, 4) {
        return Err(Error::Domain(format!(
            "alpha = {} lies outside (1/3, 3/4]",
            to_string(&query.alpha)
        )));
    }
    if query.theta <= Q::one() {
        return Err(Error::Domain("theta must exceed 1".into()));
    }
    let qq = query.q_exp();
    if qq <= Q::one() {
        return Err(Error::Domain("p + 1 − alpha must exceed 1".into()));
    }
    let inv = qq.recip();
    let bracket_holds = q(24, 55) < inv && inv <= q(8, 15);
    if q(2, 3) - (query.theta_prime() * &qq).recip() <= Q::zero() {
        return Err(Error::Domain(
            "the witness search needs 2/3 > 1/(θ'(p+1−α)), which makes the left side monotone in l".into(),
        ));
    }

    let lo = q(59, 20);
    let hi = qi(3);
    let a = a_displayed(query);
    let identity = |l: &Q, a_tilde: &Q| {
        let rhs = (q(2, 3) - (query.theta_prime() * &qq).recip()) / (l.recip() + q(2, 3) - &inv);
        Q::one() - a_tilde == rhs
    };
    // The left side decreases in l, so the mesh point closest to 3 decides
    // feasibility before the scan for the smallest-denominator witness.
    let best = Q::new(BigInt::from(3 * WITNESS_MAX_DENOMINATOR - 1), BigInt::from(WITNESS_MAX_DENOMINATOR));
    let best_lhs = l0_lhs(query, &best);
    if best_lhs >= Q::one() {
        let a_tilde = a_tilde_displayed(query, &best);
        return Ok(FeasibilityResult {
            feasible: false,
            witness: None,
            margin: Q::one() - &best_lhs,
            lhs_value: best_lhs,
            identity_holds: identity(&best, &a_tilde),
            a,
            a_tilde,
            bracket_holds,
        });
    }
    for den in 1..=WITNESS_MAX_DENOMINATOR {
        // largest numerator with k/den < 3, which must also exceed 59/20
        let k = 3 * den - 1;
        let l = Q::new(BigInt::from(k), BigInt::from(den));
        if l <= lo {
            continue;
        }
        debug_assert!(l < hi);
        let a_tilde = a_tilde_displayed(query, &l);
        let lhs = &a + &a_tilde;
        if lhs < Q::one() {
            return Ok(FeasibilityResult {
                feasible: true,
                identity_holds: identity(&l, &a_tilde),
                witness: Some(l),
                margin: Q::one() - &lhs,
                lhs_value: lhs,
                a,
                a_tilde,
                bracket_holds,
            });
        }
    }
    unreachable!("the largest mesh point was checked to be a witness")
}

/// `α_k = 1/3 + k (3/4 − 1/3)/count` for `k = 1..=count`, spanning `(1/3, 3/4]`.
pub fn alpha_samples(count: i64) -> Vec<Q> {
    let width = q(3, 4) - q(1, 3);
    (1..=count).map(|k| q(1, 3) + &width * q(k, count)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaCertificate {
    pub alpha: String,
    pub feasible: bool,
    pub witness: Option<String>,
    pub lhs_numerator: String,
    pub lhs_denominator: String,
    pub a: String,
    pub a_tilde: String,
    pub bracket_holds: bool,
    pub identity_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    pub p: String,
    pub critical_alpha_3d: String,
    pub critical_alpha_2d: String,
    pub all_feasible: bool,
    pub samples: Vec<AlphaCertificate>,
}

/// Feasibility certificates for `count` α samples at the given `p`.
pub fn certify(p: &Q, count: i64) -> Result<ExponentReport> {
    let mut samples = Vec::new();
    for alpha in alpha_samples(count) {
        let mut query = ExponentQuery::standard(alpha.clone());
        query.p = p.clone();
        let r = lemma_l0_feasibility(&query)?;
        samples.push(AlphaCertificate {
            alpha: to_string(&alpha),
            feasible: r.feasible,
            witness: r.witness.as_ref().map(to_string),
            lhs_numerator: r.lhs_value.numer().to_string(),
            lhs_denominator: r.lhs_value.denom().to_string(),
            a: to_string(&r.a),
            a_tilde: to_string(&r.a_tilde),
            bracket_holds: r.bracket_holds,
            identity_holds: r.identity_holds,
        });
    }
    Ok(ExponentReport {
        p: to_string(p),
        critical_alpha_3d: to_string(&critical_alpha(3)?),
        critical_alpha_2d: to_string(&critical_alpha(2)?),
        all_feasible: samples.iter().all(|s| s.feasible),
        samples,
    })
}
