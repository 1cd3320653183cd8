//! Exact enumeration of sum-product patterns and the big-integer size
//! thresholds guaranteeing them.
//!
//! Counting is naive O(|F|²) over (u, v) pairs — comfortably inside
//! the order cap — and every threshold with a fractional exponent is
//! compared after raising both sides to the minimal integer power
//! clearing denominators, never in floating point.

use crate::field::{Field, FieldError, Poly};
use crate::space::Subset;
use serde::Serialize;
use thiserror::Error;

/// Witness lists stop growing past this length.
pub const WITNESS_CAP: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternsError {
    #[error("polynomial is not admissible for this field")]
    InadmissiblePolynomial,
    #[error("s must stay below the smallest set size")]
    SThresholdTooLarge,
    #[error(transparent)]
    Field(#[from] FieldError),
}

use num_bigint::BigUint;

/// An exact size-threshold comparison. `vacuous` marks hypotheses no
/// subsets of this field can meet.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdCheck {
    pub variant: String,
    pub met: bool,
    pub lhs: String,
    pub rhs: String,
    pub vacuous: bool,
}

fn threshold_check(
    variant: &str,
    lhs: BigUint,
    rhs: BigUint,
    strict: bool,
    max_lhs: BigUint,
) -> ThresholdCheck {
    let met = if strict { lhs > rhs } else { lhs >= rhs };
    let vacuous = if strict {
        max_lhs <= rhs
    } else {
        max_lhs < rhs
    };
    ThresholdCheck {
        variant: variant.to_string(),
        met,
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
        vacuous,
    }
}

/// |E||G| > 2(q+2)·|F|^{2−1/2^{q−1}}, raised to the 2^{q−1} power:
/// (|E||G|)^{2^{q−1}} > (2(q+2))^{2^{q−1}} · |F|^{2^q−1}.
pub fn pairs_threshold(field: &Field, q: u32, size_e: u64, size_g: u64) -> ThresholdCheck {
    assert!(q >= 1, "pattern polynomials are non-constant");
    assert!(q <= 32, "threshold exponent 2^(q-1) out of supported range");
    let e = 1u32 << (q - 1);
    let lhs = BigUint::from(size_e * size_g).pow(e);
    let order = BigUint::from(field.order());
    let rhs = BigUint::from(2 * (q as u64 + 2)).pow(e) * order.pow(2 * e - 1);
    let max_lhs = BigUint::from(field.order() * field.order()).pow(e);
    threshold_check(&format!("pairs-q{q}"), lhs, rhs, true, max_lhs)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ShkredovVariant {
    /// |B₁||B₂||B₃| > 7|F|^{5/2} for subsets of F*.
    Strict7,
    /// |B₁||B₂||B₃| ≥ 8|F|^{5/2} for arbitrary subsets of F.
    Weak8,
}

impl ShkredovVariant {
    pub fn label(self) -> &'static str {
        match self {
            ShkredovVariant::Strict7 => "strict7",
            ShkredovVariant::Weak8 => "weak8",
        }
    }
}

/// (s₁s₂s₃)² against 49·|F|⁵ (strict) or 64·|F|⁵ (weak, ≥ semantics).
pub fn shkredov_threshold(
    field: &Field,
    sizes: [u64; 3],
    variant: ShkredovVariant,
) -> ThresholdCheck {
    let prod = BigUint::from(sizes[0]) * BigUint::from(sizes[1]) * BigUint::from(sizes[2]);
    let lhs = &prod * &prod;
    let order5 = BigUint::from(field.order()).pow(5);
    let (coeff, strict, max_size) = match variant {
        ShkredovVariant::Strict7 => (49u32, true, field.order() - 1),
        ShkredovVariant::Weak8 => (64u32, false, field.order()),
    };
    let rhs = BigUint::from(coeff) * order5;
    let max_prod = BigUint::from(max_size).pow(3);
    let max_lhs = &max_prod * &max_prod;
    threshold_check(variant.label(), lhs, rhs, strict, max_lhs)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCounts {
    /// Pairs with u, v ∈ F*: uv ∈ E and p(u)+v ∈ G.
    pub strict: u64,
    /// Pairs with u ∈ F*, v ∈ F — the count the derivation delivers.
    pub relaxed: u64,
    /// Strict witnesses (u, v), capped.
    pub witnesses: Vec<(u32, u32)>,
}

/// Counts {p(u)+v, uv} hits: uv ∈ E and p(u)+v ∈ G.
pub fn count_product_sum_pairs(
    field: &Field,
    p: &Poly,
    e: &Subset,
    g: &Subset,
) -> Result<PairCounts, PatternsError> {
    if !field.is_admissible(p) {
        return Err(PatternsError::InadmissiblePolynomial);
    }
    let mut strict = 0u64;
    let mut relaxed = 0u64;
    let mut witnesses = Vec::new();
    for u in field.star() {
        let pu = field.eval_poly(p, u)?;
        for v in field.elems() {
            if e.contains_elem(field.mul(u, v)) && g.contains_elem(field.add(pu, v)) {
                relaxed += 1;
                if v.index() != 0 {
                    strict += 1;
                    if witnesses.len() < WITNESS_CAP {
                        witnesses.push((u.index(), v.index()));
                    }
                }
            }
        }
    }
    Ok(PairCounts {
        strict,
        relaxed,
        witnesses,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TripleCounts {
    /// Pairs (u, v) ∈ F*×F* with v ∈ B₁, u+v ∈ B₂, uv ∈ B₃.
    pub count: u64,
    pub witnesses: Vec<(u32, u32)>,
}

/// Counts the triple pattern {v, u+v, uv} across three sets.
pub fn count_shkredov_triples(
    field: &Field,
    b1: &Subset,
    b2: &Subset,
    b3: &Subset,
) -> TripleCounts {
    let mut count = 0u64;
    let mut witnesses = Vec::new();
    for u in field.star() {
        for v in field.star() {
            if b1.contains_elem(v)
                && b2.contains_elem(field.add(u, v))
                && b3.contains_elem(field.mul(u, v))
            {
                count += 1;
                if witnesses.len() < WITNESS_CAP {
                    witnesses.push((u.index(), v.index()));
                }
            }
        }
    }
    TripleCounts { count, witnesses }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadCounts {
    /// Pairs (u, v) ∈ F*×F* with u, v, u+v, uv all in A.
    pub count: u64,
    pub witnesses: Vec<(u32, u32)>,
}

/// Counts quadruples {u, v, u+v, uv} inside one set.
pub fn count_quadruples(field: &Field, a: &Subset) -> QuadCounts {
    let mut count = 0u64;
    let mut witnesses = Vec::new();
    for u in a.iter() {
        if u == 0 {
            continue;
        }
        let ue = field.elem(u as u64).expect("member index");
        for v in a.iter() {
            if v == 0 {
                continue;
            }
            let ve = field.elem(v as u64).expect("member index");
            if a.contains_elem(field.add(ue, ve)) && a.contains_elem(field.mul(ue, ve)) {
                count += 1;
                if witnesses.len() < WITNESS_CAP {
                    witnesses.push((u, v));
                }
            }
        }
    }
    QuadCounts { count, witnesses }
}

#[derive(Clone, Debug)]
pub struct ShkredovReturnSet {
    /// u ∈ F* with more than s witnesses v: v ∈ B₁, u+v ∈ B₂, uv ∈ B₃.
    pub d: Subset,
    /// (|B₁||B₂||B₃||F*|/|F|² − √(7|B₁||B₂||B₃||F*|²/|F|^{3/2}) − s|F*|)/ℓ
    pub lower_bound: f64,
    pub per_u_counts: Vec<u64>,
}

/// The return set for the triple pattern at witness threshold s.
pub fn shkredov_return_set(
    field: &Field,
    b1: &Subset,
    b2: &Subset,
    b3: &Subset,
    s: u64,
) -> Result<ShkredovReturnSet, PatternsError> {
    let sizes = [b1.size(), b2.size(), b3.size()];
    let ell = *sizes.iter().min().expect("three sizes");
    if s >= ell {
        return Err(PatternsError::SThresholdTooLarge);
    }
    let n = field.order();
    let mut d = Subset::empty(field);
    let mut per_u_counts = vec![0u64; field.size()];
    for u in field.star() {
        // v ∈ B₁ ∩ (B₂ − u) ∩ B₃/u, counted exactly via bitsets.
        let b2_shift = b2.translate(field, field.neg(u));
        let b3_div = b3.scale(field, field.inv(u)?).expect("inverse is nonzero");
        let count = b1.intersect_count(&b2_shift.intersect(&b3_div));
        per_u_counts[u.idx()] = count;
        if count > s {
            d.insert(u.index());
        }
    }

    let prod = (sizes[0] * sizes[1] * sizes[2]) as f64;
    let star = (n - 1) as f64;
    let nf = n as f64;
    let lower_bound = (prod * star / (nf * nf)
        - (7.0 * prod * star * star / nf.powf(1.5)).sqrt()
        - s as f64 * star)
        / ell as f64;
    Ok(ShkredovReturnSet {
        d,
        lower_bound,
        per_u_counts,
    })
}
