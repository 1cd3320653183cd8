//! The finitistic colouring machinery: colour-class schedules, the
//! product space C₁ × ⋯ × C_{r'} under the diagonal action, and
//! monochromatic pattern search.
//!
//! Product-space quantities are always computed by per-coordinate
//! factorization — under the diagonal action the intersection measure
//! of transformed product sets is the product of per-coordinate
//! measures — so |F|^{r'+1} grid work collapses to r'·|F|² set work
//! and nothing is ever materialized. Grids appear only as test
//! oracles.

use crate::field::{Elem, Field, FieldError, Poly};
use crate::rng::{child_seed, SplitMix64};
use crate::space::{
    balanced_indicator, kahan_sum, rational_to_f64, GridFn, KahanCell, ProductSet, Rational,
    SetRule, SpaceError, Subset,
};
use num_bigint::{BigInt, BigUint};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Witness lists stop growing past this length.
pub const WITNESS_CAP: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ColouringError {
    #[error("polynomial is not admissible for this field")]
    InadmissiblePolynomial,
    #[error("scaling by zero is not a group action")]
    ZeroScale,
    #[error("s must stay below ν(C)·|F*|")]
    DeltaTooLarge,
    #[error("bad colouring rule: {0}")]
    BadRule(String),
    #[error("grid too large for this dimension and order")]
    GridTooLarge,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// An r-colouring of F with colour-class extraction.
#[derive(Clone, Debug)]
pub struct Colouring {
    r: usize,
    assignment: Vec<u32>,
    /// One subset per original colour index.
    classes: Vec<Subset>,
    /// Colour indices sorted by descending class size, ties broken by
    /// the original colour index so the schedule is deterministic.
    sorted: Vec<usize>,
}

impl Colouring {
    pub fn new(field: &Field, r: usize, assignment: Vec<u32>) -> Result<Colouring, ColouringError> {
        if r == 0 || assignment.len() != field.size() {
            return Err(ColouringError::BadRule(format!(
                "assignment must give one of {r} colours to each of {} elements",
                field.size()
            )));
        }
        if assignment.iter().any(|&c| c as usize >= r) {
            return Err(ColouringError::BadRule("colour index out of range".into()));
        }
        let mut classes = vec![Subset::empty(field); r];
        for (i, &c) in assignment.iter().enumerate() {
            classes[c as usize].insert(i as u32);
        }
        let mut sorted: Vec<usize> = (0..r).collect();
        sorted.sort_by_key(|&c| (std::cmp::Reverse(classes[c].size()), c));
        Ok(Colouring {
            r,
            assignment,
            classes,
            sorted,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn colour_of(&self, index: u32) -> usize {
        self.assignment[index as usize] as usize
    }

    pub fn class(&self, colour: usize) -> &Subset {
        &self.classes[colour]
    }

    /// Colour indices in descending class-size order.
    pub fn sorted_colours(&self) -> &[usize] {
        &self.sorted
    }

    pub fn sorted_sizes(&self) -> Vec<u64> {
        self.sorted
            .iter()
            .map(|&c| self.classes[c].size())
            .collect()
    }
}

/// The two double-exponential size schedules.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum Schedule {
    /// Exponents 1, 4, 8, …, 2^j.
    Pow2,
    /// Exponents 1, 16, 64, …, 4^j.
    Pow4,
}

impl Schedule {
    /// Exponent e_j in the requirement |C_j| ≥ |F| / r^{e_j} (j ≥ 1).
    pub fn exponent(self, j: usize) -> u64 {
        match (self, j) {
            (_, 1) => 1,
            (Schedule::Pow2, j) => 1u64 << j,
            (Schedule::Pow4, j) => 1u64 << (2 * j),
        }
    }

    pub fn exponent_sum(self, r_prime: usize) -> u64 {
        (1..=r_prime).map(|j| self.exponent(j)).sum()
    }

    /// The exponent 2^{(r'+1)}−1 (resp. 4^{(r'+1)}−1) of the tail bound.
    pub fn tail_exponent(self, r_prime: usize) -> u64 {
        match self {
            Schedule::Pow2 => (1u64 << (r_prime + 1)) - 1,
            Schedule::Pow4 => (1u64 << (2 * (r_prime + 1))) - 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Schedule::Pow2 => "2^j",
            Schedule::Pow4 => "4^j",
        }
    }
}

/// The selected prefix length r' and the product-set data derived
/// from it.
#[derive(Clone, Debug)]
pub struct ScheduleParams {
    pub schedule: Schedule,
    pub r_prime: usize,
    /// ν(C) = Π_{j ≤ r'} |C_j| / |F|^{r'}, exact.
    pub nu_c: Rational,
    pub sorted_colours: Vec<usize>,
    pub sorted_sizes: Vec<u64>,
    /// |C_{r'+1}| + ⋯ + |C_r|.
    pub tail_size: u64,
}

// size · r^e ≥ order, with the power cut off as soon as it clears.
fn schedule_met(size: u64, r: u64, e: u64, order: u64) -> bool {
    if size == 0 {
        return false;
    }
    if size >= order {
        return true;
    }
    let need = order.div_ceil(size);
    let mut acc = 1u64;
    for _ in 0..e {
        acc = acc.saturating_mul(r);
        if acc >= need {
            return true;
        }
    }
    false
}

/// Sorts the colour classes and selects the largest prefix length r'
/// meeting the schedule; all comparisons are exact integers.
pub fn select_r_prime(field: &Field, colouring: &Colouring, schedule: Schedule) -> ScheduleParams {
    let sorted_sizes = colouring.sorted_sizes();
    let order = field.order();
    let r = colouring.r() as u64;
    let mut r_prime = 1;
    for j in 2..=colouring.r() {
        if schedule_met(sorted_sizes[j - 1], r, schedule.exponent(j), order) {
            r_prime = j;
        } else {
            break;
        }
    }
    let mut num = BigInt::from(1u32);
    for size in &sorted_sizes[..r_prime] {
        num *= BigInt::from(*size);
    }
    let nu_c = Rational::new(num, BigInt::from(order).pow(r_prime as u32));
    let tail_size = sorted_sizes[r_prime..].iter().sum();
    ScheduleParams {
        schedule,
        r_prime,
        nu_c,
        sorted_colours: colouring.sorted_colours().to_vec(),
        sorted_sizes,
        tail_size,
    }
}

/// The prefix product set C₁ × ⋯ × C_{r'} of sorted classes.
pub fn prefix_product(colouring: &Colouring, params: &ScheduleParams) -> ProductSet {
    ProductSet::new(
        params.sorted_colours[..params.r_prime]
            .iter()
            .map(|&c| colouring.class(c).clone())
            .collect(),
    )
}

/// ν(C ∩ M_u A_{−p(u)} C) = Π_j μ(C_j ∩ u·(C_j − p(u))), exact and
/// never materialized.
pub fn product_recurrence_measure(
    field: &Field,
    p: &Poly,
    c: &ProductSet,
    u: Elem,
) -> Result<Rational, ColouringError> {
    if !field.is_admissible(p) {
        return Err(ColouringError::InadmissiblePolynomial);
    }
    if u == Elem::ZERO {
        return Err(ColouringError::ZeroScale);
    }
    let pu = field.eval_poly(p, u)?;
    let shift = field.neg(field.mul(u, pu));
    let mut num = BigInt::from(1u32);
    for cj in c.factors() {
        let moved = cj.affine_image(field, u, shift)?;
        num *= BigInt::from(cj.intersect_count(&moved));
    }
    Ok(Rational::new(num, BigInt::from(field.order()).pow(c.m())))
}

/// ν(B ∩ A_{−u} B ∩ M_{1/u} B) = Π_j μ(B_j ∩ (B_j − u) ∩ B_j/u).
pub fn product_triple_measure(
    field: &Field,
    b: &ProductSet,
    u: Elem,
) -> Result<Rational, ColouringError> {
    if u == Elem::ZERO {
        return Err(ColouringError::ZeroScale);
    }
    let inv_u = field.inv(u)?;
    let neg_u = field.neg(u);
    let mut num = BigInt::from(1u32);
    for bj in b.factors() {
        let shifted = bj.translate(field, neg_u);
        let divided = bj.scale(field, inv_u)?;
        num *= BigInt::from(bj.intersect_count(&shifted.intersect(&divided)));
    }
    Ok(Rational::new(num, BigInt::from(field.order()).pow(b.m())))
}

/// A monochromatic witness: the pattern built from (u, v) lies inside
/// the class with the original colour index `colour`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MonoWitness {
    pub colour: usize,
    pub u: u32,
    pub v: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchVia {
    Proof,
    Direct,
    Both,
}

#[derive(Clone, Debug)]
pub struct TripleSearch {
    pub params: ScheduleParams,
    pub s: u64,
    /// |{u ∈ F*: ν(C ∩ M_u A_{−p(u)} C) > s/|F*|}|, exact comparisons.
    pub d_size: u64,
    /// Guaranteed lower bound on |D|: ν(C)|F*| − √(2(q+2))·|F*|^{1−1/2^q} − s/ν(C).
    pub d_lower_bound: f64,
    /// Does |D| exceed the tail mass |C_{r'+1}| + ⋯ + |C_r|? When it
    /// does, a prefix class must contain a pattern.
    pub gap_fired: bool,
    /// The schedule feasibility display at this field size:
    /// (r²−1)/r^{2^{(r'+1)}−1} against the three shrinking terms.
    pub gate_lhs: f64,
    pub gate_rhs: f64,
    pub gate_satisfied: bool,
    pub proof_witness_count: Option<u64>,
    pub proof_witnesses: Option<Vec<MonoWitness>>,
    pub direct_count: Option<u64>,
    pub direct_witnesses: Option<Vec<MonoWitness>>,
    /// Every proof witness re-verified by direct colour evaluation,
    /// and the direct count dominates the proof count.
    pub consistent: Option<bool>,
}

fn verify_triple(field: &Field, colouring: &Colouring, p: &Poly, w: &MonoWitness) -> bool {
    let u = Elem::from_raw(w.u);
    let v = Elem::from_raw(w.v);
    let pu = field.eval_poly(p, u).expect("witness in field");
    colouring.colour_of(w.u) == w.colour
        && colouring.colour_of(field.add(pu, v).index()) == w.colour
        && colouring.colour_of(field.mul(u, v).index()) == w.colour
}

/// Monochromatic {u, p(u)+v, uv} search; the derivation route goes
/// through the return-time set of the prefix product space, the
/// direct route scans all (colour, u, v) triples.
pub fn monochromatic_triple_search(
    field: &Field,
    colouring: &Colouring,
    p: &Poly,
    s: u64,
    via: SearchVia,
) -> Result<TripleSearch, ColouringError> {
    if !field.is_admissible(p) {
        return Err(ColouringError::InadmissiblePolynomial);
    }
    let params = select_r_prime(field, colouring, Schedule::Pow2);
    let star = field.order() - 1;
    let delta = Rational::new(BigInt::from(s), BigInt::from(star));
    if delta >= params.nu_c {
        return Err(ColouringError::DeltaTooLarge);
    }
    let c_prod = prefix_product(colouring, &params);

    let mut d = Subset::empty(field);
    for u in field.star() {
        if product_recurrence_measure(field, p, &c_prod, u)? > delta {
            d.insert(u.index());
        }
    }
    let d_size = d.size();
    let gap_fired = d_size > params.tail_size;

    let q = p.degree();
    let nu = rational_to_f64(&params.nu_c);
    let star_f = star as f64;
    let root_q = star_f.powf(-(-(q as f64)).exp2());
    let d_lower_bound =
        nu * star_f - (2.0 * (q as f64 + 2.0)).sqrt() * star_f * root_q - s as f64 / nu;

    // Feasibility of the schedule constant at this |F|:
    // (r²−1)/r^{2^{(r'+1)}−1} against √(2(q+2))/|F*|^{1/2^q}
    // + s/(|F*|ν(C)) + 1/(|F*|·r^{2^{(r'+1)}−1}).
    let r = colouring.r() as f64;
    let tail_pow = pow_f64(r, params.schedule.tail_exponent(params.r_prime));
    let gate_lhs = (r * r - 1.0) / tail_pow;
    let gate_rhs = (2.0 * (q as f64 + 2.0)).sqrt() * root_q
        + s as f64 / (star_f * nu)
        + 1.0 / (star_f * tail_pow);
    let gate_satisfied = gate_lhs >= gate_rhs;

    let run_proof = matches!(via, SearchVia::Proof | SearchVia::Both);
    let run_direct = matches!(via, SearchVia::Direct | SearchVia::Both);

    let (proof_witness_count, proof_witnesses) = if run_proof {
        let mut count = 0u64;
        let mut witnesses = Vec::new();
        for u_idx in d.iter() {
            let u = Elem::from_raw(u_idx);
            let sorted_pos = params
                .sorted_colours
                .iter()
                .position(|&c| c == colouring.colour_of(u_idx))
                .expect("colour present");
            if sorted_pos >= params.r_prime {
                continue;
            }
            let colour = params.sorted_colours[sorted_pos];
            let class = colouring.class(colour);
            // v ∈ C_j/u ∩ (C_j − p(u)), v ≠ 0.
            let pu = field.eval_poly(p, u)?;
            let candidates = class
                .scale(field, field.inv(u)?)?
                .intersect(&class.translate(field, field.neg(pu)));
            for v in candidates.iter() {
                if v == 0 {
                    continue;
                }
                count += 1;
                if witnesses.len() < WITNESS_CAP {
                    witnesses.push(MonoWitness {
                        colour,
                        u: u_idx,
                        v,
                    });
                }
            }
        }
        (Some(count), Some(witnesses))
    } else {
        (None, None)
    };

    let (direct_count, direct_witnesses) = if run_direct {
        let mut count = 0u64;
        let mut witnesses = Vec::new();
        for u in field.star() {
            let colour = colouring.colour_of(u.index());
            let pu = field.eval_poly(p, u)?;
            for v in field.star() {
                if colouring.colour_of(field.add(pu, v).index()) == colour
                    && colouring.colour_of(field.mul(u, v).index()) == colour
                {
                    count += 1;
                    if witnesses.len() < WITNESS_CAP {
                        witnesses.push(MonoWitness {
                            colour,
                            u: u.index(),
                            v: v.index(),
                        });
                    }
                }
            }
        }
        (Some(count), Some(witnesses))
    } else {
        (None, None)
    };

    let consistent = match (&proof_witnesses, direct_count) {
        (Some(ws), Some(dc)) => Some(
            ws.iter().all(|w| verify_triple(field, colouring, p, w))
                && proof_witness_count.unwrap_or(0) <= dc,
        ),
        (Some(ws), None) => Some(ws.iter().all(|w| verify_triple(field, colouring, p, w))),
        _ => None,
    };

    Ok(TripleSearch {
        params,
        s,
        d_size,
        d_lower_bound,
        gap_fired,
        gate_lhs,
        gate_rhs,
        gate_satisfied,
        proof_witness_count,
        proof_witnesses,
        direct_count,
        direct_witnesses,
        consistent,
    })
}

/// The conditional report of the quadruple search: the return-time
/// computation run under assumed norm-decay constants (b, c).
#[derive(Clone, Debug)]
pub struct QuadConditional {
    pub params: ScheduleParams,
    pub s: u64,
    pub conj_b: f64,
    pub conj_c: f64,
    pub d_size: u64,
    /// |D \ (C_{r'+1} ∪ ⋯ ∪ C_r)|.
    pub d_minus_tail: u64,
    /// c_r = (r¹²−1)/r^{4^{(r'+1)}−1} − δ·r^{Σe_j} − c/|F*|^b
    ///       − 1/(|F*|·r^{4^{(r'+1)}−1}).
    pub c_r: f64,
    /// Whether |D \ tail| ≥ c_r·|F*| held on this instance.
    pub bound_held: bool,
    pub proof_witness_count: u64,
    pub proof_witnesses: Vec<MonoWitness>,
}

#[derive(Clone, Debug)]
pub struct QuadSearch {
    /// Pairs (u, v) ∈ F*×F* with {u, v, u+v, uv} monochromatic.
    pub direct_count: u64,
    pub per_colour_counts: Vec<u64>,
    pub direct_witnesses: Vec<MonoWitness>,
    pub conditional: Option<QuadConditional>,
}

fn verify_quadruple(field: &Field, colouring: &Colouring, w: &MonoWitness) -> bool {
    let u = Elem::from_raw(w.u);
    let v = Elem::from_raw(w.v);
    colouring.colour_of(w.u) == w.colour
        && colouring.colour_of(w.v) == w.colour
        && colouring.colour_of(field.add(u, v).index()) == w.colour
        && colouring.colour_of(field.mul(u, v).index()) == w.colour
}

/// Monochromatic {u, v, u+v, uv} search. The direct scan always runs;
/// the schedule route runs only when conjectured decay constants are
/// supplied, and reports the constant c_r it yields.
pub fn gs_quadruple_search(
    field: &Field,
    colouring: &Colouring,
    s: u64,
    conj: Option<(f64, f64)>,
) -> Result<QuadSearch, ColouringError> {
    let mut direct_count = 0u64;
    let mut per_colour_counts = vec![0u64; colouring.r()];
    let mut direct_witnesses = Vec::new();
    for u in field.star() {
        let colour = colouring.colour_of(u.index());
        for v in field.star() {
            if colouring.colour_of(v.index()) == colour
                && colouring.colour_of(field.add(u, v).index()) == colour
                && colouring.colour_of(field.mul(u, v).index()) == colour
            {
                direct_count += 1;
                per_colour_counts[colour] += 1;
                if direct_witnesses.len() < WITNESS_CAP {
                    direct_witnesses.push(MonoWitness {
                        colour,
                        u: u.index(),
                        v: v.index(),
                    });
                }
            }
        }
    }

    let conditional = if let Some((conj_b, conj_c)) = conj {
        let params = select_r_prime(field, colouring, Schedule::Pow4);
        let star = field.order() - 1;
        // An oversized δ just empties the return set; no precondition.
        let delta = Rational::new(BigInt::from(s), BigInt::from(star));
        let c_prod = prefix_product(colouring, &params);
        let mut d = Subset::empty(field);
        for u in field.star() {
            if product_triple_measure(field, &c_prod, u)? > delta {
                d.insert(u.index());
            }
        }
        let d_size = d.size();

        let mut d_minus_tail = 0u64;
        let mut proof_witness_count = 0u64;
        let mut proof_witnesses = Vec::new();
        for u_idx in d.iter() {
            let sorted_pos = params
                .sorted_colours
                .iter()
                .position(|&c| c == colouring.colour_of(u_idx))
                .expect("colour present");
            if sorted_pos >= params.r_prime {
                continue;
            }
            d_minus_tail += 1;
            let colour = params.sorted_colours[sorted_pos];
            let class = colouring.class(colour);
            let u = Elem::from_raw(u_idx);
            // v ∈ C_j ∩ C_j/u ∩ (C_j − u), v ≠ 0.
            let candidates = class
                .intersect(&class.scale(field, field.inv(u)?)?)
                .intersect(&class.translate(field, field.neg(u)));
            for v in candidates.iter() {
                if v == 0 {
                    continue;
                }
                proof_witness_count += 1;
                if proof_witnesses.len() < WITNESS_CAP {
                    proof_witnesses.push(MonoWitness {
                        colour,
                        u: u_idx,
                        v,
                    });
                }
            }
        }

        let r = colouring.r() as f64;
        let star_f = star as f64;
        let tail_exp = params.schedule.tail_exponent(params.r_prime);
        let sum_exp = params.schedule.exponent_sum(params.r_prime);
        let delta_f = s as f64 / star_f;
        let c_r = (r.powi(12) - 1.0) / pow_f64(r, tail_exp)
            - delta_f * pow_f64(r, sum_exp)
            - conj_c / star_f.powf(conj_b)
            - 1.0 / (star_f * pow_f64(r, tail_exp));
        let bound_held = d_minus_tail as f64 >= c_r * star_f;
        debug_assert!(proof_witnesses
            .iter()
            .all(|w| verify_quadruple(field, colouring, w)));

        Some(QuadConditional {
            params,
            s,
            conj_b,
            conj_c,
            d_size,
            d_minus_tail,
            c_r,
            bound_held,
            proof_witness_count,
            proof_witnesses,
        })
    } else {
        None
    };

    Ok(QuadSearch {
        direct_count,
        per_colour_counts,
        direct_witnesses,
        conditional,
    })
}

fn pow_f64(base: f64, exp: u64) -> f64 {
    if exp <= i32::MAX as u64 {
        base.powi(exp as i32)
    } else {
        f64::INFINITY
    }
}

/// The exact closing constant of a schedule:
/// (r²−1)/r^{2^{(r'+1)}−1} for the 2^j schedule,
/// (r¹²−1)/r^{4^{(r'+1)}−1} for the 4^j schedule.
pub fn schedule_gap_constant(schedule: Schedule, r: u64, r_prime: usize) -> Rational {
    let g = match schedule {
        Schedule::Pow2 => 2u32,
        Schedule::Pow4 => 12u32,
    };
    let tail = schedule.tail_exponent(r_prime);
    Rational::new(
        BigInt::from(BigUint::from(r).pow(g) - BigUint::from(1u32)),
        BigInt::from(BigUint::from(r).pow(u32::try_from(tail).expect("tail exponent fits u32"))),
    )
}

/// ⟨g, P_M(P_A g · g)⟩ for the indicator of a product set, computed by
/// the factorized double sum, with its guaranteed floor ν(B)⁴. Both
/// sides exact.
#[derive(Clone, Debug)]
pub struct GsLowerTerm {
    pub value: Rational,
    pub floor: Rational,
    pub holds: bool,
}

pub fn gs_lower_term(field: &Field, b: &ProductSet) -> Result<GsLowerTerm, ColouringError> {
    let order = field.order();
    let m = b.m();
    // Σ_{t∈F} Σ_{v∈F*} Π_j |B_j ∩ v·(B_j + t) ∩ v·B_j|, v-major so the
    // scaled copies are built once per v.
    let star: Vec<Elem> = field.star().collect();
    let partials: Vec<BigUint> = star
        .par_iter()
        .map(|&v| {
            let scaled: Vec<Subset> = b
                .factors()
                .iter()
                .map(|bj| bj.scale(field, v).expect("v is nonzero"))
                .collect();
            let mut acc = BigUint::ZERO;
            for t in field.elems() {
                let vt = field.mul(v, t);
                let mut prod = BigUint::from(1u32);
                for (bj, vbj) in b.factors().iter().zip(&scaled) {
                    // v·(B_j + t) = v·B_j + v·t
                    let moved = vbj.translate(field, vt);
                    let count = bj.intersect_count(&moved.intersect(vbj));
                    if count == 0 {
                        prod = BigUint::ZERO;
                        break;
                    }
                    prod *= BigUint::from(count);
                }
                acc += prod;
            }
            acc
        })
        .collect();
    let total: BigUint = partials.into_iter().sum();

    let den = BigUint::from(order).pow(m) * BigUint::from(order) * BigUint::from(order - 1);
    let value = Rational::new(BigInt::from(total), BigInt::from(den));
    let nu = b.measure();
    let floor = nu.clone() * nu.clone() * nu.clone() * nu;
    let holds = value >= floor;
    Ok(GsLowerTerm {
        value,
        floor,
        holds,
    })
}

/// One row of the conjecture norm scan.
#[derive(Clone, Debug, Serialize)]
pub struct NormScanRow {
    pub field: String,
    pub order: u64,
    pub m: u32,
    pub sizes: Vec<u64>,
    /// ‖(1/|F*|) Σ_{u∈F*} M_u A_{−u} f · M_u g‖₂² on the grid, with
    /// f = 1_B − P_A 1_B and g = 1_B.
    pub normsq: f64,
    pub f_norm2sq: f64,
    pub g_norm2sq: f64,
    /// normsq / (‖f‖₂²·‖g‖₂²); the quantity whose decay is fitted.
    pub ratio: f64,
}

/// Least-squares fit of log(ratio) against log|F|; the conjectured
/// decay corresponds to slope −2b.
#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// b̂ = −slope/2.
    pub b_hat: f64,
    pub residuals: Vec<f64>,
    pub rmse: f64,
    pub points_used: usize,
}

/// The grid-based norm ‖(1/|F*|) Σ_u M_u A_{−u} f · M_u g‖₂².
pub fn twisted_norm_on_grid(field: &Field, f: &GridFn, g: &GridFn) -> Result<f64, ColouringError> {
    let n = field.size();
    let mut acc = vec![KahanCell::default(); f.values().len()];
    for u in field.star() {
        let inv_u = field.inv(u)?;
        // x ↦ x/u + u on each coordinate for f, x ↦ x/u for g.
        let mut perm_f = Vec::with_capacity(n);
        let mut perm_g = Vec::with_capacity(n);
        for cidx in 0..n as u32 {
            let c = Elem::from_raw(cidx);
            let div = field.mul(c, inv_u);
            perm_g.push(div.index());
            perm_f.push(field.add(div, u).index());
        }
        let fu = f.permute_axes(&perm_f);
        let gu = g.permute_axes(&perm_g);
        for ((a, x), y) in acc.iter_mut().zip(fu.values()).zip(gu.values()) {
            a.add(x * y);
        }
    }
    let inv_star = 1.0 / (n as f64 - 1.0);
    Ok(kahan_sum(acc.iter().map(|a| {
        let t = a.value() * inv_star;
        t * t
    })) / f.values().len() as f64)
}

/// Evaluates the twisted norm for seeded product sets across a field
/// list and fits the decay exponent. No pass/fail attaches to the
/// conjectured decay itself.
pub fn conjecture_norm_scan(
    fields: &[Field],
    m: u32,
    rule: &SetRule,
    seed: u64,
) -> Result<(Vec<NormScanRow>, SlopeFit), ColouringError> {
    let mut rows = Vec::new();
    for (i, field) in fields.iter().enumerate() {
        if m == 3 && field.order() > 128 {
            return Err(ColouringError::GridTooLarge);
        }
        let field_seed = child_seed(seed, i as u64);
        let factors: Vec<Subset> = (0..m)
            .map(|j| rule.build(field, child_seed(field_seed, j as u64)))
            .collect::<Result<_, _>>()?;
        let b = ProductSet::new(factors);
        let g = GridFn::product_indicator(&b)?;
        let f = balanced_indicator(field, &b)?;
        let normsq = twisted_norm_on_grid(field, &f, &g)?;
        let f_norm2sq = f.norm2sq();
        let g_norm2sq = g.norm2sq();
        let denom = f_norm2sq * g_norm2sq;
        let ratio = if denom > 0.0 {
            normsq / denom
        } else {
            f64::NAN
        };
        rows.push(NormScanRow {
            field: field.literal(),
            order: field.order(),
            m,
            sizes: b.sizes(),
            normsq,
            f_norm2sq,
            g_norm2sq,
            ratio,
        });
    }
    let fit = fit_log_slope(&rows);
    Ok((rows, fit))
}

fn fit_log_slope(rows: &[NormScanRow]) -> SlopeFit {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ratio.is_finite() && r.ratio > 0.0)
        .map(|r| ((r.order as f64).ln(), r.ratio.ln()))
        .collect();
    let k = points.len();
    if k < 2 {
        return SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            b_hat: f64::NAN,
            residuals: Vec::new(),
            rmse: f64::NAN,
            points_used: k,
        };
    }
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residuals: Vec<f64> = points
        .iter()
        .map(|p| p.1 - (intercept + slope * p.0))
        .collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / k as f64).sqrt();
    SlopeFit {
        slope,
        intercept,
        b_hat: -slope / 2.0,
        residuals,
        rmse,
        points_used: k,
    }
}

/// Colouring literals accepted by the CLI and config files.
#[derive(Clone, PartialEq, Debug)]
pub enum ColouringRule {
    /// `explicit:<file>` — one colour index per element index,
    /// newline-separated.
    Explicit(String),
    /// `residue:r` — colour by multiplicative-character class:
    /// colour(x) = log(x) mod r, with 0 assigned to colour 0. For
    /// r = 2 this is quadratic residuosity.
    Residue(u32),
    /// `random:r,seed=…`; seed optional.
    Random { r: u32, seed: Option<u64> },
}

impl ColouringRule {
    pub fn parse(text: &str) -> Result<ColouringRule, ColouringError> {
        let bad = || ColouringError::BadRule(text.to_string());
        if let Some(path) = text.strip_prefix("explicit:") {
            return Ok(ColouringRule::Explicit(path.to_string()));
        }
        if let Some(r) = text.strip_prefix("residue:") {
            let r: u32 = r.trim().parse().map_err(|_| bad())?;
            if r == 0 {
                return Err(bad());
            }
            return Ok(ColouringRule::Residue(r));
        }
        if let Some(args) = text.strip_prefix("random:") {
            let mut parts = args.split(',');
            let r: u32 = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .filter(|&r| r > 0)
                .ok_or_else(bad)?;
            let mut seed = None;
            for part in parts {
                match part.trim().split_once('=') {
                    Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
            return Ok(ColouringRule::Random { r, seed });
        }
        Err(bad())
    }

    pub fn build(&self, field: &Field, default_seed: u64) -> Result<Colouring, ColouringError> {
        match self {
            ColouringRule::Explicit(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ColouringError::BadRule(format!("cannot read {path}: {e}")))?;
                let assignment: Vec<u32> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().parse::<u32>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ColouringError::BadRule(format!("{path}: {e}")))?;
                let r = assignment.iter().copied().max().unwrap_or(0) as usize + 1;
                Colouring::new(field, r, assignment)
            }
            ColouringRule::Residue(r) => {
                let assignment: Vec<u32> = (0..field.order() as u32)
                    .map(|i| {
                        if i == 0 {
                            0
                        } else {
                            (field
                                .discrete_log(field.elem(i as u64).expect("index in range"))
                                .expect("nonzero")
                                % *r as u64) as u32
                        }
                    })
                    .collect();
                Colouring::new(field, *r as usize, assignment)
            }
            ColouringRule::Random { r, seed } => {
                let mut rng = SplitMix64::new(seed.unwrap_or(default_seed));
                let assignment: Vec<u32> = (0..field.order())
                    .map(|_| rng.next_below(*r as u64) as u32)
                    .collect();
                Colouring::new(field, *r as usize, assignment)
            }
        }
    }

    pub fn literal(&self) -> String {
        match self {
            ColouringRule::Explicit(path) => format!("explicit:{path}"),
            ColouringRule::Residue(r) => format!("residue:{r}"),
            ColouringRule::Random { r, seed } => match seed {
                Some(s) => format!("random:{r},seed={s}"),
                None => format!("random:{r}"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::count_quadruples;
    use crate::space::ratio;
    use num_traits::ToPrimitive;

    fn field(p: u64, k: u32) -> Field {
        Field::new(p, k, None).unwrap()
    }

    fn sized_colouring(field: &Field, sizes: &[u64]) -> Colouring {
        let mut assignment = Vec::with_capacity(field.size());
        for (c, &s) in sizes.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(c as u32, s as usize));
        }
        assert_eq!(assignment.len(), field.size());
        Colouring::new(field, sizes.len(), assignment).unwrap()
    }

    #[test]
    fn r_prime_selection_examples() {
        // |F| = 101 is the closest prime carrier for the rule checks;
        // sizes are what drive the selection.
        let f = field(101, 1);
        let c = sized_colouring(&f, &[61, 40]);
        let params = select_r_prime(&f, &c, Schedule::Pow2);
        // 40·2⁴ = 640 ≥ 101 → r' = 2.
        assert_eq!(params.r_prime, 2);
        assert_eq!(params.nu_c, ratio(61 * 40, 101 * 101));

        let c = sized_colouring(&f, &[100, 1]);
        // 1·2⁴ = 16 < 101 → r' = 1.
        let params = select_r_prime(&f, &c, Schedule::Pow2);
        assert_eq!(params.r_prime, 1);
        assert_eq!(params.tail_size, 1);

        let c = sized_colouring(&f, &[51, 30, 20]);
        // Schedule 4^j: 30·3¹⁶ ≥ 101 and 20·3⁶⁴ ≥ 101 → r' = 3.
        let params = select_r_prime(&f, &c, Schedule::Pow4);
        assert_eq!(params.r_prime, 3);
    }

    #[test]
    fn sorted_classes_break_ties_by_colour() {
        let f = field(2, 2);
        let c = Colouring::new(&f, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(c.sorted_colours(), &[0, 1]);
        assert_eq!(c.sorted_sizes(), vec![2, 2]);
    }

    #[test]
    fn nu_c_lower_bound_holds() {
        // ν(C) ≥ 1/r^{Σ e_j} after selection, exactly.
        let f = field(101, 1);
        for sizes in [vec![61u64, 40], vec![51, 30, 20], vec![98, 2, 1]] {
            let c = sized_colouring(&f, &sizes);
            for schedule in [Schedule::Pow2, Schedule::Pow4] {
                let params = select_r_prime(&f, &c, schedule);
                let sum = schedule.exponent_sum(params.r_prime);
                let floor = Rational::new(
                    BigInt::from(1u32),
                    BigInt::from(c.r() as u64).pow(u32::try_from(sum).unwrap()),
                );
                assert!(params.nu_c >= floor, "{sizes:?} {schedule:?}");
            }
        }
    }

    #[test]
    fn schedule_gap_identity_exact() {
        // 1/r^{Σe_j} − 1/r^{tail} = (r²−1)/r^{tail} for the 2^j schedule,
        // and with Σ replaced by 3Σ, (r¹²−1)/r^{tail} for 4^j.
        for r in 2u64..=6 {
            for r_prime in 1..=6usize {
                let s2 = Schedule::Pow2;
                let lhs = Rational::new(
                    BigInt::from(1u32),
                    BigInt::from(r).pow(s2.exponent_sum(r_prime) as u32),
                ) - Rational::new(
                    BigInt::from(1u32),
                    BigInt::from(r).pow(s2.tail_exponent(r_prime) as u32),
                );
                assert_eq!(
                    lhs,
                    schedule_gap_constant(s2, r, r_prime),
                    "pow2 r={r} r'={r_prime}"
                );

                let s4 = Schedule::Pow4;
                let lhs = Rational::new(
                    BigInt::from(1u32),
                    BigInt::from(r).pow(3 * s4.exponent_sum(r_prime) as u32),
                ) - Rational::new(
                    BigInt::from(1u32),
                    BigInt::from(r).pow(s4.tail_exponent(r_prime) as u32),
                );
                assert_eq!(
                    lhs,
                    schedule_gap_constant(s4, r, r_prime),
                    "pow4 r={r} r'={r_prime}"
                );
            }
        }
    }

    #[test]
    fn product_measures_trivial_cases() {
        let f = field(5, 1);
        let full = ProductSet::new(vec![Subset::full(&f), Subset::full(&f)]);
        let m = product_recurrence_measure(&f, &Poly::x(), &full, Elem::from_raw(2)).unwrap();
        assert_eq!(m, ratio(1, 1));
        let m = product_triple_measure(&f, &full, Elem::from_raw(2)).unwrap();
        assert_eq!(m, ratio(1, 1));

        let with_empty = ProductSet::new(vec![Subset::full(&f), Subset::empty(&f)]);
        let m = product_recurrence_measure(&f, &Poly::x(), &with_empty, Elem::from_raw(2)).unwrap();
        assert_eq!(m, ratio(0, 1));

        assert_eq!(
            product_triple_measure(&f, &full, Elem::ZERO).unwrap_err(),
            ColouringError::ZeroScale
        );
    }

    #[test]
    fn triple_measure_star_line() {
        // B = F* at m = 1: the intersection is F* minus {−u}, so
        // (|F|−2)/|F| for every u ≠ 0.
        let f = field(7, 1);
        let b = ProductSet::line(Subset::star(&f));
        for u in f.star() {
            let m = product_triple_measure(&f, &b, u).unwrap();
            assert_eq!(m, ratio(5, 7), "u = {}", u.index());
        }
    }

    // Materialized-grid oracle for the factorized recurrence measure.
    fn grid_recurrence_measure(field: &Field, p: &Poly, c: &ProductSet, u: Elem) -> Rational {
        let ind = GridFn::product_indicator(c).unwrap();
        let pu = field.eval_poly(p, u).unwrap();
        // 1_{M_u A_{−p(u)} C}(x) = 1_C(x/u + p(u)) per coordinate.
        let inv_u = field.inv(u).unwrap();
        let n = field.size();
        let perm: Vec<u32> = (0..n as u32)
            .map(|cix| field.add(field.mul(Elem::from_raw(cix), inv_u), pu).index())
            .collect();
        let moved = ind.permute_axes(&perm);
        let count = ind
            .values()
            .iter()
            .zip(moved.values())
            .filter(|(a, b)| **a == 1.0 && **b == 1.0)
            .count();
        ratio(count as u64, (field.order()).pow(c.m()))
    }

    #[test]
    fn factorized_recurrence_equals_grid_oracle() {
        let f = field(5, 1);
        let c = ProductSet::new(vec![
            Subset::from_indices(&f, &[0, 1]).unwrap(),
            Subset::from_indices(&f, &[1, 2]).unwrap(),
        ]);
        for u in f.star() {
            let fast = product_recurrence_measure(&f, &Poly::x(), &c, u).unwrap();
            let slow = grid_recurrence_measure(&f, &Poly::x(), &c, u);
            assert_eq!(fast, slow, "u = {}", u.index());
        }
    }

    #[test]
    fn single_colour_always_finds_triples() {
        let f = field(5, 1);
        let c = Colouring::new(&f, 1, vec![0; 5]).unwrap();
        let out = monochromatic_triple_search(&f, &c, &Poly::x(), 0, SearchVia::Both).unwrap();
        assert!(out.direct_count.unwrap() > 0);
        assert_eq!(out.consistent, Some(true));
    }

    #[test]
    fn residue_colouring_z7_classes() {
        // Quadratic residues mod 7 are {1, 2, 4}; zero joins colour 0.
        let f = field(7, 1);
        let c = ColouringRule::Residue(2).build(&f, 0).unwrap();
        let class0: Vec<u32> = c.class(0).iter().collect();
        let class1: Vec<u32> = c.class(1).iter().collect();
        assert_eq!(class0, vec![0, 1, 2, 4]);
        assert_eq!(class1, vec![3, 5, 6]);
    }

    #[test]
    fn residue_search_z17_finds_monochromatic_triple() {
        let f = field(17, 1);
        let c = ColouringRule::Residue(2).build(&f, 0).unwrap();
        let out = monochromatic_triple_search(&f, &c, &Poly::x(), 1, SearchVia::Both).unwrap();
        let direct = out.direct_witnesses.as_ref().unwrap();
        assert!(!direct.is_empty());
        for w in direct {
            assert!(verify_triple(&f, &c, &Poly::x(), w));
        }
        assert_eq!(out.consistent, Some(true));
        // r' = r = 2 leaves no tail, so any nonempty D fires the gap test.
        if out.params.r_prime == 2 {
            assert_eq!(out.params.tail_size, 0);
            assert_eq!(out.gap_fired, out.d_size > 0);
        }
    }

    #[test]
    fn quadruple_direct_matches_per_class_counts() {
        let f = field(31, 1);
        let c = ColouringRule::Random {
            r: 2,
            seed: Some(9),
        }
        .build(&f, 0)
        .unwrap();
        let out = gs_quadruple_search(&f, &c, 1, None).unwrap();
        let by_class: u64 = (0..2).map(|j| count_quadruples(&f, c.class(j)).count).sum();
        assert_eq!(out.direct_count, by_class);
        assert_eq!(out.per_colour_counts.iter().sum::<u64>(), out.direct_count);
    }

    #[test]
    fn quadruple_conditional_reports_c_r() {
        let f = field(31, 1);
        let c = ColouringRule::Random {
            r: 2,
            seed: Some(4),
        }
        .build(&f, 0)
        .unwrap();
        let out = gs_quadruple_search(&f, &c, 1, Some((0.5, 1.0))).unwrap();
        let cond = out.conditional.unwrap();
        assert!(cond.c_r.is_finite());
        for w in &cond.proof_witnesses {
            assert!(verify_quadruple(&f, &c, w));
        }
    }

    #[test]
    fn c_r_closed_form_limit() {
        // r = 2, r' = 2, δ → 0, |F*| → ∞: c_r → (2¹²−1)/2⁶³.
        let tail = Schedule::Pow4.tail_exponent(2);
        assert_eq!(tail, 63);
        let limit = (2f64.powi(12) - 1.0) / 2f64.powi(63);
        let c_r = schedule_gap_constant(Schedule::Pow4, 2, 2);
        assert!((c_r.to_f64().unwrap() - limit).abs() < 1e-30);
    }

    // Materialized oracle for the factorized lower-term sum.
    fn gs_lower_term_grid(field: &Field, b: &ProductSet) -> f64 {
        let g = GridFn::product_indicator(b).unwrap();
        let pa = g.proj_additive(field);
        let prod = pa.mul_pointwise(&g).unwrap();
        let pm = prod.proj_multiplicative(field);
        g.inner(&pm).unwrap()
    }

    #[test]
    fn gs_lower_term_trivial_and_oracle() {
        let f = field(7, 1);
        let full = ProductSet::new(vec![Subset::full(&f), Subset::full(&f)]);
        let out = gs_lower_term(&f, &full).unwrap();
        assert_eq!(out.value, ratio(1, 1));
        assert!(out.holds);

        let with_empty = ProductSet::new(vec![Subset::full(&f), Subset::empty(&f)]);
        let out = gs_lower_term(&f, &with_empty).unwrap();
        assert_eq!(out.value, ratio(0, 1));
        assert!(out.holds);

        let b = ProductSet::new(vec![
            Subset::from_indices(&f, &[1, 2, 3]).unwrap(),
            Subset::from_indices(&f, &[2, 3, 4]).unwrap(),
        ]);
        let out = gs_lower_term(&f, &b).unwrap();
        let grid = gs_lower_term_grid(&f, &b);
        assert!(
            (out.value.to_f64().unwrap() - grid).abs() <= 1e-9,
            "{} vs {grid}",
            out.value.to_f64().unwrap()
        );
        assert!(out.holds);
    }

    #[test]
    fn norm_scan_m1_brute_force() {
        // Literal five-nested-loop oracle at |F| = 5, m = 2.
        let f = field(5, 1);
        let b = ProductSet::new(vec![
            Subset::from_indices(&f, &[1, 2]).unwrap(),
            Subset::from_indices(&f, &[1, 3]).unwrap(),
        ]);
        let g = GridFn::product_indicator(&b).unwrap();
        let fb = balanced_indicator(&f, &b).unwrap();
        let fast = twisted_norm_on_grid(&f, &fb, &g).unwrap();

        let n = 5usize;
        let star = 4.0;
        let mut total = 0.0;
        for x0 in 0..n {
            for x1 in 0..n {
                let mut t = 0.0;
                for u in 1..n {
                    let ue = f.elem(u as u64).unwrap();
                    let iu = f.inv(ue).unwrap();
                    let y0 = f.mul(f.elem(x0 as u64).unwrap(), iu);
                    let y1 = f.mul(f.elem(x1 as u64).unwrap(), iu);
                    let fx = fb.values()[f.add(y0, ue).idx() + n * f.add(y1, ue).idx()];
                    let gx = g.values()[y0.idx() + n * y1.idx()];
                    t += fx * gx;
                }
                total += (t / star) * (t / star);
            }
        }
        let brute = total / (n * n) as f64;
        assert!((fast - brute).abs() <= 1e-12, "{fast} vs {brute}");
    }

    #[test]
    fn norm_scan_emits_rows_and_fit() {
        let fields: Vec<Field> = [11u64, 17, 23].iter().map(|&p| field(p, 1)).collect();
        let rule = SetRule::Random {
            density: 0.5,
            seed: None,
        };
        let (rows, fit) = conjecture_norm_scan(&fields, 1, &rule, 77).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(fit.points_used, 3);
        assert!(fit.slope.is_finite());
        assert!(fit.b_hat.is_finite());

        // All-of-F factors give the zero function and an empty fit.
        let (rows, fit) = conjecture_norm_scan(&fields, 1, &SetRule::All, 1).unwrap();
        assert!(rows.iter().all(|r| r.normsq <= 1e-18));
        assert_eq!(fit.points_used, 0);
    }

    #[test]
    fn colouring_rules_parse() {
        assert_eq!(
            ColouringRule::parse("residue:2").unwrap(),
            ColouringRule::Residue(2)
        );
        assert_eq!(
            ColouringRule::parse("random:3,seed=5").unwrap(),
            ColouringRule::Random {
                r: 3,
                seed: Some(5)
            }
        );
        assert!(ColouringRule::parse("residue:0").is_err());
        assert!(ColouringRule::parse("nope").is_err());
        let f = field(5, 1);
        let c = ColouringRule::parse("random:2,seed=8")
            .unwrap()
            .build(&f, 0)
            .unwrap();
        assert_eq!(c.class(0).size() + c.class(1).size(), 5);
    }

    #[test]
    fn delta_cap_enforced() {
        let f = field(5, 1);
        let c = Colouring::new(&f, 1, vec![0; 5]).unwrap();
        // ν(C) = 1, |F*| = 4: s must stay below 4.
        assert!(matches!(
            monochromatic_triple_search(&f, &c, &Poly::x(), 4, SearchVia::Direct),
            Err(ColouringError::DeltaTooLarge)
        ));
    }
}
