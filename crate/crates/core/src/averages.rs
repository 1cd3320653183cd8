//! Finite averaging identities and deviation bounds for the affine
//! action, one result struct per verified statement.
//!
//! Each operation computes its left-hand side by direct summation —
//! cost at worst |F|^3 — and attaches the bound(s) it is checked
//! against. Where a statement and its derivation disagree on a
//! constant, both bounds are returned: callers assert the weaker
//! (`proof_*`) and tabulate the sharper (`stated_*`), so a run never
//! fails on an internal constant discrepancy while the data still
//! surfaces it.

use crate::field::{Elem, Field, FieldError, Poly};
use crate::space::{
    balanced_line_indicator, kahan_sum, rational_to_f64, GridFn, KahanCell, ProductSet, Rational,
    SpaceError, Subset,
};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use thiserror::Error;

/// Fields larger than this skip the |F|^3 diagonal sum.
pub const INNER_DIAG_CAP: u64 = 512;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AveragesError {
    #[error("polynomial is not admissible for this field")]
    InadmissiblePolynomial,
    #[error("family must contain one function per group element")]
    IncompleteFamily,
    #[error("the two-set lower bound needs the transitive line action, not a product space")]
    ErgodicBoundAtProductSpace,
    #[error("delta must be smaller than the sets' measures")]
    DeltaTooLarge,
    #[error("set must avoid zero")]
    ZeroInSet,
    #[error("field must have at least {0} elements for this bound")]
    FieldTooSmall(u64),
    #[error("operands disagree on field or dimension")]
    MismatchedSets,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// |F*|^(−1/2^t) in doubles.
fn star_root(field: &Field, t: u32) -> f64 {
    ((field.order() - 1) as f64).powf(-(-(t as f64)).exp2())
}

/// |F|^(−1/2^t) in doubles.
fn order_root(field: &Field, t: u32) -> f64 {
    (field.order() as f64).powf(-(-(t as f64)).exp2())
}

/// Whether a product-measure hypothesis `μ·μ > 2(q+2)/|F*|^{1/2^{q-1}}`
/// is unsatisfiable even at full measure: |F*| ≤ (2(q+2))^{2^{q-1}},
/// decided exactly.
pub fn recurrence_hypothesis_vacuous(field: &Field, q: u32) -> bool {
    if q >= 6 {
        // (2(q+2))^{2^{q-1}} ≥ 16^32 > 2^20 ≥ |F*| for every supported order.
        return true;
    }
    let rhs = BigUint::from(2 * (q as u64 + 2)).pow(1 << (q - 1));
    BigUint::from(field.order() - 1) <= rhs
}

/// Group structure a family of vectors is indexed by.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupKind {
    Additive,
    Multiplicative,
}

impl GroupKind {
    pub fn size(self, field: &Field) -> usize {
        match self {
            GroupKind::Additive => field.size(),
            GroupKind::Multiplicative => field.size() - 1,
        }
    }

    fn elems(self, field: &Field) -> Vec<Elem> {
        match self {
            GroupKind::Additive => field.elems().collect(),
            GroupKind::Multiplicative => field.star().collect(),
        }
    }

    fn position(self, e: Elem) -> usize {
        match self {
            GroupKind::Additive => e.idx(),
            GroupKind::Multiplicative => e.idx() - 1,
        }
    }

    fn op(self, field: &Field, a: Elem, b: Elem) -> Elem {
        match self {
            GroupKind::Additive => field.add(a, b),
            GroupKind::Multiplicative => field.mul(a, b),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GroupKind::Additive => "additive",
            GroupKind::Multiplicative => "multiplicative",
        }
    }
}

#[derive(Clone, Debug)]
pub struct VdcCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// |G|² · max ‖f(g)‖₂², the natural size of both sides.
    pub scale: f64,
}

impl VdcCheck {
    pub fn relative_residual(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

/// The exact-norm identity ‖Σ_g f(g)‖² = Σ_g Σ_h ⟨f(gh), f(g)⟩ over a
/// finite group, both sides summed independently.
pub fn vdc_identity_residual(
    field: &Field,
    group: GroupKind,
    family: &[GridFn],
) -> Result<VdcCheck, AveragesError> {
    let elems = group.elems(field);
    if family.len() != elems.len() {
        return Err(AveragesError::IncompleteFamily);
    }
    let cells = family[0].values().len();
    let mut sum_cells = vec![KahanCell::default(); cells];
    for f in family {
        if f.values().len() != cells || f.m() != family[0].m() {
            return Err(AveragesError::IncompleteFamily);
        }
        for (acc, v) in sum_cells.iter_mut().zip(f.values()) {
            acc.add(*v);
        }
    }
    let lhs = kahan_sum(sum_cells.iter().map(|c| c.value() * c.value())) / cells as f64;

    let mut rhs_cell = KahanCell::default();
    for &g in &elems {
        let fg = &family[group.position(g)];
        for &h in &elems {
            let gh = group.op(field, g, h);
            rhs_cell.add(family[group.position(gh)].inner(fg)?);
        }
    }
    let rhs = rhs_cell.value();

    let max_norm = family.iter().map(|f| f.norm2sq()).fold(0.0f64, f64::max);
    let scale = (elems.len() * elems.len()) as f64 * max_norm;
    Ok(VdcCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        scale,
    })
}

#[derive(Clone, Debug)]
pub struct PetDeviation {
    pub q: u32,
    /// ‖ (1/|F|) Σ_u A_{p(u)} f − P_A f ‖₂²
    pub lhs: f64,
    /// (q−1)/|F|^{1/2^{q−2}} · ‖f−P_Af‖₂² — tabulated only.
    pub stated_bound: f64,
    /// q/|F|^{1/2^{q−1}} · ‖f−P_Af‖₂² — the asserted bound.
    pub proof_bound: f64,
    pub ftilde_norm2sq: f64,
}

/// Deviation of the polynomial translation average from P_A f.
pub fn pet_deviation(field: &Field, p: &Poly, f: &GridFn) -> Result<PetDeviation, AveragesError> {
    if !field.is_admissible(p) {
        return Err(AveragesError::InadmissiblePolynomial);
    }
    let q = p.degree();
    let pa = f.proj_additive(field);
    let ftilde = f.sub(&pa)?;
    let ftilde_norm2sq = ftilde.norm2sq();

    // Multiset of p-values: p(u) = s with multiplicity count[s], so the
    // average is Σ_s count[s]·A_s f / |F|.
    let mut counts = vec![0u32; field.size()];
    for u in field.elems() {
        counts[field.eval_poly(p, u)?.idx()] += 1;
    }
    let mut acc = vec![KahanCell::default(); f.values().len()];
    for (s, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let moved = f.koopman_add(field, field.elem(s as u64)?);
        let w = count as f64;
        for (a, v) in acc.iter_mut().zip(moved.values()) {
            a.add(w * *v);
        }
    }
    let inv_n = 1.0 / field.order() as f64;
    let lhs = kahan_sum(acc.iter().zip(pa.values()).map(|(a, p)| {
        let d = a.value() * inv_n - p;
        d * d
    })) / f.values().len() as f64;

    let stated_bound = if q >= 2 {
        (q - 1) as f64 * order_root(field, q - 2) * ftilde_norm2sq
    } else {
        0.0
    };
    let proof_bound = q as f64 * order_root(field, q - 1) * ftilde_norm2sq;
    Ok(PetDeviation {
        q,
        lhs,
        stated_bound,
        proof_bound,
        ftilde_norm2sq,
    })
}

#[derive(Clone, Debug)]
pub struct MultAvgNorm {
    pub q: u32,
    /// ‖ (1/|F*|) Σ_{u∈F*} M_u A_{−p(u)} f ‖₂² with f = 1_C − P_A 1_C.
    pub normsq: f64,
    /// 2(q+2)·μ(C)/|F*|^{1/2^{q−1}}
    pub bound: f64,
    pub mu_c: f64,
}

/// Norm of the twisted multiplicative average of a balanced indicator.
pub fn mult_avg_norm(field: &Field, p: &Poly, c: &Subset) -> Result<MultAvgNorm, AveragesError> {
    if !field.is_admissible(p) {
        return Err(AveragesError::InadmissiblePolynomial);
    }
    let q = p.degree();
    let f = balanced_line_indicator(c);
    let n = field.size();
    let mut acc = vec![KahanCell::default(); n];
    for u in field.star() {
        let inv_u = field.inv(u)?;
        let pu = field.eval_poly(p, u)?;
        // (M_u A_{−p(u)} f)(x) = f(x/u + p(u))
        for (x, a) in acc.iter_mut().enumerate() {
            let src = field.add(field.mul(field.elem(x as u64)?, inv_u), pu);
            a.add(f.values()[src.idx()]);
        }
    }
    let inv_star = 1.0 / (n as f64 - 1.0);
    let normsq = kahan_sum(acc.iter().map(|a| {
        let v = a.value() * inv_star;
        v * v
    })) / n as f64;
    let mu_c = c.size() as f64 / n as f64;
    let bound = 2.0 * (q as f64 + 2.0) * mu_c * star_root(field, q - 1);
    Ok(MultAvgNorm {
        q,
        normsq,
        bound,
        mu_c,
    })
}

#[derive(Clone, Debug)]
pub struct RecurrenceAvg {
    pub q: u32,
    pub m: u32,
    /// Σ_{u∈F*} |B ∩ M_u A_{−p(u)} C| as an exact integer over |F|^m.
    pub total_count: BigUint,
    /// total / (|F*|·|F|^m)
    pub avg: f64,
    /// ν(B)² − √(2(q+2))·ν(B)/|F*|^{1/2^q}; present when B = C.
    pub bound_same_set: Option<f64>,
    /// ν(B)ν(C) − √(2(q+2)ν(B)ν(C))/|F*|^{1/2^q}; present at m = 1.
    pub bound_ergodic: Option<f64>,
    /// Whether no sets at this |F| could satisfy the positivity
    /// hypothesis behind the bounds.
    pub vacuous: bool,
}

fn check_product_pair(b: &ProductSet, c: &ProductSet, field: &Field) -> Result<(), AveragesError> {
    if b.m() != c.m() || b.order() != c.order() || b.order() as u64 != field.order() {
        return Err(AveragesError::MismatchedSets);
    }
    Ok(())
}

/// Per-coordinate count of B_j ∩ u(C_j − p(u)), multiplied exactly.
fn transformed_intersection_count(
    field: &Field,
    b: &ProductSet,
    c: &ProductSet,
    u: Elem,
    pu: Elem,
) -> Result<BigUint, AveragesError> {
    let shift = field.neg(field.mul(u, pu));
    let mut prod = BigUint::from(1u32);
    for (bj, cj) in b.factors().iter().zip(c.factors()) {
        let moved = cj.affine_image(field, u, shift)?;
        let count = bj.intersect_count(&moved);
        if count == 0 {
            return Ok(BigUint::ZERO);
        }
        prod *= BigUint::from(count);
    }
    Ok(prod)
}

/// The recurrence average (1/|F*|) Σ_{u∈F*} ν(B ∩ M_u A_{−p(u)} C),
/// with its lower bounds.
pub fn recurrence_average(
    field: &Field,
    p: &Poly,
    b: &ProductSet,
    c: &ProductSet,
    same_set: bool,
) -> Result<RecurrenceAvg, AveragesError> {
    if !field.is_admissible(p) {
        return Err(AveragesError::InadmissiblePolynomial);
    }
    check_product_pair(b, c, field)?;
    if same_set && b != c {
        return Err(AveragesError::MismatchedSets);
    }
    if !same_set && b.m() > 1 {
        // The two-set claim needs the transitive line action.
        return Err(AveragesError::ErgodicBoundAtProductSpace);
    }
    let q = p.degree();
    let m = b.m();

    let mut total = BigUint::ZERO;
    for u in field.star() {
        let pu = field.eval_poly(p, u)?;
        total += transformed_intersection_count(field, b, c, u, pu)?;
    }
    let den = (field.order() - 1) as f64 * (field.order() as f64).powi(m as i32);
    let avg = total.to_f64().unwrap_or(f64::INFINITY) / den;

    let nu_b = rational_to_f64(&b.measure());
    let nu_c = rational_to_f64(&c.measure());
    let root = star_root(field, q);
    let coeff = (2.0 * (q as f64 + 2.0)).sqrt();
    let bound_same_set = same_set.then_some(nu_b * nu_b - coeff * nu_b * root);
    let bound_ergodic = (m == 1).then(|| nu_b * nu_c - (nu_b * nu_c).sqrt() * coeff * root);

    Ok(RecurrenceAvg {
        q,
        m,
        total_count: total,
        avg,
        bound_same_set,
        bound_ergodic,
        vacuous: recurrence_hypothesis_vacuous(field, q),
    })
}

#[derive(Clone, Debug)]
pub struct ReturnTimes {
    pub q: u32,
    pub m: u32,
    /// The set of u ∈ F* whose transformed intersection measure
    /// exceeds delta, decided by exact rational comparison.
    pub d: Subset,
    /// The guaranteed density |D|/|F*|.
    pub lower_bound: f64,
    pub two_set: bool,
    pub vacuous: bool,
}

/// Return times D = {u ∈ F*: ν(B ∩ M_u A_{−p(u)} C) > δ} with the
/// density lower bound; the two-set variant needs m = 1.
pub fn return_time_set(
    field: &Field,
    p: &Poly,
    b: &ProductSet,
    c: &ProductSet,
    delta: &Rational,
) -> Result<ReturnTimes, AveragesError> {
    if !field.is_admissible(p) {
        return Err(AveragesError::InadmissiblePolynomial);
    }
    check_product_pair(b, c, field)?;
    let two_set = b != c;
    if two_set && b.m() > 1 {
        return Err(AveragesError::ErgodicBoundAtProductSpace);
    }
    let nu_b = b.measure();
    let nu_c = c.measure();
    let cap = if two_set {
        nu_b.clone().min(nu_c.clone())
    } else {
        nu_b.clone()
    };
    if *delta >= cap {
        return Err(AveragesError::DeltaTooLarge);
    }

    let q = p.degree();
    let m = b.m();
    let delta_negative = num_traits::Signed::is_negative(delta);
    let grid_den = BigUint::from(field.order()).pow(m);
    let mut d = Subset::empty(field);
    for u in field.star() {
        if delta_negative {
            // Measures are nonnegative, so every u returns.
            d.insert(u.index());
            continue;
        }
        let pu = field.eval_poly(p, u)?;
        let count = transformed_intersection_count(field, b, c, u, pu)?;
        // count / |F|^m > delta  ⟺  count·den(δ) > num(δ)·|F|^m
        let lhs = count * delta.denom().magnitude();
        let rhs = delta.numer().magnitude() * &grid_den;
        if lhs > rhs {
            d.insert(u.index());
        }
    }

    let root = star_root(field, q);
    let coeff = (2.0 * (q as f64 + 2.0)).sqrt();
    let nb = rational_to_f64(&nu_b);
    let nc = rational_to_f64(&nu_c);
    let df = rational_to_f64(delta);
    let lower_bound = if two_set {
        (nb * nc - (nb * nc).sqrt() * coeff * root - df) / nb.min(nc)
    } else {
        (nb * nb - coeff * nb * root - df) / nb
    };
    Ok(ReturnTimes {
        q,
        m,
        d,
        lower_bound,
        two_set,
        vacuous: recurrence_hypothesis_vacuous(field, q),
    })
}

#[derive(Clone, Debug)]
pub struct ShkredovNorm {
    /// ‖ (1/|F*|) Σ_{u∈F*} M_u A_{−u} f · M_u g ‖₂² with
    /// f = 1_B − μ(B), g = 1_C.
    pub normsq: f64,
    /// 7/√|F| · μ(B)μ(C) — tabulated only.
    pub stated_bound: f64,
    /// 8/√|F| · μ(B)μ(C) — the asserted bound.
    pub proof_bound: f64,
    /// (1/|F*|) Σ_{v∈F*} ‖(1/|F*|) Σ_{u∈F} M_v A_{−uv} f · A_{−u} f‖₂²;
    /// skipped above the |F|³ cap.
    pub inner_diag: Option<f64>,
    /// 6/|F| · ‖f‖₂⁴
    pub inner_diag_bound: f64,
    pub f_norm2sq: f64,
    pub mu_b: f64,
    pub mu_c: f64,
}

/// The twisted double-average norm behind the triple-pattern theorem,
/// plus the diagonal second-moment sum its derivation controls.
pub fn shkredov_norm(field: &Field, b: &Subset, c: &Subset) -> Result<ShkredovNorm, AveragesError> {
    if b.contains(0) || c.contains(0) {
        return Err(AveragesError::ZeroInSet);
    }
    if field.order() < 8 {
        return Err(AveragesError::FieldTooSmall(8));
    }
    let n = field.size();
    let f = balanced_line_indicator(b);
    let g = GridFn::indicator(c);

    // S(x) = (1/|F*|) Σ_{u∈F*} f(x/u + u)·g(x/u), accumulated with u
    // ascending; equivalently over y = x/u.
    let mut s = vec![0.0f64; n];
    for u in field.star() {
        for y in 0..n as u32 {
            let ye = field.elem(y as u64)?;
            let x = field.mul(ye, u);
            s[x.idx()] += f.values()[field.add(ye, u).idx()] * g.values()[y as usize];
        }
    }
    let inv_star = 1.0 / (n as f64 - 1.0);
    let normsq = kahan_sum(s.iter().map(|v| {
        let t = v * inv_star;
        t * t
    })) / n as f64;

    let mu_b = b.size() as f64 / n as f64;
    let mu_c = c.size() as f64 / n as f64;
    let sqrt_n = (n as f64).sqrt();
    let stated_bound = 7.0 / sqrt_n * mu_b * mu_c;
    let proof_bound = 8.0 / sqrt_n * mu_b * mu_c;

    let inner_diag = if field.order() <= INNER_DIAG_CAP {
        Some(inner_diag_sum(field, &f)?)
    } else {
        None
    };
    let f_norm2sq = f.norm2sq();
    Ok(ShkredovNorm {
        normsq,
        stated_bound,
        proof_bound,
        inner_diag,
        inner_diag_bound: 6.0 / n as f64 * f_norm2sq * f_norm2sq,
        f_norm2sq,
        mu_b,
        mu_c,
    })
}

// (1/|F*|) Σ_{v∈F*} ‖T_v‖₂² with T_v(x) = (1/|F*|) Σ_{u∈F} f(x/v+uv)·f(x+u).
//
// Substituting a = x + u turns T_v(x) into R_v(c(x))/|F*| with
// R_v(c) = Σ_a f(av + c)·f(a) and c(x) = x(1−v²)/v; for v² ≠ 1 the map
// x ↦ c(x) is a bijection of F, so ‖T_v‖² sums R_v over all of F. The
// translation rows are tabulated once per call so the |F|³ kernel is
// two loads and a fused multiply per term.
fn inner_diag_sum(field: &Field, f: &GridFn) -> Result<f64, AveragesError> {
    let n = field.size();
    let inv_star_sq = 1.0 / ((n as f64 - 1.0) * (n as f64 - 1.0));
    let add_rows: Vec<Vec<u32>> = (0..n as u32)
        .map(|c| {
            (0..n as u32)
                .map(|x| field.add(Elem::from_raw(x), Elem::from_raw(c)).index())
                .collect()
        })
        .collect();
    let star: Vec<Elem> = field.star().collect();
    let per_v: Vec<f64> = star
        .par_iter()
        .map(|&v| {
            let mulv: Vec<usize> = (0..n as u32)
                .map(|a| field.mul(Elem::from_raw(a), v).idx())
                .collect();
            let vals = f.values();
            let r_at = |c: u32| -> f64 {
                let row = &add_rows[c as usize];
                let mut acc = 0.0;
                for (a, &av) in mulv.iter().enumerate() {
                    acc += vals[row[av] as usize] * vals[a];
                }
                acc
            };
            if field.mul(v, v) == Elem::ONE {
                let t = r_at(0);
                t * t * inv_star_sq
            } else {
                let sum: f64 = kahan_sum((0..n as u32).map(|c| {
                    let t = r_at(c);
                    t * t
                }));
                sum * inv_star_sq / n as f64
            }
        })
        .collect();
    Ok(kahan_sum(per_v.into_iter()) / (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::space::ratio;

    fn field(p: u64, k: u32) -> Field {
        Field::new(p, k, None).unwrap()
    }

    fn random_family(field: &Field, group: GroupKind, seed: u64) -> Vec<GridFn> {
        let mut rng = SplitMix64::new(seed);
        (0..group.size(field))
            .map(|_| {
                let mut g = GridFn::zeros(field, 1).unwrap();
                for v in g.values_mut() {
                    *v = rng.next_sign();
                }
                g
            })
            .collect()
    }

    #[test]
    fn vdc_zero_and_constant_families() {
        let f7 = field(7, 1);
        let zeros: Vec<GridFn> = (0..7).map(|_| GridFn::zeros(&f7, 1).unwrap()).collect();
        let check = vdc_identity_residual(&f7, GroupKind::Additive, &zeros).unwrap();
        assert_eq!(check.residual, 0.0);

        // Constant family: both sides are |G|²·‖h‖².
        let h = GridFn::indicator(&Subset::from_indices(&f7, &[1, 4]).unwrap());
        let fam: Vec<GridFn> = (0..6).map(|_| h.clone()).collect();
        let check = vdc_identity_residual(&f7, GroupKind::Multiplicative, &fam).unwrap();
        assert!((check.lhs - 36.0 * h.norm2sq()).abs() < 1e-12);
        assert!(check.relative_residual() <= 1e-9);
    }

    #[test]
    fn vdc_identity_on_random_signs() {
        for (p, k) in [(7u64, 1u32), (3, 2), (2, 3)] {
            let f = field(p, k);
            for seed in 0..20 {
                for group in [GroupKind::Additive, GroupKind::Multiplicative] {
                    let fam = random_family(&f, group, seed);
                    let check = vdc_identity_residual(&f, group, &fam).unwrap();
                    assert!(
                        check.relative_residual() <= 1e-9,
                        "residual {} at {}^{k} {:?}",
                        check.relative_residual(),
                        p,
                        group,
                    );
                }
            }
        }
    }

    #[test]
    fn vdc_rejects_short_family() {
        let f7 = field(7, 1);
        let fam = random_family(&f7, GroupKind::Additive, 1);
        assert_eq!(
            vdc_identity_residual(&f7, GroupKind::Multiplicative, &fam).unwrap_err(),
            AveragesError::IncompleteFamily
        );
    }

    #[test]
    fn pet_linear_polynomials_are_exact() {
        // u ↦ au + b is a bijection of F, so the average equals P_A f.
        let f13 = field(13, 1);
        let p = Poly::from_indices(&[4, 3]);
        let set = Subset::from_indices(&f13, &[0, 2, 5, 6, 11]).unwrap();
        let dev = pet_deviation(&f13, &p, &GridFn::indicator(&set)).unwrap();
        assert!(dev.lhs <= 1e-18);
        assert_eq!(dev.stated_bound, 0.0);
        assert!(dev.proof_bound > 0.0);
    }

    #[test]
    fn pet_constant_function_has_zero_deviation() {
        let f5 = field(5, 1);
        let p = Poly::from_indices(&[0, 0, 1]);
        let c = GridFn::constant(&f5, 1, 0.7).unwrap();
        let dev = pet_deviation(&f5, &p, &c).unwrap();
        assert!(dev.lhs <= 1e-18);
        assert!(dev.ftilde_norm2sq <= 1e-18);
    }

    #[test]
    fn pet_z5_square_matches_hand_expansion() {
        // Squares in Z_5 are {0,1,4} with multiplicities 1,2,2, so the
        // average is (f + 2·A_1 f + 2·A_4 f)/5.
        let f5 = field(5, 1);
        let p = Poly::from_indices(&[0, 0, 1]);
        let f = balanced_line_indicator(&Subset::from_indices(&f5, &[0]).unwrap());
        let dev = pet_deviation(&f5, &p, &f).unwrap();

        let a1 = f.koopman_add(&f5, Elem::from_raw(1));
        let a4 = f.koopman_add(&f5, Elem::from_raw(4));
        let avg: Vec<f64> = (0..5)
            .map(|x| (f.values()[x] + 2.0 * a1.values()[x] + 2.0 * a4.values()[x]) / 5.0)
            .collect();
        let expect = kahan_sum(avg.iter().map(|v| v * v)) / 5.0;
        assert!((dev.lhs - expect).abs() <= 1e-15);
        assert!(dev.lhs <= dev.proof_bound);
    }

    #[test]
    fn pet_rejects_inadmissible() {
        let f5 = field(5, 1);
        let x5 = Poly::from_indices(&[0, 0, 0, 0, 0, 1]);
        let f = GridFn::zeros(&f5, 1).unwrap();
        assert_eq!(
            pet_deviation(&f5, &x5, &f).unwrap_err(),
            AveragesError::InadmissiblePolynomial
        );
    }

    #[test]
    fn mult_avg_trivial_sets() {
        let f7 = field(7, 1);
        let p = Poly::x();
        let full = mult_avg_norm(&f7, &p, &Subset::full(&f7)).unwrap();
        assert!(full.normsq <= 1e-18);
        let empty = mult_avg_norm(&f7, &p, &Subset::empty(&f7)).unwrap();
        assert!(empty.normsq <= 1e-18);
        assert_eq!(empty.bound, 0.0);
    }

    // Independent route: expand the squared norm through the group
    // identity with the family a_u = M_u A_{−p(u)} f.
    fn mult_avg_via_vdc(field: &Field, p: &Poly, c: &Subset) -> f64 {
        let f = balanced_line_indicator(c);
        let fam: Vec<GridFn> = field
            .star()
            .map(|u| {
                f.koopman_add(field, field.neg(field.eval_poly(p, u).unwrap()))
                    .koopman_mul(field, u)
                    .unwrap()
            })
            .collect();
        let check = vdc_identity_residual(field, GroupKind::Multiplicative, &fam).unwrap();
        let star = (field.order() - 1) as f64;
        check.rhs / (star * star)
    }

    #[test]
    fn mult_avg_agrees_with_vdc_expansion() {
        let f7 = field(7, 1);
        let c = Subset::from_indices(&f7, &[0, 1]).unwrap();
        let direct = mult_avg_norm(&f7, &Poly::x(), &c).unwrap();
        let expanded = mult_avg_via_vdc(&f7, &Poly::x(), &c);
        assert!((direct.normsq - expanded).abs() <= 1e-9);

        let f9 = field(3, 2);
        let c9 = Subset::from_indices(&f9, &[1, 3, 4, 7]).unwrap();
        let sq = Poly::from_indices(&[0, 0, 1]);
        let direct = mult_avg_norm(&f9, &sq, &c9).unwrap();
        assert!((direct.normsq - mult_avg_via_vdc(&f9, &sq, &c9)).abs() <= 1e-9);
    }

    #[test]
    fn recurrence_full_and_empty_sets() {
        let f7 = field(7, 1);
        let p = Poly::x();
        let full = ProductSet::line(Subset::full(&f7));
        let r = recurrence_average(&f7, &p, &full, &full, true).unwrap();
        assert!((r.avg - 1.0).abs() < 1e-12);
        assert!(r.avg >= r.bound_same_set.unwrap());

        let empty = ProductSet::line(Subset::empty(&f7));
        let r = recurrence_average(&f7, &p, &empty, &empty, true).unwrap();
        assert_eq!(r.avg, 0.0);
        assert!(r.bound_same_set.unwrap() <= 0.0);
    }

    #[test]
    fn recurrence_matches_double_loop_oracle() {
        // Z_7, p(x) = x, B = C = {1,2,3}: avg = Σ_u |B ∩ u(B−u)|/(6·7).
        let f7 = field(7, 1);
        let b = Subset::from_indices(&f7, &[1, 2, 3]).unwrap();
        let r = recurrence_average(
            &f7,
            &Poly::x(),
            &ProductSet::line(b.clone()),
            &ProductSet::line(b.clone()),
            true,
        )
        .unwrap();
        let mut total = 0u64;
        for u in 1..7u64 {
            for v in 0..7u64 {
                let ue = f7.elem(u).unwrap();
                let ve = f7.elem(v).unwrap();
                // v ∈ u(B−u) ⟺ v/u + u ∈ B
                let back = f7.add(f7.div(ve, ue).unwrap(), ue);
                if b.contains_elem(ve) && b.contains_elem(back) {
                    total += 1;
                }
            }
        }
        assert_eq!(r.total_count, BigUint::from(total));
        assert!((r.avg - total as f64 / 42.0).abs() < 1e-12);
    }

    #[test]
    fn recurrence_rejects_two_set_claim_on_mismatch() {
        let f7 = field(7, 1);
        let b = ProductSet::line(Subset::from_indices(&f7, &[1]).unwrap());
        let c = ProductSet::line(Subset::from_indices(&f7, &[2]).unwrap());
        assert_eq!(
            recurrence_average(&f7, &Poly::x(), &b, &c, true).unwrap_err(),
            AveragesError::MismatchedSets
        );
        // Two-set bound only exists at m = 1.
        let b2 = ProductSet::new(vec![
            Subset::from_indices(&f7, &[1]).unwrap(),
            Subset::from_indices(&f7, &[1, 2]).unwrap(),
        ]);
        let r = recurrence_average(&f7, &Poly::x(), &b2, &b2, true).unwrap();
        assert!(r.bound_ergodic.is_none());
        assert!(r.bound_same_set.is_some());

        let c2 = ProductSet::new(vec![
            Subset::from_indices(&f7, &[2]).unwrap(),
            Subset::from_indices(&f7, &[1, 2]).unwrap(),
        ]);
        assert_eq!(
            recurrence_average(&f7, &Poly::x(), &b2, &c2, false).unwrap_err(),
            AveragesError::ErgodicBoundAtProductSpace
        );
    }

    #[test]
    fn return_times_full_set() {
        let f7 = field(7, 1);
        let full = ProductSet::line(Subset::full(&f7));
        let rt = return_time_set(&f7, &Poly::x(), &full, &full, &ratio(1, 2)).unwrap();
        assert_eq!(rt.d.size(), 6);
        assert!(rt.lower_bound <= 1.0);
        assert!(rt.d.size() as f64 / 6.0 >= rt.lower_bound);
    }

    #[test]
    fn return_times_empty_when_delta_maximal() {
        // δ at the maximum attained measure leaves D empty and the
        // bound non-positive.
        let f11 = field(11, 1);
        let b = Subset::from_indices(&f11, &[0, 1, 2, 3, 4, 5]).unwrap();
        let bp = ProductSet::line(b.clone());
        let sq = Poly::from_indices(&[0, 0, 1]);
        let mut max_count = 0u64;
        for u in f11.star() {
            let pu = f11.eval_poly(&sq, u).unwrap();
            let moved = b.affine_image(&f11, u, f11.neg(f11.mul(u, pu))).unwrap();
            max_count = max_count.max(b.intersect_count(&moved));
        }
        let delta = ratio(max_count, 11);
        if delta < bp.measure() {
            let rt = return_time_set(&f11, &sq, &bp, &bp, &delta).unwrap();
            assert!(rt.d.is_empty());
            assert!(rt.lower_bound <= 0.0);
        }

        // δ must stay below μ(B).
        assert_eq!(
            return_time_set(&f11, &sq, &bp, &bp, &ratio(6, 11)).unwrap_err(),
            AveragesError::DeltaTooLarge
        );
    }

    #[test]
    fn return_times_z11_square_bound_holds() {
        let f11 = field(11, 1);
        let b = ProductSet::line(Subset::from_indices(&f11, &[0, 1, 2, 3, 4, 5]).unwrap());
        let sq = Poly::from_indices(&[0, 0, 1]);
        let rt = return_time_set(&f11, &sq, &b, &b, &ratio(1, 11)).unwrap();
        assert!(rt.d.size() as f64 / 10.0 >= rt.lower_bound);
    }

    #[test]
    fn shkredov_norm_rejects_zero_membership_and_tiny_fields() {
        let f11 = field(11, 1);
        let with_zero = Subset::from_indices(&f11, &[0, 1]).unwrap();
        let fine = Subset::from_indices(&f11, &[1, 2]).unwrap();
        assert_eq!(
            shkredov_norm(&f11, &with_zero, &fine).unwrap_err(),
            AveragesError::ZeroInSet
        );
        let f5 = field(5, 1);
        let s = Subset::from_indices(&f5, &[1]).unwrap();
        assert_eq!(
            shkredov_norm(&f5, &s, &s).unwrap_err(),
            AveragesError::FieldTooSmall(8)
        );
    }

    #[test]
    fn shkredov_empty_factor_gives_zero() {
        let f11 = field(11, 1);
        let b = Subset::star(&f11);
        let empty = Subset::empty(&f11);
        let out = shkredov_norm(&f11, &b, &empty).unwrap();
        assert!(out.normsq <= 1e-18);
        let out = shkredov_norm(&f11, &empty, &b).unwrap();
        assert!(out.normsq <= 1e-18);
    }

    // vdC expansion of the Shkredov average with the product family
    // a_u = M_u A_{−u} f · M_u g.
    fn shkredov_via_vdc(field: &Field, b: &Subset, c: &Subset) -> f64 {
        let f = balanced_line_indicator(b);
        let g = GridFn::indicator(c);
        let fam: Vec<GridFn> = field
            .star()
            .map(|u| {
                let left = f
                    .koopman_add(field, field.neg(u))
                    .koopman_mul(field, u)
                    .unwrap();
                let right = g.koopman_mul(field, u).unwrap();
                left.mul_pointwise(&right).unwrap()
            })
            .collect();
        let check = vdc_identity_residual(field, GroupKind::Multiplicative, &fam).unwrap();
        let star = (field.order() - 1) as f64;
        check.rhs / (star * star)
    }

    #[test]
    fn shkredov_norm_agrees_with_vdc_expansion() {
        let f11 = field(11, 1);
        let b = Subset::from_indices(&f11, &[1, 2, 3, 4, 5]).unwrap();
        let out = shkredov_norm(&f11, &b, &b).unwrap();
        let expanded = shkredov_via_vdc(&f11, &b, &b);
        assert!(
            (out.normsq - expanded).abs() <= 1e-9,
            "{} vs {expanded}",
            out.normsq
        );
        assert!(out.normsq <= out.proof_bound);
    }

    // Literal triple loop for the diagonal second-moment sum.
    fn inner_diag_brute(field: &Field, b: &Subset) -> f64 {
        let f = balanced_line_indicator(b);
        let n = field.size();
        let star = (n - 1) as f64;
        let mut outer = 0.0;
        for v in field.star() {
            let inv_v = field.inv(v).unwrap();
            let mut norm = 0.0;
            for x in 0..n as u32 {
                let xe = field.elem(x as u64).unwrap();
                let mut t = 0.0;
                for u in field.elems() {
                    let arg1 = field.add(field.mul(xe, inv_v), field.mul(u, v));
                    let arg2 = field.add(xe, u);
                    t += f.values()[arg1.idx()] * f.values()[arg2.idx()];
                }
                norm += (t / star) * (t / star);
            }
            outer += norm / n as f64;
        }
        outer / star
    }

    #[test]
    fn inner_diag_matches_brute_force() {
        for (p, k) in [(11u64, 1u32), (3, 2)] {
            let f = field(p, k);
            let b = Subset::from_indices(&f, &[1, 2, 4]).unwrap();
            let fast = inner_diag_sum(&f, &balanced_line_indicator(&b)).unwrap();
            let brute = inner_diag_brute(&f, &b);
            assert!((fast - brute).abs() <= 1e-12, "{fast} vs {brute}");
        }
    }

    #[test]
    fn vacuous_detector_is_exact() {
        // q = 1: satisfiable ⟺ |F*| > 6.
        assert!(recurrence_hypothesis_vacuous(&field(7, 1), 1)); // |F*| = 6
        assert!(!recurrence_hypothesis_vacuous(&field(2, 3), 1)); // |F*| = 7
                                                                  // q = 2: needs |F*| > 64.
        assert!(recurrence_hypothesis_vacuous(&field(61, 1), 2));
        assert!(!recurrence_hypothesis_vacuous(&field(67, 1), 2));
    }
}
