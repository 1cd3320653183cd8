//! Sets and real-valued functions on F^m under the normalized
//! counting measure, with the diagonal affine action.
//!
//! Set cardinalities and measures are exact (bitsets and big
//! rationals); only function values are doubles. The affine group
//! acts diagonally on F^m — the same translation or scaling in every
//! coordinate — so product sets stay products and transformed product
//! measures factorize coordinate-wise.

use crate::field::{Elem, Field, FieldError};
use crate::rng::SplitMix64;
use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

/// Cap on materialized grids; product-set quantities beyond it must
/// use the factorized paths.
pub const MAX_GRID_CELLS: u64 = 1 << 24;

/// Grids carry at most this many coordinates.
pub const MAX_GRID_DIM: u32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpaceError {
    #[error("scaling by zero is not a group action")]
    ZeroScale,
    #[error("operands live on different grids")]
    ShapeMismatch,
    #[error("grid of {cells} cells exceeds the materialization cap")]
    GridTooLarge { cells: u64 },
    #[error("bad set literal: {0}")]
    BadRule(String),
}

/// An exact rational, the value type of all measures.
pub type Rational = BigRational;

pub fn ratio(num: u64, den: u64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).expect("measure fits in f64")
}

/// Renders a rational as the lossless `num/den` report syntax.
pub fn rational_literal(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// A subset of F, bitset-backed.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Subset {
    order: u32,
    words: Vec<u64>,
}

impl Subset {
    pub fn empty(field: &Field) -> Subset {
        let order = field.order() as u32;
        Subset {
            order,
            words: vec![0; (order as usize).div_ceil(64)],
        }
    }

    pub fn full(field: &Field) -> Subset {
        let mut s = Subset::empty(field);
        for i in 0..field.order() as u32 {
            s.insert(i);
        }
        s
    }

    /// F* = F \ {0}.
    pub fn star(field: &Field) -> Subset {
        let mut s = Subset::full(field);
        s.remove(0);
        s
    }

    pub fn from_indices(field: &Field, indices: &[u32]) -> Result<Subset, FieldError> {
        let mut s = Subset::empty(field);
        for &i in indices {
            if i as u64 >= field.order() {
                return Err(FieldError::FieldMismatch);
            }
            s.insert(i);
        }
        Ok(s)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn insert(&mut self, index: u32) {
        self.words[(index / 64) as usize] |= 1u64 << (index % 64);
    }

    pub fn remove(&mut self, index: u32) {
        self.words[(index / 64) as usize] &= !(1u64 << (index % 64));
    }

    pub fn contains(&self, index: u32) -> bool {
        index < self.order && self.words[(index / 64) as usize] >> (index % 64) & 1 == 1
    }

    pub fn contains_elem(&self, e: Elem) -> bool {
        self.contains(e.index())
    }

    pub fn size(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros();
                    bits &= bits - 1;
                    Some(wi as u32 * 64 + b)
                }
            })
        })
    }

    pub fn intersect(&self, other: &Subset) -> Subset {
        debug_assert_eq!(self.order, other.order);
        Subset {
            order: self.order,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn intersect_count(&self, other: &Subset) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    /// μ(S) = |S| / |F|.
    pub fn measure(&self) -> Rational {
        ratio(self.size(), self.order as u64)
    }

    /// A_w S = S + w.
    pub fn translate(&self, field: &Field, w: Elem) -> Subset {
        self.map(|i| field.add(Elem::from_raw(i), w).index())
    }

    /// M_w S = wS; w must be nonzero.
    pub fn scale(&self, field: &Field, w: Elem) -> Result<Subset, SpaceError> {
        if w == Elem::ZERO {
            return Err(SpaceError::ZeroScale);
        }
        Ok(self.map(|i| field.mul(Elem::from_raw(i), w).index()))
    }

    /// {a·s + b : s ∈ S} in one pass; `a` must be nonzero.
    pub fn affine_image(&self, field: &Field, a: Elem, b: Elem) -> Result<Subset, SpaceError> {
        if a == Elem::ZERO {
            return Err(SpaceError::ZeroScale);
        }
        Ok(self.map(|i| field.add(field.mul(Elem::from_raw(i), a), b).index()))
    }

    fn map(&self, f: impl Fn(u32) -> u32) -> Subset {
        let mut out = Subset {
            order: self.order,
            words: vec![0; self.words.len()],
        };
        for i in self.iter() {
            out.insert(f(i));
        }
        out
    }

    /// The `list:...` literal for explicit round-tripping in reports.
    pub fn literal(&self) -> String {
        let items = self
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!("list:{items}")
    }
}

/// A product B_1 × ⋯ × B_m of subsets of one field. The diagonal
/// action keeps products products, so factor lists may be longer than
/// the grid cap; only materialization is capped.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProductSet {
    factors: Vec<Subset>,
}

impl ProductSet {
    pub fn new(factors: Vec<Subset>) -> ProductSet {
        assert!(
            !factors.is_empty(),
            "a product set needs at least one factor"
        );
        let order = factors[0].order();
        assert!(
            factors.iter().all(|f| f.order() == order),
            "all factors must share one field"
        );
        ProductSet { factors }
    }

    pub fn line(factor: Subset) -> ProductSet {
        ProductSet::new(vec![factor])
    }

    pub fn factors(&self) -> &[Subset] {
        &self.factors
    }

    pub fn m(&self) -> u32 {
        self.factors.len() as u32
    }

    pub fn order(&self) -> u32 {
        self.factors[0].order()
    }

    /// ν(B) = Π |B_j| / |F|^m.
    pub fn measure(&self) -> Rational {
        let mut num = BigInt::from(1u32);
        let mut den = BigInt::from(1u32);
        for f in &self.factors {
            num *= BigInt::from(f.size());
            den *= BigInt::from(f.order() as u64);
        }
        BigRational::new(num, den)
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.factors.iter().map(|f| f.size()).collect()
    }
}

/// A real-valued function on F^m, dense row-major storage with the
/// first coordinate fastest.
#[derive(Clone, PartialEq, Debug)]
pub struct GridFn {
    order: u32,
    m: u32,
    values: Vec<f64>,
}

fn grid_cells(order: u32, m: u32) -> Result<usize, SpaceError> {
    if m == 0 || m > MAX_GRID_DIM {
        return Err(SpaceError::GridTooLarge {
            cells: (order as u64).saturating_pow(m),
        });
    }
    let cells = (order as u64).pow(m);
    if cells > MAX_GRID_CELLS {
        return Err(SpaceError::GridTooLarge { cells });
    }
    Ok(cells as usize)
}

impl GridFn {
    pub fn zeros(field: &Field, m: u32) -> Result<GridFn, SpaceError> {
        let cells = grid_cells(field.order() as u32, m)?;
        Ok(GridFn {
            order: field.order() as u32,
            m,
            values: vec![0.0; cells],
        })
    }

    pub fn constant(field: &Field, m: u32, value: f64) -> Result<GridFn, SpaceError> {
        let mut g = GridFn::zeros(field, m)?;
        g.values.fill(value);
        Ok(g)
    }

    /// The indicator of a subset of F (m = 1).
    pub fn indicator(set: &Subset) -> GridFn {
        let mut values = vec![0.0; set.order() as usize];
        for i in set.iter() {
            values[i as usize] = 1.0;
        }
        GridFn {
            order: set.order(),
            m: 1,
            values,
        }
    }

    /// The indicator of a product set on F^m.
    pub fn product_indicator(set: &ProductSet) -> Result<GridFn, SpaceError> {
        let order = set.order();
        let m = set.m();
        let cells = grid_cells(order, m)?;
        let mut values = vec![0.0; cells];
        let n = order as usize;
        for (i, v) in values.iter_mut().enumerate() {
            let mut rest = i;
            let mut inside = true;
            for f in set.factors() {
                if !f.contains((rest % n) as u32) {
                    inside = false;
                    break;
                }
                rest /= n;
            }
            if inside {
                *v = 1.0;
            }
        }
        Ok(GridFn { order, m, values })
    }

    /// A seeded random function with values drawn by `draw`.
    pub fn random(
        field: &Field,
        m: u32,
        seed: u64,
        draw: impl Fn(&mut SplitMix64) -> f64,
    ) -> Result<GridFn, SpaceError> {
        let mut g = GridFn::zeros(field, m)?;
        let mut rng = SplitMix64::new(seed);
        for v in &mut g.values {
            *v = draw(&mut rng);
        }
        Ok(g)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn same_shape(&self, other: &GridFn) -> Result<(), SpaceError> {
        if self.order == other.order && self.m == other.m {
            Ok(())
        } else {
            Err(SpaceError::ShapeMismatch)
        }
    }

    /// Applies one permutation of F to every coordinate:
    /// out(x_1,…,x_m) = self(π(x_1),…,π(x_m)).
    pub fn permute_axes(&self, perm: &[u32]) -> GridFn {
        debug_assert_eq!(perm.len(), self.order as usize);
        let n = self.order as usize;
        let mut out = vec![0.0; self.values.len()];
        match self.m {
            1 => {
                for (x, o) in out.iter_mut().enumerate() {
                    *o = self.values[perm[x] as usize];
                }
            }
            2 => {
                for x1 in 0..n {
                    let row = perm[x1] as usize * n;
                    let out_row = x1 * n;
                    for x0 in 0..n {
                        out[out_row + x0] = self.values[row + perm[x0] as usize];
                    }
                }
            }
            3 => {
                for x2 in 0..n {
                    let plane = perm[x2] as usize * n * n;
                    let out_plane = x2 * n * n;
                    for x1 in 0..n {
                        let row = plane + perm[x1] as usize * n;
                        let out_row = out_plane + x1 * n;
                        for x0 in 0..n {
                            out[out_row + x0] = self.values[row + perm[x0] as usize];
                        }
                    }
                }
            }
            _ => unreachable!("grids are capped at three coordinates"),
        }
        GridFn {
            order: self.order,
            m: self.m,
            values: out,
        }
    }

    /// Diagonal Koopman translation: (A_u f)(x) = f(x − u·1).
    pub fn koopman_add(&self, field: &Field, u: Elem) -> GridFn {
        let perm: Vec<u32> = (0..self.order)
            .map(|c| field.sub(Elem::from_raw(c), u).index())
            .collect();
        self.permute_axes(&perm)
    }

    /// Diagonal Koopman scaling: (M_u f)(x) = f(x / u); u nonzero.
    pub fn koopman_mul(&self, field: &Field, u: Elem) -> Result<GridFn, SpaceError> {
        let inv = field.inv(u).map_err(|_| SpaceError::ZeroScale)?;
        let perm: Vec<u32> = (0..self.order)
            .map(|c| field.mul(Elem::from_raw(c), inv).index())
            .collect();
        Ok(self.permute_axes(&perm))
    }

    /// P_A f: the average of f over all diagonal translates. The
    /// result is invariant under every `koopman_add`.
    pub fn proj_additive(&self, field: &Field) -> GridFn {
        if self.m == 1 {
            // The translation action on F itself is transitive, so the
            // projection is the constant mean.
            let mean = kahan_sum(self.values.iter().copied()) / self.order as f64;
            return GridFn {
                order: self.order,
                m: 1,
                values: vec![mean; self.values.len()],
            };
        }
        let mut acc = vec![KahanCell::default(); self.values.len()];
        for u in field.elems() {
            let shifted = self.koopman_add(field, u);
            for (a, v) in acc.iter_mut().zip(&shifted.values) {
                a.add(*v);
            }
        }
        let inv_n = 1.0 / self.order as f64;
        GridFn {
            order: self.order,
            m: self.m,
            values: acc.iter().map(|a| a.value() * inv_n).collect(),
        }
    }

    /// P_M f: the average of f over all diagonal scalings by F*.
    pub fn proj_multiplicative(&self, field: &Field) -> GridFn {
        let mut acc = vec![KahanCell::default(); self.values.len()];
        for u in field.star() {
            let scaled = self.koopman_mul(field, u).expect("u ranges over F*");
            for (a, v) in acc.iter_mut().zip(&scaled.values) {
                a.add(*v);
            }
        }
        let inv_n = 1.0 / (self.order as f64 - 1.0);
        GridFn {
            order: self.order,
            m: self.m,
            values: acc.iter().map(|a| a.value() * inv_n).collect(),
        }
    }

    /// ⟨f, g⟩ = |F|^{-m} Σ_x f(x) g(x), so that ‖1_B‖₂² = ν(B).
    pub fn inner(&self, other: &GridFn) -> Result<f64, SpaceError> {
        self.same_shape(other)?;
        let s = kahan_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b));
        Ok(s / self.values.len() as f64)
    }

    pub fn norm2sq(&self) -> f64 {
        kahan_sum(self.values.iter().map(|v| v * v)) / self.values.len() as f64
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn, SpaceError> {
        self.same_shape(other)?;
        Ok(GridFn {
            order: self.order,
            m: self.m,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> GridFn {
        GridFn {
            order: self.order,
            m: self.m,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn mul_pointwise(&self, other: &GridFn) -> Result<GridFn, SpaceError> {
        self.same_shape(other)?;
        Ok(GridFn {
            order: self.order,
            m: self.m,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

/// f = 1_S − P_A 1_S, the zero-additive-mean part of an indicator.
pub fn balanced_indicator(field: &Field, set: &ProductSet) -> Result<GridFn, SpaceError> {
    let ind = GridFn::product_indicator(set)?;
    let proj = ind.proj_additive(field);
    ind.sub(&proj)
}

/// The m = 1 special case: 1_S − μ(S).
pub fn balanced_line_indicator(set: &Subset) -> GridFn {
    let mut g = GridFn::indicator(set);
    let mean = set.size() as f64 / set.order() as f64;
    for v in g.values_mut() {
        *v -= mean;
    }
    g
}

#[derive(Clone, Copy, Default)]
pub(crate) struct KahanCell {
    sum: f64,
    comp: f64,
}

impl KahanCell {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum in ascending iteration order; every norm and inner
/// product goes through here so reports are bitwise reproducible.
pub fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut cell = KahanCell::default();
    for v in values {
        cell.add(v);
    }
    cell.value()
}

/// Set literals accepted by the CLI and config files.
#[derive(Clone, PartialEq, Debug)]
pub enum SetRule {
    /// `list:0,1,4`
    List(Vec<u32>),
    /// `all`
    All,
    /// `star`: F*
    Star,
    /// `random:density=0.5,seed=42`; seed optional, falls back to the
    /// run seed.
    Random { density: f64, seed: Option<u64> },
    /// `first:n`: indices 0..n-1
    First(u32),
}

impl SetRule {
    pub fn parse(text: &str) -> Result<SetRule, SpaceError> {
        let bad = || SpaceError::BadRule(text.to_string());
        if text == "all" {
            return Ok(SetRule::All);
        }
        if text == "star" {
            return Ok(SetRule::Star);
        }
        if let Some(items) = text.strip_prefix("list:") {
            let idx = if items.is_empty() {
                Vec::new()
            } else {
                items
                    .split(',')
                    .map(|t| t.trim().parse::<u32>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad())?
            };
            return Ok(SetRule::List(idx));
        }
        if let Some(n) = text.strip_prefix("first:") {
            return Ok(SetRule::First(n.trim().parse().map_err(|_| bad())?));
        }
        if let Some(args) = text.strip_prefix("random:") {
            let mut density = None;
            let mut seed = None;
            for part in args.split(',') {
                match part.trim().split_once('=') {
                    Some(("density", v)) => density = Some(v.parse::<f64>().map_err(|_| bad())?),
                    Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
            let density = density.ok_or_else(bad)?;
            if !(0.0..=1.0).contains(&density) {
                return Err(bad());
            }
            return Ok(SetRule::Random { density, seed });
        }
        Err(bad())
    }

    /// Builds the subset; deterministic in (rule, seed). A seed inside
    /// the rule overrides `default_seed`.
    pub fn build(&self, field: &Field, default_seed: u64) -> Result<Subset, SpaceError> {
        match self {
            SetRule::All => Ok(Subset::full(field)),
            SetRule::Star => Ok(Subset::star(field)),
            SetRule::List(idx) => Subset::from_indices(field, idx)
                .map_err(|_| SpaceError::BadRule(format!("index out of range in {self:?}"))),
            SetRule::First(n) => {
                if *n as u64 > field.order() {
                    return Err(SpaceError::BadRule(format!(
                        "first:{n} exceeds the field order {}",
                        field.order()
                    )));
                }
                let idx: Vec<u32> = (0..*n).collect();
                Ok(Subset::from_indices(field, &idx).expect("indices checked"))
            }
            SetRule::Random { density, seed } => {
                let mut rng = SplitMix64::new(seed.unwrap_or(default_seed));
                let mut s = Subset::empty(field);
                for i in 0..field.order() as u32 {
                    if rng.next_f64() < *density {
                        s.insert(i);
                    }
                }
                Ok(s)
            }
        }
    }

    pub fn literal(&self) -> String {
        match self {
            SetRule::All => "all".into(),
            SetRule::Star => "star".into(),
            SetRule::List(idx) => format!(
                "list:{}",
                idx.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            SetRule::First(n) => format!("first:{n}"),
            SetRule::Random { density, seed } => match seed {
                Some(s) => format!("random:density={density},seed={s}"),
                None => format!("random:density={density}"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn z5() -> Field {
        Field::new(5, 1, None).unwrap()
    }

    #[test]
    fn measures_are_exact() {
        let f = z5();
        let s = Subset::from_indices(&f, &[0, 1]).unwrap();
        assert_eq!(s.measure(), ratio(2, 5));
        assert_eq!(Subset::empty(&f).measure(), ratio(0, 5));
        let prod = ProductSet::new(vec![
            Subset::from_indices(&f, &[0, 1]).unwrap(),
            Subset::from_indices(&f, &[2]).unwrap(),
        ]);
        assert_eq!(prod.measure(), ratio(2, 25));
    }

    #[test]
    fn set_actions_match_examples() {
        let f = z5();
        let s = Subset::from_indices(&f, &[0, 1]).unwrap();
        let shifted = s.translate(&f, Elem::from_raw(2));
        assert_eq!(shifted, Subset::from_indices(&f, &[2, 3]).unwrap());

        let t = Subset::from_indices(&f, &[1, 2]).unwrap();
        let scaled = t.scale(&f, Elem::from_raw(2)).unwrap();
        assert_eq!(scaled, Subset::from_indices(&f, &[2, 4]).unwrap());

        // Identity actions.
        assert_eq!(s.translate(&f, Elem::ZERO), s);
        assert_eq!(t.scale(&f, Elem::ONE).unwrap(), t);
        assert_eq!(t.scale(&f, Elem::ZERO), Err(SpaceError::ZeroScale));

        // Cardinality is preserved.
        assert_eq!(shifted.size(), s.size());
        assert_eq!(scaled.size(), t.size());
    }

    #[test]
    fn koopman_moves_indicators() {
        let f = z5();
        let ind0 = GridFn::indicator(&Subset::from_indices(&f, &[0]).unwrap());
        let moved = ind0.koopman_add(&f, Elem::from_raw(1));
        assert_eq!(
            moved,
            GridFn::indicator(&Subset::from_indices(&f, &[1]).unwrap())
        );

        let ind12 = GridFn::indicator(&Subset::from_indices(&f, &[1, 2]).unwrap());
        let scaled = ind12.koopman_mul(&f, Elem::from_raw(2)).unwrap();
        assert_eq!(
            scaled,
            GridFn::indicator(&Subset::from_indices(&f, &[2, 4]).unwrap())
        );
    }

    #[test]
    fn koopman_is_diagonal_on_products() {
        let f3 = Field::new(3, 1, None).unwrap();
        let point = ProductSet::new(vec![
            Subset::from_indices(&f3, &[0]).unwrap(),
            Subset::from_indices(&f3, &[0]).unwrap(),
        ]);
        let g = GridFn::product_indicator(&point).unwrap();
        let moved = g.koopman_add(&f3, Elem::ONE);
        let target = ProductSet::new(vec![
            Subset::from_indices(&f3, &[1]).unwrap(),
            Subset::from_indices(&f3, &[1]).unwrap(),
        ]);
        assert_eq!(moved, GridFn::product_indicator(&target).unwrap());
    }

    #[test]
    fn additive_projection_line_and_plane() {
        let f = z5();
        let g = GridFn::indicator(&Subset::from_indices(&f, &[0]).unwrap());
        let proj = g.proj_additive(&f);
        for v in proj.values() {
            assert!((v - 0.2).abs() < 1e-15);
        }

        // On F^2 the projection of a point spreads over the diagonal.
        let f3 = Field::new(3, 1, None).unwrap();
        let point = ProductSet::new(vec![
            Subset::from_indices(&f3, &[0]).unwrap(),
            Subset::from_indices(&f3, &[0]).unwrap(),
        ]);
        let proj2 = GridFn::product_indicator(&point)
            .unwrap()
            .proj_additive(&f3);
        for x1 in 0..3usize {
            for x0 in 0..3usize {
                let expect = if x0 == x1 { 1.0 / 3.0 } else { 0.0 };
                assert!((proj2.values()[x1 * 3 + x0] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn multiplicative_projection_examples() {
        let f = z5();
        let zero_ind = GridFn::indicator(&Subset::from_indices(&f, &[0]).unwrap());
        assert_eq!(zero_ind.proj_multiplicative(&f), zero_ind);

        let one_ind = GridFn::indicator(&Subset::from_indices(&f, &[1]).unwrap());
        let proj = one_ind.proj_multiplicative(&f);
        assert!((proj.values()[0]).abs() < 1e-15);
        for x in 1..5 {
            assert!((proj.values()[x] - 0.25).abs() < 1e-15);
        }

        let star_ind = GridFn::indicator(&Subset::star(&f));
        assert_eq!(star_ind.proj_multiplicative(&f), star_ind);
    }

    #[test]
    fn inner_product_examples() {
        let f = z5();
        let s = Subset::from_indices(&f, &[0, 1]).unwrap();
        let t = Subset::from_indices(&f, &[1, 2]).unwrap();
        let gs = GridFn::indicator(&s);
        let gt = GridFn::indicator(&t);
        assert!((gs.inner(&gs).unwrap() - 0.4).abs() < 1e-15);
        assert!((gs.inner(&gt).unwrap() - 0.2).abs() < 1e-15);
        let g0 = GridFn::indicator(&Subset::from_indices(&f, &[0]).unwrap());
        let g1 = GridFn::indicator(&Subset::from_indices(&f, &[1]).unwrap());
        assert_eq!(g0.inner(&g1).unwrap(), 0.0);
    }

    #[test]
    fn balanced_indicator_has_zero_mean() {
        let f = z5();
        let full = balanced_line_indicator(&Subset::full(&f));
        assert!(full.values().iter().all(|v| v.abs() < 1e-15));

        let s = Subset::from_indices(&f, &[0]).unwrap();
        let b = balanced_line_indicator(&s);
        assert!((b.values()[0] - 0.8).abs() < 1e-15);
        for x in 1..5 {
            assert!((b.values()[x] + 0.2).abs() < 1e-15);
        }
        // norm² = μ(S) − μ(S)² at m = 1.
        for size in [0u32, 1, 2, 3, 4, 5] {
            let idx: Vec<u32> = (0..size).collect();
            let s = Subset::from_indices(&f, &idx).unwrap();
            let mu = size as f64 / 5.0;
            let b = balanced_line_indicator(&s);
            assert!((b.norm2sq() - (mu - mu * mu)).abs() < 1e-12);
            assert!(b.norm2sq() <= 2.0 * mu + 1e-15);
        }

        // The product-space version must also project to zero.
        let f3 = Field::new(3, 1, None).unwrap();
        let prod = ProductSet::new(vec![
            Subset::from_indices(&f3, &[0, 1]).unwrap(),
            Subset::from_indices(&f3, &[2]).unwrap(),
        ]);
        let bal = balanced_indicator(&f3, &prod).unwrap();
        let reproj = bal.proj_additive(&f3);
        assert!(reproj.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn set_rules_parse_and_build() {
        let f = z5();
        assert_eq!(
            SetRule::parse("star").unwrap().build(&f, 0).unwrap(),
            Subset::star(&f)
        );
        assert_eq!(
            SetRule::parse("first:3").unwrap().build(&f, 0).unwrap(),
            Subset::from_indices(&f, &[0, 1, 2]).unwrap()
        );
        let r = SetRule::parse("random:density=0.5,seed=42").unwrap();
        assert_eq!(r.build(&f, 7).unwrap(), r.build(&f, 8).unwrap());
        let r2 = SetRule::parse("random:density=0.5").unwrap();
        assert_eq!(r2.build(&f, 7).unwrap(), r2.build(&f, 7).unwrap());
        assert!(SetRule::parse("random:density=1.5").is_err());
        assert!(SetRule::parse("junk").is_err());
        assert_eq!(
            SetRule::parse("list:0,1,4").unwrap().literal(),
            "list:0,1,4"
        );
    }

    #[test]
    fn grid_cap_enforced() {
        let f = Field::new(401, 1, None).unwrap();
        assert!(matches!(
            GridFn::zeros(&f, 3),
            Err(SpaceError::GridTooLarge { .. })
        ));
        let big = Field::new(2, 13, None).unwrap(); // 8192^2 = 2^26 cells
        assert!(GridFn::zeros(&big, 2).is_err());
        assert!(GridFn::zeros(&big, 1).is_ok());
    }

    #[test]
    fn rational_helpers() {
        let r = ratio(2, 6);
        assert_eq!(rational_literal(&r), "1/3");
        assert!(ratio(0, 5).is_zero());
        assert!((rational_to_f64(&ratio(1, 4)) - 0.25).abs() < 1e-15);
    }
}
