//! Exact arithmetic in GF(p^k) for small orders.
//!
//! Elements are identified with their canonical index in `[0, p^k)`:
//! the base-p digits of the index, read little-endian, are the
//! coefficients of the representing polynomial. Index 0 is the
//! additive identity and index 1 the multiplicative identity; for
//! k = 1 the enumeration coincides with the residues 0..p-1 under
//! ordinary modular arithmetic.
//!
//! Addition and negation are digit-wise and table-free. Products and
//! inverses go through discrete-log tables built once per field from
//! the lowest-index primitive element, so hot loops pay O(1) per
//! operation even in extension fields.

use thiserror::Error;

/// Largest supported field order. Downstream sums are at worst cubic
/// in |F|, so the cap keeps memory and runtime bounds explicit.
pub const MAX_ORDER: u64 = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("modulus polynomial is reducible over Z_{0}")]
    ReducibleModulus(u64),
    #[error("modulus must be monic of degree {expected}, got degree {got}")]
    DegreeMismatch { expected: u32, got: u32 },
    #[error("field order {0} exceeds the supported maximum 2^20")]
    OrderTooLarge(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("element or polynomial does not live in this field")]
    FieldMismatch,
    #[error("bad field literal: {0}")]
    BadLiteral(String),
}

/// A field element, stored as its canonical index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Elem(u32);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn idx(self) -> usize {
        self.0 as usize
    }

    /// Constructor for indices already known to be in range.
    pub(crate) fn from_raw(i: u32) -> Elem {
        Elem(i)
    }
}

/// A polynomial over the field, little-endian coefficients with
/// trailing zeros stripped (the zero polynomial keeps one zero).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Poly {
    coeffs: Vec<Elem>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Elem>) -> Poly {
        while coeffs.len() > 1 && coeffs.last() == Some(&Elem::ZERO) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Elem::ZERO);
        }
        Poly { coeffs }
    }

    pub fn from_indices(idx: &[u32]) -> Poly {
        Poly::new(idx.iter().map(|&i| Elem(i)).collect())
    }

    /// The monomial x.
    pub fn x() -> Poly {
        Poly::new(vec![Elem::ZERO, Elem::ONE])
    }

    pub fn coeffs(&self) -> &[Elem] {
        &self.coeffs
    }

    pub fn degree(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() == 1
    }

    /// Little-endian coefficient indices joined by commas, the CLI and
    /// report syntax for polynomials.
    pub fn literal(&self) -> String {
        self.coeffs
            .iter()
            .map(|c| c.index().to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// GF(p^k) with its element enumeration and log tables.
#[derive(Clone, Debug)]
pub struct Field {
    p: u64,
    k: u32,
    order: u64,
    /// Monic modulus of degree k, little-endian in Z_p; empty for k = 1.
    modulus: Vec<u64>,
    generator: Elem,
    /// log[e] for e in 1..order; log[0] is a sentinel.
    log: Vec<u32>,
    /// antilog[t] = generator^t for t in 0..order-1.
    antilog: Vec<u32>,
}

impl Field {
    /// Builds GF(p^k). When `modulus` is absent and k >= 2, the
    /// smallest monic irreducible of degree k (by index order of its
    /// coefficient vector) is selected, so fields are identical across
    /// runs.
    pub fn new(p: u64, k: u32, modulus: Option<Vec<u64>>) -> Result<Field, FieldError> {
        if k == 0 {
            return Err(FieldError::DegreeMismatch {
                expected: 1,
                got: 0,
            });
        }
        let big = (p.max(1) as u128).checked_pow(k);
        let order = match big {
            Some(o) if o <= MAX_ORDER as u128 => o as u64,
            _ => {
                return Err(FieldError::OrderTooLarge(
                    big.map_or(u64::MAX, |o| o.min(u64::MAX as u128) as u64),
                ))
            }
        };
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }

        let modulus = match (k, modulus) {
            (1, None) => Vec::new(),
            (1, Some(m)) => {
                return Err(FieldError::DegreeMismatch {
                    expected: 1,
                    got: m.len().saturating_sub(1) as u32,
                })
            }
            (_, Some(m)) => {
                if m.len() != k as usize + 1 || *m.last().unwrap() != 1 {
                    return Err(FieldError::DegreeMismatch {
                        expected: k,
                        got: m.len().saturating_sub(1) as u32,
                    });
                }
                if m.iter().any(|&c| c >= p) {
                    return Err(FieldError::FieldMismatch);
                }
                if !poly_is_irreducible(&m, p) {
                    return Err(FieldError::ReducibleModulus(p));
                }
                m
            }
            (_, None) => search_irreducible(p, k),
        };

        let mut field = Field {
            p,
            k,
            order,
            modulus,
            generator: Elem::ZERO,
            log: Vec::new(),
            antilog: Vec::new(),
        };
        field.generator = field.find_generator();
        field.build_log_tables();
        Ok(field)
    }

    /// Parses a field literal: `p^k` with an optional
    /// `/c0,c1,...,ck` little-endian modulus, e.g. `3^2/1,0,1`.
    /// A bare `p` means `p^1`.
    pub fn parse(literal: &str) -> Result<Field, FieldError> {
        let bad = || FieldError::BadLiteral(literal.to_string());
        let (head, modulus) = match literal.split_once('/') {
            Some((h, m)) => {
                let coeffs = m
                    .split(',')
                    .map(|c| c.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad())?;
                (h, Some(coeffs))
            }
            None => (literal, None),
        };
        let (p, k) = match head.split_once('^') {
            Some((p, k)) => (
                p.trim().parse::<u64>().map_err(|_| bad())?,
                k.trim().parse::<u32>().map_err(|_| bad())?,
            ),
            None => (head.trim().parse::<u64>().map_err(|_| bad())?, 1),
        };
        Field::new(p, k, modulus)
    }

    /// The field literal this field round-trips through `parse`.
    pub fn literal(&self) -> String {
        if self.k == 1 {
            format!("{}^1", self.p)
        } else {
            let coeffs = self
                .modulus
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            format!("{}^{}/{}", self.p, self.k, coeffs)
        }
    }

    pub fn characteristic(&self) -> u64 {
        self.p
    }

    pub fn extension_degree(&self) -> u32 {
        self.k
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    /// |F| as a usize; the order cap keeps this lossless.
    pub fn size(&self) -> usize {
        self.order as usize
    }

    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }

    pub fn generator(&self) -> Elem {
        self.generator
    }

    pub fn elem(&self, index: u64) -> Result<Elem, FieldError> {
        if index < self.order {
            Ok(Elem(index as u32))
        } else {
            Err(FieldError::FieldMismatch)
        }
    }

    pub fn contains(&self, e: Elem) -> bool {
        (e.0 as u64) < self.order
    }

    /// All elements in canonical index order.
    pub fn elems(&self) -> impl Iterator<Item = Elem> {
        (0..self.order as u32).map(Elem)
    }

    /// The nonzero elements in canonical index order.
    pub fn star(&self) -> impl Iterator<Item = Elem> {
        (1..self.order as u32).map(Elem)
    }

    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        if self.k == 1 {
            let s = a.0 as u64 + b.0 as u64;
            Elem(if s >= self.p { s - self.p } else { s } as u32)
        } else {
            let mut out = 0u64;
            let (mut x, mut y, mut base) = (a.0 as u64, b.0 as u64, 1u64);
            for _ in 0..self.k {
                let d = (x % self.p + y % self.p) % self.p;
                out += d * base;
                x /= self.p;
                y /= self.p;
                base *= self.p;
            }
            Elem(out as u32)
        }
    }

    pub fn neg(&self, a: Elem) -> Elem {
        if self.k == 1 {
            Elem(if a.0 == 0 {
                0
            } else {
                (self.p - a.0 as u64) as u32
            })
        } else {
            let mut out = 0u64;
            let (mut x, mut base) = (a.0 as u64, 1u64);
            for _ in 0..self.k {
                let d = x % self.p;
                out += if d == 0 { 0 } else { self.p - d } * base;
                x /= self.p;
                base *= self.p;
            }
            Elem(out as u32)
        }
    }

    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a.0 == 0 || b.0 == 0 {
            return Elem::ZERO;
        }
        if self.k == 1 {
            Elem((a.0 as u64 * b.0 as u64 % self.p) as u32)
        } else {
            let n1 = self.order - 1;
            let t = (self.log[a.idx()] as u64 + self.log[b.idx()] as u64) % n1;
            Elem(self.antilog[t as usize])
        }
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, FieldError> {
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let n1 = self.order - 1;
        let t = (n1 - self.log[a.idx()] as u64) % n1;
        Ok(Elem(self.antilog[t as usize]))
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, mut n: u64) -> Elem {
        let mut base = a;
        let mut acc = Elem::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            n >>= 1;
        }
        acc
    }

    /// Discrete log to the canonical generator; `a` must be nonzero.
    pub fn discrete_log(&self, a: Elem) -> Result<u64, FieldError> {
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.log[a.idx()] as u64)
    }

    pub fn antilog(&self, t: u64) -> Elem {
        Elem(self.antilog[(t % (self.order - 1)) as usize])
    }

    /// Horner evaluation of `poly` at `x`.
    pub fn eval_poly(&self, poly: &Poly, x: Elem) -> Result<Elem, FieldError> {
        if poly.coeffs.iter().any(|c| !self.contains(*c)) || !self.contains(x) {
            return Err(FieldError::FieldMismatch);
        }
        let mut acc = Elem::ZERO;
        for &c in poly.coeffs.iter().rev() {
            acc = self.add(self.mul(acc, x), c);
        }
        Ok(acc)
    }

    /// Admissible polynomials are the non-constant ones of degree at
    /// most char(F) - 1; exactly the degrees for which the difference
    /// polynomial p(x+b) - p(x) drops degree by one.
    pub fn is_admissible(&self, poly: &Poly) -> bool {
        !poly.is_constant()
            && poly.coeffs.iter().all(|c| self.contains(*c))
            && (poly.degree() as u64) < self.p
    }

    // Multiplication through the representing polynomials, used only
    // while the log tables do not exist yet.
    fn mul_raw(&self, a: Elem, b: Elem) -> Elem {
        if self.k == 1 {
            return Elem((a.0 as u64 * b.0 as u64 % self.p) as u32);
        }
        let xa = digits(a.0 as u64, self.p, self.k);
        let xb = digits(b.0 as u64, self.p, self.k);
        let mut prod = vec![0u64; 2 * self.k as usize - 1];
        for (i, &ca) in xa.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            for (j, &cb) in xb.iter().enumerate() {
                prod[i + j] = (prod[i + j] + ca * cb) % self.p;
            }
        }
        // Reduce by the monic modulus: x^k = -(m_0 + ... + m_{k-1} x^{k-1}).
        for i in (self.k as usize..prod.len()).rev() {
            let c = prod[i];
            if c == 0 {
                continue;
            }
            prod[i] = 0;
            for j in 0..self.k as usize {
                let m = self.modulus[j];
                if m != 0 {
                    let t = c * (self.p - m) % self.p;
                    prod[i - self.k as usize + j] = (prod[i - self.k as usize + j] + t) % self.p;
                }
            }
        }
        let mut out = 0u64;
        for (i, &c) in prod.iter().take(self.k as usize).enumerate() {
            out += c * self.p.pow(i as u32);
        }
        Elem(out as u32)
    }

    fn pow_raw(&self, a: Elem, mut n: u64) -> Elem {
        let mut base = a;
        let mut acc = Elem::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = self.mul_raw(acc, base);
            }
            base = self.mul_raw(base, base);
            n >>= 1;
        }
        acc
    }

    // Lowest-index element of multiplicative order |F| - 1.
    fn find_generator(&self) -> Elem {
        let n1 = self.order - 1;
        if n1 == 1 {
            return Elem::ONE;
        }
        let factors = prime_factors(n1);
        for cand in 2..self.order {
            let g = Elem(cand as u32);
            if factors
                .iter()
                .all(|&f| self.pow_raw(g, n1 / f) != Elem::ONE)
            {
                return g;
            }
        }
        unreachable!("every finite field has a primitive element")
    }

    fn build_log_tables(&mut self) {
        let n1 = (self.order - 1) as usize;
        let mut antilog = vec![0u32; n1];
        let mut log = vec![u32::MAX; self.order as usize];
        let mut acc = Elem::ONE;
        for (t, slot) in antilog.iter_mut().enumerate() {
            *slot = acc.0;
            log[acc.idx()] = t as u32;
            acc = self.mul_raw(acc, self.generator);
        }
        debug_assert_eq!(acc, Elem::ONE, "generator order must be |F|-1");
        self.antilog = antilog;
        self.log = log;
    }
}

fn digits(mut x: u64, p: u64, k: u32) -> Vec<u64> {
    let mut out = Vec::with_capacity(k as usize);
    for _ in 0..k {
        out.push(x % p);
        x /= p;
    }
    out
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

// Remainder of a by the monic divisor b, both little-endian over Z_p.
fn poly_rem(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut r: Vec<u64> = a.to_vec();
    let db = b.len() - 1;
    while r.len() > db {
        let lead = *r.last().unwrap();
        if lead != 0 {
            let shift = r.len() - 1 - db;
            for j in 0..db {
                let t = lead * (p - b[j]) % p;
                r[shift + j] = (r[shift + j] + t) % p;
            }
        }
        r.pop();
    }
    r
}

// Exhaustive trial division by every monic polynomial of degree
// 1..=deg/2; the fields here are small enough that nothing faster is
// warranted.
fn poly_is_irreducible(m: &[u64], p: u64) -> bool {
    let deg = m.len() - 1;
    if deg == 0 {
        return false;
    }
    if deg == 1 {
        return true;
    }
    for d in 1..=deg / 2 {
        let count = p.pow(d as u32);
        for idx in 0..count {
            let mut div = digits(idx, p, d as u32);
            div.push(1);
            let rem = poly_rem(m, &div, p);
            if rem.iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

fn search_irreducible(p: u64, k: u32) -> Vec<u64> {
    let count = p.pow(k);
    for idx in 0..count {
        let mut cand = digits(idx, p, k);
        cand.push(1);
        if poly_is_irreducible(&cand, p) {
            return cand;
        }
    }
    unreachable!("monic irreducibles of every degree exist over Z_p")
}
