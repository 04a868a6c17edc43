//! Arithmetic in GF(2^p) over a primitive polynomial.
//!
//! Elements are stored as packed polynomials in the root `w` (bit `k` is the
//! coefficient of `w^k`). The factor-word view reverses that order: the
//! coefficient of `w^(p-1)` is the first coordinate and maps to factor `A`,
//! the constant term is the last coordinate. With `x^6 + x + 1` this gives
//! `w^0 = F` and `w^9 = w^4 + w^3 = BC`.

use std::fmt;

use crate::error::{Error, Result};
use crate::projective::Effect;

pub const MIN_DEGREE: usize = 2;
pub const MAX_DEGREE: usize = 24;

/// Canonical primitive polynomials, indexed by degree, leading term included.
const PRIMITIVE_TABLE: [u64; MAX_DEGREE + 1] = [
    0,
    0,
    0x7,         // x^2 + x + 1
    0xB,         // x^3 + x + 1
    0x13,        // x^4 + x + 1
    0x25,        // x^5 + x^2 + 1
    0x43,        // x^6 + x + 1
    0x83,        // x^7 + x + 1
    0x11D,       // x^8 + x^4 + x^3 + x^2 + 1
    0x211,       // x^9 + x^4 + 1
    0x409,       // x^10 + x^3 + 1
    0x805,       // x^11 + x^2 + 1
    0x1053,      // x^12 + x^6 + x^4 + x + 1
    0x201B,      // x^13 + x^4 + x^3 + x + 1
    0x4443,      // x^14 + x^10 + x^6 + x + 1
    0x8003,      // x^15 + x + 1
    0x1100B,     // x^16 + x^12 + x^3 + x + 1
    0x20009,     // x^17 + x^3 + 1
    0x40081,     // x^18 + x^7 + 1
    0x80027,     // x^19 + x^5 + x^2 + x + 1
    0x100009,    // x^20 + x^3 + 1
    0x200005,    // x^21 + x^2 + 1
    0x400003,    // x^22 + x + 1
    0x800021,    // x^23 + x^5 + 1
    0x1000087,   // x^24 + x^7 + x^2 + x + 1
];

/// A monic polynomial over GF(2), packed with the leading term included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldPoly {
    degree: usize,
    bits: u64,
}

impl FieldPoly {
    /// Wraps a packed polynomial such as `0x43` for `x^6 + x + 1`.
    pub fn from_bits(bits: u64) -> Result<Self> {
        if bits < 4 {
            return Err(Error::BadPolynomial { poly: bits, degree: 0 });
        }
        let degree = 63 - bits.leading_zeros() as usize;
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
            return Err(Error::DegreeOutOfRange(degree));
        }
        Ok(Self { degree, bits })
    }

    /// Like [`FieldPoly::from_bits`] but also requires primitivity.
    pub fn primitive_from_bits(bits: u64) -> Result<Self> {
        let poly = Self::from_bits(bits)?;
        if !is_primitive(poly) {
            return Err(Error::NotPrimitive(bits));
        }
        Ok(poly)
    }

    pub fn degree(self) -> usize {
        self.degree
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    /// Number of nonzero field elements, `2^p - 1`.
    pub fn order(self) -> u64 {
        (1u64 << self.degree) - 1
    }

    /// Coefficients from the leading term down to the constant term.
    pub fn coeffs(self) -> Vec<u8> {
        (0..=self.degree)
            .rev()
            .map(|k| (self.bits >> k & 1) as u8)
            .collect()
    }
}

impl fmt::Display for FieldPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = (0..=self.degree)
            .rev()
            .filter(|&k| self.bits >> k & 1 == 1)
            .map(|k| match k {
                0 => "1".to_string(),
                1 => "x".to_string(),
                _ => format!("x^{k}"),
            })
            .collect();
        f.write_str(&terms.join("+"))
    }
}

/// An element of GF(2^p) in the polynomial basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    degree: usize,
    value: u32,
}

impl FieldElement {
    pub fn from_packed(value: u32, poly: FieldPoly) -> Self {
        debug_assert!(u64::from(value) < 1 << poly.degree);
        Self {
            degree: poly.degree,
            value,
        }
    }

    pub fn one(poly: FieldPoly) -> Self {
        Self::from_packed(1, poly)
    }

    /// Packed polynomial value (bit `k` = coefficient of `w^k`).
    pub fn packed(self) -> u32 {
        self.value
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    /// Coordinates `(a_0, .., a_{p-1})` where `a_0` multiplies `w^(p-1)`.
    pub fn coords(self) -> Vec<u8> {
        (0..self.degree)
            .map(|j| (self.value >> (self.degree - 1 - j) & 1) as u8)
            .collect()
    }

    /// The factorial effect this element represents, or `None` for zero.
    pub fn to_effect(self) -> Option<Effect> {
        let mut mask = 0u32;
        for j in 0..self.degree {
            if self.value >> (self.degree - 1 - j) & 1 == 1 {
                mask |= 1 << j;
            }
        }
        Effect::new(mask)
    }
}

#[inline]
fn mul_packed(a: u32, b: u32, poly: FieldPoly) -> u32 {
    let p = poly.degree;
    let top = 1u64 << p;
    let modulus = poly.bits;
    let mut acc = 0u64;
    let mut a = u64::from(a);
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= modulus;
        }
    }
    acc as u32
}

fn pow_packed(base: u32, mut exp: u64, poly: FieldPoly) -> u32 {
    let mut result = 1u32;
    let mut sq = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_packed(result, sq, poly);
        }
        sq = mul_packed(sq, sq, poly);
        exp >>= 1;
    }
    result
}

/// Product of two elements reduced modulo `poly`.
pub fn mul(a: FieldElement, b: FieldElement, poly: FieldPoly) -> FieldElement {
    FieldElement::from_packed(mul_packed(a.value, b.value, poly), poly)
}

/// `w^i` for the root `w` of `poly`. Exponents wrap modulo `2^p - 1`.
pub fn element_power(i: u64, poly: FieldPoly) -> FieldElement {
    FieldElement::from_packed(pow_packed(0b10, i % poly.order(), poly), poly)
}

/// Iterator over `w^0, w^1, ..., w^(2^p - 2)` by repeated multiplication.
pub fn powers(poly: FieldPoly) -> impl Iterator<Item = FieldElement> {
    let top = 1u64 << poly.degree;
    let mut cur = 1u64;
    (0..poly.order()).map(move |_| {
        let out = FieldElement::from_packed(cur as u32, poly);
        cur <<= 1;
        if cur & top != 0 {
            cur ^= poly.bits;
        }
        out
    })
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

/// True iff the root of `poly` has multiplicative order `2^p - 1`.
///
/// Checks `w^(2^p-1) = 1` and `w^((2^p-1)/q) != 1` for every prime `q`
/// dividing `2^p - 1`. A reducible modulus has fewer than `2^p - 1` units,
/// so the order test alone also rules it out.
pub fn is_primitive(poly: FieldPoly) -> bool {
    if poly.bits & 1 == 0 {
        return false;
    }
    let order = poly.order();
    if pow_packed(0b10, order, poly) != 1 {
        return false;
    }
    prime_factors(order)
        .into_iter()
        .all(|q| pow_packed(0b10, order / q, poly) != 1)
}

/// The built-in primitive polynomial of degree `p`.
pub fn default_primitive(p: usize) -> Result<FieldPoly> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&p) {
        return Err(Error::DegreeOutOfRange(p));
    }
    FieldPoly::from_bits(PRIMITIVE_TABLE[p])
}
