//! Points and subspaces of the effect space PG(p-1, 2).
//!
//! An effect is a nonzero bit mask; factor `A` is bit 0, `B` bit 1 and so
//! on up to `X` (24 factors). Subspaces keep their basis in the order it was
//! given and their points sorted by ascending mask.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::XorBasis;
use crate::error::{Error, Result};

pub const MAX_FACTORS: usize = 24;
const LETTERS: &[u8; MAX_FACTORS] = b"ABCDEFGHIJKLMNOPQRSTUVWX";

/// Factor letter for index `i` (0 = `A`).
pub fn factor_letter(i: usize) -> char {
    LETTERS[i] as char
}

/// A factorial effect: a point of PG(p-1, 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Effect(u32);

impl Effect {
    /// `None` for the zero vector or masks wider than 24 factors.
    pub fn new(mask: u32) -> Option<Self> {
        (mask != 0 && mask >> MAX_FACTORS == 0).then_some(Self(mask))
    }

    /// Main effect of factor `i`.
    pub fn main(i: usize) -> Self {
        assert!(i < MAX_FACTORS);
        Self(1 << i)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Number of factors in the word (1 = main effect, 2 = two-factor
    /// interaction, ...).
    pub fn order(self) -> u32 {
        self.0.count_ones()
    }

    /// Sum over GF(2); `None` when the two effects coincide.
    pub fn xor(self, other: Effect) -> Option<Effect> {
        Effect::new(self.0 ^ other.0)
    }

    /// True if every factor of the word is among the first `p`.
    pub fn fits(self, p: usize) -> bool {
        self.0 >> p == 0
    }

    /// GF(2) inner product with a run's level vector.
    pub fn parity(self, levels: u32) -> u32 {
        (self.0 & levels).count_ones() & 1
    }

    /// Factor word such as `"BCF"`.
    pub fn label(self) -> String {
        (0..MAX_FACTORS)
            .filter(|&i| self.0 >> i & 1 == 1)
            .map(factor_letter)
            .collect()
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Effect {
    type Err = Error;

    /// Parses without a factor-count bound (any of the 24 letters).
    fn from_str(s: &str) -> Result<Self> {
        parse_effect(s, MAX_FACTORS)
    }
}

impl Serialize for Effect {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Effect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a factor word over the first `p` letters.
pub fn parse_effect(word: &str, p: usize) -> Result<Effect> {
    let word = word.trim();
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let mut mask = 0u32;
    for ch in word.chars() {
        let idx = LETTERS
            .iter()
            .take(p)
            .position(|&l| l as char == ch.to_ascii_uppercase())
            .ok_or(Error::UnknownLetter {
                letter: ch,
                factors: p,
            })?;
        if mask >> idx & 1 == 1 {
            return Err(Error::DuplicateLetter(ch));
        }
        mask |= 1 << idx;
    }
    Ok(Effect(mask))
}

/// Parses a comma- or space-separated list of factor words.
pub fn parse_effects(list: &str, p: usize) -> Result<Vec<Effect>> {
    list.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .map(|w| parse_effect(w, p))
        .collect()
}

/// GF(2) rank of a set of effects.
pub fn rank(effects: &[Effect]) -> usize {
    crate::bits::rank_of(effects.iter().map(|e| e.0))
}

/// A (t-1)-dimensional projective subspace: 2^t - 1 points spanned by a
/// basis of t independent effects.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<Effect>,
    points: Vec<Effect>,
}

impl Subspace {
    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn basis(&self) -> &[Effect] {
        &self.basis
    }

    /// All points, sorted ascending by mask.
    pub fn points(&self) -> &[Effect] {
        &self.points
    }

    /// Vector-space dimension t (projective dimension t - 1).
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, e: Effect) -> bool {
        self.points.binary_search(&e).is_ok()
    }

    pub fn contains_all(&self, effects: &[Effect]) -> bool {
        effects.iter().all(|&e| self.contains(e))
    }

    pub fn smallest(&self) -> Effect {
        self.points[0]
    }

    /// Subspace from a set of points already known to be closed under XOR.
    /// The basis is chosen greedily in the given order.
    pub fn from_points(ambient: usize, pts: impl IntoIterator<Item = Effect>) -> Result<Self> {
        let pts: Vec<Effect> = pts.into_iter().collect();
        let mut xb = XorBasis::new();
        let basis: Vec<Effect> = pts.iter().copied().filter(|e| xb.insert(e.0)).collect();
        let s = span(ambient, &basis)?;
        let mut sorted = pts;
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != s.points {
            return Err(Error::Precondition(format!(
                "{} points do not form a subspace (span has {})",
                sorted.len(),
                s.points.len()
            )));
        }
        Ok(s)
    }

    /// Smallest subspace of `self` that contains `required` and has
    /// dimension `dim`; the extension takes points in ascending order.
    pub fn shrink_to(&self, required: &[Effect], dim: usize) -> Result<Subspace> {
        if !self.contains_all(required) {
            return Err(Error::Precondition(
                "required effects are not in the subspace".into(),
            ));
        }
        let mut xb = XorBasis::new();
        let mut basis = Vec::new();
        for &e in required {
            if !xb.insert(e.0) {
                return Err(Error::NotIndependent(e.label()));
            }
            basis.push(e);
        }
        if dim < basis.len() || dim > self.dim() {
            return Err(Error::Precondition(format!(
                "cannot shrink a {}-dim subspace holding {} required effects to dim {dim}",
                self.dim(),
                basis.len()
            )));
        }
        for &e in &self.points {
            if basis.len() == dim {
                break;
            }
            if xb.insert(e.0) {
                basis.push(e);
            }
        }
        span(self.ambient, &basis)
    }

    /// Points closed under XOR and count consistent with the basis.
    pub fn is_closed(&self) -> bool {
        let mut xb = XorBasis::new();
        for &b in &self.basis {
            if !xb.insert(b.0) {
                return false;
            }
        }
        self.points.len() == (1usize << self.basis.len()) - 1
            && self.points.windows(2).all(|w| w[0] < w[1])
            && self.points.iter().all(|p| xb.contains(p.0))
    }

    pub fn labels(&self) -> Vec<String> {
        self.points.iter().map(|e| e.label()).collect()
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.basis.iter().map(|e| e.label()).collect::<Vec<_>>().join(","))
    }
}

/// Span of independent generators. Dependent generators are an error that
/// names the first generator lying in the span of its predecessors.
pub fn span(ambient: usize, generators: &[Effect]) -> Result<Subspace> {
    let mut xb = XorBasis::new();
    for g in generators {
        if !g.fits(ambient) {
            return Err(Error::UnknownLetter {
                letter: g.label().chars().last().unwrap_or('?'),
                factors: ambient,
            });
        }
        if !xb.insert(g.0) {
            return Err(Error::NotIndependent(g.label()));
        }
    }
    let t = generators.len();
    let mut points = Vec::with_capacity((1 << t) - 1);
    for code in 1u32..(1 << t) {
        let mut m = 0;
        for (k, g) in generators.iter().enumerate() {
            if code >> k & 1 == 1 {
                m ^= g.0;
            }
        }
        points.push(Effect(m));
    }
    points.sort_unstable();
    Ok(Subspace {
        ambient,
        basis: generators.to_vec(),
        points,
    })
}

/// Common points of two subspaces, or `None` when they are disjoint.
pub fn intersect(a: &Subspace, b: &Subspace) -> Result<Option<Subspace>> {
    if a.ambient != b.ambient {
        return Err(Error::DimensionMismatch(a.ambient, b.ambient));
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let common: Vec<Effect> = small
        .points
        .iter()
        .copied()
        .filter(|&e| large.contains(e))
        .collect();
    if common.is_empty() {
        return Ok(None);
    }
    Subspace::from_points(a.ambient, common).map(Some)
}

/// The full effect space PG(p-1, 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectSpace {
    p: usize,
}

impl EffectSpace {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 || p > MAX_FACTORS {
            return Err(Error::InvalidParameters(format!(
                "number of factors must be in 1..={MAX_FACTORS}, got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        (1 << self.p) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> impl Iterator<Item = Effect> {
        (1u32..1 << self.p).map(Effect)
    }

    /// The whole space as a subspace spanned by the main effects.
    pub fn as_subspace(&self) -> Subspace {
        let basis: Vec<Effect> = (0..self.p).map(Effect::main).collect();
        span(self.p, &basis).expect("main effects are independent")
    }
}
