//! Spreads, partial spreads and mixed-size families of pairwise disjoint
//! subspaces of PG(p-1, 2).
//!
//! Full spreads come from the cyclic structure of GF(2^p)*: with
//! `N = (2^p - 1)/(2^t - 1)`, member `j` collects `w^(iN + j)` for
//! `i = 0..2^t - 2`, i.e. the coset `w^j * GF(2^t)*`.
//!
//! Partial and mixed families reuse one building block: an `s`-spread of
//! V(2s) containing the coordinate subspace spanned by the first `s`
//! factors, obtained by relabelling a cyclic spread with a collineation.
//! Every other member of that spread meets a coordinate subspace V(n),
//! `s < n <= 2s`, in exactly `n - s` dimensions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bits::XorBasis;
use crate::collineation::{apply_to_spread, map_basis};
use crate::error::{Error, Result};
use crate::field::{self, FieldPoly};
use crate::projective::{span, Effect, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadKind {
    Full,
    Partial,
    Mixed,
}

/// An ordered family of pairwise disjoint subspaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spread {
    pub p: usize,
    pub members: Vec<Subspace>,
    pub kind: SpreadKind,
}

impl Spread {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Sorted member sizes, largest first.
    pub fn size_profile(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.members.iter().map(Subspace::len).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    /// Index of the member containing `e`, if any.
    pub fn member_of(&self, e: Effect) -> Option<usize> {
        self.members.iter().position(|m| m.contains(e))
    }
}

fn check_pt(p: usize, t: usize) -> Result<()> {
    if !(field::MIN_DEGREE..=field::MAX_DEGREE).contains(&p) {
        return Err(Error::DegreeOutOfRange(p));
    }
    if t == 0 || t >= p {
        return Err(Error::InvalidParameters(format!(
            "subspace dimension t must satisfy 1 <= t < p, got t = {t}, p = {p}"
        )));
    }
    Ok(())
}

/// Columns of the cycle table: column `j` lists `w^(iN + j)` for
/// `i = 0..2^t - 2` in cycle order.
pub fn cyclic_table(p: usize, t: usize, poly: FieldPoly) -> Result<Vec<Vec<Effect>>> {
    check_pt(p, t)?;
    if !p.is_multiple_of(t) {
        return Err(Error::NoFullSpread { p, t });
    }
    if poly.degree() != p {
        return Err(Error::BadPolynomial {
            poly: poly.bits(),
            degree: p,
        });
    }
    if !field::is_primitive(poly) {
        return Err(Error::NotPrimitive(poly.bits()));
    }
    let n_members = ((1usize << p) - 1) / ((1usize << t) - 1);
    let rows = (1usize << t) - 1;
    let mut cols = vec![Vec::with_capacity(rows); n_members];
    for (k, el) in field::powers(poly).enumerate() {
        let e = el.to_effect().expect("powers of a primitive root are nonzero");
        cols[k % n_members].push(e);
    }
    Ok(cols)
}

/// The cyclic (t-1)-spread of PG(p-1, 2). Requires `t | p`.
pub fn cyclic_spread(p: usize, t: usize, poly: FieldPoly) -> Result<Spread> {
    let cols = cyclic_table(p, t, poly)?;
    let members = cols
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            Subspace::from_points(p, col).map_err(|e| {
                Error::ConstructionInvariant(format!("cycle {} is not a subspace: {e}", j + 1))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Spread {
        p,
        members,
        kind: SpreadKind::Full,
    })
}

/// An `s`-spread of V(2s) one of whose members is the span of the first
/// `s` main effects. Returns the spread and the index of that member.
pub fn leading_spread(s: usize) -> Result<(Spread, usize)> {
    let n = 2 * s;
    let poly = field::default_primitive(n)?;
    let base = cyclic_spread(n, s, poly)?;
    // Send a basis of member 1, completed lex-first, onto A, B, C, ...
    let mut xb = XorBasis::new();
    let mut sources: Vec<Effect> = base.members[0].basis().to_vec();
    sources.iter().for_each(|e| {
        xb.insert(e.bits());
    });
    for v in 1u32..(1 << n) {
        if sources.len() == n {
            break;
        }
        if xb.insert(v) {
            sources.push(Effect::new(v).expect("nonzero"));
        }
    }
    let pairs: Vec<(Effect, Effect)> = sources
        .into_iter()
        .enumerate()
        .map(|(i, src)| (src, Effect::main(i)))
        .collect();
    let m = map_basis(n, &pairs)?;
    let spread = apply_to_spread(&m, &base)?;
    let leading: Vec<Effect> = (0..s).map(Effect::main).collect();
    let target = span(n, &leading)?;
    let idx = spread
        .members
        .iter()
        .position(|m| m.points() == target.points())
        .ok_or_else(|| Error::ConstructionInvariant("leading subspace missing after relabelling".into()))?;
    Ok((spread, idx))
}

/// Restricts a subspace of a larger space to the coordinate subspace V(n).
fn restrict(member: &Subspace, n: usize) -> Result<Option<Subspace>> {
    let pts: Vec<Effect> = member.points().iter().copied().filter(|e| e.fits(n)).collect();
    if pts.is_empty() {
        return Ok(None);
    }
    Subspace::from_points(n, pts).map(Some)
}

fn sort_by_smallest(members: &mut [Subspace]) {
    members.sort_by_key(Subspace::smallest);
}

/// Partial (t-1)-spread of PG(p-1, 2) for `p = kt + r`, `0 < r < t`, with
/// `2^r (2^(kt) - 1)/(2^t - 1) - 2^r + 1` members.
pub fn partial_spread(p: usize, t: usize) -> Result<Spread> {
    check_pt(p, t)?;
    if p.is_multiple_of(t) {
        return Err(Error::InvalidParameters(format!(
            "t = {t} divides p = {p}; use the cyclic spread"
        )));
    }
    let r = p % t;
    let mut members = partial_members(p, t, r)?;
    sort_by_smallest(&mut members);
    Ok(Spread {
        p,
        members,
        kind: SpreadKind::Partial,
    })
}

/// Members for V(n), `n = jt + r`, `j >= 1`, each as a subspace of V(n).
fn partial_members(n: usize, t: usize, r: usize) -> Result<Vec<Subspace>> {
    if n == t + r {
        let basis: Vec<Effect> = (0..t).map(Effect::main).collect();
        return Ok(vec![span(n, &basis)?]);
    }
    let s = n - t;
    if 2 * s > field::MAX_DEGREE {
        return Err(Error::InvalidParameters(format!(
            "partial spread for p = {n}, t = {t} needs GF(2^{}) which exceeds the polynomial table",
            2 * s
        )));
    }
    let (ambient, lead) = leading_spread(s)?;
    let mut out = Vec::with_capacity(1 << s);
    for (i, m) in ambient.members.iter().enumerate() {
        if i == lead {
            continue;
        }
        let cut = restrict(m, n)?.ok_or_else(|| {
            Error::ConstructionInvariant(format!("member {} misses V({n})", i + 1))
        })?;
        if cut.dim() != t {
            return Err(Error::ConstructionInvariant(format!(
                "member {} meets V({n}) in dimension {} instead of {t}",
                i + 1,
                cut.dim()
            )));
        }
        out.push(cut);
    }
    for sub in partial_members(s, t, r)? {
        out.push(span(n, sub.basis())?);
    }
    Ok(out)
}

/// One (t1-1)-dimensional member spanned by the first `t1` factors plus
/// `2^t1` members of dimension `p - t1`, all pairwise disjoint.
/// Requires `p/2 < t1 < p`.
pub fn mixed_spread(p: usize, t1: usize) -> Result<Spread> {
    if t1 >= p {
        return Err(Error::InvalidParameters(format!(
            "t1 = {t1} >= p = {p}: the distinguished member would be the whole space"
        )));
    }
    if 2 * t1 <= p {
        return Err(Error::InvalidParameters(format!(
            "t1 = {t1} <= p/2; use a cyclic or partial spread instead"
        )));
    }
    if 2 * t1 > field::MAX_DEGREE {
        return Err(Error::DegreeOutOfRange(2 * t1));
    }
    let (ambient, lead) = leading_spread(t1)?;
    let mut rest = Vec::with_capacity(1 << t1);
    for (i, m) in ambient.members.iter().enumerate() {
        if i == lead {
            continue;
        }
        let cut = restrict(m, p)?.ok_or_else(|| {
            Error::ConstructionInvariant(format!("member {} misses the effect space", i + 1))
        })?;
        if cut.dim() != p - t1 {
            return Err(Error::ConstructionInvariant(format!(
                "member {} meets the effect space in dimension {} instead of {}",
                i + 1,
                cut.dim(),
                p - t1
            )));
        }
        rest.push(cut);
    }
    sort_by_smallest(&mut rest);
    let distinguished = span(p, ambient.members[lead].basis())?;
    let mut members = vec![distinguished];
    members.extend(rest);
    Ok(Spread {
        p,
        members,
        kind: SpreadKind::Mixed,
    })
}

/// Outcome of [`verify_spread`]. Violations are listed, not raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub members: usize,
    pub pairwise_disjoint: bool,
    pub all_closed: bool,
    pub covered: usize,
    pub total: usize,
    pub partition: bool,
    pub violations: Vec<String>,
}

impl SpreadReport {
    /// All checks pass for the spread's kind.
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks disjointness, closure of every member, coverage, and (for full
/// spreads) equal dimensions and exact partition of the effect space.
pub fn verify_spread(s: &Spread) -> SpreadReport {
    let total = (1usize << s.p) - 1;
    let mut violations = Vec::new();
    let mut owner: HashMap<Effect, usize> = HashMap::new();
    let mut pairwise_disjoint = true;
    let mut all_closed = true;
    for (i, m) in s.members.iter().enumerate() {
        if m.ambient() != s.p {
            violations.push(format!("member {} lives in {} factors, not {}", i + 1, m.ambient(), s.p));
        }
        if !m.is_closed() {
            all_closed = false;
            violations.push(format!("member {} is not closed under XOR", i + 1));
        }
        for &e in m.points() {
            if let Some(&j) = owner.get(&e) {
                pairwise_disjoint = false;
                violations.push(format!("members {} and {} share point {e}", j + 1, i + 1));
            } else {
                owner.insert(e, i);
            }
        }
    }
    let covered = owner.len();
    let partition = pairwise_disjoint && covered == total;
    match s.kind {
        SpreadKind::Full => {
            if !partition {
                violations.push(format!("full spread covers {covered} of {total} points"));
            }
            if s.members.windows(2).any(|w| w[0].dim() != w[1].dim()) {
                violations.push("full spread members have unequal dimensions".into());
            }
        }
        SpreadKind::Partial => {
            if s.members.windows(2).any(|w| w[0].dim() != w[1].dim()) {
                violations.push("partial spread members have unequal dimensions".into());
            }
        }
        SpreadKind::Mixed => {
            let top = s.members.iter().map(Subspace::dim).max().unwrap_or(0);
            let n_top = s.members.iter().filter(|m| m.dim() == top).count();
            if n_top != 1 || s.members.first().map(Subspace::dim) != Some(top) {
                violations.push("mixed family must lead with a unique largest member".into());
            }
        }
    }
    SpreadReport {
        members: s.members.len(),
        pairwise_disjoint,
        all_closed,
        covered,
        total,
        partition,
        violations,
    }
}
