//! Closed-form existence verdicts for families of disjoint subspaces.
//!
//! All counts are exact integers. Each number in a report carries the name
//! of the result it comes from:
//!
//! | key | statement |
//! |-----|-----------|
//! | `andre` | a (t-1)-spread of PG(p-1,2) exists iff t divides p |
//! | `eisfeld-storme` | a partial (t-1)-spread of size 2^r(2^kt - 1)/(2^t - 1) - 2^r + 1 exists |
//! | `govaerts` | lower bounds on the deficiency of any partial spread |
//! | `pairwise-overlap` | two subspaces of dims t1, t2 > p in total share at least 2^(t1+t2-p) - 1 points, and this is attained |
//! | `mixed-spread` | for p/2 < t1 < p there are 2^t1 + 1 disjoint slots: one of dim t1, the rest up to p - t1 |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projective::{intersect, span, Effect, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Pairwise disjoint stage subspaces of the requested sizes exist.
    Exists,
    /// Some pair of stages must overlap.
    ExistsWithOverlap,
    /// The guaranteed count is too small but the upper bound leaves room.
    UnknownWithinBounds,
}

/// Which result produced a number in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub quantity: String,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub p: usize,
    pub dims: Vec<usize>,
    pub verdict: Verdict,
    /// Number of disjoint subspaces (or slots) a construction guarantees.
    #[serde(rename = "guarantee")]
    pub guaranteed_count: Option<u64>,
    /// Largest number of disjoint subspaces that can exist.
    pub upper_bound: Option<u64>,
    /// Smallest achievable overlap between the worst pair of stages;
    /// 0 iff pairwise disjointness is achievable.
    #[serde(rename = "min_overlap")]
    pub min_overlap_size: u64,
    pub k: Option<usize>,
    pub r: Option<usize>,
    pub deficiency: Option<u64>,
    /// Guarantee < bound, and nothing known closes the gap.
    pub open_gap: bool,
    pub provenance: Vec<Provenance>,
    pub notes: Vec<String>,
}

impl ExistenceReport {
    fn new(p: usize, dims: Vec<usize>) -> Self {
        Self {
            p,
            dims,
            verdict: Verdict::Exists,
            guaranteed_count: None,
            upper_bound: None,
            min_overlap_size: 0,
            k: None,
            r: None,
            deficiency: None,
            open_gap: false,
            provenance: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn cite(&mut self, quantity: &str, result: &str) {
        self.provenance.push(Provenance {
            quantity: quantity.into(),
            result: result.into(),
        });
    }
}

fn pow2(e: usize) -> u64 {
    1u64 << e
}

/// Number of points of PG(t-1, 2).
pub fn points(t: usize) -> u64 {
    pow2(t) - 1
}

pub fn full_spread_exists(p: usize, t: usize) -> bool {
    t >= 1 && t < p && p.is_multiple_of(t)
}

/// Members of a full (t-1)-spread, `(2^p - 1)/(2^t - 1)`.
pub fn full_spread_size(p: usize, t: usize) -> Result<u64> {
    if !full_spread_exists(p, t) {
        return Err(Error::NoFullSpread { p, t });
    }
    Ok(points(p) / points(t))
}

fn decompose(p: usize, t: usize) -> Result<(usize, usize)> {
    if t == 0 || t >= p {
        return Err(Error::InvalidParameters(format!("need 0 < t < p, got t = {t}, p = {p}")));
    }
    let (k, r) = (p / t, p % t);
    if r == 0 {
        return Err(Error::InvalidParameters(format!(
            "t = {t} divides p = {p}; the full spread has {} members",
            points(p) / points(t)
        )));
    }
    Ok((k, r))
}

fn nominal(k: usize, r: usize, t: usize) -> u64 {
    pow2(r) * (points(k * t) / points(t))
}

/// Size of the partial spread guaranteed for `p = kt + r`, `0 < r < t`.
pub fn partial_spread_guarantee(p: usize, t: usize) -> Result<u64> {
    let (k, r) = decompose(p, t)?;
    Ok(nominal(k, r, t) - pow2(r) + 1)
}

/// Smallest deficiency any partial spread must have.
pub fn min_deficiency(p: usize, t: usize) -> Result<u64> {
    let (_, r) = decompose(p, t)?;
    Ok(if r == 1 {
        1
    } else if t >= 2 * r {
        pow2(r - 1) - 1
    } else {
        pow2(r - 1) - pow2(2 * r - t - 1) + 1
    })
}

/// Largest size a partial (t-1)-spread can have: nominal count minus the
/// minimum deficiency.
pub fn partial_spread_upper_bound(p: usize, t: usize) -> Result<u64> {
    let (k, r) = decompose(p, t)?;
    Ok(nominal(k, r, t) - min_deficiency(p, t)?)
}

/// Minimum size of `S1 ∩ S2` over subspaces of dims `t1`, `t2`.
pub fn pairwise_min_overlap(p: usize, t1: usize, t2: usize) -> u64 {
    if t1 + t2 <= p {
        0
    } else {
        points(t1 + t2 - p)
    }
}

/// A pair of subspaces attaining [`pairwise_min_overlap`]: the first `t1`
/// main effects and the last `t2` main effects.
pub fn overlap_witness(p: usize, t1: usize, t2: usize) -> Result<(Subspace, Subspace)> {
    if t1 == 0 || t2 == 0 || t1 >= p || t2 >= p {
        return Err(Error::InvalidParameters(format!("need 0 < t1, t2 < p = {p}")));
    }
    let first: Vec<Effect> = (0..t1).map(Effect::main).collect();
    let second: Vec<Effect> = if t1 + t2 <= p {
        (t1..t1 + t2).map(Effect::main).collect()
    } else {
        (p - t2..p).map(Effect::main).collect()
    };
    Ok((span(p, &first)?, span(p, &second)?))
}

/// Size of the witness pair's intersection.
pub fn witness_overlap(p: usize, t1: usize, t2: usize) -> Result<u64> {
    let (a, b) = overlap_witness(p, t1, t2)?;
    Ok(intersect(&a, &b)?.map_or(0, |s| s.len() as u64))
}

fn worst_pair(p: usize, dims: &[usize]) -> u64 {
    let mut worst = 0;
    for i in 0..dims.len() {
        for j in i + 1..dims.len() {
            worst = worst.max(pairwise_min_overlap(p, dims[i], dims[j]));
        }
    }
    worst
}

/// Existence of one member of dim `t1 > p/2` plus stages of dims `others`.
pub fn mixed_existence(p: usize, t1: usize, others: &[usize]) -> ExistenceReport {
    let mut dims = vec![t1];
    dims.extend_from_slice(others);
    let mut rep = ExistenceReport::new(p, dims.clone());
    if t1 >= p {
        rep.verdict = Verdict::ExistsWithOverlap;
        rep.min_overlap_size = others.iter().map(|&t| points(t)).max().unwrap_or(0);
        rep.notes.push(format!("t1 = {t1} >= p: the first stage is the whole effect space"));
        return rep;
    }
    if 2 * t1 == p {
        rep.guaranteed_count = Some(pow2(t1) + 1);
        rep.upper_bound = rep.guaranteed_count;
        rep.cite("guarantee", "andre");
        rep.notes.push(format!(
            "t1 = p/2: a ({}-1)-spread of {} members exists; use it directly",
            t1,
            pow2(t1) + 1
        ));
    } else if 2 * t1 < p {
        rep.notes.push("t1 <= p/2: the mixed-size construction does not apply".into());
    } else {
        rep.guaranteed_count = Some(pow2(t1) + 1);
        rep.cite("guarantee", "mixed-spread");
    }
    let limit = p - t1;
    if let Some(&bad) = others.iter().find(|&&t| t > limit) {
        rep.notes.push(format!(
            "precondition failed: stage dimension {bad} exceeds p - t1 = {limit}"
        ));
    }
    rep.min_overlap_size = worst_pair(p, &dims);
    rep.cite("min_overlap", "pairwise-overlap");
    rep.verdict = if rep.min_overlap_size > 0 {
        Verdict::ExistsWithOverlap
    } else if rep.guaranteed_count.is_some_and(|g| g >= dims.len() as u64) {
        Verdict::Exists
    } else {
        Verdict::UnknownWithinBounds
    };
    rep
}

/// Routes a list of stage dimensions to the result that applies.
pub fn feasibility_report(p: usize, dims: &[usize]) -> Result<ExistenceReport> {
    if dims.is_empty() {
        return Err(Error::InvalidParameters("no stage dimensions given".into()));
    }
    if let Some(&bad) = dims.iter().find(|&&t| t == 0 || t >= p) {
        return Err(Error::InvalidParameters(format!(
            "stage dimension {bad} outside 0 < t < p = {p}"
        )));
    }
    let m = dims.len() as u64;
    let t_max = *dims.iter().max().expect("nonempty");
    if 2 * t_max > p && dims.iter().any(|&t| t != t_max) {
        let mut others: Vec<usize> = dims.to_vec();
        let pos = others.iter().position(|&t| t == t_max).expect("present");
        others.remove(pos);
        return Ok(mixed_existence(p, t_max, &others));
    }
    let mut rep = ExistenceReport::new(p, dims.to_vec());
    rep.min_overlap_size = worst_pair(p, dims);
    rep.cite("min_overlap", "pairwise-overlap");
    let t = t_max;
    if p.is_multiple_of(t) {
        let n = points(p) / points(t);
        rep.guaranteed_count = Some(n);
        rep.upper_bound = Some(n);
        rep.cite("guarantee", "andre");
        rep.cite("upper_bound", "andre");
    } else {
        let (k, r) = decompose(p, t)?;
        rep.k = Some(k);
        rep.r = Some(r);
        let g = partial_spread_guarantee(p, t)?;
        let ub = partial_spread_upper_bound(p, t)?;
        rep.guaranteed_count = Some(g);
        rep.upper_bound = Some(ub);
        rep.deficiency = Some(min_deficiency(p, t)?);
        rep.cite("guarantee", "eisfeld-storme");
        rep.cite("upper_bound", "govaerts");
        rep.cite("deficiency", "govaerts");
        rep.notes.push(format!("no full spread: t = {t} does not divide p = {p}"));
        if g < ub {
            rep.open_gap = true;
            rep.notes.push(format!(
                "open: between {g} and {ub} disjoint subspaces; no construction or bound closes the gap"
            ));
        }
    }
    if dims.iter().any(|&d| d != t) {
        rep.notes.push(format!(
            "smaller stages are taken as subspaces of members of dimension {t}"
        ));
    }
    rep.verdict = if rep.min_overlap_size > 0 {
        rep.notes.push(format!(
            "some pair of stages must share at least {} effect(s)",
            rep.min_overlap_size
        ));
        Verdict::ExistsWithOverlap
    } else if rep.guaranteed_count.is_some_and(|g| g >= m) {
        Verdict::Exists
    } else if rep.upper_bound.is_some_and(|u| u >= m) {
        Verdict::UnknownWithinBounds
    } else {
        Verdict::ExistsWithOverlap
    };
    Ok(rep)
}
