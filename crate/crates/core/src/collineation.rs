//! Relabelling a spread so that chosen members carry the effects an
//! experimenter requires.
//!
//! A collineation of PG(p-1, 2) is an invertible p x p matrix `M` acting on
//! row vectors, `z -> zM`. Row `i` of `M` is the image of factor `i`.
//!
//! The search walks a fixed order:
//! 1. stage -> member injections, lexicographic in member index;
//! 2. per stage, subsets of the member's points (ascending masks) of the
//!    size of that stage's requirement, crossed over stages;
//! 3. the resulting source -> target pairs (completed to `p` pairs when the
//!    requirements have lower total rank) become a `p^2 x p^2` system
//!    `Qx = delta` in the entries of `M`;
//! 4. a consistent system with an invertible `M` is accepted.
//!
//! Candidates are numbered in that order and the lowest-numbered feasible
//! candidate is returned regardless of how work is scheduled.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::bits::{BitMatrix, GfSolution, XorBasis};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::projective::{rank, span, Effect, Subspace};
use crate::spread::Spread;

/// An invertible p x p matrix over GF(2), stored as packed rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Collineation {
    p: usize,
    rows: Vec<u32>,
}

/// True iff the packed square matrix has full GF(2) rank.
pub fn is_invertible(rows: &[u32]) -> bool {
    let p = rows.len();
    crate::bits::rank_of(rows.iter().copied()) == p && rows.iter().all(|&r| r >> p == 0)
}

impl Collineation {
    pub fn new(rows: Vec<u32>) -> Result<Self> {
        if !is_invertible(&rows) {
            return Err(Error::Precondition("collineation matrix is singular".into()));
        }
        Ok(Self { p: rows.len(), rows })
    }

    /// Builds from 0/1 rows as printed, first column = factor `A`.
    pub fn from_bit_rows(bit_rows: &[Vec<u8>]) -> Result<Self> {
        let p = bit_rows.len();
        let rows = bit_rows
            .iter()
            .map(|r| {
                if r.len() != p {
                    return Err(Error::Precondition("collineation matrix must be square".into()));
                }
                Ok(r.iter()
                    .enumerate()
                    .fold(0u32, |acc, (j, &b)| acc | (u32::from(b & 1) << j)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            p,
            rows: (0..p).map(|i| 1 << i).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn bit_rows(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|&r| (0..self.p).map(|j| (r >> j & 1) as u8).collect())
            .collect()
    }

    #[inline]
    pub fn apply_bits(&self, v: u32) -> u32 {
        let mut out = 0;
        let mut v = v;
        while v != 0 {
            let i = v.trailing_zeros() as usize;
            out ^= self.rows[i];
            v &= v - 1;
        }
        out
    }

    pub fn compose(&self, then: &Collineation) -> Collineation {
        Collineation {
            p: self.p,
            rows: self.rows.iter().map(|&r| then.apply_bits(r)).collect(),
        }
    }
}

/// Image `eM` of an effect.
pub fn apply(m: &Collineation, e: Effect) -> Effect {
    Effect::new(m.apply_bits(e.bits())).expect("invertible map sends nonzero to nonzero")
}

/// Image of a subspace, spanned by the images of its basis.
pub fn apply_to_subspace(m: &Collineation, s: &Subspace) -> Result<Subspace> {
    let basis: Vec<Effect> = s.basis().iter().map(|&b| apply(m, b)).collect();
    span(s.ambient(), &basis)
}

/// Maps each member pointwise; order and kind are preserved.
pub fn apply_to_spread(m: &Collineation, s: &Spread) -> Result<Spread> {
    if m.p != s.p {
        return Err(Error::DimensionMismatch(m.p, s.p));
    }
    let members = s
        .members
        .iter()
        .map(|sub| apply_to_subspace(m, sub))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spread {
        p: s.p,
        members,
        kind: s.kind,
    })
}

/// Effects one stage's subspace must contain after relabelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRequirement {
    pub required: Vec<Effect>,
    /// Minimum vector-space dimension of the stage subspace.
    pub min_dim: usize,
    /// The stage subspace must equal the span of `required`.
    #[serde(default)]
    pub exact: bool,
}

impl StageRequirement {
    pub fn containing(required: Vec<Effect>, min_dim: usize) -> Self {
        let min_dim = min_dim.max(required.len());
        Self {
            required,
            min_dim,
            exact: false,
        }
    }

    pub fn exact(required: Vec<Effect>) -> Self {
        let min_dim = required.len();
        Self {
            required,
            min_dim,
            exact: true,
        }
    }

    pub fn rank(&self) -> usize {
        rank(&self.required)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if let Some(e) = self.required.iter().find(|e| !e.fits(p)) {
            return Err(Error::Precondition(format!("required effect {e} uses factors beyond {p}")));
        }
        if self.rank() != self.required.len() {
            return Err(Error::Precondition(format!(
                "required effects {} are not independent",
                self.required.iter().join(",")
            )));
        }
        if self.min_dim < self.required.len() {
            return Err(Error::Precondition(format!(
                "min_dim {} below the rank of {} required effects",
                self.min_dim,
                self.required.len()
            )));
        }
        if self.exact && self.min_dim != self.required.len() {
            return Err(Error::Precondition("exact requirement must fix the dimension".into()));
        }
        Ok(())
    }

    /// Whether a member of dimension `dim` can host this stage.
    fn admits(&self, dim: usize) -> bool {
        if self.exact {
            dim == self.required.len()
        } else {
            dim >= self.min_dim
        }
    }
}

/// The system `Qx = delta` whose unknown `x` lists `M` row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub p: usize,
    pub q: BitMatrix,
    pub delta: Vec<bool>,
}

impl LinearSystem {
    /// Reshapes a solution vector into packed matrix rows.
    pub fn rows_from_solution(&self, x: &[bool]) -> Vec<u32> {
        let p = self.p;
        (0..p)
            .map(|i| (0..p).fold(0u32, |acc, j| acc | (u32::from(x[i * p + j]) << j)))
            .collect()
    }
}

/// Encodes `source_s M = target_s` for each of the `p` pairs.
///
/// Block `s` occupies rows `p*s .. p*s + p`; row `i` of the block has a 1 in
/// column `tau*p + i` for every coordinate `tau` set in the source, and
/// `delta` carries the target's coordinates.
pub fn build_system(p: usize, pairs: &[(Effect, Effect)]) -> Result<LinearSystem> {
    if pairs.len() != p {
        return Err(Error::Precondition(format!("expected {p} pairs, got {}", pairs.len())));
    }
    let sources: Vec<Effect> = pairs.iter().map(|pr| pr.0).collect();
    let targets: Vec<Effect> = pairs.iter().map(|pr| pr.1).collect();
    if rank(&sources) != p || !sources.iter().all(|e| e.fits(p)) {
        return Err(Error::Precondition("source effects are not a basis".into()));
    }
    if rank(&targets) != p || !targets.iter().all(|e| e.fits(p)) {
        return Err(Error::Precondition("target effects are not a basis".into()));
    }
    Ok(build_system_unchecked(p, pairs))
}

fn build_system_unchecked(p: usize, pairs: &[(Effect, Effect)]) -> LinearSystem {
    let n = p * p;
    let mut q = BitMatrix::zeros(n, n);
    let mut delta = vec![false; n];
    for (s, (src, tgt)) in pairs.iter().enumerate() {
        for i in 0..p {
            let row = s * p + i;
            for tau in 0..p {
                if src.bits() >> tau & 1 == 1 {
                    q.set(row, tau * p + i, true);
                }
            }
            delta[row] = tgt.bits() >> i & 1 == 1;
        }
    }
    LinearSystem { p, q, delta }
}

/// The unique collineation sending each source of a basis to its target.
pub fn map_basis(p: usize, pairs: &[(Effect, Effect)]) -> Result<Collineation> {
    let sys = build_system(p, pairs)?;
    let sol = solve_gf2(&sys)
        .ok_or_else(|| Error::ConstructionInvariant("basis map system is inconsistent".into()))?;
    Collineation::new(sys.rows_from_solution(&sol.particular))
}

/// Gaussian elimination over GF(2); `None` when inconsistent.
pub fn solve_gf2(sys: &LinearSystem) -> Option<GfSolution> {
    sys.q.solve(&sys.delta)
}

/// Search controls. `max_candidates` caps the number of numbered
/// candidates examined; reaching it is reported, not treated as proof of
/// infeasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchOptions {
    pub exec: Exec,
    pub max_candidates: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollineationMatch {
    pub matrix: Collineation,
    /// `assignment[stage]` is the index of the spread member used.
    pub assignment: Vec<usize>,
    pub pairs: Vec<(Effect, Effect)>,
    pub candidate_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(CollineationMatch),
    /// Every candidate was examined and none works: the spread and the
    /// requirements are nonisomorphic or the requirements are unattainable.
    Infeasible { examined: u64 },
    BudgetExhausted { examined: u64 },
}

/// Result of evaluating one candidate assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CandidateVerdict {
    Inconsistent,
    Singular,
    /// Consistent and invertible but an exact stage was not matched.
    RequirementMismatch,
    Feasible(Collineation),
}

struct Plan<'a> {
    spread: &'a Spread,
    reqs: &'a [StageRequirement],
    targets: Vec<Effect>,
    completion_targets: Vec<Effect>,
    eligible: Vec<Vec<usize>>,
}

fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn lex_completion(p: usize, basis: &mut XorBasis, pool: impl Iterator<Item = u32>, need: usize) -> Vec<Effect> {
    let mut out = Vec::new();
    for v in pool {
        if out.len() == need {
            break;
        }
        if basis.insert(v) {
            out.push(Effect::new(v).expect("nonzero"));
        }
    }
    debug_assert!(out.iter().all(|e| e.fits(p)));
    out
}

impl<'a> Plan<'a> {
    fn new(spread: &'a Spread, reqs: &'a [StageRequirement]) -> Result<Self> {
        let p = spread.p;
        if reqs.is_empty() {
            return Err(Error::Precondition("no stage requirements given".into()));
        }
        if reqs.len() > spread.len() {
            return Err(Error::Precondition(format!(
                "{} stages but only {} spread members",
                reqs.len(),
                spread.len()
            )));
        }
        for r in reqs {
            r.validate(p)?;
        }
        let targets: Vec<Effect> = reqs.iter().flat_map(|r| r.required.iter().copied()).collect();
        if targets.len() > p {
            return Err(Error::Precondition(format!(
                "requirements hold {} effects but only {p} can be independent",
                targets.len()
            )));
        }
        let mut tb = XorBasis::new();
        for t in &targets {
            if !tb.insert(t.bits()) {
                return Err(Error::Precondition(format!(
                    "required effects are not jointly independent ({t} is dependent)"
                )));
            }
        }
        let completion_targets = lex_completion(p, &mut tb, 1u32..(1 << p), p - targets.len());
        let eligible: Vec<Vec<usize>> = reqs
            .iter()
            .map(|r| {
                (0..spread.len())
                    .filter(|&i| r.admits(spread.members[i].dim()))
                    .collect()
            })
            .collect();
        for (k, e) in eligible.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::Precondition(format!(
                    "stage {} needs a member of dimension {} but none exists",
                    k + 1,
                    reqs[k].min_dim
                )));
            }
        }
        Ok(Self {
            spread,
            reqs,
            targets,
            completion_targets,
            eligible,
        })
    }

    fn inner_count(&self, inj: &[usize]) -> u64 {
        inj.iter()
            .zip(self.reqs)
            .map(|(&m, r)| binom(self.spread.members[m].len(), r.required.len()))
            .product()
    }

    /// Stage -> member injections restricted to eligible members, in
    /// lexicographic order, starting after `resume` when given.
    fn injections(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let m = self.reqs.len();
        let n = self.spread.len();
        (0..n).permutations(m).filter(move |inj| {
            inj.iter()
                .zip(&self.eligible)
                .all(|(i, e)| e.binary_search(i).is_ok())
        })
    }

    fn evaluate(&self, inj: &[usize], sources: &[Effect]) -> CandidateVerdict {
        let p = self.spread.p;
        let mut sb = XorBasis::new();
        for s in sources {
            sb.insert(s.bits());
        }
        let need = p - sources.len();
        let mut all_sources = sources.to_vec();
        if need > 0 {
            let unassigned = (0..self.spread.len())
                .filter(|i| !inj.contains(i))
                .flat_map(|i| self.spread.members[i].points().iter().map(|e| e.bits()))
                .sorted_unstable();
            let mut extra = lex_completion(p, &mut sb, unassigned, need);
            if extra.len() < need {
                let more = lex_completion(p, &mut sb, 1u32..(1 << p), need - extra.len());
                extra.extend(more);
            }
            all_sources.extend(extra);
        }
        let pairs: Vec<(Effect, Effect)> = all_sources
            .iter()
            .copied()
            .zip(self.targets.iter().chain(&self.completion_targets).copied())
            .collect();
        if pairs.len() != p {
            return CandidateVerdict::Inconsistent;
        }
        let sys = build_system_unchecked(p, &pairs);
        let Some(sol) = solve_gf2(&sys) else {
            return CandidateVerdict::Inconsistent;
        };
        let rows = sys.rows_from_solution(&sol.particular);
        if !is_invertible(&rows) {
            return CandidateVerdict::Singular;
        }
        let m = Collineation { p, rows };
        for (&member, req) in inj.iter().zip(self.reqs) {
            if req.exact {
                let image = apply_to_subspace(&m, &self.spread.members[member]).expect("invertible");
                let want = span(p, &req.required).expect("validated");
                if image.points() != want.points() {
                    return CandidateVerdict::RequirementMismatch;
                }
            }
        }
        CandidateVerdict::Feasible(m)
    }

    /// Source tuples for one injection, in enumeration order.
    fn source_choices<'b>(&'b self, inj: &[usize]) -> SourceChoices<'b> {
        SourceChoices::new(
            inj.iter().map(|&m| self.spread.members[m].points()).collect(),
            self.reqs.iter().map(|r| r.required.len()).collect(),
        )
    }
}

/// Lexicographic odometer over per-stage k-subsets of member points; the
/// first stage is the most significant digit.
struct SourceChoices<'a> {
    pools: Vec<&'a [Effect]>,
    state: Vec<Vec<usize>>,
    started: bool,
    done: bool,
}

impl<'a> SourceChoices<'a> {
    fn new(pools: Vec<&'a [Effect]>, ks: Vec<usize>) -> Self {
        let done = pools.iter().zip(&ks).any(|(p, &k)| k > p.len());
        Self {
            pools,
            state: ks.iter().map(|&k| (0..k).collect()).collect(),
            started: false,
            done,
        }
    }

    fn current(&self) -> Vec<Effect> {
        self.state
            .iter()
            .zip(&self.pools)
            .flat_map(|(idx, pool)| idx.iter().map(|&i| pool[i]))
            .collect()
    }
}

fn advance_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

impl Iterator for SourceChoices<'_> {
    type Item = Vec<Effect>;

    fn next(&mut self) -> Option<Vec<Effect>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        for stage in (0..self.state.len()).rev() {
            let n = self.pools[stage].len();
            if advance_combination(&mut self.state[stage], n) {
                return Some(self.current());
            }
            let k = self.state[stage].len();
            self.state[stage] = (0..k).collect();
        }
        self.done = true;
        None
    }
}

const CHUNK: usize = 64;

enum ItemResult {
    Found(CollineationMatch),
    Budget,
}

/// Finds a collineation relabelling `spread` so that each stage's assigned
/// member contains (or, for exact stages, equals the span of) its required
/// effects.
pub fn find_collineation(
    spread: &Spread,
    reqs: &[StageRequirement],
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    let plan = Plan::new(spread, reqs)?;
    let budget = options.max_candidates.unwrap_or(u64::MAX);
    let mut offset = 0u64;
    let mut injections = plan.injections();
    loop {
        let chunk: Vec<(Vec<usize>, u64)> = injections
            .by_ref()
            .take(CHUNK)
            .map(|inj| {
                let start = offset;
                offset = offset.saturating_add(plan.inner_count(&inj));
                (inj, start)
            })
            .collect();
        if chunk.is_empty() {
            return Ok(SearchOutcome::Infeasible { examined: offset });
        }
        let hit = exec::find_map_first(options.exec, &chunk, |(inj, start)| {
            for (k, sources) in plan.source_choices(inj).enumerate() {
                let idx = start + k as u64;
                if idx >= budget {
                    return Some(ItemResult::Budget);
                }
                if let CandidateVerdict::Feasible(matrix) = plan.evaluate(inj, &sources) {
                    let pairs = sources.iter().copied().zip(plan.targets.iter().copied()).collect();
                    return Some(ItemResult::Found(CollineationMatch {
                        matrix,
                        assignment: inj.clone(),
                        pairs,
                        candidate_index: idx,
                    }));
                }
            }
            None
        });
        match hit {
            Some(ItemResult::Found(m)) => return Ok(SearchOutcome::Found(m)),
            Some(ItemResult::Budget) => return Ok(SearchOutcome::BudgetExhausted { examined: budget }),
            None if offset >= budget => {
                return Ok(SearchOutcome::BudgetExhausted { examined: budget })
            }
            None => {}
        }
    }
}

/// Tally over the unordered enumeration used to measure how often a
/// template choice succeeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub total: u64,
    pub consistent: u64,
    pub feasible: u64,
}

impl Census {
    pub fn fraction(&self) -> f64 {
        self.feasible as f64 / self.total as f64
    }
}

/// Enumerates unordered member sets (ascending member indices assigned to
/// the stages in listed order) crossed with unordered source subsets, and
/// counts candidates whose system is consistent and whose matrix is
/// invertible.
pub fn feasibility_census(spread: &Spread, reqs: &[StageRequirement], exec: Exec) -> Result<Census> {
    let plan = Plan::new(spread, reqs)?;
    let sets: Vec<Vec<usize>> = (0..spread.len())
        .combinations(reqs.len())
        .filter(|set| {
            set.iter()
                .zip(&plan.eligible)
                .all(|(i, e)| e.binary_search(i).is_ok())
        })
        .collect();
    let tallies = exec::map_indexed(exec, sets.len(), |k| {
        let inj = &sets[k];
        let mut c = Census {
            total: 0,
            consistent: 0,
            feasible: 0,
        };
        for sources in plan.source_choices(inj) {
            c.total += 1;
            match plan.evaluate(inj, &sources) {
                CandidateVerdict::Inconsistent => {}
                CandidateVerdict::Singular => c.consistent += 1,
                CandidateVerdict::RequirementMismatch | CandidateVerdict::Feasible(_) => {
                    c.consistent += 1;
                    c.feasible += 1;
                }
            }
        }
        c
    });
    Ok(tallies.into_iter().fold(
        Census {
            total: 0,
            consistent: 0,
            feasible: 0,
        },
        |a, b| Census {
            total: a.total + b.total,
            consistent: a.consistent + b.consistent,
            feasible: a.feasible + b.feasible,
        },
    ))
}

/// Evaluates a single explicit candidate (stage -> member map plus ordered
/// sources). Exposed for diagnostics and tests.
pub fn evaluate_candidate(
    spread: &Spread,
    reqs: &[StageRequirement],
    assignment: &[usize],
    sources: &[Effect],
) -> Result<CandidateVerdict> {
    let plan = Plan::new(spread, reqs)?;
    if assignment.len() != reqs.len() || sources.len() != plan.targets.len() {
        return Err(Error::Precondition("candidate shape does not match requirements".into()));
    }
    Ok(plan.evaluate(assignment, sources))
}
