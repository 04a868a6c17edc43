//! Regular 2^(r-s) fractions built on a full 2^u design (u = r - s).
//!
//! The first `u` factors are basic. Each added factor is aliased to a word
//! over the basic factors; its level in a run is the parity of that word.
//! An added factor bound to a stage must have its word inside that stage's
//! subspace, so that the factor is constant within the stage's batches.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::model::Design;
use crate::projective::{factor_letter, parse_effect, rank, Effect, Subspace};

/// An added factor and the basic word it is aliased to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    /// Factor index, `u <= factor < r`.
    pub factor: usize,
    /// Word over the basic factors.
    pub word: Effect,
    /// 0-based stage the factor belongs to, if any.
    pub stage: Option<usize>,
}

impl Generator {
    /// The defining word over all `r` factors: `word * factor`.
    pub fn defining_word(&self) -> Effect {
        Effect::new(self.word.bits() | 1 << self.factor).expect("nonzero")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionSpec {
    pub r: usize,
    pub u: usize,
    /// Sorted by factor index.
    pub generators: Vec<Generator>,
}

/// JSON form: `{"factors": 8, "basic": 6, "generators": {"G": "ACE", "H": "BDF"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionJson {
    pub factors: usize,
    pub basic: usize,
    pub generators: BTreeMap<String, String>,
}

impl FractionSpec {
    pub fn new(r: usize, u: usize, mut generators: Vec<Generator>) -> Result<Self> {
        if u == 0 || u > r || r > crate::projective::MAX_FACTORS {
            return Err(Error::InvalidParameters(format!("need 0 < u <= r <= 24, got r = {r}, u = {u}")));
        }
        generators.sort_by_key(|g| g.factor);
        let factors: Vec<usize> = generators.iter().map(|g| g.factor).collect();
        if factors != (u..r).collect::<Vec<_>>() {
            return Err(Error::InvalidParameters(format!(
                "need exactly one generator for each added factor {}..{}",
                factor_letter(u),
                factor_letter(r - 1)
            )));
        }
        let mut seen = BTreeMap::new();
        for g in &generators {
            if !g.word.fits(u) {
                return Err(Error::InvalidParameters(format!(
                    "generator {}={} uses a non-basic factor",
                    factor_letter(g.factor),
                    g.word
                )));
            }
            if g.word.order() < 2 {
                return Err(Error::InvalidParameters(format!(
                    "generator {}={} aliases an added factor to a basic main effect",
                    factor_letter(g.factor),
                    g.word
                )));
            }
            if let Some(prev) = seen.insert(g.word, g.factor) {
                return Err(Error::DuplicateGenerator(format!(
                    "{} (factors {} and {})",
                    g.word,
                    factor_letter(prev),
                    factor_letter(g.factor)
                )));
            }
        }
        Ok(Self { r, u, generators })
    }

    /// The full factorial on `u` factors.
    pub fn full(u: usize) -> Result<Self> {
        Self::new(u, u, Vec::new())
    }

    pub fn s(&self) -> usize {
        self.r - self.u
    }

    pub fn from_json(j: &FractionJson) -> Result<Self> {
        let generators = j
            .generators
            .iter()
            .map(|(name, word)| {
                let f = parse_effect(name, j.factors)?;
                if f.order() != 1 {
                    return Err(Error::InvalidParameters(format!("'{name}' is not a single factor")));
                }
                Ok(Generator {
                    factor: f.bits().trailing_zeros() as usize,
                    word: parse_effect(word, j.basic)?,
                    stage: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(j.factors, j.basic, generators)
    }

    pub fn to_json(&self) -> FractionJson {
        FractionJson {
            factors: self.r,
            basic: self.u,
            generators: self
                .generators
                .iter()
                .map(|g| (factor_letter(g.factor).to_string(), g.word.label()))
                .collect(),
        }
    }

    /// The basic-factor effect that `e` is aliased with, or `None` when `e`
    /// is a defining word.
    pub fn alias_of(&self, e: Effect) -> Option<Effect> {
        let basic_mask = (1u32 << self.u) - 1;
        let folded = self
            .generators
            .iter()
            .filter(|g| e.bits() >> g.factor & 1 == 1)
            .fold(e.bits() & basic_mask, |acc, g| acc ^ g.word.bits());
        Effect::new(folded)
    }

    /// Canonical encoding used to break ties: defining words in factor order.
    pub fn encoding(&self) -> Vec<u32> {
        self.generators.iter().map(|g| g.defining_word().bits()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefiningSubgroup {
    /// All `2^s - 1` nonzero products of generator words, ascending.
    pub words: Vec<Effect>,
    /// `wlp[k]` counts words of length `k`; index 0 is unused.
    pub wlp: Vec<usize>,
}

impl DefiningSubgroup {
    /// Shortest word length; `None` for the full factorial.
    pub fn resolution(&self) -> Option<usize> {
        self.wlp.iter().position(|&c| c > 0)
    }

    pub fn contains(&self, e: Effect) -> bool {
        self.words.binary_search(&e).is_ok()
    }
}

pub fn defining_subgroup(spec: &FractionSpec) -> DefiningSubgroup {
    let gens: Vec<u32> = spec.generators.iter().map(|g| g.defining_word().bits()).collect();
    let mut words: Vec<Effect> = (1u32..1 << gens.len())
        .map(|sel| {
            let w = gens
                .iter()
                .enumerate()
                .filter(|(i, _)| sel >> i & 1 == 1)
                .fold(0u32, |acc, (_, &g)| acc ^ g);
            Effect::new(w).expect("generator words are independent")
        })
        .collect();
    words.sort_unstable();
    let mut wlp = vec![0usize; spec.r + 1];
    for w in &words {
        wlp[w.order() as usize] += 1;
    }
    DefiningSubgroup { words, wlp }
}

/// Mains and two-factor interactions aliased with no other main effect or
/// two-factor interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearCounts {
    pub mains: usize,
    pub two_factor: usize,
}

pub fn clear_effects(spec: &FractionSpec) -> Result<ClearCounts> {
    let dsg = defining_subgroup(spec);
    if dsg.resolution().is_some_and(|res| res < 3) {
        return Err(Error::Precondition("clear effects need resolution III or higher".into()));
    }
    let is_clear = |e: u32| {
        dsg.words
            .iter()
            .all(|w| (e ^ w.bits()).count_ones() > 2)
    };
    let r = spec.r;
    let mains = (0..r).filter(|&i| is_clear(1 << i)).count();
    let two_factor = (0..r)
        .tuple_combinations()
        .filter(|&(i, j)| is_clear(1 << i | 1 << j))
        .count();
    Ok(ClearCounts { mains, two_factor })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Minimum aberration: fewest short words first.
    WlpAberration,
    /// Most clear two-factor interactions, then most clear mains.
    ClearCount,
}

/// Orders candidates best first. Ties fall back to the word-length
/// pattern and then to the canonical encoding, so the order is total.
pub fn rank_designs(candidates: &[FractionSpec], criterion: Criterion, exec: Exec) -> Result<Vec<usize>> {
    if let Some(first) = candidates.first() {
        if candidates.iter().any(|c| (c.r, c.u) != (first.r, first.u)) {
            return Err(Error::InvalidParameters("candidates must share r and s".into()));
        }
    }
    type Key = (i64, i64, Vec<usize>, Vec<u32>);
    let keys: Vec<Key> = exec::map_indexed(exec, candidates.len(), |i| {
        let c = &candidates[i];
        let wlp = defining_subgroup(c).wlp;
        let (a, b) = match criterion {
            Criterion::WlpAberration => (0, 0),
            Criterion::ClearCount => match clear_effects(c) {
                Ok(cc) => (-(cc.two_factor as i64), -(cc.mains as i64)),
                Err(_) => (1, 1),
            },
        };
        (a, b, wlp, c.encoding())
    });
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| keys[i].cmp(&keys[j]));
    Ok(order)
}

/// A fraction laid over a base design, with its stage structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionDesign {
    pub spec: FractionSpec,
    pub subgroup: DefiningSubgroup,
    /// Level masks over all `r` factors, one per run of the base design.
    pub runs: Vec<u32>,
    /// For each stage, the factors held fixed within its batches.
    pub stage_factors: Vec<Vec<usize>>,
}

impl FractionDesign {
    pub fn n(&self) -> usize {
        self.runs.len()
    }

    /// Every run satisfies every defining word.
    pub fn satisfies_defining_words(&self) -> bool {
        self.runs
            .iter()
            .all(|&run| self.subgroup.words.iter().all(|w| w.parity(run) == 0))
    }

    pub fn stage_factor_words(&self) -> Vec<String> {
        self.stage_factors
            .iter()
            .map(|fs| fs.iter().map(|&f| factor_letter(f)).collect())
            .collect()
    }

    /// 0/1 run matrix over all `r` factors.
    pub fn run_matrix(&self) -> Vec<Vec<u8>> {
        self.runs
            .iter()
            .map(|&run| (0..self.spec.r).map(|j| (run >> j & 1) as u8).collect())
            .collect()
    }
}

pub fn build_fraction(base: &Design, spec: &FractionSpec) -> Result<FractionDesign> {
    if base.p != spec.u {
        return Err(Error::DimensionMismatch(base.p, spec.u));
    }
    for g in &spec.generators {
        if let Some(i) = g.stage {
            let stage = base.stages.get(i).ok_or_else(|| {
                Error::InvalidParameters(format!(
                    "generator {} refers to stage {} of a {}-stage design",
                    factor_letter(g.factor),
                    i + 1,
                    base.stages.len()
                ))
            })?;
            if !stage.subspace.contains(g.word) {
                return Err(Error::StageContainment(format!(
                    "{}={} is not in stage {} subspace {}",
                    factor_letter(g.factor),
                    g.word,
                    i + 1,
                    stage.subspace
                )));
            }
        }
    }
    let runs = (0..base.n() as u32)
        .map(|basic| {
            spec.generators
                .iter()
                .fold(basic, |acc, g| acc | g.word.parity(basic) << g.factor)
        })
        .collect();
    let stage_factors = base
        .stages
        .iter()
        .map(|st| {
            (0..spec.r)
                .filter(|&j| spec.alias_of(Effect::main(j)).is_some_and(|a| st.subspace.contains(a)))
                .collect()
        })
        .collect();
    Ok(FractionDesign {
        spec: spec.clone(),
        subgroup: defining_subgroup(spec),
        runs,
        stage_factors,
    })
}

/// Added factors tied to a stage; their words are chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageBinding {
    pub factor: usize,
    pub stage: usize,
}

/// Candidate words for the factors bound to one stage: point sets of the
/// stage subspace, in ascending order, whose words stay independent of
/// each other and of the stage's basic main effects.
fn stage_word_choices(stage: &Subspace, u: usize, k: usize) -> Vec<Vec<Effect>> {
    let basic_mains: Vec<Effect> = stage
        .points()
        .iter()
        .copied()
        .filter(|e| e.order() == 1 && e.fits(u))
        .collect();
    stage
        .points()
        .iter()
        .copied()
        .filter(|e| e.order() >= 2)
        .combinations(k)
        .filter(|ws| {
            let mut all = basic_mains.clone();
            all.extend(ws.iter().copied());
            rank(&all) == all.len()
        })
        .collect()
}

/// Builds every stage-respecting generator assignment for the given
/// bindings (plus fixed generators) and returns them ranked best first.
pub fn generator_candidates(
    base: &Design,
    r: usize,
    fixed: &[Generator],
    bindings: &[StageBinding],
    criterion: Criterion,
    exec: Exec,
) -> Result<Vec<FractionSpec>> {
    let u = base.p;
    let mut by_stage: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in bindings {
        if b.stage >= base.stages.len() {
            return Err(Error::InvalidParameters(format!(
                "factor {} bound to missing stage {}",
                factor_letter(b.factor),
                b.stage + 1
            )));
        }
        by_stage.entry(b.stage).or_default().push(b.factor);
    }
    let per_stage: Vec<(usize, Vec<usize>, Vec<Vec<Effect>>)> = by_stage
        .into_iter()
        .map(|(st, factors)| {
            let choices = stage_word_choices(&base.stages[st].subspace, u, factors.len());
            (st, factors, choices)
        })
        .collect();
    if let Some((st, _, _)) = per_stage.iter().find(|(_, _, c)| c.is_empty()) {
        return Err(Error::Precondition(format!(
            "stage {} has too few independent interaction points for its added factors",
            st + 1
        )));
    }
    let mut specs = Vec::new();
    for combo in per_stage.iter().map(|(_, _, c)| c.iter()).multi_cartesian_product() {
        let mut gens = fixed.to_vec();
        for ((st, factors, _), words) in per_stage.iter().zip(&combo) {
            for (&f, &w) in factors.iter().zip(words.iter()) {
                gens.push(Generator {
                    factor: f,
                    word: w,
                    stage: Some(*st),
                });
            }
        }
        if let Ok(spec) = FractionSpec::new(r, u, gens) {
            specs.push(spec);
        }
    }
    if per_stage.is_empty() {
        specs.push(FractionSpec::new(r, u, fixed.to_vec())?);
    }
    if specs.is_empty() {
        return Err(Error::Precondition("no valid generator assignment".into()));
    }
    let order = rank_designs(&specs, criterion, exec)?;
    Ok(order.into_iter().map(|i| specs[i].clone()).collect())
}
