//! Requirement-driven construction: stage requests in, a verified design
//! with disjoint randomization subspaces out.
//!
//! The stage dimensions decide the starting family: a mixed family when
//! the largest stage exceeds half the factors, otherwise a cyclic spread
//! or, when the dimension does not divide `p`, a partial spread. A
//! collineation then relabels the family so each stage's member holds its
//! required effects, and members are cut down to the requested size.

use serde::{Deserialize, Serialize};

use crate::collineation::{
    apply_to_spread, find_collineation, Collineation, SearchOptions, SearchOutcome, StageRequirement,
};
use crate::error::{Error, Result};
use crate::existence::{feasibility_report, Verdict};
use crate::field;
use crate::fraction::{build_fraction, generator_candidates, Criterion, FractionDesign, Generator, StageBinding};
use crate::model::{check_incidence_identity, check_orthogonality, Design};
use crate::projective::{factor_letter, parse_effects, rank, Effect, Subspace};
use crate::spread::{cyclic_spread, mixed_spread, partial_spread, Spread};

/// Largest `p` for which the exact `X'X = nI` check is run.
pub const ORTHOGONALITY_CHECK_MAX_P: usize = 12;

/// One stage as requested: effects it must contain and an optional size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRequest {
    pub required: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dim: Option<usize>,
    #[serde(default)]
    pub exact: bool,
}

impl StageRequest {
    /// Parses `"ABC,BDE,CEF;exact"` or `"A,B;dim=3"`.
    pub fn parse(text: &str, factors: usize) -> Result<Self> {
        let mut parts = text.split(';');
        let effects = parts.next().unwrap_or("").trim();
        let required = if effects.is_empty() {
            Vec::new()
        } else {
            parse_effects(effects, factors)?
        };
        let mut req = Self {
            required,
            min_dim: None,
            exact: false,
        };
        for opt in parts.map(str::trim).filter(|o| !o.is_empty()) {
            if opt == "exact" {
                req.exact = true;
            } else if let Some(v) = opt.strip_prefix("dim=") {
                let d = v
                    .parse()
                    .map_err(|_| Error::InvalidParameters(format!("bad stage dimension '{v}'")))?;
                req.min_dim = Some(d);
            } else {
                return Err(Error::InvalidParameters(format!(
                    "unknown stage option '{opt}' (expected 'exact' or 'dim=N')"
                )));
            }
        }
        if req.exact && req.min_dim.is_some_and(|d| d != req.required.len()) {
            return Err(Error::InvalidParameters(
                "an exact stage has the dimension of its required effects".into(),
            ));
        }
        if req.required.is_empty() && req.min_dim.is_none() {
            return Err(Error::InvalidParameters("a stage needs required effects or dim=N".into()));
        }
        Ok(req)
    }

    pub fn render(&self) -> String {
        let mut s = self.required.iter().map(|e| e.label()).collect::<Vec<_>>().join(",");
        if self.exact {
            s.push_str(";exact");
        }
        if let Some(d) = self.min_dim {
            s.push_str(&format!(";dim={d}"));
        }
        s
    }
}

/// A full request. `added` > 0 asks for a 2^(factors - added) fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRequest {
    pub factors: usize,
    #[serde(default)]
    pub added: usize,
    pub stages: Vec<StageRequest>,
    /// Explicit generators `(added factor, basic word)`.
    #[serde(default)]
    pub generators: Vec<(usize, Effect)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstructOptions {
    pub search: SearchOptions,
    /// Attempt the search even when the existence results rule it out.
    pub force: bool,
    pub criterion: Criterion,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        Self {
            search: SearchOptions::default(),
            force: false,
            criterion: Criterion::WlpAberration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Route {
    Cyclic { t: usize, poly: String },
    Partial { t: usize },
    Mixed { t1: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub stage_sizes: Vec<usize>,
    pub pairwise_disjoint: bool,
    pub requirements_met: bool,
    pub incidence_identity: bool,
    /// `None` above [`ORTHOGONALITY_CHECK_MAX_P`].
    pub orthogonal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_words_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_factors: Option<Vec<String>>,
}

impl Verification {
    pub fn passes(&self) -> bool {
        self.pairwise_disjoint
            && self.requirements_met
            && self.incidence_identity
            && self.orthogonal != Some(false)
            && self.fraction_words_ok != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Construction {
    pub request: DesignRequest,
    /// Stage dimensions used.
    pub dims: Vec<usize>,
    pub route: Route,
    pub collineation: Collineation,
    /// Index of the relabelled family member each stage came from.
    pub assignment: Vec<usize>,
    pub candidate_index: u64,
    /// Design over the basic factors.
    pub design: Design,
    pub fraction: Option<FractionDesign>,
    pub verification: Verification,
}

fn stage_dim(req: &StageRequest) -> usize {
    if req.exact {
        req.required.len()
    } else {
        req.min_dim.unwrap_or(0).max(rank(&req.required))
    }
}

fn starting_family(p: usize, dims: &[usize]) -> Result<(Route, Spread)> {
    let t = *dims.iter().max().expect("at least one stage");
    if 2 * t > p && dims.iter().any(|&d| d != t) {
        return Ok((Route::Mixed { t1: t }, mixed_spread(p, t)?));
    }
    if p.is_multiple_of(t) {
        let poly = field::default_primitive(p)?;
        return Ok((
            Route::Cyclic {
                t,
                poly: format!("{:#x}", poly.bits()),
            },
            cyclic_spread(p, t, poly)?,
        ));
    }
    Ok((Route::Partial { t }, partial_spread(p, t)?))
}

struct BaseResult {
    dims: Vec<usize>,
    route: Route,
    matched: crate::collineation::CollineationMatch,
    stages: Vec<Subspace>,
}

fn construct_base(p: usize, stages: &[StageRequest], opts: &ConstructOptions) -> Result<BaseResult> {
    if stages.is_empty() {
        return Err(Error::InvalidParameters("at least one stage is required".into()));
    }
    for (i, s) in stages.iter().enumerate() {
        if rank(&s.required) != s.required.len() {
            return Err(Error::NotIndependent(format!(
                "stage {} effects {}",
                i + 1,
                s.required.iter().map(|e| e.label()).collect::<Vec<_>>().join(",")
            )));
        }
    }
    let dims: Vec<usize> = stages.iter().map(stage_dim).collect();
    if let Some((i, &d)) = dims.iter().enumerate().find(|(_, &d)| d == 0 || d >= p) {
        return Err(Error::InvalidParameters(format!(
            "stage {} would have dimension {d}; need 0 < t < p = {p}",
            i + 1
        )));
    }
    let report = feasibility_report(p, &dims)?;
    if report.verdict != Verdict::Exists && !opts.force {
        return Err(Error::Infeasible(format!(
            "no guaranteed construction of {} pairwise disjoint stages of dimensions {:?} in 2^{p} ({}); {}",
            dims.len(),
            dims,
            match report.verdict {
                Verdict::ExistsWithOverlap => "overlap unavoidable",
                _ => "existence open",
            },
            report.notes.join("; ")
        )));
    }
    let (route, family) = starting_family(p, &dims)?;
    let reqs: Vec<StageRequirement> = stages
        .iter()
        .zip(&dims)
        .map(|(s, &d)| StageRequirement::containing(s.required.clone(), d))
        .collect();
    let matched = match find_collineation(&family, &reqs, &opts.search).map_err(|e| match e {
        Error::Precondition(msg) if opts.force => Error::Infeasible(msg),
        other => other,
    })? {
        SearchOutcome::Found(m) => m,
        SearchOutcome::Infeasible { examined } => {
            return Err(Error::Infeasible(format!(
                "all {examined} candidate relabellings give an inconsistent or singular system: \
                 no collineation maps the starting family onto the requested stages, \
                 so the requirements would force a replicated fraction"
            )))
        }
        SearchOutcome::BudgetExhausted { examined } => return Err(Error::BudgetExhausted(examined)),
    };
    let relabelled = apply_to_spread(&matched.matrix, &family)?;
    let stage_spaces = stages
        .iter()
        .zip(&dims)
        .zip(&matched.assignment)
        .map(|((s, &d), &member)| relabelled.members[member].shrink_to(&s.required, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaseResult {
        dims,
        route,
        matched,
        stages: stage_spaces,
    })
}

/// Splits requests over `r` factors into basic requests and bindings of
/// added factors to stages.
fn split_fraction_request(
    req: &DesignRequest,
) -> Result<(Vec<StageRequest>, Vec<Generator>, Vec<StageBinding>)> {
    let u = req.factors - req.added;
    let explicit: std::collections::BTreeMap<usize, Effect> = req.generators.iter().copied().collect();
    if let Some((&f, _)) = explicit.iter().find(|(&f, _)| f < u || f >= req.factors) {
        return Err(Error::InvalidParameters(format!(
            "generator for {} but added factors are {}..{}",
            factor_letter(f),
            factor_letter(u),
            factor_letter(req.factors - 1)
        )));
    }
    let mut stage_of: std::collections::BTreeMap<usize, usize> = Default::default();
    let mut basic = Vec::with_capacity(req.stages.len());
    let mut bindings = Vec::new();
    for (i, st) in req.stages.iter().enumerate() {
        let mut required = Vec::new();
        let mut added_here = 0;
        for &e in &st.required {
            if e.fits(u) {
                required.push(e);
            } else if e.order() == 1 {
                let f = e.bits().trailing_zeros() as usize;
                if let Some(prev) = stage_of.insert(f, i) {
                    return Err(Error::InvalidParameters(format!(
                        "factor {} required in stages {} and {}",
                        factor_letter(f),
                        prev + 1,
                        i + 1
                    )));
                }
                match explicit.get(&f) {
                    Some(&w) => required.push(w),
                    None => {
                        bindings.push(StageBinding { factor: f, stage: i });
                        added_here += 1;
                    }
                }
            } else {
                return Err(Error::InvalidParameters(format!(
                    "stage {} requirement {e} mixes added factors into an interaction; \
                     list added factors as main effects",
                    i + 1
                )));
            }
        }
        if st.exact && added_here > 0 {
            return Err(Error::InvalidParameters(format!(
                "stage {} is exact but has added factors without explicit generators",
                i + 1
            )));
        }
        let need = rank(&required) + added_here;
        let min_dim = st.min_dim.map(|d| d.max(need)).or((added_here > 0).then_some(need));
        basic.push(StageRequest {
            required,
            min_dim,
            exact: st.exact,
        });
    }
    let fixed: Vec<Generator> = explicit
        .iter()
        .map(|(&factor, &word)| Generator {
            factor,
            word,
            stage: stage_of.get(&factor).copied(),
        })
        .collect();
    let bound: Vec<usize> = bindings.iter().map(|b| b.factor).collect();
    for f in u..req.factors {
        if !explicit.contains_key(&f) && !bound.contains(&f) {
            return Err(Error::InvalidParameters(format!(
                "added factor {} has neither a generator nor a stage",
                factor_letter(f)
            )));
        }
    }
    Ok((basic, fixed, bindings))
}

pub fn construct(req: &DesignRequest, opts: &ConstructOptions) -> Result<Construction> {
    if req.added >= req.factors {
        return Err(Error::InvalidParameters(format!(
            "s = {} must be below r = {}",
            req.added, req.factors
        )));
    }
    let u = req.factors - req.added;
    let (basic, fixed, bindings) = if req.added == 0 {
        if !req.generators.is_empty() {
            return Err(Error::InvalidParameters("generators given for a full factorial".into()));
        }
        (req.stages.clone(), Vec::new(), Vec::new())
    } else {
        split_fraction_request(req)?
    };
    let base = construct_base(u, &basic, opts)?;
    let design = Design::new(u, base.stages.clone())?;
    let fraction = if req.added > 0 {
        let ranked = generator_candidates(&design, req.factors, &fixed, &bindings, opts.criterion, opts.search.exec)?;
        Some(build_fraction(&design, &ranked[0])?)
    } else {
        None
    };
    let verification = verify(&design, &basic, &base.dims, fraction.as_ref(), req);
    Ok(Construction {
        request: req.clone(),
        dims: base.dims,
        route: base.route,
        collineation: base.matched.matrix,
        assignment: base.matched.assignment,
        candidate_index: base.matched.candidate_index,
        design,
        fraction,
        verification,
    })
}

/// Checks a design against its basic stage requests.
pub fn verify(
    design: &Design,
    basic: &[StageRequest],
    dims: &[usize],
    fraction: Option<&FractionDesign>,
    req: &DesignRequest,
) -> Verification {
    let spaces: Vec<&Subspace> = design.stages.iter().map(|s| &s.subspace).collect();
    let pairwise_disjoint = (0..spaces.len()).all(|i| {
        (i + 1..spaces.len()).all(|j| spaces[i].points().iter().all(|&e| !spaces[j].contains(e)))
    });
    let mut requirements_met = spaces.len() == basic.len()
        && spaces.iter().zip(basic).zip(dims).all(|((s, b), &d)| {
            s.contains_all(&b.required) && s.dim() == d && (!b.exact || s.dim() == b.required.len())
        });
    let stage_factors = fraction.map(|f| f.stage_factor_words());
    if let Some(f) = fraction {
        requirements_met &= req.stages.iter().enumerate().all(|(i, st)| {
            st.required
                .iter()
                .filter(|e| e.order() == 1)
                .all(|e| f.stage_factors[i].contains(&(e.bits().trailing_zeros() as usize)))
        });
    }
    Verification {
        stage_sizes: spaces.iter().map(|s| s.len()).collect(),
        pairwise_disjoint,
        requirements_met,
        incidence_identity: check_incidence_identity(design),
        orthogonal: (design.p <= ORTHOGONALITY_CHECK_MAX_P).then(|| check_orthogonality(design)),
        fraction_words_ok: fraction.map(FractionDesign::satisfies_defining_words),
        stage_factors,
    }
}

impl Construction {
    /// Basic stage requests and the design, as used for verification.
    pub fn basic_requests(&self) -> Result<Vec<StageRequest>> {
        if self.request.added == 0 {
            Ok(self.request.stages.clone())
        } else {
            split_fraction_request(&self.request).map(|(b, _, _)| b)
        }
    }

    pub fn reverify(&self) -> Result<Verification> {
        Ok(verify(
            &self.design,
            &self.basic_requests()?,
            &self.dims,
            self.fraction.as_ref(),
            &self.request,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;

    fn stage(text: &str, f: usize) -> StageRequest {
        StageRequest::parse(text, f).unwrap()
    }

    fn words(s: &Subspace) -> Vec<String> {
        s.labels()
    }

    #[test]
    fn stage_syntax() {
        let s = stage("ABC,BDE,CEF;exact", 6);
        assert!(s.exact);
        assert_eq!(s.required.len(), 3);
        assert_eq!(s.render(), "ABC,BDE,CEF;exact");
        let s = stage("A, B;dim=3", 6);
        assert_eq!(s.min_dim, Some(3));
        assert!(!s.exact);
        assert_eq!(stage(";dim=2", 4).required.len(), 0);
        assert!(StageRequest::parse("A;bogus", 4).is_err());
        assert!(StageRequest::parse("", 4).is_err());
        assert!(StageRequest::parse("A,B;exact;dim=3", 4).is_err());
        assert!(StageRequest::parse("Q", 4).is_err());
    }

    fn three_stage() -> DesignRequest {
        DesignRequest {
            factors: 6,
            added: 0,
            stages: vec![stage("ABC,BDE,CEF;exact", 6), stage("A,B;dim=3", 6), stage("D;dim=3", 6)],
            generators: vec![],
        }
    }

    #[test]
    fn three_stage_request() {
        let c = construct(&three_stage(), &ConstructOptions::default()).unwrap();
        assert!(c.verification.passes(), "{:?}", c.verification);
        assert_eq!(c.verification.stage_sizes, vec![7, 7, 7]);
        assert!(matches!(c.route, Route::Cyclic { t: 3, .. }));
        let s1 = &c.design.stages[0].subspace;
        assert!(s1.contains_all(&stage("ABC,BDE,CEF", 6).required));
    }

    #[test]
    fn construction_is_schedule_independent() {
        let mut seq = ConstructOptions::default();
        seq.search.exec = Exec::Sequential;
        let a = construct(&three_stage(), &seq).unwrap();
        let b = construct(&three_stage(), &ConstructOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_request_takes_mixed_route() {
        let req = DesignRequest {
            factors: 7,
            added: 0,
            stages: vec![stage("A,B,C,D", 7), stage("E,F;dim=3", 7), stage("G;dim=3", 7)],
            generators: vec![],
        };
        let c = construct(&req, &ConstructOptions::default()).unwrap();
        assert_eq!(c.route, Route::Mixed { t1: 4 });
        assert_eq!(c.verification.stage_sizes, vec![15, 7, 7]);
        assert!(c.verification.passes());
    }

    #[test]
    fn smaller_stages_are_cut_from_members() {
        let req = DesignRequest {
            factors: 6,
            added: 0,
            stages: vec![stage("A,B,C", 6), stage("D,E", 6), stage("F", 6)],
            generators: vec![],
        };
        let c = construct(&req, &ConstructOptions::default()).unwrap();
        assert_eq!(c.dims, vec![3, 2, 1]);
        assert_eq!(words(&c.design.stages[2].subspace), vec!["F".to_string()]);
        assert!(c.verification.passes());
    }

    #[test]
    fn overlap_is_refused_unless_forced() {
        let req = DesignRequest {
            factors: 5,
            added: 0,
            stages: vec![stage("A;dim=3", 5), stage("B;dim=3", 5), stage("C;dim=3", 5)],
            generators: vec![],
        };
        assert!(matches!(construct(&req, &ConstructOptions::default()), Err(Error::Infeasible(_))));
        let forced = ConstructOptions {
            force: true,
            ..Default::default()
        };
        assert!(matches!(construct(&req, &forced), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dependent_requirements_are_rejected() {
        let req = DesignRequest {
            factors: 4,
            added: 0,
            stages: vec![stage("A,B", 4), stage("AB,C", 4)],
            generators: vec![],
        };
        assert!(matches!(construct(&req, &ConstructOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn budget_is_reported() {
        let opts = ConstructOptions {
            search: SearchOptions {
                max_candidates: Some(0),
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(construct(&three_stage(), &opts), Err(Error::BudgetExhausted(0)));
    }

    #[test]
    fn split_lot_fraction() {
        let req = DesignRequest {
            factors: 8,
            added: 2,
            stages: vec![
                stage("A,B;dim=3", 8),
                stage("C,D;dim=3", 8),
                stage("E,F;dim=3", 8),
                stage("G,H;dim=3", 8),
            ],
            generators: vec![],
        };
        let c = construct(&req, &ConstructOptions::default()).unwrap();
        let f = c.fraction.as_ref().unwrap();
        assert_eq!(f.n(), 64);
        assert_eq!(f.stage_factor_words(), vec!["AB", "CD", "EF", "GH"]);
        assert_eq!(f.subgroup.words.len(), 3);
        assert!(c.verification.passes(), "{:?}", c.verification);
        assert_eq!(c.reverify().unwrap(), c.verification);
    }

    #[test]
    fn fraction_variant_with_explicit_generator() {
        // S_3 holds F; G and H go to two points of S_3.
        let req = DesignRequest {
            factors: 8,
            added: 2,
            stages: vec![stage("A,B;dim=3", 8), stage("C,D,E", 8), stage("F,G,H", 8)],
            generators: vec![],
        };
        let c = construct(&req, &ConstructOptions::default()).unwrap();
        let f = c.fraction.as_ref().unwrap();
        assert_eq!(f.stage_factor_words(), vec!["AB", "CDE", "FGH"]);
        assert!(c.verification.passes());
    }

    #[test]
    fn fraction_request_errors() {
        let req = DesignRequest {
            factors: 8,
            added: 2,
            stages: vec![stage("A,B;dim=3", 8), stage("C,D;dim=3", 8)],
            generators: vec![(6, "ABC".parse().unwrap())],
        };
        assert!(construct(&req, &ConstructOptions::default()).is_err());
        let req = DesignRequest {
            factors: 6,
            added: 1,
            stages: vec![stage("A,B", 6), stage("AF", 6)],
            generators: vec![],
        };
        assert!(construct(&req, &ConstructOptions::default()).is_err());
    }
}
