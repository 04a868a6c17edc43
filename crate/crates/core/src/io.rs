//! Design documents: a versioned JSON form of a [`Construction`] and the
//! run matrix in either coding.
//!
//! Effect sets are written as factor words in ascending mask order; stage
//! bases keep their order because it fixes the batch numbering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::collineation::Collineation;
use crate::construct::{Construction, DesignRequest, Route, Verification};
use crate::error::{Error, Result};
use crate::fraction::{build_fraction, FractionJson, FractionSpec};
use crate::model::Design;
use crate::projective::{factor_letter, span, Effect};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDoc {
    pub basis: Vec<Effect>,
    pub points: Vec<Effect>,
    /// Factors held fixed within this stage's batches.
    pub factors: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionDoc {
    #[serde(flatten)]
    pub spec: FractionJson,
    /// Stage (1-based) of each stage-bound added factor.
    #[serde(default)]
    pub generator_stages: BTreeMap<String, usize>,
    pub defining_words: Vec<Effect>,
    pub wlp: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignDoc {
    pub schema: u32,
    /// Basic factors; the design has `2^p` runs.
    pub p: usize,
    /// Letters of all factors, basic then added.
    pub factors: String,
    pub runs: usize,
    pub route: Route,
    pub request: DesignRequest,
    pub dims: Vec<usize>,
    /// 0/1 rows of the collineation matrix used.
    pub collineation: Vec<Vec<u8>>,
    pub assignment: Vec<usize>,
    pub candidate_index: u64,
    pub stages: Vec<StageDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<FractionDoc>,
    pub verification: Verification,
}

pub fn to_doc(c: &Construction) -> DesignDoc {
    let r = c.request.factors;
    let stage_factors: Vec<String> = match &c.fraction {
        Some(f) => f.stage_factor_words(),
        None => c
            .design
            .stages
            .iter()
            .map(|s| {
                s.subspace
                    .points()
                    .iter()
                    .filter(|e| e.order() == 1)
                    .map(|e| e.label())
                    .collect()
            })
            .collect(),
    };
    DesignDoc {
        schema: SCHEMA,
        p: c.design.p,
        factors: (0..r).map(factor_letter).collect(),
        runs: c.design.n(),
        route: c.route.clone(),
        request: c.request.clone(),
        dims: c.dims.clone(),
        collineation: c.collineation.bit_rows(),
        assignment: c.assignment.clone(),
        candidate_index: c.candidate_index,
        stages: c
            .design
            .stages
            .iter()
            .zip(stage_factors)
            .map(|(s, factors)| StageDoc {
                basis: s.subspace.basis().to_vec(),
                points: s.subspace.points().to_vec(),
                factors,
            })
            .collect(),
        fraction: c.fraction.as_ref().map(|f| FractionDoc {
            spec: f.spec.to_json(),
            generator_stages: f
                .spec
                .generators
                .iter()
                .filter_map(|g| g.stage.map(|s| (factor_letter(g.factor).to_string(), s + 1)))
                .collect(),
            defining_words: f.subgroup.words.clone(),
            wlp: f.subgroup.wlp.clone(),
        }),
        verification: c.verification.clone(),
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedDesign(msg.into())
}

/// Rebuilds a construction and recomputes its verification report.
pub fn from_doc(doc: &DesignDoc) -> Result<Construction> {
    if doc.schema != SCHEMA {
        return Err(malformed(format!("unsupported schema {}", doc.schema)));
    }
    if doc.runs != 1usize.checked_shl(doc.p as u32).unwrap_or(0) {
        return Err(malformed(format!("{} runs for p = {}", doc.runs, doc.p)));
    }
    let stages = doc
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sub = span(doc.p, &s.basis).map_err(|e| malformed(format!("stage {}: {e}", i + 1)))?;
            if sub.points() != s.points.as_slice() {
                return Err(malformed(format!("stage {} points disagree with its basis", i + 1)));
            }
            Ok(sub)
        })
        .collect::<Result<Vec<_>>>()?;
    let design = Design::new(doc.p, stages).map_err(|e| malformed(e.to_string()))?;
    let collineation =
        Collineation::from_bit_rows(&doc.collineation).map_err(|e| malformed(format!("collineation: {e}")))?;
    let fraction = match &doc.fraction {
        None => None,
        Some(f) => {
            let mut spec = FractionSpec::from_json(&f.spec)?;
            for g in spec.generators.iter_mut() {
                g.stage = f
                    .generator_stages
                    .get(&factor_letter(g.factor).to_string())
                    .map(|s| s - 1);
            }
            let fd = build_fraction(&design, &spec)?;
            if fd.subgroup.words != f.defining_words || fd.subgroup.wlp != f.wlp {
                return Err(malformed("defining subgroup disagrees with the generators"));
            }
            Some(fd)
        }
    };
    let mut c = Construction {
        request: doc.request.clone(),
        dims: doc.dims.clone(),
        route: doc.route.clone(),
        collineation,
        assignment: doc.assignment.clone(),
        candidate_index: doc.candidate_index,
        design,
        fraction,
        verification: doc.verification.clone(),
    };
    c.verification = c.reverify()?;
    Ok(c)
}

pub fn to_json(c: &Construction) -> String {
    serde_json::to_string_pretty(&to_doc(c)).expect("design documents serialize")
}

/// Parses a document and insists the recomputed verification matches the
/// stored one exactly.
pub fn load_design(text: &str) -> Result<Construction> {
    let doc: DesignDoc = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let c = from_doc(&doc)?;
    if c.verification != doc.verification {
        return Err(malformed(format!(
            "stored verification {:?} differs from recomputed {:?}",
            doc.verification, c.verification
        )));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    /// Levels 0 and 1.
    #[default]
    Binary,
    /// Level 0 as +1, level 1 as -1.
    Pm1,
}

/// Header (factor letters) and rows of the run matrix.
pub fn run_table(c: &Construction, coding: Coding) -> (Vec<String>, Vec<Vec<i8>>) {
    let rows = match &c.fraction {
        Some(f) => f.run_matrix(),
        None => c.design.run_matrix(),
    };
    let width = rows.first().map_or(0, Vec::len);
    let header = (0..width).map(|j| factor_letter(j).to_string()).collect();
    let rows = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|x| match coding {
                    Coding::Binary => x as i8,
                    Coding::Pm1 => 1 - 2 * x as i8,
                })
                .collect()
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{construct, ConstructOptions, StageRequest};

    fn request(factors: usize, added: usize, stages: &[&str]) -> DesignRequest {
        DesignRequest {
            factors,
            added,
            stages: stages.iter().map(|s| StageRequest::parse(s, factors).unwrap()).collect(),
            generators: vec![],
        }
    }

    #[test]
    fn round_trip_full_factorial() {
        let c = construct(&request(6, 0, &["ABC,BDE,CEF;exact", "A,B;dim=3", "D;dim=3"]), &ConstructOptions::default())
            .unwrap();
        let text = to_json(&c);
        assert!(text.contains("\"schema\": 1"));
        let back = load_design(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_json(&back), text);
    }

    #[test]
    fn round_trip_fraction() {
        let c = construct(
            &request(8, 2, &["A,B;dim=3", "C,D;dim=3", "E,F;dim=3", "G,H;dim=3"]),
            &ConstructOptions::default(),
        )
        .unwrap();
        let text = to_json(&c);
        let back = load_design(&text).unwrap();
        assert_eq!(back, c);
        let (header, rows) = run_table(&back, Coding::Binary);
        assert_eq!(header.concat(), "ABCDEFGH");
        assert_eq!(rows.len(), 64);
    }

    #[test]
    fn tampering_is_detected() {
        let c = construct(&request(4, 0, &["A,B"]), &ConstructOptions::default()).unwrap();
        let mut doc = to_doc(&c);
        doc.stages[0].points.pop();
        assert!(matches!(from_doc(&doc), Err(Error::MalformedDesign(_))));

        let mut doc = to_doc(&c);
        doc.verification.incidence_identity = false;
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(load_design(&text), Err(Error::MalformedDesign(_))));

        assert!(matches!(load_design("{\"schema\":1}"), Err(Error::MalformedDesign(_))));
    }

    #[test]
    fn pm1_coding() {
        let c = construct(&request(3, 0, &["A"]), &ConstructOptions::default()).unwrap();
        let (_, rows) = run_table(&c, Coding::Pm1);
        assert_eq!(rows[0], vec![1, 1, 1]);
        assert_eq!(rows[7], vec![-1, -1, -1]);
        assert_eq!(rows[1], vec![-1, 1, 1]);
    }
}
