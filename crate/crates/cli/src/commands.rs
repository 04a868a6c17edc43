use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;

use rdcss_core::collineation::{
    apply_to_spread, feasibility_census, find_collineation, SearchOptions, SearchOutcome, StageRequirement,
};
use rdcss_core::construct::{construct as build, ConstructOptions, DesignRequest, StageRequest};
use rdcss_core::existence::feasibility_report;
use rdcss_core::field::{self, FieldPoly};
use rdcss_core::fraction::{clear_effects, defining_subgroup, rank_designs, Criterion, FractionJson, FractionSpec, Generator};
use rdcss_core::io::{load_design, run_table, to_json, Coding};
use rdcss_core::model::{halfnormal_emit, simulate as run_simulation, variance_report, VarianceSpec};
use rdcss_core::projective::{parse_effect, Effect};
use rdcss_core::spread::{cyclic_spread, cyclic_table, partial_spread, Spread};
use rdcss_core::{Error, Exec};

use crate::{
    CmdResult, CodingArg, ConstructArgs, CriterionArg, Failure, FractionArgs, RankArgs, SimulateArgs, SpreadArgs,
    StageArgs, TransformArgs,
};

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::Wlp => Criterion::WlpAberration,
        CriterionArg::Clear => Criterion::ClearCount,
    }
}

pub fn exists(p: usize, t: Option<usize>, stages: &[usize]) -> CmdResult {
    let dims: Vec<usize> = match t {
        Some(t) => vec![t],
        None if !stages.is_empty() => stages.to_vec(),
        None => return Err(Failure::Invalid(anyhow!("give --t or --stages"))),
    };
    let report = feasibility_report(p, &dims)?;
    for note in &report.notes {
        if note.contains("share") {
            eprintln!("warning: {note}");
        }
    }
    print_json(&report)
}

fn parse_stages(args: &StageArgs, factors: usize) -> Result<Vec<StageRequest>, Failure> {
    args.stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            StageRequest::parse(s, factors)
                .map_err(|e| Failure::Invalid(anyhow!(e).context(format!("stage {} ('{s}')", i + 1))))
        })
        .collect()
}

/// Parses `G=ABCD` with the added factor over `factors` letters and the
/// word over the first `basic` factors.
fn parse_generator(text: &str, factors: usize, basic: usize) -> Result<(usize, Effect), Failure> {
    let (name, word) = text
        .split_once('=')
        .ok_or_else(|| Failure::Invalid(anyhow!("generator '{text}' should look like G=ABCD")))?;
    let f = parse_effect(name.trim(), factors)?;
    if f.order() != 1 {
        return Err(Failure::Invalid(anyhow!("'{name}' is not a single factor")));
    }
    Ok((f.bits().trailing_zeros() as usize, parse_effect(word.trim(), basic)?))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn construct(a: &ConstructArgs, exec: Exec) -> CmdResult {
    let (factors, added) = match (a.p, a.r, a.s) {
        (Some(p), None, None) => (p, 0),
        (None, Some(r), Some(s)) => (r, s),
        _ => return Err(Failure::Invalid(anyhow!("give either --p or both --r and --s"))),
    };
    if added >= factors {
        return Err(Failure::Invalid(anyhow!("--s must be below --r")));
    }
    let stages = parse_stages(&a.stage, factors)?;
    let generators = a
        .gens
        .iter()
        .map(|g| parse_generator(g, factors, factors - added))
        .collect::<Result<Vec<_>, _>>()?;
    let req = DesignRequest {
        factors,
        added,
        stages,
        generators,
    };
    let opts = ConstructOptions {
        search: SearchOptions {
            exec,
            max_candidates: a.stage.budget,
        },
        force: a.force,
        criterion: criterion(a.criterion),
    };
    let c = build(&req, &opts)?;
    let json = to_json(&c);
    // Guard the round-trip contract before anything is written.
    let reloaded = load_design(&json)?;
    if reloaded.verification != c.verification {
        return Err(Failure::Invalid(anyhow!("design did not survive a reload")));
    }
    write_file(&a.out_dir, "design.json", &json)?;
    let coding = match a.coding {
        CodingArg::Binary => Coding::Binary,
        CodingArg::Pm1 => Coding::Pm1,
    };
    let (header, rows) = run_table(&c, coding);
    let mut w = csv::Writer::from_path(a.out_dir.join("runs.csv"))?;
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row.iter().map(i8::to_string))?;
    }
    w.flush()?;
    write_file(
        &a.out_dir,
        "verification.json",
        &serde_json::to_string_pretty(&c.verification)?,
    )?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "route: {}", serde_json::to_string(&c.route)?)?;
    for (i, s) in c.design.stages.iter().enumerate() {
        writeln!(out, "S_{}: {} = {{{}}}", i + 1, s.subspace, s.subspace.labels().join(", "))?;
    }
    if let Some(f) = &c.fraction {
        let words: Vec<String> = f.subgroup.words.iter().map(|e| e.label()).collect();
        writeln!(out, "defining relation: I = {}", words.join(" = "))?;
        writeln!(out, "stage factors: {}", f.stage_factor_words().join(" | "))?;
    }
    writeln!(
        out,
        "verification: {}",
        if c.verification.passes() { "pass" } else { "FAIL" }
    )?;
    if !c.verification.passes() {
        return Err(Failure::Invalid(anyhow!("verification failed: {:?}", c.verification)));
    }
    Ok(())
}

fn poly_for(p: usize, hex: Option<&str>) -> Result<FieldPoly, Failure> {
    match hex {
        None => Ok(field::default_primitive(p)?),
        Some(h) => {
            let digits = h.trim_start_matches("0x").trim_start_matches("0X");
            let bits = u64::from_str_radix(digits, 16).map_err(|_| Failure::Invalid(anyhow!("bad hex polynomial '{h}'")))?;
            let poly = FieldPoly::primitive_from_bits(bits)?;
            if poly.degree() != p {
                return Err(Error::BadPolynomial { poly: bits, degree: p }.into());
            }
            Ok(poly)
        }
    }
}

fn build_spread(a: &SpreadArgs) -> Result<(Spread, Vec<Vec<Effect>>), Failure> {
    if a.p.is_multiple_of(a.t.max(1)) {
        if a.partial {
            return Err(Failure::Invalid(anyhow!(
                "t = {} divides p = {}; a full spread exists, drop --partial",
                a.t,
                a.p
            )));
        }
        let poly = poly_for(a.p, a.poly.as_deref())?;
        let cols = cyclic_table(a.p, a.t, poly)?;
        Ok((cyclic_spread(a.p, a.t, poly)?, cols))
    } else if a.partial {
        if a.poly.is_some() {
            return Err(Failure::Invalid(anyhow!("--poly applies to full spreads only")));
        }
        let s = partial_spread(a.p, a.t)?;
        let cols = s.members.iter().map(|m| m.points().to_vec()).collect();
        Ok((s, cols))
    } else {
        Err(Failure::Invalid(anyhow!(
            "t = {} does not divide p = {}, so no full spread exists; \
             pass --partial for a partial spread or see `rdcss exists --p {} --t {}`",
            a.t,
            a.p,
            a.p,
            a.t
        )))
    }
}

fn print_grid(cols: &[Vec<Effect>]) -> CmdResult {
    let mut out = std::io::stdout().lock();
    let header: Vec<String> = (1..=cols.len()).map(|j| format!("S_{j}")).collect();
    writeln!(out, "{}", header.join("\t"))?;
    let rows = cols.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        let line: Vec<String> = cols
            .iter()
            .map(|c| c.get(i).map(|e| e.label()).unwrap_or_default())
            .collect();
        writeln!(out, "{}", line.join("\t"))?;
    }
    Ok(())
}

pub fn spread(a: &SpreadArgs) -> CmdResult {
    let (_, cols) = build_spread(a)?;
    print_grid(&cols)
}

#[derive(Serialize)]
struct TransformReport {
    matrix: Vec<Vec<u8>>,
    assignment: Vec<usize>,
    pairs: Vec<(Effect, Effect)>,
    candidate_index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    census: Option<rdcss_core::collineation::Census>,
}

pub fn transform(a: &TransformArgs, exec: Exec) -> CmdResult {
    let (spread, _) = build_spread(&a.spread)?;
    let reqs: Vec<StageRequirement> = parse_stages(&a.stage, a.spread.p)?
        .into_iter()
        .map(|s| {
            if s.exact {
                StageRequirement::exact(s.required)
            } else {
                let d = s.min_dim.unwrap_or(0);
                StageRequirement::containing(s.required, d)
            }
        })
        .collect();
    let opts = SearchOptions {
        exec,
        max_candidates: a.stage.budget,
    };
    let census = if a.census {
        Some(feasibility_census(&spread, &reqs, exec)?)
    } else {
        None
    };
    let found = match find_collineation(&spread, &reqs, &opts)? {
        SearchOutcome::Found(m) => m,
        SearchOutcome::Infeasible { examined } => {
            return Err(Error::Infeasible(format!(
                "none of the {examined} candidates yields a consistent, invertible system; \
                 the requirements are not reachable from this spread"
            ))
            .into())
        }
        SearchOutcome::BudgetExhausted { examined } => return Err(Error::BudgetExhausted(examined).into()),
    };
    let relabelled = apply_to_spread(&found.matrix, &spread)?;
    let mut cols: Vec<Vec<Effect>> = found
        .assignment
        .iter()
        .map(|&i| relabelled.members[i].points().to_vec())
        .collect();
    cols.extend(
        (0..relabelled.len())
            .filter(|i| !found.assignment.contains(i))
            .map(|i| relabelled.members[i].points().to_vec()),
    );
    print_grid(&cols)?;
    print_json(&TransformReport {
        matrix: found.matrix.bit_rows(),
        assignment: found.assignment.iter().map(|i| i + 1).collect(),
        pairs: found.pairs,
        candidate_index: found.candidate_index,
        census,
    })
}

#[derive(Serialize)]
struct GroupSummary {
    group: usize,
    stages: Vec<usize>,
    effects: Vec<Effect>,
    theory_variance: f64,
    empirical_variance: f64,
    too_small: bool,
    overlap: bool,
}

#[derive(Serialize)]
struct SimulationSummary {
    reps: usize,
    seed: u64,
    sigma2: f64,
    stage_sigma2: Vec<f64>,
    groups: Vec<GroupSummary>,
    warnings: Vec<String>,
}

pub fn simulate(a: &SimulateArgs, exec: Exec) -> CmdResult {
    let text = fs::read_to_string(&a.design).with_context(|| format!("reading {}", a.design.display()))?;
    let c = load_design(&text)?;
    let design = &c.design;
    let stage_sigma2 = if a.stage_var.is_empty() {
        vec![1.0; design.stages.len()]
    } else {
        a.stage_var.clone()
    };
    let spec = VarianceSpec {
        sigma2: a.sigma2,
        stage_sigma2,
    };
    let mut beta = vec![0.0; design.n()];
    for item in &a.effects {
        let (word, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(anyhow!("effect '{item}' should look like A=2.5")))?;
        let e = parse_effect(word.trim(), design.p)?;
        beta[e.bits() as usize] = value
            .trim()
            .parse()
            .map_err(|_| Failure::Invalid(anyhow!("bad effect size '{value}'")))?;
    }
    let report = variance_report(design, &spec)?;
    let sim = run_simulation(design, &spec, Some(&beta), a.reps, a.seed, exec)?;

    fs::create_dir_all(&a.out_dir)?;
    let mut w = csv::Writer::from_path(a.out_dir.join("estimates.csv"))?;
    let labels: Vec<String> = (1..design.n() as u32)
        .map(|m| Effect::new(m).expect("nonzero").label())
        .collect();
    w.write_record(std::iter::once("rep".to_string()).chain(labels.iter().cloned()))?;
    for (rep, est) in sim.estimates.iter().enumerate() {
        w.write_record(std::iter::once(rep.to_string()).chain(est[1..].iter().map(|v| format!("{v:.10}"))))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(a.out_dir.join("halfnormal.csv"))?;
    w.write_record(["group", "effect", "abs_estimate", "quantile"])?;
    for row in halfnormal_emit(&sim.estimates[0], &report.groups) {
        w.write_record([
            row.group.to_string(),
            row.effect.label(),
            format!("{:.10}", row.abs_estimate),
            format!("{:.10}", row.quantile),
        ])?;
    }
    w.flush()?;

    let groups = report
        .groups
        .iter()
        .map(|g| {
            let theory = report
                .effects
                .iter()
                .find(|ev| ev.effect == g.effects[0])
                .map_or(f64::NAN, |ev| ev.variance);
            let empirical = if sim.reps() > 1 {
                g.effects.iter().map(|e| sim.variance(e.bits() as usize)).sum::<f64>() / g.effects.len() as f64
            } else {
                f64::NAN
            };
            GroupSummary {
                group: g.id,
                stages: g.stages.clone(),
                effects: g.effects.clone(),
                theory_variance: theory,
                empirical_variance: empirical,
                too_small: g.too_small,
                overlap: g.overlap,
            }
        })
        .collect();
    let summary = SimulationSummary {
        reps: a.reps,
        seed: a.seed,
        sigma2: a.sigma2,
        stage_sigma2: spec.stage_sigma2.clone(),
        groups,
        warnings: report.warnings,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_file(&a.out_dir, "summary.json", &json)?;
    writeln!(std::io::stdout().lock(), "{json}")?;
    Ok(())
}

fn spec_from_flags(factors: Option<usize>, basic: Option<usize>, gens: &[String]) -> Result<FractionSpec, Failure> {
    let (r, u) = match (factors, basic) {
        (Some(r), Some(u)) => (r, u),
        _ => return Err(Failure::Invalid(anyhow!("give --factors and --basic"))),
    };
    let generators = gens
        .iter()
        .map(|g| {
            parse_generator(g, r, u).map(|(factor, word)| Generator {
                factor,
                word,
                stage: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FractionSpec::new(r, u, generators)?)
}

fn spec_from_file(path: &Path) -> Result<FractionSpec, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let j: FractionJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(FractionSpec::from_json(&j)?)
}

#[derive(Serialize)]
struct FractionReport {
    spec: FractionJson,
    defining_words: Vec<Effect>,
    wlp: Vec<usize>,
    resolution: Option<usize>,
    clear_mains: usize,
    clear_two_factor: usize,
}

fn fraction_report(spec: &FractionSpec) -> Result<FractionReport, Failure> {
    let dsg = defining_subgroup(spec);
    let clear = clear_effects(spec)?;
    Ok(FractionReport {
        spec: spec.to_json(),
        resolution: dsg.resolution(),
        defining_words: dsg.words,
        wlp: dsg.wlp,
        clear_mains: clear.mains,
        clear_two_factor: clear.two_factor,
    })
}

pub fn fraction(a: &FractionArgs) -> CmdResult {
    let spec = match &a.spec {
        Some(path) => spec_from_file(path)?,
        None => spec_from_flags(a.factors, a.basic, &a.gens)?,
    };
    print_json(&fraction_report(&spec)?)
}

#[derive(Serialize)]
struct Ranked {
    rank: usize,
    source: String,
    #[serde(flatten)]
    report: FractionReport,
}

pub fn rank(a: &RankArgs, exec: Exec) -> CmdResult {
    let mut specs = Vec::new();
    let mut sources = Vec::new();
    for path in &a.specs {
        specs.push(spec_from_file(path)?);
        sources.push(path.display().to_string());
    }
    for cand in &a.candidates {
        let gens: Vec<String> = cand.split(',').map(|s| s.trim().to_string()).collect();
        specs.push(spec_from_flags(a.factors, a.basic, &gens)?);
        sources.push(cand.clone());
    }
    if specs.is_empty() {
        return Err(Failure::Invalid(anyhow!("give candidates with --spec or --gens")));
    }
    let order = rank_designs(&specs, criterion(a.criterion), exec)?;
    let ranked = order
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            Ok(Ranked {
                rank: k + 1,
                source: sources[i].clone(),
                report: fraction_report(&specs[i])?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    print_json(&ranked)
}
