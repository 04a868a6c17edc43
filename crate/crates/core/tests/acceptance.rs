//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line, even under `cargo test`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rdcss_core::collineation::{
    apply, apply_to_spread, feasibility_census, find_collineation, is_invertible, Collineation, SearchOptions,
    SearchOutcome, StageRequirement,
};
use rdcss_core::construct::{construct, ConstructOptions, DesignRequest, StageRequest};
use rdcss_core::existence::{
    feasibility_report, mixed_existence, overlap_witness, pairwise_min_overlap, partial_spread_guarantee,
    partial_spread_upper_bound,
};
use rdcss_core::field::FieldPoly;
use rdcss_core::model::{check_gls_equals_ols, check_incidence_identity, effect_variance, simulate, Design, VarianceSpec};
use rdcss_core::projective::{intersect, span, Effect, Subspace};
use rdcss_core::spread::{cyclic_spread, cyclic_table, mixed_spread, verify_spread};
use rdcss_core::Exec;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const P6_SPREAD_TABLE: &str = "\
F\tE\tD\tC\tB\tA\tEF\tDE\tCD
BC\tAB\tAEF\tDF\tCE\tBD\tAC\tBEF\tADE
CDEF\tBCDE\tABCD\tABCEF\tABDF\tACF\tBF\tAE\tDEF
CDE\tBCD\tABC\tABEF\tADF\tCF\tBE\tAD\tCEF
BDE\tACD\tBCEF\tABDE\tACDEF\tBCDF\tABCE\tABDEF\tACDF
BCF\tABE\tADEF\tCDF\tBCE\tABD\tACEF\tBDF\tACE
BDEF\tACDE\tBCDEF\tABCDE\tABCDEF\tABCDF\tABCF\tABF\tAF";

fn e(w: &str) -> Effect {
    w.parse().expect("valid word")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn p6_spread() -> rdcss_core::spread::Spread {
    cyclic_spread(6, 3, FieldPoly::primitive_from_bits(0x43).unwrap()).unwrap()
}

fn three_stage_reqs() -> Vec<StageRequirement> {
    vec![
        StageRequirement::exact(vec![e("ABC"), e("BDE"), e("CEF")]),
        StageRequirement::containing(vec![e("A"), e("B")], 3),
        StageRequirement::containing(vec![e("D")], 3),
    ]
}

fn c1_spread_table() -> Outcome {
    let start = Instant::now();
    let poly = FieldPoly::primitive_from_bits(0x43).map_err(|x| x.to_string())?;
    let cols = cyclic_table(6, 3, poly).map_err(|x| x.to_string())?;
    let rows: Vec<String> = (0..7)
        .map(|i| cols.iter().map(|c| c[i].label()).collect::<Vec<_>>().join("\t"))
        .collect();
    let got = rows.join("\n");
    ensure(got == P6_SPREAD_TABLE, format!("table differs:\n{got}"))?;
    ensure(cols[8].last() == Some(&e("AF")), "S_9 does not end with AF")?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("9 x 7 grid identical".into())
}

fn c2_printed_matrix() -> Outcome {
    let start = Instant::now();
    let bits: Vec<Vec<u8>> = vec![
        vec![0, 0, 1, 1, 0, 1],
        vec![0, 0, 1, 1, 0, 0],
        vec![0, 1, 1, 0, 1, 1],
        vec![0, 0, 0, 1, 0, 0],
        vec![1, 1, 1, 1, 1, 1],
        vec![0, 0, 0, 1, 1, 1],
    ];
    let m = Collineation::from_bit_rows(&bits).map_err(|x| x.to_string())?;
    ensure(is_invertible(m.rows()), "M is singular")?;
    for (src, dst) in [("CDE", "A"), ("BCF", "B"), ("D", "D"), ("EF", "ABC"), ("AC", "BDE"), ("BF", "CEF")] {
        let got = apply(&m, e(src));
        ensure(got == e(dst), format!("{src} -> {got}, expected {dst}"))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("six images correct, M invertible".into())
}

fn c3_three_stage_search() -> Outcome {
    let start = Instant::now();
    let spread = p6_spread();
    let reqs = three_stage_reqs();
    let found = match find_collineation(&spread, &reqs, &SearchOptions::default()).map_err(|x| x.to_string())? {
        SearchOutcome::Found(m) => m,
        other => return Err(format!("search returned {other:?}")),
    };
    let relabelled = apply_to_spread(&found.matrix, &spread).map_err(|x| x.to_string())?;
    ensure(verify_spread(&relabelled).passes(), "relabelled family is not a spread")?;
    let chosen: Vec<&Subspace> = found.assignment.iter().map(|&i| &relabelled.members[i]).collect();
    ensure(chosen.iter().all(|s| s.len() == 7), "a chosen member is not of size 7")?;
    for i in 0..3 {
        for j in i + 1..3 {
            let meet = intersect(chosen[i], chosen[j]).map_err(|x| x.to_string())?;
            ensure(meet.is_none(), format!("stages {} and {} intersect", i + 1, j + 1))?;
        }
    }
    let s1 = span(6, &[e("ABC"), e("BDE"), e("CEF")]).unwrap();
    ensure(chosen[0].points() == s1.points(), "S_1* is not <ABC,BDE,CEF>")?;
    ensure(chosen[1].contains_all(&[e("A"), e("B")]), "S_2* misses A or B")?;
    ensure(chosen[2].contains(e("D")), "S_3* misses D")?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "feasible M at candidate {} in {:?}",
        found.candidate_index,
        start.elapsed()
    ))
}

fn c4_census() -> Outcome {
    let start = Instant::now();
    let census = feasibility_census(&p6_spread(), &three_stage_reqs(), Exec::default()).map_err(|x| x.to_string())?;
    ensure(census.total == 432_180, format!("{} candidates, expected 432180", census.total))?;
    let f = census.fraction();
    ensure((0.43..=0.48).contains(&f), format!("fraction {f:.4} outside [0.43, 0.48]"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "{}/{} feasible = {f:.4} (consistent {}) in {:?}",
        census.feasible,
        census.total,
        census.consistent,
        start.elapsed()
    ))
}

fn c5_mixed_construction() -> Outcome {
    let start = Instant::now();
    let family = mixed_spread(7, 4).map_err(|x| x.to_string())?;
    let reqs = vec![
        StageRequirement::containing(vec![e("A"), e("B"), e("C"), e("D")], 4),
        StageRequirement::containing(vec![e("E"), e("F")], 3),
        StageRequirement::containing(vec![e("G")], 3),
    ];
    let found = match find_collineation(&family, &reqs, &SearchOptions::default()).map_err(|x| x.to_string())? {
        SearchOutcome::Found(m) => m,
        other => return Err(format!("search returned {other:?}")),
    };
    let s = apply_to_spread(&found.matrix, &family).map_err(|x| x.to_string())?;
    ensure(s.len() == 17, format!("{} members", s.len()))?;
    ensure(verify_spread(&s).pairwise_disjoint, "members overlap")?;
    let abcd = span(7, &[e("A"), e("B"), e("C"), e("D")]).unwrap();
    let big: Vec<&Subspace> = s.members.iter().filter(|m| m.points() == abcd.points()).collect();
    ensure(big.len() == 1, "no member equals <A,B,C,D>")?;
    ensure(
        s.members.iter().filter(|m| m.len() == 7).count() == 16,
        "expected sixteen members of size 7",
    )?;
    let ef = s.member_of(e("E"));
    ensure(ef.is_some() && ef == s.member_of(e("F")), "E and F are not together")?;
    let g = s.member_of(e("G"));
    ensure(g.is_some() && g != ef && g != s.member_of(e("A")), "G does not have its own member")?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("17 members (15 + 16 x 7) in {:?}", start.elapsed()))
}

fn c6_existence() -> Outcome {
    let start = Instant::now();
    let ex3 = feasibility_report(5, &[3, 3]).map_err(|x| x.to_string())?;
    ensure(ex3.min_overlap_size == 1, format!("p=5,t=3 overlap {}", ex3.min_overlap_size))?;
    let ub = partial_spread_upper_bound(5, 3).map_err(|x| x.to_string())?;
    ensure(ub == 2, format!("p=5,t=3 bound {ub}"))?;
    let g = partial_spread_guarantee(8, 3).map_err(|x| x.to_string())?;
    let ub = partial_spread_upper_bound(8, 3).map_err(|x| x.to_string())?;
    ensure((g, ub) == (33, 34), format!("p=8,t=3 gave {g}, {ub}"))?;
    let g = partial_spread_guarantee(5, 2).map_err(|x| x.to_string())?;
    let formula = ((1u64 << 5) - 5) / 3;
    ensure(g == formula && formula == 9, format!("p=5,t=2 gave {g}"))?;
    let mixed = mixed_existence(7, 4, &[3, 3]);
    ensure(mixed.guaranteed_count == Some(17), format!("p=7,t1=4 gave {:?}", mixed.guaranteed_count))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok("overlap 1 / bound 2; 33 / 34; 9; 17 slots".into())
}

/// All subspaces of dimension `t` of PG(p-1, 2), as sorted point masks,
/// found by closing every `t`-subset of points under XOR.
fn brute_subspaces(p: usize, t: usize) -> BTreeSet<Vec<u32>> {
    fn close(gens: &[u32]) -> Vec<u32> {
        let mut pts: BTreeSet<u32> = BTreeSet::new();
        for sel in 1u32..1 << gens.len() {
            pts.insert(gens.iter().enumerate().filter(|(i, _)| sel >> i & 1 == 1).fold(0, |a, (_, &g)| a ^ g));
        }
        pts.into_iter().collect()
    }
    let n = 1u32 << p;
    let mut out = BTreeSet::new();
    let mut stack: Vec<(u32, Vec<u32>)> = vec![(1, vec![])];
    while let Some((from, gens)) = stack.pop() {
        if gens.len() == t {
            let pts = close(&gens);
            if pts.len() == (1 << t) - 1 && !pts.contains(&0) {
                out.insert(pts);
            }
            continue;
        }
        for v in from..n {
            let mut g = gens.clone();
            g.push(v);
            stack.push((v + 1, g));
        }
    }
    out
}

fn c7_geometry() -> Outcome {
    let start = Instant::now();
    let lines = brute_subspaces(4, 2);
    ensure(lines.len() == 35, format!("{} lines in PG(3,2)", lines.len()))?;
    let poly = rdcss_core::field::default_primitive(4).unwrap();
    let s = cyclic_spread(4, 2, poly).map_err(|x| x.to_string())?;
    ensure(s.len() == 5, "spread of PG(3,2) needs 5 lines")?;
    let mut covered = BTreeSet::new();
    for m in &s.members {
        let pts: Vec<u32> = m.points().iter().map(|x| x.bits()).collect();
        ensure(lines.contains(&pts), "member is not a line")?;
        for &x in &pts {
            ensure(covered.insert(x), format!("point {x} covered twice"))?;
        }
    }
    ensure(covered.len() == 15, "spread does not cover PG(3,2)")?;
    let mut pairs = 0usize;
    for p in 2..=5 {
        let subs: Vec<BTreeSet<Vec<u32>>> = (0..p).map(|t| if t == 0 { BTreeSet::new() } else { brute_subspaces(p, t) }).collect();
        for t1 in 1..p {
            for t2 in 1..p {
                let mut best = usize::MAX;
                for a in &subs[t1] {
                    let aset: BTreeSet<u32> = a.iter().copied().collect();
                    for b in &subs[t2] {
                        if a == b {
                            continue;
                        }
                        pairs += 1;
                        best = best.min(b.iter().filter(|x| aset.contains(x)).count());
                    }
                }
                if best == usize::MAX {
                    continue;
                }
                let bound = pairwise_min_overlap(p, t1, t2) as usize;
                ensure(best == bound, format!("p={p} t1={t1} t2={t2}: min {best}, bound {bound}"))?;
                let (wa, wb) = overlap_witness(p, t1, t2).map_err(|x| x.to_string())?;
                let got = intersect(&wa, &wb).map_err(|x| x.to_string())?.map_or(0, |s| s.len());
                ensure(got == bound, format!("witness for p={p} t1={t1} t2={t2} meets in {got}"))?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("PG(3,2) spread verified; {pairs} subspace pairs checked for p <= 5"))
}

fn c8_statistics() -> Outcome {
    let start = Instant::now();
    let design = Design::new(5, vec![span(5, &[e("A"), e("B")]).unwrap()]).unwrap();
    let spec = VarianceSpec {
        sigma2: 1.0,
        stage_sigma2: vec![4.0],
    };
    ensure(check_incidence_identity(&design), "incidence identity fails")?;
    let reps = 10_000;
    let sim = simulate(&design, &spec, None, reps, 20_070_601, Exec::default()).map_err(|x| x.to_string())?;
    let r = reps as f64;
    let mut worst_var = 0.0f64;
    for (word, want) in [("A", 1.03125), ("CDE", 0.03125)] {
        let j = e(word).bits() as usize;
        ensure(
            effect_variance(e(word), &design, &spec) == want,
            format!("theory for {word} is not {want}"),
        )?;
        let got = sim.variance(j);
        let se = want * (2.0 / (r - 1.0)).sqrt();
        let z = (got - want) / se;
        worst_var = worst_var.max(z.abs());
        ensure(z.abs() < 5.0, format!("Var({word}) = {got:.5}, theory {want}, z = {z:.2}"))?;
    }
    let vars: Vec<f64> = (0..32)
        .map(|j| if j == 0 { 0.0 } else { effect_variance(Effect::new(j as u32).unwrap(), &design, &spec) })
        .collect();
    let mut worst_cov = 0.0f64;
    for j in 1..32 {
        for k in j + 1..32 {
            let se = (vars[j] * vars[k] / r).sqrt();
            let z = sim.covariance(j, k) / se;
            worst_cov = worst_cov.max(z.abs());
            ensure(z.abs() < 5.0, format!("Cov({j},{k}) z = {z:.2}"))?;
        }
    }
    let gls = check_gls_equals_ols(&design, &spec, 7).map_err(|x| x.to_string())?;
    ensure(gls.passes, format!("GLS differs from OLS by {:e}", gls.max_abs_diff))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "max |z| variance {worst_var:.2}, covariance {worst_cov:.2}; GLS diff {:.1e}",
        gls.max_abs_diff
    ))
}

fn c9_fraction() -> Outcome {
    let start = Instant::now();
    let stages = ["A,B;dim=3", "C,D;dim=3", "E,F;dim=3", "G,H;dim=3"]
        .iter()
        .map(|s| StageRequest::parse(s, 8))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|x| x.to_string())?;
    let req = DesignRequest {
        factors: 8,
        added: 2,
        stages,
        generators: vec![],
    };
    let c = construct(&req, &ConstructOptions::default()).map_err(|x| x.to_string())?;
    let f = c.fraction.as_ref().ok_or("no fraction built")?;
    ensure(f.n() == 64 && c.design.stages.len() == 4, "expected 64 runs and 4 stages")?;
    ensure(f.stage_factor_words() == ["AB", "CD", "EF", "GH"], format!("{:?}", f.stage_factor_words()))?;
    let words: Vec<u32> = f.subgroup.words.iter().map(|w| w.bits()).collect();
    ensure(words.len() == 3, format!("{} defining words", words.len()))?;
    for &a in &words {
        for &b in &words {
            ensure(a == b || words.contains(&(a ^ b)), "defining words not closed")?;
        }
    }
    ensure(f.satisfies_defining_words(), "a run violates a defining word")?;
    let mut runs = f.runs.clone();
    runs.sort_unstable();
    let solutions: Vec<u32> = (0..1u32 << 8)
        .filter(|&x| words.iter().all(|&w| (w & x).count_ones() % 2 == 0))
        .collect();
    ensure(runs == solutions, "run set differs from the solution set of the defining relation")?;
    ensure(c.verification.passes(), format!("{:?}", c.verification))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    let gens: Vec<String> = f.spec.generators.iter().map(|g| format!("{}", g.defining_word())).collect();
    Ok(format!("defining words I = {}", gens.join(" = ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("p=6 cyclic spread table", c1_spread_table),
        ("printed collineation matrix", c2_printed_matrix),
        ("three-stage requirement search", c3_three_stage_search),
        ("feasibility fraction census", c4_census),
        ("mixed-size construction", c5_mixed_construction),
        ("existence numbers", c6_existence),
        ("exhaustive geometry oracle", c7_geometry),
        ("statistical layer", c8_statistics),
        ("2^(8-2) split-lot fraction", c9_fraction),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: panicked", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
