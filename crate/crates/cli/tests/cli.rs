use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const P6_SPREAD_TABLE: &str = "\
S_1\tS_2\tS_3\tS_4\tS_5\tS_6\tS_7\tS_8\tS_9
F\tE\tD\tC\tB\tA\tEF\tDE\tCD
BC\tAB\tAEF\tDF\tCE\tBD\tAC\tBEF\tADE
CDEF\tBCDE\tABCD\tABCEF\tABDF\tACF\tBF\tAE\tDEF
CDE\tBCD\tABC\tABEF\tADF\tCF\tBE\tAD\tCEF
BDE\tACD\tBCEF\tABDE\tACDEF\tBCDF\tABCE\tABDEF\tACDF
BCF\tABE\tADEF\tCDF\tBCE\tABD\tACEF\tBDF\tACE
BDEF\tACDE\tBCDEF\tABCDE\tABCDEF\tABCDF\tABCF\tABF\tAF
";

fn rdcss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdcss"))
        .args(args)
        .env_remove("RDCSS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn construct_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["construct", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    rdcss(&args)
}

#[test]
fn spread_prints_the_p6_table() {
    let o = rdcss(&["spread", "--p", "6", "--t", "3", "--poly", "0x43"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), P6_SPREAD_TABLE);
}

#[test]
fn spread_shapes() {
    let o = rdcss(&["spread", "--p", "4", "--t", "2"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split('\t').count() == 5));

    let o = rdcss(&["spread", "--p", "8", "--t", "3", "--partial"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next().unwrap().split('\t').count(), 33);
}

#[test]
fn spread_without_divisibility_asks_for_partial() {
    let o = rdcss(&["spread", "--p", "8", "--t", "3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--partial"));
}

#[test]
fn exists_reports_bounds() {
    let v = json(&rdcss(&["exists", "--p", "8", "--t", "3"]));
    assert_eq!(v["guarantee"], 33);
    assert_eq!(v["upper_bound"], 34);

    let v = json(&rdcss(&["exists", "--p", "5", "--t", "2"]));
    assert_eq!(v["guarantee"], 9);

    let o = rdcss(&["exists", "--p", "5", "--stages", "3,3,3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["min_overlap"], 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn construct_writes_a_verified_design() {
    let dir = tempfile::tempdir().unwrap();
    let o = construct_into(dir.path(), &["--p", "6", "--stage", "ABC,BDE,CEF;exact", "--stage", "A,B;dim=3", "--stage", "D;dim=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let design = read_json(&dir.path().join("design.json"));
    assert_eq!(design["schema"], 1);
    assert_eq!(design["runs"], 64);
    assert_eq!(design["stages"].as_array().unwrap().len(), 3);
    let verification = read_json(&dir.path().join("verification.json"));
    assert_eq!(verification["pairwise_disjoint"], true);
    assert_eq!(verification["incidence_identity"], true);

    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().next(), Some("A,B,C,D,E,F"));
    assert_eq!(runs.lines().count(), 65);
}

#[test]
fn construct_mixed_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let o = construct_into(dir.path(), &["--p", "7", "--stage", "A,B,C,D;exact", "--stage", "E,F;dim=3", "--stage", "G;dim=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let design = read_json(&dir.path().join("design.json"));
    assert_eq!(design["route"]["kind"], "mixed");
    let sizes: Vec<usize> = design["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["points"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, [15, 7, 7]);
}

#[test]
fn construct_split_lot_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = construct_into(
        dir.path(),
        &["--r", "8", "--s", "2", "--stage", "A,B;dim=3", "--stage", "C,D;dim=3", "--stage", "E,F;dim=3", "--stage", "G,H;dim=3", "--coding", "pm1"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let design = read_json(&dir.path().join("design.json"));
    assert!(design["fraction"]["defining_words"].as_array().unwrap().len() == 3);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().next(), Some("A,B,C,D,E,F,G,H"));
    assert_eq!(runs.lines().count(), 65);
    assert!(runs.lines().skip(1).all(|l| l.split(',').all(|x| x == "1" || x == "-1")));
}

#[test]
fn construct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let overlap = construct_into(dir.path(), &["--p", "5", "--stage", "A;dim=3", "--stage", "B;dim=3", "--stage", "C;dim=3"]);
    assert_eq!(code(&overlap), 3);

    let budget = construct_into(dir.path(), &["--p", "6", "--stage", "ABC,BDE,CEF;exact", "--stage", "A,B;dim=3", "--stage", "D;dim=3", "--budget", "10"]);
    assert_eq!(code(&budget), 4);

    let bad = construct_into(dir.path(), &["--p", "4", "--stage", "A,Z"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let args = ["--p", "6", "--stage", "ABC,BDE,CEF;exact", "--stage", "A,B;dim=3", "--stage", "D;dim=3"];
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    let mut a = vec!["--jobs", "1"];
    a.extend_from_slice(&args);
    assert_eq!(code(&construct_into(one.path(), &a)), 0);
    let mut b = vec!["--jobs", "4"];
    b.extend_from_slice(&args);
    assert_eq!(code(&construct_into(many.path(), &b)), 0);
    let read = |d: &Path| fs::read_to_string(d.join("design.json")).unwrap();
    assert_eq!(read(one.path()), read(many.path()));

    for (d, jobs) in [(one.path(), "1"), (many.path(), "3")] {
        let design = d.join("design.json");
        let o = rdcss(&["--jobs", jobs, "simulate", "--design", design.to_str().unwrap(), "--reps", "50", "--seed", "9", "--out-dir", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let est = |d: &Path| fs::read_to_string(d.join("estimates.csv")).unwrap();
    assert_eq!(est(one.path()), est(many.path()));
}

fn two_stage_design(dir: &Path) -> String {
    let o = construct_into(dir, &["--p", "5", "--stage", "A,B", "--stage", "C,D,E"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("design.json").to_str().unwrap().to_string()
}

#[test]
fn simulate_emits_one_table_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let design = two_stage_design(dir.path());
    let o = rdcss(&["simulate", "--design", &design, "--reps", "200", "--stage-var", "1,2", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut reader = csv::Reader::from_path(dir.path().join("halfnormal.csv")).unwrap();
    let mut sizes = std::collections::BTreeMap::<u32, usize>::new();
    for row in reader.records() {
        *sizes.entry(row.unwrap()[0].parse().unwrap()).or_default() += 1;
    }
    assert_eq!(sizes.into_values().collect::<Vec<_>>(), [3, 7, 21]);

    let summary = read_json(&dir.path().join("summary.json"));
    let groups = summary["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 3);
    assert!((groups[0]["theory_variance"].as_f64().unwrap() - 0.28125).abs() < 1e-12);
    assert!((groups[2]["theory_variance"].as_f64().unwrap() - 0.03125).abs() < 1e-12);

    let est = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 201);
}

#[test]
fn zero_variance_returns_the_injected_effects() {
    let dir = tempfile::tempdir().unwrap();
    let design = two_stage_design(dir.path());
    let o = rdcss(&[
        "simulate", "--design", &design, "--reps", "3", "--sigma2", "0", "--stage-var", "0,0", "--effect", "A=2.5", "--effect", "CDE=-1",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("estimates.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    for row in reader.records() {
        let row = row.unwrap();
        for (name, value) in header.iter().zip(row.iter()).skip(1) {
            let expected = match name {
                "A" => 2.5,
                "CDE" => -1.0,
                _ => 0.0,
            };
            assert!((value.parse::<f64>().unwrap() - expected).abs() < 1e-9, "{name} = {value}");
        }
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let design = two_stage_design(dir.path());
    let run = |sub: &str, env_seed: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(sub);
        fs::create_dir_all(&out).unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rdcss"));
        cmd.args(["simulate", "--design", &design, "--reps", "20", "--out-dir", out.to_str().unwrap()]);
        cmd.env_remove("RDCSS_SEED");
        if let Some(s) = env_seed {
            cmd.env("RDCSS_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read_to_string(out.join("estimates.csv")).unwrap()
    };
    let from_env = run("env", Some("42"), None);
    let from_flag = run("flag", None, Some("42"));
    let default = run("default", None, None);
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, default);
    assert_eq!(run("override", Some("7"), Some("42")), from_flag);
}

#[test]
fn tampered_design_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let design = two_stage_design(dir.path());
    let mut doc: Value = read_json(Path::new(&design));
    doc["verification"]["incidence_identity"] = Value::Bool(false);
    fs::write(&design, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = rdcss(&["simulate", "--design", &design, "--reps", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fraction_and_rank_reports() {
    let v = json(&rdcss(&["fraction", "--factors", "8", "--basic", "6", "--gen", "G=ABCD", "--gen", "H=ABEF"]));
    assert_eq!(v["resolution"], 5);

    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("f.json");
    fs::write(&spec, r#"{"factors": 6, "basic": 4, "generators": {"E": "AB", "F": "CD"}}"#).unwrap();
    let v = json(&rdcss(&["fraction", "--spec", spec.to_str().unwrap()]));
    assert_eq!(v["resolution"], 3);

    let v = json(&rdcss(&["rank", "--factors", "6", "--basic", "4", "--gens", "E=AB,F=CD", "--gens", "E=ABC,F=ABD"]));
    let order: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["source"].as_str().unwrap()).collect();
    assert_eq!(order, ["E=ABC,F=ABD", "E=AB,F=CD"]);
}

#[test]
fn transform_census() {
    let o = rdcss(&["transform", "--p", "6", "--t", "3", "--poly", "0x43", "--stage", "ABC,BDE,CEF", "--stage", "A,B", "--stage", "D", "--census"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let start = text.find('{').unwrap();
    let v: Value = serde_json::from_str(&text[start..]).unwrap();
    assert_eq!(v["census"]["total"], 432180);
    assert_eq!(v["census"]["feasible"], 197568);
}
