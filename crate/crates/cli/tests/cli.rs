use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fuzzyspec::mcmc::read_csv_seed;
use fuzzyspec::ncpoly::FunctionalJson;
use fuzzyspec::{random_dirac_data, Signature, TraceFunctional, VerificationReport};
use serde_json::Value;

fn fuzzyspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuzzyspec"))
        .args(args)
        .env_remove("FUZZY_DIM_CAP")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("chain.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn formula_text_has_single_and_squared_traces() {
    let out = fuzzyspec(&["formula", "--signature", "2,0", "--power", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("N*Tr["), "{text}");
    assert!(text.contains("Tr[K1]*Tr[K1]"), "{text}");
}

#[test]
fn formula_json_round_trips() {
    let out = fuzzyspec(&[
        "formula",
        "--signature",
        "1,1",
        "--power",
        "4",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: FunctionalJson = serde_json::from_str(&stdout(&out)).unwrap();
    let parsed = TraceFunctional::from_serializable(&json).unwrap();
    let direct = fuzzyspec::generate_trace_functionals(Signature::new(1, 1).unwrap(), 2).unwrap();
    assert_eq!(&parsed, direct.as_ref());
}

#[test]
fn formula_rejects_odd_power_and_bad_signature() {
    let odd = fuzzyspec(&["formula", "--signature", "2,0", "--power", "3"]);
    assert_eq!(odd.status.code(), Some(1));
    assert!(stderr(&odd).contains("positive even"));
    let bad = fuzzyspec(&["formula", "--signature", "2;0", "--power", "2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("p,q"));
    let empty = fuzzyspec(&["formula", "--signature", "0,0", "--power", "2"]);
    assert_eq!(empty.status.code(), Some(1));
}

#[test]
fn verify_passes_and_reports_small_error() {
    let out = fuzzyspec(&[
        "verify",
        "--signature",
        "1,1",
        "--n",
        "3",
        "--tmax",
        "3",
        "--seeds",
        "5",
        "--seed",
        "0",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: VerificationReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report.pass);
    assert!(report.max_relative_error < 1e-10);
    assert_eq!(report.seeds.len(), 5);
    let seeds: Vec<u64> = report.seeds.iter().map(|s| s.seed).collect();
    assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
}

#[test]
fn verify_without_seed_prints_the_choice() {
    let out = fuzzyspec(&[
        "verify",
        "--signature",
        "2,0",
        "--n",
        "2",
        "--tmax",
        "1",
        "--seeds",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = stderr(&out);
    let seed: u64 = line.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    let again = fuzzyspec(&[
        "verify",
        "--signature",
        "2,0",
        "--n",
        "2",
        "--tmax",
        "1",
        "--seeds",
        "1",
        "--seed",
        &seed.to_string(),
        "--format",
        "json",
    ]);
    let report: VerificationReport = serde_json::from_str(&stdout(&again)).unwrap();
    assert_eq!(report.seeds[0].seed, seed);
}

#[test]
fn verify_mismatch_exits_with_two() {
    // A tolerance far below rounding error cannot be met.
    let out = fuzzyspec(&[
        "verify",
        "--signature",
        "2,2",
        "--n",
        "3",
        "--tmax",
        "2",
        "--seeds",
        "2",
        "--seed",
        "1",
        "--tol",
        "1e-300",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn dimension_cap_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_fuzzyspec"))
        .args(["verify", "--signature", "2,2", "--n", "3", "--seed", "0"])
        .env("FUZZY_DIM_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("FUZZY_DIM_CAP"));
}

#[test]
fn eval_prints_every_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = random_dirac_data(Signature::new(1, 1).unwrap(), 3, 4, None, false).unwrap();
    let path = dir.path().join("d.json");
    fs::write(&path, data.to_json()).unwrap();
    let out = fuzzyspec(&[
        "eval",
        "--data",
        path.to_str().unwrap(),
        "--f",
        "2:1,4:0.5",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let terms = doc["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 2);
    let mut total = 0.0;
    for term in terms {
        let oracle = term["paths"]["oracle"].as_f64().unwrap();
        for path in ["closed_form", "generated"] {
            let v = term["paths"][path].as_f64().unwrap();
            assert!((v - oracle).abs() <= 1e-10 * oracle.abs());
        }
        total += term["coefficient"].as_f64().unwrap() * oracle;
    }
    let reported = doc["total"].as_f64().unwrap();
    assert!((reported - total).abs() <= 1e-10 * total.abs());

    let text = fuzzyspec(&["eval", "--data", path.to_str().unwrap(), "--f", "2:1,4:0.5"]);
    assert!(stdout(&text).contains("Tr f(D) ="));
}

#[test]
fn eval_reports_missing_file_and_bad_polynomial() {
    let missing = fuzzyspec(&["eval", "--data", "/nonexistent/d.json", "--f", "2:1"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("cannot read"));
    let bad = fuzzyspec(&["eval", "--data", "/nonexistent/d.json", "--f", "2=1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("power:coefficient"));
}

#[test]
fn sample_with_zero_step_has_constant_action() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"signature":{"p":1,"q":1},"N":3,"action":{"2":1.0,"4":1.0},
            "step_size":0.0,"n_steps":40,"seed":9}"#,
    );
    let csv = dir.path().join("chain.csv");
    let out = fuzzyspec(&[
        "sample",
        "--config",
        &config,
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(read_csv_seed(&text), Some(9));
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next(), Some("step,S,F,TrD2,acceptance_so_far"));
    let actions: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(actions.len(), 40);
    assert!(actions.iter().all(|s| *s == actions[0]));
}

#[test]
fn sample_fills_in_and_prints_a_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"signature":{"p":1,"q":0},"N":2,"action":{"2":1.0},"step_size":0.3,"n_steps":30}"#,
    );
    let csv = dir.path().join("chain.csv");
    let out = fuzzyspec(&[
        "sample",
        "--config",
        &config,
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let seed: u64 = stderr(&out)
        .trim()
        .strip_prefix("seed: ")
        .unwrap()
        .parse()
        .unwrap();
    let first = fs::read_to_string(&csv).unwrap();
    assert_eq!(read_csv_seed(&first), Some(seed));

    let again = dir.path().join("again.csv");
    let out = fuzzyspec(&[
        "sample",
        "--config",
        &config,
        "--out",
        again.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&again).unwrap(), first);
}

#[test]
fn sample_runs_several_chains() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"signature":{"p":2,"q":0},"N":2,"action":{"2":1.0,"4":0.1},"step_size":0.2,
            "n_steps":60,"burn_in":10,"thinning":5}"#,
    );
    let csv = dir.path().join("run.csv");
    let out = fuzzyspec(&[
        "sample",
        "--config",
        &config,
        "--out",
        csv.to_str().unwrap(),
        "--seed",
        "5",
        "--chains",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout(&out);
    let order: Vec<&str> = report
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap())
        .collect();
    assert_eq!(order, vec!["5", "6", "7"]);
    for seed in 5..8u64 {
        let text = fs::read_to_string(dir.path().join(format!("run_{seed}.csv"))).unwrap();
        assert_eq!(read_csv_seed(&text), Some(seed));
        assert_eq!(text.lines().count(), 2 + 10);
    }
}

#[test]
fn sample_rejects_invalid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let cases = [
        (
            r#"{"signature":{"p":1,"q":0},"N":2,"action":{"4":-1.0},"step_size":0.1,"n_steps":10,"seed":1}"#,
            "confining",
        ),
        (
            r#"{"signature":{"p":1,"q":0},"N":2,"action":{"2":1.0},"step_size":-0.1,"n_steps":10,"seed":1}"#,
            "step_size",
        ),
        (
            r#"{"signature":{"p":1,"q":0},"N":2,"action":{"2":1.0},"step_size":0.1,"n_steps":10,"seed":1,"colour":3}"#,
            "unknown field",
        ),
        ("not json", "not valid JSON"),
    ];
    for (body, needle) in cases {
        let config = write_config(dir.path(), body);
        let out = fuzzyspec(&[
            "sample",
            "--config",
            &config,
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(stderr(&out).contains(needle), "{body}: {}", stderr(&out));
    }
}
