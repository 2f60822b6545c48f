use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dynfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynfl")).args(args).env_remove("DYNFL_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn summary(path: &Path) -> serde_json::Value {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.json");
    serde_json::from_str(&fs::read_to_string(s).unwrap()).unwrap()
}

#[test]
fn run_writes_one_row_per_trial_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.csv");
    let res = dynfl(&["run", "--gen", "claim3:k=16", "--policy", "mstar,alg1", "--trials", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "policy");
    assert_eq!(reader.records().count(), 14);

    let s = summary(&out);
    for e in s["estimates"].as_array().unwrap() {
        assert_eq!(e["opt"]["kind"], "exact");
        assert_eq!(e["opt"]["opt"], 2.0);
    }
}

#[test]
fn single_insert_costs_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("one.json");
    fs::write(&inst, r#"{"metric":{"n":2,"dist":[[0,1],[1,0]]},"events":[{"op":"ins","id":0,"at":1}]}"#).unwrap();
    let out = dir.path().join("one.csv");
    let res = dynfl(&[
        "run", "--instance", inst.to_str().unwrap(), "--policy", "m,mstar,alg1,capm,naive,alg2",
        "--upsilon", "4", "--trials", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let s = summary(&out);
    let estimates = s["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 6);
    for e in estimates {
        assert_eq!(e["mean"], 1.0, "{e}");
        assert_eq!(e["ratio"][0], 1.0);
    }
}

#[test]
fn same_seed_same_output() {
    let args = ["run", "--gen", "random:n=20,events=300,pdel=0.3,metric=square", "--policy", "alg1,alg2", "--upsilon", "8", "--trials", "4", "--seed", "11"];
    let a = dynfl(&args);
    let b = dynfl(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = Command::new(env!("CARGO_BIN_EXE_dynfl")).args(&args[..args.len() - 2]).env("DYNFL_SEED", "11").output().unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn incompatible_policy_is_skipped() {
    let res = dynfl(&["run", "--gen", "claim3:k=4", "--policy", "m,mstar", "--format", "json"]);
    assert_eq!(code(&res), 0);
    let doc: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(doc["summary"]["failures"][0]["policy"], "m");
    assert_eq!(doc["summary"]["estimates"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_reports_slopes() {
    let res = dynfl(&["sweep", "--gen", "claim3:k=4", "--policy", "alg1", "--grid", "4,8", "--trials", "3", "--format", "json"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
    assert_eq!(doc["summary"]["slopes"][0][0], "alg1");
}

#[test]
fn sweep_rejects_empty_grid() {
    assert_eq!(code(&dynfl(&["sweep", "--gen", "claim3:k=4", "--grid", ""])), 1);
    assert_eq!(code(&dynfl(&["sweep", "--gen", "claim3:k=4"])), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&dynfl(&["--help"])), 0);
    assert_eq!(code(&dynfl(&["--version"])), 0);
    assert_eq!(code(&dynfl(&["run"])), 1);
    assert_eq!(code(&dynfl(&["run", "--gen", "claim3:k=4", "--policy", "bogus"])), 1);
    assert_eq!(code(&dynfl(&["run", "--gen", "nope:k=4"])), 1);
    assert_eq!(code(&dynfl(&["run", "--instance", "/nonexistent/file.json"])), 1);
    let big = dynfl(&["run", "--gen", "random:n=60,events=200,pdel=0,metric=square", "--policy", "mstar", "--oracle", "exact"]);
    assert_eq!(code(&big), 3);
    let bounded = dynfl(&["run", "--gen", "random:n=60,events=200,pdel=0,metric=square", "--policy", "mstar", "--oracle", "bounds"]);
    assert_eq!(code(&bounded), 0);
}

#[test]
fn help_documents_csv_schema() {
    let out = dynfl(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("policy,trial,seed,opening,connection,total"));
    assert!(text.contains("EXIT CODES"));
}

#[test]
fn emitted_instance_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("claim2.json");
    let gen = dynfl(&["run", "--gen", "claim2cap:upsilon=4", "--policy", "naive", "--trials", "5", "--emit", inst.to_str().unwrap()]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let file = dynfl(&["run", "--instance", inst.to_str().unwrap(), "--policy", "naive", "--upsilon", "4", "--trials", "5"]);
    assert_eq!(code(&file), 0, "{}", String::from_utf8_lossy(&file.stderr));
    assert_eq!(gen.stdout, file.stdout);
}

#[test]
fn full_trace_is_written_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let res = dynfl(&["run", "--gen", "claim3:k=4", "--policy", "alg1", "--trace", "full", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let trace = fs::read_to_string(dir.path().join("t.csv.alg1.trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count() as u64, summary(&out)["events"].as_u64().unwrap());
    for line in trace.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn verify_passes_on_claim3_and_random() {
    let res = dynfl(&["verify", "--gen", "claim3:k=8", "--policy", "alg1,mstar", "--trials", "200"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
    let doc: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(doc["pass"], true);
    assert!(doc["checks"].as_array().unwrap().iter().any(|c| c["name"] == "martingale:alg1"));

    let res = dynfl(&["verify", "--gen", "random:n=30,events=2000,pdel=0.4,metric=matrix", "--policy", "mstar,alg1,alg2", "--upsilon", "8", "--trials", "5"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
}
