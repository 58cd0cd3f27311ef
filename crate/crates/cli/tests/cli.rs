use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn scratch(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_TARGET_TMPDIR"), name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn hbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbn")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exact_chain_posterior() {
    let chain = data("chain.hbn");
    let ev = data("chain_b0.evid");
    let o = hbn(&["infer-exact", "--net", &chain, "--evidence", &ev, "--query", "A"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("variable,state,probability\n"));
    let p: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("A,0,"))
        .expect("row for A = 0")
        .parse()
        .unwrap();
    assert!((p - 0.8182).abs() < 5e-5, "{text}");
    assert!(!text.contains('\r'));
}

#[test]
fn invalid_network_exits_with_data_error() {
    let o = hbn(&["validate", "--net", &data("bad_rows.hbn")]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("row 0"), "{err}");
    let missing = hbn(&["validate", "--net", &scratch("does-not-exist.hbn")]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(hbn(&["validate"]).status.code(), Some(1));
    assert_eq!(hbn(&["validate", "--net", &data("chain.hbn"), "--bogus"]).status.code(), Some(1));
    let bad_query = hbn(&["infer-exact", "--net", &data("chain.hbn"), "--query", "Nope"]);
    assert_eq!(bad_query.status.code(), Some(1));
    let bad_range = hbn(&["infer-lw", "--net", &data("chain.hbn"), "--query", "A", "--samples", "0"]);
    assert_eq!(bad_range.status.code(), Some(1));
    let bad_kind = hbn(&["experiment", "--kind", "nothing", "--net", "thermostat"]);
    assert_eq!(bad_kind.status.code(), Some(1));
}

#[test]
fn exact_inference_refuses_continuous_networks() {
    let o = hbn(&["infer-exact", "--net", &data("hybrid.hbn"), "--query", "Mode"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stochastic_commands_are_reproducible() {
    let net = data("hybrid.hbn");
    let ev = data("hybrid_alarm.evid");
    for cmd in [
        vec!["infer-lw", "--net", &net, "--evidence", &ev, "--query", "Mode,Load", "--samples", "5000"],
        vec!["infer-approx", "--net", &net, "--evidence", &ev, "--query", "Mode,Load", "--samples", "300", "--passes", "2"],
        vec!["show-density", "--net", &net, "--vars", "Mode,Load", "--samples", "500"],
    ] {
        let mut a = cmd.clone();
        a.extend(["--seed", "11"]);
        let first = hbn(&a);
        let second = hbn(&a);
        assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
        assert_eq!(first.stdout, second.stdout);
        let mut b = cmd.clone();
        b.extend(["--seed", "12"]);
        assert_ne!(first.stdout, hbn(&b).stdout);
    }
}

#[test]
fn out_flag_writes_the_file_only() {
    let path = scratch("chain_marginal.csv");
    let o = hbn(&["infer-exact", "--net", &data("chain.hbn"), "--query", "A,B", "--out", &path]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn discretized_network_validates() {
    let path = scratch("hybrid_binned.hbn");
    let o = hbn(&["discretize", "--net", &data("hybrid.hbn"), "--bins", "20", "--out", &path]);
    assert_eq!(o.status.code(), Some(0));
    let v = hbn(&["validate", "--net", &path]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains("0 continuous"));
    let exact = hbn(&["infer-exact", "--net", &path, "--query", "Mode"]);
    assert!(stdout(&exact).contains("Mode,calm,0.7"));
}

#[test]
fn approx_trace_with_reference() {
    let reference = scratch("hybrid_reference.csv");
    let binned = scratch("hybrid_binned_ref.hbn");
    let trace = scratch("hybrid_trace.csv");
    assert_eq!(hbn(&["discretize", "--net", &data("hybrid.hbn"), "--out", &binned]).status.code(), Some(0));
    let exact = hbn(&["infer-exact", "--net", &binned, "--query", "Load", "--out", &reference]);
    assert_eq!(exact.status.code(), Some(0));
    let o = hbn(&[
        "infer-approx",
        "--net",
        &data("hybrid.hbn"),
        "--query",
        "Load",
        "--samples",
        "500",
        "--passes",
        "2",
        "--trace",
        &trace,
        "--reference",
        &reference,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pass,clique,target,ess,clipped,kl_error"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(rows.iter().any(|r| r[0] == "2"));
    for r in &rows {
        let kl: f64 = r[5].parse().unwrap();
        assert!((0.0..0.5).contains(&kl), "{r:?}");
    }
}

#[test]
fn experiment_csv() {
    let o = hbn(&[
        "experiment", "--kind", "lambda", "--net", "thermostat", "--seeds", "3", "--samples", "100", "--passes", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["experiment", "parameter", "seed", "kl_error", "seconds"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let lambdas: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(lambdas, [0.001, 0.1, 10.0, 1000.0]);
    assert!(rows.iter().all(|r| &r[0] == "lambda" && &r[2] == "3" && r[3].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn help_lists_defaults() {
    let o = hbn(&["infer-approx", "--help"]);
    let text = stdout(&o);
    for flag in ["--samples", "--passes", "--lambda", "--components", "--min-leaf", "--seed", "--out", "--trace"] {
        assert!(text.contains(flag), "{flag} missing");
    }
    assert!(text.contains("[default: 1000]") && text.contains("[default: 6]") && text.contains("[default: 10]"));
}
