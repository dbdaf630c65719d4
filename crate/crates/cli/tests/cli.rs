use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn cbplab(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbplab"))
        .env("CBPLAB_CACHE", cache)
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a report ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn volume_of_ball_by_gauss_rule() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &["volume", "--body", "ball:dim=6", "--rule", "gauss:level=40"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let v = r["results"][0]["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::PI.powi(3) / 6.0).abs() < 1e-6);
    assert_eq!(r["baselines_checked"][0]["pass"], true);
    assert_eq!(r["cached"], false);
}

#[test]
fn second_run_hits_cache_and_matches_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "section",
        "--body",
        "clq:n=3,q=4",
        "--xi",
        "1,0,0,1,0,0",
        "--rule",
        "qmc:n=4096,seed=5",
    ];
    let first = report(&cbplab(dir.path(), &args));
    let second = report(&cbplab(dir.path(), &args));
    assert_eq!(second["cached"], true);
    assert_eq!(first["config_hash"], second["config_hash"]);
    assert_eq!(first["results"], second["results"]);

    let mut fresh_args = args.to_vec();
    fresh_args.push("--no-cache");
    let fresh = report(&cbplab(dir.path(), &fresh_args));
    assert_eq!(fresh["cached"], false);
    assert_eq!(fresh["results"], second["results"]);
    assert_eq!(
        serde_json::to_string(&fresh["results"]).unwrap(),
        serde_json::to_string(&second["results"]).unwrap()
    );
}

#[test]
fn changed_seed_misses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["volume", "--body", "clq:n=2,q=4", "--rule", "qmc:n=4096,seed=0"];
    let a = report(&cbplab(dir.path(), &base));
    let mut reseeded = base.to_vec();
    reseeded.extend(["--seed", "9"]);
    let b = report(&cbplab(dir.path(), &reseeded));
    assert_eq!(b["cached"], false);
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(b["inputs"]["rule"]["seed"], 9);
}

#[test]
fn corrupted_cache_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["volume", "--body", "ball:dim=4", "--rule", "qmc:n=1024,seed=1"];
    let first = report(&cbplab(dir.path(), &args));
    let hash = first["config_hash"].as_str().unwrap();
    let entry = dir.path().join(&hash[..2]).join(format!("{hash}.json"));
    std::fs::write(&entry, "{ not json").unwrap();
    let out = cbplab(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupted cache entry"));
    let again = report(&out);
    assert_eq!(again["cached"], false);
    assert_eq!(again["results"], first["results"]);
    assert_eq!(read(&entry)["config_hash"], hash);
}

#[test]
fn malformed_specs_exit_one_naming_the_token() {
    let dir = tempfile::tempdir().unwrap();
    for (args, token) in [
        (vec!["volume", "--body", "ball:dim=7"], "dim=7"),
        (vec!["volume", "--body", "cube:dim=4"], "cube"),
        (vec!["volume", "--body", "ball:dim=4", "--rule", "qmc:n=12"], "n=12"),
        (
            vec![
                "scan",
                "--body",
                "ball:dim=4",
                "--p",
                "1",
                "--grid",
                "grid:dim=4,reduce=spiral",
            ],
            "spiral",
        ),
    ] {
        let out = cbplab(dir.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(token), "{args:?}: {err}");
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &["ft", "--body", "ball:dim=8", "--p", "7", "--route", "derivative"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let out = cbplab(dir.path(), &["section", "--body", "ball:dim=6", "--xi", "1,0,0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn noisy_transform_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &[
            "ft",
            "--body",
            "mollify:base=[clq:n=3,q=4],width=0.1",
            "--route",
            "pairing",
            "--p",
            "1",
            "--rule",
            "qmc:n=32,seed=1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "inconclusive");
    assert_eq!(r["results"][0]["inconclusive"], true);
}

#[test]
fn transform_of_ball_matches_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &["ft", "--body", "ball:dim=6", "--p", "2", "--xi", "0,3,0,0,4,0"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"][0]["method"], "derivative");
    assert_eq!(r["baselines_checked"][0]["pass"], true);
    assert_eq!(r["inputs"]["xi"][1], 0.6);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let body = "mollify:base=[clq:n=3,q=4],width=0.1";
    let run = |w: &str| {
        report(&cbplab(
            dir.path(),
            &[
                "section",
                "--body",
                body,
                "--m",
                "1",
                "--rule",
                "qmc:n=8192,seed=3",
                "--no-cache",
                "--workers",
                w,
            ],
        ))
    };
    let one = run("1");
    let three = run("3");
    assert_eq!(one["config_hash"], three["config_hash"]);
    assert_eq!(
        serde_json::to_string(&one["results"]).unwrap(),
        serde_json::to_string(&three["results"]).unwrap()
    );
}

#[test]
fn scan_of_complex_l4_ball_finds_witness() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scan.csv");
    let out = cbplab(
        dir.path(),
        &[
            "scan",
            "--body",
            "clq:n=4,q=4",
            "--p",
            "2",
            "--grid",
            "grid:dim=8,res=16,reduce=orbit,seed=7",
            "--csv",
            csv.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"][0]["conclusion"], "negativity_witness");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("p,index,xi0"));
    assert_eq!(
        lines.count(),
        r["results"][0]["grid"]["points"].as_u64().unwrap() as usize
    );
}

#[test]
fn scan_of_ball_is_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &[
            "scan",
            "--body",
            "ball:dim=6",
            "--p",
            "2,3",
            "--rule",
            "gauss:level=6",
            "--confirm-rule",
            "gauss:level=12",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    for v in r["results"].as_array().unwrap() {
        assert_eq!(v["conclusion"], "nonnegative_up_to_tol");
    }
}

#[test]
fn verify_scaled_ball_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(
        dir.path(),
        &[
            "bp-verify",
            "--k",
            "scale:base=[ball:dim=6],factor=0.9",
            "--l",
            "ball:dim=6",
            "--nodes",
            "4096",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"][0]["verdict"], "consistent");
}

#[test]
fn construct_then_verify_replays_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair.json");
    let verified = dir.path().join("verify.json");
    let out = cbplab(
        dir.path(),
        &["bp-construct", "--n", "4", "--q", "4", "--out", pair.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let built = read(&pair);
    assert_eq!(built["results"][0]["report"]["verdict"], "violation");

    let out = cbplab(
        dir.path(),
        &[
            "bp-verify",
            "--pair",
            pair.to_str().unwrap(),
            "--out",
            verified.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = read(&verified);
    assert_eq!(v["results"][0]["verdict"], "violation");
    assert_eq!(v["inputs"]["pair"]["config_hash"], built["config_hash"]);
    assert_eq!(v["results"][1]["matches_stored_report"], true);
    assert_eq!(v["results"][0], built["results"][0]["report"]);
}

#[test]
fn construction_in_dimension_four_is_impossible() {
    let dir = tempfile::tempdir().unwrap();
    let out = cbplab(dir.path(), &["bp-construct", "--n", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("construction impossible"));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cbplab(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(cbplab(dir.path(), &["scan", "--help"]).status.code(), Some(0));
}
