//! End-to-end runs of the `cma` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cma_ood::io::{read_cmae, read_manifest, ManifestKind};
use cma_ood::Error;

fn cma(args: &[&str]) -> Output {
    cma_env(args, &[])
}

fn cma_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cma"));
    cmd.args(args).env_remove("CMA_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    ok(&cma(&["synth", "--out-dir", p(dir)]));
}

#[test]
fn synth_writes_cmae_files_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let id = read_cmae(d.join("id.cmae")).unwrap();
    assert_eq!((id.rows(), id.dim()), (10, 64));
    let m = read_manifest(d.join("id.json")).unwrap();
    assert_eq!(m.kind, ManifestKind::IdText);
    assert_eq!(m.labels.unwrap()[0], "airplane");
    assert_eq!(
        read_manifest(d.join("agents.json")).unwrap().kind,
        ManifestKind::AgentText
    );
    let images = read_manifest(d.join("id_images.json")).unwrap();
    assert_eq!(images.labels.unwrap().len(), 1000);
    for set in ["far", "mid", "near", "diffuse"] {
        assert_eq!(
            read_cmae(d.join(format!("ood_{set}.cmae"))).unwrap().rows(),
            100
        );
    }
    assert!(fs::read_to_string(d.join("spec.toml"))
        .unwrap()
        .contains("seed = 20240917"));
}

#[test]
fn score_then_eval_and_calibrate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let (id_csv, ood_csv) = (d.join("id.csv"), d.join("ood.csv"));
    for (images, out) in [("id_images.cmae", &id_csv), ("ood_far.cmae", &ood_csv)] {
        ok(&cma(&[
            "score",
            "--images",
            p(&d.join(images)),
            "--id",
            p(&d.join("id.cmae")),
            "--agents",
            p(&d.join("agents.cmae")),
            "--out",
            p(out),
        ]));
    }
    let text = fs::read_to_string(&id_csv).unwrap();
    assert!(text.starts_with("image_index,y_hat,s_cma,s_mcm,s_raw\n"));
    assert_eq!(text.lines().count(), 1001);

    let args = [
        "eval",
        "--id-scores",
        p(&id_csv),
        "--ood-scores",
        p(&ood_csv),
    ];
    let json: serde_json::Value = serde_json::from_str(&ok(&cma(&args))).unwrap();
    assert_eq!(json["n_id"], 1000);
    assert_eq!(json["n_ood"], 100);
    assert_eq!(json["target_tpr"], 0.95);
    let mcm: serde_json::Value =
        serde_json::from_str(&ok(&cma(&[&args[..], &["--column", "s_mcm"]].concat()))).unwrap();
    assert!(json["auroc"].as_f64() > mcm["auroc"].as_f64());

    let cal: serde_json::Value =
        serde_json::from_str(&ok(&cma(&["calibrate", "--id-scores", p(&id_csv)]))).unwrap();
    assert_eq!(cal["threshold_lambda"], json["threshold_lambda"]);

    let csv_out = d.join("eval.csv");
    ok(&cma(&[&args[..], &["--out", p(&csv_out)]].concat()));
    let csv = fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("fpr_at_tpr,auroc,threshold_lambda,target_tpr,n_id,n_ood\n"));
}

#[test]
fn bench_on_the_reference_benchmark() {
    let out = ok(&cma(&["bench", "--format", "csv"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "method,set,fpr_at_tpr,auroc,threshold_lambda,id_accuracy"
    );
    assert!(lines.contains(&"mcm,average,0.4825,0.901267,,0.99"));
    assert!(lines.contains(&"cma,average,0,1,,0.99"));
}

#[test]
fn file_inputs_match_the_synthetic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let from_files = ok(&cma(&[
        "sweep-k",
        "--id",
        p(&d.join("id.cmae")),
        "--agents",
        p(&d.join("agents.cmae")),
        "--id-images",
        p(&d.join("id_images.cmae")),
        "--ood",
        &format!("far={}", p(&d.join("ood_far.cmae"))),
        "--ood",
        &format!("mid={}", p(&d.join("ood_mid.cmae"))),
        "--ood",
        &format!("near={}", p(&d.join("ood_near.cmae"))),
        "--ood",
        &format!("diffuse={}", p(&d.join("ood_diffuse.cmae"))),
        "--seed",
        "20240917",
        "--format",
        "csv",
    ]));
    let synthetic = ok(&cma(&["sweep-k", "--format", "csv"]));
    assert_eq!(from_files, synthetic);
    assert_eq!(synthetic.lines().count(), 9);
}

#[test]
fn stats_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let pairs = d.join("pairs.csv");
    fs::write(&pairs, "prompt,score\na,1\na b,2\na b c,2\na b c d,4\n").unwrap();
    let out = ok(&cma(&[
        "stats",
        "length-reg",
        "--pairs",
        p(&pairs),
        "--range",
        "1,4",
        "--t-crit",
        "2.92",
    ]));
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    let pooled = &json["rows"][0];
    assert_eq!(pooled["group"], "pooled");
    assert!((pooled["result"]["beta1"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!((pooled["result"]["t_stat"].as_f64().unwrap() - 3.4017).abs() < 1e-4);
    assert_eq!(pooled["rejects_null"], true);

    let (base, with) = (d.join("base.txt"), d.join("with.txt"));
    fs::write(&base, "0.5\n0.6\n0.7\n").unwrap();
    fs::write(&with, "0.49\n0.61\n0.4\n").unwrap();
    let out = ok(&cma(&[
        "stats",
        "delta",
        "--base",
        p(&base),
        "--with",
        p(&with),
        "--format",
        "csv",
    ]));
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "-0.1"); // mean of (-0.01, 0.01, -0.3)
    let (ob, ow) = (d.join("ob.txt"), d.join("ow.txt"));
    fs::write(&ob, "0.5\n0.5\n").unwrap();
    fs::write(&ow, "0.3\n0.2\n").unwrap();
    let out = ok(&cma(&[
        "stats",
        "delta",
        "--base",
        p(&base),
        "--with",
        p(&with),
        "--ood-base",
        p(&ob),
        "--ood-with",
        p(&ow),
        "--alpha",
        "0.5",
    ]));
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["id_negligible_passes"], true);
    assert_eq!(json["ood_drop_passes"], true);
}

#[test]
fn config_file_supplies_flags_and_the_command_line_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cma.toml");
    fs::write(
        &cfg,
        "[sweep-tau]\ntaus = [2.0, 4.0]\nformat = \"csv\"\n[sweep-k]\nks = [0.0]\n",
    )
    .unwrap();
    let out = ok(&cma(&["--config", p(&cfg), "sweep-tau"]));
    let values: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(values, ["2", "4"]);
    let out = ok(&cma(&["sweep-tau", "--config", p(&cfg), "--taus", "8"]));
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().starts_with("tau,8,"));
    let json: serde_json::Value =
        serde_json::from_str(&ok(&cma(&["--config", p(&cfg), "sweep-k"]))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn seed_environment_variable_overrides_flags() {
    let args = ["sweep-k", "--ks", "1", "--seed", "3", "--format", "csv"];
    let flag = ok(&cma(&args));
    assert!(flag.lines().nth(1).unwrap().starts_with("k,1,3,10,"));
    let env = ok(&cma_env(&args, &[("CMA_SEED", "5")]));
    assert!(env.lines().nth(1).unwrap().starts_with("k,1,5,10,"));
    assert_eq!(code(&cma_env(&args, &[("CMA_SEED", "five")])), 1);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&cma(&["--help"])), 0);
    assert_eq!(code(&cma(&["--version"])), 0);
    assert_eq!(code(&cma(&[])), 1);
    assert_eq!(code(&cma(&["eval", "--bogus"])), 1);
    assert_eq!(code(&cma(&["eval", "--id-scores", "x"])), 1);
    assert_eq!(code(&cma(&["rank-agents", "--sets", "only.cmae"])), 1);
    assert_eq!(
        code(&cma(&["--config", p(&d.join("missing.toml")), "bench"])),
        1
    );

    assert_eq!(
        code(&cma(&[
            "eval",
            "--id-scores",
            "nope",
            "--ood-scores",
            "nope"
        ])),
        2
    );
    assert_eq!(code(&cma(&["bench", "--out", p(&d.join("r.xml"))])), 2);
    let bad = d.join("bad.cmae");
    fs::write(
        &bad,
        b"XXXX\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00\0\0\0\0\0\0\0\0",
    )
    .unwrap();
    let out = cma(&["score", "--images", p(&bad), "--id", p(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
    assert_eq!(code(&cma(&["sweep-k", "--ks", "3"])), 2); // needs 30 agents, pool has 20
    assert_eq!(code(&cma(&["sweep-tau", "--taus", "0"])), 2);

    assert_eq!(Error::Invariant("x".into()).exit_code(), 3);
}
