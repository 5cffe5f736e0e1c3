use std::process::Command;

fn ccmis() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccmis"))
}

#[test]
fn gen_run_verify() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    let ok = ccmis()
        .args(["gen", "gnp", "--n", "200", "--p", "0.1", "--seed", "4", "--out"])
        .arg(&g)
        .status()
        .unwrap();
    assert!(ok.success());

    let out = dir.path().join("run");
    let ok = ccmis()
        .args(["run", "--tau", "8", "--seed", "1", "--graph"])
        .arg(&g)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(ok.success());
    for f in ["stats.json", "iterations.csv", "rounds.jsonl", "greedy_trace.csv", "finisher_curve.csv", "mis.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let ok = ccmis().arg("verify").arg(&g).arg(out.join("mis.txt")).status().unwrap();
    assert!(ok.success());

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let res = ccmis().arg("verify").arg(&g).arg(&empty).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("extendable"));
}

#[test]
fn suite_with_spec_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        r#"
seeds = [0, 1]
suites = ["equivalence", "rounds"]

[[graphs]]
kind = "gnp"
n = 128
p = 0.2

[config]
degree_threshold = { kind = "fixed", value = 8 }
"#,
    )
    .unwrap();
    let out = dir.path().join("report");
    let res = ccmis().arg("suite").arg(&spec).args(["--seeds", "0..3", "--cL", "3", "--out"]).arg(&out).output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["runs"], 3);
    assert_eq!(report["spec"]["config"]["c_l"], 3);
}

#[test]
fn suite_without_seeds_is_empty_and_passes() {
    let res = ccmis().args(["suite", "--graph", "gnp", "--n", "10", "--p", "0.5", "--seeds", ""]).output().unwrap();
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("runs=0"));
}
