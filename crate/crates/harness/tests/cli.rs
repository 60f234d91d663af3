use std::fs;
use std::path::Path;
use std::process::Command;

fn kanva() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kanva"))
}

fn corpus(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn bench_writes_header_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = kanva()
        .args(["bench", "--workload", "read-heavy", "--threads", "2", "--size", "20000"])
        .args(["--ops", "50000", "--seed", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<_> = lines[0].split(',').collect();
    let row: Vec<_> = lines[1].split(',').collect();
    assert_eq!(header.len(), row.len());
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("dataset"), "uniform");
    assert_eq!(col("workload"), "read-heavy");
    assert_eq!(col("threads"), "2");
    assert_eq!(col("ops"), "50000");
    assert!(col("mops").parse::<f64>().unwrap() > 0.0);
}

#[test]
fn bench_appends_without_second_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    for workload in ["ycsb-a", "update-heavy"] {
        let ok = kanva()
            .args(["bench", "--workload", workload, "--size", "5000", "--ops", "5000", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(ok.success());
    }
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 3);
}

#[test]
fn custom_mix_and_file_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("keys.bin");
    kanva_harness::dataset::write_keys(&data, &(0..3000u64).map(|k| k * 11).collect::<Vec<_>>()).unwrap();
    let out = kanva()
        .args(["bench", "--workload", "custom", "--mix", "0.5,0.25,0.25", "--range-frac", "0.2"])
        .arg(format!("--dataset=file:{}", data.display()))
        .args(["--size", "0", "--ops", "2000", "--hotspot", "0.1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with(&format!("file:{},3000,custom", data.display())));
}

#[test]
fn rejects_bad_arguments() {
    for args in [
        &["bench", "--mix", "0.5,0.5,0.5"][..],
        &["bench", "--workload", "custom"],
        &["bench", "--workload", "ycsb-z"],
        &["bench", "--frobnicate"],
        &["bench", "--hotspot", "0"],
        &["bench", "--size", "10", "--prefill", "11"],
    ] {
        let out = kanva().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("Usage") || err.contains("--help"), "{args:?}: {err}");
    }
}

#[test]
fn replay_planted_violation_fails_with_prefix() {
    let out = kanva().args(["replay", &corpus("planted_violation.log")]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("NOT linearizable"));
    assert!(text.contains("0 1 0 insert 3 30 -> true"));
    assert!(text.contains("2 5 1 search 3 -> 31"));
}

#[test]
fn replay_every_planted_log_fails() {
    for (name, _) in kanva_harness::suite::PLANTED {
        let out = kanva().args(["replay", &corpus(name)]).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{name}");
    }
}

#[test]
fn replay_accepts_linearizable_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("ok.log");
    fs::write(&log, "0 3 0 insert 1 5 -> true\n1 2 1 search 1 -> 5\n4 5 1 range 0 9 -> 1:5\n").unwrap();
    let out = kanva().arg("replay").arg(&log).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("linearizable"));
}

#[test]
fn replay_malformed_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.log");
    fs::write(&log, "0 1 0 insert 1 -> true\n").unwrap();
    let out = kanva().arg("replay").arg(&log).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_subset_exits_zero() {
    let out = kanva().args(["verify", "--only", "3", "--only", "9"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
