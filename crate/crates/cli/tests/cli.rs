use std::fs;
use std::process::Command;

fn ippu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ippu"))
}

#[test]
fn help_lists_every_config_key() {
    let out = ippu().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (key, _) in ippu::config::CONFIG_KEYS {
        assert!(
            text.lines().any(|l| l.split_whitespace().next() == Some(key)),
            "{key} missing from --help"
        );
    }
    for cmd in ["run", "sweep", "validate"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "K = 5\nM = 8\nN = 8\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = ippu()
        .args(["run", "--trials", "3", "--seed", "4", "--algo", "ippu,no-irs"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert!(trials.starts_with("seed,algorithm,R_sum,EE,status,"));
    assert_eq!(trials.lines().count(), 1 + 3 * 2);
    let meta = fs::read_to_string(out_dir.join("metadata.json")).unwrap();
    assert!(meta.contains("\"seed\": 4"));
}

#[test]
fn sweep_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "K = 4\nM = 8\nN = 8\n").unwrap();
    let out = ippu()
        .args(["sweep", "--param", "Pmax", "--values", "20,30", "--trials", "2", "--algo", "rpbf-nbua"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn bad_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "K = 5\nbogus = 1\n").unwrap();
    let out = ippu().args(["run", "--trials", "1"]).arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = ippu()
        .args(["run", "--trials", "1", "--algo", "af-relay"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the scope"));

    let out = ippu().args(["sweep", "--param", "Q", "--values", "1"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn quick_validate_prints_every_check() {
    let out = ippu().args(["validate", "--quick"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count(), 7);
}
