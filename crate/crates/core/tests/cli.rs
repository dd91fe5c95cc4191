use std::path::PathBuf;
use std::process::Command;

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mavk-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn mavk(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mavk")).args(args).output().unwrap()
}

#[test]
fn bad_config_exits_with_two() {
    let d = scratch("bad");
    let cfg = d.join("bad.cfg");
    std::fs::write(&cfg, "grid.size = 64x64\nno equals sign here\n").unwrap();
    let out = mavk(&["exponents", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "sweep.lambda = \nstage.l = 0.1\n").unwrap();
    assert_eq!(mavk(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mavk(&["step", "--grid", "12by12"]).status.code(), Some(2));
}

#[test]
fn exponents_writes_ledger_and_plot_data() {
    let d = scratch("exp");
    let out = mavk(&["exponents", "--out", d.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ledger: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["command"], "exponents");
    assert_eq!(ledger["seed"], 3);
    for a in ledger["artifacts"].as_array().unwrap() {
        assert!(d.join(a.as_str().unwrap()).exists());
    }
    assert!(d.join("exponents.svg").exists() && d.join("exponents.csv").exists());
}

#[test]
fn verify_passes_and_reports() {
    let d = scratch("verify");
    let out = mavk(&["verify", "--out", d.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("verify:") && !text.contains("FAIL"));
}
