mod common;

use std::path::Path;
use std::process::{Command, Output};

use cvqkd::session::read_key_file;

fn cvqkd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvqkd"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CVQKD_CODEBOOK_DIR")
        .output()
        .expect("spawn cvqkd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let (_, codes) = common::small_codebook();
    let text = format!(
        "[session]\nn = 20000\nk = 4000\ncalibration_samples = 20000\n[codebook]\ndir = {:?}\n[output]\ndir = \"out\"\n{extra}",
        codes.to_str().unwrap()
    );
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_matching_keys_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = cvqkd(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let a = read_key_file(&out.join("alice.key")).unwrap();
    let b = read_key_file(&out.join("bob.key")).unwrap();
    assert_eq!(a.bits, b.bits);
    assert!(!a.bits.is_empty());
    for f in ["transcript_alice.tsv", "ledger_bob.json", "key_length_alice.txt", "diagnostics_bob.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let ledger: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ledger_alice.json")).unwrap()).unwrap();
    assert!(ledger["total_charged_bits"].as_u64().unwrap() > 0);
}

#[test]
fn noisy_channel_exits_with_estimation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[source]\nexcess_scale = 20.0\n");
    let o = cvqkd(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(13));
    assert!(stdout(&o).contains("ABORT_PE"));
    assert!(!dir.path().join("out/alice.key").exists());
}

#[test]
fn missing_codebook_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[codebook]\ndir = \"nowhere\"\n").unwrap();
    let o = cvqkd(&["run", "--config", "run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
    std::fs::write(dir.path().join("bad.toml"), "[session]\nunknown_key = 1\n").unwrap();
    assert_eq!(cvqkd(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn makecodes_is_deterministic_and_verifiable() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["makecodes", "--orders", "16,32", "--rate-min", "80", "--rate-max", "85", "--n", "600", "--seed", "3"];
    let first = cvqkd(&[&args[..], &["--out", "a"]].concat(), dir.path());
    assert!(first.status.success());
    let again = cvqkd(&[&args[..], &["--out", "a"]].concat(), dir.path());
    let other = cvqkd(&[&args[..], &["--out", "b"]].concat(), dir.path());
    assert!(again.status.success() && other.status.success());
    let digest = |o: &Output| stdout(o).split("digest ").nth(1).unwrap().trim_end_matches([')', '\n']).to_string();
    assert_eq!(digest(&first), digest(&again));
    assert_eq!(digest(&first), digest(&other));
    let v = cvqkd(&["verify-codebook", "a"], dir.path());
    assert!(v.status.success());
    assert!(stdout(&v).starts_with("12 codes, 0 invalid"));
    assert!(!cvqkd(&["verify-codebook", "missing"], dir.path()).status.success());
}

#[test]
fn sweep_appends_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let args = ["sweep", "--config", &cfg, "--variable", "loss-db", "--values", "0,1,3", "--mode", "estimate", "--out", "s.csv"];
    assert!(cvqkd(&args, dir.path()).status.success());
    assert!(cvqkd(&args, dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    let session = ["sweep", "--config", &cfg, "--variable", "samples", "--values", "20000", "--out", "t.csv"];
    let o = cvqkd(&session, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1,session,samples,20000.0,20000,"));
}

#[test]
fn dumps_drive_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = cvqkd(&["dump", "--config", &cfg, "--alice", "a.dump", "--bob", "b.dump"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg2 = write_config(dir.path(), "[source]\nkind = \"dump\"\nalice_dump = \"a.dump\"\nbob_dump = \"b.dump\"\n");
    let o = cvqkd(&["run", "--config", &cfg2, "--out", "dumped"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let a = read_key_file(&dir.path().join("dumped/alice.key")).unwrap();
    let b = read_key_file(&dir.path().join("dumped/bob.key")).unwrap();
    assert_eq!(a.bits, b.bits);
}
