use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cahn-lab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn successful_run_exits_zero_and_writes_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = lab(&["degenerate-eps", "--out", out.to_str().unwrap(), "--format", "table,doc,plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("result.json").exists());
    assert!(out.join("timing.json").exists());
    assert!(out.join("degenerate_eps.csv").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS criterion_levels_confirmed"));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // a sharp interface is under-resolved on a 16-point torus grid
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\n[experiment]\nkind = \"oracle1d\"\neps = 0.0795774715459477\ncompare_n = 16\n",
    );
    let o = lab(&["oracle1d", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL extension_level_set"));
}

#[test]
fn solver_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\n[solver]\ntol = 1e-30\nmax_iter = 2\npolish_steps = 0\n[experiment]\nkind = \"solve\"\neps = 0.14\ninit = [{ k = [1, 0], amplitude = 0.5 }]\n",
    );
    let o = lab(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_hard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\ncolour = \"blue\"\n");
    let o = lab(&["degenerate-eps", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn mismatched_experiment_block_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\n[experiment]\nkind = \"census\"\neps = 0.1\n");
    let o = lab(&["sweep", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_re_emits_a_stored_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(lab(&["degenerate-eps", "--out", out]).status.code(), Some(0));
    let before = fs::read(Path::new(out).join("result.json")).unwrap();
    let o = lab(&["report", "--out", out, "--format", "doc,table"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, fs::read(Path::new(out).join("result.json")).unwrap());
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\n[experiment]\nkind = \"check-calculus\"\nsamples = 4\nadjoint_pairs = 4\n",
    );
    let mut docs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(i.to_string());
        let o = lab(&["check-calculus", "--config", &cfg, "--seed", "11", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        docs.push(fs::read(out.join("result.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn bad_flags_are_rejected() {
    assert_ne!(lab(&["sweep", "--format", "pdf"]).status.code(), Some(0));
    assert_ne!(lab(&["no-such-command"]).status.code(), Some(0));
}
