use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermocloak"))
        .arg("--config")
        .arg(dir.join("run.cfg"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "# coarse mesh for a quick run\nlayout.h = 0.1\nrom.n_s = 4\nrom.eps_pod = 1e-10\ntime.steps = 10\ntime.horizon = 1\n{extra}"
    );
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    dir
}

fn report(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    (lines.next().unwrap(), lines.collect())
}

#[test]
fn steady_solve_writes_fields_and_report() {
    let dir = setup("");
    let out = run(dir.path(), &["solve-steady"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out/solve-steady");
    let resolved = fs::read_to_string(base.join("config.resolved")).unwrap();
    let hash = resolved.lines().next().unwrap().trim_start_matches("# config_hash = ").to_string();
    let (header, rows) = report(&base.join("report.csv"));
    assert_eq!(header[0], "config_hash");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], hash);
    assert!(base.read_dir().unwrap().count() > 2);
}

#[test]
fn offline_then_online_and_sweep() {
    let dir = setup("sweep.beta = 1e-7, 1e-6\n");
    let out = run(dir.path(), &["online"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offline"));

    let out = run(dir.path(), &["offline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir.path(), &["online"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir.path(), &["sweep", "--no-reference"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = report(&dir.path().join("out/sweep/report.csv"));
    assert_eq!(rows.len(), 2);

    // an archive of the other regime is refused
    fs::write(dir.path().join("run.cfg"), fs::read_to_string(dir.path().join("run.cfg")).unwrap() + "rom.regime = transient\n")
        .unwrap();
    let out = run(dir.path(), &["online"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regime"));
}

#[test]
fn bad_configuration_is_an_error() {
    let dir = setup("rom.eps_pod = 2\n");
    let out = run(dir.path(), &["solve-steady"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rom.eps_pod"));
}
