//! End-to-end checks of the `fdrelay` binary: exit codes, configuration
//! precedence, CSV schemas and reproducibility of the written files.

use std::path::Path;
use std::process::{Command, Output};

fn fdrelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrelay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn validate_config_echoes_resolved_fields() {
    let out = fdrelay(&["validate-config", "--n-sub", "256", "--scheme", "tdc"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("n-sub=256"), "{text}");
    assert!(text.contains("scheme=tdc"), "{text}");
    assert!(text.contains("sigma2-nr-db=-15"), "{text}");
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let out = fdrelay(&["validate-config", "--lambda", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("lambda"), "{err}");

    let out = fdrelay(&["sinr-sweep", "--scheme", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convergence_without_interference_is_rejected() {
    let out = fdrelay(&["convergence", "--sigma2-li-db", "-inf"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("error metric undefined"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "n-sub = 128\nmaster-seed = 9\n").unwrap();
    let out = fdrelay(&[
        "validate-config",
        "--config",
        conf.to_str().unwrap(),
        "--n-sub",
        "512",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("n-sub=512"), "{text}");
    assert!(text.contains("master-seed=9"), "{text}");
}

fn run_small_convergence(dir: &Path, name: &str, workers: &str) -> String {
    let csv = dir.join(name);
    let out = fdrelay(&[
        "convergence",
        "--n-sub",
        "64",
        "--realizations",
        "5",
        "--ofdm-symbols",
        "60",
        "--h-sr-tap-variance",
        "0.1666666",
        "--workers",
        workers,
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read_to_string(&csv).unwrap()
}

#[test]
fn convergence_csv_has_the_documented_schema_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_small_convergence(dir.path(), "a.csv", "1");
    let b = run_small_convergence(dir.path(), "b.csv", "4");
    assert_eq!(a, b, "different worker counts must produce identical files");

    let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "realization,seed,converged,convergence_sample,em_final_db");
    assert!(a.lines().any(|l| l.starts_with("# n-sub=64")));
    let rows: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.split(',').count(), 5);
    }
}

#[test]
fn sweep_csvs_have_the_documented_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let sinr_csv = dir.path().join("sinr.csv");
    let out = fdrelay(&[
        "sinr-sweep",
        "--n-sub",
        "64",
        "--realizations",
        "2",
        "--ofdm-symbols",
        "8",
        "--sigma2-li-db",
        "0:10:10",
        "--out",
        sinr_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&sinr_csv).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "scheme,sigma2_li_db,sinr_db,realizations,samples_per_point");
    // 4 schemes x 2 grid points, sorted by scheme label.
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].starts_with("ni,"));
    assert!(rows[7].starts_with("tdc,"));

    let ber_csv = dir.path().join("ber.csv");
    let out = fdrelay(&[
        "ber-sweep",
        "--n-sub",
        "64",
        "--realizations",
        "2",
        "--ofdm-symbols",
        "20",
        "--sigma2-li-db",
        "0",
        "--scheme",
        "ni",
        "--out",
        ber_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&ber_csv).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "scheme,sigma2_li_db,ber,bits_counted,bit_errors");
}
