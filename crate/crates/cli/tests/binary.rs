use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tranche-bounds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_job(cmd: &str, model: &str, spec: &str, extra: &[&str]) -> Output {
    let model = fixture(model);
    let spec = fixture(spec);
    let mut args = vec![cmd, "--model", model.to_str().unwrap(), "--spec", spec.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header and rows of a CSV body, with `#` metadata stripped.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn etl_output_matches_golden_file() {
    let out = stdout(&run_job("etl", "three_names.json", "desk_spec.json", &[]));
    let golden = std::fs::read_to_string(fixture("three_names_etl.csv")).unwrap();
    assert_eq!(out, golden);
}

#[test]
fn metadata_header_lists_run_settings() {
    let out = stdout(&run_job("mc", "three_names.json", "threshold_spec.json", &["--seed", "11", "--paths", "2000"]));
    for line in ["# command: mc", "# seed: 11", "# paths: 2000", "# chains: comonotonic,maxentropy,maxentropy", "# marginal_tol: 1e-10"] {
        assert!(out.lines().any(|l| l == line), "missing {line:?} in\n{out}");
    }
}

#[test]
fn atm_bounds_are_ordered() {
    let out = stdout(&run_job("bounds", "three_names.json", "desk_spec.json", &["--strike", "atm"]));
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 2);
    let upper = column(&h, &rows, "upper");
    for name in ["naive", "factor_comonotonic", "factor_maxentropy", "factor", "perfect_foresight"] {
        for (lo, up) in column(&h, &rows, name).iter().zip(&upper) {
            assert!(lo <= up, "{name}: {lo} > {up}");
        }
    }
    let etl = column(&h, &rows, "etl");
    let eff = column(&h, &rows, "effective_strike");
    for (e, k) in etl.iter().zip(&eff) {
        assert!((e - k).abs() < 1e-11);
    }
}

#[test]
fn numeric_strike_override() {
    let out = stdout(&run_job("bounds", "minimal.json", "minimal_spec.json", &["--strike", "0.05"]));
    let (h, rows) = table(&out);
    assert_eq!(column(&h, &rows, "strike"), vec![0.05]);
    // zero rates, one name: tranche loss is 0 or 1, so the upper bound is P(default) (1 - K)
    assert!((column(&h, &rows, "upper")[0] - 0.2 * 0.95).abs() < 1e-12);
}

#[test]
fn llb_sits_between_zero_and_factor_bound() {
    let out = stdout(&run_job("llb", "three_names.json", "desk_spec.json", &[]));
    let (h, rows) = table(&out);
    for (l, f) in column(&h, &rows, "llb").iter().zip(column(&h, &rows, "factor")) {
        assert!(*l >= -1e-8 && *l <= f + 1e-8);
    }
}

#[test]
fn mc_is_reproducible_to_the_byte() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}.csv"))).collect();
    for f in &files {
        let o = run_job("mc", "three_names.json", "threshold_spec.json", &["--seed", "42", "--paths", "100000", "--out", f.to_str().unwrap()]);
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
    }
    let a = std::fs::read(&files[0]).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(&files[1]).unwrap());
    let other = run_job("mc", "three_names.json", "threshold_spec.json", &["--seed", "6", "--paths", "5000"]);
    assert_ne!(stdout(&other).into_bytes(), a);
}

#[test]
fn trigger_and_pv_commands_run() {
    for (cmd, spec) in [("trigger", "trigger_spec.json"), ("trigger", "threshold_spec.json"), ("pvopt", "pv_spec.json")] {
        let out = stdout(&run_job(cmd, "three_names.json", spec, &[]));
        let (h, rows) = table(&out);
        assert_eq!(rows.len(), 3, "{cmd} {spec}");
        for (lo, up) in column(&h, &rows, "lower").iter().zip(column(&h, &rows, "upper")) {
            assert!(*lo <= up + 1e-12);
        }
    }
}

#[test]
fn exit_codes() {
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(run_job("etl", "minimal.json", "minimal_spec.json", &[])), 0);
    assert_eq!(code(run_job("etl", "negative_probability.json", "minimal_spec.json", &[])), 2);
    assert_eq!(code(run_job("etl", "bad_chain.json", "minimal_spec.json", &[])), 2);
    assert_eq!(code(run_job("etl", "unknown_chain.json", "minimal_spec.json", &[])), 2);
    assert_eq!(code(run_job("bounds", "three_names.json", "horizon_mismatch_spec.json", &[])), 2);
    assert_eq!(code(run_job("mc", "three_names.json", "threshold_spec.json", &[])), 2);
    assert_eq!(code(run_job("etl", "missing.json", "minimal_spec.json", &[])), 2);
    assert_eq!(code(run_job("bogus", "minimal.json", "minimal_spec.json", &[])), 2);
    assert_eq!(code(run_job("etl", "three_names.json", "desk_spec.json", &["--tol", "0"])), 2);
    // a coupling fit below machine precision cannot converge
    assert_eq!(code(run_job("etl", "three_names.json", "desk_spec.json", &["--tol", "1e-17"])), 3);
}

#[test]
fn validation_errors_name_fields_on_stderr() {
    let o = run_job("etl", "negative_probability.json", "minimal_spec.json", &[]);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("lattice.marginals[1][1]"), "{err}");
    assert!(o.stdout.is_empty());
}
