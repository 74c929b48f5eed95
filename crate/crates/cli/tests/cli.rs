use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cutoff-lab"));
    cmd.args(args);
    match env_out {
        Some(p) => cmd.env("CUTOFF_LAB_OUT", p),
        None => cmd.env_remove("CUTOFF_LAB_OUT"),
    };
    cmd.output().expect("binary runs")
}

fn field(csv: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} row"))
        .to_string()
}

#[test]
fn oracle_reports_the_exact_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["oracle", "--geometry.sides=8", "--model.beta=0.4", &format!("--run.out={}", out.display())], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let gap: f64 = field(&report, "gap").parse().unwrap();
    assert!((gap - 0.335963).abs() < 1e-6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["model"]["beta"], "0.4");
    assert!(manifest["rng"].as_str().unwrap().contains("ChaCha"));
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);

    let free = dir.path().join("free");
    run(&["oracle", "--geometry.sides=6", "--model.beta=0", &format!("--run.out={}", free.display())], None);
    let gap: f64 = field(&std::fs::read_to_string(free.join("report.csv")).unwrap(), "gap").parse().unwrap();
    assert!((gap - 1.0).abs() < 1e-10);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("run.ini");
    std::fs::write(&ini, "[model]\nbeta = 0.2\n[geometry]\nsides = 6\n[method]\nlog_sobolev = true\ntimes = 0:2:1\n").unwrap();
    let out = dir.path().join("o");
    let o = run(
        &["oracle", "--config", ini.to_str().unwrap(), "--model.beta=0.4", &format!("--run.out={}", out.display())],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("# beta: 0.4"));
    assert!(report.contains("alpha_hat,"));
    assert_eq!(std::fs::read_to_string(out.join("m_t.csv")).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 4);
    // The resolved config reproduces the run.
    let again = dir.path().join("again");
    let o = run(
        &["oracle", "--config", out.join("resolved.ini").to_str().unwrap(), &format!("--run.out={}", again.display())],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(again.join("report.csv")).unwrap());
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("bad.ini");
    std::fs::write(&ini, "[model]\nbeta = 0.4\nflavour = strange\n").unwrap();
    let o = run(&["oracle", "--config", ini.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("oracle").exists());
    std::fs::write(&ini, "[model\nbeta = 0.4\n").unwrap();
    assert_eq!(run(&["oracle", "--config", ini.to_str().unwrap()], Some(dir.path())).status.code(), Some(2));
    assert_eq!(run(&["oracle", "--model.beta=-1"], Some(dir.path())).status.code(), Some(2));
    assert_eq!(run(&["mixing", "--geometry.sides=8"], Some(dir.path())).status.code(), Some(2));
    assert_eq!(run(&["teleport"], Some(dir.path())).status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn size_cap_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--geometry.sides=20"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
    assert!(!dir.path().join("oracle").exists());
}

#[test]
fn env_var_sets_output_root_and_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["mixing", "--geometry.sides=8", "--method.eps=0.25,0.75", "--method.replicas=200", "--method.t_max=6"];
    assert_eq!(run(&args, Some(dir.path())).status.code(), Some(0));
    let first = std::fs::read(dir.path().join("mixing/curve_n8.csv")).unwrap();
    let table = std::fs::read_to_string(dir.path().join("mixing/mixing_table.csv")).unwrap();
    assert!(table.contains("oracle"));
    assert!(std::fs::read_to_string(dir.path().join("mixing/curve_n8.svg")).unwrap().starts_with("<svg"));
    let other = tempfile::tempdir().unwrap();
    assert_eq!(run(&args, Some(other.path())).status.code(), Some(0));
    assert_eq!(first, std::fs::read(other.path().join("mixing/curve_n8.csv")).unwrap());
}

#[test]
fn support_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(
        &[
            "support",
            "--geometry.d=2",
            "--geometry.sides=16",
            "--method.b=4",
            "--method.w=2",
            "--method.times=0,4",
            &format!("--run.out={}", out.display()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sparsity = std::fs::read_to_string(out.join("sparsity.csv")).unwrap();
    let first = sparsity.lines().find(|l| l.starts_with("block_certificate,0,0,")).unwrap();
    assert!(first.starts_with("block_certificate,0,0,256,1,"), "empty horizon keeps every site: {first}");
    assert!(std::fs::read_to_string(out.join("support_m0_t0.pgm")).unwrap().starts_with("P2\n16 16\n1\n"));
    assert!(out.join("last_support_m0.pgm").exists());

    let exact = dir.path().join("e");
    let o = run(
        &[
            "support",
            "--geometry.sides=9",
            "--method.support_method=exact",
            "--method.b=3",
            "--method.w=1",
            "--method.times=0,1,2",
            "--method.maps=3",
            &format!("--run.out={}", exact.display()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sound = std::fs::read_to_string(exact.join("soundness.csv")).unwrap();
    let rows: Vec<&str> = sound.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.ends_with("true,true")));
}

#[test]
fn gap_synthetic_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = run(
        &[
            "gap",
            "--method.synthetic=true",
            "--geometry.sides=32",
            "--method.times=0:30:1",
            &format!("--run.out={}", out.display()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(out.join("gap_estimates.csv")).unwrap();
    let row = table.lines().find(|l| l.starts_with("32,")).unwrap();
    let lambda: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((lambda - 0.5).abs() < 1e-12);

    let free = dir.path().join("free");
    let o = run(
        &[
            "gap",
            "--model.beta=0",
            "--geometry.sides=64",
            "--method.replicas=2000",
            "--method.times=0:8:0.25",
            &format!("--run.out={}", free.display()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(free.join("gap_estimates.csv")).unwrap();
    let lambda: f64 = table.lines().find(|l| l.starts_with("64,")).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((lambda - 1.0).abs() < 0.05, "{lambda}");
}

#[test]
fn verify_reports_and_failure_injection() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    let o = run(&["verify", "--quick", "--verify.criteria=2,3,12", &format!("--run.out={}", ok.display())], None);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);
    let bad = dir.path().join("bad");
    let o = run(
        &["verify", "--quick", "--verify.criteria=2", "--verify.tolerance_scale=0", &format!("--run.out={}", bad.display())],
        None,
    );
    assert_eq!(o.status.code(), Some(5));
    assert!(std::fs::read_to_string(bad.join("verify.csv")).unwrap().contains(",false,"));
}
