//! End-to-end runs of the `glauber` binary: exit statuses, artifacts and
//! bitwise reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

struct Run {
    status: i32,
    stderr: String,
    out: PathBuf,
}

fn glauber(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let o = Command::new(env!("CARGO_BIN_EXE_glauber"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    Run {
        status: o.status.code().expect("exited normally"),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        out: out.to_path_buf(),
    }
}

fn report(run: &Run) -> toml::Table {
    toml::from_str(&fs::read_to_string(run.out.join("report.toml")).unwrap()).unwrap()
}

fn result<'a>(t: &'a toml::Table, key: &str) -> &'a toml::Value {
    &t["result"][key]
}

/// Every file in `dir`, sorted by name.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

const SMALL_LATTICE: &str = r#"
[model]
z = 0.3
potential = "hard_sphere 1.0"
dimension = 1
side = 12.0

[solver]
lattice_cells = 120
r_max = 2
"#;

#[test]
fn verify_kernel_passes_on_the_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let run = glauber("verify-kernel", &fixture("four_site.toml"), &dir.path().join("v"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    let rep = report(&run);
    assert_eq!(rep["status"].as_str(), Some("pass"));
    assert_eq!(result(&rep, "trials").as_integer(), Some(200));
    assert!(result(&rep, "max_residual").as_float().unwrap() <= 1e-10);
    assert_eq!(rep["config"]["sites"]["weights"].as_array().unwrap().len(), 4);
}

#[test]
fn zero_activity_from_empty_gives_one_empty_stream() {
    let dir = tempfile::tempdir().unwrap();
    let run = glauber("simulate", &fixture("empty_box.toml"), &dir.path().join("s"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    let records = fs::read_to_string(run.out.join("snapshots_000.txt")).unwrap();
    let lines: Vec<&str> = records.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines, ["0 0", "0.5 0", "1 0", "1.5 0", "2 0"]);
    assert!(!run.out.join("snapshots_001.txt").exists());
    let rep = report(&run);
    assert_eq!(rep["result"]["events"]["births"].as_integer(), Some(0));
    assert_eq!(rep["result"]["events"]["deaths"].as_integer(), Some(0));
}

#[test]
fn ks_solve_above_the_contraction_threshold_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let run = glauber("ks-solve", &fixture("four_site.toml"), &dir.path().join("k"), &[]);
    assert_eq!(run.status, 1, "{}", run.stderr);
    let rep = report(&run);
    assert_eq!(rep["status"].as_str(), Some("fail"));
    assert!(result(&rep, "contraction_estimate").as_float().unwrap() > 1.0);
    assert_eq!(result(&rep, "diverged").as_bool(), Some(true));
    assert!(rep["failure"]["reason"].as_str().unwrap().contains("diverged"));
    let history = result(&rep, "residual_history").as_array().unwrap();
    assert!(history.len() >= 10);
    assert!(run.out.join("ks_table.tsv").exists());
}

#[test]
fn ks_solve_on_dilute_sites_matches_gibbs() {
    let dir = tempfile::tempdir().unwrap();
    let run = glauber("ks-solve", &fixture("sites_dilute.toml"), &dir.path().join("k"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    let rep = report(&run);
    assert_eq!(result(&rep, "converged").as_bool(), Some(true));
    assert!(result(&rep, "max_error_vs_gibbs").as_float().unwrap() < 1e-12);
    let table = fs::read_to_string(run.out.join("ks_table.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 64);
    assert_eq!(table.lines().nth(1), Some("-\t1"));
}

#[test]
fn ks_solve_on_a_lattice_writes_pair_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lattice.toml");
    fs::write(&cfg, SMALL_LATTICE).unwrap();
    let run = glauber("ks-solve", &cfg, &dir.path().join("k"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    let table = fs::read_to_string(run.out.join("ks_table.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 + 119);
    let contact: Vec<&str> = table.lines().nth(3).unwrap().split('\t').collect();
    assert_eq!(contact[0], "0:1");
    assert_eq!(contact[2], "0");
    let rep = report(&run);
    assert_eq!(rep["config"]["solver"]["closure"].as_str(), Some("superposition"));
}

/// Every block of every fixture, plus the top level, with one extra key.
#[test]
fn unknown_keys_are_rejected_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("simulate", "empty_box.toml"),
        ("simulate", "hard_disks.toml"),
        ("ks-solve", "sites_dilute.toml"),
        ("verify-kernel", "four_site.toml"),
        ("estimate", "hard_disks.toml"),
        ("gnz-check", "hard_disks.toml"),
    ];
    let mut checked = 0;
    for (sub, name) in cases {
        let text = fs::read_to_string(fixture(name)).unwrap();
        let mut variants = vec![format!("bogus = 1\n{text}")];
        for block in ["model", "sites", "run", "solver", "kernel", "estimate", "output"] {
            let header = format!("[{block}]\n");
            variants.push(if text.contains(&header) {
                text.replacen(&header, &format!("{header}typo_key = 3\n"), 1)
            } else {
                format!("{text}\n{header}typo_key = 3\n")
            });
        }
        for (i, v) in variants.iter().enumerate() {
            let cfg = dir.path().join(format!("{sub}-{i}.toml"));
            fs::write(&cfg, v).unwrap();
            let run = glauber(sub, &cfg, &dir.path().join("never"), &[]);
            assert_eq!(run.status, 2, "{sub} {name} variant {i}: {}", run.stderr);
            assert!(run.stderr.contains("unknown field"), "{}", run.stderr);
            checked += 1;
        }
    }
    assert_eq!(checked, 6 * 8);
    assert!(!dir.path().join("never").exists());
}

#[test]
fn config_errors_are_line_anchored() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("hard_disks.toml")).unwrap();
    let bad = text.replace("hard_sphere 0.8", "hard_spheer 0.8");
    let line = bad.lines().position(|l| l.contains("hard_spheer")).unwrap() + 1;
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, &bad).unwrap();
    let run = glauber("simulate", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(run.status, 2);
    assert!(run.stderr.contains(&format!("bad.toml:{line}: model.potential")), "{}", run.stderr);

    let typed = text.replace("z = 0.4", "z = \"high\"");
    fs::write(&cfg, &typed).unwrap();
    let run = glauber("simulate", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(run.status, 2);
    assert!(run.stderr.contains("bad.toml:"), "{}", run.stderr);
}

#[test]
fn physical_parameters_have_no_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("hard_disks.toml")).unwrap();
    for (needle, key) in [
        ("z = 0.4\n", "model.z"),
        ("potential = \"hard_sphere 0.8\"\n", "model.potential"),
        ("side = 8.0\n", "model.side"),
        ("strategy = \"thinning_nonneg\"\n", "run.strategy"),
    ] {
        let cfg = dir.path().join("missing.toml");
        fs::write(&cfg, text.replace(needle, "")).unwrap();
        let run = glauber("simulate", &cfg, &dir.path().join("o"), &[]);
        assert_eq!(run.status, 2, "{key}");
        let field = key.split('.').nth(1).unwrap();
        assert!(run.stderr.contains(field), "{key}: {}", run.stderr);
    }
}

#[test]
fn thinning_rejects_attractive_potentials() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("hard_disks.toml"))
        .unwrap()
        .replace("hard_sphere 0.8", "square_well 0.5 1.0 0.3 0.6");
    let cfg = dir.path().join("well.toml");
    fs::write(&cfg, &text).unwrap();
    assert_eq!(glauber("simulate", &cfg, &dir.path().join("o"), &[]).status, 2);
    fs::write(&cfg, text.replace("thinning_nonneg", "quadrature_rate").replace("t_max = 420.0", "t_max = 40.0")).unwrap();
    let run = glauber("simulate", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    assert_eq!(report(&run)["config"]["run"]["quadrature_per_axis"].as_integer(), Some(64));
}

/// Re-running with the resolved config the first run wrote reproduces every
/// artifact byte for byte.
#[test]
fn resolved_config_reproduces_outputs_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let lattice = dir.path().join("lattice.toml");
    fs::write(&lattice, SMALL_LATTICE).unwrap();
    let cases = [
        ("simulate", fixture("hard_disks.toml")),
        ("estimate", fixture("hard_disks.toml")),
        ("gnz-check", fixture("hard_disks.toml")),
        ("ks-solve", fixture("sites_dilute.toml")),
        ("ks-solve", fixture("four_site.toml")),
        ("ks-solve", lattice),
        ("verify-kernel", fixture("four_site.toml")),
    ];
    for (i, (sub, cfg)) in cases.iter().enumerate() {
        let first = glauber(sub, cfg, &dir.path().join(format!("a{i}")), &[]);
        let resolved = first.out.join("resolved_config.toml");
        let second = glauber(sub, &resolved, &dir.path().join(format!("b{i}")), &[]);
        assert_eq!(first.status, second.status, "{sub}");
        assert_eq!(artifacts(&first.out), artifacts(&second.out), "{sub} {}", cfg.display());
        let third = glauber(sub, cfg, &dir.path().join(format!("c{i}")), &[]);
        assert_eq!(artifacts(&first.out), artifacts(&third.out), "{sub}");
    }
}

#[test]
fn seed_and_replica_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("hard_disks.toml");
    let a = glauber("simulate", &cfg, &dir.path().join("a"), &["--seed", "99", "--replicas", "3"]);
    assert_eq!(a.status, 0, "{}", a.stderr);
    let rep = report(&a);
    assert_eq!(rep["seed"].as_integer(), Some(99));
    assert_eq!(rep["config"]["run"]["seed"].as_integer(), Some(99));
    assert_eq!(rep["config"]["run"]["replicas"].as_integer(), Some(3));
    assert!(a.out.join("snapshots_002.txt").exists());
    let b = glauber("simulate", &cfg, &dir.path().join("b"), &[]);
    assert_ne!(
        fs::read(a.out.join("snapshots_000.txt")).unwrap(),
        fs::read(b.out.join("snapshots_000.txt")).unwrap()
    );
    assert_eq!(glauber("simulate", &cfg, &dir.path().join("c"), &["--replicas", "0"]).status, 2);
    assert_eq!(glauber("simulate", &cfg, &dir.path().join("c"), &["--seed", "18446744073709551615"]).status, 2);
}

/// Estimating from written snapshot files gives the same pair table as
/// estimating from a fresh simulation.
#[test]
fn estimate_reads_snapshot_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("hard_disks.toml");
    let sim = glauber("simulate", &cfg, &dir.path().join("sim"), &[]);
    assert_eq!(sim.status, 0, "{}", sim.stderr);
    let direct = glauber("estimate", &cfg, &dir.path().join("direct"), &[]);
    assert_eq!(direct.status, 0, "{}", direct.stderr);

    let files: Vec<String> = (0..2)
        .map(|i| format!("{:?}", sim.out.join(format!("snapshots_{i:03}.txt")).to_str().unwrap()))
        .collect();
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("[estimate]\n", &format!("[estimate]\nsnapshots = [{}]\n", files.join(", ")));
    let from_files_cfg = dir.path().join("files.toml");
    fs::write(&from_files_cfg, text).unwrap();
    let from_files = glauber("estimate", &from_files_cfg, &dir.path().join("files"), &[]);
    assert_eq!(from_files.status, 0, "{}", from_files.stderr);
    assert_eq!(
        fs::read(direct.out.join("k2.tsv")).unwrap(),
        fs::read(from_files.out.join("k2.tsv")).unwrap()
    );
    let k2 = fs::read_to_string(direct.out.join("k2.tsv")).unwrap();
    let rows: Vec<Vec<f64>> = k2
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        if row[2] <= 0.8 {
            assert_eq!(row[3], 0.0, "inside the core");
        }
    }
}

#[test]
fn gnz_check_passes_for_hard_disks() {
    let dir = tempfile::tempdir().unwrap();
    let run = glauber("gnz-check", &fixture("hard_disks.toml"), &dir.path().join("g"), &[]);
    assert_eq!(run.status, 0, "{}", run.stderr);
    let rep = report(&run);
    assert_eq!(result(&rep, "tests").as_integer(), Some(1 + 2 + 4));
    let table = fs::read_to_string(run.out.join("gnz.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 7);
}

#[test]
fn gnz_check_fails_loudly_on_mismatched_model() {
    // Snapshots of hard disks judged against a Poisson law at the same z.
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("hard_disks.toml");
    let sim = glauber("simulate", &cfg, &dir.path().join("sim"), &[]);
    assert_eq!(sim.status, 0);
    let path = sim.out.join("snapshots_000.txt");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("hard_sphere 0.8", "zero")
        .replace("[estimate]\n", &format!("[estimate]\nsnapshots = [{:?}]\n", path.to_str().unwrap()));
    let wrong = dir.path().join("wrong.toml");
    fs::write(&wrong, text).unwrap();
    let run = glauber("gnz-check", &wrong, &dir.path().join("g"), &[]);
    assert_eq!(run.status, 1, "{}", run.stderr);
    let rep = report(&run);
    assert_eq!(rep["status"].as_str(), Some("fail"));
    assert!(rep["failure"]["reason"].as_str().unwrap().contains("exceeds threshold"));
}
