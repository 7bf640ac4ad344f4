use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn napa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_napa"))
        .args(args)
        .env("NAPA_THREADS", "1")
        .output()
        .expect("spawn napa")
}

fn ok(args: &[&str]) -> String {
    let out = napa(args);
    assert!(
        out.status.success(),
        "napa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], needle: &str) {
    let out = napa(args);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success(), "napa {args:?} unexpectedly succeeded");
    assert!(err.contains(needle), "stderr `{err}` lacks `{needle}`");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn sites_csv(m: usize) -> String {
    let mut body = String::from("site_id,c1\n");
    for i in 0..m {
        body.push_str(&format!("{i},{}\n", i + 1));
    }
    body
}

fn group_csv(rows: &[Vec<f64>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

fn varied(rows: usize, m: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|r| (0..m).map(|i| shift + ((r * 7 + i * 3) % 11) as f64 * 0.1).collect())
        .collect()
}

fn rejected(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3) == Some("1"))
        .count()
}

#[test]
fn simulate_example_one_replication() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--config",
        s(&example("sim1d.cfg")),
        "--out",
        s(tmp.path()),
        "--replications",
        "1",
    ]);
    let metrics = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    // Six sweep points times five methods, plus the header.
    assert_eq!(metrics.lines().count(), 31);
    assert!(metrics.starts_with("sweep_param,"));
}

#[test]
fn bad_alpha_in_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "preset = 1d\nalpha = 1.5\n");
    fails_with(
        &["simulate", "--config", s(&cfg), "--out", s(tmp.path())],
        "alpha must lie in (0,1)",
    );
}

#[test]
fn single_row_group_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sites = write(tmp.path(), "sites.csv", &sites_csv(10));
    let g1 = write(tmp.path(), "g1.csv", &group_csv(&varied(5, 10, 0.0)));
    let g2 = write(tmp.path(), "g2.csv", &group_csv(&varied(1, 10, 0.0)));
    fails_with(
        &[
            "analyze",
            "--sites",
            s(&sites),
            "--group1",
            s(&g1),
            "--group2",
            s(&g2),
            "--out",
            s(tmp.path()),
        ],
        "n2 must be ≥ 2",
    );
}

#[test]
fn column_count_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let sites = write(tmp.path(), "sites.csv", &sites_csv(10));
    let g1 = write(tmp.path(), "g1.csv", &group_csv(&varied(5, 10, 0.0)));
    let g2 = write(tmp.path(), "g2.csv", &group_csv(&varied(5, 9, 0.0)));
    fails_with(
        &[
            "analyze",
            "--sites",
            s(&sites),
            "--group1",
            s(&g1),
            "--group2",
            s(&g2),
            "--out",
            s(tmp.path()),
        ],
        "has 9 columns but the sites file lists 10 sites",
    );
}

#[test]
fn zero_variance_site_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let sites = write(tmp.path(), "sites.csv", &sites_csv(10));
    let mut rows = varied(5, 10, 0.0);
    for r in &mut rows {
        r[6] = 2.5;
    }
    let g1 = write(tmp.path(), "g1.csv", &group_csv(&rows));
    let g2 = write(tmp.path(), "g2.csv", &group_csv(&varied(5, 10, 0.3)));
    fails_with(
        &[
            "analyze",
            "--sites",
            s(&sites),
            "--group1",
            s(&g1),
            "--group2",
            s(&g2),
            "--out",
            s(tmp.path()),
        ],
        "site_id 6",
    );
}

#[test]
fn empty_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let sites = write(tmp.path(), "sites.csv", "");
    let g = write(tmp.path(), "g.csv", "");
    let out = napa(&[
        "analyze",
        "--sites",
        s(&sites),
        "--group1",
        s(&g),
        "--group2",
        s(&g),
        "--out",
        s(tmp.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unknown_method_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fails_with(
        &[
            "simulate",
            "--config",
            s(&example("sim1d.cfg")),
            "--out",
            s(tmp.path()),
            "--methods",
            "napa,storey",
        ],
        "storey",
    );
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "small.cfg",
        "extents = 300\nbox = 1:50..120 @ 0.8\nbaseline = 0.05\nn1 = 20\nn2 = 20\nreplications = 3\nseed = 9\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a), "--write-decisions"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--write-decisions"]);
    for name in ["metrics.csv", "decisions.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn generate_then_analyze_recovers_signal() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["generate", "--config", s(&example("oracle1d.cfg")), "--out", s(&data)]);
    let d = |n: &str| data.join(n);
    ok(&[
        "analyze",
        "--sites",
        s(&d("sites.csv")),
        "--group1",
        s(&d("group1.csv")),
        "--group2",
        s(&d("group2.csv")),
        "--out",
        s(tmp.path()),
        "--methods",
        "napa,bh",
    ]);
    let napa_count = rejected(&tmp.path().join("decisions_napa.csv"));
    let bh_count = rejected(&tmp.path().join("decisions_bh.csv"));
    assert!(napa_count > bh_count && bh_count > 0, "napa {napa_count} bh {bh_count}");
    assert!(!tmp.path().join("decisions_laws.csv").exists());
}

fn diagnostics_mae(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["site_id", "u", "p", "pi_tau_hat", "weight", "oracle_pi"]);
    let (mut sum, mut n) = (0.0, 0.0);
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        sum += (f[3] - f[5]).abs();
        n += 1.0;
    }
    sum / n
}

#[test]
fn estimate_pi_with_oracle_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = example("oracle1d.cfg");
    let data = tmp.path().join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    let (sites, g1, g2) = (data.join("sites.csv"), data.join("group1.csv"), data.join("group2.csv"));
    let (joint, spatial) = (tmp.path().join("joint"), tmp.path().join("spatial"));
    let base = [
        "estimate-pi",
        "--sites",
        s(&sites),
        "--group1",
        s(&g1),
        "--group2",
        s(&g2),
        "--config",
        s(&cfg),
    ];
    let mut a = base.to_vec();
    a.extend(["--out", s(&joint)]);
    ok(&a);
    let mut b = base.to_vec();
    b.extend(["--out", s(&spatial), "--spatial-only"]);
    ok(&b);
    let (mj, ms) = (
        diagnostics_mae(&joint.join("diagnostics.csv")),
        diagnostics_mae(&spatial.join("diagnostics.csv")),
    );
    assert!(mj < ms, "joint {mj} spatial-only {ms}");
}

#[test]
fn dti_shaped_fixture_golden_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |n: &str| fixture("dti_like").join(n);
    let stdout = ok(&[
        "analyze",
        "--sites",
        s(&d("sites.csv")),
        "--group1",
        s(&d("group1.csv")),
        "--group2",
        s(&d("group2.csv")),
        "--out",
        s(tmp.path()),
    ]);
    assert!(stdout.contains("sites 43  n1 340  n2 42"), "{stdout}");
    let counts: Vec<usize> = ["napa", "laws", "bh", "gap", "gap-laws"]
        .iter()
        .map(|m| rejected(&tmp.path().join(format!("decisions_{m}.csv"))))
        .collect();
    assert_eq!(counts, [31, 26, 7, 16, 15]);
}

#[test]
fn dti_shaped_fixture_regenerates_identically() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--config",
        s(&fixture("dti_like.cfg")),
        "--out",
        s(tmp.path()),
    ]);
    for name in ["sites.csv", "group1.csv", "group2.csv", "truth.csv"] {
        let fresh = std::fs::read(tmp.path().join(name)).unwrap();
        let stored = std::fs::read(fixture("dti_like").join(name)).unwrap();
        assert!(fresh == stored, "{name} differs from the stored fixture");
    }
}
