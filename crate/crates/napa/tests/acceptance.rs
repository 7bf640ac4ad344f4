//! End-to-end acceptance checks. Each test writes one PASS/FAIL line to
//! stderr (outside the test harness capture) before asserting.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use napa_core::rng::{stream, Purpose};
use napa_core::simulate::{
    self, generate_dataset, model_truth, oracle_dominance_check, run_experiment, ExperimentConfig, ExperimentResult,
    MetricsSummary,
};
use napa_core::statistics::compute_site_statistics;
use napa_core::testing::{bh_procedure, napa_threshold};
use napa_core::weights::{self, BandwidthMatrix, CvOptions, DEFAULT_XI};
use napa_core::{Method, SpatialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, pass: bool, detail: &str) {
    let line = format!(
        "[acceptance] criterion {criterion}: {} -- {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

fn power(summary: &MetricsSummary, m: Method) -> f64 {
    summary.get(m).unwrap().power_prop
}

fn study_1d() -> &'static ExperimentResult {
    static RESULT: OnceLock<ExperimentResult> = OnceLock::new();
    RESULT.get_or_init(|| {
        let mut cfg = ExperimentConfig::study_1d();
        cfg.replications = 200;
        cfg.seed = 1001;
        run_experiment(&cfg).unwrap()
    })
}

#[test]
fn criterion_1_fdr_control() {
    let point = &study_1d().points[0];
    let detail: Vec<String> = point
        .methods
        .iter()
        .map(|m| format!("{}={:.4}(se {:.4})", m.method, m.fdr, m.fdr_se))
        .collect();
    let pass = point.methods.len() == 5 && point.methods.iter().all(|m| m.fdr <= 0.07 && m.replications == 200);
    report("1 (FDR <= 0.07, 1D, 200 reps)", pass, &detail.join(" "));
    assert!(pass);
}

fn ordering(label: &str, point: &MetricsSummary) -> (bool, String) {
    let (n, l, b) = (
        power(point, Method::Napa),
        power(point, Method::Laws),
        power(point, Method::Bh),
    );
    let pass = n >= l - 0.01 && n >= b + 0.02;
    (pass, format!("{label}: napa {n:.4} laws {l:.4} bh {b:.4}"))
}

#[test]
fn criterion_2_power_ordering() {
    let mut lines = Vec::new();
    let mut pass = true;
    let (ok, line) = ordering("1D", &study_1d().points[0]);
    pass &= ok;
    lines.push(line);
    for (label, mut cfg) in [
        ("2D", ExperimentConfig::study_2d()),
        ("3D", ExperimentConfig::study_3d()),
    ] {
        cfg.replications = 100;
        cfg.seed = 2002;
        cfg.methods = vec![Method::Napa, Method::Laws, Method::Bh];
        let res = run_experiment(&cfg).unwrap();
        let (ok, line) = ordering(label, &res.points[0]);
        pass &= ok;
        lines.push(line);
    }
    report(
        "2 (power NAPA >= LAWS-0.01, >= BH+0.02; 1D/2D/3D)",
        pass,
        &lines.join("; "),
    );
    assert!(pass);
}

#[test]
fn criterion_3_oracle_dominance() {
    let mut cfg = ExperimentConfig::study_1d();
    cfg.seed = 3003;
    let r = oracle_dominance_check(&cfg, 200).unwrap();
    let mfdr = r.mfdr_holds(2.0);
    let psi = r.psi_ordering_holds(2.0);
    let detail = format!(
        "t_laws {:.3e} t_napa {:.3e}; mFDR napa@t_laws {:.4} vs laws@t_laws {:.4} (diff se {:.4}); \
         Psi napa@t_napa {:.2} >= napa@t_laws {:.2} >= laws@t_laws {:.2} (se {:.2}, {:.2})",
        r.t_laws,
        r.t_napa,
        r.mfdr_napa_at_t_laws,
        r.mfdr_laws_at_t_laws,
        r.mfdr_diff_se,
        r.psi_napa_at_t_napa,
        r.psi_napa_at_t_laws,
        r.psi_laws_at_t_laws,
        r.psi_gap_napa_thresholds_se,
        r.psi_gap_napa_laws_se
    );
    report("3 (oracle mFDR and Psi ordering, 200 reps)", mfdr && psi, &detail);
    assert!(mfdr && psi);
}

/// Average squared error of the fully data-driven estimate against the
/// oracle screened probability on the scaled 1D design.
fn estimator_mse(m: usize, replications: u32) -> f64 {
    let mut cfg = ExperimentConfig::study_1d_scaled(m);
    cfg.seed = 4004;
    let grid = SpatialGrid::new(&cfg.extents).unwrap();
    let pi = cfg.regions.evaluate(&grid).unwrap();
    let mut total = 0.0;
    for rep in 0..replications {
        let sim = generate_dataset(&cfg, &grid, &pi, &mut stream(cfg.seed, Purpose::Data, m as u32, rep)).unwrap();
        let stats = compute_site_statistics(&sim.dataset).unwrap();
        let tau = weights::select_tau(&stats.p_value, weights::DEFAULT_SCREEN_LEVEL).unwrap();
        let bw = weights::select_bandwidths(&stats, &grid, tau, rep as u64).unwrap();
        let field = weights::estimate_pi_tau(&stats, &grid, tau, &bw, DEFAULT_XI, false).unwrap();
        let oracle = model_truth(&cfg, &pi, &sim.beta1).pi_tau(&stats.u_stat, tau).unwrap();
        total += simulate::mean_squared_error(&field.pi_tau_hat, &oracle);
    }
    total / replications as f64
}

#[test]
fn criterion_4_estimator_consistency() {
    let mse: Vec<(usize, f64)> = [500, 2000, 5000].iter().map(|&m| (m, estimator_mse(m, 20))).collect();
    let pass = mse.windows(2).all(|w| w[1].1 < w[0].1);
    let detail: Vec<String> = mse.iter().map(|(m, e)| format!("m={m}: {e:.6}")).collect();
    report("4 (MSE strictly decreasing in m, 20 reps)", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_5_beats_spatial_only() {
    let mut cfg = ExperimentConfig::study_1d();
    cfg.seed = 5005;
    let grid = SpatialGrid::new(&cfg.extents).unwrap();
    let pi = cfg.regions.evaluate(&grid).unwrap();
    let sim = generate_dataset(&cfg, &grid, &pi, &mut stream(cfg.seed, Purpose::Data, 0, 0)).unwrap();
    let stats = compute_site_statistics(&sim.dataset).unwrap();
    let oracle = model_truth(&cfg, &pi, &sim.beta1).posterior(&stats.u_stat).unwrap();
    let tau = weights::select_tau(&stats.p_value, weights::DEFAULT_SCREEN_LEVEL).unwrap();
    let joint_bw = weights::select_bandwidths(&stats, &grid, tau, cfg.seed).unwrap();
    let joint = weights::estimate_pi_tau(&stats, &grid, tau, &joint_bw, DEFAULT_XI, false).unwrap();
    let (h_s, _) = weights::select_spatial_bandwidth(&stats.p_value, &grid, tau, &CvOptions::default()).unwrap();
    let spatial_bw = BandwidthMatrix::new(h_s, 1.0, 0.0).unwrap();
    let spatial = weights::estimate_pi_tau(&stats, &grid, tau, &spatial_bw, DEFAULT_XI, true).unwrap();
    let mae_joint = simulate::mean_absolute_error(&joint.pi_tau_hat, &oracle);
    let mae_spatial = simulate::mean_absolute_error(&spatial.pi_tau_hat, &oracle);
    let pass = mae_joint < mae_spatial;
    report(
        "5 (MAE joint < MAE spatial-only vs oracle pi(s,u))",
        pass,
        &format!("joint {mae_joint:.5}, spatial-only {mae_spatial:.5}"),
    );
    assert!(pass);
}

fn ks_uniform(p: &[f64]) -> f64 {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn criterion_6_null_calibration() {
    let mut cfg = ExperimentConfig::study_1d();
    cfg.seed = 6006;
    let grid = SpatialGrid::new(&cfg.extents).unwrap();
    let sim = generate_dataset(
        &cfg,
        &grid,
        &vec![0.0; grid.len()],
        &mut stream(cfg.seed, Purpose::Data, 0, 0),
    )
    .unwrap();
    assert!(sim.theta.iter().all(|&t| !t));
    let stats = compute_site_statistics(&sim.dataset).unwrap();
    let ks = ks_uniform(&stats.p_value);
    let corr = pearson(&stats.t_stat, &stats.u_stat);
    let pass = ks < 0.03 && corr.abs() < 0.05;
    report(
        "6 (null KS < 0.03, |corr(T,U)| < 0.05)",
        pass,
        &format!("KS {ks:.5}, corr {corr:.5}"),
    );
    assert!(pass);
}

/// Space-only estimate computed pair by pair over all sites: Gaussian
/// weights in Euclidean distance, terms with squared scaled distance above
/// the documented cutoff of 36 dropped, clamped to `[xi, 1 - xi]`.
fn reference_spatial_only(grid: &SpatialGrid, p: &[f64], tau: f64, h_s: f64, xi: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let ci = grid.coords(i);
            let (mut above, mut total) = (0.0, 0.0);
            for (j, &pj) in p.iter().enumerate() {
                let d2: f64 = ci
                    .iter()
                    .zip(grid.coords(j))
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum();
                let q = d2 / (h_s * h_s);
                if q <= 36.0 {
                    let w = (-0.5 * q).exp();
                    total += w;
                    if pj > tau {
                        above += w;
                    }
                }
            }
            (1.0 - above / ((1.0 - tau) * total)).clamp(xi, 1.0 - xi)
        })
        .collect()
}

/// Largest admissible prefix of the sorted values, scanning all `m + 1`
/// candidate sets.
fn brute_force_threshold(pw: &[f64], pi_hat: &[f64], alpha: f64) -> Vec<bool> {
    let s: f64 = pi_hat.iter().sum();
    let mut sorted = pw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = 0;
    for k in 1..=sorted.len() {
        let t = sorted[k - 1];
        let ties_ok = k == sorted.len() || sorted[k] > t;
        if ties_ok && t < 1.0 && s * t <= alpha * k as f64 {
            best = k;
        }
    }
    if best == 0 {
        vec![false; pw.len()]
    } else {
        pw.iter().map(|&p| p <= sorted[best - 1]).collect()
    }
}

#[test]
fn criterion_7_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);

    // (a) space-only estimator against the pairwise reference
    let mut worst: f64 = 0.0;
    for extents in [vec![400], vec![30, 20], vec![8, 9, 7]] {
        let grid = SpatialGrid::new(&extents).unwrap();
        let m = grid.len();
        for &h_s in &[0.7, 2.5, 9.0] {
            let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let tau = 0.3 + 0.4 * rng.random::<f64>();
            let bw = BandwidthMatrix::new(h_s, 0.8, 0.3).unwrap();
            let got = weights::estimate_pi_tau_from(&p, &u, &grid, tau, &bw, DEFAULT_XI, true).unwrap();
            let want = reference_spatial_only(&grid, &p, tau, h_s, DEFAULT_XI);
            for (a, b) in got.pi_tau_hat.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let pass_a = worst <= 1e-12;

    // (b) constant pi_hat = c with unit weights is BH at level alpha / c
    let mut mismatches_b = 0;
    for inst in 0..1000 {
        let m = rng.random_range(1..=200);
        let alpha = 0.01 + 0.19 * rng.random::<f64>();
        let (c, p): (f64, Vec<f64>) = if inst % 2 == 0 {
            let c = alpha + (1.0 - alpha) * rng.random::<f64>();
            let p = (0..m).map(|_| rng.random::<f64>().powi(3)).collect();
            (c, p)
        } else {
            // dyadic c and a coarse lattice of p-values: exact arithmetic with ties
            let c = [1.0, 0.5, 0.25][rng.random_range(0..3)];
            let c = if c > alpha { c } else { 1.0 };
            let p = (0..m).map(|_| rng.random_range(0..=64) as f64 / 64.0 * 0.1).collect();
            (c, p)
        };
        let napa = napa_threshold(&p, &vec![c; m], alpha).unwrap();
        let bh = bh_procedure(&p, alpha / c).unwrap();
        if napa.rejected != bh.rejected {
            mismatches_b += 1;
        }
    }
    let pass_b = mismatches_b == 0;

    // (c) step-up scan against all candidate sets
    let mut mismatches_c = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=50);
        let alpha = 0.01 + 0.3 * rng.random::<f64>();
        let pw: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..10) {
                0 => 1.0,
                1 => rng.random_range(0..4) as f64 * 0.01,
                _ => rng.random::<f64>().powi(2),
            })
            .collect();
        let scale = [1.0, 0.1, 1e-3][rng.random_range(0..3)];
        let pi_hat: Vec<f64> = (0..m).map(|_| (rng.random::<f64>() * scale).max(1e-5)).collect();
        let got = napa_threshold(&pw, &pi_hat, alpha).unwrap();
        if got.rejected != brute_force_threshold(&pw, &pi_hat, alpha) {
            mismatches_c += 1;
        }
    }
    let pass_c = mismatches_c == 0;

    let pass = pass_a && pass_b && pass_c;
    report(
        "7 (reduction identities)",
        pass,
        &format!(
            "(a) max |diff| {worst:.3e}; (b) {mismatches_b}/1000 mismatches vs BH(alpha/c); (c) {mismatches_c}/1000 mismatches vs brute force"
        ),
    );
    assert!(pass);
}

fn run_cli(args: &[&str], threads: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_napa"))
        .args(args)
        .env("NAPA_THREADS", threads)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_8_determinism_across_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "extents = 40 x 30\nbox = 1:5..20, 2:5..15 @ 0.7\nbaseline = 0.05\nn1 = 30\nn2 = 30\n\
         replications = 6\nseed = 88\nsweep = region_pi\nsweep_values = 0.4, 0.8\nwrite_decisions = true\n",
    )
    .unwrap();
    let data = tmp.path().join("data");
    run_cli(
        &[
            "generate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
        ],
        "1",
    );
    let mut snaps = Vec::new();
    for (k, threads) in ["1", "4", "3", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = out.to_str().unwrap();
        run_cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", o], threads);
        let d = |n: &str| data.join(n).to_string_lossy().into_owned();
        let (s, g1, g2) = (d("sites.csv"), d("group1.csv"), d("group2.csv"));
        run_cli(
            &[
                "analyze", "--sites", &s, "--group1", &g1, "--group2", &g2, "--out", o, "--seed", "5",
            ],
            threads,
        );
        run_cli(
            &[
                "estimate-pi",
                "--sites",
                &s,
                "--group1",
                &g1,
                "--group2",
                &g2,
                "--out",
                o,
                "--seed",
                "5",
            ],
            threads,
        );
        snaps.push(snapshot(&out));
    }
    let names: Vec<&str> = snaps[0].iter().map(|(n, _)| n.as_str()).collect();
    let pass = snaps.iter().all(|s| s == &snaps[0]) && names.len() >= 9;
    report(
        "8 (byte-identical CSVs for NAPA_THREADS in {1,4,3,1})",
        pass,
        &format!("{} files compared: {}", names.len(), names.join(", ")),
    );
    assert!(pass);
}
