use napa_core::rng::{stream, Purpose};
use napa_core::simulate::{generate_dataset, ExperimentConfig};
use napa_core::statistics::compute_site_statistics;
use napa_core::testing::{gap_groups, gap_lite_procedure, gap_then_laws_procedure, laws_procedure};
use napa_core::weights::{select_tau, DEFAULT_SCREEN_LEVEL, DEFAULT_XI};
use napa_core::{BandwidthMatrix, SiteStatistics, SpatialGrid};

fn sample(m: usize) -> (SpatialGrid, SiteStatistics) {
    let cfg = ExperimentConfig::study_1d_scaled(m);
    let grid = SpatialGrid::new(&cfg.extents).unwrap();
    let field = cfg.regions.evaluate(&grid).unwrap();
    let mut rng = stream(31, Purpose::Data, 0, 0);
    let sim = generate_dataset(&cfg, &grid, &field, &mut rng).unwrap();
    let stats = compute_site_statistics(&sim.dataset).unwrap();
    (grid, stats)
}

fn order_preserved(p: &[f64], pw: &[f64]) -> bool {
    (0..p.len()).all(|i| (0..p.len()).all(|j| p[i] >= p[j] || pw[i] <= pw[j]))
}

#[test]
fn single_group_gap_keeps_p_value_order() {
    let (_, stats) = sample(400);
    let tau = select_tau(&stats.p_value, DEFAULT_SCREEN_LEVEL).unwrap();
    let d = gap_lite_procedure(&stats, 0.05, tau, 1).unwrap();
    assert!(order_preserved(&stats.p_value, &d.weighted_p));
}

#[test]
fn gap_then_laws_with_constant_auxiliary_is_laws_on_rescaled_p() {
    let (grid, mut stats) = sample(400);
    stats.u_stat = vec![1.5; stats.len()];
    let tau = select_tau(&stats.p_value, DEFAULT_SCREEN_LEVEL).unwrap();
    let bw = BandwidthMatrix::new(25.0, 1.0, 0.0).unwrap();
    let groups = gap_groups(&stats.p_value, &stats.u_stat, tau, 3, DEFAULT_XI).unwrap();
    assert_eq!(groups.sizes, vec![stats.len(), 0, 0]);
    let pi = groups.pi_hat[0];
    let mut rescaled = stats.clone();
    rescaled.p_value = stats.p_value.iter().map(|&p| (p * (1.0 - pi) / pi).min(1.0)).collect();
    let combined = gap_then_laws_procedure(&stats, &grid, 0.2, tau, &bw).unwrap();
    let laws = laws_procedure(&rescaled, &grid, 0.2, tau, &bw).unwrap();
    assert_eq!(combined.rejected, laws.rejected);
    assert_eq!(combined.weighted_p, laws.weighted_p);
    assert!(combined.rejections() > 0);
}

#[test]
fn laws_with_flat_weights_keeps_p_value_order() {
    let (grid, stats) = sample(300);
    let tau = select_tau(&stats.p_value, DEFAULT_SCREEN_LEVEL).unwrap();
    let bw = BandwidthMatrix::new(1e7, 1.0, 0.0).unwrap();
    let d = laws_procedure(&stats, &grid, 0.05, tau, &bw).unwrap();
    let mut p = stats.p_value.clone();
    p.sort_by(f64::total_cmp);
    let min_gap = p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    assert!(min_gap > 1e-9);
    assert!(order_preserved(&stats.p_value, &d.weighted_p));
}
