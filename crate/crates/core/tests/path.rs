mod common;

use coco_core::clusterpath::{auto_grid, solve_path, PathConfig};
use coco_core::{
    adjusted_rand_index, build_graphs, gen_checkerbox, solve_auto_path, CheckerboxSpec,
    WeightConfig,
};

#[test]
fn warm_start_saves_iterations_and_rss_grows() {
    let x = common::random_tensor(&mut common::rng(11), &[6, 5, 4]);
    let graphs = build_graphs(&x, &WeightConfig::default()).unwrap();
    let grid = auto_grid(&x, &graphs, &PathConfig::default()).unwrap();
    let warm = solve_path(&x, &graphs, &grid, &PathConfig::default()).unwrap();
    let cold_config = PathConfig {
        warm_start: false,
        ..PathConfig::default()
    };
    let cold = solve_path(&x, &graphs, &grid, &cold_config).unwrap();
    assert!(warm.total_iterations() <= cold.total_iterations());
    assert_eq!(warm.points.len(), cold.points.len());
    for (w, c) in warm.points.iter().zip(&cold.points) {
        assert!(w.u_hat.distance(&c.u_hat).unwrap() <= 1e-3 * x.frobenius_norm());
    }
    // the loss term is nondecreasing in gamma, up to solver tolerance
    let slack = 1e-6 * x.frobenius_norm().powi(2);
    for pair in warm.points.windows(2) {
        assert!(
            pair[1].rss >= pair[0].rss - slack,
            "{} then {}",
            pair[0].rss,
            pair[1].rss
        );
    }
}

#[test]
fn path_endpoints() {
    let x = common::random_tensor(&mut common::rng(12), &[5, 5, 5]);
    let graphs = build_graphs(&x, &WeightConfig::default()).unwrap();
    let path = solve_auto_path(&x, &graphs, &PathConfig::default()).unwrap();
    let first = &path.points[0];
    assert_eq!(first.gamma, 0.0);
    assert_eq!(first.co_cluster_count, x.len());
    assert!(common::rel_err(first.u_hat.vectorize(), x.vectorize()) <= 1e-10);
    let last = path.points.last().unwrap();
    assert!(last.coalesced);
    assert_eq!(last.co_cluster_count, 1);
    let mean = x.grand_mean();
    let dev = last
        .u_hat
        .vectorize()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(dev <= 1e-3 * x.frobenius_norm());
}

#[test]
fn recovers_low_noise_checkerbox() {
    let spec = CheckerboxSpec::balanced(&[15, 15, 15], &[2, 2, 2], 0.5, 3);
    let (x, truth) = gen_checkerbox(&spec).unwrap();
    let graphs = build_graphs(&x, &WeightConfig::default()).unwrap();
    let path = solve_auto_path(&x, &graphs, &PathConfig::default()).unwrap();
    let sel = path.selected_point();
    for (p, t) in sel.partitions.iter().zip(&truth.labels) {
        assert_eq!(adjusted_rand_index(&p.labels, t).unwrap(), 1.0);
    }
}
