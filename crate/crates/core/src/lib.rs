//! Convex co-clustering of dense D-way tensors.
//!
//! The estimator minimizes a least-squares loss plus weighted group-lasso
//! fusion penalties between pairs of subarrays along every mode. It is
//! solved through its dual by projected gradient with a duality-gap stopping
//! rule, then tracked along a warm-started regularization path from which a
//! model is picked by eBIC.
//!
//! ```
//! use coco_core::{build_graphs, gamma_grid, solve_path, DenseTensor, PathConfig, WeightConfig};
//!
//! let x = DenseTensor::from_fn(&[6, 6, 6], |i| if i[0] < 3 { 1.0 } else { -1.0 }).unwrap();
//! let graphs = build_graphs(&x, &WeightConfig::default()).unwrap();
//! let grid = gamma_grid(0.0, 100.0, 4).unwrap();
//! let path = solve_path(&x, &graphs, &grid, &PathConfig::default()).unwrap();
//! // gamma = 0 returns the data; its two distinct mode-1 slices stay apart
//! assert_eq!(path.points[0].u_hat, x);
//! let mode1 = &path.selected_point().partitions[0];
//! assert_eq!(mode1.labels, [0, 0, 0, 1, 1, 1]);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod clusterpath;
pub mod decomp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod report;
pub mod simgen;
pub mod solver;
pub mod tensor;
pub mod weights;

pub use baseline::{
    cpd_kmeans, gap_statistic, kmeans, BaselineConfig, BaselineResult, KMeansResult,
};
pub use clusterpath::{
    auto_grid, co_cluster_means, ebic, extract_mode_clusters, fit_gamma, gamma_grid,
    solve_auto_path, solve_path, Partition, PathConfig, SolutionPath, SolutionPoint,
};
pub use decomp::{cp_als, heuristic_rank, hosvd, tucker_hooi, CpModel, TuckerModel};
pub use error::{CocoError, Result};
pub use metrics::{adjusted_rand_index, element_labels, variation_of_information};
pub use report::{ModelReport, TruthReport};
pub use simgen::{
    gen_checkerbox, gen_cp_two_shape, gen_heteroskedastic, CheckerboxSpec, CpShape, GroundTruth,
};
pub use solver::{
    duality_gap, solve, DualState, FusionOperator, SolveResult, SolverConfig, StepSize,
};
pub use tensor::DenseTensor;
pub use weights::{build_graphs, Bandwidth, Edge, ModeGraph, WeightConfig};
