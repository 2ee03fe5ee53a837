//! Fixtures shared by the solver benchmarks in `benches/`.

use coco_core::{
    build_graphs, gen_checkerbox, CheckerboxSpec, DenseTensor, FusionOperator, WeightConfig,
};

/// An `n x n x n` two-cluster checkerbox (sigma 3) with its k-NN fusion operator.
pub fn checkerbox_fixture(n: usize) -> (DenseTensor, FusionOperator) {
    let spec = CheckerboxSpec::balanced(&[n, n, n], &[2, 2, 2], 3.0, n as u64);
    let (x, _) = gen_checkerbox(&spec).expect("valid spec");
    let graphs = build_graphs(&x, &WeightConfig::default()).expect("weights");
    let op = FusionOperator::new(x.dims(), &graphs).expect("operator");
    (x, op)
}
