//! JSON and CSV artifacts: selected models, ground truth, and path tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clusterpath::{co_cluster_means, Partition, SolutionPath, SolutionPoint};
use crate::error::{CocoError, Result};
use crate::simgen::GroundTruth;
use crate::tensor::DenseTensor;

pub const SCHEMA_VERSION: u32 = 1;

/// A fitted co-clustering, from either CoCo or the CPD+k-means baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub schema_version: u32,
    pub method: String,
    pub dims: Vec<usize>,
    pub gamma: Option<f64>,
    /// Per-mode cluster labels.
    pub labels: Vec<Vec<usize>>,
    /// Shape of the co-cluster mean tensor.
    pub means_dims: Vec<usize>,
    /// Co-cluster means of the data, flat in mode-1 order.
    pub means: Vec<f64>,
    pub co_cluster_count: usize,
    pub rss: Option<f64>,
    pub ebic: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub config: serde_json::Value,
}

impl ModelReport {
    pub fn from_point(
        x: &DenseTensor,
        point: &SolutionPoint,
        config: serde_json::Value,
    ) -> Result<Self> {
        let means = co_cluster_means(x, &point.partitions)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            method: "coco".into(),
            dims: x.dims().to_vec(),
            gamma: Some(point.gamma),
            labels: point.partitions.iter().map(|p| p.labels.clone()).collect(),
            means_dims: means.dims().to_vec(),
            means: means.into_data(),
            co_cluster_count: point.co_cluster_count,
            rss: Some(point.rss),
            ebic: Some(point.ebic),
            gap: Some(point.gap),
            iterations: Some(point.iterations),
            converged: Some(point.converged),
            config,
        })
    }

    pub fn from_partitions(
        method: &str,
        x: &DenseTensor,
        partitions: &[Partition],
        config: serde_json::Value,
    ) -> Result<Self> {
        let means = co_cluster_means(x, partitions)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            method: method.into(),
            dims: x.dims().to_vec(),
            gamma: None,
            labels: partitions.iter().map(|p| p.labels.clone()).collect(),
            co_cluster_count: means.len(),
            means_dims: means.dims().to_vec(),
            means: means.into_data(),
            rss: None,
            ebic: None,
            gap: None,
            iterations: None,
            converged: None,
            config,
        })
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.labels
            .iter()
            .enumerate()
            .map(|(mode, l)| Partition {
                mode,
                labels: l.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        check_labels(&self.dims, &self.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub schema_version: u32,
    pub dims: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
    pub block_dims: Vec<usize>,
    pub block_means: Vec<f64>,
    pub permutations: Vec<Vec<usize>>,
    pub spec: serde_json::Value,
}

impl TruthReport {
    pub fn new(truth: &GroundTruth, spec: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dims: truth.u_star.dims().to_vec(),
            labels: truth.labels.clone(),
            block_dims: truth.block_means.dims().to_vec(),
            block_means: truth.block_means.vectorize().to_vec(),
            permutations: truth.permutations.clone(),
            spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        check_labels(&self.dims, &self.labels)
    }
}

fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(CocoError::Parse(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn check_labels(dims: &[usize], labels: &[Vec<usize>]) -> Result<()> {
    if dims.len() != labels.len() {
        return Err(CocoError::Parse(format!(
            "{} label vectors for {} modes",
            labels.len(),
            dims.len()
        )));
    }
    for (d, (l, &n)) in labels.iter().zip(dims).enumerate() {
        if l.len() != n {
            return Err(CocoError::Parse(format!(
                "mode {} has {} labels, expected {n}",
                d + 1,
                l.len()
            )));
        }
    }
    Ok(())
}

/// `gamma,rss,df,ebic,gap,iters,k_mode_1,...,k_mode_D`, one row per point.
pub fn write_path_csv<W: Write>(path: &SolutionPath, mut w: W) -> Result<()> {
    let order = path.points.first().map_or(0, |p| p.partitions.len());
    let mut header = String::from("gamma,rss,df,ebic,gap,iters");
    for d in 1..=order {
        header.push_str(&format!(",k_mode_{d}"));
    }
    writeln!(w, "{header}")?;
    for p in &path.points {
        let ks: Vec<String> = p
            .partitions
            .iter()
            .map(|q| q.n_clusters().to_string())
            .collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.gamma,
            p.rss,
            p.co_cluster_count,
            p.ebic,
            p.gap,
            p.iterations,
            ks.join(",")
        )?;
    }
    Ok(())
}

/// Writes a 2-way slice (modes `row_mode`, `col_mode`, every other index
/// fixed by `fixed`) with rows and columns stably sorted by cluster label.
/// The first row and column carry the original 1-based indices.
pub fn write_heatmap_csv<W: Write>(
    x: &DenseTensor,
    labels: &[Vec<usize>],
    row_mode: usize,
    col_mode: usize,
    fixed: &[usize],
    mut w: W,
) -> Result<()> {
    let order = x.order();
    for m in [row_mode, col_mode] {
        if m >= order {
            return Err(CocoError::ModeOutOfRange { mode: m, order });
        }
    }
    if row_mode == col_mode {
        return Err(CocoError::param(
            "modes",
            "row and column modes must differ",
        ));
    }
    if fixed.len() != order || fixed.iter().zip(x.dims()).any(|(&i, &n)| i >= n) {
        return Err(CocoError::param(
            "fixed",
            "need one in-range index per mode",
        ));
    }
    check_labels(x.dims(), labels)?;
    let sorted = |m: usize| {
        let mut ix: Vec<usize> = (0..x.dims()[m]).collect();
        ix.sort_by_key(|&i| labels[m][i]);
        ix
    };
    let rows = sorted(row_mode);
    let cols = sorted(col_mode);
    let head: Vec<String> = cols.iter().map(|c| (c + 1).to_string()).collect();
    writeln!(w, "index,{}", head.join(","))?;
    let mut idx = fixed.to_vec();
    for &r in &rows {
        idx[row_mode] = r;
        let vals: Vec<String> = cols
            .iter()
            .map(|&c| {
                idx[col_mode] = c;
                x.get(&idx).to_string()
            })
            .collect();
        writeln!(w, "{},{}", r + 1, vals.join(","))?;
    }
    Ok(())
}
