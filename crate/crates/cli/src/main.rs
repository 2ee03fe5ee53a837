//! `coco`: simulate tensors, fit convex co-clusterings, run the
//! regularization path and the CPD+k-means baseline, and score results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use coco_core::clusterpath::{auto_grid, fit_gamma, gamma_grid, solve_path, PathConfig};
use coco_core::report::{write_heatmap_csv, write_path_csv, ModelReport, TruthReport};
use coco_core::simgen::{BlockMeans, CheckerboxSpec, CpShape, Noise, DEFAULT_SEPARATION};
use coco_core::solver::{SolverConfig, StepSize};
use coco_core::weights::{build_graphs, Bandwidth, WeightConfig};
use coco_core::{
    adjusted_rand_index, cpd_kmeans, element_labels, gen_checkerbox, gen_cp_two_shape,
    gen_heteroskedastic, variation_of_information, BaselineConfig, CocoError, DenseTensor,
};

#[derive(Parser, Debug)]
#[command(
    name = "coco",
    version,
    about = "Convex co-clustering of dense tensors"
)]
struct Cli {
    /// Worker threads (0 = all cores). Falls back to COCO_THREADS.
    #[arg(long, global = true, env = "COCO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tensor and its ground truth.
    Simulate(SimulateArgs),
    /// Solve at a single gamma.
    Fit(FitArgs),
    /// Solve along a gamma grid and select a model by eBIC.
    Path(PathArgs),
    /// CP decomposition followed by k-means on each factor.
    Baseline(BaselineArgs),
    /// Per-mode and co-clustering ARI/VI of a result against the truth.
    Evaluate(EvaluateArgs),
    /// A 2-way slice with rows and columns reordered by cluster label.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Model {
    Checkerbox,
    Heteroskedastic,
    HalfMoons,
    Bullseye,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "checkerbox")]
    model: Model,
    /// Comma-separated mode lengths. CP models use the first entry for every mode.
    #[arg(long, value_delimiter = ',', default_value = "20,20,20")]
    dims: Vec<usize>,
    /// Comma-separated cluster counts per mode.
    #[arg(long, value_delimiter = ',', default_value = "2,2,2")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Noise ratio of odd mode-1 clusters (heteroskedastic model).
    #[arg(long, default_value_t = 2.0)]
    sigma_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_SEPARATION)]
    separation: f64,
    /// Per-mode cluster fractions, modes separated by `;`, e.g. `0.2,0.8;0.5,0.5`.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tensor output; `.txt` selects the text format.
    #[arg(long, default_value = "tensor.coco")]
    out: PathBuf,
    #[arg(long, default_value = "truth.json")]
    truth: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct WeightArgs {
    /// Starting neighbor count, raised until each mode graph is connected.
    #[arg(long, default_value_t = 1)]
    k_neighbors: usize,
    /// `auto` or comma-separated Tucker ranks for denoising.
    #[arg(long, default_value = "auto")]
    tucker_ranks: String,
    /// Build weights from the raw tensor.
    #[arg(long)]
    raw_weights: bool,
    /// Uniform pre-weights instead of the Gaussian kernel.
    #[arg(long)]
    uniform_weights: bool,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Fixed step size; the default is derived from the operator norm.
    #[arg(long)]
    step_size: Option<f64>,
    /// Plain projected gradient without momentum.
    #[arg(long)]
    no_accelerate: bool,
    /// Relative threshold for treating two subarrays as fused.
    #[arg(long, default_value_t = 1e-4)]
    fuse_tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    input: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
    /// Also write the fitted tensor.
    #[arg(long)]
    uhat: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PathArgs {
    input: PathBuf,
    /// Explicit grid `min,max,count`; default is the automatic doubling grid.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    grid_size: usize,
    #[arg(long)]
    cold: bool,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "path.csv")]
    csv: PathBuf,
    #[arg(long, default_value = "selected.json")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BaselineArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 20)]
    b_refs: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "baseline.json")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    truth: PathBuf,
    result: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum HeatmapValues {
    /// Co-cluster means of the data.
    Fitted,
    Data,
}

#[derive(Args, Debug, Serialize)]
struct HeatmapArgs {
    result: PathBuf,
    tensor: PathBuf,
    /// 1-based mode shown along rows.
    #[arg(long, default_value_t = 1)]
    rows: usize,
    /// 1-based mode shown along columns.
    #[arg(long, default_value_t = 2)]
    cols: usize,
    /// 1-based index for every mode; row and column entries are ignored.
    #[arg(long, value_delimiter = ',')]
    fixed: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "fitted")]
    values: HeatmapValues,
    #[arg(long, default_value = "heatmap.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CocoError>() {
        Some(CocoError::Divergence { .. }) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Path(a) => path(&a),
        Command::Baseline(a) => baseline(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::ExportHeatmap(a) => heatmap(&a),
    }
}

fn echo<T: Serialize>(command: &str, args: &T) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::json!({ "command": command, "args": args }))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s)
        .map_err(CocoError::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_input(path: &Path) -> anyhow::Result<DenseTensor> {
    coco_core::io::read_tensor(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_fractions(s: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|mode| {
            mode.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        anyhow!(CocoError::Parse(format!("fractions: bad value `{v}`")))
                    })
                })
                .collect()
        })
        .collect()
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let (x, truth, spec) = match a.model {
        Model::Checkerbox | Model::Heteroskedastic => {
            let spec = CheckerboxSpec {
                dims: a.dims.clone(),
                clusters: a.k.clone(),
                fractions: a.fractions.as_deref().map(parse_fractions).transpose()?,
                block_means: BlockMeans::Sample {
                    separation: a.separation,
                },
                noise: Noise::Global { sigma: a.sigma },
                shuffle: !a.no_shuffle,
                seed: a.seed,
            };
            let (x, t) = if matches!(a.model, Model::Heteroskedastic) {
                gen_heteroskedastic(&spec, a.sigma, a.sigma_ratio)?
            } else {
                gen_checkerbox(&spec)?
            };
            (x, t, serde_json::to_value(&spec)?)
        }
        Model::HalfMoons | Model::Bullseye => {
            let shape = if matches!(a.model, Model::HalfMoons) {
                CpShape::HalfMoons
            } else {
                CpShape::Bullseye
            };
            let n = *a
                .dims
                .first()
                .ok_or_else(|| CocoError::param("dims", "empty"))?;
            let (x, t) = gen_cp_two_shape(shape, n, a.sigma, a.seed)?;
            (
                x,
                t,
                serde_json::json!({ "shape": shape, "n": n, "sigma": a.sigma, "seed": a.seed }),
            )
        }
    };
    coco_core::io::write_tensor(&x, &a.out)?;
    let report = TruthReport::new(
        &truth,
        serde_json::json!({ "generator": spec, "config": echo("simulate", a)? }),
    );
    write_json(&report, &a.truth)
}

fn weight_config(w: &WeightArgs) -> anyhow::Result<WeightConfig> {
    let tucker_ranks = if w.tucker_ranks.trim() == "auto" {
        None
    } else {
        Some(
            w.tucker_ranks
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| {
                    CocoError::param("tucker-ranks", "expected `auto` or a list of integers")
                })?,
        )
    };
    Ok(WeightConfig {
        k_neighbors: w.k_neighbors,
        bandwidth: if w.uniform_weights {
            Bandwidth::Uniform
        } else {
            Bandwidth::Median
        },
        tucker_ranks,
        raw: w.raw_weights,
    })
}

fn path_config(s: &SolverArgs, grid_size: usize, warm: bool) -> anyhow::Result<PathConfig> {
    if !(s.gap_tol > 0.0) || !(s.fuse_tol > 0.0) {
        bail!(CocoError::param("gap-tol/fuse-tol", "must be positive"));
    }
    let step_size = match s.step_size {
        Some(v) if v > 0.0 => StepSize::Fixed(v),
        Some(_) => bail!(CocoError::param("step-size", "must be positive")),
        None => StepSize::Auto,
    };
    Ok(PathConfig {
        solver: SolverConfig {
            step_size,
            max_iter: s.max_iter,
            gap_tol: s.gap_tol,
            accelerate: !s.no_accelerate,
            ..SolverConfig::default()
        },
        fuse_tol: s.fuse_tol,
        warm_start: warm,
        grid_size,
        ..PathConfig::default()
    })
}

fn fit(a: &FitArgs) -> anyhow::Result<()> {
    if !(a.gamma >= 0.0) || !a.gamma.is_finite() {
        bail!(CocoError::param("gamma", "must be finite and >= 0"));
    }
    let x = read_input(&a.input)?;
    let config = path_config(&a.solver, 2, false)?;
    let graphs = build_graphs(&x, &weight_config(&a.weights)?)?;
    let point = fit_gamma(&x, &graphs, a.gamma, &config)?;
    if !point.converged {
        eprintln!(
            "warning: stopped at max-iter {} with gap {:.3e}",
            point.iterations, point.gap
        );
    }
    if let Some(p) = &a.uhat {
        coco_core::io::write_tensor(&point.u_hat, p)?;
    }
    let report = ModelReport::from_point(&x, &point, echo("fit", a)?)?;
    write_json(&report, &a.out)
}

fn path(a: &PathArgs) -> anyhow::Result<()> {
    let x = read_input(&a.input)?;
    let config = path_config(&a.solver, a.grid_size, !a.cold)?;
    let graphs = build_graphs(&x, &weight_config(&a.weights)?)?;
    let grid = match &a.grid {
        Some(g) => {
            let count = g[2];
            if !(count >= 2.0) || count.fract() != 0.0 {
                bail!(CocoError::param("grid", "count must be an integer >= 2"));
            }
            gamma_grid(g[0], g[1], count as usize)?
        }
        None => auto_grid(&x, &graphs, &config)?,
    };
    let sp = solve_path(&x, &graphs, &grid, &config)?;
    let mut csv = BufWriter::new(
        File::create(&a.csv).with_context(|| format!("creating {}", a.csv.display()))?,
    );
    write_path_csv(&sp, &mut csv)?;
    csv.flush()?;
    let report = ModelReport::from_point(&x, sp.selected_point(), echo("path", a)?)?;
    write_json(&report, &a.out)
}

fn baseline(a: &BaselineArgs) -> anyhow::Result<()> {
    let x = read_input(&a.input)?;
    if a.k_max == 0 {
        bail!(CocoError::param("k-max", "must be at least 1"));
    }
    let config = BaselineConfig {
        rank_candidates: a.ranks.clone(),
        k_candidates: (1..=a.k_max).collect(),
        b_refs: a.b_refs,
        restarts: a.restarts,
        ..BaselineConfig::default()
    };
    let r = cpd_kmeans(&x, &config, a.seed)?;
    let mut echoed = echo("baseline", a)?;
    echoed["selected_rank"] = serde_json::json!(r.rank);
    echoed["rank_fits"] = serde_json::json!(r.rank_fits);
    let report = ModelReport::from_partitions("cpd-kmeans", &x, &r.partitions, echoed)?;
    write_json(&report, &a.out)
}

/// The fields shared by truth and result files.
#[derive(Deserialize)]
struct Labeled {
    schema_version: u32,
    dims: Vec<usize>,
    labels: Vec<Vec<usize>>,
}

fn read_labeled(path: &Path) -> anyhow::Result<Labeled> {
    let l: Labeled = read_json(path)?;
    if l.schema_version != coco_core::report::SCHEMA_VERSION {
        bail!(CocoError::Parse(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            l.schema_version
        )));
    }
    if l.labels.len() != l.dims.len() || l.labels.iter().zip(&l.dims).any(|(v, &n)| v.len() != n) {
        bail!(CocoError::Parse(format!(
            "{}: labels do not match dims",
            path.display()
        )));
    }
    Ok(l)
}

fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let truth = read_labeled(&a.truth)?;
    let result = read_labeled(&a.result)?;
    if truth.dims != result.dims {
        bail!(CocoError::DimensionMismatch(format!(
            "truth dims {:?} vs result dims {:?}",
            truth.dims, result.dims
        )));
    }
    let mut out = String::from("mode,ari,vi\n");
    for (d, (t, r)) in truth.labels.iter().zip(&result.labels).enumerate() {
        let ari = adjusted_rand_index(r, t)?;
        let vi = variation_of_information(r, t)?;
        out.push_str(&format!("{},{ari},{vi}\n", d + 1));
    }
    let te = element_labels(&truth.labels);
    let re = element_labels(&result.labels);
    let ari = adjusted_rand_index(&re, &te)?;
    let vi = variation_of_information(&re, &te)?;
    out.push_str(&format!("co,{ari},{vi}\n"));
    match &a.out {
        Some(p) => fs::write(p, out).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn heatmap(a: &HeatmapArgs) -> anyhow::Result<()> {
    let report: ModelReport = read_json(&a.result)?;
    report.validate()?;
    let x = read_input(&a.tensor)?;
    if x.dims() != report.dims.as_slice() {
        bail!(CocoError::DimensionMismatch(format!(
            "tensor dims {:?} vs result dims {:?}",
            x.dims(),
            report.dims
        )));
    }
    let order = x.order();
    let mode = |m: usize, field: &str| -> anyhow::Result<usize> {
        if m == 0 || m > order {
            bail!(CocoError::param(
                field,
                format!("mode must be in 1..={order}")
            ));
        }
        Ok(m - 1)
    };
    let (rows, cols) = (mode(a.rows, "rows")?, mode(a.cols, "cols")?);
    let fixed = match &a.fixed {
        Some(f) => {
            if f.len() != order || f.contains(&0) {
                bail!(CocoError::param("fixed", "need one 1-based index per mode"));
            }
            f.iter().map(|i| i - 1).collect()
        }
        None => vec![0; order],
    };
    let values = match a.values {
        HeatmapValues::Data => x,
        HeatmapValues::Fitted => {
            let means = DenseTensor::new(report.means_dims.clone(), report.means.clone())?;
            DenseTensor::from_fn(&report.dims, |ix| {
                let c: Vec<usize> = ix.iter().zip(&report.labels).map(|(&i, l)| l[i]).collect();
                means.get(&c)
            })?
        }
    };
    let mut w = BufWriter::new(
        File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?,
    );
    write_heatmap_csv(&values, &report.labels, rows, cols, &fixed, &mut w)?;
    w.flush()?;
    Ok(())
}
