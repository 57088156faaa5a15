//! Monte Carlo benchmark harness.
//!
//! Runs the full grid of (reward tensor) x (replication) x (sample size)
//! x (estimator) cells: each cell draws a fresh logged dataset with a
//! seed derived from the cell coordinates, runs every estimator, and
//! records the squared error against the tensor's enumerated ground
//! truth. Aggregation computes the MSE per tensor over replications,
//! turns it into log10(RMSE), and averages over tensors with a standard
//! error across tensors (or, for a single tensor, the delta-method
//! standard error over replications).
//!
//! Because seeds are per cell, the grid can run on any number of threads
//! and produce identical results; reports serialize to identical bytes.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{delta_method_se, run_estimator, EstimatorKind};
use crate::numeric;
use crate::oracle::enumerate_ground_truth;
use crate::rng::mix_seed;
use crate::simulator::{generate_logs, SimConfig};

/// Stream tag mixed into a cell seed to derive the cross-fit shuffle.
const CROSSFIT_STREAM: u64 = 0xcf;

/// Results for one (estimator, sample size, tensor) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCell {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub tensor: usize,
    /// Mean squared error over the defined replications; `None` when
    /// every replication was undefined.
    pub mse: Option<f64>,
    /// `log10(MSE)/2`; `None` when `mse` is missing or not positive.
    pub log10_rmse: Option<f64>,
    /// Delta-method standard error of `log10_rmse` over replications.
    pub se: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
    /// Point estimates of the defined replications, in replication order.
    pub estimates: Vec<f64>,
    /// Squared errors of the defined replications, in replication order.
    pub squared_errors: Vec<f64>,
}

/// Results for one (estimator, sample size) cell, aggregated over
/// tensors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchCell {
    pub estimator: EstimatorKind,
    pub n: usize,
    /// Mean over tensors of the per-tensor MSE.
    pub mse: Option<f64>,
    /// Mean over tensors of the per-tensor `log10(RMSE)`.
    pub log10_rmse: Option<f64>,
    /// Standard error across tensors; for a single tensor, the
    /// delta-method standard error over replications.
    pub se: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
    /// Tensors contributing no defined replication to this cell.
    pub missing_tensors: usize,
}

/// The full benchmark output: the echoed configuration, the enumerated
/// ground truth per tensor, per-tensor cells, and aggregated cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: SimConfig,
    pub estimators: Vec<EstimatorKind>,
    /// `theta` per tensor, from the enumeration oracle.
    pub truths: Vec<f64>,
    pub cells: Vec<BenchCell>,
    pub per_tensor: Vec<TensorCell>,
}

impl BenchReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV: one row per (estimator, n, tensor) plus an aggregate
    /// row per (estimator, n) with `all` in the tensor column.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from("estimator,n,tensor,mse,log10_rmse,se,defined,undefined\n");
        for cell in &self.cells {
            for tc in self
                .per_tensor
                .iter()
                .filter(|tc| tc.estimator == cell.estimator && tc.n == cell.n)
            {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    tc.estimator.cli_id(),
                    tc.n,
                    tc.tensor,
                    opt(tc.mse),
                    opt(tc.log10_rmse),
                    opt(tc.se),
                    tc.defined,
                    tc.undefined
                ));
            }
            out.push_str(&format!(
                "{},{},all,{},{},{},{},{}\n",
                cell.estimator.cli_id(),
                cell.n,
                opt(cell.mse),
                opt(cell.log10_rmse),
                opt(cell.se),
                cell.defined,
                cell.undefined
            ));
        }
        out
    }

    /// The aggregated cell for an estimator at a sample size.
    pub fn cell(&self, estimator: EstimatorKind, n: usize) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn tensor_cell(
        &self,
        estimator: EstimatorKind,
        n: usize,
        tensor: usize,
    ) -> Option<&TensorCell> {
        self.per_tensor
            .iter()
            .find(|c| c.estimator == estimator && c.n == n && c.tensor == tensor)
    }
}

struct TaskOutput {
    /// One entry per estimator: the point estimate, or `None` when the
    /// estimator was undefined on this replication.
    estimates: Vec<Option<f64>>,
}

/// Runs the benchmark grid for `estimators` under `config`.
///
/// Replication cells are independent tasks executed on the current rayon
/// thread pool; results are reduced in a fixed order, so the report is
/// identical for any thread count.
pub fn run_benchmark(config: &SimConfig, estimators: &[EstimatorKind]) -> Result<BenchReport> {
    config.validate()?;
    if estimators.is_empty() {
        return Err(Error::Config("no estimators requested".into()));
    }
    if estimators.contains(&EstimatorKind::FixedWeights) {
        return Err(Error::Config(
            "the benchmark runs self-contained estimators; fixed weights need a caller-supplied vector".into(),
        ));
    }
    let logging = config.logging_policy()?;
    let target = config.target_policy()?;

    let tensors: Vec<_> = (0..config.num_tensors)
        .map(|t| config.sample_tensor(t))
        .collect::<Result<_>>()?;
    let truths: Vec<f64> = tensors
        .iter()
        .map(|m| Ok(enumerate_ground_truth(m, &logging, &target)?.theta))
        .collect::<Result<_>>()?;

    // Task grid in a fixed order; seeds depend only on coordinates.
    let mut tasks = Vec::new();
    for tensor in 0..config.num_tensors {
        for rep in 0..config.reps_per_tensor {
            for &n in &config.sample_sizes {
                tasks.push((tensor, rep, n));
            }
        }
    }
    let outputs: Vec<TaskOutput> = tasks
        .par_iter()
        .map(|&(tensor, rep, n)| {
            let seed = config.cell_seed(tensor, rep, n);
            let dataset = generate_logs(&tensors[tensor], &logging, &target, n, seed)?;
            let crossfit_seed = mix_seed(seed, &[CROSSFIT_STREAM]);
            let estimates = estimators
                .iter()
                .map(|&kind| Ok(run_estimator(kind, &dataset, None, crossfit_seed)?.estimate))
                .collect::<Result<Vec<_>>>()?;
            Ok(TaskOutput { estimates })
        })
        .collect::<Result<_>>()?;

    // Reduce in (estimator, n, tensor, rep) order.
    let mut per_tensor = Vec::new();
    let mut cells = Vec::new();
    for (e_idx, &estimator) in estimators.iter().enumerate() {
        for &n in &config.sample_sizes {
            let mut tensor_cells = Vec::with_capacity(config.num_tensors);
            for (tensor, &truth) in truths.iter().enumerate() {
                let mut estimates = Vec::new();
                let mut squared_errors = Vec::new();
                let mut undefined = 0usize;
                for rep in 0..config.reps_per_tensor {
                    let task_idx = (tensor * config.reps_per_tensor + rep)
                        * config.sample_sizes.len()
                        + config.sample_sizes.iter().position(|&s| s == n).unwrap();
                    match outputs[task_idx].estimates[e_idx] {
                        Some(est) => {
                            let err = est - truth;
                            estimates.push(est);
                            squared_errors.push(err * err);
                        }
                        None => undefined += 1,
                    }
                }
                let defined = estimates.len();
                let mse = (defined > 0).then(|| numeric::mean(&squared_errors));
                let log10_rmse = mse.and_then(|m| (m > 0.0).then(|| m.log10() / 2.0));
                let se = if squared_errors.len() >= 2 {
                    delta_method_se(&squared_errors).ok().and_then(|d| d.se)
                } else {
                    None
                };
                tensor_cells.push(TensorCell {
                    estimator,
                    n,
                    tensor,
                    mse,
                    log10_rmse,
                    se,
                    defined,
                    undefined,
                    estimates,
                    squared_errors,
                });
            }

            cells.push(aggregate(estimator, n, &tensor_cells));
            per_tensor.extend(tensor_cells);
        }
    }

    Ok(BenchReport {
        config: config.clone(),
        estimators: estimators.to_vec(),
        truths,
        cells,
        per_tensor,
    })
}

fn aggregate(estimator: EstimatorKind, n: usize, tensor_cells: &[TensorCell]) -> BenchCell {
    let defined: usize = tensor_cells.iter().map(|c| c.defined).sum();
    let undefined: usize = tensor_cells.iter().map(|c| c.undefined).sum();
    let missing_tensors = tensor_cells.iter().filter(|c| c.mse.is_none()).count();

    let mses: Vec<f64> = tensor_cells.iter().filter_map(|c| c.mse).collect();
    let logs: Vec<f64> = tensor_cells.iter().filter_map(|c| c.log10_rmse).collect();
    let mse = (!mses.is_empty()).then(|| numeric::mean(&mses));
    let log10_rmse = (!logs.is_empty()).then(|| numeric::mean(&logs));
    let se = if logs.len() > 1 {
        numeric::sample_std(&logs).map(|sd| sd / (logs.len() as f64).sqrt())
    } else {
        // Single tensor: fall back to the per-tensor delta-method SE.
        tensor_cells.iter().find_map(|c| c.se)
    };
    BenchCell {
        estimator,
        n,
        mse,
        log10_rmse,
        se,
        defined,
        undefined,
        missing_tensors,
    }
}
