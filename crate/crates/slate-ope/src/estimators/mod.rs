//! Off-policy value estimators for slate data.
//!
//! All estimators target `theta = E[G R]`, where per record
//!
//! ```text
//! Y_k = pi(A_k | X) / mu_k(A_k | X),      G = 1 + sum_k (Y_k - 1).
//! ```
//!
//! Under a factored logging policy each `Y_k` has mean one, so each
//! `Y_k - 1` is a mean-zero control variate. The estimator family
//!
//! ```text
//! theta_hat(w) = E_n[Gamma_w],   Gamma_w = G R - sum_k w_k (Y_k - 1)
//! ```
//!
//! is unbiased for every fixed weight vector `w`. Members implemented
//! here:
//!
//! * **PI** (`w = 0`): the plain pseudoinverse estimator `E_n[G R]`.
//! * **wPI**: the self-normalized ratio `E_n[G R] / E_n[G]`; biased, and
//!   undefined when the realized mean of `G` is (numerically) zero.
//! * **PICVs**: single fitted weight `beta` shared by all slots,
//!   `beta_hat = E_n[G R (G - 1)] / sum_k E_n[(Y_k - 1)^2]`.
//! * **PICVm**: per-slot fitted weights
//!   `w_hat_k = E_n[G R (Y_k - 1)] / E_n[(Y_k - 1)^2]`.
//! * **CrossFit** (see [`crossfit`]): three-fold cross-fitted weights,
//!   unbiased at every sample size with the same asymptotic variance as
//!   PICVm.
//!
//! Dataset means use compensated summation in record order, so every
//! estimate is reproducible bit for bit.

mod crossfit;
mod variance;

pub use crossfit::{
    crossfit_combine, estimate_crossfit, estimate_crossfit_assigned, fold_assignment,
};
pub use variance::{delta_method_se, variance_report, DeltaMethodSummary, Improvements,
    VarianceReport};

use serde::{Deserialize, Serialize};

use crate::data::{LoggedRecord, SlateDataset};
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

/// Fitted-weight denominators below this are treated as zero: the control
/// variate is empirically constant and its weight is forced to 0.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// `|E_n[G]|` below this makes the self-normalized estimator undefined.
pub const WPI_UNDEFINED_TOL: f64 = 1e-12;

/// Flag attached to reports whose estimate is undefined.
pub const FLAG_UNDEFINED: &str = "undefined";

/// Flag attached when a fitted weight fell back to zero.
pub const FLAG_DEGENERATE: &str = "degenerate";

/// Per-slot importance ratios of one record and their aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioVector {
    /// `y[k] = pi(A_k|X) / mu_k(A_k|X)`.
    pub y: Vec<f64>,
    /// `g = 1 + sum_k (y[k] - 1)`, accumulated left to right in slot
    /// order. Tests may rely on this exact summation order.
    pub g: f64,
}

/// Computes the slot ratios `Y_k` and their aggregate `G` for one record.
pub fn compute_ratios(record: &LoggedRecord) -> Result<RatioVector> {
    let mut y = Vec::with_capacity(record.slate.len());
    for (k, (&mu, &pi)) in record
        .logging_propensities
        .iter()
        .zip(&record.target_marginals)
        .enumerate()
    {
        if mu.is_nan() || mu <= 0.0 {
            return Err(Error::Record {
                record: 0,
                message: format!("slot {k}: logging propensity {mu} must be positive"),
            });
        }
        y.push(pi / mu);
    }
    let mut g = 1.0;
    for &yk in &y {
        g += yk - 1.0;
    }
    Ok(RatioVector { y, g })
}

/// How a weight vector was specified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// One scalar broadcast to every slot.
    Single,
    /// Independent per-slot weights.
    Multi,
}

/// Control-variate weights: one value per slot, plus a tag recording
/// whether they came from a single broadcast scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    values: Vec<f64>,
    mode: WeightMode,
}

impl WeightVector {
    /// A scalar weight broadcast over `num_slots` slots.
    pub fn single(beta: f64, num_slots: usize) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Config(format!("weight {beta} is not finite")));
        }
        Ok(Self { values: vec![beta; num_slots], mode: WeightMode::Single })
    }

    /// Independent per-slot weights.
    pub fn multi(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("weight {bad} is not finite")));
        }
        if values.is_empty() {
            return Err(Error::Config("empty weight vector".into()));
        }
        Ok(Self { values, mode: WeightMode::Multi })
    }

    /// The all-zero weight vector (reproducing PI exactly).
    pub fn zeros(num_slots: usize) -> Self {
        Self { values: vec![0.0; num_slots], mode: WeightMode::Multi }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_slots(&self, num_slots: usize) -> Result<()> {
        if self.values.len() != num_slots {
            return Err(Error::WeightDimension { expected: num_slots, got: self.values.len() });
        }
        Ok(())
    }
}

/// Which estimator produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "PI")]
    Pi,
    #[serde(rename = "wPI")]
    Wpi,
    #[serde(rename = "PICVs")]
    Picvs,
    #[serde(rename = "PICVm")]
    Picvm,
    #[serde(rename = "CrossFit")]
    CrossFit,
    #[serde(rename = "FixedWeights")]
    FixedWeights,
}

impl EstimatorKind {
    /// Everything runnable from a dataset alone (fixed weights need a
    /// caller-supplied vector).
    pub const STANDARD: [EstimatorKind; 5] = [
        EstimatorKind::Pi,
        EstimatorKind::Wpi,
        EstimatorKind::Picvs,
        EstimatorKind::Picvm,
        EstimatorKind::CrossFit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Pi => "PI",
            EstimatorKind::Wpi => "wPI",
            EstimatorKind::Picvs => "PICVs",
            EstimatorKind::Picvm => "PICVm",
            EstimatorKind::CrossFit => "CrossFit",
            EstimatorKind::FixedWeights => "FixedWeights",
        }
    }

    /// The lowercase id used on the command line.
    pub fn cli_id(&self) -> &'static str {
        match self {
            EstimatorKind::Pi => "pi",
            EstimatorKind::Wpi => "wpi",
            EstimatorKind::Picvs => "picvs",
            EstimatorKind::Picvm => "picvm",
            EstimatorKind::CrossFit => "crossfit",
            EstimatorKind::FixedWeights => "fixed",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pi" => Ok(EstimatorKind::Pi),
            "wpi" => Ok(EstimatorKind::Wpi),
            "picvs" => Ok(EstimatorKind::Picvs),
            "picvm" => Ok(EstimatorKind::Picvm),
            "crossfit" => Ok(EstimatorKind::CrossFit),
            "fixed" | "fixedweights" => Ok(EstimatorKind::FixedWeights),
            other => Err(Error::Config(format!(
                "unknown estimator `{other}` (expected pi, wpi, picvs, picvm, crossfit)"
            ))),
        }
    }
}

/// Point estimate plus diagnostics for one estimator on one dataset.
///
/// `estimate` is `None` exactly when `flags` contains
/// [`FLAG_UNDEFINED`]. `plugin_variance` is the sample variance of the
/// per-record terms divided by `n`, with fitted weights treated as fixed;
/// it is absent for wPI and for single-record datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub estimate: Option<f64>,
    pub weights: Option<WeightVector>,
    pub plugin_variance: Option<f64>,
    pub n: usize,
    pub flags: Vec<String>,
}

/// Wire form: `{"estimator": ..., "estimate": ..., "weights": [...],
/// "plugin_variance": ..., "n": ..., "flags": [...]}`.
#[derive(Serialize)]
struct ReportWire<'a> {
    estimator: EstimatorKind,
    estimate: Option<f64>,
    weights: Option<&'a [f64]>,
    plugin_variance: Option<f64>,
    n: usize,
    flags: &'a [String],
}

impl Serialize for EstimateReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReportWire {
            estimator: self.estimator,
            estimate: self.estimate.filter(|e| e.is_finite()),
            weights: self.weights.as_ref().map(|w| w.values()),
            plugin_variance: self.plugin_variance,
            n: self.n,
            flags: &self.flags,
        }
        .serialize(s)
    }
}

fn per_record_gr(dataset: &SlateDataset) -> Result<(Vec<RatioVector>, Vec<f64>)> {
    let mut ratios = Vec::with_capacity(dataset.len());
    let mut gr = Vec::with_capacity(dataset.len());
    for record in dataset.records() {
        let r = compute_ratios(record)?;
        gr.push(r.g * record.reward);
        ratios.push(r);
    }
    Ok((ratios, gr))
}

fn plugin_variance(terms: &[f64]) -> Option<f64> {
    numeric::sample_variance(terms).map(|v| v / terms.len() as f64)
}

/// The pseudoinverse estimator `E_n[G R]`.
pub fn estimate_pi(dataset: &SlateDataset) -> Result<EstimateReport> {
    let (_, gr) = per_record_gr(dataset)?;
    Ok(EstimateReport {
        estimator: EstimatorKind::Pi,
        estimate: Some(numeric::mean(&gr)),
        weights: None,
        plugin_variance: plugin_variance(&gr),
        n: gr.len(),
        flags: Vec::new(),
    })
}

/// The self-normalized pseudoinverse estimator `E_n[G R] / E_n[G]`.
///
/// When the realized `|E_n[G]|` is below [`WPI_UNDEFINED_TOL`] the ratio
/// is meaningless; the report carries no estimate and the
/// [`FLAG_UNDEFINED`] flag.
pub fn estimate_wpi(dataset: &SlateDataset) -> Result<EstimateReport> {
    let (ratios, gr) = per_record_gr(dataset)?;
    let n = gr.len();
    let sum_gr = numeric::sum(gr.iter().copied());
    let sum_g = numeric::sum(ratios.iter().map(|r| r.g));
    let mean_g = sum_g / n as f64;
    if mean_g.abs() < WPI_UNDEFINED_TOL {
        return Ok(EstimateReport {
            estimator: EstimatorKind::Wpi,
            estimate: None,
            weights: None,
            plugin_variance: None,
            n,
            flags: vec![FLAG_UNDEFINED.to_string()],
        });
    }
    Ok(EstimateReport {
        estimator: EstimatorKind::Wpi,
        estimate: Some(sum_gr / sum_g),
        weights: None,
        plugin_variance: None,
        n,
        flags: Vec::new(),
    })
}

fn gamma_terms(ratios: &[RatioVector], gr: &[f64], weights: &[f64]) -> Vec<f64> {
    ratios
        .iter()
        .zip(gr)
        .map(|(r, &grv)| {
            let mut correction = CompensatedSum::new();
            for (&w, &y) in weights.iter().zip(&r.y) {
                correction.add(w * (y - 1.0));
            }
            grv - correction.value()
        })
        .collect()
}

/// The control-variate estimator `E_n[G R - sum_k w_k (Y_k - 1)]` for a
/// caller-chosen fixed weight vector. `w = 0` reproduces
/// [`estimate_pi`] exactly.
pub fn estimate_fixed_weights(
    dataset: &SlateDataset,
    weights: &WeightVector,
) -> Result<EstimateReport> {
    weights.check_slots(dataset.schema().num_slots())?;
    let report = apply_weights(dataset, weights.clone(), EstimatorKind::FixedWeights, Vec::new())?;
    Ok(report)
}

fn apply_weights(
    dataset: &SlateDataset,
    weights: WeightVector,
    estimator: EstimatorKind,
    flags: Vec<String>,
) -> Result<EstimateReport> {
    let (ratios, gr) = per_record_gr(dataset)?;
    let gamma = gamma_terms(&ratios, &gr, weights.values());
    Ok(EstimateReport {
        estimator,
        estimate: Some(numeric::mean(&gamma)),
        weights: Some(weights),
        plugin_variance: plugin_variance(&gamma),
        n: gamma.len(),
        flags,
    })
}

/// Result of fitting the shared control-variate weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaFit {
    pub beta: f64,
    /// True when the pooled denominator `sum_k E_n[(Y_k-1)^2]` was below
    /// [`DEGENERATE_DENOMINATOR`] and the weight fell back to zero.
    pub degenerate: bool,
}

/// Fits the optimal shared weight
/// `beta_hat = E_n[G R (G - 1)] / sum_k E_n[(Y_k - 1)^2]`.
pub fn fit_beta_star(dataset: &SlateDataset) -> Result<BetaFit> {
    let (ratios, gr) = per_record_gr(dataset)?;
    let n = gr.len() as f64;
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (r, &grv) in ratios.iter().zip(&gr) {
        num.add(grv * (r.g - 1.0));
        for &y in &r.y {
            let c = y - 1.0;
            den.add(c * c);
        }
    }
    let denominator = den.value() / n;
    if denominator < DEGENERATE_DENOMINATOR {
        return Ok(BetaFit { beta: 0.0, degenerate: true });
    }
    Ok(BetaFit { beta: (num.value() / n) / denominator, degenerate: false })
}

/// Result of fitting per-slot control-variate weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiWeightFit {
    pub weights: Vec<f64>,
    /// Slots whose denominator `E_n[(Y_k-1)^2]` was below
    /// [`DEGENERATE_DENOMINATOR`]; their weight is zero.
    pub degenerate_slots: Vec<usize>,
}

/// Fits the optimal per-slot weights
/// `w_hat_k = E_n[G R (Y_k - 1)] / E_n[(Y_k - 1)^2]`.
///
/// With a single slot this coincides with [`fit_beta_star`].
pub fn fit_w_star(dataset: &SlateDataset) -> Result<MultiWeightFit> {
    let (ratios, gr) = per_record_gr(dataset)?;
    let num_slots = dataset.schema().num_slots();
    let n = gr.len() as f64;
    let mut nums = vec![CompensatedSum::new(); num_slots];
    let mut dens = vec![CompensatedSum::new(); num_slots];
    for (r, &grv) in ratios.iter().zip(&gr) {
        for (k, &y) in r.y.iter().enumerate() {
            let c = y - 1.0;
            nums[k].add(grv * c);
            dens[k].add(c * c);
        }
    }
    let mut weights = Vec::with_capacity(num_slots);
    let mut degenerate_slots = Vec::new();
    for k in 0..num_slots {
        let den = dens[k].value() / n;
        if den < DEGENERATE_DENOMINATOR {
            weights.push(0.0);
            degenerate_slots.push(k);
        } else {
            weights.push((nums[k].value() / n) / den);
        }
    }
    Ok(MultiWeightFit { weights, degenerate_slots })
}

/// PICVs: fits the shared weight on the full dataset, then applies it.
///
/// The fitted weight makes the estimate slightly biased at finite `n`;
/// [`estimate_crossfit`] is the bias-free alternative.
pub fn estimate_picvs(dataset: &SlateDataset) -> Result<EstimateReport> {
    let fit = fit_beta_star(dataset)?;
    let weights = WeightVector::single(fit.beta, dataset.schema().num_slots())?;
    let flags = if fit.degenerate {
        vec![FLAG_DEGENERATE.to_string()]
    } else {
        Vec::new()
    };
    apply_weights(dataset, weights, EstimatorKind::Picvs, flags)
}

/// PICVm: fits per-slot weights on the full dataset, then applies them.
pub fn estimate_picvm(dataset: &SlateDataset) -> Result<EstimateReport> {
    let fit = fit_w_star(dataset)?;
    let flags = fit
        .degenerate_slots
        .iter()
        .map(|k| format!("{FLAG_DEGENERATE}_slot_{k}"))
        .collect();
    let weights = WeightVector::multi(fit.weights)?;
    apply_weights(dataset, weights, EstimatorKind::Picvm, flags)
}

/// The quadratic objective the weight fits minimize:
///
/// ```text
/// Q(w) = E_n[(GR)^2] - 2 sum_k w_k E_n[GR (Y_k-1)] + sum_k w_k^2 E_n[(Y_k-1)^2]
/// ```
///
/// This is the plug-in of the population variance expansion, using the
/// facts (exact in population under factored logging, not in sample) that
/// the per-slot control variates have mean zero and are uncorrelated
/// across slots. [`fit_beta_star`] minimizes `Q` over broadcast weights
/// and [`fit_w_star`] over all weight vectors, so `Q` is the quantity the
/// optimality of the fitted weights can be tested against on any dataset.
pub fn fitting_objective(dataset: &SlateDataset, weights: &WeightVector) -> Result<f64> {
    weights.check_slots(dataset.schema().num_slots())?;
    let (ratios, gr) = per_record_gr(dataset)?;
    let n = gr.len() as f64;
    let num_slots = weights.len();
    let mut gr2 = CompensatedSum::new();
    let mut cross = vec![CompensatedSum::new(); num_slots];
    let mut diag = vec![CompensatedSum::new(); num_slots];
    for (r, &grv) in ratios.iter().zip(&gr) {
        gr2.add(grv * grv);
        for (k, &y) in r.y.iter().enumerate() {
            let c = y - 1.0;
            cross[k].add(grv * c);
            diag[k].add(c * c);
        }
    }
    let mut q = gr2.value() / n;
    for (k, &w) in weights.values().iter().enumerate() {
        q += -2.0 * w * (cross[k].value() / n) + w * w * (diag[k].value() / n);
    }
    Ok(q)
}

/// Runs one estimator by kind. `FixedWeights` requires `weights`;
/// `CrossFit` uses `seed` for its fold shuffle; the others ignore both.
pub fn run_estimator(
    kind: EstimatorKind,
    dataset: &SlateDataset,
    weights: Option<&WeightVector>,
    seed: u64,
) -> Result<EstimateReport> {
    match kind {
        EstimatorKind::Pi => estimate_pi(dataset),
        EstimatorKind::Wpi => estimate_wpi(dataset),
        EstimatorKind::Picvs => estimate_picvs(dataset),
        EstimatorKind::Picvm => estimate_picvm(dataset),
        EstimatorKind::CrossFit => estimate_crossfit(dataset, seed),
        EstimatorKind::FixedWeights => {
            let w = weights.ok_or_else(|| {
                Error::Config("fixed-weight estimation needs a weight vector".into())
            })?;
            estimate_fixed_weights(dataset, w)
        }
    }
}
