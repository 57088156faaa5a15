//! Exact enumeration on small instances.
//!
//! Everything the estimators approximate from samples can be computed
//! exactly on desk-sized instances by summing over the slate space (and,
//! for finite-sample expectations, over every dataset realization). The
//! oracle is deliberately independent of the estimator code paths — it
//! recomputes all quantities from policy tables and the reward model —
//! so it can serve as ground truth in tests.
//!
//! Sums are compensated and taken in canonical (row-major) slate order,
//! so results are independent of any internal parallelism.

use serde::Serialize;

use crate::data::{LoggedRecord, SlateDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_crossfit_assigned, estimate_fixed_weights, estimate_picvm, estimate_picvs,
    estimate_pi, estimate_wpi, EstimatorKind, WeightVector,
};
use crate::numeric::CompensatedSum;
use crate::policy::FactoredPolicy;
use crate::simulator::RewardModel;

/// Cap on the slate-space size for population enumeration.
pub const ORACLE_SLATE_CAP: u64 = 1_000_000;

/// Cap on `|slate space|^n` for exact finite-sample expectations.
pub const ORACLE_DATASET_CAP: u64 = 1_000_000;

/// Exact population values of the two estimation targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    /// `theta = E[G R]`, the quantity every estimator here targets.
    pub theta: f64,
    /// `E_pi[R]`, the value of the target policy.
    pub policy_value: f64,
    /// Whether the reward model decomposes exactly into per-slot parts;
    /// when true, `theta` and `policy_value` coincide.
    pub additive: bool,
}

/// Exact population moments feeding the variance constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationMoments {
    pub theta: f64,
    /// `E[G^2 R]`.
    pub e_g2r: f64,
    /// Per slot, `E[G R (Y_k - 1)]`.
    pub e_gr_yk: Vec<f64>,
    /// Per slot, `E[(Y_k - 1)^2]`; equals `Var(Y_k)` because each slot
    /// ratio has mean one under full marginal coverage.
    pub var_yk: Vec<f64>,
    /// `E[(G - 1)^2]`, enumerated at slate level; matches
    /// `sum_k var_yk` under factored logging.
    pub e_gm1_sq: f64,
    /// `E[G R (G - 1)]`.
    pub e_gr_gm1: f64,
    /// `Var(G R)`.
    pub var_gr: f64,
}

/// Per-slot tables shared by the enumeration routines: logging mass,
/// target mass, and the ratio `y` where the logging mass is positive.
struct SlotTables<'a> {
    mu: &'a [Vec<f64>],
    pi: &'a [Vec<f64>],
    y: Vec<Vec<f64>>,
}

fn slot_tables<'a>(
    model: &RewardModel,
    logging: &'a FactoredPolicy,
    target: &'a FactoredPolicy,
) -> Result<SlotTables<'a>> {
    if logging.schema() != model.schema() || target.schema() != model.schema() {
        return Err(Error::Config("model and policies disagree on the schema".into()));
    }
    if logging.is_contextual() || target.is_contextual() {
        return Err(Error::Config("enumeration uses non-contextual policies".into()));
    }
    let mu = logging.slot_distributions(None)?;
    let pi = target.slot_distributions(None)?;
    let mut y = Vec::with_capacity(mu.len());
    for (k, (mu_d, pi_d)) in mu.iter().zip(pi).enumerate() {
        let mut yk = Vec::with_capacity(mu_d.len());
        for (a, (&m, &p)) in mu_d.iter().zip(pi_d).enumerate() {
            if p > 0.0 && m <= 0.0 {
                return Err(Error::Policy(format!(
                    "slot {k}: target puts mass {p} on action {a}, logging puts none"
                )));
            }
            // Unreachable under mu when m = 0; the placeholder is never
            // multiplied by positive probability.
            yk.push(if m > 0.0 { p / m } else { 0.0 });
        }
        y.push(yk);
    }
    Ok(SlotTables { mu, pi, y })
}

/// Walks every slate with positive logging probability, passing
/// `(index, slate, mu_prob, g, y_values)` to the visitor.
fn for_each_slate(
    model: &RewardModel,
    tables: &SlotTables<'_>,
    mut visit: impl FnMut(usize, &[usize], f64, f64, &[f64]),
) -> Result<()> {
    model
        .schema()
        .enumeration_size(ORACLE_SLATE_CAP, "oracle enumeration")?;
    let num_slots = model.schema().num_slots();
    let mut y = vec![0.0; num_slots];
    for (index, slate) in model.schema().slates().enumerate() {
        let mut prob = 1.0;
        for (k, &a) in slate.iter().enumerate() {
            prob *= tables.mu[k][a];
        }
        if prob <= 0.0 {
            continue;
        }
        let mut g = 1.0;
        for (k, &a) in slate.iter().enumerate() {
            y[k] = tables.y[k][a];
            g += y[k] - 1.0;
        }
        visit(index, &slate, prob, g, &y);
    }
    Ok(())
}

/// Enumerates `theta = E[G R]` and the policy value `E_pi[R]` exactly,
/// using mean rewards (a Bernoulli rate is its mean).
pub fn enumerate_ground_truth(
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
) -> Result<GroundTruth> {
    let tables = slot_tables(model, logging, target)?;
    let mut theta = CompensatedSum::new();
    for_each_slate(model, &tables, |index, _, prob, g, _| {
        theta.add(prob * g * model.mean_by_index(index));
    })?;
    // E_pi[R] sums target probability mass instead.
    let mut policy_value = CompensatedSum::new();
    for (index, slate) in model.schema().slates().enumerate() {
        let mut prob = 1.0;
        for (k, &a) in slate.iter().enumerate() {
            prob *= tables.pi[k][a];
        }
        if prob > 0.0 {
            policy_value.add(prob * model.mean_by_index(index));
        }
    }
    Ok(GroundTruth {
        theta: theta.value(),
        policy_value: policy_value.value(),
        additive: model.is_exactly_additive(),
    })
}

/// Enumerates every population moment used by the variance constants.
pub fn enumerate_moments(
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
) -> Result<PopulationMoments> {
    let tables = slot_tables(model, logging, target)?;
    let num_slots = model.schema().num_slots();

    // Per-slot marginals need only the slot distributions.
    let mut var_yk = Vec::with_capacity(num_slots);
    for k in 0..num_slots {
        let mut acc = CompensatedSum::new();
        for (&m, &yv) in tables.mu[k].iter().zip(&tables.y[k]) {
            if m > 0.0 {
                let c = yv - 1.0;
                acc.add(m * c * c);
            }
        }
        var_yk.push(acc.value());
    }

    let mut theta = CompensatedSum::new();
    let mut e_g2r = CompensatedSum::new();
    let mut e_gm1_sq = CompensatedSum::new();
    let mut e_gr_gm1 = CompensatedSum::new();
    let mut e_g2r2 = CompensatedSum::new();
    let mut e_gr_yk = vec![CompensatedSum::new(); num_slots];
    for_each_slate(model, &tables, |index, _, prob, g, y| {
        let mean = model.mean_by_index(index);
        let second = model.second_moment_by_index(index);
        let gr = g * mean;
        theta.add(prob * gr);
        e_g2r.add(prob * g * g * mean);
        e_gm1_sq.add(prob * (g - 1.0) * (g - 1.0));
        e_gr_gm1.add(prob * gr * (g - 1.0));
        e_g2r2.add(prob * g * g * second);
        for (k, &yv) in y.iter().enumerate() {
            e_gr_yk[k].add(prob * gr * (yv - 1.0));
        }
    })?;

    let theta = theta.value();
    Ok(PopulationMoments {
        theta,
        e_g2r: e_g2r.value(),
        e_gr_yk: e_gr_yk.iter().map(CompensatedSum::value).collect(),
        var_yk,
        e_gm1_sq: e_gm1_sq.value(),
        e_gr_gm1: e_gr_gm1.value(),
        var_gr: e_g2r2.value() - theta * theta,
    })
}

/// The full control-variate second-moment matrix
/// `M[k][k'] = E[(Y_k - 1)(Y_k' - 1)]`, enumerated at slate level.
/// Off-diagonal entries vanish under factored logging; the matrix lets
/// tests cross-check the per-slot optimal weights against a general
/// matrix solve.
pub fn enumerate_control_covariance(
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
) -> Result<Vec<Vec<f64>>> {
    let tables = slot_tables(model, logging, target)?;
    let num_slots = model.schema().num_slots();
    let mut acc = vec![vec![CompensatedSum::new(); num_slots]; num_slots];
    for_each_slate(model, &tables, |_, _, prob, _, y| {
        for k in 0..num_slots {
            for k2 in 0..num_slots {
                acc[k][k2].add(prob * (y[k] - 1.0) * (y[k2] - 1.0));
            }
        }
    })?;
    Ok(acc
        .iter()
        .map(|row| row.iter().map(CompensatedSum::value).collect())
        .collect())
}

/// Exact population variance of the control-variate term
/// `Gamma_w = G R - sum_k w_k (Y_k - 1)`, enumerated directly. This is
/// the quantity whose minimum over weights defines the optimal variance
/// constants, so it provides an independent check of their closed forms.
pub fn gamma_variance(
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
    weights: &WeightVector,
) -> Result<f64> {
    if weights.len() != model.schema().num_slots() {
        return Err(Error::WeightDimension {
            expected: model.schema().num_slots(),
            got: weights.len(),
        });
    }
    let tables = slot_tables(model, logging, target)?;
    let mut e1 = CompensatedSum::new();
    let mut e2 = CompensatedSum::new();
    let w = weights.values();
    for_each_slate(model, &tables, |index, _, prob, g, y| {
        let mean = model.mean_by_index(index);
        let second = model.second_moment_by_index(index);
        let mut c = 0.0;
        for (k, &yv) in y.iter().enumerate() {
            c += w[k] * (yv - 1.0);
        }
        // E[Gamma | a] and E[Gamma^2 | a], with reward noise through the
        // conditional second moment.
        e1.add(prob * (g * mean - c));
        e2.add(prob * (g * g * second - 2.0 * g * c * mean + c * c));
    })?;
    let m = e1.value();
    Ok(e2.value() - m * m)
}

/// `E_mu[Y_k | x]` per slot: one under full marginal coverage, which is
/// what makes `Y_k - 1` a valid control variate.
pub fn expected_slot_ratios(
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
    context: Option<&str>,
) -> Result<Vec<f64>> {
    if logging.schema() != target.schema() {
        return Err(Error::Policy("policies disagree on the schema".into()));
    }
    let mu = logging.slot_distributions(context)?;
    let pi = target.slot_distributions(context)?;
    let mut out = Vec::with_capacity(mu.len());
    for (k, (mu_d, pi_d)) in mu.iter().zip(pi).enumerate() {
        let mut acc = CompensatedSum::new();
        for (a, (&m, &p)) in mu_d.iter().zip(pi_d).enumerate() {
            if p > 0.0 && m <= 0.0 {
                return Err(Error::Policy(format!(
                    "slot {k}: target puts mass {p} on action {a}, logging puts none"
                )));
            }
            if m > 0.0 {
                acc.add(m * (p / m));
            }
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// Exact expectation of an estimator over every dataset realization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactExpectation {
    /// The expectation; when some realizations are undefined and the
    /// caller allowed that, the expectation conditions on the defined
    /// ones.
    pub value: f64,
    /// Total probability of dataset realizations on which the estimator
    /// is undefined.
    pub undefined_mass: f64,
}

/// One enumerable outcome of a single logged record.
struct Outcome {
    prob: f64,
    record: LoggedRecord,
}

fn outcomes(
    model: &RewardModel,
    tables: &SlotTables<'_>,
) -> Result<Vec<Outcome>> {
    let mut out = Vec::new();
    let num_slots = model.schema().num_slots();
    for_each_slate(model, tables, |index, slate, prob, _, _| {
        let mu: Vec<f64> = (0..num_slots).map(|k| tables.mu[k][slate[k]]).collect();
        let pi: Vec<f64> = (0..num_slots).map(|k| tables.pi[k][slate[k]]).collect();
        let mut push = |p: f64, reward: f64| {
            if p > 0.0 {
                out.push(Outcome {
                    prob: p,
                    record: LoggedRecord {
                        context_id: None,
                        slate: slate.to_vec(),
                        logging_propensities: mu.clone(),
                        target_marginals: pi.clone(),
                        reward,
                    },
                });
            }
        };
        match model.kind() {
            crate::simulator::RewardKind::DeterministicMeans => {
                push(prob, model.mean_by_index(index));
            }
            crate::simulator::RewardKind::BernoulliRates => {
                let rate = model.mean_by_index(index);
                push(prob * rate, 1.0);
                push(prob * (1.0 - rate), 0.0);
            }
        }
    })?;
    Ok(out)
}

/// All distinct assignments of `n` records to three folds with the fixed
/// near-even size profile, in lexicographic order.
fn all_fold_assignments(n: usize) -> Vec<Vec<usize>> {
    let q = n / 3;
    let r = n % 3;
    let sizes = [q + usize::from(r >= 1), q + usize::from(r >= 2), q];
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(remaining: &mut [usize; 3], current: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for fold in 0..3 {
            if remaining[fold] > 0 {
                remaining[fold] -= 1;
                current.push(fold);
                rec(remaining, current, n, out);
                current.pop();
                remaining[fold] += 1;
            }
        }
    }
    let mut remaining = sizes;
    rec(&mut remaining, &mut current, n, &mut out);
    out
}

/// Enumerates all `|outcomes|^n` dataset realizations with their exact
/// probabilities and returns the exact expectation of the estimator.
///
/// The dataset count is capped at [`ORACLE_DATASET_CAP`] slates to the
/// power `n`. Bernoulli rewards are enumerated jointly with slates, so
/// expectations are exact for stochastic rewards too. The cross-fit
/// estimator is additionally averaged over every fold assignment with
/// the standard size profile, uniformly weighted, which removes its only
/// other source of randomness.
///
/// Realizations on which the estimator is undefined (possible for wPI)
/// make the expectation an error unless `allow_undefined` is set, in
/// which case they are excluded and the expectation conditions on the
/// rest; the excluded probability mass is reported either way.
pub fn exact_estimator_expectation(
    kind: EstimatorKind,
    weights: Option<&WeightVector>,
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
    n: usize,
    allow_undefined: bool,
) -> Result<ExactExpectation> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let slates = model
        .schema()
        .enumeration_size(ORACLE_SLATE_CAP, "oracle enumeration")?;
    let mut datasets = 1u64;
    for _ in 0..n {
        datasets = datasets.checked_mul(slates).ok_or(Error::CapExceeded {
            context: "exact expectation",
            size: u64::MAX,
            cap: ORACLE_DATASET_CAP,
        })?;
    }
    if datasets > ORACLE_DATASET_CAP {
        return Err(Error::CapExceeded {
            context: "exact expectation",
            size: datasets,
            cap: ORACLE_DATASET_CAP,
        });
    }
    if kind == EstimatorKind::FixedWeights && weights.is_none() {
        return Err(Error::Config("fixed-weight estimation needs a weight vector".into()));
    }
    if kind == EstimatorKind::CrossFit && n < 3 {
        return Err(Error::NotEnoughRecords { what: "cross-fitting", required: 3, actual: n });
    }

    let tables = slot_tables(model, logging, target)?;
    let outs = outcomes(model, &tables)?;
    let assignments = if kind == EstimatorKind::CrossFit {
        all_fold_assignments(n)
    } else {
        Vec::new()
    };

    let mut value = CompensatedSum::new();
    let mut defined_mass = CompensatedSum::new();
    let mut undefined_mass = CompensatedSum::new();

    // Odometer over outcome indices: every ordered dataset realization.
    let mut idx = vec![0usize; n];
    loop {
        let mut prob = 1.0;
        for &i in &idx {
            prob *= outs[i].prob;
        }
        let records: Vec<LoggedRecord> = idx.iter().map(|&i| outs[i].record.clone()).collect();
        let dataset = SlateDataset::new(model.schema().clone(), records)?;

        let estimate = match kind {
            EstimatorKind::Pi => estimate_pi(&dataset)?.estimate,
            EstimatorKind::Wpi => estimate_wpi(&dataset)?.estimate,
            EstimatorKind::Picvs => estimate_picvs(&dataset)?.estimate,
            EstimatorKind::Picvm => estimate_picvm(&dataset)?.estimate,
            EstimatorKind::FixedWeights => {
                estimate_fixed_weights(&dataset, weights.expect("checked above"))?.estimate
            }
            EstimatorKind::CrossFit => {
                let mut acc = CompensatedSum::new();
                for assignment in &assignments {
                    let report = estimate_crossfit_assigned(&dataset, assignment)?;
                    acc.add(report.estimate.expect("cross-fit estimates are defined"));
                }
                Some(acc.value() / assignments.len() as f64)
            }
        };
        match estimate {
            Some(v) => {
                value.add(prob * v);
                defined_mass.add(prob);
            }
            None => undefined_mass.add(prob),
        }

        // Advance the odometer.
        let mut done = true;
        for slot in (0..n).rev() {
            idx[slot] += 1;
            if idx[slot] < outs.len() {
                done = false;
                break;
            }
            idx[slot] = 0;
        }
        if done {
            break;
        }
    }

    let undefined = undefined_mass.value();
    if undefined > 0.0 && !allow_undefined {
        return Err(Error::UndefinedExpectation { mass: undefined });
    }
    // Normalizing by the accumulated defined mass both implements the
    // exclusion semantics and absorbs float drift in the probability
    // products.
    Ok(ExactExpectation {
        value: value.value() / defined_mass.value(),
        undefined_mass: undefined,
    })
}
