//! Synthetic slate-bandit instances.
//!
//! Reward models are dense tables over the slate space, optionally built
//! from per-slot additive parts. Two additive forms are supported:
//!
//! * `Sum` — the mean reward of a slate is the plain sum of its per-slot
//!   parts, `sum_k phi_k(a_k)`.
//! * `FirstSlotGeometric` — slot 1 dominates with geometrically decaying
//!   influence while the remaining slots contribute only marginally:
//!   `0.5^(a_1) * phi_1(a_1) + 0.01 * sum_{k>=2} phi_k(a_k)`.
//!
//! Bernoulli-rate models clamp the combined value into `[0, 1]` (and
//! record how many cells were clamped); deterministic-mean models keep
//! the exact sum so that additivity holds bit for bit, which the
//! enumeration oracle relies on.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{LoggedRecord, SlateDataset};
use crate::error::{Error, Result};
use crate::policy::FactoredPolicy;
use crate::rng::{mix_seed, rng_from, sample_index};
use crate::schema::{SlateSchema, SLATE_ENUMERATION_CAP};

/// Default seed for tensor sampling when a config omits it.
pub const DEFAULT_TENSOR_SEED: u64 = 1729;
/// Default seed for dataset generation when a config omits it.
pub const DEFAULT_DATA_SEED: u64 = 271_828;

/// How the table values are interpreted when drawing rewards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Values are Bernoulli success rates in `[0, 1]`; rewards are 0/1.
    #[default]
    BernoulliRates,
    /// Values are emitted directly as (noise-free) rewards.
    DeterministicMeans,
}

/// How additive parts combine into a slate-level value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditiveForm {
    #[serde(rename = "additive")]
    Sum,
    /// First slot weighted by `0.5^(action index)`, remaining slots by
    /// a flat factor of 0.01.
    #[default]
    #[serde(rename = "skewed")]
    FirstSlotGeometric,
}

impl AdditiveForm {
    /// Combines per-slot parts for one slate, before any clamping.
    fn combine(self, parts: &[Vec<f64>], slate: &[usize]) -> f64 {
        match self {
            AdditiveForm::Sum => slate
                .iter()
                .enumerate()
                .map(|(k, &a)| parts[k][a])
                .sum(),
            AdditiveForm::FirstSlotGeometric => {
                let mut v = 0.5f64.powi(slate[0] as i32) * parts[0][slate[0]];
                for (k, &a) in slate.iter().enumerate().skip(1) {
                    v += 0.01 * parts[k][a];
                }
                v
            }
        }
    }
}

/// The per-slot parts a table was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditiveParts {
    pub form: AdditiveForm,
    /// `parts[k][a]` is slot `k`'s contribution for action `a`.
    pub parts: Vec<Vec<f64>>,
}

/// Distribution for sampling additive parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartDistribution {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// A dense slate-level reward model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelWire", into = "ModelWire")]
pub struct RewardModel {
    schema: SlateSchema,
    kind: RewardKind,
    /// Value per slate, in row-major slate order.
    table: Vec<f64>,
    additive: Option<AdditiveParts>,
    /// Cells whose additive combination fell outside `[0, 1]` and were
    /// clamped (always zero without clamping).
    clamped_slates: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    schema: SlateSchema,
    kind: RewardKind,
    table: Vec<f64>,
    #[serde(default)]
    additive: Option<AdditiveParts>,
    #[serde(default)]
    clamped_slates: usize,
}

impl From<RewardModel> for ModelWire {
    fn from(m: RewardModel) -> Self {
        ModelWire {
            schema: m.schema,
            kind: m.kind,
            table: m.table,
            additive: m.additive,
            clamped_slates: m.clamped_slates,
        }
    }
}

impl TryFrom<ModelWire> for RewardModel {
    type Error = Error;

    fn try_from(w: ModelWire) -> Result<Self> {
        let model = RewardModel {
            schema: w.schema,
            kind: w.kind,
            table: w.table,
            additive: w.additive,
            clamped_slates: w.clamped_slates,
        };
        model.validate()?;
        Ok(model)
    }
}

impl RewardModel {
    /// A model from an explicit dense table in row-major slate order.
    pub fn from_table(schema: SlateSchema, table: Vec<f64>, kind: RewardKind) -> Result<Self> {
        let model = Self { schema, kind, table, additive: None, clamped_slates: 0 };
        model.validate()?;
        Ok(model)
    }

    /// Builds the table from explicit per-slot parts. Bernoulli models
    /// clamp each combined value into `[0, 1]`; deterministic models keep
    /// the exact combination.
    pub fn from_additive_parts(
        schema: SlateSchema,
        parts: Vec<Vec<f64>>,
        form: AdditiveForm,
        kind: RewardKind,
    ) -> Result<Self> {
        if parts.len() != schema.num_slots() {
            return Err(Error::Config(format!(
                "{} part vectors for a {}-slot schema",
                parts.len(),
                schema.num_slots()
            )));
        }
        for (k, (p, &d)) in parts.iter().zip(schema.cardinalities()).enumerate() {
            if p.len() != d {
                return Err(Error::Config(format!(
                    "slot {k}: {} part values, cardinality is {d}",
                    p.len()
                )));
            }
            if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
                return Err(Error::Config(format!("slot {k}: part value {bad} not finite")));
            }
        }
        let size = schema.enumeration_size(SLATE_ENUMERATION_CAP, "reward table")? as usize;
        let mut table = Vec::with_capacity(size);
        let mut clamped = 0usize;
        for slate in schema.slates() {
            let raw = form.combine(&parts, &slate);
            let value = match kind {
                RewardKind::BernoulliRates => {
                    let c = raw.clamp(0.0, 1.0);
                    if c != raw {
                        clamped += 1;
                    }
                    c
                }
                RewardKind::DeterministicMeans => raw,
            };
            table.push(value);
        }
        let model = Self {
            schema,
            kind,
            table,
            additive: Some(AdditiveParts { form, parts }),
            clamped_slates: clamped,
        };
        model.validate()?;
        Ok(model)
    }

    /// Samples the skewed benchmark tensor: parts drawn i.i.d.
    /// `N(0.2/K, 0.01)` and combined with
    /// [`AdditiveForm::FirstSlotGeometric`].
    pub fn sample_skewed(schema: SlateSchema, seed: u64, kind: RewardKind) -> Result<Self> {
        Self::sample_additive(
            schema.clone(),
            seed,
            PartDistribution::Gaussian {
                mean: 0.2 / schema.num_slots() as f64,
                sd: 0.1,
            },
            AdditiveForm::FirstSlotGeometric,
            kind,
        )
    }

    /// Samples per-slot parts from `dist` (slot-major order, one ChaCha8
    /// stream per model) and combines them with `form`.
    pub fn sample_additive(
        schema: SlateSchema,
        seed: u64,
        dist: PartDistribution,
        form: AdditiveForm,
        kind: RewardKind,
    ) -> Result<Self> {
        let mut rng = rng_from(mix_seed(seed, &[0x7e_15_02]));
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<f64> {
            Ok(match dist {
                PartDistribution::Gaussian { mean, sd } => {
                    let normal = Normal::new(mean, sd)
                        .map_err(|e| Error::Config(format!("bad part distribution: {e}")))?;
                    normal.sample(rng)
                }
                PartDistribution::Uniform { lo, hi } => {
                    if lo.is_nan() || hi.is_nan() || hi < lo {
                        return Err(Error::Config(format!(
                            "uniform part range [{lo}, {hi}] is empty"
                        )));
                    }
                    lo + (hi - lo) * rng.random::<f64>()
                }
            })
        };
        let mut parts = Vec::with_capacity(schema.num_slots());
        for &d in schema.cardinalities() {
            let mut p = Vec::with_capacity(d);
            for _ in 0..d {
                p.push(draw(&mut rng)?);
            }
            parts.push(p);
        }
        Self::from_additive_parts(schema, parts, form, kind)
    }

    /// A dense table of i.i.d. `U[0, 1)` values; handy for randomized
    /// oracle instances.
    pub fn sample_random_table(schema: SlateSchema, seed: u64, kind: RewardKind) -> Result<Self> {
        let size = schema.enumeration_size(SLATE_ENUMERATION_CAP, "reward table")? as usize;
        let mut rng = rng_from(mix_seed(seed, &[0x7_ab1e]));
        let table = (0..size).map(|_| rng.random::<f64>()).collect();
        Self::from_table(schema, table, kind)
    }

    fn validate(&self) -> Result<()> {
        let size = self
            .schema
            .enumeration_size(SLATE_ENUMERATION_CAP, "reward table")? as usize;
        if self.table.len() != size {
            return Err(Error::Config(format!(
                "table has {} entries, slate space has {size}",
                self.table.len()
            )));
        }
        for (i, &v) in self.table.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Config(format!("table entry {i} is {v}")));
            }
            if self.kind == RewardKind::BernoulliRates && !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "Bernoulli rate {v} at entry {i} outside [0, 1]"
                )));
            }
        }
        if let Some(additive) = &self.additive {
            if additive.parts.len() != self.schema.num_slots() {
                return Err(Error::Config("additive parts do not match the schema".into()));
            }
            for (i, slate) in self.schema.slates().enumerate() {
                let raw = additive.form.combine(&additive.parts, &slate);
                let expected = match self.kind {
                    RewardKind::BernoulliRates => raw.clamp(0.0, 1.0),
                    RewardKind::DeterministicMeans => raw,
                };
                if (expected - self.table[i]).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "table entry {i} = {} disagrees with its additive parts ({expected})",
                        self.table[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &SlateSchema {
        &self.schema
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn additive_parts(&self) -> Option<&AdditiveParts> {
        self.additive.as_ref()
    }

    /// Mean reward of the slate with row-major rank `index`.
    pub fn mean_by_index(&self, index: usize) -> f64 {
        self.table[index]
    }

    pub fn mean_reward(&self, slate: &[usize]) -> Result<f64> {
        Ok(self.table[self.schema.slate_to_index(slate)?])
    }

    /// `E[R^2 | A = a]`: the rate itself for Bernoulli rewards, the
    /// squared mean for deterministic rewards.
    pub fn second_moment_by_index(&self, index: usize) -> f64 {
        match self.kind {
            RewardKind::BernoulliRates => self.table[index],
            RewardKind::DeterministicMeans => self.table[index] * self.table[index],
        }
    }

    /// Fraction of table cells that were clamped when combining parts.
    pub fn clamped_fraction(&self) -> f64 {
        self.clamped_slates as f64 / self.table.len() as f64
    }

    /// True when the mean reward decomposes exactly into per-slot parts:
    /// the model was built additively and no cell was clamped.
    pub fn is_exactly_additive(&self) -> bool {
        self.additive.is_some() && self.clamped_slates == 0
    }
}

/// Draws `n` i.i.d. records: slates slot by slot from the factored
/// logging policy, then a reward (a Bernoulli draw for rate models, the
/// exact mean for deterministic models — the latter consumes no
/// randomness). Records are annotated with both policies' slot
/// probabilities. Deterministic for a fixed seed.
pub fn generate_logs(
    model: &RewardModel,
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
    n: usize,
    seed: u64,
) -> Result<SlateDataset> {
    if n == 0 {
        return Err(Error::Config("cannot generate an empty dataset (n = 0)".into()));
    }
    if logging.schema() != model.schema() || target.schema() != model.schema() {
        return Err(Error::Config(
            "model and policies disagree on the schema".into(),
        ));
    }
    if logging.is_contextual() || target.is_contextual() {
        return Err(Error::Config(
            "synthetic generation uses non-contextual policies".into(),
        ));
    }
    let mu_dists = logging.slot_distributions(None)?;
    let pi_dists = target.slot_distributions(None)?;
    // Coverage: the logging policy must reach every action the target
    // gives mass to.
    for (k, (mu_d, pi_d)) in mu_dists.iter().zip(pi_dists).enumerate() {
        for (a, (&m, &p)) in mu_d.iter().zip(pi_d).enumerate() {
            if p > 0.0 && m <= 0.0 {
                return Err(Error::Policy(format!(
                    "slot {k}: target puts mass {p} on action {a}, logging puts none"
                )));
            }
        }
    }

    let mut rng = rng_from(mix_seed(seed, &[0x10_95]));
    let num_slots = model.schema().num_slots();
    let mut records = Vec::with_capacity(n);
    let mut slate = vec![0usize; num_slots];
    for _ in 0..n {
        let mut mu = Vec::with_capacity(num_slots);
        let mut pi = Vec::with_capacity(num_slots);
        for k in 0..num_slots {
            let a = sample_index(rng.random::<f64>(), &mu_dists[k]);
            slate[k] = a;
            mu.push(mu_dists[k][a]);
            pi.push(pi_dists[k][a]);
        }
        let rate = model.mean_reward(&slate)?;
        let reward = match model.kind() {
            RewardKind::BernoulliRates => {
                if rng.random::<f64>() < rate {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::DeterministicMeans => rate,
        };
        records.push(LoggedRecord {
            context_id: None,
            slate: slate.clone(),
            logging_propensities: mu,
            target_marginals: pi,
            reward,
        });
    }
    SlateDataset::new(model.schema().clone(), records)
}

/// Configuration of a benchmark run: which instances to draw and how
/// many datasets of which sizes to evaluate on each.
///
/// Defaults: 20 tensors, 300 replications, sample sizes
/// `[100, 1000, 10000]`, skewed Bernoulli tensors, uniform logging, and a
/// deterministic target on the all-zeros slate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema: SlateSchema,
    #[serde(default = "default_num_tensors")]
    pub num_tensors: usize,
    #[serde(default = "default_reps")]
    pub reps_per_tensor: usize,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_tensor_seed")]
    pub tensor_seed: u64,
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Target slate for the deterministic target policy; all zeros when
    /// omitted.
    #[serde(default)]
    pub target_slate: Option<Vec<usize>>,
    /// Explicit logging slot distributions; uniform when omitted.
    #[serde(default)]
    pub logging: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub reward_kind: RewardKind,
    #[serde(default)]
    pub model: AdditiveForm,
}

fn default_num_tensors() -> usize {
    20
}
fn default_reps() -> usize {
    300
}
fn default_sample_sizes() -> Vec<usize> {
    vec![100, 1000, 10_000]
}
fn default_tensor_seed() -> u64 {
    DEFAULT_TENSOR_SEED
}
fn default_data_seed() -> u64 {
    DEFAULT_DATA_SEED
}

impl SimConfig {
    /// A config with all defaults for a schema.
    pub fn new(schema: SlateSchema) -> Self {
        Self {
            schema,
            num_tensors: default_num_tensors(),
            reps_per_tensor: default_reps(),
            sample_sizes: default_sample_sizes(),
            tensor_seed: default_tensor_seed(),
            data_seed: default_data_seed(),
            target_slate: None,
            logging: None,
            reward_kind: RewardKind::default(),
            model: AdditiveForm::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tensors == 0 || self.reps_per_tensor == 0 {
            return Err(Error::Config("tensor and replication counts must be positive".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if let Some(slate) = &self.target_slate {
            self.schema
                .validate_slate(slate)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.logging_policy()?;
        Ok(())
    }

    pub fn target_policy(&self) -> Result<FactoredPolicy> {
        let slate = match &self.target_slate {
            Some(s) => s.clone(),
            None => vec![0; self.schema.num_slots()],
        };
        FactoredPolicy::deterministic(self.schema.clone(), &slate)
    }

    pub fn logging_policy(&self) -> Result<FactoredPolicy> {
        match &self.logging {
            Some(dists) => {
                FactoredPolicy::from_slot_distributions(self.schema.clone(), dists.clone())
            }
            None => Ok(FactoredPolicy::uniform(self.schema.clone())),
        }
    }

    /// The reward tensor for benchmark cell `tensor`.
    pub fn sample_tensor(&self, tensor: usize) -> Result<RewardModel> {
        let seed = mix_seed(self.tensor_seed, &[tensor as u64]);
        match self.model {
            AdditiveForm::FirstSlotGeometric => {
                RewardModel::sample_skewed(self.schema.clone(), seed, self.reward_kind)
            }
            AdditiveForm::Sum => RewardModel::sample_additive(
                self.schema.clone(),
                seed,
                PartDistribution::Gaussian {
                    mean: 0.2 / self.schema.num_slots() as f64,
                    sd: 0.1,
                },
                AdditiveForm::Sum,
                self.reward_kind,
            ),
        }
    }

    /// The dataset seed for benchmark cell `(tensor, rep, n)`.
    pub fn cell_seed(&self, tensor: usize, rep: usize, n: usize) -> u64 {
        mix_seed(self.data_seed, &[tensor as u64, rep as u64, n as u64])
    }
}
