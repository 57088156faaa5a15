//! Logged slate-bandit data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::SlateSchema;

/// One logged observation together with the per-slot probabilities both
/// policies assign to the slate that was shown.
///
/// `logging_propensities[k]` is the logging policy's probability of the
/// taken action in slot `k`; `target_marginals[k]` is the target policy's
/// marginal probability of the same action. Estimators consume only these
/// numbers, so datasets can be evaluated without access to either policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    #[serde(default)]
    pub context_id: Option<String>,
    pub slate: Vec<usize>,
    #[serde(rename = "mu")]
    pub logging_propensities: Vec<f64>,
    #[serde(rename = "pi")]
    pub target_marginals: Vec<f64>,
    pub reward: f64,
}

impl LoggedRecord {
    /// Checks the record against a schema: slate bounds, propensity
    /// ranges, and a finite reward. `index` is used in error messages.
    pub fn validate(&self, schema: &SlateSchema, index: usize) -> Result<()> {
        let k = schema.num_slots();
        let fail = |message: String| Err(Error::Record { record: index, message });
        if self.slate.len() != k {
            return fail(format!("slate has {} slots, schema has {k}", self.slate.len()));
        }
        if self.logging_propensities.len() != k {
            return fail(format!(
                "mu has {} entries, schema has {k} slots",
                self.logging_propensities.len()
            ));
        }
        if self.target_marginals.len() != k {
            return fail(format!(
                "pi has {} entries, schema has {k} slots",
                self.target_marginals.len()
            ));
        }
        for (slot, (&a, &d)) in self
            .slate
            .iter()
            .zip(schema.cardinalities())
            .enumerate()
        {
            if a >= d {
                return fail(format!(
                    "slot {slot}: action {a} out of range (cardinality {d})"
                ));
            }
        }
        for (slot, &p) in self.logging_propensities.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return fail(format!(
                    "slot {slot}: logging propensity {p} outside (0, 1]"
                ));
            }
        }
        for (slot, &p) in self.target_marginals.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!(
                    "slot {slot}: target marginal {p} outside [0, 1]"
                ));
            }
        }
        if !self.reward.is_finite() {
            return fail(format!("reward {} is not finite", self.reward));
        }
        Ok(())
    }
}

/// A logged observation before propensity annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub context_id: Option<String>,
    pub slate: Vec<usize>,
    pub reward: f64,
}

impl From<&LoggedRecord> for RawRecord {
    fn from(r: &LoggedRecord) -> Self {
        RawRecord {
            context_id: r.context_id.clone(),
            slate: r.slate.clone(),
            reward: r.reward,
        }
    }
}

/// A validated, immutable collection of logged records under one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct SlateDataset {
    schema: SlateSchema,
    records: Vec<LoggedRecord>,
}

impl SlateDataset {
    /// Validates every record against the schema. At least one record is
    /// required.
    pub fn new(schema: SlateSchema, records: Vec<LoggedRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, r) in records.iter().enumerate() {
            r.validate(&schema, i)?;
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &SlateSchema {
        &self.schema
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Strips the propensity annotations, e.g. to re-annotate under
    /// different policies.
    pub fn to_raw(&self) -> Vec<RawRecord> {
        self.records.iter().map(RawRecord::from).collect()
    }
}
