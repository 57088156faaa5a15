//! Factored slate policies.
//!
//! A factored policy draws each slot independently: the probability of a
//! slate is the product of per-slot probabilities. Logging policies here
//! are always factored; target policies are represented by their per-slot
//! marginals, which is all the estimators need.

use std::collections::BTreeMap;

use rand::Rng;

use crate::data::{LoggedRecord, RawRecord, SlateDataset};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from};
use crate::schema::SlateSchema;

/// Tolerance for "each slot distribution sums to one".
const DISTRIBUTION_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
enum SlotTable {
    /// One distribution per slot, shared by every context.
    Global(Vec<Vec<f64>>),
    /// Per-context tables keyed by opaque context id.
    Contextual(BTreeMap<String, Vec<Vec<f64>>>),
}

/// A factored policy over slates: per slot `k`, a probability vector of
/// length `d_k`, either global or per context id.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredPolicy {
    schema: SlateSchema,
    table: SlotTable,
}

fn validate_slot_distributions(schema: &SlateSchema, dists: &[Vec<f64>]) -> Result<()> {
    if dists.len() != schema.num_slots() {
        return Err(Error::Policy(format!(
            "{} slot distributions for a {}-slot schema",
            dists.len(),
            schema.num_slots()
        )));
    }
    for (k, (dist, &d)) in dists.iter().zip(schema.cardinalities()).enumerate() {
        if dist.len() != d {
            return Err(Error::Policy(format!(
                "slot {k}: distribution has {} entries, cardinality is {d}",
                dist.len()
            )));
        }
        let mut total = 0.0;
        for &p in dist {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Policy(format!(
                    "slot {k}: probability {p} outside [0, 1]"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(Error::Policy(format!(
                "slot {k}: distribution sums to {total}, expected 1"
            )));
        }
    }
    Ok(())
}

impl FactoredPolicy {
    /// A non-contextual policy from explicit slot distributions.
    pub fn from_slot_distributions(schema: SlateSchema, dists: Vec<Vec<f64>>) -> Result<Self> {
        validate_slot_distributions(&schema, &dists)?;
        Ok(Self {
            schema,
            table: SlotTable::Global(dists),
        })
    }

    /// A tabular contextual policy: one set of slot distributions per
    /// context id.
    pub fn contextual(
        schema: SlateSchema,
        per_context: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if per_context.is_empty() {
            return Err(Error::Policy("contextual policy with no contexts".into()));
        }
        for dists in per_context.values() {
            validate_slot_distributions(&schema, dists)?;
        }
        Ok(Self {
            schema,
            table: SlotTable::Contextual(per_context),
        })
    }

    /// Uniform over every slot: `1/d_k` per action.
    pub fn uniform(schema: SlateSchema) -> Self {
        let dists = schema
            .cardinalities()
            .iter()
            .map(|&d| vec![1.0 / d as f64; d])
            .collect();
        Self {
            schema,
            table: SlotTable::Global(dists),
        }
    }

    /// Deterministic policy: one-hot on `slate[k]` in each slot.
    pub fn deterministic(schema: SlateSchema, slate: &[usize]) -> Result<Self> {
        schema.validate_slate(slate)?;
        let dists = slate
            .iter()
            .zip(schema.cardinalities())
            .map(|(&a, &d)| {
                let mut dist = vec![0.0; d];
                dist[a] = 1.0;
                dist
            })
            .collect();
        Ok(Self {
            schema,
            table: SlotTable::Global(dists),
        })
    }

    /// Random full-support policy: per slot, draw positive weights
    /// `floor + U(0,1)` and normalize. Useful for randomized testing and
    /// benchmark instances.
    pub fn sample_random(schema: SlateSchema, seed: u64, floor: f64) -> Self {
        assert!(floor > 0.0, "floor must be positive for full support");
        let mut rng = rng_from(mix_seed(seed, &[0x70_1c]));
        let dists = schema
            .cardinalities()
            .iter()
            .map(|&d| {
                let raw: Vec<f64> = (0..d).map(|_| floor + rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            })
            .collect();
        // Normalized positive weights always pass validation.
        Self {
            schema,
            table: SlotTable::Global(dists),
        }
    }

    pub fn schema(&self) -> &SlateSchema {
        &self.schema
    }

    pub fn is_contextual(&self) -> bool {
        matches!(self.table, SlotTable::Contextual(_))
    }

    /// The slot distributions for a context. Global policies accept any
    /// context (including none); contextual policies require a known id.
    pub fn slot_distributions(&self, context: Option<&str>) -> Result<&[Vec<f64>]> {
        match &self.table {
            SlotTable::Global(dists) => Ok(dists),
            SlotTable::Contextual(map) => {
                let id = context.ok_or_else(|| {
                    Error::Policy("contextual policy queried without a context id".into())
                })?;
                map.get(id)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::Policy(format!("unknown context id `{id}`")))
            }
        }
    }

    /// Probability of `action` in `slot` under `context`.
    pub fn slot_probability(
        &self,
        context: Option<&str>,
        slot: usize,
        action: usize,
    ) -> Result<f64> {
        let dists = self.slot_distributions(context)?;
        dists
            .get(slot)
            .and_then(|d| d.get(action))
            .copied()
            .ok_or_else(|| Error::Policy(format!("slot {slot} action {action} out of range")))
    }
}

/// Fills in logging propensities and target marginals for raw records by
/// looking both policies up at each record's slate.
///
/// Fails if the logging policy assigns zero probability to any taken
/// action (the record cannot be importance-weighted), reporting the
/// offending record index. Annotation is idempotent: re-annotating an
/// annotated dataset with the same policies reproduces it exactly.
pub fn annotate_records(
    records: &[RawRecord],
    logging: &FactoredPolicy,
    target: &FactoredPolicy,
) -> Result<SlateDataset> {
    if logging.schema() != target.schema() {
        return Err(Error::Policy(
            "logging and target policies disagree on the schema".into(),
        ));
    }
    let schema = logging.schema().clone();
    let mut out = Vec::with_capacity(records.len());
    for (i, raw) in records.iter().enumerate() {
        schema
            .validate_slate(&raw.slate)
            .map_err(|e| Error::Record { record: i, message: e.to_string() })?;
        let ctx = raw.context_id.as_deref();
        let mu_dists = logging.slot_distributions(ctx)?;
        let pi_dists = target.slot_distributions(ctx)?;
        let mut mu = Vec::with_capacity(raw.slate.len());
        let mut pi = Vec::with_capacity(raw.slate.len());
        for (slot, &a) in raw.slate.iter().enumerate() {
            let m = mu_dists[slot][a];
            if m <= 0.0 {
                return Err(Error::Coverage { record: i, slot });
            }
            mu.push(m);
            pi.push(pi_dists[slot][a]);
        }
        out.push(LoggedRecord {
            context_id: raw.context_id.clone(),
            slate: raw.slate.clone(),
            logging_propensities: mu,
            target_marginals: pi,
            reward: raw.reward,
        });
    }
    SlateDataset::new(schema, out)
}
