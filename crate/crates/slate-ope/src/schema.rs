//! Slate shapes and slate-space enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the slate-space size accepted by enumeration-based
/// operations (dense reward tables, slate iteration).
pub const SLATE_ENUMERATION_CAP: u64 = 1_000_000_000;

/// The shape of a slate: `K` slots, slot `k` offering actions
/// `0..cardinalities[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaWire", into = "SchemaWire")]
pub struct SlateSchema {
    cardinalities: Vec<usize>,
}

/// Wire form: `{"slots": K, "cardinalities": [d_1, ..., d_K]}`.
#[derive(Serialize, Deserialize)]
struct SchemaWire {
    slots: usize,
    cardinalities: Vec<usize>,
}

impl From<SlateSchema> for SchemaWire {
    fn from(s: SlateSchema) -> Self {
        SchemaWire {
            slots: s.cardinalities.len(),
            cardinalities: s.cardinalities,
        }
    }
}

impl TryFrom<SchemaWire> for SlateSchema {
    type Error = Error;

    fn try_from(w: SchemaWire) -> Result<Self> {
        if w.slots != w.cardinalities.len() {
            return Err(Error::Schema(format!(
                "`slots` is {} but {} cardinalities were given",
                w.slots,
                w.cardinalities.len()
            )));
        }
        SlateSchema::new(w.cardinalities)
    }
}

impl SlateSchema {
    pub fn new(cardinalities: Vec<usize>) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(Error::Schema("a slate needs at least one slot".into()));
        }
        if cardinalities.contains(&0) {
            return Err(Error::Schema(
                "every slot needs at least one action".into(),
            ));
        }
        Ok(Self { cardinalities })
    }

    pub fn num_slots(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Total number of slates, `None` on u64 overflow.
    pub fn num_slates(&self) -> Option<u64> {
        self.cardinalities
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
    }

    /// Slate count, checked against `cap` (and against overflow).
    pub fn enumeration_size(&self, cap: u64, context: &'static str) -> Result<u64> {
        let size = self.num_slates().ok_or(Error::CapExceeded {
            context,
            size: u64::MAX,
            cap,
        })?;
        if size > cap {
            return Err(Error::CapExceeded {
                context,
                size,
                cap,
            });
        }
        Ok(size)
    }

    pub fn validate_slate(&self, slate: &[usize]) -> Result<()> {
        if slate.len() != self.num_slots() {
            return Err(Error::Schema(format!(
                "slate has {} slots, schema has {}",
                slate.len(),
                self.num_slots()
            )));
        }
        for (k, (&a, &d)) in slate.iter().zip(&self.cardinalities).enumerate() {
            if a >= d {
                return Err(Error::Schema(format!(
                    "slot {k}: action index {a} out of range (cardinality {d})"
                )));
            }
        }
        Ok(())
    }

    /// Row-major rank of a slate (last slot varies fastest).
    pub fn slate_to_index(&self, slate: &[usize]) -> Result<usize> {
        self.validate_slate(slate)?;
        let mut idx = 0usize;
        for (&a, &d) in slate.iter().zip(&self.cardinalities) {
            idx = idx * d + a;
        }
        Ok(idx)
    }

    /// Inverse of [`slate_to_index`](Self::slate_to_index).
    pub fn index_to_slate(&self, mut index: usize) -> Vec<usize> {
        let mut slate = vec![0usize; self.num_slots()];
        for (k, &d) in self.cardinalities.iter().enumerate().rev() {
            slate[k] = index % d;
            index /= d;
        }
        slate
    }

    /// Iterates every slate in row-major order.
    pub fn slates(&self) -> SlateIter<'_> {
        SlateIter {
            schema: self,
            next: Some(vec![0; self.num_slots()]),
        }
    }
}

pub struct SlateIter<'a> {
    schema: &'a SlateSchema,
    next: Option<Vec<usize>>,
}

impl Iterator for SlateIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        // Odometer increment, last slot fastest.
        let mut succ = current.clone();
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.schema.cardinalities[k] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[k] = 0;
        }
        Some(current)
    }
}
