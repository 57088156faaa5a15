//! Compensated accumulation.
//!
//! Every dataset-level mean in this crate is a Neumaier-compensated sum
//! taken in a fixed left-to-right order, so estimates are reproducible
//! bit-for-bit across runs and across thread schedules.

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of `values`, left to right.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated mean. Requires a non-empty slice.
pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    sum(values.iter().copied()) / values.len() as f64
}

/// Two-pass sample variance with the `n - 1` denominator.
/// Returns `None` when fewer than two values are given.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss = sum(values.iter().map(|v| {
        let d = v - m;
        d * d
    }));
    // Rounding can push a mathematically zero sum of squares slightly
    // negative once compensated; clamp.
    Some((ss / (values.len() - 1) as f64).max(0.0))
}

pub fn sample_std(values: &[f64]) -> Option<f64> {
    sample_variance(values).map(f64::sqrt)
}
