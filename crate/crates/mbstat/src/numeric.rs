//! Compensated summation and small numeric helpers.
//!
//! Every cross-tick and cross-company reduction in this crate goes through
//! [`KahanSum`] with a fixed left-to-right order, so results are reproducible
//! bit for bit and permutation differences stay near machine epsilon.

/// Kahan compensated accumulator.
///
/// Tracks a running compensation term so that adding many values of similar
/// magnitude loses almost no precision compared to a naive fold.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    #[must_use]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of a slice, left to right.
#[must_use]
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// |a - b| relative to the larger magnitude; 0 when both are 0.
///
/// This is the deviation measure used by every consistency check and
/// tolerance assertion in the crate.
#[must_use]
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest order m such that |max_abs|^m stays comfortably inside f64 range.
///
/// Used to reject moment requests before any power is taken; the guard rail
/// sits at 1e300 rather than f64::MAX so intermediate sums cannot overflow
/// either.
#[must_use]
pub fn max_safe_order(max_abs: f64) -> usize {
    if max_abs <= 1.0 {
        return usize::MAX;
    }
    let limit = 300.0 * std::f64::consts::LN_10;
    (limit / max_abs.ln()).floor() as usize
}
