//! Trade series: the tick value model, validation, synthesis, and CSV I/O.
//!
//! A tick is one aggregated trade of one company at one integer step: price p,
//! volume U, and value C = p * U. Downstream computations require a dense grid,
//! meaning every company has exactly one tick at every step 0..=max_step.
//! `TickSeries` itself may hold flawed data so that [`validate_series`] can
//! report what is wrong; computations run on [`DenseSeries`], which can only be
//! built from a series that validates cleanly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

mod csv_io;
mod synth;

pub use csv_io::{
    parse_risk_csv, parse_tick_csv, read_risk_csv, read_tick_csv, render_tick_csv, write_risk_csv,
    write_tick_csv,
};
pub use csv_io::write_atomic;
pub use synth::{generate_synthetic, PriceModel, SynthSpec, VolumeModel};

/// Relative tolerance for the stored value against price * volume.
pub const VALUE_CONSISTENCY_TOL: f64 = 1e-9;

/// One trade record on the step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub step: u64,
    pub company: String,
    /// Trade price p > 0.
    pub price: f64,
    /// Trade volume U > 0 (zero only for forward-fill markers).
    pub volume: f64,
    /// Trade value C; consistent records carry exactly price * volume.
    pub value: f64,
}

impl TickRecord {
    /// Builds a consistent record; the value is derived, never stored twice.
    #[must_use]
    pub fn new(step: u64, company: impl Into<String>, price: f64, volume: f64) -> Self {
        Self {
            step,
            company: company.into(),
            price,
            volume,
            value: price * volume,
        }
    }
}

/// A bag of tick records, sorted by (company, step) on construction.
///
/// The series may be inconsistent (gaps, duplicates, bad numbers); it is the
/// unit that validation speaks about.
#[derive(Debug, Clone, Default)]
pub struct TickSeries {
    ticks: Vec<TickRecord>,
}

impl TickSeries {
    #[must_use]
    pub fn from_records(mut ticks: Vec<TickRecord>) -> Self {
        ticks.sort_by(|a, b| (a.company.as_str(), a.step).cmp(&(b.company.as_str(), b.step)));
        Self { ticks }
    }

    #[must_use]
    pub fn ticks(&self) -> &[TickRecord] {
        &self.ticks
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Largest step present anywhere in the series.
    #[must_use]
    pub fn max_step(&self) -> Option<u64> {
        self.ticks.iter().map(|t| t.step).max()
    }

    /// Company identifiers in sorted order, deduplicated.
    #[must_use]
    pub fn companies(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.ticks {
            if out.last() != Some(&t.company.as_str()) {
                out.push(&t.company);
            }
        }
        out
    }

    /// Fills per-company step gaps with zero-volume markers carrying the last
    /// seen price forward. Repair mode, off by default everywhere; the result
    /// still needs zero-volume-aware validation to be accepted.
    #[must_use]
    pub fn forward_fill(&self) -> TickSeries {
        let Some(max_step) = self.max_step() else {
            return TickSeries::default();
        };
        let mut out: Vec<TickRecord> = Vec::with_capacity(self.ticks.len());
        let mut i = 0;
        while i < self.ticks.len() {
            let company = &self.ticks[i].company;
            let mut next_step = 0u64;
            let mut last_price = self.ticks[i].price;
            while i < self.ticks.len() && &self.ticks[i].company == company {
                while next_step < self.ticks[i].step {
                    out.push(TickRecord {
                        step: next_step,
                        company: company.clone(),
                        price: last_price,
                        volume: 0.0,
                        value: 0.0,
                    });
                    next_step += 1;
                }
                out.push(self.ticks[i].clone());
                last_price = self.ticks[i].price;
                next_step = self.ticks[i].step + 1;
                i += 1;
            }
            while next_step <= max_step {
                out.push(TickRecord {
                    step: next_step,
                    company: company.clone(),
                    price: last_price,
                    volume: 0.0,
                    value: 0.0,
                });
                next_step += 1;
            }
        }
        TickSeries::from_records(out)
    }
}

/// Per-order risk coordinates of one company: `coords[m-1][j-1]` is the
/// coordinate of order m on risk axis j, inside the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskVector {
    pub company: String,
    pub coords: Vec<Vec<f64>>,
}

impl RiskVector {
    #[must_use]
    pub fn orders(&self) -> usize {
        self.coords.len()
    }

    #[must_use]
    pub fn axes(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    /// All coordinates inside [0, 1] and every order carries the same axis count.
    #[must_use]
    pub fn is_well_formed(&self) -> bool {
        let axes = self.axes();
        !self.coords.is_empty()
            && axes > 0
            && self.coords.iter().all(|row| {
                row.len() == axes && row.iter().all(|&x| x.is_finite() && (0.0..=1.0).contains(&x))
            })
    }
}

/// What [`validate_series`] found wrong with one record or one company.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { company: String, step: u64, field: &'static str },
    NonPositivePrice { company: String, step: u64, price: f64 },
    NonPositiveVolume { company: String, step: u64, volume: f64 },
    ValueMismatch { company: String, step: u64, value: f64, expected: f64 },
    DuplicateStep { company: String, step: u64 },
    MissingStep { company: String, step: u64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonFinite { company, step, field } => {
                write!(f, "{company}@{step}: {field} is not finite")
            }
            Violation::NonPositivePrice { company, step, price } => {
                write!(f, "{company}@{step}: price {price} must be positive")
            }
            Violation::NonPositiveVolume { company, step, volume } => {
                write!(f, "{company}@{step}: volume {volume} must be positive")
            }
            Violation::ValueMismatch { company, step, value, expected } => {
                write!(f, "{company}@{step}: value {value} != price*volume {expected}")
            }
            Violation::DuplicateStep { company, step } => {
                write!(f, "{company}@{step}: duplicate tick")
            }
            Violation::MissingStep { company, step } => {
                write!(f, "{company}@{step}: missing tick (gap)")
            }
        }
    }
}

/// Outcome of series validation; empty means accepted.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    #[must_use]
    pub fn is_accepted(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_accepted() {
            Ok(())
        } else {
            Err(Error::SeriesRejected {
                violations: self.violations.len(),
                first: self.violations[0].to_string(),
            })
        }
    }
}

/// Validation switches. The default is strict; `allow_zero_volume` accepts the
/// markers produced by [`TickSeries::forward_fill`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationOptions {
    pub allow_zero_volume: bool,
}

/// Checks positivity, value consistency, duplicates, and density of the step
/// grid (every company must cover 0..=max_step of the whole series).
#[must_use]
pub fn validate_series(series: &TickSeries) -> ValidationReport {
    validate_series_with(series, ValidationOptions::default())
}

#[must_use]
pub fn validate_series_with(series: &TickSeries, opts: ValidationOptions) -> ValidationReport {
    let mut report = ValidationReport::default();
    let Some(max_step) = series.max_step() else {
        return report;
    };
    let ticks = series.ticks();
    let mut i = 0;
    while i < ticks.len() {
        let company = &ticks[i].company;
        let mut expected_step = 0u64;
        while i < ticks.len() && &ticks[i].company == company {
            let t = &ticks[i];
            let zero_volume_marker = opts.allow_zero_volume && t.volume == 0.0 && t.value == 0.0;
            if !t.price.is_finite() {
                report.violations.push(Violation::NonFinite {
                    company: company.clone(),
                    step: t.step,
                    field: "price",
                });
            } else if t.price <= 0.0 {
                report.violations.push(Violation::NonPositivePrice {
                    company: company.clone(),
                    step: t.step,
                    price: t.price,
                });
            }
            if !t.volume.is_finite() {
                report.violations.push(Violation::NonFinite {
                    company: company.clone(),
                    step: t.step,
                    field: "volume",
                });
            } else if t.volume <= 0.0 && !zero_volume_marker {
                report.violations.push(Violation::NonPositiveVolume {
                    company: company.clone(),
                    step: t.step,
                    volume: t.volume,
                });
            }
            if !t.value.is_finite() {
                report.violations.push(Violation::NonFinite {
                    company: company.clone(),
                    step: t.step,
                    field: "value",
                });
            } else if t.price.is_finite() && t.volume.is_finite() {
                let expected = t.price * t.volume;
                let scale = expected.abs().max(t.value.abs()).max(f64::MIN_POSITIVE);
                if (t.value - expected).abs() / scale > VALUE_CONSISTENCY_TOL {
                    report.violations.push(Violation::ValueMismatch {
                        company: company.clone(),
                        step: t.step,
                        value: t.value,
                        expected,
                    });
                }
            }
            if t.step < expected_step {
                report.violations.push(Violation::DuplicateStep {
                    company: company.clone(),
                    step: t.step,
                });
            } else {
                for missing in expected_step..t.step {
                    report.violations.push(Violation::MissingStep {
                        company: company.clone(),
                        step: missing,
                    });
                }
            }
            expected_step = expected_step.max(t.step + 1);
            i += 1;
        }
        for missing in expected_step..=max_step {
            report.violations.push(Violation::MissingStep {
                company: company.clone(),
                step: missing,
            });
        }
    }
    report
}

/// One company's dense track: index = step.
#[derive(Debug, Clone)]
pub struct DenseTrack {
    pub company: String,
    pub prices: Vec<f64>,
    pub volumes: Vec<f64>,
    pub values: Vec<f64>,
}

impl DenseTrack {
    #[must_use]
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// A validated series in computation form: per-company dense columns over the
/// shared step grid 0..len.
#[derive(Debug, Clone)]
pub struct DenseSeries {
    tracks: BTreeMap<String, DenseTrack>,
    len: u64,
}

impl DenseSeries {
    /// Validates and converts. The only accepted shape is the dense grid.
    pub fn from_series(series: &TickSeries) -> Result<Self> {
        Self::from_series_with(series, ValidationOptions::default())
    }

    pub fn from_series_with(series: &TickSeries, opts: ValidationOptions) -> Result<Self> {
        validate_series_with(series, opts).into_result()?;
        let len = series.max_step().map_or(0, |m| m + 1);
        let mut tracks = BTreeMap::new();
        let ticks = series.ticks();
        let mut i = 0;
        while i < ticks.len() {
            let company = ticks[i].company.clone();
            let mut track = DenseTrack {
                company: company.clone(),
                prices: Vec::with_capacity(len as usize),
                volumes: Vec::with_capacity(len as usize),
                values: Vec::with_capacity(len as usize),
            };
            while i < ticks.len() && ticks[i].company == company {
                track.prices.push(ticks[i].price);
                track.volumes.push(ticks[i].volume);
                track.values.push(ticks[i].value);
                i += 1;
            }
            tracks.insert(company, track);
        }
        Ok(Self { tracks, len })
    }

    /// Number of steps on the grid.
    #[must_use]
    pub fn len(&self) -> u64 {
        self.len
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn companies(&self) -> impl Iterator<Item = &str> {
        self.tracks.keys().map(String::as_str)
    }

    #[must_use]
    pub fn company_count(&self) -> usize {
        self.tracks.len()
    }

    #[must_use]
    pub fn track(&self, company: &str) -> Option<&DenseTrack> {
        self.tracks.get(company)
    }

    pub fn tracks(&self) -> impl Iterator<Item = &DenseTrack> {
        self.tracks.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_tick_series() -> TickSeries {
        TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(1, "A", 3.0, 2.0),
            TickRecord::new(2, "A", 4.0, 1.0),
        ])
    }

    #[test]
    fn value_is_price_times_volume() {
        let t = TickRecord::new(5, "A", 2.5, 4.0);
        assert_eq!(t.value, 10.0);
    }

    #[test]
    fn clean_series_is_accepted() {
        let report = validate_series(&three_tick_series());
        assert!(report.is_accepted(), "{:?}", report.violations);
    }

    #[test]
    fn inconsistent_value_is_flagged() {
        let mut bad = TickRecord::new(0, "A", 2.0, 1.0);
        bad.value = 5.0;
        let series = TickSeries::from_records(vec![bad]);
        let report = validate_series(&series);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::ValueMismatch { .. }));
    }

    #[test]
    fn gap_and_duplicate_are_flagged() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(2, "A", 3.0, 1.0),
            TickRecord::new(2, "A", 3.0, 1.0),
        ]);
        let report = validate_series(&series);
        let missing = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::MissingStep { step: 1, .. }))
            .count();
        let dup = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::DuplicateStep { step: 2, .. }))
            .count();
        assert_eq!(missing, 1);
        assert_eq!(dup, 1);
    }

    #[test]
    fn short_company_is_flagged_against_global_grid() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(1, "A", 2.0, 1.0),
            TickRecord::new(0, "B", 3.0, 1.0),
        ]);
        let report = validate_series(&series);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::MissingStep { company, step: 1 } if company == "B")));
    }

    #[test]
    fn nonpositive_price_and_volume_are_flagged() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", -2.0, 1.0),
            TickRecord::new(1, "A", 2.0, 0.0),
        ]);
        let report = validate_series(&series);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonPositivePrice { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonPositiveVolume { .. })));
    }

    #[test]
    fn forward_fill_closes_gaps_with_zero_volume() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(2, "A", 3.0, 1.0),
        ]);
        assert!(!validate_series(&series).is_accepted());
        let filled = series.forward_fill();
        let strict = validate_series(&filled);
        assert!(!strict.is_accepted(), "zero-volume markers stay flagged by default");
        let relaxed =
            validate_series_with(&filled, ValidationOptions { allow_zero_volume: true });
        assert!(relaxed.is_accepted(), "{:?}", relaxed.violations);
        let marker = &filled.ticks()[1];
        assert_eq!(marker.step, 1);
        assert_eq!(marker.price, 2.0);
        assert_eq!(marker.volume, 0.0);
        assert_eq!(marker.value, 0.0);
    }

    #[test]
    fn dense_series_exposes_columns() {
        let dense = DenseSeries::from_series(&three_tick_series()).unwrap();
        assert_eq!(dense.len(), 3);
        let track = dense.track("A").unwrap();
        assert_eq!(track.values, vec![2.0, 6.0, 4.0]);
        assert_eq!(track.volumes, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn dense_series_rejects_gaps() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(2, "A", 3.0, 1.0),
        ]);
        assert!(DenseSeries::from_series(&series).is_err());
    }

    #[test]
    fn risk_vector_well_formedness() {
        let good = RiskVector {
            company: "A".into(),
            coords: vec![vec![0.2, 0.8], vec![0.5, 0.5]],
        };
        assert!(good.is_well_formed());
        let ragged = RiskVector {
            company: "A".into(),
            coords: vec![vec![0.2, 0.8], vec![0.5]],
        };
        assert!(!ragged.is_well_formed());
        let outside = RiskVector {
            company: "A".into(),
            coords: vec![vec![1.2]],
        };
        assert!(!outside.is_well_formed());
    }
}
