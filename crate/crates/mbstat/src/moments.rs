//! Windowed statistical moments of one company's trade series.
//!
//! Over a window of N ticks, the m-th moments of value and volume are plain
//! averages C(;m) = (1/N) sum C_i^m and U(;m) = (1/N) sum U_i^m. Everything
//! else is derived from them:
//!
//! * price moments        p(;m)  = C(;m) / U(;m), so p(;1) is the VWAP;
//! * frequency moments    pi(;m) = (1/N) sum p_i^m (every tick weighted equally);
//! * past value moments   S(;m)  = (1/N) sum (p(t-xi) U(t))^m;
//! * return moments       r(;m)  = C(;m) / S(;m);
//! * the duality          p(;m)  = r(;m) S(;m) / U(;m).
//!
//! The product inside S is formed before the power is taken; with xi = 0 the
//! terms are then bitwise the tick values, which makes r(;m) = 1 exact.
//!
//! All sums are compensated and run left to right in step order.

use crate::error::{Error, Result};
use crate::numeric::{max_safe_order, KahanSum};
use crate::trade_data::{DenseSeries, DenseTrack};

/// How window sums are protected against range overflow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MomentScaling {
    /// Raw powers; orders whose powers would leave f64 range are rejected.
    #[default]
    Raw,
    /// Divide the window by its mean, take moments, rescale by mean^m.
    /// Equal to `Raw` within 1e-12 relative whenever `Raw` succeeds.
    WindowMean,
}

#[derive(Debug, Clone, Copy)]
pub struct WindowConfig {
    /// Ticks per window, N >= 1.
    pub window_len: usize,
    /// Highest moment order computed, >= 1.
    pub n_max: usize,
    /// Return shift xi in steps; 0 makes every return moment exactly 1.
    pub xi_steps: u64,
    /// `None` tiles the series in blocks of N; `Some(s)` with s < N slides
    /// the window by s steps instead (moving average).
    pub stride: Option<usize>,
    pub scaling: MomentScaling,
}

impl WindowConfig {
    #[must_use]
    pub fn block(window_len: usize, n_max: usize, xi_steps: u64) -> Self {
        Self {
            window_len,
            n_max,
            xi_steps,
            stride: None,
            scaling: MomentScaling::Raw,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::InvalidSpec("window_len must be >= 1".into()));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidSpec("n_max must be >= 1".into()));
        }
        if let Some(s) = self.stride {
            if s == 0 || s > self.window_len {
                return Err(Error::InvalidSpec(format!(
                    "stride must be in 1..={}, got {s}",
                    self.window_len
                )));
            }
        }
        Ok(())
    }

    fn effective_stride(&self) -> usize {
        self.stride.unwrap_or(self.window_len)
    }
}

/// Placement of one window on the step grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub index: usize,
    pub start: u64,
    pub len: usize,
    /// True when every step t - xi inside the window exists, so past value
    /// and return moments can be computed.
    pub return_eligible: bool,
}

impl WindowSpan {
    /// Midpoint of the covered steps; fractional for even window lengths.
    #[must_use]
    pub fn center_step(&self) -> f64 {
        self.start as f64 + (self.len as f64 - 1.0) / 2.0
    }
}

/// Tiles `series_len` steps into windows. Block windows cover
/// [kN, (k+1)N); a stride below N produces overlapping moving windows.
/// Trailing steps that do not fill a window are dropped.
pub fn window_partition(series_len: u64, cfg: &WindowConfig) -> Result<Vec<WindowSpan>> {
    cfg.check()?;
    let n = cfg.window_len as u64;
    if series_len < n {
        return Err(Error::InsufficientData {
            needed: n,
            available: series_len,
        });
    }
    let stride = cfg.effective_stride() as u64;
    let mut spans = Vec::new();
    let mut start = 0u64;
    let mut index = 0usize;
    while start + n <= series_len {
        spans.push(WindowSpan {
            index,
            start,
            len: cfg.window_len,
            return_eligible: start >= cfg.xi_steps,
        });
        index += 1;
        start += stride;
    }
    Ok(spans)
}

/// Raw moments (1/N) sum v^m for m = 1..=n_max over one window slice.
fn raw_moments(values: &[f64], cfg: &WindowConfig) -> Result<Vec<f64>> {
    let n = values.len() as f64;
    let max_abs = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    match cfg.scaling {
        MomentScaling::Raw => {
            let safe = max_safe_order(max_abs);
            if cfg.n_max > safe {
                return Err(Error::MomentOverflow {
                    m: safe + 1,
                    max_abs,
                });
            }
            Ok((1..=cfg.n_max)
                .map(|m| {
                    let mut acc = KahanSum::new();
                    for &v in values {
                        acc.add(v.powi(m as i32));
                    }
                    acc.value() / n
                })
                .collect())
        }
        MomentScaling::WindowMean => {
            let mean = values.iter().sum::<f64>() / n;
            if !(mean.is_finite() && mean != 0.0) {
                // Nothing to normalize by; fall back to the raw path.
                return raw_moments(
                    values,
                    &WindowConfig {
                        scaling: MomentScaling::Raw,
                        ..*cfg
                    },
                );
            }
            let mut out = Vec::with_capacity(cfg.n_max);
            for m in 1..=cfg.n_max {
                let mut acc = KahanSum::new();
                for &v in values {
                    acc.add((v / mean).powi(m as i32));
                }
                let rescaled = mean.powi(m as i32) * (acc.value() / n);
                if !rescaled.is_finite() {
                    return Err(Error::MomentOverflow { m, max_abs });
                }
                out.push(rescaled);
            }
            Ok(out)
        }
    }
}

/// Value and volume moments of one window.
#[derive(Debug, Clone)]
pub struct TradeMoments {
    pub company: String,
    pub window_index: usize,
    /// C(;m) for m = 1..=n_max.
    pub value: Vec<f64>,
    /// U(;m) for m = 1..=n_max.
    pub volume: Vec<f64>,
}

fn window_slice<'a>(track: &'a [f64], span: &WindowSpan) -> &'a [f64] {
    let start = span.start as usize;
    &track[start..start + span.len]
}

pub fn trade_moments(
    track: &DenseTrack,
    span: &WindowSpan,
    cfg: &WindowConfig,
) -> Result<TradeMoments> {
    cfg.check()?;
    Ok(TradeMoments {
        company: track.company.clone(),
        window_index: span.index,
        value: raw_moments(window_slice(&track.values, span), cfg)?,
        volume: raw_moments(window_slice(&track.volumes, span), cfg)?,
    })
}

/// p(;m) = C(;m) / U(;m). Errors when any volume moment is not positive.
pub fn price_moments(tm: &TradeMoments) -> Result<Vec<f64>> {
    tm.value
        .iter()
        .zip(&tm.volume)
        .map(|(&c, &u)| {
            if u > 0.0 {
                Ok(c / u)
            } else {
                Err(Error::DegenerateWindow {
                    company: tm.company.clone(),
                    window: tm.window_index,
                    what: "volume moment",
                })
            }
        })
        .collect()
}

/// pi(;m) = (1/N) sum p_i^m, every tick weighted equally.
pub fn frequency_price_moments(
    track: &DenseTrack,
    span: &WindowSpan,
    cfg: &WindowConfig,
) -> Result<Vec<f64>> {
    cfg.check()?;
    raw_moments(window_slice(&track.prices, span), cfg)
}

/// S(;m) = (1/N) sum (p(t - xi) U(t))^m, or `None` when the window reaches
/// before the start of the series.
pub fn past_value_moments(
    track: &DenseTrack,
    span: &WindowSpan,
    cfg: &WindowConfig,
) -> Result<Option<Vec<f64>>> {
    cfg.check()?;
    if !span.return_eligible || span.start < cfg.xi_steps {
        return Ok(None);
    }
    let start = span.start as usize;
    let past_start = start - cfg.xi_steps as usize;
    let terms: Vec<f64> = (0..span.len)
        .map(|i| track.prices[past_start + i] * track.volumes[start + i])
        .collect();
    raw_moments(&terms, cfg).map(Some)
}

/// r(;m) = C(;m) / S(;m). Errors when any past value moment is not positive.
pub fn return_moments(tm: &TradeMoments, past_value: &[f64]) -> Result<Vec<f64>> {
    tm.value
        .iter()
        .zip(past_value)
        .map(|(&c, &s)| {
            if s > 0.0 {
                Ok(c / s)
            } else {
                Err(Error::DegenerateWindow {
                    company: tm.company.clone(),
                    window: tm.window_index,
                    what: "past value moment",
                })
            }
        })
        .collect()
}

/// The duality route to price moments: p(;m) = r(;m) S(;m) / U(;m).
pub fn price_from_return(ret: &[f64], past_value: &[f64], volume: &[f64]) -> Result<Vec<f64>> {
    if ret.len() != past_value.len() || ret.len() != volume.len() {
        return Err(Error::InvalidSpec(
            "return, past value, and volume moment arrays must have equal length".into(),
        ));
    }
    ret.iter()
        .zip(past_value)
        .zip(volume)
        .map(|((&r, &s), &u)| {
            if u > 0.0 {
                Ok(r * s / u)
            } else {
                Err(Error::InvalidSpec("volume moment must be positive".into()))
            }
        })
        .collect()
}

/// Central statistics of the price distribution of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralStats {
    /// p(;1), the VWAP.
    pub mean: f64,
    /// sigma^2 = p(;2) - p(;1)^2; needs n_max >= 2.
    pub variance: Option<f64>,
    /// p(;3) - 3 p(;2) p(;1) + 2 p(;1)^3; needs n_max >= 3.
    pub third_central: Option<f64>,
    /// third_central / sigma^3; undefined (None) at zero variance.
    pub skewness: Option<f64>,
}

/// Derives central stats from price moments p(;1..=n). Orders the input does
/// not reach stay `None`, as does skewness when the variance is not positive.
#[must_use]
pub fn derived_central_stats(price: &[f64]) -> CentralStats {
    let mean = price[0];
    let variance = price.get(1).map(|&p2| p2 - mean * mean);
    let third_central = price
        .get(2)
        .map(|&p3| p3 - 3.0 * price[1] * mean + 2.0 * mean.powi(3));
    let skewness = match (variance, third_central) {
        (Some(v), Some(t)) if v > 0.0 => Some(t / v.powf(1.5)),
        _ => None,
    };
    CentralStats {
        mean,
        variance,
        third_central,
        skewness,
    }
}

/// Everything the engine knows about one (company, window) pair.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub company: String,
    pub window_index: usize,
    pub start_step: u64,
    pub center_step: f64,
    /// C(;m), m = 1..=n_max.
    pub value: Vec<f64>,
    /// U(;m).
    pub volume: Vec<f64>,
    /// p(;m).
    pub price: Vec<f64>,
    /// pi(;m).
    pub freq_price: Vec<f64>,
    /// S(;m); `None` when the window is not return eligible.
    pub past_value: Option<Vec<f64>>,
    /// r(;m); `None` when the window is not return eligible.
    pub ret: Option<Vec<f64>>,
    pub stats: CentralStats,
}

pub fn compute_moment_set(
    track: &DenseTrack,
    span: &WindowSpan,
    cfg: &WindowConfig,
) -> Result<MomentSet> {
    let tm = trade_moments(track, span, cfg)?;
    let price = price_moments(&tm)?;
    let freq_price = frequency_price_moments(track, span, cfg)?;
    let past_value = past_value_moments(track, span, cfg)?;
    let ret = match &past_value {
        Some(s) => Some(return_moments(&tm, s)?),
        None => None,
    };
    let stats = derived_central_stats(&price);
    Ok(MomentSet {
        company: tm.company,
        window_index: span.index,
        start_step: span.start,
        center_step: span.center_step(),
        value: tm.value,
        volume: tm.volume,
        price,
        freq_price,
        past_value,
        ret,
        stats,
    })
}

/// Moment sets for every company and every window, companies in sorted order.
pub fn series_moments(series: &DenseSeries, cfg: &WindowConfig) -> Result<Vec<MomentSet>> {
    let spans = window_partition(series.len(), cfg)?;
    let mut out = Vec::with_capacity(series.company_count() * spans.len());
    for track in series.tracks() {
        for span in &spans {
            out.push(compute_moment_set(track, span, cfg)?);
        }
    }
    Ok(out)
}

/// Moment table kinds in output order.
const KIND_ORDER: [&str; 6] = ["C", "U", "S", "p", "r", "pi"];

/// Renders the moment table: `company,window,center_step,kind,m,value`, one
/// row per (company, window, kind, m), kinds ordered C, U, S, p, r, pi.
/// S and r rows are omitted for windows that are not return eligible.
#[must_use]
pub fn render_moment_csv(sets: &[MomentSet]) -> String {
    let mut out = String::from("company,window,center_step,kind,m,value\n");
    for s in sets {
        for kind in KIND_ORDER {
            let values: Option<&[f64]> = match kind {
                "C" => Some(&s.value),
                "U" => Some(&s.volume),
                "S" => s.past_value.as_deref(),
                "p" => Some(&s.price),
                "r" => s.ret.as_deref(),
                "pi" => Some(&s.freq_price),
                _ => unreachable!(),
            };
            if let Some(values) = values {
                for (i, v) in values.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        s.company,
                        s.window_index,
                        s.center_step,
                        kind,
                        i + 1,
                        v
                    ));
                }
            }
        }
    }
    out
}

pub fn write_moment_csv(path: impl AsRef<std::path::Path>, sets: &[MomentSet]) -> Result<()> {
    crate::trade_data::write_atomic(path.as_ref(), render_moment_csv(sets).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::relative_deviation;
    use crate::trade_data::{DenseSeries, TickRecord, TickSeries};

    /// Three ticks (p, U) = (2,1), (3,2), (4,1); all closed-form moments of
    /// this window are simple rationals.
    fn fixture_track() -> DenseTrack {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 1.0),
            TickRecord::new(1, "A", 3.0, 2.0),
            TickRecord::new(2, "A", 4.0, 1.0),
        ]);
        let dense = DenseSeries::from_series(&series).unwrap();
        dense.track("A").unwrap().clone()
    }

    fn one_window(len: usize) -> WindowSpan {
        WindowSpan {
            index: 0,
            start: 0,
            len,
            return_eligible: true,
        }
    }

    #[test]
    fn fixture_trade_and_price_moments() {
        let track = fixture_track();
        let cfg = WindowConfig::block(3, 3, 0);
        let tm = trade_moments(&track, &one_window(3), &cfg).unwrap();
        assert!((tm.value[0] - 4.0).abs() < 1e-15);
        assert!((tm.value[1] - 56.0 / 3.0).abs() < 1e-14);
        assert!((tm.volume[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((tm.volume[1] - 2.0).abs() < 1e-15);
        let p = price_moments(&tm).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-15, "p(;1) is the VWAP");
        assert!((p[1] - 28.0 / 3.0).abs() < 1e-14);
        assert!((p[2] - 28.8).abs() < 1e-13);
        let pi = frequency_price_moments(&track, &one_window(3), &cfg).unwrap();
        assert!((pi[1] - 29.0 / 3.0).abs() < 1e-14, "pi(;2) != p(;2)");
    }

    #[test]
    fn fixture_central_stats() {
        let track = fixture_track();
        let cfg = WindowConfig::block(3, 3, 0);
        let set = compute_moment_set(&track, &one_window(3), &cfg).unwrap();
        let stats = set.stats;
        assert!((stats.variance.unwrap() - 1.0 / 3.0).abs() < 1e-13);
        assert!((stats.third_central.unwrap() + 1.2).abs() < 1e-12);
        let sigma3 = (1.0f64 / 3.0).powf(1.5);
        assert!((stats.skewness.unwrap() + 1.2 / sigma3).abs() < 1e-11);
    }

    #[test]
    fn fixture_past_value_and_returns() {
        // Two warmup ticks at price 2 so that xi = 2 looks back at price 2
        // from every tick of the measured window.
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 2.0, 5.0),
            TickRecord::new(1, "A", 2.0, 5.0),
            TickRecord::new(2, "A", 2.0, 1.0),
            TickRecord::new(3, "A", 3.0, 2.0),
            TickRecord::new(4, "A", 4.0, 1.0),
        ]);
        let dense = DenseSeries::from_series(&series).unwrap();
        let track = dense.track("A").unwrap();
        let cfg = WindowConfig {
            window_len: 3,
            n_max: 2,
            xi_steps: 2,
            stride: None,
            scaling: MomentScaling::Raw,
        };
        let span = WindowSpan {
            index: 0,
            start: 2,
            len: 3,
            return_eligible: true,
        };
        let s = past_value_moments(track, &span, &cfg).unwrap().unwrap();
        assert!((s[0] - 8.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 8.0).abs() < 1e-14);
        let tm = trade_moments(track, &span, &cfg).unwrap();
        let r = return_moments(&tm, &s).unwrap();
        assert!((r[0] - 1.5).abs() < 1e-15);
        assert!((r[1] - 7.0 / 3.0).abs() < 1e-14);
        let p_direct = price_moments(&tm).unwrap();
        let p_dual = price_from_return(&r, &s, &tm.volume).unwrap();
        for m in 0..2 {
            assert!(relative_deviation(p_direct[m], p_dual[m]) < 1e-12);
        }
    }

    #[test]
    fn zero_shift_makes_returns_exactly_one() {
        let track = fixture_track();
        let cfg = WindowConfig::block(3, 4, 0);
        let set = compute_moment_set(&track, &one_window(3), &cfg).unwrap();
        for &r in set.ret.as_ref().unwrap() {
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn unit_volume_makes_p_equal_pi() {
        let series = TickSeries::from_records(
            (0..8)
                .map(|i| TickRecord::new(i, "A", 1.5 + 0.25 * i as f64, 1.0))
                .collect(),
        );
        let dense = DenseSeries::from_series(&series).unwrap();
        let track = dense.track("A").unwrap();
        let cfg = WindowConfig::block(8, 4, 0);
        let set = compute_moment_set(track, &one_window(8), &cfg).unwrap();
        for m in 0..4 {
            assert_eq!(set.price[m], set.freq_price[m]);
        }
    }

    #[test]
    fn partition_blocks_and_stride() {
        let cfg = WindowConfig::block(3, 1, 2);
        let spans = window_partition(10, &cfg).unwrap();
        assert_eq!(spans.len(), 3, "trailing step dropped");
        assert_eq!(spans[1].start, 3);
        assert!(!spans[0].return_eligible, "start 0 < xi 2");
        assert!(spans[1].return_eligible);
        assert_eq!(spans[0].center_step(), 1.0);

        let moving = WindowConfig {
            stride: Some(1),
            ..cfg
        };
        let spans = window_partition(5, &moving).unwrap();
        assert_eq!(spans.len(), 3);
        assert_eq!(spans[2].start, 2);

        assert!(window_partition(2, &cfg).is_err(), "series shorter than N");
    }

    #[test]
    fn single_tick_window_is_the_tick() {
        let track = fixture_track();
        let cfg = WindowConfig::block(1, 2, 0);
        let set = compute_moment_set(&track, &one_window(1), &cfg).unwrap();
        assert_eq!(set.value[0], 2.0);
        assert_eq!(set.price[0], 2.0);
        assert_eq!(set.stats.variance.unwrap(), 0.0);
        assert!(set.stats.skewness.is_none(), "zero variance has no skew");
    }

    #[test]
    fn overflow_is_rejected_naming_the_order() {
        let series = TickSeries::from_records(vec![
            TickRecord::new(0, "A", 1e160, 1.0),
            TickRecord::new(1, "A", 1e160, 1.0),
        ]);
        let dense = DenseSeries::from_series(&series).unwrap();
        let cfg = WindowConfig::block(2, 2, 0);
        let err = trade_moments(dense.track("A").unwrap(), &one_window(2), &cfg).unwrap_err();
        match err {
            Error::MomentOverflow { m, .. } => assert_eq!(m, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn window_mean_scaling_matches_raw() {
        let track = fixture_track();
        let raw_cfg = WindowConfig::block(3, 4, 0);
        let scaled_cfg = WindowConfig {
            scaling: MomentScaling::WindowMean,
            ..raw_cfg
        };
        let raw = compute_moment_set(&track, &one_window(3), &raw_cfg).unwrap();
        let scaled = compute_moment_set(&track, &one_window(3), &scaled_cfg).unwrap();
        for m in 0..4 {
            assert!(relative_deviation(raw.value[m], scaled.value[m]) < 1e-12);
            assert!(relative_deviation(raw.price[m], scaled.price[m]) < 1e-12);
        }
    }

    #[test]
    fn moment_csv_layout() {
        let track = fixture_track();
        let cfg = WindowConfig::block(3, 2, 0);
        let sets = vec![compute_moment_set(&track, &one_window(3), &cfg).unwrap()];
        let csv = render_moment_csv(&sets);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "company,window,center_step,kind,m,value");
        assert_eq!(lines.next().unwrap(), "A,0,1,C,1,4");
        // 6 kinds x 2 orders + header.
        assert_eq!(csv.lines().count(), 13);
    }

    #[test]
    fn ineligible_windows_omit_s_and_r_rows() {
        let track = fixture_track();
        let cfg = WindowConfig {
            window_len: 3,
            n_max: 1,
            xi_steps: 1,
            stride: None,
            scaling: MomentScaling::Raw,
        };
        let spans = window_partition(3, &cfg).unwrap();
        let set = compute_moment_set(&track, &spans[0], &cfg).unwrap();
        assert!(set.past_value.is_none());
        let csv = render_moment_csv(&[set]);
        assert!(!csv.contains(",S,"));
        assert!(!csv.contains(",r,"));
    }
}
