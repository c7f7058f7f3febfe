//! Risk-cell aggregation: collective moments of company groups on the unit
//! cube, and whole-market moments.
//!
//! Companies carry per-order coordinates in [0,1]^J. The cube is tiled by
//! cells of side d, half-open [c d, (c+1) d) with the top face closed at 1,
//! lower-inclusive on interior boundaries. Cell membership is per moment
//! order: the order-m sums of a cell run over the companies whose order-m
//! coordinates fall inside it, so one company may contribute to different
//! cells at different m.
//!
//! Collective moments over a window sum across member companies and average
//! over time steps. Two routes exist for the same number: average the
//! per-step cross-company sums (time-major), or sum the per-company window
//! moments (company-major). Both are computed and cross-checked to 1e-12
//! before a value is returned. Market moments sum over all companies in
//! sorted order and never look at the grid, so they cannot depend on d.
//!
//! The m = 1 oracle: collective return C/S equals the value-weighted
//! portfolio return sum(C_q,i) / sum(S_q,i) of the member companies, checked
//! directly wherever aggregation is emitted.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::moments::{window_partition, WindowConfig, WindowSpan};
use crate::numeric::{relative_deviation, KahanSum};
use crate::trade_data::{DenseSeries, DenseTrack, RiskVector};

/// Relative tolerance for the time-major vs company-major cross-check.
pub const INTERCHANGE_TOL: f64 = 1e-12;

/// Companies mapped to cells of side d, per moment order.
#[derive(Debug, Clone)]
pub struct RiskCellGrid {
    d: f64,
    axes: usize,
    orders: usize,
    cells_per_axis: usize,
    /// company -> per order m (0-based) -> cell index per axis.
    assignment: BTreeMap<String, Vec<Vec<usize>>>,
}

impl RiskCellGrid {
    /// Builds the per-order assignment. All risk vectors must be well formed
    /// and agree on orders and axes; d must lie in (0, 1].
    pub fn build(risks: &[RiskVector], d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0 && d <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "cell side d must be in (0, 1], got {d}"
            )));
        }
        let first = risks
            .first()
            .ok_or_else(|| Error::InvalidSpec("no risk vectors".into()))?;
        let orders = first.orders();
        let axes = first.axes();
        let cells_per_axis = (1.0 / d).ceil().max(1.0) as usize;
        let mut assignment = BTreeMap::new();
        for r in risks {
            if !r.is_well_formed() {
                return Err(Error::InvalidSpec(format!(
                    "risk vector for {} is not inside the unit cube or is ragged",
                    r.company
                )));
            }
            if r.orders() != orders || r.axes() != axes {
                return Err(Error::InvalidSpec(format!(
                    "risk vector for {} has {} orders x {} axes, expected {orders} x {axes}",
                    r.company,
                    r.orders(),
                    r.axes()
                )));
            }
            let cells = r
                .coords
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&x| ((x / d).floor() as usize).min(cells_per_axis - 1))
                        .collect()
                })
                .collect();
            if assignment.insert(r.company.clone(), cells).is_some() {
                return Err(Error::InvalidSpec(format!(
                    "duplicate risk vector for {}",
                    r.company
                )));
            }
        }
        Ok(Self {
            d,
            axes,
            orders,
            cells_per_axis,
            assignment,
        })
    }

    #[must_use]
    pub fn cell_side(&self) -> f64 {
        self.d
    }

    #[must_use]
    pub fn axes(&self) -> usize {
        self.axes
    }

    #[must_use]
    pub fn orders(&self) -> usize {
        self.orders
    }

    #[must_use]
    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    /// Cell of `company` at order m (1-based).
    #[must_use]
    pub fn cell_of(&self, company: &str, m: usize) -> Option<&[usize]> {
        self.assignment
            .get(company)
            .and_then(|per_m| per_m.get(m - 1))
            .map(Vec::as_slice)
    }

    /// Member companies of `cell` at order m, in sorted order.
    #[must_use]
    pub fn members(&self, cell: &[usize], m: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, per_m)| per_m.get(m - 1).map(Vec::as_slice) == Some(cell))
            .map(|(company, _)| company.as_str())
            .collect()
    }

    /// Cells holding at least one company at any order, in index order.
    #[must_use]
    pub fn occupied_cells(&self) -> BTreeSet<Vec<usize>> {
        self.assignment
            .values()
            .flat_map(|per_m| per_m.iter().cloned())
            .collect()
    }

    fn check_cell(&self, cell: &[usize]) -> Result<()> {
        if cell.len() != self.axes || cell.iter().any(|&c| c >= self.cells_per_axis) {
            return Err(Error::InvalidSpec(format!(
                "cell {cell:?} outside a {}-axis grid with {} cells per axis",
                self.axes, self.cells_per_axis
            )));
        }
        Ok(())
    }
}

/// Where an aggregate row lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Level {
    Cell(Vec<usize>),
    Market,
}

impl Level {
    /// Cell indices joined by `/`; the market level prints as `-`.
    #[must_use]
    pub fn label(&self) -> String {
        match self {
            Level::Cell(idx) => idx
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("/"),
            Level::Market => "-".into(),
        }
    }
}

/// Window layout for aggregation. Base windows hold `window_len` steps; cell
/// windows hold k_x of those; market windows hold k_m cell windows.
#[derive(Debug, Clone, Copy)]
pub struct AggregateConfig {
    pub window_len: usize,
    pub k_x: usize,
    pub k_m: usize,
    pub n_max: usize,
    pub xi_steps: u64,
}

impl AggregateConfig {
    fn check(&self) -> Result<()> {
        if self.window_len == 0 || self.k_x == 0 || self.k_m == 0 {
            return Err(Error::InvalidSpec(
                "window_len, k_x, and k_m must all be >= 1".into(),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidSpec("n_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Steps per cell-level window.
    #[must_use]
    pub fn cell_window_steps(&self) -> usize {
        self.window_len * self.k_x
    }

    /// Steps per market-level window.
    #[must_use]
    pub fn market_window_steps(&self) -> usize {
        self.window_len * self.k_x * self.k_m
    }

    fn window_cfg(&self, steps: usize) -> WindowConfig {
        WindowConfig::block(steps, self.n_max, self.xi_steps)
    }

    /// Cell-level window spans over a series of `series_len` steps.
    pub fn cell_windows(&self, series_len: u64) -> Result<Vec<WindowSpan>> {
        self.check()?;
        window_partition(series_len, &self.window_cfg(self.cell_window_steps()))
    }

    /// Market-level window spans.
    pub fn market_windows(&self, series_len: u64) -> Result<Vec<WindowSpan>> {
        self.check()?;
        window_partition(series_len, &self.window_cfg(self.market_window_steps()))
    }
}

/// Cross-company sums at one step for one order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSums {
    /// sum over members of C_q(step)^m.
    pub value: f64,
    /// sum over members of U_q(step)^m.
    pub volume: f64,
    /// sum over members of (p_q(step - xi) U_q(step))^m; `None` when the
    /// shift reaches before step 0.
    pub past: Option<f64>,
    pub members: usize,
}

fn pow_checked(base: f64, m: usize) -> Result<f64> {
    let v = base.powi(m as i32);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::MomentOverflow {
            m,
            max_abs: base.abs(),
        })
    }
}

fn past_term(track: &DenseTrack, step: u64, xi: u64) -> Option<f64> {
    step.checked_sub(xi)
        .map(|past| track.prices[past as usize] * track.volumes[step as usize])
}

/// Per-step collective sums over an explicit member list (sorted company
/// order is the caller's responsibility; all public callers pass sorted
/// lists so results are reproducible).
fn step_sums(
    series: &DenseSeries,
    members: &[&str],
    m: usize,
    step: u64,
    xi: u64,
) -> Result<StepSums> {
    let mut value = KahanSum::new();
    let mut volume = KahanSum::new();
    let mut past = KahanSum::new();
    let mut have_past = true;
    for company in members {
        let track = series
            .track(company)
            .ok_or_else(|| Error::InvalidSpec(format!("no series for company {company}")))?;
        value.add(pow_checked(track.values[step as usize], m)?);
        volume.add(pow_checked(track.volumes[step as usize], m)?);
        match past_term(track, step, xi) {
            Some(t) => past.add(pow_checked(t, m)?),
            None => have_past = false,
        }
    }
    Ok(StepSums {
        value: value.value(),
        volume: volume.value(),
        past: have_past.then(|| past.value()),
        members: members.len(),
    })
}

/// Collective sums of one cell at one step, order m.
pub fn collective_step_sums(
    series: &DenseSeries,
    grid: &RiskCellGrid,
    cell: &[usize],
    m: usize,
    step: u64,
    xi: u64,
) -> Result<StepSums> {
    grid.check_cell(cell)?;
    if m == 0 || m > grid.orders() {
        return Err(Error::InvalidSpec(format!(
            "order m={m} outside the grid's 1..={}",
            grid.orders()
        )));
    }
    if step >= series.len() {
        return Err(Error::InsufficientData {
            needed: step + 1,
            available: series.len(),
        });
    }
    step_sums(series, &grid.members(cell, m), m, step, xi)
}

/// Windowed collective moments at one level.
///
/// Raw sums accumulate every (member, step) term of the window; averages
/// divide by the step count once. The per-order member count is carried so
/// empty (cell, m) pairs stay distinguishable from genuinely zero sums.
#[derive(Debug, Clone)]
pub struct CollectiveMoments {
    pub level: Level,
    pub time_index: usize,
    pub start_step: u64,
    pub step_count: usize,
    /// C_Sigma(;m): raw value sums, m = 1..=n_max.
    pub raw_value: Vec<f64>,
    /// U_Sigma(;m).
    pub raw_volume: Vec<f64>,
    /// S_Sigma(;m); `None` when the window is not return eligible.
    pub raw_past: Option<Vec<f64>>,
    /// Contributing companies per order.
    pub company_count: Vec<usize>,
}

impl CollectiveMoments {
    #[must_use]
    pub fn n_max(&self) -> usize {
        self.raw_value.len()
    }

    #[must_use]
    pub fn is_empty_at(&self, m: usize) -> bool {
        self.company_count[m - 1] == 0
    }

    /// Time-averaged collective moment C(;m) = C_Sigma(;m) / step_count.
    #[must_use]
    pub fn value(&self, m: usize) -> f64 {
        self.raw_value[m - 1] / self.step_count as f64
    }

    #[must_use]
    pub fn volume(&self, m: usize) -> f64 {
        self.raw_volume[m - 1] / self.step_count as f64
    }

    #[must_use]
    pub fn past(&self, m: usize) -> Option<f64> {
        self.raw_past.as_ref().map(|s| s[m - 1] / self.step_count as f64)
    }

    /// Collective price p(;m) = C(;m) / U(;m); `None` for an empty order or
    /// a degenerate volume sum.
    #[must_use]
    pub fn price(&self, m: usize) -> Option<f64> {
        if self.is_empty_at(m) {
            return None;
        }
        let u = self.volume(m);
        (u > 0.0).then(|| self.value(m) / u)
    }

    /// Collective return r(;m) = C(;m) / S(;m); `None` when the window has no
    /// past values, the order is empty, or S is degenerate.
    #[must_use]
    pub fn ret(&self, m: usize) -> Option<f64> {
        if self.is_empty_at(m) {
            return None;
        }
        let s = self.past(m)?;
        (s > 0.0).then(|| self.value(m) / s)
    }
}

/// Window moments over an explicit member set. Both summation orders are
/// evaluated; their agreement (1e-12 relative) guards the implementation
/// against asymmetric bookkeeping bugs.
fn members_window_moments(
    series: &DenseSeries,
    members_per_m: &[Vec<&str>],
    level: Level,
    span: &WindowSpan,
    cfg: &AggregateConfig,
) -> Result<CollectiveMoments> {
    let count = span.len as f64;
    let mut raw_value = Vec::with_capacity(cfg.n_max);
    let mut raw_volume = Vec::with_capacity(cfg.n_max);
    let mut raw_past = span.return_eligible.then(Vec::new);
    let mut company_count = Vec::with_capacity(cfg.n_max);
    for (mi, members) in members_per_m.iter().enumerate() {
        let m = mi + 1;
        // Time-major: per-step cross-company sums, then the time sum.
        let mut value_t = KahanSum::new();
        let mut volume_t = KahanSum::new();
        let mut past_t = KahanSum::new();
        for offset in 0..span.len {
            let step = span.start + offset as u64;
            let sums = step_sums(series, members, m, step, cfg.xi_steps)?;
            value_t.add(sums.value);
            volume_t.add(sums.volume);
            if span.return_eligible {
                past_t.add(sums.past.ok_or(Error::InsufficientData {
                    needed: cfg.xi_steps,
                    available: span.start,
                })?);
            }
        }
        // Company-major: per-company window averages, then the company sum.
        let mut value_q = KahanSum::new();
        for company in members {
            let track = series.track(company).expect("member has a track");
            let mut acc = KahanSum::new();
            for offset in 0..span.len {
                acc.add(pow_checked(track.values[(span.start + offset as u64) as usize], m)?);
            }
            value_q.add(acc.value() / count);
        }
        let time_major = value_t.value() / count;
        let dev = relative_deviation(time_major, value_q.value());
        if dev > INTERCHANGE_TOL {
            return Err(Error::ConsistencyCheck {
                what: "collective window sum interchange",
                relative: dev,
            });
        }
        raw_value.push(value_t.value());
        raw_volume.push(volume_t.value());
        if let Some(past) = raw_past.as_mut() {
            past.push(past_t.value());
        }
        company_count.push(members.len());
    }
    Ok(CollectiveMoments {
        level,
        time_index: span.index,
        start_step: span.start,
        step_count: span.len,
        raw_value,
        raw_volume,
        raw_past,
        company_count,
    })
}

/// Collective moments of one cell over cell-level window `window_index`.
pub fn collective_moments(
    series: &DenseSeries,
    grid: &RiskCellGrid,
    cell: &[usize],
    cfg: &AggregateConfig,
    window_index: usize,
) -> Result<CollectiveMoments> {
    cfg.check()?;
    grid.check_cell(cell)?;
    let spans = cfg.cell_windows(series.len())?;
    let span = *spans.get(window_index).ok_or(Error::InsufficientData {
        needed: ((window_index + 1) * cfg.cell_window_steps()) as u64,
        available: series.len(),
    })?;
    if cfg.n_max > grid.orders() {
        return Err(Error::InvalidSpec(format!(
            "n_max {} exceeds the grid's {} coordinate orders",
            cfg.n_max,
            grid.orders()
        )));
    }
    let members_per_m: Vec<Vec<&str>> =
        (1..=cfg.n_max).map(|m| grid.members(cell, m)).collect();
    members_window_moments(series, &members_per_m, Level::Cell(cell.to_vec()), &span, cfg)
}

/// Whole-market moments over market-level window `window_index`. Sums run
/// over all companies in sorted order; no grid is involved, so the result is
/// independent of any cell partition.
pub fn market_moments(
    series: &DenseSeries,
    cfg: &AggregateConfig,
    window_index: usize,
) -> Result<CollectiveMoments> {
    cfg.check()?;
    let spans = cfg.market_windows(series.len())?;
    let span = *spans.get(window_index).ok_or(Error::InsufficientData {
        needed: ((window_index + 1) * cfg.market_window_steps()) as u64,
        available: series.len(),
    })?;
    let all: Vec<&str> = series.companies().collect();
    let members_per_m: Vec<Vec<&str>> = (1..=cfg.n_max).map(|_| all.clone()).collect();
    members_window_moments(series, &members_per_m, Level::Market, &span, cfg)
}

/// The portfolio-return oracle of one cell window: sum of member values over
/// the window divided by the sum of member past values, both as flat
/// company-major double sums. This is the value-weighted mean of the member
/// returns, computed without any moment machinery.
pub fn markowitz_return(
    series: &DenseSeries,
    grid: &RiskCellGrid,
    cell: &[usize],
    cfg: &AggregateConfig,
    window_index: usize,
) -> Result<f64> {
    cfg.check()?;
    grid.check_cell(cell)?;
    let spans = cfg.cell_windows(series.len())?;
    let span = spans.get(window_index).ok_or(Error::InsufficientData {
        needed: ((window_index + 1) * cfg.cell_window_steps()) as u64,
        available: series.len(),
    })?;
    if !span.return_eligible {
        return Err(Error::InsufficientData {
            needed: cfg.xi_steps,
            available: span.start,
        });
    }
    let members = grid.members(cell, 1);
    let mut value = KahanSum::new();
    let mut past = KahanSum::new();
    for company in &members {
        let track = series
            .track(company)
            .ok_or_else(|| Error::InvalidSpec(format!("no series for company {company}")))?;
        for offset in 0..span.len {
            let step = span.start + offset as u64;
            value.add(track.values[step as usize]);
            past.add(past_term(track, step, cfg.xi_steps).expect("eligible window"));
        }
    }
    if past.value() <= 0.0 {
        return Err(Error::ZeroMass("portfolio past value"));
    }
    Ok(value.value() / past.value())
}

/// One cell window together with its return oracle.
#[derive(Debug, Clone)]
pub struct CellAggregate {
    pub moments: CollectiveMoments,
    /// Oracle, collective return, and their relative deviation; present when
    /// the window is return eligible and the cell is occupied at m = 1.
    pub markowitz: Option<MarkowitzCheck>,
}

#[derive(Debug, Clone, Copy)]
pub struct MarkowitzCheck {
    pub oracle: f64,
    pub collective: f64,
    pub relative_deviation: f64,
}

/// Every occupied cell across every cell window, plus market rows per market
/// window. Cells iterate in index order, windows in time order.
#[derive(Debug, Clone)]
pub struct AggregateTable {
    pub cells: Vec<CellAggregate>,
    pub market: Vec<CollectiveMoments>,
}

pub fn aggregate_all(
    series: &DenseSeries,
    grid: &RiskCellGrid,
    cfg: &AggregateConfig,
) -> Result<AggregateTable> {
    cfg.check()?;
    let cell_spans = cfg.cell_windows(series.len())?;
    let market_spans = cfg.market_windows(series.len())?;
    let mut cells = Vec::new();
    for cell in grid.occupied_cells() {
        for span in &cell_spans {
            let moments = collective_moments(series, grid, &cell, cfg, span.index)?;
            let markowitz = if span.return_eligible && !moments.is_empty_at(1) {
                let oracle = markowitz_return(series, grid, &cell, cfg, span.index)?;
                let collective = moments.ret(1).ok_or(Error::ZeroMass("collective past value"))?;
                Some(MarkowitzCheck {
                    oracle,
                    collective,
                    relative_deviation: relative_deviation(oracle, collective),
                })
            } else {
                None
            };
            cells.push(CellAggregate { moments, markowitz });
        }
    }
    let market = market_spans
        .iter()
        .map(|span| market_moments(series, cfg, span.index))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateTable { cells, market })
}

fn push_rows(out: &mut String, cm: &CollectiveMoments, markowitz: Option<&MarkowitzCheck>) {
    let level = match cm.level {
        Level::Cell(_) => "cell",
        Level::Market => "market",
    };
    let label = cm.level.label();
    let mut row = |kind: &str, m: usize, v: f64| {
        out.push_str(&format!("{level},{label},{},{kind},{m},{v}\n", cm.time_index));
    };
    for m in 1..=cm.n_max() {
        row("Csum", m, cm.raw_value[m - 1]);
        row("Usum", m, cm.raw_volume[m - 1]);
        if let Some(past) = &cm.raw_past {
            row("Ssum", m, past[m - 1]);
        }
        if cm.is_empty_at(m) {
            continue;
        }
        row("C", m, cm.value(m));
        row("U", m, cm.volume(m));
        if let Some(s) = cm.past(m) {
            row("S", m, s);
        }
        if let Some(p) = cm.price(m) {
            row("p", m, p);
        }
        if let Some(r) = cm.ret(m) {
            row("r", m, r);
        }
    }
    if let Some(mk) = markowitz {
        row("markowitz", 1, mk.oracle);
        row("markowitz_dev", 1, mk.relative_deviation);
    }
}

/// Renders `level,cell,time_index,kind,m,value`. Cell labels join indices
/// with `/`; the market label is `-`. Raw sums (Csum, Usum, Ssum) appear for
/// every order; averaged moments and ratios only where defined.
#[must_use]
pub fn render_aggregate_csv(table: &AggregateTable) -> String {
    let mut out = String::from("level,cell,time_index,kind,m,value\n");
    for cell in &table.cells {
        push_rows(&mut out, &cell.moments, cell.markowitz.as_ref());
    }
    for market in &table.market {
        push_rows(&mut out, market, None);
    }
    out
}

pub fn write_aggregate_csv(
    path: impl AsRef<std::path::Path>,
    table: &AggregateTable,
) -> Result<()> {
    crate::trade_data::write_atomic(path.as_ref(), render_aggregate_csv(table).as_bytes())
}
