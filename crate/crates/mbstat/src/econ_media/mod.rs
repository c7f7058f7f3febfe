//! Transport of collective variables through the risk domain.
//!
//! Rating transitions induce velocities on the risk axis: a matrix of
//! transition probabilities a_ij over grades x_i, acting over a horizon T,
//! moves mass at mean velocity
//!
//! ```text
//! v(x_i) = (1/T) sum_j (x_j - x_i) a_ij
//! ```
//!
//! Collective value density C_Sigma and its flow P = C_Sigma v then obey
//! continuity and flow equations on [0,1]^w (w <= 2):
//!
//! ```text
//! dC/dt + div(C v) = F       dP/dt + div(P v) = G
//! ```
//!
//! integrated with a first-order upwind finite-volume scheme in flux form on
//! a uniform grid. Boundary faces carry zero flux, so interior mass cannot
//! leave the domain and total mass changes only through the sources. Time
//! steps are explicit and guarded by a CFL bound. In self-consistent mode
//! the velocity is re-derived each step as v = P / C wherever C exceeds a
//! vacuum floor of 1e-12 times the current maximum.
//!
//! The spatially integrated totals follow plain ODEs dC/dt = F(t), solved
//! with classic fourth-order Runge-Kutta as the closed-run consistency
//! oracle for the PDE path.

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

mod scenario;

pub use scenario::{
    parse_scenario, parse_transition_csv, read_transition_csv, render_snapshot_csv,
    render_trajectory_csv, run_scenario, write_snapshot_csv, write_trajectory_csv, InitField,
    Scenario, SimulationOutcome, Snapshot, SourcePreset, VelocitySpec,
};

/// Default CFL safety factor.
pub const CFL_MAX: f64 = 0.9;
/// Row sums of a transition matrix may deviate from 1 by at most this.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Vacuum floor factor: cells below this fraction of max(C) get v = 0 in
/// self-consistent mode.
pub const VACUUM_FLOOR: f64 = 1e-12;

/// A rating transition matrix over grade coordinates, with its horizon.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    grades: Vec<f64>,
    probs: Vec<Vec<f64>>,
    horizon: f64,
}

impl TransitionMatrix {
    /// Grades must be strictly increasing inside [0,1]; rows must be
    /// stochastic within 1e-12; the horizon must be positive.
    pub fn new(grades: Vec<f64>, probs: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let k = grades.len();
        if k == 0 {
            return Err(Error::BadGrades);
        }
        if grades.iter().any(|g| !g.is_finite() || !(0.0..=1.0).contains(g))
            || grades.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::BadGrades);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "transition horizon must be positive, got {horizon}"
            )));
        }
        if probs.len() != k {
            return Err(Error::InvalidSpec(format!(
                "transition matrix has {} rows for {k} grades",
                probs.len()
            )));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidSpec(format!(
                    "transition row {i} has {} entries for {k} grades",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "transition row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochasticRow { row: i, sum });
            }
        }
        Ok(Self { grades, probs, horizon })
    }

    #[must_use]
    pub fn grades(&self) -> &[f64] {
        &self.grades
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Velocities v(x_i) = (1/T) sum_j (x_j - x_i) a_ij at the grades.
    #[must_use]
    pub fn velocities(&self) -> Vec<f64> {
        self.grades
            .iter()
            .zip(&self.probs)
            .map(|(&x_i, row)| {
                let mut acc = KahanSum::new();
                for (&x_j, &a) in self.grades.iter().zip(row) {
                    acc.add((x_j - x_i) * a);
                }
                acc.value() / self.horizon
            })
            .collect()
    }

    /// Piecewise-linear interpolation of the grade velocities at `x`,
    /// constant beyond the outer grades.
    #[must_use]
    pub fn velocity_at(&self, x: f64) -> f64 {
        let v = self.velocities();
        interp_linear(&self.grades, &v, x)
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&g| g <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Uniform cell grid on [0,1]^w, w <= 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MediaGrid {
    pub w: usize,
    /// Cells per axis; total cells = cells^w.
    pub cells: usize,
}

impl MediaGrid {
    pub fn new(w: usize, cells: usize) -> Result<Self> {
        if w == 0 || w > 2 {
            return Err(Error::InvalidSpec(format!("w must be 1 or 2, got {w}")));
        }
        if cells < 3 {
            return Err(Error::InvalidSpec("need at least 3 cells per axis".into()));
        }
        Ok(Self { w, cells })
    }

    #[must_use]
    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    #[must_use]
    pub fn total_cells(&self) -> usize {
        self.cells.pow(self.w as u32)
    }

    /// Cell volume dx^w.
    #[must_use]
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.w as i32)
    }

    /// Center coordinate along one axis for axis-index i.
    #[must_use]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Axis indices of flat cell index `idx` (x fastest).
    #[must_use]
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        match self.w {
            1 => [idx, 0],
            _ => [idx % self.cells, idx / self.cells],
        }
    }

    /// Center coordinates of flat cell `idx`, one entry per axis.
    #[must_use]
    pub fn cell_coords(&self, idx: usize) -> Vec<f64> {
        let ij = self.unflatten(idx);
        (0..self.w).map(|a| self.center(ij[a])).collect()
    }
}

/// One moment order's fields on the grid: density, flow, and velocity.
/// Flow and velocity carry one component per axis; all arrays are flat with
/// x fastest.
#[derive(Debug, Clone)]
pub struct MediaField {
    pub c: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl MediaField {
    #[must_use]
    pub fn zeros(grid: &MediaGrid) -> Self {
        let n = grid.total_cells();
        Self {
            c: vec![0.0; n],
            p: vec![vec![0.0; n]; grid.w],
            v: vec![vec![0.0; n]; grid.w],
        }
    }
}

/// Full transport state: per-order fields at one time.
#[derive(Debug, Clone)]
pub struct MediaState {
    pub grid: MediaGrid,
    pub time: f64,
    pub fields: Vec<MediaField>,
}

impl MediaState {
    #[must_use]
    pub fn zeros(grid: MediaGrid, orders: usize) -> Self {
        Self {
            grid,
            time: 0.0,
            fields: (0..orders).map(|_| MediaField::zeros(&grid)).collect(),
        }
    }

    /// Total mass integral(C dV) of order index `mi`.
    #[must_use]
    pub fn total_mass(&self, mi: usize) -> f64 {
        let mut acc = KahanSum::new();
        for &c in &self.fields[mi].c {
            acc.add(c);
        }
        acc.value() * self.grid.cell_volume()
    }

    /// Total flow integral(P dV) per axis of order index `mi`.
    #[must_use]
    pub fn total_flow(&self, mi: usize) -> Vec<f64> {
        self.fields[mi]
            .p
            .iter()
            .map(|comp| {
                let mut acc = KahanSum::new();
                for &p in comp {
                    acc.add(p);
                }
                acc.value() * self.grid.cell_volume()
            })
            .collect()
    }
}

/// Mass-weighted centroid of C over the domain, one entry per axis. Always
/// inside [0,1] when C >= 0; errors when the field carries no mass.
pub fn mean_risk(state: &MediaState, mi: usize) -> Result<Vec<f64>> {
    let field = &state.fields[mi];
    let mut mass = KahanSum::new();
    let mut weighted: Vec<KahanSum> = (0..state.grid.w).map(|_| KahanSum::new()).collect();
    for (idx, &c) in field.c.iter().enumerate() {
        mass.add(c);
        let coords = state.grid.cell_coords(idx);
        for (a, &x) in coords.iter().enumerate() {
            weighted[a].add(c * x);
        }
    }
    let total = mass.value();
    if total <= 0.0 {
        return Err(Error::ZeroMass("mean risk of a massless field"));
    }
    Ok(weighted.iter().map(|w| w.value() / total).collect())
}

/// How the advecting velocity is determined each step.
#[derive(Debug, Clone)]
pub enum VelocityMode {
    /// The field's stored v is used as-is.
    Prescribed,
    /// v = P / C above the vacuum floor, re-derived every step.
    SelfConsistent,
}

/// Per-cell source term.
#[derive(Debug, Clone)]
pub enum Source {
    Zero,
    Constant(f64),
    /// Fixed per-cell values.
    Tabulated(Vec<f64>),
    /// rate * (target - current).
    Relax { rate: f64, target: Vec<f64> },
}

impl Source {
    fn eval(&self, idx: usize, current: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Constant(v) => *v,
            Source::Tabulated(t) => t[idx],
            Source::Relax { rate, target } => rate * (target[idx] - current),
        }
    }

    fn check(&self, cells: usize) -> Result<()> {
        let len = match self {
            Source::Tabulated(t) => Some(t.len()),
            Source::Relax { target, .. } => Some(target.len()),
            _ => None,
        };
        match len {
            Some(l) if l != cells => Err(Error::InvalidSpec(format!(
                "source table has {l} cells, grid has {cells}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Sources for one step: F drives C, G drives each P component.
#[derive(Debug, Clone)]
pub struct Sources {
    pub f: Source,
    pub g: Vec<Source>,
}

impl Sources {
    #[must_use]
    pub fn none(w: usize) -> Self {
        Self {
            f: Source::Zero,
            g: (0..w).map(|_| Source::Zero).collect(),
        }
    }
}

/// Face velocities per axis. Axis a of a w-dimensional grid with n cells per
/// axis has (n+1) faces along that axis for each transverse cell; boundary
/// faces are pinned to zero so no flux crosses the domain boundary.
struct FaceVelocities {
    per_axis: Vec<Vec<f64>>,
}

fn face_count(grid: &MediaGrid) -> usize {
    match grid.w {
        1 => grid.cells + 1,
        _ => (grid.cells + 1) * grid.cells,
    }
}

fn face_index(grid: &MediaGrid, axis: usize, fi: usize, transverse: usize) -> usize {
    debug_assert!(axis < grid.w);
    let _ = axis;
    transverse * (grid.cells + 1) + fi
}

impl FaceVelocities {
    /// From cell-centered velocities by adjacent averaging.
    fn from_cells(grid: &MediaGrid, v_cells: &[Vec<f64>]) -> Self {
        let n = grid.cells;
        let transverse = if grid.w == 1 { 1 } else { n };
        let mut per_axis = Vec::with_capacity(grid.w);
        for axis in 0..grid.w {
            let mut faces = vec![0.0; face_count(grid)];
            for t in 0..transverse {
                for fi in 1..n {
                    let (left, right) = cell_pair(grid, axis, fi, t);
                    let vf = 0.5 * (v_cells[axis][left] + v_cells[axis][right]);
                    faces[face_index(grid, axis, fi, t)] = vf;
                }
            }
            per_axis.push(faces);
        }
        Self { per_axis }
    }

    fn max_abs(&self) -> f64 {
        self.per_axis
            .iter()
            .flatten()
            .fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}

/// Flat indices of the cells left and right of interior face `fi` along
/// `axis`, at transverse position `t`.
fn cell_pair(grid: &MediaGrid, axis: usize, fi: usize, t: usize) -> (usize, usize) {
    match (grid.w, axis) {
        (1, _) => (fi - 1, fi),
        (_, 0) => (t * grid.cells + fi - 1, t * grid.cells + fi),
        _ => ((fi - 1) * grid.cells + t, fi * grid.cells + t),
    }
}

/// Upwind flux-form divergence of (q v): returns per-cell
/// sum_axes (flux_right - flux_left) / dx.
fn flux_divergence(grid: &MediaGrid, q: &[f64], faces: &FaceVelocities) -> Vec<f64> {
    let n = grid.cells;
    let transverse = if grid.w == 1 { 1 } else { n };
    let mut div = vec![0.0; grid.total_cells()];
    let inv_dx = 1.0 / grid.dx();
    for axis in 0..grid.w {
        let face_v = &faces.per_axis[axis];
        for t in 0..transverse {
            // flux[fi] crosses face fi; boundary faces 0 and n stay 0.
            let mut upstream_flux = 0.0;
            for fi in 1..=n {
                let flux = if fi == n {
                    0.0
                } else {
                    let vf = face_v[face_index(grid, axis, fi, t)];
                    let (left, right) = cell_pair(grid, axis, fi, t);
                    if vf >= 0.0 {
                        vf * q[left]
                    } else {
                        vf * q[right]
                    }
                };
                let (cell, _) = cell_pair(grid, axis, fi, t);
                div[cell] += (flux - upstream_flux) * inv_dx;
                upstream_flux = flux;
            }
        }
    }
    div
}

/// One explicit step controls.
#[derive(Debug, Clone)]
pub struct StepConfig {
    pub dt: f64,
    pub cfl_max: f64,
    pub velocity: VelocityMode,
}

impl StepConfig {
    #[must_use]
    pub fn prescribed(dt: f64) -> Self {
        Self {
            dt,
            cfl_max: CFL_MAX,
            velocity: VelocityMode::Prescribed,
        }
    }

    #[must_use]
    pub fn self_consistent(dt: f64) -> Self {
        Self {
            dt,
            cfl_max: CFL_MAX,
            velocity: VelocityMode::SelfConsistent,
        }
    }
}

/// Advances every order of the state by one step: derive velocities per the
/// mode, check the CFL bound, then update C by the continuity equation and
/// each P component by the flow equation, both in upwind flux form with
/// zero-flux boundaries.
pub fn step(state: &mut MediaState, sources: &Sources, cfg: &StepConfig) -> Result<()> {
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(Error::InvalidSpec(format!("dt must be positive, got {}", cfg.dt)));
    }
    if sources.g.len() != state.grid.w {
        return Err(Error::InvalidSpec(format!(
            "{} flow sources for a {}-axis grid",
            sources.g.len(),
            state.grid.w
        )));
    }
    let cells = state.grid.total_cells();
    sources.f.check(cells)?;
    for g in &sources.g {
        g.check(cells)?;
    }
    let grid = state.grid;
    for field in &mut state.fields {
        if let VelocityMode::SelfConsistent = cfg.velocity {
            derive_velocity(&grid, field);
        }
        let faces = FaceVelocities::from_cells(&grid, &field.v);
        check_cfl(&grid, &faces, cfg)?;
        let div_c = flux_divergence(&grid, &field.c, &faces);
        let mut new_c = field.c.clone();
        for (idx, c) in new_c.iter_mut().enumerate() {
            *c += cfg.dt * (sources.f.eval(idx, field.c[idx]) - div_c[idx]);
        }
        for (axis, p_comp) in field.p.iter_mut().enumerate() {
            let div_p = flux_divergence(&grid, p_comp, &faces);
            for (idx, p) in p_comp.iter_mut().enumerate() {
                *p += cfg.dt * (sources.g[axis].eval(idx, *p) - div_p[idx]);
            }
        }
        field.c = new_c;
        if let VelocityMode::SelfConsistent = cfg.velocity {
            derive_velocity(&grid, field);
        }
    }
    state.time += cfg.dt;
    Ok(())
}

/// v = P / C where C clears the vacuum floor, else 0.
fn derive_velocity(grid: &MediaGrid, field: &mut MediaField) {
    let max_c = field.c.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let floor = VACUUM_FLOOR * max_c;
    for axis in 0..grid.w {
        for idx in 0..field.c.len() {
            field.v[axis][idx] = if field.c[idx] > floor {
                field.p[axis][idx] / field.c[idx]
            } else {
                0.0
            };
        }
    }
}

fn check_cfl(grid: &MediaGrid, faces: &FaceVelocities, cfg: &StepConfig) -> Result<()> {
    let vmax = faces.max_abs() * grid.w as f64;
    if vmax == 0.0 {
        return Ok(());
    }
    let dt_max = cfg.cfl_max * grid.dx() / vmax;
    if cfg.dt > dt_max {
        return Err(Error::CflViolation { dt: cfg.dt, dt_max });
    }
    Ok(())
}

/// Installs a prescribed velocity profile (per axis, function of the face
/// coordinate) into every order of the state, evaluated at cell centers for
/// reporting; stepping re-samples it at faces through adjacent averages.
pub fn set_velocity_profile(state: &mut MediaState, profile: impl Fn(usize, f64) -> f64) {
    let grid = state.grid;
    for field in &mut state.fields {
        for axis in 0..grid.w {
            for idx in 0..field.c.len() {
                let coords = grid.cell_coords(idx);
                field.v[axis][idx] = profile(axis, coords[axis]);
            }
        }
    }
}

/// Largest stable dt for the state's current velocities.
#[must_use]
pub fn max_stable_dt(state: &MediaState, cfl_max: f64) -> f64 {
    let mut vmax = 0.0f64;
    for field in &state.fields {
        let faces = FaceVelocities::from_cells(&state.grid, &field.v);
        vmax = vmax.max(faces.max_abs());
    }
    vmax *= state.grid.w as f64;
    if vmax == 0.0 {
        f64::INFINITY
    } else {
        cfl_max * state.grid.dx() / vmax
    }
}

/// One sample of the market-level trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub t: f64,
    /// Per order: integral(C dV).
    pub c_total: Vec<f64>,
    /// Per order, per axis: integral(P dV).
    pub p_total: Vec<Vec<f64>>,
    /// Per order, per axis: mean risk; absent for pure ODE runs, which have
    /// no spatial field to take a centroid of.
    pub mean_risk: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default)]
pub struct MarketTrajectory {
    pub points: Vec<TrajectoryPoint>,
}

/// Classic RK4 for the market totals dC/dt = F(t, C), dP/dt = G(t, P):
/// `f(t, c, mi)` and `g(t, p, mi, axis)` give the right-hand sides. Records
/// every `sample_every`-th step plus the initial and final points.
pub fn integrate_market(
    c0: Vec<f64>,
    p0: Vec<Vec<f64>>,
    f: impl Fn(f64, f64, usize) -> f64,
    g: impl Fn(f64, f64, usize, usize) -> f64,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<MarketTrajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidSpec(format!("dt must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidSpec(format!("t_end must be >= 0, got {t_end}")));
    }
    if p0.iter().any(|p| p.len() != p0[0].len()) || p0.len() != c0.len() {
        return Err(Error::InvalidSpec("p0 must be per order, per axis".into()));
    }
    let orders = c0.len();
    let mut c = c0;
    let mut p = p0;
    let mut t = 0.0;
    let mut trajectory = MarketTrajectory::default();
    let record = |trajectory: &mut MarketTrajectory, t: f64, c: &[f64], p: &[Vec<f64>]| {
        trajectory.points.push(TrajectoryPoint {
            t,
            c_total: c.to_vec(),
            p_total: p.to_vec(),
            mean_risk: None,
        });
    };
    record(&mut trajectory, t, &c, &p);
    let mut n = 0usize;
    while t < t_end {
        // The final partial step lands exactly on t_end: for t in
        // [t_end/2, t_end] the difference and the closing add are exact.
        let h = (t_end - t).min(dt);
        for mi in 0..orders {
            c[mi] = rk4_step(t, c[mi], h, |tt, y| f(tt, y, mi));
            for (a, pa) in p[mi].iter_mut().enumerate() {
                *pa = rk4_step(t, *pa, h, |tt, y| g(tt, y, mi, a));
            }
        }
        t += h;
        n += 1;
        if n.is_multiple_of(sample_every.max(1)) || t >= t_end {
            record(&mut trajectory, t, &c, &p);
        }
    }
    Ok(trajectory)
}

fn rk4_step(t: f64, y: f64, h: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}
