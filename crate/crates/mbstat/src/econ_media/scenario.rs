//! Scenario files: a small key = value format that describes one transport
//! run end to end (grid, initial fields, velocity mode, sources, schedule),
//! plus the CSV formats for transition matrices and for the snapshot and
//! trajectory outputs.
//!
//! Unknown keys are rejected rather than ignored so a typo cannot silently
//! fall back to a default.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

use super::{
    max_stable_dt, mean_risk, set_velocity_profile, step, MarketTrajectory, MediaGrid, MediaState,
    Source, Sources, StepConfig, TrajectoryPoint, TransitionMatrix, VelocityMode, CFL_MAX,
};

/// How the advecting velocity field is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySpec {
    Zero,
    /// One constant component per axis.
    Constant(Vec<f64>),
    /// Interpolated from a rating transition matrix (one axis only); the
    /// matrix itself is loaded separately from the referenced file.
    Transition { csv: String },
    SelfConsistent,
}

/// Initial density shape; the discrete cell sum is normalized so the grid
/// integral equals `mass` exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum InitField {
    Gaussian { center: Vec<f64>, width: f64, mass: f64 },
    Uniform { mass: f64 },
}

/// Source presets for the density and flow equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourcePreset {
    Zero,
    Constant(f64),
    /// Linear relaxation toward the initial field at the given rate.
    Relax(f64),
}

/// A parsed scenario: everything `run_scenario` needs except the transition
/// matrix, which the caller loads from `VelocitySpec::Transition::csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub w: usize,
    pub cells: usize,
    pub orders: usize,
    pub t_end: f64,
    /// 0 means choose automatically from the CFL bound.
    pub dt: f64,
    pub cfl_max: f64,
    /// Steps between snapshots; 0 keeps only the initial and final states.
    pub snapshot_every: usize,
    pub velocity: VelocitySpec,
    pub init: InitField,
    /// Per-axis proportionality P = v C at t = 0; empty means P starts 0.
    pub flow_velocity: Vec<f64>,
    pub source: SourcePreset,
    pub flow_source: Vec<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            w: 1,
            cells: 64,
            orders: 1,
            t_end: 1.0,
            dt: 0.0,
            cfl_max: CFL_MAX,
            snapshot_every: 0,
            velocity: VelocitySpec::Zero,
            init: InitField::Gaussian {
                center: vec![0.3],
                width: 0.05,
                mass: 1.0,
            },
            flow_velocity: vec![],
            source: SourcePreset::Zero,
            flow_source: vec![],
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

/// Parses scenario text. Lines are `key = value`; blank lines and lines
/// starting with `#` are skipped; later keys override earlier ones.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut s = Scenario::default();
    let mut velocity_name = String::from("zero");
    let mut velocity_value: Vec<f64> = vec![0.1];
    let mut velocity_value_y: Option<f64> = None;
    let mut transition_csv: Option<String> = None;
    let mut init_name = String::from("gaussian");
    let mut center: f64 = 0.3;
    let mut center_y: Option<f64> = None;
    let mut width: f64 = 0.05;
    let mut mass: f64 = 1.0;
    let mut flow_name = String::from("zero");
    let mut flow_velocity: f64 = 0.1;
    let mut flow_velocity_y: Option<f64> = None;
    let mut source_name = String::from("zero");
    let mut source_value: f64 = 0.0;
    let mut source_rate: f64 = 1.0;
    let mut flow_source_value: f64 = 0.0;
    let mut flow_source_value_y: Option<f64> = None;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "scenario line is not key = value: {line:?}"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "w" => s.w = num(key, value)?,
            "cells" => s.cells = num(key, value)?,
            "orders" => s.orders = num(key, value)?,
            "t_end" => s.t_end = num(key, value)?,
            "dt" => s.dt = num(key, value)?,
            "cfl_max" => s.cfl_max = num(key, value)?,
            "snapshot_every" => s.snapshot_every = num(key, value)?,
            "velocity" => velocity_name = value.to_string(),
            "velocity_value" => velocity_value[0] = num(key, value)?,
            "velocity_value_y" => velocity_value_y = Some(num::<f64>(key, value)?),
            "transition_csv" => transition_csv = Some(value.to_string()),
            "init" => init_name = value.to_string(),
            "init_center" => center = num(key, value)?,
            "init_center_y" => center_y = Some(num::<f64>(key, value)?),
            "init_width" => width = num(key, value)?,
            "init_mass" => mass = num(key, value)?,
            "flow_init" => flow_name = value.to_string(),
            "flow_velocity" => flow_velocity = num(key, value)?,
            "flow_velocity_y" => flow_velocity_y = Some(num::<f64>(key, value)?),
            "source" => source_name = value.to_string(),
            "source_value" => source_value = num(key, value)?,
            "source_rate" => source_rate = num(key, value)?,
            "flow_source_value" => flow_source_value = num(key, value)?,
            "flow_source_value_y" => flow_source_value_y = Some(num::<f64>(key, value)?),
            other => {
                return Err(Error::InvalidConfig(format!("unknown scenario key {other:?}")));
            }
        }
    }

    if s.w == 0 || s.w > 2 {
        return Err(Error::InvalidConfig(format!("w must be 1 or 2, got {}", s.w)));
    }
    if s.orders == 0 {
        return Err(Error::InvalidConfig("orders must be at least 1".into()));
    }
    if !(s.t_end.is_finite() && s.t_end >= 0.0) {
        return Err(Error::InvalidConfig(format!("t_end must be >= 0, got {}", s.t_end)));
    }
    if !(s.dt.is_finite() && s.dt >= 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be >= 0, got {}", s.dt)));
    }
    if !(s.cfl_max.is_finite() && s.cfl_max > 0.0 && s.cfl_max <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "cfl_max must lie in (0, 1], got {}",
            s.cfl_max
        )));
    }

    if s.w == 2 {
        velocity_value.push(velocity_value_y.unwrap_or(velocity_value[0]));
    }
    s.velocity = match velocity_name.as_str() {
        "zero" => VelocitySpec::Zero,
        "constant" => VelocitySpec::Constant(velocity_value),
        "transition" => {
            if s.w != 1 {
                return Err(Error::InvalidConfig(
                    "velocity = transition needs w = 1".into(),
                ));
            }
            let csv = transition_csv.ok_or_else(|| {
                Error::InvalidConfig("velocity = transition needs transition_csv".into())
            })?;
            VelocitySpec::Transition { csv }
        }
        "self_consistent" => VelocitySpec::SelfConsistent,
        other => {
            return Err(Error::InvalidConfig(format!("unknown velocity mode {other:?}")));
        }
    };

    let mut centers = vec![center];
    if s.w == 2 {
        centers.push(center_y.unwrap_or(center));
    }
    s.init = match init_name.as_str() {
        "gaussian" => {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "init_width must be positive, got {width}"
                )));
            }
            InitField::Gaussian { center: centers, width, mass }
        }
        "uniform" => InitField::Uniform { mass },
        other => {
            return Err(Error::InvalidConfig(format!("unknown init shape {other:?}")));
        }
    };
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidConfig(format!("init_mass must be positive, got {mass}")));
    }

    s.flow_velocity = match flow_name.as_str() {
        "zero" => vec![],
        "proportional" => {
            let mut v = vec![flow_velocity];
            if s.w == 2 {
                v.push(flow_velocity_y.unwrap_or(flow_velocity));
            }
            v
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown flow_init {other:?}")));
        }
    };
    if s.velocity == VelocitySpec::SelfConsistent && s.flow_velocity.is_empty() {
        return Err(Error::InvalidConfig(
            "velocity = self_consistent needs flow_init = proportional, else nothing moves"
                .into(),
        ));
    }

    s.source = match source_name.as_str() {
        "zero" => SourcePreset::Zero,
        "constant" => SourcePreset::Constant(source_value),
        "relax" => {
            if !(source_rate.is_finite() && source_rate >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "source_rate must be >= 0, got {source_rate}"
                )));
            }
            SourcePreset::Relax(source_rate)
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown source preset {other:?}")));
        }
    };
    s.flow_source = if flow_source_value == 0.0 && flow_source_value_y.is_none() {
        vec![]
    } else {
        let mut v = vec![flow_source_value];
        if s.w == 2 {
            v.push(flow_source_value_y.unwrap_or(flow_source_value));
        }
        v
    };
    Ok(s)
}

/// Parses a transition matrix CSV. The first data line is
/// `grades,x1,...,xK`, an optional `horizon,T` line follows, and the rest
/// are `i,j,prob` rows with 1-based grade indices; omitted entries are 0.
pub fn parse_transition_csv(text: &str, path: &Path) -> Result<TransitionMatrix> {
    let mut grades: Option<Vec<f64>> = None;
    let mut horizon = 1.0;
    let mut probs: Vec<Vec<f64>> = Vec::new();
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line_no = (li + 1) as u64;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_f = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::parse(path, line_no, format!("cannot parse number {v:?}")))
        };
        match fields[0] {
            "grades" => {
                if grades.is_some() {
                    return Err(Error::parse(path, line_no, "second grades line"));
                }
                let g: Vec<f64> = fields[1..]
                    .iter()
                    .map(|v| parse_f(v))
                    .collect::<Result<_>>()?;
                let k = g.len();
                probs = vec![vec![0.0; k]; k];
                seen = vec![vec![false; k]; k];
                grades = Some(g);
            }
            "horizon" => {
                if fields.len() != 2 {
                    return Err(Error::parse(path, line_no, "horizon line needs one value"));
                }
                horizon = parse_f(fields[1])?;
            }
            _ => {
                let g = grades.as_ref().ok_or_else(|| {
                    Error::parse(path, line_no, "probability row before the grades line")
                })?;
                if fields.len() != 3 {
                    return Err(Error::parse(path, line_no, "expected i,j,prob"));
                }
                let parse_idx = |v: &str| -> Result<usize> {
                    let i: usize = v.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("cannot parse index {v:?}"))
                    })?;
                    if i == 0 || i > g.len() {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("index {i} outside 1..={}", g.len()),
                        ));
                    }
                    Ok(i - 1)
                };
                let i = parse_idx(fields[0])?;
                let j = parse_idx(fields[1])?;
                if seen[i][j] {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("duplicate entry for ({},{})", i + 1, j + 1),
                    ));
                }
                seen[i][j] = true;
                probs[i][j] = parse_f(fields[2])?;
            }
        }
    }
    let grades = grades.ok_or_else(|| Error::parse(path, 1, "missing grades line"))?;
    TransitionMatrix::new(grades, probs, horizon)
}

pub fn read_transition_csv(path: &Path) -> Result<TransitionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transition_csv(&text, path)
}

/// A saved copy of the state at one time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: MediaState,
}

/// Everything a scenario run produces.
#[derive(Debug)]
pub struct SimulationOutcome {
    pub snapshots: Vec<Snapshot>,
    pub trajectory: MarketTrajectory,
    /// Per order, at t = 0 and at the end.
    pub initial_mass: Vec<f64>,
    pub final_mass: Vec<f64>,
    pub steps: usize,
}

fn build_initial_state(s: &Scenario) -> Result<MediaState> {
    let grid = MediaGrid::new(s.w, s.cells)?;
    let mut state = MediaState::zeros(grid, s.orders);
    let shape: Vec<f64> = match &s.init {
        InitField::Uniform { .. } => vec![1.0; grid.total_cells()],
        InitField::Gaussian { center, width, .. } => (0..grid.total_cells())
            .map(|idx| {
                let coords = grid.cell_coords(idx);
                let r2: f64 = coords
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                (-r2 / (2.0 * width * width)).exp()
            })
            .collect(),
    };
    let mass = match &s.init {
        InitField::Uniform { mass } | InitField::Gaussian { mass, .. } => *mass,
    };
    let mut raw = KahanSum::new();
    for &v in &shape {
        raw.add(v);
    }
    let total = raw.value() * grid.cell_volume();
    if total <= 0.0 {
        return Err(Error::InvalidConfig(
            "initial field has no mass on this grid; widen it or move its center".into(),
        ));
    }
    let scale = mass / total;
    for field in &mut state.fields {
        field.c = shape.iter().map(|&v| v * scale).collect();
        for (axis, p_comp) in field.p.iter_mut().enumerate() {
            if let Some(&v) = s.flow_velocity.get(axis) {
                *p_comp = field.c.iter().map(|&c| v * c).collect();
            }
        }
    }
    Ok(state)
}

fn install_velocity(
    state: &mut MediaState,
    spec: &VelocitySpec,
    transition: Option<&TransitionMatrix>,
) -> Result<VelocityMode> {
    match spec {
        VelocitySpec::Zero => Ok(VelocityMode::Prescribed),
        VelocitySpec::Constant(v) => {
            let v = v.clone();
            set_velocity_profile(state, move |axis, _| v[axis]);
            Ok(VelocityMode::Prescribed)
        }
        VelocitySpec::Transition { csv } => {
            let matrix = transition.ok_or_else(|| {
                Error::InvalidConfig(format!("transition matrix {csv:?} was not loaded"))
            })?;
            let matrix = matrix.clone();
            set_velocity_profile(state, move |_, x| matrix.velocity_at(x));
            Ok(VelocityMode::Prescribed)
        }
        VelocitySpec::SelfConsistent => Ok(VelocityMode::SelfConsistent),
    }
}

fn build_sources(s: &Scenario, state: &MediaState) -> Sources {
    let f = match s.source {
        SourcePreset::Zero => Source::Zero,
        SourcePreset::Constant(v) => Source::Constant(v),
        // All orders share one relaxation target; order 0's initial field is
        // every order's initial field by construction.
        SourcePreset::Relax(rate) => Source::Relax {
            rate,
            target: state.fields[0].c.clone(),
        },
    };
    let g = (0..s.w)
        .map(|axis| match s.flow_source.get(axis) {
            None | Some(&0.0) => Source::Zero,
            Some(&v) => Source::Constant(v),
        })
        .collect();
    Sources { f, g }
}

fn trajectory_point(state: &MediaState) -> TrajectoryPoint {
    let orders = state.fields.len();
    let c_total = (0..orders).map(|mi| state.total_mass(mi)).collect();
    let p_total = (0..orders).map(|mi| state.total_flow(mi)).collect();
    let risk: Result<Vec<Vec<f64>>> = (0..orders).map(|mi| mean_risk(state, mi)).collect();
    TrajectoryPoint {
        t: state.time,
        c_total,
        p_total,
        mean_risk: risk.ok(),
    }
}

/// Runs a scenario to `t_end`, recording snapshots at the configured
/// cadence. `transition` must carry the loaded matrix when the scenario's
/// velocity mode references one.
pub fn run_scenario(
    s: &Scenario,
    transition: Option<&TransitionMatrix>,
) -> Result<SimulationOutcome> {
    let mut state = build_initial_state(s)?;
    let mode = install_velocity(&mut state, &s.velocity, transition)?;
    let sources = build_sources(s, &state);
    let orders = s.orders;
    let initial_mass: Vec<f64> = (0..orders).map(|mi| state.total_mass(mi)).collect();

    let dt = if s.dt > 0.0 {
        s.dt
    } else {
        let stable = max_stable_dt(&state, s.cfl_max);
        let fallback = if s.t_end > 0.0 { s.t_end / 100.0 } else { 1.0 };
        if stable.is_finite() {
            stable.min(fallback.max(stable / 1e6))
        } else {
            fallback
        }
    };

    let mut snapshots = vec![Snapshot { t: 0.0, state: state.clone() }];
    let mut trajectory = MarketTrajectory {
        points: vec![trajectory_point(&state)],
    };
    let mut steps = 0usize;
    while state.time < s.t_end {
        let h = (s.t_end - state.time).min(dt);
        let cfg = StepConfig {
            dt: h,
            cfl_max: s.cfl_max,
            velocity: mode.clone(),
        };
        step(&mut state, &sources, &cfg)?;
        steps += 1;
        let due = s.snapshot_every > 0 && steps.is_multiple_of(s.snapshot_every);
        if due || state.time >= s.t_end {
            snapshots.push(Snapshot { t: state.time, state: state.clone() });
            trajectory.points.push(trajectory_point(&state));
        }
    }
    let final_mass = (0..orders).map(|mi| state.total_mass(mi)).collect();
    Ok(SimulationOutcome {
        snapshots,
        trajectory,
        initial_mass,
        final_mass,
        steps,
    })
}

fn join_axes(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join("/")
}

/// Snapshot rows: `t,cell_index,x,m,C_sigma,P,v`. Multi-axis coordinates and
/// components are joined with `/`.
#[must_use]
pub fn render_snapshot_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from("t,cell_index,x,m,C_sigma,P,v\n");
    for snap in snapshots {
        let grid = snap.state.grid;
        for (mi, field) in snap.state.fields.iter().enumerate() {
            for idx in 0..grid.total_cells() {
                let coords = grid.cell_coords(idx);
                let p: Vec<f64> = field.p.iter().map(|c| c[idx]).collect();
                let v: Vec<f64> = field.v.iter().map(|c| c[idx]).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    snap.t,
                    idx,
                    join_axes(&coords),
                    mi + 1,
                    field.c[idx],
                    join_axes(&p),
                    join_axes(&v),
                );
            }
        }
    }
    out
}

pub fn write_snapshot_csv(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    crate::trade_data::write_atomic(path, render_snapshot_csv(snapshots).as_bytes())
}

/// Trajectory rows: `t,m,C_total,P_total,X_mean`; the centroid column is
/// empty while the field carries no mass.
#[must_use]
pub fn render_trajectory_csv(trajectory: &MarketTrajectory) -> String {
    let mut out = String::from("t,m,C_total,P_total,X_mean\n");
    for point in &trajectory.points {
        for (mi, c) in point.c_total.iter().enumerate() {
            let p = join_axes(&point.p_total[mi]);
            let x = point
                .mean_risk
                .as_ref()
                .map_or_else(String::new, |r| join_axes(&r[mi]));
            let _ = writeln!(out, "{},{},{},{},{}", point.t, mi + 1, c, p, x);
        }
    }
    out
}

pub fn write_trajectory_csv(path: &Path, trajectory: &MarketTrajectory) -> Result<()> {
    crate::trade_data::write_atomic(path, render_trajectory_csv(trajectory).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_round_trip() {
        let s = parse_scenario("").unwrap();
        assert_eq!(s, Scenario::default());
        let s = parse_scenario(
            "# advected bump\nw = 1\ncells = 128\nvelocity = constant\nvelocity_value = 0.2\n\
             init_center = 0.25\nt_end = 0.5\n",
        )
        .unwrap();
        assert_eq!(s.cells, 128);
        assert_eq!(s.velocity, VelocitySpec::Constant(vec![0.2]));
        match s.init {
            InitField::Gaussian { ref center, .. } => assert_eq!(center, &[0.25]),
            ref other => panic!("unexpected init {other:?}"),
        }
    }

    #[test]
    fn scenario_rejects_unknown_and_malformed() {
        assert!(matches!(
            parse_scenario("cell_count = 10\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("cells\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("velocity = warp\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("w = 2\nvelocity = transition\ntransition_csv = t.csv\n"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            parse_scenario("velocity = self_consistent\n"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn transition_csv_round_trip() {
        let text = "grades,0.0,1.0\nhorizon,2.0\n1,1,0.9\n1,2,0.1\n2,1,0.2\n2,2,0.8\n";
        let m = parse_transition_csv(text, Path::new("t.csv")).unwrap();
        assert_eq!(m.grades(), &[0.0, 1.0]);
        assert_eq!(m.horizon(), 2.0);
        let v = m.velocities();
        assert!((v[0] - 0.05).abs() < 1e-15);
        assert!((v[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn transition_csv_errors_carry_line_numbers() {
        let bad_sum = "grades,0.0,1.0\n1,1,0.9\n2,2,1.0\n";
        assert!(matches!(
            parse_transition_csv(bad_sum, Path::new("t.csv")),
            Err(Error::NonStochasticRow { row: 0, .. })
        ));
        let err = parse_transition_csv("1,1,1.0\n", Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_transition_csv(
            "grades,0.0,1.0\n1,3,1.0\n",
            Path::new("t.csv"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let dup = "grades,0.0,1.0\n1,1,0.5\n1,1,0.5\n";
        assert!(parse_transition_csv(dup, Path::new("t.csv")).is_err());
    }

    #[test]
    fn run_scenario_conserves_closed_mass() {
        let s = parse_scenario(
            "cells = 200\nvelocity = constant\nvelocity_value = 0.1\nt_end = 1.0\n\
             init_mass = 2.0\nsnapshot_every = 50\n",
        )
        .unwrap();
        let out = run_scenario(&s, None).unwrap();
        assert!((out.initial_mass[0] - 2.0).abs() < 1e-12, "normalized init mass");
        let drift = (out.final_mass[0] - out.initial_mass[0]).abs() / out.initial_mass[0];
        assert!(drift < 1e-12);
        assert!(out.snapshots.len() > 2);
        assert_eq!(out.snapshots.first().unwrap().t, 0.0);
        let last = out.trajectory.points.last().unwrap();
        assert!(last.mean_risk.is_some());
    }

    #[test]
    fn run_scenario_with_transition_velocity() {
        let matrix = parse_transition_csv(
            "grades,0.0,1.0\n1,1,0.5\n1,2,0.5\n2,1,0.5\n2,2,0.5\n",
            Path::new("t.csv"),
        )
        .unwrap();
        let s = parse_scenario(
            "cells = 100\nvelocity = transition\ntransition_csv = t.csv\nt_end = 0.5\n\
             init_center = 0.2\n",
        )
        .unwrap();
        let out = run_scenario(&s, Some(&matrix)).unwrap();
        // The symmetric matrix drifts edge mass toward the middle.
        let x0 = out.trajectory.points.first().unwrap().mean_risk.as_ref().unwrap()[0][0];
        let x1 = out.trajectory.points.last().unwrap().mean_risk.as_ref().unwrap()[0][0];
        assert!(x1 > x0, "centroid moved right: {x0} -> {x1}");
        // Missing matrix is a config error.
        assert!(run_scenario(&s, None).is_err());
    }

    #[test]
    fn snapshot_and_trajectory_csv_layout() {
        let s = parse_scenario("cells = 4\ncells = 8\nt_end = 0.0\n").unwrap();
        assert_eq!(s.cells, 8, "later keys win");
        let out = run_scenario(&s, None).unwrap();
        let snap = render_snapshot_csv(&out.snapshots);
        let mut lines = snap.lines();
        assert_eq!(lines.next(), Some("t,cell_index,x,m,C_sigma,P,v"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,0,0.0625,1,"), "line {first:?}");
        let traj = render_trajectory_csv(&out.trajectory);
        assert!(traj.starts_with("t,m,C_total,P_total,X_mean\n"));
        assert_eq!(traj.lines().count(), 2, "header plus the single t=0 point");
    }

    #[test]
    fn two_axis_snapshot_joins_components() {
        let s = parse_scenario(
            "w = 2\ncells = 4\nvelocity = constant\nvelocity_value = 0.1\n\
             velocity_value_y = 0.05\nflow_init = proportional\nt_end = 0.0\n",
        )
        .unwrap();
        let out = run_scenario(&s, None).unwrap();
        let snap = render_snapshot_csv(&out.snapshots);
        let first = snap.lines().nth(1).unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[2], "0.125/0.125");
        assert!(fields[5].contains('/'), "flow components joined: {first:?}");
        assert!(fields[6].contains('/'), "velocity components joined: {first:?}");
    }

    #[test]
    fn constant_source_scenario_grows_mass() {
        // Dyadic dt: times accumulate exactly, so the step count is exact.
        let s = parse_scenario(
            "cells = 50\nsource = constant\nsource_value = 0.3\nt_end = 1.0\ndt = 0.0078125\n",
        )
        .unwrap();
        let out = run_scenario(&s, None).unwrap();
        assert!((out.final_mass[0] - (1.0 + 0.3)).abs() < 1e-12);
        assert_eq!(out.steps, 128);
    }

    #[test]
    fn relax_source_holds_initial_field() {
        // Relaxation toward the initial field with zero velocity is a fixed
        // point of the dynamics.
        let s = parse_scenario(
            "cells = 40\nsource = relax\nsource_rate = 2.0\nt_end = 0.5\ndt = 0.005\n",
        )
        .unwrap();
        let out = run_scenario(&s, None).unwrap();
        let a = &out.snapshots.first().unwrap().state.fields[0].c;
        let b = &out.snapshots.last().unwrap().state.fields[0].c;
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
