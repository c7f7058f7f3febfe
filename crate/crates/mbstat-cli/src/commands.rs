//! The six subcommands. Each resolves its settings through the config
//! overlay, does the work through the library, writes its outputs, and
//! drops a `.meta.json` sidecar beside the main one.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::json;

use mbstat::econ_media::{
    parse_scenario, read_transition_csv, run_scenario, write_snapshot_csv, write_trajectory_csv,
    VelocitySpec,
};
use mbstat::moments::{series_moments, MomentScaling, WindowConfig};
use mbstat::prob_approx::{
    charfn_to_density, cumulants_to_moments, density_moments, density_metadata,
    moments_to_cumulants, write_density_csv, CharFnApprox, DensityGridSpec, InversionConfig,
};
use mbstat::risk_domain::{aggregate_all, write_aggregate_csv, AggregateConfig, RiskCellGrid};
use mbstat::trade_data::{
    generate_synthetic, read_risk_csv, read_tick_csv, write_risk_csv, write_tick_csv,
    DenseSeries, PriceModel, SynthSpec, ValidationOptions, VolumeModel,
};
use mbstat::{Error, Result};

use crate::config::{write_meta, Overlay};

#[derive(Args)]
pub struct SynthArgs {
    /// Tick CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Risk-vector CSV to write alongside the ticks.
    #[arg(long, value_name = "FILE")]
    pub risk_out: Option<PathBuf>,
    #[arg(long)]
    pub companies: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub price_start: Option<f64>,
    #[arg(long)]
    pub price_drift: Option<f64>,
    #[arg(long)]
    pub price_vol: Option<f64>,
    #[arg(long)]
    pub volume_mean: Option<f64>,
    #[arg(long)]
    pub volume_sigma: Option<f64>,
    #[arg(long)]
    pub risk_orders: Option<usize>,
    #[arg(long)]
    pub risk_axes: Option<usize>,
}

pub fn synth(args: &SynthArgs, overlay: &Overlay) -> Result<()> {
    let spec = SynthSpec {
        companies: overlay.resolve("companies", args.companies, 1)?,
        steps: overlay.resolve("steps", args.steps, 256)?,
        price: PriceModel {
            initial: overlay.resolve("price_start", args.price_start, 100.0)?,
            drift: overlay.resolve("price_drift", args.price_drift, 0.0)?,
            volatility: overlay.resolve("price_vol", args.price_vol, 0.02)?,
        },
        volume: VolumeModel {
            mean: overlay.resolve("volume_mean", args.volume_mean, 1000.0)?,
            sigma: overlay.resolve("volume_sigma", args.volume_sigma, 0.3)?,
        },
        risk_orders: overlay.resolve("risk_orders", args.risk_orders, 2)?,
        risk_axes: overlay.resolve("risk_axes", args.risk_axes, 1)?,
    };
    let seed = overlay.resolve("seed", args.seed, 42)?;
    let (series, risks) = generate_synthetic(&spec, seed)?;
    write_tick_csv(&args.out, &series)?;
    if let Some(risk_out) = &args.risk_out {
        write_risk_csv(risk_out, &risks)?;
    }
    write_meta(
        &args.out,
        &json!({
            "command": "synth",
            "outputs": {
                "ticks": args.out,
                "risks": args.risk_out,
            },
            "config": {
                "companies": spec.companies,
                "steps": spec.steps,
                "seed": seed,
                "price_start": spec.price.initial,
                "price_drift": spec.price.drift,
                "price_vol": spec.price.volatility,
                "volume_mean": spec.volume.mean,
                "volume_sigma": spec.volume.sigma,
                "risk_orders": spec.risk_orders,
                "risk_axes": spec.risk_axes,
            },
            "summary": {
                "ticks": series.ticks().len(),
                "companies": spec.companies,
            },
        }),
    )?;
    println!(
        "synth: wrote {} ticks for {} companies to {}",
        series.ticks().len(),
        spec.companies,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScalingArg {
    /// Raw power sums; overflowing orders are rejected.
    Raw,
    /// Mean-relative accumulation, rescaled afterwards.
    WindowMean,
}

impl From<ScalingArg> for MomentScaling {
    fn from(v: ScalingArg) -> Self {
        match v {
            ScalingArg::Raw => MomentScaling::Raw,
            ScalingArg::WindowMean => MomentScaling::WindowMean,
        }
    }
}

fn resolve_scaling(overlay: &Overlay, flag: Option<ScalingArg>) -> Result<MomentScaling> {
    let raw: Option<String> = overlay.resolve_opt("scaling", flag.map(|s| match s {
        ScalingArg::Raw => "raw".to_string(),
        ScalingArg::WindowMean => "window-mean".to_string(),
    }))?;
    match raw.as_deref() {
        None | Some("raw") => Ok(MomentScaling::Raw),
        Some("window-mean") => Ok(MomentScaling::WindowMean),
        Some(other) => Err(Error::InvalidConfig(format!(
            "scaling must be raw or window-mean, got {other:?}"
        ))),
    }
}

#[derive(Args)]
pub struct MomentsArgs {
    /// Tick CSV to read.
    #[arg(long, value_name = "FILE")]
    pub ticks: PathBuf,
    /// Moment CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Ticks per window, N.
    #[arg(long)]
    pub window: Option<usize>,
    /// Highest moment order.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Return shift in steps.
    #[arg(long)]
    pub xi: Option<u64>,
    /// Slide windows by this many steps instead of tiling.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum)]
    pub scaling: Option<ScalingArg>,
    /// Accept zero-volume ticks (forward-filled quiet steps).
    #[arg(long)]
    pub allow_zero_volume: bool,
}

pub fn moments(args: &MomentsArgs, overlay: &Overlay) -> Result<()> {
    let cfg = WindowConfig {
        window_len: overlay.resolve("window", args.window, 64)?,
        n_max: overlay.resolve("n_max", args.n_max, 4)?,
        xi_steps: overlay.resolve("xi", args.xi, 0)?,
        stride: overlay.resolve_opt("stride", args.stride)?,
        scaling: resolve_scaling(overlay, args.scaling)?,
    };
    let allow_zero = args.allow_zero_volume
        || overlay.resolve("allow_zero_volume", None::<bool>, false)?;
    let series = read_tick_csv(&args.ticks)?;
    let dense = DenseSeries::from_series_with(
        &series,
        ValidationOptions { allow_zero_volume: allow_zero },
    )?;
    let sets = series_moments(&dense, &cfg)?;
    mbstat::moments::write_moment_csv(&args.out, &sets)?;
    let windows = sets.len() / dense.company_count().max(1);
    write_meta(
        &args.out,
        &json!({
            "command": "moments",
            "inputs": { "ticks": args.ticks },
            "outputs": { "moments": args.out },
            "config": {
                "window": cfg.window_len,
                "n_max": cfg.n_max,
                "xi": cfg.xi_steps,
                "stride": cfg.stride,
                "scaling": match cfg.scaling {
                    MomentScaling::Raw => "raw",
                    MomentScaling::WindowMean => "window-mean",
                },
                "allow_zero_volume": allow_zero,
            },
            "summary": {
                "companies": dense.company_count(),
                "windows_per_company": windows,
                "series_len": dense.len(),
            },
        }),
    )?;
    println!(
        "moments: {} companies, {} windows each, orders 1..={} to {}",
        dense.company_count(),
        windows,
        cfg.n_max,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct AggregateArgs {
    /// Tick CSV to read.
    #[arg(long, value_name = "FILE")]
    pub ticks: PathBuf,
    /// Risk-vector CSV locating each company in the unit cube.
    #[arg(long, value_name = "FILE")]
    pub risk: PathBuf,
    /// Aggregate CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Risk-cell side length d.
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Ticks per company-level window, N.
    #[arg(long)]
    pub window: Option<usize>,
    /// Cell windows span k_x company windows.
    #[arg(long)]
    pub k_x: Option<usize>,
    /// Market windows span k_m cell windows.
    #[arg(long)]
    pub k_m: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub xi: Option<u64>,
    /// Largest tolerated relative deviation of the portfolio-return oracle.
    #[arg(long)]
    pub markowitz_tol: Option<f64>,
    #[arg(long)]
    pub allow_zero_volume: bool,
}

pub fn aggregate(args: &AggregateArgs, overlay: &Overlay) -> Result<()> {
    let cfg = AggregateConfig {
        window_len: overlay.resolve("window", args.window, 16)?,
        k_x: overlay.resolve("k_x", args.k_x, 4)?,
        k_m: overlay.resolve("k_m", args.k_m, 4)?,
        n_max: overlay.resolve("n_max", args.n_max, 4)?,
        xi_steps: overlay.resolve("xi", args.xi, 0)?,
    };
    let cell_size = overlay.resolve("cell_size", args.cell_size, 0.5)?;
    let tol: f64 = overlay.resolve("markowitz_tol", args.markowitz_tol, 1e-9)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "markowitz_tol must be positive and finite, got {tol}"
        )));
    }
    let allow_zero = args.allow_zero_volume
        || overlay.resolve("allow_zero_volume", None::<bool>, false)?;
    let series = read_tick_csv(&args.ticks)?;
    let dense = DenseSeries::from_series_with(
        &series,
        ValidationOptions { allow_zero_volume: allow_zero },
    )?;
    let risks = read_risk_csv(&args.risk)?;
    let grid = RiskCellGrid::build(&risks, cell_size)?;
    let table = aggregate_all(&dense, &grid, &cfg)?;
    write_aggregate_csv(&args.out, &table)?;
    let max_dev = table
        .cells
        .iter()
        .filter_map(|c| c.markowitz.as_ref())
        .map(|m| m.relative_deviation)
        .fold(0.0f64, f64::max);
    write_meta(
        &args.out,
        &json!({
            "command": "aggregate",
            "inputs": { "ticks": args.ticks, "risk": args.risk },
            "outputs": { "aggregate": args.out },
            "config": {
                "cell_size": cell_size,
                "window": cfg.window_len,
                "k_x": cfg.k_x,
                "k_m": cfg.k_m,
                "n_max": cfg.n_max,
                "xi": cfg.xi_steps,
                "markowitz_tol": tol,
                "allow_zero_volume": allow_zero,
            },
            "summary": {
                "cell_rows": table.cells.len(),
                "market_rows": table.market.len(),
                "max_markowitz_deviation": max_dev,
            },
        }),
    )?;
    println!(
        "aggregate: {} cell rows, {} market rows, max portfolio-return deviation {max_dev:.3e} to {}",
        table.cells.len(),
        table.market.len(),
        args.out.display()
    );
    if max_dev > tol {
        return Err(Error::ConsistencyCheck {
            what: "portfolio-return oracle versus collective return",
            relative: max_dev,
        });
    }
    Ok(())
}

#[derive(Args)]
pub struct DensityArgs {
    /// Density CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Raw moments mu_1..mu_n, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "cumulants")]
    pub moments: Option<Vec<f64>>,
    /// Cumulants a_1..a_n, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cumulants: Option<Vec<f64>>,
    /// Truncation order n; defaults to the list length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Regularizer strength; defaults to a variance-scaled value.
    #[arg(long)]
    pub b: Option<f64>,
    /// Regularizer exponent 2k (even, > n).
    #[arg(long)]
    pub two_k: Option<usize>,
    /// Half width of the output grid in standard deviations.
    #[arg(long)]
    pub span_sigmas: Option<f64>,
    /// Output grid points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Quadrature points for the inversion integral.
    #[arg(long)]
    pub quad_points: Option<usize>,
    /// Largest tolerated integral of negative density.
    #[arg(long)]
    pub negativity_budget: Option<f64>,
    /// Integrate moments back out of the density and report the errors.
    #[arg(long)]
    pub verify_moments: bool,
}

pub fn density(args: &DensityArgs, overlay: &Overlay) -> Result<()> {
    let mut cumulants = match (&args.moments, &args.cumulants) {
        (Some(m), None) => moments_to_cumulants(m),
        (None, Some(a)) => a.clone(),
        (None, None) => {
            return Err(Error::InvalidConfig(
                "density needs --moments or --cumulants".into(),
            ));
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(n) = overlay.resolve_opt("n", args.n)? {
        if n == 0 || n > cumulants.len() {
            return Err(Error::InvalidConfig(format!(
                "n = {n} outside 1..={} supplied orders",
                cumulants.len()
            )));
        }
        cumulants.truncate(n);
    }
    let approx = match (
        overlay.resolve_opt("b", args.b)?,
        overlay.resolve_opt("two_k", args.two_k)?,
    ) {
        (None, None) => CharFnApprox::with_default_regularizer(cumulants)?,
        (b, two_k) => {
            let fallback = CharFnApprox::with_default_regularizer(cumulants.clone())?;
            let (auto_b, auto_two_k) = fallback.regularizer();
            CharFnApprox::new(cumulants, b.unwrap_or(auto_b), two_k.unwrap_or(auto_two_k))?
        }
    };
    let span = overlay.resolve("span_sigmas", args.span_sigmas, 8.0)?;
    let points = overlay.resolve("points", args.points, 1025)?;
    let grid_spec = DensityGridSpec::around(&approx, span, points)?;
    let inv_cfg = InversionConfig {
        quad_points: overlay.resolve("quad_points", args.quad_points, InversionConfig::default().quad_points)?,
        negativity_budget: overlay.resolve(
            "negativity_budget",
            args.negativity_budget,
            InversionConfig::default().negativity_budget,
        )?,
        ..InversionConfig::default()
    };
    let grid = charfn_to_density(&approx, &grid_spec, &inv_cfg)?;
    write_density_csv(&args.out, &grid)?;
    let roundtrip = if args.verify_moments {
        let target = cumulants_to_moments(approx.cumulants());
        let recovered = density_moments(&grid, approx.order());
        Some(
            target
                .iter()
                .zip(&recovered)
                .map(|(t, r)| mbstat::numeric::relative_deviation(*t, *r))
                .collect::<Vec<f64>>(),
        )
    } else {
        None
    };
    let mut meta = json!({
        "command": "density",
        "outputs": { "density": args.out },
    });
    meta["summary"] = density_metadata(&approx, &grid, roundtrip.as_deref());
    write_meta(&args.out, &meta)?;
    let (peak_p, peak_eta) = grid
        .p
        .iter()
        .zip(&grid.eta)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(p, e)| (*p, *e))
        .unwrap_or((f64::NAN, f64::NAN));
    println!(
        "density: {} points on [{:.6}, {:.6}], peak {peak_eta:.6} at p = {peak_p:.6}, \
         mass residual {:.3e} to {}",
        grid.p.len(),
        grid_spec.min,
        grid_spec.max,
        grid.normalization_residual,
        args.out.display()
    );
    if let Some(errors) = &roundtrip {
        for (m, err) in errors.iter().enumerate() {
            println!("density: moment {} round-trip relative error {err:.3e}", m + 1);
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct MediaArgs {
    /// Scenario file (key = value).
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Field snapshot CSV to write.
    #[arg(long, value_name = "FILE")]
    pub snapshots: Option<PathBuf>,
    /// Market trajectory CSV to write.
    #[arg(long, value_name = "FILE")]
    pub trajectory: Option<PathBuf>,
}

pub fn media(args: &MediaArgs) -> Result<()> {
    if args.snapshots.is_none() && args.trajectory.is_none() {
        return Err(Error::InvalidConfig(
            "media needs --snapshots or --trajectory (or both)".into(),
        ));
    }
    let text =
        std::fs::read_to_string(&args.scenario).map_err(|e| Error::io(&args.scenario, e))?;
    let scenario = parse_scenario(&text)?;
    // Transition CSVs resolve relative to the scenario file.
    let transition = match &scenario.velocity {
        VelocitySpec::Transition { csv } => {
            let base = args.scenario.parent().unwrap_or(Path::new("."));
            Some(read_transition_csv(&base.join(csv))?)
        }
        _ => None,
    };
    let outcome = run_scenario(&scenario, transition.as_ref())?;
    if let Some(path) = &args.snapshots {
        write_snapshot_csv(path, &outcome.snapshots)?;
    }
    if let Some(path) = &args.trajectory {
        write_trajectory_csv(path, &outcome.trajectory)?;
    }
    let drift: Vec<f64> = outcome
        .initial_mass
        .iter()
        .zip(&outcome.final_mass)
        .map(|(a, b)| mbstat::numeric::relative_deviation(*a, *b))
        .collect();
    let main_out = args.trajectory.as_ref().or(args.snapshots.as_ref()).unwrap();
    write_meta(
        main_out,
        &json!({
            "command": "media",
            "inputs": { "scenario": args.scenario },
            "outputs": { "snapshots": args.snapshots, "trajectory": args.trajectory },
            "summary": {
                "steps": outcome.steps,
                "snapshots": outcome.snapshots.len(),
                "initial_mass": outcome.initial_mass,
                "final_mass": outcome.final_mass,
                "relative_mass_drift": drift,
            },
        }),
    )?;
    println!(
        "media: {} steps, {} snapshots, relative mass drift {:.3e}",
        outcome.steps,
        outcome.snapshots.len(),
        drift.iter().fold(0.0f64, |a, &d| a.max(d))
    );
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Files or directories to scan for .meta.json sidecars.
    #[arg(value_name = "PATH", required = true)]
    pub paths: Vec<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut files = Vec::new();
    for path in &args.paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.ends_with(".meta.json"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidConfig("no .meta.json files found".into()));
    }
    let mut entries = Vec::new();
    for file in &files {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            Error::parse(file, e.line() as u64, format!("invalid sidecar JSON: {e}"))
        })?;
        entries.push(json!({ "path": file, "meta": meta }));
    }
    let report = serde_json::Value::Array(entries);
    let text = serde_json::to_string_pretty(&report).expect("report is valid json") + "\n";
    match &args.out {
        Some(out) => {
            mbstat::trade_data::write_atomic(out, text.as_bytes())?;
            println!("report: {} runs to {}", files.len(), out.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
