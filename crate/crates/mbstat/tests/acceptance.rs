//! The acceptance gate: one test per release criterion, each printing a
//! single PASS/FAIL line (run with `-- --nocapture` to see them on success).
//! Tolerances here are contractual; loosening one is a release decision,
//! not a test fix.

use std::time::Instant;

use mbstat::econ_media::{
    max_stable_dt, set_velocity_profile, step, MediaGrid, MediaState, Sources, StepConfig,
    TransitionMatrix, CFL_MAX,
};
use mbstat::moments::{render_moment_csv, series_moments, MomentScaling, WindowConfig};
use mbstat::numeric::relative_deviation;
use mbstat::prob_approx::{
    charfn_to_density, cumulants_to_moments, density_moments, gaussian_density,
    moments_to_cumulants, CharFnApprox, DensityGridSpec, InversionConfig,
};
use mbstat::risk_domain::{
    aggregate_all, collective_moments, market_moments, AggregateConfig, RiskCellGrid,
};
use mbstat::trade_data::{
    generate_synthetic, DenseSeries, PriceModel, RiskVector, SynthSpec, TickRecord, TickSeries,
    VolumeModel,
};

fn criterion(n: u32, name: &str, check: impl FnOnce() -> Result<(), String>) {
    match check() {
        Ok(()) => println!("ACCEPTANCE {n} {name}: PASS"),
        Err(msg) => {
            println!("ACCEPTANCE {n} {name}: FAIL ({msg})");
            panic!("acceptance criterion {n} ({name}) failed: {msg}");
        }
    }
}

fn synth_series(seed: u64, steps: usize, companies: usize) -> (TickSeries, Vec<RiskVector>) {
    let spec = SynthSpec {
        companies,
        steps,
        price: PriceModel { initial: 100.0, drift: 0.0, volatility: 0.01 },
        volume: VolumeModel { mean: 1000.0, sigma: 0.3 },
        risk_orders: 4,
        risk_axes: 1,
    };
    generate_synthetic(&spec, seed).expect("synthesis")
}

/// Three ticks, one company: (price, volume) = (2,1), (3,2), (4,1).
fn fixture_series() -> DenseSeries {
    let ticks = vec![
        TickRecord::new(0, "A", 2.0, 1.0),
        TickRecord::new(1, "A", 3.0, 2.0),
        TickRecord::new(2, "A", 4.0, 1.0),
    ];
    DenseSeries::from_series(&TickSeries::from_records(ticks)).unwrap()
}

const FIXTURE_CUMULANTS: [f64; 3] = [3.0, 1.0 / 3.0, -1.2];

#[test]
fn acceptance_01_moment_identities() {
    criterion(1, "moment identities", || {
        for seed in 0..100u64 {
            let n = [8usize, 64, 512][(seed % 3) as usize];
            let (series, _) = synth_series(seed, 2 * n, 1);
            let dense = DenseSeries::from_series(&series).map_err(|e| e.to_string())?;
            let cfg = WindowConfig {
                window_len: n,
                n_max: 4,
                xi_steps: n as u64,
                stride: None,
                scaling: MomentScaling::Raw,
            };
            for set in series_moments(&dense, &cfg).map_err(|e| e.to_string())? {
                for m in 0..4 {
                    let dev = relative_deviation(set.value[m], set.price[m] * set.volume[m]);
                    if dev > 1e-9 {
                        return Err(format!("value vs price*volume off by {dev:e} (seed {seed}, m {})", m + 1));
                    }
                    if let (Some(ret), Some(past)) = (&set.ret, &set.past_value) {
                        let dev = relative_deviation(set.value[m], ret[m] * past[m]);
                        if dev > 1e-9 {
                            return Err(format!("value vs return*past off by {dev:e} (seed {seed}, m {})", m + 1));
                        }
                    }
                }
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_02_vwap_equality() {
    criterion(2, "volume weighted average price", || {
        // The fixture first, then randomized series against an independent
        // plain-summation oracle.
        let cfg = WindowConfig::block(3, 1, 0);
        let sets = series_moments(&fixture_series(), &cfg).map_err(|e| e.to_string())?;
        if (sets[0].price[0] - 3.0).abs() > 1e-12 {
            return Err(format!("fixture vwap {} != 3", sets[0].price[0]));
        }
        for seed in 0..20u64 {
            let (series, _) = synth_series(seed, 32, 1);
            let dense = DenseSeries::from_series(&series).map_err(|e| e.to_string())?;
            let cfg = WindowConfig::block(8, 1, 0);
            for set in series_moments(&dense, &cfg).map_err(|e| e.to_string())? {
                let track = dense.track(&set.company).unwrap();
                let start = set.start_step as usize;
                let mut value = 0.0;
                let mut volume = 0.0;
                for i in start..start + 8 {
                    value += track.prices[i] * track.volumes[i];
                    volume += track.volumes[i];
                }
                let dev = relative_deviation(set.price[0], value / volume);
                if dev > 1e-12 {
                    return Err(format!("vwap off by {dev:e} (seed {seed})"));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_03_market_vs_frequency_price() {
    criterion(3, "market-based vs frequency-based price", || {
        let cfg = WindowConfig::block(3, 2, 0);
        let sets = series_moments(&fixture_series(), &cfg).map_err(|e| e.to_string())?;
        let p2 = sets[0].price[1];
        let pi2 = sets[0].freq_price[1];
        if (p2 - 28.0 / 3.0).abs() > 1e-12 {
            return Err(format!("p(;2) = {p2}, expected 28/3"));
        }
        if (pi2 - 29.0 / 3.0).abs() > 1e-12 {
            return Err(format!("pi(;2) = {pi2}, expected 29/3"));
        }
        // Unit volumes collapse the two families for m <= 4.
        let ticks: Vec<TickRecord> = (0..12)
            .map(|i| TickRecord::new(i, "A", 2.0 + 0.25 * i as f64, 1.0))
            .collect();
        let dense = DenseSeries::from_series(&TickSeries::from_records(ticks)).unwrap();
        let cfg = WindowConfig::block(12, 4, 0);
        for set in series_moments(&dense, &cfg).map_err(|e| e.to_string())? {
            for m in 0..4 {
                let dev = relative_deviation(set.price[m], set.freq_price[m]);
                if dev > 1e-12 {
                    return Err(format!("unit volume p vs pi off by {dev:e} at m {}", m + 1));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_04_markowitz_oracle() {
    criterion(4, "portfolio return oracle", || {
        let mut multi_member_cells = 0usize;
        for trial in 0..100u64 {
            let companies = 2 + (trial % 5) as usize;
            let (series, risks) = synth_series(1000 + trial, 8, companies);
            let dense = DenseSeries::from_series(&series).map_err(|e| e.to_string())?;
            let grid = RiskCellGrid::build(&risks, 0.5).map_err(|e| e.to_string())?;
            let cfg = AggregateConfig {
                window_len: 2,
                k_x: 2,
                k_m: 1,
                n_max: 1,
                xi_steps: 4,
            };
            let table = aggregate_all(&dense, &grid, &cfg).map_err(|e| e.to_string())?;
            let mut checked = 0usize;
            for cell in &table.cells {
                if let Some(check) = &cell.markowitz {
                    checked += 1;
                    if check.relative_deviation > 1e-12 {
                        return Err(format!(
                            "deviation {:e} in trial {trial}",
                            check.relative_deviation
                        ));
                    }
                }
            }
            if checked == 0 {
                return Err(format!("trial {trial} produced no return-eligible cells"));
            }
            for cell in grid.occupied_cells() {
                if grid.members(&cell, 1).len() > 1 {
                    multi_member_cells += 1;
                }
            }
        }
        if multi_member_cells < 50 {
            return Err(format!(
                "only {multi_member_cells} multi-company cells across trials; oracle undertested"
            ));
        }
        Ok(())
    });
}

#[test]
fn acceptance_05_partition_additivity() {
    criterion(5, "cell sums partition the market exactly", || {
        // Integer-valued ticks: every partial sum is exact in f64, so cell
        // totals must reproduce market totals bit for bit at any cell side.
        let mut ticks = Vec::new();
        let mut risks = Vec::new();
        let mut x = 7u64;
        for q in 0..9 {
            let name = format!("Q{q}");
            for step in 0..6u64 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let price = (1 + (x >> 33) % 5) as f64;
                let volume = (1 + (x >> 13) % 4) as f64;
                ticks.push(TickRecord::new(step, name.clone(), price, volume));
            }
            risks.push(RiskVector {
                company: name,
                coords: vec![vec![q as f64 / 9.0], vec![(8 - q) as f64 / 9.0]],
            });
        }
        let series = DenseSeries::from_series(&TickSeries::from_records(ticks)).unwrap();
        let cfg = AggregateConfig { window_len: 6, k_x: 1, k_m: 1, n_max: 2, xi_steps: 0 };
        for d in [1.0, 0.5, 0.1] {
            let grid = RiskCellGrid::build(&risks, d).map_err(|e| e.to_string())?;
            let market = market_moments(&series, &cfg, 0).map_err(|e| e.to_string())?;
            for m in 1..=2usize {
                let mut value = 0.0;
                let mut volume = 0.0;
                for cell in grid.occupied_cells() {
                    let cm = collective_moments(&series, &grid, &cell, &cfg, 0)
                        .map_err(|e| e.to_string())?;
                    value += cm.raw_value[m - 1];
                    volume += cm.raw_volume[m - 1];
                }
                if value != market.raw_value[m - 1] || volume != market.raw_volume[m - 1] {
                    return Err(format!("inexact partition at d {d}, m {m}"));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_06_cumulant_fixtures() {
    criterion(6, "cumulants of the three-tick fixture", || {
        let a = moments_to_cumulants(&[3.0, 28.0 / 3.0, 28.8]);
        if (a[1] - 1.0 / 3.0).abs() > 1e-12 {
            return Err(format!("a_2 = {}, expected 1/3", a[1]));
        }
        if (a[2] + 1.2).abs() > 1e-12 {
            return Err(format!("a_3 = {}, expected -1.2", a[2]));
        }
        Ok(())
    });
}

#[test]
fn acceptance_07_density_round_trip() {
    criterion(7, "density inversion round trip", || {
        // n = 2 against the closed-form Gaussian: the unregularized
        // characteristic function is exactly the Gaussian's, so the
        // quadrature must reproduce the analytic curve pointwise.
        let approx = CharFnApprox::new(vec![3.0, 1.0 / 3.0], 0.0, 4).map_err(|e| e.to_string())?;
        let spec = DensityGridSpec::around(&approx, 8.0, 513).map_err(|e| e.to_string())?;
        let grid = charfn_to_density(&approx, &spec, &InversionConfig::default())
            .map_err(|e| e.to_string())?;
        let exact = gaussian_density(3.0, 1.0 / 3.0, &spec).map_err(|e| e.to_string())?;
        for (i, (got, want)) in grid.eta.iter().zip(&exact).enumerate() {
            if (got - want).abs() > 1e-8 {
                return Err(format!(
                    "n=2 pointwise error {:e} at p = {}",
                    (got - want).abs(),
                    grid.p[i]
                ));
            }
        }
        // n = 3 with the fixture cumulants. The heavy skew (|Sk| ~ 6) makes
        // the truncated expansion oscillate far into the tails, so the grid
        // must reach them before the moment integrals settle.
        let approx =
            CharFnApprox::with_default_regularizer(FIXTURE_CUMULANTS.to_vec()).map_err(|e| e.to_string())?;
        let spec = DensityGridSpec::around(&approx, 40.0, 4097).map_err(|e| e.to_string())?;
        let cfg = InversionConfig { negativity_budget: 0.5, ..InversionConfig::default() };
        let grid = charfn_to_density(&approx, &spec, &cfg).map_err(|e| e.to_string())?;
        if grid.normalization_residual > 1e-6 {
            return Err(format!("n=3 mass residual {:e}", grid.normalization_residual));
        }
        let target = cumulants_to_moments(&FIXTURE_CUMULANTS);
        let recovered = density_moments(&grid, 3);
        for m in 0..3 {
            let dev = relative_deviation(recovered[m], target[m]);
            if dev > 1e-4 {
                return Err(format!("n=3 moment {} off by {dev:e}", m + 1));
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_08_regularizer_neutrality() {
    criterion(8, "regularizer neutrality", || {
        let recover = |b: Option<f64>, two_k: Option<usize>| -> Result<Vec<f64>, String> {
            let base = CharFnApprox::with_default_regularizer(FIXTURE_CUMULANTS.to_vec())
                .map_err(|e| e.to_string())?;
            let (b0, k0) = base.regularizer();
            let approx = CharFnApprox::new(
                FIXTURE_CUMULANTS.to_vec(),
                b.unwrap_or(b0),
                two_k.unwrap_or(k0),
            )
            .map_err(|e| e.to_string())?;
            let spec = DensityGridSpec::around(&approx, 40.0, 4097).map_err(|e| e.to_string())?;
            let cfg = InversionConfig { negativity_budget: 0.5, ..InversionConfig::default() };
            let grid = charfn_to_density(&approx, &spec, &cfg).map_err(|e| e.to_string())?;
            Ok(density_moments(&grid, 3))
        };
        let base = recover(None, None)?;
        let doubled_b = {
            let b0 = CharFnApprox::with_default_regularizer(FIXTURE_CUMULANTS.to_vec())
                .unwrap()
                .regularizer()
                .0;
            recover(Some(2.0 * b0), None)?
        };
        let raised_k = recover(None, Some(6))?;
        for m in 0..3 {
            let db = relative_deviation(base[m], doubled_b[m]);
            let dk = relative_deviation(base[m], raised_k[m]);
            if db > 1e-4 {
                return Err(format!("doubling b moved moment {} by {db:e}", m + 1));
            }
            if dk > 1e-4 {
                return Err(format!("raising 2k moved moment {} by {dk:e}", m + 1));
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_09_pde_conservation_and_order() {
    criterion(9, "transport conservation and first-order convergence", || {
        let start = Instant::now();
        let bump = |grid: &MediaGrid, center: f64| -> Vec<f64> {
            let width = 0.05;
            let norm = 1.0 / (width * (2.0 * std::f64::consts::PI).sqrt());
            (0..grid.total_cells())
                .map(|i| {
                    let x = grid.center(i);
                    norm * (-(x - center) * (x - center) / (2.0 * width * width)).exp()
                })
                .collect()
        };
        // Mass conservation over 10^3 full-CFL steps at 1024 cells.
        let grid = MediaGrid::new(1, 1024).map_err(|e| e.to_string())?;
        let mut state = MediaState::zeros(grid, 1);
        state.fields[0].c = bump(&grid, 0.3);
        set_velocity_profile(&mut state, |_, _| 0.1);
        let dt = max_stable_dt(&state, CFL_MAX);
        let sources = Sources::none(1);
        let m0 = state.total_mass(0);
        for _ in 0..1000 {
            step(&mut state, &sources, &StepConfig::prescribed(dt)).map_err(|e| e.to_string())?;
        }
        let drift = relative_deviation(state.total_mass(0), m0);
        if drift > 1e-8 {
            return Err(format!("mass drift {drift:e} over 1000 steps"));
        }
        // First-order convergence: L1 error against the translated bump
        // halves when the grid is refined from 512 to 1024 cells.
        let l1_error = |cells: usize| -> Result<f64, String> {
            let grid = MediaGrid::new(1, cells).map_err(|e| e.to_string())?;
            let mut state = MediaState::zeros(grid, 1);
            state.fields[0].c = bump(&grid, 0.3);
            set_velocity_profile(&mut state, |_, _| 0.1);
            let dt = max_stable_dt(&state, CFL_MAX);
            while state.time < 2.0 - 1e-12 {
                let h = dt.min(2.0 - state.time);
                step(&mut state, &sources, &StepConfig::prescribed(h)).map_err(|e| e.to_string())?;
            }
            let exact = bump(&grid, 0.5);
            Ok(state.fields[0]
                .c
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * grid.dx())
        };
        let coarse = l1_error(512)?;
        let fine = l1_error(1024)?;
        let ratio = coarse / fine;
        if !(1.6..=2.4).contains(&ratio) {
            return Err(format!("refinement ratio {ratio}, expected 2 +- 20%"));
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() > 10.0 {
            return Err(format!("runtime {elapsed:?} exceeds 10 s"));
        }
        Ok(())
    });
}

#[test]
fn acceptance_10_transition_velocities() {
    criterion(10, "transition velocity fixtures", || {
        let identity = TransitionMatrix::new(
            vec![0.2, 0.7],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1.0,
        )
        .map_err(|e| e.to_string())?;
        for v in identity.velocities() {
            if v.abs() > 1e-15 {
                return Err(format!("identity velocity {v}"));
            }
        }
        let symmetric = TransitionMatrix::new(
            vec![0.0, 1.0],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            1.0,
        )
        .map_err(|e| e.to_string())?;
        let v = symmetric.velocities();
        if (v[0] - 0.5).abs() > 1e-15 || (v[1] + 0.5).abs() > 1e-15 {
            return Err(format!("symmetric velocities {v:?}"));
        }
        let skewed = TransitionMatrix::new(
            vec![0.0, 1.0],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            2.0,
        )
        .map_err(|e| e.to_string())?;
        let v = skewed.velocities();
        if (v[0] - 0.05).abs() > 1e-15 || (v[1] + 0.1).abs() > 1e-15 {
            return Err(format!("skewed velocities {v:?}"));
        }
        Ok(())
    });
}

#[test]
fn acceptance_11_throughput_and_determinism() {
    criterion(11, "million-tick throughput and determinism", || {
        let spec = SynthSpec {
            companies: 1,
            steps: 1_000_000,
            price: PriceModel { initial: 100.0, drift: 0.0, volatility: 0.001 },
            volume: VolumeModel { mean: 1000.0, sigma: 0.3 },
            risk_orders: 4,
            risk_axes: 1,
        };
        let cfg = WindowConfig {
            window_len: 1000,
            n_max: 4,
            xi_steps: 1000,
            stride: None,
            scaling: MomentScaling::Raw,
        };
        let run = || -> Result<(String, f64), String> {
            let (series, _) = generate_synthetic(&spec, 99).map_err(|e| e.to_string())?;
            let dense = DenseSeries::from_series(&series).map_err(|e| e.to_string())?;
            let clock = Instant::now();
            let sets = series_moments(&dense, &cfg).map_err(|e| e.to_string())?;
            let elapsed = clock.elapsed().as_secs_f64();
            Ok((render_moment_csv(&sets), elapsed))
        };
        // The pipeline has no worker pool; determinism across "worker
        // counts" reduces to byte-identical output across repeat runs.
        let (first, t1) = run()?;
        let (second, t2) = run()?;
        if first != second {
            return Err("repeat runs differ".into());
        }
        let fastest = t1.min(t2);
        if fastest > 5.0 {
            return Err(format!("moment pass took {fastest:.2} s, budget 5 s"));
        }
        Ok(())
    });
}
