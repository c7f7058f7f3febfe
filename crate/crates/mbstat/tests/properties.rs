//! Randomized invariants: the relations that must hold on any well-formed
//! input, not just on the hand-derived fixtures.

use proptest::prelude::*;

use mbstat::econ_media::{
    max_stable_dt, set_velocity_profile, step, MediaGrid, MediaState, Sources, StepConfig,
    CFL_MAX,
};
use mbstat::moments::{series_moments, MomentScaling, WindowConfig};
use mbstat::numeric::relative_deviation;
use mbstat::prob_approx::{cumulants_to_moments, moments_to_cumulants, CharFnApprox};
use mbstat::risk_domain::{collective_moments, market_moments, AggregateConfig, RiskCellGrid};
use mbstat::trade_data::{
    generate_synthetic, parse_tick_csv, render_tick_csv, DenseSeries, PriceModel, RiskVector,
    SynthSpec, TickRecord, TickSeries, VolumeModel,
};

fn series_from(pairs: &[(f64, f64)], company: &str) -> TickSeries {
    TickSeries::from_records(
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(p, u))| TickRecord::new(i as u64, company, p, u))
            .collect(),
    )
}

fn tick_pairs(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.5f64..50.0, 0.1f64..10.0), len)
}

proptest! {
    #[test]
    fn tick_csv_round_trips_exact_bits(pairs in tick_pairs(1..40)) {
        let series = series_from(&pairs, "A");
        let text = render_tick_csv(&series);
        let parsed = parse_tick_csv(text.as_bytes(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(parsed.ticks(), series.ticks());
        prop_assert_eq!(render_tick_csv(&parsed), text);
    }

    #[test]
    fn synthesis_is_deterministic(seed in any::<u64>(), companies in 1usize..4, steps in 1usize..40) {
        let spec = SynthSpec {
            companies,
            steps,
            price: PriceModel { initial: 50.0, drift: 0.0001, volatility: 0.01 },
            volume: VolumeModel { mean: 500.0, sigma: 0.4 },
            risk_orders: 2,
            risk_axes: 2,
        };
        let (s1, r1) = generate_synthetic(&spec, seed).unwrap();
        let (s2, r2) = generate_synthetic(&spec, seed).unwrap();
        prop_assert_eq!(render_tick_csv(&s1), render_tick_csv(&s2));
        for (a, b) in r1.iter().zip(&r2) {
            prop_assert_eq!(&a.company, &b.company);
            prop_assert_eq!(&a.coords, &b.coords);
        }
    }

    #[test]
    fn input_order_is_canonicalized(pairs in tick_pairs(2..24), seed in any::<u64>()) {
        let mut records: Vec<TickRecord> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(p, u))| TickRecord::new(i as u64, "A", p, u))
            .collect();
        // Deterministic pseudo-shuffle driven by the seed.
        let mut state = seed;
        for i in (1..records.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            records.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let shuffled = TickSeries::from_records(records);
        let canonical = series_from(&pairs, "A");
        prop_assert_eq!(render_tick_csv(&shuffled), render_tick_csv(&canonical));
    }

    #[test]
    fn value_identities_hold(pairs in tick_pairs(8..48)) {
        let len = pairs.len();
        let window = len / 2;
        let series = DenseSeries::from_series(&series_from(&pairs, "A")).unwrap();
        let cfg = WindowConfig {
            window_len: window,
            n_max: 4,
            xi_steps: window as u64,
            stride: None,
            scaling: MomentScaling::Raw,
        };
        for set in series_moments(&series, &cfg).unwrap() {
            for m in 0..4 {
                prop_assert!(
                    relative_deviation(set.value[m], set.price[m] * set.volume[m]) <= 1e-9
                );
                if let (Some(ret), Some(past)) = (&set.ret, &set.past_value) {
                    prop_assert!(relative_deviation(set.value[m], ret[m] * past[m]) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn price_moments_scale_by_lambda_to_the_m(pairs in tick_pairs(6..24), lambda in 0.5f64..4.0) {
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(p, u)| (p * lambda, u)).collect();
        let window = pairs.len();
        let cfg = WindowConfig {
            window_len: window,
            n_max: 3,
            xi_steps: 0,
            stride: None,
            scaling: MomentScaling::Raw,
        };
        let base = series_moments(&DenseSeries::from_series(&series_from(&pairs, "A")).unwrap(), &cfg).unwrap();
        let bumped = series_moments(&DenseSeries::from_series(&series_from(&scaled, "A")).unwrap(), &cfg).unwrap();
        for (a, b) in base.iter().zip(&bumped) {
            for m in 0..3 {
                let expect = a.price[m] * lambda.powi(m as i32 + 1);
                prop_assert!(relative_deviation(b.price[m], expect) <= 1e-12);
                // Returns are scale free: both value and past value carry lambda^m.
                if let (Some(ra), Some(rb)) = (&a.ret, &b.ret) {
                    prop_assert!(relative_deviation(ra[m], rb[m]) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_volume_collapses_price_onto_frequency(prices in prop::collection::vec(0.5f64..50.0, 4..24)) {
        let pairs: Vec<(f64, f64)> = prices.iter().map(|&p| (p, 1.0)).collect();
        let series = DenseSeries::from_series(&series_from(&pairs, "A")).unwrap();
        let cfg = WindowConfig::block(pairs.len(), 4, 0);
        for set in series_moments(&series, &cfg).unwrap() {
            prop_assert_eq!(&set.price, &set.freq_price);
        }
    }

    #[test]
    fn market_is_cell_sum_on_continuous_data(
        data in prop::collection::vec((0.5f64..50.0, 0.1f64..10.0), 32..=32),
        coords in prop::collection::vec(0.0f64..1.0, 4),
        d in prop::sample::select(vec![0.5f64, 0.25, 0.2]),
    ) {
        let mut ticks = Vec::new();
        let mut risks = Vec::new();
        for q in 0..4usize {
            let name = format!("Q{q}");
            for step in 0..8u64 {
                let (p, u) = data[q * 8 + step as usize];
                ticks.push(TickRecord::new(step, name.clone(), p, u));
            }
            risks.push(RiskVector {
                company: name,
                coords: vec![vec![coords[q]], vec![coords[(q + 1) % 4]]],
            });
        }
        let series = DenseSeries::from_series(&TickSeries::from_records(ticks)).unwrap();
        let grid = RiskCellGrid::build(&risks, d).unwrap();
        let cfg = AggregateConfig { window_len: 8, k_x: 1, k_m: 1, n_max: 2, xi_steps: 0 };
        let market = market_moments(&series, &cfg, 0).unwrap();
        for m in 1..=2usize {
            let mut total = 0.0;
            for cell in grid.occupied_cells() {
                total += collective_moments(&series, &grid, &cell, &cfg, 0)
                    .unwrap()
                    .raw_value[m - 1];
            }
            prop_assert!(relative_deviation(total, market.raw_value[m - 1]) <= 1e-12);
        }
    }

    #[test]
    fn cumulants_and_moments_invert_each_other(a in prop::collection::vec(-2.0f64..2.0, 1..6)) {
        let moments = cumulants_to_moments(&a);
        let back = moments_to_cumulants(&moments);
        for (x, y) in a.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn characteristic_function_is_one_at_zero(a in prop::collection::vec(-2.0f64..2.0, 1..5), b in 0.0f64..0.5) {
        let two_k = a.len() + 1 + (a.len() + 1) % 2;
        let f = CharFnApprox::new(a, b, two_k).unwrap().eval(0.0);
        prop_assert_eq!(f.re, 1.0);
        prop_assert_eq!(f.im, 0.0);
    }

    #[test]
    fn advection_conserves_and_stays_nonnegative(
        cells in 32usize..128,
        v in -0.3f64..0.3,
        center in 0.2f64..0.8,
        width in 0.02f64..0.1,
    ) {
        let grid = MediaGrid::new(1, cells).unwrap();
        let mut state = MediaState::zeros(grid, 1);
        for i in 0..cells {
            let x = grid.center(i);
            state.fields[0].c[i] = (-(x - center) * (x - center) / (2.0 * width * width)).exp();
        }
        set_velocity_profile(&mut state, |_, _| v);
        let dt = max_stable_dt(&state, CFL_MAX).min(0.01);
        let sources = Sources::none(1);
        let m0 = state.total_mass(0);
        for _ in 0..50 {
            step(&mut state, &sources, &StepConfig::prescribed(dt)).unwrap();
        }
        prop_assert!(relative_deviation(state.total_mass(0), m0) <= 1e-10);
        prop_assert!(state.fields[0].c.iter().all(|&c| c >= 0.0));
    }
}
