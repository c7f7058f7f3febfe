//! Synthetic series generator: geometric random-walk prices, lognormal
//! volumes, uniform risk coordinates. Fully deterministic for a given
//! (spec, seed) pair; reruns are byte-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{RiskVector, TickRecord, TickSeries};
use crate::error::{Error, Result};

/// Log-space random walk: log p(i+1) = log p(i) + drift + volatility * z.
#[derive(Debug, Clone, Copy)]
pub struct PriceModel {
    pub initial: f64,
    pub drift: f64,
    pub volatility: f64,
}

/// Lognormal volumes parameterized by their analytic mean, so the sample
/// average converges to `mean` by construction: U = exp(mu + sigma * z) with
/// mu = ln(mean) - sigma^2 / 2.
#[derive(Debug, Clone, Copy)]
pub struct VolumeModel {
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub companies: usize,
    pub steps: usize,
    pub price: PriceModel,
    pub volume: VolumeModel,
    /// Moment orders carried by each generated risk vector.
    pub risk_orders: usize,
    /// Risk axes (dimensions of the unit cube).
    pub risk_axes: usize,
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        if self.companies == 0 {
            return Err(Error::InvalidSpec("companies must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidSpec("steps must be >= 1".into()));
        }
        if !(self.price.initial.is_finite() && self.price.initial > 0.0) {
            return Err(Error::InvalidSpec("initial price must be positive".into()));
        }
        if !self.price.drift.is_finite() {
            return Err(Error::InvalidSpec("price drift must be finite".into()));
        }
        if !(self.price.volatility.is_finite() && self.price.volatility >= 0.0) {
            return Err(Error::InvalidSpec("price volatility must be >= 0".into()));
        }
        if !(self.volume.mean.is_finite() && self.volume.mean > 0.0) {
            return Err(Error::InvalidSpec("volume mean must be positive".into()));
        }
        if !(self.volume.sigma.is_finite() && self.volume.sigma >= 0.0) {
            return Err(Error::InvalidSpec("volume sigma must be >= 0".into()));
        }
        if self.risk_orders == 0 || self.risk_axes == 0 {
            return Err(Error::InvalidSpec("risk orders and axes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Company identifier for index q, zero padded so lexicographic order matches
/// numeric order up to a million companies.
#[must_use]
pub(crate) fn company_name(q: usize) -> String {
    format!("C{q:06}")
}

/// Generates the dense tick grid and one risk vector per company.
///
/// Draw order is fixed (per company: risk coordinates, then the stepwise
/// price/volume stream), so output depends only on (spec, seed).
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(TickSeries, Vec<RiskVector>)> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volume_mu = spec.volume.mean.ln() - 0.5 * spec.volume.sigma * spec.volume.sigma;
    let mut ticks = Vec::with_capacity(spec.companies * spec.steps);
    let mut risks = Vec::with_capacity(spec.companies);
    for q in 0..spec.companies {
        let company = company_name(q);
        let coords = (0..spec.risk_orders)
            .map(|_| (0..spec.risk_axes).map(|_| rng.gen::<f64>()).collect())
            .collect();
        risks.push(RiskVector {
            company: company.clone(),
            coords,
        });
        let mut log_price = spec.price.initial.ln();
        for step in 0..spec.steps {
            if step > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                log_price += spec.price.drift + spec.price.volatility * z;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let volume = (volume_mu + spec.volume.sigma * z).exp();
            ticks.push(TickRecord::new(
                step as u64,
                company.clone(),
                log_price.exp(),
                volume,
            ));
        }
    }
    Ok((TickSeries::from_records(ticks), risks))
}
