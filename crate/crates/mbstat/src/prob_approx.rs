//! Price probability approximation from a finite set of moments.
//!
//! The first n price moments are mapped to cumulants a_1..a_n, which define a
//! characteristic function of exponential-polynomial form
//!
//! ```text
//! F(x) = exp( sum_{m=1..n} i^m a_m x^m / m!  -  b x^{2k} )
//! ```
//!
//! with an even regularizer b x^{2k}, 2k > n, that forces integrability
//! without touching derivatives of order <= n at x = 0 (so the first n
//! moments of the recovered density are exactly the inputs, up to
//! quadrature). The density is the inverse transform
//!
//! ```text
//! eta(p) = (1/2pi) integral F(x) exp(-i x p) dx
//! ```
//!
//! evaluated by trapezoidal quadrature over a symmetric interval cut off
//! where the envelope |F| falls under a decay threshold. The constant is
//! 1/(2pi), not 1/sqrt(2pi): only the former reproduces the closed-form
//! normal density from Gaussian cumulants, and only it integrates to
//! F(0) = 1.
//!
//! A truncated cumulant set is not a distribution; the recovered density can
//! dip negative. min(eta) and the total negative mass are always reported,
//! and the inversion fails only when the negative mass exceeds a configured
//! budget.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Default envelope threshold below which the transform is truncated.
pub const DECAY_TOL: f64 = 1e-12;
/// Default cap on tolerated negative density mass.
pub const NEGATIVITY_BUDGET: f64 = 1e-3;
/// Default quadrature point count for the inversion integral.
pub const QUAD_POINTS: usize = 4097;

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..n {
        let mut next = vec![1.0];
        for w in row.windows(2) {
            next.push(w[0] + w[1]);
        }
        next.push(1.0);
        row = next;
    }
    row
}

/// Raw moments mu_1..mu_n to cumulants a_1..a_n by the Bell-polynomial
/// recurrence a_m = mu_m - sum_{j=1}^{m-1} C(m-1, j-1) a_j mu_{m-j}.
/// Closed forms: a_2 = mu_2 - mu_1^2 (the variance), a_3 = mu_3
/// - 3 mu_2 mu_1 + 2 mu_1^3 (the third central moment).
#[must_use]
pub fn moments_to_cumulants(moments: &[f64]) -> Vec<f64> {
    let n = moments.len();
    let mut cumulants: Vec<f64> = Vec::with_capacity(n);
    for m in 1..=n {
        let binom = binomial_row(m - 1);
        let mut acc = KahanSum::new();
        acc.add(moments[m - 1]);
        for j in 1..m {
            acc.add(-binom[j - 1] * cumulants[j - 1] * moments[m - j - 1]);
        }
        cumulants.push(acc.value());
    }
    cumulants
}

/// Inverse direction, mu_m = sum_{j=1}^{m} C(m-1, j-1) a_j mu_{m-j} with
/// mu_0 = 1; the round-trip oracle for [`moments_to_cumulants`].
#[must_use]
pub fn cumulants_to_moments(cumulants: &[f64]) -> Vec<f64> {
    let n = cumulants.len();
    let mut moments: Vec<f64> = Vec::with_capacity(n);
    for m in 1..=n {
        let binom = binomial_row(m - 1);
        let mut acc = KahanSum::new();
        for j in 1..=m {
            let lower = if m - j == 0 { 1.0 } else { moments[m - j - 1] };
            acc.add(binom[j - 1] * cumulants[j - 1] * lower);
        }
        moments.push(acc.value());
    }
    moments
}

/// The n-approximation characteristic function with its regularizer.
#[derive(Debug, Clone)]
pub struct CharFnApprox {
    cumulants: Vec<f64>,
    b: f64,
    two_k: usize,
}

impl CharFnApprox {
    /// Validates b >= 0 and an even 2k > n. b = 0 is accepted; decay then
    /// rests on the even cumulants alone, and the inversion rejects the cases
    /// where that is not enough.
    pub fn new(cumulants: Vec<f64>, b: f64, two_k: usize) -> Result<Self> {
        if cumulants.is_empty() {
            return Err(Error::InvalidSpec("at least one cumulant required".into()));
        }
        if cumulants.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSpec("cumulants must be finite".into()));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidSpec(format!("regularizer b must be >= 0, got {b}")));
        }
        if !two_k.is_multiple_of(2) || two_k <= cumulants.len() {
            return Err(Error::InvalidSpec(format!(
                "regularizer exponent 2k = {two_k} must be even and exceed n = {}",
                cumulants.len()
            )));
        }
        Ok(Self { cumulants, b, two_k })
    }

    /// Smallest even 2k > n, with b = 0.05 sigma^{2k} (2k)! / (k! 2^k).
    /// Requires a positive variance cumulant to set the scale.
    pub fn with_default_regularizer(cumulants: Vec<f64>) -> Result<Self> {
        let variance = cumulants.get(1).copied().unwrap_or(0.0);
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::NonPositiveVariance { variance });
        }
        let n = cumulants.len();
        let two_k = if (n + 1).is_multiple_of(2) { n + 1 } else { n + 2 };
        let mut double_factorial = 1.0;
        for odd in (1..two_k).step_by(2) {
            double_factorial *= odd as f64;
        }
        // (2k)! / (k! 2^k) is the (2k-1)!! double factorial.
        let sigma = variance.sqrt();
        let b = 0.05 * sigma.powi(two_k as i32) * double_factorial;
        Self::new(cumulants, b, two_k)
    }

    #[must_use]
    pub fn order(&self) -> usize {
        self.cumulants.len()
    }

    #[must_use]
    pub fn cumulants(&self) -> &[f64] {
        &self.cumulants
    }

    #[must_use]
    pub fn regularizer(&self) -> (f64, usize) {
        (self.b, self.two_k)
    }

    /// The complex exponent of F at x.
    fn exponent(&self, x: f64) -> Complex64 {
        let ix = Complex64::new(0.0, x);
        let mut power = Complex64::new(1.0, 0.0);
        let mut factorial = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &a) in self.cumulants.iter().enumerate() {
            power *= ix;
            factorial *= (m + 1) as f64;
            acc += power * (a / factorial);
        }
        acc - Complex64::new(self.b * x.powi(self.two_k as i32), 0.0)
    }

    /// F(x); F(0) is exactly 1.
    #[must_use]
    pub fn eval(&self, x: f64) -> Complex64 {
        self.exponent(x).exp()
    }

    /// |F(x)| without the oscillatory factor.
    #[must_use]
    pub fn envelope(&self, x: f64) -> f64 {
        self.exponent(x).re.exp()
    }
}

/// Evaluation grid for the recovered density.
#[derive(Debug, Clone, Copy)]
pub struct DensityGridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl DensityGridSpec {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidSpec(format!("bad density range [{min}, {max}]")));
        }
        if points < 3 {
            return Err(Error::InvalidSpec("density grid needs at least 3 points".into()));
        }
        Ok(Self { min, max, points })
    }

    /// Symmetric grid around the mean cumulant, `half_width_sigmas` standard
    /// deviations to each side.
    pub fn around(approx: &CharFnApprox, half_width_sigmas: f64, points: usize) -> Result<Self> {
        let mean = approx.cumulants()[0];
        let variance = approx.cumulants().get(1).copied().unwrap_or(0.0);
        if variance <= 0.0 {
            return Err(Error::NonPositiveVariance { variance });
        }
        if !(half_width_sigmas.is_finite() && half_width_sigmas > 0.0) {
            return Err(Error::InvalidSpec("half width must be positive".into()));
        }
        let half = half_width_sigmas * variance.sqrt();
        Self::new(mean - half, mean + half, points)
    }

    fn values(&self) -> Vec<f64> {
        let dx = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + dx * i as f64).collect()
    }
}

/// Inversion controls; defaults match the module constants.
#[derive(Debug, Clone, Copy)]
pub struct InversionConfig {
    pub quad_points: usize,
    pub decay_tol: f64,
    pub negativity_budget: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            quad_points: QUAD_POINTS,
            decay_tol: DECAY_TOL,
            negativity_budget: NEGATIVITY_BUDGET,
        }
    }
}

/// The recovered density with its quadrature diagnostics.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub p: Vec<f64>,
    pub eta: Vec<f64>,
    /// Transform truncated to [-cutoff, cutoff].
    pub cutoff: f64,
    pub quad_points: usize,
    /// |trapezoid(eta) - 1|.
    pub normalization_residual: f64,
    /// trapezoid of max(-eta, 0); subject to the negativity budget.
    pub negative_mass: f64,
    pub min_eta: f64,
    /// Largest |imaginary part| seen in any eta value before it was dropped.
    pub imag_residual: f64,
}

/// Finds the truncation point: the smallest x where the envelope stays under
/// `tol` through [x, 4x]. The re-check matters for envelopes that dip and
/// rise again before the regularizer takes over.
fn find_cutoff(approx: &CharFnApprox, tol: f64) -> Result<f64> {
    const CAP: f64 = 1e9;
    let mut x = 1e-3;
    loop {
        let env = approx.envelope(x);
        if env <= tol {
            let rebound = (1..=64)
                .map(|i| x * (1.0 + 3.0 * i as f64 / 64.0))
                .find(|&t| approx.envelope(t) > tol);
            match rebound {
                None => return Ok(x),
                Some(t) => x = t,
            }
        }
        x *= 1.01;
        if x > CAP {
            return Err(Error::InsufficientDecay {
                x: CAP,
                envelope: approx.envelope(CAP),
            });
        }
    }
}

/// Inverts the characteristic function onto `grid`.
///
/// The transform samples F once on a symmetric trapezoidal grid; each
/// density value is then one compensated dot product with the oscillation
/// exp(-i x p). Real parts become eta; the largest imaginary remainder is
/// reported as a diagnostic (it is zero in exact arithmetic since real
/// cumulants give F(-x) = conj F(x)).
pub fn charfn_to_density(
    approx: &CharFnApprox,
    grid: &DensityGridSpec,
    cfg: &InversionConfig,
) -> Result<DensityGrid> {
    if cfg.quad_points < 33 {
        return Err(Error::InvalidSpec("quad_points must be at least 33".into()));
    }
    if !(cfg.decay_tol > 0.0 && cfg.decay_tol < 1.0) {
        return Err(Error::InvalidSpec("decay_tol must be in (0, 1)".into()));
    }
    let cutoff = find_cutoff(approx, cfg.decay_tol)?;
    let quad_points = cfg.quad_points | 1; // symmetric grid including x = 0
    let dx = 2.0 * cutoff / (quad_points - 1) as f64;
    let xs: Vec<f64> = (0..quad_points)
        .map(|i| -cutoff + dx * i as f64)
        .collect();
    let fs: Vec<Complex64> = xs.iter().map(|&x| approx.eval(x)).collect();
    let p_values = grid.values();
    let mut eta = Vec::with_capacity(p_values.len());
    let mut imag_residual = 0.0f64;
    let norm = dx / (2.0 * std::f64::consts::PI);
    for &p in &p_values {
        let mut re = KahanSum::new();
        let mut im = KahanSum::new();
        for (i, (&x, f)) in xs.iter().zip(&fs).enumerate() {
            let weight = if i == 0 || i == quad_points - 1 { 0.5 } else { 1.0 };
            let osc = Complex64::new(0.0, -x * p).exp();
            let term = f * osc * weight;
            re.add(term.re);
            im.add(term.im);
        }
        eta.push(re.value() * norm);
        imag_residual = imag_residual.max((im.value() * norm).abs());
    }
    let mass = trapezoid(&p_values, &eta, |_, e| e);
    let negative_mass = trapezoid(&p_values, &eta, |_, e| (-e).max(0.0));
    let min_eta = eta.iter().fold(f64::INFINITY, |a, &e| a.min(e));
    if negative_mass > cfg.negativity_budget {
        return Err(Error::ExcessNegativeMass {
            mass: negative_mass,
            budget: cfg.negativity_budget,
        });
    }
    Ok(DensityGrid {
        p: p_values,
        eta,
        cutoff,
        quad_points,
        normalization_residual: (mass - 1.0).abs(),
        negative_mass,
        min_eta,
        imag_residual,
    })
}

fn trapezoid(p: &[f64], eta: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    for i in 1..p.len() {
        let left = f(p[i - 1], eta[i - 1]);
        let right = f(p[i], eta[i]);
        acc.add(0.5 * (left + right) * (p[i] - p[i - 1]));
    }
    acc.value()
}

/// Trapezoidal integral of p^m eta over the grid; m = 0 gives the mass.
#[must_use]
pub fn density_moment(grid: &DensityGrid, m: usize) -> f64 {
    trapezoid(&grid.p, &grid.eta, |p, e| p.powi(m as i32) * e)
}

/// Recovered raw moments 1..=n.
#[must_use]
pub fn density_moments(grid: &DensityGrid, n: usize) -> Vec<f64> {
    (1..=n).map(|m| density_moment(grid, m)).collect()
}

/// Closed-form Gaussian density with the given mean and variance, sampled on
/// `grid`; the n = 2 oracle for the inversion path.
pub fn gaussian_density(mean: f64, variance: f64, grid: &DensityGridSpec) -> Result<Vec<f64>> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::NonPositiveVariance { variance });
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
    Ok(grid
        .values()
        .iter()
        .map(|&p| norm * (-(p - mean) * (p - mean) / (2.0 * variance)).exp())
        .collect())
}

/// Renders `p,eta` rows.
#[must_use]
pub fn render_density_csv(grid: &DensityGrid) -> String {
    let mut out = String::from("p,eta\n");
    for (p, e) in grid.p.iter().zip(&grid.eta) {
        out.push_str(&format!("{p},{e}\n"));
    }
    out
}

pub fn write_density_csv(path: impl AsRef<std::path::Path>, grid: &DensityGrid) -> Result<()> {
    crate::trade_data::write_atomic(path.as_ref(), render_density_csv(grid).as_bytes())
}

/// Metadata sidecar content: approximation, grid, and diagnostics, plus
/// moment round-trip errors when the caller computed them.
#[must_use]
pub fn density_metadata(
    approx: &CharFnApprox,
    grid: &DensityGrid,
    roundtrip_errors: Option<&[f64]>,
) -> serde_json::Value {
    let (b, two_k) = approx.regularizer();
    let mut meta = serde_json::json!({
        "n": approx.order(),
        "cumulants": approx.cumulants(),
        "regularizer": { "b": b, "two_k": two_k },
        "grid": {
            "min": grid.p.first(),
            "max": grid.p.last(),
            "points": grid.p.len(),
        },
        "quadrature": {
            "cutoff": grid.cutoff,
            "points": grid.quad_points,
        },
        "normalization_residual": grid.normalization_residual,
        "negative_mass": grid.negative_mass,
        "min_eta": grid.min_eta,
        "imag_residual": grid.imag_residual,
    });
    if let Some(errors) = roundtrip_errors {
        meta["moment_roundtrip_relative_errors"] = serde_json::json!(errors);
    }
    meta
}
