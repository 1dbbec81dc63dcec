//! Verification battery: moment estimates with standard errors, goodness of
//! fit against centered Gaussians, Cramér–Wold combinations, the uniform
//! moment-bound scan and the deterministic lattice covariance limit.
//!
//! None of the convergence statements comes with a rate, so every `n` grid
//! and tolerance used with these tools is an engineering choice.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::family::KernelFamily;
use crate::geometry::{lattice_floor, ParamPoint};
use crate::integrand::{indicator_combo, SimpleFunction};
use crate::parallel::{mean_of, pairwise_sum, Workers};
use crate::random::{labels, StreamKey};
use crate::wiener::limit_moment;

/// Fewest replicates accepted by [`empirical_moments`].
pub const MIN_MOMENT_REPS: usize = 100;
/// Fewest samples accepted by the goodness-of-fit tests.
pub const MIN_GOF_REPS: usize = 1000;
/// A trend slope with `z` at or above this is "significantly positive".
pub const SLOPE_Z_GATE: f64 = 3.0;
/// Number of frequencies in the characteristic-function distance.
pub const ECF_FREQUENCIES: usize = 16;
/// Largest number of corners in a Cramér–Wold combination.
pub const MAX_CW_CORNERS: usize = 8;

/// One plug-in moment estimate against its Gaussian-limit target.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub m: u32,
    pub reps: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z_score: f64,
}

impl MomentEstimate {
    /// `|estimate - target| <= max(k · SE, rel · target)`.
    pub fn within(&self, k: f64, rel: f64) -> bool {
        (self.estimate - self.target).abs() <= (k * self.std_error).max(rel * self.target.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub entries: Vec<MomentEstimate>,
    /// Entries whose SE exceeds 10% of the target.
    pub warnings: Vec<String>,
}

fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let diff = estimate - target;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Mean of `|x|^m` for each `m`, with SE `sqrt((mean |x|^{2m} - mean^2) / R)`
/// and target `limit_moment(m, sigma2)`.
pub fn empirical_moments(samples: &[f64], ms: &[u32], sigma2_target: f64) -> Result<MomentReport> {
    if samples.len() < MIN_MOMENT_REPS {
        return Err(Error::domain(format!(
            "{} replicates is too few for moment estimates (need {MIN_MOMENT_REPS})",
            samples.len()
        )));
    }
    let reps = samples.len();
    let mut entries = Vec::with_capacity(ms.len());
    let mut warnings = Vec::new();
    for &m in ms {
        let target = limit_moment(m, sigma2_target)?;
        let powers: Vec<f64> = samples.iter().map(|x| x.abs().powi(m as i32)).collect();
        let estimate = pairwise_sum(&powers) / reps as f64;
        let var =
            mean_of(&powers, |y| (y - estimate) * (y - estimate)) * reps as f64 / (reps - 1) as f64;
        let std_error = (var / reps as f64).sqrt();
        if target > 0.0 && std_error > 0.1 * target {
            warnings.push(format!(
                "m={m}: standard error {std_error:.3e} exceeds 10% of the target {target:.3e}; increase reps"
            ));
        }
        entries.push(MomentEstimate {
            m,
            reps,
            estimate,
            std_error,
            target,
            z_score: z_score(estimate, target, std_error),
        });
    }
    Ok(MomentReport { entries, warnings })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GofTest {
    Ks,
    Ecf,
}

impl fmt::Display for GofTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GofTest::Ks => "KS",
            GofTest::Ecf => "ECF",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GofReport {
    pub test: GofTest,
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
    pub sample_size: usize,
}

impl GofReport {
    fn new(test: GofTest, statistic: f64, threshold: f64, alpha: f64, sample_size: usize) -> Self {
        Self {
            test,
            statistic,
            threshold,
            alpha,
            reject: statistic > threshold,
            sample_size,
        }
    }
}

/// Kolmogorov survival function `P(K > x) = 2 Σ (-1)^{k-1} e^{-2 k^2 x^2}`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges slowly here and the value is 1 to
        // double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Upper `alpha` quantile of the Kolmogorov distribution.
pub fn kolmogorov_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("level {alpha} must lie in (0, 1)")));
    }
    let (mut lo, mut hi) = (0.2, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_gof_input(samples: &[f64], sigma2: f64, alpha: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!(
            "target variance {sigma2} must be positive"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("level {alpha} must lie in (0, 1)")));
    }
    if samples.len() < MIN_GOF_REPS {
        return Err(Error::domain(format!(
            "{} samples is too few for a goodness-of-fit test (need {MIN_GOF_REPS})",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("samples contain non-finite values"));
    }
    if samples.iter().all(|x| *x == samples[0]) {
        return Err(Error::domain("samples are degenerate (all equal)"));
    }
    Ok(())
}

/// One-sample Kolmogorov–Smirnov test against `N(0, sigma2)` with the
/// asymptotic threshold `K_alpha / sqrt(R)`.
pub fn ks_test(samples: &[f64], sigma2: f64, alpha: f64) -> Result<GofReport> {
    check_gof_input(samples, sigma2, alpha)?;
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = normal.cdf(*x);
            ((i + 1) as f64 / r - cdf).max(cdf - i as f64 / r)
        })
        .fold(0.0, f64::max);
    let threshold = kolmogorov_quantile(alpha)? / r.sqrt();
    Ok(GofReport::new(
        GofTest::Ks,
        statistic,
        threshold,
        alpha,
        sorted.len(),
    ))
}

/// Largest modulus gap between the empirical characteristic function and
/// `exp(-sigma2 ω^2 / 2)` at `ω_j = j / (4 σ)`, `j = 1..=16`.
///
/// The threshold is a Hoeffding bound with a union over real and imaginary
/// parts at every frequency, so it is conservative.
pub fn ecf_test(samples: &[f64], sigma2: f64, alpha: f64) -> Result<GofReport> {
    check_gof_input(samples, sigma2, alpha)?;
    let sigma = sigma2.sqrt();
    let r = samples.len() as f64;
    let statistic = (1..=ECF_FREQUENCIES)
        .map(|j| {
            let w = j as f64 / (4.0 * sigma);
            let re = mean_of(samples, |x| (w * x).cos());
            let im = mean_of(samples, |x| (w * x).sin());
            let target = (-0.5 * sigma2 * w * w).exp();
            ((re - target).powi(2) + im * im).sqrt()
        })
        .fold(0.0, f64::max);
    let threshold = 2.0 * ((4.0 * ECF_FREQUENCIES as f64 / alpha).ln() / r).sqrt();
    Ok(GofReport::new(
        GofTest::Ecf,
        statistic,
        threshold,
        alpha,
        samples.len(),
    ))
}

/// Outcome of one Cramér–Wold combination.
#[derive(Clone, Debug, PartialEq)]
pub struct CramerWoldReport {
    /// Exact `∫ (f Σ a_j 1_{[0, t^j]})^2`.
    pub variance: f64,
    pub gof: GofReport,
}

/// Simulate `Σ a_j X_n(t^j) = ∫ f (Σ a_j 1_{[0,t^j]}) θ_n` and KS-test it
/// against the Gaussian with the exact limit variance.
#[allow(clippy::too_many_arguments)]
pub fn cramer_wold_check(
    family: KernelFamily,
    f: &SimpleFunction,
    corners: &[ParamPoint],
    coeffs: &[f64],
    n: u32,
    reps: u64,
    seed: u64,
    alpha: f64,
    workers: Workers,
) -> Result<CramerWoldReport> {
    if corners.is_empty() || corners.len() > MAX_CW_CORNERS {
        return Err(Error::domain(format!(
            "a combination needs 1..={MAX_CW_CORNERS} corners, got {}",
            corners.len()
        )));
    }
    let g = f.product(&indicator_combo(f.upper(), coeffs, corners)?)?;
    let variance = g.lp_integral(2.0)?;
    if variance == 0.0 {
        return Err(Error::Degenerate(
            "the combination has zero limit variance; choose nonzero coefficients or a nonzero integrand".into(),
        ));
    }
    let samples = family
        .sample_integrals(n, f.upper(), std::slice::from_ref(&g), reps, seed, workers)?
        .remove(0);
    let gof = ks_test(&samples, variance, alpha)?;
    Ok(CramerWoldReport { variance, gof })
}

/// Ratio estimate for one `n` of a bound-constant scan.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub n: u32,
    pub reps: usize,
    /// `Ê[(∫ g θ_n)^m] / (∫ |g|^{2q})^{m / (2q)}`
    pub ratio: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundConstantReport {
    pub q: f64,
    pub m: u32,
    pub rows: Vec<BoundRow>,
    pub max_ratio: f64,
    /// Weighted least-squares slope of `ln ratio` against `ln n`.
    pub slope: f64,
    pub slope_se: f64,
    pub slope_z: f64,
}

impl BoundConstantReport {
    /// True when the trend is significantly positive (`z >= 3`).
    pub fn significant_growth(&self) -> bool {
        self.slope_z >= SLOPE_Z_GATE
    }
}

/// Seed for one `n` of a sweep, so that different `n` use independent streams.
pub fn seed_for(seed: u64, n: u32, experiment: u64) -> u64 {
    StreamKey::new(seed, u64::from(n), labels::CONFIG).derive_seed(experiment)
}

/// Estimate the ratio of the `m`-th moment of `∫ g θ_n` to
/// `(∫ |g|^{2q})^{m/(2q)}` along `n_grid`, and the trend of its logarithm.
#[allow(clippy::too_many_arguments)]
pub fn bound_constant_scan(
    family: KernelFamily,
    g: &SimpleFunction,
    q: f64,
    m: u32,
    n_grid: &[u32],
    reps: u64,
    seed: u64,
    workers: Workers,
) -> Result<BoundConstantReport> {
    if m % 2 == 1 || f64::from(m) <= 2.0 * q {
        return Err(Error::domain(format!(
            "moment order m = {m} must be even and exceed 2q = {}",
            2.0 * q
        )));
    }
    if q < 1.0 {
        return Err(Error::domain(format!("q = {q} must be >= 1")));
    }
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain(
            "n grid must hold at least two strictly increasing values",
        ));
    }
    if reps < 2 {
        return Err(Error::domain("need at least two replicates"));
    }
    let norm = g.lp_integral(2.0 * q)?;
    if norm == 0.0 {
        return Err(Error::domain("integrand has zero norm"));
    }
    let denominator = norm.powf(f64::from(m) / (2.0 * q));
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let xs = family
            .sample_integrals(
                n,
                g.upper(),
                std::slice::from_ref(g),
                reps,
                seed_for(seed, n, 7),
                workers,
            )?
            .remove(0);
        let powers: Vec<f64> = xs.iter().map(|x| x.powi(m as i32)).collect();
        let mean = pairwise_sum(&powers) / powers.len() as f64;
        let var = mean_of(&powers, |y| (y - mean) * (y - mean)) * reps as f64 / (reps - 1) as f64;
        rows.push(BoundRow {
            n,
            reps: xs.len(),
            ratio: mean / denominator,
            std_error: (var / reps as f64).sqrt() / denominator,
        });
    }
    let max_ratio = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let (slope, slope_se) = log_trend(&rows)?;
    Ok(BoundConstantReport {
        q,
        m,
        max_ratio,
        slope,
        slope_se,
        slope_z: z_score(slope, 0.0, slope_se),
        rows,
    })
}

/// Weighted least squares of `ln ratio` on `ln n`, weights `(ratio / se)^2`
/// (the delta-method variance of the log). Falls back to equal weights when
/// some SE vanishes.
fn log_trend(rows: &[BoundRow]) -> Result<(f64, f64)> {
    if rows.iter().any(|r| !(r.ratio > 0.0)) {
        return Err(Error::Numeric(
            "a moment ratio is not positive; cannot take logs".into(),
        ));
    }
    let xs: Vec<f64> = rows.iter().map(|r| f64::from(r.n).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let weighted = rows.iter().all(|r| r.std_error > 0.0);
    let ws: Vec<f64> = if weighted {
        rows.iter()
            .map(|r| (r.ratio / r.std_error).powi(2))
            .collect()
    } else {
        vec![1.0; rows.len()]
    };
    let wsum: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / wsum;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / wsum;
    let sxx: f64 = ws
        .iter()
        .zip(&xs)
        .map(|(w, x)| w * (x - xbar).powi(2))
        .sum();
    let sxy: f64 = ws
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let se = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let dof = rows.len().saturating_sub(2).max(1) as f64;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - ybar - slope * (x - xbar)).powi(2))
            .sum();
        (rss / dof / sxx).sqrt()
    };
    Ok((slope, se))
}

/// Deterministic lattice variance `n^{-d} Σ_{s <= [nT]} a_n(s)^2`,
/// `a_n(s) = Σ_j α_j 1_{[0, [n t^j]]}(s)`, and its limit
/// `Σ_{i,j} α_i α_j ∏_l (t^i_l ∧ t^j_l)`.
///
/// The lattice sum factorizes per pair and axis into
/// `∏_l min([n t^i_l], [n t^j_l]) / n`.
pub fn lattice_covariance_limit(
    coeffs: &[f64],
    corners: &[ParamPoint],
    n: u32,
) -> Result<(f64, f64)> {
    if coeffs.len() != corners.len() || corners.is_empty() {
        return Err(Error::Structural(format!(
            "{} coefficients for {} corners",
            coeffs.len(),
            corners.len()
        )));
    }
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    let d = corners[0].dim();
    for t in corners {
        t.check_dim(d)?;
        if t.coords().iter().any(|c| *c <= 0.0) {
            return Err(Error::domain(format!(
                "corner {t} must be strictly positive"
            )));
        }
    }
    let nf = f64::from(n);
    let floors: Vec<Vec<usize>> = corners
        .iter()
        .map(|t| t.coords().iter().map(|c| lattice_floor(nf * c)).collect())
        .collect();
    let (mut finite, mut limit) = (0.0, 0.0);
    for i in 0..corners.len() {
        for j in 0..corners.len() {
            let w = coeffs[i] * coeffs[j];
            let lattice: f64 = floors[i]
                .iter()
                .zip(&floors[j])
                .map(|(a, b)| (*a.min(b)) as f64 / nf)
                .product();
            let exact: f64 = corners[i]
                .coords()
                .iter()
                .zip(corners[j].coords())
                .map(|(a, b)| a.min(*b))
                .product();
            finite += w * lattice;
            limit += w * exact;
        }
    }
    Ok((finite, limit))
}

/// Largest number of rejections among `trials` level-`alpha` tests that is
/// still consistent with a true null: the smallest `r` with
/// `P(Binomial(trials, alpha) > r) < 0.01`, and at least 1.
pub fn allowed_rejections(trials: usize, alpha: f64) -> usize {
    let mut cdf = 0.0;
    let mut pmf = (1.0 - alpha).powi(trials as i32);
    for r in 0..=trials {
        cdf += pmf;
        if 1.0 - cdf < 0.01 {
            return r.max(1);
        }
        pmf *= (trials - r) as f64 / (r + 1) as f64 * alpha / (1.0 - alpha);
    }
    trials
}
