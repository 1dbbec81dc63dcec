//! Finite-dimensional laws of the limit `X(t) = ∫_{[0,t]} f dW`.
//!
//! `(X(t^1), …, X(t^k))` is centered Gaussian with
//! `Cov(X(t^i), X(t^j)) = ∫_{[0, t^i ∧ t^j]} f^2`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{meet, ParamPoint, Rect};
use crate::integrand::SimpleFunction;
use crate::parallel::{replicate_map, Workers};
use crate::random::{labels, StreamKey};

/// Diagonal jitter ladder, as multiples of `trace / k`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-14, 1e-12, 1e-10];

/// An integrand and the points at which the limit process is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct FddSpec {
    f: SimpleFunction,
    points: Vec<ParamPoint>,
}

impl FddSpec {
    pub fn new(f: SimpleFunction, points: Vec<ParamPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("need at least one evaluation point"));
        }
        for t in &points {
            t.check_dim(f.dim())?;
            if !t.le(f.upper()) {
                return Err(Error::domain(format!(
                    "{t} lies outside the box {}",
                    f.upper()
                )));
            }
        }
        Ok(Self { f, points })
    }

    pub fn integrand(&self) -> &SimpleFunction {
        &self.f
    }

    pub fn points(&self) -> &[ParamPoint] {
        &self.points
    }
}

/// Symmetric covariance matrix of an [`FddSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Lower Cholesky factor, adding `ε · trace / k` to the diagonal for the
    /// first `ε` of [`JITTER_LADDER`] that succeeds.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let k = self.size();
        let trace = self.trace();
        if trace == 0.0 {
            return Ok(DMatrix::zeros(k, k));
        }
        for eps in JITTER_LADDER {
            let mut m = self.0.clone();
            for i in 0..k {
                m[(i, i)] += eps * trace / k as f64;
            }
            if let Some(ch) = Cholesky::new(m) {
                return Ok(ch.l());
            }
        }
        Err(Error::Numeric(format!(
            "covariance of size {k} is not factorizable with jitter up to {:e} · trace",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }
}

/// Exact covariance `∫_{[0, t^i ∧ t^j]} f^2`.
pub fn covariance(spec: &FddSpec) -> Result<CovMatrix> {
    let k = spec.points.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let corner = meet(&spec.points[i], &spec.points[j])?;
            let v = spec
                .f
                .restrict(&Rect::from_origin(&corner))?
                .lp_integral(2.0)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(CovMatrix(m))
}

/// `reps` i.i.d. draws of `(X(t^1), …, X(t^k))`; row `r` uses its own stream.
pub fn sample_fdd(
    spec: &FddSpec,
    key: StreamKey,
    reps: u64,
    workers: Workers,
) -> Result<Vec<Vec<f64>>> {
    let factor = covariance(spec)?.factor()?;
    let k = spec.points.len();
    let key = key.with_label(labels::GAUSSIAN);
    replicate_map(reps, workers, |r| {
        let mut rng = key.with_replicate(r).rng();
        let z = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut rng)));
        Ok((&factor * z).iter().copied().collect())
    })
}

/// `lim E|Δ X_n|^m = m! / (2^{m/2} (m/2)!) · σ^m` for even `m`.
pub fn limit_moment(m: u32, sigma2: f64) -> Result<f64> {
    if m < 2 || m % 2 == 1 {
        return Err(Error::domain(format!(
            "moment order {m} must be an even integer >= 2"
        )));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::domain(format!(
            "variance {sigma2} must be nonnegative"
        )));
    }
    let half = m / 2;
    let factorial = |k: u32| (1..=k).map(f64::from).product::<f64>();
    let coefficient = factorial(m) / (2f64.powi(half as i32) * factorial(half));
    Ok(coefficient * sigma2.powi(half as i32))
}
