//! Reproducible randomness: innovation fields on the integer lattice,
//! multiparameter Poisson point sets, and counter-based per-replicate streams.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{lattice_ceil, MultiIndex, ParamPoint};

/// Default memory guard for dense lattice fields.
pub const DEFAULT_LATTICE_BUDGET: u128 = 100_000_000;
/// Default cap on the number of points in a sampled sheet.
pub const DEFAULT_POINT_BUDGET: u128 = 10_000_000;

/// Substream labels; each consumer of randomness draws from its own label.
pub mod labels {
    pub const LATTICE: u64 = 1;
    pub const POISSON: u64 = 2;
    pub const GAUSSIAN: u64 = 3;
    pub const CONFIG: u64 = 4;
}

/// Identifies one independent random stream.
///
/// The stream is derived by hashing the triple, so replicates can be
/// generated in any order, on any thread, and still see the same numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replicate: u64,
    pub label: u64,
}

impl StreamKey {
    pub fn new(seed: u64, replicate: u64, label: u64) -> Self {
        Self {
            seed,
            replicate,
            label,
        }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        Self { replicate, ..self }
    }

    pub fn with_label(self, label: u64) -> Self {
        Self { label, ..self }
    }

    /// Derive a master seed for a sub-experiment, e.g. one `n` of a sweep.
    pub fn derive_seed(self, tag: u64) -> u64 {
        let digest = self.digest(tag);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    fn digest(self, extra: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"sheetsim/stream/v1");
        h.update(self.seed.to_le_bytes());
        h.update(self.replicate.to_le_bytes());
        h.update(self.label.to_le_bytes());
        h.update(extra.to_le_bytes());
        h.finalize().into()
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest(0))
    }
}

/// Law of the lattice innovations; every variant is centered with unit variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InnovationLaw {
    #[default]
    Rademacher,
    StandardGaussian,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    CenteredUniform,
}

impl InnovationLaw {
    pub const ALL: [InnovationLaw; 3] = [
        InnovationLaw::Rademacher,
        InnovationLaw::StandardGaussian,
        InnovationLaw::CenteredUniform,
    ];

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            InnovationLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationLaw::StandardGaussian => rng.sample(StandardNormal),
            InnovationLaw::CenteredUniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    /// Closed-form raw moment `E[Z^k]`.
    pub fn moment(self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        match self {
            InnovationLaw::Rademacher => 1.0,
            // (k - 1)!!
            InnovationLaw::StandardGaussian => (1..k).step_by(2).map(f64::from).product(),
            // a^k / (k + 1) with a = sqrt(3)
            InnovationLaw::CenteredUniform => 3f64.powi(k as i32 / 2) / f64::from(k + 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InnovationLaw::Rademacher => "rademacher",
            InnovationLaw::StandardGaussian => "gaussian",
            InnovationLaw::CenteredUniform => "uniform",
        }
    }
}

impl fmt::Display for InnovationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InnovationLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(InnovationLaw::Rademacher),
            "gaussian" | "normal" => Ok(InnovationLaw::StandardGaussian),
            "uniform" => Ok(InnovationLaw::CenteredUniform),
            other => Err(Error::domain(format!("unknown innovation law `{other}`"))),
        }
    }
}

fn check_box(upper: &ParamPoint) -> Result<()> {
    if upper.coords().iter().any(|c| *c <= 0.0) {
        return Err(Error::domain(format!(
            "box corner {upper} must be strictly positive"
        )));
    }
    Ok(())
}

/// Dense i.i.d. innovations `Z_k` for every `k <= ceil(n T)`.
///
/// Storage is row-major with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    n: u32,
    upper: ParamPoint,
    extents: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
    law: InnovationLaw,
    key: StreamKey,
}

impl LatticeField {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    pub fn upper(&self) -> &ParamPoint {
        &self.upper
    }

    /// Cells per axis, `ceil(n T_i)`.
    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn law(&self) -> InnovationLaw {
        self.law
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// `Z_k`, or `None` outside the materialized range.
    pub fn get(&self, k: &MultiIndex) -> Option<f64> {
        let comps = k.components();
        if comps.len() != self.dim() {
            return None;
        }
        let mut offset = 0;
        for ((c, e), s) in comps.iter().zip(&self.extents).zip(&self.strides) {
            if *c > *e {
                return None;
            }
            offset += (c - 1) * s;
        }
        Some(self.values[offset])
    }

    /// Build a field from explicit values (row-major, axis 0 fastest).
    pub fn from_values(
        n: u32,
        upper: ParamPoint,
        values: Vec<f64>,
        law: InnovationLaw,
    ) -> Result<Self> {
        let extents = lattice_extents(n, &upper)?;
        let total: usize = extents.iter().product();
        if total != values.len() {
            return Err(Error::Structural(format!(
                "lattice needs {total} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            n,
            strides: strides_of(&extents),
            extents,
            upper,
            values,
            law,
            key: StreamKey::new(0, 0, labels::LATTICE),
        })
    }
}

fn lattice_extents(n: u32, upper: &ParamPoint) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::domain("lattice scale n must be >= 1"));
    }
    check_box(upper)?;
    Ok(upper
        .coords()
        .iter()
        .map(|t| lattice_ceil(f64::from(n) * t).max(1))
        .collect())
}

fn strides_of(extents: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(extents.len());
    let mut acc = 1;
    for e in extents {
        strides.push(acc);
        acc *= e;
    }
    strides
}

/// Sample `Z_k`, `k <= ceil(n T)`, i.i.d. from `law`; deterministic in `key`.
pub fn sample_lattice_field(
    n: u32,
    upper: &ParamPoint,
    law: InnovationLaw,
    key: StreamKey,
) -> Result<LatticeField> {
    sample_lattice_field_with_budget(n, upper, law, key, DEFAULT_LATTICE_BUDGET)
}

pub fn sample_lattice_field_with_budget(
    n: u32,
    upper: &ParamPoint,
    law: InnovationLaw,
    key: StreamKey,
    budget: u128,
) -> Result<LatticeField> {
    let extents = lattice_extents(n, upper)?;
    let required = extents
        .iter()
        .fold(1u128, |acc, e| acc.saturating_mul(*e as u128));
    if required > budget {
        return Err(Error::Resource {
            what: "lattice field",
            required,
            budget,
        });
    }
    let mut rng = key.rng();
    let values = (0..required).map(|_| law.sample(&mut rng)).collect();
    Ok(LatticeField {
        n,
        upper: upper.clone(),
        strides: strides_of(&extents),
        extents,
        values,
        law,
        key,
    })
}

/// Realized points of a `d`-parameter Poisson process of intensity `n` on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSheet {
    intensity: f64,
    upper: ParamPoint,
    /// Flat coordinates, `dim` per point.
    coords: Vec<f64>,
    key: StreamKey,
}

impl PoissonSheet {
    /// A sheet with explicit points, all of which must lie in the open box.
    pub fn from_points(intensity: f64, upper: ParamPoint, points: &[ParamPoint]) -> Result<Self> {
        check_box(&upper)?;
        let d = upper.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            p.check_dim(d)?;
            if p.coords()
                .iter()
                .zip(upper.coords())
                .any(|(x, t)| *x <= 0.0 || x >= t)
            {
                return Err(Error::domain(format!(
                    "point {p} is not strictly inside the box"
                )));
            }
            coords.extend_from_slice(p.coords());
        }
        Ok(Self {
            intensity,
            upper,
            coords,
            key: StreamKey::new(0, 0, labels::POISSON),
        })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn upper(&self) -> &ParamPoint {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Coordinates of each point.
    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    /// `N(t)`: number of points `p <= t` componentwise.
    pub fn count_points(&self, t: &ParamPoint) -> Result<usize> {
        t.check_dim(self.dim())?;
        if !t.le(&self.upper) {
            return Err(Error::domain(format!(
                "{t} lies outside the box {}",
                self.upper
            )));
        }
        Ok(self.count_unchecked(t.coords()))
    }

    pub(crate) fn count_unchecked(&self, t: &[f64]) -> usize {
        self.points()
            .filter(|p| p.iter().zip(t).all(|(x, y)| x <= y))
            .count()
    }
}

/// Sample a Poisson sheet: a Poisson number of i.i.d. uniform points on the open box.
pub fn sample_poisson_sheet(
    intensity: f64,
    upper: &ParamPoint,
    key: StreamKey,
) -> Result<PoissonSheet> {
    sample_poisson_sheet_with_budget(intensity, upper, key, DEFAULT_POINT_BUDGET)
}

pub fn sample_poisson_sheet_with_budget(
    intensity: f64,
    upper: &ParamPoint,
    key: StreamKey,
    budget: u128,
) -> Result<PoissonSheet> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::domain(format!(
            "intensity {intensity} must be positive"
        )));
    }
    check_box(upper)?;
    let mean = intensity * upper.volume();
    if mean > budget as f64 / 2.0 {
        return Err(Error::Resource {
            what: "poisson sheet",
            required: (mean * 2.0) as u128,
            budget,
        });
    }
    let mut rng = key.rng();
    let count = Poisson::new(mean)
        .map_err(|e| Error::Numeric(format!("poisson law with mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let d = upper.dim();
    let mut coords = Vec::with_capacity(count * d);
    for _ in 0..count {
        for t in upper.coords() {
            let u: f64 = Open01.sample(&mut rng);
            coords.push(u * t);
        }
    }
    Ok(PoissonSheet {
        intensity,
        upper: upper.clone(),
        coords,
        key,
    })
}

/// Free-function form of [`PoissonSheet::count_points`].
pub fn count_points(sheet: &PoissonSheet, t: &ParamPoint) -> Result<usize> {
    sheet.count_points(t)
}
