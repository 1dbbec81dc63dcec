//! Parameter-space geometry on boxes `[0, T]` in the nonnegative orthant.
//!
//! Rectangles are half-open, `(lo, hi]`, so that a family of rectangles
//! produced by splitting along breakpoints is exactly disjoint.

use std::fmt;

use crate::error::{Error, Result};

/// Default cap on the ambient dimension.
pub const DEFAULT_MAX_DIM: usize = 4;

/// A point of the parameter space; every coordinate is finite and `>= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Structural(
                "a point needs at least one coordinate".into(),
            ));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::domain(format!(
                "coordinate {bad} is not a finite nonnegative real"
            )));
        }
        Ok(Self(coords))
    }

    /// The origin of dimension `dim`.
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    /// The same value on every axis.
    pub fn splat(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Product of the coordinates, i.e. the volume of `[0, self]`.
    pub fn volume(&self) -> f64 {
        self.0.iter().product()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &ParamPoint) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// True when some coordinate is zero.
    pub fn on_axes(&self) -> bool {
        self.0.contains(&0.0)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Componentwise minimum `a ∧ b`.
pub fn meet(a: &ParamPoint, b: &ParamPoint) -> Result<ParamPoint> {
    b.check_dim(a.dim())?;
    Ok(ParamPoint(
        a.0.iter().zip(&b.0).map(|(x, y)| x.min(*y)).collect(),
    ))
}

/// Half-open rectangle `(lo, hi]` with `lo <= hi` componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    lo: ParamPoint,
    hi: ParamPoint,
}

impl Rect {
    pub fn new(lo: ParamPoint, hi: ParamPoint) -> Result<Self> {
        hi.check_dim(lo.dim())?;
        if !lo.le(&hi) {
            return Err(Error::domain(format!(
                "rectangle corners are not ordered: {lo} > {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `(0, t]`, which up to a null set is `[0, t]`.
    pub fn from_origin(t: &ParamPoint) -> Self {
        Self {
            lo: ParamPoint::zeros(t.dim()),
            hi: t.clone(),
        }
    }

    pub fn lo(&self) -> &ParamPoint {
        &self.lo
    }

    pub fn hi(&self) -> &ParamPoint {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .0
            .iter()
            .zip(&self.hi.0)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.0.iter().zip(&self.hi.0).any(|(a, b)| a >= b)
    }

    /// Half-open membership: strict on the lower face, inclusive on the upper.
    pub fn contains(&self, p: &ParamPoint) -> bool {
        p.dim() == self.dim()
            && p.0
                .iter()
                .zip(self.lo.0.iter().zip(&self.hi.0))
                .all(|(x, (a, b))| a < x && x <= b)
    }

    /// `self ⊂ other` as sets.
    pub fn is_inside(&self, other: &Rect) -> bool {
        self.is_empty() || (other.lo.le(&self.lo) && self.hi.le(&other.hi))
    }

    /// Intersection; `None` when empty.
    pub fn intersect(&self, other: &Rect) -> Result<Option<Rect>> {
        other.lo.check_dim(self.dim())?;
        let lo: Vec<f64> = self
            .lo
            .0
            .iter()
            .zip(&other.lo.0)
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .0
            .iter()
            .zip(&other.hi.0)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Ok(None);
        }
        Ok(Some(Rect {
            lo: ParamPoint(lo),
            hi: ParamPoint(hi),
        }))
    }

    /// Disjoint rectangles covering `within \ self` (slab decomposition,
    /// at most `2 d` pieces).
    pub fn complement_in(&self, within: &Rect) -> Result<Vec<Rect>> {
        let Some(core) = self.intersect(within)? else {
            return Ok(vec![within.clone()]);
        };
        let d = self.dim();
        let mut pieces = Vec::with_capacity(2 * d);
        for axis in 0..d {
            let mut lo = within.lo.0.clone();
            let mut hi = within.hi.0.clone();
            lo[..axis].copy_from_slice(&core.lo.0[..axis]);
            hi[..axis].copy_from_slice(&core.hi.0[..axis]);
            let below = {
                let mut h = hi.clone();
                h[axis] = core.lo.0[axis];
                (lo.clone(), h)
            };
            let above = {
                let mut l = lo.clone();
                l[axis] = core.hi.0[axis];
                (l, hi.clone())
            };
            for (l, h) in [below, above] {
                if l.iter().zip(&h).all(|(a, b)| a < b) {
                    pieces.push(Rect {
                        lo: ParamPoint(l),
                        hi: ParamPoint(h),
                    });
                }
            }
        }
        Ok(pieces)
    }

    /// The `2^d` corners of the rectangle with inclusion-exclusion signs.
    ///
    /// Corner `j` takes `hi` on the axes where bit `i` of `j` is clear and
    /// `lo` where it is set; the sign is `(-1)^{popcount(j)}`.
    pub fn increment_points(&self) -> Vec<(ParamPoint, i8)> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                let coords = (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.lo.0[i]
                        } else {
                            self.hi.0[i]
                        }
                    })
                    .collect();
                let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                (ParamPoint(coords), sign)
            })
            .collect()
    }

    /// Rectangular increment `Δ_lo F(hi)` of a function over this rectangle.
    pub fn increment_of<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&ParamPoint) -> Result<f64>,
    {
        let mut acc = 0.0;
        for (p, sign) in self.increment_points() {
            acc += f64::from(sign) * f(&p)?;
        }
        Ok(acc)
    }
}

/// Free-function form of [`Rect::increment_points`].
pub fn increment_points(r: &Rect) -> Vec<(ParamPoint, i8)> {
    r.increment_points()
}

/// A lattice multi-index; every component is `>= 1` and indexes the cell
/// `[k - 1, k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(k: Vec<usize>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::Structural(
                "a multi-index needs at least one component".into(),
            ));
        }
        if k.contains(&0) {
            return Err(Error::domain("multi-index components start at 1"));
        }
        Ok(Self(k))
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The cell of `n * t`, i.e. the unique `k` with `n t ∈ [k - 1, k)`.
    pub fn of_scaled_point(n: u32, t: &ParamPoint) -> Self {
        Self(
            t.0.iter()
                .map(|c| lattice_floor(f64::from(n) * c) + 1)
                .collect(),
        )
    }
}

/// Per-axis sorted breakpoints over `[0, T_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    axes: Vec<Vec<f64>>,
}

impl EvalGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Structural("grid needs at least one axis".into()));
        }
        for (i, axis) in axes.iter().enumerate() {
            if axis.len() < 2 || axis[0] != 0.0 {
                return Err(Error::Structural(format!(
                    "axis {i} must start at 0 and have an end"
                )));
            }
            if axis.windows(2).any(|w| !(w[0] < w[1])) || !axis.iter().all(|x| x.is_finite()) {
                return Err(Error::Structural(format!(
                    "axis {i} is not strictly increasing"
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Merge arbitrary per-axis coordinates into a grid over `[0, T]`,
    /// dropping anything outside the box.
    pub fn from_breakpoints(upper: &ParamPoint, extra: &[Vec<f64>]) -> Result<Self> {
        let d = upper.dim();
        if extra.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: extra.len(),
            });
        }
        let axes = (0..d)
            .map(|i| {
                let top = upper.0[i];
                let mut axis: Vec<f64> = extra[i]
                    .iter()
                    .copied()
                    .filter(|x| *x > 0.0 && *x < top)
                    .collect();
                axis.push(0.0);
                axis.push(top);
                axis.sort_by(f64::total_cmp);
                axis.dedup();
                axis
            })
            .collect();
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of cells, saturating.
    pub fn cell_count(&self) -> u128 {
        self.axes
            .iter()
            .map(|a| (a.len() - 1) as u128)
            .fold(1u128, |acc, x| acc.saturating_mul(x))
    }

    /// The upper corner `T`.
    pub fn upper(&self) -> ParamPoint {
        ParamPoint(self.axes.iter().map(|a| *a.last().unwrap()).collect())
    }
}

/// `floor(x)` for `x >= 0`, snapping values within rounding noise of an
/// integer onto it so that `n * t` with `t = k / n` lands on `k`.
pub(crate) fn lattice_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// `ceil(x)` with the same snapping as [`lattice_floor`].
pub(crate) fn lattice_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Odometer over the index box `lo[i] ..= hi[i]` (inclusive), axis 0 fastest.
pub(crate) fn for_each_index(lo: &[usize], hi: &[usize], mut f: impl FnMut(&[usize])) {
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return;
    }
    let mut idx = lo.to_vec();
    loop {
        f(&idx);
        let mut axis = 0;
        loop {
            if axis == idx.len() {
                return;
            }
            if idx[axis] < hi[axis] {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo[axis];
            axis += 1;
        }
    }
}
