//! Simple functions on disjoint rectangles and their norm algebra.
//!
//! Every integrand in the library is a finite sum `Σ c_j 1_{A_j}` with
//! pairwise disjoint half-open rectangles `A_j ⊂ [0, T]`. Integrals of such
//! functions against both kernel families are exact, so convergence
//! experiments carry no quadrature error. A smooth integrand can be
//! approximated by sampling it at cell midpoints of a fine [`EvalGrid`]
//! (see [`SimpleFunction::from_grid`]) and refining the grid.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{for_each_index, EvalGrid, ParamPoint, Rect};

/// Exponent `q >= 1` of the `L^{2q}` moment condition.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExponentQ(f64);

impl ExponentQ {
    pub fn new(q: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::domain(format!(
                "exponent q = {q} must satisfy 1 <= q < inf"
            )));
        }
        Ok(Self(q))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `Σ c_j 1_{A_j}` with pairwise disjoint supports inside `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFunction {
    upper: ParamPoint,
    terms: Vec<(f64, Rect)>,
}

impl SimpleFunction {
    /// Validates dimensions, containment in the box and disjointness.
    /// Empty supports and zero coefficients are dropped.
    pub fn new(upper: ParamPoint, terms: Vec<(f64, Rect)>) -> Result<Self> {
        let boxed = Rect::from_origin(&upper);
        let mut kept: Vec<(f64, Rect)> = Vec::with_capacity(terms.len());
        for (c, r) in terms {
            r.lo().check_dim(upper.dim())?;
            if !c.is_finite() {
                return Err(Error::domain(format!("coefficient {c} is not finite")));
            }
            if !r.is_inside(&boxed) {
                return Err(Error::domain(format!(
                    "support ({}, {}] leaves the box",
                    r.lo(),
                    r.hi()
                )));
            }
            if c == 0.0 || r.is_empty() {
                continue;
            }
            if let Some((_, other)) = kept
                .iter()
                .find(|(_, o)| o.intersect(&r).ok().flatten().is_some())
            {
                return Err(Error::Structural(format!(
                    "supports ({}, {}] and ({}, {}] overlap",
                    other.lo(),
                    other.hi(),
                    r.lo(),
                    r.hi()
                )));
            }
            kept.push((c, r));
        }
        Ok(Self { upper, terms: kept })
    }

    pub fn zero(upper: ParamPoint) -> Self {
        Self {
            upper,
            terms: Vec::new(),
        }
    }

    /// `c` on the whole box.
    pub fn constant(upper: ParamPoint, c: f64) -> Result<Self> {
        let r = Rect::from_origin(&upper);
        Self::new(upper, vec![(c, r)])
    }

    /// `c · 1_{(0, t]}`.
    pub fn indicator_below(upper: ParamPoint, t: &ParamPoint, c: f64) -> Result<Self> {
        Self::new(upper, vec![(c, Rect::from_origin(t))])
    }

    /// Piecewise constant function with `values[cell]` on each cell of `grid`
    /// (cells enumerated axis 0 fastest).
    pub fn from_grid(grid: &EvalGrid, values: &[f64]) -> Result<Self> {
        let axes = grid.axes();
        let lo = vec![0; axes.len()];
        let hi: Vec<usize> = axes.iter().map(|a| a.len() - 2).collect();
        if grid.cell_count() != values.len() as u128 {
            return Err(Error::Structural(format!(
                "grid has {} cells but {} values were given",
                grid.cell_count(),
                values.len()
            )));
        }
        let mut terms = Vec::new();
        let mut i = 0;
        let mut err = None;
        for_each_index(&lo, &hi, |idx| {
            let c = values[i];
            i += 1;
            if c == 0.0 || err.is_some() {
                return;
            }
            let cell = ParamPoint::new(idx.iter().zip(axes).map(|(k, a)| a[*k]).collect())
                .and_then(|l| {
                    Ok((
                        l,
                        ParamPoint::new(idx.iter().zip(axes).map(|(k, a)| a[*k + 1]).collect())?,
                    ))
                })
                .and_then(|(l, h)| Rect::new(l, h));
            match cell {
                Ok(r) => terms.push((c, r)),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Self {
            upper: grid.upper(),
            terms,
        })
    }

    pub fn upper(&self) -> &ParamPoint {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    pub fn terms(&self) -> &[(f64, Rect)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Pointwise value with half-open supports.
    pub fn evaluate(&self, t: &ParamPoint) -> f64 {
        self.terms
            .iter()
            .find(|(_, r)| r.contains(t))
            .map_or(0.0, |(c, _)| *c)
    }

    /// `(Σ |c_j|^p vol(A_j))^{1/p}`, exact.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        Ok(self.lp_integral(p)?.powf(1.0 / p))
    }

    /// `∫ |f|^p = Σ |c_j|^p vol(A_j)`.
    pub fn lp_integral(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::domain(format!("norm exponent {p} must be >= 1")));
        }
        Ok(self
            .terms
            .iter()
            .map(|(c, r)| c.abs().powf(p) * r.volume())
            .sum())
    }

    pub fn scale(&self, a: f64) -> Self {
        if a == 0.0 {
            return Self::zero(self.upper.clone());
        }
        Self {
            upper: self.upper.clone(),
            terms: self.terms.iter().map(|(c, r)| (a * c, r.clone())).collect(),
        }
    }

    /// `f · 1_r`: supports intersected with `r`.
    pub fn restrict(&self, r: &Rect) -> Result<Self> {
        r.lo().check_dim(self.dim())?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (c, s) in &self.terms {
            if let Some(piece) = s.intersect(r)? {
                terms.push((*c, piece));
            }
        }
        Ok(Self {
            upper: self.upper.clone(),
            terms,
        })
    }

    /// Pointwise product; supports are the pairwise intersections.
    pub fn product(&self, other: &SimpleFunction) -> Result<Self> {
        other.upper.check_dim(self.dim())?;
        let mut terms = Vec::new();
        for (a, r) in &self.terms {
            for (b, s) in &other.terms {
                if let Some(piece) = r.intersect(s)? {
                    let c = a * b;
                    if c != 0.0 {
                        terms.push((c, piece));
                    }
                }
            }
        }
        Ok(Self {
            upper: self.upper.clone(),
            terms,
        })
    }

    /// Every support corner coordinate per axis, plus 0 and `T_i`.
    pub fn breakpoints(&self) -> Result<EvalGrid> {
        let mut extra = vec![Vec::with_capacity(2 * self.terms.len()); self.dim()];
        for (_, r) in &self.terms {
            for (i, axis) in extra.iter_mut().enumerate() {
                axis.push(r.lo().coords()[i]);
                axis.push(r.hi().coords()[i]);
            }
        }
        EvalGrid::from_breakpoints(&self.upper, &extra)
    }

    /// Parse the line format `coeff lo_1 … lo_d hi_1 … hi_d`; blank lines and
    /// `#` comments are skipped.
    pub fn parse(upper: ParamPoint, text: &str) -> Result<Self> {
        let d = upper.dim();
        let mut terms = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            terms.push(parse_term(line, d).map_err(|m| Error::usage("term", Some(lineno + 1), m))?);
        }
        Self::new(upper, terms)
    }

    /// Inverse of [`SimpleFunction::parse`], with round-trip exact reals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, r) in &self.terms {
            let _ = write!(out, "{c:?}");
            for x in r.lo().coords().iter().chain(r.hi().coords()) {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        out
    }
}

/// One term of the integrand line format.
pub(crate) fn parse_term(line: &str, d: usize) -> std::result::Result<(f64, Rect), String> {
    let nums: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| format!("`{tok}` is not a number"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if nums.len() != 1 + 2 * d {
        return Err(format!(
            "expected {} numbers (coeff, {d} lower, {d} upper), got {}",
            1 + 2 * d,
            nums.len()
        ));
    }
    let lo = ParamPoint::new(nums[1..=d].to_vec()).map_err(|e| e.to_string())?;
    let hi = ParamPoint::new(nums[1 + d..].to_vec()).map_err(|e| e.to_string())?;
    let r = Rect::new(lo, hi).map_err(|e| e.to_string())?;
    Ok((nums[0], r))
}

/// Free-function form of [`SimpleFunction::lp_norm`].
pub fn lp_norm(f: &SimpleFunction, p: f64) -> Result<f64> {
    f.lp_norm(p)
}

/// Free-function form of [`SimpleFunction::restrict`].
pub fn restrict(f: &SimpleFunction, r: &Rect) -> Result<SimpleFunction> {
    f.restrict(r)
}

/// Canonical refinement of `Σ a_j 1_{[0, t_j]}` on `[0, T]`.
///
/// The box is split along every corner coordinate; each cell gets the sum of
/// the coefficients whose corner dominates it, and zero cells are pruned.
pub fn indicator_combo(
    upper: &ParamPoint,
    coeffs: &[f64],
    corners: &[ParamPoint],
) -> Result<SimpleFunction> {
    if coeffs.len() != corners.len() {
        return Err(Error::Structural(format!(
            "{} coefficients for {} corners",
            coeffs.len(),
            corners.len()
        )));
    }
    let d = upper.dim();
    for t in corners {
        t.check_dim(d)?;
        if !t.le(upper) {
            return Err(Error::domain(format!("corner {t} leaves the box {upper}")));
        }
    }
    let extra: Vec<Vec<f64>> = (0..d)
        .map(|i| corners.iter().map(|t| t.coords()[i]).collect())
        .collect();
    let grid = EvalGrid::from_breakpoints(upper, &extra)?;
    let axes = grid.axes();
    let lo = vec![0; d];
    let hi: Vec<usize> = axes.iter().map(|a| a.len() - 2).collect();
    let mut values = Vec::with_capacity(grid.cell_count() as usize);
    for_each_index(&lo, &hi, |idx| {
        // A cell (a, b] lies in [0, t] iff b <= t.
        let v: f64 = coeffs
            .iter()
            .zip(corners)
            .filter(|(_, t)| {
                idx.iter()
                    .zip(axes)
                    .zip(t.coords())
                    .all(|((k, a), tc)| a[*k + 1] <= *tc)
            })
            .map(|(c, _)| *c)
            .sum();
        values.push(v);
    });
    SimpleFunction::from_grid(&grid, &values)
}
