//! Donsker kernels `θ_n(t) = n^{d/2} Z_k` for `n t ∈ [k - 1, k)`, the
//! interpolated walk `ζ_n(t) = ∫_{[0,t]} θ_n`, and the remainder diagnostic
//! `R_n = ζ_n - S_n`.

use crate::error::{Error, Result};
use crate::geometry::{lattice_floor, MultiIndex, ParamPoint};
use crate::integrand::SimpleFunction;
use crate::random::{sample_lattice_field, InnovationLaw, LatticeField, StreamKey};

/// A sampled Donsker kernel. Immutable once built.
#[derive(Clone, Debug)]
pub struct DonskerKernel {
    field: LatticeField,
}

/// Overlap lengths of the scaled interval `[n lo, n hi]` with the unit cells
/// `[k - 1, k)`: returns the first 0-based cell and one weight per cell.
fn axis_weights(n: f64, lo: f64, hi: f64, extent: usize) -> (usize, Vec<f64>) {
    let a = n * lo;
    let b = n * hi;
    if !(a < b) {
        return (0, Vec::new());
    }
    let first = (a.floor() as usize).min(extent.saturating_sub(1));
    let last = (b.ceil() as usize).min(extent);
    let weights = (first..last)
        .map(|k| {
            let lo_k = k as f64;
            (b.min(lo_k + 1.0) - a.max(lo_k)).max(0.0)
        })
        .collect();
    (first, weights)
}

impl DonskerKernel {
    pub fn new(field: LatticeField) -> Self {
        Self { field }
    }

    /// Sample the innovations for scale `n` on `[0, T]`.
    pub fn sample(n: u32, upper: &ParamPoint, law: InnovationLaw, key: StreamKey) -> Result<Self> {
        Ok(Self::new(sample_lattice_field(n, upper, law, key)?))
    }

    pub fn field(&self) -> &LatticeField {
        &self.field
    }

    pub fn n(&self) -> u32 {
        self.field.n()
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    fn scale(&self) -> f64 {
        f64::from(self.n()).powf(self.dim() as f64 / 2.0)
    }

    /// `θ_n(t)`; cells are `[k - 1, k)`, so `t` must lie in `[0, T)`.
    pub fn theta_at(&self, t: &ParamPoint) -> Result<f64> {
        t.check_dim(self.dim())?;
        if t.coords()
            .iter()
            .zip(self.field.upper().coords())
            .any(|(x, top)| x >= top)
        {
            return Err(Error::domain(format!(
                "θ_n is evaluated on [0, T); {t} is on or beyond the upper face of {}",
                self.field.upper()
            )));
        }
        let k = MultiIndex::of_scaled_point(self.n(), t);
        let z = self.field.get(&k).ok_or_else(|| {
            Error::domain(format!("cell {:?} is outside the lattice", k.components()))
        })?;
        Ok(self.scale() * z)
    }

    /// `ζ_n(t) = ∫_{[0,t]} θ_n(u) du` in closed form.
    ///
    /// Per axis, the overlap of `[0, n t_i]` with a cell is 1 on full cells
    /// and the fractional part on the boundary cell, so the full-cell sum and
    /// the boundary term come out of one factorized contraction.
    pub fn zeta_at(&self, t: &ParamPoint) -> Result<f64> {
        t.check_dim(self.dim())?;
        if !t.le(self.field.upper()) {
            return Err(Error::domain(format!(
                "{t} lies outside the box {}",
                self.field.upper()
            )));
        }
        let n = f64::from(self.n());
        let axes: Vec<(usize, Vec<f64>)> = t
            .coords()
            .iter()
            .zip(self.field.extents())
            .map(|(ti, e)| axis_weights(n, 0.0, *ti, *e))
            .collect();
        Ok(self.contract(&axes) / self.scale())
    }

    /// `∫ f θ_n = n^{d/2} Σ_k Z_k Σ_j c_j vol(A_j ∩ [k - 1, k) / n)`, exact.
    pub fn integrate_simple(&self, f: &SimpleFunction) -> Result<f64> {
        f.upper().check_dim(self.dim())?;
        if !f.upper().le(self.field.upper()) {
            return Err(Error::domain("integrand box exceeds the kernel box"));
        }
        let n = f64::from(self.n());
        let mut total = 0.0;
        for (c, r) in f.terms() {
            let axes: Vec<(usize, Vec<f64>)> = r
                .lo()
                .coords()
                .iter()
                .zip(r.hi().coords())
                .zip(self.field.extents())
                .map(|((lo, hi), e)| axis_weights(n, *lo, *hi, *e))
                .collect();
            total += c * self.contract(&axes);
        }
        // weights are in scaled units: vol = n^{-d} ∏ w, and n^{d/2} n^{-d} = n^{-d/2}
        Ok(total / self.scale())
    }

    /// `S_n(t) = n^{-d/2} Σ_{k <= [n t]} Z_k`, the càdlàg partial sum.
    pub fn partial_sum_at(&self, t: &ParamPoint) -> Result<f64> {
        t.check_dim(self.dim())?;
        if !t.le(self.field.upper()) {
            return Err(Error::domain(format!(
                "{t} lies outside the box {}",
                self.field.upper()
            )));
        }
        let n = self.n();
        let axes: Vec<(usize, Vec<f64>)> = t
            .coords()
            .iter()
            .zip(self.field.extents())
            .map(|(ti, e)| (0, vec![1.0; lattice_floor(f64::from(n) * ti).min(*e)]))
            .collect();
        Ok(self.contract(&axes) / self.scale())
    }

    /// `Σ Z[k] ∏_i w_i[k_i]` over the index box described by per-axis
    /// `(first, weights)`; axis 0 is contiguous and contracted innermost.
    fn contract(&self, axes: &[(usize, Vec<f64>)]) -> f64 {
        if axes.iter().any(|(_, w)| w.is_empty()) {
            return 0.0;
        }
        let values = self.field.values();
        let strides = self.field.strides();
        let (first0, w0) = &axes[0];
        let outer = &axes[1..];
        let mut idx = vec![0usize; outer.len()];
        let mut total = 0.0;
        loop {
            let mut base = *first0;
            let mut weight = 1.0;
            for (a, (first, w)) in outer.iter().enumerate() {
                base += (first + idx[a]) * strides[a + 1];
                weight *= w[idx[a]];
            }
            let row = &values[base..base + w0.len()];
            let dot: f64 = row.iter().zip(w0).map(|(z, w)| z * w).sum();
            total += weight * dot;

            let mut a = 0;
            loop {
                if a == outer.len() {
                    return total;
                }
                idx[a] += 1;
                if idx[a] < outer[a].1.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

/// Exact `E[R_n(t)^2] = n^{-d} Σ_k vol(([0, n t] \ [0, [n t]]) ∩ [k - 1, k))^2`.
///
/// A cell meets the boundary region only when some `k_i = [n t_i] + 1`, and
/// its overlap is `∏_i a_i(k_i)` with `a_i = 1` on full cells and the
/// fractional part `φ_i` on the boundary cell, so the sum equals
/// `∏_i ([n t_i] + φ_i^2) - ∏_i [n t_i]`.
pub fn rn_second_moment(n: u32, t: &ParamPoint, upper: &ParamPoint) -> Result<f64> {
    t.check_dim(upper.dim())?;
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if !t.le(upper) {
        return Err(Error::domain(format!("{t} lies outside the box {upper}")));
    }
    let nf = f64::from(n);
    let (mut with_boundary, mut full) = (1.0, 1.0);
    for ti in t.coords() {
        let x = nf * ti;
        let whole = lattice_floor(x) as f64;
        let frac = (x - whole).max(0.0);
        with_boundary *= whole + frac * frac;
        full *= whole;
    }
    Ok((with_boundary - full).max(0.0) / nf.powi(t.dim() as i32))
}

/// Upper bound `(∏ T_j) ((n m / (n m - 1))^d - 1)` with `m = min_i t_i`,
/// valid once `n t_j >= 1` for every `j`; `None` before that.
pub fn rn_bound(n: u32, t: &ParamPoint, upper: &ParamPoint) -> Option<f64> {
    let nm = f64::from(n) * t.coords().iter().copied().fold(f64::INFINITY, f64::min);
    if nm < 1.0 {
        return None;
    }
    if nm == 1.0 {
        return Some(f64::INFINITY);
    }
    let d = t.dim() as i32;
    Some(upper.volume() * ((nm / (nm - 1.0)).powi(d) - 1.0))
}
