//! Kac-Stroock kernels `θ_n(t) = n^{d/2} (∏ t_i)^{(d-1)/2} (-1)^{N_n(t)}`.
//!
//! `N_n` is a staircase: it only changes when `t` crosses a point coordinate
//! on some axis. Splitting every axis at all point coordinates gives a grid
//! of open cells of constant parity, and on each cell the weight
//! `(∏ t_i)^{(d-1)/2}` factorizes per axis. Integrals of simple functions are
//! therefore exact sums of products of one-dimensional antiderivatives.

use crate::error::{Error, Result};
use crate::geometry::ParamPoint;
use crate::integrand::SimpleFunction;
use crate::parallel::{mean_of, replicate_map, Workers};
use crate::random::{labels, sample_poisson_sheet, PoissonSheet, StreamKey};

/// Default cap on the number of parity cells.
pub const DEFAULT_CELL_BUDGET: u128 = 10_000_000;

/// Open cells of constant parity, axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityCellGrid {
    /// `0, sorted point coordinates, T_i` per axis; duplicates kept, giving
    /// zero-width cells.
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    /// `±1.0` per cell.
    parity: Vec<f64>,
}

impl ParityCellGrid {
    /// Build the grid for a sheet in `O(cells · d + points · d log points)`.
    pub fn build(sheet: &PoissonSheet, budget: u128) -> Result<Self> {
        let d = sheet.dim();
        let k = sheet.len();
        let required = (k as u128 + 1).checked_pow(d as u32).unwrap_or(u128::MAX);
        if required > budget {
            return Err(Error::Resource {
                what: "parity cell grid",
                required,
                budget,
            });
        }
        let extent = k + 1;
        let mut strides = Vec::with_capacity(d);
        let mut acc = 1usize;
        for _ in 0..d {
            strides.push(acc);
            acc *= extent;
        }
        let cells = acc;

        // rank of each point on each axis (1-based), and the sorted axes
        let points: Vec<&[f64]> = sheet.points().collect();
        let mut ranks = vec![0usize; k * d];
        let mut axes = Vec::with_capacity(d);
        for i in 0..d {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|a, b| points[*a][i].total_cmp(&points[*b][i]));
            let mut axis = Vec::with_capacity(k + 2);
            axis.push(0.0);
            for (r, idx) in order.iter().enumerate() {
                ranks[idx * d + i] = r + 1;
                axis.push(points[*idx][i]);
            }
            axis.push(sheet.upper().coords()[i]);
            axes.push(axis);
        }

        // point p is <= every u in cell c iff rank(p) <= c componentwise:
        // mark ranks, then prefix-xor along each axis
        let mut bits = vec![0u8; cells];
        for p in 0..k {
            let offset: usize = (0..d).map(|i| ranks[p * d + i] * strides[i]).sum();
            bits[offset] ^= 1;
        }
        for &stride in strides.iter().take(d) {
            for offset in 0..cells {
                if (offset / stride) % extent != 0 {
                    bits[offset] ^= bits[offset - stride];
                }
            }
        }
        let parity = bits
            .into_iter()
            .map(|b| if b == 0 { 1.0 } else { -1.0 })
            .collect();
        Ok(Self {
            axes,
            strides,
            parity,
        })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn cell_count(&self) -> usize {
        self.parity.len()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Parity of the cell at per-axis indices `c`.
    pub fn cell_parity(&self, c: &[usize]) -> f64 {
        self.parity[c
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a * s)
            .sum::<usize>()]
    }

    /// `(-1)^{N(t)}` by cell lookup. Points on a face count as `<= t`.
    pub fn parity_at(&self, t: &[f64]) -> f64 {
        let c: Vec<usize> = self
            .axes
            .iter()
            .zip(t)
            .map(|(axis, x)| {
                let coords = &axis[1..axis.len() - 1];
                coords.partition_point(|b| b <= x)
            })
            .collect();
        self.cell_parity(&c)
    }

    /// `Σ_cells parity(c) ∏_i W_i(c_i)` with per-axis `(first, weights)`.
    fn contract(&self, axes: &[(usize, Vec<f64>)]) -> f64 {
        if axes.iter().any(|(_, w)| w.is_empty()) {
            return 0.0;
        }
        let (first0, w0) = &axes[0];
        let outer = &axes[1..];
        let mut idx = vec![0usize; outer.len()];
        let mut total = 0.0;
        loop {
            let mut base = *first0;
            let mut weight = 1.0;
            for (a, (first, w)) in outer.iter().enumerate() {
                base += (first + idx[a]) * self.strides[a + 1];
                weight *= w[idx[a]];
            }
            let row = &self.parity[base..base + w0.len()];
            let dot: f64 = row.iter().zip(w0).map(|(s, w)| s * w).sum();
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

/// A sampled Kac-Stroock kernel with its parity grid.
#[derive(Clone, Debug)]
pub struct KacStroockKernel {
    sheet: PoissonSheet,
    grid: ParityCellGrid,
}

impl KacStroockKernel {
    pub fn new(sheet: PoissonSheet) -> Result<Self> {
        Self::with_budget(sheet, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(sheet: PoissonSheet, budget: u128) -> Result<Self> {
        let grid = ParityCellGrid::build(&sheet, budget)?;
        Ok(Self { sheet, grid })
    }

    /// Sample the driving Poisson sheet with intensity `n` on `[0, T]`.
    pub fn sample(n: u32, upper: &ParamPoint, key: StreamKey) -> Result<Self> {
        Self::new(sample_poisson_sheet(f64::from(n), upper, key)?)
    }

    pub fn sheet(&self) -> &PoissonSheet {
        &self.sheet
    }

    pub fn cell_grid(&self) -> &ParityCellGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.sheet.dim()
    }

    pub fn intensity(&self) -> f64 {
        self.sheet.intensity()
    }

    fn scale(&self) -> f64 {
        self.intensity().powf(self.dim() as f64 / 2.0)
    }

    fn weight_exponent(&self) -> f64 {
        (self.dim() as f64 - 1.0) / 2.0
    }

    /// `θ_n(t)` with `N_n(t)` counted directly from the points.
    pub fn theta_at(&self, t: &ParamPoint) -> Result<f64> {
        let count = self.sheet.count_points(t)?;
        let sign = if count % 2 == 0 { 1.0 } else { -1.0 };
        Ok(self.scale() * t.volume().powf(self.weight_exponent()) * sign)
    }

    /// `θ_n(t)` with the parity read from the cell grid.
    pub fn theta_at_by_grid(&self, t: &ParamPoint) -> Result<f64> {
        t.check_dim(self.dim())?;
        if !t.le(self.sheet.upper()) {
            return Err(Error::domain(format!(
                "{t} lies outside the box {}",
                self.sheet.upper()
            )));
        }
        Ok(
            self.scale()
                * t.volume().powf(self.weight_exponent())
                * self.grid.parity_at(t.coords()),
        )
    }

    /// Exact `∫ f θ_n`.
    ///
    /// On a cell, `∫ (∏ u_i)^{(d-1)/2} du` over the overlap with a support is
    /// `∏_i [F(b_i) - F(a_i)]` with `F(x) = 2 x^{(d+1)/2} / (d + 1)`.
    pub fn integrate_simple(&self, f: &SimpleFunction) -> Result<f64> {
        f.upper().check_dim(self.dim())?;
        if !f.upper().le(self.sheet.upper()) {
            return Err(Error::domain("integrand box exceeds the kernel box"));
        }
        let d = self.dim() as f64;
        let power = (d + 1.0) / 2.0;
        let norm = 2.0 / (d + 1.0);
        let antiderivative = |x: f64| norm * x.powf(power);
        let mut total = 0.0;
        for (c, r) in f.terms() {
            let axes: Vec<(usize, Vec<f64>)> = self
                .grid
                .axes
                .iter()
                .zip(r.lo().coords().iter().zip(r.hi().coords()))
                .map(|(b, (lo, hi))| {
                    // cells j with b[j] < hi and b[j + 1] > lo
                    let first = b[1..].partition_point(|x| x <= lo);
                    let last = b[..b.len() - 1].partition_point(|x| x < hi);
                    let weights = (first..last)
                        .map(|j| antiderivative(hi.min(b[j + 1])) - antiderivative(lo.max(b[j])))
                        .collect();
                    (first, weights)
                })
                .collect();
            total += c * self.grid.contract(&axes);
        }
        Ok(self.scale() * total)
    }
}

/// Free-function form: a fresh grid for the kernel's sheet under the default budget.
pub fn build_cell_grid(kern: &KacStroockKernel) -> Result<ParityCellGrid> {
    ParityCellGrid::build(kern.sheet(), DEFAULT_CELL_BUDGET)
}

/// Upper bound on `|E[(-1)^{Σ_j N_n(u^j)}]|` for points `u^j` above a
/// strictly positive corner `s`:
/// `∏_i exp(-2 n S_i Σ_j (u_i^{(2j)} - u_i^{(2j-1)}))`, `S_i = ∏_{l≠i} s_l`,
/// where `u_i^{(·)}` are the `i`-th coordinates in increasing order.
pub fn parity_expectation_bound(n: f64, s: &ParamPoint, points: &[ParamPoint]) -> Result<f64> {
    if points.is_empty() || points.len() % 2 == 1 {
        return Err(Error::domain(format!(
            "need an even number of points, got {}",
            points.len()
        )));
    }
    let d = s.dim();
    if s.coords().iter().any(|x| *x <= 0.0) {
        return Err(Error::domain(format!(
            "lower corner {s} must be strictly positive"
        )));
    }
    for u in points {
        u.check_dim(d)?;
        if !s.le(u) {
            return Err(Error::domain(format!("point {u} is not above {s}")));
        }
    }
    let mut exponent = 0.0;
    for i in 0..d {
        let others: f64 = (0..d).filter(|l| *l != i).map(|l| s.coords()[l]).product();
        let mut coords: Vec<f64> = points.iter().map(|u| u.coords()[i]).collect();
        coords.sort_by(f64::total_cmp);
        let gaps: f64 = coords.chunks_exact(2).map(|pair| pair[1] - pair[0]).sum();
        exponent += others * gaps;
    }
    Ok((-2.0 * n * exponent).exp())
}

/// Monte Carlo estimate of `E[(-1)^{Σ_j N_n(u^j)}]` with its standard error,
/// over `reps` sheets of intensity `n` on `[0, upper]`.
pub fn parity_sum_estimate(
    n: f64,
    upper: &ParamPoint,
    points: &[ParamPoint],
    reps: u64,
    seed: u64,
    workers: Workers,
) -> Result<(f64, f64)> {
    for u in points {
        u.check_dim(upper.dim())?;
        if !u.le(upper) {
            return Err(Error::domain(format!(
                "point {u} lies outside the box {upper}"
            )));
        }
    }
    if reps < 2 {
        return Err(Error::domain("need at least two replicates"));
    }
    let key = StreamKey::new(seed, 0, labels::POISSON);
    let signs = replicate_map(reps, workers, |r| {
        let sheet = sample_poisson_sheet(n, upper, key.with_replicate(r))?;
        let total: usize = points
            .iter()
            .map(|u| sheet.count_unchecked(u.coords()))
            .sum();
        Ok(if total.is_multiple_of(2) { 1.0 } else { -1.0 })
    })?;
    let mean = mean_of(&signs, |x| x);
    let var = mean_of(&signs, |x| (x - mean) * (x - mean)) * reps as f64 / (reps - 1) as f64;
    Ok((mean, (var / reps as f64).sqrt()))
}
