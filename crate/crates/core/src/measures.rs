//! Probability measures on 1D/2D flat tori, stored as cell densities on a
//! uniform periodic grid, together with the entropy-type functionals used by
//! the equilibrium and diagnostics code.
//!
//! All integrals are plain cell sums times the cell volume. On a uniform
//! periodic grid this rule is spectrally accurate for smooth periodic
//! integrands. Masses are summed in index order; the divergence functionals
//! sum their per-cell terms in sorted order, which makes them invariant under
//! circular shifts to the last bit.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Uniform periodic grid on the flat torus `[0, L)^dim`.
///
/// The cell width is always derived as `L / n`; it is never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid<T> {
    dim: usize,
    n: usize,
    length: T,
}

impl<T: Scalar> TorusGrid<T> {
    pub fn new(dim: usize, n: usize, length: T) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 {
            return Err(invalid(format!("need at least 8 points per axis, got {n}")));
        }
        if !(length.is_finite() && length > T::zero()) {
            return Err(invalid("torus circumference must be positive and finite"));
        }
        Ok(Self { dim, n, length })
    }

    /// Grid on the standard `2π` torus.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, T::TAU())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn circumference(&self) -> T {
        self.length
    }

    pub fn cell_width(&self) -> T {
        self.length / T::from_usize_lossy(self.n)
    }

    pub fn cell_volume(&self) -> T {
        self.cell_width().powi(self.dim as i32)
    }

    /// Total number of cells, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `L^dim`.
    pub fn volume(&self) -> T {
        self.length.powi(self.dim as i32)
    }

    /// Geodesic diameter: `L/2` per axis, Euclidean norm across axes.
    pub fn diameter(&self) -> T {
        self.length * T::half() * T::from_usize_lossy(self.dim).sqrt()
    }

    /// Per-axis indices of a flat (row-major) cell index.
    #[inline]
    pub fn axes_of(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    #[inline]
    pub fn flat_index(&self, axes: [usize; 2]) -> usize {
        if self.dim == 1 {
            axes[0]
        } else {
            axes[0] * self.n + axes[1]
        }
    }

    /// Index of the neighbouring cell `step` cells away along `axis`, with wrap-around.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let mut a = self.axes_of(idx);
        let n = self.n as isize;
        a[axis] = (a[axis] as isize + step).rem_euclid(n) as usize;
        self.flat_index(a)
    }

    /// Node coordinates of cell `idx` (first `dim` entries are meaningful).
    #[inline]
    pub fn point(&self, idx: usize) -> [T; 2] {
        let h = self.cell_width();
        let a = self.axes_of(idx);
        [T::from_usize_lossy(a[0]) * h, T::from_usize_lossy(a[1]) * h]
    }

    /// All node coordinates, flattened as `len() x dim`.
    pub fn points(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * self.dim);
        for idx in 0..self.len() {
            let p = self.point(idx);
            out.extend_from_slice(&p[..self.dim]);
        }
        out
    }

    /// Reduces a coordinate onto `[0, L)`.
    #[inline]
    pub fn wrap(&self, x: T) -> T {
        wrap_coordinate(x, self.length)
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "({} x {}, L={}) vs ({} x {}, L={})",
                self.dim, self.n, self.length, other.dim, other.n, other.length
            )))
        }
    }

    fn normalization_tolerance() -> T {
        T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
    }
}

/// Reduces `x` modulo `length` into `[0, length)`.
#[inline]
pub fn wrap_coordinate<T: Scalar>(x: T, length: T) -> T {
    let mut r = x % length;
    if r < T::zero() {
        r += length;
    }
    if r >= length {
        r -= length;
    }
    r
}

/// A probability density sampled at the nodes of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure<T> {
    grid: TorusGrid<T>,
    density: Vec<T>,
}

impl<T: Scalar> GridMeasure<T> {
    /// Constant density `1 / L^dim`.
    pub fn uniform(grid: TorusGrid<T>) -> Self {
        let value = T::one() / (T::from_usize_lossy(grid.len()) * grid.cell_volume());
        Self {
            grid,
            density: vec![value; grid.len()],
        }
    }

    /// Normalizes arbitrary non-negative weights into a density.
    pub fn from_weights(grid: TorusGrid<T>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} cells, got {}",
                grid.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("densities must be finite and non-negative"));
        }
        let mass = ordered_mass(&weights, grid.cell_volume());
        if mass <= T::zero() {
            return Err(invalid("density has zero mass"));
        }
        let density = weights.into_iter().map(|w| w / mass).collect();
        Ok(Self { grid, density })
    }

    /// Wraps an already normalized density without touching its bits.
    pub fn from_normalized(grid: TorusGrid<T>, density: Vec<T>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} cells, got {}",
                grid.len(),
                density.len()
            )));
        }
        if density.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("densities must be finite and non-negative"));
        }
        let mass = ordered_mass(&density, grid.cell_volume());
        if (mass - T::one()).abs() > TorusGrid::<T>::normalization_tolerance() {
            return Err(invalid(format!("density mass {mass} is not 1")));
        }
        Ok(Self { grid, density })
    }

    /// Density built from a closure of the node coordinates, then normalized.
    pub fn from_fn(grid: TorusGrid<T>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let weights = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Self::from_weights(grid, weights)
    }

    /// Gibbs measure `∝ exp(sign · potential / τ)`, returned with its log-partition
    /// `log ∑ exp(sign · potential / τ) · cell_volume`.
    pub fn gibbs_with_log_partition(
        grid: TorusGrid<T>,
        potential: &[T],
        sign: T,
        tau: T,
    ) -> Result<(Self, T)> {
        if potential.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "potential has {} entries for {} cells",
                potential.len(),
                grid.len()
            )));
        }
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(invalid("temperature must be positive"));
        }
        if potential.iter().any(|p| !p.is_finite()) {
            return Err(invalid("potential must be finite"));
        }
        let exponents: Vec<T> = potential.iter().map(|&p| sign * p / tau).collect();
        let shift = exponents
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| a.max(b));
        let weights: Vec<T> = exponents.iter().map(|&e| (e - shift).exp()).collect();
        let mass = ordered_mass(&weights, grid.cell_volume());
        let log_partition = shift + mass.ln();
        let density = weights.into_iter().map(|w| w / mass).collect();
        Ok((Self { grid, density }, log_partition))
    }

    pub fn gibbs(grid: TorusGrid<T>, potential: &[T], sign: T, tau: T) -> Result<Self> {
        Self::gibbs_with_log_partition(grid, potential, sign, tau).map(|(m, _)| m)
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn density(&self) -> &[T] {
        &self.density
    }

    pub fn into_density(self) -> Vec<T> {
        self.density
    }

    pub fn mass(&self) -> T {
        ordered_mass(&self.density, self.grid.cell_volume())
    }

    /// `∫ f dμ` for a per-cell function.
    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.density.len());
        let mut acc = T::zero();
        for (r, v) in self.density.iter().zip(values) {
            acc += *r * *v;
        }
        acc * self.grid.cell_volume()
    }

    /// `(1 - w) · self + w · other`.
    pub fn mix(&self, other: &Self, w: T) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(&a, &b)| (T::one() - w) * a + w * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            density,
        })
    }

    /// Circular shift by `shift[axis]` cells along each axis.
    pub fn shifted(&self, shift: [isize; 2]) -> Self {
        let g = self.grid;
        let mut density = vec![T::zero(); g.len()];
        for (idx, &v) in self.density.iter().enumerate() {
            let mut target = g.neighbor(idx, 0, shift[0]);
            if g.dim() == 2 {
                target = g.neighbor(target, 1, shift[1]);
            }
            density[target] = v;
        }
        Self { grid: g, density }
    }

    pub(crate) fn density_mut(&mut self) -> &mut [T] {
        &mut self.density
    }

    pub fn entropy(&self) -> T {
        entropy(self)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Writes the density as a CSV column preceded by a JSON header comment.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let header = GridHeader {
            dim: self.grid.dim(),
            n: self.grid.points_per_axis(),
            length: self.grid.circumference().to_f64_lossy(),
        };
        writeln!(out, "# {}", serde_json::to_string(&header)?)?;
        writeln!(out, "density")?;
        for v in &self.density {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Parse("empty density file".into()))??;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing JSON header line".into()))?;
        let header: GridHeader = serde_json::from_str(json.trim())?;
        let grid = TorusGrid::new(header.dim, header.n, T::lit(header.length))?;
        let mut density = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "density" {
                continue;
            }
            let v = line
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("bad density value `{line}`")))?;
            density.push(v);
        }
        Self::from_normalized(grid, density)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    dim: usize,
    n: usize,
    #[serde(rename = "L")]
    length: f64,
}

fn ordered_mass<T: Scalar>(values: &[T], cell_volume: T) -> T {
    let mut acc = T::zero();
    for v in values {
        acc += *v;
    }
    acc * cell_volume
}

/// Sums per-cell terms in sorted order, so the result depends only on the
/// multiset of terms: circular shifts of the inputs reproduce it bit for bit.
pub(crate) fn canonical_sum<T: Scalar>(mut terms: Vec<T>) -> T {
    terms.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut acc = T::zero();
    for t in terms {
        acc += t;
    }
    acc
}

/// Differential entropy `-∫ ρ log ρ`, with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(mu: &GridMeasure<T>) -> T {
    let terms = mu
        .density
        .iter()
        .filter(|r| **r > T::zero())
        .map(|&r| r * r.ln())
        .collect();
    -canonical_sum(terms) * mu.grid.cell_volume()
}

/// Kullback-Leibler divergence `∫ log(dμ₁/dμ₂) dμ₁`.
///
/// Returns `+∞` when `μ₁` is not absolutely continuous with respect to `μ₂`;
/// round-off negatives are clamped to zero.
pub fn relative_entropy<T: Scalar>(mu1: &GridMeasure<T>, mu2: &GridMeasure<T>) -> Result<T> {
    mu1.grid.check_same(&mu2.grid)?;
    let mut terms = Vec::with_capacity(mu1.density.len());
    for (&a, &b) in mu1.density.iter().zip(&mu2.density) {
        if a > T::zero() {
            if b <= T::zero() {
                return Ok(T::infinity());
            }
            terms.push(a * (a / b).ln());
        }
    }
    Ok((canonical_sum(terms) * mu1.grid.cell_volume()).max(T::zero()))
}

/// Relative Fisher information `∫ |∇ log(dμ₁/dμ₂)|² dμ₁`, with the gradient
/// taken by periodic central differences.
pub fn relative_fisher<T: Scalar>(mu1: &GridMeasure<T>, mu2: &GridMeasure<T>) -> Result<T> {
    mu1.grid.check_same(&mu2.grid)?;
    if mu2.density.iter().any(|&b| b <= T::zero()) {
        return Err(invalid("reference density must be strictly positive"));
    }
    let log_ratio: Vec<T> = mu1
        .density
        .iter()
        .zip(&mu2.density)
        .map(|(&a, &b)| if a > T::zero() { (a / b).ln() } else { T::neg_infinity() })
        .collect();
    Ok(fisher_of_log_ratio(mu1, &log_ratio))
}

/// `∫ |∇ g|² dμ` for a per-cell log-density ratio `g` (central differences).
pub(crate) fn fisher_of_log_ratio<T: Scalar>(mu: &GridMeasure<T>, log_ratio: &[T]) -> T {
    let g = mu.grid;
    let inv_2h = T::one() / (T::two() * g.cell_width());
    let mut terms = Vec::with_capacity(mu.density.len());
    for (idx, &r) in mu.density.iter().enumerate() {
        if r <= T::zero() {
            continue;
        }
        let mut sq = T::zero();
        for axis in 0..g.dim() {
            let fwd = log_ratio[g.neighbor(idx, axis, 1)];
            let bwd = log_ratio[g.neighbor(idx, axis, -1)];
            if !fwd.is_finite() || !bwd.is_finite() {
                return T::infinity();
            }
            let d = (fwd - bwd) * inv_2h;
            sq += d * d;
        }
        terms.push(r * sq);
    }
    canonical_sum(terms) * g.cell_volume()
}

/// Total variation distance with the `½ L¹` convention, so Pinsker reads `TV ≤ √(KL/2)`.
pub fn total_variation<T: Scalar>(mu1: &GridMeasure<T>, mu2: &GridMeasure<T>) -> Result<T> {
    mu1.grid.check_same(&mu2.grid)?;
    let terms = mu1
        .density
        .iter()
        .zip(&mu2.density)
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    Ok(T::half() * canonical_sum(terms) * mu1.grid.cell_volume())
}
