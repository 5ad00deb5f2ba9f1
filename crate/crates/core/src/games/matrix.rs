use super::{GameKernel, KernelBounds};
use crate::error::{Error, Result};
use crate::measures::{GridMeasure, TorusGrid};
use crate::scalar::Scalar;
use rayon::prelude::*;

#[derive(Debug, Clone)]
struct Factors<T> {
    rank: usize,
    /// `nx × rank`
    fx: Vec<T>,
    /// `ny × rank`
    gy: Vec<T>,
}

/// Kernel tabulated on a pair of grids.
///
/// `values[i * ny + j] = K(x_i, y_j)` exactly as returned by `eval`. Interaction
/// potentials go through the exact separable factorization when the kernel
/// provides one and through the dense table otherwise; both use a fixed
/// summation order.
#[derive(Debug, Clone)]
pub struct KernelMatrix<T> {
    x_grid: TorusGrid<T>,
    y_grid: TorusGrid<T>,
    dim_x: usize,
    dim_y: usize,
    values: Vec<T>,
    values_t: Vec<T>,
    grad_x: Option<Vec<T>>,
    grad_y: Option<Vec<T>>,
    factors: Option<Factors<T>>,
    bounds: KernelBounds<T>,
    name: String,
    metadata: serde_json::Value,
}

fn check_grid<T: Scalar>(grid: &TorusGrid<T>, dim: usize, period: T, side: &str) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::GridMismatch(format!(
            "kernel {side} dimension {dim} but grid dimension {}",
            grid.dim()
        )));
    }
    let l = grid.circumference();
    if (l - period).abs() > T::lit(1e-12) * period.max(T::one()) {
        return Err(Error::GridMismatch(format!(
            "kernel {side} period {period} but grid circumference {l}"
        )));
    }
    Ok(())
}

impl<T: Scalar> KernelMatrix<T> {
    /// Tabulates values only; see [`KernelMatrix::with_gradient_tables`].
    pub fn new<K: GameKernel<T> + ?Sized>(
        kernel: &K,
        x_grid: TorusGrid<T>,
        y_grid: TorusGrid<T>,
    ) -> Result<Self> {
        Self::build(kernel, x_grid, y_grid, false)
    }

    /// Tabulates values and both gradient fields at every node pair.
    pub fn with_gradient_tables<K: GameKernel<T> + ?Sized>(
        kernel: &K,
        x_grid: TorusGrid<T>,
        y_grid: TorusGrid<T>,
    ) -> Result<Self> {
        Self::build(kernel, x_grid, y_grid, true)
    }

    fn build<K: GameKernel<T> + ?Sized>(
        kernel: &K,
        x_grid: TorusGrid<T>,
        y_grid: TorusGrid<T>,
        gradients: bool,
    ) -> Result<Self> {
        let (dx, dy) = (kernel.dim_x(), kernel.dim_y());
        check_grid(&x_grid, dx, kernel.period_x(), "x")?;
        check_grid(&y_grid, dy, kernel.period_y(), "y")?;
        let (nx, ny) = (x_grid.len(), y_grid.len());
        let xs: Vec<[T; 2]> = (0..nx).map(|i| x_grid.point(i)).collect();
        let ys: Vec<[T; 2]> = (0..ny).map(|j| y_grid.point(j)).collect();

        let mut values = vec![T::zero(); nx * ny];
        values.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel.eval(&xs[i][..dx], &ys[j][..dy]);
            }
        });
        let mut values_t = vec![T::zero(); nx * ny];
        values_t.par_chunks_mut(nx).enumerate().for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v = values[i * ny + j];
            }
        });

        let (grad_x, grad_y) = if gradients {
            let mut gx = vec![T::zero(); nx * ny * dx];
            let mut gy = vec![T::zero(); nx * ny * dy];
            gx.par_chunks_mut(ny * dx).enumerate().for_each(|(i, row)| {
                for j in 0..ny {
                    kernel.grad_x(&xs[i][..dx], &ys[j][..dy], &mut row[j * dx..(j + 1) * dx]);
                }
            });
            gy.par_chunks_mut(ny * dy).enumerate().for_each(|(i, row)| {
                for j in 0..ny {
                    kernel.grad_y(&xs[i][..dx], &ys[j][..dy], &mut row[j * dy..(j + 1) * dy]);
                }
            });
            (Some(gx), Some(gy))
        } else {
            (None, None)
        };

        let factors = kernel.factor_rank().map(|rank| {
            let mut fx = vec![T::zero(); nx * rank];
            let mut gy = vec![T::zero(); ny * rank];
            let mut scratch = vec![T::zero(); rank * dx.max(dy)];
            for (i, p) in xs.iter().enumerate() {
                kernel.factors_x(&p[..dx], &mut fx[i * rank..(i + 1) * rank], &mut scratch[..rank * dx]);
            }
            for (j, p) in ys.iter().enumerate() {
                kernel.factors_y(&p[..dy], &mut gy[j * rank..(j + 1) * rank], &mut scratch[..rank * dy]);
            }
            Factors { rank, fx, gy }
        });

        Ok(Self {
            x_grid,
            y_grid,
            dim_x: dx,
            dim_y: dy,
            values,
            values_t,
            grad_x,
            grad_y,
            factors,
            bounds: kernel.bounds(),
            name: kernel.name().to_string(),
            metadata: kernel.metadata(),
        })
    }

    pub fn x_grid(&self) -> &TorusGrid<T> {
        &self.x_grid
    }

    pub fn y_grid(&self) -> &TorusGrid<T> {
        &self.y_grid
    }

    pub fn bounds(&self) -> KernelBounds<T> {
        self.bounds
    }

    pub fn kernel_name(&self) -> &str {
        &self.name
    }

    pub fn kernel_metadata(&self) -> &serde_json::Value {
        &self.metadata
    }

    /// `K(x_i, y_j)`.
    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[i * self.y_grid.len() + j]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `∇_x K(x_i, y_j)`, when gradient tables were built.
    pub fn grad_x_at(&self, i: usize, j: usize) -> Option<&[T]> {
        let d = self.dim_x;
        let at = (i * self.y_grid.len() + j) * d;
        self.grad_x.as_ref().map(|g| &g[at..at + d])
    }

    pub fn grad_y_at(&self, i: usize, j: usize) -> Option<&[T]> {
        let d = self.dim_y;
        let at = (i * self.y_grid.len() + j) * d;
        self.grad_y.as_ref().map(|g| &g[at..at + d])
    }

    /// Largest `|∇_x K|` and `|∇_y K|` over the node pairs, when tabulated.
    pub fn max_gradient_norms(&self) -> Option<(T, T)> {
        let norm_max = |g: &Vec<T>, d: usize| {
            g.chunks_exact(d)
                .map(|c| c.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
                .fold(T::zero(), |a, b| a.max(b))
        };
        match (&self.grad_x, &self.grad_y) {
            (Some(gx), Some(gy)) => Some((norm_max(gx, self.dim_x), norm_max(gy, self.dim_y))),
            _ => None,
        }
    }

    pub fn is_factorized(&self) -> bool {
        self.factors.is_some()
    }

    /// `V(x_i) = ∫ K(x_i, y) dν(y)` written into `out`.
    pub fn potential_x_into(&self, nu: &[T], out: &mut [T]) {
        let (nx, ny) = (self.x_grid.len(), self.y_grid.len());
        let vol = self.y_grid.cell_volume();
        match &self.factors {
            Some(f) => {
                let mut moments = [T::zero(); 32];
                let mut heap;
                let m: &mut [T] = if f.rank <= 32 {
                    &mut moments[..f.rank]
                } else {
                    heap = vec![T::zero(); f.rank];
                    &mut heap
                };
                for (j, &w) in nu.iter().enumerate() {
                    let row = &f.gy[j * f.rank..(j + 1) * f.rank];
                    for r in 0..f.rank {
                        m[r] += row[r] * w;
                    }
                }
                for (i, o) in out.iter_mut().enumerate().take(nx) {
                    let row = &f.fx[i * f.rank..(i + 1) * f.rank];
                    let mut acc = T::zero();
                    for r in 0..f.rank {
                        acc += row[r] * m[r];
                    }
                    *o = acc * vol;
                }
            }
            None => {
                for (i, o) in out.iter_mut().enumerate().take(nx) {
                    let row = &self.values[i * ny..(i + 1) * ny];
                    let mut acc = T::zero();
                    for (k, w) in row.iter().zip(nu) {
                        acc += *k * *w;
                    }
                    *o = acc * vol;
                }
            }
        }
    }

    /// `V(y_j) = ∫ K(x, y_j) dμ(x)` written into `out`.
    pub fn potential_y_into(&self, mu: &[T], out: &mut [T]) {
        let (nx, ny) = (self.x_grid.len(), self.y_grid.len());
        let vol = self.x_grid.cell_volume();
        match &self.factors {
            Some(f) => {
                let mut moments = [T::zero(); 32];
                let mut heap;
                let m: &mut [T] = if f.rank <= 32 {
                    &mut moments[..f.rank]
                } else {
                    heap = vec![T::zero(); f.rank];
                    &mut heap
                };
                for (i, &w) in mu.iter().enumerate() {
                    let row = &f.fx[i * f.rank..(i + 1) * f.rank];
                    for r in 0..f.rank {
                        m[r] += row[r] * w;
                    }
                }
                for (j, o) in out.iter_mut().enumerate().take(ny) {
                    let row = &f.gy[j * f.rank..(j + 1) * f.rank];
                    let mut acc = T::zero();
                    for r in 0..f.rank {
                        acc += row[r] * m[r];
                    }
                    *o = acc * vol;
                }
            }
            None => {
                for (j, o) in out.iter_mut().enumerate().take(ny) {
                    let col = &self.values_t[j * nx..(j + 1) * nx];
                    let mut acc = T::zero();
                    for (k, w) in col.iter().zip(mu) {
                        acc += *k * *w;
                    }
                    *o = acc * vol;
                }
            }
        }
    }

    pub fn potential_x(&self, nu: &GridMeasure<T>) -> Result<Vec<T>> {
        self.y_grid.check_same(nu.grid())?;
        let mut out = vec![T::zero(); self.x_grid.len()];
        self.potential_x_into(nu.density(), &mut out);
        Ok(out)
    }

    pub fn potential_y(&self, mu: &GridMeasure<T>) -> Result<Vec<T>> {
        self.x_grid.check_same(mu.grid())?;
        let mut out = vec![T::zero(); self.y_grid.len()];
        self.potential_y_into(mu.density(), &mut out);
        Ok(out)
    }

    /// Same as [`KernelMatrix::potential_x`] but always through the dense table.
    pub fn dense_potential_x(&self, nu: &GridMeasure<T>) -> Result<Vec<T>> {
        self.y_grid.check_same(nu.grid())?;
        let ny = self.y_grid.len();
        let vol = self.y_grid.cell_volume();
        Ok((0..self.x_grid.len())
            .map(|i| {
                let mut acc = T::zero();
                for (k, w) in self.values[i * ny..(i + 1) * ny].iter().zip(nu.density()) {
                    acc += *k * *w;
                }
                acc * vol
            })
            .collect())
    }

    /// `∫∫ K dν dμ`.
    pub fn bilinear(&self, mu: &GridMeasure<T>, nu: &GridMeasure<T>) -> Result<T> {
        let v = self.potential_x(nu)?;
        self.x_grid.check_same(mu.grid())?;
        Ok(mu.integrate(&v))
    }
}
