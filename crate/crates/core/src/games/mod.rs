//! Payoff kernels `K(x, y)` on products of flat tori.
//!
//! A kernel exposes its values, both partial gradients and a set of declared
//! bounds. Kernels that split as a finite sum `K(x, y) = Σ_r f_r(x) g_r(y)`
//! can also report that factorization, which the grid and particle solvers
//! use to evaluate interaction potentials in `O(rank)` work per point.

mod barron;
mod builtin;
mod matrix;
mod validate;

pub use barron::{
    Activation, BarronEmbedding, Field, GanKernel, PetrovGalerkinKernel, PetrovGalerkinSpec, Weight,
};
pub use builtin::{
    builtin_kernel, ConstantKernel, CosDiffKernel, KernelParams, SeparableKernel, TrigMode,
    TrigPolyKernel,
};
pub use matrix::KernelMatrix;
pub use validate::{periodicity_residual, validate_against, validate_bounds, BoundsReport, Estimate};

use crate::error::{invalid, Result};
use crate::measures::canonical_sum;
use crate::scalar::Scalar;
use std::fmt::Debug;
use std::sync::Arc;

/// Declared constants of a kernel.
///
/// `kxy` bounds the operator norm of the mixed Hessian `∇²_{xy} K`, and `lip`
/// bounds `sup |∇_x K|` and `sup |∇_y K|` (the larger of the two).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBounds<T> {
    pub sup_norm: T,
    pub kxy: T,
    pub lip: T,
}

pub trait GameKernel<T: Scalar>: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    /// Circumference of every axis of the x torus.
    fn period_x(&self) -> T;
    fn period_y(&self) -> T;
    fn eval(&self, x: &[T], y: &[T]) -> T;
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]);
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]);
    fn bounds(&self) -> KernelBounds<T>;

    /// Extra provenance recorded next to outputs (seeds, weight choices).
    fn metadata(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    /// Rank of an exact factorization `K = Σ_r f_r(x) g_r(y)`, if one exists.
    fn factor_rank(&self) -> Option<usize> {
        None
    }

    /// Fills `values[r] = f_r(x)` and `grads[r * dim_x + k] = ∂_k f_r(x)`.
    fn factors_x(&self, _x: &[T], _values: &mut [T], _grads: &mut [T]) {
        unreachable!("kernel `{}` has no factorization", self.name())
    }

    /// Fills `values[r] = g_r(y)` and `grads[r * dim_y + k] = ∂_k g_r(y)`.
    fn factors_y(&self, _y: &[T], _values: &mut [T], _grads: &mut [T]) {
        unreachable!("kernel `{}` has no factorization", self.name())
    }

    /// Mean-field drifts of an ensemble of strategy pairs:
    /// `drift_x[i] = (1/N) Σ_j ∇_x K(x_i, y_j)` and
    /// `drift_y[i] = (1/N) Σ_j ∇_y K(x_j, y_i)`.
    ///
    /// `xs` and `ys` are flattened coordinates (`N · dim`). Factorized kernels
    /// use the exact separable sum; the fallback is the direct double loop.
    fn mean_field_drift(&self, xs: &[T], ys: &[T], drift_x: &mut [T], drift_y: &mut [T]) {
        let (dx, dy) = (self.dim_x(), self.dim_y());
        let n = xs.len() / dx;
        debug_assert_eq!(ys.len(), n * dy);
        let inv_n = T::one() / T::from_usize_lossy(n);
        match self.factor_rank() {
            Some(rank) => factorized_drift(self, rank, n, xs, ys, drift_x, drift_y, inv_n),
            None => {
                let mut gx = vec![T::zero(); dx];
                let mut gy = vec![T::zero(); dy];
                drift_x.iter_mut().for_each(|v| *v = T::zero());
                drift_y.iter_mut().for_each(|v| *v = T::zero());
                for i in 0..n {
                    let xi = &xs[i * dx..(i + 1) * dx];
                    for j in 0..n {
                        let yj = &ys[j * dy..(j + 1) * dy];
                        self.grad_x(xi, yj, &mut gx);
                        for k in 0..dx {
                            drift_x[i * dx + k] += gx[k];
                        }
                        self.grad_y(xi, yj, &mut gy);
                        for k in 0..dy {
                            drift_y[j * dy + k] += gy[k];
                        }
                    }
                }
                drift_x.iter_mut().for_each(|v| *v *= inv_n);
                drift_y.iter_mut().for_each(|v| *v *= inv_n);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn factorized_drift<T: Scalar, K: GameKernel<T> + ?Sized>(
    kernel: &K,
    rank: usize,
    n: usize,
    xs: &[T],
    ys: &[T],
    drift_x: &mut [T],
    drift_y: &mut [T],
    inv_n: T,
) {
    let (dx, dy) = (kernel.dim_x(), kernel.dim_y());
    let mut fx = vec![T::zero(); n * rank];
    let mut fx_grad = vec![T::zero(); n * rank * dx];
    let mut gy = vec![T::zero(); n * rank];
    let mut gy_grad = vec![T::zero(); n * rank * dy];
    for i in 0..n {
        kernel.factors_x(
            &xs[i * dx..(i + 1) * dx],
            &mut fx[i * rank..(i + 1) * rank],
            &mut fx_grad[i * rank * dx..(i + 1) * rank * dx],
        );
        kernel.factors_y(
            &ys[i * dy..(i + 1) * dy],
            &mut gy[i * rank..(i + 1) * rank],
            &mut gy_grad[i * rank * dy..(i + 1) * rank * dy],
        );
    }
    let mean = |v: &[T], r: usize| canonical_sum((0..n).map(|i| v[i * rank + r]).collect()) * inv_n;
    let mean_f: Vec<T> = (0..rank).map(|r| mean(&fx, r)).collect();
    let mean_g: Vec<T> = (0..rank).map(|r| mean(&gy, r)).collect();
    for i in 0..n {
        for k in 0..dx {
            let mut acc = T::zero();
            for r in 0..rank {
                acc += fx_grad[(i * rank + r) * dx + k] * mean_g[r];
            }
            drift_x[i * dx + k] = acc;
        }
        for k in 0..dy {
            let mut acc = T::zero();
            for r in 0..rank {
                acc += gy_grad[(i * rank + r) * dy + k] * mean_f[r];
            }
            drift_y[i * dy + k] = acc;
        }
    }
}

impl<T: Scalar, K: GameKernel<T> + ?Sized> GameKernel<T> for Arc<K> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_y(&self) -> usize {
        (**self).dim_y()
    }
    fn period_x(&self) -> T {
        (**self).period_x()
    }
    fn period_y(&self) -> T {
        (**self).period_y()
    }
    fn eval(&self, x: &[T], y: &[T]) -> T {
        (**self).eval(x, y)
    }
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        (**self).grad_x(x, y, out)
    }
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        (**self).grad_y(x, y, out)
    }
    fn bounds(&self) -> KernelBounds<T> {
        (**self).bounds()
    }
    fn metadata(&self) -> serde_json::Value {
        (**self).metadata()
    }
    fn factor_rank(&self) -> Option<usize> {
        (**self).factor_rank()
    }
    fn factors_x(&self, x: &[T], values: &mut [T], grads: &mut [T]) {
        (**self).factors_x(x, values, grads)
    }
    fn factors_y(&self, y: &[T], values: &mut [T], grads: &mut [T]) {
        (**self).factors_y(y, values, grads)
    }
    fn mean_field_drift(&self, xs: &[T], ys: &[T], drift_x: &mut [T], drift_y: &mut [T]) {
        (**self).mean_field_drift(xs, ys, drift_x, drift_y)
    }
}

/// Restricts a kernel to a sub-torus by freezing some coordinates.
///
/// Lets the three-or-more-dimensional parameter kernels run on 1D/2D grids.
/// The inner bounds stay valid because restriction cannot increase any
/// derivative norm.
#[derive(Debug, Clone)]
pub struct SlicedKernel<T: Scalar> {
    inner: Arc<dyn GameKernel<T>>,
    base_x: Vec<T>,
    free_x: Vec<usize>,
    base_y: Vec<T>,
    free_y: Vec<usize>,
    name: String,
}

impl<T: Scalar> SlicedKernel<T> {
    /// `base_*` hold the full coordinate vectors; the indices in `free_*`
    /// are overwritten by the sliced arguments, in order.
    pub fn new(
        inner: Arc<dyn GameKernel<T>>,
        base_x: Vec<T>,
        free_x: Vec<usize>,
        base_y: Vec<T>,
        free_y: Vec<usize>,
    ) -> Result<Self> {
        if base_x.len() != inner.dim_x() || base_y.len() != inner.dim_y() {
            return Err(invalid("slice base has the wrong dimension"));
        }
        let ok = |free: &[usize], dim: usize| {
            !free.is_empty()
                && free.len() <= 2
                && free.iter().all(|&i| i < dim)
                && (1..free.len()).all(|k| !free[..k].contains(&free[k]))
        };
        if !ok(&free_x, base_x.len()) || !ok(&free_y, base_y.len()) {
            return Err(invalid("slice must keep one or two distinct coordinates per side"));
        }
        let name = format!("{}[sliced]", inner.name());
        Ok(Self {
            inner,
            base_x,
            free_x,
            base_y,
            free_y,
            name,
        })
    }

    fn lift(base: &[T], free: &[usize], z: &[T]) -> Vec<T> {
        let mut full = base.to_vec();
        for (&i, &v) in free.iter().zip(z) {
            full[i] = v;
        }
        full
    }
}

impl<T: Scalar> GameKernel<T> for SlicedKernel<T> {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.free_x.len()
    }
    fn dim_y(&self) -> usize {
        self.free_y.len()
    }
    fn period_x(&self) -> T {
        self.inner.period_x()
    }
    fn period_y(&self) -> T {
        self.inner.period_y()
    }
    fn eval(&self, x: &[T], y: &[T]) -> T {
        let fx = Self::lift(&self.base_x, &self.free_x, x);
        let fy = Self::lift(&self.base_y, &self.free_y, y);
        self.inner.eval(&fx, &fy)
    }
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        let fx = Self::lift(&self.base_x, &self.free_x, x);
        let fy = Self::lift(&self.base_y, &self.free_y, y);
        let mut g = vec![T::zero(); fx.len()];
        self.inner.grad_x(&fx, &fy, &mut g);
        for (o, &i) in out.iter_mut().zip(&self.free_x) {
            *o = g[i];
        }
    }
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        let fx = Self::lift(&self.base_x, &self.free_x, x);
        let fy = Self::lift(&self.base_y, &self.free_y, y);
        let mut g = vec![T::zero(); fy.len()];
        self.inner.grad_y(&fx, &fy, &mut g);
        for (o, &i) in out.iter_mut().zip(&self.free_y) {
            *o = g[i];
        }
    }
    fn bounds(&self) -> KernelBounds<T> {
        self.inner.bounds()
    }
    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "inner": self.inner.name(),
            "inner_metadata": self.inner.metadata(),
            "free_x": self.free_x,
            "free_y": self.free_y,
            "base_x": self.base_x.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            "base_y": self.base_y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorized_and_direct_drifts_agree() {
        let params = KernelParams {
            seed: 11,
            modes: 4,
            dim_x: Some(2),
            dim_y: Some(1),
            ..KernelParams::default()
        };
        let k = builtin_kernel::<f64>("trig_poly", &params).unwrap();
        let xs = [0.3, 1.2, 4.0, 5.5, 2.2, 0.1];
        let ys = [1.0, 2.5, 6.0];
        let (mut ax, mut ay) = (vec![0.0; 6], vec![0.0; 3]);
        k.mean_field_drift(&xs, &ys, &mut ax, &mut ay);

        #[derive(Debug)]
        struct Direct(Box<dyn GameKernel<f64>>);
        impl GameKernel<f64> for Direct {
            fn name(&self) -> &str {
                "direct"
            }
            fn dim_x(&self) -> usize {
                self.0.dim_x()
            }
            fn dim_y(&self) -> usize {
                self.0.dim_y()
            }
            fn period_x(&self) -> f64 {
                self.0.period_x()
            }
            fn period_y(&self) -> f64 {
                self.0.period_y()
            }
            fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
                self.0.eval(x, y)
            }
            fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
                self.0.grad_x(x, y, out)
            }
            fn grad_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
                self.0.grad_y(x, y, out)
            }
            fn bounds(&self) -> KernelBounds<f64> {
                self.0.bounds()
            }
        }
        let direct = Direct(k);
        let (mut bx, mut by) = (vec![0.0; 6], vec![0.0; 3]);
        direct.mean_field_drift(&xs, &ys, &mut bx, &mut by);
        for (a, b) in ax.iter().zip(&bx).chain(ay.iter().zip(&by)) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn slicing_freezes_coordinates() {
        let params = KernelParams {
            seed: 3,
            dim_x: Some(2),
            dim_y: Some(2),
            ..KernelParams::default()
        };
        let full: Arc<dyn GameKernel<f64>> = builtin_kernel("trig_poly", &params).unwrap().into();
        let sliced =
            SlicedKernel::new(full.clone(), vec![0.0, 0.7], vec![0], vec![1.1, 0.0], vec![1])
                .unwrap();
        assert_eq!((sliced.dim_x(), sliced.dim_y()), (1, 1));
        let v = sliced.eval(&[2.0], &[3.0]);
        assert_eq!(v, full.eval(&[2.0, 0.7], &[1.1, 3.0]));
        let mut g = [0.0];
        sliced.grad_y(&[2.0], &[3.0], &mut g);
        let mut gf = [0.0; 2];
        full.grad_y(&[2.0, 0.7], &[1.1, 3.0], &mut gf);
        assert_eq!(g[0], gf[1]);
        assert!(SlicedKernel::new(full, vec![0.0; 2], vec![0, 0], vec![0.0; 2], vec![1]).is_err());
    }
}
