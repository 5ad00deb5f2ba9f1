use super::{GameKernel, KernelBounds};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters shared by the closed-form test kernels. Unused fields are ignored
/// by kernels that do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub a: f64,
    pub b: f64,
    pub p: u32,
    pub q: u32,
    pub dim: usize,
    pub dim_x: Option<usize>,
    pub dim_y: Option<usize>,
    pub seed: u64,
    pub modes: usize,
    pub value: f64,
    pub period_x: f64,
    pub period_y: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            p: 1,
            q: 1,
            dim: 1,
            dim_x: None,
            dim_y: None,
            seed: 0,
            modes: 5,
            value: 0.0,
            period_x: std::f64::consts::TAU,
            period_y: std::f64::consts::TAU,
        }
    }
}

impl KernelParams {
    fn dims(&self) -> Result<(usize, usize)> {
        let dx = self.dim_x.unwrap_or(self.dim);
        let dy = self.dim_y.unwrap_or(self.dim);
        for d in [dx, dy] {
            if !(1..=2).contains(&d) {
                return Err(invalid(format!("kernel dimension must be 1 or 2, got {d}")));
            }
        }
        Ok((dx, dy))
    }

    fn periods<T: Scalar>(&self) -> Result<(T, T)> {
        for l in [self.period_x, self.period_y] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("period must be positive, got {l}")));
            }
        }
        Ok((T::lit(self.period_x), T::lit(self.period_y)))
    }
}

/// Builds one of the closed-form kernels by name:
/// `cos_diff`, `separable`, `trig_poly` or `constant`.
pub fn builtin_kernel<T: Scalar>(
    name: &str,
    params: &KernelParams,
) -> Result<Box<dyn GameKernel<T>>> {
    let (lx, ly) = params.periods::<T>()?;
    let a = T::lit(params.a);
    Ok(match name {
        "cos_diff" => {
            if params.period_x != params.period_y {
                return Err(invalid("cos_diff needs equal periods on both tori"));
            }
            let (dx, dy) = params.dims()?;
            if dx != dy {
                return Err(invalid("cos_diff needs equal dimensions on both tori"));
            }
            Box::new(CosDiffKernel::new(a, dx, lx))
        }
        "separable" => Box::new(SeparableKernel::new(
            a,
            params.p,
            params.q,
            T::lit(params.b),
            lx,
            ly,
        )),
        "trig_poly" => {
            let (dx, dy) = params.dims()?;
            if params.modes == 0 {
                return Err(invalid("trig_poly needs at least one mode"));
            }
            Box::new(TrigPolyKernel::random(params.seed, params.modes, dx, dy, lx, ly))
        }
        "constant" => {
            let (dx, dy) = params.dims()?;
            Box::new(ConstantKernel {
                value: T::lit(params.value),
                dim_x: dx,
                dim_y: dy,
                period_x: lx,
                period_y: ly,
            })
        }
        other => return Err(Error::UnknownKernel(other.to_string())),
    })
}

fn omega<T: Scalar>(period: T) -> T {
    T::TAU() / period
}

/// `K(x, y) = a · Σ_k cos(ω (x_k − y_k))`, `ω = 2π / L`.
#[derive(Debug, Clone)]
pub struct CosDiffKernel<T> {
    a: T,
    dim: usize,
    period: T,
    omega: T,
}

impl<T: Scalar> CosDiffKernel<T> {
    pub fn new(a: T, dim: usize, period: T) -> Self {
        Self {
            a,
            dim,
            period,
            omega: omega(period),
        }
    }
}

impl<T: Scalar> GameKernel<T> for CosDiffKernel<T> {
    fn name(&self) -> &str {
        "cos_diff"
    }
    fn dim_x(&self) -> usize {
        self.dim
    }
    fn dim_y(&self) -> usize {
        self.dim
    }
    fn period_x(&self) -> T {
        self.period
    }
    fn period_y(&self) -> T {
        self.period
    }
    fn eval(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for k in 0..self.dim {
            acc += (self.omega * (x[k] - y[k])).cos();
        }
        self.a * acc
    }
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        for k in 0..self.dim {
            out[k] = -self.a * self.omega * (self.omega * (x[k] - y[k])).sin();
        }
    }
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        for k in 0..self.dim {
            out[k] = self.a * self.omega * (self.omega * (x[k] - y[k])).sin();
        }
    }
    fn bounds(&self) -> KernelBounds<T> {
        let a = self.a.abs();
        let d = T::from_usize_lossy(self.dim);
        KernelBounds {
            sup_norm: a * d,
            kxy: a * self.omega * self.omega,
            lip: a * self.omega * d.sqrt(),
        }
    }
    fn factor_rank(&self) -> Option<usize> {
        Some(2 * self.dim)
    }
    fn factors_x(&self, x: &[T], values: &mut [T], grads: &mut [T]) {
        let d = self.dim;
        grads.iter_mut().for_each(|g| *g = T::zero());
        for k in 0..d {
            let (s, c) = (self.omega * x[k]).sin_cos();
            values[2 * k] = self.a * c;
            values[2 * k + 1] = self.a * s;
            grads[2 * k * d + k] = -self.a * self.omega * s;
            grads[(2 * k + 1) * d + k] = self.a * self.omega * c;
        }
    }
    fn factors_y(&self, y: &[T], values: &mut [T], grads: &mut [T]) {
        let d = self.dim;
        grads.iter_mut().for_each(|g| *g = T::zero());
        for k in 0..d {
            let (s, c) = (self.omega * y[k]).sin_cos();
            values[2 * k] = c;
            values[2 * k + 1] = s;
            grads[2 * k * d + k] = -self.omega * s;
            grads[(2 * k + 1) * d + k] = self.omega * c;
        }
    }
}

/// `K(x, y) = a · cos(p ω x) · cos(q ω y) + b · cos(ω y)` on a pair of circles.
#[derive(Debug, Clone)]
pub struct SeparableKernel<T> {
    a: T,
    p: T,
    q: T,
    b: T,
    period_x: T,
    period_y: T,
    wx: T,
    wy: T,
}

impl<T: Scalar> SeparableKernel<T> {
    pub fn new(a: T, p: u32, q: u32, b: T, period_x: T, period_y: T) -> Self {
        Self {
            a,
            p: T::from_u32(p).expect("u32 representable"),
            q: T::from_u32(q).expect("u32 representable"),
            b,
            period_x,
            period_y,
            wx: omega(period_x),
            wy: omega(period_y),
        }
    }
}

impl<T: Scalar> GameKernel<T> for SeparableKernel<T> {
    fn name(&self) -> &str {
        "separable"
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn period_x(&self) -> T {
        self.period_x
    }
    fn period_y(&self) -> T {
        self.period_y
    }
    fn eval(&self, x: &[T], y: &[T]) -> T {
        self.a * (self.p * self.wx * x[0]).cos() * (self.q * self.wy * y[0]).cos()
            + self.b * (self.wy * y[0]).cos()
    }
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        let kp = self.p * self.wx;
        out[0] = -self.a * kp * (kp * x[0]).sin() * (self.q * self.wy * y[0]).cos();
    }
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        let kq = self.q * self.wy;
        out[0] = -self.a * kq * (self.p * self.wx * x[0]).cos() * (kq * y[0]).sin()
            - self.b * self.wy * (self.wy * y[0]).sin();
    }
    fn bounds(&self) -> KernelBounds<T> {
        let (a, b) = (self.a.abs(), self.b.abs());
        KernelBounds {
            sup_norm: a + b,
            kxy: a * self.p * self.q * self.wx * self.wy,
            lip: (a * self.p * self.wx).max((a * self.q + b) * self.wy),
        }
    }
    fn factor_rank(&self) -> Option<usize> {
        Some(2)
    }
    fn factors_x(&self, x: &[T], values: &mut [T], grads: &mut [T]) {
        let kp = self.p * self.wx;
        let (s, c) = (kp * x[0]).sin_cos();
        values[0] = c;
        values[1] = T::one();
        grads[0] = -kp * s;
        grads[1] = T::zero();
    }
    fn factors_y(&self, y: &[T], values: &mut [T], grads: &mut [T]) {
        let kq = self.q * self.wy;
        let (s, c) = (kq * y[0]).sin_cos();
        let (s1, c1) = (self.wy * y[0]).sin_cos();
        values[0] = self.a * c;
        values[1] = self.b * c1;
        grads[0] = -self.a * kq * s;
        grads[1] = -self.b * self.wy * s1;
    }
}

/// One term `coef · cos(ω_x kx·x + ω_y ky·y + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMode<T> {
    pub kx: [i32; 2],
    pub ky: [i32; 2],
    pub coef: T,
    pub phase: T,
}

/// Finite Fourier sum with seeded random integer frequencies in `-2..=2`,
/// coefficients in `[-1, 1] / modes` and uniform phases.
#[derive(Debug, Clone)]
pub struct TrigPolyKernel<T> {
    modes: Vec<TrigMode<T>>,
    dim_x: usize,
    dim_y: usize,
    period_x: T,
    period_y: T,
    wx: T,
    wy: T,
    seed: Option<u64>,
}

impl<T: Scalar> TrigPolyKernel<T> {
    pub fn new(modes: Vec<TrigMode<T>>, dim_x: usize, dim_y: usize, period_x: T, period_y: T) -> Self {
        Self {
            modes,
            dim_x,
            dim_y,
            period_x,
            period_y,
            wx: omega(period_x),
            wy: omega(period_y),
            seed: None,
        }
    }

    pub fn random(
        seed: u64,
        count: usize,
        dim_x: usize,
        dim_y: usize,
        period_x: T,
        period_y: T,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / count as f64;
        let modes = (0..count)
            .map(|_| {
                let mut kx = [0; 2];
                let mut ky = [0; 2];
                for k in kx.iter_mut().take(dim_x) {
                    *k = rng.random_range(-2..=2);
                }
                for k in ky.iter_mut().take(dim_y) {
                    *k = rng.random_range(-2..=2);
                }
                let coef = rng.random_range(-1.0..=1.0) * scale;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                TrigMode {
                    kx,
                    ky,
                    coef: T::lit(coef),
                    phase: T::lit(phase),
                }
            })
            .collect();
        let mut kernel = Self::new(modes, dim_x, dim_y, period_x, period_y);
        kernel.seed = Some(seed);
        kernel
    }

    pub fn modes(&self) -> &[TrigMode<T>] {
        &self.modes
    }

    fn phase_x(&self, m: &TrigMode<T>, x: &[T]) -> T {
        let mut acc = m.phase;
        for k in 0..self.dim_x {
            acc += self.wx * T::from_i32(m.kx[k]).unwrap() * x[k];
        }
        acc
    }

    fn phase_y(&self, m: &TrigMode<T>, y: &[T]) -> T {
        let mut acc = T::zero();
        for k in 0..self.dim_y {
            acc += self.wy * T::from_i32(m.ky[k]).unwrap() * y[k];
        }
        acc
    }
}

fn norm2(k: &[i32]) -> f64 {
    k.iter().map(|&v| f64::from(v * v)).sum::<f64>().sqrt()
}

impl<T: Scalar> GameKernel<T> for TrigPolyKernel<T> {
    fn name(&self) -> &str {
        "trig_poly"
    }
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_y(&self) -> usize {
        self.dim_y
    }
    fn period_x(&self) -> T {
        self.period_x
    }
    fn period_y(&self) -> T {
        self.period_y
    }
    fn eval(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for m in &self.modes {
            acc += m.coef * (self.phase_x(m, x) + self.phase_y(m, y)).cos();
        }
        acc
    }
    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        out[..self.dim_x].iter_mut().for_each(|o| *o = T::zero());
        for m in &self.modes {
            let s = (self.phase_x(m, x) + self.phase_y(m, y)).sin();
            for k in 0..self.dim_x {
                out[k] -= m.coef * self.wx * T::from_i32(m.kx[k]).unwrap() * s;
            }
        }
    }
    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        out[..self.dim_y].iter_mut().for_each(|o| *o = T::zero());
        for m in &self.modes {
            let s = (self.phase_x(m, x) + self.phase_y(m, y)).sin();
            for k in 0..self.dim_y {
                out[k] -= m.coef * self.wy * T::from_i32(m.ky[k]).unwrap() * s;
            }
        }
    }
    fn bounds(&self) -> KernelBounds<T> {
        let mut sup = T::zero();
        let mut kxy = T::zero();
        let mut lx = T::zero();
        let mut ly = T::zero();
        for m in &self.modes {
            let c = m.coef.abs();
            let nx = T::lit(norm2(&m.kx[..self.dim_x]));
            let ny = T::lit(norm2(&m.ky[..self.dim_y]));
            sup += c;
            kxy += c * self.wx * self.wy * nx * ny;
            lx += c * self.wx * nx;
            ly += c * self.wy * ny;
        }
        KernelBounds {
            sup_norm: sup,
            kxy,
            lip: lx.max(ly),
        }
    }
    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "seed": self.seed, "modes": self.modes.len() })
    }
    fn factor_rank(&self) -> Option<usize> {
        Some(2 * self.modes.len())
    }
    // cos(A + B) = cos A cos B − sin A sin B
    fn factors_x(&self, x: &[T], values: &mut [T], grads: &mut [T]) {
        let d = self.dim_x;
        for (r, m) in self.modes.iter().enumerate() {
            let (s, c) = self.phase_x(m, x).sin_cos();
            values[2 * r] = m.coef * c;
            values[2 * r + 1] = -m.coef * s;
            for k in 0..d {
                let w = self.wx * T::from_i32(m.kx[k]).unwrap();
                grads[2 * r * d + k] = -m.coef * w * s;
                grads[(2 * r + 1) * d + k] = -m.coef * w * c;
            }
        }
    }
    fn factors_y(&self, y: &[T], values: &mut [T], grads: &mut [T]) {
        let d = self.dim_y;
        for (r, m) in self.modes.iter().enumerate() {
            let (s, c) = self.phase_y(m, y).sin_cos();
            values[2 * r] = c;
            values[2 * r + 1] = s;
            for k in 0..d {
                let w = self.wy * T::from_i32(m.ky[k]).unwrap();
                grads[2 * r * d + k] = -w * s;
                grads[(2 * r + 1) * d + k] = w * c;
            }
        }
    }
}

/// `K ≡ value`.
#[derive(Debug, Clone)]
pub struct ConstantKernel<T> {
    pub value: T,
    pub dim_x: usize,
    pub dim_y: usize,
    pub period_x: T,
    pub period_y: T,
}

impl<T: Scalar> GameKernel<T> for ConstantKernel<T> {
    fn name(&self) -> &str {
        "constant"
    }
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_y(&self) -> usize {
        self.dim_y
    }
    fn period_x(&self) -> T {
        self.period_x
    }
    fn period_y(&self) -> T {
        self.period_y
    }
    fn eval(&self, _x: &[T], _y: &[T]) -> T {
        self.value
    }
    fn grad_x(&self, _x: &[T], _y: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn grad_y(&self, _x: &[T], _y: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn bounds(&self) -> KernelBounds<T> {
        KernelBounds {
            sup_norm: self.value.abs(),
            kxy: T::zero(),
            lip: T::zero(),
        }
    }
    fn factor_rank(&self) -> Option<usize> {
        Some(1)
    }
    fn factors_x(&self, _x: &[T], values: &mut [T], grads: &mut [T]) {
        values[0] = self.value;
        grads.iter_mut().for_each(|g| *g = T::zero());
    }
    fn factors_y(&self, _y: &[T], values: &mut [T], grads: &mut [T]) {
        values[0] = T::one();
        grads.iter_mut().for_each(|g| *g = T::zero());
    }
}
