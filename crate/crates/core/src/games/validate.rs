use super::{GameKernel, KernelBounds};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Tolerance factor before an estimate counts as exceeding its declared bound.
const SLACK: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub declared: f64,
    pub estimated: f64,
    pub violated: bool,
}

impl Estimate {
    fn new(declared: f64, estimated: f64) -> Self {
        Self {
            declared,
            estimated,
            violated: estimated > SLACK * declared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub samples_per_axis: usize,
    pub sup_norm: Estimate,
    pub kxy: Estimate,
    pub lip: Estimate,
}

impl BoundsReport {
    pub fn ok(&self) -> bool {
        !(self.sup_norm.violated || self.kxy.violated || self.lip.violated)
    }

    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.sup_norm.violated {
            v.push("sup_norm");
        }
        if self.kxy.violated {
            v.push("kxy");
        }
        if self.lip.violated {
            v.push("lip");
        }
        v
    }
}

/// Lattice of `s^dim` points with neighbour lookup along each axis.
struct Lattice {
    s: usize,
    dim: usize,
}

impl Lattice {
    fn len(&self) -> usize {
        self.s.pow(self.dim as u32)
    }

    fn coords<T: Scalar>(&self, idx: usize, h: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        let mut rest = idx;
        for c in out.iter_mut().rev() {
            *c = T::from_usize_lossy(rest % self.s) * h;
            rest /= self.s;
        }
        out
    }

    fn shift(&self, idx: usize, axis: usize, step: isize) -> usize {
        let stride = self.s.pow((self.dim - 1 - axis) as u32);
        let digit = (idx / stride) % self.s;
        let moved = (digit as isize + step).rem_euclid(self.s as isize) as usize;
        idx - digit * stride + moved * stride
    }
}

/// Largest singular value of a small dense matrix (row-major `rows × cols`).
fn spectral_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    let frob = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 0.0;
    for _ in 0..200 {
        let mv: Vec<f64> = (0..rows)
            .map(|r| (0..cols).map(|c| m[r * cols + c] * v[c]).sum())
            .collect();
        let mut w: Vec<f64> = (0..cols)
            .map(|c| (0..rows).map(|r| m[r * cols + c] * mv[r]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // start vector orthogonal to the row space; fall back to Frobenius
            return frob;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let next = norm.sqrt();
        v = w;
        if (next - sigma).abs() <= 1e-14 * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

/// Finite-difference estimates of `‖K‖∞`, `‖∇²_{xy}K‖`, and `Lip(K)` on a
/// lattice with `samples_per_axis` points per axis, compared against the
/// kernel's declared bounds.
pub fn validate_bounds<T: Scalar, K: GameKernel<T> + ?Sized>(
    kernel: &K,
    samples_per_axis: usize,
) -> BoundsReport {
    validate_against(kernel, kernel.bounds(), samples_per_axis)
}

/// As [`validate_bounds`] with caller-supplied declared bounds.
pub fn validate_against<T: Scalar, K: GameKernel<T> + ?Sized>(
    kernel: &K,
    declared: KernelBounds<T>,
    samples_per_axis: usize,
) -> BoundsReport {
    let s = samples_per_axis.max(4);
    let lx = Lattice {
        s,
        dim: kernel.dim_x(),
    };
    let ly = Lattice {
        s,
        dim: kernel.dim_y(),
    };
    let hx = kernel.period_x() / T::from_usize_lossy(s);
    let hy = kernel.period_y() / T::from_usize_lossy(s);
    let (nx, ny) = (lx.len(), ly.len());
    let xs: Vec<Vec<T>> = (0..nx).map(|i| lx.coords(i, hx)).collect();
    let ys: Vec<Vec<T>> = (0..ny).map(|j| ly.coords(j, hy)).collect();
    let mut table = vec![0.0f64; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            table[i * ny + j] = kernel.eval(&xs[i], &ys[j]).to_f64_lossy();
        }
    }
    let at = |i: usize, j: usize| table[i * ny + j];
    let (hx, hy) = (hx.to_f64_lossy(), hy.to_f64_lossy());

    let mut sup = 0.0f64;
    let mut lip = 0.0f64;
    let mut kxy = 0.0f64;
    let mut mixed = vec![0.0; lx.dim * ly.dim];
    for i in 0..nx {
        for j in 0..ny {
            sup = sup.max(at(i, j).abs());
            let gx: f64 = (0..lx.dim)
                .map(|k| {
                    let d = (at(lx.shift(i, k, 1), j) - at(lx.shift(i, k, -1), j)) / (2.0 * hx);
                    d * d
                })
                .sum();
            let gy: f64 = (0..ly.dim)
                .map(|k| {
                    let d = (at(i, ly.shift(j, k, 1)) - at(i, ly.shift(j, k, -1))) / (2.0 * hy);
                    d * d
                })
                .sum();
            lip = lip.max(gx.sqrt()).max(gy.sqrt());
            for a in 0..lx.dim {
                let (ip, im) = (lx.shift(i, a, 1), lx.shift(i, a, -1));
                for b in 0..ly.dim {
                    let (jp, jm) = (ly.shift(j, b, 1), ly.shift(j, b, -1));
                    mixed[a * ly.dim + b] =
                        (at(ip, jp) - at(ip, jm) - at(im, jp) + at(im, jm)) / (4.0 * hx * hy);
                }
            }
            kxy = kxy.max(spectral_norm(&mixed, lx.dim, ly.dim));
        }
    }
    BoundsReport {
        samples_per_axis: s,
        sup_norm: Estimate::new(declared.sup_norm.to_f64_lossy(), sup),
        kxy: Estimate::new(declared.kxy.to_f64_lossy(), kxy),
        lip: Estimate::new(declared.lip.to_f64_lossy(), lip),
    }
}

/// Largest `|K(x, y) − K(x ± L e_k, y)|` (and likewise in `y`) over `points`
/// seeded random points.
pub fn periodicity_residual<T: Scalar, K: GameKernel<T> + ?Sized>(
    kernel: &K,
    points: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, ly) = (kernel.period_x(), kernel.period_y());
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x: Vec<T> = (0..kernel.dim_x())
            .map(|_| lx * T::lit(rng.random::<f64>()))
            .collect();
        let y: Vec<T> = (0..kernel.dim_y())
            .map(|_| ly * T::lit(rng.random::<f64>()))
            .collect();
        let base = kernel.eval(&x, &y);
        for sign in [T::one(), -T::one()] {
            for k in 0..x.len() {
                let mut xs = x.clone();
                xs[k] += sign * lx;
                worst = worst.max((kernel.eval(&xs, &y) - base).abs().to_f64_lossy());
            }
            for k in 0..y.len() {
                let mut ys = y.clone();
                ys[k] += sign * ly;
                worst = worst.max((kernel.eval(&x, &ys) - base).abs().to_f64_lossy());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{builtin_kernel, KernelParams};

    #[test]
    fn cos_diff_mixed_derivative_estimate() {
        let k = builtin_kernel::<f64>("cos_diff", &KernelParams::default()).unwrap();
        let r = validate_bounds(k.as_ref(), 256);
        assert!(r.kxy.estimated >= 0.99 && r.kxy.estimated <= 1.0, "{:?}", r.kxy);
        assert!(r.ok());
    }

    #[test]
    fn constant_kernel_has_zero_derivatives() {
        let params = KernelParams {
            value: -1.5,
            dim: 2,
            ..KernelParams::default()
        };
        let k = builtin_kernel::<f64>("constant", &params).unwrap();
        let r = validate_bounds(k.as_ref(), 16);
        assert_eq!((r.kxy.estimated, r.lip.estimated), (0.0, 0.0));
        assert_eq!(r.sup_norm.estimated, 1.5);
    }

    #[test]
    fn understated_bound_is_flagged() {
        let k = builtin_kernel::<f64>("cos_diff", &KernelParams::default()).unwrap();
        let declared = KernelBounds {
            kxy: 0.5,
            ..k.bounds()
        };
        let r = validate_against(k.as_ref(), declared, 64);
        assert_eq!(r.violations(), vec!["kxy"]);
    }

    #[test]
    fn spectral_norm_of_rank_one() {
        // u vᵀ with |u| = 5, |v| = 1
        let m = [3.0 * 0.6, 3.0 * 0.8, 4.0 * 0.6, 4.0 * 0.8];
        assert!((spectral_norm(&m, 2, 2) - 5.0).abs() < 1e-12);
        assert!((spectral_norm(&[2.0, 0.0, 0.0, -3.0], 2, 2) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn builtins_are_periodic() {
        for (name, params) in [
            ("cos_diff", KernelParams { dim: 2, ..KernelParams::default() }),
            ("separable", KernelParams { b: 0.5, p: 2, ..KernelParams::default() }),
            ("trig_poly", KernelParams { seed: 7, ..KernelParams::default() }),
            ("trig_poly", KernelParams { seed: 9, dim: 2, period_x: 3.0, period_y: 5.0, ..KernelParams::default() }),
        ] {
            let k = builtin_kernel::<f64>(name, &params).unwrap();
            let r = periodicity_residual(k.as_ref(), 100, 1);
            assert!(r < 1e-10, "{name}: {r}");
        }
        let k = builtin_kernel::<f64>("trig_poly", &KernelParams { seed: 7, ..KernelParams::default() }).unwrap();
        assert!(periodicity_residual(k.as_ref(), 100, 2) < 1e-12);
    }
}
