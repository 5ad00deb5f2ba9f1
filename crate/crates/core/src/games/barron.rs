//! Kernels built from two-layer networks `a · σ(b · z + c)`: the GAN-type
//! discriminator game and the adversarial weak form of a Neumann elliptic
//! problem.
//!
//! Network parameters `(a, b, c)` live on the torus `[0, 2π)^(d+2)` through
//! the embedding `a = A sin θ_a`, `b_k = B sin θ_{b,k}`, `c = C sin θ_c`.

use super::{GameKernel, KernelBounds};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sin,
    Tanh,
    Sigmoid,
}

impl Activation {
    /// `[σ(z), σ'(z), σ''(z)]`.
    pub fn eval<T: Scalar>(self, z: T) -> [T; 3] {
        match self {
            Activation::Sin => {
                let (s, c) = z.sin_cos();
                [s, c, -s]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d = T::one() - t * t;
                [t, d, -T::two() * t * d]
            }
            Activation::Sigmoid => {
                let s = T::one() / (T::one() + (-z).exp());
                let d = s * (T::one() - s);
                [s, d, d * (T::one() - T::two() * s)]
            }
        }
    }

    /// `[sup |σ|, sup |σ'|, sup |σ''|]` over the real line.
    pub fn sup_bounds(self) -> [f64; 3] {
        let sqrt3 = 3f64.sqrt();
        match self {
            Activation::Sin => [1.0, 1.0, 1.0],
            Activation::Tanh => [1.0, 1.0, 4.0 / (3.0 * sqrt3)],
            Activation::Sigmoid => [1.0, 0.25, 1.0 / (6.0 * sqrt3)],
        }
    }
}

/// Non-negative weight `φ` on the outer coefficient `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Zero,
    /// `(sup|σ| + ε) · √(a² + ε²)`, a C² majorant of `|a| (sup|σ| + ε)`.
    SmoothAbs { eps: f64 },
}

impl Default for Weight {
    fn default() -> Self {
        Weight::SmoothAbs { eps: 0.05 }
    }
}

impl Weight {
    fn value_and_slope<T: Scalar>(self, a: T, sup_sigma: f64) -> (T, T) {
        match self {
            Weight::Zero => (T::zero(), T::zero()),
            Weight::SmoothAbs { eps } => {
                let e = T::lit(eps);
                let scale = T::lit(sup_sigma + eps);
                let r = (a * a + e * e).sqrt();
                (scale * r, scale * a / r)
            }
        }
    }

    /// `(sup φ, sup |φ'|)` for `|a| ≤ amp`.
    fn sup<T: Scalar>(self, amp: T, sup_sigma: f64) -> (T, T) {
        match self {
            Weight::Zero => (T::zero(), T::zero()),
            Weight::SmoothAbs { eps } => {
                let e = T::lit(eps);
                let scale = T::lit(sup_sigma + eps);
                (scale * (amp * amp + e * e).sqrt(), scale)
            }
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Weight::SmoothAbs { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(invalid("weight epsilon must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Amplitudes of the sine embedding of `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarronEmbedding {
    pub amp_a: f64,
    pub amp_b: f64,
    pub amp_c: f64,
}

impl Default for BarronEmbedding {
    fn default() -> Self {
        Self {
            amp_a: 1.0,
            amp_b: 1.0,
            amp_c: 1.0,
        }
    }
}

/// Network parameters decoded from an angle vector, with `d(param)/dθ`.
struct Neuron<T> {
    a: T,
    da: T,
    b: [T; 2],
    db: [T; 2],
    c: T,
    dc: T,
}

impl BarronEmbedding {
    fn decode<T: Scalar>(&self, theta: &[T], d: usize) -> Neuron<T> {
        let (sa, ca) = theta[0].sin_cos();
        let (sc, cc) = theta[d + 1].sin_cos();
        let amp_b = T::lit(self.amp_b);
        let mut b = [T::zero(); 2];
        let mut db = [T::zero(); 2];
        for k in 0..d {
            let (s, c) = theta[1 + k].sin_cos();
            b[k] = amp_b * s;
            db[k] = amp_b * c;
        }
        Neuron {
            a: T::lit(self.amp_a) * sa,
            da: T::lit(self.amp_a) * ca,
            b,
            db,
            c: T::lit(self.amp_c) * sc,
            dc: T::lit(self.amp_c) * cc,
        }
    }

    fn validate(&self) -> Result<()> {
        for v in [self.amp_a, self.amp_b, self.amp_c] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("embedding amplitudes must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Scalar field on the unit box, used for the reaction coefficient and the
/// source term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Constant { value: f64 },
    /// `offset + amplitude · Π_k cos(π · frequency · z_k)`.
    Cosine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl Field {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            Field::Constant { value } => value,
            Field::Cosine {
                offset,
                amplitude,
                frequency,
            } => {
                offset
                    + amplitude
                        * z.iter()
                            .map(|&zk| (std::f64::consts::PI * frequency * zk).cos())
                            .product::<f64>()
            }
        }
    }
}

/// Discriminator game: `K(x, y) = Σ(x, y) − (1/m) Σ_i Σ(x_i, y) + φ(y)` with
/// `Σ(x, y) = a σ(b · e(x) + c)`.
///
/// Data points live on a torus of circumference `L`; the network sees them
/// through the periodic feature `e_k(x) = sin(2π x_k / L)`.
#[derive(Debug, Clone)]
pub struct GanKernel<T> {
    samples: Vec<T>,
    data_dim: usize,
    period: T,
    omega: T,
    activation: Activation,
    weight: Weight,
    embedding: BarronEmbedding,
}

impl<T: Scalar> GanKernel<T> {
    /// `samples` holds `m · data_dim` coordinates of the target points.
    pub fn new(
        samples: Vec<T>,
        data_dim: usize,
        period: T,
        activation: Activation,
        weight: Weight,
        embedding: BarronEmbedding,
    ) -> Result<Self> {
        if !(1..=2).contains(&data_dim) {
            return Err(invalid("data dimension must be 1 or 2"));
        }
        if samples.is_empty() {
            return Err(invalid("target sample set is empty"));
        }
        if samples.len() % data_dim != 0 {
            return Err(invalid("sample coordinates do not match the data dimension"));
        }
        if !(period > T::zero()) {
            return Err(invalid("period must be positive"));
        }
        weight.validate()?;
        embedding.validate()?;
        Ok(Self {
            samples,
            data_dim,
            period,
            omega: T::TAU() / period,
            activation,
            weight,
            embedding,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.data_dim
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn weight_value(&self, y: &[T]) -> T {
        let n = self.embedding.decode(y, self.data_dim);
        self.weight
            .value_and_slope(n.a, self.activation.sup_bounds()[0])
            .0
    }

    fn pre_activation(&self, n: &Neuron<T>, x: &[T]) -> T {
        let mut u = n.c;
        for k in 0..self.data_dim {
            u += n.b[k] * (self.omega * x[k]).sin();
        }
        u
    }
}

impl<T: Scalar> GameKernel<T> for GanKernel<T> {
    fn name(&self) -> &str {
        "gan"
    }
    fn dim_x(&self) -> usize {
        self.data_dim
    }
    fn dim_y(&self) -> usize {
        self.data_dim + 2
    }
    fn period_x(&self) -> T {
        self.period
    }
    fn period_y(&self) -> T {
        T::TAU()
    }

    fn eval(&self, x: &[T], y: &[T]) -> T {
        let d = self.data_dim;
        let n = self.embedding.decode(y, d);
        let own = self.activation.eval(self.pre_activation(&n, x))[0];
        let mut mean = T::zero();
        for xi in self.samples.chunks_exact(d) {
            mean += self.activation.eval(self.pre_activation(&n, xi))[0];
        }
        mean /= T::from_usize_lossy(self.sample_count());
        let (phi, _) = self
            .weight
            .value_and_slope(n.a, self.activation.sup_bounds()[0]);
        n.a * (own - mean) + phi
    }

    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        let d = self.data_dim;
        let n = self.embedding.decode(y, d);
        let ds = self.activation.eval(self.pre_activation(&n, x))[1];
        for k in 0..d {
            out[k] = n.a * ds * n.b[k] * self.omega * (self.omega * x[k]).cos();
        }
    }

    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        let d = self.data_dim;
        let n = self.embedding.decode(y, d);
        let feature = |p: &[T], k: usize| (self.omega * p[k]).sin();
        let own = self.activation.eval(self.pre_activation(&n, x));
        let mut mean_s = T::zero();
        let mut mean_ds = T::zero();
        let mut mean_ds_e = [T::zero(); 2];
        for xi in self.samples.chunks_exact(d) {
            let s = self.activation.eval(self.pre_activation(&n, xi));
            mean_s += s[0];
            mean_ds += s[1];
            for k in 0..d {
                mean_ds_e[k] += s[1] * feature(xi, k);
            }
        }
        let inv_m = T::one() / T::from_usize_lossy(self.sample_count());
        mean_s *= inv_m;
        mean_ds *= inv_m;
        let (_, slope) = self
            .weight
            .value_and_slope(n.a, self.activation.sup_bounds()[0]);
        out[0] = (own[0] - mean_s + slope) * n.da;
        for k in 0..d {
            out[1 + k] = n.a * (own[1] * feature(x, k) - mean_ds_e[k] * inv_m) * n.db[k];
        }
        out[d + 1] = n.a * (own[1] - mean_ds) * n.dc;
    }

    fn bounds(&self) -> KernelBounds<T> {
        let [s0, s1, s2] = self.activation.sup_bounds().map(T::lit);
        let a = T::lit(self.embedding.amp_a);
        let b = T::lit(self.embedding.amp_b);
        let c = T::lit(self.embedding.amp_c);
        let w = self.omega;
        let d = T::from_usize_lossy(self.data_dim);
        let (phi_max, slope_max) = self.weight.sup(a, self.activation.sup_bounds()[0]);

        let lip_x = d.sqrt() * a * s1 * b * w;
        let ga = a * (T::two() * s0 + slope_max);
        let gb = a * T::two() * s1 * b;
        let gc = a * T::two() * s1 * c;
        let lip_y = (ga * ga + d * gb * gb + gc * gc).sqrt();

        // Frobenius norm of the mixed Hessian bound, rows x_k, columns θ.
        let mut frob = T::zero();
        for k in 0..self.data_dim {
            let ea = a * s1 * b * w;
            let ec = a * s2 * b * c * w;
            frob += ea * ea + ec * ec;
            for j in 0..self.data_dim {
                let diag = if j == k { s1 } else { T::zero() };
                let e = a * b * w * (s2 * b + diag);
                frob += e * e;
            }
        }
        KernelBounds {
            sup_norm: T::two() * a * s0 + phi_max,
            kxy: frob.sqrt(),
            lip: lip_x.max(lip_y),
        }
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "activation": self.activation,
            "phi": self.weight,
            "embedding": self.embedding,
            "samples": self.sample_count(),
            "feature": "sin(2*pi*x/L)",
        })
    }
}

/// Construction parameters of [`PetrovGalerkinKernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PetrovGalerkinSpec {
    /// Dimension of the physical box `[0, 1]^d`.
    pub z_dim: usize,
    pub reaction: Field,
    pub source: Field,
    /// Midpoint nodes per axis.
    pub quad_nodes: usize,
    pub reaction_min: f64,
    pub trial_activation: Activation,
    pub test_activation: Activation,
    pub trial_weight: Weight,
    pub test_weight: Weight,
    pub trial_embedding: BarronEmbedding,
    pub test_embedding: BarronEmbedding,
}

impl Default for PetrovGalerkinSpec {
    fn default() -> Self {
        Self {
            z_dim: 1,
            reaction: Field::Constant { value: 1.0 },
            source: Field::Cosine {
                offset: 0.0,
                amplitude: 1.0,
                frequency: 1.0,
            },
            quad_nodes: 32,
            reaction_min: 1e-3,
            trial_activation: Activation::Tanh,
            test_activation: Activation::Tanh,
            trial_weight: Weight::Zero,
            test_weight: Weight::Zero,
            trial_embedding: BarronEmbedding::default(),
            test_embedding: BarronEmbedding::default(),
        }
    }
}

/// Bilinear game of the Petrov-Galerkin weak form of `−Δu + Vu = f` with
/// Neumann data, trial neurons `x = (a₁, b₁, c₁)` against test neurons
/// `y = (a₂, b₂, c₂)`:
///
/// `K(x, y) = ∫ a₁a₂ (b₁·b₂) σ₁' σ₂' + V a₁a₂ σ₁ σ₂ − f a₂ σ₂ dz − φ₁(x) + φ₂(y)`,
/// integrated with the tensor midpoint rule on `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct PetrovGalerkinKernel<T> {
    spec: PetrovGalerkinSpec,
    nodes: Vec<[T; 2]>,
    reaction: Vec<T>,
    source: Vec<T>,
    weight: T,
}

impl<T: Scalar> PetrovGalerkinKernel<T> {
    pub fn new(spec: PetrovGalerkinSpec) -> Result<Self> {
        if !(1..=2).contains(&spec.z_dim) {
            return Err(invalid("physical dimension must be 1 or 2"));
        }
        if spec.quad_nodes == 0 {
            return Err(invalid("quadrature needs at least one node"));
        }
        if !(spec.reaction_min > 0.0) {
            return Err(invalid("reaction lower bound must be positive"));
        }
        spec.trial_weight.validate()?;
        spec.test_weight.validate()?;
        spec.trial_embedding.validate()?;
        spec.test_embedding.validate()?;
        let q = spec.quad_nodes;
        let count = q.pow(spec.z_dim as u32);
        let mut nodes = Vec::with_capacity(count);
        let mut reaction = Vec::with_capacity(count);
        let mut source = Vec::with_capacity(count);
        for idx in 0..count {
            let mut z = [0.0; 2];
            let mut rest = idx;
            for zk in z.iter_mut().take(spec.z_dim).rev() {
                *zk = ((rest % q) as f64 + 0.5) / q as f64;
                rest /= q;
            }
            let zs = &z[..spec.z_dim];
            let v = spec.reaction.eval(zs);
            if !(v >= spec.reaction_min && v.is_finite()) {
                return Err(invalid(format!(
                    "reaction coefficient {v} at {zs:?} is below the lower bound {}",
                    spec.reaction_min
                )));
            }
            nodes.push([T::lit(z[0]), T::lit(z[1])]);
            reaction.push(T::lit(v));
            source.push(T::lit(spec.source.eval(zs)));
        }
        Ok(Self {
            weight: T::one() / T::from_usize_lossy(count),
            spec,
            nodes,
            reaction,
            source,
        })
    }

    pub fn spec(&self) -> &PetrovGalerkinSpec {
        &self.spec
    }

    fn decode(&self, x: &[T], y: &[T]) -> (Neuron<T>, Neuron<T>) {
        let d = self.spec.z_dim;
        (
            self.spec.trial_embedding.decode(x, d),
            self.spec.test_embedding.decode(y, d),
        )
    }

    fn dot(&self, b1: &[T; 2], b2: &[T; 2]) -> T {
        let mut acc = T::zero();
        for k in 0..self.spec.z_dim {
            acc += b1[k] * b2[k];
        }
        acc
    }

    fn pre(&self, n: &Neuron<T>, z: &[T; 2]) -> T {
        let mut u = n.c;
        for k in 0..self.spec.z_dim {
            u += n.b[k] * z[k];
        }
        u
    }

    fn weights(&self, n1: &Neuron<T>, n2: &Neuron<T>) -> ((T, T), (T, T)) {
        let s1 = self.spec.trial_activation.sup_bounds()[0];
        let s2 = self.spec.test_activation.sup_bounds()[0];
        (
            self.spec.trial_weight.value_and_slope(n1.a, s1),
            self.spec.test_weight.value_and_slope(n2.a, s2),
        )
    }
}

impl<T: Scalar> GameKernel<T> for PetrovGalerkinKernel<T> {
    fn name(&self) -> &str {
        "petrov_galerkin"
    }
    fn dim_x(&self) -> usize {
        self.spec.z_dim + 2
    }
    fn dim_y(&self) -> usize {
        self.spec.z_dim + 2
    }
    fn period_x(&self) -> T {
        T::TAU()
    }
    fn period_y(&self) -> T {
        T::TAU()
    }

    fn eval(&self, x: &[T], y: &[T]) -> T {
        let (n1, n2) = self.decode(x, y);
        let p = self.dot(&n1.b, &n2.b);
        let mut acc = T::zero();
        for (q, z) in self.nodes.iter().enumerate() {
            let [s1, d1, _] = self.spec.trial_activation.eval(self.pre(&n1, z));
            let [s2, d2, _] = self.spec.test_activation.eval(self.pre(&n2, z));
            acc += n1.a * n2.a * p * d1 * d2 + self.reaction[q] * n1.a * n2.a * s1 * s2
                - self.source[q] * n2.a * s2;
        }
        let ((phi1, _), (phi2, _)) = self.weights(&n1, &n2);
        acc * self.weight - phi1 + phi2
    }

    fn grad_x(&self, x: &[T], y: &[T], out: &mut [T]) {
        let d = self.spec.z_dim;
        let (n1, n2) = self.decode(x, y);
        let p = self.dot(&n1.b, &n2.b);
        let (a1, a2) = (n1.a, n2.a);
        let mut ga = T::zero();
        let mut gb = [T::zero(); 2];
        let mut gc = T::zero();
        for (q, z) in self.nodes.iter().enumerate() {
            let [s1, d1, dd1] = self.spec.trial_activation.eval(self.pre(&n1, z));
            let [s2, d2, _] = self.spec.test_activation.eval(self.pre(&n2, z));
            let v = self.reaction[q];
            ga += a2 * p * d1 * d2 + v * a2 * s1 * s2;
            for k in 0..d {
                gb[k] += a1 * a2 * (n2.b[k] * d1 * d2 + p * dd1 * z[k] * d2)
                    + v * a1 * a2 * d1 * z[k] * s2;
            }
            gc += a1 * a2 * p * dd1 * d2 + v * a1 * a2 * d1 * s2;
        }
        let ((_, slope1), _) = self.weights(&n1, &n2);
        out[0] = (ga * self.weight - slope1) * n1.da;
        for k in 0..d {
            out[1 + k] = gb[k] * self.weight * n1.db[k];
        }
        out[d + 1] = gc * self.weight * n1.dc;
    }

    fn grad_y(&self, x: &[T], y: &[T], out: &mut [T]) {
        let d = self.spec.z_dim;
        let (n1, n2) = self.decode(x, y);
        let p = self.dot(&n1.b, &n2.b);
        let (a1, a2) = (n1.a, n2.a);
        let mut ga = T::zero();
        let mut gb = [T::zero(); 2];
        let mut gc = T::zero();
        for (q, z) in self.nodes.iter().enumerate() {
            let [s1, d1, _] = self.spec.trial_activation.eval(self.pre(&n1, z));
            let [s2, d2, dd2] = self.spec.test_activation.eval(self.pre(&n2, z));
            let (v, f) = (self.reaction[q], self.source[q]);
            ga += a1 * p * d1 * d2 + v * a1 * s1 * s2 - f * s2;
            for k in 0..d {
                gb[k] += a1 * a2 * (n1.b[k] * d1 * d2 + p * d1 * dd2 * z[k])
                    + v * a1 * a2 * s1 * d2 * z[k]
                    - f * a2 * d2 * z[k];
            }
            gc += a1 * a2 * p * d1 * dd2 + v * a1 * a2 * s1 * d2 - f * a2 * d2;
        }
        let (_, (_, slope2)) = self.weights(&n1, &n2);
        out[0] = (ga * self.weight + slope2) * n2.da;
        for k in 0..d {
            out[1 + k] = gb[k] * self.weight * n2.db[k];
        }
        out[d + 1] = gc * self.weight * n2.dc;
    }

    fn bounds(&self) -> KernelBounds<T> {
        let sp = &self.spec;
        let [s0, s1, s2] = sp.trial_activation.sup_bounds().map(T::lit);
        let [t0, t1, t2] = sp.test_activation.sup_bounds().map(T::lit);
        let e1 = sp.trial_embedding;
        let e2 = sp.test_embedding;
        let (a1, b1, c1) = (T::lit(e1.amp_a), T::lit(e1.amp_b), T::lit(e1.amp_c));
        let (a2, b2, c2) = (T::lit(e2.amp_a), T::lit(e2.amp_b), T::lit(e2.amp_c));
        let d = sp.z_dim;
        let dd = T::from_usize_lossy(d);
        let pm = dd * b1 * b2;
        let vm = self.reaction.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let fm = self.source.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let (phi1, slope1) = sp.trial_weight.sup(a1, sp.trial_activation.sup_bounds()[0]);
        let (phi2, slope2) = sp.test_weight.sup(a2, sp.test_activation.sup_bounds()[0]);

        let sup_norm = a1 * a2 * pm * s1 * t1 + vm * a1 * a2 * s0 * t0 + fm * a2 * t0 + phi1 + phi2;

        let gxa = a1 * (a2 * pm * s1 * t1 + vm * a2 * s0 * t0 + slope1);
        let gxb = b1 * (a1 * a2 * (b2 * s1 * t1 + pm * s2 * t1) + vm * a1 * a2 * s1 * t0);
        let gxc = c1 * (a1 * a2 * pm * s2 * t1 + vm * a1 * a2 * s1 * t0);
        let gya = a2 * (a1 * pm * s1 * t1 + vm * a1 * s0 * t0 + fm * t0 + slope2);
        let gyb = b2 * (a1 * a2 * (b1 * s1 * t1 + pm * s1 * t2) + vm * a1 * a2 * s0 * t1 + fm * a2 * t1);
        let gyc = c2 * (a1 * a2 * pm * s1 * t2 + vm * a1 * a2 * s0 * t1 + fm * a2 * t1);
        let lip_x = (gxa * gxa + dd * gxb * gxb + gxc * gxc).sqrt();
        let lip_y = (gya * gya + dd * gyb * gyb + gyc * gyc).sqrt();

        // Raw mixed-derivative bounds, scaled by the embedding amplitudes.
        let aa = pm * s1 * t1 + vm * s0 * t0;
        let ab = a2 * (b1 * s1 * t1 + pm * s1 * t2) + vm * a2 * s0 * t1;
        let ac = a2 * pm * s1 * t2 + vm * a2 * s0 * t1;
        let ba = a1 * (b2 * s1 * t1 + pm * s2 * t1) + vm * a1 * s1 * t0;
        let bc = a1 * a2 * (b2 * s1 * t2 + pm * s2 * t2) + vm * a1 * a2 * s1 * t1;
        let ca = a1 * pm * s2 * t1 + vm * a1 * s1 * t0;
        let cb = a1 * a2 * (b1 * s2 * t1 + pm * s2 * t2) + vm * a1 * a2 * s1 * t1;
        let cc = a1 * a2 * pm * s2 * t2 + vm * a1 * a2 * s1 * t1;
        let bb = |same: bool| {
            let diag = if same { s1 * t1 } else { T::zero() };
            a1 * a2 * (diag + b2 * s1 * t2 + b1 * s2 * t1 + pm * s2 * t2) + vm * a1 * a2 * s1 * t1
        };
        let sq = |v: T| v * v;
        let mut frob = sq(a1 * a2 * aa) + sq(a1 * c2 * ac) + sq(c1 * a2 * ca) + sq(c1 * c2 * cc);
        frob += dd * (sq(a1 * b2 * ab) + sq(b1 * a2 * ba) + sq(b1 * c2 * bc) + sq(c1 * b2 * cb));
        for k in 0..d {
            for l in 0..d {
                frob += sq(b1 * b2 * bb(k == l));
            }
        }
        KernelBounds {
            sup_norm,
            kxy: frob.sqrt(),
            lip: lip_x.max(lip_y),
        }
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).unwrap_or(serde_json::Value::Null)
    }
}
