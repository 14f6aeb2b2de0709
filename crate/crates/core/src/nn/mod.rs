//! Minimal dense-network toolkit: parameter store, kernels, activations,
//! layer normalization and Adam.

pub mod adam;
pub mod linalg;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};

/// Shifted softplus, `ln(0.5·eˣ + 0.5)`; zero at the origin.
#[inline]
pub fn ssp(x: f64) -> f64 {
    softplus(x) - core::f64::consts::LN_2
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;

/// Normalizes `x` to zero mean and unit variance; returns `1/σ`.
pub fn normalize(x: &[f64], xhat: &mut [f64]) -> f64 {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / libm::sqrt(var + LN_EPS);
    for (o, v) in xhat.iter_mut().zip(x) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}

/// Gradient of [`normalize`] given the upstream gradient on `xhat`.
pub fn normalize_backward(xhat: &[f64], inv_std: f64, dxhat: &[f64], dx: &mut [f64]) {
    let d = xhat.len() as f64;
    let mean_d = dxhat.iter().sum::<f64>() / d;
    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d;
    for ((o, g), xh) in dx.iter_mut().zip(dxhat).zip(xhat) {
        *o = inv_std * (g - mean_d - xh * mean_dx);
    }
}

/// Handle to one named tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// How a tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±fan_in^(-1/2).
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Flat parameter vector with named, shaped views.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    inits: Vec<Init>,
    pub values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let offset = self.values.len();
        let spec = ParamSpec { name: name.into(), shape: shape.to_vec(), offset };
        self.values.resize(offset + spec.len(), 0.0);
        self.specs.push(spec);
        self.inits.push(init);
        ParamId(self.specs.len() - 1)
    }

    /// Re-draws every tensor from its initializer with a seeded stream.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (spec, init) in self.specs.iter().zip(&self.inits) {
            let slot = &mut self.values[spec.range()];
            match *init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
                    for v in slot.iter_mut() {
                        *v = rng.random_range(-bound..=bound);
                    }
                }
                Init::Zeros => slot.fill(0.0),
                Init::Ones => slot.fill(1.0),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.values[self.specs[id.0].range()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.specs[id.0].range();
        &mut self.values[r]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        alloc::vec![0.0; self.values.len()]
    }
}

/// Mutable view of a gradient buffer laid out like a [`ParamStore`].
pub struct Grads<'a> {
    pub specs: &'a [ParamSpec],
    pub values: &'a mut [f64],
}

impl<'a> Grads<'a> {
    pub fn new(store: &'a ParamStore, values: &'a mut [f64]) -> Self {
        assert_eq!(values.len(), store.len(), "gradient buffer does not match the parameter layout");
        Self { specs: &store.specs, values }
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.specs[id.0].range();
        &mut self.values[r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn activations() {
        assert_eq!(ssp(0.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        let eps = 1e-6;
        for x in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            let fd = (ssp(x + eps) - ssp(x - eps)) / (2.0 * eps);
            assert!((fd - sigmoid(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn store_layout_and_init() {
        let mut s = ParamStore::new();
        let w = s.add("w", &[2, 3], Init::Uniform { fan_in: 3 });
        let b = s.add("b", &[2], Init::Zeros);
        let g = s.add("g", &[2], Init::Ones);
        s.initialize(1);
        assert_eq!(s.len(), 10);
        assert_eq!(s.spec(b).offset, 6);
        assert!(s.get(w).iter().all(|v| v.abs() <= 1.0 / libm::sqrt(3.0)));
        assert_eq!(s.get(b), &[0.0, 0.0]);
        assert_eq!(s.get(g), &[1.0, 1.0]);
        assert_eq!(s.find("g"), Some(g));
        let mut other = s.clone();
        other.initialize(1);
        assert_eq!(other, s);
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let x = vec![0.3, -1.2, 2.0, 0.1, 0.9];
        let up = vec![0.5, -0.1, 0.2, 0.7, -0.3];
        let f = |x: &[f64]| {
            let mut h = vec![0.0; x.len()];
            normalize(x, &mut h);
            h.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut xhat = vec![0.0; 5];
        let inv = normalize(&x, &mut xhat);
        let mut dx = vec![0.0; 5];
        normalize_backward(&xhat, inv, &up, &mut dx);
        for i in 0..5 {
            let mut p = x.clone();
            p[i] += 1e-6;
            let mut m = x.clone();
            m[i] -= 1e-6;
            assert!(((f(&p) - f(&m)) / 2e-6 - dx[i]).abs() < 1e-8);
        }
    }

    proptest! {
        // With σ² ≥ 10, the ε floor perturbs the unit variance by < 1e-6.
        #[test]
        fn normalized_moments(values in proptest::collection::vec(-1.0f64..1.0, 8..64), scale in 10.0f64..100.0) {
            let x: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let d = x.len() as f64;
            let mean = x.iter().sum::<f64>() / d;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            prop_assume!(var >= 10.0);
            let mut h = vec![0.0; x.len()];
            normalize(&x, &mut h);
            let m = h.iter().sum::<f64>() / d;
            let v = h.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / d;
            prop_assert!(m.abs() < 1e-6);
            prop_assert!((v - 1.0).abs() < 1e-6);
            // exact relation for any input scale
            prop_assert!((v - var / (var + LN_EPS)).abs() < 1e-12);
        }
    }
}
