use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::compute::scalar::Scalar;
use crate::error::{Error, Result};

/// A named trainable array with its gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != value.len() {
            return Err(Error::shape(
                "param",
                format!("shape {shape:?} needs {len} values, got {}", value.len()),
            ));
        }
        Ok(Param {
            grad: vec![T::zero(); len],
            shape,
            value,
        })
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named parameters in lexicographic order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T = f32> {
    entries: BTreeMap<String, Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(name, Param::new(shape, value)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))
    }

    pub fn value(&self, name: &str) -> Result<&[T]> {
        Ok(&self.get(name)?.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Convert every value to another scalar type; gradients are reset.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let entries = self
            .entries
            .iter()
            .map(|(k, p)| {
                let value = p.value.iter().map(|v| U::of(v.to_f64().unwrap())).collect::<Vec<U>>();
                let grad = vec![U::zero(); value.len()];
                (
                    k.clone(),
                    Param {
                        shape: p.shape.clone(),
                        value,
                        grad,
                    },
                )
            })
            .collect();
        ParamSet { entries }
    }
}

/// Exact number of scalar values across all entries.
pub fn count_parameters<T: Scalar>(params: &ParamSet<T>) -> usize {
    params.entries.values().map(Param::len).sum()
}

/// How a parameter is initialized when a network is built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Normal { mean: f64, std: f64 },
    Constant(f64),
}

/// Deterministic parameter initializer: entries are filled in the order the
/// network declares them, from one seeded stream.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn fill(&mut self, init: Init, len: usize) -> Vec<f32> {
        match init {
            Init::Constant(c) => vec![c as f32; len],
            Init::Normal { mean, std } => {
                let dist = Normal::new(mean, std).expect("std must be finite and non-negative");
                (0..len).map(|_| dist.sample(&mut self.rng) as f32).collect()
            }
        }
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidArgument("eps must be >= 0".into()));
        }
        Ok(())
    }
}

/// First and second moment accumulators per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub first_moment: BTreeMap<String, Vec<f32>>,
    pub second_moment: BTreeMap<String, Vec<f32>>,
}

impl OptimState {
    pub fn for_params(params: &ParamSet) -> Self {
        let zeros = |p: &Param| vec![0.0f32; p.len()];
        OptimState {
            step: 0,
            first_moment: params.iter().map(|(k, p)| (k.to_string(), zeros(p))).collect(),
            second_moment: params.iter().map(|(k, p)| (k.to_string(), zeros(p))).collect(),
        }
    }
}

/// One bias-corrected Adam update using the gradients stored in `params`.
///
/// All gradients are checked before anything is modified, so a rejected step
/// leaves both parameters and state untouched.
pub fn adam_step(params: &mut ParamSet, state: &mut OptimState, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    for (name, p) in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {name:?}")));
        }
        match (state.first_moment.get(name), state.second_moment.get(name)) {
            (Some(m), Some(v)) if m.len() == p.len() && v.len() == p.len() => {}
            _ => {
                return Err(Error::shape(
                    "adam_step",
                    format!("optimizer state does not match parameter {name:?}"),
                ))
            }
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    for (name, p) in params.entries.iter_mut() {
        let m = state.first_moment.get_mut(name).expect("checked above");
        let v = state.second_moment.get_mut(name).expect("checked above");
        for i in 0..p.value.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] as f64 / bc1;
            let v_hat = v[i] as f64 / bc2;
            p.value[i] -= (cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
        }
    }
    Ok(())
}
