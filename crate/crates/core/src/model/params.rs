//! Named parameter tensors and their gradients.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// All tensors of a model, addressable by stable dotted names. Non-trainable
/// entries hold batch-norm running statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl Params {
    pub(crate) fn add(&mut self, name: String, shape: Vec<usize>, values: Vec<f64>, trainable: bool) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "{name}");
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.shapes.push(shape);
        self.values.push(values);
        self.trainable.push(trainable);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.ids().filter(|&i| self.is_trainable(i)).map(|i| self.values[i.0].len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            values: self.values.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }
}

/// Gradient buffers aligned with a [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub(crate) values: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }
}

pub(crate) fn kaiming_normal(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let d = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Uniform in ±1/√fan_in.
pub(crate) fn fan_in_uniform(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let b = 1.0 / (fan_in as f64).sqrt();
    let d = Uniform::new_inclusive(-b, b);
    (0..n).map(|_| d.sample(rng)).collect()
}

pub(crate) fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Vec<f64> {
    let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let d = Uniform::new_inclusive(-b, b);
    (0..fan_in * fan_out).map(|_| d.sample(rng)).collect()
}
