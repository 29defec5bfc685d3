use std::collections::HashMap;

use rand::Rng;

use super::scalar::Scalar;
use super::tensor::TensorData;

/// Handle to a named parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone)]
struct Entry<T> {
    name: String,
    value: TensorData<T>,
    grad: TensorData<T>,
}

/// Flat store of named trainable parameters with shape-congruent
/// gradient accumulators.
#[derive(Clone)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: TensorData<T>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.entries.len());
        let grad = TensorData::zeros(value.shape());
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Glorot-uniform matrix parameter: uniform(-r, r), r = sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot(&mut self, name: &str, shape: &[usize], rng: &mut impl Rng) -> ParamId {
        let (fan_in, fan_out) = match shape {
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            _ => panic!("add_glorot expects rank 1 or 2, got {shape:?}"),
        };
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<T> = (0..numel)
            .map(|_| T::of(rng.gen_range(-r..r)))
            .collect();
        self.add(name, TensorData::new(shape.to_vec(), data))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, TensorData::zeros(shape))
    }

    pub fn add_const(&mut self, name: &str, shape: &[usize], v: f64) -> ParamId {
        let numel: usize = shape.iter().product();
        self.add(
            name,
            TensorData::new(shape.to_vec(), vec![T::of(v); numel]),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &TensorData<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut TensorData<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &TensorData<T> {
        &self.entries[id.0].grad
    }

    pub(crate) fn grad_add(&mut self, id: ParamId, delta: &TensorData<T>) {
        self.entries[id.0].grad.add_assign(delta);
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// (name, value) pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorData<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Replace values by name from a checkpoint record set.
    pub fn load_values(&mut self, records: &[(String, TensorData<T>)]) -> crate::error::Result<()> {
        for (name, value) in records {
            let id = self.id(name).ok_or_else(|| {
                crate::error::Error::Checkpoint(format!("unknown parameter {name:?}"))
            })?;
            if self.value(id).shape() != value.shape() {
                return Err(crate::error::Error::Checkpoint(format!(
                    "parameter {name:?} shape mismatch: have {:?}, checkpoint {:?}",
                    self.value(id).shape(),
                    value.shape()
                )));
            }
            self.entries[id.0].value = value.clone();
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}
