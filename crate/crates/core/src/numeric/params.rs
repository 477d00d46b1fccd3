use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NumericError, Tensor};

/// Named parameters with deterministic (lexicographic) iteration order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Registers a `[fan_in, fan_out]` weight drawn uniformly from
    /// `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init_glorot<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let t = Tensor::new(vec![fan_in, fan_out], values).expect("glorot shape");
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// Checks that `grads` only names known parameters with matching shapes.
    pub fn check_grads(&self, grads: &BTreeMap<String, Tensor>) -> Result<(), NumericError> {
        for (name, g) in grads {
            let p = self
                .get(name)
                .ok_or_else(|| NumericError::MissingParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(NumericError::Dimension {
                    op: "gradient",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        a.init_glorot("w", 10, 6, &mut ChaCha8Rng::seed_from_u64(3));
        b.init_glorot("w", 10, 6, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(a.get("w").unwrap().values().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn iteration_is_sorted() {
        let mut s = ParamStore::new();
        s.init_zeros("b", &[1]);
        s.init_zeros("a", &[1]);
        let names: Vec<_> = s.names().cloned().collect();
        assert_eq!(names, vec!["a", "b"]);
    }

    #[test]
    fn gradient_shape_mismatch_detected() {
        let mut s = ParamStore::new();
        s.init_zeros("w", &[2, 2]);
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::zeros(&[2]));
        assert!(s.check_grads(&g).is_err());
    }
}
