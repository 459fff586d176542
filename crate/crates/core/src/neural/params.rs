use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Matrix, NeuralError};
use crate::rng::Rng;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter matrices in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar count.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            entries: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, m)| CheckpointEntry {
                    name: name.clone(),
                    shape: [m.rows(), m.cols()],
                    values: m.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Loads values into a store with the same layout.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), NeuralError> {
        if ckpt.entries.len() != self.len() {
            return Err(NeuralError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                ckpt.entries.len(),
                self.len()
            )));
        }
        for (i, e) in ckpt.entries.iter().enumerate() {
            let m = &self.values[i];
            if e.name != self.names[i] || e.shape != [m.rows(), m.cols()] || e.values.len() != m.len() {
                return Err(NeuralError::Checkpoint(format!(
                    "tensor {i} is {} {:?}, model expects {} {:?}",
                    e.name,
                    e.shape,
                    self.names[i],
                    [m.rows(), m.cols()]
                )));
            }
        }
        for (i, e) in ckpt.entries.iter().enumerate() {
            self.values[i] = Matrix::from_vec(e.shape[0], e.shape[1], e.values.clone());
        }
        Ok(())
    }
}

/// Ordered `(name, shape, row-major values)` triples; serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(s).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut p = ParamStore::new();
        let id = p.add_uniform("w", 16, 8, 16, &mut seeded(1));
        assert!(p.get(id).max_abs() <= 0.25);
        assert_eq!(p.n_scalars(), 128);
        assert_eq!(p.find("w"), Some(id));
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let mut p = ParamStore::new();
        p.add_uniform("a", 3, 2, 2, &mut seeded(2));
        p.add("b", Matrix::row_vector(vec![0.1, 1.0 / 3.0]));
        let json = p.to_checkpoint().to_json();
        let mut q = p.clone();
        q.get_mut(ParamId(0)).data_mut()[0] = 99.0;
        q.load_checkpoint(&Checkpoint::from_json(&json).unwrap()).unwrap();
        assert_eq!(p, q);

        let mut other = ParamStore::new();
        other.add("a", Matrix::zeros(2, 3));
        other.add("b", Matrix::zeros(1, 2));
        assert!(other.load_checkpoint(&p.to_checkpoint()).is_err());
    }
}
