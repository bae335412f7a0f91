use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EdlError, Result};

/// A named, flat parameter tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ParamBlock {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut block = Self::zeros(name, shape);
        if scale > 0.0 {
            for v in &mut block.values {
                *v = rng.gen_range(-scale..=scale);
            }
        }
        block
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Replaces the values, checking the length against the shape.
    pub fn load(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(EdlError::DimensionMismatch {
                left: values.len(),
                right: self.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.grad.iter().all(|g| g.is_finite()) {
            Ok(())
        } else {
            Err(EdlError::NonFiniteGradient(self.name.clone()))
        }
    }
}

/// Which learner owns a block; freeze flags act on these groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    QPolicy,
    Regressor,
    APolicy,
}
