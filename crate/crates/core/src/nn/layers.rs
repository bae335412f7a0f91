use rand::Rng;

use super::param::ParamBlock;

/// `W·x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: ParamBlock,
    pub b: ParamBlock,
}

impl Affine {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, scale: f64, rng: &mut R) -> Self {
        Affine {
            w: ParamBlock::uniform(format!("{name}.w"), &[output, input], scale, rng),
            b: ParamBlock::uniform(format!("{name}.b"), &[output], scale, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        debug_assert_eq!(x.len(), n);
        self.b
            .values
            .iter()
            .zip(self.w.values.chunks_exact(n))
            .map(|(b, row)| b + dot(row, x))
            .collect()
    }

    /// Accumulates parameter gradients and returns `d/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        let mut dx = vec![0.0; n];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            self.b.grad[o] += d;
            let row = &self.w.values[o * n..(o + 1) * n];
            let grow = &mut self.w.grad[o * n..(o + 1) * n];
            for i in 0..n {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }

    pub fn blocks(&self) -> [&ParamBlock; 2] {
        [&self.w, &self.b]
    }

    pub fn blocks_mut(&mut self) -> [&mut ParamBlock; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Single-layer tanh recurrence `h' = tanh(W·[h; x] + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub affine: Affine,
}

impl RecurrentCell {
    pub fn new<R: Rng + ?Sized>(name: &str, input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        RecurrentCell {
            input_dim,
            hidden_dim,
            affine: Affine::new(name, hidden_dim + input_dim, hidden_dim, scale, rng),
        }
    }

    /// Returns the concatenated cell input and the new hidden state.
    pub fn forward(&self, h: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = Vec::with_capacity(self.hidden_dim + self.input_dim);
        z.extend_from_slice(h);
        z.extend_from_slice(x);
        let out = self.affine.forward(&z).into_iter().map(f64::tanh).collect();
        (z, out)
    }

    /// Given the cached input `z`, output `h'` and `d/dh'`, returns `d/dz`.
    pub fn backward(&mut self, z: &[f64], out: &[f64], d_out: &[f64]) -> Vec<f64> {
        let d_pre: Vec<f64> = out
            .iter()
            .zip(d_out)
            .map(|(o, d)| d * (1.0 - o * o))
            .collect();
        self.affine.backward(z, &d_pre)
    }
}

/// Lookup table of `vocab × dim` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: ParamBlock,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(name: &str, vocab: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Embedding {
            table: ParamBlock::uniform(format!("{name}.table"), &[vocab, dim], scale, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape[1]
    }

    pub fn row(&self, token: usize) -> &[f64] {
        let d = self.dim();
        &self.table.values[token * d..(token + 1) * d]
    }

    pub fn backward(&mut self, token: usize, d_row: &[f64]) {
        let d = self.dim();
        for (g, v) in self.table.grad[token * d..(token + 1) * d].iter_mut().zip(d_row) {
            *g += v;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};

    #[test]
    fn softmax_normalizes_extreme_logits() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn cell_outputs_stay_in_open_interval() {
        let mut rng = stream(3, &[purpose::TEST]);
        let cell = RecurrentCell::new("c", 5, 4, 3.0, &mut rng);
        let (_, h) = cell.forward(&[0.9, -0.9, 0.5, 0.1], &[10.0, -10.0, 3.0, 1.0, 0.0]);
        assert!(h.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn affine_backward_matches_hand_computation() {
        let mut rng = stream(4, &[purpose::TEST]);
        let mut a = Affine::new("a", 2, 1, 0.1, &mut rng);
        a.w.values = vec![2.0, -1.0];
        let x = [3.0, 4.0];
        let dx = a.backward(&x, &[0.5]);
        assert_eq!(dx, vec![1.0, -0.5]);
        assert_eq!(a.w.grad, vec![1.5, 2.0]);
        assert_eq!(a.b.grad, vec![0.5]);
    }
}
