//! Small recurrent agents with hand-written reverse-mode gradients.
//!
//! Both bots use single-layer tanh cells. Utterances are one token, so every
//! decoder is a single softmax step. Forward passes record a tape that
//! `backward` consumes; gradients accumulate until the trainer zeroes them.

mod abot;
mod layers;
mod param;
mod qbot;

pub use abot::{ABotNet, ALoss, ATape};
pub use layers::{softmax, Affine, Embedding, RecurrentCell};
pub use param::{ParamBlock, ParamGroup};
pub use qbot::{QBotNet, QLoss, QTape};

use rand::Rng;

use crate::dialog::{Round, Side, Symbol};
use crate::error::{EdlError, Result};
use crate::rng::{self, purpose};
use crate::world::Instance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetDims {
    pub q_vocab: usize,
    pub a_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            q_vocab: crate::dialog::DEFAULT_Q_VOCAB,
            a_vocab: crate::dialog::DEFAULT_A_VOCAB,
            embed_dim: 16,
            hidden_dim: 32,
            init_scale: 0.1,
        }
    }
}

/// The questioner (with its regressor) and the answerer.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub q: QBotNet,
    pub a: ABotNet,
}

impl AgentNets {
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[purpose::PARAM_INIT]);
        let q = QBotNet::new(dims, &mut rng);
        let a = ABotNet::new(dims, &mut rng);
        AgentNets { q, a }
    }

    pub fn dims(&self) -> NetDims {
        self.q.dims
    }

    pub fn blocks(&self) -> Vec<(ParamGroup, &ParamBlock)> {
        let mut out = self.q.blocks();
        out.extend(self.a.blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(ParamGroup, &mut ParamBlock)> {
        let mut out = self.q.blocks_mut();
        out.extend(self.a.blocks_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, b) in self.blocks_mut() {
            b.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Human-readable listing of blocks, shapes and sizes.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (group, b) in self.blocks() {
            out += &format!("{:<24} {:<10} {:>10} {:>6}\n", b.name, format!("{group:?}"), format!("{:?}", b.shape), b.len());
        }
        out += &format!("total parameters: {}\n", self.parameter_count());
        out
    }
}

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(EdlError::Contract("empty distribution".into()));
    }
    let total: f64 = dist.iter().sum();
    if dist.iter().any(|p| !p.is_finite() || *p < -1e-12) || (total - 1.0).abs() > 1e-6 {
        return Err(EdlError::Contract(format!(
            "not a probability vector (sum {total})"
        )));
    }
    Ok(())
}

pub fn sample_symbol<R: Rng + ?Sized>(dist: &[f64], side: Side, rng: &mut R) -> Result<Symbol> {
    check_distribution(dist)?;
    Symbol::new(side, rng::categorical(dist, rng), dist.len())
}

/// Argmax, lowest index on ties.
pub fn greedy_symbol(dist: &[f64], side: Side) -> Result<Symbol> {
    check_distribution(dist)?;
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    Symbol::new(side, best, dist.len())
}

/// A fixed dialog plus per-token and per-prediction loss weights for both
/// bots. Used for gradient checks and as the unit of every update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLoss {
    pub instance: Instance,
    pub rounds: Vec<Round>,
    pub q: QLoss,
    pub a: ALoss,
}

impl EpisodeLoss {
    pub fn value(&self, nets: &AgentNets) -> Result<f64> {
        Ok(self.q_value(nets)? + self.a_value(nets)?)
    }

    fn q_value(&self, nets: &AgentNets) -> Result<f64> {
        let qt = nets.q.forward_rounds(self.instance.task, &self.rounds)?;
        nets.q.loss(&qt, &self.q)
    }

    fn a_value(&self, nets: &AgentNets) -> Result<f64> {
        let at = nets.a.forward_rounds(self.instance.image, &self.rounds)?;
        nets.a.loss(&at, &self.a)
    }

    /// Accumulates gradients; returns the loss value.
    pub fn backward(&self, nets: &mut AgentNets) -> Result<f64> {
        let qt = nets.q.forward_rounds(self.instance.task, &self.rounds)?;
        let at = nets.a.forward_rounds(self.instance.image, &self.rounds)?;
        let value = nets.q.loss(&qt, &self.q)? + nets.a.loss(&at, &self.a)?;
        nets.q.backward(&qt, &self.q)?;
        nets.a.backward(&at, &self.a)?;
        Ok(value)
    }
}

/// Largest `|analytic - numeric| / max(1e-8, |numeric|)` over every
/// parameter. The numeric gradient is the five-point central difference
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
pub fn fd_check(nets: &AgentNets, spec: &EpisodeLoss, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(EdlError::Contract("finite-difference step must be positive".into()));
    }
    let mut work = nets.clone();
    work.zero_grad();
    spec.backward(&mut work)?;
    let analytic: Vec<(ParamGroup, Vec<f64>)> =
        work.blocks().iter().map(|(g, b)| (*g, b.grad.clone())).collect();
    let mut worst: f64 = 0.0;
    for (bi, (group, grads)) in analytic.iter().enumerate() {
        // The other bot's loss term does not depend on this block.
        let part = match group {
            ParamGroup::APolicy => EpisodeLoss::a_value,
            _ => EpisodeLoss::q_value,
        };
        for (i, &g) in grads.iter().enumerate() {
            let orig = work.blocks()[bi].1.values[i];
            let mut at = |offset: f64| -> Result<f64> {
                work.blocks_mut()[bi].1.values[i] = orig + offset;
                part(spec, &work)
            };
            let numeric =
                (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
            work.blocks_mut()[bi].1.values[i] = orig;
            worst = worst.max((g - numeric).abs() / numeric.abs().max(1e-8));
        }
    }
    Ok(worst)
}
