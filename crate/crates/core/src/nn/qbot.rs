use rand::Rng;

use super::layers::{add_into, softmax, Affine, Embedding, RecurrentCell};
use super::param::{ParamBlock, ParamGroup};
use super::NetDims;
use crate::dialog::{QState, Round};
use crate::error::{EdlError, Result};
use crate::world::{TaskSpec, NUM_TASKS, TARGET_DIM};

/// Questioner: a fact encoder per round feeding a history encoder whose
/// first step sees the task. Each history state drives the next-question
/// head and the target regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct QBotNet {
    pub dims: NetDims,
    pub q_embed: Embedding,
    pub a_embed: Embedding,
    pub task_embed: Embedding,
    pub fact_cell: RecurrentCell,
    pub history_cell: RecurrentCell,
    pub question_head: Affine,
    pub regressor: Affine,
}

#[derive(Debug, Clone, PartialEq)]
struct QStep {
    round: Option<(usize, usize)>,
    fact_z: Vec<f64>,
    fact: Vec<f64>,
    hist_z: Vec<f64>,
    state: Vec<f64>,
    probs: Vec<f64>,
    prediction: Vec<f64>,
}

/// Forward intermediates for one dialog prefix; step `t` holds the state
/// after `t` rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QTape {
    task: usize,
    steps: Vec<QStep>,
}

impl QTape {
    pub fn rounds(&self) -> usize {
        self.steps.len() - 1
    }

    /// Next-question distribution at the latest state.
    pub fn question_distribution(&self) -> &[f64] {
        &self.last().probs
    }

    pub fn hidden(&self) -> &[f64] {
        &self.last().state
    }

    pub fn prediction(&self) -> &[f64] {
        &self.last().prediction
    }

    pub fn predictions(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.prediction.as_slice())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.state.as_slice())
    }

    fn last(&self) -> &QStep {
        self.steps.last().expect("tape has the prompt step")
    }
}

/// Per-episode loss on the questioner:
/// `sum_t question_coef[t] * -ln p_t(q_{t+1}) + sum_t regression_weight[t] * |y_t - target|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QLoss {
    pub question_coef: Vec<f64>,
    pub regression_weight: Vec<f64>,
    pub target: Vec<f64>,
}

impl QLoss {
    fn check(&self, tape: &QTape) -> Result<()> {
        let n = tape.rounds();
        if self.question_coef.len() != n || self.regression_weight.len() != n + 1 {
            return Err(EdlError::Contract(format!(
                "loss covers {} questions and {} predictions, tape has {} rounds",
                self.question_coef.len(),
                self.regression_weight.len(),
                n
            )));
        }
        if self.target.len() != TARGET_DIM {
            return Err(EdlError::DimensionMismatch {
                left: self.target.len(),
                right: TARGET_DIM,
            });
        }
        Ok(())
    }
}

impl QBotNet {
    pub fn new<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let (e, h, s) = (dims.embed_dim, dims.hidden_dim, dims.init_scale);
        QBotNet {
            dims,
            q_embed: Embedding::new("q.q_embed", dims.q_vocab, e, s, rng),
            a_embed: Embedding::new("q.a_embed", dims.a_vocab, e, s, rng),
            task_embed: Embedding::new("q.task_embed", NUM_TASKS, e, s, rng),
            fact_cell: RecurrentCell::new("q.fact_cell", 2 * e, h, s, rng),
            history_cell: RecurrentCell::new("q.history_cell", e + h, h, s, rng),
            question_head: Affine::new("q.question_head", h, dims.q_vocab, s, rng),
            regressor: Affine::new("f.regressor", h, TARGET_DIM, s, rng),
        }
    }

    pub fn blocks(&self) -> Vec<(ParamGroup, &ParamBlock)> {
        let mut out: Vec<(ParamGroup, &ParamBlock)> = vec![
            (ParamGroup::QPolicy, &self.q_embed.table),
            (ParamGroup::QPolicy, &self.a_embed.table),
            (ParamGroup::QPolicy, &self.task_embed.table),
        ];
        for b in self
            .fact_cell
            .affine
            .blocks()
            .into_iter()
            .chain(self.history_cell.affine.blocks())
            .chain(self.question_head.blocks())
        {
            out.push((ParamGroup::QPolicy, b));
        }
        for b in self.regressor.blocks() {
            out.push((ParamGroup::Regressor, b));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(ParamGroup, &mut ParamBlock)> {
        let mut out: Vec<(ParamGroup, &mut ParamBlock)> = vec![
            (ParamGroup::QPolicy, &mut self.q_embed.table),
            (ParamGroup::QPolicy, &mut self.a_embed.table),
            (ParamGroup::QPolicy, &mut self.task_embed.table),
        ];
        for b in self
            .fact_cell
            .affine
            .blocks_mut()
            .into_iter()
            .chain(self.history_cell.affine.blocks_mut())
            .chain(self.question_head.blocks_mut())
        {
            out.push((ParamGroup::QPolicy, b));
        }
        for b in self.regressor.blocks_mut() {
            out.push((ParamGroup::Regressor, b));
        }
        out
    }

    fn finish_step(&self, round: Option<(usize, usize)>, fact_z: Vec<f64>, fact: Vec<f64>, hist_z: Vec<f64>, state: Vec<f64>) -> QStep {
        let probs = softmax(&self.question_head.forward(&state));
        let prediction = self.regressor.forward(&state);
        QStep {
            round,
            fact_z,
            fact,
            hist_z,
            state,
            probs,
            prediction,
        }
    }

    /// Prompt-only step: the task embedding is the first history input.
    pub fn start(&self, task: TaskSpec) -> QTape {
        let h = self.dims.hidden_dim;
        let mut x = self.task_embed.row(task.id()).to_vec();
        x.resize(self.dims.embed_dim + h, 0.0);
        let (hist_z, state) = self.history_cell.forward(&vec![0.0; h], &x);
        let step = self.finish_step(None, Vec::new(), Vec::new(), hist_z, state);
        QTape {
            task: task.id(),
            steps: vec![step],
        }
    }

    /// Folds one completed round into the tape.
    pub fn extend(&self, tape: &mut QTape, round: &Round) -> Result<()> {
        let (q, a) = (round.q(), round.a());
        if q >= self.dims.q_vocab || a >= self.dims.a_vocab {
            return Err(EdlError::Contract(format!(
                "round ({q}, {a}) outside vocabularies ({}, {})",
                self.dims.q_vocab, self.dims.a_vocab
            )));
        }
        let h = self.dims.hidden_dim;
        let mut fx = self.q_embed.row(q).to_vec();
        fx.extend_from_slice(self.a_embed.row(a));
        let (fact_z, fact) = self.fact_cell.forward(&vec![0.0; h], &fx);
        let mut x = vec![0.0; self.dims.embed_dim];
        x.extend_from_slice(&fact);
        let (hist_z, state) = self.history_cell.forward(tape.hidden(), &x);
        let step = self.finish_step(Some((q, a)), fact_z, fact, hist_z, state);
        tape.steps.push(step);
        Ok(())
    }

    pub fn forward_rounds(&self, task: TaskSpec, rounds: &[Round]) -> Result<QTape> {
        let mut tape = self.start(task);
        for r in rounds {
            self.extend(&mut tape, r)?;
        }
        Ok(tape)
    }

    /// Encodes the state; the tape exposes the next-question distribution,
    /// the history encoding and the current prediction.
    pub fn forward(&self, state: &QState) -> Result<QTape> {
        if state.history().len() >= state.max_rounds() {
            return Err(EdlError::Contract("dialog already complete".into()));
        }
        self.forward_rounds(state.prompt(), state.history())
    }

    pub fn loss(&self, tape: &QTape, spec: &QLoss) -> Result<f64> {
        spec.check(tape)?;
        let mut total = 0.0;
        for (t, step) in tape.steps.iter().enumerate() {
            if t < tape.rounds() && spec.question_coef[t] != 0.0 {
                let (q, _) = tape.steps[t + 1].round.expect("round step");
                total -= spec.question_coef[t] * step.probs[q].ln();
            }
            if spec.regression_weight[t] != 0.0 {
                total += spec.regression_weight[t] * crate::dialog::distance(&step.prediction, &spec.target)?;
            }
        }
        Ok(total)
    }

    /// Accumulates the gradient of `loss(tape, spec)` into every block.
    pub fn backward(&mut self, tape: &QTape, spec: &QLoss) -> Result<()> {
        spec.check(tape)?;
        let h = self.dims.hidden_dim;
        let e = self.dims.embed_dim;
        let mut d_next = vec![0.0; h];
        for t in (0..tape.steps.len()).rev() {
            let step = &tape.steps[t];
            let mut d_state = std::mem::take(&mut d_next);
            if t < tape.rounds() && spec.question_coef[t] != 0.0 {
                let (q, _) = tape.steps[t + 1].round.expect("round step");
                let c = spec.question_coef[t];
                let d_logits: Vec<f64> = step
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| c * (p - if i == q { 1.0 } else { 0.0 }))
                    .collect();
                add_into(&mut d_state, &self.question_head.backward(&step.state, &d_logits));
            }
            let w = spec.regression_weight[t];
            if w != 0.0 {
                let dy: Vec<f64> = step
                    .prediction
                    .iter()
                    .zip(&spec.target)
                    .map(|(y, g)| 2.0 * w * (y - g))
                    .collect();
                add_into(&mut d_state, &self.regressor.backward(&step.state, &dy));
            }
            let dz = self.history_cell.backward(&step.hist_z, &step.state, &d_state);
            d_next = dz[..h].to_vec();
            let dx = &dz[h..];
            match step.round {
                None => self.task_embed.backward(tape.task, &dx[..e]),
                Some((q, a)) => {
                    let dfz = self.fact_cell.backward(&step.fact_z, &step.fact, &dx[e..]);
                    self.q_embed.backward(q, &dfz[h..h + e]);
                    self.a_embed.backward(a, &dfz[h + e..]);
                }
            }
        }
        Ok(())
    }
}
