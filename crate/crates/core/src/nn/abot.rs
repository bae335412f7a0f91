use rand::Rng;

use super::layers::{add_into, softmax, Affine, Embedding, RecurrentCell};
use super::param::{ParamBlock, ParamGroup};
use super::NetDims;
use crate::dialog::{AState, Round};
use crate::error::{EdlError, Result};
use crate::world::{target_vector, SynthImage, TARGET_DIM};

/// Answerer: encodes the pending question, then updates an image-conditioned
/// history state from `[image; question; previous fact]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ABotNet {
    pub dims: NetDims,
    pub q_embed: Embedding,
    pub a_embed: Embedding,
    pub image_embed: Affine,
    pub question_cell: RecurrentCell,
    pub fact_cell: RecurrentCell,
    pub history_cell: RecurrentCell,
    pub answer_head: Affine,
}

#[derive(Debug, Clone, PartialEq)]
struct AStep {
    question: usize,
    q_z: Vec<f64>,
    q_enc: Vec<f64>,
    hist_z: Vec<f64>,
    state: Vec<f64>,
    probs: Vec<f64>,
    answer: Option<(usize, Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ATape {
    image_x: Vec<f64>,
    image_e: Vec<f64>,
    steps: Vec<AStep>,
}

impl ATape {
    /// Answer distribution for the latest question.
    pub fn answer_distribution(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.probs.as_slice())
    }

    pub fn questions(&self) -> usize {
        self.steps.len()
    }

    pub fn answered(&self) -> usize {
        self.steps.iter().filter(|s| s.answer.is_some()).count()
    }
}

/// `sum_t answer_coef[t] * -ln p_t(a_t)` over answered rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ALoss {
    pub answer_coef: Vec<f64>,
}

impl ABotNet {
    pub fn new<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let (e, h, s) = (dims.embed_dim, dims.hidden_dim, dims.init_scale);
        ABotNet {
            dims,
            q_embed: Embedding::new("a.q_embed", dims.q_vocab, e, s, rng),
            a_embed: Embedding::new("a.a_embed", dims.a_vocab, e, s, rng),
            image_embed: Affine::new("a.image_embed", TARGET_DIM, e, s, rng),
            question_cell: RecurrentCell::new("a.question_cell", e, h, s, rng),
            fact_cell: RecurrentCell::new("a.fact_cell", 2 * e, h, s, rng),
            history_cell: RecurrentCell::new("a.history_cell", e + 2 * h, h, s, rng),
            answer_head: Affine::new("a.answer_head", h, dims.a_vocab, s, rng),
        }
    }

    pub fn blocks(&self) -> Vec<(ParamGroup, &ParamBlock)> {
        let mut out = vec![&self.q_embed.table, &self.a_embed.table];
        out.extend(self.image_embed.blocks());
        out.extend(self.question_cell.affine.blocks());
        out.extend(self.fact_cell.affine.blocks());
        out.extend(self.history_cell.affine.blocks());
        out.extend(self.answer_head.blocks());
        out.into_iter().map(|b| (ParamGroup::APolicy, b)).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(ParamGroup, &mut ParamBlock)> {
        let mut out = vec![&mut self.q_embed.table, &mut self.a_embed.table];
        out.extend(self.image_embed.blocks_mut());
        out.extend(self.question_cell.affine.blocks_mut());
        out.extend(self.fact_cell.affine.blocks_mut());
        out.extend(self.history_cell.affine.blocks_mut());
        out.extend(self.answer_head.blocks_mut());
        out.into_iter().map(|b| (ParamGroup::APolicy, b)).collect()
    }

    pub fn start(&self, image: SynthImage) -> ATape {
        let image_x = target_vector(image).0;
        let image_e = self.image_embed.forward(&image_x);
        ATape {
            image_x,
            image_e,
            steps: Vec::new(),
        }
    }

    pub fn ask(&self, tape: &mut ATape, question: usize) -> Result<()> {
        if question >= self.dims.q_vocab {
            return Err(EdlError::Contract(format!(
                "question {question} outside vocabulary of {}",
                self.dims.q_vocab
            )));
        }
        let h = self.dims.hidden_dim;
        let (prev_state, prev_fact) = match tape.steps.last() {
            None => (vec![0.0; h], vec![0.0; h]),
            Some(s) => match &s.answer {
                Some((_, _, fact)) => (s.state.clone(), fact.clone()),
                None => return Err(EdlError::Contract("previous question unanswered".into())),
            },
        };
        let (q_z, q_enc) = self.question_cell.forward(&vec![0.0; h], self.q_embed.row(question));
        let mut x = tape.image_e.clone();
        x.extend_from_slice(&q_enc);
        x.extend_from_slice(&prev_fact);
        let (hist_z, state) = self.history_cell.forward(&prev_state, &x);
        let probs = softmax(&self.answer_head.forward(&state));
        tape.steps.push(AStep {
            question,
            q_z,
            q_enc,
            hist_z,
            state,
            probs,
            answer: None,
        });
        Ok(())
    }

    pub fn answer(&self, tape: &mut ATape, answer: usize) -> Result<()> {
        if answer >= self.dims.a_vocab {
            return Err(EdlError::Contract(format!(
                "answer {answer} outside vocabulary of {}",
                self.dims.a_vocab
            )));
        }
        let h = self.dims.hidden_dim;
        let step = match tape.steps.last_mut() {
            Some(s) if s.answer.is_none() => s,
            _ => return Err(EdlError::Contract("no pending question".into())),
        };
        let mut fx = self.q_embed.row(step.question).to_vec();
        fx.extend_from_slice(self.a_embed.row(answer));
        let (fz, fact) = self.fact_cell.forward(&vec![0.0; h], &fx);
        step.answer = Some((answer, fz, fact));
        Ok(())
    }

    pub fn forward_rounds(&self, image: SynthImage, rounds: &[Round]) -> Result<ATape> {
        let mut tape = self.start(image);
        for r in rounds {
            self.ask(&mut tape, r.q())?;
            self.answer(&mut tape, r.a())?;
        }
        Ok(tape)
    }

    /// Answer distribution for the state's pending question.
    pub fn forward(&self, state: &AState) -> Result<(Vec<f64>, ATape)> {
        let pending = state
            .pending_question()
            .ok_or_else(|| EdlError::Contract("answerer state has no pending question".into()))?;
        let mut tape = self.forward_rounds(state.image(), state.history())?;
        self.ask(&mut tape, pending[0])?;
        let dist = tape.answer_distribution().expect("question asked").to_vec();
        Ok((dist, tape))
    }

    fn check(&self, tape: &ATape, spec: &ALoss) -> Result<()> {
        if spec.answer_coef.len() != tape.answered() {
            return Err(EdlError::Contract(format!(
                "loss covers {} answers, tape has {}",
                spec.answer_coef.len(),
                tape.answered()
            )));
        }
        Ok(())
    }

    pub fn loss(&self, tape: &ATape, spec: &ALoss) -> Result<f64> {
        self.check(tape, spec)?;
        Ok(tape
            .steps
            .iter()
            .filter_map(|s| s.answer.as_ref().map(|(a, _, _)| s.probs[*a]))
            .zip(&spec.answer_coef)
            .map(|(p, c)| if *c == 0.0 { 0.0 } else { -c * p.ln() })
            .sum())
    }

    pub fn backward(&mut self, tape: &ATape, spec: &ALoss) -> Result<()> {
        self.check(tape, spec)?;
        let h = self.dims.hidden_dim;
        let e = self.dims.embed_dim;
        let mut d_state_next = vec![0.0; h];
        let mut d_fact_next = vec![0.0; h];
        let mut d_image = vec![0.0; e];
        for (t, step) in tape.steps.iter().enumerate().rev() {
            if let Some((a, fz, fact)) = &step.answer {
                if d_fact_next.iter().any(|&d| d != 0.0) {
                    let dfz = self.fact_cell.backward(fz, fact, &d_fact_next);
                    self.q_embed.backward(step.question, &dfz[h..h + e]);
                    self.a_embed.backward(*a, &dfz[h + e..]);
                }
                let c = spec.answer_coef[t];
                if c != 0.0 {
                    let d_logits: Vec<f64> = step
                        .probs
                        .iter()
                        .enumerate()
                        .map(|(i, p)| c * (p - if i == *a { 1.0 } else { 0.0 }))
                        .collect();
                    add_into(&mut d_state_next, &self.answer_head.backward(&step.state, &d_logits));
                }
            }
            let dz = self.history_cell.backward(&step.hist_z, &step.state, &d_state_next);
            d_state_next = dz[..h].to_vec();
            add_into(&mut d_image, &dz[h..h + e]);
            let dqz = self.question_cell.backward(&step.q_z, &step.q_enc, &dz[h + e..h + e + h]);
            self.q_embed.backward(step.question, &dqz[h..]);
            d_fact_next = dz[h + e + h..].to_vec();
        }
        self.image_embed.backward(&tape.image_x, &d_image);
        Ok(())
    }
}
