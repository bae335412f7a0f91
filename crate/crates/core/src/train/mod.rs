//! Supervised pretraining on scripted dialogs followed by REINFORCE
//! fine-tuning with a teacher-forcing curriculum.

mod adam;
mod corpus;
mod trainer;

pub use adam::{clamp_gradient, AdamConfig, AdamState, Moments};
pub use corpus::{generate_oracle_corpus, CorpusDialog, OracleCorpus};
pub use trainer::{EpochMetrics, NeuralTrainer, Phase};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::{rewards_from_predictions, EpisodeRecord, FinalGuess, Round, Side};
use crate::error::{EdlError, Result};
use crate::eval::DialogAgents;
use crate::nn::{greedy_symbol, sample_symbol, AgentNets, ALoss, EpisodeLoss, ParamGroup, QLoss};
use crate::protocol::ScriptedProtocol;
use crate::world::{nearest_image, target_vector, Instance, TargetVector};

/// Number of leading teacher-forced rounds per episode, annealed by one
/// every `anneal_every` RL epochs until it reaches zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub k_start: usize,
    pub anneal_every: usize,
    pub current_k: usize,
}

impl CurriculumSchedule {
    pub fn default_k_start(rounds: usize) -> usize {
        if rounds == 10 {
            9
        } else {
            rounds.saturating_sub(1)
        }
    }

    pub fn new(k_start: usize, anneal_every: usize, rounds: usize) -> Result<Self> {
        if k_start > rounds {
            return Err(EdlError::config("k_start", format!("{k_start} exceeds rounds {rounds}")));
        }
        if anneal_every == 0 {
            return Err(EdlError::config("anneal_every", "must be at least 1"));
        }
        Ok(CurriculumSchedule {
            k_start,
            anneal_every,
            current_k: k_start,
        })
    }

    /// K in effect during RL epoch `rl_epoch` (0-based).
    pub fn k_for(&self, rl_epoch: usize) -> usize {
        self.k_start.saturating_sub(rl_epoch / self.anneal_every)
    }

    pub fn advance_to(&mut self, rl_epoch: usize) {
        self.current_k = self.k_for(rl_epoch).min(self.current_k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub freeze_q: bool,
    pub freeze_a: bool,
    pub freeze_f: bool,
    pub multi_task: bool,
    pub sl_weight: f64,
    pub rl_weight: f64,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            freeze_q: false,
            freeze_a: false,
            freeze_f: false,
            multi_task: false,
            sl_weight: 1.0,
            rl_weight: 10.0,
        }
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if self.freeze_q && self.freeze_a && self.freeze_f {
            return Err(EdlError::config("freeze", "at most two of q, a, f may be frozen"));
        }
        for (key, w) in [("sl_weight", self.sl_weight), ("rl_weight", self.rl_weight)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(EdlError::config(key, "must be a finite nonnegative number"));
            }
        }
        Ok(())
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::QPolicy => self.freeze_q,
            ParamGroup::APolicy => self.freeze_a,
            ParamGroup::Regressor => self.freeze_f,
        }
    }

    fn scales(&self) -> (f64, f64) {
        if self.multi_task {
            (self.sl_weight, self.rl_weight)
        } else {
            (1.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Sample,
    Greedy,
}

/// A neural-mode episode with the log-probabilities of every token.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralEpisode {
    pub record: EpisodeRecord,
    pub supervised_rounds: usize,
    pub q_log_probs: Vec<f64>,
    pub a_log_probs: Vec<f64>,
}

impl NeuralEpisode {
    pub fn sampled_rounds(&self) -> usize {
        self.record.rounds.len() - self.supervised_rounds
    }
}

/// Plays `rounds` rounds. The first `k` follow the scripted protocol; the
/// rest come from the policies. Predictions are taken after every round.
pub fn rollout_neural<R: Rng + ?Sized>(
    nets: &AgentNets,
    instance: &Instance,
    rounds: usize,
    k: usize,
    oracle: &ScriptedProtocol,
    sampling: Sampling,
    rng: &mut R,
) -> Result<NeuralEpisode> {
    if k > rounds {
        return Err(EdlError::Contract(format!("curriculum K {k} exceeds {rounds} rounds")));
    }
    let mut q_tape = nets.q.start(instance.task);
    let mut a_tape = nets.a.start(instance.image);
    let mut dialog = Vec::with_capacity(rounds);
    let mut q_log_probs = Vec::with_capacity(rounds);
    let mut a_log_probs = Vec::with_capacity(rounds);
    let pick = |dist: &[f64], side: Side, rng: &mut R| -> Result<usize> {
        Ok(match sampling {
            Sampling::Sample => sample_symbol(dist, side, rng)?.token,
            Sampling::Greedy => greedy_symbol(dist, side)?.token,
        })
    };
    for t in 0..rounds {
        let q_dist = q_tape.question_distribution();
        let q = if t < k {
            oracle.question(instance.task, t)
        } else {
            pick(q_dist, Side::Q, rng)?
        };
        q_log_probs.push(q_dist[q].ln());
        nets.a.ask(&mut a_tape, q)?;
        let a_dist = a_tape.answer_distribution().expect("question asked");
        let a = if t < k {
            oracle.answer(instance.image, q)
        } else {
            pick(a_dist, Side::A, rng)?
        };
        a_log_probs.push(a_dist[a].ln());
        nets.a.answer(&mut a_tape, a)?;
        let round = Round::single(q, a);
        nets.q.extend(&mut q_tape, &round)?;
        dialog.push(round);
    }
    let predictions: Vec<TargetVector> = q_tape.predictions().map(|p| TargetVector(p.to_vec())).collect();
    let y = target_vector(instance.image);
    let rewards = rewards_from_predictions(&y.0, &predictions)?;
    let final_guess = FinalGuess::Image(nearest_image(&predictions[rounds].0).id());
    Ok(NeuralEpisode {
        record: EpisodeRecord {
            instance: *instance,
            rounds: dialog,
            predictions,
            rewards,
            final_guess,
        },
        supervised_rounds: k,
        q_log_probs,
        a_log_probs,
    })
}

/// Teacher-forced loss on a scripted dialog: token negative log-likelihood
/// for both bots plus squared error of every prediction.
pub fn supervised_loss(dialog: &CorpusDialog, weight: f64) -> EpisodeLoss {
    let n = dialog.rounds.len();
    EpisodeLoss {
        instance: dialog.instance,
        rounds: dialog.rounds.clone(),
        q: QLoss {
            question_coef: vec![weight; n],
            regression_weight: vec![weight; n + 1],
            target: dialog.target.0.clone(),
        },
        a: ALoss {
            answer_coef: vec![weight; n],
        },
    }
}

/// Curriculum rounds get the supervised weight; sampled rounds get their
/// own reward as the coefficient on `-ln p`, which makes the loss the
/// REINFORCE surrogate `-sum_t r_t (ln pi_Q + ln pi_A)`. Every prediction
/// gets a unit regression weight.
pub fn episode_loss(ep: &NeuralEpisode, flags: &AblationFlags) -> EpisodeLoss {
    let (sl, rl) = flags.scales();
    let n = ep.record.rounds.len();
    let coef: Vec<f64> = (0..n)
        .map(|t| {
            if t < ep.supervised_rounds {
                sl
            } else {
                rl * ep.record.rewards[t]
            }
        })
        .collect();
    EpisodeLoss {
        instance: ep.record.instance,
        rounds: ep.record.rounds.clone(),
        q: QLoss {
            question_coef: coef.clone(),
            regression_weight: vec![1.0; n + 1],
            target: target_vector(ep.record.instance.image).0,
        },
        a: ALoss { answer_coef: coef },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Mean over episodes of `-sum_t r_t (ln pi_Q + ln pi_A)` on sampled rounds.
    pub rl_surrogate: f64,
    /// Mean teacher-forced negative log-likelihood, including the
    /// multi-task term when enabled.
    pub sl_loss: f64,
    pub regression_loss: f64,
    pub mean_return: f64,
    pub sampled_rounds: usize,
    pub warning: Option<String>,
}

fn apply_update(nets: &mut AgentNets, adam: &mut AdamState, flags: &AblationFlags) -> Result<()> {
    adam.begin_step();
    for (group, block) in nets.blocks_mut() {
        if flags.is_frozen(group) {
            block.zero_grad();
        } else {
            adam.update(block)?;
        }
    }
    Ok(())
}

/// One Adam step on the batch-mean teacher-forced loss. Returns that loss.
pub fn supervised_step(
    nets: &mut AgentNets,
    batch: &[CorpusDialog],
    adam: &mut AdamState,
    flags: &AblationFlags,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(EdlError::Contract("empty supervised batch".into()));
    }
    nets.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for dialog in batch {
        total += supervised_loss(dialog, scale).backward(nets)?;
    }
    apply_update(nets, adam, flags)?;
    Ok(total)
}

/// One Adam step on the batch-mean policy-gradient surrogate plus the
/// regression loss (and the weighted supervised loss in multi-task mode).
pub fn reinforce_step(
    nets: &mut AgentNets,
    episodes: &[NeuralEpisode],
    oracle_dialogs: &[CorpusDialog],
    adam: &mut AdamState,
    flags: &AblationFlags,
) -> Result<StepDiagnostics> {
    let mut diag = StepDiagnostics {
        sampled_rounds: episodes.iter().map(NeuralEpisode::sampled_rounds).sum(),
        ..Default::default()
    };
    if diag.sampled_rounds == 0 {
        diag.warning = Some("no sampled rounds in batch; update skipped".into());
        log::warn!("no sampled rounds in batch; update skipped");
        return Ok(diag);
    }
    if flags.multi_task && oracle_dialogs.len() != episodes.len() {
        return Err(EdlError::Contract("multi-task step needs one scripted dialog per episode".into()));
    }
    nets.zero_grad();
    let scale = 1.0 / episodes.len() as f64;
    let (sl_scale, _) = flags.scales();
    for (i, ep) in episodes.iter().enumerate() {
        let mut loss = episode_loss(ep, flags);
        loss.q.question_coef.iter_mut().for_each(|c| *c *= scale);
        loss.q.regression_weight.iter_mut().for_each(|c| *c *= scale);
        loss.a.answer_coef.iter_mut().for_each(|c| *c *= scale);
        loss.backward(nets)?;
        let k = ep.supervised_rounds;
        for t in 0..ep.record.rounds.len() {
            let lp = ep.q_log_probs[t] + ep.a_log_probs[t];
            if t < k {
                diag.sl_loss -= scale * lp;
            } else {
                diag.rl_surrogate -= scale * ep.record.rewards[t] * lp;
            }
        }
        let y = target_vector(ep.record.instance.image);
        for p in &ep.record.predictions {
            diag.regression_loss += scale * crate::dialog::distance(&p.0, &y.0)?;
        }
        diag.mean_return += scale * ep.record.episode_return();
        if flags.multi_task {
            diag.sl_loss += supervised_loss(&oracle_dialogs[i], scale * sl_scale).backward(nets)?;
        }
    }
    apply_update(nets, adam, flags)?;
    Ok(diag)
}

/// Greedy neural agents, used for evaluation.
#[derive(Debug, Clone)]
pub struct NeuralAgents {
    pub nets: AgentNets,
    pub rounds: usize,
}

impl DialogAgents for NeuralAgents {
    fn play(&self, instance: &Instance, episode: u64) -> EpisodeRecord {
        let mut rng = crate::rng::stream(0, &[crate::rng::purpose::EVAL, episode]);
        rollout_neural(
            &self.nets,
            instance,
            self.rounds,
            0,
            &ScriptedProtocol::oracle(),
            Sampling::Greedy,
            &mut rng,
        )
        .expect("valid nets")
        .record
    }
}
