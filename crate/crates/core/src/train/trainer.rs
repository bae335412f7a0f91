use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_oracle_corpus, reinforce_step, rollout_neural, supervised_step, AblationFlags,
    AdamState, CurriculumSchedule, NeuralAgents, OracleCorpus, Sampling,
};
use crate::config::{ExperimentConfig, Mode};
use crate::error::{EdlError, Result};
use crate::eval::{accuracy_of, play_all, retrieval_curve_of};
use crate::nn::AgentNets;
use crate::rng::{self, purpose};
use crate::world::{enumerate_images, enumerate_instances, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sl,
    Rl,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    /// Teacher-forced rounds per episode (all rounds during pretraining).
    pub k: usize,
    pub mean_return: f64,
    pub accuracy: f64,
    pub percentile_rank: f64,
    pub sl_loss: f64,
    pub rl_loss: f64,
    pub regression_loss: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,phase,k,mean_return,accuracy,percentile_rank,sl_loss,rl_loss,regression_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            match self.phase {
                Phase::Sl => "sl",
                Phase::Rl => "rl",
            },
            self.k,
            self.mean_return,
            self.accuracy,
            self.percentile_rank,
            self.sl_loss,
            self.rl_loss,
            self.regression_loss
        )
    }
}

/// Epoch-level neural training state. Everything random is addressed by
/// `(seed, epoch, index)`, so the state below is enough to resume.
#[derive(Debug, Clone)]
pub struct NeuralTrainer {
    pub config: ExperimentConfig,
    pub nets: AgentNets,
    pub adam: AdamState,
    pub curriculum: CurriculumSchedule,
    /// Number of completed epochs.
    pub epoch: usize,
    corpus: OracleCorpus,
    pretrain: OracleCorpus,
}

impl NeuralTrainer {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let nets = AgentNets::new(config.net_dims(), config.seed);
        let adam = AdamState::new(config.adam());
        Self::from_parts(config, nets, adam, 0)
    }

    pub fn from_parts(config: &ExperimentConfig, nets: AgentNets, adam: AdamState, epoch: usize) -> Result<Self> {
        if config.mode != Mode::Neural {
            return Err(EdlError::config("mode", "neural trainer needs mode = \"neural\""));
        }
        config.validate()?;
        let config = config.resolved();
        let rounds = config.rounds();
        let mut curriculum = CurriculumSchedule::new(config.k_start(), config.anneal_every, rounds)?;
        if epoch > config.sl_epochs {
            curriculum.advance_to(epoch - config.sl_epochs);
        }
        let corpus = generate_oracle_corpus(rounds, config.seed);
        let pretrain = corpus.subset(config.corpus_fraction);
        Ok(NeuralTrainer {
            config,
            nets,
            adam,
            curriculum,
            epoch,
            corpus,
            pretrain,
        })
    }

    pub fn total_epochs(&self) -> usize {
        self.config.sl_epochs + self.config.rl_epochs
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.total_epochs()
    }

    pub fn flags(&self) -> AblationFlags {
        self.config.flags()
    }

    pub fn agents(&self) -> NeuralAgents {
        NeuralAgents {
            nets: self.nets.clone(),
            rounds: self.config.rounds(),
        }
    }

    pub fn pretrain_corpus(&self) -> &OracleCorpus {
        &self.pretrain
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let (phase, k, sl_loss, rl_loss, regression_loss) = if epoch < self.config.sl_epochs {
            let sl = self.sl_epoch(epoch)?;
            (Phase::Sl, self.config.rounds(), sl, 0.0, 0.0)
        } else {
            let rl_epoch = epoch - self.config.sl_epochs;
            self.curriculum.advance_to(rl_epoch);
            let k = self.curriculum.current_k;
            let (sl, rl, reg) = self.rl_epoch(epoch, k)?;
            (Phase::Rl, k, sl, rl, reg)
        };
        let (mean_return, accuracy, percentile_rank) = self.evaluate()?;
        self.epoch += 1;
        let m = EpochMetrics {
            epoch,
            phase,
            k,
            mean_return,
            accuracy,
            percentile_rank,
            sl_loss,
            rl_loss,
            regression_loss,
        };
        log::info!(
            "epoch {epoch} {phase:?} k={k}: accuracy {accuracy:.4}, percentile {percentile_rank:.2}, return {mean_return:.4}"
        );
        Ok(m)
    }

    fn sl_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut dialogs = self.pretrain.dialogs.clone();
        rng::shuffle(&mut dialogs, &mut rng::stream(self.config.seed, &[purpose::SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        let mut batches = 0;
        // Ablation freezes apply to the RL phase only.
        let flags = AblationFlags::default();
        for batch in dialogs.chunks(self.config.batch_size) {
            total += supervised_step(&mut self.nets, batch, &mut self.adam, &flags)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    fn rl_epoch(&mut self, epoch: usize, k: usize) -> Result<(f64, f64, f64)> {
        let mut instances: Vec<Instance> = enumerate_instances();
        rng::shuffle(&mut instances, &mut rng::stream(self.config.seed, &[purpose::SHUFFLE, epoch as u64]));
        let flags = self.flags();
        let rounds = self.config.rounds();
        let (mut sl, mut rl, mut reg, mut batches) = (0.0, 0.0, 0.0, 0);
        for (b, batch) in instances.chunks(self.config.batch_size).enumerate() {
            let nets = &self.nets;
            let protocol = &self.corpus.protocol;
            let seed = self.config.seed;
            let base = b * self.config.batch_size;
            let episodes = batch
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    let mut r = rng::stream(seed, &[purpose::NEURAL_EPISODE, epoch as u64, (base + i) as u64]);
                    rollout_neural(nets, inst, rounds, k, protocol, Sampling::Sample, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;
            let oracle: Vec<_> = if flags.multi_task {
                batch.iter().map(|inst| self.corpus.dialog_for(inst)).collect()
            } else {
                Vec::new()
            };
            let d = reinforce_step(&mut self.nets, &episodes, &oracle, &mut self.adam, &flags)?;
            sl += d.sl_loss;
            rl += d.rl_surrogate;
            reg += d.regression_loss;
            batches += 1;
        }
        let n = batches as f64;
        Ok((sl / n, rl / n, reg / n))
    }

    /// Greedy play over all instances: mean return, task accuracy and
    /// final-round mean percentile rank.
    pub fn evaluate(&self) -> Result<(f64, f64, f64)> {
        let records = play_all(&self.agents(), &enumerate_instances());
        let mean_return = records.iter().map(|r| r.episode_return()).sum::<f64>() / records.len() as f64;
        let curve = retrieval_curve_of(&records, &enumerate_images())?;
        Ok((mean_return, accuracy_of(&records), curve.final_point().mean_percentile_rank))
    }
}
