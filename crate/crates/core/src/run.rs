//! End-to-end runs: training loops with per-step logging and checkpoints,
//! and evaluation of saved agents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Mode};
use crate::dialog::EpisodeRecord;
use crate::error::{EdlError, Result};
use crate::eval::{
    accuracy_of, image_rank, play_all, protocol_report_of, ranking_metrics, retrieval_curve_of, DialogAgents,
    ProtocolReport, RankingMetrics, RetrievalCurve,
};
use crate::metrics::{IterationMetrics, MetricsLog};
use crate::tabular::{reward_curve_csv, TabularAgents, TabularTrainer};
use crate::train::{NeuralAgents, NeuralTrainer};
use crate::world::{enumerate_images, enumerate_instances, Instance};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub out_dir: PathBuf,
    /// Completed iterations (tabular) or epochs (neural).
    pub steps: usize,
    pub accuracy: f64,
    pub mean_return: f64,
}

/// Trains from scratch, or from `resume` when given, writing every
/// artifact into the configured output directory.
pub fn train(config: &ExperimentConfig, resume: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let out = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&out)?;
    let resume = resume.map(Checkpoint::load).transpose()?;
    if let Some(ck) = &resume {
        if ck.mode() != config.mode {
            return Err(EdlError::config("mode", "checkpoint was written by a run in the other mode"));
        }
    }
    config.write_resolved(&out)?;
    match config.mode {
        Mode::Tabular => train_tabular(config, resume, &out),
        Mode::Neural => train_neural(config, resume, &out),
    }
}

fn train_tabular(config: &ExperimentConfig, resume: Option<Checkpoint>, out: &Path) -> Result<RunSummary> {
    let (mut trainer, log) = match resume {
        Some(ck) => {
            let t = ck.to_tabular_with(config)?;
            let log = MetricsLog::resume::<IterationMetrics>(out, t.iteration)?;
            (t, log)
        }
        None => {
            let t = TabularTrainer::new(config.tabular_shape(), config.init_value, config.schedule(), config.eps_greedy())?;
            (t, MetricsLog::create::<IterationMetrics>(out)?)
        }
    };
    while !trainer.is_done() {
        let updated = trainer.schedule.side_for(trainer.iteration);
        let reward = trainer.run_iteration()?;
        log.append(&IterationMetrics {
            iteration: trainer.iteration - 1,
            updated,
            mean_reward: reward,
            accuracy: (reward + 1.0) / 2.0,
        })?;
        Checkpoint::from_tabular(config, &trainer).save(&out.join(CHECKPOINT_FILE))?;
    }
    fs::write(out.join("reward_curve.csv"), reward_curve_csv(&trainer.reward_curve))?;
    let records = play_all(&trainer.agents, &enumerate_instances());
    write_protocol_report(out, &records, config)?;
    let accuracy = accuracy_of(&records);
    log::info!("tabular run finished after {} iterations: accuracy {accuracy:.4}", trainer.iteration);
    Ok(RunSummary {
        mode: Mode::Tabular,
        out_dir: out.to_path_buf(),
        steps: trainer.iteration,
        accuracy,
        mean_return: 2.0 * accuracy - 1.0,
    })
}

fn train_neural(config: &ExperimentConfig, resume: Option<Checkpoint>, out: &Path) -> Result<RunSummary> {
    use crate::train::EpochMetrics;
    let (mut trainer, log) = match resume {
        Some(ck) => {
            let t = ck.to_neural_with(config)?;
            let log = MetricsLog::resume::<EpochMetrics>(out, t.epoch)?;
            (t, log)
        }
        None => (NeuralTrainer::new(config)?, MetricsLog::create::<EpochMetrics>(out)?),
    };
    while !trainer.is_done() {
        let m = trainer.run_epoch()?;
        log.append(&m)?;
        Checkpoint::from_neural(&trainer).save(&out.join(CHECKPOINT_FILE))?;
    }
    let records = play_all(&trainer.agents(), &enumerate_instances());
    let curve = retrieval_curve_of(&records, &enumerate_images())?;
    fs::write(out.join("retrieval.csv"), curve.to_csv())?;
    fs::write(out.join("plot_retrieval.py"), RetrievalCurve::plot_script("retrieval.csv"))?;
    write_protocol_report(out, &records, config)?;
    let accuracy = accuracy_of(&records);
    let mean_return = records.iter().map(EpisodeRecord::episode_return).sum::<f64>() / records.len() as f64;
    log::info!("neural run finished after {} epochs: accuracy {accuracy:.4}", trainer.epoch);
    Ok(RunSummary {
        mode: Mode::Neural,
        out_dir: out.to_path_buf(),
        steps: trainer.epoch,
        accuracy,
        mean_return,
    })
}

fn write_protocol_report(out: &Path, records: &[EpisodeRecord], config: &ExperimentConfig) -> Result<()> {
    let report = protocol_report_of(records, config.q_vocab, config.a_vocab);
    fs::write(out.join("protocol_report.txt"), report.to_text())?;
    fs::write(out.join("protocol_tables.csv"), report.to_csv())?;
    Ok(())
}

/// Agents restored from a checkpoint of either mode.
#[derive(Debug, Clone)]
pub enum LoadedAgents {
    Tabular(TabularAgents),
    Neural(NeuralAgents),
}

impl LoadedAgents {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(match ck.mode() {
            Mode::Tabular => LoadedAgents::Tabular(ck.to_tabular()?.agents),
            Mode::Neural => LoadedAgents::Neural(NeuralAgents {
                nets: ck.to_nets()?,
                rounds: ck.header.config.rounds(),
            }),
        })
    }
}

impl DialogAgents for LoadedAgents {
    fn play(&self, instance: &Instance, episode: u64) -> EpisodeRecord {
        match self {
            LoadedAgents::Tabular(a) => a.play(instance, episode),
            LoadedAgents::Neural(a) => a.play(instance, episode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_return: f64,
    /// Only for agents that predict image vectors.
    pub retrieval: Option<RetrievalCurve>,
    pub ranking: Option<RankingMetrics>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("task accuracy   {:.4}\nmean return     {:.4}\n", self.accuracy, self.mean_return);
        if let Some(c) = &self.retrieval {
            let p = c.final_point();
            s += &format!(
                "final percentile rank {:.2} ± {:.2}\n",
                p.mean_percentile_rank, p.std_error
            );
        }
        if let Some(r) = &self.ranking {
            s += &format!("MRR {:.4}  mean rank {:.2}", r.mrr, r.mean_rank);
            for (k, v) in &r.recall_at_k {
                s += &format!("  R@{k} {v:.4}");
            }
            s.push('\n');
        }
        s
    }
}

/// Greedy play over every instance with the agents in `ck`.
pub fn evaluate(ck: &Checkpoint) -> Result<(EvalReport, ProtocolReport)> {
    let agents = LoadedAgents::from_checkpoint(ck)?;
    let records = play_all(&agents, &enumerate_instances());
    let (retrieval, ranking) = match agents {
        LoadedAgents::Tabular(_) => (None, None),
        LoadedAgents::Neural(_) => {
            let pool = enumerate_images();
            let curve = retrieval_curve_of(&records, &pool)?;
            let ranks = records
                .iter()
                .map(|r| image_rank(&r.predictions.last().expect("final prediction").0, r.instance.image, &pool))
                .collect::<Result<Vec<_>>>()?;
            (Some(curve), Some(ranking_metrics(&ranks, &[1, 5, 10])?))
        }
    };
    let cfg = &ck.header.config;
    let report = EvalReport {
        accuracy: accuracy_of(&records),
        mean_return: records.iter().map(EpisodeRecord::episode_return).sum::<f64>() / records.len() as f64,
        retrieval,
        ranking,
    };
    Ok((report, protocol_report_of(&records, cfg.q_vocab, cfg.a_vocab)))
}
