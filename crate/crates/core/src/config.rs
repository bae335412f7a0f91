//! Experiment configuration: a flat TOML file of `key = value` lines.
//!
//! Every key is optional. Unknown keys are rejected. Precedence is
//! command-line flag, then file, then built-in default. `rounds` and
//! `k_start` default by mode (2 rounds for tabular, 10 for neural; K starts
//! at 9 when there are 10 rounds, otherwise rounds - 1). `resolved()`
//! materializes them, and every run writes the resolved file next to its
//! outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dialog::Side;
use crate::error::{EdlError, Result};
use crate::nn::NetDims;
use crate::tabular::{AlternatingSchedule, EpsGreedyConfig, TabularShape};
use crate::train::{AblationFlags, AdamConfig, CurriculumSchedule};
use crate::world::{NUM_ATTRIBUTES, VALUES_PER_ATTRIBUTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tabular,
    Neural,
}

impl std::str::FromStr for Mode {
    type Err = EdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(Mode::Tabular),
            "neural" => Ok(Mode::Neural),
            _ => Err(EdlError::config("mode", format!("expected tabular or neural, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,

    // world and vocabularies
    pub attributes: usize,
    pub values_per_attribute: usize,
    pub q_vocab: usize,
    pub a_vocab: usize,
    pub rounds: Option<usize>,

    // tabular
    pub greedy_prob: f64,
    pub init_value: f64,
    pub episodes_per_iteration: usize,
    pub max_iterations: usize,
    pub first_updated: Side,

    // neural
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,
    pub batch_size: usize,
    pub sl_epochs: usize,
    pub rl_epochs: usize,
    pub corpus_fraction: f64,
    pub k_start: Option<usize>,
    pub anneal_every: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub clamp_bound: f64,

    // ablations
    pub freeze_q: bool,
    pub freeze_a: bool,
    pub freeze_f: bool,
    pub multi_task: bool,
    pub sl_weight: f64,
    pub rl_weight: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let flags = AblationFlags::default();
        let dims = NetDims::default();
        ExperimentConfig {
            mode: Mode::Tabular,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            attributes: NUM_ATTRIBUTES,
            values_per_attribute: VALUES_PER_ATTRIBUTE,
            q_vocab: dims.q_vocab,
            a_vocab: dims.a_vocab,
            rounds: None,
            greedy_prob: 0.6,
            init_value: 0.0,
            episodes_per_iteration: 10_000,
            max_iterations: 100,
            first_updated: Side::Q,
            embed_dim: dims.embed_dim,
            hidden_dim: dims.hidden_dim,
            init_scale: dims.init_scale,
            batch_size: 32,
            sl_epochs: 15,
            rl_epochs: 40,
            corpus_fraction: 1.0,
            k_start: None,
            anneal_every: 1,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            clamp_bound: adam.clamp_bound,
            freeze_q: flags.freeze_q,
            freeze_a: flags.freeze_a,
            freeze_f: flags.freeze_f,
            multi_task: flags.multi_task,
            sl_weight: flags.sl_weight,
            rl_weight: flags.rl_weight,
        }
    }
}

fn check(ok: bool, key: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(EdlError::config(key, message))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<file>")
                .to_string();
            EdlError::config(key, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn default_for(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds.unwrap_or(match self.mode {
            Mode::Tabular => TabularShape::default().rounds,
            Mode::Neural => 10,
        })
    }

    pub fn k_start(&self) -> usize {
        self.k_start
            .unwrap_or_else(|| CurriculumSchedule::default_k_start(self.rounds()))
    }

    /// Copy with every mode-dependent default filled in.
    pub fn resolved(&self) -> Self {
        ExperimentConfig {
            rounds: Some(self.rounds()),
            k_start: Some(self.k_start()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.attributes == NUM_ATTRIBUTES, "attributes", format!("only {NUM_ATTRIBUTES} is supported"))?;
        check(
            self.values_per_attribute == VALUES_PER_ATTRIBUTE,
            "values_per_attribute",
            format!("only {VALUES_PER_ATTRIBUTE} is supported"),
        )?;
        check(self.q_vocab >= 1, "q_vocab", "must be at least 1")?;
        check(self.a_vocab >= 1, "a_vocab", "must be at least 1")?;
        let rounds = self.rounds();
        match self.mode {
            Mode::Tabular => {
                self.tabular_shape().validate()?;
                self.eps_greedy().validate()?;
                self.schedule().validate()?;
                check(self.init_value.is_finite(), "init_value", "must be finite")?;
            }
            Mode::Neural => {
                check((1..=10).contains(&rounds), "rounds", "neural mode supports 1 to 10 rounds")?;
                check(self.q_vocab >= NUM_ATTRIBUTES, "q_vocab", "scripted dialogs need one symbol per attribute")?;
                check(self.a_vocab >= VALUES_PER_ATTRIBUTE, "a_vocab", "scripted dialogs need one symbol per value")?;
                check(self.embed_dim >= 1, "embed_dim", "must be at least 1")?;
                check(self.hidden_dim >= 1, "hidden_dim", "must be at least 1")?;
                check(self.init_scale.is_finite() && self.init_scale >= 0.0, "init_scale", "must be finite and nonnegative")?;
                check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
                check(
                    self.corpus_fraction > 0.0 && self.corpus_fraction <= 1.0,
                    "corpus_fraction",
                    "must lie in (0, 1]",
                )?;
                CurriculumSchedule::new(self.k_start(), self.anneal_every, rounds)?;
                check(self.lr > 0.0 && self.lr.is_finite(), "lr", "must be positive")?;
                check((0.0..1.0).contains(&self.beta1), "beta1", "must lie in [0, 1)")?;
                check((0.0..1.0).contains(&self.beta2), "beta2", "must lie in [0, 1)")?;
                check(self.adam_epsilon > 0.0, "adam_epsilon", "must be positive")?;
                check(self.clamp_bound > 0.0, "clamp_bound", "must be positive")?;
                self.flags().validate()?;
            }
        }
        Ok(())
    }

    pub fn tabular_shape(&self) -> TabularShape {
        TabularShape {
            rounds: self.rounds(),
            q_vocab: self.q_vocab,
            a_vocab: self.a_vocab,
        }
    }

    pub fn eps_greedy(&self) -> EpsGreedyConfig {
        EpsGreedyConfig {
            greedy_prob: self.greedy_prob,
            rng_seed: self.seed,
        }
    }

    pub fn schedule(&self) -> AlternatingSchedule {
        AlternatingSchedule {
            episodes_per_iteration: self.episodes_per_iteration,
            max_iterations: self.max_iterations,
            first_updated: self.first_updated,
        }
    }

    pub fn net_dims(&self) -> NetDims {
        NetDims {
            q_vocab: self.q_vocab,
            a_vocab: self.a_vocab,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            init_scale: self.init_scale,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            clamp_bound: self.clamp_bound,
        }
    }

    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            freeze_q: self.freeze_q,
            freeze_a: self.freeze_a,
            freeze_f: self.freeze_f,
            multi_task: self.multi_task,
            sl_weight: self.sl_weight,
            rl_weight: self.rl_weight,
        }
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.resolved.toml");
        std::fs::write(&path, self.resolved().to_toml())?;
        Ok(path)
    }
}
