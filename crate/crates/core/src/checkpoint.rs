//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `EDLCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u32` header length, the JSON header, then
//! every block's values as little-endian `f64` in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{EdlError, Result};
use crate::nn::AgentNets;
use crate::tabular::{QTable, TabularAgents, TabularTrainer};
use crate::train::{AdamState, Moments, NeuralTrainer};

pub const MAGIC: &[u8; 8] = b"EDLCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Random-stream position: every stream is addressed by the seed and the
/// progress counter, so nothing else is needed to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub counters: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ExperimentConfig,
    pub rng: RngState,
    /// Completed iterations (tabular) or epochs (neural).
    pub progress: usize,
    pub adam_step: u64,
    pub reward_curve: Vec<f64>,
    pub blocks: Vec<BlockMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<Vec<f64>>,
}

impl Checkpoint {
    fn new(config: &ExperimentConfig, progress: usize, adam_step: u64, reward_curve: Vec<f64>) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                config: config.resolved(),
                rng: RngState {
                    seed: config.seed,
                    counters: vec![progress as u64],
                },
                progress,
                adam_step,
                reward_curve,
                blocks: Vec::new(),
            },
            values: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.header.blocks.push(BlockMeta {
            name: name.into(),
            shape,
        });
        self.values.push(values);
    }

    pub fn block(&self, name: &str) -> Result<(&BlockMeta, &[f64])> {
        self.header
            .blocks
            .iter()
            .position(|b| b.name == name)
            .map(|i| (&self.header.blocks[i], self.values[i].as_slice()))
            .ok_or_else(|| EdlError::MissingBlock(name.to_string()))
    }

    pub fn mode(&self) -> Mode {
        self.header.config.mode
    }

    pub fn from_tabular(config: &ExperimentConfig, trainer: &TabularTrainer) -> Self {
        let mut ck = Self::new(config, trainer.iteration, 0, trainer.reward_curve.clone());
        let agents = &trainer.agents;
        let tables = agents
            .ask
            .iter()
            .enumerate()
            .map(|(r, t)| (format!("ask.{r}"), t))
            .chain(std::iter::once(("predict".to_string(), &agents.predict)))
            .chain(agents.answer.iter().enumerate().map(|(r, t)| (format!("answer.{r}"), t)));
        for (name, t) in tables {
            let shape = vec![t.n_states(), t.n_actions()];
            ck.push(format!("{name}.q"), shape.clone(), t.values().to_vec());
            ck.push(format!("{name}.n"), shape, t.counts().iter().map(|&c| c as f64).collect());
        }
        ck
    }

    pub fn to_tabular(&self) -> Result<TabularTrainer> {
        self.to_tabular_with(&self.header.config)
    }

    /// Restores the tables under `cfg`, which may extend the saved run.
    pub fn to_tabular_with(&self, cfg: &ExperimentConfig) -> Result<TabularTrainer> {
        let mut trainer = TabularTrainer::new(cfg.tabular_shape(), cfg.init_value, cfg.schedule(), cfg.eps_greedy())?;
        let load = |name: &str, like: &QTable| -> Result<QTable> {
            let (meta, q) = self.block(&format!("{name}.q"))?;
            let (_, n) = self.block(&format!("{name}.n"))?;
            if meta.shape != [like.n_states(), like.n_actions()] {
                return Err(EdlError::CorruptCheckpoint(format!("table {name} has shape {:?}", meta.shape)));
            }
            let counts = n
                .iter()
                .map(|&c| {
                    if c >= 0.0 && c.fract() == 0.0 {
                        Ok(c as u64)
                    } else {
                        Err(EdlError::CorruptCheckpoint(format!("table {name} has visit count {c}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            QTable::from_parts(like.n_states(), like.n_actions(), like.init_value(), q.to_vec(), counts)
        };
        let agents: &mut TabularAgents = &mut trainer.agents;
        for r in 0..agents.ask.len() {
            agents.ask[r] = load(&format!("ask.{r}"), &agents.ask[r])?;
            agents.answer[r] = load(&format!("answer.{r}"), &agents.answer[r])?;
        }
        agents.predict = load("predict", &agents.predict)?;
        trainer.iteration = self.header.progress;
        trainer.reward_curve = self.header.reward_curve.clone();
        Ok(trainer)
    }

    pub fn from_neural(trainer: &NeuralTrainer) -> Self {
        let mut ck = Self::new(&trainer.config, trainer.epoch, trainer.adam.step_count, Vec::new());
        for (_, b) in trainer.nets.blocks() {
            ck.push(b.name.clone(), b.shape.clone(), b.values.clone());
        }
        for m in &trainer.adam.moments {
            ck.push(format!("adam.m.{}", m.name), vec![m.m.len()], m.m.clone());
            ck.push(format!("adam.v.{}", m.name), vec![m.v.len()], m.v.clone());
        }
        ck
    }

    pub fn to_nets(&self) -> Result<AgentNets> {
        self.to_nets_with(&self.header.config)
    }

    fn to_nets_with(&self, cfg: &ExperimentConfig) -> Result<AgentNets> {
        let mut nets = AgentNets::new(cfg.net_dims(), cfg.seed);
        for (_, b) in nets.blocks_mut() {
            let (meta, values) = self.block(&b.name)?;
            if meta.shape != b.shape {
                return Err(EdlError::CorruptCheckpoint(format!(
                    "block {} has shape {:?}, expected {:?}",
                    b.name, meta.shape, b.shape
                )));
            }
            b.load(values)?;
        }
        Ok(nets)
    }

    pub fn to_neural(&self) -> Result<NeuralTrainer> {
        self.to_neural_with(&self.header.config)
    }

    /// Restores the trainer under `cfg`, which may extend the saved run.
    pub fn to_neural_with(&self, cfg: &ExperimentConfig) -> Result<NeuralTrainer> {
        let nets = self.to_nets_with(cfg)?;
        let mut adam = AdamState::new(cfg.adam());
        adam.step_count = self.header.adam_step;
        for meta in &self.header.blocks {
            if let Some(name) = meta.name.strip_prefix("adam.m.") {
                let (_, m) = self.block(&meta.name)?;
                let (_, v) = self.block(&format!("adam.v.{name}"))?;
                adam.moments.push(Moments {
                    name: name.to_string(),
                    m: m.to_vec(),
                    v: v.to_vec(),
                });
            }
        }
        NeuralTrainer::from_parts(cfg, nets, adam, self.header.progress)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let payload: usize = self.values.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.values.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| EdlError::CorruptCheckpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(EdlError::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let header_bytes = bytes.get(16..16 + header_len).ok_or_else(|| corrupt("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(header_bytes).map_err(|e| corrupt(&format!("bad header: {e}")))?;
        let mut payload = &bytes[16 + header_len..];
        let mut values = Vec::with_capacity(header.blocks.len());
        for meta in &header.blocks {
            let n = meta.shape.iter().product::<usize>();
            if payload.len() < 8 * n {
                return Err(corrupt(&format!("payload truncated in block {}", meta.name)));
            }
            let (head, rest) = payload.split_at(8 * n);
            values.push(
                head.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            );
            payload = rest;
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(Checkpoint { header, values })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_neural() -> ExperimentConfig {
        ExperimentConfig {
            rounds: Some(2),
            sl_epochs: 1,
            rl_epochs: 2,
            batch_size: 128,
            corpus_fraction: 0.25,
            ..ExperimentConfig::default_for(Mode::Neural)
        }
    }

    #[test]
    fn neural_round_trip_is_byte_identical() {
        let mut t = NeuralTrainer::new(&small_neural()).unwrap();
        t.run_epoch().unwrap();
        let ck = Checkpoint::from_neural(&t);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_neural().unwrap();
        assert_eq!(restored.nets.blocks(), t.nets.blocks());
        assert_eq!(restored.adam, t.adam);
        assert_eq!(Checkpoint::from_neural(&restored).to_bytes().unwrap(), bytes);
    }

    #[test]
    fn tabular_round_trip_is_byte_identical() {
        let cfg = ExperimentConfig {
            episodes_per_iteration: 200,
            max_iterations: 3,
            ..ExperimentConfig::default_for(Mode::Tabular)
        };
        let mut t = TabularTrainer::new(cfg.tabular_shape(), cfg.init_value, cfg.schedule(), cfg.eps_greedy()).unwrap();
        t.run_iteration().unwrap();
        let bytes = Checkpoint::from_tabular(&cfg, &t).to_bytes().unwrap();
        let restored = Checkpoint::from_bytes(&bytes).unwrap().to_tabular().unwrap();
        assert_eq!(restored.agents, t.agents);
        assert_eq!(restored.reward_curve, t.reward_curve);
        assert_eq!(Checkpoint::from_tabular(&cfg, &restored).to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_input() {
        let t = NeuralTrainer::new(&small_neural()).unwrap();
        let bytes = Checkpoint::from_neural(&t).to_bytes().unwrap();
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&wrong_version),
            Err(EdlError::CheckpointVersion { found: 9, expected: 1 })
        ));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(EdlError::CorruptCheckpoint(_))));
        assert!(matches!(Checkpoint::from_bytes(b"garbage!garbage!"), Err(EdlError::CorruptCheckpoint(_))));
        let mut ck = Checkpoint::from_neural(&t);
        let i = ck.header.blocks.iter().position(|b| b.name == "f.regressor.b").unwrap();
        ck.header.blocks.remove(i);
        ck.values.remove(i);
        assert!(matches!(ck.to_nets(), Err(EdlError::MissingBlock(n)) if n == "f.regressor.b"));
    }
}
