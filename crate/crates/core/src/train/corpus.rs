use serde::{Deserialize, Serialize};

use crate::dialog::{AState, QState, Round};
use crate::error::Result;
use crate::protocol::ScriptedProtocol;
use crate::rng::{self, purpose};
use crate::world::{check_prediction, enumerate_instances, target_vector, Instance, TargetVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDialog {
    pub instance: Instance,
    pub rounds: Vec<Round>,
    pub target: TargetVector,
}

/// Scripted optimal dialogs for every instance, in seeded order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCorpus {
    pub protocol: ScriptedProtocol,
    pub rounds: usize,
    pub dialogs: Vec<CorpusDialog>,
}

pub fn generate_oracle_corpus(rounds: usize, seed: u64) -> OracleCorpus {
    let protocol = ScriptedProtocol::oracle();
    let mut dialogs: Vec<CorpusDialog> = enumerate_instances()
        .into_iter()
        .map(|instance| CorpusDialog {
            instance,
            rounds: protocol.dialog(&instance, rounds),
            target: target_vector(instance.image),
        })
        .collect();
    rng::shuffle(&mut dialogs, &mut rng::stream(seed, &[purpose::CORPUS]));
    OracleCorpus {
        protocol,
        rounds,
        dialogs,
    }
}

impl OracleCorpus {
    /// The leading `fraction` of the (shuffled) dialogs, at least one.
    pub fn subset(&self, fraction: f64) -> OracleCorpus {
        let n = ((self.dialogs.len() as f64 * fraction).round() as usize).clamp(1, self.dialogs.len());
        OracleCorpus {
            protocol: self.protocol.clone(),
            rounds: self.rounds,
            dialogs: self.dialogs[..n].to_vec(),
        }
    }

    pub fn dialog_for(&self, instance: &Instance) -> CorpusDialog {
        CorpusDialog {
            instance: *instance,
            rounds: self.protocol.dialog(instance, self.rounds),
            target: target_vector(instance.image),
        }
    }

    /// `(state, next question)` teacher-forcing pairs.
    pub fn question_examples(&self) -> Result<Vec<(QState, usize)>> {
        let mut out = Vec::new();
        for d in &self.dialogs {
            let mut state = QState::new(d.instance.task, self.rounds);
            for r in &d.rounds {
                out.push((state.clone(), r.q()));
                state = crate::dialog::advance_q_state(&state, r.clone())?;
            }
        }
        Ok(out)
    }

    /// `(state with pending question, answer)` teacher-forcing pairs.
    pub fn answer_examples(&self) -> Result<Vec<(AState, usize)>> {
        let mut out = Vec::new();
        for d in &self.dialogs {
            let mut state = AState::new(d.instance.image, self.rounds);
            for r in &d.rounds {
                out.push((state.with_question(r.question.clone())?, r.a()));
                state = crate::dialog::advance_a_state(&state, r.clone())?;
            }
        }
        Ok(out)
    }

    /// Fraction of dialogs whose answers decode to the task's pair.
    pub fn accuracy(&self) -> f64 {
        let ok = self
            .dialogs
            .iter()
            .filter(|d| {
                self.protocol
                    .decode_guess(d.instance.task, &d.rounds)
                    .is_some_and(|p| check_prediction(&d.instance, p))
            })
            .count();
        ok as f64 / self.dialogs.len().max(1) as f64
    }
}
