//! Shared game mechanics: symbols, observed states, per-round reward and
//! the episode return.

use serde::{Deserialize, Serialize};

use crate::error::{EdlError, Result};
use crate::world::{
    check_prediction, nearest_image, Instance, PredictionPair, SynthImage, TargetVector, TaskSpec,
};

pub const DEFAULT_Q_VOCAB: usize = 3;
pub const DEFAULT_A_VOCAB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Q,
    A,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Q => Side::A,
            Side::A => Side::Q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub side: Side,
    pub token: usize,
}

impl Symbol {
    pub fn new(side: Side, token: usize, vocab: usize) -> Result<Self> {
        if token >= vocab {
            return Err(EdlError::OutOfRange {
                what: "token index",
                value: token as i64,
                max: vocab as i64 - 1,
            });
        }
        Ok(Symbol { side, token })
    }

    /// Q tokens display as X, Y, Z, ...; A tokens as 1, 2, 3, ...
    pub fn display(self) -> String {
        display_token(self.side, self.token)
    }
}

pub fn display_token(side: Side, token: usize) -> String {
    match side {
        Side::Q => {
            let letters = ['X', 'Y', 'Z', 'W', 'V', 'U', 'T', 'S'];
            letters
                .get(token)
                .map(|c| c.to_string())
                .unwrap_or_else(|| format!("Q{token}"))
        }
        Side::A => (token + 1).to_string(),
    }
}

/// Inverse of [`display_token`]; case-insensitive.
pub fn parse_token(side: Side, text: &str, vocab: usize) -> Option<usize> {
    let text = text.trim();
    (0..vocab).find(|&t| display_token(side, t).eq_ignore_ascii_case(text))
}

/// One question/answer exchange.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Round {
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
}

impl Round {
    pub fn single(question: usize, answer: usize) -> Self {
        Round {
            question: vec![question],
            answer: vec![answer],
        }
    }

    pub fn q(&self) -> usize {
        self.question[0]
    }

    pub fn a(&self) -> usize {
        self.answer[0]
    }
}

/// What Q-bot observes: the task prompt and the dialog so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QState {
    prompt: TaskSpec,
    history: Vec<Round>,
    max_rounds: usize,
}

impl QState {
    pub fn new(prompt: TaskSpec, max_rounds: usize) -> Self {
        QState {
            prompt,
            history: Vec::new(),
            max_rounds,
        }
    }

    pub fn prompt(&self) -> TaskSpec {
        self.prompt
    }

    pub fn history(&self) -> &[Round] {
        &self.history
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }
}

/// What A-bot observes: the image, the dialog so far and any open question.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AState {
    image: SynthImage,
    history: Vec<Round>,
    pending_question: Option<Vec<usize>>,
    max_rounds: usize,
}

impl AState {
    pub fn new(image: SynthImage, max_rounds: usize) -> Self {
        AState {
            image,
            history: Vec::new(),
            pending_question: None,
            max_rounds,
        }
    }

    pub fn image(&self) -> SynthImage {
        self.image
    }

    pub fn history(&self) -> &[Round] {
        &self.history
    }

    pub fn pending_question(&self) -> Option<&[usize]> {
        self.pending_question.as_deref()
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    /// Returns a copy with `question` awaiting an answer.
    pub fn with_question(&self, question: Vec<usize>) -> Result<AState> {
        if self.history.len() >= self.max_rounds {
            return Err(round_limit(self.max_rounds));
        }
        if self.pending_question.is_some() {
            return Err(EdlError::Contract(
                "a question is already pending".to_string(),
            ));
        }
        let mut next = self.clone();
        next.pending_question = Some(question);
        Ok(next)
    }
}

fn round_limit(max_rounds: usize) -> EdlError {
    EdlError::Contract(format!(
        "dialog already has the maximum {max_rounds} rounds"
    ))
}

pub fn advance_q_state(state: &QState, round: Round) -> Result<QState> {
    if state.history.len() >= state.max_rounds {
        return Err(round_limit(state.max_rounds));
    }
    let mut next = state.clone();
    next.history.push(round);
    Ok(next)
}

/// Records the answer to the pending question (or `round` directly when
/// nothing is pending) and clears the pending slot.
pub fn advance_a_state(state: &AState, round: Round) -> Result<AState> {
    if state.history.len() >= state.max_rounds {
        return Err(round_limit(state.max_rounds));
    }
    if let Some(q) = &state.pending_question {
        if *q != round.question {
            return Err(EdlError::Contract(
                "round question differs from the pending question".to_string(),
            ));
        }
    }
    let mut next = state.clone();
    next.history.push(round);
    next.pending_question = None;
    Ok(next)
}

/// Squared Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EdlError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Improvement in squared distance to the ground truth over one round.
pub fn round_reward(y_gt: &[f64], y_prev: &[f64], y_curr: &[f64]) -> Result<f64> {
    Ok(distance(y_prev, y_gt)? - distance(y_curr, y_gt)?)
}

pub fn episode_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalGuess {
    Pair(usize),
    Image(usize),
}

/// Serialized form of an [`Instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceIds {
    pub image_id: usize,
    pub task_id: usize,
}

/// Full trajectory of one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(with = "instance_ids")]
    pub instance: Instance,
    pub rounds: Vec<Round>,
    pub predictions: Vec<TargetVector>,
    pub rewards: Vec<f64>,
    pub final_guess: FinalGuess,
}

mod instance_ids {
    use super::InstanceIds;
    use crate::world::{Instance, SynthImage, TaskSpec};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(inst: &Instance, s: S) -> Result<S::Ok, S::Error> {
        InstanceIds {
            image_id: inst.image.id(),
            task_id: inst.task.id(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Instance, D::Error> {
        let ids = InstanceIds::deserialize(d)?;
        let image = SynthImage::from_id(ids.image_id).map_err(D::Error::custom)?;
        let task = TaskSpec::from_id(ids.task_id).map_err(D::Error::custom)?;
        Ok(Instance::new(image, task))
    }
}

impl EpisodeRecord {
    pub fn episode_return(&self) -> f64 {
        episode_return(&self.rewards)
    }

    /// Whether the final guess solves the instance's task.
    pub fn is_correct(&self) -> bool {
        match self.final_guess {
            FinalGuess::Pair(p) => PredictionPair::from_index(p)
                .map(|pair| check_prediction(&self.instance, pair))
                .unwrap_or(false),
            FinalGuess::Image(id) => SynthImage::from_id(id)
                .map(|img| {
                    let pair = PredictionPair::new(
                        img.value(self.instance.task.first()),
                        img.value(self.instance.task.second()),
                    );
                    check_prediction(&self.instance, pair)
                })
                .unwrap_or(false),
        }
    }

    pub fn final_image_guess(&self) -> Option<SynthImage> {
        match self.final_guess {
            FinalGuess::Image(id) => SynthImage::from_id(id).ok(),
            FinalGuess::Pair(_) => self.predictions.last().map(|p| nearest_image(&p.0)),
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Checks the episode-return identity: the reward sum equals the
/// first-minus-last distance to the ground truth within 1e-9.
///
/// Records without vector predictions (tabular mode) carry a single
/// terminal reward and are checked for that shape instead.
pub fn verify_telescoping(record: &EpisodeRecord, y_gt: &[f64]) -> Result<bool> {
    if record.predictions.is_empty() {
        return match record.rewards.as_slice() {
            [r] => Ok(*r == 1.0 || *r == -1.0),
            _ => Err(EdlError::Contract(format!(
                "tabular record must carry one terminal reward, found {}",
                record.rewards.len()
            ))),
        };
    }
    if record.rewards.len() + 1 != record.predictions.len() {
        return Err(EdlError::Contract(format!(
            "{} rewards for {} predictions",
            record.rewards.len(),
            record.predictions.len()
        )));
    }
    let first = distance(&record.predictions[0].0, y_gt)?;
    let last = distance(&record.predictions[record.predictions.len() - 1].0, y_gt)?;
    Ok((record.episode_return() - (first - last)).abs() <= 1e-9)
}

/// Per-round rewards for a sequence of predictions `y_0..y_T`.
pub fn rewards_from_predictions(y_gt: &[f64], predictions: &[TargetVector]) -> Result<Vec<f64>> {
    predictions
        .windows(2)
        .map(|w| round_reward(y_gt, &w[0].0, &w[1].0))
        .collect()
}
