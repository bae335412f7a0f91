//! Hand-scripted communication protocols: each Q-symbol asks for one
//! attribute, and A-bot replies with a fixed code for that attribute's value.

use crate::dialog::Round;
use crate::error::{EdlError, Result};
use crate::world::{
    AttributeKind, AttributeValue, Instance, PredictionPair, SynthImage, TaskSpec, NUM_ATTRIBUTES,
    VALUES_PER_ATTRIBUTE,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedProtocol {
    /// Attribute queried by each Q-symbol.
    symbol_attribute: Vec<AttributeKind>,
    /// `answer_codes[attribute][value]` is the A-symbol sent for that value.
    answer_codes: [[usize; VALUES_PER_ATTRIBUTE]; NUM_ATTRIBUTES],
}

impl ScriptedProtocol {
    pub fn new(
        symbol_attribute: Vec<AttributeKind>,
        answer_codes: [[usize; VALUES_PER_ATTRIBUTE]; NUM_ATTRIBUTES],
    ) -> Result<Self> {
        for kind in AttributeKind::all() {
            if !symbol_attribute.contains(&kind) {
                return Err(EdlError::Contract(format!(
                    "no question symbol asks for {}",
                    kind.name()
                )));
            }
            let mut codes = answer_codes[kind.index()].to_vec();
            codes.sort_unstable();
            codes.dedup();
            if codes.len() != VALUES_PER_ATTRIBUTE {
                return Err(EdlError::Contract(format!(
                    "answer codes for {} are not a bijection",
                    kind.name()
                )));
            }
        }
        Ok(ScriptedProtocol {
            symbol_attribute,
            answer_codes,
        })
    }

    /// Symbol k asks attribute k; the answer is the value index.
    pub fn oracle() -> Self {
        Self::new(
            AttributeKind::all().to_vec(),
            [[0, 1, 2, 3]; NUM_ATTRIBUTES],
        )
        .expect("oracle protocol is valid")
    }

    /// X asks color, Y shape, Z style; answers 1..4 name values in order
    /// (for color: purple, green, blue, red).
    pub fn reported_emergent() -> Self {
        Self::new(
            vec![
                AttributeKind::COLOR,
                AttributeKind::SHAPE,
                AttributeKind::STYLE,
            ],
            [[0, 1, 2, 3]; NUM_ATTRIBUTES],
        )
        .expect("valid protocol")
    }

    pub fn q_vocab(&self) -> usize {
        self.symbol_attribute.len()
    }

    pub fn attribute_of(&self, symbol: usize) -> Option<AttributeKind> {
        self.symbol_attribute.get(symbol).copied()
    }

    pub fn symbol_for(&self, kind: AttributeKind) -> usize {
        self.symbol_attribute
            .iter()
            .position(|&k| k == kind)
            .expect("every attribute has a symbol")
    }

    /// Attribute asked in round `round` (0-based): the task's first
    /// attribute, its second, the remaining one, then cycling.
    pub fn attribute_for_round(task: TaskSpec, round: usize) -> AttributeKind {
        [task.first(), task.second(), task.remaining()][round % NUM_ATTRIBUTES]
    }

    pub fn question(&self, task: TaskSpec, round: usize) -> usize {
        self.symbol_for(Self::attribute_for_round(task, round))
    }

    pub fn answer(&self, image: SynthImage, question: usize) -> usize {
        match self.attribute_of(question) {
            Some(kind) => self.answer_codes[kind.index()][image.value(kind).value_index()],
            None => 0,
        }
    }

    /// Value encoded by `answer` when `question` was asked.
    pub fn decode_answer(&self, question: usize, answer: usize) -> Option<AttributeValue> {
        let kind = self.attribute_of(question)?;
        let v = self.answer_codes[kind.index()]
            .iter()
            .position(|&c| c == answer)?;
        AttributeValue::new(kind, v).ok()
    }

    pub fn dialog(&self, instance: &Instance, rounds: usize) -> Vec<Round> {
        (0..rounds)
            .map(|r| {
                let q = self.question(instance.task, r);
                Round::single(q, self.answer(instance.image, q))
            })
            .collect()
    }

    /// Reads the task's two values off a dialog; `None` when the dialog
    /// never asked for one of them.
    pub fn decode_guess(&self, task: TaskSpec, rounds: &[Round]) -> Option<PredictionPair> {
        let find = |kind: AttributeKind| {
            rounds
                .iter()
                .filter(|r| self.attribute_of(r.q()) == Some(kind))
                .find_map(|r| self.decode_answer(r.q(), r.a()))
        };
        Some(PredictionPair::new(
            find(task.first())?,
            find(task.second())?,
        ))
    }
}
