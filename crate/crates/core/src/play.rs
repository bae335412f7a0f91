//! Line-oriented REPL in which a person takes one seat of the game and a
//! checkpointed agent plays the other.

use std::io::{BufRead, Write};

use crate::dialog::{display_token, parse_token, Round, Side};
use crate::error::{EdlError, Result};
use crate::nn::greedy_symbol;
use crate::run::LoadedAgents;
use crate::tabular::{ActionMode, EpsGreedyConfig};
use crate::world::{check_prediction, nearest_image, AttributeValue, Instance, PredictionPair};

/// Greedy moves of a trained agent at arbitrary dialog prefixes.
pub trait Partner {
    fn q_vocab(&self) -> usize;
    fn a_vocab(&self) -> usize;
    fn ask(&self, instance: &Instance, history: &[Round]) -> Result<usize>;
    fn answer(&self, instance: &Instance, history: &[Round], question: usize) -> Result<usize>;
    fn guess(&self, instance: &Instance, history: &[Round]) -> Result<PredictionPair>;
}

impl Partner for LoadedAgents {
    fn q_vocab(&self) -> usize {
        match self {
            LoadedAgents::Tabular(a) => a.shape().q_vocab,
            LoadedAgents::Neural(a) => a.nets.dims().q_vocab,
        }
    }

    fn a_vocab(&self) -> usize {
        match self {
            LoadedAgents::Tabular(a) => a.shape().a_vocab,
            LoadedAgents::Neural(a) => a.nets.dims().a_vocab,
        }
    }

    fn ask(&self, instance: &Instance, history: &[Round]) -> Result<usize> {
        match self {
            LoadedAgents::Tabular(a) => {
                let mut rng = crate::rng::stream(0, &[crate::rng::purpose::PLAY]);
                a.question_for(instance, history, &EpsGreedyConfig::default(), ActionMode::Greedy, &mut rng)
            }
            LoadedAgents::Neural(a) => {
                let tape = a.nets.q.forward_rounds(instance.task, history)?;
                Ok(greedy_symbol(tape.question_distribution(), Side::Q)?.token)
            }
        }
    }

    fn answer(&self, instance: &Instance, history: &[Round], question: usize) -> Result<usize> {
        match self {
            LoadedAgents::Tabular(a) => {
                let mut rng = crate::rng::stream(0, &[crate::rng::purpose::PLAY]);
                a.answer_for(instance, history, question, &EpsGreedyConfig::default(), ActionMode::Greedy, &mut rng)
            }
            LoadedAgents::Neural(a) => {
                let mut tape = a.nets.a.forward_rounds(instance.image, history)?;
                a.nets.a.ask(&mut tape, question)?;
                let dist = tape.answer_distribution().expect("question pending");
                Ok(greedy_symbol(dist, Side::A)?.token)
            }
        }
    }

    fn guess(&self, instance: &Instance, history: &[Round]) -> Result<PredictionPair> {
        match self {
            LoadedAgents::Tabular(a) => {
                let key = a.shape().ask_key(instance, history);
                PredictionPair::from_index(a.predict.argmax(key.index))
            }
            LoadedAgents::Neural(a) => {
                let tape = a.nets.q.forward_rounds(instance.task, history)?;
                let img = nearest_image(tape.prediction());
                Ok(PredictionPair::new(img.value(instance.task.first()), img.value(instance.task.second())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayOutcome {
    pub rounds: Vec<Round>,
    pub guess: PredictionPair,
    pub correct: bool,
}

/// Reads lines until `parse` accepts one, re-prompting on anything else.
fn prompt<R: BufRead, W: Write, T>(
    input: &mut R,
    out: &mut W,
    text: &str,
    mut parse: impl FnMut(&str) -> Option<T>,
) -> Result<T> {
    loop {
        write!(out, "{text}")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(EdlError::Contract("input ended before the game finished".into()));
        }
        match parse(&line) {
            Some(v) => return Ok(v),
            None => writeln!(out, "  unrecognized input {:?}, try again", line.trim())?,
        }
    }
}

fn token_list(side: Side, vocab: usize) -> String {
    (0..vocab).map(|t| display_token(side, t)).collect::<Vec<_>>().join(" ")
}

/// Plays one game with the person in seat `side`.
pub fn play_session<P: Partner, R: BufRead, W: Write>(
    partner: &P,
    instance: &Instance,
    rounds: usize,
    side: Side,
    input: &mut R,
    out: &mut W,
) -> Result<PlayOutcome> {
    let (qv, av) = (partner.q_vocab(), partner.a_vocab());
    let mut history = Vec::with_capacity(rounds);
    match side {
        Side::Q => writeln!(out, "You are the questioner. Task: report {}.", instance.task.describe())?,
        Side::A => writeln!(out, "You are the answerer. Image: {}.", instance.image.describe())?,
    }
    for t in 0..rounds {
        let (q, a) = match side {
            Side::Q => {
                let text = format!("round {} question [{}]> ", t + 1, token_list(Side::Q, qv));
                let q = prompt(input, out, &text, |s| parse_token(Side::Q, s, qv))?;
                let a = partner.answer(instance, &history, q)?;
                writeln!(out, "  answer: {}", display_token(Side::A, a))?;
                (q, a)
            }
            Side::A => {
                let q = partner.ask(instance, &history)?;
                writeln!(out, "round {} question: {}", t + 1, display_token(Side::Q, q))?;
                let a = prompt(input, out, &format!("  answer [{}]> ", token_list(Side::A, av)), |s| {
                    parse_token(Side::A, s, av)
                })?;
                (q, a)
            }
        };
        history.push(Round::single(q, a));
    }
    let guess = match side {
        Side::Q => {
            let (f, s) = (instance.task.first(), instance.task.second());
            let first = prompt(input, out, &format!("your guess for {}> ", f.name()), |x| {
                AttributeValue::parse(x).filter(|v| v.kind() == f)
            })?;
            let second = prompt(input, out, &format!("your guess for {}> ", s.name()), |x| {
                AttributeValue::parse(x).filter(|v| v.kind() == s)
            })?;
            PredictionPair::new(first, second)
        }
        Side::A => {
            let g = partner.guess(instance, &history)?;
            writeln!(out, "questioner guesses: {}, {}", g.first().name(), g.second().name())?;
            g
        }
    };
    let correct = check_prediction(instance, guess);
    if correct {
        writeln!(out, "Correct guess!")?;
    } else {
        writeln!(
            out,
            "Wrong guess: the answer was {}, {}.",
            instance.image.value(instance.task.first()).name(),
            instance.image.value(instance.task.second()).name()
        )?;
    }
    Ok(PlayOutcome {
        rounds: history,
        guess,
        correct,
    })
}
