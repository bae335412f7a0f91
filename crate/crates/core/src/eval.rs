//! Guessing-game evaluation: retrieval percentile ranks, task accuracy,
//! emergent-protocol analysis and generic ranking metrics.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialog::{
    display_token, rewards_from_predictions, EpisodeRecord, FinalGuess, Round, Side,
};
use crate::error::{EdlError, Result};
use crate::protocol::ScriptedProtocol;
use crate::rng::{self, purpose};
use crate::world::{
    target_vector, AttributeKind, Instance, PredictionPair, SynthImage, TargetVector, TaskSpec,
    NUM_ATTRIBUTES, NUM_PAIRS, TARGET_DIM, VALUES_PER_ATTRIBUTE,
};

/// A pair of agents that can play the game deterministically.
///
/// `episode` addresses any randomness the agents use, so the same
/// `(instance, episode)` always produces the same record.
pub trait DialogAgents: Sync {
    fn play(&self, instance: &Instance, episode: u64) -> EpisodeRecord;
}

pub fn play_all<A: DialogAgents + ?Sized>(
    agents: &A,
    instances: &[Instance],
) -> Vec<EpisodeRecord> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| agents.play(inst, i as u64))
        .collect()
}

/// Fraction of instances won by the agents' final guess.
pub fn task_accuracy<A: DialogAgents + ?Sized>(agents: &A, instances: &[Instance]) -> f64 {
    accuracy_of(&play_all(agents, instances))
}

pub fn accuracy_of(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64
}

/// Mean reward under the +1/-1 scheme for a given accuracy.
pub fn mean_reward_from_accuracy(accuracy: f64) -> f64 {
    2.0 * accuracy - 1.0
}

/// Percentile (100 = closest) of `true_image` among `pool` when sorted by
/// squared distance to `prediction`. Exact ties count half.
pub fn percentile_rank(
    prediction: &[f64],
    true_image: SynthImage,
    pool: &[SynthImage],
) -> Result<f64> {
    if pool.len() < 2 {
        return Err(EdlError::Contract("pool needs at least two images".into()));
    }
    if prediction.len() != TARGET_DIM {
        return Err(EdlError::DimensionMismatch {
            left: prediction.len(),
            right: TARGET_DIM,
        });
    }
    if !pool.contains(&true_image) {
        return Err(EdlError::Contract(format!(
            "image {} is not in the pool",
            true_image.id()
        )));
    }
    let dist = |img: SynthImage| -> f64 {
        target_vector(img)
            .0
            .iter()
            .zip(prediction)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let own = dist(true_image);
    let mut closer = 0usize;
    let mut ties = 0usize;
    for &img in pool {
        if img == true_image {
            continue;
        }
        let d = dist(img);
        if d < own {
            closer += 1;
        } else if d == own {
            ties += 1;
        }
    }
    let rank = 1.0 + closer as f64 + 0.5 * ties as f64;
    let n = pool.len() as f64;
    Ok(100.0 * (n - rank) / (n - 1.0))
}

/// 1-based rank of `true_image` among `pool` by distance to `prediction`;
/// ties are broken against the true image.
pub fn image_rank(prediction: &[f64], true_image: SynthImage, pool: &[SynthImage]) -> Result<usize> {
    // Shares input validation with the percentile.
    percentile_rank(prediction, true_image, pool)?;
    let dist = |img: SynthImage| -> f64 {
        target_vector(img).0.iter().zip(prediction).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let own = dist(true_image);
    Ok(1 + pool.iter().filter(|&&img| img != true_image && dist(img) <= own).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mean_percentile_rank: f64,
    pub std_error: f64,
}

/// Per-round retrieval quality; entry 0 is the prompt-only prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCurve(pub Vec<CurvePoint>);

impl RetrievalCurve {
    pub fn final_point(&self) -> CurvePoint {
        *self.0.last().expect("curve has round 0")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,mean,stderr\n");
        for (t, p) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{t},{},{}", p.mean_percentile_rank, p.std_error);
        }
        out
    }

    /// A standalone matplotlib script plotting `csv_name`.
    pub fn plot_script(csv_name: &str) -> String {
        format!(
            r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv_name}")))
rounds = [int(r["round"]) for r in rows]
mean = [float(r["mean"]) for r in rows]
err = [float(r["stderr"]) for r in rows]
plt.errorbar(rounds, mean, yerr=err, marker="o", capsize=3)
plt.xlabel("dialog round")
plt.ylabel("percentile rank of true image (higher is better)")
plt.ylim(0, 100)
plt.grid(alpha=0.3)
plt.savefig("{csv_name}.png", dpi=120, bbox_inches="tight")
"#
        )
    }
}

fn mean_and_stderr(xs: &[f64]) -> CurvePoint {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std_error = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    CurvePoint {
        mean_percentile_rank: mean,
        std_error,
    }
}

pub fn retrieval_curve_of(
    records: &[EpisodeRecord],
    pool: &[SynthImage],
) -> Result<RetrievalCurve> {
    let rounds = records
        .first()
        .map(|r| r.predictions.len())
        .ok_or_else(|| EdlError::Contract("no episodes to evaluate".into()))?;
    if rounds == 0 {
        return Err(EdlError::Contract(
            "episodes carry no vector predictions".into(),
        ));
    }
    let mut per_round = vec![Vec::with_capacity(records.len()); rounds];
    for rec in records {
        if rec.predictions.len() != rounds {
            return Err(EdlError::Contract("episodes differ in length".into()));
        }
        for (t, p) in rec.predictions.iter().enumerate() {
            per_round[t].push(percentile_rank(&p.0, rec.instance.image, pool)?);
        }
    }
    Ok(RetrievalCurve(
        per_round.iter().map(|xs| mean_and_stderr(xs)).collect(),
    ))
}

/// Greedy rollouts over `instances`, ranked against `pool` after every round.
pub fn retrieval_curve<A: DialogAgents + ?Sized>(
    agents: &A,
    instances: &[Instance],
    pool: &[SynthImage],
) -> Result<RetrievalCurve> {
    retrieval_curve_of(&play_all(agents, instances), pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub recall_at_k: Vec<(usize, f64)>,
    pub mean_rank: f64,
}

impl RankingMetrics {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at_k
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, r)| *r)
    }
}

pub fn ranking_metrics(ranks: &[usize], ks: &[usize]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(EdlError::Contract("no ranks given".into()));
    }
    if ranks.contains(&0) {
        return Err(EdlError::Contract("ranks start at 1".into()));
    }
    let n = ranks.len() as f64;
    Ok(RankingMetrics {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        recall_at_k: ks
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect(),
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
    })
}

/// Plug-in mutual information (bits) of a joint count table.
pub fn mutual_information(joint: &[Vec<u64>]) -> f64 {
    let total: u64 = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let rows: Vec<u64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols_n = joint.iter().map(|r| r.len()).max().unwrap_or(0);
    let cols: Vec<u64> = (0..cols_n)
        .map(|j| joint.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum())
        .collect();
    let n = total as f64;
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).log2();
        }
    }
    mi.max(0.0)
}

pub fn entropy_bits(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// How answers to one Q-symbol relate to each attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolReport {
    pub symbol: usize,
    pub uses: u64,
    /// `answer_counts[attribute][value][answer]`.
    pub answer_counts: Vec<Vec<Vec<u64>>>,
    pub mutual_information: Vec<f64>,
    /// Whether the answer is a function of each attribute's value.
    pub deterministic: Vec<bool>,
    /// Attribute this symbol queries, when one carries the full 2 bits.
    pub grounded_attribute: Option<AttributeKind>,
    /// `value_codes[v]` is the answer sent for value `v` of the grounded attribute.
    pub value_codes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub a_vocab: usize,
    pub symbols: Vec<SymbolReport>,
    pub factorized: bool,
}

const FULL_ATTRIBUTE_BITS: f64 = 2.0;

/// Tabulates (Q-symbol, attribute value, A-symbol) over greedy rollouts.
pub fn protocol_report<A: DialogAgents + ?Sized>(
    agents: &A,
    instances: &[Instance],
    q_vocab: usize,
    a_vocab: usize,
) -> ProtocolReport {
    protocol_report_of(&play_all(agents, instances), q_vocab, a_vocab)
}

pub fn protocol_report_of(
    records: &[EpisodeRecord],
    q_vocab: usize,
    a_vocab: usize,
) -> ProtocolReport {
    let mut counts =
        vec![vec![vec![vec![0u64; a_vocab]; VALUES_PER_ATTRIBUTE]; NUM_ATTRIBUTES]; q_vocab];
    let mut uses = vec![0u64; q_vocab];
    for rec in records {
        for round in &rec.rounds {
            let (q, a) = (round.q(), round.a());
            if q >= q_vocab || a >= a_vocab {
                continue;
            }
            uses[q] += 1;
            for kind in AttributeKind::all() {
                let v = rec.instance.image.value(kind).value_index();
                counts[q][kind.index()][v][a] += 1;
            }
        }
    }
    let symbols: Vec<SymbolReport> = (0..q_vocab)
        .filter(|&q| uses[q] > 0)
        .map(|q| {
            let tables = &counts[q];
            let mi: Vec<f64> = tables.iter().map(|t| mutual_information(t)).collect();
            let deterministic: Vec<bool> = tables
                .iter()
                .map(|t| {
                    t.iter()
                        .all(|row| row.iter().filter(|&&c| c > 0).count() <= 1)
                })
                .collect();
            let grounded = (0..NUM_ATTRIBUTES)
                .find(|&k| deterministic[k] && mi[k] >= FULL_ATTRIBUTE_BITS - 1e-12);
            let value_codes = grounded.map(|k| {
                tables[k]
                    .iter()
                    .map(|row| row.iter().position(|&c| c > 0).unwrap_or(0))
                    .collect()
            });
            SymbolReport {
                symbol: q,
                uses: uses[q],
                answer_counts: tables.clone(),
                mutual_information: mi,
                deterministic,
                grounded_attribute: grounded.map(|k| AttributeKind::new(k).expect("k < 3")),
                value_codes,
            }
        })
        .collect();
    let factorized = !symbols.is_empty() && symbols.iter().all(|s| s.grounded_attribute.is_some());
    ProtocolReport {
        a_vocab,
        symbols,
        factorized,
    }
}

impl ProtocolReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "factorized grounding: {}",
            if self.factorized { "yes" } else { "no" }
        );
        for s in &self.symbols {
            let _ = writeln!(
                out,
                "\nsymbol {} (used {} times)",
                display_token(Side::Q, s.symbol),
                s.uses
            );
            for kind in AttributeKind::all() {
                let k = kind.index();
                let _ = writeln!(
                    out,
                    "  MI(answer; {:<5}) = {:.4} bits{}",
                    kind.name(),
                    s.mutual_information[k],
                    if s.deterministic[k] {
                        "  [deterministic]"
                    } else {
                        ""
                    }
                );
            }
            if let (Some(kind), Some(codes)) = (s.grounded_attribute, &s.value_codes) {
                let mapping: Vec<String> = codes
                    .iter()
                    .enumerate()
                    .map(|(v, &a)| {
                        let value = crate::world::AttributeValue::new(kind, v).expect("v < 4");
                        format!("{} -> {}", display_token(Side::A, a), value.name())
                    })
                    .collect();
                let _ = writeln!(out, "  asks {}: {}", kind.name(), mapping.join(", "));
            }
            let k = s.grounded_attribute.map(|k| k.index()).unwrap_or_else(|| {
                (0..NUM_ATTRIBUTES)
                    .max_by(|&a, &b| s.mutual_information[a].total_cmp(&s.mutual_information[b]))
                    .unwrap_or(0)
            });
            let kind = AttributeKind::new(k).expect("k < 3");
            let header: Vec<String> = (0..self.a_vocab)
                .map(|a| display_token(Side::A, a))
                .collect();
            let _ = writeln!(out, "  {:<10} {}", kind.name(), header.join("\t"));
            for (v, row) in s.answer_counts[k].iter().enumerate() {
                let value = crate::world::AttributeValue::new(kind, v).expect("v < 4");
                let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "  {:<10} {}", value.name(), cells.join("\t"));
            }
        }
        out
    }

    /// Long-format conditional answer tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("symbol,attribute,value,answer,count\n");
        for s in &self.symbols {
            for kind in AttributeKind::all() {
                for (v, row) in s.answer_counts[kind.index()].iter().enumerate() {
                    let value = crate::world::AttributeValue::new(kind, v).expect("v < 4");
                    for (a, c) in row.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            display_token(Side::Q, s.symbol),
                            kind.name(),
                            value.name(),
                            display_token(Side::A, a),
                            c
                        );
                    }
                }
            }
        }
        out
    }
}

/// Whether, for `task`, no two combinations of the task's two attribute
/// values share an answer sequence under greedy play.
pub fn answer_map_injective<A: DialogAgents + ?Sized>(agents: &A, task: TaskSpec) -> bool {
    let mut seen: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    for (i, image) in crate::world::enumerate_images().into_iter().enumerate() {
        let inst = Instance::new(image, task);
        let rec = agents.play(&inst, i as u64);
        let answers: Vec<usize> = rec.rounds.iter().flat_map(|r| r.answer.clone()).collect();
        let combo = (
            image.value(task.first()).value_index(),
            image.value(task.second()).value_index(),
        );
        if let Some(prev) = seen.insert(answers, combo) {
            if prev != combo {
                return false;
            }
        }
    }
    true
}

/// Scripted agents with a Bayes-optimal regressor: the prediction is the
/// posterior mean of the target given the decoded answers.
#[derive(Debug, Clone)]
pub struct ScriptedAgents {
    pub protocol: ScriptedProtocol,
    pub rounds: usize,
}

impl ScriptedAgents {
    pub fn new(protocol: ScriptedProtocol, rounds: usize) -> Self {
        ScriptedAgents { protocol, rounds }
    }

    fn posterior_mean(&self, history: &[Round]) -> TargetVector {
        let mut y = vec![1.0 / VALUES_PER_ATTRIBUTE as f64; TARGET_DIM];
        for r in history {
            if let Some(value) = self.protocol.decode_answer(r.q(), r.a()) {
                let k = value.kind().index();
                for v in 0..VALUES_PER_ATTRIBUTE {
                    y[k * VALUES_PER_ATTRIBUTE + v] =
                        if v == value.value_index() { 1.0 } else { 0.0 };
                }
            }
        }
        TargetVector(y)
    }
}

impl DialogAgents for ScriptedAgents {
    fn play(&self, instance: &Instance, _episode: u64) -> EpisodeRecord {
        let rounds = self.protocol.dialog(instance, self.rounds);
        let predictions: Vec<TargetVector> = (0..=self.rounds)
            .map(|t| self.posterior_mean(&rounds[..t]))
            .collect();
        let y = target_vector(instance.image);
        let rewards = rewards_from_predictions(&y.0, &predictions).expect("equal dims");
        let final_guess = match self.protocol.decode_guess(instance.task, &rounds) {
            Some(p) => FinalGuess::Pair(p.index()),
            None => {
                FinalGuess::Image(crate::world::nearest_image(&predictions[self.rounds].0).id())
            }
        };
        EpisodeRecord {
            instance: *instance,
            rounds,
            predictions,
            rewards,
            final_guess,
        }
    }
}

/// Agents that pick every symbol and the final pair uniformly at random.
#[derive(Debug, Clone)]
pub struct RandomAgents {
    pub seed: u64,
    pub rounds: usize,
    pub q_vocab: usize,
    pub a_vocab: usize,
}

impl DialogAgents for RandomAgents {
    fn play(&self, instance: &Instance, episode: u64) -> EpisodeRecord {
        let mut rng = rng::stream(self.seed, &[purpose::EVAL, episode]);
        let rounds = (0..self.rounds)
            .map(|_| {
                Round::single(
                    rng.gen_range(0..self.q_vocab),
                    rng.gen_range(0..self.a_vocab),
                )
            })
            .collect();
        let pair = rng.gen_range(0..NUM_PAIRS);
        let correct = crate::world::check_prediction(
            instance,
            PredictionPair::from_index(pair).expect("in range"),
        );
        EpisodeRecord {
            instance: *instance,
            rounds,
            predictions: Vec::new(),
            rewards: vec![if correct { 1.0 } else { -1.0 }],
            final_guess: FinalGuess::Pair(pair),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{enumerate_images, enumerate_instances, enumerate_tasks};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Strategy};

    #[test]
    fn exact_prediction_ranks_first() {
        let pool = enumerate_images();
        for img in &pool {
            assert_eq!(
                percentile_rank(&target_vector(*img).0, *img, &pool).unwrap(),
                100.0
            );
        }
    }

    #[test]
    fn equidistant_prediction_ranks_in_the_middle() {
        let pool = enumerate_images();
        assert_eq!(percentile_rank(&[0.0; 12], pool[17], &pool).unwrap(), 50.0);
    }

    #[test]
    fn percentile_rank_errors() {
        let pool = enumerate_images();
        let img = pool[3];
        assert!(percentile_rank(&[0.0; 12], img, &pool[4..]).is_err());
        assert!(percentile_rank(&[0.0; 12], img, &[img]).is_err());
        assert!(percentile_rank(&[0.0; 11], img, &pool).is_err());
    }

    #[test]
    fn random_predictions_average_fifty() {
        let pool = enumerate_images();
        let mut rng = rng::stream(9, &[purpose::TEST]);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let pred: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
            let img = pool[rng.gen_range(0..64)];
            total += percentile_rank(&pred, img, &pool).unwrap();
        }
        let mean = total / n as f64;
        assert!((mean - 50.0).abs() <= 2.0, "mean {mean}");
    }

    #[test]
    fn ranking_metric_examples() {
        let m = ranking_metrics(&[1, 1, 1], &[5, 10]).unwrap();
        assert_eq!((m.mrr, m.recall(5), m.mean_rank), (1.0, Some(1.0), 1.0));
        let m = ranking_metrics(&[2, 4], &[5]).unwrap();
        assert_eq!(m.mrr, 0.375);
        assert_eq!(m.mean_rank, 3.0);
        let m = ranking_metrics(&[10], &[5, 10]).unwrap();
        assert_eq!(m.recall(5), Some(0.0));
        assert_eq!(m.recall(10), Some(1.0));
        assert!(ranking_metrics(&[], &[5]).is_err());
        assert!(ranking_metrics(&[0], &[5]).is_err());
    }

    #[test]
    fn oracle_protocol_is_factorized_with_two_bits() {
        let agents = ScriptedAgents::new(ScriptedProtocol::oracle(), 2);
        let report = protocol_report(&agents, &enumerate_instances(), 3, 4);
        assert!(report.factorized);
        for s in &report.symbols {
            let k = s.grounded_attribute.unwrap().index();
            assert_eq!(k, s.symbol);
            assert_eq!(s.mutual_information[k], 2.0);
            assert_eq!(s.value_codes.as_deref(), Some(&[0, 1, 2, 3][..]));
        }
    }

    #[test]
    fn reported_mapping_is_detected() {
        let agents = ScriptedAgents::new(ScriptedProtocol::reported_emergent(), 2);
        let report = protocol_report(&agents, &enumerate_instances(), 3, 4);
        assert!(report.factorized);
        let x = report.symbols.iter().find(|s| s.symbol == 0).unwrap();
        assert_eq!(x.grounded_attribute, Some(AttributeKind::COLOR));
        // 1 -> purple, 2 -> green, 3 -> blue, 4 -> red
        assert_eq!(x.value_codes.as_deref(), Some(&[0, 1, 2, 3][..]));
        assert!(report
            .to_text()
            .contains("1 -> purple, 2 -> green, 3 -> blue, 4 -> red"));
        assert!(report
            .to_csv()
            .starts_with("symbol,attribute,value,answer,count\n"));
    }

    struct ConstantAnswerer;

    impl DialogAgents for ConstantAnswerer {
        fn play(&self, instance: &Instance, _episode: u64) -> EpisodeRecord {
            EpisodeRecord {
                instance: *instance,
                rounds: vec![Round::single(0, 2), Round::single(1, 2)],
                predictions: vec![],
                rewards: vec![-1.0],
                final_guess: FinalGuess::Pair(0),
            }
        }
    }

    #[test]
    fn constant_answerer_carries_no_information() {
        let report = protocol_report(&ConstantAnswerer, &enumerate_instances(), 3, 4);
        assert!(!report.factorized);
        for s in &report.symbols {
            assert!(s.mutual_information.iter().all(|&m| m == 0.0));
        }
        for task in enumerate_tasks() {
            assert!(!answer_map_injective(&ConstantAnswerer, task));
        }
    }

    #[test]
    fn scripted_agents_reach_full_rank_with_three_rounds() {
        let pool = enumerate_images();
        let agents = ScriptedAgents::new(ScriptedProtocol::oracle(), 3);
        let curve = retrieval_curve(&agents, &enumerate_instances(), &pool).unwrap();
        assert_eq!(curve.0.len(), 4);
        assert_eq!(curve.final_point().mean_percentile_rank, 100.0);
        assert_eq!(curve.0[0].mean_percentile_rank, 50.0);
        assert!(curve.to_csv().starts_with("round,mean,stderr\n0,50,0\n"));
        for task in enumerate_tasks() {
            assert!(answer_map_injective(&agents, task));
        }
        assert_eq!(task_accuracy(&agents, &enumerate_instances()), 1.0);
    }

    #[test]
    fn random_agent_accuracy_matches_one_in_144() {
        let agents = RandomAgents {
            seed: 4,
            rounds: 2,
            q_vocab: 3,
            a_vocab: 4,
        };
        let inst = enumerate_instances();
        let many: Vec<Instance> = inst.iter().cycle().take(20_000).copied().collect();
        let recs = play_all(&agents, &many);
        let acc = accuracy_of(&recs);
        let p = 1.0 / 144.0;
        let sigma = (p * (1.0 - p) / recs.len() as f64).sqrt();
        assert!((acc - p).abs() <= 3.0 * sigma, "acc {acc}");
        let mean_reward = recs.iter().map(|r| r.episode_return()).sum::<f64>() / recs.len() as f64;
        assert!((mean_reward - mean_reward_from_accuracy(acc)).abs() < 1e-12);
    }

    fn table_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (1usize..5, 1usize..5)
            .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0u64..20, c), r))
    }

    proptest! {
        #[test]
        fn mi_is_nonnegative_and_symmetric(t in table_strategy()) {
            let mi = mutual_information(&t);
            prop_assert!(mi >= 0.0);
            let cols = t[0].len();
            let tr: Vec<Vec<u64>> = (0..cols).map(|j| t.iter().map(|r| r[j]).collect()).collect();
            prop_assert!((mi - mutual_information(&tr)).abs() < 1e-9);
        }

        #[test]
        fn mi_of_independent_table_is_zero(
            rows in prop::collection::vec(1u64..6, 1..5),
            cols in prop::collection::vec(1u64..6, 1..5),
        ) {
            let t: Vec<Vec<u64>> = rows.iter().map(|&r| cols.iter().map(|&c| r * c).collect()).collect();
            prop_assert!(mutual_information(&t).abs() < 1e-9);
        }

        #[test]
        fn mi_of_function_is_min_entropy(xs in prop::collection::vec(0usize..4, 1..60), f in prop::collection::vec(0usize..3, 4)) {
            let mut t = vec![vec![0u64; 3]; 4];
            for &x in &xs {
                t[x][f[x]] += 1;
            }
            let hx = entropy_bits(&t.iter().map(|r| r.iter().sum()).collect::<Vec<_>>());
            let hy = entropy_bits(&(0..3).map(|j| t.iter().map(|r| r[j]).sum()).collect::<Vec<_>>());
            prop_assert!((mutual_information(&t) - hx.min(hy)).abs() < 1e-9);
        }

        #[test]
        fn percentile_is_permutation_invariant(seed in 0u64..1000, idx in 0usize..64) {
            let mut rng = rng::stream(seed, &[purpose::TEST]);
            let pred: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
            let mut pool = enumerate_images();
            let base = percentile_rank(&pred, pool[idx], &pool).unwrap();
            let img = pool[idx];
            rng::shuffle(&mut pool, &mut rng);
            prop_assert_eq!(base, percentile_rank(&pred, img, &pool).unwrap());
        }

        #[test]
        fn moving_toward_target_never_hurts(seed in 0u64..1000, idx in 0usize..64) {
            let mut rng = rng::stream(seed, &[purpose::TEST]);
            let start: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect();
            let pool = enumerate_images();
            let y = target_vector(pool[idx]);
            let mut prev = -1.0;
            for step in 0..=20 {
                let a = step as f64 / 20.0;
                let p: Vec<f64> = start.iter().zip(&y.0).map(|(s, t)| s + a * (t - s)).collect();
                let pr = percentile_rank(&p, pool[idx], &pool).unwrap();
                prop_assert!(pr >= prev - 1e-12);
                prev = pr;
            }
        }

        #[test]
        fn single_rank_mrr(r in 1usize..1000) {
            prop_assert_eq!(ranking_metrics(&[r], &[5]).unwrap().mrr, 1.0 / r as f64);
        }
    }
}
