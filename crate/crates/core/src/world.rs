//! The enumerable synthetic world: three 4-valued attributes, 64 images,
//! 6 ordered attribute-pair tasks and the 144-way prediction space.

use serde::{Deserialize, Serialize};

use crate::error::{EdlError, Result};

pub const NUM_ATTRIBUTES: usize = 3;
pub const VALUES_PER_ATTRIBUTE: usize = 4;
pub const NUM_VALUES: usize = NUM_ATTRIBUTES * VALUES_PER_ATTRIBUTE;
pub const NUM_IMAGES: usize = 64;
pub const NUM_TASKS: usize = 6;
pub const NUM_INSTANCES: usize = NUM_IMAGES * NUM_TASKS;
pub const NUM_PAIRS: usize = NUM_VALUES * NUM_VALUES;
/// Dimension of [`TargetVector`].
pub const TARGET_DIM: usize = NUM_VALUES;

const ATTRIBUTE_NAMES: [&str; NUM_ATTRIBUTES] = ["shape", "color", "style"];
const VALUE_NAMES: [[&str; VALUES_PER_ATTRIBUTE]; NUM_ATTRIBUTES] = [
    ["square", "triangle", "circle", "star"],
    ["purple", "green", "blue", "red"],
    ["filled", "dotted", "dashed", "solid"],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeKind(u8);

impl AttributeKind {
    pub const SHAPE: AttributeKind = AttributeKind(0);
    pub const COLOR: AttributeKind = AttributeKind(1);
    pub const STYLE: AttributeKind = AttributeKind(2);

    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_ATTRIBUTES {
            Ok(AttributeKind(index as u8))
        } else {
            Err(EdlError::OutOfRange {
                what: "attribute kind",
                value: index as i64,
                max: NUM_ATTRIBUTES as i64 - 1,
            })
        }
    }

    pub fn all() -> [AttributeKind; NUM_ATTRIBUTES] {
        [Self::SHAPE, Self::COLOR, Self::STYLE]
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        ATTRIBUTE_NAMES[self.index()]
    }

    pub fn parse(name: &str) -> Option<Self> {
        ATTRIBUTE_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name.trim()))
            .map(|i| AttributeKind(i as u8))
    }
}

/// One of the 12 attribute values, e.g. `color = purple`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeValue {
    kind: AttributeKind,
    value_index: u8,
}

impl AttributeValue {
    pub fn new(kind: AttributeKind, value_index: usize) -> Result<Self> {
        if value_index >= VALUES_PER_ATTRIBUTE {
            return Err(EdlError::OutOfRange {
                what: "attribute value",
                value: value_index as i64,
                max: VALUES_PER_ATTRIBUTE as i64 - 1,
            });
        }
        Ok(AttributeValue {
            kind,
            value_index: value_index as u8,
        })
    }

    pub fn from_global(global_index: usize) -> Result<Self> {
        if global_index >= NUM_VALUES {
            return Err(EdlError::OutOfRange {
                what: "global value index",
                value: global_index as i64,
                max: NUM_VALUES as i64 - 1,
            });
        }
        Self::new(
            AttributeKind::new(global_index / VALUES_PER_ATTRIBUTE)?,
            global_index % VALUES_PER_ATTRIBUTE,
        )
    }

    pub fn kind(self) -> AttributeKind {
        self.kind
    }

    pub fn value_index(self) -> usize {
        self.value_index as usize
    }

    pub fn global_index(self) -> usize {
        VALUES_PER_ATTRIBUTE * self.kind.index() + self.value_index()
    }

    pub fn name(self) -> &'static str {
        VALUE_NAMES[self.kind.index()][self.value_index()]
    }

    /// Parses a display label ("purple") or a global index ("4").
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Ok(i) = text.parse::<usize>() {
            return Self::from_global(i).ok();
        }
        for kind in AttributeKind::all() {
            for (v, name) in VALUE_NAMES[kind.index()].iter().enumerate() {
                if name.eq_ignore_ascii_case(text) {
                    return Self::new(kind, v).ok();
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SynthImage {
    values: [u8; NUM_ATTRIBUTES],
}

impl SynthImage {
    /// Builds an image from value indices ordered (shape, color, style).
    pub fn new(values: [usize; NUM_ATTRIBUTES]) -> Result<Self> {
        let mut out = [0u8; NUM_ATTRIBUTES];
        for (slot, &v) in out.iter_mut().zip(values.iter()) {
            if v >= VALUES_PER_ATTRIBUTE {
                return Err(EdlError::OutOfRange {
                    what: "attribute value",
                    value: v as i64,
                    max: VALUES_PER_ATTRIBUTE as i64 - 1,
                });
            }
            *slot = v as u8;
        }
        Ok(SynthImage { values: out })
    }

    pub fn from_id(id: usize) -> Result<Self> {
        if id >= NUM_IMAGES {
            return Err(EdlError::OutOfRange {
                what: "image id",
                value: id as i64,
                max: NUM_IMAGES as i64 - 1,
            });
        }
        let b = VALUES_PER_ATTRIBUTE;
        Self::new([id / (b * b), (id / b) % b, id % b])
    }

    /// Mixed-radix id with shape as the most significant digit.
    pub fn id(self) -> usize {
        self.values
            .iter()
            .fold(0, |acc, &v| acc * VALUES_PER_ATTRIBUTE + v as usize)
    }

    pub fn value(self, kind: AttributeKind) -> AttributeValue {
        AttributeValue {
            kind,
            value_index: self.values[kind.index()],
        }
    }

    pub fn values(self) -> [AttributeValue; NUM_ATTRIBUTES] {
        AttributeKind::all().map(|k| self.value(k))
    }

    pub fn describe(self) -> String {
        self.values()
            .iter()
            .map(|v| v.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// An ordered pair of distinct attributes Q-bot must report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskSpec {
    first: AttributeKind,
    second: AttributeKind,
}

impl TaskSpec {
    pub fn new(first: AttributeKind, second: AttributeKind) -> Result<Self> {
        if first == second {
            return Err(EdlError::Contract(format!(
                "task attributes must differ, got {} twice",
                first.name()
            )));
        }
        Ok(TaskSpec { first, second })
    }

    /// Tasks are numbered by their first attribute, then by the second.
    pub fn from_id(id: usize) -> Result<Self> {
        if id >= NUM_TASKS {
            return Err(EdlError::OutOfRange {
                what: "task id",
                value: id as i64,
                max: NUM_TASKS as i64 - 1,
            });
        }
        let first = id / (NUM_ATTRIBUTES - 1);
        let mut second = id % (NUM_ATTRIBUTES - 1);
        if second >= first {
            second += 1;
        }
        Self::new(AttributeKind::new(first)?, AttributeKind::new(second)?)
    }

    pub fn id(self) -> usize {
        let f = self.first.index();
        let s = self.second.index();
        f * (NUM_ATTRIBUTES - 1) + if s > f { s - 1 } else { s }
    }

    pub fn first(self) -> AttributeKind {
        self.first
    }

    pub fn second(self) -> AttributeKind {
        self.second
    }

    pub fn attributes(self) -> [AttributeKind; 2] {
        [self.first, self.second]
    }

    /// The attribute not asked for by this task.
    pub fn remaining(self) -> AttributeKind {
        AttributeKind::all()
            .into_iter()
            .find(|&k| k != self.first && k != self.second)
            .expect("three attributes, two used")
    }

    pub fn describe(self) -> String {
        format!("({}, {})", self.first.name(), self.second.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub image: SynthImage,
    pub task: TaskSpec,
}

impl Instance {
    pub fn new(image: SynthImage, task: TaskSpec) -> Self {
        Instance { image, task }
    }

    /// Image-major index in `0..384`.
    pub fn index(&self) -> usize {
        self.image.id() * NUM_TASKS + self.task.id()
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_INSTANCES {
            return Err(EdlError::OutOfRange {
                what: "instance index",
                value: index as i64,
                max: NUM_INSTANCES as i64 - 1,
            });
        }
        Ok(Instance {
            image: SynthImage::from_id(index / NUM_TASKS)?,
            task: TaskSpec::from_id(index % NUM_TASKS)?,
        })
    }

    /// The unique pair that wins this instance.
    pub fn correct_pair(&self) -> PredictionPair {
        PredictionPair::new(
            self.image.value(self.task.first),
            self.image.value(self.task.second),
        )
    }
}

/// Concatenated one-hot attribute blocks; the regression target of Q-bot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetVector(pub Vec<f64>);

impl TargetVector {
    pub fn zeros(dim: usize) -> Self {
        TargetVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One of the 144 ordered value pairs Q-bot can output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredictionPair {
    first: AttributeValue,
    second: AttributeValue,
}

impl PredictionPair {
    pub fn new(first: AttributeValue, second: AttributeValue) -> Self {
        PredictionPair { first, second }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_PAIRS {
            return Err(EdlError::OutOfRange {
                what: "prediction pair index",
                value: index as i64,
                max: NUM_PAIRS as i64 - 1,
            });
        }
        Ok(PredictionPair {
            first: AttributeValue::from_global(index / NUM_VALUES)?,
            second: AttributeValue::from_global(index % NUM_VALUES)?,
        })
    }

    pub fn index(self) -> usize {
        NUM_VALUES * self.first.global_index() + self.second.global_index()
    }

    pub fn first(self) -> AttributeValue {
        self.first
    }

    pub fn second(self) -> AttributeValue {
        self.second
    }

    pub fn describe(self) -> String {
        format!("({}, {})", self.first.name(), self.second.name())
    }
}

pub fn enumerate_images() -> Vec<SynthImage> {
    (0..NUM_IMAGES)
        .map(|id| SynthImage::from_id(id).expect("id in range"))
        .collect()
}

pub fn enumerate_tasks() -> Vec<TaskSpec> {
    (0..NUM_TASKS)
        .map(|id| TaskSpec::from_id(id).expect("id in range"))
        .collect()
}

/// All image x task combinations, image-major.
pub fn enumerate_instances() -> Vec<Instance> {
    let tasks = enumerate_tasks();
    enumerate_images()
        .into_iter()
        .flat_map(|image| tasks.iter().map(move |&task| Instance::new(image, task)))
        .collect()
}

pub fn target_vector(image: SynthImage) -> TargetVector {
    let mut v = vec![0.0; TARGET_DIM];
    for value in image.values() {
        v[value.global_index()] = 1.0;
    }
    TargetVector(v)
}

pub fn check_prediction(instance: &Instance, pair: PredictionPair) -> bool {
    pair.first == instance.image.value(instance.task.first)
        && pair.second == instance.image.value(instance.task.second)
}

/// Image whose target is nearest to `prediction`; lowest id wins ties.
///
/// With one-hot targets this is the per-block argmax.
pub fn nearest_image(prediction: &[f64]) -> SynthImage {
    let mut values = [0usize; NUM_ATTRIBUTES];
    for (k, slot) in values.iter_mut().enumerate() {
        let block = &prediction[k * VALUES_PER_ATTRIBUTE..(k + 1) * VALUES_PER_ATTRIBUTE];
        let mut best = 0;
        for (i, &x) in block.iter().enumerate() {
            if x > block[best] {
                best = i;
            }
        }
        *slot = best;
    }
    SynthImage::new(values).expect("argmax in range")
}

/// CSV dump of images (`id,shape,color,style`).
pub fn images_csv() -> String {
    let mut out = String::from("id,shape,color,style\n");
    for image in enumerate_images() {
        let [s, c, y] = image.values();
        out.push_str(&format!(
            "{},{},{},{}\n",
            image.id(),
            s.name(),
            c.name(),
            y.name()
        ));
    }
    out
}

/// CSV dump of instances (`image_id,task_id`).
pub fn instances_csv() -> String {
    let mut out = String::from("image_id,task_id\n");
    for inst in enumerate_instances() {
        out.push_str(&format!("{},{}\n", inst.image.id(), inst.task.id()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn images_enumerate_in_canonical_order() {
        let images = enumerate_images();
        assert_eq!(images.len(), 64);
        assert_eq!(images[0], SynthImage::new([0, 0, 0]).unwrap());
        assert_eq!(images[0].id(), 0);
        assert_eq!(images[63], SynthImage::new([3, 3, 3]).unwrap());
        assert_eq!(images[63].id(), 63);
        let distinct: HashSet<_> = images.iter().collect();
        assert_eq!(distinct.len(), 64);
        for (i, img) in images.iter().enumerate() {
            assert_eq!(img.id(), i);
        }
    }

    #[test]
    fn instances_are_image_major() {
        let inst = enumerate_instances();
        assert_eq!(inst.len(), 384);
        assert_eq!(inst[0].image.id(), 0);
        assert_eq!(inst[0].task.id(), 0);
        let distinct: HashSet<_> = inst.iter().map(|i| (i.image, i.task)).collect();
        assert_eq!(distinct.len(), 384);
        for (i, x) in inst.iter().enumerate() {
            assert_eq!(x.index(), i);
            assert_eq!(Instance::from_index(i).unwrap(), *x);
        }
    }

    #[test]
    fn tasks_are_the_six_ordered_pairs() {
        let tasks = enumerate_tasks();
        let pairs: HashSet<_> = tasks
            .iter()
            .map(|t| (t.first().index(), t.second().index()))
            .collect();
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|(a, b)| a != b));
        assert!(TaskSpec::new(AttributeKind::COLOR, AttributeKind::COLOR).is_err());
    }

    #[test]
    fn value_and_pair_indices() {
        for g in 0..NUM_VALUES {
            let v = AttributeValue::from_global(g).unwrap();
            assert_eq!(v.global_index(), 4 * v.kind().index() + v.value_index());
        }
        for p in 0..NUM_PAIRS {
            assert_eq!(PredictionPair::from_index(p).unwrap().index(), p);
        }
        assert!(PredictionPair::from_index(144).is_err());
    }

    #[test]
    fn target_vector_is_three_one_hot_blocks() {
        // square (shape 0), purple (color 0), filled (style 0)
        let img = SynthImage::new([0, 0, 0]).unwrap();
        let t = target_vector(img);
        let ones: Vec<usize> = (0..12).filter(|&i| t.0[i] == 1.0).collect();
        assert_eq!(ones, vec![0, 4, 8]);
        for img in enumerate_images() {
            let t = target_vector(img);
            assert_eq!(t.0.iter().map(|x| x * x).sum::<f64>(), 3.0);
        }
    }

    #[test]
    fn pairwise_target_distances_brute_force() {
        let images = enumerate_images();
        let mut seen = HashSet::new();
        for a in &images {
            for b in &images {
                if a == b {
                    continue;
                }
                let d = sq_dist(&target_vector(*a).0, &target_vector(*b).0);
                seen.insert(d as i64);
                assert!(d == 2.0 || d == 4.0 || d == 6.0, "distance {d}");
            }
        }
        assert_eq!(seen, HashSet::from([2, 4, 6]));
        let targets: HashSet<Vec<i64>> = images
            .iter()
            .map(|i| target_vector(*i).0.iter().map(|&x| x as i64).collect())
            .collect();
        assert_eq!(targets.len(), 64);
    }

    #[test]
    fn check_prediction_respects_order() {
        let purple = AttributeValue::parse("purple").unwrap();
        let square = AttributeValue::parse("square").unwrap();
        let image = SynthImage::new([square.value_index(), purple.value_index(), 0]).unwrap();
        let task = TaskSpec::new(AttributeKind::SHAPE, AttributeKind::COLOR).unwrap();
        let inst = Instance::new(image, task);
        assert!(check_prediction(&inst, PredictionPair::new(square, purple)));
        assert!(!check_prediction(
            &inst,
            PredictionPair::new(purple, square)
        ));
    }

    #[test]
    fn exactly_one_pair_wins_every_instance() {
        for inst in enumerate_instances() {
            let wins = (0..NUM_PAIRS)
                .filter(|&p| check_prediction(&inst, PredictionPair::from_index(p).unwrap()))
                .count();
            assert_eq!(wins, 1);
            assert!(check_prediction(&inst, inst.correct_pair()));
        }
    }

    #[test]
    fn two_rounds_of_answers_cannot_name_an_image() {
        let answer_vocab: usize = 4;
        let rounds = 2;
        assert!(answer_vocab.pow(rounds) < NUM_IMAGES);
        assert_eq!(answer_vocab.pow(rounds), 16);
    }

    #[test]
    fn nearest_image_inverts_targets() {
        for img in enumerate_images() {
            assert_eq!(nearest_image(&target_vector(img).0), img);
        }
        assert_eq!(nearest_image(&[0.0; 12]).id(), 0);
    }

    #[test]
    fn csv_dumps_have_expected_rows() {
        assert_eq!(images_csv().lines().count(), 65);
        assert_eq!(instances_csv().lines().count(), 385);
        assert!(images_csv()
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("0,square,purple,filled"));
    }
}
