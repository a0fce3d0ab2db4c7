//! Generated datasets for capacity checks and pipeline fuzzing.

use std::ops::Range;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Instance, NUM_OPTIONS};

const FILLER_SYLLABLES: &[&str] = &["ba", "ko", "mi", "tu", "re", "sa", "no", "li"];
const ANSWER_SYLLABLES: &[&str] = &["zor", "vex", "qua", "jin", "fyd", "wum"];

fn words(syllables: &[&str]) -> Vec<String> {
    syllables
        .iter()
        .flat_map(|a| syllables.iter().map(move |b| format!("{a}{b}")))
        .collect()
}

/// Pseudo-words used as passage filler.
pub fn filler_words() -> Vec<String> {
    words(FILLER_SYLLABLES)
}

/// Pseudo-words used as candidate answers; disjoint from the filler words.
pub fn answer_words() -> Vec<String> {
    words(ANSWER_SYLLABLES)
}

/// Copy task: exactly one candidate occurs in the passage, and it is the
/// gold answer.
pub fn copy_task(n: usize, passage_len: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = filler_words();
    let answers = answer_words();
    (0..n)
        .map(|i| {
            let candidates: Vec<String> = answers.choose_multiple(&mut rng, NUM_OPTIONS).cloned().collect();
            let label = rng.random_range(0..NUM_OPTIONS);
            let mut passage: Vec<String> = (0..passage_len.saturating_sub(1))
                .map(|_| filler.choose(&mut rng).expect("non-empty").clone())
                .collect();
            let at = rng.random_range(0..=passage.len());
            passage.insert(at, candidates[label].clone());
            Instance {
                id: format!("copy-{i}"),
                passage: passage.join(" ") + " .",
                question: "the answer is @placeholder .".into(),
                candidates,
                label: Some(label),
                definitions: None,
                pos: None,
            }
        })
        .collect()
}

fn sentence<R: Rng>(rng: &mut R, pool: &[String], lengths: Range<usize>) -> String {
    let len = rng.random_range(lengths);
    let mut out: Vec<String> = (0..len)
        .map(|_| pool.choose(rng).expect("non-empty").clone())
        .collect();
    if len > 3 {
        let k = rng.random_range(1..len);
        out[k] = [",", ";", "1.5", "$", "'s"].choose(rng).expect("non-empty").to_string();
    }
    out.join(" ")
}

/// Word-count ranges used by [`random_instances_shaped`].
#[derive(Debug, Clone)]
pub struct Shape {
    pub passage: Range<usize>,
    /// Words on each side of the placeholder.
    pub context: Range<usize>,
    pub definition: Range<usize>,
}

impl Shape {
    /// Lengths well past typical sequence budgets.
    pub fn wide() -> Self {
        Self {
            passage: 1..400,
            context: 0..20,
            definition: 0..120,
        }
    }

    /// Short enough that every option keeps its candidate within 32 tokens.
    pub fn compact() -> Self {
        Self {
            passage: 4..16,
            context: 0..4,
            definition: 0..5,
        }
    }
}

/// Structurally varied labeled instances with random lengths, punctuation,
/// multi-word candidates and optional definitions.
pub fn random_instances(n: usize, seed: u64) -> Vec<Instance> {
    random_instances_shaped(n, seed, &Shape::wide())
}

pub fn random_instances_shaped(n: usize, seed: u64, shape: &Shape) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = filler_words();
    pool.extend(answer_words());
    (0..n)
        .map(|i| {
            let passage = sentence(&mut rng, &pool, shape.passage.clone());
            let before = sentence(&mut rng, &pool, shape.context.clone());
            let after = sentence(&mut rng, &pool, shape.context.clone());
            let question = format!("{before} @placeholder {after}");
            let candidates: Vec<String> = (0..NUM_OPTIONS)
                .map(|_| sentence(&mut rng, &pool, 1..3))
                .collect();
            let definitions = rng.random_bool(0.7).then(|| {
                (0..NUM_OPTIONS)
                    .map(|_| sentence(&mut rng, &pool, shape.definition.clone()))
                    .collect()
            });
            let mut order: Vec<usize> = (0..NUM_OPTIONS).collect();
            order.shuffle(&mut rng);
            Instance {
                id: format!("rand-{i}"),
                passage,
                question,
                candidates,
                label: Some(order[0]),
                definitions,
                pos: None,
            }
        })
        .collect()
}
