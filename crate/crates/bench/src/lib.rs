//! Seeded inputs shared by the benchmarks.

use judgekit_core::{EvaluationItem, ReliabilityMatrix, ScoreVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DOMAIN: [i64; 5] = [-2, -1, 0, 1, 2];

/// `units` x `raters` matrix over the five-point scale with roughly
/// `missing` of the cells left empty.
pub fn random_matrix(units: usize, raters: usize, missing: f64, seed: u64) -> ReliabilityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ReliabilityMatrix::new(
        (0..units).map(|u| format!("u{u}")).collect(),
        (0..raters).map(|r| format!("r{r}")).collect(),
        DOMAIN.to_vec(),
    );
    for u in 0..units {
        for r in 0..raters {
            if !rng.random_bool(missing) {
                m.set(u, r, DOMAIN[rng.random_range(0..DOMAIN.len())])
                    .expect("value in domain");
            }
        }
    }
    m
}

/// Items with a few sentences of filler text and random valid scores.
pub fn labeled_items(n: usize, seed: u64) -> Vec<(EvaluationItem, ScoreVector)> {
    const WORDS: [&str; 12] = [
        "the", "station", "opens", "early", "on", "weekdays", "and", "trains", "leave", "every",
        "ten", "minutes",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = |len: usize| {
        (0..len)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let items: Vec<EvaluationItem> = (0..n)
        .map(|i| {
            EvaluationItem::new(
                format!("q{}a{}", i / 7, i % 7),
                text(60),
                text(12),
                text(40),
            )
        })
        .collect();
    items
        .into_iter()
        .map(|item| {
            let scores = (0..6)
                .map(|_| rng.random_range(-2..=2))
                .collect::<Vec<i32>>();
            (item, ScoreVector::new(scores))
        })
        .collect()
}
