//! Training-data augmentation: instruction paraphrasing, component
//! permutation and token dropout, followed by a seeded train/test split.
//!
//! Every random choice comes from a ChaCha8 stream seeded per variant with
//! SHA-256(seed, example id, variant index), so results do not depend on
//! thread scheduling or on how many other items are in the batch.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompt::{
    render_completion, render_prompt, unique_ids, Component, PromptTemplate, TrainingExample,
};
use crate::types::{EvaluationItem, Rubric, ScoreVector};

/// All six orders of the three prompt components.
pub const COMPONENT_ORDERS: [[Component; 3]; 6] = {
    use Component::{Answer as A, Context as C, Question as Q};
    [
        [C, Q, A],
        [C, A, Q],
        [Q, C, A],
        [Q, A, C],
        [A, C, Q],
        [A, Q, C],
    ]
};

/// Built-in instruction variants. Entry 0 is the canonical wording; the rest
/// are hand-written rewordings that keep every criterion name and the scale.
pub fn builtin_paraphrase_pool() -> Vec<String> {
    const CRITERIA: &str =
        "Conciseness, Interpretability, Completeness, Clarity, Accuracy, and Relevance";
    vec![
        crate::prompt::CANONICAL_INSTRUCTION.to_owned(),
        format!(
            "You are given a context, a question, and an answer.\n\
             Evaluate the answer and score it on a rubrics of 6 criterias, including {CRITERIA}, on a scale of -2 to 2. \n\
             Just output 6 numbers, and do not provide any other explanation."
        ),
        format!(
            "You will be provided with a context, a question, and an answer.\n\
             Assess the answer and rate it on 6 criteria, namely {CRITERIA}, on a scale of -2 to 2.\n\
             Only output 6 numbers, and do not give any other explanation."
        ),
        format!(
            "You are shown a context, a question, and an answer.\n\
             Score the answer on 6 rubric criteria, including {CRITERIA}, using a scale from -2 to 2.\n\
             Output just 6 numbers and no further explanation."
        ),
        format!(
            "Below are a context, a question, and an answer.\n\
             Evaluate the answer against 6 criteria, including {CRITERIA}, scoring each on a scale of -2 to 2.\n\
             Just output 6 numbers without any other explanation."
        ),
        format!(
            "Given a context, a question, and an answer, evaluate the answer.\n\
             Score it on 6 criteria, including {CRITERIA}, on a scale of -2 to 2.\n\
             Output only 6 numbers, and provide no other explanation."
        ),
    ]
}

/// Reads a paraphrase pool: one template per non-blank line, with `\n`
/// standing for a line break inside a template.
pub fn load_paraphrase_pool(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let pool: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.replace("\\n", "\n"))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Instruction variants; empty disables paraphrasing.
    pub paraphrase_pool: Vec<String>,
    pub permute_components: bool,
    pub dropout_probability: f64,
    pub variants_per_item: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            paraphrase_pool: builtin_paraphrase_pool(),
            permute_components: true,
            dropout_probability: 0.1,
            variants_per_item: 3,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability {} is outside [0, 1]",
                self.dropout_probability
            )));
        }
        Ok(())
    }
}

fn choose_paraphrase<R: Rng + ?Sized>(pool: &[String], rng: &mut R) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(rng.random_range(0..pool.len()))
}

/// Replaces the instruction with a uniformly drawn pool entry.
pub fn paraphrase<R: Rng + ?Sized>(
    t: &PromptTemplate,
    pool: &[String],
    rng: &mut R,
) -> Result<PromptTemplate> {
    let i = choose_paraphrase(pool, rng)?;
    Ok(t.clone().with_instruction(pool[i].clone()))
}

/// Replaces the component order with a uniformly random permutation.
pub fn permute_components<R: Rng + ?Sized>(t: &PromptTemplate, rng: &mut R) -> PromptTemplate {
    let order = COMPONENT_ORDERS[rng.random_range(0..COMPONENT_ORDERS.len())];
    t.clone().with_order(order)
}

fn check_spans(text: &str, spans: &[Range<usize>]) -> Result<()> {
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.start > s.end || s.end > text.len() {
            return Err(Error::InvalidSpans(format!("span {s:?} out of bounds")));
        }
        if i > 0 && s.start < prev_end {
            return Err(Error::InvalidSpans(format!(
                "span {s:?} overlaps its predecessor"
            )));
        }
        if !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(Error::InvalidSpans(format!(
                "span {s:?} splits a character"
            )));
        }
        prev_end = s.end;
    }
    Ok(())
}

/// Drops whitespace tokens of one unprotected region. Tokens touching a
/// protected neighbour without intervening whitespace are kept.
fn drop_region<R: Rng + ?Sized>(
    region: &str,
    glued_left: bool,
    glued_right: bool,
    p: f64,
    rng: &mut R,
) -> String {
    let core = region.trim();
    if core.is_empty() {
        return region.to_owned();
    }
    let lead = &region[..region.len() - region.trim_start().len()];
    let trail = &region[region.trim_end().len()..];
    let tokens: Vec<&str> = core.split_whitespace().collect();
    let last = tokens.len() - 1;
    let mut kept = Vec::with_capacity(tokens.len());
    let mut mutated = false;
    for (i, tok) in tokens.iter().enumerate() {
        let glued = (i == 0 && glued_left && lead.is_empty())
            || (i == last && glued_right && trail.is_empty());
        if !glued && rng.random_bool(p) {
            mutated = true;
        } else {
            kept.push(*tok);
        }
    }
    if !mutated {
        return region.to_owned();
    }
    format!("{lead}{}{trail}", kept.join(" "))
}

/// Token dropout that also reports where the protected spans ended up.
pub fn token_dropout_with_spans<R: Rng + ?Sized>(
    text: &str,
    p: f64,
    protected_spans: &[Range<usize>],
    rng: &mut R,
) -> Result<(String, Vec<Range<usize>>)> {
    check_spans(text, protected_spans)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "dropout probability {p} is outside [0, 1]"
        )));
    }
    let mut out = String::with_capacity(text.len());
    let mut spans = Vec::with_capacity(protected_spans.len());
    let starts_solid = |s: &str| s.chars().next().is_some_and(|c| !c.is_whitespace());
    let ends_solid = |s: &str| s.chars().next_back().is_some_and(|c| !c.is_whitespace());
    let mut cursor = 0;
    let mut left_solid = false;
    for s in protected_spans {
        let region = &text[cursor..s.start];
        let protected = &text[s.clone()];
        out.push_str(&drop_region(
            region,
            left_solid,
            starts_solid(protected),
            p,
            rng,
        ));
        let start = out.len();
        out.push_str(protected);
        spans.push(start..out.len());
        cursor = s.end;
        if !protected.is_empty() {
            left_solid = ends_solid(protected);
        } else if !region.is_empty() {
            left_solid = false;
        }
    }
    out.push_str(&drop_region(&text[cursor..], left_solid, false, p, rng));
    Ok((out, spans))
}

/// Removes each whitespace token lying wholly outside the protected spans with
/// probability `p`. Mutated regions are rejoined with single spaces (leading
/// and trailing whitespace of the region is kept); protected spans are copied
/// byte for byte.
pub fn token_dropout<R: Rng + ?Sized>(
    rendered_prompt: &str,
    p: f64,
    protected_spans: &[Range<usize>],
    rng: &mut R,
) -> Result<String> {
    token_dropout_with_spans(rendered_prompt, p, protected_spans, rng).map(|(t, _)| t)
}

/// One output row of [`augment_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedExample {
    /// Unique across the augmented dataset.
    pub example_id: String,
    pub item: EvaluationItem,
    pub scores: ScoreVector,
    /// Final prompt text after every transform; ends with the completion lead.
    pub prompt: String,
}

impl AugmentedExample {
    pub fn to_training_example(&self) -> TrainingExample {
        TrainingExample {
            id: self.example_id.clone(),
            prompt: self.prompt.clone(),
            completion: render_completion(&self.scores),
        }
    }
}

/// Key under which items are kept together by a group-aware split.
pub trait SplitGroup {
    fn split_group(&self) -> &str;
}

impl SplitGroup for AugmentedExample {
    fn split_group(&self) -> &str {
        self.item.group_id()
    }
}

impl SplitGroup for EvaluationItem {
    fn split_group(&self) -> &str {
        self.group_id()
    }
}

fn variant_rng(seed: u64, example_id: &str, variant: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((example_id.len() as u64).to_le_bytes());
    h.update(example_id.as_bytes());
    h.update((variant as u64).to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn make_variant(
    base_example_id: &str,
    item: &EvaluationItem,
    scores: &ScoreVector,
    base: &PromptTemplate,
    rubric: &Rubric,
    cfg: &AugmentationConfig,
    k: usize,
) -> Result<AugmentedExample> {
    let mut rng = variant_rng(cfg.seed, base_example_id, k);
    let mut template = base.clone();
    let mut transforms = Vec::new();
    if !cfg.paraphrase_pool.is_empty() {
        let i = choose_paraphrase(&cfg.paraphrase_pool, &mut rng)?;
        template = template.with_instruction(cfg.paraphrase_pool[i].clone());
        transforms.push(format!("paraphrase:{i}"));
    }
    if cfg.permute_components {
        template = permute_components(&template, &mut rng);
        transforms.push(format!("permute:{}", template.order_tag()));
    }
    let rendered = render_prompt(&template, item, rubric)?;
    let prompt = if cfg.dropout_probability > 0.0 {
        transforms.push(format!("dropout:{}", cfg.dropout_probability));
        token_dropout(
            &rendered.text,
            cfg.dropout_probability,
            &rendered.protected_spans,
            &mut rng,
        )?
    } else {
        rendered.text
    };
    let example_id = format!("{base_example_id}#aug{k}");
    let variant = EvaluationItem {
        item_id: example_id.clone(),
        base_id: Some(item.item_id.clone()),
        transforms,
        ..item.clone()
    };
    Ok(AugmentedExample {
        example_id,
        item: variant,
        scores: scores.clone(),
        prompt,
    })
}

/// Emits, for every input pair, the untouched original followed by
/// `variants_per_item` augmented copies. Labels are copied verbatim.
///
/// The same item may appear several times (one pair per human rater); repeated
/// ids get a `~k` suffix in `example_id`, the item itself is left unchanged.
pub fn augment_dataset(
    items: &[(EvaluationItem, ScoreVector)],
    base: &PromptTemplate,
    rubric: &Rubric,
    cfg: &AugmentationConfig,
) -> Result<Vec<AugmentedExample>> {
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    let ids = unique_ids(items.iter().map(|(i, _)| i.item_id.as_str()));
    let groups: Vec<Vec<AugmentedExample>> = items
        .par_iter()
        .zip(ids.par_iter())
        .map(|((item, scores), id)| {
            item.validate()?;
            rubric.validate(scores)?;
            let original = AugmentedExample {
                example_id: id.clone(),
                item: item.clone(),
                scores: scores.clone(),
                prompt: render_prompt(base, item, rubric)?.text,
            };
            let mut out = Vec::with_capacity(cfg.variants_per_item + 1);
            out.push(original);
            for k in 1..=cfg.variants_per_item {
                out.push(make_variant(id, item, scores, base, rubric, cfg, k)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}

/// Seeded shuffle-and-cut split. The train side receives `floor(ratio · n)`
/// items. With `group_aware`, whole groups (see [`SplitGroup`]) are assigned
/// greedily in shuffled order so no group straddles the split.
pub fn split_train_test<T: SplitGroup + Clone>(
    items: &[T],
    ratio: f64,
    seed: u64,
    group_aware: bool,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio {ratio} must lie in (0, 1)"
        )));
    }
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // small epsilon so 0.9 · 100 lands on 90
    let n_train = ((ratio * items.len() as f64) + 1e-9).floor() as usize;

    if !group_aware {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
        let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
        return Ok((train, test));
    }

    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, it) in items.iter().enumerate() {
        let g = it.split_group();
        let slot = *index.entry(g).or_insert_with(|| {
            groups.push((g, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(i);
    }
    groups.shuffle(&mut rng);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, members) in groups {
        let side = if train.len() + members.len() <= n_train {
            &mut train
        } else {
            &mut test
        };
        side.extend(members.iter().map(|&i| items[i].clone()));
    }
    Ok((train, test))
}
