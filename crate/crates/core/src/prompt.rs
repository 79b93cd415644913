//! Prompt rendering, completion rendering and completion parsing.
//!
//! A rendered rubric prompt has the layout
//!
//! ```text
//! <instruction>
//!
//! CONTEXT: <context>
//!
//! QUESTION: <question>
//!
//! ANSWER: <answer>
//!
//! SCORES:
//! The 6 scores are: <completion>
//! ```
//!
//! with the three labeled blocks in the template's component order. The prompt
//! always ends with the completion lead, and a training completion is the
//! space-separated score list that follows it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agreement::Prediction;
use crate::error::{Error, Result};
use crate::types::{EvaluationItem, Rubric, ScoreVector};

/// Instruction wording used for evaluation and as paraphrase pool entry 0.
pub const CANONICAL_INSTRUCTION: &str = "You will be given a context, a question, and an answer.\n\
Evaluate the answer and score it on a rubrics of 6 criterias, including Conciseness, Interpretability, Completeness, Clarity, Accuracy, and Relevance, on a scale of -2 to 2. \n\
Just output 6 numbers, and do not provide any other explanation.";

pub const DEFAULT_COMPLETION_LEAD: &str = "SCORES:\nThe 6 scores are: ";

/// Labeled input block of a rubric prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Component {
    Context,
    Question,
    Answer,
}

impl Component {
    pub const CANONICAL_ORDER: [Component; 3] =
        [Component::Context, Component::Question, Component::Answer];

    pub fn label(self) -> &'static str {
        match self {
            Component::Context => "CONTEXT:",
            Component::Question => "QUESTION:",
            Component::Answer => "ANSWER:",
        }
    }

    pub fn initial(self) -> char {
        match self {
            Component::Context => 'C',
            Component::Question => 'Q',
            Component::Answer => 'A',
        }
    }

    fn payload(self, item: &EvaluationItem) -> &str {
        match self {
            Component::Context => &item.context,
            Component::Question => &item.question,
            Component::Answer => &item.answer,
        }
    }
}

/// Instruction text with named slots, an order for the three input blocks and
/// the fixed completion lead.
///
/// Recognized slots in `instruction_text`: `{criteria}` (criterion names,
/// comma-separated, rubric order), `{n}` (criterion count), `{scale_min}`,
/// `{scale_max}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction_text: String,
    pub component_order: [Component; 3],
    pub completion_lead: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::canonical()
    }
}

impl PromptTemplate {
    pub fn canonical() -> Self {
        Self {
            instruction_text: CANONICAL_INSTRUCTION.to_owned(),
            component_order: Component::CANONICAL_ORDER,
            completion_lead: DEFAULT_COMPLETION_LEAD.to_owned(),
        }
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction_text = instruction.into();
        self
    }

    pub fn with_order(mut self, order: [Component; 3]) -> Self {
        self.component_order = order;
        self
    }

    pub fn order_tag(&self) -> String {
        self.component_order.iter().map(|c| c.initial()).collect()
    }

    fn check_order(&self) -> Result<()> {
        let mut sorted = self.component_order;
        sorted.sort();
        if sorted != Component::CANONICAL_ORDER {
            return Err(Error::InvalidConfig(format!(
                "component order {} is not a permutation of CONTEXT, QUESTION, ANSWER",
                self.order_tag()
            )));
        }
        Ok(())
    }
}

/// A fully rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    /// Character (not byte) offset where the completion starts; always the
    /// character length of `text`.
    pub boundary_index: usize,
    /// Byte ranges of `text` that augmentation must leave untouched, sorted
    /// and non-overlapping.
    pub protected_spans: Vec<Range<usize>>,
}

impl RenderedPrompt {
    pub fn new(text: String, protected_spans: Vec<Range<usize>>) -> Self {
        let boundary_index = text.chars().count();
        Self {
            text,
            boundary_index,
            protected_spans,
        }
    }
}

fn expand_slots(instruction: &str, rubric: &Rubric) -> Result<String> {
    let mut out = String::with_capacity(instruction.len() + 64);
    let mut rest = instruction;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::MissingSlot(after.chars().take(16).collect()))?;
        let name = &after[..close];
        match name {
            "criteria" => {
                let names: Vec<_> = rubric.criteria().iter().map(|c| c.name.as_str()).collect();
                out.push_str(&names.join(", "));
            }
            "n" => out.push_str(&rubric.len().to_string()),
            "scale_min" => out.push_str(&rubric.scale_min().to_string()),
            "scale_max" => out.push_str(&rubric.scale_max().to_string()),
            other => return Err(Error::MissingSlot(format!("{{{other}}}"))),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn merge_spans(mut spans: Vec<Range<usize>>) -> Vec<Range<usize>> {
    spans.sort_by_key(|r| (r.start, r.end));
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(spans.len());
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    merged
}

/// Renders the rubric evaluation prompt for one item.
///
/// Protected spans cover the block labels, the full answer text, every
/// criterion name in the instruction and the completion lead.
pub fn render_prompt(
    t: &PromptTemplate,
    item: &EvaluationItem,
    rubric: &Rubric,
) -> Result<RenderedPrompt> {
    t.check_order()?;
    for c in Component::CANONICAL_ORDER {
        if c.payload(item).trim().is_empty() {
            return Err(Error::MissingSlot(
                c.label().trim_end_matches(':').to_lowercase(),
            ));
        }
    }
    let instruction = expand_slots(&t.instruction_text, rubric)?;
    for c in rubric.criteria() {
        if !instruction.contains(&c.name) {
            return Err(Error::InvalidConfig(format!(
                "instruction does not name criterion {:?}",
                c.name
            )));
        }
    }

    let mut spans = Vec::new();
    for c in rubric.criteria() {
        spans.extend(
            instruction
                .match_indices(c.name.as_str())
                .map(|(at, m)| at..at + m.len()),
        );
    }
    let mut text = instruction;
    for c in t.component_order {
        text.push_str("\n\n");
        let label_at = text.len();
        text.push_str(c.label());
        spans.push(label_at..text.len());
        text.push(' ');
        let payload_at = text.len();
        text.push_str(c.payload(item));
        if c == Component::Answer {
            spans.push(payload_at..text.len());
        }
    }
    text.push_str("\n\n");
    let lead_at = text.len();
    text.push_str(&t.completion_lead);
    spans.push(lead_at..text.len());
    Ok(RenderedPrompt::new(text, merge_spans(spans)))
}

/// Space-separated scores in rubric order, e.g. `"-1 0 2 1 1 0"`.
pub fn render_completion(v: &ScoreVector) -> String {
    let parts: Vec<String> = v.as_slice().iter().map(i32::to_string).collect();
    parts.join(" ")
}

/// Integers found by [`parse_scores_detailed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedScores {
    pub scores: ScoreVector,
    /// Integers found after the first `rubric.len()`; ignored.
    pub extra_integers: usize,
}

/// Integer literals of `text` in order. Digit runs glued to letters or
/// underscores, and decimals, are not integer literals.
fn integer_literals(text: &str) -> Vec<i64> {
    let bytes = text.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let glued_before = start > 0 && (is_word(bytes[start - 1]) || bytes[start - 1] == b'.');
        let glued_after = i < bytes.len()
            && (is_word(bytes[i])
                || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)));
        if glued_before || glued_after {
            // skip the rest of a decimal such as 1.5
            continue;
        }
        let negative =
            start > 0 && bytes[start - 1] == b'-' && (start < 2 || !is_word(bytes[start - 2]));
        let magnitude = text[start..i].parse::<i64>().unwrap_or(i64::MAX);
        out.push(if negative { -magnitude } else { magnitude });
    }
    out
}

/// Extracts the first `rubric.len()` integers of a judge completion.
///
/// If the completion echoes the lead (`... scores are:`), scanning starts
/// after its last occurrence so the count in the lead is not mistaken for a
/// score.
pub fn parse_scores_detailed(completion: &str, rubric: &Rubric) -> Result<ParsedScores> {
    let lowered = completion.to_ascii_lowercase();
    let body = match lowered.rfind("scores are:") {
        Some(at) => &completion[at + "scores are:".len()..],
        None => completion,
    };
    let ints = integer_literals(body);
    let need = rubric.len();
    if ints.len() < need {
        return Err(Error::TooFewScores {
            expected: need,
            found: ints.len(),
            raw: completion.to_owned(),
        });
    }
    let mut scores = Vec::with_capacity(need);
    for &v in &ints[..need] {
        if v < rubric.scale_min().into() || v > rubric.scale_max().into() {
            return Err(Error::ScoreOutOfRange {
                value: v,
                min: rubric.scale_min(),
                max: rubric.scale_max(),
                raw: completion.to_owned(),
            });
        }
        scores.push(v as i32);
    }
    Ok(ParsedScores {
        scores: ScoreVector::new(scores),
        extra_integers: ints.len() - need,
    })
}

pub fn parse_scores(completion: &str, rubric: &Rubric) -> Result<ScoreVector> {
    parse_scores_detailed(completion, rubric).map(|p| p.scores)
}

/// Case-insensitive whole-word label match. The label occurring earliest in
/// the completion wins; ties go to the earlier entry of `label_set`.
pub fn parse_label(completion: &str, label_set: &[String]) -> Prediction {
    let text = completion.to_lowercase();
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut best: Option<(usize, &String)> = None;
    for label in label_set {
        let needle = label.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let hit = text.match_indices(&needle).find(|(at, m)| {
            let before = text[..*at].chars().next_back();
            let after = text[at + m.len()..].chars().next();
            !before.is_some_and(is_word) && !after.is_some_and(is_word)
        });
        if let Some((at, _)) = hit {
            if best.is_none_or(|(b, _)| at < b) {
                best = Some((at, label));
            }
        }
    }
    match best {
        Some((_, l)) => Prediction::Label(l.clone()),
        None => Prediction::Invalid,
    }
}

/// One prompt/completion pair for completion-only training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub prompt: String,
    pub completion: String,
}

impl TrainingExample {
    pub fn full_text(&self) -> String {
        format!("{}{}", self.prompt, self.completion)
    }
}

/// Gives repeated ids a `~k` suffix so every example id is unique while the
/// first occurrence keeps its plain id.
pub(crate) fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashMap::new();
    ids.map(|id| {
        let k = seen.entry(id).or_insert(0usize);
        *k += 1;
        if *k == 1 {
            id.to_owned()
        } else {
            format!("{id}~{k}")
        }
    })
    .collect()
}

/// Renders (item, scores) pairs into training examples with `t`.
pub fn training_examples(
    pairs: &[(EvaluationItem, ScoreVector)],
    t: &PromptTemplate,
    rubric: &Rubric,
) -> Result<Vec<TrainingExample>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ids = unique_ids(pairs.iter().map(|(item, _)| item.item_id.as_str()));
    pairs
        .iter()
        .zip(ids)
        .map(|((item, scores), id)| {
            rubric.validate(scores)?;
            let prompt = render_prompt(t, item, rubric)?;
            Ok(TrainingExample {
                id,
                prompt: prompt.text,
                completion: render_completion(scores),
            })
        })
        .collect()
}

/// Writes one `{"id","prompt","completion"}` object per line.
pub fn write_training_jsonl(examples: &[TrainingExample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Renders and writes training JSONL; returns the number of lines written.
pub fn export_training_jsonl(
    pairs: &[(EvaluationItem, ScoreVector)],
    t: &PromptTemplate,
    rubric: &Rubric,
    path: &Path,
) -> Result<usize> {
    let examples = training_examples(pairs, t, rubric)?;
    write_training_jsonl(&examples, path)?;
    Ok(examples.len())
}

/// Instruction for single-label text classification.
pub const CLASSIFICATION_INSTRUCTION: &str = "You will be given a text.\n\
Classify the emotion expressed in the text into exactly one of the following labels: {labels}.\n\
Just output the label, and do not provide any other explanation.";

pub const CLASSIFICATION_COMPLETION_LEAD: &str = "LABEL:\nThe label is: ";

/// Classification prompt: instruction, `TEXT:` block and completion lead.
/// `{labels}` in the instruction expands to the comma-separated label set.
pub fn render_classification_prompt(
    instruction: &str,
    text: &str,
    label_set: &[String],
) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::MissingSlot("text".into()));
    }
    if label_set.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let instruction = instruction.replace("{labels}", &label_set.join(", "));
    Ok(format!(
        "{instruction}\n\nTEXT: {text}\n\n{CLASSIFICATION_COMPLETION_LEAD}"
    ))
}
