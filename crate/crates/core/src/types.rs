//! Domain types shared across the pipeline: rubric, items, score vectors and
//! annotation records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leaf criterion of a rubric with a description for every score level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricCriterion {
    pub id: String,
    pub name: String,
    /// High-level dimension this criterion refines (e.g. "Naturalness").
    pub parent: String,
    pub level_descriptions: BTreeMap<i32, String>,
}

/// An ordered set of criteria scored on a shared integer scale.
///
/// Construction through [`Rubric::new`] or deserialization always validates, so
/// a `Rubric` value in hand satisfies its invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRubric")]
pub struct Rubric {
    criteria: Vec<RubricCriterion>,
    scale_min: i32,
    scale_max: i32,
}

#[derive(Deserialize)]
struct RawRubric {
    criteria: Vec<RubricCriterion>,
    scale_min: i32,
    scale_max: i32,
}

impl TryFrom<RawRubric> for Rubric {
    type Error = Error;

    fn try_from(raw: RawRubric) -> Result<Self> {
        Rubric::new(raw.criteria, raw.scale_min, raw.scale_max)
    }
}

impl Rubric {
    pub fn new(criteria: Vec<RubricCriterion>, scale_min: i32, scale_max: i32) -> Result<Self> {
        if scale_min >= scale_max {
            return Err(Error::InvalidRubric(format!(
                "scale_min {scale_min} must be below scale_max {scale_max}"
            )));
        }
        if criteria.is_empty() {
            return Err(Error::InvalidRubric("rubric has no criteria".into()));
        }
        let expected: BTreeSet<i32> = (scale_min..=scale_max).collect();
        let mut names = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for c in &criteria {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidRubric(format!(
                    "duplicate criterion name {:?}",
                    c.name
                )));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidRubric(format!(
                    "duplicate criterion id {:?}",
                    c.id
                )));
            }
            let levels: BTreeSet<i32> = c.level_descriptions.keys().copied().collect();
            if levels != expected {
                return Err(Error::InvalidRubric(format!(
                    "criterion {:?} must describe exactly the levels {scale_min}..={scale_max}",
                    c.name
                )));
            }
            if c.level_descriptions.values().any(|d| d.trim().is_empty()) {
                return Err(Error::InvalidRubric(format!(
                    "criterion {:?} has an empty level description",
                    c.name
                )));
            }
        }
        Ok(Self {
            criteria,
            scale_min,
            scale_max,
        })
    }

    pub fn criteria(&self) -> &[RubricCriterion] {
        &self.criteria
    }

    pub fn len(&self) -> usize {
        self.criteria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    pub fn scale_min(&self) -> i32 {
        self.scale_min
    }

    pub fn scale_max(&self) -> i32 {
        self.scale_max
    }

    /// Every legal score, ascending.
    pub fn value_domain(&self) -> Vec<i64> {
        (self.scale_min..=self.scale_max).map(i64::from).collect()
    }

    pub fn validate(&self, v: &ScoreVector) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        for (index, &s) in v.as_slice().iter().enumerate() {
            if s < self.scale_min || s > self.scale_max {
                return Err(Error::OutOfRange {
                    index,
                    value: s.into(),
                    min: self.scale_min,
                    max: self.scale_max,
                });
            }
        }
        Ok(())
    }
}

/// Returns `v` unchanged when it has one in-range score per rubric criterion.
pub fn validate_score_vector(v: ScoreVector, rubric: &Rubric) -> Result<ScoreVector> {
    rubric.validate(&v)?;
    Ok(v)
}

fn criterion(id: &str, name: &str, parent: &str, levels: [&str; 5]) -> RubricCriterion {
    RubricCriterion {
        id: id.to_owned(),
        name: name.to_owned(),
        parent: parent.to_owned(),
        level_descriptions: (-2..=2)
            .zip(levels)
            .map(|(k, d)| (k, d.to_owned()))
            .collect(),
    }
}

/// The six-criterion question-answering rubric on the -2..=2 scale.
///
/// Criteria are ordered Completeness, Clarity (Naturalness), Interpretability,
/// Conciseness (Quality), Accuracy, Relevance (Informativeness). Score vectors
/// and rendered completions follow this order.
pub fn default_sps_rubric() -> Rubric {
    let criteria = vec![
        criterion(
            "completeness",
            "Completeness",
            "Naturalness",
            [
                "Important information is missing, causing major misunderstandings.",
                "Several details are missing, making the response only partially usable.",
                "Mostly complete but lacking a few supporting details.",
                "Complete with all necessary information and minimal omissions.",
                "Fully comprehensive with all required details and no omissions.",
            ],
        ),
        criterion(
            "clarity",
            "Clarity",
            "Naturalness",
            [
                "Very unclear and confusing, making it hard to understand.",
                "Partially unclear with awkward wording or ambiguous sentences.",
                "Somewhat clear but with minor ambiguity or weak phrasing.",
                "Clear, easy to follow, and well-phrased.",
                "Extremely clear, well-articulated, and highly readable.",
            ],
        ),
        criterion(
            "interpretability",
            "Interpretability",
            "Quality",
            [
                "Difficult to understand with tangled reasoning or unclear logic.",
                "Partially understandable but with unclear logic or weak organization.",
                "Generally understandable but occasionally confusing or inconsistent.",
                "Easy to understand with clear logic and strong organization.",
                "Extremely easy to understand, logically strong, and excellently organized.",
            ],
        ),
        criterion(
            "conciseness",
            "Conciseness",
            "Quality",
            [
                "Very wordy, redundant, or filled with unnecessary details.",
                "Somewhat verbose with noticeable redundancy.",
                "Some unnecessary wording but overall acceptable length.",
                "Concise with minimal redundancy and clear expression.",
                "Highly concise, focused, and free of all unnecessary words.",
            ],
        ),
        criterion(
            "accuracy",
            "Accuracy",
            "Informativeness",
            [
                "Contains factually incorrect or fabricated information.",
                "Contains several factual inaccuracies or unclear claims.",
                "Mostly accurate but with minor errors or ambiguous statements.",
                "Accurate and reliable with no significant factual issues.",
                "Fully precise, factually correct, and verifiable throughout.",
            ],
        ),
        criterion(
            "relevance",
            "Relevance",
            "Informativeness",
            [
                "Content is mostly irrelevant or off-topic.",
                "Content is partially irrelevant or only loosely connected to the topic.",
                "Content is somewhat relevant but contains unnecessary or unfocused parts.",
                "Content is relevant and contributes meaningfully to the topic.",
                "Content is highly relevant, targeted, and fully aligned with the topic.",
            ],
        ),
    ];
    Rubric::new(criteria, -2, 2).expect("built-in rubric is valid")
}

/// One (context, question, answer) unit to be judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationItem {
    pub item_id: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
    /// Set on augmented variants (and on originals that went through augmentation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_id: Option<String>,
    #[serde(default)]
    pub transforms: Vec<String>,
}

impl EvaluationItem {
    pub fn new(
        item_id: impl Into<String>,
        context: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            context: context.into(),
            question: question.into(),
            answer: answer.into(),
            source_model: None,
            base_id: None,
            transforms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidItem {
            item_id: self.item_id.clone(),
            reason: reason.to_owned(),
        };
        if self.item_id.is_empty() {
            return Err(invalid("item_id is empty"));
        }
        for (field, text) in [
            ("context", &self.context),
            ("question", &self.question),
            ("answer", &self.answer),
        ] {
            if text.trim().is_empty() {
                return Err(invalid(&format!("{field} is empty")));
            }
        }
        if self.base_id.as_deref() == Some(self.item_id.as_str()) && !self.transforms.is_empty() {
            return Err(invalid(
                "an item that is its own base cannot carry transforms",
            ));
        }
        Ok(())
    }

    /// Grouping key for leakage-safe splits: `base_id` when set, else `item_id`.
    pub fn group_id(&self) -> &str {
        self.base_id.as_deref().unwrap_or(&self.item_id)
    }
}

/// One integer score per rubric criterion, in rubric order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<i32>);

impl ScoreVector {
    pub fn new(scores: Vec<i32>) -> Self {
        Self(scores)
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<i32> {
        self.0
    }
}

impl From<Vec<i32>> for ScoreVector {
    fn from(v: Vec<i32>) -> Self {
        Self(v)
    }
}

/// What a rater produced for an item: rubric scores or a class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Scores(ScoreVector),
    Label(String),
}

impl Payload {
    pub fn scores(&self) -> Option<&ScoreVector> {
        match self {
            Payload::Scores(v) => Some(v),
            Payload::Label(_) => None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Payload::Label(l) => Some(l),
            Payload::Scores(_) => None,
        }
    }
}

/// One rater's judgement of one item. Several human records per item are
/// kept side by side; nothing in the pipeline collapses them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub rater_id: String,
    pub payload: Payload,
}

impl AnnotationRecord {
    pub fn scores(
        item_id: impl Into<String>,
        rater_id: impl Into<String>,
        scores: impl Into<ScoreVector>,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            rater_id: rater_id.into(),
            payload: Payload::Scores(scores.into()),
        }
    }

    pub fn label(
        item_id: impl Into<String>,
        rater_id: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            rater_id: rater_id.into(),
            payload: Payload::Label(label.into()),
        }
    }
}

/// Rater id assigned to a judge model's output in run `run_index` (1-based).
pub fn judge_rater_id(model: &str, run_index: usize) -> String {
    format!("judge:{model}@run{run_index}")
}

/// Positional rater id for the `k`-th (0-based) human record of an item.
pub fn default_human_rater(k: usize) -> String {
    format!("human-{}", k + 1)
}
