//! Dataset files: evaluation items, human annotations and classification data.
//!
//! Canonical storage is JSONL (UTF-8, one object per line, LF). Annotation CSV
//! and classification TSV are read but never written.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    default_human_rater, AnnotationRecord, EvaluationItem, Payload, Rubric, ScoreVector,
};

/// One example of a single-label classification task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub item_id: String,
    pub text: String,
    #[serde(alias = "label")]
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater_id: Option<String>,
}

/// Records kept by [`load_classification`] plus what was filtered out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationLoad {
    pub records: Vec<ClassificationRecord>,
    /// Multi-label rows dropped from a single-label evaluation.
    pub skipped: usize,
    pub rows: usize,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines of a text file with their 1-based line numbers.
fn numbered_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    numbered_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line)
                .map(|v| (n, v))
                .map_err(|e| parse_err(path, n, e.to_string()))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"))
}

/// Loads and validates evaluation items; item ids must be unique.
pub fn load_items(path: &Path) -> Result<Vec<EvaluationItem>> {
    let rows: Vec<(usize, EvaluationItem)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(rows.len());
    for (line, item) in rows {
        item.validate()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        if !seen.insert(item.item_id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: item.item_id,
            });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn save_items(items: &[EvaluationItem], path: &Path) -> Result<()> {
    write_jsonl(items, path)
}

struct AnnotationBuilder<'a> {
    path: PathBuf,
    rubric: &'a Rubric,
    keys: HashSet<(String, String)>,
    per_item: HashMap<String, usize>,
    records: Vec<AnnotationRecord>,
}

impl<'a> AnnotationBuilder<'a> {
    fn new(path: &Path, rubric: &'a Rubric) -> Self {
        Self {
            path: path.to_path_buf(),
            rubric,
            keys: HashSet::new(),
            per_item: HashMap::new(),
            records: Vec::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        item_id: String,
        rater_id: Option<String>,
        payload: Payload,
    ) -> Result<()> {
        if item_id.is_empty() {
            return Err(parse_err(&self.path, line, "empty item_id"));
        }
        if let Payload::Scores(v) = &payload {
            if v.len() != self.rubric.len() {
                return Err(parse_err(
                    &self.path,
                    line,
                    format!("expected {} scores, found {}", self.rubric.len(), v.len()),
                ));
            }
            if let Some(&bad) = v
                .as_slice()
                .iter()
                .find(|&&s| s < self.rubric.scale_min() || s > self.rubric.scale_max())
            {
                return Err(Error::RowOutOfRange {
                    path: self.path.clone(),
                    line,
                    value: bad.into(),
                    min: self.rubric.scale_min(),
                    max: self.rubric.scale_max(),
                });
            }
        }
        let k = self.per_item.entry(item_id.clone()).or_insert(0);
        let rater_id = rater_id
            .filter(|r| !r.trim().is_empty())
            .unwrap_or_else(|| default_human_rater(*k));
        *k += 1;
        if !self.keys.insert((item_id.clone(), rater_id.clone())) {
            return Err(Error::DuplicateKey {
                path: self.path.clone(),
                line,
                item_id,
                rater_id,
            });
        }
        self.records.push(AnnotationRecord {
            item_id,
            rater_id,
            payload,
        });
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    item_id: String,
    #[serde(default)]
    rater_id: Option<String>,
    payload: Payload,
}

/// Loads human annotations from CSV (`item_id,rater_id,<one column per
/// criterion>`) or JSONL ([`AnnotationRecord`] objects).
///
/// The `rater_id` column may be absent or blank; such rows get positional
/// ids `human-1`, `human-2`, ... per item. Criterion columns are matched by
/// criterion id or name when the header names them all, otherwise taken in
/// rubric order.
pub fn load_annotations(path: &Path, rubric: &Rubric) -> Result<Vec<AnnotationRecord>> {
    let mut b = AnnotationBuilder::new(path, rubric);
    if !is_csv(path) {
        for (line, raw) in read_jsonl::<RawAnnotation>(path)? {
            b.push(line, raw.item_id, raw.rater_id, raw.payload)?;
        }
        return Ok(b.records);
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let item_col = col("item_id").ok_or_else(|| parse_err(path, 1, "missing item_id column"))?;
    let rater_col = col("rater_id");
    let score_cols: Vec<usize> = (0..header.len())
        .filter(|&i| i != item_col && Some(i) != rater_col)
        .collect();
    if score_cols.len() != rubric.len() {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected {} criterion columns, found {}",
                rubric.len(),
                score_cols.len()
            ),
        ));
    }
    let by_name: Option<Vec<usize>> = rubric
        .criteria()
        .iter()
        .map(|c| {
            score_cols.iter().copied().find(|&i| {
                header[i].eq_ignore_ascii_case(&c.id) || header[i].eq_ignore_ascii_case(&c.name)
            })
        })
        .collect();
    let score_cols = by_name.unwrap_or(score_cols);

    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut scores = Vec::with_capacity(score_cols.len());
        for &c in &score_cols {
            let cell = row.get(c).unwrap_or("");
            let v: i64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("score {cell:?} is not an integer")))?;
            if v < rubric.scale_min().into() || v > rubric.scale_max().into() {
                return Err(Error::RowOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    value: v,
                    min: rubric.scale_min(),
                    max: rubric.scale_max(),
                });
            }
            scores.push(v as i32);
        }
        let item_id = row.get(item_col).unwrap_or("").to_owned();
        let rater_id = rater_col.and_then(|c| row.get(c)).map(str::to_owned);
        b.push(
            line,
            item_id,
            rater_id,
            Payload::Scores(ScoreVector::new(scores)),
        )?;
    }
    Ok(b.records)
}

pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

/// Reads a label-name file: one name per line, index = 0-based line number.
pub fn load_labels(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels: Vec<String> = text.lines().map(|l| l.trim().to_owned()).collect();
    while labels.last().is_some_and(String::is_empty) {
        labels.pop();
    }
    if let Some(i) = labels.iter().position(String::is_empty) {
        return Err(parse_err(path, i + 1, "empty label name"));
    }
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    Ok(labels)
}

/// Loads single-label classification data.
///
/// TSV rows are `text<TAB>label indices<TAB>annotator id` with comma-separated
/// indices into `label_set`; rows with more than one label are skipped and
/// counted. JSONL rows are [`ClassificationRecord`] objects (`label` is
/// accepted for `gold_label`, `item_id` defaults to `L<line>`).
pub fn load_classification(path: &Path, label_set: &[String]) -> Result<ClassificationLoad> {
    if label_set.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let lines = numbered_lines(path)?;
    if lines.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = lines.len();
    let mut records = Vec::with_capacity(rows);
    let mut skipped = 0;
    let mut ids = HashSet::new();

    if is_jsonl(path) {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(default)]
            item_id: Option<String>,
            text: String,
            #[serde(alias = "label")]
            gold_label: String,
            #[serde(default)]
            rater_id: Option<String>,
        }
        for (line, text) in lines {
            let raw: Raw =
                serde_json::from_str(&text).map_err(|e| parse_err(path, line, e.to_string()))?;
            if !label_set.contains(&raw.gold_label) {
                return Err(parse_err(
                    path,
                    line,
                    format!("unknown label {:?}", raw.gold_label),
                ));
            }
            let item_id = raw.item_id.unwrap_or_else(|| format!("L{line}"));
            if !ids.insert(item_id.clone()) {
                return Err(Error::DuplicateId {
                    path: path.to_path_buf(),
                    line,
                    id: item_id,
                });
            }
            records.push(ClassificationRecord {
                item_id,
                text: raw.text,
                gold_label: raw.gold_label,
                rater_id: raw.rater_id,
            });
        }
    } else {
        for (line, text) in lines {
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() < 2 {
                return Err(parse_err(
                    path,
                    line,
                    "expected text<TAB>labels[<TAB>annotator]",
                ));
            }
            let indices: Vec<&str> = fields[1].split(',').map(str::trim).collect();
            if indices.iter().any(|s| s.is_empty()) {
                return Err(parse_err(path, line, "empty label index"));
            }
            if indices.len() > 1 {
                skipped += 1;
                continue;
            }
            let index: usize = indices[0].parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("label index {:?} is not a number", indices[0]),
                )
            })?;
            let gold_label = label_set.get(index).ok_or(Error::UnknownLabelIndex {
                path: path.to_path_buf(),
                line,
                index,
                len: label_set.len(),
            })?;
            records.push(ClassificationRecord {
                item_id: format!("L{line}"),
                text: fields[0].to_owned(),
                gold_label: gold_label.clone(),
                rater_id: fields
                    .get(2)
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty()),
            });
        }
    }
    Ok(ClassificationLoad {
        records,
        skipped,
        rows,
    })
}

pub fn save_classification(records: &[ClassificationRecord], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

/// Pairs every scored annotation with its item, in annotation order. Each
/// human record yields its own pair, so disagreeing raters both reach training.
pub fn labeled_pairs(
    items: &[EvaluationItem],
    annotations: &[AnnotationRecord],
) -> Result<Vec<(EvaluationItem, ScoreVector)>> {
    let by_id: BTreeMap<&str, &EvaluationItem> =
        items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    annotations
        .iter()
        .filter_map(|a| a.payload.scores().map(|s| (a, s)))
        .map(|(a, s)| {
            let item = by_id
                .get(a.item_id.as_str())
                .ok_or_else(|| Error::InvalidItem {
                    item_id: a.item_id.clone(),
                    reason: "annotation refers to an unknown item".into(),
                })?;
            Ok(((*item).clone(), s.clone()))
        })
        .collect()
}
