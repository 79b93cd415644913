//! Per-system agreement and classification tables, as JSON and as aligned
//! plain text with four decimal places.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agreement::Metric;
use crate::error::{Error, Result};
use crate::judge::{AggregatedAgreement, AggregatedClassification};

/// Saved outcome of evaluating one system, the input format of the report
/// command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemResult {
    Agreement {
        system_name: String,
        agreement: AggregatedAgreement,
    },
    Classification {
        system_name: String,
        classification: AggregatedClassification,
    },
}

impl SystemResult {
    pub fn system_name(&self) -> &str {
        match self {
            SystemResult::Agreement { system_name, .. }
            | SystemResult::Classification { system_name, .. } => system_name,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        std::fs::write(path, json)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowMetrics {
    Agreement {
        alpha_mean: f64,
        alpha_std: f64,
        n_runs: usize,
    },
    Classification {
        accuracy: f64,
        macro_f1: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReportRow {
    pub system_name: String,
    #[serde(flatten)]
    pub metrics: RowMetrics,
    pub n_items: usize,
    pub n_failures: usize,
}

impl SystemReportRow {
    fn sort_key(&self) -> f64 {
        match self.metrics {
            RowMetrics::Agreement { alpha_mean, .. } => alpha_mean,
            RowMetrics::Classification { accuracy, .. } => accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Agreement,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    pub rows: Vec<SystemReportRow>,
}

fn sort_rows(rows: &mut [SystemReportRow]) {
    rows.sort_by(|a, b| {
        b.sort_key()
            .partial_cmp(&a.sort_key())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.system_name.cmp(&b.system_name))
    });
}

/// Rows sorted by mean alpha, highest first; ties broken by name.
pub fn agreement_report(rows: &[(String, AggregatedAgreement)]) -> Result<Report> {
    let metric = rows.first().ok_or(Error::EmptyInput)?.1.metric;
    if rows.iter().any(|(_, a)| a.metric != metric) {
        return Err(Error::InvalidConfig(
            "agreement rows use different metrics".into(),
        ));
    }
    let mut out: Vec<SystemReportRow> = rows
        .iter()
        .map(|(name, a)| SystemReportRow {
            system_name: name.clone(),
            metrics: RowMetrics::Agreement {
                alpha_mean: a.mean_alpha,
                alpha_std: a.std_alpha,
                n_runs: a.n_runs,
            },
            n_items: a.n_items,
            n_failures: a.n_failures,
        })
        .collect();
    sort_rows(&mut out);
    Ok(Report {
        kind: ReportKind::Agreement,
        metric: Some(metric),
        rows: out,
    })
}

/// Rows sorted by mean accuracy, highest first; ties broken by name.
pub fn classification_report(rows: &[(String, AggregatedClassification)]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out: Vec<SystemReportRow> = rows
        .iter()
        .map(|(name, c)| SystemReportRow {
            system_name: name.clone(),
            metrics: RowMetrics::Classification {
                accuracy: c.accuracy_mean,
                macro_f1: c.macro_f1_mean,
            },
            n_items: c.n_items,
            n_failures: c.n_failures,
        })
        .collect();
    sort_rows(&mut out);
    Ok(Report {
        kind: ReportKind::Classification,
        metric: None,
        rows: out,
    })
}

/// The agreement and classification tables built from a set of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Report>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Report>,
}

impl ReportSet {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Tables separated by a blank line.
    pub fn to_text(&self) -> String {
        [&self.agreement, &self.classification]
            .into_iter()
            .flatten()
            .map(Report::to_text)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Splits saved results by kind and builds one report per non-empty kind.
pub fn reports_from_results(results: &[SystemResult]) -> Result<ReportSet> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut agreement = Vec::new();
    let mut classification = Vec::new();
    for r in results {
        match r {
            SystemResult::Agreement {
                system_name,
                agreement: a,
            } => agreement.push((system_name.clone(), a.clone())),
            SystemResult::Classification {
                system_name,
                classification: c,
            } => classification.push((system_name.clone(), c.clone())),
        }
    }
    Ok(ReportSet {
        agreement: (!agreement.is_empty())
            .then(|| agreement_report(&agreement))
            .transpose()?,
        classification: (!classification.is_empty())
            .then(|| classification_report(&classification))
            .transpose()?,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned table: names left-aligned, numbers right-aligned.
    pub fn to_text(&self) -> String {
        let headers: &[&str] = match self.kind {
            ReportKind::Agreement => &[
                "system",
                "alpha_mean",
                "alpha_std",
                "runs",
                "items",
                "failures",
            ],
            ReportKind::Classification => &["system", "accuracy", "macro_f1", "items", "failures"],
        };
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.system_name.clone()];
                match r.metrics {
                    RowMetrics::Agreement {
                        alpha_mean,
                        alpha_std,
                        n_runs,
                    } => {
                        row.push(format!("{alpha_mean:.4}"));
                        row.push(format!("{alpha_std:.4}"));
                        row.push(n_runs.to_string());
                    }
                    RowMetrics::Classification { accuracy, macro_f1 } => {
                        row.push(format!("{accuracy:.4}"));
                        row.push(format!("{macro_f1:.4}"));
                    }
                }
                row.push(r.n_items.to_string());
                row.push(r.n_failures.to_string());
                row
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .chain([headers[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();

        let mut out = String::new();
        if let Some(m) = self.metric {
            let _ = writeln!(out, "metric: {m}");
        }
        let line = |out: &mut String, row: &[String]| {
            let mut parts = Vec::with_capacity(row.len());
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    parts.push(format!("{cell}{}", " ".repeat(pad)));
                } else {
                    parts.push(format!("{}{cell}", " ".repeat(pad)));
                }
            }
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        let header: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::{ClassificationMetrics, CriterionPooling};
    use crate::judge::RunAggregation;

    fn agg(alpha: f64) -> AggregatedAgreement {
        AggregatedAgreement {
            mean_alpha: alpha,
            std_alpha: 0.0,
            per_run_alpha: vec![alpha],
            metric: Metric::Ordinal,
            criterion_pooling: CriterionPooling::Pooled,
            run_aggregation: RunAggregation::MeanOfRuns,
            n_runs: 1,
            n_items: 20,
            n_failures: 0,
        }
    }

    fn cls(accuracy: f64, macro_f1: f64) -> AggregatedClassification {
        AggregatedClassification {
            accuracy_mean: accuracy,
            accuracy_std: 0.0,
            macro_f1_mean: macro_f1,
            macro_f1_std: 0.0,
            per_run: vec![ClassificationMetrics {
                accuracy,
                macro_f1,
                per_class_f1: Default::default(),
            }],
            n_items: 4,
            n_failures: 0,
        }
    }

    #[test]
    fn sorted_descending_with_name_tiebreak() {
        let r = agreement_report(&[
            ("b".into(), agg(0.5)),
            ("c".into(), agg(0.9)),
            ("a".into(), agg(0.5)),
        ])
        .unwrap();
        let names: Vec<_> = r.rows.iter().map(|r| r.system_name.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
    }

    #[test]
    fn single_row_table() {
        let r = agreement_report(&[("only".into(), agg(0.25))]).unwrap();
        let text = r.to_text();
        assert_eq!(
            text,
            "metric: ordinal\n\
             system  alpha_mean  alpha_std  runs  items  failures\n\
             ------  ----------  ---------  ----  -----  --------\n\
             only        0.2500     0.0000     1     20         0\n"
        );
    }

    #[test]
    fn classification_four_decimals() {
        let r = classification_report(&[
            ("judge".into(), cls(0.75, (2.0 / 3.0 + 0.8) / 2.0)),
            ("perfect".into(), cls(1.0, 1.0)),
        ])
        .unwrap();
        assert_eq!(r.rows[0].system_name, "perfect");
        let text = r.to_text();
        assert!(text.contains("judge      0.7500    0.7333"), "{text}");
        assert!(text.contains("perfect    1.0000    1.0000"), "{text}");
    }

    #[test]
    fn json_round_trip_and_purity() {
        let rows = vec![("x".into(), agg(0.1)), ("y".into(), agg(-0.2))];
        let a = agreement_report(&rows).unwrap().to_json();
        let b = agreement_report(&rows).unwrap().to_json();
        assert_eq!(a, b);
        let back: Report = serde_json::from_str(&a).unwrap();
        assert_eq!(back, agreement_report(&rows).unwrap());
    }

    #[test]
    fn empty_and_mixed_inputs() {
        assert!(matches!(agreement_report(&[]), Err(Error::EmptyInput)));
        let mut other = agg(0.3);
        other.metric = Metric::Nominal;
        assert!(agreement_report(&[("a".into(), agg(0.1)), ("b".into(), other)]).is_err());
    }

    #[test]
    fn results_split_by_kind() {
        let results = vec![
            SystemResult::Classification {
                system_name: "c".into(),
                classification: cls(0.5, 0.5),
            },
            SystemResult::Agreement {
                system_name: "a".into(),
                agreement: agg(0.4),
            },
        ];
        let reports = reports_from_results(&results).unwrap();
        assert_eq!(
            reports.agreement.as_ref().unwrap().kind,
            ReportKind::Agreement
        );
        assert_eq!(reports.classification.as_ref().unwrap().rows.len(), 1);
        let text = reports.to_text();
        assert!(text.starts_with("metric: ordinal\n"));
        assert!(text.contains("\n\nsystem  accuracy"), "{text}");
        let json = serde_json::to_string(&results[1]).unwrap();
        assert!(json.starts_with("{\"kind\":\"agreement\""));
        assert_eq!(
            serde_json::from_str::<SystemResult>(&json).unwrap(),
            results[1]
        );
    }
}
