use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AnnotationRecord, Payload, Rubric};

/// Units × raters table of integer ratings with missing cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliabilityMatrix {
    units: Vec<String>,
    raters: Vec<String>,
    // row-major, units.len() * raters.len()
    cells: Vec<Option<i64>>,
    value_domain: Vec<i64>,
}

impl ReliabilityMatrix {
    /// Empty matrix. `value_domain` is sorted and deduplicated.
    pub fn new(units: Vec<String>, raters: Vec<String>, mut value_domain: Vec<i64>) -> Self {
        value_domain.sort_unstable();
        value_domain.dedup();
        let cells = vec![None; units.len() * raters.len()];
        Self {
            units,
            raters,
            cells,
            value_domain,
        }
    }

    pub fn from_rows(
        units: Vec<String>,
        raters: Vec<String>,
        rows: &[Vec<Option<i64>>],
        value_domain: Vec<i64>,
    ) -> Result<Self> {
        if rows.len() != units.len() || rows.iter().any(|r| r.len() != raters.len()) {
            return Err(Error::InvalidConfig(
                "row layout does not match units × raters".into(),
            ));
        }
        let mut m = Self::new(units, raters, value_domain);
        for (u, row) in rows.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    m.set(u, r, v)?;
                }
            }
        }
        Ok(m)
    }

    pub fn set(&mut self, unit: usize, rater: usize, value: i64) -> Result<()> {
        if self.value_domain.binary_search(&value).is_err() {
            return Err(Error::ValueOutsideDomain(value));
        }
        let idx = unit * self.raters.len() + rater;
        self.cells[idx] = Some(value);
        Ok(())
    }

    pub fn get(&self, unit: usize, rater: usize) -> Option<i64> {
        self.cells[unit * self.raters.len() + rater]
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn value_domain(&self) -> &[i64] {
        &self.value_domain
    }

    /// Stored values of one unit, in rater order.
    pub fn unit_values(&self, unit: usize) -> impl Iterator<Item = i64> + '_ {
        let w = self.raters.len();
        self.cells[unit * w..(unit + 1) * w]
            .iter()
            .flatten()
            .copied()
    }

    pub fn n_values(&self) -> usize {
        self.cells.iter().flatten().count()
    }

    /// Units holding at least two values.
    pub fn n_pairable_units(&self) -> usize {
        (0..self.units.len())
            .filter(|&u| self.unit_values(u).count() >= 2)
            .count()
    }
}

/// How rubric criteria map onto reliability-matrix units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionPooling {
    /// One matrix; every (item, criterion) pair is a unit.
    #[default]
    Pooled,
    /// One matrix per criterion; items are units.
    PerCriterion,
}

/// Builds reliability matrices from rubric annotations.
///
/// Units and raters are sorted lexicographically so the result does not depend
/// on record order. Records carrying a class label are ignored. Pooled mode
/// returns a single matrix with units named `"{item_id}/{criterion_id}"`;
/// per-criterion mode returns one matrix per rubric criterion, in rubric order.
pub fn build_reliability_matrix(
    records: &[AnnotationRecord],
    rubric: &Rubric,
    pooling: CriterionPooling,
) -> Result<Vec<ReliabilityMatrix>> {
    let mut table: BTreeMap<(&str, &str), &[i32]> = BTreeMap::new();
    let mut items = BTreeSet::new();
    let mut raters = BTreeSet::new();
    for rec in records {
        let Payload::Scores(v) = &rec.payload else {
            continue;
        };
        rubric.validate(v)?;
        if table
            .insert((rec.item_id.as_str(), rec.rater_id.as_str()), v.as_slice())
            .is_some()
        {
            return Err(Error::DuplicateRecord {
                item_id: rec.item_id.clone(),
                rater_id: rec.rater_id.clone(),
            });
        }
        items.insert(rec.item_id.as_str());
        raters.insert(rec.rater_id.as_str());
    }
    let items: Vec<&str> = items.into_iter().collect();
    let rater_ids: Vec<String> = raters.iter().map(|r| r.to_string()).collect();
    let rater_index: BTreeMap<&str, usize> =
        raters.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let item_index: BTreeMap<&str, usize> =
        items.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let n_crit = rubric.len();
    let domain = rubric.value_domain();

    let matrices = match pooling {
        CriterionPooling::Pooled => {
            let units = items
                .iter()
                .flat_map(|item| {
                    rubric
                        .criteria()
                        .iter()
                        .map(move |c| format!("{item}/{}", c.id))
                })
                .collect();
            let mut m = ReliabilityMatrix::new(units, rater_ids, domain);
            for (&(item, rater), scores) in &table {
                let (i, r) = (item_index[item], rater_index[rater]);
                for (c, &s) in scores.iter().enumerate() {
                    m.set(i * n_crit + c, r, s.into())?;
                }
            }
            vec![m]
        }
        CriterionPooling::PerCriterion => {
            let units: Vec<String> = items.iter().map(|s| s.to_string()).collect();
            let mut ms: Vec<_> = (0..n_crit)
                .map(|_| ReliabilityMatrix::new(units.clone(), rater_ids.clone(), domain.clone()))
                .collect();
            for (&(item, rater), scores) in &table {
                let (i, r) = (item_index[item], rater_index[rater]);
                for (c, &s) in scores.iter().enumerate() {
                    ms[c].set(i, r, s.into())?;
                }
            }
            ms
        }
    };
    if matrices.iter().all(|m| m.n_pairable_units() == 0) {
        return Err(Error::NoPairableUnits);
    }
    Ok(matrices)
}
