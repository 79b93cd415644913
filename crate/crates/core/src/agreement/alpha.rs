use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matrix::ReliabilityMatrix;
use crate::error::{Error, Result};

/// Distance metric between two values of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nominal,
    #[default]
    Ordinal,
    Interval,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Nominal, Metric::Ordinal, Metric::Interval];
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Nominal => "nominal",
            Metric::Ordinal => "ordinal",
            Metric::Interval => "interval",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Metric::Nominal),
            "ordinal" => Ok(Metric::Ordinal),
            "interval" => Ok(Metric::Interval),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub alpha: f64,
    pub metric: Metric,
    /// Units with at least two values.
    pub n_units: usize,
    pub n_pairable_values: usize,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
}

/// Value-by-value coincidence matrix over the matrix's value domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMatrix {
    pub domain: Vec<i64>,
    /// Row-major `domain.len()²` entries.
    pub values: Vec<f64>,
    /// Pairable values per domain entry.
    pub marginals: Vec<u64>,
    pub total: u64,
}

impl CoincidenceMatrix {
    pub fn get(&self, c: usize, k: usize) -> f64 {
        self.values[c * self.domain.len() + k]
    }
}

/// Ordered within-unit pair counts, stratified by unit size.
///
/// Every unit with `m` values contributes its ordered pairs to stratum `m`.
/// Keeping strata integral means the weighted sums below are evaluated in a
/// fixed order whatever the unit or rater order of the input.
struct PairCounts {
    dim: usize,
    by_size: BTreeMap<u64, Vec<u64>>,
    marginals: Vec<u64>,
    total: u64,
    pairable_units: usize,
}

impl PairCounts {
    fn collect(m: &ReliabilityMatrix) -> Result<Self> {
        let domain = m.value_domain();
        let dim = domain.len();
        let mut by_size: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        let mut marginals = vec![0u64; dim];
        let mut total = 0u64;
        let mut pairable_units = 0;
        let mut hist = vec![0u64; dim];
        for u in 0..m.units().len() {
            hist.iter_mut().for_each(|h| *h = 0);
            let mut size = 0u64;
            for v in m.unit_values(u) {
                let idx = domain
                    .binary_search(&v)
                    .map_err(|_| Error::ValueOutsideDomain(v))?;
                hist[idx] += 1;
                size += 1;
            }
            if size < 2 {
                continue;
            }
            pairable_units += 1;
            total += size;
            let counts = by_size.entry(size).or_insert_with(|| vec![0; dim * dim]);
            for c in 0..dim {
                if hist[c] == 0 {
                    continue;
                }
                marginals[c] += hist[c];
                for k in 0..dim {
                    counts[c * dim + k] += if c == k {
                        hist[c] * (hist[c] - 1)
                    } else {
                        hist[c] * hist[k]
                    };
                }
            }
        }
        if pairable_units == 0 {
            return Err(Error::NoPairableUnits);
        }
        Ok(Self {
            dim,
            by_size,
            marginals,
            total,
            pairable_units,
        })
    }
}

/// Builds the coincidence matrix: each unit with `m ≥ 2` values adds
/// `1 / (m - 1)` to `o[c][k]` for every ordered pair of its entries.
pub fn coincidence_matrix(m: &ReliabilityMatrix) -> Result<CoincidenceMatrix> {
    let pc = PairCounts::collect(m)?;
    let mut values = vec![0.0; pc.dim * pc.dim];
    for (&size, counts) in &pc.by_size {
        let w = (size - 1) as f64;
        for (o, &n) in values.iter_mut().zip(counts) {
            *o += n as f64 / w;
        }
    }
    Ok(CoincidenceMatrix {
        domain: m.value_domain().to_vec(),
        values,
        marginals: pc.marginals,
        total: pc.total,
    })
}

/// Squared distances as integers, `delta²(c, k) = table[c][k] / scale`.
fn distance_table(metric: Metric, domain: &[i64], marginals: &[u64]) -> (Vec<i128>, f64) {
    let dim = domain.len();
    let mut table = vec![0i128; dim * dim];
    let scale = match metric {
        Metric::Nominal => {
            for c in 0..dim {
                for k in 0..dim {
                    table[c * dim + k] = i128::from(c != k);
                }
            }
            1.0
        }
        Metric::Interval => {
            for c in 0..dim {
                for k in 0..dim {
                    let d = i128::from(domain[c]) - i128::from(domain[k]);
                    table[c * dim + k] = d * d;
                }
            }
            1.0
        }
        Metric::Ordinal => {
            // (sum_{g=c..k} n_g - (n_c + n_k)/2)², doubled inside the square.
            let mut prefix = vec![0i128; dim + 1];
            for g in 0..dim {
                prefix[g + 1] = prefix[g] + i128::from(marginals[g]);
            }
            for c in 0..dim {
                for k in 0..dim {
                    let (lo, hi) = (c.min(k), c.max(k));
                    let between = prefix[hi + 1] - prefix[lo];
                    let d = 2 * between - i128::from(marginals[c]) - i128::from(marginals[k]);
                    table[c * dim + k] = d * d;
                }
            }
            4.0
        }
    };
    (table, scale)
}

/// Krippendorff's alpha, `1 - D_o / D_e`, over the pairable values of `m`.
///
/// Returns [`Error::DegenerateData`] when the expected disagreement is zero,
/// i.e. every pairable value is the same.
///
/// All pair and distance sums are exact integers; only the per-unit-size
/// weights and the final ratios are floating point. The result is therefore
/// bit-identical under any permutation of units or raters.
pub fn krippendorff_alpha(m: &ReliabilityMatrix, metric: Metric) -> Result<AgreementResult> {
    let pc = PairCounts::collect(m)?;
    let dim = pc.dim;
    let (dist, scale) = distance_table(metric, m.value_domain(), &pc.marginals);

    let mut observed = 0.0;
    for (&size, counts) in &pc.by_size {
        let weighted: i128 = counts
            .iter()
            .zip(&dist)
            .map(|(&n, &d)| i128::from(n) * d)
            .sum();
        observed += weighted as f64 / (size - 1) as f64;
    }

    let mut expected_num: i128 = 0;
    for c in 0..dim {
        for k in 0..dim {
            expected_num +=
                i128::from(pc.marginals[c]) * i128::from(pc.marginals[k]) * dist[c * dim + k];
        }
    }
    if expected_num == 0 {
        return Err(Error::DegenerateData);
    }

    let n = pc.total as f64;
    let observed_disagreement = observed / n / scale;
    let expected_disagreement = expected_num as f64 / (n * (n - 1.0)) / scale;
    Ok(AgreementResult {
        alpha: 1.0 - observed_disagreement / expected_disagreement,
        metric,
        n_units: pc.pairable_units,
        n_pairable_values: pc.total as usize,
        observed_disagreement,
        expected_disagreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[Option<i64>]], domain: Vec<i64>) -> ReliabilityMatrix {
        let units = (0..rows.len()).map(|i| format!("u{i}")).collect();
        let raters = (0..rows[0].len()).map(|i| format!("r{i}")).collect();
        let rows: Vec<Vec<_>> = rows.iter().map(|r| r.to_vec()).collect();
        ReliabilityMatrix::from_rows(units, raters, &rows, domain).unwrap()
    }

    fn sps_domain() -> Vec<i64> {
        (-2..=2).collect()
    }

    fn idx(v: i64) -> usize {
        (v + 2) as usize
    }

    #[test]
    fn single_perfect_pair() {
        let m = matrix(&[&[Some(1), Some(1)]], sps_domain());
        let o = coincidence_matrix(&m).unwrap();
        assert_eq!(o.get(idx(1), idx(1)), 2.0);
        assert_eq!(o.values.iter().sum::<f64>(), 2.0);
        assert_eq!(o.total, 2);
    }

    #[test]
    fn three_raters_weighting() {
        let m = matrix(&[&[Some(0), Some(0), Some(1)]], sps_domain());
        let o = coincidence_matrix(&m).unwrap();
        assert_eq!(o.get(idx(0), idx(0)), 1.0);
        assert_eq!(o.get(idx(0), idx(1)), 1.0);
        assert_eq!(o.get(idx(1), idx(0)), 1.0);
        assert_eq!(o.get(idx(1), idx(1)), 0.0);
        assert_eq!(o.total, 3);
        assert_eq!(o.marginals[idx(0)], 2);
        assert_eq!(o.marginals[idx(1)], 1);
    }

    #[test]
    fn disjoint_perfect_units() {
        let m = matrix(&[&[Some(2), Some(2)], &[Some(-2), Some(-2)]], sps_domain());
        let o = coincidence_matrix(&m).unwrap();
        assert_eq!(o.get(idx(2), idx(2)), 2.0);
        assert_eq!(o.get(idx(-2), idx(-2)), 2.0);
        assert_eq!(o.get(idx(2), idx(-2)), 0.0);
        assert_eq!(o.get(idx(-2), idx(2)), 0.0);
    }

    #[test]
    fn perfect_agreement_is_one() {
        let m = matrix(&[&[Some(1), Some(1)], &[Some(2), Some(2)]], sps_domain());
        for metric in Metric::ALL {
            let r = krippendorff_alpha(&m, metric).unwrap();
            assert_eq!(r.alpha, 1.0, "{metric}");
            assert_eq!(r.observed_disagreement, 0.0);
        }
    }

    #[test]
    fn constant_data_is_degenerate() {
        let m = matrix(&[&[Some(1), Some(1)], &[Some(1), Some(1)]], sps_domain());
        for metric in Metric::ALL {
            assert!(matches!(
                krippendorff_alpha(&m, metric),
                Err(Error::DegenerateData)
            ));
        }
    }

    #[test]
    fn no_pairable_units() {
        let m = matrix(&[&[Some(1), None], &[None, Some(2)]], sps_domain());
        assert!(matches!(
            coincidence_matrix(&m),
            Err(Error::NoPairableUnits)
        ));
        assert!(matches!(
            krippendorff_alpha(&m, Metric::Ordinal),
            Err(Error::NoPairableUnits)
        ));
    }

    // Published four-observer, twelve-unit example with missing data
    // (values 1..=5). Reference alphas are given to three decimals.
    #[test]
    fn published_reference_example() {
        let n = None;
        let s = Some;
        let rows: [&[Option<i64>]; 12] = [
            &[s(1), s(1), n, s(1)],
            &[s(2), s(2), s(3), s(2)],
            &[s(3), s(3), s(3), s(3)],
            &[s(3), s(3), s(3), s(3)],
            &[s(2), s(2), s(2), s(2)],
            &[s(1), s(2), s(3), s(4)],
            &[s(4), s(4), s(4), s(4)],
            &[s(1), s(1), s(2), s(1)],
            &[s(2), s(2), s(2), s(2)],
            &[n, s(5), s(5), s(5)],
            &[n, n, s(1), s(1)],
            &[n, s(3), n, n],
        ];
        let m = matrix(&rows, (1..=5).collect());
        let nominal = krippendorff_alpha(&m, Metric::Nominal).unwrap();
        let ordinal = krippendorff_alpha(&m, Metric::Ordinal).unwrap();
        let interval = krippendorff_alpha(&m, Metric::Interval).unwrap();
        assert!((nominal.alpha - 0.743).abs() < 5e-4, "{}", nominal.alpha);
        assert!((ordinal.alpha - 0.815).abs() < 5e-4, "{}", ordinal.alpha);
        assert!((interval.alpha - 0.849).abs() < 5e-4, "{}", interval.alpha);
        assert_eq!(nominal.n_pairable_values, 40);
        assert_eq!(nominal.n_units, 11);
    }

    #[test]
    fn alpha_matches_coincidence_route() {
        let n = None;
        let s = Some;
        let m = matrix(
            &[
                &[s(-2), s(-1), s(0)],
                &[s(1), s(1), n],
                &[s(2), s(0), s(2)],
                &[n, s(-1), s(-1)],
            ],
            sps_domain(),
        );
        let o = coincidence_matrix(&m).unwrap();
        let total = o.total as f64;
        let d = o.domain.len();
        for metric in Metric::ALL {
            let delta = |c: usize, k: usize| -> f64 {
                match metric {
                    Metric::Nominal => f64::from(c != k),
                    Metric::Interval => ((o.domain[c] - o.domain[k]) as f64).powi(2),
                    Metric::Ordinal => {
                        let (lo, hi) = (c.min(k), c.max(k));
                        let between: u64 = o.marginals[lo..=hi].iter().sum();
                        (between as f64 - (o.marginals[c] + o.marginals[k]) as f64 / 2.0).powi(2)
                    }
                }
            };
            let mut d_o = 0.0;
            let mut d_e = 0.0;
            for c in 0..d {
                for k in 0..d {
                    d_o += o.get(c, k) * delta(c, k);
                    d_e += (o.marginals[c] * o.marginals[k]) as f64 * delta(c, k);
                }
            }
            let alpha = 1.0 - (d_o / total) / (d_e / (total * (total - 1.0)));
            let r = krippendorff_alpha(&m, metric).unwrap();
            assert!((r.alpha - alpha).abs() < 1e-12, "{metric}");
        }
    }

    #[test]
    fn metric_parse_display() {
        for m in Metric::ALL {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
        assert!("ratio".parse::<Metric>().is_err());
    }
}
