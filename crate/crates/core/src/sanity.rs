//! Meta-evaluation statistics: rank and point-biserial correlation, internal
//! consistency tables and inter-method reliability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Continuous,
    Binary,
}

/// Per-sample values of one metric (or one metric configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: String,
    pub polarity: Polarity,
    pub kind: SeriesKind,
    pub sample_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(
        metric: impl Into<String>,
        polarity: Polarity,
        kind: SeriesKind,
        sample_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let metric = metric.into();
        if sample_ids.len() != values.len() {
            return Err(Error::invalid_argument(format!(
                "{metric}: {} ids for {} values",
                sample_ids.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("{metric}: non-finite value")));
        }
        if kind == SeriesKind::Binary && values.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidData(format!("{metric}: binary series holds non 0/1 values")));
        }
        Ok(Self {
            metric,
            polarity,
            kind,
            sample_ids,
            values,
        })
    }

    /// Continuous series with sample ids `0..n`.
    pub fn continuous(metric: impl Into<String>, polarity: Polarity, values: Vec<f64>) -> Result<Self> {
        let ids = (0..values.len()).map(|i| i.to_string()).collect();
        Self::new(metric, polarity, SeriesKind::Continuous, ids, values)
    }

    /// Binary series with sample ids `0..n`.
    pub fn binary(metric: impl Into<String>, polarity: Polarity, values: Vec<f64>) -> Result<Self> {
        let ids = (0..values.len()).map(|i| i.to_string()).collect();
        Self::new(metric, polarity, SeriesKind::Binary, ids, values)
    }

    /// Values oriented so that higher is better.
    fn oriented(&self) -> Vec<f64> {
        match (self.polarity, self.kind) {
            (Polarity::HigherBetter, _) => self.values.clone(),
            (Polarity::LowerBetter, SeriesKind::Continuous) => self.values.iter().map(|v| -v).collect(),
            (Polarity::LowerBetter, SeriesKind::Binary) => self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }
}

/// Fractional ranks starting at 1; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation. Errors when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid_argument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid_argument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::invalid_argument("spearman needs at least 3 samples"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Point-biserial correlation with the population standard deviation of `y`.
pub fn point_biserial(b: &[f64], y: &[f64]) -> Result<f64> {
    if b.len() != y.len() {
        return Err(Error::invalid_argument(format!(
            "length mismatch: {} vs {}",
            b.len(),
            y.len()
        )));
    }
    if b.len() < 3 {
        return Err(Error::invalid_argument("point-biserial needs at least 3 samples"));
    }
    if b.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidData("binary series holds non 0/1 values".into()));
    }
    let n = y.len() as f64;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (bi, yi) in b.iter().zip(y) {
        if *bi == 1.0 {
            s1 += yi;
            n1 += 1.0;
        } else {
            s0 += yi;
            n0 += 1.0;
        }
    }
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::UndefinedCorrelation("binary series has a single class".into()));
    }
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    let r = (s1 / n1 - s0 / n0) / sd * (n1 * n0 / (n * n)).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

/// Square table of pairwise coefficients. `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl CorrelationTable {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i][j]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|i| (0..self.len()).all(|j| self.cells[i][j] == self.cells[j][i]))
    }

    /// Element-wise mean over tables with identical labels, skipping
    /// undefined entries.
    pub fn mean(tables: &[CorrelationTable]) -> Result<CorrelationTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::invalid_argument("no tables to average"))?;
        if tables.iter().any(|t| t.labels != first.labels) {
            return Err(Error::InvalidAlignment("tables have different labels".into()));
        }
        let n = first.len();
        let cells = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let vals: Vec<f64> = tables.iter().filter_map(|t| t.cells[i][j]).collect();
                        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                    })
                    .collect()
            })
            .collect();
        Ok(CorrelationTable {
            labels: first.labels.clone(),
            cells,
        })
    }
}

fn check_aligned(a: &MetricSeries, b: &MetricSeries) -> Result<()> {
    if a.sample_ids != b.sample_ids {
        return Err(Error::InvalidAlignment(format!(
            "{} and {} cover different samples",
            a.metric, b.metric
        )));
    }
    Ok(())
}

/// Pairwise Spearman correlation between configurations of one metric. The
/// diagonal holds each series' self-correlation; undefined pairs are `None`.
pub fn internal_consistency(series: &[MetricSeries]) -> Result<CorrelationTable> {
    if series.len() < 2 {
        return Err(Error::invalid_argument("need at least two configurations"));
    }
    for s in &series[1..] {
        check_aligned(&series[0], s)?;
    }
    let n = series.len();
    let mut cells = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = match spearman(&series[i].values, &series[j].values) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            cells[i][j] = r;
            cells[j][i] = r;
        }
    }
    Ok(CorrelationTable {
        labels: series.iter().map(|s| s.metric.clone()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterMethodResult {
    /// Correlation of the values as given.
    pub raw: f64,
    /// Correlation after orienting both series higher-is-better.
    pub fixed: f64,
    pub flipped_a: bool,
    pub flipped_b: bool,
    pub kind: CorrelationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Spearman,
    PointBiserial,
}

fn correlate(a: &MetricSeries, av: &[f64], b: &MetricSeries, bv: &[f64]) -> Result<(f64, CorrelationKind)> {
    match (a.kind, b.kind) {
        (SeriesKind::Continuous, SeriesKind::Continuous) => {
            Ok((spearman(av, bv)?, CorrelationKind::Spearman))
        }
        (SeriesKind::Binary, _) => Ok((point_biserial(av, bv)?, CorrelationKind::PointBiserial)),
        (SeriesKind::Continuous, SeriesKind::Binary) => {
            Ok((point_biserial(bv, av)?, CorrelationKind::PointBiserial))
        }
    }
}

/// Correlation between two different metrics over the same samples.
pub fn inter_method(a: &MetricSeries, b: &MetricSeries) -> Result<InterMethodResult> {
    check_aligned(a, b)?;
    let (raw, kind) = correlate(a, &a.values, b, &b.values)?;
    let (fixed, _) = correlate(a, &a.oriented(), b, &b.oriented())?;
    Ok(InterMethodResult {
        raw,
        fixed,
        flipped_a: a.polarity == Polarity::LowerBetter,
        flipped_b: b.polarity == Polarity::LowerBetter,
        kind,
    })
}

/// All pairwise inter-method correlations (polarity fixed) between metrics.
pub fn inter_method_table(series: &[MetricSeries]) -> Result<CorrelationTable> {
    let n = series.len();
    let mut cells = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = match inter_method(&series[i], &series[j]) {
                Ok(r) => Some(r.fixed),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            cells[i][j] = r;
            cells[j][i] = r;
        }
    }
    Ok(CorrelationTable {
        labels: series.iter().map(|s| s.metric.clone()).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0; 3]);
    }

    #[test]
    fn spearman_examples() {
        let x = [0.3, 1.2, -4.0, 8.0, 2.5];
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rev: Vec<f64> = sorted.iter().rev().copied().collect();
        assert_eq!(spearman(&sorted, &rev).unwrap(), -1.0);

        // Ranks (1, 2, 3, 4) vs (1, 2.5, 2.5, 4): cov 4.5, var 5 and 4.5.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!((r - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);

        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn point_biserial_examples() {
        let b = [1.0, 1.0, 0.0, 0.0];
        let y = [5.0, 5.0, 1.0, 1.0];
        assert!((point_biserial(&b, &y).unwrap() - 1.0).abs() < 1e-12);
        let flat = [1.0, 2.0, 1.0, 2.0];
        assert_eq!(point_biserial(&b, &flat).unwrap(), 0.0);
        assert!(matches!(
            point_biserial(&[1.0; 4], &y),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn internal_consistency_basics() {
        let a = MetricSeries::continuous("a", Polarity::HigherBetter, vec![0.1, 0.5, 0.3, 0.9]).unwrap();
        let b = MetricSeries::continuous("b", Polarity::HigherBetter, vec![0.9, 0.5, 0.7, 0.1]).unwrap();
        let t = internal_consistency(&[a.clone(), a.clone(), b]).unwrap();
        assert_eq!(t.get(0, 1), Some(1.0));
        assert_eq!(t.get(0, 2), Some(-1.0));
        assert_eq!(t.get(2, 2), Some(1.0));
        assert!(t.is_symmetric());

        let mut shifted = a.clone();
        shifted.sample_ids[0] = "x".into();
        assert!(matches!(
            internal_consistency(&[a, shifted]),
            Err(Error::InvalidAlignment(_))
        ));
    }

    #[test]
    fn inter_method_polarity() {
        let v = vec![0.2, 0.8, 0.5, 0.1];
        let hi = MetricSeries::continuous("ins", Polarity::HigherBetter, v.clone()).unwrap();
        let lo = MetricSeries::continuous("drop", Polarity::LowerBetter, v.clone()).unwrap();
        assert_eq!(inter_method(&hi, &hi).unwrap().fixed, 1.0);
        let r = inter_method(&lo, &hi).unwrap();
        assert_eq!(r.raw, 1.0);
        assert_eq!(r.fixed, -1.0);
        assert!(r.flipped_a && !r.flipped_b);

        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let lo_neg = MetricSeries::continuous("del", Polarity::LowerBetter, neg).unwrap();
        assert_eq!(inter_method(&lo_neg, &hi).unwrap().fixed, 1.0);

        let hits = MetricSeries::binary("pg", Polarity::HigherBetter, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = inter_method(&hits, &lo).unwrap();
        assert_eq!(r.kind, CorrelationKind::PointBiserial);
        assert!((r.fixed + r.raw).abs() < 1e-12);
    }

    #[test]
    fn table_mean_skips_undefined() {
        let t1 = CorrelationTable {
            labels: vec!["a".into(), "b".into()],
            cells: vec![vec![Some(1.0), Some(0.5)], vec![Some(0.5), None]],
        };
        let t2 = CorrelationTable {
            labels: t1.labels.clone(),
            cells: vec![vec![Some(1.0), Some(0.1)], vec![Some(0.1), None]],
        };
        let m = CorrelationTable::mean(&[t1, t2]).unwrap();
        assert!((m.get(0, 1).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(m.get(1, 1), None);
    }

    proptest! {
        #[test]
        fn spearman_symmetric_and_bounded(
            x in prop::collection::vec(-10i32..10, 3..30),
            seed in prop::collection::vec(-10i32..10, 30),
        ) {
            let x: Vec<f64> = x.iter().map(|v| *v as f64).collect();
            let y: Vec<f64> = seed[..x.len()].iter().map(|v| *v as f64).collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
                prop_assert_eq!(a, b);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn spearman_invariant_under_increasing_maps(
            x in prop::collection::vec(-5.0f64..5.0, 5..40),
            y in prop::collection::vec(-5.0f64..5.0, 40),
        ) {
            let y = &y[..x.len()];
            let tx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            let ty: Vec<f64> = y.iter().map(|v| v * v * v).collect();
            if let Ok(base) = spearman(&x, y) {
                prop_assert_eq!(base, spearman(&tx, &ty).unwrap());
            }
        }

        #[test]
        fn point_biserial_is_pearson(
            b in prop::collection::vec(prop::bool::ANY, 4..50),
            y in prop::collection::vec(-3.0f64..3.0, 50),
        ) {
            let b: Vec<f64> = b.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
            let y = &y[..b.len()];
            if let Ok(r) = point_biserial(&b, y) {
                prop_assert!((r - pearson(&b, y).unwrap()).abs() < 1e-9);
            }
        }
    }
}
