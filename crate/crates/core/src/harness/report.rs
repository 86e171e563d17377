//! Aggregate tables and correlation tables derived from metric records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pointmetrics::{aggregate, DropResult};
use crate::sanity::{internal_consistency, inter_method_table, CorrelationTable, MetricSeries, Polarity, SeriesKind};

use super::pipeline::{metric, MetricRecord, SOFT_DROP};

/// Dataset-level numbers, one row per quantity and one column per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub methods: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub values: Vec<Option<f64>>,
    /// Samples contributing to each value.
    pub counts: Vec<usize>,
}

impl AggregateTable {
    pub fn row(&self, metric: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn get(&self, metric: &str, method: &str) -> Option<f64> {
        let j = self.methods.iter().position(|m| m == method)?;
        self.row(metric)?.values[j]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.methods.iter().cloned());
        w.write_record(&header).unwrap();
        for row in &self.rows {
            let mut rec = vec![row.metric.clone()];
            rec.extend(row.values.iter().map(|v| v.map(|v| format!("{v:.6}")).unwrap_or_default()));
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Configs of `metric` in first-seen order.
fn configs_of(records: &[MetricRecord], metric: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| r.metric == metric && seen.insert(r.config.clone()))
        .map(|r| r.config.clone())
        .collect()
}

fn select<'a>(
    records: &'a [MetricRecord],
    method: &'a str,
    metric: &'a str,
    config: &'a str,
) -> impl Iterator<Item = &'a MetricRecord> + 'a {
    records
        .iter()
        .filter(move |r| r.method == method && r.metric == metric && r.config == config)
}

fn mean_row(records: &[MetricRecord], methods: &[String], name: String, metric: &str, config: &str) -> AggregateRow {
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for m in methods {
        let vals: Vec<f64> = select(records, m, metric, config).filter_map(|r| r.value).collect();
        counts.push(vals.len());
        values.push((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64));
    }
    AggregateRow { metric: name, values, counts }
}

/// Rows: `pointing`, `drop_pct`, `iic_pct`, `road`, binarized drop rows,
/// then `insertion_auc.<config>` and `deletion_auc.<config>`.
pub fn build_aggregate(records: &[MetricRecord], methods: &[String]) -> AggregateTable {
    let mut rows = Vec::new();
    let point_rows = |config: &str, suffix: &str| {
        let mut drop = AggregateRow { metric: format!("drop_pct{suffix}"), values: vec![], counts: vec![] };
        let mut iic = AggregateRow { metric: format!("iic_pct{suffix}"), values: vec![], counts: vec![] };
        for m in methods {
            let drops: Vec<Option<DropResult>> = select(records, m, metric::AVERAGE_DROP, config)
                .map(|r| {
                    r.value.map(|d| DropResult {
                        drop: d,
                        confidence_increased: r.increased.unwrap_or(false),
                    })
                })
                .collect();
            let agg = aggregate(&drops, &[]).ok();
            let n = drops.iter().flatten().count();
            drop.values.push(agg.and_then(|a| a.avg_drop_pct));
            iic.values.push(agg.and_then(|a| a.iic_pct));
            drop.counts.push(n);
            iic.counts.push(n);
        }
        (drop, iic)
    };

    if records.iter().any(|r| r.metric == metric::POINTING) {
        let mut row = mean_row(records, methods, "pointing".into(), metric::POINTING, "default");
        for v in row.values.iter_mut().flatten() {
            *v *= 100.0;
        }
        rows.push(row);
    }
    let drop_configs = configs_of(records, metric::AVERAGE_DROP);
    if drop_configs.iter().any(|c| c == SOFT_DROP) {
        let (d, i) = point_rows(SOFT_DROP, "");
        rows.push(d);
        rows.push(i);
    }
    if records.iter().any(|r| r.metric == metric::ROAD) {
        rows.push(mean_row(records, methods, "road".into(), metric::ROAD, "default"));
    }
    for c in drop_configs.iter().filter(|c| *c != SOFT_DROP) {
        let (d, i) = point_rows(c, &format!(".{c}"));
        rows.push(d);
        rows.push(i);
    }
    for name in [metric::INSERTION, metric::DELETION] {
        for c in configs_of(records, name) {
            rows.push(mean_row(records, methods, format!("{name}_auc.{c}"), name, &c));
        }
    }
    AggregateTable {
        methods: methods.to_vec(),
        rows,
    }
}

fn polarity(metric: &str) -> Polarity {
    match metric {
        metric::INSERTION | metric::POINTING => Polarity::HigherBetter,
        _ => Polarity::LowerBetter,
    }
}

fn kind(metric: &str) -> SeriesKind {
    if metric == metric::POINTING {
        SeriesKind::Binary
    } else {
        SeriesKind::Continuous
    }
}

type Values = BTreeMap<String, f64>;

fn values(records: &[MetricRecord], method: &str, metric: &str, config: &str) -> Values {
    select(records, method, metric, config)
        .filter_map(|r| r.value.map(|v| (r.image_id.clone(), v)))
        .collect()
}

/// Aligns several value maps on their common sample ids.
fn aligned(label_values: Vec<(String, &str, Values)>) -> Result<Vec<MetricSeries>> {
    let mut common: Option<BTreeSet<String>> = None;
    for (_, _, v) in &label_values {
        let ids: BTreeSet<String> = v.keys().cloned().collect();
        common = Some(match common {
            None => ids,
            Some(c) => c.intersection(&ids).cloned().collect(),
        });
    }
    let ids: Vec<String> = common.unwrap_or_default().into_iter().collect();
    label_values
        .into_iter()
        .map(|(label, metric, v)| {
            let vals = ids.iter().map(|i| v[i]).collect();
            MetricSeries::new(label, polarity(metric), kind(metric), ids.clone(), vals)
        })
        .collect()
}

const MIN_SAMPLES: usize = 3;

/// Tables keyed by relative output stem:
/// `consistency/<metric>.<method>`, `consistency/<metric>.mean`,
/// `inter_method/<method>`, `inter_method/mean`.
pub fn sanity_tables(records: &[MetricRecord]) -> Result<Vec<(String, CorrelationTable)>> {
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut out = Vec::new();

    for name in [metric::INSERTION, metric::DELETION, metric::AVERAGE_DROP] {
        let configs = configs_of(records, name);
        if configs.len() < 2 {
            continue;
        }
        let mut tables = Vec::new();
        for m in &methods {
            let series = aligned(
                configs
                    .iter()
                    .map(|c| (c.clone(), name, values(records, m, name, c)))
                    .collect(),
            )?;
            if series[0].values.len() < MIN_SAMPLES {
                log::warn!("{name} / {m}: fewer than {MIN_SAMPLES} complete samples, no consistency table");
                continue;
            }
            let t = internal_consistency(&series)?;
            out.push((format!("consistency/{name}.{m}"), t.clone()));
            tables.push(t);
        }
        if !tables.is_empty() {
            out.push((format!("consistency/{name}.mean"), CorrelationTable::mean(&tables)?));
        }
    }

    let mut tables = Vec::new();
    for m in &methods {
        let mut inputs = Vec::new();
        for name in [metric::INSERTION, metric::DELETION, metric::ROAD, metric::AVERAGE_DROP, metric::POINTING] {
            let config = match name {
                metric::AVERAGE_DROP => SOFT_DROP.to_string(),
                _ => match configs_of(records, name).into_iter().next() {
                    Some(c) => c,
                    None => continue,
                },
            };
            let v = values(records, m, name, &config);
            if records.iter().any(|r| r.metric == name && r.config == config) {
                inputs.push((name.to_string(), name, v));
            }
        }
        if inputs.len() < 2 {
            continue;
        }
        let series = aligned(inputs)?;
        if series[0].values.len() < MIN_SAMPLES {
            log::warn!("{m}: fewer than {MIN_SAMPLES} complete samples, no inter-method table");
            continue;
        }
        let t = inter_method_table(&series)?;
        out.push((format!("inter_method/{m}"), t.clone()));
        tables.push(t);
    }
    if !tables.is_empty() && tables.iter().all(|t| t.labels == tables[0].labels) {
        out.push(("inter_method/mean".into(), CorrelationTable::mean(&tables)?));
    }
    Ok(out)
}
