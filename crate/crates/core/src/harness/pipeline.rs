//! `generate` and `evaluate` runs: per-sample work in a rayon pool, then a
//! single writer for every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faithfulness::{auc, deletion_curve, insertion_curve, Curve, CurveConfig};
use crate::image::{argmax_first, SaliencyMap};
use crate::model::{ModelAdapter, Scorer};
use crate::pointmetrics::{average_drop, binarize, mask_image, pointing_game, DropResult};
use crate::road::road_score;
use crate::saliency::{coarsen, default_eval_points, occlusion, postprocess, rise, sparsity_kde};

use super::config::{
    curve_config_label, BaselineSpec, ClassPolicy, CurveMetricConfig, EvaluateConfig,
    GenerateConfig,
};
use super::dataset::{ingest, Dataset, Sample};
use super::io::{fmt_g9, load_smap, save_smap, write_curve_csv, write_json, write_table};
use super::report::{build_aggregate, sanity_tables, AggregateTable};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Suffix of methods whose maps are blurred copies of another method's.
pub const COARSE_SUFFIX: &str = "+coarse";

/// Metric names as they appear in records.
pub mod metric {
    pub const INSERTION: &str = "insertion";
    pub const DELETION: &str = "deletion";
    pub const ROAD: &str = "road";
    pub const AVERAGE_DROP: &str = "average_drop";
    pub const POINTING: &str = "pointing_game";
    /// Placeholder metric for failures that precede any metric.
    pub const MAP: &str = "map";
}

/// Config label of the unthresholded Average Drop.
pub const SOFT_DROP: &str = "soft";

/// One per-sample metric value, or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub method: String,
    pub metric: String,
    pub config: String,
    pub target: Option<usize>,
    pub value: Option<f64>,
    /// Average Drop only: whether the masked score went up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increased: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub image_id: String,
    pub method: String,
    pub metric: String,
    pub config: String,
    pub reason: String,
}

/// Reproducibility record written as `run_manifest.json`. Wall-clock data
/// lives in `timing.json` so that this file is stable across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest<C> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: C,
    pub dataset: DatasetSummary,
    pub seeds: SeedInfo,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub manifest: PathBuf,
    pub n_samples: usize,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedInfo {
    pub base: u64,
    pub derivation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
    pub workers: usize,
}

/// Result of an `evaluate` run.
#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub records: Vec<MetricRecord>,
    pub aggregate: AggregateTable,
    pub exclusions: Vec<Exclusion>,
}

impl EvaluateOutcome {
    pub fn has_failures(&self) -> bool {
        !self.exclusions.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub written: Vec<PathBuf>,
    pub exclusions: Vec<Exclusion>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a of a string.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes a base seed with a sequence of stream identifiers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, p| splitmix(acc ^ splitmix(*p)))
}

const SEED_DERIVATION: &str = "noise seeds = splitmix chain over (base, fnv1a(stage), fnv1a(image_id), fnv1a(config), repeat)";

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

fn resolve_target(scorer: &Scorer<'_>, sample: &Sample, policy: ClassPolicy) -> Result<usize> {
    match policy {
        ClassPolicy::GroundTruth => {
            if sample.label >= scorer.model().n_classes() {
                return Err(Error::invalid_argument(format!(
                    "label {} out of range for {} classes",
                    sample.label,
                    scorer.model().n_classes()
                )));
            }
            Ok(sample.label)
        }
        ClassPolicy::Predicted => {
            let v = scorer.score_vectors(std::slice::from_ref(&sample.image), 0)?;
            Ok(argmax_first(&v[0].scores))
        }
    }
}

fn scorer_for<'m>(model: &'m dyn ModelAdapter, cfg_norm: crate::image::NormalizationSpec, batch: usize) -> Scorer<'m> {
    Scorer::new(model).with_normalization(cfg_norm).with_batch_size(batch)
}

/// Generates and saves one postprocessed map per sample and method.
pub fn generate(cfg: &GenerateConfig, out: &Path) -> Result<GenerateOutcome> {
    cfg.validate()?;
    let dataset = ingest(&cfg.dataset)?;
    let model = cfg.model.build()?;
    generate_with(cfg, &dataset, &*model, out)
}

pub fn generate_with(
    cfg: &GenerateConfig,
    dataset: &Dataset,
    model: &dyn ModelAdapter,
    out: &Path,
) -> Result<GenerateOutcome> {
    let started = (SystemTime::now(), Instant::now());
    std::fs::create_dir_all(out)?;
    let scorer = scorer_for(model, cfg.normalization, cfg.batch_size);
    let pool = thread_pool(cfg.workers)?;

    let results: Vec<Vec<(PathBuf, Result<SaliencyMap>)>> = pool.install(|| {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                let target = resolve_target(&scorer, s, cfg.class_policy);
                let mut maps = Vec::new();
                let mut run = |name: &str, f: &dyn Fn(usize) -> Result<SaliencyMap>| {
                    let path = out.join(format!("{}.{name}.smap", s.image_id));
                    let map = match &target {
                        Ok(t) => f(*t).and_then(|raw| postprocess(&raw)),
                        Err(e) => Err(Error::InvalidState(e.to_string())),
                    };
                    maps.push((path, map));
                };
                if let Some(r) = &cfg.rise {
                    run("rise", &|t| rise(&scorer, &s.image, r, t));
                }
                if let Some(o) = &cfg.occlusion {
                    run("occlusion", &|t| occlusion(&scorer, &s.image, o, t));
                }
                maps
            })
            .collect()
    });

    let mut written = Vec::new();
    let mut exclusions = Vec::new();
    for (sample, maps) in dataset.samples.iter().zip(results) {
        for (path, map) in maps {
            let method = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.rsplit('.').nth(1))
                .unwrap_or_default()
                .to_string();
            match map {
                Ok(m) => {
                    save_smap(&m, &path)?;
                    written.push(path);
                }
                Err(e) => {
                    log::warn!("{} / {method}: {e}", sample.image_id);
                    exclusions.push(Exclusion {
                        image_id: sample.image_id.clone(),
                        method,
                        metric: "generate".into(),
                        config: String::new(),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: "generate".into(),
        config: cfg.clone(),
        dataset: summarize(&cfg.dataset, dataset),
        seeds: SeedInfo {
            base: cfg.rise.map(|r| r.seed).unwrap_or(0),
            derivation: "RISE mask i is drawn from stream i of a ChaCha8 generator seeded with rise.seed; the same masks are used for every image".into(),
        },
        exclusions: exclusions.clone(),
    };
    write_json(&manifest, &out.join("generate_manifest.json"))?;
    write_timing(out, started, pool.current_num_threads())?;
    Ok(GenerateOutcome { written, exclusions })
}

fn summarize(manifest: &Path, dataset: &Dataset) -> DatasetSummary {
    DatasetSummary {
        manifest: manifest.to_path_buf(),
        n_samples: dataset.len(),
        image_ids: dataset.samples.iter().map(|s| s.image_id.clone()).collect(),
    }
}

fn write_timing(out: &Path, started: (SystemTime, Instant), workers: usize) -> Result<()> {
    let timing = Timing {
        started_unix_s: started
            .0
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        elapsed_s: started.1.elapsed().as_secs_f64(),
        workers,
    };
    write_json(&timing, &out.join("timing.json"))
}

/// Methods evaluated by a config: listed ones, then their coarse variants.
pub fn evaluated_methods(cfg: &EvaluateConfig) -> Vec<String> {
    let mut m = cfg.methods.clone();
    if cfg.coarsen.is_some() {
        m.extend(cfg.methods.iter().map(|x| format!("{x}{COARSE_SUFFIX}")));
    }
    m
}

struct SampleOutput {
    records: Vec<MetricRecord>,
    curves: Vec<(PathBuf, Curve)>,
    maps: Vec<(String, SaliencyMap)>,
}

struct Ctx<'a> {
    cfg: &'a EvaluateConfig,
    scorer: Scorer<'a>,
    maps_dir: &'a Path,
    keep_maps: bool,
}

fn record(s: &Sample, method: &str, metric: &str, config: &str, target: Option<usize>) -> MetricRecord {
    MetricRecord {
        image_id: s.image_id.clone(),
        method: method.into(),
        metric: metric.into(),
        config: config.into(),
        target,
        value: None,
        increased: None,
        error: None,
    }
}

fn with_result(mut r: MetricRecord, v: Result<f64>) -> MetricRecord {
    match v {
        Ok(v) => r.value = Some(v),
        Err(e) => r.error = Some(e.to_string()),
    }
    r
}

fn load_method_map(ctx: &Ctx<'_>, s: &Sample, method: &str) -> Result<SaliencyMap> {
    let (base, coarse) = match method.strip_suffix(COARSE_SUFFIX) {
        Some(b) => (b, true),
        None => (method, false),
    };
    let map = load_smap(&ctx.maps_dir.join(format!("{}.{base}.smap", s.image_id)))?;
    map.check_matches(&s.image)?;
    let map = if map.is_postprocessed() { map } else { postprocess(&map)? };
    match (coarse, ctx.cfg.coarsen) {
        (true, Some(c)) => coarsen(&map, c.kernel_size, c.sigma),
        _ => Ok(map),
    }
}

fn curve_records(
    ctx: &Ctx<'_>,
    s: &Sample,
    method: &str,
    name: &str,
    mcfg: &CurveMetricConfig,
    map: &SaliencyMap,
    target: usize,
    out: &mut SampleOutput,
) {
    let run = if name == metric::INSERTION { insertion_curve } else { deletion_curve };
    for (baseline, granularity) in mcfg.grid() {
        let label = curve_config_label(&baseline, &granularity);
        let repeats = if baseline == BaselineSpec::UniformNoise { mcfg.noise_repeats } else { 1 };
        let curves: Result<Vec<Curve>> = (0..repeats)
            .map(|r| {
                let seed = derive_seed(
                    ctx.cfg.seed,
                    &[stable_hash(name), stable_hash(&s.image_id), stable_hash(&label), r as u64],
                );
                let cc = CurveConfig::new(baseline.to_kind(seed), granularity).with_step(mcfg.step_fraction);
                run(&ctx.scorer, &s.image, map, &cc, target)
            })
            .collect();
        let rec = record(s, method, name, &label, Some(target));
        match curves {
            Ok(curves) => {
                let value = curves.iter().map(auc).sum::<f64>() / curves.len() as f64;
                let n = curves.len() as f64;
                let ys = (0..curves[0].ys.len())
                    .map(|i| (curves.iter().map(|c| c.ys[i] as f64).sum::<f64>() / n) as f32)
                    .collect();
                let mean = Curve { xs: curves[0].xs.clone(), ys };
                let path = PathBuf::from("curves")
                    .join(method)
                    .join(name)
                    .join(&label)
                    .join(format!("{}.csv", s.image_id));
                out.curves.push((path, mean));
                out.records.push(with_result(rec, Ok(value)));
            }
            Err(e) => out.records.push(with_result(rec, Err(e))),
        }
    }
}

fn evaluate_sample(ctx: &Ctx<'_>, s: &Sample) -> SampleOutput {
    let cfg = ctx.cfg;
    let mut out = SampleOutput {
        records: Vec::new(),
        curves: Vec::new(),
        maps: Vec::new(),
    };
    let methods = evaluated_methods(cfg);
    let target = match resolve_target(&ctx.scorer, s, cfg.class_policy) {
        Ok(t) => t,
        Err(e) => {
            for m in &methods {
                out.records
                    .push(with_result(record(s, m, metric::MAP, "", None), Err(Error::InvalidState(e.to_string()))));
            }
            return out;
        }
    };
    let needs_orig = cfg.metrics.average_drop.is_some();
    let orig = if needs_orig {
        Some(ctx.scorer.score_one(&s.image, target))
    } else {
        None
    };

    for method in &methods {
        let map = match load_method_map(ctx, s, method) {
            Ok(m) => m,
            Err(e) => {
                out.records
                    .push(with_result(record(s, method, metric::MAP, "", Some(target)), Err(e)));
                continue;
            }
        };
        if let Some(c) = &cfg.metrics.insertion {
            curve_records(ctx, s, method, metric::INSERTION, c, &map, target, &mut out);
        }
        if let Some(c) = &cfg.metrics.deletion {
            curve_records(ctx, s, method, metric::DELETION, c, &map, target, &mut out);
        }
        if let Some(r) = &cfg.metrics.road {
            let seed = derive_seed(cfg.seed, &[stable_hash(metric::ROAD), stable_hash(&s.image_id)]);
            let v = road_score(&ctx.scorer, &s.image, &map, &r.fractions, &r.imputation, seed, target)
                .map(|r| r.mean);
            out.records
                .push(with_result(record(s, method, metric::ROAD, "default", Some(target)), v));
        }
        if let (Some(a), Some(orig)) = (&cfg.metrics.average_drop, &orig) {
            let mut variants: Vec<(String, Result<SaliencyMap>)> = vec![(SOFT_DROP.into(), Ok(map.clone()))];
            for p in &a.binarize_percentiles {
                variants.push((format!("p{}", fmt_g9(*p)), binarize(&map, *p)));
            }
            for (label, m) in variants {
                let mut rec = record(s, method, metric::AVERAGE_DROP, &label, Some(target));
                let res: Result<DropResult> = (|| {
                    let o = orig.as_ref().map_err(|e| Error::InvalidState(e.to_string()))?;
                    let masked = ctx.scorer.score_one(&mask_image(&s.image, &m?)?, target)?;
                    average_drop(*o, masked)
                })();
                match res {
                    Ok(d) => {
                        rec.value = Some(d.drop);
                        rec.increased = Some(d.confidence_increased);
                    }
                    Err(e) => rec.error = Some(e.to_string()),
                }
                out.records.push(rec);
            }
        }
        if cfg.metrics.pointing_game.is_some() {
            let v = pointing_game(&map, &s.boxes, target).map(|hit| if hit { 1.0 } else { 0.0 });
            out.records
                .push(with_result(record(s, method, metric::POINTING, "default", Some(target)), v));
        }
        if ctx.keep_maps {
            out.maps.push((method.clone(), map));
        }
    }
    out
}

/// Runs every configured metric and writes the report directory.
pub fn evaluate(cfg: &EvaluateConfig, maps_dir: &Path, out: &Path) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let dataset = ingest(&cfg.dataset)?;
    let model = cfg.model.build()?;
    evaluate_with(cfg, &dataset, &*model, maps_dir, out)
}

pub fn evaluate_with(
    cfg: &EvaluateConfig,
    dataset: &Dataset,
    model: &dyn ModelAdapter,
    maps_dir: &Path,
    out: &Path,
) -> Result<EvaluateOutcome> {
    let started = (SystemTime::now(), Instant::now());
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    let ctx = Ctx {
        cfg,
        scorer: scorer_for(model, cfg.normalization, cfg.batch_size),
        maps_dir,
        keep_maps: cfg.metrics.sparsity.is_some(),
    };
    let outputs: Vec<SampleOutput> =
        pool.install(|| dataset.samples.par_iter().map(|s| evaluate_sample(&ctx, s)).collect());

    std::fs::create_dir_all(out)?;
    let mut records = Vec::new();
    let mut maps_by_method: BTreeMap<String, Vec<SaliencyMap>> = BTreeMap::new();
    for o in outputs {
        for (rel, curve) in o.curves {
            let path = out.join(rel);
            std::fs::create_dir_all(path.parent().unwrap())?;
            write_curve_csv(&curve, &path)?;
        }
        for (m, map) in o.maps {
            maps_by_method.entry(m).or_default().push(map);
        }
        records.extend(o.records);
    }

    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r).expect("records serialize"));
        jsonl.push('\n');
    }
    std::fs::write(out.join("records.jsonl"), jsonl)?;

    let exclusions: Vec<Exclusion> = records
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| Exclusion {
                image_id: r.image_id.clone(),
                method: r.method.clone(),
                metric: r.metric.clone(),
                config: r.config.clone(),
                reason: e.clone(),
            })
        })
        .collect();
    for e in &exclusions {
        log::warn!("{} / {} / {} {}: {}", e.image_id, e.method, e.metric, e.config, e.reason);
    }

    let methods = evaluated_methods(cfg);
    let aggregate = build_aggregate(&records, &methods);
    write_json(&aggregate, &out.join("aggregate.json"))?;
    std::fs::write(out.join("aggregate.csv"), aggregate.to_csv())?;

    if let Some(sp) = &cfg.metrics.sparsity {
        let dir = out.join("kde");
        std::fs::create_dir_all(&dir)?;
        let points = default_eval_points(sp.eval_points);
        for (method, maps) in &maps_by_method {
            let kde = sparsity_kde(maps, sp.bandwidth, &points)?;
            let mut csv = String::from("t,density\n");
            for (t, d) in kde.eval_points.iter().zip(&kde.densities) {
                csv.push_str(&format!("{},{}\n", fmt_g9(*t), fmt_g9(*d)));
            }
            std::fs::write(dir.join(format!("{method}.csv")), csv)?;
        }
    }

    write_sanity(&records, out)?;

    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: "evaluate".into(),
        config: cfg.clone(),
        dataset: summarize(&cfg.dataset, dataset),
        seeds: SeedInfo {
            base: cfg.seed,
            derivation: SEED_DERIVATION.into(),
        },
        exclusions: exclusions.clone(),
    };
    write_json(&manifest, &out.join("run_manifest.json"))?;
    write_timing(out, started, pool.current_num_threads())?;
    Ok(EvaluateOutcome {
        records,
        aggregate,
        exclusions,
    })
}

/// Writes consistency and inter-method tables computed from `records`.
pub fn write_sanity(records: &[MetricRecord], out: &Path) -> Result<Vec<String>> {
    let tables = sanity_tables(records)?;
    let mut written = Vec::new();
    for (rel, table) in &tables {
        let path = out.join(rel);
        let dir = path.parent().unwrap();
        std::fs::create_dir_all(dir)?;
        write_table(table, dir, path.file_name().unwrap().to_str().unwrap())?;
        written.push(rel.clone());
    }
    Ok(written)
}

pub fn read_records(report_dir: &Path) -> Result<Vec<MetricRecord>> {
    let path = report_dir.join("records.jsonl");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::format(&path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// `sanity` over one or more reports. With several reports, sample ids are
/// prefixed by the report's position so that runs on different models pool
/// into one set of samples.
pub fn sanity(reports: &[PathBuf], out: &Path) -> Result<Vec<String>> {
    if reports.is_empty() {
        return Err(Error::Config("no report directories given".into()));
    }
    let mut all = Vec::new();
    for (i, dir) in reports.iter().enumerate() {
        let mut recs = read_records(dir)?;
        if reports.len() > 1 {
            for r in &mut recs {
                r.image_id = format!("r{i}/{}", r.image_id);
            }
        }
        all.extend(recs);
    }
    std::fs::create_dir_all(out)?;
    write_sanity(&all, out)
}
