//! Artifact formats: SMAP map files, curve CSVs and correlation tables.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faithfulness::Curve;
use crate::image::SaliencyMap;
use crate::sanity::CorrelationTable;

pub const SMAP_MAGIC: &[u8; 4] = b"SMAP";
pub const SMAP_VERSION: u16 = 1;
const SMAP_HEADER: usize = 4 + 2 + 4 + 4 + 1;
const FLAG_POSTPROCESSED: u8 = 1;

pub fn encode_smap(map: &SaliencyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(SMAP_HEADER + 4 * map.len());
    out.extend_from_slice(SMAP_MAGIC);
    out.extend_from_slice(&SMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.push(if map.is_postprocessed() { FLAG_POSTPROCESSED } else { 0 });
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_smap(bytes: &[u8], path: &Path) -> Result<SaliencyMap> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < SMAP_HEADER {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != SMAP_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SMAP_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let h = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let flags = bytes[14];
    if h == 0 || w == 0 {
        return Err(bad(format!("zero dimension {h}x{w}")));
    }
    if flags & !FLAG_POSTPROCESSED != 0 {
        return Err(bad(format!("unknown flags {flags:#04x}")));
    }
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let payload = &bytes[SMAP_HEADER..];
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let map = if flags & FLAG_POSTPROCESSED != 0 {
        SaliencyMap::postprocessed(h, w, data)
    } else {
        SaliencyMap::raw(h, w, data)
    };
    map.map_err(|e| bad(e.to_string()))
}

/// Writes a postprocessed map.
pub fn save_smap(map: &SaliencyMap, path: &Path) -> Result<()> {
    map.require_postprocessed()?;
    std::fs::write(path, encode_smap(map))?;
    Ok(())
}

pub fn load_smap(path: &Path) -> Result<SaliencyMap> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_smap(&bytes, path)
}

/// `%.9g`: enough digits to round-trip any f32.
pub fn fmt_g9(v: f32) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.8e}", v as f64);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v as f64)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn curve_to_csv(curve: &Curve) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in curve.xs.iter().zip(&curve.ys) {
        out.push_str(&fmt_g9(*x));
        out.push(',');
        out.push_str(&fmt_g9(*y));
        out.push('\n');
    }
    out
}

pub fn write_curve_csv(curve: &Curve, path: &Path) -> Result<()> {
    std::fs::write(path, curve_to_csv(curve))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    x: f32,
    y: f32,
}

pub fn read_curve_csv(path: &Path) -> Result<Curve> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers != vec!["x", "y"] {
        return Err(Error::format(path, "expected header x,y"));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<CurveRow>() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        xs.push(row.x);
        ys.push(row.y);
    }
    Curve::new(xs, ys).map_err(|e| Error::format(path, e.to_string()))
}

/// Copy of `table` with the diagonal cleared, as emitted to disk.
pub fn without_diagonal(table: &CorrelationTable) -> CorrelationTable {
    let mut t = table.clone();
    for (i, row) in t.cells.iter_mut().enumerate() {
        row[i] = None;
    }
    t
}

/// CSV with a `metric` label column; 4 decimals, empty for undefined
/// entries and the diagonal.
pub fn table_to_csv(table: &CorrelationTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string()];
    header.extend(table.labels.iter().cloned());
    w.write_record(&header).unwrap();
    for (i, label) in table.labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        for j in 0..table.len() {
            rec.push(match table.get(i, j) {
                Some(v) if i != j => format!("{:.4}", v as f32),
                _ => String::new(),
            });
        }
        w.write_record(&rec).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn read_table_csv(path: &Path) -> Result<CorrelationTable> {
    let bad = |r: String| Error::format(path, r);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut cells = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.get(0) != labels.get(i).map(String::as_str) {
            return Err(bad(format!("row {i} label does not match header")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|e| bad(e.to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    if cells.len() != labels.len() {
        return Err(bad("table is not square".into()));
    }
    Ok(CorrelationTable { labels, cells })
}

pub fn table_to_json(table: &CorrelationTable) -> String {
    serde_json::to_string_pretty(&without_diagonal(table)).unwrap() + "\n"
}

pub fn read_table_json(path: &Path) -> Result<CorrelationTable> {
    let text = std::fs::read_to_string(path)?;
    let t: CorrelationTable =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if t.cells.len() != t.labels.len() || t.cells.iter().any(|r| r.len() != t.labels.len()) {
        return Err(Error::format(path, "table is not square"));
    }
    Ok(t)
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn write_table(table: &CorrelationTable, dir: &Path, stem: &str) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), table_to_csv(table))?;
    std::fs::write(dir.join(format!("{stem}.json")), table_to_json(table))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::format(path, e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
