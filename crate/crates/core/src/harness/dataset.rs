//! Dataset manifests, image decoding and bounding-box CSVs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, ColorSpace, ImageTensor};
use crate::pointmetrics::BoundingBox;

pub const DEFAULT_IMAGE_SIZE: [usize; 2] = [224, 224];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub label: usize,
}

/// On-disk dataset description. `root` is relative to the manifest file,
/// entry paths are relative to `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Bounding-box CSV, relative to `root`.
    #[serde(default)]
    pub bboxes: Option<PathBuf>,
    /// Images are resized to `[height, width]`.
    #[serde(default = "default_size")]
    pub image_size: [usize; 2],
}

fn default_size() -> [usize; 2] {
    DEFAULT_IMAGE_SIZE
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub image: ImageTensor,
    pub label: usize,
    pub boxes: Vec<BoundingBox>,
}

/// Loaded dataset, ordered by `image_id`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub has_boxes: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct BoxRow {
    image_id: String,
    class_id: usize,
    x_min: usize,
    y_min: usize,
    x_max: usize,
    y_max: usize,
}

/// Decodes a PNG or binary PPM/PGM into a 3-channel raw image in `[0, 1]`.
pub fn decode_image(path: &Path) -> Result<ImageTensor> {
    let entry = || path.display().to_string();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if !matches!(ext.as_str(), "png" | "ppm" | "pgm" | "pnm") {
        return Err(Error::Ingest {
            entry: entry(),
            reason: "only PNG and binary PPM images are supported".into(),
        });
    }
    if !path.is_file() {
        return Err(Error::Ingest {
            entry: entry(),
            reason: "file not found".into(),
        });
    }
    let img = image::open(path).map_err(|e| Error::Ingest {
        entry: entry(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    ImageTensor::new(h as usize, w as usize, 3, rgb.into_raw(), ColorSpace::Raw01)
}

/// Writes a raw 3-channel image as an 8-bit PNG.
pub fn encode_png(image: &ImageTensor, path: &Path) -> Result<()> {
    if image.channels() != 3 || image.space() != ColorSpace::Raw01 {
        return Err(Error::invalid_argument("PNG export needs a raw RGB image"));
    }
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes)
        .ok_or_else(|| Error::invalid_argument("buffer size mismatch"))?;
    buf.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_bboxes(path: &Path) -> Result<BTreeMap<String, Vec<BoundingBox>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Ingest {
        entry: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<BoxRow>().enumerate() {
        let row = row.map_err(|e| Error::Ingest {
            entry: format!("{} row {}", path.display(), i + 1),
            reason: e.to_string(),
        })?;
        let b = BoundingBox::new(row.class_id, row.x_min, row.y_min, row.x_max, row.y_max)
            .map_err(|e| Error::Ingest {
                entry: row.image_id.clone(),
                reason: e.to_string(),
            })?;
        out.entry(row.image_id).or_default().push(b);
    }
    Ok(out)
}

pub fn write_bboxes(path: &Path, boxes: &BTreeMap<String, Vec<BoundingBox>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for (id, list) in boxes {
        for b in list {
            w.serialize(BoxRow {
                image_id: id.clone(),
                class_id: b.class_id,
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
            })
            .map_err(|e| Error::format(path, e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Ingest {
            entry: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Ingest {
            entry: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if m.root.is_relative() {
            m.root = path.parent().unwrap_or(Path::new(".")).join(&m.root);
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Loads every entry of a manifest, resizing to the manifest's image size.
pub fn ingest(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    ingest_manifest(&manifest)
}

pub fn ingest_manifest(manifest: &DatasetManifest) -> Result<Dataset> {
    let [h, w] = manifest.image_size;
    if h == 0 || w == 0 {
        return Err(Error::Ingest {
            entry: "image_size".into(),
            reason: "dimensions must be positive".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.image_id.as_str()) {
            return Err(Error::Ingest {
                entry: e.image_id.clone(),
                reason: "duplicate image_id".into(),
            });
        }
        if e.image_id.is_empty() || e.image_id.contains(['/', '\\']) {
            return Err(Error::Ingest {
                entry: e.image_id.clone(),
                reason: "image_id must be a non-empty file-name-safe string".into(),
            });
        }
    }
    let mut boxes = match &manifest.bboxes {
        Some(p) => read_bboxes(&manifest.root.join(p))?,
        None => BTreeMap::new(),
    };
    if let Some(id) = boxes.keys().find(|id| !seen.contains(id.as_str())) {
        return Err(Error::Ingest {
            entry: id.clone(),
            reason: "bounding box for an image not in the manifest".into(),
        });
    }

    let mut entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut samples = Vec::with_capacity(entries.len());
    for e in entries {
        let decoded = decode_image(&manifest.root.join(&e.path)).map_err(|err| match err {
            Error::Ingest { reason, .. } => Error::Ingest {
                entry: e.image_id.clone(),
                reason,
            },
            other => other,
        })?;
        let image = if decoded.height() == h && decoded.width() == w {
            decoded
        } else {
            resize_bilinear(&decoded, h, w)?
        };
        samples.push(Sample {
            image_id: e.image_id.clone(),
            image,
            label: e.label,
            boxes: boxes.remove(&e.image_id).unwrap_or_default(),
        });
    }
    Ok(Dataset {
        samples,
        has_boxes: manifest.bboxes.is_some(),
    })
}
