//! Loader for simplified Visual Genome object/region records.
//!
//! Each line of a `.jsonl` file (or each element of a `.json` array) is one
//! image:
//!
//! ```json
//! {"image_id": 42, "description": "optional image-level text",
//!  "objects": [{"object_id": 7, "name": "violin",
//!               "region_caption": "a violin leaning on a chair",
//!               "bbox": {"x": 10, "y": 20, "w": 30, "h": 40}}]}
//! ```
//!
//! `names` (an array, as in the upstream dump) is accepted in place of `name`.

use std::path::Path;

use serde_json::Value;

use super::{
    collect_files, normalize_object_name, AnnotatedImage, AnnotationError, AnnotationSource,
    BoundingBox, Corpus, ObjectAnnotation,
};

pub fn load_visual_genome(path: &Path) -> Result<Corpus, AnnotationError> {
    let files = collect_files(path, &["jsonl", "json"])?;
    let mut images = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| AnnotationError::io(&file, e))?;
        let invalid = |line: usize, reason: String| AnnotationError::InvalidRecord {
            path: file.clone(),
            line,
            reason,
        };
        if text.trim_start().starts_with('[') {
            let records: Vec<Value> =
                serde_json::from_str(&text).map_err(|e| invalid(1, e.to_string()))?;
            for rec in &records {
                images.push(image_from_record(rec)?);
            }
        } else {
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: Value =
                    serde_json::from_str(line).map_err(|e| invalid(idx + 1, e.to_string()))?;
                images.push(image_from_record(&rec)?);
            }
        }
    }
    let label = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "visual_genome".into());
    Corpus::new(images, label)
}

fn id_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn missing(record: &str, field: &str) -> AnnotationError {
    AnnotationError::RecordMissingField {
        record: record.to_string(),
        field: field.to_string(),
    }
}

fn image_from_record(rec: &Value) -> Result<AnnotatedImage, AnnotationError> {
    let image_id = rec
        .get("image_id")
        .and_then(id_text)
        .ok_or_else(|| missing("<unknown image>", "image_id"))?;

    let mut objects = Vec::new();
    let empty = Vec::new();
    let raw_objects = rec.get("objects").and_then(Value::as_array).unwrap_or(&empty);
    for (idx, obj) in raw_objects.iter().enumerate() {
        let record_id = match obj.get("object_id").and_then(id_text) {
            Some(oid) => format!("{image_id}/object {oid}"),
            None => format!("{image_id}/object #{idx}"),
        };
        let raw_name = obj
            .get("name")
            .and_then(Value::as_str)
            .or_else(|| {
                obj.get("names")
                    .and_then(Value::as_array)
                    .and_then(|a| a.first())
                    .and_then(Value::as_str)
            })
            .filter(|n| !normalize_object_name(n).is_empty())
            .ok_or_else(|| missing(&record_id, "name"))?;
        let mut ann = ObjectAnnotation::from_raw(raw_name);
        ann.entity_id = obj.get("object_id").and_then(id_text);
        ann.region_caption = obj
            .get("region_caption")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from);
        ann.bbox = obj.get("bbox").and_then(parse_bbox);
        objects.push(ann);
    }

    let description = rec
        .get("description")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty());
    let caption = match description {
        Some(d) => d.to_string(),
        None => {
            let regions: Vec<&str> = objects
                .iter()
                .filter_map(|o| o.region_caption.as_deref())
                .collect();
            if regions.is_empty() {
                return Err(missing(&image_id, "description"));
            }
            regions.join(". ")
        }
    };

    Ok(AnnotatedImage {
        image_id,
        source: AnnotationSource::VisualGenome,
        captions: vec![caption],
        objects,
    })
}

fn parse_bbox(v: &Value) -> Option<BoundingBox> {
    let get = |keys: &[&str]| -> Option<u32> {
        keys.iter()
            .find_map(|k| v.get(*k))
            .and_then(Value::as_u64)
            .and_then(|n| u32::try_from(n).ok())
    };
    let (x, y, width, height) = if let Some(arr) = v.as_array() {
        let n: Vec<u32> = arr
            .iter()
            .filter_map(|e| e.as_u64().and_then(|n| u32::try_from(n).ok()))
            .collect();
        if n.len() != 4 {
            return None;
        }
        (n[0], n[1], n[2], n[3])
    } else {
        (
            get(&["x"])?,
            get(&["y"])?,
            get(&["w", "width"])?,
            get(&["h", "height"])?,
        )
    };
    (width > 0 && height > 0).then_some(BoundingBox {
        x,
        y,
        width,
        height,
    })
}
