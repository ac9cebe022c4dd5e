//! Annotated image corpora: the unified data model, name normalization and
//! the canonical newline-delimited corpus format.
//!
//! Source-specific readers live in [`flickr`] (Flickr30k Entities sentence
//! files) and [`visual_genome`] (simplified object/region records).

pub mod flickr;
pub mod markup;
pub mod visual_genome;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flickr::{load_flickr30k_entities, FlickrLoad};
pub use markup::{parse_entity_markup, EntityMention, ParsedSentence};
pub use visual_genome::load_visual_genome;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed entity markup at byte {offset}: {reason}")]
    MalformedMarkup { offset: usize, reason: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("record {record} is missing field {field:?}")]
    RecordMissingField { record: String, field: String },
    #[error("invalid record at {path}:{line}: {reason}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl AnnotationError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Where an image's annotations came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Flickr30kEntities,
    VisualGenome,
    Custom,
}

/// Pixel rectangle, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    pub name: String,
    pub raw_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
}

impl ObjectAnnotation {
    /// Builds an annotation from its surface text; `name` is the normalized form.
    pub fn from_raw(raw: &str) -> Self {
        ObjectAnnotation {
            entity_id: None,
            name: normalize_object_name(raw),
            raw_name: raw.to_string(),
            category: None,
            region_caption: None,
            bbox: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("object name is empty".into());
        }
        if self.name != normalize_object_name(&self.name) {
            return Err(format!("object name {:?} is not normalized", self.name));
        }
        if let Some(b) = self.bbox {
            if b.width == 0 || b.height == 0 {
                return Err(format!("object {:?} has a degenerate bbox", self.name));
            }
        }
        Ok(())
    }
}

/// One image with its captions and object annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub source: AnnotationSource,
    pub captions: Vec<String>,
    pub objects: Vec<ObjectAnnotation>,
}

impl AnnotatedImage {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_id.is_empty() {
            return Err("image_id is empty".into());
        }
        if self.captions.is_empty() {
            return Err(format!("image {} has no captions", self.image_id));
        }
        if self.captions.iter().any(|c| c.is_empty()) {
            return Err(format!("image {} has an empty caption", self.image_id));
        }
        for o in &self.objects {
            o.validate()
                .map_err(|e| format!("image {}: {e}", self.image_id))?;
        }
        Ok(())
    }

    /// Normalized object names in annotation order.
    pub fn object_names(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub images: Vec<AnnotatedImage>,
    pub source_label: String,
    pub created_at: DateTime<Utc>,
}

impl Corpus {
    /// Builds a corpus, rejecting repeated image ids.
    pub fn new(
        images: Vec<AnnotatedImage>,
        source_label: impl Into<String>,
    ) -> Result<Self, AnnotationError> {
        let mut seen = HashSet::with_capacity(images.len());
        for img in &images {
            if !seen.insert(img.image_id.as_str()) {
                return Err(AnnotationError::DuplicateImageId(img.image_id.clone()));
            }
        }
        Ok(Corpus {
            images,
            source_label: source_label.into(),
            created_at: Utc::now(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&AnnotatedImage> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Same label and timestamp, different image list. Used by the filters.
    pub(crate) fn with_images(&self, images: Vec<AnnotatedImage>) -> Corpus {
        Corpus {
            images,
            source_label: self.source_label.clone(),
            created_at: self.created_at,
        }
    }
}

/// Lowercases, trims and collapses internal whitespace. No lemmatization.
pub fn normalize_object_name(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes the canonical record stream: one JSON image record per line.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), AnnotationError> {
    let file = File::create(path).map_err(|e| AnnotationError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for img in &corpus.images {
        let line = serde_json::to_string(img).expect("image records always serialize");
        writeln!(out, "{line}").map_err(|e| AnnotationError::io(path, e))?;
    }
    out.flush().map_err(|e| AnnotationError::io(path, e))
}

/// Reads the canonical record stream written by [`write_corpus`].
pub fn read_corpus(path: &Path) -> Result<Corpus, AnnotationError> {
    let file = File::open(path).map_err(|e| AnnotationError::io(path, e))?;
    let mut images = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AnnotationError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |reason: String| AnnotationError::InvalidRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let img: AnnotatedImage = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        img.validate().map_err(invalid)?;
        images.push(img);
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(images, label)
}

/// Collects regular files under `path` (or `path` itself), sorted for
/// deterministic load order.
pub(crate) fn collect_files(path: &Path, ext: &[&str]) -> Result<Vec<PathBuf>, AnnotationError> {
    let meta = std::fs::metadata(path).map_err(|e| AnnotationError::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| AnnotationError::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| AnnotationError::io(&dir, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| ext.contains(&e))
            {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(id: &str) -> AnnotatedImage {
        AnnotatedImage {
            image_id: id.into(),
            source: AnnotationSource::Custom,
            captions: vec!["a cat on a mat".into()],
            objects: vec![ObjectAnnotation::from_raw("Cat")],
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_object_name("  Red   T-Shirt "), "red t-shirt");
        assert_eq!(normalize_object_name("violin"), "violin");
        assert_eq!(normalize_object_name("Dogs"), "dogs");
        assert_eq!(normalize_object_name("   "), "");
    }

    #[test]
    fn corpus_rejects_duplicate_ids() {
        let err = Corpus::new(vec![image("1"), image("1")], "t").unwrap_err();
        assert!(matches!(err, AnnotationError::DuplicateImageId(id) if id == "1"));
    }

    #[test]
    fn validate_catches_degenerate_bbox() {
        let mut img = image("1");
        img.objects[0].bbox = Some(BoundingBox {
            x: 0,
            y: 0,
            width: 0,
            height: 4,
        });
        assert!(img.validate().is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut img = image("7");
        img.objects[0].bbox = Some(BoundingBox {
            x: 1,
            y: 2,
            width: 3,
            height: 4,
        });
        img.objects[0].region_caption = Some("a grey cat".into());
        let corpus = Corpus::new(vec![img, image("8")], "c").unwrap();
        write_corpus(&corpus, &path).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back.images, corpus.images);
    }

    #[test]
    fn canonical_reader_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            r#"{"image_id":"1","source":"custom","captions":["x"],"objects":[],"extra":1}"#,
        )
        .unwrap();
        assert!(matches!(
            read_corpus(&path),
            Err(AnnotationError::InvalidRecord { line: 1, .. })
        ));
    }
}
