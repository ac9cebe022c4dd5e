//! Loader for Flickr30k Entities sentence files.
//!
//! Two layouts are accepted, possibly mixed under one directory:
//!
//! * per-image files (`<image_id>.txt`), one marked-up sentence per line,
//!   as distributed upstream;
//! * tab-separated files, one `<image_id>\t<sentence>` pair per line.
//!
//! An image id declared by more than one file is an error.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::warn;

use super::{
    collect_files, parse_entity_markup, AnnotatedImage, AnnotationError, AnnotationSource, Corpus,
    ObjectAnnotation,
};

#[derive(Debug, Clone)]
pub struct FlickrLoad {
    pub corpus: Corpus,
    /// Sentences dropped because their markup was malformed.
    pub skipped_lines: usize,
}

#[derive(Default)]
struct Pending {
    captions: Vec<String>,
    objects: Vec<ObjectAnnotation>,
    seen_names: HashSet<String>,
}

impl Pending {
    fn add_sentence(&mut self, sentence: &str, image_id: &str, skipped: &mut usize) {
        match parse_entity_markup(sentence) {
            Ok(parsed) => {
                for ent in parsed.entities {
                    let mut obj = ObjectAnnotation::from_raw(&ent.phrase);
                    if obj.name.is_empty() || !self.seen_names.insert(obj.name.clone()) {
                        continue;
                    }
                    obj.entity_id = Some(ent.entity_id.to_string());
                    obj.category = Some(ent.category);
                    self.objects.push(obj);
                }
                self.captions.push(parsed.plain_caption);
            }
            Err(e) => {
                *skipped += 1;
                warn!("skipping sentence for image {image_id}: {e}");
            }
        }
    }
}

pub fn load_flickr30k_entities(path: &Path) -> Result<FlickrLoad, AnnotationError> {
    let files = collect_files(path, &["txt", "tsv"])?;
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    let mut owner: HashMap<String, PathBuf> = HashMap::new();
    let mut skipped = 0usize;

    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| AnnotationError::io(&file, e))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let tabbed = lines.iter().any(|l| l.contains('\t'));

        // Group this file's sentences by image id, keeping first-seen order.
        let mut groups: BTreeMap<usize, (String, Vec<&str>)> = BTreeMap::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for line in &lines {
            let (id, sentence) = if tabbed {
                match line.split_once('\t') {
                    Some((id, s)) => (id.trim().to_string(), s),
                    None => {
                        skipped += 1;
                        warn!("skipping line without image id in {}", file.display());
                        continue;
                    }
                }
            } else {
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (stem, *line)
            };
            let next = index.len();
            let slot = *index.entry(id.clone()).or_insert(next);
            groups.entry(slot).or_insert_with(|| (id, Vec::new())).1.push(sentence);
        }

        for (_, (id, sentences)) in groups {
            if id.is_empty() {
                return Err(AnnotationError::RecordMissingField {
                    record: file.display().to_string(),
                    field: "image_id".into(),
                });
            }
            if let Some(prev) = owner.get(&id) {
                if prev != &file {
                    return Err(AnnotationError::DuplicateImageId(id));
                }
            }
            owner.insert(id.clone(), file.clone());
            let entry = pending.entry(id.clone()).or_insert_with(|| {
                order.push(id.clone());
                Pending::default()
            });
            for s in sentences {
                entry.add_sentence(s.trim(), &id, &mut skipped);
            }
        }
    }

    let mut images = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("every ordered id has pending state");
        if p.captions.is_empty() {
            warn!("image {id} has no parseable captions; dropped");
            continue;
        }
        images.push(AnnotatedImage {
            image_id: id,
            source: AnnotationSource::Flickr30kEntities,
            captions: p.captions,
            objects: p.objects,
        });
    }

    let label = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "flickr30k_entities".into());
    Ok(FlickrLoad {
        corpus: Corpus::new(images, label)?,
        skipped_lines: skipped,
    })
}
