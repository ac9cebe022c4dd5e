//! Image filters and IDF-based topic-entity selection.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{normalize_object_name, AnnotatedImage, Corpus, ObjectAnnotation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("object name {0:?} does not occur in the corpus statistics")]
    UnknownName(String),
    #[error("image {0} has no objects")]
    NoObjects(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    CaptionRichnessMin,
    ObjectCountMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rule: SelectionRule,
    pub threshold_used: usize,
    pub input_count: usize,
    pub retained_count: usize,
    pub rejected_count: usize,
}

/// Document frequencies of normalized object names over a set of images.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_images: usize,
    pub document_frequency: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn df(&self, name: &str) -> Option<usize> {
        self.document_frequency.get(name).copied()
    }

    /// Adds another shard's counts to this one.
    pub fn merge(&mut self, other: &CorpusStats) {
        self.total_images += other.total_images;
        for (name, count) in &other.document_frequency {
            *self.document_frequency.entry(name.clone()).or_default() += count;
        }
    }
}

/// Total caption length in Unicode scalar values, whitespace included.
pub fn caption_richness(image: &AnnotatedImage) -> usize {
    image.captions.iter().map(|c| c.chars().count()).sum()
}

fn filter_with(
    corpus: &Corpus,
    rule: SelectionRule,
    threshold: usize,
    keep: impl Fn(&AnnotatedImage) -> bool,
) -> (Corpus, SelectionReport) {
    let kept: Vec<AnnotatedImage> = corpus.images.iter().filter(|i| keep(i)).cloned().collect();
    let report = SelectionReport {
        rule,
        threshold_used: threshold,
        input_count: corpus.len(),
        retained_count: kept.len(),
        rejected_count: corpus.len() - kept.len(),
    };
    (corpus.with_images(kept), report)
}

/// Keeps images whose caption richness is at least `min_chars`.
pub fn filter_by_caption_richness(corpus: &Corpus, min_chars: usize) -> (Corpus, SelectionReport) {
    filter_with(corpus, SelectionRule::CaptionRichnessMin, min_chars, |img| {
        caption_richness(img) >= min_chars
    })
}

/// Drops images with more than `max_objects` objects.
pub fn filter_by_object_count(corpus: &Corpus, max_objects: usize) -> (Corpus, SelectionReport) {
    filter_with(corpus, SelectionRule::ObjectCountMax, max_objects, |img| {
        img.objects.len() <= max_objects
    })
}

fn image_stats(image: &AnnotatedImage) -> CorpusStats {
    let names: HashSet<String> = image
        .objects
        .iter()
        .map(|o| normalize_object_name(&o.name))
        .filter(|n| !n.is_empty())
        .collect();
    CorpusStats {
        total_images: 1,
        document_frequency: names.into_iter().map(|n| (n, 1)).collect(),
    }
}

pub fn compute_corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for img in &corpus.images {
        stats.merge(&image_stats(img));
    }
    stats
}

/// Natural-log inverse document frequency, unsmoothed.
pub fn idf(name: &str, stats: &CorpusStats) -> Result<f64, SelectionError> {
    let df = stats
        .df(&normalize_object_name(name))
        .ok_or_else(|| SelectionError::UnknownName(name.to_string()))?;
    Ok((stats.total_images as f64 / df as f64).ln())
}

/// Picks the image's rarest object (minimal document frequency). Ties go to
/// the lexicographically smallest name, then to the first occurrence.
pub fn select_topic_entity<'a>(
    image: &'a AnnotatedImage,
    stats: &CorpusStats,
) -> Result<&'a ObjectAnnotation, SelectionError> {
    let mut best: Option<(usize, &str, &ObjectAnnotation)> = None;
    for obj in &image.objects {
        let df = stats
            .df(&obj.name)
            .ok_or_else(|| SelectionError::UnknownName(obj.name.clone()))?;
        let better = match best {
            None => true,
            Some((bdf, bname, _)) => (df, obj.name.as_str()) < (bdf, bname),
        };
        if better {
            best = Some((df, obj.name.as_str(), obj));
        }
    }
    best.map(|(_, _, o)| o)
        .ok_or_else(|| SelectionError::NoObjects(image.image_id.clone()))
}
