//! Prompt templates for synthesis, complication, verification and
//! reformulation, plus knowledge-category sampling.
//!
//! Templates use `{name}` placeholders drawn from a fixed vocabulary. Any
//! other brace text is literal. Each family declares the placeholders its
//! body must contain, exactly once each.

mod defaults;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotations::{AnnotatedImage, ObjectAnnotation};
use crate::record::{InstructionFormat, InstructionRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("binding {{{0}}} does not name a placeholder of this template")]
    UnknownPlaceholder(String),
    #[error("image {0} lacks the captions or objects this prompt needs")]
    EmptyAnnotations(String),
    #[error("topic entity {topic:?} is not an object of image {image_id}")]
    TopicNotInImage { topic: String, image_id: String },
    #[error("record {record_id} has format {found}, expected {expected}")]
    WrongFormat {
        record_id: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid {family} template: {reason}")]
    InvalidTemplate { family: &'static str, reason: String },
    #[error("cannot read template {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Every placeholder name a template may use.
pub const PLACEHOLDERS: &[&str] = &[
    "captions",
    "objects",
    "topic_entity",
    "categories",
    "instruction",
    "response",
    "count",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFamily {
    CrossModalSynthesis,
    OutsideKnowledgeSynthesis,
    Complication,
    Verification,
    ReformulateBool,
    ReformulateMultichoice,
}

impl PromptFamily {
    pub const ALL: [PromptFamily; 6] = [
        PromptFamily::CrossModalSynthesis,
        PromptFamily::OutsideKnowledgeSynthesis,
        PromptFamily::Complication,
        PromptFamily::Verification,
        PromptFamily::ReformulateBool,
        PromptFamily::ReformulateMultichoice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptFamily::CrossModalSynthesis => "cross_modal_synthesis",
            PromptFamily::OutsideKnowledgeSynthesis => "outside_knowledge_synthesis",
            PromptFamily::Complication => "complication",
            PromptFamily::Verification => "verification",
            PromptFamily::ReformulateBool => "reformulate_bool",
            PromptFamily::ReformulateMultichoice => "reformulate_multichoice",
        }
    }

    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            PromptFamily::CrossModalSynthesis => &["captions", "objects", "count"],
            PromptFamily::OutsideKnowledgeSynthesis => {
                &["captions", "topic_entity", "categories", "count"]
            }
            PromptFamily::Complication | PromptFamily::Verification => {
                &["captions", "objects", "instruction", "response"]
            }
            PromptFamily::ReformulateBool | PromptFamily::ReformulateMultichoice => {
                &["instruction", "response"]
            }
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            PromptFamily::CrossModalSynthesis => defaults::CROSS_MODAL,
            PromptFamily::OutsideKnowledgeSynthesis => defaults::OUTSIDE_KNOWLEDGE,
            PromptFamily::Complication => defaults::COMPLICATION,
            PromptFamily::Verification => defaults::VERIFICATION,
            PromptFamily::ReformulateBool => defaults::REFORMULATE_BOOL,
            PromptFamily::ReformulateMultichoice => defaults::REFORMULATE_MULTICHOICE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

fn segments(body: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .map(|close| &after[..close])
            .filter(|name| PLACEHOLDERS.contains(name));
        match slot {
            Some(name) => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut literal)));
                }
                out.push(Segment::Slot(name.to_string()));
                rest = &after[name.len() + 1..];
            }
            None => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        out.push(Segment::Text(literal));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    family: PromptFamily,
    body: String,
    segments: Vec<Segment>,
    fingerprint: String,
}

impl PromptTemplate {
    pub fn new(family: PromptFamily, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let segments = segments(&body);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seg in &segments {
            if let Segment::Slot(name) = seg {
                *counts.entry(name.as_str()).or_default() += 1;
            }
        }
        let required = family.required_placeholders();
        for name in required {
            // `count` may legitimately appear several times in prose.
            let n = counts.get(name).copied().unwrap_or(0);
            let ok = if *name == "count" { n >= 1 } else { n == 1 };
            if !ok {
                return Err(PromptError::InvalidTemplate {
                    family: family.as_str(),
                    reason: format!("placeholder {{{name}}} must occur exactly once, found {n}"),
                });
            }
        }
        if let Some(extra) = counts.keys().find(|k| !required.contains(k)) {
            return Err(PromptError::InvalidTemplate {
                family: family.as_str(),
                reason: format!("placeholder {{{extra}}} is not used by this family"),
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(family.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(body.as_bytes());
        let fingerprint = hex::encode(&hasher.finalize()[..8]);
        Ok(PromptTemplate {
            family,
            body,
            segments,
            fingerprint,
        })
    }

    pub fn builtin(family: PromptFamily) -> Self {
        Self::new(family, family.default_body()).expect("built-in templates are valid")
    }

    pub fn family(&self) -> PromptFamily {
        self.family
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Stable hash of family and body; cited by every record the template produces.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn required_placeholders(&self) -> BTreeSet<&'static str> {
        self.family.required_placeholders().iter().copied().collect()
    }

    /// Substitutes every placeholder with its binding, verbatim, in one pass.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let required = self.family.required_placeholders();
        if let Some(unknown) = bindings.keys().find(|k| !required.contains(k)) {
            return Err(PromptError::UnknownPlaceholder(unknown.to_string()));
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => {
                    let value = bindings
                        .get(name.as_str())
                        .ok_or_else(|| PromptError::MissingBinding(name.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// Text of a built prompt plus the fingerprint of the template behind it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    pub template_fingerprint: String,
}

/// The six templates in use for a run.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<PromptFamily, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        PromptLibrary {
            templates: PromptFamily::ALL
                .iter()
                .map(|&f| (f, PromptTemplate::builtin(f)))
                .collect(),
        }
    }
}

impl PromptLibrary {
    /// Built-in templates, with any family in `overrides` read from its file instead.
    pub fn with_overrides(overrides: &BTreeMap<PromptFamily, PathBuf>) -> Result<Self, PromptError> {
        let mut lib = PromptLibrary::default();
        for (&family, path) in overrides {
            let body = read_template(path)?;
            lib.templates.insert(family, PromptTemplate::new(family, body)?);
        }
        Ok(lib)
    }

    pub fn template(&self, family: PromptFamily) -> &PromptTemplate {
        &self.templates[&family]
    }

    pub fn fingerprints(&self) -> BTreeMap<PromptFamily, String> {
        self.templates
            .iter()
            .map(|(f, t)| (*f, t.fingerprint().to_string()))
            .collect()
    }

    fn build(
        &self,
        family: PromptFamily,
        bindings: BTreeMap<&str, String>,
    ) -> Result<BuiltPrompt, PromptError> {
        let template = self.template(family);
        Ok(BuiltPrompt {
            text: template.render(&bindings)?,
            template_fingerprint: template.fingerprint().to_string(),
        })
    }

    pub fn cross_modal(&self, image: &AnnotatedImage, count: usize) -> Result<BuiltPrompt, PromptError> {
        if image.captions.is_empty() || image.objects.is_empty() {
            return Err(PromptError::EmptyAnnotations(image.image_id.clone()));
        }
        self.build(
            PromptFamily::CrossModalSynthesis,
            BTreeMap::from([
                ("captions", render_captions(image)),
                ("objects", render_objects(image)),
                ("count", count.to_string()),
            ]),
        )
    }

    pub fn outside_knowledge(
        &self,
        image: &AnnotatedImage,
        topic: &ObjectAnnotation,
        categories: &[String],
        count: usize,
    ) -> Result<BuiltPrompt, PromptError> {
        if !image.objects.iter().any(|o| o == topic) {
            return Err(PromptError::TopicNotInImage {
                topic: topic.name.clone(),
                image_id: image.image_id.clone(),
            });
        }
        if image.captions.is_empty() {
            return Err(PromptError::EmptyAnnotations(image.image_id.clone()));
        }
        let topic_text = match &topic.region_caption {
            Some(rc) => format!("{} ({})", topic.name, rc),
            None => topic.name.clone(),
        };
        self.build(
            PromptFamily::OutsideKnowledgeSynthesis,
            BTreeMap::from([
                ("captions", render_captions(image)),
                ("topic_entity", topic_text),
                ("categories", categories.join("; ")),
                ("count", count.to_string()),
            ]),
        )
    }

    pub fn complication(
        &self,
        record: &InstructionRecord,
        image: &AnnotatedImage,
    ) -> Result<BuiltPrompt, PromptError> {
        require_open_ended(record)?;
        self.build(PromptFamily::Complication, grounded_bindings(record, image))
    }

    pub fn verification(
        &self,
        record: &InstructionRecord,
        image: &AnnotatedImage,
    ) -> Result<BuiltPrompt, PromptError> {
        self.build(PromptFamily::Verification, grounded_bindings(record, image))
    }

    pub fn reformulate_bool(&self, record: &InstructionRecord) -> Result<BuiltPrompt, PromptError> {
        require_open_ended(record)?;
        self.build(PromptFamily::ReformulateBool, pair_bindings(record))
    }

    pub fn reformulate_multichoice(&self, record: &InstructionRecord) -> Result<BuiltPrompt, PromptError> {
        require_open_ended(record)?;
        self.build(PromptFamily::ReformulateMultichoice, pair_bindings(record))
    }
}

fn read_template(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|e| PromptError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn require_open_ended(record: &InstructionRecord) -> Result<(), PromptError> {
    if record.format != InstructionFormat::OpenEnded {
        return Err(PromptError::WrongFormat {
            record_id: record.record_id.clone(),
            expected: InstructionFormat::OpenEnded.as_str(),
            found: record.format.as_str(),
        });
    }
    Ok(())
}

fn render_captions(image: &AnnotatedImage) -> String {
    image
        .captions
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, c))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_objects(image: &AnnotatedImage) -> String {
    image.object_names().collect::<Vec<_>>().join(", ")
}

fn pair_bindings(record: &InstructionRecord) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("instruction", record.instruction.clone()),
        ("response", record.response.clone()),
    ])
}

fn grounded_bindings(record: &InstructionRecord, image: &AnnotatedImage) -> BTreeMap<&'static str, String> {
    let mut b = pair_bindings(record);
    b.insert("captions", render_captions(image));
    b.insert("objects", render_objects(image));
    b
}

/// The ten knowledge categories of the OK-VQA benchmark.
pub const OKVQA_CATEGORIES: [&str; 10] = [
    "Vehicles and Transportation",
    "Brands, Companies and Products",
    "Objects, Material and Clothing",
    "Sports and Recreation",
    "Cooking and Food",
    "Geography, History, Language and Culture",
    "People and Everyday Life",
    "Plants and Animals",
    "Science and Technology",
    "Weather and Climate",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCategorySet {
    categories: Vec<String>,
    sample_count: usize,
}

impl KnowledgeCategorySet {
    pub fn new(categories: Vec<String>, sample_count: usize) -> Result<Self, String> {
        if categories.is_empty() {
            return Err("at least one knowledge category is required".into());
        }
        if categories.iter().any(|c| c.trim().is_empty()) {
            return Err("knowledge categories must be non-empty".into());
        }
        let distinct: BTreeSet<&String> = categories.iter().collect();
        if distinct.len() != categories.len() {
            return Err("knowledge categories must be distinct".into());
        }
        if sample_count == 0 || sample_count > categories.len() {
            return Err(format!(
                "sample_count must be in 1..={}, got {sample_count}",
                categories.len()
            ));
        }
        Ok(KnowledgeCategorySet {
            categories,
            sample_count,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
}

impl Default for KnowledgeCategorySet {
    fn default() -> Self {
        KnowledgeCategorySet::new(OKVQA_CATEGORIES.iter().map(|s| s.to_string()).collect(), 2)
            .expect("default category set is valid")
    }
}

/// Draws `sample_count` distinct labels uniformly without replacement.
pub fn sample_knowledge_categories(set: &KnowledgeCategorySet, rng_seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rand::seq::index::sample(&mut rng, set.categories.len(), set.sample_count)
        .into_iter()
        .map(|i| set.categories[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::AnnotationSource;
    use crate::record::{fixtures::open, TaskType};

    fn image() -> AnnotatedImage {
        AnnotatedImage {
            image_id: "img1".into(),
            source: AnnotationSource::Custom,
            captions: vec!["A man rides a horse".into(), "A rider on a trail".into()],
            objects: vec![
                ObjectAnnotation::from_raw("man"),
                ObjectAnnotation {
                    region_caption: Some("an old violin with worn varnish".into()),
                    ..ObjectAnnotation::from_raw("violin")
                },
            ],
        }
    }

    fn contains_slot(text: &str) -> bool {
        PLACEHOLDERS.iter().any(|p| text.contains(&format!("{{{p}}}")))
    }

    #[test]
    fn render_examples() {
        let t = PromptTemplate::new(PromptFamily::ReformulateBool, "Q: {instruction} A: {response}").unwrap();
        let out = t
            .render(&BTreeMap::from([
                ("instruction", "a cat".to_string()),
                ("response", "yes".to_string()),
            ]))
            .unwrap();
        assert_eq!(out, "Q: a cat A: yes");
        assert_eq!(
            t.render(&BTreeMap::from([("instruction", "x".to_string())])),
            Err(PromptError::MissingBinding("response".into()))
        );
        assert_eq!(
            t.render(&BTreeMap::from([
                ("instruction", "x".to_string()),
                ("response", "y".to_string()),
                ("foo", "z".to_string()),
            ])),
            Err(PromptError::UnknownPlaceholder("foo".into()))
        );
    }

    #[test]
    fn literal_braces_survive_and_bindings_are_verbatim() {
        let t = PromptTemplate::new(
            PromptFamily::ReformulateBool,
            "{\"json\": 1} {instruction} / {response}",
        )
        .unwrap();
        let out = t
            .render(&BTreeMap::from([
                ("instruction", "{response}".to_string()),
                ("response", "r".to_string()),
            ]))
            .unwrap();
        assert_eq!(out, "{\"json\": 1} {response} / r");
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new(PromptFamily::ReformulateBool, "{instruction}").is_err());
        assert!(PromptTemplate::new(
            PromptFamily::ReformulateBool,
            "{instruction} {instruction} {response}"
        )
        .is_err());
        assert!(PromptTemplate::new(PromptFamily::ReformulateBool, "{instruction} {response} {objects}").is_err());
        for f in PromptFamily::ALL {
            let t = PromptTemplate::builtin(f);
            assert_eq!(t.fingerprint().len(), 16);
        }
    }

    #[test]
    fn cross_modal_prompt() {
        let lib = PromptLibrary::default();
        let p = lib.cross_modal(&image(), 3).unwrap();
        assert!(p.text.contains("design 3 cross-modal reasoning instructions"));
        assert!(p.text.contains("at one time"));
        assert!(p.text.contains("A man rides a horse"));
        assert!(p.text.contains("man, violin"));
        assert!(!contains_slot(&p.text));
        let mut bare = image();
        bare.objects.clear();
        assert_eq!(
            lib.cross_modal(&bare, 3),
            Err(PromptError::EmptyAnnotations("img1".into()))
        );
    }

    #[test]
    fn outside_knowledge_prompt() {
        let lib = PromptLibrary::default();
        let img = image();
        let cats = vec!["Plants and Animals".to_string(), "Science and Technology".to_string()];
        let p = lib.outside_knowledge(&img, &img.objects[1], &cats, 1).unwrap();
        assert!(p.text.contains("one or more hops"));
        assert!(p.text.contains("violin"));
        assert!(p.text.contains("an old violin with worn varnish"));
        assert!(p.text.contains("Plants and Animals; Science and Technology"));
        assert!(!contains_slot(&p.text));
        let stranger = ObjectAnnotation::from_raw("tuba");
        assert!(matches!(
            lib.outside_knowledge(&img, &stranger, &cats, 1),
            Err(PromptError::TopicNotInImage { .. })
        ));
    }

    #[test]
    fn complication_and_verification_prompts() {
        let lib = PromptLibrary::default();
        let rec = open("r1", "img1", TaskType::CrossModal, 0, None);
        let p = lib.complication(&rec, &image()).unwrap();
        assert!(p.text.contains("You are a Prompt Rewriter"));
        assert!(p.text.contains(&rec.instruction));
        assert!(p.text.contains(&rec.response));
        let v = lib.verification(&rec, &image()).unwrap();
        assert!(v.text.contains("You are a Prompt Judge"));
        assert!(v.text.contains("Verdict: yes"));
        assert!(v.text.contains("A rider on a trail"));
        let mut b = rec.clone();
        b.format = InstructionFormat::Bool;
        b.response = "yes".into();
        assert!(matches!(lib.complication(&b, &image()), Err(PromptError::WrongFormat { .. })));
    }

    #[test]
    fn reformulation_prompts() {
        let lib = PromptLibrary::default();
        let rec = open("r1", "img1", TaskType::CrossModal, 0, None);
        let b = lib.reformulate_bool(&rec).unwrap();
        assert!(b.text.contains("expected answer is binary"));
        assert!(b.text.contains("\"yes\" or \"no\""));
        let m = lib.reformulate_multichoice(&rec).unwrap();
        assert!(m.text.contains("A. <option>"));
        let mut mc = rec.clone();
        mc.format = InstructionFormat::MultiChoice;
        assert!(matches!(lib.reformulate_multichoice(&mc), Err(PromptError::WrongFormat { .. })));
        assert!(matches!(lib.reformulate_bool(&mc), Err(PromptError::WrongFormat { .. })));
    }

    #[test]
    fn prompts_are_pure() {
        let lib = PromptLibrary::default();
        let a = lib.cross_modal(&image(), 3).unwrap();
        let b = lib.cross_modal(&image(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overrides_are_loaded_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bool.txt");
        std::fs::write(&path, "custom {instruction} -> {response}").unwrap();
        let lib = PromptLibrary::with_overrides(&BTreeMap::from([(PromptFamily::ReformulateBool, path)])).unwrap();
        let rec = open("r1", "img1", TaskType::CrossModal, 0, None);
        let p = lib.reformulate_bool(&rec).unwrap();
        assert!(p.text.starts_with("custom Instruction r1?"));
        assert_ne!(
            p.template_fingerprint,
            PromptTemplate::builtin(PromptFamily::ReformulateBool).fingerprint()
        );
    }

    #[test]
    fn category_sampling() {
        let abc = KnowledgeCategorySet::new(vec!["A".into(), "B".into(), "C".into()], 3).unwrap();
        let mut got = sample_knowledge_categories(&abc, 7);
        got.sort();
        assert_eq!(got, vec!["A", "B", "C"]);

        let set = KnowledgeCategorySet::default();
        assert_eq!(sample_knowledge_categories(&set, 42), sample_knowledge_categories(&set, 42));
        let sampled: Vec<String> = sample_knowledge_categories(&set, 42);
        assert_eq!(sampled.len(), 2);
        assert_ne!(sampled[0], sampled[1]);
    }

    #[test]
    fn category_sampling_frozen_seeds() {
        let one = KnowledgeCategorySet::new(OKVQA_CATEGORIES.iter().map(|s| s.to_string()).collect(), 1).unwrap();
        let drawn: Vec<String> = (0..10u64)
            .map(|seed| sample_knowledge_categories(&one, seed).remove(0))
            .collect();
        let distinct: BTreeSet<&String> = drawn.iter().collect();
        assert!(distinct.len() >= 2);
        assert_eq!(drawn, FROZEN_SINGLE_DRAWS);
    }

    // Recorded from the first run of the seeded generator (seeds 0..10).
    const FROZEN_SINGLE_DRAWS: [&str; 10] = [
        "People and Everyday Life",
        "Geography, History, Language and Culture",
        "Geography, History, Language and Culture",
        "Brands, Companies and Products",
        "Plants and Animals",
        "Objects, Material and Clothing",
        "Sports and Recreation",
        "Brands, Companies and Products",
        "Brands, Companies and Products",
        "Geography, History, Language and Culture",
    ];

    #[test]
    fn category_set_invariants() {
        assert!(KnowledgeCategorySet::new(vec![], 1).is_err());
        assert!(KnowledgeCategorySet::new(vec!["A".into()], 2).is_err());
        assert!(KnowledgeCategorySet::new(vec!["A".into(), "A".into()], 1).is_err());
        assert!(KnowledgeCategorySet::new(vec!["A".into()], 0).is_err());
    }
}
