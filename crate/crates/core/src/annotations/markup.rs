//! Parser for the Flickr30k Entities sentence markup:
//! `[/EN#<digits>/<type>(/<type>)* <phrase>]`.

use super::AnnotationError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub entity_id: u64,
    /// Type tokens joined with `/`, e.g. `people` or `people/other`.
    pub category: String,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub plain_caption: String,
    pub entities: Vec<EntityMention>,
}

const ENTITY_PREFIX: &str = "/EN";

/// Strips entity markup from one sentence, returning the plain caption and
/// the linked mentions in left-to-right order.
pub fn parse_entity_markup(sentence: &str) -> Result<ParsedSentence, AnnotationError> {
    let mut plain = String::with_capacity(sentence.len());
    let mut entities = Vec::new();
    let mut rest = sentence;
    let mut offset = 0usize;

    loop {
        let next = rest.find(['[', ']']);
        let Some(pos) = next else {
            plain.push_str(rest);
            break;
        };
        if rest.as_bytes()[pos] == b']' {
            return Err(malformed(offset + pos, "unbalanced ']'"));
        }
        plain.push_str(&rest[..pos]);
        let open = offset + pos;
        let body_start = pos + 1;
        let close = rest[body_start..]
            .find(['[', ']'])
            .map(|i| body_start + i)
            .filter(|&i| rest.as_bytes()[i] == b']')
            .ok_or_else(|| malformed(open, "unbalanced '['"))?;
        let mention = parse_mention(&rest[body_start..close], open)?;
        plain.push_str(&mention.phrase);
        entities.push(mention);
        offset += close + 1;
        rest = &rest[close + 1..];
    }

    Ok(ParsedSentence {
        plain_caption: plain,
        entities,
    })
}

fn parse_mention(body: &str, open: usize) -> Result<EntityMention, AnnotationError> {
    let Some(tag_rest) = body.strip_prefix(ENTITY_PREFIX) else {
        return Err(malformed(open, "expected '/EN#' after '['"));
    };
    let Some(tag_rest) = tag_rest.strip_prefix('#') else {
        return Err(malformed(open, "missing '#' in entity tag"));
    };
    let (tag, phrase) = match tag_rest.split_once(' ') {
        Some((tag, phrase)) => (tag, phrase),
        None => (tag_rest, ""),
    };
    if phrase.trim().is_empty() {
        return Err(malformed(open, "empty phrase"));
    }
    let mut parts = tag.split('/');
    let digits = parts.next().unwrap_or_default();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(open, "entity id is not a number"));
    }
    let entity_id = digits
        .parse::<u64>()
        .map_err(|_| malformed(open, "entity id out of range"))?;
    let types: Vec<&str> = parts.collect();
    if types.is_empty() || types.iter().any(|t| t.is_empty()) {
        return Err(malformed(open, "missing type token"));
    }
    Ok(EntityMention {
        entity_id,
        category: types.join("/"),
        phrase: phrase.to_string(),
    })
}

fn malformed(offset: usize, reason: &str) -> AnnotationError {
    AnnotationError::MalformedMarkup {
        offset,
        reason: reason.to_string(),
    }
}
