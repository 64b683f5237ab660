//! Per-chunk entity extraction.
//!
//! Two backends produce `(name, description)` pairs for a chunk: a chat
//! model prompted for a JSON array, and a deterministic rule-based stub used
//! for offline runs and tests. Descriptions longer than the configured
//! threshold are shortened before they leave this module.

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::gateway::{Message, ModelGateway, Phase};
use crate::index::normalize_name;

pub const MAX_NAME_CHARS: usize = 256;
pub const MIN_SHORTEN_THRESHOLD: usize = 64;
const ELLIPSIS: char = '…';

/// Instructions for the extraction model. The chunk text is sent as the user
/// message.
pub const EXTRACTION_PROMPT: &str = "\
You extract named entities from a single passage of text.
For every entity (person, organization, place, object, substance, concept, event) \
mentioned in the passage, write a short description of what the passage says about it.
Base each description on the passage content only; do not add outside knowledge.
Respond with JSON only: an array of objects of the form \
{\"name\": \"<entity name>\", \"description\": \"<description>\"}.
Return [] if the passage mentions no entities.";

const REPAIR_PROMPT: &str = "\
Your previous reply could not be parsed as a JSON array of \
{\"name\": ..., \"description\": ...} objects. Reply again with the JSON array only, \
no prose and no code fences.";

const SHORTEN_PROMPT: &str = "\
Shorten the following entity description to at most {limit} characters. \
Keep the facts that identify the entity. Reply with the shortened description only.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub name: String,
    pub description: String,
    pub chunk_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorBackend {
    #[default]
    Stub,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub backend: ExtractorBackend,
    /// Maximum description length in characters.
    pub shorten_threshold: usize,
    pub max_mentions_per_chunk: Option<usize>,
    /// Ask the chat model to shorten long descriptions instead of truncating.
    pub llm_shortening: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            backend: ExtractorBackend::Stub,
            shorten_threshold: 1024,
            max_mentions_per_chunk: None,
            llm_shortening: false,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shorten_threshold < MIN_SHORTEN_THRESHOLD {
            return Err(Error::invalid(format!(
                "shorten_threshold must be >= {MIN_SHORTEN_THRESHOLD}, got {}",
                self.shorten_threshold
            )));
        }
        if self.max_mentions_per_chunk == Some(0) {
            return Err(Error::invalid("max_mentions_per_chunk must be >= 1 when set"));
        }
        Ok(())
    }
}

/// Extracts the mentions of one chunk.
pub fn extract(chunk: &Chunk, cfg: &ExtractorConfig, gateway: Option<&ModelGateway>) -> Result<Vec<EntityMention>> {
    cfg.validate()?;
    let raw = match cfg.backend {
        ExtractorBackend::Stub => stub_extract(&chunk.text),
        ExtractorBackend::Llm => {
            let gw = gateway.ok_or_else(|| Error::invalid("llm extractor requires a model gateway"))?;
            llm_extract(&chunk.text, gw)?
        }
    };

    let mut mentions = merge_duplicates(raw, chunk.chunk_id);
    if let Some(max) = cfg.max_mentions_per_chunk {
        mentions.truncate(max);
    }
    let shortener = if cfg.llm_shortening { gateway } else { None };
    for m in &mut mentions {
        m.description = shorten(&m.description, cfg.shorten_threshold, shortener);
    }
    Ok(mentions)
}

/// Extracts every chunk with at most `max_concurrent` extractions in flight.
/// The result is indexed like `chunks`, whatever order the calls finish in.
pub fn extract_all(
    chunks: &[Chunk],
    cfg: &ExtractorConfig,
    gateway: Option<&ModelGateway>,
    max_concurrent: usize,
) -> Result<Vec<Vec<EntityMention>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_concurrent.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build extraction pool: {e}")))?;
    pool.install(|| chunks.par_iter().map(|c| extract(c, cfg, gateway)).collect())
}

fn llm_extract(text: &str, gw: &ModelGateway) -> Result<Vec<(String, String)>> {
    let request = gw.chat_request(vec![Message::system(EXTRACTION_PROMPT), Message::user(text)]);
    let first = gw.chat(Phase::Index, &request)?.content;
    match parse_mentions(&first) {
        Ok(v) => Ok(v),
        Err(err) => {
            log::warn!("unparseable extraction output, retrying once: {err}");
            let repair = gw.chat_request(vec![
                Message::system(EXTRACTION_PROMPT),
                Message::user(format!(
                    "{REPAIR_PROMPT}\n\nPrevious reply:\n{first}\n\nPassage:\n{text}"
                )),
            ]);
            let second = gw.chat(Phase::Index, &repair)?.content;
            parse_mentions(&second)
        }
    }
}

#[derive(Deserialize)]
struct RawMention {
    name: String,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawOutput {
    List(Vec<RawMention>),
    Wrapped { entities: Vec<RawMention> },
}

/// Parses a model reply into `(name, description)` pairs. Code fences and
/// prose around the JSON are tolerated; entries with blank names or
/// descriptions are dropped.
pub fn parse_mentions(reply: &str) -> Result<Vec<(String, String)>> {
    let body = strip_fences(reply);
    let parsed: RawOutput = serde_json::from_str(body)
        .or_else(|first_err| {
            let (Some(a), Some(b)) = (body.find('['), body.rfind(']')) else {
                return Err(first_err);
            };
            if a >= b {
                return Err(first_err);
            }
            serde_json::from_str(&body[a..=b])
        })
        .map_err(|e| Error::MalformedOutput(e.to_string()))?;
    let items = match parsed {
        RawOutput::List(v) => v,
        RawOutput::Wrapped { entities } => entities,
    };
    Ok(items
        .into_iter()
        .filter_map(|m| {
            let name = m.name.trim().to_string();
            let description = m.description.trim().to_string();
            if name.is_empty() || description.is_empty() {
                return None;
            }
            if name.chars().count() > MAX_NAME_CHARS {
                log::warn!("dropping entity with {}-char name", name.chars().count());
                return None;
            }
            Some((name, description))
        })
        .collect())
}

fn strip_fences(reply: &str) -> &str {
    let t = reply.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Merges pairs whose names normalize equally, keeping the first spelling
/// and joining descriptions with a space.
fn merge_duplicates(raw: Vec<(String, String)>, chunk_id: usize) -> Vec<EntityMention> {
    let mut out: Vec<EntityMention> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    for (name, description) in raw {
        let key = normalize_name(&name);
        if key.is_empty() {
            continue;
        }
        match keys.iter().position(|k| *k == key) {
            Some(i) => {
                let existing = &mut out[i].description;
                if *existing != description {
                    existing.push(' ');
                    existing.push_str(&description);
                }
            }
            None => {
                keys.push(key);
                out.push(EntityMention {
                    name,
                    description,
                    chunk_id,
                });
            }
        }
    }
    out
}

/// Returns `description` unchanged when it fits in `threshold` characters,
/// otherwise a shortened version of at most `threshold` characters.
///
/// With a gateway the chat model is asked first; any failure, or a reply
/// that is still too long, falls back to truncation at the last whitespace
/// followed by an ellipsis.
pub fn shorten(description: &str, threshold: usize, gateway: Option<&ModelGateway>) -> String {
    let threshold = threshold.max(MIN_SHORTEN_THRESHOLD);
    if description.chars().count() <= threshold {
        return description.to_string();
    }
    if let Some(gw) = gateway {
        let prompt = SHORTEN_PROMPT.replace("{limit}", &threshold.to_string());
        let request = gw.chat_request(vec![Message::system(prompt), Message::user(description)]);
        match gw.chat(Phase::Index, &request) {
            Ok(resp) => {
                let text = resp.content.trim();
                if !text.is_empty() {
                    return truncate_description(text, threshold);
                }
            }
            Err(e) => log::warn!("llm shortening failed, truncating instead: {e}"),
        }
    }
    truncate_description(description, threshold)
}

/// Offline shortening: cut at the last whitespace within the first
/// `threshold - 1` characters (or hard-cut there when there is none) and
/// append `…`.
pub fn truncate_description(text: &str, threshold: usize) -> String {
    if text.chars().count() <= threshold {
        return text.to_string();
    }
    let budget = threshold.saturating_sub(1);
    let mut cut_byte = None;
    let mut hard_byte = text.len();
    for (n, (i, c)) in text.char_indices().enumerate() {
        if n == budget {
            hard_byte = i;
            if c.is_whitespace() {
                cut_byte = Some(i);
            }
            break;
        }
        if c.is_whitespace() && n > 0 {
            cut_byte = Some(i);
        }
    }
    let prefix = match cut_byte {
        Some(b) if !text[..b].trim_end().is_empty() => text[..b].trim_end(),
        _ => &text[..hard_byte],
    };
    let mut out = prefix.to_string();
    out.push(ELLIPSIS);
    out
}

/// Splits text into sentences ending in `.`, `!` or `?` followed by
/// whitespace (or the end of the text). Returned slices are trimmed.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_break = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_break {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

const SENTENCE_STOPWORDS: &[&str] = &[
    "A", "After", "Also", "An", "And", "As", "At", "Before", "But", "By", "During", "For", "From", "He", "Her", "His",
    "However", "I", "If", "In", "Into", "It", "Its", "Of", "On", "Or", "Our", "She", "Since", "So", "That", "The",
    "Their", "Then", "There", "These", "They", "This", "Those", "To", "Under", "We", "What", "When", "Where", "Which",
    "While", "Who", "With", "You",
];

fn is_capitalized_word(core: &str) -> bool {
    let mut chars = core.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    first.is_uppercase()
        && core.chars().count() >= 2
        && core.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '\'')
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Rule-based extractor: names are maximal runs of capitalized words (each
/// at least two characters); a stopword opening a sentence is not part of a
/// name. Each name is described by the sentences that mention it
/// (case-insensitive, whole words), joined with a space.
pub fn stub_extract(text: &str) -> Vec<(String, String)> {
    let sentences = split_sentences(text);
    let mut names: Vec<String> = Vec::new();

    for sentence in &sentences {
        let mut run: Vec<&str> = Vec::new();
        let mut run_starts_sentence = false;
        let flush = |run: &mut Vec<&str>, at_start: bool, names: &mut Vec<String>| {
            if at_start && run.first().is_some_and(|w| SENTENCE_STOPWORDS.contains(w)) {
                run.remove(0);
            }
            if !run.is_empty() {
                let name = run.join(" ");
                if !names.iter().any(|n| normalize_name(n) == normalize_name(&name)) {
                    names.push(name);
                }
            }
            run.clear();
        };

        for (pos, token) in sentence.split_whitespace().enumerate() {
            let leading = token.starts_with(is_edge_punct);
            let trailing = token.ends_with(is_edge_punct);
            let core = token.trim_matches(is_edge_punct);
            if leading && !run.is_empty() {
                flush(&mut run, run_starts_sentence, &mut names);
            }
            if is_capitalized_word(core) {
                if run.is_empty() {
                    run_starts_sentence = pos == 0;
                }
                run.push(core);
                if trailing {
                    flush(&mut run, run_starts_sentence, &mut names);
                }
            } else {
                flush(&mut run, run_starts_sentence, &mut names);
            }
        }
        flush(&mut run, run_starts_sentence, &mut names);
    }

    names
        .into_iter()
        .map(|name| {
            let description = sentences
                .iter()
                .filter(|s| contains_word_ci(s, &name))
                .copied()
                .collect::<Vec<_>>()
                .join(" ");
            (name, description)
        })
        .filter(|(_, d)| !d.is_empty())
        .collect()
}

fn contains_word_ci(haystack: &str, needle: &str) -> bool {
    let hay = haystack.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let needle = needle.to_lowercase();
    let mut from = 0;
    while let Some(off) = hay[from..].find(&needle) {
        let a = from + off;
        let b = a + needle.len();
        let before_ok = hay[..a].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = hay[b..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = a + hay[a..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: usize, text: &str) -> Chunk {
        Chunk {
            chunk_id: id,
            source_id: "t".into(),
            text: text.into(),
            token_count: text.split_whitespace().count().max(1),
            token_range: (0, 0),
            byte_range: (0, text.len()),
        }
    }

    #[test]
    fn stub_on_curie_sentence() {
        let m = extract(
            &chunk(3, "Marie Curie studied radium. Radium glows."),
            &ExtractorConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].name, "Marie Curie");
        assert_eq!(m[0].description, "Marie Curie studied radium.");
        assert_eq!(m[1].name, "Radium");
        assert_eq!(m[1].description, "Marie Curie studied radium. Radium glows.");
        assert!(m.iter().all(|x| x.chunk_id == 3));
    }

    #[test]
    fn stub_without_capitals_is_empty() {
        let m = extract(
            &chunk(0, "nothing here is named. at all!"),
            &ExtractorConfig::default(),
            None,
        )
        .unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn stub_drops_sentence_initial_stopword() {
        let names: Vec<_> = stub_extract("The Eiffel Tower is tall. In Paris it rains.")
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, vec!["Eiffel Tower", "Paris"]);
    }

    #[test]
    fn stub_breaks_runs_at_punctuation_and_short_words() {
        let names: Vec<_> = stub_extract("we met Ada Lovelace, Charles Babbage and I in (London).")
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, vec!["Ada Lovelace", "Charles Babbage", "London"]);
    }

    #[test]
    fn whole_word_matching() {
        assert!(contains_word_ci("the radium glows", "Radium"));
        assert!(!contains_word_ci("the radiums glow", "Radium"));
        assert!(contains_word_ci("Marie  Curie wrote", "marie curie"));
    }

    #[test]
    fn parse_plain_fenced_and_wrapped() {
        let plain = r#"[{"name": "Radium", "description": "An element."}]"#;
        assert_eq!(
            parse_mentions(plain).unwrap(),
            vec![("Radium".into(), "An element.".into())]
        );
        let fenced = format!("```json\n{plain}\n```");
        assert_eq!(parse_mentions(&fenced).unwrap().len(), 1);
        let wrapped = r#"{"entities": [{"name": "X", "description": "y"}]}"#;
        assert_eq!(parse_mentions(wrapped).unwrap().len(), 1);
        let chatty = format!("Sure! Here it is: {plain} Hope this helps.");
        assert_eq!(parse_mentions(&chatty).unwrap().len(), 1);
        let blanks = r#"[{"name": "   ", "description": "d"}, {"name": "A", "description": ""}]"#;
        assert!(parse_mentions(blanks).unwrap().is_empty());
    }

    #[test]
    fn parse_invalid_json_is_malformed() {
        assert!(matches!(
            parse_mentions("not json at all"),
            Err(Error::MalformedOutput(_))
        ));
        assert!(matches!(
            parse_mentions("[{\"name\": 1}"),
            Err(Error::MalformedOutput(_))
        ));
    }

    #[test]
    fn duplicates_within_chunk_are_merged() {
        let merged = merge_duplicates(
            vec![
                ("Radium".into(), "glows".into()),
                ("RADIUM.".into(), "is radioactive".into()),
                ("Polonium".into(), "named for Poland".into()),
            ],
            7,
        );
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].name, "Radium");
        assert_eq!(merged[0].description, "glows is radioactive");
    }

    #[test]
    fn max_mentions_truncates() {
        let cfg = ExtractorConfig {
            max_mentions_per_chunk: Some(1),
            ..Default::default()
        };
        let m = extract(&chunk(0, "Alpha met Beta."), &cfg, None).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].name, "Alpha");
    }

    #[test]
    fn llm_backend_without_gateway_is_config_error() {
        let cfg = ExtractorConfig {
            backend: ExtractorBackend::Llm,
            ..Default::default()
        };
        assert!(matches!(
            extract(&chunk(0, "A b"), &cfg, None),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn shorten_under_threshold_is_identity() {
        assert_eq!(shorten("abc", 64, None), "abc");
        let exact = "x".repeat(64);
        assert_eq!(shorten(&exact, 64, None), exact);
    }

    #[test]
    fn shorten_cuts_at_last_whitespace() {
        // "word00 word01 ..." : 7 chars per word including the space
        let long: String = (0..43).map(|i| format!("word{i:02} ")).collect();
        assert_eq!(long.chars().count(), 301);
        let out = shorten(&long, 64, None);
        assert!(out.chars().count() <= 64);
        // budget 63 chars; whitespace at index 62 (after word08) is the last one
        assert_eq!(
            out,
            format!(
                "{}…",
                (0..9).map(|i| format!("word{i:02}")).collect::<Vec<_>>().join(" ")
            )
        );
    }

    #[test]
    fn shorten_hard_cuts_without_whitespace() {
        let long = "y".repeat(300);
        let out = shorten(&long, 64, None);
        assert_eq!(out.chars().count(), 64);
        assert_eq!(out, format!("{}…", "y".repeat(63)));
    }

    #[test]
    fn sentences() {
        assert_eq!(
            split_sentences("One. Two!  Three? v1.2 stays\nfour"),
            vec!["One.", "Two!", "Three?", "v1.2 stays\nfour"]
        );
    }

    #[test]
    fn stub_is_deterministic() {
        let text = "Niels Bohr met Albert Einstein in Brussels. Bohr argued. Einstein disagreed.";
        assert_eq!(stub_extract(text), stub_extract(text));
    }
}
