//! Account-to-text rendering.
//!
//! Each account becomes one token sequence:
//!
//! ```text
//! [M] name value [SEP] name value ... [D] description [T] tweet [SEP] tweet ...
//! ```
//!
//! Text is denoised first: URLs collapse to `HTTPURL`, mentions to `@USER`,
//! hashtags to `#HASHTAG`, whitespace is normalized, and punctuation is
//! split off words. The scanner treats hashtags, mentions, and URLs as
//! atomic, which makes denoising idempotent. Section markers are inserted
//! structurally, never produced by splitting user text, so a tweet
//! containing the literal characters `[M]` cannot forge a section boundary.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::UserRecord;
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const MARK_META: &str = "[M]";
pub const MARK_DESC: &str = "[D]";
pub const MARK_TWEET: &str = "[T]";
pub const SEP: &str = "[SEP]";
pub const HASHTAG: &str = "#HASHTAG";
pub const MENTION: &str = "@USER";
pub const URL: &str = "HTTPURL";

/// Special tokens in fixed id order; always present in a vocabulary.
pub const SPECIAL_TOKENS: [&str; 9] =
    [PAD, UNK, MARK_META, MARK_DESC, MARK_TWEET, SEP, HASHTAG, MENTION, URL];

const WORD_JOINERS: [char; 3] = ['.', '\'', '-'];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_url_start(rest: &str) -> bool {
    let lower_prefix: String = rest.chars().take(8).collect::<String>().to_ascii_lowercase();
    lower_prefix.starts_with("http://")
        || lower_prefix.starts_with("https://")
        || lower_prefix.starts_with("t.co/")
}

/// Splits raw text into denoised tokens: URLs, mentions, and hashtags are
/// replaced by their placeholder, words keep internal `.`/`'`/`-` joiners,
/// and every other character becomes its own token.
pub fn scan_tokens(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let rest: String = chars[i..].iter().collect();
            if is_url_start(&rest) {
                // URLs swallow the rest of the whitespace-delimited chunk
                out.push(URL.to_string());
                break;
            }
            let c = chars[i];
            if c == '#' && i + 1 < chars.len() && chars[i + 1].is_alphanumeric() {
                i += 1;
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                out.push(HASHTAG.to_string());
            } else if c == '@' && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                i += 1;
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                out.push(MENTION.to_string());
            } else if is_word_char(c) {
                let start = i;
                i += 1;
                while i < chars.len() {
                    if is_word_char(chars[i]) {
                        i += 1;
                    } else if WORD_JOINERS.contains(&chars[i])
                        && i + 1 < chars.len()
                        && is_word_char(chars[i + 1])
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                out.push(chars[start..i].iter().collect());
            } else {
                out.push(c.to_string());
                i += 1;
            }
        }
    }
    out
}

/// Denoises raw text; idempotent, whitespace-normalized.
pub fn denoise_text(raw: &str) -> String {
    scan_tokens(raw).join(" ")
}

/// Renders metadata fields as `[M] name value [SEP] name value ...`.
///
/// Values are emitted verbatim (numbers stay unbucketed decimal strings);
/// field order is the caller's, which must match the dataset schema.
pub fn serialize_metadata(fields: &[(String, String)]) -> String {
    let mut out = String::from(MARK_META);
    for (i, (name, value)) in fields.iter().enumerate() {
        if i > 0 {
            out.push(' ');
            out.push_str(SEP);
        }
        out.push(' ');
        out.push_str(name);
        if !value.is_empty() {
            out.push(' ');
            out.push_str(value);
        }
    }
    out
}

/// Sections to omit when rendering; used by the ablation harness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDrop {
    pub metadata: bool,
    pub description: bool,
    pub tweets: bool,
}

/// Full untruncated token rendering of one account.
///
/// Markers are pushed structurally, so each of `[M]` / `[D]` / `[T]`
/// appears at most once and in that order regardless of record content.
pub fn user_token_strings(record: &UserRecord, drop: SectionDrop) -> Vec<String> {
    let mut out = Vec::new();
    if !drop.metadata {
        out.push(MARK_META.to_string());
        for (i, (name, value)) in record.metadata.iter().enumerate() {
            if i > 0 {
                out.push(SEP.to_string());
            }
            out.extend(scan_tokens(name));
            out.extend(scan_tokens(value));
        }
    }
    if !drop.description {
        out.push(MARK_DESC.to_string());
        out.extend(scan_tokens(&record.description));
    }
    if !drop.tweets {
        out.push(MARK_TWEET.to_string());
        for (i, tweet) in record.tweets.iter().enumerate() {
            if i > 0 {
                out.push(SEP.to_string());
            }
            out.extend(scan_tokens(tweet));
        }
    }
    out
}

/// Positions of the section markers inside a (possibly truncated) sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerPositions {
    pub metadata: Option<usize>,
    pub description: Option<usize>,
    pub tweets: Option<usize>,
}

/// One account rendered to token ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextualSequence {
    pub token_ids: Vec<usize>,
    /// Space-joined token surfaces of the included tokens.
    pub surface: String,
    pub markers: MarkerPositions,
}

impl TextualSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Rendering knobs. `max_length` truncates whole tokens from the right;
/// tweets are already most recent first, so later history falls off first.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SerializeConfig {
    pub max_length: usize,
    /// Corpus tokens below this frequency stay out of the vocabulary.
    pub min_count: usize,
}

impl Default for SerializeConfig {
    fn default() -> Self {
        SerializeConfig { max_length: 512, min_count: 1 }
    }
}

impl SerializeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length < 16 {
            return Err(Error::Config(format!(
                "max_length must be at least 16, got {}",
                self.max_length
            )));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Token list with positional ids; id = position in the ordered list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id for out-of-vocabulary tokens.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(1) // UNK sits at position 1
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    /// FNV-1a over the ordered token list; checkpoint manifests pin this so
    /// a student checkpoint cannot be applied over a different vocabulary.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tokens {
            for &b in t.as_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Writes the ordered token list as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.tokens)
            .map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        for (i, spec) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*spec) {
                return Err(Error::Data(format!(
                    "{}: special token {spec} missing at position {i}",
                    path.display()
                )));
            }
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Builds a vocabulary from token lists (one per training record).
///
/// Special tokens occupy the first ids in fixed order even when absent from
/// the corpus; corpus tokens follow, most frequent first, ties broken
/// lexicographically. Tokens below `min_count` are dropped.
pub fn build_vocabulary<I>(token_lists: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator,
    I::Item: IntoIterator<Item = String>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for list in token_lists {
        for tok in list {
            if !SPECIAL_TOKENS.contains(&tok.as_str()) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> =
        counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().map(|(t, _)| t));
    Vocabulary::from_tokens(tokens)
}

/// Renders one account to a truncated id sequence.
pub fn serialize_user(
    record: &UserRecord,
    vocab: &Vocabulary,
    cfg: &SerializeConfig,
    drop: SectionDrop,
) -> TextualSequence {
    let mut strings = user_token_strings(record, drop);
    strings.truncate(cfg.max_length);

    let mut markers = MarkerPositions::default();
    for (i, tok) in strings.iter().enumerate() {
        match tok.as_str() {
            MARK_META => markers.metadata = Some(i),
            MARK_DESC => markers.description = Some(i),
            MARK_TWEET => markers.tweets = Some(i),
            _ => {}
        }
    }

    let token_ids = strings.iter().map(|t| vocab.id_or_unk(t)).collect();
    TextualSequence { token_ids, surface: strings.join(" "), markers }
}
