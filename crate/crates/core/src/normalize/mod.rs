//! Token normalization.
//!
//! Every token is lowercased, mapped from British to American spelling,
//! number words are rewritten as digits and the result is stemmed, so that
//! `Centre`, `centre` and `center` or `restaurant`/`restaurants` compare
//! equal. Punctuation tokens are replaced by seeded pseudo-random masks that
//! can never be shared between two utterances.

mod porter;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};

pub use porter::stem as porter_stem;

const BUNDLED_SPELLING: &str = include_str!("../../data/spelling_gb_us.tsv");

const NUMBER_WORDS: &[(&str, &str)] = &[
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
    ("eleven", "11"),
    ("twelve", "12"),
    ("thirteen", "13"),
    ("fourteen", "14"),
    ("fifteen", "15"),
    ("sixteen", "16"),
    ("seventeen", "17"),
    ("eighteen", "18"),
    ("nineteen", "19"),
    ("twenty", "20"),
    ("thirty", "30"),
    ("forty", "40"),
    ("fifty", "50"),
    ("sixty", "60"),
    ("seventy", "70"),
    ("eighty", "80"),
    ("ninety", "90"),
    ("hundred", "100"),
];

/// A token of an utterance. `char_span` holds byte offsets into the
/// utterance's raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedToken {
    pub surface: String,
    pub canonical: String,
    pub char_span: (usize, usize),
    pub is_punct_mask: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmerKind {
    #[default]
    Porter,
    /// No stemming; spelling and number unification still apply.
    None,
}

impl FromStr for StemmerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "porter" => Ok(StemmerKind::Porter),
            "none" | "identity" => Ok(StemmerKind::None),
            other => Err(Error::Config(format!("unknown stemmer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationConfig {
    pub spelling_map: HashMap<String, String>,
    pub number_words: HashMap<String, String>,
    pub mask_bits: u32,
    pub rng_seed: u64,
    pub stemmer: StemmerKind,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            spelling_map: parse_word_pairs(BUNDLED_SPELLING, "bundled spelling map")
                .expect("bundled spelling map is well-formed"),
            number_words: NUMBER_WORDS
                .iter()
                .map(|(w, d)| (w.to_string(), d.to_string()))
                .collect(),
            mask_bits: 64,
            rng_seed: 0,
            stemmer: StemmerKind::Porter,
        }
    }
}

/// On-disk form of [`NormalizationConfig`]; every field is optional and
/// falls back to the bundled default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    spelling_map: Option<PathBuf>,
    #[serde(default)]
    number_words: HashMap<String, String>,
    mask_bits: Option<u32>,
    rng_seed: Option<u64>,
    stemmer: Option<StemmerKind>,
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(16..=64).contains(&self.mask_bits) {
            return Err(Error::Config(format!(
                "mask_bits must be between 16 and 64, got {}",
                self.mask_bits
            )));
        }
        for (k, v) in &self.spelling_map {
            if !is_single_lower_word(k) || !is_single_lower_word(v) {
                return Err(Error::Config(format!(
                    "spelling map entry '{k}' -> '{v}' is not a pair of single lowercase words"
                )));
            }
        }
        for (k, v) in &self.number_words {
            if !is_single_lower_word(k) || v.is_empty() || v.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!(
                    "bad number word entry '{k}' -> '{v}'"
                )));
            }
        }
        Ok(())
    }

    /// Reads a TOML key/value config. Relative paths resolve against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = NormalizationConfig::default();
        if let Some(map) = file.spelling_map {
            let map = path.parent().map(|dir| dir.join(&map)).unwrap_or(map);
            let text = fs::read_to_string(&map).map_err(|e| Error::io(&map, e))?;
            cfg.spelling_map = parse_word_pairs(&text, &map.display().to_string())?;
        }
        cfg.number_words.extend(file.number_words);
        if let Some(bits) = file.mask_bits {
            cfg.mask_bits = bits;
        }
        if let Some(seed) = file.rng_seed {
            cfg.rng_seed = seed;
        }
        if let Some(stemmer) = file.stemmer {
            cfg.stemmer = stemmer;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn is_single_lower_word(w: &str) -> bool {
    !w.is_empty() && !w.chars().any(char::is_whitespace) && w.to_lowercase() == w
}

/// Parses `word<TAB>word` lines, skipping blanks and `#` comments.
pub fn parse_word_pairs(text: &str, source: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('\t').ok_or_else(|| {
            Error::Config(format!(
                "{source}:{}: expected two tab-separated words",
                i + 1
            ))
        })?;
        map.insert(k.trim().to_lowercase(), v.trim().to_lowercase());
    }
    Ok(map)
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_alphanumeric)
}

/// Splits on whitespace, then peels leading and trailing punctuation runs
/// off as their own tokens. Punctuation inside a word (`pre-trained`,
/// `14:00`) stays put.
pub fn tokenize(raw_text: &str) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    let mut push = |start: usize, end: usize| {
        if start < end {
            out.push((raw_text[start..end].to_string(), (start, end)));
        }
    };
    let mut chunk_start = None;
    let bytes_end = raw_text.len();
    let mut chunks = Vec::new();
    for (i, c) in raw_text.char_indices() {
        match (c.is_whitespace(), chunk_start) {
            (true, Some(s)) => {
                chunks.push((s, i));
                chunk_start = None;
            }
            (false, None) => chunk_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = chunk_start {
        chunks.push((s, bytes_end));
    }
    for (start, end) in chunks {
        let chunk = &raw_text[start..end];
        let first_word = chunk.find(char::is_alphanumeric);
        let Some(first_word) = first_word else {
            push(start, end);
            continue;
        };
        let last_word = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .expect("chunk has an alphanumeric char");
        push(start, start + first_word);
        push(start + first_word, start + last_word);
        push(start + last_word, end);
    }
    out
}

/// Canonical form of a non-punctuation token.
///
/// The lowercase → spelling → number → stem chain is applied until it
/// reaches a fixed point, which makes the function idempotent.
pub fn normalize_token(surface: &str, cfg: &NormalizationConfig) -> String {
    let mut current = surface.to_lowercase();
    for _ in 0..8 {
        let next = normalize_once(&current, cfg);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_once(word: &str, cfg: &NormalizationConfig) -> String {
    let lower = word.to_lowercase();
    let spelled = cfg.spelling_map.get(&lower).cloned().unwrap_or(lower);
    let numbered = cfg.number_words.get(&spelled).cloned().unwrap_or(spelled);
    match cfg.stemmer {
        StemmerKind::Porter => porter::stem(&numbered),
        StemmerKind::None => numbered,
    }
}

/// Issues masks for punctuation tokens. Masks are never repeated by one
/// generator and their `<mask:..>` shape cannot be produced by the tokenizer
/// for a real word (a word never starts with punctuation).
#[derive(Debug)]
pub struct MaskGenerator {
    rng: ChaCha8Rng,
    bits: u32,
    issued: HashSet<u64>,
}

impl MaskGenerator {
    pub fn new(seed: u64, bits: u32) -> Result<Self> {
        if !(16..=64).contains(&bits) {
            return Err(Error::Config(format!(
                "mask_bits must be between 16 and 64, got {bits}"
            )));
        }
        Ok(MaskGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bits,
            issued: HashSet::new(),
        })
    }

    /// Generator for one dialogue: the seed mixes the run seed with a stable
    /// hash of the dialogue id so output does not depend on scheduling.
    pub fn for_dialogue(rng_seed: u64, dialogue_id: &str, bits: u32) -> Result<Self> {
        Self::new(rng_seed.wrapping_add(fnv1a(dialogue_id.as_bytes())), bits)
    }

    fn draw(&mut self) -> Result<u64> {
        let capacity = if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        };
        if self.issued.len() as u64 >= capacity {
            return Err(Error::Config(format!(
                "{}-bit mask space exhausted; raise mask_bits",
                self.bits
            )));
        }
        loop {
            let v: u64 = self.rng.gen::<u64>() >> (64 - self.bits);
            if self.issued.insert(v) {
                return Ok(v);
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn mask_punctuation(token: &str, generator: &mut MaskGenerator) -> Result<String> {
    if !is_punctuation(token) {
        return Err(Error::Contract(format!(
            "mask_punctuation called on non-punctuation token '{token}'"
        )));
    }
    let width = generator.bits.div_ceil(4) as usize;
    let v = generator.draw()?;
    Ok(format!("<mask:{v:0width$x}>"))
}

pub fn normalize_text(
    raw_text: &str,
    cfg: &NormalizationConfig,
    masks: &mut MaskGenerator,
) -> Result<Vec<NormalizedToken>> {
    tokenize(raw_text)
        .into_iter()
        .map(|(surface, span)| {
            let (canonical, is_punct_mask) = if is_punctuation(&surface) {
                (mask_punctuation(&surface, masks)?, true)
            } else {
                (normalize_token(&surface, cfg), false)
            };
            Ok(NormalizedToken {
                surface,
                canonical,
                char_span: span,
                is_punct_mask,
            })
        })
        .collect()
}

/// Fills every utterance's token list. Raw text is left as is.
pub fn normalize_dialogue(mut d: Dialogue, cfg: &NormalizationConfig) -> Result<Dialogue> {
    let mut masks = MaskGenerator::for_dialogue(cfg.rng_seed, &d.id, cfg.mask_bits)?;
    for u in &mut d.utterances {
        u.tokens = normalize_text(&u.raw_text, cfg, &mut masks)?;
    }
    Ok(d)
}
