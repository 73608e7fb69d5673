//! Rule-based noun-phrase filter over mined candidates.
//!
//! Keys are trimmed of leading and trailing stopwords, then rejected when
//! they contain an undesired word, when the head is not a plausible noun, or
//! when an occurrence sits strictly inside a known multi-word name. Words
//! that are ambiguous between noun and verb readings carry literal context
//! patterns: a pattern found in the utterance marks the verb reading.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::corpus::{Dialogue, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::lexicon::{Candidate, ExpressionKey, Occurrence, TokenSpan};
use crate::normalize::{is_punctuation, normalize_token, tokenize, NormalizationConfig};

pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const VERBS_FILE: &str = "verbs.txt";
pub const ADJECTIVES_ADVERBS_FILE: &str = "adjectives_adverbs.txt";
pub const UNDESIRED_FILE: &str = "undesired.txt";
pub const CONTEXT_RULES_FILE: &str = "context_rules.tsv";
pub const NAMES_FILE: &str = "names.txt";

const BUNDLED: [(&str, &str); 6] = [
    (STOPWORDS_FILE, include_str!("../data/stopwords.txt")),
    (VERBS_FILE, include_str!("../data/verbs.txt")),
    (
        ADJECTIVES_ADVERBS_FILE,
        include_str!("../data/adjectives_adverbs.txt"),
    ),
    (UNDESIRED_FILE, include_str!("../data/undesired.txt")),
    (
        CONTEXT_RULES_FILE,
        include_str!("../data/context_rules.tsv"),
    ),
    (NAMES_FILE, include_str!("../data/names.txt")),
];

/// Word lists used by the filter. Word sets hold canonical forms; context
/// rules are keyed by lowercase surface word and hold lowercase patterns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterDictionaries {
    pub stopwords: HashSet<String>,
    pub verbs: HashSet<String>,
    pub adjectives_adverbs: HashSet<String>,
    pub undesired: HashSet<String>,
    pub context_rules: BTreeMap<String, Vec<String>>,
    /// Canonical token sequences of multi-word proper names.
    pub names: Vec<Vec<String>>,
}

/// Raw dictionary texts, one per file.
#[derive(Debug, Clone)]
pub struct DictionarySources {
    pub stopwords: String,
    pub verbs: String,
    pub adjectives_adverbs: String,
    pub undesired: String,
    pub context_rules: String,
    pub names: String,
}

impl DictionarySources {
    pub fn bundled() -> Self {
        let get = |name: &str| {
            BUNDLED
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.to_string())
                .expect("bundled dictionary present")
        };
        DictionarySources {
            stopwords: get(STOPWORDS_FILE),
            verbs: get(VERBS_FILE),
            adjectives_adverbs: get(ADJECTIVES_ADVERBS_FILE),
            undesired: get(UNDESIRED_FILE),
            context_rules: get(CONTEXT_RULES_FILE),
            names: get(NAMES_FILE),
        }
    }

    /// Reads each dictionary from `dir`; files absent from the directory
    /// keep their bundled contents.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "dictionary directory {} does not exist",
                dir.display()
            )));
        }
        let mut sources = DictionarySources::bundled();
        for (name, slot) in [
            (STOPWORDS_FILE, &mut sources.stopwords),
            (VERBS_FILE, &mut sources.verbs),
            (ADJECTIVES_ADVERBS_FILE, &mut sources.adjectives_adverbs),
            (UNDESIRED_FILE, &mut sources.undesired),
            (CONTEXT_RULES_FILE, &mut sources.context_rules),
            (NAMES_FILE, &mut sources.names),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(sources)
    }
}

fn entries(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn word_set(text: &str, cfg: &NormalizationConfig) -> HashSet<String> {
    entries(text)
        .map(|(_, l)| normalize_token(l.trim(), cfg))
        .collect()
}

/// Parses `word<TAB>pattern` lines. Patterns keep their spaces.
pub fn parse_context_rules(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut rules: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, l) in entries(text) {
        let Some((word, pattern)) = l.split_once('\t') else {
            return Err(Error::Parse {
                line,
                message: "context rule must be `word<TAB>pattern`".into(),
            });
        };
        let word = word.trim().to_lowercase();
        if word.is_empty() || pattern.trim().is_empty() {
            return Err(Error::Parse {
                line,
                message: "context rule has an empty word or pattern".into(),
            });
        }
        rules.entry(word).or_default().push(pattern.to_lowercase());
    }
    Ok(rules)
}

impl FilterDictionaries {
    pub fn from_sources(src: &DictionarySources, cfg: &NormalizationConfig) -> Result<Self> {
        let names = entries(&src.names)
            .map(|(_, l)| {
                tokenize(l)
                    .into_iter()
                    .filter(|(t, _)| !is_punctuation(t))
                    .map(|(t, _)| normalize_token(&t, cfg))
                    .collect::<Vec<_>>()
            })
            .filter(|n| n.len() > 1)
            .collect();
        Ok(FilterDictionaries {
            stopwords: word_set(&src.stopwords, cfg),
            verbs: word_set(&src.verbs, cfg),
            adjectives_adverbs: word_set(&src.adjectives_adverbs, cfg),
            undesired: word_set(&src.undesired, cfg),
            context_rules: parse_context_rules(&src.context_rules)?,
            names,
        })
    }

    pub fn bundled(cfg: &NormalizationConfig) -> Self {
        Self::from_sources(&DictionarySources::bundled(), cfg)
            .expect("bundled dictionaries are well formed")
    }

    pub fn from_dir(dir: &Path, cfg: &NormalizationConfig) -> Result<Self> {
        Self::from_sources(&DictionarySources::from_dir(dir)?, cfg)
    }
}

/// Strips stopwords from both ends. Returns the trimmed key with the number
/// of tokens removed at the front and at the back.
fn trim_counts(key: &ExpressionKey, dicts: &FilterDictionaries) -> Option<(usize, usize)> {
    let t = key.tokens();
    let lead = t
        .iter()
        .take_while(|w| dicts.stopwords.contains(*w))
        .count();
    if lead == t.len() {
        return None;
    }
    let trail = t
        .iter()
        .rev()
        .take_while(|w| dicts.stopwords.contains(*w))
        .count();
    Some((lead, trail))
}

pub fn trim_edges(key: &ExpressionKey, dicts: &FilterDictionaries) -> Option<ExpressionKey> {
    let (lead, trail) = trim_counts(key, dicts)?;
    let t = key.tokens();
    ExpressionKey::new(t[lead..t.len() - trail].to_vec()).ok()
}

/// Decides whether one occurrence of an edge-trimmed key reads as a noun
/// phrase. `surfaces` are the occurrence's surface tokens and `utterance`
/// the raw text it comes from.
pub fn is_noun_phrase(
    key: &ExpressionKey,
    surfaces: &[&str],
    utterance: &str,
    dicts: &FilterDictionaries,
) -> bool {
    let tokens = key.tokens();
    if tokens.iter().any(|t| dicts.undesired.contains(t)) {
        return false;
    }
    let head = key.head();
    if !head.chars().any(char::is_alphabetic) {
        return false;
    }
    let lowered = utterance.to_lowercase();
    let mut rescued = vec![false; tokens.len()];
    for (i, surface) in surfaces.iter().enumerate().take(tokens.len()) {
        if let Some(patterns) = dicts.context_rules.get(&surface.to_lowercase()) {
            if patterns.iter().any(|p| lowered.contains(p.as_str())) {
                return false;
            }
            rescued[i] = true;
        }
    }
    let last = tokens.len() - 1;
    let head_ok =
        rescued[last] || !(dicts.verbs.contains(head) || dicts.adjectives_adverbs.contains(head));
    let first_ok = rescued[0] || !dicts.verbs.contains(&tokens[0]);
    head_ok && first_ok
}

/// Token spans of known names in an utterance.
fn name_spans(u: &Utterance, dicts: &FilterDictionaries) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    for name in &dicts.names {
        if name.len() > u.tokens.len() {
            continue;
        }
        for start in 0..=u.tokens.len() - name.len() {
            let hit = u.tokens[start..start + name.len()]
                .iter()
                .zip(name)
                .all(|(t, w)| !t.is_punct_mask && &t.canonical == w);
            if hit {
                spans.push(TokenSpan::new(start, start + name.len()));
            }
        }
    }
    spans
}

fn inside_name(occ: &Occurrence, names: &[TokenSpan]) -> bool {
    names
        .iter()
        .any(|n| n.contains(&occ.span) && n.len() > occ.span.len())
}

/// Trims, merges and filters mined candidates. Keys whose surviving
/// occurrences come from one speaker only are dropped.
pub fn apply_filter(
    candidates: Vec<Candidate>,
    d: &Dialogue,
    dicts: &FilterDictionaries,
) -> Vec<Candidate> {
    let mut merged: BTreeMap<ExpressionKey, Vec<Occurrence>> = BTreeMap::new();
    for c in candidates {
        let Some((lead, trail)) = trim_counts(&c.key, dicts) else {
            continue;
        };
        let t = c.key.tokens();
        let Ok(key) = ExpressionKey::new(t[lead..t.len() - trail].to_vec()) else {
            continue;
        };
        let slot = merged.entry(key).or_default();
        slot.extend(c.occurrences.into_iter().map(|mut o| {
            o.span = TokenSpan::new(o.span.start + lead, o.span.end - trail);
            o
        }));
    }

    let names: BTreeMap<usize, Vec<TokenSpan>> = d
        .utterances
        .iter()
        .map(|u| (u.index, name_spans(u, dicts)))
        .collect();

    let mut out = Vec::new();
    for (key, mut occs) in merged {
        occs.sort_by_key(|o| (o.utterance_index, o.span.start, o.span.end));
        occs.dedup_by_key(|o| (o.utterance_index, o.span));
        let mut kept: Vec<Occurrence> = Vec::with_capacity(occs.len());
        for o in occs {
            let Some(u) = d.utterance(o.utterance_index) else {
                continue;
            };
            if kept
                .last()
                .is_some_and(|p| p.utterance_index == o.utterance_index && p.span.overlaps(&o.span))
            {
                continue;
            }
            if inside_name(&o, &names[&u.index]) {
                continue;
            }
            let surfaces: Vec<&str> = u.tokens[o.span.start..o.span.end]
                .iter()
                .map(|t| t.surface.as_str())
                .collect();
            if is_noun_phrase(&key, &surfaces, &u.raw_text, dicts) {
                kept.push(o);
            }
        }
        let has = |s: Speaker| kept.iter().any(|o| o.speaker == s);
        if has(Speaker::User) && has(Speaker::Agent) {
            out.push(Candidate {
                key,
                occurrences: kept,
            });
        }
    }
    out
}
