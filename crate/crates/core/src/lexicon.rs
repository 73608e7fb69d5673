//! Shared-expression mining, free/constrained typing and establishment.
//!
//! Candidates are contiguous canonical n-grams produced by both speakers.
//! An instance is constrained when a longer surviving candidate covers it in
//! the same utterance. Establishment is decided causally: an expression is
//! established at turn `j` when, looking only at turns `1..=j`, both
//! speakers have produced it and at least one instance is free. Appending
//! turns therefore never moves an existing establishment point.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::filter::{self, FilterDictionaries};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ExpressionKey(Vec<String>);

impl ExpressionKey {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Contract("expression key must not be empty".into()));
        }
        if let Some(t) = tokens
            .iter()
            .find(|t| t.is_empty() || t.starts_with("<mask:"))
        {
            return Err(Error::Contract(format!(
                "expression key contains invalid token '{t}'"
            )));
        }
        Ok(ExpressionKey(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn head(&self) -> &str {
        self.0.last().expect("key is non-empty")
    }
}

impl TryFrom<Vec<String>> for ExpressionKey {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        ExpressionKey::new(tokens)
    }
}

impl From<ExpressionKey> for Vec<String> {
    fn from(key: ExpressionKey) -> Self {
        key.0
    }
}

impl fmt::Display for ExpressionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Half-open token range `[start, end)` within one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &TokenSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<(usize, usize)> for TokenSpan {
    fn from((start, end): (usize, usize)) -> Self {
        TokenSpan { start, end }
    }
}

impl From<TokenSpan> for (usize, usize) {
    fn from(s: TokenSpan) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Free,
    Constrained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub utterance_index: usize,
    pub speaker: Speaker,
    pub span: TokenSpan,
    pub kind: InstanceKind,
    /// Turn from which a longer shared expression covers this instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constrained_from: Option<usize>,
}

impl Occurrence {
    fn raw(utterance: &Utterance, span: TokenSpan) -> Self {
        Occurrence {
            utterance_index: utterance.index,
            speaker: utterance.speaker,
            span,
            kind: InstanceKind::Free,
            constrained_from: None,
        }
    }

    /// Whether this instance is free when only turns `1..=turn` are known.
    pub fn is_free_as_of(&self, turn: usize) -> bool {
        self.utterance_index <= turn && self.constrained_from.is_none_or(|c| turn < c)
    }
}

/// A shared n-gram with every instance found in the dialogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub key: ExpressionKey,
    pub occurrences: Vec<Occurrence>,
}

impl Candidate {
    /// First turn at which both speakers have produced the expression.
    pub fn shared_at(&self) -> Option<usize> {
        let first = |s: Speaker| {
            self.occurrences
                .iter()
                .filter(|o| o.speaker == s)
                .map(|o| o.utterance_index)
                .min()
        };
        Some(first(Speaker::User)?.max(first(Speaker::Agent)?))
    }

    pub fn has_both_speakers(&self) -> bool {
        self.shared_at().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub key: ExpressionKey,
    pub display_form: String,
    pub established_at: Option<usize>,
    pub initiator: Speaker,
    pub occurrences: Vec<Occurrence>,
}

impl LexiconEntry {
    pub fn is_established(&self) -> bool {
        self.established_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueLexicon {
    pub dialogue_id: String,
    pub entries: Vec<LexiconEntry>,
}

impl DialogueLexicon {
    pub fn established(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(|e| e.is_established())
    }

    pub fn entry(&self, key: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.key.to_string() == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexiconConfig {
    /// Longest n-gram considered, in tokens.
    pub max_ngram: usize,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { max_ngram: 20 }
    }
}

/// Canonical tokens of an utterance as interned ids; masks become `None`.
fn intern_utterances(d: &Dialogue) -> (Vec<Vec<Option<u32>>>, Vec<&str>) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut vocab = Vec::new();
    let streams = d
        .utterances
        .iter()
        .map(|u| {
            u.tokens
                .iter()
                .map(|t| {
                    if t.is_punct_mask {
                        return None;
                    }
                    Some(*ids.entry(t.canonical.as_str()).or_insert_with(|| {
                        vocab.push(t.canonical.as_str());
                        (vocab.len() - 1) as u32
                    }))
                })
                .collect()
        })
        .collect();
    (streams, vocab)
}

/// Every mask-free n-gram (up to `max_ngram` tokens) used by both speakers,
/// with all of its instances. Within one utterance overlapping matches of
/// the same n-gram are resolved leftmost-first.
pub fn mine_shared(d: &Dialogue, cfg: &LexiconConfig) -> Vec<Candidate> {
    let (streams, vocab) = intern_utterances(d);
    let max_n = cfg.max_ngram.max(1);

    let mut speakers: HashMap<&[Option<u32>], u8> = HashMap::new();
    for (u, stream) in d.utterances.iter().zip(&streams) {
        let bit = match u.speaker {
            Speaker::User => 1,
            Speaker::Agent => 2,
        };
        for start in 0..stream.len() {
            for end in start + 1..=stream.len().min(start + max_n) {
                if stream[end - 1].is_none() {
                    break;
                }
                *speakers.entry(&stream[start..end]).or_insert(0) |= bit;
            }
        }
    }

    let mut positions: HashMap<&[Option<u32>], Vec<Occurrence>> = HashMap::new();
    for (u, stream) in d.utterances.iter().zip(&streams) {
        for start in 0..stream.len() {
            for end in start + 1..=stream.len().min(start + max_n) {
                let gram = &stream[start..end];
                if gram[gram.len() - 1].is_none() {
                    break;
                }
                if speakers.get(gram) != Some(&3) {
                    continue;
                }
                let occs = positions.entry(gram).or_default();
                let overlaps_previous = occs.last().is_some_and(|o: &Occurrence| {
                    o.utterance_index == u.index && o.span.end > start
                });
                if !overlaps_previous {
                    occs.push(Occurrence::raw(u, TokenSpan::new(start, end)));
                }
            }
        }
    }

    let mut out: Vec<Candidate> = positions
        .into_iter()
        .map(|(gram, occurrences)| Candidate {
            key: ExpressionKey(
                gram.iter()
                    .map(|id| vocab[id.expect("masks excluded") as usize].to_string())
                    .collect(),
            ),
            occurrences,
        })
        .collect();
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}

/// Types every instance. An instance is constrained when an instance of a
/// longer candidate in the same utterance contains its span; it becomes
/// constrained from the turn that longer candidate is first shared (never
/// before its own turn).
pub fn classify_instances(candidates: &mut [Candidate]) {
    struct Cover {
        span: TokenSpan,
        shared_at: usize,
    }
    let mut by_utterance: HashMap<usize, Vec<Cover>> = HashMap::new();
    for c in candidates.iter() {
        let Some(shared_at) = c.shared_at() else {
            continue;
        };
        for o in &c.occurrences {
            by_utterance
                .entry(o.utterance_index)
                .or_default()
                .push(Cover {
                    span: o.span,
                    shared_at,
                });
        }
    }
    for c in candidates.iter_mut() {
        for o in &mut c.occurrences {
            let covered_from = by_utterance.get(&o.utterance_index).and_then(|covers| {
                covers
                    .iter()
                    .filter(|cv| cv.span.len() > o.span.len() && cv.span.contains(&o.span))
                    .map(|cv| cv.shared_at.max(o.utterance_index))
                    .min()
            });
            o.constrained_from = covered_from;
            o.kind = if covered_from.is_some() {
                InstanceKind::Constrained
            } else {
                InstanceKind::Free
            };
        }
    }
}

/// Earliest turn at which the expression is established, given typed
/// instances.
pub fn establish(occurrences: &[Occurrence]) -> Option<usize> {
    let first = |s: Speaker| {
        occurrences
            .iter()
            .filter(|o| o.speaker == s)
            .map(|o| o.utterance_index)
            .min()
    };
    let both_at = first(Speaker::User)?.max(first(Speaker::Agent)?);
    occurrences
        .iter()
        .map(|o| o.utterance_index.max(both_at))
        .filter(|&j| occurrences.iter().any(|o| o.is_free_as_of(j)))
        .min()
}

fn display_form(d: &Dialogue, occ: &Occurrence) -> String {
    let Some(u) = d.utterance(occ.utterance_index) else {
        return String::new();
    };
    let (Some(first), Some(last)) = (u.tokens.get(occ.span.start), u.tokens.get(occ.span.end - 1))
    else {
        return String::new();
    };
    u.raw_text[first.char_span.0..last.char_span.1].to_string()
}

fn to_lexicon(d: &Dialogue, mut candidates: Vec<Candidate>) -> DialogueLexicon {
    classify_instances(&mut candidates);
    let mut entries: Vec<LexiconEntry> = candidates
        .into_iter()
        .filter(|c| !c.occurrences.is_empty())
        .map(|mut c| {
            c.occurrences
                .sort_by_key(|o| (o.utterance_index, o.span.start, o.span.end));
            let first = &c.occurrences[0];
            LexiconEntry {
                display_form: display_form(d, first),
                initiator: first.speaker,
                established_at: establish(&c.occurrences),
                key: c.key,
                occurrences: c.occurrences,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        let pos = |e: &LexiconEntry| {
            (
                e.occurrences[0].utterance_index,
                e.occurrences[0].span.start,
            )
        };
        pos(a).cmp(&pos(b)).then_with(|| a.key.cmp(&b.key))
    });
    DialogueLexicon {
        dialogue_id: d.id.clone(),
        entries,
    }
}

/// Mining, typing and establishment without the noun-phrase filter.
pub fn build_unfiltered(d: &Dialogue, cfg: &LexiconConfig) -> DialogueLexicon {
    to_lexicon(d, mine_shared(d, cfg))
}

/// Full pipeline: mine, filter, type, establish. Filtering runs before
/// typing so that a rejected longer phrase cannot constrain its parts.
pub fn build_lexicon(
    d: &Dialogue,
    cfg: &LexiconConfig,
    dicts: &FilterDictionaries,
) -> DialogueLexicon {
    let candidates = filter::apply_filter(mine_shared(d, cfg), d, dicts);
    to_lexicon(d, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::{normalize_dialogue, NormalizationConfig};

    fn dialogue(turns: &[&str]) -> Dialogue {
        let turns = turns.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 {
                Speaker::User
            } else {
                Speaker::Agent
            };
            (s, t.to_string())
        });
        let d = Dialogue::from_turns("t", turns).unwrap();
        normalize_dialogue(d, &NormalizationConfig::default()).unwrap()
    }

    fn keys(cands: &[Candidate]) -> Vec<String> {
        let mut k: Vec<String> = cands.iter().map(|c| c.key.to_string()).collect();
        k.sort();
        k
    }

    #[test]
    fn all_subgrams_of_shared_phrase() {
        let d = dialogue(&["x y z", "x y z"]);
        let c = mine_shared(&d, &LexiconConfig::default());
        assert_eq!(keys(&c), ["x", "x y", "x y z", "y", "y z", "z"]);
    }

    #[test]
    fn single_speaker_shares_nothing() {
        let d = Dialogue::from_turns("t", [(Speaker::User, "hotel hotel")]).unwrap();
        let d = normalize_dialogue(d, &NormalizationConfig::default()).unwrap();
        assert!(mine_shared(&d, &LexiconConfig::default()).is_empty());
    }

    #[test]
    fn punctuation_never_shared() {
        let d = dialogue(&["ok .", "fine ."]);
        assert!(mine_shared(&d, &LexiconConfig::default()).is_empty());
    }

    #[test]
    fn repeats_counted_and_self_overlap_resolved_leftmost() {
        let d = dialogue(&["cab and cab", "cab", "a a a", "a a"]);
        let c = mine_shared(&d, &LexiconConfig::default());
        let cab = c.iter().find(|c| c.key.to_string() == "cab").unwrap();
        assert_eq!(cab.occurrences.len(), 3);
        let aa = c.iter().find(|c| c.key.to_string() == "a a").unwrap();
        let spans: Vec<_> = aa
            .occurrences
            .iter()
            .map(|o| (o.utterance_index, o.span.start))
            .collect();
        assert_eq!(spans, [(3, 0), (4, 0)]);
    }

    #[test]
    fn max_ngram_caps_length() {
        let d = dialogue(&["a b c d", "a b c d"]);
        let c = mine_shared(&d, &LexiconConfig { max_ngram: 2 });
        assert!(c.iter().all(|c| c.key.len() <= 2));
        assert_eq!(c.len(), 7);
    }

    #[test]
    fn constrained_inside_longer_free_outside() {
        let d = dialogue(&["x y", "x y", "x"]);
        let lex = build_unfiltered(&d, &LexiconConfig::default());
        let x = lex.entry("x").unwrap();
        let kinds: Vec<_> = x.occurrences.iter().map(|o| o.kind).collect();
        assert_eq!(
            kinds,
            [
                InstanceKind::Constrained,
                InstanceKind::Constrained,
                InstanceKind::Free
            ]
        );
        assert_eq!(x.established_at, Some(3));
        let xy = lex.entry("x y").unwrap();
        assert!(xy.occurrences.iter().all(|o| o.kind == InstanceKind::Free));
        assert_eq!(xy.established_at, Some(2));
    }

    #[test]
    fn whole_utterance_key_is_free() {
        let d = dialogue(&["hotel", "hotel"]);
        let lex = build_unfiltered(&d, &LexiconConfig::default());
        let e = lex.entry("hotel").unwrap();
        assert!(e.occurrences.iter().all(|o| o.kind == InstanceKind::Free));
        assert_eq!(e.established_at, Some(2));
        assert_eq!(e.initiator, Speaker::User);
        assert_eq!(e.display_form, "hotel");
    }

    #[test]
    fn one_speaker_only_never_established() {
        let occs = vec![
            Occurrence::raw(&Utterance::new(1, Speaker::User, "x"), TokenSpan::new(0, 1)),
            Occurrence::raw(&Utterance::new(3, Speaker::User, "x"), TokenSpan::new(0, 1)),
        ];
        assert_eq!(establish(&occs), None);
    }

    #[test]
    fn establishment_is_causal() {
        // "x" is free at turns 1 and 2 until the longer phrases are shared.
        let d = dialogue(&["x p", "x r", "x r", "x p"]);
        let lex = build_unfiltered(&d, &LexiconConfig::default());
        let x = lex.entry("x").unwrap();
        assert!(x
            .occurrences
            .iter()
            .all(|o| o.kind == InstanceKind::Constrained));
        assert_eq!(x.established_at, Some(2));
        let prefix = dialogue(&["x p", "x r"]);
        let lex2 = build_unfiltered(&prefix, &LexiconConfig::default());
        assert_eq!(lex2.entry("x").unwrap().established_at, Some(2));
    }

    #[test]
    fn equal_length_overlaps_stay_free() {
        let d = dialogue(&["a b c", "a b", "z", "b c"]);
        let lex = build_unfiltered(&d, &LexiconConfig::default());
        let ab = lex.entry("a b").unwrap();
        let bc = lex.entry("b c").unwrap();
        assert!(ab.occurrences.iter().all(|o| o.kind == InstanceKind::Free));
        assert!(bc.occurrences.iter().all(|o| o.kind == InstanceKind::Free));
    }

    #[test]
    fn key_rejects_masks_and_empty() {
        assert!(ExpressionKey::new(vec![]).is_err());
        assert!(ExpressionKey::new(vec!["<mask:00ff>".into()]).is_err());
        let k: ExpressionKey = serde_json::from_str(r#"["price","rang"]"#).unwrap();
        assert_eq!(k.to_string(), "price rang");
        assert!(serde_json::from_str::<ExpressionKey>("[]").is_err());
    }
}
