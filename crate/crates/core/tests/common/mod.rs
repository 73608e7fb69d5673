#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use entrain::corpus::{load_transcript, Dialogue, Speaker};
use entrain::lexicon::{DialogueLexicon, InstanceKind};
use entrain::{AnnotationRecord, Pipeline};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn table1() -> AnnotationRecord {
    let d = load_transcript(&fixture("table1.txt")).expect("fixture loads");
    Pipeline::default().annotate(d).expect("fixture annotates")
}

pub fn golden() -> toml::Table {
    let text = std::fs::read_to_string(fixture("table1_golden.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

pub fn alternating(id: &str, turns: &[String]) -> Dialogue {
    Dialogue::from_turns(
        id,
        turns.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 {
                Speaker::User
            } else {
                Speaker::Agent
            };
            (s, t.clone())
        }),
    )
    .unwrap()
}

/// Random dialogue over a small vocabulary, with occasional punctuation.
pub fn random_dialogue<R: Rng>(
    rng: &mut R,
    id: &str,
    vocab: &[&str],
    max_turns: usize,
    max_tokens: usize,
) -> Dialogue {
    let n = rng.gen_range(1..=max_turns);
    let turns: Vec<String> = (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_tokens);
            let mut words: Vec<String> = Vec::with_capacity(len);
            for _ in 0..len {
                if !words.is_empty() && rng.gen_bool(0.1) {
                    words.push(".".into());
                } else {
                    words.push(vocab.choose(rng).unwrap().to_string());
                }
            }
            words.join(" ")
        })
        .collect();
    alternating(id, &turns)
}

/// Everything the lexicon reports about one key, in comparable form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryView {
    pub occurrences: Vec<(usize, usize, usize, bool)>,
    pub established_at: Option<usize>,
    pub initiator: Speaker,
}

pub fn view(lex: &DialogueLexicon) -> BTreeMap<Vec<String>, EntryView> {
    lex.entries
        .iter()
        .map(|e| {
            let mut occ: Vec<_> = e
                .occurrences
                .iter()
                .map(|o| {
                    (
                        o.utterance_index,
                        o.span.start,
                        o.span.end,
                        o.kind == InstanceKind::Free,
                    )
                })
                .collect();
            occ.sort();
            (
                e.key.tokens().to_vec(),
                EntryView {
                    occurrences: occ,
                    established_at: e.established_at,
                    initiator: e.initiator,
                },
            )
        })
        .collect()
}

/// Exhaustive reference for the unfiltered lexicon of a normalized
/// dialogue, written directly from the definitions:
/// * an n-gram is a candidate when both speakers utter it;
/// * instances are taken left to right, skipping overlaps with the
///   previous instance of the same n-gram in that utterance;
/// * an instance is constrained when a strictly longer candidate instance
///   in the same utterance covers it;
/// * the establishment turn is the first prefix of the dialogue in which the
///   n-gram is a candidate with at least one free instance.
pub fn brute_force(d: &Dialogue, max_n: usize) -> BTreeMap<Vec<String>, EntryView> {
    let full = classify(d, d.utterances.len(), max_n);
    let mut out = BTreeMap::new();
    for (key, occs) in &full {
        let established_at = (1..=d.utterances.len()).find(|&j| {
            classify(d, j, max_n)
                .get(key)
                .is_some_and(|o| o.iter().any(|x| x.3))
        });
        let first = occs.iter().min().unwrap();
        let initiator = d.utterances[first.0 - 1].speaker;
        out.insert(
            key.clone(),
            EntryView {
                occurrences: occs.clone(),
                established_at,
                initiator,
            },
        );
    }
    out
}

type Instances = BTreeMap<Vec<String>, Vec<(usize, usize, usize, bool)>>;

/// Candidates and typed instances for the first `upto` utterances.
fn classify(d: &Dialogue, upto: usize, max_n: usize) -> Instances {
    let utts = &d.utterances[..upto];
    let words = |u: &entrain::corpus::Utterance| -> Vec<Option<String>> {
        u.tokens
            .iter()
            .map(|t| (!t.is_punct_mask).then(|| t.canonical.clone()))
            .collect()
    };
    let mut by_speaker: BTreeMap<Vec<String>, (bool, bool)> = BTreeMap::new();
    for u in utts {
        let w = words(u);
        for i in 0..w.len() {
            for j in i + 1..=w.len().min(i + max_n) {
                let Some(gram) = w[i..j].iter().cloned().collect::<Option<Vec<String>>>() else {
                    continue;
                };
                let e = by_speaker.entry(gram).or_default();
                match u.speaker {
                    Speaker::User => e.0 = true,
                    Speaker::Agent => e.1 = true,
                }
            }
        }
    }
    let mut inst: Instances = BTreeMap::new();
    for (gram, (a, b)) in &by_speaker {
        if !(a & b) {
            continue;
        }
        for u in utts {
            let w = words(u);
            let mut i = 0;
            while i + gram.len() <= w.len() {
                let hit = w[i..i + gram.len()]
                    .iter()
                    .zip(gram)
                    .all(|(x, g)| x.as_deref() == Some(g.as_str()));
                if hit {
                    inst.entry(gram.clone())
                        .or_default()
                        .push((u.index, i, i + gram.len(), true));
                    i += gram.len();
                } else {
                    i += 1;
                }
            }
        }
    }
    let all: Vec<(usize, usize, usize, usize)> = inst
        .iter()
        .flat_map(|(g, os)| os.iter().map(move |o| (o.0, o.1, o.2, g.len())))
        .collect();
    for (gram, os) in inst.iter_mut() {
        for o in os.iter_mut() {
            o.3 = !all
                .iter()
                .any(|c| c.0 == o.0 && c.3 > gram.len() && c.1 <= o.1 && o.2 <= c.2);
        }
    }
    inst
}

pub mod props;
