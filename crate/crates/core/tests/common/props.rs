//! Property checks shared by the proptest suite and the acceptance gate.

use std::collections::BTreeMap;

use entrain::analyze::gaussian_kernel;
use entrain::corpus::Dialogue;
use entrain::lexicon::InstanceKind;
use entrain::measures::Ratio;
use entrain::normalize::{normalize_token, NormalizationConfig};
use entrain::{AnnotationRecord, Pipeline};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::alternating;

pub const WORDS: &[&str] = &[
    "hotel",
    "restaurant",
    "centre",
    "center",
    "price",
    "range",
    "cheap",
    "table",
    "the",
    "a",
    "in",
    "town",
    "reference",
    "number",
    "train",
    "taxi",
];
pub const TOKENS: &[&str] = &["cab", "map", "pen", "cup", "box", "key", "jam", "fig"];
const PUNCT: &[&str] = &[".", ",", "!", "?", ";"];

/// Turns as lists of (word index, optional punctuation index after it).
pub type Shape = Vec<Vec<(usize, Option<usize>)>>;

pub fn shape(vocab: usize, max_turns: usize, max_tokens: usize) -> impl Strategy<Value = Shape> {
    prop::collection::vec(
        prop::collection::vec(
            (0..vocab, prop::option::weighted(0.15, 0..PUNCT.len())),
            1..=max_tokens,
        ),
        1..=max_turns,
    )
}

pub fn render(s: &Shape, vocab: &[&str]) -> Vec<String> {
    s.iter()
        .map(|turn| {
            turn.iter()
                .map(|(w, p)| match p {
                    Some(p) => format!("{} {}", vocab[*w], PUNCT[*p]),
                    None => vocab[*w].to_string(),
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Same words with changed casing, swapped punctuation marks and
/// punctuation attached to the preceding word.
pub fn perturb(s: &Shape, vocab: &[&str], salt: u64) -> Vec<String> {
    let mut k = salt;
    let mut next = || {
        k = k
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (k >> 33) as usize
    };
    s.iter()
        .map(|turn| {
            turn.iter()
                .map(|(w, p)| {
                    let word = vocab[*w];
                    let word = match next() % 3 {
                        0 => word.to_uppercase(),
                        1 => {
                            let mut c = word.chars();
                            c.next()
                                .map(|f| f.to_uppercase().chain(c).collect())
                                .unwrap_or_default()
                        }
                        _ => word.to_string(),
                    };
                    match p {
                        Some(_) => {
                            let mark = PUNCT[next() % PUNCT.len()];
                            if next() % 2 == 0 {
                                format!("{word}{mark}")
                            } else {
                                format!("{word} {mark}")
                            }
                        }
                        None => word,
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn annotate(turns: &[String]) -> AnnotationRecord {
    Pipeline::default()
        .annotate(alternating("p", turns))
        .unwrap()
}

pub fn dialogue(s: &Shape, vocab: &[&str]) -> Dialogue {
    alternating("p", &render(s, vocab))
}

pub fn word() -> impl Strategy<Value = String> {
    let spelling: Vec<String> = NormalizationConfig::default()
        .spelling_map
        .into_keys()
        .collect();
    prop_oneof![
        "[a-zA-Z]{1,14}",
        "[a-z]{1,6}(ing|ed|s|es|ies|ation|ness|ful|ly|ement|ise|ised|our|re)",
        prop::sample::select(spelling),
        prop::sample::select(vec!["one", "Two", "SEVEN", "hundred", "twenty"])
            .prop_map(String::from),
    ]
}

pub fn idempotent_normalization(w: &str) -> Result<(), TestCaseError> {
    let cfg = NormalizationConfig::default();
    let once = normalize_token(w, &cfg);
    prop_assert_eq!(normalize_token(&once, &cfg), once);
    Ok(())
}

pub fn entr_invariant(s: &Shape, salt: u64) -> Result<(), TestCaseError> {
    let a = annotate(&render(s, WORDS));
    let b = annotate(&perturb(s, WORDS, salt));
    prop_assert_eq!(a.measures.entr_user, b.measures.entr_user);
    prop_assert_eq!(a.measures.entr_agent, b.measures.entr_agent);
    prop_assert_eq!(&a.measures.per_turn, &b.measures.per_turn);
    Ok(())
}

pub fn free_constrained_partition(s: &Shape) -> Result<(), TestCaseError> {
    let r = annotate(&render(s, TOKENS));
    for e in &r.entries {
        for o in &e.occurrences {
            let covered = r.entries.iter().any(|f| {
                f.key.len() > e.key.len()
                    && f.occurrences
                        .iter()
                        .any(|c| c.utterance_index == o.utterance_index && c.span.contains(&o.span))
            });
            prop_assert_eq!(
                o.kind == InstanceKind::Constrained,
                covered,
                "{} {:?}",
                e.key,
                o
            );
        }
    }
    Ok(())
}

pub fn establishment_monotone(s: &Shape, cut: usize) -> Result<(), TestCaseError> {
    let k = 1 + cut % s.len();
    let full = annotate(&render(s, TOKENS));
    let prefix = annotate(&render(&s[..k].to_vec(), TOKENS));
    let at = |r: &AnnotationRecord| -> BTreeMap<String, usize> {
        r.entries
            .iter()
            .filter_map(|e| Some((e.key.to_string(), e.established_at?)))
            .collect()
    };
    let in_full: BTreeMap<_, _> = at(&full).into_iter().filter(|(_, j)| *j <= k).collect();
    prop_assert_eq!(at(&prefix), in_full);
    Ok(())
}

pub fn density_identity(s: &Shape) -> Result<(), TestCaseError> {
    let r = annotate(&render(s, TOKENS));
    for (key, m) in &r.measures.per_expression {
        prop_assert_eq!(
            m.density * Ratio::from_integer(m.span as i64),
            Ratio::from_integer(m.frequency as i64),
            "{}",
            key
        );
        prop_assert!(m.priming >= 1);
        prop_assert!(m.span > m.priming_distance);
        prop_assert!(m.frequency >= 2);
    }
    Ok(())
}

pub fn ier_sums_to_one(s: &Shape) -> Result<(), TestCaseError> {
    let m = annotate(&render(s, TOKENS)).measures;
    if m.els > 0 {
        prop_assert_eq!(
            m.ier_user.unwrap() + m.ier_agent.unwrap(),
            Ratio::from_integer(1)
        );
    } else {
        prop_assert!(m.ier_user.is_none() && m.ier_agent.is_none());
    }
    Ok(())
}

pub fn kernel_sums_to_one(sigma: f64) -> Result<(), TestCaseError> {
    let total: f64 = gaussian_kernel(sigma).iter().sum();
    prop_assert!(
        (total - 1.0).abs() <= 1e-12,
        "sigma {} sum {}",
        sigma,
        total
    );
    Ok(())
}
