//! Dialogue-level and expression-level entrainment measures.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Speaker};
use crate::error::{Error, Result};
use crate::lexicon::{DialogueLexicon, InstanceKind, LexiconEntry};

pub type Ratio = Rational64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEntrainment {
    pub utterance_index: usize,
    pub speaker: Speaker,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionMeasures {
    pub frequency: usize,
    pub size: usize,
    pub span: usize,
    pub density: Ratio,
    pub priming: usize,
    pub priming_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueMeasures {
    pub entr_user: Option<Ratio>,
    pub entr_agent: Option<Ratio>,
    pub els: usize,
    pub ier_user: Option<Ratio>,
    pub ier_agent: Option<Ratio>,
    pub err_user: Ratio,
    pub err_agent: Ratio,
    pub per_turn: Vec<TurnEntrainment>,
    pub per_expression: BTreeMap<String, ExpressionMeasures>,
}

impl DialogueMeasures {
    pub fn entr(&self, speaker: Speaker) -> Option<Ratio> {
        match speaker {
            Speaker::User => self.entr_user,
            Speaker::Agent => self.entr_agent,
        }
    }
}

fn ratio(num: usize, den: usize) -> Ratio {
    if den == 0 {
        return Ratio::from_integer(0);
    }
    Ratio::new(num as i64, den as i64)
}

/// E for every utterance: free instances of expressions established in or
/// before that utterance.
pub fn turn_counts(lex: &DialogueLexicon, d: &Dialogue) -> Vec<TurnEntrainment> {
    let mut counts: BTreeMap<usize, usize> = d.utterances.iter().map(|u| (u.index, 0)).collect();
    for e in &lex.entries {
        let Some(at) = e.established_at else {
            continue;
        };
        for o in &e.occurrences {
            if o.kind == InstanceKind::Free && o.utterance_index >= at {
                *counts.entry(o.utterance_index).or_insert(0) += 1;
            }
        }
    }
    d.utterances
        .iter()
        .map(|u| TurnEntrainment {
            utterance_index: u.index,
            speaker: u.speaker,
            count: counts[&u.index],
        })
        .collect()
}

/// Mean E over the speaker's own utterances.
pub fn entr(lex: &DialogueLexicon, d: &Dialogue, speaker: Speaker) -> Result<Ratio> {
    entr_from_turns(&turn_counts(lex, d), speaker)
        .ok_or_else(|| Error::Analysis(format!("dialogue {} has no {speaker} utterances", d.id)))
}

fn entr_from_turns(turns: &[TurnEntrainment], speaker: Speaker) -> Option<Ratio> {
    let (n, sum) = turns
        .iter()
        .filter(|t| t.speaker == speaker)
        .fold((0, 0), |(n, s), t| (n + 1, s + t.count));
    (n > 0).then(|| ratio(sum, n))
}

pub fn els(lex: &DialogueLexicon) -> usize {
    lex.established().count()
}

/// Share of established expressions first produced by `speaker`; absent
/// when nothing is established.
pub fn ier(lex: &DialogueLexicon, speaker: Speaker) -> Option<Ratio> {
    let total = els(lex);
    let mine = lex.established().filter(|e| e.initiator == speaker).count();
    (total > 0).then(|| ratio(mine, total))
}

/// Tokens the speaker spends inside instances of established expressions,
/// over all non-punctuation tokens of the dialogue.
pub fn err(lex: &DialogueLexicon, d: &Dialogue, speaker: Speaker) -> Ratio {
    let total: usize = d
        .utterances
        .iter()
        .map(|u| u.tokens.iter().filter(|t| !t.is_punct_mask).count())
        .sum();
    let mut covered: HashSet<(usize, usize)> = HashSet::new();
    for e in lex.established() {
        for o in e.occurrences.iter().filter(|o| o.speaker == speaker) {
            covered.extend((o.span.start..o.span.end).map(|p| (o.utterance_index, p)));
        }
    }
    ratio(covered.len(), total)
}

pub fn expression_measures(entry: &LexiconEntry) -> Result<ExpressionMeasures> {
    let first = |s: Speaker| {
        entry
            .occurrences
            .iter()
            .filter(|o| o.speaker == s)
            .map(|o| o.utterance_index)
            .min()
    };
    let other = entry.initiator.other();
    let (Some(init_first), Some(other_first)) = (first(entry.initiator), first(other)) else {
        return Err(Error::Analysis(format!(
            "expression '{}' is not used by both speakers",
            entry.key
        )));
    };
    let utterances: BTreeSet<usize> = entry
        .occurrences
        .iter()
        .map(|o| o.utterance_index)
        .collect();
    let lo = *utterances.first().expect("occurrences are non-empty");
    let hi = *utterances.last().expect("occurrences are non-empty");
    let frequency = utterances.len();
    let span = hi - lo + 1;
    let priming = entry
        .occurrences
        .iter()
        .filter(|o| o.speaker == entry.initiator && o.utterance_index < other_first)
        .count();
    Ok(ExpressionMeasures {
        frequency,
        size: entry.key.len(),
        span,
        density: ratio(frequency, span),
        priming,
        priming_distance: other_first - init_first,
    })
}

pub fn dialogue_measures(lex: &DialogueLexicon, d: &Dialogue) -> Result<DialogueMeasures> {
    let per_turn = turn_counts(lex, d);
    let per_expression = lex
        .established()
        .map(|e| Ok((e.key.to_string(), expression_measures(e)?)))
        .collect::<Result<_>>()?;
    Ok(DialogueMeasures {
        entr_user: entr_from_turns(&per_turn, Speaker::User),
        entr_agent: entr_from_turns(&per_turn, Speaker::Agent),
        els: els(lex),
        ier_user: ier(lex, Speaker::User),
        ier_agent: ier(lex, Speaker::Agent),
        err_user: err(lex, d, Speaker::User),
        err_agent: err(lex, d, Speaker::Agent),
        per_turn,
        per_expression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterDictionaries;
    use crate::lexicon::{build_lexicon, LexiconConfig};
    use crate::normalize::{normalize_dialogue, NormalizationConfig};

    fn annotate(turns: &[&str]) -> (Dialogue, DialogueLexicon) {
        let cfg = NormalizationConfig::default();
        let turns = turns.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 {
                Speaker::User
            } else {
                Speaker::Agent
            };
            (s, t.to_string())
        });
        let d = normalize_dialogue(Dialogue::from_turns("m", turns).unwrap(), &cfg).unwrap();
        let lex = build_lexicon(
            &d,
            &LexiconConfig::default(),
            &FilterDictionaries::bundled(&cfg),
        );
        (d, lex)
    }

    #[test]
    fn minimal_establishment() {
        let (d, lex) = annotate(&["hotel", "hotel"]);
        assert_eq!(els(&lex), 1);
        assert_eq!(
            entr(&lex, &d, Speaker::Agent).unwrap(),
            Ratio::from_integer(1)
        );
        assert_eq!(
            entr(&lex, &d, Speaker::User).unwrap(),
            Ratio::from_integer(0)
        );
        assert_eq!(ier(&lex, Speaker::User), Some(Ratio::from_integer(1)));
        assert_eq!(ier(&lex, Speaker::Agent), Some(Ratio::from_integer(0)));
    }

    #[test]
    fn nothing_established() {
        let (d, lex) = annotate(&["hello there", "good morning"]);
        assert_eq!(els(&lex), 0);
        assert!(turn_counts(&lex, &d).iter().all(|t| t.count == 0));
        assert_eq!(ier(&lex, Speaker::User), None);
        assert_eq!(err(&lex, &d, Speaker::User), Ratio::from_integer(0));
        let m = dialogue_measures(&lex, &d).unwrap();
        assert_eq!(m.entr_user, Some(Ratio::from_integer(0)));
        assert!(m.per_expression.is_empty());
    }

    #[test]
    fn err_counts_tokens() {
        let (d, lex) = annotate(&["guest house", "guest house"]);
        assert_eq!(els(&lex), 1);
        assert_eq!(err(&lex, &d, Speaker::User), Ratio::new(1, 2));
        assert_eq!(err(&lex, &d, Speaker::Agent), Ratio::new(1, 2));
    }

    #[test]
    fn err_ignores_punctuation_in_total() {
        let (d, lex) = annotate(&["guest house.", "guest house!"]);
        assert_eq!(err(&lex, &d, Speaker::User), Ratio::new(1, 2));
    }

    #[test]
    fn speaker_without_turns() {
        let cfg = NormalizationConfig::default();
        let d = Dialogue::from_turns("m", [(Speaker::User, "hotel")]).unwrap();
        let d = normalize_dialogue(d, &cfg).unwrap();
        let lex = build_lexicon(
            &d,
            &LexiconConfig::default(),
            &FilterDictionaries::bundled(&cfg),
        );
        assert!(entr(&lex, &d, Speaker::Agent).is_err());
        assert_eq!(dialogue_measures(&lex, &d).unwrap().entr_agent, None);
    }

    #[test]
    fn expression_measures_by_hand() {
        // train: U1, A2, U3, U5 ; A4 has none
        let (_, lex) = annotate(&["the train", "a train", "train please", "ok", "train"]);
        let e = lex.entry("train").unwrap();
        let m = expression_measures(e).unwrap();
        assert_eq!(m.frequency, 4);
        assert_eq!(m.size, 1);
        assert_eq!(m.span, 5);
        assert_eq!(m.density, Ratio::new(4, 5));
        assert_eq!(m.priming, 1);
        assert_eq!(m.priming_distance, 1);
        assert_eq!(
            m.density * Ratio::from_integer(m.span as i64),
            Ratio::from_integer(4)
        );
    }
}
