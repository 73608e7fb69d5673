//! Extraction samples and span-level scoring.
//!
//! A sample asks for every instance, in one target utterance, of an
//! expression established in or before that utterance. The model sees a
//! limited window of prior turns; gold instances whose cross-speaker
//! evidence lies entirely before the window cannot be recovered from the
//! input and always count as misses.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::cli::AnnotationRecord;
use crate::corpus::Speaker;
use crate::error::{Error, Result};
use crate::lexicon::{ExpressionKey, InstanceKind, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryLen {
    Turns(usize),
    Full,
}

impl FromStr for HistoryLen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(HistoryLen::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(HistoryLen::Turns(n)),
            _ => Err(Error::Config(format!(
                "history must be a positive number of turns or 'full', got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for HistoryLen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryLen::Turns(n) => write!(f, "{n}"),
            HistoryLen::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Roles {
    Agent,
    User,
    Both,
}

impl Roles {
    fn includes(self, s: Speaker) -> bool {
        match self {
            Roles::Agent => s == Speaker::Agent,
            Roles::User => s == Speaker::User,
            Roles::Both => true,
        }
    }
}

impl FromStr for Roles {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agent" => Ok(Roles::Agent),
            "user" => Ok(Roles::User),
            "both" => Ok(Roles::Both),
            _ => Err(Error::Config(format!(
                "roles must be agent, user or both, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub history: HistoryLen,
    pub roles: Roles,
    /// Keep only targets with at least one gold instance.
    pub with_gold: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            history: HistoryLen::Full,
            roles: Roles::Agent,
            with_gold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub span: TokenSpan,
    pub key: ExpressionKey,
    pub in_window: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionSample {
    pub sample_id: String,
    pub dialogue_id: String,
    pub target_index: usize,
    pub role: Speaker,
    pub history: Vec<ContextTurn>,
    pub target_text: String,
    /// Surface tokens of the target; spans index into this list.
    pub target_tokens: Vec<String>,
    pub gold_spans: Vec<GoldSpan>,
    pub out_of_window_gold: usize,
}

pub fn sample_id(dialogue_id: &str, target_index: usize) -> String {
    format!("{dialogue_id}#{target_index}")
}

fn samples_for(r: &AnnotationRecord, opts: &SampleOptions) -> Vec<ExtractionSample> {
    let mut out = Vec::new();
    for (pos, u) in r.utterances.iter().enumerate() {
        if !opts.roles.includes(u.speaker) {
            continue;
        }
        let first = match opts.history {
            HistoryLen::Full => 0,
            HistoryLen::Turns(h) => pos.saturating_sub(h),
        };
        let window_start = r.utterances[first].index;
        let mut gold: Vec<GoldSpan> = Vec::new();
        for e in &r.entries {
            if !e.established_at.is_some_and(|at| at <= u.index) {
                continue;
            }
            let evidence_in_window = e.occurrences.iter().any(|o| {
                o.speaker != u.speaker
                    && o.utterance_index < u.index
                    && o.utterance_index >= window_start
            });
            for o in &e.occurrences {
                if o.utterance_index == u.index && o.kind == InstanceKind::Free {
                    gold.push(GoldSpan {
                        span: o.span,
                        key: e.key.clone(),
                        in_window: evidence_in_window,
                    });
                }
            }
        }
        if opts.with_gold && gold.is_empty() {
            continue;
        }
        gold.sort_by_key(|g| g.span);
        out.push(ExtractionSample {
            sample_id: sample_id(&r.dialogue_id, u.index),
            dialogue_id: r.dialogue_id.clone(),
            target_index: u.index,
            role: u.speaker,
            history: r.utterances[first..pos]
                .iter()
                .map(|h| ContextTurn {
                    index: h.index,
                    speaker: h.speaker,
                    text: h.raw_text.clone(),
                })
                .collect(),
            target_text: u.raw_text.clone(),
            target_tokens: u.tokens.iter().map(|t| t.surface.clone()).collect(),
            out_of_window_gold: gold.iter().filter(|g| !g.in_window).count(),
            gold_spans: gold,
        });
    }
    out
}

/// Samples for every selected utterance, ordered by dialogue id and turn.
pub fn build_samples(records: &[AnnotationRecord], opts: &SampleOptions) -> Vec<ExtractionSample> {
    let mut out: Vec<ExtractionSample> =
        records.iter().flat_map(|r| samples_for(r, opts)).collect();
    out.sort_by(|a, b| {
        (a.dialogue_id.as_str(), a.target_index).cmp(&(b.dialogue_id.as_str(), b.target_index))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub spans: Vec<TokenSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub recall: Rational64,
    pub precision: Rational64,
    pub f1: Rational64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let frac = |n: usize, d: usize| {
            if d == 0 {
                Rational64::from_integer(0)
            } else {
                Rational64::new(n as i64, d as i64)
            }
        };
        let precision = frac(tp, tp + fp);
        let recall = frac(tp, tp + fn_);
        let f1 = if precision + recall == Rational64::from_integer(0) {
            Rational64::from_integer(0)
        } else {
            Rational64::from_integer(2) * precision * recall / (precision + recall)
        };
        EvalResult {
            recall,
            precision,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Exact-span scoring. Out-of-window gold always counts as a miss, and a
/// prediction that hits out-of-window gold is neither rewarded nor
/// penalized. Samples without a prediction line count as empty predictions.
pub fn evaluate(predictions: &[Prediction], samples: &[ExtractionSample]) -> Result<EvalResult> {
    let by_id: BTreeMap<&str, &ExtractionSample> =
        samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut predicted: BTreeMap<&str, HashSet<TokenSpan>> = BTreeMap::new();
    for p in predictions {
        if !by_id.contains_key(p.sample_id.as_str()) {
            return Err(Error::validation(
                &p.sample_id,
                "prediction refers to an unknown sample id",
            ));
        }
        if predicted
            .insert(p.sample_id.as_str(), p.spans.iter().copied().collect())
            .is_some()
        {
            return Err(Error::validation(
                &p.sample_id,
                "more than one prediction line for this sample",
            ));
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let empty = HashSet::new();
    for s in samples {
        let pred = predicted.get(s.sample_id.as_str()).unwrap_or(&empty);
        let in_window: HashSet<TokenSpan> = s
            .gold_spans
            .iter()
            .filter(|g| g.in_window)
            .map(|g| g.span)
            .collect();
        let outside: HashSet<TokenSpan> = s
            .gold_spans
            .iter()
            .filter(|g| !g.in_window)
            .map(|g| g.span)
            .collect();
        let hits = pred.intersection(&in_window).count();
        tp += hits;
        fp += pred
            .iter()
            .filter(|p| !in_window.contains(p) && !outside.contains(p))
            .count();
        fn_ += in_window.len() - hits + s.out_of_window_gold;
    }
    Ok(EvalResult::from_counts(tp, fp, fn_))
}

/// Reference predictor that returns exactly the gold recoverable from the
/// visible window.
pub fn oracle_within_window(samples: &[ExtractionSample]) -> Vec<Prediction> {
    samples
        .iter()
        .map(|s| Prediction {
            sample_id: s.sample_id.clone(),
            spans: s
                .gold_spans
                .iter()
                .filter(|g| g.in_window)
                .map(|g| g.span)
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::Pipeline;
    use crate::corpus::Dialogue;

    fn record(turns: &[&str]) -> AnnotationRecord {
        let turns = turns.iter().enumerate().map(|(i, t)| {
            let s = if i % 2 == 0 {
                Speaker::User
            } else {
                Speaker::Agent
            };
            (s, t.to_string())
        });
        Pipeline::default()
            .annotate(Dialogue::from_turns("d", turns).unwrap())
            .unwrap()
    }

    fn opts(history: HistoryLen, roles: Roles) -> SampleOptions {
        SampleOptions {
            history,
            roles,
            with_gold: false,
        }
    }

    #[test]
    fn parses_options() {
        assert_eq!("full".parse::<HistoryLen>().unwrap(), HistoryLen::Full);
        assert_eq!("2".parse::<HistoryLen>().unwrap(), HistoryLen::Turns(2));
        assert!("0".parse::<HistoryLen>().is_err());
        assert_eq!("both".parse::<Roles>().unwrap(), Roles::Both);
        assert!("system".parse::<Roles>().is_err());
    }

    #[test]
    fn role_counts_add_up() {
        let r = record(&["a hotel", "the hotel", "ok", "hotel"]);
        let n =
            |roles| build_samples(std::slice::from_ref(&r), &opts(HistoryLen::Full, roles)).len();
        assert_eq!(n(Roles::Agent) + n(Roles::User), n(Roles::Both));
        assert_eq!(n(Roles::Agent), 2);
    }

    #[test]
    fn window_truncation_marks_gold() {
        // hotel: U1, A2, U3 filler, A4 hotel. With one turn of history the
        // agent at turn 4 only sees turn 3, which has no user "hotel".
        let r = record(&["a hotel", "the hotel", "thanks", "your hotel"]);
        let full = build_samples(
            std::slice::from_ref(&r),
            &opts(HistoryLen::Full, Roles::Agent),
        );
        let short = build_samples(
            std::slice::from_ref(&r),
            &opts(HistoryLen::Turns(1), Roles::Agent),
        );
        let t4 = |v: &[ExtractionSample]| v.iter().find(|s| s.target_index == 4).cloned().unwrap();
        assert_eq!(t4(&full).out_of_window_gold, 0);
        assert_eq!(t4(&short).out_of_window_gold, 1);
        assert_eq!(t4(&short).history.len(), 1);
        assert_eq!(t4(&full).history.len(), 3);
        assert_eq!(t4(&full).sample_id, "d#4");
    }

    #[test]
    fn scoring_counts_by_hand() {
        let r = record(&["a hotel", "the hotel", "thanks", "your hotel"]);
        let samples = build_samples(
            std::slice::from_ref(&r),
            &opts(HistoryLen::Full, Roles::Agent),
        );
        let gold2 = samples[0].gold_spans[0].span;
        let preds = vec![
            Prediction {
                sample_id: "d#2".into(),
                spans: vec![gold2, TokenSpan::new(0, 1)],
            },
            Prediction {
                sample_id: "d#4".into(),
                spans: vec![],
            },
        ];
        let e = evaluate(&preds, &samples).unwrap();
        assert_eq!((e.tp, e.fp, e.fn_), (1, 1, 1));
        assert_eq!(e.precision, Rational64::new(1, 2));
        assert_eq!(e.recall, Rational64::new(1, 2));
        assert_eq!(e.f1, Rational64::new(1, 2));
    }

    #[test]
    fn oracle_and_empty_predictor() {
        let r = record(&["a hotel", "the hotel", "thanks", "your hotel"]);
        for (h, perfect) in [(HistoryLen::Full, true), (HistoryLen::Turns(1), false)] {
            let s = build_samples(std::slice::from_ref(&r), &opts(h, Roles::Agent));
            let e = evaluate(&oracle_within_window(&s), &s).unwrap();
            assert_eq!(e.f1 == Rational64::from_integer(1), perfect);
            let z = evaluate(&[], &s).unwrap();
            assert_eq!(z.precision, Rational64::from_integer(0));
            assert_eq!(z.recall, Rational64::from_integer(0));
        }
    }

    #[test]
    fn unknown_and_duplicate_predictions_rejected() {
        let r = record(&["a hotel", "the hotel"]);
        let s = build_samples(std::slice::from_ref(&r), &SampleOptions::default());
        let p = |id: &str| Prediction {
            sample_id: id.into(),
            spans: vec![],
        };
        assert!(evaluate(&[p("zzz#1")], &s).is_err());
        assert!(evaluate(&[p("d#2"), p("d#2")], &s).is_err());
    }

    #[test]
    fn with_gold_drops_empty_targets() {
        let r = record(&["a hotel", "the hotel", "thanks", "fine"]);
        let o = SampleOptions {
            with_gold: true,
            ..SampleOptions::default()
        };
        let s = build_samples(std::slice::from_ref(&r), &o);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].target_index, 2);
    }
}
