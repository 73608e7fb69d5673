//! Dialogue corpus model and loaders.
//!
//! Two input formats are understood: MultiWOZ-2.1-style JSON (a map from
//! dialogue id to `{"goal": .., "log": [..]}`) and a line-oriented
//! transcript where every line starts with `USER:` or `AGENT:`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::normalize::NormalizedToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::Agent,
            Speaker::Agent => Speaker::User,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::Agent => "agent",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One slot/value pair of a dialogue act annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActSlot {
    pub slot: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    /// 1-based turn number.
    pub index: usize,
    pub speaker: Speaker,
    pub raw_text: String,
    /// Filled in by [`crate::normalize::normalize_dialogue`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<NormalizedToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_act: Option<Vec<ActSlot>>,
}

impl Utterance {
    pub fn new(index: usize, speaker: Speaker, raw_text: impl Into<String>) -> Self {
        Utterance {
            index,
            speaker,
            raw_text: raw_text.into(),
            tokens: Vec::new(),
            dialogue_act: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub domains: BTreeSet<String>,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Builds a dialogue from `(speaker, text)` turns, numbering them from 1.
    pub fn from_turns<S: Into<String>>(
        id: impl Into<String>,
        turns: impl IntoIterator<Item = (Speaker, S)>,
    ) -> Result<Self> {
        let utterances = turns
            .into_iter()
            .enumerate()
            .map(|(i, (speaker, text))| Utterance::new(i + 1, speaker, text))
            .collect();
        let d = Dialogue {
            id: id.into(),
            domains: BTreeSet::new(),
            utterances,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::validation(&self.id, "no utterances"));
        }
        for (i, u) in self.utterances.iter().enumerate() {
            if u.index != i + 1 {
                return Err(Error::validation(
                    &self.id,
                    format!(
                        "utterance {} has index {}, expected {}",
                        i + 1,
                        u.index,
                        i + 1
                    ),
                ));
            }
            if u.raw_text.trim().is_empty() {
                return Err(Error::validation(
                    &self.id,
                    format!("utterance {} is empty", u.index),
                ));
            }
            if i > 0 && self.utterances[i - 1].speaker == u.speaker {
                return Err(Error::validation(
                    &self.id,
                    format!(
                        "utterances {} and {} are both by the {}; speakers must alternate",
                        u.index - 1,
                        u.index,
                        u.speaker
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn utterance(&self, index: usize) -> Option<&Utterance> {
        index.checked_sub(1).and_then(|i| self.utterances.get(i))
    }

    pub fn count_by(&self, speaker: Speaker) -> usize {
        self.utterances
            .iter()
            .filter(|u| u.speaker == speaker)
            .count()
    }

    pub fn has_acts(&self) -> bool {
        self.utterances.iter().any(|u| u.dialogue_act.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unsplit,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "val" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "unsplit" | "all" => Ok(Split::Unsplit),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(split: Split, dialogues: Vec<Dialogue>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &dialogues {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::validation(&d.id, "duplicate dialogue id in corpus"));
            }
        }
        Ok(Corpus { split, dialogues })
    }
}

const GOAL_NON_DOMAIN_KEYS: &[&str] = &["message", "topic"];

/// Loads a MultiWOZ-2.1-style `data.json`.
///
/// For `Train`/`Valid`/`Test` the split lists `valListFile.txt` and
/// `testListFile.txt` must sit next to the data file; train is everything
/// listed in neither.
pub fn load_multiwoz(path: &Path, split: Split) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let filter = split_filter(path, split)?;
    let mut corpus = parse_multiwoz(&text, &path.display().to_string())?;
    if let Some(keep) = filter {
        corpus.dialogues.retain(|d| keep(d.id.as_str()));
    }
    corpus.split = split;
    Ok(corpus)
}

type IdFilter = Box<dyn Fn(&str) -> bool>;

fn split_filter(path: &Path, split: Split) -> Result<Option<IdFilter>> {
    if split == Split::Unsplit {
        return Ok(None);
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let read_list = |name: &str| -> Result<HashSet<String>> {
        let p = dir.join(name);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect())
    };
    let val = read_list("valListFile.txt")?;
    let test = read_list("testListFile.txt")?;
    Ok(Some(match split {
        Split::Valid => Box::new(move |id| val.contains(id)),
        Split::Test => Box::new(move |id| test.contains(id)),
        _ => Box::new(move |id| !val.contains(id) && !test.contains(id)),
    }))
}

/// Parses MultiWOZ JSON text; `source` names the input in error messages.
pub fn parse_multiwoz(text: &str, source: &str) -> Result<Corpus> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::json(source, &e))?;
    let Value::Object(map) = root else {
        return Err(Error::Parse {
            line: 1,
            message: format!("{source}: expected a JSON object of dialogues"),
        });
    };
    let dialogues = map
        .iter()
        .map(|(id, v)| parse_multiwoz_dialogue(id, v))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(Split::Unsplit, dialogues)
}

fn parse_multiwoz_dialogue(id: &str, v: &Value) -> Result<Dialogue> {
    let log = v
        .get("log")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation(id, "missing 'log' array"))?;
    if log.is_empty() {
        return Err(Error::validation(id, "empty log"));
    }
    let mut utterances = Vec::with_capacity(log.len());
    for (pos, entry) in log.iter().enumerate() {
        let expected = if pos % 2 == 0 {
            Speaker::User
        } else {
            Speaker::Agent
        };
        let text = entry
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::validation(id, format!("log entry {pos} has no 'text'")))?;
        if let Some(found) = entry_role(entry) {
            if found != expected {
                return Err(Error::validation(
                    id,
                    format!(
                        "log entry {pos} is a {found} turn where a {expected} turn was expected \
                         (consecutive same-role turns)"
                    ),
                ));
            }
        }
        let mut u = Utterance::new(pos + 1, expected, text);
        u.dialogue_act = entry.get("dialog_act").map(parse_acts);
        utterances.push(u);
    }
    let d = Dialogue {
        id: id.to_string(),
        domains: dialogue_domains(v),
        utterances,
    };
    d.validate()?;
    Ok(d)
}

/// The role an entry claims for itself, if it says anything.
fn entry_role(entry: &Value) -> Option<Speaker> {
    for key in ["speaker", "role"] {
        if let Some(s) = entry.get(key).and_then(Value::as_str) {
            return match s.to_ascii_lowercase().as_str() {
                "user" | "usr" | "human" => Some(Speaker::User),
                "agent" | "system" | "sys" => Some(Speaker::Agent),
                _ => None,
            };
        }
    }
    // MultiWOZ leaves user metadata empty and fills it for system turns.
    match entry.get("metadata") {
        Some(Value::Object(m)) if m.is_empty() => Some(Speaker::User),
        Some(Value::Object(_)) => Some(Speaker::Agent),
        _ => None,
    }
}

fn parse_acts(v: &Value) -> Vec<ActSlot> {
    let mut out = Vec::new();
    if let Value::Object(acts) = v {
        for pairs in acts.values() {
            for pair in pairs.as_array().into_iter().flatten() {
                let parts: Vec<String> = pair
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|p| match p {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                if let [slot, value, ..] = parts.as_slice() {
                    out.push(ActSlot {
                        slot: slot.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
    }
    out
}

fn dialogue_domains(v: &Value) -> BTreeSet<String> {
    let mut domains = BTreeSet::new();
    if let Some(Value::Object(goal)) = v.get("goal") {
        for (k, g) in goal {
            if GOAL_NON_DOMAIN_KEYS.contains(&k.as_str()) {
                continue;
            }
            if matches!(g, Value::Object(m) if !m.is_empty()) {
                domains.insert(k.to_ascii_lowercase());
            }
        }
        return domains;
    }
    // No goal: fall back to domains whose belief state was ever filled in.
    let log = v.get("log").and_then(Value::as_array);
    for entry in log.into_iter().flatten() {
        let Some(Value::Object(meta)) = entry.get("metadata") else {
            continue;
        };
        for (domain, state) in meta {
            let filled = ["semi", "book"].iter().any(|part| {
                state
                    .get(part)
                    .and_then(Value::as_object)
                    .is_some_and(|slots| {
                        slots.values().any(|s| {
                            matches!(s, Value::String(x) if !x.is_empty() && x != "not mentioned")
                        })
                    })
            });
            if filled {
                domains.insert(domain.to_ascii_lowercase());
            }
        }
    }
    domains
}

/// Loads a `USER: ...` / `AGENT: ...` transcript. The dialogue id is the
/// file stem unless a `# id:` header overrides it.
pub fn load_transcript(path: &Path) -> Result<Dialogue> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "transcript".to_string());
    parse_transcript(&id, &text)
}

pub fn parse_transcript(default_id: &str, text: &str) -> Result<Dialogue> {
    let mut id = default_id.to_string();
    let mut domains = BTreeSet::new();
    let mut utterances: Vec<Utterance> = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim() {
                    "id" => id = value.trim().to_string(),
                    "domains" => {
                        domains = value
                            .split(',')
                            .map(|d| d.trim().to_ascii_lowercase())
                            .filter(|d| !d.is_empty())
                            .collect()
                    }
                    _ => {}
                }
            }
            continue;
        }
        let (role, rest) = trimmed.split_once(':').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected 'USER:' or 'AGENT:' prefix".to_string(),
        })?;
        let speaker = match role.trim().to_ascii_uppercase().as_str() {
            "USER" => Speaker::User,
            "AGENT" => Speaker::Agent,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown role prefix '{other}'"),
                })
            }
        };
        let raw = rest.trim();
        if raw.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty utterance".to_string(),
            });
        }
        if utterances.last().is_some_and(|u| u.speaker == speaker) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("the {speaker} speaks twice in a row"),
            });
        }
        utterances.push(Utterance::new(utterances.len() + 1, speaker, raw));
    }
    let d = Dialogue {
        id,
        domains,
        utterances,
    };
    d.validate()?;
    Ok(d)
}
