//! The annotation record format and the pipeline that produces it.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::filter::FilterDictionaries;
use crate::lexicon::{build_lexicon, DialogueLexicon, LexiconConfig, LexiconEntry};
use crate::measures::{dialogue_measures, DialogueMeasures};
use crate::normalize::{normalize_dialogue, NormalizationConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// One annotated dialogue, serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema: u32,
    pub dialogue_id: String,
    #[serde(default)]
    pub domains: Vec<String>,
    pub utterances: Vec<Utterance>,
    pub entries: Vec<LexiconEntry>,
    pub measures: DialogueMeasures,
}

impl AnnotationRecord {
    pub fn lexicon(&self) -> DialogueLexicon {
        DialogueLexicon {
            dialogue_id: self.dialogue_id.clone(),
            entries: self.entries.clone(),
        }
    }

    pub fn dialogue(&self) -> Dialogue {
        Dialogue {
            id: self.dialogue_id.clone(),
            domains: self.domains.iter().cloned().collect(),
            utterances: self.utterances.clone(),
        }
    }

    pub fn turn_count(&self) -> usize {
        self.utterances.len()
    }
}

/// Everything needed to annotate a raw dialogue.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub normalization: NormalizationConfig,
    pub lexicon: LexiconConfig,
    pub dictionaries: FilterDictionaries,
}

impl Default for Pipeline {
    fn default() -> Self {
        let normalization = NormalizationConfig::default();
        let dictionaries = FilterDictionaries::bundled(&normalization);
        Pipeline {
            normalization,
            lexicon: LexiconConfig::default(),
            dictionaries,
        }
    }
}

impl Pipeline {
    pub fn annotate(&self, d: Dialogue) -> Result<AnnotationRecord> {
        let d = normalize_dialogue(d, &self.normalization)?;
        let lex = build_lexicon(&d, &self.lexicon, &self.dictionaries);
        let measures = dialogue_measures(&lex, &d)?;
        Ok(AnnotationRecord {
            schema: SCHEMA_VERSION,
            dialogue_id: d.id,
            domains: d.domains.into_iter().collect(),
            utterances: d.utterances,
            entries: lex.entries,
            measures,
        })
    }
}

/// Reads JSON lines, reporting the file and line of any malformed record.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("{} line {}", path.display(), i + 1),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    if let Some(r) = records.iter().find(|r| r.schema != SCHEMA_VERSION) {
        return Err(Error::validation(
            &r.dialogue_id,
            format!(
                "unsupported schema version {} in {}",
                r.schema,
                path.display()
            ),
        ));
    }
    Ok(records)
}

/// Serializes items as JSON lines.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)
            .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
