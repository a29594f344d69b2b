//! On-disk formats for backends, few-shot examples, datasets and concept lists.
//!
//! * table: a JSON object mapping each prompt to a list of
//!   `[completion, probability]` pairs.
//! * n-gram: `{"order", "unit": "word"|"character", "alpha", "vocab": [..],
//!   "counts": [{"context": [..], "unit", "count"}]}`.
//! * examples: JSON lines, one object per example, fields in file order.
//! * dataset: UTF-8 lines `question<TAB>answer`.
//! * concepts: UTF-8, one concept per line; blank lines are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use cascade_core::runtime::Example;
use cascade_core::star::LabeledPair;
use cascade_core::{ExampleSet, NGramLM, TableLM, Unit};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.into(), source })
}

fn invalid(path: &Path, line: usize, message: impl ToString) -> FormatError {
    FormatError::Invalid { path: path.into(), line, message: message.to_string() }
}

pub fn parse_table(text: &str) -> Result<TableLM, String> {
    let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut entries = Vec::with_capacity(raw.len());
    for (prompt, value) in raw {
        let completions: Vec<(String, f64)> =
            serde_json::from_value(value).map_err(|e| format!("prompt {prompt:?}: {e}"))?;
        entries.push((prompt, completions));
    }
    TableLM::new(entries).map_err(|e| e.to_string())
}

pub fn table_to_json(table: &TableLM) -> String {
    let mut map = serde_json::Map::new();
    for (prompt, completions) in table.entries() {
        map.insert(prompt.into(), serde_json::to_value(completions).expect("pairs serialize"));
    }
    serde_json::to_string_pretty(&map).expect("maps serialize")
}

pub fn load_table(path: &Path) -> Result<TableLM, FormatError> {
    parse_table(&read(path)?).map_err(|m| invalid(path, 0, m))
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum UnitName {
    Word,
    Character,
}

#[derive(Serialize, Deserialize)]
struct CountLine {
    context: Vec<String>,
    unit: String,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct NGramFile {
    order: usize,
    unit: UnitName,
    alpha: f64,
    #[serde(default)]
    vocab: Vec<String>,
    #[serde(default)]
    counts: Vec<CountLine>,
}

pub fn parse_ngram(text: &str) -> Result<NGramLM, String> {
    let file: NGramFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let unit = match file.unit {
        UnitName::Word => Unit::Word,
        UnitName::Character => Unit::Character,
    };
    NGramLM::from_parts(file.order, unit, file.alpha, file.vocab, file.counts.into_iter().map(|c| (c.context, c.unit, c.count)))
        .map_err(|e| e.to_string())
}

pub fn ngram_to_json(model: &NGramLM) -> String {
    let file = NGramFile {
        order: model.order(),
        unit: match model.unit() {
            Unit::Word => UnitName::Word,
            Unit::Character => UnitName::Character,
        },
        alpha: model.alpha(),
        vocab: model.vocab().iter().cloned().collect(),
        counts: model
            .counts()
            .map(|(context, unit, count)| CountLine { context: context.to_vec(), unit: unit.into(), count })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("n-gram files serialize")
}

pub fn load_ngram(path: &Path) -> Result<NGramLM, FormatError> {
    parse_ngram(&read(path)?).map_err(|m| invalid(path, 0, m))
}

pub fn save_ngram(path: &Path, model: &NGramLM) -> Result<(), FormatError> {
    fs::write(path, ngram_to_json(model) + "\n").map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn parse_examples(text: &str) -> Result<ExampleSet, (usize, String)> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
        let mut fields = Vec::with_capacity(map.len());
        for (k, v) in map {
            let serde_json::Value::String(v) = v else {
                return Err((i + 1, format!("field `{k}` must be a string")));
            };
            fields.push((k, v));
        }
        examples.push(Example::new(fields).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(ExampleSet::new(examples))
}

pub fn load_examples(path: &Path) -> Result<ExampleSet, FormatError> {
    parse_examples(&read(path)?).map_err(|(line, m)| invalid(path, line, m))
}

pub fn parse_dataset(text: &str) -> Result<Vec<LabeledPair>, (usize, String)> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (q, a) = line.split_once('\t').ok_or_else(|| (i + 1, "expected question<TAB>answer".to_string()))?;
        pairs.push(LabeledPair::new(q, a).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(pairs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledPair>, FormatError> {
    parse_dataset(&read(path)?).map_err(|(line, m)| invalid(path, line, m))
}

pub fn parse_concepts(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

pub fn load_concepts(path: &Path) -> Result<Vec<String>, FormatError> {
    Ok(parse_concepts(&read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cascade_core::fixtures::{star_task, toy_world_table};

    #[test]
    fn table_round_trip() {
        let table = toy_world_table();
        assert_eq!(parse_table(&table_to_json(&table)).unwrap(), table);
    }

    #[test]
    fn table_validation_errors_surface() {
        assert!(parse_table(r#"{"P": [["a", 0.5]]}"#).unwrap_err().contains("sum"));
    }

    #[test]
    fn ngram_round_trip() {
        let (_, model) = star_task();
        assert_eq!(parse_ngram(&ngram_to_json(&model)).unwrap(), model);
    }

    #[test]
    fn examples_keep_field_order() {
        let set = parse_examples("{\"question\": \"1+1?\", \"thought\": \"add\", \"answer\": \"2\"}\n\n").unwrap();
        let keys: Vec<_> = set.examples[0].fields().iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["question", "thought", "answer"]);
        assert_eq!(parse_examples("{}\n{\"a\": 1}").unwrap_err().0, 1);
    }

    #[test]
    fn dataset_lines() {
        let pairs = parse_dataset("what is 2+2?\t4\n\nq\ta b\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].answer, "a b");
        assert_eq!(parse_dataset("ok\t1\nbroken").unwrap_err().0, 2);
    }

    #[test]
    fn concept_lines() {
        assert_eq!(parse_concepts("apple\n\n cosmic crisp apple \n"), ["apple", "cosmic crisp apple"]);
    }
}
