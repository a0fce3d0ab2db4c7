use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DataError;
use crate::wordnet::PosTag;

pub const PLACEHOLDER: &str = "@placeholder";
pub const NUM_OPTIONS: usize = 5;

/// One multiple-choice item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub passage: String,
    pub question: String,
    pub candidates: Vec<String>,
    pub label: Option<usize>,
    /// Per-candidate definition text, present after enrichment.
    pub definitions: Option<Vec<String>>,
    /// Per-candidate part of speech used to select the definitions.
    pub pos: Option<Vec<PosTag>>,
}

impl Instance {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.question.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(format!("question must contain exactly one {PLACEHOLDER}, found {n}"));
        }
        if self.candidates.len() != NUM_OPTIONS {
            return Err(format!("expected {NUM_OPTIONS} candidates, found {}", self.candidates.len()));
        }
        if let Some(l) = self.label {
            if l >= NUM_OPTIONS {
                return Err(format!("label {l} outside [0, {NUM_OPTIONS})"));
            }
        }
        if let Some(d) = &self.definitions {
            if d.len() != NUM_OPTIONS {
                return Err(format!("expected {NUM_OPTIONS} definitions, found {}", d.len()));
            }
        }
        Ok(())
    }

    /// The five option texts, in candidate order.
    pub fn options(&self) -> Result<Vec<String>, DataError> {
        self.candidates
            .iter()
            .map(|c| substitute_placeholder(&self.question, c))
            .collect()
    }

    /// Definition text for candidate `j`, or `""` when not enriched.
    pub fn definition(&self, j: usize) -> &str {
        self.definitions
            .as_ref()
            .and_then(|d| d.get(j))
            .map_or("", String::as_str)
    }

    /// JSON record in the shared-task layout, with enrichment fields when present.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("article".into(), Value::String(self.passage.clone()));
        obj.insert("question".into(), Value::String(self.question.clone()));
        for (j, c) in self.candidates.iter().enumerate() {
            obj.insert(format!("option_{j}"), Value::String(c.clone()));
        }
        if let Some(l) = self.label {
            obj.insert("label".into(), Value::from(l));
        }
        if let Some(d) = &self.definitions {
            obj.insert("definitions".into(), serde_json::to_value(d).expect("strings serialize"));
        }
        if let Some(p) = &self.pos {
            obj.insert("pos".into(), serde_json::to_value(p).expect("tags serialize"));
        }
        Value::Object(obj)
    }
}

/// Replaces the single `@placeholder` in `question` with `candidate`.
pub fn substitute_placeholder(question: &str, candidate: &str) -> Result<String, DataError> {
    let n = question.matches(PLACEHOLDER).count();
    if n != 1 {
        return Err(DataError::Validation(format!(
            "question must contain exactly one {PLACEHOLDER}, found {n}"
        )));
    }
    Ok(question.replacen(PLACEHOLDER, candidate, 1))
}

/// Lines carrying this key are metadata headers and are skipped on load.
pub const CONFIG_RECORD_KEY: &str = "effective_config";

fn parse_record(obj: &Map<String, Value>, path: &Path, line: usize) -> Result<Instance, DataError> {
    let missing = |key: &str| DataError::MissingKey {
        path: path.to_path_buf(),
        line,
        key: key.to_string(),
    };
    let string = |key: &str| -> Result<String, DataError> {
        obj.get(key)
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| missing(key))
    };
    let passage = string("article")?;
    let question = string("question")?;
    let candidates = (0..NUM_OPTIONS)
        .map(|j| string(&format!("option_{j}")))
        .collect::<Result<Vec<_>, _>>()?;
    let invalid = |message: String| DataError::Invalid {
        path: path.to_path_buf(),
        line,
        message,
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| invalid(format!("label {v} is not a non-negative integer")))?
                as usize,
        ),
    };
    let definitions = match obj.get("definitions") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<String>>(v.clone())
                .map_err(|e| invalid(format!("definitions: {e}")))?,
        ),
    };
    let pos = match obj.get("pos") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<PosTag>>(v.clone()).map_err(|e| invalid(format!("pos: {e}")))?,
        ),
    };
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("line-{line}"),
    };
    let inst = Instance {
        id,
        passage,
        question,
        candidates,
        label,
        definitions,
        pos,
    };
    inst.validate().map_err(invalid)?;
    Ok(inst)
}

/// Loads one instance per non-blank line. Records carrying only the
/// effective-config header are skipped.
pub fn load_jsonl(path: &Path) -> Result<Vec<Instance>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DataError::Json {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(DataError::Json {
                path: path.to_path_buf(),
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        if obj.contains_key(CONFIG_RECORD_KEY) && !obj.contains_key("article") {
            continue;
        }
        out.push(parse_record(&obj, path, line_no)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn line(label: &str) -> String {
        format!(
            r#"{{"article": "A passage.", "question": "It was @placeholder .", "option_0": "a", "option_1": "b", "option_2": "c", "option_3": "d", "option_4": "e"{label}}}"#
        )
    }

    fn write(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn substitution() {
        assert_eq!(substitute_placeholder("It was @placeholder .", "huge").unwrap(), "It was huge .");
        assert_eq!(
            substitute_placeholder("An @placeholder day", "ice cream").unwrap(),
            "An ice cream day"
        );
        assert!(substitute_placeholder("@placeholder and @placeholder", "x").is_err());
        assert!(substitute_placeholder("nothing here", "x").is_err());
    }

    #[test]
    fn loads_label_and_counts_lines() {
        let f = write(&[line(r#", "label": 2"#), line(""), String::new(), String::new()]);
        let v = load_jsonl(f.path()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].label, Some(2));
        assert_eq!(v[1].label, None);
        assert_eq!(v[0].candidates, ["a", "b", "c", "d", "e"]);
        assert_eq!(v[1].id, "line-2");
    }

    #[test]
    fn label_out_of_range() {
        let f = write(&[line(r#", "label": 5"#)]);
        assert!(matches!(load_jsonl(f.path()), Err(DataError::Invalid { line: 1, .. })));
    }

    #[test]
    fn missing_key_names_line() {
        let f = write(&[line(""), r#"{"article": "x", "question": "@placeholder"}"#.to_string()]);
        match load_jsonl(f.path()) {
            Err(DataError::MissingKey { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "option_0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let f = write(&[line(""), "{not json".to_string()]);
        assert!(matches!(load_jsonl(f.path()), Err(DataError::Json { line: 2, .. })));
    }

    #[test]
    fn json_round_trip_keeps_enrichment() {
        let mut inst = load_jsonl(write(&[line(r#", "label": 1"#)]).path()).unwrap().remove(0);
        inst.definitions = Some(vec!["x".into(), "".into(), "".into(), "".into(), "y".into()]);
        inst.pos = Some(vec![PosTag::Noun; 5]);
        let f = write(&[inst.to_json().to_string()]);
        assert_eq!(load_jsonl(f.path()).unwrap()[0], inst);
    }
}
