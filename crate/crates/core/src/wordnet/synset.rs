use std::collections::BTreeMap;
use std::path::Path;

use super::{read_lines, PosTag, WordNetError};

/// One synset record from a `data.{pos}` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynsetEntry {
    pub offset: u64,
    pub pos: PosTag,
    pub words: Vec<String>,
    /// Definition text: the gloss up to the first quoted example.
    pub gloss: String,
    pub examples: Vec<String>,
}

/// Splits raw gloss text into the definition and its quoted examples.
pub fn split_gloss(raw: &str) -> (String, Vec<String>) {
    let raw = raw.trim();
    let (definition, rest) = match raw.find("; \"") {
        Some(i) => (&raw[..i], &raw[i + 2..]),
        None => (raw, ""),
    };
    let examples = rest
        .split('"')
        .skip(1)
        .step_by(2)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    (definition.trim().to_string(), examples)
}

/// Removes adjective position markers such as `(p)`, `(a)` or `(ip)`.
fn strip_marker(word: &str) -> &str {
    match word.find('(') {
        Some(i) if word.ends_with(')') => &word[..i],
        _ => word,
    }
}

pub fn parse_data_line(line: &str, path: &Path, line_no: usize) -> Result<SynsetEntry, WordNetError> {
    let parse_err = |message: String| WordNetError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let (head, gloss) = line
        .split_once('|')
        .ok_or_else(|| parse_err("missing '|' gloss separator".into()))?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    if fields.len() < 6 {
        return Err(parse_err(format!("expected at least 6 fields, found {}", fields.len())));
    }
    let offset = fields[0]
        .parse::<u64>()
        .map_err(|_| parse_err(format!("offset {:?} is not a number", fields[0])))?;
    let pos = PosTag::from_key(fields[2])
        .ok_or_else(|| parse_err(format!("unknown synset type {:?}", fields[2])))?;
    let w_cnt = usize::from_str_radix(fields[3], 16)
        .map_err(|_| parse_err(format!("w_cnt {:?} is not hexadecimal", fields[3])))?;
    if fields.len() < 4 + 2 * w_cnt {
        return Err(parse_err(format!("declared {w_cnt} words but the line is too short")));
    }
    let words = (0..w_cnt)
        .map(|i| strip_marker(fields[4 + 2 * i]).to_string())
        .collect();
    let (definition, examples) = split_gloss(gloss);
    if definition.is_empty() {
        return Err(parse_err("empty gloss".into()));
    }
    Ok(SynsetEntry {
        offset,
        pos,
        words,
        gloss: definition,
        examples,
    })
}

/// Parses a `data.{pos}` file into a map keyed by synset offset.
pub fn parse_data_file(path: &Path) -> Result<BTreeMap<u64, SynsetEntry>, WordNetError> {
    let mut map = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        if line.starts_with("  ") || line.trim().is_empty() {
            continue;
        }
        let entry = parse_data_line(&line, path, line_no)?;
        if map.contains_key(&entry.offset) {
            return Err(WordNetError::Structural {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate synset offset {:08}", entry.offset),
            });
        }
        map.insert(entry.offset, entry);
    }
    Ok(map)
}
