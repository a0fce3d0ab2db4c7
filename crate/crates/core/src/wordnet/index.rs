use std::path::Path;

use super::{read_lines, PosTag, WordNetError};

/// One line of an `index.{pos}` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    /// Lemma as written in the file: lowercase, spaces as underscores.
    pub lemma: String,
    pub pos: PosTag,
    /// Synset offsets in sense order.
    pub synset_offsets: Vec<u64>,
}

/// Parses one data line of an index file. `line_no` is 1-based.
pub fn parse_index_line(line: &str, path: &Path, line_no: usize) -> Result<IndexEntry, WordNetError> {
    let parse_err = |message: String| WordNetError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 6 {
        return Err(parse_err(format!("expected at least 6 fields, found {}", fields.len())));
    }
    let lemma = fields[0].to_string();
    let pos = PosTag::from_key(fields[1])
        .ok_or_else(|| parse_err(format!("unknown part of speech {:?}", fields[1])))?;
    let number = |i: usize, what: &str| -> Result<usize, WordNetError> {
        fields
            .get(i)
            .ok_or_else(|| parse_err(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|_| parse_err(format!("{what} {:?} is not a number", fields[i])))
    };
    let synset_cnt = number(2, "synset_cnt")?;
    let p_cnt = number(3, "p_cnt")?;
    // pointer symbols, then sense_cnt and tagsense_cnt
    let offsets_start = 4 + p_cnt + 2;
    number(4 + p_cnt, "sense_cnt")?;
    number(5 + p_cnt, "tagsense_cnt")?;
    let synset_offsets = fields[offsets_start.min(fields.len())..]
        .iter()
        .map(|f| {
            f.parse::<u64>()
                .map_err(|_| parse_err(format!("synset offset {f:?} is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if synset_offsets.len() != synset_cnt {
        return Err(WordNetError::Structural {
            path: path.to_path_buf(),
            line: line_no,
            message: format!(
                "{lemma}: declared {synset_cnt} synsets but listed {}",
                synset_offsets.len()
            ),
        });
    }
    Ok(IndexEntry {
        lemma,
        pos,
        synset_offsets,
    })
}

/// Parses an `index.{pos}` file, skipping license header lines.
pub fn parse_index_file(path: &Path) -> Result<Vec<IndexEntry>, WordNetError> {
    let mut entries = Vec::new();
    for (line_no, line) in read_lines(path)? {
        if line.starts_with("  ") || line.trim().is_empty() {
            continue;
        }
        entries.push(parse_index_line(&line, path, line_no)?);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("index.noun")
    }

    #[test]
    fn synthetic_line() {
        let e = parse_index_line("abc n 2 1 @ 2 0 00000001 00000002", p(), 1).unwrap();
        assert_eq!(e.lemma, "abc");
        assert_eq!(e.pos, PosTag::Noun);
        assert_eq!(e.synset_offsets, [1, 2]);
    }

    #[test]
    fn real_line_with_trailing_space() {
        let line = "bank n 10 5 @ ~ #m %p + 10 4 09213565 08420278 09213434 08462066 13368318 13356402 09213828 04139859 02787772 00169305  ";
        let e = parse_index_line(line, p(), 7).unwrap();
        assert_eq!(e.synset_offsets.len(), 10);
        assert_eq!(e.synset_offsets[0], 9213565);
    }

    #[test]
    fn count_mismatch_is_structural() {
        let err = parse_index_line("abc n 3 1 @ 3 0 00000001 00000002", p(), 4).unwrap_err();
        assert!(matches!(err, WordNetError::Structural { line: 4, .. }));
    }

    #[test]
    fn garbage_reports_line_number() {
        let err = parse_index_line("abc n two 0 0 0", p(), 12).unwrap_err();
        assert!(matches!(err, WordNetError::Parse { line: 12, .. }));
        assert!(err.to_string().contains(":12"));
    }
}
