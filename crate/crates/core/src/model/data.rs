//! CSV ingestion: one numeric column, optional single header row.

use super::Sample;
use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

pub fn load_sample<R: Read>(source: R) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::ParseError {
            row,
            cell: e.to_string(),
        })?;
        let cell = record.get(0).unwrap_or("");
        if record.iter().skip(1).any(|c| !c.is_empty()) {
            return Err(Error::ParseError {
                row,
                cell: record.iter().collect::<Vec<_>>().join(","),
            });
        }
        if cell.is_empty() && record.len() <= 1 {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(Error::InvalidValue { row }),
            // only the first row may be a header
            Err(_) if row == 1 => {}
            Err(_) => {
                return Err(Error::ParseError {
                    row,
                    cell: cell.to_string(),
                });
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Sample::new(values)
}

pub fn load_sample_path(path: impl AsRef<Path>) -> Result<Sample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_sample(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<Sample> {
        load_sample(s.as_bytes())
    }

    #[test]
    fn plain_column() {
        assert_eq!(load("1.0\n2.5\n0.3\n").unwrap().values(), &[1.0, 2.5, 0.3]);
    }

    #[test]
    fn header_is_skipped() {
        let s = load("x\n1.0\n").unwrap();
        assert_eq!((s.values(), s.n()), (&[1.0][..], 1));
    }

    #[test]
    fn errors() {
        assert!(matches!(load(""), Err(Error::EmptyInput)));
        assert!(matches!(load("x\n"), Err(Error::EmptyInput)));
        assert!(matches!(
            load("1\nabc\n"),
            Err(Error::ParseError { row: 2, .. })
        ));
        assert!(matches!(
            load("1\nNaN\n"),
            Err(Error::InvalidValue { row: 2 })
        ));
        assert!(matches!(
            load("1\ninf\n"),
            Err(Error::InvalidValue { row: 2 })
        ));
        assert!(matches!(
            load("1,2\n"),
            Err(Error::ParseError { row: 1, .. })
        ));
    }

    #[test]
    fn crlf_and_blank_lines() {
        assert_eq!(
            load("value\r\n3\r\n\r\n4\r\n").unwrap().values(),
            &[3.0, 4.0]
        );
    }
}
