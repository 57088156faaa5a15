//! JSONL dataset files.
//!
//! A dataset file is line-oriented JSON. The first line carries the
//! schema, every following line one record:
//!
//! ```text
//! {"schema":{"slots":2,"cardinalities":[2,2]}}
//! {"context_id":null,"slate":[0,1],"mu":[0.5,0.5],"pi":[1.0,0.0],"reward":1.0}
//! ```
//!
//! Reading validates every record and reports the 1-based line number and
//! the offending field on failure.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LoggedRecord, SlateDataset};
use crate::error::{Error, Result};
use crate::schema::SlateSchema;

#[derive(Serialize, Deserialize)]
struct Header {
    schema: SlateSchema,
}

/// Writes the header line followed by one record per line.
pub fn write_dataset<W: Write>(mut w: W, dataset: &SlateDataset) -> Result<()> {
    let header = Header { schema: dataset.schema().clone() };
    serde_json::to_writer(&mut w, &header).map_err(io_err)?;
    w.write_all(b"\n")?;
    for record in dataset.records() {
        serde_json::to_writer(&mut w, record).map_err(io_err)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_dataset_path<P: AsRef<Path>>(path: P, dataset: &SlateDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

/// Parses a dataset, validating the header and every record.
pub fn read_dataset<R: BufRead>(r: R) -> Result<SlateDataset> {
    let mut lines = r.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::DatasetFormat {
        line: 1,
        field: "schema".into(),
        message: "empty file, expected a schema header line".into(),
    })?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| Error::DatasetFormat {
        line: 1,
        field: "schema".into(),
        message: e.to_string(),
    })?;
    let schema = header.schema;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let record: LoggedRecord =
            serde_json::from_str(&text).map_err(|e| Error::DatasetFormat {
                line: line_no,
                field: "record".into(),
                message: e.to_string(),
            })?;
        record
            .validate(&schema, records.len())
            .map_err(|e| match e {
                Error::Record { message, .. } => {
                    // "slot 1: logging propensity 0 outside (0, 1]" -> field "mu".
                    let field = if message.contains("propensity") {
                        "mu"
                    } else if message.contains("marginal") {
                        "pi"
                    } else if message.contains("reward") {
                        "reward"
                    } else {
                        "slate"
                    };
                    Error::DatasetFormat {
                        line: line_no,
                        field: field.into(),
                        message,
                    }
                }
                other => other,
            })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::DatasetFormat {
            line: 1,
            field: "records".into(),
            message: "file contains a header but no records".into(),
        });
    }
    SlateDataset::new(schema, records)
}

pub fn read_dataset_path<P: AsRef<Path>>(path: P) -> Result<SlateDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{annotate_records, FactoredPolicy};
    use crate::data::RawRecord;

    fn sample_dataset() -> SlateDataset {
        let schema = SlateSchema::new(vec![2, 2]).unwrap();
        let logging = FactoredPolicy::uniform(schema.clone());
        let target = FactoredPolicy::deterministic(schema, &[0, 0]).unwrap();
        let raw = vec![
            RawRecord { context_id: Some("q1".into()), slate: vec![0, 1], reward: 1.0 },
            RawRecord { context_id: None, slate: vec![1, 0], reward: 0.0 },
        ];
        annotate_records(&raw, &logging, &target).unwrap()
    }

    #[test]
    fn round_trip() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn header_line_is_exact() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"schema":{"slots":2,"cardinalities":[2,2]}}"#);
    }

    #[test]
    fn error_reports_line_and_field() {
        let text = concat!(
            r#"{"schema":{"slots":1,"cardinalities":[2]}}"#, "\n",
            r#"{"context_id":null,"slate":[0],"mu":[0.5],"pi":[1.0],"reward":1.0}"#, "\n",
            r#"{"context_id":null,"slate":[0],"mu":[0.0],"pi":[1.0],"reward":1.0}"#, "\n",
        );
        match read_dataset(text.as_bytes()) {
            Err(Error::DatasetFormat { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "mu");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_an_error() {
        let text = r#"{"context_id":null,"slate":[0],"mu":[0.5],"pi":[1.0],"reward":1.0}"#;
        assert!(matches!(
            read_dataset(text.as_bytes()),
            Err(Error::DatasetFormat { line: 1, .. })
        ));
    }

    #[test]
    fn header_without_records_is_an_error() {
        let text = "{\"schema\":{\"slots\":1,\"cardinalities\":[2]}}\n";
        assert!(read_dataset(text.as_bytes()).is_err());
    }
}
