//! CSV tables: subject matrices (`subject_id` first) and labeled square matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sivc_core::{DMatrix, SubjectMatrix};

use crate::error::{Error, Result, ResultExt};

pub const SUBJECT_ID: &str = "subject_id";

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

/// Header row plus numeric data rows; rows must all have the header's width.
fn read_numeric<R: Read>(
    reader: R,
    leading_labels: bool,
) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(1, e.to_string()))?,
        None => return Err(sivc_core::Error::EmptyInput.into()),
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let mut row_labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(csv_err(
                line,
                format!("{} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let mut fields = rec.iter();
        if leading_labels {
            row_labels.push(fields.next().unwrap_or_default().trim().to_string());
        }
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| csv_err(line, format!("non-numeric value {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok((header, row_labels, rows))
}

pub fn parse_subject_matrix<R: Read>(reader: R, cohort_id: &str) -> Result<SubjectMatrix> {
    let (header, subjects, rows) = read_numeric(reader, true)?;
    if header.first().map(String::as_str) != Some(SUBJECT_ID) {
        return Err(csv_err(1, format!("first column must be {SUBJECT_ID:?}")));
    }
    if rows.is_empty() || header.len() < 2 {
        return Err(sivc_core::Error::EmptyInput.into());
    }
    let p = header.len() - 1;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = DMatrix::from_row_slice(subjects.len(), p, &flat);
    Ok(SubjectMatrix::new(
        cohort_id,
        subjects,
        header[1..].to_vec(),
        values,
    )?)
}

pub fn write_subject_matrix<W: Write>(writer: W, m: &SubjectMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| csv_err(0, e.to_string());
    w.write_record(std::iter::once(SUBJECT_ID).chain(m.node_labels.iter().map(String::as_str)))
        .map_err(map)?;
    for (s, id) in m.subject_ids.iter().enumerate() {
        let row = m.values.row(s);
        w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|v| v.to_string())))
            .map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

/// Square matrix whose header names both rows and columns.
pub fn parse_labeled_matrix<R: Read>(reader: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let (header, _, rows) = read_numeric(reader, false)?;
    if rows.len() != header.len() {
        return Err(csv_err(
            rows.len() as u64 + 1,
            format!("{} rows for {} labels", rows.len(), header.len()),
        ));
    }
    let p = header.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok((header, DMatrix::from_row_slice(p, p, &flat)))
}

pub fn write_labeled_matrix<W: Write>(
    writer: W,
    labels: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| csv_err(0, e.to_string());
    w.write_record(labels).map_err(map)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_subject_matrix(path: &Path, cohort_id: &str) -> Result<SubjectMatrix> {
    parse_subject_matrix(File::open(path).at(path)?, cohort_id).at(path)
}

pub fn save_subject_matrix(path: &Path, m: &SubjectMatrix) -> Result<()> {
    write_subject_matrix(File::create(path).at(path)?, m).at(path)
}

pub fn load_labeled_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    parse_labeled_matrix(File::open(path).at(path)?).at(path)
}

pub fn save_labeled_matrix(path: &Path, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_labeled_matrix(File::create(path).at(path)?, labels, m).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subject_matrix_round_trip() {
        let text = "subject_id,r1_k0,r2_k0\na,1.5,2\nb,-0.25,1e-3\n";
        let m = parse_subject_matrix(text.as_bytes(), "c").unwrap();
        assert_eq!(m.subject_ids, vec!["a", "b"]);
        assert_eq!(m.values[(1, 1)], 1e-3);
        let mut out = Vec::new();
        write_subject_matrix(&mut out, &m).unwrap();
        assert_eq!(parse_subject_matrix(out.as_slice(), "c").unwrap(), m);
    }

    #[test]
    fn subject_matrix_errors() {
        let ragged = parse_subject_matrix("subject_id,x,y\na,1\n".as_bytes(), "c").unwrap_err();
        assert!(matches!(ragged, Error::Csv { line: 2, .. }), "{ragged}");
        let word = parse_subject_matrix("subject_id,x\na,abc\n".as_bytes(), "c").unwrap_err();
        assert!(matches!(word, Error::Csv { line: 2, .. }), "{word}");
        let empty = parse_subject_matrix("subject_id,x\n".as_bytes(), "c").unwrap_err();
        assert!(matches!(empty, Error::Core(sivc_core::Error::EmptyInput)));
        assert!(matches!(
            parse_subject_matrix("".as_bytes(), "c"),
            Err(Error::Core(_))
        ));
        assert!(parse_subject_matrix("id,x\na,1\n".as_bytes(), "c").is_err());
    }

    #[test]
    fn labeled_matrix_round_trip() {
        let labels = vec!["n0".to_string(), "n1".to_string()];
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1 + 0.2, 0.1 + 0.2, 2.0]);
        let mut out = Vec::new();
        write_labeled_matrix(&mut out, &labels, &m).unwrap();
        let (l, back) = parse_labeled_matrix(out.as_slice()).unwrap();
        assert_eq!(l, labels);
        assert_eq!(back, m);
    }
}
