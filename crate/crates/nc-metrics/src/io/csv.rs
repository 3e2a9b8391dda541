//! Row-per-sample CSV feature files: label first, feature values after.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::features::LabeledFeatures;

use super::{assemble, io_error, LoadError};

pub fn load_csv(path: &Path) -> Result<LabeledFeatures, LoadError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let reader = BufReader::new(file);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<(i64, usize)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut saw_data = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_error(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();

        // Optional header: first token of the first non-empty line is not numeric.
        if !saw_data && fields[0].parse::<f64>().is_err() {
            saw_data = true;
            continue;
        }
        saw_data = true;

        if let Some(w) = width {
            if fields.len() != w {
                return Err(LoadError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    column: fields.len().min(w) + 1,
                    detail: format!("expected {w} fields, found {}", fields.len()),
                });
            }
        } else {
            if fields.len() < 2 {
                return Err(LoadError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    column: fields.len(),
                    detail: "need a label and at least one feature value".to_string(),
                });
            }
            width = Some(fields.len());
        }

        let label: i64 = fields[0].parse().map_err(|_| LoadError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            column: 1,
            detail: format!("label {:?} is not an integer", fields[0]),
        })?;
        labels.push((label, line_no));

        let mut row = Vec::with_capacity(fields.len() - 1);
        for (i, field) in fields[1..].iter().enumerate() {
            let column = i + 2;
            let value: f64 = field.parse().map_err(|_| LoadError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                column,
                detail: format!("{field:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(LoadError::NonFinite {
                    path: path.to_path_buf(),
                    line: line_no,
                    column,
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(LoadError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            detail: "no data rows".to_string(),
        });
    }
    assemble(path, rows, labels, 1)
}

pub fn save_csv(f: &LabeledFeatures, path: &Path) -> Result<(), LoadError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut writer = BufWriter::new(file);
    let x = f.features();
    let result: std::io::Result<()> = (|| {
        for (j, &label) in f.labels().iter().enumerate() {
            write!(writer, "{label}")?;
            for i in 0..f.feature_dim() {
                write!(writer, ",{}", x[[i, j]])?;
            }
            writeln!(writer)?;
        }
        writer.flush()
    })();
    result.map_err(|e| io_error(path, e))
}
