//! Minimal NPY v1.0 reader/writer for the feature-dump format: a little-
//! endian `<f8`/`<f4` C-order `(n, p)` features array paired with a `<i8`
//! `(n,)` labels array.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::features::LabeledFeatures;

use super::{io_error, LoadError};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

fn bad_header(path: &Path, detail: impl Into<String>) -> LoadError {
    LoadError::BadNpyHeader {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

struct NpyHeader {
    descr: String,
    shape: Vec<usize>,
}

fn read_header<R: Read>(path: &Path, reader: &mut R) -> Result<NpyHeader, LoadError> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(|e| io_error(path, e))?;
    if &magic != MAGIC {
        return Err(bad_header(path, "bad magic"));
    }
    let mut version = [0u8; 2];
    reader
        .read_exact(&mut version)
        .map_err(|e| io_error(path, e))?;
    if version != [1, 0] {
        return Err(bad_header(
            path,
            format!("unsupported version {}.{}", version[0], version[1]),
        ));
    }
    let mut len_bytes = [0u8; 2];
    reader
        .read_exact(&mut len_bytes)
        .map_err(|e| io_error(path, e))?;
    let header_len = u16::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    reader
        .read_exact(&mut header)
        .map_err(|e| io_error(path, e))?;
    let text =
        String::from_utf8(header).map_err(|_| bad_header(path, "header is not valid UTF-8"))?;

    let descr = extract_quoted(&text, "descr").ok_or_else(|| bad_header(path, "missing descr"))?;
    let fortran = extract_after(&text, "fortran_order")
        .ok_or_else(|| bad_header(path, "missing fortran_order"))?;
    if !fortran.starts_with("False") {
        return Err(bad_header(path, "Fortran order is not supported"));
    }
    let shape_src =
        extract_after(&text, "shape").ok_or_else(|| bad_header(path, "missing shape"))?;
    let open = shape_src
        .find('(')
        .ok_or_else(|| bad_header(path, "malformed shape"))?;
    let close = shape_src
        .find(')')
        .ok_or_else(|| bad_header(path, "malformed shape"))?;
    let mut shape = Vec::new();
    for part in shape_src[open + 1..close].split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let dim: usize = part
            .parse()
            .map_err(|_| bad_header(path, format!("bad shape component {part:?}")))?;
        shape.push(dim);
    }
    Ok(NpyHeader { descr, shape })
}

fn extract_quoted(text: &str, key: &str) -> Option<String> {
    let pos = text.find(&format!("'{key}'"))?;
    let rest = &text[pos + key.len() + 2..];
    let start = rest.find('\'')? + 1;
    let end = rest[start..].find('\'')? + start;
    Some(rest[start..end].to_string())
}

fn extract_after<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let pos = text.find(&format!("'{key}'"))?;
    let rest = &text[pos + key.len() + 2..];
    let colon = rest.find(':')?;
    Some(rest[colon + 1..].trim_start())
}

/// Loads the features/labels file pair.
pub fn load_npy_pair(
    features_path: &Path,
    labels_path: &Path,
) -> Result<LabeledFeatures, LoadError> {
    let file = File::open(features_path).map_err(|e| io_error(features_path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let header = read_header(features_path, &mut reader)?;
    if header.shape.len() != 2 {
        return Err(bad_header(
            features_path,
            format!("features must be 2-d, got shape {:?}", header.shape),
        ));
    }
    let (n, p) = (header.shape[0], header.shape[1]);
    let features = match header.descr.as_str() {
        "<f8" => read_samples(features_path, &mut reader, n, p, 8, |b| {
            f64::from_le_bytes(b.try_into().unwrap())
        })?,
        "<f4" => read_samples(features_path, &mut reader, n, p, 4, |b| {
            f32::from_le_bytes(b.try_into().unwrap()) as f64
        })?,
        other => {
            return Err(bad_header(
                features_path,
                format!("unsupported feature dtype {other:?} (need <f8 or <f4)"),
            ))
        }
    };

    let file = File::open(labels_path).map_err(|e| io_error(labels_path, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let header = read_header(labels_path, &mut reader)?;
    if header.shape.len() != 1 {
        return Err(bad_header(
            labels_path,
            format!("labels must be 1-d, got shape {:?}", header.shape),
        ));
    }
    if header.descr != "<i8" {
        return Err(bad_header(
            labels_path,
            format!("unsupported label dtype {:?} (need <i8)", header.descr),
        ));
    }
    if header.shape[0] != n {
        return Err(LoadError::SampleCountMismatch {
            features: n,
            labels: header.shape[0],
        });
    }
    let mut raw = vec![0u8; n * 8];
    reader.read_exact(&mut raw).map_err(|e| io_error(labels_path, e))?;
    let labels: Vec<(i64, usize)> = raw
        .chunks_exact(8)
        .enumerate()
        .map(|(j, b)| (i64::from_le_bytes(b.try_into().unwrap()), j + 1))
        .collect();

    super::assemble_from_matrix(features_path, features, labels)
}

/// Streams `(n, p)` sample-major data into a `(p, n)` sample-per-column
/// matrix, reading blocks of samples to keep the transpose cache-friendly.
fn read_samples<R: Read>(
    path: &Path,
    reader: &mut R,
    n: usize,
    p: usize,
    width: usize,
    decode: fn(&[u8]) -> f64,
) -> Result<Array2<f64>, LoadError> {
    let mut out = Array2::<f64>::zeros((p, n));
    let block = (1 << 22) / (p.max(1) * width).max(1); // ~4 MB of samples per block
    let block = block.max(1);
    let mut buf = vec![0u8; block * p * width];
    let mut j = 0;
    while j < n {
        let take = block.min(n - j);
        let bytes = take * p * width;
        reader
            .read_exact(&mut buf[..bytes])
            .map_err(|e| io_error(path, e))?;
        for i in 0..p {
            for s in 0..take {
                let off = (s * p + i) * width;
                out[[i, j + s]] = decode(&buf[off..off + width]);
            }
        }
        j += take;
    }
    Ok(out)
}

fn write_header<W: Write>(writer: &mut W, descr: &str, shape: &[usize]) -> std::io::Result<()> {
    let shape_text = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict =
        format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_text}, }}");
    // Pad so the total header (magic + version + length + dict + newline)
    // is a multiple of 64 bytes.
    let base = MAGIC.len() + 2 + 2;
    let total = base + dict.len() + 1;
    let padding = (64 - total % 64) % 64;
    dict.extend(std::iter::repeat(' ').take(padding));
    dict.push('\n');

    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&(dict.len() as u16).to_le_bytes())?;
    writer.write_all(dict.as_bytes())
}

/// Writes the `(n, p)` `<f8` features file and the `(n,)` `<i8` labels file.
pub fn save_npy_pair(
    f: &LabeledFeatures,
    features_path: &Path,
    labels_path: &Path,
) -> Result<(), LoadError> {
    let (p, n) = (f.feature_dim(), f.sample_count());
    let x = f.features();

    let file = File::create(features_path).map_err(|e| io_error(features_path, e))?;
    let mut writer = BufWriter::with_capacity(1 << 20, file);
    let result: std::io::Result<()> = (|| {
        write_header(&mut writer, "<f8", &[n, p])?;
        let mut row = vec![0u8; p * 8];
        for j in 0..n {
            for i in 0..p {
                row[i * 8..(i + 1) * 8].copy_from_slice(&x[[i, j]].to_le_bytes());
            }
            writer.write_all(&row)?;
        }
        writer.flush()
    })();
    result.map_err(|e| io_error(features_path, e))?;

    let file = File::create(labels_path).map_err(|e| io_error(labels_path, e))?;
    let mut writer = BufWriter::new(file);
    let result: std::io::Result<()> = (|| {
        write_header(&mut writer, "<i8", &[n])?;
        for &label in f.labels() {
            writer.write_all(&(label as i64).to_le_bytes())?;
        }
        writer.flush()
    })();
    result.map_err(|e| io_error(labels_path, e))
}
