//! File formats: feature and parameter CSVs, unsafe-value spec JSON, PGM
//! images, id and accuracy lists.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use safe_core::imaging::GrayImage;
use safe_core::{ClosenessRule, DataError, FeatureMatrix, ParameterTable, UnsafeEntry, UnsafeValueSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },
    #[error("{path}: bad header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_owned(),
        source,
    }
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> IoError + '_ {
    move |source| IoError::Data {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_owned(),
        source,
    }
}

/// Reals are written with 17 significant digits so they read back exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, reader: impl Read) -> Result<Table, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        None => return Err(IoError::EmptyFile { path: path.into() }),
        Some(r) => r.map_err(csv_err(path))?.iter().map(|s| s.trim().to_string()).collect(),
    };
    let mut rows = Vec::new();
    for r in records {
        let r = r.map_err(csv_err(path))?;
        let line = r.position().map(|p| p.line()).unwrap_or(0);
        if r.len() == 1 && r[0].trim().is_empty() {
            continue;
        }
        if r.len() != header.len() {
            return Err(IoError::RaggedRow {
                path: path.into(),
                line,
                expected: header.len(),
                found: r.len(),
            });
        }
        rows.push((line, r.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_real(path: &Path, line: u64, column: &str, value: &str) -> Result<f64, IoError> {
    value.parse().map_err(|_| IoError::Parse {
        path: path.into(),
        line,
        column: column.into(),
        value: value.into(),
    })
}

/// Reads a feature CSV: header `id,f0,...,f{m-1}[,label]`.
pub fn read_feature_matrix(path: &Path, reader: impl Read) -> Result<FeatureMatrix, IoError> {
    let t = read_table(path, reader)?;
    let header_err = |reason: String| IoError::Header {
        path: path.into(),
        reason,
    };
    if t.header.first().map(String::as_str) != Some("id") {
        return Err(header_err("first column must be `id`".into()));
    }
    let labeled = t.header.last().map(String::as_str) == Some("label");
    let m = t.header.len() - 1 - usize::from(labeled);
    if m == 0 {
        return Err(header_err("no feature columns".into()));
    }
    for (j, name) in t.header[1..=m].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(header_err(format!("column {} is `{name}`, expected `f{j}`", j + 1)));
        }
    }
    if t.rows.is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut values = Vec::with_capacity(t.rows.len() * m);
    let mut labels = Vec::new();
    for (line, row) in &t.rows {
        ids.push(row[0].clone());
        for j in 0..m {
            values.push(parse_real(path, *line, &t.header[j + 1], &row[j + 1])?);
        }
        if labeled {
            labels.push(row[m + 1].clone());
        }
    }
    FeatureMatrix::from_flat(ids, values, m, labeled.then_some(labels)).map_err(data_err(path))
}

pub fn load_feature_matrix(path: &Path) -> Result<FeatureMatrix, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_feature_matrix(path, std::io::BufReader::new(file))
}

pub fn write_feature_matrix(x: &FeatureMatrix, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..x.cols()).map(|j| format!("f{j}")));
    if x.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in x.iter_rows().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(x.ids()[i].clone());
        rec.extend(row.iter().map(|v| format_real(*v)));
        if let Some(labels) = x.labels() {
            rec.push(labels[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_feature_matrix(x: &FeatureMatrix, path: &Path) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_feature_matrix(x, std::io::BufWriter::new(file)).map_err(csv_err(path))
}

/// Reads a parameter CSV: header `id,<param1>,<param2>,...`. Empty cells are
/// missing values and are rejected.
pub fn read_parameter_table(path: &Path, reader: impl Read) -> Result<ParameterTable, IoError> {
    let t = read_table(path, reader)?;
    if t.header.first().map(String::as_str) != Some("id") {
        return Err(IoError::Header {
            path: path.into(),
            reason: "first column must be `id`".into(),
        });
    }
    let names: Vec<String> = t.header[1..].to_vec();
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        ids.push(row[0].clone());
        let cells = row[1..]
            .iter()
            .zip(&names)
            .map(|(v, n)| {
                if v.is_empty() {
                    Ok(None)
                } else {
                    parse_real(path, *line, n, v).map(Some)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(cells);
    }
    ParameterTable::new(names, ids, rows).map_err(data_err(path))
}

pub fn load_parameter_table(path: &Path) -> Result<ParameterTable, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_parameter_table(path, std::io::BufReader::new(file))
}

pub fn save_parameter_table(t: &ParameterTable, path: &Path) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let write = |w: &mut csv::Writer<_>| -> Result<(), csv::Error> {
        let mut header = vec!["id".to_string()];
        header.extend(t.names().iter().cloned());
        w.write_record(&header)?;
        for id in t.ids() {
            let mut rec = vec![id.clone()];
            rec.extend(t.row(id).unwrap_or(&[]).iter().map(|v| format_real(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(csv_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecBody {
    unsafe_values: Vec<f64>,
    rule: ClosenessRule,
}

/// Parses an unsafe-value spec: a JSON object keyed by parameter name, each
/// value holding `unsafe_values` and a `rule` tagged by `kind`
/// (`subrange_fraction` with `boundaries` and optional `fraction`, or
/// `at_most`). Entries are ordered by parameter name.
pub fn parse_unsafe_spec(path: &Path, text: &str) -> Result<UnsafeValueSpec, IoError> {
    let map: BTreeMap<String, SpecBody> = serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.into(),
        source,
    })?;
    let entries = map
        .into_iter()
        .map(|(param, b)| UnsafeEntry {
            param,
            unsafe_values: b.unsafe_values,
            rule: b.rule,
        })
        .collect();
    UnsafeValueSpec::new(entries).map_err(data_err(path))
}

pub fn load_unsafe_spec(path: &Path) -> Result<UnsafeValueSpec, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_unsafe_spec(path, &text)
}

pub fn save_unsafe_spec(spec: &UnsafeValueSpec, path: &Path) -> Result<(), IoError> {
    let map: BTreeMap<&str, SpecBody> = spec
        .entries()
        .iter()
        .map(|e| {
            (
                e.param.as_str(),
                SpecBody {
                    unsafe_values: e.unsafe_values.clone(),
                    rule: e.rule.clone(),
                },
            )
        })
        .collect();
    write_json(path, &map)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.into(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.into(),
        source,
    })
}

/// One id per line; blank lines are skipped.
pub fn load_id_list(path: &Path) -> Result<Vec<String>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Reals separated by commas or whitespace.
pub fn load_real_list(path: &Path) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(parse_real(path, i as u64 + 1, "value", tok)?);
        }
    }
    if out.is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    Ok(out)
}

/// Decodes a PGM into luminance in `[0, 1]`.
pub fn load_pgm(path: &Path) -> Result<GrayImage, IoError> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|source| IoError::Image {
            path: path.into(),
            source,
        })?
        .into_luma16();
    let (w, h) = img.dimensions();
    let pixels = img.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect();
    GrayImage::new(w as usize, h as usize, pixels).map_err(|e| IoError::Header {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// PGM files directly inside `dir`, sorted by file name. The id is the file
/// stem.
pub fn list_pgm(dir: &Path) -> Result<Vec<(String, PathBuf)>, IoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        let is_pgm = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if p.is_file() && is_pgm {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.push((id, p));
        }
    }
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("mem.csv")
    }

    #[test]
    fn reads_labeled_matrix() {
        let text = "id,f0,f1,label\na,1,2,cat\nb,3,4.5,dog\n";
        let x = read_feature_matrix(&p(), text.as_bytes()).unwrap();
        assert_eq!((x.rows(), x.cols()), (2, 2));
        assert_eq!(x.row(1), &[3.0, 4.5]);
        assert_eq!(x.labels().unwrap(), &["cat", "dog"]);
    }

    #[test]
    fn feature_errors() {
        let dup = "id,f0\nimg_001,1\nimg_001,2\n";
        assert!(matches!(
            read_feature_matrix(&p(), dup.as_bytes()),
            Err(IoError::Data { source: DataError::DuplicateId(_), .. })
        ));
        let ragged = "id,f0,f1\na,1,2\nb,3\n";
        assert!(matches!(
            read_feature_matrix(&p(), ragged.as_bytes()),
            Err(IoError::RaggedRow { line: 3, .. })
        ));
        let nan = "id,f0\na,NaN\n";
        assert!(matches!(
            read_feature_matrix(&p(), nan.as_bytes()),
            Err(IoError::Data { source: DataError::NonFiniteValue { .. }, .. })
        ));
        assert!(matches!(read_feature_matrix(&p(), "".as_bytes()), Err(IoError::EmptyFile { .. })));
        assert!(matches!(read_feature_matrix(&p(), "id,f0\n".as_bytes()), Err(IoError::EmptyFile { .. })));
        assert!(matches!(read_feature_matrix(&p(), "id,x\na,1\n".as_bytes()), Err(IoError::Header { .. })));
        assert!(matches!(read_feature_matrix(&p(), "id,f0\na,one\n".as_bytes()), Err(IoError::Parse { .. })));
    }

    #[test]
    fn unlabeled_write_has_no_label_column() {
        let x = FeatureMatrix::new(vec!["a".into()], vec![vec![0.5, -1.0]], None).unwrap();
        let mut buf = Vec::new();
        write_feature_matrix(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,f0,f1\n"));
        assert_eq!(read_feature_matrix(&p(), text.as_bytes()).unwrap(), x);
    }

    #[test]
    fn parameter_table_and_missing_cells() {
        let t = read_parameter_table(&p(), "id,angle,openness\na,22.5,3\nb,200,4\n".as_bytes()).unwrap();
        assert_eq!(t.get("b", "angle"), Some(200.0));
        let missing = "id,angle\na,\n";
        assert!(matches!(
            read_parameter_table(&p(), missing.as_bytes()),
            Err(IoError::Data { source: DataError::MissingParameter { .. }, .. })
        ));
    }

    #[test]
    fn gaze_spec_parses() {
        let text = r#"{
            "Angle": {
                "unsafe_values": [22.5, 67.5, 112.5, 157.5, 202.5, 247.5, 292.5, 337.5],
                "rule": {"kind": "subrange_fraction", "boundaries": [0, 45, 90, 135, 180, 225, 270, 315, 360]}
            },
            "PupilToBottom": {"unsafe_values": [-16], "rule": {"kind": "at_most"}}
        }"#;
        let spec = parse_unsafe_spec(&p(), text).unwrap();
        assert_eq!(spec.entries().len(), 2);
        assert_eq!(spec.entries()[0].unsafe_values.len(), 8);
        match &spec.entries()[0].rule {
            ClosenessRule::SubrangeFraction { fraction, .. } => assert_eq!(*fraction, 0.25),
            r => panic!("{r:?}"),
        }
        assert_eq!(spec.entries()[1].rule, ClosenessRule::AtMost);
    }

    #[test]
    fn bad_boundaries_are_malformed() {
        let text = r#"{"a": {"unsafe_values": [1], "rule": {"kind": "subrange_fraction", "boundaries": [45, 0]}}}"#;
        assert!(matches!(
            parse_unsafe_spec(&p(), text),
            Err(IoError::Data { source: DataError::MalformedRule { .. }, .. })
        ));
        assert!(parse_unsafe_spec(&p(), "{}").unwrap().is_empty());
    }
}
