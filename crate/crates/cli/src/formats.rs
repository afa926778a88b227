//! On-disk formats: feature tables and score matrices (CSV), curves (CSV),
//! partitions, models and summaries (JSON).
//!
//! Every float is written with 17 significant digits in scientific notation,
//! which round-trips `f64` exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use openset_core::{
    validate_dataset, CurvePoint, Dataset, FeatureVector, ImageKey, LabeledFeature, RocPoint, ScoreMatrix,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message: message.into(),
    }
}

fn check_identity(id: &str) -> io::Result<()> {
    if id.is_empty() || id.contains([',', '\n', '\r', '"']) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("identity {id:?} cannot be written to CSV"),
        ));
    }
    Ok(())
}

/// Parses a feature table without validating dataset invariants.
pub fn read_feature_records(path: &Path) -> Result<Vec<LabeledFeature>> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "identity" || &header[1] != "image" {
        return Err(parse_err(path, 1, "header must be `identity,image,f0,...`"));
    }
    let dim = header.len() - 2;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), row.len()),
            ));
        }
        let identity = row[0].to_string();
        if identity.is_empty() {
            return Err(parse_err(path, line, "empty identity"));
        }
        let image: u32 = row[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid image index `{}`", &row[1])))?;
        let values = (2..row.len())
            .map(|j| {
                row[j].trim().parse::<f64>().map_err(|_| {
                    parse_err(
                        path,
                        line,
                        format!("invalid number `{}` in column {}", &row[j], &header[j]),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        debug_assert_eq!(values.len(), dim);
        records.push(LabeledFeature::new(identity, image, FeatureVector::new(values)));
    }
    Ok(records)
}

/// Reads and validates a feature table.
pub fn read_feature_table(path: &Path) -> Result<Dataset> {
    let records = read_feature_records(path)?;
    let report = validate_dataset(&records);
    if let Some(first) = report.violations.first() {
        // Record i sits on line i + 2 (after the header).
        let line = match first {
            openset_core::feature::Violation::Empty => 1,
            openset_core::feature::Violation::DuplicateKey { record, .. }
            | openset_core::feature::Violation::ImageIndexZero { record, .. }
            | openset_core::feature::Violation::EmptyFeature { record }
            | openset_core::feature::Violation::DimensionMismatch { record, .. }
            | openset_core::feature::Violation::NonFinite { record }
            | openset_core::feature::Violation::ZeroVector { record } => *record as u64 + 2,
        };
        return Err(parse_err(path, line, format!("validation failed: {report}")));
    }
    Ok(Dataset::new(records)?)
}

pub fn write_feature_table(path: &Path, records: &[LabeledFeature]) -> Result<()> {
    let mut w = create(path)?;
    write_features_to(&mut w, records).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn write_features_to<W: Write>(w: &mut W, records: &[LabeledFeature]) -> io::Result<()> {
    let dim = records.first().map(|r| r.feature.dim()).unwrap_or(0);
    write!(w, "identity,image")?;
    for j in 0..dim {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for r in records {
        check_identity(&r.identity)?;
        write!(w, "{},{}", r.identity, r.image)?;
        for v in r.feature.iter() {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_score_matrix(path: &Path, m: &ScoreMatrix) -> Result<()> {
    let mut w = create(path)?;
    (|| -> io::Result<()> {
        write!(w, "identity,image")?;
        for s in m.gallery_subjects() {
            check_identity(s)?;
            write!(w, ",{s}")?;
        }
        writeln!(w)?;
        for (i, key) in m.probe_keys().iter().enumerate() {
            check_identity(&key.identity)?;
            write!(w, "{},{}", key.identity, key.image)?;
            for v in m.row(i) {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })()
    .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn read_score_matrix(path: &Path) -> Result<ScoreMatrix> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "identity" || &header[1] != "image" {
        return Err(parse_err(path, 1, "header must be `identity,image,<subject>,...`"));
    }
    let subjects: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let mut keys = Vec::new();
    let mut scores = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), row.len()),
            ));
        }
        let image = row[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid image index `{}`", &row[1])))?;
        keys.push(ImageKey::new(&row[0], image));
        for j in 2..row.len() {
            scores.push(
                row[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("invalid score `{}`", &row[j])))?,
            );
        }
    }
    Ok(ScoreMatrix::new(keys, subjects, scores)?)
}

pub fn write_cmc_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_rows(
        path,
        "rank,cmc",
        curve.iter().map(|p| format!("{},{}", p.x as u64, fmt_f64(p.y))),
    )
}

pub fn write_dir_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_rows(
        path,
        "far,dir",
        curve.iter().map(|p| format!("{},{}", fmt_f64(p.x), fmt_f64(p.y))),
    )
}

pub fn write_roc_csv(path: &Path, curve: &[RocPoint]) -> Result<()> {
    write_rows(
        path,
        "fmr,tmr,threshold",
        curve
            .iter()
            .map(|p| format!("{},{},{}", fmt_f64(p.fmr), fmt_f64(p.tmr), fmt_f64(p.threshold))),
    )
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    (|| -> io::Result<()> {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })()
    .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Pretty JSON whose floats carry 17 significant digits.
struct JsonFormatter(PrettyFormatter<'static>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for JsonFormatter {
    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }

    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, JsonFormatter(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn json_floats_use_seventeen_digits() {
        let s = to_json_string(&vec![0.1f64, 2.0]).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 2.0]);
        assert_eq!(to_json_string(&f64::NAN).unwrap(), "null\n");
    }

    #[test]
    fn identities_with_commas_are_rejected() {
        let mut out = Vec::new();
        let recs = [LabeledFeature::new("a,b", 1, vec![1.0])];
        assert!(write_features_to(&mut out, &recs).is_err());
    }
}
