//! Sensor export CSV, optionally with a trailing `label` column, and the
//! injection sidecar.
//!
//! Empty float cells read as missing; integer cells must be present.
//! Writing uses shortest round-trip float formatting, so read → write is
//! byte-stable.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use skyguard_core::inject::{InjectionMeta, LabeledSeries};
use skyguard_core::telemetry::{Feature, SensorRecord, TelemetrySeries, MISSING};
use skyguard_core::Error as CoreError;

use crate::error::{self, Error, Result};

pub const TIMESTAMP: &str = "timestamp";
pub const LABEL: &str = "label";

pub fn header() -> Vec<&'static str> {
    std::iter::once(TIMESTAMP)
        .chain(Feature::ALL.iter().map(|f| f.name()))
        .collect()
}

fn parse_error(line: u64, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn parse_int<T: std::str::FromStr>(cell: &str, column: &str, line: u64) -> Result<T, CoreError> {
    cell.trim()
        .parse()
        .map_err(|_| parse_error(line, format!("{column}: expected an integer, got {cell:?}")))
}

fn parse_float(cell: &str, column: &str, line: u64) -> Result<f64, CoreError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(MISSING);
    }
    cell.parse()
        .map_err(|_| parse_error(line, format!("{column}: expected a number, got {cell:?}")))
}

fn parse_rows<R: Read>(input: R, labeled: bool) -> Result<(Vec<SensorRecord>, Vec<bool>), CoreError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = reader.records();
    let mut expected = header();
    if labeled {
        expected.push(LABEL);
    }
    let head = match rows.next() {
        Some(r) => r.map_err(|e| parse_error(1, e.to_string()))?,
        None => return Err(parse_error(1, "empty file")),
    };
    if head.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(parse_error(1, format!("header must be `{}`", expected.join(","))));
    }
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| &row[i];
        let f = |i: usize| parse_float(cell(i), expected[i], line);
        let i64_at = |i: usize| parse_int::<i64>(cell(i), expected[i], line);
        records.push(SensorRecord {
            timestamp: i64_at(0)?,
            gyro: [f(1)?, f(2)?, f(3)?],
            gyro_integral_dt: i64_at(4)?,
            accel_timestamp_relative: i64_at(5)?,
            accel: [f(6)?, f(7)?, f(8)?],
            accel_integral_dt: i64_at(9)?,
            accel_clipping: parse_int(cell(10), expected[10], line)?,
        });
        if labeled {
            labels.push(match cell(11).trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_error(line, format!("label must be 0 or 1, got {other:?}"))),
            });
        }
    }
    Ok((records, labels))
}

fn build_series(records: Vec<SensorRecord>) -> Result<TelemetrySeries, CoreError> {
    TelemetrySeries::new(records).map_err(|e| match e {
        CoreError::Ordering { index, previous, current } => parse_error(
            index as u64 + 2,
            format!("timestamp {current} does not follow {previous}"),
        ),
        other => other,
    })
}

pub fn parse_telemetry<R: Read>(input: R) -> Result<TelemetrySeries, CoreError> {
    let (records, _) = parse_rows(input, false)?;
    build_series(records)
}

/// Reads a labeled CSV. `meta` comes from the sidecar, if any.
pub fn parse_labeled<R: Read>(input: R, meta: InjectionMeta) -> Result<LabeledSeries, CoreError> {
    let (records, labels) = parse_rows(input, true)?;
    LabeledSeries::new(build_series(records)?, labels, meta)
}

fn float(out: &mut String, v: f64) {
    if !v.is_nan() {
        let _ = write!(out, "{v}");
    }
}

fn write_row(out: &mut String, r: &SensorRecord) {
    let _ = write!(out, "{}", r.timestamp);
    for v in r.gyro {
        out.push(',');
        float(out, v);
    }
    let _ = write!(out, ",{},{}", r.gyro_integral_dt, r.accel_timestamp_relative);
    for v in r.accel {
        out.push(',');
        float(out, v);
    }
    let _ = write!(out, ",{},{}", r.accel_integral_dt, r.accel_clipping);
}

pub fn render_telemetry(series: &TelemetrySeries) -> String {
    let mut out = header().join(",");
    out.push('\n');
    for r in series.records() {
        write_row(&mut out, r);
        out.push('\n');
    }
    out
}

pub fn render_labeled(labeled: &LabeledSeries) -> String {
    let mut out = header().join(",");
    out.push(',');
    out.push_str(LABEL);
    out.push('\n');
    for (r, &l) in labeled.series.records().iter().zip(&labeled.labels) {
        write_row(&mut out, r);
        out.push_str(if l { ",1\n" } else { ",0\n" });
    }
    out
}

/// `scheme=…`, optional `seed=…`, then one `param.<key>=<value>` line per
/// parameter.
pub fn render_meta(meta: &InjectionMeta) -> String {
    let mut out = format!("scheme={}\n", meta.scheme);
    if let Some(seed) = meta.seed {
        let _ = writeln!(out, "seed={seed}");
    }
    for (k, v) in &meta.params {
        let _ = writeln!(out, "param.{k}={v}");
    }
    out
}

pub fn parse_meta(text: &str) -> Result<InjectionMeta, CoreError> {
    let mut meta = InjectionMeta {
        scheme: String::new(),
        params: Vec::new(),
        seed: None,
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_error(line_no, "expected key=value"))?;
        match key {
            "scheme" => meta.scheme = value.to_string(),
            "seed" => meta.seed = Some(parse_int(value, "seed", line_no)?),
            _ => match key.strip_prefix("param.") {
                Some(k) => meta.params.push((k.to_string(), value.to_string())),
                None => return Err(parse_error(line_no, format!("unknown key {key:?}"))),
            },
        }
    }
    if meta.scheme.is_empty() {
        return Err(parse_error(1, "missing scheme"));
    }
    Ok(meta)
}

pub fn meta_path(csv: &Path) -> std::path::PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    csv.with_file_name(name)
}

pub fn read_telemetry(path: &Path) -> Result<TelemetrySeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_telemetry(std::io::BufReader::new(file)).map_err(Error::in_file(path))
}

/// Reads a labeled CSV and its sidecar; a missing sidecar yields an
/// `unknown` scheme.
pub fn read_labeled(path: &Path) -> Result<LabeledSeries> {
    let side = meta_path(path);
    let meta = if side.exists() {
        parse_meta(&error::read_to_string(&side)?).map_err(Error::in_file(&side))?
    } else {
        InjectionMeta {
            scheme: "unknown".into(),
            params: Vec::new(),
            seed: None,
        }
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labeled(std::io::BufReader::new(file), meta).map_err(Error::in_file(path))
}

/// Whether a CSV file's header ends in a `label` column.
pub fn is_labeled(path: &Path) -> Result<bool> {
    let text = error::read_to_string(path)?;
    Ok(text.lines().next().is_some_and(|h| h.trim_end().ends_with(",label")))
}

pub fn write_labeled(path: &Path, labeled: &LabeledSeries) -> Result<()> {
    error::write(path, render_labeled(labeled))?;
    error::write(&meta_path(path), render_meta(&labeled.meta))
}
