//! CSV ingestion: header `x,y` with an optional leading `timestamp`
//! column (ISO-8601).

use crate::error::{CliError, Result};
use chrono::{DateTime, NaiveDateTime};
use spar_core::spar_model::Normalization;
use spar_core::synthetic::MarginSpec;
use spar_core::{CartesianPoint, CoordinateSystem, PolarSample};
use std::io::Read;
use std::path::{Path, PathBuf};

pub const MIN_OBSERVATIONS: usize = 200;
/// Largest tolerated share of unparseable rows.
pub const MAX_MALFORMED_SHARE: f64 = 0.01;

/// Observations ready for fitting.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    /// Points on the modelling scale.
    pub points: Vec<CartesianPoint>,
    pub normalization: Normalization,
    pub margins: MarginSpec,
    /// Seconds since the epoch, when the file has timestamps.
    pub timestamps: Option<Vec<i64>>,
    /// Rows dropped for missing fields (including blank lines).
    pub dropped_missing: usize,
    /// Rows dropped because a field would not parse.
    pub dropped_malformed: Vec<u64>,
    pub warnings: Vec<String>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn polar(&self, system: CoordinateSystem) -> Result<PolarSample> {
        Ok(PolarSample::from_cartesian(system, &self.points)?)
    }

    /// True when the median spacing of the timestamps is one hour.
    pub fn is_hourly(&self) -> bool {
        let Some(ts) = &self.timestamps else { return false };
        let mut gaps: Vec<i64> = ts.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0).collect();
        if gaps.is_empty() {
            return false;
        }
        gaps.sort_unstable();
        gaps[gaps.len() / 2] == 3600
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

pub fn ingest(path: &Path, margins: MarginSpec) -> Result<ObservationSet> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Ingest {
        path: path.to_path_buf(),
        message: format!("cannot open input: {e}"),
        lines: vec![],
    })?;
    ingest_reader(file, path, margins)
}

/// Like [`ingest`], reading from any source; `path` only labels messages.
pub fn ingest_reader<R: Read>(reader: R, path: &Path, margins: MarginSpec) -> Result<ObservationSet> {
    let fail = |message: String, lines: Vec<u64>| CliError::Ingest { path: PathBuf::from(path), message, lines };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| fail(format!("cannot read header: {e}"), vec![]))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let with_time = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y"] => false,
        ["timestamp", "x", "y"] => true,
        _ => return Err(fail(format!("expected header 'x,y' or 'timestamp,x,y', found '{}'", header.join(",")), vec![])),
    };
    let width = header.len();

    let mut raw = Vec::new();
    let mut stamps = Vec::new();
    let mut missing = 0usize;
    let mut malformed = Vec::new();
    let mut last_line = 1u64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| fail(format!("unreadable CSV: {e}"), vec![]))?;
        let line = rec.position().map_or(last_line + 1, |p| p.line());
        // the reader skips empty lines; count them as missing rows
        missing += line.saturating_sub(last_line + 1) as usize;
        last_line = line;
        if rec.len() < width || rec.iter().take(width).any(str::is_empty) {
            missing += 1;
            continue;
        }
        let x = rec[width - 2].parse::<f64>().ok().filter(|v| v.is_finite());
        let y = rec[width - 1].parse::<f64>().ok().filter(|v| v.is_finite());
        let t = if with_time { parse_timestamp(&rec[0]).map(Some) } else { Some(None) };
        match (x, y, t) {
            (Some(x), Some(y), Some(t)) if rec.len() == width => {
                raw.push(CartesianPoint::new(x, y));
                stamps.extend(t);
            }
            _ => malformed.push(line),
        }
    }

    let rows = raw.len() + malformed.len();
    if rows > 0 && malformed.len() as f64 > MAX_MALFORMED_SHARE * rows as f64 {
        return Err(fail(format!("{} of {rows} rows are malformed", malformed.len()), malformed));
    }
    if raw.len() < MIN_OBSERVATIONS {
        return Err(fail(format!("{} usable observations, need at least {MIN_OBSERVATIONS}", raw.len()), vec![]));
    }

    let mut warnings = Vec::new();
    if missing > 0 {
        warnings.push(format!("dropped {missing} rows with missing fields"));
    }
    if !malformed.is_empty() {
        warnings.push(format!("dropped {} malformed rows (lines {:?})", malformed.len(), malformed));
    }
    let normalization = match margins {
        MarginSpec::Raw => Normalization::from_points(&raw)?,
        MarginSpec::Laplace => {
            let n = Normalization::from_points(&raw)?;
            // standard Laplace: mean 0, standard deviation sqrt 2
            for (name, mean, sd) in [("x", n.mean_x, n.sd_x), ("y", n.mean_y, n.sd_y)] {
                if mean.abs() > 0.25 || (sd - std::f64::consts::SQRT_2).abs() > 0.5 {
                    warnings.push(format!(
                        "column {name} does not look like standard Laplace margins (mean {mean:.3}, sd {sd:.3})"
                    ));
                }
            }
            Normalization::IDENTITY
        }
    };
    let points = raw.iter().map(|&p| normalization.normalize(p)).collect();
    Ok(ObservationSet {
        points,
        normalization,
        margins,
        timestamps: with_time.then_some(stamps),
        dropped_missing: missing,
        dropped_malformed: malformed,
        warnings,
    })
}

/// Applies an existing model's normalisation instead of estimating one.
pub fn renormalize(set: &mut ObservationSet, normalization: Normalization) {
    for p in set.points.iter_mut() {
        *p = normalization.normalize(set.normalization.denormalize(*p));
    }
    set.normalization = normalization;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(n: usize) -> String {
        let mut s = String::from("x,y\n");
        for i in 0..n {
            let t = i as f64;
            s.push_str(&format!("{},{}\n", (t * 0.37).sin() * 3.0 + 1.0, (t * 0.11).cos() * 0.5 - 2.0));
        }
        s
    }

    fn read(text: &str, margins: MarginSpec) -> Result<ObservationSet> {
        ingest_reader(text.as_bytes(), Path::new("test.csv"), margins)
    }

    #[test]
    fn raw_mode_standardises() {
        let obs = read(&body(1000), MarginSpec::Raw).unwrap();
        let n = obs.len() as f64;
        for col in [0, 1] {
            let v: Vec<f64> = obs.points.iter().map(|p| if col == 0 { p.x } else { p.y }).collect();
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mean.abs() <= 1e-12 && (sd - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn blank_rows_are_dropped_with_warning() {
        let mut text = body(300);
        text.insert_str(4, "\n\n");
        text.push_str(",\n");
        let obs = read(&text, MarginSpec::Raw).unwrap();
        assert_eq!(obs.len(), 300);
        assert_eq!(obs.dropped_missing, 3);
        assert!(obs.warnings.iter().any(|w| w.contains("3 rows")));
    }

    #[test]
    fn malformed_rows() {
        let mut text = body(300);
        text.push_str("abc,1\n");
        let obs = read(&text, MarginSpec::Raw).unwrap();
        assert_eq!(obs.dropped_malformed, vec![302]);
        text.push_str("1,zz\n1,2,3\n4,nan\n");
        match read(&text, MarginSpec::Raw) {
            Err(CliError::Ingest { lines, .. }) => assert_eq!(lines, vec![302, 303, 304, 305]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows_and_bad_header() {
        assert!(matches!(read(&body(199), MarginSpec::Raw), Err(CliError::Ingest { .. })));
        assert!(read("a,b\n1,2\n", MarginSpec::Raw).is_err());
    }

    #[test]
    fn timestamps_and_cadence() {
        let mut text = String::from("timestamp,x,y\n");
        for i in 0..240 {
            text.push_str(&format!("2001-01-{:02}T{:02}:00:00Z,{},{}\n", 1 + i / 24, i % 24, i as f64 * 0.1, (i % 7) as f64));
        }
        let obs = read(&text, MarginSpec::Raw).unwrap();
        assert!(obs.is_hourly());
        assert_eq!(obs.timestamps.as_ref().unwrap().len(), 240);
        let laplace = read(&text, MarginSpec::Laplace).unwrap();
        assert_eq!(laplace.normalization, Normalization::IDENTITY);
        assert!(!laplace.warnings.is_empty());
    }
}
