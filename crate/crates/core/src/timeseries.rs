// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regularly spaced soil-moisture and precipitation series.
//!
//! Missing soil-moisture observations are carried as `NaN` until
//! [`SoilSeries::interpolate_gaps`] fills them; every analysis entry point
//! rejects series that still contain `NaN`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};

use crate::error::{Error, Result};

/// Default longest run of missing points that [`SoilSeries::interpolate_gaps`] fills.
pub const DEFAULT_MAX_GAP: usize = 6;

/// Names of the timestamp and value columns in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub time: String,
    pub value: String,
}

impl ColumnMap {
    pub fn new(time: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            time: time.into(),
            value: value.into(),
        }
    }
}

/// Soil volumetric water content on a regular time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SoilSeries {
    start_time: DateTime<Utc>,
    step: TimeDelta,
    values: Vec<f64>,
    interpolated_mask: Vec<bool>,
    source_id: String,
}

impl SoilSeries {
    /// Builds a series; `NaN` entries mark missing observations.
    pub fn new(start_time: DateTime<Utc>, step: TimeDelta, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if step <= TimeDelta::zero() {
            return Err(Error::invalid("step must be strictly positive"));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("series values must be finite or missing"));
        }
        let n = values.len();
        Ok(Self {
            start_time,
            step,
            values,
            interpolated_mask: vec![false; n],
            source_id: String::new(),
        })
    }

    /// Hourly series starting at the Unix epoch; handy for simulated data.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(DateTime::<Utc>::UNIX_EPOCH, TimeDelta::hours(1), values)
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn step(&self) -> TimeDelta {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolated_mask(&self) -> &[bool] {
        &self.interpolated_mask
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start_time + self.step * index as i32
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Fails with [`Error::MissingValues`] if any point is still missing.
    pub fn ensure_complete(&self) -> Result<()> {
        if self.missing_count() > 0 {
            Err(Error::MissingValues)
        } else {
            Ok(())
        }
    }

    /// Keeps every `factor`-th point starting at index 0.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("subsample factor must be at least 1"));
        }
        fn pick<T: Copy>(v: &[T], factor: usize) -> Vec<T> {
            v.iter().step_by(factor).copied().collect()
        }
        Ok(Self {
            start_time: self.start_time,
            step: self.step * factor as i32,
            values: pick(&self.values, factor),
            interpolated_mask: pick(&self.interpolated_mask, factor),
            source_id: self.source_id.clone(),
        })
    }

    /// Fills runs of at most `max_gap` missing points by linear interpolation
    /// between the bracketing observations.
    pub fn interpolate_gaps(&self, max_gap: usize) -> Result<Self> {
        let n = self.values.len();
        if self.values[0].is_nan() {
            return Err(Error::UnbracketedGap("start"));
        }
        if self.values[n - 1].is_nan() {
            return Err(Error::UnbracketedGap("end"));
        }

        let spans = missing_runs(&self.values);
        let too_long: Vec<_> = spans
            .iter()
            .copied()
            .filter(|(s, e)| e - s > max_gap)
            .collect();
        if !too_long.is_empty() {
            return Err(Error::GapTooLong {
                max_gap,
                spans: too_long,
            });
        }

        let mut out = self.clone();
        for (s, e) in spans {
            let left = self.values[s - 1];
            let right = self.values[e];
            let width = (e - s + 1) as f64;
            for i in s..e {
                let frac = (i - s + 1) as f64 / width;
                out.values[i] = left + (right - left) * frac;
                out.interpolated_mask[i] = true;
            }
        }
        Ok(out)
    }

    /// Replaces values above `cap` with `cap`; returns the new series and the
    /// number of points that were capped.
    pub fn cap_values(&self, cap: f64) -> Result<(Self, usize)> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::invalid(format!("cap must be positive, got {cap}")));
        }
        let mut out = self.clone();
        let mut capped = 0;
        for v in &mut out.values {
            if *v > cap {
                *v = cap;
                capped += 1;
            }
        }
        Ok((out, capped))
    }
}

/// Half-open index spans `[start, end)` of consecutive NaN values.
fn missing_runs(values: &[f64]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i].is_nan() {
            let s = i;
            while i < values.len() && values[i].is_nan() {
                i += 1;
            }
            spans.push((s, i));
        } else {
            i += 1;
        }
    }
    spans
}

/// Rainfall depth per step (millimetres); `None` marks missing records.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipSeries {
    start_time: DateTime<Utc>,
    step: TimeDelta,
    depths: Vec<Option<f64>>,
}

impl PrecipSeries {
    pub fn new(start_time: DateTime<Utc>, step: TimeDelta, depths: Vec<Option<f64>>) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::EmptySeries);
        }
        if step <= TimeDelta::zero() {
            return Err(Error::invalid("step must be strictly positive"));
        }
        if let Some(bad) = depths.iter().flatten().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!(
                "precipitation depths must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self {
            start_time,
            step,
            depths,
        })
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn step(&self) -> TimeDelta {
        self.step
    }

    pub fn depths(&self) -> &[Option<f64>] {
        &self.depths
    }

    pub fn missing_mask(&self) -> Vec<bool> {
        self.depths.iter().map(Option::is_none).collect()
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Sums consecutive blocks of `factor` records into one record per block.
    /// A block with any missing record is missing; a trailing partial block is dropped.
    pub fn accumulate(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("accumulation factor must be at least 1"));
        }
        let depths = self
            .depths
            .chunks_exact(factor)
            .map(|block| block.iter().copied().sum::<Option<f64>>())
            .collect::<Vec<_>>();
        Self::new(self.start_time, self.step * factor as i32, depths)
    }

    /// Re-indexes this series onto the grid of `soil`, padding with missing
    /// records where precipitation does not cover the soil span.
    pub fn align_to(&self, soil: &SoilSeries) -> Result<Self> {
        if self.step != soil.step() {
            return Err(Error::invalid(format!(
                "precipitation step {}s differs from soil step {}s",
                self.step.num_seconds(),
                soil.step().num_seconds()
            )));
        }
        let offset = soil.start_time() - self.start_time;
        let step_ms = self.step.num_milliseconds();
        if offset.num_milliseconds() % step_ms != 0 {
            return Err(Error::OffGrid {
                timestamp: soil.start_time().to_rfc3339(),
                start: self.start_time.to_rfc3339(),
                step_seconds: self.step.num_seconds(),
            });
        }
        let shift = offset.num_milliseconds() / step_ms;
        let depths = (0..soil.len() as i64)
            .map(|i| {
                let j = i + shift;
                if j >= 0 && (j as usize) < self.depths.len() {
                    self.depths[j as usize]
                } else {
                    None
                }
            })
            .collect();
        Self::new(soil.start_time(), soil.step(), depths)
    }
}

/// Parses ISO-8601 / RFC 3339 timestamps (naive ones are read as UTC) or
/// integer/fractional epoch seconds.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0);
    }
    if let Ok(secs) = s.parse::<f64>() {
        if secs.is_finite() {
            let whole = secs.floor();
            let nanos = ((secs - whole) * 1e9).round() as u32;
            return DateTime::from_timestamp(whole as i64, nanos.min(999_999_999));
        }
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    const NAIVE: [&str; 5] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%MZ",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    NAIVE
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|naive| naive.and_utc())
}

/// Parses a step such as `30m`, `30min`, `1h`, `90s`, `1d` or bare seconds.
pub fn parse_step(raw: &str) -> Result<TimeDelta> {
    let s = raw.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: i64 = num
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse step '{raw}'")))?;
    let step = match unit.trim() {
        "" | "s" | "sec" => TimeDelta::seconds(n),
        "m" | "min" => TimeDelta::minutes(n),
        "h" | "hr" => TimeDelta::hours(n),
        "d" | "day" => TimeDelta::days(n),
        other => return Err(Error::invalid(format!("unknown step unit '{other}' in '{raw}'"))),
    };
    if step <= TimeDelta::zero() {
        return Err(Error::invalid("step must be strictly positive"));
    }
    Ok(step)
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Reads `(time, value)` pairs and lays them on a regular grid. Grid points
/// without a row are missing (`None`).
fn read_grid(
    path: &Path,
    columns: &ColumnMap,
    step: TimeDelta,
) -> Result<(DateTime<Utc>, Vec<Option<f64>>)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let time_idx = find(&columns.time)?;
    let value_idx = find(&columns.value)?;

    let mut rows: BTreeMap<DateTime<Utc>, Option<f64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let raw_time = record
            .get(time_idx)
            .ok_or_else(|| parse_err("missing timestamp field".into()))?;
        let ts = parse_timestamp(raw_time)
            .ok_or_else(|| parse_err(format!("unparseable timestamp '{raw_time}'")))?;
        let raw_value = record.get(value_idx).unwrap_or("");
        let value = if is_missing_token(raw_value) {
            None
        } else {
            let v: f64 = raw_value
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("unparseable value '{raw_value}'")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value '{raw_value}'")));
            }
            Some(v)
        };
        if rows.insert(ts, value).is_some() {
            return Err(Error::DuplicateTimestamp {
                timestamp: ts.to_rfc3339(),
            });
        }
    }

    let (&start, _) = rows.iter().next().ok_or(Error::EmptySeries)?;
    let (&last, _) = rows.iter().next_back().ok_or(Error::EmptySeries)?;
    let step_ms = step.num_milliseconds();
    if step_ms <= 0 {
        return Err(Error::invalid("step must be strictly positive"));
    }
    let n = ((last - start).num_milliseconds() / step_ms) as usize + 1;
    let mut grid = vec![None; n];
    for (ts, value) in rows {
        let offset = (ts - start).num_milliseconds();
        if offset % step_ms != 0 {
            return Err(Error::OffGrid {
                timestamp: ts.to_rfc3339(),
                start: start.to_rfc3339(),
                step_seconds: step.num_seconds(),
            });
        }
        grid[(offset / step_ms) as usize] = value;
    }
    Ok((start, grid))
}

/// Reads a soil-moisture CSV onto a regular grid at `step`. Rows may be in
/// any order; grid points with no row or an empty/`NA` value become missing.
pub fn ingest_csv(path: impl AsRef<Path>, columns: &ColumnMap, step: TimeDelta) -> Result<SoilSeries> {
    let path = path.as_ref();
    let (start, grid) = read_grid(path, columns, step)?;
    let values = grid.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    Ok(SoilSeries::new(start, step, values)?.with_source_id(path.display().to_string()))
}

/// Reads a precipitation CSV onto a regular grid at `step`.
pub fn ingest_precip_csv(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
    step: TimeDelta,
) -> Result<PrecipSeries> {
    let (start, grid) = read_grid(path.as_ref(), columns, step)?;
    PrecipSeries::new(start, step, grid)
}
