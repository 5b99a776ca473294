//! `index,time_s,capacitance,label` text format for [`SampleSeries`].

use std::io::{BufRead, Write};

use crate::error::{HodError, Result};
use crate::sim::{intervals_from_labels, Label, SampleSeries, TouchScenario};

pub const HEADER: &str = "index,time_s,capacitance,label";

pub fn write_series_csv<W: Write>(series: &SampleSeries, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    let labels = series.labels();
    for (i, (v, l)) in series.values.iter().zip(&labels).enumerate() {
        writeln!(out, "{},{:.9},{},{}", i, series.time_of(i), v, l)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses the series CSV. The sample period is recovered from the first two
/// timestamps; a single-row file falls back to the 2 ms default.
pub fn read_series_csv<R: BufRead>(input: R) -> Result<SampleSeries> {
    parse_series_csv(input.lines())
}

pub fn parse_series_csv_str(text: &str) -> Result<SampleSeries> {
    parse_series_csv(text.lines().map(|l| Ok(l.to_string())))
}

fn parse_series_csv<I>(lines: I) -> Result<SampleSeries>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let bad = |line: usize, reason: String| HodError::format("series csv", format!("line {line}: {reason}"));
    let mut lines = lines.enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == HEADER => {}
        Some((_, Ok(h))) => return Err(bad(1, format!("unexpected header '{h}'"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(bad(1, "missing header".into())),
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut times = [0.0f64; 2];
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut fields = line.split(',');
        let (Some(idx), Some(time), Some(cap), Some(label), None) = (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) else {
            return Err(bad(lineno, "expected 4 fields".into()));
        };
        let idx: usize = idx.parse().map_err(|_| bad(lineno, format!("bad index '{idx}'")))?;
        if idx != values.len() {
            return Err(bad(lineno, format!("index {idx} out of sequence")));
        }
        let time: f64 = time.parse().map_err(|_| bad(lineno, format!("bad time '{time}'")))?;
        let cap: f64 = cap
            .parse()
            .map_err(|_| bad(lineno, format!("bad capacitance '{cap}'")))?;
        if !cap.is_finite() || !time.is_finite() {
            return Err(bad(lineno, "non-finite value".into()));
        }
        let label = match label {
            "on" => Label::HandsOn,
            "off" => Label::HandsOff,
            other => return Err(bad(lineno, format!("bad label '{other}'"))),
        };
        if idx < 2 {
            times[idx] = time;
        }
        values.push(cap);
        labels.push(label);
    }
    if values.is_empty() {
        return Err(HodError::format("series csv", "no samples"));
    }
    let sample_period = if values.len() >= 2 {
        times[1] - times[0]
    } else {
        TouchScenario::DEFAULT_SAMPLE_PERIOD
    };
    if !(sample_period > 0.0) {
        return Err(HodError::format("series csv", "timestamps not increasing"));
    }
    Ok(SampleSeries {
        sample_period,
        values,
        truth: intervals_from_labels(&labels),
    })
}

/// One line of a value stream: `None` for blank lines and `#` comments.
/// `lineno` is 1-based and only used in diagnostics.
pub fn parse_value_line(line: &str, lineno: usize) -> Result<Option<f64>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let v: f64 = t
        .parse()
        .map_err(|_| HodError::format("value stream", format!("line {lineno}: '{t}' is not a number")))?;
    if !v.is_finite() {
        return Err(HodError::format(
            "value stream",
            format!("line {lineno}: non-finite value"),
        ));
    }
    Ok(Some(v))
}

/// One capacitance value per line; blank lines and `#` comments ignored.
pub fn parse_value_stream(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        out.extend(parse_value_line(l, i + 1)?);
    }
    Ok(out)
}
