use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::metrics::Metric;
use crate::error::{ensure, Error, Result};
use crate::mitigation::Quality;

pub const CSV_HEADER: [&str; 7] = ["model", "mitigation", "quality", "metric", "value", "reference", "drop"];

/// One evaluation result. `value`, `reference` and `drop` are percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub model: String,
    pub mitigation: String,
    pub quality: Quality,
    pub metric: Metric,
    pub value: f64,
    pub reference: Option<f64>,
    /// `reference − value`; present exactly when `reference` is.
    pub drop: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset_id: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl ReportMeta {
    pub fn now(dataset_id: String, seed: Option<u64>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { dataset_id, seed, timestamp }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub meta: ReportMeta,
}

impl SweepReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends the rows of `other`; metadata of `self` is kept.
    pub fn extend(&mut self, other: SweepReport) {
        self.rows.extend(other.rows);
    }

    pub fn value(&self, mitigation: &str, quality: Quality) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mitigation == mitigation && r.quality == quality)
            .map(|r| r.value)
    }

    pub fn drop_at(&self, mitigation: &str, quality: Quality) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mitigation == mitigation && r.quality == quality)
            .and_then(|r| r.drop)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// Tab-separated `(quality, drop)` series, one block per
    /// (model, mitigation, metric).
    PlotData,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        Error::Io(io::Error::other(e))
    } else {
        Error::decode(e.to_string())
    }
}

pub fn write_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    ensure!(!report.is_empty(), "refusing to write an empty report");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.model.clone(),
            r.mitigation.clone(),
            r.quality.to_string(),
            r.metric.to_string(),
            r.value.to_string(),
            opt(r.reference),
            opt(r.drop),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn num(field: &str, what: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::decode(format!("bad {what} '{field}'")))
}

fn opt_num(field: &str, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        num(field, what).map(Some)
    }
}

/// Parses CSV written by [`write_csv`]. Metadata is not part of the CSV and
/// comes back empty.
pub fn parse_csv(text: &str) -> Result<SweepReport> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    ensure!(
        header.iter().eq(CSV_HEADER.iter().copied()),
        "unexpected report header: {}",
        header.iter().collect::<Vec<_>>().join(",")
    );
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(SweepRow {
            model: f(0).to_string(),
            mitigation: f(1).to_string(),
            quality: f(2).parse().map_err(|e: Error| Error::decode(e.to_string()))?,
            metric: f(3).parse().map_err(|e: Error| Error::decode(e.to_string()))?,
            value: num(f(4), "value")?,
            reference: opt_num(f(5), "reference")?,
            drop: opt_num(f(6), "drop")?,
        });
    }
    Ok(SweepReport { rows, meta: ReportMeta::default() })
}

pub fn write_plotdata<W: Write>(report: &SweepReport, mut out: W) -> Result<()> {
    ensure!(!report.is_empty(), "refusing to write an empty report");
    type Series<'a> = BTreeMap<(&'a str, &'a str, Metric), Vec<(u8, f64)>>;
    let mut series: Series = BTreeMap::new();
    for r in &report.rows {
        if let (Quality::Jpeg(q), Some(d)) = (r.quality, r.drop) {
            series.entry((&r.model, &r.mitigation, r.metric)).or_default().push((q, d));
        }
    }
    for (i, ((model, mitigation, metric), mut pts)) in series.into_iter().enumerate() {
        if i > 0 {
            // two blank lines separate gnuplot data blocks
            writeln!(out, "\n")?;
        }
        pts.sort_by_key(|p| p.0);
        writeln!(out, "# model={model}\tmitigation={mitigation}\tmetric={metric}")?;
        writeln!(out, "quality\tdrop")?;
        for (q, d) in pts {
            writeln!(out, "{q}\t{d}")?;
        }
    }
    Ok(())
}

/// Writes the report to `path` in the given format.
pub fn emit_report(report: &SweepReport, format: ReportFormat, path: &Path) -> Result<()> {
    ensure!(!report.is_empty(), "refusing to write an empty report");
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => write_csv(report, &mut buf)?,
        ReportFormat::PlotData => write_plotdata(report, &mut buf)?,
    }
    Ok(fs::write(path, buf)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SweepReport {
        let row = |q, v: f64| SweepRow {
            model: "cls".into(),
            mitigation: "none".into(),
            quality: q,
            metric: Metric::Top1Accuracy,
            value: v,
            reference: Some(97.2),
            drop: Some(97.2 - v),
        };
        SweepReport {
            rows: vec![row(Quality::Clean, 97.2), row(Quality::Jpeg(10), 81.0 / 7.0), row(Quality::Jpeg(50), 96.4)],
            meta: ReportMeta::default(),
        }
    }

    #[test]
    fn csv_roundtrip() {
        let r = sample();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,mitigation,quality,metric,value,reference,drop\n"));
        assert_eq!(parse_csv(&text).unwrap(), r);
    }

    #[test]
    fn missing_reference_is_blank() {
        let mut r = sample();
        r.rows[1].reference = None;
        r.rows[1].drop = None;
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        assert_eq!(parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), r);
    }

    #[test]
    fn empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = SweepReport::default();
        assert!(matches!(emit_report(&r, ReportFormat::Csv, &dir.path().join("r.csv")), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn plotdata_series() {
        let mut buf = Vec::new();
        write_plotdata(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "quality\tdrop");
        assert!(lines[2].starts_with("10\t"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn bad_header() {
        assert!(parse_csv("a,b\n1,2\n").is_err());
    }
}
