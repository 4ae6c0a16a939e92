//! Per-iteration training diagnostics and their CSV form.

use std::io::Write;

use crate::error::{Error, Result};

/// Column names of the metrics CSV, in order.
pub const METRICS_HEADER: [&str; 8] =
    ["iter", "mean_return", "mean_hitting_time", "z_hat", "effective_lr", "grad_norm", "censor_rate", "wall_time_s"];

/// Window of the trailing moving average used for smoothed curves.
pub const SMOOTHING_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub mean_return: f64,
    pub mean_hitting_time: f64,
    pub z_hat: f64,
    pub effective_lr: f64,
    pub grad_norm: f64,
    pub censor_rate: f64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    fn record(&self) -> [String; 8] {
        [
            self.iter.to_string(),
            self.mean_return.to_string(),
            self.mean_hitting_time.to_string(),
            self.z_hat.to_string(),
            self.effective_lr.to_string(),
            self.grad_norm.to_string(),
            self.censor_rate.to_string(),
            self.wall_time_s.to_string(),
        ]
    }

    fn parse(record: &csv::StringRecord, row: usize) -> Result<Self> {
        let err = |msg: String| Error::Parse(format!("row {row}: {msg}"));
        if record.len() != METRICS_HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", METRICS_HEADER.len(), record.len())));
        }
        let float = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| err(format!("`{}` is not a number: {:?}", METRICS_HEADER[i], &record[i])))
        };
        let iter = record[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| err(format!("`iter` is not an integer: {:?}", &record[0])))?;
        Ok(Self {
            iter,
            mean_return: float(1)?,
            mean_hitting_time: float(2)?,
            z_hat: float(3)?,
            effective_lr: float(4)?,
            grad_norm: float(5)?,
            censor_rate: float(6)?,
            wall_time_s: float(7)?,
        })
    }
}

/// One row per completed iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Negative of the smoothed mean return at the last iteration.
    pub fn final_smoothed_negative_return(&self) -> Option<f64> {
        moving_average(&self.column(|r| r.mean_return), SMOOTHING_WINDOW).last().map(|v| -v)
    }

    pub fn to_csv(&self) -> String {
        let mut w = MetricsWriter::new(Vec::new()).expect("writing to memory");
        for row in &self.rows {
            w.write(row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner()).expect("CSV is UTF-8")
    }

    /// Parses a metrics CSV; the header must match [`METRICS_HEADER`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Parse(format!("header: {e}")))?.clone();
        if header.iter().ne(METRICS_HEADER.iter().copied()) {
            return Err(Error::Parse(format!("header: expected `{}`", METRICS_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            rows.push(MetricsRow::parse(&record, i + 1)?);
        }
        if rows.is_empty() {
            return Err(Error::Parse("metrics CSV has no data rows".into()));
        }
        Ok(Self { rows })
    }
}

/// Streams rows to a sink, flushing after each so partial runs stay readable.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(METRICS_HEADER).map_err(csv_io)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.write_record(row.record()).map_err(csv_io)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner.into_inner().unwrap_or_else(|_| unreachable!("flushed after every row"))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, mean_return: f64) -> MetricsRow {
        MetricsRow {
            iter,
            mean_return,
            mean_hitting_time: 10.5,
            z_hat: 11.5,
            effective_lr: 1e-3,
            grad_norm: 0.25,
            censor_rate: 0.0,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn header_is_frozen() {
        let m = RunMetrics { rows: vec![row(0, -1.0)] };
        let csv = m.to_csv();
        assert!(csv
            .starts_with("iter,mean_return,mean_hitting_time,z_hat,effective_lr,grad_norm,censor_rate,wall_time_s\n"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = RunMetrics { rows: vec![row(0, -1.0 / 3.0), row(1, -0.1)] };
        assert_eq!(RunMetrics::from_csv(&m.to_csv()).unwrap(), m);
    }

    #[test]
    fn parse_errors_name_the_row() {
        let good = RunMetrics { rows: vec![row(0, -1.0)] }.to_csv();
        let bad = format!("{good}1,-1,x,1,1,1,0,0\n");
        let e = RunMetrics::from_csv(&bad).unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
        let header_only = format!("{}\n", METRICS_HEADER.join(","));
        assert!(RunMetrics::from_csv(&header_only).is_err());
        assert!(RunMetrics::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn moving_average_by_hand() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(moving_average(&[], 3), Vec::<f64>::new());
    }
}
