use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A time-indexed series of real vectors, all of the same dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceSeries {
    sweeps: Vec<u64>,
    wall_seconds: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TraceSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scalar series at sweeps `0, 1, 2, ...` with zero wall time.
    pub fn from_scalars(values: &[f64]) -> Self {
        let mut s = Self::new();
        for (t, &v) in values.iter().enumerate() {
            s.push(t as u64, 0.0, vec![v]).expect("indices increase");
        }
        s
    }

    /// Vector series at sweeps `0, 1, 2, ...`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = Self::new();
        for (t, row) in rows.into_iter().enumerate() {
            s.push(t as u64, 0.0, row)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, sweep: u64, wall_seconds: f64, value: Vec<f64>) -> Result<()> {
        if let Some(&last) = self.sweeps.last() {
            if sweep <= last {
                return Err(Error::TraceFormat(format!("sweep {sweep} does not follow {last}")));
            }
        }
        if let Some(first) = self.values.first() {
            if first.len() != value.len() {
                return Err(Error::TraceFormat(format!(
                    "value of dimension {} in a series of dimension {}",
                    value.len(),
                    first.len()
                )));
            }
        }
        self.sweeps.push(sweep);
        self.wall_seconds.push(wall_seconds);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sweeps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sweeps.is_empty()
    }

    /// Dimension of each value; zero for an empty series.
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn sweeps(&self) -> &[u64] {
        &self.sweeps
    }

    pub fn wall_seconds(&self) -> &[f64] {
        &self.wall_seconds
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// One coordinate as a plain vector.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }

    /// Contiguous sub-series `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            sweeps: self.sweeps[start..end].to_vec(),
            wall_seconds: self.wall_seconds[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
        }
    }

    /// Natural log of every value, floored at `floor` so zeros stay finite.
    pub fn ln(&self, floor: f64) -> Self {
        Self {
            sweeps: self.sweeps.clone(),
            wall_seconds: self.wall_seconds.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|&x| x.max(floor).ln()).collect())
                .collect(),
        }
    }
}

/// One row of a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub sweep: u64,
    pub wall_s: f64,
    pub values: Vec<f64>,
}

/// A trace file: named observable columns after `sweep` and `wall_s`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl TraceTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        if record.values.len() != self.columns.len() {
            return Err(Error::TraceFormat(format!(
                "record has {} values for {} columns",
                record.values.len(),
                self.columns.len()
            )));
        }
        if let Some(last) = self.records.last() {
            if record.sweep <= last.sweep {
                return Err(Error::TraceFormat(format!(
                    "sweep {} does not follow {}",
                    record.sweep, last.sweep
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Scalar series for one named column.
    pub fn series(&self, name: &str) -> Result<TraceSeries> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::TraceFormat(format!("no column `{name}`")))?;
        self.series_of(&[j])
    }

    /// Vector series gathering every column whose name starts with `prefix`,
    /// in file order. Used for per-test-point outputs such as `out_0, out_1, ...`.
    pub fn series_with_prefix(&self, prefix: &str) -> Result<TraceSeries> {
        let idx: Vec<usize> = (0..self.columns.len())
            .filter(|&j| self.columns[j].starts_with(prefix))
            .collect();
        if idx.is_empty() {
            return Err(Error::TraceFormat(format!("no column starts with `{prefix}`")));
        }
        self.series_of(&idx)
    }

    fn series_of(&self, idx: &[usize]) -> Result<TraceSeries> {
        let mut s = TraceSeries::new();
        for r in &self.records {
            s.push(r.sweep, r.wall_s, idx.iter().map(|&j| r.values[j]).collect())?;
        }
        Ok(s)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["sweep".to_string(), "wall_s".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.sweep.to_string(), r.wall_s.to_string()];
            row.extend(r.values.iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.len() < 2 || &header[0] != "sweep" || &header[1] != "wall_s" {
            return Err(Error::TraceFormat("header must start with `sweep,wall_s`".into()));
        }
        let mut table = Self::new(header.iter().skip(2).map(str::to_string).collect());
        for (line, row) in rd.records().enumerate() {
            let row = row.map_err(csv_err)?;
            let bad = |what: &str| Error::TraceFormat(format!("row {}: bad {what}", line + 2));
            let sweep = row[0].parse().map_err(|_| bad("sweep"))?;
            let wall_s = row[1].parse().map_err(|_| bad("wall_s"))?;
            let values = row
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad("value")))
                .collect::<Result<Vec<_>>>()?;
            table.push(TraceRecord { sweep, wall_s, values })?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::TraceFormat(e.to_string())
}
