//! Append-only CSV metric streams.
//!
//! A stream has a fixed schema per run: the header is written once and every
//! record must carry exactly the same scalar names in the same order.
//! Values are written in full precision so a reread reproduces them exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::format_full;

/// One row of named scalars at a training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub values: Vec<(String, f64)>,
}

impl MetricsRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    schema: Option<Vec<String>>,
    /// Optional wall-clock column; excluded from determinism comparisons.
    wall_clock: Option<std::time::Instant>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(MetricsWriter {
            out: BufWriter::new(file),
            schema: None,
            wall_clock: None,
        })
    }

    /// Adds a wall_time column measured from this call.
    pub fn with_wall_clock(mut self) -> Self {
        self.wall_clock = Some(std::time::Instant::now());
        self
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let names: Vec<String> = rec.values.iter().map(|(n, _)| n.clone()).collect();
        match &self.schema {
            None => {
                let mut header = vec!["iteration".to_string()];
                if self.wall_clock.is_some() {
                    header.push("wall_time".to_string());
                }
                header.extend(names.iter().cloned());
                writeln!(self.out, "{}", header.join(","))?;
                self.schema = Some(names);
            }
            Some(schema) if *schema != names => {
                return Err(Error::config(
                    "metrics",
                    format!("schema drift: expected {schema:?}, got {names:?}"),
                ));
            }
            _ => {}
        }
        let mut fields = vec![rec.iteration.to_string()];
        if let Some(start) = &self.wall_clock {
            fields.push(format!("{:.3}", start.elapsed().as_secs_f64()));
        }
        fields.extend(rec.values.iter().map(|(_, v)| format_full(*v)));
        writeln!(self.out, "{}", fields.join(","))?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a metrics CSV back into records (wall_time column, when present,
/// is dropped).
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let origin = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: origin.clone(),
        line: 0,
        detail: "empty metrics file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"iteration") {
        return Err(Error::Parse {
            path: origin,
            line: 1,
            detail: "first column must be iteration".into(),
        });
    }
    let skip_wall = cols.get(1) == Some(&"wall_time");
    let names: Vec<String> = cols[if skip_wall { 2 } else { 1 }..]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut records = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                path: origin.clone(),
                line: lineno + 1,
                detail: "field count differs from header".into(),
            });
        }
        let iteration: u64 = fields[0].parse().map_err(|_| Error::Parse {
            path: origin.clone(),
            line: lineno + 1,
            detail: "bad iteration".into(),
        })?;
        let mut values = Vec::with_capacity(names.len());
        for (name, field) in names.iter().zip(&fields[if skip_wall { 2 } else { 1 }..]) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: origin.clone(),
                line: lineno + 1,
                detail: format!("bad value for {name}"),
            })?;
            values.push((name.clone(), v));
        }
        records.push(MetricsRecord { iteration, values });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iter: u64, a: f64, b: f64) -> MetricsRecord {
        MetricsRecord {
            iteration: iter,
            values: vec![("loss".into(), a), ("bound".into(), b)],
        }
    }

    #[test]
    fn two_records_make_three_lines() {
        let path = std::env::temp_dir().join(format!("advil-metrics-{}.csv", std::process::id()));
        let _ = std::fs::remove_file(&path);
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&rec(0, 1.5, -2.0)).unwrap();
        w.write(&rec(10, 1.25, -1.0)).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,loss,bound\n"));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn round_trip_preserves_values_exactly() {
        let path =
            std::env::temp_dir().join(format!("advil-metrics-rt-{}.csv", std::process::id()));
        let _ = std::fs::remove_file(&path);
        let mut w = MetricsWriter::create(&path).unwrap();
        let records = vec![rec(0, 1.0 / 3.0, -2.718281828459045), rec(5, 1e-17, 7.0)];
        for r in &records {
            w.write(r).unwrap();
        }
        drop(w);
        let back = read_metrics(&path).unwrap();
        assert_eq!(back, records);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn schema_drift_is_rejected() {
        let path =
            std::env::temp_dir().join(format!("advil-metrics-sd-{}.csv", std::process::id()));
        let _ = std::fs::remove_file(&path);
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&rec(0, 1.0, 2.0)).unwrap();
        let drifted = MetricsRecord {
            iteration: 1,
            values: vec![("other".into(), 0.0)],
        };
        assert!(w.write(&drifted).is_err());
        std::fs::remove_file(&path).unwrap();
    }
}
