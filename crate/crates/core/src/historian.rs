//! Polling time-series store: ingests tags from the PLC and plant, answers
//! range/latest queries, snapshots series to CSV, and exports aligned
//! datasets for the detector loop.

use crate::manifest::{SensorManifestEntry, TagSource};
use crate::tagbus::{Quality, TagValue};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HistorianError {
    #[error("unknown tag {0}")]
    UnknownTag(String),
    #[error("no overlapping time coverage across requested tags")]
    EmptyDataset,
    #[error("split fractions must be positive and sum to 1")]
    BadSplit,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_ms: u64,
    pub value: f64,
    pub quality: Quality,
}

/// Feature matrix aligned on poll timestamps, with optional per-row attack
/// labels and time-contiguous train/val/test splits.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub tags: Vec<String>,
    pub times_ms: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    /// Row index ranges for (train, val, test).
    pub splits: [(usize, usize); 3],
}

#[derive(Default)]
pub struct Historian {
    series: BTreeMap<String, Vec<Sample>>,
}

impl Historian {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample, de-duplicating on (tag, t_ms). Per-series
    /// timestamps are strictly increasing after ingest.
    pub fn append(&mut self, tag: &str, sample: Sample) {
        let series = self.series.entry(tag.to_string()).or_default();
        match series.last() {
            Some(last) if sample.t_ms <= last.t_ms => {} // duplicate or stale producer
            _ => series.push(sample),
        }
    }

    /// One polling pass over the manifest. `read` resolves a source to the
    /// latest tag values; an unreachable source yields `None` and the poll
    /// continues with a visible gap.
    pub fn poll_once<F>(&mut self, manifest: &[SensorManifestEntry], mut read: F) -> usize
    where
        F: FnMut(TagSource, &[String]) -> Option<BTreeMap<String, TagValue>>,
    {
        let mut appended = 0;
        for source in [TagSource::Plc, TagSource::Plant] {
            let tags: Vec<String> = manifest
                .iter()
                .filter(|e| e.source == source)
                .map(|e| e.tag.clone())
                .collect();
            if tags.is_empty() {
                continue;
            }
            let Some(values) = read(source, &tags) else {
                continue;
            };
            for (name, tag) in values {
                if let Some(v) = tag.value.as_f64() {
                    let before = self.series.get(&name).map_or(0, Vec::len);
                    self.append(
                        &name,
                        Sample {
                            t_ms: tag.timestamp_ms,
                            value: v,
                            quality: tag.quality,
                        },
                    );
                    if self.series[&name].len() > before {
                        appended += 1;
                    }
                }
            }
        }
        appended
    }

    /// Samples with t0 <= t < t1, ascending.
    pub fn query_range(&self, tag: &str, t0: u64, t1: u64) -> Result<Vec<Sample>, HistorianError> {
        let series = self
            .series
            .get(tag)
            .ok_or_else(|| HistorianError::UnknownTag(tag.to_string()))?;
        let lo = series.partition_point(|s| s.t_ms < t0);
        let hi = series.partition_point(|s| s.t_ms < t1);
        Ok(series[lo..hi].to_vec())
    }

    pub fn latest(&self, tag: &str) -> Result<Sample, HistorianError> {
        self.series
            .get(tag)
            .and_then(|s| s.last().copied())
            .ok_or_else(|| HistorianError::UnknownTag(tag.to_string()))
    }

    pub fn tags(&self) -> Vec<String> {
        self.series.keys().cloned().collect()
    }

    /// Aligned rows over [t0, t1) at the union of sample times, carrying the
    /// last observation forward per tag. Rows start once every tag has a
    /// value.
    fn aligned_rows(
        &self,
        tags: &[String],
        t0: u64,
        t1: u64,
    ) -> Result<(Vec<u64>, Vec<Vec<f64>>), HistorianError> {
        for tag in tags {
            if !self.series.contains_key(tag) {
                return Err(HistorianError::UnknownTag(tag.clone()));
            }
        }
        let mut times: Vec<u64> = Vec::new();
        for tag in tags {
            for s in self.query_range(tag, t0, t1)? {
                times.push(s.t_ms);
            }
        }
        times.sort_unstable();
        times.dedup();

        let mut cursors = vec![0usize; tags.len()];
        let per_tag: Vec<Vec<Sample>> = tags
            .iter()
            .map(|t| self.query_range(t, t0, t1))
            .collect::<Result<_, _>>()?;
        let mut last: Vec<Option<f64>> = vec![None; tags.len()];
        let mut out_times = Vec::new();
        let mut rows = Vec::new();
        for &t in &times {
            for (i, samples) in per_tag.iter().enumerate() {
                while cursors[i] < samples.len() && samples[cursors[i]].t_ms <= t {
                    last[i] = Some(samples[cursors[i]].value);
                    cursors[i] += 1;
                }
            }
            if last.iter().all(Option::is_some) {
                out_times.push(t);
                rows.push(last.iter().map(|v| v.unwrap()).collect());
            }
        }
        if rows.is_empty() {
            return Err(HistorianError::EmptyDataset);
        }
        Ok((out_times, rows))
    }

    /// Exports aligned rows as CSV with header `time_ms,tag1,...`.
    pub fn export_csv(
        &self,
        tags: &[String],
        t0: u64,
        t1: u64,
        path: &Path,
    ) -> Result<usize, HistorianError> {
        let (times, rows) = self.aligned_rows(tags, t0, t1)?;
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "time_ms,{}", tags.join(","))?;
        for (t, row) in times.iter().zip(&rows) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{t},{}", cells.join(","))?;
        }
        Ok(rows.len())
    }

    /// Builds an aligned dataset with time-contiguous splits. `labels` maps
    /// a row timestamp to an attack flag.
    pub fn build_dataset(
        &self,
        tags: &[String],
        t0: u64,
        t1: u64,
        labels: Option<&dyn Fn(u64) -> bool>,
        splits: (f64, f64, f64),
    ) -> Result<DatasetBundle, HistorianError> {
        let (train, val, test) = splits;
        if train <= 0.0 || val < 0.0 || test < 0.0 || (train + val + test - 1.0).abs() > 1e-9 {
            return Err(HistorianError::BadSplit);
        }
        let (times, rows) = self.aligned_rows(tags, t0, t1)?;
        let n = rows.len();
        let n_train = (n as f64 * train).round() as usize;
        let n_val = (n as f64 * val).round() as usize;
        let n_val_end = (n_train + n_val).min(n);
        let labels = labels.map(|f| times.iter().map(|&t| u8::from(f(t))).collect());
        Ok(DatasetBundle {
            tags: tags.to_vec(),
            times_ms: times,
            rows,
            labels,
            splits: [(0, n_train), (n_train, n_val_end), (n_val_end, n)],
        })
    }

    /// Writes one append-only snapshot CSV per tag into `dir`.
    pub fn snapshot(&self, dir: &Path) -> Result<(), HistorianError> {
        std::fs::create_dir_all(dir)?;
        for (tag, series) in &self.series {
            let mut file = std::fs::File::create(dir.join(format!("{tag}.csv")))?;
            writeln!(file, "t_ms,value,quality")?;
            for s in series {
                writeln!(file, "{},{},{:?}", s.t_ms, s.value, s.quality)?;
            }
        }
        Ok(())
    }

    /// Re-ingests a snapshot CSV produced by [`Historian::snapshot`].
    pub fn import_snapshot(&mut self, tag: &str, path: &Path) -> Result<usize, HistorianError> {
        let text = std::fs::read_to_string(path)?;
        let mut count = 0;
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                continue;
            }
            let (Ok(t_ms), Ok(value)) = (fields[0].parse(), fields[1].parse()) else {
                continue;
            };
            let quality = match fields[2] {
                "Stale" => Quality::Stale,
                "Forced" => Quality::Forced,
                _ => Quality::Good,
            };
            self.append(tag, Sample { t_ms, value, quality });
            count += 1;
        }
        Ok(count)
    }
}
