//! `metrics.csv` rows and the `final_report.json` document.

use std::fs::{File, OpenOptions};
use std::io;
use std::path::Path;

use gcrl_core::trainer::EvalReport;
use serde::{Deserialize, Serialize};

/// One line of `metrics.csv`, fields in file order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub wall_clock_seconds: f64,
    pub success_rate: f64,
    pub time_near_goal: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy_coef: f64,
    pub steps_per_second: f64,
}

pub const HEADER: [&str; 8] = [
    "step",
    "wall_clock_seconds",
    "success_rate",
    "time_near_goal",
    "critic_loss",
    "actor_loss",
    "entropy_coef",
    "steps_per_second",
];

/// Columns that depend on timing rather than on the computation.
pub const WALL_CLOCK_COLUMNS: [&str; 2] = ["wall_clock_seconds", "steps_per_second"];

impl From<&EvalReport> for MetricsRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            step: r.step,
            wall_clock_seconds: r.wall_clock_seconds,
            success_rate: r.success_rate,
            time_near_goal: r.time_near_goal,
            critic_loss: r.critic_loss,
            actor_loss: r.actor_loss,
            entropy_coef: r.entropy_coef,
            steps_per_second: r.steps_per_second,
        }
    }
}

/// Append-only writer; the header is written only into an empty file.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn append(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let inner = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> io::Result<()> {
        self.inner.serialize(row).map_err(io::Error::other)?;
        self.inner.flush()
    }
}

pub fn read_metrics(path: &Path) -> io::Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header = rdr.headers().map_err(io::Error::other)?.clone();
    if header.iter().ne(HEADER) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: unexpected header {:?}", path.display(), header),
        ));
    }
    rdr.deserialize().map(|r| r.map_err(io::Error::other)).collect()
}

/// Keeps only rows up to and including `step`; used when resuming so that
/// rows written after the last checkpoint are not duplicated.
pub fn truncate_after(path: &Path, step: u64) -> io::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let rows = read_metrics(path)?;
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    if rows.iter().all(|r| r.step > step) {
        w.write_record(HEADER).map_err(io::Error::other)?;
    }
    for r in rows.iter().filter(|r| r.step <= step) {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

/// The file's records with the wall-clock columns removed, for comparing
/// two runs.
pub fn deterministic_columns(path: &Path) -> io::Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io::Error::other)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io::Error::other)?;
        let keep = rec
            .iter()
            .enumerate()
            .filter(|(i, _)| !WALL_CLOCK_COLUMNS.contains(&HEADER[*i]))
            .map(|(_, v)| v.to_string())
            .collect();
        out.push(keep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            wall_clock_seconds: step as f64 * 0.5,
            success_rate: 0.25,
            time_near_goal: 0.125,
            critic_loss: 1.5,
            actor_loss: -0.5,
            entropy_coef: 0.1,
            steps_per_second: 1000.0,
        }
    }

    #[test]
    fn header_once_then_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        MetricsWriter::append(&path).unwrap().write(&row(10)).unwrap();
        MetricsWriter::append(&path).unwrap().write(&row(20)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_metrics(&path).unwrap(), vec![row(10), row(20)]);
    }

    #[test]
    fn truncation_drops_later_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut w = MetricsWriter::append(&path).unwrap();
        for s in [10, 20, 30] {
            w.write(&row(s)).unwrap();
        }
        drop(w);
        truncate_after(&path, 20).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![row(10), row(20)]);
        truncate_after(&path, 0).unwrap();
        assert!(read_metrics(&path).unwrap().is_empty());
    }

    #[test]
    fn wall_clock_columns_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        MetricsWriter::append(&path).unwrap().write(&row(10)).unwrap();
        let cols = deterministic_columns(&path).unwrap();
        assert_eq!(cols[0].len(), 6);
        assert!(!cols[0].contains(&"wall_clock_seconds".to_string()));
    }
}
