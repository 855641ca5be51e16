//! Per-step monitoring records and per-episode summaries, plus their
//! on-disk formats (`telemetry.jsonl`, `curve.csv`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Action, DoneReason, RunLifecycle};
use crate::error::{Error, Result};

/// One control step. Field order is the `telemetry.jsonl` wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t: f64,
    pub episode: u64,
    pub step: u64,
    pub x_true: f64,
    pub x_est: f64,
    pub v_est: f64,
    pub action: Action,
    pub reward: f64,
    pub ret: f64,
    pub state: RunLifecycle,
}

impl TelemetrySample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry sample serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub steps: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub done_reason: DoneReason,
    /// Wall-clock duration (s); not part of `curve.csv`.
    pub wall_time: f64,
}

/// Row of `curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: u64,
    pub steps: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub reason: DoneReason,
}

impl From<&EpisodeRecord> for CurveRow {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            episode: r.episode,
            steps: r.steps,
            ret: r.ret,
            reason: r.done_reason,
        }
    }
}

pub const CURVE_HEADER: &str = "episode,steps,return,reason";

impl CurveRow {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{},{}", self.episode, self.steps, self.ret, self.reason)
    }
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Config(format!("{} lacks the curve header", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let bad = || Error::Config(format!("malformed curve row {line:?}"));
            let mut cols = line.split(',');
            let mut next = || cols.next().ok_or_else(bad);
            Ok(CurveRow {
                episode: next()?.parse().map_err(|_| bad())?,
                steps: next()?.parse().map_err(|_| bad())?,
                ret: next()?.parse().map_err(|_| bad())?,
                reason: next()?.parse()?,
            })
        })
        .collect()
}

pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetrySample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("malformed telemetry line: {e}")))?,
        );
    }
    Ok(out)
}

/// File names inside a run's output directory.
pub mod layout {
    pub const CONFIG: &str = "config.snapshot";
    pub const TELEMETRY: &str = "telemetry.jsonl";
    pub const CURVE: &str = "curve.csv";
    pub const WEIGHTS: &str = "qweights.bin";
    pub const EVALS: &str = "evals";

    pub fn eval_trace(n: u64) -> String {
        format!("{EVALS}/{n}.jsonl")
    }
}

/// Append-only writer for a run directory. Telemetry never drops samples.
pub struct RunWriter {
    dir: PathBuf,
    telemetry: BufWriter<File>,
    curve: BufWriter<File>,
}

fn unwritable(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::OutputUnwritable {
        path: path.display().to_string(),
        source,
    }
}

impl RunWriter {
    pub fn create(dir: &Path, config_snapshot: &str) -> Result<Self> {
        std::fs::create_dir_all(dir.join(layout::EVALS)).map_err(unwritable(dir))?;
        let config_path = dir.join(layout::CONFIG);
        std::fs::write(&config_path, config_snapshot).map_err(unwritable(&config_path))?;
        let open = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(unwritable(&path))
        };
        let telemetry = open(layout::TELEMETRY)?;
        let mut curve = open(layout::CURVE)?;
        writeln!(curve, "{CURVE_HEADER}").map_err(unwritable(dir))?;
        curve.flush().map_err(unwritable(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            telemetry,
            curve,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sample(&mut self, sample: &TelemetrySample) -> Result<()> {
        writeln!(self.telemetry, "{}", sample.to_json_line()).map_err(unwritable(&self.dir))
    }

    /// Append a curve row and flush both files, so readers see whole episodes.
    pub fn episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        writeln!(self.curve, "{}", CurveRow::from(record).to_csv_line()).map_err(unwritable(&self.dir))?;
        self.flush()
    }

    pub fn flush(&mut self) -> Result<()> {
        self.telemetry.flush().map_err(unwritable(&self.dir))?;
        self.curve.flush().map_err(unwritable(&self.dir))
    }

    pub fn eval_trace(&self, n: u64, trace: &[TelemetrySample]) -> Result<PathBuf> {
        let path = self.dir.join(layout::eval_trace(n));
        let mut body = String::new();
        for s in trace {
            body.push_str(&s.to_json_line());
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(unwritable(&path))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TelemetrySample {
        TelemetrySample {
            t: 0.01,
            episode: 1,
            step: 1,
            x_true: 0.02,
            x_est: 0.5,
            v_est: -1.25,
            action: Action::Left,
            reward: -1.0,
            ret: -1.0,
            state: RunLifecycle::Learning,
        }
    }

    #[test]
    fn telemetry_field_order() {
        assert_eq!(
            sample().to_json_line(),
            r#"{"t":0.01,"episode":1,"step":1,"x_true":0.02,"x_est":0.5,"v_est":-1.25,"action":"Left","reward":-1.0,"ret":-1.0,"state":"learning"}"#
        );
    }

    #[test]
    fn writer_produces_readable_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path(), "seed = 1\n").unwrap();
        w.sample(&sample()).unwrap();
        let record = EpisodeRecord {
            episode: 1,
            steps: 1,
            ret: -1.0,
            done_reason: DoneReason::Timeout,
            wall_time: 0.0,
        };
        w.episode(&record).unwrap();
        assert_eq!(read_telemetry(&dir.path().join(layout::TELEMETRY)).unwrap(), vec![sample()]);
        let curve = read_curve(&dir.path().join(layout::CURVE)).unwrap();
        assert_eq!(curve, vec![CurveRow::from(&record)]);
        let csv = std::fs::read_to_string(dir.path().join(layout::CURVE)).unwrap();
        assert_eq!(csv, "episode,steps,return,reason\n1,1,-1,timeout\n");
    }

    #[test]
    fn unwritable_directory() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(
            RunWriter::create(&file.join("sub"), ""),
            Err(Error::OutputUnwritable { .. })
        ));
    }
}
