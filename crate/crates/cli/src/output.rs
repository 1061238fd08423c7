//! On-disk formats: per-component CSV snapshots, the JSON-lines event log
//! and the estimates series.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gflow::monitor::{format_record, EstimateSnapshot};
use gflow::neck::NeckRegion;
use gflow::surgery::{ComponentVerdict, SurgeryRecord};
use gflow::{ComponentId, Dimension, ProfileCurve};
use serde::Serialize;

use crate::config::end_kinds;

pub const SNAPSHOT_HEADER: &str = "s,x,u,phi,lambda1,lambda_rot,G,H";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const ESTIMATES_FILE: &str = "estimates.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";

pub fn snapshot_name(t: f64, id: ComponentId) -> String {
    format!("t{t:.6}_c{id}.csv")
}

/// Writes one component. Numbers use the shortest exact representation,
/// so reading the file back reproduces the nodes bit for bit. `G` is empty
/// where the speed is undefined.
pub fn write_snapshot(dir: &Path, t: f64, id: ComponentId, curve: &ProfileCurve, dim: Dimension) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(snapshot_name(t, id));
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    let lp = curve.profile_curvatures();
    let lr = curve.rotational_curvatures();
    for (i, p) in curve.points().iter().enumerate() {
        let g = curve.node_speed(i, dim).map_or(String::new(), |g| format!("{g:e}"));
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            p.s,
            p.x,
            p.u,
            p.phi,
            lp[i].min(lr[i]),
            lr[i],
            g,
            curve.node_mean_curvature(i, dim)
        )?;
    }
    w.flush()?;
    Ok(path)
}

/// Rebuilds a profile from the `x` and `u` columns of a snapshot; ends on
/// the axis become poles, other ends mirror ends.
pub fn read_snapshot(path: &Path) -> Result<ProfileCurve> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| anyhow!("{}: empty file", path.display()))??;
    if header.trim() != SNAPSHOT_HEADER {
        bail!("{}: line 1: expected header '{SNAPSHOT_HEADER}'", path.display());
    }
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            bail!("{}: line {}: expected 8 columns, found {}", path.display(), k + 2, cols.len());
        }
        let num = |c: usize| -> Result<f64> {
            cols[c]
                .trim()
                .parse()
                .map_err(|e| anyhow!("{}: line {} column {}: {e}", path.display(), k + 2, c + 1))
        };
        xs.push(num(1)?);
        us.push(num(2)?);
    }
    if xs.len() < 4 {
        bail!("{}: need at least 4 nodes, found {}", path.display(), xs.len());
    }
    let (start, end) = end_kinds(&us);
    ProfileCurve::from_xu(xs, us, start, end).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// One record of the event log.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunEvent<'a> {
    StepSummary {
        t: f64,
        steps: u64,
        components: usize,
        max_g: f64,
        area: f64,
    },
    NeckDetected {
        t: f64,
        trigger: bool,
        #[serde(flatten)]
        region: &'a NeckRegion,
    },
    Surgery {
        t: f64,
        index: usize,
        #[serde(flatten)]
        record: &'a SurgeryRecord,
    },
    ComponentDiscarded {
        t: f64,
        #[serde(flatten)]
        verdict: &'a ComponentVerdict,
    },
    EstimateViolation {
        t: f64,
        quantity: &'static str,
        value: f64,
        bound: f64,
    },
    Termination {
        t: f64,
        steps: u64,
        surgeries: usize,
        exit_code: i32,
        verdict: Option<String>,
        error: Option<String>,
    },
}

/// Line-delimited JSON writer.
pub struct EventLog {
    w: BufWriter<File>,
}

impl EventLog {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { w: BufWriter::new(f) })
    }

    pub fn emit(&mut self, e: &RunEvent) -> Result<()> {
        serde_json::to_writer(&mut self.w, e)?;
        self.w.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Streaming writer of the estimates series.
pub struct EstimateLog {
    w: BufWriter<File>,
}

impl EstimateLog {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { w: BufWriter::new(f) })
    }

    pub fn push(&mut self, s: &EstimateSnapshot) -> Result<()> {
        writeln!(self.w, "{}", format_record(s))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gflow::scenario::{cylinder_profile, sphere_profile};

    #[test]
    fn filename_pattern() {
        assert_eq!(snapshot_name(0.1, 3), "t0.100000_c3.csv");
        assert_eq!(snapshot_name(12.3456789, 0), "t12.345679_c0.csv");
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let dim = Dimension::new(3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for c in [sphere_profile(1.0, 0.05).unwrap(), cylinder_profile(0.5, 1.0, 0.05).unwrap()] {
            let p = write_snapshot(dir.path(), 0.25, 7, &c, dim).unwrap();
            let text = std::fs::read_to_string(&p).unwrap();
            assert_eq!(text.lines().next().unwrap(), SNAPSHOT_HEADER);
            let back = read_snapshot(&p).unwrap();
            assert_eq!(back.start_kind(), c.start_kind());
            assert_eq!(back.end_kind(), c.end_kind());
            for i in 0..c.len() {
                assert_eq!(back.profile_curvatures()[i], c.profile_curvatures()[i]);
                assert_eq!(back.rotational_curvatures()[i], c.rotational_curvatures()[i]);
            }
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "x,u\n0,1\n").unwrap();
        assert!(read_snapshot(&p).unwrap_err().to_string().contains("header"));
    }

    #[test]
    fn events_are_tagged_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(EVENTS_FILE);
        let mut log = EventLog::create(&p).unwrap();
        log.emit(&RunEvent::StepSummary {
            t: 0.5,
            steps: 10,
            components: 1,
            max_g: 2.0,
            area: 1.0,
        })
        .unwrap();
        log.emit(&RunEvent::Termination {
            t: 1.0,
            steps: 20,
            surgeries: 0,
            exit_code: 0,
            verdict: Some("convex".into()),
            error: None,
        })
        .unwrap();
        log.flush().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let kinds: Vec<String> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(kinds, ["step_summary", "termination"]);
    }
}
