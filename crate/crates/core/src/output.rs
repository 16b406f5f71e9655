//! CSV tables and the run manifest.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`. A run writes its tables first and
//! `manifest.json` last; if any write fails, every file of the run is
//! removed again.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunRequest;
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovRecord;
use crate::run::RunOutput;

pub const MANIFEST_FILE: &str = "manifest.json";

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "q_x", "p_x", "q_y", "p_y"];
pub const SECTION_HEADER: [&str; 6] = ["ic_index", "q0", "k", "mirror", "q", "p"];
pub const LYAPUNOV_HEADER: [&str; 6] = ["t", "l1", "l2", "l3", "l4", "hks"];
pub const SWEEP_HEADER: [&str; 6] = ["s", "chaos_fraction", "mean_l1", "mean_hks", "succeeded", "failed"];
pub const SWEEP_DETAIL_HEADER: [&str; 11] = [
    "s_index", "s", "ic_index", "q0", "l1", "l2", "l3", "l4", "hks", "chaotic", "error",
];
pub const DAMPING_HEADER: [&str; 7] = ["gamma_index", "gamma", "t", "q_x", "p_x", "q_y", "p_y"];
pub const ENVELOPE_HEADER: [&str; 5] = ["gamma_index", "gamma", "mirror", "t", "envelope"];
pub const DAMPING_SUMMARY_HEADER: [&str; 4] = ["gamma_index", "gamma", "late_mean_abs_q", "l1"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, header: &[&'static str]) -> Self {
        Self {
            file,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::Io {
            path: PathBuf::from(self.file),
            source: std::io::Error::other(e),
        };
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.into_inner().map_err(|e| Error::Io {
            path: PathBuf::from(self.file),
            source: e.into_error(),
        })
    }
}

fn lyapunov_row(r: &LyapunovRecord) -> Vec<String> {
    let mut row = vec![fmt_f64(r.t)];
    row.extend(r.lambda.iter().map(|&l| fmt_f64(l)));
    row.push(fmt_f64(r.hks));
    row
}

/// Tables produced by a run, in a fixed order.
pub fn tables(out: &RunOutput) -> Vec<Table> {
    match out {
        RunOutput::Trajectory(states) => {
            let mut t = Table::new("trajectory.csv", &TRAJECTORY_HEADER);
            for s in states {
                t.rows.push([s.t, s.q_x, s.p_x, s.q_y, s.p_y].map(fmt_f64).to_vec());
            }
            vec![t]
        }
        RunOutput::Section(cloud) => {
            let mut t = Table::new("section.csv", &SECTION_HEADER);
            for sec in &cloud.sections {
                for (mirror, pts) in [("x", &sec.x), ("y", &sec.y)] {
                    for (k, pt) in pts.iter().enumerate() {
                        t.rows.push(vec![
                            sec.ic_index.to_string(),
                            fmt_f64(sec.q0),
                            (k + 1).to_string(),
                            mirror.to_string(),
                            fmt_f64(pt[0]),
                            fmt_f64(pt[1]),
                        ]);
                    }
                }
            }
            vec![t]
        }
        RunOutput::Lyapunov(recs) => {
            let mut t = Table::new("lyapunov.csv", &LYAPUNOV_HEADER);
            t.rows.extend(recs.iter().map(lyapunov_row));
            vec![t]
        }
        RunOutput::Sweep(sweep) => {
            let mut summary = Table::new("sweep.csv", &SWEEP_HEADER);
            for r in &sweep.rows {
                summary.rows.push(vec![
                    fmt_f64(r.value),
                    fmt_f64(r.chaos_fraction),
                    fmt_f64(r.mean_lambda1),
                    fmt_f64(r.mean_hks),
                    r.succeeded.to_string(),
                    r.failed.to_string(),
                ]);
            }
            let mut detail = Table::new("sweep_detail.csv", &SWEEP_DETAIL_HEADER);
            for d in &sweep.details {
                let mut row = vec![
                    d.axis_index.to_string(),
                    fmt_f64(d.value),
                    d.ic_index.to_string(),
                    fmt_f64(d.q0),
                ];
                match &d.record {
                    Some(r) => {
                        row.extend(r.lambda.iter().map(|&l| fmt_f64(l)));
                        row.push(fmt_f64(r.hks));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 5)),
                }
                row.push(u8::from(d.chaotic).to_string());
                row.push(d.error.clone().unwrap_or_default());
                detail.rows.push(row);
            }
            vec![summary, detail]
        }
        RunOutput::Damping(runs) => {
            let mut traj = Table::new("damping.csv", &DAMPING_HEADER);
            let mut env = Table::new("damping_envelope.csv", &ENVELOPE_HEADER);
            let mut summary = Table::new("damping_summary.csv", &DAMPING_SUMMARY_HEADER);
            for (i, run) in runs.iter().enumerate() {
                let g = fmt_f64(run.gamma);
                for s in &run.samples {
                    let mut row = vec![i.to_string(), g.clone()];
                    row.extend([s.t, s.q_x, s.p_x, s.q_y, s.p_y].map(fmt_f64));
                    traj.rows.push(row);
                }
                for (mirror, e) in [("x", &run.envelope_x), ("y", &run.envelope_y)] {
                    for (t, v) in e.t.iter().zip(&e.value) {
                        env.rows.push(vec![
                            i.to_string(),
                            g.clone(),
                            mirror.to_string(),
                            fmt_f64(*t),
                            fmt_f64(*v),
                        ]);
                    }
                }
                summary.rows.push(vec![
                    i.to_string(),
                    g.clone(),
                    fmt_f64(run.late_mean_abs_q),
                    run.lambda1.map(fmt_f64).unwrap_or_default(),
                ]);
            }
            vec![traj, env, summary]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    /// Everything needed to reproduce the outputs.
    pub request: RunRequest,
    /// Worker threads used; the outputs do not depend on it.
    pub threads: Option<usize>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub float_format: String,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
}

/// Run metadata that is not part of the replayable request.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub command: String,
    pub threads: Option<usize>,
    pub started: SystemTime,
    pub wall_clock_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Removes the files written so far unless disarmed.
struct Cleanup {
    written: Vec<PathBuf>,
    armed: bool,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if self.armed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn write_file(cleanup: &mut Cleanup, path: PathBuf, bytes: &[u8]) -> Result<()> {
    // register first: a failed write may still leave a truncated file
    cleanup.written.push(path.clone());
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Writes every table and the manifest into `out_dir` (created if needed).
pub fn emit_outputs(out_dir: &Path, req: &RunRequest, out: &RunOutput, meta: &RunMeta) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut cleanup = Cleanup {
        written: Vec::new(),
        armed: true,
    };
    let mut outputs = Vec::new();
    for table in tables(out) {
        let bytes = table.to_csv_bytes()?;
        write_file(&mut cleanup, out_dir.join(table.file), &bytes)?;
        outputs.push(OutputFile {
            file: table.file.to_string(),
            sha256: sha256_hex(&bytes),
            rows: table.rows.len(),
        });
    }
    let mut warnings = req.warnings.clone();
    warnings.extend(out.soft_failures());
    let manifest = Manifest {
        tool: "optochaos".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: meta.command.clone(),
        preset: req.preset.clone(),
        request: req.clone(),
        threads: meta.threads,
        started_unix: meta
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_clock_seconds: meta.wall_clock_seconds,
        float_format: "{:.16e}".into(),
        outputs,
        warnings,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&mut cleanup, out_dir.join(MANIFEST_FILE), text.as_bytes())?;
    cleanup.armed = false;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AnalysisSpec;
    use crate::model::{ModelParams, SystemState};
    use crate::poincare::{PoincareCloud, SectionConfig};

    fn request() -> RunRequest {
        RunRequest {
            preset: None,
            params: ModelParams::harmonic(),
            analysis: AnalysisSpec::Section {
                section: SectionConfig::default(),
            },
            integrator: Default::default(),
            warnings: vec!["note".into()],
        }
    }

    fn meta() -> RunMeta {
        RunMeta {
            command: "poincare".into(),
            threads: Some(2),
            started: SystemTime::now(),
            wall_clock_seconds: 0.5,
        }
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 2.0f64.sqrt()] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn empty_results_give_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let empty = RunOutput::Section(PoincareCloud {
            stride: 1.0,
            sections: vec![],
            failures: vec![],
        });
        let m = emit_outputs(dir.path(), &request(), &empty, &meta()).unwrap();
        let text = fs::read_to_string(dir.path().join("section.csv")).unwrap();
        assert_eq!(text, "ic_index,q0,k,mirror,q,p\n");
        assert_eq!(m.outputs[0].rows, 0);
        assert_eq!(m.outputs[0].sha256, sha256_hex(text.as_bytes()));
        let back = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_reserializes_byte_identically() {
        let states: Vec<SystemState> = (0..50)
            .map(|k| {
                let t = k as f64 * 0.37;
                SystemState::new(t, t.sin(), t.cos() / 3.0, -t.exp().recip(), 1e-7 * t)
            })
            .collect();
        let table = &tables(&RunOutput::Trajectory(states))[0];
        let bytes = table.to_csv_bytes().unwrap();
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let mut again = Table::new("trajectory.csv", &TRAJECTORY_HEADER);
        for rec in rdr.records() {
            let rec = rec.unwrap();
            again
                .rows
                .push(rec.iter().map(|f| fmt_f64(f.parse::<f64>().unwrap())).collect());
        }
        assert_eq!(again.to_csv_bytes().unwrap(), bytes);
    }

    #[test]
    fn lyapunov_rows_keep_ks_identity() {
        let r = LyapunovRecord::from_exponents(3.0, [0.3, -0.1, 0.02, -0.22]);
        let row = lyapunov_row(&r);
        let vals: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        let positive: f64 = vals[1..5].iter().filter(|&&l| l > 0.0).sum();
        assert_eq!(vals[5], positive);
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        // a directory where the manifest should go makes the last write fail
        fs::create_dir(dir.path().join(MANIFEST_FILE)).unwrap();
        let out = RunOutput::Trajectory(vec![SystemState::default()]);
        let err = emit_outputs(dir.path(), &request(), &out, &meta()).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Io);
        assert!(!dir.path().join("trajectory.csv").exists());
    }
}
