//! Run output files and their readers.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mdp::RewardParams;

pub const THETAS_CSV: &str = "thetas.csv";
pub const CLASS_PROBS_CSV: &str = "class_probs.csv";
pub const MODES_JSONL: &str = "modes.jsonl";
pub const ZETA_CSV: &str = "zeta.csv";
pub const TIMELINES_CSV: &str = "timelines.csv";
pub const TIMELINES_SVG: &str = "timelines.svg";
pub const MDP_JSON: &str = "mdp.json";
pub const VOCAB_JSON: &str = "vocab.json";
pub const TRAJECTORIES_JSONL: &str = "trajectories.jsonl";
pub const EVENTS_JSONL: &str = "events.jsonl";
pub const TRUTH_JSON: &str = "truth.json";
pub const FEATURES_JSON: &str = "features.json";
pub const LABELS_CSV: &str = "labels.csv";
pub const SCENARIO_JSON: &str = "scenario.json";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

fn num(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(field: &str, location: impl Fn() -> String) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Ingest {
        location: location(),
        message: format!("not a number: {field:?}"),
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: impl Write) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Ingest {
            location: format!("{} line {}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Per-user weight estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct UserThetaRow {
    pub user_id: String,
    pub theta: RewardParams,
    pub acceptance_rate: f64,
}

pub fn write_user_thetas(path: &Path, feature_names: &[String], rows: &[UserThetaRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["user_id".to_string()];
    header.extend(feature_names.iter().cloned());
    header.push("acceptance_rate".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.user_id.clone()];
        rec.extend(r.theta.0.iter().map(|&x| num(x)));
        rec.push(num(r.acceptance_rate));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_user_thetas(path: &Path) -> Result<(Vec<String>, Vec<UserThetaRow>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "user_id" || &header[header.len() - 1] != "acceptance_rate" {
        return Err(Error::Ingest {
            location: path.display().to_string(),
            message: "expected header user_id,<features>,acceptance_rate".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).take(header.len() - 2).map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let loc = || format!("{} row {}", path.display(), i + 1);
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(f, loc))
            .collect::<Result<Vec<f64>>>()?;
        let (theta, rate) = vals.split_at(vals.len() - 1);
        rows.push(UserThetaRow {
            user_id: rec[0].to_string(),
            theta: RewardParams(theta.to_vec()),
            acceptance_rate: rate[0],
        });
    }
    Ok((names, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbRow {
    pub user_id: String,
    pub probs: Vec<f64>,
    pub label: String,
    /// Whether the class was given as input rather than inferred.
    pub labeled: bool,
}

pub fn write_class_probs(path: &Path, classes: &[String], rows: &[ClassProbRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["user_id".to_string()];
    header.extend(classes.iter().cloned());
    header.push("label".into());
    header.push("labeled".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.user_id.clone()];
        rec.extend(r.probs.iter().map(|&x| num(x)));
        rec.push(r.label.clone());
        rec.push(if r.labeled { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_class_probs(path: &Path) -> Result<(Vec<String>, Vec<ClassProbRow>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 3 || &header[0] != "user_id" || &header[n - 2] != "label" || &header[n - 1] != "labeled" {
        return Err(Error::Ingest {
            location: path.display().to_string(),
            message: "expected header user_id,<classes>,label,labeled".into(),
        });
    }
    let classes: Vec<String> = header.iter().skip(1).take(n - 3).map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let loc = || format!("{} row {}", path.display(), i + 1);
        let probs = rec
            .iter()
            .skip(1)
            .take(n - 3)
            .map(|f| parse_f64(f, loc))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ClassProbRow {
            user_id: rec[0].to_string(),
            probs,
            label: rec[n - 2].to_string(),
            labeled: &rec[n - 1] == "1",
        });
    }
    Ok((classes, rows))
}

/// One weight vector per mode.
pub fn write_mode_thetas(path: &Path, feature_names: &[String], thetas: &[RewardParams]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["mode".to_string()];
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)?;
    for (k, th) in thetas.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(th.0.iter().map(|&x| num(x)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_square_rows(path: &Path, first: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    if header.is_empty() || &header[0] != first {
        return Err(Error::Ingest {
            location: path.display().to_string(),
            message: format!("first column must be {first:?}"),
        });
    }
    let names = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let loc = || format!("{} row {}", path.display(), i + 1);
        rows.push(rec.iter().skip(1).map(|f| parse_f64(f, loc)).collect::<Result<Vec<f64>>>()?);
    }
    Ok((names, rows))
}

pub fn read_mode_thetas(path: &Path) -> Result<(Vec<String>, Vec<RewardParams>)> {
    let (names, rows) = read_square_rows(path, "mode")?;
    Ok((names, rows.into_iter().map(RewardParams).collect()))
}

pub fn write_zeta(path: &Path, zeta: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["from".to_string()];
    header.extend((0..zeta.len()).map(|j| format!("to_{j}")));
    w.write_record(&header)?;
    for (i, row) in zeta.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|&x| num(x)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_zeta(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(read_square_rows(path, "from")?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub user_id: String,
    pub modes: Vec<usize>,
    pub max_marginals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub user_id: String,
    pub step: usize,
    pub mode: usize,
    pub max_marginal: f64,
}

pub fn write_timelines(path: &Path, records: &[ModeRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["user_id", "step", "mode", "max_marginal"])?;
    for r in records {
        for (t, (&k, &m)) in r.modes.iter().zip(&r.max_marginals).enumerate() {
            w.write_record([r.user_id.clone(), t.to_string(), k.to_string(), num(m)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_timelines(path: &Path) -> Result<Vec<TimelineRow>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let loc = || format!("{} row {}", path.display(), i + 1);
        if rec.len() != 4 {
            return Err(Error::Ingest {
                location: loc(),
                message: format!("expected 4 columns, found {}", rec.len()),
            });
        }
        let int = |f: &str| -> Result<usize> {
            f.parse().map_err(|_| Error::Ingest {
                location: loc(),
                message: format!("not an index: {f:?}"),
            })
        };
        out.push(TimelineRow {
            user_id: rec[0].to_string(),
            step: int(&rec[1])?,
            mode: int(&rec[2])?,
            max_marginal: parse_f64(&rec[3], loc)?,
        });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[(String, String)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["user_id", "class"])?;
    for (u, c) in labels {
        w.write_record([u, c])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Users flagged as labeled in a class probability file.
pub fn labeled_users(rows: &[ClassProbRow]) -> BTreeSet<String> {
    rows.iter().filter(|r| r.labeled).map(|r| r.user_id.clone()).collect()
}
