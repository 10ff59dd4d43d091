//! From raw page/action event logs to an MDP and per-user trajectories, and
//! the static behavior clustering pipeline on top of them.
//!
//! States are the pages seen in the log plus a resting state standing for
//! "logged out"; actions are the action names seen in the log plus an idle
//! action. A pause longer than the session gap sends the user to the resting
//! state, where the idle step leads to the first page of the next session.
//! Transition probabilities and the initial distribution are empirical.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birl::{run_birl, BirlConfig, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::label_prop::{label_prop, median_pairwise_distance, LabelMatrix, LabeledSet, LpConfig};
use crate::mdp::{Mdp, RewardParams};
use crate::rng::derive_seed;

pub const REST_STATE: &str = "<rest>";
pub const IDLE_ACTION: &str = "<idle>";
/// Thirty minutes.
pub const DEFAULT_SESSION_GAP_MS: i64 = 30 * 60 * 1000;
pub const DEFAULT_DISCOUNT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user: String,
    pub ts: i64,
    pub page: String,
    pub action: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(records: Vec<EventRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.ts < 0 {
                return Err(Error::Ingest {
                    location: format!("record {}", i + 1),
                    message: format!("negative timestamp {} for user {}", r.ts, r.user),
                });
            }
        }
        Ok(EventLog { records })
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads JSON Lines, or CSV with a `user,ts,page,action` header when the
    /// file name ends in `.csv`.
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            EventLog::read_csv(file)
        } else {
            EventLog::read_jsonl(BufReader::new(file))
        }
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<event log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EventRecord = serde_json::from_str(&line).map_err(|e| Error::Ingest {
                location: format!("line {}", i + 1),
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        EventLog::new(records)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for (i, rec) in rdr.deserialize().enumerate() {
            let rec: EventRecord = rec.map_err(|e| Error::Ingest {
                location: format!("row {}", i + 1),
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        EventLog::new(records)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
        }
        Ok(())
    }

    /// Record indices in timestamp order, ties kept in input order.
    fn time_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        idx.sort_by_key(|&i| self.records[i].ts);
        idx
    }

    /// Records per user, each list sorted by timestamp.
    fn by_user(&self) -> BTreeMap<&str, Vec<&EventRecord>> {
        let mut out: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
        for i in self.time_order() {
            let r = &self.records[i];
            out.entry(r.user.as_str()).or_default().push(r);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateActionVocab {
    state_names: Vec<String>,
    action_names: Vec<String>,
}

impl StateActionVocab {
    pub fn new(state_names: Vec<String>, action_names: Vec<String>) -> Result<Self> {
        if state_names.first().map(String::as_str) != Some(REST_STATE) {
            return Err(Error::InvalidInput(format!(
                "the first state must be the resting state {REST_STATE}"
            )));
        }
        check_unique("state", &state_names)?;
        check_unique("action", &action_names)?;
        if state_names[1..].iter().any(|s| s == REST_STATE) {
            return Err(Error::InvalidInput("resting state listed twice".into()));
        }
        if !action_names.iter().any(|a| a == IDLE_ACTION) {
            return Err(Error::InvalidInput(format!(
                "the action list must contain {IDLE_ACTION}"
            )));
        }
        Ok(StateActionVocab {
            state_names,
            action_names,
        })
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn idle_action(&self) -> usize {
        self.action_names
            .iter()
            .position(|a| a == IDLE_ACTION)
            .expect("validated at construction")
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: StateActionVocab = serde_json::from_str(&text)?;
        StateActionVocab::new(raw.state_names, raw.action_names)
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidInput(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

/// Resting state, then pages by first appearance in timestamp order; actions
/// by first appearance, then the idle action.
pub fn build_vocab(log: &EventLog) -> Result<StateActionVocab> {
    if log.is_empty() {
        return Err(Error::InvalidInput("cannot build a vocabulary from an empty log".into()));
    }
    let mut pages = vec![REST_STATE.to_string()];
    let mut actions = Vec::new();
    let mut seen_pages = BTreeSet::new();
    let mut seen_actions = BTreeSet::new();
    for i in log.time_order() {
        let r = &log.records[i];
        if r.page == REST_STATE || r.action == IDLE_ACTION {
            return Err(Error::Ingest {
                location: format!("user {} ts {}", r.user, r.ts),
                message: format!("{REST_STATE} and {IDLE_ACTION} are reserved names"),
            });
        }
        if seen_pages.insert(r.page.as_str()) {
            pages.push(r.page.clone());
        }
        if seen_actions.insert(r.action.as_str()) {
            actions.push(r.action.clone());
        }
    }
    actions.push(IDLE_ACTION.to_string());
    StateActionVocab::new(pages, actions)
}

/// One feature vector for a named `(state, action)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub state: String,
    pub action: String,
    pub phi: Vec<f64>,
}

/// Expert-defined features; must cover every pair of the vocabulary used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertFeatures {
    pub names: Vec<String>,
    pub entries: Vec<FeatureEntry>,
}

impl ExpertFeatures {
    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// One weight per `(state, action)` pair.
    Indicator,
    Expert(ExpertFeatures),
}

impl FeatureSpec {
    /// Feature names and the row-major `[s][a][k]` table for `vocab`.
    pub fn table(&self, vocab: &StateActionVocab) -> Result<(Vec<String>, Vec<f64>)> {
        let (n_s, n_a) = (vocab.num_states(), vocab.num_actions());
        match self {
            FeatureSpec::Indicator => {
                let dim = n_s * n_a;
                let mut table = vec![0.0; n_s * n_a * dim];
                for k in 0..dim {
                    table[k * dim + k] = 1.0;
                }
                let names = vocab
                    .state_names
                    .iter()
                    .flat_map(|s| vocab.action_names.iter().map(move |a| format!("{s}|{a}")))
                    .collect();
                Ok((names, table))
            }
            FeatureSpec::Expert(ex) => {
                let dim = ex.names.len();
                let mut lookup: HashMap<(&str, &str), &[f64]> = HashMap::new();
                for e in &ex.entries {
                    if e.phi.len() != dim {
                        return Err(Error::DimensionMismatch {
                            what: "expert feature vector",
                            expected: dim,
                            got: e.phi.len(),
                        });
                    }
                    lookup.insert((e.state.as_str(), e.action.as_str()), &e.phi);
                }
                let mut table = Vec::with_capacity(n_s * n_a * dim);
                for s in &vocab.state_names {
                    for a in &vocab.action_names {
                        let phi = lookup.get(&(s.as_str(), a.as_str())).ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "expert features do not cover state {s:?} with action {a:?}"
                            ))
                        })?;
                        table.extend_from_slice(phi);
                    }
                }
                Ok((ex.names.clone(), table))
            }
        }
    }
}

/// Splits time-sorted records wherever the gap exceeds `gap_ms`.
pub fn sessionize<'a>(records: &[&'a EventRecord], gap_ms: i64) -> Vec<Vec<&'a EventRecord>> {
    let mut sessions: Vec<Vec<&EventRecord>> = Vec::new();
    for &r in records {
        match sessions.last_mut() {
            Some(cur) if r.ts - cur.last().expect("non-empty session").ts <= gap_ms => cur.push(r),
            _ => sessions.push(vec![r]),
        }
    }
    sessions
}

/// Empirical MDP and per-user trajectories (ordered by user id).
///
/// Observed `(s, a)` rows get add-one smoothing over the successors actually
/// seen; rows never observed become self-loops.
pub fn build_mdp(
    log: &EventLog,
    vocab: &StateActionVocab,
    spec: &FeatureSpec,
    nu: f64,
    session_gap_ms: i64,
) -> Result<(Mdp, TrajectoryDataset)> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Config(format!("discount must lie in (0, 1), got {nu}")));
    }
    if session_gap_ms < 0 {
        return Err(Error::Config("session gap must be non-negative".into()));
    }
    let (n_s, n_a) = (vocab.num_states(), vocab.num_actions());
    let state_idx: HashMap<&str, usize> = vocab
        .state_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let action_idx: HashMap<&str, usize> = vocab
        .action_names
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let idle = vocab.idle_action();
    let lookup = |r: &EventRecord| -> Result<(usize, usize)> {
        let miss = |what: &str, name: &str| Error::Ingest {
            location: format!("user {} ts {}", r.user, r.ts),
            message: format!("{what} {name:?} is not in the vocabulary"),
        };
        let s = *state_idx
            .get(r.page.as_str())
            .filter(|&&s| s != 0)
            .ok_or_else(|| miss("page", &r.page))?;
        let a = *action_idx
            .get(r.action.as_str())
            .filter(|&&a| a != idle)
            .ok_or_else(|| miss("action", &r.action))?;
        Ok((s, a))
    };

    let mut counts = vec![0u64; n_s * n_a * n_s];
    let mut starts = vec![0u64; n_s];
    let mut trajectories = Vec::new();
    for (user, records) in log.by_user() {
        let sessions = sessionize(&records, session_gap_ms);
        let mut steps = Vec::with_capacity(records.len() + sessions.len());
        for (k, session) in sessions.iter().enumerate() {
            let coded = session.iter().map(|r| lookup(r)).collect::<Result<Vec<_>>>()?;
            if k > 0 {
                steps.push((0, idle));
                counts[idle * n_s + coded[0].0] += 1;
            }
            starts[coded[0].0] += 1;
            for (i, &(s, a)) in coded.iter().enumerate() {
                let next = coded.get(i + 1).map_or(0, |&(s2, _)| s2);
                counts[(s * n_a + a) * n_s + next] += 1;
                steps.push((s, a));
            }
        }
        trajectories.push(Trajectory::new(user, steps));
    }

    let mut transitions = vec![0.0; n_s * n_a * n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let base = (s * n_a + a) * n_s;
            let row = &counts[base..base + n_s];
            let support: u64 = row.iter().filter(|&&c| c > 0).map(|&c| c + 1).sum();
            if support == 0 {
                transitions[base + s] = 1.0;
            } else {
                for (dst, &c) in transitions[base..base + n_s].iter_mut().zip(row) {
                    if c > 0 {
                        *dst = (c + 1) as f64 / support as f64;
                    }
                }
            }
        }
    }
    let total_starts: u64 = starts.iter().sum();
    let initial: Vec<f64> = if total_starts == 0 {
        let mut x = vec![0.0; n_s];
        x[0] = 1.0;
        x
    } else {
        starts.iter().map(|&c| c as f64 / total_starts as f64).collect()
    };

    let (_, features) = spec.table(vocab)?;
    let dim = features.len() / (n_s * n_a);
    let mdp = Mdp::new(n_s, n_a, dim, transitions, features, nu, initial)?;
    Ok((mdp, TrajectoryDataset::new(trajectories)))
}

/// Reads a `user_id,class_name` label file (header row required).
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Ingest {
                location: format!("{} row {}", path.display(), i + 1),
                message: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        let (user, class) = (rec[0].to_string(), rec[1].to_string());
        if let Some(prev) = out.insert(user.clone(), class.clone()) {
            if prev != class {
                return Err(Error::Ingest {
                    location: format!("{} row {}", path.display(), i + 1),
                    message: format!("user {user} labeled both {prev:?} and {class:?}"),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEstimate {
    pub user_id: String,
    pub theta: RewardParams,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbcResult {
    /// Class names, sorted; column order of `probs`.
    pub classes: Vec<String>,
    pub estimates: Vec<UserEstimate>,
    pub probs: LabelMatrix,
    pub hard_labels: Vec<usize>,
    pub lp_sigma: f64,
    /// Users with no observed steps, left out of the clustering.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbcConfig {
    /// Per-user chains use seeds derived from `birl.seed` and the user id.
    pub birl: BirlConfig,
    /// Kernel width; median pairwise distance of the estimates when `None`.
    pub lp_sigma: Option<f64>,
    pub lp: LpConfig,
}

/// Groups trajectories by user id, keeping first-appearance order.
pub fn group_by_user(data: &TrajectoryDataset) -> Vec<(String, TrajectoryDataset)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<&str, Vec<Trajectory>> = HashMap::new();
    for t in &data.trajectories {
        if !groups.contains_key(t.user_id.as_str()) {
            order.push(t.user_id.clone());
        }
        groups.entry(t.user_id.as_str()).or_default().push(t.clone());
    }
    order
        .into_iter()
        .map(|u| {
            let trajs = groups.remove(u.as_str()).unwrap_or_default();
            (u, TrajectoryDataset::new(trajs))
        })
        .collect()
}

/// Checks that every class in `known` has a labeled user with data.
pub fn check_label_coverage(
    data: &TrajectoryDataset,
    known: &BTreeMap<String, String>,
) -> Result<Vec<String>> {
    let classes: Vec<String> = known.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.is_empty() {
        return Err(Error::InvalidInput("the label file names no classes".into()));
    }
    let present: BTreeSet<&str> = data
        .trajectories
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| t.user_id.as_str())
        .collect();
    for class in &classes {
        let covered = known
            .iter()
            .any(|(u, c)| c == class && present.contains(u.as_str()));
        if !covered {
            return Err(Error::InvalidInput(format!(
                "class {class:?} has no labeled user with observed data"
            )));
        }
    }
    for user in known.keys() {
        if !present.contains(user.as_str()) {
            warn!("labeled user {user} has no data and is ignored");
        }
    }
    Ok(classes)
}

/// Per-user reward inference followed by label propagation.
pub fn run_sbc(
    mdp: &Mdp,
    data: &TrajectoryDataset,
    known: &BTreeMap<String, String>,
    cfg: &SbcConfig,
) -> Result<SbcResult> {
    cfg.birl.validate(mdp.feature_dim())?;
    data.validate(mdp)?;
    let classes = check_label_coverage(data, known)?;

    let (users, excluded): (Vec<_>, Vec<_>) = group_by_user(data)
        .into_iter()
        .partition(|(_, d)| d.num_steps() > 0);
    let excluded: Vec<String> = excluded.into_iter().map(|(u, _)| u).collect();
    for u in &excluded {
        warn!("user {u} has an empty trajectory and is excluded");
    }

    let estimates = users
        .par_iter()
        .map(|(user, d)| {
            let mut c = cfg.birl.clone();
            c.seed = derive_seed(cfg.birl.seed, user);
            let summary = run_birl(mdp, d, &c)?;
            Ok(UserEstimate {
                user_id: user.clone(),
                theta: summary.point_estimate,
                acceptance_rate: summary.acceptance_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let class_idx: HashMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let points: Vec<Vec<f64>> = estimates.iter().map(|e| e.theta.0.clone()).collect();
    let labels: Vec<Option<usize>> = estimates
        .iter()
        .map(|e| known.get(&e.user_id).map(|c| class_idx[c.as_str()]))
        .collect();
    let sigma = cfg
        .lp_sigma
        .unwrap_or_else(|| median_pairwise_distance(&points));
    let set = LabeledSet::new(points, labels, classes.len())?;
    let probs = label_prop(&set, sigma, &cfg.lp)?;
    let hard_labels = probs.hard_labels();

    Ok(SbcResult {
        classes,
        estimates,
        probs,
        hard_labels,
        lp_sigma: sigma,
        excluded,
    })
}
