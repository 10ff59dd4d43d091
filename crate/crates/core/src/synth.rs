//! Synthetic users with planted ground truth.
//!
//! A [`PlantedScenario`] fixes a small course-like world (pages, actions,
//! transition kernel, features) and the parameters users are simulated
//! from: per-user reward weights for static scenarios, or a set of behavior
//! modes with a mode schedule for switched ones. Rollouts are deterministic
//! given the scenario seed; every user draws from its own derived stream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::birl::{Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::mdp::{mdp_vi, softmax_policy, Mdp, RewardParams, StochasticPolicy, ViConfig};
use crate::mooc::{EventLog, EventRecord, ExpertFeatures, FeatureEntry, IDLE_ACTION, REST_STATE};
use crate::rng::{derive_seed, rng_from_seed, ChainRng};
use crate::smdp::{ModeSequence, SmdpModel};

/// A named MDP whose states and actions can be written out as an event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub pages: Vec<String>,
    pub actions: Vec<String>,
    pub feature_names: Vec<String>,
    pub mdp: Mdp,
}

impl World {
    /// Feature table for the log-built MDP of this world: every page/action
    /// pair keeps its features, the resting state and idle action get zeros.
    pub fn expert_features(&self) -> ExpertFeatures {
        let dim = self.feature_names.len();
        let mut entries = Vec::new();
        let mut push = |state: &str, action: &str, phi: Vec<f64>| {
            entries.push(FeatureEntry {
                state: state.to_string(),
                action: action.to_string(),
                phi,
            })
        };
        for (s, page) in self.pages.iter().enumerate() {
            for (a, action) in self.actions.iter().enumerate() {
                push(page, action, self.mdp.feature(s, a).to_vec());
            }
            push(page, IDLE_ACTION, vec![0.0; dim]);
        }
        for action in self.actions.iter().map(String::as_str).chain([IDLE_ACTION]) {
            push(REST_STATE, action, vec![0.0; dim]);
        }
        ExpertFeatures {
            names: self.feature_names.clone(),
            entries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldFeatures {
    /// One weight per page/action pair.
    Indicator,
    /// Three behavior dimensions: exploration, learning, certification.
    Behaviors,
}

const CHAPTERS: usize = 3;
const PAGES: [&str; 7] = ["ch1", "ch2", "ch3", "quiz1", "quiz2", "quiz3", "forum"];
const ACTIONS: [&str; 4] = ["skip", "watch", "answer", "post"];
const SKIP: usize = 0;
const WATCH: usize = 1;
const ANSWER: usize = 2;
const POST: usize = 3;
const FORUM: usize = 6;
pub const BEHAVIOR_NAMES: [&str; 3] = ["exploration", "learning", "certification"];

fn quiz(k: usize) -> usize {
    CHAPTERS + k
}

/// Three chapters, a quiz per chapter and a forum.
///
/// `skip` jumps to a uniformly random page, `watch` works through the
/// chapters, `answer` moves between chapters and their quizzes and `post`
/// goes to the forum.
pub fn course_world(features: WorldFeatures) -> World {
    let n_s = PAGES.len();
    let n_a = ACTIONS.len();
    let mut p = vec![0.0; n_s * n_a * n_s];
    let mut set = |s: usize, a: usize, next: &[(usize, f64)]| {
        for &(s2, pr) in next {
            p[(s * n_a + a) * n_s + s2] += pr;
        }
    };
    for s in 0..n_s {
        let uniform: Vec<(usize, f64)> = (0..n_s).map(|s2| (s2, 1.0 / n_s as f64)).collect();
        set(s, SKIP, &uniform);
        if s == FORUM {
            set(s, POST, &[(FORUM, 1.0)]);
        } else {
            set(s, POST, &[(FORUM, 0.8), (s, 0.2)]);
        }
    }
    for k in 0..CHAPTERS {
        let next_ch = if k + 1 < CHAPTERS { k + 1 } else { quiz(k) };
        set(k, WATCH, &[(k, 0.6), (next_ch, 0.4)]);
        set(k, ANSWER, &[(quiz(k), 1.0)]);
        set(quiz(k), WATCH, &[(k, 1.0)]);
        let after_quiz = if k + 1 < CHAPTERS { k + 1 } else { FORUM };
        set(quiz(k), ANSWER, &[(quiz(k), 0.4), (after_quiz, 0.6)]);
    }
    set(FORUM, WATCH, &[(0, 0.5), (FORUM, 0.5)]);
    set(FORUM, ANSWER, &[(quiz(0), 1.0)]);

    let mut initial = vec![0.06; n_s];
    initial[0] = 0.6;
    initial[FORUM] = 0.1;

    let (dim, phi, names): (usize, Vec<f64>, Vec<String>) = match features {
        WorldFeatures::Indicator => {
            let dim = n_s * n_a;
            let mut phi = vec![0.0; n_s * n_a * dim];
            for k in 0..dim {
                phi[k * dim + k] = 1.0;
            }
            let names = PAGES
                .iter()
                .flat_map(|s| ACTIONS.iter().map(move |a| format!("{s}|{a}")))
                .collect();
            (dim, phi, names)
        }
        WorldFeatures::Behaviors => {
            let per_action: [[f64; 3]; 4] = [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.5, 0.0],
            ];
            let mut phi = Vec::with_capacity(n_s * n_a * 3);
            for _ in 0..n_s {
                for row in &per_action {
                    phi.extend_from_slice(row);
                }
            }
            (3, phi, BEHAVIOR_NAMES.iter().map(|s| s.to_string()).collect())
        }
    };
    World {
        pages: PAGES.iter().map(|s| s.to_string()).collect(),
        actions: ACTIONS.iter().map(|s| s.to_string()).collect(),
        feature_names: names,
        mdp: Mdp::new(n_s, n_a, dim, p, phi, 0.9, initial).expect("course world is valid"),
    }
}

/// Random dense world with indicator features; rows are drawn from a
/// symmetric Dirichlet(2).
pub fn random_world(num_states: usize, num_actions: usize, seed: u64) -> World {
    use rand_distr::{Distribution, Gamma};
    let mut rng = rng_from_seed(seed);
    let gamma = Gamma::new(2.0, 1.0).expect("valid shape");
    let mut p = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let row: Vec<f64> = (0..num_states).map(|_| gamma.sample(&mut rng)).collect();
        let z: f64 = row.iter().sum();
        p.extend(row.iter().map(|x| x / z));
    }
    let dim = num_states * num_actions;
    let mut phi = vec![0.0; dim * dim];
    for k in 0..dim {
        phi[k * dim + k] = 1.0;
    }
    let pages: Vec<String> = (0..num_states).map(|s| format!("s{s}")).collect();
    let actions: Vec<String> = (0..num_actions).map(|a| format!("a{a}")).collect();
    let names = pages
        .iter()
        .flat_map(|s| actions.iter().map(move |a| format!("{s}|{a}")))
        .collect();
    World {
        mdp: Mdp::new(
            num_states,
            num_actions,
            dim,
            p,
            phi,
            0.9,
            vec![1.0 / num_states as f64; num_states],
        )
        .expect("random world is valid"),
        pages,
        actions,
        feature_names: names,
    }
}

/// Draws weights uniformly from `[-1, 1]^N` until the optimal action of
/// every state beats the runner-up by at least `margin` in `Q*`.
pub fn planted_theta_with_margin(mdp: &Mdp, margin: f64, rng: &mut ChainRng) -> RewardParams {
    loop {
        let theta = RewardParams(
            (0..mdp.feature_dim())
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        );
        let q = mdp_vi(mdp, &theta, &ViConfig::default()).expect("planted MDP converges");
        let ok = (0..mdp.num_states()).all(|s| {
            let mut row = q.row(s).to_vec();
            row.sort_by(|a, b| b.total_cmp(a));
            row.len() < 2 || row[0] - row[1] >= margin
        });
        if ok {
            return theta;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user_id: String,
    pub class: String,
    pub theta: RewardParams,
}

/// How planted mode sequences are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePlan {
    /// `z_0` from the initial mode distribution, then the Markov chain `zeta`.
    Markov,
    /// Exploration, then alternating learning and certification blocks, and
    /// a closing exploration phase. Modes 0/1/2 are exploration/learning/
    /// certification.
    LateQuitter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Planted {
    Static {
        users: Vec<PlantedUser>,
    },
    Switched {
        model: SmdpModel,
        mode_names: Vec<String>,
        plan: ModePlan,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedScenario {
    pub name: String,
    pub world: World,
    pub planted: Planted,
    pub num_users: usize,
    pub steps_per_user: usize,
    pub eta: f64,
    pub seed: u64,
}

pub fn user_id(i: usize) -> String {
    format!("u{:04}", i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthUser {
    pub user_id: String,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<RewardParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<usize>>,
}

/// Ground-truth sidecar written next to a simulated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    /// `static` or `switched`.
    pub kind: String,
    pub eta: f64,
    pub feature_names: Vec<String>,
    pub users: Vec<TruthUser>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode_thetas: Vec<RewardParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zeta: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn is_switched(&self) -> bool {
        self.kind == "switched"
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn sample_index(probs: &[f64], rng: &mut ChainRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn policies(mdp: &Mdp, thetas: &[RewardParams], eta: f64) -> Result<Vec<StochasticPolicy>> {
    thetas
        .iter()
        .map(|th| softmax_policy(&mdp_vi(mdp, th, &ViConfig::default())?, eta))
        .collect()
}

/// Simulates one user; `mode_of(t)` picks the policy used at step `t`.
fn roll_user(
    mdp: &Mdp,
    policies: &[StochasticPolicy],
    modes: &[usize],
    rng: &mut ChainRng,
) -> Vec<(usize, usize)> {
    let mut s = sample_index(mdp.initial_dist(), rng);
    let mut steps = Vec::with_capacity(modes.len());
    for &k in modes {
        let a = sample_index(policies[k].row(s), rng);
        steps.push((s, a));
        s = sample_index(mdp.transition_row(s, a), rng);
    }
    steps
}

/// Users act with the Boltzmann policy of their own planted weights.
pub fn rollout_static(scenario: &PlantedScenario) -> Result<(TrajectoryDataset, GroundTruth)> {
    let users = match &scenario.planted {
        Planted::Static { users } => users,
        Planted::Switched { .. } => {
            return Err(Error::InvalidInput(format!(
                "scenario {} is switched, not static",
                scenario.name
            )))
        }
    };
    let mdp = &scenario.world.mdp;
    let mut trajectories = Vec::with_capacity(users.len());
    let mut truth = Vec::with_capacity(users.len());
    let modes = vec![0usize; scenario.steps_per_user];
    for u in users {
        let pol = policies(mdp, std::slice::from_ref(&u.theta), scenario.eta)?;
        let mut rng = rng_from_seed(derive_seed(scenario.seed, &u.user_id));
        let steps = roll_user(mdp, &pol, &modes, &mut rng);
        truth.push(TruthUser {
            user_id: u.user_id.clone(),
            steps: steps.len(),
            class: Some(u.class.clone()),
            theta: Some(u.theta.clone()),
            modes: None,
        });
        trajectories.push(Trajectory::new(u.user_id.clone(), steps));
    }
    Ok((
        TrajectoryDataset::new(trajectories),
        GroundTruth {
            scenario: scenario.name.clone(),
            kind: "static".into(),
            eta: scenario.eta,
            feature_names: scenario.world.feature_names.clone(),
            users: truth,
            mode_names: Vec::new(),
            mode_thetas: Vec::new(),
            zeta: Vec::new(),
        },
    ))
}

fn late_quitter_modes(steps: usize, rng: &mut ChainRng) -> Vec<usize> {
    const EXPLORE: usize = 0;
    const LEARN: usize = 1;
    const CERTIFY: usize = 2;
    let head = rng.random_range(6..=12).min(steps);
    let tail = rng.random_range(8..=14).min(steps - head);
    let mut modes = vec![EXPLORE; head];
    let middle_end = steps - tail;
    let mut learning = true;
    let mut block = 0;
    while modes.len() < middle_end {
        // Learning blocks shrink and certification blocks grow as the course goes on.
        let len = if learning {
            rng.random_range(5..=10usize).saturating_sub(block)
        } else {
            rng.random_range(8..=16) + 2 * block
        }
        .max(3);
        let mode = if learning { LEARN } else { CERTIFY };
        let len = len.min(middle_end - modes.len());
        modes.extend(std::iter::repeat_n(mode, len));
        if !learning {
            block += 1;
        }
        learning = !learning;
    }
    modes.extend(std::iter::repeat_n(EXPLORE, steps - modes.len()));
    modes
}

/// Users switch between the planted modes; returns the planted sequences.
pub fn rollout_switched(scenario: &PlantedScenario) -> Result<(TrajectoryDataset, Vec<ModeSequence>)> {
    let (model, plan) = match &scenario.planted {
        Planted::Switched { model, plan, .. } => (model, *plan),
        Planted::Static { .. } => {
            return Err(Error::InvalidInput(format!(
                "scenario {} is static, not switched",
                scenario.name
            )))
        }
    };
    model.validate()?;
    let mdp = &scenario.world.mdp;
    let pol = policies(mdp, &model.thetas, scenario.eta)?;
    let mut trajectories = Vec::with_capacity(scenario.num_users);
    let mut sequences = Vec::with_capacity(scenario.num_users);
    for i in 0..scenario.num_users {
        let id = user_id(i);
        let mut mode_rng = rng_from_seed(derive_seed(scenario.seed, &format!("modes:{id}")));
        let modes = match plan {
            ModePlan::Markov => {
                let mut z = Vec::with_capacity(scenario.steps_per_user);
                if scenario.steps_per_user > 0 {
                    let mut k = sample_index(&model.initial_modes, &mut mode_rng);
                    z.push(k);
                    for _ in 1..scenario.steps_per_user {
                        k = sample_index(&model.zeta[k], &mut mode_rng);
                        z.push(k);
                    }
                }
                z
            }
            ModePlan::LateQuitter => late_quitter_modes(scenario.steps_per_user, &mut mode_rng),
        };
        let mut rng = rng_from_seed(derive_seed(scenario.seed, &id));
        let steps = roll_user(mdp, &pol, &modes, &mut rng);
        trajectories.push(Trajectory::new(id, steps));
        sequences.push(ModeSequence(modes));
    }
    Ok((TrajectoryDataset::new(trajectories), sequences))
}

/// Runs whichever rollout the scenario calls for and assembles the sidecar.
pub fn simulate(scenario: &PlantedScenario) -> Result<(TrajectoryDataset, GroundTruth)> {
    match &scenario.planted {
        Planted::Static { .. } => rollout_static(scenario),
        Planted::Switched {
            model, mode_names, ..
        } => {
            let (data, seqs) = rollout_switched(scenario)?;
            let users = data
                .trajectories
                .iter()
                .zip(&seqs)
                .map(|(t, z)| TruthUser {
                    user_id: t.user_id.clone(),
                    steps: t.len(),
                    class: None,
                    theta: None,
                    modes: Some(z.0.clone()),
                })
                .collect();
            Ok((
                data,
                GroundTruth {
                    scenario: scenario.name.clone(),
                    kind: "switched".into(),
                    eta: scenario.eta,
                    feature_names: scenario.world.feature_names.clone(),
                    users,
                    mode_names: mode_names.clone(),
                    mode_thetas: model.thetas.clone(),
                    zeta: model.zeta.clone(),
                },
            ))
        }
    }
}

/// Writes trajectories as event records, one user after another, with
/// 5-60 s between clicks so each user forms a single session.
pub fn to_event_log(world: &World, data: &TrajectoryDataset, seed: u64) -> EventLog {
    const BASE_TS: i64 = 1_600_000_000_000;
    let mut records = Vec::with_capacity(data.num_steps());
    for (i, traj) in data.trajectories.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("clock:{}", traj.user_id)));
        let mut ts = BASE_TS + i as i64 * 3_600_000;
        for &(s, a) in &traj.steps {
            records.push(EventRecord {
                user: traj.user_id.clone(),
                ts,
                page: world.pages[s].clone(),
                action: world.actions[a].clone(),
            });
            ts += rng.random_range(5_000..=60_000);
        }
    }
    EventLog::new(records).expect("timestamps are non-negative")
}

struct ClassTemplate {
    name: &'static str,
    /// Preference for `(page, action)`.
    pref: fn(usize, usize) -> f64,
}

fn is_chapter(s: usize) -> bool {
    s < CHAPTERS
}

fn is_quiz(s: usize) -> bool {
    (CHAPTERS..2 * CHAPTERS).contains(&s)
}

fn chapter_of(s: usize) -> Option<usize> {
    if is_chapter(s) {
        Some(s)
    } else if is_quiz(s) {
        Some(s - CHAPTERS)
    } else {
        None
    }
}

fn participant(s: usize, a: usize) -> f64 {
    match (a, is_chapter(s), is_quiz(s)) {
        (SKIP, _, _) => -0.8,
        (POST, _, _) => -0.5,
        (WATCH, true, _) => 0.8,
        (ANSWER, true, _) => 0.4,
        (ANSWER, _, true) => 0.8,
        (WATCH, _, true) => 0.1,
        (WATCH, _, _) => 0.6,
        _ => -0.4,
    }
}

fn clicker(_s: usize, a: usize) -> f64 {
    if a == SKIP {
        0.9
    } else {
        -0.7
    }
}

fn collaborative(s: usize, a: usize) -> f64 {
    match a {
        POST => 0.8,
        _ if s == FORUM && a == WATCH => 0.5,
        _ => participant(s, a) * 0.8,
    }
}

fn targeting(s: usize, a: usize) -> f64 {
    match chapter_of(s) {
        Some(1) => participant(s, a),
        _ if a == SKIP => 0.7,
        _ => -0.6,
    }
}

fn auditor(_s: usize, a: usize) -> f64 {
    match a {
        WATCH => 0.8,
        ANSWER => -0.6,
        _ => -0.5,
    }
}

fn big_starter(s: usize, a: usize) -> f64 {
    match chapter_of(s) {
        Some(0) => participant(s, a),
        _ => clicker(s, a),
    }
}

fn late_quitter_class(s: usize, a: usize) -> f64 {
    match chapter_of(s) {
        Some(0) | Some(1) => participant(s, a),
        _ => clicker(s, a),
    }
}

const CLASSES: [ClassTemplate; 7] = [
    ClassTemplate { name: "participant", pref: participant },
    ClassTemplate { name: "collaborative", pref: collaborative },
    ClassTemplate { name: "targeting", pref: targeting },
    ClassTemplate { name: "auditor", pref: auditor },
    ClassTemplate { name: "clicker", pref: clicker },
    ClassTemplate { name: "big_starter", pref: big_starter },
    ClassTemplate { name: "late_quitter", pref: late_quitter_class },
];

/// Users are assigned to `classes` round-robin; each gets the class template
/// plus Gaussian jitter (sd 0.15) clipped to `[-1, 1]`.
fn static_scenario(
    name: &str,
    classes: &[&str],
    num_users: usize,
    steps: usize,
    seed: u64,
) -> PlantedScenario {
    use rand_distr::StandardNormal;
    let world = course_world(WorldFeatures::Indicator);
    let n_a = world.actions.len();
    let mut rng = rng_from_seed(derive_seed(seed, "planted-thetas"));
    let users = (0..num_users)
        .map(|i| {
            let class = classes[i % classes.len()];
            let template = CLASSES
                .iter()
                .find(|c| c.name == class)
                .expect("known class template");
            let theta = (0..world.mdp.feature_dim())
                .map(|k| {
                    let jitter: f64 = rng.sample(StandardNormal);
                    ((template.pref)(k / n_a, k % n_a) + 0.15 * jitter).clamp(-1.0, 1.0)
                })
                .collect();
            PlantedUser {
                user_id: user_id(i),
                class: class.to_string(),
                theta: RewardParams(theta),
            }
        })
        .collect();
    PlantedScenario {
        name: name.to_string(),
        world,
        planted: Planted::Static { users },
        num_users,
        steps_per_user: steps,
        eta: 5.0,
        seed,
    }
}

fn one_hot_modes() -> Vec<RewardParams> {
    (0..3)
        .map(|k| RewardParams((0..3).map(|j| if j == k { 1.0 } else { 0.0 }).collect()))
        .collect()
}

fn sticky_zeta(l: usize, stay: f64) -> Vec<Vec<f64>> {
    let off = if l > 1 { (1.0 - stay) / (l - 1) as f64 } else { 0.0 };
    (0..l)
        .map(|i| (0..l).map(|j| if i == j { if l > 1 { stay } else { 1.0 } } else { off }).collect())
        .collect()
}

fn switched_scenario(
    name: &str,
    thetas: Vec<RewardParams>,
    plan: ModePlan,
    num_users: usize,
    steps: usize,
    seed: u64,
) -> PlantedScenario {
    let l = thetas.len();
    let names = if l == 3 {
        BEHAVIOR_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..l).map(|k| format!("mode{k}")).collect()
    };
    PlantedScenario {
        name: name.to_string(),
        world: course_world(WorldFeatures::Behaviors),
        planted: Planted::Switched {
            model: SmdpModel::with_uniform_start(thetas, sticky_zeta(l, 0.9), 5.0)
                .expect("valid planted model"),
            mode_names: names,
            plan,
        },
        num_users,
        steps_per_user: steps,
        eta: 5.0,
        seed,
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "three_modes",
    "late_quitter",
    "single_mode",
    "two_classes",
    "seven_classes",
    "random_5x3",
];

pub const DEFAULT_SEED: u64 = 20_190_501;

/// Builds a preset; `users` and `steps` override its default size.
pub fn preset(name: &str, users: Option<usize>, steps: Option<usize>, seed: u64) -> Result<PlantedScenario> {
    let class_names: Vec<&str> = CLASSES.iter().map(|c| c.name).collect();
    let sc = match name {
        "three_modes" => switched_scenario(
            name,
            one_hot_modes(),
            ModePlan::Markov,
            users.unwrap_or(50),
            steps.unwrap_or(100),
            seed,
        ),
        "late_quitter" => switched_scenario(
            name,
            one_hot_modes(),
            ModePlan::LateQuitter,
            users.unwrap_or(30),
            steps.unwrap_or(100),
            seed,
        ),
        "single_mode" => switched_scenario(
            name,
            vec![RewardParams(vec![0.0, 1.0, 0.0])],
            ModePlan::Markov,
            users.unwrap_or(20),
            steps.unwrap_or(100),
            seed,
        ),
        "two_classes" => static_scenario(
            name,
            &["participant", "clicker"],
            users.unwrap_or(40),
            steps.unwrap_or(200),
            seed,
        ),
        "seven_classes" => static_scenario(
            name,
            &class_names,
            users.unwrap_or(70),
            steps.unwrap_or(200),
            seed,
        ),
        "random_5x3" => {
            let world = random_world(5, 3, derive_seed(seed, "world"));
            let mut rng = rng_from_seed(derive_seed(seed, "planted-thetas"));
            let n = users.unwrap_or(20);
            let planted = (0..n)
                .map(|i| PlantedUser {
                    user_id: user_id(i),
                    class: "planted".into(),
                    theta: planted_theta_with_margin(&world.mdp, 0.25, &mut rng),
                })
                .collect();
            PlantedScenario {
                name: name.to_string(),
                world,
                planted: Planted::Static { users: planted },
                num_users: n,
                steps_per_user: steps.unwrap_or(200),
                eta: 5.0,
                seed,
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown preset {other:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(sc)
}

/// Every preset at its default size and seed.
pub fn preset_archetypes() -> Vec<PlantedScenario> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n, None, None, DEFAULT_SEED).expect("preset names are valid"))
        .collect()
}
