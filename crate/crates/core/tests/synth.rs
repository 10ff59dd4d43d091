use std::collections::BTreeMap;

use behavior_irl::mdp::{mdp_vi, softmax_policy, Mdp, RewardParams, ViConfig};
use behavior_irl::mooc::{build_mdp, build_vocab, FeatureSpec, DEFAULT_SESSION_GAP_MS};
use behavior_irl::smdp::SmdpModel;
use behavior_irl::synth::{
    preset, preset_archetypes, rollout_static, rollout_switched, simulate, to_event_log, ModePlan, Planted,
    PlantedScenario, PlantedUser, World, PRESET_NAMES,
};

fn world(mdp: Mdp) -> World {
    World {
        pages: (0..mdp.num_states()).map(|s| format!("p{s}")).collect(),
        actions: (0..mdp.num_actions()).map(|a| format!("a{a}")).collect(),
        feature_names: (0..mdp.feature_dim()).map(|k| format!("f{k}")).collect(),
        mdp,
    }
}

fn static_scenario(world: World, thetas: Vec<RewardParams>, steps: usize, eta: f64) -> PlantedScenario {
    let users: Vec<PlantedUser> = thetas
        .into_iter()
        .enumerate()
        .map(|(i, theta)| PlantedUser {
            user_id: format!("u{:04}", i + 1),
            class: "c".into(),
            theta,
        })
        .collect();
    PlantedScenario {
        name: "custom".into(),
        world,
        num_users: users.len(),
        planted: Planted::Static { users },
        steps_per_user: steps,
        eta,
        seed: 99,
    }
}

/// Deterministic ring: action 0 moves to `s+1`, action 1 to `s+2`.
fn ring(n: usize) -> Mdp {
    let mut p = vec![0.0; n * 2 * n];
    let mut phi = Vec::new();
    for s in 0..n {
        p[(s * 2) * n + (s + 1) % n] = 1.0;
        p[(s * 2 + 1) * n + (s + 2) % n] = 1.0;
        phi.extend([(s as f64 * 0.37).sin(), 0.5, (s as f64 * 0.37).sin(), -0.5]);
    }
    let mut x0 = vec![0.0; n];
    x0[0] = 1.0;
    Mdp::new(n, 2, 2, p, phi, 0.9, x0).unwrap()
}

#[test]
fn zero_confidence_picks_actions_uniformly() {
    let mut sc = preset("random_5x3", Some(50), Some(200), 3).unwrap();
    sc.eta = 0.0;
    let (data, _) = rollout_static(&sc).unwrap();
    let n = data.num_steps() as f64;
    assert!(n >= 10_000.0);
    let mut freq = [0.0; 3];
    for t in &data.trajectories {
        for &(_, a) in &t.steps {
            freq[a] += 1.0;
        }
    }
    let p = 1.0 / 3.0;
    let sd = (p * (1.0 - p) / n).sqrt();
    for f in freq {
        assert!((f / n - p).abs() <= 3.0 * sd, "{freq:?}");
    }
}

#[test]
fn huge_confidence_follows_the_greedy_path() {
    let sc = static_scenario(world(ring(6)), vec![RewardParams(vec![1.0, 0.4])], 40, 1e6);
    let (data, _) = rollout_static(&sc).unwrap();
    let mdp = &sc.world.mdp;
    let greedy = mdp_vi(mdp, &RewardParams(vec![1.0, 0.4]), &ViConfig::default()).unwrap().greedy();
    let mut s = 0;
    for &(st, a) in &data.trajectories[0].steps {
        assert_eq!(st, s);
        assert_eq!(a, greedy[s]);
        s = (s + 1 + a) % 6;
    }
}

#[test]
fn action_frequencies_match_the_softmax() {
    let mdp = Mdp::new(1, 2, 1, vec![1.0, 1.0], vec![0.3, 0.0], 0.9, vec![1.0]).unwrap();
    let theta = RewardParams(vec![1.0]);
    let eta = 2.0;
    let q = mdp_vi(&mdp, &theta, &ViConfig::default()).unwrap();
    let p0 = softmax_policy(&q, eta).unwrap().prob(0, 0);
    let sc = static_scenario(world(mdp), vec![theta; 5], 4000, eta);
    let (data, _) = rollout_static(&sc).unwrap();
    let n = data.num_steps() as f64;
    let hits = data.trajectories.iter().flat_map(|t| &t.steps).filter(|&&(_, a)| a == 0).count() as f64;
    let sd = (p0 * (1.0 - p0) / n).sqrt();
    assert!((hits / n - p0).abs() <= 3.0 * sd, "{} vs {p0}", hits / n);
}

#[test]
fn sticky_modes_switch_at_the_planted_rate() {
    let mut sc = preset("three_modes", Some(1), Some(10_000), 5).unwrap();
    let thetas = vec![RewardParams(vec![1.0, 0.0, 0.0]), RewardParams(vec![0.0, 1.0, 0.0])];
    let zeta = vec![vec![0.95, 0.05], vec![0.05, 0.95]];
    sc.planted = Planted::Switched {
        model: SmdpModel::with_uniform_start(thetas, zeta.clone(), 5.0).unwrap(),
        mode_names: vec!["a".into(), "b".into()],
        plan: ModePlan::Markov,
    };
    let (_, seqs) = rollout_switched(&sc).unwrap();
    let z = &seqs[0].0;
    let mut counts = [[0.0; 2]; 2];
    for w in z.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for i in 0..2 {
        let row: f64 = counts[i].iter().sum();
        for j in 0..2 {
            assert!((counts[i][j] / row - zeta[i][j]).abs() <= 0.02, "{counts:?}");
        }
    }
}

#[test]
fn one_mode_rollout_matches_static_rollout() {
    let switched = preset("single_mode", Some(4), Some(50), 17).unwrap();
    let Planted::Switched { model, .. } = &switched.planted else {
        unreachable!()
    };
    let mut fixed = switched.clone();
    fixed.planted = Planted::Static {
        users: (0..4)
            .map(|i| PlantedUser {
                user_id: format!("u{:04}", i + 1),
                class: "only".into(),
                theta: model.thetas[0].clone(),
            })
            .collect(),
    };
    let (a, seqs) = rollout_switched(&switched).unwrap();
    let (b, _) = rollout_static(&fixed).unwrap();
    assert_eq!(a, b);
    assert!(seqs.iter().all(|s| s.0.iter().all(|&k| k == 0)));
}

#[test]
fn rollouts_respect_the_transition_support() {
    for sc in preset_archetypes() {
        let mut sc = sc;
        sc.num_users = sc.num_users.min(5);
        if let Planted::Static { users } = &mut sc.planted {
            users.truncate(5);
        }
        let (data, truth) = simulate(&sc).unwrap();
        let mdp = &sc.world.mdp;
        assert_eq!(truth.users.len(), data.trajectories.len());
        for t in &data.trajectories {
            assert_eq!(t.len(), sc.steps_per_user);
            assert!(mdp.initial_dist()[t.steps[0].0] > 0.0);
            for w in t.steps.windows(2) {
                let ((s, a), (s2, _)) = (w[0], w[1]);
                assert!(mdp.transition(s, a, s2) > 0.0, "{}: {s},{a} -> {s2}", sc.name);
            }
        }
    }
}

#[test]
fn late_quitters_start_and_end_exploring() {
    let sc = preset("late_quitter", Some(10), Some(100), 8).unwrap();
    let (_, seqs) = rollout_switched(&sc).unwrap();
    for z in &seqs {
        assert_eq!(z.0[0], 0);
        assert_eq!(*z.0.last().unwrap(), 0);
        assert!(z.0.contains(&1) && z.0.contains(&2));
    }
}

#[test]
fn presets_round_trip_through_json() {
    for sc in preset_archetypes() {
        let text = serde_json::to_string(&sc).unwrap();
        let back: PlantedScenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc);
    }
    assert_eq!(preset_archetypes().len(), PRESET_NAMES.len());
    assert_eq!(preset("nope", None, None, 1).unwrap_err().kind(), "invalid_input");
}

#[test]
fn seeds_fix_the_output() {
    let a = simulate(&preset("three_modes", Some(3), Some(40), 1).unwrap()).unwrap();
    let b = simulate(&preset("three_modes", Some(3), Some(40), 1).unwrap()).unwrap();
    let c = simulate(&preset("three_modes", Some(3), Some(40), 2).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn event_logs_reingest_to_the_same_steps() {
    let sc = preset("two_classes", Some(4), Some(60), 6).unwrap();
    let (data, _) = rollout_static(&sc).unwrap();
    let log = to_event_log(&sc.world, &data, sc.seed);
    assert_eq!(log.records().len(), data.num_steps());
    let vocab = build_vocab(&log).unwrap();
    let spec = FeatureSpec::Expert(sc.world.expert_features());
    let (mdp, again) = build_mdp(&log, &vocab, &spec, 0.9, DEFAULT_SESSION_GAP_MS).unwrap();
    assert_eq!(mdp.feature_dim(), sc.world.mdp.feature_dim());
    let named = |s: usize, a: usize| (vocab.state_names()[s].clone(), vocab.action_names()[a].clone());
    let original: BTreeMap<_, _> = data
        .trajectories
        .iter()
        .map(|t| {
            let steps: Vec<_> = t.steps.iter().map(|&(s, a)| (sc.world.pages[s].clone(), sc.world.actions[a].clone())).collect();
            (t.user_id.clone(), steps)
        })
        .collect();
    for t in &again.trajectories {
        let steps: Vec<_> = t.steps.iter().map(|&(s, a)| named(s, a)).collect();
        assert_eq!(original[&t.user_id], steps);
        for &(s, a) in &t.steps {
            let page = &vocab.state_names()[s];
            let action = &vocab.action_names()[a];
            let (s0, a0) = (
                sc.world.pages.iter().position(|p| p == page).unwrap(),
                sc.world.actions.iter().position(|x| x == action).unwrap(),
            );
            assert_eq!(mdp.feature(s, a), sc.world.mdp.feature(s0, a0));
        }
    }
}
