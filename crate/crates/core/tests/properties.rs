use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tomguard::comms::{broadcast, CommGraph, FalsificationStrategy, Message};
use tomguard::env::{Action, AgentId, GridState, Observation, Pos};
use tomguard::metrics::{classify_step, f1, ConfusionCounts, Role};
use tomguard::policy::{
    action_values, argmax, distribution_from_values, greedy_action, ValueOracleConfig,
};
use tomguard::trust::{
    consistency_check, kl_score, ConsistencyConfig, ConsistencyMode, TrustState, Verdict,
    VerdictKind,
};

fn arb_state() -> impl Strategy<Value = GridState> {
    (2usize..9, 2usize..9, 2usize..5).prop_flat_map(|(w, h, n)| {
        (
            prop::collection::vec(any::<bool>(), w * h),
            prop::collection::vec((0..w, 0..h), n),
        )
            .prop_map(move |(mut covered, starts)| {
                let positions: Vec<Pos> = starts.into_iter().map(|(x, y)| Pos::new(x, y)).collect();
                for p in &positions {
                    covered[p.y * w + p.x] = true;
                }
                GridState::from_parts(w, h, covered, positions, 0).unwrap()
            })
    })
}

fn arb_action() -> impl Strategy<Value = Action> {
    (0usize..5).prop_map(|i| Action::ALL[i])
}

fn arb_oracle() -> impl Strategy<Value = ValueOracleConfig> {
    (0.0f64..0.99, 1usize..4, 1usize..3).prop_map(|(gamma, horizon, radius)| ValueOracleConfig {
        gamma,
        horizon,
        radius,
    })
}

fn joints(n: usize, len: usize) -> impl Strategy<Value = Vec<Vec<Action>>> {
    prop::collection::vec(prop::collection::vec(arb_action(), n), 1..len)
}

fn state_and_joints() -> impl Strategy<Value = (GridState, Vec<Vec<Action>>)> {
    arb_state().prop_flat_map(|s| {
        let n = s.agent_count();
        (Just(s), joints(n, 30))
    })
}

fn verdicts() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..60)
}

fn beliefs_after(s: f64, vs: &[bool]) -> Vec<f64> {
    let peer = AgentId(1);
    let mut ts = TrustState::new(AgentId(0), 2, s).unwrap();
    vs.iter()
        .map(|&ok| {
            ts.advance();
            let v = if ok {
                Verdict::consistent(0.0)
            } else {
                Verdict::inconsistent(1.0)
            };
            ts.record(peer, &v).unwrap();
            ts.belief(peer).unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn coverage_monotone_and_rewards_add_up((s0, plan) in state_and_joints()) {
        let mut s = s0.clone();
        let mut gained = 0;
        for joint in &plan {
            let (next, rec) = s.step(joint).unwrap();
            prop_assert!(next.covered_count() >= s.covered_count());
            gained += rec.total();
            s = next;
        }
        prop_assert_eq!(gained as usize, s.covered_count() - s0.covered_count());

        let mut again = s0.clone();
        for joint in &plan {
            again = again.step(joint).unwrap().0;
        }
        prop_assert_eq!(again, s);
    }

    #[test]
    fn off_grid_moves_keep_position(s in arb_state()) {
        let (w, h) = (s.width(), s.height());
        let joint: Vec<Action> = s
            .positions()
            .iter()
            .map(|p| {
                if p.y == 0 { Action::Up }
                else if p.y == h - 1 { Action::Down }
                else if p.x == 0 { Action::Left }
                else if p.x == w - 1 { Action::Right }
                else { Action::Stay }
            })
            .collect();
        let (next, _) = s.step(&joint).unwrap();
        prop_assert_eq!(next.positions(), s.positions());
    }

    #[test]
    fn values_are_bounded(s in arb_state(), cfg in arb_oracle()) {
        let obs = s.observe(AgentId(0), cfg.radius).unwrap();
        let cells = obs.local_map().len() as f64;
        for v in action_values(&obs, &cfg) {
            prop_assert!(v >= 0.0);
            prop_assert!(v <= cfg.value_bound() + 1e-12);
            prop_assert!(v <= cells);
        }
    }

    #[test]
    fn observers_agree_on_the_same_window(s in arb_state(), cfg in arb_oracle()) {
        let obs = s.observe(AgentId(0), cfg.radius).unwrap();
        let (w, h) = obs.grid_size();
        let relabeled = Observation::new(AgentId(1), obs.position(), obs.radius(), w, h, obs.local_map().to_vec(), 9).unwrap();
        prop_assert_eq!(action_values(&obs, &cfg), action_values(&relabeled, &cfg));
        prop_assert_eq!(greedy_action(&obs, &cfg), greedy_action(&relabeled, &cfg));
    }

    #[test]
    fn softmax_ignores_a_constant_shift(
        values in prop::array::uniform5(0.0f64..3.0),
        shift in -50.0f64..50.0,
        temperature in 0.05f64..5.0,
    ) {
        let shifted = values.map(|v| v + shift);
        let a = distribution_from_values(&values, temperature).unwrap();
        let b = distribution_from_values(&shifted, temperature).unwrap();
        prop_assert!((a.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (p, q) in a.probs().iter().zip(b.probs()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn broadcast_leaves_state_alone_and_truth_passes_through(s in arb_state(), seed in any::<u64>(), dense in any::<bool>()) {
        let n = s.agent_count();
        let graph = if dense {
            CommGraph::complete(n)
        } else {
            CommGraph::from_undirected_edges(n, (1..n).map(|j| (AgentId(0), AgentId(j)))).unwrap()
        };
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msgs = broadcast(&s, &graph, &vec![FalsificationStrategy::Truthful; n], 2, &mut rng).unwrap();
        prop_assert_eq!(&s, &before);
        prop_assert_eq!(msgs.len(), graph.directed_edge_count());
        for m in &msgs {
            prop_assert_eq!(&m.payload, &s.observe(m.sender, 2).unwrap());
        }

        let mixed = [FalsificationStrategy::Lure, FalsificationStrategy::Babble, FalsificationStrategy::PositionSpoof];
        let strategies: Vec<_> = (0..n).map(|i| mixed[i % 3]).collect();
        let msgs = broadcast(&s, &graph, &strategies, 2, &mut rng).unwrap();
        prop_assert_eq!(&s, &before);
        prop_assert_eq!(msgs.len(), graph.directed_edge_count());
    }

    #[test]
    fn beliefs_stay_in_unit_interval(s in 0.001f64..20.0, vs in verdicts()) {
        for b in beliefs_after(s, &vs) {
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn beliefs_are_reproducible(s in 0.001f64..20.0, vs in verdicts()) {
        let a: Vec<u64> = beliefs_after(s, &vs).iter().map(|b| b.to_bits()).collect();
        let b: Vec<u64> = beliefs_after(s, &vs).iter().map(|b| b.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn one_sided_verdicts_move_belief_one_way(s in 0.001f64..5.0, len in 1usize..60) {
        let down = beliefs_after(s, &vec![false; len]);
        prop_assert!(down.windows(2).all(|w| w[1] <= w[0]));
        let up = beliefs_after(s, &vec![true; len]);
        prop_assert!(up.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_slack_threshold_accepts_exactly_the_maximizers(s in arb_state(), cfg in arb_oracle(), observed in arb_action()) {
        let payload = s.observe(AgentId(0), cfg.radius).unwrap();
        let values = action_values(&payload, &cfg);
        let msg = Message { sender: AgentId(0), receiver: AgentId(1), payload, t: 0 };
        let exact = consistency_check(&cfg, &msg, observed, &ConsistencyConfig::default()).unwrap();
        let slack = consistency_check(
            &cfg,
            &msg,
            observed,
            &ConsistencyConfig { mode: ConsistencyMode::ValueThreshold { rho: 0.0 } },
        )
        .unwrap();
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(slack.score >= 0.0);
        prop_assert_eq!(slack.kind == VerdictKind::Consistent, values[observed.index()] == top);
        if exact.kind == VerdictKind::Consistent {
            prop_assert_eq!(slack.kind, VerdictKind::Consistent);
        }
        let unique = values.iter().filter(|&&v| v == top).count() == 1;
        if unique {
            prop_assert_eq!(exact.kind, slack.kind);
        }
    }

    #[test]
    fn kl_vanishes_for_the_greedy_action(values in prop::array::uniform5(0.0f64..3.0), temperature in 0.01f64..10.0) {
        let g = argmax(&values);
        prop_assert!(kl_score(&values, g, temperature).abs() < 1e-12);
        for a in Action::ALL {
            prop_assert!(kl_score(&values, a, temperature) >= 0.0);
        }
    }

    #[test]
    fn f1_ignores_scale(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, k in 1u64..20) {
        let c = ConfusionCounts { tp, tn, fp, fn_ };
        prop_assert_eq!(f1(&c), f1(&c.scaled(k)));
    }

    #[test]
    fn classification_depends_only_on_beliefs(vs in verdicts(), tau in 0.0f64..=1.0) {
        let roles = [Role::Cooperative, Role::SelfInterested, Role::Cooperative];
        let mut ts = TrustState::new(AgentId(0), 3, 0.5).unwrap();
        for ok in vs {
            ts.advance();
            let v = if ok { Verdict::consistent(0.0) } else { Verdict::inconsistent(1.0) };
            ts.record(AgentId(1), &v).unwrap();
        }
        let received = vec![vec![AgentId(1), AgentId(2)]];
        let a = classify_step(std::slice::from_ref(&ts), &received, &roles, tau);
        let b = classify_step(&[ts.clone()], &received, &roles, tau);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a[0].total(), 2);
        prop_assert_eq!(a[0].fp, 0);
    }
}
