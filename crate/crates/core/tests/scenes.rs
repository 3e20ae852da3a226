use agentrank::geometry::Pose;
use agentrank::scene::{read_scenes, write_scenes, AgentKind, AgentState};
use agentrank::sim::{
    generate_scenario, scripted_scenario, step_agent, BehaviorMix, MapTemplate, Motion, ScenarioConfig, ScriptedName,
};
use agentrank::Error;
use proptest::prelude::*;

fn car(speed: f64, accel: f64) -> AgentState {
    AgentState::new(1, AgentKind::Car, Pose::new(0.0, 0.0, 0.0), speed, accel, 4.5, 1.9)
}

#[test]
fn empty_world_gives_one_scene_per_tick() {
    let cfg = ScenarioConfig {
        n_agents: 0,
        duration_s: 1.0,
        ..ScenarioConfig::default()
    };
    let scenes = generate_scenario(&cfg).unwrap();
    assert_eq!(scenes.len(), 10);
    assert!(scenes.iter().all(|s| s.agents.is_empty()));
}

#[test]
fn default_run_shape() {
    let scenes = generate_scenario(&ScenarioConfig::default()).unwrap();
    assert_eq!(scenes.len(), 100);
    for s in &scenes {
        assert_eq!(s.agents.len(), 20);
        s.validate().unwrap();
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = ScenarioConfig {
        map: MapTemplate::Mixed,
        ..ScenarioConfig::default()
    };
    let bytes = |c: &ScenarioConfig| {
        let mut out = Vec::new();
        write_scenes(&mut out, &generate_scenario(c).unwrap()).unwrap();
        out
    };
    let a = bytes(&cfg);
    assert_eq!(a, bytes(&cfg));
    assert_ne!(a, bytes(&ScenarioConfig { seed: 8, ..cfg }));
}

#[test]
fn jsonl_round_trip() {
    let mut scenes = generate_scenario(&ScenarioConfig {
        duration_s: 2.0,
        ..ScenarioConfig::default()
    })
    .unwrap();
    scenes.extend(scripted_scenario(ScriptedName::DoubleLaneChange));
    let mut buf = Vec::new();
    write_scenes(&mut buf, &scenes).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), scenes.len());
    assert_eq!(read_scenes(buf.as_slice()).unwrap(), scenes);
    assert!(read_scenes(&b"{\"scenario_id\": 1}\n"[..]).is_err());
}

#[test]
fn invalid_configs() {
    let base = ScenarioConfig::default();
    for bad in [
        ScenarioConfig { dt_s: 0.0, ..base.clone() },
        ScenarioConfig { dt_s: -0.1, ..base.clone() },
        ScenarioConfig { duration_s: -1.0, ..base.clone() },
        ScenarioConfig {
            behavior_mix: BehaviorMix {
                parked: 0.5,
                ..BehaviorMix::default()
            },
            ..base.clone()
        },
    ] {
        assert!(matches!(generate_scenario(&bad), Err(Error::Config(_))), "{bad:?}");
    }
}

#[test]
fn kinematic_steps() {
    let s = step_agent(&car(10.0, 0.0), Motion::Straight, 1.0);
    assert!((s.pose.x - 10.0).abs() < 1e-12 && s.pose.y.abs() < 1e-12);

    let s = step_agent(&car(1.0, -2.0), Motion::Straight, 1.0);
    assert_eq!(s.speed_mps, 0.0);

    let s = step_agent(&car(10.0, 2.0), Motion::Straight, 0.5);
    assert!((s.speed_mps - 11.0).abs() < 1e-12);
    assert!((s.pose.x - 5.25).abs() < 1e-12);
}

#[test]
fn scripted_designations() {
    for name in ScriptedName::ALL {
        for s in scripted_scenario(name) {
            let meta = s.scripted.as_ref().expect("metadata");
            assert_eq!(meta.name, name.as_str());
            assert_ne!(meta.most_relevant, meta.non_interacting);
            assert!(s.agent(meta.most_relevant).is_ok());
            assert!(s.agent(meta.non_interacting).is_ok());
        }
    }
    // the parallel car in the parallel scenario never crosses the AV's lane
    for s in scripted_scenario(ScriptedName::ParallelNoninteracting) {
        let meta = s.scripted.as_ref().unwrap();
        let car = s.agent(meta.non_interacting).unwrap();
        let lateral = |p: agentrank::geometry::Point| s.av.pose.to_local(p).1.abs();
        assert!(lateral(car.state.position()) > 2.5);
        assert!(car.predictions.iter().all(|p| lateral(p.state.position()) > 2.5));
    }
}

fn mix() -> impl Strategy<Value = BehaviorMix> {
    prop::array::uniform5(0.0f64..1.0).prop_filter("some weight", |w| w.iter().sum::<f64>() > 0.1).prop_map(|w| {
        let total: f64 = w.iter().sum();
        // the last fraction absorbs rounding so the sum is exactly one
        let f: Vec<f64> = w.iter().map(|x| x / total).collect();
        BehaviorMix {
            constant_accel: f[0],
            lane_follow: f[1],
            cut_in: f[2],
            crossing: f[3],
            parked: 1.0 - f[0] - f[1] - f[2] - f[3],
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_scenes_hold_their_invariants(
        seed in any::<u64>(),
        n_agents in 0usize..30,
        map in prop::sample::select(vec![MapTemplate::Straight, MapTemplate::Intersection, MapTemplate::Mixed]),
        behavior_mix in mix(),
        history in 0.0f64..4.0,
        prediction in 0.0f64..4.0,
    ) {
        let cfg = ScenarioConfig {
            seed,
            n_agents,
            duration_s: 3.0,
            map,
            behavior_mix,
            history_horizon_s: history,
            prediction_horizon_s: prediction,
            ..ScenarioConfig::default()
        };
        let scenes = generate_scenario(&cfg).unwrap();
        prop_assert_eq!(scenes.len(), 30);
        for (i, s) in scenes.iter().enumerate() {
            prop_assert_eq!(s.tick as usize, i);
            prop_assert_eq!(s.agents.len(), n_agents);
            prop_assert!(s.validate().is_ok(), "{:?}", s.validate());
            for t in &s.agents {
                prop_assert!(t.history.iter().all(|h| h.time_s >= s.timestamp_s - history - 1e-9));
                prop_assert!(t.predictions.iter().all(|p| p.time_s <= s.timestamp_s + prediction + 1e-9));
            }
        }
        prop_assert_eq!(generate_scenario(&cfg).unwrap(), scenes);
    }

    #[test]
    fn steps_keep_speed_non_negative(speed in 0.0f64..30.0, accel in -8.0f64..4.0, dt in 0.01f64..2.0, yaw in -0.5f64..0.5) {
        for motion in [Motion::Straight, Motion::Turn { yaw_rate: yaw }, Motion::Parked] {
            let next = step_agent(&car(speed, accel), motion, dt);
            prop_assert!(next.speed_mps >= 0.0);
            prop_assert!(next.check().is_ok());
            let moved = next.position().distance(car(speed, accel).position());
            prop_assert!(moved <= speed * dt + 0.5 * accel.max(0.0) * dt * dt + 1e-9);
        }
    }
}
