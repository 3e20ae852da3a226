use agentrank::features::{extract_all, extract_engineered, heuristic_score, FEATURE_DIM};
use agentrank::geometry::RigidTransform;
use agentrank::label::LabeledAgent;
use agentrank::raster::{
    channel, labeled_pixels, render_label_image, render_stack, world_to_pixel, Encoding, RasterConfig, RasterStack,
    GRADE_INTENSITY,
};
use agentrank::scene::Scene;
use agentrank::sim::{generate_scenario, scripted_scenario, MapTemplate, ScenarioConfig, ScriptedName};
use agentrank::Error;
use proptest::prelude::*;

fn scene(seed: u64, tick: usize) -> Scene {
    let cfg = ScenarioConfig {
        seed,
        n_agents: 25,
        duration_s: 4.0,
        map: MapTemplate::Mixed,
        ..ScenarioConfig::default()
    };
    generate_scenario(&cfg).unwrap().swap_remove(tick)
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (-std::f64::consts::PI..std::f64::consts::PI, -500.0f64..500.0, -500.0f64..500.0)
        .prop_map(|(r, x, y)| RigidTransform::new(r, x, y))
}

#[test]
fn pixel_mapping_examples() {
    let cfg = RasterConfig::default();
    let s = scene(3, 10);
    let av = s.av.pose;
    assert_eq!(world_to_pixel(av.position(), &av, &cfg), Some((32, 32)));
    assert_eq!(world_to_pixel(av.to_world(10.0, 0.0), &av, &cfg), Some((24, 32)));
    assert_eq!(world_to_pixel(av.to_world(50.0, 0.0), &av, &cfg), None);
}

#[test]
fn features_are_finite_and_cnn_slots_default() {
    for seed in 0..5 {
        let s = scene(seed, 20);
        for fv in extract_all(&s) {
            assert_eq!(fv.len(), FEATURE_DIM);
            assert!(fv.iter().all(|v| v.is_finite()));
            assert!(fv[12..].iter().all(|&v| v == -1.0));
        }
    }
    let s = scene(0, 0);
    assert!(matches!(extract_engineered(&s, 9999), Err(Error::Lookup(_))));
}

#[test]
fn heuristic_prefers_constraining_agent_over_parallel_car() {
    for s in scripted_scenario(ScriptedName::ParallelNoninteracting) {
        let meta = s.scripted.as_ref().unwrap();
        let fvs = extract_all(&s);
        let ids: Vec<u32> = s.agent_ids().collect();
        let score = |id| heuristic_score(&fvs[ids.iter().position(|&x| x == id).unwrap()]);
        assert!(score(meta.most_relevant) > score(meta.non_interacting), "tick {}", s.tick);
    }
}

#[test]
fn no_agents_means_blank_agent_channels_and_label_image() {
    let mut s = scene(1, 5);
    s.agents.clear();
    let cfg = RasterConfig::default();
    let stack = render_stack(&s, &cfg);
    for c in channel::AGENT_HEADING..=channel::AGENT_BOXES {
        assert!(stack.channel(c).iter().all(|&b| b == 0));
    }
    let img = render_label_image(&[], &s, &cfg).unwrap();
    assert!(img.data.iter().all(|&b| b == 0));
}

#[test]
fn label_discs_only_around_agents() {
    let s = scene(2, 15);
    let cfg = RasterConfig::default();
    let labels: Vec<LabeledAgent> = s
        .agent_ids()
        .enumerate()
        .map(|(i, id)| LabeledAgent {
            agent_id: id,
            grade: (i % 3) as u8,
        })
        .collect();
    let img = render_label_image(&labels, &s, &cfg).unwrap();
    let centers = labeled_pixels(&labels, &s, &cfg).unwrap();
    let r = cfg.label_radius_px as i64;
    for row in 0..cfg.grid {
        for col in 0..cfg.grid {
            let v = img.get(row, col);
            let near = centers
                .iter()
                .filter(|((cr, cc), _)| (row as i64 - *cr as i64).pow(2) + (col as i64 - *cc as i64).pow(2) <= r * r)
                .map(|(_, g)| GRADE_INTENSITY[*g as usize])
                .max();
            assert_eq!(v, near.unwrap_or(0), "pixel ({row},{col})");
        }
    }
}

#[test]
fn stack_file_round_trip() {
    let stack = render_stack(&scene(4, 3), &RasterConfig::default());
    let mut buf = Vec::new();
    stack.write_to(&mut buf).unwrap();
    assert_eq!(RasterStack::read_from(buf.as_slice()).unwrap(), stack);
    assert!(matches!(RasterStack::read_from(&buf[..10]), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn features_ignore_rigid_motion(seed in 0u64..1000, tick in 0usize..40, tf in transform()) {
        let s = scene(seed, tick);
        let moved = s.transformed(&tf);
        for (a, b) in extract_all(&s).iter().zip(extract_all(&moved).iter()) {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "feature {}: {} vs {}", i, x, y);
            }
        }
    }

    #[test]
    fn raster_ignores_rigid_motion(seed in 0u64..1000, tick in 0usize..40, tf in transform()) {
        let s = scene(seed, tick);
        let cfg = RasterConfig::default();
        let a = render_stack(&s, &cfg);
        let b = render_stack(&s.transformed(&tf), &cfg);
        prop_assert!(a.data == b.data);
    }

    #[test]
    fn quantities_and_times_share_pixels(seed in 0u64..1000, tick in 0usize..40) {
        let stack = render_stack(&scene(seed, tick), &RasterConfig::default());
        let groups = [
            (channel::AV_TIME, [channel::AV_HEADING, channel::AV_VELOCITY, channel::AV_ACCEL]),
            (channel::AGENT_TIME, [channel::AGENT_HEADING, channel::AGENT_VELOCITY, channel::AGENT_ACCEL]),
        ];
        for (time, quantities) in groups {
            for (i, &t) in stack.channel(time).iter().enumerate() {
                for q in quantities {
                    prop_assert_eq!(t != 0, stack.channel(q)[i] != 0, "channel {} pixel {}", q, i);
                }
            }
        }
    }

    #[test]
    fn encoding_round_trip(lo in -50.0f64..50.0, span in 0.1f64..100.0, u in 0.0f64..=1.0) {
        let enc = Encoding::new(lo, lo + span);
        let v = lo + span * u;
        let byte = enc.encode(v);
        prop_assert!(byte >= 1);
        prop_assert!((enc.decode(byte).unwrap() - v).abs() <= enc.step());
    }

    #[test]
    fn pixels_move_with_the_reference(x in -39.0f64..39.0, y in -39.0f64..39.0, tf in transform()) {
        let cfg = RasterConfig::default();
        let s = scene(9, 0);
        let p = s.av.pose.to_world(x, y);
        let moved = tf.apply_pose(s.av.pose);
        let got = world_to_pixel(tf.apply_point(p), &moved, &cfg);
        let want = world_to_pixel(p, &s.av.pose, &cfg);
        prop_assert_eq!(got, want);
    }
}
