use agentrank::distance::{plan_distance, DistanceWeights};
use agentrank::label::{
    agreement_report, generate_dataset, grade_for, label_active_constraints, label_blackbox, LabelMethod,
    LabelerConfig, RankingDataset,
};
use agentrank::planner::{Plan, Planner};
use agentrank::scene::Scene;
use agentrank::sim::{generate_scenario, scripted_scenario, ScenarioConfig, ScriptedName};
use agentrank::Error;
use proptest::prelude::*;

fn scenes(seed: u64) -> Vec<Scene> {
    generate_scenario(&ScenarioConfig {
        seed,
        n_agents: 20,
        duration_s: 2.0,
        ..ScenarioConfig::default()
    })
    .unwrap()
}

fn designated(name: ScriptedName) -> (Scene, u32, u32) {
    let s = scripted_scenario(name).pop().unwrap();
    let meta = s.scripted.clone().unwrap();
    (s, meta.most_relevant, meta.non_interacting)
}

#[test]
fn nominal_plan_has_no_attributions() {
    for s in scenes(1).iter().step_by(5) {
        let p = Planner::default().plan(s, &[]).unwrap();
        assert!(p.attributions.is_empty());
        assert!(!p.infeasible);
        assert!(p.points.windows(2).all(|w| w[1].time_s > w[0].time_s));
        assert!(p.points.iter().all(|q| q.accel_mps2 == 0.0));
    }
}

#[test]
fn lead_brake_forces_deceleration() {
    let (s, lead, _) = designated(ScriptedName::LeadBrake);
    let planner = Planner::default();
    let nominal = planner.plan(&s, &[]).unwrap();
    let with_lead = planner.plan(&s, &[lead]).unwrap();
    assert!(with_lead.attribution(lead).unwrap() > 0.0);
    assert!(with_lead.points.last().unwrap().speed_mps < nominal.points.last().unwrap().speed_mps);
}

#[test]
fn parallel_car_changes_nothing() {
    let (s, _, parallel) = designated(ScriptedName::ParallelNoninteracting);
    let planner = Planner::default();
    let nominal = planner.plan(&s, &[]).unwrap();
    let with = planner.plan(&s, &[parallel]).unwrap();
    assert_eq!(with.points, nominal.points);
    assert_eq!(with.attribution(parallel), Some(0.0));
    assert_eq!(plan_distance(&nominal, &with, DistanceWeights::default()).unwrap(), 0.0);
}

#[test]
fn unknown_agent_in_subset() {
    let s = &scenes(2)[0];
    assert!(matches!(Planner::default().plan(s, &[4242]), Err(Error::Lookup(_))));
}

#[test]
fn plan_distance_needs_points() {
    let s = &scenes(2)[0];
    let p = Planner::default().plan(s, &[]).unwrap();
    assert!(matches!(
        plan_distance(&p, &Plan::from_points(vec![]), DistanceWeights::default()),
        Err(Error::Argument(_))
    ));
}

#[test]
fn thresholds_inclusive_at_upper_grade() {
    let cfg = LabelerConfig::default();
    assert_eq!(cfg.grade(cfg.t1_threshold), 2);
    assert_eq!(cfg.grade(cfg.t2_threshold), 1);
    assert_eq!(cfg.grade(0.0), 0);
    assert!(LabelerConfig {
        t1_threshold: 0.4,
        ..LabelerConfig::default()
    }
    .validate()
    .is_err());
}

#[test]
fn lead_brake_grades() {
    let (s, lead, far) = designated(ScriptedName::LeadBrake);
    for labels in [
        label_active_constraints(&s, &LabelerConfig::default()).unwrap(),
        label_blackbox(&s, &LabelerConfig::default()).unwrap(),
    ] {
        let g = |id| labels.iter().find(|l| l.agent_id == id).unwrap().grade;
        assert_eq!(g(lead), 2);
        assert_eq!(g(far), 0);
    }
}

#[test]
fn empty_scene_empty_labels() {
    let mut s = scenes(3).remove(0);
    s.agents.clear();
    assert!(label_blackbox(&s, &LabelerConfig::default()).unwrap().is_empty());
    assert!(label_active_constraints(&s, &LabelerConfig::default()).unwrap().is_empty());
}

#[test]
fn dataset_cardinality_and_bytes() {
    let all: Vec<Scene> = generate_scenario(&ScenarioConfig::default()).unwrap();
    let ds = generate_dataset(&all, &LabelerConfig::default()).unwrap();
    assert_eq!(ds.len(), 2000);
    assert_eq!(ds.grade_histogram().iter().sum::<usize>(), 2000);

    let bytes = |d: &RankingDataset| {
        let mut b = Vec::new();
        d.write_jsonl(&mut b).unwrap();
        b
    };
    let first = bytes(&ds);
    assert_eq!(first, bytes(&generate_dataset(&all, &LabelerConfig::default()).unwrap()));
    assert_eq!(RankingDataset::read_jsonl(first.as_slice()).unwrap(), ds);
}

#[test]
fn scripted_agreement_is_total_on_designated_agents() {
    let scripted: Vec<Scene> = ScriptedName::ALL.into_iter().flat_map(scripted_scenario).collect();
    let report = agreement_report(&scripted, &LabelerConfig::default()).unwrap();
    assert_eq!(report.designated_agreement(), Some(1.0));
    assert!(report.rows.iter().all(|r| r.designated == Some((2, 2))));
    let cfg = LabelerConfig {
        method: LabelMethod::Blackbox,
        ..LabelerConfig::default()
    };
    assert_eq!(generate_dataset(&scripted, &cfg).unwrap().len(), scripted.iter().map(|s| s.agents.len()).sum::<usize>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grade_monotone_in_change(a in 0.0f64..10.0, b in 0.0f64..10.0, t2 in 0.01f64..3.0, gap in 0.01f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let t1 = t2 + gap;
        prop_assert!(grade_for(lo, t1, t2) <= grade_for(hi, t1, t2));
        prop_assert!(grade_for(hi, t1, t2) <= 2);
    }

    #[test]
    fn plan_distance_is_a_symmetric_dissimilarity(seed in 0u64..500, tick in 0usize..20, pick in any::<prop::sample::Index>()) {
        let s = &scenes(seed)[tick];
        let ids: Vec<u32> = s.agent_ids().collect();
        let planner = Planner::default();
        let a = planner.plan(s, &[]).unwrap();
        let b = planner.plan(s, &[ids[pick.index(ids.len())]]).unwrap();
        let c = planner.plan(s, &ids).unwrap();
        let w = DistanceWeights::default();
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            let d = plan_distance(x, y, w).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, plan_distance(y, x, w).unwrap());
            prop_assert_eq!(plan_distance(x, x, w).unwrap(), 0.0);
        }
    }

    #[test]
    fn full_plan_respects_every_envelope(seed in 0u64..500, tick in 0usize..20) {
        let s = &scenes(seed)[tick];
        let ids: Vec<u32> = s.agent_ids().collect();
        let planner = Planner::default();
        let p = planner.plan(s, &ids).unwrap();
        prop_assume!(!p.infeasible);
        prop_assert_eq!(planner.violations(s, &p, &ids).unwrap(), Vec::<u32>::new());
        prop_assert!(p.attributions.iter().all(|a| a.delta >= 0.0 && ids.contains(&a.agent_id)));
    }
}
