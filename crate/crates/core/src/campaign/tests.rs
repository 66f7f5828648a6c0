use super::*;
use crate::manager::Verdict;
use crate::netmodel::generate::reference_model;

fn small(mode: CampaignMode, seed: u64) -> CampaignConfig {
    CampaignConfig {
        mode,
        runs_per_type: 2,
        total_runs: 6,
        seed,
        ..CampaignConfig::default()
    }
}

fn wrong_runs(r: &CampaignResult) -> Vec<String> {
    r.runs
        .iter()
        .filter(|r| !r.correct)
        .map(|run| {
            let verdicts: Vec<String> = run
                .diagnoses
                .iter()
                .map(|d| {
                    d.diagnosis
                        .as_ref()
                        .map_or_else(|| format!("{:?}", d.error), |d| d.verdict.to_string())
                })
                .collect();
            let faults: Vec<String> = run.faults.iter().map(|f| f.to_string()).collect();
            format!("{faults:?} -> {verdicts:?}")
        })
        .collect()
}

#[test]
fn single_campaign_scores_every_run() {
    let r = run_single_campaign(reference_model(), &small(CampaignMode::Single, 5)).unwrap();
    assert_eq!(r.total, 20);
    assert_eq!(r.per_type.len(), 10);
    assert!(wrong_runs(&r).is_empty(), "{:?}", wrong_runs(&r));
    for run in &r.runs {
        assert_eq!(run.faults.len(), 1);
        assert_eq!(run.diagnoses.len(), 1);
    }
}

#[test]
fn double_campaign_diagnoses_both_faults() {
    let r = run_double_campaign(reference_model(), &small(CampaignMode::Double, 9)).unwrap();
    assert_eq!(r.total, 6);
    assert!(wrong_runs(&r).is_empty(), "{:?}", wrong_runs(&r));
    let net = Base::new(reference_model(), &small(CampaignMode::Double, 9))
        .unwrap()
        .net;
    for run in &r.runs {
        assert_eq!(run.diagnoses.len(), 2);
        let a = run.faults[0].footprint(&net);
        let b = run.faults[1].footprint(&net);
        assert!(a.iter().all(|c| !b.contains(c)), "faults share a location");
        let m: Vec<_> = run.diagnoses.iter().map(|d| d.matched).collect();
        assert!(m == [Some(0), Some(1)] || m == [Some(1), Some(0)]);
    }
    assert!(r.mean_primitives_first.is_some() && r.mean_primitives_second.is_some());
}

#[test]
fn same_config_gives_identical_results() {
    let mut cfg = small(CampaignMode::Single, 11);
    cfg.fault_types = vec![FaultType::SilentDropOnLink, FaultType::FIBDiscrepancy];
    let a = run_single_campaign(reference_model(), &cfg).unwrap();
    cfg.threads = 1;
    let b = run_single_campaign(reference_model(), &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn different_seeds_pick_different_locations() {
    let mut cfg = small(CampaignMode::Single, 1);
    cfg.fault_types = vec![FaultType::SilentDropInSwitch];
    cfg.runs_per_type = 4;
    let a = run_single_campaign(reference_model(), &cfg).unwrap();
    cfg.seed = 2;
    let b = run_single_campaign(reference_model(), &cfg).unwrap();
    let locs = |r: &CampaignResult| -> Vec<String> {
        r.runs.iter().map(|r| r.faults[0].to_string()).collect()
    };
    assert_ne!(locs(&a), locs(&b));
}

#[test]
fn wrong_verdict_is_scored_incorrect() {
    let base = Base::new(reference_model(), &small(CampaignMode::Single, 3)).unwrap();
    let fault = base.candidates[&FaultType::SilentDropInSwitch][0].clone();
    let mut trial = base
        .trial(&fault, &mut base.rng(0, 1))
        .unwrap()
        .expect("fault is noticed");
    let faults = vec![fault.clone()];
    let rec = base.diagnose(&mut trial.net, trial.report, &faults);
    let mut d = rec.diagnosis.expect("diagnosis");
    assert_eq!(score(&d, &faults), Some(0));
    let FaultLocation::Switch(s) = fault.location else {
        panic!("switch fault")
    };
    let other = (0..base.net.model.topology.switches.len() as u32)
        .map(SwitchId)
        .find(|&x| x != s)
        .unwrap();
    d.verdict = Verdict::FaultySwitch(other);
    assert_eq!(score(&d, &faults), None);
    d.verdict = Verdict::NoFaultFound;
    assert_eq!(score(&d, &faults), None);
    d.verdict = Verdict::Inconclusive("test".into());
    assert_eq!(score(&d, &faults), None);
}

#[test]
fn empty_type_list_is_rejected() {
    let mut cfg = small(CampaignMode::Single, 1);
    cfg.fault_types.clear();
    assert!(matches!(
        run_single_campaign(reference_model(), &cfg),
        Err(CampaignError::NoTypes)
    ));
}

#[test]
fn fault_without_any_effect_exhausts_retries() {
    let mut cfg = small(CampaignMode::Single, 1);
    cfg.fault_types = vec![FaultType::SilentDropInSwitch];
    cfg.report_wait = SimTime::from_millis(1);
    cfg.max_discards = 2;
    match run_single_campaign(reference_model(), &cfg) {
        Err(e @ CampaignError::NoReports(FaultType::SilentDropInSwitch, 3)) => {
            assert!(e.to_string().contains("SilentDropInSwitch"));
        }
        other => panic!("expected NoReports, got {:?}", other.map(|r| r.total)),
    }
}

#[test]
fn results_round_trip_through_json() {
    let mut cfg = small(CampaignMode::Single, 4);
    cfg.fault_types = vec![FaultType::IncorrectForwardingDrop];
    let r = run_single_campaign(reference_model(), &cfg).unwrap();
    let back: CampaignResult = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back.runs, r.runs);
    assert!(r.summary_table().contains("IncorrectForwardingDrop"));
}

#[test]
fn ttl_budget_matches_expected_path_length() {
    let base = Base::new(reference_model(), &small(CampaignMode::Single, 1)).unwrap();
    let h7 = base.net.host(HostId(7));
    let h3_ip = base.net.host(HostId(3)).ip;
    let len = base.oracle.expected_path(HostId(7), HostId(3)).unwrap()[0].len();
    assert_eq!(h7.ttl_budget.get(&h3_ip).copied(), Some(len as u8));
}

/// Every fault type at every location on an expected host path: either the
/// pingmesh never notices it, or the diagnosis names it.
#[test]
fn every_location_is_diagnosed() {
    let base = Base::new(reference_model(), &CampaignConfig::single(21)).unwrap();
    let all: Vec<FaultSpec> = base
        .candidates
        .values()
        .flat_map(|c| c.iter().cloned())
        .collect();
    let outcomes = parallel(base.config.threads, all.len(), |i| {
        let spec = all[i].clone().with_stream(i as u64);
        let mut rng = base.rng(i as u32, 0xe0);
        let Some(mut t) = base.trial(&spec, &mut rng)? else {
            return Ok((spec, None));
        };
        let rec = base.diagnose(&mut t.net, t.report, std::slice::from_ref(&spec));
        Ok((spec, Some(rec)))
    })
    .unwrap();
    let mut noticed = BTreeMap::<FaultType, u32>::new();
    let mut wrong = Vec::new();
    for (spec, rec) in &outcomes {
        let Some(rec) = rec else { continue };
        *noticed.entry(spec.kind).or_default() += 1;
        if !rec.correct {
            let v = rec.diagnosis.as_ref().map(|d| d.verdict.to_string());
            wrong.push(format!("{spec} -> {v:?} {:?}", rec.error));
        }
    }
    println!("{} locations, noticed per type {noticed:?}", outcomes.len());
    assert!(wrong.is_empty(), "{wrong:#?}");
    for k in FaultType::CAMPAIGN {
        assert!(
            noticed.get(&k).copied().unwrap_or(0) > 0,
            "{k} never noticed"
        );
    }
}
