//! Fault-injection campaigns: inject faults at random locations, wait for a
//! pingmesh failure report, diagnose it and score the verdict.

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::RouteSource;
use crate::dataplane::RouteOrigin;
use crate::faults::{FaultInjector, FaultLocation, FaultSpec, FaultType};
use crate::manager::{Diagnosis, FailureReport, Manager, ManagerConfig, ManagerError, Symptom};
use crate::netmodel::{HostId, LinkId, NetworkModel, SimTime, SwitchId};
use crate::oracle::{expected_state, ExpectedState, OracleError};
use crate::simkernel::{mix64, Network, PingmeshReport, SimConfig, SimError, StopCondition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignMode {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: CampaignMode,
    pub fault_types: Vec<FaultType>,
    /// Scored runs per type in single mode.
    pub runs_per_type: u32,
    /// Scored runs in double mode.
    pub total_runs: u32,
    pub seed: u64,
    pub probe_interval: SimTime,
    pub loss_threshold: u32,
    /// How long a run waits for a pingmesh report after injecting.
    pub report_wait: SimTime,
    /// How long a double run waits for the report of the fault left after
    /// the first repair. That fault was already noticed on its own, so
    /// this only bounds intermittent faults that are slow to show.
    pub repair_report_wait: SimTime,
    /// Time given to the control plane after an injection or a repair.
    pub settle: SimTime,
    /// Injections without a report allowed per scored run before the
    /// campaign gives up on a type.
    pub max_discards: u32,
    /// Worker threads; does not affect results.
    #[serde(skip, default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            mode: CampaignMode::Single,
            fault_types: FaultType::CAMPAIGN.to_vec(),
            runs_per_type: 10,
            total_runs: 100,
            seed: 1,
            probe_interval: SimTime::from_secs(1),
            loss_threshold: 3,
            report_wait: SimTime::from_secs(30),
            repair_report_wait: SimTime::from_secs(600),
            settle: SimTime::from_secs(3),
            max_discards: 20,
            threads: default_threads(),
        }
    }
}

impl CampaignConfig {
    pub fn single(seed: u64) -> Self {
        CampaignConfig {
            seed,
            ..CampaignConfig::default()
        }
    }

    pub fn double(seed: u64) -> Self {
        CampaignConfig {
            mode: CampaignMode::Double,
            seed,
            ..CampaignConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0} produced no failure report after {1} injections")]
    NoReports(FaultType, u32),
    #[error("{0} cannot be injected anywhere in this topology")]
    NotInjectable(FaultType),
    #[error("no fault types configured")]
    NoTypes,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("diagnosis failed: {0}")]
    Manager(#[from] ManagerError),
}

/// One diagnosis inside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRecord {
    pub report: FailureReport,
    pub reporter: HostId,
    pub target: HostId,
    pub diagnosis: Option<Diagnosis>,
    /// Set when the manager gave up without consensus.
    pub error: Option<String>,
    /// Injected fault the verdict names, by position in `faults`.
    pub matched: Option<usize>,
    pub correct: bool,
    pub primitive_count: usize,
    pub used_fault_report: bool,
    pub used_disconnected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u32,
    pub faults: Vec<FaultSpec>,
    pub diagnoses: Vec<DiagnosisRecord>,
    pub correct: bool,
    /// Injections tried before this one that produced no report.
    pub discarded: Vec<FaultSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub fault_type: FaultType,
    pub runs: u32,
    pub correct: u32,
    pub used_fault_report: u32,
    pub used_disconnected: u32,
    pub mean_primitives: f64,
    pub discarded: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub topology_fingerprint: u64,
    pub runs: Vec<RunRecord>,
    pub per_type: Vec<TypeSummary>,
    pub correct: u32,
    pub total: u32,
    /// Double mode: mean primitive count of the first and second diagnoses.
    pub mean_primitives_first: Option<f64>,
    pub mean_primitives_second: Option<f64>,
}

impl CampaignResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("campaign results serialize")
    }

    /// Per-type table: runs, correct verdicts, runs located by a fault
    /// report, runs that needed the disconnected-switch procedure and mean
    /// primitive count.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<34} {:>5} {:>8} {:>8} {:>6} {:>11} {:>9}",
            "fault type", "runs", "correct", "reports", "disc", "primitives", "discarded"
        );
        for t in &self.per_type {
            let _ = writeln!(
                out,
                "{:<34} {:>5} {:>8} {:>8} {:>6} {:>11.2} {:>9}",
                t.fault_type.to_string(),
                t.runs,
                t.correct,
                t.used_fault_report,
                t.used_disconnected,
                t.mean_primitives,
                t.discarded
            );
        }
        let _ = writeln!(out, "correct runs: {}/{}", self.correct, self.total);
        if let (Some(a), Some(b)) = (self.mean_primitives_first, self.mean_primitives_second) {
            let _ = writeln!(
                out,
                "mean primitives: first diagnosis {a:.2}, second diagnosis {b:.2}"
            );
        }
        out
    }
}

/// Sets every host's probe TTL to the switch count of its expected path, so
/// that any detour or extra decrement ends in a TTL drop.
pub fn apply_ttl_budgets(net: &mut Network, oracle: &ExpectedState) -> Result<(), OracleError> {
    let hosts: Vec<(HostId, Ipv4Addr)> = net.hosts.iter().map(|h| (h.id, h.ip)).collect();
    for &(a, _) in &hosts {
        for &(b, ip) in &hosts {
            if a == b {
                continue;
            }
            if let Some(p) = oracle.expected_path(a, b)?.first() {
                net.host_mut(a)
                    .ttl_budget
                    .insert(ip, p.len().min(255) as u8);
            }
        }
    }
    Ok(())
}

/// Host pairs, excluding the diagnosis host, with their expected paths.
struct Paths {
    pairs: Vec<(HostId, HostId, Vec<SwitchId>)>,
}

impl Paths {
    fn new(net: &Network, oracle: &ExpectedState) -> Result<Self, OracleError> {
        let hosts: Vec<HostId> = net
            .hosts
            .iter()
            .filter(|h| !h.diagnosis)
            .map(|h| h.id)
            .collect();
        let mut pairs = Vec::new();
        for &a in &hosts {
            for &b in &hosts {
                if a == b {
                    continue;
                }
                if let Some(p) = oracle.expected_path(a, b)?.into_iter().next() {
                    pairs.push((a, b, p));
                }
            }
        }
        Ok(Paths { pairs })
    }
}

/// Every location on some expected host-to-host path where `kind` can be
/// injected, in a deterministic order.
pub fn candidate_faults(
    kind: FaultType,
    net: &Network,
    oracle: &ExpectedState,
) -> Result<Vec<FaultSpec>, OracleError> {
    let paths = Paths::new(net, oracle)?;
    Ok(candidates(kind, net, oracle, &paths))
}

fn candidates(
    kind: FaultType,
    net: &Network,
    oracle: &ExpectedState,
    paths: &Paths,
) -> Vec<FaultSpec> {
    use FaultType::*;
    let mut out: Vec<FaultSpec> = Vec::new();
    let link = |a: SwitchId, b: SwitchId| -> Option<LinkId> {
        Some(net.model.topology.link_between(a, b)?.id)
    };
    let learned_from = |x: SwitchId, p, n: SwitchId| {
        oracle
            .switch(x)
            .ok()
            .and_then(|e| e.rib.get(&p))
            .is_some_and(|r| r.source == RouteSource::Session(n))
    };
    for (_, b, path) in &paths.pairs {
        let dst = net.host(*b).ip;
        for (i, &s) in path.iter().enumerate() {
            let next = path.get(i + 1).copied();
            let bgp_prefix = oracle
                .fib_lookup(s, dst)
                .ok()
                .flatten()
                .filter(|e| e.origin == RouteOrigin::Bgp)
                .map(|e| e.prefix);
            let mut found = Vec::new();
            match kind {
                SilentDropInSwitch
                | IncorrectDecrementTTL
                | PacketPayloadCorruptionInSwitch
                | RoutingDaemonCrash
                | AgentCrash
                | SwitchCrash => found.push(FaultSpec::new(kind, FaultLocation::Switch(s))),
                SilentDropOnLink | CorruptionOnLinkIP | LinkDown => {
                    if let Some(l) = next.and_then(|n| link(s, n)) {
                        found.push(FaultSpec::new(kind, FaultLocation::Link(l)));
                    }
                }
                IncorrectForwardingDrop | FIBDiscrepancy => {
                    if let Some(p) = bgp_prefix {
                        found.push(FaultSpec::new(kind, FaultLocation::Switch(s)).with_prefix(p));
                    }
                }
                IngressBgpUpdateModification | EgressBgpUpdateModification => {
                    if let (Some(p), Some(n)) = (bgp_prefix, next) {
                        if learned_from(s, p, n) {
                            let (switch, peer) = if kind == IngressBgpUpdateModification {
                                (s, n)
                            } else {
                                (n, s)
                            };
                            found.push(
                                FaultSpec::new(kind, FaultLocation::Session { switch, peer })
                                    .with_prefix(p),
                            );
                        }
                    }
                }
                BgpNeighborMissing => {
                    if let Some(n) = next.filter(|&n| net.model.config(s).session(n).is_some()) {
                        for (switch, peer) in [(s, n), (n, s)] {
                            found.push(FaultSpec::new(
                                kind,
                                FaultLocation::Session { switch, peer },
                            ));
                        }
                    }
                }
            }
            for f in found {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
    }
    out
}

/// A network with a fault that the pingmesh has noticed.
struct Trial {
    net: Network,
    injector: FaultInjector,
    handle: crate::faults::FaultHandle,
    report: PingmeshReport,
}

/// Shared, immutable inputs of every run.
struct Base {
    net: Network,
    oracle: Arc<ExpectedState>,
    candidates: BTreeMap<FaultType, Vec<FaultSpec>>,
    config: CampaignConfig,
}

impl Base {
    fn new(model: NetworkModel, config: &CampaignConfig) -> Result<Self, CampaignError> {
        let mut sim = SimConfig {
            seed: config.seed,
            ..SimConfig::default()
        };
        sim.pingmesh.interval = config.probe_interval;
        sim.pingmesh.loss_threshold = config.loss_threshold;
        let mut net = Network::from_model(model, sim);
        net.run_until(StopCondition::Quiescence)?;
        let oracle = expected_state(&net.model)?;
        apply_ttl_budgets(&mut net, &oracle)?;
        let paths = Paths::new(&net, &oracle)?;
        let candidates = config
            .fault_types
            .iter()
            .map(|&k| (k, candidates(k, &net, &oracle, &paths)))
            .collect();
        Ok(Base {
            net,
            oracle,
            candidates,
            config: config.clone(),
        })
    }

    fn rng(&self, run: u32, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix64(self.config.seed ^ mix64(u64::from(run) << 8 ^ salt)))
    }

    /// Runs the pingmesh for the report wait, then picks one report at
    /// random among all received. If none arrived, keeps going until the
    /// first one or until `limit`.
    fn await_report(
        &self,
        net: &mut Network,
        rng: &mut ChaCha8Rng,
        limit: SimTime,
    ) -> Result<Option<PingmeshReport>, CampaignError> {
        let start = net.now;
        let window = start + self.config.report_wait.min(limit);
        let deadline = start + limit;
        while net.now < deadline && (net.now < window || net.pingmesh_reports.is_empty()) {
            let step = (net.now + self.config.probe_interval).min(deadline);
            net.run_until(StopCondition::Time(step))?;
        }
        Ok(net.pingmesh_reports.choose(rng).copied())
    }

    /// Injects `spec` into a fresh copy of the network and checks that the
    /// pingmesh notices it.
    fn trial(
        &self,
        spec: &FaultSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Trial>, CampaignError> {
        let mut net = self.net.clone();
        let mut injector = FaultInjector::new();
        let Ok(handle) = injector.inject(&mut net, spec.clone()) else {
            return Ok(None);
        };
        net.start_pingmesh();
        Ok(self.await_report(&mut net, rng, self.config.report_wait)?.map(|report| Trial {
            net,
            injector,
            handle,
            report,
        }))
    }

    fn diagnose(
        &self,
        net: &mut Network,
        r: PingmeshReport,
        faults: &[FaultSpec],
    ) -> DiagnosisRecord {
        let report = FailureReport {
            symptom: Symptom::Unreachable,
            ..FailureReport::between_hosts(net, r.src, r.dst)
        };
        let outcome =
            Manager::new(net, Arc::clone(&self.oracle), ManagerConfig::default()).diagnose(&report);
        let (diagnosis, error) = match outcome {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let matched = diagnosis.as_ref().and_then(|d| score(d, faults));
        DiagnosisRecord {
            report,
            reporter: r.src,
            target: r.dst,
            matched,
            correct: matched.is_some(),
            primitive_count: diagnosis.as_ref().map_or(0, |d| d.primitive_count),
            used_fault_report: diagnosis.as_ref().is_some_and(|d| d.used_fault_report),
            used_disconnected: diagnosis.as_ref().is_some_and(|d| d.used_disconnected),
            diagnosis,
            error,
        }
    }

    /// Draws faults until one passes the trial, up to the discard cap.
    fn draw(
        &self,
        kind: FaultType,
        rng: &mut ChaCha8Rng,
        discarded: &mut Vec<FaultSpec>,
        avoid: Option<&FaultSpec>,
    ) -> Result<(FaultSpec, Trial), CampaignError> {
        for _ in 0..=self.config.max_discards {
            let spec = self
                .candidates
                .get(&kind)
                .and_then(|c| c.choose(rng))
                .ok_or(CampaignError::NotInjectable(kind))?
                .clone()
                .with_stream(rng.gen());
            if let Some(other) = avoid {
                let mine = spec.footprint(&self.net);
                let theirs = other.footprint(&self.net);
                if mine.iter().any(|c| theirs.contains(c)) {
                    continue;
                }
            }
            if let Some(t) = self.trial(&spec, rng)? {
                return Ok((spec, t));
            }
            discarded.push(spec);
        }
        Err(CampaignError::NoReports(kind, self.config.max_discards + 1))
    }

    fn single_run(&self, index: u32, kind: FaultType) -> Result<RunRecord, CampaignError> {
        let mut rng = self.rng(index, kind as u64 + 1);
        let mut discarded = Vec::new();
        let (spec, mut trial) = self.draw(kind, &mut rng, &mut discarded, None)?;
        let faults = vec![spec];
        let diagnoses = vec![self.diagnose(&mut trial.net, trial.report, &faults)];
        trial
            .injector
            .revert(&mut trial.net, trial.handle)
            .expect("active");
        let correct = diagnoses.first().is_some_and(|d| d.correct);
        Ok(RunRecord {
            index,
            faults,
            diagnoses,
            correct,
            discarded,
        })
    }

    fn double_run(&self, index: u32) -> Result<RunRecord, CampaignError> {
        let mut rng = self.rng(index, 0xd0);
        let types = &self.config.fault_types;
        let k1 = *types.choose(&mut rng).ok_or(CampaignError::NoTypes)?;
        let k2 = *types.choose(&mut rng).ok_or(CampaignError::NoTypes)?;
        let mut discarded = Vec::new();
        let (f1, _) = self.draw(k1, &mut rng, &mut discarded, None)?;
        let (f2, _) = self.draw(k2, &mut rng, &mut discarded, Some(&f1))?;
        let mut net = self.net.clone();
        let mut inj = FaultInjector::new();
        let handles = [
            inj.inject(&mut net, f1.clone()).expect("validated"),
            inj.inject(&mut net, f2.clone())
                .expect("disjoint from the first"),
        ];
        let faults = vec![f1, f2];
        net.start_pingmesh();
        let mut diagnoses = Vec::new();
        if let Some(r) = self.await_report(&mut net, &mut rng, self.config.report_wait)? {
            let first = self.diagnose(&mut net, r, &faults);
            let fixed = first.matched.unwrap_or(0);
            diagnoses.push(first);
            inj.revert(&mut net, handles[fixed]).expect("active");
            net.advance(self.config.settle)?;
            net.reset_pingmesh();
            let wait = self.config.repair_report_wait;
            if let Some(r) = self.await_report(&mut net, &mut rng, wait)? {
                let mut second = self.diagnose(&mut net, r, &faults);
                second.correct = second.matched == Some(1 - fixed);
                diagnoses.push(second);
            }
        }
        let correct = diagnoses.len() == 2 && diagnoses.iter().all(|d| d.correct);
        Ok(RunRecord {
            index,
            faults,
            diagnoses,
            correct,
            discarded,
        })
    }
}

/// The injected fault a diagnosis names, by position in `faults`.
pub fn score(d: &Diagnosis, faults: &[FaultSpec]) -> Option<usize> {
    faults
        .iter()
        .position(|f| d.verdict.names(f.location.culprit()))
}

/// Runs `jobs` on up to `threads` threads, keeping input order.
fn parallel<T: Send>(
    threads: usize,
    jobs: usize,
    f: impl Fn(usize) -> Result<T, CampaignError> + Sync,
) -> Result<Vec<T>, CampaignError> {
    let threads = threads.clamp(1, jobs.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T, CampaignError>>> = (0..jobs).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let r = f(i);
                results.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn run_single_campaign(
    model: NetworkModel,
    config: &CampaignConfig,
) -> Result<CampaignResult, CampaignError> {
    if config.fault_types.is_empty() {
        return Err(CampaignError::NoTypes);
    }
    let base = Base::new(model, config)?;
    let per = config.runs_per_type.max(1) as usize;
    let jobs = config.fault_types.len() * per;
    let runs = parallel(config.threads, jobs, |i| {
        base.single_run(i as u32, config.fault_types[i / per])
    })?;
    Ok(finish(&base, runs))
}

pub fn run_double_campaign(
    model: NetworkModel,
    config: &CampaignConfig,
) -> Result<CampaignResult, CampaignError> {
    if config.fault_types.is_empty() {
        return Err(CampaignError::NoTypes);
    }
    let base = Base::new(model, config)?;
    let runs = parallel(config.threads, config.total_runs.max(1) as usize, |i| {
        base.double_run(i as u32)
    })?;
    Ok(finish(&base, runs))
}

pub fn run_campaign(
    model: NetworkModel,
    config: &CampaignConfig,
) -> Result<CampaignResult, CampaignError> {
    match config.mode {
        CampaignMode::Single => run_single_campaign(model, config),
        CampaignMode::Double => run_double_campaign(model, config),
    }
}

fn mean(xs: impl Iterator<Item = usize>) -> Option<f64> {
    let v: Vec<usize> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
}

fn finish(base: &Base, runs: Vec<RunRecord>) -> CampaignResult {
    let mut per_type: BTreeMap<FaultType, (TypeSummary, Vec<usize>)> = BTreeMap::new();
    for r in &runs {
        for d in &r.diagnoses {
            let Some(i) = d
                .matched
                .or(if r.faults.len() == 1 { Some(0) } else { None })
            else {
                continue;
            };
            let kind = r.faults[i].kind;
            let (t, prims) = per_type
                .entry(kind)
                .or_insert_with(|| (empty_summary(kind), Vec::new()));
            t.runs += 1;
            t.correct += u32::from(d.correct);
            t.used_fault_report += u32::from(d.used_fault_report);
            t.used_disconnected += u32::from(d.used_disconnected);
            prims.push(d.primitive_count);
        }
        if r.diagnoses.is_empty() && r.faults.len() == 1 {
            let kind = r.faults[0].kind;
            per_type
                .entry(kind)
                .or_insert_with(|| (empty_summary(kind), Vec::new()))
                .0
                .runs += 1;
        }
        for f in &r.discarded {
            per_type
                .entry(f.kind)
                .or_insert_with(|| (empty_summary(f.kind), Vec::new()))
                .0
                .discarded += 1;
        }
    }
    let per_type = per_type
        .into_values()
        .map(|(mut t, prims)| {
            t.mean_primitives = mean(prims.into_iter()).unwrap_or(0.0);
            t
        })
        .collect();
    let double = base.config.mode == CampaignMode::Double;
    let nth = |n: usize| {
        mean(
            runs.iter()
                .filter_map(|r| r.diagnoses.get(n))
                .map(|d| d.primitive_count),
        )
    };
    CampaignResult {
        config: base.config.clone(),
        topology_fingerprint: base.net.model.fingerprint(),
        correct: runs.iter().filter(|r| r.correct).count() as u32,
        total: runs.len() as u32,
        mean_primitives_first: if double { nth(0) } else { None },
        mean_primitives_second: if double { nth(1) } else { None },
        per_type,
        runs,
    }
}

fn empty_summary(kind: FaultType) -> TypeSummary {
    TypeSummary {
        fault_type: kind,
        runs: 0,
        correct: 0,
        used_fault_report: 0,
        used_disconnected: 0,
        mean_primitives: 0.0,
        discarded: 0,
    }
}
