//! The per-slot closed loop binding planning, control and scheduling.

use crate::base::{CovMatrix, Mat6, SimRng, UavState, Vec3, Vec6};
use crate::controller::{buffer_execute, stmpc_length, ControlPacket, MpcSolver, NisScale, PpcBuffer, TriggerPolicy};
use crate::dynamics::{collision_check, step, PlantModel};
use crate::error::{Error, Result};
use crate::planner::{decompose_regions, plan_path, refine_trajectory, Plan, PlanError, ReferenceTrajectory, RegionGraph};
use crate::radio::{build_radio_map, handover_count, packet_outcome, RadioMap};
use crate::scheduler::{reset_to_report, schedule_slot, update_beliefs, SlotSchedule, UavContext};

use super::config::{Scenario, UavSpec};

#[derive(Debug, Clone)]
pub struct PlannedUav {
    pub spec: UavSpec,
    pub plan: Plan,
    pub reference: ReferenceTrajectory,
}

/// Scenario with its radio map, region graph and per-UAV references.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub map: RadioMap,
    pub graph: RegionGraph,
    pub uavs: Vec<PlannedUav>,
}

pub fn plan_uav(scenario: &Scenario, map: &RadioMap, graph: &RegionGraph, spec: &UavSpec) -> Result<PlannedUav, PlanError> {
    let cfg = &scenario.config.planner;
    let plan = plan_path(graph, map, &spec.start, &spec.goal, &cfg.weights)?;
    let reference = refine_trajectory(&plan.waypoints, &scenario.plant(), cfg.cruise_speed, cfg.merge_distance)?;
    Ok(PlannedUav {
        spec: *spec,
        plan,
        reference,
    })
}

impl Prepared {
    /// Build the map and plan every UAV of `fleet`; any failed plan aborts.
    pub fn new(scenario: &Scenario, fleet: &[UavSpec]) -> Result<Self> {
        let map = build_radio_map(&scenario.config.environment, scenario.config.radio.gamma_th_db);
        let graph = decompose_regions(&map);
        let uavs = fleet
            .iter()
            .enumerate()
            .map(|(i, spec)| plan_uav(scenario, &map, &graph, spec).map_err(|source| Error::UavPlan { uav: i, source }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scenario: scenario.clone(),
            map,
            graph,
            uavs,
        })
    }

    /// Slots simulated when the scenario does not fix a horizon.
    pub fn default_horizon(&self, n: usize) -> u64 {
        self.scenario.config.horizon_slots.unwrap_or_else(|| {
            let longest = self.uavs.iter().take(n).map(|u| u.reference.len()).max().unwrap_or(0);
            longest as u64 + self.scenario.config.tail_slots
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub policy: TriggerPolicy,
    /// Grants per slot.
    pub m: usize,
    pub seed: u64,
    /// Number of UAVs taken from the front of the prepared fleet.
    pub n: usize,
    pub horizon: u64,
}

impl RunSpec {
    /// The scenario's own policy, grant budget, seed and full fleet.
    pub fn from_scenario(prep: &Prepared) -> Self {
        let c = &prep.scenario.config;
        Self {
            policy: c.controller.policy,
            m: c.scheduler.m,
            seed: c.seed,
            n: prep.uavs.len(),
            horizon: prep.default_horizon(prep.uavs.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub ref_position: Vec3,
    pub error_m: f64,
    pub sinr_db: f64,
    pub serving_bs: Option<u32>,
    pub aoi: u64,
    pub input: Vec3,
    pub underrun: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerRow {
    pub slot: u64,
    pub uav: usize,
    pub policy: &'static str,
    /// An uplink transmission was attempted.
    pub triggered: bool,
    /// Length of the packet sent on the downlink; 0 when none was sent.
    pub packet_len: usize,
    /// The downlink packet reached the UAV.
    pub delivered: bool,
    pub buffer_cursor: usize,
    pub underrun: bool,
}

impl TriggerRow {
    pub fn transmissions(&self) -> u64 {
        u64::from(self.triggered) + u64::from(self.packet_len > 0)
    }
}

/// A packet that reached the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketEvent {
    pub issue_slot: u64,
    pub len: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UavRun {
    pub traces: Vec<TraceRow>,
    pub packets: Vec<PacketEvent>,
    /// Slots from first trigger to execution of the resulting packet.
    pub cmd_latency_slots: Vec<u64>,
    pub ul_attempts: u64,
    pub ul_delivered: u64,
    pub dl_attempts: u64,
    pub dl_delivered: u64,
    pub grants: u64,
    pub underruns: u64,
    pub max_aoi: u64,
    pub aoi_sum: u64,
    pub handovers: usize,
}

impl UavRun {
    pub fn rms_error(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        (self.traces.iter().map(|t| t.error_m * t.error_m).sum::<f64>() / self.traces.len() as f64).sqrt()
    }

    pub fn mean_error(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(|t| t.error_m).sum::<f64>() / self.traces.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmMetrics {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub slots: u64,
    pub rms_error_m: Vec<f64>,
    pub mean_error_m: Vec<f64>,
    /// Mean over UAVs of the time-averaged position error.
    pub avg_ctrl_err_m: f64,
    pub mean_aoi: f64,
    pub max_aoi: u64,
    pub underruns: u64,
    pub grants_total: u64,
    pub transmissions: u64,
    pub deliveries: u64,
    pub energy_j: f64,
    pub handovers: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub uavs: Vec<UavRun>,
    pub triggers: Vec<TriggerRow>,
    pub metrics: SwarmMetrics,
}

struct Agent {
    state: UavState,
    buffer: PpcBuffer,
    /// Base-station copy of the onboard buffer.
    mirror: PpcBuffer,
    plant_rng: SimRng,
    link_rng: SimRng,
    sensor_rng: SimRng,
    armed_since: Option<u64>,
    next_due: u64,
    believed_input: Vec3,
    nis: NisScale,
}

fn success(p_override: Option<f64>, link: &crate::radio::LinkModel, sinr: f64, rng: &mut SimRng) -> bool {
    match p_override {
        Some(p) => rng.uniform() < p,
        None => packet_outcome(link, sinr, rng),
    }
}

/// Onboard state measurement with covariance `R = L Lᵀ`.
fn measure(x: &UavState, r_chol: &Mat6, rng: &mut SimRng) -> UavState {
    let z = Vec6::from_fn(|_, _| rng.standard_normal());
    UavState::from_vector(&(x.to_vector() + r_chol * z), x.time_index)
}

/// Normalized innovation squared of a report against the prior belief, per
/// degree of freedom.
fn innovation_nis(ctx: &UavContext, reported: &UavState, r_meas: &CovMatrix) -> f64 {
    let nu = reported.to_vector() - ctx.estimate.to_vector();
    let s = ctx.sigma.matrix() + r_meas.matrix();
    match s.cholesky() {
        Some(c) => nu.dot(&c.solve(&nu)) / 6.0,
        None => f64::NAN,
    }
}

/// Run the closed loop for `spec.horizon` slots.
///
/// Stage order within a slot: belief update, trigger evaluation and
/// scheduling, uplink, control solve, downlink, buffer execution, plant
/// step, metrics.
pub fn run_closed_loop(prep: &Prepared, spec: &RunSpec) -> Result<RunOutput> {
    let sc = &prep.scenario;
    let cfg = &sc.config;
    if spec.n > prep.uavs.len() {
        return Err(Error::Scenario(format!(
            "{} UAVs requested but only {} planned",
            spec.n,
            prep.uavs.len()
        )));
    }
    if spec.m == 0 {
        return Err(Error::Scenario("at least one grant per slot is required".into()));
    }
    spec.policy.validate()?;
    let model: PlantModel = sc.plant();
    let link = sc.link();
    let disturbance = sc.disturbance();
    let r_meas = sc.r_meas();
    let r_chol = r_meas.matrix().cholesky().map(|c| c.l()).unwrap_or_else(Mat6::zeros);
    let statics = &cfg.environment.buildings;
    let movers = &cfg.movers;
    let p_override = cfg.radio.success_override;
    let energy_per_packet = cfg.radio.energy_per_packet_j;

    let mut weights = cfg.controller.mpc;
    if let TriggerPolicy::Stmpc { n_max, .. } = spec.policy {
        weights.n_max = weights.n_max.max(n_max);
    }
    let horizon_len = weights.n_max;
    let mut solver = MpcSolver::new(model.clone(), weights)?;

    let refs: Vec<&ReferenceTrajectory> = prep.uavs[..spec.n].iter().map(|u| &u.reference).collect();
    let mut agents: Vec<Agent> = (0..spec.n)
        .map(|i| {
            let start = UavState::at_rest(refs[i].samples[0].position, 0);
            Agent {
                state: start,
                buffer: PpcBuffer::new(cfg.controller.damping),
                mirror: PpcBuffer::new(cfg.controller.damping),
                plant_rng: SimRng::new(spec.seed, 3 * i as u64),
                link_rng: SimRng::new(spec.seed, 3 * i as u64 + 1),
                sensor_rng: SimRng::new(spec.seed, 3 * i as u64 + 2),
                armed_since: None,
                next_due: 0,
                believed_input: Vec3::zeros(),
                nis: NisScale::new(cfg.controller.nis_alpha, cfg.controller.nis_cap),
            }
        })
        .collect();
    let mut contexts: Vec<UavContext> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| UavContext::new(i, a.state, r_meas))
        .collect();
    let mut runs: Vec<UavRun> = vec![UavRun::default(); spec.n];
    let mut triggers = Vec::with_capacity(spec.n * spec.horizon as usize);

    for k in 0..spec.horizon {
        // belief update
        if k > 0 {
            let believed: Vec<Vec3> = agents.iter().map(|a| a.believed_input).collect();
            update_beliefs(&mut contexts, &SlotSchedule::empty(k), &[], &model, &believed, &r_meas)?;
        }

        // triggers and scheduling
        let mut candidates = Vec::new();
        for (i, a) in agents.iter_mut().enumerate() {
            let fires = a.armed_since.is_some()
                || match spec.policy {
                    TriggerPolicy::Periodic { period } => k % period == 0,
                    TriggerPolicy::Etc { delta } => match &a.buffer.packet {
                        Some(p) if k < p.issue_slot + p.len() as u64 => {
                            let pred = p.predicted_at(k).expect("slot inside packet");
                            (a.state.position - pred.fixed_rows::<3>(0)).norm() > delta
                        }
                        _ => true,
                    },
                    TriggerPolicy::Stmpc { .. } => k >= a.next_due,
                };
            if fires && a.armed_since.is_none() {
                a.armed_since = Some(k);
            }
            let r = refs[i].at(k).position;
            contexts[i].risk_flag = collision_check(&r, 0.0, statics, movers, k) <= cfg.scheduler.r_risk_m
                || cfg.scheduler.high_risk.iter().any(|b| b.contains(&r));
            if fires {
                candidates.push(contexts[i].clone());
            }
        }
        let schedule = schedule_slot(k, &candidates, spec.m, &cfg.scheduler.weights);

        let mut sent: Vec<Option<ControlPacket>> = vec![None; spec.n];
        let mut dl_len = vec![0usize; spec.n];
        let mut ul_tried = vec![false; spec.n];
        let mut dl_ok = vec![false; spec.n];
        let mut sinr_now = vec![f64::NEG_INFINITY; spec.n];
        for (i, a) in agents.iter().enumerate() {
            sinr_now[i] = prep.map.sinr_at(&a.state.position).unwrap_or(f64::NEG_INFINITY);
        }

        for &i in &schedule.granted {
            let a = &mut agents[i];
            let run = &mut runs[i];
            run.grants += 1;
            // uplink
            ul_tried[i] = true;
            run.ul_attempts += 1;
            if !success(p_override, &link, sinr_now[i], &mut a.link_rng) {
                continue;
            }
            run.ul_delivered += 1;
            let report = measure(&a.state, &r_chol, &mut a.sensor_rng);
            let ctx = &mut contexts[i];
            a.nis.update(innovation_nis(ctx, &report, &r_meas));
            reset_to_report(ctx, &report, &r_meas);

            // control solve
            let len = match spec.policy {
                TriggerPolicy::Stmpc {
                    kappa,
                    m_safe,
                    n_max,
                    uncertainty_cap,
                } => {
                    let preview: Vec<Vec3> = (1..=n_max as u64).map(|j| refs[i].at(k + j).position).collect();
                    let c = a.nis.scale();
                    let scaled = model.with_noise_scale(c);
                    stmpc_length(&scaled, &r_meas.scaled(c), &preview, statics, movers, kappa, m_safe, n_max, uncertainty_cap, k)
                }
                _ => cfg.controller.mpc.n_max,
            };
            let window = refs[i].window(k, horizon_len + 1);
            let mut packet = solver.solve(&report, &window, horizon_len)?;
            packet.inputs.truncate(len);
            packet.predicted.truncate(len + 1);

            // downlink
            dl_len[i] = len;
            run.dl_attempts += 1;
            if success(p_override, &link, sinr_now[i], &mut a.link_rng) {
                run.dl_delivered += 1;
                dl_ok[i] = true;
                let since = a.armed_since.take().expect("granted UAVs are armed");
                run.cmd_latency_slots.push(k - since);
                a.next_due = k + len as u64;
                run.packets.push(PacketEvent { issue_slot: k, len });
                sent[i] = Some(packet);
            }
        }

        for (i, a) in agents.iter_mut().enumerate() {
            let delivered = sent[i].take();
            let out = buffer_execute(&mut a.buffer, k, delivered.clone(), &a.state.velocity, model.u_max);
            let mirror = buffer_execute(&mut a.mirror, k, delivered, &contexts[i].estimate.velocity, model.u_max);
            a.believed_input = mirror.input;

            let r = refs[i].at(k);
            let run = &mut runs[i];
            let serving = prep.map.serving_at(&prep.map.bounds().clamp(&a.state.position)).ok();
            run.traces.push(TraceRow {
                slot: k,
                position: a.state.position,
                velocity: a.state.velocity,
                ref_position: r.position,
                error_m: (a.state.position - r.position).norm(),
                sinr_db: sinr_now[i],
                serving_bs: serving,
                aoi: contexts[i].aoi,
                input: out.input,
                underrun: out.underrun,
            });
            run.underruns += u64::from(out.underrun);
            run.max_aoi = run.max_aoi.max(contexts[i].aoi);
            run.aoi_sum += contexts[i].aoi;
            triggers.push(TriggerRow {
                slot: k,
                uav: i,
                policy: spec.policy.name(),
                triggered: ul_tried[i],
                packet_len: dl_len[i],
                delivered: dl_ok[i],
                buffer_cursor: a.buffer.cursor,
                underrun: out.underrun,
            });

            let rec = step(&model, &a.state, &out.input, &disturbance, &mut a.plant_rng);
            a.state = rec.state;
        }
    }

    for run in runs.iter_mut() {
        let path: Vec<Vec3> = run.traces.iter().map(|t| prep.map.bounds().clamp(&t.position)).collect();
        run.handovers = handover_count(&prep.map, &path).unwrap_or(0);
    }

    let transmissions: u64 = runs.iter().map(|r| r.ul_attempts + r.dl_attempts).sum();
    let n = spec.n.max(1) as f64;
    let slots = spec.horizon.max(1) as f64;
    let metrics = SwarmMetrics {
        n: spec.n,
        m: spec.m,
        seed: spec.seed,
        slots: spec.horizon,
        rms_error_m: runs.iter().map(UavRun::rms_error).collect(),
        mean_error_m: runs.iter().map(UavRun::mean_error).collect(),
        avg_ctrl_err_m: runs.iter().map(UavRun::mean_error).sum::<f64>() / n,
        mean_aoi: runs.iter().map(|r| r.aoi_sum as f64).sum::<f64>() / (n * slots),
        max_aoi: runs.iter().map(|r| r.max_aoi).max().unwrap_or(0),
        underruns: runs.iter().map(|r| r.underruns).sum(),
        grants_total: runs.iter().map(|r| r.grants).sum(),
        transmissions,
        deliveries: runs.iter().map(|r| r.ul_delivered + r.dl_delivered).sum(),
        energy_j: transmissions as f64 * energy_per_packet,
        handovers: runs.iter().map(|r| r.handovers).sum(),
    };
    Ok(RunOutput {
        spec: *spec,
        uavs: runs,
        triggers,
        metrics,
    })
}

/// Swarm run of the first `n` planned UAVs with `m` grants per slot.
pub fn run_swarm(prep: &Prepared, n: usize, m: usize, seed: u64) -> Result<SwarmMetrics> {
    let spec = RunSpec {
        policy: prep.scenario.config.controller.policy,
        m,
        seed,
        n,
        horizon: prep.default_horizon(n),
    };
    Ok(run_closed_loop(prep, &spec)?.metrics)
}
