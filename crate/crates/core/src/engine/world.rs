//! The per-TTI simulation loop: schedule, codebook, arrivals, puncturing,
//! decoding, reward and (optionally) a training step.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{compute_reward, goodput_bits, goodput_scs, CellConfig, DecodeOutcome, ScheduleVector, TtiTrace};
use crate::phy::{code_rate, draw_link_quality, DecodabilityModel, DecodeRequest, Decoder, LinkQuality, PathlossParams};
use crate::rng::SeedTree;
use crate::sac::{ActionMode, AgentDims, ExperienceRecord, ReplayBuffer, SacAgent, SacConfig, TrainStats};
use crate::scheduler::{schedule_tti, McsTable, PfState};
use crate::traffic::{ArrivalProfile, TrafficConfig, UrllcSource};

use super::codebook::{apply_codebook, build_codebook, Codebook, CodebookSource};

/// eMBB UE positions of the reference deployment, metres from the base station.
pub const REFERENCE_EMBB_POSITIONS: [(f64, f64); 10] = [
    (-164.2, 841.0),
    (1.2, 581.4),
    (-813.3, 98.1),
    (958.1, 159.3),
    (573.9, -412.3),
    (-754.9, 509.7),
    (302.0, 445.6),
    (430.8, 96.3),
    (67.6, -155.8),
    (308.7, -530.3),
];

/// Distances below this are clamped so the pathloss stays finite.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub fn distances_from_positions(positions: &[(f64, f64)]) -> Vec<f64> {
    positions.iter().map(|&(x, y)| x.hypot(y).max(MIN_DISTANCE_M)).collect()
}

/// Positions drawn uniformly over a disc of `radius_m` around the base station.
pub fn random_positions(count: usize, radius_m: f64, seed: u64) -> Vec<(f64, f64)> {
    use rand::Rng;
    let mut rng = SeedTree::new(seed).stream("topology", &[]);
    (0..count)
        .map(|_| {
            let r = radius_m * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            (r * theta.cos(), r * theta.sin())
        })
        .collect()
}

/// Puncturing rule under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Cyrus,
    Rp,
    Sef,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Cyrus, PolicyKind::Rp, PolicyKind::Sef];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Cyrus => "cyrus",
            PolicyKind::Rp => "rp",
            PolicyKind::Sef => "sef",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyrus" => Ok(PolicyKind::Cyrus),
            "rp" => Ok(PolicyKind::Rp),
            "sef" => Ok(PolicyKind::Sef),
            other => Err(Error::Config(format!("unknown policy {other:?}, expected cyrus, rp or sef"))),
        }
    }
}

/// Everything needed to simulate one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub cell: CellConfig,
    pub per_ue_prob: f64,
    pub distances_m: Vec<f64>,
    pub pathloss: PathlossParams,
    pub mcs: McsTable,
    pub decodability: DecodabilityModel,
    pub pf_beta: f64,
    pub sac: SacConfig,
    /// Training steps happen on TTIs whose index is a multiple of this.
    pub train_every: u64,
    /// Action rule for the learned policy when not training.
    pub eval_action: ActionMode,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            cell: CellConfig::default(),
            per_ue_prob: 0.08,
            distances_m: distances_from_positions(&REFERENCE_EMBB_POSITIONS),
            pathloss: PathlossParams::default(),
            mcs: McsTable::default(),
            decodability: DecodabilityModel::default(),
            pf_beta: 0.01,
            sac: SacConfig::default(),
            train_every: 1,
            eval_action: ActionMode::Mean,
        }
    }
}

impl WorldConfig {
    /// Small cell used for learning experiments on a laptop: four eMBB users on
    /// different MCS entries. The nearest sits 3 dB above its switching point,
    /// the others 1.4 dB above theirs, with mild shadowing so the selected MCS
    /// rarely changes.
    pub fn desk() -> Self {
        Self {
            cell: CellConfig {
                total_scs: 96,
                num_embb: 4,
                num_urllc: 4,
                urllc_sc_len: 24,
                minislots_per_tti: 7,
                rb_size: 12,
                symbols_per_minislot: 2,
            },
            per_ue_prob: 0.1,
            distances_m: DESK_DISTANCES_M.to_vec(),
            decodability: DecodabilityModel::Threshold { margin: 0.3 },
            pathloss: PathlossParams { shadowing_sigma_db: 0.5, ..PathlossParams::default() },
            sac: SacConfig {
                entropy_coef: 0.002,
                batch_size: 64,
                buffer_capacity: 20_000,
                actor_hidden: vec![32],
                critic_hidden: vec![32, 32],
                actor_lr: 3e-3,
                critic_lr: 3e-3,
                ..SacConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.traffic().validate()?;
        self.pathloss.validate()?;
        self.mcs.validate()?;
        self.decodability.validate()?;
        self.sac.validate()?;
        if self.distances_m.len() != self.cell.num_embb {
            return Err(Error::Config(format!(
                "{} eMBB distances given for {} users",
                self.distances_m.len(),
                self.cell.num_embb
            )));
        }
        if self.distances_m.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("eMBB distances must be positive and finite".into()));
        }
        if !(self.pf_beta > 0.0 && self.pf_beta <= 1.0) {
            return Err(Error::Config(format!("pf_beta {} outside (0, 1]", self.pf_beta)));
        }
        if self.train_every == 0 {
            return Err(Error::Config("train_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn traffic(&self) -> TrafficConfig {
        TrafficConfig { num_urllc: self.cell.num_urllc, per_ue_prob: self.per_ue_prob, cap: self.cell.branch_count() }
    }
}

/// Desk-topology distances: mean SNRs of roughly 23, 16.4, 12.4 and 8.4 dB.
pub const DESK_DISTANCES_M: [f64; 4] = [251.0, 417.0, 567.0, 770.0];

/// One simulated cell driven by a puncturing policy.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    seeds: SeedTree,
    policy: PolicyKind,
    source: UrllcSource,
    pf: PfState,
    decoder: Decoder,
    agent: Option<SacAgent>,
    buffer: ReplayBuffer,
    training: bool,
    tti: u64,
    last_stats: Option<TrainStats>,
}

impl World {
    /// `agent` is required for [`PolicyKind::Cyrus`]; a fresh one is built
    /// from the seed when `None`.
    pub fn new(cfg: WorldConfig, policy: PolicyKind, master_seed: u64, agent: Option<SacAgent>) -> Result<Self> {
        cfg.validate()?;
        let seeds = SeedTree::new(master_seed);
        let agent = match (policy, agent) {
            (PolicyKind::Cyrus, Some(a)) => {
                if *a.dims() != AgentDims::from_cell(&cfg.cell) {
                    return Err(Error::Config(format!(
                        "agent built for {:?}, cell needs {:?}",
                        a.dims(),
                        AgentDims::from_cell(&cfg.cell)
                    )));
                }
                Some(a)
            }
            (PolicyKind::Cyrus, None) => Some(SacAgent::new(AgentDims::from_cell(&cfg.cell), cfg.sac.clone(), &seeds.child("agent", 0))?),
            (_, _) => None,
        };
        Ok(Self {
            source: UrllcSource::new(cfg.traffic())?,
            pf: PfState::new(cfg.cell.num_embb, cfg.pf_beta),
            decoder: Decoder::new(cfg.decodability.clone())?,
            buffer: ReplayBuffer::new(cfg.sac.buffer_capacity)?,
            cfg,
            seeds,
            policy,
            agent,
            training: false,
            tti: 0,
            last_stats: None,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn seeds(&self) -> &SeedTree {
        &self.seeds
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn agent(&self) -> Option<&SacAgent> {
        self.agent.as_ref()
    }

    pub fn into_agent(self) -> Option<SacAgent> {
        self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn last_train_stats(&self) -> Option<TrainStats> {
        self.last_stats
    }

    /// Enables or disables learning; only meaningful for the learned policy.
    pub fn set_training(&mut self, on: bool) {
        self.training = on && self.agent.is_some();
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn source_mut(&mut self) -> &mut UrllcSource {
        &mut self.source
    }

    /// Channel draw for the current TTI and the resulting PF schedule.
    pub fn draw_schedule(&mut self) -> Result<(ScheduleVector, LinkQuality)> {
        let mut rng = self.seeds.stream("channel", &[self.tti]);
        let link = draw_link_quality(&self.cfg.pathloss, &self.cfg.distances_m, &self.cfg.mcs, &mut rng)?;
        // per-SC rate proxy: (1 - erasure probability) * bits per symbol
        let rates = link
            .mcs
            .iter()
            .zip(&link.sc_erasure_prob)
            .map(|(&m, &q)| self.cfg.mcs.entry(m).map(|e| (1.0 - q) * e.bits_per_symbol as f64))
            .collect::<Result<Vec<f64>>>()?;
        let s = schedule_tti(&mut self.pf, &rates, link.mcs.clone(), &self.cfg.cell)?;
        Ok((s, link))
    }

    /// Fresh Bernoulli arrivals for the current TTI.
    pub fn draw_arrivals(&mut self) -> ArrivalProfile {
        let mut rng = self.seeds.stream("traffic", &[self.tti]);
        self.source.next_tti(self.cfg.cell.minislots_per_tti, &mut rng)
    }

    pub fn codebook(&self, s: &ScheduleVector) -> Result<Codebook> {
        let source = match self.policy {
            PolicyKind::Cyrus => {
                let mode = if self.training { ActionMode::Sample } else { self.cfg.eval_action };
                CodebookSource::Agent { agent: self.agent.as_ref().expect("learned policy owns an agent"), mode }
            }
            PolicyKind::Rp => CodebookSource::Rp,
            PolicyKind::Sef => CodebookSource::Sef,
        };
        build_codebook(s, &self.cfg.cell, source, &self.seeds, self.tti)
    }

    /// One full TTI with a fresh channel, schedule and arrivals.
    pub fn run_tti(&mut self) -> Result<TtiTrace> {
        let (s, link) = self.draw_schedule()?;
        let book = self.codebook(&s)?;
        let arrivals = self.draw_arrivals();
        self.finish_tti(s, &link, book, arrivals)
    }

    /// One TTI on a given schedule, channel and arrival profile.
    pub fn run_fixed_tti(&mut self, s: &ScheduleVector, link: &LinkQuality, arrivals: ArrivalProfile) -> Result<TtiTrace> {
        let book = self.codebook(s)?;
        self.finish_tti(s.clone(), link, book, arrivals)
    }

    fn finish_tti(&mut self, s: ScheduleVector, link: &LinkQuality, book: Codebook, arrivals: ArrivalProfile) -> Result<TtiTrace> {
        let cell = &self.cfg.cell;
        let e_count = cell.num_embb;
        let applied = apply_codebook(&book, &arrivals.admitted, e_count)?;
        let mut ok = Vec::with_capacity(e_count);
        for e in 0..e_count {
            let punctures: Vec<usize> = applied.iter().map(|y| y.0[e]).collect();
            let req = DecodeRequest {
                alloc: s.alloc[e],
                code_rate: code_rate(&self.cfg.mcs, s.mcs[e])?,
                punctures: &punctures,
                erasure_prob: link.sc_erasure_prob[e],
            };
            let mut rng = self.seeds.stream("decode", &[self.tti, e as u64]);
            ok.push(self.decoder.decode_user(&req, &mut rng)?);
        }
        let outcome = DecodeOutcome(ok);
        let reward = compute_reward(&s, &outcome, cell.total_scs)?;
        let trace = TtiTrace {
            tti: self.tti,
            goodput_scs: goodput_scs(&s, &outcome)?,
            goodput_bits: goodput_bits(&s, &outcome, cell, &self.cfg.mcs)?,
            schedule: s,
            arrivals,
            applied,
            outcome,
            reward,
            branch_time_us: book.branch_time_us,
            codebook_time_us: book.generation_time_us,
        };
        if self.training {
            self.buffer.push(ExperienceRecord {
                schedule: trace.schedule.clone(),
                admitted: trace.arrivals.admitted.clone(),
                punctures: trace.applied.clone(),
                reward,
            });
            if self.tti % self.cfg.train_every == 0 {
                let mut rng = self.seeds.stream("training-batch", &[self.tti]);
                let agent = self.agent.as_mut().expect("training implies an agent");
                if let Some(stats) = agent.train_step(&self.buffer, &mut rng)? {
                    self.last_stats = Some(stats);
                }
            }
        }
        self.tti += 1;
        Ok(trace)
    }
}

/// Means over a run of traces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSummary {
    pub ttis: usize,
    pub mean_reward: f64,
    pub mean_goodput_scs: f64,
    pub mean_goodput_bits: f64,
}

impl RunSummary {
    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a TtiTrace>) -> Self {
        let mut s = RunSummary::default();
        for t in traces {
            s.ttis += 1;
            s.mean_reward += t.reward;
            s.mean_goodput_scs += t.goodput_scs as f64;
            s.mean_goodput_bits += t.goodput_bits;
        }
        if s.ttis > 0 {
            let n = s.ttis as f64;
            s.mean_reward /= n;
            s.mean_goodput_scs /= n;
            s.mean_goodput_bits /= n;
        }
        s
    }
}

/// Runs `ttis` TTIs and summarizes them, keeping the traces for the caller.
pub fn run_for(world: &mut World, ttis: usize) -> Result<(RunSummary, Vec<TtiTrace>)> {
    let traces = (0..ttis).map(|_| world.run_tti()).collect::<Result<Vec<_>>>()?;
    Ok((RunSummary::from_traces(&traces), traces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_desk() -> WorldConfig {
        let mut cfg = WorldConfig::desk();
        cfg.per_ue_prob = 0.0;
        cfg.distances_m = vec![50.0; 4];
        cfg.pathloss.shadowing_sigma_db = 0.0;
        cfg
    }

    #[test]
    fn no_traffic_and_clean_channel_gives_zero_reward() {
        for policy in PolicyKind::ALL {
            let mut w = World::new(quiet_desk(), policy, 1, None).unwrap();
            for _ in 0..20 {
                let t = w.run_tti().unwrap();
                assert_eq!(t.reward, 0.0);
                assert_eq!(t.goodput_scs, 96);
                assert!(t.applied.iter().all(|y| y.total() == 0));
            }
        }
    }

    #[test]
    fn identical_seeds_identical_traces() {
        for policy in PolicyKind::ALL {
            let run = |seed| {
                let mut w = World::new(WorldConfig::desk(), policy, seed, None).unwrap();
                w.set_training(policy == PolicyKind::Cyrus);
                (0..80)
                    .map(|_| {
                        let mut t = w.run_tti().unwrap();
                        t.branch_time_us.clear();
                        t.codebook_time_us = 0.0;
                        t
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(3), run(3));
            assert_ne!(run(3), run(4));
        }
    }

    #[test]
    fn sc_conservation_and_shared_traces_across_policies() {
        let mut worlds: Vec<World> = PolicyKind::ALL.iter().map(|&p| World::new(WorldConfig::desk(), p, 8, None).unwrap()).collect();
        for _ in 0..200 {
            let traces: Vec<TtiTrace> = worlds.iter_mut().map(|w| w.run_tti().unwrap()).collect();
            for t in &traces {
                for (y, &k) in t.applied.iter().zip(&t.arrivals.admitted) {
                    y.check(&t.schedule, k * 24).unwrap();
                }
                assert_eq!(t.schedule, traces[0].schedule);
                assert_eq!(t.arrivals, traces[0].arrivals);
            }
        }
    }

    #[test]
    fn no_update_until_buffer_holds_a_batch() {
        let mut cfg = WorldConfig::desk();
        cfg.sac.batch_size = 16;
        let mut w = World::new(cfg, PolicyKind::Cyrus, 5, None).unwrap();
        w.set_training(true);
        let start = w.agent().unwrap().clone();
        for _ in 0..15 {
            w.run_tti().unwrap();
            assert!(w.agent().unwrap().same_state(&start));
        }
        w.run_tti().unwrap();
        assert!(!w.agent().unwrap().same_state(&start));
        assert_eq!(w.buffer().len(), 16);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("random".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn random_positions_stay_in_disc() {
        let p = random_positions(50, 1000.0, 3);
        assert!(p.iter().all(|(x, y)| x.hypot(*y) <= 1000.0));
        assert_eq!(p, random_positions(50, 1000.0, 3));
    }

    #[test]
    fn reference_deployment_is_valid() {
        WorldConfig::default().validate().unwrap();
        let d = distances_from_positions(&REFERENCE_EMBB_POSITIONS);
        assert!((d[0] - 856.88).abs() < 0.01);
    }
}
