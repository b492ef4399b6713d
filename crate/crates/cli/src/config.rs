//! TOML run configuration. Every section is optional; missing keys take the
//! reference-deployment defaults and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use puncture_core::engine::{distances_from_positions, random_positions, CurriculumStage, WorldConfig, REFERENCE_EMBB_POSITIONS};
use puncture_core::phy::DecodabilityModel;
use puncture_core::sac::{ActionMode, ActorGradient};
use puncture_core::{CellConfig, PathlossParams};

/// A configuration problem tied to a dotted key.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Parse(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid<T>(key: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid { key: key.to_string(), msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub policy: String,
    pub cell: CellSection,
    pub traffic: TrafficSection,
    pub topology: TopologySection,
    pub phy: PhySection,
    pub agent: AgentSection,
    pub curriculum: CurriculumSection,
    pub run: RunSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            policy: "cyrus".into(),
            cell: CellSection::default(),
            traffic: TrafficSection::default(),
            topology: TopologySection::default(),
            phy: PhySection::default(),
            agent: AgentSection::default(),
            curriculum: CurriculumSection::default(),
            run: RunSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub total_scs: usize,
    pub num_embb: usize,
    pub num_urllc: usize,
    /// SCs per URLLC packet.
    pub urllc_sc_len: usize,
    pub minislots_per_tti: usize,
    pub rb_size: usize,
    pub symbols_per_minislot: usize,
}

impl Default for CellSection {
    fn default() -> Self {
        let c = CellConfig::default();
        Self {
            total_scs: c.total_scs,
            num_embb: c.num_embb,
            num_urllc: c.num_urllc,
            urllc_sc_len: c.urllc_sc_len,
            minislots_per_tti: c.minislots_per_tti,
            rb_size: c.rb_size,
            symbols_per_minislot: c.symbols_per_minislot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub per_ue_prob: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self { per_ue_prob: 0.08 }
    }
}

/// Either explicit eMBB positions, explicit distances, or a seeded random drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub embb_positions: Vec<[f64; 2]>,
    pub embb_distances_m: Vec<f64>,
    pub random_radius_m: Option<f64>,
    pub random_seed: u64,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            embb_positions: REFERENCE_EMBB_POSITIONS.iter().map(|&(x, y)| [x, y]).collect(),
            embb_distances_m: Vec::new(),
            random_radius_m: None,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhySection {
    /// `"ldpc"` or `"threshold"`.
    pub model: String,
    pub threshold_margin: f64,
    pub ldpc_var_degree: usize,
    pub ldpc_seed: u64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    pub pathloss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub mcs_backoff_db: f64,
}

impl Default for PhySection {
    fn default() -> Self {
        let p = PathlossParams::default();
        let DecodabilityModel::ErasureLdpc { var_degree, seed } = DecodabilityModel::default() else {
            unreachable!("default model is LDPC")
        };
        Self {
            model: "ldpc".into(),
            threshold_margin: 0.3,
            ldpc_var_degree: var_degree,
            ldpc_seed: seed,
            tx_power_dbm: p.tx_power_dbm,
            noise_floor_dbm: p.noise_floor_dbm,
            pathloss_exponent: p.exponent,
            shadowing_sigma_db: p.shadowing_sigma_db,
            mcs_backoff_db: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub discount: f64,
    pub entropy_coef: f64,
    pub batch_size: usize,
    pub soft_update_rate: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// `"projection"` or `"raw"`.
    pub actor_gradient: String,
    pub train_every: u64,
    /// `"mean"` or `"sample"`.
    pub eval_action: String,
}

impl Default for AgentSection {
    fn default() -> Self {
        let s = puncture_core::sac::SacConfig::default();
        Self {
            discount: s.discount,
            entropy_coef: s.entropy_coef,
            batch_size: s.batch_size,
            soft_update_rate: s.soft_update_rate,
            actor_lr: s.actor_lr,
            critic_lr: s.critic_lr,
            buffer_capacity: s.buffer_capacity,
            actor_hidden: s.actor_hidden,
            critic_hidden: s.critic_hidden,
            actor_gradient: "projection".into(),
            train_every: 1,
            eval_action: "mean".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    /// Packets per TTI; omit for live Bernoulli traffic.
    pub urllc_count: Option<usize>,
    pub window: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    pub stages: Vec<StageSection>,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        Self {
            stages: puncture_core::engine::default_ladder()
                .into_iter()
                .map(|s| StageSection { urllc_count: s.urllc_count, window: s.window, episodes: s.episodes })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// TTIs simulated by `run`, `eval` and each policy of `compare`.
    pub ttis: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { ttis: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Fill the wall-clock `gen_time_us` column; breaks byte-identical output.
    pub timing: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Checks every key and names the first offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.cell;
        if c.rb_size == 0 {
            return invalid("cell.rb_size", "must be positive");
        }
        if c.total_scs == 0 || c.total_scs % c.rb_size != 0 {
            return invalid("cell.total_scs", format!("must be a positive multiple of cell.rb_size = {}", c.rb_size));
        }
        if c.urllc_sc_len == 0 || c.urllc_sc_len >= c.total_scs {
            return invalid("cell.urllc_sc_len", format!("must lie in 1..{}", c.total_scs));
        }
        for (key, v) in [
            ("cell.num_embb", c.num_embb),
            ("cell.num_urllc", c.num_urllc),
            ("cell.minislots_per_tti", c.minislots_per_tti),
            ("cell.symbols_per_minislot", c.symbols_per_minislot),
        ] {
            if v == 0 {
                return invalid(key, "must be at least 1");
            }
        }
        if !(0.0..=1.0).contains(&self.traffic.per_ue_prob) {
            return invalid("traffic.per_ue_prob", format!("{} is not a probability in [0, 1]", self.traffic.per_ue_prob));
        }
        if self.policy.parse::<puncture_core::engine::PolicyKind>().is_err() {
            return invalid("policy", format!("{:?} is not one of cyrus, rp, sef", self.policy));
        }
        let t = &self.topology;
        match t.random_radius_m {
            Some(r) if !(r > 0.0 && r.is_finite()) => return invalid("topology.random_radius_m", "must be positive"),
            Some(_) => {}
            None if !t.embb_distances_m.is_empty() => {
                if t.embb_distances_m.len() != c.num_embb {
                    return invalid("topology.embb_distances_m", format!("needs {} entries (cell.num_embb)", c.num_embb));
                }
                if t.embb_distances_m.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return invalid("topology.embb_distances_m", "distances must be positive");
                }
            }
            None if t.embb_positions.len() != c.num_embb => {
                return invalid("topology.embb_positions", format!("needs {} entries (cell.num_embb)", c.num_embb));
            }
            None => {}
        }
        let p = &self.phy;
        match p.model.as_str() {
            "ldpc" if p.ldpc_var_degree < 2 => return invalid("phy.ldpc_var_degree", "must be at least 2"),
            "threshold" if !(p.threshold_margin > 0.0 && p.threshold_margin < 1.0) => {
                return invalid("phy.threshold_margin", "must lie in (0, 1)")
            }
            "ldpc" | "threshold" => {}
            other => return invalid("phy.model", format!("{other:?} is not one of ldpc, threshold")),
        }
        if !(p.shadowing_sigma_db >= 0.0) {
            return invalid("phy.shadowing_sigma_db", "must be non-negative");
        }
        if !(p.pathloss_exponent > 0.0) {
            return invalid("phy.pathloss_exponent", "must be positive");
        }
        if !(p.mcs_backoff_db >= 0.0) {
            return invalid("phy.mcs_backoff_db", "must be non-negative");
        }
        let a = &self.agent;
        if !(0.0..=1.0).contains(&a.discount) {
            return invalid("agent.discount", "must lie in [0, 1]");
        }
        if !(a.entropy_coef >= 0.0 && a.entropy_coef.is_finite()) {
            return invalid("agent.entropy_coef", "must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&a.soft_update_rate) {
            return invalid("agent.soft_update_rate", "must lie in [0, 1]");
        }
        if !(a.actor_lr > 0.0) {
            return invalid("agent.actor_lr", "must be positive");
        }
        if !(a.critic_lr > 0.0) {
            return invalid("agent.critic_lr", "must be positive");
        }
        if a.batch_size == 0 {
            return invalid("agent.batch_size", "must be positive");
        }
        if a.buffer_capacity < a.batch_size {
            return invalid("agent.buffer_capacity", "must be at least agent.batch_size");
        }
        if a.actor_hidden.contains(&0) {
            return invalid("agent.actor_hidden", "widths must be positive");
        }
        if a.critic_hidden.contains(&0) {
            return invalid("agent.critic_hidden", "widths must be positive");
        }
        if !matches!(a.actor_gradient.as_str(), "projection" | "raw") {
            return invalid("agent.actor_gradient", "must be projection or raw");
        }
        if !matches!(a.eval_action.as_str(), "mean" | "sample") {
            return invalid("agent.eval_action", "must be mean or sample");
        }
        if a.train_every == 0 {
            return invalid("agent.train_every", "must be at least 1");
        }
        let cap = c.total_scs / c.urllc_sc_len;
        for (i, s) in self.curriculum.stages.iter().enumerate() {
            let key = format!("curriculum.stages[{i}]");
            if s.window == 0 || s.episodes == 0 {
                return invalid(&key, "window and episodes must be at least 1");
            }
            if s.urllc_count.is_some_and(|k| k > cap * c.minislots_per_tti) {
                return invalid(&key, format!("urllc_count exceeds {} admissible packets per TTI", cap * c.minislots_per_tti));
            }
        }
        if self.run.ttis == 0 {
            return invalid("run.ttis", "must be at least 1");
        }
        Ok(())
    }

    pub fn stages(&self) -> Vec<CurriculumStage> {
        self.curriculum
            .stages
            .iter()
            .map(|s| CurriculumStage { urllc_count: s.urllc_count, window: s.window, episodes: s.episodes })
            .collect()
    }

    pub fn world(&self) -> WorldConfig {
        let c = &self.cell;
        let t = &self.topology;
        let distances = match t.random_radius_m {
            Some(r) => distances_from_positions(&random_positions(c.num_embb, r, t.random_seed)),
            None if !t.embb_distances_m.is_empty() => t.embb_distances_m.clone(),
            None => distances_from_positions(&t.embb_positions.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()),
        };
        let p = &self.phy;
        let decodability = match p.model.as_str() {
            "threshold" => DecodabilityModel::Threshold { margin: p.threshold_margin },
            _ => DecodabilityModel::ErasureLdpc { var_degree: p.ldpc_var_degree, seed: p.ldpc_seed },
        };
        let a = &self.agent;
        let mut w = WorldConfig {
            cell: CellConfig {
                total_scs: c.total_scs,
                num_embb: c.num_embb,
                num_urllc: c.num_urllc,
                urllc_sc_len: c.urllc_sc_len,
                minislots_per_tti: c.minislots_per_tti,
                rb_size: c.rb_size,
                symbols_per_minislot: c.symbols_per_minislot,
            },
            per_ue_prob: self.traffic.per_ue_prob,
            distances_m: distances,
            decodability,
            train_every: a.train_every,
            eval_action: if a.eval_action == "sample" { ActionMode::Sample } else { ActionMode::Mean },
            ..WorldConfig::default()
        };
        w.pathloss.tx_power_dbm = p.tx_power_dbm;
        w.pathloss.noise_floor_dbm = p.noise_floor_dbm;
        w.pathloss.exponent = p.pathloss_exponent;
        w.pathloss.shadowing_sigma_db = p.shadowing_sigma_db;
        w.mcs.backoff_db = p.mcs_backoff_db;
        w.sac.discount = a.discount;
        w.sac.entropy_coef = a.entropy_coef;
        w.sac.batch_size = a.batch_size;
        w.sac.soft_update_rate = a.soft_update_rate;
        w.sac.actor_lr = a.actor_lr;
        w.sac.critic_lr = a.critic_lr;
        w.sac.buffer_capacity = a.buffer_capacity;
        w.sac.actor_hidden = a.actor_hidden.clone();
        w.sac.critic_hidden = a.critic_hidden.clone();
        w.sac.gradient = if a.actor_gradient == "raw" { ActorGradient::RawAction } else { ActorGradient::Projection };
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let w = cfg.world();
        assert_eq!(w.cell.total_scs, 780);
        assert_eq!(w.cell.num_embb, 10);
        assert_eq!(w.cell.num_urllc, 12);
        assert_eq!(w.cell.minislots_per_tti, 7);
        assert_eq!(w.per_ue_prob, 0.08);
        assert_eq!(w.sac.discount, 0.95);
        assert_eq!(w.sac.actor_lr, 3e-4);
        assert_eq!(w.sac.buffer_capacity, 20_000);
        assert_eq!(w.sac.batch_size, 256);
        assert_eq!(w.sac.soft_update_rate, 0.005);
        w.validate().unwrap();
    }

    #[test]
    fn bad_probability_names_its_key() {
        let err = RunConfig::from_toml("[traffic]\nper_ue_prob = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("traffic.per_ue_prob"), "{err}");
    }

    #[test]
    fn grid_must_be_whole_resource_blocks() {
        let err = RunConfig::from_toml("[cell]\ntotal_scs = 790\n").unwrap_err();
        assert!(err.to_string().contains("cell.total_scs"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("[cell]\nbandwidth = 5\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("colour = 1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "seed = 7\npolicy = \"sef\"\n[phy]\nmodel = \"threshold\"\n[curriculum]\nstages = [{ urllc_count = 1, window = 5, episodes = 10 }, { window = 1, episodes = 20 }]\n[topology]\nrandom_radius_m = 500.0\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn mismatched_topology_rejected() {
        let err = RunConfig::from_toml("[cell]\nnum_embb = 3\n").unwrap_err();
        assert!(err.to_string().contains("topology.embb_positions"), "{err}");
    }
}
