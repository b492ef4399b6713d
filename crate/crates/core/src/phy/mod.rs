//! Decodability oracle standing in for the full PHY chain.
//!
//! Punctured subcarriers reach the receiver as known erasures. Whether a
//! user's transport block survives is decided either by a cheap threshold on
//! the erased fraction or by running a peeling decoder over a random LDPC
//! code sized to the user's allocation.

pub mod ldpc;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::scheduler::McsTable;

pub use ldpc::{peel_decode, LdpcCode};

/// Per-user channel state for one TTI.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkQuality {
    pub snr_db: Vec<f64>,
    pub mcs: Vec<usize>,
    /// Probability that an unpunctured symbol is lost anyway; always below 1.
    pub sc_erasure_prob: Vec<f64>,
}

/// Log-distance pathloss with lognormal shadowing and a logistic erasure map.
#[derive(Debug, Clone, PartialEq)]
pub struct PathlossParams {
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    /// Pathloss at the reference distance.
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
    /// Logistic steepness in 1/dB.
    pub steepness_per_db: f64,
    pub erasure_cap: f64,
}

impl Default for PathlossParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 46.0,
            noise_floor_dbm: -84.0,
            pl0_db: 95.0,
            d0_m: 100.0,
            exponent: 3.0,
            shadowing_sigma_db: 1.0,
            steepness_per_db: 1.0,
            erasure_cap: 0.95,
        }
    }
}

/// Link state of a single user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLink {
    pub snr_db: f64,
    pub mcs: usize,
    pub erasure_prob: f64,
}

impl PathlossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0_m > 0.0) || !(self.exponent > 0.0) || !(self.steepness_per_db > 0.0) {
            return Err(Error::Config("pathloss d0, exponent and steepness must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.erasure_cap) || self.shadowing_sigma_db < 0.0 {
            return Err(Error::Config("erasure cap must lie in [0, 1) and shadowing sigma be >= 0".into()));
        }
        Ok(())
    }

    /// Mean SNR at `distance_m`, before shadowing.
    pub fn snr_db(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) {
            return Err(Error::Contract(format!("distance {distance_m} must be positive")));
        }
        let pl = self.pl0_db + 10.0 * self.exponent * (distance_m / self.d0_m).log10();
        Ok(self.tx_power_dbm - pl - self.noise_floor_dbm)
    }

    /// Symbol erasure probability when operating `snr_db` against an MCS requiring `required_db`.
    pub fn erasure_prob(&self, snr_db: f64, required_db: f64) -> f64 {
        let x = self.steepness_per_db * (required_db - snr_db);
        (1.0 / (1.0 + (-x).exp())).clamp(0.0, self.erasure_cap)
    }

    /// SNR, selected MCS and erasure probability for a user at `distance_m`
    /// with `shadow_db` of shadowing this TTI.
    pub fn link_quality(&self, distance_m: f64, shadow_db: f64, table: &McsTable) -> Result<UserLink> {
        let snr_db = self.snr_db(distance_m)? + shadow_db;
        let mcs = table.select_mcs(snr_db);
        let erasure_prob = self.erasure_prob(snr_db, table.entry(mcs)?.required_snr_db);
        Ok(UserLink { snr_db, mcs, erasure_prob })
    }
}

/// Per-user link state for a whole topology, with one shadowing draw per user.
pub fn draw_link_quality<R: Rng + ?Sized>(
    params: &PathlossParams,
    distances_m: &[f64],
    table: &McsTable,
    rng: &mut R,
) -> Result<LinkQuality> {
    let mut q = LinkQuality::default();
    for &d in distances_m {
        let shadow = if params.shadowing_sigma_db > 0.0 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            params.shadowing_sigma_db * z
        } else {
            0.0
        };
        let link = params.link_quality(d, shadow, table)?;
        q.snr_db.push(link.snr_db);
        q.mcs.push(link.mcs);
        q.sc_erasure_prob.push(link.erasure_prob);
    }
    Ok(q)
}

/// Threshold decodability: success iff at most `margin` of the `M * n_e`
/// symbol slots are erased.
pub fn decode_threshold(n_e: usize, erased_total: usize, margin: f64, minislots: usize) -> bool {
    erased_total as f64 <= margin * (minislots * n_e) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodabilityModel {
    Threshold { margin: f64 },
    ErasureLdpc { var_degree: usize, seed: u64 },
}

impl Default for DecodabilityModel {
    fn default() -> Self {
        DecodabilityModel::ErasureLdpc { var_degree: 3, seed: 0x1d9c }
    }
}

impl DecodabilityModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DecodabilityModel::Threshold { margin } if !(margin > 0.0 && margin < 1.0) => {
                Err(Error::Config(format!("threshold margin {margin} outside (0, 1)")))
            }
            DecodabilityModel::ErasureLdpc { var_degree, .. } if var_degree < 2 => {
                Err(Error::Config("LDPC variable degree must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One user's decode request for a TTI.
#[derive(Debug, Clone, Copy)]
pub struct DecodeRequest<'a> {
    pub alloc: usize,
    pub code_rate: f64,
    /// Punctured SCs of this user in every mini-slot.
    pub punctures: &'a [usize],
    pub erasure_prob: f64,
}

/// Decodability model plus a cache of constructed codes keyed by (length, rate, seed).
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    model: DecodabilityModel,
    cache: HashMap<(usize, u64, u64), Arc<LdpcCode>>,
}

impl Decoder {
    pub fn new(model: DecodabilityModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { model, cache: HashMap::new() })
    }

    pub fn model(&self) -> &DecodabilityModel {
        &self.model
    }

    pub fn code(&mut self, n: usize, rate: f64) -> Result<Arc<LdpcCode>> {
        let DecodabilityModel::ErasureLdpc { var_degree, seed } = self.model else {
            return Err(Error::Contract("threshold model has no LDPC code".into()));
        };
        let key = (n, rate.to_bits(), seed);
        if let Some(code) = self.cache.get(&key) {
            return Ok(Arc::clone(code));
        }
        let code = Arc::new(LdpcCode::with_rate(n, var_degree, rate, seed)?);
        self.cache.insert(key, Arc::clone(&code));
        Ok(code)
    }

    /// Decides whether one user's packet survives puncturing and channel erasures.
    ///
    /// Symbols are laid out one per (mini-slot, SC); in mini-slot `tau` the
    /// first `punctures[tau]` SCs of the user's band are erased, and every other
    /// symbol is erased independently with the user's channel erasure probability.
    pub fn decode_user<R: Rng + ?Sized>(&mut self, req: &DecodeRequest<'_>, rng: &mut R) -> Result<bool> {
        let n_e = req.alloc;
        if let Some(&m) = req.punctures.iter().find(|&&m| m > n_e) {
            return Err(Error::Contract(format!("{m} punctures exceed allocation {n_e}")));
        }
        if !(0.0..1.0).contains(&req.erasure_prob) {
            return Err(Error::Contract(format!("erasure probability {} outside [0, 1)", req.erasure_prob)));
        }
        if n_e == 0 {
            return Ok(true);
        }
        let minislots = req.punctures.len();
        let punctured: usize = req.punctures.iter().sum();
        let slots = minislots * n_e;
        match self.model {
            DecodabilityModel::Threshold { margin } => {
                let channel = if req.erasure_prob > 0.0 {
                    Binomial::new((slots - punctured) as u64, req.erasure_prob)
                        .map_err(|e| Error::Contract(e.to_string()))?
                        .sample(rng) as usize
                } else {
                    0
                };
                Ok(decode_threshold(n_e, punctured + channel, margin, minislots))
            }
            DecodabilityModel::ErasureLdpc { .. } => {
                let code = self.code(slots, req.code_rate)?;
                let mut mask = vec![false; slots];
                for (tau, &m) in req.punctures.iter().enumerate() {
                    let row = &mut mask[tau * n_e..(tau + 1) * n_e];
                    for (sc, erased) in row.iter_mut().enumerate() {
                        *erased = sc < m || (req.erasure_prob > 0.0 && rng.random_bool(req.erasure_prob));
                    }
                }
                Ok(code.peel_mask(&mask))
            }
        }
    }
}

/// Convenience: code rate of an MCS table entry.
pub fn code_rate(table: &McsTable, mcs: usize) -> Result<f64> {
    Ok(table.entry(mcs)?.code_rate)
}
