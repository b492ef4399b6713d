//! Time/frequency grid types, the per-TTI reward and goodput accounting.

use crate::error::{contract, Error, Result};
use crate::scheduler::McsTable;
use crate::traffic::ArrivalProfile;

/// Static description of the cell's resource grid and user population.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    /// Total subcarriers `N`.
    pub total_scs: usize,
    pub num_embb: usize,
    pub num_urllc: usize,
    /// Subcarriers consumed by one URLLC packet in one mini-slot (`L`).
    pub urllc_sc_len: usize,
    pub minislots_per_tti: usize,
    pub rb_size: usize,
    /// OFDM symbols per mini-slot, used only for bit-level goodput.
    pub symbols_per_minislot: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            total_scs: 780,
            num_embb: 10,
            num_urllc: 12,
            urllc_sc_len: 300,
            minislots_per_tti: 7,
            rb_size: 12,
            symbols_per_minislot: 2,
        }
    }
}

impl CellConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_scs == 0 {
            return fail("total_scs must be positive");
        }
        if self.urllc_sc_len == 0 || self.urllc_sc_len >= self.total_scs {
            return fail("urllc_sc_len must satisfy 0 < L < total_scs");
        }
        if self.num_embb == 0 || self.num_urllc == 0 {
            return fail("num_embb and num_urllc must be at least 1");
        }
        if self.minislots_per_tti == 0 {
            return fail("minislots_per_tti must be at least 1");
        }
        if self.rb_size == 0 || self.total_scs % self.rb_size != 0 {
            return fail("rb_size must divide total_scs");
        }
        if self.symbols_per_minislot == 0 {
            return fail("symbols_per_minislot must be at least 1");
        }
        Ok(())
    }

    /// Maximum URLLC packets served in one mini-slot, `floor(N / L)`.
    /// This is also the number of codebook columns.
    pub fn branch_count(&self) -> usize {
        self.total_scs / self.urllc_sc_len
    }

    pub fn num_rbs(&self) -> usize {
        self.total_scs / self.rb_size
    }

    pub fn symbols_per_tti(&self) -> usize {
        self.symbols_per_minislot * self.minislots_per_tti
    }
}

/// Per-TTI eMBB allocation `s(t)` plus the MCS index chosen for each user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleVector {
    pub alloc: Vec<usize>,
    pub mcs: Vec<usize>,
}

impl ScheduleVector {
    pub fn new(alloc: Vec<usize>, mcs: Vec<usize>) -> Result<Self> {
        if alloc.len() != mcs.len() {
            return Err(Error::Shape(format!(
                "allocation has {} users but MCS list has {}",
                alloc.len(),
                mcs.len()
            )));
        }
        Ok(Self { alloc, mcs })
    }

    /// Schedule with every user on MCS index 0.
    pub fn from_alloc(alloc: Vec<usize>) -> Self {
        let mcs = vec![0; alloc.len()];
        Self { alloc, mcs }
    }

    pub fn num_users(&self) -> usize {
        self.alloc.len()
    }

    pub fn total(&self) -> usize {
        self.alloc.iter().sum()
    }

    /// Checks resource-block granularity and that the grid is not overfilled.
    pub fn check(&self, cell: &CellConfig) -> Result<()> {
        if self.alloc.len() != cell.num_embb {
            return contract(format!(
                "schedule has {} users, cell has {}",
                self.alloc.len(),
                cell.num_embb
            ));
        }
        if let Some(n) = self.alloc.iter().find(|&&n| n % cell.rb_size != 0) {
            return contract(format!("allocation {n} is not a multiple of rb_size {}", cell.rb_size));
        }
        if self.total() > cell.total_scs {
            return contract(format!("allocation sums to {} > N = {}", self.total(), cell.total_scs));
        }
        Ok(())
    }
}

/// Punctured subcarrier counts `m_e` for one mini-slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PuncturingVector(pub Vec<usize>);

impl PuncturingVector {
    pub fn zeros(num_users: usize) -> Self {
        Self(vec![0; num_users])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Verifies `m_e <= n_e` and `sum m_e == demand`.
    pub fn check(&self, s: &ScheduleVector, demand: usize) -> Result<()> {
        if self.0.len() != s.alloc.len() {
            return Err(Error::Shape(format!(
                "puncturing vector has {} users, schedule has {}",
                self.0.len(),
                s.alloc.len()
            )));
        }
        for (e, (&m, &n)) in self.0.iter().zip(&s.alloc).enumerate() {
            if m > n {
                return contract(format!("user {e}: {m} punctured SCs exceed allocation {n}"));
            }
        }
        if self.total() != demand {
            return contract(format!("puncturing sums to {} but demand is {demand}", self.total()));
        }
        Ok(())
    }
}

/// Decode verdict `d_e(t)` per eMBB user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecodeOutcome(pub Vec<bool>);

impl DecodeOutcome {
    pub fn all(num_users: usize, ok: bool) -> Self {
        Self(vec![ok; num_users])
    }

    /// Outcome where exactly the listed (zero-based) users fail.
    pub fn failing(num_users: usize, failed: &[usize]) -> Self {
        let mut ok = vec![true; num_users];
        for &e in failed {
            ok[e] = false;
        }
        Self(ok)
    }

    /// `1`/`0` per user, user 0 first.
    pub fn bitmap(&self) -> String {
        self.0.iter().map(|&d| if d { '1' } else { '0' }).collect()
    }
}

fn check_lengths(s: &ScheduleVector, d: &DecodeOutcome) -> Result<()> {
    if s.alloc.len() != d.0.len() {
        return contract(format!(
            "schedule has {} users but decode outcome has {}",
            s.alloc.len(),
            d.0.len()
        ));
    }
    Ok(())
}

/// Reward `(1/N) * sum_e (d_e - 1) * n_e`: minus the fraction of the grid lost to decode failures.
pub fn compute_reward(s: &ScheduleVector, d: &DecodeOutcome, total_scs: usize) -> Result<f64> {
    check_lengths(s, d)?;
    if total_scs == 0 || s.total() > total_scs {
        return contract(format!("allocation sums to {} with N = {total_scs}", s.total()));
    }
    let lost: usize = s.alloc.iter().zip(&d.0).filter(|(_, &ok)| !ok).map(|(&n, _)| n).sum();
    Ok(-(lost as f64) / total_scs as f64)
}

/// Successfully decoded subcarriers this TTI, `sum_e d_e * n_e`.
pub fn goodput_scs(s: &ScheduleVector, d: &DecodeOutcome) -> Result<usize> {
    check_lengths(s, d)?;
    Ok(s.alloc.iter().zip(&d.0).filter(|(_, &ok)| ok).map(|(&n, _)| n).sum())
}

/// Information bits delivered by decoded users, using each user's MCS entry.
pub fn goodput_bits(s: &ScheduleVector, d: &DecodeOutcome, cell: &CellConfig, table: &McsTable) -> Result<f64> {
    check_lengths(s, d)?;
    let mut bits = 0.0;
    for ((&n, &mcs), &ok) in s.alloc.iter().zip(&s.mcs).zip(&d.0) {
        if ok {
            let entry = table.entry(mcs)?;
            bits += (n * cell.symbols_per_tti()) as f64 * entry.bits_per_symbol as f64 * entry.code_rate;
        }
    }
    Ok(bits)
}

/// Everything observed in one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiTrace {
    pub tti: u64,
    pub schedule: ScheduleVector,
    pub arrivals: ArrivalProfile,
    /// `Y(t)`: one puncturing vector per mini-slot.
    pub applied: Vec<PuncturingVector>,
    pub outcome: DecodeOutcome,
    pub reward: f64,
    pub goodput_scs: usize,
    pub goodput_bits: f64,
    /// Per-branch codebook generation time in microseconds (wall clock, not deterministic).
    pub branch_time_us: Vec<f64>,
    pub codebook_time_us: f64,
}
