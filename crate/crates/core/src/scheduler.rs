//! eMBB proportional-fair scheduling at resource-block granularity and MCS selection.

use crate::error::{contract, Error, Result};
use crate::grid::{CellConfig, ScheduleVector};

#[derive(Debug, Clone, PartialEq)]
pub struct McsEntry {
    pub name: String,
    pub bits_per_symbol: u32,
    pub code_rate: f64,
    /// SNR at which this MCS starts to decode reliably.
    pub required_snr_db: f64,
}

/// Step-function MCS table, ordered by increasing spectral efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
    /// Extra SNR headroom demanded before an entry is selected.
    pub backoff_db: f64,
}

impl Default for McsTable {
    fn default() -> Self {
        let e = |name: &str, bits_per_symbol, code_rate, required_snr_db| McsEntry {
            name: name.to_string(),
            bits_per_symbol,
            code_rate,
            required_snr_db,
        };
        Self {
            entries: vec![
                e("QPSK 1/3", 2, 1.0 / 3.0, -1.0),
                e("QPSK 2/3", 2, 2.0 / 3.0, 3.0),
                e("16QAM 1/2", 4, 0.5, 7.0),
                e("16QAM 3/4", 4, 0.75, 11.0),
                e("64QAM 2/3", 6, 2.0 / 3.0, 15.0),
                e("64QAM 3/4", 6, 0.75, 19.0),
            ],
            backoff_db: 1.0,
        }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("MCS table is empty".into()));
        }
        for w in self.entries.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let eff = |x: &McsEntry| x.bits_per_symbol as f64 * x.code_rate;
            if b.required_snr_db <= a.required_snr_db || eff(b) < eff(a) {
                return Err(Error::Config(format!(
                    "MCS entries must increase in required SNR and efficiency ({} -> {})",
                    a.name, b.name
                )));
            }
        }
        if self.entries.iter().any(|x| !(x.code_rate > 0.0 && x.code_rate < 1.0) || x.bits_per_symbol == 0) {
            return Err(Error::Config("MCS code rates must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn entry(&self, index: usize) -> Result<&McsEntry> {
        self.entries
            .get(index)
            .ok_or_else(|| Error::Contract(format!("MCS index {index} outside table of {}", self.entries.len())))
    }

    /// Highest entry whose requirement plus backoff is met; the lowest entry otherwise.
    pub fn select_mcs(&self, snr_db: f64) -> usize {
        self.entries
            .iter()
            .rposition(|e| snr_db >= e.required_snr_db + self.backoff_db)
            .unwrap_or(0)
    }
}

/// Proportional-fair bookkeeping: smoothed per-user throughput in SCs per TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    pub avg_tput: Vec<f64>,
    pub ewma_beta: f64,
}

/// Division guard for the PF metric.
pub const PF_FLOOR: f64 = 1e-6;

impl PfState {
    pub fn new(num_users: usize, ewma_beta: f64) -> Self {
        Self { avg_tput: vec![PF_FLOOR; num_users], ewma_beta }
    }

    fn effective(&self, e: usize, granted: usize) -> f64 {
        ((1.0 - self.ewma_beta) * self.avg_tput[e] + self.ewma_beta * granted as f64).max(PF_FLOOR)
    }
}

/// Greedy per-RB PF allocation. Each resource block goes to the user with the
/// largest `rate / average`, where the average already includes this TTI's
/// grants so far; ties go to the lowest index. The averages are committed at the end.
pub fn pf_schedule(state: &mut PfState, inst_rate: &[f64], cell: &CellConfig) -> Result<Vec<usize>> {
    let users = cell.num_embb;
    if inst_rate.len() != users || state.avg_tput.len() != users {
        return Err(Error::Shape(format!(
            "PF needs {users} rates and averages, got {} and {}",
            inst_rate.len(),
            state.avg_tput.len()
        )));
    }
    if let Some(r) = inst_rate.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return contract(format!("instantaneous rate {r} must be positive and finite"));
    }
    let mut granted = vec![0usize; users];
    for _ in 0..cell.num_rbs() {
        let mut best = 0;
        let mut best_metric = f64::NEG_INFINITY;
        for e in 0..users {
            let metric = inst_rate[e] / state.effective(e, granted[e]);
            if metric > best_metric {
                best = e;
                best_metric = metric;
            }
        }
        granted[best] += cell.rb_size;
    }
    for (e, &g) in granted.iter().enumerate() {
        state.avg_tput[e] = state.effective(e, g);
    }
    Ok(granted)
}

/// PF allocation bundled with the MCS indices into a [`ScheduleVector`].
pub fn schedule_tti(state: &mut PfState, inst_rate: &[f64], mcs: Vec<usize>, cell: &CellConfig) -> Result<ScheduleVector> {
    let alloc = pf_schedule(state, inst_rate, cell)?;
    ScheduleVector::new(alloc, mcs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use rand::Rng;

    #[test]
    fn equal_rates_round_robin() {
        let cell = CellConfig::default();
        let mut st = PfState::new(10, 0.01);
        let alloc = pf_schedule(&mut st, &[1.0; 10], &cell).unwrap();
        assert_eq!(alloc, vec![84, 84, 84, 84, 84, 72, 72, 72, 72, 72]);
    }

    #[test]
    fn single_user_takes_everything() {
        let cell = CellConfig { num_embb: 1, ..CellConfig::default() };
        let mut st = PfState::new(1, 0.01);
        assert_eq!(pf_schedule(&mut st, &[3.0], &cell).unwrap(), vec![780]);
    }

    #[test]
    fn strongest_user_gets_first_rb() {
        // one RB only, so the first grant is the whole allocation
        let cell = CellConfig { total_scs: 12, urllc_sc_len: 6, num_embb: 3, ..CellConfig::default() };
        let mut st = PfState::new(3, 0.01);
        assert_eq!(pf_schedule(&mut st, &[1.0, 10.0, 1.0], &cell).unwrap(), vec![0, 12, 0]);
    }

    #[test]
    fn rejects_non_positive_rates() {
        let cell = CellConfig::default();
        let mut st = PfState::new(10, 0.01);
        let mut rates = vec![1.0; 10];
        rates[3] = 0.0;
        assert!(matches!(pf_schedule(&mut st, &rates, &cell), Err(Error::Contract(_))));
    }

    #[test]
    fn long_run_fairness_with_symmetric_rates() {
        let cell = CellConfig::default();
        let mut st = PfState::new(10, 0.01);
        let mut rng = SeedTree::new(5).stream("channel", &[]);
        let mut totals = vec![0usize; 10];
        let ttis = 10_000;
        for _ in 0..ttis {
            let rates: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..1.5)).collect();
            let alloc = pf_schedule(&mut st, &rates, &cell).unwrap();
            assert_eq!(alloc.iter().sum::<usize>(), 780);
            assert!(alloc.iter().all(|n| n % 12 == 0));
            for (t, n) in totals.iter_mut().zip(alloc) {
                *t += n;
            }
        }
        for t in totals {
            let avg = t as f64 / ttis as f64;
            assert!((avg - 78.0).abs() < 0.05 * 78.0, "avg {avg}");
        }
    }

    #[test]
    fn mcs_boundaries_and_monotonicity() {
        let table = McsTable::default();
        table.validate().unwrap();
        assert_eq!(table.select_mcs(-30.0), 0);
        assert_eq!(table.select_mcs(99.0), table.entries.len() - 1);
        let eff = |i: usize| table.entries[i].bits_per_symbol as f64 * table.entries[i].code_rate;
        let mut rng = SeedTree::new(9).stream("mcs", &[]);
        for _ in 0..3 {
            let mut snrs: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..30.0)).collect();
            snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // oracle: linear scan for the best qualifying entry
            let oracle = |s: f64| {
                let mut best = 0;
                for (i, e) in table.entries.iter().enumerate() {
                    if s >= e.required_snr_db + table.backoff_db {
                        best = i;
                    }
                }
                best
            };
            for w in snrs.windows(2) {
                assert!(eff(table.select_mcs(w[1])) >= eff(table.select_mcs(w[0])));
            }
            for s in snrs {
                assert_eq!(table.select_mcs(s), oracle(s));
            }
        }
    }
}
