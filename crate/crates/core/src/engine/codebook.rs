//! Per-TTI puncturing codebooks: one feasible puncturing vector for every
//! possible number of simultaneous URLLC arrivals.

use std::time::Instant;

use crate::baselines::{rp_puncture, sef_puncture};
use crate::error::{Error, Result};
use crate::grid::{CellConfig, PuncturingVector, ScheduleVector};
use crate::rng::SeedTree;
use crate::sac::{ActionMode, SacAgent};

/// Column `j - 1` serves `j` simultaneous arrivals and sums to `j * L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub columns: Vec<PuncturingVector>,
    /// Wall-clock time of each branch (sampling plus enforcement), microseconds.
    pub branch_time_us: Vec<f64>,
    /// Wall-clock time of the whole codebook, microseconds.
    pub generation_time_us: f64,
}

impl Codebook {
    pub fn branch_count(&self) -> usize {
        self.columns.len()
    }

    /// Checks every column against the schedule.
    pub fn check(&self, s: &ScheduleVector, urllc_sc_len: usize) -> Result<()> {
        for (j, col) in self.columns.iter().enumerate() {
            col.check(s, (j + 1) * urllc_sc_len)?;
        }
        Ok(())
    }
}

/// Which rule fills the codebook.
#[derive(Debug, Clone, Copy)]
pub enum CodebookSource<'a> {
    Agent { agent: &'a SacAgent, mode: ActionMode },
    Rp,
    Sef,
}

/// Substream for branch `j` of TTI `tti`.
pub fn branch_stream(seeds: &SeedTree, tti: u64, branch: usize) -> crate::rng::SimRng {
    seeds.stream("policy-branch", &[tti, branch as u64])
}

/// Builds the codebook for schedule `s`. The agent's branches come from one
/// batched forward pass; each branch then draws from its own substream, so the
/// result does not depend on the order in which branches are evaluated.
pub fn build_codebook(s: &ScheduleVector, cell: &CellConfig, source: CodebookSource<'_>, seeds: &SeedTree, tti: u64) -> Result<Codebook> {
    if s.total() != cell.total_scs {
        return Err(Error::Contract(format!("schedule covers {} of {} SCs", s.total(), cell.total_scs)));
    }
    let start = Instant::now();
    let branches = cell.branch_count();
    let l = cell.urllc_sc_len;
    let mut columns = Vec::with_capacity(branches);
    let mut branch_time_us = Vec::with_capacity(branches);
    match source {
        CodebookSource::Agent { agent, mode } => {
            let heads = agent.branch_heads(s)?;
            for (j, head) in (1..=branches).zip(&heads) {
                let t = Instant::now();
                let (y, _) = agent.act(head, s, j, mode, &mut branch_stream(seeds, tti, j))?;
                columns.push(y);
                branch_time_us.push(t.elapsed().as_secs_f64() * 1e6);
            }
        }
        CodebookSource::Rp | CodebookSource::Sef => {
            for j in 1..=branches {
                let t = Instant::now();
                let y = match source {
                    CodebookSource::Rp => rp_puncture(s, j * l)?,
                    _ => sef_puncture(s, j * l)?,
                };
                columns.push(y);
                branch_time_us.push(t.elapsed().as_secs_f64() * 1e6);
            }
        }
    }
    Ok(Codebook { columns, branch_time_us, generation_time_us: start.elapsed().as_secs_f64() * 1e6 })
}

/// `Y[tau]` = column `k[tau] - 1`, or zeros when nothing was admitted.
pub fn apply_codebook(book: &Codebook, admitted: &[usize], num_users: usize) -> Result<Vec<PuncturingVector>> {
    admitted
        .iter()
        .map(|&k| match k {
            0 => Ok(PuncturingVector::zeros(num_users)),
            k if k <= book.columns.len() => Ok(book.columns[k - 1].clone()),
            k => Err(Error::Contract(format!("{k} arrivals exceed the {} codebook branches", book.columns.len()))),
        })
        .collect()
}
