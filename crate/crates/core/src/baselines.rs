//! Benchmark puncturing rules: Resource-Proportional (RP) and Smallest-eMBB-First (SeF).

use crate::error::{Error, Result};
use crate::grid::{PuncturingVector, ScheduleVector};

fn check_demand(s: &ScheduleVector, demand: usize) -> Result<()> {
    let capacity = s.total();
    if demand > capacity {
        return Err(Error::InfeasibleDemand { demand, capacity });
    }
    Ok(())
}

/// Spreads `demand` in proportion to allocation size. Ideal shares are
/// integerized by largest remainder: floor everything, then hand the leftover
/// SCs to the largest fractional parts (ties to the lowest index).
pub fn rp_puncture(s: &ScheduleVector, demand: usize) -> Result<PuncturingVector> {
    check_demand(s, demand)?;
    let total = s.total();
    if demand == 0 {
        return Ok(PuncturingVector::zeros(s.num_users()));
    }
    // exact integer arithmetic: q_e = n_e * demand / total
    let mut out: Vec<usize> = s.alloc.iter().map(|&n| n * demand / total).collect();
    let mut order: Vec<usize> = (0..out.len()).collect();
    let rem = |e: usize| s.alloc[e] * demand % total;
    order.sort_by(|&a, &b| rem(b).cmp(&rem(a)).then(a.cmp(&b)));
    let leftover = demand - out.iter().sum::<usize>();
    for &e in order.iter().take(leftover) {
        out[e] += 1;
    }
    Ok(PuncturingVector(out))
}

/// Punctures the smallest allocations completely, in ascending size order
/// (ties to the lowest index), until `demand` is met; the last user touched
/// absorbs only the remainder.
pub fn sef_puncture(s: &ScheduleVector, demand: usize) -> Result<PuncturingVector> {
    check_demand(s, demand)?;
    let mut order: Vec<usize> = (0..s.num_users()).collect();
    order.sort_by_key(|&e| (s.alloc[e], e));
    let mut out = vec![0; s.num_users()];
    let mut left = demand;
    for e in order {
        if left == 0 {
            break;
        }
        let take = s.alloc[e].min(left);
        out[e] = take;
        left -= take;
    }
    Ok(PuncturingVector(out))
}
