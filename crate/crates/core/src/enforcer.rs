//! Feasibility enforcer: maps a raw policy proposal onto a valid puncturing vector.
//!
//! Two steps. First a KL projection of the proposal `b` onto the capped
//! simplex `{0 <= m_e <= n_e, sum m_e = demand}`, whose minimizer has the
//! water-filling form `m_e = min(n_e, b_e / nu)`. Then Huntington-Hill
//! apportionment turns the continuous solution into integer SC counts that
//! still sum exactly to the demand.

use crate::error::{Error, Result};
use crate::grid::{PuncturingVector, ScheduleVector};

/// Upper bound on bisection steps when locating the water level.
pub const MAX_BISECTION_ITERS: usize = 200;

/// Raw, non-negative puncture proposal in SC units.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPolicySample(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousProjection {
    pub m_hat: Vec<f64>,
    /// Set when every user with positive proposal sits at its cap and the
    /// remaining demand had to be spread over zero-proposal users.
    pub degenerate: bool,
    pub iterations: usize,
}

/// Generalized KL divergence term `sum_e b_e ln(b_e / m_e)` with `0 ln 0 = 0`.
pub fn kl_divergence(b: &[f64], m: &[f64]) -> f64 {
    b.iter()
        .zip(m)
        .map(|(&b, &m)| if b == 0.0 { 0.0 } else if m == 0.0 { f64::INFINITY } else { b * (b / m).ln() })
        .sum()
}

fn check_inputs(b: &[f64], caps: &[usize]) -> Result<()> {
    if b.len() != caps.len() {
        return Err(Error::Shape(format!("proposal has {} entries, caps has {}", b.len(), caps.len())));
    }
    if let Some(x) = b.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Contract(format!("proposal entry {x} must be finite and non-negative")));
    }
    Ok(())
}

/// KL projection of `b` onto `{0 <= m <= caps, sum m = demand}`.
pub fn kl_project(b: &RawPolicySample, caps: &[usize], demand: f64) -> Result<ContinuousProjection> {
    let b = &b.0;
    check_inputs(b, caps)?;
    let capacity: usize = caps.iter().sum();
    if demand > capacity as f64 + 1e-9 * demand.max(1.0) || demand < 0.0 {
        return Err(Error::InfeasibleDemand { demand: demand.ceil() as usize, capacity });
    }
    let e = b.len();
    let mut m_hat = vec![0.0; e];
    if demand == 0.0 {
        return Ok(ContinuousProjection { m_hat, degenerate: false, iterations: 0 });
    }
    let positive: Vec<usize> = (0..e).filter(|&i| b[i] > 0.0 && caps[i] > 0).collect();
    let positive_cap: usize = positive.iter().map(|&i| caps[i]).sum();

    if positive_cap as f64 <= demand {
        // every positive user saturates; the remainder goes to zero-proposal
        // users in proportion to their residual capacity
        for &i in &positive {
            m_hat[i] = caps[i] as f64;
        }
        let rest = demand - positive_cap as f64;
        let others: Vec<usize> = (0..e).filter(|&i| !(b[i] > 0.0 && caps[i] > 0) && caps[i] > 0).collect();
        let other_cap: usize = others.iter().map(|&i| caps[i]).sum();
        let degenerate = rest > 0.0;
        if degenerate {
            for &i in &others {
                m_hat[i] = rest * caps[i] as f64 / other_cap as f64;
            }
        }
        return Ok(ContinuousProjection { m_hat, degenerate, iterations: 0 });
    }

    // Bisection on the scale t = 1/nu: S(t) = sum min(n_e, t b_e) is
    // non-decreasing and piecewise linear, S(0) = 0, S(t_hi) = positive_cap.
    let filled = |t: f64| positive.iter().map(|&i| (t * b[i]).min(caps[i] as f64)).sum::<f64>();
    let mut lo = 0.0;
    let mut hi = positive.iter().map(|&i| caps[i] as f64 / b[i]).fold(0.0, f64::max);
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS && hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if filled(mid) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    // Polish: with the active set fixed, the free users scale exactly.
    let t = 0.5 * (lo + hi);
    let capped: Vec<bool> = positive.iter().map(|&i| t * b[i] >= caps[i] as f64).collect();
    let capped_sum: f64 = positive.iter().zip(&capped).filter(|(_, &c)| c).map(|(&i, _)| caps[i] as f64).sum();
    let free_b: f64 = positive.iter().zip(&capped).filter(|(_, &c)| !c).map(|(&i, _)| b[i]).sum();
    let exact = if free_b > 0.0 { (demand - capped_sum) / free_b } else { t };
    for (&i, &c) in positive.iter().zip(&capped) {
        m_hat[i] = if c { caps[i] as f64 } else { (exact * b[i]).min(caps[i] as f64) };
    }
    Ok(ContinuousProjection { m_hat, degenerate: false, iterations })
}

/// Vector-Jacobian product of the projection with respect to `b`, holding the
/// active (capped) set fixed. Returns `dJ/db` given `dJ/dm_hat`.
pub fn kl_project_vjp(b: &[f64], caps: &[usize], proj: &ContinuousProjection, grad_m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    if proj.degenerate {
        return out;
    }
    let free: Vec<usize> =
        (0..b.len()).filter(|&i| b[i] > 0.0 && proj.m_hat[i] > 0.0 && proj.m_hat[i] < caps[i] as f64).collect();
    let s: f64 = free.iter().map(|&i| b[i]).sum();
    if s <= 0.0 {
        return out;
    }
    let r: f64 = free.iter().map(|&i| proj.m_hat[i]).sum();
    let weighted: f64 = free.iter().map(|&i| grad_m[i] * b[i]).sum::<f64>() / s;
    for &i in &free {
        out[i] = r / s * (grad_m[i] - weighted);
    }
    out
}

/// Huntington-Hill apportionment of `demand` SCs with quotas `m_hat` and per-user caps.
///
/// Seats are granted one at a time to the user with the highest priority
/// `m_e / sqrt(a_e (a_e + 1))`, where a user holding no seat yet has infinite
/// priority (ranked among themselves by `m_e`). Users at their cap are
/// skipped; zero-quota users are only served once every positive-quota user
/// is capped. Ties go to the lowest index.
pub fn apportion(m_hat: &[f64], caps: &[usize], demand: usize) -> Result<PuncturingVector> {
    if m_hat.len() != caps.len() {
        return Err(Error::Shape(format!("quota has {} entries, caps has {}", m_hat.len(), caps.len())));
    }
    let capacity: usize = caps.iter().sum();
    if demand > capacity {
        return Err(Error::InfeasibleDemand { demand, capacity });
    }
    let e = m_hat.len();
    let mut seats = vec![0usize; e];
    // priority key: (infinite?, value); compared lexicographically
    let key = |i: usize, a: usize| -> (bool, f64) {
        if a == 0 {
            (true, m_hat[i])
        } else {
            (false, m_hat[i] / ((a * (a + 1)) as f64).sqrt())
        }
    };
    for _ in 0..demand {
        let mut best: Option<(usize, (bool, f64))> = None;
        for i in 0..e {
            if seats[i] >= caps[i] || m_hat[i] <= 0.0 {
                continue;
            }
            let k = key(i, seats[i]);
            let better = match best {
                None => true,
                Some((_, bk)) => (k.0 && !bk.0) || (k.0 == bk.0 && k.1 > bk.1),
            };
            if better {
                best = Some((i, k));
            }
        }
        let i = match best {
            Some((i, _)) => i,
            // only zero-quota users have room left: fill by residual capacity
            None => (0..e)
                .filter(|&i| seats[i] < caps[i])
                .max_by(|&a, &b| (caps[a] - seats[a]).cmp(&(caps[b] - seats[b])).then(b.cmp(&a)))
                .expect("capacity checked above"),
        };
        seats[i] += 1;
    }
    Ok(PuncturingVector(seats))
}

/// Full enforcer for branch `j`: KL projection onto `sum = j * L`, then apportionment.
pub fn enforce(b: &RawPolicySample, s: &ScheduleVector, branch: usize, urllc_sc_len: usize) -> Result<PuncturingVector> {
    let demand = branch * urllc_sc_len;
    let capacity = s.total();
    if demand > capacity {
        return Err(Error::InfeasibleDemand { demand, capacity });
    }
    if demand == 0 {
        check_inputs(&b.0, &s.alloc)?;
        return Ok(PuncturingVector::zeros(s.num_users()));
    }
    let proj = kl_project(b, &s.alloc, demand as f64)?;
    apportion(&proj.m_hat, &s.alloc, demand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn unconstrained_projection_is_proportional() {
        let p = kl_project(&RawPolicySample(vec![8.0, 4.0, 4.0]), &[10, 10, 10], 12.0).unwrap();
        close(&p.m_hat, &[6.0, 3.0, 3.0]);
    }

    #[test]
    fn capped_projection() {
        let p = kl_project(&RawPolicySample(vec![8.0, 4.0, 4.0]), &[5, 10, 10], 12.0).unwrap();
        close(&p.m_hat, &[5.0, 3.5, 3.5]);
        assert!(p.iterations <= MAX_BISECTION_ITERS);
    }

    #[test]
    fn single_user_takes_demand() {
        let p = kl_project(&RawPolicySample(vec![0.3]), &[300], 300.0).unwrap();
        close(&p.m_hat, &[300.0]);
    }

    #[test]
    fn degenerate_branch_spreads_over_zero_users() {
        let p = kl_project(&RawPolicySample(vec![1.0, 0.0, 0.0]), &[2, 4, 2], 5.0).unwrap();
        assert!(p.degenerate);
        close(&p.m_hat, &[2.0, 2.0, 1.0]);
        let p = kl_project(&RawPolicySample(vec![0.0, 0.0]), &[2, 4], 3.0).unwrap();
        assert!(p.degenerate);
        close(&p.m_hat, &[1.0, 2.0]);
    }

    #[test]
    fn infeasible_demand() {
        assert!(matches!(
            kl_project(&RawPolicySample(vec![1.0, 1.0]), &[2, 2], 5.0),
            Err(Error::InfeasibleDemand { .. })
        ));
        assert!(apportion(&[1.0, 1.0], &[2, 2], 5).is_err());
    }

    #[test]
    fn huntington_hill_examples() {
        assert_eq!(apportion(&[5.0, 3.5, 3.5], &[5, 10, 10], 12).unwrap().0, vec![5, 4, 3]);
        assert_eq!(apportion(&[6.0, 3.0, 3.0], &[10, 10, 10], 12).unwrap().0, vec![6, 3, 3]);
        assert_eq!(apportion(&[2.0, 0.0, 7.0, 1.0], &[3, 3, 8, 3], 10).unwrap().0, vec![2, 0, 7, 1]);
    }

    #[test]
    fn enforce_chain() {
        let s = ScheduleVector::from_alloc(vec![5, 10, 10]);
        assert_eq!(enforce(&RawPolicySample(vec![8.0, 4.0, 4.0]), &s, 1, 12).unwrap().0, vec![5, 4, 3]);
        assert_eq!(enforce(&RawPolicySample(vec![8.0, 4.0, 4.0]), &s, 0, 12).unwrap().0, vec![0, 0, 0]);
        let fixed = RawPolicySample(vec![5.0, 4.0, 3.0]);
        assert_eq!(enforce(&fixed, &s, 1, 12).unwrap().0, vec![5, 4, 3]);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let b = [3.0, 1.5, 0.7, 2.2];
        let caps = [2, 10, 10, 10];
        let g = [0.3, -1.1, 0.8, 0.05];
        let f = |b: &[f64]| {
            let p = kl_project(&RawPolicySample(b.to_vec()), &caps, 9.0).unwrap();
            p.m_hat.iter().zip(&g).map(|(m, g)| m * g).sum::<f64>()
        };
        let proj = kl_project(&RawPolicySample(b.to_vec()), &caps, 9.0).unwrap();
        let analytic = kl_project_vjp(&b, &caps, &proj, &g);
        for i in 0..b.len() {
            let h = 1e-6;
            let mut up = b;
            let mut dn = b;
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-6, "coord {i}: {fd} vs {}", analytic[i]);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, f64)> {
        (1usize..8).prop_flat_map(|e| {
            (prop::collection::vec(0.01f64..10.0, e), prop::collection::vec(1usize..40, e)).prop_flat_map(|(b, caps)| {
                let total = caps.iter().sum::<usize>() as f64;
                (Just(b), Just(caps), 0.0..=total)
            })
        })
    }

    proptest! {
        #[test]
        fn projection_feasible_and_scale_invariant((b, caps, demand) in instance(), c in 0.01f64..100.0) {
            let p = kl_project(&RawPolicySample(b.clone()), &caps, demand).unwrap();
            let sum: f64 = p.m_hat.iter().sum();
            prop_assert!((sum - demand).abs() <= 1e-9 * demand.max(1.0));
            for (m, n) in p.m_hat.iter().zip(&caps) {
                prop_assert!(*m >= 0.0 && *m <= *n as f64 + 1e-12);
            }
            prop_assert!(p.iterations <= MAX_BISECTION_ITERS);
            let scaled: Vec<f64> = b.iter().map(|x| x * c).collect();
            let q = kl_project(&RawPolicySample(scaled), &caps, demand).unwrap();
            for (x, y) in p.m_hat.iter().zip(&q.m_hat) {
                prop_assert!((x - y).abs() <= 1e-9 * demand.max(1.0));
            }
        }

        #[test]
        fn apportion_respects_sum_and_caps((b, caps, demand) in instance()) {
            let d = demand.floor() as usize;
            let p = kl_project(&RawPolicySample(b), &caps, d as f64).unwrap();
            let a = apportion(&p.m_hat, &caps, d).unwrap();
            prop_assert_eq!(a.total(), d);
            for (x, n) in a.0.iter().zip(&caps) {
                prop_assert!(x <= n);
            }
        }

        #[test]
        fn integral_quotas_are_fixed_points(caps in prop::collection::vec(1usize..30, 1..8), seed in 0u64..1000) {
            let quotas: Vec<usize> = caps.iter().enumerate().map(|(i, &c)| (seed as usize + 7 * i) % (c + 1)).collect();
            let d = quotas.iter().sum::<usize>();
            let m: Vec<f64> = quotas.iter().map(|&q| q as f64).collect();
            prop_assert_eq!(apportion(&m, &caps, d).unwrap().0, quotas);
        }
    }
}
