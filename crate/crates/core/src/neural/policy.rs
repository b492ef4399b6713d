//! Tanh-squashed diagonal Gaussian policy head.
//!
//! The actor emits `2E` numbers per column: `E` means followed by `E`
//! log-standard-deviations. Actions are drawn with the reparameterization
//! `u = mu + sigma * eps`, `a = tanh(u)`, and the log-density includes the
//! change-of-variables correction for the tanh.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::enforcer::RawPolicySample;
use crate::error::{Error, Result};
use crate::grid::ScheduleVector;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Guard inside `log(1 - a^2 + eps)` so saturated actions keep a finite density.
pub const TANH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mu: Vec<f64>,
    /// Raw network output before clamping; kept so the clamp can mask gradients.
    pub raw_log_std: Vec<f64>,
}

impl GaussianHead {
    /// Splits one actor output column `[mu_1..mu_E, logstd_1..logstd_E]`.
    pub fn from_output(column: &[f64]) -> Result<Self> {
        if column.len() % 2 != 0 || column.is_empty() {
            return Err(Error::Shape(format!("actor output of length {} is not 2E", column.len())));
        }
        let e = column.len() / 2;
        Ok(Self { mu: column[..e].to_vec(), raw_log_std: column[e..].to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_std(&self, e: usize) -> f64 {
        self.raw_log_std[e].clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn std(&self, e: usize) -> f64 {
        self.log_std(e).exp()
    }
}

/// A reparameterized draw and what backprop needs to know about it.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub noise: Vec<f64>,
}

/// Deterministic part of the sampler: squashes `mu + sigma * noise`.
pub fn squash_with_noise(head: &GaussianHead, noise: &[f64]) -> SquashedSample {
    let mut action = Vec::with_capacity(head.dim());
    let mut log_prob = 0.0;
    for (e, &eps) in noise.iter().enumerate().take(head.dim()) {
        let u = head.mu[e] + head.std(e) * eps;
        let a = u.tanh();
        log_prob += -0.5 * eps * eps - head.log_std(e) - HALF_LN_2PI - (1.0 - a * a + TANH_EPS).ln();
        action.push(a);
    }
    SquashedSample { action, log_prob, noise: noise.to_vec() }
}

pub fn sample_squashed<R: Rng + ?Sized>(head: &GaussianHead, rng: &mut R) -> SquashedSample {
    let noise: Vec<f64> = (0..head.dim()).map(|_| rng.sample(StandardNormal)).collect();
    squash_with_noise(head, &noise)
}

/// Gradient of `J = f(a) + log_prob_coef * log_prob` with respect to the raw
/// head outputs `[mu, raw_log_std]`, given `df/da` and with the noise held fixed.
pub fn squashed_backward(head: &GaussianHead, sample: &SquashedSample, grad_action: &[f64], log_prob_coef: f64) -> Vec<f64> {
    let e = head.dim();
    let mut out = vec![0.0; 2 * e];
    for i in 0..e {
        let a = sample.action[i];
        let one_minus = 1.0 - a * a;
        // d(-ln(1 - a^2 + eps))/du = 2 a (1 - a^2) / (1 - a^2 + eps)
        let dcorr_du = 2.0 * a * one_minus / (one_minus + TANH_EPS);
        let dj_du = grad_action[i] * one_minus + log_prob_coef * dcorr_du;
        out[i] = dj_du;
        let ls = head.raw_log_std[i];
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls) {
            // u depends on log_std through sigma * eps; log N contributes -1
            out[e + i] = dj_du * head.std(i) * sample.noise[i] - log_prob_coef;
        }
    }
    out
}

/// Maps an action in `(-1, 1)^E` to a raw proposal in SC units: `b_e = (a_e + 1)/2 * n_e`.
pub fn action_to_scs(action: &[f64], s: &ScheduleVector) -> Result<RawPolicySample> {
    if action.len() != s.alloc.len() {
        return Err(Error::Shape(format!("action has {} entries, schedule has {}", action.len(), s.alloc.len())));
    }
    Ok(RawPolicySample(
        action.iter().zip(&s.alloc).map(|(&a, &n)| ((a + 1.0) * 0.5 * n as f64).clamp(0.0, n as f64)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn tiny_sigma_gives_tanh_of_mean() {
        let head = GaussianHead { mu: vec![0.3, -1.2], raw_log_std: vec![-25.0, -21.0] };
        let mut rng = SeedTree::new(1).stream("policy", &[]);
        let s = sample_squashed(&head, &mut rng);
        assert!((s.action[0] - 0.3f64.tanh()).abs() < 1e-8);
        assert!((s.action[1] - (-1.2f64).tanh()).abs() < 1e-8);
        assert!(head.std(0) >= LOG_STD_MIN.exp());
    }

    #[test]
    fn log_prob_finite_when_saturated() {
        let head = GaussianHead { mu: vec![30.0], raw_log_std: vec![0.0] };
        let s = squash_with_noise(&head, &[0.0]);
        assert!(s.action[0] > 0.999_999);
        assert!(s.log_prob.is_finite());
    }

    #[test]
    fn density_matches_monte_carlo_histogram() {
        // mu = 0, sigma = 1, E = 1; compare a histogram of a = tanh(u) with exp(log_prob)
        let head = GaussianHead { mu: vec![0.0], raw_log_std: vec![0.0] };
        let mut rng = SeedTree::new(99).stream("policy", &[]);
        let n = 1_000_000;
        let half = 0.025;
        let centers = [-0.5, 0.0, 0.5];
        let mut hits = [0usize; 3];
        for _ in 0..n {
            let a = sample_squashed(&head, &mut rng).action[0];
            for (k, c) in centers.iter().enumerate() {
                if (a - c).abs() < half {
                    hits[k] += 1;
                }
            }
        }
        for (k, &c) in centers.iter().enumerate() {
            let empirical = hits[k] as f64 / (n as f64 * 2.0 * half);
            // density of a at c: invert the squash to get the noise
            let u = c.atanh();
            let analytic = squash_with_noise(&head, &[u]).log_prob.exp();
            assert!((empirical - analytic).abs() / analytic < 0.02, "a={c}: {empirical} vs {analytic}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let head = GaussianHead { mu: vec![0.4, -0.7], raw_log_std: vec![-0.3, 0.5] };
        let noise = [0.8, -1.3];
        let w = [1.7, -0.4];
        let coef = -0.2;
        let objective = |h: &GaussianHead| {
            let s = squash_with_noise(h, &noise);
            s.action.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() + coef * s.log_prob
        };
        let s = squash_with_noise(&head, &noise);
        let g = squashed_backward(&head, &s, &w, coef);
        let eps = 1e-6;
        for i in 0..4 {
            let mut up = head.clone();
            let mut dn = head.clone();
            if i < 2 {
                up.mu[i] += eps;
                dn.mu[i] -= eps;
            } else {
                up.raw_log_std[i - 2] += eps;
                dn.raw_log_std[i - 2] -= eps;
            }
            let fd = (objective(&up) - objective(&dn)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn action_scaling() {
        let s = ScheduleVector::from_alloc(vec![72, 72, 72]);
        let b = action_to_scs(&[-1.0, 1.0, 0.0], &s).unwrap();
        assert_eq!(b.0, vec![0.0, 72.0, 36.0]);
        assert!(action_to_scs(&[0.0], &s).is_err());
    }
}
