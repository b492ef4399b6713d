//! Random LDPC codes on a bipartite graph and the erasure-channel peeling decoder.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedTree;

/// Parity structure of an LDPC code, stored as check-to-variable and
/// variable-to-check adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    var_degree: usize,
    seed: u64,
    checks: Vec<Vec<u32>>,
    vars: Vec<Vec<u32>>,
}

impl LdpcCode {
    /// Regular `(dv, dc)` code of length `n`.
    pub fn regular(n: usize, dv: usize, dc: usize, seed: u64) -> Result<Self> {
        if dc == 0 || (dv * n) % dc != 0 {
            return Err(Error::Contract(format!("dv*n = {} not divisible by dc = {dc}", dv * n)));
        }
        Self::build(n, dv, vec![dc; dv * n / dc], seed)
    }

    /// Variable-regular code with `n - round(rate * n)` checks whose degrees
    /// differ by at most one, so the design rate tracks `rate`.
    pub fn with_rate(n: usize, dv: usize, rate: f64, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Contract(format!("code rate {rate} outside (0, 1)")));
        }
        let info = (rate * n as f64).round() as usize;
        let m = n.saturating_sub(info).max(1);
        let edges = dv * n;
        let base = edges / m;
        let extra = edges % m;
        let degrees = (0..m).map(|c| base + usize::from(c < extra)).collect();
        Self::build(n, dv, degrees, seed)
    }

    fn build(n: usize, dv: usize, check_degrees: Vec<usize>, seed: u64) -> Result<Self> {
        let m = check_degrees.len();
        if n == 0 || dv == 0 || m < dv {
            return Err(Error::Contract(format!("cannot build code with n={n}, dv={dv}, {m} checks")));
        }
        if check_degrees.iter().any(|&d| d == 0 || d > n) {
            return Err(Error::Contract("check degree must lie in 1..=n".into()));
        }
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        for d in &check_degrees {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut rng = SeedTree::new(seed).stream("ldpc-construction", &[n as u64, dv as u64, m as u64]);
        let mut owner = vec![0u32; dv * n];
        for (c, w) in offsets.windows(2).enumerate() {
            owner[w[0]..w[1]].fill(c as u32);
        }

        'attempt: for _ in 0..64 {
            // configuration model: shuffle variable sockets onto check sockets
            let mut sockets: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, dv)).collect();
            sockets.shuffle(&mut rng);
            let in_check = |sockets: &[u32], c: usize, v: u32, skip: usize| {
                (offsets[c]..offsets[c + 1]).any(|i| i != skip && sockets[i] == v)
            };
            // remove parallel edges by swapping sockets between checks
            let mut budget = 200 * sockets.len();
            let mut i = 0;
            while i < sockets.len() {
                let c = owner[i] as usize;
                if !in_check(&sockets, c, sockets[i], i) {
                    i += 1;
                    continue;
                }
                if budget == 0 {
                    continue 'attempt;
                }
                budget -= 1;
                let j = rng.random_range(0..sockets.len());
                let c2 = owner[j] as usize;
                if c2 == c || in_check(&sockets, c, sockets[j], i) || in_check(&sockets, c2, sockets[i], j) {
                    continue;
                }
                // neither check gains a duplicate, so earlier positions stay clean
                sockets.swap(i, j);
            }
            let checks: Vec<Vec<u32>> = offsets.windows(2).map(|w| sockets[w[0]..w[1]].to_vec()).collect();
            let mut vars = vec![Vec::with_capacity(dv); n];
            for (c, nb) in checks.iter().enumerate() {
                for &v in nb {
                    vars[v as usize].push(c as u32);
                }
            }
            return Ok(Self { n, var_degree: dv, seed, checks, vars });
        }
        Err(Error::Contract(format!("failed to build a simple graph for n={n}, dv={dv}")))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn var_degree(&self) -> usize {
        self.var_degree
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn check_neighbors(&self, c: usize) -> &[u32] {
        &self.checks[c]
    }

    pub fn var_neighbors(&self, v: usize) -> &[u32] {
        &self.vars[v]
    }

    /// Peeling decoder over a boolean erasure mask of length `n`.
    pub fn peel_mask(&self, erased: &[bool]) -> bool {
        assert_eq!(erased.len(), self.n, "erasure mask length must equal code length");
        let mut erased = erased.to_vec();
        let mut remaining = erased.iter().filter(|&&e| e).count();
        if remaining == 0 {
            return true;
        }
        let mut count: Vec<u32> =
            self.checks.iter().map(|nb| nb.iter().filter(|&&v| erased[v as usize]).count() as u32).collect();
        let mut ready: Vec<usize> = (0..self.checks.len()).filter(|&c| count[c] == 1).collect();
        while let Some(c) = ready.pop() {
            if count[c] != 1 {
                continue;
            }
            let Some(&v) = self.checks[c].iter().find(|&&v| erased[v as usize]) else {
                continue;
            };
            erased[v as usize] = false;
            remaining -= 1;
            for &c2 in &self.vars[v as usize] {
                let c2 = c2 as usize;
                count[c2] -= 1;
                if count[c2] == 1 {
                    ready.push(c2);
                }
            }
        }
        remaining == 0
    }
}

/// Iterative peeling: resolve any check with exactly one erased neighbour until
/// nothing changes. Succeeds iff every erasure is recovered.
pub fn peel_decode(code: &LdpcCode, erased: &[usize]) -> Result<bool> {
    let mut mask = vec![false; code.len()];
    for &i in erased {
        if i >= code.len() {
            return Err(Error::Contract(format!("erased index {i} outside code of length {}", code.len())));
        }
        mask[i] = true;
    }
    Ok(code.peel_mask(&mask))
}
