//! The dynamics on a finite site space as an explicit continuous-time Markov
//! chain over the `2^n` configurations.

use crate::error::{check_cap, Error, Result};
use crate::model::{boltzmann, SiteSet, SiteSpace};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Largest space for the chain.
pub const CHAIN_SITE_LIMIT: usize = 12;
/// Largest space solved by dense LU; larger ones use uniformized power
/// iteration.
pub const DENSE_SITE_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryMethod {
    DenseLu,
    PowerIteration,
}

/// Rate matrix and stationary law of the site-space dynamics.
#[derive(Debug, Clone)]
pub struct FiniteSiteChain {
    n: usize,
    /// Outgoing `(target, rate)` per state.
    transitions: Vec<Vec<(usize, f64)>>,
    stationary: Vec<f64>,
    method: StationaryMethod,
}

/// Builds the chain: a particle on an occupied site dies at rate 1, and a
/// particle is born on a free site `s` at rate `z w_s e^{-E(s,γ)}`. Returns
/// the chain with its stationary distribution `πQ = 0`.
pub fn finite_site_chain(space: &SiteSpace, z: f64) -> Result<FiniteSiteChain> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::Domain(format!("activity must be >= 0, got {z}")));
    }
    let n = space.len();
    check_cap("chain sites", n as u64, CHAIN_SITE_LIMIT as u64)?;
    let states = 1usize << n;
    let transitions: Vec<Vec<(usize, f64)>> = (0..states)
        .map(|m| {
            let gamma = SiteSet(m as u32);
            let mut out = Vec::new();
            for s in 0..n {
                if gamma.contains(s) {
                    out.push((gamma.without(s).bits() as usize, 1.0));
                } else {
                    let rate = z * space.weight(s) * boltzmann(space.relative_energy(s, gamma));
                    if rate > 0.0 {
                        out.push((gamma.with(s).bits() as usize, rate));
                    }
                }
            }
            out
        })
        .collect();
    let (stationary, method) = if n <= DENSE_SITE_LIMIT {
        (dense_stationary(&transitions)?, StationaryMethod::DenseLu)
    } else {
        (power_stationary(&transitions)?, StationaryMethod::PowerIteration)
    };
    Ok(FiniteSiteChain {
        n,
        transitions,
        stationary,
        method,
    })
}

fn dense_stationary(transitions: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let m = transitions.len();
    // rows of Qᵀ, the last one replaced by the normalization
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (from, out) in transitions.iter().enumerate() {
        for &(to, r) in out {
            a[(to, from)] += r;
            a[(from, from)] -= r;
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular rate matrix".into()))?;
    Ok(pi.iter().map(|&p| p.max(0.0)).collect())
}

fn power_stationary(transitions: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let m = transitions.len();
    let exit: Vec<f64> = transitions.iter().map(|o| o.iter().map(|t| t.1).sum()).collect();
    let unif = exit.iter().cloned().fold(0.0, f64::max) * 1.05 + 1e-300;
    let mut pi = vec![1.0 / m as f64; m];
    for _ in 0..1_000_000 {
        let mut next: Vec<f64> = pi.iter().zip(&exit).map(|(p, e)| p * (1.0 - e / unif)).collect();
        for (from, out) in transitions.iter().enumerate() {
            for &(to, r) in out {
                next[to] += pi[from] * r / unif;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-17 {
            return Ok(pi);
        }
    }
    Err(Error::Numeric("power iteration did not settle".into()))
}

impl FiniteSiteChain {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// `π(γ)`, indexed by the bitmask of `γ`.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn method(&self) -> StationaryMethod {
        self.method
    }

    /// `Q(γ, γ')` for `γ ≠ γ'`.
    pub fn rate(&self, from: SiteSet, to: SiteSet) -> f64 {
        self.transitions[from.bits() as usize]
            .iter()
            .find(|(t, _)| *t == to.bits() as usize)
            .map_or(0.0, |t| t.1)
    }

    /// Largest `|π·Q|` entry, the balance defect of a distribution.
    pub fn balance_defect(&self, pi: &[f64]) -> f64 {
        let mut flow = vec![0.0; pi.len()];
        for (from, out) in self.transitions.iter().enumerate() {
            for &(to, r) in out {
                flow[to] += pi[from] * r;
                flow[from] -= pi[from] * r;
            }
        }
        flow.iter().map(|f| f.abs()).fold(0.0, f64::max)
    }

    /// Simulates the jump chain from `start` up to time `t_max` and returns
    /// the fraction of time spent in every state.
    pub fn simulate<R: Rng + ?Sized>(&self, start: SiteSet, t_max: f64, rng: &mut R) -> Vec<f64> {
        let mut occupation = vec![0.0; self.transitions.len()];
        let mut state = start.bits() as usize;
        let mut t = 0.0;
        while t < t_max {
            let out = &self.transitions[state];
            let total: f64 = out.iter().map(|x| x.1).sum();
            let dt = if total > 0.0 {
                Exp::new(total).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            };
            let stay = dt.min(t_max - t);
            occupation[state] += stay;
            t += stay;
            if t >= t_max {
                break;
            }
            let mut u = rng.random::<f64>() * total;
            let mut next = out[out.len() - 1].0;
            for &(to, r) in out {
                if u < r {
                    next = to;
                    break;
                }
                u -= r;
            }
            state = next;
        }
        occupation.iter_mut().for_each(|o| *o /= t_max);
        occupation
    }
}
