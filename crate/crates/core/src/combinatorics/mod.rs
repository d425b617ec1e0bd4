//! Harmonic analysis on finite configurations: the K-transform and its
//! inverse, the ⋆-convolution, coherent states, ordered partitions and
//! Lebesgue-Poisson integration.
//!
//! [`sites`] is exact on a [`SiteSpace`](crate::model::SiteSpace), where every
//! Lebesgue-Poisson integral is a finite subset sum. [`continuum`] works on
//! point configurations in a box, with Monte Carlo for the integrals.

pub mod continuum;
pub mod sites;

pub use continuum::{
    coherent_state, enumerate_partitions, k_inverse, k_transform, lp_integrate, star_convolution,
    ContinuumLpWeight, CylinderFunction, McEstimate, QuasiObservable,
};
pub use sites::{SiteFunction, SiteLpWeight};

/// Limits on exhaustive enumeration. Exceeding one is a
/// [`Error::Resource`](crate::Error::Resource), never a silent truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Sites for whole-space enumeration (`2^n` configurations).
    pub max_sites: usize,
    /// Points for `2^{|η|}` subset loops.
    pub max_subset_order: usize,
    /// Points for `3^{|η|}` partition loops.
    pub max_star_order: usize,
    /// Total `n^{|η|}` ordered partitions.
    pub max_partitions: u64,
    /// Terms in a truncated K-transform sum over sub-configurations.
    pub max_terms: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_sites: 12,
            max_subset_order: 20,
            max_star_order: 8,
            max_partitions: 1 << 20,
            max_terms: 1 << 22,
        }
    }
}

/// Calls `visit` with every ordered partition of the index set
/// `{0, …, len-1}` into `parts` possibly empty blocks, as bitmasks.
/// There are exactly `parts^len` of them.
pub fn for_each_partition(len: usize, parts: usize, mut visit: impl FnMut(&[u64])) {
    assert!(parts >= 1);
    assert!(len <= 64);
    let mut assign = vec![0usize; len];
    let mut blocks = vec![0u64; parts];
    loop {
        blocks.iter_mut().for_each(|b| *b = 0);
        for (i, &p) in assign.iter().enumerate() {
            blocks[p] |= 1 << i;
        }
        visit(&blocks);
        // base-`parts` increment
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            assign[i] += 1;
            if assign[i] < parts {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

/// `n^k` with saturation.
pub(crate) fn saturating_pow(n: u64, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, _| acc.saturating_mul(n))
}
