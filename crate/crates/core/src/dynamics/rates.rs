//! Birth rates on the nodes of a midpoint grid, kept current event by event.

use super::cells::CellIndex;
use crate::error::{Error, Result};
use crate::model::{boltzmann, BoxGeometry, FiniteConfiguration, PairPotential, SpacePoint, MAX_DIM};

/// `e^{-E(node, γ)}` for every node, summed in a binary tree so that the
/// total and the draw of a node by rate both cost `O(log nodes)`. Each leaf
/// is recomputed from scratch when a particle within range appears or
/// disappears, so the sums carry no drift from repeated updates.
#[derive(Debug, Clone)]
pub(crate) struct RateGrid {
    geometry: BoxGeometry,
    per_axis: usize,
    spacing: f64,
    cell_volume: f64,
    /// Nodes per axis on either side of a changed particle to refresh.
    reach: usize,
    nodes: Vec<SpacePoint>,
    leaves: usize,
    tree: Vec<f64>,
}

impl RateGrid {
    pub(crate) fn new(
        geometry: BoxGeometry,
        per_axis: usize,
        config: &FiniteConfiguration,
        index: &CellIndex,
        pot: &PairPotential,
    ) -> Self {
        let (nodes, cell_volume) = geometry.whole().grid(per_axis, &[0.5; MAX_DIM]);
        let spacing = geometry.side() / per_axis as f64;
        let leaves = nodes.len().next_power_of_two();
        let mut grid = Self {
            geometry,
            per_axis,
            spacing,
            cell_volume,
            reach: (pot.range() / spacing).ceil() as usize + 1,
            nodes,
            leaves,
            tree: vec![0.0; 2 * leaves],
        };
        for i in 0..grid.nodes.len() {
            grid.tree[leaves + i] = boltzmann(index.relative_energy(&grid.nodes[i], config, pot));
        }
        for p in (1..leaves).rev() {
            grid.tree[p] = grid.tree[2 * p] + grid.tree[2 * p + 1];
        }
        grid
    }

    pub(crate) fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub(crate) fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `Σ_nodes e^{-E(node, γ)}`.
    pub(crate) fn total(&self) -> f64 {
        self.tree[1]
    }

    pub(crate) fn node(&self, i: usize) -> &SpacePoint {
        &self.nodes[i]
    }

    /// Node whose cumulative-rate interval holds `target ∈ [0, total)`.
    pub(crate) fn find(&self, mut target: f64) -> usize {
        let mut p = 1;
        while p < self.leaves {
            if target < self.tree[2 * p] {
                p *= 2;
            } else {
                target -= self.tree[2 * p];
                p = 2 * p + 1;
            }
        }
        (p - self.leaves).min(self.nodes.len() - 1)
    }

    fn set(&mut self, i: usize, rate: f64) {
        let mut p = self.leaves + i;
        self.tree[p] = rate;
        while p > 1 {
            p /= 2;
            self.tree[p] = self.tree[2 * p] + self.tree[2 * p + 1];
        }
    }

    /// Recomputes every node within interaction range of `x` after a
    /// particle at `x` was added or removed.
    pub(crate) fn refresh_near(&mut self, x: &SpacePoint, config: &FiniteConfiguration, index: &CellIndex, pot: &PairPotential) {
        let d = self.geometry.dimension();
        let n = self.per_axis;
        let full = 2 * self.reach + 1 >= n;
        let span = if full { n } else { 2 * self.reach + 1 };
        let mut base = [0usize; MAX_DIM];
        for (a, b) in base.iter_mut().enumerate().take(d) {
            *b = ((x.coord(a) / self.spacing).floor() as usize).min(n - 1);
        }
        for m in 0..span.pow(d as u32) {
            let mut rem = m;
            let mut idx = 0;
            let mut stride = 1;
            for &b in base.iter().take(d) {
                let step = rem % span;
                rem /= span;
                let i = if full { step } else { (b + n + step - self.reach) % n };
                idx += i * stride;
                stride *= n;
            }
            let rate = boltzmann(index.relative_energy(&self.nodes[idx], config, pot));
            self.set(idx, rate);
        }
    }

    /// Compares every leaf with a fresh evaluation.
    pub(crate) fn check(&self, config: &FiniteConfiguration, index: &CellIndex, pot: &PairPotential) -> Result<()> {
        for (i, x) in self.nodes.iter().enumerate() {
            let fresh = boltzmann(index.relative_energy(x, config, pot));
            if fresh != self.tree[self.leaves + i] {
                return Err(Error::Invariant(format!(
                    "birth rate at node {i} is stale: stored {}, actual {fresh}",
                    self.tree[self.leaves + i]
                )));
            }
        }
        Ok(())
    }
}
