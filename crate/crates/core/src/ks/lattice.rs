//! Translation-invariant KS on a periodic grid of cells, the continuum
//! counterpart of the site-space solver. The unknowns are the density `k₁` and
//! the pair function `k₂` indexed by displacement cell; higher orders come
//! from the closure rule. Each cell carries its cell-averaged Mayer factor so
//! that discontinuities of the potential are integrated to first order in the
//! cell size.

use super::{contraction_estimate, norm_constant, track, Closure, FixedPointReport};
use crate::error::{check_cap, Error, Result};
use crate::model::{BoxGeometry, ModelParams, SpacePoint, MAX_DIM};
use rayon::prelude::*;

/// Largest number of cells.
pub const CELL_LIMIT: usize = 1 << 20;

/// Lattice KS problem for translation-invariant correlation functions in the
/// periodic box of `params`.
#[derive(Debug, Clone)]
pub struct LatticeKs {
    pub params: ModelParams,
    pub cells_per_axis: usize,
    pub r_max: usize,
    pub closure: Closure,
    /// Sub-cell midpoints per axis used to average the Mayer factor.
    pub subcells: usize,
    pub tol: f64,
    pub max_iter: usize,
}

/// Solution of a [`LatticeKs`] problem.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub k1: f64,
    /// `k₂` by displacement cell; entry 0 is unused and set to 0.
    pub k2: Vec<f64>,
    /// Distance of every displacement cell centre.
    pub distance: Vec<f64>,
    pub report: FixedPointReport,
}

struct Grid {
    n: usize,
    d: usize,
    total: usize,
}

impl Grid {
    fn coords(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for a in c.iter_mut().take(self.d) {
            *a = idx % self.n;
            idx /= self.n;
        }
        c
    }

    fn index(&self, c: &[usize; MAX_DIM]) -> usize {
        (0..self.d).rev().fold(0, |acc, a| acc * self.n + c[a])
    }

    fn add(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(j));
        let mut c = [0; MAX_DIM];
        for k in 0..self.d {
            c[k] = (a[k] + b[k]) % self.n;
        }
        self.index(&c)
    }

    fn sub(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(j));
        let mut c = [0; MAX_DIM];
        for k in 0..self.d {
            c[k] = (a[k] + self.n - b[k]) % self.n;
        }
        self.index(&c)
    }

    /// Minimum-image displacement of a cell, in cell units.
    fn offset(&self, i: usize) -> [f64; MAX_DIM] {
        let c = self.coords(i);
        let mut o = [0.0; MAX_DIM];
        for k in 0..self.d {
            let v = c[k] as f64;
            o[k] = if 2 * c[k] > self.n { v - self.n as f64 } else { v };
        }
        o
    }
}

impl LatticeKs {
    pub fn new(params: ModelParams, cells_per_axis: usize, r_max: usize) -> Self {
        Self {
            params,
            cells_per_axis,
            r_max,
            closure: Closure::Superposition,
            subcells: 8,
            tol: 1e-12,
            max_iter: 500,
        }
    }

    /// Solves by iteration from `k ≡ 1`.
    pub fn solve(&self) -> Result<LatticeSolution> {
        let geom: BoxGeometry = self.params.geometry;
        if !geom.is_periodic() {
            return Err(Error::Config("the lattice solver needs a periodic box".into()));
        }
        if self.cells_per_axis < 2 {
            return Err(Error::Config("need at least 2 cells per axis".into()));
        }
        let d = geom.dimension();
        let total = (self.cells_per_axis as u64).saturating_pow(d as u32);
        check_cap("lattice cells", total, CELL_LIMIT as u64)?;
        let grid = Grid {
            n: self.cells_per_axis,
            d,
            total: total as usize,
        };
        let h = geom.side() / grid.n as f64;
        let cell_volume = h.powi(d as i32);
        let pot = &self.params.potential;
        let z = self.params.z;
        let origin = SpacePoint::new(&[0.0; MAX_DIM][..d]);

        let distance: Vec<f64> = (0..grid.total)
            .map(|j| {
                let o = grid.offset(j);
                (0..d).map(|a| (o[a] * h).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        let boltz: Vec<f64> = distance.iter().map(|&r| pot.boltzmann(r)).collect();

        // cell-averaged Mayer factor, nonzero cells only
        let s = self.subcells.max(1);
        let sub_total = s.pow(d as u32);
        let reach = pot.range() + h * (d as f64).sqrt();
        let support: Vec<(usize, f64)> = (0..grid.total)
            .filter(|&j| distance[j] <= reach)
            .filter_map(|j| {
                let o = grid.offset(j);
                let mut acc = 0.0;
                for m in 0..sub_total {
                    let mut rem = m;
                    let mut c = [0.0; MAX_DIM];
                    for a in 0..d {
                        let u = ((rem % s) as f64 + 0.5) / s as f64 - 0.5;
                        rem /= s;
                        c[a] = (o[a] + u) * h;
                    }
                    acc += pot.mayer(geom.distance(&origin, &SpacePoint::new(&c[..d])));
                }
                let f = acc / sub_total as f64;
                (f != 0.0).then_some((j, z * cell_volume * f))
            })
            .collect();

        let mut k1 = 1.0;
        let mut k2 = vec![1.0; grid.total];
        k2[0] = 0.0;
        let mayer_norm: f64 = support.iter().map(|(_, a)| a.abs()).sum();
        let norm_c = norm_constant(mayer_norm);
        let mut report = FixedPointReport {
            iterations: 0,
            residual_history: Vec::new(),
            converged: false,
            diverged: false,
            contraction_estimate: contraction_estimate(&self.params)?,
            ruelle_c: 1.0,
            final_residual: f64::NAN,
        };
        while report.iterations < self.max_iter {
            let state = State {
                grid: &grid,
                k1,
                k2: &k2,
                closure: self.closure,
            };
            let new_k1 = state.moment(&[], 0, &support, self.r_max);
            let new_k2: Vec<f64> = (0..grid.total)
                .into_par_iter()
                .map(|j| {
                    if j == 0 || boltz[j] == 0.0 {
                        0.0
                    } else {
                        boltz[j] * state.moment(&[0], j, &support, self.r_max)
                    }
                })
                .collect();
            let d1 = (new_k1 - k1).abs();
            let d2 = new_k2.iter().zip(&k2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let weighted = (d1 / norm_c).max(d2 / (norm_c * norm_c));
            report.iterations += 1;
            report.residual_history.push(weighted);
            report.final_residual = d1.max(d2);
            k1 = new_k1;
            k2 = new_k2;
            report.ruelle_c = k1.max(k2.iter().cloned().fold(0.0, f64::max).sqrt());
            if !weighted.is_finite() || track(&report.residual_history) {
                report.diverged = true;
                break;
            }
            if weighted <= self.tol && report.final_residual <= self.tol {
                report.converged = true;
                break;
            }
        }
        Ok(LatticeSolution {
            k1,
            k2,
            distance,
            report,
        })
    }
}

struct State<'a> {
    grid: &'a Grid,
    k1: f64,
    k2: &'a [f64],
    closure: Closure,
}

impl State<'_> {
    fn k(&self, cells: &[usize]) -> f64 {
        match cells.len() {
            0 => 1.0,
            1 => self.k1,
            2 => self.k2[self.grid.sub(cells[1], cells[0])],
            m => {
                let power = self.k1.powi(m as i32);
                match self.closure {
                    Closure::Power => power,
                    Closure::Superposition => {
                        if power == 0.0 {
                            return 0.0;
                        }
                        let g = 1.0 / (self.k1 * self.k1);
                        let mut v = power;
                        for i in 0..m {
                            for j in 0..i {
                                v *= self.k2[self.grid.sub(cells[i], cells[j])] * g;
                            }
                        }
                        v
                    }
                }
            }
        }
    }

    /// `Σ_{ρ, |ρ| <= order} Π_{y∈ρ} a(y - x) k(base ∪ ρ)` with `ρ` ranging
    /// over sets of distinct cells outside `base`, located at `x + support`.
    fn moment(&self, base: &[usize], x: usize, support: &[(usize, f64)], order: usize) -> f64 {
        let cells: Vec<(usize, f64)> = support
            .iter()
            .map(|&(s, a)| (self.grid.add(x, s), a))
            .filter(|(c, _)| !base.contains(c))
            .collect();
        let mut buf = base.to_vec();
        let mut acc = 0.0;
        self.recurse(&cells, 0, 1.0, order, &mut buf, &mut acc);
        acc
    }

    fn recurse(&self, cells: &[(usize, f64)], start: usize, weight: f64, left: usize, buf: &mut Vec<usize>, acc: &mut f64) {
        *acc += weight * self.k(buf);
        if left == 0 {
            return;
        }
        for i in start..cells.len() {
            buf.push(cells[i].0);
            self.recurse(cells, i + 1, weight * cells[i].1, left - 1, buf, acc);
            buf.pop();
        }
    }
}

impl LatticeSolution {
    /// Mean of `k₂` over the displacement cells whose centre lies in each bin
    /// `[edges[i], edges[i+1])`; NaN for a bin without cells.
    pub fn radial_k2(&self, edges: &[f64]) -> Vec<f64> {
        edges
            .windows(2)
            .map(|w| {
                let (sum, count) = self
                    .distance
                    .iter()
                    .zip(&self.k2)
                    .skip(1)
                    .filter(|(r, _)| **r >= w[0] && **r < w[1])
                    .fold((0.0, 0usize), |(s, c), (_, k)| (s + k, c + 1));
                if count == 0 {
                    f64::NAN
                } else {
                    sum / count as f64
                }
            })
            .collect()
    }

    /// `(cells, k)` rows: `∅`, `{0}` and `{0, j}` for every other cell `j`.
    pub fn rows(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(vec![], 1.0), (vec![0], self.k1)];
        out.extend(self.k2.iter().enumerate().skip(1).map(|(j, &v)| (vec![0, j], v)));
        out
    }
}
