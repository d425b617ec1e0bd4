//! Uniform cell grid over the periodic box for neighbour queries.

use crate::error::{Error, Result};
use crate::model::{BoxGeometry, FiniteConfiguration, PairPotential, SpacePoint, MAX_DIM};

const CELL_CAP: usize = 1 << 16;

/// Maps cells to the indices of resident points. Cells are at least as wide
/// as the interaction range, so every interacting partner of a point lies in
/// its own or an adjacent cell.
#[derive(Debug, Clone)]
pub struct CellIndex {
    geometry: BoxGeometry,
    per_axis: usize,
    width: f64,
    cells: Vec<Vec<usize>>,
    /// `(cell, slot)` of every point, parallel to the configuration.
    location: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
}

impl CellIndex {
    pub fn new(geometry: BoxGeometry, range: f64) -> Self {
        let d = geometry.dimension();
        let side = geometry.side();
        // fewer than 3 cells per axis would make neighbour stencils overlap
        let m = if range > 0.0 { (side / range).floor() as usize } else { 1 };
        let cap = (CELL_CAP as f64).powf(1.0 / d as f64).floor() as usize;
        let per_axis = if geometry.is_periodic() && m >= 3 { m.min(cap) } else { 1 };
        let total = per_axis.pow(d as u32);
        let neighbours = (0..total)
            .map(|c| {
                let mut out = Vec::new();
                let base = Self::coords_of(c, per_axis, d);
                for m in 0..3usize.pow(d as u32) {
                    let mut rem = m;
                    let mut idx = 0;
                    let mut coords = [0usize; MAX_DIM];
                    for a in 0..d {
                        let step = rem % 3;
                        rem /= 3;
                        coords[a] = (base[a] + per_axis + step - 1) % per_axis;
                    }
                    for a in (0..d).rev() {
                        idx = idx * per_axis + coords[a];
                    }
                    if !out.contains(&idx) {
                        out.push(idx);
                    }
                }
                out
            })
            .collect();
        Self {
            geometry,
            per_axis,
            width: side / per_axis as f64,
            cells: vec![Vec::new(); total],
            location: Vec::new(),
            neighbours,
        }
    }

    fn coords_of(mut c: usize, per_axis: usize, d: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for o in out.iter_mut().take(d) {
            *o = c % per_axis;
            c /= per_axis;
        }
        out
    }

    pub fn cells_per_axis(&self) -> usize {
        self.per_axis
    }

    fn cell_of(&self, p: &SpacePoint) -> usize {
        let d = self.geometry.dimension();
        let mut idx = 0;
        for a in (0..d).rev() {
            let c = ((p.coord(a) / self.width).floor() as isize).clamp(0, self.per_axis as isize - 1) as usize;
            idx = idx * self.per_axis + c;
        }
        idx
    }

    /// Registers point number `i`, which must be the next index.
    pub fn insert(&mut self, i: usize, p: &SpacePoint) {
        debug_assert_eq!(i, self.location.len());
        let c = self.cell_of(p);
        self.location.push((c, self.cells[c].len()));
        self.cells[c].push(i);
    }

    /// Mirrors `swap_remove(i)` on a configuration of `len` points.
    pub fn swap_remove(&mut self, i: usize) {
        let (c, slot) = self.location[i];
        self.cells[c].swap_remove(slot);
        if let Some(&moved) = self.cells[c].get(slot) {
            self.location[moved].1 = slot;
        }
        let last = self.location.len() - 1;
        self.location.swap_remove(i);
        if i != last {
            // the former last point now has index i
            let (lc, ls) = self.location[i];
            self.cells[lc][ls] = i;
        }
    }

    pub fn rebuild(&mut self, config: &FiniteConfiguration) {
        for c in &mut self.cells {
            c.clear();
        }
        self.location.clear();
        for (i, p) in config.iter().enumerate() {
            self.insert(i, p);
        }
    }

    /// `E(x, γ)` summing over neighbouring cells only.
    pub fn relative_energy(&self, x: &SpacePoint, config: &FiniteConfiguration, pot: &PairPotential) -> f64 {
        if pot.is_zero() {
            return 0.0;
        }
        let mut e = 0.0;
        for &c in &self.neighbours[self.cell_of(x)] {
            for &j in &self.cells[c] {
                let v = pot.value(self.geometry.distance(x, &config.points()[j]));
                if v == f64::INFINITY {
                    return f64::INFINITY;
                }
                e += v;
            }
        }
        e
    }

    /// Verifies that the index mirrors `config` exactly.
    pub fn check(&self, config: &FiniteConfiguration) -> Result<()> {
        if self.location.len() != config.len() {
            return Err(Error::Invariant(format!(
                "cell index holds {} points, configuration {}",
                self.location.len(),
                config.len()
            )));
        }
        let stored: usize = self.cells.iter().map(Vec::len).sum();
        if stored != config.len() {
            return Err(Error::Invariant(format!("cells hold {stored} entries for {} points", config.len())));
        }
        for (i, p) in config.iter().enumerate() {
            let (c, slot) = self.location[i];
            if c != self.cell_of(p) || self.cells[c].get(slot) != Some(&i) {
                return Err(Error::Invariant(format!("point {i} is misfiled")));
            }
        }
        Ok(())
    }
}
