//! Points, finite configurations, pair potentials and energy functionals.
//!
//! Energies use extended-real arithmetic: any `+inf` term makes the sum
//! `+inf`, and Boltzmann factors of `+inf` are exactly zero. Potentials are
//! bounded below by construction, so `-inf` and `NaN` never arise.

mod potential;
mod sites;

pub use potential::{MayerIntegral, PairPotential, Profile, StabilityReport};
pub use sites::{SiteSet, SiteSpace};

use crate::error::{Error, Result};
use rand::Rng;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// A point of the simulation box. Unused trailing coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpacePoint {
    coords: [f64; MAX_DIM],
}

impl SpacePoint {
    pub fn new(coords: &[f64]) -> Self {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { coords: c }
    }

    pub fn coords(&self) -> &[f64; MAX_DIM] {
        &self.coords
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.coords[axis]
    }
}

/// Axis-aligned box `[0, side)^d`, optionally with torus metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGeometry {
    dimension: usize,
    side: f64,
    periodic: bool,
}

impl BoxGeometry {
    pub fn new(dimension: usize, side: f64, periodic: bool) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dimension) {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::Domain(format!("box side must be positive, got {side}")));
        }
        Ok(Self {
            dimension,
            side,
            periodic,
        })
    }

    /// Periodic box, the default geometry.
    pub fn torus(dimension: usize, side: f64) -> Result<Self> {
        Self::new(dimension, side, true)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dimension as i32)
    }

    /// Minimum-image displacement `a - b`.
    pub fn displacement(&self, a: &SpacePoint, b: &SpacePoint) -> [f64; MAX_DIM] {
        let mut d = [0.0; MAX_DIM];
        for (axis, slot) in d.iter_mut().enumerate().take(self.dimension) {
            let mut delta = a.coords[axis] - b.coords[axis];
            if self.periodic {
                delta -= self.side * (delta / self.side).round();
            }
            *slot = delta;
        }
        d
    }

    pub fn distance(&self, a: &SpacePoint, b: &SpacePoint) -> f64 {
        self.displacement(a, b).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Maps a point back into `[0, side)^d`.
    pub fn wrap(&self, p: &SpacePoint) -> SpacePoint {
        let mut c = p.coords;
        for v in c.iter_mut().take(self.dimension) {
            *v = v.rem_euclid(self.side);
            if *v >= self.side {
                *v = 0.0;
            }
        }
        SpacePoint { coords: c }
    }

    pub fn contains(&self, p: &SpacePoint) -> bool {
        (0..self.dimension).all(|a| p.coords[a] >= 0.0 && p.coords[a] < self.side)
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SpacePoint {
        let mut c = [0.0; MAX_DIM];
        for v in c.iter_mut().take(self.dimension) {
            *v = rng.random::<f64>() * self.side;
        }
        SpacePoint { coords: c }
    }

    pub fn whole(&self) -> Region {
        Region::new(*self, &vec![0.0; self.dimension], &vec![self.side; self.dimension])
            .expect("full box is a valid region")
    }
}

/// Axis-aligned sub-box `[lo, hi)` of a [`BoxGeometry`]; the support window of
/// quasi-observables and the domain of birth integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    geometry: BoxGeometry,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
}

impl Region {
    pub fn new(geometry: BoxGeometry, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let d = geometry.dimension;
        if lo.len() != d || hi.len() != d {
            return Err(Error::Domain(format!("region bounds must have {d} coordinates")));
        }
        let mut l = [0.0; MAX_DIM];
        let mut h = [0.0; MAX_DIM];
        for a in 0..d {
            if !(0.0 <= lo[a] && lo[a] < hi[a] && hi[a] <= geometry.side) {
                return Err(Error::Domain(format!(
                    "region axis {a}: need 0 <= lo < hi <= side, got [{}, {})",
                    lo[a], hi[a]
                )));
            }
            l[a] = lo[a];
            h[a] = hi[a];
        }
        Ok(Self {
            geometry,
            lo: l,
            hi: h,
        })
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.geometry.dimension]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.geometry.dimension]
    }

    pub fn volume(&self) -> f64 {
        (0..self.geometry.dimension)
            .map(|a| self.hi[a] - self.lo[a])
            .product()
    }

    pub fn contains(&self, p: &SpacePoint) -> bool {
        (0..self.geometry.dimension).all(|a| p.coords[a] >= self.lo[a] && p.coords[a] < self.hi[a])
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SpacePoint {
        let mut c = [0.0; MAX_DIM];
        for (a, v) in c.iter_mut().enumerate().take(self.geometry.dimension) {
            *v = self.lo[a] + rng.random::<f64>() * (self.hi[a] - self.lo[a]);
        }
        SpacePoint { coords: c }
    }

    /// Midpoints of a `per_axis^d` tensor grid over the region, shifted by
    /// `shift` (fractions of a cell, each in `[0, 1)`); `shift = 0.5` gives
    /// the midpoint rule. Returns the nodes and the common cell volume.
    pub fn grid(&self, per_axis: usize, shift: &[f64; MAX_DIM]) -> (Vec<SpacePoint>, f64) {
        let d = self.geometry.dimension;
        let n = per_axis.max(1);
        let h: Vec<f64> = (0..d).map(|a| (self.hi[a] - self.lo[a]) / n as f64).collect();
        let total = n.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut c = [0.0; MAX_DIM];
            for a in 0..d {
                let i = rem % n;
                rem /= n;
                c[a] = self.lo[a] + (i as f64 + shift[a]) * h[a];
            }
            nodes.push(SpacePoint { coords: c });
        }
        (nodes, h.iter().product())
    }
}

/// A finite set of pairwise distinct points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FiniteConfiguration {
    points: Vec<SpacePoint>,
}

impl FiniteConfiguration {
    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    /// Builds a configuration, rejecting repeated points.
    pub fn new(points: Vec<SpacePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(Error::Domain(format!("point {i} repeats an earlier point")));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpacePoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpacePoint> {
        self.points.iter()
    }

    pub fn contains(&self, p: &SpacePoint) -> bool {
        self.points.contains(p)
    }

    /// `self ∪ {p}`; fails if `p` is already present.
    pub fn with(&self, p: SpacePoint) -> Result<Self> {
        if self.contains(&p) {
            return Err(Error::Domain("point already in configuration".into()));
        }
        let mut points = self.points.clone();
        points.push(p);
        Ok(Self { points })
    }

    /// `self ∖ {points[i]}`.
    pub fn without(&self, i: usize) -> Self {
        let mut points = self.points.clone();
        points.remove(i);
        Self { points }
    }

    pub fn restricted(&self, region: &Region) -> Self {
        Self {
            points: self.points.iter().copied().filter(|p| region.contains(p)).collect(),
        }
    }

    /// Sub-configuration selected by the bits of `mask` (bit `i` ↔ point `i`).
    pub fn select(&self, mask: u64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| *p)
                .collect(),
        }
    }

    pub(crate) fn push_unchecked(&mut self, p: SpacePoint) {
        self.points.push(p);
    }

    pub(crate) fn swap_remove(&mut self, i: usize) -> SpacePoint {
        self.points.swap_remove(i)
    }
}

impl FromIterator<SpacePoint> for FiniteConfiguration {
    /// Collects points without the distinctness check; callers guarantee it.
    fn from_iter<I: IntoIterator<Item = SpacePoint>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Physical parameters of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub z: f64,
    pub potential: PairPotential,
    pub geometry: BoxGeometry,
}

impl ModelParams {
    /// `z = 0` is accepted (pure-death dynamics).
    pub fn new(z: f64, potential: PairPotential, geometry: BoxGeometry) -> Result<Self> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::Domain(format!("activity must be finite and >= 0, got {z}")));
        }
        Ok(Self {
            z,
            potential,
            geometry,
        })
    }
}

/// `E(x, γ) = Σ_{y∈γ} φ(x−y)` under the box metric; `E(x, ∅) = 0`.
pub fn relative_energy(
    x: &SpacePoint,
    gamma: &FiniteConfiguration,
    pot: &PairPotential,
    geometry: &BoxGeometry,
) -> Result<f64> {
    if gamma.contains(x) {
        return Err(Error::Domain("x must not belong to gamma".into()));
    }
    Ok(relative_energy_unchecked(x, gamma.points(), pot, geometry))
}

pub(crate) fn relative_energy_unchecked(
    x: &SpacePoint,
    others: &[SpacePoint],
    pot: &PairPotential,
    geometry: &BoxGeometry,
) -> f64 {
    let mut e = 0.0;
    for y in others {
        let v = pot.value(geometry.distance(x, y));
        if v == f64::INFINITY {
            return f64::INFINITY;
        }
        e += v;
    }
    e
}

/// `E(η) = Σ_{{x,y}⊂η} φ(x−y)`, with `E(∅) = E({x}) = 0`.
pub fn total_energy(eta: &FiniteConfiguration, pot: &PairPotential, geometry: &BoxGeometry) -> f64 {
    let pts = eta.points();
    let mut e = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let v = pot.value(geometry.distance(&pts[i], &pts[j]));
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            e += v;
        }
    }
    e
}

/// `e^{-E}` with `e^{-inf} = 0`.
pub fn boltzmann(energy: f64) -> f64 {
    if energy == f64::INFINITY {
        0.0
    } else {
        (-energy).exp()
    }
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(dimension: usize, r: f64) -> f64 {
    use std::f64::consts::PI;
    match dimension {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r * r * r,
        _ => panic!("unsupported dimension {dimension}"),
    }
}

/// Surface area of the unit sphere in `d` dimensions.
pub(crate) fn unit_sphere_area(dimension: usize) -> f64 {
    use std::f64::consts::PI;
    match dimension {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {dimension}"),
    }
}
