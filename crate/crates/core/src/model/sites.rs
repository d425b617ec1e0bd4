use super::{boltzmann, BoxGeometry, PairPotential, SpacePoint};
use crate::error::{Error, Result};
use std::fmt;

/// A configuration on a [`SiteSpace`]: bit `i` set means site `i` is occupied.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SiteSet(pub u32);

impl SiteSet {
    pub const EMPTY: SiteSet = SiteSet(0);

    pub fn singleton(site: usize) -> Self {
        SiteSet(1 << site)
    }

    pub fn full(n: usize) -> Self {
        if n >= 32 {
            SiteSet(u32::MAX)
        } else {
            SiteSet((1u32 << n) - 1)
        }
    }

    pub fn from_sites(sites: &[usize]) -> Self {
        SiteSet(sites.iter().fold(0, |m, &s| m | 1 << s))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, site: usize) -> bool {
        self.0 >> site & 1 == 1
    }

    pub fn with(self, site: usize) -> Self {
        SiteSet(self.0 | 1 << site)
    }

    pub fn without(self, site: usize) -> Self {
        SiteSet(self.0 & !(1 << site))
    }

    pub fn union(self, other: Self) -> Self {
        SiteSet(self.0 | other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        SiteSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: Self) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Occupied sites in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let s = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(s)
            }
        })
    }

    /// All subsets of `self`, empty set first and `self` last.
    pub fn subsets(self) -> impl Iterator<Item = SiteSet> {
        let full = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some(cur.wrapping_sub(full) & full)
            };
            Some(SiteSet(cur))
        })
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Finite weighted discretization: every Lebesgue-Poisson integral over it is
/// an exact finite sum. Two distinct sites interact through the symmetric
/// matrix `φ_ij`; a site never interacts with itself, and a configuration
/// holds at most one particle per site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSpace {
    weights: Vec<f64>,
    potential: Vec<f64>,
    points: Option<Vec<SpacePoint>>,
}

/// Bitmask representation limit.
pub const SITE_LIMIT: usize = 32;

impl SiteSpace {
    /// `potential[i][j]` may be `+inf`; diagonal entries are ignored.
    pub fn new(weights: Vec<f64>, potential: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        if n > SITE_LIMIT {
            return Err(Error::Domain(format!("at most {SITE_LIMIT} sites, got {n}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("site weights must be positive, got {w}")));
        }
        if potential.len() != n || potential.iter().any(|row| row.len() != n) {
            return Err(Error::Domain(format!("potential matrix must be {n}x{n}")));
        }
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = potential[i][j];
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(Error::Domain(format!("phi[{i}][{j}] = {v} is not allowed")));
                }
                if v != potential[j][i] {
                    return Err(Error::Domain(format!("potential matrix not symmetric at ({i},{j})")));
                }
                flat[i * n + j] = v;
            }
        }
        Ok(Self {
            weights,
            potential: flat,
            points: None,
        })
    }

    /// Unit-weight sites without interaction.
    pub fn ideal(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n], vec![vec![0.0; n]; n])
    }

    /// Sites placed at `points` with weights (cell volumes), interacting via
    /// `pot` under the metric of `geometry`.
    pub fn from_points(
        points: Vec<SpacePoint>,
        weights: Vec<f64>,
        pot: &PairPotential,
        geometry: &BoxGeometry,
    ) -> Result<Self> {
        let n = points.len();
        let matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { pot.value(geometry.distance(&points[i], &points[j])) })
                    .collect()
            })
            .collect();
        let mut s = Self::new(weights, matrix)?;
        s.points = Some(points);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn all(&self) -> SiteSet {
        SiteSet::full(self.len())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> Option<&[SpacePoint]> {
        self.points.as_deref()
    }

    /// Total weight `m(S)`.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn phi(&self, i: usize, j: usize) -> f64 {
        self.potential[i * self.len() + j]
    }

    pub fn boltzmann(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            boltzmann(self.phi(i, j))
        }
    }

    /// Mayer factor `e^{-φ_ij} - 1`. The diagonal is `-1`: a site excludes a
    /// second particle on itself, which is what single occupancy means for
    /// the subset-sum Lebesgue-Poisson measure.
    pub fn mayer(&self, i: usize, j: usize) -> f64 {
        self.boltzmann(i, j) - 1.0
    }

    /// `Π_{s∈η} w_s`.
    pub fn weight_of(&self, eta: SiteSet) -> f64 {
        eta.iter().map(|s| self.weights[s]).product()
    }

    /// `E(x, γ)` for `x ∉ γ`.
    pub fn relative_energy(&self, x: usize, gamma: SiteSet) -> f64 {
        debug_assert!(!gamma.contains(x));
        let mut e = 0.0;
        for y in gamma.iter() {
            let v = self.phi(x, y);
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            e += v;
        }
        e
    }

    pub fn relative_energy_checked(&self, x: usize, gamma: SiteSet) -> Result<f64> {
        if gamma.contains(x) {
            return Err(Error::Domain(format!("site {x} is occupied in {gamma:?}")));
        }
        Ok(self.relative_energy(x, gamma))
    }

    /// `E(η)` over unordered pairs.
    pub fn total_energy(&self, eta: SiteSet) -> f64 {
        let sites: Vec<usize> = eta.iter().collect();
        let mut e = 0.0;
        for (k, &i) in sites.iter().enumerate() {
            for &j in &sites[..k] {
                let v = self.phi(i, j);
                if v == f64::INFINITY {
                    return f64::INFINITY;
                }
                e += v;
            }
        }
        e
    }

    /// Largest `-min(φ_ij, 0)`, the lower bound `a` of the matrix potential.
    pub fn lower_bound(&self) -> f64 {
        self.potential.iter().fold(0.0f64, |a, &v| a.max(-v))
    }

    /// Smallest `B >= 0` with `E(η) >= -B|η|` over all configurations.
    pub fn stability_constant(&self) -> f64 {
        self.all()
            .subsets()
            .filter(|s| !s.is_empty())
            .map(|s| -self.total_energy(s) / s.len() as f64)
            .fold(0.0, f64::max)
    }

    /// `max_x Σ_s w_s |e^{-φ_xs} - 1|`, the discrete Mayer integral including
    /// the self-exclusion term.
    pub fn mayer_norm(&self) -> f64 {
        (0..self.len())
            .map(|x| (0..self.len()).map(|s| self.weights[s] * self.mayer(x, s).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
