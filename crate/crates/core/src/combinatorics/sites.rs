//! Exact calculus on a site space. A quasi-observable is a dense table over
//! all `2^n` site configurations.

use super::Caps;
use crate::error::{check_cap, Error, Result};
use crate::model::{SiteSet, SiteSpace};
use rand::Rng;
use std::ops::Index;

/// Function on the configurations of an `n`-site space.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFunction {
    n: usize,
    values: Vec<f64>,
}

impl SiteFunction {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= 24, "dense site tables are limited to 24 sites");
        Self {
            n,
            values: vec![0.0; 1 << n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(SiteSet) -> f64) -> Self {
        let mut g = Self::zeros(n);
        for (m, v) in g.values.iter_mut().enumerate() {
            *v = f(SiteSet(m as u32));
        }
        g
    }

    /// Indicator of the empty configuration; its K-transform is `≡ 1`.
    pub fn empty_indicator(n: usize) -> Self {
        let mut g = Self::zeros(n);
        g.values[0] = 1.0;
        g
    }

    /// Indicator of one-point configurations; its K-transform counts points.
    pub fn singleton_indicator(n: usize) -> Self {
        Self::from_fn(n, |s| if s.len() == 1 { 1.0 } else { 0.0 })
    }

    /// Coherent state `e_λ(f, η) = Π_{s∈η} f(s)`.
    pub fn coherent(f: &[f64]) -> Self {
        Self::from_fn(f.len(), |s| coherent_state(f, s))
    }

    /// Uniform values in `[-1, 1]` on configurations inside `support` with at
    /// most `order` points, zero elsewhere.
    pub fn random<R: Rng + ?Sized>(n: usize, support: SiteSet, order: usize, rng: &mut R) -> Self {
        Self::from_fn(n, |s| {
            if s.is_subset_of(support) && s.len() <= order {
                rng.random_range(-1.0..=1.0)
            } else {
                0.0
            }
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: SiteSet) -> f64 {
        self.values[s.0 as usize]
    }

    pub fn set(&mut self, s: SiteSet, v: f64) {
        self.values[s.0 as usize] = v;
    }

    pub fn configurations(&self) -> impl Iterator<Item = SiteSet> {
        (0..self.values.len() as u32).map(SiteSet)
    }

    /// Union of the configurations where the value is nonzero.
    pub fn support(&self) -> SiteSet {
        self.configurations()
            .filter(|&s| self.get(s) != 0.0)
            .fold(SiteSet::EMPTY, SiteSet::union)
    }

    /// Largest `|η|` with a nonzero value.
    pub fn order_bound(&self) -> usize {
        self.configurations()
            .filter(|&s| self.get(s) != 0.0)
            .map(SiteSet::len)
            .max()
            .unwrap_or(0)
    }

    /// `sup |G|`.
    pub fn magnitude_bound(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn linear_combination(a: f64, g1: &Self, b: f64, g2: &Self) -> Self {
        assert_eq!(g1.n, g2.n);
        Self {
            n: g1.n,
            values: g1.values.iter().zip(&g2.values).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// `G(· ∪ {x})` as a new table.
    pub fn shifted(&self, x: usize) -> Self {
        Self::from_fn(self.n, |s| self.get(s.with(x)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

impl Index<SiteSet> for SiteFunction {
    type Output = f64;
    fn index(&self, s: SiteSet) -> &f64 {
        &self.values[s.0 as usize]
    }
}

/// `(KG)(γ) = Σ_{η⊆γ} G(η)`.
pub fn k_transform(g: &SiteFunction, gamma: SiteSet) -> f64 {
    gamma.subsets().map(|eta| g.get(eta)).sum()
}

/// The whole image `KG` via the subset-sum (zeta) transform, `O(n 2^n)`.
pub fn k_transform_table(g: &SiteFunction) -> SiteFunction {
    let mut out = g.clone();
    for bit in 0..g.n {
        for m in 0..out.values.len() {
            if m >> bit & 1 == 1 {
                out.values[m] += out.values[m ^ (1 << bit)];
            }
        }
    }
    out
}

/// `(K⁻¹F)(η) = Σ_{ξ⊆η} (-1)^{|η∖ξ|} F(ξ)`.
pub fn k_inverse(f: impl Fn(SiteSet) -> f64, eta: SiteSet, caps: &Caps) -> Result<f64> {
    check_cap("K-inverse subset loop", eta.len() as u64, caps.max_subset_order as u64)?;
    let n = eta.len();
    Ok(eta
        .subsets()
        .map(|xi| {
            let sign = if (n - xi.len()).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * f(xi)
        })
        .sum())
}

/// The whole preimage `K⁻¹F` via the Möbius transform.
pub fn k_inverse_table(f: &SiteFunction) -> SiteFunction {
    let mut out = f.clone();
    for bit in 0..f.n {
        for m in 0..out.values.len() {
            if m >> bit & 1 == 1 {
                out.values[m] -= out.values[m ^ (1 << bit)];
            }
        }
    }
    out
}

/// `(G₁ ⋆ G₂)(η) = Σ_{(η₁,η₂,η₃)∈𝒫₃(η)} G₁(η₁∪η₂) G₂(η₂∪η₃)`.
pub fn star_convolution(
    g1: impl Fn(SiteSet) -> f64,
    g2: impl Fn(SiteSet) -> f64,
    eta: SiteSet,
    caps: &Caps,
) -> Result<f64> {
    check_cap("star-convolution partitions", eta.len() as u64, caps.max_star_order as u64)?;
    Ok(star_unchecked(&g1, &g2, eta))
}

pub(crate) fn star_unchecked(
    g1: &impl Fn(SiteSet) -> f64,
    g2: &impl Fn(SiteSet) -> f64,
    eta: SiteSet,
) -> f64 {
    let mut acc = 0.0;
    for mid in eta.subsets() {
        let rest = eta.minus(mid);
        for left in rest.subsets() {
            let right = rest.minus(left);
            acc += g1(left.union(mid)) * g2(mid.union(right));
        }
    }
    acc
}

pub fn star_table(g1: &SiteFunction, g2: &SiteFunction, caps: &Caps) -> Result<SiteFunction> {
    assert_eq!(g1.n, g2.n);
    check_cap("star-convolution partitions", g1.n as u64, caps.max_star_order as u64)?;
    Ok(SiteFunction::from_fn(g1.n, |eta| {
        star_unchecked(&|s| g1.get(s), &|s| g2.get(s), eta)
    }))
}

/// `e_λ(f, η) = Π_{s∈η} f(s)`, with `e_λ(f, ∅) = 1`.
pub fn coherent_state(f: &[f64], eta: SiteSet) -> f64 {
    eta.iter().map(|s| f[s]).product()
}

/// Ordered partitions of `eta` into `n` possibly empty blocks.
pub fn enumerate_partitions(eta: SiteSet, n: usize, caps: &Caps) -> Result<Vec<Vec<SiteSet>>> {
    if n == 0 {
        return Err(Error::Domain("partitions need at least one block".into()));
    }
    let count = super::saturating_pow(n as u64, eta.len());
    check_cap("ordered partitions", count, caps.max_partitions)?;
    let sites: Vec<usize> = eta.iter().collect();
    let mut out = Vec::with_capacity(count as usize);
    super::for_each_partition(sites.len(), n, |blocks| {
        out.push(
            blocks
                .iter()
                .map(|&b| {
                    SiteSet(
                        sites
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| b >> i & 1 == 1)
                            .fold(0, |m, (_, &s)| m | 1 << s),
                    )
                })
                .collect(),
        );
    });
    Ok(out)
}

/// The Lebesgue-Poisson measure `λ_z` on a site space:
/// `λ_z({η}) = z^{|η|} Π_{s∈η} w_s`.
#[derive(Debug, Clone, Copy)]
pub struct SiteLpWeight<'a> {
    pub space: &'a SiteSpace,
    pub z: f64,
}

impl<'a> SiteLpWeight<'a> {
    pub fn new(space: &'a SiteSpace, z: f64) -> Self {
        Self { space, z }
    }

    /// `λ_z({η})`.
    pub fn mass(&self, eta: SiteSet) -> f64 {
        self.z.powi(eta.len() as i32) * self.space.weight_of(eta)
    }

    /// `∫ G dλ_z = Σ_{η⊆S} z^{|η|} (Π w) G(η)`, exact.
    pub fn integrate(&self, g: impl Fn(SiteSet) -> f64, caps: &Caps) -> Result<f64> {
        check_cap("site enumeration", self.space.len() as u64, caps.max_sites as u64)?;
        Ok(self
            .space
            .all()
            .subsets()
            .map(|eta| self.mass(eta) * g(eta))
            .sum())
    }

    /// `∫…∫ H(η₁,…,ηₙ) dλ_z(η₁)…dλ_z(ηₙ)`. Tuples with overlapping blocks have
    /// measure zero in the continuum and are excluded here, so the sum runs
    /// over pairwise disjoint tuples only.
    pub fn integrate_tuples(&self, n: usize, h: impl Fn(&[SiteSet]) -> f64, caps: &Caps) -> Result<f64> {
        let sites = self.space.len();
        check_cap("site enumeration", sites as u64, caps.max_sites as u64)?;
        if n == 0 {
            return Err(Error::Domain("need at least one integral".into()));
        }
        // independent nested loops over subsets, discarding overlaps
        let all = self.space.all();
        let mut blocks = vec![SiteSet::EMPTY; n];
        let mut acc = 0.0;
        self.nested(0, all, &mut blocks, &h, &mut acc);
        Ok(acc)
    }

    fn nested(
        &self,
        depth: usize,
        all: SiteSet,
        blocks: &mut Vec<SiteSet>,
        h: &impl Fn(&[SiteSet]) -> f64,
        acc: &mut f64,
    ) {
        if depth == blocks.len() {
            let w: f64 = blocks.iter().map(|&b| self.mass(b)).product();
            *acc += w * h(blocks);
            return;
        }
        for b in all.subsets() {
            if blocks[..depth].iter().all(|&p| p.is_disjoint(b)) {
                blocks[depth] = b;
                self.nested(depth + 1, all, blocks, h, acc);
            }
        }
    }

    /// `∫ e_λ(f) dλ_z = Π_s (1 + z w_s f(s))`.
    pub fn coherent_expectation(&self, f: &[f64]) -> f64 {
        (0..self.space.len())
            .map(|s| 1.0 + self.z * self.space.weight(s) * f[s])
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn k_transform_of_empty_indicator_is_one() {
        let g = SiteFunction::empty_indicator(4);
        for gamma in SiteSet::full(4).subsets() {
            assert_eq!(k_transform(&g, gamma), 1.0);
        }
    }

    #[test]
    fn k_transform_of_singletons_counts_points() {
        let g = SiteFunction::singleton_indicator(5);
        for gamma in SiteSet::full(5).subsets() {
            assert_eq!(k_transform(&g, gamma), gamma.len() as f64);
        }
    }

    #[test]
    fn k_transform_of_coherent_state_is_product() {
        let f = [0.3, -0.7, 1.9, 0.0];
        let g = SiteFunction::coherent(&f);
        for gamma in SiteSet::full(4).subsets() {
            let expected: f64 = gamma.iter().map(|s| 1.0 + f[s]).product();
            assert!((k_transform(&g, gamma) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn k_inverse_of_constant_is_empty_indicator() {
        for eta in SiteSet::full(4).subsets() {
            let v = k_inverse(|_| 1.0, eta, &caps()).unwrap();
            assert_eq!(v, if eta.is_empty() { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn k_inverse_of_count() {
        for eta in SiteSet::full(5).subsets() {
            let v = k_inverse(|s| s.len() as f64, eta, &caps()).unwrap();
            assert_eq!(v, if eta.len() == 1 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn k_round_trip_five_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = SiteFunction::random(5, SiteSet::full(5), 5, &mut rng);
        let kg = k_transform_table(&g);
        for eta in SiteSet::full(5).subsets() {
            assert!((kg.get(eta) - k_transform(&g, eta)).abs() < 1e-13);
            let back = k_inverse(|s| k_transform(&g, s), eta, &caps()).unwrap();
            assert!((back - g.get(eta)).abs() < 1e-12);
        }
        assert!(k_inverse_table(&kg).max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn k_inverse_respects_cap() {
        let tight = Caps {
            max_subset_order: 3,
            ..Caps::default()
        };
        let err = k_inverse(|_| 1.0, SiteSet::full(4), &tight).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn star_of_coherent_states() {
        let f = [0.4, -1.2, 0.9, 2.0];
        let g = [-0.3, 0.5, 1.1, -0.8];
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b + a * b).collect();
        for eta in SiteSet::full(4).subsets() {
            let lhs = star_convolution(|s| coherent_state(&f, s), |s| coherent_state(&g, s), eta, &caps()).unwrap();
            assert!((lhs - coherent_state(&fg, eta)).abs() < 1e-13);
        }
    }

    #[test]
    fn star_unit_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = SiteFunction::random(4, SiteSet::full(4), 4, &mut rng);
        let unit = SiteFunction::coherent(&[0.0; 4]);
        let prod = star_table(&g, &unit, &caps()).unwrap();
        assert!(prod.max_abs_diff(&g) < 1e-15);
    }

    #[test]
    fn star_of_point_indicator() {
        // 1_{{x}} ⋆ 1_{{x}}: at {x} only (η₁,η₂,η₃) = (∅,{x},∅) survives
        let x = SiteSet::singleton(0);
        let ind = |s: SiteSet| if s == x { 1.0 } else { 0.0 };
        assert_eq!(star_convolution(ind, ind, x, &caps()).unwrap(), 1.0);
        assert_eq!(star_convolution(ind, ind, SiteSet::from_sites(&[0, 1]), &caps()).unwrap(), 0.0);
        assert_eq!(star_convolution(ind, ind, SiteSet::EMPTY, &caps()).unwrap(), 0.0);
    }

    #[test]
    fn coherent_state_cases() {
        let f = [2.0, 3.0, 5.0];
        assert_eq!(coherent_state(&f, SiteSet::EMPTY), 1.0);
        assert_eq!(coherent_state(&f, SiteSet::from_sites(&[0, 2])), 10.0);
        assert_eq!(coherent_state(&[0.0; 3], SiteSet::from_sites(&[1])), 0.0);
    }

    #[test]
    fn partitions() {
        let c = caps();
        let eta = SiteSet::from_sites(&[1, 3]);
        assert_eq!(enumerate_partitions(eta, 1, &c).unwrap(), vec![vec![eta]]);
        assert_eq!(enumerate_partitions(SiteSet::singleton(2), 3, &c).unwrap().len(), 3);
        let p3 = enumerate_partitions(eta, 3, &c).unwrap();
        assert_eq!(p3.len(), 9);
        for p in &p3 {
            assert_eq!(p.iter().fold(SiteSet::EMPTY, |a, &b| a.union(b)), eta);
            assert_eq!(p.iter().map(|b| b.len()).sum::<usize>(), 2);
        }
        assert!(enumerate_partitions(eta, 0, &c).is_err());
        let tight = Caps {
            max_partitions: 8,
            ..Caps::default()
        };
        assert!(matches!(enumerate_partitions(eta, 3, &tight), Err(Error::Resource { .. })));
    }

    #[test]
    fn lp_integrate_cases() {
        let space = SiteSpace::ideal(2).unwrap();
        let w = SiteLpWeight::new(&space, 1.0);
        let v = w.integrate(|s| coherent_state(&[1.0, 1.0], s), &caps()).unwrap();
        assert_eq!(v, 4.0);
        let space = SiteSpace::new(vec![0.5, 2.0, 1.5], vec![vec![0.0; 3]; 3]).unwrap();
        let w = SiteLpWeight::new(&space, 0.7);
        assert_eq!(w.integrate(|s| if s.is_empty() { 1.0 } else { 0.0 }, &caps()).unwrap(), 1.0);
        let f = [0.3, -0.2, 1.1];
        let direct = w.integrate(|s| coherent_state(&f, s), &caps()).unwrap();
        assert!((direct - w.coherent_expectation(&f)).abs() < 1e-14);
    }

    #[test]
    fn lp_integrate_respects_site_cap() {
        let space = SiteSpace::ideal(13).unwrap();
        let w = SiteLpWeight::new(&space, 1.0);
        assert!(matches!(w.integrate(|_| 1.0, &caps()), Err(Error::Resource { .. })));
    }

    #[test]
    fn tuple_integral_of_single_block_matches_integrate() {
        let space = SiteSpace::new(vec![0.5, 2.0, 1.5], vec![vec![0.0; 3]; 3]).unwrap();
        let w = SiteLpWeight::new(&space, 0.7);
        let a = w.integrate(|s| s.len() as f64 + 1.0, &caps()).unwrap();
        let b = w.integrate_tuples(1, |b| b[0].len() as f64 + 1.0, &caps()).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
