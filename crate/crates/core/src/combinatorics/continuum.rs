//! The K-transform calculus on point configurations in a box.

use super::{for_each_partition, saturating_pow, Caps};
use crate::error::{check_cap, Error, Result};
use crate::model::{FiniteConfiguration, Region, SpacePoint};
use rand::Rng;
use std::fmt;
use std::sync::Arc;

type PointFn = Arc<dyn Fn(&[SpacePoint]) -> f64 + Send + Sync>;

/// Bounded function on finite configurations with bounded support: zero
/// unless `η ⊆ window` and `|η| <= order_bound`.
#[derive(Clone)]
pub struct QuasiObservable {
    window: Region,
    order_bound: usize,
    magnitude_bound: f64,
    f: PointFn,
}

impl fmt::Debug for QuasiObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiObservable")
            .field("window", &self.window)
            .field("order_bound", &self.order_bound)
            .field("magnitude_bound", &self.magnitude_bound)
            .finish_non_exhaustive()
    }
}

impl QuasiObservable {
    /// `magnitude_bound` is the caller's assertion `|f| <= L` on the support.
    pub fn new(
        window: Region,
        order_bound: usize,
        magnitude_bound: f64,
        f: impl Fn(&[SpacePoint]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            window,
            order_bound,
            magnitude_bound,
            f: Arc::new(f),
        }
    }

    pub fn empty_indicator(window: Region) -> Self {
        Self::new(window, 0, 1.0, |eta| if eta.is_empty() { 1.0 } else { 0.0 })
    }

    pub fn singleton_indicator(window: Region) -> Self {
        Self::new(window, 1, 1.0, |eta| if eta.len() == 1 { 1.0 } else { 0.0 })
    }

    /// `e_λ(f)` restricted to `window` and to at most `order` points.
    pub fn coherent(
        window: Region,
        order: usize,
        sup_f: f64,
        f: impl Fn(&SpacePoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let bound = sup_f.abs().max(1.0).powi(order.min(i32::MAX as usize) as i32);
        Self::new(window, order, bound, move |eta| eta.iter().map(&f).product())
    }

    /// `G(η) = c_{|η|} Π_{x∈η} b(x)` with random coefficients `c_n ∈ [-1, 1]`
    /// and a random smooth bump `b` with values in `[0, 1]`.
    pub fn random_product<R: Rng + ?Sized>(window: Region, order: usize, rng: &mut R) -> Self {
        let coefs: Vec<f64> = (0..=order).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let d = window.geometry().dimension();
        let mut freq = [0.0; 3];
        let mut phase = [0.0; 3];
        for a in 0..d {
            let width = window.hi()[a] - window.lo()[a];
            freq[a] = 2.0 * std::f64::consts::PI * rng.random_range(1..=3) as f64 / width;
            phase[a] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        let amp = rng.random_range(0.2..0.5);
        let bump = move |x: &SpacePoint| {
            let s: f64 = (0..d).map(|a| (freq[a] * x.coord(a) + phase[a]).cos()).sum::<f64>() / d as f64;
            0.5 + amp * s
        };
        Self::new(window, order, 1.0, move |eta| {
            coefs[eta.len()] * eta.iter().map(&bump).product::<f64>()
        })
    }

    pub fn window(&self) -> &Region {
        &self.window
    }

    pub fn order_bound(&self) -> usize {
        self.order_bound
    }

    pub fn magnitude_bound(&self) -> f64 {
        self.magnitude_bound
    }

    /// `G(η)`.
    pub fn eval(&self, eta: &[SpacePoint]) -> f64 {
        if eta.len() > self.order_bound || !eta.iter().all(|p| self.window.contains(p)) {
            0.0
        } else {
            (self.f)(eta)
        }
    }

    /// `G(η)` for `η ⊆ window`, skipping the support test.
    pub(crate) fn eval_inside(&self, eta: &[SpacePoint]) -> f64 {
        if eta.len() > self.order_bound {
            0.0
        } else {
            (self.f)(eta)
        }
    }
}

/// `F = K G`, evaluated on demand from its kernel.
#[derive(Debug, Clone)]
pub struct CylinderFunction {
    kernel: QuasiObservable,
}

impl CylinderFunction {
    pub fn new(kernel: QuasiObservable) -> Self {
        Self { kernel }
    }

    pub fn kernel(&self) -> &QuasiObservable {
        &self.kernel
    }

    pub fn eval(&self, gamma: &FiniteConfiguration, caps: &Caps) -> Result<f64> {
        k_transform(&self.kernel, gamma, caps)
    }

    /// `L (1 + |γ_Λ|)^N`.
    pub fn polynomial_bound(&self, gamma: &FiniteConfiguration) -> f64 {
        let m = gamma.restricted(&self.kernel.window).len() as f64;
        self.kernel.magnitude_bound * (1.0 + m).powi(self.kernel.order_bound.min(i32::MAX as usize) as i32)
    }
}

/// Number of sub-configurations of an `m`-point set with at most `k` points.
fn truncated_subset_count(m: usize, k: usize) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u64 = 1;
    for j in 0..=k.min(m) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((m - j) as u64) / (j as u64 + 1);
    }
    total
}

/// Calls `visit` with every sub-configuration of `points` of size at most
/// `max_size`, reusing one buffer.
pub(crate) fn for_each_subset_upto(points: &[SpacePoint], max_size: usize, mut visit: impl FnMut(&[SpacePoint])) {
    let m = points.len();
    let k = max_size.min(m);
    let mut buf: Vec<SpacePoint> = Vec::with_capacity(k);
    let mut idx: Vec<usize> = Vec::with_capacity(k);
    visit(&buf);
    for size in 1..=k {
        idx.clear();
        idx.extend(0..size);
        loop {
            buf.clear();
            buf.extend(idx.iter().map(|&i| points[i]));
            visit(&buf);
            // next combination in lexicographic order
            let Some(i) = (0..size).rev().find(|&i| idx[i] < m - size + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
}

/// `(KG)(γ) = Σ_{η⊆γ} G(η)`. Only `η ⊆ γ_Λ` with `|η| <= N` contribute.
pub fn k_transform(g: &QuasiObservable, gamma: &FiniteConfiguration, caps: &Caps) -> Result<f64> {
    let inside = gamma.restricted(&g.window);
    let terms = truncated_subset_count(inside.len(), g.order_bound);
    check_cap("K-transform terms", terms, caps.max_terms)?;
    let mut acc = 0.0;
    for_each_subset_upto(inside.points(), g.order_bound, |eta| acc += g.eval_inside(eta));
    Ok(acc)
}

/// `(K⁻¹F)(η) = Σ_{ξ⊆η} (-1)^{|η∖ξ|} F(ξ)`.
pub fn k_inverse(
    f: impl Fn(&FiniteConfiguration) -> f64,
    eta: &FiniteConfiguration,
    caps: &Caps,
) -> Result<f64> {
    let n = eta.len();
    check_cap("K-inverse subset loop", n as u64, caps.max_subset_order as u64)?;
    let mut acc = 0.0;
    for mask in 0..(1u64 << n) {
        let sign = if (n - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += sign * f(&eta.select(mask));
    }
    Ok(acc)
}

/// `(G₁ ⋆ G₂)(η)` by enumeration of the `3^{|η|}` ordered 3-partitions.
pub fn star_convolution(
    g1: impl Fn(&[SpacePoint]) -> f64,
    g2: impl Fn(&[SpacePoint]) -> f64,
    eta: &FiniteConfiguration,
    caps: &Caps,
) -> Result<f64> {
    let n = eta.len();
    check_cap("star-convolution partitions", n as u64, caps.max_star_order as u64)?;
    let mut acc = 0.0;
    for_each_partition(n, 3, |b| {
        let left = eta.select(b[0] | b[1]);
        let right = eta.select(b[1] | b[2]);
        acc += g1(left.points()) * g2(right.points());
    });
    Ok(acc)
}

/// `e_λ(f, η) = Π_{x∈η} f(x)`; `1` at `η = ∅`.
pub fn coherent_state(f: impl Fn(&SpacePoint) -> f64, eta: &[SpacePoint]) -> f64 {
    eta.iter().map(f).product()
}

/// All `n^{|η|}` ordered partitions of `eta` into `n` possibly empty parts.
pub fn enumerate_partitions(
    eta: &FiniteConfiguration,
    n: usize,
    caps: &Caps,
) -> Result<Vec<Vec<FiniteConfiguration>>> {
    if n == 0 {
        return Err(Error::Domain("partitions need at least one part".into()));
    }
    let count = saturating_pow(n as u64, eta.len());
    check_cap("ordered partitions", count, caps.max_partitions)?;
    let mut out = Vec::with_capacity(count as usize);
    for_each_partition(eta.len(), n, |blocks| {
        out.push(blocks.iter().map(|&b| eta.select(b)).collect());
    });
    Ok(out)
}

/// Monte Carlo result with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `λ_z` restricted to configurations in `region` with at most `max_order`
/// points, integrated by `samples` uniform draws per order.
#[derive(Debug, Clone, Copy)]
pub struct ContinuumLpWeight {
    pub region: Region,
    pub z: f64,
    pub max_order: usize,
    pub samples: usize,
}

/// `∫ G dλ_z ≈ Σ_{n<=N} zⁿ/n! ∫_{Λⁿ} G({x₁…xₙ}) dx₁…dxₙ`.
pub fn lp_integrate<R: Rng + ?Sized>(
    g: impl Fn(&[SpacePoint]) -> f64,
    weight: &ContinuumLpWeight,
    rng: &mut R,
) -> Result<McEstimate> {
    if weight.samples == 0 {
        return Err(Error::Domain("Monte Carlo integration needs at least one sample".into()));
    }
    let vol = weight.region.volume();
    let mut estimate = g(&[]);
    let mut variance = 0.0;
    let mut coef = 1.0;
    let mut buf = Vec::with_capacity(weight.max_order);
    for n in 1..=weight.max_order {
        coef *= weight.z * vol / n as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..weight.samples {
            buf.clear();
            buf.extend((0..n).map(|_| weight.region.uniform_point(rng)));
            let v = g(&buf);
            sum += v;
            sum_sq += v * v;
        }
        let k = weight.samples as f64;
        let mean = sum / k;
        let var = if weight.samples > 1 {
            (sum_sq - k * mean * mean).max(0.0) / (k - 1.0)
        } else {
            0.0
        };
        estimate += coef * mean;
        variance += coef * coef * var / k;
    }
    if !estimate.is_finite() {
        return Err(Error::Numeric("non-finite Lebesgue-Poisson estimate".into()));
    }
    Ok(McEstimate {
        estimate,
        stderr: variance.sqrt(),
        samples: weight.samples * weight.max_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoxGeometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (BoxGeometry, Region) {
        let g = BoxGeometry::torus(2, 4.0).unwrap();
        let r = Region::new(g, &[0.0, 0.0], &[2.0, 3.0]).unwrap();
        (g, r)
    }

    fn random_config(g: &BoxGeometry, n: usize, rng: &mut ChaCha8Rng) -> FiniteConfiguration {
        FiniteConfiguration::new((0..n).map(|_| g.uniform_point(rng)).collect()).unwrap()
    }

    #[test]
    fn subsets_upto_enumerates_each_once() {
        let pts: Vec<SpacePoint> = (0..6).map(|i| SpacePoint::new(&[i as f64])).collect();
        for k in 0..=7 {
            let mut count = 0u64;
            let mut seen = std::collections::HashSet::new();
            for_each_subset_upto(&pts, k, |s| {
                count += 1;
                assert!(s.len() <= k);
                let key: Vec<u64> = s.iter().map(|p| p.coord(0) as u64).collect();
                assert!(key.windows(2).all(|w| w[0] < w[1]));
                assert!(seen.insert(key));
            });
            assert_eq!(count, truncated_subset_count(6, k));
        }
    }

    #[test]
    fn k_transform_examples() {
        let (g, r) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let caps = Caps::default();
        for _ in 0..20 {
            let gamma = random_config(&g, rng.random_range(0..9), &mut rng);
            let inside = gamma.restricted(&r).len() as f64;
            assert_eq!(k_transform(&QuasiObservable::empty_indicator(r), &gamma, &caps).unwrap(), 1.0);
            assert_eq!(k_transform(&QuasiObservable::singleton_indicator(r), &gamma, &caps).unwrap(), inside);
            let f = |x: &SpacePoint| 0.3 * x.coord(0) - 0.2 * x.coord(1);
            let coh = QuasiObservable::coherent(r, 64, 1.0, f);
            let expected: f64 = gamma.restricted(&r).iter().map(|x| 1.0 + f(x)).product();
            assert!((k_transform(&coh, &gamma, &caps).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn k_round_trip_on_points() {
        let (g, r) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let caps = Caps::default();
        let obs = QuasiObservable::random_product(r, 3, &mut rng);
        for _ in 0..10 {
            let eta = random_config(&g, 4, &mut rng).restricted(&r);
            let back = k_inverse(|xi| k_transform(&obs, xi, &caps).unwrap(), &eta, &caps).unwrap();
            assert!((back - obs.eval(eta.points())).abs() < 1e-12);
        }
    }

    #[test]
    fn star_homomorphism_on_points() {
        let (g, r) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let caps = Caps::default();
        let g1 = QuasiObservable::random_product(r, 3, &mut rng);
        let g2 = QuasiObservable::random_product(r, 2, &mut rng);
        let eta = random_config(&g, 4, &mut rng);
        let star = |xi: &FiniteConfiguration| {
            star_convolution(|a| g1.eval(a), |b| g2.eval(b), xi, &caps).unwrap()
        };
        // K(G1 ⋆ G2)(γ) by summing the star product over sub-configurations
        let mut lhs = 0.0;
        for mask in 0..(1u64 << eta.len()) {
            lhs += star(&eta.select(mask));
        }
        let rhs = k_transform(&g1, &eta, &caps).unwrap() * k_transform(&g2, &eta, &caps).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn partitions_of_points() {
        let caps = Caps::default();
        let eta = FiniteConfiguration::new(vec![SpacePoint::new(&[0.0]), SpacePoint::new(&[1.0])]).unwrap();
        assert_eq!(enumerate_partitions(&eta, 3, &caps).unwrap().len(), 9);
        assert_eq!(enumerate_partitions(&eta, 1, &caps).unwrap(), vec![vec![eta.clone()]]);
    }

    #[test]
    fn cylinder_bound_holds() {
        let (g, r) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let caps = Caps::default();
        for _ in 0..200 {
            let obs = QuasiObservable::random_product(r, rng.random_range(0..4), &mut rng);
            let f = CylinderFunction::new(obs);
            let gamma = random_config(&g, rng.random_range(0..12), &mut rng);
            assert!(f.eval(&gamma, &caps).unwrap().abs() <= f.polynomial_bound(&gamma) + 1e-12);
        }
    }

    #[test]
    fn lp_integrate_coherent_state_matches_exponential() {
        let (_, r) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let f = |x: &SpacePoint| 0.1 + 0.05 * x.coord(0);
        // ∫_Λ f = 0.1·6 + 0.05·∫x dx dy = 0.6 + 0.05·(2·3) = 0.9
        let z = 0.8;
        let w = ContinuumLpWeight {
            region: r,
            z,
            max_order: 12,
            samples: 20_000,
        };
        let est = lp_integrate(|eta| coherent_state(f, eta), &w, &mut rng).unwrap();
        let exact = (z * 0.9f64).exp();
        assert!((est.estimate - exact).abs() < 4.0 * est.stderr + 1e-6, "{est:?} vs {exact}");
        let one = lp_integrate(|eta| if eta.is_empty() { 1.0 } else { 0.0 }, &w, &mut rng).unwrap();
        assert_eq!(one.estimate, 1.0);
        assert!(lp_integrate(|_| 1.0, &ContinuumLpWeight { samples: 0, ..w }, &mut rng).is_err());
    }
}
