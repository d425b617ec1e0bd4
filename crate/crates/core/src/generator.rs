//! The Glauber generator
//!
//! `-(HF)(γ) = Σ_{x∈γ} (F(γ∖x) - F(γ)) + z ∫ e^{-E(x,γ)} (F(γ∪x) - F(γ)) dx`
//!
//! and its image `Ĥ = K⁻¹ H K` on quasi-observables,
//!
//! `-(ĤG)(η) = -|η| G(η) + z ∫ (e_λ(e^{-φ(x-·)} - 1) ⋆ G(· ∪ x))(η) dx`.
//!
//! Functions here return `H` itself, so `H` is nonnegative as a form for
//! equilibrium measures. On a site space the `dx` integral is the weighted
//! sum over all sites; the self-Mayer factor `-1` of a site (see
//! [`SiteSpace::mayer`]) accounts for single occupancy and makes
//! `K Ĥ = H K` hold exactly.

use crate::combinatorics::continuum::for_each_subset_upto;
use crate::combinatorics::sites::{coherent_state, k_transform, k_transform_table, star_unchecked};
use crate::combinatorics::{k_transform as k_transform_points, Caps, CylinderFunction, QuasiObservable, SiteFunction, SiteLpWeight};
use crate::error::{check_cap, Error, Result};
use crate::model::{
    boltzmann, relative_energy_unchecked, FiniteConfiguration, ModelParams, SiteSet, SiteSpace,
    SpacePoint, MAX_DIM,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Generator on a finite site space.
#[derive(Debug, Clone)]
pub struct SiteGenerator<'a> {
    space: &'a SiteSpace,
    z: f64,
    caps: Caps,
}

impl<'a> SiteGenerator<'a> {
    pub fn new(space: &'a SiteSpace, z: f64) -> Result<Self> {
        Self::with_caps(space, z, Caps::default())
    }

    pub fn with_caps(space: &'a SiteSpace, z: f64, caps: Caps) -> Result<Self> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::Domain(format!("activity must be >= 0, got {z}")));
        }
        check_cap("site enumeration", space.len() as u64, caps.max_sites as u64)?;
        Ok(Self { space, z, caps })
    }

    pub fn space(&self) -> &SiteSpace {
        self.space
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// `(HF)(γ)` for an arbitrary function `F` on configurations.
    pub fn apply_h_fn(&self, f: impl Fn(SiteSet) -> f64, gamma: SiteSet) -> f64 {
        let here = f(gamma);
        let mut minus_h = 0.0;
        for x in gamma.iter() {
            minus_h += f(gamma.without(x)) - here;
        }
        for x in self.space.all().minus(gamma).iter() {
            let rate = boltzmann(self.space.relative_energy(x, gamma));
            if rate > 0.0 {
                minus_h += self.z * self.space.weight(x) * rate * (f(gamma.with(x)) - here);
            }
        }
        -minus_h
    }

    /// `(H KG)(γ)`.
    pub fn apply_h(&self, g: &SiteFunction, gamma: SiteSet) -> f64 {
        self.apply_h_fn(|s| k_transform(g, s), gamma)
    }

    /// `(ĤG)(η)` from the ⋆-convolution formula.
    pub fn apply_h_hat(&self, g: &SiteFunction, eta: SiteSet) -> Result<f64> {
        check_cap("star-convolution partitions", eta.len() as u64, self.caps.max_star_order as u64)?;
        Ok(self.h_hat_unchecked(g, eta))
    }

    fn h_hat_unchecked(&self, g: &SiteFunction, eta: SiteSet) -> f64 {
        let n = self.space.len();
        let mut birth = 0.0;
        let mut mayer = vec![0.0; n];
        for x in 0..n {
            for (s, m) in mayer.iter_mut().enumerate() {
                *m = self.space.mayer(x, s);
            }
            let conv = star_unchecked(&|s| coherent_state(&mayer, s), &|s| g.get(s.with(x)), eta);
            birth += self.space.weight(x) * conv;
        }
        let minus = -(eta.len() as f64) * g.get(eta) + self.z * birth;
        -minus
    }

    /// `ĤG` on every configuration.
    pub fn h_hat_table(&self, g: &SiteFunction) -> Result<SiteFunction> {
        check_cap("star-convolution partitions", self.space.len() as u64, self.caps.max_star_order as u64)?;
        Ok(SiteFunction::from_fn(self.space.len(), |eta| self.h_hat_unchecked(g, eta)))
    }

    /// Largest `|K(ĤG)(γ) - H(KG)(γ)|` over all configurations, with the
    /// configuration attaining it.
    pub fn intertwining_residual(&self, g: &SiteFunction) -> Result<(f64, SiteSet)> {
        let k_hat = k_transform_table(&self.h_hat_table(g)?);
        let kg = k_transform_table(g);
        let mut worst = (0.0, SiteSet::EMPTY);
        for gamma in self.space.all().subsets() {
            let r = (k_hat.get(gamma) - self.apply_h_fn(|s| kg.get(s), gamma)).abs();
            if r > worst.0 || r.is_nan() {
                worst = (r, gamma);
            }
        }
        Ok(worst)
    }

    /// Upper bound on `∫ |ĤG| k dλ_z` for correlation functions with
    /// `k(η) <= C^{|η|}`:
    ///
    /// `L z m(Λ) exp(z C (m(Λ) + 2 M)) + N L ∫_{Γ_Λ} C^{|η|} dλ_z`,
    ///
    /// with `Λ` the support of `G` and `M` the discrete Mayer norm.
    pub fn integrability_bound(&self, g: &SiteFunction, ruelle_c: f64) -> f64 {
        let support = g.support();
        let l = g.magnitude_bound();
        let order = g.order_bound() as f64;
        let m: f64 = support.iter().map(|s| self.space.weight(s)).sum();
        let mayer = self.space.mayer_norm();
        let birth = l * self.z * m * (self.z * ruelle_c * (m + 2.0 * mayer)).exp();
        let death: f64 = order
            * l
            * support
                .iter()
                .map(|s| 1.0 + self.z * self.space.weight(s) * ruelle_c)
                .product::<f64>();
        birth + death
    }

    /// `∫ |ĤG| k dλ_z`, exact.
    pub fn h_hat_l1(&self, g: &SiteFunction, k: impl Fn(SiteSet) -> f64) -> Result<f64> {
        let hat = self.h_hat_table(g)?;
        SiteLpWeight::new(self.space, self.z).integrate(|eta| hat.get(eta).abs() * k(eta), &self.caps)
    }
}

/// Outcome of [`check_intertwining`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntertwiningReport {
    pub sites: usize,
    pub z: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub max_residual: f64,
    pub worst_trial: usize,
    pub worst_gamma: SiteSet,
}

/// Tolerance of the exact intertwining check.
pub const INTERTWINING_TOL: f64 = 1e-10;

/// Checks `K Ĥ G = H K G` on every configuration for `trials` random
/// quasi-observables (random order bound, values in `[-1, 1]`). Trials run in
/// parallel on independent streams derived from `seed`.
pub fn check_intertwining(space: &SiteSpace, z: f64, trials: usize, seed: u64) -> Result<IntertwiningReport> {
    if space.len() > 6 {
        return Err(Error::Domain(format!(
            "intertwining check is limited to 6 sites, got {}",
            space.len()
        )));
    }
    let gen = SiteGenerator::new(space, z)?;
    let n = space.len();
    let results: Vec<(f64, SiteSet, SiteFunction)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let order = rng.random_range(0..=n);
            let g = SiteFunction::random(n, space.all(), order, &mut rng);
            let (r, gamma) = gen.intertwining_residual(&g)?;
            Ok((r, gamma, g))
        })
        .collect::<Result<_>>()?;
    let mut report = IntertwiningReport {
        sites: n,
        z,
        trials,
        tolerance: INTERTWINING_TOL,
        max_residual: 0.0,
        worst_trial: 0,
        worst_gamma: SiteSet::EMPTY,
    };
    for (t, (r, gamma, g)) in results.iter().enumerate() {
        if !(*r <= INTERTWINING_TOL) {
            return Err(Error::Assertion {
                what: "K Ĥ G = H K G".into(),
                residual: *r,
                witness: format!("trial {t}, gamma {gamma:?}, G = {:?}", g.values()),
            });
        }
        if *r > report.max_residual {
            report.max_residual = *r;
            report.worst_trial = t;
            report.worst_gamma = *gamma;
        }
    }
    Ok(report)
}

/// Quadrature for the birth integral `∫_Λ … dx` on the continuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BirthIntegral {
    /// Tensor midpoint rule with `per_axis` nodes per axis of the window.
    Midpoint { per_axis: usize },
}

/// Generator of the dynamics in the periodic box.
#[derive(Debug, Clone)]
pub struct GeneratorContext {
    pub params: ModelParams,
    pub integration: BirthIntegral,
    pub caps: Caps,
}

impl GeneratorContext {
    pub fn new(params: ModelParams, integration: BirthIntegral) -> Self {
        Self {
            params,
            integration,
            caps: Caps::default(),
        }
    }

    fn per_axis(&self) -> usize {
        match self.integration {
            BirthIntegral::Midpoint { per_axis } => per_axis,
        }
    }

    /// `(HF)(γ)` with the midpoint rule.
    pub fn apply_h(&self, f: &CylinderFunction, gamma: &FiniteConfiguration) -> Result<f64> {
        self.apply_h_shifted(f, gamma, &[0.5; MAX_DIM])
    }

    /// `(HF)(γ)` on a grid shifted uniformly at random, which makes the birth
    /// integral an unbiased estimate.
    pub fn apply_h_randomized<R: Rng + ?Sized>(
        &self,
        f: &CylinderFunction,
        gamma: &FiniteConfiguration,
        rng: &mut R,
    ) -> Result<f64> {
        let mut shift = [0.5; MAX_DIM];
        for s in shift.iter_mut() {
            *s = rng.random();
        }
        self.apply_h_shifted(f, gamma, &shift)
    }

    fn apply_h_shifted(&self, f: &CylinderFunction, gamma: &FiniteConfiguration, shift: &[f64; MAX_DIM]) -> Result<f64> {
        let g = f.kernel();
        let window = g.window();
        let here = f.eval(gamma, &self.caps)?;

        let mut death = 0.0;
        for (i, x) in gamma.iter().enumerate() {
            if window.contains(x) {
                death += f.eval(&gamma.without(i), &self.caps)? - here;
            }
        }

        // F(γ ∪ x) - F(γ) = Σ_{ρ ⊆ γ_Λ} G(ρ ∪ x) for x ∈ Λ
        let inside = gamma.restricted(window);
        let birth = if g.order_bound() == 0 {
            0.0
        } else {
            let ModelParams {
                z,
                potential,
                geometry,
            } = &self.params;
            let (nodes, cell) = window.grid(self.per_axis(), shift);
            let mut acc = 0.0;
            let mut buf: Vec<SpacePoint> = Vec::new();
            for x in &nodes {
                if gamma.contains(x) {
                    continue;
                }
                let rate = boltzmann(relative_energy_unchecked(x, gamma.points(), potential, geometry));
                if rate == 0.0 {
                    continue;
                }
                let mut diff = 0.0;
                for_each_subset_upto(inside.points(), g.order_bound() - 1, |rho| {
                    buf.clear();
                    buf.extend_from_slice(rho);
                    buf.push(*x);
                    diff += g.eval_inside(&buf);
                });
                acc += rate * diff;
            }
            z * cell * acc
        };
        let h = -(death + birth);
        if !h.is_finite() {
            return Err(Error::Numeric("non-finite generator value".into()));
        }
        Ok(h)
    }

    /// `2 L e^{2B|γ|} (2 + |γ_Λ|)^N m(Λ)`, majorizing the birth integral.
    pub fn birth_majorant(&self, f: &CylinderFunction, gamma: &FiniteConfiguration) -> f64 {
        let g = f.kernel();
        let m = gamma.restricted(g.window()).len() as f64;
        2.0 * g.magnitude_bound()
            * (2.0 * self.params.potential.stability_b() * gamma.len() as f64).exp()
            * (2.0 + m).powi(g.order_bound() as i32)
            * g.window().volume()
    }

    /// `(ĤG)(η)` from the ⋆-convolution formula, `x` integrated by the
    /// midpoint rule over the window of `G`.
    pub fn apply_h_hat(&self, g: &QuasiObservable, eta: &FiniteConfiguration) -> Result<f64> {
        let n = eta.len();
        check_cap("star-convolution partitions", n as u64, self.caps.max_star_order as u64)?;
        let ModelParams {
            z,
            potential,
            geometry,
        } = &self.params;
        let (nodes, cell) = g.window().grid(self.per_axis(), &[0.5; MAX_DIM]);
        let mut integral = 0.0;
        for x in &nodes {
            if eta.contains(x) {
                continue;
            }
            let conv = crate::combinatorics::star_convolution(
                |a| a.iter().map(|y| potential.mayer(geometry.distance(x, y))).product(),
                |b| {
                    let mut with_x = b.to_vec();
                    with_x.push(*x);
                    g.eval(&with_x)
                },
                eta,
                &self.caps,
            )?;
            integral += conv;
        }
        let minus = -(n as f64) * g.eval(eta.points()) + z * cell * integral;
        Ok(-minus)
    }

    /// `(KG)(γ)` with this context's caps.
    pub fn k_transform(&self, g: &QuasiObservable, gamma: &FiniteConfiguration) -> Result<f64> {
        k_transform_points(g, gamma, &self.caps)
    }
}
