//! The Kirkwood-Salsburg equation
//!
//! `k(η ∪ x) = e^{-E(x,η)} ∫ e_λ(e^{-φ(x-·)} - 1, ρ) k(η ∪ ρ) dλ_z(ρ)`,
//!
//! its summed form `|η| k(η) = Σ_{x∈η} (KS right-hand side at (x, η∖x))`,
//! a truncated fixed-point solver, and the exact grand-canonical correlation
//! functions of a finite site space.
//!
//! On a site space, `ρ` runs over subsets of the free sites `S∖η`. The
//! self-Mayer factor `-1` (see [`SiteSpace::mayer`]) lets `ρ` contain `x`
//! itself; with it the finite-volume Gibbs table solves the equation exactly.

mod lattice;

pub use lattice::{LatticeKs, LatticeSolution};

use crate::combinatorics::Caps;
use crate::error::{check_cap, Error, Result};
use crate::model::{boltzmann, ModelParams, SiteSet, SiteSpace};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Largest dense correlation table.
pub const TABLE_SITE_LIMIT: usize = 20;

/// How `k(η)` is supplied for `|η| > N_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Closure {
    /// `k(η) = Π_{s∈η} k({s})`.
    #[default]
    Power,
    /// Kirkwood superposition `Π_s k({s}) Π_{s<t} k({s,t}) / (k({s}) k({t}))`.
    Superposition,
}

/// Correlation function of a measure on a site space, stored for
/// configurations with at most `N_max` points.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    space: SiteSpace,
    n_max: usize,
    closure: Closure,
    values: Vec<f64>,
}

impl CorrelationTable {
    /// The Poisson table `k ≡ 1`.
    pub fn poisson(space: SiteSpace, n_max: usize, closure: Closure) -> Result<Self> {
        Self::from_fn(space, n_max, closure, |_| 1.0)
    }

    /// Table with `k(∅) = 1` and `k(η) = f(η)` on stored configurations.
    pub fn from_fn(space: SiteSpace, n_max: usize, closure: Closure, mut f: impl FnMut(SiteSet) -> f64) -> Result<Self> {
        let n = space.len();
        check_cap("correlation table sites", n as u64, TABLE_SITE_LIMIT as u64)?;
        if n_max == 0 {
            return Err(Error::Config("N_max must be at least 1".into()));
        }
        if closure == Closure::Superposition && n_max < 2 && n > 1 {
            return Err(Error::Config("superposition closure needs N_max >= 2".into()));
        }
        let n_max = n_max.min(n.max(1));
        let values = (0..1u32 << n)
            .map(|m| {
                let s = SiteSet(m);
                if m == 0 {
                    1.0
                } else if s.len() <= n_max {
                    f(s)
                } else {
                    f64::NAN
                }
            })
            .collect();
        Ok(Self {
            space,
            n_max,
            closure,
            values,
        })
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn is_stored(&self, eta: SiteSet) -> bool {
        eta.len() <= self.n_max
    }

    /// `k(η)`, from storage or the closure rule.
    pub fn get(&self, eta: SiteSet) -> f64 {
        if self.is_stored(eta) {
            return self.values[eta.bits() as usize];
        }
        let one = |s: usize| self.values[1 << s];
        let power: f64 = eta.iter().map(one).product();
        match self.closure {
            Closure::Power => power,
            Closure::Superposition => {
                if power == 0.0 {
                    return 0.0;
                }
                let sites: Vec<usize> = eta.iter().collect();
                let mut v = power;
                for (i, &s) in sites.iter().enumerate() {
                    for &t in &sites[..i] {
                        v *= self.values[(1usize << s) | (1 << t)] / (one(s) * one(t));
                    }
                }
                v
            }
        }
    }

    /// Overwrites a stored, non-empty configuration.
    pub fn set(&mut self, eta: SiteSet, value: f64) -> Result<()> {
        if eta.is_empty() || !self.is_stored(eta) {
            return Err(Error::Domain(format!("{eta:?} is not a stored non-empty configuration")));
        }
        self.values[eta.bits() as usize] = value;
        Ok(())
    }

    /// Stored configurations in increasing bitmask order, `∅` first.
    pub fn stored(&self) -> impl Iterator<Item = SiteSet> + '_ {
        self.space.all().subsets().filter(|s| self.is_stored(*s))
    }

    /// `(η, k(η))` rows for every stored configuration.
    pub fn rows(&self) -> Vec<(SiteSet, f64)> {
        self.stored().map(|s| (s, self.get(s))).collect()
    }

    /// Largest `|k - k'|` over stored configurations, weighted by `C^{-|η|}`.
    pub fn weighted_distance(&self, other: &Self, c: f64) -> f64 {
        self.stored()
            .map(|s| (self.get(s) - other.get(s)).abs() / c.powi(s.len() as i32))
            .fold(0.0, nan_max)
    }

    /// Checks `k(∅) = 1` and `k >= 0` on stored entries.
    pub fn check_invariants(&self) -> Result<()> {
        if self.values[0] != 1.0 {
            return Err(Error::Invariant(format!("k(∅) = {}", self.values[0])));
        }
        if let Some(s) = self.stored().find(|&s| !(self.get(s) >= 0.0)) {
            return Err(Error::Invariant(format!("k({s:?}) = {}", self.get(s))));
        }
        Ok(())
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// `Σ_{ρ ⊆ allowed, |ρ| <= order} λ_z(ρ) Π_{y∈ρ} h(y) k(base ∪ ρ)`.
///
/// Single code path behind the KS right-hand side and the correlation
/// expansion of the Bogoliubov functional, so the two agree bit for bit.
pub(crate) fn coherent_moment(k: &CorrelationTable, base: SiteSet, allowed: SiteSet, h: &[f64], z: f64, order: usize) -> f64 {
    let space = k.space();
    let coef: Vec<f64> = (0..space.len()).map(|y| z * space.weight(y) * h[y]).collect();
    let active = SiteSet(allowed.iter().filter(|&y| coef[y] != 0.0).fold(0, |m, y| m | 1 << y));
    let mut acc = 0.0;
    for rho in active.subsets() {
        if rho.len() > order {
            continue;
        }
        let w: f64 = rho.iter().map(|y| coef[y]).product();
        acc += w * k.get(base.union(rho));
    }
    acc
}

fn mayer_row(space: &SiteSpace, x: usize) -> Vec<f64> {
    (0..space.len()).map(|s| space.mayer(x, s)).collect()
}

/// Right-hand side of the KS equation at `(x, η)`, with the `ρ` sum truncated
/// to `|ρ| <= r_max`.
pub fn ks_rhs(k: &CorrelationTable, x: usize, eta: SiteSet, z: f64, r_max: usize) -> Result<f64> {
    let space = k.space();
    if x >= space.len() || eta.contains(x) {
        return Err(Error::Domain(format!("site {x} must be a free site of {eta:?}")));
    }
    if eta.len() + 1 > k.n_max() {
        return Err(Error::Domain(format!(
            "|η| + 1 = {} exceeds N_max = {}",
            eta.len() + 1,
            k.n_max()
        )));
    }
    Ok(ks_rhs_unchecked(k, x, eta, z, r_max))
}

fn ks_rhs_unchecked(k: &CorrelationTable, x: usize, eta: SiteSet, z: f64, r_max: usize) -> f64 {
    let space = k.space();
    let prefactor = boltzmann(space.relative_energy(x, eta));
    if prefactor == 0.0 {
        return 0.0;
    }
    let free = space.all().minus(eta);
    prefactor * coherent_moment(k, eta, free, &mayer_row(space, x), z, r_max)
}

/// `|η| k(η) - Σ_{x∈η} ks_rhs(k, x, η∖x)` (signed).
pub fn summed_residual(k: &CorrelationTable, eta: SiteSet, z: f64, r_max: usize) -> Result<f64> {
    if !k.is_stored(eta) {
        return Err(Error::Domain(format!("|η| = {} exceeds N_max = {}", eta.len(), k.n_max())));
    }
    Ok(eta.len() as f64 * k.get(eta) - eta.iter().map(|x| ks_rhs_unchecked(k, x, eta.without(x), z, r_max)).sum::<f64>())
}

/// `max |k(η ∪ x) - ks_rhs(k, x, η)|` over every stored `η ∪ x` and every
/// choice of `x`.
pub fn ks_sup_residual(k: &CorrelationTable, z: f64, r_max: usize) -> f64 {
    k.stored()
        .filter(|s| !s.is_empty())
        .flat_map(|s| s.iter().map(move |x| (s, x)))
        .map(|(s, x)| (k.get(s) - ks_rhs_unchecked(k, x, s.without(x), z, r_max)).abs())
        .fold(0.0, nan_max)
}

/// Finite-volume Gibbs correlation function
/// `k(η) = Ξ⁻¹ Σ_{ζ⊆S∖η} λ_z(ζ) e^{-E(η∪ζ)}`, stored for every configuration.
pub fn exact_gibbs_oracle(space: &SiteSpace, z: f64) -> Result<CorrelationTable> {
    exact_gibbs_oracle_with_caps(space, z, &Caps::default())
}

pub fn exact_gibbs_oracle_with_caps(space: &SiteSpace, z: f64, caps: &Caps) -> Result<CorrelationTable> {
    check_activity(z)?;
    check_cap("site enumeration", space.len() as u64, caps.max_sites as u64)?;
    let n = space.len();
    let all = space.all();
    let gibbs: Vec<f64> = all.subsets().map(|s| boltzmann(space.total_energy(s))).collect();
    let lp = |s: SiteSet| z.powi(s.len() as i32) * space.weight_of(s);
    let xi: f64 = all.subsets().map(|s| lp(s) * gibbs[s.bits() as usize]).sum();
    CorrelationTable::from_fn(space.clone(), n.max(1), Closure::Power, |eta| {
        all.minus(eta)
            .subsets()
            .map(|zeta| lp(zeta) * gibbs[eta.union(zeta).bits() as usize])
            .sum::<f64>()
            / xi
    })
}

/// Site limit of [`exact_gibbs_oracle_rational`].
pub const RATIONAL_SITE_LIMIT: usize = 8;

/// [`exact_gibbs_oracle`] in exact rational arithmetic, rounded once at the
/// end. Needs every pair Boltzmann factor to be exactly 0 or 1 (hard cores
/// and free pairs) so that all inputs are exact.
pub fn exact_gibbs_oracle_rational(space: &SiteSpace, z: f64) -> Result<CorrelationTable> {
    check_activity(z)?;
    check_cap("exact arithmetic sites", space.len() as u64, RATIONAL_SITE_LIMIT as u64)?;
    let n = space.len();
    for i in 0..n {
        for j in 0..i {
            let b = space.boltzmann(i, j);
            if b != 0.0 && b != 1.0 {
                return Err(Error::Domain(format!(
                    "exact path needs Boltzmann factors in {{0, 1}}, got {b} at ({i},{j})"
                )));
            }
        }
    }
    let exact = |v: f64| BigRational::from_float(v).expect("finite input");
    let zr = exact(z);
    let w: Vec<BigRational> = space.weights().iter().map(|&v| exact(v)).collect();
    let all = space.all();
    let allowed = |s: SiteSet| space.total_energy(s) != f64::INFINITY;
    let lp = |s: SiteSet| s.iter().fold(BigRational::one(), |acc, y| acc * &zr * &w[y]);
    let xi = all
        .subsets()
        .filter(|&s| allowed(s))
        .fold(BigRational::zero(), |acc, s| acc + lp(s));
    CorrelationTable::from_fn(space.clone(), n.max(1), Closure::Power, |eta| {
        let num = all
            .minus(eta)
            .subsets()
            .filter(|&zeta| allowed(eta.union(zeta)))
            .fold(BigRational::zero(), |acc, zeta| acc + lp(zeta));
        ratio_to_f64(&(num / &xi))
    })
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // fall back to a scaled quotient when the direct conversion fails
        let scale = BigInt::from(1u64 << 62);
        (r * BigRational::from_integer(scale.clone())).to_integer().to_f64().unwrap_or(f64::NAN) / scale.to_f64().unwrap()
    })
}

fn check_activity(z: f64) -> Result<()> {
    if z.is_finite() && z >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("activity must be >= 0, got {z}")))
    }
}

/// `max_{η≠∅} k(η)^{1/|η|}` over stored configurations; 0 when every entry
/// vanishes or nothing but `∅` is stored.
pub fn ruelle_constant(k: &CorrelationTable) -> f64 {
    k.stored()
        .filter(|s| !s.is_empty())
        .map(|s| k.get(s).max(0.0).powf(1.0 / s.len() as f64))
        .fold(0.0, f64::max)
}

/// `z e^{2B} ∫ |e^{-φ} - 1|`; values below 1 flag the regime where the
/// iteration is a contraction.
pub fn contraction_estimate(params: &ModelParams) -> Result<f64> {
    if params.z == 0.0 || params.potential.is_zero() {
        return Ok(0.0);
    }
    let m = params.potential.mayer_integral(&params.geometry, 2000)?;
    Ok(params.z * (2.0 * params.potential.stability_b()).exp() * m.absolute)
}

/// Site-space counterpart of [`contraction_estimate`], using the discrete
/// Mayer norm and the exact stability constant.
pub fn site_contraction_estimate(space: &SiteSpace, z: f64) -> f64 {
    z * (2.0 * space.stability_constant()).exp() * space.mayer_norm()
}

/// Weight `C = 1/(z M)` of the norm `sup |k(η)| C^{-|η|}`, with `M` the
/// Mayer norm. In this norm the KS map is Lipschitz with constant at most
/// `e` times the contraction estimate; plain `C = 1` is not a contraction
/// norm because the `ρ = ∅` term copies `k(η)` into `k(η ∪ x)`.
pub fn norm_constant(z_mayer: f64) -> f64 {
    if z_mayer > 0.0 && z_mayer.is_finite() {
        1.0 / z_mayer
    } else {
        1.0
    }
}

/// Which KS instance updates a stored entry `k(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// `x` = largest site of `ξ`.
    #[default]
    Canonical,
    /// Mean over `x ∈ ξ`, the fixed points of which solve the summed form.
    Averaged,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub n_max: usize,
    pub r_max: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub closure: Closure,
    pub rule: UpdateRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_max: usize::MAX,
            r_max: usize::MAX,
            tol: 1e-12,
            max_iter: 500,
            closure: Closure::Power,
            rule: UpdateRule::Canonical,
        }
    }
}

/// Consecutive residual increases that end an iteration as divergent.
pub const DIVERGENCE_STREAK: usize = 10;

/// Diagnostics of a fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Weighted sup-norm change per iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub contraction_estimate: f64,
    pub ruelle_c: f64,
    /// Unweighted sup-norm change of the last iteration.
    pub final_residual: f64,
}

impl FixedPointReport {
    /// Largest ratio of consecutive residuals over the tail of the history.
    pub fn observed_rate(&self) -> f64 {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 1e-300 && w[1] > 1e-14)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

pub(crate) fn track(history: &[f64]) -> bool {
    let n = history.len();
    n > DIVERGENCE_STREAK && history[n - DIVERGENCE_STREAK - 1..].windows(2).all(|w| w[1] > w[0])
}

/// Iterates `k ← KS(k)` from the Poisson table on a site space. Changes are
/// measured in the sup norm weighted by `C^{-|η|}`, see [`norm_constant`].
/// The table is returned also when the iteration diverges.
pub fn ks_solve(space: &SiteSpace, z: f64, settings: &SolverSettings) -> Result<(CorrelationTable, FixedPointReport)> {
    check_activity(z)?;
    if !(settings.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", settings.tol)));
    }
    let n_max = settings.n_max.min(space.len().max(1));
    let mut k = CorrelationTable::poisson(space.clone(), n_max, settings.closure)?;
    let entries: Vec<SiteSet> = k.stored().filter(|s| !s.is_empty()).collect();
    let norm_c = norm_constant(z * space.mayer_norm());
    let mut report = FixedPointReport {
        iterations: 0,
        residual_history: Vec::new(),
        converged: false,
        diverged: false,
        contraction_estimate: site_contraction_estimate(space, z),
        ruelle_c: 1.0,
        final_residual: f64::NAN,
    };
    while report.iterations < settings.max_iter {
        let next: Vec<f64> = entries
            .par_iter()
            .map(|&xi| match settings.rule {
                UpdateRule::Canonical => {
                    let x = xi.iter().last().expect("non-empty");
                    ks_rhs_unchecked(&k, x, xi.without(x), z, settings.r_max)
                }
                UpdateRule::Averaged => {
                    xi.iter().map(|x| ks_rhs_unchecked(&k, x, xi.without(x), z, settings.r_max)).sum::<f64>() / xi.len() as f64
                }
            })
            .collect();
        let mut new_k = k.clone();
        for (&xi, &v) in entries.iter().zip(&next) {
            new_k.values[xi.bits() as usize] = v;
        }
        report.iterations += 1;
        let weighted = new_k.weighted_distance(&k, norm_c);
        let plain = new_k.weighted_distance(&k, 1.0);
        report.residual_history.push(weighted);
        report.final_residual = plain;
        k = new_k;
        report.ruelle_c = ruelle_constant(&k);
        if !weighted.is_finite() || track(&report.residual_history) {
            report.diverged = true;
            break;
        }
        if weighted <= settings.tol && plain <= settings.tol {
            report.converged = true;
            break;
        }
    }
    Ok((k, report))
}

/// Outcome of [`ks_vs_summed_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub sites: usize,
    pub z: f64,
    pub trials: usize,
    pub tolerance: f64,
    /// KS residual of the Gibbs table over every `(x, η)`.
    pub ks_residual: f64,
    /// Residual of the summed form for the same table.
    pub summed_residual: f64,
    /// Largest mismatch of the aggregation identity over random tables and
    /// test functions.
    pub aggregation_residual: f64,
}

/// Tolerance of the equivalence assertions.
pub const EQUIVALENCE_TOL: f64 = 1e-10;

/// Checks both directions linking the KS equation with its summed form:
///
/// (a) the Gibbs table solves KS at every `(x, η)` and the summed residual
/// vanishes everywhere;
///
/// (b) for random tables that solve neither, with `I(x, η) = k(η∪x) -
/// ks_rhs(k, x, η)`,
/// `∫ G(η) Σ_{x∈η} I(x, η∖x) dλ_z(η) = ∫∫ G(η ∪ x) I(x, η) dλ_z(η) z dx`
/// for random `G`. Hence a vanishing summed residual forces `I ≡ 0`.
pub fn ks_vs_summed_equivalence(space: &SiteSpace, z: f64, trials: usize, seed: u64) -> Result<EquivalenceReport> {
    if space.len() > 6 {
        return Err(Error::Domain(format!("equivalence check is limited to 6 sites, got {}", space.len())));
    }
    let n = space.len();
    let all = space.all();
    let full = n.max(1);
    let gibbs = exact_gibbs_oracle(space, z)?;
    let ks_residual = ks_sup_residual(&gibbs, z, full);
    let summed_worst = all
        .subsets()
        .map(|s| summed_residual(&gibbs, s, z, full).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, nan_max);
    let mut report = EquivalenceReport {
        sites: n,
        z,
        trials,
        tolerance: EQUIVALENCE_TOL,
        ks_residual,
        summed_residual: summed_worst,
        aggregation_residual: 0.0,
    };
    if !(ks_residual <= EQUIVALENCE_TOL && summed_worst <= EQUIVALENCE_TOL) {
        return Err(Error::Assertion {
            what: "Gibbs table solves KS and its summed form".into(),
            residual: nan_max(ks_residual, summed_worst),
            witness: format!("{} sites, z = {z}", n),
        });
    }
    let lp = |s: SiteSet| z.powi(s.len() as i32) * space.weight_of(s);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let k = CorrelationTable::from_fn(space.clone(), full, Closure::Power, |_| rng.random_range(0.0..2.0))?;
        let g: Vec<f64> = all.subsets().map(|_| rng.random_range(-1.0..1.0)).collect();
        let defect = |x: usize, eta: SiteSet| k.get(eta.with(x)) - ks_rhs_unchecked(&k, x, eta, z, full);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for eta in all.subsets() {
            let summed = summed_residual(&k, eta, z, full)?;
            lhs += lp(eta) * g[eta.bits() as usize] * summed;
            for x in all.minus(eta).iter() {
                rhs += lp(eta) * z * space.weight(x) * g[eta.with(x).bits() as usize] * defect(x, eta);
            }
        }
        let r = (lhs - rhs).abs() / (1.0 + lhs.abs());
        if !(r <= EQUIVALENCE_TOL) {
            return Err(Error::Assertion {
                what: "aggregation of the KS defect".into(),
                residual: r,
                witness: format!("trial {t}: lhs {lhs}, rhs {rhs}"),
            });
        }
        report.aggregation_residual = report.aggregation_residual.max(r);
    }
    Ok(report)
}
