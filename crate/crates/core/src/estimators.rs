//! Estimates of correlation functions from trajectories, and residuals of the
//! identities characterizing equilibrium: the GNZ equation, infinitesimal
//! invariance `∫ HF dμ = 0`, and the Bogoliubov functional equation.

use crate::combinatorics::{CylinderFunction, QuasiObservable};
use crate::dynamics::TrajectorySample;
use crate::error::{Error, Result};
use crate::generator::GeneratorContext;
use crate::ks::{coherent_moment, CorrelationTable};
use crate::model::{ball_volume, boltzmann, relative_energy_unchecked, FiniteConfiguration, SiteSet, SpacePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Value with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Batch-means summary of a serially correlated series.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub stderr: f64,
    /// Integrated autocorrelation time, in samples.
    pub tau: f64,
    pub batch_len: usize,
    pub batches: usize,
}

/// Batch lengths in units of the integrated autocorrelation time.
pub const BATCH_TAUS: f64 = 20.0;
/// Fewest batches kept when the series is short.
pub const MIN_BATCHES: usize = 10;

/// Integrated autocorrelation time `1 + 2 Σ ρ(t)` with the self-consistent
/// window `t >= 5 τ`.
pub fn autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let rho = c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
        tau += 2.0 * rho;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

pub fn batch_means(series: &[f64]) -> Result<BatchMeans> {
    let (len, batches) = batch_layout(series)?;
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let bm = batch_averages(series, len, batches);
    let stderr = spread(&bm) / (batches as f64).sqrt();
    Ok(BatchMeans {
        mean,
        stderr,
        tau: autocorrelation_time(series),
        batch_len: len,
        batches,
    })
}

fn batch_layout(series: &[f64]) -> Result<(usize, usize)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n}")));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite sample".into()));
    }
    let tau = autocorrelation_time(series);
    let mut len = (BATCH_TAUS * tau).ceil() as usize;
    if n / len.max(1) < MIN_BATCHES {
        len = n / MIN_BATCHES;
    }
    let len = len.max(1);
    Ok((len, n / len))
}

fn batch_averages(series: &[f64], len: usize, batches: usize) -> Vec<f64> {
    series[..len * batches].chunks(len).map(|b| b.iter().sum::<f64>() / len as f64).collect()
}

/// Sample standard deviation.
fn spread(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `lhs - rhs` with its standard error and z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: f64,
    pub stderr: f64,
    pub zscore: f64,
    pub samples: usize,
}

impl ResidualReport {
    /// Exact comparison: no statistical error.
    pub fn exact(lhs: f64, rhs: f64) -> Self {
        Self::from_parts(Estimate { value: lhs, stderr: 0.0 }, Estimate { value: rhs, stderr: 0.0 }, 0.0, 1)
    }

    fn from_parts(lhs: Estimate, rhs: Estimate, stderr: f64, samples: usize) -> Self {
        let residual = lhs.value - rhs.value;
        let zscore = if stderr > 0.0 {
            residual / stderr
        } else if residual == 0.0 {
            0.0
        } else {
            residual.signum() * f64::INFINITY
        };
        Self {
            lhs,
            rhs,
            residual,
            stderr,
            zscore,
            samples,
        }
    }

    /// Paired series; the standard error comes from batch means of the
    /// difference.
    pub fn from_series(lhs: &[f64], rhs: &[f64]) -> Result<Self> {
        if lhs.len() != rhs.len() {
            return Err(Error::Domain("series lengths differ".into()));
        }
        let l = batch_means(lhs)?;
        let r = batch_means(rhs)?;
        let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let d = batch_means(&diff)?;
        Ok(Self::from_parts(
            Estimate { value: l.mean, stderr: l.stderr },
            Estimate { value: r.mean, stderr: r.stderr },
            d.stderr,
            lhs.len(),
        ))
    }
}

fn require_snapshots(sample: &TrajectorySample) -> Result<()> {
    if sample.snapshots.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 snapshots, got {}",
            sample.snapshots.len()
        )));
    }
    Ok(())
}

fn free_count(sample: &TrajectorySample) -> Result<f64> {
    let zm = sample.model.z * sample.model.geometry.volume();
    if zm <= 0.0 {
        return Err(Error::Domain("normalization needs z > 0".into()));
    }
    Ok(zm)
}

/// `k₁` = time-averaged `|γ| / (z m(Λ))`, so that the Poisson process gives 1.
pub fn estimate_density(sample: &TrajectorySample) -> Result<Estimate> {
    require_snapshots(sample)?;
    let zm = free_count(sample)?;
    let b = batch_means(&sample.counts_series())?;
    Ok(Estimate {
        value: b.mean / zm,
        stderr: b.stderr / zm,
    })
}

/// Mean particle count and variance-to-mean ratio, the latter with a
/// jackknife error over batches.
#[derive(Debug, Clone, PartialEq)]
pub struct CountStatistics {
    pub mean: Estimate,
    pub dispersion: Estimate,
    pub tau: f64,
}

pub fn count_statistics(sample: &TrajectorySample) -> Result<CountStatistics> {
    require_snapshots(sample)?;
    let series = sample.counts_series();
    let b = batch_means(&series)?;
    let ratio = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        v / m
    };
    let used = &series[..b.batch_len * b.batches];
    let chunks: Vec<&[f64]> = used.chunks(b.batch_len).collect();
    let leave_out: Vec<f64> = (0..b.batches)
        .map(|i| {
            let rest: Vec<f64> = chunks
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, c)| c.iter().copied())
                .collect();
            ratio(&rest)
        })
        .collect();
    let bb = b.batches as f64;
    let jm = leave_out.iter().sum::<f64>() / bb;
    let jvar = (bb - 1.0) / bb * leave_out.iter().map(|t| (t - jm).powi(2)).sum::<f64>();
    Ok(CountStatistics {
        mean: Estimate {
            value: b.mean,
            stderr: b.stderr,
        },
        dispersion: Estimate {
            value: ratio(&series),
            stderr: jvar.sqrt(),
        },
        tau: b.tau,
    })
}

/// Radial bins `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    pub edges: Vec<f64>,
}

impl BinSpec {
    pub fn uniform(r_min: f64, r_max: f64, bins: usize) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min && bins > 0) {
            return Err(Error::Config(format!("bad bins: [{r_min}, {r_max}) in {bins}")));
        }
        let w = (r_max - r_min) / bins as f64;
        Ok(Self {
            edges: (0..=bins).map(|i| r_min + w * i as f64).collect(),
        })
    }
}

/// Binned pair correlation function, normalized so that the ideal gas gives 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrelationEstimate {
    pub bin_edges: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub density: Estimate,
}

/// Ordered pairs of points whose torus distance falls in each bin, divided
/// by `z² m(Λ)` times the shell volume, averaged over snapshots.
pub fn estimate_k2(sample: &TrajectorySample, bins: &BinSpec) -> Result<PairCorrelationEstimate> {
    require_snapshots(sample)?;
    let geom = sample.model.geometry;
    let edges = &bins.edges;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
        return Err(Error::Config("bin edges must increase from a nonnegative start".into()));
    }
    let r_top = *edges.last().expect("non-empty");
    if r_top > geom.side() / 2.0 {
        return Err(Error::Config(format!(
            "largest bin edge {r_top} exceeds half the box side {}",
            geom.side() / 2.0
        )));
    }
    let d = geom.dimension();
    let z = sample.model.z;
    let norm: Vec<f64> = edges
        .windows(2)
        .map(|w| z * z * geom.volume() * (ball_volume(d, w[1]) - ball_volume(d, w[0])))
        .collect();
    if norm.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::Domain("normalization needs z > 0".into()));
    }
    let nb = norm.len();
    let mut series = vec![Vec::with_capacity(sample.snapshots.len()); nb];
    let mut hist = vec![0.0; nb];
    for (_, config) in &sample.snapshots {
        hist.iter_mut().for_each(|h| *h = 0.0);
        let pts = config.points();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[..i] {
                let r = geom.distance(a, b);
                if r < edges[0] || r >= r_top {
                    continue;
                }
                let k = edges.partition_point(|e| *e <= r) - 1;
                hist[k] += 2.0;
            }
        }
        for k in 0..nb {
            series[k].push(hist[k] / norm[k]);
        }
    }
    let mut values = Vec::with_capacity(nb);
    let mut stderr = Vec::with_capacity(nb);
    for s in &series {
        let b = batch_means(s)?;
        values.push(b.mean);
        stderr.push(b.stderr);
    }
    Ok(PairCorrelationEstimate {
        bin_edges: edges.clone(),
        values,
        stderr,
        density: estimate_density(sample)?,
    })
}

/// GNZ residual for a test function `H(x, γ)` with `x ∈ γ`:
/// `E Σ_{x∈γ} H(x, γ)` against `z ∫_Λ H(x, γ ∪ x) e^{-E(x,γ)} dx`, the
/// inner integral by `mc_points` uniform points per snapshot on random
/// stream `seed`.
pub fn gnz_residual(
    sample: &TrajectorySample,
    testfn: impl Fn(&SpacePoint, &FiniteConfiguration) -> f64,
    mc_points: usize,
    seed: u64,
) -> Result<ResidualReport> {
    require_snapshots(sample)?;
    if mc_points == 0 {
        return Err(Error::Domain("need at least one Monte Carlo point".into()));
    }
    let geom = sample.model.geometry;
    let pot = &sample.model.potential;
    let zm = sample.model.z * geom.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lhs = Vec::with_capacity(sample.snapshots.len());
    let mut rhs = Vec::with_capacity(sample.snapshots.len());
    let mut extended = FiniteConfiguration::empty();
    for (_, gamma) in &sample.snapshots {
        lhs.push(gamma.iter().map(|x| testfn(x, gamma)).sum());
        let mut acc = 0.0;
        for _ in 0..mc_points {
            let x = geom.uniform_point(&mut rng);
            let w = boltzmann(relative_energy_unchecked(&x, gamma.points(), pot, &geom));
            if w == 0.0 {
                continue;
            }
            extended.clone_from(gamma);
            extended.push_unchecked(x);
            acc += testfn(&x, &extended) * w;
        }
        rhs.push(zm * acc / mc_points as f64);
    }
    ResidualReport::from_series(&lhs, &rhs)
}

/// Time average of `H(KG)(γ_t)` tested against 0. The birth integral uses a
/// grid shifted at random per snapshot, which keeps the estimate unbiased.
pub fn invariance_residual(
    sample: &TrajectorySample,
    g: &QuasiObservable,
    ctx: &GeneratorContext,
    seed: u64,
) -> Result<ResidualReport> {
    require_snapshots(sample)?;
    let f = CylinderFunction::new(g.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = sample
        .snapshots
        .iter()
        .map(|(_, gamma)| ctx.apply_h_randomized(&f, gamma, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    let zeros = vec![0.0; values.len()];
    ResidualReport::from_series(&values, &zeros)
}

/// Bogoliubov functional equation at `x` for a test function `φ` on the
/// sites, with `L(φ) = Σ_{|η|<=N} λ_z(η) e_λ(φ, η) k(η)`:
///
/// `δL/δφ(x) = L((1 + φ)(e^{-φ_pot(x-·)} - 1) + φ)`,
///
/// the derivative taken against the intensity `z w_x`, so that it reads
/// `Σ_{η∌x, |η|<=N} λ_z(η) e_λ(φ, η) k(η ∪ x)`. The argument on the right is
/// `-1` at `x` itself (self-exclusion).
pub fn bogoliubov_residual(k: &CorrelationTable, phi_test: &[f64], x: usize, z: f64, order: usize) -> Result<ResidualReport> {
    let space = k.space();
    if phi_test.len() != space.len() || x >= space.len() {
        return Err(Error::Domain("test function and site must live on the table's space".into()));
    }
    if order > k.n_max() {
        return Err(Error::Config(format!(
            "truncation order {order} exceeds stored N_max {}",
            k.n_max()
        )));
    }
    let all = space.all();
    let lhs = coherent_moment(k, SiteSet::singleton(x), all.without(x), phi_test, z, order);
    let h: Vec<f64> = (0..space.len())
        .map(|y| {
            let f = space.mayer(x, y);
            f + phi_test[y] * (1.0 + f)
        })
        .collect();
    let rhs = coherent_moment(k, SiteSet::EMPTY, all, &h, z, order);
    Ok(ResidualReport::exact(lhs, rhs))
}
