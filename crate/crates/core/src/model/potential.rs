use super::{ball_volume, total_energy, unit_sphere_area, BoxGeometry, FiniteConfiguration};
use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Radial interaction profile.
#[derive(Clone)]
pub enum Profile {
    Zero,
    /// `+inf` for `r < sigma`, zero beyond.
    HardSphere { sigma: f64 },
    /// `+inf` for `r < sigma`, `-depth` on `[sigma, outer)`, zero beyond.
    SquareWell { sigma: f64, outer: f64, depth: f64 },
    /// `+inf` for `r < sigma`, `+height` on `[sigma, outer)`, zero beyond.
    /// `sigma = 0` gives a pure penetrable step.
    SoftShoulder { sigma: f64, outer: f64, height: f64 },
    /// User profile evaluated on `[hard_core_radius, range]`. Breakpoints mark
    /// discontinuities for the Mayer quadrature.
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        breakpoints: Vec<f64>,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::HardSphere { sigma } => write!(f, "hard_sphere {sigma}"),
            Profile::SquareWell { sigma, outer, depth } => {
                write!(f, "square_well {sigma} {outer} {depth}")
            }
            Profile::SoftShoulder {
                sigma,
                outer,
                height,
            } => write!(f, "soft_shoulder {sigma} {outer} {height}"),
            Profile::Custom { name, .. } => write!(f, "custom {name}"),
        }
    }
}

/// Translation-invariant, radially symmetric pair potential with finite range
/// and a declared lower bound `φ >= -lower_bound`.
///
/// `stability_b` is the asserted constant of `E(η) >= -B|η|`; the lower
/// regularity and superstability flags are recorded assertions and are not
/// verified.
#[derive(Debug, Clone)]
pub struct PairPotential {
    profile: Profile,
    hard_core_radius: f64,
    range: f64,
    lower_bound: f64,
    stability_b: f64,
    pub asserts_lr: bool,
    pub asserts_ss: bool,
}

/// Density of the grid used to validate custom profiles.
const VALIDATION_POINTS: usize = 4096;

impl PairPotential {
    pub fn zero() -> Self {
        Self {
            profile: Profile::Zero,
            hard_core_radius: 0.0,
            range: 0.0,
            lower_bound: 0.0,
            stability_b: 0.0,
            asserts_lr: true,
            asserts_ss: true,
        }
    }

    pub fn hard_sphere(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(Self {
            profile: Profile::HardSphere { sigma },
            hard_core_radius: sigma,
            range: sigma,
            lower_bound: 0.0,
            stability_b: 0.0,
            asserts_lr: true,
            asserts_ss: true,
        })
    }

    pub fn square_well(sigma: f64, outer: f64, depth: f64, stability_b: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        if !(outer > sigma && outer.is_finite()) {
            return Err(Error::Domain(format!("square well needs outer > sigma, got {outer}")));
        }
        nonnegative("depth", depth)?;
        nonnegative("stability_b", stability_b)?;
        Ok(Self {
            profile: Profile::SquareWell { sigma, outer, depth },
            hard_core_radius: sigma,
            range: outer,
            lower_bound: depth,
            stability_b,
            asserts_lr: true,
            asserts_ss: true,
        })
    }

    pub fn soft_shoulder(sigma: f64, outer: f64, height: f64) -> Result<Self> {
        nonnegative("sigma", sigma)?;
        if !(outer > sigma && outer.is_finite()) {
            return Err(Error::Domain(format!("soft shoulder needs outer > sigma, got {outer}")));
        }
        nonnegative("height", height)?;
        Ok(Self {
            profile: Profile::SoftShoulder {
                sigma,
                outer,
                height,
            },
            hard_core_radius: sigma,
            range: outer,
            lower_bound: 0.0,
            stability_b: 0.0,
            asserts_lr: true,
            asserts_ss: true,
        })
    }

    /// Wraps a user profile. The constructor samples `profile` on a dense
    /// grid of `[hard_core_radius, 2 range]` and rejects it if it dips below
    /// `-lower_bound`, is NaN, or is nonzero beyond `range`.
    pub fn custom(
        name: impl Into<String>,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        hard_core_radius: f64,
        range: f64,
        lower_bound: f64,
        stability_b: f64,
        breakpoints: Vec<f64>,
    ) -> Result<Self> {
        nonnegative("hard_core_radius", hard_core_radius)?;
        positive("range", range)?;
        nonnegative("lower_bound", lower_bound)?;
        nonnegative("stability_b", stability_b)?;
        if range < hard_core_radius {
            return Err(Error::Domain("range must be >= hard_core_radius".into()));
        }
        let pot = Self {
            profile: Profile::Custom {
                name: name.into(),
                f,
                breakpoints,
            },
            hard_core_radius,
            range,
            lower_bound,
            stability_b,
            asserts_lr: false,
            asserts_ss: false,
        };
        let span = 2.0 * range - hard_core_radius;
        for i in 0..=VALIDATION_POINTS {
            let r = hard_core_radius + span * i as f64 / VALIDATION_POINTS as f64;
            let v = pot.value(r);
            if v.is_nan() {
                return Err(Error::Domain(format!("profile is NaN at r = {r}")));
            }
            if v < -lower_bound {
                return Err(Error::Domain(format!(
                    "profile {v} at r = {r} is below the declared bound -{lower_bound}"
                )));
            }
            if r > range && v != 0.0 {
                return Err(Error::Domain(format!("profile nonzero ({v}) beyond range at r = {r}")));
            }
        }
        Ok(pot)
    }

    /// Records user assertions of lower regularity and superstability.
    pub fn with_assertions(mut self, lower_regular: bool, superstable: bool) -> Self {
        self.asserts_lr = lower_regular;
        self.asserts_ss = superstable;
        self
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn hard_core_radius(&self) -> f64 {
        self.hard_core_radius
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn stability_b(&self) -> f64 {
        self.stability_b
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Zero)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lower_bound == 0.0
    }

    /// `φ(r)`, possibly `+inf`.
    pub fn value(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::HardSphere { sigma } => {
                if r < *sigma {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::SquareWell { sigma, outer, depth } => {
                if r < *sigma {
                    f64::INFINITY
                } else if r < *outer {
                    -depth
                } else {
                    0.0
                }
            }
            Profile::SoftShoulder {
                sigma,
                outer,
                height,
            } => {
                if r < *sigma {
                    f64::INFINITY
                } else if r < *outer {
                    *height
                } else {
                    0.0
                }
            }
            Profile::Custom { f, .. } => {
                if r < self.hard_core_radius {
                    f64::INFINITY
                } else if r > self.range {
                    0.0
                } else {
                    f(r)
                }
            }
        }
    }

    /// `e^{-φ(r)}`.
    pub fn boltzmann(&self, r: f64) -> f64 {
        super::boltzmann(self.value(r))
    }

    /// Mayer function `e^{-φ(r)} - 1`.
    pub fn mayer(&self, r: f64) -> f64 {
        self.boltzmann(r) - 1.0
    }

    /// Radii in `(hard_core_radius, range)` where the profile jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Zero | Profile::HardSphere { .. } => Vec::new(),
            Profile::SquareWell { .. } | Profile::SoftShoulder { .. } => Vec::new(),
            Profile::Custom { breakpoints, .. } => breakpoints
                .iter()
                .copied()
                .filter(|&b| b > self.hard_core_radius && b < self.range)
                .collect(),
        }
    }

    /// Quadrature of `∫_{R^d} |1 - e^{-φ}|` and of the signed Mayer integral
    /// `∫ (e^{-φ} - 1)`. The hard core contributes its ball volume exactly;
    /// the remaining shell uses composite Simpson with `resolution` panels per
    /// smooth segment.
    pub fn mayer_integral(&self, geometry: &BoxGeometry, resolution: usize) -> Result<MayerIntegral> {
        if self.range > geometry.side() {
            return Err(Error::Domain(format!(
                "potential range {} exceeds box side {}",
                self.range,
                geometry.side()
            )));
        }
        let d = geometry.dimension();
        let core = ball_volume(d, self.hard_core_radius);
        let mut absolute = core;
        let mut signed = -core;
        let mut edges = vec![self.hard_core_radius];
        edges.extend(self.breakpoints());
        edges.push(self.range);
        let panels = resolution.max(2).next_multiple_of(2);
        let area = unit_sphere_area(d);
        for seg in edges.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let h = (b - a) / panels as f64;
            let mut sa = 0.0;
            let mut ss = 0.0;
            for i in 0..=panels {
                let coef = if i == 0 || i == panels {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                // Interior evaluation points avoid the one-sided jump at
                // segment ends.
                let r = if i == 0 {
                    a + h * 1e-9
                } else if i == panels {
                    b - h * 1e-9
                } else {
                    a + h * i as f64
                };
                let m = self.mayer(r);
                let shell = area * r.powi(d as i32 - 1);
                sa += coef * m.abs() * shell;
                ss += coef * m * shell;
            }
            absolute += sa * h / 3.0;
            signed += ss * h / 3.0;
        }
        if !(absolute.is_finite() && signed.is_finite()) {
            return Err(Error::Numeric("non-finite Mayer integral".into()));
        }
        Ok(MayerIntegral { absolute, signed })
    }

    /// Empirical check of `E(η) >= -B|η|` over `samples`.
    pub fn stability_probe(
        &self,
        geometry: &BoxGeometry,
        samples: &[FiniteConfiguration],
    ) -> Result<StabilityReport> {
        if samples.is_empty() {
            return Err(Error::Domain("stability probe needs at least one sample".into()));
        }
        let mut worst_ratio = f64::INFINITY;
        let mut worst_index = 0;
        let mut violations = Vec::new();
        for (i, eta) in samples.iter().enumerate() {
            if eta.is_empty() {
                return Err(Error::Domain(format!("sample {i} is empty")));
            }
            let n = eta.len() as f64;
            let e = total_energy(eta, self, geometry);
            let ratio = e / n;
            if ratio < worst_ratio {
                worst_ratio = ratio;
                worst_index = i;
            }
            if e < -self.stability_b * n {
                violations.push(i);
            }
        }
        Ok(StabilityReport {
            asserted_b: self.stability_b,
            worst_ratio,
            worst_index,
            violations,
        })
    }
}

/// Result of [`PairPotential::mayer_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MayerIntegral {
    /// `∫ |1 - e^{-φ}|`.
    pub absolute: f64,
    /// `∫ (e^{-φ} - 1)`.
    pub signed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub asserted_b: f64,
    /// `min E(η)/|η|` over the samples.
    pub worst_ratio: f64,
    pub worst_index: usize,
    /// Indices of samples with `E(η) < -B|η|`.
    pub violations: Vec<usize>,
}

impl StabilityReport {
    pub fn is_violated(&self) -> bool {
        !self.violations.is_empty()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be >= 0, got {v}")))
    }
}
