//! Experiment configuration: one TOML document with explicit blocks.
//!
//! Physical parameters (activity, potential, box) never have defaults.
//! Numerical knobs (tolerances, caps, grid resolutions) do, and resolution
//! writes them back so the resolved document is complete and re-runnable.

use glauber_core::dynamics::{InitialCondition, SimParams, Strategy, DEFAULT_PARTICLE_CAP};
use glauber_core::ks::{Closure, UpdateRule};
use glauber_core::{BoxGeometry, FiniteConfiguration, ModelParams, PairPotential, SiteSpace, SpacePoint};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use toml::Spanned;

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<SitesBlock>,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub kernel: KernelBlock,
    #[serde(default)]
    pub estimate: EstimateBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub z: Spanned<f64>,
    /// `zero`, `hard_sphere σ`, `square_well σ outer depth B` or
    /// `soft_shoulder σ outer height`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_regular: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superstable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SitesBlock {
    pub weights: Spanned<Vec<f64>>,
    /// Symmetric pair potential between sites; `inf` marks a hard core.
    pub potential: Spanned<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Spanned<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_burn: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<Spanned<f64>>,
    /// `empty`, `poisson` or `explicit` (with `initial_points`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_points: Option<Spanned<Vec<Vec<f64>>>>,
    /// `thinning_nonneg` or `quadrature_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_per_axis: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle_cap: Option<Spanned<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<Spanned<usize>>,
    /// `power` or `superposition`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<Spanned<String>>,
    /// `canonical` or `averaged`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_cells: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_subcells: Option<Spanned<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Spanned<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateBlock {
    /// Snapshot files to read instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<Spanned<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_points: Option<Spanned<usize>>,
    /// Neighbour-count test functions, one per radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnz_radii: Option<Spanned<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance_observables: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance_per_axis: Option<Spanned<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_threshold: Option<Spanned<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// `tab`, `comma` or `space`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_snapshots: Option<bool>,
}

/// Subcommands, as far as default resolution cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    KsSolve,
    VerifyKernel,
    GnzCheck,
    Estimate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::KsSolve => "ks-solve",
            Command::VerifyKernel => "verify-kernel",
            Command::GnzCheck => "gnz-check",
            Command::Estimate => "estimate",
        }
    }

    fn simulates(self) -> bool {
        matches!(self, Command::Simulate | Command::GnzCheck | Command::Estimate)
    }
}

/// Source text kept for line-anchored messages.
pub struct Source<'a> {
    pub path: &'a str,
    pub text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> Option<usize> {
        if span.start == 0 && span.end == 0 {
            return None;
        }
        let end = span.start.min(self.text.len());
        Some(self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1)
    }

    pub fn error(&self, span: Range<usize>, key: &str, msg: impl std::fmt::Display) -> Failure {
        match self.line(span) {
            Some(l) => Failure::Config(format!("{}:{l}: {key}: {msg}", self.path)),
            None => Failure::Config(format!("{}: {key}: {msg}", self.path)),
        }
    }

    fn missing(&self, key: &str, command: Command) -> Failure {
        Failure::Config(format!("{}: {key} is required by {}", self.path, command.name()))
    }
}

fn fill<T>(slot: &mut Option<Spanned<T>>, value: T) {
    if slot.is_none() {
        *slot = Some(Spanned::new(0..0, value));
    }
}

pub fn parse(src: &Source) -> Result<ExperimentConfig, Failure> {
    toml::from_str(src.text).map_err(|e| {
        let line = e.span().and_then(|s| src.line(s));
        let msg = e.message().trim().to_string();
        match line {
            Some(l) => Failure::Config(format!("{}:{l}: {msg}", src.path)),
            None => Failure::Config(format!("{}: {msg}", src.path)),
        }
    })
}

/// Everything a subcommand needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub replicas: usize,
    pub sites: Option<SiteSpace>,
    pub model: Option<ModelParams>,
    pub sim: Option<SimParams>,
    pub delimiter: char,
}

/// Overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
}

pub fn resolve(
    mut cfg: ExperimentConfig,
    src: &Source,
    command: Command,
    overrides: Overrides,
) -> Result<Resolved, Failure> {
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed)
            .map_err(|_| Failure::Config(format!("--seed {seed} exceeds the representable range 0..=2^63-1")))?;
        cfg.run.seed = Some(Spanned::new(0..0, seed));
    }
    if let Some(r) = overrides.replicas {
        cfg.run.replicas = Some(Spanned::new(0..0, r));
    }
    fill(&mut cfg.run.seed, 0);
    fill(&mut cfg.run.replicas, 1);
    let seed_spanned = cfg.run.seed.clone().unwrap();
    let seed = u64::try_from(*seed_spanned.get_ref())
        .map_err(|_| src.error(seed_spanned.span(), "run.seed", "must be nonnegative"))?;
    let replicas_spanned = cfg.run.replicas.clone().unwrap();
    let replicas = *replicas_spanned.get_ref();
    if replicas == 0 {
        return Err(src.error(replicas_spanned.span(), "run.replicas", "must be at least 1"));
    }

    fill(&mut cfg.output.delimiter, "tab".to_string());
    cfg.output.write_snapshots.get_or_insert(true);
    let delim = cfg.output.delimiter.clone().unwrap();
    let delimiter = match delim.get_ref().as_str() {
        "tab" => '\t',
        "comma" => ',',
        "space" => ' ',
        other => {
            return Err(src.error(
                delim.span(),
                "output.delimiter",
                format!("unknown delimiter {other:?}; expected tab, comma or space"),
            ))
        }
    };

    let z = cfg.model.z.clone();
    if !(z.get_ref().is_finite() && *z.get_ref() >= 0.0) {
        return Err(src.error(z.span(), "model.z", "activity must be finite and >= 0"));
    }

    let sites = match &cfg.sites {
        Some(block) => Some(site_space(block, src)?),
        None => None,
    };

    let needs_continuum = command.simulates() || (command == Command::KsSolve && sites.is_none());
    if command == Command::VerifyKernel && sites.is_none() {
        return Err(src.missing("[sites]", command));
    }
    let model = if needs_continuum || cfg.model.potential.is_some() {
        Some(model_params(&mut cfg.model, src, command)?)
    } else {
        None
    };

    match command {
        Command::KsSolve => resolve_solver(&mut cfg.solver, src, sites.as_ref())?,
        Command::VerifyKernel => fill(&mut cfg.kernel.trials, 200),
        _ => {}
    }

    let reads_files = cfg.estimate.snapshots.as_ref().is_some_and(|v| !v.is_empty());
    let sim = if command.simulates() && !(command != Command::Simulate && reads_files) {
        Some(sim_params(&mut cfg.run, src, command, model.clone().unwrap())?)
    } else {
        None
    };
    if matches!(command, Command::Estimate | Command::GnzCheck) {
        resolve_estimate(&mut cfg.estimate, src, command, model.as_ref().unwrap())?;
    }

    Ok(Resolved {
        config: cfg,
        seed,
        replicas,
        sites,
        model,
        sim,
        delimiter,
    })
}

fn site_space(block: &SitesBlock, src: &Source) -> Result<SiteSpace, Failure> {
    let n = block.weights.get_ref().len();
    let rows = block.potential.get_ref();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(src.error(
            block.potential.span(),
            "sites.potential",
            format!("must be a {n} x {n} matrix to match sites.weights"),
        ));
    }
    for i in 0..n {
        for j in 0..i {
            if rows[i][j] != rows[j][i] && !(rows[i][j].is_nan() && rows[j][i].is_nan()) {
                return Err(src.error(
                    block.potential.span(),
                    "sites.potential",
                    format!("not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    SiteSpace::new(block.weights.get_ref().clone(), rows.clone())
        .map_err(|e| src.error(block.weights.span(), "sites", e))
}

/// Parses a built-in potential such as `hard_sphere 1.0`.
pub fn parse_potential(spec: &str) -> Result<PairPotential, String> {
    let mut words = spec.split_whitespace();
    let name = words.next().ok_or("empty potential")?;
    let args: Vec<f64> = words
        .map(|w| w.parse::<f64>().map_err(|_| format!("{w:?} is not a number")))
        .collect::<Result<_, _>>()?;
    let want = |n: usize, usage: &str| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} arguments: {usage}"))
        }
    };
    let pot = match name {
        "zero" => {
            want(0, "zero")?;
            Ok(PairPotential::zero())
        }
        "hard_sphere" => {
            want(1, "hard_sphere <sigma>")?;
            PairPotential::hard_sphere(args[0])
        }
        "square_well" => {
            want(4, "square_well <sigma> <outer> <depth> <stability_b>")?;
            PairPotential::square_well(args[0], args[1], args[2], args[3])
        }
        "soft_shoulder" => {
            want(3, "soft_shoulder <sigma> <outer> <height>")?;
            PairPotential::soft_shoulder(args[0], args[1], args[2])
        }
        other => {
            return Err(format!(
                "unknown potential {other:?}; expected zero, hard_sphere, square_well or soft_shoulder"
            ))
        }
    };
    pot.map_err(|e| e.to_string())
}

fn model_params(block: &mut ModelBlock, src: &Source, command: Command) -> Result<ModelParams, Failure> {
    let pot_spec = block.potential.clone().ok_or_else(|| src.missing("model.potential", command))?;
    let dim = block.dimension.clone().ok_or_else(|| src.missing("model.dimension", command))?;
    let side = block.side.clone().ok_or_else(|| src.missing("model.side", command))?;
    let periodic = *block.periodic.get_or_insert(true);
    let lr = *block.lower_regular.get_or_insert(false);
    let ss = *block.superstable.get_or_insert(false);
    let potential = parse_potential(pot_spec.get_ref())
        .map_err(|e| src.error(pot_spec.span(), "model.potential", e))?
        .with_assertions(lr, ss);
    let geometry = BoxGeometry::new(*dim.get_ref(), *side.get_ref(), periodic)
        .map_err(|e| src.error(dim.span(), "model.dimension/side", e))?;
    ModelParams::new(*block.z.get_ref(), potential, geometry).map_err(|e| src.error(block.z.span(), "model.z", e))
}

fn resolve_solver(block: &mut SolverBlock, src: &Source, sites: Option<&SiteSpace>) -> Result<(), Failure> {
    fill(&mut block.tol, 1e-12);
    fill(&mut block.max_iter, 500);
    fill(&mut block.rule, "canonical".into());
    match sites {
        Some(space) => {
            fill(&mut block.n_max, space.len());
            fill(&mut block.r_max, space.len());
            fill(&mut block.closure, "power".into());
        }
        None => {
            fill(&mut block.r_max, 3);
            fill(&mut block.closure, "superposition".into());
            fill(&mut block.lattice_cells, 512);
            fill(&mut block.lattice_subcells, 8);
        }
    }
    closure_of(block, src)?;
    rule_of(block, src)?;
    let tol = block.tol.as_ref().unwrap();
    if tol.get_ref().is_nan() || *tol.get_ref() <= 0.0 {
        return Err(src.error(tol.span(), "solver.tol", "must be positive"));
    }
    Ok(())
}

pub fn closure_of(block: &SolverBlock, src: &Source) -> Result<Closure, Failure> {
    let c = block.closure.as_ref().unwrap();
    match c.get_ref().as_str() {
        "power" => Ok(Closure::Power),
        "superposition" => Ok(Closure::Superposition),
        other => Err(src.error(
            c.span(),
            "solver.closure",
            format!("unknown closure {other:?}; expected power or superposition"),
        )),
    }
}

pub fn rule_of(block: &SolverBlock, src: &Source) -> Result<UpdateRule, Failure> {
    let r = block.rule.as_ref().unwrap();
    match r.get_ref().as_str() {
        "canonical" => Ok(UpdateRule::Canonical),
        "averaged" => Ok(UpdateRule::Averaged),
        other => Err(src.error(
            r.span(),
            "solver.rule",
            format!("unknown update rule {other:?}; expected canonical or averaged"),
        )),
    }
}

fn sim_params(block: &mut RunBlock, src: &Source, command: Command, model: ModelParams) -> Result<SimParams, Failure> {
    let t_burn = block.t_burn.clone().ok_or_else(|| src.missing("run.t_burn", command))?;
    let t_max = block.t_max.clone().ok_or_else(|| src.missing("run.t_max", command))?;
    let dt = block
        .snapshot_interval
        .clone()
        .ok_or_else(|| src.missing("run.snapshot_interval", command))?;
    let initial = block.initial.clone().ok_or_else(|| src.missing("run.initial", command))?;
    let strategy = block.strategy.clone().ok_or_else(|| src.missing("run.strategy", command))?;
    fill(&mut block.particle_cap, DEFAULT_PARTICLE_CAP);

    let dim = model.geometry.dimension();
    let initial = match initial.get_ref().as_str() {
        "empty" => InitialCondition::Empty,
        "poisson" => InitialCondition::Poisson,
        "explicit" => {
            let pts = block
                .initial_points
                .as_ref()
                .ok_or_else(|| src.error(initial.span(), "run.initial", "explicit needs run.initial_points"))?;
            let bad = |msg: String| src.error(pts.span(), "run.initial_points", msg);
            let points: Vec<SpacePoint> = pts
                .get_ref()
                .iter()
                .map(|p| {
                    if p.len() == dim {
                        Ok(SpacePoint::new(p))
                    } else {
                        Err(bad(format!("point {p:?} does not have {dim} coordinates")))
                    }
                })
                .collect::<Result<_, _>>()?;
            InitialCondition::Explicit(FiniteConfiguration::new(points).map_err(|e| bad(e.to_string()))?)
        }
        other => {
            return Err(src.error(
                initial.span(),
                "run.initial",
                format!("unknown initial condition {other:?}; expected empty, poisson or explicit"),
            ))
        }
    };
    if let (Some(pts), false) = (&block.initial_points, matches!(initial, InitialCondition::Explicit(_))) {
        return Err(src.error(pts.span(), "run.initial_points", "only allowed with initial = \"explicit\""));
    }
    let strategy = match strategy.get_ref().as_str() {
        "thinning_nonneg" => {
            if let Some(q) = &block.quadrature_per_axis {
                return Err(src.error(q.span(), "run.quadrature_per_axis", "only used by quadrature_rate"));
            }
            Strategy::ThinningNonneg
        }
        "quadrature_rate" => {
            fill(&mut block.quadrature_per_axis, 64);
            Strategy::QuadratureRate {
                per_axis: *block.quadrature_per_axis.as_ref().unwrap().get_ref(),
            }
        }
        other => {
            return Err(src.error(
                strategy.span(),
                "run.strategy",
                format!("unknown strategy {other:?}; expected thinning_nonneg or quadrature_rate"),
            ))
        }
    };
    let mut sim = SimParams::new(model, *t_burn.get_ref(), *t_max.get_ref(), *dt.get_ref(), initial, strategy)
        .map_err(|e| src.error(t_burn.span(), "run", e))?;
    sim.particle_cap = *block.particle_cap.as_ref().unwrap().get_ref();
    Ok(sim)
}

fn resolve_estimate(block: &mut EstimateBlock, src: &Source, command: Command, model: &ModelParams) -> Result<(), Failure> {
    fill(&mut block.mc_points, 16);
    fill(&mut block.z_threshold, 4.0);
    match command {
        Command::Estimate => {
            let range = model.potential.range();
            let half = model.geometry.side() / 2.0;
            let top = if range > 0.0 { (3.0 * range).min(half) } else { half };
            fill(&mut block.r_min, 0.0);
            fill(&mut block.r_max, top);
            fill(&mut block.bins, 20);
        }
        Command::GnzCheck => {
            fill(&mut block.gnz_radii, Vec::new());
            fill(&mut block.invariance_observables, 0);
            fill(&mut block.invariance_per_axis, 64);
            let radii = block.gnz_radii.as_ref().unwrap();
            if radii.get_ref().iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(src.error(radii.span(), "estimate.gnz_radii", "radii must be positive"));
            }
        }
        _ => {}
    }
    let mc = block.mc_points.as_ref().unwrap();
    if *mc.get_ref() == 0 {
        return Err(src.error(mc.span(), "estimate.mc_points", "must be at least 1"));
    }
    Ok(())
}

/// The resolved document, re-parseable into the same configuration.
pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}
