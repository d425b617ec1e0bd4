//! Continuous-time Glauber dynamics in the periodic box: every particle dies
//! at rate 1 and a particle is born at `x` with intensity `z e^{-E(x,γ)} dx`.

mod cells;
mod chain;
mod rates;

pub use cells::CellIndex;
pub use chain::{finite_site_chain, FiniteSiteChain, StationaryMethod};

use rates::RateGrid;

use crate::error::{Error, Result};
use crate::model::{boltzmann, FiniteConfiguration, ModelParams, SpacePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

/// Default hard cap on the particle count.
pub const DEFAULT_PARTICLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Empty,
    /// Poisson process of intensity `z`.
    Poisson,
    Explicit(FiniteConfiguration),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Uniform proposals at the free rate `z m(Λ)`, accepted with
    /// probability `e^{-E(x,γ)}`. Exact; needs `φ >= 0`.
    ThinningNonneg,
    /// Total birth rate from a midpoint rule with `per_axis` cells per axis;
    /// a birth lands uniformly in a cell drawn by its rate. Biased at the
    /// scale of one cell; a landing spot inside a hard core is rejected.
    QuadratureRate { per_axis: usize },
}

/// Simulation parameters.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub model: ModelParams,
    pub t_burn: f64,
    pub t_max: f64,
    pub snapshot_interval: f64,
    pub initial: InitialCondition,
    pub strategy: Strategy,
    pub particle_cap: usize,
}

impl SimParams {
    pub fn new(
        model: ModelParams,
        t_burn: f64,
        t_max: f64,
        snapshot_interval: f64,
        initial: InitialCondition,
        strategy: Strategy,
    ) -> Result<Self> {
        if !(t_burn >= 0.0 && t_burn < t_max && t_max.is_finite()) {
            return Err(Error::Config(format!("need 0 <= t_burn < t_max, got {t_burn} and {t_max}")));
        }
        if !(snapshot_interval > 0.0 && snapshot_interval.is_finite()) {
            return Err(Error::Config(format!("snapshot interval must be positive, got {snapshot_interval}")));
        }
        match strategy {
            Strategy::ThinningNonneg if !model.potential.is_nonnegative() => {
                return Err(Error::Config(format!(
                    "thinning needs a nonnegative potential; lower bound is {}",
                    model.potential.lower_bound()
                )));
            }
            Strategy::QuadratureRate { per_axis: 0 } => {
                return Err(Error::Config("quadrature grid needs at least one cell".into()));
            }
            _ => {}
        }
        if !model.geometry.is_periodic() {
            return Err(Error::Config("the simulator runs in a periodic box".into()));
        }
        if let InitialCondition::Explicit(c) = &initial {
            if !c.iter().all(|p| model.geometry.contains(p)) {
                return Err(Error::Config("initial configuration leaves the box".into()));
            }
        }
        Ok(Self {
            model,
            t_burn,
            t_max,
            snapshot_interval,
            initial,
            strategy,
            particle_cap: DEFAULT_PARTICLE_CAP,
        })
    }

    /// Snapshot times `t_burn + kΔ <= t_max`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let t = self.t_burn + k as f64 * self.snapshot_interval;
            if t > self.t_max {
                break;
            }
            out.push(t);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Birth,
    Death,
    /// A birth proposal was thinned out.
    Rejected,
    /// Total rate zero: nothing ever happens again.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub births: u64,
    pub deaths: u64,
    pub rejected: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.births + self.deaths + self.rejected
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            births: self.births + o.births,
            deaths: self.deaths + o.deaths,
            rejected: self.rejected + o.rejected,
        }
    }
}

enum Pending {
    Death(usize),
    Birth(SpacePoint),
    Rejected,
    Frozen,
}

/// State of one trajectory.
#[derive(Debug, Clone)]
pub struct SimState {
    config: FiniteConfiguration,
    time: f64,
    rng: ChaCha8Rng,
    index: CellIndex,
    counts: EventCounts,
    quadrature: Option<RateGrid>,
}

impl SimState {
    /// Fresh state drawn from the initial condition, on random stream
    /// `stream` of `seed`.
    pub fn new(params: &SimParams, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let geom = params.model.geometry;
        let config = match &params.initial {
            InitialCondition::Empty => FiniteConfiguration::empty(),
            InitialCondition::Explicit(c) => c.clone(),
            InitialCondition::Poisson => {
                let mean = params.model.z * geom.volume();
                let n = if mean > 0.0 {
                    Poisson::new(mean)
                        .map_err(|e| Error::Numeric(format!("Poisson initial law: {e}")))?
                        .sample(&mut rng) as usize
                } else {
                    0
                };
                if n > params.particle_cap {
                    return Err(Error::RateExplosion {
                        count: n,
                        cap: params.particle_cap,
                        time: 0.0,
                    });
                }
                (0..n).map(|_| geom.uniform_point(&mut rng)).collect()
            }
        };
        let mut index = CellIndex::new(geom, params.model.potential.range());
        index.rebuild(&config);
        let quadrature = match params.strategy {
            Strategy::QuadratureRate { per_axis } => {
                Some(RateGrid::new(geom, per_axis, &config, &index, &params.model.potential))
            }
            Strategy::ThinningNonneg => None,
        };
        Ok(Self {
            config,
            time: 0.0,
            rng,
            index,
            counts: EventCounts::default(),
            quadrature,
        })
    }

    pub fn config(&self) -> &FiniteConfiguration {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn index(&self) -> &CellIndex {
        &self.index
    }

    /// Draws the waiting time and the next event without applying it.
    fn sample(&mut self, params: &SimParams) -> (f64, Pending) {
        let model = &params.model;
        let n = self.config.len() as f64;
        match &self.quadrature {
            None => {
                let birth = model.z * model.geometry.volume();
                let total = n + birth;
                if total == 0.0 {
                    return (f64::INFINITY, Pending::Frozen);
                }
                let dt = Exp::new(total).expect("positive rate").sample(&mut self.rng);
                if self.rng.random::<f64>() * total < n {
                    let i = self.rng.random_range(0..self.config.len());
                    return (dt, Pending::Death(i));
                }
                let x = model.geometry.uniform_point(&mut self.rng);
                let accept = boltzmann(self.index.relative_energy(&x, &self.config, &model.potential));
                let kept = accept == 1.0 || (accept > 0.0 && self.rng.random::<f64>() < accept);
                (dt, if kept { Pending::Birth(x) } else { Pending::Rejected })
            }
            Some(grid) => {
                let scale = model.z * grid.cell_volume();
                let birth = scale * grid.total();
                let total = n + birth;
                if total == 0.0 {
                    return (f64::INFINITY, Pending::Frozen);
                }
                let dt = Exp::new(total).expect("positive rate").sample(&mut self.rng);
                let u = self.rng.random::<f64>() * total;
                if u < n {
                    let i = self.rng.random_range(0..self.config.len());
                    return (dt, Pending::Death(i));
                }
                let pick = grid.find((u - n) / scale);
                let d = model.geometry.dimension();
                let h = grid.spacing();
                let mut c = *grid.node(pick).coords();
                for a in c.iter_mut().take(d) {
                    *a += (self.rng.random::<f64>() - 0.5) * h;
                }
                let x = model.geometry.wrap(&SpacePoint::new(&c[..d]));
                let e = self.index.relative_energy(&x, &self.config, &model.potential);
                (dt, if e == f64::INFINITY { Pending::Rejected } else { Pending::Birth(x) })
            }
        }
    }

    fn apply(&mut self, event: Pending, params: &SimParams) -> Result<EventKind> {
        let kind = match event {
            Pending::Death(i) => {
                let x = self.config.points()[i];
                self.index.swap_remove(i);
                self.config.swap_remove(i);
                if let Some(grid) = &mut self.quadrature {
                    grid.refresh_near(&x, &self.config, &self.index, &params.model.potential);
                }
                self.counts.deaths += 1;
                EventKind::Death
            }
            Pending::Birth(x) => {
                if self.config.len() >= params.particle_cap {
                    return Err(Error::RateExplosion {
                        count: self.config.len() + 1,
                        cap: params.particle_cap,
                        time: self.time,
                    });
                }
                self.index.insert(self.config.len(), &x);
                self.config.push_unchecked(x);
                if let Some(grid) = &mut self.quadrature {
                    grid.refresh_near(&x, &self.config, &self.index, &params.model.potential);
                }
                self.counts.births += 1;
                EventKind::Birth
            }
            Pending::Rejected => {
                self.counts.rejected += 1;
                EventKind::Rejected
            }
            Pending::Frozen => EventKind::Frozen,
        };
        if cfg!(debug_assertions) {
            self.index.check(&self.config)?;
        }
        Ok(kind)
    }

    /// Advances to and applies the next event. A frozen state stays put.
    pub fn next_event(&mut self, params: &SimParams) -> Result<EventKind> {
        let (dt, event) = self.sample(params);
        if dt.is_finite() {
            self.time += dt;
        }
        self.apply(event, params)
    }
}

/// Snapshots of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub model: ModelParams,
    pub snapshot_interval: f64,
    pub snapshots: Vec<(f64, FiniteConfiguration)>,
    pub counts: EventCounts,
}

impl PartialEq for TrajectorySample {
    /// Compares the recorded trajectory; the model is not compared.
    fn eq(&self, o: &Self) -> bool {
        self.snapshot_interval == o.snapshot_interval && self.snapshots == o.snapshots && self.counts == o.counts
    }
}

impl TrajectorySample {
    pub fn counts_series(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(_, c)| c.len() as f64).collect()
    }

    /// Pools replicas sharing the model. Snapshots are concatenated in
    /// replica order.
    pub fn merge(parts: &[TrajectorySample]) -> Result<TrajectorySample> {
        let first = parts.first().ok_or_else(|| Error::Domain("nothing to merge".into()))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            out.snapshots.extend(p.snapshots.iter().cloned());
            out.counts = out.counts.merge(&p.counts);
        }
        Ok(out)
    }
}

/// Runs one trajectory from the initial condition through `t_max`, recording
/// the state at every snapshot time. Deterministic in `(params, seed, stream)`.
pub fn run(params: &SimParams, seed: u64) -> Result<TrajectorySample> {
    run_stream(params, seed, 0)
}

pub fn run_stream(params: &SimParams, seed: u64, stream: u64) -> Result<TrajectorySample> {
    let mut state = SimState::new(params, seed, stream)?;
    let times = params.snapshot_times();
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next = 0;
    loop {
        let (dt, event) = state.sample(params);
        let t_event = state.time + dt;
        while next < times.len() && times[next] < t_event {
            if !cfg!(debug_assertions) {
                state.index.check(&state.config)?;
            } else if let Some(grid) = &state.quadrature {
                grid.check(&state.config, &state.index, &params.model.potential)?;
            }
            snapshots.push((times[next], state.config.clone()));
            next += 1;
        }
        if t_event > params.t_max {
            state.time = params.t_max;
            break;
        }
        state.time = t_event;
        state.apply(event, params)?;
    }
    Ok(TrajectorySample {
        model: params.model.clone(),
        snapshot_interval: params.snapshot_interval,
        snapshots,
        counts: state.counts,
    })
}

/// Independent replicas on streams `0..replicas`, run in parallel.
pub fn run_replicas(params: &SimParams, seed: u64, replicas: usize) -> Result<Vec<TrajectorySample>> {
    (0..replicas as u64).into_par_iter().map(|r| run_stream(params, seed, r)).collect()
}
