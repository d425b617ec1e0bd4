//! The five subcommands. Each fills a [`Report`] and writes its artifacts
//! through the [`Writer`]; a failed check comes back as an error.

use glauber_core::combinatorics::QuasiObservable;
use glauber_core::dynamics::{run_replicas, TrajectorySample};
use glauber_core::estimators::{
    count_statistics, estimate_density, estimate_k2, gnz_residual, invariance_residual, BinSpec, ResidualReport,
};
use glauber_core::generator::{check_intertwining, BirthIntegral, GeneratorContext};
use glauber_core::ks::{exact_gibbs_oracle, ks_solve, LatticeKs, SolverSettings};
use glauber_core::{Caps, Error, FiniteConfiguration, ModelParams, Region, SiteSpace, SpacePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::Value;

use crate::config::{closure_of, rule_of, Command, Resolved, Source};
use crate::output::{counts_value, floats, read_snapshots, snapshot_file, snapshot_records, table_name, Report, DelimitedTable, Writer};
use crate::Failure;

pub fn run(command: Command, r: &Resolved, src: &Source, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    match command {
        Command::Simulate => simulate(r, out, report),
        Command::KsSolve => match &r.sites {
            Some(space) => ks_sites(r, src, space, out, report),
            None => ks_lattice(r, src, out, report),
        },
        Command::VerifyKernel => verify_kernel(r, report),
        Command::GnzCheck => gnz_check(r, out, report),
        Command::Estimate => estimate(r, out, report),
    }
}

fn get<T: Copy>(v: &Option<toml::Spanned<T>>) -> T {
    *v.as_ref().expect("resolved").get_ref()
}

fn simulate_all(r: &Resolved) -> Result<Vec<TrajectorySample>, Failure> {
    let sim = r.sim.as_ref().expect("resolved simulation");
    Ok(run_replicas(sim, r.seed, r.replicas)?)
}

/// Simulated replicas, or the snapshot files named in the config.
fn samples(r: &Resolved) -> Result<Vec<TrajectorySample>, Failure> {
    match &r.config.estimate.snapshots {
        Some(paths) if !paths.is_empty() => {
            let model = r.model.as_ref().expect("resolved model");
            paths.iter().map(|p| read_snapshots(p, model)).collect()
        }
        _ => simulate_all(r),
    }
}

fn estimate_value(report: &mut Report, section: &str, key: &str, value: f64, stderr: f64) {
    report.set(section, key, value);
    report.set(section, &format!("{key}_stderr"), stderr);
}

fn summarize(report: &mut Report, sample: &TrajectorySample) {
    report.set("summary", "snapshots", sample.snapshots.len() as i64);
    match (estimate_density(sample), count_statistics(sample)) {
        (Ok(k1), Ok(stats)) => {
            estimate_value(report, "summary", "density_ratio", k1.value, k1.stderr);
            estimate_value(report, "summary", "mean_count", stats.mean.value, stats.mean.stderr);
            estimate_value(report, "summary", "dispersion", stats.dispersion.value, stats.dispersion.stderr);
            report.set("summary", "autocorrelation_time", stats.tau);
        }
        (Err(e), _) | (_, Err(e)) => {
            let mean = sample.counts_series().iter().sum::<f64>() / sample.snapshots.len().max(1) as f64;
            report.set("summary", "mean_count", mean);
            report.set("summary", "estimators", format!("unavailable: {e}"));
        }
    }
}

fn simulate(r: &Resolved, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    let replicas = simulate_all(r)?;
    if r.config.output.write_snapshots.unwrap_or(true) {
        for (i, s) in replicas.iter().enumerate() {
            out.write(&snapshot_file(i), &snapshot_records(s))?;
        }
    }
    let per_replica: Vec<Value> = replicas
        .iter()
        .map(|s| {
            let mut t = toml::Table::new();
            t.insert("snapshots".into(), Value::Integer(s.snapshots.len() as i64));
            t.insert("events".into(), counts_value(&s.counts));
            let last = s.snapshots.last().map_or(0, |(_, g)| g.len());
            t.insert("final_count".into(), Value::Integer(last as i64));
            Value::Table(t)
        })
        .collect();
    report.set("result", "replicas", Value::Array(per_replica));
    let merged = TrajectorySample::merge(&replicas)?;
    report.set("result", "events", counts_value(&merged.counts));
    summarize(report, &merged);
    Ok(())
}

fn site_label(sites: impl IntoIterator<Item = usize>) -> String {
    let s: Vec<String> = sites.into_iter().map(|i| i.to_string()).collect();
    if s.is_empty() {
        "-".into()
    } else {
        s.join(":")
    }
}

fn fixed_point_section(report: &mut Report, rep: &glauber_core::FixedPointReport) {
    report.set("result", "iterations", rep.iterations as i64);
    report.set("result", "converged", rep.converged);
    report.set("result", "diverged", rep.diverged);
    report.set("result", "contraction_estimate", rep.contraction_estimate);
    report.set("result", "ruelle_c", rep.ruelle_c);
    report.set("result", "final_residual", rep.final_residual);
    report.set("result", "observed_rate", rep.observed_rate());
    report.set("result", "residual_history", floats(&rep.residual_history));
}

fn ks_sites(r: &Resolved, src: &Source, space: &SiteSpace, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    let s = &r.config.solver;
    let settings = SolverSettings {
        n_max: get(&s.n_max),
        r_max: get(&s.r_max),
        tol: get(&s.tol),
        max_iter: get(&s.max_iter),
        closure: closure_of(s, src)?,
        rule: rule_of(s, src)?,
    };
    let z = *r.config.model.z.get_ref();
    let (table, rep) = ks_solve(space, z, &settings)?;
    let mut t = DelimitedTable::new(r.delimiter, &["sites", "k"]);
    for (eta, k) in table.rows() {
        t.row([site_label(eta.iter()), k.to_string()]);
    }
    out.write(&table_name("ks_table", r.delimiter), &t.finish())?;
    fixed_point_section(report, &rep);
    if space.len() <= Caps::default().max_sites && settings.n_max >= space.len() && settings.r_max >= space.len() {
        let exact = exact_gibbs_oracle(space, z)?;
        let err = table.rows().iter().map(|(eta, k)| (k - exact.get(*eta)).abs()).fold(0.0, f64::max);
        report.set("result", "max_error_vs_gibbs", err);
    }
    finish_fixed_point(&rep)
}

fn finish_fixed_point(rep: &glauber_core::FixedPointReport) -> Result<(), Failure> {
    if rep.converged {
        return Ok(());
    }
    let why = if rep.diverged {
        format!(
            "fixed-point iteration diverged after {} iterations (contraction estimate {})",
            rep.iterations, rep.contraction_estimate
        )
    } else {
        format!("no convergence within {} iterations; residual {}", rep.iterations, rep.final_residual)
    };
    Err(Failure::Assertion(why))
}

fn ks_lattice(r: &Resolved, src: &Source, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    let s = &r.config.solver;
    let model = r.model.clone().expect("resolved model");
    let mut lk = LatticeKs::new(model, get(&s.lattice_cells), get(&s.r_max));
    lk.closure = closure_of(s, src)?;
    lk.subcells = get(&s.lattice_subcells);
    lk.tol = get(&s.tol);
    lk.max_iter = get(&s.max_iter);
    let sol = lk.solve()?;
    let mut t = DelimitedTable::new(r.delimiter, &["cells", "distance", "k"]);
    for (cells, k) in sol.rows() {
        let d = match cells.as_slice() {
            [0, j] => sol.distance[*j].to_string(),
            _ => "-".into(),
        };
        t.row([site_label(cells), d, k.to_string()]);
    }
    out.write(&table_name("ks_table", r.delimiter), &t.finish())?;
    report.set("result", "k1", sol.k1);
    fixed_point_section(report, &sol.report);
    finish_fixed_point(&sol.report)
}

fn verify_kernel(r: &Resolved, report: &mut Report) -> Result<(), Failure> {
    let space = r.sites.as_ref().expect("resolved sites");
    let trials = get(&r.config.kernel.trials);
    match check_intertwining(space, *r.config.model.z.get_ref(), trials, r.seed) {
        Ok(rep) => {
            report.set("result", "sites", rep.sites as i64);
            report.set("result", "trials", rep.trials as i64);
            report.set("result", "tolerance", rep.tolerance);
            report.set("result", "max_residual", rep.max_residual);
            report.set("result", "worst_trial", rep.worst_trial as i64);
            report.set("result", "worst_configuration", site_label(rep.worst_gamma.iter()));
            Ok(())
        }
        Err(Error::Assertion { what, residual, witness }) => {
            report.set("failure", "identity", what.clone());
            report.set("failure", "residual", residual);
            report.set("failure", "witness", witness.clone());
            Err(Failure::Assertion(format!("{what}: residual {residual:e}; witness {witness}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn residual_row(t: &mut DelimitedTable, name: &str, r: &ResidualReport) {
    t.row([
        name.to_string(),
        r.lhs.value.to_string(),
        r.lhs.stderr.to_string(),
        r.rhs.value.to_string(),
        r.rhs.stderr.to_string(),
        r.residual.to_string(),
        r.stderr.to_string(),
        r.zscore.to_string(),
    ]);
}

/// Random sub-box of the periodic box, at least half a side long per axis.
fn random_window(model: &ModelParams, rng: &mut ChaCha8Rng) -> Result<Region, Failure> {
    let geom = model.geometry;
    let side = geom.side();
    let d = geom.dimension();
    let lo: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..side / 2.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(side / 4.0..side / 2.0)).collect();
    Ok(Region::new(geom, &lo, &hi)?)
}

fn gnz_check(r: &Resolved, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    let e = &r.config.estimate;
    let sample = TrajectorySample::merge(&samples(r)?)?;
    let geom = sample.model.geometry;
    let mc = get(&e.mc_points);
    let threshold = get(&e.z_threshold);
    let radii = e.gnz_radii.as_ref().map(|v| v.get_ref().clone()).unwrap_or_default();

    let mut results: Vec<(String, ResidualReport)> = Vec::new();
    results.push(("gnz:one".into(), gnz_residual(&sample, |_, _| 1.0, mc, r.seed.wrapping_add(1))?));
    for (i, &radius) in radii.iter().enumerate() {
        let rep = gnz_residual(
            &sample,
            |x: &SpacePoint, g: &FiniteConfiguration| {
                g.iter().filter(|y| *y != x && geom.distance(x, y) < radius).count() as f64
            },
            mc,
            r.seed.wrapping_add(2 + i as u64),
        )?;
        results.push((format!("gnz:neighbours<{radius}"), rep));
    }
    let observables = get(&e.invariance_observables);
    if observables > 0 {
        let ctx = GeneratorContext::new(
            sample.model.clone(),
            BirthIntegral::Midpoint {
                per_axis: get(&e.invariance_per_axis),
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        rng.set_stream(1);
        for i in 0..observables {
            let window = random_window(&sample.model, &mut rng)?;
            let g = QuasiObservable::random_product(window, rng.random_range(1..=3), &mut rng);
            let rep = invariance_residual(&sample, &g, &ctx, r.seed.wrapping_add(1000 + i as u64))?;
            results.push((format!("invariance:{i}"), rep));
        }
    }

    let mut t = DelimitedTable::new(
        r.delimiter,
        &["test", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "residual", "stderr", "zscore"],
    );
    for (name, rep) in &results {
        residual_row(&mut t, name, rep);
    }
    out.write(&table_name("gnz", r.delimiter), &t.finish())?;
    let zs: Vec<f64> = results.iter().map(|(_, rep)| rep.zscore).collect();
    let max_abs = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    report.set("result", "snapshots", sample.snapshots.len() as i64);
    report.set("result", "tests", results.len() as i64);
    report.set("result", "zscores", floats(&zs));
    report.set("result", "max_abs_zscore", max_abs);
    report.set("result", "z_threshold", threshold);
    if max_abs <= threshold {
        return Ok(());
    }
    let (name, worst) = results
        .iter()
        .max_by(|a, b| a.1.zscore.abs().total_cmp(&b.1.zscore.abs()))
        .expect("at least one test");
    let why = format!(
        "{name}: residual {} with stderr {} (z = {}) exceeds threshold {threshold}",
        worst.residual, worst.stderr, worst.zscore
    );
    Err(Failure::Assertion(why))
}

fn estimate(r: &Resolved, out: &mut Writer, report: &mut Report) -> Result<(), Failure> {
    let e = &r.config.estimate;
    let sample = TrajectorySample::merge(&samples(r)?)?;
    let bins = BinSpec::uniform(get(&e.r_min), get(&e.r_max), get(&e.bins))?;
    let k2 = estimate_k2(&sample, &bins)?;
    let mut t = DelimitedTable::new(r.delimiter, &["r", "r_lo", "r_hi", "k2", "stderr"]);
    for (i, w) in k2.bin_edges.windows(2).enumerate() {
        t.row([
            (0.5 * (w[0] + w[1])).to_string(),
            w[0].to_string(),
            w[1].to_string(),
            k2.values[i].to_string(),
            k2.stderr[i].to_string(),
        ]);
    }
    out.write(&table_name("k2", r.delimiter), &t.finish())?;
    estimate_value(report, "result", "density_ratio", k2.density.value, k2.density.stderr);
    report.set("result", "bins", k2.values.len() as i64);
    summarize(report, &sample);
    Ok(())
}
