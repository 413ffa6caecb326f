use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cascade_core::manifest::Manifest;
use cascade_core::mc;
use cascade_core::recurrence::{run, RecurrenceConfig};
use cascade_core::rng::with_threads;
use cascade_core::series::{front_estimate_from_series, height_cdf_series};
use cascade_core::size_stats::{moments_from_sizes, scaled_from_sizes, MIN_SCALED_X};
use cascade_core::stats::Estimate;
use cascade_core::wave::{
    dispersion_roots, extract_profile_in, fit_velocity, selected_velocity, tail_fit_in, wave_equation_residual,
    FrontTrace, TailSide,
};
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, DiscreteArgs, McArgs, RecurArgs, SeriesArgs, SizeArgs, WaveArgs};

/// Cross-flag validation failure; reported with the usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Writes output files, each followed by its manifest.
struct Sink<'a> {
    dir: &'a Path,
    manifest: Manifest,
    written: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    fn new(dir: &'a Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            manifest,
            written: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write(&mut out)
            .and_then(|_| out.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        let mut manifest = self.manifest.clone();
        manifest.add_output(&path);
        let manifest_path = manifest.write_beside(&path)?;
        self.written.push(path);
        self.written.push(manifest_path);
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.emit(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)
        })
    }
}

fn manifest_for<T: Serialize>(command: &str, args: &T, seed: Option<u64>) -> Manifest {
    let m = Manifest::new(command, serde_json::to_value(args).expect("arguments serialize"));
    match seed {
        Some(s) => m.with_seed(s),
        None => m,
    }
}

pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    let threads = cli.threads.map(usize::from);
    let dir = cli.out_dir.as_path();
    match &cli.command {
        Command::Recur(a) => recur(dir, a),
        Command::Wave(a) => wave(dir, a),
        Command::Mc(a) => with_threads(threads, || monte_carlo(dir, a)),
        Command::Discrete(a) => with_threads(threads, || discrete(dir, a)),
        Command::Size(a) => with_threads(threads, || size(dir, a)),
        Command::Series(a) => series(dir, a),
    }
}

fn recur(dir: &Path, a: &RecurArgs) -> Result<Vec<PathBuf>> {
    let n_max = a.n_max as usize;
    let store: BTreeSet<usize> = a.store.iter().map(|&n| n as usize).collect();
    if let Some(bad) = store.iter().find(|&&n| n > n_max) {
        return Err(usage(format!("--store entry {bad} exceeds --n-max {n_max}")));
    }
    let mut config = RecurrenceConfig::new(n_max).with_h(a.h).storing(store.iter().copied());
    config.front_level = a.front_level;
    config.margin = a.margin;
    let r = run(&config)?;
    let heights = a
        .mean_height_at
        .iter()
        .map(|&x| Ok((x, r.mean_height(x)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = manifest_for("recur", a, None);
    manifest.parameters["x_max"] = json!(r.spec.x_max());
    let mut sink = Sink::new(dir, manifest)?;
    sink.emit("fronts.csv", |out| r.write_fronts_csv(out))?;
    for (n, p) in &r.profiles {
        sink.emit(&format!("profile_n{n}.csv"), |out| p.write_csv(out, ("x", "value")))?;
    }
    if !heights.is_empty() {
        sink.emit("mean_height.csv", |out| {
            cascade_core::grid::write_xy_csv(out, ("x", "mean_height"), heights.iter().copied())
        })?;
    }
    Ok(sink.written)
}

#[derive(Serialize)]
struct TailReport {
    n: u64,
    front: f64,
    level: f64,
    velocity: f64,
    l: f64,
    r: f64,
    l_tail_bound: f64,
    r_tail_bound: f64,
    ahead: cascade_core::wave::TailFit,
    behind: cascade_core::wave::TailFit,
    ahead_amplitude: f64,
    predicted_ahead_amplitude: f64,
    wave_equation_residual: Option<f64>,
}

fn wave(dir: &Path, a: &WaveArgs) -> Result<Vec<PathBuf>> {
    let n_max = a.n_max;
    let window = a.fit_window.map_or(((n_max / 10).max(1), n_max), |w| (w.lo, w.hi));
    if window.1 > n_max {
        return Err(usage(format!("--fit-window upper end {} exceeds --n-max {n_max}", window.1)));
    }
    if !a.no_log && window.0 == 0 {
        return Err(usage("--fit-window must start at n >= 1 when fitting the log term"));
    }
    let profile_n = a.profile_n.unwrap_or(n_max);
    if !(1..=n_max).contains(&profile_n) {
        return Err(usage(format!("--profile-n must lie in [1, {n_max}]")));
    }
    let pn = profile_n as usize;
    let mut config = RecurrenceConfig::new(n_max as usize).with_h(a.h).storing([pn]);
    config.front_level = a.front_level;
    let r = run(&config)?;

    let trace = FrontTrace::from_run(&r);
    let fit = fit_velocity(&trace, (window.0 as usize, window.1 as usize), !a.no_log)?;
    let (v_star, a_star) = selected_velocity();
    let query = a.v.map(dispersion_roots).transpose()?;
    let profile = extract_profile_in(&r.profiles[&pn], a.front_level, (a.profile_window.lo, a.profile_window.hi))?;
    let ahead = tail_fit_in(&profile, TailSide::Ahead, (a.ahead_window.lo, a.ahead_window.hi))?;
    let behind = tail_fit_in(&profile, TailSide::Behind, (a.behind_window.lo, a.behind_window.hi))?;
    let velocity = r.fronts[pn] - r.fronts[pn - 1];
    let tails = TailReport {
        n: profile_n,
        front: profile.front,
        level: profile.level,
        velocity,
        l: profile.l,
        r: profile.r,
        l_tail_bound: profile.l_tail_bound,
        r_tail_bound: profile.r_tail_bound,
        ahead_amplitude: ahead.intercept.exp(),
        predicted_ahead_amplitude: (profile.r - profile.l - velocity).exp(),
        ahead,
        behind,
        // undefined when the window cuts off too much of the left tail
        wave_equation_residual: wave_equation_residual(&profile, velocity).ok(),
    };

    let mut sink = Sink::new(dir, manifest_for("wave", a, None))?;
    sink.emit_json("velocity_fit.json", &fit)?;
    sink.emit_json(
        "dispersion.json",
        &json!({
            "selected": {"v": v_star, "a": a_star},
            "query": query,
        }),
    )?;
    sink.emit("profile.csv", |out| profile.write_csv(out))?;
    sink.emit_json("tails.json", &tails)?;
    Ok(sink.written)
}

#[derive(Serialize)]
struct TreeSummary {
    x: f64,
    replicates: u64,
    seed: u64,
    node_cap: u64,
    mean_size: Estimate,
    expected_mean_size: f64,
    mean_height: Estimate,
}

fn monte_carlo(dir: &Path, a: &McArgs) -> Result<Vec<PathBuf>> {
    let sample = mc::sample_trees(a.x, a.replicates as usize, a.seed, a.node_cap)?;
    let summary = TreeSummary {
        x: a.x,
        replicates: a.replicates,
        seed: a.seed,
        node_cap: a.node_cap,
        mean_size: sample.mean_size(),
        expected_mean_size: a.x.exp(),
        mean_height: sample.mean_height(),
    };
    let mut sink = Sink::new(dir, manifest_for("mc", a, Some(a.seed)))?;
    if !a.no_samples {
        sink.emit("trees.csv", |out| sample.write_csv(out))?;
    }
    sink.emit("height_cdf.csv", |out| sample.height_cdf().write_csv(out))?;
    sink.emit_json("mc_summary.json", &summary)?;
    Ok(sink.written)
}

fn discrete(dir: &Path, a: &DiscreteArgs) -> Result<Vec<PathBuf>> {
    let ensemble = mc::sample_discrete_ensemble(a.m, a.c, a.replicates as usize, a.seed)?;
    let mut sink = Sink::new(dir, manifest_for("discrete", a, Some(a.seed)))?;
    if !a.no_samples {
        sink.emit("discrete_graphs.csv", |out| ensemble.write_csv(out))?;
    }
    sink.emit_json("discrete_summary.json", &ensemble.summary)?;
    Ok(sink.written)
}

fn size(dir: &Path, a: &SizeArgs) -> Result<Vec<PathBuf>> {
    let sizes = mc::size_sample(a.x, a.replicates as usize, a.seed, a.node_cap)?;
    let moments = moments_from_sizes(a.x, &sizes, a.p_max)?;
    let scaled = if a.x >= MIN_SCALED_X {
        Some(scaled_from_sizes(a.x, &sizes, a.bins as usize, a.sigma_max)?)
    } else {
        None
    };
    let mut sink = Sink::new(dir, manifest_for("size", a, Some(a.seed)))?;
    sink.emit_json(
        "size_moments.json",
        &json!({"x": a.x, "replicates": a.replicates, "seed": a.seed, "moments": moments}),
    )?;
    if let Some(s) = scaled {
        sink.emit_json(
            "scaled_moments.json",
            &json!({"x": s.x, "replicates": s.replicates, "variance": s.variance, "moments": s.moments}),
        )?;
        sink.emit("sigma_histogram.csv", |out| s.histogram.write_csv(out))?;
    }
    Ok(sink.written)
}

fn series(dir: &Path, a: &SeriesArgs) -> Result<Vec<PathBuf>> {
    let n = a.n as usize;
    let order = a.order.map_or(cascade_core::series::default_order(n), |o| o as usize);
    let p = height_cdf_series(n, order)?;
    let records = p.to_records();
    let mut sink = Sink::new(dir, manifest_for("series", a, None))?;
    sink.emit(&format!("series_n{n}.csv"), |out| {
        writeln!(out, "k,numerator,denominator")?;
        for r in &records {
            writeln!(out, "{},{},{}", r.k, r.numerator, r.denominator)?;
        }
        Ok(())
    })?;
    sink.emit_json(
        &format!("series_n{n}.json"),
        &json!({
            "n": n,
            "order": order,
            "vanishing_prefix": p.vanishing_prefix(),
            "front_estimate": front_estimate_from_series(n as u32),
            "coefficients": records,
        }),
    )?;
    Ok(sink.written)
}
