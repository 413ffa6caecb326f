//! Monte Carlo sampling of cascade trees and of the discrete cascade model.
//!
//! Continuum trees: a vertex at `y` in `[0, x]` links to `K ~ Poisson(x - y)`
//! vertices placed uniformly in `(y, x]`. Trees are explored depth first
//! with an explicit stack of `(position, depth)` and only counters are kept.
//!
//! Discrete graphs: vertices `0..=m`, each pair `i < j` linked with
//! probability `c`. Out-links are drawn with geometric skips, and the
//! longest path from vertex 0 is relaxed in vertex order as links appear.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::grid::fmt_f64;
use crate::rng::{self, SeedStream, StreamRng};
use crate::stats::{mean_se, Estimate};

pub const DEFAULT_NODE_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("replicate {replicate} exceeded the node cap of {node_cap}")]
    NodeCap { replicate: u64, node_cap: u64 },
    #[error("{censored} of {replicates} replicates exceeded the node cap of {node_cap} (first: replicate {first})")]
    Censored {
        censored: usize,
        replicates: usize,
        first: u64,
        node_cap: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub size: u64,
    pub height: u64,
    pub terminal_count: u64,
}

fn check_x(x: f64) -> Result<(), McError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(McError::InvalidParameter(format!("x must be finite and non-negative, got {x}")))
    }
}

/// Samples one cascade tree on `[0, x]` rooted at the origin.
pub fn sample_tree(x: f64, seeds: SeedStream, node_cap: u64) -> Result<TreeStats, McError> {
    check_x(x)?;
    if node_cap < 1 {
        return Err(McError::InvalidParameter("node_cap must be at least 1".into()));
    }
    grow_tree(&mut seeds.rng(), x, node_cap, seeds.replicate_index)
}

fn grow_tree(rng: &mut StreamRng, x: f64, node_cap: u64, replicate: u64) -> Result<TreeStats, McError> {
    let mut stats = TreeStats {
        size: 0,
        height: 0,
        terminal_count: 0,
    };
    let mut stack: Vec<(f64, u64)> = vec![(0.0, 0)];
    while let Some((y, depth)) = stack.pop() {
        stats.size += 1;
        if stats.size > node_cap {
            return Err(McError::NodeCap { replicate, node_cap });
        }
        stats.height = stats.height.max(depth);
        let children = rng::poisson(rng, x - y);
        if children == 0 {
            stats.terminal_count += 1;
        }
        for _ in 0..children {
            stack.push((rng::uniform_left_open(rng, y, x), depth + 1));
        }
    }
    Ok(stats)
}

/// Independent trees for replicates `0..replicates` of `master_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSample {
    pub x: f64,
    pub master_seed: u64,
    pub node_cap: u64,
    pub trees: Vec<TreeStats>,
}

/// Samples `replicates` trees in parallel; any capped replicate aborts the
/// whole run, since dropping it would bias height and size statistics.
pub fn sample_trees(x: f64, replicates: usize, master_seed: u64, node_cap: u64) -> Result<TreeSample, McError> {
    check_x(x)?;
    if replicates < 1 {
        return Err(McError::InvalidParameter("replicates must be at least 1".into()));
    }
    if node_cap < 1 {
        return Err(McError::InvalidParameter("node_cap must be at least 1".into()));
    }
    let results = rng::map_replicates(master_seed, replicates, |s, rng| {
        grow_tree(rng, x, node_cap, s.replicate_index)
    });
    let mut trees = Vec::with_capacity(replicates);
    let mut censored = 0;
    let mut first = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trees.push(t),
            Err(_) => {
                censored += 1;
                first.get_or_insert(i as u64);
            }
        }
    }
    if let Some(first) = first {
        return Err(McError::Censored {
            censored,
            replicates,
            first,
            node_cap,
        });
    }
    Ok(TreeSample {
        x,
        master_seed,
        node_cap,
        trees,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfEntry {
    pub n: u64,
    pub prob: f64,
    pub std_error: f64,
}

/// Empirical `Prob(H ≤ n)` with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightCdf {
    pub x: f64,
    pub replicates: usize,
    pub entries: Vec<CdfEntry>,
}

impl HeightCdf {
    pub fn prob(&self, n: u64) -> f64 {
        self.entries
            .get(n as usize)
            .map_or(1.0, |e| e.prob)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,prob,std_error")?;
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.n, fmt_f64(e.prob), fmt_f64(e.std_error))?;
        }
        Ok(())
    }
}

impl TreeSample {
    pub fn sizes(&self) -> Vec<u64> {
        self.trees.iter().map(|t| t.size).collect()
    }

    pub fn height_cdf(&self) -> HeightCdf {
        let max_h = self.trees.iter().map(|t| t.height).max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max_h + 1];
        for t in &self.trees {
            counts[t.height as usize] += 1;
        }
        let total = self.trees.len() as f64;
        let mut cum = 0u64;
        let entries = counts
            .iter()
            .enumerate()
            .map(|(n, c)| {
                cum += c;
                let prob = cum as f64 / total;
                CdfEntry {
                    n: n as u64,
                    prob,
                    std_error: (prob * (1.0 - prob) / total).sqrt(),
                }
            })
            .collect();
        HeightCdf {
            x: self.x,
            replicates: self.trees.len(),
            entries,
        }
    }

    pub fn mean_height(&self) -> Estimate {
        mean_se(&self.trees.iter().map(|t| t.height as f64).collect::<Vec<_>>())
    }

    pub fn mean_size(&self) -> Estimate {
        mean_se(&self.trees.iter().map(|t| t.size as f64).collect::<Vec<_>>())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "replicate,size,height,terminals")?;
        for (i, t) in self.trees.iter().enumerate() {
            writeln!(out, "{i},{},{},{}", t.size, t.height, t.terminal_count)?;
        }
        Ok(())
    }
}

pub fn height_cdf(x: f64, replicates: usize, master_seed: u64, node_cap: u64) -> Result<HeightCdf, McError> {
    Ok(sample_trees(x, replicates, master_seed, node_cap)?.height_cdf())
}

pub fn size_sample(x: f64, replicates: usize, master_seed: u64, node_cap: u64) -> Result<Vec<u64>, McError> {
    Ok(sample_trees(x, replicates, master_seed, node_cap)?.sizes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteGraphStats {
    pub m: u64,
    pub c: f64,
    pub reach_size: u64,
    pub longest_from_0: u64,
    pub no_out_fraction: f64,
    pub no_in_fraction: f64,
    pub neutral_fraction: f64,
}

fn check_discrete(m: u64, c: f64) -> Result<(), McError> {
    if m < 1 {
        return Err(McError::InvalidParameter("m must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(McError::InvalidParameter(format!("c must lie in [0, 1], got {c}")));
    }
    Ok(())
}

/// One discrete cascade graph on vertices `0..=m`.
pub fn sample_discrete(m: u64, c: f64, seeds: SeedStream) -> Result<DiscreteGraphStats, McError> {
    check_discrete(m, c)?;
    Ok(grow_discrete(&mut seeds.rng(), m, c))
}

fn grow_discrete(rng: &mut StreamRng, m: u64, c: f64) -> DiscreteGraphStats {
    let len = m as usize + 1;
    // longest distance from 0, or -1 if unreachable
    let mut dist = vec![-1i64; len];
    let mut has_in = vec![false; len];
    let mut no_out = 0u64;
    let mut neutral = 0u64;
    dist[0] = 0;
    for i in 0..len {
        let mut has_out = false;
        let mut j = i as u64;
        loop {
            let skip = rng::geometric_failures(rng, c);
            j = match j.checked_add(skip).and_then(|v| v.checked_add(1)) {
                Some(next) if next <= m => next,
                _ => break,
            };
            has_out = true;
            let j = j as usize;
            has_in[j] = true;
            if dist[i] >= 0 {
                dist[j] = dist[j].max(dist[i] + 1);
            }
        }
        if !has_out {
            no_out += 1;
            if !has_in[i] {
                neutral += 1;
            }
        }
    }
    let total = len as f64;
    DiscreteGraphStats {
        m,
        c,
        reach_size: dist.iter().filter(|&&d| d >= 0).count() as u64,
        longest_from_0: dist.iter().copied().max().unwrap_or(0).max(0) as u64,
        no_out_fraction: no_out as f64 / total,
        no_in_fraction: has_in.iter().filter(|&&b| !b).count() as f64 / total,
        neutral_fraction: neutral as f64 / total,
    }
}

/// Fraction of vertices without out-links in the continuum limit `cm = x`.
pub fn top_predator_fraction(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Fraction of vertices with neither in- nor out-links in the limit `cm = x`.
pub fn neutral_fraction_limit(x: f64) -> f64 {
    (-x).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSummary {
    pub m: u64,
    pub c: f64,
    pub replicates: usize,
    pub master_seed: u64,
    pub reach_size: Estimate,
    pub longest_from_0: Estimate,
    pub no_out_fraction: Estimate,
    pub no_in_fraction: Estimate,
    pub neutral_fraction: Estimate,
    /// `(1 - e^{-x})/x` at `x = cm`.
    pub top_predator_limit: f64,
    /// `e^{-x}` at `x = cm`.
    pub neutral_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEnsemble {
    pub graphs: Vec<DiscreteGraphStats>,
    pub summary: DiscreteSummary,
}

impl DiscreteEnsemble {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "replicate,reach_size,longest_from_0,no_out_fraction,no_in_fraction,neutral_fraction"
        )?;
        for (i, g) in self.graphs.iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{},{},{}",
                g.reach_size,
                g.longest_from_0,
                fmt_f64(g.no_out_fraction),
                fmt_f64(g.no_in_fraction),
                fmt_f64(g.neutral_fraction)
            )?;
        }
        Ok(())
    }
}

pub fn sample_discrete_ensemble(
    m: u64,
    c: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<DiscreteEnsemble, McError> {
    check_discrete(m, c)?;
    if replicates < 1 {
        return Err(McError::InvalidParameter("replicates must be at least 1".into()));
    }
    let graphs = rng::map_replicates(master_seed, replicates, |_, rng| grow_discrete(rng, m, c));
    let column = |f: fn(&DiscreteGraphStats) -> f64| mean_se(&graphs.iter().map(f).collect::<Vec<_>>());
    let x = c * m as f64;
    let summary = DiscreteSummary {
        m,
        c,
        replicates,
        master_seed,
        reach_size: column(|g| g.reach_size as f64),
        longest_from_0: column(|g| g.longest_from_0 as f64),
        no_out_fraction: column(|g| g.no_out_fraction),
        no_in_fraction: column(|g| g.no_in_fraction),
        neutral_fraction: column(|g| g.neutral_fraction),
        top_predator_limit: top_predator_fraction(x),
        neutral_limit: neutral_fraction_limit(x),
    };
    Ok(DiscreteEnsemble { graphs, summary })
}

/// Mean neutral fraction over `replicates` graphs.
pub fn neutral_fraction_check(m: u64, c: f64, replicates: usize, master_seed: u64) -> Result<f64, McError> {
    Ok(sample_discrete_ensemble(m, c, replicates, master_seed)?
        .summary
        .neutral_fraction
        .mean)
}
