//! Seeded simulation of the lifted walk and moment checks of the central
//! limit theorems.
//!
//! Every walker owns a ChaCha8 stream keyed by `(seed, walker index)`, and
//! reductions run sequentially in walker order, so results do not depend on
//! the number of worker threads. Darts are sampled by inverting the
//! cumulative probabilities in dart-id order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::girsanov::interpolation_family;
use crate::harmonic::{albanese, flow_voltage_sum, modified_harmonic_realization, AlbaneseMetric, Realization};
use crate::lattice::{CrystalLattice, TransitionKernel, VertexId};
use crate::stationary::{stationary_measure, StationaryMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Original,
    Changed,
    Interpolated(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walkers: usize,
    pub steps: usize,
    pub seed: u64,
    pub kernel_choice: KernelChoice,
    /// Times in `[0, 1]`, sorted, at which the rescaled path is evaluated.
    pub time_grid: Vec<f64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl WalkConfig {
    pub fn new(walkers: usize, steps: usize, seed: u64, kernel_choice: KernelChoice) -> Self {
        WalkConfig {
            walkers,
            steps,
            seed,
            kernel_choice,
            time_grid: vec![1.0],
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walkers == 0 {
            return Err(Error::Config("walkers must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if self.time_grid.is_empty() {
            return Err(Error::Config("time grid is empty".into()));
        }
        if self.time_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("time grid must lie in [0, 1]".into()));
        }
        if self.time_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("time grid must be sorted".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if let KernelChoice::Interpolated(eps) = self.kernel_choice {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!("epsilon {eps} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// First and second moments of the rescaled walk at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltStats {
    pub time: f64,
    pub empirical_mean: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub stderr_mean: Vec<f64>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub sample_count: usize,
}

impl CltStats {
    pub fn from_samples(time: f64, samples: &[Vec<f64>]) -> Self {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut cov = vec![vec![0.0; d]; d];
        let mut m3 = vec![0.0; d];
        let mut m4 = vec![0.0; d];
        for s in samples {
            for i in 0..d {
                let di = s[i] - mean[i];
                m3[i] += di * di * di;
                m4[i] += di * di * di * di;
                for j in 0..d {
                    cov[i][j] += di * (s[j] - mean[j]);
                }
            }
        }
        let denom = if n > 1 { nf - 1.0 } else { 1.0 };
        cov.iter_mut().flatten().for_each(|c| *c /= denom);
        let stderr_mean = (0..d).map(|i| (cov[i][i] / nf).sqrt()).collect();
        let skewness = (0..d)
            .map(|i| {
                let var = cov[i][i] * denom / nf;
                m3[i] / nf / var.powf(1.5)
            })
            .collect();
        let excess_kurtosis = (0..d)
            .map(|i| {
                let var = cov[i][i] * denom / nf;
                m4[i] / nf / (var * var) - 3.0
            })
            .collect();
        CltStats {
            time,
            empirical_mean: mean,
            empirical_cov: cov,
            stderr_mean,
            skewness,
            excess_kurtosis,
            sample_count: n,
        }
    }

    /// Largest entrywise distance of the covariance from `scale * I`.
    pub fn cov_deviation(&self, scale: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.empirical_cov.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let target = if i == j { scale } else { 0.0 };
                worst = worst.max((c - target).abs());
            }
        }
        worst
    }

    /// Largest `|mean_i - target_i| / stderr_i`.
    pub fn mean_z_score(&self, target: &[f64]) -> f64 {
        self.empirical_mean
            .iter()
            .zip(target)
            .zip(&self.stderr_mean)
            .map(|((m, t), s)| (m - t).abs() / s)
            .fold(0.0, f64::max)
    }
}

/// Rescaled piecewise-linear path at time `t`:
/// `(xi_[nt] + (nt - [nt]) (xi_[nt]+1 - xi_[nt]) - nt drift) / sqrt(n)`.
/// `xi` holds the positions `xi_0..xi_n` (or more).
pub fn scaled_path(xi: &[Vec<f64>], n: usize, t: f64, drift: Option<&[f64]>) -> Vec<f64> {
    let nt = n as f64 * t;
    let k = nt.floor() as usize;
    let frac = nt - k as f64;
    let base = &xi[k];
    let scale = (n as f64).sqrt();
    (0..base.len())
        .map(|i| {
            let mut v = base[i];
            if frac > 0.0 {
                v += frac * (xi[k + 1][i] - base[i]);
            }
            if let Some(r) = drift {
                v -= nt * r[i];
            }
            v / scale
        })
        .collect()
}

/// Sampling tables for the quotient walk, flattened for the inner loop.
struct Sampler {
    rank: usize,
    // per vertex: range into `entries`
    rows: Vec<(usize, usize)>,
    // (cumulative probability, dart, terminus)
    entries: Vec<(f64, usize, usize)>,
    // voltages by dart, stride `rank`
    voltages: Vec<i64>,
}

impl Sampler {
    fn new(lattice: &CrystalLattice, kernel: &TransitionKernel) -> Self {
        let graph = lattice.graph();
        let mut rows = Vec::with_capacity(graph.vertex_count());
        let mut entries = Vec::with_capacity(graph.dart_count());
        for x in graph.vertices() {
            let start = entries.len();
            let mut acc = 0.0;
            for &e in graph.outgoing(x) {
                acc += kernel.prob(e);
                entries.push((acc, e.index(), graph.terminus(e).index()));
            }
            rows.push((start, entries.len()));
        }
        let voltages = graph.darts().iter().flat_map(|d| lattice.voltage(d.id).to_vec()).collect();
        Sampler {
            rank: lattice.rank(),
            rows,
            entries,
            voltages,
        }
    }

    /// Dart chosen at `x` for a uniform draw `u`, with its terminus.
    #[inline]
    fn pick(&self, x: usize, u: f64) -> (usize, usize) {
        let (a, b) = self.rows[x];
        let row = &self.entries[a..b];
        for &(c, e, t) in row {
            if u < c {
                return (e, t);
            }
        }
        let (_, e, t) = row[row.len() - 1];
        (e, t)
    }

    /// Advances `(x, cell)` by `steps` steps.
    #[inline]
    fn walk(&self, rng: &mut ChaCha8Rng, x: &mut usize, cell: &mut [i64], steps: usize) {
        let d = self.rank;
        for _ in 0..steps {
            let (e, t) = self.pick(*x, rng.random::<f64>());
            let v = &self.voltages[e * d..e * d + d];
            for (c, dv) in cell.iter_mut().zip(v) {
                *c += dv;
            }
            *x = t;
        }
    }
}

fn walker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Raw (uncentered, unscaled) interpolated positions of every walker at
/// every grid time, in generator coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub steps: usize,
    pub rank: usize,
    pub time_grid: Vec<f64>,
    /// `values[(w * grid_len + k) * rank + i]`.
    pub values: Vec<f64>,
}

impl Trajectories {
    pub fn walkers(&self) -> usize {
        self.values.len() / (self.rank * self.time_grid.len())
    }

    pub fn raw(&self, walker: usize, k: usize) -> &[f64] {
        let at = (walker * self.time_grid.len() + k) * self.rank;
        &self.values[at..at + self.rank]
    }

    /// Rescaled, optionally centered position of one walker.
    pub fn scaled(&self, walker: usize, k: usize, drift: Option<&[f64]>) -> Vec<f64> {
        let nt = self.steps as f64 * self.time_grid[k];
        let scale = (self.steps as f64).sqrt();
        self.raw(walker, k)
            .iter()
            .enumerate()
            .map(|(i, v)| (v - drift.map_or(0.0, |r| nt * r[i])) / scale)
            .collect()
    }

    /// Statistics at grid point `k`, in the orthonormal frame of `metric`.
    pub fn stats(&self, k: usize, drift: Option<&[f64]>, metric: &AlbaneseMetric) -> Result<CltStats> {
        let samples = (0..self.walkers())
            .map(|w| metric.to_orthonormal_coords(&self.scaled(w, k, drift)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CltStats::from_samples(self.time_grid[k], &samples))
    }

    /// Mean of `xi_n / n` over walkers, generator coordinates. Needs `1.0`
    /// on the time grid.
    pub fn drift(&self) -> Result<Vec<f64>> {
        let k = self
            .time_grid
            .iter()
            .position(|&t| t == 1.0)
            .ok_or_else(|| Error::Config("time grid lacks t = 1".into()))?;
        let mut acc = vec![0.0; self.rank];
        for w in 0..self.walkers() {
            for (a, v) in acc.iter_mut().zip(self.raw(w, k)) {
                *a += v;
            }
        }
        let denom = (self.walkers() * self.steps) as f64;
        Ok(acc.into_iter().map(|a| a / denom).collect())
    }

    /// One CSV row per walker with the rescaled coordinates at time `t = 1`
    /// in the given frame.
    pub fn endpoint_csv(&self, drift: Option<&[f64]>, metric: &AlbaneseMetric) -> Result<String> {
        use std::fmt::Write as _;
        let k = self.time_grid.len() - 1;
        let mut out = String::from("walker");
        for i in 0..self.rank {
            let _ = write!(out, ",x{}", i + 1);
        }
        out.push('\n');
        for w in 0..self.walkers() {
            let c = metric.to_orthonormal_coords(&self.scaled(w, k, drift))?;
            let _ = write!(out, "{w}");
            for v in c {
                let _ = write!(out, ",{v:.17e}");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Runs `config.walkers` independent walks of `config.steps` steps from the
/// realization's base vertex in cell zero.
pub fn simulate(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    realization: &Realization,
    config: &WalkConfig,
) -> Result<Trajectories> {
    config.validate()?;
    let sampler = Sampler::new(lattice, kernel);
    let n = config.steps;
    let d = lattice.rank();
    // step indices whose positions are needed
    let mut needed: Vec<usize> = Vec::new();
    for &t in &config.time_grid {
        let nt = n as f64 * t;
        let k = nt.floor() as usize;
        needed.push(k);
        if nt > k as f64 {
            needed.push(k + 1);
        }
    }
    needed.sort_unstable();
    needed.dedup();
    let grid_len = config.time_grid.len();

    let run = |w: usize| -> Vec<f64> {
        let mut rng = walker_rng(config.seed, w);
        let mut vertex = realization.base.index();
        let mut cell = vec![0i64; d];
        let mut recorded: Vec<Vec<f64>> = Vec::with_capacity(needed.len());
        let mut at = 0;
        for &step in &needed {
            sampler.walk(&mut rng, &mut vertex, &mut cell, step - at);
            at = step;
            recorded.push(
                realization.position[vertex]
                    .iter()
                    .zip(&cell)
                    .map(|(p, c)| p + *c as f64)
                    .collect(),
            );
        }
        let mut out = Vec::with_capacity(grid_len * d);
        for &t in &config.time_grid {
            let nt = n as f64 * t;
            let k = nt.floor() as usize;
            let frac = nt - k as f64;
            let a = &recorded[needed.binary_search(&k).expect("recorded")];
            if frac > 0.0 {
                let b = &recorded[needed.binary_search(&(k + 1)).expect("recorded")];
                out.extend(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)));
            } else {
                out.extend_from_slice(a);
            }
        }
        out
    };

    let collect = || -> Vec<f64> {
        (0..config.walkers)
            .into_par_iter()
            .with_min_len(64)
            .map(run)
            .collect::<Vec<_>>()
            .concat()
    };
    let values = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(collect),
        None => collect(),
    };
    Ok(Trajectories {
        steps: n,
        rank: d,
        time_grid: config.time_grid.clone(),
        values,
    })
}

/// Asymptotic direction of `kernel` computed from its stationary measure.
pub fn asymptotic_direction(lattice: &CrystalLattice, kernel: &TransitionKernel) -> Result<Vec<f64>> {
    let m = stationary_measure(lattice.graph(), kernel)?;
    Ok(flow_voltage_sum(lattice, &m.edge_flow(lattice.graph(), kernel)))
}

/// Drift subtracted for a kernel choice: the asymptotic direction for the
/// original kernel, nothing otherwise.
pub fn centering(lattice: &CrystalLattice, kernel: &TransitionKernel, choice: KernelChoice) -> Result<Option<Vec<f64>>> {
    match choice {
        KernelChoice::Original => asymptotic_direction(lattice, kernel).map(Some),
        KernelChoice::Changed | KernelChoice::Interpolated(_) => Ok(None),
    }
}

/// Statistics of the rescaled endpoint (`t = 1`) in the orthonormal frame of `metric`.
pub fn simulate_endpoint_stats(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    realization: &Realization,
    metric: &AlbaneseMetric,
    config: &WalkConfig,
) -> Result<CltStats> {
    let mut cfg = config.clone();
    cfg.time_grid = vec![1.0];
    let traj = simulate(lattice, kernel, realization, &cfg)?;
    let drift = centering(lattice, kernel, cfg.kernel_choice)?;
    traj.stats(0, drift.as_deref(), metric)
}

/// Statistics at every time on the configured grid.
pub fn simulate_path_stats(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    realization: &Realization,
    metric: &AlbaneseMetric,
    config: &WalkConfig,
) -> Result<Vec<CltStats>> {
    let traj = simulate(lattice, kernel, realization, config)?;
    let drift = centering(lattice, kernel, config.kernel_choice)?;
    (0..traj.time_grid.len())
        .map(|k| traj.stats(k, drift.as_deref(), metric))
        .collect()
}

/// Average of `xi_n / n` over walkers, in generator coordinates.
pub fn drift_estimate(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    realization: &Realization,
    config: &WalkConfig,
) -> Result<Vec<f64>> {
    let mut cfg = config.clone();
    cfg.time_grid = vec![1.0];
    simulate(lattice, kernel, realization, &cfg)?.drift()
}

/// Outcome of the small-drift experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clt2Report {
    pub epsilon: f64,
    pub stats: CltStats,
    /// Asymptotic direction of the original kernel in the frame of the
    /// reversible part's metric.
    pub target_mean: Vec<f64>,
}

/// Simulates `p_eps` with `eps = n^{-1/2}` using its own harmonic
/// realization, and reports the rescaled endpoint in the frame of the
/// metric of the reversible part `p_0`.
pub fn clt2_experiment(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    steps: usize,
    walkers: usize,
    seed: u64,
) -> Result<Clt2Report> {
    if steps == 0 || walkers == 0 {
        return Err(Error::Config("steps and walkers must be positive".into()));
    }
    let graph = lattice.graph();
    let base = VertexId(0);
    let epsilon = 1.0 / (steps as f64).sqrt();
    let p_eps = interpolation_family(graph, kernel, m, epsilon)?;
    let m_eps = stationary_measure(graph, &p_eps)?;
    let r_eps = modified_harmonic_realization(lattice, &p_eps, &m_eps, base)?;
    let p_zero = interpolation_family(graph, kernel, m, 0.0)?;
    let m_zero = stationary_measure(graph, &p_zero)?;
    let r_zero = modified_harmonic_realization(lattice, &p_zero, &m_zero, base)?;
    let metric_zero = albanese(lattice, &p_zero, &m_zero, &r_zero)?;
    let config = WalkConfig::new(walkers, steps, seed, KernelChoice::Interpolated(epsilon));
    let stats = simulate_endpoint_stats(lattice, &p_eps, &r_eps, &metric_zero, &config)?;
    let rho = flow_voltage_sum(lattice, &m.edge_flow(graph, kernel));
    let target_mean = metric_zero.to_orthonormal_coords(&rho)?;
    Ok(Clt2Report {
        epsilon,
        stats,
        target_mean,
    })
}

/// `(1/n) sum f(e_i)` along one quotient trajectory from the first vertex.
pub fn ergodic_edge_average(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    f: &[f64],
    n: usize,
    seed: u64,
) -> Result<f64> {
    let graph = lattice.graph();
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if f.len() != graph.dart_count() {
        return Err(Error::Dimension {
            expected: graph.dart_count(),
            found: f.len(),
        });
    }
    let sampler = Sampler::new(lattice, kernel);
    let mut rng = walker_rng(seed, 0);
    let mut x = 0;
    let mut total = 0.0;
    for _ in 0..n {
        let (e, t) = sampler.pick(x, rng.random::<f64>());
        total += f[e];
        x = t;
    }
    Ok(total / n as f64)
}
