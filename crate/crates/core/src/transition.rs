//! Exact n-step transition probabilities on the covering lattice.
//!
//! Forward dynamic programming over a sparse table keyed by
//! `(vertex, cell)`. Probabilities are never pruned unless explicitly asked
//! for, so ratio comparisons see the whole support.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::girsanov::ChangedKernel;
use crate::harmonic::Realization;
use crate::lattice::{CrystalLattice, LatticeState, TransitionKernel};

pub const DEFAULT_SUPPORT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    /// Maximum number of `(vertex, cell)` entries.
    pub max_support: usize,
    /// Drop entries below this mass. Exploratory use only; `None` keeps all.
    pub prune_below: Option<f64>,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            max_support: DEFAULT_SUPPORT_BUDGET,
            prune_below: None,
        }
    }
}

/// `p(n, start, .)` as a sparse table.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistribution {
    pub n: usize,
    pub mass: BTreeMap<LatticeState, f64>,
}

impl CellDistribution {
    pub fn point(start: LatticeState) -> Self {
        CellDistribution {
            n: 0,
            mass: BTreeMap::from([(start, 1.0)]),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn get(&self, state: &LatticeState) -> f64 {
        self.mass.get(state).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.mass.len()
    }

    /// One more step of the walk driven by `kernel`.
    pub fn advance(&self, lattice: &CrystalLattice, kernel: &TransitionKernel, opts: &DpOptions) -> Result<Self> {
        let graph = lattice.graph();
        let mut next: BTreeMap<LatticeState, f64> = BTreeMap::new();
        for (state, &w) in &self.mass {
            for &e in graph.outgoing(state.vertex) {
                let cell = state.cell.iter().zip(lattice.voltage(e)).map(|(c, v)| c + v).collect();
                let key = LatticeState {
                    vertex: graph.terminus(e),
                    cell,
                };
                *next.entry(key).or_insert(0.0) += w * kernel.prob(e);
            }
            if next.len() > opts.max_support {
                return Err(Error::SupportBudget(opts.max_support));
            }
        }
        if let Some(floor) = opts.prune_below {
            next.retain(|_, w| *w >= floor);
        }
        Ok(CellDistribution {
            n: self.n + 1,
            mass: next,
        })
    }
}

/// Distribution after `n` steps from `start`.
pub fn n_step(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    start: &LatticeState,
    n: usize,
) -> Result<CellDistribution> {
    n_step_with(lattice, kernel, start, n, &DpOptions::default())
}

pub fn n_step_with(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    start: &LatticeState,
    n: usize,
    opts: &DpOptions,
) -> Result<CellDistribution> {
    if start.cell.len() != lattice.rank() {
        return Err(Error::Dimension {
            expected: lattice.rank(),
            found: start.cell.len(),
        });
    }
    let mut dist = CellDistribution::point(start.clone());
    for _ in 0..n {
        dist = dist.advance(lattice, kernel, opts)?;
    }
    Ok(dist)
}

/// What the changed n-step kernel is divided by before taking extremes.
#[derive(Debug, Clone, Copy)]
pub enum Normalization<'a> {
    /// `p(n, x, y) exp(n M_p)`.
    Rate,
    /// `p(n, x, y) exp(lambda*[Phi(y) - Phi(x)]) F*^{-n}`; bouquets only,
    /// `lambda` in generator-dual coordinates.
    Explicit {
        lambda: &'a [f64],
        f_star: f64,
        realization: &'a Realization,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub support_size: usize,
}

/// Extremes over `y` of `changed(n, x, y) / normalizer(n, x, y)` for
/// `n = 1..=n_max`.
pub fn ratio_table(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    changed: &ChangedKernel,
    start: &LatticeState,
    n_max: usize,
    normalization: Normalization<'_>,
) -> Result<Vec<RatioRow>> {
    if let Normalization::Explicit { .. } = normalization {
        if lattice.graph().vertex_count() != 1 {
            return Err(Error::NotBouquet(lattice.graph().vertex_count()));
        }
    }
    let opts = DpOptions::default();
    let mut orig = n_step(lattice, kernel, start, 0)?;
    let mut tilted = orig.clone();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        orig = orig.advance(lattice, kernel, &opts)?;
        tilted = tilted.advance(lattice, &changed.kernel, &opts)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (y, &p) in &orig.mass {
            let denom = match normalization {
                Normalization::Rate => p * (n as f64 * changed.m_p).exp(),
                Normalization::Explicit {
                    lambda,
                    f_star,
                    realization,
                } => explicit_factor(realization, lambda, f_star, n, start, y) * p,
            };
            let r = tilted.get(y) / denom;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if orig.mass.is_empty() {
            return Err(Error::Config(format!("empty support at n = {n}")));
        }
        rows.push(RatioRow {
            n,
            min_ratio: lo,
            max_ratio: hi,
            support_size: orig.support_size(),
        });
    }
    Ok(rows)
}

/// Extremes of the rate-normalized ratio at step `n`.
pub fn rate_ratio_extremes(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    changed: &ChangedKernel,
    start: &LatticeState,
    n: usize,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Config("ratio needs n >= 1".into()));
    }
    let rows = ratio_table(lattice, kernel, changed, start, n, Normalization::Rate)?;
    let last = rows.last().expect("n >= 1");
    Ok((last.min_ratio, last.max_ratio))
}

fn explicit_factor(
    realization: &Realization,
    lambda: &[f64],
    f_star: f64,
    n: usize,
    x: &LatticeState,
    y: &LatticeState,
) -> f64 {
    let px = realization.locate(x);
    let py = realization.locate(y);
    let pairing: f64 = lambda.iter().zip(py.iter().zip(&px)).map(|(l, (b, a))| l * (b - a)).sum();
    pairing.exp() * f_star.powi(-(n as i32))
}

/// Right-hand side of the explicit bouquet measure-change formula:
/// `p(n, x, y) exp(lambda*[Phi(y) - Phi(x)]) F*^{-n}`.
pub fn bouquet_explicit(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    lambda: &[f64],
    f_star: f64,
    n: usize,
    x: &LatticeState,
    y: &LatticeState,
    realization: &Realization,
) -> Result<f64> {
    if lattice.graph().vertex_count() != 1 {
        return Err(Error::NotBouquet(lattice.graph().vertex_count()));
    }
    let dist = n_step(lattice, kernel, x, n)?;
    Ok(dist.get(y) * explicit_factor(realization, lambda, f_star, n, x, y))
}

/// CSV with header `n,min_ratio,max_ratio,support_size` and LF endings.
pub fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut out = String::from("n,min_ratio,max_ratio,support_size\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.17e},{:.17e},{}", r.n, r.min_ratio, r.max_ratio, r.support_size);
    }
    out
}
