//! Optimal vaccination policies within a totally ordered family.
//!
//! The family is indexed by a real number (constant coverage `c`, or ramp
//! duration `tv` for fixed start and rate). On one coupled batch the target
//! statistic is a nonincreasing step function of the index, so the smallest
//! feasible grid index can be found by bisection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{CoupledBatch, EmpiricalDistribution};
use crate::functionals::{Functional, TimeUnit};
use crate::inference::gamma_coverage;
use crate::reproduction::{critical_coverage, LifetimeLaw, ReproductionLaw};
use crate::tree::SimCaps;
use crate::vaccination::VaccinationFunction;

/// Default grid step for the policy index.
pub const DEFAULT_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyFamily {
    /// `step(c, 0)` for `c` in [0, 1].
    Constant,
    /// `ramp(M, tv, p0)` for `tv` in [c_inf / p0, 1 / p0].
    Ramp {
        #[serde(rename = "M")]
        start: f64,
        p0: f64,
    },
}

impl PolicyFamily {
    pub fn alpha(&self, index: f64) -> VaccinationFunction {
        match *self {
            PolicyFamily::Constant => VaccinationFunction::Step { c: index, t0: 0.0 },
            PolicyFamily::Ramp { start, p0 } => VaccinationFunction::Ramp { start, tv: index, p0 },
        }
    }

    /// Closed index interval of the family.
    pub fn index_range(&self, law: &ReproductionLaw) -> Result<(f64, f64)> {
        match *self {
            PolicyFamily::Constant => Ok((0.0, 1.0)),
            PolicyFamily::Ramp { start, p0 } => {
                if !(p0 > 0.0 && p0 <= 1.0) || !(start >= 0.0 && start.is_finite()) {
                    return Err(Error::InvalidAlpha(format!("ramp family needs M >= 0 and 0 < p0 <= 1, got M={start} p0={p0}")));
                }
                Ok((critical_coverage(law) / p0, 1.0 / p0))
            }
        }
    }

    /// `lo, lo + res, ..., hi`, always including both ends.
    pub fn index_grid(&self, law: &ReproductionLaw, resolution: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.index_range(law)?;
        index_grid(lo, hi, resolution)
    }
}

fn index_grid(lo: f64, hi: f64, resolution: f64) -> Result<Vec<f64>> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Domain(format!("resolution must be > 0, got {resolution}")));
    }
    let steps_per_unit = 1.0 / resolution;
    let exact = (steps_per_unit - steps_per_unit.round()).abs() < 1e-9;
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        // k / N is correctly rounded where k * res is not (0.07 vs 7 * 0.01)
        let x = if exact { lo + k as f64 / steps_per_unit.round() } else { lo + k as f64 * resolution };
        if x >= hi - 1e-12 {
            break;
        }
        grid.push(x);
        k += 1;
    }
    grid.push(hi);
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyTarget {
    /// Quantile of order `p` (for `z` initials) at most `bound`.
    Quantile { p: f64, bound: f64 },
    /// Mean (for `z` initials) at most `bound`.
    Mean { bound: f64 },
}

impl PolicyTarget {
    pub fn bound(&self) -> f64 {
        match *self {
            PolicyTarget::Quantile { bound, .. } | PolicyTarget::Mean { bound } => bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyQuery {
    pub family: PolicyFamily,
    pub target: PolicyTarget,
    pub functional: Functional,
    /// Bound on the number of initial infectives.
    pub z: u32,
    pub unit: TimeUnit,
}

impl PolicyQuery {
    pub fn validate(&self) -> Result<()> {
        if self.z == 0 {
            return Err(Error::Domain("z must be >= 1".into()));
        }
        match self.target {
            PolicyTarget::Quantile { p, bound } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Domain(format!("target order p = {p} not in (0, 1)")));
                }
                if bound.is_nan() {
                    return Err(Error::Domain("bound is NaN".into()));
                }
            }
            PolicyTarget::Mean { bound } => {
                if bound.is_nan() {
                    return Err(Error::Domain("bound is NaN".into()));
                }
            }
        }
        Ok(())
    }

    /// The target statistic from single-initial samples: the quantile of
    /// order p^(1/z), or the mean of the maximum of z copies.
    pub fn statistic(&self, dist: &EmpiricalDistribution) -> Result<f64> {
        match self.target {
            PolicyTarget::Quantile { p, .. } => dist.quantile(p.powf(1.0 / self.z as f64)),
            PolicyTarget::Mean { .. } => Ok(dist.mean_max_of(self.z)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub feasible: bool,
    /// Smallest grid index meeting the bound; `None` if infeasible.
    pub optimal_index: Option<f64>,
    pub achieved_value: Option<f64>,
    pub bound: f64,
    /// `(index, statistic)` for every grid point evaluated, by index.
    pub grid: Vec<(f64, f64)>,
}

/// Lazily evaluated target statistic on a coupled batch.
struct Curve<'a> {
    query: &'a PolicyQuery,
    batch: &'a CoupledBatch,
    values: BTreeMap<usize, f64>,
    grid: &'a [f64],
}

impl Curve<'_> {
    fn at(&mut self, k: usize) -> Result<f64> {
        if let Some(v) = self.values.get(&k) {
            return Ok(*v);
        }
        let alpha = self.query.family.alpha(self.grid[k]);
        let dist = self.batch.distributions(self.query.functional, self.query.unit, &[alpha])?.remove(0);
        let v = self.query.statistic(&dist)?;
        self.values.insert(k, v);
        Ok(v)
    }

    fn evaluated(&self) -> Vec<(f64, f64)> {
        self.values.iter().map(|(&k, &v)| (self.grid[k], v)).collect()
    }
}

fn check_batch(query: &PolicyQuery, batch: &CoupledBatch) -> Result<()> {
    query.validate()?;
    if query.z > 1 && batch.initials() != 1 {
        return Err(Error::Domain("z > 1 is handled through single-initial samples; use initials = 1".into()));
    }
    Ok(())
}

/// Smallest index on the family grid whose target statistic meets the bound.
pub fn optimal_policy(query: &PolicyQuery, batch: &CoupledBatch, resolution: f64) -> Result<PolicyResult> {
    check_batch(query, batch)?;
    let grid = query.family.index_grid(batch.law(), resolution)?;
    optimal_on_grid(query, batch, &grid)
}

/// Bisection over an explicit increasing grid.
pub fn optimal_on_grid(query: &PolicyQuery, batch: &CoupledBatch, grid: &[f64]) -> Result<PolicyResult> {
    check_batch(query, batch)?;
    check_grid(grid)?;
    let bound = query.target.bound();
    let mut curve = Curve { query, batch, values: BTreeMap::new(), grid };
    let last = grid.len() - 1;

    if curve.at(last)? > bound {
        for k in 0..last {
            curve.at(k)?;
        }
        return Ok(PolicyResult { feasible: false, optimal_index: None, achieved_value: None, bound, grid: curve.evaluated() });
    }
    // invariant: value(hi) <= bound, and value(lo) > bound unless lo == 0
    let (mut lo, mut hi) = (0usize, last);
    if curve.at(0)? <= bound {
        hi = 0;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if curve.at(mid)? <= bound {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let achieved = curve.at(hi)?;
    Ok(PolicyResult {
        feasible: true,
        optimal_index: Some(grid[hi]),
        achieved_value: Some(achieved),
        bound,
        grid: curve.evaluated(),
    })
}

/// Exhaustive scan: the first grid index meeting the bound.
pub fn optimal_by_scan(query: &PolicyQuery, batch: &CoupledBatch, grid: &[f64]) -> Result<Option<f64>> {
    let curve = quantile_curve(query, batch, grid)?;
    Ok(curve.into_iter().find(|&(_, v)| v <= query.target.bound()).map(|(x, _)| x))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("policy grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("policy grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Target statistic at every grid index, evaluated on the same batch.
pub fn quantile_curve(query: &PolicyQuery, batch: &CoupledBatch, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_batch(query, batch)?;
    check_grid(grid)?;
    let alphas: Vec<VaccinationFunction> = grid.iter().map(|&x| query.family.alpha(x)).collect();
    let dists = batch.distributions(query.functional, query.unit, &alphas)?;
    grid.iter()
        .zip(&dists)
        .map(|(&x, d)| Ok((x, query.statistic(d)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub mean: f64,
    pub shape: f64,
    /// P(lo <= I <= hi) for the incubation law of this cell.
    pub coverage: f64,
    pub optimal_index: Option<f64>,
    pub achieved_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpec {
    pub means: Vec<f64>,
    pub shapes: Vec<f64>,
    /// Window whose gamma probability is reported as coverage.
    pub window: (f64, f64),
    pub initials: usize,
    pub caps: SimCaps,
    pub n: usize,
    pub master_seed: u64,
    pub resolution: f64,
    pub threads: Option<usize>,
}

/// Optimal index for every (mean, shape) gamma incubation law, keeping the
/// offspring law and placement of `base`. Every cell uses the same master
/// seed; rows come out mean-major in grid order.
pub fn sensitivity_grid(base: &ReproductionLaw, query: &PolicyQuery, spec: &SensitivitySpec) -> Result<Vec<SensitivityRow>> {
    if spec.means.is_empty() || spec.shapes.is_empty() {
        return Err(Error::EmptyInput("sensitivity grid needs means and shapes".into()));
    }
    let mut rows = Vec::with_capacity(spec.means.len() * spec.shapes.len());
    for &mean in &spec.means {
        for &shape in &spec.shapes {
            let law = ReproductionLaw { lifetime: LifetimeLaw::Gamma { shape, mean }, ..base.clone() };
            let coverage = gamma_coverage(mean, shape, spec.window.0, spec.window.1)?;
            let mut batch = CoupledBatch::new(law, spec.initials, spec.caps, spec.n, spec.master_seed)?;
            if let Some(threads) = spec.threads {
                batch = batch.with_threads(threads)?;
            }
            let batch = batch.cached()?;
            let result = optimal_policy(query, &batch, spec.resolution)?;
            rows.push(SensitivityRow {
                mean,
                shape,
                coverage,
                optimal_index: result.optimal_index,
                achieved_value: result.achieved_value,
            });
        }
    }
    Ok(rows)
}
