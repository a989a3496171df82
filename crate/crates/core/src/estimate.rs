//! Coupled Monte-Carlo estimation over families of vaccination functions.
//!
//! A [`CoupledBatch`] fixes `n` unvaccinated trees together with their
//! coupling uniforms. Every vaccination function is pruned against exactly
//! these trees, so per-replicate values are pathwise ordered whenever the
//! vaccination functions are, and so are the empirical CDFs and quantiles.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Functional, TimeUnit};
use crate::reproduction::ReproductionLaw;
use crate::rng::split_seed;
use crate::tree::{simulate_tree, BranchingTree, SimCaps};
use crate::vaccination::{prune, VaccinationFunction};

/// Largest tolerated share of replicates whose value is not identified
/// because the tree hit the birth cap.
pub const MAX_UNRESOLVED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionMeta {
    pub functional: String,
    pub alpha: String,
    pub seed: u64,
    pub law: String,
}

/// Sorted Monte-Carlo sample of a functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    pub meta: DistributionMeta,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>, meta: DistributionMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("empirical distribution needs at least one sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Domain("NaN sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { samples, meta })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, DistributionMeta::default())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.len() as f64
    }

    /// `inf { x : cdf(x) >= p }`, an order statistic with no interpolation.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile order {p} not in (0, 1)")));
        }
        let n = self.len();
        let nf = n as f64;
        let mut k = ((p * nf).ceil() as usize).clamp(1, n);
        while k > 1 && (k - 1) as f64 / nf >= p {
            k -= 1;
        }
        while k < n && (k as f64) / nf < p {
            k += 1;
        }
        Ok(self.samples[k - 1])
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Normal-approximation standard error of the mean.
    pub fn se_mean(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    /// Mean of the maximum of `z` independent draws from this distribution.
    ///
    /// With sorted samples x_(1..n) this is sum_k x_(k) [(k/n)^z - ((k-1)/n)^z].
    pub fn mean_max_of(&self, z: u32) -> f64 {
        let nf = self.len() as f64;
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (k, x) in self.samples.iter().enumerate() {
            let cur = ((k + 1) as f64 / nf).powi(z as i32);
            let w = cur - prev;
            if w > 0.0 {
                acc += x * w;
            }
            prev = cur;
        }
        acc
    }
}

/// Dvoretzky-Kiefer-Wolfowitz half-width for a uniform CDF band at level
/// `1 - delta`.
pub fn dkw_half_width(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Empirical continuity modulus of a count distribution: the `delta`
/// solving `phi(1 - delta) = 1 - eps` for the empirical probability
/// generating function `phi`. Returns 1 when `phi(0) >= 1 - eps`.
pub fn continuity_modulus(counts: &EmpiricalDistribution, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} not in (0, 1)")));
    }
    if counts.samples().iter().any(|&c| c < 0.0 || c.fract() != 0.0 || !c.is_finite()) {
        return Err(Error::Domain("continuity modulus needs nonnegative integer counts".into()));
    }
    // (count, frequency) pairs
    let mut groups: Vec<(i32, f64)> = Vec::new();
    for &c in counts.samples() {
        let c = c as i32;
        match groups.last_mut() {
            Some((k, w)) if *k == c => *w += 1.0,
            _ => groups.push((c, 1.0)),
        }
    }
    let n = counts.len() as f64;
    let pgf = |s: f64| groups.iter().map(|&(k, w)| w * s.powi(k)).sum::<f64>() / n;
    let target = 1.0 - eps;
    if pgf(0.0) >= target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if pgf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 - 0.5 * (lo + hi))
}

/// Per-replicate values of one functional under several vaccination
/// functions, all computed on the same trees.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSamples {
    /// `values[j][i]`: replicate `i` under vaccination function `j`.
    pub values: Vec<Vec<f64>>,
    /// Replicates whose value was not identified (reported as +inf).
    pub unresolved: usize,
}

/// A fixed set of `n` unvaccinated realizations and their coupling uniforms.
///
/// Trees are either kept in memory or regenerated from their replicate
/// seeds on every use; both paths yield identical trees.
pub struct CoupledBatch {
    law: ReproductionLaw,
    initials: usize,
    caps: SimCaps,
    n: usize,
    master_seed: u64,
    cache: Option<Vec<BranchingTree>>,
    pool: Option<Arc<ThreadPool>>,
}

impl CoupledBatch {
    /// A batch that regenerates trees on demand.
    pub fn new(law: ReproductionLaw, initials: usize, caps: SimCaps, n: usize, master_seed: u64) -> Result<Self> {
        law.validate()?;
        caps.validate()?;
        if n == 0 {
            return Err(Error::Domain("replicate count must be >= 1".into()));
        }
        if initials == 0 {
            return Err(Error::Domain("at least one initial individual is required".into()));
        }
        Ok(CoupledBatch { law, initials, caps, n, master_seed, cache: None, pool: None })
    }

    /// Runs all replicate work on a dedicated pool of `threads` workers.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    /// Materializes every tree in memory.
    pub fn cached(mut self) -> Result<Self> {
        if self.cache.is_none() {
            let trees = self.run(|| (0..self.n).into_par_iter().map(|i| self.simulate(i)).collect::<Result<Vec<_>>>())?;
            self.cache = Some(trees);
        }
        Ok(self)
    }

    fn run<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match &self.pool {
            Some(pool) => pool.install(job),
            None => job(),
        }
    }

    fn simulate(&self, i: usize) -> Result<BranchingTree> {
        simulate_tree(&self.law, self.initials, self.caps, self.replicate_seed(i))
    }

    pub fn replicate_seed(&self, i: usize) -> u64 {
        split_seed(self.master_seed, i as u64)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn initials(&self) -> usize {
        self.initials
    }

    pub fn law(&self) -> &ReproductionLaw {
        &self.law
    }

    pub fn caps(&self) -> SimCaps {
        self.caps
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    /// Tree of replicate `i`.
    pub fn tree(&self, i: usize) -> Result<std::borrow::Cow<'_, BranchingTree>> {
        match &self.cache {
            Some(trees) => Ok(std::borrow::Cow::Borrowed(&trees[i])),
            None => self.simulate(i).map(std::borrow::Cow::Owned),
        }
    }

    /// Applies `f` to every tree; results are in replicate order.
    pub fn map_trees<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &BranchingTree) -> Result<T> + Sync + Send,
    {
        self.run(|| {
            (0..self.n)
                .into_par_iter()
                .map(|i| {
                    let tree = self.tree(i)?;
                    f(i, &tree)
                })
                .collect()
        })
    }

    /// Evaluates `functional` on every replicate under every vaccination
    /// function. Values not identified because of censoring are +inf; more
    /// than 1% of such replicates is an error.
    pub fn evaluate(&self, functional: Functional, unit: TimeUnit, alphas: &[VaccinationFunction]) -> Result<CoupledSamples> {
        for alpha in alphas {
            alpha.validate()?;
        }
        let rows: Vec<(Vec<f64>, bool)> = self.map_trees(|_, tree| {
            let mut unresolved = false;
            let mut row = Vec::with_capacity(alphas.len());
            for alpha in alphas {
                let mask = prune(tree, alpha);
                let value = match functional.evaluate(tree, &mask) {
                    Ok(v) if functional.is_time() => unit.convert(v),
                    Ok(v) => v,
                    Err(Error::CensoredTree { .. }) => {
                        unresolved = true;
                        f64::INFINITY
                    }
                    Err(e) => return Err(e),
                };
                row.push(value);
            }
            Ok((row, unresolved))
        })?;
        let unresolved = rows.iter().filter(|r| r.1).count();
        if unresolved as f64 > MAX_UNRESOLVED_FRACTION * self.n as f64 {
            return Err(Error::ExplosionRate { unresolved, n: self.n });
        }
        let mut values = vec![Vec::with_capacity(self.n); alphas.len()];
        for (row, _) in rows {
            for (j, v) in row.into_iter().enumerate() {
                values[j].push(v);
            }
        }
        Ok(CoupledSamples { values, unresolved })
    }

    /// One empirical distribution per vaccination function.
    pub fn distributions(
        &self,
        functional: Functional,
        unit: TimeUnit,
        alphas: &[VaccinationFunction],
    ) -> Result<Vec<EmpiricalDistribution>> {
        let samples = self.evaluate(functional, unit, alphas)?;
        let law = serde_json::to_string(&self.law).unwrap_or_default();
        samples
            .values
            .into_iter()
            .zip(alphas)
            .map(|(values, alpha)| {
                let meta = DistributionMeta {
                    functional: functional.to_string(),
                    alpha: alpha.describe(),
                    seed: self.master_seed,
                    law: law.clone(),
                };
                EmpiricalDistribution::new(values, meta)
            })
            .collect()
    }
}

/// Simulates `n` coupled replicates and returns, for each vaccination
/// function, the empirical distribution of `functional` (days for durations).
pub fn run_coupled(
    law: &ReproductionLaw,
    initials: usize,
    caps: SimCaps,
    functional: Functional,
    alphas: &[VaccinationFunction],
    n: usize,
    master_seed: u64,
) -> Result<Vec<EmpiricalDistribution>> {
    CoupledBatch::new(law.clone(), initials, caps, n, master_seed)?
        .cached()?
        .distributions(functional, TimeUnit::Days, alphas)
}
