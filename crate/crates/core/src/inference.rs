//! Closed-form results for the Bellman-Harris model with Poisson contagion:
//! the Borel-Tanner law of the total number of births, the maximum
//! likelihood estimate of the offspring mean, and gamma incubation coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi_square_sf, gamma_p, gamma_q, ln_gamma};

/// Initial count and total births of one extinct outbreak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutbreakSizeRecord {
    pub a: u64,
    pub n: u64,
}

fn check_subcritical(m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain(format!("offspring mean {m} must lie in [0, 1)")));
    }
    Ok(())
}

/// P(N(inf) = k) = a m^k (a+k)^(k-1) e^{-(a+k) m} / k!, evaluated in log space.
pub fn borel_tanner_pmf(a: u64, m: f64, k: u64) -> Result<f64> {
    check_subcritical(m)?;
    if a == 0 {
        return Err(Error::Domain("initial count must be >= 1".into()));
    }
    if m == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let (af, kf) = (a as f64, k as f64);
    let log_p = af.ln() + kf * m.ln() + (kf - 1.0) * (af + kf).ln() - (af + kf) * m - ln_gamma(kf + 1.0);
    Ok(log_p.exp())
}

/// Mean of the Borel-Tanner law, a m / (1 - m).
pub fn borel_tanner_mean(a: u64, m: f64) -> Result<f64> {
    check_subcritical(m)?;
    Ok(a as f64 * m / (1.0 - m))
}

/// Rows `(k, pmf, cumulative)` until the cumulative mass reaches `mass`.
pub fn borel_tanner_table(a: u64, m: f64, mass: f64) -> Result<Vec<(u64, f64, f64)>> {
    let mut rows = Vec::new();
    let mut cum = 0.0;
    let mut k = 0;
    // the tail decays geometrically for m < 1; the cap only guards m -> 1
    while cum < mass && k < 10_000_000 {
        let p = borel_tanner_pmf(a, m, k)?;
        cum += p;
        rows.push((k, p, cum));
        k += 1;
    }
    Ok(rows)
}

/// m_hat = sum(n) / sum(a + n).
pub fn mle_offspring_mean(records: &[OutbreakSizeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no outbreak size records".into()));
    }
    let births: u64 = records.iter().map(|r| r.n).sum();
    let total: u64 = records.iter().map(|r| r.a + r.n).sum();
    if total == 0 {
        return Err(Error::Domain("sum of a + n is zero".into()));
    }
    Ok(births as f64 / total as f64)
}

/// Mean number of births in an outbreak started by one case, m / (1 - m).
pub fn mean_outbreak_size(m: f64) -> Result<f64> {
    check_subcritical(m)?;
    Ok(m / (1.0 - m))
}

/// P(lo <= I <= hi) for I ~ gamma(shape `r`, mean `mean`).
pub fn gamma_coverage(mean: f64, r: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(mean > 0.0 && r > 0.0 && mean.is_finite() && r.is_finite()) {
        return Err(Error::Domain(format!("gamma mean {mean} and shape {r} must be > 0")));
    }
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Domain(format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let rate = r / mean;
    let (xl, xh) = (lo * rate, hi * rate);
    // subtract on whichever side keeps the small tails accurate
    let p = if xl >= r { gamma_q(r, xl) - gamma_q(r, xh) } else { gamma_p(r, xh) - gamma_p(r, xl) };
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Number of cells after tail grouping.
    pub cells: usize,
}

/// Pearson goodness of fit of observed category counts against
/// probabilities `expected` (same length; the last cell should carry the
/// remaining tail mass). Adjacent tail cells are merged from the right until
/// each expected count reaches `min_expected`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], min_expected: f64, fitted_params: usize) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Domain("observed and expected need equal, nonzero lengths".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("no observations".into()));
    }
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = observed.iter().zip(expected).map(|(&o, &p)| (o as f64, p * nf)).collect();
    while cells.len() > 1 && cells.last().is_some_and(|c| c.1 < min_expected) {
        let (o, e) = cells.pop().unwrap();
        let last = cells.last_mut().unwrap();
        last.0 += o;
        last.1 += e;
    }
    if cells.len() < 2 + fitted_params {
        return Err(Error::Domain("too few cells for a chi-square test".into()));
    }
    let statistic = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum::<f64>();
    let df = cells.len() - 1 - fitted_params;
    Ok(ChiSquareTest { statistic, df, p_value: chi_square_sf(statistic, df as f64), cells: cells.len() })
}

/// Goodness of fit of observed total-birth counts to Borel-Tanner(a, m).
pub fn borel_tanner_gof(counts: &[u64], a: u64, m: f64) -> Result<ChiSquareTest> {
    let max_k = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max_k as usize + 2];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let mut expected: Vec<f64> = (0..=max_k).map(|k| borel_tanner_pmf(a, m, k)).collect::<Result<_>>()?;
    let head: f64 = expected.iter().sum();
    expected.push((1.0 - head).max(0.0));
    chi_square_gof(&observed, &expected, 5.0, 0)
}
