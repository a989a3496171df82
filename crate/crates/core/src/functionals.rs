//! Functionals of the (pruned) process that cannot increase under pruning.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tree::BranchingTree;
use crate::vaccination::PruneMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// T: time at which the last surviving individual dies.
    ExtinctionTime,
    /// T minus the lifetime of the single initial individual.
    DurationExclIncubation,
    /// M: largest number of simultaneously alive individuals.
    MaxPopulation,
    /// N(t): surviving births in (0, t].
    BirthsBy(f64),
    /// N(inf): all surviving births.
    TotalBirths,
}

impl Functional {
    /// Whether the value depends on the whole trajectory rather than on the
    /// process restricted to a bounded window.
    pub fn is_all_time(&self) -> bool {
        !matches!(self, Functional::BirthsBy(_))
    }

    /// Whether the value is a duration (and so can be reported in weeks).
    pub fn is_time(&self) -> bool {
        matches!(self, Functional::ExtinctionTime | Functional::DurationExclIncubation)
    }

    pub fn evaluate(&self, tree: &BranchingTree, mask: &PruneMask) -> Result<f64> {
        match *self {
            Functional::ExtinctionTime => extinction_time(tree, mask),
            Functional::DurationExclIncubation => duration_excl_incubation(tree, mask),
            Functional::MaxPopulation => max_population(tree, mask).map(|m| m as f64),
            Functional::BirthsBy(t) => births_by(tree, mask, t).map(|n| n as f64),
            Functional::TotalBirths => total_births(tree, mask).map(|n| n as f64),
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::ExtinctionTime => write!(f, "T"),
            Functional::DurationExclIncubation => write!(f, "Ttilde"),
            Functional::MaxPopulation => write!(f, "M"),
            Functional::BirthsBy(t) => write!(f, "Nt:{t}"),
            Functional::TotalBirths => write!(f, "Ninf"),
        }
    }
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T" => Ok(Functional::ExtinctionTime),
            "Ttilde" => Ok(Functional::DurationExclIncubation),
            "M" => Ok(Functional::MaxPopulation),
            "Ninf" => Ok(Functional::TotalBirths),
            other => {
                let t = other
                    .strip_prefix("Nt:")
                    .and_then(|t| t.trim().parse::<f64>().ok())
                    .filter(|t| *t >= 0.0 && t.is_finite())
                    .ok_or_else(|| Error::UnknownFunctional(other.to_string()))?;
                Ok(Functional::BirthsBy(t))
            }
        }
    }
}

impl Serialize for Functional {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Functional {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Unit in which time-valued functionals are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Days,
    /// days / 7, unrounded.
    Weeks,
    /// ceil(days / 7).
    WholeWeeks,
}

impl TimeUnit {
    pub fn convert(&self, days: f64) -> f64 {
        match self {
            TimeUnit::Days => days,
            TimeUnit::Weeks => days / 7.0,
            TimeUnit::WholeWeeks => to_weeks(days) as f64,
        }
    }
}

fn require_uncensored(tree: &BranchingTree, name: &str) -> Result<()> {
    match tree.censor_time() {
        Some(censor_time) => Err(Error::CensoredTree { functional: name.into(), censor_time }),
        None => Ok(()),
    }
}

fn survivors<'a>(tree: &'a BranchingTree, mask: &'a PruneMask) -> impl Iterator<Item = &'a crate::tree::Individual> {
    tree.individuals().iter().filter(move |ind| mask.survives(ind.id))
}

pub fn extinction_time(tree: &BranchingTree, mask: &PruneMask) -> Result<f64> {
    require_uncensored(tree, "T")?;
    Ok(survivors(tree, mask).map(|ind| ind.death_time).fold(0.0, f64::max))
}

pub fn duration_excl_incubation(tree: &BranchingTree, mask: &PruneMask) -> Result<f64> {
    if tree.initials() != 1 {
        return Err(Error::MultipleInitials("Ttilde".into()));
    }
    require_uncensored(tree, "Ttilde")?;
    let initial = &tree.individuals()[0];
    let t = extinction_time(tree, mask)?;
    Ok((t - initial.death_time).max(0.0))
}

/// Alive intervals are half-open, `[birth, death)`.
pub fn max_population(tree: &BranchingTree, mask: &PruneMask) -> Result<usize> {
    require_uncensored(tree, "M")?;
    let mut events: Vec<(f64, i8)> = survivors(tree, mask)
        .flat_map(|ind| [(ind.birth_time, 1i8), (ind.death_time, -1i8)])
        .collect();
    // deaths before births at equal times
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut alive = 0i64;
    let mut best = 0i64;
    for (_, delta) in events {
        alive += delta as i64;
        best = best.max(alive);
    }
    Ok(best as usize)
}

/// Surviving births in (0, t]. Allowed on censored trees while every birth up
/// to `t` is known to be present.
pub fn births_by(tree: &BranchingTree, mask: &PruneMask, t: f64) -> Result<usize> {
    let horizon = tree.caps().horizon;
    if t > horizon {
        return Err(Error::BeyondHorizon { t, horizon });
    }
    if let Some(censor_time) = tree.censor_time() {
        if t >= censor_time {
            return Err(Error::CensoredTree { functional: format!("Nt:{t}"), censor_time });
        }
    }
    Ok(survivors(tree, mask)
        .filter(|ind| ind.parent.is_some() && ind.birth_time > 0.0 && ind.birth_time <= t)
        .count())
}

pub fn total_births(tree: &BranchingTree, mask: &PruneMask) -> Result<usize> {
    require_uncensored(tree, "Ninf")?;
    Ok(mask.surviving_count() - tree.initials())
}

/// Duration in whole weeks, rounded up.
pub fn to_weeks(days: f64) -> u64 {
    (days / 7.0).ceil().max(0.0) as u64
}

/// One realization of the maximum of `z` independent copies, resampled from
/// single-initial `samples`.
pub fn max_of_z<R: Rng + ?Sized>(samples: &[f64], z: usize, rng: &mut R) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("max_of_z needs samples".into()));
    }
    if z == 0 {
        return Err(Error::Domain("z must be >= 1".into()));
    }
    Ok((0..z).map(|_| samples[rng.random_range(0..samples.len())]).fold(f64::NEG_INFINITY, f64::max))
}
